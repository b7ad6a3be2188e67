//! Subscriber registry, top-up channels, credit transfer, and the ID gate.
//!
//! With [`CountermeasurePolicy::id_required`] set, every recharge and every
//! transfer must present the ID number registered for the paying
//! subscriber. Matching is exact, case-sensitive text equality. A rejected
//! request changes nothing but the journal.

mod audit;
mod voucher;

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::account::{LedgerKind, PrepaidAccount};
use crate::money::Money;
use crate::SimTime;

pub use audit::{audit_anonymous_activity, voucher_totals, FraudAuditReport};
pub use voucher::{
    parse_voucher_batch, InvalidVoucherCode, Voucher, VoucherBatchError, VoucherCode, VoucherState,
};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct CountermeasurePolicy {
    pub id_required: bool,
}

impl CountermeasurePolicy {
    pub const OFF: Self = Self { id_required: false };
    pub const ON: Self = Self { id_required: true };
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TopUpChannel {
    Voucher,
    CashMachine,
    CardOnFile,
}

impl TopUpChannel {
    pub fn name(self) -> &'static str {
        match self {
            TopUpChannel::Voucher => "voucher",
            TopUpChannel::CashMachine => "cash",
            TopUpChannel::CardOnFile => "card",
        }
    }
}

impl fmt::Display for TopUpChannel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TopUpChannel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "voucher" => Ok(TopUpChannel::Voucher),
            "cash" | "cashmachine" | "atm" => Ok(TopUpChannel::CashMachine),
            "card" | "cardonfile" => Ok(TopUpChannel::CardOnFile),
            _ => Err(format!(
                "unknown top-up channel `{s}` (expected voucher, cash or card)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TopUpRequest {
    pub channel: TopUpChannel,
    pub target_msisdn: String,
    pub voucher_code: Option<String>,
    pub amount: Option<Money>,
    pub presented_id: Option<String>,
}

impl TopUpRequest {
    pub fn voucher(target: &str, code: &str, presented_id: Option<&str>) -> Self {
        Self {
            channel: TopUpChannel::Voucher,
            target_msisdn: target.to_owned(),
            voucher_code: Some(code.to_owned()),
            amount: None,
            presented_id: presented_id.map(str::to_owned),
        }
    }

    pub fn direct(
        channel: TopUpChannel,
        target: &str,
        amount: i64,
        presented_id: Option<&str>,
    ) -> Self {
        Self {
            channel,
            target_msisdn: target.to_owned(),
            voucher_code: None,
            amount: Some(Money::from_minor(amount)),
            presented_id: presented_id.map(str::to_owned),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransferRequest {
    pub from_msisdn: String,
    pub to_msisdn: String,
    pub amount: Money,
    pub presented_id: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TopUpError {
    #[error("unknown voucher")]
    UnknownVoucher,
    #[error("voucher already redeemed")]
    AlreadyRedeemed,
    #[error("voucher is void")]
    VoucherVoid,
    #[error("presented ID does not match the registered ID")]
    IdMismatch,
    #[error("an ID number is required")]
    IdMissing,
    #[error("unknown subscriber {0}")]
    UnknownSubscriber(String),
    #[error("amount must be positive")]
    NonPositiveAmount,
    #[error("insufficient balance")]
    InsufficientBalance,
    #[error("cannot transfer credit to the same subscriber")]
    SelfTransfer,
    #[error("request channel does not match the operation")]
    WrongChannel,
    #[error("voucher top-up without a voucher code")]
    MissingVoucherCode,
    #[error("account has a real-time call in progress")]
    CallInProgress,
}

impl TopUpError {
    pub fn is_id_failure(&self) -> bool {
        matches!(self, TopUpError::IdMismatch | TopUpError::IdMissing)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Operation {
    TopUp(TopUpChannel),
    Transfer { to: String },
}

/// Every top-up or transfer attempt, successful or not.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JournalEntry {
    pub sim_time: SimTime,
    pub operation: Operation,
    /// Top-up target, or transfer sender.
    pub msisdn: String,
    pub amount: Option<Money>,
    pub presented_id: Option<String>,
    /// Presented ID equals the registered ID (independent of policy).
    pub id_matched: bool,
    /// Ledger reference on success.
    pub outcome: Result<String, TopUpError>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RegistryError {
    #[error("duplicate MSISDN {0}")]
    DuplicateMsisdn(String),
    #[error("duplicate IMSI {0}")]
    DuplicateImsi(String),
    #[error("duplicate voucher {0}")]
    DuplicateVoucher(String),
    #[error("face value must be positive")]
    NonPositiveFaceValue,
}

#[derive(Debug, Clone, Default)]
pub struct Registry {
    accounts: Vec<PrepaidAccount>,
    by_msisdn: HashMap<String, usize>,
    by_imsi: HashMap<String, usize>,
    vouchers: BTreeMap<String, Voucher>,
    journal: Vec<JournalEntry>,
    next_reference: u64,
}

impl Registry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, account: PrepaidAccount) -> Result<usize, RegistryError> {
        let msisdn = account.msisdn().to_owned();
        let imsi = account.imsi().to_owned();
        if self.by_msisdn.contains_key(&msisdn) {
            return Err(RegistryError::DuplicateMsisdn(msisdn));
        }
        if self.by_imsi.contains_key(&imsi) {
            return Err(RegistryError::DuplicateImsi(imsi));
        }
        let idx = self.accounts.len();
        self.accounts.push(account);
        self.by_msisdn.insert(msisdn, idx);
        self.by_imsi.insert(imsi, idx);
        Ok(idx)
    }

    pub fn issue_voucher(
        &mut self,
        code: VoucherCode,
        face_value: Money,
    ) -> Result<(), RegistryError> {
        if !face_value.is_positive() {
            return Err(RegistryError::NonPositiveFaceValue);
        }
        if self.vouchers.contains_key(code.as_str()) {
            return Err(RegistryError::DuplicateVoucher(code.to_string()));
        }
        self.vouchers.insert(
            code.as_str().to_owned(),
            Voucher {
                code,
                face_value,
                state: VoucherState::Issued,
            },
        );
        Ok(())
    }

    pub fn void_voucher(&mut self, code: &str) -> bool {
        match self.vouchers.get_mut(code) {
            Some(v) if v.state == VoucherState::Issued => {
                v.state = VoucherState::Void;
                true
            }
            _ => false,
        }
    }

    pub fn accounts(&self) -> &[PrepaidAccount] {
        &self.accounts
    }

    pub fn account(&self, idx: usize) -> &PrepaidAccount {
        &self.accounts[idx]
    }

    pub fn account_mut(&mut self, idx: usize) -> &mut PrepaidAccount {
        &mut self.accounts[idx]
    }

    pub fn find_msisdn(&self, msisdn: &str) -> Option<usize> {
        self.by_msisdn.get(msisdn).copied()
    }

    pub fn find_imsi(&self, imsi: &str) -> Option<usize> {
        self.by_imsi.get(imsi).copied()
    }

    pub fn by_msisdn(&self, msisdn: &str) -> Option<&PrepaidAccount> {
        self.find_msisdn(msisdn).map(|i| &self.accounts[i])
    }

    pub fn voucher(&self, code: &str) -> Option<&Voucher> {
        self.vouchers.get(code)
    }

    pub fn vouchers(&self) -> impl Iterator<Item = &Voucher> {
        self.vouchers.values()
    }

    pub fn journal(&self) -> &[JournalEntry] {
        &self.journal
    }

    /// Records a request refused before it reached the registry (e.g. mid-call).
    pub fn record_rejection(
        &mut self,
        sim_time: SimTime,
        operation: Operation,
        msisdn: &str,
        amount: Option<Money>,
        presented_id: Option<&str>,
        error: TopUpError,
    ) {
        let id_matched = self.id_matches(msisdn, presented_id);
        self.journal.push(JournalEntry {
            sim_time,
            operation,
            msisdn: msisdn.to_owned(),
            amount,
            presented_id: presented_id.map(str::to_owned),
            id_matched,
            outcome: Err(error),
        });
    }

    fn id_matches(&self, msisdn: &str, presented: Option<&str>) -> bool {
        let registered = self
            .by_msisdn(msisdn)
            .and_then(|a| a.subscriber.id_number.as_deref());
        matches!((registered, presented), (Some(r), Some(p)) if r == p)
    }

    fn id_gate(
        &self,
        policy: CountermeasurePolicy,
        msisdn: &str,
        presented: Option<&str>,
    ) -> Result<(), TopUpError> {
        if !policy.id_required {
            return Ok(());
        }
        if presented.is_none() {
            return Err(TopUpError::IdMissing);
        }
        if self.id_matches(msisdn, presented) {
            Ok(())
        } else {
            Err(TopUpError::IdMismatch)
        }
    }

    fn lookup(&self, msisdn: &str) -> Result<usize, TopUpError> {
        self.find_msisdn(msisdn)
            .ok_or_else(|| TopUpError::UnknownSubscriber(msisdn.to_owned()))
    }

    fn new_reference(&mut self, prefix: &str) -> String {
        self.next_reference += 1;
        format!("{prefix}-{:06}", self.next_reference)
    }

    fn journal_outcome<T>(
        &mut self,
        sim_time: SimTime,
        operation: Operation,
        msisdn: &str,
        amount: Option<Money>,
        presented_id: Option<&str>,
        result: Result<(String, T), TopUpError>,
    ) -> Result<T, TopUpError> {
        let id_matched = self.id_matches(msisdn, presented_id);
        let (outcome, value) = match result {
            Ok((reference, value)) => (Ok(reference), Ok(value)),
            Err(e) => (Err(e.clone()), Err(e)),
        };
        self.journal.push(JournalEntry {
            sim_time,
            operation,
            msisdn: msisdn.to_owned(),
            amount,
            presented_id: presented_id.map(str::to_owned),
            id_matched,
            outcome,
        });
        value
    }

    /// Redeems a single-use voucher onto the target account. Returns the new balance.
    pub fn redeem_voucher(
        &mut self,
        request: &TopUpRequest,
        policy: CountermeasurePolicy,
        now: SimTime,
    ) -> Result<Money, TopUpError> {
        let result = self.try_redeem(request, policy, now);
        let face = request
            .voucher_code
            .as_deref()
            .and_then(|c| self.vouchers.get(c))
            .map(|v| v.face_value);
        self.journal_outcome(
            now,
            Operation::TopUp(request.channel),
            &request.target_msisdn,
            face,
            request.presented_id.as_deref(),
            result,
        )
    }

    fn try_redeem(
        &mut self,
        request: &TopUpRequest,
        policy: CountermeasurePolicy,
        now: SimTime,
    ) -> Result<(String, Money), TopUpError> {
        if request.channel != TopUpChannel::Voucher {
            return Err(TopUpError::WrongChannel);
        }
        let code = request
            .voucher_code
            .as_deref()
            .ok_or(TopUpError::MissingVoucherCode)?;
        let idx = self.lookup(&request.target_msisdn)?;
        self.id_gate(
            policy,
            &request.target_msisdn,
            request.presented_id.as_deref(),
        )?;
        let voucher = self.vouchers.get(code).ok_or(TopUpError::UnknownVoucher)?;
        match voucher.state {
            VoucherState::Issued => {}
            VoucherState::Redeemed => return Err(TopUpError::AlreadyRedeemed),
            VoucherState::Void => return Err(TopUpError::VoucherVoid),
        }
        let face = voucher.face_value;
        let balance = self.accounts[idx]
            .apply_credit(face, code, now)
            .expect("face values are positive")
            .balance_after;
        self.vouchers.get_mut(code).expect("checked above").state = VoucherState::Redeemed;
        Ok((code.to_owned(), balance))
    }

    /// Cash-machine or card-on-file recharge. Returns the new balance.
    pub fn topup_direct(
        &mut self,
        request: &TopUpRequest,
        policy: CountermeasurePolicy,
        now: SimTime,
    ) -> Result<Money, TopUpError> {
        let result = self.try_direct(request, policy, now);
        self.journal_outcome(
            now,
            Operation::TopUp(request.channel),
            &request.target_msisdn,
            request.amount,
            request.presented_id.as_deref(),
            result,
        )
    }

    fn try_direct(
        &mut self,
        request: &TopUpRequest,
        policy: CountermeasurePolicy,
        now: SimTime,
    ) -> Result<(String, Money), TopUpError> {
        let prefix = match request.channel {
            TopUpChannel::CashMachine => "CASH",
            TopUpChannel::CardOnFile => "CARD",
            TopUpChannel::Voucher => return Err(TopUpError::WrongChannel),
        };
        let amount = request
            .amount
            .filter(|a| a.is_positive())
            .ok_or(TopUpError::NonPositiveAmount)?;
        let idx = self.lookup(&request.target_msisdn)?;
        self.id_gate(
            policy,
            &request.target_msisdn,
            request.presented_id.as_deref(),
        )?;
        let reference = self.new_reference(prefix);
        let balance = self.accounts[idx]
            .apply_credit(amount, &reference, now)
            .expect("amount checked positive")
            .balance_after;
        Ok((reference, balance))
    }

    /// Dispatches on the request channel.
    pub fn top_up(
        &mut self,
        request: &TopUpRequest,
        policy: CountermeasurePolicy,
        now: SimTime,
    ) -> Result<Money, TopUpError> {
        match request.channel {
            TopUpChannel::Voucher => self.redeem_voucher(request, policy, now),
            _ => self.topup_direct(request, policy, now),
        }
    }

    /// Moves credit between two subscribers atomically. The ID gate checks
    /// the sender. Returns `(sender_balance, receiver_balance)`.
    pub fn transfer_credit(
        &mut self,
        request: &TransferRequest,
        policy: CountermeasurePolicy,
        now: SimTime,
    ) -> Result<(Money, Money), TopUpError> {
        let result = self.try_transfer(request, policy, now);
        self.journal_outcome(
            now,
            Operation::Transfer {
                to: request.to_msisdn.clone(),
            },
            &request.from_msisdn,
            Some(request.amount),
            request.presented_id.as_deref(),
            result,
        )
    }

    fn try_transfer(
        &mut self,
        request: &TransferRequest,
        policy: CountermeasurePolicy,
        now: SimTime,
    ) -> Result<(String, (Money, Money)), TopUpError> {
        if !request.amount.is_positive() {
            return Err(TopUpError::NonPositiveAmount);
        }
        if request.from_msisdn == request.to_msisdn {
            return Err(TopUpError::SelfTransfer);
        }
        let from = self.lookup(&request.from_msisdn)?;
        let to = self.lookup(&request.to_msisdn)?;
        self.id_gate(
            policy,
            &request.from_msisdn,
            request.presented_id.as_deref(),
        )?;
        if self.accounts[from].balance() < request.amount {
            return Err(TopUpError::InsufficientBalance);
        }
        let reference = self.new_reference("XFER");
        let sender = self.accounts[from]
            .debit(
                LedgerKind::TransferOut,
                request.amount,
                &reference,
                false,
                now,
            )
            .expect("balance checked")
            .balance_after;
        let receiver = self.accounts[to]
            .credit(LedgerKind::TransferIn, request.amount, &reference, now)
            .expect("amount checked positive")
            .balance_after;
        Ok((reference, (sender, receiver)))
    }
}
