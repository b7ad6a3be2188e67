//! Tariffs, subscribers, and prepaid accounts with an append-only ledger.

use std::fmt;

use thiserror::Error;

use crate::money::Money;
use crate::SimTime;

pub const DEFAULT_INCREMENT_SECONDS: u64 = 60;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TariffError {
    #[error("voice rate must be non-negative, got {0}")]
    NegativeVoiceRate(Money),
    #[error("data rate must be non-negative, got {0}")]
    NegativeDataRate(Money),
    #[error("billing increment must be at least 1 second")]
    ZeroIncrement,
}

/// Flat prepaid tariff: a price per started billing increment and a price per kilobyte.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TariffPlan {
    plan_id: String,
    voice_rate: Money,
    increment_seconds: u64,
    data_rate: Money,
}

impl TariffPlan {
    pub fn new(
        plan_id: impl Into<String>,
        voice_rate: Money,
        increment_seconds: u64,
        data_rate: Money,
    ) -> Result<Self, TariffError> {
        if voice_rate.is_negative() {
            return Err(TariffError::NegativeVoiceRate(voice_rate));
        }
        if data_rate.is_negative() {
            return Err(TariffError::NegativeDataRate(data_rate));
        }
        if increment_seconds == 0 {
            return Err(TariffError::ZeroIncrement);
        }
        Ok(Self {
            plan_id: plan_id.into(),
            voice_rate,
            increment_seconds,
            data_rate,
        })
    }

    /// Per-minute voice tariff with no data charge.
    pub fn per_minute(plan_id: impl Into<String>, voice_rate: i64) -> Result<Self, TariffError> {
        Self::new(
            plan_id,
            Money::from_minor(voice_rate),
            DEFAULT_INCREMENT_SECONDS,
            Money::ZERO,
        )
    }

    pub fn plan_id(&self) -> &str {
        &self.plan_id
    }

    pub fn voice_rate(&self) -> Money {
        self.voice_rate
    }

    pub fn increment_seconds(&self) -> u64 {
        self.increment_seconds
    }

    pub fn data_rate(&self) -> Money {
        self.data_rate
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubscriberRecord {
    pub msisdn: String,
    pub imsi: String,
    /// Government ID number captured at SIM purchase, if any.
    pub id_number: Option<String>,
    pub id_verified: bool,
}

impl SubscriberRecord {
    /// A subscriber whose ID was captured and checked at registration.
    pub fn with_id(msisdn: &str, imsi: &str, id_number: &str) -> Self {
        Self {
            msisdn: msisdn.to_owned(),
            imsi: imsi.to_owned(),
            id_number: Some(id_number.to_owned()),
            id_verified: true,
        }
    }

    /// An anonymous subscriber (no ID on file).
    pub fn anonymous(msisdn: &str, imsi: &str) -> Self {
        Self {
            msisdn: msisdn.to_owned(),
            imsi: imsi.to_owned(),
            id_number: None,
            id_verified: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum AccountStatus {
    Active,
    Suspended,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum LedgerKind {
    Charge,
    TopUp,
    TransferIn,
    TransferOut,
}

impl LedgerKind {
    pub fn is_credit(self) -> bool {
        matches!(self, LedgerKind::TopUp | LedgerKind::TransferIn)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            LedgerKind::Charge => "Charge",
            LedgerKind::TopUp => "TopUp",
            LedgerKind::TransferIn => "TransferIn",
            LedgerKind::TransferOut => "TransferOut",
        }
    }
}

impl fmt::Display for LedgerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One posting. `amount` is signed: debits are negative, credits positive.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LedgerEntry {
    pub seq: u64,
    pub sim_time: SimTime,
    pub kind: LedgerKind,
    pub amount: Money,
    pub balance_after: Money,
    pub reference: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AccountError {
    #[error("insufficient balance: requested {requested}, available {available}")]
    InsufficientBalance { requested: Money, available: Money },
    #[error("amount must not be negative, got {0}")]
    NegativeAmount(Money),
    #[error("amount must be positive, got {0}")]
    NonPositiveAmount(Money),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PrepaidAccount {
    pub subscriber: SubscriberRecord,
    pub tariff_id: String,
    initial_balance: Money,
    balance: Money,
    status: AccountStatus,
    ledger: Vec<LedgerEntry>,
}

impl PrepaidAccount {
    /// New accounts start `Active` whatever their opening balance; only postings change status.
    pub fn open(subscriber: SubscriberRecord, initial_balance: Money, tariff_id: &str) -> Self {
        Self {
            subscriber,
            tariff_id: tariff_id.to_owned(),
            initial_balance,
            balance: initial_balance,
            status: AccountStatus::Active,
            ledger: Vec::new(),
        }
    }

    pub fn msisdn(&self) -> &str {
        &self.subscriber.msisdn
    }

    pub fn imsi(&self) -> &str {
        &self.subscriber.imsi
    }

    pub fn balance(&self) -> Money {
        self.balance
    }

    pub fn initial_balance(&self) -> Money {
        self.initial_balance
    }

    pub fn status(&self) -> AccountStatus {
        self.status
    }

    pub fn is_active(&self) -> bool {
        self.status == AccountStatus::Active
    }

    pub fn ledger(&self) -> &[LedgerEntry] {
        &self.ledger
    }

    /// Forces a status, bypassing postings. Used to build fixtures.
    pub fn set_status(&mut self, status: AccountStatus) {
        self.status = status;
    }

    /// Initial balance plus every signed ledger amount.
    pub fn replayed_balance(&self) -> Money {
        self.initial_balance + self.ledger.iter().map(|e| e.amount).sum::<Money>()
    }

    /// Debits a usage charge. Only deferred (hot billing) charging passes
    /// `allow_negative`. An account left at or below zero is suspended.
    pub fn apply_charge(
        &mut self,
        amount: Money,
        reference: &str,
        allow_negative: bool,
        sim_time: SimTime,
    ) -> Result<&LedgerEntry, AccountError> {
        self.debit(
            LedgerKind::Charge,
            amount,
            reference,
            allow_negative,
            sim_time,
        )
    }

    /// Credits a top-up. A balance above zero reactivates the account.
    pub fn apply_credit(
        &mut self,
        amount: Money,
        reference: &str,
        sim_time: SimTime,
    ) -> Result<&LedgerEntry, AccountError> {
        self.credit(LedgerKind::TopUp, amount, reference, sim_time)
    }

    pub(crate) fn debit(
        &mut self,
        kind: LedgerKind,
        amount: Money,
        reference: &str,
        allow_negative: bool,
        sim_time: SimTime,
    ) -> Result<&LedgerEntry, AccountError> {
        if amount.is_negative() {
            return Err(AccountError::NegativeAmount(amount));
        }
        if !allow_negative && amount > self.balance {
            return Err(AccountError::InsufficientBalance {
                requested: amount,
                available: self.balance,
            });
        }
        self.balance -= amount;
        if self.balance <= Money::ZERO {
            self.status = AccountStatus::Suspended;
        }
        Ok(self.post(kind, -amount, reference, sim_time))
    }

    pub(crate) fn credit(
        &mut self,
        kind: LedgerKind,
        amount: Money,
        reference: &str,
        sim_time: SimTime,
    ) -> Result<&LedgerEntry, AccountError> {
        if !amount.is_positive() {
            return Err(AccountError::NonPositiveAmount(amount));
        }
        self.balance += amount;
        if self.balance.is_positive() {
            self.status = AccountStatus::Active;
        }
        Ok(self.post(kind, amount, reference, sim_time))
    }

    fn post(
        &mut self,
        kind: LedgerKind,
        amount: Money,
        reference: &str,
        sim_time: SimTime,
    ) -> &LedgerEntry {
        let seq = self.ledger.last().map_or(1, |e| e.seq + 1);
        self.ledger.push(LedgerEntry {
            seq,
            sim_time,
            kind,
            amount,
            balance_after: self.balance,
            reference: reference.to_owned(),
        });
        self.ledger.last().expect("entry just pushed")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn account(balance: i64) -> PrepaidAccount {
        PrepaidAccount::open(
            SubscriberRecord::with_id("100", "001010000000001", "ID-1"),
            Money::from_minor(balance),
            "flat",
        )
    }

    #[test]
    fn tariff_rejects_bad_parameters() {
        assert_eq!(
            TariffPlan::new("t", Money::from_minor(-1), 60, Money::ZERO),
            Err(TariffError::NegativeVoiceRate(Money::from_minor(-1)))
        );
        assert_eq!(
            TariffPlan::new("t", Money::ZERO, 0, Money::ZERO),
            Err(TariffError::ZeroIncrement)
        );
        assert!(TariffPlan::new("t", Money::ZERO, 1, Money::from_minor(-2)).is_err());
    }

    #[test]
    fn ordinary_debit() {
        let mut acc = account(100);
        acc.apply_charge(Money::from_minor(60), "s1", false, 0)
            .unwrap();
        assert_eq!(acc.balance(), Money::from_minor(40));
        assert_eq!(acc.status(), AccountStatus::Active);
    }

    #[test]
    fn deferred_debit_goes_negative_and_suspends() {
        let mut acc = account(50);
        acc.apply_charge(Money::from_minor(90), "s1", true, 0)
            .unwrap();
        assert_eq!(acc.balance(), Money::from_minor(-40));
        assert_eq!(acc.status(), AccountStatus::Suspended);
    }

    #[test]
    fn guarded_debit_refuses_overdraft() {
        let mut acc = account(50);
        let err = acc
            .apply_charge(Money::from_minor(90), "s1", false, 0)
            .unwrap_err();
        assert!(matches!(err, AccountError::InsufficientBalance { .. }));
        assert_eq!(acc.balance(), Money::from_minor(50));
        assert!(acc.ledger().is_empty());
    }

    #[test]
    fn credit_reactivates() {
        let mut acc = account(50);
        acc.apply_charge(Money::from_minor(90), "s1", true, 0)
            .unwrap();
        acc.apply_credit(Money::from_minor(100), "v1", 5).unwrap();
        assert_eq!(acc.balance(), Money::from_minor(60));
        assert_eq!(acc.status(), AccountStatus::Active);

        let mut empty = account(0);
        empty.set_status(AccountStatus::Suspended);
        empty.apply_credit(Money::from_minor(25), "v2", 0).unwrap();
        assert_eq!(empty.balance(), Money::from_minor(25));
        assert!(empty.is_active());

        let mut small = account(10);
        small.apply_credit(Money::from_minor(5), "v3", 0).unwrap();
        assert_eq!(small.balance(), Money::from_minor(15));
        assert!(small.is_active());
    }

    #[test]
    fn partial_credit_keeps_suspension() {
        let mut acc = account(0);
        acc.apply_charge(Money::from_minor(100), "s1", true, 0)
            .unwrap();
        acc.apply_credit(Money::from_minor(40), "v", 1).unwrap();
        assert_eq!(acc.balance(), Money::from_minor(-60));
        assert_eq!(acc.status(), AccountStatus::Suspended);
    }

    #[test]
    fn exact_debit_to_zero_suspends() {
        let mut acc = account(30);
        acc.apply_charge(Money::from_minor(30), "s1", false, 0)
            .unwrap();
        assert_eq!(acc.balance(), Money::ZERO);
        assert_eq!(acc.status(), AccountStatus::Suspended);
    }

    #[test]
    fn invalid_amounts() {
        let mut acc = account(30);
        assert!(matches!(
            acc.apply_charge(Money::from_minor(-1), "x", true, 0),
            Err(AccountError::NegativeAmount(_))
        ));
        assert!(matches!(
            acc.apply_credit(Money::ZERO, "x", 0),
            Err(AccountError::NonPositiveAmount(_))
        ));
        assert!(acc.ledger().is_empty());
    }

    #[test]
    fn ledger_sequence_is_strictly_increasing() {
        let mut acc = account(100);
        acc.apply_charge(Money::from_minor(10), "a", false, 0)
            .unwrap();
        acc.apply_credit(Money::from_minor(10), "b", 1).unwrap();
        acc.apply_charge(Money::from_minor(0), "c", false, 2)
            .unwrap();
        let seqs: Vec<u64> = acc.ledger().iter().map(|e| e.seq).collect();
        assert_eq!(seqs, vec![1, 2, 3]);
        assert_eq!(acc.replayed_balance(), acc.balance());
    }
}
