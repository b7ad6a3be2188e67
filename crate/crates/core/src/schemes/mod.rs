//! The four prepaid charging architectures as message-emitting state transitions.
//!
//! Each operation advances one [`CallSession`] and records the protocol
//! messages it exchanges in a [`NetworkFabric`] outbox. Timers (countdown,
//! hangup, SIM ticks, CDR latency) are owned by the caller's event loop.

mod handset;
mod hot_billing;
mod intelligent_network;
mod service_node;

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::account::{PrepaidAccount, TariffPlan};
use crate::cdr::CallDetailRecord;
use crate::engine::{ChannelHandle, ChannelKind, ChannelPool};
use crate::money::Money;
use crate::rating::max_chargeable_duration;
use crate::SimTime;

pub use handset::{
    handset_connect, handset_release, handset_tick_decrement, MobileStationState, TickOutcome,
};
pub use hot_billing::{hot_billing_connect, hot_billing_post_charge, hot_billing_release};
pub use intelligent_network::{
    in_authorize_and_connect, in_low_balance_notice, in_release_and_charge,
};
pub use service_node::{service_node_connect, service_node_release_and_charge};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum SchemeKind {
    IntelligentNetwork,
    ServiceNode,
    HotBilling,
    Handset,
}

impl SchemeKind {
    pub const ALL: [SchemeKind; 4] = [
        SchemeKind::IntelligentNetwork,
        SchemeKind::ServiceNode,
        SchemeKind::HotBilling,
        SchemeKind::Handset,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SchemeKind::IntelligentNetwork => "IntelligentNetwork",
            SchemeKind::ServiceNode => "ServiceNode",
            SchemeKind::HotBilling => "HotBilling",
            SchemeKind::Handset => "Handset",
        }
    }

    pub fn short_code(self) -> &'static str {
        match self {
            SchemeKind::IntelligentNetwork => "IN",
            SchemeKind::ServiceNode => "SN",
            SchemeKind::HotBilling => "HB",
            SchemeKind::Handset => "HS",
        }
    }

    /// Charged before or during the call, never after.
    pub fn is_real_time(self) -> bool {
        !matches!(self, SchemeKind::HotBilling)
    }
}

impl fmt::Display for SchemeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown charging scheme `{0}` (expected IN, SN, HB or HS)")]
pub struct UnknownScheme(pub String);

impl FromStr for SchemeKind {
    type Err = UnknownScheme;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let lower = s.to_ascii_lowercase();
        let kind = match lower.as_str() {
            "in" | "intelligentnetwork" | "intelligent-network" => SchemeKind::IntelligentNetwork,
            "sn" | "servicenode" | "service-node" => SchemeKind::ServiceNode,
            "hb" | "hotbilling" | "hot-billing" => SchemeKind::HotBilling,
            "hs" | "handset" => SchemeKind::Handset,
            _ => return Err(UnknownScheme(s.to_owned())),
        };
        Ok(kind)
    }
}

/// Simulated network elements.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Element {
    MobileStation,
    Msc,
    Scp,
    IntelligentPeripheral,
    ServiceNode,
    Pbp,
    Hlr,
    Auc,
    Psc,
}

impl Element {
    pub fn name(self) -> &'static str {
        match self {
            Element::MobileStation => "MS",
            Element::Msc => "MSC",
            Element::Scp => "SCP",
            Element::IntelligentPeripheral => "IP",
            Element::ServiceNode => "SN",
            Element::Pbp => "PBP",
            Element::Hlr => "HLR",
            Element::Auc => "AuC",
            Element::Psc => "PSC",
        }
    }
}

impl fmt::Display for Element {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Error)]
pub enum Rejection {
    #[error("insufficient balance")]
    InsufficientBalance,
    #[error("account suspended")]
    Suspended,
    #[error("unknown IMSI")]
    UnknownImsi,
    #[error("no voice channel available")]
    NoChannelAvailable,
    #[error("subscriber already has a call in progress")]
    Busy,
}

impl Rejection {
    pub fn name(self) -> &'static str {
        match self {
            Rejection::InsufficientBalance => "RejectedInsufficientBalance",
            Rejection::Suspended => "RejectedSuspended",
            Rejection::UnknownImsi => "RejectedUnknownImsi",
            Rejection::NoChannelAvailable => "NoChannelAvailable",
            Rejection::Busy => "RejectedBusy",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ProtocolMessage {
    CallSetupTrigger {
        imsi: String,
        callee: String,
    },
    ScpAuthorize {
        session: String,
    },
    IpLinkSetup {
        session: String,
    },
    NotificationInstruction {
        session: String,
    },
    BalanceAnnouncement {
        session: String,
        remaining_seconds: u64,
    },
    ConnectInstruction {
        session: String,
        countdown_seconds: u64,
    },
    CountdownExpired {
        session: String,
    },
    ReleaseTrigger {
        session: String,
        elapsed_seconds: u64,
    },
    ChargeResult {
        session: String,
        cost: Money,
        new_balance: Money,
    },
    PbpQuery {
        session: String,
    },
    PbpVerdict {
        session: String,
        allowed: bool,
    },
    SecondLegSetup {
        session: String,
    },
    HlrValidate {
        imsi: String,
    },
    AuthCheck {
        imsi: String,
    },
    AuthResult {
        imsi: String,
        known: bool,
    },
    HlrCustomerData {
        imsi: String,
        valid: bool,
    },
    CdrDispatch {
        record: Box<CallDetailRecord>,
    },
    SuspendNotice {
        imsi: String,
    },
    PricingParameters {
        session: String,
        voice_rate: Money,
        increment_seconds: u64,
    },
    ParamAck {
        session: String,
    },
    SimDecrementTick {
        session: String,
    },
    CallRejected {
        session: String,
        reason: Rejection,
    },
}

impl fmt::Display for ProtocolMessage {
    /// Compact form with `;`-separated arguments, safe inside CSV fields.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use ProtocolMessage::*;
        match self {
            CallSetupTrigger { imsi, callee } => write!(f, "CallSetupTrigger({imsi};{callee})"),
            ScpAuthorize { session } => write!(f, "ScpAuthorize({session})"),
            IpLinkSetup { session } => write!(f, "IpLinkSetup({session})"),
            NotificationInstruction { session } => write!(f, "NotificationInstruction({session})"),
            BalanceAnnouncement {
                session,
                remaining_seconds,
            } => write!(f, "BalanceAnnouncement({session};{remaining_seconds})"),
            ConnectInstruction {
                session,
                countdown_seconds,
            } => write!(f, "ConnectInstruction({session};{countdown_seconds})"),
            CountdownExpired { session } => write!(f, "CountdownExpired({session})"),
            ReleaseTrigger {
                session,
                elapsed_seconds,
            } => write!(f, "ReleaseTrigger({session};{elapsed_seconds})"),
            ChargeResult {
                session,
                cost,
                new_balance,
            } => write!(f, "ChargeResult({session};{cost};{new_balance})"),
            PbpQuery { session } => write!(f, "PbpQuery({session})"),
            PbpVerdict { session, allowed } => write!(f, "PbpVerdict({session};{allowed})"),
            SecondLegSetup { session } => write!(f, "SecondLegSetup({session})"),
            HlrValidate { imsi } => write!(f, "HlrValidate({imsi})"),
            AuthCheck { imsi } => write!(f, "AuthCheck({imsi})"),
            AuthResult { imsi, known } => write!(f, "AuthResult({imsi};{known})"),
            HlrCustomerData { imsi, valid } => write!(f, "HlrCustomerData({imsi};{valid})"),
            CdrDispatch { record } => {
                write!(f, "CdrDispatch({};{})", record.record_id, record.session_id)
            }
            SuspendNotice { imsi } => write!(f, "SuspendNotice({imsi})"),
            PricingParameters {
                session,
                voice_rate,
                increment_seconds,
            } => write!(
                f,
                "PricingParameters({session};{voice_rate};{increment_seconds})"
            ),
            ParamAck { session } => write!(f, "ParamAck({session})"),
            SimDecrementTick { session } => write!(f, "SimDecrementTick({session})"),
            CallRejected { session, reason } => {
                write!(f, "CallRejected({session};{})", reason.name())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Envelope {
    pub from: Element,
    pub to: Element,
    pub message: ProtocolMessage,
}

/// Channel pool plus the outbox of messages emitted since the last drain.
#[derive(Debug, Default)]
pub struct NetworkFabric {
    pub pool: ChannelPool,
    outbox: Vec<Envelope>,
}

impl NetworkFabric {
    pub fn new(pool: ChannelPool) -> Self {
        Self {
            pool,
            outbox: Vec::new(),
        }
    }

    pub fn send(&mut self, from: Element, to: Element, message: ProtocolMessage) {
        self.outbox.push(Envelope { from, to, message });
    }

    pub fn outbox(&self) -> &[Envelope] {
        &self.outbox
    }

    pub fn drain(&mut self) -> std::vec::Drain<'_, Envelope> {
        self.outbox.drain(..)
    }

    fn allocate(&mut self, session: &mut CallSession, kind: ChannelKind) -> Result<(), Rejection> {
        let handle = self
            .pool
            .allocate(kind)
            .map_err(|_| Rejection::NoChannelAvailable)?;
        session.channels_held.push(handle);
        Ok(())
    }

    fn release_all(&mut self, session: &mut CallSession) {
        for handle in session.channels_held.drain(..) {
            self.pool.release(handle);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SessionState {
    Setup,
    Connected,
    Released,
    Rejected,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TerminationReason {
    CallerHangup,
    BalanceExhausted,
    Rejected(Rejection),
}

impl TerminationReason {
    pub fn name(self) -> &'static str {
        match self {
            TerminationReason::CallerHangup => "CallerHangup",
            TerminationReason::BalanceExhausted => "BalanceExhausted",
            TerminationReason::Rejected(_) => "Rejected",
        }
    }
}

impl fmt::Display for TerminationReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One voice call's lifecycle under a single charging scheme.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CallSession {
    pub session_id: String,
    pub scheme: SchemeKind,
    pub caller_imsi: String,
    pub caller_msisdn: String,
    pub callee_msisdn: String,
    pub requested_duration: u64,
    pub start_time: SimTime,
    pub connected_at: Option<SimTime>,
    pub billed_duration: u64,
    /// Countdown started by the SCP or PBP; real-time network schemes only.
    pub countdown_seconds: Option<u64>,
    pub channels_held: Vec<ChannelHandle>,
    /// Kinds of channel held while connected; kept after release for auditing.
    pub channels_at_connect: Vec<ChannelKind>,
    pub state: SessionState,
    pub termination_reason: Option<TerminationReason>,
}

impl CallSession {
    pub fn new(
        session_id: impl Into<String>,
        scheme: SchemeKind,
        caller: &PrepaidAccount,
        callee_msisdn: &str,
        requested_duration: u64,
        start_time: SimTime,
    ) -> Self {
        Self::for_identity(
            session_id,
            scheme,
            caller.imsi(),
            caller.msisdn(),
            callee_msisdn,
            requested_duration,
            start_time,
        )
    }

    pub fn for_identity(
        session_id: impl Into<String>,
        scheme: SchemeKind,
        caller_imsi: &str,
        caller_msisdn: &str,
        callee_msisdn: &str,
        requested_duration: u64,
        start_time: SimTime,
    ) -> Self {
        Self {
            session_id: session_id.into(),
            scheme,
            caller_imsi: caller_imsi.to_owned(),
            caller_msisdn: caller_msisdn.to_owned(),
            callee_msisdn: callee_msisdn.to_owned(),
            requested_duration,
            start_time,
            connected_at: None,
            billed_duration: 0,
            countdown_seconds: None,
            channels_held: Vec::new(),
            channels_at_connect: Vec::new(),
            state: SessionState::Setup,
            termination_reason: None,
        }
    }

    pub fn is_released(&self) -> bool {
        self.state == SessionState::Released
    }

    pub fn count_at_connect(&self, kind: ChannelKind) -> usize {
        self.channels_at_connect
            .iter()
            .filter(|k| **k == kind)
            .count()
    }

    fn setup_message(&self) -> ProtocolMessage {
        ProtocolMessage::CallSetupTrigger {
            imsi: self.caller_imsi.clone(),
            callee: self.callee_msisdn.clone(),
        }
    }

    fn assert_setup(&self, scheme: SchemeKind) {
        assert_eq!(
            self.scheme, scheme,
            "session {} driven by the wrong scheme",
            self.session_id
        );
        assert_eq!(
            self.state,
            SessionState::Setup,
            "session {} is not in setup",
            self.session_id
        );
    }

    fn connect(&mut self, now: SimTime) {
        self.state = SessionState::Connected;
        self.connected_at = Some(now);
        self.channels_at_connect = self.channels_held.iter().map(|h| h.kind).collect();
    }

    /// Rejects the call, returning any channel it had already taken.
    fn reject(&mut self, reason: Rejection, net: &mut NetworkFabric, notify: Element) -> Rejection {
        net.release_all(self);
        self.state = SessionState::Rejected;
        self.termination_reason = Some(TerminationReason::Rejected(reason));
        net.send(
            notify,
            Element::Msc,
            ProtocolMessage::CallRejected {
                session: self.session_id.clone(),
                reason,
            },
        );
        reason
    }

    /// Marks the call released at `now` and returns its channels to the pool.
    fn release(&mut self, net: &mut NetworkFabric, now: SimTime, reason: TerminationReason) {
        assert_eq!(
            self.state,
            SessionState::Connected,
            "session {} is not connected",
            self.session_id
        );
        let connected_at = self
            .connected_at
            .expect("connected sessions have a connect time");
        self.billed_duration = now - connected_at;
        assert!(
            self.billed_duration <= self.requested_duration,
            "session {} ran past its requested duration",
            self.session_id
        );
        net.release_all(self);
        self.state = SessionState::Released;
        self.termination_reason = Some(reason);
    }
}

/// Reply sent to the MSC after a call is rated and charged.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChargeResult {
    pub session_id: String,
    pub cost: Money,
    pub new_balance: Money,
}

/// Real-time authorization used by both the SCP and the prepaid billing
/// platform: the account must be active and afford at least one increment.
/// Returns the countdown length.
pub fn authorize_real_time(
    account: &PrepaidAccount,
    tariff: &TariffPlan,
) -> Result<u64, Rejection> {
    if !account.is_active() {
        return Err(Rejection::Suspended);
    }
    let countdown = max_chargeable_duration(tariff, account.balance());
    if countdown < tariff.increment_seconds() {
        return Err(Rejection::InsufficientBalance);
    }
    Ok(countdown)
}

/// The MSC refuses a second call from a subscriber who is already in one.
pub fn reject_busy(session: &mut CallSession, net: &mut NetworkFabric) -> Rejection {
    assert_eq!(
        session.state,
        SessionState::Setup,
        "session {} is not in setup",
        session.session_id
    );
    net.send(
        Element::MobileStation,
        Element::Msc,
        session.setup_message(),
    );
    session.reject(Rejection::Busy, net, Element::Msc)
}

#[cfg(test)]
pub(crate) mod fixtures {
    use crate::account::{PrepaidAccount, SubscriberRecord, TariffPlan};
    use crate::engine::{Capacity, ChannelPool};
    use crate::money::Money;

    use super::{CallSession, NetworkFabric, SchemeKind};

    pub fn tariff() -> TariffPlan {
        TariffPlan::per_minute("flat", 30).unwrap()
    }

    pub fn account(balance: i64) -> PrepaidAccount {
        PrepaidAccount::open(
            SubscriberRecord::with_id("5550001", "001010000000001", "ID-1"),
            Money::from_minor(balance),
            "flat",
        )
    }

    pub fn session(scheme: SchemeKind, requested: u64) -> CallSession {
        CallSession::new("S1", scheme, &account(0), "5550002", requested, 0)
    }

    pub fn fabric() -> NetworkFabric {
        NetworkFabric::new(ChannelPool::new(Capacity::Unlimited))
    }

    pub fn fabric_with(capacity: u32) -> NetworkFabric {
        NetworkFabric::new(ChannelPool::new(Capacity::Limited(capacity)))
    }
}
