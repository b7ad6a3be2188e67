//! Deterministic discrete-event simulation of prepaid mobile charging.
//!
//! Four charging architectures (intelligent network, service node, hot
//! billing, handset-based) run over a shared account, tariff, and ledger
//! model, alongside voucher and card top-ups, credit transfer, an optional
//! ID-verification gate, CDR export, and GPRS record mediation.

pub mod account;
pub mod cdr;
pub mod engine;
pub mod money;
pub mod rating;
pub mod report;
pub mod scenario;
pub mod schemes;
pub mod simulation;
pub mod topup;

/// Simulated time in whole seconds.
pub type SimTime = u64;

pub use account::{
    AccountStatus, LedgerEntry, LedgerKind, PrepaidAccount, SubscriberRecord, TariffPlan,
};
pub use money::Money;
pub use rating::{max_chargeable_duration, rate_voice_cost};
pub use scenario::{parse_scenario, Diagnostic, Scenario};
pub use schemes::SchemeKind;
pub use simulation::{audit_policies, compare_schemes, run_scenario, RunOptions, RunOutcome};
