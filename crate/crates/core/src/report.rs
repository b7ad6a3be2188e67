//! Text and CSV renderings of run results.

use std::fmt::Write as _;

use crate::schemes::SchemeKind;
use crate::simulation::{AuditComparison, ComparisonReport, RunOutcome};
use crate::topup::FraudAuditReport;

pub const LEDGER_CSV_HEADER: &str = "msisdn,seq,sim_time,kind,amount,balance_after,reference";
pub const TRACE_CSV_HEADER: &str = "time,from,to,message";

/// Every ledger posting, ordered by (sim_time, msisdn, seq).
pub fn ledger_csv(outcome: &RunOutcome) -> String {
    let mut rows: Vec<_> = outcome
        .registry
        .accounts()
        .iter()
        .flat_map(|a| a.ledger().iter().map(move |e| (a.msisdn(), e)))
        .collect();
    rows.sort_by(|(ma, a), (mb, b)| (a.sim_time, ma, a.seq).cmp(&(b.sim_time, mb, b.seq)));
    let mut out = String::from(LEDGER_CSV_HEADER);
    out.push('\n');
    for (msisdn, e) in rows {
        let _ = writeln!(
            out,
            "{msisdn},{},{},{},{},{},{}",
            e.seq, e.sim_time, e.kind, e.amount, e.balance_after, e.reference
        );
    }
    out
}

pub fn trace_csv(outcome: &RunOutcome) -> String {
    let mut out = String::from(TRACE_CSV_HEADER);
    out.push('\n');
    for r in &outcome.trace {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            r.time,
            r.envelope.from.name(),
            r.envelope.to.name(),
            r.envelope.message
        );
    }
    out
}

pub fn run_report_text(outcome: &RunOutcome) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "horizon           {}", outcome.horizon);
    let _ = writeln!(out, "final clock       {}", outcome.final_clock);
    let _ = writeln!(out, "events processed  {}", outcome.events_processed);
    let _ = writeln!(
        out,
        "ID policy         {}",
        if outcome.policy.id_required {
            "on"
        } else {
            "off"
        }
    );
    let _ = writeln!(
        out,
        "accounts          {}",
        outcome.registry.accounts().len()
    );
    let _ = writeln!(
        out,
        "calls             {} connected, {} rejected",
        outcome.connected_calls(),
        outcome.rejected_calls()
    );
    let _ = writeln!(out, "revenue           {}", outcome.total_revenue());
    let _ = writeln!(out, "top-ups           {}", outcome.total_topups());
    let _ = writeln!(out, "credit exposure   {}", outcome.credit_exposure());
    let _ = writeln!(out, "suspended         {}", outcome.suspended_accounts());
    let _ = writeln!(
        out,
        "peak channels     {} voice, {} notification (capacity {})",
        outcome.pool.peak_in_use(),
        outcome.pool.peak_notification_in_use(),
        outcome.pool.capacity()
    );
    out.push('\n');
    let _ = writeln!(
        out,
        "{:<20} {:>8} {:>9} {:>8} {:>10} {:>12}",
        "scheme", "attempts", "connected", "rejected", "revenue", "billed_secs"
    );
    for (scheme, s) in &outcome.scheme_stats {
        let _ = writeln!(
            out,
            "{:<20} {:>8} {:>9} {:>8} {:>10} {:>12}",
            scheme.name(),
            s.attempts,
            s.connected,
            s.rejected_total(),
            s.revenue,
            s.billed_seconds
        );
        for (reason, n) in &s.rejected {
            let _ = writeln!(out, "  {:<30} {n}", reason.name());
        }
    }
    let shortfalls: Vec<_> = outcome
        .reconciliation
        .iter()
        .filter(|r| r.expected != r.collected)
        .collect();
    if !shortfalls.is_empty() {
        out.push('\n');
        let _ = writeln!(out, "handset reconciliation mismatches:");
        for r in shortfalls {
            let _ = writeln!(
                out,
                "  {} {} expected {} collected {}{}",
                r.session_id,
                r.msisdn,
                r.expected,
                r.collected,
                if r.tampered { " (tampered SIM)" } else { "" }
            );
        }
    }
    out.push('\n');
    out.push_str(&audit_text(&outcome.audit()));
    out
}

pub fn run_report_csv(outcome: &RunOutcome) -> String {
    let mut out = String::from("scheme,attempts,connected,rejected,revenue,billed_seconds\n");
    for (scheme, s) in &outcome.scheme_stats {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            scheme.short_code(),
            s.attempts,
            s.connected,
            s.rejected_total(),
            s.revenue,
            s.billed_seconds
        );
    }
    out
}

pub fn comparison_text(report: &ComparisonReport) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<20} {:>10} {:>10} {:>6} {:>6} {:>9} {:>8} {:>9}",
        "scheme", "revenue", "exposure", "peak", "notif", "connected", "rejected", "suspended"
    );
    for r in &report.rows {
        let _ = writeln!(
            out,
            "{:<20} {:>10} {:>10} {:>6} {:>6} {:>9} {:>8} {:>9}",
            r.scheme.name(),
            r.total_revenue,
            r.credit_exposure,
            r.peak_channels,
            r.peak_notification_links,
            r.connected_calls,
            r.rejected_calls,
            r.suspended_accounts
        );
    }
    out
}

pub fn comparison_csv(report: &ComparisonReport) -> String {
    let mut out = String::from(
        "scheme,total_revenue,credit_exposure,peak_channels,peak_notification_links,connected_calls,rejected_calls,suspended_accounts\n",
    );
    for r in &report.rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.scheme.short_code(),
            r.total_revenue,
            r.credit_exposure,
            r.peak_channels,
            r.peak_notification_links,
            r.connected_calls,
            r.rejected_calls,
            r.suspended_accounts
        );
    }
    out
}

pub fn audit_text(report: &FraudAuditReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "ID required              {}", report.id_required);
    let _ = writeln!(out, "top-ups executed         {}", report.topups_executed);
    let _ = writeln!(
        out,
        "transfers executed       {}",
        report.transfers_executed
    );
    let _ = writeln!(
        out,
        "anonymous top-ups        {}",
        report.anonymous_topup_count
    );
    let _ = writeln!(
        out,
        "anonymous transfers      {}",
        report.anonymous_transfer_count
    );
    let _ = writeln!(out, "rejected (ID)            {}", report.rejected_for_id);
    let _ = writeln!(out, "rejected (other)         {}", report.rejected_other);
    let _ = writeln!(
        out,
        "unverified credited      {}",
        if report.unverified_accounts_credited.is_empty() {
            "-".to_string()
        } else {
            report.unverified_accounts_credited.join(" ")
        }
    );
    out
}

pub fn audit_comparison_text(a: &AuditComparison) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{:<24} {:>10} {:>10}", "", "policy off", "policy on");
    let rows: [(&str, String, String); 7] = [
        (
            "top-ups executed",
            a.without_policy.topups_executed.to_string(),
            a.with_policy.topups_executed.to_string(),
        ),
        (
            "transfers executed",
            a.without_policy.transfers_executed.to_string(),
            a.with_policy.transfers_executed.to_string(),
        ),
        (
            "anonymous top-ups",
            a.without_policy.anonymous_topup_count.to_string(),
            a.with_policy.anonymous_topup_count.to_string(),
        ),
        (
            "anonymous transfers",
            a.without_policy.anonymous_transfer_count.to_string(),
            a.with_policy.anonymous_transfer_count.to_string(),
        ),
        (
            "rejected (ID)",
            a.without_policy.rejected_for_id.to_string(),
            a.with_policy.rejected_for_id.to_string(),
        ),
        (
            "credit topped up",
            a.topups_without.to_string(),
            a.topups_with.to_string(),
        ),
        (
            "revenue",
            a.revenue_without.to_string(),
            a.revenue_with.to_string(),
        ),
    ];
    for (label, off, on) in rows {
        let _ = writeln!(out, "{label:<24} {off:>10} {on:>10}");
    }
    let _ = writeln!(out, "revenue delta            {}", a.revenue_delta());
    out
}

/// Scheme column labels in comparison order.
pub fn scheme_labels() -> Vec<&'static str> {
    SchemeKind::ALL.iter().map(|s| s.short_code()).collect()
}
