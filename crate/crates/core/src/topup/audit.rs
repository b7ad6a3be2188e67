//! Anonymity audit over the ledgers and the request journal.

use std::collections::HashMap;

use crate::account::LedgerKind;
use crate::money::Money;

use super::{CountermeasurePolicy, Operation, Registry, TopUpChannel, VoucherCode, VoucherState};

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FraudAuditReport {
    pub id_required: bool,
    pub topups_executed: usize,
    pub transfers_executed: usize,
    /// Top-up credits not backed by a request carrying the matching ID.
    pub anonymous_topup_count: usize,
    /// Transfers whose sender did not present the matching ID.
    pub anonymous_transfer_count: usize,
    pub rejected_for_id: usize,
    pub rejected_other: usize,
    /// Subscribers registered without a verified ID who received credit.
    pub unverified_accounts_credited: Vec<String>,
}

/// Scans every credit entry in every ledger and traces it back to the
/// journaled request by ledger reference. Credits with no journal entry
/// count as anonymous.
pub fn audit_anonymous_activity(
    registry: &Registry,
    policy: CountermeasurePolicy,
) -> FraudAuditReport {
    let executed: HashMap<&str, bool> = registry
        .journal()
        .iter()
        .filter_map(|j| j.outcome.as_ref().ok().map(|r| (r.as_str(), j.id_matched)))
        .collect();

    let mut report = FraudAuditReport {
        id_required: policy.id_required,
        ..FraudAuditReport::default()
    };
    for account in registry.accounts() {
        let mut credited = false;
        for entry in account.ledger() {
            let matched = executed
                .get(entry.reference.as_str())
                .copied()
                .unwrap_or(false);
            match entry.kind {
                LedgerKind::TopUp => {
                    credited = true;
                    report.topups_executed += 1;
                    if !matched {
                        report.anonymous_topup_count += 1;
                    }
                }
                LedgerKind::TransferIn => {
                    credited = true;
                    report.transfers_executed += 1;
                    if !matched {
                        report.anonymous_transfer_count += 1;
                    }
                }
                LedgerKind::Charge | LedgerKind::TransferOut => {}
            }
        }
        if credited && !account.subscriber.id_verified {
            report
                .unverified_accounts_credited
                .push(account.msisdn().to_owned());
        }
    }
    for entry in registry.journal() {
        if let Err(e) = &entry.outcome {
            if e.is_id_failure() {
                report.rejected_for_id += 1;
            } else {
                report.rejected_other += 1;
            }
        }
    }
    report
}

/// `(face value of redeemed vouchers, voucher-referenced ledger credits)`.
/// The two are equal when voucher accounting is intact.
pub fn voucher_totals(registry: &Registry) -> (Money, Money) {
    let redeemed = registry
        .vouchers()
        .filter(|v| v.state == VoucherState::Redeemed)
        .map(|v| v.face_value)
        .sum();
    let voucher_refs: HashMap<&str, ()> = registry
        .journal()
        .iter()
        .filter(|j| j.operation == Operation::TopUp(TopUpChannel::Voucher))
        .filter_map(|j| j.outcome.as_ref().ok().map(|r| (r.as_str(), ())))
        .collect();
    let credited = registry
        .accounts()
        .iter()
        .flat_map(|a| a.ledger())
        .filter(|e| e.kind == LedgerKind::TopUp && voucher_refs.contains_key(e.reference.as_str()))
        .inspect(|e| debug_assert!(VoucherCode::parse(&e.reference).is_ok()))
        .map(|e| e.amount)
        .sum();
    (redeemed, credited)
}

#[cfg(test)]
mod tests {
    use super::super::{TopUpRequest, TransferRequest};
    use super::*;
    use crate::account::{PrepaidAccount, SubscriberRecord};

    fn registry() -> Registry {
        let mut r = Registry::new();
        r.register(PrepaidAccount::open(
            SubscriberRecord::with_id("A", "1", "ID-A"),
            Money::from_minor(100),
            "t",
        ))
        .unwrap();
        r.register(PrepaidAccount::open(
            SubscriberRecord::anonymous("B", "2"),
            Money::ZERO,
            "t",
        ))
        .unwrap();
        for i in 0..3 {
            r.issue_voucher(
                VoucherCode::parse(&format!("0000-0000-0000-000{i}")).unwrap(),
                Money::from_minor(10),
            )
            .unwrap();
        }
        r
    }

    #[test]
    fn empty_ledger_has_no_findings() {
        let report = audit_anonymous_activity(&registry(), CountermeasurePolicy::OFF);
        assert_eq!(report.anonymous_topup_count, 0);
        assert_eq!(report.topups_executed, 0);
        assert_eq!(report.rejected_for_id, 0);
        assert!(report.unverified_accounts_credited.is_empty());
    }

    #[test]
    fn counts_no_id_redemptions() {
        let mut r = registry();
        for i in 0..3 {
            let req = TopUpRequest::voucher("B", &format!("0000-0000-0000-000{i}"), None);
            r.redeem_voucher(&req, CountermeasurePolicy::OFF, i)
                .unwrap();
        }
        let report = audit_anonymous_activity(&r, CountermeasurePolicy::OFF);
        assert_eq!(report.anonymous_topup_count, 3);
        assert_eq!(report.unverified_accounts_credited, vec!["B".to_string()]);
        assert_eq!(
            voucher_totals(&r),
            (Money::from_minor(30), Money::from_minor(30))
        );
    }

    #[test]
    fn policy_on_leaves_only_matched_credits() {
        let mut r = registry();
        let p = CountermeasurePolicy::ON;
        let _ = r.redeem_voucher(
            &TopUpRequest::voucher("B", "0000-0000-0000-0000", None),
            p,
            0,
        );
        r.redeem_voucher(
            &TopUpRequest::voucher("A", "0000-0000-0000-0001", Some("ID-A")),
            p,
            1,
        )
        .unwrap();
        let _ = r.transfer_credit(
            &TransferRequest {
                from_msisdn: "A".into(),
                to_msisdn: "B".into(),
                amount: Money::from_minor(5),
                presented_id: Some("wrong".into()),
            },
            p,
            2,
        );
        let report = audit_anonymous_activity(&r, p);
        assert_eq!(report.anonymous_topup_count, 0);
        assert_eq!(report.anonymous_transfer_count, 0);
        assert_eq!(report.topups_executed, 1);
        assert_eq!(report.rejected_for_id, 2);
    }

    #[test]
    fn identified_credit_under_policy_off_is_not_anonymous() {
        let mut r = registry();
        r.redeem_voucher(
            &TopUpRequest::voucher("A", "0000-0000-0000-0000", Some("ID-A")),
            CountermeasurePolicy::OFF,
            0,
        )
        .unwrap();
        assert_eq!(
            audit_anonymous_activity(&r, CountermeasurePolicy::OFF).anonymous_topup_count,
            0
        );
    }
}
