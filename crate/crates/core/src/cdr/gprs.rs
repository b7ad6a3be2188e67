//! GPRS mediation: partial records arrive from both the core network and the
//! ISP network, possibly duplicated and out of order.

use std::collections::{BTreeMap, HashSet};
use std::fmt::{self, Write as _};
use std::str::FromStr;

use crate::account::{AccountError, PrepaidAccount, TariffPlan};
use crate::money::Money;
use crate::rating::billed_kilobytes;
use crate::SimTime;

use super::CsvError;

pub const GPRS_CSV_HEADER: &str = "session_id,source,seq_no,bytes,service_tag";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum GprsSource {
    CoreNetwork,
    IspNetwork,
}

impl fmt::Display for GprsSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GprsSource::CoreNetwork => "CoreNetwork",
            GprsSource::IspNetwork => "IspNetwork",
        })
    }
}

impl FromStr for GprsSource {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "CoreNetwork" | "core" => Ok(GprsSource::CoreNetwork),
            "IspNetwork" | "isp" => Ok(GprsSource::IspNetwork),
            other => Err(format!("unknown GPRS source `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct GprsPartialRecord {
    pub session_id: String,
    pub source: GprsSource,
    pub seq_no: u64,
    pub bytes: u64,
    pub service_tag: String,
}

impl GprsPartialRecord {
    pub fn new(session_id: &str, source: GprsSource, seq_no: u64, bytes: u64) -> Self {
        Self {
            session_id: session_id.to_owned(),
            source,
            seq_no,
            bytes,
            service_tag: "internet".to_owned(),
        }
    }

    fn is_well_formed(&self) -> bool {
        !self.session_id.is_empty()
            && !self.session_id.contains([',', '\n', '\r'])
            && !self.service_tag.contains([',', '\n', '\r'])
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MergedSession {
    pub session_id: String,
    pub core_bytes: u64,
    pub isp_bytes: u64,
    /// Core network totals are authoritative.
    pub billable_bytes: u64,
    /// `isp_bytes - core_bytes`, present only when both sources reported.
    pub discrepancy: Option<i64>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MergeOutcome {
    pub sessions: BTreeMap<String, MergedSession>,
    pub duplicates: usize,
    pub malformed: usize,
}

/// Deduplicates by `(session_id, source, seq_no)`, keeping the first
/// occurrence, and sums bytes per session and source.
///
/// Merging is idempotent, and insensitive to input order as long as
/// duplicates carry identical byte counts.
pub fn merge_gprs_partials(records: &[GprsPartialRecord]) -> MergeOutcome {
    let mut seen: HashSet<(&str, GprsSource, u64)> = HashSet::with_capacity(records.len());
    let mut out = MergeOutcome::default();
    let mut has_core: HashSet<&str> = HashSet::new();
    let mut has_isp: HashSet<&str> = HashSet::new();
    for rec in records {
        if !rec.is_well_formed() {
            out.malformed += 1;
            continue;
        }
        if !seen.insert((rec.session_id.as_str(), rec.source, rec.seq_no)) {
            out.duplicates += 1;
            continue;
        }
        let entry = out
            .sessions
            .entry(rec.session_id.clone())
            .or_insert_with(|| MergedSession {
                session_id: rec.session_id.clone(),
                ..MergedSession::default()
            });
        match rec.source {
            GprsSource::CoreNetwork => {
                entry.core_bytes += rec.bytes;
                has_core.insert(&rec.session_id);
            }
            GprsSource::IspNetwork => {
                entry.isp_bytes += rec.bytes;
                has_isp.insert(&rec.session_id);
            }
        }
    }
    for (id, session) in out.sessions.iter_mut() {
        session.billable_bytes = session.core_bytes;
        if has_core.contains(id.as_str()) && has_isp.contains(id.as_str()) {
            session.discrepancy = Some(session.isp_bytes as i64 - session.core_bytes as i64);
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GprsChargeStatus {
    Charged,
    /// The balance could not cover the deferred charge; nothing was taken.
    Unrecovered,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RatedSession {
    pub session_id: String,
    pub total_kilobytes: u64,
    pub cost: Money,
    pub discrepancy: Option<i64>,
    pub status: GprsChargeStatus,
}

/// Rates a closed data session and charges the account without overdraft.
pub fn rate_gprs_session(
    merged: &MergedSession,
    tariff: &TariffPlan,
    account: &mut PrepaidAccount,
    now: SimTime,
) -> RatedSession {
    let total_kilobytes = billed_kilobytes(merged.billable_bytes);
    let cost = tariff.data_rate() * total_kilobytes as i64;
    let status = match account.apply_charge(cost, &merged.session_id, false, now) {
        Ok(_) => GprsChargeStatus::Charged,
        Err(AccountError::InsufficientBalance { .. }) => GprsChargeStatus::Unrecovered,
        Err(e) => unreachable!("data cost is never negative: {e}"),
    };
    RatedSession {
        session_id: merged.session_id.clone(),
        total_kilobytes,
        cost,
        discrepancy: merged.discrepancy,
        status,
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct GprsInput {
    pub records: Vec<GprsPartialRecord>,
    /// Skipped lines with the reason each was rejected.
    pub malformed: Vec<CsvError>,
}

/// Parses `session_id,source,seq_no,bytes,service_tag` with a header line.
/// Malformed lines are skipped and reported, not fatal.
pub fn parse_gprs_csv(text: &str) -> GprsInput {
    let mut input = GprsInput::default();
    for (idx, line) in text.split('\n').enumerate() {
        let line_no = idx + 1;
        if line.is_empty() || (idx == 0 && line == GPRS_CSV_HEADER) {
            continue;
        }
        match parse_gprs_line(line) {
            Ok(rec) => input.records.push(rec),
            Err(message) => input.malformed.push(CsvError::new(line_no, message)),
        }
    }
    input
}

fn parse_gprs_line(line: &str) -> Result<GprsPartialRecord, String> {
    let fields: Vec<&str> = line.split(',').collect();
    if fields.len() != 5 {
        return Err(format!("expected 5 fields, found {}", fields.len()));
    }
    if fields[0].is_empty() {
        return Err("empty session_id".into());
    }
    Ok(GprsPartialRecord {
        session_id: fields[0].to_owned(),
        source: fields[1].parse()?,
        seq_no: fields[2]
            .parse()
            .map_err(|_| format!("invalid seq_no `{}`", fields[2]))?,
        bytes: fields[3]
            .parse()
            .map_err(|_| format!("invalid bytes `{}`", fields[3]))?,
        service_tag: fields[4].to_owned(),
    })
}

pub fn export_gprs_csv(records: &[GprsPartialRecord]) -> String {
    let mut out = String::from(GPRS_CSV_HEADER);
    out.push('\n');
    for r in records {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            r.session_id, r.source, r.seq_no, r.bytes, r.service_tag
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::account::SubscriberRecord;
    use proptest::prelude::*;

    use GprsSource::{CoreNetwork as Core, IspNetwork as Isp};

    fn rec(session: &str, source: GprsSource, seq: u64, bytes: u64) -> GprsPartialRecord {
        GprsPartialRecord::new(session, source, seq, bytes)
    }

    #[test]
    fn agreeing_sources() {
        let out = merge_gprs_partials(&[
            rec("g1", Core, 0, 1000),
            rec("g1", Core, 1, 2000),
            rec("g1", Isp, 0, 3000),
        ]);
        let s = &out.sessions["g1"];
        assert_eq!(s.billable_bytes, 3000);
        assert_eq!(s.discrepancy, Some(0));
    }

    #[test]
    fn duplicate_sequence_counted_once() {
        let out = merge_gprs_partials(&[rec("g1", Core, 0, 1000), rec("g1", Core, 0, 1000)]);
        assert_eq!(out.sessions["g1"].billable_bytes, 1000);
        assert_eq!(out.duplicates, 1);
        assert_eq!(out.sessions["g1"].discrepancy, None);
    }

    #[test]
    fn isp_shortfall_is_negative_discrepancy() {
        let out = merge_gprs_partials(&[rec("g1", Core, 0, 3000), rec("g1", Isp, 0, 2500)]);
        assert_eq!(out.sessions["g1"].billable_bytes, 3000);
        assert_eq!(out.sessions["g1"].discrepancy, Some(-500));
    }

    #[test]
    fn malformed_records_are_skipped() {
        let out = merge_gprs_partials(&[
            rec("", Core, 0, 10),
            rec("a,b", Core, 0, 10),
            rec("ok", Core, 0, 10),
        ]);
        assert_eq!(out.malformed, 2);
        assert_eq!(out.sessions.len(), 1);
    }

    fn account(balance: i64) -> PrepaidAccount {
        PrepaidAccount::open(
            SubscriberRecord::anonymous("1", "1"),
            Money::from_minor(balance),
            "data",
        )
    }

    fn rate(bytes: u64, balance: i64) -> (RatedSession, PrepaidAccount) {
        let tariff =
            TariffPlan::new("data", Money::from_minor(30), 60, Money::from_minor(2)).unwrap();
        let mut acc = account(balance);
        let merged = MergedSession {
            session_id: "g".into(),
            core_bytes: bytes,
            billable_bytes: bytes,
            ..MergedSession::default()
        };
        (rate_gprs_session(&merged, &tariff, &mut acc, 0), acc)
    }

    #[test]
    fn rating_rounds_up_kilobytes() {
        assert_eq!(rate(0, 100).0.cost, Money::ZERO);
        let (r, acc) = rate(1025, 100);
        assert_eq!((r.total_kilobytes, r.cost), (2, Money::from_minor(4)));
        assert_eq!(acc.balance(), Money::from_minor(96));
        let (r, _) = rate(3000, 100);
        assert_eq!((r.total_kilobytes, r.cost), (3, Money::from_minor(6)));
    }

    #[test]
    fn unaffordable_session_is_unrecovered() {
        let (r, acc) = rate(10 * 1024, 5);
        assert_eq!(r.status, GprsChargeStatus::Unrecovered);
        assert_eq!(acc.balance(), Money::from_minor(5));
        assert!(acc.ledger().is_empty());
    }

    #[test]
    fn csv_parsing_reports_bad_lines() {
        let text = format!(
            "{GPRS_CSV_HEADER}\ng1,CoreNetwork,0,100,web\ng1,Satellite,1,5,web\ng2,isp,x,5,web\n"
        );
        let input = parse_gprs_csv(&text);
        assert_eq!(input.records.len(), 1);
        assert_eq!(
            input.malformed.iter().map(|e| e.line).collect::<Vec<_>>(),
            vec![3, 4]
        );
    }

    fn arb_records() -> impl Strategy<Value = Vec<GprsPartialRecord>> {
        prop::collection::vec((0u8..5, prop::bool::ANY, 0u64..6, 0u64..100_000), 0..40).prop_map(
            |raw| {
                let mut seen = HashSet::new();
                raw.into_iter()
                    .filter(|(s, core, seq, _)| seen.insert((*s, *core, *seq)))
                    .map(|(s, core, seq, bytes)| {
                        rec(&format!("g{s}"), if core { Core } else { Isp }, seq, bytes)
                    })
                    .collect()
            },
        )
    }

    proptest! {
        #[test]
        fn merge_is_idempotent(records in arb_records()) {
            let doubled: Vec<_> = records.iter().chain(records.iter()).cloned().collect();
            prop_assert_eq!(merge_gprs_partials(&doubled).sessions, merge_gprs_partials(&records).sessions);
        }

        #[test]
        fn merge_ignores_order(records in arb_records(), seed in any::<u64>()) {
            let mut shuffled = records.clone();
            let mut rng = crate::engine::SimRng::new(seed);
            for i in (1..shuffled.len()).rev() {
                shuffled.swap(i, rng.below(i + 1));
            }
            prop_assert_eq!(merge_gprs_partials(&shuffled).sessions, merge_gprs_partials(&records).sessions);
        }

        #[test]
        fn csv_round_trip(records in arb_records()) {
            let parsed = parse_gprs_csv(&export_gprs_csv(&records));
            prop_assert!(parsed.malformed.is_empty());
            prop_assert_eq!(parsed.records, records);
        }
    }
}
