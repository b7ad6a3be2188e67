//! Call-detail records, GPRS partial-record mediation, and CSV framing.

mod gprs;

use std::fmt::Write as _;

use thiserror::Error;

use crate::account::TariffPlan;
use crate::money::Money;
use crate::rating::rate_voice_cost;
use crate::schemes::{CallSession, SchemeKind};
use crate::SimTime;

pub use gprs::{
    export_gprs_csv, merge_gprs_partials, parse_gprs_csv, rate_gprs_session, GprsChargeStatus,
    GprsInput, GprsPartialRecord, GprsSource, MergeOutcome, MergedSession, RatedSession,
};

pub const CDR_CSV_HEADER: &str =
    "record_id,session_id,imsi,msisdn,scheme,start_time,billed_duration,cost,termination_reason";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CallDetailRecord {
    pub record_id: String,
    pub session_id: String,
    pub imsi: String,
    pub msisdn: String,
    pub scheme: SchemeKind,
    pub start_time: SimTime,
    pub billed_duration: u64,
    pub cost: Money,
    pub termination_reason: String,
}

impl CallDetailRecord {
    /// Rates a released session. `start_time` is the connect time.
    pub fn for_session(record_id: &str, session: &CallSession, tariff: &TariffPlan) -> Self {
        Self {
            record_id: record_id.to_owned(),
            session_id: session.session_id.clone(),
            imsi: session.caller_imsi.clone(),
            msisdn: session.caller_msisdn.clone(),
            scheme: session.scheme,
            start_time: session.connected_at.unwrap_or(session.start_time),
            billed_duration: session.billed_duration,
            cost: rate_voice_cost(tariff, session.billed_duration),
            termination_reason: session
                .termination_reason
                .map(|r| r.name().to_owned())
                .unwrap_or_default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}: {message}")]
pub struct CsvError {
    pub line: usize,
    pub message: String,
}

impl CsvError {
    pub(crate) fn new(line: usize, message: impl Into<String>) -> Self {
        Self {
            line,
            message: message.into(),
        }
    }
}

/// Header plus one LF-terminated line per record, sorted by `(start_time, record_id)`.
/// Fields are written unquoted.
pub fn export_cdr_csv(records: &[CallDetailRecord]) -> String {
    let mut sorted: Vec<&CallDetailRecord> = records.iter().collect();
    sorted.sort_by(|a, b| (a.start_time, &a.record_id).cmp(&(b.start_time, &b.record_id)));
    let mut out = String::with_capacity(64 * (records.len() + 1));
    out.push_str(CDR_CSV_HEADER);
    out.push('\n');
    for r in sorted {
        debug_assert!(
            [
                &r.record_id,
                &r.session_id,
                &r.imsi,
                &r.msisdn,
                &r.termination_reason
            ]
            .iter()
            .all(|f| !f.contains([',', '\n', '\r'])),
            "CDR fields must not contain separators"
        );
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            r.record_id,
            r.session_id,
            r.imsi,
            r.msisdn,
            r.scheme,
            r.start_time,
            r.billed_duration,
            r.cost,
            r.termination_reason
        );
    }
    out
}

pub fn parse_cdr_csv(text: &str) -> Result<Vec<CallDetailRecord>, CsvError> {
    let mut lines = text.split('\n').enumerate();
    match lines.next() {
        Some((_, header)) if header == CDR_CSV_HEADER => {}
        _ => return Err(CsvError::new(1, "missing or unexpected CDR header")),
    }
    let mut records = Vec::new();
    for (idx, line) in lines {
        let line_no = idx + 1;
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 9 {
            return Err(CsvError::new(
                line_no,
                format!("expected 9 fields, found {}", fields.len()),
            ));
        }
        let num = |i: usize, what: &str| -> Result<u64, CsvError> {
            fields[i]
                .parse()
                .map_err(|_| CsvError::new(line_no, format!("invalid {what} `{}`", fields[i])))
        };
        records.push(CallDetailRecord {
            record_id: fields[0].to_owned(),
            session_id: fields[1].to_owned(),
            imsi: fields[2].to_owned(),
            msisdn: fields[3].to_owned(),
            scheme: fields[4]
                .parse()
                .map_err(|e| CsvError::new(line_no, format!("{e}")))?,
            start_time: num(5, "start_time")?,
            billed_duration: num(6, "billed_duration")?,
            cost: fields[7]
                .parse()
                .map_err(|_| CsvError::new(line_no, format!("invalid cost `{}`", fields[7])))?,
            termination_reason: fields[8].to_owned(),
        });
    }
    Ok(records)
}
