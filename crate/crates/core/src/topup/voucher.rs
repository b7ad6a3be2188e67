//! Single-use recharge vouchers and the tab-separated batch format.

use std::fmt;

use thiserror::Error;

use crate::money::Money;

/// Sixteen digits written as `DDDD-DDDD-DDDD-DDDD`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct VoucherCode(String);

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("malformed voucher code `{0}` (expected DDDD-DDDD-DDDD-DDDD)")]
pub struct InvalidVoucherCode(pub String);

impl VoucherCode {
    pub fn parse(code: &str) -> Result<Self, InvalidVoucherCode> {
        let groups: Vec<&str> = code.split('-').collect();
        let ok = groups.len() == 4
            && groups
                .iter()
                .all(|g| g.len() == 4 && g.bytes().all(|b| b.is_ascii_digit()));
        if ok {
            Ok(Self(code.to_owned()))
        } else {
            Err(InvalidVoucherCode(code.to_owned()))
        }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for VoucherCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum VoucherState {
    Issued,
    Redeemed,
    Void,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Voucher {
    pub code: VoucherCode,
    pub face_value: Money,
    pub state: VoucherState,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}: {message}")]
pub struct VoucherBatchError {
    pub line: usize,
    pub message: String,
}

/// Parses `CODE<TAB>FACE_VALUE_MINOR_UNITS` lines. Blank lines are ignored.
/// Every bad line is reported.
pub fn parse_voucher_batch(
    text: &str,
) -> Result<Vec<(VoucherCode, Money)>, Vec<VoucherBatchError>> {
    let mut vouchers = Vec::new();
    let mut errors = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let mut err = |message: String| errors.push(VoucherBatchError { line, message });
        let Some((code, value)) = raw.split_once('\t') else {
            err("expected CODE<TAB>FACE_VALUE".into());
            continue;
        };
        let code = match VoucherCode::parse(code) {
            Ok(c) => c,
            Err(e) => {
                err(e.to_string());
                continue;
            }
        };
        match value.trim().parse::<i64>() {
            Ok(v) if v > 0 => vouchers.push((code, Money::from_minor(v))),
            _ => err(format!(
                "face value must be a positive integer, got `{value}`"
            )),
        }
    }
    if errors.is_empty() {
        Ok(vouchers)
    } else {
        Err(errors)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn code_format() {
        assert!(VoucherCode::parse("1234-5678-9012-3456").is_ok());
        for bad in [
            "1234-5678-9012-345",
            "1234567890123456",
            "1234-5678-9012-345a",
            "1234-5678-9012-3456-",
        ] {
            assert!(VoucherCode::parse(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn batch_import() {
        let text = "1111-2222-3333-4444\t500\n\n5555-6666-7777-8888\t100\n";
        let parsed = parse_voucher_batch(text).unwrap();
        assert_eq!(parsed.len(), 2);
        assert_eq!(parsed[0].1, Money::from_minor(500));
    }

    #[test]
    fn batch_errors_carry_line_numbers() {
        let text = "1111-2222-3333-4444\t500\nbad line\n5555-6666-7777-8888\t0\n";
        let errors = parse_voucher_batch(text).unwrap_err();
        assert_eq!(
            errors.iter().map(|e| e.line).collect::<Vec<_>>(),
            vec![2, 3]
        );
    }
}
