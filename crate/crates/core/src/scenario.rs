//! Scenario files: a line-oriented description of tariffs, subscribers,
//! workload, and scripted top-ups and transfers.
//!
//! ```text
//! # comment
//! tariff flat 30 60 2
//! account 5550001 001010000000001 ID-1001 100 flat
//! account 5550002 001010000000002 - 0 flat
//! policy id_required on
//! channels unlimited
//! voucher 1111-2222-3333-4444 500
//! call 10 5550001 5550002 60 IN
//! topup 20 voucher 5550002 1111-2222-3333-4444 -
//! topup 30 card 5550001 250 ID-1001
//! transfer 40 5550001 5550002 50 ID-1001
//! random seed=42 rate=0.1 mean_duration=120 schemes=IN,HB
//! horizon 3600
//! ```

use std::collections::{HashMap, HashSet};
use std::fmt;

use crate::account::{SubscriberRecord, TariffPlan};
use crate::engine::{Capacity, RandomWorkload, ScriptedCall, WorkloadSpec};
use crate::money::Money;
use crate::schemes::SchemeKind;
use crate::topup::{
    CountermeasurePolicy, TopUpChannel, TopUpRequest, TransferRequest, VoucherCode,
};
use crate::SimTime;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AccountSpec {
    pub subscriber: SubscriberRecord,
    pub initial_balance: Money,
    pub tariff_id: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScheduledTopUp {
    pub time: SimTime,
    pub request: TopUpRequest,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScheduledTransfer {
    pub time: SimTime,
    pub request: TransferRequest,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub tariffs: Vec<TariffPlan>,
    pub accounts: Vec<AccountSpec>,
    pub vouchers: Vec<(VoucherCode, Money)>,
    pub policy: CountermeasurePolicy,
    pub channel_capacity: Capacity,
    pub workload: WorkloadSpec,
    pub topups: Vec<ScheduledTopUp>,
    pub transfers: Vec<ScheduledTransfer>,
    pub horizon: SimTime,
    /// Source line of each scripted call (0 when built in code).
    pub call_lines: Vec<usize>,
}

impl Scenario {
    pub fn new(horizon: SimTime) -> Self {
        Self {
            tariffs: Vec::new(),
            accounts: Vec::new(),
            vouchers: Vec::new(),
            policy: CountermeasurePolicy::OFF,
            channel_capacity: Capacity::Unlimited,
            workload: WorkloadSpec::default(),
            topups: Vec::new(),
            transfers: Vec::new(),
            horizon,
            call_lines: Vec::new(),
        }
    }

    /// Replaces the random workload seed, if there is a random workload.
    pub fn override_seed(&mut self, seed: u64) {
        if let Some(random) = &mut self.workload.random {
            random.seed = seed;
        }
    }

    pub fn seed(&self) -> Option<u64> {
        self.workload.random.as_ref().map(|r| r.seed)
    }

    /// Calls (by source line) whose scheme is left to the runner.
    pub fn unassigned_scheme_lines(&self) -> Vec<usize> {
        let mut lines: Vec<usize> = self
            .workload
            .scripted_calls
            .iter()
            .enumerate()
            .filter(|(_, c)| c.scheme.is_none())
            .map(|(i, _)| self.call_lines.get(i).copied().unwrap_or(0))
            .collect();
        if self
            .workload
            .random
            .as_ref()
            .is_some_and(|r| r.schemes.is_empty())
        {
            lines.push(0);
        }
        lines
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    /// 1-based; 0 for whole-file problems.
    pub line: usize,
    /// 1-based; 0 when not tied to a token.
    pub column: usize,
    pub message: String,
}

impl Diagnostic {
    fn new(line: usize, column: usize, message: impl Into<String>) -> Self {
        Self {
            line,
            column,
            message: message.into(),
        }
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.line, self.column) {
            (0, _) => write!(f, "error: {}", self.message),
            (l, 0) => write!(f, "line {l}: error: {}", self.message),
            (l, c) => write!(f, "line {l}, column {c}: error: {}", self.message),
        }
    }
}

#[derive(Clone, Copy)]
struct Token<'a> {
    text: &'a str,
    column: usize,
}

fn tokenize(line: &str) -> Vec<Token<'_>> {
    let content = line.split('#').next().unwrap_or("");
    let mut tokens = Vec::new();
    let mut start = None;
    for (i, ch) in content.char_indices() {
        match (ch.is_whitespace(), start) {
            (false, None) => start = Some(i),
            (true, Some(s)) => {
                tokens.push(Token {
                    text: &content[s..i],
                    column: s + 1,
                });
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        tokens.push(Token {
            text: &content[s..],
            column: s + 1,
        });
    }
    tokens
}

/// A reference to something defined elsewhere in the file, checked after parsing.
struct Reference {
    line: usize,
    column: usize,
    kind: &'static str,
    name: String,
}

#[derive(Default)]
struct Parser {
    diagnostics: Vec<Diagnostic>,
    tariffs: Vec<TariffPlan>,
    accounts: Vec<AccountSpec>,
    vouchers: Vec<(VoucherCode, Money)>,
    policy: Option<CountermeasurePolicy>,
    capacity: Option<Capacity>,
    calls: Vec<ScriptedCall>,
    call_lines: Vec<usize>,
    topups: Vec<ScheduledTopUp>,
    transfers: Vec<ScheduledTransfer>,
    random: Option<(usize, RandomWorkload)>,
    horizon: Option<(usize, SimTime)>,
    tariff_refs: Vec<Reference>,
    account_refs: Vec<Reference>,
    timed: Vec<(usize, usize, SimTime)>,
}

type LineResult<T> = Result<T, Diagnostic>;

impl Parser {
    fn arity(
        line: usize,
        head: &Token,
        args: &[Token],
        expected: &[usize],
        usage: &str,
    ) -> LineResult<()> {
        if expected.contains(&args.len()) {
            Ok(())
        } else {
            Err(Diagnostic::new(
                line,
                head.column,
                format!("`{}` expects: {usage}", head.text),
            ))
        }
    }

    fn number<T: std::str::FromStr>(line: usize, tok: &Token, what: &str) -> LineResult<T> {
        tok.text.parse().map_err(|_| {
            Diagnostic::new(line, tok.column, format!("invalid {what} `{}`", tok.text))
        })
    }

    fn money(line: usize, tok: &Token, what: &str) -> LineResult<Money> {
        Self::number::<i64>(line, tok, what).map(Money::from_minor)
    }

    fn field<'a>(line: usize, tok: &Token<'a>, what: &str) -> LineResult<&'a str> {
        if tok.text.contains(',') {
            Err(Diagnostic::new(
                line,
                tok.column,
                format!("{what} must not contain commas"),
            ))
        } else {
            Ok(tok.text)
        }
    }

    fn optional_id(line: usize, tok: &Token) -> LineResult<Option<String>> {
        match tok.text {
            "-" => Ok(None),
            _ => Self::field(line, tok, "ID number").map(|s| Some(s.to_owned())),
        }
    }

    fn account_ref(&mut self, line: usize, tok: &Token) {
        self.account_refs.push(Reference {
            line,
            column: tok.column,
            kind: "account",
            name: tok.text.to_owned(),
        });
    }

    fn directive(&mut self, line: usize, tokens: &[Token]) -> LineResult<()> {
        let head = &tokens[0];
        let args = &tokens[1..];
        match head.text {
            "tariff" => {
                Self::arity(
                    line,
                    head,
                    args,
                    &[4],
                    "tariff ID VOICE_RATE INCREMENT_S DATA_RATE",
                )?;
                let id = Self::field(line, &args[0], "tariff ID")?;
                let voice = Self::money(line, &args[1], "voice rate")?;
                let increment = Self::number::<u64>(line, &args[2], "increment")?;
                let data = Self::money(line, &args[3], "data rate")?;
                if self.tariffs.iter().any(|t| t.plan_id() == id) {
                    return Err(Diagnostic::new(
                        line,
                        args[0].column,
                        format!("duplicate tariff `{id}`"),
                    ));
                }
                let plan = TariffPlan::new(id, voice, increment, data)
                    .map_err(|e| Diagnostic::new(line, args[1].column, e.to_string()))?;
                self.tariffs.push(plan);
            }
            "account" => {
                Self::arity(
                    line,
                    head,
                    args,
                    &[5],
                    "account MSISDN IMSI ID_NUMBER|- BALANCE TARIFF_ID",
                )?;
                let msisdn = Self::field(line, &args[0], "MSISDN")?;
                let imsi = Self::field(line, &args[1], "IMSI")?;
                let id_number = Self::optional_id(line, &args[2])?;
                let balance = Self::money(line, &args[3], "balance")?;
                let tariff_id = Self::field(line, &args[4], "tariff ID")?;
                if self.accounts.iter().any(|a| a.subscriber.msisdn == msisdn) {
                    return Err(Diagnostic::new(
                        line,
                        args[0].column,
                        format!("duplicate MSISDN `{msisdn}`"),
                    ));
                }
                if self.accounts.iter().any(|a| a.subscriber.imsi == imsi) {
                    return Err(Diagnostic::new(
                        line,
                        args[1].column,
                        format!("duplicate IMSI `{imsi}`"),
                    ));
                }
                self.tariff_refs.push(Reference {
                    line,
                    column: args[4].column,
                    kind: "tariff",
                    name: tariff_id.to_owned(),
                });
                self.accounts.push(AccountSpec {
                    subscriber: SubscriberRecord {
                        msisdn: msisdn.to_owned(),
                        imsi: imsi.to_owned(),
                        id_verified: id_number.is_some(),
                        id_number,
                    },
                    initial_balance: balance,
                    tariff_id: tariff_id.to_owned(),
                });
            }
            "policy" => {
                Self::arity(line, head, args, &[2], "policy id_required on|off")?;
                if args[0].text != "id_required" {
                    return Err(Diagnostic::new(
                        line,
                        args[0].column,
                        format!("unknown policy `{}`", args[0].text),
                    ));
                }
                let id_required = match args[1].text {
                    "on" => true,
                    "off" => false,
                    other => {
                        return Err(Diagnostic::new(
                            line,
                            args[1].column,
                            format!("expected on or off, got `{other}`"),
                        ))
                    }
                };
                if self
                    .policy
                    .replace(CountermeasurePolicy { id_required })
                    .is_some()
                {
                    return Err(Diagnostic::new(
                        line,
                        head.column,
                        "duplicate `policy` directive",
                    ));
                }
            }
            "channels" => {
                Self::arity(line, head, args, &[1], "channels N|unlimited")?;
                let capacity = match args[0].text {
                    "unlimited" => Capacity::Unlimited,
                    _ => Capacity::Limited(Self::number(line, &args[0], "channel count")?),
                };
                if self.capacity.replace(capacity).is_some() {
                    return Err(Diagnostic::new(
                        line,
                        head.column,
                        "duplicate `channels` directive",
                    ));
                }
            }
            "call" => {
                Self::arity(
                    line,
                    head,
                    args,
                    &[4, 5],
                    "call T FROM TO DURATION [SCHEME]",
                )?;
                let time = Self::number(line, &args[0], "time")?;
                let caller = Self::field(line, &args[1], "caller")?;
                let callee = Self::field(line, &args[2], "callee")?;
                let duration = Self::number(line, &args[3], "duration")?;
                let scheme = match args.get(4) {
                    Some(tok) => Some(
                        tok.text
                            .parse::<SchemeKind>()
                            .map_err(|e| Diagnostic::new(line, tok.column, e.to_string()))?,
                    ),
                    None => None,
                };
                self.account_ref(line, &args[1]);
                self.timed.push((line, args[0].column, time));
                self.calls.push(ScriptedCall {
                    start_time: time,
                    caller: caller.to_owned(),
                    callee: callee.to_owned(),
                    duration,
                    scheme,
                });
                self.call_lines.push(line);
            }
            "topup" => {
                Self::arity(
                    line,
                    head,
                    args,
                    &[5],
                    "topup T CHANNEL MSISDN AMOUNT|VOUCHER_CODE ID|-",
                )?;
                let time = Self::number(line, &args[0], "time")?;
                let channel: TopUpChannel = args[1]
                    .text
                    .parse()
                    .map_err(|e: String| Diagnostic::new(line, args[1].column, e))?;
                let target = Self::field(line, &args[2], "MSISDN")?;
                let presented_id = Self::optional_id(line, &args[4])?;
                let request = if channel == TopUpChannel::Voucher {
                    VoucherCode::parse(args[3].text)
                        .map_err(|e| Diagnostic::new(line, args[3].column, e.to_string()))?;
                    TopUpRequest {
                        channel,
                        target_msisdn: target.to_owned(),
                        voucher_code: Some(args[3].text.to_owned()),
                        amount: None,
                        presented_id,
                    }
                } else {
                    TopUpRequest {
                        channel,
                        target_msisdn: target.to_owned(),
                        voucher_code: None,
                        amount: Some(Self::money(line, &args[3], "amount")?),
                        presented_id,
                    }
                };
                self.account_ref(line, &args[2]);
                self.timed.push((line, args[0].column, time));
                self.topups.push(ScheduledTopUp { time, request });
            }
            "transfer" => {
                Self::arity(line, head, args, &[5], "transfer T FROM TO AMOUNT ID|-")?;
                let time = Self::number(line, &args[0], "time")?;
                let from = Self::field(line, &args[1], "sender")?;
                let to = Self::field(line, &args[2], "receiver")?;
                let amount = Self::money(line, &args[3], "amount")?;
                let presented_id = Self::optional_id(line, &args[4])?;
                self.account_ref(line, &args[1]);
                self.account_ref(line, &args[2]);
                self.timed.push((line, args[0].column, time));
                self.transfers.push(ScheduledTransfer {
                    time,
                    request: TransferRequest {
                        from_msisdn: from.to_owned(),
                        to_msisdn: to.to_owned(),
                        amount,
                        presented_id,
                    },
                });
            }
            "voucher" => {
                Self::arity(line, head, args, &[2], "voucher CODE FACE_VALUE")?;
                let code = VoucherCode::parse(args[0].text)
                    .map_err(|e| Diagnostic::new(line, args[0].column, e.to_string()))?;
                let face = Self::money(line, &args[1], "face value")?;
                if !face.is_positive() {
                    return Err(Diagnostic::new(
                        line,
                        args[1].column,
                        "face value must be positive",
                    ));
                }
                if self.vouchers.iter().any(|(c, _)| *c == code) {
                    return Err(Diagnostic::new(
                        line,
                        args[0].column,
                        format!("duplicate voucher `{code}`"),
                    ));
                }
                self.vouchers.push((code, face));
            }
            "random" => self.random_directive(line, head, args)?,
            "horizon" => {
                Self::arity(line, head, args, &[1], "horizon T")?;
                let t: SimTime = Self::number(line, &args[0], "horizon")?;
                if t == 0 {
                    return Err(Diagnostic::new(
                        line,
                        args[0].column,
                        "horizon must be positive",
                    ));
                }
                if self.horizon.replace((line, t)).is_some() {
                    return Err(Diagnostic::new(
                        line,
                        head.column,
                        "duplicate `horizon` directive",
                    ));
                }
            }
            other => {
                return Err(Diagnostic::new(
                    line,
                    head.column,
                    format!("unknown directive `{other}`"),
                ))
            }
        }
        Ok(())
    }

    fn random_directive(&mut self, line: usize, head: &Token, args: &[Token]) -> LineResult<()> {
        let usage = "random seed=S rate=R mean_duration=D [schemes=LIST]";
        let mut seed = None;
        let mut rate = None;
        let mut mean = None;
        let mut schemes = Vec::new();
        for tok in args {
            let Some((key, value)) = tok.text.split_once('=') else {
                return Err(Diagnostic::new(
                    line,
                    tok.column,
                    format!("expected key=value, got `{}`", tok.text),
                ));
            };
            let value_tok = Token {
                text: value,
                column: tok.column + key.len() + 1,
            };
            match key {
                "seed" => seed = Some(Self::number::<u64>(line, &value_tok, "seed")?),
                "rate" => rate = Some(Self::number::<f64>(line, &value_tok, "rate")?),
                "mean_duration" => {
                    mean = Some(Self::number::<f64>(line, &value_tok, "mean duration")?)
                }
                "schemes" => {
                    for name in value.split(',') {
                        schemes.push(
                            name.parse::<SchemeKind>().map_err(|e| {
                                Diagnostic::new(line, value_tok.column, e.to_string())
                            })?,
                        );
                    }
                }
                _ => {
                    return Err(Diagnostic::new(
                        line,
                        tok.column,
                        format!("unknown random parameter `{key}`"),
                    ))
                }
            }
        }
        let (Some(seed), Some(rate), Some(mean)) = (seed, rate, mean) else {
            return Err(Diagnostic::new(
                line,
                head.column,
                format!("`random` expects: {usage}"),
            ));
        };
        if !(rate.is_finite() && rate > 0.0) {
            return Err(Diagnostic::new(line, head.column, "rate must be positive"));
        }
        if !(mean.is_finite() && mean >= 0.0) {
            return Err(Diagnostic::new(
                line,
                head.column,
                "mean_duration must be non-negative",
            ));
        }
        if self.random.is_some() {
            return Err(Diagnostic::new(
                line,
                head.column,
                "duplicate `random` directive",
            ));
        }
        self.random = Some((
            line,
            RandomWorkload {
                seed,
                arrival_rate: rate,
                mean_duration: mean,
                horizon: 0,
                account_universe: Vec::new(),
                schemes,
            },
        ));
        Ok(())
    }

    fn finish(mut self) -> Result<Scenario, Vec<Diagnostic>> {
        let tariff_ids: HashSet<&str> = self.tariffs.iter().map(|t| t.plan_id()).collect();
        let msisdns: HashSet<&str> = self
            .accounts
            .iter()
            .map(|a| a.subscriber.msisdn.as_str())
            .collect();
        let mut late = Vec::new();
        for r in self.tariff_refs.iter().chain(self.account_refs.iter()) {
            let known = match r.kind {
                "tariff" => tariff_ids.contains(r.name.as_str()),
                _ => msisdns.contains(r.name.as_str()),
            };
            if !known {
                late.push(Diagnostic::new(
                    r.line,
                    r.column,
                    format!("undefined {} `{}`", r.kind, r.name),
                ));
            }
        }
        self.diagnostics.extend(late);

        let horizon = match self.horizon {
            Some((_, h)) => h,
            None => {
                self.diagnostics
                    .push(Diagnostic::new(0, 0, "missing horizon"));
                0
            }
        };
        if horizon > 0 {
            for &(line, column, t) in &self.timed {
                if t > horizon {
                    self.diagnostics.push(Diagnostic::new(
                        line,
                        column,
                        format!("time {t} is after the horizon ({horizon})"),
                    ));
                }
            }
        }
        if let Some((line, _)) = &self.random {
            if self.accounts.is_empty() {
                self.diagnostics.push(Diagnostic::new(
                    *line,
                    1,
                    "random workload needs at least one account",
                ));
            }
        }
        if !self.diagnostics.is_empty() {
            self.diagnostics.sort_by_key(|d| (d.line, d.column));
            return Err(self.diagnostics);
        }

        let random = self.random.map(|(_, mut r)| {
            r.horizon = horizon;
            r.account_universe = self
                .accounts
                .iter()
                .map(|a| a.subscriber.msisdn.clone())
                .collect();
            r
        });
        Ok(Scenario {
            tariffs: self.tariffs,
            accounts: self.accounts,
            vouchers: self.vouchers,
            policy: self.policy.unwrap_or_default(),
            channel_capacity: self.capacity.unwrap_or_default(),
            workload: WorkloadSpec {
                scripted_calls: self.calls,
                random,
            },
            topups: self.topups,
            transfers: self.transfers,
            horizon,
            call_lines: self.call_lines,
        })
    }
}

/// Parses a scenario, collecting every diagnostic rather than stopping at the first.
pub fn parse_scenario(text: &str) -> Result<Scenario, Vec<Diagnostic>> {
    let mut parser = Parser::default();
    for (idx, raw) in text.lines().enumerate() {
        let tokens = tokenize(raw);
        if tokens.is_empty() {
            continue;
        }
        if let Err(d) = parser.directive(idx + 1, &tokens) {
            parser.diagnostics.push(d);
        }
    }
    parser.finish()
}

/// Referential checks on a scenario built in code (the parser already does these).
pub fn validate_scenario(scenario: &Scenario) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    let tariffs: HashMap<&str, ()> = scenario.tariffs.iter().map(|t| (t.plan_id(), ())).collect();
    let accounts: HashSet<&str> = scenario
        .accounts
        .iter()
        .map(|a| a.subscriber.msisdn.as_str())
        .collect();
    if scenario.horizon == 0 {
        out.push(Diagnostic::new(0, 0, "horizon must be positive"));
    }
    for a in &scenario.accounts {
        if !tariffs.contains_key(a.tariff_id.as_str()) {
            out.push(Diagnostic::new(
                0,
                0,
                format!(
                    "account {} uses undefined tariff `{}`",
                    a.subscriber.msisdn, a.tariff_id
                ),
            ));
        }
    }
    for (i, c) in scenario.workload.scripted_calls.iter().enumerate() {
        if !accounts.contains(c.caller.as_str()) {
            let line = scenario.call_lines.get(i).copied().unwrap_or(0);
            out.push(Diagnostic::new(
                line,
                0,
                format!("call from undefined account `{}`", c.caller),
            ));
        }
    }
    for t in &scenario.topups {
        if !accounts.contains(t.request.target_msisdn.as_str()) {
            out.push(Diagnostic::new(
                0,
                0,
                format!("top-up for undefined account `{}`", t.request.target_msisdn),
            ));
        }
    }
    for t in &scenario.transfers {
        for m in [&t.request.from_msisdn, &t.request.to_msisdn] {
            if !accounts.contains(m.as_str()) {
                out.push(Diagnostic::new(
                    0,
                    0,
                    format!("transfer names undefined account `{m}`"),
                ));
            }
        }
    }
    out
}
