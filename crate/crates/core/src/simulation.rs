//! The event loop: runs a scenario's workload, top-ups, and transfers
//! through one or all charging schemes and collects the results.

use std::collections::{BTreeMap, HashMap, HashSet};

use thiserror::Error;

use crate::account::{LedgerKind, PrepaidAccount, TariffPlan};
use crate::cdr::{export_cdr_csv, CallDetailRecord};
use crate::engine::{
    generate_workload, ChannelKind, ChannelPool, EventHandle, EventQueue, ScriptedCall, SimEvent,
    WorkloadError,
};
use crate::money::Money;
use crate::rating::rate_voice_cost;
use crate::scenario::{validate_scenario, Diagnostic, Scenario};
use crate::schemes::{
    handset_connect, handset_release, handset_tick_decrement, hot_billing_connect,
    hot_billing_post_charge, hot_billing_release, in_authorize_and_connect, in_low_balance_notice,
    in_release_and_charge, reject_busy, service_node_connect, service_node_release_and_charge,
    CallSession, Element, Envelope, MobileStationState, NetworkFabric, Rejection, SchemeKind,
    SessionState, TerminationReason, TickOutcome,
};
use crate::topup::{
    audit_anonymous_activity, voucher_totals, CountermeasurePolicy, FraudAuditReport, Operation,
    Registry, RegistryError, TopUpError,
};
use crate::SimTime;

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RunOptions {
    /// Forces every call onto one scheme.
    pub scheme_override: Option<SchemeKind>,
    pub policy_override: Option<CountermeasurePolicy>,
    /// Seconds between a hot-billing call ending and its CDR being charged.
    pub cdr_latency: SimTime,
    pub record_trace: bool,
    /// MSISDNs whose SIMs skip every decrement.
    pub tampered_sims: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SetupError {
    #[error("scenario has {} problem(s)", .0.len())]
    Invalid(Vec<Diagnostic>),
    #[error("no charging scheme for call on line {line}; give one or pass a scheme override")]
    MissingScheme { line: usize },
    #[error(transparent)]
    Registry(#[from] RegistryError),
    #[error(transparent)]
    Workload(#[from] WorkloadError),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceRecord {
    pub time: SimTime,
    pub envelope: Envelope,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SchemeStats {
    pub attempts: usize,
    pub connected: usize,
    pub rejected: BTreeMap<Rejection, usize>,
    pub revenue: Money,
    pub billed_seconds: u64,
}

impl SchemeStats {
    pub fn rejected_total(&self) -> usize {
        self.rejected.values().sum()
    }
}

/// Handset-based call: what the SIM took against what the tariff says.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HandsetReconciliation {
    pub session_id: String,
    pub msisdn: String,
    pub expected: Money,
    pub collected: Money,
    pub tampered: bool,
}

impl HandsetReconciliation {
    pub fn shortfall(&self) -> Money {
        self.expected - self.collected
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Timer {
    TopUp(usize),
    Transfer(usize),
    CallAttempt(usize),
    Hangup(usize),
    Countdown(usize),
    LowBalance(usize),
    HandsetTick(usize),
    CdrArrival(usize),
}

#[derive(Debug, Default)]
struct Runtime {
    account: usize,
    tariff: usize,
    timers: Vec<EventHandle>,
    collected: Money,
    pending_cdr: Option<CallDetailRecord>,
}

struct World<'a> {
    scenario: &'a Scenario,
    calls: Vec<ScriptedCall>,
    options: &'a RunOptions,
    policy: CountermeasurePolicy,
    tariffs: Vec<TariffPlan>,
    account_tariff: Vec<usize>,
    registry: Registry,
    stations: Vec<MobileStationState>,
    net: NetworkFabric,
    sessions: Vec<CallSession>,
    runtime: Vec<Runtime>,
    busy: Vec<Option<usize>>,
    cdrs: Vec<CallDetailRecord>,
    trace: Vec<TraceRecord>,
    stats: BTreeMap<SchemeKind, SchemeStats>,
    reconciliation: Vec<HandsetReconciliation>,
}

impl World<'_> {
    fn handle(&mut self, q: &mut EventQueue<Timer>, ev: SimEvent<Timer>) {
        let now = ev.fire_time;
        match ev.payload {
            Timer::TopUp(i) => self.top_up(i, now),
            Timer::Transfer(i) => self.transfer(i, now),
            Timer::CallAttempt(i) => self.attempt(q, i, now),
            Timer::Hangup(s) => self.release(q, s, now, TerminationReason::CallerHangup),
            Timer::Countdown(s) => self.release(q, s, now, TerminationReason::BalanceExhausted),
            Timer::LowBalance(s) => {
                let inc = self.tariffs[self.runtime[s].tariff].increment_seconds();
                in_low_balance_notice(&self.sessions[s], &mut self.net, inc);
            }
            Timer::HandsetTick(s) => self.tick(q, s, now),
            Timer::CdrArrival(s) => self.post_hot_billing(s, now),
        }
        let trace = &mut self.trace;
        let record = self.options.record_trace;
        for envelope in self.net.drain() {
            if record {
                trace.push(TraceRecord {
                    time: now,
                    envelope,
                });
            }
        }
    }

    fn connected_session(&self, account: usize) -> Option<&CallSession> {
        self.busy[account]
            .map(|s| &self.sessions[s])
            .filter(|s| s.state == SessionState::Connected)
    }

    /// Top-ups and transfers wait for real-time network calls to finish.
    fn blocks_balance_change(&self, account: usize) -> bool {
        self.connected_session(account).is_some_and(|s| {
            matches!(
                s.scheme,
                SchemeKind::IntelligentNetwork | SchemeKind::ServiceNode
            )
        })
    }

    /// Keeps the SIM in step with credits landing mid-call.
    fn mirror_to_sim(&mut self, account: usize, before: Money) {
        if self
            .connected_session(account)
            .is_some_and(|s| s.scheme == SchemeKind::Handset)
        {
            let delta = self.registry.account(account).balance() - before;
            self.stations[account].sim_balance += delta;
        }
    }

    fn top_up(&mut self, i: usize, now: SimTime) {
        let req = &self.scenario.topups[i].request;
        let Some(a) = self.registry.find_msisdn(&req.target_msisdn) else {
            let _ = self.registry.top_up(req, self.policy, now);
            return;
        };
        if self.blocks_balance_change(a) {
            let amount = req.amount.or_else(|| {
                req.voucher_code
                    .as_deref()
                    .and_then(|c| self.registry.voucher(c))
                    .map(|v| v.face_value)
            });
            self.registry.record_rejection(
                now,
                Operation::TopUp(req.channel),
                &req.target_msisdn,
                amount,
                req.presented_id.as_deref(),
                TopUpError::CallInProgress,
            );
            return;
        }
        let before = self.registry.account(a).balance();
        if self.registry.top_up(req, self.policy, now).is_ok() {
            self.mirror_to_sim(a, before);
        }
    }

    fn transfer(&mut self, i: usize, now: SimTime) {
        let req = &self.scenario.transfers[i].request;
        let from = self.registry.find_msisdn(&req.from_msisdn);
        let to = self.registry.find_msisdn(&req.to_msisdn);
        if [from, to]
            .into_iter()
            .flatten()
            .any(|a| self.blocks_balance_change(a))
        {
            self.registry.record_rejection(
                now,
                Operation::Transfer {
                    to: req.to_msisdn.clone(),
                },
                &req.from_msisdn,
                Some(req.amount),
                req.presented_id.as_deref(),
                TopUpError::CallInProgress,
            );
            return;
        }
        let before: Vec<(usize, Money)> = [from, to]
            .into_iter()
            .flatten()
            .map(|a| (a, self.registry.account(a).balance()))
            .collect();
        if self.registry.transfer_credit(req, self.policy, now).is_ok() {
            for (a, b) in before {
                self.mirror_to_sim(a, b);
            }
        }
    }

    fn attempt(&mut self, q: &mut EventQueue<Timer>, i: usize, now: SimTime) {
        let call = &self.calls[i];
        let scheme = self
            .options
            .scheme_override
            .or(call.scheme)
            .expect("schemes are checked before the run");
        let a = self
            .registry
            .find_msisdn(&call.caller)
            .expect("callers are checked before the run");
        let t = self.account_tariff[a];
        let tariff = &self.tariffs[t];
        let sid = format!("S{:06}", i + 1);
        let mut session = CallSession::new(
            sid,
            scheme,
            self.registry.account(a),
            &call.callee,
            call.duration,
            now,
        );
        let duration = call.duration;
        let stats = self.stats.entry(scheme).or_default();
        stats.attempts += 1;

        let outcome = if self.busy[a].is_some() {
            Err(reject_busy(&mut session, &mut self.net))
        } else {
            let account = self.registry.account(a);
            match scheme {
                SchemeKind::IntelligentNetwork => {
                    in_authorize_and_connect(&mut session, account, tariff, &mut self.net, now)
                        .map(Some)
                }
                SchemeKind::ServiceNode => {
                    service_node_connect(&mut session, account, tariff, &mut self.net, now)
                        .map(Some)
                }
                SchemeKind::HotBilling => {
                    let hlr = self
                        .registry
                        .find_imsi(&session.caller_imsi)
                        .map(|x| self.registry.account(x));
                    hot_billing_connect(&mut session, hlr, &mut self.net, now).map(|_| None)
                }
                SchemeKind::Handset => {
                    let ms = &mut self.stations[a];
                    ms.sim_balance = account.balance();
                    handset_connect(&mut session, account, tariff, ms, &mut self.net, now)
                        .map(|_| None)
                }
            }
        };

        let s = self.sessions.len();
        let mut runtime = Runtime {
            account: a,
            tariff: t,
            ..Runtime::default()
        };
        match outcome {
            Err(reason) => {
                *stats.rejected.entry(reason).or_default() += 1;
            }
            Ok(countdown) => {
                stats.connected += 1;
                self.busy[a] = Some(s);
                runtime
                    .timers
                    .push(q.schedule_in(duration, Timer::Hangup(s)));
                if let Some(c) = countdown {
                    if let Some(_at) = now.checked_add(c) {
                        runtime.timers.push(q.schedule_in(c, Timer::Countdown(s)));
                    }
                    let inc = tariff.increment_seconds();
                    if scheme == SchemeKind::IntelligentNetwork && c > inc && c - inc < duration {
                        runtime
                            .timers
                            .push(q.schedule_in(c - inc, Timer::LowBalance(s)));
                    }
                }
                if scheme == SchemeKind::Handset {
                    runtime.timers.push(q.schedule_in(0, Timer::HandsetTick(s)));
                }
            }
        }
        self.sessions.push(session);
        self.runtime.push(runtime);
    }

    fn tick(&mut self, q: &mut EventQueue<Timer>, s: usize, now: SimTime) {
        let a = self.runtime[s].account;
        let inc = self.tariffs[self.runtime[s].tariff].increment_seconds();
        match handset_tick_decrement(&self.sessions[s], &mut self.stations[a], &mut self.net) {
            TickOutcome::Decremented(amount) => {
                let sid = &self.sessions[s].session_id;
                self.registry
                    .account_mut(a)
                    .apply_charge(amount, sid, false, now)
                    .unwrap_or_else(|e| panic!("SIM and account diverged on {sid}: {e}"));
                self.runtime[s].collected += amount;
                let h = q.schedule_in(inc, Timer::HandsetTick(s));
                self.runtime[s].timers.push(h);
            }
            TickOutcome::Skipped => {
                let h = q.schedule_in(inc, Timer::HandsetTick(s));
                self.runtime[s].timers.push(h);
            }
            TickOutcome::Exhausted => self.release(q, s, now, TerminationReason::BalanceExhausted),
        }
    }

    fn release(
        &mut self,
        q: &mut EventQueue<Timer>,
        s: usize,
        now: SimTime,
        reason: TerminationReason,
    ) {
        for h in self.runtime[s].timers.drain(..) {
            q.cancel(h);
        }
        let a = self.runtime[s].account;
        let tariff = &self.tariffs[self.runtime[s].tariff];
        let session = &mut self.sessions[s];
        let scheme = session.scheme;
        let record_id = format!("CDR{:08}", self.cdrs.len() + 1);
        let stats = self.stats.entry(scheme).or_default();
        match scheme {
            SchemeKind::IntelligentNetwork | SchemeKind::ServiceNode => {
                let account = self.registry.account_mut(a);
                let charged = if scheme == SchemeKind::IntelligentNetwork {
                    in_release_and_charge(session, account, tariff, &mut self.net, now, reason)
                } else {
                    service_node_release_and_charge(
                        session,
                        account,
                        tariff,
                        &mut self.net,
                        now,
                        reason,
                    )
                };
                stats.revenue += charged.cost;
                self.cdrs
                    .push(CallDetailRecord::for_session(&record_id, session, tariff));
                self.busy[a] = None;
            }
            SchemeKind::Handset => {
                handset_release(session, &mut self.stations[a], &mut self.net, now, reason);
                let record = CallDetailRecord::for_session(&record_id, session, tariff);
                let collected = self.runtime[s].collected;
                stats.revenue += collected;
                self.reconciliation.push(HandsetReconciliation {
                    session_id: session.session_id.clone(),
                    msisdn: session.caller_msisdn.clone(),
                    expected: record.cost,
                    collected,
                    tampered: self.stations[a].tampered,
                });
                self.cdrs.push(record);
                self.busy[a] = None;
            }
            SchemeKind::HotBilling => {
                let record =
                    hot_billing_release(session, tariff, &mut self.net, now, reason, &record_id);
                self.cdrs.push(record.clone());
                self.runtime[s].pending_cdr = Some(record);
                if self.options.cdr_latency == 0 {
                    self.post_hot_billing(s, now);
                } else {
                    let h = q.schedule_in(self.options.cdr_latency, Timer::CdrArrival(s));
                    self.runtime[s].timers.push(h);
                }
            }
        }
        self.stats.entry(scheme).or_default().billed_seconds += self.sessions[s].billed_duration;
    }

    fn post_hot_billing(&mut self, s: usize, now: SimTime) {
        let a = self.runtime[s].account;
        let record = self.runtime[s]
            .pending_cdr
            .take()
            .expect("one CDR per hot-billing call");
        let charged =
            hot_billing_post_charge(&record, self.registry.account_mut(a), &mut self.net, now);
        self.stats
            .entry(SchemeKind::HotBilling)
            .or_default()
            .revenue += charged.cost;
        self.busy[a] = None;
    }
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub registry: Registry,
    pub tariffs: Vec<TariffPlan>,
    pub sessions: Vec<CallSession>,
    pub cdrs: Vec<CallDetailRecord>,
    pub trace: Vec<TraceRecord>,
    pub pool: ChannelPool,
    pub policy: CountermeasurePolicy,
    pub horizon: SimTime,
    pub final_clock: SimTime,
    pub events_processed: u64,
    pub scheme_stats: BTreeMap<SchemeKind, SchemeStats>,
    pub reconciliation: Vec<HandsetReconciliation>,
}

fn setup_registry(
    scenario: &Scenario,
) -> Result<(Registry, Vec<TariffPlan>, Vec<usize>), SetupError> {
    let index: HashMap<&str, usize> = scenario
        .tariffs
        .iter()
        .enumerate()
        .map(|(i, t)| (t.plan_id(), i))
        .collect();
    let mut registry = Registry::new();
    let mut account_tariff = Vec::with_capacity(scenario.accounts.len());
    for spec in &scenario.accounts {
        let account = PrepaidAccount::open(
            spec.subscriber.clone(),
            spec.initial_balance,
            &spec.tariff_id,
        );
        registry.register(account)?;
        account_tariff.push(index[spec.tariff_id.as_str()]);
    }
    for (code, face) in &scenario.vouchers {
        registry.issue_voucher(code.clone(), *face)?;
    }
    Ok((registry, scenario.tariffs.clone(), account_tariff))
}

/// Runs a scenario to the horizon, then lets calls still in progress finish.
pub fn run_scenario(scenario: &Scenario, options: &RunOptions) -> Result<RunOutcome, SetupError> {
    let problems = validate_scenario(scenario);
    if !problems.is_empty() {
        return Err(SetupError::Invalid(problems));
    }
    if options.scheme_override.is_none() {
        if let Some(&line) = scenario.unassigned_scheme_lines().first() {
            return Err(SetupError::MissingScheme { line });
        }
    }
    let calls = generate_workload(&scenario.workload)?;
    let (registry, tariffs, account_tariff) = setup_registry(scenario)?;
    let tampered: HashSet<&str> = options.tampered_sims.iter().map(String::as_str).collect();
    let stations = registry
        .accounts()
        .iter()
        .map(|a| {
            let mut ms = MobileStationState::new(a.imsi(), a.balance());
            ms.tampered = tampered.contains(a.msisdn());
            ms
        })
        .collect();
    let n_accounts = registry.accounts().len();
    let mut world = World {
        scenario,
        calls,
        options,
        policy: options.policy_override.unwrap_or(scenario.policy),
        tariffs,
        account_tariff,
        registry,
        stations,
        net: NetworkFabric::new(ChannelPool::new(scenario.channel_capacity)),
        sessions: Vec::new(),
        runtime: Vec::new(),
        busy: vec![None; n_accounts],
        cdrs: Vec::new(),
        trace: Vec::new(),
        stats: BTreeMap::new(),
        reconciliation: Vec::new(),
    };

    let mut queue = EventQueue::new();
    let horizon = scenario.horizon;
    let mut initial: Vec<(SimTime, Timer)> = Vec::new();
    initial.extend(
        scenario
            .topups
            .iter()
            .enumerate()
            .map(|(i, t)| (t.time, Timer::TopUp(i))),
    );
    initial.extend(
        scenario
            .transfers
            .iter()
            .enumerate()
            .map(|(i, t)| (t.time, Timer::Transfer(i))),
    );
    initial.extend(
        world
            .calls
            .iter()
            .enumerate()
            .map(|(i, c)| (c.start_time, Timer::CallAttempt(i))),
    );
    initial.retain(|(t, _)| *t <= horizon);
    initial.sort_by_key(|(t, _)| *t);
    for (t, timer) in initial {
        queue.schedule(t, timer).expect("queue starts at time zero");
    }

    queue.run_until(horizon, |q, ev| world.handle(q, ev));
    queue.run_to_completion(|q, ev| world.handle(q, ev));

    Ok(RunOutcome {
        registry: world.registry,
        tariffs: world.tariffs,
        sessions: world.sessions,
        cdrs: world.cdrs,
        trace: world.trace,
        pool: world.net.pool,
        policy: world.policy,
        horizon,
        final_clock: queue.now(),
        events_processed: queue.processed(),
        scheme_stats: world.stats,
        reconciliation: world.reconciliation,
    })
}

impl RunOutcome {
    pub fn total_revenue(&self) -> Money {
        -self.ledger_total(LedgerKind::Charge)
    }

    fn ledger_total(&self, kind: LedgerKind) -> Money {
        self.registry
            .accounts()
            .iter()
            .flat_map(|a| a.ledger())
            .filter(|e| e.kind == kind)
            .map(|e| e.amount)
            .sum()
    }

    pub fn total_topups(&self) -> Money {
        self.ledger_total(LedgerKind::TopUp)
    }

    /// Total credit extended past zero: the sum of negative final balances.
    pub fn credit_exposure(&self) -> Money {
        self.registry
            .accounts()
            .iter()
            .map(|a| a.balance())
            .filter(|b| b.is_negative())
            .map(|b| -b)
            .sum()
    }

    pub fn suspended_accounts(&self) -> usize {
        self.registry
            .accounts()
            .iter()
            .filter(|a| !a.is_active())
            .count()
    }

    pub fn rejected_calls(&self) -> usize {
        self.scheme_stats
            .values()
            .map(SchemeStats::rejected_total)
            .sum()
    }

    pub fn connected_calls(&self) -> usize {
        self.scheme_stats.values().map(|s| s.connected).sum()
    }

    pub fn audit(&self) -> FraudAuditReport {
        audit_anonymous_activity(&self.registry, self.policy)
    }

    pub fn cdr_csv(&self) -> String {
        export_cdr_csv(&self.cdrs)
    }

    /// Every invariant the run must satisfy; empty when all hold.
    pub fn invariant_violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        let accounts = self.registry.accounts();

        for a in accounts {
            if a.replayed_balance() != a.balance() {
                out.push(format!(
                    "ledger replay for {} gives {} but balance is {}",
                    a.msisdn(),
                    a.replayed_balance(),
                    a.balance()
                ));
            }
        }

        let initial: Money = accounts.iter().map(|a| a.initial_balance()).sum();
        let finals: Money = accounts.iter().map(|a| a.balance()).sum();
        let revenue = self.total_revenue();
        if initial + self.total_topups() - revenue != finals {
            out.push(format!(
                "conservation: initial {initial} + top-ups {} - revenue {revenue} != final {finals}",
                self.total_topups()
            ));
        }
        let t_in = self.ledger_total(LedgerKind::TransferIn);
        let t_out = self.ledger_total(LedgerKind::TransferOut);
        if t_in + t_out != Money::ZERO {
            out.push(format!("transfers in {t_in} and out {t_out} do not cancel"));
        }
        let stats_revenue: Money = self.scheme_stats.values().map(|s| s.revenue).sum();
        if stats_revenue != revenue {
            out.push(format!(
                "per-scheme revenue {stats_revenue} != ledger charges {revenue}"
            ));
        }

        if self.pool.outstanding() != 0
            || self.pool.in_use() != 0
            || self.pool.notification_in_use() != 0
        {
            out.push(format!(
                "{} channel(s) still allocated after the run",
                self.pool.outstanding()
            ));
        }
        if self.pool.allocations() != self.pool.releases() {
            out.push(format!(
                "{} allocations but {} releases",
                self.pool.allocations(),
                self.pool.releases()
            ));
        }

        let mut hot_billed = HashSet::new();
        for s in &self.sessions {
            if !matches!(s.state, SessionState::Released | SessionState::Rejected)
                || !s.channels_held.is_empty()
            {
                out.push(format!("session {} did not finish cleanly", s.session_id));
            }
            if s.state == SessionState::Released {
                let expected: &[(ChannelKind, usize)] = match s.scheme {
                    SchemeKind::IntelligentNetwork => {
                        &[(ChannelKind::Trunk, 1), (ChannelKind::Notification, 1)]
                    }
                    SchemeKind::ServiceNode => &[(ChannelKind::ServiceNodeLeg, 2)],
                    SchemeKind::HotBilling | SchemeKind::Handset => &[(ChannelKind::Trunk, 1)],
                };
                let total: usize = expected.iter().map(|(_, n)| n).sum();
                if s.channels_at_connect.len() != total
                    || expected.iter().any(|(k, n)| s.count_at_connect(*k) != *n)
                {
                    out.push(format!(
                        "session {} held {:?} under {}",
                        s.session_id, s.channels_at_connect, s.scheme
                    ));
                }
            }
            if s.scheme == SchemeKind::HotBilling {
                hot_billed.insert(s.session_id.as_str());
            }
        }

        for a in accounts {
            for e in a.ledger().iter().filter(|e| e.kind == LedgerKind::Charge) {
                let floor = if hot_billed.contains(e.reference.as_str()) {
                    e.amount
                } else {
                    Money::ZERO
                };
                if e.balance_after < floor {
                    out.push(format!(
                        "charge {} left {} at {} (floor {floor})",
                        e.reference,
                        a.msisdn(),
                        e.balance_after
                    ));
                }
            }
        }

        let by_session: HashMap<&str, &CallSession> = self
            .sessions
            .iter()
            .map(|s| (s.session_id.as_str(), s))
            .collect();
        let mut charged: HashMap<&str, Money> = HashMap::new();
        for a in accounts {
            for e in a.ledger().iter().filter(|e| e.kind == LedgerKind::Charge) {
                *charged.entry(e.reference.as_str()).or_default() += -e.amount;
            }
        }
        for cdr in &self.cdrs {
            let tariff_id = &self
                .registry
                .by_msisdn(&cdr.msisdn)
                .map(|a| a.tariff_id.clone())
                .unwrap_or_default();
            let expected = self
                .tariffs
                .iter()
                .find(|t| t.plan_id() == tariff_id)
                .map(|t| rate_voice_cost(t, cdr.billed_duration));
            if expected != Some(cdr.cost) {
                out.push(format!(
                    "CDR {} cost {} does not match its tariff",
                    cdr.record_id, cdr.cost
                ));
            }
            let tampered = self
                .reconciliation
                .iter()
                .any(|r| r.session_id == cdr.session_id && r.tampered);
            let got = charged
                .get(cdr.session_id.as_str())
                .copied()
                .unwrap_or_default();
            if !tampered && got != cdr.cost {
                out.push(format!(
                    "session {} charged {got} but its CDR says {}",
                    cdr.session_id, cdr.cost
                ));
            }
            if !by_session.contains_key(cdr.session_id.as_str()) {
                out.push(format!("CDR {} has no session", cdr.record_id));
            }
        }
        for r in &self.reconciliation {
            if !r.tampered && r.expected != r.collected {
                out.push(format!(
                    "SIM for {} collected {} but {} was due",
                    r.session_id, r.collected, r.expected
                ));
            }
        }

        let (redeemed, credited) = voucher_totals(&self.registry);
        if redeemed != credited {
            out.push(format!(
                "vouchers redeemed {redeemed} but credited {credited}"
            ));
        }
        if self.policy.id_required {
            let audit = self.audit();
            if audit.anonymous_topup_count + audit.anonymous_transfer_count != 0 {
                out.push(format!(
                    "{} anonymous top-up(s) and {} transfer(s) under the ID policy",
                    audit.anonymous_topup_count, audit.anonymous_transfer_count
                ));
            }
        }
        out
    }
}

/// One row of the side-by-side scheme comparison.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SchemeSummary {
    pub scheme: SchemeKind,
    pub total_revenue: Money,
    pub credit_exposure: Money,
    pub peak_channels: u32,
    pub peak_notification_links: u32,
    pub connected_calls: usize,
    pub rejected_calls: usize,
    pub suspended_accounts: usize,
}

impl SchemeSummary {
    pub fn from_outcome(scheme: SchemeKind, outcome: &RunOutcome) -> Self {
        Self {
            scheme,
            total_revenue: outcome.total_revenue(),
            credit_exposure: outcome.credit_exposure(),
            peak_channels: outcome.pool.peak_in_use(),
            peak_notification_links: outcome.pool.peak_notification_in_use(),
            connected_calls: outcome.connected_calls(),
            rejected_calls: outcome.rejected_calls(),
            suspended_accounts: outcome.suspended_accounts(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ComparisonReport {
    pub rows: Vec<SchemeSummary>,
    /// Violations found in any of the runs, prefixed with the scheme.
    pub violations: Vec<String>,
}

/// Runs the same scenario once per scheme, each on its own copy of the
/// accounts, in parallel.
pub fn compare_schemes(
    scenario: &Scenario,
    options: &RunOptions,
) -> Result<ComparisonReport, SetupError> {
    let results: Vec<Result<RunOutcome, SetupError>> = std::thread::scope(|scope| {
        let handles: Vec<_> = SchemeKind::ALL
            .iter()
            .map(|&scheme| {
                let opts = RunOptions {
                    scheme_override: Some(scheme),
                    record_trace: false,
                    ..options.clone()
                };
                scope.spawn(move || run_scenario(scenario, &opts))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("simulation thread panicked"))
            .collect()
    });
    let mut rows = Vec::new();
    let mut violations = Vec::new();
    for (scheme, result) in SchemeKind::ALL.iter().zip(results) {
        let outcome = result?;
        violations.extend(
            outcome
                .invariant_violations()
                .into_iter()
                .map(|v| format!("{}: {v}", scheme.short_code())),
        );
        rows.push(SchemeSummary::from_outcome(*scheme, &outcome));
    }
    Ok(ComparisonReport { rows, violations })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AuditComparison {
    pub without_policy: FraudAuditReport,
    pub with_policy: FraudAuditReport,
    pub revenue_without: Money,
    pub revenue_with: Money,
    pub topups_without: Money,
    pub topups_with: Money,
}

impl AuditComparison {
    /// Revenue given up by turning the ID requirement on.
    pub fn revenue_delta(&self) -> Money {
        self.revenue_without - self.revenue_with
    }
}

/// Runs the scenario with the ID requirement off and then on.
pub fn audit_policies(
    scenario: &Scenario,
    options: &RunOptions,
) -> Result<AuditComparison, SetupError> {
    let run = |policy| {
        run_scenario(
            scenario,
            &RunOptions {
                policy_override: Some(policy),
                record_trace: false,
                ..options.clone()
            },
        )
    };
    let off = run(CountermeasurePolicy::OFF)?;
    let on = run(CountermeasurePolicy::ON)?;
    Ok(AuditComparison {
        without_policy: off.audit(),
        with_policy: on.audit(),
        revenue_without: off.total_revenue(),
        revenue_with: on.total_revenue(),
        topups_without: off.total_topups(),
        topups_with: on.total_topups(),
    })
}

/// Which element reported a message, for trace filtering.
pub fn trace_mentions(record: &TraceRecord, element: Element) -> bool {
    record.envelope.from == element || record.envelope.to == element
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::parse_scenario;

    fn scenario(body: &str) -> Scenario {
        parse_scenario(body).unwrap_or_else(|e| panic!("{e:?}"))
    }

    fn run(body: &str) -> RunOutcome {
        let out = run_scenario(&scenario(body), &RunOptions::default()).unwrap();
        assert_eq!(out.invariant_violations(), Vec::<String>::new());
        out
    }

    const TARIFF: &str = "tariff flat 30 60 2\n";

    #[test]
    fn in_call_is_charged_per_started_minute() {
        let out = run(&format!(
            "{TARIFF}account A 1 - 100 flat\ncall 0 A B 61 IN\nhorizon 100\n"
        ));
        assert_eq!(out.registry.account(0).balance(), Money::from_minor(40));
        assert_eq!(out.cdrs.len(), 1);
        assert_eq!(out.cdrs[0].billed_duration, 61);
        assert_eq!(out.cdrs[0].cost, Money::from_minor(60));
    }

    #[test]
    fn countdown_cuts_the_call() {
        let out = run(&format!(
            "{TARIFF}account A 1 - 100 flat\ncall 0 A B 1000 SN\nhorizon 100\n"
        ));
        assert_eq!(out.cdrs[0].billed_duration, 180);
        assert_eq!(out.cdrs[0].termination_reason, "BalanceExhausted");
        assert_eq!(out.registry.account(0).balance(), Money::from_minor(10));
        assert_eq!(out.final_clock, 180);
    }

    #[test]
    fn compare_low_balance_long_call() {
        let s = scenario(&format!(
            "{TARIFF}account A 1 - 5 flat\ncall 0 A B 300\nhorizon 400\n"
        ));
        let report = compare_schemes(&s, &RunOptions::default()).unwrap();
        assert!(report.violations.is_empty(), "{:?}", report.violations);
        for row in &report.rows {
            if row.scheme == SchemeKind::HotBilling {
                assert_eq!(row.total_revenue, Money::from_minor(150));
                assert_eq!(row.credit_exposure, Money::from_minor(145));
                assert_eq!(row.suspended_accounts, 1);
            } else {
                assert_eq!(row.total_revenue, Money::ZERO);
                assert_eq!(row.credit_exposure, Money::ZERO);
                assert_eq!(row.rejected_calls, 1);
            }
        }
    }

    #[test]
    fn second_call_while_busy_is_rejected() {
        let out = run(&format!(
            "{TARIFF}account A 1 - 1000 flat\ncall 0 A B 100 IN\ncall 10 A C 100 IN\nhorizon 500\n"
        ));
        let stats = &out.scheme_stats[&SchemeKind::IntelligentNetwork];
        assert_eq!(stats.connected, 1);
        assert_eq!(stats.rejected.get(&Rejection::Busy), Some(&1));
    }

    #[test]
    fn topup_during_in_call_is_deferred_by_rejection() {
        let out = run(&format!(
            "{TARIFF}account A 1 ID 100 flat\ncall 0 A B 100 IN\ntopup 10 cash A 50 ID\ntopup 200 cash A 50 ID\nhorizon 500\n"
        ));
        let journal = out.registry.journal();
        assert_eq!(journal[0].outcome, Err(TopUpError::CallInProgress));
        assert!(journal[1].outcome.is_ok());
        assert_eq!(
            out.registry.account(0).balance(),
            Money::from_minor(100 - 60 + 50)
        );
    }

    #[test]
    fn handset_topup_mid_call_reaches_the_sim() {
        let out = run(&format!(
            "{TARIFF}account A 1 ID 30 flat\ncall 0 A B 150 HS\ntopup 30 card A 60 ID\nhorizon 500\n"
        ));
        assert_eq!(out.cdrs[0].billed_duration, 150);
        assert_eq!(out.registry.account(0).balance(), Money::ZERO);
        assert_eq!(out.reconciliation[0].collected, Money::from_minor(90));
    }

    #[test]
    fn tampered_sim_shows_up_in_reconciliation() {
        let s = scenario(&format!(
            "{TARIFF}account A 1 - 100 flat\ncall 0 A B 120 HS\nhorizon 500\n"
        ));
        let out = run_scenario(
            &s,
            &RunOptions {
                tampered_sims: vec!["A".into()],
                ..RunOptions::default()
            },
        )
        .unwrap();
        assert_eq!(out.reconciliation[0].shortfall(), Money::from_minor(60));
        assert_eq!(out.registry.account(0).balance(), Money::from_minor(100));
        assert!(out.invariant_violations().is_empty());
    }

    #[test]
    fn hot_billing_cdr_latency_keeps_the_account_busy() {
        let s = scenario(&format!(
            "{TARIFF}account A 1 - 100 flat\ncall 0 A B 60 HB\ncall 70 A B 60 HB\ncall 200 A B 60 HB\nhorizon 500\n"
        ));
        let out = run_scenario(
            &s,
            &RunOptions {
                cdr_latency: 30,
                ..RunOptions::default()
            },
        )
        .unwrap();
        let stats = &out.scheme_stats[&SchemeKind::HotBilling];
        assert_eq!(stats.connected, 2);
        assert_eq!(stats.rejected.get(&Rejection::Busy), Some(&1));
        assert_eq!(out.registry.account(0).balance(), Money::from_minor(40));
        assert!(out.invariant_violations().is_empty());
    }

    #[test]
    fn calls_in_progress_at_the_horizon_are_drained() {
        let out = run(&format!(
            "{TARIFF}account A 1 - 1000 flat\ncall 90 A B 120 IN\nhorizon 100\n"
        ));
        assert_eq!(out.final_clock, 210);
        assert_eq!(out.cdrs[0].billed_duration, 120);
    }

    #[test]
    fn missing_scheme_is_a_setup_error() {
        let s = scenario(&format!(
            "{TARIFF}account A 1 - 100 flat\ncall 0 A B 60\nhorizon 100\n"
        ));
        assert_eq!(
            run_scenario(&s, &RunOptions::default()).unwrap_err(),
            SetupError::MissingScheme { line: 3 }
        );
    }

    #[test]
    fn audit_policies_reports_both_sides() {
        let s = scenario(&format!(
            "{TARIFF}account A 1 ID-A 0 flat\nvoucher 1111-1111-1111-1111 100\ntopup 0 voucher A 1111-1111-1111-1111 -\ncall 10 A B 60 IN\nhorizon 100\n"
        ));
        let a = audit_policies(&s, &RunOptions::default()).unwrap();
        assert_eq!(a.without_policy.anonymous_topup_count, 1);
        assert_eq!(a.with_policy.anonymous_topup_count, 0);
        assert_eq!(a.with_policy.rejected_for_id, 1);
        assert_eq!(a.revenue_delta(), Money::from_minor(30));
    }

    #[test]
    fn trace_is_recorded_when_asked() {
        let s = scenario(&format!(
            "{TARIFF}account A 1 - 100 flat\ncall 0 A B 60 IN\nhorizon 100\n"
        ));
        let out = run_scenario(
            &s,
            &RunOptions {
                record_trace: true,
                ..RunOptions::default()
            },
        )
        .unwrap();
        assert!(out.trace.iter().any(|r| trace_mentions(r, Element::Scp)));
        assert!(out.trace.windows(2).all(|w| w[0].time <= w[1].time));
    }
}
