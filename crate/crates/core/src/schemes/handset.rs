//! Handset-based prepaid: the balance lives on the SIM and the mobile
//! station decrements it using pricing parameters pushed by the MSC.

use crate::account::{PrepaidAccount, TariffPlan};
use crate::engine::ChannelKind;
use crate::money::Money;
use crate::SimTime;

use super::{
    CallSession, Element, NetworkFabric, ProtocolMessage, Rejection, SchemeKind, TerminationReason,
};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MobileStationState {
    pub imsi: String,
    pub sim_balance: Money,
    /// (voice_rate, increment_seconds) from the last PricingParameters.
    pub pricing: Option<(Money, u64)>,
    /// Fault injection: a tampered SIM skips every decrement.
    pub tampered: bool,
}

impl MobileStationState {
    pub fn new(imsi: &str, sim_balance: Money) -> Self {
        Self {
            imsi: imsi.to_owned(),
            sim_balance,
            pricing: None,
            tampered: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TickOutcome {
    Decremented(Money),
    /// Tampered SIM: nothing taken.
    Skipped,
    /// Not enough credit for the increment that would start now.
    Exhausted,
}

pub fn handset_connect(
    session: &mut CallSession,
    account: &PrepaidAccount,
    tariff: &TariffPlan,
    ms: &mut MobileStationState,
    net: &mut NetworkFabric,
    now: SimTime,
) -> Result<(), Rejection> {
    session.assert_setup(SchemeKind::Handset);
    let sid = session.session_id.clone();
    net.send(
        Element::MobileStation,
        Element::Msc,
        session.setup_message(),
    );
    if !account.is_active() {
        return Err(session.reject(Rejection::Suspended, net, Element::Msc));
    }
    net.send(
        Element::Msc,
        Element::MobileStation,
        ProtocolMessage::PricingParameters {
            session: sid.clone(),
            voice_rate: tariff.voice_rate(),
            increment_seconds: tariff.increment_seconds(),
        },
    );
    ms.pricing = Some((tariff.voice_rate(), tariff.increment_seconds()));
    if ms.sim_balance < tariff.voice_rate() {
        ms.pricing = None;
        return Err(session.reject(Rejection::InsufficientBalance, net, Element::MobileStation));
    }
    net.send(
        Element::MobileStation,
        Element::Msc,
        ProtocolMessage::ParamAck { session: sid },
    );
    if let Err(reason) = net.allocate(session, ChannelKind::Trunk) {
        ms.pricing = None;
        return Err(session.reject(reason, net, Element::Msc));
    }
    session.connect(now);
    Ok(())
}

/// One SIM tick at the start of a billing increment.
pub fn handset_tick_decrement(
    session: &CallSession,
    ms: &mut MobileStationState,
    net: &mut NetworkFabric,
) -> TickOutcome {
    assert_eq!(session.scheme, SchemeKind::Handset);
    assert!(session.connected_at.is_some() && !session.is_released());
    let (rate, _) = ms
        .pricing
        .expect("pricing parameters are pushed before the call connects");
    net.send(
        Element::MobileStation,
        Element::MobileStation,
        ProtocolMessage::SimDecrementTick {
            session: session.session_id.clone(),
        },
    );
    if ms.tampered {
        return TickOutcome::Skipped;
    }
    if ms.sim_balance < rate {
        return TickOutcome::Exhausted;
    }
    ms.sim_balance -= rate;
    TickOutcome::Decremented(rate)
}

pub fn handset_release(
    session: &mut CallSession,
    ms: &mut MobileStationState,
    net: &mut NetworkFabric,
    now: SimTime,
    reason: TerminationReason,
) {
    assert_eq!(session.scheme, SchemeKind::Handset);
    session.release(net, now, reason);
    ms.pricing = None;
}

#[cfg(test)]
mod tests {
    use super::super::fixtures::*;
    use super::*;
    use crate::rating::rate_voice_cost;

    /// Drives a handset call tick by tick, the way the event loop does:
    /// a hangup on an increment boundary beats the tick scheduled there.
    fn drive(
        sim_balance: i64,
        requested: u64,
        tampered: bool,
    ) -> (CallSession, MobileStationState, u32) {
        let t = tariff();
        let acc = account(sim_balance);
        let mut s = session(SchemeKind::Handset, requested);
        let mut ms = MobileStationState::new(acc.imsi(), Money::from_minor(sim_balance));
        ms.tampered = tampered;
        let mut net = fabric();
        handset_connect(&mut s, &acc, &t, &mut ms, &mut net, 0).unwrap();
        let mut ticks = 0;
        let mut tick_at = 0;
        loop {
            if requested <= tick_at {
                handset_release(
                    &mut s,
                    &mut ms,
                    &mut net,
                    requested,
                    TerminationReason::CallerHangup,
                );
                break;
            }
            match handset_tick_decrement(&s, &mut ms, &mut net) {
                TickOutcome::Decremented(_) => ticks += 1,
                TickOutcome::Skipped => {}
                TickOutcome::Exhausted => {
                    handset_release(
                        &mut s,
                        &mut ms,
                        &mut net,
                        tick_at,
                        TerminationReason::BalanceExhausted,
                    );
                    break;
                }
            }
            tick_at += t.increment_seconds();
        }
        assert_eq!(net.pool.outstanding(), 0);
        (s, ms, ticks)
    }

    #[test]
    fn connects_and_pushes_pricing() {
        let acc = account(100);
        let mut s = session(SchemeKind::Handset, 600);
        let mut ms = MobileStationState::new(acc.imsi(), Money::from_minor(100));
        let mut net = fabric();
        handset_connect(&mut s, &acc, &tariff(), &mut ms, &mut net, 0).unwrap();
        assert_eq!(ms.pricing, Some((Money::from_minor(30), 60)));
        assert_eq!(s.channels_held.len(), 1);
        assert!(net
            .outbox()
            .iter()
            .any(|e| matches!(e.message, ProtocolMessage::ParamAck { .. })));
    }

    #[test]
    fn sim_below_one_increment_rejected() {
        let acc = account(10);
        let mut s = session(SchemeKind::Handset, 600);
        let mut ms = MobileStationState::new(acc.imsi(), Money::from_minor(10));
        let mut net = fabric();
        let r = handset_connect(&mut s, &acc, &tariff(), &mut ms, &mut net, 0);
        assert_eq!(r, Err(Rejection::InsufficientBalance));
        assert_eq!(net.pool.outstanding(), 0);
    }

    #[test]
    fn one_affordable_increment_cuts_at_sixty() {
        let (s, ms, ticks) = drive(30, 600, false);
        assert_eq!(ticks, 1);
        assert_eq!(s.billed_duration, 60);
        assert_eq!(
            s.termination_reason,
            Some(TerminationReason::BalanceExhausted)
        );
        assert_eq!(ms.sim_balance, Money::ZERO);
    }

    #[test]
    fn three_ticks_drain_ninety() {
        let (s, ms, ticks) = drive(90, 600, false);
        assert_eq!(ticks, 3);
        assert_eq!(ms.sim_balance, Money::ZERO);
        assert_eq!(s.billed_duration, 180);
    }

    #[test]
    fn early_hangup_matches_round_up_rating() {
        let (s, ms, ticks) = drive(90, 45, false);
        assert_eq!(ticks, 1);
        assert_eq!(ms.sim_balance, Money::from_minor(60));
        assert_eq!(
            Money::from_minor(90) - ms.sim_balance,
            rate_voice_cost(&tariff(), s.billed_duration)
        );
    }

    #[test]
    fn tampered_sim_never_decrements() {
        let (s, ms, ticks) = drive(30, 600, true);
        assert_eq!(ticks, 0);
        assert_eq!(ms.sim_balance, Money::from_minor(30));
        assert_eq!(s.billed_duration, 600);
        assert_eq!(s.termination_reason, Some(TerminationReason::CallerHangup));
    }
}
