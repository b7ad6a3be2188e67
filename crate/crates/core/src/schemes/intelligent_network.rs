//! IN prepaid: the SCP authorizes, runs a countdown, and charges at release.

use crate::account::{PrepaidAccount, TariffPlan};
use crate::engine::ChannelKind;
use crate::rating::rate_voice_cost;
use crate::SimTime;

use super::{
    authorize_real_time, CallSession, ChargeResult, Element, NetworkFabric, ProtocolMessage,
    Rejection, SchemeKind, TerminationReason,
};

/// Call setup through the SCP. On success the call holds one trunk and one
/// notification link to the intelligent peripheral, and the countdown
/// length is returned.
pub fn in_authorize_and_connect(
    session: &mut CallSession,
    account: &PrepaidAccount,
    tariff: &TariffPlan,
    net: &mut NetworkFabric,
    now: SimTime,
) -> Result<u64, Rejection> {
    session.assert_setup(SchemeKind::IntelligentNetwork);
    let sid = session.session_id.clone();
    net.send(
        Element::MobileStation,
        Element::Msc,
        session.setup_message(),
    );
    // MSC suspends call processing and hands over to the SCP.
    net.send(
        Element::Msc,
        Element::Scp,
        ProtocolMessage::ScpAuthorize {
            session: sid.clone(),
        },
    );

    let countdown = match authorize_real_time(account, tariff) {
        Ok(c) => c,
        Err(reason) => return Err(session.reject(reason, net, Element::Scp)),
    };

    if let Err(reason) = net.allocate(session, ChannelKind::Notification) {
        return Err(session.reject(reason, net, Element::Scp));
    }
    net.send(
        Element::Scp,
        Element::Msc,
        ProtocolMessage::IpLinkSetup {
            session: sid.clone(),
        },
    );
    net.send(
        Element::Scp,
        Element::IntelligentPeripheral,
        ProtocolMessage::NotificationInstruction {
            session: sid.clone(),
        },
    );
    net.send(
        Element::IntelligentPeripheral,
        Element::MobileStation,
        ProtocolMessage::BalanceAnnouncement {
            session: sid.clone(),
            remaining_seconds: countdown,
        },
    );

    if let Err(reason) = net.allocate(session, ChannelKind::Trunk) {
        return Err(session.reject(reason, net, Element::Scp));
    }
    session.countdown_seconds = Some(countdown);
    net.send(
        Element::Scp,
        Element::Msc,
        ProtocolMessage::ConnectInstruction {
            session: sid,
            countdown_seconds: countdown,
        },
    );
    session.connect(now);
    Ok(countdown)
}

/// Announcement when one billing increment of credit remains. Not billable.
pub fn in_low_balance_notice(
    session: &CallSession,
    net: &mut NetworkFabric,
    remaining_seconds: u64,
) {
    let sid = session.session_id.clone();
    net.send(
        Element::Scp,
        Element::IntelligentPeripheral,
        ProtocolMessage::NotificationInstruction {
            session: sid.clone(),
        },
    );
    net.send(
        Element::IntelligentPeripheral,
        Element::MobileStation,
        ProtocolMessage::BalanceAnnouncement {
            session: sid,
            remaining_seconds,
        },
    );
}

/// Release trigger to the SCP, which rates the call and charges the account.
///
/// # Panics
/// If the charge exceeds the balance, which the countdown rules out.
pub fn in_release_and_charge(
    session: &mut CallSession,
    account: &mut PrepaidAccount,
    tariff: &TariffPlan,
    net: &mut NetworkFabric,
    now: SimTime,
    reason: TerminationReason,
) -> ChargeResult {
    assert_eq!(session.scheme, SchemeKind::IntelligentNetwork);
    settle_real_time(session, account, tariff, net, now, reason, Element::Scp)
}

/// Shared by IN and the service node: release, rate, and charge without overdraft.
pub(super) fn settle_real_time(
    session: &mut CallSession,
    account: &mut PrepaidAccount,
    tariff: &TariffPlan,
    net: &mut NetworkFabric,
    now: SimTime,
    reason: TerminationReason,
    controller: Element,
) -> ChargeResult {
    let sid = session.session_id.clone();
    let front = if controller == Element::Scp {
        Element::Msc
    } else {
        Element::ServiceNode
    };
    if reason == TerminationReason::BalanceExhausted {
        net.send(
            controller,
            front,
            ProtocolMessage::CountdownExpired {
                session: sid.clone(),
            },
        );
    }
    session.release(net, now, reason);
    let countdown = session
        .countdown_seconds
        .expect("real-time sessions carry a countdown");
    assert!(
        session.billed_duration <= countdown,
        "session {sid} outlived its countdown"
    );
    net.send(
        front,
        controller,
        ProtocolMessage::ReleaseTrigger {
            session: sid.clone(),
            elapsed_seconds: session.billed_duration,
        },
    );
    let cost = rate_voice_cost(tariff, session.billed_duration);
    let new_balance = account
        .apply_charge(cost, &sid, false, now)
        .unwrap_or_else(|e| panic!("real-time charge for {sid} failed: {e}"))
        .balance_after;
    net.send(
        controller,
        front,
        ProtocolMessage::ChargeResult {
            session: sid.clone(),
            cost,
            new_balance,
        },
    );
    ChargeResult {
        session_id: sid,
        cost,
        new_balance,
    }
}

#[cfg(test)]
mod tests {
    use super::super::fixtures::*;
    use super::super::SessionState;
    use super::*;
    use crate::money::Money;

    fn connect(
        balance: i64,
        requested: u64,
    ) -> (
        CallSession,
        PrepaidAccount,
        NetworkFabric,
        Result<u64, Rejection>,
    ) {
        let mut s = session(SchemeKind::IntelligentNetwork, requested);
        let acc = account(balance);
        let mut net = fabric();
        let r = in_authorize_and_connect(&mut s, &acc, &tariff(), &mut net, 0);
        (s, acc, net, r)
    }

    #[test]
    fn connects_with_countdown() {
        let (s, _, net, r) = connect(100, 600);
        assert_eq!(r, Ok(180));
        assert_eq!(s.state, SessionState::Connected);
        assert_eq!(s.count_at_connect(ChannelKind::Trunk), 1);
        assert_eq!(s.count_at_connect(ChannelKind::Notification), 1);
        assert_eq!(net.pool.in_use(), 1);
        assert_eq!(net.pool.notification_in_use(), 1);
        let kinds: Vec<_> = net.outbox().iter().map(|e| (e.from, e.to)).collect();
        assert_eq!(kinds.first(), Some(&(Element::MobileStation, Element::Msc)));
        assert!(matches!(
            net.outbox().last().unwrap().message,
            ProtocolMessage::ConnectInstruction {
                countdown_seconds: 180,
                ..
            }
        ));
    }

    #[test]
    fn empty_account_rejected() {
        let (s, _, net, r) = connect(0, 600);
        assert_eq!(r, Err(Rejection::InsufficientBalance));
        assert_eq!(s.state, SessionState::Rejected);
        assert_eq!(net.pool.outstanding(), 0);
    }

    #[test]
    fn suspended_account_rejected() {
        let mut s = session(SchemeKind::IntelligentNetwork, 60);
        let mut acc = account(500);
        acc.set_status(crate::account::AccountStatus::Suspended);
        let mut net = fabric();
        let r = in_authorize_and_connect(&mut s, &acc, &tariff(), &mut net, 0);
        assert_eq!(r, Err(Rejection::Suspended));
    }

    #[test]
    fn trunk_shortage_releases_notification_link() {
        let mut s = session(SchemeKind::IntelligentNetwork, 60);
        let mut net = fabric_with(0);
        let r = in_authorize_and_connect(&mut s, &account(100), &tariff(), &mut net, 0);
        assert_eq!(r, Err(Rejection::NoChannelAvailable));
        assert_eq!(net.pool.outstanding(), 0);
    }

    #[test]
    fn countdown_expiry_charges_three_increments() {
        let (mut s, mut acc, mut net, _) = connect(100, 600);
        let result = in_release_and_charge(
            &mut s,
            &mut acc,
            &tariff(),
            &mut net,
            180,
            TerminationReason::BalanceExhausted,
        );
        assert_eq!(s.billed_duration, 180);
        assert_eq!(result.cost, Money::from_minor(90));
        assert_eq!(acc.balance(), Money::from_minor(10));
        assert_eq!(result.new_balance, Money::from_minor(10));
        assert_eq!(
            s.termination_reason,
            Some(TerminationReason::BalanceExhausted)
        );
        assert!(s.channels_held.is_empty());
        assert_eq!(net.pool.outstanding(), 0);
    }

    #[test]
    fn hangup_before_countdown() {
        let (mut s, mut acc, mut net, _) = connect(100, 60);
        let result = in_release_and_charge(
            &mut s,
            &mut acc,
            &tariff(),
            &mut net,
            60,
            TerminationReason::CallerHangup,
        );
        assert_eq!(s.billed_duration, 60);
        assert_eq!(result.cost, Money::from_minor(30));
        assert_eq!(s.termination_reason, Some(TerminationReason::CallerHangup));
    }

    #[test]
    fn zero_length_call_is_free() {
        let (mut s, mut acc, mut net, _) = connect(100, 0);
        let result = in_release_and_charge(
            &mut s,
            &mut acc,
            &tariff(),
            &mut net,
            0,
            TerminationReason::CallerHangup,
        );
        assert_eq!(s.billed_duration, 0);
        assert_eq!(result.cost, Money::ZERO);
        assert_eq!(acc.balance(), Money::from_minor(100));
    }
}
