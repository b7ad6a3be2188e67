//! Service-node prepaid: the call is routed through a node that asks the
//! prepaid billing platform, at the cost of a second voice channel.

use crate::account::{PrepaidAccount, TariffPlan};
use crate::engine::ChannelKind;
use crate::SimTime;

use super::intelligent_network::settle_real_time;
use super::{
    authorize_real_time, CallSession, ChargeResult, Element, NetworkFabric, ProtocolMessage,
    Rejection, SchemeKind, TerminationReason,
};

/// On success the session holds exactly two voice legs and the countdown is returned.
pub fn service_node_connect(
    session: &mut CallSession,
    account: &PrepaidAccount,
    tariff: &TariffPlan,
    net: &mut NetworkFabric,
    now: SimTime,
) -> Result<u64, Rejection> {
    session.assert_setup(SchemeKind::ServiceNode);
    let sid = session.session_id.clone();
    net.send(
        Element::MobileStation,
        Element::Msc,
        session.setup_message(),
    );

    net.send(Element::Msc, Element::ServiceNode, session.setup_message());
    net.send(
        Element::ServiceNode,
        Element::Pbp,
        ProtocolMessage::PbpQuery {
            session: sid.clone(),
        },
    );

    let verdict = authorize_real_time(account, tariff);
    net.send(
        Element::Pbp,
        Element::ServiceNode,
        ProtocolMessage::PbpVerdict {
            session: sid.clone(),
            allowed: verdict.is_ok(),
        },
    );
    let countdown = match verdict {
        Ok(c) => c,
        Err(reason) => return Err(session.reject(reason, net, Element::ServiceNode)),
    };

    // Both legs are seized once the platform allows the call:
    // MSC to service node, and service node back through the MSC to the callee.
    for _ in 0..2 {
        if let Err(reason) = net.allocate(session, ChannelKind::ServiceNodeLeg) {
            return Err(session.reject(reason, net, Element::ServiceNode));
        }
    }
    net.send(
        Element::ServiceNode,
        Element::Msc,
        ProtocolMessage::SecondLegSetup { session: sid },
    );
    session.countdown_seconds = Some(countdown);
    session.connect(now);
    Ok(countdown)
}

/// Identical rating and charging to the IN scheme, run by the billing platform.
pub fn service_node_release_and_charge(
    session: &mut CallSession,
    account: &mut PrepaidAccount,
    tariff: &TariffPlan,
    net: &mut NetworkFabric,
    now: SimTime,
    reason: TerminationReason,
) -> ChargeResult {
    assert_eq!(session.scheme, SchemeKind::ServiceNode);
    settle_real_time(session, account, tariff, net, now, reason, Element::Pbp)
}
