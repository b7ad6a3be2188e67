//! Hot billing: the HLR validates the IMSI, the call connects with no
//! balance check, and the prepaid service center charges from the CDR.

use crate::account::{PrepaidAccount, TariffPlan};
use crate::cdr::CallDetailRecord;
use crate::engine::ChannelKind;
use crate::money::Money;
use crate::SimTime;

use super::{
    CallSession, ChargeResult, Element, NetworkFabric, ProtocolMessage, Rejection, SchemeKind,
    TerminationReason,
};

/// `hlr_record` is the HLR/AuC lookup of the caller's IMSI.
pub fn hot_billing_connect(
    session: &mut CallSession,
    hlr_record: Option<&PrepaidAccount>,
    net: &mut NetworkFabric,
    now: SimTime,
) -> Result<(), Rejection> {
    session.assert_setup(SchemeKind::HotBilling);
    let imsi = session.caller_imsi.clone();
    net.send(
        Element::MobileStation,
        Element::Msc,
        session.setup_message(),
    );
    net.send(
        Element::Msc,
        Element::Hlr,
        ProtocolMessage::HlrValidate { imsi: imsi.clone() },
    );
    net.send(
        Element::Hlr,
        Element::Auc,
        ProtocolMessage::AuthCheck { imsi: imsi.clone() },
    );
    let known = hlr_record.is_some_and(|acc| acc.imsi() == imsi);
    net.send(
        Element::Auc,
        Element::Hlr,
        ProtocolMessage::AuthResult {
            imsi: imsi.clone(),
            known,
        },
    );

    let verdict = match hlr_record {
        Some(acc) if known && acc.is_active() => Ok(()),
        Some(_) if known => Err(Rejection::Suspended),
        _ => Err(Rejection::UnknownImsi),
    };
    net.send(
        Element::Hlr,
        Element::Msc,
        ProtocolMessage::HlrCustomerData {
            imsi,
            valid: verdict.is_ok(),
        },
    );
    if let Err(reason) = verdict {
        return Err(session.reject(reason, net, Element::Hlr));
    }
    if let Err(reason) = net.allocate(session, ChannelKind::Trunk) {
        return Err(session.reject(reason, net, Element::Msc));
    }
    session.connect(now);
    Ok(())
}

/// Ends the call and produces its CDR. Nothing is charged yet.
pub fn hot_billing_release(
    session: &mut CallSession,
    tariff: &TariffPlan,
    net: &mut NetworkFabric,
    now: SimTime,
    reason: TerminationReason,
    record_id: &str,
) -> CallDetailRecord {
    assert_eq!(session.scheme, SchemeKind::HotBilling);
    session.release(net, now, reason);
    CallDetailRecord::for_session(record_id, session, tariff)
}

/// The CDR reaches the PSC, which charges it in full even into a negative
/// balance. An account left at or below zero is reported to the HLR.
pub fn hot_billing_post_charge(
    record: &CallDetailRecord,
    account: &mut PrepaidAccount,
    net: &mut NetworkFabric,
    now: SimTime,
) -> ChargeResult {
    net.send(
        Element::Msc,
        Element::Psc,
        ProtocolMessage::CdrDispatch {
            record: Box::new(record.clone()),
        },
    );
    let new_balance = account
        .apply_charge(record.cost, &record.session_id, true, now)
        .expect("deferred charges never fail")
        .balance_after;
    if new_balance <= Money::ZERO {
        net.send(
            Element::Psc,
            Element::Hlr,
            ProtocolMessage::SuspendNotice {
                imsi: account.imsi().to_owned(),
            },
        );
    }
    ChargeResult {
        session_id: record.session_id.clone(),
        cost: record.cost,
        new_balance,
    }
}
