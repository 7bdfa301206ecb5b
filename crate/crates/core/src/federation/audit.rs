//! Who may receive what, and a transcript audit against that policy.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::message::{MessageRecord, PartyId, PayloadTag, Protection, ProtocolTranscript};

/// Why a delivery is not allowed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Rule {
    /// The trusted authority only issues keys.
    AuthorityReceivesNothing,
    /// Keys originate at the trusted authority only.
    KeysFromAuthorityOnly,
    /// The payload's protection class does not match its tag.
    ProtectionMismatch,
    /// The service provider only ever handles masked data.
    ServiceProviderMaskedOnly,
    /// The receiving role is not entitled to this payload.
    NotEntitled,
    /// A private share addressed to a party other than its owner.
    ForeignShare,
}

/// Checks a single delivery against the visibility policy.
pub fn check_delivery(
    from: PartyId,
    to: PartyId,
    tag: PayloadTag,
    protection: Protection,
    subject: Option<PartyId>,
) -> Result<(), Rule> {
    use PayloadTag::*;
    if to == PartyId::Ta {
        return Err(Rule::AuthorityReceivesNothing);
    }
    if protection != tag.expected_protection() {
        return Err(if to == PartyId::Csp { Rule::ServiceProviderMaskedOnly } else { Rule::ProtectionMismatch });
    }
    if protection == Protection::Key && from != PartyId::Ta {
        return Err(Rule::KeysFromAuthorityOnly);
    }
    match to {
        PartyId::Ta => unreachable!(),
        PartyId::Csp => match tag {
            MaskedX | MaskedY | MaskedHi | MaskedGt | MaskedYhat => Ok(()),
            _ => Err(Rule::ServiceProviderMaskedOnly),
        },
        PartyId::Fc(_) => match tag {
            KeyA | KeyN | KeyM | MaskedT => Ok(()),
            KeyHi | MaskedWI | MaskedPI | MaskedBI | SsResidual => {
                if subject == Some(to) {
                    Ok(())
                } else {
                    Err(Rule::ForeignShare)
                }
            }
            _ => Err(Rule::NotEntitled),
        },
        PartyId::Lc => match tag {
            KeyA | KeyG | KeyN | KeyM | MaskedT | MaskedQ | MaskedU | MaskedYhat => Ok(()),
            _ => Err(Rule::NotEntitled),
        },
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub seq: usize,
    pub from: PartyId,
    pub to: PartyId,
    pub tag: PayloadTag,
    pub rule: Rule,
}

/// Tags a party sent and received, in transcript order.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartyView {
    pub sent: Vec<PayloadTag>,
    pub received: Vec<PayloadTag>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditReport {
    pub views: BTreeMap<PartyId, PartyView>,
    pub violations: Vec<Violation>,
}

impl AuditReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

fn check_record(r: &MessageRecord) -> Option<Violation> {
    check_delivery(r.from, r.to, r.tag, r.protection, r.subject).err().map(|rule| Violation {
        seq: r.seq,
        from: r.from,
        to: r.to,
        tag: r.tag,
        rule,
    })
}

/// Classifies every message in the transcript per party and lists the
/// deliveries that break the visibility policy. An empty list means the run
/// respected it.
pub fn audit_views(transcript: &ProtocolTranscript) -> AuditReport {
    let mut report = AuditReport::default();
    for r in transcript.records() {
        report.views.entry(r.from).or_default().sent.push(r.tag);
        report.views.entry(r.to).or_default().received.push(r.tag);
        if let Some(v) = check_record(r) {
            report.violations.push(v);
        }
    }
    report
}
