//! Party addressing, payload tags and the protocol transcript.

use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::RealMatrix;

/// A logical protocol role. Feature contributors are numbered from 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PartyId {
    Ta,
    Csp,
    Fc(usize),
    Lc,
}

impl fmt::Display for PartyId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PartyId::Ta => f.write_str("TA"),
            PartyId::Csp => f.write_str("CSP"),
            PartyId::Fc(i) => write!(f, "FC-{i}"),
            PartyId::Lc => f.write_str("LC"),
        }
    }
}

impl FromStr for PartyId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "TA" => Ok(PartyId::Ta),
            "CSP" => Ok(PartyId::Csp),
            "LC" => Ok(PartyId::Lc),
            _ => s
                .strip_prefix("FC-")
                .and_then(|i| i.parse().ok())
                .filter(|i| *i >= 1)
                .map(PartyId::Fc)
                .ok_or_else(|| format!("unknown party {s:?}")),
        }
    }
}

impl Serialize for PartyId {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for PartyId {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Training,
    Recovery,
    Contribution,
    Inference,
}

/// Stable payload labels carried by every message.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum PayloadTag {
    KeyA,
    KeyHi,
    KeyG,
    KeyN,
    KeyM,
    MaskedX,
    MaskedY,
    MaskedT,
    MaskedQ,
    MaskedU,
    MaskedHi,
    MaskedGt,
    MaskedWI,
    MaskedPI,
    MaskedBI,
    MaskedYhat,
    SsResidual,
}

impl PayloadTag {
    pub const ALL: [PayloadTag; 17] = [
        PayloadTag::KeyA,
        PayloadTag::KeyHi,
        PayloadTag::KeyG,
        PayloadTag::KeyN,
        PayloadTag::KeyM,
        PayloadTag::MaskedX,
        PayloadTag::MaskedY,
        PayloadTag::MaskedT,
        PayloadTag::MaskedQ,
        PayloadTag::MaskedU,
        PayloadTag::MaskedHi,
        PayloadTag::MaskedGt,
        PayloadTag::MaskedWI,
        PayloadTag::MaskedPI,
        PayloadTag::MaskedBI,
        PayloadTag::MaskedYhat,
        PayloadTag::SsResidual,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PayloadTag::KeyA => "KEY_A",
            PayloadTag::KeyHi => "KEY_HI",
            PayloadTag::KeyG => "KEY_G",
            PayloadTag::KeyN => "KEY_N",
            PayloadTag::KeyM => "KEY_M",
            PayloadTag::MaskedX => "MASKED_X",
            PayloadTag::MaskedY => "MASKED_Y",
            PayloadTag::MaskedT => "MASKED_T",
            PayloadTag::MaskedQ => "MASKED_Q",
            PayloadTag::MaskedU => "MASKED_U",
            PayloadTag::MaskedHi => "MASKED_HI",
            PayloadTag::MaskedGt => "MASKED_GT",
            PayloadTag::MaskedWI => "MASKED_W_I",
            PayloadTag::MaskedPI => "MASKED_P_I",
            PayloadTag::MaskedBI => "MASKED_B_I",
            PayloadTag::MaskedYhat => "MASKED_YHAT",
            PayloadTag::SsResidual => "SS_RESIDUAL",
        }
    }

    /// The protection class a payload with this tag must carry.
    pub fn expected_protection(self) -> Protection {
        match self {
            PayloadTag::KeyA | PayloadTag::KeyHi | PayloadTag::KeyG | PayloadTag::KeyN | PayloadTag::KeyM => {
                Protection::Key
            }
            PayloadTag::SsResidual => Protection::Statistic,
            _ => Protection::Masked,
        }
    }
}

impl fmt::Display for PayloadTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// What a payload reveals, fixed when the message is built.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Protection {
    /// Key material from the trusted authority.
    Key,
    /// Data or model components under at least one mask.
    Masked,
    /// A scalar summary that is invariant under the masks.
    Statistic,
    /// Unmasked data or model components.
    Plain,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    Matrix(RealMatrix),
    Scalar(f64),
}

impl Payload {
    pub fn shape(&self) -> [usize; 2] {
        match self {
            Payload::Matrix(m) => [m.nrows(), m.ncols()],
            Payload::Scalar(_) => [1, 1],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Message {
    pub from: PartyId,
    pub to: PartyId,
    pub phase: Phase,
    pub tag: PayloadTag,
    pub protection: Protection,
    /// Party whose private share the payload belongs to, if any.
    pub subject: Option<PartyId>,
    pub body: Payload,
}

impl Message {
    /// A message whose protection class follows from its tag.
    pub fn new(from: PartyId, to: PartyId, phase: Phase, tag: PayloadTag, body: Payload) -> Self {
        Self { from, to, phase, tag, protection: tag.expected_protection(), subject: None, body }
    }

    pub fn matrix(from: PartyId, to: PartyId, phase: Phase, tag: PayloadTag, m: RealMatrix) -> Self {
        Self::new(from, to, phase, tag, Payload::Matrix(m))
    }

    pub fn about(mut self, subject: PartyId) -> Self {
        self.subject = Some(subject);
        self
    }

    pub fn with_protection(mut self, protection: Protection) -> Self {
        self.protection = protection;
        self
    }

    pub fn record(&self, seq: usize) -> MessageRecord {
        MessageRecord {
            seq,
            phase: self.phase,
            from: self.from,
            to: self.to,
            tag: self.tag,
            protection: self.protection,
            subject: self.subject,
            shape: self.body.shape(),
        }
    }
}

/// Metadata of one delivered message; payload values are never logged.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MessageRecord {
    pub seq: usize,
    pub phase: Phase,
    pub from: PartyId,
    pub to: PartyId,
    pub tag: PayloadTag,
    pub protection: Protection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subject: Option<PartyId>,
    pub shape: [usize; 2],
}

/// Append-only log of every message sent through a transport.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ProtocolTranscript {
    records: Vec<MessageRecord>,
}

impl ProtocolTranscript {
    pub fn new() -> Self {
        Self::default()
    }

    pub(crate) fn append(&mut self, message: &Message) {
        let seq = self.records.len();
        self.records.push(message.record(seq));
    }

    pub fn records(&self) -> &[MessageRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn in_phase(&self, phase: Phase) -> impl Iterator<Item = &MessageRecord> {
        self.records.iter().filter(move |r| r.phase == phase)
    }

    /// Writes one JSON object per line.
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for record in &self.records {
            serde_json::to_writer(&mut out, record)?;
            out.write_all(b"\n")?;
        }
        out.flush()
    }

    pub fn to_jsonl(&self) -> String {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("serde_json emits UTF-8")
    }

    /// Parses JSON lines; blank lines are skipped. Records keep the order of
    /// the file.
    pub fn read_jsonl<R: BufRead>(input: R) -> Result<Self, TranscriptParseError> {
        let mut records = Vec::new();
        for (i, line) in input.lines().enumerate() {
            let line = line.map_err(|e| TranscriptParseError { line: i + 1, reason: e.to_string() })?;
            if line.trim().is_empty() {
                continue;
            }
            let record =
                serde_json::from_str(&line).map_err(|e| TranscriptParseError { line: i + 1, reason: e.to_string() })?;
            records.push(record);
        }
        Ok(Self { records })
    }

    /// Builds a transcript from externally supplied records.
    pub fn from_records(records: Vec<MessageRecord>) -> Self {
        Self { records }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("transcript line {line}: {reason}")]
pub struct TranscriptParseError {
    pub line: usize,
    pub reason: String,
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    #[test]
    fn party_ids_round_trip_through_strings() {
        for p in [PartyId::Ta, PartyId::Csp, PartyId::Fc(3), PartyId::Lc] {
            assert_eq!(p.to_string().parse::<PartyId>().unwrap(), p);
        }
        assert!("FC-0".parse::<PartyId>().is_err());
        assert!("XX".parse::<PartyId>().is_err());
    }

    #[test]
    fn tags_serialize_to_their_stable_names() {
        for tag in PayloadTag::ALL {
            assert_eq!(serde_json::to_string(&tag).unwrap(), format!("\"{}\"", tag.as_str()));
        }
    }

    #[test]
    fn transcript_jsonl_round_trip() {
        let mut t = ProtocolTranscript::new();
        let m = Message::matrix(PartyId::Ta, PartyId::Fc(1), Phase::Training, PayloadTag::KeyHi, DMatrix::zeros(4, 2))
            .about(PartyId::Fc(1));
        t.append(&m);
        t.append(&Message::new(
            PartyId::Csp,
            PartyId::Fc(2),
            Phase::Contribution,
            PayloadTag::SsResidual,
            Payload::Scalar(1.5),
        ));
        let text = t.to_jsonl();
        assert_eq!(text.lines().count(), 2);
        assert!(text.lines().next().unwrap().contains("\"tag\":\"KEY_HI\""));
        assert_eq!(ProtocolTranscript::read_jsonl(text.as_bytes()).unwrap(), t);
        assert_eq!(ProtocolTranscript::read_jsonl("{oops}\n".as_bytes()).unwrap_err().line, 1);
    }
}
