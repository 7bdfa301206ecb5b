use std::collections::{BTreeMap, VecDeque};

use super::message::{Message, PartyId, PayloadTag, ProtocolTranscript};

/// Message delivery between parties.
///
/// Delivery is FIFO per receiver. `recv` removes the oldest queued message
/// for `to` that matches the sender and tag, leaving the rest in order.
pub trait Transport {
    fn send(&mut self, message: Message);

    fn recv(&mut self, to: PartyId, from: PartyId, tag: PayloadTag) -> Option<Message>;

    /// Messages sent but not yet received, across all receivers.
    fn pending(&self) -> usize;

    fn transcript(&self) -> &ProtocolTranscript;
}

/// Single-process transport: one queue per receiver plus the transcript.
#[derive(Debug, Default)]
pub struct InMemoryTransport {
    queues: BTreeMap<PartyId, VecDeque<Message>>,
    transcript: ProtocolTranscript,
}

impl InMemoryTransport {
    pub fn new() -> Self {
        Self::default()
    }
}

impl Transport for InMemoryTransport {
    fn send(&mut self, message: Message) {
        log::trace!("{} -> {}: {} {:?}", message.from, message.to, message.tag, message.body.shape());
        self.transcript.append(&message);
        self.queues.entry(message.to).or_default().push_back(message);
    }

    fn recv(&mut self, to: PartyId, from: PartyId, tag: PayloadTag) -> Option<Message> {
        let queue = self.queues.get_mut(&to)?;
        let pos = queue.iter().position(|m| m.from == from && m.tag == tag)?;
        queue.remove(pos)
    }

    fn pending(&self) -> usize {
        self.queues.values().map(VecDeque::len).sum()
    }

    fn transcript(&self) -> &ProtocolTranscript {
        &self.transcript
    }
}
