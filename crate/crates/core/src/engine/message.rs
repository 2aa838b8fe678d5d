use std::fmt;

use crate::domain::{Capabilities, MigrationGroup, ResourceId, Tick};

/// Message kinds, in the order they are reported.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum MessageKind {
    MigrationRequest,
    Accept,
    Reject,
    Release,
    GroupMove,
}

impl MessageKind {
    pub const ALL: [MessageKind; 5] = [
        MessageKind::MigrationRequest,
        MessageKind::Accept,
        MessageKind::Reject,
        MessageKind::Release,
        MessageKind::GroupMove,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            MessageKind::MigrationRequest => "MigrationRequest",
            MessageKind::Accept => "Accept",
            MessageKind::Reject => "Reject",
            MessageKind::Release => "Release",
            MessageKind::GroupMove => "GroupMove",
        }
    }
}

impl fmt::Display for MessageKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Payload {
    /// Overloaded source asks for room for `exceeded_count` patients.
    MigrationRequest {
        exceeded_count: u32,
    },
    /// Room granted. The acceptor advertises which task kinds it serves so
    /// the source can group compatible patients.
    Accept {
        granted_slots: u32,
        capabilities: Capabilities,
    },
    Reject,
    /// Source gives back granted slots it will not use.
    Release,
    GroupMove(MigrationGroup),
}

impl Payload {
    pub fn kind(&self) -> MessageKind {
        match self {
            Payload::MigrationRequest { .. } => MessageKind::MigrationRequest,
            Payload::Accept { .. } => MessageKind::Accept,
            Payload::Reject => MessageKind::Reject,
            Payload::Release => MessageKind::Release,
            Payload::GroupMove(_) => MessageKind::GroupMove,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProtocolMessage {
    pub from: ResourceId,
    pub to: ResourceId,
    pub sent_at: Tick,
    /// Negotiation cycle this message belongs to, numbered per source.
    pub cycle: u64,
    pub payload: Payload,
}

impl ProtocolMessage {
    pub fn kind(&self) -> MessageKind {
        self.payload.kind()
    }

    /// The resource that opened the negotiation cycle.
    pub fn initiator(&self) -> ResourceId {
        match self.payload {
            Payload::MigrationRequest { .. } | Payload::Release | Payload::GroupMove(_) => {
                self.from
            }
            Payload::Accept { .. } | Payload::Reject => self.to,
        }
    }
}
