//! Voice-channel accounting.

use std::collections::BTreeSet;
use std::fmt;

use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Capacity {
    Limited(u32),
    #[default]
    Unlimited,
}

impl fmt::Display for Capacity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Capacity::Limited(n) => write!(f, "{n}"),
            Capacity::Unlimited => f.write_str("unlimited"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ChannelKind {
    /// MSC trunk to the called party.
    Trunk,
    /// MSC link to the intelligent peripheral for balance announcements.
    Notification,
    /// One of the two voice legs through a service node.
    ServiceNodeLeg,
}

impl ChannelKind {
    /// Voice-bearing channels count against pool capacity; notification links do not.
    pub fn is_voice(self) -> bool {
        !matches!(self, ChannelKind::Notification)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ChannelHandle {
    pub id: u64,
    pub kind: ChannelKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("no voice channel available (capacity {capacity})")]
pub struct PoolExhausted {
    pub capacity: Capacity,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ChannelPool {
    capacity: Capacity,
    in_use: u32,
    peak_in_use: u32,
    notification_in_use: u32,
    peak_notification_in_use: u32,
    next_id: u64,
    outstanding: BTreeSet<u64>,
    allocations: u64,
    releases: u64,
}

impl ChannelPool {
    pub fn new(capacity: Capacity) -> Self {
        Self {
            capacity,
            ..Self::default()
        }
    }

    pub fn capacity(&self) -> Capacity {
        self.capacity
    }

    /// Voice channels currently held.
    pub fn in_use(&self) -> u32 {
        self.in_use
    }

    pub fn peak_in_use(&self) -> u32 {
        self.peak_in_use
    }

    pub fn notification_in_use(&self) -> u32 {
        self.notification_in_use
    }

    pub fn peak_notification_in_use(&self) -> u32 {
        self.peak_notification_in_use
    }

    pub fn allocations(&self) -> u64 {
        self.allocations
    }

    pub fn releases(&self) -> u64 {
        self.releases
    }

    /// Handles of every kind not yet released.
    pub fn outstanding(&self) -> usize {
        self.outstanding.len()
    }

    pub fn allocate(&mut self, kind: ChannelKind) -> Result<ChannelHandle, PoolExhausted> {
        if kind.is_voice() {
            if let Capacity::Limited(cap) = self.capacity {
                if self.in_use >= cap {
                    return Err(PoolExhausted {
                        capacity: self.capacity,
                    });
                }
            }
            self.in_use += 1;
            self.peak_in_use = self.peak_in_use.max(self.in_use);
        } else {
            self.notification_in_use += 1;
            self.peak_notification_in_use =
                self.peak_notification_in_use.max(self.notification_in_use);
        }
        let id = self.next_id;
        self.next_id += 1;
        self.outstanding.insert(id);
        self.allocations += 1;
        Ok(ChannelHandle { id, kind })
    }

    /// Returns a handle to the pool.
    ///
    /// # Panics
    /// If the handle is not outstanding (double release or foreign handle).
    pub fn release(&mut self, handle: ChannelHandle) {
        assert!(
            self.outstanding.remove(&handle.id),
            "channel {} released twice or never allocated",
            handle.id
        );
        if handle.kind.is_voice() {
            self.in_use -= 1;
        } else {
            self.notification_in_use -= 1;
        }
        self.releases += 1;
    }
}
