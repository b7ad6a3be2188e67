//! Deterministic discrete-event core.

mod channels;
mod queue;
mod rng;
mod workload;

pub use channels::{Capacity, ChannelHandle, ChannelKind, ChannelPool, PoolExhausted};
pub use queue::{EventHandle, EventQueue, SchedulingInPast, SimEvent};
pub use rng::{SimRng, MULTIPLIER, ZERO_SEED_REPLACEMENT};
pub use workload::{
    generate_workload, RandomWorkload, ScriptedCall, WorkloadError, WorkloadMode, WorkloadSpec,
};
