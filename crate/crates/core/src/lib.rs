//! Discrete-event simulator for IEEE 802.15.4 low-rate WPANs.
//!
//! Models slotted CSMA/CA over logical radio channels and compares the
//! cluster, star, and ring topologies on four metrics: throughput, traffic
//! sent, traffic received, and packets dropped. Runs are deterministic per
//! (scenario, seed): two runs with the same inputs replay bit-identical
//! event traces.

pub mod engine;
pub mod error;
pub mod mac;
pub mod metrics;
pub mod phy;
pub mod rng;
pub mod sim;
pub mod time;
pub mod topology;
pub mod trace;
pub mod traffic;

pub use engine::{Event, EventHandle, EventQueue, RunSummary};
pub use error::{ConfigError, SimError};
pub use mac::{DropCause, Frame, FrameKind, MacParams, MacState};
pub use metrics::{GlobalMetrics, MetricBucket, MetricsReport};
pub use phy::{ChannelId, Medium, PhyParams};
pub use rng::{Distribution, RandomStream, StreamKind, GENERATOR_NAME};
pub use sim::{EventPayload, SimConfig, Simulator, TokenParams, TopologySpec};
pub use time::{SimDuration, SimTime};
pub use topology::{build_cluster, build_ring, build_star, Network, NetworkKind, NodeRole};
pub use trace::{NullSink, TraceEvent, TraceSink, VecSink, WriterSink};
pub use traffic::{choose_destination, DestinationRule, TrafficProfile};
