//! Application-layer traffic: per-role generation parameters, destination
//! rules, and payload sizing.

use crate::error::ConfigError;
use crate::rng::{Distribution, RandomStream};
use crate::topology::{Network, NodeRole};

/// Smallest physical payload in bits.
pub const MIN_PAYLOAD_BITS: u32 = 8;
/// Default payload ceiling: a 127-byte PSDU.
pub const DEFAULT_MAX_PAYLOAD_BITS: u32 = 1016;

/// How a generator picks the final destination of each packet.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DestinationRule {
    /// The node's own PAN coordinator.
    PanCoord,
    /// Uniform over coordinators other than the sender.
    AllCoordinators,
    /// Uniform over end devices other than the sender.
    AllNodes,
    /// The cyclic ring successor.
    ImmediateNext,
}

impl DestinationRule {
    pub fn name(self) -> &'static str {
        match self {
            DestinationRule::PanCoord => "pan_coord",
            DestinationRule::AllCoordinators => "all_coordinators",
            DestinationRule::AllNodes => "all_nodes",
            DestinationRule::ImmediateNext => "immediate_next",
        }
    }
}

/// Per-role generation parameters.
#[derive(Debug, Clone)]
pub struct TrafficProfile {
    /// Seconds between packets.
    pub interarrival: Distribution,
    /// Packet payload in bits, rounded and clamped when sampled.
    pub packet_size_bits: Distribution,
    /// Seconds until the generator starts.
    pub start_time: Distribution,
    /// Seconds at which the generator stops; infinity runs through the end.
    pub stop_time: f64,
    pub destination: DestinationRule,
    /// Generator pauses while the node's data queue holds at least this
    /// many frames; `None` generates unconditionally.
    pub backpressure_limit: Option<usize>,
}

impl TrafficProfile {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.stop_time.is_nan() || self.stop_time < 0.0 {
            return Err(ConfigError::BadProfile(
                "stop time must be non-negative or infinity".into(),
            ));
        }
        if let Some(0) = self.backpressure_limit {
            return Err(ConfigError::BadProfile(
                "backpressure limit must be at least 1".into(),
            ));
        }
        if self.interarrival == Distribution::Constant(0.0) {
            return Err(ConfigError::BadProfile(
                "interarrival time must not be constant zero".into(),
            ));
        }
        Ok(())
    }

    /// Draw a payload size: rounded to whole bits and clamped into
    /// [8, max_payload_bits] unless clamping is disabled (strict sizes).
    pub fn sample_size(
        &self,
        stream: &mut RandomStream,
        max_payload_bits: u32,
        strict_sizes: bool,
    ) -> u32 {
        let raw = self.packet_size_bits.sample(stream).round();
        let bits = if raw < MIN_PAYLOAD_BITS as f64 {
            MIN_PAYLOAD_BITS
        } else {
            raw as u32
        };
        if strict_sizes {
            bits
        } else {
            bits.min(max_payload_bits)
        }
    }
}

/// Pick a final destination under `rule` for `node`. Eligible sets are
/// validated non-empty at scenario build time.
pub fn choose_destination(
    node: usize,
    rule: DestinationRule,
    net: &Network,
    stream: &mut RandomStream,
) -> usize {
    match rule {
        DestinationRule::PanCoord => net
            .coordinator_of(node)
            .expect("node has no coordinator for PanCoord rule"),
        DestinationRule::AllCoordinators => {
            let eligible: Vec<usize> = net
                .coordinators()
                .filter(|c| c.id != node)
                .map(|c| c.id)
                .collect();
            assert!(!eligible.is_empty(), "no eligible coordinators");
            eligible[stream.next_below(eligible.len() as u64) as usize]
        }
        DestinationRule::AllNodes => {
            let eligible: Vec<usize> = net
                .end_devices()
                .filter(|n| n.id != node)
                .map(|n| n.id)
                .collect();
            assert!(!eligible.is_empty(), "no eligible end devices");
            eligible[stream.next_below(eligible.len() as u64) as usize]
        }
        DestinationRule::ImmediateNext => net.successor(node),
    }
}

/// Check a (node, rule) pair has somewhere to send, at build time.
pub fn validate_destination_rule(
    node: usize,
    rule: DestinationRule,
    net: &Network,
) -> Result<(), ConfigError> {
    let ok = match rule {
        DestinationRule::PanCoord => net.coordinator_of(node).is_some_and(|c| c != node),
        DestinationRule::AllCoordinators => net.coordinators().any(|c| c.id != node),
        DestinationRule::AllNodes => net.end_devices().any(|n| n.id != node),
        DestinationRule::ImmediateNext => !net.ring_order.is_empty(),
    };
    if ok {
        Ok(())
    } else {
        Err(ConfigError::BadProfile(format!(
            "node {node} ({:?}) has an empty destination set under rule {}",
            net.node(node).role,
            rule.name()
        )))
    }
}

/// Role a profile applies to.
pub fn role_of(net: &Network, node: usize) -> NodeRole {
    net.node(node).role
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::StreamKind;
    use crate::topology::{build_cluster, build_ring, build_star};

    fn stream() -> RandomStream {
        RandomStream::for_node(3, 0, StreamKind::Destination)
    }

    #[test]
    fn star_end_device_targets_coordinator() {
        let net = build_star(5).unwrap();
        let mut s = stream();
        for _ in 0..50 {
            assert_eq!(choose_destination(3, DestinationRule::PanCoord, &net, &mut s), 0);
        }
    }

    #[test]
    fn ring_destination_is_deterministic_successor() {
        let net = build_ring(7).unwrap();
        let mut s = stream();
        for i in 0..7 {
            assert_eq!(
                choose_destination(i, DestinationRule::ImmediateNext, &net, &mut s),
                (i + 1) % 7
            );
        }
    }

    #[test]
    fn coordinator_picks_other_coordinators_uniformly() {
        // Coordinator 0 of {0,1,2}: picks 1 or 2, never itself, roughly
        // evenly over 10^5 draws.
        let net = build_cluster(3, 4, false).unwrap();
        let mut s = stream();
        let n = 100_000;
        let mut counts = [0u32; 3];
        for _ in 0..n {
            let d = choose_destination(0, DestinationRule::AllCoordinators, &net, &mut s);
            counts[d] += 1;
        }
        assert_eq!(counts[0], 0);
        let half = n as f64 / 2.0;
        for &c in &counts[1..] {
            assert!(
                (c as f64 - half).abs() < half * 0.02,
                "count {c} deviates more than 2% from {half}"
            );
        }
    }

    #[test]
    fn all_nodes_excludes_sender() {
        let net = build_star(4).unwrap();
        let mut s = stream();
        for _ in 0..1000 {
            let d = choose_destination(2, DestinationRule::AllNodes, &net, &mut s);
            assert_ne!(d, 2);
            assert_ne!(d, 0, "coordinator is not an end device target");
        }
    }

    #[test]
    fn empty_eligible_set_is_a_build_error() {
        let net = build_star(3).unwrap();
        // The lone coordinator has no peer coordinators, and is its own
        // coordinator, so neither rule works for it.
        assert!(validate_destination_rule(0, DestinationRule::AllCoordinators, &net).is_err());
        assert!(validate_destination_rule(0, DestinationRule::PanCoord, &net).is_err());
        assert!(validate_destination_rule(1, DestinationRule::PanCoord, &net).is_ok());
        // A ring node has no coordinator.
        let ring = build_ring(4).unwrap();
        assert!(validate_destination_rule(1, DestinationRule::PanCoord, &ring).is_err());
    }

    #[test]
    fn sizes_round_and_clamp() {
        let profile = TrafficProfile {
            interarrival: Distribution::constant(1.0).unwrap(),
            packet_size_bits: Distribution::constant(1024.0).unwrap(),
            start_time: Distribution::constant(0.0).unwrap(),
            stop_time: f64::INFINITY,
            destination: DestinationRule::PanCoord,
            backpressure_limit: None,
        };
        let mut s = stream();
        // Default clamp pulls 1024 down to the 1016-bit payload ceiling.
        assert_eq!(profile.sample_size(&mut s, DEFAULT_MAX_PAYLOAD_BITS, false), 1016);
        // Strict sizes disable the ceiling.
        assert_eq!(profile.sample_size(&mut s, DEFAULT_MAX_PAYLOAD_BITS, true), 1024);
        // Tiny samples clamp up to 8 bits either way.
        let tiny = TrafficProfile {
            packet_size_bits: Distribution::constant(1.0).unwrap(),
            ..profile
        };
        assert_eq!(tiny.sample_size(&mut s, DEFAULT_MAX_PAYLOAD_BITS, true), 8);
    }
}
