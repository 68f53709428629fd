//! The three evaluated topologies and their forwarding rules.
//!
//! Star: every end device talks only to the single PAN coordinator, which
//! relays toward destination end devices. Cluster: three coordinators on a
//! full-mesh backbone channel, each serving its own end devices on a
//! private channel (one shared channel when `shared_channel` is set).
//! Ring: no coordinator; frames travel to the cyclic successor and a
//! rotating token admits one data exchange at a time.

use crate::error::ConfigError;
use crate::mac::Frame;
use crate::phy::ChannelId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NodeRole {
    PanCoordinator,
    EndDevice,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NetworkKind {
    Cluster,
    Star,
    Ring,
}

impl NetworkKind {
    pub fn name(self) -> &'static str {
        match self {
            NetworkKind::Cluster => "cluster",
            NetworkKind::Star => "star",
            NetworkKind::Ring => "ring",
        }
    }
}

/// Static description of one node.
#[derive(Debug, Clone)]
pub struct NodeSpec {
    pub id: usize,
    pub role: NodeRole,
    /// Cluster index for cluster members; 0 elsewhere.
    pub cluster_id: usize,
    /// Home channel: intra-cluster channel for cluster members, the single
    /// shared channel for star and ring.
    pub channel: ChannelId,
}

/// Immutable topology; only `token_holder` moves during a ring run.
#[derive(Debug, Clone)]
pub struct Network {
    pub kind: NetworkKind,
    pub nodes: Vec<NodeSpec>,
    /// Logical links, each listed once as (lower id, higher id).
    pub edges: Vec<(usize, usize)>,
    pub num_channels: usize,
    /// Coordinator-mesh channel in cluster scenarios.
    pub backbone: Option<ChannelId>,
    /// Cyclic order for ring scenarios.
    pub ring_order: Vec<usize>,
    /// Current token holder (ring only); advanced by the engine.
    pub token_holder: Option<usize>,
}

/// Where a frame must go next.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NextHop {
    Node(usize),
    /// Final destination is not part of this network.
    NoRoute,
}

/// Star of one coordinator (node 0) and `num_end_devices` end devices on a
/// single channel.
pub fn build_star(num_end_devices: usize) -> Result<Network, ConfigError> {
    if num_end_devices == 0 {
        return Err(ConfigError::BadTopology(
            "a star needs at least one end device".into(),
        ));
    }
    let channel = ChannelId(0);
    let mut nodes = vec![NodeSpec {
        id: 0,
        role: NodeRole::PanCoordinator,
        cluster_id: 0,
        channel,
    }];
    let mut edges = Vec::new();
    for i in 1..=num_end_devices {
        nodes.push(NodeSpec {
            id: i,
            role: NodeRole::EndDevice,
            cluster_id: 0,
            channel,
        });
        edges.push((0, i));
    }
    Ok(Network {
        kind: NetworkKind::Star,
        nodes,
        edges,
        num_channels: 1,
        backbone: None,
        ring_order: Vec::new(),
        token_holder: None,
    })
}

/// Cluster scenario: `coordinators` PAN coordinators on a full-mesh
/// backbone, each with `end_devices_per_cluster` local end devices.
/// Coordinators are nodes 0..coordinators; each gets channel c for its
/// cluster and all share the backbone channel. With `shared_channel` every
/// node sits on one channel instead.
pub fn build_cluster(
    coordinators: usize,
    end_devices_per_cluster: usize,
    shared_channel: bool,
) -> Result<Network, ConfigError> {
    if coordinators < 2 {
        return Err(ConfigError::BadTopology(
            "a cluster scenario needs at least two coordinators".into(),
        ));
    }
    if end_devices_per_cluster == 0 {
        return Err(ConfigError::BadTopology(
            "each cluster needs at least one end device".into(),
        ));
    }
    let mut nodes = Vec::new();
    let mut edges = Vec::new();
    for c in 0..coordinators {
        nodes.push(NodeSpec {
            id: c,
            role: NodeRole::PanCoordinator,
            cluster_id: c,
            channel: if shared_channel { ChannelId(0) } else { ChannelId(c) },
        });
    }
    for a in 0..coordinators {
        for b in (a + 1)..coordinators {
            edges.push((a, b));
        }
    }
    let mut next_id = coordinators;
    for c in 0..coordinators {
        for _ in 0..end_devices_per_cluster {
            nodes.push(NodeSpec {
                id: next_id,
                role: NodeRole::EndDevice,
                cluster_id: c,
                channel: if shared_channel { ChannelId(0) } else { ChannelId(c) },
            });
            edges.push((c, next_id));
            next_id += 1;
        }
    }
    let (num_channels, backbone) = if shared_channel {
        (1, Some(ChannelId(0)))
    } else {
        (coordinators + 1, Some(ChannelId(coordinators)))
    };
    Ok(Network {
        kind: NetworkKind::Cluster,
        nodes,
        edges,
        num_channels,
        backbone,
        ring_order: Vec::new(),
        token_holder: None,
    })
}

/// Ring of `num_devices` end devices on one channel; node i's successor is
/// node (i+1) mod n and the token starts at node 0.
pub fn build_ring(num_devices: usize) -> Result<Network, ConfigError> {
    if num_devices < 3 {
        return Err(ConfigError::BadTopology(
            "a ring needs at least three devices".into(),
        ));
    }
    let channel = ChannelId(0);
    let nodes = (0..num_devices)
        .map(|id| NodeSpec {
            id,
            role: NodeRole::EndDevice,
            cluster_id: 0,
            channel,
        })
        .collect();
    let edges = (0..num_devices)
        .map(|i| {
            let j = (i + 1) % num_devices;
            (i.min(j), i.max(j))
        })
        .collect();
    Ok(Network {
        kind: NetworkKind::Ring,
        nodes,
        edges,
        num_channels: 1,
        backbone: None,
        ring_order: (0..num_devices).collect(),
        token_holder: Some(0),
    })
}

impl Network {
    pub fn node(&self, id: usize) -> &NodeSpec {
        &self.nodes[id]
    }

    pub fn contains(&self, id: usize) -> bool {
        id < self.nodes.len()
    }

    pub fn coordinators(&self) -> impl Iterator<Item = &NodeSpec> {
        self.nodes
            .iter()
            .filter(|n| n.role == NodeRole::PanCoordinator)
    }

    pub fn end_devices(&self) -> impl Iterator<Item = &NodeSpec> {
        self.nodes.iter().filter(|n| n.role == NodeRole::EndDevice)
    }

    /// The coordinator an end device is attached to.
    pub fn coordinator_of(&self, node: usize) -> Option<usize> {
        let cluster = self.nodes[node].cluster_id;
        self.coordinators()
            .find(|c| c.cluster_id == cluster)
            .map(|c| c.id)
    }

    /// Ring successor of a node.
    pub fn successor(&self, node: usize) -> usize {
        let pos = self
            .ring_order
            .iter()
            .position(|&n| n == node)
            .expect("node not in ring order");
        self.ring_order[(pos + 1) % self.ring_order.len()]
    }

    /// Channels a node listens on: its home channel, plus the backbone for
    /// cluster coordinators.
    pub fn channels_of(&self, node: usize) -> Vec<ChannelId> {
        let spec = &self.nodes[node];
        let mut channels = vec![spec.channel];
        if spec.role == NodeRole::PanCoordinator {
            if let Some(bb) = self.backbone {
                if bb != spec.channel {
                    channels.push(bb);
                }
            }
        }
        channels
    }

    /// Nodes listening on a channel.
    pub fn listeners(&self, channel: ChannelId) -> Vec<usize> {
        self.nodes
            .iter()
            .filter(|n| self.channels_of(n.id).contains(&channel))
            .map(|n| n.id)
            .collect()
    }

    /// Channel carrying a transmission from `from` to `to`.
    pub fn hop_channel(&self, from: usize, to: usize) -> ChannelId {
        let a = &self.nodes[from];
        let b = &self.nodes[to];
        if a.role == NodeRole::PanCoordinator && b.role == NodeRole::PanCoordinator {
            self.backbone.expect("coordinator pair without backbone")
        } else if a.role == NodeRole::EndDevice {
            a.channel
        } else {
            b.channel
        }
    }

    /// Next hop of `frame` standing at `at`. Star relays through the
    /// coordinator; cluster routes end device -> local coordinator ->
    /// destination's coordinator -> destination; ring always forwards to
    /// the cyclic successor.
    pub fn next_hop(&self, at: usize, frame: &Frame) -> NextHop {
        let dest = frame.final_destination;
        debug_assert_ne!(dest, at, "next_hop called at the destination");
        if !self.contains(dest) {
            return NextHop::NoRoute;
        }
        match self.kind {
            NetworkKind::Star => {
                if self.nodes[at].role == NodeRole::EndDevice {
                    NextHop::Node(0)
                } else {
                    NextHop::Node(dest)
                }
            }
            NetworkKind::Cluster => {
                let here = &self.nodes[at];
                match here.role {
                    NodeRole::EndDevice => {
                        NextHop::Node(self.coordinator_of(at).expect("end device without coordinator"))
                    }
                    NodeRole::PanCoordinator => {
                        let target = &self.nodes[dest];
                        if target.role == NodeRole::PanCoordinator {
                            NextHop::Node(dest)
                        } else if target.cluster_id == here.cluster_id {
                            NextHop::Node(dest)
                        } else {
                            NextHop::Node(
                                self.coordinator_of(dest)
                                    .expect("destination without coordinator"),
                            )
                        }
                    }
                }
            }
            NetworkKind::Ring => NextHop::Node(self.successor(at)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::time::SimTime;

    fn frame_to(source: usize, dest: usize) -> Frame {
        Frame::new_data(1, source, dest, 1024, SimTime::ZERO)
    }

    #[test]
    fn star_shape() {
        let net = build_star(14).unwrap();
        assert_eq!(net.nodes.len(), 15);
        assert_eq!(net.edges.len(), 14);
        assert!(net.edges.iter().all(|&(a, _)| a == 0));
        assert_eq!(net.coordinators().count(), 1);
        assert_eq!(net.num_channels, 1);
    }

    #[test]
    fn star_minimal_and_empty() {
        let net = build_star(1).unwrap();
        assert_eq!(net.nodes.len(), 2);
        assert_eq!(net.edges.len(), 1);
        assert!(build_star(0).is_err());
    }

    #[test]
    fn star_has_no_device_to_device_edge() {
        for n in [1, 5, 14, 40] {
            let net = build_star(n).unwrap();
            assert!(net
                .edges
                .iter()
                .all(|&(a, b)| net.nodes[a].role == NodeRole::PanCoordinator
                    || net.nodes[b].role == NodeRole::PanCoordinator));
        }
    }

    #[test]
    fn star_routes_through_coordinator() {
        let net = build_star(5).unwrap();
        let f = frame_to(1, 2);
        assert_eq!(net.next_hop(1, &f), NextHop::Node(0));
        assert_eq!(net.next_hop(0, &f), NextHop::Node(2));
    }

    #[test]
    fn cluster_shape_and_channels() {
        let net = build_cluster(3, 4, false).unwrap();
        assert_eq!(net.nodes.len(), 15);
        assert_eq!(net.coordinators().count(), 3);
        // 3 intra-cluster channels + 1 backbone.
        assert_eq!(net.num_channels, 4);
        assert_eq!(net.backbone, Some(ChannelId(3)));
        // Coordinator mesh: 3 edges; 12 attachment edges.
        assert_eq!(net.edges.len(), 3 + 12);
        // Each coordinator listens on its own channel and the backbone.
        assert_eq!(net.channels_of(0), vec![ChannelId(0), ChannelId(3)]);
        // End devices listen only on their cluster channel.
        let ed = net.end_devices().next().unwrap().id;
        assert_eq!(net.channels_of(ed).len(), 1);
    }

    #[test]
    fn cluster_minimal_and_invalid() {
        let net = build_cluster(2, 1, false).unwrap();
        assert_eq!(net.nodes.len(), 4);
        assert!(build_cluster(1, 4, false).is_err());
        assert!(build_cluster(3, 0, false).is_err());
    }

    #[test]
    fn cluster_routes_across_backbone() {
        let net = build_cluster(3, 4, false).unwrap();
        // End device in cluster 0 is node 3; end device in cluster 1 is node 7.
        let ed_a = 3;
        let ed_b = 7;
        assert_eq!(net.nodes[ed_a].cluster_id, 0);
        assert_eq!(net.nodes[ed_b].cluster_id, 1);
        let f = frame_to(ed_a, ed_b);
        assert_eq!(net.next_hop(ed_a, &f), NextHop::Node(0));
        assert_eq!(net.next_hop(0, &f), NextHop::Node(1));
        assert_eq!(net.next_hop(1, &f), NextHop::Node(ed_b));
        // Hop channels: intra 0, backbone, intra 1.
        assert_eq!(net.hop_channel(ed_a, 0), ChannelId(0));
        assert_eq!(net.hop_channel(0, 1), ChannelId(3));
        assert_eq!(net.hop_channel(1, ed_b), ChannelId(1));
    }

    #[test]
    fn shared_channel_flag_collapses_channels() {
        let net = build_cluster(3, 4, true).unwrap();
        assert_eq!(net.num_channels, 1);
        assert!(net.nodes.iter().all(|n| n.channel == ChannelId(0)));
    }

    #[test]
    fn ring_shape() {
        let net = build_ring(15).unwrap();
        assert_eq!(net.nodes.len(), 15);
        assert_eq!(net.coordinators().count(), 0);
        assert_eq!(net.token_holder, Some(0));
        for i in 0..15 {
            assert_eq!(net.successor(i), (i + 1) % 15);
        }
        assert!(build_ring(3).is_ok());
        assert!(build_ring(2).is_err());
    }

    #[test]
    fn ring_forwards_around_the_cycle() {
        let net = build_ring(5).unwrap();
        let f = frame_to(0, 3);
        // Path 0 -> 1 -> 2 -> 3.
        let mut at = 0;
        let mut hops = Vec::new();
        while at != 3 {
            match net.next_hop(at, &f) {
                NextHop::Node(n) => {
                    hops.push(n);
                    at = n;
                }
                NextHop::NoRoute => panic!("unexpected NoRoute"),
            }
        }
        assert_eq!(hops, vec![1, 2, 3]);
    }

    #[test]
    fn unknown_destination_has_no_route() {
        let net = build_star(3).unwrap();
        let f = frame_to(1, 99);
        assert_eq!(net.next_hop(1, &f), NextHop::NoRoute);
    }
}
