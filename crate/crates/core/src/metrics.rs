//! Metric accumulators and the per-run report.
//!
//! Three reception-side metrics are kept apart on purpose:
//! `sent` counts application-generated payload bits whether or not they
//! ever arrive; `received` counts intact MAC-level data receptions summed
//! over every node, so a relayed frame counts once per hop; `throughput`
//! counts only payload bits that reached their final destination's sink,
//! deduplicated by frame id. The frame ledger additionally tracks custody
//! of every data frame so the conservation identity
//! created = delivered + dropped + in-flight holds exactly per run.

use std::collections::BTreeMap;
use std::collections::HashMap;

use crate::error::ConfigError;
use crate::mac::DropCause;
use crate::time::{SimDuration, SimTime};

/// One time bucket of the four reported metrics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricBucket {
    pub start: f64,
    pub throughput_bps: f64,
    pub sent_bps: f64,
    pub received_bps: f64,
    pub dropped_count: u64,
}

/// Whole-window aggregates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GlobalMetrics {
    pub throughput_bps: f64,
    pub sent_bps: f64,
    pub received_bps: f64,
    pub dropped_per_sec: f64,
    pub dropped_total: u64,
}

/// Per-node totals over the measurement window, in bits and counts.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct NodeTotals {
    pub sent_bits: u64,
    pub received_bits: u64,
    pub sink_bits: u64,
    pub dropped: u64,
}

/// Report of a finished run.
#[derive(Debug, Clone)]
pub struct MetricsReport {
    pub bucket_width: f64,
    pub warmup: f64,
    pub duration: f64,
    pub buckets: Vec<MetricBucket>,
    pub global: GlobalMetrics,
    pub drop_causes: BTreeMap<&'static str, u64>,
    pub per_node: Vec<NodeTotals>,
    /// Whole-run frame accounting (not windowed).
    pub conservation: Conservation,
    pub duplicates: u64,
    pub stray_acks: u64,
    /// Mean sink latency in seconds over the window, if anything arrived.
    pub mean_latency_s: Option<f64>,
}

/// Whole-run frame conservation counters.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Conservation {
    pub created: u64,
    pub delivered: u64,
    pub dropped: u64,
    /// created - delivered - dropped: frames still queued somewhere.
    pub in_flight: u64,
}

/// Lifecycle of one data frame in the custody ledger.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum FrameState {
    /// Owned by `owner`'s queue (or in the air from it).
    InFlight { owner: usize },
    Delivered,
    Dropped,
}

/// Tracks which node currently owns each live data frame. Custody moves
/// to the next hop the moment it accepts the frame intact; a stale
/// sender-side drop of a frame that already moved on (its ACK was lost)
/// is phantom and must not be counted, or conservation would double-book.
#[derive(Debug, Default)]
pub struct FrameLedger {
    states: HashMap<u64, FrameState>,
    created: u64,
    delivered: u64,
    dropped: u64,
}

impl FrameLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn created(&mut self, frame_id: u64, source: usize) {
        let prev = self
            .states
            .insert(frame_id, FrameState::InFlight { owner: source });
        debug_assert!(prev.is_none(), "frame id reused");
        self.created += 1;
    }

    /// Next hop accepted the frame intact: custody moves.
    pub fn custody_to(&mut self, frame_id: u64, node: usize) {
        if let Some(state @ FrameState::InFlight { .. }) = self.states.get_mut(&frame_id) {
            *state = FrameState::InFlight { owner: node };
        }
    }

    /// Frame reached its sink. Returns false for a duplicate delivery.
    pub fn delivered(&mut self, frame_id: u64) -> bool {
        match self.states.get_mut(&frame_id) {
            Some(state @ FrameState::InFlight { .. }) => {
                *state = FrameState::Delivered;
                self.delivered += 1;
                true
            }
            _ => false,
        }
    }

    /// A node dropped its copy. Counts only if that node still has
    /// custody; returns false for phantom drops of superseded copies.
    pub fn dropped(&mut self, frame_id: u64, at_node: usize) -> bool {
        match self.states.get_mut(&frame_id) {
            Some(state @ FrameState::InFlight { .. }) => {
                let FrameState::InFlight { owner } = *state else {
                    unreachable!()
                };
                if owner == at_node {
                    *state = FrameState::Dropped;
                    self.dropped += 1;
                    true
                } else {
                    false
                }
            }
            _ => false,
        }
    }

    pub fn owner(&self, frame_id: u64) -> Option<usize> {
        match self.states.get(&frame_id) {
            Some(FrameState::InFlight { owner }) => Some(*owner),
            _ => None,
        }
    }

    pub fn conservation(&self) -> Conservation {
        Conservation {
            created: self.created,
            delivered: self.delivered,
            dropped: self.dropped,
            in_flight: self.created - self.delivered - self.dropped,
        }
    }

    /// Frame ids still in flight, for custody-walk checks.
    pub fn in_flight_ids(&self) -> Vec<u64> {
        let mut ids: Vec<u64> = self
            .states
            .iter()
            .filter(|(_, s)| matches!(s, FrameState::InFlight { .. }))
            .map(|(&id, _)| id)
            .collect();
        ids.sort_unstable();
        ids
    }
}

/// Windowed metric accumulators. Events outside [warmup, duration) are
/// ignored; all arithmetic is integer until the report is built.
pub struct MetricsCollector {
    warmup: SimTime,
    duration: SimTime,
    bucket_width: SimDuration,
    num_buckets: usize,
    sent_bits: Vec<u64>,
    received_bits: Vec<u64>,
    sink_bits: Vec<u64>,
    dropped: Vec<u64>,
    per_node: Vec<NodeTotals>,
    drop_causes: BTreeMap<&'static str, u64>,
    duplicates: u64,
    stray_acks: u64,
    latency_sum: f64,
    latency_count: u64,
    pub ledger: FrameLedger,
}

impl MetricsCollector {
    pub fn new(
        num_nodes: usize,
        warmup: SimTime,
        duration: SimTime,
        bucket_width: SimDuration,
    ) -> Result<Self, ConfigError> {
        if warmup >= duration {
            return Err(ConfigError::BadParameter(format!(
                "warmup ({warmup}) must precede the run end ({duration})"
            )));
        }
        if bucket_width.as_nanos() == 0 {
            return Err(ConfigError::BadParameter(
                "bucket width must be positive".into(),
            ));
        }
        let window = duration - warmup;
        let num_buckets = window.as_nanos().div_ceil(bucket_width.as_nanos()) as usize;
        Ok(MetricsCollector {
            warmup,
            duration,
            bucket_width,
            num_buckets,
            sent_bits: vec![0; num_buckets],
            received_bits: vec![0; num_buckets],
            sink_bits: vec![0; num_buckets],
            dropped: vec![0; num_buckets],
            per_node: vec![NodeTotals::default(); num_nodes],
            drop_causes: DropCause::ALL.iter().map(|c| (c.name(), 0)).collect(),
            duplicates: 0,
            stray_acks: 0,
            latency_sum: 0.0,
            latency_count: 0,
            ledger: FrameLedger::new(),
        })
    }

    fn bucket_of(&self, t: SimTime) -> Option<usize> {
        if t < self.warmup || t >= self.duration {
            return None;
        }
        let idx = ((t - self.warmup).as_nanos() / self.bucket_width.as_nanos()) as usize;
        Some(idx.min(self.num_buckets - 1))
    }

    pub fn record_sent(&mut self, node: usize, bits: u32, t: SimTime) {
        if let Some(b) = self.bucket_of(t) {
            self.sent_bits[b] += bits as u64;
            self.per_node[node].sent_bits += bits as u64;
        }
    }

    pub fn record_received(&mut self, node: usize, bits: u32, t: SimTime) {
        if let Some(b) = self.bucket_of(t) {
            self.received_bits[b] += bits as u64;
            self.per_node[node].received_bits += bits as u64;
        }
    }

    pub fn record_sink(&mut self, node: usize, bits: u32, latency: SimDuration, t: SimTime) {
        if let Some(b) = self.bucket_of(t) {
            self.sink_bits[b] += bits as u64;
            self.per_node[node].sink_bits += bits as u64;
            self.latency_sum += latency.as_secs_f64();
            self.latency_count += 1;
        }
    }

    pub fn record_dropped(&mut self, node: usize, cause: DropCause, t: SimTime) {
        *self.drop_causes.get_mut(cause.name()).expect("cause known") += 1;
        if let Some(b) = self.bucket_of(t) {
            self.dropped[b] += 1;
            self.per_node[node].dropped += 1;
        }
    }

    pub fn record_duplicate(&mut self) {
        self.duplicates += 1;
    }

    pub fn record_stray_ack(&mut self) {
        self.stray_acks += 1;
    }

    pub fn report(&self) -> MetricsReport {
        let window_s = (self.duration - self.warmup).as_secs_f64();
        let width_s = self.bucket_width.as_secs_f64();
        let warmup_s = self.warmup.as_secs_f64();
        let buckets: Vec<MetricBucket> = (0..self.num_buckets)
            .map(|i| {
                // The last bucket may be clipped by the run end.
                let start = warmup_s + i as f64 * width_s;
                let end = (start + width_s).min(self.duration.as_secs_f64());
                let span = end - start;
                MetricBucket {
                    start,
                    throughput_bps: self.sink_bits[i] as f64 / span,
                    sent_bps: self.sent_bits[i] as f64 / span,
                    received_bps: self.received_bits[i] as f64 / span,
                    dropped_count: self.dropped[i],
                }
            })
            .collect();
        let total = |v: &[u64]| v.iter().sum::<u64>();
        let dropped_total = total(&self.dropped);
        let global = GlobalMetrics {
            throughput_bps: total(&self.sink_bits) as f64 / window_s,
            sent_bps: total(&self.sent_bits) as f64 / window_s,
            received_bps: total(&self.received_bits) as f64 / window_s,
            dropped_per_sec: dropped_total as f64 / window_s,
            dropped_total,
        };
        MetricsReport {
            bucket_width: width_s,
            warmup: warmup_s,
            duration: self.duration.as_secs_f64(),
            buckets,
            global,
            drop_causes: self.drop_causes.clone(),
            per_node: self.per_node.clone(),
            conservation: self.ledger.conservation(),
            duplicates: self.duplicates,
            stray_acks: self.stray_acks,
            mean_latency_s: (self.latency_count > 0)
                .then(|| self.latency_sum / self.latency_count as f64),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn collector() -> MetricsCollector {
        MetricsCollector::new(
            3,
            SimTime::from_secs_f64(20.0),
            SimTime::from_secs_f64(620.0),
            SimDuration::from_secs_f64(10.0),
        )
        .unwrap()
    }

    #[test]
    fn zero_traffic_yields_zero_report() {
        let report = collector().report();
        assert_eq!(report.global.throughput_bps, 0.0);
        assert_eq!(report.global.sent_bps, 0.0);
        assert_eq!(report.global.dropped_total, 0);
        assert_eq!(report.buckets.len(), 60);
        assert!(report.buckets.iter().all(|b| b.sent_bps == 0.0));
    }

    #[test]
    fn warmup_excludes_early_events() {
        let mut m = collector();
        m.record_sent(0, 1024, SimTime::from_secs_f64(5.0));
        m.record_sent(0, 1024, SimTime::from_secs_f64(25.0));
        let report = m.report();
        let sent_total: f64 = report.global.sent_bps * 600.0;
        assert!((sent_total - 1024.0).abs() < 1e-9);
    }

    #[test]
    fn bucket_sums_match_global() {
        let mut m = collector();
        // Spread deliveries across the window.
        for k in 0..600 {
            let t = SimTime::from_secs_f64(20.0 + k as f64);
            m.record_sink(1, 1024, SimDuration::from_secs_f64(0.1), t);
        }
        let report = m.report();
        let from_buckets: f64 = report
            .buckets
            .iter()
            .map(|b| b.throughput_bps * report.bucket_width)
            .sum();
        let from_global = report.global.throughput_bps * 600.0;
        assert!(
            ((from_buckets - from_global) / from_global).abs() < 1e-6,
            "bucket sum {from_buckets} != global {from_global}"
        );
    }

    #[test]
    fn dropped_total_equals_cause_sum() {
        let mut m = collector();
        m.record_dropped(0, DropCause::QueueOverflow, SimTime::from_secs_f64(30.0));
        m.record_dropped(1, DropCause::RetryExhausted, SimTime::from_secs_f64(31.0));
        m.record_dropped(2, DropCause::TokenStarvation, SimTime::from_secs_f64(32.0));
        let report = m.report();
        let cause_sum: u64 = report.drop_causes.values().sum();
        assert_eq!(report.global.dropped_total, 3);
        assert_eq!(cause_sum, 3);
    }

    #[test]
    fn warmup_must_precede_end() {
        assert!(MetricsCollector::new(
            1,
            SimTime::from_secs_f64(700.0),
            SimTime::from_secs_f64(620.0),
            SimDuration::from_secs_f64(10.0),
        )
        .is_err());
    }

    #[test]
    fn ledger_tracks_custody_and_conservation() {
        let mut ledger = FrameLedger::new();
        ledger.created(1, 0);
        ledger.created(2, 0);
        ledger.created(3, 1);
        // Frame 1: relayed then delivered.
        ledger.custody_to(1, 2);
        assert!(ledger.delivered(1));
        assert!(!ledger.delivered(1), "duplicate delivery detected");
        // Frame 2: custody moved to node 2, then the stale source drop is
        // phantom and the real owner's drop counts.
        ledger.custody_to(2, 2);
        assert!(!ledger.dropped(2, 0), "phantom drop must not count");
        assert!(ledger.dropped(2, 2));
        let c = ledger.conservation();
        assert_eq!(c.created, 3);
        assert_eq!(c.delivered, 1);
        assert_eq!(c.dropped, 1);
        assert_eq!(c.in_flight, 1);
        assert_eq!(ledger.in_flight_ids(), vec![3]);
        assert_eq!(ledger.owner(3), Some(1));
    }
}
