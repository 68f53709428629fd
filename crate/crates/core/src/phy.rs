//! Radio medium model: transmission timing, carrier sensing, and
//! collision resolution on logical channels.
//!
//! Propagation is instantaneous and sensing is perfect: connectivity is
//! purely logical, per-channel. Any overlap between two transmissions on
//! the same channel corrupts both everywhere (no capture effect), and
//! traffic on different channels never interacts.

use std::collections::VecDeque;

use crate::error::{ConfigError, SimError};
use crate::mac::{Frame, FrameKind};
use crate::time::{SimDuration, SimTime};

/// Logical channel index, stable for the lifetime of a scenario.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ChannelId(pub usize);

/// PHY constants. The 2.4 GHz band label is informational; no propagation
/// model consumes it.
#[derive(Debug, Clone)]
pub struct PhyParams {
    /// Air data rate in bits per second.
    pub data_rate_bps: f64,
    /// Symbols per second; the unit backoff period is 20 symbols.
    pub symbol_rate: f64,
    /// PHY + MAC framing bits added to every data frame.
    pub overhead_bits: u32,
    /// Total bits of an acknowledgment frame, framing included.
    pub ack_frame_bits: u32,
    /// Informational band label.
    pub frequency_band: String,
}

impl Default for PhyParams {
    fn default() -> Self {
        PhyParams {
            data_rate_bps: 250_000.0,
            symbol_rate: 62_500.0,
            overhead_bits: 152,
            ack_frame_bits: 88,
            frequency_band: "2.4 GHz".to_string(),
        }
    }
}

impl PhyParams {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.data_rate_bps > 0.0 && self.data_rate_bps.is_finite()) {
            return Err(ConfigError::BadParameter(
                "data rate must be positive".into(),
            ));
        }
        if self.ack_frame_bits == 0 {
            return Err(ConfigError::BadParameter(
                "ACK frame must have nonzero bits".into(),
            ));
        }
        if !(self.symbol_rate > 0.0 && self.symbol_rate.is_finite()) {
            return Err(ConfigError::BadParameter(
                "symbol rate must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Bits a frame occupies on air: payload plus framing for data, the
    /// fixed ACK size for acknowledgments.
    pub fn bits_on_air(&self, frame: &Frame) -> u32 {
        match frame.kind {
            FrameKind::Data => frame.payload_bits + self.overhead_bits,
            FrameKind::Ack => self.ack_frame_bits,
        }
    }

    /// Airtime of a frame at this data rate, rounded to the nanosecond.
    /// At 250 kbps every bit is exactly 4 us, so no rounding occurs.
    pub fn transmission_duration(&self, frame: &Frame) -> SimDuration {
        let bits = self.bits_on_air(frame) as f64;
        SimDuration::from_nanos((bits * 1e9 / self.data_rate_bps).round() as u64)
    }
}

/// One transmission registered on the medium.
#[derive(Debug, Clone)]
pub struct TransmissionRecord {
    pub channel: ChannelId,
    pub sender: usize,
    pub frame: Frame,
    pub start: SimTime,
    pub end: SimTime,
    pub collided: bool,
}

/// Identifier of an in-flight transmission, returned by
/// [`Medium::begin_transmission`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TxId(u64);

/// Outcome of a completed transmission, uniform across all listeners on
/// the channel.
#[derive(Debug, Clone)]
pub struct DeliveryOutcome {
    pub record: TransmissionRecord,
    /// Frame arrives intact at every listener iff no overlap corrupted it.
    pub intact: bool,
}

struct ActiveTx {
    id: TxId,
    record: TransmissionRecord,
}

struct ChannelState {
    active: Vec<ActiveTx>,
    /// Finished records still visible to sensing windows, pruned against
    /// the sensing horizon.
    recent: VecDeque<(SimTime, SimTime)>,
}

/// The shared radio medium across all logical channels.
pub struct Medium {
    channels: Vec<ChannelState>,
    /// How far back a sensing window can reach; finished records older
    /// than this are pruned.
    horizon: SimDuration,
    next_tx: u64,
}

impl Medium {
    /// `num_channels` logical channels; `horizon` must be at least the
    /// longest carrier-sense window the MAC will ever use.
    pub fn new(num_channels: usize, horizon: SimDuration) -> Self {
        Medium {
            channels: (0..num_channels)
                .map(|_| ChannelState {
                    active: Vec::new(),
                    recent: VecDeque::new(),
                })
                .collect(),
            horizon,
            next_tx: 0,
        }
    }

    pub fn num_channels(&self) -> usize {
        self.channels.len()
    }

    /// True iff any transmission overlaps the half-open window
    /// [t, t + duration). A record ending exactly at `t` does not count.
    pub fn busy_during(&self, channel: ChannelId, t: SimTime, duration: SimDuration) -> bool {
        let window_end = t + duration;
        let ch = &self.channels[channel.0];
        ch.active
            .iter()
            .any(|a| a.record.start < window_end && a.record.end > t)
            || ch
                .recent
                .iter()
                .any(|&(start, end)| start < window_end && end > t)
    }

    /// Register a transmission starting now. Marks collision flags on
    /// every transmission it overlaps. The same sender must not already
    /// be transmitting (the MAC serializes its transmitter).
    pub fn begin_transmission(
        &mut self,
        channel: ChannelId,
        sender: usize,
        frame: Frame,
        start: SimTime,
        duration: SimDuration,
    ) -> Result<(TxId, SimTime), SimError> {
        for ch in &self.channels {
            if ch.active.iter().any(|a| a.record.sender == sender) {
                return Err(SimError::ConcurrentTransmit { node: sender });
            }
        }
        let end = start + duration;
        let ch = &mut self.channels[channel.0];
        // Any already-active transmission on this channel overlaps the new
        // one: corrupt all of them, symmetric and capture-free.
        let mut collided = false;
        for a in ch.active.iter_mut() {
            a.record.collided = true;
            collided = true;
        }
        let id = TxId(self.next_tx);
        self.next_tx += 1;
        ch.active.push(ActiveTx {
            id,
            record: TransmissionRecord {
                channel,
                sender,
                frame,
                start,
                end,
                collided,
            },
        });
        Ok((id, end))
    }

    /// Complete a transmission at its end time and resolve delivery.
    pub fn finish_transmission(&mut self, id: TxId, now: SimTime) -> DeliveryOutcome {
        let ch_index = self
            .channels
            .iter()
            .position(|ch| ch.active.iter().any(|a| a.id == id))
            .expect("finishing unknown transmission");
        let ch = &mut self.channels[ch_index];
        let pos = ch.active.iter().position(|a| a.id == id).unwrap();
        let active = ch.active.swap_remove(pos);
        debug_assert_eq!(active.record.end, now, "transmission finished off-schedule");
        ch.recent.push_back((active.record.start, active.record.end));
        // Prune records no sensing window can still see.
        let cutoff = now.saturating_sub(SimTime::ZERO + self.horizon);
        let cutoff = SimTime::ZERO + cutoff;
        while let Some(&(_, end)) = ch.recent.front() {
            if end <= cutoff {
                ch.recent.pop_front();
            } else {
                break;
            }
        }
        let intact = !active.record.collided;
        DeliveryOutcome {
            record: active.record,
            intact,
        }
    }

    /// True while the node has any transmission on the air.
    pub fn is_transmitting(&self, sender: usize) -> bool {
        self.channels
            .iter()
            .any(|ch| ch.active.iter().any(|a| a.record.sender == sender))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mac::Frame;

    fn data_frame(id: u64, bits: u32) -> Frame {
        Frame::new_data(id, 0, 1, bits, SimTime::ZERO)
    }

    fn medium() -> Medium {
        Medium::new(2, SimDuration::from_secs_f64(0.2))
    }

    #[test]
    fn durations_match_bit_arithmetic() {
        let phy = PhyParams::default();
        // (1024 + 152) / 250000 = 4.704 ms
        let d = phy.transmission_duration(&data_frame(1, 1024));
        assert_eq!(d.as_nanos(), 4_704_000);
        // 88 / 250000 = 0.352 ms, regardless of the (zero) ACK payload
        let ack = Frame::new_ack(2, 1, 0, 1, SimTime::ZERO);
        let d = phy.transmission_duration(&ack);
        assert_eq!(d.as_nanos(), 352_000);
        assert!(d.as_nanos() > 0);
    }

    #[test]
    fn sense_empty_medium_is_idle() {
        let m = medium();
        assert!(!m.busy_during(
            ChannelId(0),
            SimTime::from_secs_f64(1.0),
            SimDuration::from_secs_f64(0.1)
        ));
    }

    #[test]
    fn short_transmission_inside_long_window_is_busy() {
        let mut m = medium();
        let t0 = SimTime::from_secs_f64(1.0);
        m.begin_transmission(
            ChannelId(0),
            0,
            data_frame(1, 100),
            t0,
            SimDuration::from_secs_f64(0.001),
        )
        .unwrap();
        assert!(m.busy_during(ChannelId(0), t0, SimDuration::from_secs_f64(0.1)));
    }

    #[test]
    fn transmission_ending_exactly_at_window_start_is_idle() {
        let mut m = medium();
        let t0 = SimTime::from_secs_f64(1.0);
        let (id, end) = m
            .begin_transmission(
                ChannelId(0),
                0,
                data_frame(1, 100),
                t0,
                SimDuration::from_secs_f64(0.5),
            )
            .unwrap();
        m.finish_transmission(id, end);
        assert!(!m.busy_during(ChannelId(0), end, SimDuration::from_secs_f64(0.1)));
    }

    #[test]
    fn lone_transmission_delivers_intact() {
        let mut m = medium();
        let (id, end) = m
            .begin_transmission(
                ChannelId(0),
                0,
                data_frame(1, 1024),
                SimTime::ZERO,
                SimDuration::from_secs_f64(0.004704),
            )
            .unwrap();
        let out = m.finish_transmission(id, end);
        assert!(out.intact);
    }

    #[test]
    fn any_overlap_corrupts_both_ways() {
        let mut m = medium();
        let (a, a_end) = m
            .begin_transmission(
                ChannelId(0),
                0,
                data_frame(1, 1024),
                SimTime::ZERO,
                SimDuration::from_secs_f64(0.004),
            )
            .unwrap();
        // Second sender overlaps by a hair before the first ends.
        let (b, b_end) = m
            .begin_transmission(
                ChannelId(0),
                1,
                data_frame(2, 1024),
                SimTime::from_secs_f64(0.003999),
                SimDuration::from_secs_f64(0.004),
            )
            .unwrap();
        assert!(!m.finish_transmission(a, a_end).intact);
        assert!(!m.finish_transmission(b, b_end).intact);
    }

    #[test]
    fn different_channels_never_interact() {
        let mut m = medium();
        let (a, a_end) = m
            .begin_transmission(
                ChannelId(0),
                0,
                data_frame(1, 1024),
                SimTime::ZERO,
                SimDuration::from_secs_f64(0.004),
            )
            .unwrap();
        let (b, b_end) = m
            .begin_transmission(
                ChannelId(1),
                1,
                data_frame(2, 1024),
                SimTime::ZERO,
                SimDuration::from_secs_f64(0.004),
            )
            .unwrap();
        assert!(m.finish_transmission(a, a_end).intact);
        assert!(m.finish_transmission(b, b_end).intact);
        assert!(!m.busy_during(
            ChannelId(1),
            b_end,
            SimDuration::from_secs_f64(0.1)
        ));
    }

    #[test]
    fn same_sender_cannot_transmit_twice() {
        let mut m = medium();
        m.begin_transmission(
            ChannelId(0),
            0,
            data_frame(1, 1024),
            SimTime::ZERO,
            SimDuration::from_secs_f64(0.004),
        )
        .unwrap();
        let err = m.begin_transmission(
            ChannelId(0),
            0,
            data_frame(2, 1024),
            SimTime::from_secs_f64(0.001),
            SimDuration::from_secs_f64(0.004),
        );
        assert!(matches!(err, Err(SimError::ConcurrentTransmit { node: 0 })));
    }
}
