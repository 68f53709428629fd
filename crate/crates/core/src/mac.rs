//! Slotted CSMA/CA MAC: parameters, frame model, and per-node state.
//!
//! The state machine walks Init -> Idle -> Scanning -> Active and the
//! event-driven procedure itself lives in [`crate::sim`], which owns the
//! clock and the medium. This module keeps the per-node bookkeeping:
//! the FIFO data queue, the current channel-access attempt, pending
//! acknowledgment timers, and duplicate rejection.

use std::collections::{HashSet, VecDeque};

use crate::engine::EventHandle;
use crate::error::ConfigError;
use crate::time::{SimDuration, SimTime};

/// MAC and CSMA constants.
#[derive(Debug, Clone)]
pub struct MacParams {
    /// Seconds to wait for an acknowledgment before retrying.
    pub ack_wait: SimDuration,
    /// Retransmissions allowed after the first transmission of a frame.
    pub max_retransmissions: u32,
    pub min_backoff_exponent: u32,
    pub max_backoff_exponent: u32,
    /// CSMA backoff rounds allowed before a channel access failure.
    pub max_csma_backoffs: u32,
    /// Length of one clear-channel assessment window.
    pub channel_sensing: SimDuration,
    /// Slot quantum: 20 symbols = 320 us at 62.5 ksymbol/s.
    pub unit_backoff_period: SimDuration,
    /// Receive-to-transmit turnaround before an ACK goes out.
    pub ack_turnaround: SimDuration,
    /// Data queue depth per node.
    pub queue_capacity: usize,
    /// Require two consecutive idle sense windows before transmitting.
    pub double_cca: bool,
}

impl Default for MacParams {
    fn default() -> Self {
        MacParams {
            ack_wait: SimDuration::from_secs_f64(0.05),
            max_retransmissions: 5,
            min_backoff_exponent: 3,
            max_backoff_exponent: 5,
            max_csma_backoffs: 4,
            channel_sensing: SimDuration::from_secs_f64(0.1),
            unit_backoff_period: SimDuration::from_nanos(320_000),
            ack_turnaround: SimDuration::from_nanos(192_000),
            queue_capacity: 64,
            double_cca: false,
        }
    }
}

impl MacParams {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.min_backoff_exponent == 0
            || self.min_backoff_exponent > self.max_backoff_exponent
            || self.max_backoff_exponent > 8
        {
            return Err(ConfigError::BadParameter(format!(
                "backoff exponents must satisfy 0 < min <= max <= 8, got {}..{}",
                self.min_backoff_exponent, self.max_backoff_exponent
            )));
        }
        for (name, d) in [
            ("ack wait", self.ack_wait),
            ("channel sensing", self.channel_sensing),
            ("unit backoff period", self.unit_backoff_period),
        ] {
            if d.as_nanos() == 0 {
                return Err(ConfigError::BadParameter(format!(
                    "{name} duration must be positive"
                )));
            }
        }
        if self.queue_capacity == 0 {
            return Err(ConfigError::BadParameter(
                "queue capacity must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// Process-model states of the MAC.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MacState {
    /// Initializing, before the node joins the run.
    Init,
    /// Waiting: no transmission in progress, backoff delays run here.
    Idle,
    /// Requesting channel access: a carrier-sense window is open.
    Scanning,
    /// Transmitting, or holding the exchange until the ACK resolves.
    Active,
}

impl MacState {
    /// Legal process-model transitions.
    pub fn can_transition(self, to: MacState) -> bool {
        use MacState::*;
        matches!(
            (self, to),
            (Init, Idle) | (Idle, Scanning) | (Scanning, Active) | (Scanning, Idle) | (Active, Idle)
        )
    }
}

impl std::fmt::Display for MacState {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            MacState::Init => "init",
            MacState::Idle => "idle",
            MacState::Scanning => "scanning",
            MacState::Active => "active",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FrameKind {
    Data,
    Ack,
}

/// Why a frame left the system without reaching its destination.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum DropCause {
    /// CSMA gave up after the backoff limit.
    ChannelAccessFailure,
    /// No acknowledgment after the retry limit.
    RetryExhausted,
    /// FIFO queue was full on enqueue.
    QueueOverflow,
    /// Waited in a ring queue longer than the token queue timeout.
    TokenStarvation,
    /// Destination is not part of the network.
    NoRoute,
}

impl DropCause {
    pub const ALL: [DropCause; 5] = [
        DropCause::ChannelAccessFailure,
        DropCause::RetryExhausted,
        DropCause::QueueOverflow,
        DropCause::TokenStarvation,
        DropCause::NoRoute,
    ];

    pub fn name(self) -> &'static str {
        match self {
            DropCause::ChannelAccessFailure => "channel_access_failure",
            DropCause::RetryExhausted => "retry_exhausted",
            DropCause::QueueOverflow => "queue_overflow",
            DropCause::TokenStarvation => "token_starvation",
            DropCause::NoRoute => "no_route",
        }
    }
}

/// A data or acknowledgment unit in flight.
#[derive(Debug, Clone)]
pub struct Frame {
    pub id: u64,
    pub kind: FrameKind,
    pub source: usize,
    pub final_destination: usize,
    pub payload_bits: u32,
    pub created_at: SimTime,
    /// Nodes the frame has visited, starting with the source.
    pub hop_trace: Vec<usize>,
    /// For ACKs, the data frame being acknowledged.
    pub ack_for: Option<u64>,
}

impl Frame {
    pub fn new_data(
        id: u64,
        source: usize,
        final_destination: usize,
        payload_bits: u32,
        created_at: SimTime,
    ) -> Self {
        debug_assert!(payload_bits > 0, "data frames carry payload");
        Frame {
            id,
            kind: FrameKind::Data,
            source,
            final_destination,
            payload_bits,
            created_at,
            hop_trace: vec![source],
            ack_for: None,
        }
    }

    pub fn new_ack(
        id: u64,
        source: usize,
        payload_bits: u32,
        destination: usize,
        created_at: SimTime,
    ) -> Self {
        Frame {
            id,
            kind: FrameKind::Ack,
            source,
            final_destination: destination,
            payload_bits,
            created_at,
            hop_trace: vec![source],
            ack_for: None,
        }
    }
}

/// Progress of the current channel-access attempt for the head frame.
#[derive(Debug, Clone)]
pub struct TxAttempt {
    pub backoff_exponent: u32,
    /// Busy sense results so far in this CSMA round (NB).
    pub csma_backoffs: u32,
    /// Retransmissions of the head frame so far.
    pub retransmissions: u32,
    /// Start of the open sensing window, when Scanning.
    pub sense_started: Option<SimTime>,
    /// Idle windows already seen this attempt (for double CCA).
    pub idle_senses: u32,
}

impl TxAttempt {
    pub fn fresh(params: &MacParams) -> Self {
        TxAttempt {
            backoff_exponent: params.min_backoff_exponent,
            csma_backoffs: 0,
            retransmissions: 0,
            sense_started: None,
            idle_senses: 0,
        }
    }

    /// Restart CSMA after an ACK timeout; the retry count carries over
    /// and the backoff exponent resets.
    pub fn next_retry(&self, params: &MacParams) -> Self {
        TxAttempt {
            backoff_exponent: params.min_backoff_exponent,
            csma_backoffs: 0,
            retransmissions: self.retransmissions + 1,
            sense_started: None,
            idle_senses: 0,
        }
    }
}

/// A queued data frame plus the time it entered this node's queue.
#[derive(Debug, Clone)]
pub struct QueuedFrame {
    pub frame: Frame,
    pub enqueued_at: SimTime,
}

/// Awaiting acknowledgment for a transmitted data frame.
#[derive(Debug)]
pub struct PendingAck {
    pub frame_id: u64,
    pub timer: EventHandle,
}

/// Per-node MAC bookkeeping. All mutation happens on the engine thread.
pub struct NodeMac {
    pub id: usize,
    pub state: MacState,
    pub queue: VecDeque<QueuedFrame>,
    pub attempt: Option<TxAttempt>,
    pub pending_ack: Option<PendingAck>,
    /// ACKs waiting for the transmitter, bypassing the data queue.
    pub ack_backlog: VecDeque<Frame>,
    /// Data frame ids already accepted here (duplicate rejection).
    pub accepted: HashSet<u64>,
    /// ACKs that matched no pending exchange.
    pub stray_acks: u64,
    /// Ring only: cancellable idle-hold timer while holding the token.
    pub hold_timer: Option<EventHandle>,
}

impl NodeMac {
    pub fn new(id: usize) -> Self {
        NodeMac {
            id,
            state: MacState::Init,
            queue: VecDeque::new(),
            attempt: None,
            pending_ack: None,
            ack_backlog: VecDeque::new(),
            accepted: HashSet::new(),
            stray_acks: 0,
            hold_timer: None,
        }
    }

    pub fn head(&self) -> Option<&QueuedFrame> {
        self.queue.front()
    }

    /// True when the node may open a new channel-access attempt.
    pub fn ready_to_contend(&self) -> bool {
        self.state == MacState::Idle && self.attempt.is_none() && self.pending_ack.is_none()
    }
}
