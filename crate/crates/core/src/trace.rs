//! Per-event trace records, for debugging and for the property suites
//! that audit MAC behavior on full runs.

use std::io::Write;

use crate::mac::{DropCause, FrameKind, MacState};
use crate::phy::ChannelId;
use crate::time::SimTime;

/// One observable simulator event.
#[derive(Debug, Clone, PartialEq)]
pub enum TraceEvent {
    StateChange {
        node: usize,
        from: MacState,
        to: MacState,
    },
    /// Backoff drawn: wait `delay_slots` slots, then sense.
    Backoff {
        node: usize,
        frame: u64,
        be: u32,
        nb: u32,
        delay_slots: u32,
    },
    SenseStart {
        node: usize,
        channel: ChannelId,
        frame: u64,
    },
    SenseResult {
        node: usize,
        channel: ChannelId,
        frame: u64,
        busy: bool,
    },
    TxStart {
        node: usize,
        channel: ChannelId,
        frame: u64,
        kind: FrameKind,
        retransmission: u32,
    },
    TxEnd {
        node: usize,
        channel: ChannelId,
        frame: u64,
        kind: FrameKind,
        collided: bool,
    },
    /// Intact reception of a frame addressed to this node.
    Receive {
        node: usize,
        frame: u64,
        kind: FrameKind,
        duplicate: bool,
    },
    SinkDeliver {
        node: usize,
        frame: u64,
        bits: u32,
    },
    Acked {
        node: usize,
        frame: u64,
    },
    AckTimeout {
        node: usize,
        frame: u64,
        retransmissions: u32,
    },
    Drop {
        node: usize,
        frame: u64,
        cause: DropCause,
    },
    TokenGrant {
        node: usize,
    },
    TokenPass {
        from: usize,
        to: usize,
    },
    Generate {
        node: usize,
        frame: u64,
        bits: u32,
        destination: usize,
    },
    GeneratorBlocked {
        node: usize,
    },
}

impl TraceEvent {
    pub fn kind_name(&self) -> &'static str {
        match self {
            TraceEvent::StateChange { .. } => "state",
            TraceEvent::Backoff { .. } => "backoff",
            TraceEvent::SenseStart { .. } => "sense_start",
            TraceEvent::SenseResult { .. } => "sense_result",
            TraceEvent::TxStart { .. } => "tx_start",
            TraceEvent::TxEnd { .. } => "tx_end",
            TraceEvent::Receive { .. } => "receive",
            TraceEvent::SinkDeliver { .. } => "sink",
            TraceEvent::Acked { .. } => "acked",
            TraceEvent::AckTimeout { .. } => "ack_timeout",
            TraceEvent::Drop { .. } => "drop",
            TraceEvent::TokenGrant { .. } => "token_grant",
            TraceEvent::TokenPass { .. } => "token_pass",
            TraceEvent::Generate { .. } => "generate",
            TraceEvent::GeneratorBlocked { .. } => "generator_blocked",
        }
    }

    fn node(&self) -> usize {
        match *self {
            TraceEvent::StateChange { node, .. }
            | TraceEvent::Backoff { node, .. }
            | TraceEvent::SenseStart { node, .. }
            | TraceEvent::SenseResult { node, .. }
            | TraceEvent::TxStart { node, .. }
            | TraceEvent::TxEnd { node, .. }
            | TraceEvent::Receive { node, .. }
            | TraceEvent::SinkDeliver { node, .. }
            | TraceEvent::Acked { node, .. }
            | TraceEvent::AckTimeout { node, .. }
            | TraceEvent::Drop { node, .. }
            | TraceEvent::TokenGrant { node }
            | TraceEvent::Generate { node, .. }
            | TraceEvent::GeneratorBlocked { node } => node,
            TraceEvent::TokenPass { from, .. } => from,
        }
    }

    fn detail(&self) -> String {
        match self {
            TraceEvent::StateChange { from, to, .. } => format!("{from}->{to}"),
            TraceEvent::Backoff {
                frame,
                be,
                nb,
                delay_slots,
                ..
            } => format!("frame={frame} be={be} nb={nb} slots={delay_slots}"),
            TraceEvent::SenseStart { channel, frame, .. } => {
                format!("ch={} frame={frame}", channel.0)
            }
            TraceEvent::SenseResult {
                channel,
                frame,
                busy,
                ..
            } => format!("ch={} frame={frame} busy={busy}", channel.0),
            TraceEvent::TxStart {
                channel,
                frame,
                kind,
                retransmission,
                ..
            } => format!(
                "ch={} frame={frame} kind={kind:?} retx={retransmission}",
                channel.0
            ),
            TraceEvent::TxEnd {
                channel,
                frame,
                kind,
                collided,
                ..
            } => format!("ch={} frame={frame} kind={kind:?} collided={collided}", channel.0),
            TraceEvent::Receive {
                frame,
                kind,
                duplicate,
                ..
            } => format!("frame={frame} kind={kind:?} duplicate={duplicate}"),
            TraceEvent::SinkDeliver { frame, bits, .. } => format!("frame={frame} bits={bits}"),
            TraceEvent::Acked { frame, .. } => format!("frame={frame}"),
            TraceEvent::AckTimeout {
                frame,
                retransmissions,
                ..
            } => format!("frame={frame} retx={retransmissions}"),
            TraceEvent::Drop { frame, cause, .. } => {
                format!("frame={frame} cause={}", cause.name())
            }
            TraceEvent::TokenGrant { .. } => String::new(),
            TraceEvent::TokenPass { to, .. } => format!("to={to}"),
            TraceEvent::Generate {
                frame,
                bits,
                destination,
                ..
            } => format!("frame={frame} bits={bits} dest={destination}"),
            TraceEvent::GeneratorBlocked { .. } => String::new(),
        }
    }
}

/// Consumer of trace records.
pub trait TraceSink {
    fn record(&mut self, t: SimTime, event: &TraceEvent);
}

/// Discards everything; the default for batch runs.
pub struct NullSink;

impl TraceSink for NullSink {
    fn record(&mut self, _t: SimTime, _event: &TraceEvent) {}
}

/// Collects events in memory for test assertions.
#[derive(Default)]
pub struct VecSink {
    pub events: Vec<(SimTime, TraceEvent)>,
}

impl VecSink {
    pub fn new() -> Self {
        Self::default()
    }
}

impl TraceSink for VecSink {
    fn record(&mut self, t: SimTime, event: &TraceEvent) {
        self.events.push((t, event.clone()));
    }
}

/// Streams `t=<s> node=<id> kind=<event> detail=<...>` lines.
pub struct WriterSink<W: Write> {
    writer: W,
}

impl<W: Write> WriterSink<W> {
    pub fn new(writer: W) -> Self {
        WriterSink { writer }
    }

    pub fn into_inner(self) -> W {
        self.writer
    }
}

impl<W: Write> TraceSink for WriterSink<W> {
    fn record(&mut self, t: SimTime, event: &TraceEvent) {
        let _ = writeln!(
            self.writer,
            "t={} node={} kind={} detail={}",
            t,
            event.node(),
            event.kind_name(),
            event.detail()
        );
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn writer_sink_formats_lines() {
        let mut sink = WriterSink::new(Vec::new());
        sink.record(
            SimTime::from_secs_f64(1.5),
            &TraceEvent::TokenPass { from: 3, to: 4 },
        );
        let out = String::from_utf8(sink.into_inner()).unwrap();
        assert_eq!(out, "t=1.500000000 node=3 kind=token_pass detail=to=4\n");
    }
}
