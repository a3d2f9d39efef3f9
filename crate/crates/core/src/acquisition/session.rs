//! From packets to frames: clock correction, marker collection and synchronization.

use serde::{Deserialize, Serialize};

use super::clock::{ClockCorrector, OffsetLogEntry};
use super::sync::{FrameSet, SyncConfig, SyncStats, Synchronizer};
use super::wire::{DorsalPacket, ImuPacket, Packet, SegmentMarker};
use crate::glove_sim::SimulatedSession;

/// Everything a session's packets amount to once synchronized.
#[derive(Debug, Clone)]
pub struct IngestOutput {
    pub frames: Vec<FrameSet>,
    /// In arrival order, on the server clock.
    pub markers: Vec<SegmentMarker>,
    pub clock_log: Vec<OffsetLogEntry>,
    pub report: IngestReport,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IngestReport {
    pub packets: u64,
    pub invalid_samples: u64,
    pub rejected_probes: u64,
    pub sync: SyncStats,
}

/// IMU timestamps arrive on the glove clock and are moved onto the server
/// clock with the latest probe result; tracker timestamps are already on it.
pub struct SessionIngest {
    corrector: ClockCorrector,
    sync: Synchronizer,
    frames: Vec<FrameSet>,
    markers: Vec<SegmentMarker>,
    packets: u64,
    invalid: u64,
}

impl SessionIngest {
    pub fn new(config: SyncConfig) -> Self {
        Self {
            corrector: ClockCorrector::new(),
            sync: Synchronizer::new(config),
            frames: Vec::new(),
            markers: Vec::new(),
            packets: 0,
            invalid: 0,
        }
    }

    pub fn push(&mut self, packet: &Packet) {
        self.packets += 1;
        match packet {
            Packet::Imu(p) => match p.to_sample() {
                Ok(mut s) => {
                    s.timestamp_ns = self.corrector.correct(s.timestamp_ns);
                    self.sync.push_imu(s);
                }
                Err(_) => self.invalid += 1,
            },
            Packet::Dorsal(p) => match p.to_sample() {
                Ok(s) => self.sync.push_dorsal(s),
                Err(_) => self.invalid += 1,
            },
            Packet::ClockProbe(p) => {
                // rejected probes are counted by the corrector
                let _ = self.corrector.observe(p);
            }
            Packet::SegmentMarker(m) => self.markers.push(*m),
        }
        self.frames.extend(self.sync.drain());
    }

    /// Frames completed so far, removed from the buffer.
    pub fn take_frames(&mut self) -> Vec<FrameSet> {
        std::mem::take(&mut self.frames)
    }

    pub fn finish(mut self) -> IngestOutput {
        self.frames.extend(self.sync.finish());
        IngestOutput {
            frames: self.frames,
            markers: self.markers,
            clock_log: self.corrector.log().to_vec(),
            report: IngestReport {
                packets: self.packets,
                invalid_samples: self.invalid,
                rejected_probes: self.corrector.rejected() as u64,
                sync: self.sync.stats(),
            },
        }
    }
}

pub fn ingest<'a, I>(packets: I, config: SyncConfig) -> IngestOutput
where
    I: IntoIterator<Item = &'a Packet>,
{
    let mut s = SessionIngest::new(config);
    for p in packets {
        s.push(p);
    }
    s.finish()
}

/// The packet sequence a glove and tracker would deliver for a simulated
/// session, ordered by server-clock arrival.
pub fn session_packets(session: &SimulatedSession) -> Vec<Packet> {
    let mut keyed: Vec<(u64, Packet)> = Vec::new();
    for p in &session.probes {
        keyed.push((p.t2, Packet::ClockProbe(*p)));
    }
    for m in &session.markers {
        keyed.push((m.start_ns, Packet::SegmentMarker(*m)));
    }
    for (k, frame) in session.trajectory.frames.iter().enumerate() {
        for stream in &session.imu {
            keyed.push((frame.timestamp_ns, Packet::Imu(ImuPacket::from(&stream[k]))));
        }
        if let Some(d) = session.dorsal.get(k) {
            keyed.push((frame.timestamp_ns, Packet::Dorsal(DorsalPacket::from(d))));
        }
    }
    // stable: equal keys keep the insertion order above
    keyed.sort_by_key(|(t, _)| *t);
    keyed.into_iter().map(|(_, p)| p).collect()
}
