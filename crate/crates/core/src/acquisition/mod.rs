//! Sensor data plane: wire packets, recordings, clock correction and
//! approximate-time synchronization into frames.

mod clock;
mod recording;
mod session;
mod sync;
mod wire;

pub use clock::{estimate_clock_offset, ClockCorrector, ClockError, ClockOffset, ClockProbe, OffsetLogEntry};
pub use recording::{
    read_recording, read_recording_header, record, replay, PacketReader, RawPacket, RecordingError, RecordingHeader,
    RecordingWriter, Replay, ReplaySpeed, DEFAULT_STREAM_COUNT, RECORDING_HEADER_LEN,
};
pub use session::{ingest, session_packets, IngestOutput, IngestReport, SessionIngest};
pub use sync::{
    match_streams, ApproxMatcher, DorsalPolicy, FrameSet, Matched, StreamStats, SyncConfig, SyncStats, Synchronizer,
    Timestamped, DEFAULT_WINDOW_NS,
};
pub use wire::{
    decode_packet, encode_into, encode_packet, frame_len, DorsalPacket, ImuPacket, Packet, SegmentMarker, WireError,
    CRC_LEN, HEADER_LEN, MAX_PACKET_LEN,
};
