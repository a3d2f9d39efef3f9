//! Recording files: a 16-byte header followed by wire packets verbatim.
//!
//! ```text
//! 0   4  magic "FSGR"
//! 4   4  version u32 (1)
//! 8   4  stream count u32
//! 12  4  reserved u32 (0)
//! ```

use std::fs::File;
use std::io::{self, BufReader, BufWriter, ErrorKind, Read, Write};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use super::wire::{decode_packet, encode_into, frame_len, Packet, HEADER_LEN, MAX_PACKET_LEN};

pub const RECORDING_MAGIC: [u8; 4] = *b"FSGR";
pub const RECORDING_VERSION: u32 = 1;
pub const RECORDING_HEADER_LEN: usize = 16;
/// 16 IMUs and the dorsal tracker.
pub const DEFAULT_STREAM_COUNT: u32 = 17;

#[derive(Debug, thiserror::Error)]
pub enum RecordingError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error(transparent)]
    Stream(#[from] io::Error),
    #[error("not a recording: {0}")]
    BadHeader(String),
    #[error("corrupt recording after byte {last_good_offset}: {reason}")]
    CorruptFile { last_good_offset: u64, reason: String },
}

/// Reads wire packets back to back from any byte stream.
pub struct PacketReader<R> {
    inner: R,
    offset: u64,
    buf: Vec<u8>,
    failed: bool,
}

/// One packet as read: decoded, plus the exact bytes it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct RawPacket {
    pub packet: Packet,
    pub bytes: Vec<u8>,
}

/// Fills `buf` completely; Ok(false) on a clean end of input before the first byte.
fn read_full<R: Read>(r: &mut R, buf: &mut [u8]) -> io::Result<(bool, usize)> {
    let mut got = 0;
    while got < buf.len() {
        match r.read(&mut buf[got..]) {
            Ok(0) => return Ok((got > 0, got)),
            Ok(n) => got += n,
            Err(e) if e.kind() == ErrorKind::Interrupted => {}
            Err(e) => return Err(e),
        }
    }
    Ok((true, got))
}

impl<R: Read> PacketReader<R> {
    /// `offset` is the stream position of the first packet, used in error reports.
    pub fn new(inner: R, offset: u64) -> Self {
        Self { inner, offset, buf: Vec::with_capacity(MAX_PACKET_LEN), failed: false }
    }

    /// Bytes consumed by complete, valid packets so far.
    pub fn offset(&self) -> u64 {
        self.offset
    }

    fn corrupt(&mut self, reason: impl Into<String>) -> RecordingError {
        self.failed = true;
        RecordingError::CorruptFile { last_good_offset: self.offset, reason: reason.into() }
    }

    pub fn next_raw(&mut self) -> Option<Result<RawPacket, RecordingError>> {
        if self.failed {
            return None;
        }
        let mut header = [0u8; HEADER_LEN];
        let (any, got) = match read_full(&mut self.inner, &mut header) {
            Ok(r) => r,
            Err(e) => {
                self.failed = true;
                return Some(Err(e.into()));
            }
        };
        if !any {
            return None;
        }
        if got < HEADER_LEN {
            return Some(Err(self.corrupt(format!("truncated packet header ({got} of {HEADER_LEN} bytes)"))));
        }
        let total = match frame_len(&header) {
            Ok(n) => n,
            Err(e) => return Some(Err(self.corrupt(e.to_string()))),
        };
        self.buf.clear();
        self.buf.extend_from_slice(&header);
        self.buf.resize(total, 0);
        match read_full(&mut self.inner, &mut self.buf[HEADER_LEN..]) {
            Ok((_, got)) if got < total - HEADER_LEN => {
                return Some(Err(self.corrupt(format!("truncated packet ({} of {total} bytes)", HEADER_LEN + got))))
            }
            Ok(_) => {}
            Err(e) => {
                self.failed = true;
                return Some(Err(e.into()));
            }
        }
        match decode_packet(&self.buf) {
            Ok((packet, used)) => {
                debug_assert_eq!(used, total);
                self.offset += total as u64;
                Some(Ok(RawPacket { packet, bytes: self.buf.clone() }))
            }
            Err(e) => Some(Err(self.corrupt(e.to_string()))),
        }
    }
}

impl<R: Read> Iterator for PacketReader<R> {
    type Item = Result<Packet, RecordingError>;

    fn next(&mut self) -> Option<Self::Item> {
        self.next_raw().map(|r| r.map(|p| p.packet))
    }
}

pub struct RecordingWriter<W: Write> {
    inner: W,
    buf: Vec<u8>,
    packets: u64,
}

impl<W: Write> RecordingWriter<W> {
    pub fn new(mut inner: W, stream_count: u32) -> io::Result<Self> {
        let mut header = [0u8; RECORDING_HEADER_LEN];
        header[..4].copy_from_slice(&RECORDING_MAGIC);
        header[4..8].copy_from_slice(&RECORDING_VERSION.to_le_bytes());
        header[8..12].copy_from_slice(&stream_count.to_le_bytes());
        inner.write_all(&header)?;
        Ok(Self { inner, buf: Vec::with_capacity(MAX_PACKET_LEN), packets: 0 })
    }

    pub fn write_packet(&mut self, packet: &Packet) -> io::Result<()> {
        self.buf.clear();
        encode_into(packet, &mut self.buf);
        self.inner.write_all(&self.buf)?;
        self.packets += 1;
        Ok(())
    }

    /// Writes already-encoded packet bytes unchanged.
    pub fn write_raw(&mut self, bytes: &[u8]) -> io::Result<()> {
        self.inner.write_all(bytes)?;
        self.packets += 1;
        Ok(())
    }

    pub fn packets_written(&self) -> u64 {
        self.packets
    }

    pub fn finish(mut self) -> io::Result<W> {
        self.inner.flush()?;
        Ok(self.inner)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RecordingHeader {
    pub version: u32,
    pub stream_count: u32,
}

pub fn read_recording_header<R: Read>(r: &mut R) -> Result<RecordingHeader, RecordingError> {
    let mut h = [0u8; RECORDING_HEADER_LEN];
    let (_, got) = read_full(r, &mut h)?;
    if got < RECORDING_HEADER_LEN {
        return Err(RecordingError::BadHeader(format!("file shorter than the {RECORDING_HEADER_LEN}-byte header")));
    }
    if h[..4] != RECORDING_MAGIC {
        return Err(RecordingError::BadHeader(format!("bad magic {:02x?}", &h[..4])));
    }
    let word = |i: usize| u32::from_le_bytes(h[i..i + 4].try_into().expect("4 bytes"));
    let version = word(4);
    if version != RECORDING_VERSION {
        return Err(RecordingError::BadHeader(format!("unsupported recording version {version}")));
    }
    Ok(RecordingHeader { version, stream_count: word(8) })
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> RecordingError + '_ {
    move |source| RecordingError::Io { path: path.to_path_buf(), source }
}

/// Writes `packets` to a new recording at `path`; returns the packet count.
pub fn record<'a, I>(packets: I, path: &Path) -> Result<u64, RecordingError>
where
    I: IntoIterator<Item = &'a Packet>,
{
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = RecordingWriter::new(BufWriter::new(file), DEFAULT_STREAM_COUNT).map_err(io_err(path))?;
    for p in packets {
        w.write_packet(p).map_err(io_err(path))?;
    }
    let n = w.packets_written();
    w.finish().map_err(io_err(path))?;
    Ok(n)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReplaySpeed {
    /// Sleep so packets come out at the pace their timestamps imply.
    Realtime,
    /// As fast as the file can be read.
    Max,
}

/// Iterator over a recording. Stops after the first error.
pub struct Replay {
    reader: PacketReader<BufReader<File>>,
    header: RecordingHeader,
    speed: ReplaySpeed,
    clock: Option<(Instant, u64)>,
    latest_ns: u64,
}

impl Replay {
    pub fn header(&self) -> RecordingHeader {
        self.header
    }

    pub fn next_raw(&mut self) -> Option<Result<RawPacket, RecordingError>> {
        let item = self.reader.next_raw()?;
        if let (Ok(p), ReplaySpeed::Realtime) = (&item, self.speed) {
            // streams are interleaved and on different clocks; pace by the running maximum
            let t = p.packet.timestamp_ns();
            match self.clock {
                None => self.clock = Some((Instant::now(), t)),
                Some((start, t0)) if t > self.latest_ns => {
                    let due = start + Duration::from_nanos(t - t0);
                    let now = Instant::now();
                    if due > now {
                        std::thread::sleep(due - now);
                    }
                }
                Some(_) => {}
            }
            self.latest_ns = self.latest_ns.max(t);
        }
        Some(item)
    }
}

impl Iterator for Replay {
    type Item = Result<Packet, RecordingError>;

    fn next(&mut self) -> Option<Self::Item> {
        self.next_raw().map(|r| r.map(|p| p.packet))
    }
}

pub fn replay(path: &Path, speed: ReplaySpeed) -> Result<Replay, RecordingError> {
    let mut file = BufReader::new(File::open(path).map_err(io_err(path))?);
    let header = read_recording_header(&mut file)?;
    Ok(Replay {
        reader: PacketReader::new(file, RECORDING_HEADER_LEN as u64),
        header,
        speed,
        clock: None,
        latest_ns: 0,
    })
}

/// Reads a whole recording. Corruption is an error even if earlier packets were fine.
pub fn read_recording(path: &Path) -> Result<Vec<Packet>, RecordingError> {
    replay(path, ReplaySpeed::Max)?.collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::acquisition::{ClockProbe, SegmentMarker};
    use crate::glove_sim::SegmentKind;

    fn packets() -> Vec<Packet> {
        (0..20u64)
            .map(|i| match i % 3 {
                0 => Packet::ClockProbe(ClockProbe { probe_id: i as u8, t1: i, t2: i + 1, t3: i + 2, t4: i + 3 }),
                1 => Packet::SegmentMarker(SegmentMarker { kind: SegmentKind::Rest, start_ns: i * 1000 }),
                _ => Packet::Imu(super::super::wire::ImuPacket {
                    sensor_id: (i % 16) as u8,
                    timestamp_ns: i * 1000,
                    orientation: [1.0, 0.0, 0.0, 0.0],
                    angular_velocity: [0.0; 3],
                    acceleration: [0.0, 0.0, 9.8],
                }),
            })
            .collect()
    }

    #[test]
    fn round_trip_and_header() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.fsgr");
        let ps = packets();
        assert_eq!(record(&ps, &path).unwrap(), 20);
        let bytes = std::fs::read(&path).unwrap();
        assert_eq!(&bytes[..4], b"FSGR");
        assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 17);
        assert_eq!(read_recording(&path).unwrap(), ps);
    }

    #[test]
    fn truncation_reports_last_good_offset() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.fsgr");
        let ps = packets();
        record(&ps, &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        let first = super::super::wire::encode_packet(&ps[0]).len() as u64;
        let second = super::super::wire::encode_packet(&ps[1]).len() as u64;
        let good = RECORDING_HEADER_LEN as u64 + first + second;
        for cut in [good + 3, good + 10, good + 20] {
            std::fs::write(&path, &bytes[..cut as usize]).unwrap();
            let mut r = replay(&path, ReplaySpeed::Max).unwrap();
            assert!(r.next().unwrap().is_ok());
            assert!(r.next().unwrap().is_ok());
            match r.next().unwrap() {
                Err(RecordingError::CorruptFile { last_good_offset, .. }) => assert_eq!(last_good_offset, good),
                other => panic!("expected CorruptFile, got {other:?}"),
            }
            assert!(r.next().is_none());
        }
        let mut flipped = bytes.clone();
        flipped[good as usize + 12] ^= 0xff;
        std::fs::write(&path, &flipped).unwrap();
        match read_recording(&path) {
            Err(RecordingError::CorruptFile { last_good_offset, .. }) => assert_eq!(last_good_offset, good),
            other => panic!("expected CorruptFile, got {other:?}"),
        }
    }

    #[test]
    fn header_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.fsgr");
        std::fs::write(&path, b"FSGR").unwrap();
        assert!(matches!(replay(&path, ReplaySpeed::Max), Err(RecordingError::BadHeader(_))));
        std::fs::write(&path, b"NOPE\x01\0\0\0\x11\0\0\0\0\0\0\0").unwrap();
        assert!(matches!(replay(&path, ReplaySpeed::Max), Err(RecordingError::BadHeader(_))));
        assert!(matches!(replay(&dir.path().join("missing"), ReplaySpeed::Max), Err(RecordingError::Io { .. })));
    }

    #[test]
    fn realtime_paces_by_timestamp() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.fsgr");
        let ps: Vec<Packet> = (0..4u64)
            .map(|i| Packet::SegmentMarker(SegmentMarker { kind: SegmentKind::Hold, start_ns: i * 20_000_000 }))
            .collect();
        record(&ps, &path).unwrap();
        let start = Instant::now();
        assert_eq!(replay(&path, ReplaySpeed::Realtime).unwrap().count(), 4);
        assert!(start.elapsed() >= Duration::from_millis(60));
    }
}
