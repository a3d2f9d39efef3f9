//! Binary packet format. All multi-byte fields are little-endian.
//!
//! ```text
//! offset  size  field
//! 0       4     magic "FSGV"
//! 4       1     version (1)
//! 5       1     type: 1 IMU, 2 dorsal, 3 clock probe, 4 segment marker
//! 6       2     payload length
//! 8       n     payload
//! 8+n     4     CRC32 (IEEE) of bytes 0..8+n
//! ```
//!
//! Payloads:
//! - IMU (53): sensor_id u8, timestamp u64 ns, orientation 4×f32 (w,x,y,z),
//!   angular velocity 3×f32 rad/s, acceleration 3×f32 m/s², 4 reserved zero bytes.
//! - Dorsal (56): timestamp u64, rotation 4×f32 (w,x,y,z), translation 3×f64 mm,
//!   8 reserved zero bytes.
//! - Clock probe (33): probe id u8, t1..t4 u64 ns.
//! - Segment marker (9): kind u8, start timestamp u64 ns.

use nalgebra::Vector3;

use super::clock::ClockProbe;
use crate::glove_sim::{DorsalSample, ImuSample, SegmentKind};
use crate::so3::UnitQuaternion;

pub const MAGIC: [u8; 4] = *b"FSGV";
pub const VERSION: u8 = 1;
pub const HEADER_LEN: usize = 8;
pub const CRC_LEN: usize = 4;

pub const TYPE_IMU: u8 = 1;
pub const TYPE_DORSAL: u8 = 2;
pub const TYPE_CLOCK_PROBE: u8 = 3;
pub const TYPE_SEGMENT_MARKER: u8 = 4;

pub const IMU_PAYLOAD_LEN: usize = 53;
pub const DORSAL_PAYLOAD_LEN: usize = 56;
pub const CLOCK_PROBE_PAYLOAD_LEN: usize = 33;
pub const SEGMENT_MARKER_PAYLOAD_LEN: usize = 9;
/// Longest packet on the wire.
pub const MAX_PACKET_LEN: usize = HEADER_LEN + DORSAL_PAYLOAD_LEN + CRC_LEN;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum WireError {
    #[error("bad magic {0:02x?}")]
    BadMagic([u8; 4]),
    #[error("unsupported protocol version {0}")]
    BadVersion(u8),
    #[error("bad length: {0}")]
    BadLength(String),
    #[error("checksum mismatch (stored {stored:08x}, computed {computed:08x})")]
    BadChecksum { stored: u32, computed: u32 },
    #[error("unknown packet type {0}")]
    UnknownType(u8),
    #[error("packet does not carry a valid sample: {0}")]
    InvalidSample(String),
}

/// IMU reading as carried on the wire (single precision).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImuPacket {
    pub sensor_id: u8,
    pub timestamp_ns: u64,
    pub orientation: [f32; 4],
    pub angular_velocity: [f32; 3],
    pub acceleration: [f32; 3],
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DorsalPacket {
    pub timestamp_ns: u64,
    pub rotation: [f32; 4],
    pub translation: [f64; 3],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SegmentMarker {
    pub kind: SegmentKind,
    pub start_ns: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Packet {
    Imu(ImuPacket),
    Dorsal(DorsalPacket),
    ClockProbe(ClockProbe),
    SegmentMarker(SegmentMarker),
}

impl Packet {
    pub fn type_code(&self) -> u8 {
        match self {
            Packet::Imu(_) => TYPE_IMU,
            Packet::Dorsal(_) => TYPE_DORSAL,
            Packet::ClockProbe(_) => TYPE_CLOCK_PROBE,
            Packet::SegmentMarker(_) => TYPE_SEGMENT_MARKER,
        }
    }

    /// The packet's own timestamp (t1 for clock probes).
    pub fn timestamp_ns(&self) -> u64 {
        match self {
            Packet::Imu(p) => p.timestamp_ns,
            Packet::Dorsal(p) => p.timestamp_ns,
            Packet::ClockProbe(p) => p.t1,
            Packet::SegmentMarker(m) => m.start_ns,
        }
    }
}

fn vec3_f32(v: &Vector3<f64>) -> [f32; 3] {
    [v.x as f32, v.y as f32, v.z as f32]
}

fn quat_f32(q: &UnitQuaternion) -> [f32; 4] {
    q.to_array().map(|c| c as f32)
}

fn quat_from_f32(q: [f32; 4]) -> Result<UnitQuaternion, WireError> {
    UnitQuaternion::from_array(q.map(f64::from)).map_err(|e| WireError::InvalidSample(e.to_string()))
}

impl From<&ImuSample> for ImuPacket {
    fn from(s: &ImuSample) -> Self {
        ImuPacket {
            sensor_id: s.sensor_id,
            timestamp_ns: s.timestamp_ns,
            orientation: quat_f32(&s.orientation),
            angular_velocity: vec3_f32(&s.angular_velocity),
            acceleration: vec3_f32(&s.linear_acceleration),
        }
    }
}

impl ImuPacket {
    /// Widens to double precision and renormalizes the quaternion.
    pub fn to_sample(&self) -> Result<ImuSample, WireError> {
        if self.sensor_id as usize >= crate::glove_sim::NUM_SENSORS {
            return Err(WireError::InvalidSample(format!("sensor id {} out of range", self.sensor_id)));
        }
        Ok(ImuSample {
            sensor_id: self.sensor_id,
            timestamp_ns: self.timestamp_ns,
            orientation: quat_from_f32(self.orientation)?,
            angular_velocity: Vector3::from(self.angular_velocity.map(f64::from)),
            linear_acceleration: Vector3::from(self.acceleration.map(f64::from)),
        })
    }
}

impl From<&DorsalSample> for DorsalPacket {
    fn from(s: &DorsalSample) -> Self {
        DorsalPacket {
            timestamp_ns: s.timestamp_ns,
            rotation: quat_f32(&s.rotation.to_quaternion()),
            translation: [s.translation.x, s.translation.y, s.translation.z],
        }
    }
}

impl DorsalPacket {
    pub fn to_sample(&self) -> Result<DorsalSample, WireError> {
        Ok(DorsalSample {
            timestamp_ns: self.timestamp_ns,
            rotation: quat_from_f32(self.rotation)?.to_rotation(),
            translation: Vector3::from(self.translation),
        })
    }
}

fn payload_len(type_code: u8) -> Option<usize> {
    match type_code {
        TYPE_IMU => Some(IMU_PAYLOAD_LEN),
        TYPE_DORSAL => Some(DORSAL_PAYLOAD_LEN),
        TYPE_CLOCK_PROBE => Some(CLOCK_PROBE_PAYLOAD_LEN),
        TYPE_SEGMENT_MARKER => Some(SEGMENT_MARKER_PAYLOAD_LEN),
        _ => None,
    }
}

pub fn encode_packet(packet: &Packet) -> Vec<u8> {
    let mut out = Vec::with_capacity(MAX_PACKET_LEN);
    encode_into(packet, &mut out);
    out
}

/// Appends the encoded packet to `out`.
pub fn encode_into(packet: &Packet, out: &mut Vec<u8>) {
    let start = out.len();
    let code = packet.type_code();
    let len = payload_len(code).expect("known type");
    out.extend_from_slice(&MAGIC);
    out.push(VERSION);
    out.push(code);
    out.extend_from_slice(&(len as u16).to_le_bytes());
    match packet {
        Packet::Imu(p) => {
            out.push(p.sensor_id);
            out.extend_from_slice(&p.timestamp_ns.to_le_bytes());
            for v in p.orientation.iter().chain(&p.angular_velocity).chain(&p.acceleration) {
                out.extend_from_slice(&v.to_le_bytes());
            }
            out.extend_from_slice(&[0; 4]);
        }
        Packet::Dorsal(p) => {
            out.extend_from_slice(&p.timestamp_ns.to_le_bytes());
            for v in &p.rotation {
                out.extend_from_slice(&v.to_le_bytes());
            }
            for v in &p.translation {
                out.extend_from_slice(&v.to_le_bytes());
            }
            out.extend_from_slice(&[0; 8]);
        }
        Packet::ClockProbe(p) => {
            out.push(p.probe_id);
            for t in [p.t1, p.t2, p.t3, p.t4] {
                out.extend_from_slice(&t.to_le_bytes());
            }
        }
        Packet::SegmentMarker(m) => {
            out.push(m.kind.code());
            out.extend_from_slice(&m.start_ns.to_le_bytes());
        }
    }
    debug_assert_eq!(out.len() - start, HEADER_LEN + len);
    let crc = crc32fast::hash(&out[start..]);
    out.extend_from_slice(&crc.to_le_bytes());
}

struct Cursor<'a>(&'a [u8]);

impl Cursor<'_> {
    fn take<const N: usize>(&mut self) -> [u8; N] {
        let (head, rest) = self.0.split_at(N);
        self.0 = rest;
        head.try_into().expect("split_at returned N bytes")
    }
    fn u8(&mut self) -> u8 {
        self.take::<1>()[0]
    }
    fn u64(&mut self) -> u64 {
        u64::from_le_bytes(self.take())
    }
    fn f32(&mut self) -> f32 {
        f32::from_le_bytes(self.take())
    }
    fn f64(&mut self) -> f64 {
        f64::from_le_bytes(self.take())
    }
}

/// Total length of the packet starting at `bytes`, from its header alone.
/// Needs at least [`HEADER_LEN`] bytes.
pub fn frame_len(header: &[u8]) -> Result<usize, WireError> {
    if header.len() < HEADER_LEN {
        return Err(WireError::BadLength(format!("need {HEADER_LEN} header bytes, have {}", header.len())));
    }
    let magic: [u8; 4] = header[..4].try_into().expect("4 bytes");
    if magic != MAGIC {
        return Err(WireError::BadMagic(magic));
    }
    if header[4] != VERSION {
        return Err(WireError::BadVersion(header[4]));
    }
    let len = u16::from_le_bytes([header[6], header[7]]) as usize;
    Ok(HEADER_LEN + len + CRC_LEN)
}

/// Decodes one packet from the front of `bytes`; returns it with the number of bytes consumed.
pub fn decode_packet(bytes: &[u8]) -> Result<(Packet, usize), WireError> {
    let total = frame_len(bytes)?;
    if bytes.len() < total {
        return Err(WireError::BadLength(format!("frame needs {total} bytes, have {}", bytes.len())));
    }
    let body = &bytes[..total - CRC_LEN];
    let stored = u32::from_le_bytes(bytes[total - CRC_LEN..total].try_into().expect("4 bytes"));
    let computed = crc32fast::hash(body);
    if stored != computed {
        return Err(WireError::BadChecksum { stored, computed });
    }
    let code = bytes[5];
    let expected = payload_len(code).ok_or(WireError::UnknownType(code))?;
    let len = total - HEADER_LEN - CRC_LEN;
    if len != expected {
        return Err(WireError::BadLength(format!("type {code} payload must be {expected} bytes, header says {len}")));
    }
    let mut c = Cursor(&body[HEADER_LEN..]);
    let packet = match code {
        TYPE_IMU => {
            let sensor_id = c.u8();
            let timestamp_ns = c.u64();
            let orientation = [c.f32(), c.f32(), c.f32(), c.f32()];
            let angular_velocity = [c.f32(), c.f32(), c.f32()];
            let acceleration = [c.f32(), c.f32(), c.f32()];
            Packet::Imu(ImuPacket { sensor_id, timestamp_ns, orientation, angular_velocity, acceleration })
        }
        TYPE_DORSAL => {
            let timestamp_ns = c.u64();
            let rotation = [c.f32(), c.f32(), c.f32(), c.f32()];
            let translation = [c.f64(), c.f64(), c.f64()];
            Packet::Dorsal(DorsalPacket { timestamp_ns, rotation, translation })
        }
        TYPE_CLOCK_PROBE => Packet::ClockProbe(ClockProbe { probe_id: c.u8(), t1: c.u64(), t2: c.u64(), t3: c.u64(), t4: c.u64() }),
        TYPE_SEGMENT_MARKER => {
            let code = c.u8();
            let kind = SegmentKind::from_code(code)
                .ok_or_else(|| WireError::InvalidSample(format!("unknown segment kind {code}")))?;
            Packet::SegmentMarker(SegmentMarker { kind, start_ns: c.u64() })
        }
        _ => unreachable!("type validated above"),
    };
    Ok((packet, total))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn imu() -> Packet {
        Packet::Imu(ImuPacket {
            sensor_id: 7,
            timestamp_ns: 1_234_567_890,
            orientation: [1.0, 0.0, 0.0, 0.0],
            angular_velocity: [0.1, -0.2, 0.3],
            acceleration: [0.0, 0.0, 9.81],
        })
    }

    #[test]
    fn declared_sizes() {
        let cases = [
            (imu(), IMU_PAYLOAD_LEN),
            (Packet::Dorsal(DorsalPacket { timestamp_ns: 1, rotation: [1.0, 0.0, 0.0, 0.0], translation: [1.0, 2.0, 3.0] }), DORSAL_PAYLOAD_LEN),
            (Packet::ClockProbe(ClockProbe { probe_id: 1, t1: 1, t2: 2, t3: 3, t4: 4 }), CLOCK_PROBE_PAYLOAD_LEN),
            (Packet::SegmentMarker(SegmentMarker { kind: SegmentKind::Rest, start_ns: 9 }), SEGMENT_MARKER_PAYLOAD_LEN),
        ];
        for (p, len) in cases {
            let bytes = encode_packet(&p);
            assert_eq!(bytes.len(), HEADER_LEN + len + CRC_LEN);
            assert_eq!(&bytes[..4], b"FSGV");
            assert_eq!(u16::from_le_bytes([bytes[6], bytes[7]]) as usize, len);
            assert_eq!(decode_packet(&bytes).unwrap(), (p, bytes.len()));
        }
    }

    #[test]
    fn imu_layout_is_little_endian() {
        let bytes = encode_packet(&imu());
        assert_eq!(bytes[5], TYPE_IMU);
        assert_eq!(bytes[8], 7);
        assert_eq!(u64::from_le_bytes(bytes[9..17].try_into().unwrap()), 1_234_567_890);
        assert_eq!(f32::from_le_bytes(bytes[17..21].try_into().unwrap()), 1.0);
        assert_eq!(f32::from_le_bytes(bytes[53..57].try_into().unwrap()), 9.81);
        assert_eq!(&bytes[57..61], &[0, 0, 0, 0]);
    }

    #[test]
    fn truncated_frame() {
        let bytes = encode_packet(&imu());
        for cut in [0, 3, 7, 8, 30, bytes.len() - 1] {
            assert!(matches!(decode_packet(&bytes[..cut]), Err(WireError::BadLength(_))), "cut {cut}");
        }
    }

    #[test]
    fn corrupted_frames() {
        let bytes = encode_packet(&imu());
        let mut b = bytes.clone();
        let last = b.len() - 1;
        b[last] ^= 0x40;
        assert!(matches!(decode_packet(&b), Err(WireError::BadChecksum { .. })));
        let mut b = bytes.clone();
        b[20] ^= 1;
        assert!(matches!(decode_packet(&b), Err(WireError::BadChecksum { .. })));
        let mut b = bytes.clone();
        b[0] = b'X';
        assert!(matches!(decode_packet(&b), Err(WireError::BadMagic(_))));
        let mut b = bytes.clone();
        b[4] = 2;
        assert!(matches!(decode_packet(&b), Err(WireError::BadVersion(2))));
    }

    #[test]
    fn unknown_type_and_wrong_length_with_valid_crc() {
        let mut b = encode_packet(&imu());
        b[5] = 9;
        let n = b.len() - CRC_LEN;
        let crc = crc32fast::hash(&b[..n]);
        b[n..].copy_from_slice(&crc.to_le_bytes());
        assert_eq!(decode_packet(&b), Err(WireError::UnknownType(9)));

        // a dorsal header on an IMU-sized payload
        let mut b = encode_packet(&imu());
        b[5] = TYPE_DORSAL;
        let crc = crc32fast::hash(&b[..n]);
        b[n..].copy_from_slice(&crc.to_le_bytes());
        assert!(matches!(decode_packet(&b), Err(WireError::BadLength(_))));
    }

    #[test]
    fn decodes_from_a_longer_buffer() {
        let mut buf = encode_packet(&imu());
        let first = buf.len();
        encode_into(&Packet::ClockProbe(ClockProbe { probe_id: 2, t1: 5, t2: 6, t3: 7, t4: 8 }), &mut buf);
        let (p, used) = decode_packet(&buf).unwrap();
        assert_eq!(p, imu());
        assert_eq!(used, first);
        assert!(matches!(decode_packet(&buf[used..]).unwrap().0, Packet::ClockProbe(_)));
    }

    #[test]
    fn sample_conversion() {
        let q = UnitQuaternion::new(0.9, 0.1, -0.3, 0.2).unwrap();
        let s = ImuSample {
            sensor_id: 3,
            timestamp_ns: 77,
            orientation: q,
            angular_velocity: Vector3::new(1.0, 2.0, 3.0),
            linear_acceleration: Vector3::new(0.5, 0.25, 9.75),
        };
        let back = ImuPacket::from(&s).to_sample().unwrap();
        assert_eq!(back.timestamp_ns, 77);
        assert_eq!(back.angular_velocity, s.angular_velocity);
        let err: f64 = q.to_array().iter().zip(back.orientation.to_array()).map(|(a, b)| (a - b).abs()).sum();
        assert!(err < 1e-6);
        let mut p = ImuPacket::from(&s);
        p.sensor_id = 16;
        assert!(p.to_sample().is_err());
        p.sensor_id = 0;
        p.orientation = [0.0; 4];
        assert!(p.to_sample().is_err());
    }
}
