//! UDP datagram layout (all little-endian):
//!
//! ```text
//! offset  size  field
//! 0       4     magic 0x4D564E31 (u32)
//! 4       4     sequence (u32)
//! 8       8     timestamp, seconds (f64)
//! 16      2     segment count n <= 32 (u16)
//! 18      60n   segments: id (u32), position x y z (3 x f64, m),
//!               orientation w x y z (4 x f64)
//! ```
//!
//! The datagram length must be exactly `18 + 60 n` bytes.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::geom::{Rotation, Transform, Vec3};
use crate::retarget::Observation;

pub const MAGIC: u32 = 0x4D56_4E31;
pub const HEADER_LEN: usize = 18;
pub const FRAME_LEN: usize = 60;
pub const MAX_SEGMENTS: usize = 32;
/// Quaternions within this distance of unit norm are renormalized on ingest.
pub const QUATERNION_TOLERANCE: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DecodeErrorKind {
    #[error("bad magic {0:#010x}")]
    BadMagic(u32),
    #[error("truncated: need {expected} bytes, got {got}")]
    Truncated { expected: usize, got: usize },
    #[error("{extra} trailing bytes")]
    TrailingBytes { extra: usize },
    #[error("segment count {0} exceeds {MAX_SEGMENTS}")]
    TooManySegments(usize),
    #[error("non-finite value")]
    NonFinite,
    #[error("quaternion norm {0} is not unit")]
    NonUnitQuaternion(f64),
    #[error("duplicate segment id {0}")]
    DuplicateSegment(u32),
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("decode error at byte {offset}: {kind}")]
pub struct DecodeError {
    pub offset: usize,
    pub kind: DecodeErrorKind,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Datagram {
    pub sequence: u32,
    pub observation: Observation,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EncodeError {
    #[error("{0} segments exceed the {MAX_SEGMENTS}-segment datagram limit")]
    TooManySegments(usize),
}

pub fn encode(sequence: u32, obs: &Observation) -> Result<Vec<u8>, EncodeError> {
    let n = obs.segments.len();
    if n > MAX_SEGMENTS {
        return Err(EncodeError::TooManySegments(n));
    }
    let mut buf = Vec::with_capacity(HEADER_LEN + FRAME_LEN * n);
    buf.extend_from_slice(&MAGIC.to_le_bytes());
    buf.extend_from_slice(&sequence.to_le_bytes());
    buf.extend_from_slice(&obs.timestamp.to_le_bytes());
    buf.extend_from_slice(&(n as u16).to_le_bytes());
    for (id, pose) in &obs.segments {
        buf.extend_from_slice(&id.to_le_bytes());
        for v in pose.translation.iter() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        for v in pose.rotation.wxyz() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(buf)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take<const N: usize>(&mut self) -> [u8; N] {
        let out: [u8; N] = self.buf[self.pos..self.pos + N].try_into().expect("length checked");
        self.pos += N;
        out
    }
    fn u16(&mut self) -> u16 {
        u16::from_le_bytes(self.take())
    }
    fn u32(&mut self) -> u32 {
        u32::from_le_bytes(self.take())
    }
    fn f64(&mut self) -> Result<f64, DecodeError> {
        let at = self.pos;
        let v = f64::from_le_bytes(self.take());
        if v.is_finite() {
            Ok(v)
        } else {
            Err(DecodeError {
                offset: at,
                kind: DecodeErrorKind::NonFinite,
            })
        }
    }
}

pub fn decode(bytes: &[u8]) -> Result<Datagram, DecodeError> {
    let err = |offset, kind| DecodeError { offset, kind };
    if bytes.len() < HEADER_LEN {
        return Err(err(
            bytes.len(),
            DecodeErrorKind::Truncated {
                expected: HEADER_LEN,
                got: bytes.len(),
            },
        ));
    }
    let mut r = Reader { buf: bytes, pos: 0 };
    let magic = r.u32();
    if magic != MAGIC {
        return Err(err(0, DecodeErrorKind::BadMagic(magic)));
    }
    let sequence = r.u32();
    let timestamp = r.f64()?;
    let count = r.u16() as usize;
    if count > MAX_SEGMENTS {
        return Err(err(16, DecodeErrorKind::TooManySegments(count)));
    }
    let expected = HEADER_LEN + FRAME_LEN * count;
    if bytes.len() < expected {
        return Err(err(
            bytes.len(),
            DecodeErrorKind::Truncated {
                expected,
                got: bytes.len(),
            },
        ));
    }
    if bytes.len() > expected {
        return Err(err(
            expected,
            DecodeErrorKind::TrailingBytes {
                extra: bytes.len() - expected,
            },
        ));
    }
    let mut segments = BTreeMap::new();
    for _ in 0..count {
        let start = r.pos;
        let id = r.u32();
        let p = Vec3::new(r.f64()?, r.f64()?, r.f64()?);
        let q_at = r.pos;
        let q = [r.f64()?, r.f64()?, r.f64()?, r.f64()?];
        let rotation = Rotation::from_wxyz(q, QUATERNION_TOLERANCE).map_err(|_| {
            let norm = q.iter().map(|v| v * v).sum::<f64>().sqrt();
            err(q_at, DecodeErrorKind::NonUnitQuaternion(norm))
        })?;
        if segments.insert(id, Transform::new(rotation, p)).is_some() {
            return Err(err(start, DecodeErrorKind::DuplicateSegment(id)));
        }
    }
    Ok(Datagram {
        sequence,
        observation: Observation { timestamp, segments },
    })
}

/// Drops datagrams whose sequence number does not advance (wrapping at `u32::MAX`).
#[derive(Debug, Clone, Default)]
pub struct SequenceFilter {
    last: Option<u32>,
    dropped: u64,
}

impl SequenceFilter {
    pub fn accept(&mut self, sequence: u32) -> bool {
        let fresh = match self.last {
            None => true,
            Some(last) => (sequence.wrapping_sub(last) as i32) > 0,
        };
        if fresh {
            self.last = Some(sequence);
        } else {
            self.dropped += 1;
        }
        fresh
    }

    pub fn dropped(&self) -> u64 {
        self.dropped
    }
}
