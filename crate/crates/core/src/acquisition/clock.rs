//! Four-timestamp clock offset estimation and timestamp correction.

use serde::{Deserialize, Serialize};

/// One request/response exchange. `t1`/`t4` on the client (glove) clock,
/// `t2`/`t3` on the server clock.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClockProbe {
    pub probe_id: u8,
    pub t1: u64,
    pub t2: u64,
    pub t3: u64,
    pub t4: u64,
}

/// Server clock minus client clock, and the round-trip network delay.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClockOffset {
    pub offset_ns: i64,
    pub delay_ns: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ClockError {
    #[error("round-trip delay is negative ({0} ns)")]
    NegativeDelay(i128),
    #[error("client clock went backwards across the exchange (t1 {t1}, t4 {t4})")]
    NonMonotonic { t1: u64, t4: u64 },
    #[error("offset does not fit in 64 bits")]
    Overflow,
}

/// offset = ((t2 − t1) + (t3 − t4)) / 2, delay = (t4 − t1) − (t3 − t2).
/// The halving rounds toward negative infinity.
pub fn estimate_clock_offset(t1: u64, t2: u64, t3: u64, t4: u64) -> Result<ClockOffset, ClockError> {
    if t4 < t1 {
        return Err(ClockError::NonMonotonic { t1, t4 });
    }
    let (t1, t2, t3, t4) = (t1 as i128, t2 as i128, t3 as i128, t4 as i128);
    let delay = (t4 - t1) - (t3 - t2);
    if delay < 0 {
        return Err(ClockError::NegativeDelay(delay));
    }
    let offset = ((t2 - t1) + (t3 - t4)).div_euclid(2);
    Ok(ClockOffset {
        offset_ns: i64::try_from(offset).map_err(|_| ClockError::Overflow)?,
        delay_ns: u64::try_from(delay).map_err(|_| ClockError::Overflow)?,
    })
}

impl ClockProbe {
    pub fn estimate(&self) -> Result<ClockOffset, ClockError> {
        estimate_clock_offset(self.t1, self.t2, self.t3, self.t4)
    }
}

/// An offset change, as recorded by [`ClockCorrector`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OffsetLogEntry {
    pub probe_id: u8,
    /// Client time at which the offset took effect.
    pub applied_at_ns: u64,
    pub offset: ClockOffset,
}

/// Maps client timestamps onto the server clock using the latest accepted offset.
///
/// Correction always starts from the raw client timestamp, so applying it to
/// an already-known raw value twice gives the same answer.
#[derive(Debug, Clone, Default)]
pub struct ClockCorrector {
    current: Option<ClockOffset>,
    log: Vec<OffsetLogEntry>,
    rejected: usize,
}

impl ClockCorrector {
    pub fn new() -> Self {
        Self::default()
    }

    /// Accepts a probe; probes with a negative delay are counted and ignored.
    pub fn observe(&mut self, probe: &ClockProbe) -> Result<ClockOffset, ClockError> {
        match probe.estimate() {
            Ok(offset) => {
                self.current = Some(offset);
                self.log.push(OffsetLogEntry { probe_id: probe.probe_id, applied_at_ns: probe.t4, offset });
                Ok(offset)
            }
            Err(e) => {
                self.rejected += 1;
                Err(e)
            }
        }
    }

    pub fn current(&self) -> Option<ClockOffset> {
        self.current
    }

    /// Server-clock time for a raw client timestamp. Identity before the first probe.
    pub fn correct(&self, raw_ns: u64) -> u64 {
        let offset = self.current.map_or(0, |o| o.offset_ns);
        (raw_ns as i128 + offset as i128).clamp(0, u64::MAX as i128) as u64
    }

    pub fn log(&self) -> &[OffsetLogEntry] {
        &self.log
    }

    pub fn rejected(&self) -> usize {
        self.rejected
    }
}
