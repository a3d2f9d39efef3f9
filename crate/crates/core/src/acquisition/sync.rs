//! Approximate-time matching of the 16 IMU streams, plus the dorsal stream
//! when present.
//!
//! The matcher keeps one FIFO per stream. Once every required stream has a
//! head, the pivot is the latest head timestamp. Each stream then selects the
//! sample nearest the pivot among those no later than pivot + window/2,
//! discarding anything older. If every selection lies within ±window/2 of the
//! pivot the set is emitted; otherwise the oldest head is dropped and the
//! search repeats.
//!
//! In streaming use a stream only takes part in a decision once it holds a
//! sample at or after the pivot (or has been closed), so results never depend
//! on how the input was chunked.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::glove_sim::{DorsalSample, ImuSample, NUM_SENSORS};

pub const DEFAULT_WINDOW_NS: u64 = 10_000_000;

pub trait Timestamped {
    fn timestamp_ns(&self) -> u64;
}

impl Timestamped for ImuSample {
    fn timestamp_ns(&self) -> u64 {
        self.timestamp_ns
    }
}

impl Timestamped for DorsalSample {
    fn timestamp_ns(&self) -> u64 {
        self.timestamp_ns
    }
}

impl Timestamped for u64 {
    fn timestamp_ns(&self) -> u64 {
        *self
    }
}

/// Per-stream bookkeeping. After [`ApproxMatcher::finish`],
/// `received == used + dropped + out_of_order` for every stream.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StreamStats {
    pub received: u64,
    pub used: u64,
    pub dropped: u64,
    /// Samples not newer than their predecessor; rejected on arrival.
    pub out_of_order: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Matched<T> {
    pub pivot_ns: u64,
    /// One per stream, in stream order.
    pub samples: Vec<T>,
    pub spread_ns: u64,
}

fn within(t: u64, pivot: u64, window: u64) -> bool {
    2 * t.abs_diff(pivot) <= window
}

/// Index of the sample nearest `pivot` among those at or before pivot + window/2.
/// Ties go to the earlier sample.
fn select<T: Timestamped>(queue: &VecDeque<T>, pivot: u64, window: u64) -> usize {
    let mut best = 0;
    let mut best_dist = u64::MAX;
    for (i, s) in queue.iter().enumerate() {
        let t = s.timestamp_ns();
        if t > pivot && 2 * (t - pivot) > window {
            break;
        }
        let d = t.abs_diff(pivot);
        if d < best_dist {
            best = i;
            best_dist = d;
        }
        if t >= pivot {
            break;
        }
    }
    best
}

/// The matching core over any number of required streams.
#[derive(Debug, Clone)]
pub struct ApproxMatcher<T> {
    window_ns: u64,
    queues: Vec<VecDeque<T>>,
    closed: Vec<bool>,
    last: Vec<Option<u64>>,
    stats: Vec<StreamStats>,
}

impl<T: Timestamped> ApproxMatcher<T> {
    pub fn new(streams: usize, window_ns: u64) -> Self {
        assert!(streams > 0, "need at least one stream");
        Self {
            window_ns,
            queues: (0..streams).map(|_| VecDeque::new()).collect(),
            closed: vec![false; streams],
            last: vec![None; streams],
            stats: vec![StreamStats::default(); streams],
        }
    }

    pub fn window_ns(&self) -> u64 {
        self.window_ns
    }

    pub fn push(&mut self, stream: usize, sample: T) {
        let t = sample.timestamp_ns();
        let stats = &mut self.stats[stream];
        stats.received += 1;
        if self.closed[stream] || self.last[stream].is_some_and(|l| t <= l) {
            stats.out_of_order += 1;
            return;
        }
        self.last[stream] = Some(t);
        self.queues[stream].push_back(sample);
    }

    /// No more samples will arrive on `stream`.
    pub fn close(&mut self, stream: usize) {
        self.closed[stream] = true;
    }

    /// Latest timestamp accepted on any stream.
    pub fn latest_ns(&self) -> Option<u64> {
        self.last.iter().flatten().copied().max()
    }

    pub fn stats(&self) -> &[StreamStats] {
        &self.stats
    }

    pub fn queued(&self, stream: usize) -> usize {
        self.queues[stream].len()
    }

    /// Next set, if one can be decided from the samples seen so far.
    pub fn next_set(&mut self) -> Option<Matched<T>> {
        let w = self.window_ns;
        loop {
            let mut pivot = 0;
            for q in &self.queues {
                pivot = pivot.max(q.front()?.timestamp_ns());
            }
            let decidable = self
                .queues
                .iter()
                .zip(&self.closed)
                .all(|(q, &closed)| closed || q.back().is_some_and(|s| s.timestamp_ns() >= pivot));
            if !decidable {
                return None;
            }
            for (q, stats) in self.queues.iter_mut().zip(self.stats.iter_mut()) {
                let idx = select(q, pivot, w);
                q.drain(..idx);
                stats.dropped += idx as u64;
            }
            let heads: Vec<u64> = self.queues.iter().map(|q| q.front().expect("selection kept one").timestamp_ns()).collect();
            if heads.iter().all(|&t| within(t, pivot, w)) {
                let lo = *heads.iter().min().expect("non-empty");
                let hi = *heads.iter().max().expect("non-empty");
                let samples = self
                    .queues
                    .iter_mut()
                    .zip(self.stats.iter_mut())
                    .map(|(q, stats)| {
                        stats.used += 1;
                        q.pop_front().expect("head exists")
                    })
                    .collect();
                return Some(Matched { pivot_ns: pivot, samples, spread_ns: hi - lo });
            }
            let oldest = (0..heads.len()).min_by_key(|&i| heads[i]).expect("non-empty");
            self.queues[oldest].pop_front();
            self.stats[oldest].dropped += 1;
        }
    }

    /// Closes every stream, returns the remaining sets and counts leftovers as dropped.
    pub fn finish(&mut self) -> Vec<Matched<T>> {
        self.closed.iter_mut().for_each(|c| *c = true);
        let out: Vec<_> = std::iter::from_fn(|| self.next_set()).collect();
        for (q, stats) in self.queues.iter_mut().zip(self.stats.iter_mut()) {
            stats.dropped += q.len() as u64;
            q.clear();
        }
        out
    }
}

/// Matches complete, ordered streams in one go.
pub fn match_streams<T: Timestamped + Clone>(streams: &[Vec<T>], window_ns: u64) -> (Vec<Matched<T>>, Vec<StreamStats>) {
    let mut m = ApproxMatcher::new(streams.len(), window_ns);
    for (i, s) in streams.iter().enumerate() {
        for x in s {
            m.push(i, x.clone());
        }
    }
    let out = m.finish();
    (out, m.stats().to_vec())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DorsalPolicy {
    /// Attach the nearest tracker sample within the window, if any.
    Optional,
    /// Never attach tracker samples.
    Ignore,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyncConfig {
    pub window_ns: u64,
    pub dorsal: DorsalPolicy,
    /// How far the IMU streams may run ahead before a frame is emitted
    /// without waiting for a late tracker sample.
    pub dorsal_max_lag_ns: u64,
}

impl Default for SyncConfig {
    fn default() -> Self {
        Self { window_ns: DEFAULT_WINDOW_NS, dorsal: DorsalPolicy::Optional, dorsal_max_lag_ns: 1_000_000_000 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameSet {
    pub timestamp_ns: u64,
    /// Indexed by sensor id.
    pub imu: [ImuSample; NUM_SENSORS],
    pub dorsal: Option<DorsalSample>,
    /// Largest timestamp difference within the set, tracker included.
    pub spread_ns: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SyncStats {
    pub frames: u64,
    pub frames_with_dorsal: u64,
    pub imu: Vec<StreamStats>,
    pub dorsal: StreamStats,
    pub bad_sensor_id: u64,
}

impl SyncStats {
    pub fn imu_dropped(&self) -> u64 {
        self.imu.iter().map(|s| s.dropped + s.out_of_order).sum()
    }
}

/// 16 required IMU streams plus the optional dorsal stream.
#[derive(Debug, Clone)]
pub struct Synchronizer {
    config: SyncConfig,
    imu: ApproxMatcher<ImuSample>,
    dorsal: VecDeque<DorsalSample>,
    dorsal_last: Option<u64>,
    dorsal_closed: bool,
    dorsal_stats: StreamStats,
    pending: Option<Matched<ImuSample>>,
    frames: u64,
    frames_with_dorsal: u64,
    bad_sensor_id: u64,
}

impl Synchronizer {
    pub fn new(config: SyncConfig) -> Self {
        Self {
            imu: ApproxMatcher::new(NUM_SENSORS, config.window_ns),
            config,
            dorsal: VecDeque::new(),
            dorsal_last: None,
            dorsal_closed: false,
            dorsal_stats: StreamStats::default(),
            pending: None,
            frames: 0,
            frames_with_dorsal: 0,
            bad_sensor_id: 0,
        }
    }

    pub fn config(&self) -> &SyncConfig {
        &self.config
    }

    pub fn push_imu(&mut self, sample: ImuSample) {
        match sample.sensor_id as usize {
            id if id < NUM_SENSORS => self.imu.push(id, sample),
            _ => self.bad_sensor_id += 1,
        }
    }

    pub fn push_dorsal(&mut self, sample: DorsalSample) {
        self.dorsal_stats.received += 1;
        if self.config.dorsal == DorsalPolicy::Ignore {
            self.dorsal_stats.dropped += 1;
            return;
        }
        if self.dorsal_closed || self.dorsal_last.is_some_and(|l| sample.timestamp_ns <= l) {
            self.dorsal_stats.out_of_order += 1;
            return;
        }
        self.dorsal_last = Some(sample.timestamp_ns);
        self.dorsal.push_back(sample);
    }

    pub fn close_imu(&mut self, sensor: usize) {
        self.imu.close(sensor);
    }

    pub fn close_dorsal(&mut self) {
        self.dorsal_closed = true;
    }

    fn dorsal_decidable(&self, pivot: u64) -> bool {
        self.config.dorsal == DorsalPolicy::Ignore
            || self.dorsal_closed
            || self.dorsal_last.is_some_and(|t| t >= pivot)
            || self.imu.latest_ns().is_some_and(|t| t >= pivot.saturating_add(self.config.dorsal_max_lag_ns))
    }

    fn attach_dorsal(&mut self, pivot: u64) -> Option<DorsalSample> {
        let w = self.config.window_ns;
        if self.dorsal.is_empty() {
            return None;
        }
        let idx = select(&self.dorsal, pivot, w);
        self.dorsal.drain(..idx);
        self.dorsal_stats.dropped += idx as u64;
        let head = self.dorsal.front()?.timestamp_ns;
        if within(head, pivot, w) {
            self.dorsal_stats.used += 1;
            self.dorsal.pop_front()
        } else {
            if head < pivot {
                // older than this frame's window, and every later frame is later still
                self.dorsal.pop_front();
                self.dorsal_stats.dropped += 1;
            }
            None
        }
    }

    /// Next frame that can be decided from the data seen so far.
    pub fn next_frame(&mut self) -> Option<FrameSet> {
        let set = match self.pending.take() {
            Some(s) => s,
            None => self.imu.next_set()?,
        };
        if !self.dorsal_decidable(set.pivot_ns) {
            self.pending = Some(set);
            return None;
        }
        let dorsal = self.attach_dorsal(set.pivot_ns);
        let mut spread = set.spread_ns;
        if let Some(d) = &dorsal {
            let lo = set.samples.iter().map(|s| s.timestamp_ns).min().expect("16 samples").min(d.timestamp_ns);
            let hi = set.samples.iter().map(|s| s.timestamp_ns).max().expect("16 samples").max(d.timestamp_ns);
            spread = hi - lo;
            self.frames_with_dorsal += 1;
        }
        self.frames += 1;
        let imu: [ImuSample; NUM_SENSORS] = set.samples.try_into().expect("one sample per sensor");
        Some(FrameSet { timestamp_ns: set.pivot_ns, imu, dorsal, spread_ns: spread })
    }

    pub fn drain(&mut self) -> Vec<FrameSet> {
        std::iter::from_fn(|| self.next_frame()).collect()
    }

    /// Closes all streams and returns every remaining frame.
    pub fn finish(&mut self) -> Vec<FrameSet> {
        self.dorsal_closed = true;
        let mut out = self.drain();
        let rest = self.imu.finish();
        for set in rest {
            self.pending = Some(set);
            out.extend(self.next_frame());
        }
        self.dorsal_stats.dropped += self.dorsal.len() as u64;
        self.dorsal.clear();
        out
    }

    pub fn stats(&self) -> SyncStats {
        SyncStats {
            frames: self.frames,
            frames_with_dorsal: self.frames_with_dorsal,
            imu: self.imu.stats().to_vec(),
            dorsal: self.dorsal_stats.clone(),
            bad_sensor_id: self.bad_sensor_id,
        }
    }
}
