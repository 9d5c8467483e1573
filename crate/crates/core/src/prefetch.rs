//! Pre-fetching over free links before the user starts watching.
//!
//! Each clip may be pre-fetched up to `α·L·R` bytes, taken from its head. The
//! greedy repeatedly hands one unit (one playback slot of video) to the clip
//! whose `pᵢ·discontinuityᵢ²` drops the most, which is optimal because every
//! unit weighs the same and each clip's marginal gains only shrink.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;
use std::io::Write;
use std::ops::Range;

use thiserror::Error;

use crate::model::{Bytes, DownloadSchedule, NetworkTimeline, Playlist, Slot, VideoClip};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PrefetchError {
    #[error("pre-fetched {pf} bytes exceed the cap of {cap} bytes")]
    OverCap { pf: Bytes, cap: f64 },
    #[error("aggressiveness must lie in [0, 1], got {0}")]
    InvalidAlpha(f64),
    #[error("preference must be non-negative, got {0}")]
    InvalidPreference(f64),
}

fn check_alpha(alpha: f64) -> Result<(), PrefetchError> {
    if (0.0..=1.0).contains(&alpha) {
        Ok(())
    } else {
        Err(PrefetchError::InvalidAlpha(alpha))
    }
}

/// Largest number of bytes of `clip` that may be pre-fetched.
pub fn prefetch_cap(alpha: f64, clip: &VideoClip) -> Bytes {
    (alpha * clip.size_bytes() as f64 + 1e-9).floor() as Bytes
}

/// 1 − pf / (α·L·R). A clip that may not be pre-fetched at all stays at 1.
pub fn prefetch_discontinuity(pf_bytes: Bytes, alpha: f64, clip: &VideoClip) -> Result<f64, PrefetchError> {
    check_alpha(alpha)?;
    let cap = alpha * clip.size_bytes() as f64;
    if pf_bytes as f64 > cap + 1e-9 {
        return Err(PrefetchError::OverCap { pf: pf_bytes, cap });
    }
    if cap <= 0.0 {
        return Ok(1.0);
    }
    Ok((1.0 - pf_bytes as f64 / cap).max(0.0))
}

/// What the greedy needs to know about one clip.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrefetchItem {
    pub preference: f64,
    /// Pre-fetch cap in bytes.
    pub cap: Bytes,
    pub unit: Bytes,
}

impl PrefetchItem {
    pub fn for_clip(clip: &VideoClip, alpha: f64, slot_ms: u32) -> Self {
        PrefetchItem { preference: clip.preference, cap: prefetch_cap(alpha, clip), unit: clip.unit_bytes(slot_ms) }
    }

    fn disc(&self, pf: Bytes) -> f64 {
        if self.cap == 0 {
            1.0
        } else {
            1.0 - pf as f64 / self.cap as f64
        }
    }

    /// Drop of p·disc² when `step` more bytes are pre-fetched on top of `pf`.
    fn gain(&self, pf: Bytes, step: Bytes) -> f64 {
        let (a, b) = (self.disc(pf), self.disc(pf + step));
        // a² − b² = (a − b)(a + b), evaluated without cancellation
        self.preference * (step as f64 / self.cap as f64) * (a + b)
    }

    fn next_step(&self, pf: Bytes) -> Bytes {
        self.unit.min(self.cap.saturating_sub(pf))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Candidate {
    gain: f64,
    clip: usize,
    version: u32,
}

impl Eq for Candidate {}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.gain.total_cmp(&other.gain).then_with(|| Reverse(self.clip).cmp(&Reverse(other.clip)))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Incremental greedy shared by the offline planner and the simulator.
///
/// Clips must be admitted before they are considered and can be retired at any
/// time (for example once they are shown on screen).
#[derive(Debug, Clone)]
pub struct PrefetchGreedy {
    items: Vec<PrefetchItem>,
    committed: Vec<Bytes>,
    eligible: Vec<bool>,
    version: Vec<u32>,
    heap: BinaryHeap<Candidate>,
}

impl PrefetchGreedy {
    pub fn new(items: Vec<PrefetchItem>) -> Result<Self, PrefetchError> {
        if let Some(bad) = items.iter().find(|i| !(i.preference >= 0.0 && i.preference.is_finite())) {
            return Err(PrefetchError::InvalidPreference(bad.preference));
        }
        let n = items.len();
        Ok(PrefetchGreedy {
            items,
            committed: vec![0; n],
            eligible: vec![false; n],
            version: vec![0; n],
            heap: BinaryHeap::with_capacity(n),
        })
    }

    pub fn for_playlist(playlist: &Playlist, alpha: f64, slot_ms: u32) -> Result<Self, PrefetchError> {
        check_alpha(alpha)?;
        Self::new(playlist.clips.iter().map(|c| PrefetchItem::for_clip(c, alpha, slot_ms)).collect())
    }

    fn push(&mut self, clip: usize) {
        let item = &self.items[clip];
        let step = item.next_step(self.committed[clip]);
        if step > 0 {
            let gain = item.gain(self.committed[clip], step);
            self.heap.push(Candidate { gain, clip, version: self.version[clip] });
        }
    }

    /// Makes `clip` eligible (V_p gains a newly arrived video).
    pub fn admit(&mut self, clip: usize) {
        if !self.eligible[clip] {
            self.eligible[clip] = true;
            self.version[clip] += 1;
            self.push(clip);
        }
    }

    pub fn admit_all(&mut self) {
        for clip in 0..self.items.len() {
            self.admit(clip);
        }
    }

    /// Removes `clip` from consideration.
    pub fn retire(&mut self, clip: usize) {
        if self.eligible[clip] {
            self.eligible[clip] = false;
            self.version[clip] += 1;
        }
    }

    pub fn committed(&self, clip: usize) -> Bytes {
        self.committed[clip]
    }

    pub fn committed_all(&self) -> &[Bytes] {
        &self.committed
    }

    /// Picks the next unit and commits it. The unit is shortened to `limit` bytes when needed.
    pub fn next_unit(&mut self, limit: Bytes) -> Option<(usize, Bytes)> {
        if limit == 0 {
            return None;
        }
        while let Some(c) = self.heap.pop() {
            if !self.eligible[c.clip] || c.version != self.version[c.clip] {
                continue;
            }
            let step = self.items[c.clip].next_step(self.committed[c.clip]).min(limit);
            self.committed[c.clip] += step;
            self.push(c.clip);
            return Some((c.clip, step));
        }
        None
    }

    /// Σ pᵢ · discᵢ² over all clips at the committed amounts.
    pub fn weighted_squared_sum(&self) -> f64 {
        self.items.iter().zip(&self.committed).map(|(i, &pf)| i.preference * i.disc(pf).powi(2)).sum()
    }

    /// Σ pᵢ·discᵢ² / Σ pᵢ·discᵢ, zero when nothing is left to gain.
    pub fn normalized_discontinuity(&self) -> f64 {
        let den: f64 = self.items.iter().zip(&self.committed).map(|(i, &pf)| i.preference * i.disc(pf)).sum();
        if den > 0.0 {
            self.weighted_squared_sum() / den
        } else {
            0.0
        }
    }
}

/// Result of packing greedy picks into free slots.
#[derive(Debug, Clone, PartialEq)]
pub struct SlotAssignment {
    pub schedule: DownloadSchedule,
    /// Bytes of the picks that did not fit.
    pub unassigned: Bytes,
}

impl SlotAssignment {
    pub fn truncated(&self) -> bool {
        self.unassigned > 0
    }
}

/// Packs `picks` into the free slots of `window`, earliest first, in pick order.
pub fn slot_assignment(picks: &[(usize, Bytes)], timeline: &NetworkTimeline, window: Range<Slot>) -> SlotAssignment {
    let mut schedule = DownloadSchedule::new();
    let mut slots = window.filter(|&t| timeline.get(t).is_free());
    let mut current: Option<(Slot, Bytes)> = None;
    let mut unassigned = 0;
    for &(clip, bytes) in picks {
        let mut left = bytes;
        while left > 0 {
            let (slot, room) = match current {
                Some((slot, room)) if room > 0 => (slot, room),
                _ => match slots.next() {
                    Some(t) => (t, timeline.bandwidth(t)),
                    None => break,
                },
            };
            let take = left.min(room);
            schedule.push(slot, clip, take);
            left -= take;
            current = Some((slot, room - take));
        }
        unassigned += left;
    }
    schedule.normalize();
    SlotAssignment { schedule, unassigned }
}

/// Outcome of pre-fetch planning.
#[derive(Debug, Clone, PartialEq)]
pub struct PrefetchPlan {
    pub schedule: DownloadSchedule,
    /// Bytes pre-fetched per clip, pf(vᵢ).
    pub bytes: Vec<Bytes>,
    /// Budget W in units of the first clip.
    pub budget_units: u64,
    pub budget_bytes: Bytes,
    /// Σ pᵢ·discᵢ², the quantity the greedy minimizes.
    pub weighted_squared_sum: f64,
    /// Σ pᵢ·discᵢ² / Σ pᵢ·discᵢ.
    pub normalized_discontinuity: f64,
    /// Bytes chosen by the greedy that found no free slot.
    pub unassigned: Bytes,
}

/// Plans pre-fetching of the whole playlist within `window`.
pub fn greedy_prefetch(
    playlist: &Playlist,
    timeline: &NetworkTimeline,
    alpha: f64,
    storage_limit: Bytes,
    window: Range<Slot>,
) -> Result<PrefetchPlan, PrefetchError> {
    let slot_ms = timeline.slot_ms();
    let mut greedy = PrefetchGreedy::for_playlist(playlist, alpha, slot_ms)?;
    greedy.admit_all();
    let budget_bytes = storage_limit.min(timeline.free_capacity(window.start, window.end));
    let unit = playlist.clips[0].unit_bytes(slot_ms);
    let budget_units = budget_bytes / unit;
    let mut left = budget_bytes;
    let mut picks = Vec::new();
    while let Some((clip, bytes)) = greedy.next_unit(left) {
        left -= bytes;
        picks.push((clip, bytes));
    }
    let assignment = slot_assignment(&picks, timeline, window);
    Ok(PrefetchPlan {
        bytes: assignment.schedule.bytes_per_clip(playlist.len()),
        schedule: assignment.schedule,
        budget_units,
        budget_bytes,
        weighted_squared_sum: greedy.weighted_squared_sum(),
        normalized_discontinuity: greedy.normalized_discontinuity(),
        unassigned: assignment.unassigned,
    })
}

pub const PLAN_CSV_HEADER: &str = "video_id,units_prefetched,bytes,first_slot,last_slot";

/// Writes one row per pre-fetched clip.
pub fn write_plan_csv<W: Write>(mut out: W, plan: &PrefetchPlan, playlist: &Playlist, slot_ms: u32) -> std::io::Result<()> {
    writeln!(out, "{PLAN_CSV_HEADER}")?;
    for (clip, &bytes) in plan.bytes.iter().enumerate() {
        if bytes == 0 {
            continue;
        }
        let slots = plan.schedule.allocations.iter().filter(|a| a.clip == clip).map(|a| a.slot);
        let (first, last) = slots.fold((Slot::MAX, 0), |(lo, hi), s| (lo.min(s), hi.max(s)));
        let c = &playlist.clips[clip];
        writeln!(out, "{},{},{},{},{}", c.id, bytes.div_ceil(c.unit_bytes(slot_ms)), bytes, first, last)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Section, SlotLink, Tariff};

    fn items(prefs: &[f64], cap_units: u64) -> Vec<PrefetchItem> {
        prefs.iter().map(|&p| PrefetchItem { preference: p, cap: cap_units * 10, unit: 10 }).collect()
    }

    fn run(items: Vec<PrefetchItem>, budget_units: u64) -> Vec<u64> {
        let mut g = PrefetchGreedy::new(items).unwrap();
        g.admit_all();
        let mut left = budget_units * 10;
        while let Some((_, b)) = g.next_unit(left) {
            left -= b;
        }
        g.committed_all().iter().map(|b| b / 10).collect()
    }

    #[test]
    fn discontinuity_examples() {
        let clip = VideoClip::new("a", Section::Popular, 6000, 166_000).unwrap();
        assert_eq!(prefetch_discontinuity(0, 0.2, &clip), Ok(1.0));
        let cap = prefetch_cap(0.2, &clip);
        assert_eq!(prefetch_discontinuity(cap, 0.2, &clip), Ok(0.0));
        let quarter = clip.size_bytes() / 4;
        assert_eq!(prefetch_discontinuity(quarter, 0.5, &clip), Ok(0.5));
        assert!(matches!(prefetch_discontinuity(cap + 10, 0.2, &clip), Err(PrefetchError::OverCap { .. })));
        assert!(prefetch_discontinuity(0, 1.5, &clip).is_err());
    }

    #[test]
    fn two_videos_match_enumeration() {
        let alloc = run(items(&[0.8, 0.2], 3), 4);
        assert_eq!(alloc, vec![3, 1]);
        // Exhaustive enumeration of every (a, b) with a + b = 4 and a, b <= 3.
        let value = |a: f64, b: f64| 0.8 * (1.0 - a / 3.0).powi(2) + 0.2 * (1.0 - b / 3.0).powi(2);
        let best = (1..=3).map(|a| (a, value(a as f64, (4 - a) as f64))).min_by(|x, y| x.1.total_cmp(&y.1)).unwrap();
        assert_eq!(best.0, 3);
        assert!((best.1 - 0.2 * 4.0 / 9.0).abs() < 1e-12);
        assert!((best.1 - 0.0889).abs() < 1e-4);
    }

    #[test]
    fn zero_budget_and_symmetric_budget() {
        assert_eq!(run(items(&[0.5, 0.9], 3), 0), vec![0, 0]);
        assert_eq!(run(items(&[0.4; 4], 5), 20), vec![5; 4]);
    }

    #[test]
    fn zero_preference_clips_are_filled_last() {
        assert_eq!(run(items(&[0.0, 1.0], 2), 3), vec![1, 2]);
    }

    #[test]
    fn retired_clips_are_skipped() {
        let mut g = PrefetchGreedy::new(items(&[1.0, 0.5], 4)).unwrap();
        g.admit_all();
        g.retire(0);
        assert_eq!(g.next_unit(100), Some((1, 10)));
        g.admit(0);
        assert_eq!(g.next_unit(100), Some((0, 10)));
    }

    fn wifi(bw: Bytes) -> SlotLink {
        SlotLink::wifi(bw, 7)
    }

    #[test]
    fn packing_examples() {
        let tl = NetworkTimeline::new(100, vec![wifi(20); 4]).unwrap();
        let a = slot_assignment(&[(0, 10), (0, 10), (1, 10), (1, 10)], &tl, 0..4);
        assert!(!a.truncated());
        let slots: Vec<(Slot, usize, Bytes)> = a.schedule.allocations.iter().map(|x| (x.slot, x.clip, x.bytes)).collect();
        assert_eq!(slots, vec![(0, 0, 20), (1, 1, 20)]);

        let cell = Tariff { cost_per_byte: 10, energy_per_byte: 25 };
        let none = NetworkTimeline::new(100, vec![SlotLink::cellular(20, cell); 4]).unwrap();
        let a = slot_assignment(&[(0, 10)], &none, 0..4);
        assert!(a.schedule.is_empty());
        assert_eq!(a.unassigned, 10);

        let a = slot_assignment(&[(0, 20), (1, 20), (2, 20), (3, 20)], &tl, 0..4);
        assert_eq!(a.schedule.allocations.len(), 4);
        assert!(a.schedule.allocations.iter().all(|x| x.bytes == 20));
    }

    #[test]
    fn plan_uses_free_slots_only() {
        let cell = Tariff { cost_per_byte: 10, energy_per_byte: 25 };
        let mut links = vec![SlotLink::cellular(50_000, cell); 10];
        links.extend(vec![wifi(50_000); 10]);
        let tl = NetworkTimeline::new(100, links).unwrap();
        let mut clips: Vec<VideoClip> =
            (0..4).map(|i| VideoClip::new(format!("v{i}"), Section::Recent, 6000, 166_000).unwrap()).collect();
        for (c, r) in clips.iter_mut().zip([1, 9, 4, 0]) {
            c.reposts = r;
        }
        let mut pl = Playlist::new(clips, 0).unwrap();
        pl.normalize_preferences_from_reposts();
        let plan = greedy_prefetch(&pl, &tl, 0.5, 100_000_000, 0..20).unwrap();
        assert!(plan.schedule.allocations.iter().all(|a| a.slot >= 10));
        assert_eq!(plan.budget_bytes, 500_000);
        assert_eq!(plan.bytes.iter().sum::<Bytes>(), 500_000.min(4 * prefetch_cap(0.5, &pl.clips[0])));
        // more popular clips get more, the zero-preference clip gets nothing while others gain
        assert!(plan.bytes[1] > plan.bytes[2] && plan.bytes[2] > plan.bytes[0] && plan.bytes[3] == 0);
        let mut csv = Vec::new();
        write_plan_csv(&mut csv, &plan, &pl, 100).unwrap();
        let text = String::from_utf8(csv).unwrap();
        assert!(text.starts_with(PLAN_CSV_HEADER));
        assert!(text.lines().nth(1).is_some());
    }

    proptest::proptest! {
        #[test]
        fn greedy_is_incremental(prefs in proptest::collection::vec(0.0f64..1.0, 1..6), cap in 1u64..5, budget in 1u64..15) {
            let longer = run(items(&prefs, cap), budget);
            let shorter = run(items(&prefs, cap), budget - 1);
            let diff: i64 = longer.iter().zip(&shorter).map(|(a, b)| *a as i64 - *b as i64).sum();
            let all_capped = shorter.iter().all(|&a| a == cap);
            proptest::prop_assert!(longer.iter().zip(&shorter).all(|(a, b)| a >= b));
            proptest::prop_assert!(diff == 1 || (diff == 0 && all_capped));
        }

        #[test]
        fn larger_alpha_never_hurts(prefs in proptest::collection::vec(0.01f64..1.0, 1..6), lo in 1u64..4, extra in 0u64..4) {
            // budget large enough never to bind
            let small = run(items(&prefs, lo), 100);
            let big = run(items(&prefs, lo + extra), 100);
            for ((s, b), _) in small.iter().zip(&big).zip(&prefs) {
                let d_small = 1.0 - *s as f64 / lo as f64;
                let d_big = 1.0 - *b as f64 / (lo + extra) as f64;
                proptest::prop_assert!(d_big <= d_small + 1e-12);
            }
        }
    }
}
