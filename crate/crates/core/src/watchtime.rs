//! Watch-time download scheduling and the SeqD / NextD baselines.
//!
//! Every gesture reveals how long the clips it scrolls past will stay on
//! screen. The scheduler clears its queue, ranks the revealed clips by
//! `u²·discontinuity`, drops those whose data is not worth its price, places
//! the remaining units as late as their playback deadlines allow and finally
//! pulls paid downloads forward into idle WiFi slots.

use std::io::Write;

use thiserror::Error;

use crate::kinematics::{animation, GestureEvent, KinematicsConfig, KinematicsError, SlotView};
use crate::metrics::format_dollars;
use crate::model::{Bytes, DownloadSchedule, NetworkTimeline, ObjectiveWeights, Playlist, Slot, SlotLink};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WatchtimeError {
    #[error("no watch durations given")]
    EmptyDurations,
    #[error("watch durations must be positive, got {0}")]
    NonPositiveDuration(f64),
    #[error("instance too large for exhaustive search: {0}")]
    TooLarge(String),
    #[error("invalid instance: {0}")]
    InvalidInstance(String),
    #[error(transparent)]
    Kinematics(#[from] KinematicsError),
}

/// wᵢ = uᵢ² / Σ u².
pub fn watch_weights(durations: &[f64]) -> Result<Vec<f64>, WatchtimeError> {
    if durations.is_empty() {
        return Err(WatchtimeError::EmptyDurations);
    }
    if let Some(&bad) = durations.iter().find(|u| !(**u > 0.0 && u.is_finite())) {
        return Err(WatchtimeError::NonPositiveDuration(bad));
    }
    let norm: f64 = durations.iter().map(|u| u * u).sum();
    Ok(durations.iter().map(|u| u * u / norm).collect())
}

/// True iff the weighted discontinuity drop beats the normalized price of the download.
pub fn marginal_benefit_test(discontinuity_decrease: f64, added_cost: f64, added_energy: f64, weights: &ObjectiveWeights) -> bool {
    let mut price = 0.0;
    if weights.q > 0.0 {
        price += weights.q * added_cost / weights.c_max;
    }
    if weights.r > 0.0 {
        price += weights.r * added_energy / weights.e_max;
    }
    weights.p * discontinuity_decrease > price
}

/// Download plan from `origin` on: the bytes of each clip assigned to every slot.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SlotQueue {
    origin: Slot,
    slots: Vec<Vec<(usize, Bytes)>>,
}

impl SlotQueue {
    pub fn new(origin: Slot) -> Self {
        SlotQueue { origin, slots: Vec::new() }
    }

    /// Empties every slot and moves the start of the queue to `origin`.
    pub fn clear(&mut self, origin: Slot) {
        self.origin = origin;
        self.slots.clear();
    }

    pub fn origin(&self) -> Slot {
        self.origin
    }

    /// First slot after the last one that may hold an assignment.
    pub fn horizon(&self) -> Slot {
        self.origin + self.slots.len() as Slot
    }

    pub fn is_empty(&self) -> bool {
        self.slots.iter().all(Vec::is_empty)
    }

    pub fn assignments(&self, slot: Slot) -> &[(usize, Bytes)] {
        slot.checked_sub(self.origin).and_then(|i| self.slots.get(i as usize)).map_or(&[], Vec::as_slice)
    }

    pub fn assigned_bytes(&self, slot: Slot) -> Bytes {
        self.assignments(slot).iter().map(|&(_, b)| b).sum()
    }

    pub fn bytes_for(&self, clip: usize) -> Bytes {
        self.slots.iter().flatten().filter(|(c, _)| *c == clip).map(|&(_, b)| b).sum()
    }

    fn entry(&mut self, slot: Slot) -> &mut Vec<(usize, Bytes)> {
        let i = (slot - self.origin) as usize;
        if i >= self.slots.len() {
            self.slots.resize_with(i + 1, Vec::new);
        }
        &mut self.slots[i]
    }

    /// Assigns `bytes` of `clip` to `slot`; slots before the origin are ignored.
    pub fn add(&mut self, slot: Slot, clip: usize, bytes: Bytes) {
        if bytes == 0 || slot < self.origin {
            return;
        }
        let e = self.entry(slot);
        match e.iter_mut().find(|(c, _)| *c == clip) {
            Some((_, b)) => *b += bytes,
            None => e.push((clip, bytes)),
        }
    }

    fn remove(&mut self, slot: Slot, clip: usize, bytes: Bytes) {
        let e = self.entry(slot);
        if let Some(pos) = e.iter().position(|(c, _)| *c == clip) {
            e[pos].1 -= bytes.min(e[pos].1);
            if e[pos].1 == 0 {
                e.remove(pos);
            }
        }
    }

    /// Removes and returns the assignments of `slot`.
    pub fn take(&mut self, slot: Slot) -> Vec<(usize, Bytes)> {
        match slot.checked_sub(self.origin).and_then(|i| self.slots.get_mut(i as usize)) {
            Some(e) => std::mem::take(e),
            None => Vec::new(),
        }
    }

    pub fn to_schedule(&self) -> DownloadSchedule {
        let mut s = DownloadSchedule::new();
        for (i, e) in self.slots.iter().enumerate() {
            for &(clip, bytes) in e {
                s.push(self.origin + i as Slot, clip, bytes);
            }
        }
        s.normalize();
        s
    }
}

/// Inputs shared by every watch-time decision of one session.
#[derive(Debug, Clone, Copy)]
pub struct WatchContext<'a> {
    pub playlist: &'a Playlist,
    pub timeline: &'a NetworkTimeline,
    pub weights: ObjectiveWeights,
    /// Σ u² of the views being scheduled, in slots², the denominator of the watch weights.
    pub weight_norm: f64,
}

/// Where the viewport is when a gesture arrives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ViewState {
    /// Clip on screen.
    pub clip: usize,
    /// Time it entered the viewport, ms since session start.
    pub entered_ms: f64,
}

/// Views predicted from one gesture: the clip on screen until the first entry,
/// every clip the animation scrolls through, and the clip it stops on, which
/// is assumed to be watched for one full clip length.
///
/// With no gesture (session start) or a gesture that does not scroll, the clip
/// on screen is predicted to play for one clip length from its entry.
pub fn predict_views(
    gesture: Option<&GestureEvent>,
    now_ms: f64,
    state: ViewState,
    n_clips: usize,
    clip_length_ms: f64,
    config: &KinematicsConfig,
    slot_ms: u32,
    origin: Slot,
) -> Result<Vec<SlotView>, WatchtimeError> {
    let entries: Vec<f64> = match gesture {
        Some(g) => animation(g, config)?.entries_ms.into_iter().map(|e| now_ms + e).collect(),
        None => Vec::new(),
    };
    let mut bounds = vec![(state.clip, state.entered_ms)];
    for (k, &t) in entries.iter().enumerate() {
        let clip = state.clip + k + 1;
        if clip >= n_clips {
            break;
        }
        bounds.push((clip, t));
    }
    let to_slot = |ms: f64| origin + (ms / slot_ms as f64).floor() as Slot;
    let mut views = Vec::with_capacity(bounds.len());
    for (i, &(clip, start)) in bounds.iter().enumerate() {
        let end = bounds.get(i + 1).map_or(start + clip_length_ms, |&(_, next)| next);
        let (s, e) = (to_slot(start), to_slot(end));
        if e > s {
            views.push(SlotView { clip, start_slot: s, watch_slots: e - s });
        }
    }
    Ok(views)
}

struct Capacity<'a> {
    timeline: &'a NetworkTimeline,
    origin: Slot,
    remaining: Vec<Bytes>,
}

impl<'a> Capacity<'a> {
    fn new(timeline: &'a NetworkTimeline, origin: Slot, horizon: Slot) -> Self {
        let remaining = (origin..horizon.max(origin)).map(|t| timeline.bandwidth(t)).collect();
        Capacity { timeline, origin, remaining }
    }

    fn get(&self, t: Slot) -> Bytes {
        self.remaining.get((t - self.origin) as usize).copied().unwrap_or(0)
    }

    fn take(&mut self, t: Slot, bytes: Bytes) {
        self.remaining[(t - self.origin) as usize] -= bytes;
    }

    fn give(&mut self, t: Slot, bytes: Bytes) {
        self.remaining[(t - self.origin) as usize] += bytes;
    }

    fn link(&self, t: Slot) -> SlotLink {
        self.timeline.get(t)
    }
}

/// Per-video plan: smooth-slot targets and the slots the video may use.
struct VideoPlan {
    clip: usize,
    /// (deadline slot, cumulative bytes needed strictly before it).
    targets: Vec<(Slot, Bytes)>,
}

/// Cumulative bytes of `clip` needed before each future deadline of `view`.
fn deadline_targets(view: &SlotView, now: Slot, unit: Bytes, size: Bytes, counted: u32, cached: Bytes) -> Vec<(Slot, Bytes)> {
    let first = (now + 1).saturating_sub(view.start_slot);
    (first..counted)
        .filter_map(|j| {
            let need = ((j as Bytes + 1) * unit).min(size).saturating_sub(cached);
            (need > 0).then_some((view.start_slot + j, need))
        })
        .collect()
}

/// Rebuilds the queue after a gesture at slot `now`.
///
/// `downloaded` holds the bytes of every clip already on the device.
pub fn on_gesture(now: Slot, views: &[SlotView], downloaded: &[Bytes], ctx: &WatchContext) -> SlotQueue {
    let mut queue = SlotQueue::new(now);
    let slot_ms = ctx.timeline.slot_ms();
    let horizon = views.iter().map(|v| v.start_slot + v.watch_slots).max().unwrap_or(now).max(now);
    let mut cap = Capacity::new(ctx.timeline, now, horizon);

    // rank by u²·discontinuity, ties in playlist order
    let mut ranked: Vec<(f64, SlotView)> = views
        .iter()
        .map(|v| {
            let clip = &ctx.playlist.clips[v.clip];
            let (unit, counted) = (clip.unit_bytes(slot_ms), v.watch_slots.min(clip.playback_slots(slot_ms)).max(1));
            let covered = (downloaded[v.clip] / unit).min(counted as Bytes) as f64;
            let disc = 1.0 - covered / counted as f64;
            ((v.watch_slots as f64).powi(2) * disc, *v)
        })
        .collect();
    ranked.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.clip.cmp(&b.1.clip)));

    for (key, view) in ranked {
        if key <= 0.0 {
            continue;
        }
        let clip = &ctx.playlist.clips[view.clip];
        let unit = clip.unit_bytes(slot_ms);
        let counted = view.watch_slots.min(clip.playback_slots(slot_ms)).max(1);
        let have = downloaded[view.clip] + queue.bytes_for(view.clip);
        let targets = deadline_targets(&view, now, unit, clip.size_bytes(), counted, have);
        let Some(&(last_deadline, _)) = targets.last() else { continue };
        let weight = (view.watch_slots as f64).powi(2) / ctx.weight_norm;
        let benefit = ctx.weights.p * weight / counted as f64;

        let penalty = |link: &SlotLink| ctx.weights.transfer_penalty(link, unit);
        let Some(cheapest) = (now..last_deadline)
            .filter(|&t| cap.get(t) > 0)
            .map(|t| cap.link(t))
            .min_by(|a, b| penalty(a).total_cmp(&penalty(b)))
        else {
            continue;
        };
        let decrease = weight / counted as f64;
        let (c, e) = (cheapest.cost_of(unit) as f64, cheapest.energy_of(unit) as f64);
        if !marginal_benefit_test(decrease, c, e, &ctx.weights) {
            continue;
        }
        let min_penalty = penalty(&cheapest);
        let allowed: Vec<bool> = (now..last_deadline).map(|t| cap.get(t) > 0 && penalty(&cap.link(t)) < benefit).collect();

        // deadlines reachable with everything sent as early as possible
        let mut prefix = Vec::with_capacity(allowed.len() + 1);
        prefix.push(0 as Bytes);
        for (i, &ok) in allowed.iter().enumerate() {
            let room = if ok { cap.get(now + i as Slot) } else { 0 };
            prefix.push(prefix[i] + room);
        }
        let reachable: Vec<(Slot, Bytes)> =
            targets.iter().copied().filter(|&(deadline, need)| prefix[(deadline - now) as usize] >= need).collect();
        // per-unit re-check: keep the reachable deadlines up to the one where
        // the smooth slots gained most exceed the units they need
        let mut best = (0.0, 0);
        for (i, &(_, need)) in reachable.iter().enumerate() {
            let gain = benefit * (i + 1) as f64 - min_penalty * need as f64 / unit as f64;
            if gain > best.0 {
                best = (gain, i + 1);
            }
        }
        let kept = reachable[..best.1].to_vec();
        let plan = VideoPlan { clip: view.clip, targets: kept };
        place_latest(&plan, now, &allowed, &mut cap, &mut queue);
    }
    fill_forward(now, &mut cap, &mut queue);
    queue
}

/// Latest placement meeting every kept target, filled backwards from the last deadline.
fn place_latest(plan: &VideoPlan, now: Slot, allowed: &[bool], cap: &mut Capacity, queue: &mut SlotQueue) {
    let Some(&(_, total)) = plan.targets.last() else { return };
    let mut k = plan.targets.len();
    let mut placed_after = 0;
    for t in (now..now + allowed.len() as Slot).rev() {
        // bytes that must already be in place before slot t + 1
        while k > 0 && plan.targets[k - 1].0 > t {
            k -= 1;
        }
        let need_before_next = if k > 0 {
            plan.targets.iter().take(k).map(|&(_, n)| n).max().unwrap_or(0)
        } else {
            0
        };
        if !allowed[(t - now) as usize] {
            continue;
        }
        let room = total.saturating_sub(need_before_next).saturating_sub(placed_after);
        let take = room.min(cap.get(t));
        if take > 0 {
            cap.take(t, take);
            queue.add(t, plan.clip, take);
            placed_after += take;
        }
        if placed_after == total {
            break;
        }
    }
}

/// Moves paid assignments into earlier idle zero-cost slots, latest first.
fn fill_forward(now: Slot, cap: &mut Capacity, queue: &mut SlotQueue) {
    let horizon = queue.horizon();
    for t in now..horizon {
        if !cap.link(t).is_free() {
            continue;
        }
        let mut src = horizon;
        while cap.get(t) > 0 && src > t + 1 {
            src -= 1;
            if cap.link(src).tariff.cost_per_byte == 0 {
                continue;
            }
            let moves: Vec<(usize, Bytes)> = queue.assignments(src).to_vec();
            for (clip, bytes) in moves.into_iter().rev() {
                let m = bytes.min(cap.get(t));
                if m == 0 {
                    break;
                }
                queue.remove(src, clip, m);
                cap.give(src, m);
                queue.add(t, clip, m);
                cap.take(t, m);
            }
        }
    }
}

/// Downloads whole clips in playlist order, saturating every slot of `window`.
pub fn seqd(playlist: &Playlist, timeline: &NetworkTimeline, window: std::ops::Range<Slot>, initial: &[Bytes]) -> DownloadSchedule {
    let mut schedule = DownloadSchedule::new();
    let mut missing: Vec<Bytes> = playlist.clips.iter().zip(initial).map(|(c, &i)| c.size_bytes().saturating_sub(i)).collect();
    let mut clip = 0;
    for t in window {
        let mut room = timeline.bandwidth(t);
        while room > 0 && clip < missing.len() {
            let take = room.min(missing[clip]);
            schedule.push(t, clip, take);
            missing[clip] -= take;
            room -= take;
            if missing[clip] == 0 {
                clip += 1;
            }
        }
        if clip == missing.len() {
            break;
        }
    }
    schedule
}

/// While a clip is on screen, downloads the whole next clip; a download still
/// running when the viewport moves on is abandoned. Slots from `end` on are not used.
pub fn nextd(playlist: &Playlist, timeline: &NetworkTimeline, views: &[SlotView], initial: &[Bytes], end: Slot) -> DownloadSchedule {
    let mut schedule = DownloadSchedule::new();
    let mut have = initial.to_vec();
    for v in views {
        let next = v.clip + 1;
        if next >= playlist.len() {
            continue;
        }
        let size = playlist.clips[next].size_bytes();
        for t in v.start_slot..(v.start_slot + v.watch_slots).min(end) {
            let take = timeline.bandwidth(t).min(size - have[next]);
            if take == 0 && have[next] == size {
                break;
            }
            schedule.push(t, next, take);
            have[next] += take;
        }
    }
    schedule
}

pub const SCHEDULE_CSV_HEADER: &str = "slot,video_id,unit_index,link_type,cost,energy";

/// One row per (slot, clip, unit) touched by the schedule. Unit indices count
/// from the clip head, after the bytes in `initial`; cost is in dollars and
/// energy in joules.
pub fn write_schedule_csv<W: Write>(
    mut out: W,
    schedule: &DownloadSchedule,
    playlist: &Playlist,
    timeline: &NetworkTimeline,
    initial: &[Bytes],
) -> std::io::Result<()> {
    writeln!(out, "{SCHEDULE_CSV_HEADER}")?;
    let mut sorted = schedule.clone();
    sorted.normalize();
    let mut have = initial.to_vec();
    let slot_ms = timeline.slot_ms();
    for a in &sorted.allocations {
        let clip = &playlist.clips[a.clip];
        let unit = clip.unit_bytes(slot_ms);
        let link = timeline.get(a.slot);
        let mut left = a.bytes;
        while left > 0 {
            let index = have[a.clip] / unit;
            let piece = left.min((index + 1) * unit - have[a.clip]);
            writeln!(
                out,
                "{},{},{},{},{},{}",
                a.slot,
                clip.id,
                index,
                link.link,
                format_dollars(link.cost_of(piece)),
                crate::metrics::format_joules(link.energy_of(piece))
            )?;
            have[a.clip] += piece;
            left -= piece;
        }
    }
    Ok(())
}

/// Exhaustive search over unit-to-slot assignments for tiny instances.
pub mod oracle {
    use std::collections::HashMap;

    use super::WatchtimeError;
    use crate::kinematics::SlotView;
    use crate::model::{Bytes, DownloadSchedule, NetworkTimeline, ObjectiveWeights, Playlist, Slot};

    pub const MAX_VIDEOS: usize = 4;
    pub const MAX_SLOTS: usize = 20;
    const MAX_STATES: usize = 250_000;

    /// What the search minimizes.
    #[derive(Debug, Clone, PartialEq)]
    pub enum OracleObjective {
        /// p·Discontinuity + q·C/C_max + r·E/E_max over the given views.
        Playback { views: Vec<SlotView>, weights: ObjectiveWeights },
        /// Σ pᵢ·(1 − unitsᵢ/capᵢ)² using zero-cost slots only.
        PrefetchSquared { preferences: Vec<f64>, cap_units: Vec<u32> },
    }

    #[derive(Debug, Clone, PartialEq)]
    pub struct OracleInstance {
        pub playlist: Playlist,
        pub timeline: NetworkTimeline,
        /// Units already on the device per clip.
        pub initial_units: Vec<u32>,
        pub objective: OracleObjective,
    }

    #[derive(Debug, Clone, PartialEq)]
    pub struct OracleSolution {
        pub schedule: DownloadSchedule,
        pub objective: f64,
        /// Units downloaded per clip.
        pub units: Vec<u32>,
    }

    /// Optimal schedule of `instance`. All clips must share one unit size and
    /// slot bandwidths are rounded down to whole units.
    pub fn brute_force_optimal(instance: &OracleInstance) -> Result<OracleSolution, WatchtimeError> {
        let pl = &instance.playlist;
        let tl = &instance.timeline;
        if pl.len() > MAX_VIDEOS || tl.len() > MAX_SLOTS {
            return Err(WatchtimeError::TooLarge(format!("{} videos, {} slots", pl.len(), tl.len())));
        }
        let slot_ms = tl.slot_ms();
        let unit = pl.clips[0].unit_bytes(slot_ms);
        if pl.clips.iter().any(|c| c.unit_bytes(slot_ms) != unit) {
            return Err(WatchtimeError::InvalidInstance("clips must share one unit size".into()));
        }
        if instance.initial_units.len() != pl.len() {
            return Err(WatchtimeError::InvalidInstance("one initial count per clip".into()));
        }
        let n = pl.len();
        let (limit, free_only): (Vec<u32>, bool) = match &instance.objective {
            OracleObjective::Playback { views, .. } => {
                let mut lim = vec![0u32; n];
                for v in views {
                    let counted = v.watch_slots.min(pl.clips[v.clip].playback_slots(slot_ms));
                    lim[v.clip] = lim[v.clip].max(counted);
                }
                (lim, false)
            }
            OracleObjective::PrefetchSquared { cap_units, preferences } => {
                if cap_units.len() != n || preferences.len() != n {
                    return Err(WatchtimeError::InvalidInstance("one cap and preference per clip".into()));
                }
                (cap_units.clone(), true)
            }
        };
        // extra units worth considering per clip
        let extra: Vec<u32> = (0..n).map(|i| limit[i].saturating_sub(instance.initial_units[i])).collect();
        let states: usize = extra.iter().map(|&e| e as usize + 1).product();
        if states > MAX_STATES {
            return Err(WatchtimeError::TooLarge(format!("{states} states")));
        }

        let playback = match &instance.objective {
            OracleObjective::Playback { views, weights } => {
                let durations: Vec<f64> = views.iter().map(|v| v.watch_slots as f64).collect();
                let w = if views.is_empty() { Vec::new() } else { super::watch_weights(&durations)? };
                Some((views.clone(), w, *weights))
            }
            _ => None,
        };
        let horizon = match &playback {
            Some((views, _, _)) => views.iter().map(|v| v.start_slot + v.watch_slots).max().unwrap_or(0).max(tl.len() as Slot),
            None => tl.len() as Slot,
        };

        // penalty charged at the start of slot t for playback slots due then
        let due_penalty = |t: Slot, state: &[u32]| -> f64 {
            let Some((views, w, weights)) = &playback else { return 0.0 };
            let mut v = 0.0;
            for (view, wi) in views.iter().zip(w) {
                let counted = view.watch_slots.min(pl.clips[view.clip].playback_slots(slot_ms)).max(1);
                if t >= view.start_slot && t < view.start_slot + counted {
                    let k = t - view.start_slot;
                    let have = (instance.initial_units[view.clip] + state[view.clip]) as Bytes * unit;
                    let need = ((k as Bytes + 1) * unit).min(pl.clips[view.clip].size_bytes());
                    if have < need {
                        v += weights.p * wi / counted as f64;
                    }
                }
            }
            v
        };

        type Key = Vec<u32>;
        let start: Key = vec![0; n];
        let mut layer: HashMap<Key, f64> = HashMap::from([(start, 0.0)]);
        let mut back: Vec<HashMap<Key, (Key, Vec<u32>)>> = Vec::new();
        for t in 0..horizon {
            let link = tl.get(t);
            let usable = !(free_only && !link.is_free());
            let slot_units = if usable { (link.bandwidth / unit) as u32 } else { 0 };
            let mut next: HashMap<Key, f64> = HashMap::new();
            let mut from: HashMap<Key, (Key, Vec<u32>)> = HashMap::new();
            let mut keys: Vec<&Key> = layer.keys().collect();
            keys.sort();
            for state in keys {
                let base = layer[state] + due_penalty(t, state);
                for add in compositions(&extra, state, slot_units) {
                    let bytes = add.iter().sum::<u32>() as Bytes * unit;
                    let price = match &playback {
                        Some((_, _, w)) => w.transfer_penalty(&link, bytes),
                        None => 0.0,
                    };
                    let key: Key = state.iter().zip(&add).map(|(a, b)| a + b).collect();
                    let value = base + price;
                    if next.get(&key).is_none_or(|&old| value < old - 1e-12) {
                        next.insert(key.clone(), value);
                        from.insert(key, (state.clone(), add));
                    }
                }
            }
            layer = next;
            back.push(from);
        }

        let final_value = |state: &Key, v: f64| -> f64 {
            match &instance.objective {
                OracleObjective::PrefetchSquared { preferences, cap_units } => (0..n)
                    .map(|i| {
                        let d = if cap_units[i] == 0 {
                            1.0
                        } else {
                            1.0 - (instance.initial_units[i] + state[i]) as f64 / cap_units[i] as f64
                        };
                        preferences[i] * d * d
                    })
                    .sum(),
                _ => v,
            }
        };
        let mut best: Option<(Key, f64)> = None;
        let mut finals: Vec<(&Key, &f64)> = layer.iter().collect();
        finals.sort_by(|a, b| a.0.cmp(b.0));
        for (state, &v) in finals {
            let value = final_value(state, v);
            if best.as_ref().is_none_or(|(_, b)| value < *b - 1e-12) {
                best = Some((state.clone(), value));
            }
        }
        let (mut state, objective) = best.unwrap_or((vec![0; n], 0.0));
        let units = state.clone();
        let mut schedule = DownloadSchedule::new();
        for t in (0..horizon).rev() {
            let (prev, add) = back[t as usize][&state].clone();
            for (clip, &a) in add.iter().enumerate() {
                schedule.push(t, clip, a as Bytes * unit);
            }
            state = prev;
        }
        schedule.normalize();
        Ok(OracleSolution { schedule, objective, units })
    }

    /// Every way to add at most `budget` units without exceeding `extra`.
    fn compositions(extra: &[u32], state: &[u32], budget: u32) -> Vec<Vec<u32>> {
        let mut out = Vec::new();
        let mut cur = vec![0; extra.len()];
        fn rec(i: usize, left: u32, extra: &[u32], state: &[u32], cur: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
            if i == extra.len() {
                out.push(cur.clone());
                return;
            }
            let room = (extra[i] - state[i]).min(left);
            for a in 0..=room {
                cur[i] = a;
                rec(i + 1, left - a, extra, state, cur, out);
            }
            cur[i] = 0;
        }
        rec(0, budget, extra, state, &mut cur, &mut out);
        out
    }
}
