//! Domain types shared by the schedulers, the metrics and the simulator.
//!
//! Money is tracked in integer nano-dollars and energy in integer microjoules.
//! Both are charged per transferred byte, so a slot that carries fewer bytes
//! than its capacity is billed pro rata and a fully used slot costs exactly
//! its per-slot rate.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Byte count.
pub type Bytes = u64;
/// Index of a discrete time slot on a [`NetworkTimeline`].
pub type Slot = u32;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("clip {id}: {reason}")]
    InvalidClip { id: String, reason: String },
    #[error("duplicate clip id {0} in playlist")]
    DuplicateClip(String),
    #[error("playlist is empty")]
    EmptyPlaylist,
    #[error("invalid slot {slot}: {reason}")]
    InvalidSlot { slot: Slot, reason: String },
    #[error("slot duration must be positive")]
    ZeroSlotDuration,
    #[error("invalid objective weights: {0}")]
    InvalidWeights(String),
    #[error("unknown {what} {value:?}")]
    Unknown { what: &'static str, value: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Section {
    Popular,
    Recent,
    Social,
}

impl fmt::Display for Section {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Section::Popular => "popular",
            Section::Recent => "recent",
            Section::Social => "social",
        })
    }
}

impl FromStr for Section {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "popular" => Ok(Section::Popular),
            "recent" => Ok(Section::Recent),
            "social" => Ok(Section::Social),
            other => Err(ModelError::Unknown { what: "section", value: other.to_string() }),
        }
    }
}

/// One instant video clip.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoClip {
    pub id: String,
    pub section: Section,
    /// Playback length in milliseconds.
    pub length_ms: u32,
    /// Streaming rate in bytes per second.
    pub rate: u64,
    /// Preference score used by the pre-fetcher, min-max normalized per playlist.
    pub preference: f64,
    /// Upload time in seconds since the trace epoch.
    pub upload_ts: i64,
    pub reposts: u64,
}

impl VideoClip {
    pub fn new(id: impl Into<String>, section: Section, length_ms: u32, rate: u64) -> Result<Self, ModelError> {
        let clip = VideoClip {
            id: id.into(),
            section,
            length_ms,
            rate,
            preference: 0.0,
            upload_ts: 0,
            reposts: 0,
        };
        clip.check()?;
        Ok(clip)
    }

    fn check(&self) -> Result<(), ModelError> {
        let bad = |reason: &str| ModelError::InvalidClip { id: self.id.clone(), reason: reason.to_string() };
        if self.length_ms == 0 {
            return Err(bad("length must be positive"));
        }
        if self.rate == 0 {
            return Err(bad("rate must be positive"));
        }
        if !(self.preference >= 0.0 && self.preference.is_finite()) {
            return Err(bad("preference must be a non-negative number"));
        }
        Ok(())
    }

    /// L·R in bytes.
    pub fn size_bytes(&self) -> Bytes {
        self.rate * self.length_ms as u64 / 1000
    }

    /// Bytes of one playback slot (R·Δ), the scheduling unit.
    pub fn unit_bytes(&self, slot_ms: u32) -> Bytes {
        (self.rate * slot_ms as u64 / 1000).max(1)
    }

    /// Number of playback slots in the clip, rounded up.
    pub fn playback_slots(&self, slot_ms: u32) -> u32 {
        self.length_ms.div_ceil(slot_ms.max(1))
    }
}

/// Ordered clip list watched in passive view.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Playlist {
    pub clips: Vec<VideoClip>,
    /// Slot at which the user starts watching (u_0).
    pub start_offset: Slot,
}

impl Playlist {
    pub fn new(clips: Vec<VideoClip>, start_offset: Slot) -> Result<Self, ModelError> {
        if clips.is_empty() {
            return Err(ModelError::EmptyPlaylist);
        }
        let mut seen = HashSet::with_capacity(clips.len());
        for clip in &clips {
            clip.check()?;
            if !seen.insert(clip.id.as_str()) {
                return Err(ModelError::DuplicateClip(clip.id.clone()));
            }
        }
        Ok(Playlist { clips, start_offset })
    }

    pub fn len(&self) -> usize {
        self.clips.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clips.is_empty()
    }

    pub fn sizes(&self) -> Vec<Bytes> {
        self.clips.iter().map(VideoClip::size_bytes).collect()
    }

    pub fn total_bytes(&self) -> Bytes {
        self.clips.iter().map(VideoClip::size_bytes).sum()
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.clips.iter().position(|c| c.id == id)
    }

    /// Sets every preference to the min-max normalized repost count.
    /// A playlist whose clips all share one repost count gets uniform preference 1.
    pub fn normalize_preferences_from_reposts(&mut self) {
        let min = self.clips.iter().map(|c| c.reposts).min().unwrap_or(0);
        let max = self.clips.iter().map(|c| c.reposts).max().unwrap_or(0);
        for clip in &mut self.clips {
            clip.preference = if max == min {
                1.0
            } else {
                (clip.reposts - min) as f64 / (max - min) as f64
            };
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LinkType {
    Wifi,
    Cellular,
    None,
}

impl fmt::Display for LinkType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LinkType::Wifi => "wifi",
            LinkType::Cellular => "cellular",
            LinkType::None => "none",
        })
    }
}

/// Per-byte price and energy of a link.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tariff {
    /// Nano-dollars per byte.
    pub cost_per_byte: u64,
    /// Microjoules per byte.
    pub energy_per_byte: u64,
}

/// Network conditions of one slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlotLink {
    pub link: LinkType,
    /// Bytes deliverable within the slot (B(t)).
    pub bandwidth: Bytes,
    pub tariff: Tariff,
}

impl SlotLink {
    pub const NONE: SlotLink = SlotLink {
        link: LinkType::None,
        bandwidth: 0,
        tariff: Tariff { cost_per_byte: 0, energy_per_byte: 0 },
    };

    pub fn wifi(bandwidth: Bytes, energy_per_byte: u64) -> Self {
        SlotLink { link: LinkType::Wifi, bandwidth, tariff: Tariff { cost_per_byte: 0, energy_per_byte } }
    }

    pub fn cellular(bandwidth: Bytes, tariff: Tariff) -> Self {
        SlotLink { link: LinkType::Cellular, bandwidth, tariff }
    }

    /// C(t): price of a fully used slot, nano-dollars.
    pub fn slot_cost(&self) -> u64 {
        self.bandwidth * self.tariff.cost_per_byte
    }

    /// E(t): energy of a fully used slot, microjoules.
    pub fn slot_energy(&self) -> u64 {
        self.bandwidth * self.tariff.energy_per_byte
    }

    pub fn cost_of(&self, bytes: Bytes) -> u64 {
        bytes * self.tariff.cost_per_byte
    }

    pub fn energy_of(&self, bytes: Bytes) -> u64 {
        bytes * self.tariff.energy_per_byte
    }

    /// Usable for pre-fetching: carries data at no monetary cost.
    pub fn is_free(&self) -> bool {
        self.bandwidth > 0 && self.tariff.cost_per_byte == 0
    }

    fn check(&self, slot: Slot) -> Result<(), ModelError> {
        let bad = |reason: &str| ModelError::InvalidSlot { slot, reason: reason.to_string() };
        match self.link {
            LinkType::None if self.bandwidth != 0 => Err(bad("a slot without link has no bandwidth")),
            LinkType::Wifi | LinkType::Cellular if self.bandwidth == 0 => Err(bad("a connected slot needs bandwidth")),
            LinkType::Wifi if self.tariff.cost_per_byte != 0 => Err(bad("wifi traffic is free")),
            _ => Ok(()),
        }
    }
}

/// B(t), C(t) and E(t) for every slot of a simulation horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkTimeline {
    slot_ms: u32,
    slots: Vec<SlotLink>,
}

impl NetworkTimeline {
    pub fn new(slot_ms: u32, slots: Vec<SlotLink>) -> Result<Self, ModelError> {
        if slot_ms == 0 {
            return Err(ModelError::ZeroSlotDuration);
        }
        for (i, s) in slots.iter().enumerate() {
            s.check(i as Slot)?;
        }
        Ok(NetworkTimeline { slot_ms, slots })
    }

    pub fn uniform(slot_ms: u32, len: usize, link: SlotLink) -> Result<Self, ModelError> {
        Self::new(slot_ms, vec![link; len])
    }

    pub fn slot_ms(&self) -> u32 {
        self.slot_ms
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    /// Conditions of `slot`; slots past the horizon have no link.
    pub fn get(&self, slot: Slot) -> SlotLink {
        self.slots.get(slot as usize).copied().unwrap_or(SlotLink::NONE)
    }

    pub fn bandwidth(&self, slot: Slot) -> Bytes {
        self.get(slot).bandwidth
    }

    pub fn slots(&self) -> &[SlotLink] {
        &self.slots
    }

    /// Total zero-cost capacity in `[from, to)`.
    pub fn free_capacity(&self, from: Slot, to: Slot) -> Bytes {
        (from..to.min(self.len() as Slot)).map(|t| self.get(t)).filter(SlotLink::is_free).map(|s| s.bandwidth).sum()
    }
}

/// `bytes` of clip `clip` downloaded during `slot`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Allocation {
    pub slot: Slot,
    /// Playlist position of the clip.
    pub clip: usize,
    pub bytes: Bytes,
}

/// A contiguous run of slots serving one clip, the (v̂, t̂, l̂) form.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DownloadInterval {
    pub clip: usize,
    pub start_slot: Slot,
    pub len_slots: u32,
    pub bytes: Bytes,
}

/// Download schedule kept at slot granularity; several clips may share a slot.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DownloadSchedule {
    pub allocations: Vec<Allocation>,
}

impl DownloadSchedule {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, slot: Slot, clip: usize, bytes: Bytes) {
        if bytes == 0 {
            return;
        }
        match self.allocations.last_mut() {
            Some(last) if last.slot == slot && last.clip == clip => last.bytes += bytes,
            _ => self.allocations.push(Allocation { slot, clip, bytes }),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.allocations.is_empty()
    }

    pub fn len(&self) -> usize {
        self.allocations.len()
    }

    /// Orders allocations by slot, then clip, merging duplicates.
    pub fn normalize(&mut self) {
        self.allocations.sort_by_key(|a| (a.slot, a.clip));
        let mut merged: Vec<Allocation> = Vec::with_capacity(self.allocations.len());
        for a in self.allocations.drain(..) {
            match merged.last_mut() {
                Some(last) if last.slot == a.slot && last.clip == a.clip => last.bytes += a.bytes,
                _ if a.bytes > 0 => merged.push(a),
                _ => {}
            }
        }
        self.allocations = merged;
    }

    pub fn bytes_per_clip(&self, n_clips: usize) -> Vec<Bytes> {
        let mut out = vec![0; n_clips];
        for a in &self.allocations {
            if let Some(b) = out.get_mut(a.clip) {
                *b += a.bytes;
            }
        }
        out
    }

    pub fn total_bytes(&self) -> Bytes {
        self.allocations.iter().map(|a| a.bytes).sum()
    }

    /// Maximal runs of consecutive slots assigned to the same clip.
    pub fn intervals(&self) -> Vec<DownloadInterval> {
        let mut sorted = self.allocations.clone();
        sorted.sort_by_key(|a| (a.clip, a.slot));
        let mut out: Vec<DownloadInterval> = Vec::new();
        for a in sorted {
            match out.last_mut() {
                Some(iv) if iv.clip == a.clip && iv.start_slot + iv.len_slots == a.slot => {
                    iv.len_slots += 1;
                    iv.bytes += a.bytes;
                }
                Some(iv) if iv.clip == a.clip && iv.start_slot + iv.len_slots - 1 == a.slot => iv.bytes += a.bytes,
                _ => out.push(DownloadInterval { clip: a.clip, start_slot: a.slot, len_slots: 1, bytes: a.bytes }),
            }
        }
        out.sort_by_key(|iv| (iv.start_slot, iv.clip));
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    SlotOverAllocated { slot: Slot, assigned: Bytes, capacity: Bytes },
    NoLink { slot: Slot },
    OverDownload { clip: usize, bytes: Bytes, size: Bytes },
    UnknownClip { clip: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::SlotOverAllocated { slot, assigned, capacity } => {
                write!(f, "slot {slot}: {assigned} bytes assigned, capacity {capacity}")
            }
            Violation::NoLink { slot } => write!(f, "slot {slot}: download scheduled without a link"),
            Violation::OverDownload { clip, bytes, size } => {
                write!(f, "clip #{clip}: {bytes} bytes scheduled for a {size}-byte clip")
            }
            Violation::UnknownClip { clip } => write!(f, "clip #{clip} is not in the playlist"),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Lists every feasibility violation of `schedule`; an empty report means feasible.
pub fn validate_schedule(schedule: &DownloadSchedule, timeline: &NetworkTimeline, playlist: &Playlist) -> ValidationReport {
    let mut violations = Vec::new();
    let mut per_slot: std::collections::BTreeMap<Slot, Bytes> = Default::default();
    for a in &schedule.allocations {
        *per_slot.entry(a.slot).or_default() += a.bytes;
        if a.clip >= playlist.len() {
            violations.push(Violation::UnknownClip { clip: a.clip });
        }
    }
    for (&slot, &assigned) in &per_slot {
        let link = timeline.get(slot);
        if link.link == LinkType::None {
            violations.push(Violation::NoLink { slot });
        } else if assigned > link.bandwidth {
            violations.push(Violation::SlotOverAllocated { slot, assigned, capacity: link.bandwidth });
        }
    }
    for (clip, bytes) in schedule.bytes_per_clip(playlist.len()).into_iter().enumerate() {
        let size = playlist.clips[clip].size_bytes();
        if bytes > size {
            violations.push(Violation::OverDownload { clip, bytes, size });
        }
    }
    ValidationReport { violations }
}

/// Bytes held on the device per clip, split into pre-fetched and watch-time parts.
///
/// The storage limit governs the pre-fetch store only; watch-time bytes are
/// streamed and do not count against it.
#[derive(Debug, Clone, PartialEq)]
pub struct CacheState {
    prefetched: Vec<Bytes>,
    fetched: Vec<Bytes>,
    sizes: Vec<Bytes>,
    storage_limit: Bytes,
    storage_used: Bytes,
}

impl CacheState {
    pub fn new(sizes: Vec<Bytes>, storage_limit: Bytes) -> Self {
        let n = sizes.len();
        CacheState { prefetched: vec![0; n], fetched: vec![0; n], sizes, storage_limit, storage_used: 0 }
    }

    pub fn for_playlist(playlist: &Playlist, storage_limit: Bytes) -> Self {
        Self::new(playlist.sizes(), storage_limit)
    }

    pub fn len(&self) -> usize {
        self.sizes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sizes.is_empty()
    }

    pub fn size(&self, clip: usize) -> Bytes {
        self.sizes[clip]
    }

    pub fn prefetched(&self, clip: usize) -> Bytes {
        self.prefetched[clip]
    }

    pub fn downloaded(&self, clip: usize) -> Bytes {
        self.prefetched[clip] + self.fetched[clip]
    }

    pub fn missing(&self, clip: usize) -> Bytes {
        self.sizes[clip] - self.downloaded(clip)
    }

    pub fn storage_used(&self) -> Bytes {
        self.storage_used
    }

    pub fn storage_limit(&self) -> Bytes {
        self.storage_limit
    }

    pub fn storage_free(&self) -> Bytes {
        self.storage_limit - self.storage_used
    }

    /// Stores up to `bytes` of pre-fetched data; returns what was accepted.
    pub fn add_prefetch(&mut self, clip: usize, bytes: Bytes) -> Bytes {
        let accepted = bytes.min(self.missing(clip)).min(self.storage_free());
        self.prefetched[clip] += accepted;
        self.storage_used += accepted;
        accepted
    }

    /// Records watch-time bytes; returns what was accepted.
    pub fn add_fetch(&mut self, clip: usize, bytes: Bytes) -> Bytes {
        let accepted = bytes.min(self.missing(clip));
        self.fetched[clip] += accepted;
        accepted
    }

    /// Recomputes storage use from the per-clip counters.
    pub fn recount_storage(&self) -> Bytes {
        self.prefetched.iter().sum()
    }
}

/// p, q, r of the combined objective together with the C_max and E_max normalizers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveWeights {
    pub p: f64,
    pub q: f64,
    pub r: f64,
    /// Cost of fetching the whole playlist over cellular, nano-dollars.
    pub c_max: f64,
    /// Energy of fetching the whole playlist over cellular, microjoules.
    pub e_max: f64,
}

impl ObjectiveWeights {
    pub fn new(p: f64, q: f64, r: f64, c_max: f64, e_max: f64) -> Result<Self, ModelError> {
        let w = ObjectiveWeights { p, q, r, c_max, e_max };
        w.check()?;
        Ok(w)
    }

    pub fn for_playlist(p: f64, q: f64, r: f64, playlist: &Playlist, cellular: Tariff) -> Result<Self, ModelError> {
        let total = playlist.total_bytes() as f64;
        Self::new(p, q, r, total * cellular.cost_per_byte as f64, total * cellular.energy_per_byte as f64)
    }

    pub fn check(&self) -> Result<(), ModelError> {
        let all = [self.p, self.q, self.r, self.c_max, self.e_max];
        if all.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(ModelError::InvalidWeights("weights and normalizers must be finite and non-negative".into()));
        }
        if self.p + self.q + self.r <= 0.0 {
            return Err(ModelError::InvalidWeights("p + q + r must be positive".into()));
        }
        if self.q > 0.0 && self.c_max <= 0.0 {
            return Err(ModelError::InvalidWeights("q > 0 needs a positive C_max".into()));
        }
        if self.r > 0.0 && self.e_max <= 0.0 {
            return Err(ModelError::InvalidWeights("r > 0 needs a positive E_max".into()));
        }
        Ok(())
    }

    /// Normalized objective price of moving `bytes` over `link`.
    pub fn transfer_penalty(&self, link: &SlotLink, bytes: Bytes) -> f64 {
        let mut v = 0.0;
        if self.q > 0.0 {
            v += self.q * link.cost_of(bytes) as f64 / self.c_max;
        }
        if self.r > 0.0 {
            v += self.r * link.energy_of(bytes) as f64 / self.e_max;
        }
        v
    }
}
