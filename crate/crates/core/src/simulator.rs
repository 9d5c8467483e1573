//! Discrete-time replay of one watching event, and batches of events.
//!
//! The timeline starts at the last WiFi window opening before the user starts
//! watching. Until the watch start only pre-fetching runs, on WiFi slots. From
//! the watch start on, every slot first retires clips that came on screen,
//! then either reacts to a gesture or pre-fetches on idle WiFi, and finally
//! executes the downloads queued for it.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rayon::prelude::*;
use thiserror::Error;

use crate::config::{ConfigError, SimConfig};
use crate::kinematics::{gestures_to_session, GestureEvent, KinematicsError, SlotView};
use crate::metrics::{evaluate, format_dollars, format_joules, DeliveryCurve, MetricsError, MetricsReport, Totals};
use crate::model::{Bytes, CacheState, DownloadSchedule, LinkType, ModelError, NetworkTimeline, ObjectiveWeights, Playlist, Slot, SlotLink};
use crate::prefetch::{PrefetchError, PrefetchGreedy};
use crate::traces::{event_seed, synthesize_event, TraceError};
use crate::watchtime::{nextd, on_gesture, predict_views, seqd, SlotQueue, ViewState, WatchContext, WatchtimeError};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("trace does not match the playlist: {0}")]
    TraceMismatch(String),
    #[error("conservation violated: {0}")]
    Conservation(String),
    #[error("unknown scheduler {0:?} (expected wt-pf, wt, seqd or nextd)")]
    UnknownScheduler(String),
    #[error("bad grid: {0}")]
    Grid(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Kinematics(#[from] KinematicsError),
    #[error(transparent)]
    Prefetch(#[from] PrefetchError),
    #[error(transparent)]
    Watchtime(#[from] WatchtimeError),
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error("cannot start worker pool: {0}")]
    Pool(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Scheduler {
    /// Pre-fetching plus watch-time scheduling.
    WtPf,
    /// Watch-time scheduling alone.
    Wt,
    SeqD,
    NextD,
}

impl Scheduler {
    pub const ALL: [Scheduler; 4] = [Scheduler::WtPf, Scheduler::Wt, Scheduler::SeqD, Scheduler::NextD];
}

impl fmt::Display for Scheduler {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scheduler::WtPf => "wt-pf",
            Scheduler::Wt => "wt",
            Scheduler::SeqD => "seqd",
            Scheduler::NextD => "nextd",
        })
    }
}

impl FromStr for Scheduler {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "wt-pf" | "wtpf" | "wt+pf" => Ok(Scheduler::WtPf),
            "wt" => Ok(Scheduler::Wt),
            "seqd" => Ok(Scheduler::SeqD),
            "nextd" => Ok(Scheduler::NextD),
            other => Err(SimError::UnknownScheduler(other.to_string())),
        }
    }
}

/// A watching event to simulate.
#[derive(Debug, Clone, Copy)]
pub struct SessionInput<'a> {
    pub playlist: &'a Playlist,
    pub gestures: &'a [GestureEvent],
    /// Session length, ms from the watch start.
    pub session_end_ms: u64,
    /// Watch start, seconds since the trace epoch.
    pub start_s: i64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventKind {
    Prefetch,
    Fetch,
    Gesture,
    Shown,
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EventKind::Prefetch => "prefetch",
            EventKind::Fetch => "fetch",
            EventKind::Gesture => "gesture",
            EventKind::Shown => "shown",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LogEvent {
    pub slot: Slot,
    pub kind: EventKind,
    pub clip: Option<usize>,
    pub bytes: Bytes,
}

/// Everything that happened in a run, ordered by slot.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EventLog {
    pub events: Vec<LogEvent>,
}

pub const EVENT_LOG_CSV_HEADER: &str = "slot,event,video_id,bytes,link_type,cost,energy";

impl EventLog {
    fn push(&mut self, slot: Slot, kind: EventKind, clip: Option<usize>, bytes: Bytes) {
        self.events.push(LogEvent { slot, kind, clip, bytes });
    }

    pub fn is_ordered(&self) -> bool {
        self.events.windows(2).all(|w| w[0].slot <= w[1].slot)
    }

    pub fn write_csv<W: Write>(&self, mut out: W, playlist: &Playlist, timeline: &NetworkTimeline) -> std::io::Result<()> {
        writeln!(out, "{EVENT_LOG_CSV_HEADER}")?;
        for e in &self.events {
            let id = e.clip.map_or("", |c| playlist.clips[c].id.as_str());
            let link = timeline.get(e.slot);
            let (cost, energy) = match e.kind {
                EventKind::Prefetch | EventKind::Fetch => (link.cost_of(e.bytes), link.energy_of(e.bytes)),
                _ => (0, 0),
            };
            writeln!(
                out,
                "{},{},{},{},{},{},{}",
                e.slot,
                e.kind,
                id,
                e.bytes,
                link.link,
                format_dollars(cost),
                format_joules(energy)
            )?;
        }
        Ok(())
    }
}

/// Outcome of one simulated watching event.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationRun {
    pub scheduler: Scheduler,
    pub report: MetricsReport,
    pub log: EventLog,
    pub timeline: NetworkTimeline,
    /// Realized views on the slot grid.
    pub views: Vec<SlotView>,
    pub watch_start: Slot,
    pub session_end: Slot,
    pub weights: ObjectiveWeights,
    /// Pre-fetched bytes per clip.
    pub prefetched: Vec<Bytes>,
    /// All delivered bytes per clip.
    pub delivered: Vec<Bytes>,
}

impl SimulationRun {
    pub fn prefetched_total(&self) -> Bytes {
        self.prefetched.iter().sum()
    }

    /// Everything that was downloaded, as a schedule.
    pub fn schedule(&self) -> DownloadSchedule {
        let mut s = DownloadSchedule::new();
        for e in self.log.events.iter().filter(|e| matches!(e.kind, EventKind::Prefetch | EventKind::Fetch)) {
            s.push(e.slot, e.clip.expect("downloads name a clip"), e.bytes);
        }
        s.normalize();
        s
    }
}

/// Network timeline of one event and the slot at which watching starts.
pub fn build_timeline(cfg: &SimConfig, start_s: i64, session_end_ms: u64) -> Result<(NetworkTimeline, Slot), SimError> {
    let slot_ms = cfg.clip.slot_ms as i64;
    let period = cfg.network.wifi_period_s as i64;
    let origin_s = start_s.div_euclid(period) * period;
    let watch_start = ((start_s - origin_s) * 1000 / slot_ms) as Slot;
    let session_slots = (session_end_ms as i64 / slot_ms) as Slot;
    // room for predictions that run past the session end
    let tail = 4 * cfg.clip.length_ms.div_ceil(cfg.clip.slot_ms);
    let len = watch_start + session_slots + tail;
    let wifi = SlotLink::wifi(cfg.per_slot(cfg.network.wifi_bandwidth), cfg.tariff.wifi_energy);
    let cell = SlotLink::cellular(cfg.per_slot(cfg.network.cellular_bandwidth), cfg.tariff.cellular());
    let window_ms = cfg.network.wifi_window_s as i64 * 1000;
    let slots = (0..len)
        .map(|t| {
            let offset_ms = (t as i64 * slot_ms).rem_euclid(period * 1000);
            let in_window = offset_ms < window_ms;
            let watching = t >= watch_start;
            let link = if in_window && (!watching || cfg.network.wifi_during_watch) { wifi } else { cell };
            if link.bandwidth == 0 {
                SlotLink::NONE
            } else {
                link
            }
        })
        .collect();
    Ok((NetworkTimeline::new(cfg.clip.slot_ms, slots)?, watch_start))
}

/// Absolute time (s since the trace epoch) at the end of slot `t`.
fn slot_end_s(start_s: i64, watch_start: Slot, slot_ms: u32, t: Slot) -> f64 {
    start_s as f64 + ((t as f64 + 1.0) - watch_start as f64) * slot_ms as f64 / 1000.0
}

struct Books {
    cache: CacheState,
    curves: Vec<DeliveryCurve>,
    spent: Totals,
    log: EventLog,
}

impl Books {
    fn prefetch(&mut self, t: Slot, link: &SlotLink, clip: usize, bytes: Bytes) -> Bytes {
        let got = self.cache.add_prefetch(clip, bytes);
        self.record(t, link, clip, got, EventKind::Prefetch);
        got
    }

    fn fetch(&mut self, t: Slot, link: &SlotLink, clip: usize, bytes: Bytes) -> Bytes {
        let got = self.cache.add_fetch(clip, bytes);
        self.record(t, link, clip, got, EventKind::Fetch);
        got
    }

    fn record(&mut self, t: Slot, link: &SlotLink, clip: usize, bytes: Bytes, kind: EventKind) {
        if bytes == 0 {
            return;
        }
        self.curves[clip].push(t, bytes);
        self.spent.cost += link.cost_of(bytes);
        self.spent.energy += link.energy_of(bytes);
        self.log.push(t, kind, Some(clip), bytes);
    }

    fn downloaded(&self) -> Vec<Bytes> {
        (0..self.cache.len()).map(|c| self.cache.downloaded(c)).collect()
    }
}

/// Pre-fetches on the free capacity of slot `t` left after `busy` bytes.
fn prefetch_slot(books: &mut Books, greedy: &mut PrefetchGreedy, t: Slot, link: &SlotLink, busy: Bytes) {
    let mut room = link.bandwidth.saturating_sub(busy);
    while room > 0 {
        let limit = room.min(books.cache.storage_free());
        let Some((clip, bytes)) = greedy.next_unit(limit) else { break };
        let got = books.prefetch(t, link, clip, bytes);
        room -= got;
        if got < bytes {
            break;
        }
    }
}

/// Simulates one watching event under `scheduler`.
pub fn run(cfg: &SimConfig, input: SessionInput, scheduler: Scheduler, run_id: &str) -> Result<SimulationRun, SimError> {
    cfg.validate()?;
    let playlist = input.playlist;
    let n = playlist.len();
    let slot_ms = cfg.clip.slot_ms;
    if let Some(g) = input.gestures.iter().find(|g| g.timestamp_ms > input.session_end_ms) {
        return Err(SimError::TraceMismatch(format!("gesture at {} ms after the session end", g.timestamp_ms)));
    }
    let session = gestures_to_session(input.gestures, n, &cfg.kinematics, input.session_end_ms as f64)?;
    let (timeline, ws) = build_timeline(cfg, input.start_s, input.session_end_ms)?;
    let end = ws + (input.session_end_ms / slot_ms as u64) as Slot;
    let views = session.slot_views(slot_ms, ws);
    let weights = ObjectiveWeights::for_playlist(cfg.objective.p, cfg.objective.q, cfg.objective.r, playlist, cfg.tariff.cellular())?;

    let mut books = Books {
        cache: CacheState::for_playlist(playlist, cfg.prefetch.storage_bytes),
        curves: vec![DeliveryCurve::new(0); n],
        spent: Totals::default(),
        log: EventLog::default(),
    };
    let prefetching = scheduler == Scheduler::WtPf;
    let mut greedy = PrefetchGreedy::for_playlist(playlist, cfg.prefetch.alpha, slot_ms)?;
    // clips in upload order for admission into V_p
    let mut arrivals: Vec<usize> = (0..n).collect();
    arrivals.sort_by_key(|&c| (playlist.clips[c].upload_ts, c));
    let mut next_arrival = 0;
    let mut shown = vec![false; n];
    let mut admit = |greedy: &mut PrefetchGreedy, t: Slot, shown: &[bool]| {
        let now = slot_end_s(input.start_s, ws, slot_ms, t);
        while next_arrival < n && (playlist.clips[arrivals[next_arrival]].upload_ts as f64) < now {
            let c = arrivals[next_arrival];
            if !shown[c] {
                greedy.admit(c);
            }
            next_arrival += 1;
        }
    };

    if prefetching {
        for t in 0..ws {
            let link = timeline.get(t);
            if link.is_free() {
                admit(&mut greedy, t, &shown);
                prefetch_slot(&mut books, &mut greedy, t, &link, 0);
            }
        }
    }

    let baseline = match scheduler {
        Scheduler::SeqD => Some(seqd(playlist, &timeline, ws..end, &vec![0; n])),
        Scheduler::NextD => Some(nextd(playlist, &timeline, &views, &vec![0; n], end)),
        _ => None,
    };
    let mut baseline_next = 0;
    let mut queue = SlotQueue::new(ws);
    let mut gesture_next = 0;
    let mut view_next = 0;
    let to_slot = |ms: u64| ws + (ms / slot_ms as u64) as Slot;
    let clip_len = cfg.clip.length_ms as f64;

    for t in ws..end {
        let link = timeline.get(t);
        while view_next < views.len() && views[view_next].start_slot <= t {
            let c = views[view_next].clip;
            shown[c] = true;
            greedy.retire(c);
            books.log.push(t, EventKind::Shown, Some(c), 0);
            view_next += 1;
        }
        let mut latest: Option<&GestureEvent> = None;
        while gesture_next < input.gestures.len() && to_slot(input.gestures[gesture_next].timestamp_ms) <= t {
            latest = Some(&input.gestures[gesture_next]);
            books.log.push(t, EventKind::Gesture, None, 0);
            gesture_next += 1;
        }
        let watch_time = matches!(scheduler, Scheduler::Wt | Scheduler::WtPf);
        if watch_time && (latest.is_some() || t == ws) {
            let now_ms = latest.map_or(0.0, |g| g.timestamp_ms as f64);
            let state = session
                .views
                .iter()
                .rev()
                .find(|v| v.start_ms <= now_ms)
                .map_or(ViewState { clip: 0, entered_ms: 0.0 }, |v| ViewState { clip: v.clip, entered_ms: v.start_ms });
            let predicted = predict_views(latest, now_ms, state, n, clip_len, &cfg.kinematics, slot_ms, ws)?;
            let weight_norm = predicted.iter().map(|v| (v.watch_slots as f64).powi(2)).sum();
            let ctx = WatchContext { playlist, timeline: &timeline, weights, weight_norm };
            queue = on_gesture(t, &predicted, &books.downloaded(), &ctx);
        } else if prefetching && link.is_free() && queue.assigned_bytes(t) == 0 {
            admit(&mut greedy, t, &shown);
            prefetch_slot(&mut books, &mut greedy, t, &link, 0);
        }
        for (clip, bytes) in queue.take(t) {
            books.fetch(t, &link, clip, bytes);
        }
        if let Some(s) = &baseline {
            while baseline_next < s.allocations.len() && s.allocations[baseline_next].slot == t {
                let a = s.allocations[baseline_next];
                books.fetch(t, &link, a.clip, a.bytes);
                baseline_next += 1;
            }
        }
    }

    // conservation
    for c in 0..n {
        let d = books.cache.downloaded(c);
        if d != books.curves[c].total() || d > playlist.clips[c].size_bytes() {
            return Err(SimError::Conservation(format!("clip {c}: {d} bytes held, {} delivered", books.curves[c].total())));
        }
    }
    if books.cache.recount_storage() != books.cache.storage_used() || books.cache.storage_used() > cfg.prefetch.storage_bytes {
        return Err(SimError::Conservation("storage counter drifted".into()));
    }
    let report = evaluate(run_id, playlist, slot_ms, &views, &books.curves, books.spent, &weights)?;
    Ok(SimulationRun {
        scheduler,
        report,
        prefetched: (0..n).map(|c| books.cache.prefetched(c)).collect(),
        delivered: books.downloaded(),
        log: books.log,
        timeline,
        views,
        watch_start: ws,
        session_end: end,
        weights,
    })
}

/// Recomputes the report of a run from its event log alone.
pub fn replay(
    log: &EventLog,
    playlist: &Playlist,
    timeline: &NetworkTimeline,
    views: &[SlotView],
    weights: &ObjectiveWeights,
    run_id: &str,
) -> Result<MetricsReport, SimError> {
    let mut curves = vec![DeliveryCurve::new(0); playlist.len()];
    let mut spent = Totals::default();
    for e in &log.events {
        if let (EventKind::Prefetch | EventKind::Fetch, Some(c)) = (e.kind, e.clip) {
            let link = timeline.get(e.slot);
            if link.link == LinkType::None {
                return Err(SimError::Conservation(format!("download logged in dead slot {}", e.slot)));
            }
            curves[c].push(e.slot, e.bytes);
            spent.cost += link.cost_of(e.bytes);
            spent.energy += link.energy_of(e.bytes);
        }
    }
    Ok(evaluate(run_id, playlist, timeline.slot_ms(), views, &curves, spent, weights)?)
}

/// One axis of a parameter sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct GridAxis {
    pub name: String,
    pub values: Vec<f64>,
}

fn parse_number(s: &str) -> Result<f64, SimError> {
    let s = s.trim();
    let (num, scale) = match s.char_indices().last() {
        Some((i, 'k' | 'K')) => (&s[..i], 1e3),
        Some((i, 'm' | 'M')) => (&s[..i], 1e6),
        Some((i, 'g' | 'G')) => (&s[..i], 1e9),
        _ => (s, 1.0),
    };
    num.parse::<f64>().map(|v| v * scale).map_err(|_| SimError::Grid(format!("bad number {s:?}")))
}

/// Parses `name=lo:hi:logN`, `name=lo:hi:linN` or `name=v1,v2,...`.
///
/// `logN` and `linN` give N points, log-spaced or evenly spaced, both ends
/// included and rounded to 12 significant digits.
/// Numbers take k, m and g suffixes for powers of 1000.
pub fn parse_grid(spec: &str) -> Result<GridAxis, SimError> {
    let (name, rest) = spec.split_once('=').ok_or_else(|| SimError::Grid(format!("{spec:?} lacks '='")))?;
    let name = name.trim().to_string();
    if name.is_empty() || rest.trim().is_empty() {
        return Err(SimError::Grid(format!("{spec:?} is empty")));
    }
    let parts: Vec<&str> = rest.split(':').collect();
    let values = match parts.as_slice() {
        [lo, hi, mode] => {
            let (lo, hi) = (parse_number(lo)?, parse_number(hi)?);
            let (log, count) = if let Some(n) = mode.strip_prefix("log") {
                (true, n)
            } else if let Some(n) = mode.strip_prefix("lin") {
                (false, n)
            } else {
                return Err(SimError::Grid(format!("unknown spacing {mode:?}")));
            };
            let count: usize = count.parse().map_err(|_| SimError::Grid(format!("bad point count in {mode:?}")))?;
            if count == 0 || (log && (lo <= 0.0 || hi <= 0.0)) {
                return Err(SimError::Grid(format!("cannot space {count} points over {lo}..{hi}")));
            }
            (0..count)
                .map(|i| {
                    let f = if count == 1 { 0.0 } else { i as f64 / (count - 1) as f64 };
                    let v = if log { (lo.ln() + f * (hi.ln() - lo.ln())).exp() } else { lo + f * (hi - lo) };
                    format!("{v:.11e}").parse::<f64>().expect("formatted float parses")
                })
                .collect()
        }
        [list] => list.split(',').map(parse_number).collect::<Result<Vec<_>, _>>()?,
        _ => return Err(SimError::Grid(format!("cannot parse {rest:?}"))),
    };
    Ok(GridAxis { name, values })
}

/// Applies one grid value to a config.
///
/// `bandwidth` sets the cellular rate (bytes/s), `alpha` the pre-fetch
/// aggressiveness, `pq` and `pr` the ratios p/q and p/r (q or r = p/value),
/// `pqr` both ratios at once. Any other name is a `section.key` config path.
pub fn apply_axis(cfg: &mut SimConfig, name: &str, value: f64) -> Result<(), SimError> {
    let p = cfg.objective.p;
    match name {
        "bandwidth" => cfg.set(&format!("network.cellular_bandwidth={}", value.round() as u64))?,
        "alpha" => cfg.set(&format!("prefetch.alpha={value:?}"))?,
        "pq" => cfg.set(&format!("objective.q={:?}", p / value))?,
        "pr" => cfg.set(&format!("objective.r={:?}", p / value))?,
        "pqr" => {
            cfg.set(&format!("objective.q={:?}", p / value))?;
            cfg.set(&format!("objective.r={:?}", p / value))?;
        }
        key => cfg.set(&format!("{key}={}", format_value(value)))?,
    }
    Ok(())
}

fn format_value(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        format!("{v:?}")
    }
}

/// A fully resolved grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct GridPoint {
    /// `name=value` pairs, joined by `;`.
    pub label: String,
    pub config: SimConfig,
}

/// Cartesian product of `axes` over `base`, in row-major order.
pub fn expand_grid(base: &SimConfig, axes: &[GridAxis]) -> Result<Vec<GridPoint>, SimError> {
    if axes.iter().any(|a| a.values.is_empty()) {
        return Err(SimError::Grid("empty axis".into()));
    }
    let mut points = vec![GridPoint { label: String::new(), config: base.clone() }];
    for axis in axes {
        let mut next = Vec::new();
        for p in &points {
            for &v in &axis.values {
                let mut config = p.config.clone();
                apply_axis(&mut config, &axis.name, v)?;
                let sep = if p.label.is_empty() { "" } else { ";" };
                next.push(GridPoint { label: format!("{}{sep}{}={}", p.label, axis.name, format_value(v)), config });
            }
        }
        points = next;
    }
    Ok(points)
}

/// Mean metrics of one scheduler at one grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentRow {
    pub point: usize,
    pub label: String,
    pub scheduler: Scheduler,
    pub events: usize,
    pub discontinuity: f64,
    /// Nano-dollars.
    pub cost: f64,
    /// Microjoules.
    pub energy: f64,
    pub norm_cost: f64,
    pub norm_energy: f64,
    pub objective: f64,
    pub prefetched_bytes: f64,
}

pub const EXPERIMENT_CSV_HEADER: &str =
    "grid_point,parameters,scheduler,events,discontinuity,cost,energy,norm_cost,norm_energy,objective,prefetched_bytes";

impl ExperimentRow {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{:.6},{:.9},{:.6},{:.6},{:.6},{:.6},{:.0}",
            self.point,
            self.label,
            self.scheduler,
            self.events,
            self.discontinuity,
            self.cost / 1e9,
            self.energy / 1e6,
            self.norm_cost,
            self.norm_energy,
            self.objective,
            self.prefetched_bytes
        )
    }
}

pub fn write_experiment_csv<W: Write>(mut out: W, rows: &[ExperimentRow]) -> std::io::Result<()> {
    writeln!(out, "{EXPERIMENT_CSV_HEADER}")?;
    for r in rows {
        writeln!(out, "{}", r.csv_row())?;
    }
    Ok(())
}

/// Runs every scheduler on the `event`-th synthetic event of `cfg`.
pub fn run_event(cfg: &SimConfig, event: usize, schedulers: &[Scheduler]) -> Result<Vec<SimulationRun>, SimError> {
    let ev = synthesize_event(cfg, event_seed(cfg.experiment.seed, event as u64))?;
    let input = SessionInput { playlist: &ev.playlist, gestures: &ev.gestures, session_end_ms: ev.session_end_ms, start_s: ev.start_s };
    schedulers.iter().map(|&s| run(cfg, input, s, &format!("event{event}-{s}"))).collect()
}

/// Averages `n_events` paired events per grid point and scheduler.
///
/// Events are seeded from each point's `experiment.seed`, so every scheduler
/// and every point sees the same traces unless the grid changes the workload.
/// Up to `jobs` events run at once (0 means one per core); rows come out in
/// grid order whatever the execution order.
pub fn experiment(points: &[GridPoint], schedulers: &[Scheduler], n_events: usize, jobs: usize) -> Result<Vec<ExperimentRow>, SimError> {
    if points.is_empty() {
        return Err(SimError::Grid("no grid points".into()));
    }
    let tasks: Vec<(usize, usize)> = (0..points.len()).flat_map(|p| (0..n_events).map(move |e| (p, e))).collect();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(jobs).build().map_err(|e| SimError::Pool(e.to_string()))?;
    let results: Vec<Result<Vec<SimulationRun>, SimError>> =
        pool.install(|| tasks.par_iter().map(|&(p, e)| run_event(&points[p].config, e, schedulers)).collect());
    let mut rows = Vec::new();
    let mut results = results.into_iter();
    for (pi, point) in points.iter().enumerate() {
        let runs: Vec<Vec<SimulationRun>> = (0..n_events).map(|_| results.next().expect("one result per task")).collect::<Result<_, _>>()?;
        for (si, &scheduler) in schedulers.iter().enumerate() {
            let k = n_events.max(1) as f64;
            let mean = |f: &dyn Fn(&SimulationRun) -> f64| runs.iter().map(|r| f(&r[si])).sum::<f64>() / k;
            rows.push(ExperimentRow {
                point: pi,
                label: point.label.clone(),
                scheduler,
                events: n_events,
                discontinuity: mean(&|r| r.report.discontinuity),
                cost: mean(&|r| r.report.cost as f64),
                energy: mean(&|r| r.report.energy as f64),
                norm_cost: mean(&|r| r.report.norm_cost),
                norm_energy: mean(&|r| r.report.norm_energy),
                objective: mean(&|r| r.report.objective),
                prefetched_bytes: mean(&|r| r.prefetched_total() as f64),
            });
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinematics::GestureKind;
    use crate::model::{validate_schedule, Section, VideoClip};

    fn small_config() -> SimConfig {
        let mut c = SimConfig::default();
        c.workload.popular_clips = 5;
        c.workload.recent_clips = 15;
        c
    }

    fn tiny_playlist(n: usize) -> Playlist {
        let clips = (0..n)
            .map(|i| {
                let mut c = VideoClip::new(format!("c{i}"), Section::Recent, 6000, 166_000).unwrap();
                c.upload_ts = -100_000;
                c.reposts = i as u64;
                c
            })
            .collect();
        let mut p = Playlist::new(clips, 0).unwrap();
        p.normalize_preferences_from_reposts();
        p
    }

    #[test]
    fn scheduler_names() {
        for s in Scheduler::ALL {
            assert_eq!(s.to_string().parse::<Scheduler>().unwrap(), s);
        }
        assert!("fastest".parse::<Scheduler>().is_err());
    }

    #[test]
    fn timeline_layout() {
        let cfg = SimConfig::default();
        // 10:30 on day 0: the last window opened at 10:00
        let (tl, ws) = build_timeline(&cfg, 10 * 3600 + 1800, 10_000).unwrap();
        assert_eq!(ws, 18_000);
        assert_eq!(tl.get(0).link, LinkType::Wifi);
        assert_eq!(tl.get(2999).link, LinkType::Wifi);
        assert_eq!(tl.get(3000).link, LinkType::Cellular);
        assert_eq!(tl.get(ws).bandwidth, 100_000);
    }

    #[test]
    fn unlimited_bandwidth_is_smooth_and_dead_network_is_not() {
        let mut cfg = SimConfig::default();
        let pl = tiny_playlist(4);
        let g = vec![GestureEvent::fling(6000, 5000.0)];
        let input = SessionInput { playlist: &pl, gestures: &g, session_end_ms: 12_000, start_s: 10 * 3600 + 1800 };
        cfg.network.cellular_bandwidth = 1_000_000_000;
        let r = run(&cfg, input, Scheduler::WtPf, "x").unwrap();
        assert_eq!(r.report.discontinuity, 0.0);

        cfg.network.cellular_bandwidth = 0;
        cfg.network.wifi_bandwidth = 0;
        let r = run(&cfg, input, Scheduler::WtPf, "x").unwrap();
        assert_eq!((r.report.discontinuity, r.report.cost, r.report.energy), (1.0, 0, 0));
    }

    #[test]
    fn every_scheduler_is_feasible_and_replays() {
        let cfg = small_config();
        for run in run_event(&cfg, 0, &Scheduler::ALL).unwrap() {
            let pl = crate::traces::synthesize_event(&cfg, event_seed(cfg.experiment.seed, 0)).unwrap().playlist;
            assert!(validate_schedule(&run.schedule(), &run.timeline, &pl).is_valid());
            assert!(run.log.is_ordered());
            let again = replay(&run.log, &pl, &run.timeline, &run.views, &run.weights, &run.report.run_id).unwrap();
            assert_eq!(again, run.report);
            assert!(run.prefetched_total() <= cfg.prefetch.storage_bytes);
            if run.scheduler != Scheduler::WtPf {
                assert_eq!(run.prefetched_total(), 0);
            }
            let mut csv = Vec::new();
            run.log.write_csv(&mut csv, &pl, &run.timeline).unwrap();
            assert!(String::from_utf8(csv).unwrap().starts_with(EVENT_LOG_CSV_HEADER));
        }
    }

    #[test]
    fn gestures_after_the_end_are_a_mismatch() {
        let cfg = SimConfig::default();
        let pl = tiny_playlist(2);
        let g = vec![GestureEvent { timestamp_ms: 50_000, kind: GestureKind::Click, initial_speed: 0.0 }];
        let input = SessionInput { playlist: &pl, gestures: &g, session_end_ms: 10_000, start_s: 36_000 };
        assert!(matches!(run(&cfg, input, Scheduler::Wt, "x"), Err(SimError::TraceMismatch(_))));
    }

    #[test]
    fn grid_parsing() {
        let a = parse_grid("bandwidth=150k:3m:log4").unwrap();
        assert_eq!(a.values.len(), 4);
        assert!((a.values[0] - 150_000.0).abs() < 1e-6 && (a.values[3] - 3_000_000.0).abs() < 1e-3);
        assert_eq!(parse_grid("alpha=0.1,0.5").unwrap().values, vec![0.1, 0.5]);
        assert_eq!(parse_grid("alpha=0:1:lin3").unwrap().values, vec![0.0, 0.5, 1.0]);
        assert!(parse_grid("alpha=").is_err());
        assert!(parse_grid("alpha").is_err());
        assert!(parse_grid("alpha=1:2:cube3").is_err());
        assert!(parse_grid("alpha=0:1:log3").is_err());
    }

    #[test]
    fn grid_expansion_applies_values() {
        let base = SimConfig::default();
        let axes = [parse_grid("pqr=3.5").unwrap(), parse_grid("alpha=0.1,0.3").unwrap()];
        let pts = expand_grid(&base, &axes).unwrap();
        assert_eq!(pts.len(), 2);
        assert_eq!(pts[1].label, "pqr=3.5;alpha=0.3");
        assert!((pts[1].config.objective.p / pts[1].config.objective.q - 3.5).abs() < 1e-12);
        assert_eq!(pts[1].config.prefetch.alpha, 0.3);
        let raw = expand_grid(&base, &[parse_grid("network.wifi_window_s=600").unwrap()]).unwrap();
        assert_eq!(raw[0].config.network.wifi_window_s, 600);
        assert!(expand_grid(&base, &[GridAxis { name: "alpha".into(), values: vec![] }]).is_err());
    }

    #[test]
    fn single_point_single_event_matches_run() {
        let cfg = small_config();
        let rows = experiment(&[GridPoint { label: "base".into(), config: cfg.clone() }], &[Scheduler::WtPf], 1, 1).unwrap();
        let r = &run_event(&cfg, 0, &[Scheduler::WtPf]).unwrap()[0];
        assert_eq!(rows[0].discontinuity, r.report.discontinuity);
        assert_eq!(rows[0].cost, r.report.cost as f64);
        assert_eq!(rows[0].objective, r.report.objective);
    }
}
