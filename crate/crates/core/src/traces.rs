//! Trace files and synthetic workloads.
//!
//! Gesture traces are CSV with `timestamp_ms,kind,initial_speed_px_s` and
//! playlists are CSV with `video_id,section,upload_ts,reposts`. When no real
//! traces are at hand, the generators below draw popularity from a Zipf law,
//! recent-section arrivals from an hourly rate table and gestures from
//! log-normal laws. Their default parameters are placeholders, not fits.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, Poisson, Zipf};
use thiserror::Error;

use crate::config::{ClipConfig, GestureConfig, SimConfig};
use crate::kinematics::{animation, GestureEvent, GestureKind, KinematicsConfig};
use crate::model::{Playlist, Section, VideoClip};

pub const GESTURE_CSV_HEADER: &str = "timestamp_ms,kind,initial_speed_px_s";
pub const PLAYLIST_CSV_HEADER: &str = "video_id,section,upload_ts,reposts";

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("cannot open {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{origin}, line {line}: {message}")]
    Row { origin: String, line: u64, message: String },
    #[error("{origin}: expected header {expected:?}")]
    Header { origin: String, expected: &'static str },
    #[error("{0}: no rows")]
    Empty(String),
    #[error("invalid model: {0}")]
    Model(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

fn open(path: &Path) -> Result<File, TraceError> {
    File::open(path).map_err(|source| TraceError::Io { path: path.display().to_string(), source })
}

fn create(path: &Path) -> Result<File, TraceError> {
    File::create(path).map_err(|source| TraceError::Io { path: path.display().to_string(), source })
}

fn rows<R: Read>(reader: R, origin: &str, expected: &'static str) -> Result<Vec<(u64, csv::StringRecord)>, TraceError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if header.join(",") != expected {
        return Err(TraceError::Header { origin: origin.to_string(), expected });
    }
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| TraceError::Row {
            origin: origin.to_string(),
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        out.push((line, rec));
    }
    Ok(out)
}

/// Reads a gesture trace; timestamps must not decrease.
pub fn read_gestures<R: Read>(reader: R, origin: &str) -> Result<Vec<GestureEvent>, TraceError> {
    let mut out: Vec<GestureEvent> = Vec::new();
    for (line, rec) in rows(reader, origin, GESTURE_CSV_HEADER)? {
        let bad = |message: String| TraceError::Row { origin: origin.to_string(), line, message };
        let ts: u64 = rec[0].parse().map_err(|_| bad(format!("bad timestamp {:?}", &rec[0])))?;
        let kind: GestureKind = rec[1].parse().map_err(|_| bad(format!("unknown gesture kind {:?}", &rec[1])))?;
        let speed: f64 = rec[2].parse().map_err(|_| bad(format!("bad speed {:?}", &rec[2])))?;
        if !speed.is_finite() || speed < 0.0 {
            return Err(bad(format!("negative or non-finite speed {speed}")));
        }
        if kind != GestureKind::Click && speed == 0.0 {
            return Err(bad("a scroll needs a positive speed".into()));
        }
        if out.last().is_some_and(|g| g.timestamp_ms > ts) {
            return Err(bad("timestamps must not decrease".into()));
        }
        out.push(GestureEvent { timestamp_ms: ts, kind, initial_speed: speed });
    }
    Ok(out)
}

pub fn write_gestures<W: Write>(mut out: W, gestures: &[GestureEvent]) -> std::io::Result<()> {
    writeln!(out, "{GESTURE_CSV_HEADER}")?;
    for g in gestures {
        writeln!(out, "{},{},{}", g.timestamp_ms, g.kind, g.initial_speed)?;
    }
    Ok(())
}

/// Reads a playlist; every clip gets the configured length and rate and a
/// preference from its min-max normalized repost count.
pub fn read_playlist<R: Read>(reader: R, origin: &str, clip: &ClipConfig) -> Result<Playlist, TraceError> {
    let mut clips = Vec::new();
    for (line, rec) in rows(reader, origin, PLAYLIST_CSV_HEADER)? {
        let bad = |message: String| TraceError::Row { origin: origin.to_string(), line, message };
        let section: Section = rec[1].parse().map_err(|_| bad(format!("unknown section {:?}", &rec[1])))?;
        let mut c = VideoClip::new(&rec[0], section, clip.length_ms, clip.rate).map_err(|e| bad(e.to_string()))?;
        c.upload_ts = rec[2].parse().map_err(|_| bad(format!("bad upload time {:?}", &rec[2])))?;
        c.reposts = rec[3].parse().map_err(|_| bad(format!("bad repost count {:?}", &rec[3])))?;
        if rec[0].is_empty() {
            return Err(bad("empty video id".into()));
        }
        clips.push(c);
    }
    if clips.is_empty() {
        return Err(TraceError::Empty(origin.to_string()));
    }
    let mut playlist = Playlist::new(clips, 0).map_err(|e| TraceError::Row { origin: origin.to_string(), line: 0, message: e.to_string() })?;
    playlist.normalize_preferences_from_reposts();
    Ok(playlist)
}

pub fn write_playlist<W: Write>(mut out: W, playlist: &Playlist) -> std::io::Result<()> {
    writeln!(out, "{PLAYLIST_CSV_HEADER}")?;
    for c in &playlist.clips {
        writeln!(out, "{},{},{},{}", c.id, c.section, c.upload_ts, c.reposts)?;
    }
    Ok(())
}

pub fn load_gestures(path: &Path) -> Result<Vec<GestureEvent>, TraceError> {
    read_gestures(open(path)?, &path.display().to_string())
}

pub fn load_playlist(path: &Path, clip: &ClipConfig) -> Result<Playlist, TraceError> {
    read_playlist(open(path)?, &path.display().to_string(), clip)
}

pub fn load_traces(playlist: &Path, gestures: &Path, clip: &ClipConfig) -> Result<(Playlist, Vec<GestureEvent>), TraceError> {
    Ok((load_playlist(playlist, clip)?, load_gestures(gestures)?))
}

pub fn save_gestures(path: &Path, gestures: &[GestureEvent]) -> Result<(), TraceError> {
    write_gestures(create(path)?, gestures).map_err(|source| TraceError::Io { path: path.display().to_string(), source })
}

pub fn save_playlist(path: &Path, playlist: &Playlist) -> Result<(), TraceError> {
    write_playlist(create(path)?, playlist).map_err(|source| TraceError::Io { path: path.display().to_string(), source })
}

/// Repost popularity over a catalog.
#[derive(Debug, Clone, PartialEq)]
pub enum PopularityModel {
    Zipf { exponent: f64, catalog: u64 },
    /// Relative weight of each rank, most popular first.
    Empirical(Vec<f64>),
}

impl PopularityModel {
    pub fn from_config(cfg: &SimConfig) -> Self {
        PopularityModel::Zipf { exponent: cfg.popularity.zipf_exponent, catalog: cfg.popularity.catalog_size }
    }

    pub fn catalog(&self) -> u64 {
        match self {
            PopularityModel::Zipf { catalog, .. } => *catalog,
            PopularityModel::Empirical(w) => w.len() as u64,
        }
    }

    /// Probability of each rank, most popular first.
    pub fn pmf(&self) -> Vec<f64> {
        let weights: Vec<f64> = match self {
            PopularityModel::Zipf { exponent, catalog } => (1..=*catalog).map(|k| (k as f64).powf(-exponent)).collect(),
            PopularityModel::Empirical(w) => w.clone(),
        };
        let total: f64 = weights.iter().sum();
        weights.into_iter().map(|w| w / total).collect()
    }

    /// Draws a 1-based rank.
    pub fn sample_rank<R: Rng>(&self, rng: &mut R) -> Result<u64, TraceError> {
        match self {
            PopularityModel::Zipf { exponent, catalog } => {
                let z = Zipf::new(*catalog as f64, *exponent).map_err(|e| TraceError::Model(e.to_string()))?;
                Ok(z.sample(rng) as u64)
            }
            PopularityModel::Empirical(w) => {
                let d = rand::distr::weighted::WeightedIndex::new(w).map_err(|e| TraceError::Model(e.to_string()))?;
                Ok(d.sample(rng) as u64 + 1)
            }
        }
    }

    /// Repost counts of every catalog entry, each Poisson around its expected share of `total`.
    pub fn sample_reposts<R: Rng>(&self, total: u64, rng: &mut R) -> Result<Vec<u64>, TraceError> {
        self.pmf()
            .into_iter()
            .map(|p| {
                let mean = p * total as f64;
                if mean <= 0.0 {
                    return Ok(0);
                }
                let d = Poisson::new(mean).map_err(|e| TraceError::Model(e.to_string()))?;
                Ok(d.sample(rng) as u64)
            })
            .collect()
    }
}

/// Share of all reposts held by the top `fraction` of clips.
pub fn top_share(reposts: &[u64], fraction: f64) -> f64 {
    let mut sorted = reposts.to_vec();
    sorted.sort_unstable_by(|a, b| b.cmp(a));
    let total: u64 = sorted.iter().sum();
    if total == 0 {
        return 0.0;
    }
    let top = ((sorted.len() as f64 * fraction).ceil() as usize).min(sorted.len());
    sorted[..top].iter().sum::<u64>() as f64 / total as f64
}

/// Gesture statistics used to synthesize sessions.
#[derive(Debug, Clone)]
pub struct GestureModel {
    interarrival: LogNormal<f64>,
    fling: LogNormal<f64>,
    drag: LogNormal<f64>,
    /// Cumulative (fling, fling + drag) shares out of one.
    cut: (f64, f64),
    threshold: f64,
}

impl GestureModel {
    pub fn new(cfg: &GestureConfig, kinematics: &KinematicsConfig) -> Result<Self, TraceError> {
        let ln = |median: f64, sigma: f64| LogNormal::new(median.ln(), sigma).map_err(|e| TraceError::Model(e.to_string()));
        let total = cfg.fling_share + cfg.drag_share + cfg.click_share;
        if !(total > 0.0) || [cfg.fling_share, cfg.drag_share, cfg.click_share].iter().any(|s| !(*s >= 0.0)) {
            return Err(TraceError::Model("gesture kind shares must be non-negative with a positive sum".into()));
        }
        Ok(GestureModel {
            interarrival: ln(cfg.interarrival_median_ms, cfg.interarrival_sigma)?,
            fling: ln(cfg.fling_median, cfg.fling_sigma)?,
            drag: ln(cfg.drag_median, cfg.drag_sigma)?,
            cut: (cfg.fling_share / total, (cfg.fling_share + cfg.drag_share) / total),
            threshold: kinematics.threshold(),
        })
    }

    /// Milliseconds to the next gesture, at least one.
    pub fn sample_interarrival<R: Rng>(&self, rng: &mut R) -> u64 {
        (self.interarrival.sample(rng).round() as u64).max(1)
    }

    pub fn sample_kind<R: Rng>(&self, rng: &mut R) -> GestureKind {
        let u: f64 = rng.random();
        if u < self.cut.0 {
            GestureKind::Fling
        } else if u < self.cut.1 {
            GestureKind::Drag
        } else {
            GestureKind::Click
        }
    }

    /// Fling speeds are redrawn until they exceed the drag threshold.
    pub fn sample_speed<R: Rng>(&self, kind: GestureKind, rng: &mut R) -> f64 {
        match kind {
            GestureKind::Click => 0.0,
            GestureKind::Drag => self.drag.sample(rng),
            GestureKind::Fling => loop {
                let s = self.fling.sample(rng);
                if s > self.threshold {
                    break s;
                }
            },
        }
    }

    pub fn sample_gesture<R: Rng>(&self, timestamp_ms: u64, rng: &mut R) -> GestureEvent {
        let kind = self.sample_kind(rng);
        GestureEvent { timestamp_ms, kind, initial_speed: self.sample_speed(kind, rng) }
    }
}

/// Gestures of a session lasting `session_length_ms`.
pub fn synthesize_gestures<R: Rng>(model: &GestureModel, session_length_ms: u64, rng: &mut R) -> Vec<GestureEvent> {
    let mut out = Vec::new();
    let mut t = model.sample_interarrival(rng);
    while t < session_length_ms {
        out.push(model.sample_gesture(t, rng));
        t += model.sample_interarrival(rng);
    }
    out
}

/// Gestures until the last of `n_clips` clips is reached; the session ends
/// one more inter-arrival after the final gesture.
pub fn gestures_through_playlist<R: Rng>(
    model: &GestureModel,
    n_clips: usize,
    kinematics: &KinematicsConfig,
    rng: &mut R,
) -> Result<(Vec<GestureEvent>, u64), TraceError> {
    let mut out: Vec<GestureEvent> = Vec::new();
    let mut pos = 0usize;
    let mut t = model.sample_interarrival(rng);
    while pos + 1 < n_clips {
        let g = model.sample_gesture(t, rng);
        let gap = model.sample_interarrival(rng);
        let entries = animation(&g, kinematics).map_err(|e| TraceError::Model(e.to_string()))?.entries_ms;
        pos += entries.iter().filter(|&&e| e < gap as f64).count();
        out.push(g);
        t += gap;
    }
    Ok((out, t))
}

/// Recent-section upload times, newest first, counted back from `now_s` with
/// an arrival process whose rate follows `hourly_rates` (clips per hour).
pub fn recent_upload_times<R: Rng>(hourly_rates: &[f64], now_s: i64, n: usize, rng: &mut R) -> Vec<i64> {
    let max = hourly_rates.iter().cloned().fold(0.0, f64::max);
    let mut out = Vec::with_capacity(n);
    let mut t = now_s as f64;
    while out.len() < n {
        // thinning with the peak rate
        let step: f64 = -rng.random::<f64>().max(f64::MIN_POSITIVE).ln() / max * 3600.0;
        t -= step;
        let hour = (t.floor() as i64).rem_euclid(86_400) / 3600;
        if rng.random::<f64>() * max < hourly_rates[hour as usize] {
            out.push(t.floor() as i64);
        }
    }
    out
}

/// One synthetic watching event.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticEvent {
    pub playlist: Playlist,
    pub gestures: Vec<GestureEvent>,
    /// Session length, ms from the watch start.
    pub session_end_ms: u64,
    /// Watch start, seconds since the trace epoch (a Monday, 00:00).
    pub start_s: i64,
}

/// Seed of the `index`-th event of an experiment seeded with `seed`.
pub fn event_seed(seed: u64, index: u64) -> u64 {
    seed.wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

fn synthesize_playlist<R: Rng>(cfg: &SimConfig, start_s: i64, rng: &mut R) -> Result<Playlist, TraceError> {
    let pop = PopularityModel::from_config(cfg);
    let pmf = pop.pmf();
    let total = cfg.popularity.total_reposts as f64;
    let reposts = |rank: u64, rng: &mut R| -> Result<u64, TraceError> {
        let mean = pmf[(rank - 1) as usize] * total;
        Ok(if mean > 0.0 { Poisson::new(mean).map_err(|e| TraceError::Model(e.to_string()))?.sample(rng) as u64 } else { 0 })
    };
    let n_pop = cfg.workload.popular_clips.min(pop.catalog() as usize);
    let mut ranks: Vec<u64> = Vec::with_capacity(n_pop);
    while ranks.len() < n_pop {
        let r = pop.sample_rank(rng)?;
        if !ranks.contains(&r) {
            ranks.push(r);
        }
    }
    ranks.sort_unstable();
    let clip = |id: String, section| VideoClip::new(id, section, cfg.clip.length_ms, cfg.clip.rate).map_err(|e| TraceError::Model(e.to_string()));
    let mut clips = Vec::new();
    let (lo, hi) = cfg.uploads.popular_age_days;
    for rank in ranks {
        let mut c = clip(format!("pop-{rank}"), Section::Popular)?;
        c.reposts = reposts(rank, rng)?;
        c.upload_ts = start_s - (rng.random_range(lo..=hi) * 86_400.0) as i64;
        clips.push(c);
    }
    let uploads = recent_upload_times(&cfg.uploads.hourly_rates, start_s, cfg.workload.recent_clips, rng);
    for (i, ts) in uploads.into_iter().enumerate() {
        let mut c = clip(format!("rec-{i}"), Section::Recent)?;
        c.reposts = reposts(rng.random_range(1..=pop.catalog()), rng)?;
        c.upload_ts = ts;
        clips.push(c);
    }
    let mut playlist = Playlist::new(clips, 0).map_err(|e| TraceError::Model(e.to_string()))?;
    playlist.normalize_preferences_from_reposts();
    Ok(playlist)
}

/// Playlist, start time and a gesture trace of `workload.session_ms`, or one
/// that scrolls through the whole playlist when that is 0.
pub fn synthesize_event(cfg: &SimConfig, seed: u64) -> Result<SyntheticEvent, TraceError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = &cfg.workload;
    let day = rng.random_range(0..w.days) as i64;
    let start_s = day * 86_400 + rng.random_range(w.day_start_h as i64 * 3600..w.day_end_h as i64 * 3600);
    let playlist = synthesize_playlist(cfg, start_s, &mut rng)?;
    let model = GestureModel::new(&cfg.gestures, &cfg.kinematics)?;
    let (gestures, session_end_ms) = match w.session_ms {
        0 => gestures_through_playlist(&model, playlist.len(), &cfg.kinematics, &mut rng)?,
        ms => (synthesize_gestures(&model, ms, &mut rng), ms),
    };
    Ok(SyntheticEvent { playlist, gestures, session_end_ms, start_s })
}

/// Playlist and a gesture trace of `session_length_ms`.
pub fn synthesize(cfg: &SimConfig, session_length_ms: u64, seed: u64) -> Result<(Playlist, Vec<GestureEvent>), TraceError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let start_s = cfg.workload.day_start_h as i64 * 3600;
    let playlist = synthesize_playlist(cfg, start_s, &mut rng)?;
    let model = GestureModel::new(&cfg.gestures, &cfg.kinematics)?;
    Ok((playlist, synthesize_gestures(&model, session_length_ms, &mut rng)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reads_well_formed_gestures() {
        let text = "timestamp_ms,kind,initial_speed_px_s\n0,click,0\n1200,drag,2000\n3000,fling,5000.5\n";
        let g = read_gestures(text.as_bytes(), "g.csv").unwrap();
        assert_eq!(g.len(), 3);
        assert_eq!(g[2], GestureEvent::fling(3000, 5000.5));
    }

    #[test]
    fn negative_speed_names_the_row() {
        let text = "timestamp_ms,kind,initial_speed_px_s\n0,click,0\n10,fling,-3\n";
        let err = read_gestures(text.as_bytes(), "g.csv").unwrap_err().to_string();
        assert!(err.contains("line 3"), "{err}");
        let text = "timestamp_ms,kind,initial_speed_px_s\n10,wiggle,3\n";
        assert!(read_gestures(text.as_bytes(), "g.csv").is_err());
    }

    #[test]
    fn empty_playlist_is_rejected() {
        let clip = ClipConfig::default();
        assert!(matches!(read_playlist(PLAYLIST_CSV_HEADER.as_bytes(), "p.csv", &clip), Err(TraceError::Empty(_))));
        assert!(matches!(read_playlist("a,b\n".as_bytes(), "p.csv", &clip), Err(TraceError::Header { .. })));
    }

    #[test]
    fn zipf_top_share() {
        let pop = PopularityModel::Zipf { exponent: 2.0, catalog: 10_000 };
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let reposts = pop.sample_reposts(10_000_000, &mut rng).unwrap();
        let share = top_share(&reposts, 0.05);
        assert!(share >= 0.99, "top-5% share {share}");
        let flat = PopularityModel::Zipf { exponent: 0.5, catalog: 10_000 };
        assert!(top_share(&flat.sample_reposts(10_000_000, &mut rng).unwrap(), 0.05) < 0.99);
    }

    #[test]
    fn synthesis_is_deterministic() {
        let cfg = SimConfig::default();
        assert_eq!(synthesize(&cfg, 60_000, 3).unwrap(), synthesize(&cfg, 60_000, 3).unwrap());
        assert_eq!(synthesize_event(&cfg, 9).unwrap(), synthesize_event(&cfg, 9).unwrap());
        assert!(synthesize(&cfg, 0, 3).unwrap().1.is_empty());
    }

    #[test]
    fn event_scrolls_through_playlist() {
        let mut cfg = SimConfig::default();
        cfg.workload.session_ms = 0;
        let ev = synthesize_event(&cfg, 1).unwrap();
        assert_eq!(ev.playlist.len(), 200);
        let session =
            crate::kinematics::gestures_to_session(&ev.gestures, ev.playlist.len(), &cfg.kinematics, ev.session_end_ms as f64)
                .unwrap();
        assert_eq!(session.views.last().unwrap().clip, 199);
        let start_hour = ev.start_s.rem_euclid(86_400) / 3600;
        assert!((9..21).contains(&start_hour));
        assert!(ev.playlist.clips.iter().all(|c| c.upload_ts <= ev.start_s));
    }

    #[test]
    fn event_has_fixed_length() {
        let cfg = SimConfig::default();
        let ev = synthesize_event(&cfg, 1).unwrap();
        assert_eq!(ev.session_end_ms, 300_000);
        assert!(ev.gestures.iter().all(|g| g.timestamp_ms < 300_000));
    }

    #[test]
    fn round_trip_through_files() {
        let cfg = SimConfig::default();
        let (pl, g) = synthesize(&cfg, 120_000, 5).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let (pp, gp) = (dir.path().join("p.csv"), dir.path().join("g.csv"));
        save_playlist(&pp, &pl).unwrap();
        save_gestures(&gp, &g).unwrap();
        let (pl2, g2) = load_traces(&pp, &gp, &cfg.clip).unwrap();
        assert_eq!(pl2, pl);
        assert_eq!(g2, g);
    }

    #[test]
    fn kind_mix_within_binomial_bounds() {
        let cfg = SimConfig::default();
        let model = GestureModel::new(&cfg.gestures, &cfg.kinematics).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 10_000;
        let kinds: Vec<GestureKind> = (0..n).map(|_| model.sample_kind(&mut rng)).collect();
        let g = &cfg.gestures;
        for (kind, share) in [(GestureKind::Fling, g.fling_share), (GestureKind::Drag, g.drag_share), (GestureKind::Click, g.click_share)] {
            let count = kinds.iter().filter(|k| **k == kind).count() as f64;
            let sd = (n as f64 * share * (1.0 - share)).sqrt();
            assert!((count - n as f64 * share).abs() <= 4.0 * sd, "{kind}: {count}");
        }
    }

    proptest::proptest! {
        #[test]
        fn sampled_gestures_respect_their_laws(seed: u64) {
            let cfg = SimConfig::default();
            let model = GestureModel::new(&cfg.gestures, &cfg.kinematics).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let g = synthesize_gestures(&model, 30_000, &mut rng);
            let mut prev = 0;
            for e in g {
                proptest::prop_assert!(e.timestamp_ms > prev);
                prev = e.timestamp_ms;
                if e.kind == GestureKind::Fling {
                    proptest::prop_assert!(e.initial_speed > cfg.kinematics.threshold());
                }
            }
        }
    }
}
