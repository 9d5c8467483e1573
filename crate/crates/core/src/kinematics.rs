//! Scroll kinematics: from a touch gesture to how long each clip stays in view.
//!
//! Drags decelerate uniformly. Flings follow the Android scroller's friction
//! law, where the total duration and distance are power laws of the initial
//! speed with exponent `D_RATE = ln 0.78 / ln 0.9`.
//! The fling constants (0.35, 39.37, 0.84) are the platform's and are used
//! exactly as the platform uses them, unit mixing included.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::Slot;

/// Reference density at which the drag/fling threshold is specified.
pub const REFERENCE_PPI: f64 = 326.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KinematicsError {
    #[error("initial speed must be positive, got {0}")]
    NonPositiveSpeed(f64),
    #[error("invalid kinematics parameter {name}: {value}")]
    InvalidParameter { name: &'static str, value: f64 },
    #[error("gestures are not sorted by timestamp at index {0}")]
    Unsorted(usize),
    #[error("unknown gesture kind {0:?}")]
    UnknownKind(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KinematicsConfig {
    /// Height of one clip in the feed, pixels.
    pub clip_height_px: f64,
    /// Drag/fling threshold at the reference density, pixels/second.
    pub drag_threshold: f64,
    /// Replaces the density-scaled threshold when set.
    pub threshold_override: Option<f64>,
    /// Uniform deceleration of a drag animation, pixels/second².
    pub drag_deceleration: f64,
    pub friction: f64,
    pub ppi: f64,
    pub gravity: f64,
}

impl Default for KinematicsConfig {
    fn default() -> Self {
        KinematicsConfig {
            clip_height_px: 800.0,
            drag_threshold: 50.0,
            threshold_override: None,
            drag_deceleration: 2000.0,
            friction: 0.015,
            ppi: REFERENCE_PPI,
            gravity: 9.80665,
        }
    }
}

impl KinematicsConfig {
    pub fn validate(&self) -> Result<(), KinematicsError> {
        let checks = [
            ("clip_height_px", self.clip_height_px),
            ("drag_threshold", self.drag_threshold),
            ("drag_deceleration", self.drag_deceleration),
            ("friction", self.friction),
            ("ppi", self.ppi),
            ("gravity", self.gravity),
            ("threshold_override", self.threshold_override.unwrap_or(1.0)),
        ];
        for (name, value) in checks {
            if !(value > 0.0 && value.is_finite()) {
                return Err(KinematicsError::InvalidParameter { name, value });
            }
        }
        Ok(())
    }

    /// ln(0.78) / ln(0.9).
    pub fn d_rate(&self) -> f64 {
        0.78f64.ln() / 0.9f64.ln()
    }

    /// G · 39.37 · ppi · 0.84.
    pub fn p_coef(&self) -> f64 {
        self.gravity * 39.37 * self.ppi * 0.84
    }

    /// Drag/fling threshold after scaling with screen density.
    pub fn threshold(&self) -> f64 {
        self.threshold_override.unwrap_or(self.drag_threshold * self.ppi / REFERENCE_PPI)
    }

    fn fling_scale(&self) -> f64 {
        self.friction * self.p_coef()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GestureKind {
    Click,
    Drag,
    Fling,
}

impl fmt::Display for GestureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GestureKind::Click => "click",
            GestureKind::Drag => "drag",
            GestureKind::Fling => "fling",
        })
    }
}

impl FromStr for GestureKind {
    type Err = KinematicsError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "click" => Ok(GestureKind::Click),
            "drag" => Ok(GestureKind::Drag),
            "fling" => Ok(GestureKind::Fling),
            other => Err(KinematicsError::UnknownKind(other.to_string())),
        }
    }
}

/// A recorded input gesture. The recorded kind is authoritative when replaying.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GestureEvent {
    /// Milliseconds since the session started.
    pub timestamp_ms: u64,
    pub kind: GestureKind,
    /// Initial scrolling speed in pixels/second; zero for clicks.
    pub initial_speed: f64,
}

impl GestureEvent {
    pub fn click(timestamp_ms: u64) -> Self {
        GestureEvent { timestamp_ms, kind: GestureKind::Click, initial_speed: 0.0 }
    }

    pub fn drag(timestamp_ms: u64, initial_speed: f64) -> Self {
        GestureEvent { timestamp_ms, kind: GestureKind::Drag, initial_speed }
    }

    pub fn fling(timestamp_ms: u64, initial_speed: f64) -> Self {
        GestureEvent { timestamp_ms, kind: GestureKind::Fling, initial_speed }
    }

    /// A scroll gesture whose kind follows from its speed.
    pub fn scroll(timestamp_ms: u64, initial_speed: f64, config: &KinematicsConfig) -> Result<Self, KinematicsError> {
        let kind = classify_gesture(initial_speed, config)?;
        Ok(GestureEvent { timestamp_ms, kind, initial_speed })
    }
}

/// Drag when `s0` is at or below the threshold, fling above it.
pub fn classify_gesture(s0: f64, config: &KinematicsConfig) -> Result<GestureKind, KinematicsError> {
    if !(s0 > 0.0) {
        return Err(KinematicsError::NonPositiveSpeed(s0));
    }
    Ok(if s0 > config.threshold() { GestureKind::Fling } else { GestureKind::Drag })
}

/// Number of clip boundaries crossed by a drag: ⌊s0² / 2hd⌋.
pub fn drag_clip_count(s0: f64, config: &KinematicsConfig) -> usize {
    let stop_distance = s0 * s0 / (2.0 * config.drag_deceleration);
    (stop_distance / config.clip_height_px).floor().max(0.0) as usize
}

/// Times in seconds at which the (m+1)-th clip enters the viewport during a drag.
pub fn drag_entry_times(s0: f64, config: &KinematicsConfig) -> Vec<f64> {
    if !(s0 > 0.0) {
        return Vec::new();
    }
    let (h, d) = (config.clip_height_px, config.drag_deceleration);
    (1..=drag_clip_count(s0, config))
        .map(|m| {
            let disc = (s0 * s0 - 2.0 * m as f64 * h * d).max(0.0);
            (s0 - disc.sqrt()) / d
        })
        .collect()
}

/// Total duration (ms) and distance (px) of a fling.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlingTotal {
    pub duration_ms: f64,
    pub distance_px: f64,
}

/// T(s) and D(s) of a fling started at speed `s0`.
pub fn fling_total(s0: f64, config: &KinematicsConfig) -> Result<FlingTotal, KinematicsError> {
    if !(s0 > 0.0) {
        return Err(KinematicsError::NonPositiveSpeed(s0));
    }
    let d_rate = config.d_rate();
    let l = (0.35 * s0 / config.fling_scale()).ln();
    Ok(FlingTotal {
        duration_ms: 1000.0 * (l / (d_rate - 1.0)).exp(),
        distance_px: config.fling_scale() * (d_rate / (d_rate - 1.0) * l).exp(),
    })
}

/// D as a function of the fling duration T (ms).
pub fn fling_distance_for_duration(duration_ms: f64, config: &KinematicsConfig) -> f64 {
    config.fling_scale() * (duration_ms / 1000.0).powf(config.d_rate())
}

/// T (ms) as a function of the fling distance D.
pub fn fling_duration_for_distance(distance_px: f64, config: &KinematicsConfig) -> f64 {
    1000.0 * (distance_px / config.fling_scale()).powf(1.0 / config.d_rate())
}

/// Times in milliseconds at which the (m+1)-th clip enters the viewport during a fling.
pub fn fling_entry_times(s0: f64, config: &KinematicsConfig) -> Result<Vec<f64>, KinematicsError> {
    let total = fling_total(s0, config)?;
    let h = config.clip_height_px;
    let count = (total.distance_px / h).floor().max(0.0) as usize;
    let d_rate = config.d_rate();
    let base = (total.duration_ms / 1000.0).powf(d_rate);
    let step = h / config.fling_scale();
    Ok((1..=count)
        .map(|m| {
            let bracket = (base - m as f64 * step).max(0.0);
            total.duration_ms - 1000.0 * bracket.powf(1.0 / d_rate)
        })
        .collect())
}

/// Scroll animation triggered by one gesture, times relative to the gesture.
#[derive(Debug, Clone, PartialEq)]
pub struct ScrollAnimation {
    /// Entry time of each newly revealed clip, ms, strictly increasing.
    pub entries_ms: Vec<f64>,
    /// Time at which scrolling stops, ms.
    pub duration_ms: f64,
}

pub fn animation(gesture: &GestureEvent, config: &KinematicsConfig) -> Result<ScrollAnimation, KinematicsError> {
    match gesture.kind {
        GestureKind::Click => Ok(ScrollAnimation { entries_ms: Vec::new(), duration_ms: 0.0 }),
        GestureKind::Drag => {
            if !(gesture.initial_speed > 0.0) {
                return Err(KinematicsError::NonPositiveSpeed(gesture.initial_speed));
            }
            Ok(ScrollAnimation {
                entries_ms: drag_entry_times(gesture.initial_speed, config).into_iter().map(|t| t * 1000.0).collect(),
                duration_ms: 1000.0 * gesture.initial_speed / config.drag_deceleration,
            })
        }
        GestureKind::Fling => Ok(ScrollAnimation {
            entries_ms: fling_entry_times(gesture.initial_speed, config)?,
            duration_ms: fling_total(gesture.initial_speed, config)?.duration_ms,
        }),
    }
}

/// One clip's stay in the viewport.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClipView {
    /// Playlist position.
    pub clip: usize,
    /// Entry time, ms since session start.
    pub start_ms: f64,
    pub duration_ms: f64,
}

impl ClipView {
    pub fn end_ms(&self) -> f64 {
        self.start_ms + self.duration_ms
    }
}

/// Per-clip watch durations of one session, in playlist order.
#[derive(Debug, Clone, PartialEq)]
pub struct WatchSession {
    pub views: Vec<ClipView>,
    pub end_ms: f64,
    /// Set when the gestures tried to scroll past the last clip.
    pub truncated: bool,
}

/// A view in slot units; `watch_slots` is at least one.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SlotView {
    pub clip: usize,
    pub start_slot: Slot,
    pub watch_slots: u32,
}

impl WatchSession {
    pub fn durations_ms(&self) -> Vec<f64> {
        self.views.iter().map(|v| v.duration_ms).collect()
    }

    /// Views on the slot grid. Boundaries are floored to their slot, so the
    /// slot durations telescope to the session length; views shorter than a
    /// slot boundary crossing are dropped.
    pub fn slot_views(&self, slot_ms: u32, origin: Slot) -> Vec<SlotView> {
        let to_slot = |ms: f64| origin + (ms / slot_ms as f64).floor() as Slot;
        self.views
            .iter()
            .filter_map(|v| {
                let start = to_slot(v.start_ms);
                let end = to_slot(v.end_ms());
                (end > start).then_some(SlotView { clip: v.clip, start_slot: start, watch_slots: end - start })
            })
            .collect()
    }
}

/// Replays `gestures` over a playlist of `n_clips` clips.
///
/// Each animation starts with the focused clip aligned. A gesture arriving
/// before the previous animation finished cuts it short. Clicks keep the
/// current clip. The clip in view when an animation stops is watched until
/// the next scroll moves past it or the session ends.
pub fn gestures_to_session(
    gestures: &[GestureEvent],
    n_clips: usize,
    config: &KinematicsConfig,
    session_end_ms: f64,
) -> Result<WatchSession, KinematicsError> {
    if let Some(i) = gestures.windows(2).position(|w| w[1].timestamp_ms < w[0].timestamp_ms) {
        return Err(KinematicsError::Unsorted(i + 1));
    }
    let mut views = Vec::new();
    let mut truncated = false;
    if n_clips == 0 {
        return Ok(WatchSession { views, end_ms: session_end_ms, truncated });
    }
    let mut pos = 0usize;
    let mut entered_ms = 0.0f64;
    'gestures: for (i, g) in gestures.iter().enumerate() {
        let at = g.timestamp_ms as f64;
        if at >= session_end_ms {
            break;
        }
        let cutoff = gestures.get(i + 1).map_or(session_end_ms, |n| (n.timestamp_ms as f64).min(session_end_ms));
        for entry in animation(g, config)?.entries_ms {
            let t = at + entry;
            if t >= cutoff {
                break;
            }
            if pos + 1 >= n_clips {
                truncated = true;
                break 'gestures;
            }
            if t > entered_ms {
                views.push(ClipView { clip: pos, start_ms: entered_ms, duration_ms: t - entered_ms });
                entered_ms = t;
            }
            pos += 1;
        }
    }
    if session_end_ms > entered_ms {
        views.push(ClipView { clip: pos, start_ms: entered_ms, duration_ms: session_end_ms - entered_ms });
    }
    Ok(WatchSession { views, end_ms: session_end_ms, truncated })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(h: f64) -> KinematicsConfig {
        KinematicsConfig { clip_height_px: h, ..Default::default() }
    }

    /// Distance covered by s(t) = s0 - d t, stepped with a fine explicit integrator.
    fn integrate_drag_crossing(s0: f64, d: f64, target: f64) -> f64 {
        let dt = 1e-6;
        let (mut t, mut x) = (0.0, 0.0);
        loop {
            let v0 = s0 - d * t;
            let v1 = s0 - d * (t + dt);
            let step = 0.5 * (v0 + v1) * dt;
            if x + step >= target {
                // linear interpolation inside the last step
                return t + dt * (target - x) / step;
            }
            x += step;
            t += dt;
        }
    }

    #[test]
    fn d_rate_and_p_coef() {
        let c = KinematicsConfig::default();
        assert!((c.d_rate() - 2.358_201_815_425_944).abs() < 1e-12);
        assert!((c.p_coef() - 105_726.286_027_32).abs() < 1e-6);
    }

    #[test]
    fn classification_boundary_is_drag() {
        let c = KinematicsConfig::default();
        assert_eq!(classify_gesture(50.0, &c), Ok(GestureKind::Drag));
        assert_eq!(classify_gesture(51.0, &c), Ok(GestureKind::Fling));
        assert_eq!(classify_gesture(10.0, &c), Ok(GestureKind::Drag));
        assert!(classify_gesture(0.0, &c).is_err());
        assert!(classify_gesture(-3.0, &c).is_err());
    }

    #[test]
    fn threshold_scales_with_density() {
        let c = KinematicsConfig { ppi: 652.0, ..Default::default() };
        assert_eq!(c.threshold(), 100.0);
        let c = KinematicsConfig { threshold_override: Some(70.0), ..c };
        assert_eq!(c.threshold(), 70.0);
    }

    #[test]
    fn drag_examples_match_integration() {
        let c = cfg(1000.0);
        let t = drag_entry_times(2000.0, &c);
        assert_eq!(t.len(), 1);
        assert!((t[0] - 1.0).abs() < 1e-12);
        assert!((integrate_drag_crossing(2000.0, 2000.0, 1000.0) - 1.0).abs() < 1e-3);

        let c = cfg(500.0);
        let t = drag_entry_times(2000.0, &c);
        assert_eq!(t.len(), 2);
        // (2000 - sqrt(2000^2 - 2*500*2000)) / 2000 = 1 - 1/sqrt(2)
        assert!((t[0] - (1.0 - 0.5f64.sqrt())).abs() < 1e-12);
        assert!((t[0] - integrate_drag_crossing(2000.0, 2000.0, 500.0)).abs() < 1e-5);
        assert!((t[1] - 1.0).abs() < 1e-12);

        assert!(drag_entry_times(100.0, &cfg(1000.0)).is_empty());
    }

    #[test]
    fn fling_totals_match_high_precision_values() {
        // Reference values evaluated with 40-digit arithmetic.
        let f = fling_total(5000.0, &cfg(1000.0)).unwrap();
        assert!((f.duration_ms - 1075.190_975_069_727).abs() < 1e-6);
        assert!((f.distance_px - 1881.584_206_372_023).abs() < 1e-6);
    }

    #[test]
    fn fling_identities() {
        let c = cfg(1000.0);
        for s0 in [60.0, 500.0, 5000.0, 12_345.0, 40_000.0] {
            let f = fling_total(s0, &c).unwrap();
            let d7 = fling_distance_for_duration(f.duration_ms, &c);
            assert!(((d7 - f.distance_px) / f.distance_px).abs() < 1e-9);
            let t8 = fling_duration_for_distance(f.distance_px, &c);
            assert!(((t8 - f.duration_ms) / f.duration_ms).abs() < 1e-9);
        }
    }

    #[test]
    fn fling_entry_example() {
        let t = fling_entry_times(5000.0, &cfg(1000.0)).unwrap();
        assert_eq!(t.len(), 1);
        // 40-digit closed form and root finding on D(s0) - D(s1) = h both give 295.6080174...
        assert!((t[0] - 295.608_017_422_992_3).abs() < 1e-6);
        assert!(fling_entry_times(5000.0, &cfg(2000.0)).unwrap().is_empty());
        assert!(fling_total(0.0, &cfg(10.0)).is_err());
    }

    #[test]
    fn session_from_single_drag() {
        let c = cfg(500.0);
        let gestures = [GestureEvent::drag(0, 2000.0), GestureEvent::fling(5000, 60.0)];
        let s = gestures_to_session(&gestures, 10, &c, 5000.0).unwrap();
        let u = s.durations_ms();
        assert_eq!(u.len(), 3);
        assert!((u[0] - 292.893_218_813_452_5).abs() < 1e-6);
        assert!((u[1] - 707.106_781_186_547_5).abs() < 1e-6);
        assert!((u[2] - 4000.0).abs() < 1e-9);
        assert_eq!(s.views.iter().map(|v| v.clip).collect::<Vec<_>>(), vec![0, 1, 2]);
    }

    #[test]
    fn empty_gestures_watch_first_clip() {
        let s = gestures_to_session(&[], 5, &cfg(800.0), 7000.0).unwrap();
        assert_eq!(s.views, vec![ClipView { clip: 0, start_ms: 0.0, duration_ms: 7000.0 }]);
    }

    #[test]
    fn second_fling_truncates_first() {
        let c = cfg(300.0);
        let first = fling_entry_times(10_000.0, &c).unwrap();
        assert!(first.len() > 3 && first[0] < 150.0 && first[3] > 150.0);
        let gestures = [GestureEvent::fling(0, 10_000.0), GestureEvent::fling(150, 10_000.0)];
        let s = gestures_to_session(&gestures, 1000, &c, 10_000.0).unwrap();
        // Oracle: entries of the first fling before 150 ms, then the second fling's entries shifted by 150 ms.
        let mut expected: Vec<f64> = first.iter().copied().filter(|&t| t < 150.0).collect();
        expected.extend(first.iter().map(|t| 150.0 + t));
        let starts: Vec<f64> = s.views.iter().skip(1).map(|v| v.start_ms).collect();
        assert_eq!(starts.len(), expected.len());
        for (a, b) in starts.iter().zip(&expected) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn clicks_keep_position() {
        let c = cfg(800.0);
        let gestures = [GestureEvent::click(1000), GestureEvent::click(2000)];
        let s = gestures_to_session(&gestures, 3, &c, 3000.0).unwrap();
        assert_eq!(s.views.len(), 1);
        assert_eq!(s.views[0].duration_ms, 3000.0);
    }

    #[test]
    fn scrolling_past_the_end_truncates() {
        let c = cfg(100.0);
        let s = gestures_to_session(&[GestureEvent::fling(0, 20_000.0)], 3, &c, 9000.0).unwrap();
        assert!(s.truncated);
        assert_eq!(s.views.last().unwrap().clip, 2);
        assert!((s.views.iter().map(|v| v.duration_ms).sum::<f64>() - 9000.0).abs() < 1e-9);
    }

    #[test]
    fn unsorted_gestures_rejected() {
        let g = [GestureEvent::click(10), GestureEvent::click(5)];
        assert_eq!(gestures_to_session(&g, 2, &cfg(1.0), 20.0), Err(KinematicsError::Unsorted(1)));
    }

    #[test]
    fn slot_views_telescope() {
        let s = WatchSession {
            views: vec![
                ClipView { clip: 0, start_ms: 0.0, duration_ms: 250.0 },
                ClipView { clip: 1, start_ms: 250.0, duration_ms: 30.0 },
                ClipView { clip: 2, start_ms: 280.0, duration_ms: 720.0 },
            ],
            end_ms: 1000.0,
            truncated: false,
        };
        let v = s.slot_views(100, 5);
        assert_eq!(
            v,
            vec![
                SlotView { clip: 0, start_slot: 5, watch_slots: 2 },
                SlotView { clip: 2, start_slot: 7, watch_slots: 8 },
            ]
        );
    }
}
