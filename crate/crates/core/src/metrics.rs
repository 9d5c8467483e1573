//! Playback discontinuity, monetary cost, energy and the combined objective.
//!
//! Deadline convention: playback slot `k` (0-based) of a clip watched from
//! slot `s` is smooth iff at least `(k+1)·R·Δ` bytes of the clip arrived in
//! slots strictly before `s + k`. Only the first `min(u, L)` playback slots are
//! counted, so looping a clip never asks for more data.

use std::io::Write;

use thiserror::Error;

use crate::kinematics::SlotView;
use crate::model::{
    validate_schedule, Bytes, DownloadSchedule, LinkType, ModelError, NetworkTimeline, ObjectiveWeights, Playlist,
    Slot,
};
use crate::watchtime::watch_weights;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("watch duration must be positive")]
    ZeroWatch,
    #[error("weights must be non-negative and sum to 1 (sum = {0})")]
    UnnormalizedWeights(f64),
    #[error("{0} discontinuities but {1} weights")]
    LengthMismatch(usize, usize),
    #[error("infeasible schedule: {0}")]
    Infeasible(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Bytes of one clip available over time: a starting amount plus timed arrivals.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DeliveryCurve {
    initial: Bytes,
    arrivals: Vec<(Slot, Bytes)>,
}

impl DeliveryCurve {
    pub fn new(initial: Bytes) -> Self {
        DeliveryCurve { initial, arrivals: Vec::new() }
    }

    /// Records `bytes` arriving during `slot`. Arrivals may come in any order.
    pub fn push(&mut self, slot: Slot, bytes: Bytes) {
        if bytes == 0 {
            return;
        }
        if self.arrivals.last().is_some_and(|&(s, _)| s > slot) {
            let at = self.arrivals.partition_point(|&(s, _)| s <= slot);
            self.arrivals.insert(at, (slot, bytes));
        } else {
            self.arrivals.push((slot, bytes));
        }
    }

    /// Per-clip curves of a schedule.
    pub fn from_schedule(schedule: &DownloadSchedule, initial: &[Bytes]) -> Vec<DeliveryCurve> {
        let mut curves: Vec<DeliveryCurve> = initial.iter().map(|&b| DeliveryCurve::new(b)).collect();
        for a in &schedule.allocations {
            if let Some(c) = curves.get_mut(a.clip) {
                c.push(a.slot, a.bytes);
            }
        }
        curves
    }

    /// Bytes available at the start of `slot`.
    pub fn delivered_before(&self, slot: Slot) -> Bytes {
        self.initial + self.arrivals.iter().take_while(|&&(s, _)| s < slot).map(|&(_, b)| b).sum::<Bytes>()
    }

    pub fn total(&self) -> Bytes {
        self.initial + self.arrivals.iter().map(|&(_, b)| b).sum::<Bytes>()
    }
}

/// Fraction of the counted playback slots whose data missed the deadline.
pub fn video_discontinuity(
    unit_bytes: Bytes,
    clip_slots: u32,
    start_slot: Slot,
    watch_slots: u32,
    delivery: &DeliveryCurve,
) -> Result<f64, MetricsError> {
    if watch_slots == 0 {
        return Err(MetricsError::ZeroWatch);
    }
    let counted = watch_slots.min(clip_slots).max(1);
    let mut arrived = delivery.initial;
    let mut next = 0;
    let mut smooth = 0u32;
    for k in 0..counted {
        let deadline = start_slot + k;
        while next < delivery.arrivals.len() && delivery.arrivals[next].0 < deadline {
            arrived += delivery.arrivals[next].1;
            next += 1;
        }
        if arrived >= (k as Bytes + 1) * unit_bytes {
            smooth += 1;
        }
    }
    Ok(1.0 - smooth as f64 / counted as f64)
}

/// Σ wᵢ · discontinuityᵢ with weights that sum to one.
pub fn playlist_discontinuity(per_video: &[f64], weights: &[f64]) -> Result<f64, MetricsError> {
    if per_video.len() != weights.len() {
        return Err(MetricsError::LengthMismatch(per_video.len(), weights.len()));
    }
    let sum: f64 = weights.iter().sum();
    if weights.iter().any(|w| !(*w >= 0.0)) || (sum - 1.0).abs() > 1e-9 {
        return Err(MetricsError::UnnormalizedWeights(sum));
    }
    Ok(per_video.iter().zip(weights).map(|(d, w)| d * w).sum::<f64>().clamp(0.0, 1.0))
}

/// Weights proportional to watch duration, uᵢ / Σu.
pub fn linear_weights(durations: &[f64]) -> Vec<f64> {
    let total: f64 = durations.iter().sum();
    durations.iter().map(|u| u / total).collect()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Totals {
    /// Nano-dollars.
    pub cost: u64,
    /// Microjoules.
    pub energy: u64,
}

/// C_total and E_total of a feasible schedule.
pub fn totals(schedule: &DownloadSchedule, timeline: &NetworkTimeline) -> Result<Totals, MetricsError> {
    let mut per_slot: std::collections::BTreeMap<Slot, Bytes> = Default::default();
    for a in &schedule.allocations {
        *per_slot.entry(a.slot).or_default() += a.bytes;
    }
    let mut t = Totals::default();
    for (slot, bytes) in per_slot {
        let link = timeline.get(slot);
        if link.link == LinkType::None || bytes > link.bandwidth {
            return Err(MetricsError::Infeasible(format!("slot {slot} carries {bytes} of {} bytes", link.bandwidth)));
        }
        t.cost += link.cost_of(bytes);
        t.energy += link.energy_of(bytes);
    }
    Ok(t)
}

/// p·D + q·C/C_max + r·E/E_max.
pub fn objective(discontinuity: f64, cost: f64, energy: f64, weights: &ObjectiveWeights) -> Result<f64, MetricsError> {
    weights.check()?;
    let mut v = weights.p * discontinuity;
    if weights.q > 0.0 {
        v += weights.q * cost / weights.c_max;
    }
    if weights.r > 0.0 {
        v += weights.r * energy / weights.e_max;
    }
    Ok(v)
}

/// Outcome of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub run_id: String,
    /// (playlist position, discontinuity) of every watched clip.
    pub per_video: Vec<(usize, f64)>,
    pub discontinuity: f64,
    /// Nano-dollars.
    pub cost: u64,
    /// Microjoules.
    pub energy: u64,
    pub norm_cost: f64,
    pub norm_energy: f64,
    pub objective: f64,
}

/// Scores delivered data against the watched views.
pub fn evaluate(
    run_id: impl Into<String>,
    playlist: &Playlist,
    slot_ms: u32,
    views: &[SlotView],
    curves: &[DeliveryCurve],
    spent: Totals,
    weights: &ObjectiveWeights,
) -> Result<MetricsReport, MetricsError> {
    let mut per_video = Vec::with_capacity(views.len());
    for v in views {
        let clip = &playlist.clips[v.clip];
        let d = video_discontinuity(
            clip.unit_bytes(slot_ms),
            clip.playback_slots(slot_ms),
            v.start_slot,
            v.watch_slots,
            &curves[v.clip],
        )?;
        per_video.push((v.clip, d));
    }
    let discontinuity = if views.is_empty() {
        0.0
    } else {
        let durations: Vec<f64> = views.iter().map(|v| v.watch_slots as f64).collect();
        let w = watch_weights(&durations).map_err(|_| MetricsError::ZeroWatch)?;
        let d: Vec<f64> = per_video.iter().map(|&(_, d)| d).collect();
        playlist_discontinuity(&d, &w)?
    };
    let norm = |x: u64, max: f64| if max > 0.0 { x as f64 / max } else { 0.0 };
    let norm_cost = norm(spent.cost, weights.c_max);
    let norm_energy = norm(spent.energy, weights.e_max);
    let objective = objective(discontinuity, spent.cost as f64, spent.energy as f64, weights)?;
    Ok(MetricsReport {
        run_id: run_id.into(),
        per_video,
        discontinuity,
        cost: spent.cost,
        energy: spent.energy,
        norm_cost,
        norm_energy,
        objective,
    })
}

/// Scores a complete schedule, checking feasibility first.
pub fn evaluate_schedule(
    run_id: impl Into<String>,
    playlist: &Playlist,
    timeline: &NetworkTimeline,
    views: &[SlotView],
    initial: &[Bytes],
    schedule: &DownloadSchedule,
    weights: &ObjectiveWeights,
) -> Result<MetricsReport, MetricsError> {
    let report = validate_schedule(schedule, timeline, playlist);
    if let Some(v) = report.violations.first() {
        return Err(MetricsError::Infeasible(v.to_string()));
    }
    let spent = totals(schedule, timeline)?;
    let curves = DeliveryCurve::from_schedule(schedule, initial);
    evaluate(run_id, playlist, timeline.slot_ms(), views, &curves, spent, weights)
}

pub const REPORT_CSV_HEADER: &str = "run_id,discontinuity,cost,energy,norm_cost,norm_energy,objective";

/// Formats nano-dollars as dollars without going through floating point.
pub fn format_dollars(nano: u64) -> String {
    format!("{}.{:09}", nano / 1_000_000_000, nano % 1_000_000_000)
}

/// Formats microjoules as joules without going through floating point.
pub fn format_joules(micro: u64) -> String {
    format!("{}.{:06}", micro / 1_000_000, micro % 1_000_000)
}

impl MetricsReport {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{:.6},{},{},{:.6},{:.6},{:.6}",
            self.run_id,
            self.discontinuity,
            format_dollars(self.cost),
            format_joules(self.energy),
            self.norm_cost,
            self.norm_energy,
            self.objective
        )
    }
}

pub fn write_reports_csv<W: Write>(mut out: W, reports: &[MetricsReport]) -> std::io::Result<()> {
    writeln!(out, "{REPORT_CSV_HEADER}")?;
    for r in reports {
        writeln!(out, "{}", r.csv_row())?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{SlotLink, Tariff};

    const UNIT: Bytes = 100;

    #[test]
    fn fully_cached_clip_is_smooth() {
        let c = DeliveryCurve::new(10 * UNIT);
        assert_eq!(video_discontinuity(UNIT, 10, 5, 10, &c), Ok(0.0));
    }

    #[test]
    fn nothing_delivered_is_fully_discontinuous() {
        let c = DeliveryCurve::new(0);
        assert_eq!(video_discontinuity(UNIT, 10, 5, 30, &c), Ok(1.0));
        assert_eq!(video_discontinuity(UNIT, 10, 5, 0, &c), Err(MetricsError::ZeroWatch));
    }

    #[test]
    fn half_the_slots_on_time() {
        // Playback of an 8-slot clip starts at slot 10 and is watched for 12 slots.
        // Four units arrive in slots 6..10 and nothing after.
        let mut c = DeliveryCurve::new(0);
        for t in 6..10 {
            c.push(t, UNIT);
        }
        // 4 units before playback: slots k=0..3 need 1..4 units -> smooth; k=4..7 need 5..8 -> miss.
        let d = video_discontinuity(UNIT, 8, 10, 12, &c).unwrap();
        assert_eq!(d, 0.5);
    }

    #[test]
    fn arrival_in_deadline_slot_is_late() {
        let mut c = DeliveryCurve::new(0);
        c.push(3, UNIT);
        assert_eq!(video_discontinuity(UNIT, 4, 3, 1, &c), Ok(1.0));
        assert_eq!(video_discontinuity(UNIT, 4, 4, 1, &c), Ok(0.0));
    }

    #[test]
    fn playlist_weighting() {
        assert_eq!(playlist_discontinuity(&[0.0, 0.0], &[0.5, 0.5]), Ok(0.0));
        let w = linear_weights(&[1.0, 3.0]);
        assert_eq!(playlist_discontinuity(&[1.0, 0.0], &w), Ok(0.25));
        assert_eq!(playlist_discontinuity(&[0.37], &[1.0]), Ok(0.37));
        assert!(matches!(playlist_discontinuity(&[1.0, 0.0], &[1.0, 1.0]), Err(MetricsError::UnnormalizedWeights(_))));
    }

    fn tl(links: Vec<SlotLink>) -> NetworkTimeline {
        NetworkTimeline::new(100, links).unwrap()
    }

    #[test]
    fn totals_cases() {
        let cell = Tariff { cost_per_byte: 10, energy_per_byte: 25 };
        let wifi_only = tl(vec![SlotLink::wifi(1000, 7); 5]);
        let mut s = DownloadSchedule::new();
        for t in 0..5 {
            s.push(t, 0, 1000);
        }
        assert_eq!(totals(&s, &wifi_only).unwrap().cost, 0);

        let cellular = tl(vec![SlotLink::cellular(1000, cell); 10]);
        let mut s = DownloadSchedule::new();
        for t in 0..10 {
            s.push(t, 0, 1000);
        }
        let c = SlotLink::cellular(1000, cell).slot_cost();
        assert_eq!(totals(&s, &cellular).unwrap().cost, 10 * c);

        let mut mixed = vec![SlotLink::wifi(1000, 7); 3];
        mixed.extend(vec![SlotLink::cellular(1000, cell); 2]);
        let mixed = tl(mixed);
        let mut s = DownloadSchedule::new();
        for t in 0..5 {
            s.push(t, 0, 1000);
        }
        let e = totals(&s, &mixed).unwrap().energy;
        assert_eq!(e, 3 * SlotLink::wifi(1000, 7).slot_energy() + 2 * SlotLink::cellular(1000, cell).slot_energy());

        let mut over = DownloadSchedule::new();
        over.push(0, 0, 1001);
        assert!(matches!(totals(&over, &mixed), Err(MetricsError::Infeasible(_))));
    }

    #[test]
    fn objective_cases() {
        let w = ObjectiveWeights::new(1.0, 0.0, 0.0, 0.0, 0.0).unwrap();
        assert_eq!(objective(0.3, 0.0, 0.0, &w), Ok(0.3));
        let w = ObjectiveWeights::new(0.0, 1.0, 0.0, 500.0, 0.0).unwrap();
        assert_eq!(objective(0.9, 500.0, 77.0, &w), Ok(1.0));
        let w = ObjectiveWeights { p: 1.5, q: 1.0, r: 1.0, c_max: 10.0, e_max: 20.0 };
        assert!((w.p / w.q - 1.5).abs() < 1e-15 && (w.p / w.r - 1.5).abs() < 1e-15);
        assert_eq!(objective(0.2, 5.0, 10.0, &w), Ok(1.5 * 0.2 + 0.5 + 0.5));
        let bad = ObjectiveWeights { p: 1.0, q: 1.0, r: 0.0, c_max: 0.0, e_max: 0.0 };
        assert!(objective(0.1, 1.0, 0.0, &bad).is_err());
    }

    #[test]
    fn money_and_energy_formatting() {
        assert_eq!(format_dollars(1_234_567_890), "1.234567890");
        assert_eq!(format_dollars(5), "0.000000005");
        assert_eq!(format_joules(2_000_001), "2.000001");
    }
}
