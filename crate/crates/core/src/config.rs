//! Simulation configuration, read from TOML.
//!
//! Every section and key has a default, so an empty file is a valid config.
//! Values can be overridden by `section.key=value` assignments and by
//! environment variables named `CLIPSIM_<SECTION>__<KEY>`.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kinematics::KinematicsConfig;
use crate::model::Tariff;

pub const ENV_PREFIX: &str = "CLIPSIM_";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("invalid config {path}: {message}")]
    Parse { path: String, message: String },
    #[error("bad override {0:?}: expected section.key=value")]
    BadOverride(String),
    #[error("override {key}: {message}")]
    Override { key: String, message: String },
    #[error("invalid value for {key}: {message}")]
    Invalid { key: &'static str, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClipConfig {
    pub length_ms: u32,
    /// Streaming rate, bytes per second.
    pub rate: u64,
    /// Slot duration Δ.
    pub slot_ms: u32,
}

impl Default for ClipConfig {
    fn default() -> Self {
        ClipConfig { length_ms: 6000, rate: 166_000, slot_ms: 100 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkConfig {
    /// Bytes per second.
    pub cellular_bandwidth: u64,
    /// Bytes per second.
    pub wifi_bandwidth: u64,
    /// A WiFi window opens every `wifi_period_s` seconds of absolute time.
    pub wifi_period_s: u64,
    pub wifi_window_s: u64,
    /// Lets watch-time downloads use a WiFi window that overlaps the session.
    pub wifi_during_watch: bool,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        NetworkConfig {
            cellular_bandwidth: 1_000_000,
            wifi_bandwidth: 2_000_000,
            wifi_period_s: 3600,
            wifi_window_s: 300,
            wifi_during_watch: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TariffConfig {
    /// Nano-dollars per cellular byte; 10 is $1 per 100 MB.
    pub cellular_cost: u64,
    /// Microjoules per cellular byte.
    pub cellular_energy: u64,
    /// Microjoules per WiFi byte.
    pub wifi_energy: u64,
}

impl Default for TariffConfig {
    fn default() -> Self {
        TariffConfig { cellular_cost: 10, cellular_energy: 25, wifi_energy: 7 }
    }
}

impl TariffConfig {
    pub fn cellular(&self) -> Tariff {
        Tariff { cost_per_byte: self.cellular_cost, energy_per_byte: self.cellular_energy }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ObjectiveConfig {
    pub p: f64,
    pub q: f64,
    pub r: f64,
}

impl Default for ObjectiveConfig {
    fn default() -> Self {
        ObjectiveConfig { p: 1.5, q: 1.0, r: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PrefetchConfig {
    /// Aggressiveness α: share of each clip that may be pre-fetched.
    pub alpha: f64,
    pub storage_bytes: u64,
}

impl Default for PrefetchConfig {
    fn default() -> Self {
        PrefetchConfig { alpha: 0.2, storage_bytes: 100_000_000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorkloadConfig {
    pub popular_clips: usize,
    pub recent_clips: usize,
    /// Watching events per grid point.
    pub events: usize,
    /// Events start uniformly within [day_start_h, day_end_h) on one of `days` days.
    pub day_start_h: u32,
    pub day_end_h: u32,
    pub days: u32,
    /// Length of a synthetic watching event, ms; 0 scrolls through the whole playlist instead.
    pub session_ms: u64,
    /// Session end after the last gesture of a recorded trace, ms.
    pub trace_tail_ms: u64,
}

impl Default for WorkloadConfig {
    fn default() -> Self {
        WorkloadConfig {
            popular_clips: 50,
            recent_clips: 150,
            events: 20,
            day_start_h: 9,
            day_end_h: 21,
            days: 7,
            session_ms: 300_000,
            trace_tail_ms: 6000,
        }
    }
}

/// Synthetic gesture statistics. The defaults are placeholders, not fitted data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GestureConfig {
    pub interarrival_median_ms: f64,
    pub interarrival_sigma: f64,
    pub fling_median: f64,
    pub fling_sigma: f64,
    pub drag_median: f64,
    pub drag_sigma: f64,
    pub fling_share: f64,
    pub drag_share: f64,
    pub click_share: f64,
}

impl Default for GestureConfig {
    fn default() -> Self {
        GestureConfig {
            interarrival_median_ms: 2500.0,
            interarrival_sigma: 0.6,
            fling_median: 4000.0,
            fling_sigma: 0.4,
            drag_median: 1800.0,
            drag_sigma: 0.2,
            fling_share: 0.7,
            drag_share: 0.25,
            click_share: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PopularityConfig {
    pub zipf_exponent: f64,
    pub catalog_size: u64,
    /// Reposts shared out over the catalog.
    pub total_reposts: u64,
}

impl Default for PopularityConfig {
    fn default() -> Self {
        PopularityConfig { zipf_exponent: 2.0, catalog_size: 10_000, total_reposts: 10_000_000 }
    }
}

/// Arrival rate of clips in the recent section, per hour of the day. Synthetic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UploadConfig {
    pub hourly_rates: Vec<f64>,
    /// Popular clips were uploaded between these many days before the event.
    pub popular_age_days: (f64, f64),
}

impl Default for UploadConfig {
    fn default() -> Self {
        UploadConfig {
            hourly_rates: vec![
                30.0, 22.0, 16.0, 12.0, 10.0, 10.0, 14.0, 22.0, 34.0, 44.0, 50.0, 54.0, 58.0, 56.0, 54.0, 54.0,
                56.0, 60.0, 66.0, 72.0, 76.0, 70.0, 56.0, 42.0,
            ],
            popular_age_days: (1.0, 7.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    /// Parallel runs; 0 uses every core.
    pub jobs: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig { seed: 42, jobs: 0 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub clip: ClipConfig,
    pub network: NetworkConfig,
    pub tariff: TariffConfig,
    pub objective: ObjectiveConfig,
    pub prefetch: PrefetchConfig,
    pub kinematics: KinematicsConfig,
    pub workload: WorkloadConfig,
    pub gestures: GestureConfig,
    pub popularity: PopularityConfig,
    pub uploads: UploadConfig,
    pub experiment: ExperimentConfig,
}

impl SimConfig {
    pub fn from_toml_str(text: &str, origin: &str) -> Result<Self, ConfigError> {
        let cfg: SimConfig =
            toml::from_str(text).map_err(|e| ConfigError::Parse { path: origin.to_string(), message: e.to_string() })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
        Self::from_toml_str(&text, &path.display().to_string())
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn save(&self, path: &Path) -> Result<(), ConfigError> {
        std::fs::write(path, self.to_toml_string())
            .map_err(|source| ConfigError::Io { path: path.display().to_string(), source })
    }

    /// Applies one `section.key=value` override. The value is read as a TOML
    /// literal and falls back to a plain string.
    pub fn set(&mut self, assignment: &str) -> Result<(), ConfigError> {
        let (key, value) = assignment.split_once('=').ok_or_else(|| ConfigError::BadOverride(assignment.to_string()))?;
        let (section, field) =
            key.trim().split_once('.').ok_or_else(|| ConfigError::BadOverride(assignment.to_string()))?;
        let value = value.trim();
        let parsed = toml::from_str::<toml::Table>(&format!("v = {value}"))
            .ok()
            .and_then(|mut t| t.remove("v"))
            .unwrap_or_else(|| toml::Value::String(value.to_string()));
        let mut doc = toml::Table::try_from(&*self).expect("config serializes");
        let fail = |message: String| ConfigError::Override { key: key.trim().to_string(), message };
        let table = doc
            .get_mut(section)
            .and_then(toml::Value::as_table_mut)
            .ok_or_else(|| fail(format!("unknown section {section:?}")))?;
        // integers given for float fields keep working
        let parsed = match (table.get(field), parsed) {
            (Some(toml::Value::Float(_)), toml::Value::Integer(i)) => toml::Value::Float(i as f64),
            (_, v) => v,
        };
        table.insert(field.to_string(), parsed);
        let cfg: SimConfig = toml::Value::Table(doc).try_into().map_err(|e: toml::de::Error| fail(e.to_string()))?;
        cfg.validate()?;
        *self = cfg;
        Ok(())
    }

    /// Applies `CLIPSIM_<SECTION>__<KEY>` variables from `vars`.
    pub fn apply_env<I: IntoIterator<Item = (String, String)>>(&mut self, vars: I) -> Result<(), ConfigError> {
        let mut pending: Vec<(String, String)> = vars
            .into_iter()
            .filter_map(|(k, v)| {
                let rest = k.strip_prefix(ENV_PREFIX)?;
                let (section, key) = rest.split_once("__")?;
                Some((format!("{}.{}", section.to_ascii_lowercase(), key.to_ascii_lowercase()), v))
            })
            .collect();
        pending.sort();
        for (key, value) in pending {
            self.set(&format!("{key}={value}"))?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |key: &'static str, message: &str| Err(ConfigError::Invalid { key, message: message.to_string() });
        if self.clip.length_ms == 0 || self.clip.rate == 0 || self.clip.slot_ms == 0 {
            return bad("clip", "length, rate and slot duration must be positive");
        }
        if !(0.0..=1.0).contains(&self.prefetch.alpha) {
            return bad("prefetch.alpha", "must lie in [0, 1]");
        }
        let o = &self.objective;
        if [o.p, o.q, o.r].iter().any(|v| !(v.is_finite() && *v >= 0.0)) || o.p + o.q + o.r <= 0.0 {
            return bad("objective", "p, q, r must be non-negative with a positive sum");
        }
        if self.network.wifi_period_s == 0 || self.network.wifi_window_s > self.network.wifi_period_s {
            return bad("network.wifi_window_s", "window must fit in a positive period");
        }
        if self.tariff.cellular_cost == 0 || self.tariff.cellular_energy <= self.tariff.wifi_energy {
            return bad("tariff", "cellular must cost money and more energy than wifi");
        }
        if self.workload.popular_clips + self.workload.recent_clips == 0 {
            return bad("workload", "a playlist needs clips");
        }
        if self.workload.day_start_h >= self.workload.day_end_h || self.workload.day_end_h > 24 || self.workload.days == 0 {
            return bad("workload.day_start_h", "need 0 <= start < end <= 24 and at least one day");
        }
        let g = &self.gestures;
        let shares = [g.fling_share, g.drag_share, g.click_share];
        if shares.iter().any(|s| !(*s >= 0.0)) || shares.iter().sum::<f64>() <= 0.0 {
            return bad("gestures", "kind shares must be non-negative with a positive sum");
        }
        if [g.interarrival_median_ms, g.fling_median, g.drag_median].iter().any(|v| !(*v > 0.0))
            || [g.interarrival_sigma, g.fling_sigma, g.drag_sigma].iter().any(|v| !(*v >= 0.0))
        {
            return bad("gestures", "medians must be positive and spreads non-negative");
        }
        if self.uploads.hourly_rates.len() != 24 || self.uploads.hourly_rates.iter().any(|r| !(*r > 0.0)) {
            return bad("uploads.hourly_rates", "need 24 positive rates");
        }
        let (lo, hi) = self.uploads.popular_age_days;
        if !(lo >= 0.0 && hi >= lo) {
            return bad("uploads.popular_age_days", "need 0 <= min <= max");
        }
        if !(self.popularity.zipf_exponent > 0.0) || self.popularity.catalog_size == 0 {
            return bad("popularity", "exponent and catalog size must be positive");
        }
        self.kinematics.validate().map_err(|e| ConfigError::Invalid { key: "kinematics", message: e.to_string() })
    }

    /// Bytes per slot of a link with `bytes_per_s` throughput.
    pub fn per_slot(&self, bytes_per_s: u64) -> u64 {
        bytes_per_s * self.clip.slot_ms as u64 / 1000
    }
}
