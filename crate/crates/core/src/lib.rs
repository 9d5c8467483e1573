//! Download scheduling for instant video clips watched in a scrolling feed.
//!
//! The crate models the clip playlist and the network as slotted timelines,
//! turns scroll gestures into per-clip watch durations, pre-fetches clip heads
//! over WiFi, schedules watch-time downloads against playback deadlines and
//! scores the result by playback discontinuity, money and energy.

pub mod config;
pub mod kinematics;
pub mod metrics;
pub mod model;
pub mod prefetch;
pub mod simulator;
pub mod traces;
pub mod watchtime;

pub use config::SimConfig;
pub use kinematics::{GestureEvent, GestureKind, KinematicsConfig, SlotView, WatchSession};
pub use metrics::MetricsReport;
pub use model::{Bytes, DownloadSchedule, NetworkTimeline, ObjectiveWeights, Playlist, Slot, SlotLink, VideoClip};
pub use simulator::{Scheduler, SimulationRun};
