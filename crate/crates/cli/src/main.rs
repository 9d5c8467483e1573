//! `clipsim`: single runs, sweeps, trace generation and kinematics queries.
//!
//! Summaries go to standard output; CSV goes only to the files named by flags.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use clipsim::config::SimConfig;
use clipsim::kinematics::{animation, classify_gesture, fling_total, GestureEvent, GestureKind};
use clipsim::metrics::{format_dollars, format_joules, write_reports_csv, MetricsReport};
use clipsim::simulator::{
    expand_grid, experiment, parse_grid, run, run_event, write_experiment_csv, ExperimentRow, GridPoint, Scheduler,
    SessionInput, SimulationRun,
};
use clipsim::traces::{event_seed, load_traces, save_gestures, save_playlist, synthesize_event};
use clipsim::watchtime::write_schedule_csv;

#[derive(Parser, Debug)]
#[command(name = "clipsim", version, about = "Download scheduling simulator for scroll-driven video clip feeds")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// Config file, or `default` for the built-in defaults.
    #[arg(long, global = true, default_value = "default", env = "CLIPSIM_CONFIG")]
    config: String,
    /// Override a config value, e.g. `--set prefetch.alpha=0.5`. Repeatable.
    #[arg(long = "set", global = true, value_name = "SECTION.KEY=VALUE")]
    set: Vec<String>,
    /// Experiment seed (experiment.seed).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Parallel runs, 0 for one per core (experiment.jobs).
    #[arg(long, global = true)]
    jobs: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate watching events with one scheduler.
    Simulate(SimulateArgs),
    /// Sweep a parameter grid over every scheduler.
    Sweep(SweepArgs),
    /// Write synthetic playlist and gesture traces.
    GenTraces(GenArgs),
    /// Scroll animation of one gesture.
    Kinematics(KinematicsArgs),
    /// Check a config and, optionally, trace files.
    Validate(ValidateArgs),
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[arg(long, default_value = "wt-pf")]
    scheduler: String,
    /// Synthetic events to run (workload.events).
    #[arg(long)]
    events: Option<usize>,
    /// Recorded playlist CSV; needs --gestures.
    #[arg(long, requires = "gestures")]
    playlist: Option<PathBuf>,
    /// Recorded gesture CSV; needs --playlist.
    #[arg(long, requires = "playlist")]
    gestures: Option<PathBuf>,
    /// Watch start of a recorded trace, seconds since the trace epoch.
    #[arg(long, default_value_t = 36_000)]
    start_s: i64,
    /// Metrics CSV, one row per run.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Per-slot event log CSV of the first run.
    #[arg(long)]
    event_log: Option<PathBuf>,
    /// Download schedule CSV of the first run.
    #[arg(long)]
    schedule: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SweepArgs {
    /// Grid axis such as `bandwidth=150k:3m:log10`, `pq=0.1:5:lin8`, `alpha=0.1,0.5,0.9`. Repeatable.
    #[arg(long, required = true)]
    grid: Vec<String>,
    /// Comma-separated schedulers.
    #[arg(long, default_value = "wt-pf,wt,seqd,nextd")]
    schedulers: String,
    /// Events per grid point (workload.events).
    #[arg(long)]
    events: Option<usize>,
    /// Long-format CSV, one row per grid point and scheduler.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct GenArgs {
    #[arg(long)]
    out_dir: PathBuf,
    /// Number of watching events to write.
    #[arg(long, default_value_t = 1)]
    events: usize,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum KindArg {
    Auto,
    Drag,
    Fling,
}

#[derive(Args, Debug)]
struct KinematicsArgs {
    /// Initial speed, px/s.
    #[arg(long)]
    s0: f64,
    /// Clip height, px (kinematics.clip_height_px).
    #[arg(long)]
    h: Option<f64>,
    /// Screen density (kinematics.ppi).
    #[arg(long)]
    ppi: Option<f64>,
    #[arg(long, value_enum, default_value = "auto")]
    kind: KindArg,
}

#[derive(Args, Debug)]
struct ValidateArgs {
    /// Write the resolved config, with every default filled in, as TOML.
    #[arg(long)]
    write_config: Option<PathBuf>,
    #[arg(long, requires = "gestures")]
    playlist: Option<PathBuf>,
    #[arg(long, requires = "playlist")]
    gestures: Option<PathBuf>,
}

type Result<T> = std::result::Result<T, Box<dyn std::error::Error>>;

fn load_config(common: &Common) -> Result<SimConfig> {
    let mut cfg = if common.config == "default" { SimConfig::default() } else { SimConfig::load(Path::new(&common.config))? };
    cfg.apply_env(std::env::vars())?;
    for s in &common.set {
        cfg.set(s)?;
    }
    if let Some(seed) = common.seed {
        cfg.experiment.seed = seed;
    }
    if let Some(jobs) = common.jobs {
        cfg.experiment.jobs = jobs;
    }
    Ok(cfg)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    let f = File::create(path).map_err(|e| format!("cannot create {}: {e}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn print_reports(reports: &[MetricsReport]) {
    println!("{:<22} {:>13} {:>14} {:>14} {:>10}", "run", "discontinuity", "cost ($)", "energy (J)", "objective");
    for r in reports {
        println!(
            "{:<22} {:>13.6} {:>14} {:>14} {:>10.6}",
            r.run_id,
            r.discontinuity,
            format_dollars(r.cost),
            format_joules(r.energy),
            r.objective
        );
    }
    if reports.len() > 1 {
        let n = reports.len() as f64;
        let mean = |f: &dyn Fn(&MetricsReport) -> f64| reports.iter().map(f).sum::<f64>() / n;
        println!(
            "{:<22} {:>13.6} {:>14.9} {:>14.6} {:>10.6}",
            "mean",
            mean(&|r| r.discontinuity),
            mean(&|r| r.cost as f64) / 1e9,
            mean(&|r| r.energy as f64) / 1e6,
            mean(&|r| r.objective)
        );
    }
}

fn write_run_details(args: &SimulateArgs, run: &SimulationRun, playlist: &clipsim::Playlist) -> Result<()> {
    if let Some(path) = &args.event_log {
        let mut w = create(path)?;
        run.log.write_csv(&mut w, playlist, &run.timeline)?;
        w.flush()?;
    }
    if let Some(path) = &args.schedule {
        let mut w = create(path)?;
        write_schedule_csv(&mut w, &run.schedule(), playlist, &run.timeline, &vec![0; playlist.len()])?;
        w.flush()?;
    }
    Ok(())
}

fn simulate(cfg: &SimConfig, args: &SimulateArgs) -> Result<()> {
    let scheduler: Scheduler = args.scheduler.parse()?;
    let mut reports = Vec::new();
    if let (Some(pp), Some(gp)) = (&args.playlist, &args.gestures) {
        let (playlist, gestures) = load_traces(pp, gp, &cfg.clip)?;
        let end = gestures.last().map_or(0, |g| g.timestamp_ms) + cfg.workload.trace_tail_ms;
        let input = SessionInput { playlist: &playlist, gestures: &gestures, session_end_ms: end, start_s: args.start_s };
        let r = run(cfg, input, scheduler, &format!("trace-{scheduler}"))?;
        write_run_details(args, &r, &playlist)?;
        reports.push(r.report);
    } else {
        let n = args.events.unwrap_or(cfg.workload.events);
        let pool = rayon::ThreadPoolBuilder::new().num_threads(cfg.experiment.jobs).build()?;
        let runs: Vec<_> = pool.install(|| {
            use rayon::prelude::*;
            (0..n).into_par_iter().map(|e| run_event(cfg, e, &[scheduler])).collect::<Vec<_>>()
        });
        for (e, r) in runs.into_iter().enumerate() {
            let r = r?.remove(0);
            if e == 0 && (args.event_log.is_some() || args.schedule.is_some()) {
                let ev = synthesize_event(cfg, event_seed(cfg.experiment.seed, 0))?;
                write_run_details(args, &r, &ev.playlist)?;
            }
            reports.push(r.report);
        }
    }
    print_reports(&reports);
    if let Some(path) = &args.out {
        let mut w = create(path)?;
        write_reports_csv(&mut w, &reports)?;
        w.flush()?;
        println!("metrics written to {}", path.display());
    }
    Ok(())
}

fn print_rows(rows: &[ExperimentRow]) {
    println!(
        "{:<32} {:<6} {:>13} {:>13} {:>11} {:>10} {:>10}",
        "grid point", "sched", "discontinuity", "cost ($)", "energy (J)", "norm cost", "objective"
    );
    for r in rows {
        println!(
            "{:<32} {:<6} {:>13.6} {:>13.6} {:>11.3} {:>10.6} {:>10.6}",
            r.label,
            r.scheduler.to_string(),
            r.discontinuity,
            r.cost / 1e9,
            r.energy / 1e6,
            r.norm_cost,
            r.objective
        );
    }
}

fn sweep(cfg: &SimConfig, args: &SweepArgs) -> Result<()> {
    let axes = args.grid.iter().map(|g| parse_grid(g)).collect::<std::result::Result<Vec<_>, _>>()?;
    let points: Vec<GridPoint> = expand_grid(cfg, &axes)?;
    let schedulers =
        args.schedulers.split(',').map(str::parse).collect::<std::result::Result<Vec<Scheduler>, _>>()?;
    let rows = experiment(&points, &schedulers, args.events.unwrap_or(cfg.workload.events), cfg.experiment.jobs)?;
    print_rows(&rows);
    if let Some(path) = &args.out {
        let mut w = create(path)?;
        write_experiment_csv(&mut w, &rows)?;
        w.flush()?;
        println!("sweep written to {}", path.display());
    }
    Ok(())
}

fn gen_traces(cfg: &SimConfig, args: &GenArgs) -> Result<()> {
    std::fs::create_dir_all(&args.out_dir).map_err(|e| format!("cannot create {}: {e}", args.out_dir.display()))?;
    for e in 0..args.events {
        let seed = event_seed(cfg.experiment.seed, e as u64);
        let ev = synthesize_event(cfg, seed)?;
        let note = format!("start_s {}, session {} ms", ev.start_s, ev.session_end_ms);
        let (playlist, gestures) = (ev.playlist, ev.gestures);
        let pp = args.out_dir.join(format!("playlist-{e}.csv"));
        let gp = args.out_dir.join(format!("gestures-{e}.csv"));
        save_playlist(&pp, &playlist)?;
        save_gestures(&gp, &gestures)?;
        println!("event {e}: {} clips, {} gestures, {note} -> {}, {}", playlist.len(), gestures.len(), pp.display(), gp.display());
    }
    Ok(())
}

fn kinematics(cfg: &SimConfig, args: &KinematicsArgs) -> Result<()> {
    let mut k = cfg.kinematics.clone();
    if let Some(h) = args.h {
        k.clip_height_px = h;
    }
    if let Some(ppi) = args.ppi {
        k.ppi = ppi;
    }
    k.validate()?;
    let kind = match args.kind {
        KindArg::Auto => classify_gesture(args.s0, &k)?,
        KindArg::Drag => GestureKind::Drag,
        KindArg::Fling => GestureKind::Fling,
    };
    let g = GestureEvent { timestamp_ms: 0, kind, initial_speed: args.s0 };
    let anim = animation(&g, &k)?;
    println!("kind: {kind} (threshold {:.3} px/s)", k.threshold());
    if kind == GestureKind::Fling {
        let t = fling_total(args.s0, &k)?;
        println!("total distance: {:.6} px", t.distance_px);
    }
    println!("duration: {:.6} ms", anim.duration_ms);
    println!("clips crossed: {}", anim.entries_ms.len());
    for (m, e) in anim.entries_ms.iter().enumerate() {
        println!("  clip +{} enters at {:.6} ms", m + 1, e);
    }
    Ok(())
}

fn validate(cfg: &SimConfig, args: &ValidateArgs) -> Result<()> {
    println!("config ok");
    if let Some(path) = &args.write_config {
        cfg.save(path)?;
        println!("config written to {}", path.display());
    }
    if let (Some(pp), Some(gp)) = (&args.playlist, &args.gestures) {
        let (p, g) = load_traces(pp, gp, &cfg.clip)?;
        println!("traces ok: {} clips, {} gestures", p.len(), g.len());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = load_config(&cli.common).and_then(|cfg| match &cli.command {
        Command::Simulate(a) => simulate(&cfg, a),
        Command::Sweep(a) => sweep(&cfg, a),
        Command::GenTraces(a) => gen_traces(&cfg, a),
        Command::Kinematics(a) => kinematics(&cfg, a),
        Command::Validate(a) => validate(&cfg, a),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
