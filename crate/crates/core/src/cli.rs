//! Command-line front end. Every command returns an exit code: 0 on success, 1 when
//! an analytic or simulated check fails, 2 on a usage or configuration error.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::admittance::{Admittance, AdmittanceParams};
use crate::config::{RunConfig, Setup};
use crate::geom::Transform;
use crate::model::{RobotExample, RobotModel};
use crate::retarget::{calibrate, CorrespondenceConfig, Side};
use crate::serve::{Clock, ServeOptions, Server, DEFAULT_LISTEN};
use crate::sim::{csv_header, metrics, Episode, Simulator, WrenchEvent};
use crate::stream::{recording, Replay, Sender};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "rtwbc", version, about = "Human-to-robot whole-body motion transfer")]
pub struct Cli {
    /// Run configuration (TOML) or the name of a bundled scenario.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<String>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR", default_value = "out")]
    pub out: PathBuf,
    /// Seed for the force noise; overrides the config.
    #[arg(long, global = true, value_name = "N")]
    pub seed: Option<u64>,
    /// Playback speed factor for paced commands.
    #[arg(long, global = true, value_name = "F")]
    pub speed: Option<f64>,
    /// UDP address to listen on (serve) or send to (send).
    #[arg(long, global = true, value_name = "ADDR:PORT", env = "RTWBC_LISTEN")]
    pub listen: Option<SocketAddr>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a recording or synthetic stream; writes trace.csv and metrics.json.
    Replay {
        /// JSON Lines recording, replacing the stream of the config.
        #[arg(long)]
        recording: Option<PathBuf>,
    },
    /// Evaluate the sufficient stability condition of the admittance parameters.
    CheckStability,
    /// Stability verdicts over a parameter grid; writes sweep.csv.
    Sweep {
        /// TOML file with a list of values per admittance parameter.
        #[arg(long)]
        grid: PathBuf,
    },
    /// Run the live loop on UDP input; writes telemetry.csv and metrics.json.
    Serve {
        #[arg(long, value_enum, default_value_t = ClockArg::Wall)]
        clock: ClockArg,
        /// Stop after this much simulated time (s).
        #[arg(long)]
        duration: Option<f64>,
    },
    /// Compute a correspondence file from an equivalent example pose pair.
    Calibrate(CalibrateArgs),
    /// Write the configured stream as JSON Lines to synth.jsonl.
    Synth,
    /// Send the configured stream over UDP, paced by its timestamps.
    Send {
        #[arg(long)]
        recording: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ClockArg {
    Wall,
    Stream,
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    /// Person example: a JSON Lines file holding one observation.
    #[arg(long)]
    pub person: Option<PathBuf>,
    /// Robot example configuration (TOML).
    #[arg(long)]
    pub robot: Option<PathBuf>,
    /// Robot model (TOML).
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = SideArg::Right)]
    pub side: SideArg,
    /// Place the torso frame at the shoulder height instead of the pelvis.
    #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
    pub torso_at_shoulder: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SideArg {
    Right,
    Left,
}

/// Parses `args` and runs the command. Usage errors print clap's message and give 2.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_USAGE,
            };
        }
    };
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {}", describe(&e));
            EXIT_USAGE
        }
    }
}

/// Joins the error chain, skipping causes already spelled out by their parent.
fn describe(e: &anyhow::Error) -> String {
    let mut msg = String::new();
    for cause in e.chain() {
        let text = cause.to_string();
        if !msg.contains(&text) {
            if !msg.is_empty() {
                msg.push_str(": ");
            }
            msg.push_str(&text);
        }
    }
    msg
}

pub fn run(cli: &Cli) -> Result<i32> {
    if let Some(s) = cli.speed {
        if !(s > 0.0 && s.is_finite()) {
            bail!("--speed must be positive, got {s}");
        }
    }
    match &cli.command {
        Command::Replay { recording } => cmd_replay(cli, recording.as_deref()),
        Command::CheckStability => cmd_check_stability(cli),
        Command::Sweep { grid } => cmd_sweep(cli, grid),
        Command::Serve { clock, duration } => cmd_serve(cli, *clock, *duration),
        Command::Calibrate(args) => cmd_calibrate(cli, args),
        Command::Synth => cmd_synth(cli),
        Command::Send { recording } => cmd_send(cli, recording.as_deref()),
    }
}

fn load_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(c) => RunConfig::resolve(c)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.noise.seed = seed;
    }
    Ok(cfg)
}

fn setup(cli: &Cli, recording: Option<&Path>) -> Result<Setup> {
    let mut cfg = load_config(cli)?;
    if let Some(r) = recording {
        cfg.recording = Some(r.to_path_buf());
        cfg.synth = None;
    }
    Ok(cfg.setup()?)
}

fn out_file(cli: &Cli, name: &str) -> Result<PathBuf> {
    fs::create_dir_all(&cli.out).with_context(|| format!("cannot create {}", cli.out.display()))?;
    Ok(cli.out.join(name))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").with_context(|| format!("cannot write {}", path.display()))
}

fn cmd_replay(cli: &Cli, recording: Option<&Path>) -> Result<i32> {
    let s = setup(cli, recording)?;
    let trace = match cli.speed {
        None => s.run()?,
        Some(speed) => paced_run(&s, speed)?,
    };
    let m = metrics(&trace);
    let csv = out_file(cli, "trace.csv")?;
    trace
        .write_csv(BufWriter::new(File::create(&csv).with_context(|| format!("cannot write {}", csv.display()))?))
        .with_context(|| format!("cannot write {}", csv.display()))?;
    write_json(&out_file(cli, "metrics.json")?, &m)?;
    println!(
        "{} ticks, ee mae {:.3e} m / {:.3e} rad, elbow mae {:.3e} rad, invariants {}",
        m.ticks,
        m.ee_position_mae,
        m.ee_orientation_mae,
        m.elbow_angle_mae,
        if m.invariants_hold() { "hold" } else { "violated" }
    );
    Ok(if m.invariants_hold() { EXIT_OK } else { EXIT_CHECK_FAILED })
}

/// Same ticks as the offline run, with each one released at its wall-clock time.
fn paced_run(s: &Setup, speed: f64) -> Result<crate::sim::SimTrace> {
    let mut sim = Simulator::new(s.model.clone(), s.correspondence.clone(), s.sim.clone(), s.q0.clone(), s.base0)?;
    let dt = s.sim.dt();
    let duration = s.sim.sim.duration.unwrap_or_else(|| s.stream.last().map_or(0.0, |o| o.timestamp));
    let ticks = (duration * s.sim.sim.control_rate + 1e-9).floor() as u64;
    let start = Instant::now();
    let mut next = 0;
    let mut records = Vec::with_capacity(ticks as usize);
    for k in 0..ticks {
        let t = k as f64 * dt;
        let due = Duration::from_secs_f64(t / speed);
        if let Some(wait) = due.checked_sub(start.elapsed()) {
            std::thread::sleep(wait);
        }
        let mut obs = None;
        while next < s.stream.len() && s.stream[next].timestamp <= t + 1e-12 {
            obs = Some(&s.stream[next]);
            next += 1;
        }
        records.push(sim.step(obs));
    }
    let adm = sim.admittance();
    Ok(crate::sim::SimTrace {
        dof: s.model.dof(),
        records,
        admittance_violations: adm.violations(),
        admittance_faults: adm.faults(),
        collision_threshold: s.sim.wbc.collision_threshold,
    })
}

fn cmd_check_stability(cli: &Cli) -> Result<i32> {
    let cfg = load_config(cli)?;
    cfg.admittance.validate()?;
    let c = cfg.admittance.check_sufficient_stability();
    println!("lhs = {}", c.lhs);
    println!("rhs = {}", c.rhs);
    println!("holds = {}", c.holds);
    Ok(if c.holds { EXIT_OK } else { EXIT_CHECK_FAILED })
}

/// Admittance parameter grid. Absent keys keep the config value; a present key with an
/// empty list, or a file with no keys, describes an empty grid.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepGrid {
    pub k_min: Option<Vec<f64>>,
    pub k_max: Option<Vec<f64>>,
    pub a: Option<Vec<f64>>,
    pub b: Option<Vec<f64>>,
    pub c_minus: Option<Vec<f64>>,
    pub c_plus: Option<Vec<f64>>,
    pub zeta: Option<Vec<f64>>,
    pub m: Option<Vec<f64>>,
}

impl SweepGrid {
    fn axes(&self) -> [(&'static str, &Option<Vec<f64>>); 8] {
        [
            ("k_min", &self.k_min),
            ("k_max", &self.k_max),
            ("a", &self.a),
            ("b", &self.b),
            ("c_minus", &self.c_minus),
            ("c_plus", &self.c_plus),
            ("zeta", &self.zeta),
            ("m", &self.m),
        ]
    }

    /// Cartesian product over the listed axes, in file-independent axis order.
    pub fn points(&self, base: &AdmittanceParams) -> Vec<AdmittanceParams> {
        let axes: Vec<_> = self.axes().into_iter().filter_map(|(n, v)| v.as_ref().map(|v| (n, v))).collect();
        if axes.is_empty() {
            return Vec::new();
        }
        let mut out = vec![*base];
        for (name, values) in axes {
            let mut next = Vec::with_capacity(out.len() * values.len());
            for p in &out {
                for &v in values {
                    let mut q = *p;
                    *field(&mut q, name) = v;
                    next.push(q);
                }
            }
            out = next;
        }
        out
    }
}

fn field<'a>(p: &'a mut AdmittanceParams, name: &str) -> &'a mut f64 {
    match name {
        "k_min" => &mut p.k_min,
        "k_max" => &mut p.k_max,
        "a" => &mut p.a,
        "b" => &mut p.b,
        "c_minus" => &mut p.c_minus,
        "c_plus" => &mut p.c_plus,
        "zeta" => &mut p.zeta,
        _ => &mut p.m,
    }
}

/// Pull used for the sweep when the config has no episode.
pub fn default_grasp_episode() -> Episode {
    Episode {
        wrench: vec![WrenchEvent {
            start: 2.0,
            duration: 3.0,
            force: [15.0, 0.0, 0.0],
            torque: [0.0; 3],
        }],
    }
}

pub const DEFAULT_GRASP_DURATION: f64 = 25.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GraspResponse {
    pub max_offset: f64,
    pub final_offset: f64,
    pub violations: u64,
    /// Finite throughout, bounded below 1e3 and settled below 1e-3 at the end.
    pub stable: bool,
}

/// Drives the admittance filter alone with the episode's force on a fixed reference.
pub fn grasp_response(params: &AdmittanceParams, episode: &Episode, duration: f64, control_rate: f64) -> Result<GraspResponse, crate::admittance::AdmittanceError> {
    let mut adm = Admittance::new(*params)?;
    let dt = 1.0 / control_rate;
    let ticks = (duration * control_rate + 1e-9).floor() as u64;
    let x_ref = Transform::identity();
    let mut last_sample = None;
    let mut max_offset: f64 = 0.0;
    let mut norm = 0.0;
    let mut finite = true;
    for k in 0..ticks {
        let t = k as f64 * dt;
        let idx = (t * params.sample_rate + 1e-9).floor() as u64;
        let sample = (last_sample != Some(idx)).then(|| {
            last_sample = Some(idx);
            episode.wrench_at(idx as f64 / params.sample_rate)
        });
        let out = adm.step(&x_ref, sample, dt)?;
        norm = out.telemetry.e.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !norm.is_finite() {
            finite = false;
            break;
        }
        max_offset = max_offset.max(norm);
    }
    Ok(GraspResponse {
        max_offset,
        final_offset: norm,
        violations: adm.violations(),
        stable: finite && max_offset < 1e3 && norm < 1e-3,
    })
}

pub const SWEEP_HEADER: &str = "k_min,k_max,a,b,c_minus,c_plus,zeta,m,lhs,rhs,holds,stable,max_offset,final_offset,violations";

fn cmd_sweep(cli: &Cli, grid: &Path) -> Result<i32> {
    let cfg = load_config(cli)?;
    let text = fs::read_to_string(grid).with_context(|| format!("cannot read {}", grid.display()))?;
    let grid: SweepGrid = toml::from_str(&text).with_context(|| format!("{}", grid.display()))?;
    let episode = if cfg.episode.wrench.is_empty() { default_grasp_episode() } else { cfg.episode.clone() };
    let duration = cfg.sim.duration.unwrap_or(DEFAULT_GRASP_DURATION);
    let path = out_file(cli, "sweep.csv")?;
    let mut w = BufWriter::new(File::create(&path).with_context(|| format!("cannot write {}", path.display()))?);
    writeln!(w, "{SWEEP_HEADER}")?;
    let mut rows = 0;
    for p in grid.points(&cfg.admittance) {
        let c = p.check_sufficient_stability();
        match grasp_response(&p, &episode, duration, cfg.sim.control_rate) {
            Ok(r) => writeln!(
                w,
                "{:?},{:?},{:?},{:?},{:?},{:?},{:?},{:?},{:?},{:?},{},{},{:?},{:?},{}",
                p.k_min, p.k_max, p.a, p.b, p.c_minus, p.c_plus, p.zeta, p.m, c.lhs, c.rhs, c.holds, r.stable, r.max_offset, r.final_offset, r.violations
            )?,
            Err(e) => log::warn!("skipping grid point: {e}"),
        }
        rows += 1;
    }
    w.flush()?;
    println!("{rows} grid points -> {}", path.display());
    Ok(EXIT_OK)
}

fn cmd_serve(cli: &Cli, clock: ClockArg, duration: Option<f64>) -> Result<i32> {
    let s = setup(cli, None)?;
    let addr = cli.listen.unwrap_or_else(|| DEFAULT_LISTEN.parse().expect("valid default address"));
    let mut opts = ServeOptions::new(addr);
    opts.clock = match clock {
        ClockArg::Wall => Clock::Wall,
        ClockArg::Stream => Clock::Stream,
    };
    opts.duration = duration.or(s.sim.sim.duration);
    let server = Server::bind(addr)?;
    log::info!("listening on {}", server.local_addr());
    let stop = Arc::new(AtomicBool::new(false));
    let flag = stop.clone();
    if let Err(e) = ctrlc::set_handler(move || flag.store(true, Ordering::Relaxed)) {
        log::warn!("no interrupt handler: {e}");
    }
    let path = out_file(cli, "telemetry.csv")?;
    let mut w = BufWriter::new(File::create(&path).with_context(|| format!("cannot write {}", path.display()))?);
    writeln!(w, "{}", csv_header(s.model.dof()))?;
    let summary = server.run(&s, &opts, &stop, |r| writeln!(w, "{}", r.csv_row()))?;
    w.flush()?;
    write_json(&out_file(cli, "metrics.json")?, &summary.metrics)?;
    println!(
        "{} ticks, {} datagrams ({} rejected, {} out of order, {} overwritten)",
        summary.metrics.ticks, summary.received, summary.decode_errors, summary.out_of_order, summary.overwrites
    );
    Ok(EXIT_OK)
}

fn cmd_calibrate(cli: &Cli, args: &CalibrateArgs) -> Result<i32> {
    let model = match &args.model {
        Some(p) => RobotModel::load(p)?,
        None => RobotModel::default_model(),
    };
    let example = match &args.robot {
        Some(p) => RobotExample::load(p)?,
        None => RobotExample::default_example(),
    };
    let person = match &args.person {
        Some(p) => {
            let mut obs = recording::load(p)?;
            if obs.len() != 1 {
                bail!("{}: expected one observation, found {}", p.display(), obs.len());
            }
            obs.remove(0)
        }
        None => crate::config::default_person_example(),
    };
    let side = match args.side {
        SideArg::Right => Side::Right,
        SideArg::Left => Side::Left,
    };
    let poses = example.role_poses(&model)?;
    let cfg: CorrespondenceConfig = calibrate(&person, &poses, model.lengths, side, args.torso_at_shoulder)?;
    let path = out_file(cli, "correspondence.toml")?;
    fs::write(&path, cfg.to_toml_string()).with_context(|| format!("cannot write {}", path.display()))?;
    println!("wrote {}", path.display());
    Ok(EXIT_OK)
}

fn cmd_synth(cli: &Cli) -> Result<i32> {
    let s = setup(cli, None)?;
    let path = out_file(cli, "synth.jsonl")?;
    recording::save(&path, &s.stream).with_context(|| format!("cannot write {}", path.display()))?;
    println!("{} observations -> {}", s.stream.len(), path.display());
    Ok(EXIT_OK)
}

fn cmd_send(cli: &Cli, recording: Option<&Path>) -> Result<i32> {
    let s = setup(cli, recording)?;
    let addr = cli.listen.unwrap_or_else(|| DEFAULT_LISTEN.parse().expect("valid default address"));
    let mut tx = Sender::connect(addr).with_context(|| format!("cannot send to {addr}"))?;
    let mut err = None;
    let mut refused = 0u64;
    Replay::new(s.stream, cli.speed.unwrap_or(1.0)).play(|o| match tx.send(o) {
        Ok(()) => true,
        // nobody listening yet, or any more: keep pacing like a live source would
        Err(e) if e.kind() == std::io::ErrorKind::ConnectionRefused => {
            refused += 1;
            true
        }
        Err(e) => {
            err = Some(e);
            false
        }
    });
    if let Some(e) = err {
        bail!("send to {addr}: {e}");
    }
    if refused > 0 {
        log::warn!("{refused} datagrams refused by {addr}");
    }
    Ok(EXIT_OK)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_product_and_empty() {
        let base = AdmittanceParams::default();
        let g: SweepGrid = toml::from_str("k_min = [10.0, 20.0]\nc_minus = [-0.2, -10.0, -1.0]").unwrap();
        let pts = g.points(&base);
        assert_eq!(pts.len(), 6);
        assert!(pts.iter().all(|p| p.k_max == base.k_max));
        assert_eq!((pts[5].k_min, pts[5].c_minus), (20.0, -1.0));
        assert!(SweepGrid::default().points(&base).is_empty());
        let g: SweepGrid = toml::from_str("a = []\nb = [1.0]").unwrap();
        assert!(g.points(&base).is_empty());
        assert!(toml::from_str::<SweepGrid>("kmin = [1.0]").is_err());
    }

    #[test]
    fn default_point_settles() {
        let p = AdmittanceParams::default();
        let r = grasp_response(&p, &default_grasp_episode(), DEFAULT_GRASP_DURATION, 100.0).unwrap();
        assert!(r.stable, "{r:?}");
        assert_eq!(r.violations, 0);
        // 15 N on the most compliant spring, a little short of the full f / k_min
        assert!(r.max_offset > 0.5 && r.max_offset < 1.5, "{r:?}");
    }

    #[test]
    fn usage_errors_exit_2() {
        assert_eq!(main_with(["rtwbc", "no-such-command"]), EXIT_USAGE);
        assert_eq!(main_with(["rtwbc", "replay", "--speed", "fast"]), EXIT_USAGE);
        assert_eq!(main_with(["rtwbc", "--help"]), EXIT_OK);
    }
}
