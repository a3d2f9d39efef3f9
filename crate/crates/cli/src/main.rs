//! `handcal`: simulate, stream, record, calibrate, reconstruct and evaluate
//! glove sessions.
//!
//! Exit codes: 0 success, 1 usage, 2 configuration, 3 data.

mod config;
mod error;
mod evaluate;
mod session;
mod stream;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use handcal::acquisition::{read_recording, record, replay, session_packets, ReplaySpeed};
use handcal::diffhcal::{calibrate_session, save_calibration, CalibrationOptions};
use handcal::glove_sim::simulate;
use handcal::hand_model::{save_model, PoseParams};
use serde::Serialize;
use serde_json::json;

use config::SessionConfig;
use error::{CliError, CliResult};
use session::{print_json, write_json, write_json_compact, AnswerKey, SCHEMA_VERSION};

#[derive(Args)]
struct Common {
    /// Session configuration JSON; flags override its values.
    #[arg(long, value_name = "JSON", global = true)]
    config: Option<PathBuf>,
    /// Hand model file (default: the built-in model).
    #[arg(long, global = true)]
    model: Option<PathBuf>,
}

#[derive(Args)]
struct ScenarioArgs {
    /// Preset name (calibration, session, hinge, drift) or scenario file.
    #[arg(long)]
    scenario: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct InputArgs {
    /// Recording file (.fsgr).
    #[arg(long)]
    recording: Option<PathBuf>,
    /// Calibration written by calibrate.
    #[arg(long)]
    calibration: Option<PathBuf>,
    /// Synchronization window in nanoseconds.
    #[arg(long)]
    window_ns: Option<u64>,
}

#[derive(Args)]
struct OutputArg {
    /// Directory for the files this command writes.
    #[arg(long, value_name = "DIR")]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct LiveArgs {
    /// Port to listen on; 0 picks a free one.
    #[arg(long)]
    port: Option<u16>,
    #[arg(long, default_value = "127.0.0.1")]
    bind: String,
    #[arg(long, value_enum, default_value_t = Speed::Realtime)]
    speed: Speed,
    /// Hold the stream until this many clients have connected.
    #[arg(long, default_value_t = 0)]
    wait_clients: usize,
}

#[derive(Clone, Copy, ValueEnum)]
enum Speed {
    Realtime,
    Max,
}

impl From<Speed> for ReplaySpeed {
    fn from(s: Speed) -> Self {
        match s {
            Speed::Realtime => ReplaySpeed::Realtime,
            Speed::Max => ReplaySpeed::Max,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum EvalKind {
    Joint,
    Shape,
    Pinch,
    Interaction,
    Drift,
}

impl EvalKind {
    fn name(self) -> &'static str {
        match self {
            EvalKind::Joint => "joint",
            EvalKind::Shape => "shape",
            EvalKind::Pinch => "pinch",
            EvalKind::Interaction => "interaction",
            EvalKind::Drift => "drift",
        }
    }
}

const DEFAULT_PORT: u16 = 7878;
const DEFAULT_MESH_EVERY: usize = 10;

#[derive(Subcommand)]
enum Cmd {
    /// Simulate a session: writes recording.fsgr and the answer key truth.json.
    Simulate {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[command(flatten)]
        output: OutputArg,
    },
    /// Stream a simulated session over TCP.
    Serve {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[command(flatten)]
        live: LiveArgs,
    },
    /// Record a live stream to recording.fsgr.
    Record {
        /// Server address, host:port.
        #[arg(long)]
        connect: Option<String>,
        #[command(flatten)]
        output: OutputArg,
    },
    /// Summarize a recording, or stream it over TCP with --port.
    Replay {
        #[arg(long)]
        recording: Option<PathBuf>,
        #[arg(long)]
        window_ns: Option<u64>,
        #[command(flatten)]
        live: LiveArgs,
    },
    /// Calibrate from a recording's reference and pinch segments: writes calibration.json.
    Calibrate {
        #[command(flatten)]
        input: InputArgs,
        /// Fit alignment only, even if pinches were recorded.
        #[arg(long)]
        skip_shape: bool,
        #[command(flatten)]
        output: OutputArg,
    },
    /// Reconstruct every frame: writes poses.json and, with --meshes, OBJ files.
    Reconstruct {
        #[command(flatten)]
        input: InputArgs,
        /// Export a mesh every --mesh-every frames.
        #[arg(long)]
        meshes: bool,
        #[arg(long)]
        mesh_every: Option<usize>,
        #[command(flatten)]
        output: OutputArg,
    },
    /// Compare a reconstruction with the answer key: writes report_<kind>.json.
    Evaluate {
        #[arg(value_enum)]
        kind: EvalKind,
        #[command(flatten)]
        input: InputArgs,
        /// Answer key written by simulate.
        #[arg(long)]
        truth: Option<PathBuf>,
        /// Object mesh (OBJ, mm) for the interaction report.
        #[arg(long)]
        object: Option<PathBuf>,
        /// Seed for the synthetic point clouds of the shape report.
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        output: OutputArg,
    },
    /// Write the hand model to model.json.
    ExportModel {
        #[command(flatten)]
        output: OutputArg,
    },
}

fn set<T>(slot: &mut Option<T>, flag: Option<T>) {
    if flag.is_some() {
        *slot = flag;
    }
}

/// Configuration file values with the flags laid over them.
fn session_config(common: &Common, cmd: &Cmd) -> CliResult<SessionConfig> {
    let mut cfg = SessionConfig::load(common.config.as_deref())?;
    set(&mut cfg.model, common.model.clone());
    let scenario_args = |s: &ScenarioArgs, cfg: &mut SessionConfig| {
        set(&mut cfg.scenario, s.scenario.clone());
        set(&mut cfg.seed, s.seed);
    };
    let input_args = |i: &InputArgs, cfg: &mut SessionConfig| {
        set(&mut cfg.recording, i.recording.clone());
        set(&mut cfg.calibration, i.calibration.clone());
        set(&mut cfg.window_ns, i.window_ns);
    };
    match cmd {
        Cmd::Simulate { scenario, output } => {
            scenario_args(scenario, &mut cfg);
            set(&mut cfg.output_dir, output.output.clone());
        }
        Cmd::Serve { scenario, live } => {
            scenario_args(scenario, &mut cfg);
            set(&mut cfg.port, live.port);
        }
        Cmd::Record { output, .. } | Cmd::ExportModel { output } => {
            set(&mut cfg.output_dir, output.output.clone())
        }
        Cmd::Replay {
            recording,
            window_ns,
            live,
        } => {
            set(&mut cfg.recording, recording.clone());
            set(&mut cfg.window_ns, *window_ns);
            set(&mut cfg.port, live.port);
        }
        Cmd::Calibrate { input, output, .. } => {
            input_args(input, &mut cfg);
            set(&mut cfg.output_dir, output.output.clone());
        }
        Cmd::Reconstruct {
            input,
            mesh_every,
            output,
            ..
        } => {
            input_args(input, &mut cfg);
            set(&mut cfg.mesh_every, *mesh_every);
            set(&mut cfg.output_dir, output.output.clone());
        }
        Cmd::Evaluate {
            input,
            truth,
            object,
            seed,
            output,
            ..
        } => {
            input_args(input, &mut cfg);
            set(&mut cfg.truth, truth.clone());
            set(&mut cfg.object, object.clone());
            set(&mut cfg.seed, *seed);
            set(&mut cfg.output_dir, output.output.clone());
        }
    }
    Ok(cfg)
}

#[derive(Parser)]
#[command(
    name = "handcal",
    version,
    about = "IMU glove calibration and reconstruction"
)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Cmd,
}

fn main() {
    let args = match Cli::try_parse() {
        Ok(a) => a,
        Err(e) => {
            let code = if e.use_stderr() { error::EXIT_USAGE } else { 0 };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    if let Err(e) = run(args) {
        eprintln!("error: {e}");
        std::process::exit(e.code);
    }
}

fn run(args: Cli) -> CliResult<()> {
    let cfg = session_config(&args.common, &args.command)?;
    match &args.command {
        Cmd::Simulate { .. } => cmd_simulate(&cfg),
        Cmd::Serve { live, .. } => cmd_serve(&cfg, live),
        Cmd::Record { connect, .. } => cmd_record(&cfg, connect.as_deref()),
        Cmd::Replay { live, .. } => cmd_replay(&cfg, live),
        Cmd::Calibrate { skip_shape, .. } => cmd_calibrate(&cfg, *skip_shape),
        Cmd::Reconstruct { meshes, .. } => cmd_reconstruct(&cfg, *meshes),
        Cmd::Evaluate { kind, .. } => cmd_evaluate(&cfg, *kind),
        Cmd::ExportModel { .. } => cmd_export_model(&cfg),
    }
}

#[derive(Serialize)]
struct SegmentSummary {
    kind: String,
    start_ns: u64,
    end_ns: u64,
}

fn cmd_simulate(cfg: &SessionConfig) -> CliResult<()> {
    let model = cfg.model()?;
    let scenario = cfg.scenario()?;
    let dir = cfg.output_dir()?;
    let session = simulate(&scenario, &model).map_err(|e| CliError::config(e.to_string()))?;
    let packets = session_packets(&session);
    record(&packets, &dir.join("recording.fsgr")).map_err(|e| CliError::data(e.to_string()))?;
    let segments: Vec<SegmentSummary> = session
        .trajectory
        .segments
        .iter()
        .map(|s| SegmentSummary {
            kind: s.kind.name(),
            start_ns: s.start_ns,
            end_ns: s.end_ns,
        })
        .collect();
    let key = AnswerKey {
        schema_version: SCHEMA_VERSION,
        model_hash: model.content_hash(),
        beta: session.trajectory.beta.clone(),
        extrinsics: session.extrinsics,
        trajectory: session.trajectory,
        scenario,
    };
    write_json_compact(&dir.join("truth.json"), &key)?;
    print_json(&json!({
        "schema_version": SCHEMA_VERSION,
        "recording": "recording.fsgr",
        "truth": "truth.json",
        "seed": key.scenario.seed,
        "packets": packets.len(),
        "frames": key.trajectory.frames.len(),
        "segments": segments,
    }))
}

fn cmd_serve(cfg: &SessionConfig, live: &LiveArgs) -> CliResult<()> {
    let model = cfg.model()?;
    let scenario = cfg.scenario()?;
    let session = simulate(&scenario, &model).map_err(|e| CliError::config(e.to_string()))?;
    let packets = session_packets(&session);
    let options = stream::ServeOptions {
        bind: live.bind.clone(),
        port: cfg.port.unwrap_or(DEFAULT_PORT),
        speed: live.speed.into(),
        wait_clients: live.wait_clients,
    };
    let summary = stream::serve(packets.into_iter().map(Ok), &options)?;
    print_json(&summary)
}

fn cmd_record(cfg: &SessionConfig, connect: Option<&str>) -> CliResult<()> {
    let address = connect.ok_or_else(|| CliError::usage("no server address given (--connect)"))?;
    let dir = cfg.output_dir()?;
    let (summary, problem) = stream::record_stream(address, &dir.join("recording.fsgr"))?;
    print_json(&summary)?;
    match problem {
        None => Ok(()),
        Some(p) => Err(CliError::data(format!(
            "stream ended early ({p}); kept {} complete packets in recording.fsgr",
            summary.packets
        ))),
    }
}

fn cmd_replay(cfg: &SessionConfig, live: &LiveArgs) -> CliResult<()> {
    let path = cfg.recording()?;
    if let Some(port) = cfg.port {
        let source = replay(path, ReplaySpeed::Max).map_err(|e| CliError::data(e.to_string()))?;
        let options = stream::ServeOptions {
            bind: live.bind.clone(),
            port,
            speed: live.speed.into(),
            wait_clients: live.wait_clients,
        };
        let summary = stream::serve(
            source.map(|p| p.map_err(|e| CliError::data(e.to_string()))),
            &options,
        )?;
        return print_json(&summary);
    }
    let packets =
        read_recording(path).map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
    let out = handcal::acquisition::ingest(&packets, cfg.sync());
    let markers: Vec<_> = out
        .markers
        .iter()
        .map(|m| json!({ "kind": m.kind.name(), "start_ns": m.start_ns }))
        .collect();
    print_json(&json!({
        "schema_version": SCHEMA_VERSION,
        "packets": packets.len(),
        "frames": out.frames.len(),
        "markers": markers,
        "clock_corrections": out.clock_log.len(),
        "report": out.report,
    }))
}

fn cmd_calibrate(cfg: &SessionConfig, skip_shape: bool) -> CliResult<()> {
    let model = cfg.model()?;
    let out = session::load_frames(cfg.recording()?, cfg.sync())?;
    let options = CalibrationOptions {
        skip_shape,
        ..CalibrationOptions::default()
    };
    let cal = calibrate_session(&model, &out.frames, &out.markers, &options)
        .map_err(session::solver_error)?;
    let dir = cfg.output_dir()?;
    save_calibration(&cal, dir.join("calibration.json"))
        .map_err(|e| CliError::data(e.to_string()))?;

    let per_sensor: Vec<f64> = cal
        .alignment
        .residuals_deg
        .iter()
        .map(|r| r.iter().copied().fold(0.0, f64::max))
        .collect();
    for (i, r) in per_sensor.iter().enumerate() {
        eprintln!("sensor {i:2}: max residual {r:.3} deg");
    }
    for n in &cal.notices {
        eprintln!("notice: {n}");
    }
    let poses: Vec<String> = cal.alignment.poses.iter().map(|k| k.name()).collect();
    print_json(&json!({
        "schema_version": SCHEMA_VERSION,
        "calibration": "calibration.json",
        "model_hash": cal.model_hash,
        "frames": out.frames.len(),
        "poses": poses,
        "residuals_deg": cal.alignment.residuals_deg,
        "max_residual_deg": cal.alignment.max_residual_deg(),
        "alignment_iterations": cal.alignment.iterations,
        "shape": cal.shape.as_ref().map(|s| json!({
            "beta": s.beta, "energy": s.energy, "iterations": s.iterations, "converged": s.converged,
        })),
        "tracker_aligned": cal.dorsal.is_some(),
        "notices": cal.notices,
    }))
}

#[derive(Serialize)]
struct PoseFrame<'a> {
    index: usize,
    timestamp_ns: u64,
    pose: &'a PoseParams,
}

fn cmd_reconstruct(cfg: &SessionConfig, meshes: bool) -> CliResult<()> {
    let model = cfg.model()?;
    let cal = session::load_session_calibration(cfg.calibration()?, &model)?;
    let out = session::load_frames(cfg.recording()?, cfg.sync())?;
    let poses = session::reconstruct(&model, &out.frames, &cal)?;
    let dir = cfg.output_dir()?;
    let beta = cal.beta(&model);
    let frames: Vec<PoseFrame> = out
        .frames
        .iter()
        .zip(&poses)
        .enumerate()
        .map(|(index, (f, pose))| PoseFrame {
            index,
            timestamp_ns: f.timestamp_ns,
            pose,
        })
        .collect();
    write_json_compact(
        &dir.join("poses.json"),
        &json!({ "schema_version": SCHEMA_VERSION, "model_hash": cal.model_hash, "beta": beta, "frames": frames }),
    )?;
    let mut exported = 0;
    if meshes {
        let every = cfg.mesh_every.unwrap_or(DEFAULT_MESH_EVERY);
        if every == 0 {
            return Err(CliError::usage("--mesh-every must be at least 1"));
        }
        let mesh_dir = dir.join("meshes");
        std::fs::create_dir_all(&mesh_dir)
            .map_err(|e| CliError::data(format!("{}: {e}", mesh_dir.display())))?;
        for (index, pose) in poses.iter().enumerate().step_by(every) {
            let mesh = model
                .build_mesh(&beta, pose)
                .map_err(|e| CliError::data(e.to_string()))?;
            let path = mesh_dir.join(format!("frame_{index:06}.obj"));
            std::fs::write(&path, mesh.to_obj())
                .map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
            exported += 1;
        }
    }
    print_json(&json!({
        "schema_version": SCHEMA_VERSION,
        "poses": "poses.json",
        "frames": poses.len(),
        "meshes": exported,
    }))
}

fn cmd_evaluate(cfg: &SessionConfig, kind: EvalKind) -> CliResult<()> {
    let model = cfg.model()?;
    let key = AnswerKey::load(cfg.truth()?)?;
    if key.model_hash != model.content_hash() {
        return Err(CliError::config(format!(
            "answer key was made with model {}, not {}",
            key.model_hash,
            model.content_hash()
        )));
    }
    let cal = session::load_session_calibration(cfg.calibration()?, &model)?;
    let object = match kind {
        EvalKind::Interaction => Some(evaluate::load_obj(cfg.object()?)?),
        _ => None,
    };
    let out = session::load_frames(cfg.recording()?, cfg.sync())?;
    let poses = session::reconstruct(&model, &out.frames, &cal)?;
    let inputs = evaluate::Inputs::new(&model, &key, &cal, &out.frames, &poses);
    let report = match kind {
        EvalKind::Joint => evaluate::joint(&inputs)?,
        EvalKind::Shape => evaluate::shape(&inputs, cfg.seed.unwrap_or(0))?,
        EvalKind::Pinch => evaluate::pinch(&inputs)?,
        EvalKind::Interaction => evaluate::interaction(&inputs, object.expect("loaded above"))?,
        EvalKind::Drift => evaluate::drift(&inputs)?,
    };
    let name = format!("report_{}.json", kind.name());
    write_json(&cfg.output_dir()?.join(&name), &report)?;
    // the headline numbers, without the per-frame series
    let mut headline = report;
    if let Some(obj) = headline.as_object_mut() {
        obj.retain(|k, _| !matches!(k.as_str(), "series" | "poses" | "report"));
        obj.insert("report".into(), json!(name));
    }
    print_json(&headline)
}

fn cmd_export_model(cfg: &SessionConfig) -> CliResult<()> {
    let model = cfg.model()?;
    let dir = cfg.output_dir()?;
    save_model(&model, dir.join("model.json")).map_err(|e| CliError::data(e.to_string()))?;
    print_json(
        &json!({ "schema_version": SCHEMA_VERSION, "model": "model.json", "model_hash": model.content_hash() }),
    )
}
