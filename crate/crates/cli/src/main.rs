//! Experiment driver for the Fuzzy-PI controller model.
//!
//! Subcommands map onto the three validation experiments plus the synthesis
//! cost models:
//!   surface    — input/output maps of the fixed-point and reference engines
//!   mse-sweep  — grid error against the reference across (N, T)
//!   robot      — closed-loop manipulator runs per fractional width
//!   costmodel  — plane estimates and dynamic-power ratios
//!
//! Exit codes: 0 success, 2 configuration error, 3 numeric divergence.

use std::fmt::Display;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::thread;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use tsfpi::config::{ConfigError, ExperimentFile};
use tsfpi::controller::{ControllerConfig, ExecMode};
use tsfpi::costmodel::{self, PlaneModel, Quantity, Variant};
use tsfpi::fixedpoint::RoundingMode;
use tsfpi::inference::{RuleBase, RuleRow};
use tsfpi::membership::{MembershipBank, MfShape};
use tsfpi::oracle::{mse_sweep, surface_map};
use tsfpi::plant::{simulate_closed_loop, trajectory_divergence, LoopEngine, SimError, SimRun};

#[derive(Parser)]
#[command(name = "tsfpi", version, about = "Fuzzy-PI controller experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write the fixed-point and reference input/output surface maps.
    Surface(SurfaceArgs),
    /// Sweep (N, T) and report grid MSE against the reference engine.
    MseSweep(CommonArgs),
    /// Run the closed-loop manipulator experiment per fractional width.
    Robot(RobotArgs),
    /// Synthesis cost models.
    Costmodel {
        #[command(subcommand)]
        command: CostmodelCommand,
    },
}

#[derive(Args)]
struct CommonArgs {
    /// Experiment config file (TOML); defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct SurfaceArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long)]
    n_bits: Option<u8>,
    #[arg(long)]
    t_bits: Option<u8>,
    #[arg(long)]
    grid_points: Option<usize>,
}

#[derive(Args)]
struct RobotArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long)]
    kp: Option<f64>,
    #[arg(long)]
    ki: Option<f64>,
    /// Sample time in seconds.
    #[arg(long)]
    ts: Option<f64>,
    #[arg(long)]
    t_bits: Option<u8>,
    /// Fractional widths to run (repeatable), e.g. --n-bits 12 --n-bits 16.
    #[arg(long = "n-bits")]
    n_bits: Vec<u8>,
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    #[arg(long)]
    vmin: Option<f64>,
    #[arg(long)]
    vmax: Option<f64>,
    /// Also write per-step controller internals for joint 1.
    #[arg(long)]
    step_log: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Oneshot,
    Pipeline,
}

#[derive(Subcommand)]
enum CostmodelCommand {
    /// Evaluate the fitted planes at one (N, T) point.
    Estimate {
        #[arg(long, value_enum)]
        variant: VariantArg,
        #[arg(long)]
        n: f64,
        #[arg(long)]
        t: f64,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum VariantArg {
    Os,
    P,
}

enum CliError {
    Config(String),
    Divergence(String),
    Io(std::io::Error),
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e)
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match &e {
            SimError::NonFinite { .. } | SimError::SingularInertia { .. } => {
                CliError::Divergence(e.to_string())
            }
            _ => CliError::Config(e.to_string()),
        }
    }
}

fn config_err(e: impl Display) -> CliError {
    CliError::Config(e.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Surface(args) => run_surface(args),
        Command::MseSweep(args) => run_mse_sweep(args),
        Command::Robot(args) => run_robot(args),
        Command::Costmodel { command } => run_costmodel(command),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Config(msg)) => {
            eprintln!("config error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Divergence(msg)) => {
            eprintln!("numeric divergence: {msg}");
            ExitCode::from(3)
        }
        Err(CliError::Io(e)) => {
            eprintln!("io error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn load_file(path: &Option<PathBuf>) -> Result<ExperimentFile, CliError> {
    match path {
        Some(p) => Ok(ExperimentFile::load(p)?),
        None => Ok(ExperimentFile::default()),
    }
}

fn compile_machine(
    shapes: &[Vec<MfShape>],
    rows: &[RuleRow],
    n_bits: u8,
    t_bits: u8,
    mode: RoundingMode,
) -> Result<(MembershipBank, RuleBase), CliError> {
    let bank = MembershipBank::compile(shapes, n_bits, t_bits, mode).map_err(config_err)?;
    let rules = RuleBase::compile(
        rows,
        bank.functions(0).len(),
        bank.functions(1).len(),
        t_bits,
        mode,
    )
    .map_err(config_err)?;
    Ok((bank, rules))
}

fn csv_writer(dir: &Path, name: &str, schema: &str) -> Result<BufWriter<File>, CliError> {
    fs::create_dir_all(dir)?;
    let mut w = BufWriter::new(File::create(dir.join(name))?);
    writeln!(w, "# schema: {schema}")?;
    Ok(w)
}

fn run_surface(args: SurfaceArgs) -> Result<(), CliError> {
    let file = load_file(&args.common.config)?;
    let cfg = file.controller;
    cfg.validate().map_err(config_err)?;
    let n_bits = args.n_bits.unwrap_or(cfg.n_bits);
    let t_bits = args.t_bits.unwrap_or(cfg.t_bits);
    let points = args.grid_points.unwrap_or(file.experiment.grid_points);

    let surface = surface_map(
        &file.bank_shapes(),
        &file.rule_rows(),
        n_bits,
        t_bits,
        cfg.rounding,
        points,
    )
    .map_err(config_err)?;

    let dir = &args.common.out;
    let mut fixed = csv_writer(dir, "surface_fixed.csv", "tsfpi.surface.v1")?;
    let mut reference = csv_writer(dir, "surface_reference.csv", "tsfpi.surface.v1")?;
    let mut map = csv_writer(dir, "surface_map.csv", "tsfpi.surface_map.v1")?;
    writeln!(fixed, "x0,x1,v_d")?;
    writeln!(reference, "x0,x1,v_d")?;
    writeln!(map, "x0,x1,v_d_fixed,v_d_oracle")?;
    for row in &surface {
        writeln!(fixed, "{},{},{}", row.x0, row.x1, row.v_fixed)?;
        writeln!(reference, "{},{},{}", row.x0, row.x1, row.v_reference)?;
        writeln!(
            map,
            "{},{},{},{}",
            row.x0, row.x1, row.v_fixed, row.v_reference
        )?;
    }
    println!(
        "surface: {} points at N={n_bits}, T={t_bits} -> {}",
        surface.len(),
        dir.display()
    );
    Ok(())
}

fn run_mse_sweep(args: CommonArgs) -> Result<(), CliError> {
    let file = load_file(&args.config)?;
    let cfg = file.controller;
    cfg.validate().map_err(config_err)?;
    let reports = mse_sweep(
        &file.experiment.n_sweep,
        &file.experiment.t_sweep,
        &file.bank_shapes(),
        &file.rule_rows(),
        cfg.rounding,
        file.experiment.grid_points,
    )
    .map_err(config_err)?;

    let mut w = csv_writer(&args.out, "mse_sweep.csv", "tsfpi.mse_sweep.v1")?;
    writeln!(w, "n,t,mse,max_abs_err")?;
    for r in &reports {
        writeln!(
            w,
            "{},{},{:e},{:e}",
            r.n_bits, r.t_bits, r.mse, r.max_abs_err
        )?;
    }
    println!(
        "mse-sweep: {} configurations -> {}",
        reports.len(),
        args.out.display()
    );
    Ok(())
}

#[derive(Serialize)]
struct SegmentSummary {
    joint: usize,
    segment: usize,
    sp_deg: f64,
    band_deg: f64,
    tail_err_deg: f64,
    end_err_deg: f64,
    settled: bool,
}

#[derive(Serialize)]
struct RunSummary {
    label: String,
    n_bits: Option<u8>,
    settled_all: bool,
    max_divergence_vs_reference_deg: Option<f64>,
    segments: Vec<SegmentSummary>,
}

fn run_robot(args: RobotArgs) -> Result<(), CliError> {
    let file = load_file(&args.common.config)?;
    let mut cfg = file.controller;
    if let Some(v) = args.kp {
        cfg.kp = v;
    }
    if let Some(v) = args.ki {
        cfg.ki = v;
    }
    if let Some(v) = args.ts {
        cfg.t_s = v;
    }
    if let Some(v) = args.t_bits {
        cfg.t_bits = v;
    }
    if let Some(v) = args.vmin {
        cfg.v_min = v;
    }
    if let Some(v) = args.vmax {
        cfg.v_max = v;
    }
    if let Some(mode) = args.mode {
        cfg.mode = match mode {
            ModeArg::Oneshot => ExecMode::OneShot,
            ModeArg::Pipeline => ExecMode::Pipeline,
        };
    }
    cfg.validate().map_err(config_err)?;

    let n_values = if args.n_bits.is_empty() {
        file.experiment.robot_n_values.clone()
    } else {
        args.n_bits.clone()
    };
    if n_values.is_empty() {
        return Err(CliError::Config(
            "robot experiment needs at least one N".into(),
        ));
    }

    let shapes = file.bank_shapes();
    let rows = file.rule_rows();
    let schedule = &file.schedule;
    let params = &file.plant;
    let duration = file.experiment.duration_s;
    let log_every = file.experiment.log_every;
    let dir = &args.common.out;
    fs::create_dir_all(dir)?;

    let run_one = |n_bits: u8, engine: LoopEngine| -> Result<SimRun, CliError> {
        let run_cfg = ControllerConfig { n_bits, ..cfg };
        run_cfg.validate().map_err(config_err)?;
        let (bank, rules) =
            compile_machine(&shapes, &rows, n_bits, run_cfg.t_bits, run_cfg.rounding)?;
        Ok(simulate_closed_loop(
            &[run_cfg; 3],
            engine,
            &bank,
            &rules,
            schedule,
            params,
            duration,
            log_every,
        )?)
    };

    // reference first (it is the settling yardstick), then the fixed-point
    // widths in parallel
    let reference = run_one(n_values[0], LoopEngine::Reference)?;
    let fixed_runs: Vec<(u8, Result<SimRun, CliError>)> = thread::scope(|scope| {
        let run_one = &run_one;
        let handles: Vec<_> = n_values
            .iter()
            .map(|&n| (n, scope.spawn(move || run_one(n, LoopEngine::FixedPoint))))
            .collect();
        handles
            .into_iter()
            .map(|(n, h)| (n, h.join().expect("robot worker panicked")))
            .collect()
    });

    let mut summaries = vec![summarize("reference", None, &reference, None)];
    write_trajectory(dir, "robot_reference.csv", &reference)?;
    // skip the first half of each segment (capped at one second) when
    // comparing trajectories, so only post-transient samples count
    let settle_window = (schedule.segment_s * 0.5).min(1.0);
    for (n, run) in fixed_runs {
        let run = run?;
        write_trajectory(dir, &format!("robot_n{n}.csv"), &run)?;
        let divergence = trajectory_divergence(&run.log, &reference.log, schedule, settle_window);
        summaries.push(summarize(
            &format!("fixed_n{n}"),
            Some(n),
            &run,
            Some(divergence),
        ));
        if args.step_log {
            write_step_log(
                dir, n, &cfg, &shapes, &rows, schedule, params, duration, log_every,
            )?;
        }
    }

    let summary_path = dir.join("robot_summary.json");
    let json = serde_json::to_string_pretty(&summaries).expect("serializable");
    fs::write(&summary_path, json)?;
    println!(
        "robot: {} fixed runs + reference over {duration} s -> {}",
        n_values.len(),
        dir.display()
    );
    Ok(())
}

fn summarize(label: &str, n_bits: Option<u8>, run: &SimRun, divergence: Option<f64>) -> RunSummary {
    RunSummary {
        label: label.to_string(),
        n_bits,
        settled_all: run.metrics.iter().all(|m| m.settled()),
        max_divergence_vs_reference_deg: divergence,
        segments: run
            .metrics
            .iter()
            .map(|m| SegmentSummary {
                joint: m.joint,
                segment: m.segment,
                sp_deg: m.sp_deg,
                band_deg: m.band_deg,
                tail_err_deg: m.tail_err_deg,
                end_err_deg: m.end_err_deg,
                settled: m.settled(),
            })
            .collect(),
    }
}

fn write_trajectory(dir: &Path, name: &str, run: &SimRun) -> Result<(), CliError> {
    let mut w = csv_writer(dir, name, "tsfpi.robot.v1")?;
    writeln!(
        w,
        "t,theta1_deg,theta2_deg,theta3_deg,sp1_deg,sp2_deg,sp3_deg,tau1,tau2,tau3"
    )?;
    for i in 0..run.log.t.len() {
        let th = run.log.theta_deg[i];
        let sp = run.log.sp_deg[i];
        let tau = run.log.tau[i];
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{}",
            run.log.t[i], th[0], th[1], th[2], sp[0], sp[1], sp[2], tau[0], tau[1], tau[2]
        )?;
    }

    // plot-ready long form alongside the wide log
    let long_name = format!("{}_long.csv", name.trim_end_matches(".csv"));
    let mut w = csv_writer(dir, &long_name, "tsfpi.robot_long.v1")?;
    writeln!(w, "t,series,value")?;
    for i in 0..run.log.t.len() {
        let t = run.log.t[i];
        for j in 0..3 {
            writeln!(w, "{t},theta{}_deg,{}", j + 1, run.log.theta_deg[i][j])?;
            writeln!(w, "{t},sp{}_deg,{}", j + 1, run.log.sp_deg[i][j])?;
            writeln!(w, "{t},tau{},{}", j + 1, run.log.tau[i][j])?;
        }
    }
    Ok(())
}

/// Replays the closed loop once more and records the controller internals
/// of joint 1 at the logging rate.
#[allow(clippy::too_many_arguments)]
fn write_step_log(
    dir: &Path,
    n_bits: u8,
    cfg: &ControllerConfig,
    shapes: &[Vec<MfShape>],
    rows: &[RuleRow],
    schedule: &tsfpi::plant::TrajectorySchedule,
    params: &tsfpi::plant::PlantParams,
    duration: f64,
    log_every: usize,
) -> Result<(), CliError> {
    use tsfpi::controller::Controller;
    use tsfpi::plant::{rk4_step, PlantState};

    let run_cfg = ControllerConfig { n_bits, ..*cfg };
    let (bank, rules) = compile_machine(shapes, rows, n_bits, run_cfg.t_bits, run_cfg.rounding)?;
    let mut controllers = [
        Controller::new(run_cfg).map_err(config_err)?,
        Controller::new(run_cfg).map_err(config_err)?,
        Controller::new(run_cfg).map_err(config_err)?,
    ];
    let mut state = PlantState::at_rest(nalgebra::Vector3::zeros());

    let mut w = csv_writer(
        dir,
        &format!("robot_steplog_n{n_bits}.csv"),
        "tsfpi.steplog.v1",
    )?;
    writeln!(w, "n,y,y_sp,e,e_d,x0,x1,v_d,r")?;
    let steps = (duration / run_cfg.t_s).round() as usize;
    for i in 0..steps {
        let t = i as f64 * run_cfg.t_s;
        let mut tau = nalgebra::Vector3::zeros();
        let mut joint1 = None;
        for j in 0..3 {
            let y = state.theta[j].to_degrees() / 180.0;
            let y_sp = schedule.setpoint_deg(j, t) / 180.0;
            let rec = controllers[j]
                .step(y, y_sp, &bank, &rules)
                .map_err(config_err)?;
            tau[j] = rec.r.value();
            if j == 0 {
                joint1 = Some(rec);
            }
        }
        if i % log_every.max(1) == 0 {
            let rec = joint1.expect("joint 1 stepped");
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{}",
                i,
                rec.y,
                rec.y_sp,
                rec.e.value(),
                rec.e_d.value(),
                rec.x0.value(),
                rec.x1.value(),
                rec.v_d.value(),
                rec.r.value()
            )?;
        }
        state = rk4_step(&state, &tau, run_cfg.t_s, params)?;
    }
    Ok(())
}

#[derive(Serialize)]
struct EstimateOut {
    variant: &'static str,
    n: f64,
    t: f64,
    nlut: f64,
    rs_msps: f64,
    mflips: f64,
    extrapolated: bool,
}

fn run_costmodel(command: CostmodelCommand) -> Result<(), CliError> {
    match command {
        CostmodelCommand::Estimate { variant, n, t } => {
            let (v, name) = match variant {
                VariantArg::Os => (Variant::OneShot, "one-shot"),
                VariantArg::P => (Variant::Pipeline, "pipeline"),
            };
            let extrapolated = !PlaneModel::in_fit_domain(n, t);
            if extrapolated {
                eprintln!("warning: (N={n}, T={t}) lies outside the fitted grid; extrapolating");
            }
            let rs = costmodel::plane(v, Quantity::Rs).estimate(n, t);
            let out = EstimateOut {
                variant: name,
                n,
                t,
                nlut: costmodel::plane(v, Quantity::Nlut).estimate(n, t),
                rs_msps: rs,
                mflips: costmodel::mflips(rs, 49),
                extrapolated,
            };
            println!(
                "{}",
                serde_json::to_string_pretty(&out).expect("serializable")
            );
            Ok(())
        }
    }
}
