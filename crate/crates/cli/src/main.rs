//! `mdd`: command-line front end of the motional dynamical decoupling
//! simulator.
//!
//! Exit codes: 0 success, 1 internal or I/O failure, 2 usage or validation
//! error. Errors are reported on stderr as one JSON object.

use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use mdd_core::budget::{
    build_report, casimir_limit, entanglement_phases, BudgetScenario, EntanglementSetup,
};
use mdd_core::checks;
use mdd_core::config::{OutputFormat, RunConfig, SequenceSpec};
use mdd_core::dephasing::{
    phase_trials, phi_rate, variance_estimate, variance_sweep, TelegraphEnsemble,
};
use mdd_core::dynamics::{
    alpha_integral, classical_trajectory, max_separation_rate, pulsed_separation, SpinBranch,
};
use mdd_core::numeric::wrap_phase;
use mdd_core::output::{sha256_hex, write_atomic, Cell, CsvTable, RunManifest};
use mdd_core::pulses::PulseSequence;
use mdd_core::rotation::{max_rotation_step, refocus_check, simulate_rotation, RotState};
use mdd_core::{Error, Result};

/// Environment variable supplying the default seed.
const SEED_ENV: &str = "MDD_SEED";

#[derive(Parser, Debug)]
#[command(
    name = "mdd",
    version,
    about = "Motional dynamical decoupling simulator",
    arg_required_else_help = true
)]
struct Cli {
    /// JSON run configuration; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug, Serialize)]
#[serde(rename_all = "kebab-case")]
enum Command {
    /// Trap quantities for a particle radius and field gradient.
    Trap(TrapArgs),
    /// Classical branch trajectories under a resonant sequence.
    Simulate(SimulateArgs),
    /// Coherent displacement and separation at every pulse.
    Amplify(AmplifyArgs),
    /// Surface-spin telegraph noise Monte Carlo.
    DephaseMc(DephaseArgs),
    /// Rotation of both branches under a resonant sequence.
    Rotate(RotateArgs),
    /// Ranked decoherence budget.
    Budget(BudgetArgs),
    /// Gradient limit from the Casimir-Polder force.
    Casimir(CasimirArgs),
    /// Gravitational and induced-dipole phases between two particles.
    Entangle(EntangleArgs),
    /// Run the invariant self-check suite.
    Check,
}

#[derive(Args, Debug, Serialize)]
struct Geometry {
    /// Particle radius, m.
    #[arg(long)]
    radius: Option<f64>,
    /// Magnetic field gradient, T/m.
    #[arg(long)]
    gradient: Option<f64>,
}

#[derive(Args, Debug, Serialize)]
struct Output {
    /// Output file; written atomically with a `.manifest.json` sibling.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Output format.
    #[arg(long, value_enum)]
    format: Option<Format>,
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum Format {
    Csv,
    Json,
}

#[derive(Args, Debug, Serialize)]
struct TrapArgs {
    #[command(flatten)]
    geometry: Geometry,
}

#[derive(Args, Debug, Serialize)]
struct SequenceArgs {
    /// Pulses in each half of the resonant sequence (odd).
    #[arg(long)]
    pulses_per_half: Option<usize>,
    /// JSON pulse sequence file, used instead of the resonant sequence.
    #[arg(long)]
    sequence_file: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
struct SimulateArgs {
    #[command(flatten)]
    geometry: Geometry,
    #[command(flatten)]
    sequence: SequenceArgs,
    /// Integration step, s; defaults to a four-hundredth of the trap period.
    #[arg(long)]
    dt: Option<f64>,
    /// Initial position shared by both branches, m.
    #[arg(long, default_value_t = 0.0)]
    x0: f64,
    /// Initial velocity shared by both branches, m/s.
    #[arg(long, default_value_t = 0.0)]
    v0: f64,
    #[command(flatten)]
    output: Output,
}

#[derive(Args, Debug, Serialize)]
struct AmplifyArgs {
    #[command(flatten)]
    geometry: Geometry,
    #[command(flatten)]
    sequence: SequenceArgs,
    #[command(flatten)]
    output: Output,
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum PulseLayout {
    /// `n` equal intervals, the last pulse at the end of the protocol.
    Terminal,
    /// `n` pulses strictly inside the protocol, `n + 1` equal intervals.
    Interior,
}

#[derive(Args, Debug, Serialize)]
struct DephaseArgs {
    #[arg(long)]
    radius: Option<f64>,
    /// Number of surface spins.
    #[arg(long)]
    n_spins: Option<usize>,
    /// Spin relaxation time, s.
    #[arg(long)]
    tau: Option<f64>,
    /// Number of pulses (see --pulse-layout).
    #[arg(long, default_value_t = 100)]
    n_pulses: usize,
    #[arg(long, value_enum, default_value_t = PulseLayout::Terminal)]
    pulse_layout: PulseLayout,
    /// Protocol duration, s.
    #[arg(long, default_value_t = 0.5)]
    duration: f64,
    /// Number of noise realisations.
    #[arg(long)]
    trials: Option<usize>,
    /// Seed; defaults to $MDD_SEED, then the configuration seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Emit a spin-count by relaxation-time variance table.
    #[arg(long)]
    sweep: bool,
    /// Comma-separated spin counts for --sweep.
    #[arg(long, value_delimiter = ',')]
    sweep_n_spins: Option<Vec<usize>>,
    /// Comma-separated relaxation times for --sweep, s.
    #[arg(long, value_delimiter = ',')]
    sweep_taus: Option<Vec<f64>>,
    #[command(flatten)]
    output: Output,
}

#[derive(Args, Debug, Serialize)]
struct RotateArgs {
    #[command(flatten)]
    geometry: Geometry,
    /// Initial tilt, rad.
    #[arg(long, allow_negative_numbers = true)]
    theta0: Option<f64>,
    #[command(flatten)]
    sequence: SequenceArgs,
    /// Integration step, s; defaults to the largest admissible step.
    #[arg(long)]
    dt: Option<f64>,
    #[command(flatten)]
    output: Output,
}

#[derive(Args, Debug, Serialize)]
struct BudgetArgs {
    /// JSON scenario file, replacing the configuration's budget section.
    #[arg(long)]
    scenario: Option<PathBuf>,
    /// Print a Markdown table instead of JSON.
    #[arg(long)]
    markdown: bool,
    #[command(flatten)]
    output: Output,
}

#[derive(Args, Debug, Serialize)]
struct CasimirArgs {
    /// Particle radius, m.
    #[arg(long, default_value_t = 1e-6)]
    r1: f64,
    /// Relative permittivity of the particle.
    #[arg(long)]
    eps_r: Option<f64>,
    /// Trapped flux of the tip µ₀M, T.
    #[arg(long, default_value_t = 1.0)]
    tip_flux: f64,
    /// Position uncertainty, m.
    #[arg(long, default_value_t = 1e-10)]
    delta_r: f64,
    /// Drop time, s.
    #[arg(long, default_value_t = 0.5)]
    drop_time: f64,
    /// Tolerated phase, rad.
    #[arg(long, default_value_t = 1.0)]
    phase_budget: f64,
}

#[derive(Args, Debug, Serialize)]
struct EntangleArgs {
    /// Particle radius, m; sets mass and volume.
    #[arg(long, default_value_t = 1e-6)]
    radius: f64,
    #[arg(long, default_value_t = 450e-6)]
    d_ll: f64,
    #[arg(long, default_value_t = 200e-6)]
    d_rl: f64,
    #[arg(long, default_value_t = 650e-6)]
    d_lr: f64,
    /// Magnetic field at the particles, T.
    #[arg(long, default_value_t = 1.0)]
    field: f64,
    /// Interaction time, s.
    #[arg(long, default_value_t = 1.0)]
    t_exp: f64,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            let kind = match &e {
                Error::Domain(_) => "domain",
                Error::Validation(_) => "validation",
                Error::Json(_) => "json",
                Error::Io(_) => "io",
            };
            eprintln!("{}", json!({ "error": kind, "message": e.to_string() }));
            ExitCode::from(if e.is_user_error() { 2 } else { 1 })
        }
    }
}

/// Shared state of one invocation.
struct Ctx {
    cfg: RunConfig,
    subcommand: &'static str,
    fingerprint: String,
    started: Instant,
}

impl Ctx {
    fn emit(
        &self,
        output: &Output,
        seed: Option<u64>,
        csv: Option<CsvTable>,
        json: serde_json::Value,
        notes: Vec<String>,
    ) -> Result<()> {
        let format = match output.format {
            Some(Format::Csv) => OutputFormat::Csv,
            Some(Format::Json) => OutputFormat::Json,
            None => self.cfg.output.format,
        };
        let body = match (format, csv) {
            (OutputFormat::Csv, Some(table)) => table.render(),
            _ => {
                let mut s = serde_json::to_string_pretty(&json)?;
                s.push('\n');
                s
            }
        };
        let path = output.out.clone().or_else(|| self.cfg.output.path.clone());
        match path {
            Some(path) => {
                write_atomic(&path, body.as_bytes())?;
                self.manifest(&path, seed, body.as_bytes(), notes)?;
                println!("{}", json);
            }
            None => io::stdout().write_all(body.as_bytes())?,
        }
        Ok(())
    }

    fn manifest(
        &self,
        path: &Path,
        seed: Option<u64>,
        body: &[u8],
        notes: Vec<String>,
    ) -> Result<()> {
        RunManifest {
            tool: "mdd".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            subcommand: self.subcommand.into(),
            config_sha256: self.fingerprint.clone(),
            seed,
            wall_time_s: self.started.elapsed().as_secs_f64(),
            output: path.display().to_string(),
            output_sha256: sha256_hex(body),
            notes,
        }
        .write_for(path)?;
        Ok(())
    }
}

fn subcommand_name(c: &Command) -> &'static str {
    match c {
        Command::Trap(_) => "trap",
        Command::Simulate(_) => "simulate",
        Command::Amplify(_) => "amplify",
        Command::DephaseMc(_) => "dephase-mc",
        Command::Rotate(_) => "rotate",
        Command::Budget(_) => "budget",
        Command::Casimir(_) => "casimir",
        Command::Entangle(_) => "entangle",
        Command::Check => "check",
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    let cfg = match &cli.config {
        Some(path) => RunConfig::from_file(path)?,
        None => RunConfig::default(),
    };
    let fingerprint = sha256_hex(
        serde_json::to_string(&json!({ "config": cfg, "command": cli.command }))?.as_bytes(),
    );
    let mut ctx = Ctx {
        cfg,
        subcommand: subcommand_name(&cli.command),
        fingerprint,
        started: Instant::now(),
    };
    match &cli.command {
        Command::Trap(a) => trap(&mut ctx, a),
        Command::Simulate(a) => simulate(&mut ctx, a),
        Command::Amplify(a) => amplify(&mut ctx, a),
        Command::DephaseMc(a) => dephase(&mut ctx, a),
        Command::Rotate(a) => rotate(&mut ctx, a),
        Command::Budget(a) => budget(&ctx, a),
        Command::Casimir(a) => casimir(&ctx, a),
        Command::Entangle(a) => entangle(&ctx, a),
        Command::Check => check(&ctx),
    }
}

fn apply_geometry(cfg: &mut RunConfig, g: &Geometry) -> Result<()> {
    if let Some(r) = g.radius {
        cfg.diamond.radius = r;
        cfg.diamond.volume = None;
    }
    if let Some(b) = g.gradient {
        cfg.trap.gradient = b;
    }
    cfg.validate()
}

fn sequence_from(cfg: &mut RunConfig, s: &SequenceArgs) -> Result<PulseSequence> {
    if let Some(path) = &s.sequence_file {
        cfg.sequence = SequenceSpec::File { path: path.clone() };
    } else if let Some(n) = s.pulses_per_half {
        cfg.sequence = SequenceSpec::Resonant { pulses_per_half: n };
    }
    cfg.pulse_sequence()
}

fn trap(ctx: &mut Ctx, a: &TrapArgs) -> Result<ExitCode> {
    apply_geometry(&mut ctx.cfg, &a.geometry)?;
    let c = &ctx.cfg.constants;
    let t = ctx.cfg.trap()?;
    let rate = max_separation_rate(c, &ctx.cfg.diamond)?;
    println!("radius = {:e} m", ctx.cfg.diamond.radius);
    println!("gradient = {:e} T/m", t.b_prime);
    println!("omega = {:e} rad/s", t.omega);
    println!("period = {:e} s", t.period());
    println!("x0 = {:e} m", t.x0);
    println!("lambda = {:e} rad/s", t.lambda);
    println!(
        "delta_x_eq = {:e} m ({:.2} nm)",
        t.delta_x_eq,
        t.delta_x_eq * 1e9
    );
    println!("q_rot = {:e} 1/s^2", t.q_rot);
    println!("max_separation_rate = {:e} m/s", rate);
    Ok(ExitCode::SUCCESS)
}

fn simulate(ctx: &mut Ctx, a: &SimulateArgs) -> Result<ExitCode> {
    apply_geometry(&mut ctx.cfg, &a.geometry)?;
    let t = ctx.cfg.trap()?;
    let seq = sequence_from(&mut ctx.cfg, &a.sequence)?;
    let dt = a.dt.unwrap_or(t.period() / 400.0);
    let plus = classical_trajectory(&t, &seq, SpinBranch::Plus, a.x0, a.v0, dt)?;
    let minus = classical_trajectory(&t, &seq, SpinBranch::Minus, a.x0, a.v0, dt)?;
    let mut table = CsvTable::new(&["t", "x_plus", "x_minus", "separation"]);
    for (p, m) in plus.samples.iter().zip(&minus.samples) {
        table.push(vec![
            p.t.into(),
            p.value.into(),
            m.value.into(),
            (p.value - m.value).into(),
        ])?;
    }
    let end = plus.last().t;
    let summary = json!({
        "samples": table.len(),
        "duration": end,
        "final_separation": plus.last().value - minus.last().value,
        "max_abs_separation": plus.samples.iter().zip(&minus.samples)
            .map(|(p, m)| (p.value - m.value).abs()).fold(0.0_f64, f64::max),
    });
    ctx.emit(&a.output, None, Some(table), summary, vec![])?;
    Ok(ExitCode::SUCCESS)
}

fn amplify(ctx: &mut Ctx, a: &AmplifyArgs) -> Result<ExitCode> {
    apply_geometry(&mut ctx.cfg, &a.geometry)?;
    let t = ctx.cfg.trap()?;
    let seq = sequence_from(&mut ctx.cfg, &a.sequence)?;
    let mut table = CsvTable::new(&["t", "alpha_re", "alpha_im", "separation"]);
    for &b in &seq.boundaries() {
        let al = alpha_integral(&seq, &t, b)?.alpha;
        table.push(vec![
            b.into(),
            al.re.into(),
            al.im.into(),
            pulsed_separation(&seq, &t, b)?.into(),
        ])?;
    }
    let half = seq.duration() / 2.0;
    let summary = json!({
        "duration": seq.duration(),
        "n_pulses": seq.len(),
        "separation_at_half": pulsed_separation(&seq, &t, half)?,
        "max_separation_rate": max_separation_rate(&ctx.cfg.constants, &ctx.cfg.diamond)?,
        "phase_cancelling": seq.validate_phase_cancelling().is_cancelling,
    });
    ctx.emit(&a.output, None, Some(table), summary, vec![])?;
    Ok(ExitCode::SUCCESS)
}

/// Seed precedence: flag, environment, configuration.
fn resolve_seed(flag: Option<u64>, cfg: &RunConfig) -> Result<u64> {
    if let Some(s) = flag {
        return Ok(s);
    }
    if let Ok(v) = std::env::var(SEED_ENV) {
        return v.trim().parse().map_err(|_| {
            Error::Validation(format!("{SEED_ENV} must be an unsigned integer, got {v:?}"))
        });
    }
    Ok(cfg.seed)
}

fn dephase(ctx: &mut Ctx, a: &DephaseArgs) -> Result<ExitCode> {
    let cfg = &mut ctx.cfg;
    if let Some(r) = a.radius {
        cfg.diamond.radius = r;
        cfg.diamond.volume = None;
    }
    cfg.validate()?;
    let seed = resolve_seed(a.seed, cfg)?;
    let phi = phi_rate(&cfg.constants, &cfg.diamond)?;
    let seq = match a.pulse_layout {
        PulseLayout::Terminal => {
            PulseSequence::uniform_with_terminal_pulse(a.n_pulses, a.duration)?
        }
        PulseLayout::Interior => PulseSequence::uniform(a.n_pulses, a.duration)?,
    };
    let trials = a.trials.unwrap_or(cfg.noise.trials);
    if trials < 2 {
        return Err(Error::Validation(format!(
            "at least 2 trials are required, got {trials}"
        )));
    }
    let notes = vec![format!(
        "{} pulses, layout {:?}, phase cancelling: {}",
        seq.len(),
        a.pulse_layout,
        seq.validate_phase_cancelling().is_cancelling
    )];
    if a.sweep {
        let ns = a
            .sweep_n_spins
            .clone()
            .unwrap_or_else(|| cfg.noise.sweep_n_spins.clone());
        let taus = a
            .sweep_taus
            .clone()
            .unwrap_or_else(|| cfg.noise.sweep_taus.clone());
        if ns.is_empty() || taus.is_empty() {
            return Err(Error::Validation("sweep lists must not be empty".into()));
        }
        let cells = variance_sweep(phi, &ns, &taus, &seq, trials, seed)?;
        let mut table = CsvTable::new(&["n_spins", "tau", "variance", "std_error", "n_trials"]);
        for c in &cells {
            table.push(vec![
                c.n_spins.into(),
                c.tau.into(),
                c.variance.into(),
                c.std_error.into(),
                c.n_trials.into(),
            ])?;
        }
        let summary = json!({ "seed": seed, "cells": cells });
        ctx.emit(&a.output, Some(seed), Some(table), summary, notes)?;
        return Ok(ExitCode::SUCCESS);
    }
    let n_spins = a.n_spins.unwrap_or(cfg.noise.n_spins);
    let tau = a.tau.unwrap_or(cfg.noise.tau);
    let ens = TelegraphEnsemble::with_tau(n_spins, tau, a.duration, seed)?;
    let samples = phase_trials(phi, &ens, &seq, trials)?;
    let mut table = CsvTable::new(&["trial", "raw_phase", "wrapped_phase"]);
    for (i, s) in samples.iter().enumerate() {
        table.push(vec![i.into(), s.raw.into(), s.wrapped.into()])?;
    }
    let wrapped: Vec<f64> = samples.iter().map(|s| s.wrapped).collect();
    let est = variance_estimate(&wrapped);
    let summary = json!({
        "seed": seed, "n_spins": n_spins, "tau": tau, "phi": phi.phi,
        "variance": est.variance, "std_error": est.std_error, "mean": est.mean, "n_trials": est.n_trials,
    });
    ctx.emit(&a.output, Some(seed), Some(table), summary, notes)?;
    Ok(ExitCode::SUCCESS)
}

fn rotate(ctx: &mut Ctx, a: &RotateArgs) -> Result<ExitCode> {
    apply_geometry(&mut ctx.cfg, &a.geometry)?;
    let t = ctx.cfg.trap()?;
    let seq = sequence_from(&mut ctx.cfg, &a.sequence)?;
    let theta0 = a.theta0.unwrap_or(ctx.cfg.rotation.theta0);
    let dt =
        a.dt.or(ctx.cfg.rotation.dt)
            .unwrap_or_else(|| max_rotation_step(t.q_rot, &seq));
    let init = RotState::at_rest(theta0);
    let plus = simulate_rotation(t.q_rot, &seq, SpinBranch::Plus, init, dt)?;
    let minus = simulate_rotation(t.q_rot, &seq, SpinBranch::Minus, init, dt)?;
    let mut table = CsvTable::new(&["t", "theta_plus", "theta_minus"]);
    for (p, m) in plus.samples.iter().zip(&minus.samples) {
        table.push(vec![p.t.into(), p.value.into(), m.value.into()])?;
    }
    let mismatch = plus.last().value - minus.last().value;
    let refocus = refocus_check(t.q_rot, &seq).ok();
    let summary = json!({
        "q": t.q_rot, "theta0": theta0, "dt": dt,
        "theta_plus_final": plus.last().value, "theta_minus_final": minus.last().value,
        "mismatch": mismatch, "mismatch_wrapped": wrap_phase(mismatch),
        "linear_refocusing": refocus.map(|r| r.equal),
    });
    ctx.emit(&a.output, None, Some(table), summary, vec![])?;
    Ok(ExitCode::SUCCESS)
}

fn budget(ctx: &Ctx, a: &BudgetArgs) -> Result<ExitCode> {
    let scenario: BudgetScenario = match &a.scenario {
        Some(p) => serde_json::from_str(&std::fs::read_to_string(p)?)?,
        None => ctx.cfg.budget.clone(),
    };
    let report = build_report(&ctx.cfg.constants, &scenario)?;
    if a.markdown {
        let md = report.to_markdown();
        match &a.output.out {
            Some(path) => {
                write_atomic(path, md.as_bytes())?;
                ctx.manifest(path, None, md.as_bytes(), vec![])?;
            }
            None => print!("{md}"),
        }
        return Ok(ExitCode::SUCCESS);
    }
    let mut table = CsvTable::new(&["rank", "source", "value", "threshold", "severity", "pass"]);
    for (i, e) in report.entries.iter().enumerate() {
        table.push(vec![
            i.into(),
            Cell::Text(e.source.clone()),
            e.value.into(),
            e.threshold.unwrap_or(f64::NAN).into(),
            e.severity.into(),
            i64::from(e.pass).into(),
        ])?;
    }
    let value = serde_json::to_value(&report)?;
    let output = Output {
        out: a.output.out.clone(),
        format: Some(a.output.format.unwrap_or(Format::Json)),
    };
    ctx.emit(&output, None, Some(table), value, vec![])?;
    Ok(ExitCode::SUCCESS)
}

fn casimir(ctx: &Ctx, a: &CasimirArgs) -> Result<ExitCode> {
    let c = &ctx.cfg.constants;
    let r = casimir_limit(
        c,
        a.r1,
        a.eps_r.unwrap_or(c.eps_r),
        a.tip_flux,
        a.delta_r,
        a.drop_time,
        a.phase_budget,
    )?;
    println!("{}", serde_json::to_string_pretty(&r)?);
    Ok(ExitCode::SUCCESS)
}

fn entangle(ctx: &Ctx, a: &EntangleArgs) -> Result<ExitCode> {
    let c = &ctx.cfg.constants;
    let volume = 4.0 / 3.0 * std::f64::consts::PI * a.radius.powi(3);
    let setup = EntanglementSetup {
        mass: c.rho_d * volume,
        d_ll: a.d_ll,
        d_rl: a.d_rl,
        d_lr: a.d_lr,
        field: a.field,
        volume,
        t_exp: a.t_exp,
    };
    let p = entanglement_phases(c, &setup)?;
    println!(
        "{}",
        serde_json::to_string_pretty(&json!({ "setup": setup, "phases": p }))?
    );
    Ok(ExitCode::SUCCESS)
}

fn check(ctx: &Ctx) -> Result<ExitCode> {
    let results = checks::run_all(&ctx.cfg.constants);
    let mut failed = 0;
    for r in &results {
        println!(
            "{} {}: {}",
            if r.pass { "PASS" } else { "FAIL" },
            r.name,
            r.detail
        );
        failed += usize::from(!r.pass);
    }
    println!("{} checks, {} failed", results.len(), failed);
    Ok(if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}
