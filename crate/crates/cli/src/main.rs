//! `nisynth` command-line front end. Every subcommand prints one JSON report
//! and exits with 0 (holds), 1 (verdict fails), 2 (input error) or 3
//! (numerical failure).

mod config;
mod report;

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use nalgebra::DVector;
use nisynth::certify::{self, FrequencyGrid, NiClass};
use nisynth::io::{CertificateJson, SystemJson, TransformsJson};
use nisynth::matkit;
use nisynth::structure::{self, NormalForm, RdKind, TransformSet};
use nisynth::synth::{self, RobustConfig, SynthesisConfig};
use nisynth::sysmodel::{self, Input, StateSpace, UncertainSystem};
use serde::de::DeserializeOwned;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use config::ConfigJson;
use report::{Failure, Report, EXIT_INPUT, EXIT_OK, EXIT_VERDICT};

#[derive(Debug, Parser)]
#[command(name = "nisynth", version, about = "Negative-imaginary analysis and state-feedback synthesis")]
struct Cli {
    /// Write the report here instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Single-line JSON instead of pretty-printed.
    #[arg(long, global = true)]
    compact: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Target {
    Ni,
    Osni,
    Ssni,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Class {
    Ni,
    Sni,
    Osni,
    Ssni,
}

impl From<Class> for NiClass {
    fn from(c: Class) -> Self {
        match c {
            Class::Ni => NiClass::Ni,
            Class::Sni => NiClass::Sni,
            Class::Osni => NiClass::Osni,
            Class::Ssni => NiClass::Ssni,
        }
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Structural analysis: minimality, zeros, relative degree, normal form.
    Analyze { system: PathBuf },
    /// State-feedback synthesis for an NI, OSNI or SSNI closed loop.
    Synthesize {
        system: PathBuf,
        #[arg(long, value_enum, default_value = "ni")]
        target: Target,
        /// DC weight on the degree-1 outputs: a scalar or a JSON matrix.
        #[arg(long)]
        y2: Option<String>,
        /// DC weight on the degree-2 outputs: a scalar or a JSON matrix.
        #[arg(long)]
        y3: Option<String>,
        #[arg(long)]
        seed: Option<u64>,
        /// Requested OSNI level.
        #[arg(long)]
        epsilon: Option<f64>,
        /// JSON file overriding free parameters and transforms.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        certificate_out: Option<PathBuf>,
        #[arg(long)]
        closed_loop_out: Option<PathBuf>,
    },
    /// Robust stabilization against SNI uncertainty with DC gain bounded by gamma.
    Stabilize {
        system: PathBuf,
        #[arg(long)]
        gamma: f64,
        #[arg(long)]
        y2: Option<String>,
        #[arg(long)]
        y3: Option<String>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        closed_loop_out: Option<PathBuf>,
    },
    /// Frequency-domain class check, plus a certificate check when given.
    Verify {
        system: PathBuf,
        #[arg(long, value_enum)]
        class: Class,
        #[arg(long)]
        certificate: Option<PathBuf>,
        #[arg(long, default_value_t = 400)]
        grid_points: usize,
        #[arg(long)]
        epsilon: Option<f64>,
    },
    /// Free response of a system, optionally closed with an uncertainty.
    Simulate {
        system: PathBuf,
        #[arg(long)]
        delta: Option<PathBuf>,
        /// Initial state, comma-separated or a JSON array. Missing trailing
        /// entries (the uncertainty states) are zero.
        #[arg(long, allow_hyphen_values = true)]
        x0: String,
        #[arg(long, default_value_t = 10.0)]
        t_end: f64,
        #[arg(long, default_value_t = 1e-3)]
        dt: f64,
        /// Number of trajectory samples kept in the report.
        #[arg(long, default_value_t = 101)]
        samples: usize,
    },
}

/// What a subcommand hands back to the envelope.
struct Outcome {
    result: Value,
    verdict: Option<bool>,
    /// Verdict-level failure kept alongside a full result.
    failure: Option<Failure>,
}

impl Outcome {
    fn of(result: Value, verdict: Option<bool>) -> Self {
        Self { result, verdict, failure: None }
    }
}

#[derive(Default)]
struct Context {
    inputs: BTreeMap<String, String>,
    rng_seed: Option<u64>,
}

impl Context {
    fn read(&mut self, path: &Path) -> Result<String, Failure> {
        let bytes = std::fs::read(path).map_err(|e| Failure::input(format!("{}: {e}", path.display())))?;
        self.inputs.insert(path.display().to_string(), hex::encode(Sha256::digest(&bytes)));
        String::from_utf8(bytes).map_err(|e| Failure::input(format!("{}: {e}", path.display())))
    }

    fn load<T: DeserializeOwned>(&mut self, path: &Path) -> Result<T, Failure> {
        let text = self.read(path)?;
        serde_json::from_str(&text).map_err(|e| Failure::input(format!("{}: {e}", path.display())))
    }

    fn system(&mut self, path: &Path) -> Result<StateSpace, Failure> {
        let sj: SystemJson = self.load(path)?;
        Ok(sj.to_system()?)
    }
}

fn write_json(path: &Path, value: &Value) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(value).expect("JSON values serialize");
    std::fs::write(path, text + "\n").map_err(|e| Failure::input(format!("{}: {e}", path.display())))
}

fn rd_kind(k: RdKind) -> &'static str {
    match k {
        RdKind::FullRdVector => "full",
        RdKind::LirdOnly => "lird-only",
        RdKind::None => "none",
    }
}

fn analyze(ctx: &mut Context, path: &Path) -> Result<Outcome, Failure> {
    let sys = ctx.system(path)?;
    let mm = sysmodel::is_minimal(&sys)?;
    let zero = sysmodel::has_zero_at_origin(&sys)?;
    let rd = structure::relative_degree_vector(&sys)?;
    let mut result = json!({
        "states": sys.states(),
        "ports": sys.ports()?,
        "controllable": mm.controllable,
        "observable": mm.observable,
        "minimal": mm.is_minimal(),
        "zero_at_origin": zero,
        "open_loop_stability": format!("{:?}", matkit::stability_class(&sys.a)?),
        "relative_degree": { "r": rd.r, "kind": rd_kind(rd.kind), "diagnostic": rd.diagnostic },
    });
    let mut feasible = mm.is_minimal() && !zero;
    let mut failure = None;
    match structure::find_output_transformation(&sys) {
        Ok((t_y, info)) => {
            let nf = structure::to_normal_form(&sys, &t_y)?;
            let phase = structure::phase_classification(&nf)?;
            result["output_transform"] = json!({ "T_y": report::mat(&t_y), "relative_degree": info.r });
            result["normal_form"] = report::normal_form(&nf);
            result["zero_dynamics"] = json!({
                "eigenvalues": matkit::eig(&nf.a00)?.values.into_iter().map(report::complex).collect::<Vec<_>>(),
                "weakly_minimum_phase": phase.weakly_minimum_phase,
                "minimum_phase": phase.minimum_phase,
            });
            result["ssni_feasible"] = json!(feasible && nf.p2 == 0 && phase.minimum_phase);
            feasible &= phase.weakly_minimum_phase;
            if !phase.weakly_minimum_phase {
                // The split reports the offending eigenvalue.
                failure = Some(match structure::split_zero_dynamics(&nf) {
                    Err(e) => e.into(),
                    Ok(_) => Failure {
                        code: EXIT_VERDICT,
                        kind: "verdict",
                        message: "zero dynamics are not Lyapunov stable".into(),
                    },
                });
            }
        }
        Err(e) => {
            feasible = false;
            failure = Some(e.into());
        }
    }
    result["ni_feasible"] = json!(feasible);
    if failure.is_none() && !feasible {
        failure = Some(Failure {
            code: EXIT_VERDICT,
            kind: "verdict",
            message: if mm.is_minimal() { "system has a transmission zero at the origin" } else { "system is not minimal" }
                .into(),
        });
    }
    Ok(Outcome { result, verdict: Some(feasible), failure })
}

/// Configuration file merged with command-line overrides.
fn load_config(
    ctx: &mut Context,
    config: &Option<PathBuf>,
    seed: Option<u64>,
    epsilon: Option<f64>,
) -> Result<(SynthesisConfig, Option<TransformSet>), Failure> {
    let cj: ConfigJson = match config {
        Some(p) => ctx.load(p)?,
        None => ConfigJson::default(),
    };
    let (mut cfg, ts) = cj.to_config()?;
    if let Some(s) = seed {
        cfg.rng_seed = s;
    }
    if let Some(e) = epsilon {
        cfg.epsilon = e;
    }
    ctx.rng_seed = Some(cfg.rng_seed);
    Ok((cfg, ts))
}

fn normal_form(sys: &StateSpace, ts: Option<TransformSet>) -> Result<NormalForm, Failure> {
    Ok(match ts {
        Some(ts) => NormalForm::from_transforms(sys, ts)?,
        None => {
            let (t_y, _) = structure::find_output_transformation(sys)?;
            structure::to_normal_form(sys, &t_y)?
        }
    })
}

fn apply_weights(cfg: &mut SynthesisConfig, nf: &NormalForm, y2: &Option<String>, y3: &Option<String>) -> Result<(), Failure> {
    if let Some(t) = y2 {
        cfg.y2 = Some(config::parse_weight(t, nf.p1, "Y2")?);
    }
    if let Some(t) = y3 {
        cfg.y3 = Some(config::parse_weight(t, nf.p2, "Y3")?);
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn synthesize(
    ctx: &mut Context,
    path: &Path,
    target: Target,
    y2: &Option<String>,
    y3: &Option<String>,
    seed: Option<u64>,
    epsilon: Option<f64>,
    config: &Option<PathBuf>,
    certificate_out: &Option<PathBuf>,
    closed_loop_out: &Option<PathBuf>,
) -> Result<Outcome, Failure> {
    let sys = ctx.system(path)?;
    let (mut cfg, ts) = load_config(ctx, config, seed, epsilon)?;
    let nf = normal_form(&sys, ts)?;
    apply_weights(&mut cfg, &nf, y2, y3)?;
    let gains = match target {
        Target::Ni => synth::synthesize_ni(&nf, &cfg)?,
        Target::Osni => synth::synthesize_osni(&nf, &cfg)?,
        Target::Ssni => synth::synthesize_ssni(&nf, &cfg)?,
    };
    let orig = synth::realize_in_original(&gains, &nf)?;
    let cert = report::certificate(&orig.certificate);
    let cl = report::system(&orig.closed_loop);
    if let Some(p) = certificate_out {
        write_json(p, &cert)?;
    }
    if let Some(p) = closed_loop_out {
        write_json(p, &cl)?;
    }
    let result = json!({
        "target": gains.target.to_string(),
        "K_x": report::mat(&orig.law.k_x),
        "K_v": report::mat(&orig.law.k_v),
        "transforms": TransformsJson::from_transforms(&nf.transforms),
        "block_gains": report::blocks(&gains.blocks),
        "normal_coordinate_gain": report::mat(&synth::normal_coordinate_gain(&gains, &nf)),
        "free_parameters": report::free_parameters(&gains.free),
        "certificate": cert,
        "certificate_residuals": report::residuals(&orig.certificate),
        "certificate_verdict": report::verdict(&orig.verdict),
        "normal_form_certificate": report::certificate(&gains.certificate),
        "closed_loop": cl,
        "notes": gains.notes,
    });
    Ok(Outcome::of(result, Some(orig.verdict.holds)))
}

#[allow(clippy::too_many_arguments)]
fn stabilize(
    ctx: &mut Context,
    path: &Path,
    gamma: f64,
    y2: &Option<String>,
    y3: &Option<String>,
    seed: Option<u64>,
    config: &Option<PathBuf>,
    closed_loop_out: &Option<PathBuf>,
) -> Result<Outcome, Failure> {
    let sys = ctx.system(path)?;
    let (mut cfg, ts) = load_config(ctx, config, seed, None)?;
    if y2.is_some() || y3.is_some() {
        // The weights need the block sizes, which only the normal form knows.
        let nf = normal_form(&sys, ts.clone())?;
        apply_weights(&mut cfg, &nf, y2, y3)?;
    }
    let usys = UncertainSystem::new(sys, gamma, None)?;
    let r = synth::robust_stabilize(&usys, &RobustConfig { synthesis: cfg, transforms: ts })?;
    let nominal = report::system(&r.nominal);
    if let Some(p) = closed_loop_out {
        write_json(p, &nominal)?;
    }
    let holds = r.certificate_verdict.holds && r.dc_lambda_max < r.dc_bound;
    let result = json!({
        "gamma": gamma,
        "K_x": report::mat(&r.law.k_x),
        "K_v": report::mat(&r.law.k_v),
        "K_w": r.law.k_w.as_ref().map(report::mat),
        "beta": r.beta,
        "dc_gain": report::mat(&r.dc_gain),
        "dc_lambda_max": r.dc_lambda_max,
        "dc_bound": r.dc_bound,
        "transforms": TransformsJson::from_transforms(&r.normal_form.transforms),
        "block_gains": report::blocks(&r.gains.blocks),
        "free_parameters": report::free_parameters(&r.gains.free),
        "certificate": report::certificate(&r.certificate),
        "certificate_residuals": report::residuals(&r.certificate),
        "certificate_verdict": report::verdict(&r.certificate_verdict),
        "nominal_closed_loop": nominal,
        "notes": r.gains.notes,
    });
    Ok(Outcome::of(result, Some(holds)))
}

fn verify(
    ctx: &mut Context,
    path: &Path,
    class: Class,
    certificate: &Option<PathBuf>,
    grid_points: usize,
    epsilon: Option<f64>,
) -> Result<Outcome, Failure> {
    let sys = ctx.system(path)?;
    let class: NiClass = class.into();
    let grid = FrequencyGrid::with_points(grid_points)?;
    // A certificate carries its own OSNI level; an explicit flag wins.
    let cert = match certificate {
        Some(p) => {
            let cj: CertificateJson = ctx.load(p)?;
            let (y, eps, cert_class) = cj.parts()?;
            if cert_class != class {
                return Err(Failure::input(format!("certificate is for {cert_class}, requested {class}")));
            }
            Some((y, eps))
        }
        None => None,
    };
    let epsilon = epsilon.or(cert.as_ref().and_then(|c| c.1));
    let freq = match certify::classify_freq(&sys, class, &grid, epsilon) {
        Ok(v) => report::verdict(&v),
        // A pole in the forbidden region is an answer, not a crash.
        Err(e) if e.kind() == nisynth::ErrorKind::Verdict => json!({
            "holds": false,
            "class": class.to_string(),
            "notes": [e.to_string()],
        }),
        Err(e) => return Err(e.into()),
    };
    let mut holds = freq["holds"].as_bool().unwrap_or(false);
    let mut result = json!({ "class": class.to_string(), "grid_points": grid_points, "epsilon": epsilon, "frequency": freq });
    if let Some((y, _)) = cert {
        let (v, c) = certify::verify_certificate(&sys, class, &y, epsilon)?;
        holds &= v.holds;
        result["certificate"] = json!({ "verdict": report::verdict(&v), "residuals": report::residuals(&c) });
    }
    Ok(Outcome::of(result, Some(holds)))
}

fn simulate(
    ctx: &mut Context,
    path: &Path,
    delta: &Option<PathBuf>,
    x0: &str,
    t_end: f64,
    dt: f64,
    samples: usize,
) -> Result<Outcome, Failure> {
    let plant = ctx.system(path)?;
    let sys = match delta {
        Some(p) => {
            let d = ctx.system(p)?;
            sysmodel::interconnect_positive_feedback(&plant, &d)?
        }
        None => plant.clone(),
    };
    let n = sys.states();
    let given = config::parse_vector(x0, "x0")?;
    if given.len() != n && given.len() != plant.states() {
        return Err(Failure::input(format!(
            "x0 has {} entries; expected {n} or the {} plant states",
            given.len(),
            plant.states()
        )));
    }
    let mut x = DVector::zeros(n);
    x.rows_mut(0, given.len()).copy_from_slice(&given);
    let traj = sysmodel::simulate(&sys, &x, &Input::None, t_end, dt)?;
    let stride = ((traj.times.len() - 1) / samples.saturating_sub(1).max(1)).max(1);
    let mut idx: Vec<usize> = (0..traj.times.len()).step_by(stride).collect();
    if idx.last() != Some(&(traj.times.len() - 1)) {
        idx.push(traj.times.len() - 1);
    }
    let trajectory: Vec<Value> = idx
        .iter()
        .map(|&k| json!({ "t": traj.times[k], "x": traj.states[k].as_slice(), "y": traj.outputs[k].as_slice() }))
        .collect();
    let final_state = traj.final_state();
    let result = json!({
        "states": n,
        "t_end": t_end,
        "dt": dt,
        "spectral_abscissa": matkit::eig(&sys.a)?.max_real(),
        "initial_norm": x.norm(),
        "final_norm": final_state.norm(),
        "final_state": final_state.as_slice(),
        "trajectory": trajectory,
    });
    Ok(Outcome::of(result, None))
}

fn dispatch(ctx: &mut Context, cmd: &Command) -> Result<Outcome, Failure> {
    match cmd {
        Command::Analyze { system } => analyze(ctx, system),
        Command::Synthesize { system, target, y2, y3, seed, epsilon, config, certificate_out, closed_loop_out } => {
            synthesize(ctx, system, *target, y2, y3, *seed, *epsilon, config, certificate_out, closed_loop_out)
        }
        Command::Stabilize { system, gamma, y2, y3, seed, config, closed_loop_out } => {
            stabilize(ctx, system, *gamma, y2, y3, *seed, config, closed_loop_out)
        }
        Command::Verify { system, class, certificate, grid_points, epsilon } => {
            verify(ctx, system, *class, certificate, *grid_points, *epsilon)
        }
        Command::Simulate { system, delta, x0, t_end, dt, samples } => {
            simulate(ctx, system, delta, x0, *t_end, *dt, *samples)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_INPUT as u8 } else { EXIT_OK as u8 });
        }
    };
    let start = Instant::now();
    let mut ctx = Context::default();
    let (result, verdict, failure) = match dispatch(&mut ctx, &cli.command) {
        Ok(o) => {
            let failure = o.failure.or_else(|| {
                (o.verdict == Some(false)).then(|| Failure {
                    code: EXIT_VERDICT,
                    kind: "verdict",
                    message: "property does not hold".into(),
                })
            });
            (o.result, o.verdict, failure)
        }
        Err(f) => (Value::Null, (f.code == EXIT_VERDICT).then_some(false), Some(f)),
    };
    let code = failure.as_ref().map_or(EXIT_OK, |f| f.code);
    let rep = Report {
        tool: "nisynth",
        version: env!("CARGO_PKG_VERSION"),
        command: std::env::args().skip(1).collect(),
        inputs: ctx.inputs,
        rng_seed: ctx.rng_seed,
        status: report::status_for(code),
        exit_code: code,
        verdict,
        result,
        error: failure.map(|f| report::ErrorReport { kind: f.kind, message: f.message }),
        timings_ms: BTreeMap::from([("total".to_string(), start.elapsed().as_secs_f64() * 1e3)]),
    };
    let text = if cli.compact { serde_json::to_string(&rep) } else { serde_json::to_string_pretty(&rep) }
        .expect("report serializes");
    match &cli.out {
        Some(p) => {
            if let Err(e) = std::fs::write(p, text + "\n") {
                eprintln!("{}: {e}", p.display());
                return ExitCode::from(EXIT_INPUT as u8);
            }
        }
        None => {
            // A closed pipe is not worth a panic.
            let _ = writeln!(std::io::stdout(), "{text}");
        }
    }
    if let Some(e) = &rep.error {
        eprintln!("nisynth: {}: {}", e.kind, e.message);
    }
    ExitCode::from(code as u8)
}
