//! Argument parsing and subcommand execution.
//!
//! Exit codes: 0 success, 1 invalid input, 2 the solver could not produce
//! or verify a result, 3 a bound or certificate check failed.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::Value;
use smfg_core::dynamics::propagate_follower_flow;
use smfg_core::equilibrium::{check_epsilon_ne, evaluate_policy, mesh_divisions};
use smfg_core::lp::{assemble_lp_capped, dp_certificate, verify_kkt};
use smfg_core::mdp::backward_induction_value;
use smfg_core::random::random_policy;
use smfg_core::sensitivity::{
    check_flow_deviation, check_sandwich, check_value_deviation, describe_jumps, epsilon_sweep, measure_perturbation,
    perturb_model, relaxed_action_experiment, PerturbationMode, PerturbationSpec, SweepOptions, SweepTarget,
    PERTURBATION_SAMPLES,
};
use smfg_core::solver::{inner_worst_case, outer_maximize, resolution_bound, LocalOptions};
use smfg_core::{Caps, Mode, PolicyKernel, StackelbergModel, Strategy};

use crate::config::{load_model_file, LoadError};
use crate::report::{
    sweep_csv, BoundCheckReport, CertificateJson, CertifyJson, Envelope, FlowDeviationJson, KktResidualsJson, LpJson,
    OuterJson, PerturbationJson, RelaxedJson, SandwichJson, SolveJson, SweepJson, ValueDeviationJson,
};

/// Environment variable overriding the policy enumeration cap.
pub const CAP_ENV: &str = "SMFG_CAP_POLICIES";

#[derive(Debug, Parser)]
#[command(
    name = "smfg",
    version,
    about = "Solve and probe finite-horizon Stackelberg mean-field games"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Model configuration (JSON).
    #[arg(long, global = true, value_name = "PATH")]
    pub model: Option<PathBuf>,
    /// Equilibrium tolerance ε.
    #[arg(long, global = true, value_name = "F")]
    pub epsilon: Option<f64>,
    /// Relaxation ε' for robustness experiments.
    #[arg(long = "epsilon-prime", global = true, value_name = "F")]
    pub epsilon_prime: Option<f64>,
    #[arg(long, global = true, value_enum, default_value_t = StrategyArg::Mesh)]
    pub strategy: StrategyArg,
    /// Mesh spacing h; 1/h must be an integer.
    #[arg(long, global = true, value_name = "F", default_value_t = 0.01)]
    pub mesh: f64,
    /// Random starts for local search.
    #[arg(long, global = true, value_name = "N", default_value_t = 8)]
    pub starts: usize,
    #[arg(long, global = true, value_name = "N", default_value_t = 0)]
    pub seed: u64,
    #[arg(long = "penalty-start", global = true, value_name = "F", default_value_t = 10.0)]
    pub penalty_start: f64,
    #[arg(long = "penalty-max", global = true, value_name = "F", default_value_t = 1e8)]
    pub penalty_max: f64,
    #[arg(long = "min-step", global = true, value_name = "F", default_value_t = 1e-7)]
    pub min_step: f64,
    #[arg(long, global = true, value_enum, default_value_t = ModeArg::Pessimistic)]
    pub mode: ModeArg,
    /// Report path; the report goes to stdout when omitted.
    #[arg(long, global = true, value_name = "PATH")]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    pub format: Format,
    /// Worker threads; 1 runs serially.
    #[arg(long, global = true, value_name = "N")]
    pub threads: Option<usize>,
    /// Omit wall-clock fields so identical runs produce identical reports.
    #[arg(long = "no-timestamp", global = true)]
    pub no_timestamp: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum StrategyArg {
    Enumerate,
    Mesh,
    Local,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Pessimistic,
    Optimistic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Example {
    /// Predator game with leader actions g and l, solved on the true model
    /// and on a reward-perturbed copy with and without relaxation.
    TwoAction,
    /// ε-sweep of the one-action predator game and its jump.
    Predator,
    /// Gathering equilibria of the two-state majority game.
    Majority,
}

#[derive(Debug, Clone, Args)]
pub struct PerturbArgs {
    #[arg(long = "delta-p", value_name = "F", default_value_t = 0.0)]
    pub delta_p: f64,
    #[arg(long = "delta-r", value_name = "F", default_value_t = 0.0)]
    pub delta_r: f64,
    /// random-seeded, builtin-example2 or builtin-example3.
    #[arg(long, value_name = "KIND", default_value = "random-seeded")]
    pub perturbation: String,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Inner problem for one leader action.
    Solve {
        #[arg(long, default_value_t = 0)]
        action: usize,
    },
    /// Leader's value over all actions.
    Outer,
    /// Values over a grid of ε with monotonicity and jump checks.
    Sweep {
        /// Sweep one action instead of the outer value.
        #[arg(long)]
        action: Option<usize>,
        /// `start:stop:step`.
        #[arg(long, default_value = "0:0.4:0.005")]
        grid: String,
        /// Explicit comma-separated grid, overriding --grid.
        #[arg(long, value_delimiter = ',')]
        epsilons: Option<Vec<f64>>,
        #[arg(long = "jump-tol", default_value_t = 0.05)]
        jump_tol: f64,
        #[arg(long, default_value_t = 1e-6)]
        refine: f64,
    },
    /// Perturb the model and check flow, value and sandwich bounds.
    Perturb {
        #[command(flatten)]
        perturb: PerturbArgs,
        /// Restrict the checks to one leader action.
        #[arg(long)]
        action: Option<usize>,
        /// Random policies per action for the deviation checks.
        #[arg(long, default_value_t = 8)]
        policies: usize,
    },
    /// Leader action chosen on a perturbed model, with and without relaxation.
    Relaxed {
        #[command(flatten)]
        perturb: PerturbArgs,
    },
    /// KKT certificate of the follower's best response against the flow a
    /// policy induces.
    Certify {
        #[arg(long, default_value_t = 0)]
        action: usize,
        /// Policy as `[t][s][a]`, or any report embedding a witness.
        #[arg(long, value_name = "PATH")]
        policy: PathBuf,
        #[arg(long, default_value_t = 1e-9)]
        tol: f64,
        /// Include the LP data and the certificate vectors.
        #[arg(long = "include-lp")]
        include_lp: bool,
    },
    /// Re-run one of the closed-form example games and compare.
    Reproduce {
        #[arg(long, value_enum)]
        example: Example,
        #[arg(long, default_value_t = 0.2)]
        epsilon0: f64,
        /// Reward perturbation used by the two-action example.
        #[arg(long = "delta-r", default_value_t = 0.05)]
        delta_r: f64,
    },
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Load(#[from] LoadError),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{0}")]
    Core(#[from] smfg_core::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        use smfg_core::Error as E;
        match self {
            CliError::Core(E::BoundViolation(_)) => 3,
            CliError::Core(
                E::NoFeasibleCandidate { .. }
                | E::NormalizationDrift { .. }
                | E::CertificateResidual { .. }
                | E::VerificationFailed(_)
                | E::InfeasiblePerturbation { .. },
            ) => 2,
            _ => 1,
        }
    }
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

/// What a command produced. A report with a failed check still gets
/// written; `violation` then sets exit code 3.
struct Outcome {
    report: String,
    summary: String,
    violation: Option<String>,
}

struct Ctx {
    common: Common,
    caps: Caps,
    timing: bool,
}

impl Ctx {
    fn model(&self) -> Result<StackelbergModel, CliError> {
        let path = self.common.model.as_ref().ok_or_else(|| usage("--model is required"))?;
        Ok(load_model_file(path)?)
    }

    fn mode(&self) -> Mode {
        match self.common.mode {
            ModeArg::Pessimistic => Mode::Pessimistic,
            ModeArg::Optimistic => Mode::Optimistic,
        }
    }

    fn epsilon(&self) -> Result<f64, CliError> {
        let e = self.common.epsilon.unwrap_or(0.0);
        nonneg("--epsilon", e)?;
        Ok(e)
    }

    fn epsilon_prime(&self) -> Result<f64, CliError> {
        let e = self
            .common
            .epsilon_prime
            .ok_or_else(|| usage("--epsilon-prime is required for this command"))?;
        positive("--epsilon-prime", e)?;
        Ok(e)
    }

    fn strategy(&self) -> Result<Strategy, CliError> {
        let c = &self.common;
        Ok(match c.strategy {
            StrategyArg::Enumerate => Strategy::Enumerate,
            StrategyArg::Mesh => {
                mesh_divisions(c.mesh).map_err(|e| usage(format!("--mesh: {e}")))?;
                Strategy::Mesh { h: c.mesh }
            }
            StrategyArg::Local => {
                positive("--penalty-start", c.penalty_start)?;
                positive("--penalty-max", c.penalty_max)?;
                positive("--min-step", c.min_step)?;
                if c.penalty_max < c.penalty_start {
                    return Err(usage("--penalty-max must be at least --penalty-start"));
                }
                Strategy::Local(LocalOptions {
                    starts: c.starts,
                    seed: c.seed,
                    min_step: c.min_step,
                    penalty_start: c.penalty_start,
                    penalty_max: c.penalty_max,
                    ..LocalOptions::default()
                })
            }
        })
    }

    fn json_only(&self, command: &str) -> Result<(), CliError> {
        if self.common.format == Format::Csv {
            return Err(usage(format!(
                "--format csv is only available for sweep, not {command}"
            )));
        }
        Ok(())
    }
}

fn nonneg(flag: &str, v: f64) -> Result<(), CliError> {
    if !(v >= 0.0 && v.is_finite()) {
        return Err(usage(format!("{flag} must be a finite non-negative number, got {v}")));
    }
    Ok(())
}

fn positive(flag: &str, v: f64) -> Result<(), CliError> {
    if !(v > 0.0 && v.is_finite()) {
        return Err(usage(format!("{flag} must be a finite positive number, got {v}")));
    }
    Ok(())
}

fn check_action(model: &StackelbergModel, a: usize) -> Result<(), CliError> {
    let n = model.dims().leader_actions;
    if a >= n {
        return Err(usage(format!(
            "--action {a} is out of range; the model has {n} leader actions"
        )));
    }
    Ok(())
}

fn caps_from_env() -> Result<Caps, CliError> {
    let mut caps = Caps::default();
    if let Ok(v) = std::env::var(CAP_ENV) {
        caps.policies = v
            .trim()
            .parse::<u128>()
            .map_err(|_| usage(format!("{CAP_ENV}={v:?} is not a non-negative integer")))?;
    }
    Ok(caps)
}

/// Parses `start:stop:step` into the grid points, rounded to twelve
/// decimals so that e.g. `0:0.4:0.005` contains 0.2 exactly.
pub fn parse_grid(spec: &str) -> Result<Vec<f64>, String> {
    let parts: Vec<&str> = spec.split(':').collect();
    let [a, b, h] = parts.as_slice() else {
        return Err(format!("--grid {spec:?}: expected start:stop:step"));
    };
    let num = |s: &str| {
        s.trim()
            .parse::<f64>()
            .map_err(|_| format!("--grid {spec:?}: {s:?} is not a number"))
    };
    let (a, b, h) = (num(a)?, num(b)?, num(h)?);
    if !(a >= 0.0 && b >= a && h > 0.0 && b.is_finite()) {
        return Err(format!("--grid {spec:?}: need 0 <= start <= stop and step > 0"));
    }
    let n = ((b - a) / h + 1e-9).floor() as usize;
    if n > 1_000_000 {
        return Err(format!("--grid {spec:?}: more than a million points"));
    }
    Ok((0..=n).map(|i| ((a + i as f64 * h) * 1e12).round() / 1e12).collect())
}

fn perturbation_spec(p: &PerturbArgs, seed: u64) -> Result<PerturbationSpec, CliError> {
    nonneg("--delta-p", p.delta_p)?;
    nonneg("--delta-r", p.delta_r)?;
    let mode = PerturbationMode::parse(&p.perturbation).ok_or_else(|| {
        usage(format!(
            "--perturbation {:?}: expected random-seeded, builtin-example2 or builtin-example3",
            p.perturbation
        ))
    })?;
    Ok(PerturbationSpec {
        delta_p: p.delta_p,
        delta_r: p.delta_r,
        mode,
        seed,
    })
}

fn envelope<T: serde::Serialize>(ctx: &Ctx, command: &'static str, model: &StackelbergModel, result: T) -> String {
    Envelope::new(command, model.kind().as_str(), ctx.timing, result).to_json()
}

fn cmd_solve(ctx: &Ctx, action: usize) -> Result<Outcome, CliError> {
    ctx.json_only("solve")?;
    let model = ctx.model()?;
    check_action(&model, action)?;
    let eps = ctx.epsilon()?;
    let strategy = ctx.strategy()?;
    let r = inner_worst_case(&model, action, eps, ctx.mode(), &strategy, &ctx.caps)?;
    let json = SolveJson::new(&model, &r, resolution_bound(&model, &strategy), ctx.timing);
    let summary = format!(
        "solve: J = {:.7} for action {} at epsilon {} ({}, {} evaluations)",
        r.value, json.action_label, eps, json.guarantee, r.evals
    );
    Ok(Outcome {
        report: envelope(ctx, "solve", &model, json),
        summary,
        violation: None,
    })
}

fn cmd_outer(ctx: &Ctx) -> Result<Outcome, CliError> {
    ctx.json_only("outer")?;
    let model = ctx.model()?;
    let eps = ctx.epsilon()?;
    let strategy = ctx.strategy()?;
    let o = outer_maximize(&model, eps, ctx.mode(), &strategy, &ctx.caps)?;
    let json = OuterJson::new(&model, &o, resolution_bound(&model, &strategy), ctx.timing);
    let summary = format!(
        "outer: V = {:.7} at action {} (epsilon {})",
        o.value, json.best_action_label, eps
    );
    Ok(Outcome {
        report: envelope(ctx, "outer", &model, json),
        summary,
        violation: None,
    })
}

fn cmd_sweep(
    ctx: &Ctx,
    action: Option<usize>,
    grid: &str,
    epsilons: Option<&[f64]>,
    jump_tol: f64,
    refine: f64,
) -> Result<Outcome, CliError> {
    let model = ctx.model()?;
    positive("--jump-tol", jump_tol)?;
    positive("--refine", refine)?;
    let grid = match epsilons {
        Some(e) => e.to_vec(),
        None => parse_grid(grid).map_err(usage)?,
    };
    let target = match action {
        Some(a) => {
            check_action(&model, a)?;
            SweepTarget::Action(a)
        }
        None => SweepTarget::Outer,
    };
    let opts = SweepOptions {
        jump_tol,
        refine_width: refine,
    };
    let r = epsilon_sweep(&model, target, &grid, ctx.mode(), &ctx.strategy()?, &ctx.caps, &opts)?;
    let violation = (!r.monotone()).then(|| {
        format!(
            "values are not monotone in epsilon between {:?}",
            r.monotonicity_violations
        )
    });
    let summary = format!(
        "sweep: {} points, {}, {}",
        r.rows.len(),
        if r.monotone() { "monotone" } else { "NOT monotone" },
        describe_jumps(&r)
    );
    let report = match ctx.common.format {
        Format::Csv => sweep_csv(&r),
        Format::Json => envelope(ctx, "sweep", &model, SweepJson::new(&r)),
    };
    Ok(Outcome {
        report,
        summary,
        violation,
    })
}

fn cmd_perturb(ctx: &Ctx, p: &PerturbArgs, action: Option<usize>, policies: usize) -> Result<Outcome, CliError> {
    ctx.json_only("perturb")?;
    let model = ctx.model()?;
    let spec = perturbation_spec(p, ctx.common.seed)?;
    let perturbed = perturb_model(&model, &spec)?;
    let mut rng = ChaCha8Rng::seed_from_u64(ctx.common.seed.wrapping_add(1));
    let check = measure_perturbation(&model, &perturbed, PERTURBATION_SAMPLES, &mut rng)?;
    let actions: Vec<usize> = match action {
        Some(a) => {
            check_action(&model, a)?;
            vec![a]
        }
        None => (0..model.dims().leader_actions).collect(),
    };
    let dims = *model.dims();
    let mut pols = vec![PolicyKernel::uniform(&dims)];
    for a in 0..dims.follower_actions {
        pols.push(PolicyKernel::constant(&dims, a)?);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(ctx.common.seed.wrapping_add(2));
    pols.extend((0..policies).map(|_| random_policy(&mut rng, &dims)));
    let mut flow = Vec::new();
    let mut value = Vec::new();
    for &la in &actions {
        for (i, pol) in pols.iter().enumerate() {
            flow.push(FlowDeviationJson::new(
                la,
                i,
                &check_flow_deviation(&model, &perturbed, la, pol, spec.delta_p)?,
            ));
            value.push(ValueDeviationJson::new(
                la,
                i,
                &check_value_deviation(&model, &perturbed, la, pol, spec.delta_p, spec.delta_r)?,
            ));
        }
    }
    let mut sandwich = Vec::new();
    if ctx.common.epsilon_prime.is_some() {
        let (eps, ep) = (ctx.epsilon()?, ctx.epsilon_prime()?);
        let strategy = ctx.strategy()?;
        for &la in &actions {
            let r = check_sandwich(
                &model,
                &perturbed,
                la,
                eps,
                ep,
                spec.delta_p,
                spec.delta_r,
                &strategy,
                &ctx.caps,
            )?;
            sandwich.push(SandwichJson::from(&r));
        }
    }
    let failures = flow.iter().filter(|f| !f.passed).count()
        + value.iter().filter(|v| !v.passed).count()
        + sandwich.iter().filter(|s| !s.passed).count();
    let lip = model.estimate_lipschitz();
    let max_flow = flow.iter().map(|f| f.max_ratio).fold(0.0, f64::max);
    let max_value = value.iter().map(|v| v.ratio).fold(0.0, f64::max);
    let report = BoundCheckReport {
        perturbation: PerturbationJson::new(&spec, &check),
        lipschitz: lip.c,
        lipschitz_method: lip.method.as_str(),
        flow_deviation: flow,
        value_deviation: value,
        sandwich,
        passed: failures == 0,
    };
    let summary = format!(
        "perturb: {} checks, {} failed; max flow ratio {:.4}, max value ratio {:.4}",
        report.flow_deviation.len() + report.value_deviation.len() + report.sandwich.len(),
        failures,
        max_flow,
        max_value
    );
    Ok(Outcome {
        report: envelope(ctx, "perturb", &model, report),
        summary,
        violation: (failures > 0).then(|| format!("{failures} bound checks failed")),
    })
}

fn cmd_relaxed(ctx: &Ctx, p: &PerturbArgs) -> Result<Outcome, CliError> {
    ctx.json_only("relaxed")?;
    let model = ctx.model()?;
    let spec = perturbation_spec(p, ctx.common.seed)?;
    let perturbed = perturb_model(&model, &spec)?;
    let (eps, ep) = (ctx.epsilon()?, ctx.epsilon_prime()?);
    let r = relaxed_action_experiment(
        &model,
        &perturbed,
        eps,
        ep,
        spec.delta_p,
        spec.delta_r,
        &ctx.strategy()?,
        &ctx.caps,
    )?;
    let json = RelaxedJson::new(&model, &r);
    let summary = format!(
        "relaxed: V = {:.7} at {}; relaxed choice {} (gap {:.7}); unrelaxed choice {} (gap {:.7})",
        r.true_value, json.true_action, json.relaxed_action, r.relaxed_gap, json.unrelaxed_action, r.unrelaxed_gap
    );
    Ok(Outcome {
        report: envelope(ctx, "relaxed", &model, json),
        summary,
        violation: None,
    })
}

/// Finds a `[t][s][a]` policy in a file: a bare array, `policy`,
/// `witness.policy`, or a report's `result.witness.policy` /
/// `result.reports[action].witness.policy`.
fn read_policy(path: &Path, model: &StackelbergModel, action: usize) -> Result<PolicyKernel, CliError> {
    let shown = path.display().to_string();
    let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
        path: shown.clone(),
        source,
    })?;
    let v: Value = serde_json::from_str(&text).map_err(|e| usage(format!("{shown}: not valid JSON: {e}")))?;
    let candidates: [(&str, Option<&Value>); 5] = [
        ("<root>", v.is_array().then_some(&v)),
        ("policy", v.get("policy")),
        ("witness.policy", v.pointer("/witness/policy")),
        ("result.witness.policy", v.pointer("/result/witness/policy")),
        (
            "result.reports[action].witness.policy",
            v.pointer(&format!("/result/reports/{action}/witness/policy")),
        ),
    ];
    let (at, tensor) = candidates
        .iter()
        .find_map(|(at, t)| t.map(|t| (*at, t)))
        .ok_or_else(|| usage(format!("{shown}: no policy array found")))?;
    let d = model.dims();
    let probs = crate::config::tensor(tensor, at, &[d.steps(), d.follower_states, d.follower_actions])
        .map_err(|e| usage(format!("{shown}: {e}")))?;
    PolicyKernel::for_model(model, probs).map_err(|e| usage(format!("{shown}: {e}")))
}

fn cmd_certify(ctx: &Ctx, action: usize, policy: &Path, tol: f64, include_lp: bool) -> Result<Outcome, CliError> {
    ctx.json_only("certify")?;
    positive("--tol", tol)?;
    let model = ctx.model()?;
    check_action(&model, action)?;
    let policy = read_policy(policy, &model, action)?;
    let flow = propagate_follower_flow(&model, action, &policy)?;
    let values = backward_induction_value(&model, action, &flow)?;
    let lp = assemble_lp_capped(&model, action, &flow, ctx.caps.dense)?;
    let cert = dp_certificate(&lp, &values, &model, action, &flow)?;
    let kkt = verify_kkt(&lp, &cert, tol)?;
    let cand = evaluate_policy(&model, action, &policy)?;
    let member = match ctx.common.epsilon {
        Some(e) => {
            nonneg("--epsilon", e)?;
            Some(check_epsilon_ne(&model, action, &policy, &flow, e)?.1)
        }
        None => None,
    };
    let json = CertifyJson {
        action,
        tol,
        residuals: KktResidualsJson::from(&kkt),
        passed: kkt.passed(),
        follower_value: values.value(),
        exploitability: cand.exploitability,
        leader_return: cand.leader_return,
        epsilon: ctx.common.epsilon,
        member,
        lp: include_lp.then(|| LpJson::from(&lp)),
        certificate: include_lp.then(|| CertificateJson::from(&cert)),
    };
    let worst = kkt.violations().iter().map(|(_, r)| *r).fold(0.0, f64::max);
    let mut summary = format!(
        "certify: KKT {} (largest residual {:.3e}, tol {:.1e}); exploitability {:.3e}",
        if kkt.passed() { "passed" } else { "FAILED" },
        worst,
        tol,
        cand.exploitability
    );
    if let (Some(e), Some(m)) = (ctx.common.epsilon, member) {
        summary.push_str(&format!(
            "; {} at epsilon {e}",
            if m { "member" } else { "NOT a member" }
        ));
    }
    let violation = match (kkt.first_failure(), member) {
        (Some((cond, r)), _) => Some(format!("KKT residual {cond} = {r:e} above {tol:e}")),
        (None, Some(false)) => Some("policy is not an equilibrium at the given epsilon".to_string()),
        _ => None,
    };
    Ok(Outcome {
        report: envelope(ctx, "certify", &model, json),
        summary,
        violation,
    })
}

#[derive(serde::Serialize)]
struct TwoActionJson {
    epsilon0: f64,
    delta_r: f64,
    experiment: RelaxedJson,
    expected_value: f64,
    matches: bool,
}

#[derive(serde::Serialize)]
struct PredatorSweepJson {
    epsilon0: f64,
    sweep: SweepJson,
    expected_jump: f64,
    expected_left: f64,
    matches: bool,
}

#[derive(serde::Serialize)]
struct MajorityJson {
    exploitability_gather: Vec<f64>,
    outer: OuterJson,
    matches: bool,
}

fn cmd_reproduce(ctx: &Ctx, example: Example, eps0: f64, delta_r: f64) -> Result<Outcome, CliError> {
    ctx.json_only("reproduce")?;
    if !(0.0..1.0).contains(&eps0) {
        return Err(usage(format!("--epsilon0 must lie in [0, 1), got {eps0}")));
    }
    match example {
        Example::TwoAction => {
            positive("--delta-r", delta_r)?;
            let model = StackelbergModel::predator_two_action(eps0, None)?;
            let spec = PerturbationSpec {
                delta_p: 0.0,
                delta_r,
                mode: PerturbationMode::BuiltinExample3,
                seed: ctx.common.seed,
            };
            let perturbed = perturb_model(&model, &spec)?;
            // Smallest admissible relaxation: 2 (T + 1) delta_r with T = 1.
            let ep = match ctx.common.epsilon_prime {
                Some(_) => ctx.epsilon_prime()?,
                None => 4.0 * delta_r,
            };
            let eps = ctx.common.epsilon.unwrap_or(eps0);
            nonneg("--epsilon", eps)?;
            let r = relaxed_action_experiment(&model, &perturbed, eps, ep, 0.0, delta_r, &ctx.strategy()?, &ctx.caps)?;
            let json = RelaxedJson::new(&model, &r);
            let expected = (1.0 - eps0) / 3.0;
            let matches = (r.true_value - expected).abs() <= 1e-6
                && r.true_action == 1
                && r.relaxed_action == 1
                && r.unrelaxed_action == 0
                && r.true_values[0].abs() <= 1e-9;
            let summary = format!(
                "reproduce two-action: V^l = {:.7}, a* = {}; unrelaxed argmax {} has true value {:.7} (gap {:.7}); relaxed argmax {} (gap {:.7})",
                r.true_value,
                json.true_action,
                json.unrelaxed_action,
                r.true_values[r.unrelaxed_action],
                r.unrelaxed_gap,
                json.relaxed_action,
                r.relaxed_gap
            );
            let report = envelope(
                ctx,
                "reproduce",
                &model,
                TwoActionJson {
                    epsilon0: eps0,
                    delta_r,
                    experiment: json,
                    expected_value: expected,
                    matches,
                },
            );
            Ok(Outcome {
                report,
                summary,
                violation: (!matches).then(|| "two-action example does not match its closed form".to_string()),
            })
        }
        Example::Predator => {
            let model = StackelbergModel::predator(eps0, None)?;
            let grid = parse_grid("0:0.4:0.005").map_err(usage)?;
            let r = epsilon_sweep(
                &model,
                SweepTarget::Action(0),
                &grid,
                Mode::Pessimistic,
                &ctx.strategy()?,
                &ctx.caps,
                &SweepOptions::default(),
            )?;
            let resolution = resolution_bound(&model, &ctx.strategy()?).unwrap_or(0.0).max(5e-3);
            let matches = r.monotone()
                && r.jumps.len() == 1
                && (r.jumps[0].location - eps0).abs() <= 1e-5
                && (r.jumps[0].left - (1.0 - eps0)).abs() <= resolution
                && r.jumps[0].right.abs() <= 1e-9;
            let summary = format!("reproduce predator: {}", describe_jumps(&r));
            let report = envelope(
                ctx,
                "reproduce",
                &model,
                PredatorSweepJson {
                    epsilon0: eps0,
                    sweep: SweepJson::new(&r),
                    expected_jump: eps0,
                    expected_left: 1.0 - eps0,
                    matches,
                },
            );
            Ok(Outcome {
                report,
                summary,
                violation: (!matches).then(|| "predator sweep does not match its closed form".to_string()),
            })
        }
        Example::Majority => {
            let grid = vec![vec![1.0, 1.0], vec![1.0, 2.0], vec![2.0, 1.0]];
            let model = StackelbergModel::majority(2, 2, grid, None)?;
            let dims = *model.dims();
            let gather = (0..2)
                .map(|k| {
                    let p = PolicyKernel::constant(&dims, k)?;
                    Ok(evaluate_policy(&model, 0, &p)?.exploitability)
                })
                .collect::<Result<Vec<f64>, smfg_core::Error>>()?;
            let o = outer_maximize(&model, 0.0, Mode::Pessimistic, &Strategy::Enumerate, &ctx.caps)?;
            let matches = gather.iter().all(|e| *e <= 1e-10) && o.value.abs() <= 1e-10 && o.best_action == 0;
            let summary = format!(
                "reproduce majority: gathering exploitability {:.1e} / {:.1e}; V = {:.7} at {}",
                gather[0],
                gather[1],
                o.value,
                model.labels().leader_actions[o.best_action]
            );
            let report = envelope(
                ctx,
                "reproduce",
                &model,
                MajorityJson {
                    exploitability_gather: gather,
                    outer: OuterJson::new(&model, &o, Some(0.0), ctx.timing),
                    matches,
                },
            );
            Ok(Outcome {
                report,
                summary,
                violation: (!matches).then(|| "majority example does not match".to_string()),
            })
        }
    }
}

fn execute(cli: &Cli) -> Result<Outcome, CliError> {
    let ctx = Ctx {
        common: cli.common.clone(),
        caps: caps_from_env()?,
        timing: !cli.common.no_timestamp,
    };
    for (flag, v) in [
        ("--epsilon", ctx.common.epsilon),
        ("--epsilon-prime", ctx.common.epsilon_prime),
    ] {
        if let Some(v) = v {
            nonneg(flag, v)?;
        }
    }
    match &cli.command {
        Command::Solve { action } => cmd_solve(&ctx, *action),
        Command::Outer => cmd_outer(&ctx),
        Command::Sweep {
            action,
            grid,
            epsilons,
            jump_tol,
            refine,
        } => cmd_sweep(&ctx, *action, grid, epsilons.as_deref(), *jump_tol, *refine),
        Command::Perturb {
            perturb,
            action,
            policies,
        } => cmd_perturb(&ctx, perturb, *action, *policies),
        Command::Relaxed { perturb } => cmd_relaxed(&ctx, perturb),
        Command::Certify {
            action,
            policy,
            tol,
            include_lp,
        } => cmd_certify(&ctx, *action, policy, *tol, *include_lp),
        Command::Reproduce {
            example,
            epsilon0,
            delta_r,
        } => cmd_reproduce(&ctx, *example, *epsilon0, *delta_r),
    }
}

fn emit(cli: &Cli, outcome: &Outcome, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<(), CliError> {
    match &cli.common.out {
        Some(path) => {
            crate::report::write_atomic(path, outcome.report.as_bytes()).map_err(|source| CliError::Io {
                path: path.display().to_string(),
                source,
            })?;
            let _ = writeln!(stdout, "{}", outcome.summary);
        }
        None => {
            let _ = stdout.write_all(outcome.report.as_bytes());
            let _ = writeln!(stderr, "{}", outcome.summary);
        }
    }
    Ok(())
}

/// Runs the command line `args` (including the program name) and returns
/// the exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(stdout, "{e}");
                    0
                }
                _ => {
                    let _ = write!(stderr, "{e}");
                    1
                }
            };
        }
    };
    let result = match cli.common.threads {
        Some(0) => Err(usage("--threads must be at least 1")),
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(|| execute(&cli)),
            Err(e) => Err(usage(format!("--threads {n}: {e}"))),
        },
        None => execute(&cli),
    };
    let outcome = match result {
        Ok(o) => o,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            return e.exit_code();
        }
    };
    if let Err(e) = emit(&cli, &outcome, stdout, stderr) {
        let _ = writeln!(stderr, "error: {e}");
        return e.exit_code();
    }
    match &outcome.violation {
        Some(v) => {
            let _ = writeln!(stderr, "check failed: {v}");
            3
        }
        None => 0,
    }
}
