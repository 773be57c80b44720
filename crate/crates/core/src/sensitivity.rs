//! Model perturbations and the checks built on them: deviation bounds for
//! flows and follower values under a shared policy, the two-sided bound
//! relating the true and perturbed leader objectives, the relaxed-game
//! experiment, and ε-sweeps with jump detection.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dynamics::{leader_marginals_from, propagate_with_stages, PolicyKernel};
use crate::equilibrium::Caps;
use crate::math::powi;
use crate::mdp::backward_induction_from;
use crate::model::{Maps, Overlay, StackelbergModel};
use crate::random::simplex_point;
use crate::solver::{
    inner_frontier, inner_worst_case, outer_from_reports, outer_maximize, report_from_frontier, resolution_bound,
    Frontier, Guarantee, Mode, Strategy,
};
use crate::{Error, Result};

/// Absolute slack added to every bound comparison.
pub const BOUND_TOL: f64 = 1e-12;

/// How a perturbation is generated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PerturbationMode {
    /// Seeded mixing of every transition row and initial distribution
    /// towards a random distribution with weight at most `delta_p`, and
    /// seeded reward shifts in `[-delta_r, delta_r]`.
    RandomSeeded,
    /// The one-action predator game with the prey's reward at `e` lowered
    /// by `delta_r`.
    BuiltinExample2,
    /// The two-action predator game with the prey's reward at `e` lowered
    /// by `delta_r`.
    BuiltinExample3,
}

impl PerturbationMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            PerturbationMode::RandomSeeded => "random-seeded",
            PerturbationMode::BuiltinExample2 => "builtin-example2",
            PerturbationMode::BuiltinExample3 => "builtin-example3",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "random-seeded" | "random" => Some(PerturbationMode::RandomSeeded),
            "builtin-example2" => Some(PerturbationMode::BuiltinExample2),
            "builtin-example3" => Some(PerturbationMode::BuiltinExample3),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerturbationSpec {
    /// Largest entrywise change of transitions and initial distributions.
    pub delta_p: f64,
    /// Largest entrywise change of rewards.
    pub delta_r: f64,
    pub mode: PerturbationMode,
    pub seed: u64,
}

impl PerturbationSpec {
    pub fn check(&self) -> Result<()> {
        for (name, v) in [("delta_p", self.delta_p), ("delta_r", self.delta_r)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::InvalidInput(format!(
                    "{name} must be finite and non-negative, got {v}"
                )));
            }
        }
        Ok(())
    }
}

/// Largest observed entrywise deviations between two models.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerturbationCheck {
    pub transition: f64,
    pub reward: f64,
    pub initial: f64,
    pub samples: usize,
}

/// Entrywise deviations at every vertex and `samples` random points of the
/// simplex, over all epochs and leader actions, for both players.
pub fn measure_perturbation<R: Rng + ?Sized>(
    model: &StackelbergModel,
    perturbed: &StackelbergModel,
    samples: usize,
    rng: &mut R,
) -> Result<PerturbationCheck> {
    let d = *model.dims();
    if *perturbed.dims() != d {
        return Err(Error::DimensionMismatch(
            "perturbed model has different dimensions".into(),
        ));
    }
    let j = d.joint();
    let mut points: Vec<Vec<f64>> = (0..j)
        .map(|k| {
            let mut v = vec![0.0; j];
            v[k] = 1.0;
            v
        })
        .collect();
    points.extend((0..samples).map(|_| simplex_point(rng, j)));
    let mut out = PerturbationCheck {
        transition: 0.0,
        reward: 0.0,
        initial: crate::math::max_abs_diff(model.follower_initial(), perturbed.follower_initial()).max(
            crate::math::max_abs_diff(model.leader_initial(), perturbed.leader_initial()),
        ),
        samples: points.len(),
    };
    for l in &points {
        for t in 0..d.steps() {
            for la in 0..d.leader_actions {
                let a = model.stage(t, la, l);
                let b = perturbed.stage(t, la, l);
                if t < d.horizon {
                    out.transition = out
                        .transition
                        .max(crate::math::max_abs_diff(&a.follower_p, &b.follower_p))
                        .max(crate::math::max_abs_diff(&a.leader_p, &b.leader_p));
                }
                out.reward = out
                    .reward
                    .max(crate::math::max_abs_diff(&a.follower_r, &b.follower_r))
                    .max(crate::math::max_abs_diff(&a.leader_r, &b.leader_r));
            }
        }
    }
    Ok(out)
}

fn mix(p: &[f64], q: &[f64], eta: f64) -> Vec<f64> {
    p.iter().zip(q).map(|(a, b)| (1.0 - eta) * a + eta * b).collect()
}

fn random_overlay(model: &StackelbergModel, spec: &PerturbationSpec, rng: &mut ChaCha8Rng) -> Overlay {
    let d = model.dims();
    let blocks = d.leader_actions * d.steps();
    let (ns, nl, j) = (d.follower_states, d.leader_states, d.joint());
    let eta_max = spec.delta_p.min(1.0);
    let eta = |rng: &mut ChaCha8Rng| {
        if eta_max > 0.0 {
            rng.random_range(0.0..=eta_max)
        } else {
            0.0
        }
    };
    let shift = |rng: &mut ChaCha8Rng| {
        if spec.delta_r > 0.0 {
            rng.random_range(-spec.delta_r..=spec.delta_r)
        } else {
            0.0
        }
    };
    let mut o = Overlay {
        follower_eta: Vec::with_capacity(blocks * j),
        follower_target: Vec::with_capacity(blocks * j * ns),
        follower_shift: Vec::with_capacity(blocks * j),
        leader_eta: Vec::with_capacity(blocks * nl),
        leader_target: Vec::with_capacity(blocks * nl * nl),
        leader_shift: Vec::with_capacity(blocks * nl),
        follower_cap: model.reward_bounds().0.max(1.0),
        leader_cap: model.reward_bounds().1.max(1.0),
    };
    for _ in 0..blocks {
        for _ in 0..j {
            o.follower_eta.push(eta(rng));
            o.follower_target.extend(simplex_point(rng, ns));
            o.follower_shift.push(shift(rng));
        }
        for _ in 0..nl {
            o.leader_eta.push(eta(rng));
            o.leader_target.extend(simplex_point(rng, nl));
            o.leader_shift.push(shift(rng));
        }
    }
    o
}

/// Number of random points used to re-verify a perturbation.
pub const PERTURBATION_SAMPLES: usize = 1000;

/// A `(delta_p, delta_r)`-perturbation of `model`.
///
/// Random mode mixes each transition row with a seeded distribution `q`
/// as `(1 - eta) P + eta q`, `eta <= delta_p`, which moves every entry by at
/// most `delta_p` for every population distribution and keeps rows in the
/// simplex; rewards get seeded constant shifts. The builtin modes lower
/// the prey's reward at the exposed location. The result is re-measured
/// at simplex vertices and random points before it is returned.
pub fn perturb_model(model: &StackelbergModel, spec: &PerturbationSpec) -> Result<StackelbergModel> {
    spec.check()?;
    let perturbed = match spec.mode {
        PerturbationMode::RandomSeeded => {
            if spec.delta_p == 0.0 && spec.delta_r == 0.0 {
                return Ok(model.clone());
            }
            if model.is_perturbed() {
                return Err(Error::InvalidInput(
                    "model already carries a random perturbation".into(),
                ));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
            let overlay = random_overlay(model, spec, &mut rng);
            let eta_max = spec.delta_p.min(1.0);
            let init = |v: &[f64], rng: &mut ChaCha8Rng| {
                let q = simplex_point(rng, v.len());
                let eta = if eta_max > 0.0 {
                    rng.random_range(0.0..=eta_max)
                } else {
                    0.0
                };
                let mut m = mix(v, &q, eta);
                // Restore an exact unit sum after mixing.
                let s: f64 = m.iter().sum();
                m.iter_mut().for_each(|x| *x /= s);
                m
            };
            let fi = init(model.follower_initial(), &mut rng);
            let li = init(model.leader_initial(), &mut rng);
            model.with_parts(model.maps().clone(), fi, li, Some(overlay))?
        }
        PerturbationMode::BuiltinExample2 | PerturbationMode::BuiltinExample3 => {
            let want_two = spec.mode == PerturbationMode::BuiltinExample3;
            let p = match model.predator_params() {
                Some(p) if p.two_action == want_two && p.delta_r == 0.0 => *p,
                _ => {
                    return Err(Error::InvalidInput(format!(
                        "{} needs the unperturbed {} predator game",
                        spec.mode.as_str(),
                        if want_two { "two-action" } else { "one-action" }
                    )))
                }
            };
            let mut q = p;
            q.delta_r = spec.delta_r;
            model.with_parts(
                Maps::Predator(q),
                model.follower_initial().to_vec(),
                model.leader_initial().to_vec(),
                None,
            )?
        }
    };
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed.wrapping_add(1));
    let check = measure_perturbation(model, &perturbed, PERTURBATION_SAMPLES, &mut rng)?;
    if check.transition > spec.delta_p + BOUND_TOL
        || check.initial > spec.delta_p + BOUND_TOL
        || check.reward > spec.delta_r + BOUND_TOL
    {
        return Err(Error::InfeasiblePerturbation {
            attempts: 1,
            detail: format!(
                "observed deviations transition {:e}, initial {:e}, reward {:e} exceed ({}, {})",
                check.transition, check.initial, check.reward, spec.delta_p, spec.delta_r
            ),
        });
    }
    Ok(perturbed)
}

/// `S = max(|S^l|, |S^f|)`.
fn state_count(model: &StackelbergModel) -> usize {
    model.dims().leader_states.max(model.dims().follower_states)
}

/// `(C + S)(1 + C + S)^e delta_p + (T + 1) delta_r`.
pub fn value_bound(model: &StackelbergModel, delta_p: f64, delta_r: f64, exponent: u32) -> f64 {
    let c = model.estimate_lipschitz().c;
    let s = state_count(model) as f64;
    let t1 = (model.dims().horizon + 1) as f64;
    let p_term = if delta_p == 0.0 {
        0.0
    } else {
        (c + s) * powi(1.0 + c + s, exponent) * delta_p
    };
    p_term + t1 * delta_r
}

/// The perturbation budget of the two-sided bound (exponent `T + 1`).
pub fn sandwich_delta(model: &StackelbergModel, delta_p: f64, delta_r: f64) -> f64 {
    value_bound(model, delta_p, delta_r, model.dims().horizon as u32 + 1)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowDeviationRow {
    pub t: usize,
    /// Largest of the state-action, state and leader marginal deviations.
    pub observed: f64,
    pub bound: f64,
    /// Entry of the flow attaining the largest state-action deviation.
    pub worst: (usize, usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowDeviationReport {
    pub c: f64,
    pub s: usize,
    pub delta_p: f64,
    pub rows: Vec<FlowDeviationRow>,
    pub max_ratio: f64,
    pub passed: bool,
}

impl FlowDeviationReport {
    pub fn ensure(&self) -> Result<()> {
        match self.rows.iter().find(|r| r.observed > r.bound + BOUND_TOL) {
            Some(r) => Err(Error::BoundViolation(format!(
                "flow deviation {:e} at t={}, s={}, a={} exceeds {:e}",
                r.observed, r.t, r.worst.0, r.worst.1, r.bound
            ))),
            None => Ok(()),
        }
    }
}

fn ratio(observed: f64, bound: f64) -> f64 {
    if observed <= BOUND_TOL {
        0.0
    } else {
        observed / bound
    }
}

/// Propagates `policy` under both models and compares flows, state
/// marginals and leader marginals against `(C + S + 1)^t delta_p`.
pub fn check_flow_deviation(
    model: &StackelbergModel,
    perturbed: &StackelbergModel,
    la: usize,
    policy: &PolicyKernel,
    delta_p: f64,
) -> Result<FlowDeviationReport> {
    let d = *model.dims();
    if *perturbed.dims() != d {
        return Err(Error::DimensionMismatch(
            "perturbed model has different dimensions".into(),
        ));
    }
    let c = model.estimate_lipschitz().c;
    let s = state_count(model);
    let (f1, st1) = propagate_with_stages(model, la, policy)?;
    let (f2, st2) = propagate_with_stages(perturbed, la, policy)?;
    let m1 = leader_marginals_from(&d, model.leader_initial(), &st1)?;
    let m2 = leader_marginals_from(&d, perturbed.leader_initial(), &st2)?;
    let mut rows = Vec::with_capacity(d.steps());
    for t in 0..d.steps() {
        let (a, b) = (f1.at(t), f2.at(t));
        let mut worst = (0, 0);
        let mut flow_dev = 0.0;
        for k in 0..d.joint() {
            let dev = (a[k] - b[k]).abs();
            if dev > flow_dev {
                flow_dev = dev;
                worst = d.joint_parts(k);
            }
        }
        let observed = flow_dev
            .max(crate::math::max_abs_diff(&f1.state_marginal(t), &f2.state_marginal(t)))
            .max(crate::math::max_abs_diff(m1.at(t), m2.at(t)));
        let bound = if delta_p == 0.0 {
            0.0
        } else {
            powi(c + s as f64 + 1.0, t as u32) * delta_p
        };
        rows.push(FlowDeviationRow {
            t,
            observed,
            bound,
            worst,
        });
    }
    let max_ratio = rows.iter().map(|r| ratio(r.observed, r.bound)).fold(0.0, f64::max);
    let passed = rows.iter().all(|r| r.observed <= r.bound + BOUND_TOL);
    Ok(FlowDeviationReport {
        c,
        s,
        delta_p,
        rows,
        max_ratio,
        passed,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValueDeviationReport {
    pub c: f64,
    pub s: usize,
    pub delta_p: f64,
    pub delta_r: f64,
    /// `|V^f(d) - V^f_hat(d_hat)|`.
    pub observed: f64,
    /// Bound with exponent `T + 2`; the pass/fail criterion.
    pub bound: f64,
    /// Bound with exponent `T + 1`, reported for comparison.
    pub bound_tight: f64,
    pub ratio: f64,
    pub ratio_tight: f64,
    pub passed: bool,
}

impl ValueDeviationReport {
    pub fn ensure(&self) -> Result<()> {
        if self.passed {
            Ok(())
        } else {
            Err(Error::BoundViolation(format!(
                "value deviation {:e} exceeds {:e}",
                self.observed, self.bound
            )))
        }
    }
}

/// The deviation bounds are derived for rewards bounded by one in
/// magnitude; refuse models outside that range.
fn check_reward_premise(model: &StackelbergModel, perturbed: &StackelbergModel) -> Result<()> {
    let (f, l) = model.reward_bounds();
    let (pf, pl) = perturbed.reward_bounds();
    let worst = f.max(l).max(pf).max(pl);
    if worst > 1.0 + BOUND_TOL {
        return Err(Error::PremiseViolation(format!(
            "rewards reach magnitude {worst}, the value bounds assume at most 1"
        )));
    }
    Ok(())
}

/// Compares the follower's optimal values against the flows the shared
/// `policy` induces under each model.
pub fn check_value_deviation(
    model: &StackelbergModel,
    perturbed: &StackelbergModel,
    la: usize,
    policy: &PolicyKernel,
    delta_p: f64,
    delta_r: f64,
) -> Result<ValueDeviationReport> {
    let d = *model.dims();
    if *perturbed.dims() != d {
        return Err(Error::DimensionMismatch(
            "perturbed model has different dimensions".into(),
        ));
    }
    check_reward_premise(model, perturbed)?;
    let (_, st1) = propagate_with_stages(model, la, policy)?;
    let (_, st2) = propagate_with_stages(perturbed, la, policy)?;
    let v1 = backward_induction_from(&d, model.follower_initial(), &st1).value();
    let v2 = backward_induction_from(&d, perturbed.follower_initial(), &st2).value();
    let observed = (v1 - v2).abs();
    let bound = value_bound(model, delta_p, delta_r, d.horizon as u32 + 2);
    let bound_tight = value_bound(model, delta_p, delta_r, d.horizon as u32 + 1);
    Ok(ValueDeviationReport {
        c: model.estimate_lipschitz().c,
        s: state_count(model),
        delta_p,
        delta_r,
        observed,
        bound,
        bound_tight,
        ratio: ratio(observed, bound),
        ratio_tight: ratio(observed, bound_tight),
        passed: observed <= bound + BOUND_TOL,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SandwichReport {
    pub leader_action: usize,
    pub epsilon: f64,
    pub epsilon_prime: f64,
    pub delta_p: f64,
    pub delta_r: f64,
    /// `(C + S)(1 + C + S)^{T+1} delta_p + (T + 1) delta_r`.
    pub delta: f64,
    pub j_true: f64,
    pub j_hat_relaxed: f64,
    /// Only when `epsilon >= epsilon_prime`.
    pub j_hat_tightened: Option<f64>,
    /// `J_ε - (J_hat_{ε+ε'} - delta)`.
    pub upper_slack: f64,
    /// `J_hat_{ε-ε'} + delta - J_ε`.
    pub lower_slack: Option<f64>,
    /// Strategy resolution; slacks are widened by twice this.
    pub resolution: f64,
    pub passed: bool,
}

impl SandwichReport {
    pub fn ensure(&self) -> Result<()> {
        if self.passed {
            Ok(())
        } else {
            Err(Error::BoundViolation(format!(
                "sandwich slacks {:e} / {:?} below -{:e}",
                self.upper_slack,
                self.lower_slack,
                2.0 * self.resolution
            )))
        }
    }
}

/// Refuses `(delta_p, delta_r, epsilon')` outside the admissible set.
pub fn check_admissible(model: &StackelbergModel, delta_p: f64, delta_r: f64, epsilon_prime: f64) -> Result<f64> {
    let delta = sandwich_delta(model, delta_p, delta_r);
    if delta.is_nan() || delta > epsilon_prime / 2.0 {
        return Err(Error::PremiseViolation(format!(
            "perturbation budget {delta:e} exceeds epsilon'/2 = {:e}",
            epsilon_prime / 2.0
        )));
    }
    Ok(delta)
}

/// Evaluates the true objective at ε and the perturbed one at `ε ± ε'` with
/// the same strategy, and checks
/// `J_ε >= J_hat_{ε+ε'} - delta` and, when `ε >= ε'`,
/// `J_ε <= J_hat_{ε-ε'} + delta`.
#[allow(clippy::too_many_arguments)]
pub fn check_sandwich(
    model: &StackelbergModel,
    perturbed: &StackelbergModel,
    la: usize,
    epsilon: f64,
    epsilon_prime: f64,
    delta_p: f64,
    delta_r: f64,
    strategy: &Strategy,
    caps: &Caps,
) -> Result<SandwichReport> {
    if !(epsilon >= 0.0 && epsilon_prime > 0.0) {
        return Err(Error::InvalidInput(format!(
            "need epsilon >= 0 and epsilon' > 0, got {epsilon} and {epsilon_prime}"
        )));
    }
    check_reward_premise(model, perturbed)?;
    let delta = check_admissible(model, delta_p, delta_r, epsilon_prime)?;
    let mode = Mode::Pessimistic;
    let resolution = resolution_bound(model, strategy)
        .unwrap_or(0.0)
        .max(resolution_bound(perturbed, strategy).unwrap_or(0.0));
    let (j_true, j_hat_relaxed, j_hat_tightened) = match strategy {
        Strategy::Local(_) => {
            let j = inner_worst_case(model, la, epsilon, mode, strategy, caps)?.value;
            let up = inner_worst_case(perturbed, la, epsilon + epsilon_prime, mode, strategy, caps)?.value;
            let down = if epsilon >= epsilon_prime {
                Some(inner_worst_case(perturbed, la, epsilon - epsilon_prime, mode, strategy, caps)?.value)
            } else {
                None
            };
            (j, up, down)
        }
        _ => {
            let f = inner_frontier(model, la, mode, strategy, caps)?;
            let g = inner_frontier(perturbed, la, mode, strategy, caps)?;
            let q = |fr: &Frontier, e: f64| {
                fr.query(e).map(|p| p.leader_return).ok_or(Error::NoFeasibleCandidate {
                    leader_action: la,
                    epsilon: e,
                })
            };
            let down = if epsilon >= epsilon_prime {
                Some(q(&g, epsilon - epsilon_prime)?)
            } else {
                None
            };
            (q(&f, epsilon)?, q(&g, epsilon + epsilon_prime)?, down)
        }
    };
    let upper_slack = j_true - (j_hat_relaxed - delta);
    let lower_slack = j_hat_tightened.map(|j| j + delta - j_true);
    let widen = 2.0 * resolution + BOUND_TOL;
    let passed = upper_slack >= -widen && lower_slack.is_none_or(|s| s >= -widen);
    Ok(SandwichReport {
        leader_action: la,
        epsilon,
        epsilon_prime,
        delta_p,
        delta_r,
        delta,
        j_true,
        j_hat_relaxed,
        j_hat_tightened,
        upper_slack,
        lower_slack,
        resolution,
        passed,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RelaxedReport {
    pub epsilon: f64,
    pub epsilon_prime: f64,
    pub delta: f64,
    /// `V^l(ε)` on the true model and its maximiser.
    pub true_value: f64,
    pub true_action: usize,
    /// `J_ε(a)` on the true model, per action.
    pub true_values: Vec<f64>,
    /// `J_hat_{ε+ε'}(a)` per action and its maximiser.
    pub relaxed_values: Vec<f64>,
    pub relaxed_action: usize,
    pub relaxed_gap: f64,
    /// `J_hat_ε(a)` per action and its maximiser.
    pub unrelaxed_values: Vec<f64>,
    pub unrelaxed_action: usize,
    pub unrelaxed_gap: f64,
}

fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Per-action pessimistic values at the requested tolerances, sharing one
/// frontier per action for finite strategies.
fn values_at(model: &StackelbergModel, eps: &[f64], strategy: &Strategy, caps: &Caps) -> Result<Vec<Vec<f64>>> {
    let n = model.dims().leader_actions;
    let mode = Mode::Pessimistic;
    let per_action: Vec<Result<Vec<f64>>> = crate::par::map_range(n, |la| match strategy {
        Strategy::Local(_) => eps
            .iter()
            .map(|&e| inner_worst_case(model, la, e, mode, strategy, caps).map(|r| r.value))
            .collect(),
        _ => {
            let f = inner_frontier(model, la, mode, strategy, caps)?;
            eps.iter()
                .map(|&e| {
                    f.query(e).map(|p| p.leader_return).ok_or(Error::NoFeasibleCandidate {
                        leader_action: la,
                        epsilon: e,
                    })
                })
                .collect()
        }
    });
    let per_action = per_action.into_iter().collect::<Result<Vec<_>>>()?;
    // Transpose to [epsilon][action].
    Ok((0..eps.len())
        .map(|i| per_action.iter().map(|v| v[i]).collect())
        .collect())
}

/// Chooses the leader action on the perturbed model with and without the
/// relaxation `ε + ε'` and scores both choices on the true model.
#[allow(clippy::too_many_arguments)]
pub fn relaxed_action_experiment(
    model: &StackelbergModel,
    perturbed: &StackelbergModel,
    epsilon: f64,
    epsilon_prime: f64,
    delta_p: f64,
    delta_r: f64,
    strategy: &Strategy,
    caps: &Caps,
) -> Result<RelaxedReport> {
    if !(epsilon >= 0.0 && epsilon_prime > 0.0) {
        return Err(Error::InvalidInput(format!(
            "need epsilon >= 0 and epsilon' > 0, got {epsilon} and {epsilon_prime}"
        )));
    }
    let delta = check_admissible(model, delta_p, delta_r, epsilon_prime)?;
    let true_values = values_at(model, &[epsilon], strategy, caps)?.remove(0);
    let hat = values_at(perturbed, &[epsilon + epsilon_prime, epsilon], strategy, caps)?;
    let (relaxed_values, unrelaxed_values) = (hat[0].clone(), hat[1].clone());
    let true_action = argmax(&true_values);
    let relaxed_action = argmax(&relaxed_values);
    let unrelaxed_action = argmax(&unrelaxed_values);
    let true_value = true_values[true_action];
    Ok(RelaxedReport {
        epsilon,
        epsilon_prime,
        delta,
        true_value,
        true_action,
        relaxed_gap: true_value - true_values[relaxed_action],
        unrelaxed_gap: true_value - true_values[unrelaxed_action],
        true_values,
        relaxed_values,
        relaxed_action,
        unrelaxed_values,
        unrelaxed_action,
    })
}

/// What a sweep evaluates at each ε.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepTarget {
    /// `J^l_ε(a)` for one leader action.
    Action(usize),
    /// `V^l(ε)`.
    Outer,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepOptions {
    /// A drop between neighbouring grid points larger than this is a jump.
    pub jump_tol: f64,
    /// Jumps are bisected down to this width; also the probe offset of the
    /// right-consistency check.
    pub refine_width: f64,
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self {
            jump_tol: 0.05,
            refine_width: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub epsilon: f64,
    pub value: f64,
    pub action: usize,
    pub guarantee: Guarantee,
}

/// A localised drop: the value falls from `left` at `lo` to `right` at
/// `hi = location`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jump {
    pub lo: f64,
    pub hi: f64,
    pub location: f64,
    pub left: f64,
    pub right: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepReport {
    pub target: SweepTarget,
    pub mode: Mode,
    pub rows: Vec<SweepRow>,
    /// Grid neighbours where the value moved the wrong way.
    pub monotonicity_violations: Vec<(f64, f64)>,
    pub jumps: Vec<Jump>,
    /// Largest change between each grid point and `ε + refine_width`.
    pub right_gap: f64,
    pub right_consistent: bool,
}

impl SweepReport {
    pub fn monotone(&self) -> bool {
        self.monotonicity_violations.is_empty()
    }
}

enum Engine<'a> {
    Frontiers(&'a StackelbergModel, Strategy, Vec<Frontier>),
    Solve(&'a StackelbergModel, Strategy, Mode, Caps),
}

impl Engine<'_> {
    fn eval(&self, target: SweepTarget, epsilon: f64) -> Result<(f64, usize)> {
        match self {
            Engine::Frontiers(model, strategy, frontiers) => {
                let per: Vec<(usize, &Frontier)> = match target {
                    SweepTarget::Action(la) => vec![(la, &frontiers[0])],
                    SweepTarget::Outer => frontiers.iter().enumerate().collect(),
                };
                let reports = per
                    .into_iter()
                    .map(|(la, f)| report_from_frontier(model, la, epsilon, strategy, f, 0.0))
                    .collect::<Result<Vec<_>>>()?;
                let outer = outer_from_reports(epsilon, frontiers[0].mode, reports);
                Ok((outer.value, outer.best().leader_action))
            }
            Engine::Solve(model, strategy, mode, caps) => match target {
                SweepTarget::Action(la) => {
                    inner_worst_case(model, la, epsilon, *mode, strategy, caps).map(|r| (r.value, la))
                }
                SweepTarget::Outer => {
                    outer_maximize(model, epsilon, *mode, strategy, caps).map(|o| (o.value, o.best_action))
                }
            },
        }
    }
}

/// Values over a sorted grid of tolerances, with monotonicity and jump
/// checks. Pessimistic values must not increase with ε (optimistic ones
/// must not decrease); drops beyond `jump_tol` are bisected to
/// `refine_width` and reported with their one-sided values.
pub fn epsilon_sweep(
    model: &StackelbergModel,
    target: SweepTarget,
    grid: &[f64],
    mode: Mode,
    strategy: &Strategy,
    caps: &Caps,
    opts: &SweepOptions,
) -> Result<SweepReport> {
    if grid.is_empty() {
        return Err(Error::InvalidInput("empty epsilon grid".into()));
    }
    if grid.iter().any(|e| !(*e >= 0.0 && e.is_finite())) || grid.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::InvalidInput(
            "epsilon grid must be sorted, finite and non-negative".into(),
        ));
    }
    if let SweepTarget::Action(la) = target {
        crate::model::check_index("leader action", la, model.dims().leader_actions)?;
    }
    let engine = match strategy {
        Strategy::Local(_) => Engine::Solve(model, *strategy, mode, *caps),
        _ => {
            let actions: Vec<usize> = match target {
                SweepTarget::Action(la) => vec![la],
                SweepTarget::Outer => (0..model.dims().leader_actions).collect(),
            };
            let fr = crate::par::map_range(actions.len(), |i| {
                inner_frontier(model, actions[i], mode, strategy, caps)
            })
            .into_iter()
            .collect::<Result<Vec<_>>>()?;
            Engine::Frontiers(model, *strategy, fr)
        }
    };
    // Orient so that "drop" is always a decrease of `s * value`.
    let s = match mode {
        Mode::Pessimistic => 1.0,
        Mode::Optimistic => -1.0,
    };
    let mut rows = Vec::with_capacity(grid.len());
    for &e in grid {
        let (value, action) = engine.eval(target, e)?;
        rows.push(SweepRow {
            epsilon: e,
            value,
            action,
            guarantee: strategy.guarantee(),
        });
    }
    let mut violations = Vec::new();
    let mut jumps = Vec::new();
    for w in rows.windows(2) {
        let drop = s * (w[0].value - w[1].value);
        if drop < -BOUND_TOL {
            violations.push((w[0].epsilon, w[1].epsilon));
        }
        if drop > opts.jump_tol {
            let (mut lo, mut hi) = (w[0].epsilon, w[1].epsilon);
            let (mut vlo, mut vhi) = (w[0].value, w[1].value);
            while hi - lo > opts.refine_width {
                let mid = 0.5 * (lo + hi);
                let (vm, _) = engine.eval(target, mid)?;
                if s * (vlo - vm) >= s * (vm - vhi) {
                    hi = mid;
                    vhi = vm;
                } else {
                    lo = mid;
                    vlo = vm;
                }
            }
            jumps.push(Jump {
                lo,
                hi,
                location: hi,
                left: vlo,
                right: vhi,
            });
        }
    }
    let mut right_gap: f64 = 0.0;
    for r in &rows {
        let (v, _) = engine.eval(target, r.epsilon + opts.refine_width)?;
        right_gap = right_gap.max((r.value - v).abs());
    }
    Ok(SweepReport {
        target,
        mode,
        rows,
        monotonicity_violations: violations,
        jumps,
        right_gap,
        right_consistent: right_gap <= opts.jump_tol,
    })
}

/// Human-readable one-line summary of a sweep.
pub fn describe_jumps(report: &SweepReport) -> String {
    let parts: Vec<String> = report
        .jumps
        .iter()
        .map(|j| format!("jump at {:.6} ({:.6} -> {:.6})", j.location, j.left, j.right))
        .collect();
    if parts.is_empty() {
        "no jumps".into()
    } else {
        parts.join("; ")
    }
}
