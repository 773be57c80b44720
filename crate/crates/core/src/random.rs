//! Seeded random simplex points and random affine models for experiments
//! and property tests.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::model::{AffineStage, Dimensions, StackelbergModel};
use crate::Result;

/// Uniform point of the probability simplex with `n` entries
/// (normalised exponential spacings).
pub fn simplex_point<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<f64> {
    let mut v: Vec<f64> = (0..n)
        .map(|_| {
            // 1 - U lies in (0, 1], so the log is finite.
            let u: f64 = rng.random();
            -libm::log(1.0 - u)
        })
        .collect();
    let sum: f64 = v.iter().sum();
    if sum > 0.0 {
        for x in &mut v {
            *x /= sum;
        }
    } else {
        v.iter_mut().for_each(|x| *x = 1.0 / n as f64);
    }
    // Push any rounding residue onto the largest entry so the sum is 1 to
    // within one ulp-scale error.
    let residue = 1.0 - v.iter().sum::<f64>();
    if let Some(i) = (0..n).max_by(|&a, &b| v[a].total_cmp(&v[b])) {
        v[i] += residue;
    }
    v
}

/// Shape of a random affine model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RandomModelOptions {
    /// Largest `gamma` in `P(L) = B + gamma sum_j L_j (Q_j - B)`.
    pub coupling: f64,
    /// Rewards stay within `[-reward_bound, reward_bound]`.
    pub reward_bound: f64,
    /// Adds a quadratic term to the follower and leader rewards.
    pub quadratic: bool,
}

impl Default for RandomModelOptions {
    fn default() -> Self {
        Self {
            coupling: 0.5,
            reward_bound: 0.5,
            quadratic: false,
        }
    }
}

/// Dimensions drawn uniformly from `1..=max` per entry.
pub fn random_dimensions<R: Rng + ?Sized>(
    rng: &mut R,
    max_states: usize,
    max_actions: usize,
    max_horizon: usize,
    max_leader_states: usize,
    max_leader_actions: usize,
) -> Dimensions {
    Dimensions {
        horizon: rng.random_range(1..=max_horizon),
        follower_states: rng.random_range(1..=max_states),
        follower_actions: rng.random_range(1..=max_actions),
        leader_states: rng.random_range(1..=max_leader_states),
        leader_actions: rng.random_range(1..=max_leader_actions),
    }
}

fn symmetric<R: Rng + ?Sized>(rng: &mut R, half_width: f64) -> f64 {
    if half_width == 0.0 {
        0.0
    } else {
        rng.random_range(-half_width..=half_width)
    }
}

/// Coefficients of an affine transition family `[row][s'][j]`: row `i` is
/// `B_i + gamma sum_j L_j (Q_ij - B_i)` so it is a distribution at every
/// vertex and hence everywhere on the simplex.
fn random_transition<R: Rng + ?Sized>(
    rng: &mut R,
    rows: usize,
    n: usize,
    j: usize,
    coupling: f64,
) -> (Vec<f64>, Vec<f64>) {
    let mut base = Vec::with_capacity(rows * n);
    let mut lin = vec![0.0; rows * n * j];
    for i in 0..rows {
        let b = simplex_point(rng, n);
        let gamma = if coupling > 0.0 {
            rng.random_range(0.0..=coupling)
        } else {
            0.0
        };
        for jj in 0..j {
            let q = simplex_point(rng, n);
            for sp in 0..n {
                lin[(i * n + sp) * j + jj] = gamma * (q[sp] - b[sp]);
            }
        }
        base.extend_from_slice(&b);
    }
    (base, lin)
}

/// Base, linear and optional quadratic reward coefficients for `rows`
/// rewards whose magnitude never exceeds `bound` on the simplex.
fn random_reward<R: Rng + ?Sized>(
    rng: &mut R,
    rows: usize,
    j: usize,
    bound: f64,
    quadratic: bool,
) -> (Vec<f64>, Vec<f64>, Option<Vec<f64>>) {
    // Split the budget: half constant, a quarter (or half) linear, a quarter
    // quadratic. On the simplex |lin . L| <= max|lin| and |L^T Q L| <= max|Q|.
    let (b_w, l_w, q_w) = if quadratic {
        (bound / 2.0, bound / 4.0, bound / 4.0)
    } else {
        (bound / 2.0, bound / 2.0, 0.0)
    };
    let base = (0..rows).map(|_| symmetric(rng, b_w)).collect();
    let lin = (0..rows * j).map(|_| symmetric(rng, l_w)).collect();
    let quad = quadratic.then(|| (0..rows * j * j).map(|_| symmetric(rng, q_w)).collect());
    (base, lin, quad)
}

/// Random affine model with the given dimensions.
pub fn random_affine_model<R: Rng + ?Sized>(
    rng: &mut R,
    dims: Dimensions,
    opts: &RandomModelOptions,
) -> Result<StackelbergModel> {
    dims.check()?;
    let (ns, nl, j) = (dims.follower_states, dims.leader_states, dims.joint());
    let mut stages = Vec::with_capacity(dims.leader_actions);
    for _ in 0..dims.leader_actions {
        let mut per_t = Vec::with_capacity(dims.steps());
        for _ in 0..dims.steps() {
            let (p_base, p_lin) = random_transition(rng, j, ns, j, opts.coupling);
            let (r_base, r_lin, r_quad) = random_reward(rng, j, j, opts.reward_bound, opts.quadratic);
            let (pl_base, pl_lin) = random_transition(rng, nl, nl, j, opts.coupling);
            let (rl_base, rl_lin, rl_quad) = random_reward(rng, nl, j, opts.reward_bound, opts.quadratic);
            per_t.push(AffineStage {
                p_base,
                p_lin,
                r_base,
                r_lin,
                r_quad,
                pl_base,
                pl_lin,
                rl_base,
                rl_lin,
                rl_quad,
            });
        }
        stages.push(per_t);
    }
    let fi = simplex_point(rng, ns);
    let li = simplex_point(rng, nl);
    StackelbergModel::affine(dims, None, fi, li, stages)
}

/// Random policy with independent uniform rows.
pub fn random_policy<R: Rng + ?Sized>(rng: &mut R, dims: &Dimensions) -> crate::PolicyKernel {
    let (steps, ns, na) = (dims.steps(), dims.follower_states, dims.follower_actions);
    let mut probs = Vec::with_capacity(steps * ns * na);
    for _ in 0..steps * ns {
        probs.extend(simplex_point(rng, na));
    }
    crate::PolicyKernel::from_raw(steps, ns, na, probs)
}
