//! Membership in the ε-best-response set and finite families of candidate
//! equilibria: all deterministic policies, or policies on a simplex mesh.
//!
//! Every candidate is a policy together with the flow it induces, so
//! consistency holds by construction and membership reduces to
//! `exploitability <= ε`.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::dynamics::{
    consistency_residual, leader_marginals_from, leader_return_from, normalize, propagate_with_stages, push_forward,
    FlowSequence, PolicyKernel,
};
use crate::mdp::exploitability_from;
use crate::model::{StackelbergModel, Stage};
use crate::{Error, Result, MEMBERSHIP_SLACK};

/// Consistency residual below which a (policy, flow) pair counts as
/// consistent.
pub const CONSISTENCY_TOL: f64 = 1e-10;

/// Default bound on the number of policies a finite family may contain.
pub const DEFAULT_POLICY_CAP: u128 = 1 << 22;

/// Size limits for enumeration and dense matrices.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Caps {
    /// Upper bound on enumerated or meshed policies.
    pub policies: u128,
    /// Upper bound on dense LP entries.
    pub dense: u128,
}

impl Default for Caps {
    fn default() -> Self {
        Self {
            policies: DEFAULT_POLICY_CAP,
            dense: crate::lp::DEFAULT_DENSE_CAP,
        }
    }
}

/// A policy, a flow, and how far the pair is from equilibrium.
#[derive(Debug, Clone, PartialEq)]
pub struct EquilibriumCandidate {
    pub policy: PolicyKernel,
    pub flow: FlowSequence,
    pub exploitability: f64,
    pub consistent: bool,
    /// Leader return at the flow.
    pub leader_return: f64,
}

impl EquilibriumCandidate {
    /// Consistent and `exploitability <= ε + MEMBERSHIP_SLACK`.
    pub fn is_member(&self, epsilon: f64) -> bool {
        self.consistent && self.exploitability <= epsilon + MEMBERSHIP_SLACK
    }
}

fn check_epsilon(epsilon: f64) -> Result<()> {
    if !(epsilon >= 0.0 && epsilon.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "epsilon must be finite and non-negative, got {epsilon}"
        )));
    }
    Ok(())
}

/// Evaluates both equilibrium conditions for an arbitrary pair.
pub fn check_epsilon_ne(
    model: &StackelbergModel,
    la: usize,
    policy: &PolicyKernel,
    flow: &FlowSequence,
    epsilon: f64,
) -> Result<(EquilibriumCandidate, bool)> {
    check_epsilon(epsilon)?;
    let residual = consistency_residual(model, la, policy, flow)?;
    let stages = crate::dynamics::frozen_stages(model, la, flow)?;
    let dims = model.dims();
    let exploitability = exploitability_from(dims, model.follower_initial(), flow, &stages);
    let marg = leader_marginals_from(dims, model.leader_initial(), &stages)?;
    let cand = EquilibriumCandidate {
        policy: policy.clone(),
        flow: flow.clone(),
        exploitability,
        consistent: residual <= CONSISTENCY_TOL,
        leader_return: leader_return_from(&marg, &stages),
    };
    let member = cand.is_member(epsilon);
    Ok((cand, member))
}

/// The candidate a policy induces.
pub fn evaluate_policy(model: &StackelbergModel, la: usize, policy: &PolicyKernel) -> Result<EquilibriumCandidate> {
    crate::model::check_index("leader action", la, model.dims().leader_actions)?;
    let (flow, stages) = propagate_with_stages(model, la, policy)?;
    let dims = model.dims();
    let exploitability = exploitability_from(dims, model.follower_initial(), &flow, &stages);
    let marg = leader_marginals_from(dims, model.leader_initial(), &stages)?;
    Ok(EquilibriumCandidate {
        policy: policy.clone(),
        flow,
        exploitability,
        consistent: true,
        leader_return: leader_return_from(&marg, &stages),
    })
}

/// Number of mesh intervals `1/h`; `h` must divide 1.
pub fn mesh_divisions(h: f64) -> Result<usize> {
    if !(h > 0.0 && h <= 1.0) {
        return Err(Error::InvalidInput(format!("mesh spacing must lie in (0, 1], got {h}")));
    }
    let n = 1.0 / h;
    let rounded = libm::round(n);
    if (n - rounded).abs() > 1e-9 * rounded.max(1.0) || rounded > u32::MAX as f64 {
        return Err(Error::InvalidInput(format!(
            "mesh spacing {h} must be 1/N for a positive integer N"
        )));
    }
    Ok(rounded as usize)
}

/// All points of the simplex over `actions` entries whose coordinates are
/// multiples of `1/n`, starting with the first vertex.
pub fn simplex_grid(actions: usize, n: usize) -> Vec<Vec<f64>> {
    fn rec(left: usize, slots: usize, n: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<f64>>) {
        if slots == 1 {
            cur.push(left);
            out.push(cur.iter().map(|&k| k as f64 / n as f64).collect());
            cur.pop();
            return;
        }
        for k in (0..=left).rev() {
            cur.push(k);
            rec(left - k, slots - 1, n, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(n, actions, n, &mut Vec::with_capacity(actions), &mut out);
    out
}

/// `C(n + a - 1, a - 1)` saturating at `u128::MAX`.
fn grid_size(actions: usize, n: usize) -> u128 {
    let mut acc: u128 = 1;
    for i in 1..actions as u128 {
        acc = acc.saturating_mul(n as u128 + i) / i;
    }
    acc
}

/// A fully specified policy and its evaluation, as seen by a visitor.
#[derive(Debug, Clone, Copy)]
pub struct Leaf<'a> {
    /// Flat policy, `(t * S + s) * A + a`.
    pub policy: &'a [f64],
    /// Flat flow, `t * |S||A| + s + |S| a`.
    pub flow: &'a [f64],
    pub exploitability: f64,
    pub leader_return: f64,
}

impl Leaf<'_> {
    pub fn to_candidate(&self, model: &StackelbergModel) -> EquilibriumCandidate {
        let d = model.dims();
        EquilibriumCandidate {
            policy: PolicyKernel::from_raw(d.steps(), d.follower_states, d.follower_actions, self.policy.to_vec()),
            flow: FlowSequence::from_flat(d.follower_states, d.follower_actions, self.flow.to_vec()),
            exploitability: self.exploitability,
            consistent: true,
            leader_return: self.leader_return,
        }
    }
}

/// Which policies a walk visits.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Family {
    /// Every deterministic policy, including choices at states the flow
    /// never reaches.
    Deterministic,
    /// Rows on the simplex grid of spacing `1/n`. Rows that cannot affect
    /// any outcome (unreached states, epochs where actions are irrelevant)
    /// are fixed to the first action.
    Mesh(usize),
}

impl Family {
    fn divisions(&self) -> usize {
        match self {
            Family::Deterministic => 1,
            Family::Mesh(n) => *n,
        }
    }

    fn prunes(&self) -> bool {
        matches!(self, Family::Mesh(_))
    }
}

/// Upper bound on the number of policies in the family (before pruning of
/// unreached states).
pub fn family_size(model: &StackelbergModel, family: Family) -> u128 {
    let d = model.dims();
    let width = grid_size(d.follower_actions, family.divisions());
    let mut total: u128 = 1;
    for t in 0..d.steps() {
        if family.prunes() && !model.policy_relevant(t) {
            continue;
        }
        for _ in 0..d.follower_states {
            total = total.saturating_mul(width);
        }
    }
    total
}

struct Walker<'m> {
    model: &'m StackelbergModel,
    la: usize,
    grid: &'m [Vec<f64>],
    prune: bool,
    relevant: Vec<bool>,
    force_first: Option<usize>,
    branched: bool,
    policy: Vec<f64>,
    flow: Vec<f64>,
    /// `mu_t` for `t = 0..=T`, flat.
    mus: Vec<f64>,
    stages: Vec<Stage>,
    value_next: Vec<f64>,
    value_cur: Vec<f64>,
    leader_cur: Vec<f64>,
    leader_next: Vec<f64>,
    evals: u64,
}

impl<'m> Walker<'m> {
    fn new(
        model: &'m StackelbergModel,
        la: usize,
        grid: &'m [Vec<f64>],
        prune: bool,
        force_first: Option<usize>,
    ) -> Self {
        let d = *model.dims();
        let (ns, na, j, steps) = (d.follower_states, d.follower_actions, d.joint(), d.steps());
        let mut mus = vec![0.0; steps * ns];
        mus[..ns].copy_from_slice(model.follower_initial());
        Self {
            model,
            la,
            grid,
            prune,
            relevant: (0..steps).map(|t| model.policy_relevant(t)).collect(),
            force_first,
            branched: false,
            policy: vec![0.0; steps * ns * na],
            flow: vec![0.0; steps * j],
            mus,
            stages: (0..steps).map(|_| Stage::zeros(&d)).collect(),
            value_next: vec![0.0; ns],
            value_cur: vec![0.0; ns],
            leader_cur: vec![0.0; d.leader_states],
            leader_next: vec![0.0; d.leader_states],
            evals: 0,
        }
    }

    fn set_row(&mut self, t: usize, s: usize, row: usize) {
        let d = self.model.dims();
        let (ns, na) = (d.follower_states, d.follower_actions);
        let r = &self.grid[row];
        self.policy[(t * ns + s) * na..(t * ns + s + 1) * na].copy_from_slice(r);
        let mu = self.mus[t * ns + s];
        let j = d.joint();
        for (a, p) in r.iter().enumerate() {
            self.flow[t * j + s + ns * a] = mu * p;
        }
    }

    fn walk<F: FnMut(&Leaf<'_>)>(&mut self, t: usize, s: usize, visit: &mut F) -> Result<()> {
        let d = *self.model.dims();
        let ns = d.follower_states;
        if t == d.steps() {
            if self.force_first.is_some_and(|i| i != 0) && !self.branched {
                return Ok(());
            }
            return self.leaf(visit);
        }
        if s == ns {
            let j = d.joint();
            self.model
                .stage_into(t, self.la, &self.flow[t * j..(t + 1) * j], &mut self.stages[t]);
            if t < d.horizon {
                let next = &mut self.mus[(t + 1) * ns..(t + 2) * ns];
                push_forward(&self.flow[t * j..(t + 1) * j], &self.stages[t].follower_p, ns, next);
                normalize(next, t + 1)?;
            }
            return self.walk(t + 1, 0, visit);
        }
        let fixed = self.prune && (!self.relevant[t] || self.mus[t * ns + s] == 0.0);
        if fixed || self.grid.len() == 1 {
            self.set_row(t, s, 0);
            return self.walk(t, s + 1, visit);
        }
        if !self.branched {
            if let Some(i) = self.force_first {
                self.branched = true;
                let res = if i < self.grid.len() {
                    self.set_row(t, s, i);
                    self.walk(t, s + 1, visit)
                } else {
                    Ok(())
                };
                self.branched = false;
                return res;
            }
        }
        for row in 0..self.grid.len() {
            self.set_row(t, s, row);
            self.walk(t, s + 1, visit)?;
        }
        Ok(())
    }

    fn leaf<F: FnMut(&Leaf<'_>)>(&mut self, visit: &mut F) -> Result<()> {
        let d = *self.model.dims();
        let (ns, na, j) = (d.follower_states, d.follower_actions, d.joint());
        // Follower value by backward induction and the population's return.
        self.value_next.fill(0.0);
        let mut follower_return = 0.0;
        for t in (0..d.steps()).rev() {
            let st = &self.stages[t];
            follower_return += crate::math::dot(&self.flow[t * j..(t + 1) * j], &st.follower_r);
            for s in 0..ns {
                let mut best = f64::NEG_INFINITY;
                for a in 0..na {
                    let k = s + ns * a;
                    let mut q = st.follower_r[k];
                    if t < d.horizon {
                        q += crate::math::dot(&st.follower_p[k * ns..(k + 1) * ns], &self.value_next);
                    }
                    best = best.max(q);
                }
                self.value_cur[s] = best;
            }
            core::mem::swap(&mut self.value_cur, &mut self.value_next);
        }
        let value = crate::math::dot(self.model.follower_initial(), &self.value_next);
        // Leader marginals and return.
        let nl = d.leader_states;
        self.leader_cur.copy_from_slice(self.model.leader_initial());
        let mut leader_return = 0.0;
        for t in 0..d.steps() {
            let st = &self.stages[t];
            leader_return += crate::math::dot(&self.leader_cur, &st.leader_r);
            if t < d.horizon {
                push_forward(&self.leader_cur, &st.leader_p, nl, &mut self.leader_next);
                normalize(&mut self.leader_next, t + 1)?;
                core::mem::swap(&mut self.leader_cur, &mut self.leader_next);
            }
        }
        self.evals += 1;
        visit(&Leaf {
            policy: &self.policy,
            flow: &self.flow,
            exploitability: value - follower_return,
            leader_return,
        });
        Ok(())
    }
}

/// Folds `visit` over every policy of `family` for leader action `la`.
///
/// The walk is split over the choices at the first branching row; with
/// the `parallel` feature the parts run concurrently. Partial results are
/// combined with `reduce` in walk order, so the outcome does not depend on
/// scheduling. Returns the result and the number of policies evaluated.
pub fn fold_family<A, I, F, R>(
    model: &StackelbergModel,
    la: usize,
    family: Family,
    caps: &Caps,
    identity: I,
    fold: F,
    reduce: R,
) -> Result<(A, u64)>
where
    A: Send,
    I: Fn() -> A + Sync + Send,
    F: Fn(&mut A, &Leaf<'_>) + Sync + Send,
    R: Fn(A, A) -> A,
{
    crate::model::check_index("leader action", la, model.dims().leader_actions)?;
    let size = family_size(model, family);
    if size > caps.policies {
        return Err(Error::CapExceeded {
            what: match family {
                Family::Deterministic => "deterministic policy enumeration",
                Family::Mesh(_) => "policy mesh",
            },
            requested: size,
            cap: caps.policies,
        });
    }
    let grid = simplex_grid(model.dims().follower_actions, family.divisions());
    let parts = crate::par::map_range(grid.len(), |i| -> Result<(A, u64)> {
        let mut acc = identity();
        let mut w = Walker::new(model, la, &grid, family.prunes(), Some(i));
        w.walk(0, 0, &mut |leaf: &Leaf<'_>| fold(&mut acc, leaf))?;
        Ok((acc, w.evals))
    });
    let mut total = identity();
    let mut evals = 0;
    for part in parts {
        let (acc, n) = part?;
        total = reduce(total, acc);
        evals += n;
    }
    Ok((total, evals))
}

fn members_of(
    model: &StackelbergModel,
    la: usize,
    family: Family,
    epsilon: f64,
    caps: &Caps,
) -> Result<Vec<EquilibriumCandidate>> {
    check_epsilon(epsilon)?;
    let (out, _) = fold_family(
        model,
        la,
        family,
        caps,
        Vec::new,
        |acc: &mut Vec<EquilibriumCandidate>, leaf| {
            if leaf.exploitability <= epsilon + MEMBERSHIP_SLACK {
                acc.push(leaf.to_candidate(model));
            }
        },
        |mut a, b| {
            a.extend(b);
            a
        },
    )?;
    Ok(out)
}

/// Every deterministic policy whose induced flow is an ε-Nash equilibrium,
/// in lexicographic order of the policy's action choices.
pub fn enumerate_deterministic_candidates(
    model: &StackelbergModel,
    la: usize,
    epsilon: f64,
    caps: &Caps,
) -> Result<Vec<EquilibriumCandidate>> {
    members_of(model, la, Family::Deterministic, epsilon, caps)
}

/// Mesh policies of spacing `h` whose induced flow is an ε-Nash equilibrium.
/// Rows that cannot influence the outcome are pinned to the first action.
pub fn mesh_candidates(
    model: &StackelbergModel,
    la: usize,
    epsilon: f64,
    h: f64,
    caps: &Caps,
) -> Result<Vec<EquilibriumCandidate>> {
    let n = mesh_divisions(h)?;
    members_of(model, la, Family::Mesh(n), epsilon, caps)
}
