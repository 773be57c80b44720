//! Forward propagation of the follower flow and leader marginals, and the
//! two players' returns.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::model::{check_distribution, Dimensions, StackelbergModel, Stage};
use crate::{Error, Result};

/// Entries at or above this are rounding noise and clamped to zero.
const NEGATIVE_CLAMP: f64 = -1e-12;
/// Sums within this of one are renormalised; anything further is an error.
const DRIFT_TOL: f64 = 1e-10;

/// Randomized follower policy `pi_t(a | s)` for `t = 0..=T`.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyKernel {
    steps: usize,
    states: usize,
    actions: usize,
    /// `(t * S + s) * A + a`
    probs: Vec<f64>,
}

impl PolicyKernel {
    pub fn new(steps: usize, states: usize, actions: usize, probs: Vec<f64>) -> Result<Self> {
        if probs.len() != steps * states * actions {
            return Err(Error::DimensionMismatch(format!(
                "policy has {} entries, expected {}",
                probs.len(),
                steps * states * actions
            )));
        }
        let p = Self {
            steps,
            states,
            actions,
            probs,
        };
        for t in 0..steps {
            for s in 0..states {
                check_distribution(&format!("policy row (t={t}, s={s})"), p.row(t, s), actions)?;
            }
        }
        Ok(p)
    }

    pub fn for_model(model: &StackelbergModel, probs: Vec<f64>) -> Result<Self> {
        let d = model.dims();
        Self::new(d.steps(), d.follower_states, d.follower_actions, probs)
    }

    pub fn uniform(dims: &Dimensions) -> Self {
        let a = dims.follower_actions;
        Self {
            steps: dims.steps(),
            states: dims.follower_states,
            actions: a,
            probs: vec![1.0 / a as f64; dims.steps() * dims.follower_states * a],
        }
    }

    /// `choice[t * S + s]` is the action taken at `(t, s)`.
    pub fn deterministic(dims: &Dimensions, choice: &[usize]) -> Result<Self> {
        let (steps, ns, na) = (dims.steps(), dims.follower_states, dims.follower_actions);
        if choice.len() != steps * ns {
            return Err(Error::DimensionMismatch(format!(
                "deterministic policy has {} choices, expected {}",
                choice.len(),
                steps * ns
            )));
        }
        let mut probs = vec![0.0; steps * ns * na];
        for (i, &a) in choice.iter().enumerate() {
            if a >= na {
                return Err(Error::IndexOutOfRange {
                    what: "follower action",
                    index: a,
                    size: na,
                });
            }
            probs[i * na + a] = 1.0;
        }
        Ok(Self {
            steps,
            states: ns,
            actions: na,
            probs,
        })
    }

    /// Every state takes action `a` at every epoch.
    pub fn constant(dims: &Dimensions, a: usize) -> Result<Self> {
        Self::deterministic(dims, &vec![a; dims.steps() * dims.follower_states])
    }

    /// Recovers a policy from a flow: `pi_t(a|s) = d_t(s,a) / mu_t(s)` where
    /// `mu_t(s) > 0`, uniform elsewhere.
    pub fn from_flow(flow: &FlowSequence) -> Self {
        let (ns, na) = (flow.states, flow.actions);
        let mut probs = Vec::with_capacity(flow.steps() * ns * na);
        for t in 0..flow.steps() {
            let d = flow.at(t);
            for s in 0..ns {
                let mass: f64 = (0..na).map(|a| d[s + ns * a]).sum();
                for a in 0..na {
                    probs.push(if mass > 0.0 {
                        d[s + ns * a] / mass
                    } else {
                        1.0 / na as f64
                    });
                }
            }
        }
        Self {
            steps: flow.steps(),
            states: ns,
            actions: na,
            probs,
        }
    }

    pub(crate) fn from_raw(steps: usize, states: usize, actions: usize, probs: Vec<f64>) -> Self {
        Self {
            steps,
            states,
            actions,
            probs,
        }
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn states(&self) -> usize {
        self.states
    }

    pub fn actions(&self) -> usize {
        self.actions
    }

    #[inline]
    pub fn row(&self, t: usize, s: usize) -> &[f64] {
        let i = (t * self.states + s) * self.actions;
        &self.probs[i..i + self.actions]
    }

    pub(crate) fn row_mut(&mut self, t: usize, s: usize) -> &mut [f64] {
        let i = (t * self.states + s) * self.actions;
        &mut self.probs[i..i + self.actions]
    }

    pub fn prob(&self, t: usize, s: usize, a: usize) -> f64 {
        self.row(t, s)[a]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.probs
    }

    fn check_dims(&self, dims: &Dimensions) -> Result<()> {
        if self.steps != dims.steps() || self.states != dims.follower_states || self.actions != dims.follower_actions {
            return Err(Error::DimensionMismatch(format!(
                "policy is {}x{}x{}, model needs {}x{}x{}",
                self.steps,
                self.states,
                self.actions,
                dims.steps(),
                dims.follower_states,
                dims.follower_actions
            )));
        }
        Ok(())
    }
}

/// Mean-field flow `d_t(s, a)`, `t = 0..=T`, each step flattened with
/// `k = s + |S| a`.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowSequence {
    states: usize,
    actions: usize,
    data: Vec<f64>,
}

impl FlowSequence {
    /// Builds a flow from per-step joint vectors, checking each is a
    /// distribution.
    pub fn new(states: usize, actions: usize, steps: Vec<Vec<f64>>) -> Result<Self> {
        let j = states * actions;
        let mut data = Vec::with_capacity(j * steps.len());
        for (t, d) in steps.iter().enumerate() {
            check_distribution(&format!("flow at t={t}"), d, j)?;
            data.extend_from_slice(d);
        }
        Ok(Self { states, actions, data })
    }

    /// No validation; used where the entries are known to be distributions
    /// or deliberately are not (tests of the residual checks).
    pub fn from_flat(states: usize, actions: usize, data: Vec<f64>) -> Self {
        Self { states, actions, data }
    }

    pub fn states(&self) -> usize {
        self.states
    }

    pub fn actions(&self) -> usize {
        self.actions
    }

    pub fn steps(&self) -> usize {
        self.data.len() / (self.states * self.actions)
    }

    #[inline]
    pub fn at(&self, t: usize) -> &[f64] {
        let j = self.states * self.actions;
        &self.data[t * j..(t + 1) * j]
    }

    pub fn get(&self, t: usize, s: usize, a: usize) -> f64 {
        self.at(t)[s + self.states * a]
    }

    pub fn state_marginal(&self, t: usize) -> Vec<f64> {
        let d = self.at(t);
        (0..self.states)
            .map(|s| (0..self.actions).map(|a| d[s + self.states * a]).sum())
            .collect()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    #[cfg(test)]
    pub(crate) fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    fn check_dims(&self, dims: &Dimensions) -> Result<()> {
        if self.states != dims.follower_states
            || self.actions != dims.follower_actions
            || self.data.len() != dims.steps() * dims.joint()
        {
            return Err(Error::DimensionMismatch(format!(
                "flow has {} steps of {}x{}, model needs {} steps of {}x{}",
                self.steps(),
                self.states,
                self.actions,
                dims.steps(),
                dims.follower_states,
                dims.follower_actions
            )));
        }
        Ok(())
    }
}

/// Leader state marginals `mu^l_t`, `t = 0..=T`.
#[derive(Debug, Clone, PartialEq)]
pub struct MarginalSequence {
    states: usize,
    data: Vec<f64>,
}

impl MarginalSequence {
    pub fn at(&self, t: usize) -> &[f64] {
        &self.data[t * self.states..(t + 1) * self.states]
    }

    pub fn steps(&self) -> usize {
        self.data.len() / self.states
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }
}

/// Clamps rounding negatives and renormalises; errors on real drift.
pub(crate) fn normalize(v: &mut [f64], t: usize) -> Result<()> {
    for x in v.iter_mut() {
        if *x < 0.0 {
            if *x < NEGATIVE_CLAMP {
                return Err(Error::NormalizationDrift { t, drift: *x });
            }
            *x = 0.0;
        }
    }
    let sum: f64 = v.iter().sum();
    let drift = (sum - 1.0).abs();
    if drift >= DRIFT_TOL {
        return Err(Error::NormalizationDrift { t, drift });
    }
    if drift > 0.0 {
        for x in v.iter_mut() {
            *x /= sum;
        }
    }
    Ok(())
}

/// `mu_{t+1}(s') = sum_k d_t(k) P_t(s' | k)` into `out`.
#[inline]
pub(crate) fn push_forward(d: &[f64], p: &[f64], ns: usize, out: &mut [f64]) {
    out.fill(0.0);
    for (k, &mass) in d.iter().enumerate() {
        if mass != 0.0 {
            for (o, pv) in out.iter_mut().zip(&p[k * ns..(k + 1) * ns]) {
                *o += mass * pv;
            }
        }
    }
}

/// The flow consistent with `policy` together with every epoch's maps
/// evaluated at that flow.
pub(crate) fn propagate_with_stages(
    model: &StackelbergModel,
    la: usize,
    policy: &PolicyKernel,
) -> Result<(FlowSequence, Vec<Stage>)> {
    let dims = *model.dims();
    policy.check_dims(&dims)?;
    let (ns, na, j) = (dims.follower_states, dims.follower_actions, dims.joint());
    let mut data = vec![0.0; dims.steps() * j];
    let mut stages = Vec::with_capacity(dims.steps());
    let mut mu = model.follower_initial().to_vec();
    for t in 0..dims.steps() {
        {
            let d = &mut data[t * j..(t + 1) * j];
            for s in 0..ns {
                let row = policy.row(t, s);
                for a in 0..na {
                    d[s + ns * a] = mu[s] * row[a];
                }
            }
        }
        let d = &data[t * j..(t + 1) * j];
        let stage = model.stage(t, la, d);
        if t < dims.horizon {
            push_forward(d, &stage.follower_p, ns, &mut mu);
            normalize(&mut mu, t + 1)?;
        }
        stages.push(stage);
    }
    Ok((FlowSequence::from_flat(ns, na, data), stages))
}

/// The unique flow consistent with `policy`: `d_0(s,a) = mu_0(s) pi_0(a|s)`
/// and `d_{t+1}(s',a) = [sum_k d_t(k) P_t(s'|k, d_t)] pi_{t+1}(a|s')`.
pub fn propagate_follower_flow(model: &StackelbergModel, la: usize, policy: &PolicyKernel) -> Result<FlowSequence> {
    crate::model::check_index("leader action", la, model.dims().leader_actions)?;
    propagate_with_stages(model, la, policy).map(|(f, _)| f)
}

/// Maps of every epoch evaluated at the given flow.
pub fn frozen_stages(model: &StackelbergModel, la: usize, flow: &FlowSequence) -> Result<Vec<Stage>> {
    let dims = model.dims();
    crate::model::check_index("leader action", la, dims.leader_actions)?;
    flow.check_dims(dims)?;
    Ok((0..dims.steps()).map(|t| model.stage(t, la, flow.at(t))).collect())
}

pub(crate) fn leader_marginals_from(dims: &Dimensions, initial: &[f64], stages: &[Stage]) -> Result<MarginalSequence> {
    let nl = dims.leader_states;
    let mut data = Vec::with_capacity(dims.steps() * nl);
    data.extend_from_slice(initial);
    let mut next = vec![0.0; nl];
    for t in 0..dims.horizon {
        let cur = &data[t * nl..(t + 1) * nl];
        push_forward(cur, &stages[t].leader_p, nl, &mut next);
        normalize(&mut next, t + 1)?;
        data.extend_from_slice(&next);
    }
    Ok(MarginalSequence { states: nl, data })
}

/// `mu^l_0` pushed through `P^l_t(. | ., a^l, d_t)`.
pub fn propagate_leader_marginals(
    model: &StackelbergModel,
    la: usize,
    flow: &FlowSequence,
) -> Result<MarginalSequence> {
    let stages = frozen_stages(model, la, flow)?;
    leader_marginals_from(model.dims(), model.leader_initial(), &stages)
}

pub(crate) fn follower_return_from(flow: &FlowSequence, stages: &[Stage]) -> f64 {
    stages
        .iter()
        .enumerate()
        .map(|(t, st)| crate::math::dot(flow.at(t), &st.follower_r))
        .sum()
}

pub(crate) fn leader_return_from(marginals: &MarginalSequence, stages: &[Stage]) -> f64 {
    stages
        .iter()
        .enumerate()
        .map(|(t, st)| crate::math::dot(marginals.at(t), &st.leader_r))
        .sum()
}

/// `sum_t sum_{s,a} d_t(s,a) r_t(s,a,d_t)`.
pub fn follower_return(model: &StackelbergModel, la: usize, flow: &FlowSequence) -> Result<f64> {
    let stages = frozen_stages(model, la, flow)?;
    Ok(follower_return_from(flow, &stages))
}

/// `sum_t sum_{s_l} mu^l_t(s_l) r^l_t(s_l, a^l, d_t)`.
pub fn leader_return(model: &StackelbergModel, la: usize, flow: &FlowSequence) -> Result<f64> {
    let stages = frozen_stages(model, la, flow)?;
    let m = leader_marginals_from(model.dims(), model.leader_initial(), &stages)?;
    Ok(leader_return_from(&m, &stages))
}

/// Sup-norm gap between `flow` and the flow `policy` induces.
pub fn consistency_residual(
    model: &StackelbergModel,
    la: usize,
    policy: &PolicyKernel,
    flow: &FlowSequence,
) -> Result<f64> {
    flow.check_dims(model.dims())?;
    let induced = propagate_follower_flow(model, la, policy)?;
    Ok(crate::math::max_abs_diff(induced.as_slice(), flow.as_slice()))
}

#[cfg(test)]
mod tests;
