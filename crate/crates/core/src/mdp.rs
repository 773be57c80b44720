//! Follower best response against a frozen flow: backward induction and
//! exploitability.

use alloc::vec;
use alloc::vec::Vec;

use crate::dynamics::{follower_return_from, frozen_stages, FlowSequence};
use crate::model::{Dimensions, StackelbergModel, Stage};
use crate::Result;

/// Two Q-values within this of the maximum count as tied.
pub const TIE_TOL: f64 = 1e-12;

/// Value-to-go, Q-values and greedy action sets for `t = 0..=T`.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueTable {
    states: usize,
    actions: usize,
    /// `t * S + s`
    v: Vec<f64>,
    /// `t * S * A + s + S a`
    q: Vec<f64>,
    /// Greedy actions at `(t, s)`, ascending.
    greedy: Vec<Vec<usize>>,
    /// `sum_s mu_0(s) V_0(s)`.
    value: f64,
}

impl ValueTable {
    pub fn v(&self, t: usize, s: usize) -> f64 {
        self.v[t * self.states + s]
    }

    pub fn q(&self, t: usize, s: usize, a: usize) -> f64 {
        self.q[t * self.states * self.actions + s + self.states * a]
    }

    /// `V_t` as a slice over states.
    pub fn v_at(&self, t: usize) -> &[f64] {
        &self.v[t * self.states..(t + 1) * self.states]
    }

    /// `Q_t` flattened with `k = s + S a`.
    pub fn q_at(&self, t: usize) -> &[f64] {
        let j = self.states * self.actions;
        &self.q[t * j..(t + 1) * j]
    }

    /// Every action attaining `max_a Q_t(s, a)` up to [`TIE_TOL`].
    pub fn greedy_set(&self, t: usize, s: usize) -> &[usize] {
        &self.greedy[t * self.states + s]
    }

    /// Lowest-index greedy action.
    pub fn greedy_action(&self, t: usize, s: usize) -> usize {
        self.greedy_set(t, s)[0]
    }

    /// `V^f(d) = sum_s mu_0(s) V_0(s)`.
    pub fn value(&self) -> f64 {
        self.value
    }

    pub fn steps(&self) -> usize {
        self.v.len() / self.states
    }
}

/// Backward induction over maps already evaluated at the flow.
pub(crate) fn backward_induction_from(dims: &Dimensions, initial: &[f64], stages: &[Stage]) -> ValueTable {
    let (ns, na, j, steps) = (dims.follower_states, dims.follower_actions, dims.joint(), dims.steps());
    let mut v = vec![0.0; steps * ns];
    let mut q = vec![0.0; steps * j];
    let mut greedy = vec![Vec::new(); steps * ns];
    for t in (0..steps).rev() {
        let st = &stages[t];
        for k in 0..j {
            let mut val = st.follower_r[k];
            if t < dims.horizon {
                let next = &v[(t + 1) * ns..(t + 2) * ns];
                val += crate::math::dot(&st.follower_p[k * ns..(k + 1) * ns], next);
            }
            q[t * j + k] = val;
        }
        for s in 0..ns {
            let row = |a: usize| q[t * j + s + ns * a];
            let best = (0..na).map(row).fold(f64::NEG_INFINITY, f64::max);
            v[t * ns + s] = best;
            greedy[t * ns + s] = (0..na).filter(|&a| row(a) >= best - TIE_TOL).collect();
        }
    }
    let value = crate::math::dot(initial, &v[..ns]);
    ValueTable {
        states: ns,
        actions: na,
        v,
        q,
        greedy,
        value,
    }
}

/// Dynamic programming against the frozen flow:
/// `Q_t(s,a) = r_t(s,a,d_t) + sum_s' P_t(s'|s,a,d_t) V_{t+1}(s')`,
/// `V_t(s) = max_a Q_t(s,a)`, `V_{T+1} = 0`.
pub fn backward_induction_value(model: &StackelbergModel, la: usize, flow: &FlowSequence) -> Result<ValueTable> {
    let stages = frozen_stages(model, la, flow)?;
    Ok(backward_induction_from(model.dims(), model.follower_initial(), &stages))
}

pub(crate) fn exploitability_from(dims: &Dimensions, initial: &[f64], flow: &FlowSequence, stages: &[Stage]) -> f64 {
    backward_induction_from(dims, initial, stages).value() - follower_return_from(flow, stages)
}

/// `V^f(d) - J^f(d)`: what a single follower gains by best-responding.
pub fn exploitability(model: &StackelbergModel, la: usize, flow: &FlowSequence) -> Result<f64> {
    let stages = frozen_stages(model, la, flow)?;
    Ok(exploitability_from(
        model.dims(),
        model.follower_initial(),
        flow,
        &stages,
    ))
}
