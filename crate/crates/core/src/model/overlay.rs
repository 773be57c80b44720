//! Entrywise perturbation layered over any model's maps.
//!
//! Transition rows become `(1 - eta) P + eta q` for a fixed distribution `q`
//! and `eta <= delta_p`, so every entry moves by at most `delta_p` and rows
//! stay in the simplex for every population distribution. Rewards get a
//! constant shift in `[-delta_r, delta_r]` and are then clamped to
//! `[-cap, cap]`, where the caps are at least one and at least the base
//! model's reward bounds, so clamping never moves a reward further.

use alloc::format;
use alloc::vec::Vec;

use super::{Dimensions, Stage};
use crate::{Error, Result, SIMPLEX_TOL};

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Overlay {
    /// Per `(la, t, k)`.
    pub follower_eta: Vec<f64>,
    /// Per `(la, t, k, s')`.
    pub follower_target: Vec<f64>,
    /// Per `(la, t, k)`.
    pub follower_shift: Vec<f64>,
    /// Per `(la, t, s_l)`.
    pub leader_eta: Vec<f64>,
    /// Per `(la, t, s_l, s_l')`.
    pub leader_target: Vec<f64>,
    /// Per `(la, t, s_l)`.
    pub leader_shift: Vec<f64>,
    pub follower_cap: f64,
    pub leader_cap: f64,
}

impl Overlay {
    #[inline]
    fn block(dims: &Dimensions, la: usize, t: usize) -> usize {
        la * dims.steps() + t
    }

    pub(crate) fn check(&self, dims: &Dimensions) -> Result<()> {
        let blocks = dims.leader_actions * dims.steps();
        let j = dims.joint();
        let ns = dims.follower_states;
        let nl = dims.leader_states;
        let lens = [
            (self.follower_eta.len(), blocks * j),
            (self.follower_target.len(), blocks * j * ns),
            (self.follower_shift.len(), blocks * j),
            (self.leader_eta.len(), blocks * nl),
            (self.leader_target.len(), blocks * nl * nl),
            (self.leader_shift.len(), blocks * nl),
        ];
        if lens.iter().any(|(a, b)| a != b) {
            return Err(Error::InvalidModel("perturbation overlay has wrong dimensions".into()));
        }
        if self
            .follower_eta
            .iter()
            .chain(&self.leader_eta)
            .any(|e| !(0.0..=1.0).contains(e))
        {
            return Err(Error::InvalidModel("perturbation weight outside [0, 1]".into()));
        }
        if !(self.follower_cap >= 1.0 && self.leader_cap >= 1.0) {
            return Err(Error::InvalidModel(
                "perturbation reward caps must be at least 1".into(),
            ));
        }
        for (rows, n) in [(&self.follower_target, ns), (&self.leader_target, nl)] {
            for (i, row) in rows.chunks_exact(n).enumerate() {
                let sum: f64 = row.iter().sum();
                if row.iter().any(|x| *x < 0.0) || (sum - 1.0).abs() > SIMPLEX_TOL {
                    return Err(Error::InvalidModel(format!(
                        "perturbation target row {i} is not a distribution"
                    )));
                }
            }
        }
        Ok(())
    }

    pub(crate) fn apply(&self, dims: &Dimensions, t: usize, la: usize, stage: &mut Stage) {
        let b = Self::block(dims, la, t);
        let j = dims.joint();
        let ns = dims.follower_states;
        let nl = dims.leader_states;
        for k in 0..j {
            let eta = self.follower_eta[b * j + k];
            let q = &self.follower_target[(b * j + k) * ns..(b * j + k + 1) * ns];
            for (p, qv) in stage.follower_p[k * ns..(k + 1) * ns].iter_mut().zip(q) {
                *p = (1.0 - eta) * *p + eta * qv;
            }
            let r = stage.follower_r[k] + self.follower_shift[b * j + k];
            stage.follower_r[k] = r.clamp(-self.follower_cap, self.follower_cap);
        }
        for sl in 0..nl {
            let eta = self.leader_eta[b * nl + sl];
            let q = &self.leader_target[(b * nl + sl) * nl..(b * nl + sl + 1) * nl];
            for (p, qv) in stage.leader_p[sl * nl..(sl + 1) * nl].iter_mut().zip(q) {
                *p = (1.0 - eta) * *p + eta * qv;
            }
            let r = stage.leader_r[sl] + self.leader_shift[b * nl + sl];
            stage.leader_r[sl] = r.clamp(-self.leader_cap, self.leader_cap);
        }
    }

    pub(crate) fn action_dependent(&self, dims: &Dimensions, t: usize) -> bool {
        let j = dims.joint();
        let ns = dims.follower_states;
        (0..dims.leader_actions).any(|la| {
            let b = Self::block(dims, la, t);
            (0..ns).any(|s| {
                let k0 = b * j + dims.joint_index(s, 0);
                (1..dims.follower_actions).any(|a| {
                    let k = b * j + dims.joint_index(s, a);
                    let reward = self.follower_shift[k] != self.follower_shift[k0];
                    let trans = t < dims.horizon
                        && (self.follower_eta[k] != self.follower_eta[k0]
                            || self.follower_target[k * ns..(k + 1) * ns]
                                != self.follower_target[k0 * ns..(k0 + 1) * ns]);
                    reward || trans
                })
            })
        })
    }

    /// Reward bounds after the overlay, given the base bounds.
    pub(crate) fn reward_bounds(&self, base: (f64, f64)) -> (f64, f64) {
        let m = |v: &[f64]| v.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
        (
            (base.0 + m(&self.follower_shift)).min(self.follower_cap),
            (base.1 + m(&self.leader_shift)).min(self.leader_cap),
        )
    }
}
