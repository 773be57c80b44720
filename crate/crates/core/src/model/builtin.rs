//! The closed-form example games.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use super::{Dimensions, Labels, ModelKind, Stage};
use crate::{Error, Result};

/// Index of the exposed location `e`.
pub const PREDATOR_E: usize = 0;
/// Index of the shelter `s`.
pub const PREDATOR_S: usize = 1;

/// Predator-prey game over one step.
///
/// Prey choose their next location at `t = 0` (`P_0(s'|s, a) = 1{s' = a}`).
/// At `t = 1` a prey at `e` earns `mu(e) - epsilon0 - delta_r` and a prey at
/// the shelter earns 1. With full effort (`g`, also the single action of the
/// one-action game) the predator earns `1 - mu_1(e)`; the lazier `l` earns
/// `(1 - mu_1(e))/3 + (1 - epsilon0)/3`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Predator {
    pub epsilon0: f64,
    pub delta_r: f64,
    pub two_action: bool,
}

impl Predator {
    pub fn new(epsilon0: f64, delta_r: f64, two_action: bool) -> Result<Self> {
        if !epsilon0.is_finite() || !delta_r.is_finite() {
            return Err(Error::InvalidModel("predator parameters must be finite".into()));
        }
        if !(0.0..=1.0).contains(&epsilon0) {
            return Err(Error::InvalidModel(format!(
                "epsilon0 must lie in [0, 1], got {epsilon0}"
            )));
        }
        if delta_r < 0.0 {
            return Err(Error::InvalidModel(format!(
                "delta_r must be non-negative, got {delta_r}"
            )));
        }
        Ok(Self {
            epsilon0,
            delta_r,
            two_action,
        })
    }

    pub(crate) fn dims(&self) -> Dimensions {
        Dimensions {
            horizon: 1,
            follower_states: 2,
            follower_actions: 2,
            leader_states: 1,
            leader_actions: if self.two_action { 2 } else { 1 },
        }
    }

    pub(crate) fn kind(&self) -> ModelKind {
        if self.two_action {
            ModelKind::PredatorTwoAction
        } else if self.delta_r != 0.0 {
            ModelKind::PredatorPerturbed
        } else {
            ModelKind::Predator
        }
    }

    pub(crate) fn labels(&self) -> Labels {
        let v = |xs: &[&str]| xs.iter().map(|x| x.to_string()).collect::<Vec<String>>();
        Labels {
            follower_states: v(&["e", "s"]),
            follower_actions: v(&["e", "s"]),
            leader_states: v(&["predator"]),
            leader_actions: if self.two_action { v(&["g", "l"]) } else { v(&["hunt"]) },
        }
    }

    /// `mu(e)` of a joint distribution.
    pub fn exposed_mass(l: &[f64]) -> f64 {
        // joint index s + 2a with s = e
        l[PREDATOR_E] + l[PREDATOR_E + 2]
    }

    pub(crate) fn fill_stage(&self, t: usize, la: usize, l: &[f64], out: &mut Stage) {
        for k in 0..4 {
            let a = k / 2;
            for sp in 0..2 {
                out.follower_p[k * 2 + sp] = if sp == a { 1.0 } else { 0.0 };
            }
        }
        out.leader_p[0] = 1.0;
        if t == 0 {
            out.follower_r.fill(0.0);
            out.leader_r[0] = 0.0;
            return;
        }
        let mu_e = Self::exposed_mass(l);
        for k in 0..4 {
            let s = k % 2;
            out.follower_r[k] = if s == PREDATOR_E {
                mu_e - self.epsilon0 - self.delta_r
            } else {
                1.0
            };
        }
        out.leader_r[0] = if la == 0 {
            1.0 - mu_e
        } else {
            (1.0 - mu_e) / 3.0 + (1.0 - self.epsilon0) / 3.0
        };
    }

    pub(crate) fn policy_relevant(&self, t: usize) -> bool {
        t == 0
    }

    pub(crate) fn reward_bounds(&self) -> (f64, f64) {
        let c = self.epsilon0 + self.delta_r;
        let f = 1.0_f64.max((1.0 - c).abs()).max(c.abs());
        let mut l = 1.0_f64;
        if self.two_action {
            let lazy_lo = (1.0 - self.epsilon0) / 3.0;
            l = l.max(lazy_lo.abs()).max((lazy_lo + 1.0 / 3.0).abs());
        }
        (f, l)
    }

    /// `mu(e)` carries two unit coefficients, so every `mu(e)`-affine map
    /// has sup-norm slope 2 per unit coefficient.
    pub(crate) fn lipschitz(&self) -> [f64; 4] {
        [0.0, 2.0, 0.0, 2.0]
    }
}

/// "Following the majority": `S = A = {1..n}`, the action is the next state,
/// and for `t >= 1` a follower staying put at `i` earns
/// `r^i (1 - |L - e_ii|^2 / 2)`. The leader's action is the reward vector
/// `(r^1, ..., r^n)`; for `n = 2` she earns `r^2 - r^1` when the whole
/// population sits at `(1, 1)` and `r^1 - r^2` when it sits at `(2, 2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Majority {
    pub n: usize,
    pub horizon: usize,
    /// One row `(r^1..r^n)` per leader action.
    pub grid: Vec<Vec<f64>>,
}

/// Sup-norm distance below which the population counts as gathered.
const GATHERED_TOL: f64 = 1e-12;

impl Majority {
    pub fn new(n: usize, horizon: usize, grid: Vec<Vec<f64>>) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidModel("majority game needs n >= 1".into()));
        }
        if horizon == 0 {
            return Err(Error::InvalidModel("horizon must be at least 1".into()));
        }
        if grid.is_empty() {
            return Err(Error::InvalidModel(
                "majority game needs at least one leader action".into(),
            ));
        }
        for (i, row) in grid.iter().enumerate() {
            if row.len() != n {
                return Err(Error::InvalidModel(format!(
                    "params.leader_action_grid[{i}] has {} entries, expected {n}",
                    row.len()
                )));
            }
            if let Some(x) = row.iter().find(|x| !x.is_finite() || **x <= 0.0) {
                return Err(Error::InvalidModel(format!(
                    "params.leader_action_grid[{i}] contains {x}; rewards must be positive"
                )));
            }
        }
        Ok(Self { n, horizon, grid })
    }

    pub(crate) fn dims(&self) -> Dimensions {
        Dimensions {
            horizon: self.horizon,
            follower_states: self.n,
            follower_actions: self.n,
            leader_states: 1,
            leader_actions: self.grid.len(),
        }
    }

    pub(crate) fn labels(&self) -> Labels {
        let idx = |n: usize| (1..=n).map(|i| format!("{i}")).collect::<Vec<_>>();
        Labels {
            follower_states: idx(self.n),
            follower_actions: idx(self.n),
            leader_states: vec!["leader".to_string()],
            leader_actions: self
                .grid
                .iter()
                .map(|row| {
                    let parts: Vec<String> = row.iter().map(|x| format!("{x}")).collect();
                    format!("r=({})", parts.join(","))
                })
                .collect(),
        }
    }

    fn gathered_at(&self, l: &[f64], i: usize) -> bool {
        let target = i + self.n * i;
        l.iter()
            .enumerate()
            .all(|(k, x)| (x - if k == target { 1.0 } else { 0.0 }).abs() <= GATHERED_TOL)
    }

    pub(crate) fn fill_stage(&self, t: usize, la: usize, l: &[f64], out: &mut Stage) {
        let n = self.n;
        for k in 0..n * n {
            let a = k / n;
            for sp in 0..n {
                out.follower_p[k * n + sp] = if sp == a { 1.0 } else { 0.0 };
            }
        }
        out.leader_p[0] = 1.0;
        let r = &self.grid[la];
        if t == 0 {
            out.follower_r.fill(0.0);
        } else {
            for k in 0..n * n {
                let (i, j) = (k % n, k / n);
                out.follower_r[k] = if i == j {
                    let target = i + n * i;
                    let dist2: f64 = l
                        .iter()
                        .enumerate()
                        .map(|(m, x)| {
                            let d = x - if m == target { 1.0 } else { 0.0 };
                            d * d
                        })
                        .sum();
                    r[i] - r[i] * dist2 / 2.0
                } else {
                    0.0
                };
            }
        }
        out.leader_r[0] = if n == 2 {
            if self.gathered_at(l, 0) {
                r[1] - r[0]
            } else if self.gathered_at(l, 1) {
                r[0] - r[1]
            } else {
                0.0
            }
        } else {
            0.0
        };
    }

    pub(crate) fn reward_bounds(&self) -> (f64, f64) {
        let f = self.grid.iter().flatten().fold(0.0_f64, |m, x| m.max(*x));
        let l = if self.n == 2 {
            self.grid.iter().fold(0.0_f64, |m, r| m.max((r[1] - r[0]).abs()))
        } else {
            0.0
        };
        (f, l)
    }

    /// `|L - e|_1 <= 2` on the simplex gives slope `2 r^i` for the follower
    /// reward. The leader reward jumps at the gathered vertices, so it has no
    /// finite constant unless it vanishes.
    pub(crate) fn lipschitz(&self) -> [f64; 4] {
        let rmax = self.grid.iter().flatten().fold(0.0_f64, |m, x| m.max(*x));
        let leader = if self.n == 2 && self.grid.iter().any(|r| r[0] != r[1]) {
            f64::INFINITY
        } else {
            0.0
        };
        [0.0, 2.0 * rmax, 0.0, leader]
    }
}
