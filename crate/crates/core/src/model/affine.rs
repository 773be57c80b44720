//! Tabular maps with affine dependence on the population distribution and
//! an optional quadratic reward term.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::{Dimensions, Stage};
use crate::{Error, Result, SIMPLEX_TOL};

/// Coefficients of one epoch for one leader action.
///
/// With `J = |S^f||A^f|` and `k`, `j` joint indices (`s + |S^f| a`):
///
/// | field      | layout                              |
/// |------------|-------------------------------------|
/// | `p_base`   | `[k][s']`                           |
/// | `p_lin`    | `[k][s'][j]`                        |
/// | `r_base`   | `[k]`                               |
/// | `r_lin`    | `[k][j]`                            |
/// | `r_quad`   | `[k][j][j']` (optional)             |
/// | `pl_base`  | `[s_l][s_l']`                       |
/// | `pl_lin`   | `[s_l][s_l'][j]`                    |
/// | `rl_base`  | `[s_l]`                             |
/// | `rl_lin`   | `[s_l][j]`                          |
/// | `rl_quad`  | `[s_l][j][j']` (optional)           |
#[derive(Debug, Clone, PartialEq)]
pub struct AffineStage {
    pub p_base: Vec<f64>,
    pub p_lin: Vec<f64>,
    pub r_base: Vec<f64>,
    pub r_lin: Vec<f64>,
    pub r_quad: Option<Vec<f64>>,
    pub pl_base: Vec<f64>,
    pub pl_lin: Vec<f64>,
    pub rl_base: Vec<f64>,
    pub rl_lin: Vec<f64>,
    pub rl_quad: Option<Vec<f64>>,
}

impl AffineStage {
    /// Zero rewards, zero coupling, and every transition row sending all
    /// mass to state 0 (a valid placeholder to be overwritten).
    pub fn zeros(dims: &Dimensions) -> Self {
        let s = dims.follower_states;
        let j = dims.joint();
        let sl = dims.leader_states;
        let mut p_base = vec![0.0; j * s];
        for k in 0..j {
            p_base[k * s] = 1.0;
        }
        let mut pl_base = vec![0.0; sl * sl];
        for a in 0..sl {
            pl_base[a * sl] = 1.0;
        }
        Self {
            p_base,
            p_lin: vec![0.0; j * s * j],
            r_base: vec![0.0; j],
            r_lin: vec![0.0; j * j],
            r_quad: None,
            pl_base,
            pl_lin: vec![0.0; sl * sl * j],
            rl_base: vec![0.0; sl],
            rl_lin: vec![0.0; sl * j],
            rl_quad: None,
        }
    }

    /// Sets row `(s, a)` of the base follower transition.
    pub fn set_p_row(&mut self, dims: &Dimensions, s: usize, a: usize, row: &[f64]) {
        let ns = dims.follower_states;
        let k = dims.joint_index(s, a);
        self.p_base[k * ns..(k + 1) * ns].copy_from_slice(row);
    }

    pub fn set_pl_row(&mut self, dims: &Dimensions, sl: usize, row: &[f64]) {
        let nl = dims.leader_states;
        self.pl_base[sl * nl..(sl + 1) * nl].copy_from_slice(row);
    }

    fn check_lengths(&self, dims: &Dimensions, la: usize, t: usize) -> Result<()> {
        let s = dims.follower_states;
        let j = dims.joint();
        let sl = dims.leader_states;
        let expect = [
            ("p_base", self.p_base.len(), j * s),
            ("p_lin", self.p_lin.len(), j * s * j),
            ("r_base", self.r_base.len(), j),
            ("r_lin", self.r_lin.len(), j * j),
            ("pl_base", self.pl_base.len(), sl * sl),
            ("pl_lin", self.pl_lin.len(), sl * sl * j),
            ("rl_base", self.rl_base.len(), sl),
            ("rl_lin", self.rl_lin.len(), sl * j),
        ];
        for (name, got, want) in expect {
            if got != want {
                return Err(Error::InvalidModel(format!(
                    "tables[{la}][{t}].{name} has {got} entries, expected {want}"
                )));
            }
        }
        if let Some(q) = &self.r_quad {
            if q.len() != j * j * j {
                return Err(Error::InvalidModel(format!(
                    "tables[{la}][{t}].r_quad has {} entries, expected {}",
                    q.len(),
                    j * j * j
                )));
            }
        }
        if let Some(q) = &self.rl_quad {
            if q.len() != sl * j * j {
                return Err(Error::InvalidModel(format!(
                    "tables[{la}][{t}].rl_quad has {} entries, expected {}",
                    q.len(),
                    sl * j * j
                )));
            }
        }
        let all = self
            .p_base
            .iter()
            .chain(&self.p_lin)
            .chain(&self.r_base)
            .chain(&self.r_lin)
            .chain(&self.pl_base)
            .chain(&self.pl_lin)
            .chain(&self.rl_base)
            .chain(&self.rl_lin)
            .chain(self.r_quad.iter().flatten())
            .chain(self.rl_quad.iter().flatten());
        if all.clone().any(|x| !x.is_finite()) {
            return Err(Error::InvalidModel(format!(
                "tables[{la}][{t}] contains a non-finite coefficient"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct AffineMaps {
    /// `[leader action][epoch]`
    stages: Vec<Vec<AffineStage>>,
}

#[inline]
fn affine_at(base: f64, lin: &[f64], l: &[f64]) -> f64 {
    base + lin.iter().zip(l).map(|(c, x)| c * x).sum::<f64>()
}

#[inline]
fn quad_at(q: &[f64], l: &[f64]) -> f64 {
    let j = l.len();
    let mut acc = 0.0;
    for (row, li) in q.chunks_exact(j).zip(l) {
        if *li != 0.0 {
            acc += li * row.iter().zip(l).map(|(c, x)| c * x).sum::<f64>();
        }
    }
    acc
}

/// `sum_j max_j' |Q_jj'| + sum_j' max_j |Q_jj'|`: Lipschitz bound of
/// `L^T Q L` on the simplex in the sup norm.
fn quad_lipschitz(q: &[f64], j: usize) -> f64 {
    let rows: f64 = q
        .chunks_exact(j)
        .map(|r| r.iter().fold(0.0_f64, |m, x| m.max(x.abs())))
        .sum();
    let cols: f64 = (0..j)
        .map(|c| (0..j).fold(0.0_f64, |m, r| m.max(q[r * j + c].abs())))
        .sum();
    rows + cols
}

fn quad_max_abs(q: &[f64]) -> f64 {
    q.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

impl AffineMaps {
    pub(crate) fn new(dims: &Dimensions, stages: Vec<Vec<AffineStage>>) -> Result<Self> {
        if stages.len() != dims.leader_actions {
            return Err(Error::InvalidModel(format!(
                "tables has {} leader actions, expected {}",
                stages.len(),
                dims.leader_actions
            )));
        }
        for (la, per_t) in stages.iter().enumerate() {
            if per_t.len() != dims.steps() {
                return Err(Error::InvalidModel(format!(
                    "tables[{la}] has {} epochs, expected {}",
                    per_t.len(),
                    dims.steps()
                )));
            }
            for (t, st) in per_t.iter().enumerate() {
                st.check_lengths(dims, la, t)?;
            }
        }
        Ok(Self { stages })
    }

    pub(crate) fn has_quadratic(&self) -> bool {
        self.stages
            .iter()
            .flatten()
            .any(|s| s.r_quad.is_some() || s.rl_quad.is_some())
    }

    /// Vertex check: at every `L = e_j` each transition row is a distribution.
    pub(crate) fn validate(&self, dims: &Dimensions) -> Result<()> {
        let ns = dims.follower_states;
        let nl = dims.leader_states;
        let j = dims.joint();
        for (la, per_t) in self.stages.iter().enumerate() {
            for (t, st) in per_t.iter().enumerate() {
                for vertex in 0..j {
                    for k in 0..j {
                        let (s, a) = dims.joint_parts(k);
                        let row: Vec<f64> = (0..ns)
                            .map(|sp| st.p_base[k * ns + sp] + st.p_lin[(k * ns + sp) * j + vertex])
                            .collect();
                        row_check(&row).map_err(|detail| Error::VertexValidation {
                            t,
                            leader_action: la,
                            state: s,
                            action: a,
                            vertex,
                            detail,
                        })?;
                    }
                    for sl in 0..nl {
                        let row: Vec<f64> = (0..nl)
                            .map(|sp| st.pl_base[sl * nl + sp] + st.pl_lin[(sl * nl + sp) * j + vertex])
                            .collect();
                        row_check(&row).map_err(|detail| {
                            Error::InvalidModel(format!(
                                "leader transition at t={t}, leader action {la}, leader state {sl} \
                                 is not a distribution at simplex vertex {vertex}: {detail}"
                            ))
                        })?;
                    }
                }
            }
        }
        Ok(())
    }

    pub(crate) fn fill_stage(&self, dims: &Dimensions, t: usize, la: usize, l: &[f64], out: &mut Stage) {
        let st = &self.stages[la][t];
        let nl = dims.leader_states;
        let j = dims.joint();
        for (i, p) in out.follower_p.iter_mut().enumerate() {
            *p = affine_at(st.p_base[i], &st.p_lin[i * j..(i + 1) * j], l);
        }
        for (k, r) in out.follower_r.iter_mut().enumerate() {
            *r = affine_at(st.r_base[k], &st.r_lin[k * j..(k + 1) * j], l);
            if let Some(q) = &st.r_quad {
                *r += quad_at(&q[k * j * j..(k + 1) * j * j], l);
            }
        }
        for (i, p) in out.leader_p.iter_mut().enumerate().take(nl * nl) {
            *p = affine_at(st.pl_base[i], &st.pl_lin[i * j..(i + 1) * j], l);
        }
        for (sl, r) in out.leader_r.iter_mut().enumerate() {
            *r = affine_at(st.rl_base[sl], &st.rl_lin[sl * j..(sl + 1) * j], l);
            if let Some(q) = &st.rl_quad {
                *r += quad_at(&q[sl * j * j..(sl + 1) * j * j], l);
            }
        }
    }

    /// Largest sup-norm Lipschitz constant of each map family, in the order
    /// follower transition, follower reward, leader transition, leader reward.
    pub(crate) fn lipschitz(&self, dims: &Dimensions) -> [f64; 4] {
        let j = dims.joint();
        let row_sum = |c: &[f64]| c.iter().map(|x| x.abs()).sum::<f64>();
        let mut out = [0.0_f64; 4];
        for st in self.stages.iter().flatten() {
            for c in st.p_lin.chunks_exact(j) {
                out[0] = out[0].max(row_sum(c));
            }
            for (k, c) in st.r_lin.chunks_exact(j).enumerate() {
                let q = st
                    .r_quad
                    .as_ref()
                    .map_or(0.0, |q| quad_lipschitz(&q[k * j * j..(k + 1) * j * j], j));
                out[1] = out[1].max(row_sum(c) + q);
            }
            for c in st.pl_lin.chunks_exact(j) {
                out[2] = out[2].max(row_sum(c));
            }
            for (sl, c) in st.rl_lin.chunks_exact(j).enumerate() {
                let q = st
                    .rl_quad
                    .as_ref()
                    .map_or(0.0, |q| quad_lipschitz(&q[sl * j * j..(sl + 1) * j * j], j));
                out[3] = out[3].max(row_sum(c) + q);
            }
        }
        out
    }

    pub(crate) fn reward_bounds(&self, dims: &Dimensions) -> (f64, f64) {
        let j = dims.joint();
        // Affine part attains its extremes at the vertices; the quadratic
        // part is bounded by its largest coefficient on the simplex.
        let bound = |base: f64, lin: &[f64], quad: Option<&[f64]>| {
            let lin_max = lin.iter().fold(f64::NEG_INFINITY, |m, c| m.max((base + c).abs()));
            lin_max + quad.map_or(0.0, quad_max_abs)
        };
        let mut f = 0.0_f64;
        let mut l = 0.0_f64;
        for st in self.stages.iter().flatten() {
            for k in 0..j {
                let q = st.r_quad.as_ref().map(|q| &q[k * j * j..(k + 1) * j * j]);
                f = f.max(bound(st.r_base[k], &st.r_lin[k * j..(k + 1) * j], q));
            }
            for sl in 0..st.rl_base.len() {
                let q = st.rl_quad.as_ref().map(|q| &q[sl * j * j..(sl + 1) * j * j]);
                l = l.max(bound(st.rl_base[sl], &st.rl_lin[sl * j..(sl + 1) * j], q));
            }
        }
        (f, l)
    }

    pub(crate) fn policy_relevant(&self, dims: &Dimensions, t: usize) -> bool {
        let ns = dims.follower_states;
        let na = dims.follower_actions;
        let j = dims.joint();
        let same = |x: f64, y: f64| x == y;
        // Coefficient vector over j = (sigma, alpha) depends on sigma only.
        let marginal_only = |c: &[f64]| (0..ns).all(|sg| (1..na).all(|al| same(c[sg + ns * al], c[sg])));
        let quad_marginal_only = |q: &[f64]| {
            q.chunks_exact(j).all(&marginal_only)
                && (0..j).all(|col| {
                    let column: Vec<f64> = (0..j).map(|r| q[r * j + col]).collect();
                    marginal_only(&column)
                })
        };
        for st in self.stages.iter().map(|per_t| &per_t[t]) {
            // Follower reward: action independent, marginal-only coupling.
            for s in 0..ns {
                for a in 1..na {
                    let k0 = dims.joint_index(s, 0);
                    let k = dims.joint_index(s, a);
                    if !same(st.r_base[k], st.r_base[k0])
                        || st.r_lin[k * j..(k + 1) * j] != st.r_lin[k0 * j..(k0 + 1) * j]
                    {
                        return true;
                    }
                    if let Some(q) = &st.r_quad {
                        if q[k * j * j..(k + 1) * j * j] != q[k0 * j * j..(k0 + 1) * j * j] {
                            return true;
                        }
                    }
                    if t < dims.horizon
                        && (st.p_base[k * ns..(k + 1) * ns] != st.p_base[k0 * ns..(k0 + 1) * ns]
                            || st.p_lin[k * ns * j..(k + 1) * ns * j] != st.p_lin[k0 * ns * j..(k0 + 1) * ns * j])
                    {
                        return true;
                    }
                }
            }
            if !st.r_lin.chunks_exact(j).all(&marginal_only)
                || !st.rl_lin.chunks_exact(j).all(&marginal_only)
                || !st.pl_lin.chunks_exact(j).all(&marginal_only)
            {
                return true;
            }
            if t < dims.horizon && !st.p_lin.chunks_exact(j).all(&marginal_only) {
                return true;
            }
            if st
                .r_quad
                .as_ref()
                .is_some_and(|q| !q.chunks_exact(j * j).all(&quad_marginal_only))
                || st
                    .rl_quad
                    .as_ref()
                    .is_some_and(|q| !q.chunks_exact(j * j).all(&quad_marginal_only))
            {
                return true;
            }
        }
        false
    }
}

fn row_check(row: &[f64]) -> core::result::Result<(), alloc::string::String> {
    if let Some((i, x)) = row.iter().enumerate().find(|(_, x)| **x < -SIMPLEX_TOL) {
        return Err(format!("entry {i} is {x}"));
    }
    let sum: f64 = row.iter().sum();
    if (sum - 1.0).abs() > SIMPLEX_TOL {
        return Err(format!("row sums to {sum}"));
    }
    Ok(())
}
