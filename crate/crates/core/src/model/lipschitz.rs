//! Sup-norm Lipschitz constants of the model maps in the population
//! distribution.

use rand::Rng;

use super::{Maps, StackelbergModel};
use crate::math::max_abs_diff;
use crate::random::simplex_point;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LipschitzMethod {
    /// Coefficient bound of the affine family (plus the quadratic term).
    AnalyticAffine,
    /// Closed form for the builtin games.
    AnalyticBuiltin,
    /// Largest observed difference quotient over vertex and sampled pairs.
    VertexFiniteDifference,
}

impl LipschitzMethod {
    pub fn as_str(&self) -> &'static str {
        match self {
            LipschitzMethod::AnalyticAffine => "analytic-affine",
            LipschitzMethod::AnalyticBuiltin => "analytic-builtin",
            LipschitzMethod::VertexFiniteDifference => "vertex-finite-difference",
        }
    }
}

/// A common constant `C` for follower transitions, follower rewards, leader
/// transitions and leader rewards.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LipschitzEstimate {
    pub c: f64,
    /// Per map: follower transition, follower reward, leader transition,
    /// leader reward.
    pub per_map: [f64; 4],
    pub method: LipschitzMethod,
}

impl LipschitzEstimate {
    fn from_maps(per_map: [f64; 4], method: LipschitzMethod) -> Self {
        let c = per_map.iter().fold(0.0_f64, |m, x| m.max(*x));
        Self { c, per_map, method }
    }
}

impl StackelbergModel {
    /// Analytic Lipschitz constant.
    ///
    /// Perturbation overlays mix transitions towards a fixed row with weight
    /// `eta` (scaling slopes by `1 - eta`) and shift rewards by constants
    /// before a 1-Lipschitz clamp, so the constant of the unperturbed maps
    /// remains valid.
    pub fn estimate_lipschitz(&self) -> LipschitzEstimate {
        match self.maps() {
            Maps::Affine(m) => LipschitzEstimate::from_maps(m.lipschitz(self.dims()), LipschitzMethod::AnalyticAffine),
            Maps::Predator(p) => LipschitzEstimate::from_maps(p.lipschitz(), LipschitzMethod::AnalyticBuiltin),
            Maps::Majority(m) => LipschitzEstimate::from_maps(m.lipschitz(), LipschitzMethod::AnalyticBuiltin),
        }
    }
}

/// Difference-quotient estimate over all vertex pairs plus `pairs` random
/// pairs of the simplex. A lower bound on the true constant.
pub fn estimate_lipschitz_sampled<R: Rng + ?Sized>(
    model: &StackelbergModel,
    pairs: usize,
    rng: &mut R,
) -> LipschitzEstimate {
    let dims = *model.dims();
    let j = dims.joint();
    let mut points: alloc::vec::Vec<(alloc::vec::Vec<f64>, alloc::vec::Vec<f64>)> = alloc::vec::Vec::new();
    for u in 0..j {
        for v in (u + 1)..j {
            let mut a = alloc::vec![0.0; j];
            let mut b = alloc::vec![0.0; j];
            a[u] = 1.0;
            b[v] = 1.0;
            points.push((a, b));
        }
    }
    for _ in 0..pairs {
        points.push((simplex_point(rng, j), simplex_point(rng, j)));
    }
    let mut per_map = [0.0_f64; 4];
    for (a, b) in &points {
        let dl = max_abs_diff(a, b);
        if dl <= 0.0 {
            continue;
        }
        for t in 0..dims.steps() {
            for la in 0..dims.leader_actions {
                let sa = model.stage(t, la, a);
                let sb = model.stage(t, la, b);
                let q = [
                    max_abs_diff(&sa.follower_p, &sb.follower_p),
                    max_abs_diff(&sa.follower_r, &sb.follower_r),
                    max_abs_diff(&sa.leader_p, &sb.leader_p),
                    max_abs_diff(&sa.leader_r, &sb.leader_r),
                ];
                for (m, d) in per_map.iter_mut().zip(q) {
                    *m = m.max(d / dl);
                }
            }
        }
    }
    LipschitzEstimate::from_maps(per_map, LipschitzMethod::VertexFiniteDifference)
}
