//! Game data: dimensions, the four model maps, validation, builtin examples
//! and Lipschitz constants.
//!
//! Joint follower state-action vectors are flattened column-major,
//! `k = s + |S^f| * a`, everywhere in the crate. This is the ordering of the
//! LP columns and of the affine coefficient index.

mod affine;
mod builtin;
mod lipschitz;
mod overlay;

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

pub(crate) use self::affine::AffineMaps;
pub use self::affine::AffineStage;
pub use self::builtin::{Majority, Predator, PREDATOR_E, PREDATOR_S};
pub use self::lipschitz::{estimate_lipschitz_sampled, LipschitzEstimate, LipschitzMethod};
pub(crate) use self::overlay::Overlay;

use crate::{Error, Result, SIMPLEX_TOL};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dimensions {
    /// Last decision epoch `T`; epochs run `0..=T`.
    pub horizon: usize,
    pub follower_states: usize,
    pub follower_actions: usize,
    pub leader_states: usize,
    pub leader_actions: usize,
}

impl Dimensions {
    pub fn new(
        horizon: usize,
        follower_states: usize,
        follower_actions: usize,
        leader_states: usize,
        leader_actions: usize,
    ) -> Result<Self> {
        let dims = Self {
            horizon,
            follower_states,
            follower_actions,
            leader_states,
            leader_actions,
        };
        dims.check()?;
        Ok(dims)
    }

    pub fn check(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::InvalidModel("horizon must be at least 1".into()));
        }
        for (name, n) in [
            ("follower states", self.follower_states),
            ("follower actions", self.follower_actions),
            ("leader states", self.leader_states),
            ("leader actions", self.leader_actions),
        ] {
            if n == 0 {
                return Err(Error::InvalidModel(format!("{name} must be non-empty")));
            }
        }
        Ok(())
    }

    /// Number of epochs, `T + 1`.
    pub fn steps(&self) -> usize {
        self.horizon + 1
    }

    /// Length of one joint state-action distribution, `|S^f||A^f|`.
    pub fn joint(&self) -> usize {
        self.follower_states * self.follower_actions
    }

    #[inline]
    pub fn joint_index(&self, s: usize, a: usize) -> usize {
        s + self.follower_states * a
    }

    /// Inverse of [`Dimensions::joint_index`].
    #[inline]
    pub fn joint_parts(&self, k: usize) -> (usize, usize) {
        (k % self.follower_states, k / self.follower_states)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Affine,
    AffineQuadratic,
    Majority,
    Predator,
    PredatorPerturbed,
    PredatorTwoAction,
}

impl ModelKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ModelKind::Affine => "affine",
            ModelKind::AffineQuadratic => "affine+quadratic",
            ModelKind::Majority => "builtin:majority",
            ModelKind::Predator => "builtin:predator",
            ModelKind::PredatorPerturbed => "builtin:predator-perturbed",
            ModelKind::PredatorTwoAction => "builtin:predator-two-action",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "affine" => ModelKind::Affine,
            "affine+quadratic" => ModelKind::AffineQuadratic,
            "builtin:majority" => ModelKind::Majority,
            "builtin:predator" => ModelKind::Predator,
            "builtin:predator-perturbed" => ModelKind::PredatorPerturbed,
            "builtin:predator-two-action" => ModelKind::PredatorTwoAction,
            _ => return None,
        })
    }

    pub fn is_affine(&self) -> bool {
        matches!(self, ModelKind::Affine | ModelKind::AffineQuadratic)
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Human-readable names for states and actions.
#[derive(Debug, Clone, PartialEq)]
pub struct Labels {
    pub follower_states: Vec<String>,
    pub follower_actions: Vec<String>,
    pub leader_states: Vec<String>,
    pub leader_actions: Vec<String>,
}

impl Labels {
    pub fn numbered(dims: &Dimensions) -> Self {
        let names = |prefix: &str, n: usize| (0..n).map(|i| format!("{prefix}{i}")).collect();
        Self {
            follower_states: names("s", dims.follower_states),
            follower_actions: names("a", dims.follower_actions),
            leader_states: names("l", dims.leader_states),
            leader_actions: names("la", dims.leader_actions),
        }
    }

    fn check(&self, dims: &Dimensions) -> Result<()> {
        for (name, got, want) in [
            (
                "follower state labels",
                self.follower_states.len(),
                dims.follower_states,
            ),
            (
                "follower action labels",
                self.follower_actions.len(),
                dims.follower_actions,
            ),
            ("leader state labels", self.leader_states.len(), dims.leader_states),
            ("leader action labels", self.leader_actions.len(), dims.leader_actions),
        ] {
            if got != want {
                return Err(Error::InvalidModel(format!("{name}: expected {want}, got {got}")));
            }
        }
        Ok(())
    }
}

/// All four model maps evaluated at one epoch for one leader action and one
/// frozen population distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct Stage {
    /// `P_t(s' | k)` at `k * |S^f| + s'`.
    pub follower_p: Vec<f64>,
    /// `r_t(k)`.
    pub follower_r: Vec<f64>,
    /// `P^l_t(s'_l | s_l)` at `s_l * |S^l| + s'_l`.
    pub leader_p: Vec<f64>,
    /// `r^l_t(s_l)`.
    pub leader_r: Vec<f64>,
}

impl Stage {
    pub fn zeros(dims: &Dimensions) -> Self {
        let s = dims.follower_states;
        let sl = dims.leader_states;
        Self {
            follower_p: vec![0.0; dims.joint() * s],
            follower_r: vec![0.0; dims.joint()],
            leader_p: vec![0.0; sl * sl],
            leader_r: vec![0.0; sl],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Maps {
    Affine(AffineMaps),
    Predator(Predator),
    Majority(Majority),
}

/// A validated, immutable Stackelberg mean-field game.
#[derive(Debug, Clone, PartialEq)]
pub struct StackelbergModel {
    dims: Dimensions,
    kind: ModelKind,
    labels: Labels,
    follower_initial: Vec<f64>,
    leader_initial: Vec<f64>,
    maps: Maps,
    overlay: Option<Overlay>,
}

impl StackelbergModel {
    /// Affine (optionally quadratic-reward) tabular model. `stages[la][t]`.
    pub fn affine(
        dims: Dimensions,
        labels: Option<Labels>,
        follower_initial: Vec<f64>,
        leader_initial: Vec<f64>,
        stages: Vec<Vec<AffineStage>>,
    ) -> Result<Self> {
        dims.check()?;
        let maps = AffineMaps::new(&dims, stages)?;
        let kind = if maps.has_quadratic() {
            ModelKind::AffineQuadratic
        } else {
            ModelKind::Affine
        };
        Self::assemble(dims, kind, labels, follower_initial, leader_initial, Maps::Affine(maps))
    }

    /// The predator-prey game with a single "hunt" leader action.
    ///
    /// `initial` defaults to uniform over `{e, s}`.
    pub fn predator(epsilon0: f64, initial: Option<Vec<f64>>) -> Result<Self> {
        Self::from_predator(Predator::new(epsilon0, 0.0, false)?, initial)
    }

    /// The predator-prey game with the follower reward at `e` lowered by
    /// `delta_r`.
    pub fn predator_perturbed(epsilon0: f64, delta_r: f64, initial: Option<Vec<f64>>) -> Result<Self> {
        Self::from_predator(Predator::new(epsilon0, delta_r, false)?, initial)
    }

    /// The predator-prey game where the leader chooses between full effort
    /// `g` and the lazier `l`.
    pub fn predator_two_action(epsilon0: f64, initial: Option<Vec<f64>>) -> Result<Self> {
        Self::from_predator(Predator::new(epsilon0, 0.0, true)?, initial)
    }

    pub(crate) fn from_predator(p: Predator, initial: Option<Vec<f64>>) -> Result<Self> {
        let dims = p.dims();
        let kind = p.kind();
        let labels = p.labels();
        let initial = initial.unwrap_or_else(|| vec![0.5, 0.5]);
        Self::assemble(dims, kind, Some(labels), initial, vec![1.0], Maps::Predator(p))
    }

    /// "Following the majority" with `n` states. Each row of `leader_grid` is
    /// one leader action `(r^1, ..., r^n)`; `initial` defaults to uniform.
    pub fn majority(n: usize, horizon: usize, leader_grid: Vec<Vec<f64>>, initial: Option<Vec<f64>>) -> Result<Self> {
        let m = Majority::new(n, horizon, leader_grid)?;
        let dims = m.dims();
        let labels = m.labels();
        let initial = initial.unwrap_or_else(|| vec![1.0 / n as f64; n]);
        Self::assemble(
            dims,
            ModelKind::Majority,
            Some(labels),
            initial,
            vec![1.0],
            Maps::Majority(m),
        )
    }

    fn assemble(
        dims: Dimensions,
        kind: ModelKind,
        labels: Option<Labels>,
        follower_initial: Vec<f64>,
        leader_initial: Vec<f64>,
        maps: Maps,
    ) -> Result<Self> {
        let labels = labels.unwrap_or_else(|| Labels::numbered(&dims));
        labels.check(&dims)?;
        check_marginal("follower initial distribution", &follower_initial, dims.follower_states)?;
        check_marginal("leader initial distribution", &leader_initial, dims.leader_states)?;
        let model = Self {
            dims,
            kind,
            labels,
            follower_initial,
            leader_initial,
            maps,
            overlay: None,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn dims(&self) -> &Dimensions {
        &self.dims
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn labels(&self) -> &Labels {
        &self.labels
    }

    pub fn follower_initial(&self) -> &[f64] {
        &self.follower_initial
    }

    pub fn leader_initial(&self) -> &[f64] {
        &self.leader_initial
    }

    pub fn is_perturbed(&self) -> bool {
        self.overlay.is_some()
    }

    pub fn predator_params(&self) -> Option<&Predator> {
        match &self.maps {
            Maps::Predator(p) => Some(p),
            _ => None,
        }
    }

    pub fn majority_params(&self) -> Option<&Majority> {
        match &self.maps {
            Maps::Majority(m) => Some(m),
            _ => None,
        }
    }

    pub(crate) fn maps(&self) -> &Maps {
        &self.maps
    }

    pub(crate) fn with_parts(
        &self,
        maps: Maps,
        follower_initial: Vec<f64>,
        leader_initial: Vec<f64>,
        overlay: Option<Overlay>,
    ) -> Result<Self> {
        let kind = match &maps {
            Maps::Predator(p) => p.kind(),
            _ => self.kind,
        };
        let model = Self {
            dims: self.dims,
            kind,
            labels: self.labels.clone(),
            follower_initial,
            leader_initial,
            maps,
            overlay,
        };
        check_marginal(
            "follower initial distribution",
            &model.follower_initial,
            model.dims.follower_states,
        )?;
        check_marginal(
            "leader initial distribution",
            &model.leader_initial,
            model.dims.leader_states,
        )?;
        model.validate()?;
        Ok(model)
    }

    /// Same game with a different follower initial distribution.
    pub fn with_follower_initial(&self, initial: Vec<f64>) -> Result<Self> {
        self.with_parts(
            self.maps.clone(),
            initial,
            self.leader_initial.clone(),
            self.overlay.clone(),
        )
    }

    /// Re-runs every load-time check. Affine transitions are checked at the
    /// simplex vertices, which covers the whole simplex by affinity.
    pub fn validate(&self) -> Result<()> {
        self.dims.check()?;
        match &self.maps {
            Maps::Affine(m) => m.validate(&self.dims)?,
            Maps::Predator(_) | Maps::Majority(_) => {}
        }
        if let Some(o) = &self.overlay {
            o.check(&self.dims)?;
        }
        Ok(())
    }

    /// Fills `stage` with all four maps at epoch `t`, leader action `la` and
    /// population distribution `l`.
    pub fn stage_into(&self, t: usize, la: usize, l: &[f64], stage: &mut Stage) {
        debug_assert_eq!(l.len(), self.dims.joint());
        match &self.maps {
            Maps::Affine(m) => m.fill_stage(&self.dims, t, la, l, stage),
            Maps::Predator(p) => p.fill_stage(t, la, l, stage),
            Maps::Majority(m) => m.fill_stage(t, la, l, stage),
        }
        if let Some(o) = &self.overlay {
            o.apply(&self.dims, t, la, stage);
        }
    }

    pub fn stage(&self, t: usize, la: usize, l: &[f64]) -> Stage {
        let mut stage = Stage::zeros(&self.dims);
        self.stage_into(t, la, l, &mut stage);
        stage
    }

    fn check_indices(&self, t: usize, la: usize) -> Result<()> {
        check_index("epoch", t, self.dims.steps())?;
        check_index("leader action", la, self.dims.leader_actions)
    }

    fn check_flow_point(&self, l: &[f64]) -> Result<()> {
        check_distribution("population distribution", l, self.dims.joint())
    }

    /// `P^{f,a^l}_t(. | s, a, L)`.
    pub fn eval_transition(&self, t: usize, la: usize, s: usize, a: usize, l: &[f64]) -> Result<Vec<f64>> {
        self.check_indices(t, la)?;
        check_index("follower state", s, self.dims.follower_states)?;
        check_index("follower action", a, self.dims.follower_actions)?;
        self.check_flow_point(l)?;
        let ns = self.dims.follower_states;
        let k = self.dims.joint_index(s, a);
        let stage = self.stage(t, la, l);
        Ok(stage.follower_p[k * ns..(k + 1) * ns].to_vec())
    }

    /// `P^l_t(. | s^l, a^l, L)`.
    pub fn eval_leader_transition(&self, t: usize, sl: usize, la: usize, l: &[f64]) -> Result<Vec<f64>> {
        self.check_indices(t, la)?;
        check_index("leader state", sl, self.dims.leader_states)?;
        self.check_flow_point(l)?;
        let nl = self.dims.leader_states;
        let stage = self.stage(t, la, l);
        Ok(stage.leader_p[sl * nl..(sl + 1) * nl].to_vec())
    }

    /// `r^{f,a^l}_t(s, a, L)`.
    pub fn eval_follower_reward(&self, t: usize, la: usize, s: usize, a: usize, l: &[f64]) -> Result<f64> {
        self.check_indices(t, la)?;
        check_index("follower state", s, self.dims.follower_states)?;
        check_index("follower action", a, self.dims.follower_actions)?;
        self.check_flow_point(l)?;
        Ok(self.stage(t, la, l).follower_r[self.dims.joint_index(s, a)])
    }

    /// `r^l_t(s^l, a^l, L)`.
    pub fn eval_leader_reward(&self, t: usize, sl: usize, la: usize, l: &[f64]) -> Result<f64> {
        self.check_indices(t, la)?;
        check_index("leader state", sl, self.dims.leader_states)?;
        self.check_flow_point(l)?;
        Ok(self.stage(t, la, l).leader_r[sl])
    }

    /// Whether the epoch-`t` policy can change anything observable: the
    /// follower return, the follower value, later flows or the leader return.
    ///
    /// It cannot when at epoch `t` the follower reward and (for `t < T`)
    /// transition ignore the follower's action, and all four maps see the
    /// population only through its state marginal.
    pub fn policy_relevant(&self, t: usize) -> bool {
        let base = match &self.maps {
            Maps::Affine(m) => m.policy_relevant(&self.dims, t),
            Maps::Predator(p) => p.policy_relevant(t),
            Maps::Majority(_) => true,
        };
        base || self.overlay.as_ref().is_some_and(|o| o.action_dependent(&self.dims, t))
    }

    /// Upper bounds on `|r^f|` and `|r^l|` over all arguments.
    pub fn reward_bounds(&self) -> (f64, f64) {
        let (f, l) = match &self.maps {
            Maps::Affine(m) => m.reward_bounds(&self.dims),
            Maps::Predator(p) => p.reward_bounds(),
            Maps::Majority(m) => m.reward_bounds(),
        };
        match &self.overlay {
            Some(o) => o.reward_bounds((f, l)),
            None => (f, l),
        }
    }
}

pub(crate) fn check_index(what: &'static str, index: usize, size: usize) -> Result<()> {
    if index >= size {
        return Err(Error::IndexOutOfRange { what, index, size });
    }
    Ok(())
}

/// Non-negative entries summing to one within [`SIMPLEX_TOL`].
pub fn check_distribution(what: &str, v: &[f64], len: usize) -> Result<()> {
    if v.len() != len {
        return Err(Error::InvalidInput(format!(
            "{what} has length {}, expected {len}",
            v.len()
        )));
    }
    if let Some((i, x)) = v.iter().enumerate().find(|(_, x)| !x.is_finite() || **x < 0.0) {
        return Err(Error::InvalidInput(format!("{what} entry {i} is {x}")));
    }
    let sum: f64 = v.iter().sum();
    if (sum - 1.0).abs() > SIMPLEX_TOL {
        return Err(Error::InvalidInput(format!("{what} sums to {sum}")));
    }
    Ok(())
}

fn check_marginal(what: &str, v: &[f64], len: usize) -> Result<()> {
    check_distribution(what, v, len).map_err(|e| Error::InvalidModel(e.to_string()))
}
