//! Finite-horizon Stackelberg mean-field games on finite state spaces.
//!
//! A leader commits to an action once; an infinite population of identical
//! followers then settles into an ε-Nash equilibrium of the mean-field game
//! induced by that action. The leader's pessimistic objective is the minimum
//! of her expected reward over every such equilibrium, and her value is the
//! maximum of that objective over her (finite) action set.
//!
//! The crate is `no_std` with `alloc`. The `parallel` feature (on by
//! default) enables `std` and fans candidate evaluation out over rayon;
//! results are reduced in a fixed order so output does not depend on the
//! scheduler.
//!
//! Layout:
//! - [`model`]: game data, builtin examples, affine tabular family,
//!   validation and Lipschitz constants.
//! - [`dynamics`]: forward propagation of the follower flow and leader
//!   marginals, and both players' returns.
//! - [`mdp`] and [`lp`]: the follower's best response by backward induction,
//!   the occupation-measure LP and KKT certificates.
//! - [`equilibrium`]: ε-Nash membership, deterministic enumeration and
//!   simplex meshes of policies.
//! - [`solver`]: the leader's inner worst-case (or best-case) problem and the
//!   outer maximisation.
//! - [`sensitivity`]: model perturbations, deviation bounds, the relaxed game
//!   and ε-sweeps.

#![cfg_attr(not(feature = "std"), no_std)]
#![forbid(unsafe_code)]

extern crate alloc;

pub mod dynamics;
pub mod equilibrium;
mod error;
pub mod lp;
pub mod math;
pub mod mdp;
pub mod model;
mod par;
pub mod random;
pub mod sensitivity;
pub mod solver;

pub use crate::dynamics::{FlowSequence, MarginalSequence, PolicyKernel};
pub use crate::equilibrium::{Caps, EquilibriumCandidate};
pub use crate::error::{Error, Result};
pub use crate::lp::{KktCertificate, KktReport, LpData};
pub use crate::mdp::ValueTable;
pub use crate::model::{Dimensions, LipschitzEstimate, ModelKind, StackelbergModel};
pub use crate::solver::{Guarantee, Mode, OuterResult, SolveReport, Strategy};

/// Slack added to ε when deciding equilibrium membership.
pub const MEMBERSHIP_SLACK: f64 = 1e-10;

/// Tolerance for probability vectors summing to one.
pub const SIMPLEX_TOL: f64 = 1e-12;
