//! Serializable views of solver and experiment results.
//!
//! Flows and policies are written as nested arrays `[t][s][a]`. Fields that
//! depend on the wall clock (`timestamp`, `seconds`) are omitted when
//! timing is disabled so that identical runs give identical bytes.

use std::io::Write;
use std::path::Path;

use serde::Serialize;
use smfg_core::lp::{KktCertificate, KktReport, LpData};
use smfg_core::sensitivity::{
    FlowDeviationReport, Jump, PerturbationCheck, RelaxedReport, SandwichReport, SweepReport, ValueDeviationReport,
};
use smfg_core::solver::{OuterResult, SolveReport};
use smfg_core::{EquilibriumCandidate, FlowSequence, PolicyKernel, StackelbergModel};

pub type Tensor3 = Vec<Vec<Vec<f64>>>;

pub fn flow_tensor(flow: &FlowSequence) -> Tensor3 {
    (0..flow.steps())
        .map(|t| {
            let d = flow.at(t);
            let ns = flow.state_marginal(t).len();
            let na = d.len() / ns;
            (0..ns).map(|s| (0..na).map(|a| d[s + ns * a]).collect()).collect()
        })
        .collect()
}

pub fn policy_tensor(policy: &PolicyKernel) -> Tensor3 {
    (0..policy.steps())
        .map(|t| (0..policy.states()).map(|s| policy.row(t, s).to_vec()).collect())
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct Witness {
    pub policy: Tensor3,
    pub flow: Tensor3,
    pub exploitability: f64,
    pub leader_return: f64,
}

impl From<&EquilibriumCandidate> for Witness {
    fn from(c: &EquilibriumCandidate) -> Self {
        Self {
            policy: policy_tensor(&c.policy),
            flow: flow_tensor(&c.flow),
            exploitability: c.exploitability,
            leader_return: c.leader_return,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SolveJson {
    pub action: usize,
    pub action_label: String,
    pub epsilon: f64,
    pub mode: &'static str,
    pub value: f64,
    pub witness: Witness,
    pub strategy: &'static str,
    pub guarantee: &'static str,
    /// Bound on the distance to the continuum value over the strategy's
    /// family, when one is known.
    pub resolution: Option<f64>,
    pub evals: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seconds: Option<f64>,
}

impl SolveJson {
    pub fn new(model: &StackelbergModel, r: &SolveReport, resolution: Option<f64>, timing: bool) -> Self {
        Self {
            action: r.leader_action,
            action_label: model.labels().leader_actions[r.leader_action].clone(),
            epsilon: r.epsilon,
            mode: r.mode.as_str(),
            value: r.value,
            witness: Witness::from(&r.witness),
            strategy: r.strategy.name(),
            guarantee: r.guarantee.as_str(),
            resolution,
            evals: r.evals,
            seconds: timing.then_some(r.seconds),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct OuterJson {
    pub best_action: usize,
    pub best_action_label: String,
    pub value: f64,
    pub epsilon: f64,
    pub mode: &'static str,
    pub reports: Vec<SolveJson>,
}

impl OuterJson {
    pub fn new(model: &StackelbergModel, o: &OuterResult, resolution: Option<f64>, timing: bool) -> Self {
        Self {
            best_action: o.best_action,
            best_action_label: model.labels().leader_actions[o.best_action].clone(),
            value: o.value,
            epsilon: o.epsilon,
            mode: o.mode.as_str(),
            reports: o
                .reports
                .iter()
                .map(|r| SolveJson::new(model, r, resolution, timing))
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepRowJson {
    pub epsilon: f64,
    pub value: f64,
    pub action: usize,
    pub guarantee: &'static str,
}

#[derive(Debug, Clone, Serialize)]
pub struct JumpJson {
    pub location: f64,
    pub lo: f64,
    pub hi: f64,
    pub left: f64,
    pub right: f64,
}

impl From<&Jump> for JumpJson {
    fn from(j: &Jump) -> Self {
        Self {
            location: j.location,
            lo: j.lo,
            hi: j.hi,
            left: j.left,
            right: j.right,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepJson {
    /// Leader action swept, or `None` for the outer value.
    pub action: Option<usize>,
    pub mode: &'static str,
    pub rows: Vec<SweepRowJson>,
    pub monotone: bool,
    pub monotonicity_violations: Vec<(f64, f64)>,
    pub jumps: Vec<JumpJson>,
    pub right_gap: f64,
    pub right_consistent: bool,
}

impl SweepJson {
    pub fn new(r: &SweepReport) -> Self {
        Self {
            action: match r.target {
                smfg_core::sensitivity::SweepTarget::Action(a) => Some(a),
                smfg_core::sensitivity::SweepTarget::Outer => None,
            },
            mode: r.mode.as_str(),
            rows: r
                .rows
                .iter()
                .map(|row| SweepRowJson {
                    epsilon: row.epsilon,
                    value: row.value,
                    action: row.action,
                    guarantee: row.guarantee.as_str(),
                })
                .collect(),
            monotone: r.monotone(),
            monotonicity_violations: r.monotonicity_violations.clone(),
            jumps: r.jumps.iter().map(JumpJson::from).collect(),
            right_gap: r.right_gap,
            right_consistent: r.right_consistent,
        }
    }
}

/// CSV with header `epsilon,value,action,guarantee`.
pub fn sweep_csv(r: &SweepReport) -> String {
    let mut out = String::from("epsilon,value,action,guarantee\n");
    for row in &r.rows {
        out.push_str(&format!(
            "{},{},{},{}\n",
            row.epsilon,
            row.value,
            row.action,
            row.guarantee.as_str()
        ));
    }
    out
}

#[derive(Debug, Clone, Serialize)]
pub struct PerturbationJson {
    pub mode: &'static str,
    pub delta_p: f64,
    pub delta_r: f64,
    pub seed: u64,
    pub observed_transition: f64,
    pub observed_reward: f64,
    pub observed_initial: f64,
    pub samples: usize,
}

impl PerturbationJson {
    pub fn new(spec: &smfg_core::sensitivity::PerturbationSpec, c: &PerturbationCheck) -> Self {
        Self {
            mode: spec.mode.as_str(),
            delta_p: spec.delta_p,
            delta_r: spec.delta_r,
            seed: spec.seed,
            observed_transition: c.transition,
            observed_reward: c.reward,
            observed_initial: c.initial,
            samples: c.samples,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct FlowRowJson {
    pub t: usize,
    pub observed: f64,
    pub bound: f64,
    pub state: usize,
    pub action: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct FlowDeviationJson {
    pub action: usize,
    pub policy_index: usize,
    pub c: f64,
    pub s: usize,
    pub rows: Vec<FlowRowJson>,
    pub max_ratio: f64,
    pub passed: bool,
}

impl FlowDeviationJson {
    pub fn new(action: usize, policy_index: usize, r: &FlowDeviationReport) -> Self {
        Self {
            action,
            policy_index,
            c: r.c,
            s: r.s,
            rows: r
                .rows
                .iter()
                .map(|row| FlowRowJson {
                    t: row.t,
                    observed: row.observed,
                    bound: row.bound,
                    state: row.worst.0,
                    action: row.worst.1,
                })
                .collect(),
            max_ratio: r.max_ratio,
            passed: r.passed,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ValueDeviationJson {
    pub action: usize,
    pub policy_index: usize,
    pub observed: f64,
    pub bound: f64,
    pub bound_tight: f64,
    pub ratio: f64,
    pub ratio_tight: f64,
    pub passed: bool,
}

impl ValueDeviationJson {
    pub fn new(action: usize, policy_index: usize, r: &ValueDeviationReport) -> Self {
        Self {
            action,
            policy_index,
            observed: r.observed,
            bound: r.bound,
            bound_tight: r.bound_tight,
            ratio: r.ratio,
            ratio_tight: r.ratio_tight,
            passed: r.passed,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SandwichJson {
    pub action: usize,
    pub epsilon: f64,
    pub epsilon_prime: f64,
    pub delta: f64,
    pub j_true: f64,
    pub j_hat_relaxed: f64,
    pub j_hat_tightened: Option<f64>,
    pub upper_slack: f64,
    pub lower_slack: Option<f64>,
    pub resolution: f64,
    pub passed: bool,
}

impl From<&SandwichReport> for SandwichJson {
    fn from(r: &SandwichReport) -> Self {
        Self {
            action: r.leader_action,
            epsilon: r.epsilon,
            epsilon_prime: r.epsilon_prime,
            delta: r.delta,
            j_true: r.j_true,
            j_hat_relaxed: r.j_hat_relaxed,
            j_hat_tightened: r.j_hat_tightened,
            upper_slack: r.upper_slack,
            lower_slack: r.lower_slack,
            resolution: r.resolution,
            passed: r.passed,
        }
    }
}

/// Everything `perturb` checks, with an overall verdict.
#[derive(Debug, Clone, Serialize)]
pub struct BoundCheckReport {
    pub perturbation: PerturbationJson,
    pub lipschitz: f64,
    pub lipschitz_method: &'static str,
    pub flow_deviation: Vec<FlowDeviationJson>,
    pub value_deviation: Vec<ValueDeviationJson>,
    pub sandwich: Vec<SandwichJson>,
    pub passed: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct RelaxedJson {
    pub epsilon: f64,
    pub epsilon_prime: f64,
    pub delta: f64,
    pub true_value: f64,
    pub true_action: String,
    pub true_values: Vec<f64>,
    pub relaxed_action: String,
    pub relaxed_values: Vec<f64>,
    pub relaxed_gap: f64,
    pub unrelaxed_action: String,
    pub unrelaxed_values: Vec<f64>,
    pub unrelaxed_gap: f64,
}

impl RelaxedJson {
    pub fn new(model: &StackelbergModel, r: &RelaxedReport) -> Self {
        let name = |i: usize| model.labels().leader_actions[i].clone();
        Self {
            epsilon: r.epsilon,
            epsilon_prime: r.epsilon_prime,
            delta: r.delta,
            true_value: r.true_value,
            true_action: name(r.true_action),
            true_values: r.true_values.clone(),
            relaxed_action: name(r.relaxed_action),
            relaxed_values: r.relaxed_values.clone(),
            relaxed_gap: r.relaxed_gap,
            unrelaxed_action: name(r.unrelaxed_action),
            unrelaxed_values: r.unrelaxed_values.clone(),
            unrelaxed_gap: r.unrelaxed_gap,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct KktResidualsJson {
    pub primal: f64,
    pub dual: f64,
    pub min_x: f64,
    pub min_v: f64,
    pub complementarity: f64,
    pub value_gap: f64,
}

impl From<&KktReport> for KktResidualsJson {
    fn from(r: &KktReport) -> Self {
        Self {
            primal: r.primal,
            dual: r.dual,
            min_x: r.min_x,
            min_v: r.min_v,
            complementarity: r.complementarity,
            value_gap: r.value_gap,
        }
    }
}

/// Dense LP data, `a` row-major with explicit dimensions.
#[derive(Debug, Clone, Serialize)]
pub struct LpJson {
    pub rows: usize,
    pub cols: usize,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub c: Vec<f64>,
}

impl From<&LpData> for LpJson {
    fn from(lp: &LpData) -> Self {
        Self {
            rows: lp.rows,
            cols: lp.cols,
            a: lp.a.clone(),
            b: lp.b.clone(),
            c: lp.c.clone(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CertificateJson {
    pub x: Vec<f64>,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub value: f64,
}

impl From<&KktCertificate> for CertificateJson {
    fn from(c: &KktCertificate) -> Self {
        Self {
            x: c.x.clone(),
            u: c.u.clone(),
            v: c.v.clone(),
            value: c.value,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CertifyJson {
    pub action: usize,
    pub tol: f64,
    pub residuals: KktResidualsJson,
    pub passed: bool,
    pub follower_value: f64,
    pub exploitability: f64,
    pub leader_return: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub member: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lp: Option<LpJson>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub certificate: Option<CertificateJson>,
}

/// Common envelope of every JSON report.
#[derive(Debug, Clone, Serialize)]
pub struct Envelope<T: Serialize> {
    pub command: &'static str,
    pub model_kind: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timestamp: Option<u64>,
    pub result: T,
}

impl<T: Serialize> Envelope<T> {
    pub fn new(command: &'static str, model_kind: &'static str, timing: bool, result: T) -> Self {
        let timestamp = timing.then(|| {
            std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0)
        });
        Self {
            command,
            model_kind,
            timestamp,
            result,
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("reports contain only serializable data");
        s.push('\n');
        s
    }
}

/// Writes `contents` to `path` through a temporary file in the same
/// directory, so readers never observe a partial report.
pub fn write_atomic(path: &Path, contents: &[u8]) -> std::io::Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(contents)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use smfg_core::dynamics::propagate_follower_flow;

    #[test]
    fn flow_tensor_is_time_state_action() {
        let m = StackelbergModel::predator(0.2, None).unwrap();
        let p = PolicyKernel::constant(m.dims(), 1).unwrap();
        let f = propagate_follower_flow(&m, 0, &p).unwrap();
        let t = flow_tensor(&f);
        assert_eq!(t.len(), 2);
        assert_eq!(t[0], vec![vec![0.0, 0.5], vec![0.0, 0.5]]);
        assert_eq!(t[1], vec![vec![0.0, 0.0], vec![0.0, 1.0]]);
        assert_eq!(policy_tensor(&p)[1][0], vec![0.0, 1.0]);
    }

    #[test]
    fn sweep_csv_header() {
        let m = StackelbergModel::predator(0.2, None).unwrap();
        let r = smfg_core::sensitivity::epsilon_sweep(
            &m,
            smfg_core::sensitivity::SweepTarget::Outer,
            &[0.0, 0.3],
            smfg_core::Mode::Pessimistic,
            &smfg_core::Strategy::Enumerate,
            &smfg_core::Caps::default(),
            &Default::default(),
        )
        .unwrap();
        let csv = sweep_csv(&r);
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("epsilon,value,action,guarantee"));
        assert_eq!(lines.next(), Some("0,1,0,enumerated-deterministic"));
        assert_eq!(lines.next(), Some("0.3,0,0,enumerated-deterministic"));
    }

    #[test]
    fn atomic_write_replaces_contents() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.json");
        write_atomic(&p, b"one").unwrap();
        write_atomic(&p, b"two").unwrap();
        assert_eq!(std::fs::read_to_string(&p).unwrap(), "two");
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
    }

    #[test]
    fn envelope_without_timing_has_no_timestamp() {
        let e = Envelope::new("solve", "affine", false, 1.5);
        assert!(!e.to_json().contains("timestamp"));
        let e = Envelope::new("solve", "affine", true, 1.5);
        assert!(e.to_json().contains("timestamp"));
    }
}
