//! The leader's problem: the inner worst case (or best case) over the
//! ε-best-response set for one leader action, and the outer maximisation
//! over leader actions.

use alloc::format;
use alloc::vec::Vec;
use core::cmp::Ordering;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dynamics::{FlowSequence, PolicyKernel};
use crate::equilibrium::{
    check_epsilon_ne, evaluate_policy, family_size, fold_family, mesh_divisions, Caps, EquilibriumCandidate, Family,
    Leaf,
};
use crate::math::lex_cmp;
use crate::model::StackelbergModel;
use crate::{Error, Result, MEMBERSHIP_SLACK};

/// Whether the leader expects the worst or the best equilibrium.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Pessimistic,
    Optimistic,
}

impl Mode {
    pub fn as_str(&self) -> &'static str {
        match self {
            Mode::Pessimistic => "pessimistic",
            Mode::Optimistic => "optimistic",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "pessimistic" => Some(Mode::Pessimistic),
            "optimistic" => Some(Mode::Optimistic),
            _ => None,
        }
    }

    /// The inner problem minimises `sign * leader_return`.
    fn sign(&self) -> f64 {
        match self {
            Mode::Pessimistic => 1.0,
            Mode::Optimistic => -1.0,
        }
    }
}

/// Settings of the penalised multi-start coordinate descent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalOptions {
    /// Random starting policies, in addition to the seeds taken from a
    /// coarse mesh.
    pub starts: usize,
    pub seed: u64,
    /// Mesh divisions used for seeding; `None` picks the finest of 32, 16,
    /// 8, 4, 2, 1 that fits under the policy cap and `2^16`.
    pub seed_divisions: Option<usize>,
    /// Descent stops once the mass moved per step falls below this.
    pub min_step: f64,
    /// Penalty weight at the first round; multiplied by 10 per round.
    pub penalty_start: f64,
    pub penalty_max: f64,
    /// Largest constraint violation accepted before the penalty stops
    /// escalating.
    pub violation_tol: f64,
}

impl Default for LocalOptions {
    fn default() -> Self {
        Self {
            starts: 8,
            seed: 0,
            seed_divisions: None,
            min_step: 1e-7,
            penalty_start: 10.0,
            penalty_max: 1e8,
            violation_tol: 1e-8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Strategy {
    /// Every deterministic policy.
    Enumerate,
    /// Policies on the simplex mesh of spacing `h` (`1/h` an integer).
    Mesh { h: f64 },
    /// Penalised coordinate descent from mesh seeds and random starts.
    Local(LocalOptions),
}

impl Strategy {
    pub fn name(&self) -> &'static str {
        match self {
            Strategy::Enumerate => "enumerate",
            Strategy::Mesh { .. } => "mesh",
            Strategy::Local(_) => "local",
        }
    }

    pub fn guarantee(&self) -> Guarantee {
        match self {
            Strategy::Enumerate => Guarantee::EnumeratedDeterministic,
            Strategy::Mesh { .. } => Guarantee::ExactOverMesh,
            Strategy::Local(_) => Guarantee::Local,
        }
    }

    fn family(&self) -> Result<Option<Family>> {
        Ok(match self {
            Strategy::Enumerate => Some(Family::Deterministic),
            Strategy::Mesh { h } => Some(Family::Mesh(mesh_divisions(*h)?)),
            Strategy::Local(_) => None,
        })
    }
}

/// What a reported value is optimal over.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Guarantee {
    /// Exact over all policies on the mesh.
    ExactOverMesh,
    /// Exact over all deterministic policies.
    EnumeratedDeterministic,
    /// Best verified member found by local search.
    Local,
}

impl Guarantee {
    pub fn as_str(&self) -> &'static str {
        match self {
            Guarantee::ExactOverMesh => "exact-over-mesh",
            Guarantee::EnumeratedDeterministic => "enumerated-deterministic",
            Guarantee::Local => "local",
        }
    }
}

/// Inner solution for one leader action.
#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub leader_action: usize,
    pub epsilon: f64,
    pub mode: Mode,
    /// `J^l_ε(a^l)`: leader return at the witness.
    pub value: f64,
    pub witness: EquilibriumCandidate,
    pub strategy: Strategy,
    pub guarantee: Guarantee,
    pub evals: u64,
    /// Wall time; zero without `std`.
    pub seconds: f64,
}

/// Outer solution over all leader actions.
#[derive(Debug, Clone, PartialEq)]
pub struct OuterResult {
    pub best_action: usize,
    /// `V^l(ε)`.
    pub value: f64,
    pub epsilon: f64,
    pub mode: Mode,
    /// One report per leader action, in action order.
    pub reports: Vec<SolveReport>,
}

impl OuterResult {
    pub fn best(&self) -> &SolveReport {
        &self.reports[self.best_action]
    }
}

struct Clock {
    #[cfg(feature = "std")]
    start: std::time::Instant,
}

impl Clock {
    fn start() -> Self {
        Self {
            #[cfg(feature = "std")]
            start: std::time::Instant::now(),
        }
    }

    fn seconds(&self) -> f64 {
        #[cfg(feature = "std")]
        {
            self.start.elapsed().as_secs_f64()
        }
        #[cfg(not(feature = "std"))]
        {
            0.0
        }
    }
}

/// One non-dominated candidate of a [`Frontier`].
#[derive(Debug, Clone, PartialEq)]
pub struct FrontierPoint {
    pub exploitability: f64,
    pub leader_return: f64,
    pub policy: Vec<f64>,
    pub flow: Vec<f64>,
}

/// Candidates of a finite family that are optimal for some ε.
///
/// Point `p` dominates `q` when `p` is no more exploitable and is at least
/// as good for the leader's inner objective, ties broken towards the
/// lexicographically smaller flow. The frontier keeps the non-dominated
/// points sorted by increasing exploitability; along it the objective
/// strictly improves. Any ε query is answered exactly from the frontier.
#[derive(Debug, Clone, PartialEq)]
pub struct Frontier {
    pub mode: Mode,
    pub points: Vec<FrontierPoint>,
    pub evals: u64,
}

impl Frontier {
    fn new(mode: Mode) -> Self {
        Self {
            mode,
            points: Vec::new(),
            evals: 0,
        }
    }

    fn key(&self, value: f64) -> f64 {
        self.mode.sign() * value
    }

    /// Order of the inner objective with flow tie-break; `Less` is better.
    fn cmp_objective(&self, av: f64, af: &[f64], bv: f64, bf: &[f64]) -> Ordering {
        self.key(av).total_cmp(&self.key(bv)).then_with(|| lex_cmp(af, bf))
    }

    fn offer(&mut self, exploitability: f64, value: f64, policy: &[f64], flow: &[f64]) {
        let pos = self.points.partition_point(|p| p.exploitability <= exploitability);
        if pos > 0 {
            let p = &self.points[pos - 1];
            if self.cmp_objective(p.leader_return, &p.flow, value, flow) != Ordering::Greater {
                return;
            }
        }
        let mut start = pos;
        if pos > 0 && self.points[pos - 1].exploitability == exploitability {
            start = pos - 1;
        }
        let mut end = pos;
        while end < self.points.len() {
            let p = &self.points[end];
            if self.cmp_objective(value, flow, p.leader_return, &p.flow) != Ordering::Greater {
                end += 1;
            } else {
                break;
            }
        }
        self.points.splice(
            start..end,
            core::iter::once(FrontierPoint {
                exploitability,
                leader_return: value,
                policy: policy.to_vec(),
                flow: flow.to_vec(),
            }),
        );
    }

    fn merge(mut self, other: Frontier) -> Frontier {
        for p in &other.points {
            self.offer(p.exploitability, p.leader_return, &p.policy, &p.flow);
        }
        self.evals += other.evals;
        self
    }

    /// Best member of `BR^ε` in the family, if any.
    pub fn query(&self, epsilon: f64) -> Option<&FrontierPoint> {
        let pos = self
            .points
            .partition_point(|p| p.exploitability <= epsilon + MEMBERSHIP_SLACK);
        pos.checked_sub(1).map(|i| &self.points[i])
    }

    /// Members of `BR^ε` on the frontier, best first.
    pub fn members(&self, epsilon: f64) -> impl Iterator<Item = &FrontierPoint> {
        let pos = self
            .points
            .partition_point(|p| p.exploitability <= epsilon + MEMBERSHIP_SLACK);
        self.points[..pos].iter().rev()
    }

    /// Smallest exploitability in the family.
    pub fn min_exploitability(&self) -> Option<f64> {
        self.points.first().map(|p| p.exploitability)
    }
}

fn point_candidate(model: &StackelbergModel, p: &FrontierPoint) -> EquilibriumCandidate {
    Leaf {
        policy: &p.policy,
        flow: &p.flow,
        exploitability: p.exploitability,
        leader_return: p.leader_return,
    }
    .to_candidate(model)
}

fn frontier_of(model: &StackelbergModel, la: usize, mode: Mode, family: Family, caps: &Caps) -> Result<Frontier> {
    let (mut f, evals) = fold_family(
        model,
        la,
        family,
        caps,
        || Frontier::new(mode),
        |acc: &mut Frontier, leaf: &Leaf<'_>| {
            acc.offer(leaf.exploitability, leaf.leader_return, leaf.policy, leaf.flow)
        },
        Frontier::merge,
    )?;
    f.evals = evals;
    Ok(f)
}

/// Frontier of a finite strategy (enumeration or mesh).
pub fn inner_frontier(
    model: &StackelbergModel,
    la: usize,
    mode: Mode,
    strategy: &Strategy,
    caps: &Caps,
) -> Result<Frontier> {
    match strategy.family()? {
        Some(family) => frontier_of(model, la, mode, family, caps),
        None => Err(Error::InvalidInput(
            "local search has no finite candidate family".into(),
        )),
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

/// Report for leader action `la` from an already computed frontier.
pub fn report_from_frontier(
    model: &StackelbergModel,
    la: usize,
    epsilon: f64,
    strategy: &Strategy,
    frontier: &Frontier,
    seconds: f64,
) -> Result<SolveReport> {
    let p = frontier.query(epsilon).ok_or(Error::NoFeasibleCandidate {
        leader_action: la,
        epsilon,
    })?;
    Ok(SolveReport {
        leader_action: la,
        epsilon,
        mode: frontier.mode,
        value: p.leader_return,
        witness: point_candidate(model, p),
        strategy: *strategy,
        guarantee: strategy.guarantee(),
        evals: frontier.evals,
        seconds,
    })
}

/// `J^l_ε(a^l)`: the leader's return minimised (pessimistic) or maximised
/// (optimistic) over the ε-Nash equilibria the strategy can represent.
pub fn inner_worst_case(
    model: &StackelbergModel,
    la: usize,
    epsilon: f64,
    mode: Mode,
    strategy: &Strategy,
    caps: &Caps,
) -> Result<SolveReport> {
    check_epsilon(epsilon)?;
    crate::model::check_index("leader action", la, model.dims().leader_actions)?;
    let clock = Clock::start();
    match strategy {
        Strategy::Local(opts) => local_solve(model, la, epsilon, mode, opts, caps, &clock),
        _ => {
            let frontier = inner_frontier(model, la, mode, strategy, caps)?;
            report_from_frontier(model, la, epsilon, strategy, &frontier, clock.seconds())
        }
    }
}

/// `V^l(ε) = max_a J^l_ε(a)`, lowest action index on ties.
pub fn outer_maximize(
    model: &StackelbergModel,
    epsilon: f64,
    mode: Mode,
    strategy: &Strategy,
    caps: &Caps,
) -> Result<OuterResult> {
    check_epsilon(epsilon)?;
    let n = model.dims().leader_actions;
    let reports = crate::par::map_range(n, |la| inner_worst_case(model, la, epsilon, mode, strategy, caps))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    Ok(outer_from_reports(epsilon, mode, reports))
}

pub fn outer_from_reports(epsilon: f64, mode: Mode, reports: Vec<SolveReport>) -> OuterResult {
    let mut best = 0;
    for (i, r) in reports.iter().enumerate() {
        if r.value > reports[best].value {
            best = i;
        }
    }
    OuterResult {
        best_action: best,
        value: reports[best].value,
        epsilon,
        mode,
        reports,
    }
}

/// Sup-norm perturbation of the leader return when every policy row moves
/// by at most `h`, per unit `h`:
/// `e_0 = 1`, `e_{t+1} = (|S||A| + C) e_t + 1` bounds the flow change,
/// `m_{t+1} = |S^l| m_t + C e_t` the leader marginal change, and the return
/// moves by at most `sum_t (|S^l| m_t R^l + C e_t)`.
pub fn mesh_sensitivity(model: &StackelbergModel) -> f64 {
    let d = model.dims();
    let c = model.estimate_lipschitz().c;
    let (_, rl) = model.reward_bounds();
    let sa = d.joint() as f64;
    let nl = d.leader_states as f64;
    let (mut e, mut m, mut total) = (1.0, 0.0, 0.0);
    for _ in 0..d.steps() {
        total += nl * m * rl + c * e;
        let e_next = (sa + c) * e + 1.0;
        m = nl * m + c * e;
        e = e_next;
    }
    total
}

/// Resolution of a strategy: how far its value may sit from the value over
/// its own family's continuum neighbourhood. Zero for enumeration (exact
/// over its family), `h` times [`mesh_sensitivity`] for meshes, and
/// unknown for local search.
pub fn resolution_bound(model: &StackelbergModel, strategy: &Strategy) -> Option<f64> {
    match strategy {
        Strategy::Enumerate => Some(0.0),
        Strategy::Mesh { h } => Some(h * mesh_sensitivity(model)),
        Strategy::Local(_) => None,
    }
}

/// A verified `(policy, flow, leader action)` triple.
#[derive(Debug, Clone, PartialEq)]
pub struct SneTriple {
    pub policy: PolicyKernel,
    pub flow: FlowSequence,
    pub leader_action: usize,
    pub epsilon: f64,
    /// Leader optimality slack certified for the action.
    pub epsilon_prime: f64,
}

/// Recovers the policy from the best witness's flow and re-verifies both
/// conditions: membership in `BR^ε` and `epsilon_prime`-optimality of the
/// action among the reported inner values.
pub fn extract_sne(model: &StackelbergModel, outer: &OuterResult, epsilon_prime: f64) -> Result<SneTriple> {
    let best = outer.best();
    let flow = best.witness.flow.clone();
    let policy = PolicyKernel::from_flow(&flow);
    let (cand, member) = check_epsilon_ne(model, best.leader_action, &policy, &flow, outer.epsilon)?;
    if !member {
        return Err(Error::VerificationFailed(format!(
            "witness for action {} has exploitability {:e} above epsilon {} (consistent: {})",
            best.leader_action, cand.exploitability, outer.epsilon, cand.consistent
        )));
    }
    if (cand.leader_return - best.value).abs() > 1e-10 {
        return Err(Error::VerificationFailed(format!(
            "witness leader return {} differs from reported value {}",
            cand.leader_return, best.value
        )));
    }
    for r in &outer.reports {
        if r.value > best.value + epsilon_prime {
            return Err(Error::VerificationFailed(format!(
                "action {} has value {} above the chosen {} + {epsilon_prime}",
                r.leader_action, r.value, best.value
            )));
        }
    }
    Ok(SneTriple {
        policy,
        flow,
        leader_action: best.leader_action,
        epsilon: outer.epsilon,
        epsilon_prime,
    })
}

fn better(mode: Mode, a: &EquilibriumCandidate, b: &EquilibriumCandidate) -> bool {
    let s = mode.sign();
    (s * a.leader_return)
        .total_cmp(&(s * b.leader_return))
        .then_with(|| lex_cmp(a.flow.as_slice(), b.flow.as_slice()))
        == Ordering::Less
}

fn seed_family(model: &StackelbergModel, opts: &LocalOptions, caps: &Caps) -> Option<Family> {
    let limit = caps.policies.min(1 << 16);
    let fits = |n: usize| family_size(model, Family::Mesh(n)) <= limit;
    match opts.seed_divisions {
        Some(n) => fits(n).then_some(Family::Mesh(n)),
        None => [32, 16, 8, 4, 2, 1].into_iter().find(|&n| fits(n)).map(Family::Mesh),
    }
}

/// Sweeps over all rows per penalty round before giving up on convergence.
const MAX_DESCENT_PASSES: usize = 10_000;

struct Descent<'a> {
    model: &'a StackelbergModel,
    la: usize,
    epsilon: f64,
    sign: f64,
    opts: &'a LocalOptions,
    evals: u64,
}

impl Descent<'_> {
    fn eval(&mut self, p: &PolicyKernel) -> Result<EquilibriumCandidate> {
        self.evals += 1;
        evaluate_policy(self.model, self.la, p)
    }

    fn objective(&self, c: &EquilibriumCandidate, rho: f64) -> f64 {
        let v = (c.exploitability - self.epsilon).max(0.0);
        self.sign * c.leader_return + rho * v * v
    }

    /// Coordinate descent moving mass between pairs of actions within one
    /// row, with halving step sizes and an escalating penalty.
    fn run(&mut self, start: PolicyKernel) -> Result<EquilibriumCandidate> {
        let d = *self.model.dims();
        let rows: Vec<(usize, usize)> = (0..d.steps())
            .filter(|&t| self.model.policy_relevant(t))
            .flat_map(|t| (0..d.follower_states).map(move |s| (t, s)))
            .collect();
        let na = d.follower_actions;
        let mut cur = self.eval(&start)?;
        let mut rho = self.opts.penalty_start;
        loop {
            let mut step = 0.25;
            let mut obj = self.objective(&cur, rho);
            let mut passes = 0;
            while step >= self.opts.min_step && passes < MAX_DESCENT_PASSES {
                passes += 1;
                let mut improved = false;
                for &(t, s) in &rows {
                    for a in 0..na {
                        for b in 0..na {
                            if a == b {
                                continue;
                            }
                            let row = cur.policy.row(t, s);
                            if row[a] <= 0.0 {
                                continue;
                            }
                            let mv = step.min(row[a]);
                            let mut trial = cur.policy.clone();
                            {
                                let r = trial.row_mut(t, s);
                                r[a] = if mv == r[a] { 0.0 } else { r[a] - mv };
                                r[b] += mv;
                            }
                            let c = self.eval(&trial)?;
                            let o = self.objective(&c, rho);
                            if o < obj - 1e-15 {
                                cur = c;
                                obj = o;
                                improved = true;
                            }
                        }
                    }
                }
                if !improved {
                    step *= 0.5;
                }
            }
            let violation = (cur.exploitability - self.epsilon).max(0.0);
            if violation <= self.opts.violation_tol || rho >= self.opts.penalty_max {
                break;
            }
            rho *= 10.0;
        }
        Ok(cur)
    }

    /// Largest step from a member `anchor` towards `target` that stays a
    /// member, by bisection on the mixing weight.
    fn repair(&mut self, anchor: &EquilibriumCandidate, target: &EquilibriumCandidate) -> Result<EquilibriumCandidate> {
        let mix = |lambda: f64| {
            let probs: Vec<f64> = anchor
                .policy
                .as_slice()
                .iter()
                .zip(target.policy.as_slice())
                .map(|(a, b)| (1.0 - lambda) * a + lambda * b)
                .collect();
            let p = &anchor.policy;
            PolicyKernel::from_raw(p.steps(), p.states(), p.actions(), probs)
        };
        let (mut lo, mut hi) = (0.0, 1.0);
        let mut best = anchor.clone();
        for _ in 0..40 {
            let mid = 0.5 * (lo + hi);
            let c = self.eval(&mix(mid))?;
            if c.is_member(self.epsilon) {
                lo = mid;
                best = c;
            } else {
                hi = mid;
            }
        }
        Ok(best)
    }
}

fn local_solve(
    model: &StackelbergModel,
    la: usize,
    epsilon: f64,
    mode: Mode,
    opts: &LocalOptions,
    caps: &Caps,
    clock: &Clock,
) -> Result<SolveReport> {
    let d = *model.dims();
    let mut evals = 0u64;
    let mut seeds: Vec<EquilibriumCandidate> = Vec::new();
    if let Some(family) = seed_family(model, opts, caps) {
        let f = frontier_of(model, la, mode, family, caps)?;
        evals += f.evals;
        seeds.extend(f.members(epsilon).take(3).map(|p| point_candidate(model, p)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ (la as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15));
    let mut starts: Vec<(PolicyKernel, Option<usize>)> = seeds
        .iter()
        .enumerate()
        .map(|(i, c)| (c.policy.clone(), Some(i)))
        .collect();
    for _ in 0..opts.starts {
        let anchor = if seeds.is_empty() { None } else { Some(0) };
        starts.push((crate::random::random_policy(&mut rng, &d), anchor));
    }
    let outcomes = crate::par::map_range(starts.len(), |i| -> Result<(Option<EquilibriumCandidate>, u64)> {
        let (start, anchor) = &starts[i];
        let mut desc = Descent {
            model,
            la,
            epsilon,
            sign: mode.sign(),
            opts,
            evals: 0,
        };
        let mut c = desc.run(start.clone())?;
        if !c.is_member(epsilon) {
            c = match anchor {
                Some(a) => desc.repair(&seeds[*a], &c)?,
                None => return Ok((None, desc.evals)),
            };
        }
        Ok((Some(c), desc.evals))
    });
    let mut best: Option<EquilibriumCandidate> = seeds.first().cloned();
    for out in outcomes {
        let (cand, n) = out?;
        evals += n;
        if let Some(c) = cand {
            // Re-verify membership from scratch before accepting.
            let (checked, member) = check_epsilon_ne(model, la, &c.policy, &c.flow, epsilon)?;
            if member && best.as_ref().is_none_or(|b| better(mode, &checked, b)) {
                best = Some(checked);
            }
        }
    }
    let witness = best.ok_or(Error::NoFeasibleCandidate {
        leader_action: la,
        epsilon,
    })?;
    Ok(SolveReport {
        leader_action: la,
        epsilon,
        mode,
        value: witness.leader_return,
        witness,
        strategy: Strategy::Local(*opts),
        guarantee: Guarantee::Local,
        evals,
        seconds: clock.seconds(),
    })
}
