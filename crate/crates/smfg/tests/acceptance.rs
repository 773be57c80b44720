//! Acceptance checks, one line per criterion. Runs as a plain binary so
//! the lines are printed on every `cargo test`.

#![allow(clippy::needless_range_loop)]

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::Command;
use std::time::Instant;

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;
use smfg_core::dynamics::{frozen_stages, propagate_follower_flow};
use smfg_core::equilibrium::{enumerate_deterministic_candidates, evaluate_policy};
use smfg_core::lp::{assemble_lp, dp_certificate, verify_kkt};
use smfg_core::mdp::{backward_induction_value, exploitability};
use smfg_core::random::{random_affine_model, random_dimensions, random_policy, RandomModelOptions};
use smfg_core::sensitivity::{
    check_admissible, check_flow_deviation, check_sandwich, check_value_deviation, perturb_model, PerturbationMode,
    PerturbationSpec,
};
use smfg_core::solver::{inner_frontier, inner_worst_case, outer_maximize};
use smfg_core::{Caps, Dimensions, Error, Mode, PolicyKernel, StackelbergModel, Strategy};

const EPSILON0: f64 = 0.2;
const MESH_1024: f64 = 1.0 / 1024.0;
/// Mesh error allowance for the closed-form predator values.
const CLOSED_FORM_TOL: f64 = 5e-3;
/// Values that are exactly zero in closed form.
const ZERO_TOL: f64 = 1e-9;
const TWO_ACTION_TOL: f64 = 1e-6;
const MAJORITY_TOL: f64 = 1e-10;
const KKT_TOL: f64 = 1e-9;
const DP_CERT_TOL: f64 = 1e-10;
/// Backward induction against brute force; both are exact up to the order
/// of floating-point summation.
const BRUTE_FORCE_TOL: f64 = 1e-12;
const NORMALIZATION_TOL: f64 = 1e-12;
const EXPLOITABILITY_FLOOR: f64 = -1e-12;

const SECS_PER_POINT: f64 = 5.0;
const SECS_TWO_ACTION: f64 = 5.0;
const SECS_MAJORITY: f64 = 10.0;
const SECS_ORACLE: f64 = 60.0;
const SECS_BOUNDS: f64 = 60.0;

type Check = Result<String, String>;

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_smfg")
}

fn config(name: &str) -> String {
    format!("{}/configs/{name}", env!("CARGO_MANIFEST_DIR"))
}

/// Runs the CLI, returning the exit code, stdout and the wall time.
fn smfg(args: &[&str]) -> (i32, String, f64) {
    let t = Instant::now();
    let out = Command::new(bin()).args(args).output().expect("spawn smfg");
    let secs = t.elapsed().as_secs_f64();
    if !out.status.success() {
        eprintln!("smfg {args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    }
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8(out.stdout).unwrap(),
        secs,
    )
}

fn smfg_json(args: &[&str]) -> Result<(Value, f64), String> {
    let (code, out, secs) = smfg(args);
    if code != 0 {
        return Err(format!("smfg {args:?} exited with {code}"));
    }
    let v: Value = serde_json::from_str(&out).map_err(|e| format!("bad JSON from {args:?}: {e}"))?;
    Ok((v, secs))
}

fn f(v: &Value, ptr: &str) -> f64 {
    v.pointer(ptr)
        .and_then(Value::as_f64)
        .unwrap_or_else(|| panic!("missing number at {ptr}"))
}

/// Lower root of `mu (1 + a - mu) = b`, subtracted from one.
fn predator_closed_form(a: f64, b: f64) -> f64 {
    1.0 - ((1.0 + a) - ((1.0 + a).powi(2) - 4.0 * b).sqrt()) / 2.0
}

fn criterion_1() -> Check {
    let mut worst = 0.0_f64;
    let mut slowest = 0.0_f64;
    let mut fails = Vec::new();
    for eps in [0.0, 0.05, 0.1, 0.15, 0.2, 0.3] {
        let e = eps.to_string();
        let h = MESH_1024.to_string();
        let (v, secs) = smfg_json(&[
            "solve",
            "--model",
            &config("predator.json"),
            "--epsilon",
            &e,
            "--mesh",
            &h,
            "--no-timestamp",
        ])?;
        let got = f(&v, "/result/value");
        let (want, tol) = if eps < EPSILON0 {
            (predator_closed_form(EPSILON0, eps), CLOSED_FORM_TOL)
        } else {
            (0.0, ZERO_TOL)
        };
        let err = (got - want).abs();
        worst = worst.max(err / tol);
        slowest = slowest.max(secs);
        if err > tol || secs >= SECS_PER_POINT {
            fails.push(format!("eps {eps}: got {got}, want {want} +- {tol}, {secs:.2}s"));
        }
    }
    let detail = format!("worst error/tolerance {worst:.3}, slowest point {slowest:.2}s (limit {SECS_PER_POINT}s)");
    if fails.is_empty() {
        Ok(detail)
    } else {
        Err(format!("{detail}; {}", fails.join("; ")))
    }
}

fn criterion_2() -> Check {
    let h = MESH_1024.to_string();
    let (v, _) = smfg_json(&[
        "sweep",
        "--model",
        &config("predator.json"),
        "--mesh",
        &h,
        "--no-timestamp",
    ])?;
    let jumps = v
        .pointer("/result/jumps")
        .and_then(Value::as_array)
        .ok_or("no jumps array")?;
    let monotone = v.pointer("/result/monotone") == Some(&Value::Bool(true));
    let [j] = jumps.as_slice() else {
        return Err(format!("expected one jump, found {}", jumps.len()));
    };
    let (loc, left, right) = (f(j, "/location"), f(j, "/left"), f(j, "/right"));
    let detail = format!("jump at {loc:.6}: left {left:.6}, right {right:.2e}; monotone {monotone}");
    let ok = monotone
        && (loc - EPSILON0).abs() <= 1e-5
        && (left - (1.0 - EPSILON0)).abs() <= CLOSED_FORM_TOL
        && right.abs() <= ZERO_TOL;
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn criterion_3() -> Check {
    let (v, secs) = smfg_json(&[
        "reproduce",
        "--example",
        "two-action",
        "--epsilon0",
        "0.2",
        "--no-timestamp",
    ])?;
    let r = v.pointer("/result/experiment").ok_or("no experiment")?;
    let want = (1.0 - EPSILON0) / 3.0;
    let value = f(r, "/true_value");
    let a_star = r["true_action"].as_str().unwrap_or("?");
    let unrelaxed = r["unrelaxed_action"].as_str().unwrap_or("?");
    let j_g = f(r, "/true_values/0");
    let gap = f(r, "/unrelaxed_gap");
    let detail = format!(
        "V = {value:.7} at {a_star}; unrelaxed argmax {unrelaxed} with true value {j_g:.1e}, gap {gap:.7}; {secs:.2}s"
    );
    let ok = (value - want).abs() <= TWO_ACTION_TOL
        && a_star == "l"
        && unrelaxed == "g"
        && j_g.abs() <= ZERO_TOL
        && (gap - want).abs() <= TWO_ACTION_TOL
        && secs < SECS_TWO_ACTION;
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn criterion_4() -> Check {
    let mut values = Vec::new();
    let mut fails = Vec::new();
    let caps = Caps::default();
    for dr in [0.4, 0.2, 0.1, 0.05] {
        let m = StackelbergModel::predator_perturbed(EPSILON0, dr, None).map_err(|e| e.to_string())?;
        let got = inner_worst_case(
            &m,
            0,
            EPSILON0,
            Mode::Pessimistic,
            &Strategy::Mesh { h: MESH_1024 },
            &caps,
        )
        .map_err(|e| e.to_string())?
        .value;
        let want = predator_closed_form(EPSILON0 + dr, EPSILON0);
        if (got - want).abs() > CLOSED_FORM_TOL {
            fails.push(format!("delta_r {dr}: got {got}, want {want}"));
        }
        values.push(got);
    }
    let limit = 1.0 - EPSILON0;
    let trending = values.windows(2).all(|w| (w[1] - limit).abs() <= (w[0] - limit).abs());
    if !trending {
        fails.push("values do not approach 1 - epsilon0".into());
    }
    let shown: Vec<String> = values.iter().map(|v| format!("{v:.4}")).collect();
    let detail = format!("J_hat(g) for delta_r 0.4..0.05: [{}] -> {limit}", shown.join(", "));
    if fails.is_empty() {
        Ok(detail)
    } else {
        Err(format!("{detail}; {}", fails.join("; ")))
    }
}

fn criterion_5() -> Check {
    let t = Instant::now();
    let grid = vec![vec![1.0, 1.0], vec![1.0, 2.0], vec![2.0, 1.0]];
    let m = StackelbergModel::majority(2, 2, grid, None).map_err(|e| e.to_string())?;
    let mut expl = Vec::new();
    for k in 0..2 {
        let p = PolicyKernel::constant(m.dims(), k).map_err(|e| e.to_string())?;
        let c = evaluate_policy(&m, 0, &p).map_err(|e| e.to_string())?;
        if !c.consistent {
            return Err(format!("gather-at-{k} profile is not consistent"));
        }
        expl.push(c.exploitability);
    }
    let o = outer_maximize(&m, 0.0, Mode::Pessimistic, &Strategy::Enumerate, &Caps::default())
        .map_err(|e| e.to_string())?;
    let secs = t.elapsed().as_secs_f64();
    let detail = format!(
        "gather exploitability {:.1e}/{:.1e}; outer value {:.1e} at {}; {secs:.2}s",
        expl[0],
        expl[1],
        o.value,
        m.labels().leader_actions[o.best_action]
    );
    let ok = expl.iter().all(|e| *e <= MAJORITY_TOL)
        && o.value.abs() <= MAJORITY_TOL
        && o.best_action == 0
        && secs < SECS_MAJORITY;
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

/// Best deterministic Markov policy return against frozen maps, by
/// exhaustive enumeration of every per-(t, s) action choice.
fn brute_force_value(model: &StackelbergModel, la: usize, flow: &smfg_core::FlowSequence) -> f64 {
    let d = *model.dims();
    let (ns, na, steps) = (d.follower_states, d.follower_actions, d.steps());
    let stages = frozen_stages(model, la, flow).unwrap();
    let rows = steps * ns;
    let mut choice = vec![0usize; rows];
    let mut best = f64::NEG_INFINITY;
    loop {
        let mut mu = model.follower_initial().to_vec();
        let mut total = 0.0;
        for (t, st) in stages.iter().enumerate() {
            let mut next = vec![0.0; ns];
            for s in 0..ns {
                let k = s + ns * choice[t * ns + s];
                total += mu[s] * st.follower_r[k];
                for sp in 0..ns {
                    next[sp] += mu[s] * st.follower_p[k * ns + sp];
                }
            }
            mu = next;
        }
        best = best.max(total);
        let mut i = 0;
        while i < rows {
            choice[i] += 1;
            if choice[i] < na {
                break;
            }
            choice[i] = 0;
            i += 1;
        }
        if i == rows {
            return best;
        }
    }
}

fn criterion_6() -> Check {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let (mut worst_kkt, mut worst_cert, mut worst_bf) = (0.0_f64, 0.0_f64, 0.0_f64);
    for i in 0..100 {
        let dims = random_dimensions(&mut rng, 3, 3, 3, 2, 2);
        let opts = RandomModelOptions {
            quadratic: i % 2 == 1,
            ..RandomModelOptions::default()
        };
        let m = random_affine_model(&mut rng, dims, &opts).map_err(|e| e.to_string())?;
        let la = (rng.next_u32() as usize) % dims.leader_actions;
        let policy = random_policy(&mut rng, &dims);
        let flow = propagate_follower_flow(&m, la, &policy).map_err(|e| e.to_string())?;
        let values = backward_induction_value(&m, la, &flow).map_err(|e| e.to_string())?;
        let lp = assemble_lp(&m, la, &flow).map_err(|e| e.to_string())?;
        let cert = dp_certificate(&lp, &values, &m, la, &flow).map_err(|e| e.to_string())?;
        let report = verify_kkt(&lp, &cert, KKT_TOL).map_err(|e| e.to_string())?;
        if let Some((cond, r)) = report.first_failure() {
            return Err(format!("model {i}: KKT residual {cond} = {r:e}"));
        }
        worst_kkt = worst_kkt.max(report.violations().iter().map(|(_, r)| *r).fold(0.0, f64::max));
        worst_cert = worst_cert.max((cert.value - values.value()).abs());
        worst_bf = worst_bf.max((brute_force_value(&m, la, &flow) - values.value()).abs());
    }
    let secs = t.elapsed().as_secs_f64();
    let detail = format!(
        "100 models: max KKT residual {worst_kkt:.1e}, |V_cert - V_dp| {worst_cert:.1e}, |V_dp - V_brute| {worst_bf:.1e}; {secs:.2}s"
    );
    if worst_cert <= DP_CERT_TOL && worst_bf <= BRUTE_FORCE_TOL && secs < SECS_ORACLE {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn criterion_7() -> Check {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (mut flow_ratio, mut value_ratio, mut value_ratio_tight) = (0.0_f64, 0.0_f64, 0.0_f64);
    let mut checks = 0;
    for i in 0..50u64 {
        let dims = random_dimensions(&mut rng, 3, 3, 3, 2, 2);
        let m = random_affine_model(&mut rng, dims, &RandomModelOptions::default()).map_err(|e| e.to_string())?;
        let u = |rng: &mut ChaCha8Rng| (rng.next_u32() as f64) / (u32::MAX as f64);
        let spec = PerturbationSpec {
            delta_p: 1e-4 + 0.05 * u(&mut rng),
            delta_r: 0.1 * u(&mut rng),
            mode: PerturbationMode::RandomSeeded,
            seed: 700 + i,
        };
        let p = perturb_model(&m, &spec).map_err(|e| e.to_string())?;
        let mut policies = vec![PolicyKernel::uniform(&dims)];
        policies.extend((0..3).map(|_| random_policy(&mut rng, &dims)));
        for la in 0..dims.leader_actions {
            for pol in &policies {
                let fr = check_flow_deviation(&m, &p, la, pol, spec.delta_p).map_err(|e| e.to_string())?;
                let vr =
                    check_value_deviation(&m, &p, la, pol, spec.delta_p, spec.delta_r).map_err(|e| e.to_string())?;
                flow_ratio = flow_ratio.max(fr.max_ratio);
                value_ratio = value_ratio.max(vr.ratio);
                value_ratio_tight = value_ratio_tight.max(vr.ratio_tight);
                checks += 2;
            }
        }
    }
    let secs = t.elapsed().as_secs_f64();
    let detail = format!(
        "{checks} checks on 50 perturbations: max flow ratio {flow_ratio:.4}, max value ratio {value_ratio:.4} \
         (against the T+1 exponent {value_ratio_tight:.4}); {secs:.2}s"
    );
    if flow_ratio <= 1.0 && value_ratio <= 1.0 && secs < SECS_BOUNDS {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn criterion_8() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let caps = Caps::default();
    let u = |rng: &mut ChaCha8Rng| (rng.next_u32() as f64) / (u32::MAX as f64);
    let (mut min_upper, mut min_lower) = (f64::INFINITY, f64::INFINITY);
    let mut lower_checked = 0;
    for i in 0..20u64 {
        let dims = random_dimensions(&mut rng, 2, 2, 2, 2, 2);
        let m = random_affine_model(&mut rng, dims, &RandomModelOptions::default()).map_err(|e| e.to_string())?;
        let spec = PerturbationSpec {
            delta_p: 1e-5 + 2e-4 * u(&mut rng),
            delta_r: 0.02 * u(&mut rng),
            mode: PerturbationMode::RandomSeeded,
            seed: 800 + i,
        };
        let delta = check_admissible(&m, spec.delta_p, spec.delta_r, f64::INFINITY).map_err(|e| e.to_string())?;
        let eps_prime = 2.0 * delta * (1.0 + u(&mut rng));
        let p = perturb_model(&m, &spec).map_err(|e| e.to_string())?;
        let la = (rng.next_u32() as usize) % dims.leader_actions;
        // Put ε where the tightened perturbed problem is feasible so both
        // inequalities are exercised.
        let hat_min = inner_frontier(&p, la, Mode::Pessimistic, &Strategy::Enumerate, &caps)
            .map_err(|e| e.to_string())?
            .points[0]
            .exploitability;
        let eps = hat_min + eps_prime + 0.05 * u(&mut rng);
        let r = check_sandwich(
            &m,
            &p,
            la,
            eps,
            eps_prime,
            spec.delta_p,
            spec.delta_r,
            &Strategy::Enumerate,
            &caps,
        )
        .map_err(|e| format!("triple {i}: {e}"))?;
        if !r.passed {
            return Err(format!("triple {i}: {r:?}"));
        }
        min_upper = min_upper.min(r.upper_slack);
        if let Some(s) = r.lower_slack {
            min_lower = min_lower.min(s);
            lower_checked += 1;
        }
        // Half the admissible ε' must be refused.
        match check_sandwich(
            &m,
            &p,
            la,
            eps,
            delta,
            spec.delta_p,
            spec.delta_r,
            &Strategy::Enumerate,
            &caps,
        ) {
            Err(Error::PremiseViolation(_)) => {}
            other => return Err(format!("triple {i}: inadmissible triple not refused: {other:?}")),
        }
    }
    let detail = format!(
        "20 triples: min upper slack {min_upper:.2e}, min lower slack {min_lower:.2e} ({lower_checked} lower checks); \
         20 inadmissible triples refused"
    );
    if lower_checked == 20 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn criterion_9() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let caps = Caps::default();
    let mut violations = Vec::new();
    let (mut norm_checks, mut incl_checks) = (0, 0);

    for _ in 0..200 {
        let dims = random_dimensions(&mut rng, 4, 3, 4, 2, 2);
        let m = random_affine_model(&mut rng, dims, &RandomModelOptions::default()).map_err(|e| e.to_string())?;
        let pol = random_policy(&mut rng, &dims);
        for la in 0..dims.leader_actions {
            let flow = propagate_follower_flow(&m, la, &pol).map_err(|e| e.to_string())?;
            for t in 0..flow.steps() {
                let row = flow.at(t);
                let sum: f64 = row.iter().sum();
                if (sum - 1.0).abs() > NORMALIZATION_TOL || row.iter().any(|x| *x < 0.0) {
                    violations.push(format!("flow at t={t} sums to {sum}"));
                }
            }
            let e = exploitability(&m, la, &flow).map_err(|e| e.to_string())?;
            if e < EXPLOITABILITY_FLOOR {
                violations.push(format!("negative exploitability {e}"));
            }
            norm_checks += 1;
        }
    }

    for _ in 0..50 {
        let dims = random_dimensions(&mut rng, 2, 2, 2, 1, 1);
        let m = random_affine_model(&mut rng, dims, &RandomModelOptions::default()).map_err(|e| e.to_string())?;
        let grid = [0.0, 0.01, 0.05, 0.1, 0.2, 0.5, 1.0, 2.0];
        let mut prev: Option<Vec<Vec<f64>>> = None;
        for eps in grid {
            let set: Vec<Vec<f64>> = enumerate_deterministic_candidates(&m, 0, eps, &caps)
                .map_err(|e| e.to_string())?
                .into_iter()
                .map(|c| c.policy.as_slice().to_vec())
                .collect();
            if let Some(p) = &prev {
                if p.iter().any(|x| !set.contains(x)) {
                    violations.push(format!("candidate set at {eps} misses a member of a smaller epsilon"));
                }
            }
            prev = Some(set);
            incl_checks += 1;
        }
    }

    let predator = StackelbergModel::predator(EPSILON0, None).map_err(|e| e.to_string())?;
    let mut refinements = 0;
    for eps in [0.0, 0.05, 0.1, 0.15, 0.25] {
        let mut last = f64::INFINITY;
        for n in [8.0, 16.0, 32.0, 64.0, 128.0, 256.0] {
            let v = inner_worst_case(
                &predator,
                0,
                eps,
                Mode::Pessimistic,
                &Strategy::Mesh { h: 1.0 / n },
                &caps,
            )
            .map_err(|e| e.to_string())?
            .value;
            if v > last + 1e-12 {
                violations.push(format!(
                    "mesh 1/{n} raised the pessimistic value at {eps}: {last} -> {v}"
                ));
            }
            last = v;
            refinements += 1;
        }
    }
    for _ in 0..10 {
        let dims = Dimensions {
            horizon: 1,
            follower_states: 2,
            follower_actions: 2,
            leader_states: 1,
            leader_actions: 1,
        };
        let m = random_affine_model(&mut rng, dims, &RandomModelOptions::default()).map_err(|e| e.to_string())?;
        let eps = 0.1;
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for n in [2.0, 4.0, 8.0] {
            let s = Strategy::Mesh { h: 1.0 / n };
            let (p, o) = match (
                inner_worst_case(&m, 0, eps, Mode::Pessimistic, &s, &caps),
                inner_worst_case(&m, 0, eps, Mode::Optimistic, &s, &caps),
            ) {
                (Ok(p), Ok(o)) => (p.value, o.value),
                (Err(Error::NoFeasibleCandidate { .. }), _) | (_, Err(Error::NoFeasibleCandidate { .. })) => continue,
                (Err(e), _) | (_, Err(e)) => return Err(e.to_string()),
            };
            if p > lo + 1e-12 || o < hi - 1e-12 {
                violations.push(format!(
                    "mesh 1/{n} shrank the feasible range: [{p}, {o}] vs [{lo}, {hi}]"
                ));
            }
            lo = lo.min(p);
            hi = hi.max(o);
            refinements += 1;
        }
    }

    let runs: [&[&str]; 3] = [
        &[
            "outer",
            "--model",
            &config("congestion.json"),
            "--epsilon",
            "0.1",
            "--mesh",
            "0.1",
            "--no-timestamp",
        ],
        &[
            "outer",
            "--model",
            &config("congestion.json"),
            "--epsilon",
            "0.1",
            "--strategy",
            "local",
            "--no-timestamp",
        ],
        &[
            "sweep",
            "--model",
            &config("predator.json"),
            "--mesh",
            "0.00390625",
            "--no-timestamp",
        ],
    ];
    for args in runs {
        let mut one = args.to_vec();
        one.extend(["--threads", "1"]);
        let mut eight = args.to_vec();
        eight.extend(["--threads", "8"]);
        let (c1, o1, _) = smfg(&one);
        let (c8, o8, _) = smfg(&eight);
        if c1 != 0 || c8 != 0 || o1 != o8 {
            violations.push(format!("{} differs between 1 and 8 threads", args[0]));
        }
    }

    let detail = format!(
        "{norm_checks} normalization/exploitability checks, {incl_checks} inclusion checks, {refinements} refinement \
         checks, 3 thread-determinism runs: {} violations",
        violations.len()
    );
    if violations.is_empty() {
        Ok(detail)
    } else {
        Err(format!("{detail}; first: {}", violations[0]))
    }
}

fn main() {
    let criteria: [(u32, fn() -> Check); 9] = [
        (1, criterion_1),
        (2, criterion_2),
        (3, criterion_3),
        (4, criterion_4),
        (5, criterion_5),
        (6, criterion_6),
        (7, criterion_7),
        (8, criterion_8),
        (9, criterion_9),
    ];
    let mut failed = 0;
    for (n, check) in criteria {
        let t = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = t.elapsed().as_secs_f64();
        match result {
            Ok(d) => println!("criterion {n}: PASS  {d} [{secs:.2}s]"),
            Err(d) => {
                failed += 1;
                println!("criterion {n}: FAIL  {d} [{secs:.2}s]");
            }
        }
    }
    if failed > 0 {
        println!("{failed} of 9 criteria failed");
        std::process::exit(1);
    }
    println!("all 9 criteria passed");
}
