//! JSON model configuration.
//!
//! ```json
//! {
//!   "horizon": 1,
//!   "kind": "affine",
//!   "follower": {"states": ["x", "y"], "actions": ["stay", "move"], "initial": [0.5, 0.5]},
//!   "leader": {"states": ["l"], "actions": ["a"], "initial": [1.0]},
//!   "tables": [[{"p_base": ..., "p_lin": ..., "r_base": ..., "r_lin": ...,
//!                "pl_base": ..., "pl_lin": ..., "rl_base": ..., "rl_lin": ...}, ...]]
//! }
//! ```
//!
//! `tables[la][t]` holds the coefficients for leader action `la` at epoch
//! `t`. Follower tables are indexed `[s][a]...`, leader tables `[s_l]...`,
//! and the population index `k` runs over joint pairs as `k = s + |S| a`.
//! Builtin kinds take a `params` object instead of `tables`.

use std::path::Path;

use serde::Deserialize;
use serde_json::Value;
use smfg_core::model::{AffineStage, Labels};
use smfg_core::{Dimensions, ModelKind, StackelbergModel};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{path}: {message}")]
    Schema { path: String, message: String },
    #[error("{0}")]
    Model(#[from] smfg_core::Error),
}

fn schema(path: impl Into<String>, message: impl Into<String>) -> ConfigError {
    ConfigError::Schema {
        path: path.into(),
        message: message.into(),
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawModel {
    horizon: Option<i64>,
    kind: String,
    follower: Option<RawSide>,
    leader: Option<RawSide>,
    params: Option<RawParams>,
    tables: Option<Vec<Vec<RawStage>>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSide {
    states: Option<Vec<String>>,
    actions: Option<Vec<String>>,
    initial: Option<Vec<f64>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawParams {
    epsilon0: Option<f64>,
    delta_r: Option<f64>,
    n: Option<usize>,
    r: Option<Vec<f64>>,
    leader_action_grid: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawStage {
    p_base: Value,
    p_lin: Value,
    r_base: Value,
    r_lin: Value,
    r_quad: Option<Value>,
    pl_base: Value,
    pl_lin: Value,
    rl_base: Value,
    rl_lin: Value,
    rl_quad: Option<Value>,
}

/// Reads a nested numeric array of the given shape, row-major.
pub(crate) fn tensor(v: &Value, path: &str, shape: &[usize]) -> Result<Vec<f64>, ConfigError> {
    let mut out = Vec::with_capacity(shape.iter().product());
    fn rec(v: &Value, path: &str, shape: &[usize], out: &mut Vec<f64>) -> Result<(), ConfigError> {
        match shape.split_first() {
            None => match v.as_f64() {
                Some(x) if x.is_finite() => {
                    out.push(x);
                    Ok(())
                }
                _ => Err(schema(path, format!("expected a finite number, got {v}"))),
            },
            Some((&n, rest)) => {
                let arr = v
                    .as_array()
                    .ok_or_else(|| schema(path, format!("expected an array of length {n}")))?;
                if arr.len() != n {
                    return Err(schema(path, format!("expected {n} entries, got {}", arr.len())));
                }
                for (i, x) in arr.iter().enumerate() {
                    rec(x, &format!("{path}[{i}]"), rest, out)?;
                }
                Ok(())
            }
        }
    }
    rec(v, path, shape, &mut out)?;
    Ok(out)
}

/// Reorders a `[s][a][rest]` block into `[k][rest]` with `k = s + S a`.
fn joint_major(v: Vec<f64>, ns: usize, na: usize, inner: usize) -> Vec<f64> {
    let mut out = vec![0.0; v.len()];
    for s in 0..ns {
        for a in 0..na {
            let src = (s * na + a) * inner;
            let dst = (s + ns * a) * inner;
            out[dst..dst + inner].copy_from_slice(&v[src..src + inner]);
        }
    }
    out
}

fn stage_from_raw(raw: &RawStage, dims: &Dimensions, path: &str) -> Result<AffineStage, ConfigError> {
    let (ns, na, nl, j) = (
        dims.follower_states,
        dims.follower_actions,
        dims.leader_states,
        dims.joint(),
    );
    let f = |v: &Value, name: &str, rest: &[usize]| -> Result<Vec<f64>, ConfigError> {
        let mut shape = vec![ns, na];
        shape.extend_from_slice(rest);
        let flat = tensor(v, &format!("{path}.{name}"), &shape)?;
        Ok(joint_major(flat, ns, na, rest.iter().product()))
    };
    let l = |v: &Value, name: &str, rest: &[usize]| -> Result<Vec<f64>, ConfigError> {
        let mut shape = vec![nl];
        shape.extend_from_slice(rest);
        tensor(v, &format!("{path}.{name}"), &shape)
    };
    Ok(AffineStage {
        p_base: f(&raw.p_base, "p_base", &[ns])?,
        p_lin: f(&raw.p_lin, "p_lin", &[ns, j])?,
        r_base: f(&raw.r_base, "r_base", &[])?,
        r_lin: f(&raw.r_lin, "r_lin", &[j])?,
        r_quad: raw.r_quad.as_ref().map(|q| f(q, "r_quad", &[j, j])).transpose()?,
        pl_base: l(&raw.pl_base, "pl_base", &[nl])?,
        pl_lin: l(&raw.pl_lin, "pl_lin", &[nl, j])?,
        rl_base: l(&raw.rl_base, "rl_base", &[])?,
        rl_lin: l(&raw.rl_lin, "rl_lin", &[j])?,
        rl_quad: raw.rl_quad.as_ref().map(|q| l(q, "rl_quad", &[j, j])).transpose()?,
    })
}

fn names<'a>(side: Option<&'a RawSide>, path: &str, field: &str) -> Result<&'a [String], ConfigError> {
    let side = side.ok_or_else(|| schema(path, "missing"))?;
    let v = match field {
        "states" => side.states.as_deref(),
        _ => side.actions.as_deref(),
    };
    match v {
        Some([]) => Err(schema(format!("{path}.{field}"), "must be non-empty")),
        Some(v) => Ok(v),
        None => Err(schema(format!("{path}.{field}"), "missing")),
    }
}

fn horizon(raw: &RawModel, default: Option<usize>) -> Result<usize, ConfigError> {
    match (raw.horizon, default) {
        (Some(h), _) if h < 1 => Err(schema("horizon", format!("must be at least 1, got {h}"))),
        (Some(h), _) => Ok(h as usize),
        (None, Some(d)) => Ok(d),
        (None, None) => Err(schema("horizon", "missing")),
    }
}

fn initial(side: Option<&RawSide>) -> Option<Vec<f64>> {
    side.and_then(|s| s.initial.clone())
}

fn load_affine(raw: &RawModel) -> Result<StackelbergModel, ConfigError> {
    let h = horizon(raw, None)?;
    let fs = names(raw.follower.as_ref(), "follower", "states")?;
    let fa = names(raw.follower.as_ref(), "follower", "actions")?;
    let ls = names(raw.leader.as_ref(), "leader", "states")?;
    let leader_actions = names(raw.leader.as_ref(), "leader", "actions")?;
    let dims = Dimensions::new(h, fs.len(), fa.len(), ls.len(), leader_actions.len())?;
    let fi = initial(raw.follower.as_ref()).ok_or_else(|| schema("follower.initial", "missing"))?;
    let li = match initial(raw.leader.as_ref()) {
        Some(v) => v,
        None if ls.len() == 1 => vec![1.0],
        None => return Err(schema("leader.initial", "missing")),
    };
    let tables = raw
        .tables
        .as_ref()
        .ok_or_else(|| schema("tables", "missing for affine kinds"))?;
    if tables.len() != dims.leader_actions {
        return Err(schema(
            "tables",
            format!(
                "expected one entry per leader action ({}), got {}",
                dims.leader_actions,
                tables.len()
            ),
        ));
    }
    let mut stages = Vec::with_capacity(tables.len());
    for (la, per_t) in tables.iter().enumerate() {
        if per_t.len() != dims.steps() {
            return Err(schema(
                format!("tables[{la}]"),
                format!("expected one entry per epoch ({}), got {}", dims.steps(), per_t.len()),
            ));
        }
        let row = per_t
            .iter()
            .enumerate()
            .map(|(t, st)| stage_from_raw(st, &dims, &format!("tables[{la}][{t}]")))
            .collect::<Result<Vec<_>, _>>()?;
        stages.push(row);
    }
    let labels = Labels {
        follower_states: fs.to_vec(),
        follower_actions: fa.to_vec(),
        leader_states: ls.to_vec(),
        leader_actions: leader_actions.to_vec(),
    };
    let model = StackelbergModel::affine(dims, Some(labels), fi, li, stages)?;
    let want = ModelKind::parse(&raw.kind);
    if want != Some(model.kind()) {
        return Err(schema(
            "kind",
            format!(
                "\"{}\" does not match the tables, which describe \"{}\"",
                raw.kind,
                model.kind()
            ),
        ));
    }
    Ok(model)
}

fn load_builtin(raw: &RawModel, kind: ModelKind) -> Result<StackelbergModel, ConfigError> {
    if raw.tables.is_some() {
        return Err(schema("tables", "not allowed for builtin kinds"));
    }
    let empty = RawParams::default();
    let p = raw.params.as_ref().unwrap_or(&empty);
    let fi = initial(raw.follower.as_ref());
    let model = match kind {
        ModelKind::Predator | ModelKind::PredatorPerturbed | ModelKind::PredatorTwoAction => {
            if horizon(raw, Some(1))? != 1 {
                return Err(schema("horizon", "the predator game has horizon 1"));
            }
            for (name, set) in [
                ("n", p.n.is_some()),
                ("r", p.r.is_some()),
                ("leader_action_grid", p.leader_action_grid.is_some()),
            ] {
                if set {
                    return Err(schema(format!("params.{name}"), "not used by the predator game"));
                }
            }
            let e0 = p.epsilon0.ok_or_else(|| schema("params.epsilon0", "missing"))?;
            let dr = p.delta_r.unwrap_or(0.0);
            match kind {
                ModelKind::Predator if dr != 0.0 => {
                    return Err(schema("params.delta_r", "use kind builtin:predator-perturbed"))
                }
                ModelKind::Predator => StackelbergModel::predator(e0, fi)?,
                ModelKind::PredatorPerturbed => StackelbergModel::predator_perturbed(e0, dr, fi)?,
                _ if dr != 0.0 => return Err(schema("params.delta_r", "not used by the two-action game")),
                _ => StackelbergModel::predator_two_action(e0, fi)?,
            }
        }
        _ => {
            let h = horizon(raw, None)?;
            let n = p.n.ok_or_else(|| schema("params.n", "missing"))?;
            if p.epsilon0.is_some() || p.delta_r.is_some() {
                return Err(schema(
                    "params",
                    "epsilon0 and delta_r are not used by the majority game",
                ));
            }
            let grid = match (&p.leader_action_grid, &p.r) {
                (Some(g), None) => g.clone(),
                (None, Some(r)) => vec![r.clone()],
                (Some(_), Some(_)) => return Err(schema("params", "give either r or leader_action_grid, not both")),
                (None, None) => return Err(schema("params.leader_action_grid", "missing")),
            };
            StackelbergModel::majority(n, h, grid, fi)?
        }
    };
    check_labels(raw, &model)?;
    Ok(model)
}

/// Builtin games name their own states and actions; labels given in the
/// config must agree with them.
fn check_labels(raw: &RawModel, model: &StackelbergModel) -> Result<(), ConfigError> {
    let lab = model.labels();
    let pairs = [
        (
            "follower.states",
            raw.follower.as_ref().and_then(|s| s.states.as_ref()),
            &lab.follower_states,
        ),
        (
            "follower.actions",
            raw.follower.as_ref().and_then(|s| s.actions.as_ref()),
            &lab.follower_actions,
        ),
        (
            "leader.states",
            raw.leader.as_ref().and_then(|s| s.states.as_ref()),
            &lab.leader_states,
        ),
        (
            "leader.actions",
            raw.leader.as_ref().and_then(|s| s.actions.as_ref()),
            &lab.leader_actions,
        ),
    ];
    for (path, given, expect) in pairs {
        if let Some(g) = given {
            if g.len() != expect.len() {
                return Err(schema(
                    path,
                    format!("expected {} entries, got {}", expect.len(), g.len()),
                ));
            }
        }
    }
    if raw
        .leader
        .as_ref()
        .and_then(|s| s.initial.as_ref())
        .is_some_and(|v| v.as_slice() != [1.0])
    {
        return Err(schema("leader.initial", "builtin games have a single leader state"));
    }
    Ok(())
}

/// Parses and validates a model configuration.
pub fn load_model(text: &str) -> Result<StackelbergModel, ConfigError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let raw: RawModel = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        schema(
            if path == "." { "<root>".to_string() } else { path },
            e.into_inner().to_string(),
        )
    })?;
    let kind = ModelKind::parse(&raw.kind).ok_or_else(|| {
        schema(
            "kind",
            format!(
                "unknown kind \"{}\"; expected affine, affine+quadratic, builtin:majority, builtin:predator, \
                 builtin:predator-perturbed or builtin:predator-two-action",
                raw.kind
            ),
        )
    })?;
    if kind.is_affine() {
        if raw.params.is_some() {
            return Err(schema("params", "not allowed for affine kinds"));
        }
        load_affine(&raw)
    } else {
        load_builtin(&raw, kind)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum LoadError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}: {source}")]
    Config { path: String, source: ConfigError },
}

pub fn load_model_file(path: &Path) -> Result<StackelbergModel, LoadError> {
    let shown = path.display().to_string();
    let text = std::fs::read_to_string(path).map_err(|source| LoadError::Io {
        path: shown.clone(),
        source,
    })?;
    load_model(&text).map_err(|source| LoadError::Config { path: shown, source })
}

#[cfg(test)]
mod tests;
