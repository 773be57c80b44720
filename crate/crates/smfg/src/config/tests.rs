use serde_json::{json, Value};

use super::*;

fn stage() -> Value {
    let z = [0.0; 4];
    json!({
        "p_base": [[[1.0, 0.0], [0.0, 1.0]], [[0.0, 1.0], [1.0, 0.0]]],
        "p_lin": [[[z, z], [z, z]], [[z, z], [z, z]]],
        "r_base": [[0.1, 0.2], [0.3, 0.4]],
        "r_lin": [[z, z], [[0.0, 0.5, 0.0, 0.0], z]],
        "pl_base": [[1.0]],
        "pl_lin": [[z]],
        "rl_base": [0.25],
        "rl_lin": [[0.0, 0.0, 0.0, 1.0]]
    })
}

fn affine() -> Value {
    json!({
        "horizon": 1,
        "kind": "affine",
        "follower": {"states": ["x", "y"], "actions": ["stay", "move"], "initial": [0.5, 0.5]},
        "leader": {"states": ["l"], "actions": ["a"]},
        "tables": [[stage(), stage()]]
    })
}

fn load(v: &Value) -> Result<StackelbergModel, ConfigError> {
    load_model(&v.to_string())
}

fn schema_path(v: &Value) -> String {
    match load(v) {
        Err(ConfigError::Schema { path, .. }) => path,
        other => panic!("expected a schema error, got {other:?}"),
    }
}

#[test]
fn affine_tables_are_read_in_state_action_order() {
    let m = load(&affine()).unwrap();
    assert_eq!(m.kind(), ModelKind::Affine);
    assert_eq!(m.labels().follower_actions, ["stay", "move"]);
    assert_eq!(m.leader_initial(), [1.0]);
    let e = |k: usize| {
        let mut l = vec![0.0; 4];
        l[k] = 1.0;
        l
    };
    // Joint index 1 is (y, stay).
    assert!((m.eval_follower_reward(1, 0, 1, 0, &e(1)).unwrap() - 0.8).abs() < 1e-15);
    assert!((m.eval_follower_reward(1, 0, 1, 0, &e(2)).unwrap() - 0.3).abs() < 1e-15);
    assert!((m.eval_follower_reward(0, 0, 0, 1, &e(1)).unwrap() - 0.2).abs() < 1e-15);
    assert_eq!(m.eval_transition(0, 0, 0, 1, &e(0)).unwrap(), [0.0, 1.0]);
    assert_eq!(m.eval_transition(0, 0, 1, 1, &e(0)).unwrap(), [1.0, 0.0]);
    assert!((m.eval_leader_reward(0, 0, 0, &e(3)).unwrap() - 1.25).abs() < 1e-15);
}

#[test]
fn quadratic_terms_require_the_quadratic_kind() {
    let mut v = affine();
    v["tables"][0][0]["r_quad"] = json!(vec![vec![vec![vec![0.0; 4]; 4]; 2]; 2]);
    assert_eq!(schema_path(&v), "kind");
    v["kind"] = json!("affine+quadratic");
    assert_eq!(load(&v).unwrap().kind(), ModelKind::AffineQuadratic);
}

#[test]
fn builtins_load_from_params() {
    let m = load(&json!({"kind": "builtin:predator", "params": {"epsilon0": 0.2}})).unwrap();
    assert_eq!(m.kind(), ModelKind::Predator);
    assert_eq!(m.predator_params().unwrap().epsilon0, 0.2);
    let m = load(&json!({"kind": "builtin:predator-two-action", "horizon": 1, "params": {"epsilon0": 0.2}})).unwrap();
    assert_eq!(m.dims().leader_actions, 2);
    let m = load(&json!({"kind": "builtin:predator-perturbed", "params": {"epsilon0": 0.2, "delta_r": 0.05}})).unwrap();
    assert_eq!(m.kind(), ModelKind::PredatorPerturbed);
    assert_eq!(m.predator_params().unwrap().delta_r, 0.05);
    let m = load(&json!({
        "kind": "builtin:majority", "horizon": 2,
        "params": {"n": 2, "leader_action_grid": [[1, 1], [1, 2]]},
        "follower": {"initial": [0.3, 0.7]}
    }))
    .unwrap();
    assert_eq!(m.dims().leader_actions, 2);
    assert_eq!(m.follower_initial(), [0.3, 0.7]);
    let m = load(&json!({"kind": "builtin:majority", "horizon": 1, "params": {"n": 3, "r": [1, 2, 3]}})).unwrap();
    assert_eq!(m.dims().follower_states, 3);
}

#[test]
fn builtin_parameter_errors_name_the_field() {
    assert_eq!(schema_path(&json!({"kind": "builtin:predator"})), "params.epsilon0");
    assert_eq!(
        schema_path(&json!({"kind": "builtin:predator", "horizon": 2, "params": {"epsilon0": 0.2}})),
        "horizon"
    );
    assert_eq!(
        schema_path(&json!({"kind": "builtin:predator", "params": {"epsilon0": 0.2, "delta_r": 0.1}})),
        "params.delta_r"
    );
    assert_eq!(
        schema_path(&json!({"kind": "builtin:predator", "params": {"epsilon0": 0.2, "n": 2}})),
        "params.n"
    );
    assert_eq!(
        schema_path(&json!({"kind": "builtin:majority", "horizon": 1, "params": {"n": 2}})),
        "params.leader_action_grid"
    );
    assert_eq!(
        schema_path(
            &json!({"kind": "builtin:predator", "params": {"epsilon0": 0.2}, "leader": {"actions": ["a", "b"]}})
        ),
        "leader.actions"
    );
    assert!(matches!(
        load(&json!({"kind": "builtin:predator", "params": {"epsilon0": 1.5}})),
        Err(ConfigError::Model(_))
    ));
}

#[test]
fn shape_errors_point_at_the_offending_entry() {
    let mut v = affine();
    v["tables"][0][1]["p_base"][1] = json!([[0.0, 1.0]]);
    assert_eq!(schema_path(&v), "tables[0][1].p_base[1]");
    let mut v = affine();
    v["tables"][0][0]["r_lin"][0][1][2] = json!("x");
    assert_eq!(schema_path(&v), "tables[0][0].r_lin[0][1][2]");
    let mut v = affine();
    v["tables"][0].as_array_mut().unwrap().pop();
    assert_eq!(schema_path(&v), "tables[0]");
    let mut v = affine();
    v["tables"] = json!([]);
    assert_eq!(schema_path(&v), "tables");
}

#[test]
fn missing_and_unknown_fields_are_rejected() {
    let mut v = affine();
    v.as_object_mut().unwrap().remove("horizon");
    assert_eq!(schema_path(&v), "horizon");
    let mut v = affine();
    v["follower"].as_object_mut().unwrap().remove("initial");
    assert_eq!(schema_path(&v), "follower.initial");
    let mut v = affine();
    v["follower"]["actoins"] = json!(["a"]);
    let path = schema_path(&v);
    assert!(path.starts_with("follower"), "{path}");
    let mut v = affine();
    v["tables"][0][0]["extra"] = json!(1);
    assert!(schema_path(&v).starts_with("tables[0][0]"));
    assert_eq!(schema_path(&json!({"kind": "quadratic"})), "kind");
    assert!(load_model("{").is_err());
    let mut v = affine();
    v["params"] = json!({"epsilon0": 0.2});
    assert_eq!(schema_path(&v), "params");
}

#[test]
fn invalid_kernels_are_model_errors() {
    let mut v = affine();
    v["tables"][0][0]["p_base"][0][0] = json!([0.7, 0.7]);
    assert!(matches!(load(&v), Err(ConfigError::Model(_))));
    let mut v = affine();
    v["follower"]["initial"] = json!([0.5, 0.6]);
    assert!(matches!(load(&v), Err(ConfigError::Model(_))));
}

#[test]
fn loading_is_deterministic() {
    let text = affine().to_string();
    let a = load_model(&text).unwrap();
    let b = load_model(&text).unwrap();
    assert_eq!(format!("{a:?}"), format!("{b:?}"));
}

#[test]
fn file_errors_carry_the_path() {
    let err = load_model_file(Path::new("/nonexistent/model.json")).unwrap_err();
    assert!(err.to_string().starts_with("/nonexistent/model.json: "));
}
