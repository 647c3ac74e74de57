use serde_json::Value;
use vrshuffle::cli::run;

struct Outcome {
    code: i32,
    stdout: String,
    stderr: String,
}

fn vr(args: &[&str]) -> Outcome {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let code = run(std::iter::once("vr").chain(args.iter().copied()), &mut out, &mut err);
    Outcome { code, stdout: String::from_utf8(out).unwrap(), stderr: String::from_utf8(err).unwrap() }
}

fn json(args: &[&str]) -> Value {
    let mut full = vec!["--format", "json"];
    full.extend_from_slice(args);
    let o = vr(&full);
    assert_eq!(o.code, 0, "{}", o.stderr);
    serde_json::from_str(&o.stdout).unwrap()
}

fn num(v: &Value, key: &str) -> f64 {
    v[key].as_f64().unwrap_or_else(|| panic!("{key} missing in {v}"))
}

const E: f64 = std::f64::consts::E;

#[test]
fn params_catalog_row() {
    let v = json(&["params", "general-ldp", "--eps0", "1.0"]);
    assert!((num(&v, "p") - E).abs() < 1e-12);
    assert!((num(&v, "beta") - (E - 1.0) / (E + 1.0)).abs() < 1e-12);
    assert!((num(&v, "q") - E).abs() < 1e-12);
    for key in ["alpha", "r", "n_blanket"] {
        assert!(!v[key].is_null(), "{key}");
    }
}

#[test]
fn params_infinite_ratio() {
    let v = json(&["params", "balls-into-bins", "--d", "16", "--s", "2"]);
    assert_eq!(v["p"], "inf");
    assert_eq!(num(&v, "beta"), 1.0);
    assert_eq!(num(&v, "q"), 8.0);
}

#[test]
fn params_text_format() {
    let o = vr(&["params", "general-ldp", "--eps0", "1.0"]);
    assert_eq!(o.code, 0);
    assert!(o.stdout.contains("p: 2.71828\n"), "{}", o.stdout);
}

#[test]
fn params_from_matrix_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("rr.json");
    std::fs::write(&path, r#"{"rows": [[0.6666666666666666, 0.3333333333333333], [0.3333333333333333, 0.6666666666666666]]}"#)
        .unwrap();
    let v = json(&["params", "--matrix-file", path.to_str().unwrap()]);
    assert!((num(&v, "p") - 2.0).abs() < 1e-12);
    assert!((num(&v, "beta") - 1.0 / 3.0).abs() < 1e-12);
    assert!((num(&v, "q") - 2.0).abs() < 1e-12);
}

#[test]
fn upper_runtime_table_cell() {
    let v = json(&["upper", "--mechanism", "general-ldp", "--eps0", "1.0", "--n", "10000", "--delta", "1e-6", "--iters", "20"]);
    let eps = num(&v, "eps");
    assert!((eps - 0.0433).abs() <= 1e-4 + num(&v, "resolution"), "{eps}");
    assert_eq!(v["kind"], "upper");
    assert_eq!(num(&v, "evaluations"), 20.0);
}

#[test]
fn raw_parameters_match_catalog() {
    let beta = format!("{}", (E - 1.0) / (E + 1.0));
    let e = format!("{E}");
    let raw = json(&["upper", "--p", &e, "--beta", &beta, "--q", &e, "--n", "10000", "--delta", "1e-6"]);
    let cat = json(&["upper", "--mechanism", "general-ldp", "--eps0", "1", "--n", "10000", "--delta", "1e-6"]);
    assert!((num(&raw, "eps") - num(&cat, "eps")).abs() <= num(&cat, "resolution"));
}

#[test]
fn closed_form_precondition_is_reported() {
    let o = vr(&["closed-form", "asymptotic", "--mechanism", "general-ldp", "--eps0", "1", "--n", "10", "--delta", "1e-6"]);
    assert_eq!(o.code, 0);
    assert!(o.stdout.contains("precondition failed: n >= 8log(2/delta)(p-1)q/(beta p)"), "{}", o.stdout);
    let v = json(&["closed-form", "analytic", "--mechanism", "general-ldp", "--eps0", "1", "--n", "100000", "--delta", "1e-6"]);
    assert!(num(&v, "eps") > 0.0);
}

#[test]
fn lower_matches_upper_for_local_hash() {
    let base = ["--mechanism", "local-hash", "--l", "3", "--eps0", "1.0986", "--n", "10000", "--delta", "1e-6"];
    let mut up = vec!["upper"];
    up.extend_from_slice(&base);
    let mut lo = vec!["lower"];
    lo.extend_from_slice(&base);
    let (u, l) = (json(&up), json(&lo));
    assert_eq!(l["kind"], "lower");
    assert!((num(&u, "eps") - num(&l, "eps")).abs() <= 2.0 * num(&u, "resolution"));
    lo.push("--tight-upper");
    assert_eq!(num(&json(&lo), "eps"), num(&u, "eps"));
}

#[test]
fn unsupported_regime_exit_code() {
    let o = vr(&["upper", "--mechanism", "balls-into-bins", "--d", "4", "--s", "2", "--n", "100", "--delta", "1e-6"]);
    assert_eq!(o.code, 3);
    assert!(o.stderr.starts_with("error[E_UNSUPPORTED_REGIME]"));
    assert!(o.stderr.contains("vr oracle"));
    assert_eq!(o.stderr.lines().count(), 1);
    // The oracle accepts the same parameters.
    let o = vr(&["oracle", "--mechanism", "balls-into-bins", "--d", "4", "--s", "2", "--n", "100", "--delta", "1e-6"]);
    assert_eq!(o.code, 0, "{}", o.stderr);
}

#[test]
fn usage_errors_exit_two() {
    for args in [
        &["params", "no-such-row"][..],
        &["upper", "--p", "2", "--beta", "0.3"],
        &["upper", "--mechanism", "general-ldp", "--eps0", "1", "--p", "2", "--beta", "0.1", "--q", "2", "--n", "10"],
        &["upper", "--mechanism", "general-ldp", "--eps0", "1", "--n", "10", "--delta", "2"],
        &["frobnicate"],
        &["upper", "--bogus-flag"],
    ] {
        let o = vr(args);
        assert_eq!(o.code, 2, "{args:?}: {}", o.stderr);
        assert_eq!(o.stderr.lines().count(), 1, "{args:?}");
        assert!(o.stderr.starts_with("error[E_"), "{}", o.stderr);
    }
}

#[test]
fn help_exits_zero() {
    let o = vr(&["--help"]);
    assert_eq!(o.code, 0);
    assert!(o.stdout.contains("upper"));
}

#[test]
fn oracle_agrees_with_fast_path() {
    let base = ["--mechanism", "general-ldp", "--eps0", "1", "--n", "50", "--delta", "1e-3"];
    let mut a = vec!["upper"];
    a.extend_from_slice(&base);
    let mut b = vec!["oracle"];
    b.extend_from_slice(&base);
    let (fast, slow) = (json(&a), json(&b));
    assert!((num(&fast, "eps") - num(&slow, "eps")).abs() <= 2.0 * num(&fast, "resolution"));
}

#[test]
fn oracle_edge_cases() {
    let v = json(&["oracle", "--p", "2", "--beta", "0", "--q", "2", "--n", "30", "--delta", "1e-3"]);
    assert_eq!(num(&v, "eps"), 0.0);
    let o = vr(&["oracle", "--mechanism", "general-ldp", "--eps0", "1", "--n", "3000", "--delta", "1e-3", "--max-n", "1000"]);
    assert_eq!(o.code, 3, "{}", o.stderr);
    assert!(o.stderr.starts_with("error[E_SIZE]"));
}

#[test]
fn compose_single_round_matches_upper() {
    let base = ["--mechanism", "general-ldp", "--eps0", "1", "--n", "10000", "--delta", "1e-6"];
    let mut c = vec!["compose", "--k", "1"];
    c.extend_from_slice(&base);
    let mut u = vec!["upper"];
    u.extend_from_slice(&base);
    let (comp, up) = (json(&c), json(&u));
    assert!((num(&comp, "eps") - num(&up, "eps")).abs() <= num(&comp, "mesh"));
}

#[test]
fn compose_full_gamma_equals_omitted() {
    let base = ["compose", "--mechanism", "general-ldp", "--eps0", "1", "--n", "1000", "--k", "2"];
    let plain = vr(&base);
    let mut with = base.to_vec();
    with.extend_from_slice(&["--gamma", "1"]);
    let gamma = vr(&with);
    assert_eq!(plain.code, 0);
    assert_eq!(plain.stdout, gamma.stdout);
    assert!(plain.stdout.lines().count() > 4);
}

#[test]
fn compose_generic_path_agrees() {
    let base = ["compose", "--mechanism", "general-ldp", "--eps0", "1", "--n", "1000", "--k", "4", "--delta", "1e-6"];
    let fast = json(&base);
    let mut g = base.to_vec();
    g.push("--generic");
    let slow = json(&g);
    assert!((num(&fast, "eps") - num(&slow, "eps")).abs() <= 1e-9);
}

fn sweep_rows(args: &[&str]) -> Vec<Vec<f64>> {
    let o = vr(args);
    assert_eq!(o.code, 0, "{}", o.stderr);
    let mut lines = o.stdout.lines();
    assert_eq!(
        lines.next().unwrap(),
        "param,eps_numeric,eps_analytic,eps_asymptotic,amplification_ratio,log2_ratio"
    );
    lines.map(|l| l.split(',').map(|x| x.parse().unwrap_or(f64::NAN)).collect()).collect()
}

#[test]
fn single_point_sweep_equals_upper() {
    let rows = sweep_rows(&[
        "sweep", "--mechanism", "general-ldp", "--eps0", "1", "--n", "10000", "--delta", "1e-6", "--vary", "eps0",
        "--range", "1:1:1",
    ]);
    assert_eq!(rows.len(), 1);
    let up = json(&["upper", "--mechanism", "general-ldp", "--eps0", "1", "--n", "10000", "--delta", "1e-6"]);
    assert_eq!(rows[0][1], num(&up, "eps"));
    assert!((rows[0][4] - 1.0 / num(&up, "eps")).abs() < 1e-9);
}

#[test]
fn sweep_amplification_ratio_shapes() {
    let common = ["--n", "10000", "--delta", "1e-6", "--vary", "eps0", "--range", "0.1:5:10"];
    let mut a = vec!["sweep", "--mechanism", "general-ldp", "--eps0", "1"];
    a.extend_from_slice(&common);
    let mut b = vec!["sweep", "--mechanism", "krr", "--d", "16", "--eps0", "1"];
    b.extend_from_slice(&common);
    let general = sweep_rows(&a);
    let krr = sweep_rows(&b);
    assert_eq!(general.len(), 10);
    for w in general.windows(2) {
        assert!(w[1][4] < w[0][4], "ratio not decreasing: {:?}", w);
    }
    for (g, k) in general.iter().zip(&krr) {
        assert!(k[4] > g[4], "krr {} vs general {}", k[4], g[4]);
        assert!((g[5] - g[4].log2()).abs() < 1e-12);
    }
}

#[test]
fn sweep_writes_file_deterministically() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("sweep.csv");
    let args = [
        "sweep", "--mechanism", "general-ldp", "--eps0", "1", "--vary", "n", "--range", "1000:100000:4", "--delta",
        "1e-6", "--out", path.to_str().unwrap(),
    ];
    let o = vr(&args);
    assert_eq!(o.code, 0, "{}", o.stderr);
    let first = std::fs::read_to_string(&path).unwrap();
    assert_eq!(first.lines().count(), 5);
    vr(&args);
    assert_eq!(std::fs::read_to_string(&path).unwrap(), first);
    let bad = vr(&["sweep", "--mechanism", "general-ldp", "--eps0", "1", "--vary", "n", "--range", "1000:2000:2", "--delta", "1e-6", "--out", "/nonexistent/dir/x.csv"]);
    assert_eq!(bad.code, 4);
    assert!(bad.stderr.starts_with("error[E_IO]"));
}

#[test]
fn json_output_is_byte_identical() {
    let args = ["--format", "json", "compose", "--mechanism", "krr", "--d", "8", "--eps0", "2", "--n", "5000", "--k", "3"];
    let a = vr(&args);
    let b = vr(&args);
    assert_eq!(a.code, 0);
    assert_eq!(a.stdout, b.stdout);
    let args = ["--threads", "2", "--format", "json", "upper", "--mechanism", "general-ldp", "--eps0", "1", "--n", "1000000"];
    assert_eq!(vr(&args).stdout, vr(&args).stdout);
}

#[test]
fn config_file_supplies_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cfg.json");
    std::fs::write(&path, r#"{"format": "json", "delta": 1e-6, "n": 10000}"#).unwrap();
    let o = vr(&["--config", path.to_str().unwrap(), "upper", "--mechanism", "general-ldp", "--eps0", "1"]);
    assert_eq!(o.code, 0, "{}", o.stderr);
    let v: Value = serde_json::from_str(&o.stdout).unwrap();
    assert_eq!(num(&v, "delta"), 1e-6);
    assert_eq!(num(&v, "n_blanket"), 9999.0);
    std::fs::write(&path, r#"{"colour": "blue"}"#).unwrap();
    let o = vr(&["--config", path.to_str().unwrap(), "params", "rr2", "--eps0", "1"]);
    assert_eq!(o.code, 2);
    let o = vr(&["--config", "/nonexistent/cfg.json", "params", "rr2", "--eps0", "1"]);
    assert_eq!(o.code, 4);
}

#[test]
fn multi_message_population_flag() {
    let v = json(&["params", "cheu", "--f", "0.25", "--d", "16", "--n", "10000", "--messages", "3"]);
    assert_eq!(num(&v, "n_blanket"), 20000.0);
}
