use std::process::Command as Process;

use saddle_es_cli::{main_with, EXIT_CENSORED, EXIT_CHECK_FAILED, EXIT_CONFIG, EXIT_OK, EXIT_UNDERFLOW};
use serde_json::Value;

struct Outcome {
    code: i32,
    stdout: String,
    stderr: String,
}

fn cli(args: &[&str]) -> Outcome {
    cli_env(args, None)
}

fn cli_env(args: &[&str], env_seed: Option<&str>) -> Outcome {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let argv = std::iter::once("saddle-es").chain(args.iter().copied());
    let code = main_with(argv, env_seed, &mut out, &mut err);
    Outcome {
        code,
        stdout: String::from_utf8(out).unwrap(),
        stderr: String::from_utf8(err).unwrap(),
    }
}

fn json(o: &Outcome) -> Value {
    serde_json::from_str(&o.stdout).unwrap_or_else(|e| panic!("{e}: {}", o.stdout))
}

#[test]
fn run_examples() {
    let o = cli(&["run", "--a=-1,1", "--b=1", "--m0=0,1", "--sigma0=1", "--alpha=1.5", "--budget=100000", "--seed=42"]);
    assert_eq!(o.code, EXIT_OK, "{}", o.stderr);
    let v = json(&o);
    assert_eq!(v["schema"], 1);
    assert_eq!(v["reason"], "target_reached");
    assert_eq!(v["final_region"], "negative");
    assert!(v["generator"].as_str().unwrap().contains("ChaCha8"));

    let o = cli(&["run", "--a=-1,1", "--m0=0,1"]);
    assert_eq!(o.code, EXIT_CONFIG);
    assert!(o.stderr.contains("--b"));

    let o = cli(&["run", "--a=-1,1", "--b=1", "--m0=0,1", "--alpha=1.0"]);
    assert_eq!(o.code, EXIT_CONFIG);
    assert!(o.stderr.contains("alpha"));
}

#[test]
fn run_exit_codes_for_censor_and_underflow() {
    // One iteration cannot reach the negative region from far inside D+.
    let o = cli(&["run", "--a=-1,1", "--b=1", "--m0=0,100", "--sigma0=1e-3", "--budget=1"]);
    assert_eq!(o.code, EXIT_CENSORED, "{}", o.stderr);
    assert_eq!(json(&o)["reason"], "budget");

    // Success rate ~6e-4 at this step size: eight rejections in a row are all but certain.
    let o = cli(&["run", "--a=-1,1000000", "--b=1", "--m0=0,1", "--sigma0=1000", "--sigma-min=444", "--budget=1000", "--seed=3"]);
    assert_eq!(o.code, EXIT_UNDERFLOW, "{}", o.stderr);
    assert_eq!(json(&o)["reason"], "sigma_underflow");
}

#[test]
fn run_writes_trace_csv() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("trace.csv");
    let summary = dir.path().join("summary.json");
    let o = cli(&[
        "run", "--a=-1,20", "--b=1", "--m0=0,1", "--sigma0=1e-3", "--record-every=1",
        "--trace-out", trace.to_str().unwrap(), "--out", summary.to_str().unwrap(),
    ]);
    assert_eq!(o.code, EXIT_OK, "{}", o.stderr);
    assert!(o.stdout.is_empty());
    let text = std::fs::read_to_string(&trace).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("t,m_1,m_2,sigma,f,accepted"));
    let rows: Vec<Vec<f64>> = lines.map(|l| l.split(',').map(|x| x.parse().unwrap()).collect()).collect();
    let v: Value = serde_json::from_str(&std::fs::read_to_string(&summary).unwrap()).unwrap();
    assert_eq!(rows.len() as u64, v["iterations"].as_u64().unwrap() + 1);
    for w in rows.windows(2) {
        assert!(w[1][4] <= w[0][4]);
        assert_eq!(w[1][0], w[0][0] + 1.0);
    }
}

#[test]
fn drift_map_default_grid_and_reproducibility() {
    let args = ["drift-map", "--a=-1,20", "--b=1", "--n=1000", "--seed=9"];
    let a = cli(&args);
    assert_eq!(a.code, EXIT_OK, "{}", a.stderr);
    let lines: Vec<&str> = a.stdout.lines().collect();
    assert_eq!(lines[0], "w,sigma_tilde,mean,stderr,ci_low,ci_high,n");
    assert_eq!(lines.len(), 1 + 11 * 36);
    assert!(!a.stdout.contains('\r'));

    let b = cli(&args);
    assert_eq!(a.stdout, b.stdout);
    let mut threaded = args.to_vec();
    threaded.push("--threads=1");
    assert_eq!(a.stdout, cli(&threaded).stdout);
    threaded.pop();
    threaded.push("--threads=3");
    assert_eq!(a.stdout, cli(&threaded).stdout);
}

#[test]
fn drift_map_check_positive() {
    let o = cli(&["drift-map", "--a=-1,20", "--b=1", "--n=20000", "--quantity=W", "--check-positive"]);
    assert_eq!(o.code, EXIT_OK, "{}", o.stderr);
    // V-drift is negative for large sigma~.
    let o = cli(&["drift-map", "--a=-1,20", "--b=1", "--n=2000", "--quantity=V", "--check-positive"]);
    assert_eq!(o.code, EXIT_CHECK_FAILED);
    assert!(o.stderr.contains("ci_low <= 0"));
    let o = cli(&["drift-map", "--a=-1,20", "--b=1", "--quantity=X"]);
    assert_eq!(o.code, EXIT_CONFIG);
}

#[test]
fn drift_map_phi_is_beta_v_plus_w() {
    let base = ["drift-map", "--a=-1,20", "--b=1", "--n=1000", "--w-grid=0,0.5", "--sigma-grid=0.01,1"];
    let col = |q: &str, extra: &[&str]| -> Vec<f64> {
        let mut args = base.to_vec();
        args.push(q);
        args.extend_from_slice(extra);
        let o = cli(&args);
        assert_eq!(o.code, EXIT_OK, "{}", o.stderr);
        o.stdout.lines().skip(1).map(|l| l.split(',').nth(2).unwrap().parse().unwrap()).collect()
    };
    let v = col("--quantity=V", &[]);
    let w = col("--quantity=W", &[]);
    let phi = col("--quantity=Phi", &["--beta=0.3"]);
    assert_eq!(v.len(), 4);
    for i in 0..4 {
        assert!((phi[i] - (0.3 * v[i] + w[i])).abs() < 1e-12);
    }
}

#[test]
fn constants_report_and_failure_path() {
    let o = cli(&["constants", "--a=-1,20", "--b=1", "--alpha=2", "--n=20000", "--seed=1"]);
    assert_eq!(o.code, EXIT_OK, "{}", o.stderr);
    let v = json(&o);
    assert!((v["B1"].as_f64().unwrap() + 0.173287).abs() < 1e-6);
    assert!(v["C"].as_f64().unwrap() > 0.0);
    assert!(v["theta"].as_f64().unwrap() > 0.0);
    assert_eq!(v["sigma_tilde_40_by_w"].as_array().unwrap().len(), 11);

    // Too few samples to bound the W-drift away from zero on a badly conditioned saddle.
    let o = cli(&["constants", "--a=-1,1000000", "--b=1", "--n=1000"]);
    assert_eq!(o.code, EXIT_CHECK_FAILED);
    assert!(o.stderr.contains("not positive"), "{}", o.stderr);

    let o = cli(&["constants", "--a=-1,20", "--b=1", "--sigma-grid=log:1e-4:1:5"]);
    assert_eq!(o.code, EXIT_CONFIG);
}

#[test]
fn escape_examples() {
    let o = cli(&["escape", "--a=-1,1", "--b=1"]);
    assert_eq!(o.code, EXIT_OK, "{}", o.stderr);
    let v = json(&o);
    assert_eq!(v["runs"][0]["escape_fraction"], 1.0);
    assert_eq!(v["runs"][0]["underflows"], 0);
    assert_eq!(v["budget_source"], "heuristic");
    assert_eq!(v["params"]["max_iters"], 100000);

    let o = cli(&["escape", "--a=-1,1", "--b=1", "--budget=1"]);
    assert_eq!(o.code, EXIT_CENSORED);
    assert!(json(&o)["runs"][0]["censored_fraction"].as_f64().unwrap() > 0.0);
}

#[test]
fn escape_sweep_and_survival_csv() {
    let dir = tempfile::tempdir().unwrap();
    let surv = dir.path().join("s.csv");
    let o = cli(&["escape", "--a=-1,20", "--b=1", "--w=0.5", "--trials=200", "--sweep", "--survival-out", surv.to_str().unwrap()]);
    assert_eq!(o.code, EXIT_OK, "{}", o.stderr);
    let v = json(&o);
    let runs = v["runs"].as_array().unwrap();
    let sigmas: Vec<f64> = runs.iter().map(|r| r["sigma_tilde0"].as_f64().unwrap()).collect();
    assert_eq!(sigmas, vec![1e-3, 1e-1, 1.0, 10.0]);
    let text = std::fs::read_to_string(&surv).unwrap();
    assert!(text.starts_with("sigma_tilde0,t,S\n"));

    let plain = dir.path().join("p.csv");
    let o = cli(&["escape", "--a=-1,20", "--b=1", "--trials=50", "--survival-out", plain.to_str().unwrap()]);
    assert_eq!(o.code, EXIT_OK);
    let text = std::fs::read_to_string(&plain).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("t,S"));
    let s: Vec<f64> = lines.map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    assert!(s.windows(2).all(|w| w[1] <= w[0]));
    assert_eq!(*s.last().unwrap(), 0.0);

    assert_eq!(cli(&["escape", "--a=-1,1", "--b=1", "--sweep", "--sigma-tilde0=1"]).code, EXIT_CONFIG);
    assert_eq!(cli(&["escape", "--a=-1,1", "--b=1", "--m0=1,0"]).code, EXIT_CONFIG);
}

#[test]
fn pairing_example() {
    let o = cli(&["pairing", "--a=-1,20", "--b=1", "--w=0.9", "--radii=0.1,1,10", "--n=20000"]);
    assert_eq!(o.code, EXIT_OK, "{}", o.stderr);
    let v = json(&o);
    assert_eq!(v["violations"], 0);
    assert_eq!(v["checks"].as_array().unwrap().len(), 3);
}

#[test]
fn succ_prob_at_saddle() {
    let o = cli(&["succ-prob", "--a=-4,1", "--b=1", "--m0=0,0", "--sigma0=2", "--n=100000"]);
    assert_eq!(o.code, EXIT_OK, "{}", o.stderr);
    let v = json(&o);
    let exact = v["saddle_analytic"].as_f64().unwrap();
    assert!((exact - 0.70483).abs() < 1e-5);
    let p = &v["p_succ"];
    assert!((p["mean"].as_f64().unwrap() - exact).abs() < 4.0 * p["stderr"].as_f64().unwrap());

    let o = cli(&["succ-prob", "--a=-1,20", "--b=1", "--w=0.5", "--sigma-tilde0=1e-4", "--n=10000"]);
    assert_eq!(o.code, EXIT_OK, "{}", o.stderr);
    assert!(json(&o)["saddle_analytic"].is_null());
}

#[test]
fn levels_grid() {
    let o = cli(&["levels", "--a=-1,1", "--b=1", "--x1-grid=-1:1:3", "--x2-grid=-1:1:3"]);
    assert_eq!(o.code, EXIT_OK, "{}", o.stderr);
    let lines: Vec<&str> = o.stdout.lines().collect();
    assert_eq!(lines[0], "x1,x2,f,region");
    assert_eq!(lines.len(), 10);
    assert!(lines.contains(&"-1.0,0.0,-1.0,negative"));
    assert!(lines.contains(&"0.0,0.0,0.0,zero"));
    assert_eq!(cli(&["levels", "--a=-1,1,1", "--b=1"]).code, EXIT_CONFIG);
}

#[test]
fn config_file_and_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.json");
    std::fs::write(&path, r#"{"command": "run", "a": [-1, 1], "b": 1, "m0": [0, 1], "alpha": 3.0, "seed": 4}"#).unwrap();
    let p = path.to_str().unwrap();

    let o = cli(&["run", "--config", p]);
    assert_eq!(o.code, EXIT_OK, "{}", o.stderr);
    let v = json(&o);
    assert_eq!(v["params"]["alpha"], 3.0);
    assert_eq!(v["seed"], 4);

    let v = json(&cli(&["run", "--config", p, "--alpha=2", "--seed=5"]));
    assert_eq!(v["params"]["alpha"], 2.0);
    assert_eq!(v["seed"], 5);

    // File seed beats the environment; the environment beats the built-in default.
    assert_eq!(json(&cli_env(&["run", "--config", p], Some("77")))["seed"], 4);
    assert_eq!(json(&cli_env(&["run", "--a=-1,1", "--b=1", "--m0=0,1"], Some("77")))["seed"], 77);
    assert_eq!(cli_env(&["run", "--a=-1,1", "--b=1", "--m0=0,1"], Some("x")).code, EXIT_CONFIG);

    assert_eq!(cli(&["escape", "--config", p]).code, EXIT_CONFIG);
    std::fs::write(&path, r#"{"a": [-1, 1], "b": 1, "m0": [0, 1], "colour": 1}"#).unwrap();
    let o = cli(&["run", "--config", p]);
    assert_eq!(o.code, EXIT_CONFIG);
    assert!(o.stderr.contains("colour"));
    assert_eq!(cli(&["run", "--config", "/nonexistent/c.json"]).code, EXIT_CONFIG);
}

#[test]
fn bad_invocations() {
    assert_eq!(cli(&[]).code, EXIT_CONFIG);
    assert_eq!(cli(&["frobnicate"]).code, EXIT_CONFIG);
    assert_eq!(cli(&["run", "--a=-1,x", "--b=1"]).code, EXIT_CONFIG);
    assert_eq!(cli(&["run", "--a=-1,1", "--b=1", "--m0=0,1", "--threads=0"]).code, EXIT_CONFIG);
    assert_eq!(cli(&["run", "--a=1,1", "--b=1", "--m0=0,1"]).code, EXIT_CONFIG);
    assert_eq!(cli(&["run", "--a=-1,1", "--b=1", "--m0=0,1,2"]).code, EXIT_CONFIG);
    assert_eq!(cli(&["--help"]).code, EXIT_OK);
}

#[test]
fn binary_exit_codes() {
    let bin = env!("CARGO_BIN_EXE_saddle-es");
    let status = |args: &[&str]| Process::new(bin).args(args).env_remove("SADDLE_ES_SEED").output().unwrap();
    let out = status(&["run", "--a=-1,1", "--b=1", "--m0=0,1", "--seed=42"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8(out.stdout).unwrap().contains("\"schema\": 1"));
    assert_eq!(status(&["run", "--a=-1,1", "--m0=0,1"]).status.code(), Some(1));
    assert_eq!(status(&["escape", "--a=-1,1", "--b=1", "--budget=1", "--trials=20"]).status.code(), Some(2));

    let with_env = Process::new(bin)
        .args(["succ-prob", "--a=-1,1", "--b=1", "--n=100"])
        .env("SADDLE_ES_SEED", "31")
        .output()
        .unwrap();
    assert!(String::from_utf8(with_env.stdout).unwrap().contains("\"seed\": 31"));
}
