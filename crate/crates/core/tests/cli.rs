//! Command-line integration: artifact schemas, config-file precedence, and
//! the exit-code contract.

use std::path::Path;
use std::process::Command;

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_qmdp")
}

fn run(args: &[&str]) -> std::process::Output {
    Command::new(bin()).args(args).output().expect("spawn qmdp")
}

#[test]
fn build_then_solve_roundtrip() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().to_str().unwrap();
    let built = run(&[
        "build", "--model", "case_study", "--bins", "4", "--net", "-1,0,1", "--method", "exact",
        "--out", out,
    ]);
    assert!(built.status.success());
    let model_path = tmp.path().join("finite_model.json");
    let finite = qmdp::io::read_finite_model(&model_path).unwrap();
    assert_eq!((finite.num_states, finite.num_actions), (4, 3));

    let solved = run(&[
        "solve", "--route", "shifted", "--in", model_path.to_str().unwrap(), "--out", out,
    ]);
    assert!(solved.status.success());
    let sol = qmdp::io::read_acoe_solution(tmp.path().join("acoe.json")).unwrap();
    assert!(sol.residual <= 1e-9);
    assert_eq!(sol.policy.len(), 4);
    assert_eq!(sol.route, "shifted_kernel");

    // the artifact embeds the resolved configuration
    let text = std::fs::read_to_string(tmp.path().join("acoe.json")).unwrap();
    assert!(text.contains("\"solver.route\": \"shifted\""));
    assert!(text.contains("generated_at"));
}

#[test]
fn single_bin_build_works() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().to_str().unwrap();
    let built = run(&[
        "build", "--model", "case_study", "--bins", "1", "--net", "-1,0,1", "--out", out,
    ]);
    assert!(built.status.success());
    let finite = qmdp::io::read_finite_model(tmp.path().join("finite_model.json")).unwrap();
    assert_eq!((finite.num_states, finite.num_actions), (1, 3));
}

#[test]
fn curves_have_expected_headers() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().to_str().unwrap();
    assert!(run(&[
        "train-sync", "--bins", "3", "--net", "-1,0,1", "--sweeps", "500", "--snapshot-every",
        "100", "--seed", "4", "--out", out,
    ])
    .status
    .success());
    let curve = std::fs::read_to_string(tmp.path().join("curve.csv")).unwrap();
    assert!(curve.starts_with("sweep,span_to_ref,span_successive,gain_estimate\n"));
    // without a reference the span_to_ref and gain columns stay empty
    let second_line = curve.lines().nth(1).unwrap();
    assert!(second_line.split(',').nth(1).unwrap().is_empty());

    assert!(run(&[
        "train-async", "--steps", "2000", "--delta", "0.02", "--x0", "0.4", "--bins", "4",
        "--net", "-1,0,1", "--snapshot-every", "500", "--seed", "4", "--log-trajectory", "--out",
        out,
    ])
    .status
    .success());
    let curve = std::fs::read_to_string(tmp.path().join("curve.csv")).unwrap();
    assert!(curve.starts_with("t,gain_estimate,sup_to_ref,visits_min\n"));
    let trajectory = std::fs::read_to_string(tmp.path().join("trajectory.csv")).unwrap();
    assert!(trajectory.starts_with("t,x,bin,action_index,cost,x_next\n"));
    assert_eq!(trajectory.lines().count(), 2001);
}

#[test]
fn sweep_emits_bound_column_with_constants() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().to_str().unwrap();
    assert!(run(&[
        "sweep", "--model", "case_study", "--bins-list", "3,5", "--nets", "-1,0,1",
        "--horizon", "5000", "--burn-in", "100", "--rollouts", "2", "--x0", "0.5",
        "--Kc", "0.7", "--Kf", "0.9", "--out", out,
    ])
    .status
    .success());
    let sweep = std::fs::read_to_string(tmp.path().join("sweep.csv")).unwrap();
    let mut lines = sweep.lines();
    assert_eq!(
        lines.next().unwrap(),
        "M,net_id,L_X,mean_cost,stderr,gain_finite_model,bound_theorem7"
    );
    for line in lines {
        let bound: f64 = line.split(',').nth(6).unwrap().parse().unwrap();
        let m: f64 = line.split(',').next().unwrap().parse().unwrap();
        assert!((bound - 70.0 / m).abs() < 1e-9);
    }
}

#[test]
fn bounds_prints_value_and_writes_report() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().to_str().unwrap();
    let result = run(&[
        "bounds", "--theorem", "7", "--Kc", "0.7", "--Kf", "0.9", "--Lx", "0.1", "--mu", "0.1",
        "--out", out,
    ]);
    assert!(result.status.success());
    assert_eq!(String::from_utf8_lossy(&result.stdout).trim(), "14.0");
    let report = std::fs::read_to_string(tmp.path().join("bound_report.json")).unwrap();
    assert!(report.contains("\"theorem\": \"7\""));
    assert!(report.contains("\"bound\": 14.0"));
}

#[test]
fn config_file_supplies_defaults_and_flags_override() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg_path = tmp.path().join("exp.ini");
    std::fs::write(
        &cfg_path,
        "[model]\nname = case_study\n[quantization]\nbins = 5\nnet = -1,0,1\n\
         [build]\nmethod = exact\n[output]\ndir = from_file\n",
    )
    .unwrap();
    let out_dir = tmp.path().join("flag_wins");
    let result = Command::new(bin())
        .current_dir(tmp.path())
        .args([
            "build",
            "--config",
            cfg_path.to_str().unwrap(),
            "--bins",
            "2",
            "--out",
            out_dir.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert!(result.status.success());
    // the flag value (2 bins) wins over the file value (5)
    let finite = qmdp::io::read_finite_model(out_dir.join("finite_model.json")).unwrap();
    assert_eq!(finite.num_states, 2);
    assert!(!Path::new(&tmp.path().join("from_file")).exists());
}

#[test]
fn exit_codes_follow_the_error_taxonomy() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().to_str().unwrap();

    // 2: configuration problems
    let bad_model = run(&["build", "--model", "unknown", "--out", out]);
    assert_eq!(bad_model.status.code(), Some(2));
    let report = std::fs::read_to_string(tmp.path().join("error.json")).unwrap();
    assert!(report.contains("\"exit_code\": 2"));

    // 3: refused assumption checks
    let bad_kf = run(&[
        "bounds", "--theorem", "6", "--Kc", "0.7", "--Kf", "1.1", "--Lx", "0.1", "--out", out,
    ]);
    assert_eq!(bad_kf.status.code(), Some(3));
    let delta_too_big = run(&[
        "train-async", "--steps", "100", "--delta", "0.03", "--x0", "0.5", "--bins", "4",
        "--net", "-1,0,1", "--out", out,
    ]);
    assert_eq!(delta_too_big.status.code(), Some(3));

    // 4: numerical failure (iteration budget exhausted)
    assert!(run(&[
        "build", "--model", "case_study", "--bins", "3", "--net", "-1,0,1", "--out", out,
    ])
    .status
    .success());
    let exhausted = run(&[
        "solve",
        "--route",
        "shifted",
        "--in",
        tmp.path().join("finite_model.json").to_str().unwrap(),
        "--max-iters",
        "1",
        "--out",
        out,
    ]);
    assert_eq!(exhausted.status.code(), Some(4));

    // unknown flags are rejected by the parser
    let unknown = run(&["build", "--model", "case_study", "--frobnicate", "--out", out]);
    assert!(!unknown.status.success());
}

#[test]
fn synthetic_finite_inline_model_runs_end_to_end() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().to_str().unwrap();
    assert!(run(&[
        "build", "--model", "synthetic_finite",
        "--cost", "0.1,0.9;0.4,0.2",
        "--kernel", "0.6,0.4;0.3,0.7;0.5,0.5;0.2,0.8",
        "--floor", "0.1,0.2",
        "--out", out,
    ])
    .status
    .success());
    let finite = qmdp::io::read_finite_model(tmp.path().join("finite_model.json")).unwrap();
    assert_eq!((finite.num_states, finite.num_actions), (2, 2));
    assert_eq!(finite.floor, vec![0.1, 0.2]);
    assert!(run(&[
        "solve", "--route", "span",
        "--in", tmp.path().join("finite_model.json").to_str().unwrap(),
        "--out", out,
    ])
    .status
    .success());
    let sol = qmdp::io::read_acoe_solution(tmp.path().join("acoe.json")).unwrap();
    assert_eq!(sol.route, "span_rvi");
}

#[test]
fn help_lists_every_subcommand() {
    let help = run(&["--help"]);
    assert!(help.status.success());
    let text = String::from_utf8_lossy(&help.stdout);
    for sub in ["build", "solve", "train-sync", "train-async", "eval", "bounds", "sweep"] {
        assert!(text.contains(sub), "help missing {sub}");
    }
}
