use std::fs;
use std::path::Path;
use std::process::Command;

use mirror_msa::solver::read_trace_csv;
use mirror_msa_cli::experiments::TriangleRow;
use mirror_msa_cli::output::{read_rows_file, read_summary, read_trace_file, read_trajectory_file, PlotRow};
use mirror_msa_cli::{run_experiment, Experiment, ExperimentConfig, PartialConfig, Window};

fn config(experiment: Experiment, dir: &Path) -> ExperimentConfig {
    ExperimentConfig {
        output_dir: dir.to_owned(),
        ..ExperimentConfig::defaults(experiment)
    }
}

fn binary() -> Command {
    Command::new(env!("CARGO_BIN_EXE_mirror-msa"))
}

fn exit_code(cmd: &mut Command) -> i32 {
    cmd.env("RUST_LOG", "off").output().unwrap().status.code().unwrap()
}

#[test]
fn lq_artifacts_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = config(Experiment::Lq, dir.path());
    c.nt = 100;
    c.max_iters = 60;
    c.geometric_window = Window::new(10, 50).unwrap();
    let summary = run_experiment(&c).unwrap();
    assert!(summary.passed, "{summary:#?}");
    assert_eq!(summary.config, c);

    let back = read_summary(&dir.path().join("summary.json")).unwrap();
    assert_eq!(back, summary);

    let trace = read_trace_file(&dir.path().join("trace_tau1.csv")).unwrap();
    assert_eq!(trace.len(), 61);
    let run = &summary.runs[0];
    assert_eq!(trace.last().unwrap().cost, run.final_cost.unwrap());
    assert!(trace.iter().all(|r| r.cost_error.is_some()));

    let plot: Vec<PlotRow> = read_rows_file(&dir.path().join("plot_tau1.csv")).unwrap();
    assert_eq!(plot.len(), trace.len());
    for (p, t) in plot.iter().zip(&trace) {
        assert_eq!(p.error, t.cost_error.unwrap());
    }

    let control = read_trajectory_file(&dir.path().join("control_tau1.csv")).unwrap();
    assert_eq!(control.grid().steps(), 100);
    let mut rewritten = Vec::new();
    control.write_csv(&mut rewritten).unwrap();
    assert_eq!(rewritten, fs::read(dir.path().join("control_tau1.csv")).unwrap());
}

#[test]
fn summary_echoes_the_resolved_config() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = config(Experiment::Quartic, dir.path());
    c.nt = 10;
    c.max_iters = 400;
    c.tail_window = Window::new(100, 400).unwrap();
    let summary = run_experiment(&c).unwrap();
    let text = fs::read_to_string(dir.path().join("summary.json")).unwrap();
    let json: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(json["config"], serde_json::to_value(&c).unwrap());
    let echoed: ExperimentConfig = serde_json::from_value(json["config"].clone()).unwrap();
    assert_eq!(serde_json::to_string(&echoed).unwrap(), serde_json::to_string(&c).unwrap());
    assert_eq!(summary.runs.len(), 2);
    assert!(summary.checks.iter().any(|k| k.name == "recursion_agreement_tau0" && k.passed));
}

#[test]
fn highdim_is_deterministic_and_order_independent() {
    let base = |dims: Vec<usize>, dir: &Path| ExperimentConfig {
        dims,
        nt: 100,
        max_iters: 80,
        geometric_window: Window::new(5, 40).unwrap(),
        ..config(Experiment::Highdim, dir)
    };
    let (a, b, c) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    run_experiment(&base(vec![3, 4], a.path())).unwrap();
    run_experiment(&base(vec![3, 4], b.path())).unwrap();
    let permuted = run_experiment(&base(vec![4, 3], c.path())).unwrap();
    assert_eq!(permuted.runs[0].dim, 4);
    for name in ["trace_d3.csv", "trace_d4.csv", "plot_d3.csv", "plot_d4.csv"] {
        let first = fs::read(a.path().join(name)).unwrap();
        assert_eq!(first, fs::read(b.path().join(name)).unwrap(), "{name} differs between reruns");
        assert_eq!(first, fs::read(c.path().join(name)).unwrap(), "{name} depends on dims order");
    }
    let rows = read_trace_csv(fs::File::open(a.path().join("trace_d3.csv")).unwrap()).unwrap();
    assert_eq!(rows.len(), 81);
    assert!(rows.iter().all(|r| r.cost_error.is_none()));
}

#[test]
fn custom_experiment_with_box_and_quartic_map() {
    let dir = tempfile::tempdir().unwrap();
    let text = r#"{"experiment":"custom","nt":100,"max_iters":50,"tau":0.5,
        "custom":{"mirror":"quartic","mirror_eps":0.5,"control_box":[-1.5,1.5]}}"#;
    let mut c = PartialConfig::from_json(text).unwrap().resolve().unwrap();
    c.output_dir = dir.path().to_owned();
    let summary = run_experiment(&c).unwrap();
    assert!(summary.passed, "{summary:#?}");
    let control = read_trajectory_file(&dir.path().join("control_tau0.5.csv")).unwrap();
    assert!(control.values().iter().all(|v| v[0].abs() <= 1.5));
    // No closed form with a box: the trace carries surrogate gaps only.
    let trace = read_trace_file(&dir.path().join("trace_tau0.5.csv")).unwrap();
    assert!(trace[0].cost_error.is_none());
}

#[test]
fn custom_unconstrained_quadratic_uses_the_riccati_oracle() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = config(Experiment::Custom, dir.path());
    c.nt = 200;
    c.custom.a = -0.5;
    c.custom.q = 2.0;
    let summary = run_experiment(&c).unwrap();
    assert!(summary.passed, "{summary:#?}");
    let trace = read_trace_file(&dir.path().join("trace_tau1.csv")).unwrap();
    let (first, last) = (trace[0].cost_error.unwrap(), trace.last().unwrap().cost_error.unwrap());
    assert!(last < 1e-6 * first, "{first} -> {last}");
}

#[test]
fn gradcheck_writes_triangle_rows() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = config(Experiment::Gradcheck, dir.path());
    c.max_iters = 20;
    let summary = run_experiment(&c).unwrap();
    assert!(summary.passed, "{summary:#?}");
    let rows: Vec<TriangleRow> = read_rows_file(&dir.path().join("triangle.csv")).unwrap();
    assert_eq!(rows.len(), 40);
    assert_eq!(rows.iter().filter(|r| r.problem == "quartic").count(), 20);
}

#[test]
fn binary_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let small = ["--max-iters", "20"];

    let bad_config = dir.path().join("bad.json");
    fs::write(&bad_config, r#"{"experiment":"lq","colour":"blue"}"#).unwrap();
    assert_eq!(exit_code(binary().args(["run", "--config"]).arg(&bad_config)), 2);
    assert_eq!(exit_code(binary().args(["lq", "--lambda", "0", "--out"]).arg(&out)), 2);
    assert_eq!(exit_code(binary().args(["lq", "--tau", "0", "--out"]).arg(&out)), 2);
    assert_eq!(exit_code(binary().args(["run", "--out"]).arg(&out)), 2);
    assert_eq!(exit_code(binary().args(["lq", "--nt", "many"])), 2);
    assert_eq!(exit_code(binary().args(["highdim", "--dims", "", "--out"]).arg(&out)), 2);

    // A deliberately biased adjoint gradient must fail the triangle check.
    let biased = dir.path().join("biased.json");
    fs::write(&biased, r#"{"experiment":"gradcheck","gradient_bias":1e-3}"#).unwrap();
    let code = exit_code(binary().args(["run", "--config"]).arg(&biased).args(small).arg("--out").arg(&out));
    assert_eq!(code, 1);
    let summary = read_summary(&out.join("summary.json")).unwrap();
    let failed: Vec<_> = summary.checks.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect();
    assert_eq!(failed, ["triangle_adjoint_vs_fd", "triangle_adjoint_vs_sensitivity"]);

    assert_eq!(exit_code(binary().arg("gradcheck").args(small).arg("--out").arg(&out)), 0);
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("lq.json");
    fs::write(&file, r#"{"experiment":"lq","tau":0.25,"lambda":40,"nt":80,"max_iters":40,"geometric_window":[5,30]}"#).unwrap();
    let out = dir.path().join("out");
    let code = exit_code(binary().args(["lq", "--tau", "0.5", "--config"]).arg(&file).arg("--out").arg(&out));
    assert_eq!(code, 0);
    let summary = read_summary(&out.join("summary.json")).unwrap();
    assert_eq!((summary.config.tau, summary.config.lambda, summary.config.nt), (0.5, 40.0, 80));
    assert_eq!(summary.config.output_dir, out);

    // The subcommand and the file must agree on the experiment.
    assert_eq!(exit_code(binary().args(["quartic", "--config"]).arg(&file)), 2);
}
