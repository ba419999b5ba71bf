use std::process::Command;

use random_machines::bench::{
    read_reports, run_experiment, win_proportions, DataSource, ExperimentPlan, Method, Metric,
};
use random_machines::data::{SimConfig, SimKind};
use random_machines::KernelKind;

const BIN: &str = env!("CARGO_BIN_EXE_random-machines");

fn plan(reps: usize, seed: u64) -> ExperimentPlan {
    let mut p = ExperimentPlan::new(
        DataSource::Generator(SimConfig { which: SimKind::Sim2, n: 40, p: 2, ratio: 0.5, seed }),
        vec![
            Method::Single(KernelKind::Linear),
            Method::Single(KernelKind::Gaussian),
            Method::Single(KernelKind::Polynomial),
        ],
    );
    p.repetitions = reps;
    p.seed = seed;
    p
}

#[test]
fn win_matrix_matches_hand_count() {
    let reports = vec![run_experiment(&plan(2, 1)).unwrap(), run_experiment(&plan(2, 2)).unwrap()];
    let m = win_proportions(&reports, Metric::Accuracy).unwrap();
    assert_eq!(m.cells, 4);
    for (i, a) in m.methods.iter().enumerate() {
        for (j, b) in m.methods.iter().enumerate() {
            let mut wins = 0;
            for r in &reports {
                for rep in 0..2 {
                    let acc = |m: &Method| r.rows.iter().find(|x| x.method == *m && x.repetition == rep).unwrap().accuracy;
                    if acc(a) > acc(b) {
                        wins += 1;
                    }
                }
            }
            let expected = if i == j { 0.0 } else { wins as f64 / 4.0 };
            assert_eq!(m.values[i][j], expected);
            assert!(m.values[i][j] + m.values[j][i] <= 1.0);
        }
    }
}

fn run_cli(args: &[&str]) -> std::process::Output {
    Command::new(BIN).args(args).output().unwrap()
}

#[test]
fn identical_cli_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    for format in ["csv", "json"] {
        let mut outputs = Vec::new();
        for k in 0..2 {
            let out = dir.path().join(format!("r{k}.{format}"));
            let o = run_cli(&[
                "run", "--dataset", "sim1", "--n", "60", "--reps", "2", "--b", "5",
                "--methods", "rm,bsvm:laplacian,svm:linear", "--format", format,
                "--out", out.to_str().unwrap(),
            ]);
            assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
            outputs.push(std::fs::read(&out).unwrap());
        }
        assert_eq!(outputs[0], outputs[1]);
    }
}

#[test]
fn cli_wins_reads_json_reports() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("r.json");
    let o = run_cli(&[
        "run", "--n", "40", "--reps", "2", "--methods", "svm:linear,svm:gaussian",
        "--format", "json", "--out", report.to_str().unwrap(),
    ]);
    assert!(o.status.success());
    assert_eq!(read_reports(&report).unwrap()[0].rows.len(), 4);
    let o = run_cli(&["wins", report.to_str().unwrap(), "--metric", "mcc"]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("method,svm:linear,svm:gaussian"));
}

#[test]
fn cli_exit_codes() {
    assert_eq!(run_cli(&["run", "--methods", "nope"]).status.code(), Some(1));
    assert_eq!(run_cli(&["run", "--reps", "0"]).status.code(), Some(1));
    assert_eq!(run_cli(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(run_cli(&["agreement", "--methods", "svm:linear"]).status.code(), Some(1));
    assert_eq!(run_cli(&["--help"]).status.code(), Some(0));

    // a single-class CSV cannot be split or fitted
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("one.csv");
    let rows: String = (0..20).map(|i| format!("{i},{},yes\n", i * 2)).collect();
    std::fs::write(&csv, format!("a,b,y\n{rows}")).unwrap();
    let o = run_cli(&["run", "--dataset", "csv", "--csv", csv.to_str().unwrap(), "--label", "y", "--positive", "yes"]);
    assert_ne!(o.status.code(), Some(0));
}

#[test]
fn cli_runs_on_csv_data() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("d.csv");
    let rows: String = (0..40)
        .map(|i| {
            let x = i as f64 / 4.0;
            format!("{x},{},{}\n", (i % 3) as f64, if i < 20 { "b" } else { "g" })
        })
        .collect();
    std::fs::write(&csv, format!("x,k,class\n{rows}")).unwrap();
    let sidecar = dir.path().join("d.json");
    std::fs::write(&sidecar, r#"{"discrete_columns": ["k"], "positive_label": "g"}"#).unwrap();
    let o = run_cli(&[
        "run", "--dataset", "csv", "--csv", csv.to_str().unwrap(), "--label", "class",
        "--sidecar", sidecar.to_str().unwrap(), "--reps", "2", "--b", "5", "--methods", "rm,svm:linear",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = String::from_utf8(o.stdout).unwrap();
    assert_eq!(text.lines().filter(|l| l.starts_with("1,")).count(), 4);
    // agreement needs a generator
    let o = run_cli(&[
        "agreement", "--dataset", "csv", "--csv", csv.to_str().unwrap(), "--label", "class", "--positive", "g",
    ]);
    assert_eq!(o.status.code(), Some(1));
}
