use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use ordlatent::baselines::{polychoric, ContingencyTable};
use ordlatent_cli::report::{FitReport, McSummary, PanelBaselines, TableBaselines};

fn ordlatent(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ordlatent"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str], dir: &Path) -> Output {
    let out = ordlatent(args, dir);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn simulate(dir: &Path, name: &str, rho: &str, n: &str) {
    ok(&["simulate", "--scenario", "S1", "--rho", rho, "--n", n, "--out", name], dir);
}

#[test]
fn simulate_writes_a_reproducible_panel() {
    let dir = tempfile::tempdir().unwrap();
    simulate(dir.path(), "a.csv", "0.5", "30");
    simulate(dir.path(), "b.csv", "0.5", "30");
    let a = fs::read_to_string(dir.path().join("a.csv")).unwrap();
    assert_eq!(a, fs::read_to_string(dir.path().join("b.csv")).unwrap());
    let lines: Vec<&str> = a.lines().collect();
    assert_eq!(lines.len(), 31);
    assert!(lines[0].starts_with("id,X:X1"));
    for line in &lines[1..] {
        let cells: Vec<usize> = line.split(',').skip(1).map(|c| c.parse().unwrap()).collect();
        assert_eq!(cells.len(), 10);
        assert!(cells.iter().all(|c| (1..=5).contains(c)));
    }
    let other = ordlatent(&["simulate", "--seed", "9"], dir.path());
    assert_ne!(String::from_utf8(other.stdout).unwrap(), a);
    assert_eq!(ordlatent(&["simulate", "--n", "0"], dir.path()).status.code(), Some(3));
    assert_eq!(ordlatent(&["simulate", "--scenario", "S7"], dir.path()).status.code(), Some(3));
}

#[test]
fn fit_reports_are_deterministic_and_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    simulate(dir.path(), "panel.csv", "-0.5", "30");
    ok(&["fit", "panel.csv", "--out", "one.json", "--scores-out", "scores.csv"], dir.path());
    ok(&["fit", "panel.csv", "--out", "two.json", "--threads", "1"], dir.path());
    let one = fs::read_to_string(dir.path().join("one.json")).unwrap();
    assert_eq!(one, fs::read_to_string(dir.path().join("two.json")).unwrap());

    let report: FitReport = serde_json::from_str(&one).unwrap();
    assert_eq!(ordlatent_cli::report::to_json(&report), one);
    assert_eq!(report.provenance.seed, ordlatent_cli::DEFAULT_SEED);
    assert_eq!(report.provenance.version, env!("CARGO_PKG_VERSION"));
    assert!(report.convergence.converged);
    assert_eq!(report.parameters.len(), 4 + 10 + 1);
    assert_eq!(report.parameters.last().unwrap().estimate, report.rho.estimate);
    let fisher = report.rho.fisher.unwrap();
    assert!(fisher.lower < report.rho.estimate && report.rho.estimate < fisher.upper);

    let scores = fs::read_to_string(dir.path().join("scores.csv")).unwrap();
    let rows: Vec<&str> = scores.lines().skip(1).collect();
    assert_eq!(rows.len(), 30);
    let first: Vec<f64> = rows[0].split(',').skip(1).map(|v| v.parse().unwrap()).collect();
    assert_eq!(first, [report.scores[0].f_x, report.scores[0].f_y]);
}

#[test]
fn fit_with_bootstrap_adds_intervals() {
    let dir = tempfile::tempdir().unwrap();
    simulate(dir.path(), "panel.csv", "0.5", "30");
    ok(&["fit", "panel.csv", "--bootstrap", "10", "--seed", "3", "--out", "a.json"], dir.path());
    ok(&["fit", "panel.csv", "--bootstrap", "10", "--seed", "3", "--out", "b.json"], dir.path());
    let a = fs::read_to_string(dir.path().join("a.json")).unwrap();
    assert_eq!(a, fs::read_to_string(dir.path().join("b.json")).unwrap());
    let report: FitReport = serde_json::from_str(&a).unwrap();
    let boot = report.bootstrap.unwrap();
    assert_eq!(boot.replicates, 10);
    let rho = report.parameters.last().unwrap();
    assert!(rho.bootstrap_bias.is_some());
    assert!(report.rho.bca.is_some() == rho.bca_lower.is_some());
}

#[test]
fn fit_errors_map_to_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("range.csv"), "date,X:a,Y:b\n2001,1,2\n2002,3,6\n").unwrap();
    let out = ordlatent(&["fit", "range.csv", "--q", "5"], dir.path());
    assert_eq!(out.status.code(), Some(3));
    let msg = String::from_utf8(out.stderr).unwrap();
    assert!(msg.contains("row 2, column 3 (Y:b): category 6 outside 1..=5"), "{msg}");

    fs::write(dir.path().join("text.csv"), "X:a,Y:b\n1,two\n").unwrap();
    assert_eq!(ordlatent(&["fit", "text.csv"], dir.path()).status.code(), Some(3));

    let constant: String = std::iter::once("X:a,X:b,Y:c,Y:d".to_string())
        .chain((0..12).map(|i| format!("2,2,{},{}", 1 + i % 3, 1 + (i / 3) % 3)))
        .collect::<Vec<_>>()
        .join("\n");
    fs::write(dir.path().join("constant.csv"), constant).unwrap();
    let out = ordlatent(&["fit", "constant.csv"], dir.path());
    assert_eq!(out.status.code(), Some(4));
    assert!(String::from_utf8(out.stderr).unwrap().contains("unidentified"));

    assert_eq!(ordlatent(&["fit", "absent.csv"], dir.path()).status.code(), Some(5));
    assert_eq!(ordlatent(&["fit", "range.csv", "--threads", "0"], dir.path()).status.code(), Some(3));
    assert_eq!(ordlatent(&["fit"], dir.path()).status.code(), Some(2));
}

#[test]
fn per_variable_thresholds_flag() {
    let dir = tempfile::tempdir().unwrap();
    simulate(dir.path(), "panel.csv", "0.0", "200");
    let out = ordlatent(&["fit", "panel.csv", "--per-variable-thresholds"], dir.path());
    let report: FitReport = serde_json::from_slice(&out.stdout).unwrap();
    assert!(!report.config.shared_thresholds);
    assert_eq!(report.parameters.len(), 10 * 4 + 10 + 1);
}

#[test]
fn mc_minimal_run_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    ok(&["mc", "--reps", "1", "--out", "a"], dir.path());
    ok(&["mc", "--reps", "1", "--out", "b", "--threads", "1"], dir.path());
    for file in ["replicates.csv", "boxplot.csv", "summary.json"] {
        let a = fs::read(dir.path().join("a").join(file)).unwrap();
        assert_eq!(a, fs::read(dir.path().join("b").join(file)).unwrap(), "{file}");
    }
    let summary: McSummary =
        serde_json::from_slice(&fs::read(dir.path().join("a/summary.json")).unwrap()).unwrap();
    assert_eq!(summary.replicates, 1);
    assert_eq!(summary.rho_hat.len() + summary.failures, 1);
    assert_eq!(summary.bias.len(), 15);
    let csv = fs::read_to_string(dir.path().join("a/replicates.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 15 * summary.rho_hat.len());
}

#[test]
fn baselines_table_mode_delegates_to_polychoric() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("t.csv"), "# counts\n10,5,1\n5,10,5\n1,5,10\n").unwrap();
    let out = ok(&["baselines", "--table", "t.csv"], dir.path());
    let report: TableBaselines = serde_json::from_slice(&out.stdout).unwrap();
    let direct = polychoric(&ContingencyTable::new(vec![vec![10, 5, 1], vec![5, 10, 5], vec![1, 5, 10]]).unwrap()).unwrap();
    assert_eq!(report.polychoric, direct);

    // outer product of margins
    let rows = [2u64, 5, 3];
    let cols = [4u64, 1, 3, 2];
    let table: String = rows
        .iter()
        .map(|r| cols.iter().map(|c| (r * c).to_string()).collect::<Vec<_>>().join(",") + "\n")
        .collect();
    fs::write(dir.path().join("ind.csv"), table).unwrap();
    let out = ok(&["baselines", "--table", "ind.csv"], dir.path());
    let report: TableBaselines = serde_json::from_slice(&out.stdout).unwrap();
    assert!(report.polychoric.rho.abs() < 0.02);
}

#[test]
fn baselines_matrix_transposes_with_blocks() {
    let dir = tempfile::tempdir().unwrap();
    simulate(dir.path(), "panel.csv", "0.5", "60");
    let text = fs::read_to_string(dir.path().join("panel.csv")).unwrap();
    // move the Y block in front and relabel the prefixes
    let swapped: String = text
        .lines()
        .map(|line| {
            let cells: Vec<&str> = line.split(',').collect();
            let mut out = vec![cells[0].to_string()];
            out.extend(cells[6..].iter().map(|c| c.replace("Y:", "X:")));
            out.extend(cells[1..6].iter().map(|c| c.replace("X:", "Y:")));
            out.join(",") + "\n"
        })
        .collect();
    fs::write(dir.path().join("swapped.csv"), swapped).unwrap();
    let a: PanelBaselines = serde_json::from_slice(&ok(&["baselines", "panel.csv"], dir.path()).stdout).unwrap();
    let b: PanelBaselines = serde_json::from_slice(&ok(&["baselines", "swapped.csv"], dir.path()).stdout).unwrap();
    assert_eq!(a.polychoric.len(), 5);
    for i in 0..5 {
        for j in 0..5 {
            let (x, y) = (a.polychoric[i][j], b.polychoric[j][i]);
            match (x, y) {
                (Some(x), Some(y)) => assert!((x - y).abs() < 1e-6, "({i}, {j}): {x} vs {y}"),
                (None, None) => {}
                _ => panic!("pair ({i}, {j}) degenerate in one orientation only"),
            }
        }
    }
    let (ca, cb) = (a.canonical.unwrap(), b.canonical.unwrap());
    assert!((ca.rho_c - cb.rho_c).abs() < 1e-10);
}
