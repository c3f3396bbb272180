//! Implementations of the subcommands.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use ordlatent::baselines::{canonical_correlation, polychoric, sample_covariance, ContingencyTable};
use ordlatent::inference::{fisher_interval, BootstrapOptions, FisherOptions};
use ordlatent::simulate::{builtin_scenario, run_monte_carlo_with, sample_dataset, McOptions};
use ordlatent::{fit, parametric_bootstrap, FitOptions, OrdinalDataset};

use crate::error::{CliError, CliResult};
use crate::panel::{parse_panel, parse_table, write_panel, Layout, Panel};
use crate::report::*;

/// Whether the primary computation converged; outputs are written either way.
pub type Converged = bool;

fn read(path: &Path) -> CliResult<Vec<u8>> {
    fs::read(path).map_err(|e| CliError::io(path, e))
}

fn write(path: &Path, contents: &[u8]) -> CliResult<()> {
    fs::write(path, contents).map_err(|e| CliError::io(path, e))
}

/// Writes to `path`, or to standard output when absent.
fn emit(path: Option<&Path>, contents: &str) -> CliResult<()> {
    match path {
        Some(p) => write(p, contents.as_bytes()),
        None => std::io::stdout()
            .lock()
            .write_all(contents.as_bytes())
            .map_err(|e| CliError::io(Path::new("<stdout>"), e)),
    }
}

fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

fn input_info(path: &Path, panel: &Panel) -> InputInfo {
    InputInfo {
        path: path.display().to_string(),
        observations: panel.rows.len(),
        x_columns: panel.x_names.clone(),
        y_columns: panel.y_names.clone(),
    }
}

pub struct FitCommand<'a> {
    pub input: &'a Path,
    pub layout: Layout,
    pub shared_thresholds: bool,
    pub bootstrap: usize,
    pub level: f64,
    pub starts: usize,
    pub seed: u64,
    pub out: Option<&'a Path>,
    pub scores_out: Option<&'a Path>,
}

pub fn fit_command(cmd: &FitCommand) -> CliResult<Converged> {
    let panel = parse_panel(&read(cmd.input)?[..], &cmd.layout)?;
    let data = panel.dataset(cmd.shared_thresholds)?;
    let opts = FitOptions {
        seed: cmd.seed,
        n_starts: cmd.starts.max(1),
        ..FitOptions::default()
    };
    let fitted = fit(&data, &opts).map_err(|e| CliError::Fit(e.to_string()))?;

    let names = data.config().param_names();
    let estimates = fitted.params.to_natural();
    let std_errors = fitted.covariance.as_ref().map(|c| c.standard_errors());
    let boot = if cmd.bootstrap > 0 && fitted.converged {
        let bopts = BootstrapOptions {
            level: cmd.level,
            ..BootstrapOptions::default()
        };
        Some(
            parametric_bootstrap(&data, &fitted, cmd.bootstrap, cmd.seed, &bopts)
                .map_err(|e| CliError::Fit(e.to_string()))?,
        )
    } else {
        None
    };
    let parameters = names
        .iter()
        .enumerate()
        .map(|(k, name)| {
            let interval = boot.as_ref().and_then(|b| b.intervals[k]);
            ParameterRow {
                name: name.clone(),
                estimate: estimates[k],
                std_error: std_errors.as_ref().and_then(|s| finite(s[k])),
                bootstrap_bias: boot.as_ref().and_then(|b| finite(b.bias[k])),
                bca_lower: interval.map(|i| i.lower),
                bca_upper: interval.map(|i| i.upper),
            }
        })
        .collect();
    let rho = fitted.params.rho;
    let rho_summary = RhoSummary {
        estimate: rho,
        identified: fitted.rho_identified,
        fisher: fisher_interval(rho, data.n(), cmd.level, &FisherOptions::default()).ok(),
        bca: boot.as_ref().and_then(|b| *b.intervals.last().expect("rho column")),
    };
    let labels = panel.row_labels();
    let scores: Vec<ScoreRow> = labels
        .iter()
        .zip(&fitted.scores)
        .map(|(label, f)| ScoreRow {
            label: label.clone(),
            f_x: f.f_x,
            f_y: f.f_y,
        })
        .collect();
    let report = FitReport {
        provenance: Provenance::new("fit", cmd.seed),
        input: input_info(cmd.input, &panel),
        config: *data.config(),
        log_likelihood: fitted.log_likelihood,
        parameters,
        rho: rho_summary,
        convergence: Convergence {
            converged: fitted.converged,
            iterations: fitted.iterations,
            evaluations: fitted.evaluations,
            gradient_norm: fitted.gradient_norm,
            multimodal: fitted.multimodal,
            starts: fitted.starts.clone(),
            covariance_error: fitted.covariance_error.clone(),
        },
        bootstrap: boot.as_ref().map(|b| BootstrapSummary {
            replicates: b.b,
            failed: b.failed_replicates,
            unreliable: b.unreliable,
            level: cmd.level,
        }),
        scores,
    };
    if let Some(path) = cmd.scores_out {
        let mut csv = String::from("label,f_x,f_y\n");
        for s in &report.scores {
            csv.push_str(&format!("{},{:?},{:?}\n", s.label, s.f_x, s.f_y));
        }
        write(path, csv.as_bytes())?;
    }
    emit(cmd.out, &to_json(&report))?;
    Ok(fitted.converged)
}

pub fn simulate_command(scenario: &str, rho: f64, n: usize, seed: u64, out: Option<&Path>) -> CliResult<()> {
    let sc = builtin_scenario(scenario, rho).map_err(|e| CliError::Input(e.to_string()))?;
    let data = sample_dataset(&sc.params, &sc.config, n, seed).map_err(|e| CliError::Input(e.to_string()))?;
    let mut buf = Vec::new();
    write_panel(&mut buf, &Panel::from_dataset(&data)).expect("writing to memory");
    emit(out, std::str::from_utf8(&buf).expect("CSV is UTF-8"))
}

pub struct McCommand<'a> {
    pub scenario: &'a str,
    pub rho: f64,
    pub reps: usize,
    pub n: Option<usize>,
    pub level: f64,
    pub seed: u64,
    pub out: &'a Path,
}

/// Runs the Monte Carlo study; "converged" means the report is not suspect.
pub fn mc_command(cmd: &McCommand) -> CliResult<Converged> {
    let mut sc = builtin_scenario(cmd.scenario, cmd.rho).map_err(|e| CliError::Input(e.to_string()))?;
    sc.n_reps = cmd.reps;
    if let Some(n) = cmd.n {
        sc.n = n;
    }
    let opts = McOptions {
        level: cmd.level,
        ..McOptions::default()
    };
    let report = run_monte_carlo_with(&sc, cmd.seed, &opts).map_err(|e| CliError::Input(e.to_string()))?;
    fs::create_dir_all(cmd.out).map_err(|e| CliError::io(cmd.out, e))?;

    let summary = McSummary {
        provenance: Provenance::new("mc", cmd.seed),
        scenario: sc.name.clone(),
        rho: cmd.rho,
        n: sc.n,
        replicates: sc.n_reps,
        level: cmd.level,
        coverage: finite(report.coverage),
        failures: report.failures,
        suspect: report.suspect,
        bias: report.bias.clone(),
        rho_hat: report.rho_hat.clone(),
        failed_replicates: report
            .replicates
            .iter()
            .filter_map(|r| {
                r.error.as_ref().map(|e| FailedReplicate {
                    replicate: r.replicate,
                    error: e.clone(),
                })
            })
            .collect(),
    };
    let mut boxplot = String::from("parameter,truth,n,min,whisker_low,q1,median,q3,whisker_high,max,mean\n");
    for b in &report.bias {
        let s = &b.bias;
        boxplot.push_str(&format!(
            "{},{:?},{},{:?},{:?},{:?},{:?},{:?},{:?},{:?},{:?}\n",
            b.parameter, b.truth, s.n, s.min, s.whisker_low, s.q1, s.median, s.q3, s.whisker_high, s.max, s.mean
        ));
    }
    let path = |name: &str| -> PathBuf { cmd.out.join(name) };
    write(&path("replicates.csv"), report.replicates_csv().as_bytes())?;
    write(&path("boxplot.csv"), boxplot.as_bytes())?;
    write(&path("summary.json"), to_json(&summary).as_bytes())?;
    Ok(!report.suspect && !report.rho_hat.is_empty())
}

fn pair_table(data: &OrdinalDataset, x: usize, y: usize) -> ordlatent::Result<ContingencyTable> {
    let one_based = |var: usize| -> Vec<u8> { data.column(var).iter().map(|c| c + 1).collect() };
    let q = data.config().q;
    ContingencyTable::from_codes(&one_based(x), &one_based(data.config().p_x + y), q, q)
}

pub fn baselines_command(input: &Path, layout: &Layout, table: bool, seed: u64, out: Option<&Path>) -> CliResult<()> {
    let bytes = read(input)?;
    if table {
        let t = parse_table(&bytes[..])?;
        let result = polychoric(&t).map_err(|e| CliError::Fit(e.to_string()))?;
        let report = TableBaselines {
            provenance: Provenance::new("baselines", seed),
            path: input.display().to_string(),
            polychoric: result,
        };
        return emit(out, &to_json(&report));
    }
    let panel = parse_panel(&bytes[..], layout)?;
    let data = panel.dataset(true)?;
    let mut matrix = vec![vec![None; panel.y_names.len()]; panel.x_names.len()];
    let mut pairs = Vec::new();
    for (x, x_name) in panel.x_names.iter().enumerate() {
        for (y, y_name) in panel.y_names.iter().enumerate() {
            let result = pair_table(&data, x, y).and_then(|t| polychoric(&t));
            let row = match result {
                Ok(r) => {
                    matrix[x][y] = Some(r.rho);
                    PairRow {
                        x: x_name.clone(),
                        y: y_name.clone(),
                        rho: Some(r.rho),
                        boundary: r.boundary,
                        converged: r.converged,
                        error: None,
                    }
                }
                Err(e) => PairRow {
                    x: x_name.clone(),
                    y: y_name.clone(),
                    rho: None,
                    boundary: false,
                    converged: false,
                    error: Some(e.to_string()),
                },
            };
            pairs.push(row);
        }
    }
    let scores: Vec<Vec<f64>> = panel.rows.iter().map(|r| r.iter().map(|&c| c as f64).collect()).collect();
    let canonical = sample_covariance(&scores).and_then(|s| canonical_correlation(&s, panel.x_names.len()));
    let report = PanelBaselines {
        provenance: Provenance::new("baselines", seed),
        input: input_info(input, &panel),
        polychoric: matrix,
        pairs,
        canonical_error: canonical.as_ref().err().map(|e| e.to_string()),
        canonical: canonical.ok(),
    };
    emit(out, &to_json(&report))
}
