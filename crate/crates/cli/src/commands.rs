use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use corrsens::estimators::{
    default_n_subsets, run_analysis, subset_averages, AnalysisOptions, Method, SensitivityReport,
};
use corrsens::models::{additive_inputs, ishigami_inputs, ModelEvaluator, ModelKind};
use corrsens::nataf::{NatafModel, MAX_ABS_RHO_Z};
use corrsens::sampling::{format_f64, RngSpec};
use corrsens::surrogate::fit;
use log::{info, warn};
use serde::Deserialize;

use crate::config::{Format, ProblemConfig};
use crate::error::CliError;
use crate::output::{ensure_dir, write_atomic};

/// Stream label for draws made by `analyze`.
pub const ANALYZE_STREAM: &str = "analyze";

pub fn analyze(config_path: &Path, out: Option<PathBuf>) -> Result<SensitivityReport, CliError> {
    let config = ProblemConfig::load(config_path)?;
    let nataf = config.nataf()?;
    let model = config.model()?;
    let options = AnalysisOptions {
        methods: config.analysis.methods.clone(),
        n_subsets: config.analysis.n_subsets,
        basis: config.analysis.basis,
    };
    let rng = RngSpec::new(config.analysis.seed, ANALYZE_STREAM);
    let analysis = run_analysis(&model, &nataf, config.analysis.n, &rng, &options)?;
    let report = &analysis.report;

    let dir = out.unwrap_or_else(|| config.output.directory.clone());
    ensure_dir(&dir)?;
    if config.output.formats.contains(&Format::Csv) {
        write_atomic(&dir.join("report.csv"), &report.to_csv())?;
    }
    if config.output.formats.contains(&Format::Json) {
        write_atomic(&dir.join("report.json"), &report.to_json())?;
    }
    write_atomic(&dir.join("config.json"), &config.to_json())?;

    let k = report
        .n_subsets
        .unwrap_or_else(|| default_n_subsets(report.n));
    for (j, name) in nataf.names().iter().enumerate() {
        let x = analysis.a.column(j);
        let bins = subset_averages(x, &analysis.y_a, k)?;
        let means = bins.mean_per_row();
        let mut csv = String::from("x,y,subset_mean\n");
        for &r in &bins.order {
            writeln!(
                csv,
                "{},{},{}",
                format_f64(x[r]),
                format_f64(analysis.y_a[r]),
                format_f64(means[r])
            )
            .unwrap();
        }
        write_atomic(&dir.join(format!("scatter_{name}.csv")), &csv)?;
    }

    if options.uses(Method::Regression) {
        let az = nataf.to_standard_normal(&analysis.a)?;
        let mut surrogate = fit(&az, &analysis.y_a, options.basis)?;
        surrogate.seed = Some(config.analysis.seed);
        write_atomic(&dir.join("surrogate.json"), &surrogate.to_json())?;
    }

    for v in &report.variables {
        for flag in &v.noise_flags {
            warn!(
                "{}: {flag} lies outside the range expected from sampling noise",
                v.name
            );
        }
    }
    info!("wrote results to {}", dir.display());
    Ok(analysis.report)
}

const NEAR_UNIT: f64 = 0.999;

/// Correlation matrices of the problem with the residual of every pair after
/// mapping the normal-space value back through the marginals.
pub fn nataf_report(config_path: &Path) -> Result<String, CliError> {
    let config = ProblemConfig::load(config_path)?;
    let nataf = config.nataf()?;
    let (given, space) = config.correlation_matrix();
    let m = nataf.dim();
    let names = nataf.names();
    let mut out = String::new();
    writeln!(out, "rho_x:").unwrap();
    write_matrix(&mut out, names, nataf.rho_x());
    writeln!(out, "rho_z:").unwrap();
    write_matrix(&mut out, names, nataf.rho_z());
    writeln!(out, "pairs ({space:?} correlations given):").unwrap();
    writeln!(out, "  pair,rho_x,rho_z,residual").unwrap();
    for i in 0..m {
        for j in (i + 1)..m {
            let rz = nataf.rho_z()[(i, j)];
            let rx = corrsens::nataf::rho_x_from_rho_z(
                &nataf.marginals()[i],
                &nataf.marginals()[j],
                rz,
            )?;
            let target = match space {
                corrsens::sampling::Space::Original => given[(i, j)],
                corrsens::sampling::Space::StandardNormal => nataf.rho_x()[(i, j)],
            };
            writeln!(
                out,
                "  {}-{},{:.6},{:.6},{:.3e}",
                names[i],
                names[j],
                nataf.rho_x()[(i, j)],
                rz,
                rx - target
            )
            .unwrap();
            if rz.abs() > NEAR_UNIT {
                writeln!(
                    out,
                    "  note: |rho_z| for {}-{} is close to the admissible limit {MAX_ABS_RHO_Z}; \
                     decomposition coefficients are poorly conditioned",
                    names[i], names[j]
                )
                .unwrap();
            }
        }
    }
    Ok(out)
}

fn write_matrix(out: &mut String, names: &[String], a: &nalgebra::DMatrix<f64>) {
    write!(out, "  {:>8}", "").unwrap();
    for n in names {
        write!(out, " {n:>10}").unwrap();
    }
    out.push('\n');
    for (i, n) in names.iter().enumerate() {
        write!(out, "  {n:>8}").unwrap();
        for j in 0..names.len() {
            write!(out, " {:>10.6}", a[(i, j)]).unwrap();
        }
        out.push('\n');
    }
}

const TABLES: &str = include_str!("../fixtures/reference_tables.json");
const QUANTITIES: [&str; 4] = [
    "S_first_corr",
    "S_total_corr",
    "S_first_uncorr",
    "S_total_uncorr",
];

#[derive(Debug, Deserialize)]
struct Tables {
    tables: std::collections::BTreeMap<String, Table>,
}

#[derive(Debug, Deserialize)]
struct Table {
    title: String,
    model: ModelKind,
    inputs: String,
    cases: Vec<Case>,
}

#[derive(Debug, Deserialize)]
struct Case {
    label: String,
    correlations: Vec<(usize, usize, f64)>,
    tolerance: f64,
    rows: Vec<Row>,
}

#[derive(Debug, Deserialize)]
struct Row {
    variable: String,
    subset: Option<f64>,
    matrix_combination: std::collections::BTreeMap<String, f64>,
    #[serde(default)]
    analytical: Option<std::collections::BTreeMap<String, f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Reproduction {
    pub csv: String,
    pub checks: usize,
    pub failures: Vec<String>,
}

/// Recomputes one reference table with matrix combination and subset
/// averaging. Matrix-combination entries are compared against the analytical
/// value when one exists and against the published estimate otherwise;
/// subset entries are listed without a tolerance.
pub fn reproduce(table: &str, n: usize, seed: u64) -> Result<Reproduction, CliError> {
    let tables: Tables = serde_json::from_str(TABLES).expect("embedded tables parse");
    let spec = tables.tables.get(table).ok_or_else(|| {
        let known: Vec<&str> = tables.tables.keys().map(String::as_str).collect();
        CliError::config(
            "table",
            format!("unknown table {table:?}, expected one of {known:?}"),
        )
    })?;
    info!("reproducing {table}: {}", spec.title);
    let model = ModelEvaluator::new(spec.model.clone(), 3)?;
    let rng = RngSpec::new(seed, table);
    let options = AnalysisOptions::default();

    let mut csv =
        String::from("case,variable,quantity,paper_value,computed,abs_diff,tolerance,status\n");
    let mut checks = 0;
    let mut failures = Vec::new();
    for case in &spec.cases {
        let nataf = case_inputs(&spec.inputs, case)?;
        let report = run_analysis(&model, &nataf, n, &rng, &options)?.report;
        // rows are listed in input order
        for (row, v) in case.rows.iter().zip(&report.variables) {
            let computed = [
                v.s_first_corr,
                v.s_total_corr,
                v.s_first_uncorr,
                v.s_total_uncorr,
            ];
            for (q, c) in QUANTITIES.iter().zip(computed) {
                let reference = row
                    .analytical
                    .as_ref()
                    .and_then(|a| a.get(*q))
                    .or_else(|| row.matrix_combination.get(*q));
                let (Some(&expected), Some(c)) = (reference, c) else {
                    continue;
                };
                let diff = (c - expected).abs();
                let ok = diff <= case.tolerance;
                checks += 1;
                if !ok {
                    failures.push(format!(
                        "{} {} {q}: computed {c:.4}, expected {expected:.4} +/- {}",
                        case.label, row.variable, case.tolerance
                    ));
                }
                writeln!(
                    csv,
                    "{},{},{q},{expected},{c:.6},{diff:.6},{},{}",
                    case.label,
                    row.variable,
                    case.tolerance,
                    if ok { "pass" } else { "fail" }
                )
                .unwrap();
            }
            if let (Some(published), Some(c)) = (row.subset, v.s_subset) {
                writeln!(
                    csv,
                    "{},{},S_subset,{published},{c:.6},{:.6},,info",
                    case.label,
                    row.variable,
                    (c - published).abs()
                )
                .unwrap();
            }
        }
    }
    Ok(Reproduction {
        csv,
        checks,
        failures,
    })
}

fn case_inputs(inputs: &str, case: &Case) -> Result<NatafModel, CliError> {
    match inputs {
        "additive" => {
            let rho = case
                .correlations
                .iter()
                .find(|&&(i, j, _)| (i, j) == (1, 2))
                .map_or(0.0, |c| c.2);
            Ok(additive_inputs(rho)?)
        }
        "ishigami" => Ok(ishigami_inputs(&case.correlations)?),
        other => Err(CliError::Config(format!("unknown input preset {other:?}"))),
    }
}
