//! Command-line front end: `fit`, `compare`, `tariff` and `bm`.
//!
//! Reports go to stdout, diagnostics to stderr. Exit status is 0 on success,
//! 2 when a fit fails to converge and 1 for every other error.

pub mod report;

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::bonusmalus::{simulate_trajectory, BonusMalusTable, TrajectoryYear};
use crate::design::{
    bundled_portfolio, encode_design, load_portfolio, parse_formula, FactorSchema, ModelFormula,
    PortfolioDataset,
};
use crate::error::Error;
use crate::family::FamilySpec;
use crate::fitter::{fit, wald_statistics, FitControls, FitResult, WaldRow};
use crate::inference::{
    chi_square_quantile, compare_nested, goodness_of_fit, Decision, TestReport,
};
use crate::tariff::{build_tariff_table, RatingModel};
use report::{fixed, p_value, significance_stars, ReportDocument};

pub const DEFAULT_ALPHA: f64 = 0.05;

#[derive(Debug, Parser)]
#[command(name = "ratemaking", version, about = "Poisson GLM ratemaking toolkit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit a model and print its coefficient table, deviances and AIC
    Fit(FitArgs),
    /// Compare two nested models by the change in scaled deviance
    Compare(CompareArgs),
    /// Build a tariff (rate, years to one claim, relativity per cell)
    Tariff(TariffArgs),
    /// Bonus-Malus ladder simulations
    #[command(subcommand)]
    Bm(BmCommand),
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Portfolio CSV (factor columns, `claims`, optional `exposure`); the bundled portfolio when omitted
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long, default_value = "poisson")]
    pub family: String,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// e.g. "claims ~ region + type + offset(log(exposure))"
    #[arg(long)]
    pub formula: String,
    #[arg(long, default_value_t = DEFAULT_ALPHA)]
    pub alpha: f64,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub reduced: String,
    #[arg(long)]
    pub full: String,
    #[arg(long, default_value_t = DEFAULT_ALPHA)]
    pub alpha: f64,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TariffFormat {
    Csv,
    Json,
}

#[derive(Debug, Args)]
pub struct TariffArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub formula: String,
    #[arg(long)]
    pub output: PathBuf,
    /// Defaults to json for a `.json` output path, csv otherwise
    #[arg(long, value_enum)]
    pub format: Option<TariffFormat>,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Subcommand)]
pub enum BmCommand {
    /// Year-by-year steps and premiums for a claim history
    Simulate(SimulateArgs),
    /// Long-run step distribution under Poisson claim counts
    Steady(SteadyArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long, default_value_t = 2)]
    pub start: usize,
    /// Claims per year, comma separated
    #[arg(long, value_delimiter = ',')]
    pub claims: Vec<u32>,
    #[arg(long, default_value_t = 100.0)]
    pub base: f64,
    /// JSON file replacing the built-in ladder
    #[arg(long)]
    pub table: Option<PathBuf>,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct SteadyArgs {
    /// Mean annual claims per policyholder
    #[arg(long)]
    pub lambda: f64,
    #[arg(long, default_value_t = 100.0)]
    pub base: f64,
    #[arg(long)]
    pub table: Option<PathBuf>,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = if matches!(e, Error::NonConvergence { .. }) {
            2
        } else {
            1
        };
        CliError {
            code,
            message: e.to_string(),
        }
    }
}

fn usage(message: String) -> CliError {
    CliError { code: 1, message }
}

/// What a command produced: the report text and any diagnostics.
#[derive(Debug, Default, Clone, PartialEq)]
pub struct Output {
    pub stdout: String,
    pub warnings: Vec<String>,
}

pub fn run(cli: Cli) -> Result<Output, CliError> {
    match cli.command {
        Command::Fit(a) => cmd_fit(&a),
        Command::Compare(a) => cmd_compare(&a),
        Command::Tariff(a) => cmd_tariff(&a),
        Command::Bm(BmCommand::Simulate(a)) => cmd_bm_simulate(&a),
        Command::Bm(BmCommand::Steady(a)) => cmd_bm_steady(&a),
    }
}

fn load_data(
    path: Option<&Path>,
    warnings: &mut Vec<String>,
) -> Result<PortfolioDataset, CliError> {
    let Some(path) = path else {
        return Ok(bundled_portfolio());
    };
    let bytes =
        fs::read(path).map_err(|e| usage(format!("cannot read {}: {e}", path.display())))?;
    let schema = FactorSchema::infer(&bytes)?;
    let data = load_portfolio(bytes.as_slice(), &schema)?;
    if data.exposure_defaulted() {
        warnings.push(format!(
            "{} has no exposure column; every exposure set to 1.0",
            path.display()
        ));
    }
    Ok(data)
}

fn check_alpha(alpha: f64) -> Result<(), CliError> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(usage(format!("--alpha {alpha} must lie in (0, 1)")))
    }
}

struct Fitted {
    formula: ModelFormula,
    fit: FitResult,
}

fn fit_formula(data: &PortfolioDataset, text: &str, family: &str) -> Result<Fitted, CliError> {
    let family = FamilySpec::by_name(family)?;
    let formula = parse_formula(text)?.with_family(family);
    let design = encode_design(data, &formula)?;
    let fit = fit(&design, &formula.family, &FitControls::default())?;
    Ok(Fitted { formula, fit })
}

#[derive(Debug, Serialize)]
struct TestJson<'a> {
    statistic: f64,
    df: u32,
    p_value: f64,
    alpha: f64,
    decision: Decision,
    hypothesis: &'a str,
}

impl<'a> From<&'a TestReport> for TestJson<'a> {
    fn from(r: &'a TestReport) -> Self {
        TestJson {
            statistic: r.statistic,
            df: r.df,
            p_value: r.p_value,
            alpha: r.alpha,
            decision: r.decision,
            hypothesis: &r.narrative,
        }
    }
}

#[derive(Debug, Serialize)]
struct FitJson<'a> {
    formula: String,
    family: &'a str,
    n_obs: usize,
    n_params: usize,
    coefficients: Vec<WaldRow>,
    null_deviance: f64,
    df_null: usize,
    deviance: f64,
    scaled_deviance: f64,
    df_residual: usize,
    log_likelihood: f64,
    aic: f64,
    iterations: usize,
    converged: bool,
    goodness_of_fit: Option<TestJson<'a>>,
}

fn fit_json<'a>(f: &'a Fitted, gof: Option<&'a TestReport>) -> FitJson<'a> {
    FitJson {
        formula: f.formula.to_string(),
        family: f.fit.family.name,
        n_obs: f.fit.n_obs(),
        n_params: f.fit.n_params(),
        coefficients: wald_statistics(&f.fit),
        null_deviance: f.fit.null_deviance,
        df_null: f.fit.df_null,
        deviance: f.fit.deviance,
        scaled_deviance: f.fit.scaled_deviance,
        df_residual: f.fit.df_residual,
        log_likelihood: f.fit.log_likelihood,
        aic: f.fit.aic,
        iterations: f.fit.n_iterations,
        converged: f.fit.converged,
        goodness_of_fit: gof.map(TestJson::from),
    }
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report serializes");
    s.push('\n');
    s
}

fn p_clause(p: f64) -> String {
    let s = p_value(p);
    if s.starts_with('<') {
        s
    } else {
        format!("= {s}")
    }
}

fn verdict(report: &TestReport) -> &'static str {
    match report.decision {
        Decision::Reject => "reject H0",
        Decision::FailToReject => "no evidence to reject H0",
    }
}

fn coefficient_rows(fit: &FitResult) -> Vec<Vec<String>> {
    wald_statistics(fit)
        .into_iter()
        .map(|r| {
            vec![
                r.label,
                fixed(r.estimate, 5),
                fixed(r.std_error, 5),
                fixed(r.z_value, 3),
                p_value(r.p_value),
                significance_stars(r.p_value).to_string(),
            ]
        })
        .collect()
}

pub fn cmd_fit(args: &FitArgs) -> Result<Output, CliError> {
    check_alpha(args.alpha)?;
    let mut out = Output::default();
    let data = load_data(args.data.data.as_deref(), &mut out.warnings)?;
    let fitted = fit_formula(&data, &args.formula, &args.data.family)?;
    let f = &fitted.fit;
    let gof = match f.df_residual {
        0 => None,
        _ => Some(goodness_of_fit(&f.summary(), args.alpha)?),
    };

    if args.json {
        out.stdout = to_json(&fit_json(&fitted, gof.as_ref()));
        return Ok(out);
    }

    let mut doc = ReportDocument::default();
    doc.text(
        "Model",
        [
            format!("formula: {}", fitted.formula),
            format!("family: {} (canonical link)", f.family.name),
            format!("observations: {}", f.n_obs()),
            format!("IRLS iterations: {}", f.n_iterations),
        ],
    );
    doc.table(
        "Coefficients",
        &["", "Estimate", "Std. Error", "z value", "Pr(>|z|)", ""],
        coefficient_rows(f),
    );
    let mut lines = vec![
        format!(
            "Null deviance: {} on {} degrees of freedom",
            fixed(f.null_deviance, 3),
            f.df_null
        ),
        format!(
            "Residual deviance: {} on {} degrees of freedom",
            fixed(f.deviance, 3),
            f.df_residual
        ),
        format!("AIC: {}", fixed(f.aic, 2)),
    ];
    match &gof {
        Some(r) => lines.push(format!(
            "Goodness of fit: P(chi2({}) > {}) {}; {} at alpha = {}",
            r.df,
            fixed(r.statistic, 3),
            p_clause(r.p_value),
            verdict(r),
            r.alpha
        )),
        None => lines.push("Goodness of fit: saturated model, no residual test".into()),
    }
    doc.text("Deviance", lines);
    out.stdout = doc.render_plain();
    Ok(out)
}

#[derive(Debug, Serialize)]
struct CompareJson<'a> {
    reduced: FitJson<'a>,
    full: FitJson<'a>,
    deviance_change: f64,
    df: u32,
    critical_value: f64,
    p_value: f64,
    alpha: f64,
    decision: Decision,
    keep: &'static str,
}

pub fn cmd_compare(args: &CompareArgs) -> Result<Output, CliError> {
    check_alpha(args.alpha)?;
    let mut out = Output::default();
    let data = load_data(args.data.data.as_deref(), &mut out.warnings)?;
    let reduced = fit_formula(&data, &args.reduced, &args.data.family)?;
    let full = fit_formula(&data, &args.full, &args.data.family)?;
    let test = compare_nested(&reduced.fit.summary(), &full.fit.summary(), args.alpha)?;
    let critical = chi_square_quantile(args.alpha, test.df)?;
    let keep = if test.rejected() { "full" } else { "reduced" };

    if args.json {
        out.stdout = to_json(&CompareJson {
            reduced: fit_json(&reduced, None),
            full: fit_json(&full, None),
            deviance_change: test.statistic,
            df: test.df,
            critical_value: critical,
            p_value: test.p_value,
            alpha: test.alpha,
            decision: test.decision,
            keep,
        });
        return Ok(out);
    }

    let row = |label: &str, m: &Fitted| {
        vec![
            label.to_string(),
            m.formula.to_string(),
            m.fit.n_params().to_string(),
            fixed(m.fit.scaled_deviance, 3),
            m.fit.df_residual.to_string(),
            fixed(m.fit.aic, 2),
        ]
    };
    let mut doc = ReportDocument::default();
    doc.table(
        "Models",
        &["", "formula", "params", "scaled deviance", "df", "AIC"],
        vec![row("reduced", &reduced), row("full", &full)],
    );
    doc.text(
        "Change in scaled deviance",
        [
            test.narrative.clone(),
            format!(
                "change: {} on q = {} degrees of freedom",
                fixed(test.statistic, 3),
                test.df
            ),
            format!(
                "critical value chi2({}; {}): {}",
                test.alpha,
                test.df,
                fixed(critical, 3)
            ),
            format!("p-value {}", p_clause(test.p_value)),
            format!("verdict: {}; keep the {} model", verdict(&test), keep),
        ],
    );
    out.stdout = doc.render_plain();
    Ok(out)
}

pub fn cmd_tariff(args: &TariffArgs) -> Result<Output, CliError> {
    let mut out = Output::default();
    let data = load_data(args.data.data.as_deref(), &mut out.warnings)?;
    let fitted = fit_formula(&data, &args.formula, &args.data.family)?;
    let table = build_tariff_table(&RatingModel::from_fit(&fitted.fit)?)?;

    let format =
        args.format
            .unwrap_or_else(|| match args.output.extension().and_then(|e| e.to_str()) {
                Some(ext) if ext.eq_ignore_ascii_case("json") => TariffFormat::Json,
                _ => TariffFormat::Csv,
            });
    let body = match format {
        TariffFormat::Csv => table.to_csv()?,
        TariffFormat::Json => {
            let mut s = table.to_json();
            s.push('\n');
            s
        }
    };
    fs::write(&args.output, body)
        .map_err(|e| usage(format!("cannot write {}: {e}", args.output.display())))?;

    if args.json {
        out.stdout = to_json(&table);
        return Ok(out);
    }
    let mut headers: Vec<&str> = table.dimensions.iter().map(|d| d.name.as_str()).collect();
    headers.extend(["rate", "years to one claim", "relativity"]);
    let rows = table
        .cells
        .iter()
        .map(|c| {
            let mut r = c.levels.clone();
            r.push(fixed(c.annual_rate, 6));
            r.push(fixed(c.years_to_one_claim, 3));
            r.push(fixed(c.relativity, 5));
            r
        })
        .collect();
    let mut doc = ReportDocument::default();
    doc.text(
        "Tariff",
        [
            format!("formula: {}", fitted.formula),
            format!(
                "{} cells written to {}",
                table.cells.len(),
                args.output.display()
            ),
        ],
    );
    doc.table("Cells", &headers, rows);
    out.stdout = doc.render_plain();
    Ok(out)
}

fn load_table(path: Option<&Path>) -> Result<BonusMalusTable, CliError> {
    match path {
        None => Ok(BonusMalusTable::default()),
        Some(p) => {
            let text = fs::read_to_string(p)
                .map_err(|e| usage(format!("cannot read {}: {e}", p.display())))?;
            Ok(BonusMalusTable::from_json(&text)?)
        }
    }
}

#[derive(Debug, Serialize)]
struct SimulateJson<'a> {
    start: usize,
    base_premium: f64,
    years: &'a [TrajectoryYear],
    total_premium: f64,
}

pub fn cmd_bm_simulate(args: &SimulateArgs) -> Result<Output, CliError> {
    let table = load_table(args.table.as_deref())?;
    let years = simulate_trajectory(&table, args.start, &args.claims, args.base)?;
    let total: f64 = years.iter().map(|y| y.premium_paid).sum();
    let mut out = Output::default();
    if args.json {
        out.stdout = to_json(&SimulateJson {
            start: args.start,
            base_premium: args.base,
            years: &years,
            total_premium: total,
        });
        return Ok(out);
    }
    let rows = years
        .iter()
        .map(|y| {
            vec![
                y.year.to_string(),
                y.step_before.to_string(),
                y.claims.to_string(),
                y.step_after.to_string(),
                fixed(y.premium_paid, 2),
            ]
        })
        .collect();
    let mut doc = ReportDocument::default();
    doc.text(
        "Bonus-Malus trajectory",
        [
            format!("start step: {}", args.start),
            format!("base premium: {}", fixed(args.base, 2)),
        ],
    );
    doc.table(
        "Years",
        &["year", "step", "claims", "next step", "premium"],
        rows,
    );
    doc.text("Total", [format!("premium paid: {}", fixed(total, 2))]);
    out.stdout = doc.render_plain();
    Ok(out)
}

#[derive(Debug, Serialize)]
struct StepShare {
    step: usize,
    percentage: f64,
    probability: f64,
}

#[derive(Debug, Serialize)]
struct SteadyJson {
    lambda: f64,
    base_premium: f64,
    distribution: Vec<StepShare>,
    expected_percentage: f64,
    expected_premium: f64,
}

pub fn cmd_bm_steady(args: &SteadyArgs) -> Result<Output, CliError> {
    let table = load_table(args.table.as_deref())?;
    if !(args.base > 0.0 && args.base.is_finite()) {
        return Err(usage(format!("--base {} must be positive", args.base)));
    }
    let pi = table.stationary_distribution(args.lambda)?;
    let pct = table.expected_percentage(&pi);
    let shares: Vec<StepShare> = pi
        .iter()
        .zip(&table.percentages)
        .enumerate()
        .map(|(i, (&p, &c))| StepShare {
            step: i + 1,
            percentage: c,
            probability: p,
        })
        .collect();
    let mut out = Output::default();
    if args.json {
        out.stdout = to_json(&SteadyJson {
            lambda: args.lambda,
            base_premium: args.base,
            distribution: shares,
            expected_percentage: pct,
            expected_premium: args.base * pct / 100.0,
        });
        return Ok(out);
    }
    let rows = shares
        .iter()
        .map(|s| {
            vec![
                s.step.to_string(),
                fixed(s.percentage, 1),
                fixed(s.probability, 6),
            ]
        })
        .collect();
    let mut doc = ReportDocument::default();
    doc.text(
        "Bonus-Malus steady state",
        [format!("annual claim frequency: {}", args.lambda)],
    );
    doc.table("Distribution", &["step", "premium %", "probability"], rows);
    doc.text(
        "Expected premium",
        [format!(
            "{} ({}% of base {})",
            fixed(args.base * pct / 100.0, 2),
            fixed(pct, 3),
            fixed(args.base, 2)
        )],
    );
    out.stdout = doc.render_plain();
    Ok(out)
}

/// Parses `args` (program name first) and runs the command.
pub fn run_args<I, T>(args: I) -> Result<Output, CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = Cli::try_parse_from(args).map_err(|e| usage(e.to_string()))?;
    run(cli)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_ok(args: &[&str]) -> String {
        let mut full = vec!["ratemaking"];
        full.extend_from_slice(args);
        run_args(full).unwrap().stdout
    }

    fn run_err(args: &[&str]) -> CliError {
        let mut full = vec!["ratemaking"];
        full.extend_from_slice(args);
        run_args(full).unwrap_err()
    }

    #[test]
    fn fit_report_shape() {
        let out = run_ok(&["fit", "--formula", "claims ~ sex + region + type + job"]);
        assert!(out.contains("sex2"));
        assert!(out.contains("job3"));
        assert!(out.contains("on 46 degrees of freedom"));
        assert!(out.contains("on 53 degrees of freedom"));
        assert!(out.contains("AIC: "));
    }

    #[test]
    fn unknown_factor_exits_1() {
        let e = run_err(&["fit", "--formula", "claims ~ age"]);
        assert_eq!(e.code, 1);
        assert!(e.message.contains("age"));
    }

    #[test]
    fn bad_arguments_exit_1() {
        assert_eq!(run_err(&["fit"]).code, 1);
        assert_eq!(
            run_err(&["fit", "--formula", "claims ~", "--alpha", "2"]).code,
            1
        );
        assert_eq!(
            run_err(&["fit", "--formula", "claims ~ region", "--family", "gamma"]).code,
            1
        );
    }

    #[test]
    fn compare_identical_formulas_fails() {
        let e = run_err(&[
            "compare",
            "--reduced",
            "claims ~ region",
            "--full",
            "claims ~ region",
        ]);
        assert_eq!(e.code, 1);
        assert!(e.message.contains("models are not strictly nested"));
    }

    #[test]
    fn compare_report() {
        let out = run_ok(&[
            "compare",
            "--reduced",
            "claims ~ region + type",
            "--full",
            "claims ~ region * type",
        ]);
        assert!(out.contains("q = 4"));
        assert!(out.contains("verdict:"));
        let out = run_ok(&[
            "compare",
            "--reduced",
            "claims ~ region + type + job",
            "--full",
            "claims ~ sex + region + type + job",
        ]);
        assert!(out.contains("q = 1"));
    }

    #[test]
    fn bm_commands() {
        let out = run_ok(&[
            "bm", "simulate", "--start", "2", "--claims", "0,0,1", "--base", "500",
        ]);
        let years: Vec<&str> = out
            .lines()
            .filter(|l| l.starts_with(['1', '2', '3']))
            .collect();
        assert_eq!(years.len(), 3);
        assert!(years[2].contains("  1  ") || years[2].split_whitespace().nth(3) == Some("1"));
        assert_eq!(
            run_err(&["bm", "simulate", "--start", "15", "--claims", "0"]).code,
            1
        );
        let out = run_ok(&["bm", "steady", "--lambda", "0"]);
        let top = out.lines().find(|l| l.starts_with("14 ")).unwrap();
        assert!(top.ends_with("1.000000"));
        assert_eq!(run_err(&["bm", "steady", "--lambda", "-1"]).code, 1);
    }
}
