//! Pipelines behind the CLI subcommands.
//!
//! Each task maps a validated configuration onto library runs, persists the
//! numeric results as digested CSV artifacts, and appends one schema-
//! versioned record to the append-only `runs.jsonl` log in the output
//! directory — on failure too, so a broken run leaves a trace of what was
//! attempted. All randomness flows from the single seed in the context;
//! rerunning a task with the same config and seed reproduces every CSV
//! byte for byte.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::time::Instant;

use serde::Serialize;

use crate::concentration::{
    box_energy_functional, empirical_tail, linear_minorant_functional, sigma_energy_functional,
    sigma_linear_minorant,
};
use crate::config::ExperimentConfig;
use crate::disorder::{sample_couplings_dim, AlloyEvaluator, EnvelopeProfile};
use crate::error::{Error, Result};
use crate::ids::{convergence_in_l, estimate_ids, log_energy_grid, IdsParams};
use crate::lifshitz::{
    double_log_points, expected_beta, fit_exponent, fit_report, lowest_uncensored_decade,
    rare_event_probe, tail_sum_bound, theoretical_exponent, CurveSide,
};
use crate::perturbation::{
    default_fd_delta, eigen_path, fd_derivative_at_zero, remainder_constant, remainder_t_grid,
    small_eigenvalue_probability,
};
use crate::report::{
    append_jsonl, double_log_fit_svg, format_float, ids_band_svg, tail_bound_svg,
    write_csv_atomic, write_svg_atomic, Artifact, CsvRow,
};

pub const RECORD_SCHEMA: u32 = 1;

/// Version stamp embedded in every run record, in `name-vX.Y.Z` form.
pub fn version_string() -> String {
    format!("{}-v{}", env!("CARGO_PKG_NAME"), env!("CARGO_PKG_VERSION"))
}

/// Which deviation functionals a concentration run covers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FunctionalFilter {
    Both,
    Energy,
    Minorant,
}

/// One CLI subcommand, with its run-time arguments resolved.
#[derive(Debug, Clone)]
pub enum Task {
    Ids,
    ExponentFit,
    /// `query = Some((d, α))` prints a single exponent; `None` emits the
    /// regime table.
    ExponentTable { query: Option<(usize, f64)> },
    Concentration { functional: FunctionalFilter },
    Perturbation,
    LowerBound,
    Convergence,
}

impl Task {
    pub fn name(&self) -> &'static str {
        match self {
            Task::Ids => "ids",
            Task::ExponentFit => "exponent-fit",
            Task::ExponentTable { .. } => "exponent-table",
            Task::Concentration { .. } => "concentration",
            Task::Perturbation => "perturbation",
            Task::LowerBound => "lower-bound",
            Task::Convergence => "convergence",
        }
    }
}

/// Resolved run environment: config plus the CLI-level overrides.
#[derive(Debug, Clone)]
pub struct RunContext {
    pub config: ExperimentConfig,
    pub out_dir: PathBuf,
    pub seed: u64,
    pub plot: bool,
}

impl RunContext {
    pub fn new(
        config: ExperimentConfig,
        out_override: Option<PathBuf>,
        seed_override: Option<u64>,
        plot: bool,
    ) -> Self {
        let out_dir = out_override.unwrap_or_else(|| config.out_dir.clone());
        let seed = seed_override.unwrap_or(config.base_seed);
        RunContext { config, out_dir, seed, plot }
    }
}

/// One line of the append-only run log.
#[derive(Debug, Clone, Serialize)]
pub struct RunRecord {
    pub schema: u32,
    pub subcommand: String,
    pub version: String,
    pub wall_seconds: f64,
    pub seed: u64,
    pub threads: usize,
    pub config: ExperimentConfig,
    /// Derived constants worth keeping next to the data (variance proxies,
    /// measured window constants, truncation radii, fitted exponents, …).
    pub derived: BTreeMap<String, f64>,
    pub artifacts: Vec<Artifact>,
    pub summary: Vec<String>,
    pub outcome: String,
}

struct PipelineOutput {
    derived: BTreeMap<String, f64>,
    artifacts: Vec<Artifact>,
    summary: Vec<String>,
}

/// Runs one task end to end: validate, execute, persist, log. The record is
/// appended to `runs.jsonl` whether the pipeline succeeded or not.
pub fn run_task(task: &Task, ctx: &RunContext) -> Result<RunRecord> {
    ctx.config.validate()?;
    std::fs::create_dir_all(&ctx.out_dir)?;
    let start = Instant::now();
    let outcome = match task {
        Task::Ids => pipeline_ids(ctx),
        Task::ExponentFit => pipeline_exponent_fit(ctx),
        Task::ExponentTable { query } => pipeline_exponent_table(ctx, *query),
        Task::Concentration { functional } => pipeline_concentration(ctx, *functional),
        Task::Perturbation => pipeline_perturbation(ctx),
        Task::LowerBound => pipeline_lower_bound(ctx),
        Task::Convergence => pipeline_convergence(ctx),
    };
    let wall_seconds = start.elapsed().as_secs_f64();
    let (derived, artifacts, summary, status) = match &outcome {
        Ok(out) => (out.derived.clone(), out.artifacts.clone(), out.summary.clone(), "ok".into()),
        Err(e) => (BTreeMap::new(), Vec::new(), Vec::new(), format!("failed: {e}")),
    };
    let record = RunRecord {
        schema: RECORD_SCHEMA,
        subcommand: task.name().to_string(),
        version: version_string(),
        wall_seconds,
        seed: ctx.seed,
        threads: rayon::current_num_threads(),
        config: ctx.config.clone(),
        derived,
        artifacts,
        summary,
        outcome: status,
    };
    append_jsonl(&ctx.out_dir.join("runs.jsonl"), &record)?;
    outcome.map(|_| record)
}

fn ids_params(ctx: &RunContext) -> Result<IdsParams> {
    let e = &ctx.config.energy;
    Ok(IdsParams {
        grid: ctx.config.primary_grid()?,
        envelope: ctx.config.envelope,
        law: ctx.config.law,
        energy_grid: log_energy_grid(e.e_min, e.e_max, e.per_decade)?,
        samples: ctx.config.samples,
        seed: ctx.seed,
    })
}

/// The exponent the envelope regime predicts for this configuration; the
/// compactly supported profile is the short-range case.
fn config_gamma(config: &ExperimentConfig) -> Result<f64> {
    match config.envelope {
        EnvelopeProfile::PolyDecay { alpha, .. } => theoretical_exponent(config.dim, alpha),
        EnvelopeProfile::CompactBump { .. } => Ok(config.dim as f64 / 2.0),
    }
}

// ---------------------------------------------------------------------------
// row types owned by the runner

struct ExponentTableRow {
    dim: usize,
    alpha: f64,
    gamma: f64,
    regime: &'static str,
}

impl CsvRow for ExponentTableRow {
    fn headers() -> &'static [&'static str] {
        &["dim", "alpha", "gamma", "regime"]
    }

    fn fields(&self) -> Vec<String> {
        vec![
            self.dim.to_string(),
            format_float(self.alpha),
            format_float(self.gamma),
            self.regime.to_string(),
        ]
    }
}

struct FitRow {
    side: &'static str,
    gamma_hat: f64,
    stderr: f64,
    ln_c: f64,
    window_lo: f64,
    window_hi: f64,
    points_used: usize,
    censored_dropped: usize,
    theoretical_gamma: f64,
    verdict: String,
}

impl CsvRow for FitRow {
    fn headers() -> &'static [&'static str] {
        &[
            "side",
            "gamma_hat",
            "stderr",
            "ln_c",
            "window_lo",
            "window_hi",
            "points_used",
            "censored_dropped",
            "theoretical_gamma",
            "verdict",
        ]
    }

    fn fields(&self) -> Vec<String> {
        vec![
            self.side.to_string(),
            format_float(self.gamma_hat),
            format_float(self.stderr),
            format_float(self.ln_c),
            format_float(self.window_lo),
            format_float(self.window_hi),
            self.points_used.to_string(),
            self.censored_dropped.to_string(),
            format_float(self.theoretical_gamma),
            self.verdict.clone(),
        ]
    }
}

struct QuantileRow {
    probability: f64,
    lambda1: f64,
}

impl CsvRow for QuantileRow {
    fn headers() -> &'static [&'static str] {
        &["probability", "lambda1"]
    }

    fn fields(&self) -> Vec<String> {
        vec![format_float(self.probability), format_float(self.lambda1)]
    }
}

// ---------------------------------------------------------------------------
// pipelines

fn pipeline_ids(ctx: &RunContext) -> Result<PipelineOutput> {
    let curve = estimate_ids(&ids_params(ctx)?)?;
    let mut artifacts = vec![write_csv_atomic(&ctx.out_dir, "ids_curve.csv", &curve.points)?];
    if ctx.plot {
        if let Some(svg) = ids_band_svg(&curve) {
            artifacts.push(write_svg_atomic(&ctx.out_dir, "ids_band.svg", &svg)?);
        }
    }
    let censored = curve.points.iter().filter(|p| p.censored).count();
    let mut derived = BTreeMap::new();
    derived.insert("censor_ceiling".into(), curve.censor_ceiling());
    derived.insert("samples_kept".into(), curve.samples as f64);
    derived.insert("samples_skipped".into(), curve.skipped as f64);
    let summary = vec![format!(
        "ids: {} energies, {} censored (ceiling {:.3e}), {} samples kept, {} skipped",
        curve.points.len(),
        censored,
        curve.censor_ceiling(),
        curve.samples,
        curve.skipped
    )];
    Ok(PipelineOutput { derived, artifacts, summary })
}

fn pipeline_exponent_fit(ctx: &RunContext) -> Result<PipelineOutput> {
    let curve = estimate_ids(&ids_params(ctx)?)?;
    let gamma_theory = config_gamma(&ctx.config)?;
    let mut artifacts = vec![write_csv_atomic(&ctx.out_dir, "ids_curve.csv", &curve.points)?];
    let mut derived = BTreeMap::new();
    let mut summary = Vec::new();
    let mut rows: Vec<FitRow> = Vec::new();
    let mut plotted: Option<(CurveSide, crate::lifshitz::ExponentFit)> = None;

    for (side, label) in [(CurveSide::Lower, "lower"), (CurveSide::Upper, "upper")] {
        let window = match ctx.config.knobs.fit_window {
            Some(w) => w,
            None => match lowest_uncensored_decade(&curve, side) {
                Ok(w) => w,
                Err(e) => {
                    summary.push(format!("{label} side not fitted: {e}"));
                    continue;
                }
            },
        };
        match fit_exponent(&curve, side, window) {
            Ok(fit) => {
                let report = fit_report(&fit, gamma_theory);
                derived.insert(format!("gamma_hat_{label}"), fit.gamma_hat);
                derived.insert(format!("gamma_stderr_{label}"), fit.stderr);
                summary.push(format!(
                    "{label} side: gamma = {:.3} +/- {:.3} over [{:.3e}, {:.3e}] \
                     ({} points, {} censored dropped) — {} with theory {:.3}",
                    fit.gamma_hat,
                    fit.stderr,
                    window.0,
                    window.1,
                    fit.points_used,
                    fit.censored_dropped,
                    report.verdict,
                    gamma_theory
                ));
                rows.push(FitRow {
                    side: label,
                    gamma_hat: fit.gamma_hat,
                    stderr: fit.stderr,
                    ln_c: fit.ln_c,
                    window_lo: window.0,
                    window_hi: window.1,
                    points_used: fit.points_used,
                    censored_dropped: fit.censored_dropped,
                    theoretical_gamma: gamma_theory,
                    verdict: report.verdict,
                });
                // prefer the ceiling-side fit for the plot: it censors last
                if side == CurveSide::Upper || plotted.is_none() {
                    plotted = Some((side, fit));
                }
            }
            Err(e) => summary.push(format!("{label} side not fitted: {e}")),
        }
    }
    if rows.is_empty() {
        return Err(Error::InsufficientData(format!(
            "no curve side admitted a fit: {}",
            summary.join("; ")
        )));
    }
    derived.insert("gamma_theory".into(), gamma_theory);
    artifacts.push(write_csv_atomic(&ctx.out_dir, "exponent_fit.csv", &rows)?);
    if ctx.plot {
        if let Some((side, fit)) = plotted {
            let (triples, _) = double_log_points(&curve, side, fit.window);
            let pts: Vec<(f64, f64)> = triples.iter().map(|&(x, y, _)| (x, y)).collect();
            if let Some(svg) = double_log_fit_svg(&pts, &fit) {
                artifacts.push(write_svg_atomic(&ctx.out_dir, "exponent_fit.svg", &svg)?);
            }
        }
    }
    Ok(PipelineOutput { derived, artifacts, summary })
}

fn pipeline_exponent_table(ctx: &RunContext, query: Option<(usize, f64)>) -> Result<PipelineOutput> {
    let regime = |dim: usize, alpha: f64| {
        let d = dim as f64;
        if alpha < d + 1.0 {
            "long_range"
        } else if alpha == d + 1.0 {
            "boundary"
        } else {
            "short_range"
        }
    };
    let mut rows = Vec::new();
    let mut summary = Vec::new();
    match query {
        Some((dim, alpha)) => {
            let gamma = theoretical_exponent(dim, alpha)?;
            summary.push(format!("gamma = {gamma}"));
            rows.push(ExponentTableRow { dim, alpha, gamma, regime: regime(dim, alpha) });
        }
        None => {
            for dim in 1..=3usize {
                for step in [0.25, 0.5, 0.75, 1.0, 2.0, 3.0] {
                    let alpha = dim as f64 + step;
                    rows.push(ExponentTableRow {
                        dim,
                        alpha,
                        gamma: theoretical_exponent(dim, alpha)?,
                        regime: regime(dim, alpha),
                    });
                }
            }
            summary.push(format!("exponent table: {} rows over d = 1..3", rows.len()));
        }
    }
    let artifacts = vec![write_csv_atomic(&ctx.out_dir, "exponent_table.csv", &rows)?];
    Ok(PipelineOutput { derived: BTreeMap::new(), artifacts, summary })
}

fn pipeline_concentration(ctx: &RunContext, filter: FunctionalFilter) -> Result<PipelineOutput> {
    let config = &ctx.config;
    let grid = config.primary_grid()?;
    let mut derived = BTreeMap::new();
    let mut artifacts = Vec::new();
    let mut summary = Vec::new();
    // deviation probabilities need real sample counts to mean anything
    let samples = config.samples.max(1000);
    if samples > config.samples {
        summary.push(format!("concentration uses {samples} samples (configured {})", config.samples));
    }
    let lambda_grid = |sigma_sq: f64| -> Vec<f64> {
        let sigma = sigma_sq.sqrt();
        (1..=8).map(|k| 0.25 * k as f64 * sigma).collect()
    };

    if matches!(filter, FunctionalFilter::Both | FunctionalFilter::Energy) {
        let spec = sigma_energy_functional(&grid, &config.envelope, &config.law, config.knobs.m_factor)?;
        let evaluator = AlloyEvaluator::new(&grid, &config.envelope, config.law.support_bound())?;
        let radius = evaluator.truncation_radius();
        let table = empirical_tail(
            &box_energy_functional(&evaluator),
            &spec,
            &config.law,
            radius,
            samples,
            &lambda_grid(spec.sigma_sq),
            ctx.seed,
        )?;
        derived.insert("energy.sigma_sq".into(), spec.sigma_sq);
        derived.insert("energy.c_glob".into(), spec.c_glob);
        derived.insert("energy.r_trunc".into(), radius as f64);
        artifacts.push(write_csv_atomic(&ctx.out_dir, "concentration_energy.csv", &table)?);
        if ctx.plot {
            if let Some(svg) = tail_bound_svg(&table, "box energy deviation tails") {
                artifacts.push(write_svg_atomic(&ctx.out_dir, "concentration_energy.svg", &svg)?);
            }
        }
        summary.push(format!(
            "energy functional: sigma^2 = {:.6e}, truncation radius {radius}",
            spec.sigma_sq
        ));
    }

    if matches!(filter, FunctionalFilter::Both | FunctionalFilter::Minorant) {
        match config.envelope {
            EnvelopeProfile::PolyDecay { alpha, .. } => {
                let side = grid.side_length;
                let spec = sigma_linear_minorant(grid.dim, side, alpha, config.law.support_bound())?;
                let radius = (4.0 * side).ceil() as i64;
                let table = empirical_tail(
                    &linear_minorant_functional(grid.dim, side, alpha, radius),
                    &spec,
                    &config.law,
                    radius,
                    samples,
                    &lambda_grid(spec.sigma_sq),
                    ctx.seed,
                )?;
                derived.insert("minorant.sigma_sq".into(), spec.sigma_sq);
                derived.insert("minorant.radius".into(), radius as f64);
                artifacts.push(write_csv_atomic(&ctx.out_dir, "concentration_minorant.csv", &table)?);
                if ctx.plot {
                    if let Some(svg) = tail_bound_svg(&table, "linear minorant deviation tails") {
                        artifacts
                            .push(write_svg_atomic(&ctx.out_dir, "concentration_minorant.svg", &svg)?);
                    }
                }
                summary.push(format!("linear minorant: sigma^2 = {:.6e}", spec.sigma_sq));
            }
            EnvelopeProfile::CompactBump { .. } => {
                summary.push(
                    "linear minorant skipped: it is defined by a polynomial decay profile".into(),
                );
            }
        }
    }
    if artifacts.is_empty() {
        return Err(Error::contract("concentration", "no functional selected for this envelope"));
    }
    Ok(PipelineOutput { derived, artifacts, summary })
}

fn pipeline_perturbation(ctx: &RunContext) -> Result<PipelineOutput> {
    let config = &ctx.config;
    let grid = config.primary_grid()?;
    let side = grid.side_length;
    let evaluator = AlloyEvaluator::new(&grid, &config.envelope, config.law.support_bound())?;
    let sample =
        sample_couplings_dim(&config.law, grid.dim, evaluator.truncation_radius(), ctx.seed, 0)?;
    let field = evaluator.squared_potential(&sample)?;

    let path = eigen_path(&field, &remainder_t_grid(side, 40))?;
    let artifacts = vec![write_csv_atomic(&ctx.out_dir, "perturbation_path.csv", &path.rows())?];
    let fit = remainder_constant(&path, side)?;
    let fd = fd_derivative_at_zero(&field, default_fd_delta(&field))?;

    let mut derived = BTreeMap::new();
    derived.insert("hf_derivative".into(), path.hf_derivative);
    derived.insert("fd_derivative".into(), fd);
    derived.insert("free_gap".into(), path.free_gap);
    derived.insert("c1_window".into(), fit.c1);
    derived.insert("c2_remainder".into(), fit.c2);
    derived.insert("remainder_max_ratio".into(), fit.max_ratio);
    let mut summary = vec![format!(
        "path: E'(0) = {:.6e} (finite difference {:.6e}), free gap {:.6e}, \
         quadratic window tL^2 <= {:.3} with c2 = {:.3e}",
        path.hf_derivative, fd, path.free_gap, fit.c1, fit.c2
    )];

    if config.samples >= 100 {
        let report = small_eigenvalue_probability(
            &grid,
            &config.envelope,
            &config.law,
            config.knobs.b,
            config.samples,
            ctx.seed,
        )?;
        derived.insert("b".into(), report.b);
        derived.insert("b_max".into(), report.b_max);
        derived.insert("lhs_probability".into(), report.lhs_probability);
        derived.insert("rhs_probability".into(), report.rhs_probability);
        derived.insert("rho".into(), report.rho);
        summary.push(format!(
            "small-eigenvalue check at b = {}: P(lambda_1 < b/L^2) = {:.4} <= \
             P(derivative tail) = {:.4} over {} samples (admissible b up to {:.4})",
            report.b, report.lhs_probability, report.rhs_probability, report.samples, report.b_max
        ));
    } else {
        summary.push(format!(
            "small-eigenvalue check skipped: needs >= 100 samples, configured {}",
            config.samples
        ));
    }
    Ok(PipelineOutput { derived, artifacts, summary })
}

fn pipeline_lower_bound(ctx: &RunContext) -> Result<PipelineOutput> {
    let config = &ctx.config;
    // the rare-event argument is vacuous for a law that cannot be small
    config.law.check_assumptions()?;
    let grid = config.primary_grid()?;
    let side = grid.side_length;
    let beta = match config.knobs.beta {
        Some(b) => b,
        None => expected_beta(config.dim, &config.envelope)?,
    };
    let epsilon = config.knobs.epsilon_scale / (side * side);
    let report = rare_event_probe(
        &grid,
        &config.envelope,
        &config.law,
        beta,
        epsilon,
        config.samples,
        ctx.seed,
    )?;

    let rows: Vec<QuantileRow> = report
        .lambda1_quantiles
        .iter()
        .map(|&(probability, lambda1)| QuantileRow { probability, lambda1 })
        .collect();
    let artifacts = vec![write_csv_atomic(&ctx.out_dir, "lower_bound_quantiles.csv", &rows)?];

    let far_tail = match config.envelope {
        EnvelopeProfile::PolyDecay { alpha, .. } => tail_sum_bound(config.dim, alpha, side, report.r)?,
        // a compact profile cannot reach the box from beyond the quiet zone
        EnvelopeProfile::CompactBump { .. } => 0.0,
    };
    let mut derived = BTreeMap::new();
    derived.insert("epsilon".into(), report.epsilon);
    derived.insert("beta".into(), report.beta);
    derived.insert("quiet_zone_r".into(), report.r);
    derived.insert("conditioned_sites".into(), report.conditioned_sites);
    derived.insert("log_prob_exact".into(), report.log_prob_exact);
    derived.insert("log_prob_small_ball".into(), report.log_prob_small_ball);
    derived.insert("lambda0_discrete".into(), report.lambda0_discrete);
    derived.insert("lambda0_continuum".into(), report.lambda0_continuum);
    derived.insert("test_function_bound".into(), report.test_function_bound);
    derived.insert("bound_times_l_squared".into(), report.bound_times_l_squared);
    derived.insert("far_tail_bound".into(), far_tail);
    let summary = vec![
        format!(
            "conditioned {} sites at |q| <= {:.3e} (ln P = {:.3}, small-ball form {:.3})",
            report.conditioned_sites, report.epsilon, report.log_prob_exact, report.log_prob_small_ball
        ),
        format!(
            "ground energy under conditioning: median {:.6e}, variational ceiling {:.6e} \
             = {:.3}/L^2 (free box at {:.6e})",
            report.lambda1_quantiles[2].1,
            report.test_function_bound,
            report.bound_times_l_squared,
            report.lambda0_discrete
        ),
    ];
    Ok(PipelineOutput { derived, artifacts, summary })
}

fn pipeline_convergence(ctx: &RunContext) -> Result<PipelineOutput> {
    let sides = ctx.config.side_length.all();
    if sides.len() < 2 {
        return Err(Error::config(
            "side_length",
            "the convergence study needs a list of at least two box sides",
        ));
    }
    let (curves, rows) = convergence_in_l(&ids_params(ctx)?, &sides)?;
    let mut artifacts = vec![write_csv_atomic(&ctx.out_dir, "convergence.csv", &rows)?];
    for curve in &curves {
        let name = format!("ids_curve_L{}.csv", curve.side_length);
        artifacts.push(write_csv_atomic(&ctx.out_dir, &name, &curve.points)?);
    }
    if ctx.plot {
        if let Some(largest) = curves.last() {
            if let Some(svg) = ids_band_svg(largest) {
                artifacts.push(write_svg_atomic(&ctx.out_dir, "ids_band_largest.svg", &svg)?);
            }
        }
    }
    let last = rows.last().expect("at least two rows");
    let mut derived = BTreeMap::new();
    derived.insert("band_sup_final".into(), last.band_sup);
    derived.insert("distance_final".into(), last.distance_to_previous);
    let summary = vec![format!(
        "bracket band at L = {}: sup {:.6e}; moved {:.6e} against the previous box",
        last.side_length, last.band_sup, last.distance_to_previous
    )];
    Ok(PipelineOutput { derived, artifacts, summary })
}
