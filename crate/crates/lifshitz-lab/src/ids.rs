//! Monte Carlo bracketing of the integrated density of states.
//!
//! At finite volume the normalized eigenvalue counts under the two classical
//! boundary conditions pinch the infinite-volume IDS:
//! 𝔼N(H^D, E)/L^d ≤ N(E) ≤ 𝔼N(H^N, E)/L^d, and the discrete inequality
//! N(H^D, E) ≤ N(H^N, E) holds sample by sample, not just in expectation.
//! This module estimates both curves over a log-spaced energy grid by
//! averaging inertia counts over disorder realizations, enforcing the
//! per-sample bracketing as a hard assertion, and tracks the bracket's
//! convergence as the box grows.

use rayon::prelude::*;
use serde::Serialize;

use crate::concentration::{wilson_interval, WILSON_Z99};
use crate::disorder::{sample_couplings_dim, AlloyEvaluator, CouplingLaw, EnvelopeProfile};
use crate::error::{Error, Result};
use crate::grid::{build_laplacian, free_spectrum, BoundaryCondition, GridSpec};
use crate::spectral::{count_below_with, CountWorkspace};

/// Everything one IDS run needs. The runner maps its file-level
/// configuration onto this.
#[derive(Debug, Clone, Serialize)]
pub struct IdsParams {
    pub grid: GridSpec,
    pub envelope: EnvelopeProfile,
    pub law: CouplingLaw,
    /// Ascending, strictly positive energies.
    pub energy_grid: Vec<f64>,
    pub samples: usize,
    pub seed: u64,
}

/// One energy row of the bracketed curve. `lower`/`upper` are means of
/// count/L^d under Dirichlet and Neumann conditions respectively.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct IdsPoint {
    pub energy: f64,
    pub lower: f64,
    pub lower_stderr: f64,
    pub upper: f64,
    pub upper_stderr: f64,
    /// True when one of the two sides observed no eigenvalue at all across
    /// the whole run. The recorded 0 is then a resolution floor — the honest
    /// statement is "below `censor_ceiling`" — and exponent fits must skip
    /// the point.
    pub censored: bool,
}

/// The bracketed IDS estimate with the run parameters that produced it.
#[derive(Debug, Clone, Serialize)]
pub struct IdsCurve {
    pub points: Vec<IdsPoint>,
    pub dim: usize,
    pub side_length: f64,
    pub points_per_side: usize,
    /// Samples that actually contributed (requested minus skipped).
    pub samples: usize,
    pub skipped: usize,
    pub seed: u64,
}

impl IdsCurve {
    /// One-sided upper bound carried by a censored zero: less than one hit
    /// in `samples` tries, normalized like the curve itself.
    pub fn censor_ceiling(&self) -> f64 {
        1.0 / (self.samples as f64 * self.side_length.powi(self.dim as i32))
    }
}

/// Log-spaced energy grid with `per_decade` points per factor of ten,
/// endpoints included.
pub fn log_energy_grid(e_min: f64, e_max: f64, per_decade: usize) -> Result<Vec<f64>> {
    if !(e_min > 0.0 && e_max > e_min && e_max.is_finite()) {
        return Err(Error::contract(
            "log_energy_grid",
            format!("need 0 < e_min < e_max, got [{e_min:.3e}, {e_max:.3e}]"),
        ));
    }
    if per_decade == 0 {
        return Err(Error::contract("log_energy_grid", "per_decade must be ≥ 1"));
    }
    let decades = (e_max / e_min).log10();
    let steps = (decades * per_decade as f64).ceil() as usize;
    let grid: Vec<f64> = (0..=steps)
        .map(|j| e_min * (e_max / e_min).powf(j as f64 / steps as f64))
        .collect();
    Ok(grid)
}

/// Counts for one disorder realization at every grid energy.
struct SampleCounts {
    dirichlet: Vec<usize>,
    neumann: Vec<usize>,
}

enum SampleOutcome {
    Counts(SampleCounts),
    /// A numeric failure (factorization breakdown) voided the sample; the
    /// run tolerates at most 1% of these.
    Skipped(String),
}

fn validate_params(params: &IdsParams) -> Result<()> {
    params.grid.validate()?;
    params.law.validate()?;
    params.envelope.validate(params.grid.dim)?;
    if params.samples < 1 {
        return Err(Error::contract("estimate_ids", "samples must be ≥ 1"));
    }
    if params.energy_grid.is_empty() {
        return Err(Error::contract("estimate_ids", "energy grid must not be empty"));
    }
    if params.energy_grid[0] <= 0.0 {
        return Err(Error::contract("estimate_ids", "energies must be strictly positive"));
    }
    if params.energy_grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::contract("estimate_ids", "energy grid must be strictly increasing"));
    }
    Ok(())
}

/// Estimates the bracketed IDS by Monte Carlo over disorder.
///
/// Per sample: build V once, assemble the Hamiltonian under both boundary
/// conditions, and sweep the energy grid with a shared factorization
/// workspace. Two hard per-sample assertions ride along: the Dirichlet count
/// never exceeds the Neumann count at any energy, and each count is
/// nondecreasing in E. Numeric solver failures skip the sample; more than 1%
/// skips fails the run.
pub fn estimate_ids(params: &IdsParams) -> Result<IdsCurve> {
    validate_params(params)?;
    let grid = &params.grid;
    let evaluator = AlloyEvaluator::new(grid, &params.envelope, params.law.support_bound())?;
    let radius = evaluator.truncation_radius();
    let lap_d = build_laplacian(grid, BoundaryCondition::Dirichlet)?;
    let lap_n = build_laplacian(grid, BoundaryCondition::Neumann)?;

    let outcomes: Vec<SampleOutcome> = (0..params.samples)
        .into_par_iter()
        .map(|s| {
            let sample =
                sample_couplings_dim(&params.law, grid.dim, radius, params.seed, s as u64)?;
            let field = evaluator.squared_potential(&sample)?;
            let h_d = lap_d.with_added_diagonal(&field.values)?;
            let h_n = lap_n.with_added_diagonal(&field.values)?;
            let mut ws = CountWorkspace::default();
            let mut counts = SampleCounts {
                dirichlet: Vec::with_capacity(params.energy_grid.len()),
                neumann: Vec::with_capacity(params.energy_grid.len()),
            };
            for &energy in &params.energy_grid {
                let d = match count_below_with(&h_d, energy, BoundaryCondition::Dirichlet, &mut ws)
                {
                    Ok(c) => c.count,
                    Err(Error::Numeric { operation, message }) => {
                        return Ok(SampleOutcome::Skipped(format!(
                            "sample {s}: {operation}: {message}"
                        )))
                    }
                    Err(e) => return Err(e),
                };
                let n = match count_below_with(&h_n, energy, BoundaryCondition::Neumann, &mut ws) {
                    Ok(c) => c.count,
                    Err(Error::Numeric { operation, message }) => {
                        return Ok(SampleOutcome::Skipped(format!(
                            "sample {s}: {operation}: {message}"
                        )))
                    }
                    Err(e) => return Err(e),
                };
                if d > n {
                    return Err(Error::PropertyFailure(format!(
                        "bracketing violated on sample {s} at E = {energy:.6e}: \
                         Dirichlet count {d} > Neumann count {n}"
                    )));
                }
                if let (Some(&pd), Some(&pn)) =
                    (counts.dirichlet.last(), counts.neumann.last())
                {
                    if d < pd || n < pn {
                        return Err(Error::PropertyFailure(format!(
                            "count decreased in E on sample {s} at E = {energy:.6e}"
                        )));
                    }
                }
                counts.dirichlet.push(d);
                counts.neumann.push(n);
            }
            Ok(SampleOutcome::Counts(counts))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut kept: Vec<SampleCounts> = Vec::with_capacity(params.samples);
    let mut skipped = 0usize;
    let mut first_skip: Option<String> = None;
    for outcome in outcomes {
        match outcome {
            SampleOutcome::Counts(c) => kept.push(c),
            SampleOutcome::Skipped(why) => {
                skipped += 1;
                first_skip.get_or_insert(why);
            }
        }
    }
    if skipped * 100 > params.samples {
        return Err(Error::numeric(
            "estimate_ids",
            format!(
                "{skipped} of {} samples skipped — above the 1% budget (first: {})",
                params.samples,
                first_skip.as_deref().unwrap_or("unknown")
            ),
        ));
    }
    if kept.is_empty() {
        return Err(Error::numeric("estimate_ids", "every sample was skipped"));
    }

    let volume = grid.side_length.powi(grid.dim as i32);
    let m = kept.len() as f64;
    let points = params
        .energy_grid
        .iter()
        .enumerate()
        .map(|(j, &energy)| {
            let mut acc = [0.0f64; 4]; // Σd, Σd², Σn, Σn²
            let mut hits = [0usize; 2];
            for counts in &kept {
                let d = counts.dirichlet[j] as f64 / volume;
                let n = counts.neumann[j] as f64 / volume;
                acc[0] += d;
                acc[1] += d * d;
                acc[2] += n;
                acc[3] += n * n;
                hits[0] += (counts.dirichlet[j] > 0) as usize;
                hits[1] += (counts.neumann[j] > 0) as usize;
            }
            let mean_d = acc[0] / m;
            let mean_n = acc[2] / m;
            let var_d = (acc[1] / m - mean_d * mean_d).max(0.0);
            let var_n = (acc[3] / m - mean_n * mean_n).max(0.0);
            IdsPoint {
                energy,
                lower: mean_d,
                lower_stderr: (var_d / m).sqrt(),
                upper: mean_n,
                upper_stderr: (var_n / m).sqrt(),
                censored: hits[0] == 0 || hits[1] == 0,
            }
        })
        .collect::<Vec<_>>();

    let total = grid.total_points() as f64 / volume;
    if let Some(last) = points.last() {
        // the whole spectrum normalized by volume caps both curves
        assert!(last.upper <= total + 1e-12, "count exceeded operator dimension");
    }

    Ok(IdsCurve {
        points,
        dim: grid.dim,
        side_length: grid.side_length,
        points_per_side: grid.points_per_side,
        samples: kept.len(),
        skipped,
        seed: params.seed,
    })
}

/// The two factors of the small-energy Neumann bound
/// 𝔼N(H^N, E)/L^d ≤ N(−Δ^N, E)/L^d · ℙ(λ₁(H^N) < E), with the empirical
/// left side for comparison.
#[derive(Debug, Clone, Serialize)]
pub struct FactorizationCheck {
    pub energy: f64,
    /// Free Neumann count at E, normalized by volume.
    pub free_count_term: f64,
    /// Empirical ℙ(λ₁(H^N) < E).
    pub probability_term: f64,
    pub probability_ci: (f64, f64),
    pub product: f64,
    pub empirical_mean: f64,
    pub empirical_stderr: f64,
    pub samples: usize,
}

/// Checks the factorized Neumann upper bound at one small energy.
///
/// Since V ≥ 0, each disordered operator dominates the free one, so
/// N(H^N, E) ≤ N(−Δ^N, E) deterministically; and N(H^N, E) ≥ 1 exactly when
/// λ₁ < E. Their product bounds the count sample by sample — asserted here
/// as a hard inequality — and in expectation, asserted with Monte Carlo
/// slack. `regime_coupling` bounds the admissible energy window E < c/L².
pub fn neumann_upper_factorization(
    params: &IdsParams,
    energy: f64,
    regime_coupling: f64,
) -> Result<FactorizationCheck> {
    validate_params(params)?;
    let grid = &params.grid;
    let l2 = grid.side_length * grid.side_length;
    if !(energy > 0.0 && energy < regime_coupling / l2) {
        return Err(Error::contract(
            "neumann_upper_factorization",
            format!(
                "E = {energy:.3e} outside the small-energy regime (0, {:.3e})",
                regime_coupling / l2
            ),
        ));
    }

    let spectrum = free_spectrum(grid, BoundaryCondition::Neumann)?;
    let free_count = spectrum.partition_point(|&lam| lam < energy);
    let evaluator = AlloyEvaluator::new(grid, &params.envelope, params.law.support_bound())?;
    let radius = evaluator.truncation_radius();
    let lap_n = build_laplacian(grid, BoundaryCondition::Neumann)?;

    let counts: Vec<usize> = (0..params.samples)
        .into_par_iter()
        .map(|s| {
            let sample =
                sample_couplings_dim(&params.law, grid.dim, radius, params.seed, s as u64)?;
            let field = evaluator.squared_potential(&sample)?;
            let op = lap_n.with_added_diagonal(&field.values)?;
            let count =
                count_below_with(&op, energy, BoundaryCondition::Neumann, &mut Default::default())?
                    .count;
            // per-sample form of the factorized bound — exact, no slack
            let hit = count >= 1;
            if count > free_count * hit as usize {
                return Err(Error::PropertyFailure(format!(
                    "sample {s}: count {count} exceeds free count {free_count} × indicator at \
                     E = {energy:.6e}"
                )));
            }
            Ok(count)
        })
        .collect::<Result<Vec<_>>>()?;

    let volume = grid.side_length.powi(grid.dim as i32);
    let m = params.samples as f64;
    let hits = counts.iter().filter(|&&c| c >= 1).count();
    let mean = counts.iter().map(|&c| c as f64 / volume).sum::<f64>() / m;
    let var = (counts.iter().map(|&c| (c as f64 / volume - mean).powi(2)).sum::<f64>() / m)
        .max(0.0);
    let stderr = (var / m).sqrt();
    let p_hat = hits as f64 / m;
    let ci = wilson_interval(hits, params.samples, WILSON_Z99);
    let free_term = free_count as f64 / volume;
    let product = free_term * p_hat;
    let slack = 3.0 * (stderr + free_term * 0.5 * (ci.1 - ci.0));
    if mean > product + slack {
        return Err(Error::PropertyFailure(format!(
            "factorized bound violated in expectation at E = {energy:.6e}: \
             mean {mean:.6e} > product {product:.6e} + slack {slack:.6e}"
        )));
    }

    Ok(FactorizationCheck {
        energy,
        free_count_term: free_term,
        probability_term: p_hat,
        probability_ci: ci,
        product,
        empirical_mean: mean,
        empirical_stderr: stderr,
        samples: params.samples,
    })
}

/// One row of the box-growth diagnostic.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ConvergenceRow {
    pub side_length: f64,
    /// Widest bracket gap upper − lower over the energy grid.
    pub band_sup: f64,
    /// Bracket gap at the median grid energy.
    pub band_at_median: f64,
    /// Sup over E of how far both curve edges moved against the previous L
    /// (NaN on the first row).
    pub distance_to_previous: f64,
}

/// Runs `estimate_ids` across growing boxes at fixed grid density and
/// reports how the Dirichlet–Neumann band tightens.
///
/// `base.grid` supplies the dimension and density n/L; each entry of
/// `l_list` (ascending, ≥ 2 entries) must keep n = L·(n/L) integral.
pub fn convergence_in_l(
    base: &IdsParams,
    l_list: &[f64],
) -> Result<(Vec<IdsCurve>, Vec<ConvergenceRow>)> {
    if l_list.len() < 2 {
        return Err(Error::contract("convergence_in_l", "need at least two box sizes"));
    }
    if l_list.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::contract("convergence_in_l", "box sizes must be ascending"));
    }
    let density = base.grid.points_per_side as f64 / base.grid.side_length;
    let mut curves: Vec<IdsCurve> = Vec::with_capacity(l_list.len());
    let mut rows: Vec<ConvergenceRow> = Vec::with_capacity(l_list.len());
    for &side in l_list {
        let n = density * side;
        if (n - n.round()).abs() > 1e-9 || n < 2.0 {
            return Err(Error::contract(
                "convergence_in_l",
                format!("L = {side} gives a non-integral point count {n:.3} at density {density}"),
            ));
        }
        let mut params = base.clone();
        params.grid = GridSpec::new(base.grid.dim, side, n.round() as usize)?;
        let curve = estimate_ids(&params)?;

        let band_sup = curve
            .points
            .iter()
            .map(|p| p.upper - p.lower)
            .fold(0.0f64, f64::max);
        let band_at_median = {
            let mid = curve.points.len() / 2;
            curve.points[mid].upper - curve.points[mid].lower
        };
        let distance_to_previous = match curves.last() {
            None => f64::NAN,
            Some(prev) => prev
                .points
                .iter()
                .zip(&curve.points)
                .map(|(a, b)| (a.upper - b.upper).abs().max((a.lower - b.lower).abs()))
                .fold(0.0f64, f64::max),
        };
        rows.push(ConvergenceRow { side_length: side, band_sup, band_at_median, distance_to_previous });
        curves.push(curve);
    }
    Ok((curves, rows))
}
