//! Bounded-difference concentration for disorder functionals.
//!
//! Two functionals of the coupling field q = (q_j) are covered:
//!
//! * the box energy F(q) = ∫_Λ V_ω, whose one-coordinate differences are
//!   bounded by a near/far case split (constant within |j| ≤ ML, power-law
//!   decay beyond), and
//! * the linear minorant F(q) = Σ_j q_j (L+|j|)^{−α}, whose differences are
//!   exactly 2Q(L+|j|)^{−α}.
//!
//! From a table of σ_j the tail bound ℙ(|F − 𝔼F| > λ) ≤ 2·exp(−2λ²/Σσ_j²)
//! follows, extended to the infinitely many coordinates by the summability
//! of σ_j. Everything here is checkable: σ_j against brute one-coordinate
//! perturbations, the tail bound against Monte Carlo with Wilson intervals,
//! and the truncation argument against masked re-evaluations.

use crate::disorder::{sample_couplings_dim, CouplingLaw, DisorderSample, EnvelopeProfile};
use crate::error::{Error, Result};
use crate::grid::GridSpec;
use crate::lattice::{shell_count, shell_decay_sum, site_flat_index, sup_norm_int};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Two-sided 99% normal quantile, used for the Wilson interval slack.
pub const WILSON_Z99: f64 = 2.575_829_303_548_901;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FunctionalKind {
    EnergyIntegral,
    LinearMinorant,
}

/// Per-coordinate bounded-difference constants σ_j, radial in |j|_∞:
/// exact shell values out to `shell_sigma.len() − 1`, then the analytic
/// envelope σ_j = tail_coeff·(tail_shift + |j|)^{−tail_exponent}.
#[derive(Debug, Clone, Serialize)]
pub struct McDiarmidSpec {
    pub functional: FunctionalKind,
    pub shell_sigma: Vec<f64>,
    pub tail_coeff: f64,
    pub tail_shift: f64,
    pub tail_exponent: f64,
    /// σ² = Σ_j σ_j², evaluated with a certified upper tail.
    pub sigma_sq: f64,
    /// Half-width of the σ² tail bracket — the summability certificate.
    pub sigma_sq_uncertainty: f64,
    pub dim: usize,
    pub side_length: f64,
    pub q_bound: f64,
    pub m_factor: u32,
    /// 4Q²·sup_x Σ_i|f(x−i)| from the energy chain (0 for the minorant).
    pub c_glob: f64,
}

impl McDiarmidSpec {
    pub fn direct_radius(&self) -> i64 {
        self.shell_sigma.len() as i64 - 1
    }

    /// σ_j for any site at sup-norm radius m.
    pub fn sigma_at_radius(&self, m: i64) -> f64 {
        assert!(m >= 0);
        match self.shell_sigma.get(m as usize) {
            Some(&s) => s,
            None => {
                if self.tail_coeff == 0.0 {
                    0.0
                } else {
                    self.tail_coeff * (self.tail_shift + m as f64).powf(-self.tail_exponent)
                }
            }
        }
    }

    pub fn sigma_at(&self, j: &[i64]) -> f64 {
        self.sigma_at_radius(sup_norm_int(j))
    }

    /// Certified upper bound on Σ_{|j| > radius} σ_j, the remainder that
    /// controls the truncation argument |F − F_R| ≤ Σ_{|j|>R} σ_j.
    pub fn sigma_l1_beyond(&self, radius: i64) -> f64 {
        assert!(radius >= 0);
        let direct = self.direct_radius();
        let mut total = 0.0;
        for m in (radius + 1)..=direct {
            total += shell_count(self.dim, m) as f64 * self.shell_sigma[m as usize];
        }
        if self.tail_coeff > 0.0 {
            let start = (radius + 1).max(direct + 1);
            total += self.tail_coeff
                * shell_decay_sum(self.dim, self.tail_exponent, self.tail_shift, start, 1e-10, 1 << 22)
                    .upper();
        }
        total
    }
}

/// σ_j for the box energy F = ∫_Λ U_ω², from the chain
/// |ΔF| ≤ 2Q·(2Q·S_∞)·h^dΣ_k|f(x_k−j)| with S_∞ = sup_x Σ_i|f(x−i)|:
/// within |j| ≤ ML the grid ℓ¹ norm of f caps the sum, beyond it the
/// translate only reaches Λ through its decay tail.
pub fn sigma_energy_functional(
    grid: &GridSpec,
    envelope: &EnvelopeProfile,
    law: &CouplingLaw,
    m_factor: u32,
) -> Result<McDiarmidSpec> {
    grid.validate()?;
    law.validate()?;
    envelope.validate(grid.dim)?;
    if m_factor < 3 {
        return Err(Error::contract("sigma_energy_functional", "m_factor must be ≥ 3"));
    }
    let dim = grid.dim;
    let l = grid.side_length;
    let q = law.support_bound();
    let s_inf = envelope.abs_periodized_sup_bound(dim);
    let c_glob = 4.0 * q * q * s_inf;
    let grid_l1 = crate::disorder::discrete_translate_l1_bound(grid, envelope)?;
    let case1 = c_glob * grid_l1;
    let case1_radius = (m_factor as f64 * l).floor() as i64;

    let (shell_sigma, tail_coeff, tail_exponent) = match *envelope {
        EnvelopeProfile::PolyDecay { alpha, amplitude } => {
            // beyond the near zone, sup_{x∈Λ}|f(x−j)| = amp(1+|j|−L/2)^{−α};
            // fold the shift into a constant valid for all |j| ≥ r₀
            let r0 = (case1_radius + 1) as f64;
            let shift_ratio = (r0 / (1.0 + r0 - 0.5 * l)).max(1.0);
            let c_far = amplitude * shift_ratio.powf(alpha);
            let coeff = c_glob * c_far * l.powi(dim as i32);
            (vec![case1; case1_radius as usize + 1], coeff, alpha)
        }
        EnvelopeProfile::CompactBump { radius, .. } => {
            // the translate misses the box entirely once |j| − L/2 > r
            let zero_from = (0.5 * l + radius).floor() as i64 + 1;
            let len = case1_radius.max(zero_from - 1) as usize + 1;
            let shells = (0..len)
                .map(|m| if (m as i64) < zero_from { case1 } else { 0.0 })
                .collect();
            (shells, 0.0, 1.0 + dim as f64)
        }
    };

    let (sigma_sq, sigma_sq_uncertainty) =
        assemble_sigma_sq(dim, &shell_sigma, tail_coeff, 0.0, tail_exponent);
    Ok(McDiarmidSpec {
        functional: FunctionalKind::EnergyIntegral,
        shell_sigma,
        tail_coeff,
        tail_shift: 0.0,
        tail_exponent,
        sigma_sq,
        sigma_sq_uncertainty,
        dim,
        side_length: l,
        q_bound: q,
        m_factor,
        c_glob,
    })
}

/// σ_j = 2Q(L+|j|)^{−α} for the linear minorant Σ_j q_j(L+|j|)^{−α};
/// here the σ table is the functional's own coefficient profile, exactly.
pub fn sigma_linear_minorant(
    dim: usize,
    side_length: f64,
    alpha: f64,
    q_bound: f64,
) -> Result<McDiarmidSpec> {
    if dim == 0 || !(side_length > 0.0) || !(q_bound >= 0.0) {
        return Err(Error::contract("sigma_linear_minorant", "need dim ≥ 1, L > 0, Q ≥ 0"));
    }
    if !(alpha > dim as f64) {
        return Err(Error::contract(
            "sigma_linear_minorant",
            format!("σ² diverges unless alpha > dim; got alpha = {alpha}, dim = {dim}"),
        ));
    }
    let coeff = 2.0 * q_bound;
    let shell_sigma = vec![coeff * side_length.powf(-alpha)];
    let (sigma_sq, sigma_sq_uncertainty) =
        assemble_sigma_sq(dim, &shell_sigma, coeff, side_length, alpha);
    Ok(McDiarmidSpec {
        functional: FunctionalKind::LinearMinorant,
        shell_sigma,
        tail_coeff: coeff,
        tail_shift: side_length,
        tail_exponent: alpha,
        sigma_sq,
        sigma_sq_uncertainty,
        dim,
        side_length,
        q_bound,
        m_factor: 0,
        c_glob: 0.0,
    })
}

/// Σ_j σ_j² = Σ_m shell(m)·σ_m² + certified power-law tail.
fn assemble_sigma_sq(
    dim: usize,
    shell_sigma: &[f64],
    tail_coeff: f64,
    tail_shift: f64,
    tail_exponent: f64,
) -> (f64, f64) {
    let mut direct = 0.0;
    for (m, &s) in shell_sigma.iter().enumerate() {
        direct += shell_count(dim, m as i64) as f64 * s * s;
    }
    if tail_coeff == 0.0 {
        return (direct, 0.0);
    }
    let bracket = shell_decay_sum(
        dim,
        2.0 * tail_exponent,
        tail_shift,
        shell_sigma.len() as i64,
        1e-12,
        1 << 22,
    );
    let c2 = tail_coeff * tail_coeff;
    (direct + c2 * bracket.upper(), c2 * bracket.uncertainty())
}

/// ℙ(|F − 𝔼F| > λ) ≤ 2·exp(−2λ²/σ²); a deterministic functional (σ² = 0)
/// gets the trivial tail 0 for positive λ.
pub fn mcdiarmid_bound(spec: &McDiarmidSpec, lambda: f64) -> Result<f64> {
    if !(lambda >= 0.0) {
        return Err(Error::contract("mcdiarmid_bound", "lambda must be ≥ 0"));
    }
    if spec.sigma_sq == 0.0 {
        return Ok(if lambda > 0.0 { 0.0 } else { 2.0 });
    }
    Ok(2.0 * (-2.0 * lambda * lambda / spec.sigma_sq).exp())
}

/// The box energy functional ω ↦ h^d Σ_k V_ω(x_k) used by the energy-side
/// concentration experiments.
pub fn box_energy_functional(
    evaluator: &crate::disorder::AlloyEvaluator,
) -> impl Fn(&DisorderSample) -> Result<f64> + Sync + '_ {
    move |sample| Ok(evaluator.squared_potential(sample)?.box_integral())
}

/// The linear minorant functional ω ↦ Σ_{|j| ≤ R} q_j (L+|j|)^{−α}.
pub fn linear_minorant_functional(
    dim: usize,
    side_length: f64,
    alpha: f64,
    radius: i64,
) -> impl Fn(&DisorderSample) -> Result<f64> + Sync {
    move |sample| {
        let mut total = 0.0;
        crate::lattice::for_each_site(dim, radius.min(sample.truncation_radius), |site| {
            let q = sample.coupling(site);
            if q != 0.0 {
                total += q * (side_length + sup_norm_int(site) as f64).powf(-alpha);
            }
        });
        Ok(total)
    }
}

/// One grid point of the tail-verification table.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct TailPoint {
    pub lambda: f64,
    pub empirical: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub bound: f64,
}

/// Wilson score interval for `hits` successes out of `n` at quantile z.
pub fn wilson_interval(hits: usize, n: usize, z: f64) -> (f64, f64) {
    assert!(n > 0 && hits <= n);
    let nf = n as f64;
    let p = hits as f64 / nf;
    let z2 = z * z;
    let denom = 1.0 + z2 / nf;
    let center = (p + z2 / (2.0 * nf)) / denom;
    let half = z * (p * (1.0 - p) / nf + z2 / (4.0 * nf * nf)).sqrt() / denom;
    // at the boundaries the exact endpoints are 0 and 1; keep them free of
    // rounding jitter
    let lo = if hits == 0 { 0.0 } else { (center - half).max(0.0) };
    let hi = if hits == n { 1.0 } else { (center + half).min(1.0) };
    (lo, hi)
}

/// Monte Carlo estimate of ℙ(|F − F̄| > λ) over a λ grid, with Wilson 99%
/// intervals and the analytic bound alongside. Deterministic in `seed`
/// (per-sample streams, fixed reduction order).
pub fn empirical_tail<F>(
    functional: &F,
    spec: &McDiarmidSpec,
    law: &CouplingLaw,
    sample_radius: i64,
    samples: usize,
    lambda_grid: &[f64],
    seed: u64,
) -> Result<Vec<TailPoint>>
where
    F: Fn(&DisorderSample) -> Result<f64> + Sync,
{
    if samples < 1000 {
        return Err(Error::contract("empirical_tail", "need at least 10³ samples"));
    }
    let values = (0..samples)
        .into_par_iter()
        .map(|s| {
            let sample = sample_couplings_dim(law, spec.dim, sample_radius, seed, s as u64)?;
            functional(&sample)
        })
        .collect::<Result<Vec<f64>>>()?;
    let mean = values.iter().sum::<f64>() / samples as f64;
    lambda_grid
        .iter()
        .map(|&lambda| {
            let hits = values.iter().filter(|&&v| (v - mean).abs() > lambda).count();
            let (ci_low, ci_high) = wilson_interval(hits, samples, WILSON_Z99);
            Ok(TailPoint {
                lambda,
                empirical: hits as f64 / samples as f64,
                ci_low,
                ci_high,
                bound: mcdiarmid_bound(spec, lambda)?,
            })
        })
        .collect()
}

/// Brute verification of |F(q) − F(q′)| ≤ σ_j for pairs differing only in
/// coordinate j: each trial redraws the field and sweeps q_j over both
/// support endpoints and the sampled value. Returns the worst observed
/// difference, or a property-failure report naming the witness trial.
pub fn perturb_one_coordinate_check<F>(
    functional: &F,
    spec: &McDiarmidSpec,
    law: &CouplingLaw,
    site: &[i64],
    sample_radius: i64,
    trials: usize,
    seed: u64,
) -> Result<f64>
where
    F: Fn(&DisorderSample) -> Result<f64> + Sync,
{
    if trials < 100 {
        return Err(Error::contract("perturb_one_coordinate_check", "need at least 100 trials"));
    }
    if site.len() != spec.dim {
        return Err(Error::contract("perturb_one_coordinate_check", "site dimension mismatch"));
    }
    let sigma = spec.sigma_at(site);
    if sup_norm_int(site) > sample_radius {
        // the truncated functional cannot see this coordinate at all
        return Ok(0.0);
    }
    let flat = site_flat_index(site, sample_radius);
    let (lo, hi) = law.support_extremes();
    let diffs = (0..trials)
        .into_par_iter()
        .map(|trial| {
            let mut sample = sample_couplings_dim(law, spec.dim, sample_radius, seed, trial as u64)?;
            let drawn = sample.couplings[flat];
            let mut min_f = f64::INFINITY;
            let mut max_f = f64::NEG_INFINITY;
            for value in [drawn, lo, hi] {
                sample.couplings[flat] = value;
                let f = functional(&sample)?;
                min_f = min_f.min(f);
                max_f = max_f.max(f);
            }
            Ok(max_f - min_f)
        })
        .collect::<Result<Vec<f64>>>()?;
    let (worst_trial, worst) = diffs
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(t, &d)| (t, d))
        .expect("trials ≥ 100");
    if worst > sigma * (1.0 + 1e-12) {
        return Err(Error::PropertyFailure(format!(
            "coordinate {site:?}: observed one-coordinate change {worst:.6e} exceeds σ_j = {sigma:.6e} (seed {seed}, trial {worst_trial})"
        )));
    }
    Ok(worst)
}

/// One row of the finite-truncation convergence table.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct TruncationRow {
    pub radius: i64,
    /// max over trials of |F(q masked to |j| ≤ radius) − F(q)|.
    pub observed: f64,
    /// Σ_{|j| > radius} σ_j, the analytic remainder.
    pub bound: f64,
}

/// Demonstrates the infinite-index extension: masking all couplings beyond
/// each radius moves F by at most the σ-tail, which vanishes as the radius
/// grows. The reference field is drawn once per trial at the largest radius.
pub fn truncation_convergence<F>(
    functional: &F,
    spec: &McDiarmidSpec,
    law: &CouplingLaw,
    radii: &[i64],
    trials: usize,
    seed: u64,
) -> Result<Vec<TruncationRow>>
where
    F: Fn(&DisorderSample) -> Result<f64> + Sync,
{
    if radii.is_empty() || radii.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::contract("truncation_convergence", "radii must be strictly increasing"));
    }
    if trials == 0 {
        return Err(Error::contract("truncation_convergence", "need at least one trial"));
    }
    let r_max = *radii.last().unwrap();
    let per_trial = (0..trials)
        .into_par_iter()
        .map(|trial| {
            let sample = sample_couplings_dim(law, spec.dim, r_max, seed, trial as u64)?;
            let reference = functional(&sample)?;
            radii
                .iter()
                .map(|&r| {
                    let mut masked = sample.clone();
                    crate::lattice::for_each_site(spec.dim, r_max, |site| {
                        if sup_norm_int(site) > r {
                            masked.couplings[site_flat_index(site, r_max)] = 0.0;
                        }
                    });
                    Ok((functional(&masked)? - reference).abs())
                })
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<Vec<Vec<f64>>>>()?;
    Ok(radii
        .iter()
        .enumerate()
        .map(|(idx, &radius)| TruncationRow {
            radius,
            observed: per_trial.iter().map(|row| row[idx]).fold(0.0, f64::max),
            bound: spec.sigma_l1_beyond(radius),
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::disorder::AlloyEvaluator;
    use approx::assert_relative_eq;

    const POLY3: EnvelopeProfile = EnvelopeProfile::PolyDecay { alpha: 3.0, amplitude: 1.0 };
    const UNIT_BUMP: EnvelopeProfile = EnvelopeProfile::CompactBump { radius: 0.5, height: 1.0 };
    const UNIFORM01: CouplingLaw = CouplingLaw::Uniform { a: 0.0, b: 1.0 };

    #[test]
    fn bound_closed_form_points() {
        let spec = sigma_linear_minorant(1, 8.0, 3.0, 1.0).unwrap();
        assert_relative_eq!(mcdiarmid_bound(&spec, 0.0).unwrap(), 2.0);
        let sigma = spec.sigma_sq.sqrt();
        assert_relative_eq!(
            mcdiarmid_bound(&spec, sigma).unwrap(),
            2.0 * (-2.0f64).exp(),
            max_relative = 1e-12
        );
        assert!(mcdiarmid_bound(&spec, -1.0).is_err());
    }

    #[test]
    fn bound_dominates_exact_binomial_tail() {
        // n i.i.d. ±1 coordinates, F = Σx_i: σ_j = 2 each, σ² = 4n; the
        // exact symmetric binomial tail must sit below 2e^{−2λ²/σ²}
        for n in [5usize, 11, 17] {
            let spec = McDiarmidSpec {
                functional: FunctionalKind::LinearMinorant,
                shell_sigma: vec![2.0; n / 2 + 1],
                tail_coeff: 0.0,
                tail_shift: 0.0,
                tail_exponent: 2.0,
                sigma_sq: 4.0 * n as f64,
                sigma_sq_uncertainty: 0.0,
                dim: 1,
                side_length: 1.0,
                q_bound: 1.0,
                m_factor: 0,
                c_glob: 0.0,
            };
            // Pascal row for C(n, k)
            let mut row = vec![1.0f64];
            for _ in 0..n {
                let mut next = vec![1.0];
                next.extend(row.windows(2).map(|w| w[0] + w[1]));
                next.push(1.0);
                row = next;
            }
            let total = 2f64.powi(n as i32);
            for step in 0..=(2 * n) {
                let lambda = step as f64 * 0.5;
                let exact: f64 = row
                    .iter()
                    .enumerate()
                    .filter(|(k, _)| ((2 * k) as f64 - n as f64).abs() > lambda)
                    .map(|(_, c)| c / total)
                    .sum();
                assert!(
                    exact <= mcdiarmid_bound(&spec, lambda).unwrap() + 1e-12,
                    "n={n} λ={lambda}"
                );
            }
        }
    }

    #[test]
    fn energy_spec_case_split_and_consistency() {
        let grid = GridSpec::new(1, 8.0, 32).unwrap();
        let spec = sigma_energy_functional(&grid, &POLY3, &UNIFORM01, 3).unwrap();
        // C_glob = 4Q²S∞ with Q = 1
        assert_relative_eq!(spec.c_glob, 4.0 * POLY3.abs_periodized_sup_bound(1), max_relative = 1e-12);
        // near zone constant through |j| = 24, power tail after
        assert_eq!(spec.direct_radius(), 24);
        assert_relative_eq!(spec.sigma_at(&[24]), spec.sigma_at(&[0]));
        assert!(spec.sigma_at(&[25]) < spec.sigma_at(&[24]));
        let far = spec.sigma_at(&[50]);
        assert_relative_eq!(far, spec.tail_coeff * 50f64.powf(-3.0), max_relative = 1e-12);
        // the far formula dominates the true grid sum bound C_glob·L^d·f(|j|−L/2)
        assert!(far >= spec.c_glob * 8.0 * (1.0 + 50.0 - 4.0f64).powf(-3.0));
        // σ² consistency: independent recomputation of the shell sum
        let mut direct = 0.0;
        for m in 0..=spec.direct_radius() {
            let s = spec.sigma_at_radius(m);
            direct += shell_count(1, m) as f64 * s * s;
        }
        let tail = spec.tail_coeff
            * spec.tail_coeff
            * shell_decay_sum(1, 6.0, 0.0, spec.direct_radius() + 1, 1e-12, 1 << 22).upper();
        assert_relative_eq!(spec.sigma_sq, direct + tail, max_relative = 1e-12);
    }

    #[test]
    fn energy_sigma_sq_scales_like_volume() {
        // doubling L roughly doubles the d=1 near-zone index count
        let s8 = sigma_energy_functional(
            &GridSpec::new(1, 8.0, 32).unwrap(),
            &POLY3,
            &UNIFORM01,
            3,
        )
        .unwrap();
        let s16 = sigma_energy_functional(
            &GridSpec::new(1, 16.0, 64).unwrap(),
            &POLY3,
            &UNIFORM01,
            3,
        )
        .unwrap();
        let ratio = s16.sigma_sq / s8.sigma_sq;
        assert!((1.0..=4.0).contains(&ratio), "σ²(16)/σ²(8) = {ratio}");
        // and σ²/L^d stays bounded across a sweep
        let mut scaled = Vec::new();
        for l in [4.0, 8.0, 16.0, 32.0] {
            let grid = GridSpec::new(1, l, (4.0 * l) as usize).unwrap();
            let spec = sigma_energy_functional(&grid, &POLY3, &UNIFORM01, 3).unwrap();
            scaled.push(spec.sigma_sq / l);
        }
        let max = scaled.iter().fold(0.0f64, |a, &b| a.max(b));
        let min = scaled.iter().fold(f64::INFINITY, |a, &b| a.min(b));
        assert!(max / min < 4.0, "σ²/L drifts: {scaled:?}");
    }

    #[test]
    fn degenerate_law_means_deterministic_functional() {
        let grid = GridSpec::new(1, 4.0, 16).unwrap();
        let law = CouplingLaw::TwoPoint { p_zero: 0.5, value: 0.0 };
        let spec = sigma_energy_functional(&grid, &POLY3, &law, 3).unwrap();
        assert_eq!(spec.c_glob, 0.0);
        assert_eq!(spec.sigma_sq, 0.0);
        assert!(spec.shell_sigma.iter().all(|&s| s == 0.0));
        assert_eq!(mcdiarmid_bound(&spec, 0.5).unwrap(), 0.0);
        assert_eq!(mcdiarmid_bound(&spec, 0.0).unwrap(), 2.0);
    }

    #[test]
    fn compact_envelope_sigma_vanishes_off_the_box() {
        let grid = GridSpec::new(1, 4.0, 16).unwrap();
        let spec = sigma_energy_functional(&grid, &UNIT_BUMP, &UNIFORM01, 3).unwrap();
        // unit-cell support: S∞ = ‖f‖_∞ = 1, so C_glob = 4Q²
        assert_relative_eq!(spec.c_glob, 4.0);
        // the bump at |j| ≥ 3 misses Λ₄ = [−2, 2] entirely
        assert!(spec.sigma_at(&[2]) > 0.0);
        assert_eq!(spec.sigma_at(&[3]), 0.0);
        assert_eq!(spec.sigma_at(&[1000]), 0.0);
        assert_eq!(spec.sigma_l1_beyond(2), 0.0);
    }

    #[test]
    fn linear_minorant_matches_the_stated_profile() {
        let spec = sigma_linear_minorant(1, 8.0, 3.0, 2.0).unwrap();
        assert_relative_eq!(spec.sigma_at(&[0]), 2.0 * 2.0 * 8.0f64.powf(-3.0));
        assert_relative_eq!(spec.sigma_at(&[5]), 4.0 * 13.0f64.powf(-3.0), max_relative = 1e-14);
        // σ²(2L)/σ²(L) within a factor 2 of 2^{d−2α} = 2^{−5}
        let s16 = sigma_linear_minorant(1, 16.0, 3.0, 2.0).unwrap();
        let ratio = s16.sigma_sq / spec.sigma_sq;
        let target = 2f64.powf(1.0 - 6.0);
        assert!(ratio >= target / 2.0 && ratio <= target * 2.0, "ratio {ratio} vs {target}");
        // Q = 0 collapses everything
        let zero = sigma_linear_minorant(1, 8.0, 3.0, 0.0).unwrap();
        assert_eq!(zero.sigma_sq, 0.0);
        assert_eq!(zero.sigma_at(&[7]), 0.0);
        // α ≤ d is rejected
        assert!(sigma_linear_minorant(1, 8.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn perturb_check_energy_stays_within_sigma() {
        let grid = GridSpec::new(1, 4.0, 16).unwrap();
        let spec = sigma_energy_functional(&grid, &POLY3, &UNIFORM01, 3).unwrap();
        let ev = AlloyEvaluator::new(&grid, &POLY3, UNIFORM01.support_bound()).unwrap();
        let functional = box_energy_functional(&ev);
        let radius = ev.truncation_radius();
        for site in [[0i64], [2], [30], [200]] {
            let worst =
                perturb_one_coordinate_check(&functional, &spec, &UNIFORM01, &site, radius, 120, 0x5e41)
                    .unwrap();
            assert!(worst <= spec.sigma_at(&site));
            if site[0] == 0 {
                // the near coordinate really moves the energy
                assert!(worst > 1e-4);
            }
        }
    }

    #[test]
    fn perturb_check_reports_violations() {
        let grid = GridSpec::new(1, 4.0, 16).unwrap();
        let mut spec = sigma_energy_functional(&grid, &POLY3, &UNIFORM01, 3).unwrap();
        // sabotage the constant: the observed difference must now exceed it
        spec.shell_sigma[0] = 1e-9;
        let ev = AlloyEvaluator::new(&grid, &POLY3, UNIFORM01.support_bound()).unwrap();
        let functional = box_energy_functional(&ev);
        let err = perturb_one_coordinate_check(
            &functional,
            &spec,
            &UNIFORM01,
            &[0],
            ev.truncation_radius(),
            120,
            0x5e42,
        )
        .unwrap_err();
        assert!(matches!(err, Error::PropertyFailure(_)));
    }

    #[test]
    fn perturb_check_minorant_is_exactly_tight() {
        // symmetric support: sweeping q_j over {−1, 1} realizes σ_j = 2Q(L+|j|)^{−α}
        let law = CouplingLaw::Uniform { a: -1.0, b: 1.0 };
        let spec = sigma_linear_minorant(1, 8.0, 3.0, 1.0).unwrap();
        let functional = linear_minorant_functional(1, 8.0, 3.0, 64);
        let worst =
            perturb_one_coordinate_check(&functional, &spec, &law, &[4], 64, 150, 0x71e).unwrap();
        assert_relative_eq!(worst, spec.sigma_at(&[4]), max_relative = 1e-12);
    }

    #[test]
    fn empirical_tail_deterministic_functional_is_flat_zero() {
        let law = CouplingLaw::TwoPoint { p_zero: 0.4, value: 0.0 };
        let spec = sigma_linear_minorant(1, 8.0, 3.0, law.support_bound()).unwrap();
        let functional = linear_minorant_functional(1, 8.0, 3.0, 32);
        let table =
            empirical_tail(&functional, &spec, &law, 32, 1000, &[0.01, 0.1, 1.0], 0xace).unwrap();
        for point in table {
            assert_eq!(point.empirical, 0.0);
            assert_eq!(point.bound, 0.0);
        }
    }

    #[test]
    fn empirical_tail_sits_under_the_bound() {
        let grid = GridSpec::new(1, 4.0, 16).unwrap();
        let spec = sigma_energy_functional(&grid, &UNIT_BUMP, &UNIFORM01, 3).unwrap();
        let ev = AlloyEvaluator::new(&grid, &UNIT_BUMP, UNIFORM01.support_bound()).unwrap();
        let functional = box_energy_functional(&ev);
        let sigma = spec.sigma_sq.sqrt();
        let grid_lambda: Vec<f64> = (1..=10).map(|k| 0.3 * k as f64 * sigma).collect();
        let table = empirical_tail(
            &functional,
            &spec,
            &UNIFORM01,
            ev.truncation_radius(),
            2000,
            &grid_lambda,
            0xbead,
        )
        .unwrap();
        for point in &table {
            let slack = 3.0 * (point.ci_high - point.empirical);
            assert!(
                point.empirical <= point.bound + slack,
                "λ={}: {} vs {}",
                point.lambda,
                point.empirical,
                point.bound
            );
        }
        // the empirical curve is a tail: nonincreasing in λ
        for w in table.windows(2) {
            assert!(w[1].empirical <= w[0].empirical);
        }
    }

    #[test]
    fn truncation_rows_certify_convergence() {
        let grid = GridSpec::new(1, 4.0, 16).unwrap();
        let spec = sigma_energy_functional(&grid, &POLY3, &UNIFORM01, 3).unwrap();
        let ev = AlloyEvaluator::new(&grid, &POLY3, UNIFORM01.support_bound()).unwrap();
        let functional = box_energy_functional(&ev);
        let r_cert = ev.truncation_radius();
        let radii = vec![4, 8, 16, 32, 64, r_cert];
        let rows =
            truncation_convergence(&functional, &spec, &UNIFORM01, &radii, 8, 0xfade).unwrap();
        for row in &rows {
            assert!(row.observed <= row.bound * (1.0 + 1e-9), "radius {}", row.radius);
        }
        // α = d+2: the analytic remainder at least halves per doubling
        for w in rows.windows(2).take(4) {
            assert!(w[1].bound <= 0.6 * w[0].bound);
            assert!(w[1].observed <= w[0].observed * 1.01 + 1e-15);
        }
        // and it is eventually tiny
        assert!(spec.sigma_l1_beyond(200_000) < 1e-8);
    }

    #[test]
    fn compact_truncation_is_exact_beyond_support() {
        let grid = GridSpec::new(1, 4.0, 16).unwrap();
        let spec = sigma_energy_functional(&grid, &UNIT_BUMP, &UNIFORM01, 3).unwrap();
        let ev = AlloyEvaluator::new(&grid, &UNIT_BUMP, UNIFORM01.support_bound()).unwrap();
        let functional = box_energy_functional(&ev);
        let r = ev.truncation_radius();
        let rows =
            truncation_convergence(&functional, &spec, &UNIFORM01, &[3, r.max(4)], 6, 0xb0b).unwrap();
        assert_eq!(rows[0].observed, 0.0);
        assert_eq!(rows[0].bound, 0.0);
    }

    #[test]
    fn wilson_interval_brackets_the_point_estimate() {
        for (hits, n) in [(0usize, 1000usize), (13, 1000), (500, 1000), (1000, 1000)] {
            let (lo, hi) = wilson_interval(hits, n, WILSON_Z99);
            let p = hits as f64 / n as f64;
            assert!(lo <= p && p <= hi);
            assert!((0.0..=1.0).contains(&lo) && (0.0..=1.0).contains(&hi));
        }
        // 99% interval is wider than 95%
        let (lo99, hi99) = wilson_interval(13, 1000, WILSON_Z99);
        let (lo95, hi95) = wilson_interval(13, 1000, 1.96);
        assert!(lo99 < lo95 && hi95 < hi99);
    }
}
