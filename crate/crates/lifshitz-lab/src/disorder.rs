//! Disorder realizations and the squared alloy potential.
//!
//! A realization draws i.i.d. couplings q_i for each lattice site i ∈ ℤ^d
//! with |i|_∞ ≤ R_trunc, forms the alloy field U_ω(x) = Σ_i q_i f(x − i)
//! from the single-site envelope f, and squares it into the potential
//! V_ω = U_ω² ≥ 0. The truncation radius is certified: the sup-norm tail of
//! the omitted sum must fall below 1e−8 of the field scale, which the decay
//! bound |f(x)| ≤ C(1+|x|_∞)^{−α} with α > d makes reachable.
//!
//! The moment constant ρ = Var(q₀)‖f‖₂² + 𝔼(q₀)²∫_{Λ₁}(Σ_i f(x−i))² dx is the
//! expected potential mass per unit cell, 𝔼(∫_{Λ₁}V) = ρ; both integrals are
//! computed by midpoint quadrature with Richardson refinement, using the
//! periodization ∫_{ℝ^d} f^p = ∫_{Λ₁} Σ_i f(x−i)^p to fold the whole-space
//! integrals into the unit cell.

use crate::error::{Error, Result};
use crate::grid::GridSpec;
use crate::lattice::{for_each_site, shell_decay_sum, site_count, sup_norm, sup_norm_int};
use crate::rng::stream_rng;
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Relative tolerance for the certified truncation tail.
pub const TRUNCATION_RTOL: f64 = 1e-8;
/// Cap on the number of lattice sites a single sample may carry.
pub const SITE_CAP: u128 = 1 << 26;

/// I.i.d. law of a single coupling q₀. Support is bounded and contains 0
/// for the built-in families (the two-point law keeps 0 with probability
/// `p_zero`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum CouplingLaw {
    /// Uniform on [a, b].
    Uniform { a: f64, b: f64 },
    /// q = 0 with probability `p_zero`, q = `value` otherwise.
    TwoPoint { p_zero: f64, value: f64 },
    /// Exponential(rate) conditioned on [0, cutoff]; mass piles up toward 0.
    TruncatedExponential { rate: f64, cutoff: f64 },
}

impl CouplingLaw {
    pub fn validate(&self) -> Result<()> {
        match *self {
            CouplingLaw::Uniform { a, b } => {
                if !(a.is_finite() && b.is_finite() && a <= b) {
                    return Err(Error::config("law.uniform", "need finite a ≤ b"));
                }
            }
            CouplingLaw::TwoPoint { p_zero, value } => {
                if !(0.0..=1.0).contains(&p_zero) || !value.is_finite() {
                    return Err(Error::config("law.two_point", "need p_zero ∈ [0,1], finite value"));
                }
            }
            CouplingLaw::TruncatedExponential { rate, cutoff } => {
                if !(rate.is_finite() && rate > 0.0 && cutoff.is_finite() && cutoff > 0.0) {
                    return Err(Error::config(
                        "law.truncated_exponential",
                        "need rate > 0 and cutoff > 0",
                    ));
                }
            }
        }
        Ok(())
    }

    /// Stricter checks for experiment configs: support must contain 0 and
    /// more than one point, so the small-ball condition is meaningful.
    pub fn check_assumptions(&self) -> Result<()> {
        self.validate()?;
        match *self {
            CouplingLaw::Uniform { a, b } => {
                if a > 0.0 || b < 0.0 {
                    return Err(Error::config("law.uniform", "support must contain 0"));
                }
                if a == b {
                    return Err(Error::config("law.uniform", "support must have more than one point"));
                }
            }
            CouplingLaw::TwoPoint { p_zero, value } => {
                if p_zero <= 0.0 {
                    return Err(Error::config("law.two_point", "0 must carry positive mass"));
                }
                if p_zero >= 1.0 || value == 0.0 {
                    return Err(Error::config("law.two_point", "support must have more than one point"));
                }
            }
            CouplingLaw::TruncatedExponential { .. } => {}
        }
        Ok(())
    }

    /// Q = sup |supp q₀|.
    pub fn support_bound(&self) -> f64 {
        match *self {
            CouplingLaw::Uniform { a, b } => a.abs().max(b.abs()),
            CouplingLaw::TwoPoint { value, .. } => value.abs(),
            CouplingLaw::TruncatedExponential { cutoff, .. } => cutoff,
        }
    }

    /// Endpoints (min, max) of the support.
    pub fn support_extremes(&self) -> (f64, f64) {
        match *self {
            CouplingLaw::Uniform { a, b } => (a, b),
            CouplingLaw::TwoPoint { value, .. } => (value.min(0.0), value.max(0.0)),
            CouplingLaw::TruncatedExponential { cutoff, .. } => (0.0, cutoff),
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            CouplingLaw::Uniform { a, b } => 0.5 * (a + b),
            CouplingLaw::TwoPoint { p_zero, value } => (1.0 - p_zero) * value,
            CouplingLaw::TruncatedExponential { rate, cutoff } => {
                let z = 1.0 - (-rate * cutoff).exp();
                1.0 / rate - cutoff * (-rate * cutoff).exp() / z
            }
        }
    }

    pub fn variance(&self) -> f64 {
        match *self {
            CouplingLaw::Uniform { a, b } => (b - a) * (b - a) / 12.0,
            CouplingLaw::TwoPoint { p_zero, value } => value * value * p_zero * (1.0 - p_zero),
            CouplingLaw::TruncatedExponential { rate, cutoff } => {
                let e = (-rate * cutoff).exp();
                let z = 1.0 - e;
                let m1 = 1.0 / rate - cutoff * e / z;
                let m2 = (2.0 / (rate * rate) * z - cutoff * cutoff * e - 2.0 * cutoff * e / rate) / z;
                m2 - m1 * m1
            }
        }
    }

    /// Small-ball pair (C, K) with ℙ(|q| < ε) ≥ C·ε^K for 0 < ε ≤ Q.
    pub fn small_ball_pair(&self) -> (f64, f64) {
        match *self {
            CouplingLaw::Uniform { a, b } => (1.0 / (b - a), 1.0),
            CouplingLaw::TwoPoint { p_zero, .. } => (p_zero, 0.0),
            CouplingLaw::TruncatedExponential { rate, cutoff } => {
                let z = 1.0 - (-rate * cutoff).exp();
                (rate * (-rate * cutoff).exp() / z, 1.0)
            }
        }
    }

    pub fn sample(&self, rng: &mut impl Rng) -> f64 {
        match *self {
            CouplingLaw::Uniform { a, b } => {
                if a == b {
                    a
                } else {
                    rng.random_range(a..b)
                }
            }
            CouplingLaw::TwoPoint { p_zero, value } => {
                if rng.random::<f64>() < p_zero {
                    0.0
                } else {
                    value
                }
            }
            CouplingLaw::TruncatedExponential { rate, cutoff } => {
                let z = 1.0 - (-rate * cutoff).exp();
                let u: f64 = rng.random();
                -(1.0 - u * z).ln() / rate
            }
        }
    }

    /// Exact ln ℙ(|q| ≤ ε); −∞ when the event is null.
    pub fn log_prob_abs_le(&self, eps: f64) -> f64 {
        match *self {
            CouplingLaw::Uniform { a, b } => {
                if a == b {
                    return if a.abs() <= eps { 0.0 } else { f64::NEG_INFINITY };
                }
                let width = (b.min(eps) - a.max(-eps)).max(0.0);
                (width / (b - a)).ln()
            }
            CouplingLaw::TwoPoint { p_zero, value } => {
                if value.abs() <= eps {
                    0.0
                } else {
                    p_zero.ln()
                }
            }
            CouplingLaw::TruncatedExponential { rate, cutoff } => {
                let z = 1.0 - (-rate * cutoff).exp();
                let ze = 1.0 - (-rate * cutoff.min(eps)).exp();
                (ze / z).ln()
            }
        }
    }

    /// Exact draw from the law conditioned on |q| ≤ ε (coordinate-wise
    /// construction of the rare event — no rejection).
    pub fn sample_conditioned_abs_le(&self, eps: f64, rng: &mut impl Rng) -> Result<f64> {
        if self.log_prob_abs_le(eps) == f64::NEG_INFINITY {
            return Err(Error::contract(
                "sample_conditioned_abs_le",
                format!("event |q| ≤ {eps} has probability zero under {self:?}"),
            ));
        }
        match *self {
            CouplingLaw::Uniform { a, b } => {
                let lo = a.max(-eps);
                let hi = b.min(eps);
                Ok(if lo == hi { lo } else { rng.random_range(lo..hi) })
            }
            CouplingLaw::TwoPoint { value, .. } => {
                if value.abs() <= eps {
                    Ok(self.sample(rng))
                } else {
                    Ok(0.0)
                }
            }
            CouplingLaw::TruncatedExponential { rate, cutoff } => {
                let ze = 1.0 - (-rate * cutoff.min(eps)).exp();
                let u: f64 = rng.random();
                Ok(-(1.0 - u * ze).ln() / rate)
            }
        }
    }
}

/// Single-site envelope f. Both families are nonnegative and depend on the
/// offset only through |x|_∞ (the compact bump's half-open faces excepted).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EnvelopeProfile {
    /// f(x) = amplitude·(1 + |x|_∞)^{−alpha}. The two-sided decay bounds
    /// C₁(1+|x|)^{−α} ≤ f ≤ C₂(1+|x|)^{−α} hold with C₁ = C₂ = amplitude.
    PolyDecay { alpha: f64, amplitude: f64 },
    /// f(x) = height on the half-open cube [−radius, radius)^d, else 0.
    /// radius = 1/2 tiles ℝ^d exactly: Σ_i f(x−i) ≡ height.
    CompactBump { radius: f64, height: f64 },
}

impl EnvelopeProfile {
    pub fn validate(&self, dim: usize) -> Result<()> {
        match *self {
            EnvelopeProfile::PolyDecay { alpha, amplitude } => {
                if !(alpha.is_finite() && alpha > dim as f64) {
                    return Err(Error::config(
                        "envelope.alpha",
                        format!("decay exponent must exceed the dimension d = {dim}"),
                    ));
                }
                if !(amplitude.is_finite() && amplitude > 0.0) {
                    return Err(Error::config("envelope.amplitude", "amplitude must be positive"));
                }
            }
            EnvelopeProfile::CompactBump { radius, height } => {
                if !(radius.is_finite() && radius > 0.0 && height.is_finite() && height > 0.0) {
                    return Err(Error::config("envelope.compact_bump", "radius and height must be positive"));
                }
            }
        }
        Ok(())
    }

    pub fn evaluate(&self, offset: &[f64]) -> f64 {
        match *self {
            EnvelopeProfile::PolyDecay { alpha, amplitude } => {
                amplitude * (1.0 + sup_norm(offset)).powf(-alpha)
            }
            EnvelopeProfile::CompactBump { radius, height } => {
                if offset.iter().all(|&c| -radius <= c && c < radius) {
                    height
                } else {
                    0.0
                }
            }
        }
    }

    /// f at sup-norm radius ρ, treating the compact bump as the open cube
    /// |x|_∞ < radius; callers on lattice-aligned points must avoid exact
    /// boundary hits (see [`AlloyEvaluator`]).
    fn evaluate_radial(&self, rho: f64) -> f64 {
        match *self {
            EnvelopeProfile::PolyDecay { alpha, amplitude } => amplitude * (1.0 + rho).powf(-alpha),
            EnvelopeProfile::CompactBump { radius, height } => {
                if rho < radius {
                    height
                } else {
                    0.0
                }
            }
        }
    }

    /// Decay exponent α for the polynomial family.
    pub fn alpha(&self) -> Option<f64> {
        match *self {
            EnvelopeProfile::PolyDecay { alpha, .. } => Some(alpha),
            EnvelopeProfile::CompactBump { .. } => None,
        }
    }

    /// C₂ with |f(x)| ≤ C₂(1+|x|_∞)^{−α}; equals C₁ for the exact power law.
    pub fn decay_upper_constant(&self) -> f64 {
        match *self {
            EnvelopeProfile::PolyDecay { amplitude, .. } => amplitude,
            EnvelopeProfile::CompactBump { height, .. } => height,
        }
    }

    /// Radius beyond which f vanishes identically, if any.
    pub fn support_radius(&self) -> Option<f64> {
        match *self {
            EnvelopeProfile::PolyDecay { .. } => None,
            EnvelopeProfile::CompactBump { radius, .. } => Some(radius),
        }
    }

    /// ‖f‖₁ over ℝ^d in closed form (sup-norm level sets have volume (2t)^d).
    pub fn l1_norm(&self, dim: usize) -> f64 {
        match *self {
            EnvelopeProfile::PolyDecay { alpha, amplitude } => {
                amplitude * poly_lp_integral(dim, alpha)
            }
            EnvelopeProfile::CompactBump { radius, height } => {
                height * (2.0 * radius).powi(dim as i32)
            }
        }
    }

    /// ‖f‖₂² over ℝ^d in closed form.
    pub fn l2_norm_sq(&self, dim: usize) -> f64 {
        match *self {
            EnvelopeProfile::PolyDecay { alpha, amplitude } => {
                amplitude * amplitude * poly_lp_integral(dim, 2.0 * alpha)
            }
            EnvelopeProfile::CompactBump { radius, height } => {
                height * height * (2.0 * radius).powi(dim as i32)
            }
        }
    }

    /// Certified upper bound on S_∞ = sup_x Σ_i |f(x − i)|.
    ///
    /// The periodized sum is ℤ^d-periodic, so x can be taken with |x|_∞ ≤ 1/2;
    /// then |x − i|_∞ ≥ |i|_∞ − 1/2, giving
    /// S_∞ ≤ f(0)-term + Σ_{m≥1} shell(m)·f-bound(m − 1/2).
    pub fn abs_periodized_sup_bound(&self, dim: usize) -> f64 {
        match *self {
            EnvelopeProfile::PolyDecay { alpha, amplitude } => {
                let tail = shell_decay_sum(dim, alpha, 0.5, 1, 1e-10, 2_000_000);
                amplitude * (1.0 + tail.upper())
            }
            EnvelopeProfile::CompactBump { radius, height } => {
                // per axis, a half-open window of length w = 2r contains
                // exactly w integers when w is integral, at most ⌈w⌉ otherwise
                let width = 2.0 * radius;
                let per_axis = if width.fract() == 0.0 { width } else { width.ceil() };
                height * per_axis.powi(dim as i32)
            }
        }
    }
}

/// Certified upper bound on sup_j h^d Σ_k |f(x_k − j)| over integer shifts j
/// — the grid analogue of ‖f‖₁, which the midpoint sum can slightly exceed.
///
/// Requires a commensurate grid (n even, n/L integer): there every offset
/// x_k − j lies on the half-step lattice {(u+1/2)h : u ∈ ℤ}^d regardless of
/// j, so one translate-independent lattice sum dominates all box sums.
pub fn discrete_translate_l1_bound(grid: &GridSpec, envelope: &EnvelopeProfile) -> Result<f64> {
    envelope.validate(grid.dim)?;
    let n = grid.points_per_side;
    let s = n as f64 / grid.side_length;
    if n % 2 != 0 || s <= 0.0 || s.fract() != 0.0 {
        return Err(Error::config(
            "grid",
            "bounded-difference constants need a commensurate grid: points_per_side even and points_per_side/side_length an integer",
        ));
    }
    let h = grid.spacing();
    let d = grid.dim;
    match *envelope {
        EnvelopeProfile::CompactBump { radius, height } => {
            // closed-boundary count per axis safely over-counts the
            // half-open cube
            let lim = (radius / h).ceil() as i64 + 2;
            let per_axis = (-lim..=lim)
                .filter(|&u| {
                    let off = (u as f64 + 0.5) * h;
                    -radius <= off && off <= radius
                })
                .count();
            Ok(height * (per_axis as f64 * h).powi(d as i32))
        }
        EnvelopeProfile::PolyDecay { alpha, amplitude } => {
            // shells of the half-step lattice: (2t+2)^d − (2t)^d offsets at
            // sup-norm radius (t+1/2)h
            let hpow = h.powi(d as i32);
            let mut partial = 0.0;
            let mut t: i64 = 0;
            loop {
                let count = (2.0 * t as f64 + 2.0).powi(d as i32) - (2.0 * t as f64).powi(d as i32);
                partial += count * amplitude * (1.0 + (t as f64 + 0.5) * h).powf(-alpha);
                t += 1;
                if t < 1 {
                    continue;
                }
                // crude dominator: term(t) ≤ 2d·amp·4^{d−1}·h^{−α}·t^{d−1−α},
                // summed by first-term-plus-integral
                let x = t as f64;
                let tail = 2.0
                    * d as f64
                    * amplitude
                    * 4f64.powi(d as i32 - 1)
                    * h.powf(-alpha)
                    * (x.powf(d as f64 - 1.0 - alpha)
                        + x.powf(d as f64 - alpha) / (alpha - d as f64));
                if tail <= 1e-9 * partial || t >= 2_000_000 {
                    // small inflation absorbs rounding in the long accumulation
                    return Ok((partial + tail) * hpow * (1.0 + 1e-9));
                }
            }
        }
    }
}

/// ∫_{ℝ^d}(1+|x|_∞)^{−p} dx = d·2^d·(d−1)!/Π_{k=1..d}(p−k), for p > d.
fn poly_lp_integral(dim: usize, p: f64) -> f64 {
    assert!(p > dim as f64);
    let mut denom = 1.0;
    let mut fact = 1.0;
    for k in 1..=dim {
        denom *= p - k as f64;
        if k < dim {
            fact *= k as f64;
        }
    }
    dim as f64 * 2f64.powi(dim as i32) * fact / denom
}

/// One disorder realization: couplings over the box |i|_∞ ≤ truncation_radius
/// in odometer order, reproducible from (seed, stream).
#[derive(Debug, Clone)]
pub struct DisorderSample {
    pub couplings: Vec<f64>,
    pub truncation_radius: i64,
    pub dim: usize,
    pub seed: u64,
    pub stream: u64,
    /// Q of the generating law, carried for tail certificates.
    pub support_bound: f64,
}

impl DisorderSample {
    /// q_i, with sites outside the truncation box reading 0.
    pub fn coupling(&self, site: &[i64]) -> f64 {
        debug_assert_eq!(site.len(), self.dim);
        if sup_norm_int(site) > self.truncation_radius {
            return 0.0;
        }
        self.couplings[crate::lattice::site_flat_index(site, self.truncation_radius)]
    }
}

/// I.i.d. couplings on |i|_∞ ≤ region_radius; the draw order is the odometer
/// order of the sites, so the realization is a pure function of the seeds.
pub fn sample_couplings(
    law: &CouplingLaw,
    region_radius: i64,
    seed: u64,
    stream: u64,
) -> Result<DisorderSample> {
    law.validate()?;
    sample_couplings_dim(law, 1, region_radius, seed, stream)
}

/// [`sample_couplings`] for d-dimensional site boxes.
pub fn sample_couplings_dim(
    law: &CouplingLaw,
    dim: usize,
    region_radius: i64,
    seed: u64,
    stream: u64,
) -> Result<DisorderSample> {
    law.validate()?;
    if region_radius < 0 {
        return Err(Error::contract("sample_couplings", "region_radius must be ≥ 0"));
    }
    let count = site_count(dim, region_radius);
    if count > SITE_CAP {
        return Err(Error::Resource(format!(
            "disorder region holds {count} sites, beyond the {SITE_CAP} cap"
        )));
    }
    let mut rng = stream_rng(seed, stream);
    let couplings = (0..count as usize).map(|_| law.sample(&mut rng)).collect();
    Ok(DisorderSample {
        couplings,
        truncation_radius: region_radius,
        dim,
        seed,
        stream,
        support_bound: law.support_bound(),
    })
}

/// Evaluates U_ω and V_ω = U_ω² on a grid, reusing a per-(grid, envelope)
/// radial lookup table across samples.
///
/// When the grid is commensurate with the lattice (n even and n/L integer),
/// every offset x_k − i has sup-norm (u + 1/2)h for an integer u, so envelope
/// values come from a 1D table indexed by u — this removes all transcendental
/// calls from the per-sample inner loop. Incommensurate grids fall back to
/// direct evaluation, which is only viable for small truncation radii.
#[derive(Debug, Clone)]
pub struct AlloyEvaluator {
    grid: GridSpec,
    envelope: EnvelopeProfile,
    truncation_radius: i64,
    tail_bound: f64,
    radial_table: Option<RadialTable>,
}

#[derive(Debug, Clone)]
struct RadialTable {
    /// values[u] = f at sup-norm radius (u + 1/2)·h
    values: Vec<f64>,
    /// points per unit length s = n/L
    stride: i64,
}

impl AlloyEvaluator {
    /// Certify a truncation radius for (grid, envelope, Q) and precompute the
    /// lookup table. Fails when no affordable radius meets the tail tolerance.
    pub fn new(grid: &GridSpec, envelope: &EnvelopeProfile, support_bound: f64) -> Result<Self> {
        grid.validate()?;
        envelope.validate(grid.dim)?;
        let (radius, tail_bound) = certified_truncation_radius(grid, envelope, support_bound)?;
        Ok(Self::with_radius(grid, envelope, radius, tail_bound))
    }

    fn with_radius(
        grid: &GridSpec,
        envelope: &EnvelopeProfile,
        truncation_radius: i64,
        tail_bound: f64,
    ) -> Self {
        let radial_table = build_radial_table(grid, envelope, truncation_radius);
        AlloyEvaluator {
            grid: *grid,
            envelope: *envelope,
            truncation_radius,
            tail_bound,
            radial_table,
        }
    }

    pub fn truncation_radius(&self) -> i64 {
        self.truncation_radius
    }

    /// Certified sup-norm bound on the omitted tail Q·Σ_{|i|>R}|f| over Λ.
    pub fn tail_bound(&self) -> f64 {
        self.tail_bound
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    /// U_ω(x_k) for every grid point, in flat grid order.
    pub fn alloy_field(&self, sample: &DisorderSample) -> Result<Vec<f64>> {
        if sample.dim != self.grid.dim {
            return Err(Error::contract(
                "alloy_field",
                format!("sample dimension {} vs grid dimension {}", sample.dim, self.grid.dim),
            ));
        }
        if sample.truncation_radius < self.truncation_radius {
            return Err(Error::config(
                "sample.truncation_radius",
                format!(
                    "sample radius {} is below the certified radius {}; omitted tail bound {:.3e} would exceed tolerance",
                    sample.truncation_radius, self.truncation_radius, self.tail_bound
                ),
            ));
        }
        let total = self.grid.total_points();
        let mut field = vec![0.0f64; total];
        match &self.radial_table {
            Some(table) => {
                self.accumulate_fast(sample, table, &mut field);
            }
            None => {
                let cost = site_count(self.grid.dim, sample.truncation_radius)
                    .saturating_mul(total as u128);
                if cost > 1 << 31 {
                    return Err(Error::Resource(format!(
                        "direct alloy evaluation needs {cost} envelope calls; use a grid with n even and n/L integer to enable the lookup table"
                    )));
                }
                let mut diff = vec![0.0f64; self.grid.dim];
                for_each_site(self.grid.dim, sample.truncation_radius, |site| {
                    let q = sample.coupling(site);
                    if q == 0.0 {
                        return;
                    }
                    self.grid.for_each_point(|flat, x| {
                        for (dm, (&xm, &im)) in diff.iter_mut().zip(x.iter().zip(site.iter())) {
                            *dm = xm - im as f64;
                        }
                        field[flat] += q * self.envelope.evaluate(&diff);
                    });
                });
            }
        }
        Ok(field)
    }

    /// Table-driven accumulation: per site, per grid point, the per-axis
    /// half-step offset is u_m = max(o_m, −1 − o_m) with
    /// o_m = k_m − n/2 − i_m·s, and f = table[max_m u_m].
    fn accumulate_fast(&self, sample: &DisorderSample, table: &RadialTable, field: &mut [f64]) {
        let n = self.grid.points_per_side as i64;
        let half_n = n / 2;
        let d = self.grid.dim;
        let s = table.stride;
        let values = &table.values;
        // reach: sites farther than this from the box contribute exactly 0
        let reach = match self.envelope.support_radius() {
            Some(r) => {
                let max_x = 0.5 * self.grid.side_length;
                (max_x + r).ceil() as i64 + 1
            }
            None => sample.truncation_radius,
        };
        let reach = reach.min(sample.truncation_radius);

        if d == 1 {
            for i in -reach..=reach {
                let q = sample.coupling(&[i]);
                if q == 0.0 {
                    continue;
                }
                let base = -half_n - i * s;
                for (k, slot) in field.iter_mut().enumerate() {
                    let o = k as i64 + base;
                    let u = o.max(-1 - o) as usize;
                    *slot += q * values[u];
                }
            }
            return;
        }

        let mut site = vec![-reach; d];
        let mut multi = vec![0i64; d];
        let mut us = vec![0i64; d];
        loop {
            let q = sample.coupling(&site);
            if q != 0.0 {
                for m in multi.iter_mut() {
                    *m = 0;
                }
                for (m, u) in us.iter_mut().enumerate() {
                    let o = -half_n - site[m] * s;
                    *u = o.max(-1 - o);
                }
                for slot in field.iter_mut() {
                    let umax = us.iter().copied().max().unwrap();
                    *slot += q * values[umax as usize];
                    // advance grid odometer, refreshing the changed axis
                    for m in (0..d).rev() {
                        if multi[m] + 1 < n {
                            multi[m] += 1;
                            let o = multi[m] - half_n - site[m] * s;
                            us[m] = o.max(-1 - o);
                            break;
                        }
                        multi[m] = 0;
                        let o = -half_n - site[m] * s;
                        us[m] = o.max(-1 - o);
                    }
                }
            }
            // advance site odometer
            let mut m = d;
            loop {
                if m == 0 {
                    return;
                }
                m -= 1;
                if site[m] < reach {
                    site[m] += 1;
                    for c in site.iter_mut().skip(m + 1) {
                        *c = -reach;
                    }
                    break;
                }
            }
        }
    }

    /// V_ω = U_ω² on the grid.
    pub fn squared_potential(&self, sample: &DisorderSample) -> Result<PotentialField> {
        let mut values = self.alloy_field(sample)?;
        for v in values.iter_mut() {
            *v = *v * *v;
        }
        Ok(PotentialField { grid: self.grid, values })
    }
}

fn build_radial_table(
    grid: &GridSpec,
    envelope: &EnvelopeProfile,
    truncation_radius: i64,
) -> Option<RadialTable> {
    let n = grid.points_per_side;
    let s = n as f64 / grid.side_length;
    if n % 2 != 0 || s.fract() != 0.0 || s <= 0.0 {
        return None;
    }
    let s = s as i64;
    if let EnvelopeProfile::CompactBump { radius, .. } = envelope {
        // refuse the radial shortcut if a lattice-aligned point can land
        // exactly on the half-open boundary, where the cube indicator and
        // its radial surrogate disagree
        let h = grid.spacing();
        let t = radius / h - 0.5;
        if t >= 0.0 && t.fract() == 0.0 {
            return None;
        }
    }
    let u_max = n as i64 / 2 + truncation_radius * s;
    if u_max > (1 << 27) {
        return None;
    }
    let h = grid.spacing();
    let values = (0..=u_max)
        .map(|u| envelope.evaluate_radial((u as f64 + 0.5) * h))
        .collect();
    Some(RadialTable { values, stride: s })
}

/// Smallest radius R with Q·(tail of Σ|f| beyond R, over x ∈ Λ) below
/// `TRUNCATION_RTOL`·max(1, Q·S_∞), together with the certified tail bound.
fn certified_truncation_radius(
    grid: &GridSpec,
    envelope: &EnvelopeProfile,
    support_bound: f64,
) -> Result<(i64, f64)> {
    let dim = grid.dim;
    let half_l = 0.5 * grid.side_length;
    let min_radius = (half_l.ceil() as i64 + 1).max(1);
    let q = support_bound.abs();
    if q == 0.0 {
        return Ok((min_radius, 0.0));
    }
    let field_scale = q * envelope.abs_periodized_sup_bound(dim);
    let tol = TRUNCATION_RTOL * field_scale.max(1.0);

    if let Some(r) = envelope.support_radius() {
        let radius = (half_l + r).ceil() as i64 + 1;
        return Ok((radius.max(min_radius), 0.0));
    }
    let alpha = envelope.alpha().expect("unbounded-support envelope must carry a decay exponent");
    let amp = envelope.decay_upper_constant();
    // for |i|_∞ = m > L/2 the distance to the box is ≥ m − L/2, so the shell
    // contribution is ≤ shell(m)·amp·(1 + m − L/2)^{−α}
    let tail = |radius: i64| -> f64 {
        q * amp * shell_decay_sum(dim, alpha, 1.0 - half_l, radius + 1, 1e-4, 64).upper()
    };
    let mut hi = min_radius;
    while tail(hi) > tol {
        hi = hi.saturating_mul(2);
        if site_count(dim, hi) > SITE_CAP {
            return Err(Error::config(
                "envelope",
                format!(
                    "no affordable truncation radius: tail bound {:.3e} at radius {} still exceeds tolerance {:.3e}; raise alpha or use a compact envelope",
                    tail(hi.min(1 << 40)), hi, tol
                ),
            ));
        }
    }
    let mut lo = min_radius;
    while lo < hi {
        let mid = lo + (hi - lo) / 2;
        if tail(mid) <= tol {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    if site_count(dim, hi) > SITE_CAP {
        return Err(Error::Resource(format!(
            "certified truncation radius {hi} needs {} sites, beyond the {SITE_CAP} cap",
            site_count(dim, hi)
        )));
    }
    Ok((hi, tail(hi)))
}

/// Convenience single-shot evaluation; builds a throwaway evaluator.
pub fn alloy_field(
    sample: &DisorderSample,
    envelope: &EnvelopeProfile,
    grid: &GridSpec,
) -> Result<Vec<f64>> {
    let ev = AlloyEvaluator::new(grid, envelope, sample.support_bound)?;
    ev.alloy_field(sample)
}

/// Convenience single-shot V_ω = U_ω².
pub fn squared_potential(
    sample: &DisorderSample,
    envelope: &EnvelopeProfile,
    grid: &GridSpec,
) -> Result<PotentialField> {
    let ev = AlloyEvaluator::new(grid, envelope, sample.support_bound)?;
    ev.squared_potential(sample)
}

/// The sampled potential V_ω on a grid; values are ≥ 0 by construction.
#[derive(Debug, Clone)]
pub struct PotentialField {
    pub grid: GridSpec,
    pub values: Vec<f64>,
}

impl PotentialField {
    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn grid_mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    /// Midpoint-rule integral over the box: h^d·Σ_k V(x_k).
    pub fn box_integral(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.grid.cell_volume()
    }
}

/// min over grid points of V.
pub fn potential_min(field: &PotentialField) -> f64 {
    field.min()
}

/// min over grid points of U.
pub fn alloy_min(
    sample: &DisorderSample,
    envelope: &EnvelopeProfile,
    grid: &GridSpec,
) -> Result<f64> {
    Ok(alloy_field(sample, envelope, grid)?
        .into_iter()
        .fold(f64::INFINITY, f64::min))
}

/// Quadrature outcome with its refinement residual.
#[derive(Debug, Clone, Copy)]
pub struct QuadratureResult {
    pub value: f64,
    pub error_estimate: f64,
    pub refinement_levels: usize,
}

/// Moment constant ρ with the pieces that enter it.
#[derive(Debug, Clone, Copy)]
pub struct RhoReport {
    /// ρ = Var(q₀)·‖f‖₂² + 𝔼(q₀)²·∫_{Λ₁}(Σ_i f(x−i))² dx
    pub rho: f64,
    pub l2_norm_sq: QuadratureResult,
    pub cell_integral_sq_sum: QuadratureResult,
}

/// Expected potential mass per unit cell, 𝔼(∫_{Λ₁}V) = ρ.
pub fn mean_energy_density(
    law: &CouplingLaw,
    envelope: &EnvelopeProfile,
    dim: usize,
) -> Result<RhoReport> {
    law.validate()?;
    envelope.validate(dim)?;
    // ‖f‖₂² via periodization: ∫_{Λ₁} Σ_i f(x−i)² dx
    let l2 = unit_cell_quadrature(envelope, dim, SumPower::SquareOfTerms)?;
    let cell = unit_cell_quadrature(envelope, dim, SumPower::SquareOfSum)?;
    let var = law.variance();
    let mean = law.mean();
    Ok(RhoReport {
        rho: var * l2.value + mean * mean * cell.value,
        l2_norm_sq: l2,
        cell_integral_sq_sum: cell,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum SumPower {
    /// Σ_i f(x−i)² — integrates to ‖f‖₂².
    SquareOfTerms,
    /// (Σ_i f(x−i))² — the interaction integral in ρ.
    SquareOfSum,
}

/// Composite midpoint quadrature over Λ₁ = [−1/2, 1/2]^d with two columns of
/// Romberg extrapolation to 1e−6 relative; the lattice sum inside is
/// truncated with a certified remainder that is folded into the error
/// estimate. Indicator envelopes short-circuit to an exact closed form.
fn unit_cell_quadrature(
    envelope: &EnvelopeProfile,
    dim: usize,
    power: SumPower,
) -> Result<QuadratureResult> {
    if let EnvelopeProfile::CompactBump { radius, height } = *envelope {
        // Σ_i 1_{[−r,r)^d}(x−i) factorizes into per-axis counts of integers
        // in a half-open window of length w = 2r; over one period the count
        // is ⌊w⌋+1 on a set of measure w−⌊w⌋ and ⌊w⌋ elsewhere, which makes
        // both cell integrals exact products of one-dimensional moments.
        let w = 2.0 * radius;
        let freq = w - w.floor();
        let lo = w.floor();
        let moment = |p: i32| (1.0 - freq) * lo.powi(p) + freq * (lo + 1.0).powi(p);
        let value = match power {
            SumPower::SquareOfTerms => height * height * moment(1).powi(dim as i32),
            SumPower::SquareOfSum => height * height * moment(2).powi(dim as i32),
        };
        return Ok(QuadratureResult { value, error_estimate: 0.0, refinement_levels: 0 });
    }

    // truncation radius for the inner lattice sum: for |x|_∞ ≤ 1/2 each
    // shell m contributes at most shell(m)·f-bound(m − 1/2); the remaining
    // tail is carried into the reported error estimate
    let (reach, term_tail) = match envelope.support_radius() {
        Some(r) => ((0.5 + r).ceil() as i64 + 1, 0.0),
        None => {
            let alpha = envelope.alpha().unwrap();
            let p = match power {
                SumPower::SquareOfTerms => 2.0 * alpha,
                SumPower::SquareOfSum => alpha,
            };
            let amp = match power {
                SumPower::SquareOfTerms => envelope.decay_upper_constant().powi(2),
                SumPower::SquareOfSum => envelope.decay_upper_constant(),
            };
            let scale = match power {
                SumPower::SquareOfTerms => envelope.l2_norm_sq(dim),
                SumPower::SquareOfSum => envelope.l1_norm(dim),
            };
            let tol = 1e-7 * scale.max(1e-12);
            let mut reach = 4i64;
            loop {
                let tail = amp * shell_decay_sum(dim, p, 0.5, reach + 1, 1e-4, 64).upper();
                if tail <= tol || site_count(dim, 2 * reach) > 200_000 {
                    break (reach, tail);
                }
                reach *= 2;
            }
        }
    };

    let max_level: u32 = match dim {
        1 => 14,
        2 => 9,
        _ => 6,
    };
    // Romberg columns: raw midpoint, then h² and h⁴ eliminations. The sup
    // norm's kinks sit on dyadic cell diagonals and edges at every level, so
    // the even-power error expansion survives and extrapolation is sound.
    let mut raw_prev: Option<f64> = None;
    let mut col1_prev: Option<f64> = None;
    let mut col2_prev: Option<f64> = None;
    let mut diff = vec![0.0f64; dim];
    for level in 2..=max_level {
        let per_axis = 1usize << level;
        let w = 1.0 / per_axis as f64;
        let mut total = 0.0;
        let mut multi = vec![0usize; dim];
        let points = per_axis.pow(dim as u32);
        for _ in 0..points {
            let mut inner = 0.0;
            let mut sum = 0.0;
            for_each_site(dim, reach, |site| {
                for (dm, (&mm, &im)) in diff.iter_mut().zip(multi.iter().zip(site.iter())) {
                    *dm = -0.5 + (mm as f64 + 0.5) * w - im as f64;
                }
                let f = envelope.evaluate(&diff);
                match power {
                    SumPower::SquareOfTerms => inner += f * f,
                    SumPower::SquareOfSum => sum += f,
                }
            });
            if power == SumPower::SquareOfSum {
                inner = sum * sum;
            }
            total += inner;
            for m in (0..dim).rev() {
                if multi[m] + 1 < per_axis {
                    multi[m] += 1;
                    break;
                }
                multi[m] = 0;
            }
        }
        let raw = total * w.powi(dim as i32);
        let col1 = raw_prev.map(|prev| raw + (raw - prev) / 3.0);
        let col2 = match (col1, col1_prev) {
            (Some(c1), Some(prev)) => Some(c1 + (c1 - prev) / 15.0),
            _ => None,
        };
        if let (Some(value), Some(prev)) = (col2, col2_prev) {
            let change = (value - prev).abs();
            if change <= 1e-6 * value.abs().max(1e-300) {
                // tail enters squared terms multiplied by ≲ 2·(sum scale)
                let tail_err = match power {
                    SumPower::SquareOfTerms => term_tail,
                    SumPower::SquareOfSum => {
                        term_tail * (2.0 * value.abs().sqrt() + term_tail)
                    }
                };
                return Ok(QuadratureResult {
                    value,
                    error_estimate: change + tail_err,
                    refinement_levels: level as usize,
                });
            }
        }
        raw_prev = Some(raw);
        col1_prev = col1;
        col2_prev = col2;
    }
    Err(Error::numeric(
        "unit_cell_quadrature",
        format!(
            "midpoint refinement did not reach 1e-6 relative by level {max_level}; last value {col2_prev:?}"
        ),
    ))
}
