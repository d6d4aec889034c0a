//! Eigenvalue counting and lowest-eigenpair solves for sparse symmetric
//! operators.
//!
//! Counting #{λ_k ≤ E} uses matrix inertia: factor H − E·I = LDLᵀ without
//! pivoting (the operators are banded, so the factorization stays banded) and
//! count negative pivots — by Sylvester's law of inertia this equals the
//! number of eigenvalues below the shift, as an exact integer. A shift that
//! collides with an eigenvalue (or makes a leading minor singular) shows up
//! as a near-zero pivot; the solve then retries with a tiny jittered shift
//! and reports the jitter it used.
//!
//! Lowest eigenpairs come from Lanczos with full reorthogonalization and a
//! fixed-seed random start vector; below [`crate::grid::DENSE_ORACLE_CAP`]
//! unknowns a dense solve is used instead (and doubles as the brute-force
//! oracle for tests).

use crate::error::{Error, Result};
use crate::grid::{BoundaryCondition, SparseSymOperator, DENSE_ORACLE_CAP};
use crate::rng::stream_rng;
use rand::Rng;

/// Relative pivot tolerance: pivots below this times ‖H‖₁ count as breakdown.
pub const PIVOT_RTOL: f64 = 1e-14;
/// Relative residual tolerance for converged eigenpairs.
pub const RESIDUAL_RTOL: f64 = 1e-10;
/// Maximum jittered-shift retries on pivot breakdown.
const MAX_JITTERS: usize = 3;
/// Hard ceiling on the Lanczos basis size.
const LANCZOS_MAX_BASIS: usize = 420;

/// Result of counting eigenvalues at or below an energy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralCount {
    pub energy: f64,
    pub count: usize,
    pub bc: BoundaryCondition,
    /// Shift actually factored minus the requested energy; 0 when no retry
    /// was needed.
    pub jitter: f64,
}

/// Eigenvalue with its unit-norm eigenvector.
#[derive(Debug, Clone)]
pub struct EigenPair {
    pub value: f64,
    pub vector: Vec<f64>,
}

/// Reusable banded-factorization buffer; one per thread is plenty.
#[derive(Debug, Default)]
pub struct CountWorkspace {
    band: Vec<f64>,
}

/// #{λ_k(op) ≤ energy}, tagged with the boundary condition of the operator.
pub fn count_below(
    op: &SparseSymOperator,
    energy: f64,
    bc: BoundaryCondition,
) -> Result<SpectralCount> {
    let mut ws = CountWorkspace::default();
    count_below_with(op, energy, bc, &mut ws)
}

/// [`count_below`] with an external workspace, for tight per-sample loops.
pub fn count_below_with(
    op: &SparseSymOperator,
    energy: f64,
    bc: BoundaryCondition,
    ws: &mut CountWorkspace,
) -> Result<SpectralCount> {
    if !energy.is_finite() {
        return Err(Error::contract("count_below", "energy must be finite"));
    }
    let norm = op.norm_one();
    let pivot_tol = PIVOT_RTOL * norm.max(1.0);
    // jitter scale: relative to the larger of |E| and the operator scale
    let delta = energy.abs().max(norm.max(1.0)) * 1e-12;
    let shifts = [0.0, delta, -delta, 2.0 * delta];
    let mut last_err = None;
    for (attempt, &jitter) in shifts.iter().enumerate().take(MAX_JITTERS + 1) {
        match banded_negative_pivots(op, energy + jitter, pivot_tol, &mut ws.band) {
            Ok(count) => return Ok(SpectralCount { energy, count, bc, jitter }),
            Err(e) => {
                last_err = Some((attempt, e));
            }
        }
    }
    let (attempts, e) = last_err.unwrap();
    Err(Error::numeric(
        "count_below",
        format!("pivot breakdown persisted through {attempts} jittered shifts: {e}"),
    ))
}

/// Negative-pivot count of LDLᵀ applied to op − shift·I in banded storage.
///
/// Band layout is column-major lower storage: `band[j*(bw+1) + r]` holds
/// entry (j + r, j) for 0 ≤ r ≤ bw.
fn banded_negative_pivots(
    op: &SparseSymOperator,
    shift: f64,
    pivot_tol: f64,
    band: &mut Vec<f64>,
) -> std::result::Result<usize, String> {
    let n = op.dim();
    let bw = op.bandwidth();
    let stride = bw + 1;
    band.clear();
    band.resize(n * stride, 0.0);
    for (j, &d) in op.diagonal().iter().enumerate() {
        band[j * stride] = d - shift;
    }
    for &(r, c, v) in op.off_diagonal() {
        // (r, c) with r < c sits in the lower band as entry (c, r)
        band[r as usize * stride + (c - r) as usize] = v;
    }

    let mut negatives = 0usize;
    for j in 0..n {
        let d = band[j * stride];
        if d.abs() <= pivot_tol {
            return Err(format!("pivot {d:.3e} at column {j} is below tolerance {pivot_tol:.3e}"));
        }
        if d < 0.0 {
            negatives += 1;
        }
        let reach = bw.min(n - 1 - j);
        // rank-one update of the trailing (reach × reach) block
        for c2 in 1..=reach {
            let lc = band[j * stride + c2] / d;
            if lc == 0.0 {
                continue;
            }
            let col_base = (j + c2) * stride;
            for r2 in c2..=reach {
                band[col_base + (r2 - c2)] -= band[j * stride + r2] * lc;
            }
        }
    }
    Ok(negatives)
}

/// The k smallest eigenpairs. Dense solve below the oracle cap, Lanczos with
/// full reorthogonalization above it.
pub fn lowest_eigenpairs(op: &SparseSymOperator, k: usize) -> Result<Vec<EigenPair>> {
    let n = op.dim();
    if k == 0 || k > n {
        return Err(Error::contract(
            "lowest_eigenpairs",
            format!("requested {k} pairs from a {n}-dimensional operator"),
        ));
    }
    if n <= DENSE_ORACLE_CAP {
        dense_lowest(op, k)
    } else {
        lanczos_lowest(op, k)
    }
}

/// Brute-force dense eigensolve, ascending eigenvalues. Oracle path.
pub fn dense_eigenvalues(op: &SparseSymOperator) -> Result<Vec<f64>> {
    let eig = op.to_dense()?.symmetric_eigen();
    let mut ev: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    ev.sort_by(|a, b| a.total_cmp(b));
    Ok(ev)
}

/// The k smallest eigenpairs by dense solve. Oracle path.
pub fn dense_lowest(op: &SparseSymOperator, k: usize) -> Result<Vec<EigenPair>> {
    let eig = op.to_dense()?.symmetric_eigen();
    let mut order: Vec<usize> = (0..op.dim()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let pairs = order
        .into_iter()
        .take(k)
        .map(|i| {
            let mut vector: Vec<f64> = eig.eigenvectors.column(i).iter().copied().collect();
            normalize(&mut vector);
            EigenPair { value: eig.eigenvalues[i], vector }
        })
        .collect();
    Ok(pairs)
}

/// Lanczos with full reorthogonalization and random restarts on breakdown.
///
/// Finds the k lowest *distinct* Ritz values to residual `RESIDUAL_RTOL`·‖H‖;
/// exact multiplicity bookkeeping is [`count_below`]'s job.
pub fn lanczos_lowest(op: &SparseSymOperator, k: usize) -> Result<Vec<EigenPair>> {
    let n = op.dim();
    let norm = op.norm_one().max(f64::MIN_POSITIVE);
    let tol = RESIDUAL_RTOL * norm;
    let m_max = LANCZOS_MAX_BASIS.min(n);

    let mut rng = stream_rng(0x1a9c_705e, 0);
    let mut basis: Vec<Vec<f64>> = Vec::new();
    let mut alphas: Vec<f64> = Vec::new();
    let mut betas: Vec<f64> = Vec::new(); // beta[j] couples basis[j] and basis[j+1]

    let mut v = random_unit(&mut rng, n);
    orthogonalize(&mut v, &basis);
    basis.push(v);

    let mut best_residual = f64::INFINITY;
    while basis.len() <= m_max {
        let j = basis.len() - 1;
        let mut w = vec![0.0; n];
        op.matvec(&basis[j], &mut w);
        if j > 0 {
            let b = betas[j - 1];
            for (wi, vi) in w.iter_mut().zip(&basis[j - 1]) {
                *wi -= b * vi;
            }
        }
        let alpha = dot(&w, &basis[j]);
        for (wi, vi) in w.iter_mut().zip(&basis[j]) {
            *wi -= alpha * vi;
        }
        alphas.push(alpha);
        // full reorthogonalization, two passes
        orthogonalize(&mut w, &basis);
        orthogonalize(&mut w, &basis);
        let beta = dot(&w, &w).sqrt();

        let m = alphas.len();
        let check_now = beta <= 1e-13 * norm || (m >= k + 2 && (m % 8 == 0 || m == m_max));
        if check_now {
            let (maybe_pairs, worst) = ritz_pairs(op, &basis, &alphas, &betas, beta, k, tol);
            best_residual = best_residual.min(worst);
            if let Some(pairs) = maybe_pairs {
                return finalize_pairs(op, pairs, tol);
            }
        }
        if beta <= 1e-13 * norm {
            // invariant subspace exhausted before convergence: restart with a
            // fresh direction orthogonal to everything found so far
            let mut fresh = random_unit(&mut rng, n);
            orthogonalize(&mut fresh, &basis);
            let nrm = dot(&fresh, &fresh).sqrt();
            if nrm < 1e-8 || basis.len() >= n {
                break;
            }
            for x in fresh.iter_mut() {
                *x /= nrm;
            }
            betas.push(0.0);
            basis.push(fresh);
            continue;
        }
        if basis.len() == m_max {
            break;
        }
        for x in w.iter_mut() {
            *x /= beta;
        }
        betas.push(beta);
        basis.push(w);
    }
    Err(Error::numeric(
        "lanczos_lowest",
        format!(
            "no convergence within a {m_max}-vector basis; best residual {best_residual:.3e} vs tolerance {tol:.3e}"
        ),
    ))
}

/// Ritz pairs of the current tridiagonal T, materialized only when the k
/// lowest all pass the residual bound β·|s_last|; always reports the worst
/// bound among the k lowest for progress diagnostics.
fn ritz_pairs(
    op: &SparseSymOperator,
    basis: &[Vec<f64>],
    alphas: &[f64],
    betas: &[f64],
    beta_last: f64,
    k: usize,
    tol: f64,
) -> (Option<Vec<EigenPair>>, f64) {
    let m = alphas.len();
    if m < k {
        return (None, f64::INFINITY);
    }
    let (values, vectors) = tridiag_eigen(alphas, betas);
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));

    let worst = order
        .iter()
        .take(k)
        .map(|&i| beta_last * vectors[(m - 1, i)].abs())
        .fold(0.0f64, f64::max);
    if worst > tol {
        return (None, worst);
    }
    let n = op.dim();
    let mut pairs = Vec::with_capacity(k);
    for &i in order.iter().take(k) {
        let mut vector = vec![0.0; n];
        for (j, q) in basis.iter().enumerate().take(m) {
            let s = vectors[(j, i)];
            for (xi, qi) in vector.iter_mut().zip(q) {
                *xi += s * qi;
            }
        }
        normalize(&mut vector);
        pairs.push(EigenPair { value: values[i], vector });
    }
    (Some(pairs), worst)
}

fn tridiag_eigen(alphas: &[f64], betas: &[f64]) -> (Vec<f64>, nalgebra::DMatrix<f64>) {
    let m = alphas.len();
    let mut t = nalgebra::DMatrix::zeros(m, m);
    for (i, &a) in alphas.iter().enumerate() {
        t[(i, i)] = a;
    }
    for (i, &b) in betas.iter().enumerate().take(m.saturating_sub(1)) {
        t[(i, i + 1)] = b;
        t[(i + 1, i)] = b;
    }
    let eig = t.symmetric_eigen();
    (eig.eigenvalues.iter().copied().collect(), eig.eigenvectors)
}

/// Verify residuals of returned pairs against an explicit matvec.
fn finalize_pairs(
    op: &SparseSymOperator,
    pairs: Vec<EigenPair>,
    tol: f64,
) -> Result<Vec<EigenPair>> {
    let mut hv = vec![0.0; op.dim()];
    for p in &pairs {
        op.matvec(&p.vector, &mut hv);
        let mut res = 0.0;
        for (h, v) in hv.iter().zip(&p.vector) {
            let r = h - p.value * v;
            res += r * r;
        }
        let res = res.sqrt();
        if res > 10.0 * tol {
            return Err(Error::numeric(
                "lanczos_lowest",
                format!("returned pair failed the residual recheck: {res:.3e} > {:.3e}", 10.0 * tol),
            ));
        }
    }
    Ok(pairs)
}

/// λ₁(H) ≥ min V − tol: the Neumann Laplacian is ⪰ 0, so adding it to
/// diag(V) can only raise the spectral floor.
pub fn neumann_floor_check(
    hamiltonian: &SparseSymOperator,
    potential_values: &[f64],
) -> Result<bool> {
    let lambda1 = lowest_eigenpairs(hamiltonian, 1)?[0].value;
    let v_min = potential_values.iter().copied().fold(f64::INFINITY, f64::min);
    let tol = RESIDUAL_RTOL * hamiltonian.norm_one().max(1.0) * 10.0;
    Ok(lambda1 >= v_min - tol)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn normalize(v: &mut [f64]) {
    let nrm = dot(v, v).sqrt();
    for x in v.iter_mut() {
        *x /= nrm;
    }
}

fn random_unit(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    let mut v: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    normalize(&mut v);
    v
}

fn orthogonalize(w: &mut [f64], basis: &[Vec<f64>]) {
    for u in basis {
        let c = dot(w, u);
        if c != 0.0 {
            for (wi, ui) in w.iter_mut().zip(u) {
                *wi -= c * ui;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{
        build_laplacian, dirichlet_eigenvalues_1d, BoundaryCondition::*, GridSpec,
    };
    use proptest::prelude::*;

    fn laplacian_plus_random_diag(
        dim: usize,
        n: usize,
        bc: BoundaryCondition,
        seed: u64,
        scale: f64,
    ) -> SparseSymOperator {
        let grid = GridSpec::new(dim, 8.0, n).unwrap();
        let lap = build_laplacian(&grid, bc).unwrap();
        let mut rng = stream_rng(seed, 0);
        let v: Vec<f64> = (0..lap.dim()).map(|_| rng.random_range(0.0..scale)).collect();
        lap.with_added_diagonal(&v).unwrap()
    }

    #[test]
    fn counts_match_closed_form_spectrum_at_random_thresholds() {
        let grid = GridSpec::new(1, 1.0, 10).unwrap();
        let lap = build_laplacian(&grid, Dirichlet).unwrap();
        let spectrum = dirichlet_eigenvalues_1d(10, 1.0);
        let top = spectrum.last().unwrap() * 1.2;
        let mut rng = stream_rng(0xc0de, 0);
        for _ in 0..100 {
            let e = rng.random_range(0.0..top);
            let want = spectrum.iter().filter(|&&l| l <= e).count();
            let got = count_below(&lap, e, Dirichlet).unwrap();
            assert_eq!(got.count, want, "E = {e}");
            assert_eq!(got.jitter, 0.0);
        }
    }

    #[test]
    fn count_extremes() {
        let op = laplacian_plus_random_diag(1, 32, Dirichlet, 5, 3.0);
        assert_eq!(count_below(&op, -1.0, Dirichlet).unwrap().count, 0);
        // Gershgorin upper bound: every eigenvalue ≤ ‖H‖₁
        assert_eq!(count_below(&op, op.norm_one(), Dirichlet).unwrap().count, 32);
    }

    #[test]
    fn counts_equal_dense_oracle_exactly() {
        let mut rng = stream_rng(0xacce77, 1);
        for trial in 0..10u64 {
            let (dim, n) = if trial % 2 == 0 { (1, 40) } else { (2, 7) };
            let bc = if trial % 3 == 0 { Neumann } else { Dirichlet };
            let op = laplacian_plus_random_diag(dim, n, bc, 100 + trial, 5.0);
            let dense = dense_eigenvalues(&op).unwrap();
            for _ in 0..20 {
                let e = rng.random_range(-1.0..op.norm_one());
                let want = dense.iter().filter(|&&l| l <= e).count();
                assert_eq!(count_below(&op, e, bc).unwrap().count, want);
            }
        }
    }

    #[test]
    fn breakdown_retries_with_reported_jitter() {
        // [[0,1],[1,0]] has a hard zero leading pivot at shift 0 but
        // eigenvalues ±1, so the jittered retry must resolve it
        let op = SparseSymOperator::new(vec![0.0, 0.0], vec![(0, 1, 1.0)]);
        let got = count_below(&op, 0.0, Neumann).unwrap();
        assert_eq!(got.count, 1);
        assert_ne!(got.jitter, 0.0);
    }

    #[test]
    fn neumann_ground_state_is_constant_zero_mode() {
        let grid = GridSpec::new(2, 4.0, 6).unwrap();
        let lap = build_laplacian(&grid, Neumann).unwrap();
        let pair = &lowest_eigenpairs(&lap, 1).unwrap()[0];
        assert!(pair.value.abs() < 1e-10 * lap.norm_one());
        let uniform = 1.0 / (lap.dim() as f64).sqrt();
        let overlap: f64 = pair.vector.iter().map(|v| v * uniform).sum();
        assert!(overlap.abs() > 1.0 - 1e-8, "ground state not constant: overlap {overlap}");
    }

    #[test]
    fn constant_shift_moves_lambda1_exactly() {
        let grid = GridSpec::new(1, 1.0, 24).unwrap();
        let lap = build_laplacian(&grid, Dirichlet).unwrap();
        let shifted = lap.with_added_diagonal(&vec![3.25; 24]).unwrap();
        let base = lowest_eigenpairs(&lap, 1).unwrap()[0].value;
        let moved = lowest_eigenpairs(&shifted, 1).unwrap()[0].value;
        assert!((moved - base - 3.25).abs() < 1e-10 * shifted.norm_one());
    }

    #[test]
    fn lanczos_matches_dense_oracle() {
        for (seed, k) in [(21u64, 1usize), (22, 3)] {
            let op = laplacian_plus_random_diag(1, 100, Neumann, seed, 2.0);
            let dense = dense_lowest(&op, k).unwrap();
            let lanczos = lanczos_lowest(&op, k).unwrap();
            for (a, b) in lanczos.iter().zip(dense) {
                assert!(
                    (a.value - b.value).abs() < 1e-9 * op.norm_one(),
                    "seed {seed}: {} vs {}",
                    a.value,
                    b.value
                );
            }
        }
        // the smallest case worth pinning: n=16, d=1
        let op = laplacian_plus_random_diag(1, 16, Dirichlet, 23, 2.0);
        let a = lanczos_lowest(&op, 1).unwrap()[0].value;
        let b = dense_lowest(&op, 1).unwrap()[0].value;
        assert!((a - b).abs() < 1e-9 * op.norm_one());
    }

    #[test]
    fn count_transition_sits_at_lambda1() {
        let op = laplacian_plus_random_diag(1, 48, Dirichlet, 31, 4.0);
        let l1 = lowest_eigenpairs(&op, 1).unwrap()[0].value;
        let eps = 1e-8 * op.norm_one();
        assert_eq!(count_below(&op, l1 - eps, Dirichlet).unwrap().count, 0);
        assert!(count_below(&op, l1 + eps, Dirichlet).unwrap().count >= 1);
    }

    #[test]
    fn floor_check_holds_for_diagonal_potentials() {
        let grid = GridSpec::new(1, 4.0, 32).unwrap();
        let lap = build_laplacian(&grid, Neumann).unwrap();
        for (seed, scale) in [(1u64, 0.0), (2, 5.0), (3, 0.3)] {
            let mut rng = stream_rng(seed, 9);
            let v: Vec<f64> = (0..32)
                .map(|_| if scale == 0.0 { 0.0 } else { rng.random_range(0.0..scale) })
                .collect();
            let h = lap.with_added_diagonal(&v).unwrap();
            assert!(neumann_floor_check(&h, &v).unwrap(), "seed {seed}");
        }
        let c5 = vec![5.0; 32];
        let h = lap.with_added_diagonal(&c5).unwrap();
        let l1 = lowest_eigenpairs(&h, 1).unwrap()[0].value;
        assert!((l1 - 5.0).abs() < 1e-9 * h.norm_one());
        assert!(neumann_floor_check(&h, &c5).unwrap());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn count_is_monotone_in_energy(
            seed in 0u64..1000,
            n in 4usize..40,
            e1 in -2.0f64..30.0,
            e2 in -2.0f64..30.0,
        ) {
            let op = laplacian_plus_random_diag(1, n, Dirichlet, seed, 3.0);
            let (lo, hi) = if e1 <= e2 { (e1, e2) } else { (e2, e1) };
            let c_lo = count_below(&op, lo, Dirichlet).unwrap().count;
            let c_hi = count_below(&op, hi, Dirichlet).unwrap().count;
            prop_assert!(c_lo <= c_hi);
        }

        #[test]
        fn dirichlet_count_never_exceeds_neumann_count(
            seed in 0u64..1000,
            n in 4usize..40,
            e in 0.0f64..30.0,
        ) {
            let grid = GridSpec::new(1, 8.0, n).unwrap();
            let mut rng = stream_rng(seed, 77);
            let v: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..3.0)).collect();
            let hd = build_laplacian(&grid, Dirichlet).unwrap().with_added_diagonal(&v).unwrap();
            let hn = build_laplacian(&grid, Neumann).unwrap().with_added_diagonal(&v).unwrap();
            let cd = count_below(&hd, e, Dirichlet).unwrap().count;
            let cn = count_below(&hn, e, Neumann).unwrap().count;
            prop_assert!(cd <= cn, "N_D = {} > N_N = {}", cd, cn);
        }
    }
}
