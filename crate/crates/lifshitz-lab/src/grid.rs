//! Finite-difference grids and Laplacians on boxes Λ_L = [−L/2, L/2]^d.
//!
//! The box is discretized into n^d cells of side h = L/n with grid points at
//! the cell centers x_k = −L/2 + (k + 1/2)h. The Laplacian −Δ_h uses the
//! standard second-order stencil; boundary conditions enter through ghost
//! cells one step outside the box:
//!
//! * Neumann: even mirror u_ghost = u_boundary (zero flux through the face),
//!   so the boundary diagonal drops to 1/h² per face.
//! * Dirichlet: odd reflection u_ghost = −u_boundary, which pins u = 0 on the
//!   physical face half a cell away and raises the boundary diagonal to 3/h²
//!   per face. This keeps the eigenvalue error at O(h²); a zero ghost value
//!   would place the wall at distance h/2 outside the box and degrade the
//!   ground-energy convergence to first order.
//!
//! Both stencils are symmetric, the Neumann operator annihilates constants,
//! and the Dirichlet operator dominates the Neumann one as a quadratic form,
//! which is what makes per-sample eigenvalue bracketing exact downstream.

use crate::disorder::PotentialField;
use crate::error::{Error, Result};

/// Hard cap on the total number of grid points n^d.
pub const GRID_POINT_CAP: usize = 1 << 24;

/// Threshold below which dense eigensolves are cheap enough for oracle checks.
pub const DENSE_ORACLE_CAP: usize = 2048;

/// A cubic box [−L/2, L/2]^d split into n cells per side.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct GridSpec {
    pub dim: usize,
    pub side_length: f64,
    pub points_per_side: usize,
}

impl GridSpec {
    pub fn new(dim: usize, side_length: f64, points_per_side: usize) -> Result<Self> {
        let grid = GridSpec { dim, side_length, points_per_side };
        grid.validate()?;
        Ok(grid)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim < 1 {
            return Err(Error::config("grid.dim", "dimension must be ≥ 1"));
        }
        if self.points_per_side < 2 {
            return Err(Error::config("grid.points_per_side", "need at least 2 points per side"));
        }
        if !(self.side_length.is_finite() && self.side_length > 0.0) {
            return Err(Error::config("grid.side_length", "side length must be positive"));
        }
        let mut total = 1usize;
        for _ in 0..self.dim {
            total = total.checked_mul(self.points_per_side).ok_or_else(|| {
                Error::Resource(format!(
                    "grid size {}^{} overflows the {} point cap",
                    self.points_per_side, self.dim, GRID_POINT_CAP
                ))
            })?;
            if total > GRID_POINT_CAP {
                return Err(Error::Resource(format!(
                    "grid size {}^{} exceeds the {} point cap",
                    self.points_per_side, self.dim, GRID_POINT_CAP
                )));
            }
        }
        Ok(())
    }

    /// Mesh width h = L/n.
    pub fn spacing(&self) -> f64 {
        self.side_length / self.points_per_side as f64
    }

    /// Total number of grid points n^d.
    pub fn total_points(&self) -> usize {
        self.points_per_side.pow(self.dim as u32)
    }

    /// Physical volume |Λ| = L^d.
    pub fn volume(&self) -> f64 {
        self.side_length.powi(self.dim as i32)
    }

    /// Volume h^d of one grid cell.
    pub fn cell_volume(&self) -> f64 {
        self.spacing().powi(self.dim as i32)
    }

    /// Cell-center coordinate along one axis: x_k = −L/2 + (k + 1/2)h.
    pub fn coordinate(&self, k: usize) -> f64 {
        -0.5 * self.side_length + (k as f64 + 0.5) * self.spacing()
    }

    /// Decode a flat index (C order, last axis fastest) into per-axis indices.
    pub fn multi_index(&self, flat: usize) -> Vec<usize> {
        let n = self.points_per_side;
        let mut idx = vec![0usize; self.dim];
        let mut rest = flat;
        for m in (0..self.dim).rev() {
            idx[m] = rest % n;
            rest /= n;
        }
        idx
    }

    pub fn flat_index(&self, multi: &[usize]) -> usize {
        let n = self.points_per_side;
        multi.iter().fold(0usize, |acc, &k| acc * n + k)
    }

    /// Visit every grid point as (flat index, coordinates). The coordinate
    /// buffer is reused between calls.
    pub fn for_each_point<F: FnMut(usize, &[f64])>(&self, mut visit: F) {
        let n = self.points_per_side;
        let mut multi = vec![0usize; self.dim];
        let mut coords: Vec<f64> = (0..self.dim).map(|_| self.coordinate(0)).collect();
        for flat in 0..self.total_points() {
            visit(flat, &coords);
            // advance odometer, updating only the coordinates that change
            for m in (0..self.dim).rev() {
                if multi[m] + 1 < n {
                    multi[m] += 1;
                    coords[m] = self.coordinate(multi[m]);
                    break;
                }
                multi[m] = 0;
                coords[m] = self.coordinate(0);
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundaryCondition {
    Dirichlet,
    Neumann,
}

impl std::fmt::Display for BoundaryCondition {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            BoundaryCondition::Dirichlet => write!(f, "dirichlet"),
            BoundaryCondition::Neumann => write!(f, "neumann"),
        }
    }
}

/// Sparse symmetric matrix stored as a diagonal plus the strict upper
/// triangle (row < col). Immutable after assembly.
#[derive(Debug, Clone)]
pub struct SparseSymOperator {
    diag: Vec<f64>,
    off: Vec<(u32, u32, f64)>,
}

impl SparseSymOperator {
    pub fn new(diag: Vec<f64>, off: Vec<(u32, u32, f64)>) -> Self {
        let n = diag.len();
        debug_assert!(off.iter().all(|&(r, c, _)| (r as usize) < (c as usize) && (c as usize) < n));
        SparseSymOperator { diag, off }
    }

    /// Matrix dimension N = n^d.
    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    pub fn diagonal(&self) -> &[f64] {
        &self.diag
    }

    /// Strict upper-triangle entries (row, col, value) with row < col.
    pub fn off_diagonal(&self) -> &[(u32, u32, f64)] {
        &self.off
    }

    /// Largest col − row over stored entries; 0 for diagonal matrices.
    pub fn bandwidth(&self) -> usize {
        self.off.iter().map(|&(r, c, _)| (c - r) as usize).max().unwrap_or(0)
    }

    /// y = A·x.
    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.dim());
        assert_eq!(y.len(), self.dim());
        for (yi, (&d, &xi)) in y.iter_mut().zip(self.diag.iter().zip(x.iter())) {
            *yi = d * xi;
        }
        for &(r, c, v) in &self.off {
            y[r as usize] += v * x[c as usize];
            y[c as usize] += v * x[r as usize];
        }
    }

    /// Induced 1-norm (= ∞-norm by symmetry): max column sum of |entries|.
    pub fn norm_one(&self) -> f64 {
        let mut col_sums: Vec<f64> = self.diag.iter().map(|d| d.abs()).collect();
        for &(r, c, v) in &self.off {
            col_sums[r as usize] += v.abs();
            col_sums[c as usize] += v.abs();
        }
        col_sums.into_iter().fold(0.0, f64::max)
    }

    /// Dense copy for brute-force oracle checks; refuse sizes beyond the cap.
    pub fn to_dense(&self) -> Result<nalgebra::DMatrix<f64>> {
        let n = self.dim();
        if n > DENSE_ORACLE_CAP {
            return Err(Error::Resource(format!(
                "dense copy of a {n}×{n} operator exceeds the {DENSE_ORACLE_CAP} oracle cap"
            )));
        }
        let mut m = nalgebra::DMatrix::zeros(n, n);
        for (i, &d) in self.diag.iter().enumerate() {
            m[(i, i)] = d;
        }
        for &(r, c, v) in &self.off {
            m[(r as usize, c as usize)] = v;
            m[(c as usize, r as usize)] = v;
        }
        Ok(m)
    }

    /// New operator with `values` added to the diagonal.
    pub fn with_added_diagonal(&self, values: &[f64]) -> Result<Self> {
        if values.len() != self.dim() {
            return Err(Error::contract(
                "with_added_diagonal",
                format!("diagonal length {} does not match operator size {}", values.len(), self.dim()),
            ));
        }
        let diag = self.diag.iter().zip(values).map(|(d, v)| d + v).collect();
        Ok(SparseSymOperator { diag, off: self.off.clone() })
    }
}

/// Second-order finite-difference Laplacian −Δ_h on the grid, scaled by 1/h².
pub fn build_laplacian(grid: &GridSpec, bc: BoundaryCondition) -> Result<SparseSymOperator> {
    grid.validate()?;
    let n = grid.points_per_side;
    let d = grid.dim;
    let total = grid.total_points();
    let inv_h2 = 1.0 / (grid.spacing() * grid.spacing());
    // per-face diagonal contribution at the boundary: mirror ghost cancels
    // the face term, odd reflection doubles it
    let boundary_diag = match bc {
        BoundaryCondition::Neumann => 0.0,
        BoundaryCondition::Dirichlet => 2.0,
    };

    let mut diag = vec![0.0f64; total];
    let mut off = Vec::with_capacity(total * d);
    // stride of axis m in the flat C-order layout (last axis fastest)
    let strides: Vec<usize> = (0..d).map(|m| n.pow((d - 1 - m) as u32)).collect();

    let mut multi = vec![0usize; d];
    for flat in 0..total {
        let mut diag_sum = 0.0;
        for m in 0..d {
            let k = multi[m];
            diag_sum += if k == 0 { boundary_diag } else { 1.0 };
            diag_sum += if k == n - 1 { boundary_diag } else { 1.0 };
            if k + 1 < n {
                off.push((flat as u32, (flat + strides[m]) as u32, -inv_h2));
            }
        }
        diag[flat] = diag_sum * inv_h2;
        for m in (0..d).rev() {
            if multi[m] + 1 < n {
                multi[m] += 1;
                break;
            }
            multi[m] = 0;
        }
    }
    Ok(SparseSymOperator::new(diag, off))
}

/// H = −Δ_h + diag(V): adds the sampled potential to the Laplacian diagonal.
pub fn assemble_hamiltonian(
    lap: &SparseSymOperator,
    potential: &PotentialField,
) -> Result<SparseSymOperator> {
    if potential.values.len() != lap.dim() {
        return Err(Error::contract(
            "assemble_hamiltonian",
            format!(
                "potential has {} grid values but the operator is {}-dimensional",
                potential.values.len(),
                lap.dim()
            ),
        ));
    }
    if let Some(bad) = potential.values.iter().find(|v| !v.is_finite()) {
        return Err(Error::contract(
            "assemble_hamiltonian",
            format!("potential contains a non-finite value {bad}"),
        ));
    }
    lap.with_added_diagonal(&potential.values)
}

/// Continuum Dirichlet ground energy λ₀ = d(π/L)², the convergence target for
/// the discrete ground energy as h → 0.
pub fn continuum_dirichlet_ground_energy(grid: &GridSpec) -> f64 {
    let pi_over_l = std::f64::consts::PI / grid.side_length;
    grid.dim as f64 * pi_over_l * pi_over_l
}

/// Closed-form spectrum of the 1D Dirichlet stencil (odd-reflection ghosts):
/// λ_k = (4/h²) sin²(kπ/(2n)), k = 1..n, ascending.
pub fn dirichlet_eigenvalues_1d(n: usize, side_length: f64) -> Vec<f64> {
    let h = side_length / n as f64;
    let scale = 4.0 / (h * h);
    (1..=n)
        .map(|k| {
            let s = (k as f64 * std::f64::consts::PI / (2.0 * n as f64)).sin();
            scale * s * s
        })
        .collect()
}

/// Closed-form spectrum of the 1D Neumann stencil (even-mirror ghosts):
/// λ_k = (4/h²) sin²(kπ/(2n)), k = 0..n−1, ascending; λ₀ = 0.
pub fn neumann_eigenvalues_1d(n: usize, side_length: f64) -> Vec<f64> {
    let h = side_length / n as f64;
    let scale = 4.0 / (h * h);
    (0..n)
        .map(|k| {
            let s = (k as f64 * std::f64::consts::PI / (2.0 * n as f64)).sin();
            scale * s * s
        })
        .collect()
}

/// Full spectrum of the free d-dimensional Laplacian as d-fold sums of the 1D
/// eigenvalues (Kronecker-sum structure), sorted ascending. Oracle use only —
/// materializes all n^d values.
pub fn free_spectrum(grid: &GridSpec, bc: BoundaryCondition) -> Result<Vec<f64>> {
    grid.validate()?;
    let one_d = match bc {
        BoundaryCondition::Dirichlet => dirichlet_eigenvalues_1d(grid.points_per_side, grid.side_length),
        BoundaryCondition::Neumann => neumann_eigenvalues_1d(grid.points_per_side, grid.side_length),
    };
    let mut spectrum = vec![0.0f64];
    for _ in 0..grid.dim {
        let mut next = Vec::with_capacity(spectrum.len() * one_d.len());
        for &s in &spectrum {
            for &lam in &one_d {
                next.push(s + lam);
            }
        }
        spectrum = next;
    }
    spectrum.sort_by(|a, b| a.total_cmp(b));
    Ok(spectrum)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::Rng;

    fn dense_eigenvalues(op: &SparseSymOperator) -> Vec<f64> {
        let mut ev: Vec<f64> = op
            .to_dense()
            .unwrap()
            .symmetric_eigen()
            .eigenvalues
            .iter()
            .copied()
            .collect();
        ev.sort_by(|a, b| a.total_cmp(b));
        ev
    }

    #[test]
    fn dirichlet_3x3_matches_frozen_dense_oracle() {
        let grid = GridSpec::new(1, 1.0, 3).unwrap();
        let lap = build_laplacian(&grid, BoundaryCondition::Dirichlet).unwrap();
        let dense = lap.to_dense().unwrap();
        let n2 = 9.0;
        let expected = [[3.0, -1.0, 0.0], [-1.0, 2.0, -1.0], [0.0, -1.0, 3.0]];
        for i in 0..3 {
            for j in 0..3 {
                assert_relative_eq!(dense[(i, j)], expected[i][j] * n2, max_relative = 1e-14);
            }
        }
        // frozen dense-eigensolve values for this matrix: 9, 27, 36
        let ev = dense_eigenvalues(&lap);
        for (got, want) in ev.iter().zip([9.0, 27.0, 36.0]) {
            assert_relative_eq!(*got, want, max_relative = 1e-12);
        }
        // closed form agrees
        for (got, want) in ev.iter().zip(dirichlet_eigenvalues_1d(3, 1.0)) {
            assert_relative_eq!(*got, want, max_relative = 1e-12);
        }
    }

    #[test]
    fn neumann_annihilates_constants() {
        for (dim, n) in [(1usize, 3usize), (2, 4), (3, 3)] {
            let grid = GridSpec::new(dim, 2.0, n).unwrap();
            let lap = build_laplacian(&grid, BoundaryCondition::Neumann).unwrap();
            let ones = vec![1.0; lap.dim()];
            let mut y = vec![0.0; lap.dim()];
            lap.matvec(&ones, &mut y);
            let max = y.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            assert!(max < 1e-10, "d={dim} n={n}: |A·1|_∞ = {max}");
        }
    }

    #[test]
    fn two_d_structure_has_five_point_interior_rows() {
        let grid = GridSpec::new(2, 1.0, 4).unwrap();
        let lap = build_laplacian(&grid, BoundaryCondition::Dirichlet).unwrap();
        assert_eq!(lap.dim(), 16);
        // interior point (1,1) → flat 1*4+1 = 5
        let row = 5u32;
        let neighbors = lap
            .off_diagonal()
            .iter()
            .filter(|&&(r, c, _)| r == row || c == row)
            .count();
        assert_eq!(neighbors, 4, "interior row should couple to 4 neighbors");
    }

    #[test]
    fn closed_form_spectra_match_dense_oracle() {
        for n in [5usize, 10] {
            let grid = GridSpec::new(1, 2.5, n).unwrap();
            for (bc, formula) in [
                (BoundaryCondition::Dirichlet, dirichlet_eigenvalues_1d(n, 2.5)),
                (BoundaryCondition::Neumann, neumann_eigenvalues_1d(n, 2.5)),
            ] {
                let ev = dense_eigenvalues(&build_laplacian(&grid, bc).unwrap());
                for (got, want) in ev.iter().zip(formula) {
                    assert!((got - want).abs() < 1e-9 * (1.0 + want), "{bc} n={n}");
                }
            }
        }
    }

    #[test]
    fn free_spectrum_matches_dense_oracle_in_2d() {
        let grid = GridSpec::new(2, 1.5, 4).unwrap();
        for bc in [BoundaryCondition::Dirichlet, BoundaryCondition::Neumann] {
            let kron = free_spectrum(&grid, bc).unwrap();
            let ev = dense_eigenvalues(&build_laplacian(&grid, bc).unwrap());
            assert_eq!(kron.len(), ev.len());
            for (got, want) in ev.iter().zip(kron) {
                assert!((got - want).abs() < 1e-8 * (1.0 + want.abs()), "{bc}");
            }
        }
    }

    #[test]
    fn continuum_ground_energy_formula() {
        let pi = std::f64::consts::PI;
        let g = |d, l| continuum_dirichlet_ground_energy(&GridSpec::new(d, l, 4).unwrap());
        assert_relative_eq!(g(1, 1.0), pi * pi, max_relative = 1e-15);
        assert_relative_eq!(g(2, 1.0), 2.0 * pi * pi, max_relative = 1e-15);
        assert_relative_eq!(g(1, 2.0), pi * pi / 4.0, max_relative = 1e-15);
    }

    #[test]
    fn dirichlet_ground_energy_converges_at_second_order() {
        for dim in [1usize, 2] {
            let target = dim as f64 * std::f64::consts::PI.powi(2);
            let lambda1 = |n: usize| dim as f64 * dirichlet_eigenvalues_1d(n, 1.0)[0];
            let err = |n: usize| (lambda1(n) - target).abs();
            for n in [16usize, 32] {
                let ratio = err(n) / err(2 * n);
                assert!(
                    (3.5..=4.5).contains(&ratio),
                    "d={dim} n={n}: halving h scaled the error by {ratio}, want ≈ 4"
                );
            }
        }
    }

    #[test]
    fn laplacians_are_positive_semidefinite_and_symmetric() {
        let mut rng = crate::rng::stream_rng(0x9d5d, 0);
        for (dim, n) in [(1usize, 16usize), (2, 5)] {
            let grid = GridSpec::new(dim, 3.0, n).unwrap();
            for bc in [BoundaryCondition::Dirichlet, BoundaryCondition::Neumann] {
                let lap = build_laplacian(&grid, bc).unwrap();
                let size = lap.dim();
                for _ in 0..100 {
                    let v: Vec<f64> = (0..size).map(|_| rng.random_range(-1.0..1.0)).collect();
                    let w: Vec<f64> = (0..size).map(|_| rng.random_range(-1.0..1.0)).collect();
                    let mut av = vec![0.0; size];
                    let mut aw = vec![0.0; size];
                    lap.matvec(&v, &mut av);
                    lap.matvec(&w, &mut aw);
                    let norm2: f64 = v.iter().map(|x| x * x).sum();
                    let quad: f64 = av.iter().zip(&v).map(|(a, b)| a * b).sum();
                    assert!(quad >= -1e-12 * norm2, "{bc}: ⟨Av,v⟩ = {quad}");
                    let avw: f64 = av.iter().zip(&w).map(|(a, b)| a * b).sum();
                    let vaw: f64 = aw.iter().zip(&v).map(|(a, b)| a * b).sum();
                    assert!((avw - vaw).abs() <= 1e-10 * lap.norm_one(), "{bc}: asymmetry");
                }
            }
        }
    }

    #[test]
    fn dirichlet_dominates_neumann_as_quadratic_form() {
        let grid = GridSpec::new(2, 2.0, 6).unwrap();
        let lap_d = build_laplacian(&grid, BoundaryCondition::Dirichlet).unwrap();
        let lap_n = build_laplacian(&grid, BoundaryCondition::Neumann).unwrap();
        let mut rng = crate::rng::stream_rng(7, 1);
        for _ in 0..100 {
            let v: Vec<f64> = (0..lap_d.dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
            let mut dv = vec![0.0; v.len()];
            let mut nv = vec![0.0; v.len()];
            lap_d.matvec(&v, &mut dv);
            lap_n.matvec(&v, &mut nv);
            let qd: f64 = dv.iter().zip(&v).map(|(a, b)| a * b).sum();
            let qn: f64 = nv.iter().zip(&v).map(|(a, b)| a * b).sum();
            assert!(qd >= qn - 1e-10 * lap_d.norm_one());
        }
    }

    #[test]
    fn hamiltonian_assembly_shifts_and_guards() {
        let grid = GridSpec::new(1, 1.0, 8).unwrap();
        let lap = build_laplacian(&grid, BoundaryCondition::Dirichlet).unwrap();

        let zero = PotentialField { grid, values: vec![0.0; 8] };
        let h0 = assemble_hamiltonian(&lap, &zero).unwrap();
        assert_eq!(h0.diagonal(), lap.diagonal());

        let shift = PotentialField { grid, values: vec![2.5; 8] };
        let hc = assemble_hamiltonian(&lap, &shift).unwrap();
        for (a, b) in dense_eigenvalues(&hc).iter().zip(dense_eigenvalues(&lap)) {
            assert_relative_eq!(*a, b + 2.5, max_relative = 1e-12);
        }

        let mut rng = crate::rng::stream_rng(11, 0);
        let random = PotentialField {
            grid,
            values: (0..8).map(|_| rng.random_range(0.0..4.0)).collect(),
        };
        let hr = assemble_hamiltonian(&lap, &random).unwrap();
        assert!(dense_eigenvalues(&hr)[0] >= dense_eigenvalues(&lap)[0] - 1e-12);

        let mismatched = PotentialField { grid, values: vec![0.0; 7] };
        assert!(matches!(
            assemble_hamiltonian(&lap, &mismatched),
            Err(Error::Contract { .. })
        ));
    }

    #[test]
    fn grid_cap_is_enforced() {
        assert!(matches!(GridSpec::new(3, 1.0, 4096), Err(Error::Resource(_))));
        let oversized = GridSpec { dim: 3, side_length: 1.0, points_per_side: 4096 };
        assert!(build_laplacian(&oversized, BoundaryCondition::Neumann).is_err());
    }

    #[test]
    fn coordinates_are_cell_centered() {
        let grid = GridSpec::new(1, 2.0, 4).unwrap();
        let h = grid.spacing();
        assert_relative_eq!(h, 0.5);
        assert_relative_eq!(grid.coordinate(0), -0.75);
        assert_relative_eq!(grid.coordinate(3), 0.75);
        let mut seen = Vec::new();
        grid.for_each_point(|flat, x| seen.push((flat, x.to_vec())));
        assert_eq!(seen.len(), 4);
        assert_relative_eq!(seen[1].1[0], -0.25);

        let grid2 = GridSpec::new(2, 2.0, 3).unwrap();
        let mut count = 0;
        grid2.for_each_point(|flat, x| {
            let multi = grid2.multi_index(flat);
            assert_eq!(grid2.flat_index(&multi), flat);
            for (m, &k) in multi.iter().enumerate() {
                assert_relative_eq!(x[m], grid2.coordinate(k));
            }
            count += 1;
        });
        assert_eq!(count, 9);
    }
}
