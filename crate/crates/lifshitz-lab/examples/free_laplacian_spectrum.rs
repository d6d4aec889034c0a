//! The free finite-difference Laplacian against its closed-form spectrum.
//!
//! On a 1d grid of n cells over [−L/2, L/2] the eigenvalues of −Δ are known
//! exactly: (4/h²)sin²(kπ/(2n)) with Dirichlet walls, (4/h²)sin²(kπ/(2n))
//! over k = 0..n−1 with Neumann walls. This program assembles the operator,
//! diagonalizes it densely, and prints both spectra side by side, then
//! tracks the Dirichlet ground energy toward its continuum limit d(π/L)²
//! as the mesh refines — the observed order should sit near h².

use lifshitz_lab::grid::{
    build_laplacian, continuum_dirichlet_ground_energy, dirichlet_eigenvalues_1d, free_spectrum,
    neumann_eigenvalues_1d, BoundaryCondition, GridSpec,
};
use lifshitz_lab::spectral::dense_eigenvalues;

fn main() -> lifshitz_lab::Result<()> {
    let grid = GridSpec::new(1, 8.0, 12)?;

    println!("free spectra on a {}-cell box of side {}", grid.points_per_side, grid.side_length);
    println!("{:>4} {:>14} {:>14} {:>14} {:>14}", "k", "dirichlet", "closed form", "neumann", "closed form");
    let lap_d = build_laplacian(&grid, BoundaryCondition::Dirichlet)?;
    let lap_n = build_laplacian(&grid, BoundaryCondition::Neumann)?;
    let dir = dense_eigenvalues(&lap_d)?;
    let neu = dense_eigenvalues(&lap_n)?;
    let dir_exact = dirichlet_eigenvalues_1d(grid.points_per_side, grid.side_length);
    let neu_exact = neumann_eigenvalues_1d(grid.points_per_side, grid.side_length);
    for k in 0..grid.points_per_side {
        println!(
            "{:>4} {:>14.8} {:>14.8} {:>14.8} {:>14.8}",
            k, dir[k], dir_exact[k], neu[k], neu_exact[k]
        );
    }

    // the multi-dimensional route agrees with the tensorized closed form
    let grid2 = GridSpec::new(2, 8.0, 12)?;
    let spectrum2 = free_spectrum(&grid2, BoundaryCondition::Dirichlet)?;
    println!("\n2d Dirichlet ground energy {:.8} (two 1d grounds: {:.8})", spectrum2[0], 2.0 * dir_exact[0]);

    println!("\nmesh refinement toward the continuum ground energy");
    println!("{:>6} {:>16} {:>12}", "n", "lambda_1", "error");
    let mut previous: Option<f64> = None;
    for n in [16usize, 32, 64, 128] {
        let fine = GridSpec::new(1, 8.0, n)?;
        let lambda = dirichlet_eigenvalues_1d(n, 8.0)[0];
        let error = (lambda - continuum_dirichlet_ground_energy(&fine)).abs();
        let order = previous.map(|p: f64| (p / error).log2()).unwrap_or(f64::NAN);
        println!("{n:>6} {lambda:>16.10} {error:>12.3e}   order {order:.2}");
        previous = Some(error);
    }
    Ok(())
}
