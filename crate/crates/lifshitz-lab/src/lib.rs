//! Numerical laboratory for random Schrödinger operators with squared
//! alloy-type potentials.
//!
//! The model is H_ω = −Δ + V_ω on boxes Λ_L = [−L/2, L/2]^d, where
//! V_ω = U_ω² and U_ω(x) = Σ_{i∈ℤ^d} q_i(ω) f(x − i) is an alloy field with
//! i.i.d. couplings q_i and a single-site envelope f. Squaring the field
//! keeps V ≥ 0 but destroys monotonicity in the couplings, which is what
//! makes the low-energy behaviour of this model interesting: the integrated
//! density of states N(E) develops a Lifshits tail N(E) ≈ exp(−c E^{−γ})
//! whose exponent γ switches from d/2 (short-range envelopes, α ≥ d+1) to
//! d/(2(α−d)) in the long-range regime d < α < d+1.
//!
//! The crate provides the pieces to study this on a desk machine:
//!
//! * [`grid`] — finite-difference Laplacians with Dirichlet/Neumann ghost
//!   cells and the Hamiltonian assembly H = −Δ_h + diag(V);
//! * [`disorder`] — coupling laws, envelopes, reproducible sampling, the
//!   squared potential, and the moment constant ρ;
//! * [`spectral`] — eigenvalue counting by factorization inertia and lowest
//!   eigenpairs by Lanczos, with a dense brute-force oracle at small sizes;
//! * [`concentration`] — bounded-difference constants, the McDiarmid tail
//!   bound, and its empirical verification;
//! * [`perturbation`] — the eigenvalue path E(t) = λ₁(−Δ^N + tV), its
//!   Hellmann–Feynman derivative, and the quadratic-remainder constants;
//! * [`ids`] — Monte Carlo estimation of the Dirichlet–Neumann bracketed
//!   IDS over energy grids;
//! * [`lifshitz`] — exponent fitting, the theoretical exponent table, and
//!   the rare-event lower-bound probe;
//! * [`config`], [`runner`], [`report`] — experiment configuration, the
//!   pipelines behind the CLI, and CSV/JSONL/SVG persistence.
//!
//! Runnable walkthroughs live in `examples/`; the `lifshitz-lab` binary
//! exposes the same pipelines as subcommands.

pub mod concentration;
pub mod config;
pub mod disorder;
pub mod error;
pub mod grid;
pub mod ids;
pub mod lattice;
pub mod lifshitz;
pub mod perturbation;
pub mod report;
pub mod rng;
pub mod runner;
pub mod spectral;

pub use error::{Error, Result};
