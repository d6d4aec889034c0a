//! Sup-norm lattice helpers: shell counting, certified decay-sum bounds,
//! and deterministic iteration over boxes of ℤ^d.
//!
//! Lattice distance is the sup norm |i|_∞ throughout the crate, matching the
//! cube geometry of the boxes Λ_L = [−L/2, L/2]^d.

/// Number of lattice sites i ∈ ℤ^d with |i|_∞ = m.
pub fn shell_count(dim: usize, m: i64) -> u128 {
    assert!(dim >= 1);
    if m == 0 {
        return 1;
    }
    let outer = (2 * m as u128 + 1).pow(dim as u32);
    let inner = (2 * m as u128 - 1).pow(dim as u32);
    outer - inner
}

/// Number of lattice sites with |i|_∞ ≤ radius.
pub fn site_count(dim: usize, radius: i64) -> u128 {
    assert!(radius >= 0);
    (2 * radius as u128 + 1).pow(dim as u32)
}

pub fn sup_norm_int(i: &[i64]) -> i64 {
    i.iter().map(|c| c.abs()).max().unwrap_or(0)
}

pub fn sup_norm(x: &[f64]) -> f64 {
    x.iter().fold(0.0_f64, |acc, c| acc.max(c.abs()))
}

/// Visit every site i ∈ ℤ^d with |i|_∞ ≤ radius in odometer order
/// (last coordinate fastest). The buffer passed to `visit` is reused.
pub fn for_each_site<F: FnMut(&[i64])>(dim: usize, radius: i64, mut visit: F) {
    assert!(dim >= 1 && radius >= 0);
    let mut site = vec![-radius; dim];
    loop {
        visit(&site);
        // advance odometer
        let mut d = dim;
        loop {
            if d == 0 {
                return;
            }
            d -= 1;
            if site[d] < radius {
                site[d] += 1;
                for c in site.iter_mut().skip(d + 1) {
                    *c = -radius;
                }
                break;
            }
        }
    }
}

/// Flat position of a site in the `for_each_site(dim, radius, ..)` order.
pub fn site_flat_index(site: &[i64], radius: i64) -> usize {
    let width = (2 * radius + 1) as usize;
    let mut idx = 0usize;
    for &c in site {
        debug_assert!(c.abs() <= radius);
        idx = idx * width + (c + radius) as usize;
    }
    idx
}

/// Two-sided bracket for a positive series: the true value lies in
/// [`lower()`, `upper()`].
#[derive(Debug, Clone, Copy)]
pub struct SeriesBracket {
    /// Directly summed part (a lower bound for the full series).
    pub partial: f64,
    /// Certified upper bound on the omitted remainder.
    pub remainder_upper: f64,
    /// Certified lower bound on the omitted remainder.
    pub remainder_lower: f64,
}

impl SeriesBracket {
    pub fn upper(&self) -> f64 {
        self.partial + self.remainder_upper
    }
    pub fn lower(&self) -> f64 {
        self.partial + self.remainder_lower
    }
    /// Midpoint estimate with half-width `uncertainty`.
    pub fn midpoint(&self) -> f64 {
        0.5 * (self.upper() + self.lower())
    }
    pub fn uncertainty(&self) -> f64 {
        0.5 * (self.remainder_upper - self.remainder_lower)
    }
}

/// Certified bracket for Σ_{m ≥ m_start} shell_count(d, m) · (offset + m)^{−alpha}.
///
/// Sums shells directly until the analytic integral remainder is below
/// `rel_tol` of the partial sum (or `max_terms` shells past that point), then
/// closes the tail with integral bounds built from
/// shell_count(m) ≤ 2d(2m+1)^{d−1} and shell_count(m) ≥ 2d(2m−1)^{d−1}:
/// ∫_M^∞ g₋ ≤ Σ_{m ≥ M} term(m) ≤ ∫_{M−1}^∞ g₊.
/// The cut is only taken where both integrands are verifiably decreasing,
/// which the direct summation always reaches.
///
/// Requires alpha > dim and offset + m_start > 0.
pub fn shell_decay_sum(
    dim: usize,
    alpha: f64,
    offset: f64,
    m_start: i64,
    rel_tol: f64,
    max_terms: usize,
) -> SeriesBracket {
    assert!(alpha > dim as f64, "shell_decay_sum needs alpha > dim");
    assert!(offset + m_start as f64 > 0.0);
    let mut partial = 0.0;
    let mut m = m_start.max(0);
    if m_start <= 0 {
        // shell 0 handled separately; the integral dominators cover m ≥ 1
        partial += offset.powf(-alpha);
        m = 1;
    }
    let mut terms = 0usize;
    loop {
        // the 2d(2x∓1)^{d−1}(a+x)^{−α} integrands are decreasing on [M, ∞)
        // once α(2M−1) ≥ 2(d−1)(a+M); cut only past that point
        let cut_ok = m >= 2 && {
            let x = (m - 1) as f64;
            dim == 1 || alpha * (2.0 * x - 1.0) >= 2.0 * (dim as f64 - 1.0) * (offset + x)
        };
        if cut_ok {
            let rem_up = shell_tail_integral(dim, alpha, offset, m as f64 - 1.0, 1.0);
            if rem_up <= rel_tol * partial.max(f64::MIN_POSITIVE) || terms >= max_terms {
                let rem_lo = shell_tail_integral(dim, alpha, offset, m as f64, -1.0);
                return SeriesBracket { partial, remainder_upper: rem_up, remainder_lower: rem_lo };
            }
        }
        partial += shell_count(dim, m) as f64 * (offset + m as f64).powf(-alpha);
        m += 1;
        terms += 1;
    }
}

/// ∫_M^∞ 2d(2x+c)^{d−1}(offset+x)^{−alpha} dx in closed form via the binomial
/// expansion (2x+c)^{d−1} = Σ_k C(d−1,k) 2^k (offset+x)^k (c−2·offset)^{d−1−k},
/// with c = +1 for the upper dominator and c = −1 for the lower one.
fn shell_tail_integral(dim: usize, alpha: f64, offset: f64, m: f64, c: f64) -> f64 {
    let d = dim as f64;
    let a = offset;
    let mut total = 0.0;
    for k in 0..dim {
        let binom = binomial(dim - 1, k) as f64;
        let coeff = binom * 2f64.powi(k as i32) * (c - 2.0 * a).powi((dim - 1 - k) as i32);
        // ∫_M^∞ (a+x)^{k−alpha} dx = (a+M)^{k+1−alpha}/(alpha−k−1)
        total += coeff * (a + m).powf(k as f64 + 1.0 - alpha) / (alpha - k as f64 - 1.0);
    }
    (2.0 * d * total).max(0.0)
}

fn binomial(n: usize, k: usize) -> u64 {
    let k = k.min(n - k.min(n));
    let mut acc = 1u64;
    for j in 0..k {
        acc = acc * (n - j) as u64 / (j + 1) as u64;
    }
    acc
}
