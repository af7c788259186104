//! Seeded generators for test data: step functions with dyadic-aligned
//! jumps and normalized random polynomials.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::dyadic::pow2;
use crate::operator::{Grid, GridFunction};
use crate::polynomial::{BiPoly, NPoly};

/// The generator used everywhere a seed is accepted.
pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `Σ c_i 1_{J_i}` over `count` random dyadic subintervals `J_i ⊂ I₀` with
/// log-uniform heights in `[1, 10³]`, on top of a background of `floor`.
pub fn dyadic_indicator_sum(grid: &Grid, rng: &mut impl Rng, count: usize, floor: f64) -> GridFunction<f64> {
    let mut f = GridFunction::from_values(*grid, vec![floor; grid.n]).expect("length matches");
    let lo = finest_dyadic_level(grid);
    for _ in 0..count {
        let k = rng.random_range(lo..=grid.s0);
        let slots = 1i64 << (grid.s0 - k);
        let m = rng.random_range(0..slots);
        let height = 10f64.powf(rng.random_range(0.0..3.0));
        let cells = (pow2(k) / grid.h()).round() as usize;
        let start = m as usize * cells;
        for v in &mut f.values_mut()[start..start + cells] {
            *v += height;
        }
    }
    f
}

/// Nonnegative step function, constant on the dyadic intervals of side
/// `2^level`, with log-normal heights; each piece is zero with probability
/// `p_zero`.
pub fn step_function(grid: &Grid, rng: &mut impl Rng, level: i32, p_zero: f64) -> GridFunction<f64> {
    let level = level.clamp(finest_dyadic_level(grid), grid.s0);
    let cells = (pow2(level) / grid.h()).round() as usize;
    let normal = Normal::new(0.0f64, 1.0).expect("valid normal");
    let mut values = Vec::with_capacity(grid.n);
    while values.len() < grid.n {
        let v = if rng.random::<f64>() < p_zero { 0.0 } else { normal.sample(rng).exp() };
        values.extend(std::iter::repeat_n(v, cells));
    }
    GridFunction::from_values(*grid, values).expect("length matches")
}

/// Finest level `k` with `2^k` a whole number of cells.
pub fn finest_dyadic_level(grid: &Grid) -> i32 {
    let mut k = grid.s0;
    loop {
        let c = pow2(k - 1) / grid.h();
        if (c - c.round()).abs() > 1e-9 || c < 1.0 {
            return k;
        }
        k -= 1;
    }
}

/// Univariate polynomial of the given degree with standard normal
/// coefficients (constant included), scaled to `‖P‖ = 1`.
pub fn random_poly_1d(rng: &mut impl Rng, degree: u32) -> NPoly {
    let normal = Normal::new(0.0f64, 1.0).expect("valid normal");
    loop {
        let c: Vec<f64> = (0..=degree).map(|_| normal.sample(rng)).collect();
        let p = NPoly::from_dense_1d(&c);
        if p.coeff_norm() > 1e-3 {
            return p.normalized().expect("nonzero norm");
        }
    }
}

/// Planar polynomial of total degree at most `degree` with standard normal
/// coefficients, scaled to `‖P‖ = 1`.
pub fn random_poly_2d(rng: &mut impl Rng, degree: u32) -> NPoly {
    let normal = Normal::new(0.0f64, 1.0).expect("valid normal");
    loop {
        let mut terms = Vec::new();
        for a in 0..=degree {
            for b in 0..=degree - a {
                terms.push((vec![a, b], normal.sample(rng)));
            }
        }
        let p = NPoly::from_terms(2, terms).expect("valid terms");
        if p.coeff_norm() > 1e-3 {
            return p.normalized().expect("nonzero norm");
        }
    }
}

/// One-dimensional stripped phase with the given `(α, β)` monomials and
/// standard normal coefficients, scaled to `‖P‖ = 1`.
pub fn random_phase(rng: &mut impl Rng, monomials: &[(u32, u32)]) -> BiPoly {
    let normal = Normal::new(0.0f64, 1.0).expect("valid normal");
    let terms: Vec<(u32, u32, f64)> = monomials.iter().map(|&(a, b)| (a, b, normal.sample(rng))).collect();
    BiPoly::from_1d(&terms).normalized().expect("nonzero norm")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generators_are_deterministic_and_aligned() {
        let g = Grid::new(2, 768).unwrap();
        let a = dyadic_indicator_sum(&g, &mut rng(3), 10, 1.0);
        let b = dyadic_indicator_sum(&g, &mut rng(3), 10, 1.0);
        assert_eq!(a.values(), b.values());
        assert!(a.values().iter().all(|&v| v >= 1.0));
        let lvl = finest_dyadic_level(&g);
        // 768 cells on [0,4): h = 1/192, so 2^-6 is the finest dyadic multiple
        assert_eq!(lvl, -6);
        let s = step_function(&g, &mut rng(5), -2, 0.3);
        let cells = 48;
        for chunk in s.values().chunks(cells) {
            assert!(chunk.iter().all(|&v| v == chunk[0]));
        }
        let p = random_poly_1d(&mut rng(1), 4);
        assert!((p.coeff_norm() - 1.0).abs() < 1e-12);
        let q = random_poly_2d(&mut rng(1), 3);
        assert!((q.coeff_norm() - 1.0).abs() < 1e-12 && q.degree() <= 3);
        let ph = random_phase(&mut rng(2), &[(1, 1), (1, 2)]);
        assert!(ph.is_stripped());
    }
}
