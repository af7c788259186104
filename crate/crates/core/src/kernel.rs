//! The Hilbert kernel, its dyadic decomposition into odd bumps, and the
//! single-scale oscillatory kernels together with their `T T*` compositions.
//!
//! The bump is built from a `C¹` cutoff `η` (equal to 1 on `[0, ½]`, 0 on
//! `[1, ∞)`, smoothstep in between): `χ(u) = η(u) − η(2u)` lives on
//! `(¼, 1)` and `Σ_j χ(2^{−j}u) = 1` for `u > 0`, so `ψ(u) = χ(|u|)/u`
//! reconstructs `1/x` exactly and is the same function at every scale.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec;
use crate::polynomial::BiPoly;

/// `e(t) = exp(2πit)`, with the argument reduced mod 1 first.
#[inline]
pub fn e(t: f64) -> Complex64 {
    let f = t - t.round();
    let (s, c) = (std::f64::consts::TAU * f).sin_cos();
    Complex64::new(c, s)
}

#[inline]
fn smoothstep(t: f64) -> f64 {
    t * t * (3.0 - 2.0 * t)
}

/// Cutoff: 1 on `[0, ½]`, 0 on `[1, ∞)`, `C¹` in between.
#[inline]
pub fn eta(u: f64) -> f64 {
    if u <= 0.5 {
        1.0
    } else if u >= 1.0 {
        0.0
    } else {
        1.0 - smoothstep(2.0 * u - 1.0)
    }
}

/// Annular piece `χ(u) = η(u) − η(2u)`, supported in `(¼, 1)`.
#[inline]
pub fn chi(u: f64) -> f64 {
    eta(u) - eta(2.0 * u)
}

/// Unit-scale bump `ψ(u) = χ(|u|)/u`: odd, supported in `¼ < |u| < 1`.
#[inline]
pub fn psi(u: f64) -> f64 {
    let a = u.abs();
    if a <= 0.25 || a >= 1.0 {
        0.0
    } else {
        chi(a) / u
    }
}

/// Derivative of [`psi`].
pub fn psi_prime(u: f64) -> f64 {
    let a = u.abs();
    if a <= 0.25 || a >= 1.0 {
        return 0.0;
    }
    let deta = |v: f64| if v <= 0.5 || v >= 1.0 { 0.0 } else { -2.0 * 6.0 * (2.0 * v - 1.0) * (1.0 - (2.0 * v - 1.0)) };
    let dchi = deta(a) - 2.0 * deta(2.0 * a);
    // d/du [χ(|u|)/u] = χ'(|u|) sign(u)/u − χ(|u|)/u², and sign(u)/u = 1/|u|
    dchi / a - chi(a) / (u * u)
}

/// The bump `ψ_j`; the unit-scale profile does not depend on `j`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PsiBump {
    pub j: i32,
}

impl PsiBump {
    /// `ψ_j(u)`, with `u` already rescaled by `2^{−j}`.
    #[inline]
    pub fn eval(&self, u: f64) -> f64 {
        psi(u)
    }

    /// `2^{−j} ψ_j(2^{−j} x)`, the `j`-th piece of `1/x`.
    #[inline]
    pub fn piece(&self, x: f64) -> f64 {
        let s = 2f64.powi(-self.j);
        s * psi(s * x)
    }

    /// Uniform bound on `|ψ|` and `|ψ'|`, by dense sampling of the profile.
    pub fn c1_bound() -> f64 {
        (1..20_000)
            .map(|i| {
                let u = 0.25 + 0.75 * i as f64 / 20_000.0;
                psi(u).abs().max(psi_prime(u).abs())
            })
            .fold(0.0, f64::max)
    }
}

/// Bumps `ψ_j` for `j` in the inclusive range.
pub fn hilbert_psi_family(j_min: i32, j_max: i32) -> Vec<PsiBump> {
    (j_min..=j_max).map(|j| PsiBump { j }).collect()
}

/// `Σ_j 2^{−j} ψ_j(2^{−j} x)` over the family.
pub fn reconstruct(family: &[PsiBump], x: f64) -> f64 {
    family.iter().map(|b| b.piece(x)).sum()
}

/// A one-dimensional Calderón–Zygmund kernel.
pub trait CzKernel: Sync + Send {
    fn eval(&self, y: f64) -> f64;
    fn name(&self) -> String;
}

/// `K(y) = 1/y`.
#[derive(Clone, Copy, Debug, Default)]
pub struct Hilbert;

impl CzKernel for Hilbert {
    fn eval(&self, y: f64) -> f64 {
        if y == 0.0 {
            0.0
        } else {
            1.0 / y
        }
    }
    fn name(&self) -> String {
        "hilbert".into()
    }
}

/// Partial sum `Σ_{j_min ≤ j ≤ j_max} 2^{−j} ψ_j(2^{−j} y)` of the Hilbert
/// decomposition; equals `1/y` for `2^{j_min} ≤ |y| ≤ 2^{j_max − 1}`.
#[derive(Clone, Copy, Debug)]
pub struct PsiSum {
    pub j_min: i32,
    pub j_max: i32,
}

impl CzKernel for PsiSum {
    fn eval(&self, y: f64) -> f64 {
        (self.j_min..=self.j_max).map(|j| PsiBump { j }.piece(y)).sum()
    }
    fn name(&self) -> String {
        format!("psi-sum[{},{}]", self.j_min, self.j_max)
    }
}

/// Single-scale oscillatory kernel `φ_k(x, y) = 2^{−k} e(P(x,y)) ψ_k(2^{−k} y)`
/// in one dimension.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OscKernel {
    pub poly: BiPoly,
    pub k: i32,
    pub bump: PsiBump,
}

impl OscKernel {
    pub fn new(poly: BiPoly, k: i32) -> Result<Self> {
        if poly.dim() != 1 {
            return Err(Error::UnsupportedDimension(poly.dim()));
        }
        Ok(OscKernel { poly, k, bump: PsiBump { j: k } })
    }
}

/// Evaluate `φ_k(x, y)`; zero when `|y| ∉ (2^{k−2}, 2^k)`.
pub fn phi_eval(kern: &OscKernel, x: f64, y: f64) -> Complex64 {
    let s = 2f64.powi(-kern.k);
    let a = kern.bump.eval(s * y);
    if a == 0.0 {
        return Complex64::new(0.0, 0.0);
    }
    e(kern.poly.eval_unchecked(&[x], &[y])) * (s * a)
}

/// Quadrature settings for [`ttstar_value`].
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct TtQuadrature {
    /// Largest neglected phase curvature per subinterval, in cycles.
    pub tol_cycles: f64,
    /// Subintervals across the smaller bump support, at least.
    pub cells_per_bump: usize,
}

impl Default for TtQuadrature {
    fn default() -> Self {
        TtQuadrature { tol_cycles: 1e-3, cells_per_bump: 256 }
    }
}

/// `∫_0^1 e^{iwt} dt` and `∫_0^1 t e^{iwt} dt`.
#[inline]
fn filon_moments(w: f64) -> (Complex64, Complex64) {
    if w.abs() < 0.05 {
        let iw = Complex64::new(0.0, w);
        let mut pow = Complex64::new(1.0, 0.0);
        let mut fact = 1.0;
        let (mut m0, mut m1) = (Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0));
        for m in 0..12 {
            if m > 0 {
                pow *= iw;
                fact *= m as f64;
            }
            m0 += pow / (fact * (m + 1) as f64);
            m1 += pow / (fact * (m + 2) as f64);
        }
        (m0, m1)
    } else {
        let ew = Complex64::new(w.cos(), w.sin());
        let iw = Complex64::new(0.0, w);
        let m0 = (ew - 1.0) / iw;
        let m1 = ew / iw + (ew - 1.0) / (w * w);
        (m0, m1)
    }
}

/// `∫_a^b A(z) e(φ(z)) dz` with piecewise-linear amplitude and phase on `n`
/// equal subintervals; each piece is integrated in closed form, so large
/// linear phase increments per piece cost nothing in accuracy.
pub fn filon_integral(a: f64, b: f64, n: usize, amp: impl Fn(f64) -> f64, phase: impl Fn(f64) -> f64) -> Complex64 {
    if !(b > a) || n == 0 {
        return Complex64::new(0.0, 0.0);
    }
    let h = (b - a) / n as f64;
    let mut acc = Complex64::new(0.0, 0.0);
    let mut z0 = a;
    let mut a0 = amp(z0);
    let mut p0 = phase(z0);
    for i in 1..=n {
        let z1 = if i == n { b } else { a + i as f64 * h };
        let a1 = amp(z1);
        let p1 = phase(z1);
        if a0 != 0.0 || a1 != 0.0 {
            let w = std::f64::consts::TAU * (p1 - p0);
            let (m0, m1) = filon_moments(w);
            acc += e(p0) * (m0 * a0 + m1 * (a1 - a0)) * (z1 - z0);
        }
        z0 = z1;
        a0 = a1;
        p0 = p1;
    }
    acc
}

fn intersect(a: (f64, f64), b: (f64, f64)) -> Option<(f64, f64)> {
    let lo = a.0.max(b.0);
    let hi = a.1.min(b.1);
    (hi > lo).then_some((lo, hi))
}

/// Value at `(x, y)` of the kernel of `T_k T_j^*`:
/// `2^{−k−j} ∫ e(P(x,z) − P(y,z)) ψ_k(2^{−k}(x−z)) ψ_j(2^{−j}(y−z)) dz`.
pub fn ttstar_value(p: &BiPoly, k: i32, j: i32, x: f64, y: f64, q: &TtQuadrature) -> Result<Complex64> {
    if q.cells_per_bump < 8 {
        return Err(Error::Resolution(format!("{} cells per bump support, need at least 8", q.cells_per_bump)));
    }
    let (lk, lj) = (2f64.powi(k), 2f64.powi(j));
    let (sk, sj) = (1.0 / lk, 1.0 / lj);
    let wins = |c: f64, l: f64| [(c - l, c - l / 4.0), (c + l / 4.0, c + l)];
    // Phase difference as a polynomial in z: coefficients c_b(x) − c_b(y).
    let cx = p.coeffs_in_y_1d(x);
    let cy = p.coeffs_in_y_1d(y);
    let dc: Vec<f64> = cx.iter().zip(&cy).map(|(a, b)| a - b).collect();
    let phase = |z: f64| crate::polynomial::horner(&dc, z);
    // second derivative bound on a window, for the curvature rule
    let curv = |lo: f64, hi: f64| -> f64 {
        let zmax = lo.abs().max(hi.abs());
        dc.iter()
            .enumerate()
            .skip(2)
            .map(|(m, c)| (m * (m - 1)) as f64 * c.abs() * zmax.powi(m as i32 - 2))
            .sum()
    };
    let amp = |z: f64| psi(sk * (x - z)) * psi(sj * (y - z));
    let h_amp = lk.min(lj) * 0.75 / q.cells_per_bump as f64;
    let mut total = Complex64::new(0.0, 0.0);
    for wk in wins(x, lk) {
        for wj in wins(y, lj) {
            if let Some((lo, hi)) = intersect(wk, wj) {
                let c2 = curv(lo, hi);
                let h_phase = if c2 > 0.0 { (8.0 * q.tol_cycles / c2).sqrt() } else { f64::INFINITY };
                let h = h_amp.min(h_phase);
                let n = ((hi - lo) / h).ceil().max(1.0) as usize;
                total += filon_integral(lo, hi, n, amp, phase);
            }
        }
    }
    Ok(total * (sk * sj))
}

/// One sample of the composed kernel.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct TtSample {
    pub x: f64,
    pub y: f64,
    pub value: Complex64,
}

/// Composed kernel on the `m × m` grid of cell centers of the cube
/// `[corner, corner + 2^k)²`, row-major in `x`.
pub fn ttstar_kernel(
    p: &BiPoly,
    k: i32,
    j: i32,
    corner: f64,
    m: usize,
    q: &TtQuadrature,
) -> Result<Vec<TtSample>> {
    if j > k || j < crate::T_N {
        return Err(Error::Scale(format!("need t_n <= j <= k, got j = {j}, k = {k}")));
    }
    let side = 2f64.powi(k);
    let pts: Vec<(f64, f64)> = (0..m * m)
        .map(|idx| {
            let (a, b) = (idx / m, idx % m);
            (corner + (a as f64 + 0.5) * side / m as f64, corner + (b as f64 + 0.5) * side / m as f64)
        })
        .collect();
    ttstar_at(p, k, j, &pts, q)
}

/// Composed kernel at arbitrary points.
pub fn ttstar_at(p: &BiPoly, k: i32, j: i32, pts: &[(f64, f64)], q: &TtQuadrature) -> Result<Vec<TtSample>> {
    let vals = exec::map_slice(pts, |&(x, y)| ttstar_value(p, k, j, x, y, q).map(|v| TtSample { x, y, value: v }));
    vals.into_iter().collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reconstruction_of_one_over_x() {
        let fam = hilbert_psi_family(-20, 20);
        assert!((reconstruct(&fam, 0.7) - 1.0 / 0.7).abs() < 1e-8);
        let mut x = 1e-2;
        while x <= 1e2 {
            for s in [x, -x] {
                let r = reconstruct(&fam, s);
                assert!((r * s - 1.0).abs() < 1e-6, "{s}: {r}");
            }
            x *= 1.37;
        }
    }

    #[test]
    fn support_and_oddness() {
        assert_eq!(psi(0.2), 0.0);
        assert_eq!(psi(-0.2), 0.0);
        assert_eq!(psi(1.0), 0.0);
        for i in 0..100 {
            let u = 0.25 + 0.0075 * i as f64;
            assert_eq!(psi(-u), -psi(u));
        }
        let b = PsiBump { j: 3 };
        assert_eq!(b.piece(0.2 * 8.0), 0.0);
    }

    #[test]
    fn zero_mean_on_symmetric_grids() {
        for j in [-3, 0, 4] {
            let b = PsiBump { j };
            let l = 2f64.powi(j);
            let n = 4096;
            let h = 2.0 * l / n as f64;
            let s: f64 = (0..n).map(|i| b.piece(-l + (i as f64 + 0.5) * h) * h).sum();
            assert!(s.abs() < 1e-10, "{j}: {s}");
        }
    }

    #[test]
    fn derivative_matches_finite_difference() {
        for i in 1..200 {
            let u = 0.2 + 0.85 * i as f64 / 200.0;
            let h = 1e-6;
            let fd = (psi(u + h) - psi(u - h)) / (2.0 * h);
            assert!((fd - psi_prime(u)).abs() < 1e-4 * (1.0 + fd.abs()), "{u}");
        }
        let c = PsiBump::c1_bound();
        assert!(c > 1.0 && c < 50.0);
    }

    #[test]
    fn psi_sum_agrees_with_hilbert_inside_range() {
        let k = PsiSum { j_min: -4, j_max: 6 };
        for y in [0.07, 0.5, -3.0, 31.0] {
            assert!((k.eval(y) - Hilbert.eval(y)).abs() < 1e-12 * Hilbert.eval(y).abs());
        }
    }

    #[test]
    fn phi_examples() {
        let zero = OscKernel::new(BiPoly::zero(1), 4).unwrap();
        let v = phi_eval(&zero, 1.3, 9.0);
        assert_eq!(v.im, 0.0);
        assert!((v.re - psi(9.0 / 16.0) / 16.0).abs() < 1e-15);
        let kern = OscKernel::new(BiPoly::monomial_1d(1, 2, 1.0), 4).unwrap();
        assert_eq!(phi_eval(&kern, 0.3, 2.0).norm(), 0.0);
        let a = phi_eval(&kern, 0.3, 9.0).norm();
        let b = phi_eval(&kern, -7.1, 9.0).norm();
        assert!((a - b).abs() < 1e-15);
    }

    #[test]
    fn filon_exact_for_linear_data() {
        // ∫_0^1 (1 + 2t) e(3.25 t) dt in closed form
        let w = std::f64::consts::TAU * 3.25;
        let (m0, m1) = filon_moments(w);
        let exact = m0 + m1 * 2.0;
        let got = filon_integral(0.0, 1.0, 7, |t| 1.0 + 2.0 * t, |t| 3.25 * t);
        assert!((got - exact).norm() < 1e-13);
        // small-w branch matches the closed form near the switch
        let w = 0.0499;
        let (a0, a1) = filon_moments(w);
        let iw = Complex64::new(0.0, w);
        let ew = iw.exp();
        assert!((a0 - (ew - 1.0) / iw).norm() < 1e-13);
        assert!((a1 - (ew / iw + (ew - 1.0) / (w * w))).norm() < 1e-11);
    }

    #[test]
    fn ttstar_zero_phase_diagonal() {
        let k = 5;
        let q = TtQuadrature::default();
        let v = ttstar_value(&BiPoly::zero(1), k, k, 3.0, 3.0, &q).unwrap();
        // oracle: midpoint rule for 2^{-2k} ∫ ψ(2^{-k} z)² dz on a fine grid
        let l = 2f64.powi(k);
        let n = 200_000;
        let h = 2.0 * l / n as f64;
        let oracle: f64 =
            (0..n).map(|i| psi((-l + (i as f64 + 0.5) * h) / l).powi(2) * h).sum::<f64>() / (l * l);
        assert!(v.im.abs() < 1e-15);
        assert!(v.re > 0.0);
        assert!((v.re - oracle).abs() < 1e-6 * oracle, "{} vs {oracle}", v.re);
    }

    #[test]
    fn ttstar_disjoint_supports_vanish() {
        let q = TtQuadrature::default();
        let v = ttstar_value(&BiPoly::monomial_1d(1, 2, 1.0), 5, 3, 0.0, 100.0, &q).unwrap();
        assert_eq!(v.norm(), 0.0);
    }

    #[test]
    fn ttstar_zero_phase_symmetric() {
        let q = TtQuadrature::default();
        let s = ttstar_kernel(&BiPoly::zero(1), 4, 4, 0.0, 6, &q).unwrap();
        for a in 0..6 {
            for b in 0..6 {
                let u = s[a * 6 + b].value;
                let w = s[b * 6 + a].value.conj();
                assert!((u - w).norm() < 1e-12);
            }
        }
        assert!(matches!(ttstar_kernel(&BiPoly::zero(1), 4, 2, 0.0, 2, &q), Err(Error::Scale(_))));
        let coarse = TtQuadrature { tol_cycles: 1e-3, cells_per_bump: 4 };
        assert!(matches!(ttstar_value(&BiPoly::zero(1), 4, 4, 0.0, 1.0, &coarse), Err(Error::Resolution(_))));
    }

    #[test]
    fn ttstar_quadrature_converges() {
        // Errors are measured against the natural size 2^{-k} of the kernel.
        let p = BiPoly::monomial_1d(1, 2, 1.0);
        let k = 6;
        let scale = 2f64.powi(-k);
        let q1 = TtQuadrature { tol_cycles: 4e-3, cells_per_bump: 128 };
        let q2 = TtQuadrature { tol_cycles: 2.5e-4, cells_per_bump: 512 };
        let q3 = TtQuadrature { tol_cycles: 1.6e-5, cells_per_bump: 2048 };
        for (x, y) in [(3.0, 3.0), (40.0, 41.5), (10.0, 50.0), (60.0, 2.0)] {
            let a = ttstar_value(&p, k, 5, x, y, &q1).unwrap();
            let b = ttstar_value(&p, k, 5, x, y, &q2).unwrap();
            let c = ttstar_value(&p, k, 5, x, y, &q3).unwrap();
            assert!((a - c).norm() <= 1e-4 * scale, "({x},{y}): {a} vs {c}");
            assert!((b - c).norm() <= (a - c).norm() + 1e-12 * scale);
        }
    }
}
