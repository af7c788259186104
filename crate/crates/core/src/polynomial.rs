//! Real polynomials: `NPoly` in one vector variable and `BiPoly` in a pair
//! `(x, y)` of vector variables, both stored sparsely (zero coefficients are
//! never kept).
//!
//! The coefficient norm ignores the constant term. Phases used by the
//! operators are expected to be *stripped*: no constants, no pure powers of
//! `x`, nothing of total degree one.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Relative size below which coefficients produced by cancellation (rotation,
/// shifting) are treated as exact zeros.
const PRUNE_REL: f64 = 1e-13;

/// A multi-index `α ∈ ℕⁿ`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MultiIndex(Vec<u32>);

impl MultiIndex {
    pub fn new(entries: Vec<u32>) -> Self {
        MultiIndex(entries)
    }

    pub fn zero(dim: usize) -> Self {
        MultiIndex(vec![0; dim])
    }

    /// The unit vector `e_axis`.
    pub fn unit(dim: usize, axis: usize) -> Self {
        let mut v = vec![0; dim];
        v[axis] = 1;
        MultiIndex(v)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    /// `|α| = Σ α_i`.
    pub fn order(&self) -> u32 {
        self.0.iter().sum()
    }

    pub fn entries(&self) -> &[u32] {
        &self.0
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&a| a == 0)
    }

    /// `x^α`; `x` must have the same length.
    pub fn monomial(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.0.len());
        self.0.iter().zip(x).map(|(&a, &xi)| xi.powi(a as i32)).product()
    }

    fn add(&self, other: &MultiIndex) -> MultiIndex {
        MultiIndex(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }
}

fn prune<K: Ord + Clone>(map: &mut BTreeMap<K, f64>, scale: f64) {
    let cut = PRUNE_REL * scale;
    map.retain(|_, c| c.abs() > cut);
}

fn binomial(n: u32, k: u32) -> f64 {
    let mut r: u64 = 1;
    for i in 0..k as u64 {
        r = r * (n as u64 - i) / (i + 1);
    }
    r as f64
}

/// All `m ∈ ℕ^parts` with `|m| = total`, in lexicographic order.
fn compositions(total: u32, parts: usize) -> Vec<Vec<u32>> {
    if parts == 1 {
        return vec![vec![total]];
    }
    let mut out = Vec::new();
    for first in 0..=total {
        for mut rest in compositions(total - first, parts - 1) {
            rest.insert(0, first);
            out.push(rest);
        }
    }
    out
}

/// Multinomial coefficient `a! / Π m_j!` as an exact integer.
fn multinomial(m: &[u32]) -> f64 {
    let mut acc: u64 = 1;
    let mut seen = 0u32;
    for &mj in m {
        for i in 1..=mj as u64 {
            seen += 1;
            acc = acc * seen as u64 / i;
        }
    }
    acc as f64
}

/// Polynomial `Σ λ_α x^α` on `ℝⁿ`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PolyJson", into = "PolyJson")]
pub struct NPoly {
    dim: usize,
    coeffs: BTreeMap<MultiIndex, f64>,
}

impl NPoly {
    pub fn zero(dim: usize) -> Self {
        NPoly { dim, coeffs: BTreeMap::new() }
    }

    pub fn constant(dim: usize, c: f64) -> Self {
        let mut p = Self::zero(dim);
        p.add_term(MultiIndex::zero(dim), c);
        p
    }

    /// Build from `(α, λ_α)` pairs; repeated keys are summed.
    pub fn from_terms<I>(dim: usize, terms: I) -> Result<Self>
    where
        I: IntoIterator<Item = (Vec<u32>, f64)>,
    {
        let mut p = Self::zero(dim);
        for (alpha, c) in terms {
            if alpha.len() != dim {
                return invalid(format!("multi-index {alpha:?} has length {} != {dim}", alpha.len()));
            }
            if !c.is_finite() {
                return invalid("non-finite coefficient");
            }
            p.add_term(MultiIndex(alpha), c);
        }
        Ok(p)
    }

    /// One-dimensional polynomial from dense coefficients `c[0] + c[1] t + …`.
    pub fn from_dense_1d(c: &[f64]) -> Self {
        let mut p = Self::zero(1);
        for (i, &v) in c.iter().enumerate() {
            p.add_term(MultiIndex(vec![i as u32]), v);
        }
        p
    }

    fn add_term(&mut self, alpha: MultiIndex, c: f64) {
        if c == 0.0 {
            return;
        }
        let v = *self.coeffs.get(&alpha).unwrap_or(&0.0) + c;
        if v == 0.0 {
            self.coeffs.remove(&alpha);
        } else {
            self.coeffs.insert(alpha, v);
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Largest `|α|` with a nonzero coefficient (0 for the zero polynomial).
    pub fn degree(&self) -> u32 {
        self.coeffs.keys().map(MultiIndex::order).max().unwrap_or(0)
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn terms(&self) -> impl Iterator<Item = (&MultiIndex, f64)> {
        self.coeffs.iter().map(|(k, v)| (k, *v))
    }

    pub fn coeff(&self, alpha: &[u32]) -> f64 {
        self.coeffs.get(&MultiIndex(alpha.to_vec())).copied().unwrap_or(0.0)
    }

    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim {
            return invalid(format!("point has dimension {} but polynomial has {}", x.len(), self.dim));
        }
        Ok(self.eval_unchecked(x))
    }

    pub(crate) fn eval_unchecked(&self, x: &[f64]) -> f64 {
        self.coeffs.iter().map(|(a, c)| c * a.monomial(x)).sum()
    }

    /// Dense coefficients of a one-dimensional polynomial, lowest degree first.
    pub fn dense_1d(&self) -> Vec<f64> {
        assert_eq!(self.dim, 1, "dense_1d needs a univariate polynomial");
        let mut c = vec![0.0; self.degree() as usize + 1];
        for (a, v) in &self.coeffs {
            c[a.0[0] as usize] = *v;
        }
        c
    }

    /// `‖P‖ = Σ_{|α| ≥ 1} |λ_α|`.
    pub fn coeff_norm(&self) -> f64 {
        self.coeffs.iter().filter(|(a, _)| !a.is_zero()).map(|(_, c)| c.abs()).sum()
    }

    /// Sum of all absolute coefficients, constant included.
    pub fn abs_sum(&self) -> f64 {
        self.coeffs.values().map(|c| c.abs()).sum()
    }

    pub fn scale(&self, s: f64) -> NPoly {
        let mut p = Self::zero(self.dim);
        for (a, c) in &self.coeffs {
            p.add_term(a.clone(), c * s);
        }
        p
    }

    /// Rescale so that `‖P‖ = 1`.
    pub fn normalized(&self) -> Result<NPoly> {
        let n = self.coeff_norm();
        if n == 0.0 {
            return Err(Error::Degenerate("cannot normalize a constant polynomial".into()));
        }
        Ok(self.scale(1.0 / n))
    }

    pub fn add(&self, other: &NPoly) -> NPoly {
        assert_eq!(self.dim, other.dim);
        let mut p = self.clone();
        for (a, c) in &other.coeffs {
            p.add_term(a.clone(), *c);
        }
        p
    }

    pub fn mul(&self, other: &NPoly) -> NPoly {
        assert_eq!(self.dim, other.dim);
        let mut acc: BTreeMap<MultiIndex, f64> = BTreeMap::new();
        for (a, c) in &self.coeffs {
            for (b, d) in &other.coeffs {
                *acc.entry(a.add(b)).or_insert(0.0) += c * d;
            }
        }
        acc.retain(|_, v| *v != 0.0);
        NPoly { dim: self.dim, coeffs: acc }
    }

    /// Formal partial derivative along `axis` (0-based).
    pub fn partial(&self, axis: usize) -> Result<NPoly> {
        if axis >= self.dim {
            return invalid(format!("axis {axis} out of range for dimension {}", self.dim));
        }
        let mut p = Self::zero(self.dim);
        for (a, c) in &self.coeffs {
            let e = a.0[axis];
            if e > 0 {
                let mut b = a.0.clone();
                b[axis] -= 1;
                p.add_term(MultiIndex(b), c * e as f64);
            }
        }
        Ok(p)
    }

    /// `P∘θ`, i.e. the polynomial `x ↦ P(θx)`, for an orthogonal `θ` given
    /// as rows.
    pub fn rotate(&self, theta: &[Vec<f64>]) -> Result<NPoly> {
        check_orthogonal(theta, self.dim)?;
        let n = self.dim;
        let mut out: BTreeMap<MultiIndex, f64> = BTreeMap::new();
        for (alpha, c) in &self.coeffs {
            let mut term = NPoly::constant(n, *c);
            for (i, &ai) in alpha.0.iter().enumerate() {
                if ai == 0 {
                    continue;
                }
                // (Σ_j θ_ij x_j)^{a_i} by the multinomial theorem.
                let mut power = NPoly::zero(n);
                for m in compositions(ai, n) {
                    let coef: f64 = multinomial(&m)
                        * m.iter().zip(&theta[i]).map(|(&mj, &t)| t.powi(mj as i32)).product::<f64>();
                    power.add_term(MultiIndex(m), coef);
                }
                term = term.mul(&power);
            }
            for (k, v) in term.coeffs {
                *out.entry(k).or_insert(0.0) += v;
            }
        }
        prune(&mut out, self.abs_sum());
        Ok(NPoly { dim: n, coeffs: out })
    }

    /// Taylor re-expansion about `center`: the polynomial `u ↦ P(center + u)`.
    pub fn shift(&self, center: &[f64]) -> Result<NPoly> {
        if center.len() != self.dim {
            return invalid("shift center has wrong dimension");
        }
        let n = self.dim;
        let mut out = NPoly::zero(n);
        for (alpha, c) in &self.coeffs {
            let mut term = NPoly::constant(n, *c);
            for (i, &ai) in alpha.0.iter().enumerate() {
                if ai == 0 {
                    continue;
                }
                let mut f = NPoly::zero(n);
                for m in 0..=ai {
                    let mut e = vec![0; n];
                    e[i] = m;
                    f.add_term(MultiIndex(e), binomial(ai, m) * center[i].powi((ai - m) as i32));
                }
                term = term.mul(&f);
            }
            out = out.add(&term);
        }
        Ok(out)
    }
}

fn check_orthogonal(theta: &[Vec<f64>], n: usize) -> Result<()> {
    if theta.len() != n || theta.iter().any(|r| r.len() != n) {
        return invalid(format!("rotation must be {n}x{n}"));
    }
    for i in 0..n {
        for j in 0..n {
            let dot: f64 = (0..n).map(|r| theta[r][i] * theta[r][j]).sum();
            let target = if i == j { 1.0 } else { 0.0 };
            if (dot - target).abs() > 1e-12 {
                return invalid("matrix is not orthogonal to 1e-12");
            }
        }
    }
    Ok(())
}

/// The planar rotation by angle `a`, as rows.
pub fn rotation2(a: f64) -> Vec<Vec<f64>> {
    let (s, c) = a.sin_cos();
    vec![vec![c, -s], vec![s, c]]
}

/// Product `a·b` of square matrices given as rows.
pub fn mat_mul(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = a.len();
    (0..n).map(|i| (0..n).map(|j| (0..n).map(|k| a[i][k] * b[k][j]).sum()).collect()).collect()
}

/// `min_j ‖∂_j(P∘θ)‖ / ‖P‖`.
pub fn rotation_score(p: &NPoly, theta: &[Vec<f64>]) -> Result<f64> {
    let norm = p.coeff_norm();
    let q = p.rotate(theta)?;
    let mut best = f64::INFINITY;
    for j in 0..p.dim() {
        best = best.min(q.partial(j)?.coeff_norm() / norm);
    }
    Ok(best)
}

/// Search a uniform grid of `grid_size` planar rotations for the one that
/// keeps every partial derivative of `P∘θ` large. Returns `(θ, score)`.
pub fn find_admissible_rotation(p: &NPoly, grid_size: usize) -> Result<(Vec<Vec<f64>>, f64)> {
    if p.dim() != 2 {
        return Err(Error::UnsupportedDimension(p.dim()));
    }
    if p.degree() < 2 || p.coeff_norm() == 0.0 {
        return invalid("rotation search needs degree >= 2 and a nonzero norm");
    }
    if grid_size == 0 {
        return invalid("grid_size must be positive");
    }
    let scores = crate::exec::map_range(grid_size, |i| {
        let a = 2.0 * std::f64::consts::PI * i as f64 / grid_size as f64;
        rotation_score(p, &rotation2(a)).unwrap_or(0.0)
    });
    let (best_i, best) = scores
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, (i, s)| if s > acc.1 { (i, s) } else { acc });
    if best < 1e-8 {
        return Err(Error::SearchFailure(best));
    }
    let a = 2.0 * std::f64::consts::PI * best_i as f64 / grid_size as f64;
    Ok((rotation2(a), best))
}

/// Polynomial `P(x, y) = Σ λ_{αβ} x^α y^β` with `x, y ∈ ℝⁿ`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PolyJson", into = "PolyJson")]
pub struct BiPoly {
    dim: usize,
    coeffs: BTreeMap<(MultiIndex, MultiIndex), f64>,
}

impl BiPoly {
    pub fn zero(dim: usize) -> Self {
        BiPoly { dim, coeffs: BTreeMap::new() }
    }

    pub fn from_terms<I>(dim: usize, terms: I) -> Result<Self>
    where
        I: IntoIterator<Item = (Vec<u32>, Vec<u32>, f64)>,
    {
        let mut p = Self::zero(dim);
        for (a, b, c) in terms {
            if a.len() != dim || b.len() != dim {
                return invalid(format!("multi-index pair ({a:?},{b:?}) does not match dimension {dim}"));
            }
            if !c.is_finite() {
                return invalid("non-finite coefficient");
            }
            p.add_term(MultiIndex(a), MultiIndex(b), c);
        }
        Ok(p)
    }

    /// `c·x^a y^b` in one dimension.
    pub fn monomial_1d(a: u32, b: u32, c: f64) -> Self {
        let mut p = Self::zero(1);
        p.add_term(MultiIndex(vec![a]), MultiIndex(vec![b]), c);
        p
    }

    /// One-dimensional polynomial from `(a, b, c)` triples meaning `c·x^a y^b`.
    pub fn from_1d(terms: &[(u32, u32, f64)]) -> Self {
        let mut p = Self::zero(1);
        for &(a, b, c) in terms {
            p.add_term(MultiIndex(vec![a]), MultiIndex(vec![b]), c);
        }
        p
    }

    fn add_term(&mut self, a: MultiIndex, b: MultiIndex, c: f64) {
        if c == 0.0 {
            return;
        }
        let key = (a, b);
        let v = *self.coeffs.get(&key).unwrap_or(&0.0) + c;
        if v == 0.0 {
            self.coeffs.remove(&key);
        } else {
            self.coeffs.insert(key, v);
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Largest `|α| + |β|` (0 for the zero polynomial).
    pub fn degree(&self) -> u32 {
        self.coeffs.keys().map(|(a, b)| a.order() + b.order()).max().unwrap_or(0)
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn terms(&self) -> impl Iterator<Item = (&MultiIndex, &MultiIndex, f64)> {
        self.coeffs.iter().map(|((a, b), c)| (a, b, *c))
    }

    pub fn eval(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        if x.len() != self.dim || y.len() != self.dim {
            return invalid(format!(
                "points have dimensions ({}, {}) but polynomial has {}",
                x.len(),
                y.len(),
                self.dim
            ));
        }
        Ok(self.eval_unchecked(x, y))
    }

    pub(crate) fn eval_unchecked(&self, x: &[f64], y: &[f64]) -> f64 {
        self.coeffs.iter().map(|((a, b), c)| c * a.monomial(x) * b.monomial(y)).sum()
    }

    /// `Σ |λ_{αβ}|` over keys with `|α| + |β| ≥ 1`.
    pub fn coeff_norm(&self) -> f64 {
        self.coeffs
            .iter()
            .filter(|((a, b), _)| a.order() + b.order() >= 1)
            .map(|(_, c)| c.abs())
            .sum()
    }

    pub fn scale(&self, s: f64) -> BiPoly {
        let mut p = Self::zero(self.dim);
        for ((a, b), c) in &self.coeffs {
            p.add_term(a.clone(), b.clone(), c * s);
        }
        p
    }

    pub fn normalized(&self) -> Result<BiPoly> {
        let n = self.coeff_norm();
        if n == 0.0 {
            return Err(Error::Degenerate("cannot normalize a constant polynomial".into()));
        }
        Ok(self.scale(1.0 / n))
    }

    /// Drop constants, pure powers of `x` and every term of total degree one.
    pub fn strip_forbidden(&self) -> BiPoly {
        let coeffs = self
            .coeffs
            .iter()
            .filter(|((a, b), _)| !b.is_zero() && a.order() + b.order() >= 2)
            .map(|(k, v)| (k.clone(), *v))
            .collect();
        BiPoly { dim: self.dim, coeffs }
    }

    pub fn is_stripped(&self) -> bool {
        self.coeffs.keys().all(|(a, b)| !b.is_zero() && a.order() + b.order() >= 2)
    }

    /// Group by `β`: `R_β(x) = Σ_α λ_{αβ} x^α`, so that
    /// `P(x,z) − P(y,z) = Σ_β [R_β(x) − R_β(y)] z^β`.
    pub fn r_beta_decompose(&self) -> Result<BTreeMap<MultiIndex, NPoly>> {
        if self.coeffs.keys().any(|(_, b)| b.is_zero()) {
            return invalid("r_beta_decompose needs a polynomial without beta = 0 terms");
        }
        let mut out: BTreeMap<MultiIndex, NPoly> = BTreeMap::new();
        for ((a, b), c) in &self.coeffs {
            out.entry(b.clone()).or_insert_with(|| NPoly::zero(self.dim)).add_term(a.clone(), *c);
        }
        Ok(out)
    }

    /// For one-dimensional `P`, the dense coefficients in `y` of `P(x, ·)`.
    pub fn coeffs_in_y_1d(&self, x: f64) -> Vec<f64> {
        assert_eq!(self.dim, 1);
        let db = self.coeffs.keys().map(|(_, b)| b.0[0]).max().unwrap_or(0) as usize;
        let mut c = vec![0.0; db + 1];
        for ((a, b), v) in &self.coeffs {
            c[b.0[0] as usize] += v * x.powi(a.0[0] as i32);
        }
        c
    }

    /// For one-dimensional `P`, the univariate polynomial `P(·, y)`.
    pub fn restrict_y_1d(&self, y: f64) -> NPoly {
        assert_eq!(self.dim, 1);
        let mut p = NPoly::zero(1);
        for ((a, b), v) in &self.coeffs {
            p.add_term(a.clone(), v * y.powi(b.0[0] as i32));
        }
        p
    }

    /// The exponent `ε_d = 1/(2d)` attached to this polynomial's degree.
    pub fn epsilon_d(&self) -> f64 {
        epsilon_d(self.degree().max(1))
    }
}

/// `ε_d = 1/(2d)`.
pub fn epsilon_d(d: u32) -> f64 {
    1.0 / (2.0 * d as f64)
}

/// Horner evaluation of dense coefficients, lowest degree first.
#[inline]
pub fn horner(c: &[f64], t: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, &v| acc * t + v)
}

impl fmt::Display for BiPoly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.coeffs.is_empty() {
            return write!(f, "0");
        }
        let mut first = true;
        for ((a, b), c) in &self.coeffs {
            if !first {
                write!(f, " + ")?;
            }
            first = false;
            write!(f, "{c}·x^{:?}·y^{:?}", a.0, b.0)?;
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
struct TermJson {
    alpha: Vec<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    beta: Option<Vec<u32>>,
    coef: f64,
}

/// Wire format shared by both polynomial types:
/// `{"dim": n, "terms": [{"alpha": [...], "beta": [...], "coef": c}]}`.
#[derive(Serialize, Deserialize)]
struct PolyJson {
    dim: usize,
    terms: Vec<TermJson>,
}

impl TryFrom<PolyJson> for BiPoly {
    type Error = Error;
    fn try_from(j: PolyJson) -> Result<Self> {
        let terms: Vec<_> = j
            .terms
            .into_iter()
            .map(|t| {
                let beta = t.beta.unwrap_or_else(|| vec![0; j.dim]);
                (t.alpha, beta, t.coef)
            })
            .collect();
        BiPoly::from_terms(j.dim, terms)
    }
}

impl From<BiPoly> for PolyJson {
    fn from(p: BiPoly) -> Self {
        PolyJson {
            dim: p.dim,
            terms: p
                .coeffs
                .into_iter()
                .map(|((a, b), coef)| TermJson { alpha: a.0, beta: Some(b.0), coef })
                .collect(),
        }
    }
}

impl TryFrom<PolyJson> for NPoly {
    type Error = Error;
    fn try_from(j: PolyJson) -> Result<Self> {
        if j.terms.iter().any(|t| t.beta.as_ref().is_some_and(|b| b.iter().any(|&v| v != 0))) {
            return invalid("single-variable polynomial cannot carry a nonzero beta");
        }
        NPoly::from_terms(j.dim, j.terms.into_iter().map(|t| (t.alpha, t.coef)))
    }
}

impl From<NPoly> for PolyJson {
    fn from(p: NPoly) -> Self {
        PolyJson {
            dim: p.dim,
            terms: p.coeffs.into_iter().map(|(a, coef)| TermJson { alpha: a.0, beta: None, coef }).collect(),
        }
    }
}
