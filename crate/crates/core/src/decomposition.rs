//! Calderón–Zygmund decomposition with bad parts bucketed by scale, the
//! standard / non-standard split of the pieces `T_{K,s} b`, Carleson
//! packing of the non-standard buckets and their exceptional sets.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dyadic::{pow2, DyadicCube, GridMask, MaskGeometry};
use crate::error::{invalid, Error, Result};
use crate::exec;
use crate::kernel::PsiBump;
use crate::operator::{apply_t_i, Grid, GridFunction};
use crate::oscillatory::z_value;
use crate::polynomial::BiPoly;
use crate::random::finest_dyadic_level;

/// `f = γ + Σ_s b_s` along the maximal dyadic cubes with large average.
#[derive(Clone, Debug)]
pub struct CzDecomposition {
    pub grid: Grid,
    pub threshold: f64,
    /// `⟨f⟩_{I₀}`.
    pub base_average: f64,
    pub good: GridFunction<f64>,
    /// Maximal cubes, ordered by left endpoint.
    pub bad: Vec<DyadicCube>,
    /// `b_s` for `0 ≤ s ≤ s₀ − 1`; bucket 0 holds every cube of side `≤ 1`.
    pub bad_parts: BTreeMap<i32, GridFunction<f64>>,
}

/// Bucket of a bad cube of side `2^k`.
pub fn bucket(k: i32) -> i32 {
    k.max(0)
}

fn prefix(values: &[f64]) -> Vec<f64> {
    let mut p = Vec::with_capacity(values.len() + 1);
    p.push(0.0);
    let mut s = 0.0;
    for v in values {
        s += v;
        p.push(s);
    }
    p
}

/// Maximal dyadic `J ⊂ I₀` with `⟨f⟩_J ≥ A ⟨f⟩_{I₀}`, searched down to the
/// finest dyadic level made of whole cells.
pub fn cz_decompose(f: &GridFunction<f64>, a: f64) -> Result<CzDecomposition> {
    if !(a > 1.0) {
        return invalid(format!("threshold A = {a} must exceed 1"));
    }
    let grid = *f.grid();
    let f = f.on_base();
    if f.values().iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
        return invalid("f must be finite and nonnegative");
    }
    let s = prefix(f.values());
    let n = grid.n;
    let avg0 = s[n] / n as f64;
    let cut = a * avg0;
    let finest = finest_dyadic_level(&grid);
    let mut bad = Vec::new();
    if avg0 > 0.0 {
        let mut stack = DyadicCube::interval(grid.s0, 0).children();
        stack.reverse();
        while let Some(j) = stack.pop() {
            let (lo, hi) = grid.cube_cells(&j)?;
            let avg = (s[hi as usize] - s[lo as usize]) / (hi - lo) as f64;
            if avg >= cut {
                bad.push(j);
            } else if j.k > finest {
                let mut ch = j.children();
                ch.reverse();
                stack.extend(ch);
            }
        }
    }
    let mut good = f.clone();
    let mut bad_parts: BTreeMap<i32, GridFunction<f64>> =
        (0..grid.s0.max(1)).map(|b| (b, GridFunction::zeros(grid))).collect();
    for j in &bad {
        let (lo, hi) = grid.cube_cells(j)?;
        let part = bad_parts.get_mut(&bucket(j.k)).expect("bucket in range");
        for i in lo as usize..hi as usize {
            part.values_mut()[i] = f.values()[i];
            good.values_mut()[i] = 0.0;
        }
    }
    Ok(CzDecomposition { grid, threshold: a, base_average: avg0, good, bad, bad_parts })
}

/// JSON-friendly summary of a decomposition.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CzSummary {
    pub threshold: f64,
    pub base_average: f64,
    /// Bucket → `(k, m)` of each cube.
    pub cubes: BTreeMap<i32, Vec<(i32, i64)>>,
    pub good_sup: f64,
    pub good_l2: f64,
    pub bad_l1: BTreeMap<i32, f64>,
}

impl CzDecomposition {
    /// `K₀ = A ⟨f⟩_{I₀}`.
    pub fn k0(&self) -> f64 {
        self.threshold * self.base_average
    }

    /// `b_s`, or `None` when the bucket is empty by definition (`s < 0` or
    /// beyond the top scale).
    pub fn b(&self, s: i32) -> Option<&GridFunction<f64>> {
        self.bad_parts.get(&s)
    }

    /// `γ + Σ_s b_s`.
    pub fn reconstruct(&self) -> GridFunction<f64> {
        let mut out = self.good.clone();
        for b in self.bad_parts.values() {
            out.accumulate(b).expect("same grid");
        }
        out
    }

    pub fn summary(&self) -> CzSummary {
        let mut cubes: BTreeMap<i32, Vec<(i32, i64)>> = BTreeMap::new();
        for j in &self.bad {
            cubes.entry(bucket(j.k)).or_default().push((j.k, j.m[0]));
        }
        CzSummary {
            threshold: self.threshold,
            base_average: self.base_average,
            cubes,
            good_sup: self.good.sup_norm(),
            good_l2: self.good.l2_norm(),
            bad_l1: self.bad_parts.iter().map(|(s, b)| (*s, b.l1_norm())).collect(),
        }
    }

    /// Standard dyadic `K ⊂ I₀` with side at least `2^{min_k}` that are not
    /// bad and contain every bad cube they meet.
    pub fn admissible_cubes(&self, min_k: i32) -> Vec<DyadicCube> {
        let mut out = Vec::new();
        for k in (min_k..=self.grid.s0).rev() {
            for m in 0..1i64 << (self.grid.s0 - k) {
                let c = DyadicCube::interval(k, m);
                if self.bad.iter().all(|j| disjoint(j, &c) || (j.k < c.k && j.is_subcube_of(&c))) {
                    out.push(c);
                }
            }
        }
        out
    }
}

fn disjoint(a: &DyadicCube, b: &DyadicCube) -> bool {
    let (ca, cb) = (a.corner()[0], b.corner()[0]);
    ca + a.side() <= cb || cb + b.side() <= ca
}

/// `T_{K,s} b = T_K b_{k−s}` for `ℓ(K) = 2^k` and `1 ≤ s ≤ k`; `s = k`
/// reaches bucket 0.
pub fn apply_t_ks(d: &CzDecomposition, cube: &DyadicCube, s: i32, p: &BiPoly) -> Result<GridFunction<Complex64>> {
    if cube.dim() != 1 || cube.grid.thirds()[0] != 0 {
        return invalid("K must be a standard one-dimensional dyadic interval");
    }
    let k = cube.k;
    if s < 1 || s > k {
        return invalid(format!("need 1 <= s <= k, got s = {s}, k = {k}"));
    }
    if let Some(j) = d.bad.iter().find(|j| !disjoint(j, cube) && !(j.k < k && j.is_subcube_of(cube))) {
        return invalid(format!("bad cube (k = {}, m = {}) meets K without lying strictly inside", j.k, j.m[0]));
    }
    let (lo, hi) = d.grid.cube_cells(cube)?;
    let src = match d.b(k - s) {
        Some(b) => b.restrict(lo, hi),
        None => GridFunction::window(d.grid, lo, (hi - lo) as usize),
    };
    apply_t_i(&src, cube, p, PsiBump { j: k - crate::T_N })
}

/// One `(K, s)` pair of a [`ScaleSplit`].
#[derive(Clone, Debug)]
pub struct ScaleEntry {
    pub cube: DyadicCube,
    pub s: i32,
    /// `‖T_{K,s} b‖₂²`.
    pub lhs: f64,
    /// `‖b_{k−s} 1_K‖₁`.
    pub mass: f64,
    /// `100 C₀ |K|^{−(1+ε_d)} ‖b_{k−s} 1_K‖₁²`.
    pub rhs: f64,
    pub standard: bool,
    /// Secondary index: `K₀ 2^{−t} ≤ ⟨b_{k−s}⟩_K < K₀ 2^{−t+1}`.
    pub t: Option<i32>,
    /// `(2C₀/|K|) ∫∫_{Z_K} b_{k−s} ⊗ b_{k−s}` for non-standard pairs.
    pub z_rhs: Option<f64>,
    pub piece: GridFunction<Complex64>,
}

impl ScaleEntry {
    /// Does the `Z_K` bound hold (vacuous for standard pairs)?
    pub fn z_bound_holds(&self) -> bool {
        match self.z_rhs {
            Some(r) => self.lhs < r,
            None => true,
        }
    }
}

/// Labels of every `(K, s)` pair.
#[derive(Clone, Debug)]
pub struct ScaleSplit {
    pub c0: f64,
    pub eps_d: f64,
    pub k0: f64,
    pub entries: Vec<ScaleEntry>,
}

fn z_integral(p: &BiPoly, d: &CzDecomposition, cube: &DyadicCube, b: &GridFunction<f64>) -> Result<f64> {
    let rbeta = p.r_beta_decompose()?;
    let (lo, hi) = d.grid.cube_cells(cube)?;
    let ell = cube.side();
    let thr = ell.sqrt();
    let h = d.grid.h();
    let pts: Vec<(f64, f64)> = (lo..hi).filter(|&i| b.get(i) != 0.0).map(|i| (d.grid.center(i), b.get(i))).collect();
    let rows = exec::map_slice(&pts, |&(x, bx)| {
        pts.iter().filter(|&&(y, _)| z_value(&rbeta, ell, x, y) < thr).map(|&(_, by)| bx * by).sum::<f64>()
    });
    Ok(rows.iter().sum::<f64>() * h * h)
}

/// Classify every `(K, s)`, `K ∈ cubes`, `1 ≤ s ≤ k`. Ties go to the
/// standard side. Non-standard pairs of a stripped phase with `‖P‖ = 1`
/// also get the `Z_K` bound evaluated.
pub fn classify_scales(d: &CzDecomposition, cubes: &[DyadicCube], c0: f64, p: &BiPoly) -> Result<ScaleSplit> {
    classify_scales_with(d, cubes, c0, p, true)
}

/// [`classify_scales`] with the `Z_K` integral optional; it is the costly
/// part and packing statistics do not need it.
pub fn classify_scales_with(d: &CzDecomposition, cubes: &[DyadicCube], c0: f64, p: &BiPoly, z_bound: bool) -> Result<ScaleSplit> {
    if !(c0 > 0.0) {
        return invalid("C0 must be positive");
    }
    let eps = p.epsilon_d();
    let z_ok = z_bound && p.is_stripped() && !p.is_zero() && (p.coeff_norm() - 1.0).abs() < 1e-12;
    let k0 = d.k0();
    let mut entries = Vec::new();
    for cube in cubes {
        let k = cube.k;
        let vol = cube.side();
        let (lo, hi) = d.grid.cube_cells(cube)?;
        for s in 1..=k {
            let piece = apply_t_ks(d, cube, s, p)?;
            let lhs = piece.l2_norm().powi(2);
            let b = d.b(k - s).map(|b| b.restrict(lo, hi));
            let mass = b.as_ref().map_or(0.0, GridFunction::l1_norm);
            let rhs = 100.0 * c0 * vol.powf(-(1.0 + eps)) * mass * mass;
            let standard = lhs <= rhs;
            let avg = mass / vol;
            let t = (avg > 0.0).then(|| ((k0 / avg).log2().ceil() as i32).max(0));
            let z_rhs = match (&b, standard, z_ok) {
                (Some(b), false, true) => Some(2.0 * c0 / vol * z_integral(p, d, cube, b)?),
                _ => None,
            };
            entries.push(ScaleEntry { cube: cube.clone(), s, lhs, mass, rhs, standard, t, z_rhs, piece });
        }
    }
    Ok(ScaleSplit { c0, eps_d: eps, k0, entries })
}

impl ScaleSplit {
    /// Number of standard pairs when `C₀` is multiplied by `factor`.
    pub fn standard_count(&self, factor: f64) -> usize {
        self.entries.iter().filter(|e| e.lhs <= e.rhs * factor).count()
    }

    /// Realized `(s, t)` among non-standard pairs.
    pub fn nonstandard_buckets(&self) -> BTreeSet<(i32, i32)> {
        self.entries.iter().filter(|e| !e.standard).filter_map(|e| e.t.map(|t| (e.s, t))).collect()
    }

    /// `𝓝_{s,t}` as a list of cubes.
    pub fn nonstandard(&self, s: i32, t: i32) -> Vec<DyadicCube> {
        self.entries.iter().filter(|e| !e.standard && e.s == s && e.t == Some(t)).map(|e| e.cube.clone()).collect()
    }

    /// Realized `(s, t)` over every pair, standard or not.
    pub fn graded_buckets(&self) -> BTreeSet<(i32, i32)> {
        self.entries.iter().filter_map(|e| e.t.map(|t| (e.s, t))).collect()
    }

    /// Every `K` with index `(s, t)`; the packing argument only uses the
    /// average condition, so it applies to this superset of `𝓝_{s,t}`.
    pub fn graded(&self, s: i32, t: i32) -> Vec<DyadicCube> {
        self.entries.iter().filter(|e| e.s == s && e.t == Some(t)).map(|e| e.cube.clone()).collect()
    }

    /// `Σ_{s} Σ_{K ∈ 𝓢_s, ℓ(K) = 2^j} T_{K,s} b`.
    pub fn standard_part(&self, grid: Grid, j: i32) -> GridFunction<Complex64> {
        let mut acc = GridFunction::zeros(grid);
        for e in self.entries.iter().filter(|e| e.standard && e.cube.k == j) {
            acc.accumulate(&e.piece).expect("same grid");
        }
        acc
    }

    /// `sup_ε |Σ_{K ∈ 𝓝_s, ℓ(K) ≥ ε} T_{K,s} b|`.
    pub fn nonstandard_maximal(&self, grid: Grid, s: i32) -> GridFunction<f64> {
        let mut sel: Vec<&ScaleEntry> = self.entries.iter().filter(|e| !e.standard && e.s == s).collect();
        sel.sort_by_key(|c| std::cmp::Reverse(c.cube.k));
        let (mut lo, mut hi) = (0i64, grid.n as i64);
        for e in &sel {
            let (a, b) = e.piece.range();
            lo = lo.min(a);
            hi = hi.max(b);
        }
        let mut sum = GridFunction::<Complex64>::window(grid, lo, (hi - lo) as usize);
        let mut best = vec![0.0f64; (hi - lo) as usize];
        let mut i = 0;
        while i < sel.len() {
            let k = sel[i].cube.k;
            while i < sel.len() && sel[i].cube.k == k {
                sum.accumulate(&sel[i].piece).expect("same grid");
                i += 1;
            }
            for (b, v) in best.iter_mut().zip(sum.values()) {
                *b = b.max(v.norm());
            }
        }
        let mut out = GridFunction::window(grid, lo, best.len());
        out.values_mut().copy_from_slice(&best);
        out
    }
}

/// `Σ_{K ∈ 𝓝, K ⊂ J} |K| / (2^t |J|)`.
pub fn carleson_packing(coll: &[DyadicCube], t: i32, j: &DyadicCube) -> f64 {
    let s: f64 = coll.iter().filter(|k| k.is_subcube_of(j)).map(DyadicCube::side).sum();
    s / (pow2(t) * j.side())
}

/// Maximum of [`carleson_packing`] over every standard dyadic `J` with
/// side at most `2^{top_k}`; only ancestors of collection members can
/// contribute, so those are the only ones visited.
pub fn max_carleson_packing(coll: &[DyadicCube], t: i32, top_k: i32) -> (f64, Option<DyadicCube>) {
    let mut mass: HashMap<(i32, i64), f64> = HashMap::new();
    for c in coll {
        let mut j = c.clone();
        loop {
            *mass.entry((j.k, j.m[0])).or_insert(0.0) += c.side();
            if j.k >= top_k {
                break;
            }
            j = j.parent();
        }
    }
    let mut keys: Vec<_> = mass.keys().copied().collect();
    keys.sort_unstable();
    let mut best = (0.0, None);
    for (k, m) in keys {
        let r = mass[&(k, m)] / (pow2(t) * pow2(k));
        if r > best.0 {
            best = (r, Some(DyadicCube::interval(k, m)));
        }
    }
    best
}

/// `E = {Σ_{I ∈ 𝓝} 1_I > C 2^t}` as a mask on `I₀`, with its measure.
pub fn exceptional_set(coll: &[DyadicCube], t: i32, grid: &Grid, c: f64) -> Result<(GridMask, f64)> {
    if !(c > 0.0) {
        return invalid("C must be positive");
    }
    let n = grid.n;
    let mut diff = vec![0i64; n + 1];
    for cube in coll {
        let (a, b) = grid.cube_cells(cube)?;
        let (a, b) = (a.clamp(0, n as i64) as usize, b.clamp(0, n as i64) as usize);
        diff[a] += 1;
        diff[b] -= 1;
    }
    let level = c * pow2(t);
    let geom = MaskGeometry::new(vec![0.0], grid.side(), n)?;
    let mut mask = GridMask::empty(geom);
    let mut run = 0i64;
    for (i, d) in diff.iter().take(n).enumerate() {
        run += d;
        if run as f64 > level {
            mask.set(i, true);
        }
    }
    let m = mask.measure();
    Ok((mask, m))
}

/// Smallest `C = 2^i ≤ cap`, `i ≥ −4`, with `|E| ≤ ¼|I₀|`.
pub fn exceptional_constant(coll: &[DyadicCube], t: i32, grid: &Grid, cap: f64) -> Result<(f64, GridMask, f64)> {
    let mut c = 1.0 / 16.0;
    while c <= cap {
        let (mask, m) = exceptional_set(coll, t, grid, c)?;
        if m <= 0.25 * grid.side() {
            return Ok((c, mask, m));
        }
        c *= 2.0;
    }
    Err(Error::Assertion(format!("no C <= {cap} keeps the exceptional set below a quarter of I0")))
}

/// Layers of minimal elements under strict inclusion of cubes: generation
/// `u` is the set of minimal pairs left after removing generations
/// `1, …, u−1`. Returns indices into `pairs`.
pub fn generations(pairs: &[(DyadicCube, i32)]) -> Vec<Vec<usize>> {
    let mut left: Vec<usize> = (0..pairs.len()).collect();
    let mut out = Vec::new();
    while !left.is_empty() {
        let (minimal, rest): (Vec<usize>, Vec<usize>) = left.iter().partition(|&&i| {
            !left.iter().any(|&j| pairs[j].0.k < pairs[i].0.k && pairs[j].0.is_subcube_of(&pairs[i].0))
        });
        out.push(minimal);
        left = rest;
    }
    out
}
