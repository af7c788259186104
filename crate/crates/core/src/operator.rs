//! Discretized one-dimensional oscillatory singular integrals on the grid
//! of a reference interval `I₀ = [0, 2^{s₀})`.

use std::fmt::Debug;
use std::io::Write;
use std::ops::{Add, AddAssign, Mul, Sub};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dyadic::{pow2, DyadicCube, ShiftedGrid};
use crate::error::{invalid, Error, Result};
use crate::exec;
use crate::kernel::{e, psi, CzKernel, PsiBump};
use crate::polynomial::{horner, BiPoly};

/// Scalars a grid function may hold.
pub trait Value:
    Copy + Send + Sync + Default + Debug + PartialEq + Add<Output = Self> + Sub<Output = Self> + AddAssign + Mul<f64, Output = Self>
{
    fn modulus(self) -> f64;
    fn to_complex(self) -> Complex64;
}

impl Value for f64 {
    fn modulus(self) -> f64 {
        self.abs()
    }
    fn to_complex(self) -> Complex64 {
        Complex64::new(self, 0.0)
    }
}

impl Value for Complex64 {
    fn modulus(self) -> f64 {
        self.norm()
    }
    fn to_complex(self) -> Complex64 {
        self
    }
}

/// Uniform grid on `I₀ = [0, 2^{s₀})` with `n` cells. `n` is a multiple of
/// `3·2^{s₀}`, so the cells align with every dyadic interval of side `≥ 1`
/// in all three shifted grids, and with their middle thirds.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Grid {
    pub s0: i32,
    pub n: usize,
}

impl Grid {
    pub fn new(s0: i32, n: usize) -> Result<Self> {
        if !(0..=30).contains(&s0) {
            return invalid(format!("s0 = {s0} out of range"));
        }
        let q = 3usize << s0;
        if n == 0 || !n.is_multiple_of(q) {
            return invalid(format!("cell count {n} is not a positive multiple of 3·2^{s0} = {q}"));
        }
        Ok(Grid { s0, n })
    }

    pub fn side(&self) -> f64 {
        pow2(self.s0)
    }

    pub fn h(&self) -> f64 {
        self.side() / self.n as f64
    }

    /// Center of cell `i`; `i` may lie outside `[0, n)`.
    #[inline]
    pub fn center(&self, i: i64) -> f64 {
        (i as f64 + 0.5) * self.h()
    }

    /// Cell range `[a, b)` covering `[x, x + len)`; errors unless both ends
    /// fall on cell boundaries.
    pub fn cells(&self, x: f64, len: f64) -> Result<(i64, i64)> {
        let h = self.h();
        let a = x / h;
        let b = (x + len) / h;
        let (ar, br) = (a.round(), b.round());
        if (a - ar).abs() > 1e-7 * a.abs().max(1.0) || (b - br).abs() > 1e-7 * b.abs().max(1.0) {
            return Err(Error::Alignment(format!("[{x}, {}) does not fall on cell boundaries (h = {h})", x + len)));
        }
        Ok((ar as i64, br as i64))
    }

    pub fn cube_cells(&self, cube: &DyadicCube) -> Result<(i64, i64)> {
        if cube.dim() != 1 {
            return Err(Error::UnsupportedDimension(cube.dim()));
        }
        self.cells(cube.corner()[0], cube.side())
    }

    pub fn third_cells(&self, cube: &DyadicCube) -> Result<(i64, i64)> {
        if cube.dim() != 1 {
            return Err(Error::UnsupportedDimension(cube.dim()));
        }
        let (c, l) = cube.third();
        self.cells(c[0], l)
    }

    /// Length `d` in whole cells; errors unless `d` is a multiple of `h`.
    pub fn length_cells(&self, d: f64) -> Result<i64> {
        let (_, b) = self.cells(0.0, d)?;
        Ok(b)
    }

    /// Dyadic truncation ladder `h·2^i < 2^{s₀}`.
    pub fn truncation_ladder(&self) -> Vec<f64> {
        let h = self.h();
        (0..).map(|i| h * pow2(i)).take_while(|&x| x < self.side()).collect()
    }
}

/// Values on a window of cells `[offset, offset + len)` of a grid; zero
/// elsewhere.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridFunction<T> {
    grid: Grid,
    offset: i64,
    values: Vec<T>,
}

impl<T: Value> GridFunction<T> {
    /// Zero function on `I₀`.
    pub fn zeros(grid: Grid) -> Self {
        Self::window(grid, 0, grid.n)
    }

    /// Zero function on an arbitrary window.
    pub fn window(grid: Grid, offset: i64, len: usize) -> Self {
        GridFunction { grid, offset, values: vec![T::default(); len] }
    }

    /// Values on `I₀`, one per cell.
    pub fn from_values(grid: Grid, values: Vec<T>) -> Result<Self> {
        if values.len() != grid.n {
            return invalid(format!("expected {} values, got {}", grid.n, values.len()));
        }
        Ok(GridFunction { grid, offset: 0, values })
    }

    /// Sample `f` at the cell centers of `I₀`.
    pub fn from_fn(grid: Grid, f: impl Fn(f64) -> T + Sync) -> Self {
        let values = exec::map_range(grid.n, |i| f(grid.center(i as i64)));
        GridFunction { grid, offset: 0, values }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn offset(&self) -> i64 {
        self.offset
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [T] {
        &mut self.values
    }

    /// Cell range `[start, end)` of the stored window.
    pub fn range(&self) -> (i64, i64) {
        (self.offset, self.offset + self.values.len() as i64)
    }

    #[inline]
    pub fn get(&self, i: i64) -> T {
        let j = i - self.offset;
        if j < 0 || j >= self.values.len() as i64 {
            T::default()
        } else {
            self.values[j as usize]
        }
    }

    /// The restriction to the window `[a, b)`.
    pub fn restrict(&self, a: i64, b: i64) -> Self {
        let values = (a..b).map(|i| self.get(i)).collect();
        GridFunction { grid: self.grid, offset: a, values }
    }

    /// The restriction to `I₀`.
    pub fn on_base(&self) -> Self {
        self.restrict(0, self.grid.n as i64)
    }

    /// `self += other`, growing the window as needed.
    pub fn accumulate(&mut self, other: &GridFunction<T>) -> Result<()> {
        if self.grid != other.grid {
            return invalid("grid functions live on different grids");
        }
        let (a0, b0) = self.range();
        let (a1, b1) = other.range();
        if a1 < a0 || b1 > b0 {
            let (a, b) = (a0.min(a1), b0.max(b1));
            *self = self.restrict(a, b);
        }
        let off = (a1 - self.offset) as usize;
        for (k, v) in other.values.iter().enumerate() {
            self.values[off + k] += *v;
        }
        Ok(())
    }

    pub fn map<U: Value>(&self, f: impl Fn(T) -> U) -> GridFunction<U> {
        GridFunction { grid: self.grid, offset: self.offset, values: self.values.iter().map(|&v| f(v)).collect() }
    }

    pub fn abs(&self) -> GridFunction<f64> {
        self.map(Value::modulus)
    }

    pub fn to_complex(&self) -> GridFunction<Complex64> {
        self.map(Value::to_complex)
    }

    /// `(Σ |f|^p h)^{1/p}`.
    pub fn lp_norm(&self, p: f64) -> f64 {
        let h = self.grid.h();
        (self.values.iter().map(|v| v.modulus().powf(p)).sum::<f64>() * h).powf(1.0 / p)
    }

    pub fn l1_norm(&self) -> f64 {
        self.values.iter().map(|v| v.modulus()).sum::<f64>() * self.grid.h()
    }

    pub fn l2_norm(&self) -> f64 {
        (self.values.iter().map(|v| v.modulus().powi(2)).sum::<f64>() * self.grid.h()).sqrt()
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().map(|v| v.modulus()).fold(0.0, f64::max)
    }

    /// Pairing `Σ f g h` with a real function.
    pub fn pair(&self, g: &GridFunction<f64>) -> Complex64 {
        let (a, b) = self.range();
        (a..b).map(|i| self.get(i).to_complex() * g.get(i)).sum::<Complex64>() * self.grid.h()
    }

    /// `⟨f⟩_{I,r} = (|I|^{−1} ∫_I |f|^r)^{1/r}`.
    pub fn average(&self, cube: &DyadicCube, r: f64) -> Result<f64> {
        if !(r >= 1.0) {
            return invalid(format!("exponent r = {r} must be at least 1"));
        }
        let (a, b) = self.grid.cube_cells(cube)?;
        let s: f64 = (a..b).map(|i| self.get(i).modulus().powf(r)).sum();
        Ok((s / (b - a) as f64).powf(1.0 / r))
    }

    /// Cellwise `|self| ≤ |other| + tol`.
    pub fn dominated_by(&self, other: &GridFunction<f64>, tol: f64) -> bool {
        let (a, b) = self.range();
        (a..b).all(|i| self.get(i).modulus() <= other.get(i) + tol)
    }
}

impl GridFunction<Complex64> {
    /// CSV rows `cell,re,im` with a header line.
    pub fn write_csv(&self, w: &mut impl Write) -> Result<()> {
        writeln!(w, "cell,re,im")?;
        for (k, v) in self.values.iter().enumerate() {
            writeln!(w, "{},{:e},{:e}", self.offset + k as i64, v.re, v.im)?;
        }
        Ok(())
    }

    /// Little-endian binary: `n`, `dim = 1`, `s₀`, offset, length, then
    /// `(re, im)` pairs.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(40 + 16 * self.values.len());
        out.extend((self.grid.n as u64).to_le_bytes());
        out.extend(1u64.to_le_bytes());
        out.extend((self.grid.s0 as i64).to_le_bytes());
        out.extend(self.offset.to_le_bytes());
        out.extend((self.values.len() as u64).to_le_bytes());
        for v in &self.values {
            out.extend(v.re.to_le_bytes());
            out.extend(v.im.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let word = |i: usize| -> Result<[u8; 8]> {
            bytes.get(8 * i..8 * i + 8).map(|s| s.try_into().expect("8 bytes")).ok_or_else(|| Error::Io("truncated grid function".into()))
        };
        let n = u64::from_le_bytes(word(0)?) as usize;
        if u64::from_le_bytes(word(1)?) != 1 {
            return invalid("only one-dimensional grid functions are stored");
        }
        let s0 = i64::from_le_bytes(word(2)?) as i32;
        let offset = i64::from_le_bytes(word(3)?);
        let len = u64::from_le_bytes(word(4)?) as usize;
        if bytes.len() != 40 + 16 * len {
            return Err(Error::Io("grid function payload has the wrong length".into()));
        }
        let grid = Grid::new(s0, n)?;
        let values = (0..len)
            .map(|k| Ok(Complex64::new(f64::from_le_bytes(word(5 + 2 * k)?), f64::from_le_bytes(word(6 + 2 * k)?))))
            .collect::<Result<Vec<_>>>()?;
        Ok(GridFunction { grid, offset, values })
    }
}

fn check_phase_1d(p: &BiPoly) -> Result<()> {
    if p.dim() != 1 {
        return Err(Error::UnsupportedDimension(p.dim()));
    }
    Ok(())
}

/// Whole cells per bump of scale `2^j`; at least 8 are required.
fn bump_cells(grid: &Grid, j: i32) -> Result<i64> {
    let w = pow2(j) / grid.h();
    if w < 8.0 {
        return Err(Error::Resolution(format!("bump of side 2^{j} spans {w} cells, need at least 8")));
    }
    Ok(w.ceil() as i64)
}

/// `T_I g(x) = ∫ e(P(x,y)) 2^{−j} ψ(2^{−j}(x−y)) (g 1_{(1/3)I})(y) dy` with
/// `ℓ(I) = 2^{j + t_n}`, by cell sums. The output window is the third of
/// `I` widened by the bump radius.
pub fn apply_t_i<T: Value>(f: &GridFunction<T>, cube: &DyadicCube, p: &BiPoly, bump: PsiBump) -> Result<GridFunction<Complex64>> {
    check_phase_1d(p)?;
    let grid = *f.grid();
    if cube.k != bump.j + crate::T_N {
        return Err(Error::Scale(format!("cube of side 2^{} does not match bump 2^{}", cube.k, bump.j)));
    }
    let w = bump_cells(&grid, bump.j)?;
    let (ta, tb) = grid.third_cells(cube)?;
    let (fa, fb) = f.range();
    let (sa, sb) = (ta.max(fa), tb.min(fb));
    let (oa, ob) = (ta - w, tb + w);
    if sa >= sb {
        return Ok(GridFunction::window(grid, oa, (ob - oa) as usize));
    }
    let h = grid.h();
    let scale = pow2(-bump.j);
    let tab: Vec<f64> = (-w..=w).map(|d| scale * psi(scale * d as f64 * h)).collect();
    let src: Vec<(i64, Complex64, f64)> = (sa..sb)
        .filter_map(|j| {
            let v = f.get(j);
            (v != T::default()).then(|| (j, v.to_complex(), grid.center(j)))
        })
        .collect();
    let oscillating = !p.is_zero();
    let values = exec::map_range((ob - oa) as usize, |k| {
        let i = oa + k as i64;
        let x = grid.center(i);
        let c = if oscillating { p.coeffs_in_y_1d(x) } else { Vec::new() };
        let mut acc = Complex64::new(0.0, 0.0);
        for &(j, v, y) in &src {
            let d = i - j;
            if d.abs() >= w {
                continue;
            }
            let amp = tab[(d + w) as usize];
            if amp == 0.0 {
                continue;
            }
            let ph = if oscillating { e(horner(&c, y)) } else { Complex64::new(1.0, 0.0) };
            acc += ph * v * amp;
        }
        acc * h
    });
    Ok(GridFunction { grid, offset: oa, values })
}

/// Cubes of side `2^k` from all three shifted grids whose middle third
/// meets `I₀`. The thirds tile the line, so summing `T_I` over them gives
/// the full single-scale operator.
pub fn scale_cubes(grid: &Grid, k: i32) -> Vec<DyadicCube> {
    let l = pow2(k);
    let mut out = Vec::new();
    for g in ShiftedGrid::all(1) {
        let m_lo = (-l / l).floor() as i64 - 2;
        let m_hi = (grid.side() / l).ceil() as i64 + 2;
        for m in m_lo..=m_hi {
            let c = DyadicCube::new(g.clone(), k, vec![m]).expect("one-dimensional");
            let (tc, tl) = c.third();
            if tc[0] < grid.side() && tc[0] + tl > 0.0 {
                out.push(c);
            }
        }
    }
    out
}

/// `Σ_I T_I f` over a collection; the output window is the union of the
/// individual windows.
pub fn apply_collection_sum<T: Value>(f: &GridFunction<T>, cubes: &[DyadicCube], p: &BiPoly) -> Result<GridFunction<Complex64>> {
    let mut acc = GridFunction::window(*f.grid(), 0, 0);
    for c in cubes {
        let t = apply_t_i(f, c, p, PsiBump { j: c.k - crate::T_N })?;
        if acc.values().is_empty() {
            acc = t;
        } else {
            acc.accumulate(&t)?;
        }
    }
    if acc.values().is_empty() {
        acc = GridFunction::zeros(*f.grid());
    }
    Ok(acc)
}

/// `Σ_{ℓ(I) = 2^k} T_I f` over all three shifted grids.
pub fn apply_fixed_scale<T: Value>(f: &GridFunction<T>, k: i32, p: &BiPoly) -> Result<GridFunction<Complex64>> {
    apply_collection_sum(f, &scale_cubes(f.grid(), k), p)
}

/// Per-cell inputs shared by the truncated and maximal operators.
struct Offsets {
    /// `K(m h)` for `m ∈ [−M, M]`.
    kern: Vec<f64>,
    m_max: i64,
}

impl Offsets {
    fn new(grid: &Grid, k: &dyn CzKernel, m_max: i64) -> Self {
        let h = grid.h();
        Offsets { kern: (-m_max..=m_max).map(|m| k.eval(m as f64 * h)).collect(), m_max }
    }

    #[inline]
    fn k(&self, m: i64) -> f64 {
        self.kern[(m + self.m_max) as usize]
    }
}

/// Contribution `f(x − y) e(P(x,y)) K(y) h` at offset `y = m h`, for a
/// pair `±m`.
#[inline]
fn pair_terms<T: Value>(f: &GridFunction<T>, i: i64, m: i64, c: &[f64], off: &Offsets, h: f64) -> Complex64 {
    let mut acc = Complex64::new(0.0, 0.0);
    for mm in [m, -m] {
        let v = f.get(i - mm);
        if v == T::default() {
            continue;
        }
        let y = mm as f64 * h;
        let ph = if c.is_empty() { Complex64::new(1.0, 0.0) } else { e(horner(c, y)) };
        acc += ph * v.to_complex() * off.k(mm);
    }
    acc * h
}

fn offsets_reach<T: Value>(f: &GridFunction<T>) -> i64 {
    let (a, b) = f.range();
    (b - a).max(f.grid().n as i64) + a.abs().max((b - f.grid().n as i64).abs())
}

/// `∫_{ε<|y|≤R} f(x−y) e(P(x,y)) K(y) dy` for `x ∈ I₀`, by cell sums with
/// `f` extended by zero.
pub fn apply_truncated<T: Value>(f: &GridFunction<T>, p: &BiPoly, k: &dyn CzKernel, eps: f64, r: f64) -> Result<GridFunction<Complex64>> {
    check_phase_1d(p)?;
    let grid = *f.grid();
    let h = grid.h();
    if eps < h * (1.0 - 1e-9) {
        return Err(Error::Truncation(format!("epsilon {eps} is below one cell ({h})")));
    }
    if eps > r {
        return invalid(format!("need epsilon <= R, got {eps} > {r}"));
    }
    let e_cells = grid.length_cells(eps)?;
    let r_cells = grid.length_cells(r)?.min(offsets_reach(f));
    let off = Offsets::new(&grid, k, r_cells.max(1));
    let oscillating = !p.is_zero();
    let values = exec::map_range(grid.n, |i| {
        let i = i as i64;
        let c = if oscillating { p.coeffs_in_y_1d(grid.center(i)) } else { Vec::new() };
        (e_cells + 1..=r_cells).map(|m| pair_terms(f, i, m, &c, &off, h)).sum()
    });
    Ok(GridFunction { grid, offset: 0, values })
}

/// `max_ε |∫_{|y|>ε} f(x−y) e(P(x,y)) K(y) dy|` over `ε_list`, for
/// `x ∈ I₀`. All truncations share one pass over offsets.
pub fn apply_maximal<T: Value>(f: &GridFunction<T>, p: &BiPoly, k: &dyn CzKernel, eps_list: &[f64]) -> Result<GridFunction<f64>> {
    check_phase_1d(p)?;
    if eps_list.is_empty() {
        return invalid("empty truncation list");
    }
    let grid = *f.grid();
    let h = grid.h();
    let mut cuts = Vec::with_capacity(eps_list.len());
    for &eps in eps_list {
        if eps < h * (1.0 - 1e-9) {
            return Err(Error::Truncation(format!("epsilon {eps} is below one cell ({h})")));
        }
        cuts.push(grid.length_cells(eps)?);
    }
    cuts.sort_unstable_by(|a, b| b.cmp(a));
    cuts.dedup();
    let reach = offsets_reach(f);
    let off = Offsets::new(&grid, k, reach.max(1));
    let oscillating = !p.is_zero();
    let values = exec::map_range(grid.n, |i| {
        let i = i as i64;
        let c = if oscillating { p.coeffs_in_y_1d(grid.center(i)) } else { Vec::new() };
        let mut acc = Complex64::new(0.0, 0.0);
        let mut best = 0.0f64;
        let mut m = reach;
        for &cut in &cuts {
            while m > cut {
                acc += pair_terms(f, i, m, &c, &off, h);
                m -= 1;
            }
            best = best.max(acc.norm());
        }
        best
    });
    Ok(GridFunction { grid, offset: 0, values })
}

/// `sup_ε |Σ_{I ∈ 𝓘, ℓ(I) ≥ ε} T_I f|`: partial sums in order of decreasing
/// side, with the maximum taken after each completed side length.
pub fn apply_collection_maximal<T: Value>(f: &GridFunction<T>, cubes: &[DyadicCube], p: &BiPoly) -> Result<GridFunction<f64>> {
    let mut sorted: Vec<&DyadicCube> = cubes.iter().collect();
    sorted.sort_by_key(|c| std::cmp::Reverse(c.k));
    let mut pieces = Vec::with_capacity(sorted.len());
    for c in &sorted {
        pieces.push((c.k, apply_t_i(f, c, p, PsiBump { j: c.k - crate::T_N })?));
    }
    let grid = *f.grid();
    let (mut a, mut b) = (0i64, grid.n as i64);
    for (_, t) in &pieces {
        let (ta, tb) = t.range();
        a = a.min(ta);
        b = b.max(tb);
    }
    let mut sum = GridFunction::<Complex64>::window(grid, a, (b - a) as usize);
    let mut best = GridFunction::<f64>::window(grid, a, (b - a) as usize);
    let mut idx = 0;
    while idx < pieces.len() {
        let k = pieces[idx].0;
        while idx < pieces.len() && pieces[idx].0 == k {
            sum.accumulate(&pieces[idx].1)?;
            idx += 1;
        }
        for (bv, sv) in best.values.iter_mut().zip(&sum.values) {
            *bv = bv.max(sv.norm());
        }
    }
    Ok(best)
}

/// Centered maximal function at the point `x`: the largest average of `|f|`
/// over `[x − r, x + r]`, `r ∈ {h/2} ∪ {2^j ≥ h}`, with exact partial-cell
/// integrals of the step function.
pub fn hl_maximal_at<T: Value>(f: &GridFunction<T>, prefix: &[f64], x: f64) -> f64 {
    let grid = f.grid();
    let h = grid.h();
    let (a, b) = f.range();
    let len = (b - a) as usize;
    let cum = |t: f64| -> f64 {
        let u = t / h - a as f64;
        if u <= 0.0 {
            0.0
        } else if u >= len as f64 {
            prefix[len] * h
        } else {
            let c = u.floor() as usize;
            (prefix[c] + (u - c as f64) * f.values[c].modulus()) * h
        }
    };
    let span = (b - a) as f64 * h + (x - grid.center(a)).abs();
    let mut radii = vec![0.5 * h];
    let mut r = pow2(h.log2().ceil() as i32);
    while r <= 2.0 * span {
        radii.push(r);
        r *= 2.0;
    }
    radii.into_iter().map(|r| (cum(x + r) - cum(x - r)) / (2.0 * r)).fold(0.0, f64::max)
}

fn abs_prefix<T: Value>(f: &GridFunction<T>) -> Vec<f64> {
    let mut p = Vec::with_capacity(f.values.len() + 1);
    p.push(0.0);
    let mut s = 0.0;
    for v in &f.values {
        s += v.modulus();
        p.push(s);
    }
    p
}

/// Centered maximal function at every cell center of `f`'s window.
pub fn hl_maximal<T: Value>(f: &GridFunction<T>) -> GridFunction<f64> {
    let prefix = abs_prefix(f);
    let (a, b) = f.range();
    let values = exec::map_range((b - a) as usize, |k| hl_maximal_at(f, &prefix, f.grid().center(a + k as i64)));
    GridFunction { grid: *f.grid(), offset: a, values }
}

/// Maximal function at an arbitrary point.
pub fn hl_maximal_point<T: Value>(f: &GridFunction<T>, x: f64) -> f64 {
    hl_maximal_at(f, &abs_prefix(f), x)
}

/// `max |e(P(m+x,y)) − e(R_m(x,y))| / |y|` over a `samples × samples` grid
/// of `|x|, |y| ≤ 2^{t_n}`, where `R_m(x,y) = P(m+x,y) − P(x,y)`.
pub fn modulation_reduction_ratio(p: &BiPoly, m: f64, samples: usize) -> Result<f64> {
    check_phase_1d(p)?;
    let r = pow2(crate::T_N);
    let pt = |i: usize| -r + 2.0 * r * (i as f64 + 0.5) / samples as f64;
    let rows = exec::map_range(samples, |a| {
        let x = pt(a);
        (0..samples)
            .map(|b| {
                let y = pt(b);
                let full = p.eval_unchecked(&[m + x], &[y]);
                let rm = full - p.eval_unchecked(&[x], &[y]);
                (e(full) - e(rm)).norm() / y.abs()
            })
            .fold(0.0, f64::max)
    });
    Ok(rows.into_iter().fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::Hilbert;
    use crate::random::{rng, step_function};
    use proptest::prelude::*;
    use rand::Rng;

    fn grid() -> Grid {
        Grid::new(2, 768).unwrap()
    }

    fn xy() -> BiPoly {
        BiPoly::monomial_1d(1, 1, 1.0)
    }

    #[test]
    fn grid_validation() {
        assert!(Grid::new(2, 768).is_ok());
        assert!(Grid::new(2, 100).is_err());
        let g = grid();
        assert_eq!(g.cube_cells(&DyadicCube::interval(0, 1)).unwrap(), (192, 384));
        assert!(g.cells(0.001, 1.0).is_err());
        assert_eq!(g.truncation_ladder().len(), 10);
    }

    #[test]
    fn averages() {
        let g = grid();
        let c = GridFunction::from_fn(g, |_| -2.5);
        for r in [1.0, 2.0, 3.5] {
            assert!((c.average(&DyadicCube::interval(1, 0), r).unwrap() - 2.5).abs() < 1e-12);
        }
        let half = GridFunction::from_fn(g, |x| if x < 1.0 { 1.0 } else { 0.0 });
        assert!((half.average(&DyadicCube::interval(1, 0), 1.0).unwrap() - 0.5).abs() < 1e-15);
        let f = step_function(&g, &mut rng(4), -4, 0.2);
        let cube = DyadicCube::interval(1, 1);
        let (a, b) = g.cube_cells(&cube).unwrap();
        let mut s = 0.0;
        for i in a..b {
            s += f.get(i) * f.get(i);
        }
        let direct = (s * g.h() / cube.side()).sqrt();
        assert!((f.average(&cube, 2.0).unwrap() - direct).abs() < 1e-12);
        assert!(matches!(f.average(&DyadicCube::interval(-10, 3), 1.0), Err(Error::Alignment(_))));
        assert!(f.average(&cube, 0.5).is_err());
    }

    #[test]
    fn t_i_examples() {
        // ℓ(I) = 16 needs I₀ of side 16
        let g = Grid::new(4, 768).unwrap();
        let cube = DyadicCube::interval(4, 0);
        let bump = PsiBump { j: 1 };
        let zero = GridFunction::<f64>::zeros(g);
        assert!(apply_t_i(&zero, &cube, &xy(), bump).unwrap().sup_norm() == 0.0);
        let (ta, tb) = g.third_cells(&cube).unwrap();
        let ind = GridFunction::from_fn(g, |x| if x >= ta as f64 * g.h() && x < tb as f64 * g.h() { 1.0 } else { 0.0 });
        let out = apply_t_i(&ind, &cube, &BiPoly::zero(1), bump).unwrap();
        // ψ has zero mean: the total mass of the output vanishes
        let mass: Complex64 = out.values().iter().sum::<Complex64>() * g.h();
        assert!(mass.norm() < 1e-12, "{mass}");
        // direct convolution oracle at a few points
        for &i in &[out.offset() + 3, ta + 5, tb + 2] {
            let x = g.center(i);
            let mut s = 0.0;
            for j in ta..tb {
                s += 0.5 * psi(0.5 * (x - g.center(j))) * g.h();
            }
            assert!((out.get(i).re - s).abs() < 1e-13);
        }
        // modulus bound with an oscillating phase
        let f = step_function(&g, &mut rng(9), -2, 0.1);
        let out = apply_t_i(&f, &cube, &xy(), bump).unwrap();
        let mass1: f64 = (ta..tb).map(|j| f.get(j).abs()).sum::<f64>() * g.h();
        let psi_max = (0..10_000).map(|i| psi(0.25 + 0.75 * i as f64 / 1e4).abs()).fold(0.0, f64::max);
        assert!(out.sup_norm() <= 0.5 * psi_max * mass1 + 1e-12);
        // resolution and scale errors
        assert!(matches!(apply_t_i(&f, &cube, &xy(), PsiBump { j: 2 }), Err(Error::Scale(_))));
        let coarse = Grid::new(4, 48).unwrap();
        let fc = GridFunction::<f64>::zeros(coarse);
        assert!(matches!(apply_t_i(&fc, &cube, &xy(), bump), Err(Error::Resolution(_))));
    }

    #[test]
    fn truncated_examples() {
        let g = grid();
        let h = g.h();
        let even = GridFunction::from_fn(g, |x| (x - 2.0).powi(2));
        let out = apply_truncated(&even, &BiPoly::zero(1), &Hilbert, h, 4.0).unwrap();
        // at the center of symmetry the odd kernel cancels: x = 2 is a cell
        // boundary, so average the two neighbours' antisymmetric values
        let i = (2.0 / h) as i64;
        assert!((out.get(i) + out.get(i - 1)).norm() < 1e-10);
        let same = apply_truncated(&even, &xy(), &Hilbert, 0.5, 0.5).unwrap();
        assert_eq!(same.sup_norm(), 0.0);
        assert!(matches!(apply_truncated(&even, &xy(), &Hilbert, 0.5 * h, 1.0), Err(Error::Truncation(_))));
        // single-cell oracle
        let j0 = 300i64;
        let mut delta = GridFunction::<f64>::zeros(g);
        delta.values_mut()[j0 as usize] = 1.0;
        let out = apply_truncated(&delta, &xy(), &Hilbert, h, 4.0).unwrap();
        for i in [0i64, 100, 298, 302, 500, 767] {
            let x = g.center(i);
            let y = x - g.center(j0);
            let want = e(x * y) * (1.0 / y) * h;
            assert!((out.get(i) - want).norm() < 1e-12, "{i}");
        }
        // |y| = h is not strictly beyond ε = h
        for i in [j0 - 1, j0, j0 + 1] {
            assert_eq!(out.get(i), Complex64::new(0.0, 0.0));
        }
    }

    #[test]
    fn maximal_examples() {
        let g = grid();
        let h = g.h();
        let f = step_function(&g, &mut rng(2), -3, 0.3);
        let single = apply_maximal(&f, &xy(), &Hilbert, &[4.0 * h]).unwrap();
        let trunc = apply_truncated(&f, &xy(), &Hilbert, 4.0 * h, 8.0).unwrap().abs();
        for i in 0..g.n {
            assert!((single.values()[i] - trunc.values()[i]).abs() < 1e-10);
        }
        let coarse = apply_maximal(&f, &xy(), &Hilbert, &[h, 16.0 * h]).unwrap();
        let fine = apply_maximal(&f, &xy(), &Hilbert, &g.truncation_ladder()).unwrap();
        assert!(coarse.dominated_by(&fine, 1e-12));
        assert!(apply_maximal(&f, &xy(), &Hilbert, &[]).is_err());
        // analytic oracle: f = 1_[0,1), truncated Hilbert at x ≈ 2
        let fine = Grid::new(2, 12 * 1024).unwrap();
        let ind_f = GridFunction::from_fn(fine, |x| if x < 1.0 { 1.0 } else { 0.0 });
        let out = apply_maximal(&ind_f, &BiPoly::zero(1), &Hilbert, &[fine.h()]).unwrap();
        let i = (2.0 / fine.h()) as i64;
        let x = fine.center(i);
        let exact = (x / (x - 1.0)).ln();
        assert!((out.get(i) - exact).abs() < 1e-4, "{} vs {exact}", out.get(i));
    }

    #[test]
    fn collection_maximal_examples() {
        let g = Grid::new(5, 768).unwrap();
        let f = step_function(&g, &mut rng(12), -1, 0.0);
        let p = xy().scale(1e-2);
        let i1 = DyadicCube::interval(5, 0);
        let i2 = DyadicCube::interval(4, 1);
        let one = apply_collection_maximal(&f, std::slice::from_ref(&i1), &p).unwrap();
        let t1 = apply_t_i(&f, &i1, &p, PsiBump { j: 2 }).unwrap();
        for i in one.range().0..one.range().1 {
            assert!((one.get(i) - t1.get(i).norm()).abs() < 1e-14);
        }
        let t2 = apply_t_i(&f, &i2, &p, PsiBump { j: 1 }).unwrap();
        let two = apply_collection_maximal(&f, &[i2.clone(), i1.clone()], &p).unwrap();
        for i in two.range().0..two.range().1 {
            let want = (t1.get(i) + t2.get(i)).norm().max(t1.get(i).norm());
            assert!((two.get(i) - want).abs() < 1e-13);
        }
        // f vanishing on all thirds
        let (a, b) = g.third_cells(&i1).unwrap();
        let (c, d) = g.third_cells(&i2).unwrap();
        let off = GridFunction::from_fn(g, |x| {
            let i = (x / g.h()) as i64;
            if (a..b).contains(&i) || (c..d).contains(&i) {
                0.0
            } else {
                1.0
            }
        });
        assert_eq!(apply_collection_maximal(&off, &[i1, i2], &p).unwrap().sup_norm(), 0.0);
    }

    #[test]
    fn fixed_scale_thirds_tile() {
        let g = Grid::new(2, 768).unwrap();
        for k in 3..7 {
            let cubes = scale_cubes(&g, k);
            let mut cover = vec![0u32; g.n];
            for c in &cubes {
                let (a, b) = g.third_cells(c).unwrap();
                for i in a.max(0)..b.min(g.n as i64) {
                    cover[i as usize] += 1;
                }
            }
            assert!(cover.iter().all(|&c| c == 1), "k = {k}");
        }
    }

    #[test]
    fn fixed_scale_uniform_sup_bound() {
        let g = Grid::new(2, 768).unwrap();
        let f = GridFunction::from_fn(g, |x| if x < 3.0 { 1.0 } else { -1.0 });
        let mut ratios = Vec::new();
        for k in 4..8 {
            let out = apply_fixed_scale(&f, k, &xy()).unwrap();
            ratios.push(out.sup_norm() / f.sup_norm());
        }
        // |Σ T_I f| ≤ ∫|ψ| ‖f‖_∞ at every scale
        let l1 = (0..20_000).map(|i| psi(-1.0 + 2.0 * (i as f64 + 0.5) / 20_000.0).abs()).sum::<f64>() * 2.0 / 20_000.0;
        assert!(ratios.iter().all(|&r| r <= l1 + 1e-9), "{ratios:?}");
    }

    #[test]
    fn hl_examples() {
        let g = grid();
        let c = GridFunction::from_fn(g, |_| 3.0);
        let m = hl_maximal(&c);
        assert!(m.values().iter().all(|&v| (v - 3.0).abs() < 1e-12));
        let ind = GridFunction::from_fn(g, |x| if x < 1.0 { 1.0 } else { 0.0 });
        assert!((hl_maximal_point(&ind, 2.0) - 0.25).abs() < 1e-12);
        let f = step_function(&g, &mut rng(3), -5, 0.4);
        assert!(f.dominated_by(&hl_maximal(&f), 1e-12));
    }

    #[test]
    fn modulation_reduction_is_bounded() {
        let mut r = rng(17);
        let p = BiPoly::from_1d(&[(1, 1, 0.5), (1, 2, -0.25), (2, 1, 0.25)]);
        for _ in 0..20 {
            let m = 16.0 * r.random_range(-50..50) as f64;
            let ratio = modulation_reduction_ratio(&p, m, 40).unwrap();
            // |e(P(x,y)) − 1| ≤ 2π|P(x,y)| ≤ 2π Σ|λ| 8^{|α|} 8^{|β|−1} |y|
            assert!(ratio <= 2.0 * std::f64::consts::PI * (0.5 * 8.0 + 0.25 * 64.0 + 0.25 * 64.0));
        }
    }

    #[test]
    fn binary_and_csv_io() {
        let g = grid();
        let f = step_function(&g, &mut rng(1), -2, 0.5).to_complex().restrict(-3, 20);
        let back = GridFunction::from_bytes(&f.to_bytes()).unwrap();
        assert_eq!(back, f);
        assert!(GridFunction::from_bytes(&f.to_bytes()[..50]).is_err());
        let mut buf = Vec::new();
        f.write_csv(&mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert_eq!(s.lines().count(), 24);
        assert!(s.lines().nth(1).unwrap().starts_with("-3,"));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(12))]
        #[test]
        fn maximal_is_sublinear(seed in 0u64..1000) {
            let g = Grid::new(1, 96).unwrap();
            let mut r = rng(seed);
            let f = step_function(&g, &mut r, -3, 0.3);
            let h = step_function(&g, &mut r, -2, 0.3);
            let sum = GridFunction::from_values(g, f.values().iter().zip(h.values()).map(|(a, b)| a + b).collect()).unwrap();
            let ladder = g.truncation_ladder();
            let p = BiPoly::from_1d(&[(1, 2, 1.0)]);
            let mf = apply_maximal(&f, &p, &Hilbert, &ladder).unwrap();
            let mh = apply_maximal(&h, &p, &Hilbert, &ladder).unwrap();
            let ms = apply_maximal(&sum, &p, &Hilbert, &ladder).unwrap();
            for i in 0..g.n {
                prop_assert!(ms.values()[i] <= mf.values()[i] + mh.values()[i] + 1e-10);
            }
        }
    }
}
