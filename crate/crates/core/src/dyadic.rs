//! Shifted dyadic grids `D^ω`, their cubes, strips, and bit masks over
//! uniform cell grids.
//!
//! A shift entry `ω_i ∈ {0, 1/3, 2/3}` is stored as the integer `t_i = 3ω_i`,
//! which keeps parent/child arithmetic exact: the children of the cube at
//! position `m` and scale `k` sit at `2m + e + (−1)^k t`.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::exec;

/// Dyadic grid `D^ω` with `ω = shift / 3`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ShiftedGrid {
    shift: Vec<u8>,
}

impl ShiftedGrid {
    /// The standard grid `D^0` in dimension `dim`.
    pub fn standard(dim: usize) -> Self {
        ShiftedGrid { shift: vec![0; dim] }
    }

    /// `thirds[i] ∈ {0,1,2}` encodes `ω_i = thirds[i]/3`.
    pub fn new(thirds: Vec<u8>) -> Result<Self> {
        if thirds.iter().any(|&t| t > 2) {
            return invalid("shift entries must be 0, 1 or 2 thirds");
        }
        Ok(ShiftedGrid { shift: thirds })
    }

    /// All `3^dim` shifted grids.
    pub fn all(dim: usize) -> Vec<ShiftedGrid> {
        let total = 3usize.pow(dim as u32);
        (0..total)
            .map(|mut c| {
                let mut s = vec![0u8; dim];
                for v in s.iter_mut() {
                    *v = (c % 3) as u8;
                    c /= 3;
                }
                ShiftedGrid { shift: s }
            })
            .collect()
    }

    pub fn dim(&self) -> usize {
        self.shift.len()
    }

    pub fn thirds(&self) -> &[u8] {
        &self.shift
    }

    pub fn omega(&self) -> Vec<f64> {
        self.shift.iter().map(|&t| t as f64 / 3.0).collect()
    }

    /// The signed integer offset `(−1)^k t_i`.
    fn signed(&self, k: i32, i: usize) -> i64 {
        let t = self.shift[i] as i64;
        if k.rem_euclid(2) == 0 {
            t
        } else {
            -t
        }
    }
}

/// `2^k` for any integer `k`.
#[inline]
pub fn pow2(k: i32) -> f64 {
    2f64.powi(k)
}

/// The cube `2^k(m + (−1)^k ω + [0,1)^n)` of `D^ω`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DyadicCube {
    pub grid: ShiftedGrid,
    pub k: i32,
    pub m: Vec<i64>,
}

impl DyadicCube {
    pub fn new(grid: ShiftedGrid, k: i32, m: Vec<i64>) -> Result<Self> {
        if m.len() != grid.dim() {
            return invalid("position and grid dimensions differ");
        }
        Ok(DyadicCube { grid, k, m })
    }

    /// Standard one-dimensional cube `[m 2^k, (m+1) 2^k)`.
    pub fn interval(k: i32, m: i64) -> Self {
        DyadicCube { grid: ShiftedGrid::standard(1), k, m: vec![m] }
    }

    pub fn dim(&self) -> usize {
        self.m.len()
    }

    pub fn side(&self) -> f64 {
        pow2(self.k)
    }

    pub fn volume(&self) -> f64 {
        self.side().powi(self.dim() as i32)
    }

    pub fn corner(&self) -> Vec<f64> {
        let l = self.side();
        (0..self.dim()).map(|i| l * (self.m[i] as f64 + self.grid.signed(self.k, i) as f64 / 3.0)).collect()
    }

    pub fn center(&self) -> Vec<f64> {
        let h = 0.5 * self.side();
        self.corner().into_iter().map(|c| c + h).collect()
    }

    /// Half-open membership.
    pub fn contains(&self, x: &[f64]) -> bool {
        let l = self.side();
        self.corner().iter().zip(x).all(|(&c, &xi)| xi >= c && xi < c + l)
    }

    /// Concentric cube of one third the side, as `(corner, side)`.
    pub fn third(&self) -> (Vec<f64>, f64) {
        let l = self.side() / 3.0;
        (self.corner().into_iter().map(|c| c + l).collect(), l)
    }

    /// The `2^n` children at scale `k − 1`, in lexicographic order of the
    /// offset vector.
    pub fn children(&self) -> Vec<DyadicCube> {
        let n = self.dim();
        (0..1usize << n)
            .map(|bits| {
                let m = (0..n)
                    .map(|i| 2 * self.m[i] + ((bits >> (n - 1 - i)) & 1) as i64 + self.grid.signed(self.k, i))
                    .collect();
                DyadicCube { grid: self.grid.clone(), k: self.k - 1, m }
            })
            .collect()
    }

    pub fn parent(&self) -> DyadicCube {
        let kp = self.k + 1;
        let m = (0..self.dim()).map(|i| (self.m[i] - self.grid.signed(kp, i)).div_euclid(2)).collect();
        DyadicCube { grid: self.grid.clone(), k: kp, m }
    }

    /// True when `self ⊆ other` as point sets (same grid assumed).
    pub fn is_subcube_of(&self, other: &DyadicCube) -> bool {
        if self.grid != other.grid || self.k > other.k {
            return false;
        }
        let mut c = self.clone();
        while c.k < other.k {
            c = c.parent();
        }
        c.m == other.m
    }
}

/// The unique cube of `D^ω` at scale `k` containing `x`.
pub fn cube_containing(x: &[f64], k: i32, g: &ShiftedGrid) -> DyadicCube {
    assert_eq!(x.len(), g.dim(), "point and grid dimensions differ");
    let l = pow2(k);
    let m: Vec<i64> =
        (0..x.len()).map(|i| (x[i] / l - g.signed(k, i) as f64 / 3.0).floor() as i64).collect();
    let mut cube = DyadicCube { grid: g.clone(), k, m };
    // Rounding in the shift can misplace points within an ulp of a face.
    for (i, &xi) in x.iter().enumerate() {
        for _ in 0..2 {
            let c = cube.corner()[i];
            if xi < c {
                cube.m[i] -= 1;
            } else if xi >= c + l {
                cube.m[i] += 1;
            }
        }
    }
    cube
}

/// Some shifted-grid cube `P ⊇ I` with `ℓ(P) ≤ 6ℓ(I)`, where `I` is the
/// axis-parallel cube `corner + [0, side)^n`. The smallest such `P` is
/// returned.
pub fn enclosing_shifted_cube(corner: &[f64], side: f64) -> Result<DyadicCube> {
    if !(side > 0.0) || !side.is_finite() {
        return invalid("cube side must be positive");
    }
    let n = corner.len();
    let kmin = side.log2().ceil() as i32;
    let kmax = (6.0 * side).log2().floor() as i32;
    for k in kmin..=kmax {
        for g in ShiftedGrid::all(n) {
            let p = cube_containing(corner, k, &g);
            let pc = p.corner();
            let l = p.side();
            if (0..n).all(|i| pc[i] <= corner[i] && corner[i] + side <= pc[i] + l) {
                return Ok(p);
            }
        }
    }
    Err(Error::Assertion(format!("no shifted cube of side <= 6 x {side} contains the cube")))
}

/// `Σ_ω Σ_{ℓ(I)=2^k} 1_{(1/3)I}(x)`, which equals 1 at every generic point.
/// Points within `1e−12` (relative to `2^k`) of a third-boundary of any of
/// the `3^n` grids are rejected.
pub fn identity_partition_weight(x: &[f64], k: i32) -> Result<u32> {
    let l = pow2(k);
    let mut count = 0;
    for g in ShiftedGrid::all(x.len()) {
        let c = cube_containing(x, k, &g);
        let corner = c.corner();
        let mut inside = true;
        for i in 0..x.len() {
            let u = (x[i] - corner[i]) / l;
            for b in [0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0] {
                if (u - b).abs() < 1e-12 {
                    return Err(Error::BoundaryAmbiguity(format!("{x:?} at scale {k}")));
                }
            }
            inside &= u > 1.0 / 3.0 && u < 2.0 / 3.0;
        }
        count += inside as u32;
    }
    Ok(count)
}

/// Column of translates `Q + 2^k j e_n` of a base cube along the last axis,
/// optionally bounded by `lo < j < hi`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KStrip {
    pub base: DyadicCube,
    pub lo: Option<i64>,
    pub hi: Option<i64>,
}

impl KStrip {
    pub fn unbounded(base: DyadicCube) -> Self {
        KStrip { base, lo: None, hi: None }
    }

    /// The translate with index `j`.
    pub fn cube(&self, j: i64) -> DyadicCube {
        let mut c = self.base.clone();
        *c.m.last_mut().expect("cube has dimension >= 1") += j;
        c
    }

    pub fn admits(&self, j: i64) -> bool {
        self.lo.is_none_or(|lo| j > lo) && self.hi.is_none_or(|hi| j < hi)
    }
}

/// Contiguous run `start ≤ j < start + len` of cubes in a strip.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct KInterval {
    pub start: i64,
    pub len: u64,
}

/// Uniform cell grid over the cube `origin + [0, side)^dim`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaskGeometry {
    pub dim: usize,
    pub origin: Vec<f64>,
    pub side: f64,
    /// Cells per side.
    pub n: usize,
}

impl MaskGeometry {
    pub fn new(origin: Vec<f64>, side: f64, n: usize) -> Result<Self> {
        if origin.is_empty() || n == 0 || !(side > 0.0) {
            return invalid("mask geometry needs dim >= 1, n >= 1 and positive side");
        }
        Ok(MaskGeometry { dim: origin.len(), origin, side, n })
    }

    pub fn cell_width(&self) -> f64 {
        self.side / self.n as f64
    }

    pub fn cell_volume(&self) -> f64 {
        self.cell_width().powi(self.dim as i32)
    }

    pub fn len(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Row-major multi-index of a flat cell index (last axis fastest).
    pub fn unflatten(&self, mut idx: usize) -> Vec<usize> {
        let mut out = vec![0; self.dim];
        for a in (0..self.dim).rev() {
            out[a] = idx % self.n;
            idx /= self.n;
        }
        out
    }

    pub fn flatten(&self, ix: &[usize]) -> usize {
        ix.iter().fold(0, |acc, &i| acc * self.n + i)
    }

    pub fn cell_center(&self, ix: &[usize]) -> Vec<f64> {
        let h = self.cell_width();
        ix.iter().zip(&self.origin).map(|(&i, &o)| o + (i as f64 + 0.5) * h).collect()
    }
}

/// One bit per cell of a [`MaskGeometry`].
#[derive(Clone, Debug, PartialEq)]
pub struct GridMask {
    geom: MaskGeometry,
    bits: Vec<u64>,
}

impl GridMask {
    pub fn empty(geom: MaskGeometry) -> Self {
        let words = geom.len().div_ceil(64);
        GridMask { geom, bits: vec![0; words] }
    }

    /// Mask of cells whose multi-index satisfies `pred`.
    pub fn from_fn(geom: MaskGeometry, pred: impl Fn(&[usize]) -> bool + Sync + Send) -> Self {
        let len = geom.len();
        let words = exec::map_range(len.div_ceil(64), |w| {
            let mut word = 0u64;
            for b in 0..64 {
                let idx = w * 64 + b;
                if idx < len && pred(&geom.unflatten(idx)) {
                    word |= 1 << b;
                }
            }
            word
        });
        GridMask { geom, bits: words }
    }

    /// Mask of cells whose centers satisfy `pred`.
    pub fn from_centers(geom: MaskGeometry, pred: impl Fn(&[f64]) -> bool + Sync + Send) -> Self {
        let g = geom.clone();
        Self::from_fn(geom, move |ix| pred(&g.cell_center(ix)))
    }

    pub fn geometry(&self) -> &MaskGeometry {
        &self.geom
    }

    pub fn len(&self) -> usize {
        self.geom.len()
    }

    pub fn is_empty(&self) -> bool {
        self.count() == 0
    }

    #[inline]
    pub fn get(&self, idx: usize) -> bool {
        (self.bits[idx / 64] >> (idx % 64)) & 1 == 1
    }

    #[inline]
    pub fn set(&mut self, idx: usize, v: bool) {
        if v {
            self.bits[idx / 64] |= 1 << (idx % 64);
        } else {
            self.bits[idx / 64] &= !(1 << (idx % 64));
        }
    }

    pub fn count(&self) -> usize {
        self.bits.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn measure(&self) -> f64 {
        self.count() as f64 * self.geom.cell_volume()
    }

    fn same_geometry(&self, other: &GridMask) -> Result<()> {
        if self.geom != other.geom {
            return invalid("masks live on different geometries");
        }
        Ok(())
    }

    pub fn union(&self, other: &GridMask) -> Result<GridMask> {
        self.same_geometry(other)?;
        let bits = self.bits.iter().zip(&other.bits).map(|(a, b)| a | b).collect();
        Ok(GridMask { geom: self.geom.clone(), bits })
    }

    pub fn intersection(&self, other: &GridMask) -> Result<GridMask> {
        self.same_geometry(other)?;
        let bits = self.bits.iter().zip(&other.bits).map(|(a, b)| a & b).collect();
        Ok(GridMask { geom: self.geom.clone(), bits })
    }

    pub fn is_subset_of(&self, other: &GridMask) -> bool {
        self.geom == other.geom && self.bits.iter().zip(&other.bits).all(|(a, b)| a & !b == 0)
    }

    pub fn is_disjoint_from(&self, other: &GridMask) -> bool {
        self.geom == other.geom && self.bits.iter().zip(&other.bits).all(|(a, b)| a & b == 0)
    }

    /// Indices of set cells in increasing order.
    pub fn ones(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.get(i)).collect()
    }

    /// Outward discretization of the Minkowski sum with the closed Euclidean
    /// ball of the given radius: a cell is kept when its closed distance to
    /// some set cell is below `radius`. Radius zero returns the mask itself.
    pub fn dilate(&self, radius: f64) -> GridMask {
        assert!(radius >= 0.0, "dilation radius must be nonnegative");
        if radius == 0.0 || self.count() == 0 {
            return self.clone();
        }
        // Closed-cell distance from c to a equals the center distance from c
        // to the 3^n box around a, so dilate by one cell in the sup norm and
        // threshold the exact Euclidean distance transform.
        let boxed = self.box_dilate();
        let d2 = squared_distance_transform_raw(&boxed, self.geom.n, self.geom.dim);
        let r = radius / self.geom.cell_width();
        let r2 = r * r;
        let len = self.len();
        let words = exec::map_range(len.div_ceil(64), |w| {
            let mut word = 0u64;
            for b in 0..64 {
                let idx = w * 64 + b;
                if idx < len && d2[idx] < r2 {
                    word |= 1 << b;
                }
            }
            word
        });
        GridMask { geom: self.geom.clone(), bits: words }
    }

    /// Dilation by one cell in the sup norm (the `3^n` box).
    fn box_dilate(&self) -> Vec<bool> {
        let n = self.geom.n;
        let mut cur: Vec<bool> = (0..self.len()).map(|i| self.get(i)).collect();
        for axis in 0..self.geom.dim {
            let stride = n.pow((self.geom.dim - 1 - axis) as u32);
            let mut next = cur.clone();
            for (idx, v) in next.iter_mut().enumerate() {
                if *v {
                    continue;
                }
                let pos = (idx / stride) % n;
                *v = (pos > 0 && cur[idx - stride]) || (pos + 1 < n && cur[idx + stride]);
            }
            cur = next;
        }
        cur
    }

    /// One-dimensional fiber `{y : (x_i, y) ∈ mask}` of a planar mask.
    pub fn fiber(&self, i: usize) -> Result<GridMask> {
        if self.geom.dim != 2 {
            return Err(Error::UnsupportedDimension(self.geom.dim));
        }
        let n = self.geom.n;
        if i >= n {
            return invalid("fiber index out of range");
        }
        let g = MaskGeometry::new(vec![self.geom.origin[1]], self.geom.side, n)?;
        let mut out = GridMask::empty(g);
        for j in 0..n {
            out.set(j, self.get(i * n + j));
        }
        Ok(out)
    }

    /// Run-length encoding: 8-byte header (`u32` LE cells per side, `u32`
    /// LE dim) followed by `u32` LE run lengths alternating unset/set,
    /// starting with an unset run (possibly of length zero).
    pub fn to_rle(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(16);
        out.extend_from_slice(&(self.geom.n as u32).to_le_bytes());
        out.extend_from_slice(&(self.geom.dim as u32).to_le_bytes());
        let mut state = false;
        let mut run = 0u32;
        for i in 0..self.len() {
            if self.get(i) == state {
                run += 1;
            } else {
                out.extend_from_slice(&run.to_le_bytes());
                state = !state;
                run = 1;
            }
        }
        out.extend_from_slice(&run.to_le_bytes());
        out
    }

    /// Inverse of [`GridMask::to_rle`]; the header must agree with the
    /// supplied origin's dimension.
    pub fn from_rle(bytes: &[u8], origin: Vec<f64>, side: f64) -> Result<GridMask> {
        if bytes.len() < 8 || !bytes.len().is_multiple_of(4) {
            return invalid("truncated run-length stream");
        }
        let word = |i: usize| u32::from_le_bytes(bytes[4 * i..4 * i + 4].try_into().unwrap());
        let n = word(0) as usize;
        let dim = word(1) as usize;
        if dim != origin.len() {
            return invalid("header dimension disagrees with the supplied origin");
        }
        let mut mask = GridMask::empty(MaskGeometry::new(origin, side, n)?);
        let mut pos = 0usize;
        let mut state = false;
        for w in 2..bytes.len() / 4 {
            let run = word(w) as usize;
            if pos + run > mask.len() {
                return invalid("runs overflow the grid");
            }
            if state {
                for i in pos..pos + run {
                    mask.set(i, true);
                }
            }
            pos += run;
            state = !state;
        }
        if pos != mask.len() {
            return invalid("runs do not cover the grid");
        }
        Ok(mask)
    }
}

const EDT_INF: f64 = 1e30;

/// Exact squared Euclidean distance (in cell units, between cell centers)
/// from every cell to the nearest `true` cell; separable lower-envelope
/// algorithm of Felzenszwalb and Huttenlocher.
pub fn squared_distance_transform_raw(set: &[bool], n: usize, dim: usize) -> Vec<f64> {
    let mut f: Vec<f64> = set.iter().map(|&b| if b { 0.0 } else { EDT_INF }).collect();
    for axis in 0..dim {
        let stride = n.pow((dim - 1 - axis) as u32);
        if stride == 1 {
            exec::for_each_row(&mut f, n, |_, row| {
                let mut out = vec![0.0; n];
                edt_1d(row, &mut out);
                row.copy_from_slice(&out);
            });
        } else {
            let lines = f.len() / n;
            let results = exec::map_range(lines, |l| {
                let base = (l / stride) * stride * n + l % stride;
                let line: Vec<f64> = (0..n).map(|i| f[base + i * stride]).collect();
                let mut out = vec![0.0; n];
                edt_1d(&line, &mut out);
                out
            });
            for (l, out) in results.into_iter().enumerate() {
                let base = (l / stride) * stride * n + l % stride;
                for (i, v) in out.into_iter().enumerate() {
                    f[base + i * stride] = v;
                }
            }
        }
    }
    f
}

fn edt_1d(f: &[f64], d: &mut [f64]) {
    let n = f.len();
    let first = match f.iter().position(|&x| x < EDT_INF) {
        Some(p) => p,
        None => {
            d.iter_mut().for_each(|x| *x = EDT_INF);
            return;
        }
    };
    let mut v = vec![0usize; n];
    let mut z = vec![0.0f64; n + 1];
    let mut k = 0usize;
    v[0] = first;
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    for q in first + 1..n {
        if f[q] >= EDT_INF {
            continue;
        }
        let mut s;
        loop {
            let p = v[k];
            s = ((f[q] + (q * q) as f64) - (f[p] + (p * p) as f64)) / (2.0 * (q - p) as f64);
            if s <= z[k] {
                k -= 1;
            } else {
                break;
            }
        }
        k += 1;
        v[k] = q;
        z[k] = s;
        z[k + 1] = f64::INFINITY;
    }
    let mut k = 0usize;
    for (q, out) in d.iter_mut().enumerate() {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let dq = q as f64 - v[k] as f64;
        *out = dq * dq + f[v[k]];
    }
}
