//! `A_p` weights on the base interval and weighted operator ratios.

use std::sync::Mutex;

use crate::dyadic::{pow2, DyadicCube, ShiftedGrid};
use crate::error::{invalid, Result};
use crate::exec;
use crate::fit::geomspace;
use crate::kernel::CzKernel;
use crate::operator::{Grid, GridFunction};
use crate::polynomial::BiPoly;
use crate::sparse::maximal_truncation;

/// Strictly positive weight on `I₀`, with characteristics memoized by `p`.
#[derive(Debug)]
pub struct Weight {
    values: GridFunction<f64>,
    cache: Mutex<Vec<(f64, f64)>>,
}

impl Clone for Weight {
    fn clone(&self) -> Self {
        Weight { values: self.values.clone(), cache: Mutex::new(self.cache.lock().expect("cache").clone()) }
    }
}

impl Weight {
    pub fn new(values: GridFunction<f64>) -> Result<Self> {
        let values = values.on_base();
        if values.values().iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return invalid("weights must be finite and strictly positive");
        }
        Ok(Weight { values, cache: Mutex::new(Vec::new()) })
    }

    /// `|x − x₀|^a` sampled at cell centers.
    pub fn power(grid: Grid, x0: f64, a: f64) -> Result<Self> {
        Self::new(GridFunction::from_fn(grid, |x| (x - x0).abs().powf(a)))
    }

    pub fn constant(grid: Grid, c: f64) -> Result<Self> {
        Self::new(GridFunction::from_fn(grid, |_| c))
    }

    pub fn scaled(&self, c: f64) -> Result<Self> {
        Self::new(self.values.map(|v| c * v))
    }

    pub fn values(&self) -> &GridFunction<f64> {
        &self.values
    }

    pub fn grid(&self) -> &Grid {
        self.values.grid()
    }
}

/// Cell ranges of every dyadic cube, from all three shifted grids, lying
/// inside `I₀` and made of whole cells.
pub fn base_subcubes(grid: &Grid) -> Vec<(i64, i64)> {
    let mut out = Vec::new();
    let mut k = grid.s0;
    while pow2(k) >= grid.h() * (1.0 - 1e-12) {
        let l = pow2(k);
        for g in ShiftedGrid::all(1) {
            let hi = (grid.side() / l).ceil() as i64 + 1;
            for m in -1..=hi {
                let c = DyadicCube::new(g.clone(), k, vec![m]).expect("one-dimensional");
                let a = c.corner()[0];
                if a < -1e-12 || a + l > grid.side() + 1e-12 {
                    continue;
                }
                if let Ok(r) = grid.cube_cells(&c) {
                    out.push(r);
                }
            }
        }
        k -= 1;
    }
    out.sort_unstable();
    out.dedup();
    out
}

/// `[w]_{A_p}`: the supremum over [`base_subcubes`] of
/// `⟨w⟩_I ⟨w^{1−p′}⟩_I^{p−1}`, or of `⟨w⟩_I / min_I w` when `p = 1`.
pub fn ap_characteristic(w: &Weight, p: f64) -> Result<f64> {
    if !(p >= 1.0) || !p.is_finite() {
        return invalid(format!("need p >= 1, got {p}"));
    }
    if let Some(&(_, v)) = w.cache.lock().expect("cache").iter().find(|(q, _)| *q == p) {
        return Ok(v);
    }
    let vals = w.values.values();
    let prefix = |f: &dyn Fn(f64) -> f64| {
        let mut acc = vec![0.0];
        let mut s = 0.0;
        for &v in vals {
            s += f(v);
            acc.push(s);
        }
        acc
    };
    let pw = prefix(&|v| v);
    let dual = if p > 1.0 { Some(prefix(&|v| v.powf(-1.0 / (p - 1.0)))) } else { None };
    let cubes = base_subcubes(w.grid());
    let per = exec::map_slice(&cubes, |&(a, b)| {
        let (a, b) = (a as usize, b as usize);
        let len = (b - a) as f64;
        let avg = (pw[b] - pw[a]) / len;
        match &dual {
            Some(q) => avg * ((q[b] - q[a]) / len).powf(p - 1.0),
            None => avg / vals[a..b].iter().cloned().fold(f64::INFINITY, f64::min),
        }
    });
    let v = per.into_iter().fold(1.0f64, f64::max);
    w.cache.lock().expect("cache").push((p, v));
    Ok(v)
}

/// `[w]² (1 + log₊[w])`, the weak-type shape with the logarithm kept
/// positive at `[w] = 1`.
pub fn weak_type_bound(a1: f64) -> f64 {
    a1 * a1 * (1.0 + a1.ln().max(0.0))
}

/// `[w]_{A_p}^{1 + max(1/(p−1), 1)}`.
pub fn strong_type_bound(ap: f64, p: f64) -> f64 {
    ap.powf(1.0 + (1.0 / (p - 1.0)).max(1.0))
}

fn check_pair(f: &GridFunction<f64>, w: &Weight) -> Result<()> {
    if f.grid() != w.grid() {
        return invalid("f and w live on different grids");
    }
    let (a, b) = f.range();
    if a < 0 || b > f.grid().n as i64 {
        return invalid("f must be supported in I0");
    }
    Ok(())
}

/// `λ w({T f > λ})` maximized over 40 levels spanning `[max·10⁻⁴, max]`,
/// divided by `∫|f| w`, for a precomputed `T f`.
pub fn weak_type_from(tf: &GridFunction<f64>, f: &GridFunction<f64>, w: &Weight) -> Result<f64> {
    check_pair(f, w)?;
    let h = f.grid().h();
    let wv = w.values.values();
    let tfv = tf.on_base();
    let tfv = tfv.values();
    let fb = f.on_base();
    let denom: f64 = fb.values().iter().zip(wv).map(|(a, b)| a.abs() * b).sum::<f64>() * h;
    let top = tfv.iter().cloned().fold(0.0f64, f64::max);
    if denom == 0.0 || top == 0.0 {
        return Ok(0.0);
    }
    let best = geomspace(top * 1e-4, top, 40)
        .into_iter()
        .map(|lam| lam * tfv.iter().zip(wv).filter(|(t, _)| **t > lam).map(|(_, w)| w).sum::<f64>() * h)
        .fold(0.0f64, f64::max);
    Ok(best / denom)
}

/// Weak-type `L¹(w) → L^{1,∞}(w)` ratio of `T_{P,*}`.
pub fn weak_type_ratio(f: &GridFunction<f64>, w: &Weight, p: &BiPoly, k: &dyn CzKernel) -> Result<f64> {
    if f.values().iter().any(|v| *v < 0.0) {
        return invalid("f must be nonnegative");
    }
    let tf = maximal_truncation(f, p, k)?;
    weak_type_from(&tf, f, w)
}

/// `‖T f‖_{L^q(w)} / ‖f‖_{L^q(w)}` for a precomputed `T f`.
pub fn strong_type_from(tf: &GridFunction<f64>, f: &GridFunction<f64>, w: &Weight, q: f64) -> Result<f64> {
    check_pair(f, w)?;
    if !(q > 1.0) {
        return invalid(format!("need p > 1, got {q}"));
    }
    let wv = w.values.values();
    let norm = |u: &GridFunction<f64>| -> f64 {
        u.on_base().values().iter().zip(wv).map(|(a, b)| a.abs().powf(q) * b).sum::<f64>().powf(1.0 / q)
    };
    let den = norm(f);
    if den == 0.0 {
        return Ok(0.0);
    }
    Ok(norm(tf) / den)
}

/// Strong-type `L^q(w)` ratio of `T_{P,*}`.
pub fn strong_type_ratio(f: &GridFunction<f64>, w: &Weight, p: &BiPoly, k: &dyn CzKernel, q: f64) -> Result<f64> {
    let tf = maximal_truncation(f, p, k)?;
    strong_type_from(&tf, f, w, q)
}
