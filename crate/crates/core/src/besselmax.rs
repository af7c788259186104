//! Bessel constants, maximal partial sums, and orthogonality of the
//! generation functions `β_u`.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::decomposition::{apply_t_ks, generations, CzDecomposition};
use crate::dyadic::DyadicCube;
use crate::error::{invalid, Error, Result};
use crate::exec;
use crate::fit::{line_fit, LineFit};
use crate::operator::{Grid, GridFunction, Value};
use crate::polynomial::BiPoly;

/// Largest family accepted by the exhaustive sign search.
pub const EXHAUSTIVE_MAX: usize = 12;

/// Functions `φ₁, …, φ_N` on a common window with their Gram matrix.
#[derive(Clone, Debug)]
pub struct FunctionFamily {
    grid: Grid,
    offset: i64,
    dense: Vec<Vec<Complex64>>,
    gram: DMatrix<Complex64>,
}

impl FunctionFamily {
    pub fn new<T: Value>(members: &[GridFunction<T>]) -> Result<Self> {
        let Some(first) = members.first() else {
            return invalid("a family needs at least one member");
        };
        let grid = *first.grid();
        if members.iter().any(|m| *m.grid() != grid) {
            return invalid("members live on different grids");
        }
        let lo = members.iter().map(|m| m.range().0).min().expect("nonempty");
        let hi = members.iter().map(|m| m.range().1).max().expect("nonempty");
        let dense: Vec<Vec<Complex64>> = members
            .iter()
            .map(|m| (lo..hi).map(|i| m.get(i).to_complex()).collect())
            .collect();
        let n = dense.len();
        let h = grid.h();
        let upper = exec::map_range(n * n, |idx| {
            let (i, j) = (idx / n, idx % n);
            if j < i {
                return Complex64::new(0.0, 0.0);
            }
            dense[i].iter().zip(&dense[j]).map(|(a, b)| a * b.conj()).sum::<Complex64>() * h
        });
        let gram = DMatrix::from_fn(n, n, |i, j| if j >= i { upper[i * n + j] } else { upper[j * n + i].conj() });
        Ok(FunctionFamily { grid, offset: lo, dense, gram })
    }

    pub fn len(&self) -> usize {
        self.dense.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dense.is_empty()
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    /// `G_ij = ⟨φ_i, φ_j⟩ = Σ φ_i conj(φ_j) h`.
    pub fn gram(&self) -> &DMatrix<Complex64> {
        &self.gram
    }

    /// Member `i` as a grid function.
    pub fn member(&self, i: usize) -> GridFunction<Complex64> {
        let mut g = GridFunction::window(self.grid, self.offset, self.dense[i].len());
        g.values_mut().copy_from_slice(&self.dense[i]);
        g
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum BesselMode {
    /// `max_{c ∈ {0,±1}^N} ‖Σ c_j φ_j‖₂`, for `N ≤ 12`.
    Exhaustive,
    /// `√(‖G‖_op · N)`, an upper bound for the exhaustive value.
    GramBound,
}

/// Bessel constant `A` of the family.
pub fn bessel_constant(fam: &FunctionFamily, mode: BesselMode) -> Result<f64> {
    let n = fam.len();
    let g = &fam.gram;
    match mode {
        BesselMode::Exhaustive => {
            if n > EXHAUSTIVE_MAX {
                return Err(Error::Mode(format!("exhaustive search is capped at {EXHAUSTIVE_MAX} members, got {n}")));
            }
            let re = DMatrix::from_fn(n, n, |i, j| g[(i, j)].re);
            // split the lattice on the leading digit pair for parallelism
            let lead = n.min(2);
            let outer = 3usize.pow(lead as u32);
            let inner = 3usize.pow((n - lead) as u32);
            let best = exec::map_range(outer, |o| {
                let mut c = vec![0.0; n];
                let mut best = 0.0f64;
                for idx in 0..inner {
                    let mut code = o + outer * idx;
                    for v in c.iter_mut() {
                        *v = (code % 3) as f64 - 1.0;
                        code /= 3;
                    }
                    let mut q = 0.0;
                    for i in 0..n {
                        if c[i] == 0.0 {
                            continue;
                        }
                        let mut row = 0.0;
                        for j in 0..n {
                            row += re[(i, j)] * c[j];
                        }
                        q += c[i] * row;
                    }
                    best = best.max(q);
                }
                best
            });
            Ok(best.into_iter().fold(0.0, f64::max).sqrt())
        }
        BesselMode::GramBound => {
            let eig = SymmetricEigen::new(g.clone());
            let top = eig.eigenvalues.iter().cloned().fold(0.0f64, f64::max);
            Ok((top * n as f64).sqrt())
        }
    }
}

/// Exhaustive when allowed, otherwise the Gram bound.
pub fn bessel_constant_auto(fam: &FunctionFamily) -> Result<f64> {
    let mode = if fam.len() <= EXHAUSTIVE_MAX { BesselMode::Exhaustive } else { BesselMode::GramBound };
    bessel_constant(fam, mode)
}

/// `‖ sup_{1≤n≤N} |Σ_{j≤n} φ_j| ‖₂` by a cellwise running maximum.
pub fn max_partial_sum_norm(fam: &FunctionFamily) -> f64 {
    let cells = fam.dense.first().map_or(0, Vec::len);
    let mut sum = vec![Complex64::new(0.0, 0.0); cells];
    let mut best = vec![0.0f64; cells];
    for phi in &fam.dense {
        for ((s, b), v) in sum.iter_mut().zip(best.iter_mut()).zip(phi) {
            *s += v;
            *b = b.max(s.norm());
        }
    }
    (best.iter().map(|b| b * b).sum::<f64>() * fam.grid.h()).sqrt()
}

/// `β_u = Σ_{(K,s) ∈ 𝓜_u} T_{K,s} b` over the generations of the pairs.
pub fn beta_functions(d: &CzDecomposition, pairs: &[(DyadicCube, i32)], p: &BiPoly) -> Result<Vec<GridFunction<Complex64>>> {
    let grid = d.grid;
    let mut out = Vec::new();
    for gen in generations(pairs) {
        let mut beta = GridFunction::<Complex64>::window(grid, 0, 0);
        for i in gen {
            let (cube, s) = &pairs[i];
            beta.accumulate(&apply_t_ks(d, cube, *s, p)?)?;
        }
        out.push(beta);
    }
    Ok(out)
}

/// `|⟨β_u, β_v⟩|`; empty input gives an empty matrix.
pub fn beta_orthogonality(betas: &[GridFunction<Complex64>]) -> Result<DMatrix<f64>> {
    if betas.is_empty() {
        return Ok(DMatrix::zeros(0, 0));
    }
    let fam = FunctionFamily::new(betas)?;
    Ok(fam.gram.map(|z| z.norm()))
}

/// Off-diagonal decay of an orthogonality matrix.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BetaDecay {
    /// `(|u − v|, mean |⟨β_u, β_v⟩|)` for each lag with a nonzero mean.
    pub lags: Vec<(usize, f64)>,
    /// Fit of `log₂(mean)` against the lag; `-slope` is the decay rate.
    pub fit: Option<LineFit>,
}

pub fn beta_decay(m: &DMatrix<f64>) -> BetaDecay {
    let n = m.nrows();
    let mut lags = Vec::new();
    for lag in 1..n {
        let vals: Vec<f64> = (0..n - lag).map(|u| m[(u, u + lag)]).collect();
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        if mean > 0.0 {
            lags.push((lag, mean));
        }
    }
    let fit = if lags.len() >= 2 {
        let xs: Vec<f64> = lags.iter().map(|l| l.0 as f64).collect();
        let ys: Vec<f64> = lags.iter().map(|l| l.1.log2()).collect();
        line_fit(&xs, &ys).ok()
    } else {
        None
    };
    BetaDecay { lags, fit }
}
