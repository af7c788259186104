//! Sparse collections with explicit witnesses, sparse forms, the stopping
//! family built from `f` and `g`, and domination ratios.

use serde::{Deserialize, Serialize};

use crate::dyadic::{DyadicCube, GridMask, MaskGeometry};
use crate::error::{invalid, Error, Result};
use crate::kernel::CzKernel;
use crate::operator::{apply_maximal, Grid, GridFunction};
use crate::polynomial::BiPoly;
use crate::random::finest_dyadic_level;

/// Cubes `S` of a one-dimensional grid with witnesses `E_S`.
#[derive(Clone, Debug)]
pub struct SparseCollection {
    pub grid: Grid,
    pub cubes: Vec<DyadicCube>,
    pub witnesses: Vec<GridMask>,
}

impl SparseCollection {
    fn geometry(grid: &Grid) -> MaskGeometry {
        MaskGeometry::new(vec![0.0], grid.side(), grid.n).expect("valid geometry")
    }

    /// `E_S = S` for a single cube.
    pub fn single(grid: Grid, cube: DyadicCube) -> Result<Self> {
        let (a, b) = grid.cube_cells(&cube)?;
        let mut w = GridMask::empty(Self::geometry(&grid));
        for i in a..b {
            w.set(i as usize, true);
        }
        Ok(SparseCollection { grid, cubes: vec![cube], witnesses: vec![w] })
    }

    /// `|E_S| / |S|` for every member.
    pub fn witness_ratios(&self) -> Vec<f64> {
        self.cubes.iter().zip(&self.witnesses).map(|(c, w)| w.measure() / c.side()).collect()
    }

    /// Check the three witness conditions: `E_S ⊂ S`, pairwise disjoint,
    /// `|E_S| > ¼|S|`.
    pub fn validate(&self) -> Result<()> {
        if self.cubes.len() != self.witnesses.len() {
            return invalid("one witness per cube is required");
        }
        let n = self.grid.n;
        let mut owner = vec![usize::MAX; n];
        for (idx, (c, w)) in self.cubes.iter().zip(&self.witnesses).enumerate() {
            if w.geometry().n != n || w.geometry().dim != 1 {
                return invalid("witness mask does not match the grid");
            }
            let (a, b) = self.grid.cube_cells(c)?;
            for i in w.ones() {
                if (i as i64) < a || (i as i64) >= b {
                    return Err(Error::Assertion(format!("witness {idx} leaves its cube at cell {i}")));
                }
                if owner[i] != usize::MAX {
                    return Err(Error::Assertion(format!("witnesses {} and {idx} overlap at cell {i}", owner[i])));
                }
                owner[i] = idx;
            }
            if !(w.measure() > 0.25 * c.side()) {
                return Err(Error::Assertion(format!("witness {idx} covers only {} of {}", w.measure(), c.side())));
            }
        }
        Ok(())
    }
}

/// `Λ_{𝓢,r,s}(f, g) = Σ_{I ∈ 𝓢} |I| ⟨f⟩_{I,r} ⟨g⟩_{I,s}`.
#[derive(Clone, Debug)]
pub struct SparseForm<'a> {
    pub collection: &'a SparseCollection,
    pub r: f64,
    pub s: f64,
}

pub fn sparse_form(form: &SparseForm, f: &GridFunction<f64>, g: &GridFunction<f64>) -> Result<f64> {
    let mut total = 0.0;
    for c in &form.collection.cubes {
        total += c.side() * f.average(c, form.r)? * g.average(c, form.s)?;
    }
    Ok(total)
}

/// A node of the stopping tree.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StoppingNode {
    pub k: i32,
    pub m: i64,
    pub parent: Option<usize>,
    pub children: Vec<usize>,
    pub avg_f: f64,
    pub avg_g: f64,
    /// `|E_S| / |S|`.
    pub witness_ratio: f64,
}

/// Parent-linked stopping tree; node 0 is `I₀`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StoppingTree {
    pub threshold: f64,
    pub nodes: Vec<StoppingNode>,
}

fn cell_prefix(f: &GridFunction<f64>) -> Vec<f64> {
    let mut p = vec![0.0];
    let mut s = 0.0;
    for v in f.values() {
        s += v;
        p.push(s);
    }
    p
}

/// Maximal dyadic `Q ⊊ P` with `⟨f⟩_Q > τ⟨f⟩_P` or `⟨g⟩_Q > τ⟨g⟩_P`.
fn stopping_children(grid: &Grid, pf: &[f64], pg: &[f64], parent: &DyadicCube, tau: f64, finest: i32) -> Result<Vec<DyadicCube>> {
    let avg = |p: &[f64], c: &DyadicCube| -> Result<f64> {
        let (a, b) = grid.cube_cells(c)?;
        Ok((p[b as usize] - p[a as usize]) / (b - a) as f64)
    };
    let (cf, cg) = (tau * avg(pf, parent)?, tau * avg(pg, parent)?);
    let mut out = Vec::new();
    if parent.k <= finest {
        return Ok(out);
    }
    let mut stack = parent.children();
    stack.reverse();
    while let Some(q) = stack.pop() {
        if avg(pf, &q)? > cf || avg(pg, &q)? > cg {
            out.push(q);
        } else if q.k > finest {
            let mut ch = q.children();
            ch.reverse();
            stack.extend(ch);
        }
    }
    Ok(out)
}

/// Recursive stopping family from the proof of the sparse bound: `I₀`,
/// then the maximal cubes where the average of `f` or `g` jumps by more
/// than `threshold` relative to the parent node, and so on down to the
/// finest dyadic level. Witnesses are `E_S = S ∖ ∪ children(S)`.
pub fn build_stopping_family(f: &GridFunction<f64>, g: &GridFunction<f64>, threshold: f64) -> Result<(SparseCollection, StoppingTree)> {
    if !(threshold > 1.0) {
        return invalid("threshold must exceed 1");
    }
    let grid = *f.grid();
    if *g.grid() != grid {
        return invalid("f and g live on different grids");
    }
    let (f, g) = (f.on_base(), g.on_base());
    if f.values().iter().chain(g.values()).any(|v| !(v.is_finite() && *v >= 0.0)) {
        return invalid("f and g must be finite and nonnegative");
    }
    let (pf, pg) = (cell_prefix(&f), cell_prefix(&g));
    let finest = finest_dyadic_level(&grid);
    let max_depth = (grid.s0 - finest + 1) as usize;
    let root = DyadicCube::interval(grid.s0, 0);
    let mut cubes = vec![root];
    let mut parents: Vec<Option<usize>> = vec![None];
    let mut depth = vec![0usize];
    let mut kids: Vec<Vec<usize>> = vec![Vec::new()];
    let mut next = 0;
    while next < cubes.len() {
        if depth[next] > max_depth {
            return Err(Error::Depth(format!("stopping recursion exceeded {max_depth} levels")));
        }
        let ch = stopping_children(&grid, &pf, &pg, &cubes[next], threshold, finest)?;
        for c in ch {
            kids[next].push(cubes.len());
            cubes.push(c);
            parents.push(Some(next));
            depth.push(depth[next] + 1);
            kids.push(Vec::new());
        }
        next += 1;
    }
    let geom = SparseCollection::geometry(&grid);
    let mut witnesses = Vec::with_capacity(cubes.len());
    let mut nodes = Vec::with_capacity(cubes.len());
    for (idx, c) in cubes.iter().enumerate() {
        let (a, b) = grid.cube_cells(c)?;
        let mut w = GridMask::empty(geom.clone());
        for i in a..b {
            w.set(i as usize, true);
        }
        for &kid in &kids[idx] {
            let (ka, kb) = grid.cube_cells(&cubes[kid])?;
            for i in ka..kb {
                w.set(i as usize, false);
            }
        }
        let ratio = w.measure() / c.side();
        nodes.push(StoppingNode {
            k: c.k,
            m: c.m[0],
            parent: parents[idx],
            children: kids[idx].clone(),
            avg_f: f.average(c, 1.0)?,
            avg_g: g.average(c, 1.0)?,
            witness_ratio: ratio,
        });
        witnesses.push(w);
    }
    Ok((SparseCollection { grid, cubes, witnesses }, StoppingTree { threshold, nodes }))
}

/// Outcome of [`domination_ratio`].
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Domination {
    /// `|⟨T_{P,*} f, g⟩|`.
    pub pairing: f64,
    /// `Λ_{𝓢,1,r}(f, g)` over the stopping family.
    pub form: f64,
    pub ratio: f64,
    pub family_size: usize,
}

/// `T_{P,*} f` over the full dyadic truncation ladder of the grid.
pub fn maximal_truncation(f: &GridFunction<f64>, p: &BiPoly, k: &dyn CzKernel) -> Result<GridFunction<f64>> {
    apply_maximal(f, p, k, &f.grid().truncation_ladder())
}

/// `|⟨T_{P,*} f, g⟩| / Λ_{𝓢(f,g),1,r}(f, g)` for a precomputed `T_{P,*} f`.
pub fn domination_from(tf: &GridFunction<f64>, f: &GridFunction<f64>, g: &GridFunction<f64>, r: f64) -> Result<Domination> {
    if !(r > 1.0 && r <= 2.0) {
        return invalid(format!("need 1 < r <= 2, got {r}"));
    }
    let pairing = tf.pair(g).norm();
    let (family, _) = build_stopping_family(f, g, 100.0)?;
    let form = sparse_form(&SparseForm { collection: &family, r: 1.0, s: r }, f, g)?;
    let ratio = if form == 0.0 {
        if pairing == 0.0 {
            0.0
        } else {
            return Err(Error::Degenerate("sparse form vanishes but the pairing does not".into()));
        }
    } else {
        pairing / form
    };
    Ok(Domination { pairing, form, ratio, family_size: family.cubes.len() })
}

/// Domination ratio of `T_{P,*}` against the stopping family's
/// `(1, r)` sparse form.
pub fn domination_ratio(f: &GridFunction<f64>, g: &GridFunction<f64>, p: &BiPoly, k: &dyn CzKernel, r: f64) -> Result<Domination> {
    let tf = maximal_truncation(f, p, k)?;
    domination_from(&tf, f, g, r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::Hilbert;
    use crate::random::{rng, step_function};
    use proptest::prelude::*;
    use rand::Rng;

    #[test]
    fn form_examples() {
        let g = Grid::new(2, 96).unwrap();
        let one = GridFunction::from_fn(g, |_| 1.0);
        let coll = SparseCollection::single(g, DyadicCube::interval(2, 0)).unwrap();
        coll.validate().unwrap();
        for (r, s) in [(1.0, 1.0), (1.0, 2.0), (3.0, 1.5)] {
            let v = sparse_form(&SparseForm { collection: &coll, r, s }, &one, &one).unwrap();
            assert!((v - 4.0).abs() < 1e-12);
        }
        let zero = GridFunction::<f64>::zeros(g);
        assert_eq!(sparse_form(&SparseForm { collection: &coll, r: 1.0, s: 1.0 }, &zero, &one).unwrap(), 0.0);
        // two nested cubes, f = 1_[0,1), g = 1_[0,2): hand expansion
        let f = GridFunction::from_fn(g, |x| if x < 1.0 { 1.0 } else { 0.0 });
        let gg = GridFunction::from_fn(g, |x| if x < 2.0 { 1.0 } else { 0.0 });
        let mut two = SparseCollection::single(g, DyadicCube::interval(2, 0)).unwrap();
        let inner = SparseCollection::single(g, DyadicCube::interval(1, 0)).unwrap();
        two.cubes.push(inner.cubes[0].clone());
        two.witnesses.push(inner.witnesses[0].clone());
        let v = sparse_form(&SparseForm { collection: &two, r: 1.0, s: 2.0 }, &f, &gg).unwrap();
        // I₀: 4 · (1/4) · (1/2)^{1/2};  [0,2): 2 · (1/2) · 1
        let want = 4.0 * 0.25 * 0.5f64.sqrt() + 2.0 * 0.5 * 1.0;
        assert!((v - want).abs() < 1e-12);
        // overlapping witnesses are rejected
        assert!(matches!(two.validate(), Err(Error::Assertion(_))));
    }

    #[test]
    fn stopping_examples() {
        let g = Grid::new(0, 768).unwrap();
        let one = GridFunction::from_fn(g, |_| 1.0);
        let (fam, tree) = build_stopping_family(&one, &one, 100.0).unwrap();
        assert_eq!(fam.cubes, vec![DyadicCube::interval(0, 0)]);
        assert_eq!(fam.witnesses[0].count(), 768);
        assert_eq!(tree.nodes.len(), 1);
        let f = GridFunction::from_fn(g, |x| if x < 1.0 / 256.0 { 201.0 } else { 1.0 });
        let (fam, tree) = build_stopping_family(&f, &one, 100.0).unwrap();
        assert_eq!(fam.cubes, vec![DyadicCube::interval(0, 0), DyadicCube::interval(-8, 0)]);
        assert_eq!(tree.nodes[0].children, vec![1]);
        fam.validate().unwrap();
        assert!(build_stopping_family(&f, &one, 1.0).is_err());
    }

    #[test]
    fn domination_examples() {
        let g = Grid::new(2, 384).unwrap();
        let zero = GridFunction::<f64>::zeros(g);
        let d = domination_ratio(&zero, &zero, &BiPoly::zero(1), &Hilbert, 1.5).unwrap();
        assert_eq!(d.ratio, 0.0);
        let mut r = rng(8);
        let f = step_function(&g, &mut r, -3, 0.3);
        let gg = step_function(&g, &mut r, -2, 0.5);
        let d = domination_ratio(&f, &gg, &BiPoly::zero(1), &Hilbert, 1.5).unwrap();
        assert!(d.ratio.is_finite() && d.ratio > 0.0);
        assert!(domination_ratio(&f, &gg, &BiPoly::zero(1), &Hilbert, 1.0).is_err());
        // r sweep: Jensen makes the form increase with r
        let tf = maximal_truncation(&f, &BiPoly::monomial_1d(1, 2, 1.0), &Hilbert).unwrap();
        let mut prev = f64::INFINITY;
        for rr in [1.1, 1.25, 1.5, 2.0] {
            let d = domination_from(&tf, &f, &gg, rr).unwrap();
            assert!(d.ratio <= prev + 1e-12);
            prev = d.ratio;
        }
    }

    #[test]
    fn ratio_is_stable_under_refinement() {
        let coarse = Grid::new(2, 768).unwrap();
        let fine = Grid::new(2, 1536).unwrap();
        let mut r = rng(21);
        let fc = step_function(&coarse, &mut r, -2, 0.3);
        let gc = step_function(&coarse, &mut r, -2, 0.5);
        let lift = |u: &GridFunction<f64>| {
            GridFunction::from_values(fine, u.values().iter().flat_map(|&v| [v, v]).collect()).unwrap()
        };
        let p = BiPoly::monomial_1d(1, 2, 1.0);
        let a = domination_ratio(&fc, &gc, &p, &Hilbert, 1.5).unwrap().ratio;
        let b = domination_ratio(&lift(&fc), &lift(&gc), &p, &Hilbert, 1.5).unwrap().ratio;
        assert!((a - b).abs() < 0.25 * a, "{a} vs {b}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn stopping_family_is_sparse(seed in 0u64..100_000) {
            let g = Grid::new(2, 768).unwrap();
            let mut r = rng(seed);
            let lf = r.random_range(-6..2);
            let lg = r.random_range(-6..2);
            let f = step_function(&g, &mut r, lf, 0.7);
            let gg = step_function(&g, &mut r, lg, 0.7);
            let (fam, _) = build_stopping_family(&f, &gg, 100.0).unwrap();
            prop_assert!(fam.validate().is_ok());
            prop_assert!(fam.witness_ratios().iter().all(|&w| w >= 0.98));
        }

        #[test]
        fn forms_are_monotone(seed in 0u64..100_000) {
            let g = Grid::new(2, 384).unwrap();
            let mut r = rng(seed);
            let f = step_function(&g, &mut r, -3, 0.5);
            let gg = step_function(&g, &mut r, -4, 0.5);
            let (fam, _) = build_stopping_family(&f, &gg, 100.0).unwrap();
            let mut sub = fam.clone();
            sub.cubes.truncate(1);
            sub.witnesses.truncate(1);
            let big = sparse_form(&SparseForm { collection: &fam, r: 1.0, s: 1.5 }, &f, &gg).unwrap();
            let small = sparse_form(&SparseForm { collection: &sub, r: 1.0, s: 1.5 }, &f, &gg).unwrap();
            prop_assert!(small <= big + 1e-12);
            let lo = sparse_form(&SparseForm { collection: &fam, r: 1.0, s: 1.2 }, &f, &gg).unwrap();
            prop_assert!(lo <= big * (1.0 + 1e-12));
        }
    }
}
