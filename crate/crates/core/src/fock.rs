//! Truncated symmetric Fock space over the grid nodes.
//!
//! States are stored in the *value representation*: a vector holds the value
//! `ψ⁽ⁿ⁾(M)` of the symmetric wavefunction at each sorted multiset `M` of node
//! indices. The discrete scalar product carries the measure
//! `μ(M) = n!/Π_c m_c! · Π_{q∈M} w_q`, which counts the ordered tuples that
//! collapse onto `M`. Operators are real matrices in the same representation;
//! their Hilbert-space adjoint is `A*_{MN} = μ(N)/μ(M) · A_{NM}`.

use std::collections::{BTreeMap, HashMap};

use itertools::Itertools;
use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{Error, Result};
use crate::grid::MomentumGrid;

/// `C(n_nodes + n - 1, n)` for each sector `n <= n_max`, saturating.
pub fn sector_sizes(n_nodes: usize, n_max: usize) -> Vec<u128> {
    (0..=n_max)
        .map(|n| {
            if n == 0 {
                return 1;
            }
            if n_nodes == 0 {
                return 0;
            }
            // C(n_nodes + n - 1, n), exact in u128 for any size we could enumerate
            let top = (n_nodes + n - 1) as u128;
            let mut c: u128 = 1;
            for i in 0..n as u128 {
                c = c.saturating_mul(top - i) / (i + 1);
            }
            c
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct FockBasis {
    n_max: usize,
    n_nodes: usize,
    elements: Vec<Box<[u32]>>,
    offsets: Vec<usize>,
    index: HashMap<Box<[u32]>, usize>,
}

/// Enumerates every multiset of grid nodes with at most `n_max` entries,
/// sector by sector in lexicographic order.
pub fn enumerate_basis(grid: &MomentumGrid, n_max: usize, max_dim: Option<usize>) -> Result<FockBasis> {
    FockBasis::new(grid.len(), n_max, max_dim)
}

impl FockBasis {
    pub fn new(n_nodes: usize, n_max: usize, max_dim: Option<usize>) -> Result<Self> {
        let total: u128 = sector_sizes(n_nodes, n_max).iter().fold(0u128, |a, b| a.saturating_add(*b));
        if let Some(cap) = max_dim {
            if total > cap as u128 {
                return Err(Error::ResourceLimit {
                    dimension: usize::try_from(total).unwrap_or(usize::MAX),
                    cap,
                });
            }
        }
        let dim = usize::try_from(total).map_err(|_| Error::ResourceLimit {
            dimension: usize::MAX,
            cap: max_dim.unwrap_or(usize::MAX),
        })?;

        let mut elements: Vec<Box<[u32]>> = Vec::with_capacity(dim);
        let mut offsets = Vec::with_capacity(n_max + 2);
        for n in 0..=n_max {
            offsets.push(elements.len());
            if n == 0 {
                elements.push(Box::new([]));
                continue;
            }
            for combo in (0..n_nodes as u32).combinations_with_replacement(n) {
                elements.push(combo.into_boxed_slice());
            }
        }
        offsets.push(elements.len());
        let index = elements.iter().enumerate().map(|(i, m)| (m.clone(), i)).collect();
        Ok(Self {
            n_max,
            n_nodes,
            elements,
            offsets,
            index,
        })
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn dim(&self) -> usize {
        self.elements.len()
    }

    pub fn sector_range(&self, n: usize) -> std::ops::Range<usize> {
        self.offsets[n]..self.offsets[n + 1]
    }

    pub fn sector_len(&self, n: usize) -> usize {
        self.offsets[n + 1] - self.offsets[n]
    }

    pub fn sector_lens(&self) -> Vec<usize> {
        (0..=self.n_max).map(|n| self.sector_len(n)).collect()
    }

    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    pub fn element(&self, i: usize) -> &[u32] {
        &self.elements[i]
    }

    pub fn elements(&self) -> impl ExactSizeIterator<Item = &[u32]> {
        self.elements.iter().map(|m| &**m)
    }

    /// Particle number of basis element `i`.
    pub fn sector_of(&self, i: usize) -> usize {
        self.elements[i].len()
    }

    pub fn lookup(&self, multiset: &[u32]) -> Option<usize> {
        self.index.get(multiset).copied()
    }

    /// Index of `M ∪ {q}`, or `None` if it falls outside the truncation.
    pub fn insert(&self, i: usize, q: u32) -> Option<usize> {
        let m = &self.elements[i];
        if m.len() >= self.n_max {
            return None;
        }
        let pos = m.partition_point(|&x| x <= q);
        let mut buf = Vec::with_capacity(m.len() + 1);
        buf.extend_from_slice(&m[..pos]);
        buf.push(q);
        buf.extend_from_slice(&m[pos..]);
        self.lookup(&buf)
    }

    /// Index of `M` with one copy of node `q` removed.
    pub fn remove(&self, i: usize, q: u32) -> Option<usize> {
        let m = &self.elements[i];
        let pos = m.iter().position(|&x| x == q)?;
        let mut buf = Vec::with_capacity(m.len() - 1);
        buf.extend_from_slice(&m[..pos]);
        buf.extend_from_slice(&m[pos + 1..]);
        self.lookup(&buf)
    }

    /// Distinct nodes of element `i` with their multiplicities.
    pub fn multiplicities(&self, i: usize) -> Vec<(u32, usize)> {
        self.elements[i]
            .iter()
            .chunk_by(|&&q| q)
            .into_iter()
            .map(|(q, group)| (q, group.count()))
            .collect()
    }

    /// `(-1)^n` per basis element, the action of `Γ(-1)`.
    pub fn parity_signs(&self) -> Vec<f64> {
        self.elements
            .iter()
            .map(|m| if m.len() % 2 == 0 { 1.0 } else { -1.0 })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeasureWeights(Vec<f64>);

impl MeasureWeights {
    pub fn new(basis: &FockBasis, grid: &MomentumGrid) -> Self {
        let weights = (0..basis.dim())
            .map(|i| {
                let m = basis.element(i);
                let mut value = factorial(m.len());
                for (q, count) in basis.multiplicities(i) {
                    value *= grid.weight(q as usize).powi(count as i32) / factorial(count);
                }
                value
            })
            .collect();
        Self(weights)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, i: usize) -> f64 {
        self.0[i]
    }
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

#[derive(Debug, Clone, PartialEq)]
pub struct FockVector {
    pub values: DVector<f64>,
}

impl FockVector {
    pub fn zeros(basis: &FockBasis) -> Self {
        Self {
            values: DVector::zeros(basis.dim()),
        }
    }

    pub fn from_values(values: DVector<f64>) -> Self {
        Self { values }
    }

    pub fn vacuum(basis: &FockBasis) -> Self {
        Self::indicator(basis, 0)
    }

    pub fn indicator(basis: &FockBasis, i: usize) -> Self {
        let mut v = Self::zeros(basis);
        v.values[i] = 1.0;
        v
    }

    /// Independent standard normal values, optionally restricted to sectors `>= min_sector`.
    pub fn random<R: Rng>(basis: &FockBasis, rng: &mut R, min_sector: usize) -> Self {
        let mut v = Self::zeros(basis);
        for i in basis.offsets()[min_sector.min(basis.n_max() + 1)]..basis.dim() {
            v.values[i] = standard_normal(rng);
        }
        v
    }

    pub fn sector<'a>(&'a self, basis: &FockBasis, n: usize) -> &'a [f64] {
        &self.values.as_slice()[basis.sector_range(n)]
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn norm(&self, mu: &MeasureWeights) -> f64 {
        weighted_dot(self.values.as_slice(), self.values.as_slice(), mu.as_slice()).sqrt()
    }
}

pub(crate) fn standard_normal<R: Rng>(rng: &mut R) -> f64 {
    // Box–Muller; rand's distributions live in a separate crate.
    let u1: f64 = rng.random::<f64>().max(f64::MIN_POSITIVE);
    let u2: f64 = rng.random();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

pub fn inner_product(phi: &FockVector, psi: &FockVector, mu: &MeasureWeights) -> Result<f64> {
    if phi.len() != mu.len() {
        return Err(Error::ShapeMismatch { expected: mu.len(), found: phi.len() });
    }
    if psi.len() != mu.len() {
        return Err(Error::ShapeMismatch { expected: mu.len(), found: psi.len() });
    }
    Ok(weighted_dot(phi.values.as_slice(), psi.values.as_slice(), mu.as_slice()))
}

fn weighted_dot(a: &[f64], b: &[f64], w: &[f64]) -> f64 {
    a.iter().zip(b).zip(w).map(|((x, y), w)| w * x * y).sum()
}

/// One sector-to-sector block in compressed-row form (local indices).
#[derive(Debug, Clone, PartialEq)]
pub struct SparseBlock {
    pub rows: usize,
    pub cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl SparseBlock {
    fn from_triplets(rows: usize, cols: usize, mut triplets: Vec<(usize, usize, f64)>) -> Self {
        triplets.sort_by_key(|t| (t.0, t.1));
        let mut row_ptr = vec![0; rows + 1];
        let mut col_idx = Vec::with_capacity(triplets.len());
        let mut values: Vec<f64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in triplets {
            if last == Some((r, c)) {
                *values.last_mut().expect("duplicate follows an entry") += v;
                continue;
            }
            row_ptr[r + 1] += 1;
            col_idx.push(c);
            values.push(v);
            last = Some((r, c));
        }
        for r in 0..rows {
            row_ptr[r + 1] += row_ptr[r];
        }
        Self {
            rows,
            cols,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.rows).flat_map(move |r| {
            (self.row_ptr[r]..self.row_ptr[r + 1]).map(move |k| (r, self.col_idx[k], self.values[k]))
        })
    }
}

/// Operator on the truncated Fock space stored as sparse sector blocks,
/// keyed by `(output sector, input sector)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SectorBlockMatrix {
    offsets: Vec<usize>,
    blocks: BTreeMap<(usize, usize), SparseBlock>,
}

impl SectorBlockMatrix {
    /// Assemble from global `(row, col, value)` triplets; duplicates are summed.
    pub fn from_triplets<I>(basis: &FockBasis, triplets: I) -> Self
    where
        I: IntoIterator<Item = (usize, usize, f64)>,
    {
        Self::from_triplets_with_offsets(basis.offsets().to_vec(), triplets)
    }

    fn from_triplets_with_offsets<I>(offsets: Vec<usize>, triplets: I) -> Self
    where
        I: IntoIterator<Item = (usize, usize, f64)>,
    {
        let sector = |i: usize| offsets.partition_point(|&o| o <= i) - 1;
        let mut grouped: BTreeMap<(usize, usize), Vec<(usize, usize, f64)>> = BTreeMap::new();
        for (r, c, v) in triplets {
            let (so, si) = (sector(r), sector(c));
            debug_assert!(so.abs_diff(si) <= 1, "blocks couple at most neighbouring sectors");
            grouped
                .entry((so, si))
                .or_default()
                .push((r - offsets[so], c - offsets[si], v));
        }
        let blocks = grouped
            .into_iter()
            .map(|((so, si), t)| {
                let rows = offsets[so + 1] - offsets[so];
                let cols = offsets[si + 1] - offsets[si];
                ((so, si), SparseBlock::from_triplets(rows, cols, t))
            })
            .collect();
        Self { offsets, blocks }
    }

    pub fn diagonal(basis: &FockBasis, values: &[f64]) -> Self {
        Self::from_triplets(basis, values.iter().enumerate().map(|(i, &v)| (i, i, v)))
    }

    pub fn zeros(basis: &FockBasis) -> Self {
        Self {
            offsets: basis.offsets().to_vec(),
            blocks: BTreeMap::new(),
        }
    }

    pub fn dim(&self) -> usize {
        *self.offsets.last().expect("offsets hold at least the end marker")
    }

    pub fn block(&self, out_sector: usize, in_sector: usize) -> Option<&SparseBlock> {
        self.blocks.get(&(out_sector, in_sector))
    }

    pub fn block_keys(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.blocks.keys().copied()
    }

    pub fn nnz(&self) -> usize {
        self.blocks.values().map(SparseBlock::nnz).sum()
    }

    /// Global `(row, col, value)` entries.
    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.blocks.iter().flat_map(move |(&(so, si), b)| {
            let (ro, co) = (self.offsets[so], self.offsets[si]);
            b.iter().map(move |(r, c, v)| (r + ro, c + co, v))
        })
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.entries()
            .filter(|&(r, c, _)| r == row && c == col)
            .map(|(_, _, v)| v)
            .sum()
    }

    pub fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut y = DVector::zeros(self.dim());
        for (r, c, v) in self.entries() {
            y[r] += v * x[c];
        }
        y
    }

    pub fn apply_vector(&self, x: &FockVector) -> FockVector {
        FockVector::from_values(self.apply(&x.values))
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.dim();
        let mut m = DMatrix::zeros(n, n);
        for (r, c, v) in self.entries() {
            m[(r, c)] += v;
        }
        m
    }

    /// Hilbert-space adjoint with respect to the measure `μ`.
    pub fn adjoint(&self, mu: &MeasureWeights) -> Self {
        let w = mu.as_slice();
        Self::from_triplets_with_offsets(
            self.offsets.clone(),
            self.entries().map(|(r, c, v)| (c, r, v * w[r] / w[c])).collect::<Vec<_>>(),
        )
    }

    /// `diag(d) · A`.
    pub fn scale_rows(&self, d: &[f64]) -> Self {
        self.map_entries(|r, _, v| v * d[r])
    }

    /// `A · diag(d)`.
    pub fn scale_cols(&self, d: &[f64]) -> Self {
        self.map_entries(|_, c, v| v * d[c])
    }

    pub fn scaled(&self, s: f64) -> Self {
        self.map_entries(|_, _, v| v * s)
    }

    fn map_entries<F: Fn(usize, usize, f64) -> f64>(&self, f: F) -> Self {
        Self::from_triplets_with_offsets(
            self.offsets.clone(),
            self.entries().map(|(r, c, v)| (r, c, f(r, c, v))).collect::<Vec<_>>(),
        )
    }

    pub fn min_entry(&self) -> Option<f64> {
        self.entries().map(|(_, _, v)| v).reduce(f64::min)
    }

    pub fn max_entry(&self) -> Option<f64> {
        self.entries().map(|(_, _, v)| v).reduce(f64::max)
    }
}

/// Dense adjoint in the value representation.
pub fn dense_adjoint(a: &DMatrix<f64>, mu: &MeasureWeights) -> DMatrix<f64> {
    let w = mu.as_slice();
    DMatrix::from_fn(a.ncols(), a.nrows(), |m, n| a[(n, m)] * w[n] / w[m])
}

/// `W^{1/2} A W^{-1/2}`, the matrix of `A` in an orthonormal basis.
pub fn weighted_similarity(a: &DMatrix<f64>, mu: &MeasureWeights) -> DMatrix<f64> {
    let s: Vec<f64> = mu.as_slice().iter().map(|w| w.sqrt()).collect();
    DMatrix::from_fn(a.nrows(), a.ncols(), |r, c| a[(r, c)] * s[r] / s[c])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{build_grid, GridConfig, GridScheme};
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn grid(n_radial: usize, n_angular: usize) -> MomentumGrid {
        build_grid(&GridConfig {
            r_min: 0.5,
            r_max: 4.0,
            n_radial,
            n_angular,
            scheme: GridScheme::ProductGauss,
        })
        .unwrap()
    }

    #[test]
    fn sector_sizes_by_stars_and_bars() {
        let b = FockBasis::new(3, 2, None).unwrap();
        assert_eq!(b.sector_lens(), vec![1, 3, 6]);
        assert_eq!(b.dim(), 10);
        let b = FockBasis::new(1, 4, None).unwrap();
        assert_eq!(b.sector_lens(), vec![1; 5]);
    }

    #[test]
    fn binomial_oracle_for_48_nodes() {
        let g = grid(8, 6);
        let b = enumerate_basis(&g, 3, None).unwrap();
        // C(47 + n, n) computed by the multiplicative formula in exact integers
        let oracle: Vec<usize> = (0..=3usize)
            .map(|n| {
                let mut c: u128 = 1;
                for i in 0..n as u128 {
                    c = c * (47 + n as u128 - i) / (i + 1);
                }
                c as usize
            })
            .collect();
        assert_eq!(oracle, vec![1, 48, 1176, 19600]);
        assert_eq!(b.sector_lens(), oracle);
        assert_eq!(sector_sizes(48, 3), vec![1, 48, 1176, 19600]);
    }

    #[test]
    fn dimension_cap() {
        let err = FockBasis::new(48, 3, Some(1000)).unwrap_err();
        assert!(matches!(err, Error::ResourceLimit { dimension: 20825, cap: 1000 }));
    }

    #[test]
    fn vacuum_and_lookups() {
        let b = FockBasis::new(3, 2, None).unwrap();
        assert!(b.element(0).is_empty());
        for i in 0..b.dim() {
            assert_eq!(b.lookup(b.element(i)), Some(i));
            for q in 0..3 {
                if b.sector_of(i) < 2 {
                    let j = b.insert(i, q).unwrap();
                    assert_eq!(b.sector_of(j), b.sector_of(i) + 1);
                    assert_eq!(b.remove(j, q), Some(i));
                } else {
                    assert_eq!(b.insert(i, q), None);
                }
            }
        }
        assert_eq!(b.element(b.sector_range(2).start), &[0, 0]);
    }

    #[test]
    fn enumeration_is_deterministic() {
        let a = FockBasis::new(5, 3, None).unwrap();
        let b = FockBasis::new(5, 3, None).unwrap();
        assert!(a.elements().eq(b.elements()));
    }

    #[test]
    fn measure_and_inner_products() {
        let g = grid(1, 6);
        let b = enumerate_basis(&g, 2, None).unwrap();
        let mu = MeasureWeights::new(&b, &g);
        assert_eq!(mu.get(0), 1.0);
        assert!(mu.as_slice().iter().all(|&w| w > 0.0));

        let vac = FockVector::vacuum(&b);
        assert_eq!(inner_product(&vac, &vac, &mu).unwrap(), 1.0);
        let one = FockVector::indicator(&b, 1);
        assert_relative_eq!(inner_product(&one, &one, &mu).unwrap(), g.weight(0), epsilon = 1e-15);

        // {0,0} is counted once, {0,1} twice
        let i00 = b.lookup(&[0, 0]).unwrap();
        let i01 = b.lookup(&[0, 1]).unwrap();
        assert_relative_eq!(mu.get(i00), g.weight(0).powi(2), epsilon = 1e-14);
        assert_relative_eq!(mu.get(i01), 2.0 * g.weight(0) * g.weight(1), epsilon = 1e-14);
    }

    #[test]
    fn inner_product_matches_direct_summation() {
        let g = grid(2, 6);
        let b = enumerate_basis(&g, 2, None).unwrap();
        let mu = MeasureWeights::new(&b, &g);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let phi = FockVector::random(&b, &mut rng, 0);
        let psi = FockVector::random(&b, &mut rng, 0);
        let mut oracle = 0.0;
        for i in 0..b.dim() {
            oracle += mu.get(i) * phi.values[i] * psi.values[i];
        }
        assert_relative_eq!(inner_product(&phi, &psi, &mu).unwrap(), oracle, max_relative = 1e-14);

        let short = FockVector::from_values(DVector::zeros(3));
        assert!(matches!(inner_product(&short, &psi, &mu), Err(Error::ShapeMismatch { .. })));
    }

    #[test]
    fn adjoint_of_diagonal_and_involution() {
        let g = grid(2, 6);
        let b = enumerate_basis(&g, 2, None).unwrap();
        let mu = MeasureWeights::new(&b, &g);
        let diag: Vec<f64> = (0..b.dim()).map(|i| i as f64 + 0.5).collect();
        let d = SectorBlockMatrix::diagonal(&b, &diag);
        let ddiff = (d.adjoint(&mu).to_dense() - d.to_dense()).abs().max();
        assert!(ddiff <= 1e-13 * b.dim() as f64);

        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let raising = SectorBlockMatrix::from_triplets(
            &b,
            (0..b.dim()).flat_map(|i| {
                (0..g.len() as u32)
                    .filter_map(|q| b.insert(i, q).map(|j| (j, i, 0.0)))
                    .collect::<Vec<_>>()
            })
            .map(|(r, c, _)| (r, c, standard_normal(&mut rng)))
            .collect::<Vec<_>>(),
        );
        let back = raising.adjoint(&mu).adjoint(&mu);
        let diff = (back.to_dense() - raising.to_dense()).abs().max();
        assert!(diff <= 1e-14 * raising.to_dense().abs().max());
    }
}
