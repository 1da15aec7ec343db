//! Sparse rank-3 arrays for skewness tensors and Christoffel symbols.
//!
//! Most built-in schemes have diagonal (`δ_ij δ_ik`) or vanishing tensors, and
//! per-observation schemes can have `p` in the hundreds, so storage is a
//! sorted map of nonzero entries.

use std::collections::BTreeMap;

use nalgebra::DMatrix;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Tensor3 {
    dim: usize,
    entries: BTreeMap<(usize, usize, usize), f64>,
}

impl Tensor3 {
    pub fn zeros(dim: usize) -> Self {
        Self { dim, entries: BTreeMap::new() }
    }

    /// Tensor with `values[i]` at `(i, i, i)` and zeros elsewhere.
    pub fn diagonal(values: &[f64]) -> Self {
        let mut t = Self::zeros(values.len());
        for (i, &v) in values.iter().enumerate() {
            t.set(i, i, i, v);
        }
        t
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.entries.get(&(i, j, k)).copied().unwrap_or(0.0)
    }

    pub fn set(&mut self, i: usize, j: usize, k: usize, v: f64) {
        debug_assert!(i < self.dim && j < self.dim && k < self.dim);
        if v == 0.0 {
            self.entries.remove(&(i, j, k));
        } else {
            self.entries.insert((i, j, k), v);
        }
    }

    pub fn add(&mut self, i: usize, j: usize, k: usize, v: f64) {
        if v != 0.0 {
            *self.entries.entry((i, j, k)).or_insert(0.0) += v;
        }
    }

    /// Nonzero entries in lexicographic index order.
    pub fn iter(&self) -> impl Iterator<Item = ((usize, usize, usize), f64)> + '_ {
        self.entries.iter().map(|(&k, &v)| (k, v))
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn is_zero(&self) -> bool {
        self.entries.values().all(|&v| v == 0.0)
    }

    pub fn scale(&self, k: f64) -> Self {
        let mut out = Self::zeros(self.dim);
        for (idx, v) in self.iter() {
            out.add(idx.0, idx.1, idx.2, k * v);
        }
        out
    }

    /// `self + k * other`.
    pub fn axpy(&self, k: f64, other: &Tensor3) -> Self {
        let mut out = self.clone();
        for ((i, j, k_), v) in other.iter() {
            out.add(i, j, k_, k * v);
        }
        out
    }

    pub fn max_abs(&self) -> f64 {
        self.entries.values().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn max_abs_diff(&self, other: &Tensor3) -> f64 {
        let mut m = 0.0_f64;
        for (idx, v) in self.iter() {
            m = m.max((v - other.get(idx.0, idx.1, idx.2)).abs());
        }
        for (idx, v) in other.iter() {
            m = m.max((v - self.get(idx.0, idx.1, idx.2)).abs());
        }
        m
    }

    /// `out_abc = Σ_ijk t_ijk Ψ_ia Ψ_jb Ψ_kc` for a `p × p'` matrix Ψ.
    pub fn contract(&self, psi: &DMatrix<f64>) -> Tensor3 {
        let rows: Vec<Vec<(usize, f64)>> = (0..psi.nrows())
            .map(|i| {
                (0..psi.ncols())
                    .filter_map(|a| {
                        let v = psi[(i, a)];
                        (v != 0.0).then_some((a, v))
                    })
                    .collect()
            })
            .collect();
        let mut out = Tensor3::zeros(psi.ncols());
        for ((i, j, k), t) in self.iter() {
            for &(a, pa) in &rows[i] {
                for &(b, pb) in &rows[j] {
                    for &(c, pc) in &rows[k] {
                        out.add(a, b, c, t * pa * pb * pc);
                    }
                }
            }
        }
        out
    }

    /// `v_k = Σ_ij t_ijk a_i b_j` contracted on the first two slots.
    pub fn contract_first_two(&self, a: &[f64], b: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        for ((i, j, k), t) in self.iter() {
            out[k] += t * a[i] * b[j];
        }
        out
    }

    /// `m_ij = Σ_s t_ijs v_s` contracted on the last slot.
    pub fn contract_last(&self, v: &[f64]) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.dim, self.dim);
        for ((i, j, s), t) in self.iter() {
            out[(i, j)] += t * v[s];
        }
        out
    }

    /// Largest deviation from symmetry under swapping the first two slots.
    pub fn asymmetry_first_two(&self) -> f64 {
        self.iter().map(|((i, j, k), v)| (v - self.get(j, i, k)).abs()).fold(0.0, f64::max)
    }

    /// Largest deviation from full symmetry under all index permutations.
    pub fn asymmetry_full(&self) -> f64 {
        self.iter()
            .map(|((i, j, k), v)| {
                [(i, k, j), (j, i, k), (j, k, i), (k, i, j), (k, j, i)]
                    .iter()
                    .map(|&(a, b, c)| (v - self.get(a, b, c)).abs())
                    .fold(0.0, f64::max)
            })
            .fold(0.0, f64::max)
    }
}
