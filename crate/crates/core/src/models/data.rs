use nalgebra::{DMatrix, DVector};

use crate::error::{InfluenceError, Result};

/// One cluster: responses `y_i`, design rows `x_i` (`m_i × q₁`) and optional
/// per-observation covariate `d_i` for variance functions.
#[derive(Debug, Clone, PartialEq)]
pub struct Cluster {
    pub id: String,
    pub y: DVector<f64>,
    pub x: DMatrix<f64>,
    pub d: Option<DVector<f64>>,
    /// Observation labels; positions `1..=m_i` when absent.
    pub obs_index: Option<Vec<i64>>,
}

impl Cluster {
    pub fn new(id: impl Into<String>, y: DVector<f64>, x: DMatrix<f64>) -> Self {
        Self { id: id.into(), y, x, d: None, obs_index: None }
    }

    pub fn with_d(mut self, d: DVector<f64>) -> Self {
        self.d = Some(d);
        self
    }

    pub fn size(&self) -> usize {
        self.y.len()
    }

    pub fn obs_label(&self, l: usize) -> String {
        match &self.obs_index {
            Some(idx) => idx[l].to_string(),
            None => (l + 1).to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusteredDataset {
    clusters: Vec<Cluster>,
    q1: usize,
}

impl ClusteredDataset {
    pub fn new(clusters: Vec<Cluster>) -> Result<Self> {
        let first =
            clusters.first().ok_or_else(|| InfluenceError::InvalidParameter("dataset has no clusters".into()))?;
        let q1 = first.x.ncols();
        for c in &clusters {
            let m = c.size();
            if m == 0 {
                return Err(InfluenceError::InvalidParameter(format!("cluster `{}` is empty", c.id)));
            }
            if c.x.nrows() != m || c.x.ncols() != q1 {
                return Err(InfluenceError::DimensionMismatch { expected: q1, got: c.x.ncols() });
            }
            if let Some(d) = &c.d {
                if d.len() != m {
                    return Err(InfluenceError::DimensionMismatch { expected: m, got: d.len() });
                }
            }
            if let Some(idx) = &c.obs_index {
                if idx.len() != m {
                    return Err(InfluenceError::DimensionMismatch { expected: m, got: idx.len() });
                }
            }
            let finite = c.y.iter().chain(c.x.iter()).chain(c.d.iter().flat_map(|d| d.iter())).all(|v| v.is_finite());
            if !finite {
                return Err(InfluenceError::NonFiniteValue(format!("cluster `{}`", c.id)));
            }
        }
        Ok(Self { clusters, q1 })
    }

    /// Independent observations, one per cluster, labelled `1..=n`.
    pub fn from_rows(y: DVector<f64>, x: DMatrix<f64>) -> Result<Self> {
        if x.nrows() != y.len() {
            return Err(InfluenceError::DimensionMismatch { expected: y.len(), got: x.nrows() });
        }
        let clusters = (0..y.len())
            .map(|i| Cluster::new((i + 1).to_string(), DVector::from_element(1, y[i]), x.rows(i, 1).into_owned()))
            .collect();
        Self::new(clusters)
    }

    pub fn clusters(&self) -> &[Cluster] {
        &self.clusters
    }

    pub fn n(&self) -> usize {
        self.clusters.len()
    }

    pub fn q1(&self) -> usize {
        self.q1
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.clusters.iter().map(Cluster::size).collect()
    }

    /// Total number of observations `M = Σ m_i`.
    pub fn total(&self) -> usize {
        self.clusters.iter().map(Cluster::size).sum()
    }

    pub fn stacked_y(&self) -> DVector<f64> {
        DVector::from_iterator(self.total(), self.clusters.iter().flat_map(|c| c.y.iter().copied()))
    }

    pub fn stacked_x(&self) -> DMatrix<f64> {
        let mut x = DMatrix::zeros(self.total(), self.q1);
        let mut r = 0;
        for c in &self.clusters {
            x.rows_mut(r, c.size()).copy_from(&c.x);
            r += c.size();
        }
        x
    }

    /// Labels of individual observations: the cluster id when every cluster
    /// is a singleton, `id:l` otherwise.
    pub fn observation_labels(&self) -> Vec<String> {
        let singletons = self.clusters.iter().all(|c| c.size() == 1);
        self.clusters
            .iter()
            .flat_map(|c| {
                (0..c.size())
                    .map(move |l| if singletons { c.id.clone() } else { format!("{}:{}", c.id, c.obs_label(l)) })
            })
            .collect()
    }

    pub fn cluster_labels(&self) -> Vec<String> {
        self.clusters.iter().map(|c| c.id.clone()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sizes_and_labels() {
        let c1 = Cluster::new("A", DVector::from_vec(vec![1.0, 2.0]), DMatrix::from_element(2, 1, 1.0));
        let c2 = Cluster::new("B", DVector::from_vec(vec![3.0]), DMatrix::from_element(1, 1, 1.0));
        let d = ClusteredDataset::new(vec![c1, c2]).unwrap();
        assert_eq!(d.n(), 2);
        assert_eq!(d.sizes(), vec![2, 1]);
        assert_eq!(d.total(), 3);
        assert_eq!(d.observation_labels(), vec!["A:1", "A:2", "B:1"]);
    }

    #[test]
    fn mismatched_columns_are_rejected() {
        let c1 = Cluster::new("A", DVector::from_vec(vec![1.0]), DMatrix::from_element(1, 2, 1.0));
        let c2 = Cluster::new("B", DVector::from_vec(vec![3.0]), DMatrix::from_element(1, 1, 1.0));
        assert!(ClusteredDataset::new(vec![c1, c2]).is_err());
    }
}
