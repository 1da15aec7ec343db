//! First- and second-order influence measures (FI, SI, SSI), the classical
//! normal and conformal curvatures, covariant Hessians and eigen-profiles.

mod eigen;

use nalgebra::{DMatrix, DVector};

pub use eigen::{eigen_influence, EigenInfluence};

use crate::error::{InfluenceError, Result};
use crate::geometry::{appropriateness_report_default, AppropriatenessVerdict, GeometryAtPoint, PerturbedModel};
use crate::linalg::{frobenius, sym_inv_sqrt, symmetrize};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    ClosedForm,
    FiniteDifference,
}

/// `f(ω⁰)`, `∇_f` and `H_f` of an objective at the null point.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectiveProbe {
    pub f0: f64,
    pub grad: DVector<f64>,
    pub hess: DMatrix<f64>,
    pub provenance: Provenance,
}

impl ObjectiveProbe {
    /// The Hessian is symmetrized on construction.
    pub fn new(f0: f64, grad: DVector<f64>, hess: DMatrix<f64>, provenance: Provenance) -> Self {
        Self { f0, grad, hess: symmetrize(&hess), provenance }
    }

    pub fn dim(&self) -> usize {
        self.grad.len()
    }

    /// The probe of `k f`.
    pub fn scaled(&self, k: f64) -> Self {
        Self { f0: k * self.f0, grad: &self.grad * k, hess: &self.hess * k, provenance: self.provenance }
    }
}

fn check_dims(expected: usize, g: &DMatrix<f64>, h: &DVector<f64>) -> Result<()> {
    for got in [g.nrows(), g.ncols(), h.len()] {
        if got != expected {
            return Err(InfluenceError::DimensionMismatch { expected, got });
        }
    }
    Ok(())
}

fn metric_norm(g: &DMatrix<f64>, h: &DVector<f64>) -> Result<f64> {
    let q = h.dot(&(g * h));
    if !(q > 0.0) {
        return Err(InfluenceError::DegenerateDirection);
    }
    Ok(q)
}

/// `FI_{f,h} = (hᵀ∇_f)² / hᵀGh`.
pub fn first_order_influence(probe: &ObjectiveProbe, g: &DMatrix<f64>, h: &DVector<f64>) -> Result<f64> {
    check_dims(probe.dim(), g, h)?;
    let q = metric_norm(g, h)?;
    Ok(h.dot(&probe.grad).powi(2) / q)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FiMaximum {
    /// `∇_fᵀ G⁻¹ ∇_f`.
    pub fi_max: f64,
    /// `G^{-1/2} ∇_f` scaled to unit length with its largest entry positive;
    /// `None` when `∇_f = 0` and no direction is distinguished.
    pub h_max: Option<DVector<f64>>,
}

/// Maximum of FI over all directions and its direction in whitened
/// coordinates.
pub fn fi_maximizer(probe: &ObjectiveProbe, g: &DMatrix<f64>) -> Result<FiMaximum> {
    check_dims(probe.dim(), g, &probe.grad)?;
    let w = sym_inv_sqrt(g, 1e-12)?;
    let z = &w * &probe.grad;
    let fi_max = z.norm_squared();
    let norm = z.norm();
    let h_max = (norm > 0.0).then(|| fix_sign(z / norm));
    Ok(FiMaximum { fi_max, h_max })
}

/// Flips `v` so that its largest-magnitude entry is positive (first such
/// entry on ties).
pub fn fix_sign(v: DVector<f64>) -> DVector<f64> {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() {
            best = i;
        }
    }
    if !v.is_empty() && v[best] < 0.0 {
        -v
    } else {
        v
    }
}

/// `H̃⁰_ij = ∂_i∂_j f − Σ_{s,r} g^{sr} Γ⁰_ijs ∂_r f`.
pub fn covariant_hessian(probe: &ObjectiveProbe, geom: &GeometryAtPoint) -> Result<DMatrix<f64>> {
    if probe.dim() != geom.dim() {
        return Err(InfluenceError::DimensionMismatch { expected: geom.dim(), got: probe.dim() });
    }
    if geom.gamma0.is_zero() || probe.grad.amax() == 0.0 {
        return Ok(probe.hess.clone());
    }
    let ginv = geom.require_ginv()?;
    let v = ginv * &probe.grad;
    Ok(symmetrize(&(&probe.hess - geom.gamma0.contract_last(v.as_slice()))))
}

/// `SI_{f,h} = hᵀH̃⁰h / hᵀGh`.
pub fn second_order_influence(htilde: &DMatrix<f64>, g: &DMatrix<f64>, h: &DVector<f64>) -> Result<f64> {
    check_dims(htilde.nrows(), g, h)?;
    let q = metric_norm(g, h)?;
    Ok(h.dot(&(htilde * h)) / q)
}

/// `‖G⁻¹H̃⁰‖_M = √Σλ_i²` over the generalized eigenvalues.
pub fn hessian_metric_norm(htilde: &DMatrix<f64>, g: &DMatrix<f64>) -> Result<f64> {
    let e = eigen_influence(htilde, g)?;
    Ok(e.eigenvalues.norm())
}

/// `SSI_{f,h} = SI_{f,h} / ‖G⁻¹H̃⁰‖_M`.
pub fn standardized_si(htilde: &DMatrix<f64>, g: &DMatrix<f64>, h: &DVector<f64>) -> Result<f64> {
    let si = second_order_influence(htilde, g, h)?;
    let norm = hessian_metric_norm(htilde, g)?;
    if norm == 0.0 {
        return Err(InfluenceError::ZeroHessian);
    }
    Ok(si / norm)
}

/// Normal curvature `C_h` of the influence graph in Euclidean ω coordinates.
pub fn normal_curvature(probe: &ObjectiveProbe, h: &DVector<f64>) -> Result<f64> {
    let (num, den) = curvature_parts(probe, h)?;
    Ok(num / den / (1.0 + probe.grad.norm_squared()).sqrt())
}

/// Conformal normal curvature `B_h = hᵀHh / (‖H‖_M hᵀ(I + ∇∇ᵀ)h)`.
pub fn conformal_curvature(probe: &ObjectiveProbe, h: &DVector<f64>) -> Result<f64> {
    let (num, den) = curvature_parts(probe, h)?;
    let norm = frobenius(&probe.hess);
    if norm == 0.0 {
        return Err(InfluenceError::ZeroHessian);
    }
    Ok(num / den / norm)
}

fn curvature_parts(probe: &ObjectiveProbe, h: &DVector<f64>) -> Result<(f64, f64)> {
    if h.len() != probe.dim() {
        return Err(InfluenceError::DimensionMismatch { expected: probe.dim(), got: h.len() });
    }
    if h.amax() == 0.0 {
        return Err(InfluenceError::DegenerateDirection);
    }
    let num = h.dot(&(&probe.hess * h));
    let den = h.norm_squared() + h.dot(&probe.grad).powi(2);
    Ok((num, den))
}

/// `(C_h, B_h)`.
pub fn classical_curvatures(probe: &ObjectiveProbe, h: &DVector<f64>) -> Result<(f64, f64)> {
    Ok((normal_curvature(probe, h)?, conformal_curvature(probe, h)?))
}

#[derive(Debug, Clone, PartialEq)]
pub struct InfluenceReport {
    pub scheme: String,
    pub labels: Vec<String>,
    pub basis_fi: Vec<f64>,
    pub basis_si: Vec<f64>,
    /// `None` where SSI is undefined (identically zero covariant Hessian).
    pub basis_ssi: Vec<Option<f64>>,
    pub basis_c: Vec<f64>,
    /// `None` where `‖H_f‖_M = 0`.
    pub basis_b: Vec<Option<f64>>,
    pub eigenvalues: DVector<f64>,
    pub normalized_eigenvalues: Option<DVector<f64>>,
    pub eigenvectors: DMatrix<f64>,
    pub covariant_hessian: DMatrix<f64>,
    pub fi_max: f64,
    pub h_max: Option<DVector<f64>>,
    pub verdict: AppropriatenessVerdict,
}

/// All measures along the coordinate directions `E_i`, plus the eigen
/// profile, `h_max` and the appropriateness verdict of the geometry used.
pub fn influence_report(
    model: &PerturbedModel,
    probe: &ObjectiveProbe,
    geom: &GeometryAtPoint,
) -> Result<InfluenceReport> {
    let p = geom.dim();
    if probe.dim() != p || model.dim() != p {
        return Err(InfluenceError::DimensionMismatch { expected: p, got: probe.dim().min(model.dim()) });
    }
    let ht = covariant_hessian(probe, geom)?;
    let eig = eigen_influence(&ht, &geom.g)?;
    let ssi_norm = eig.eigenvalues.norm();
    let grad_sq = probe.grad.norm_squared();
    let h_norm = frobenius(&probe.hess);
    let mut basis_fi = Vec::with_capacity(p);
    let mut basis_si = Vec::with_capacity(p);
    let mut basis_ssi = Vec::with_capacity(p);
    let mut basis_c = Vec::with_capacity(p);
    let mut basis_b = Vec::with_capacity(p);
    for i in 0..p {
        let gii = geom.g[(i, i)];
        if !(gii > 0.0) {
            return Err(InfluenceError::DegenerateDirection);
        }
        let gi = probe.grad[i];
        basis_fi.push(gi * gi / gii);
        let si = ht[(i, i)] / gii;
        basis_si.push(si);
        basis_ssi.push((ssi_norm > 0.0).then(|| si / ssi_norm));
        let den = 1.0 + gi * gi;
        basis_c.push(probe.hess[(i, i)] / den / (1.0 + grad_sq).sqrt());
        basis_b.push((h_norm > 0.0).then(|| probe.hess[(i, i)] / den / h_norm));
    }
    let fim = fi_maximizer(probe, &geom.g)?;
    Ok(InfluenceReport {
        scheme: model.name(),
        labels: model.labels(),
        basis_fi,
        basis_si,
        basis_ssi,
        basis_c,
        basis_b,
        eigenvalues: eig.eigenvalues,
        normalized_eigenvalues: eig.normalized,
        eigenvectors: eig.eigenvectors,
        covariant_hessian: ht,
        fi_max: fim.fi_max,
        h_max: fim.h_max,
        verdict: appropriateness_report_default(geom),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn probe(grad: &[f64], hess: DMatrix<f64>) -> ObjectiveProbe {
        ObjectiveProbe::new(0.0, DVector::from_column_slice(grad), hess, Provenance::ClosedForm)
    }

    #[test]
    fn fi_examples() {
        let p = probe(&[1.0, 2.0], DMatrix::zeros(2, 2));
        let fi = first_order_influence(&p, &DMatrix::identity(2, 2), &DVector::from_vec(vec![1.0, 0.0])).unwrap();
        assert_eq!(fi, 1.0);
        let z = probe(&[0.0, 0.0], DMatrix::zeros(2, 2));
        assert_eq!(
            first_order_influence(&z, &DMatrix::identity(2, 2), &DVector::from_vec(vec![0.3, 1.0])).unwrap(),
            0.0
        );
        let m = fi_maximizer(&z, &DMatrix::identity(2, 2)).unwrap();
        assert_eq!(m.fi_max, 0.0);
        assert!(m.h_max.is_none());
        assert!(matches!(
            first_order_influence(&p, &DMatrix::zeros(2, 2), &DVector::from_vec(vec![1.0, 0.0])),
            Err(InfluenceError::DegenerateDirection)
        ));
    }

    #[test]
    fn fi_at_natural_gradient_is_maximal() {
        let g = DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0]);
        let p = probe(&[1.0, -0.5], DMatrix::zeros(2, 2));
        let h = g.clone().try_inverse().unwrap() * &p.grad;
        let fi = first_order_influence(&p, &g, &h).unwrap();
        let m = fi_maximizer(&p, &g).unwrap();
        assert!((fi - m.fi_max).abs() < 1e-14);
    }

    #[test]
    fn si_and_ssi_examples() {
        let ht = DMatrix::from_diagonal(&DVector::from_vec(vec![4.0, 0.0]));
        let si = second_order_influence(&ht, &DMatrix::identity(2, 2), &DVector::from_vec(vec![1.0, 1.0])).unwrap();
        assert_eq!(si, 2.0);
        let ht = DMatrix::from_diagonal(&DVector::from_vec(vec![3.0, 4.0]));
        let ssi = standardized_si(&ht, &DMatrix::identity(2, 2), &DVector::from_vec(vec![0.0, 1.0])).unwrap();
        assert!((ssi - 0.8).abs() < 1e-15);
        let zero = DMatrix::zeros(2, 2);
        assert!(matches!(
            standardized_si(&zero, &DMatrix::identity(2, 2), &DVector::from_vec(vec![0.0, 1.0])),
            Err(InfluenceError::ZeroHessian)
        ));
    }

    #[test]
    fn covariant_hessian_one_dimensional_example() {
        // f(ω) = ω² at ω = 1 with g = 0.5 and Γ⁰_111 = −0.5.
        let geom = GeometryAtPoint::from_parts(
            DVector::from_vec(vec![1.0]),
            0.0,
            DMatrix::from_element(1, 1, 0.5),
            crate::tensor::Tensor3::diagonal(&[-1.0]),
            crate::tensor::Tensor3::diagonal(&[-0.5]),
            crate::geometry::GeometrySource::ClosedForm,
        );
        let p = probe(&[2.0], DMatrix::from_element(1, 1, 2.0));
        let ht = covariant_hessian(&p, &geom).unwrap();
        assert!((ht[(0, 0)] - 4.0).abs() < 1e-15);
    }

    #[test]
    fn curvature_with_zero_gradient_is_rayleigh_quotient() {
        let h = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, -2.0]);
        let p = probe(&[0.0, 0.0], h.clone());
        let dir = DVector::from_vec(vec![0.6, -1.1]);
        let c = normal_curvature(&p, &dir).unwrap();
        assert!((c - dir.dot(&(&h * &dir)) / dir.norm_squared()).abs() < 1e-15);
        let b = conformal_curvature(&p, &dir).unwrap();
        assert!((b - c / frobenius(&h)).abs() < 1e-15);
    }

    #[test]
    fn normal_curvature_is_not_scale_invariant() {
        let p = probe(&[0.8, -0.4], DMatrix::from_row_slice(2, 2, &[1.0, 0.2, 0.2, 0.5]));
        let h = DVector::from_vec(vec![1.0, 1.0]);
        let c1 = normal_curvature(&p, &h).unwrap();
        let c2 = normal_curvature(&p.scaled(2.0), &h).unwrap();
        assert!((c1 - c2).abs() > 1e-3 * c1.abs());
    }
}
