//! Monte Carlo estimates of the geometry from a sampler.

use nalgebra::{DMatrix, DVector};

use super::model::PerturbedModel;
use crate::error::{InfluenceError, Result};
use crate::rng::parallel_sum;
use crate::tensor::Tensor3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McOptions {
    pub seed: u64,
    pub draws: usize,
}

impl Default for McOptions {
    fn default() -> Self {
        Self { seed: 20_240_917, draws: 200_000 }
    }
}

/// Central-difference score of `ℓ(φ | y)` in φ with step `ε^{1/3} max(1, |φ_i|)`.
pub fn fd_score(model: &PerturbedModel, phi: &DVector<f64>, y: &DVector<f64>, coords: &[usize]) -> Vec<f64> {
    let h0 = f64::EPSILON.cbrt();
    coords
        .iter()
        .map(|&i| {
            let h = h0 * phi[i].abs().max(1.0);
            let mut a = phi.clone();
            let mut b = phi.clone();
            a[i] += h;
            b[i] -= h;
            (model.log_density(&a, y) - model.log_density(&b, y)) / (2.0 * h)
        })
        .collect()
}

/// Central-difference Hessian of `ℓ(φ | y)` in φ on the given coordinates.
fn fd_hessian(model: &PerturbedModel, phi: &DVector<f64>, y: &DVector<f64>, coords: &[usize]) -> Vec<f64> {
    let h0 = f64::EPSILON.powf(0.25);
    let m = coords.len();
    let f0 = model.log_density(phi, y);
    let mut out = vec![0.0; m * m];
    let eval = |shifts: &[(usize, f64)]| {
        let mut x = phi.clone();
        for &(i, s) in shifts {
            x[i] += s;
        }
        model.log_density(&x, y)
    };
    for a in 0..m {
        let i = coords[a];
        let hi = h0 * phi[i].abs().max(1.0);
        out[a * m + a] = (eval(&[(i, hi)]) - 2.0 * f0 + eval(&[(i, -hi)])) / (hi * hi);
        for b in 0..a {
            let j = coords[b];
            let hj = h0 * phi[j].abs().max(1.0);
            let v = (eval(&[(i, hi), (j, hj)]) - eval(&[(i, hi), (j, -hj)]) - eval(&[(i, -hi), (j, hj)])
                + eval(&[(i, -hi), (j, -hj)]))
                / (4.0 * hi * hj);
            out[a * m + b] = v;
            out[b * m + a] = v;
        }
    }
    out
}

#[derive(Clone)]
struct Acc {
    n: f64,
    s: Vec<f64>,
    ss: Vec<f64>,
    ss2: Vec<f64>,
    sss: Vec<f64>,
    hs: Vec<f64>,
}

impl std::ops::AddAssign for Acc {
    fn add_assign(&mut self, o: Self) {
        self.n += o.n;
        for (a, b) in [
            (&mut self.s, &o.s),
            (&mut self.ss, &o.ss),
            (&mut self.ss2, &o.ss2),
            (&mut self.sss, &o.sss),
            (&mut self.hs, &o.hs),
        ] {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }
}

/// Sample moments of the φ-score over draws from the model.
#[derive(Debug, Clone)]
pub struct McMoments {
    /// Coordinates the moments refer to.
    pub coords: Vec<usize>,
    pub score_mean: DVector<f64>,
    pub g: DMatrix<f64>,
    pub g_stderr: DMatrix<f64>,
    pub t: Option<Tensor3>,
    pub gamma0: Option<Tensor3>,
    pub draws: usize,
}

/// Estimates `E[∂ℓ ∂ℓᵀ]` (with standard errors), and optionally
/// `T = E[∂_iℓ ∂_jℓ ∂_kℓ]` and `Γ⁰ = E[∂_i∂_jℓ ∂_kℓ] + ½T`.
pub fn mc_moments(
    model: &PerturbedModel,
    phi: &DVector<f64>,
    opts: McOptions,
    coords: Option<&[usize]>,
    third_order: bool,
) -> Result<McMoments> {
    model.check_domain(phi)?;
    if !model.has_sampler() {
        return Err(InfluenceError::NoSampler(model.name()));
    }
    if opts.draws < 2 {
        return Err(InfluenceError::InvalidParameter("Monte Carlo needs at least two draws".into()));
    }
    let coords: Vec<usize> = coords.map(|c| c.to_vec()).unwrap_or_else(|| (0..model.dim()).collect());
    if let Some(&bad) = coords.iter().find(|&&i| i >= model.dim()) {
        return Err(InfluenceError::DimensionMismatch { expected: model.dim(), got: bad + 1 });
    }
    let m = coords.len();
    let m3 = if third_order { m * m * m } else { 0 };
    let zero = Acc {
        n: 0.0,
        s: vec![0.0; m],
        ss: vec![0.0; m * m],
        ss2: vec![0.0; m * m],
        sss: vec![0.0; m3],
        hs: vec![0.0; m3],
    };
    let acc = parallel_sum(opts.seed, opts.draws, zero.clone(), |rng| {
        let mut a = zero.clone();
        let Some(y) = model.sample(phi, rng) else {
            return a;
        };
        let s = fd_score(model, phi, &y, &coords);
        a.n = 1.0;
        for i in 0..m {
            a.s[i] = s[i];
            for j in 0..m {
                let v = s[i] * s[j];
                a.ss[i * m + j] = v;
                a.ss2[i * m + j] = v * v;
            }
        }
        if third_order {
            let h = fd_hessian(model, phi, &y, &coords);
            for i in 0..m {
                for j in 0..m {
                    for k in 0..m {
                        a.sss[(i * m + j) * m + k] = s[i] * s[j] * s[k];
                        a.hs[(i * m + j) * m + k] = h[i * m + j] * s[k];
                    }
                }
            }
        }
        a
    });
    if acc.n < opts.draws as f64 {
        return Err(InfluenceError::NoSampler(model.name()));
    }
    let n = acc.n;
    let g = DMatrix::from_fn(m, m, |i, j| acc.ss[i * m + j] / n);
    let g_stderr = DMatrix::from_fn(m, m, |i, j| {
        let mean = g[(i, j)];
        let var = (acc.ss2[i * m + j] / n - mean * mean).max(0.0) * n / (n - 1.0);
        (var / n).sqrt()
    });
    let (t, gamma0) = if third_order {
        let mut t = Tensor3::zeros(m);
        let mut gm = Tensor3::zeros(m);
        for i in 0..m {
            for j in 0..m {
                for k in 0..m {
                    let idx = (i * m + j) * m + k;
                    let tv = acc.sss[idx] / n;
                    t.set(i, j, k, tv);
                    gm.set(i, j, k, acc.hs[idx] / n + 0.5 * tv);
                }
            }
        }
        (Some(t), Some(gm))
    } else {
        (None, None)
    };
    Ok(McMoments {
        coords,
        score_mean: DVector::from_iterator(m, acc.s.iter().map(|v| v / n)),
        g,
        g_stderr,
        t,
        gamma0,
        draws: opts.draws,
    })
}
