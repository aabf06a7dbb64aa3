//! Finite-dimensional truncation of the heat semigroup with Neumann boundary
//! conditions and noise/control acting through the indicator of a subdomain.
//!
//! Coordinates are taken in the orthonormal cosine basis of `L²(0, 1)`:
//! `e_0 = 1`, `e_k(ξ) = √2 cos(kπξ)`. In this basis the Laplacian is diagonal
//! with eigenvalues `-(kπ)²` and multiplication by `1_[a,b]` is the Gram
//! matrix of the basis restricted to `[a, b]`.

use std::f64::consts::{PI, SQRT_2};

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::dd::Dd;
use crate::error::{Error, Result};

/// Default number of uniform grid points used for spatial evaluation.
pub const DEFAULT_GRID_POINTS: usize = 512;

/// Which Hilbert space a coefficient vector lives in. Both are truncated to the
/// same cosine basis; the tag only documents intent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum Space {
    #[default]
    State,
    Noise,
}

/// Coefficients of a field in the cosine basis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralVector {
    pub coeffs: Vec<f64>,
    #[serde(default)]
    pub space: Space,
}

impl SpectralVector {
    pub fn new(coeffs: Vec<f64>) -> Self {
        Self {
            coeffs,
            space: Space::State,
        }
    }

    pub fn noise(coeffs: Vec<f64>) -> Self {
        Self {
            coeffs,
            space: Space::Noise,
        }
    }

    pub fn zeros(n: usize) -> Self {
        Self::new(vec![0.0; n])
    }

    /// Unit vector along mode `k`.
    pub fn basis(n: usize, k: usize) -> Self {
        let mut v = vec![0.0; n];
        v[k] = 1.0;
        Self::new(v)
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn norm(&self) -> f64 {
        self.coeffs.iter().map(|c| c * c).sum::<f64>().sqrt()
    }

    pub fn dot(&self, other: &SpectralVector) -> f64 {
        dot(&self.coeffs, &other.coeffs)
    }

    /// Value of the field at `xi ∈ [0, 1]`.
    pub fn eval_at(&self, xi: f64) -> f64 {
        self.coeffs.iter().enumerate().map(|(k, c)| c * basis_fn(k, xi)).sum()
    }

    /// Values on `points` uniform nodes `i / (points - 1)`.
    pub fn eval_grid(&self, points: usize) -> Vec<f64> {
        GridBasis::new(self.len(), points).eval(&self.coeffs)
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `k`-th orthonormal Neumann eigenfunction.
pub fn basis_fn(k: usize, xi: f64) -> f64 {
    if k == 0 {
        1.0
    } else {
        SQRT_2 * (k as f64 * PI * xi).cos()
    }
}

/// Sup norm of the `k`-th basis function.
pub fn basis_sup(k: usize) -> f64 {
    if k == 0 {
        1.0
    } else {
        SQRT_2
    }
}

/// Tabulated basis on a uniform grid including both endpoints.
#[derive(Debug, Clone)]
pub struct GridBasis {
    pub n_modes: usize,
    pub points: usize,
    /// Row-major `points × n_modes`.
    table: Vec<f64>,
}

impl GridBasis {
    pub fn new(n_modes: usize, points: usize) -> Self {
        let points = points.max(2);
        let mut table = Vec::with_capacity(points * n_modes);
        for i in 0..points {
            let xi = i as f64 / (points - 1) as f64;
            for k in 0..n_modes {
                table.push(basis_fn(k, xi));
            }
        }
        Self { n_modes, points, table }
    }

    pub fn node(&self, i: usize) -> f64 {
        i as f64 / (self.points - 1) as f64
    }

    pub fn eval(&self, coeffs: &[f64]) -> Vec<f64> {
        self.table
            .chunks_exact(self.n_modes)
            .map(|row| dot(row, coeffs))
            .collect()
    }

    /// Maximum of the field over the grid nodes.
    pub fn sup(&self, coeffs: &[f64]) -> f64 {
        self.table
            .chunks_exact(self.n_modes)
            .map(|row| dot(row, coeffs))
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Truncated Ornstein–Uhlenbeck model `dX = ΛX dt + M dW`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OUModel {
    pub n_modes: usize,
    pub eigenvalues: Vec<f64>,
    /// Row-major symmetric Gram matrix of the noise/control operator.
    pub gram_b: Vec<f64>,
    pub subdomain: (f64, f64),
    /// `(M, ω)` in `‖e^{tA}‖ ≤ M e^{ωt}`.
    pub growth_constants: (f64, f64),
}

/// Assemble the truncated heat model on `n_modes` cosine modes with noise and
/// control restricted to `[a, b]`.
pub fn build_model(n_modes: usize, a: f64, b: f64) -> Result<OUModel> {
    if n_modes == 0 {
        return Err(Error::InvalidInput("n_modes must be at least 1".into()));
    }
    if !(a > 0.0 && a < b && b < 1.0) {
        return Err(Error::InvalidInput(format!(
            "subdomain must satisfy 0 < a < b < 1, got ({a}, {b})"
        )));
    }
    let eigenvalues = (0..n_modes).map(|k| -(k as f64 * PI).powi(2)).collect();
    // ∫_a^b cos(wπξ) dξ
    let cos_integral = |w: usize| -> f64 {
        if w == 0 {
            b - a
        } else {
            let wp = w as f64 * PI;
            ((wp * b).sin() - (wp * a).sin()) / wp
        }
    };
    let norm = |k: usize| if k == 0 { 1.0 } else { SQRT_2 };
    let mut gram_b = vec![0.0; n_modes * n_modes];
    for j in 0..n_modes {
        for k in j..n_modes {
            let v = norm(j) * norm(k) * 0.5 * (cos_integral(j.abs_diff(k)) + cos_integral(j + k));
            gram_b[j * n_modes + k] = v;
            gram_b[k * n_modes + j] = v;
        }
    }
    Ok(OUModel {
        n_modes,
        eigenvalues,
        gram_b,
        subdomain: (a, b),
        growth_constants: (1.0, 0.0),
    })
}

impl OUModel {
    /// Test surrogate with `M = I` and arbitrary (non-positive) eigenvalues.
    pub fn surrogate(eigenvalues: Vec<f64>) -> Self {
        let n = eigenvalues.len();
        let mut gram_b = vec![0.0; n * n];
        for k in 0..n {
            gram_b[k * n + k] = 1.0;
        }
        OUModel {
            n_modes: n,
            eigenvalues,
            gram_b,
            subdomain: (0.0, 1.0),
            growth_constants: (1.0, 0.0),
        }
    }

    pub fn gram_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.n_modes, self.n_modes, &self.gram_b)
    }

    pub fn gram(&self, j: usize, k: usize) -> f64 {
        self.gram_b[j * self.n_modes + k]
    }

    /// `M ξ`.
    pub fn apply_b(&self, xi: &[f64]) -> Vec<f64> {
        self.gram_b.chunks_exact(self.n_modes).map(|row| dot(row, xi)).collect()
    }

    /// Spectral norm of `M`.
    pub fn gram_norm(&self) -> f64 {
        SymmetricEigen::new(self.gram_matrix())
            .eigenvalues
            .iter()
            .fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn check_dim(&self, len: usize) -> Result<()> {
        if len != self.n_modes {
            return Err(Error::Dimension {
                expected: self.n_modes,
                got: len,
            });
        }
        Ok(())
    }

    /// Diagonal of `e^{tΛ}`.
    pub fn semigroup_diag(&self, t: f64) -> Vec<f64> {
        self.eigenvalues.iter().map(|l| (l * t).exp()).collect()
    }

    /// Diagonal of `Λ^{-1}(e^{tΛ} - I)`, equal to `t` on zero modes.
    pub fn integrated_semigroup_diag(&self, t: f64) -> Vec<f64> {
        self.eigenvalues.iter().map(|&l| growth_integral(l, t)).collect()
    }
}

/// `∫_0^t e^{sν} ds = (e^{νt} - 1)/ν`, with a series near `νt = 0`.
fn growth_integral(nu: f64, t: f64) -> f64 {
    let x = nu * t;
    if x.abs() < 1e-8 {
        t * (1.0 + x / 2.0 + x * x / 6.0)
    } else {
        x.exp_m1() / nu
    }
}

/// Covariance `Q_t` of the truncated OU transition together with its
/// Cholesky factor.
#[derive(Debug, Clone)]
pub struct CovarianceFactor {
    pub t: f64,
    pub q: DMatrix<f64>,
    pub chol: DMatrix<f64>,
    /// Diagonal shift added before factorization (0 when none was needed).
    pub jitter: f64,
}

impl CovarianceFactor {
    /// `L g`.
    pub fn apply_chol(&self, g: &[f64], out: &mut [f64]) {
        let n = g.len();
        for i in 0..n {
            let mut s = 0.0;
            for j in 0..=i {
                s += self.chol[(i, j)] * g[j];
            }
            out[i] = s;
        }
    }

    /// `L^{-1} y`.
    pub fn solve_lower(&self, y: &[f64]) -> Vec<f64> {
        let n = y.len();
        let mut g = vec![0.0; n];
        for i in 0..n {
            let mut s = y[i];
            for j in 0..i {
                s -= self.chol[(i, j)] * g[j];
            }
            g[i] = s / self.chol[(i, i)];
        }
        g
    }

    pub fn trace(&self) -> f64 {
        self.q.trace()
    }
}

/// Closed-form entries of `Q_t = ∫_0^t e^{sΛ} M e^{sΛ} ds`.
pub fn covariance_matrix(model: &OUModel, t: f64) -> DMatrix<f64> {
    let n = model.n_modes;
    DMatrix::from_fn(n, n, |j, k| {
        model.gram(j, k) * growth_integral(model.eigenvalues[j] + model.eigenvalues[k], t)
    })
}

/// `Q_t` and its Cholesky factor. A jitter of at most `1e-12·trace/N` is
/// added if the plain factorization fails.
pub fn covariance(model: &OUModel, t: f64) -> Result<CovarianceFactor> {
    if !(t > 0.0) || !t.is_finite() {
        return Err(Error::InvalidInput(format!(
            "covariance time must be positive, got {t}"
        )));
    }
    let q = covariance_matrix(model, t);
    if let Some(c) = Cholesky::new(q.clone()) {
        return Ok(CovarianceFactor {
            t,
            chol: c.l(),
            q,
            jitter: 0.0,
        });
    }
    let n = model.n_modes as f64;
    let jitter = 1e-12 * q.trace() / n;
    let shifted = &q + DMatrix::identity(model.n_modes, model.n_modes) * jitter;
    match Cholesky::new(shifted) {
        Some(c) => Ok(CovarianceFactor {
            t,
            chol: c.l(),
            q,
            jitter,
        }),
        None => {
            let smallest = SymmetricEigen::new(q.clone())
                .eigenvalues
                .iter()
                .fold(f64::INFINITY, |m, &v| m.min(v));
            Err(Error::Degenerate {
                smallest_eigenvalue: smallest,
            })
        }
    }
}

/// Mean map `x ↦ e^{tΛ} x`.
pub fn propagate(model: &OUModel, t: f64, x: &SpectralVector) -> Result<SpectralVector> {
    model.check_dim(x.len())?;
    if t < 0.0 {
        return Err(Error::InvalidInput(format!(
            "propagation time must be non-negative, got {t}"
        )));
    }
    let coeffs = x
        .coeffs
        .iter()
        .zip(&model.eigenvalues)
        .map(|(c, l)| {
            // t = ∞ with λ = 0 would give 0·∞
            if *l == 0.0 {
                *c
            } else {
                c * (l * t).exp()
            }
        })
        .collect();
    Ok(SpectralVector { coeffs, space: x.space })
}

/// `L^{-1} e^{tΛ} M` for the covariance factor at time `t`.
pub fn gradient_weight_matrix(model: &OUModel, cov: &CovarianceFactor) -> DMatrix<f64> {
    let n = model.n_modes;
    let e = model.semigroup_diag(cov.t);
    let em = DMatrix::from_fn(n, n, |i, j| e[i] * model.gram(i, j));
    let chol = &cov.chol;
    chol.solve_lower_triangular(&em)
        .expect("Cholesky factor has a non-zero diagonal")
}

/// `M` and `Λ` in double-double. The heat model's Gram matrix is rebuilt
/// from its closed form (lifting the stored `f64` entries would perturb the
/// nearly singular directions of `M`); other models are lifted as stored.
fn precise_operators(model: &OUModel) -> (Vec<Dd>, Vec<Dd>) {
    let n = model.n_modes;
    let (a, b) = model.subdomain;
    let (a, b) = (Dd::from_f64(a), Dd::from_f64(b));
    let cos_integral = |w: usize| -> Dd {
        if w == 0 {
            b - a
        } else {
            let wp = Dd::pi().scale(w as f64);
            ((wp * b).sin() - (wp * a).sin()) / wp
        }
    };
    let sqrt2 = Dd::from_f64(2.0).sqrt();
    let norm = |k: usize| if k == 0 { Dd::ONE } else { sqrt2 };
    let mut gram = vec![Dd::ZERO; n * n];
    for j in 0..n {
        for k in 0..n {
            gram[j * n + k] = (norm(j) * norm(k) * (cos_integral(j.abs_diff(k)) + cos_integral(j + k))).scale(0.5);
        }
    }
    let close = |x: Dd, y: f64| (x.to_f64() - y).abs() <= 4.0 * f64::EPSILON * y.abs().max(1.0);
    let heat_gram = gram.iter().zip(&model.gram_b).all(|(x, y)| close(*x, *y));
    if !heat_gram {
        gram = model.gram_b.iter().map(|v| Dd::from_f64(*v)).collect();
    }
    let eig = (0..n)
        .map(|k| {
            let w = Dd::pi().scale(k as f64);
            let l = -(w * w);
            if close(l, model.eigenvalues[k]) {
                l
            } else {
                Dd::from_f64(model.eigenvalues[k])
            }
        })
        .collect();
    (gram, eig)
}

/// `L^{-1} e^{tΛ} M` with `Q_t = L Lᵀ`, assembled and factorized in
/// double-double and rounded at the end. `Q_t` of the heat model is
/// ill-conditioned beyond `f64` from about `N = 40`.
pub fn precise_weight_matrix(model: &OUModel, t: f64) -> Result<DMatrix<f64>> {
    if !(t > 0.0) || !t.is_finite() {
        return Err(Error::InvalidInput(format!("time must be positive, got {t}")));
    }
    let n = model.n_modes;
    let (gram, eig) = precise_operators(model);
    let tt = Dd::from_f64(t);
    let mut q = vec![Dd::ZERO; n * n];
    for j in 0..n {
        for k in 0..n {
            let s = eig[j] + eig[k];
            let g = if s.hi == 0.0 { tt } else { (s * tt).exp_m1() / s };
            q[j * n + k] = gram[j * n + k] * g;
        }
    }
    let mut l = vec![Dd::ZERO; n * n];
    for j in 0..n {
        let mut d = q[j * n + j];
        for p in 0..j {
            d = d - l[j * n + p] * l[j * n + p];
        }
        if !(d.hi > 0.0) {
            let smallest = SymmetricEigen::new(covariance_matrix(model, t))
                .eigenvalues
                .iter()
                .fold(f64::INFINITY, |m, &v| m.min(v));
            return Err(Error::Degenerate {
                smallest_eigenvalue: smallest,
            });
        }
        let dj = d.sqrt();
        l[j * n + j] = dj;
        for i in j + 1..n {
            let mut v = q[i * n + j];
            for p in 0..j {
                v = v - l[i * n + p] * l[j * n + p];
            }
            l[i * n + j] = v / dj;
        }
    }
    let e: Vec<Dd> = eig.iter().map(|v| (*v * tt).exp()).collect();
    let mut w = vec![Dd::ZERO; n * n];
    for c in 0..n {
        for i in 0..n {
            let mut v = e[i] * gram[i * n + c];
            for p in 0..i {
                v = v - l[i * n + p] * w[p * n + c];
            }
            w[i * n + c] = v / l[i * n + i];
        }
    }
    Ok(DMatrix::from_fn(n, n, |i, j| w[i * n + j].to_f64()))
}

/// Truncated operator norm `‖Q_t^{-1/2} e^{tA} B‖`.
pub fn reg_constant(model: &OUModel, t: f64) -> Result<f64> {
    Ok(precise_weight_matrix(model, t)?.singular_values().max())
}

/// Euclidean norm of `Q_t^{-1/2} e^{tΛ} M ξ`.
pub fn weighted_direction_norm(model: &OUModel, t: f64, xi: &[f64]) -> Result<f64> {
    model.check_dim(xi.len())?;
    let w = precise_weight_matrix(model, t)?;
    Ok((w * DVector::from_column_slice(xi)).norm())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn heat(n: usize) -> OUModel {
        build_model(n, 0.3, 0.7).unwrap()
    }

    #[test]
    fn one_mode_gram_is_interval_length() {
        let m = heat(1);
        assert_relative_eq!(m.gram_b[0], 0.4, epsilon = 1e-15);
    }

    #[test]
    fn neumann_spectrum() {
        let m = heat(2);
        assert_eq!(m.eigenvalues[0], 0.0);
        assert_relative_eq!(m.eigenvalues[1], -PI * PI, epsilon = 1e-14);
        let m = heat(10);
        assert!(m.eigenvalues.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn rejects_bad_subdomain() {
        assert!(build_model(4, 0.7, 0.3).is_err());
        assert!(build_model(4, 0.0, 0.3).is_err());
        assert!(build_model(4, 0.2, 1.0).is_err());
        assert!(build_model(0, 0.2, 0.3).is_err());
    }

    #[test]
    fn gram_matches_trapezoid_quadrature() {
        let n = 8;
        let m = heat(n);
        let (a, b) = m.subdomain;
        let pts = 100_000;
        let h = (b - a) / pts as f64;
        for j in 0..n {
            for k in 0..n {
                let f = |x: f64| basis_fn(j, x) * basis_fn(k, x);
                let mut s = 0.5 * (f(a) + f(b));
                for i in 1..pts {
                    s += f(a + i as f64 * h);
                }
                assert!((s * h - m.gram(j, k)).abs() < 1e-9, "({j},{k})");
            }
        }
    }

    #[test]
    fn gram_is_positive_definite() {
        let m = heat(12);
        let e = SymmetricEigen::new(m.gram_matrix()).eigenvalues;
        assert!(e.iter().all(|&v| v > 0.0));
    }

    #[test]
    fn identity_surrogate_covariance_is_scaled_identity() {
        let m = OUModel::surrogate(vec![0.0; 3]);
        let c = covariance(&m, 2.0).unwrap();
        assert_relative_eq!(c.q, DMatrix::identity(3, 3) * 2.0, epsilon = 1e-15);
    }

    #[test]
    fn covariance_zero_mode_entry() {
        let m = heat(6);
        let c = covariance(&m, 0.37).unwrap();
        assert_relative_eq!(c.q[(0, 0)], 0.4 * 0.37, epsilon = 1e-15);
    }

    #[test]
    fn covariance_rejects_nonpositive_time() {
        let m = heat(3);
        assert!(matches!(covariance(&m, 0.0), Err(Error::InvalidInput(_))));
        assert!(matches!(covariance(&m, -1.0), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn propagate_examples() {
        let m = heat(4);
        let x = SpectralVector::new(vec![1.0, -2.0, 0.5, 3.0]);
        assert_eq!(propagate(&m, 0.0, &x).unwrap(), x);
        let far = propagate(&m, f64::INFINITY, &x).unwrap();
        assert_eq!(far.coeffs, vec![1.0, 0.0, 0.0, 0.0]);
        let e1 = SpectralVector::basis(4, 1);
        let y = propagate(&m, 0.5, &e1).unwrap();
        assert_relative_eq!(y.coeffs[1], (-PI * PI / 2.0).exp(), epsilon = 1e-15);
        assert!(propagate(&m, 1.0, &SpectralVector::zeros(3)).is_err());
    }

    #[test]
    fn reg_constant_identity_surrogate() {
        let m = OUModel::surrogate(vec![0.0; 4]);
        for t in [0.01, 0.3, 2.0] {
            assert_relative_eq!(reg_constant(&m, t).unwrap(), 1.0 / t.sqrt(), max_relative = 1e-12);
        }
    }

    #[test]
    fn reg_constant_surrogate_with_heat_spectrum_is_per_mode_max() {
        let lam: Vec<f64> = (0..6).map(|k| -(k as f64 * PI).powi(2)).collect();
        let m = OUModel::surrogate(lam.clone());
        let t: f64 = 0.05;
        let expected = lam
            .iter()
            .map(|&l| {
                if l == 0.0 {
                    1.0 / t.sqrt()
                } else {
                    (l * t).exp() * (2.0 * l / ((2.0 * l * t).exp() - 1.0)).sqrt()
                }
            })
            .fold(0.0_f64, f64::max);
        assert_relative_eq!(reg_constant(&m, t).unwrap(), expected, max_relative = 1e-10);
    }

    #[test]
    fn grid_evaluation_and_parseval() {
        let x = SpectralVector::new(vec![0.3, -1.2, 0.7, 0.05, 2.0]);
        let p = 8 * x.len() + 1;
        let vals = x.eval_grid(p);
        for (i, v) in vals.iter().enumerate() {
            let xi = i as f64 / (p - 1) as f64;
            assert_relative_eq!(*v, x.eval_at(xi), epsilon = 1e-13);
        }
        let h = 1.0 / (p - 1) as f64;
        let mut l2 = 0.5 * (vals[0].powi(2) + vals[p - 1].powi(2));
        l2 += vals[1..p - 1].iter().map(|v| v * v).sum::<f64>();
        l2 *= h;
        let e2 = x.norm().powi(2);
        assert!((l2 - e2).abs() <= 1e-10 * e2);
    }

    #[test]
    fn precise_weight_matrix_agrees_with_f64_where_f64_suffices() {
        let m = heat(12);
        for t in [0.02, 0.2, 1.0] {
            let cov = covariance(&m, t).unwrap();
            let w = gradient_weight_matrix(&m, &cov);
            let p = precise_weight_matrix(&m, t).unwrap();
            assert!((&w - &p).norm() <= 1e-9 * w.norm(), "t = {t}");
        }
    }

    #[test]
    fn reg_constant_at_64_modes_matches_high_precision_reference() {
        // computed independently with 120-digit arithmetic
        let reference = [
            (0.2, 2.709540287162823),
            (0.1, 4.7587308449850125),
            (0.05, 8.61181725427781),
            (0.02, 19.164645193438865),
        ];
        let m = heat(64);
        for (t, c) in reference {
            assert_relative_eq!(reg_constant(&m, t).unwrap(), c, max_relative = 1e-10);
        }
    }

    #[test]
    fn semigroup_contracts() {
        let m = heat(16);
        for t in [0.0, 0.01, 1.0, 10.0] {
            assert!(m.semigroup_diag(t).iter().all(|&e| (0.0..=1.0).contains(&e)));
        }
    }
}
