//! Feature basis and least-squares machinery for regression Monte Carlo.

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec;
use crate::spectral::GridBasis;

/// Ridge penalty (relative to the normalized Gram matrix) used when the
/// design is rank deficient.
pub const RIDGE_PENALTY: f64 = 1e-8;

/// Polynomials up to `degree` in the leading `n_feat` coordinates, plus
/// optionally the grid maximum of the field.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureBasis {
    pub n_modes: usize,
    pub n_feat: usize,
    pub degree: usize,
    /// Grid size for the sup-of-state feature; `None` disables it.
    pub sup_grid: Option<usize>,
}

impl FeatureBasis {
    pub fn new(n_modes: usize, n_feat: usize, degree: usize, sup_grid: Option<usize>) -> Result<Self> {
        if n_feat == 0 || n_feat > n_modes {
            return Err(Error::InvalidInput(format!(
                "n_feat must be in 1..={n_modes}, got {n_feat}"
            )));
        }
        if degree == 0 {
            return Err(Error::InvalidInput("polynomial degree must be at least 1".into()));
        }
        if matches!(sup_grid, Some(p) if p < 2) {
            return Err(Error::InvalidInput("sup feature grid needs at least 2 points".into()));
        }
        Ok(Self {
            n_modes,
            n_feat,
            degree,
            sup_grid,
        })
    }

    /// Quadratic polynomials in `min(N, 4)` coordinates plus the sup feature.
    /// With a single mode the sup feature equals the coordinate and is left out.
    pub fn standard(n_modes: usize, sup_grid: usize) -> Self {
        Self {
            n_modes,
            n_feat: n_modes.min(4),
            degree: 2,
            sup_grid: (n_modes > 1).then_some(sup_grid),
        }
    }

    /// Exponent multisets, each a sorted list of coordinate indices.
    pub fn monomials(&self) -> Vec<Vec<usize>> {
        let mut out = Vec::new();
        let mut cur = Vec::new();
        fn rec(start: usize, n: usize, left: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
            if !cur.is_empty() {
                out.push(cur.clone());
            }
            if left == 0 {
                return;
            }
            for i in start..n {
                cur.push(i);
                rec(i, n, left - 1, cur, out);
                cur.pop();
            }
        }
        rec(0, self.n_feat, self.degree, &mut cur, &mut out);
        out.sort_by_key(|m| m.len());
        out
    }

    /// Total number of features including the intercept.
    pub fn len(&self) -> usize {
        1 + self.monomials().len() + usize::from(self.sup_grid.is_some())
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn compile(&self) -> CompiledBasis {
        CompiledBasis {
            monomials: self.monomials(),
            grid: self.sup_grid.map(|p| GridBasis::new(self.n_modes, p)),
            len: self.len(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct CompiledBasis {
    monomials: Vec<Vec<usize>>,
    grid: Option<GridBasis>,
    len: usize,
}

impl CompiledBasis {
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Raw feature row for state `x`; entry 0 is the intercept.
    pub fn features(&self, x: &[f64], out: &mut [f64]) {
        out[0] = 1.0;
        for (i, m) in self.monomials.iter().enumerate() {
            out[1 + i] = m.iter().map(|&k| x[k]).product();
        }
        if let Some(g) = &self.grid {
            out[self.len - 1] = g.sup(x);
        }
    }
}

/// Standardized least-squares design over a set of samples.
#[derive(Debug, Clone)]
pub struct Design {
    pub n: usize,
    /// Number of raw features (including intercept).
    pub p: usize,
    pub mean: Vec<f64>,
    /// Column scale; 0 marks a constant column that was dropped.
    pub scale: Vec<f64>,
    active: Vec<usize>,
    /// Standardized active columns, row-major `n × q`.
    rows: Vec<f64>,
    gram_chol: Cholesky<f64, nalgebra::Dyn>,
    inv_gram: DMatrix<f64>,
    pub ridge: bool,
}

/// Coefficients (in the standardized active coordinates) of one regression.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub coef: Vec<f64>,
    pub resid_var: f64,
}

fn sum_vecs(a: Vec<f64>, b: Vec<f64>) -> Vec<f64> {
    a.into_iter().zip(b).map(|(x, y)| x + y).collect()
}

impl Design {
    /// Builds the design from raw rows (`n × p`, intercept in column 0).
    pub fn build(raw: &[f64], p: usize) -> Result<Self> {
        let n = raw.len() / p;
        if n < 2 {
            return Err(Error::InvalidInput("regression needs at least 2 samples".into()));
        }
        let chunks = exec::n_chunks(n);
        let row_range = |c: usize| (c * exec::CHUNK, ((c + 1) * exec::CHUNK).min(n));

        let sums = exec::pairwise_reduce(
            exec::map_chunks(chunks, |c| {
                let (s, e) = row_range(c);
                let mut acc = vec![0.0; p];
                for r in s..e {
                    for (a, v) in acc.iter_mut().zip(&raw[r * p..(r + 1) * p]) {
                        *a += v;
                    }
                }
                acc
            }),
            sum_vecs,
        )
        .expect("n ≥ 2");
        let mut mean: Vec<f64> = sums.iter().map(|s| s / n as f64).collect();
        let sq = exec::pairwise_reduce(
            exec::map_chunks(chunks, |c| {
                let (s, e) = row_range(c);
                let mut acc = vec![0.0; p];
                for r in s..e {
                    for j in 0..p {
                        let d = raw[r * p + j] - mean[j];
                        acc[j] += d * d;
                    }
                }
                acc
            }),
            sum_vecs,
        )
        .expect("n ≥ 2");
        let mut scale = vec![0.0; p];
        let mut active = vec![0];
        mean[0] = 0.0;
        scale[0] = 1.0;
        for j in 1..p {
            let sd = (sq[j] / n as f64).sqrt();
            if sd > 1e-12 * (1.0 + mean[j].abs()) {
                scale[j] = sd;
                active.push(j);
            }
        }
        let q = active.len();
        let mut rows = vec![0.0; n * q];
        for r in 0..n {
            for (a, &j) in active.iter().enumerate() {
                rows[r * q + a] = (raw[r * p + j] - mean[j]) / scale[j];
            }
        }
        let gram_flat = exec::pairwise_reduce(
            exec::map_chunks(chunks, |c| {
                let (s, e) = row_range(c);
                let mut acc = vec![0.0; q * q];
                for r in s..e {
                    let f = &rows[r * q..(r + 1) * q];
                    for i in 0..q {
                        for k in i..q {
                            acc[i * q + k] += f[i] * f[k];
                        }
                    }
                }
                acc
            }),
            sum_vecs,
        )
        .expect("n ≥ 2");
        let mut gram = DMatrix::from_fn(q, q, |i, k| {
            if i <= k {
                gram_flat[i * q + k]
            } else {
                gram_flat[k * q + i]
            }
        });
        let min_eig = SymmetricEigen::new(&gram / n as f64)
            .eigenvalues
            .iter()
            .fold(f64::INFINITY, |m, &v| m.min(v));
        let mut ridge = false;
        if !(min_eig > 1e-10) {
            ridge = true;
            for i in 0..q {
                gram[(i, i)] += RIDGE_PENALTY * n as f64;
            }
        }
        let gram_chol = match Cholesky::new(gram.clone()) {
            Some(c) => c,
            None => {
                ridge = true;
                for i in 0..q {
                    gram[(i, i)] += RIDGE_PENALTY * n as f64;
                }
                Cholesky::new(gram.clone()).ok_or(Error::Degenerate {
                    smallest_eigenvalue: min_eig,
                })?
            }
        };
        let inv_gram = gram_chol.inverse();
        Ok(Self {
            n,
            p,
            mean,
            scale,
            active,
            rows,
            gram_chol,
            inv_gram,
            ridge,
        })
    }

    pub fn n_active(&self) -> usize {
        self.active.len()
    }

    /// Fits each column of `targets` (`n × k`, row-major).
    pub fn fit(&self, targets: &[f64], k: usize) -> Vec<LinearFit> {
        let q = self.n_active();
        let n = self.n;
        let chunks = exec::n_chunks(n);
        let rhs = exec::pairwise_reduce(
            exec::map_chunks(chunks, |c| {
                let s = c * exec::CHUNK;
                let e = (s + exec::CHUNK).min(n);
                let mut acc = vec![0.0; q * k];
                for r in s..e {
                    let f = &self.rows[r * q..(r + 1) * q];
                    for t in 0..k {
                        let y = targets[r * k + t];
                        for i in 0..q {
                            acc[t * q + i] += f[i] * y;
                        }
                    }
                }
                acc
            }),
            sum_vecs,
        )
        .expect("n ≥ 2");
        let coefs: Vec<Vec<f64>> = (0..k)
            .map(|t| {
                let b = DVector::from_column_slice(&rhs[t * q..(t + 1) * q]);
                self.gram_chol.solve(&b).as_slice().to_vec()
            })
            .collect();
        let sse = exec::pairwise_reduce(
            exec::map_chunks(chunks, |c| {
                let s = c * exec::CHUNK;
                let e = (s + exec::CHUNK).min(n);
                let mut acc = vec![0.0; k];
                for r in s..e {
                    let f = &self.rows[r * q..(r + 1) * q];
                    for t in 0..k {
                        let pred: f64 = f.iter().zip(&coefs[t]).map(|(a, b)| a * b).sum();
                        let d = targets[r * k + t] - pred;
                        acc[t] += d * d;
                    }
                }
                acc
            }),
            sum_vecs,
        )
        .expect("n ≥ 2");
        let dof = (n.saturating_sub(q)).max(1) as f64;
        coefs
            .into_iter()
            .zip(sse)
            .map(|(coef, s)| LinearFit {
                coef,
                resid_var: s / dof,
            })
            .collect()
    }

    /// In-sample prediction for row `r`.
    pub fn predict_row(&self, r: usize, fit: &LinearFit) -> f64 {
        let q = self.n_active();
        self.rows[r * q..(r + 1) * q]
            .iter()
            .zip(&fit.coef)
            .map(|(a, b)| a * b)
            .sum()
    }

    /// Freezes the standardization and Gram inverse for out-of-sample use.
    pub fn surface(&self) -> Surface {
        Surface {
            mean: self.active.iter().map(|&j| self.mean[j]).collect(),
            scale: self.active.iter().map(|&j| self.scale[j]).collect(),
            active: self.active.clone(),
            inv_gram: self.inv_gram.as_slice().to_vec(),
        }
    }
}

/// Standardization data shared by all regressions at one node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Surface {
    pub active: Vec<usize>,
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
    /// Column-major inverse of the (unnormalized) Gram matrix.
    pub inv_gram: Vec<f64>,
}

impl Surface {
    pub fn standardize(&self, raw: &[f64]) -> Vec<f64> {
        self.active
            .iter()
            .enumerate()
            .map(|(a, &j)| {
                if j == 0 {
                    1.0
                } else {
                    (raw[j] - self.mean[a]) / self.scale[a]
                }
            })
            .collect()
    }

    pub fn predict(&self, f: &[f64], fit: &LinearFit) -> f64 {
        f.iter().zip(&fit.coef).map(|(a, b)| a * b).sum()
    }

    /// Standard error of the fitted mean at standardized features `f`.
    pub fn std_error(&self, f: &[f64], fit: &LinearFit) -> f64 {
        let q = f.len();
        let mut quad = 0.0;
        for i in 0..q {
            for k in 0..q {
                quad += f[i] * self.inv_gram[k * q + i] * f[k];
            }
        }
        (fit.resid_var * quad.max(0.0)).sqrt()
    }
}
