//! Square sparsifying transform learning.
//!
//! A transform `T` (d×d) is learned jointly with sparse codes `Z` (d×n) for
//! data `X` (d×n) by minimizing
//!
//! ```text
//! ‖TX − Z‖²_F + λ (ε‖T‖²_F − log|det T|)   subject to   ‖z_j‖₀ ≤ τ for every column j
//! ```
//!
//! by alternating two exact block minimizations: hard thresholding for `Z`
//! and a closed-form (Cholesky + SVD) update for `T`. Because both steps are
//! exact, the objective is non-increasing over iterations.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Column-sample data matrix: one column per sample, `d` rows of features.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix(DMatrix<f64>);

impl FeatureMatrix {
    pub fn new(data: DMatrix<f64>) -> Result<Self> {
        if data.nrows() == 0 || data.ncols() == 0 {
            return Err(Error::argument(format!(
                "feature matrix must be non-empty, got {}x{}",
                data.nrows(),
                data.ncols()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::argument("feature matrix contains non-finite entries"));
        }
        Ok(FeatureMatrix(data))
    }

    /// Builds a matrix whose columns are the given vectors.
    pub fn from_columns(columns: &[Vec<f64>]) -> Result<Self> {
        let Some(first) = columns.first() else {
            return Err(Error::argument("no columns supplied"));
        };
        let d = first.len();
        if let Some(bad) = columns.iter().position(|c| c.len() != d) {
            return Err(Error::argument(format!(
                "column {bad} has length {} but column 0 has length {d}",
                columns[bad].len()
            )));
        }
        let data = DMatrix::from_fn(d, columns.len(), |i, j| columns[j][i]);
        FeatureMatrix::new(data)
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn n_samples(&self) -> usize {
        self.0.ncols()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.0.column(j).iter().copied().collect()
    }

    pub fn select_columns(&self, indices: &[usize]) -> Result<Self> {
        FeatureMatrix::new(self.0.select_columns(indices))
    }

    /// Concatenates matrices side by side (all must share `d`).
    pub fn hstack(parts: &[&FeatureMatrix]) -> Result<Self> {
        let Some(first) = parts.first() else {
            return Err(Error::argument("nothing to stack"));
        };
        let d = first.dim();
        if parts.iter().any(|p| p.dim() != d) {
            return Err(Error::argument("hstack: feature dimensions differ"));
        }
        let n: usize = parts.iter().map(|p| p.n_samples()).sum();
        let mut out = DMatrix::zeros(d, n);
        let mut offset = 0;
        for p in parts {
            out.columns_mut(offset, p.n_samples()).copy_from(p.as_matrix());
            offset += p.n_samples();
        }
        FeatureMatrix::new(out)
    }
}

/// How the transform is initialized when no explicit starting point is given.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TransformInit {
    #[default]
    Identity,
    /// Orthonormal factor of a seeded Gaussian matrix.
    RandomOrthonormal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransformParams {
    /// Weight of the regularizer (λ).
    pub lambda: f64,
    /// Frobenius-norm weight inside the regularizer (ε).
    pub epsilon: f64,
    /// Per-column sparsity budget (τ).
    pub tau: usize,
    pub max_iters: usize,
    /// Relative objective-change stopping threshold.
    pub tol: f64,
    pub seed: u64,
    #[serde(default)]
    pub init: TransformInit,
}

impl Default for TransformParams {
    fn default() -> Self {
        TransformParams {
            lambda: 1.0,
            epsilon: 1.0,
            tau: 8,
            max_iters: 50,
            tol: 1e-6,
            seed: 0,
            init: TransformInit::Identity,
        }
    }
}

impl TransformParams {
    pub fn validate(&self, d: usize) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::argument(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::argument(format!("epsilon must be > 0, got {}", self.epsilon)));
        }
        if !(self.tol > 0.0) {
            return Err(Error::argument(format!("tol must be > 0, got {}", self.tol)));
        }
        check_tau(self.tau, d)
    }
}

fn check_tau(tau: usize, d: usize) -> Result<()> {
    if tau == 0 {
        return Err(Error::argument("tau must be >= 1"));
    }
    if tau > d {
        return Err(Error::argument(format!("tau = {tau} exceeds dimension d = {d}")));
    }
    Ok(())
}

/// Sparse codes, one column per sample, at most `tau` nonzeros per column.
#[derive(Debug, Clone, PartialEq)]
pub struct CodedBatch {
    pub z: DMatrix<f64>,
    pub tau: usize,
}

impl CodedBatch {
    pub fn n_samples(&self) -> usize {
        self.z.ncols()
    }

    pub fn max_column_support(&self) -> usize {
        self.z
            .column_iter()
            .map(|c| c.iter().filter(|v| **v != 0.0).count())
            .max()
            .unwrap_or(0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransformModel {
    pub t: DMatrix<f64>,
    pub params: TransformParams,
    pub objective_trace: Vec<f64>,
}

impl TransformModel {
    pub fn dim(&self) -> usize {
        self.t.nrows()
    }
}

/// `log|det A|` through the LU factorization, without forming the determinant
/// (which over- or underflows for moderately sized transforms).
pub fn log_abs_det(a: &DMatrix<f64>) -> Result<f64> {
    if !a.is_square() {
        return Err(Error::argument("log-det of a non-square matrix"));
    }
    let lu = a.clone().lu();
    let u = lu.u();
    let mut acc = 0.0;
    for i in 0..u.nrows() {
        let p = u[(i, i)].abs();
        if p == 0.0 || !p.is_finite() {
            return Err(Error::Domain("log-det undefined: transform is singular".into()));
        }
        acc += p.ln();
    }
    Ok(acc)
}

/// `λ(ε‖T‖²_F − log|det T|)`.
pub fn regularizer(t: &DMatrix<f64>, lambda: f64, epsilon: f64) -> Result<f64> {
    Ok(lambda * (epsilon * t.norm_squared() - log_abs_det(t)?))
}

fn check_dims(t: &DMatrix<f64>, x: &DMatrix<f64>, z: &DMatrix<f64>) -> Result<()> {
    if !t.is_square() || t.nrows() != x.nrows() || z.shape() != x.shape() {
        return Err(Error::argument(format!(
            "dimension mismatch: T {:?}, X {:?}, Z {:?}",
            t.shape(),
            x.shape(),
            z.shape()
        )));
    }
    Ok(())
}

/// Full learning objective `‖TX − Z‖²_F + λ(ε‖T‖²_F − log|det T|)`.
pub fn objective(
    t: &DMatrix<f64>,
    x: &FeatureMatrix,
    z: &CodedBatch,
    lambda: f64,
    epsilon: f64,
) -> Result<f64> {
    check_dims(t, x.as_matrix(), &z.z)?;
    let residual = (t * x.as_matrix() - &z.z).norm_squared();
    Ok(residual + regularizer(t, lambda, epsilon)?)
}

/// Keeps the `tau` largest-magnitude entries of `v` (ties keep the lower
/// index) and zeroes the rest.
pub(crate) fn hard_threshold_column(v: &mut [f64], tau: usize) {
    if tau >= v.len() {
        return;
    }
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&a, &b| v[b].abs().total_cmp(&v[a].abs()).then(a.cmp(&b)));
    for &i in &order[tau..] {
        v[i] = 0.0;
    }
}

pub(crate) fn hard_threshold(mut m: DMatrix<f64>, tau: usize) -> DMatrix<f64> {
    for mut col in m.column_iter_mut() {
        hard_threshold_column(col.as_mut_slice(), tau);
    }
    m
}

/// Exact minimizer of `‖TX − Z‖²_F` under a per-column budget of `tau`
/// nonzeros: the `tau` largest-magnitude entries of each column of `TX`.
pub fn sparse_code(t: &DMatrix<f64>, x: &FeatureMatrix, tau: usize) -> Result<CodedBatch> {
    if !t.is_square() || t.ncols() != x.dim() {
        return Err(Error::argument(format!(
            "dimension mismatch: T {:?}, X {}x{}",
            t.shape(),
            x.dim(),
            x.n_samples()
        )));
    }
    check_tau(tau, x.dim())?;
    let z = hard_threshold(t * x.as_matrix(), tau);
    Ok(CodedBatch { z, tau })
}

/// Global minimizer over `T` of `‖TX − Z‖²_F + λ(ε‖T‖²_F − log|det T|)`.
///
/// With `XXᵀ + λεI = LLᵀ` and `L⁻¹XZᵀ = QΣRᵀ`, the minimizer is
/// `T = ½ R (Σ + (Σ² + 2λI)^{1/2}) Qᵀ L⁻¹`.
pub fn update_transform(
    x: &FeatureMatrix,
    z: &CodedBatch,
    lambda: f64,
    epsilon: f64,
) -> Result<DMatrix<f64>> {
    update_transform_raw(x.as_matrix(), &z.z, lambda, epsilon)
}

pub(crate) fn update_transform_raw(
    x: &DMatrix<f64>,
    z: &DMatrix<f64>,
    lambda: f64,
    epsilon: f64,
) -> Result<DMatrix<f64>> {
    if lambda == 0.0 {
        return Err(Error::argument("closed form requires λ > 0"));
    }
    if !(lambda > 0.0 && lambda.is_finite()) || !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::argument(format!(
            "update_transform needs finite λ > 0 and ε > 0, got λ={lambda}, ε={epsilon}"
        )));
    }
    if x.iter().chain(z.iter()).any(|v| !v.is_finite()) {
        return Err(Error::argument("update_transform: non-finite input"));
    }
    if x.shape() != z.shape() {
        return Err(Error::argument(format!(
            "update_transform: X {:?} and Z {:?} differ in shape",
            x.shape(),
            z.shape()
        )));
    }
    let d = x.nrows();
    let mut gram = x * x.transpose();
    for i in 0..d {
        gram[(i, i)] += lambda * epsilon;
    }
    let chol = gram
        .cholesky()
        .ok_or_else(|| Error::Numerical("XXᵀ + λεI is not positive definite".into()))?;
    let l = chol.l();
    let l_inv = l
        .solve_lower_triangular(&DMatrix::identity(d, d))
        .ok_or_else(|| Error::Numerical("triangular factor is singular".into()))?;
    let b = &l_inv * x * z.transpose();
    let svd = b.svd(true, true);
    let q = svd.u.expect("requested U");
    let r_t = svd.v_t.expect("requested Vᵀ");
    let middle = DVector::from_iterator(
        d,
        svd.singular_values
            .iter()
            .map(|s| 0.5 * (s + (s * s + 2.0 * lambda).sqrt())),
    );
    let t = r_t.transpose() * DMatrix::from_diagonal(&middle) * q.transpose() * l_inv;
    if t.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("transform update produced non-finite entries".into()));
    }
    Ok(t)
}

/// Seeded orthonormal matrix (Q factor of a Gaussian matrix).
pub fn random_orthonormal(d: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = DMatrix::from_fn(d, d, |_, _| StandardNormal.sample(&mut rng));
    g.qr().q()
}

fn initial_transform(d: usize, params: &TransformParams) -> DMatrix<f64> {
    match params.init {
        TransformInit::Identity => DMatrix::identity(d, d),
        TransformInit::RandomOrthonormal => random_orthonormal(d, params.seed),
    }
}

pub(crate) fn relative_change(prev: f64, cur: f64) -> f64 {
    (prev - cur).abs() / prev.abs().max(f64::MIN_POSITIVE)
}

/// Alternates exact sparse coding and the closed-form transform update.
///
/// `objective_trace[0]` is the objective at the initial transform with its
/// optimal codes; one entry is appended per iteration.
pub fn fit_transform(
    x: &FeatureMatrix,
    params: &TransformParams,
    t_init: Option<&DMatrix<f64>>,
) -> Result<TransformModel> {
    let d = x.dim();
    params.validate(d)?;
    let mut t = match t_init {
        Some(t0) => {
            if t0.shape() != (d, d) {
                return Err(Error::argument(format!(
                    "initial transform is {:?}, expected {d}x{d}",
                    t0.shape()
                )));
            }
            t0.clone()
        }
        None => initial_transform(d, params),
    };
    let mut z = sparse_code(&t, x, params.tau)?;
    let mut trace = vec![objective(&t, x, &z, params.lambda, params.epsilon)?];
    for _ in 0..params.max_iters {
        t = update_transform(x, &z, params.lambda, params.epsilon)?;
        z = sparse_code(&t, x, params.tau)?;
        let value = objective(&t, x, &z, params.lambda, params.epsilon)?;
        let prev = *trace.last().expect("trace is non-empty");
        trace.push(value);
        if relative_change(prev, value) < params.tol {
            break;
        }
    }
    Ok(TransformModel {
        t,
        params: params.clone(),
        objective_trace: trace,
    })
}

/// Codes new samples with a learned transform.
pub fn encode(model: &TransformModel, x: &FeatureMatrix) -> Result<CodedBatch> {
    if x.dim() != model.dim() {
        return Err(Error::argument(format!(
            "model expects d = {}, data has d = {}",
            model.dim(),
            x.dim()
        )));
    }
    sparse_code(&model.t, x, model.params.tau)
}
