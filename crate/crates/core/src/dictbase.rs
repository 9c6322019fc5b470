//! Dictionary-learning baseline: orthogonal matching pursuit coding and
//! method-of-optimal-directions (MOD) dictionary updates.

use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::tlcore::FeatureMatrix;

/// Ridge added to `ZZᵀ` in the least-squares dictionary update.
const LS_RIDGE: f64 = 1e-8;

/// Atoms whose absolute cosine with an earlier atom exceeds this are
/// treated as dead and replaced.
const DUPLICATE_COHERENCE: f64 = 0.99;

/// Relative per-iteration improvement below which the fit counts as stalled.
const STALL_RATIO: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub struct Dictionary {
    /// `d × k`, unit-norm columns.
    pub atoms: DMatrix<f64>,
    pub sparsity: usize,
    /// Reconstruction error `‖X − DZ‖²_F`, two entries per iteration: after
    /// the coding step and after the least-squares step (before renormalization).
    pub train_error_trace: Vec<f64>,
}

impl Dictionary {
    pub fn new(atoms: DMatrix<f64>, sparsity: usize) -> Result<Self> {
        let (d, k) = atoms.shape();
        if d == 0 || k == 0 {
            return Err(Error::argument("dictionary needs at least one atom"));
        }
        if sparsity == 0 || sparsity > d.min(k) {
            return Err(Error::argument(format!(
                "sparsity {sparsity} must be in 1..={}",
                d.min(k)
            )));
        }
        for (j, col) in atoms.column_iter().enumerate() {
            if (col.norm() - 1.0).abs() > 1e-9 {
                return Err(Error::argument(format!("atom {j} is not unit norm")));
            }
        }
        Ok(Dictionary {
            atoms,
            sparsity,
            train_error_trace: Vec::new(),
        })
    }

    pub fn dim(&self) -> usize {
        self.atoms.nrows()
    }

    pub fn n_atoms(&self) -> usize {
        self.atoms.ncols()
    }
}

/// Least-squares coefficients of `x` on the atoms listed in `support`.
fn refit(atoms: &DMatrix<f64>, support: &[usize], x: &DVector<f64>) -> Result<DVector<f64>> {
    let sub = atoms.select_columns(support);
    let qr = sub.qr();
    let rhs = qr.q().transpose() * x;
    qr.r()
        .solve_upper_triangular(&rhs)
        .ok_or_else(|| Error::Numerical("selected atoms are linearly dependent".into()))
}

/// Greedy sparse code of `x` with at most `s` atoms. Each step picks the atom
/// most correlated with the residual (ties: lowest index) and refits all
/// selected coefficients by least squares, so the residual stays orthogonal
/// to the selected atoms. Returns a dense length-`k` vector.
pub fn omp(dict: &Dictionary, x: &[f64], s: usize) -> Result<DVector<f64>> {
    let (d, k) = dict.atoms.shape();
    if x.len() != d {
        return Err(Error::argument(format!("signal has length {}, dictionary d = {d}", x.len())));
    }
    if s == 0 || s > d.min(k) {
        return Err(Error::argument(format!("sparsity {s} must be in 1..={}", d.min(k))));
    }
    let x = DVector::from_column_slice(x);
    let mut code = DVector::zeros(k);
    let x_norm = x.norm();
    if x_norm == 0.0 {
        return Ok(code);
    }
    let mut support: Vec<usize> = Vec::with_capacity(s);
    let mut residual = x.clone();
    let mut coefs = DVector::zeros(0);
    for _ in 0..s {
        let corr = dict.atoms.tr_mul(&residual);
        let mut best: Option<(usize, f64)> = None;
        for (j, c) in corr.iter().enumerate() {
            if support.contains(&j) {
                continue;
            }
            if best.is_none_or(|(_, b)| c.abs() > b) {
                best = Some((j, c.abs()));
            }
        }
        let Some((j, c)) = best else { break };
        if c <= 1e-14 * x_norm {
            break;
        }
        support.push(j);
        coefs = refit(&dict.atoms, &support, &x)?;
        residual = &x - dict.atoms.select_columns(&support) * &coefs;
    }
    for (i, &j) in support.iter().enumerate() {
        code[j] = coefs[i];
    }
    Ok(code)
}

fn code_all(dict: &Dictionary, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let columns = (0..x.ncols())
        .into_par_iter()
        .map(|j| omp(dict, x.column(j).as_slice(), dict.sparsity))
        .collect::<Result<Vec<_>>>()?;
    Ok(DMatrix::from_columns(&columns))
}

/// Sparse codes of every column, used as the matching representation.
pub fn dl_features(dict: &Dictionary, x: &FeatureMatrix) -> Result<FeatureMatrix> {
    if x.dim() != dict.dim() {
        return Err(Error::argument(format!(
            "data has d = {}, dictionary d = {}",
            x.dim(),
            dict.dim()
        )));
    }
    FeatureMatrix::new(code_all(dict, x.as_matrix())?)
}

/// Learns a `d × k` dictionary by alternating OMP coding with the
/// least-squares update `D = XZᵀ(ZZᵀ + 1e-8·I)⁻¹` and column renormalization.
/// Atoms that collapse to zero or duplicate an earlier atom are replaced by
/// the worst-reconstructed training columns.
pub fn fit_dictionary(
    x: &FeatureMatrix,
    k: usize,
    s: usize,
    iters: usize,
    seed: u64,
) -> Result<Dictionary> {
    let (d, n) = (x.dim(), x.n_samples());
    if k == 0 {
        return Err(Error::argument("k must be >= 1"));
    }
    if k > n {
        return Err(Error::argument(format!("k = {k} atoms exceeds n = {n} training columns")));
    }
    if s == 0 || s > d.min(k) {
        return Err(Error::argument(format!("sparsity {s} must be in 1..={}", d.min(k))));
    }
    let data = x.as_matrix();

    // seeded choice of k distinct nonzero training columns
    let nonzero: Vec<usize> = (0..n).filter(|&j| data.column(j).norm() > 0.0).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picks: Vec<usize> = sample(&mut rng, nonzero.len(), k.min(nonzero.len()))
        .into_iter()
        .map(|i| nonzero[i])
        .collect();
    let mut atoms = DMatrix::zeros(d, k);
    for j in 0..k {
        match picks.get(j) {
            Some(&col) => {
                let c = data.column(col);
                atoms.set_column(j, &(c / c.norm()));
            }
            None => atoms[(j % d, j)] = 1.0,
        }
    }
    let mut dict = Dictionary::new(atoms, s)?;
    let mut trace = Vec::with_capacity(2 * iters);
    let data_energy = data.norm_squared();
    let mut best: Option<(f64, DMatrix<f64>)> = None;

    for _ in 0..iters {
        let z = code_all(&dict, data)?;
        let err_coded = (data - &dict.atoms * &z).norm_squared();
        if best.as_ref().is_none_or(|(e, _)| err_coded < *e) {
            best = Some((err_coded, dict.atoms.clone()));
        }

        let mut gram = &z * z.transpose();
        for i in 0..k {
            gram[(i, i)] += LS_RIDGE;
        }
        let chol = gram
            .cholesky()
            .ok_or_else(|| Error::Numerical("ZZᵀ + ridge is not positive definite".into()))?;
        let updated = chol.solve(&(&z * data.transpose())).transpose();
        let err_ls = (data - &updated * &z).norm_squared();
        if err_ls > err_coded + 1e-9 * (1.0 + err_coded) {
            return Err(Error::Numerical(format!(
                "least-squares dictionary step increased the error: {err_coded} -> {err_ls}"
            )));
        }
        // when coding stops improving while error remains, the least-used atom
        // is recycled as well
        let stalled = trace.len() >= 2
            && err_coded > 1e-20 * data_energy
            && trace[trace.len() - 2] - err_coded < STALL_RATIO * err_coded;
        let recycled = stalled.then(|| {
            (0..k)
                .min_by(|&a, &b| z.row(a).norm_squared().total_cmp(&z.row(b).norm_squared()))
                .unwrap()
        });
        trace.push(err_coded);
        trace.push(err_ls);

        // renormalize; revive dead atoms with the worst-fit training columns
        let residual_norms: Vec<f64> = (data - &updated * &z)
            .column_iter()
            .map(|c| c.norm_squared())
            .collect();
        let mut worst: Vec<usize> = (0..n).filter(|&j| data.column(j).norm() > 0.0).collect();
        worst.sort_by(|&a, &b| residual_norms[b].total_cmp(&residual_norms[a]).then(a.cmp(&b)));
        let mut worst = worst.into_iter();
        let mut atoms = updated;
        for j in 0..k {
            let norm = atoms.column(j).norm();
            let duplicate = norm > 1e-12
                && (0..j).any(|i| {
                    atoms.column(i).dot(&atoms.column(j)).abs() > DUPLICATE_COHERENCE * norm
                });
            if norm > 1e-12 && norm.is_finite() && !duplicate && recycled != Some(j) {
                let c = atoms.column(j) / norm;
                atoms.set_column(j, &c);
            } else if let Some(col) = worst.next() {
                let c = data.column(col);
                atoms.set_column(j, &(c / c.norm()));
            } else {
                atoms.column_mut(j).fill(0.0);
                atoms[(j % d, j)] = 1.0;
            }
        }
        dict = Dictionary::new(atoms, s)?;
    }
    // recycling can leave the last iterate worse than an earlier one
    if let Some((best_err, best_atoms)) = best {
        let final_err = (data - &dict.atoms * code_all(&dict, data)?).norm_squared();
        if best_err < final_err {
            dict = Dictionary::new(best_atoms, s)?;
        }
    }
    dict.train_error_trace = trace;
    Ok(dict)
}

/// `‖X − DZ‖_F / ‖X‖_F` with `Z` the OMP codes of `X`.
pub fn relative_reconstruction_error(dict: &Dictionary, x: &FeatureMatrix) -> Result<f64> {
    let z = dl_features(dict, x)?;
    let data = x.as_matrix();
    Ok((data - &dict.atoms * z.as_matrix()).norm() / data.norm())
}
