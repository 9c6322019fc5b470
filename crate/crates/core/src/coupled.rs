//! Two-domain matchers built on [`crate::tlcore`].
//!
//! The unsupervised matcher learns one transform per domain from unlabeled
//! data and compares sparse codes directly. The semi-supervised matcher
//! starts from the unsupervised transforms and refines them on labeled
//! face/skull pairs together with a linear map `W` that aligns face codes to
//! skull codes, minimizing
//!
//! ```text
//! ‖T_f X_f − Z_f‖² + λ(ε‖T_f‖² − log|det T_f|)
//!   + ‖T_s X_s − Z_s‖² + λ(ε‖T_s‖² − log|det T_s|) + γ‖W Z_f − Z_s‖²
//! ```

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tlcore::{
    encode, fit_transform, hard_threshold, regularizer, relative_change,
    sparse_code, update_transform_raw, CodedBatch, FeatureMatrix, TransformModel, TransformParams,
};

/// Face-domain and skull-domain samples. When `paired`, column `i` of the
/// face matrix and column `i` of the skull matrix belong to the same subject.
#[derive(Debug, Clone)]
pub struct DomainBatch {
    pub faces: FeatureMatrix,
    pub skulls: FeatureMatrix,
    pub paired: bool,
}

impl DomainBatch {
    pub fn paired(faces: FeatureMatrix, skulls: FeatureMatrix) -> Result<Self> {
        if faces.n_samples() != skulls.n_samples() {
            return Err(Error::argument(format!(
                "paired batch needs equal column counts, got {} faces and {} skulls",
                faces.n_samples(),
                skulls.n_samples()
            )));
        }
        Ok(DomainBatch {
            faces,
            skulls,
            paired: true,
        })
    }

    pub fn unpaired(faces: FeatureMatrix, skulls: FeatureMatrix) -> Self {
        DomainBatch {
            faces,
            skulls,
            paired: false,
        }
    }

    /// Face column `i` is mated with skull column `pair_index()[i]`.
    pub fn pair_index(&self) -> Option<Vec<usize>> {
        self.paired.then(|| (0..self.faces.n_samples()).collect())
    }

    fn check_dims(&self) -> Result<usize> {
        if self.faces.dim() != self.skulls.dim() {
            return Err(Error::argument(format!(
                "face features have d = {}, skull features d = {}",
                self.faces.dim(),
                self.skulls.dim()
            )));
        }
        Ok(self.faces.dim())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoupledModel {
    pub t_face: DMatrix<f64>,
    pub t_skull: DMatrix<f64>,
    /// Maps face codes into the skull code space.
    pub w: DMatrix<f64>,
    /// Supervision weight; zero means the domains are not coupled.
    pub gamma: f64,
    /// Ridge stabilizer used in the last `W` solve.
    pub rho: f64,
    pub params: TransformParams,
    /// Joint objective after initialization and after each supervised cycle.
    pub joint_trace: Vec<f64>,
    pub face_trace: Vec<f64>,
    pub skull_trace: Vec<f64>,
}

impl CoupledModel {
    pub fn dim(&self) -> usize {
        self.t_face.nrows()
    }

    pub fn face_model(&self) -> TransformModel {
        TransformModel {
            t: self.t_face.clone(),
            params: self.params.clone(),
            objective_trace: self.face_trace.clone(),
        }
    }

    pub fn skull_model(&self) -> TransformModel {
        TransformModel {
            t: self.t_skull.clone(),
            params: self.params.clone(),
            objective_trace: self.skull_trace.clone(),
        }
    }
}

/// Unsupervised two-domain model: a face transform learned on face data and
/// a skull transform learned on skull data, starting from the face transform.
pub fn fit_ustl(
    unlabeled_faces: &FeatureMatrix,
    unlabeled_skulls: &FeatureMatrix,
    params: &TransformParams,
) -> Result<CoupledModel> {
    if unlabeled_faces.dim() != unlabeled_skulls.dim() {
        return Err(Error::argument(format!(
            "face features have d = {}, skull features d = {}",
            unlabeled_faces.dim(),
            unlabeled_skulls.dim()
        )));
    }
    let face = fit_transform(unlabeled_faces, params, None)?;
    let skull = fit_transform(unlabeled_skulls, params, Some(&face.t))?;
    let d = face.dim();
    Ok(CoupledModel {
        t_face: face.t,
        t_skull: skull.t,
        w: DMatrix::from_element(d, d, 1.0),
        gamma: 0.0,
        rho: 0.0,
        params: params.clone(),
        joint_trace: Vec::new(),
        face_trace: face.objective_trace,
        skull_trace: skull.objective_trace,
    })
}

fn coupling_term(w: &DMatrix<f64>, z_f: &DMatrix<f64>, z_s: &DMatrix<f64>) -> f64 {
    (w * z_f - z_s).norm_squared()
}

fn joint_value(
    t_f: &DMatrix<f64>,
    t_s: &DMatrix<f64>,
    w: &DMatrix<f64>,
    gamma: f64,
    params: &TransformParams,
    x_f: &DMatrix<f64>,
    x_s: &DMatrix<f64>,
    z_f: &DMatrix<f64>,
    z_s: &DMatrix<f64>,
) -> Result<f64> {
    let face = (t_f * x_f - z_f).norm_squared() + regularizer(t_f, params.lambda, params.epsilon)?;
    let skull = (t_s * x_s - z_s).norm_squared() + regularizer(t_s, params.lambda, params.epsilon)?;
    let coupling = if gamma == 0.0 {
        0.0
    } else {
        gamma * coupling_term(w, z_f, z_s)
    };
    Ok(face + skull + coupling)
}

/// Joint objective of the semi-supervised formulation on a paired batch.
pub fn joint_objective(
    model: &CoupledModel,
    batch: &DomainBatch,
    z_f: &CodedBatch,
    z_s: &CodedBatch,
) -> Result<f64> {
    if !batch.paired {
        return Err(Error::argument("joint objective needs a paired batch"));
    }
    let d = batch.check_dims()?;
    let n = batch.faces.n_samples();
    if model.dim() != d || z_f.z.shape() != (d, n) || z_s.z.shape() != (d, n) {
        return Err(Error::argument("joint objective: dimension mismatch"));
    }
    joint_value(
        &model.t_face,
        &model.t_skull,
        &model.w,
        model.gamma,
        &model.params,
        batch.faces.as_matrix(),
        batch.skulls.as_matrix(),
        &z_f.z,
        &z_s.z,
    )
}

/// Default ridge stabilizer: `1e-6 · trace(Z_f Z_fᵀ) / d`.
pub fn default_rho(z_f: &DMatrix<f64>) -> f64 {
    1e-6 * z_f.norm_squared() / z_f.nrows() as f64
}

/// Ridge least-squares alignment map
/// `W = Z_s Z_fᵀ (Z_f Z_fᵀ + ρI)⁻¹`, minimizing `‖W Z_f − Z_s‖² + ρ‖W‖²`.
pub fn update_w(z_f: &CodedBatch, z_s: &CodedBatch, rho: f64) -> Result<DMatrix<f64>> {
    update_w_raw(&z_f.z, &z_s.z, rho)
}

fn update_w_raw(z_f: &DMatrix<f64>, z_s: &DMatrix<f64>, rho: f64) -> Result<DMatrix<f64>> {
    if z_f.ncols() != z_s.ncols() {
        return Err(Error::argument(format!(
            "update_w: {} face codes vs {} skull codes",
            z_f.ncols(),
            z_s.ncols()
        )));
    }
    if !(rho >= 0.0 && rho.is_finite()) {
        return Err(Error::argument(format!("rho must be finite and >= 0, got {rho}")));
    }
    let d = z_f.nrows();
    let mut gram = z_f * z_f.transpose();
    let scale = (0..d).map(|i| gram[(i, i)]).fold(0.0, f64::max);
    for i in 0..d {
        gram[(i, i)] += rho;
    }
    let singular = || Error::Numerical("singular normal equations; increase rho".into());
    let chol = gram.cholesky().ok_or_else(singular)?;
    if rho == 0.0 {
        // rank-deficient Gram matrices can still factor with round-off pivots
        let l = chol.l_dirty();
        let tiny = scale * d as f64 * f64::EPSILON;
        if scale == 0.0 || (0..d).any(|i| l[(i, i)] * l[(i, i)] <= tiny) {
            return Err(singular());
        }
    }
    let w_t = chol.solve(&(z_f * z_s.transpose()));
    Ok(w_t.transpose())
}

fn check_finite(m: &DMatrix<f64>, what: &str) -> Result<()> {
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::argument(format!("{what} contains non-finite entries")));
    }
    Ok(())
}

/// Face-code subproblem with the coupling term: per column, solves
/// `(I + γWᵀW) z = T_f x + γWᵀ z_s` and keeps the `tau` largest magnitudes.
/// Exact when `tau = d`; `γ = 0` reduces to [`sparse_code`].
pub fn coupled_sparse_code_f(
    t_f: &DMatrix<f64>,
    x_f: &FeatureMatrix,
    z_s: &CodedBatch,
    w: &DMatrix<f64>,
    gamma: f64,
    tau: usize,
) -> Result<CodedBatch> {
    if gamma == 0.0 {
        return sparse_code(t_f, x_f, tau);
    }
    let d = x_f.dim();
    if t_f.shape() != (d, d) || w.shape() != (d, d) || z_s.z.shape() != (d, x_f.n_samples()) {
        return Err(Error::argument("coupled face coding: dimension mismatch"));
    }
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(Error::argument(format!("gamma must be finite and >= 0, got {gamma}")));
    }
    check_finite(t_f, "face transform")?;
    check_finite(w, "coupling map")?;
    check_finite(&z_s.z, "skull codes")?;
    if tau == 0 || tau > d {
        return Err(Error::argument(format!("tau = {tau} invalid for d = {d}")));
    }
    let mut system = w.transpose() * w * gamma;
    for i in 0..d {
        system[(i, i)] += 1.0;
    }
    let chol = system
        .cholesky()
        .ok_or_else(|| Error::Numerical("I + γWᵀW is not positive definite".into()))?;
    let rhs = t_f * x_f.as_matrix() + w.transpose() * &z_s.z * gamma;
    let z = hard_threshold(chol.solve(&rhs), tau);
    Ok(CodedBatch { z, tau })
}

/// Skull-code subproblem with the coupling term; exact:
/// the top-`tau` entries of `(T_s x + γ W z_f) / (1 + γ)`.
pub fn coupled_sparse_code_s(
    t_s: &DMatrix<f64>,
    x_s: &FeatureMatrix,
    z_f: &CodedBatch,
    w: &DMatrix<f64>,
    gamma: f64,
    tau: usize,
) -> Result<CodedBatch> {
    if gamma == 0.0 {
        return sparse_code(t_s, x_s, tau);
    }
    let d = x_s.dim();
    if t_s.shape() != (d, d) || w.shape() != (d, d) || z_f.z.shape() != (d, x_s.n_samples()) {
        return Err(Error::argument("coupled skull coding: dimension mismatch"));
    }
    if tau == 0 || tau > d {
        return Err(Error::argument(format!("tau = {tau} invalid for d = {d}")));
    }
    let target = (t_s * x_s.as_matrix() + w * &z_f.z * gamma) / (1.0 + gamma);
    Ok(CodedBatch {
        z: hard_threshold(target, tau),
        tau,
    })
}

/// Keeps, column by column, whichever of `candidate` or `current` has the
/// lower face-subproblem cost `‖T_f x − z‖² + γ‖W z − z_s‖²`.
fn guard_face_codes(
    tx: &DMatrix<f64>,
    w: &DMatrix<f64>,
    z_s: &DMatrix<f64>,
    gamma: f64,
    current: &DMatrix<f64>,
    mut candidate: DMatrix<f64>,
) -> DMatrix<f64> {
    let cost = |z: &DVector<f64>, j: usize| {
        (tx.column(j) - z).norm_squared() + gamma * (w * z - z_s.column(j)).norm_squared()
    };
    for j in 0..candidate.ncols() {
        let new: DVector<f64> = candidate.column(j).into();
        let old: DVector<f64> = current.column(j).into();
        if cost(&old, j) < cost(&new, j) {
            candidate.set_column(j, &old);
        }
    }
    candidate
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupervisionConfig {
    pub gamma: f64,
    /// Fixed ridge stabilizer; `None` uses [`default_rho`] at every solve.
    pub rho: Option<f64>,
    pub sup_iters: usize,
}

impl Default for SupervisionConfig {
    fn default() -> Self {
        SupervisionConfig {
            gamma: 1.0,
            rho: None,
            sup_iters: 20,
        }
    }
}

/// Semi-supervised two-domain model.
///
/// 1. Unsupervised transforms from `unlabeled` ([`fit_ustl`]).
/// 2. `W` starts as the all-ones matrix.
/// 3. On the labeled pairs, each cycle updates `W`, the face codes, the skull
///    codes and both transforms; the joint objective is recorded after
///    initialization and after every completed cycle. A cycle that raises the
///    objective by more than `1e-6·(1+|J|)` is rolled back and ends training.
///
/// With `gamma = 0` nothing couples the domains: `W` stays all-ones and the
/// refinement is plain transform learning on the labeled data.
pub fn fit_sstl(
    unlabeled: &DomainBatch,
    labeled: &DomainBatch,
    params: &TransformParams,
    sup: &SupervisionConfig,
) -> Result<CoupledModel> {
    if !labeled.paired {
        return Err(Error::argument("labeled batch must be paired"));
    }
    let d = unlabeled.check_dims()?;
    if labeled.check_dims()? != d {
        return Err(Error::argument(format!(
            "labeled features have d = {}, unlabeled d = {d}",
            labeled.faces.dim()
        )));
    }
    let gamma = sup.gamma;
    if !(gamma >= 0.0 && gamma.is_finite()) {
        return Err(Error::argument(format!("gamma must be finite and >= 0, got {gamma}")));
    }
    let tau = params.tau;
    let lambda = params.lambda;
    let epsilon = params.epsilon;

    let base = fit_ustl(&unlabeled.faces, &unlabeled.skulls, params)?;
    let x_f = &labeled.faces;
    let x_s = &labeled.skulls;

    #[derive(Clone)]
    struct Iterate {
        t_f: DMatrix<f64>,
        t_s: DMatrix<f64>,
        w: DMatrix<f64>,
        z_f: DMatrix<f64>,
        z_s: DMatrix<f64>,
        rho: f64,
    }

    let mut it = Iterate {
        z_f: sparse_code(&base.t_face, x_f, tau)?.z,
        z_s: sparse_code(&base.t_skull, x_s, tau)?.z,
        t_f: base.t_face.clone(),
        t_s: base.t_skull.clone(),
        w: DMatrix::from_element(d, d, 1.0),
        rho: sup.rho.unwrap_or(0.0),
    };
    let joint = |it: &Iterate| {
        joint_value(
            &it.t_f,
            &it.t_s,
            &it.w,
            gamma,
            params,
            x_f.as_matrix(),
            x_s.as_matrix(),
            &it.z_f,
            &it.z_s,
        )
    };
    let mut trace = vec![joint(&it)?];

    for _ in 0..sup.sup_iters {
        let prev = it.clone();
        if gamma > 0.0 {
            let rho = match sup.rho {
                Some(r) => r,
                None => {
                    let r = default_rho(&it.z_f);
                    if r > 0.0 {
                        r
                    } else {
                        f64::MIN_POSITIVE.sqrt()
                    }
                }
            };
            let w_new = update_w_raw(&it.z_f, &it.z_s, rho)?;
            // the ridge term is not part of the joint objective; keep the old
            // map if the unregularized fit got worse
            if coupling_term(&w_new, &it.z_f, &it.z_s) <= coupling_term(&it.w, &it.z_f, &it.z_s) {
                it.w = w_new;
                it.rho = rho;
            }

            let z_s_batch = CodedBatch { z: it.z_s.clone(), tau };
            let candidate = coupled_sparse_code_f(&it.t_f, x_f, &z_s_batch, &it.w, gamma, tau)?.z;
            let tx = &it.t_f * x_f.as_matrix();
            it.z_f = guard_face_codes(&tx, &it.w, &it.z_s, gamma, &it.z_f, candidate);

            let z_f_batch = CodedBatch { z: it.z_f.clone(), tau };
            it.z_s = coupled_sparse_code_s(&it.t_s, x_s, &z_f_batch, &it.w, gamma, tau)?.z;
        } else {
            it.z_f = sparse_code(&it.t_f, x_f, tau)?.z;
            it.z_s = sparse_code(&it.t_s, x_s, tau)?.z;
        }
        it.t_f = update_transform_raw(x_f.as_matrix(), &it.z_f, lambda, epsilon)?;
        it.t_s = update_transform_raw(x_s.as_matrix(), &it.z_s, lambda, epsilon)?;

        let value = joint(&it)?;
        let last = *trace.last().expect("trace is non-empty");
        if value > last + 1e-6 * (1.0 + last.abs()) {
            it = prev;
            break;
        }
        trace.push(value);
        if relative_change(last, value) < params.tol {
            break;
        }
    }

    Ok(CoupledModel {
        t_face: it.t_f,
        t_skull: it.t_s,
        w: it.w,
        gamma,
        rho: it.rho,
        params: params.clone(),
        joint_trace: trace,
        face_trace: base.face_trace,
        skull_trace: base.skull_trace,
    })
}

/// Probe-by-gallery Euclidean distances; lower is a better match.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchScoreMatrix {
    pub scores: DMatrix<f64>,
    pub probe_ids: Vec<String>,
    pub gallery_ids: Vec<String>,
}

impl MatchScoreMatrix {
    /// Distances between probe columns and gallery columns.
    pub fn euclidean(
        probes: &DMatrix<f64>,
        gallery: &DMatrix<f64>,
        probe_ids: Vec<String>,
        gallery_ids: Vec<String>,
    ) -> Result<Self> {
        if probes.nrows() != gallery.nrows() {
            return Err(Error::argument(format!(
                "probe features have d = {}, gallery d = {}",
                probes.nrows(),
                gallery.nrows()
            )));
        }
        if probe_ids.len() != probes.ncols() || gallery_ids.len() != gallery.ncols() {
            return Err(Error::argument("identifier lists do not match column counts"));
        }
        let scores = DMatrix::from_fn(probes.ncols(), gallery.ncols(), |i, j| {
            probes
                .column(i)
                .iter()
                .zip(gallery.column(j).iter())
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt()
        });
        Ok(MatchScoreMatrix {
            scores,
            probe_ids,
            gallery_ids,
        })
    }

    pub fn n_probes(&self) -> usize {
        self.scores.nrows()
    }

    pub fn n_gallery(&self) -> usize {
        self.scores.ncols()
    }
}

/// Scores skull probes against face gallery entries in code space. The
/// unsupervised model (`gamma = 0`) compares codes directly; otherwise face
/// codes are first mapped through `W`.
pub fn match_domains(
    model: &CoupledModel,
    gallery_faces: &FeatureMatrix,
    probe_skulls: &FeatureMatrix,
    gallery_ids: Vec<String>,
    probe_ids: Vec<String>,
) -> Result<MatchScoreMatrix> {
    let z_f = encode(&model.face_model(), gallery_faces)?;
    let z_s = encode(&model.skull_model(), probe_skulls)?;
    let gallery = if model.gamma == 0.0 {
        z_f.z
    } else {
        &model.w * z_f.z
    };
    MatchScoreMatrix::euclidean(&z_s.z, &gallery, probe_ids, gallery_ids)
}
