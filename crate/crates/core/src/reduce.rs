//! Principal-component projection applied to descriptors before transform
//! learning, so that the square transforms stay small.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::tlcore::FeatureMatrix;

#[derive(Debug, Clone, PartialEq)]
pub struct Pca {
    pub mean: DVector<f64>,
    /// `d × m`, orthonormal columns ordered by decreasing variance.
    pub basis: DMatrix<f64>,
    pub variances: Vec<f64>,
}

impl Pca {
    /// Fits at most `components` principal directions of the columns of `x`.
    /// Directions with negligible variance are dropped, so the result may
    /// have fewer components than requested.
    pub fn fit(x: &FeatureMatrix, components: usize) -> Result<Self> {
        if components == 0 {
            return Err(Error::argument("PCA needs at least one component"));
        }
        let data = x.as_matrix();
        let (d, n) = data.shape();
        let mean = data.column_mean();
        let mut centered = data.clone();
        for mut c in centered.column_iter_mut() {
            c -= &mean;
        }

        // eigen-decompose whichever Gram matrix is smaller
        let (values, vectors) = if n < d {
            let eig = SymmetricEigen::new(centered.tr_mul(&centered));
            let dirs = &centered * &eig.eigenvectors;
            (eig.eigenvalues, dirs)
        } else {
            let eig = SymmetricEigen::new(&centered * centered.transpose());
            (eig.eigenvalues, eig.eigenvectors)
        };
        let mut order: Vec<usize> = (0..values.len()).collect();
        order.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
        let top = values[order[0]].max(0.0);

        let mut columns = Vec::new();
        let mut variances = Vec::new();
        for &i in &order {
            if columns.len() == components || values[i] <= 1e-12 * top || top == 0.0 {
                break;
            }
            let mut v = vectors.column(i).into_owned();
            v /= v.norm();
            // sign convention: largest-magnitude entry positive
            let imax = v.iamax();
            if v[imax] < 0.0 {
                v = -v;
            }
            columns.push(v);
            variances.push(values[i] / (n.max(2) - 1) as f64);
        }
        if columns.is_empty() {
            return Err(Error::Numerical("training data has no variance".into()));
        }
        Ok(Pca {
            mean,
            basis: DMatrix::from_columns(&columns),
            variances,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.basis.nrows()
    }

    pub fn n_components(&self) -> usize {
        self.basis.ncols()
    }

    /// Coordinates `Bᵀ(x − μ)` of every column.
    pub fn apply(&self, x: &FeatureMatrix) -> Result<FeatureMatrix> {
        if x.dim() != self.input_dim() {
            return Err(Error::argument(format!(
                "data has d = {}, projection expects {}",
                x.dim(),
                self.input_dim()
            )));
        }
        let mut centered = x.as_matrix().clone();
        for mut c in centered.column_iter_mut() {
            c -= &self.mean;
        }
        FeatureMatrix::new(self.basis.tr_mul(&centered))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn random(rows: usize, cols: usize, seed: u64) -> FeatureMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        FeatureMatrix::new(DMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(&mut rng)))
            .unwrap()
    }

    #[test]
    fn wide_and_tall_paths_agree() {
        // n < d uses the sample Gram matrix, n ≥ d the covariance
        let x = random(5, 4, 1);
        let wide = Pca::fit(&x, 3).unwrap();
        let padded = FeatureMatrix::hstack(&[&x, &x]).unwrap();
        let tall = Pca::fit(&padded, 3).unwrap();
        assert!((&wide.basis - &tall.basis).abs().max() < 1e-9);
    }

    #[test]
    fn projection_is_orthonormal_and_centered() {
        let x = random(10, 30, 2);
        let pca = Pca::fit(&x, 4).unwrap();
        let gram = pca.basis.tr_mul(&pca.basis);
        assert!((gram - DMatrix::identity(4, 4)).abs().max() < 1e-10);
        let y = pca.apply(&x).unwrap();
        assert!(y.as_matrix().column_mean().abs().max() < 1e-10);
        assert!(pca.variances.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn rank_deficient_data_drops_empty_directions() {
        let base = random(2, 20, 3);
        let lifted = DMatrix::from_row_slice(4, 2, &[1.0, 0.0, 0.0, 1.0, 1.0, 1.0, 2.0, -1.0])
            * base.as_matrix();
        let pca = Pca::fit(&FeatureMatrix::new(lifted).unwrap(), 4).unwrap();
        assert_eq!(pca.n_components(), 2);
    }

    #[test]
    fn constant_data_is_rejected() {
        let x = FeatureMatrix::new(DMatrix::from_element(3, 5, 0.5)).unwrap();
        assert!(Pca::fit(&x, 2).is_err());
    }
}
