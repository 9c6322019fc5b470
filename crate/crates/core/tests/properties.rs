use std::collections::HashSet;

use nalgebra::DMatrix;
use proptest::prelude::*;

use skullface::coupled::MatchScoreMatrix;
use skullface::dataset::{plan_folds, ManifestRecord, Modality, Protocol};
use skullface::eval::{cmc, identify, Fusion};
use skullface::tlcore::{objective, sparse_code, update_transform};
use skullface::{xfml, CodedBatch, FeatureMatrix, TransformModel, TransformParams};

fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = DMatrix<f64>> {
    prop::collection::vec(-3.0..3.0f64, rows * cols).prop_map(move |v| DMatrix::from_vec(rows, cols, v))
}

fn code_case() -> impl Strategy<Value = (DMatrix<f64>, DMatrix<f64>, usize)> {
    (1usize..=6, 1usize..=5).prop_flat_map(|(d, n)| (matrix(d, d), matrix(d, n), 1..=d))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn sparse_code_beats_every_other_support((t, x, tau) in code_case()) {
        let fx = FeatureMatrix::new(x).unwrap();
        let z = sparse_code(&t, &fx, tau).unwrap();
        let tx = &t * fx.as_matrix();
        let d = t.nrows();
        for j in 0..fx.n_samples() {
            let col = tx.column(j);
            let support = z.z.column(j).iter().filter(|v| **v != 0.0).count();
            prop_assert!(support <= tau);
            let got: f64 = col.iter().zip(z.z.column(j).iter()).map(|(a, b)| (a - b).powi(2)).sum();
            for mask in 0u32..(1 << d) {
                if mask.count_ones() as usize != tau {
                    continue;
                }
                let off: f64 = (0..d).filter(|i| mask & (1 << i) == 0).map(|i| col[i] * col[i]).sum();
                prop_assert!(got <= off + 1e-12 * (1.0 + off));
            }
        }
    }

    #[test]
    fn transform_update_is_stationary(
        (x, z) in (2usize..=5).prop_flat_map(|d| (matrix(d, 3 * d), matrix(d, 3 * d))),
        lambda in 0.1..4.0f64,
        epsilon in 0.1..4.0f64,
    ) {
        let d = x.nrows();
        let fx = FeatureMatrix::new(x).unwrap();
        let z = CodedBatch { z, tau: d };
        let t = update_transform(&fx, &z, lambda, epsilon).unwrap();
        let f = |m: &DMatrix<f64>| objective(m, &fx, &z, lambda, epsilon).unwrap();
        let base = f(&t);
        let h = 1e-6;
        for i in 0..d {
            for j in 0..d {
                let (mut up, mut down) = (t.clone(), t.clone());
                up[(i, j)] += h;
                down[(i, j)] -= h;
                let g = (f(&up) - f(&down)) / (2.0 * h);
                prop_assert!(g.abs() <= 1e-4 * (1.0 + base.abs()), "gradient {g} at ({i},{j})");
                prop_assert!(f(&up) >= base - 1e-9 * (1.0 + base.abs()));
            }
        }
    }

    #[test]
    fn xfml_transform_round_trips(
        t in (1usize..=7).prop_flat_map(|d| matrix(d, d)),
        lambda in 0.0..10.0f64,
        epsilon in 0.01..10.0f64,
    ) {
        let tau = t.nrows();
        let model = TransformModel {
            t,
            params: TransformParams { lambda, epsilon, tau, ..TransformParams::default() },
            objective_trace: Vec::new(),
        };
        let bytes = xfml::transform_to_bytes(&model).unwrap();
        let back = xfml::transform_from_bytes(&bytes).unwrap();
        prop_assert_eq!(&back, &model);
        prop_assert!(xfml::transform_from_bytes(&bytes[..bytes.len() - 1]).is_err());
    }

    #[test]
    fn folds_partition_labeled_subjects(n_pairs in 5usize..60, n_ext in 0usize..5, seed in any::<u64>()) {
        let rec = |id: String, subject: String, modality, labeled, ext: bool| ManifestRecord {
            path: format!("{id}.png"),
            sample_id: id,
            subject_id: subject,
            modality,
            labeled,
            split_hint: None,
            extended_gallery: ext.then_some(true),
        };
        let mut records = Vec::new();
        for i in 0..n_pairs {
            records.push(rec(format!("f{i}"), format!("s{i}"), Modality::Face, true, false));
            records.push(rec(format!("k{i}"), format!("s{i}"), Modality::Skull, true, false));
            records.push(rec(format!("u{i}"), format!("u{i}"), Modality::Skull, false, false));
        }
        for i in 0..n_ext {
            records.push(rec(format!("x{i}"), format!("x{i}"), Modality::Face, false, true));
        }
        let protocol = if n_ext > 0 { Protocol::P2 } else { Protocol::P1 };
        let plan = plan_folds(&records, protocol, seed).unwrap();
        plan.check_no_leakage(&records).unwrap();
        let sizes: Vec<usize> = plan.folds.iter().map(Vec::len).collect();
        prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        let all: HashSet<&String> = plan.folds.iter().flatten().collect();
        prop_assert_eq!(all.len(), n_pairs);
        for (fold, split) in plan.folds.iter().zip(&plan.splits) {
            prop_assert_eq!(split.probes.len(), fold.len());
            prop_assert_eq!(split.gallery.len(), fold.len() + n_ext);
            prop_assert_eq!(split.training_pairs.len(), 2 * (n_pairs - fold.len()));
            prop_assert!(split.training_unlabeled.iter().all(|id| id.starts_with('u')));
        }
    }

    #[test]
    fn cmc_is_monotone_and_terminates_at_one(
        (n, values) in (1usize..8).prop_flat_map(|n| (Just(n), prop::collection::vec(0.0..1.0f64, n * n))),
    ) {
        let ids: Vec<String> = (0..n).map(|i| format!("s{i}")).collect();
        let scores = MatchScoreMatrix {
            scores: DMatrix::from_row_slice(n, n, &values),
            probe_ids: ids.iter().map(|s| format!("p_{s}")).collect(),
            gallery_ids: ids.clone(),
        };
        let curve = cmc(&identify(&scores, Fusion::MinPerIdentity).unwrap(), &ids).unwrap();
        prop_assert_eq!(curve.len(), n);
        prop_assert!(curve.windows(2).all(|w| w[0] <= w[1]));
        prop_assert_eq!(*curve.last().unwrap(), 1.0);
    }
}
