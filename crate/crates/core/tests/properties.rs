use std::f64::consts::TAU;

use feasimap::acquisition::{
    bichon_single, echard_single, joint_entropy, pbe, prob_boundary, ranjan_single, tmse_single,
    Acquisition, AcquisitionConfig, AcquisitionKind,
};
use feasimap::feasibility::{prob_feasible, tau, JointPrediction, MultiSurrogate};
use feasimap::gp::{kernel_matrix, Dataset, FitConfig, GpModel, KernelParams, Normalization};
use feasimap::optimizer::{maximize, OptimizerConfig};
use feasimap::problems::{satisfies, true_feasible, ProblemId};
use feasimap::Bounds;
use nalgebra::{DVector, SymmetricEigen};
use proptest::prelude::*;

fn unit_points(dim: usize, max: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec(0.0..1.0f64, dim), 2..=max)
}

fn distinct(points: &[Vec<f64>], gap: f64) -> bool {
    points.iter().enumerate().all(|(i, a)| {
        points[..i]
            .iter()
            .all(|b| a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max) > gap)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn kernel_matrix_is_positive_semidefinite(
        points in unit_points(3, 20),
        ls in prop::collection::vec(0.05..3.0f64, 3),
        sf2 in 0.01..10.0f64,
    ) {
        let params = KernelParams::new(sf2, ls, 0.0).unwrap();
        let k = kernel_matrix(&points, &params).unwrap();
        prop_assert!((&k - k.transpose()).amax() == 0.0);
        let min = SymmetricEigen::new(k).eigenvalues.min();
        prop_assert!(min >= -1e-8, "min eigenvalue {min}");
    }

    #[test]
    fn variance_does_not_grow_when_the_query_is_observed(
        xs in prop::collection::vec(0.0..1.0f64, 2..8),
        q in 0.0..1.0f64,
        ls in 0.05..1.0f64,
    ) {
        let mut pts: Vec<Vec<f64>> = xs.iter().map(|&x| vec![x]).collect();
        prop_assume!(distinct(&pts, 1e-3));
        prop_assume!(pts.iter().all(|p| (p[0] - q).abs() > 1e-3));
        let ys: Vec<f64> = pts.iter().map(|p| (5.0 * p[0]).sin()).collect();
        let bounds = Bounds::unit(1);
        let norm = Normalization::from_data(&bounds, &ys);
        let params = KernelParams::new(1.0, vec![ls], 0.0).unwrap();
        let before = GpModel::from_parts(params.clone(), norm.clone(), pts.clone(), ys.clone()).unwrap();
        let s0 = before.predict_standardized(&[q]).unwrap().std;
        pts.push(vec![q]);
        let mut ys2 = ys.clone();
        ys2.push((5.0 * q).sin());
        let after = GpModel::from_parts(params, norm, pts, ys2).unwrap();
        let s1 = after.predict_standardized(&[q]).unwrap().std;
        prop_assert!(s1 <= s0 + 1e-9, "{s1} > {s0}");
        prop_assert!(s1 <= 1e-4);
    }

    #[test]
    fn prediction_ignores_row_order(
        points in unit_points(2, 8),
        query in prop::collection::vec(0.0..1.0f64, 2),
        shift in 1usize..7,
    ) {
        prop_assume!(distinct(&points, 1e-2));
        let ys: Vec<f64> = points.iter().map(|p| p[0] * 3.0 - p[1] * p[1]).collect();
        let bounds = Bounds::unit(2);
        let norm = Normalization::from_data(&bounds, &ys);
        let params = KernelParams::new(1.3, vec![0.4, 0.7], 1e-6).unwrap();
        let a = GpModel::from_parts(params.clone(), norm.clone(), points.clone(), ys.clone()).unwrap();
        let k = shift % points.len();
        let mut p2 = points.clone();
        p2.rotate_left(k);
        let mut y2 = ys.clone();
        y2.rotate_left(k);
        let b = GpModel::from_parts(params, norm, p2, y2).unwrap();
        let (pa, pb) = (a.predict(&query).unwrap(), b.predict(&query).unwrap());
        prop_assert!((pa.mean - pb.mean).abs() < 1e-9);
        prop_assert!((pa.std - pb.std).abs() < 1e-9);
    }

    #[test]
    fn likelihood_matches_dense_inverse(
        points in prop::collection::vec(prop::collection::vec(0.0..1.0f64, 2), 5),
        ys in prop::collection::vec(-3.0..3.0f64, 5),
        ls in prop::collection::vec(0.1..2.0f64, 2),
        noise in 1e-4..1e-1f64,
    ) {
        prop_assume!(distinct(&points, 1e-2));
        let bounds = Bounds::unit(2);
        let norm = Normalization::from_data(&bounds, &ys);
        let params = KernelParams::new(1.0, ls, noise).unwrap();
        let model = GpModel::from_parts(params, norm, points, ys).unwrap();
        let k = model.training_covariance();
        let y = DVector::from_iterator(5, model.standardized_outputs());
        let inv = k.clone().try_inverse().unwrap();
        let direct = -0.5 * y.dot(&(&inv * &y)) - 0.5 * k.determinant().ln() - 2.5 * TAU.ln();
        let via_chol = model.log_marginal_likelihood();
        prop_assert!((direct - via_chol).abs() <= 1e-8 * direct.abs().max(1.0), "{direct} vs {via_chol}");
    }

    #[test]
    fn feasibility_decreases_with_each_mean(
        means in prop::collection::vec(-2.0..2.0f64, 1..4),
        stds in prop::collection::vec(0.1..2.0f64, 3),
        which in 0usize..3,
        bump in 0.0..3.0f64,
    ) {
        let l = means.len();
        let t = vec![0.0; l];
        let stds = stds[..l].to_vec();
        let base = prob_feasible(&JointPrediction::new(means.clone(), stds.clone(), &t));
        let mut up = means.clone();
        up[which % l] += bump;
        let moved = prob_feasible(&JointPrediction::new(up, stds, &t));
        prop_assert!(moved <= base);
        prop_assert!((0.0..=1.0).contains(&base));
    }

    #[test]
    fn adding_constraints_cannot_raise_feasibility(
        means in prop::collection::vec(-2.0..2.0f64, 2..5),
        std in 0.1..2.0f64,
        keep in 1usize..4,
    ) {
        let l = means.len();
        let k = keep.min(l);
        let t = vec![0.0; l];
        let all = prob_feasible(&JointPrediction::new(means.clone(), vec![std; l], &t));
        let sub = prob_feasible(&JointPrediction::new(means[..k].to_vec(), vec![std; k], &t[..k]));
        prop_assert!(all <= sub);
    }

    #[test]
    fn tau_is_affine_invariant(
        mean in -5.0..5.0f64,
        std in 0.01..5.0f64,
        t in -5.0..5.0f64,
        a in 0.01..100.0f64,
        b in -50.0..50.0f64,
    ) {
        let before = tau(mean, std, t);
        let after = tau(a * mean + b, a * std, a * t + b);
        prop_assert!((before - after).abs() <= 1e-9 * before.abs().max(1.0));
    }

    #[test]
    fn single_criteria_signs_and_boundary_range(
        mean in -10.0..10.0f64,
        std in 0.001..10.0f64,
        t in -10.0..10.0f64,
    ) {
        prop_assert!(tmse_single(mean, std, t) >= 0.0);
        prop_assert!(bichon_single(mean, std, t) >= 0.0);
        prop_assert!(ranjan_single(mean, std, t) >= 0.0);
        prop_assert!(echard_single(mean, std, t) <= 0.0);
        let jp = JointPrediction::new(vec![mean], vec![std], &[t]);
        let pb = prob_boundary(&jp);
        prop_assert!((0.0..=0.25).contains(&pb));
    }

    #[test]
    fn pbe_sign_follows_entropy(
        means in prop::collection::vec(-1.0..1.0f64, 1..4),
        stds in prop::collection::vec(0.5..3.0f64, 3),
    ) {
        let l = means.len();
        let t = vec![0.0; l];
        let stds = stds[..l].to_vec();
        let jp = JointPrediction::new(means.clone(), stds.clone(), &t);
        let v = pbe(&jp, &AcquisitionConfig::default());
        if joint_entropy(&stds) > 0.0 {
            prop_assert!(v > 0.0);
        }
        let certain = JointPrediction::new(means, vec![0.0; l], &t);
        prop_assert_eq!(pbe(&certain, &AcquisitionConfig::default()), 0.0);
    }

    #[test]
    fn ground_truth_uses_the_constraint_rule(u in prop::collection::vec(0.0..1.0f64, 15), which in 0usize..6) {
        let id = ProblemId::ALL[which];
        let spec = id.spec();
        let x = spec.bounds.from_unit(&u[..spec.dimension()]);
        let g = spec.constraints(&x);
        prop_assert_eq!(true_feasible(&spec, &x).unwrap().is_feasible(), satisfies(&g, &spec.thresholds));
    }

    #[test]
    fn optimizer_finds_quadratic_peak(c in prop::collection::vec(-0.8..0.8f64, 3), seed in 0u64..1000) {
        let bounds = Bounds::new(vec![(-1.0, 1.0); 3]).unwrap();
        let cfg = OptimizerConfig::new(bounds, seed);
        let best = maximize(|x| -x.iter().zip(&c).map(|(a, b)| (a - b).powi(2)).sum::<f64>(), &cfg).unwrap();
        for (a, b) in best.x.iter().zip(&c) {
            prop_assert!((a - b).abs() < 1e-4);
        }
        prop_assert!(best.evals <= cfg.max_evals);
    }
}

#[test]
fn acquisition_evaluation_is_pure() {
    let xs: Vec<Vec<f64>> = (0..6).map(|i| vec![i as f64 * 0.6, (i * i) as f64 * 0.1]).collect();
    let ys: Vec<Vec<f64>> = xs.iter().map(|x| vec![x[0] - x[1], x[0] * x[1] - 1.0]).collect();
    let data = Dataset::from_rows(xs, ys).unwrap();
    let bounds = Bounds::new(vec![(0.0, 3.0), (0.0, 4.0)]).unwrap();
    let surr = MultiSurrogate::fit(&data, &bounds, vec![0.0, 0.0], &FitConfig::with_seed(3)).unwrap();
    for kind in AcquisitionKind::ALL {
        let acq = Acquisition::new(kind);
        let a = acq.evaluate(&surr, &[1.1, 2.3]).unwrap();
        let b = acq.evaluate(&surr, &[1.1, 2.3]).unwrap();
        assert_eq!(a.to_bits(), b.to_bits(), "{kind}");
    }
}

#[test]
fn two_sine_models_track_the_truth() {
    // Regular grid on [0, 2π] for g1 = sin x and g2 = 2 sin(x − 1).
    let xs: Vec<Vec<f64>> = (0..9).map(|i| vec![i as f64 * TAU / 8.0]).collect();
    let ys: Vec<Vec<f64>> = xs
        .iter()
        .map(|x| vec![x[0].sin(), 2.0 * (x[0] - 1.0).sin()])
        .collect();
    let data = Dataset::from_rows(xs, ys).unwrap();
    let spec = ProblemId::Demo1d.spec();
    let surr = MultiSurrogate::fit(&data, &spec.bounds, spec.thresholds.clone(), &FitConfig::with_seed(1)).unwrap();
    for i in 0..=400 {
        let x = i as f64 * TAU / 400.0;
        let jp = surr.joint_predict(&[x]).unwrap();
        let truth = [x.sin(), 2.0 * (x - 1.0).sin()];
        for ((m, s), g) in jp.means.iter().zip(&jp.stds).zip(truth) {
            assert!((m - g).abs() <= 2.0 * s + 1e-6, "at {x}: {m} ± {s} vs {g}");
        }
    }
}
