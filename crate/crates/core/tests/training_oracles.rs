//! End-to-end checks of the training pipeline against analytic oracles.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use uwmpc_core::nn::{
    loss_and_grad, train, DataRow, Dataset, DatasetMeta, NetworkParams, TrainingConfig,
};

fn meta() -> DatasetMeta {
    DatasetMeta {
        sample_period_s: 0.05,
        seed: 0,
        scenario: "synthetic".into(),
    }
}

/// 1-DOF linear discrete plant used as a learnable ground truth.
fn linear_plant_row(rng: &mut ChaCha8Rng) -> DataRow<f64> {
    let q = rng.gen_range(-1.0..1.0);
    let qd = rng.gen_range(-1.0..1.0);
    let u = rng.gen_range(-1.0..1.0);
    let dt = 0.05;
    let qdd = -0.5 * q - 0.2 * qd + u;
    DataRow {
        q: vec![q],
        qdot: vec![qd],
        u: vec![u],
        dq: vec![dt * qd],
        dqdot: vec![dt * qdd],
    }
}

#[test]
fn zero_targets_train_to_zero_predictions() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let rows: Vec<DataRow<f64>> = (0..400)
        .map(|_| {
            let mut r = linear_plant_row(&mut rng);
            r.dq = vec![0.0];
            r.dqdot = vec![0.0];
            r
        })
        .collect();
    let data = Dataset { rows, meta: meta() };
    let cfg = TrainingConfig::<f64> {
        epochs: 60,
        hidden: vec![8, 8],
        ..Default::default()
    };
    let (_net, report) = train(&data, &cfg).unwrap();
    for mse in &report.val_mse {
        assert!(*mse < 1e-6, "val mse {mse} for all-zero targets");
    }
}

#[test]
fn linear_plant_is_learned_below_percent_of_variance() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let rows: Vec<DataRow<f64>> = (0..1500).map(|_| linear_plant_row(&mut rng)).collect();
    let data = Dataset { rows, meta: meta() };
    let cfg = TrainingConfig::<f64> {
        epochs: 200,
        hidden: vec![25, 25],
        ..Default::default()
    };
    let (_net, report) = train(&data, &cfg).unwrap();
    for (mse, var) in report.val_mse.iter().zip(&report.target_variance) {
        assert!(
            *mse < 0.01 * var,
            "val mse {mse} not below 1% of target variance {var}"
        );
    }
}

#[test]
fn backprop_gradient_matches_central_differences() {
    let net: NetworkParams<f64> = NetworkParams::init(1, &[5, 4], 17);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let inputs: Vec<Vec<f64>> = (0..6)
        .map(|_| (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect())
        .collect();
    let targets: Vec<Vec<f64>> = (0..6)
        .map(|_| (0..2).map(|_| rng.gen_range(-1.0..1.0)).collect())
        .collect();
    let rows: Vec<usize> = (0..6).collect();
    let (_, analytic) = loss_and_grad(&net, &inputs, &targets, &rows);

    let flat = net.flatten();
    let h = 1e-6;
    // spot-check a spread of parameters plus every bias of the last layer
    let count = flat.len();
    let picks: Vec<usize> = (0..count).step_by((count / 30).max(1)).collect();
    for &i in &picks {
        let mut plus = net.clone();
        let mut fplus = flat.clone();
        fplus[i] += h;
        plus.set_from_flat(&fplus);
        let (lp, _) = loss_and_grad(&plus, &inputs, &targets, &rows);

        let mut minus = net.clone();
        let mut fminus = flat.clone();
        fminus[i] -= h;
        minus.set_from_flat(&fminus);
        let (lm, _) = loss_and_grad(&minus, &inputs, &targets, &rows);

        let numeric = (lp - lm) / (2.0 * h);
        let denom = (1e-3f64).max(analytic[i].abs()).max(numeric.abs());
        let rel = (analytic[i] - numeric).abs() / denom;
        assert!(
            rel < 1e-5,
            "param {i}: analytic {} vs numeric {numeric} (rel {rel})",
            analytic[i]
        );
    }
}

#[test]
fn training_is_deterministic_per_seed() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let rows: Vec<DataRow<f64>> = (0..200).map(|_| linear_plant_row(&mut rng)).collect();
    let data = Dataset { rows, meta: meta() };
    let cfg = TrainingConfig::<f64> {
        epochs: 20,
        hidden: vec![10],
        seed: 123,
        ..Default::default()
    };
    let (net_a, rep_a) = train(&data, &cfg).unwrap();
    let (net_b, rep_b) = train(&data, &cfg).unwrap();
    assert_eq!(net_a.flatten(), net_b.flatten(), "parameters differ");
    assert_eq!(rep_a.train_loss, rep_b.train_loss);
    assert_eq!(rep_a.val_loss, rep_b.val_loss);
}

#[test]
fn training_loss_is_mostly_non_increasing() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let rows: Vec<DataRow<f64>> = (0..1000).map(|_| linear_plant_row(&mut rng)).collect();
    let data = Dataset { rows, meta: meta() };
    let cfg = TrainingConfig::<f64> {
        epochs: 100,
        ..Default::default()
    };
    let (_net, report) = train(&data, &cfg).unwrap();
    let increases = report
        .train_loss
        .windows(2)
        .filter(|w| w[1] > w[0])
        .count();
    let frac = increases as f64 / (report.train_loss.len() - 1) as f64;
    assert!(frac <= 0.10, "{increases} increasing epochs ({frac:.2})");
    assert!(report.train_loss.last().unwrap() < &report.train_loss[0]);
}

#[test]
fn tiny_dataset_is_rejected() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let rows: Vec<DataRow<f64>> = (0..20).map(|_| linear_plant_row(&mut rng)).collect();
    let data = Dataset { rows, meta: meta() };
    let cfg = TrainingConfig::<f64>::default();
    assert!(train(&data, &cfg).is_err());
}
