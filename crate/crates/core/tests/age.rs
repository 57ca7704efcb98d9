use diffclean_core::age::{
    band_weight, smoothed_l1, smoothed_l1_grad, train_age_estimator, weighted_loss, AgeRegressor,
    AgeRegressorConfig, BetaConfig, SelfAdjustingBeta, TrainConfig,
};
use diffclean_core::synthetic::intensity_age_dataset;
use proptest::prelude::*;

fn small_config(seed: u64) -> TrainConfig {
    TrainConfig {
        batch_size: 10,
        max_epochs: 3,
        seed,
        model: AgeRegressorConfig {
            widths: vec![4, 4],
            ..AgeRegressorConfig::default()
        },
        ..TrainConfig::default()
    }
}

#[test]
fn short_training_is_deterministic_per_seed() {
    let data = intensity_age_dataset(40, 2).unwrap();
    let a = train_age_estimator(&data, &small_config(1)).unwrap();
    let b = train_age_estimator(&data, &small_config(1)).unwrap();
    assert_eq!(a.metrics, b.metrics);
    assert_eq!(a.model.params(), b.model.params());
    let c = train_age_estimator(&data, &small_config(2)).unwrap();
    assert_ne!(a.model.params(), c.model.params());
    assert!(a.metrics.iter().all(|m| m.train_loss.is_finite() && m.val_mae.is_finite()));
    assert!(a.metrics.iter().all(|m| (0.1..=5.0).contains(&m.beta)));
}

#[test]
fn regressor_survives_checkpoint_round_trip() {
    let model = AgeRegressor::new(AgeRegressorConfig::default()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("age.ckpt");
    model.save(&path).unwrap();
    let back = AgeRegressor::load(&path).unwrap();
    let img = &intensity_age_dataset(1, 0).unwrap()[0].image;
    assert_eq!(model.predict(img).unwrap(), back.predict(img).unwrap());
}

#[test]
fn empty_or_wrong_sized_data_is_rejected() {
    assert!(train_age_estimator(&[], &small_config(0)).is_err());
    let mut data = intensity_age_dataset(3, 0).unwrap();
    data[1].image = diffclean_core::image::resize(&data[1].image, 32).unwrap();
    assert!(train_age_estimator(&data, &small_config(0)).is_err());
}

#[test]
fn invalid_beta_settings_are_rejected() {
    for cfg in [
        BetaConfig { min: 0.0, ..BetaConfig::default() },
        BetaConfig { initial: 9.0, ..BetaConfig::default() },
        BetaConfig { momentum: 1.0, ..BetaConfig::default() },
    ] {
        assert!(SelfAdjustingBeta::new(&cfg).is_err());
    }
    let mut b = SelfAdjustingBeta::new(&BetaConfig::default()).unwrap();
    assert!(b.update(&[]).is_err());
    assert!(b.update(&[1.0, -1.0]).is_err());
    assert!(b.update(&[f64::NAN]).is_err());
}

#[test]
fn band_edges_are_inclusive() {
    assert_eq!(band_weight(9.999), 1.0);
    assert_eq!(band_weight(10.0), 3.0);
    assert_eq!(band_weight(29.0), 3.0);
    assert_eq!(band_weight(29.001), 1.0);
}

proptest! {
    #[test]
    fn smoothed_l1_is_continuous_symmetric_and_below_abs(
        a in 0.0f64..100.0,
        d in -20.0f64..20.0,
        beta in 0.05f64..6.0,
    ) {
        let l = smoothed_l1(a, a + d, beta).unwrap();
        prop_assert!(l >= 0.0 && l <= d.abs() + 1e-12);
        prop_assert!((l - smoothed_l1(a + d, a, beta).unwrap()).abs() < 1e-12);
        let left = smoothed_l1(a, a + beta * (1.0 - 1e-9), beta).unwrap();
        let right = smoothed_l1(a, a + beta, beta).unwrap();
        prop_assert!((left - right).abs() < 1e-8);
        let g = smoothed_l1_grad(a, a + d, beta).unwrap();
        prop_assert!(g.abs() <= 1.0 + 1e-12 && g * d >= 0.0);
        prop_assert_eq!(weighted_loss(a, a + d, beta).unwrap(), band_weight(a) * l);
    }

    #[test]
    fn beta_stays_in_bounds(batches in proptest::collection::vec(proptest::collection::vec(0.0f64..50.0, 1..20), 1..30)) {
        let cfg = BetaConfig::default();
        let mut b = SelfAdjustingBeta::new(&cfg).unwrap();
        for batch in &batches {
            let v = b.update(batch).unwrap();
            prop_assert!((cfg.min..=cfg.max).contains(&v));
            prop_assert!(b.running_var >= 0.0);
        }
        prop_assert_eq!(b.updates, batches.len() as u64);
    }
}
