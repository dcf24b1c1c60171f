use bsr::metrics::{ci95, defect_estimate, nmse_db, positive_part, untied_gain, wasserstein1, NmseCurve};
use bsr::{Error, MMVSignal};
use ndarray::array;
use proptest::prelude::*;

fn profile(len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0f64..5.0, len).prop_filter("positive mass", |v| v.iter().sum::<f64>() > 1e-3)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn w1_is_a_metric((u, v, w) in (2usize..40).prop_flat_map(|n| (profile(n), profile(n), profile(n)))) {
        let uv = wasserstein1(&u, &v).unwrap();
        let vu = wasserstein1(&v, &u).unwrap();
        let uw = wasserstein1(&u, &w).unwrap();
        let wv = wasserstein1(&w, &v).unwrap();
        prop_assert!(wasserstein1(&u, &u).unwrap().abs() < 1e-12);
        prop_assert!(uv >= 0.0);
        prop_assert!((uv - vu).abs() < 1e-12);
        prop_assert!(uv <= uw + wv + 1e-12);
        prop_assert!(uv <= 1.0 + 1e-12);
    }

    #[test]
    fn w1_ignores_total_mass(u in profile(16), v in profile(16), s in 0.1f64..10.0) {
        let scaled: Vec<f64> = u.iter().map(|x| x * s).collect();
        prop_assert!((wasserstein1(&u, &v).unwrap() - wasserstein1(&scaled, &v).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn nmse_is_scale_free(seed in 0u64..1000, s in 0.1f64..10.0) {
        let base = array![[1.0, -2.0], [0.5, 3.0]];
        let est = &base + (seed as f64 / 1000.0);
        let a = nmse_db(&MMVSignal::new(est.clone()).unwrap(), &MMVSignal::new(base.clone()).unwrap()).unwrap();
        let b = nmse_db(&MMVSignal::new(est * s).unwrap(), &MMVSignal::new(base * s).unwrap()).unwrap();
        prop_assert!((a - b).abs() < 1e-9 || (a.is_infinite() && b.is_infinite()));
    }
}

#[test]
fn w1_point_masses_move_by_their_offset() {
    let n = 11;
    let mut u = vec![0.0; n];
    let mut v = vec![0.0; n];
    u[2] = 1.0;
    v[7] = 4.0;
    assert!((wasserstein1(&u, &v).unwrap() - 0.5).abs() < 1e-12);
    u[2] = 0.0;
    u[0] = 1.0;
    v[7] = 0.0;
    v[10] = 1.0;
    assert!((wasserstein1(&u, &v).unwrap() - 1.0).abs() < 1e-12);
}

#[test]
fn w1_rejects_bad_profiles() {
    assert!(wasserstein1(&[1.0, 0.0], &[1.0]).is_err());
    assert!(wasserstein1(&[], &[]).is_err());
    assert!(wasserstein1(&[0.0, 0.0], &[1.0, 0.0]).is_err());
    assert!(wasserstein1(&[-1.0, 2.0], &[1.0, 0.0]).is_err());
}

#[test]
fn nmse_reference_values() {
    let truth = MMVSignal::new(array![[1.0, 1.0], [1.0, 1.0]]).unwrap();
    let zero = MMVSignal::zeros(2, 2);
    let half = MMVSignal::new(array![[0.5, 0.5], [0.5, 0.5]]).unwrap();
    assert_eq!(nmse_db(&zero, &truth).unwrap(), 0.0);
    assert!((nmse_db(&half, &truth).unwrap() + 6.020_599_913_279_624).abs() < 1e-9);
    assert_eq!(nmse_db(&truth, &truth).unwrap(), f64::NEG_INFINITY);
    assert!(matches!(nmse_db(&truth, &zero), Err(Error::ZeroGroundTruth)));
}

#[test]
fn curves_and_intervals() {
    let c = NmseCurve::from_instances(&[vec![0.0, -2.0], vec![-2.0, -4.0]]).unwrap();
    assert_eq!(c.mean, vec![-1.0, -3.0]);
    assert_eq!(c.test_set_size, 2);
    assert!(c.to_csv().starts_with("iteration,mean_nmse_db"));
    assert!(NmseCurve::from_instances(&[vec![0.0], vec![1.0, 2.0]]).is_err());
    let ci = ci95(&[1.0, 1.0, 1.0]).unwrap();
    assert_eq!((ci.lower, ci.upper), (1.0, 1.0));
    assert!(ci95(&[1.0]).is_err());
    assert_eq!(untied_gain(-12.0, -10.0), -2.0);
}

#[test]
fn defect_profile_is_peak_normalized_and_clipped() {
    let x = MMVSignal::new(array![[1.0, 1.0], [-4.0, 0.0], [0.5, 1.5]]).unwrap();
    let d = defect_estimate(&x);
    assert_eq!(d, array![0.5, -1.0, 0.5]);
    assert_eq!(positive_part(&d), array![0.5, 0.0, 0.5]);
}
