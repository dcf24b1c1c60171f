mod common;

use bsr::datagen::{
    gen_defect_pattern, gen_gaussian_problem, gen_illumination, gen_thermal_problem, read_dataset, write_dataset, CaseConfig,
    GaussianCaseConfig, ThermalCaseConfig, DATASET_MANIFEST,
};
use bsr::ingest::{load_sequence, maximum_thermogram, preprocess_dir, vertical_mean, SequenceManifest, SEQUENCE_MANIFEST};
use bsr::io;
use ndarray::{Array2, Array3};

fn small_gaussian(seed: u64) -> GaussianCaseConfig {
    GaussianCaseConfig {
        n_r: 32,
        n_meas: 32,
        n_d: 128,
        n_b: 150,
        n_test: 250,
        pnz: 0.1,
        snr_db: 20.0,
        seed,
    }
}

#[test]
fn gaussian_matrix_has_the_declared_variance() {
    let p = gen_gaussian_problem(&small_gaussian(1)).unwrap();
    let a = p.model.materialize_dense().unwrap();
    let n = a.len() as f64;
    let mean = a.sum() / n;
    let var = a.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    assert!(mean.abs() < 0.02 / 128f64.sqrt());
    assert!((var * 128.0 - 1.0).abs() < 0.05, "variance {var}");
}

#[test]
fn active_block_fraction_tracks_pnz() {
    let cfg = small_gaussian(2);
    let p = gen_gaussian_problem(&cfg).unwrap();
    let rows: Vec<f64> = p
        .train
        .x
        .iter()
        .chain(&p.test.x)
        .flat_map(|x| bsr::blocksparse::block_norms(x).to_vec())
        .collect();
    let active = rows.iter().filter(|n| **n > 0.0).count() as f64 / rows.len() as f64;
    let sd = (cfg.pnz * (1.0 - cfg.pnz) / rows.len() as f64).sqrt();
    assert!((active - cfg.pnz).abs() < 4.0 * sd, "active fraction {active}");
}

#[test]
fn noise_matches_the_requested_snr() {
    let cfg = small_gaussian(3);
    let p = gen_gaussian_problem(&cfg).unwrap();
    let expected = cfg.signal_power() / 10f64.powf(cfg.snr_db / 10.0);
    assert!((p.stats.noise_variance - expected).abs() < 1e-15);
    let mut sum = 0.0;
    let mut count = 0usize;
    for set in [&p.train, &p.test] {
        for (x, y) in set.x.iter().zip(&set.y) {
            let clean = p.model.apply(x).unwrap();
            sum += (y.values() - clean.values()).iter().map(|v| v * v).sum::<f64>();
            count += y.values().len();
        }
    }
    let var = sum / count as f64;
    assert!((var / expected - 1.0).abs() < 0.05, "noise variance {var} vs {expected}");
}

#[test]
fn noiseless_measurements_equal_the_materialized_product() {
    let mut cfg = small_gaussian(4);
    cfg.snr_db = 400.0;
    cfg.n_b = 5;
    cfg.n_test = 0;
    let p = gen_gaussian_problem(&cfg).unwrap();
    let a = p.model.materialize_dense().unwrap();
    for (x, y) in p.train.x.iter().zip(&p.train.y) {
        let v: ndarray::Array1<f64> = x.values().iter().copied().collect();
        let want = a.dot(&v);
        let got: Vec<f64> = y.values().iter().copied().collect();
        for (g, w) in got.iter().zip(want.iter()) {
            assert!((g - w).abs() <= 1e-12 * (1.0 + w.abs()));
        }
    }
}

#[test]
fn generation_is_a_pure_function_of_the_seed() {
    let a = gen_gaussian_problem(&small_gaussian(5)).unwrap();
    let b = gen_gaussian_problem(&small_gaussian(5)).unwrap();
    let c = gen_gaussian_problem(&small_gaussian(6)).unwrap();
    assert_eq!(a.train.y, b.train.y);
    assert_eq!(a.test.x, b.test.x);
    assert_ne!(a.train.y, c.train.y);
    // a larger training set keeps the leading instances
    let mut bigger = small_gaussian(5);
    bigger.n_b = 160;
    let d = gen_gaussian_problem(&bigger).unwrap();
    assert_eq!(&d.train.x[..150], &a.train.x[..]);
}

fn small_thermal(seed: u64) -> ThermalCaseConfig {
    ThermalCaseConfig {
        n_r: 128,
        n_meas: 6,
        n_b: 4,
        n_test: 2,
        defect_pnz: 0.03,
        illum_pnz: 0.05,
        seed,
        ..ThermalCaseConfig::desk()
    }
}

#[test]
fn thermal_signals_are_illumination_times_absorption() {
    let cfg = small_thermal(7);
    let p = gen_thermal_problem(&cfg).unwrap();
    for (i, x) in p.train.x.iter().chain(&p.test.x).enumerate() {
        let a = gen_defect_pattern(&cfg, i as u64);
        assert!(a.iter().all(|v| *v == 0.0 || *v == 1.0));
        for m in 0..cfg.n_meas {
            let light = gen_illumination(&cfg, i as u64, m);
            for r in 0..cfg.n_r {
                assert_eq!(x.values()[(r, m)], light[r] * a[r]);
            }
        }
    }
    let taps = p.model.kernel().unwrap().taps();
    assert!((taps.iter().sum::<f64>() - cfg.psf.amplitude).abs() < 1e-12);
    assert!(p.model.kernel().unwrap().is_symmetric());
}

#[test]
fn dataset_round_trips_through_disk() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = CaseConfig::Thermal(small_thermal(8));
    let p = cfg.generate().unwrap();
    let manifest = write_dataset(dir.path(), &cfg, &p).unwrap();
    assert!(dir.path().join(DATASET_MANIFEST).is_file());
    let back = read_dataset(dir.path()).unwrap();
    assert_eq!(back.manifest, manifest);
    assert_eq!(back.train.x, p.train.x);
    assert_eq!(back.test.y, p.test.y);
    assert_eq!(back.model.kernel(), p.model.kernel());
}

/// Builds a sequence whose heating is `profile` scaled by `ramp[t]`, repeated
/// over `rows` vertical pixels with a constant offset.
fn synthetic_sequence(profile: &[f64], ramp: &[f64], rows: usize) -> Array3<f64> {
    Array3::from_shape_fn((rows, profile.len(), ramp.len()), |(y, r, t)| 20.0 + 0.01 * y as f64 + ramp[t] * profile[r])
}

#[test]
fn preprocessing_recovers_generated_measurements() {
    let cfg = small_thermal(9);
    let p = gen_thermal_problem(&cfg).unwrap();
    let y = p.train.y[0].values();
    let ramp = [0.0, 0.4, 1.0, 0.7, 0.2];
    let dir = tempfile::tempdir().unwrap();
    for m in 0..cfg.n_meas {
        let profile: Vec<f64> = y.column(m).iter().map(|v| v.abs() + 1e-3).collect();
        let seq = synthetic_sequence(&profile, &ramp, 3);
        if m % 2 == 0 {
            io::write_array3(dir.path().join(format!("seq_{m:02}.bsr")), &seq).unwrap();
        } else {
            let sub = dir.path().join(format!("seq_{m:02}"));
            std::fs::create_dir_all(&sub).unwrap();
            let mut frames = Vec::new();
            for t in 0..ramp.len() {
                let name = format!("frame_{t}.csv");
                let frame: Array2<f64> = seq.index_axis(ndarray::Axis(2), t).to_owned();
                io::write_text(sub.join(&name), &io::to_csv(&frame.into_dyn()).unwrap()).unwrap();
                frames.push(name);
            }
            let manifest = SequenceManifest {
                frames,
                frame_rate: Some(50.0),
                pixel_pitch: Some(cfg.pixel_pitch),
            };
            io::write_json(sub.join(SEQUENCE_MANIFEST), &manifest).unwrap();
        }
    }
    let (t, records) = preprocess_dir(dir.path()).unwrap();
    assert_eq!(t.shape(), (cfg.n_r, cfg.n_meas));
    for (m, rec) in records.iter().enumerate() {
        assert_eq!(rec.frame, 2);
        assert_eq!(rec.frame_count, ramp.len());
        for r in 0..cfg.n_r {
            let want = y[(r, m)].abs() + 1e-3;
            assert!((t.values()[(r, m)] - want).abs() < 1e-9);
        }
    }
}

#[test]
fn thermogram_of_a_loaded_sequence() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("one.bsr");
    let seq = synthetic_sequence(&[1.0, 2.0, 3.0], &[0.0, 1.0, 3.0, 2.0], 2);
    io::write_array3(&path, &seq).unwrap();
    let loaded = load_sequence(&path).unwrap();
    assert_eq!(loaded.frame_count(), 4);
    let mt = maximum_thermogram(vertical_mean(&loaded).view()).unwrap();
    assert_eq!(mt.frame, 2);
    for (v, want) in mt.values.iter().zip([3.0, 6.0, 9.0]) {
        assert!((v - want).abs() < 1e-12);
    }
    let bad = dir.path().join("bad.bsr");
    std::fs::write(&bad, b"nope").unwrap();
    assert!(load_sequence(&bad).is_err());
}
