//! Cross-format flows: mixed raw/NIfTI datasets, statistic map files,
//! and cohort manifests written and read back through the public API.

use std::io::Write as _;
use std::path::Path;

use ndarray::Array2;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

use voxelle::io::{load_dataset, load_manifest, write_raw_volume};
use voxelle::pipeline::{synthesize_cohort, RunConfig};
use voxelle::statmap::{build_map, read_statmap, write_statmap, TtestKind};
use voxelle::{ClassLabel, GridDims, ScanVolume};

/// Minimal single-file float32 NIfTI-1 writer for fixtures.
fn write_nifti(path: &Path, dims: GridDims, volume_major: &[f32]) {
    let mut header = vec![0u8; 348];
    header[0..4].copy_from_slice(&348i32.to_le_bytes());
    let dim: [i16; 8] = [
        4,
        dims.l as i16,
        dims.w as i16,
        dims.h as i16,
        dims.t as i16,
        1,
        1,
        1,
    ];
    for (i, d) in dim.iter().enumerate() {
        header[40 + 2 * i..42 + 2 * i].copy_from_slice(&d.to_le_bytes());
    }
    header[70..72].copy_from_slice(&16i16.to_le_bytes());
    header[72..74].copy_from_slice(&32i16.to_le_bytes());
    header[108..112].copy_from_slice(&352f32.to_le_bytes());
    header[344..348].copy_from_slice(b"n+1\0");
    let mut file = std::fs::File::create(path).unwrap();
    file.write_all(&header).unwrap();
    file.write_all(&[0u8; 4]).unwrap();
    for x in volume_major {
        file.write_all(&x.to_le_bytes()).unwrap();
    }
}

#[test]
fn mixed_format_dataset_loads_both_kinds() {
    let dir = tempfile::tempdir().unwrap();
    let dims = GridDims::new(3, 3, 3, 4).unwrap();
    let n = dims.samples();

    // Values exactly representable in f32 keep both routes bit-exact.
    let raw_samples: Vec<f64> = (0..n).map(|i| i as f64 * 0.25 - 4.0).collect();
    let raw_scan = ScanVolume::new(dims, raw_samples.clone(), "raw-subj", None).unwrap();
    write_raw_volume(&raw_scan, &dir.path().join("a.rawvol")).unwrap();

    let nii_volume_major: Vec<f32> = (0..dims.t)
        .flat_map(|t| (0..dims.voxels()).map(move |v| (v * dims.t + t) as f32 * 0.5 - 10.0))
        .collect();
    write_nifti(&dir.path().join("b.nii"), dims, &nii_volume_major);

    write_raw_volume(&raw_scan, &dir.path().join("c.rawvol")).unwrap();

    std::fs::write(
        dir.path().join("cohort.manifest"),
        "name = mixed\n\
         dims = 3x3x3x4\n\
         subject = sub-a, a.rawvol, patient, training\n\
         subject = sub-b, b.nii, control, training\n\
         subject = sub-c, c.rawvol, control, holdout\n",
    )
    .unwrap();

    let manifest = load_manifest(&dir.path().join("cohort.manifest")).unwrap();
    let dataset = load_dataset(&manifest).unwrap();

    assert_eq!(dataset.training.len(), 2);
    assert_eq!(dataset.holdout.len(), 1);

    let a = &dataset.training[0];
    assert_eq!(a.subject, "sub-a");
    assert_eq!(a.label, Some(ClassLabel::Patient));
    assert_eq!(a.samples(), raw_samples.as_slice());

    let b = &dataset.training[1];
    assert_eq!(b.subject, "sub-b");
    assert_eq!(b.label, Some(ClassLabel::Control));
    for v in 0..dims.voxels() {
        for t in 0..dims.t {
            let expect = (v * dims.t + t) as f64 * 0.5 - 10.0;
            assert_eq!(b.waveform(v)[t], expect, "voxel {v} sample {t}");
        }
    }
}

#[test]
fn statmap_file_round_trips_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let dims = GridDims::new(4, 3, 2, 1).unwrap();
    let v = dims.voxels();
    let d = 3;
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let group = |rng: &mut ChaCha8Rng, shift: f64| -> Vec<Array2<f64>> {
        (0..4)
            .map(|_| Array2::from_shape_fn((v, d), |_| rng.random::<f64>() + shift))
            .collect()
    };
    let patients = group(&mut rng, 0.8);
    let controls = group(&mut rng, 0.0);

    let map = build_map(&patients, &controls, &dims, 1, TtestKind::Pooled, 0.05).unwrap();
    let path = dir.path().join("volume_1.statmap");
    write_statmap(&map, &path).unwrap();
    let loaded = read_statmap(&path).unwrap();

    assert_eq!(loaded.dims, map.dims);
    assert_eq!(loaded.volume, map.volume);
    assert_eq!(loaded.n1, map.n1);
    assert_eq!(loaded.n0, map.n0);
    assert_eq!(loaded.alpha, map.alpha);
    // f32 payloads must survive bit-exactly.
    for (a, b) in map.t.iter().zip(&loaded.t) {
        assert_eq!(a.to_bits(), b.to_bits());
    }
    for (a, b) in map.p.iter().zip(&loaded.p) {
        assert_eq!(a.to_bits(), b.to_bits());
    }
}

#[test]
fn cohort_partition_counts_are_stable() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = RunConfig::default();
    cfg.synth.dims = GridDims::new(3, 3, 3, 5).unwrap();
    cfg.synth.patients = 21;
    cfg.synth.controls = 21;
    cfg.holdout_fraction = 0.2857;
    cfg.seed = 9;

    let manifest_path = synthesize_cohort(&cfg, dir.path()).unwrap();
    let manifest = load_manifest(&manifest_path).unwrap();
    let dataset = load_dataset(&manifest).unwrap();

    // round(0.2857 * 21) = 6 held out per class.
    assert_eq!(dataset.training.len(), 30);
    assert_eq!(dataset.holdout.len(), 12);
    let holdout_patients = dataset
        .holdout
        .iter()
        .filter(|s| s.label == Some(ClassLabel::Patient))
        .count();
    assert_eq!(holdout_patients, 6);
    for scan in dataset.training.iter().chain(&dataset.holdout) {
        assert_eq!(scan.dims(), cfg.synth.dims);
    }
}
