use cmr_recon::kspace::{fft2c, is_normalized, C64};
use cmr_recon::objectives::metric_nmse;
use cmr_recon::phantom::{
    make_training_example, read_challenge_subject, read_subject, simulate_coil_maps, simulate_subject, write_subject, ChallengeLayout, ContrastTag, Ellipse,
    PhantomSpec, FORMAT_VERSION,
};
use cmr_recon::sampling::{make_uniform_mask, SamplingMask};
use cmr_recon::Error;
use hdf5::types::{CompoundField, CompoundType, FloatSize, TypeDescriptor};
use ndarray::{Array3, ArrayD, Axis, IxDyn};

fn spec(h: usize, w: usize, frames: usize, coils: usize, seed: u64) -> PhantomSpec {
    PhantomSpec::cardiac(h, w, frames, coils, ContrastTag::Cine, seed)
}

#[test]
fn ten_coil_maps_are_normalized_and_smooth() {
    let maps = simulate_coil_maps(128, 128, 10, 3).unwrap();
    assert!(is_normalized(&maps, 1e-6));
    let d = maps.data();
    let mut worst = 0.0f64;
    for c in 0..10 {
        for i in 0..127 {
            for j in 0..127 {
                let v = d[[c, i, j]];
                let g = ((d[[c, i + 1, j]] - v).norm_sqr() + (d[[c, i, j + 1]] - v).norm_sqr()).sqrt();
                worst = worst.max(g);
            }
        }
    }
    assert!(worst < 0.2, "max finite-difference gradient {worst}");
}

#[test]
fn coil_maps_are_deterministic() {
    assert_eq!(simulate_coil_maps(32, 32, 4, 9).unwrap().data(), simulate_coil_maps(32, 32, 4, 9).unwrap().data());
}

#[test]
fn simulation_is_deterministic_and_self_consistent() {
    let mut s = spec(32, 32, 4, 3, 5);
    s.noise_std = 0.01;
    let a = simulate_subject(&s).unwrap();
    let b = simulate_subject(&s).unwrap();
    assert_eq!(a, b);
    assert!(a.consistency_error() < 1e-5);
}

#[test]
fn static_phantom_has_identical_frames() {
    let mut s = spec(24, 24, 3, 2, 1);
    for e in &mut s.ellipses {
        e.pulsatility = 0.0;
    }
    let rec = simulate_subject(&s).unwrap();
    let first = rec.kspace_full.index_axis(Axis(0), 0);
    for t in 1..3 {
        assert_eq!(rec.kspace_full.index_axis(Axis(0), t), first);
    }
}

#[test]
fn pulsation_changes_frames() {
    let mut s = spec(32, 32, 4, 1, 2);
    for e in &mut s.ellipses {
        if e.pulsatility > 0.0 {
            e.pulsatility = 0.1;
        }
    }
    let rec = simulate_subject(&s).unwrap();
    let f0 = rec.image_rss.index_axis(Axis(0), 0).mapv(f64::from);
    let f1 = rec.image_rss.index_axis(Axis(0), 1).mapv(f64::from);
    assert!(metric_nmse(&f1, &f0).unwrap() > 0.0);
}

#[test]
fn full_fov_ellipse_with_one_coil_is_a_dc_spike() {
    let mut s = spec(16, 16, 1, 1, 0);
    s.ellipses = vec![Ellipse {
        center: [0.0, 0.0],
        axes: [2.0, 2.0],
        angle: 0.0,
        intensity: 1.0,
        pulsatility: 0.0,
    }];
    let rec = simulate_subject(&s).unwrap();
    let k = rec.kspace_full.index_axis(Axis(0), 0).index_axis(Axis(0), 0).to_owned();
    let want = ArrayD::from_elem(IxDyn(&[16, 16]), C64::new(1.0, 0.0));
    let want = fft2c(&want).unwrap();
    for ((i, j), v) in k.indexed_iter() {
        assert!((f64::from(v.re) - want[[i, j]].re).abs() < 1e-5, "({i},{j})");
        assert!((f64::from(v.im) - want[[i, j]].im).abs() < 1e-5);
    }
    assert!((f64::from(k[[8, 8]].re) - 16.0).abs() < 1e-5);
    assert!(rec.image_rss.iter().all(|&v| (v - 1.0).abs() < 1e-6));
}

#[test]
fn noise_has_the_requested_total_std() {
    let mut s = spec(64, 64, 1, 1, 7);
    for e in &mut s.ellipses {
        e.intensity = 0.0;
    }
    s.noise_std = 0.2;
    let rec = simulate_subject(&s).unwrap();
    let n = rec.kspace_full.len() as f64;
    let var: f64 = rec.kspace_full.iter().map(|v| f64::from(v.norm_sqr())).sum::<f64>() / n;
    assert!((var.sqrt() - 0.2).abs() < 0.01, "{}", var.sqrt());
}

#[test]
fn ellipse_outside_fov_is_rejected() {
    let mut s = spec(16, 16, 1, 1, 0);
    s.ellipses[1].center = [0.0, -1.2];
    assert!(matches!(simulate_subject(&s), Err(Error::Validation(_))));
}

#[test]
fn adjacency_replicates_at_the_edges() {
    let rec = simulate_subject(&spec(16, 16, 4, 2, 3)).unwrap();
    let full = SamplingMask::full(16, 16);
    let (k0, kg) = make_training_example(&rec, 0, &full, 5).unwrap();
    assert_eq!(k0, kg);
    let frame = |t: usize| rec.kspace_full.index_axis(Axis(0), t).mapv(|v| C64::new(v.re.into(), v.im.into()));
    for (slot, src) in [0, 0, 0, 1, 2].into_iter().enumerate() {
        assert_eq!(kg.data().index_axis(Axis(0), slot), frame(src));
    }
    assert_eq!(kg.central(), frame(0));
    let (_, single) = make_training_example(&rec, 3, &full, 1).unwrap();
    assert_eq!(single.dims().0, 1);
    assert!(make_training_example(&rec, 4, &full, 3).is_err());
    assert!(make_training_example(&rec, 0, &full, 4).is_err());
}

#[test]
fn masked_example_zeroes_unsampled_columns() {
    let rec = simulate_subject(&spec(16, 16, 3, 2, 3)).unwrap();
    let m = make_uniform_mask(16, 16, 4.0, 2, 0).unwrap();
    let (k0, kg) = make_training_example(&rec, 1, &m, 3).unwrap();
    for ((t, c, y, x), v) in k0.data().indexed_iter() {
        if m.data()[[y, x]] == 1 {
            assert_eq!(*v, kg.data()[[t, c, y, x]]);
        } else {
            assert_eq!(*v, C64::new(0.0, 0.0));
        }
    }
}

#[test]
fn hdf5_roundtrip_is_bit_exact() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.h5");
    let mut s = spec(20, 24, 3, 2, 11);
    s.noise_std = 0.05;
    s.contrast = ContrastTag::Tagging;
    let rec = simulate_subject(&s).unwrap();
    write_subject(&rec, &path).unwrap();
    let back = read_subject(&path).unwrap();
    assert_eq!(back, rec);
    assert!(back.consistency_error() < 1e-5);
}

#[test]
fn header_matches_declared_shapes() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.h5");
    write_subject(&simulate_subject(&spec(16, 16, 2, 2, 0)).unwrap(), &path).unwrap();
    let f = hdf5::File::open(&path).unwrap();
    let k = f.dataset("kspace_full").unwrap();
    assert_eq!(k.shape(), vec![2, 2, 16, 16, 2]);
    assert_eq!(k.dtype().unwrap().size(), 4);
    assert_eq!(f.dataset("image_rss").unwrap().shape(), vec![2, 16, 16]);
    assert_eq!(f.attr("format_version").unwrap().read_scalar::<u32>().unwrap(), FORMAT_VERSION);
    let payload = (2 * 2 * 16 * 16 * 2 + 2 * 16 * 16) * 4;
    let size = std::fs::metadata(&path).unwrap().len() as usize;
    assert!(size >= payload && size < payload + 16 * 1024, "{size} vs payload {payload}");
}

fn data_error(path: &std::path::Path) -> String {
    match read_subject(path) {
        Err(e @ Error::Data(_)) => {
            assert_eq!(e.exit_code(), 3);
            e.to_string()
        }
        other => panic!("expected a data error, got {other:?}"),
    }
}

#[test]
fn missing_array_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.h5");
    let f = hdf5::File::create(&path).unwrap();
    f.new_attr::<u32>().create("format_version").unwrap().write_scalar(&FORMAT_VERSION).unwrap();
    f.new_dataset_builder()
        .with_data(&Array3::<f32>::zeros((1, 8, 8)))
        .create("image_rss")
        .unwrap();
    f.close().unwrap();
    let msg = data_error(&path);
    assert!(msg.contains("kspace_full"), "{msg}");
}

#[test]
fn unsupported_version_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("v.h5");
    let f = hdf5::File::create(&path).unwrap();
    f.new_attr::<u32>().create("format_version").unwrap().write_scalar(&99u32).unwrap();
    f.close().unwrap();
    let msg = data_error(&path);
    assert!(msg.contains("format_version 99"), "{msg}");
}

#[test]
fn shape_mismatch_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let good = dir.path().join("g.h5");
    let rec = simulate_subject(&spec(16, 16, 2, 1, 0)).unwrap();
    write_subject(&rec, &good).unwrap();
    let f = hdf5::File::open_rw(&good).unwrap();
    f.unlink("image_rss").unwrap();
    f.new_dataset_builder()
        .with_data(&Array3::<f32>::zeros((3, 16, 16)))
        .create("image_rss")
        .unwrap();
    f.close().unwrap();
    let msg = data_error(&good);
    assert!(msg.contains("image_rss"), "{msg}");
}

#[test]
fn missing_file_is_an_hdf5_error() {
    let err = read_subject("/nonexistent/dir/x.h5").unwrap_err();
    assert_eq!(err.exit_code(), 3);
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
#[repr(C)]
struct MatComplex {
    real: f32,
    imag: f32,
}

unsafe impl hdf5::H5Type for MatComplex {
    fn type_descriptor() -> TypeDescriptor {
        let f = TypeDescriptor::Float(FloatSize::U4);
        TypeDescriptor::Compound(CompoundType {
            fields: vec![
                CompoundField::new("real", f.clone(), std::mem::offset_of!(MatComplex, real), 0),
                CompoundField::new("imag", f, std::mem::offset_of!(MatComplex, imag), 1),
            ],
            size: std::mem::size_of::<MatComplex>(),
        })
    }
}

fn mat_value(f: usize, s: usize, c: usize, ky: usize, kx: usize) -> MatComplex {
    MatComplex {
        real: (f * 10_000 + s * 1000 + c * 100 + ky * 10 + kx) as f32,
        imag: -((f + s + c + ky + kx) as f32),
    }
}

#[test]
fn challenge_layout_is_permuted_to_frame_coil_kx_ky() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cine_sax.mat");
    let (frames, slices, coils, ny, nx) = (2, 2, 3, 10, 8);
    let data = ndarray::Array5::from_shape_fn((frames, slices, coils, ny, nx), |(f, s, c, y, x)| mat_value(f, s, c, y, x));
    {
        let file = hdf5::File::create(&path).unwrap();
        file.new_dataset_builder().with_data(&data).create("kspace_full").unwrap();
        file.new_dataset_builder()
            .with_data(&data.slice(ndarray::s![.., 0, .., .., ..]).to_owned())
            .create("single")
            .unwrap();
    }

    let layout = ChallengeLayout {
        slice: 1,
        contrast: ContrastTag::T1w,
        ..ChallengeLayout::default()
    };
    let rec = read_challenge_subject(&path, &layout).unwrap();
    assert_eq!(rec.dims(), (frames, coils, nx, ny));
    assert_eq!(rec.contrast, ContrastTag::T1w);
    for ((f, c, x, y), v) in rec.kspace_full.indexed_iter() {
        let want = mat_value(f, 1, c, y, x);
        assert_eq!((v.re, v.im), (want.real, want.imag), "at {:?}", (f, c, x, y));
    }
    assert!(rec.consistency_error() < 1e-3 * rec.image_rss.iter().copied().fold(0.0, f32::max) as f64);

    let rank4 = ChallengeLayout {
        dataset: "single".into(),
        ..ChallengeLayout::default()
    };
    let rec = read_challenge_subject(&path, &rank4).unwrap();
    assert_eq!(rec.kspace_full[[1, 2, 7, 9]], num_complex::Complex32::new(mat_value(1, 0, 2, 9, 7).real, mat_value(1, 0, 2, 9, 7).imag));

    let out_of_range = ChallengeLayout {
        slice: 2,
        ..ChallengeLayout::default()
    };
    let err = read_challenge_subject(&path, &out_of_range).unwrap_err().to_string();
    assert!(err.contains("slice 2 out of range for 2 slices"), "{err}");

    let missing = ChallengeLayout {
        dataset: "kspace_sub04".into(),
        ..ChallengeLayout::default()
    };
    let err = read_challenge_subject(&path, &missing).unwrap_err().to_string();
    assert!(err.contains("missing array `kspace_sub04`"), "{err}");
}

#[test]
fn challenge_reader_rejects_bad_rank() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("flat.mat");
    let data = ndarray::Array3::from_shape_fn((3, 10, 8), |(c, y, x)| mat_value(0, 0, c, y, x));
    hdf5::File::create(&path)
        .unwrap()
        .new_dataset_builder()
        .with_data(&data)
        .create("kspace_full")
        .unwrap();
    let err = read_challenge_subject(&path, &ChallengeLayout::default()).unwrap_err().to_string();
    assert!(err.contains("has rank 3, expected 4 or 5"), "{err}");
}
