use std::f64::consts::PI;

use cmr_recon::kspace::{
    acs_window, coil_combine_rss, coil_expand, coil_reduce, conjugate_symmetry, extract_acs, fft2c, ifft2c,
    is_normalized, rss_image, rss_normalize, MultiCoilKSpace, C64,
};
use ndarray::{Array2, Array3, Array4, ArrayD, IxDyn};
use num_complex::Complex32;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_c64(shape: &[usize], seed: u64) -> ArrayD<C64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ArrayD::from_shape_fn(IxDyn(shape), |_| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
}

/// Direct O(N²) centred orthonormal DFT of one plane, DC at (h/2, w/2).
fn dft_oracle(x: &Array2<C64>, inverse: bool) -> Array2<C64> {
    let (h, w) = x.dim();
    let sign = if inverse { 1.0 } else { -1.0 };
    let (ch, cw) = ((h / 2) as f64, (w / 2) as f64);
    let mut out = Array2::zeros((h, w));
    for ((u, v), o) in out.indexed_iter_mut() {
        let mut acc = C64::new(0.0, 0.0);
        for ((i, j), &val) in x.indexed_iter() {
            let phase = sign
                * 2.0
                * PI
                * ((u as f64 - ch) * (i as f64 - ch) / h as f64 + (v as f64 - cw) * (j as f64 - cw) / w as f64);
            acc += val * C64::from_polar(1.0, phase);
        }
        *o = acc / ((h * w) as f64).sqrt();
    }
    out
}

#[test]
fn fft_matches_direct_dft_for_even_and_odd_sizes() {
    for (h, w) in [(4, 4), (6, 5), (7, 9), (8, 3)] {
        let x = random_c64(&[h, w], (h * 10 + w) as u64);
        let x2: Array2<C64> = x.clone().into_dimensionality().unwrap();
        for inverse in [false, true] {
            let fast = if inverse { ifft2c(&x) } else { fft2c(&x) }.unwrap();
            let slow = dft_oracle(&x2, inverse);
            let err = fast.iter().zip(slow.iter()).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
            assert!(err < 1e-12, "{h}x{w} inverse={inverse}: {err}");
        }
    }
}

#[test]
fn transforms_act_on_trailing_axes_only() {
    let x = random_c64(&[3, 2, 6, 6], 4);
    let k = fft2c(&x).unwrap();
    for t in 0..3 {
        for c in 0..2 {
            let plane: Array2<C64> = x.slice(ndarray::s![t, c, .., ..]).to_owned();
            let want = dft_oracle(&plane, false);
            let got = k.slice(ndarray::s![t, c, .., ..]);
            let err = got.iter().zip(want.iter()).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
            assert!(err < 1e-12);
        }
    }
}

#[test]
fn single_precision_roundtrip_and_parseval() {
    let x = random_c64(&[2, 16, 12], 8).mapv(|v| Complex32::new(v.re as f32, v.im as f32));
    let k = fft2c(&x).unwrap();
    let back = ifft2c(&k).unwrap();
    let err = x.iter().zip(back.iter()).map(|(a, b)| (a - b).norm()).fold(0.0, f32::max);
    assert!(err < 1e-6, "{err}");
    let ex: f32 = x.iter().map(|v| v.norm_sqr()).sum();
    let ek: f32 = k.iter().map(|v| v.norm_sqr()).sum();
    assert!(((ex - ek) / ex).abs() < 1e-6);
}

#[test]
fn rank_below_two_is_rejected() {
    let x = ArrayD::from_elem(IxDyn(&[5]), C64::new(1.0, 0.0));
    assert!(fft2c(&x).is_err());
}

fn random_maps(c: usize, h: usize, w: usize, seed: u64) -> cmr_recon::kspace::SensitivityMaps {
    let raw: Array3<C64> = random_c64(&[c, h, w], seed).into_dimensionality().unwrap();
    rss_normalize(raw, 1e-12).unwrap()
}

#[test]
fn coil_reduce_and_expand_match_loop_oracles() {
    let (t, c, h, w) = (2, 3, 5, 4);
    let maps = random_maps(c, h, w, 1);
    let img: Array3<C64> = random_c64(&[t, h, w], 2).into_dimensionality().unwrap();
    let mc: Array4<C64> = random_c64(&[t, c, h, w], 3).into_dimensionality().unwrap();

    let expanded = coil_expand(img.view(), &maps).unwrap();
    let reduced = coil_reduce(mc.view(), &conjugate_symmetry(&maps)).unwrap();
    let s = maps.data();
    for ti in 0..t {
        for y in 0..h {
            for x in 0..w {
                let mut acc = C64::new(0.0, 0.0);
                for ci in 0..c {
                    let want = s[[ci, y, x]] * img[[ti, y, x]];
                    assert!((expanded[[ti, ci, y, x]] - want).norm() < 1e-15);
                    acc += s[[ci, y, x]].conj() * mc[[ti, ci, y, x]];
                }
                assert!((reduced[[ti, y, x]] - acc).norm() < 1e-14);
            }
        }
    }
}

#[test]
fn rss_matches_loop_oracle() {
    let k: Array3<C64> = random_c64(&[3, 6, 5], 11).into_dimensionality().unwrap();
    let img: Array3<C64> = ifft2c(&k.clone().into_dyn()).unwrap().into_dimensionality().unwrap();
    let got = rss_image(k.view());
    for y in 0..6 {
        for x in 0..5 {
            let want = (0..3).map(|c| img[[c, y, x]].norm_sqr()).sum::<f64>().sqrt();
            assert!((got[[y, x]] - want).abs() < 1e-14);
        }
    }
    assert_eq!(coil_combine_rss(img.view()), got);
}

#[test]
fn extract_acs_keeps_only_the_central_window_of_the_central_slice() {
    let data: Array4<C64> = random_c64(&[3, 2, 4, 10], 5).into_dimensionality().unwrap();
    let k = MultiCoilKSpace::new(data.clone()).unwrap();
    let acs = extract_acs(&k, 4).unwrap();
    assert_eq!(acs.dims(), (1, 2, 4, 10));
    let cols = acs_window(10, 4);
    assert_eq!(cols, 3..7);
    for ((_, c, y, x), v) in acs.data().indexed_iter() {
        let want = if cols.contains(&x) { data[[1, c, y, x]] } else { C64::new(0.0, 0.0) };
        assert_eq!(*v, want);
    }
    assert!(extract_acs(&k, 11).is_err());
}

#[test]
fn zero_energy_pixels_stay_zero_after_normalization() {
    let mut raw = Array3::from_elem((2, 3, 3), C64::new(0.5, 0.5));
    raw[[0, 1, 1]] = C64::new(0.0, 0.0);
    raw[[1, 1, 1]] = C64::new(0.0, 0.0);
    let maps = rss_normalize(raw, 1e-12).unwrap();
    assert_eq!(maps.data()[[0, 1, 1]], C64::new(0.0, 0.0));
    assert!(is_normalized(&maps, 1e-12));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn fft_roundtrip_and_parseval(h in 2usize..12, w in 2usize..12, seed in any::<u64>()) {
        let x = random_c64(&[2, h, w], seed);
        let k = fft2c(&x).unwrap();
        let back = ifft2c(&k).unwrap();
        let err = x.iter().zip(back.iter()).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        prop_assert!(err < 1e-12);
        let ex: f64 = x.iter().map(|v| v.norm_sqr()).sum();
        let ek: f64 = k.iter().map(|v| v.norm_sqr()).sum();
        prop_assert!(((ex - ek) / ex).abs() < 1e-12);
    }

    #[test]
    fn reduce_inverts_expand_for_normalized_maps(c in 1usize..5, h in 1usize..6, w in 1usize..6, seed in any::<u64>()) {
        let maps = random_maps(c, h, w, seed);
        prop_assert!(is_normalized(&maps, 1e-12));
        let img: Array3<C64> = random_c64(&[2, h, w], seed ^ 1).into_dimensionality().unwrap();
        let back = coil_reduce(coil_expand(img.view(), &maps).unwrap().view(), &conjugate_symmetry(&maps)).unwrap();
        let err = img.iter().zip(back.iter()).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        prop_assert!(err < 1e-12);
    }

    #[test]
    fn acs_window_is_centred_and_in_range(w in 1usize..200, frac in 0.0f64..1.0) {
        let acs = ((w as f64) * frac) as usize;
        let r = acs_window(w, acs);
        prop_assert_eq!(r.len(), acs);
        prop_assert!(r.end <= w);
        let mid2 = (2 * r.start + acs) as i64;
        prop_assert!((mid2 - 2 * (w / 2) as i64).abs() <= 1, "{:?} in {}", r, w);
    }
}
