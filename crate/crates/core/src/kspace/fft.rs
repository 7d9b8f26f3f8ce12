use num_complex::Complex;
use num_traits::Float;
use rustfft::{FftDirection, FftNum, FftPlanner};

/// Circular shift of an `h × w` plane by `(dy, dx)`.
fn roll<T: Copy>(src: &[T], dst: &mut [T], h: usize, w: usize, dy: usize, dx: usize) {
    for i in 0..h {
        let oi = (i + dy) % h;
        for j in 0..w {
            dst[oi * w + (j + dx) % w] = src[i * w + j];
        }
    }
}

/// Centered orthonormal 2D DFT of every contiguous trailing `h × w` plane,
/// in place. `inverse` selects the conjugate transform.
///
/// Centered means `fftshift ∘ DFT ∘ ifftshift`, so the zero frequency lives
/// at `(h / 2, w / 2)`.
pub fn fft2c_planes<T: FftNum + Float>(data: &mut [Complex<T>], h: usize, w: usize, inverse: bool) {
    let plane = h * w;
    if plane == 0 {
        return;
    }
    assert_eq!(data.len() % plane, 0, "buffer is not a whole number of {h}x{w} planes");
    let dir = if inverse { FftDirection::Inverse } else { FftDirection::Forward };
    let mut planner = FftPlanner::<T>::new();
    let row_fft = planner.plan_fft(w, dir);
    let col_fft = planner.plan_fft(h, dir);
    let scale = T::from_f64(1.0 / (plane as f64).sqrt()).unwrap();
    let mut a = vec![Complex::new(T::zero(), T::zero()); plane];
    let mut b = a.clone();
    let (ch, cw) = (h / 2, w / 2);
    for p in data.chunks_exact_mut(plane) {
        // ifftshift: shift by ceil(n/2), the inverse of a floor(n/2) shift.
        roll(p, &mut a, h, w, h - ch, w - cw);
        row_fft.process(&mut a);
        for i in 0..h {
            for j in 0..w {
                b[j * h + i] = a[i * w + j];
            }
        }
        col_fft.process(&mut b);
        for j in 0..w {
            for i in 0..h {
                a[i * w + j] = b[j * h + i];
            }
        }
        roll(&a, p, h, w, ch, cw);
        for v in p.iter_mut() {
            *v = *v * scale;
        }
    }
}
