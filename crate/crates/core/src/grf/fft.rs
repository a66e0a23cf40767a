use ndarray::Array2;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::scalar::Scalar;

/// In-place 2-D DFT of a row-major `h × w` buffer. Forward is unnormalized,
/// the inverse carries the `1/N` factor.
pub(crate) fn fft2<T: Scalar>(data: &mut [Complex<T>], h: usize, w: usize, inverse: bool) {
    debug_assert_eq!(data.len(), h * w);
    let mut planner = FftPlanner::<T>::new();
    let (row, col) = if inverse {
        (planner.plan_fft_inverse(w), planner.plan_fft_inverse(h))
    } else {
        (planner.plan_fft_forward(w), planner.plan_fft_forward(h))
    };
    row.process(data);
    let mut column = vec![Complex::new(T::zero(), T::zero()); h];
    for j in 0..w {
        for i in 0..h {
            column[i] = data[i * w + j];
        }
        col.process(&mut column);
        for i in 0..h {
            data[i * w + j] = column[i];
        }
    }
    if inverse {
        let scale = T::one() / T::of((h * w) as f64);
        for v in data.iter_mut() {
            *v = *v * scale;
        }
    }
}

pub(crate) fn to_complex<T: Scalar>(field: &[T]) -> Vec<Complex<T>> {
    field.iter().map(|&v| Complex::new(v, T::zero())).collect()
}

/// Applies the stationary operator with eigenvalues `gain[k]` to a real field:
/// `Re(IDFT(gain ⊙ DFT(field)))`. Returns the field and the largest discarded
/// imaginary magnitude.
pub(crate) fn spectral_filter<T: Scalar>(field: &[T], gain: &Array2<T>) -> (Vec<T>, T) {
    let (h, w) = gain.dim();
    let mut buf = to_complex(field);
    fft2(&mut buf, h, w, false);
    for (v, &g) in buf.iter_mut().zip(gain.iter()) {
        *v = *v * g;
    }
    fft2(&mut buf, h, w, true);
    let mut residue = T::zero();
    let out = buf
        .iter()
        .map(|c| {
            residue = residue.max(c.im.abs());
            c.re
        })
        .collect();
    (out, residue)
}
