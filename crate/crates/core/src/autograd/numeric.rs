//! Central-difference gradient oracle used by tests and the acceptance suite.

use ndarray::ArrayD;

use crate::scalar::Scalar;

/// Central finite-difference gradient of `f` at `x` with step `h`.
pub fn central_diff_grad<T, F>(mut f: F, x: &ArrayD<T>, h: T) -> ArrayD<T>
where
    T: Scalar,
    F: FnMut(&ArrayD<T>) -> T,
{
    let mut grad = ArrayD::<T>::zeros(x.raw_dim());
    let mut probe = x.clone();
    let two_h = h + h;
    for idx in 0..x.len() {
        let orig = probe.as_slice_mut().unwrap()[idx];
        probe.as_slice_mut().unwrap()[idx] = orig + h;
        let f_plus = f(&probe);
        probe.as_slice_mut().unwrap()[idx] = orig - h;
        let f_minus = f(&probe);
        probe.as_slice_mut().unwrap()[idx] = orig;
        grad.as_slice_mut().unwrap()[idx] = (f_plus - f_minus) / two_h;
    }
    grad
}

/// Relative L2 error between two gradient arrays.
pub fn relative_error<T: Scalar>(a: &ArrayD<T>, b: &ArrayD<T>) -> f64 {
    assert_eq!(a.shape(), b.shape());
    let mut diff = 0.0f64;
    let mut na = 0.0f64;
    let mut nb = 0.0f64;
    for (x, y) in a.iter().zip(b.iter()) {
        let (x, y) = (x.to_f64().unwrap(), y.to_f64().unwrap());
        diff += (x - y) * (x - y);
        na += x * x;
        nb += y * y;
    }
    let denom = na.sqrt().max(nb.sqrt()).max(1e-300);
    diff.sqrt() / denom
}
