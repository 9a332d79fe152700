//! im2col-based convolution kernels shared by the tape ops. Inner loops
//! precompute the valid output range per (channel, tap) pair so the hot path
//! is branch-free, and stride-1 taps degenerate to slice copies.

use ndarray::{Array1, Array2, ArrayD, Ix1, Ix3, Ix4};

use crate::scalar::Scalar;

fn conv1d_out_len(t: usize, k: usize, stride: usize, pad: usize) -> usize {
    assert!(t + 2 * pad >= k, "conv1d input shorter than kernel");
    (t + 2 * pad - k) / stride + 1
}

/// Output positions `to` for which `to*stride + tap - pad` lands in `[0, t)`.
fn valid_range(t: usize, tap: usize, stride: usize, pad: usize, t_out: usize) -> (usize, usize) {
    let off = tap as isize - pad as isize;
    let lo = if off >= 0 { 0 } else { ((-off) as usize).div_ceil(stride) };
    // to*stride + off <= t-1  =>  to <= (t-1-off)/stride
    let hi_isize = t as isize - 1 - off;
    if hi_isize < 0 {
        return (0, 0);
    }
    let hi = (hi_isize as usize) / stride + 1;
    (lo.min(t_out), hi.min(t_out))
}

/// Unfold `x (C, T)` into `(C*K, T_out)` patch columns.
fn im2col1d<T: Scalar>(
    x: &ndarray::ArrayView2<T>,
    k: usize,
    stride: usize,
    pad: usize,
) -> Array2<T> {
    let (c, t) = (x.nrows(), x.ncols());
    let t_out = conv1d_out_len(t, k, stride, pad);
    let mut cols = Array2::<T>::zeros((c * k, t_out));
    for ci in 0..c {
        let x_row = x.row(ci);
        let x_slice = x_row.as_slice().expect("standard layout");
        for kk in 0..k {
            let (lo, hi) = valid_range(t, kk, stride, pad, t_out);
            if lo >= hi {
                continue;
            }
            let src0 = (lo * stride + kk) as isize - pad as isize;
            let src0 = src0 as usize;
            let mut row = cols.row_mut(ci * k + kk);
            let row_slice = row.as_slice_mut().expect("standard layout");
            if stride == 1 {
                row_slice[lo..hi].copy_from_slice(&x_slice[src0..src0 + (hi - lo)]);
            } else {
                for (dst, src) in row_slice[lo..hi]
                    .iter_mut()
                    .zip(x_slice[src0..].iter().step_by(stride))
                {
                    *dst = *src;
                }
            }
        }
    }
    cols
}

/// Scatter `(C*K, T_out)` patch-column gradients back onto `(C, T)`.
fn col2im1d<T: Scalar>(
    cols: &Array2<T>,
    c: usize,
    t: usize,
    k: usize,
    stride: usize,
    pad: usize,
) -> Array2<T> {
    let t_out = cols.ncols();
    let mut out = Array2::<T>::zeros((c, t));
    for ci in 0..c {
        let mut out_row = out.row_mut(ci);
        let out_slice = out_row.as_slice_mut().expect("standard layout");
        for kk in 0..k {
            let (lo, hi) = valid_range(t, kk, stride, pad, t_out);
            if lo >= hi {
                continue;
            }
            let dst0 = ((lo * stride + kk) as isize - pad as isize) as usize;
            let col_row = cols.row(ci * k + kk);
            let col_slice = col_row.as_slice().expect("standard layout");
            if stride == 1 {
                for (dst, src) in out_slice[dst0..dst0 + (hi - lo)]
                    .iter_mut()
                    .zip(&col_slice[lo..hi])
                {
                    *dst += *src;
                }
            } else {
                for (dst, src) in out_slice[dst0..]
                    .iter_mut()
                    .step_by(stride)
                    .zip(&col_slice[lo..hi])
                {
                    *dst += *src;
                }
            }
        }
    }
    out
}

pub fn conv1d_forward<T: Scalar>(
    x: &ArrayD<T>,
    w: &ArrayD<T>,
    b: &ArrayD<T>,
    stride: usize,
    pad: usize,
) -> ArrayD<T> {
    let xv = x.view().into_dimensionality::<ndarray::Ix2>().expect("conv1d x 2-d");
    let wv = w.view().into_dimensionality::<Ix3>().expect("conv1d w 3-d");
    let bv = b.view().into_dimensionality::<Ix1>().expect("conv1d b 1-d");
    let (c_out, c_in, k) = wv.dim();
    assert_eq!(xv.nrows(), c_in, "conv1d channel mismatch");
    assert_eq!(bv.len(), c_out);

    let cols = im2col1d(&xv, k, stride, pad);
    let w_mat = wv.to_shape((c_out, c_in * k)).expect("w reshape");
    let mut out = w_mat.dot(&cols);
    for (i, mut row) in out.rows_mut().into_iter().enumerate() {
        let bias = bv[i];
        row.mapv_inplace(|v| v + bias);
    }
    out.into_dyn()
}

pub fn conv1d_backward<T: Scalar>(
    g: &ArrayD<T>,
    parents: &[&ArrayD<T>],
    needs: &[bool],
    stride: usize,
    pad: usize,
) -> Vec<Option<ArrayD<T>>> {
    let xv = parents[0].view().into_dimensionality::<ndarray::Ix2>().unwrap();
    let wv = parents[1].view().into_dimensionality::<Ix3>().unwrap();
    let gv = g.view().into_dimensionality::<ndarray::Ix2>().unwrap();
    let (c_out, c_in, k) = wv.dim();
    let (c, t) = (xv.nrows(), xv.ncols());

    let dx = if needs[0] {
        let w_mat = wv.to_shape((c_out, c_in * k)).unwrap();
        let dcols = w_mat.t().dot(&gv);
        Some(col2im1d(&dcols, c, t, k, stride, pad).into_dyn())
    } else {
        None
    };
    let dw = if needs[1] {
        let cols = im2col1d(&xv, k, stride, pad);
        let dw_mat = gv.dot(&cols.t());
        Some(dw_mat.into_shape_clone((c_out, c_in, k)).unwrap().into_dyn())
    } else {
        None
    };
    let db = if needs[2] {
        let sums: Array1<T> = gv.sum_axis(ndarray::Axis(1));
        Some(sums.into_dyn())
    } else {
        None
    };
    vec![dx, dw, db]
}

pub fn conv_transpose1d_forward<T: Scalar>(
    x: &ArrayD<T>,
    w: &ArrayD<T>,
    b: &ArrayD<T>,
    stride: usize,
    pad: usize,
) -> ArrayD<T> {
    let xv = x.view().into_dimensionality::<ndarray::Ix2>().expect("convT x 2-d");
    let wv = w.view().into_dimensionality::<Ix3>().expect("convT w 3-d");
    let bv = b.view().into_dimensionality::<Ix1>().expect("convT b 1-d");
    let (c_in, c_out, k) = wv.dim();
    assert_eq!(xv.nrows(), c_in, "convT channel mismatch");
    let t = xv.ncols();
    let t_out = (t - 1) * stride + k - 2 * pad;

    let w_mat = wv.to_shape((c_in, c_out * k)).expect("w reshape");
    let prod = w_mat.t().dot(&xv); // (C_out*K, T)
    let mut out = Array2::<T>::zeros((c_out, t_out));
    for co in 0..c_out {
        let mut out_row = out.row_mut(co);
        let out_slice = out_row.as_slice_mut().expect("standard layout");
        for kk in 0..k {
            let (lo, hi) = valid_range(t_out, kk, stride, pad, t);
            if lo >= hi {
                continue;
            }
            let dst0 = ((lo * stride + kk) as isize - pad as isize) as usize;
            let prod_row = prod.row(co * k + kk);
            let prod_slice = prod_row.as_slice().expect("standard layout");
            for (dst, src) in out_slice[dst0..]
                .iter_mut()
                .step_by(stride)
                .zip(&prod_slice[lo..hi])
            {
                *dst += *src;
            }
        }
        let bias = bv[co];
        for v in out_slice.iter_mut() {
            *v += bias;
        }
    }
    out.into_dyn()
}

pub fn conv_transpose1d_backward<T: Scalar>(
    g: &ArrayD<T>,
    parents: &[&ArrayD<T>],
    needs: &[bool],
    stride: usize,
    pad: usize,
) -> Vec<Option<ArrayD<T>>> {
    let xv = parents[0].view().into_dimensionality::<ndarray::Ix2>().unwrap();
    let wv = parents[1].view().into_dimensionality::<Ix3>().unwrap();
    let gv = g.view().into_dimensionality::<ndarray::Ix2>().unwrap();
    let (c_in, c_out, k) = wv.dim();
    let t = xv.ncols();
    let t_out = gv.ncols();

    // Gather output-gradient patches aligned with each input position.
    let mut gcols = Array2::<T>::zeros((c_out * k, t));
    for co in 0..c_out {
        let g_row = gv.row(co);
        let g_slice = g_row.as_slice().expect("standard layout");
        for kk in 0..k {
            let (lo, hi) = valid_range(t_out, kk, stride, pad, t);
            if lo >= hi {
                continue;
            }
            let src0 = ((lo * stride + kk) as isize - pad as isize) as usize;
            let mut row = gcols.row_mut(co * k + kk);
            let row_slice = row.as_slice_mut().expect("standard layout");
            if stride == 1 {
                row_slice[lo..hi].copy_from_slice(&g_slice[src0..src0 + (hi - lo)]);
            } else {
                for (dst, src) in row_slice[lo..hi]
                    .iter_mut()
                    .zip(g_slice[src0..].iter().step_by(stride))
                {
                    *dst = *src;
                }
            }
        }
    }

    let dx = if needs[0] {
        let w_mat = wv.to_shape((c_in, c_out * k)).unwrap();
        Some(w_mat.dot(&gcols).into_dyn())
    } else {
        None
    };
    let dw = if needs[1] {
        let dw_mat = xv.dot(&gcols.t()); // (C_in, C_out*K)
        Some(dw_mat.into_shape_clone((c_in, c_out, k)).unwrap().into_dyn())
    } else {
        None
    };
    let db = if needs[2] {
        let sums: Array1<T> = gv.sum_axis(ndarray::Axis(1));
        Some(sums.into_dyn())
    } else {
        None
    };
    vec![dx, dw, db]
}

fn conv2d_out_dims(
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    stride: (usize, usize),
    pad: (usize, usize),
) -> (usize, usize) {
    assert!(h + 2 * pad.0 >= kh && w + 2 * pad.1 >= kw, "conv2d input smaller than kernel");
    (
        (h + 2 * pad.0 - kh) / stride.0 + 1,
        (w + 2 * pad.1 - kw) / stride.1 + 1,
    )
}

fn im2col2d<T: Scalar>(
    x: &ndarray::ArrayView3<T>,
    kh: usize,
    kw: usize,
    stride: (usize, usize),
    pad: (usize, usize),
) -> Array2<T> {
    let (c, h, w) = x.dim();
    let (ho, wo) = conv2d_out_dims(h, w, kh, kw, stride, pad);
    let mut cols = Array2::<T>::zeros((c * kh * kw, ho * wo));
    for ci in 0..c {
        let plane = x.index_axis(ndarray::Axis(0), ci);
        for ki in 0..kh {
            let (oi_lo, oi_hi) = valid_range(h, ki, stride.0, pad.0, ho);
            for kj in 0..kw {
                let row_idx = (ci * kh + ki) * kw + kj;
                let (oj_lo, oj_hi) = valid_range(w, kj, stride.1, pad.1, wo);
                if oi_lo >= oi_hi || oj_lo >= oj_hi {
                    continue;
                }
                let mut row = cols.row_mut(row_idx);
                let row_slice = row.as_slice_mut().expect("standard layout");
                for oi in oi_lo..oi_hi {
                    let si = ((oi * stride.0 + ki) as isize - pad.0 as isize) as usize;
                    let src_row = plane.row(si);
                    let src = src_row.as_slice().expect("standard layout");
                    let sj0 = ((oj_lo * stride.1 + kj) as isize - pad.1 as isize) as usize;
                    let dst = &mut row_slice[oi * wo + oj_lo..oi * wo + oj_hi];
                    if stride.1 == 1 {
                        dst.copy_from_slice(&src[sj0..sj0 + (oj_hi - oj_lo)]);
                    } else {
                        for (d, s) in dst.iter_mut().zip(src[sj0..].iter().step_by(stride.1)) {
                            *d = *s;
                        }
                    }
                }
            }
        }
    }
    cols
}

pub fn conv2d_forward<T: Scalar>(
    x: &ArrayD<T>,
    w: &ArrayD<T>,
    b: &ArrayD<T>,
    stride: (usize, usize),
    pad: (usize, usize),
) -> ArrayD<T> {
    let xv = x.view().into_dimensionality::<Ix3>().expect("conv2d x 3-d");
    let wv = w.view().into_dimensionality::<Ix4>().expect("conv2d w 4-d");
    let bv = b.view().into_dimensionality::<Ix1>().expect("conv2d b 1-d");
    let (c_out, c_in, kh, kw) = wv.dim();
    let (c, h, wd) = xv.dim();
    assert_eq!(c, c_in, "conv2d channel mismatch");
    let (ho, wo) = conv2d_out_dims(h, wd, kh, kw, stride, pad);

    let cols = im2col2d(&xv, kh, kw, stride, pad);
    let w_mat = wv.to_shape((c_out, c_in * kh * kw)).expect("w reshape");
    let mut flat = w_mat.dot(&cols);
    for (i, mut row) in flat.rows_mut().into_iter().enumerate() {
        let bias = bv[i];
        row.mapv_inplace(|v| v + bias);
    }
    flat.into_shape_clone((c_out, ho, wo)).unwrap().into_dyn()
}

pub fn conv2d_backward<T: Scalar>(
    g: &ArrayD<T>,
    parents: &[&ArrayD<T>],
    needs: &[bool],
    stride: (usize, usize),
    pad: (usize, usize),
) -> Vec<Option<ArrayD<T>>> {
    let xv = parents[0].view().into_dimensionality::<Ix3>().unwrap();
    let wv = parents[1].view().into_dimensionality::<Ix4>().unwrap();
    let (c_out, c_in, kh, kw) = wv.dim();
    let (c, h, wd) = xv.dim();
    let gv = g
        .view()
        .into_dimensionality::<Ix3>()
        .unwrap()
        .to_shape((c_out, g.len() / c_out))
        .unwrap()
        .to_owned();

    let dx = if needs[0] {
        let w_mat = wv.to_shape((c_out, c_in * kh * kw)).unwrap();
        let dcols = w_mat.t().dot(&gv);
        let (ho, wo) = conv2d_out_dims(h, wd, kh, kw, stride, pad);
        let mut out = ndarray::Array3::<T>::zeros((c, h, wd));
        for ci in 0..c {
            let mut plane = out.index_axis_mut(ndarray::Axis(0), ci);
            for ki in 0..kh {
                let (oi_lo, oi_hi) = valid_range(h, ki, stride.0, pad.0, ho);
                for kj in 0..kw {
                    let row_idx = (ci * kh + ki) * kw + kj;
                    let (oj_lo, oj_hi) = valid_range(wd, kj, stride.1, pad.1, wo);
                    if oi_lo >= oi_hi || oj_lo >= oj_hi {
                        continue;
                    }
                    let col_row = dcols.row(row_idx);
                    let col_slice = col_row.as_slice().expect("standard layout");
                    for oi in oi_lo..oi_hi {
                        let di = ((oi * stride.0 + ki) as isize - pad.0 as isize) as usize;
                        let mut dst_row = plane.row_mut(di);
                        let dst = dst_row.as_slice_mut().expect("standard layout");
                        let dj0 = ((oj_lo * stride.1 + kj) as isize - pad.1 as isize) as usize;
                        let src = &col_slice[oi * wo + oj_lo..oi * wo + oj_hi];
                        if stride.1 == 1 {
                            for (d, s) in dst[dj0..dj0 + src.len()].iter_mut().zip(src) {
                                *d += *s;
                            }
                        } else {
                            for (d, s) in
                                dst[dj0..].iter_mut().step_by(stride.1).zip(src)
                            {
                                *d += *s;
                            }
                        }
                    }
                }
            }
        }
        Some(out.into_dyn())
    } else {
        None
    };
    let dw = if needs[1] {
        let cols = im2col2d(&xv, kh, kw, stride, pad);
        let dw_mat = gv.dot(&cols.t());
        Some(dw_mat.into_shape_clone((c_out, c_in, kh, kw)).unwrap().into_dyn())
    } else {
        None
    };
    let db = if needs[2] {
        let sums: Array1<T> = gv.sum_axis(ndarray::Axis(1));
        Some(sums.into_dyn())
    } else {
        None
    };
    vec![dx, dw, db]
}
