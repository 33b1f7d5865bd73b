//! Stride-1 "same" convolution via im2col + GEMM.

use crate::error::{Error, Result};
use crate::nn::tensor::{gemm, Scalar, Tensor};

/// Unfolds one `c × h × w` image into a `(c·kh·kw) × (h·w)` patch matrix with zero padding.
fn im2col<F: Scalar>(x: &[F], c: usize, h: usize, w: usize, kh: usize, kw: usize, cols: &mut [F]) {
    let (ph, pw) = (kh / 2, kw / 2);
    let hw = h * w;
    for ci in 0..c {
        let plane = &x[ci * hw..(ci + 1) * hw];
        for ki in 0..kh {
            for kj in 0..kw {
                let row = (ci * kh + ki) * kw + kj;
                let dst = &mut cols[row * hw..(row + 1) * hw];
                let x_lo = pw.saturating_sub(kj);
                let x_hi = (w + pw).saturating_sub(kj).min(w);
                for y in 0..h {
                    let out = &mut dst[y * w..(y + 1) * w];
                    let sy = y as isize + ki as isize - ph as isize;
                    if sy < 0 || sy >= h as isize || x_lo >= x_hi {
                        out.iter_mut().for_each(|v| *v = F::zero());
                        continue;
                    }
                    let src_row = &plane[sy as usize * w..(sy as usize + 1) * w];
                    out[..x_lo].iter_mut().for_each(|v| *v = F::zero());
                    out[x_hi..].iter_mut().for_each(|v| *v = F::zero());
                    let shift = kj as isize - pw as isize;
                    let s_lo = (x_lo as isize + shift) as usize;
                    out[x_lo..x_hi].copy_from_slice(&src_row[s_lo..s_lo + (x_hi - x_lo)]);
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatters a patch matrix back, accumulating into `dx`.
fn col2im<F: Scalar>(cols: &[F], c: usize, h: usize, w: usize, kh: usize, kw: usize, dx: &mut [F]) {
    let (ph, pw) = (kh / 2, kw / 2);
    let hw = h * w;
    for ci in 0..c {
        let plane = &mut dx[ci * hw..(ci + 1) * hw];
        for ki in 0..kh {
            for kj in 0..kw {
                let row = (ci * kh + ki) * kw + kj;
                let src = &cols[row * hw..(row + 1) * hw];
                let x_lo = pw.saturating_sub(kj);
                let x_hi = (w + pw).saturating_sub(kj).min(w);
                if x_lo >= x_hi {
                    continue;
                }
                let shift = kj as isize - pw as isize;
                let s_lo = (x_lo as isize + shift) as usize;
                for y in 0..h {
                    let sy = y as isize + ki as isize - ph as isize;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let dst_row = &mut plane[sy as usize * w..(sy as usize + 1) * w];
                    let grad = &src[y * w + x_lo..y * w + x_hi];
                    for (d, &g) in dst_row[s_lo..s_lo + grad.len()].iter_mut().zip(grad) {
                        *d += g;
                    }
                }
            }
        }
    }
}

pub(crate) struct ConvShape {
    n: usize,
    cin: usize,
    h: usize,
    w: usize,
    cout: usize,
    kh: usize,
    kw: usize,
}

pub(crate) fn conv_shape<F: Scalar>(x: &Tensor<F>, weight: &Tensor<F>) -> Result<ConvShape> {
    let [n, cin, h, w] = x.dims4()?;
    let [cout, wcin, kh, kw] = weight.dims4()?;
    if wcin != cin {
        return Err(Error::Shape(format!(
            "conv2d: input has {cin} channels but weight expects {wcin}"
        )));
    }
    if kh % 2 == 0 || kw % 2 == 0 {
        return Err(Error::Shape(format!(
            "conv2d: kernel {kh}x{kw} must be odd for same padding"
        )));
    }
    Ok(ConvShape {
        n,
        cin,
        h,
        w,
        cout,
        kh,
        kw,
    })
}

pub(crate) fn conv2d_forward<F: Scalar>(x: &Tensor<F>, weight: &Tensor<F>) -> Result<Tensor<F>> {
    let s = conv_shape(x, weight)?;
    let (hw, patch) = (s.h * s.w, s.cin * s.kh * s.kw);
    let mut out = Tensor::zeros(&[s.n, s.cout, s.h, s.w]);
    let mut cols = vec![F::zero(); patch * hw];
    for b in 0..s.n {
        let xb = &x.data()[b * s.cin * hw..(b + 1) * s.cin * hw];
        im2col(xb, s.cin, s.h, s.w, s.kh, s.kw, &mut cols);
        let yb = &mut out.data_mut()[b * s.cout * hw..(b + 1) * s.cout * hw];
        gemm(
            s.cout,
            patch,
            hw,
            weight.data(),
            false,
            &cols,
            false,
            yb,
            F::zero(),
        );
    }
    Ok(out)
}

/// Returns `(dx, dweight)`; either may be skipped.
pub(crate) fn conv2d_backward<F: Scalar>(
    x: &Tensor<F>,
    weight: &Tensor<F>,
    dy: &Tensor<F>,
    want_dx: bool,
    want_dw: bool,
) -> Result<(Option<Tensor<F>>, Option<Tensor<F>>)> {
    let s = conv_shape(x, weight)?;
    let (hw, patch) = (s.h * s.w, s.cin * s.kh * s.kw);
    let mut dx = want_dx.then(|| Tensor::zeros(x.shape()));
    let mut dw = want_dw.then(|| Tensor::zeros(weight.shape()));
    let mut cols = vec![F::zero(); patch * hw];
    for b in 0..s.n {
        let dyb = &dy.data()[b * s.cout * hw..(b + 1) * s.cout * hw];
        if let Some(dw) = dw.as_mut() {
            let xb = &x.data()[b * s.cin * hw..(b + 1) * s.cin * hw];
            im2col(xb, s.cin, s.h, s.w, s.kh, s.kw, &mut cols);
            // dW += dY · colsᵀ
            gemm(
                s.cout,
                hw,
                patch,
                dyb,
                false,
                &cols,
                true,
                dw.data_mut(),
                F::one(),
            );
        }
        if let Some(dx) = dx.as_mut() {
            // dcols = Wᵀ · dY
            gemm(
                patch,
                s.cout,
                hw,
                weight.data(),
                true,
                dyb,
                false,
                &mut cols,
                F::zero(),
            );
            let dxb = &mut dx.data_mut()[b * s.cin * hw..(b + 1) * s.cin * hw];
            col2im(&cols, s.cin, s.h, s.w, s.kh, s.kw, dxb);
        }
    }
    Ok((dx, dw))
}
