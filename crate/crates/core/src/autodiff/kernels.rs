//! Dense numeric kernels behind the graph ops.
//!
//! Convolutions are lowered to chunked im2col + GEMM. Every tensor is viewed as
//! `(batch, channels, depth, height, width)`; 4-D tensors get a unit depth.
//! All kernels are single-threaded and bit-deterministic.

use super::{Real, Tensor};
use crate::error::{Error, Result};

/// Upper bound on the im2col scratch buffer, in elements.
const COL_BUDGET: usize = 1 << 21;

/// Stride and zero padding per spatial axis (depth, height, width).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ConvGeom {
    pub stride: [usize; 3],
    pub pad: [usize; 3],
}

impl ConvGeom {
    pub fn new_2d(stride: usize, pad: usize) -> Self {
        Self {
            stride: [1, stride, stride],
            pad: [0, pad, pad],
        }
    }

    pub fn new_3d(stride: [usize; 3], pad: [usize; 3]) -> Self {
        Self { stride, pad }
    }

    pub fn unit() -> Self {
        Self {
            stride: [1; 3],
            pad: [0; 3],
        }
    }

    pub fn out_extent(&self, input: [usize; 3], kernel: [usize; 3]) -> Option<[usize; 3]> {
        let mut out = [0; 3];
        for a in 0..3 {
            let padded = input[a] + 2 * self.pad[a];
            if kernel[a] == 0 || kernel[a] > padded || self.stride[a] == 0 {
                return None;
            }
            out[a] = (padded - kernel[a]) / self.stride[a] + 1;
        }
        Some(out)
    }
}

/// `(n, c, [d, h, w])` view of a 4-D or 5-D shape.
pub(crate) fn split5(shape: &[usize], op: &'static str) -> Result<(usize, usize, [usize; 3])> {
    match *shape {
        [n, c, h, w] => Ok((n, c, [1, h, w])),
        [n, c, d, h, w] => Ok((n, c, [d, h, w])),
        _ => Err(Error::shape(
            op,
            format!("expected a 4-D or 5-D tensor, got {shape:?}"),
        )),
    }
}

pub(crate) fn join5(rank3: bool, n: usize, c: usize, s: [usize; 3]) -> Vec<usize> {
    if rank3 {
        vec![n, c, s[0], s[1], s[2]]
    } else {
        vec![n, c, s[1], s[2]]
    }
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct ConvDims {
    pub n: usize,
    pub cin: usize,
    pub cout: usize,
    pub input: [usize; 3],
    pub kernel: [usize; 3],
    pub out: [usize; 3],
    pub geom: ConvGeom,
    pub rank3: bool,
}

impl ConvDims {
    /// Validate `x ⋆ w` where `x_shape` is the conv input and `w_shape` is `[cout, cin, k..]`.
    pub fn new(
        x_shape: &[usize],
        w_shape: &[usize],
        geom: ConvGeom,
        op: &'static str,
    ) -> Result<Self> {
        let (n, cin, input) = split5(x_shape, op)?;
        let (cout, wcin, kernel) = split5(w_shape, op)?;
        if x_shape.len() != w_shape.len() {
            return Err(Error::shape(
                op,
                format!("input {x_shape:?} and weights {w_shape:?} differ in rank"),
            ));
        }
        if cin != wcin {
            return Err(Error::shape(
                op,
                format!("input has {cin} channels, weights expect {wcin}"),
            ));
        }
        let rank3 = x_shape.len() == 5;
        if !rank3 && (geom.stride[0] != 1 || geom.pad[0] != 0) {
            return Err(Error::geometry(op, "2-D convolution with depth stride/padding"));
        }
        let out = geom.out_extent(input, kernel).ok_or_else(|| {
            Error::geometry(
                op,
                format!(
                    "kernel {kernel:?} does not fit input {input:?} with padding {:?}",
                    geom.pad
                ),
            )
        })?;
        if out.contains(&0) {
            return Err(Error::geometry(op, "zero-size output"));
        }
        Ok(Self {
            n,
            cin,
            cout,
            input,
            kernel,
            out,
            geom,
            rank3,
        })
    }

    pub fn k_len(&self) -> usize {
        self.cin * self.kernel.iter().product::<usize>()
    }

    pub fn in_len(&self) -> usize {
        self.input.iter().product()
    }

    pub fn out_len(&self) -> usize {
        self.out.iter().product()
    }

    pub fn out_shape(&self) -> Vec<usize> {
        join5(self.rank3, self.n, self.cout, self.out)
    }

    pub fn in_shape(&self) -> Vec<usize> {
        join5(self.rank3, self.n, self.cin, self.input)
    }

    fn rows_per_chunk(&self) -> usize {
        let row = self.k_len() * self.out[2];
        (COL_BUDGET / row.max(1)).max(1)
    }
}

/// Fill `cols[K, (r1-r0)*Wo]` with input patches for output rows `r0..r1`.
fn im2col<T: Real>(d: &ConvDims, x: &[T], r0: usize, r1: usize, cols: &mut [T]) {
    let [id, ih, iw] = d.input;
    let [kd, kh, kw] = d.kernel;
    let [_, oh_n, ow_n] = d.out;
    let [sd, sh, sw] = d.geom.stride;
    let [pd, ph, pw] = d.geom.pad;
    let len = (r1 - r0) * ow_n;
    let mut kr = 0;
    for c in 0..d.cin {
        let xc = &x[c * id * ih * iw..(c + 1) * id * ih * iw];
        for a in 0..kd {
            for b in 0..kh {
                for e in 0..kw {
                    let dst = &mut cols[kr * len..(kr + 1) * len];
                    for (ri, r) in (r0..r1).enumerate() {
                        let (od, oh) = (r / oh_n, r % oh_n);
                        let seg = &mut dst[ri * ow_n..(ri + 1) * ow_n];
                        let zd = (od * sd + a) as isize - pd as isize;
                        let zh = (oh * sh + b) as isize - ph as isize;
                        if zd < 0 || zd >= id as isize || zh < 0 || zh >= ih as isize {
                            seg.fill(T::zero());
                            continue;
                        }
                        let base = (zd as usize * ih + zh as usize) * iw;
                        for (ow, v) in seg.iter_mut().enumerate() {
                            let zw = (ow * sw + e) as isize - pw as isize;
                            *v = if zw < 0 || zw >= iw as isize {
                                T::zero()
                            } else {
                                xc[base + zw as usize]
                            };
                        }
                    }
                    kr += 1;
                }
            }
        }
    }
}

/// Scatter-add `cols` back onto the input grid; adjoint of [`im2col`].
fn col2im<T: Real>(d: &ConvDims, cols: &[T], r0: usize, r1: usize, x: &mut [T]) {
    let [id, ih, iw] = d.input;
    let [kd, kh, kw] = d.kernel;
    let [_, oh_n, ow_n] = d.out;
    let [sd, sh, sw] = d.geom.stride;
    let [pd, ph, pw] = d.geom.pad;
    let len = (r1 - r0) * ow_n;
    let mut kr = 0;
    for c in 0..d.cin {
        let xc = &mut x[c * id * ih * iw..(c + 1) * id * ih * iw];
        for a in 0..kd {
            for b in 0..kh {
                for e in 0..kw {
                    let src = &cols[kr * len..(kr + 1) * len];
                    for (ri, r) in (r0..r1).enumerate() {
                        let (od, oh) = (r / oh_n, r % oh_n);
                        let zd = (od * sd + a) as isize - pd as isize;
                        let zh = (oh * sh + b) as isize - ph as isize;
                        if zd < 0 || zd >= id as isize || zh < 0 || zh >= ih as isize {
                            continue;
                        }
                        let base = (zd as usize * ih + zh as usize) * iw;
                        let seg = &src[ri * ow_n..(ri + 1) * ow_n];
                        for (ow, &v) in seg.iter().enumerate() {
                            let zw = (ow * sw + e) as isize - pw as isize;
                            if zw >= 0 && zw < iw as isize {
                                xc[base + zw as usize] = xc[base + zw as usize] + v;
                            }
                        }
                    }
                    kr += 1;
                }
            }
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn gemm<T: Real>(
    m: usize,
    k: usize,
    n: usize,
    a: &[T],
    (rsa, csa): (usize, usize),
    b: &[T],
    (rsb, csb): (usize, usize),
    beta: T,
    c: &mut [T],
    (rsc, csc): (usize, usize),
) {
    if m == 0 || n == 0 {
        return;
    }
    assert!(k == 0 || (m - 1) * rsa + (k - 1) * csa < a.len());
    assert!(k == 0 || (k - 1) * rsb + (n - 1) * csb < b.len());
    assert!((m - 1) * rsc + (n - 1) * csc < c.len());
    // SAFETY: bounds asserted above; `c` is a unique borrow distinct from `a`/`b`.
    unsafe {
        T::gemm_raw(
            m,
            k,
            n,
            T::one(),
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            rsc as isize,
            csc as isize,
        );
    }
}

/// Cross-correlation `y = x ⋆ w` without bias.
pub fn conv<T: Real>(x: &Tensor<T>, w: &Tensor<T>, geom: ConvGeom) -> Result<Tensor<T>> {
    let d = ConvDims::new(x.shape(), w.shape(), geom, "conv")?;
    let (kl, il, ol) = (d.k_len(), d.in_len(), d.out_len());
    let rows_total = d.out[0] * d.out[1];
    let chunk = d.rows_per_chunk();
    let mut y = vec![T::zero(); d.n * d.cout * ol];
    let mut cols = vec![T::zero(); kl * chunk.min(rows_total) * d.out[2]];
    for s in 0..d.n {
        let xs = &x.data()[s * d.cin * il..(s + 1) * d.cin * il];
        let ys = &mut y[s * d.cout * ol..(s + 1) * d.cout * ol];
        let mut r0 = 0;
        while r0 < rows_total {
            let r1 = (r0 + chunk).min(rows_total);
            let len = (r1 - r0) * d.out[2];
            im2col(&d, xs, r0, r1, &mut cols[..kl * len]);
            gemm(
                d.cout,
                kl,
                len,
                w.data(),
                (kl, 1),
                &cols[..kl * len],
                (len, 1),
                T::zero(),
                &mut ys[r0 * d.out[2]..],
                (ol, 1),
            );
            r0 = r1;
        }
    }
    Tensor::new(d.out_shape(), y)
}

/// Adjoint of [`conv`] with respect to its input: maps `g` (conv-output shaped)
/// back onto `x_shape`. Also serves as the transposed convolution.
pub fn conv_transpose<T: Real>(
    g: &Tensor<T>,
    w: &Tensor<T>,
    geom: ConvGeom,
    x_shape: &[usize],
) -> Result<Tensor<T>> {
    let d = ConvDims::new(x_shape, w.shape(), geom, "conv_transpose")?;
    if g.shape() != d.out_shape().as_slice() {
        return Err(Error::shape(
            "conv_transpose",
            format!(
                "gradient {:?} does not match conv output {:?}",
                g.shape(),
                d.out_shape()
            ),
        ));
    }
    let (kl, il, ol) = (d.k_len(), d.in_len(), d.out_len());
    let rows_total = d.out[0] * d.out[1];
    let chunk = d.rows_per_chunk();
    let mut x = vec![T::zero(); d.n * d.cin * il];
    let mut cols = vec![T::zero(); kl * chunk.min(rows_total) * d.out[2]];
    for s in 0..d.n {
        let gs = &g.data()[s * d.cout * ol..(s + 1) * d.cout * ol];
        let xs = &mut x[s * d.cin * il..(s + 1) * d.cin * il];
        let mut r0 = 0;
        while r0 < rows_total {
            let r1 = (r0 + chunk).min(rows_total);
            let len = (r1 - r0) * d.out[2];
            gemm(
                kl,
                d.cout,
                len,
                w.data(),
                (1, kl),
                &gs[r0 * d.out[2]..],
                (ol, 1),
                T::zero(),
                &mut cols[..kl * len],
                (len, 1),
            );
            col2im(&d, &cols[..kl * len], r0, r1, xs);
            r0 = r1;
        }
    }
    Tensor::new(d.in_shape(), x)
}

/// Gradient of `<conv(x, w), g>` with respect to `w`.
pub fn conv_weight_grad<T: Real>(
    x: &Tensor<T>,
    g: &Tensor<T>,
    geom: ConvGeom,
    w_shape: &[usize],
) -> Result<Tensor<T>> {
    let d = ConvDims::new(x.shape(), w_shape, geom, "conv_weight_grad")?;
    if g.shape() != d.out_shape().as_slice() {
        return Err(Error::shape(
            "conv_weight_grad",
            format!(
                "gradient {:?} does not match conv output {:?}",
                g.shape(),
                d.out_shape()
            ),
        ));
    }
    let (kl, il, ol) = (d.k_len(), d.in_len(), d.out_len());
    let rows_total = d.out[0] * d.out[1];
    let chunk = d.rows_per_chunk();
    let mut dw = vec![T::zero(); d.cout * kl];
    let mut cols = vec![T::zero(); kl * chunk.min(rows_total) * d.out[2]];
    for s in 0..d.n {
        let xs = &x.data()[s * d.cin * il..(s + 1) * d.cin * il];
        let gs = &g.data()[s * d.cout * ol..(s + 1) * d.cout * ol];
        let mut r0 = 0;
        while r0 < rows_total {
            let r1 = (r0 + chunk).min(rows_total);
            let len = (r1 - r0) * d.out[2];
            im2col(&d, xs, r0, r1, &mut cols[..kl * len]);
            gemm(
                d.cout,
                len,
                kl,
                &gs[r0 * d.out[2]..],
                (ol, 1),
                &cols[..kl * len],
                (1, len),
                T::one(),
                &mut dw,
                (kl, 1),
            );
            r0 = r1;
        }
    }
    Tensor::new(w_shape.to_vec(), dw)
}

/// `op(a) · op(b)` for 2-D tensors, `op` being optional transposition.
pub fn matmul<T: Real>(a: &Tensor<T>, b: &Tensor<T>, ta: bool, tb: bool) -> Result<Tensor<T>> {
    let (&[ar, ac], &[br, bc]) = (a.shape(), b.shape()) else {
        return Err(Error::shape(
            "matmul",
            format!("expected 2-D operands, got {:?} and {:?}", a.shape(), b.shape()),
        ));
    };
    let (m, k, sa) = if ta { (ac, ar, (1, ac)) } else { (ar, ac, (ac, 1)) };
    let (k2, n, sb) = if tb { (bc, br, (1, bc)) } else { (br, bc, (bc, 1)) };
    if k != k2 {
        return Err(Error::shape(
            "matmul",
            format!("inner extents differ: {k} vs {k2}"),
        ));
    }
    let mut c = vec![T::zero(); m * n];
    gemm(m, k, n, a.data(), sa, b.data(), sb, T::zero(), &mut c, (n, 1));
    Tensor::new(vec![m, n], c)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn out_extent_matches_floor_formula() {
        let g = ConvGeom::new_3d([2, 2, 2], [1, 1, 1]);
        assert_eq!(g.out_extent([9, 64, 64], [3, 3, 3]), Some([5, 32, 32]));
        assert_eq!(ConvGeom::unit().out_extent([9, 62, 62], [1, 3, 3]), Some([9, 60, 60]));
        assert_eq!(ConvGeom::unit().out_extent([1, 2, 2], [1, 3, 3]), None);
    }

    #[test]
    fn matmul_small() {
        let a = Tensor::new(vec![2, 3], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let b = Tensor::new(vec![3, 1], vec![1.0, 0.0, -1.0]).unwrap();
        let c = matmul(&a, &b, false, false).unwrap();
        assert_eq!(c.data(), &[-2.0, -2.0]);
        let ct = matmul(&b, &a, true, true).unwrap();
        assert_eq!(ct.shape(), &[1, 2]);
        assert_eq!(ct.data(), &[-2.0, -2.0]);
    }

    #[test]
    fn im2col_chunking_is_invisible() {
        // Force a chunk smaller than the output by using a large channel count.
        let x = Tensor::<f64>::from_fn(vec![1, 3, 4, 7, 5], |i| (i as f64 * 0.37).sin());
        let w = Tensor::<f64>::from_fn(vec![2, 3, 3, 3, 3], |i| (i as f64 * 0.11).cos());
        let geom = ConvGeom::new_3d([1, 2, 1], [1, 1, 1]);
        let y = conv(&x, &w, geom).unwrap();
        let d = ConvDims::new(x.shape(), w.shape(), geom, "t").unwrap();
        let mut manual = vec![0.0; y.numel()];
        let rows = d.out[0] * d.out[1];
        let kl = d.k_len();
        for r in 0..rows {
            let mut cols = vec![0.0; kl * d.out[2]];
            im2col(&d, x.data(), r, r + 1, &mut cols);
            for o in 0..d.cout {
                for p in 0..d.out[2] {
                    let mut acc = 0.0;
                    for k in 0..kl {
                        acc += w.data()[o * kl + k] * cols[k * d.out[2] + p];
                    }
                    manual[o * d.out_len() + r * d.out[2] + p] = acc;
                }
            }
        }
        for (a, b) in y.data().iter().zip(&manual) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
