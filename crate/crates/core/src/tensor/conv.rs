use super::{Real, Tensor};
use crate::error::{Error, Result};
use crate::par;

/// 2-D convolution parameters with "same" padding.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv2d<T = f32> {
    /// `K×K×C_in×C_out`
    pub kernel: Tensor<T>,
    pub bias: Tensor<T>,
    pub stride: usize,
}

#[derive(Debug, Clone)]
pub struct ConvGrads<T> {
    pub input: Tensor<T>,
    pub kernel: Tensor<T>,
    pub bias: Tensor<T>,
}

/// Output length and leading pad for "same" padding along one axis.
pub fn same_padding(input: usize, kernel: usize, stride: usize) -> (usize, usize) {
    let out = input.div_ceil(stride);
    let needed = ((out - 1) * stride + kernel).saturating_sub(input);
    (out, needed / 2)
}

struct Geometry {
    n: usize,
    h: usize,
    w: usize,
    c: usize,
    k: usize,
    f: usize,
    oh: usize,
    ow: usize,
    pad_top: usize,
    pad_left: usize,
    stride: usize,
}

impl Geometry {
    fn new<T: Real>(input: &Tensor<T>, kernel: &Tensor<T>, stride: usize) -> Result<Self> {
        let (n, h, w, c) = input.dims4()?;
        let [k, k2, kc, f] = kernel.shape()[..] else {
            return Err(Error::Shape(format!(
                "kernel must be K×K×C×F, got {:?}",
                kernel.shape()
            )));
        };
        if k != k2 {
            return Err(Error::Shape(format!("non-square kernel {k}×{k2}")));
        }
        if kc != c {
            return Err(Error::Shape(format!(
                "input has {c} channels but kernel expects {kc}"
            )));
        }
        if stride == 0 {
            return Err(Error::InvalidArgument("stride must be positive".into()));
        }
        let (oh, pad_top) = same_padding(h, k, stride);
        let (ow, pad_left) = same_padding(w, k, stride);
        Ok(Self {
            n,
            h,
            w,
            c,
            k,
            f,
            oh,
            ow,
            pad_top,
            pad_left,
            stride,
        })
    }

    /// Input coordinate hit by output `o` and kernel tap `t`, if inside.
    #[inline]
    fn src(o: usize, t: usize, stride: usize, pad: usize, len: usize) -> Option<usize> {
        let p = (o * stride + t).checked_sub(pad)?;
        (p < len).then_some(p)
    }
}

/// Same-padded strided convolution of an `N×H×W×C` batch.
pub fn conv2d_forward<T: Real>(
    input: &Tensor<T>,
    kernel: &Tensor<T>,
    bias: &Tensor<T>,
    stride: usize,
) -> Result<Tensor<T>> {
    let g = Geometry::new(input, kernel, stride)?;
    if bias.len() != g.f {
        return Err(Error::Shape(format!(
            "bias has {} entries for {} filters",
            bias.len(),
            g.f
        )));
    }
    let x = input.data();
    let wk = kernel.data();
    let b = bias.data();
    let per_out = g.oh * g.ow * g.f;
    let mut out = vec![T::zero(); g.n * per_out];
    par::for_each_chunk_mut(&mut out, per_out, |s, dst| {
        let xs = &x[s * g.h * g.w * g.c..(s + 1) * g.h * g.w * g.c];
        for oy in 0..g.oh {
            for ox in 0..g.ow {
                let acc = &mut dst[(oy * g.ow + ox) * g.f..(oy * g.ow + ox + 1) * g.f];
                acc.copy_from_slice(b);
                for ky in 0..g.k {
                    let Some(iy) = Geometry::src(oy, ky, g.stride, g.pad_top, g.h) else {
                        continue;
                    };
                    for kx in 0..g.k {
                        let Some(ix) = Geometry::src(ox, kx, g.stride, g.pad_left, g.w) else {
                            continue;
                        };
                        let px = &xs[(iy * g.w + ix) * g.c..(iy * g.w + ix + 1) * g.c];
                        let taps = &wk[(ky * g.k + kx) * g.c * g.f..(ky * g.k + kx + 1) * g.c * g.f];
                        for (ci, &v) in px.iter().enumerate() {
                            if v == T::zero() {
                                continue;
                            }
                            let row = &taps[ci * g.f..(ci + 1) * g.f];
                            for (a, &wv) in acc.iter_mut().zip(row) {
                                *a += v * wv;
                            }
                        }
                    }
                }
            }
        }
    });
    Tensor::new(vec![g.n, g.oh, g.ow, g.f], out)
}

/// Gradients of a convolution with respect to its input, kernel and bias.
pub fn conv2d_backward<T: Real>(
    upstream: &Tensor<T>,
    cached_input: Option<&Tensor<T>>,
    kernel: &Tensor<T>,
    stride: usize,
) -> Result<ConvGrads<T>> {
    let input = cached_input.ok_or(Error::MissingCache(0))?;
    let g = Geometry::new(input, kernel, stride)?;
    if upstream.shape() != [g.n, g.oh, g.ow, g.f] {
        return Err(Error::Shape(format!(
            "upstream gradient {:?} does not match conv output {:?}",
            upstream.shape(),
            [g.n, g.oh, g.ow, g.f]
        )));
    }
    let x = input.data();
    let dy = upstream.data();
    let wk = kernel.data();
    let in_per = g.h * g.w * g.c;
    let out_per = g.oh * g.ow * g.f;
    let ksize = g.k * g.k * g.c * g.f;

    let mut dx = vec![T::zero(); g.n * in_per];
    par::for_each_chunk_mut(&mut dx, in_per, |s, dxs| {
        let dys = &dy[s * out_per..(s + 1) * out_per];
        for oy in 0..g.oh {
            for ox in 0..g.ow {
                let go = &dys[(oy * g.ow + ox) * g.f..(oy * g.ow + ox + 1) * g.f];
                for ky in 0..g.k {
                    let Some(iy) = Geometry::src(oy, ky, g.stride, g.pad_top, g.h) else {
                        continue;
                    };
                    for kx in 0..g.k {
                        let Some(ix) = Geometry::src(ox, kx, g.stride, g.pad_left, g.w) else {
                            continue;
                        };
                        let taps = &wk[(ky * g.k + kx) * g.c * g.f..(ky * g.k + kx + 1) * g.c * g.f];
                        let px = &mut dxs[(iy * g.w + ix) * g.c..(iy * g.w + ix + 1) * g.c];
                        for (ci, d) in px.iter_mut().enumerate() {
                            let row = &taps[ci * g.f..(ci + 1) * g.f];
                            let mut acc = T::zero();
                            for (&gv, &wv) in go.iter().zip(row) {
                                acc += gv * wv;
                            }
                            *d += acc;
                        }
                    }
                }
            }
        }
    });

    let partial = |s: usize| {
        let xs = &x[s * in_per..(s + 1) * in_per];
        let dys = &dy[s * out_per..(s + 1) * out_per];
        let mut dk = vec![T::zero(); ksize];
        let mut db = vec![T::zero(); g.f];
        for oy in 0..g.oh {
            for ox in 0..g.ow {
                let go = &dys[(oy * g.ow + ox) * g.f..(oy * g.ow + ox + 1) * g.f];
                for (a, &gv) in db.iter_mut().zip(go) {
                    *a += gv;
                }
                for ky in 0..g.k {
                    let Some(iy) = Geometry::src(oy, ky, g.stride, g.pad_top, g.h) else {
                        continue;
                    };
                    for kx in 0..g.k {
                        let Some(ix) = Geometry::src(ox, kx, g.stride, g.pad_left, g.w) else {
                            continue;
                        };
                        let px = &xs[(iy * g.w + ix) * g.c..(iy * g.w + ix + 1) * g.c];
                        let base = (ky * g.k + kx) * g.c * g.f;
                        for (ci, &v) in px.iter().enumerate() {
                            if v == T::zero() {
                                continue;
                            }
                            let row = &mut dk[base + ci * g.f..base + (ci + 1) * g.f];
                            for (a, &gv) in row.iter_mut().zip(go) {
                                *a += v * gv;
                            }
                        }
                    }
                }
            }
        }
        (dk, db)
    };
    let (dk, db) = par::map_reduce(g.n, partial, |(mut ka, mut ba), (kb, bb)| {
        ka.iter_mut().zip(&kb).for_each(|(a, &b)| *a += b);
        ba.iter_mut().zip(&bb).for_each(|(a, &b)| *a += b);
        (ka, ba)
    })
    .ok_or_else(|| Error::Empty("convolution batch".into()))?;

    Ok(ConvGrads {
        input: Tensor::new(input.shape().to_vec(), dx)?,
        kernel: Tensor::new(kernel.shape().to_vec(), dk)?,
        bias: Tensor::new(vec![g.f], db)?,
    })
}

impl<T: Real> Conv2d<T> {
    pub fn forward(&self, input: &Tensor<T>) -> Result<Tensor<T>> {
        conv2d_forward(input, &self.kernel, &self.bias, self.stride)
    }

    pub fn filters(&self) -> usize {
        self.bias.len()
    }
}
