use super::{Real, Tensor};
use crate::error::{Error, Result};
use crate::par;

/// Fully connected layer; weights are `inputs×units`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense<T = f32> {
    pub weights: Tensor<T>,
    pub bias: Tensor<T>,
}

#[derive(Debug, Clone)]
pub struct DenseGrads<T> {
    pub input: Tensor<T>,
    pub weights: Tensor<T>,
    pub bias: Tensor<T>,
}

fn dims<T: Real>(input: &Tensor<T>, weights: &Tensor<T>) -> Result<(usize, usize, usize)> {
    let (n, d) = input.dims2()?;
    let [rows, m] = weights.shape()[..] else {
        return Err(Error::Shape(format!(
            "dense weights must be 2-d, got {:?}",
            weights.shape()
        )));
    };
    if rows != d {
        return Err(Error::Shape(format!(
            "input of length {d} does not match {rows} weight rows"
        )));
    }
    Ok((n, d, m))
}

/// `out[j] = Σ_i in[i]·W[i][j] + b[j]` for each row of an `N×D` batch.
pub fn dense_forward<T: Real>(
    input: &Tensor<T>,
    weights: &Tensor<T>,
    bias: &Tensor<T>,
) -> Result<Tensor<T>> {
    let (n, d, m) = dims(input, weights)?;
    if bias.len() != m {
        return Err(Error::Shape(format!(
            "bias of length {} for {m} units",
            bias.len()
        )));
    }
    let x = input.data();
    let w = weights.data();
    let mut out = vec![T::zero(); n * m];
    par::for_each_chunk_mut(&mut out, m, |s, acc| {
        acc.copy_from_slice(bias.data());
        for (i, &v) in x[s * d..(s + 1) * d].iter().enumerate() {
            if v == T::zero() {
                continue;
            }
            for (a, &wv) in acc.iter_mut().zip(&w[i * m..(i + 1) * m]) {
                *a += v * wv;
            }
        }
    });
    Tensor::new(vec![n, m], out)
}

pub fn dense_backward<T: Real>(
    upstream: &Tensor<T>,
    input: &Tensor<T>,
    weights: &Tensor<T>,
) -> Result<DenseGrads<T>> {
    let (n, d, m) = dims(input, weights)?;
    if upstream.shape() != [n, m] {
        return Err(Error::Shape(format!(
            "upstream {:?} does not match dense output [{n}, {m}]",
            upstream.shape()
        )));
    }
    let x = input.data();
    let w = weights.data();
    let dy = upstream.data();

    let mut dx = vec![T::zero(); n * d];
    par::for_each_chunk_mut(&mut dx, d, |s, dxs| {
        let g = &dy[s * m..(s + 1) * m];
        for (i, v) in dxs.iter_mut().enumerate() {
            let mut acc = T::zero();
            for (&gv, &wv) in g.iter().zip(&w[i * m..(i + 1) * m]) {
                acc += gv * wv;
            }
            *v = acc;
        }
    });

    // Weight rows are independent, so split the gradient by row blocks.
    let mut dw = vec![T::zero(); d * m];
    let rows_per = 64.min(d).max(1);
    par::for_each_chunk_mut(&mut dw, rows_per * m, |blk, dws| {
        let r0 = blk * rows_per;
        for s in 0..n {
            let g = &dy[s * m..(s + 1) * m];
            let xs = &x[s * d..(s + 1) * d];
            for (r, row) in dws.chunks_mut(m).enumerate() {
                let v = xs[r0 + r];
                if v == T::zero() {
                    continue;
                }
                for (a, &gv) in row.iter_mut().zip(g) {
                    *a += v * gv;
                }
            }
        }
    });

    let mut db = vec![T::zero(); m];
    for g in dy.chunks_exact(m) {
        for (a, &gv) in db.iter_mut().zip(g) {
            *a += gv;
        }
    }
    Ok(DenseGrads {
        input: Tensor::new(vec![n, d], dx)?,
        weights: Tensor::new(vec![d, m], dw)?,
        bias: Tensor::new(vec![m], db)?,
    })
}

impl<T: Real> Dense<T> {
    pub fn forward(&self, input: &Tensor<T>) -> Result<Tensor<T>> {
        dense_forward(input, &self.weights, &self.bias)
    }

    pub fn units(&self) -> usize {
        self.bias.len()
    }
}
