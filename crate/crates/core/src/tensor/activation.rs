use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Real, Tensor};
use crate::error::{Error, Result};

/// Smallest probability fed to the logarithm in the cross-entropy loss.
pub const PROB_FLOOR: f64 = 1e-12;

pub fn relu_forward<T: Real>(input: &Tensor<T>) -> Tensor<T> {
    let data = input.data().iter().map(|&v| v.max(T::zero())).collect();
    Tensor::new(input.shape().to_vec(), data).expect("same shape")
}

/// Passes gradient where the forward input was positive.
pub fn relu_backward<T: Real>(upstream: &Tensor<T>, input: &Tensor<T>) -> Result<Tensor<T>> {
    if upstream.shape() != input.shape() {
        return Err(Error::Shape("relu upstream/input shapes differ".into()));
    }
    let data = upstream
        .data()
        .iter()
        .zip(input.data())
        .map(|(&g, &x)| if x > T::zero() { g } else { T::zero() })
        .collect();
    Tensor::new(input.shape().to_vec(), data)
}

/// Row-wise softmax over the last axis, stabilized by max subtraction.
pub fn softmax<T: Real>(input: &Tensor<T>) -> Tensor<T> {
    let k = *input.shape().last().expect("non-empty shape");
    let mut out = Vec::with_capacity(input.len());
    for row in input.data().chunks_exact(k) {
        let max = row
            .iter()
            .map(|v| v.to_f64().unwrap())
            .fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = row.iter().map(|v| (v.to_f64().unwrap() - max).exp()).collect();
        let sum: f64 = exps.iter().sum();
        out.extend(exps.iter().map(|e| T::lit(e / sum)));
    }
    Tensor::new(input.shape().to_vec(), out).expect("same shape")
}

/// `−ln p[target]` with the probability floored at [`PROB_FLOOR`].
pub fn cross_entropy_loss<T: Real>(probs: &[T], target: usize) -> Result<f64> {
    let p = probs.get(target).ok_or_else(|| {
        Error::InvalidArgument(format!(
            "target class {target} outside 0..{}",
            probs.len()
        ))
    })?;
    Ok(-p.to_f64().unwrap().max(PROB_FLOOR).ln())
}

/// Gradient of the mean batch cross-entropy with respect to the logits:
/// `(p − onehot(target)) / N` per row.
pub fn softmax_cross_entropy_grad<T: Real>(probs: &Tensor<T>, targets: &[usize]) -> Result<Tensor<T>> {
    let (n, k) = probs.dims2()?;
    if targets.len() != n {
        return Err(Error::Shape(format!("{} targets for {n} rows", targets.len())));
    }
    let scale = T::lit(1.0 / n as f64);
    let mut g = probs.data().to_vec();
    for (row, &t) in g.chunks_exact_mut(k).zip(targets) {
        if t >= k {
            return Err(Error::InvalidArgument(format!("target class {t} outside 0..{k}")));
        }
        row[t] -= T::one();
        row.iter_mut().for_each(|v| *v *= scale);
    }
    Tensor::new(vec![n, k], g)
}

/// Survivor scale factors of one dropout application (0 for dropped units).
#[derive(Debug, Clone, PartialEq)]
pub struct DropoutMask<T> {
    pub scale: Vec<T>,
}

/// Inverted dropout; infer mode (`seed == None`) is the identity.
pub fn dropout_forward<T: Real>(
    input: &Tensor<T>,
    rate: f64,
    seed: Option<u64>,
) -> Result<(Tensor<T>, Option<DropoutMask<T>>)> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::InvalidArgument(format!("dropout rate {rate} outside [0, 1)")));
    }
    let Some(seed) = seed else {
        return Ok((input.clone(), None));
    };
    if rate == 0.0 {
        return Ok((input.clone(), None));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let keep = T::lit(1.0 / (1.0 - rate));
    let scale: Vec<T> = (0..input.len())
        .map(|_| if rng.random::<f64>() < rate { T::zero() } else { keep })
        .collect();
    let data = input.data().iter().zip(&scale).map(|(&v, &s)| v * s).collect();
    Ok((
        Tensor::new(input.shape().to_vec(), data)?,
        Some(DropoutMask { scale }),
    ))
}

pub fn dropout_backward<T: Real>(upstream: &Tensor<T>, mask: Option<&DropoutMask<T>>) -> Tensor<T> {
    match mask {
        None => upstream.clone(),
        Some(m) => {
            let data = upstream.data().iter().zip(&m.scale).map(|(&g, &s)| g * s).collect();
            Tensor::new(upstream.shape().to_vec(), data).expect("same shape")
        }
    }
}
