use super::{Real, Tensor};
use crate::error::{Error, Result};

pub const BN_EPSILON: f64 = 1e-3;
pub const BN_MOMENTUM: f64 = 0.99;

/// Per-channel batch normalization over the trailing (channel) axis.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm<T = f32> {
    pub gamma: Tensor<T>,
    pub beta: Tensor<T>,
    pub running_mean: Tensor<T>,
    pub running_var: Tensor<T>,
}

/// What a train-mode forward pass remembers for backward.
#[derive(Debug, Clone)]
pub struct BatchNormCache<T> {
    pub x_hat: Vec<T>,
    pub inv_std: Vec<T>,
    pub mean: Vec<T>,
    pub var: Vec<T>,
}

impl<T: Real> BatchNorm<T> {
    pub fn new(channels: usize) -> Self {
        Self {
            gamma: Tensor::filled(vec![channels], T::one()),
            beta: Tensor::zeros(vec![channels]),
            running_mean: Tensor::zeros(vec![channels]),
            running_var: Tensor::filled(vec![channels], T::one()),
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.len()
    }

    fn check(&self, input: &Tensor<T>) -> Result<usize> {
        let c = *input.shape().last().unwrap_or(&0);
        if c != self.channels() || self.beta.len() != c {
            return Err(Error::Shape(format!(
                "batch norm over {} channels got input {:?}",
                self.channels(),
                input.shape()
            )));
        }
        if input.is_empty() {
            return Err(Error::Empty("batch norm over a zero-size batch".into()));
        }
        Ok(c)
    }

    /// Normalizes with the batch's own statistics.
    pub fn forward_train(&self, input: &Tensor<T>) -> Result<(Tensor<T>, BatchNormCache<T>)> {
        let c = self.check(input)?;
        let x = input.data();
        let m = (x.len() / c) as f64;
        let mut sum = vec![0f64; c];
        for row in x.chunks_exact(c) {
            for (s, &v) in sum.iter_mut().zip(row) {
                *s += v.to_f64().unwrap();
            }
        }
        let mean: Vec<f64> = sum.iter().map(|s| s / m).collect();
        let mut sq = vec![0f64; c];
        for row in x.chunks_exact(c) {
            for ((s, &v), mu) in sq.iter_mut().zip(row).zip(&mean) {
                let d = v.to_f64().unwrap() - mu;
                *s += d * d;
            }
        }
        let var: Vec<f64> = sq.iter().map(|s| s / m).collect();
        let inv_std: Vec<T> = var.iter().map(|v| T::lit(1.0 / (v + BN_EPSILON).sqrt())).collect();
        let mean_t: Vec<T> = mean.iter().map(|&v| T::lit(v)).collect();

        let gamma = self.gamma.data();
        let beta = self.beta.data();
        let mut x_hat = Vec::with_capacity(x.len());
        let mut y = Vec::with_capacity(x.len());
        for row in x.chunks_exact(c) {
            for ch in 0..c {
                let xh = (row[ch] - mean_t[ch]) * inv_std[ch];
                x_hat.push(xh);
                y.push(gamma[ch] * xh + beta[ch]);
            }
        }
        let cache = BatchNormCache {
            x_hat,
            inv_std,
            mean: mean_t,
            var: var.iter().map(|&v| T::lit(v)).collect(),
        };
        Ok((Tensor::new(input.shape().to_vec(), y)?, cache))
    }

    /// Normalizes with the running statistics; never mutates state.
    pub fn forward_infer(&self, input: &Tensor<T>) -> Result<Tensor<T>> {
        let c = self.check(input)?;
        let (scale, shift) = self.infer_affine();
        let y = input
            .data()
            .chunks_exact(c)
            .flat_map(|row| {
                row.iter()
                    .zip(scale.iter().zip(&shift))
                    .map(|(&v, (&s, &t))| v * s + t)
            })
            .collect();
        Tensor::new(input.shape().to_vec(), y)
    }

    /// Folds running stats and the affine transform into `x * scale + shift`.
    fn infer_affine(&self) -> (Vec<T>, Vec<T>) {
        let eps = T::lit(BN_EPSILON);
        let scale: Vec<T> = self
            .gamma
            .data()
            .iter()
            .zip(self.running_var.data())
            .map(|(&g, &v)| g / (v + eps).sqrt())
            .collect();
        let shift = self
            .beta
            .data()
            .iter()
            .zip(self.running_mean.data())
            .zip(&scale)
            .map(|((&b, &m), &s)| b - m * s)
            .collect();
        (scale, shift)
    }

    /// Exponential moving average of the batch statistics.
    pub fn update_running(&mut self, cache: &BatchNormCache<T>) {
        let mom = T::lit(BN_MOMENTUM);
        let one = T::one();
        for (r, &m) in self.running_mean.data_mut().iter_mut().zip(&cache.mean) {
            *r = mom * *r + (one - mom) * m;
        }
        for (r, &v) in self.running_var.data_mut().iter_mut().zip(&cache.var) {
            *r = mom * *r + (one - mom) * v;
        }
    }

    /// Backward through a train-mode pass: `(dx, dgamma, dbeta)`.
    pub fn backward_train(
        &self,
        upstream: &Tensor<T>,
        cache: &BatchNormCache<T>,
    ) -> Result<(Tensor<T>, Vec<T>, Vec<T>)> {
        let c = self.check(upstream)?;
        if cache.x_hat.len() != upstream.len() {
            return Err(Error::Shape("batch norm cache does not match upstream".into()));
        }
        let dy = upstream.data();
        let mut dgamma = vec![0f64; c];
        let mut dbeta = vec![0f64; c];
        for (row, xh) in dy.chunks_exact(c).zip(cache.x_hat.chunks_exact(c)) {
            for ch in 0..c {
                let g = row[ch].to_f64().unwrap();
                dbeta[ch] += g;
                dgamma[ch] += g * xh[ch].to_f64().unwrap();
            }
        }
        let m = (dy.len() / c) as f64;
        let gamma = self.gamma.data();
        let coef: Vec<T> = (0..c)
            .map(|ch| gamma[ch] * cache.inv_std[ch] / T::lit(m))
            .collect();
        let mdb: Vec<T> = dbeta.iter().map(|&v| T::lit(v)).collect();
        let mdg: Vec<T> = dgamma.iter().map(|&v| T::lit(v)).collect();
        let m_t = T::lit(m);
        let mut dx = Vec::with_capacity(dy.len());
        for (row, xh) in dy.chunks_exact(c).zip(cache.x_hat.chunks_exact(c)) {
            for ch in 0..c {
                dx.push(coef[ch] * (m_t * row[ch] - mdb[ch] - xh[ch] * mdg[ch]));
            }
        }
        Ok((Tensor::new(upstream.shape().to_vec(), dx)?, mdg, mdb))
    }

    /// Backward through an infer-mode pass, where the statistics are constants.
    pub fn backward_infer(
        &self,
        upstream: &Tensor<T>,
        input: &Tensor<T>,
    ) -> Result<(Tensor<T>, Vec<T>, Vec<T>)> {
        let c = self.check(upstream)?;
        let eps = T::lit(BN_EPSILON);
        let inv_std: Vec<T> = self
            .running_var
            .data()
            .iter()
            .map(|&v| T::one() / (v + eps).sqrt())
            .collect();
        let mean = self.running_mean.data();
        let gamma = self.gamma.data();
        let mut dgamma = vec![T::zero(); c];
        let mut dbeta = vec![T::zero(); c];
        let mut dx = Vec::with_capacity(upstream.len());
        for (row, xr) in upstream.data().chunks_exact(c).zip(input.data().chunks_exact(c)) {
            for ch in 0..c {
                dbeta[ch] += row[ch];
                dgamma[ch] += row[ch] * (xr[ch] - mean[ch]) * inv_std[ch];
                dx.push(row[ch] * gamma[ch] * inv_std[ch]);
            }
        }
        Ok((Tensor::new(upstream.shape().to_vec(), dx)?, dgamma, dbeta))
    }
}
