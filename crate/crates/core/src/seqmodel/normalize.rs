use crate::error::{invalid, Result};
use crate::ndcore::Tensor;

// Columns with smaller spread are left unscaled.
const MIN_SCALE: f64 = 1e-12;

/// Affine standardization of contexts and outcomes.
///
/// All outcome steps share one mean and scale, so a recursion that is affine
/// in past outcomes stays affine after the transform.
#[derive(Debug, Clone, PartialEq)]
pub struct Normalizer {
    pub x_mean: Vec<f64>,
    pub x_scale: Vec<f64>,
    pub y_mean: f64,
    pub y_scale: f64,
}

impl Normalizer {
    pub fn identity(dim: usize) -> Self {
        Normalizer { x_mean: vec![0.0; dim], x_scale: vec![1.0; dim], y_mean: 0.0, y_scale: 1.0 }
    }

    /// Column-wise moments of `x` and pooled moments of `outcomes`.
    pub fn fit(x: &Tensor, outcomes: &[f64]) -> Result<Self> {
        let (n, d) = (x.rows(), x.cols());
        if n == 0 || outcomes.is_empty() {
            return invalid("cannot fit a normalizer on empty data");
        }
        let mut x_mean = vec![0.0; d];
        for i in 0..n {
            for (m, v) in x_mean.iter_mut().zip(x.row_slice(i)) {
                *m += v;
            }
        }
        x_mean.iter_mut().for_each(|m| *m /= n as f64);
        let mut x_scale = vec![0.0; d];
        for i in 0..n {
            for j in 0..d {
                let c = x.get(i, j) - x_mean[j];
                x_scale[j] += c * c;
            }
        }
        for s in &mut x_scale {
            *s = fix_scale((*s / n as f64).sqrt());
        }
        let k = outcomes.len() as f64;
        let y_mean = outcomes.iter().sum::<f64>() / k;
        let y_var = outcomes.iter().map(|y| (y - y_mean) * (y - y_mean)).sum::<f64>() / k;
        Ok(Normalizer { x_mean, x_scale, y_mean, y_scale: fix_scale(y_var.sqrt()) })
    }

    pub fn dim(&self) -> usize {
        self.x_mean.len()
    }

    pub fn contexts(&self, x: &Tensor) -> Result<Tensor> {
        if x.cols() != self.dim() || x.ndim() != 2 {
            return invalid(format!(
                "context matrix {:?} does not have {} columns",
                x.shape(),
                self.dim()
            ));
        }
        let mut out = x.clone();
        let d = self.dim();
        for (k, v) in out.data_mut().iter_mut().enumerate() {
            let j = k % d;
            *v = (*v - self.x_mean[j]) / self.x_scale[j];
        }
        Ok(out)
    }

    pub fn outcome(&self, y: f64) -> f64 {
        (y - self.y_mean) / self.y_scale
    }

    pub fn outcomes(&self, y: &Tensor) -> Tensor {
        y.map(|v| self.outcome(v))
    }

    pub fn restore_outcome(&self, z: f64) -> f64 {
        z * self.y_scale + self.y_mean
    }

    /// Differences of outcomes only pick up the scale.
    pub fn restore_difference(&self, dz: f64) -> f64 {
        dz * self.y_scale
    }
}

fn fix_scale(s: f64) -> f64 {
    if s.is_finite() && s > MIN_SCALE {
        s
    } else {
        1.0
    }
}
