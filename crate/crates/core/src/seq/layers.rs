use ndarray::{Array1, Array2, Axis};
use rand::Rng;

/// `y = x Wᵀ + b` over token rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    /// `out x in`.
    pub weight: Array2<f64>,
    pub bias: Option<Array1<f64>>,
}

/// Rounds to the nearest `f32` so parameters survive a checkpoint unchanged.
pub(crate) fn f32_round(v: f64) -> f64 {
    v as f32 as f64
}

impl Linear {
    pub fn zeros(inputs: usize, outputs: usize, bias: bool) -> Self {
        Linear {
            weight: Array2::zeros((outputs, inputs)),
            bias: bias.then(|| Array1::zeros(outputs)),
        }
    }

    /// Uniform in `±1/sqrt(inputs)`, zero bias.
    pub fn random(inputs: usize, outputs: usize, bias: bool, rng: &mut impl Rng) -> Self {
        let bound = 1.0 / (inputs.max(1) as f64).sqrt();
        Linear {
            weight: Array2::from_shape_fn((outputs, inputs), |_| f32_round(rng.random_range(-bound..bound))),
            bias: bias.then(|| Array1::zeros(outputs)),
        }
    }

    pub fn inputs(&self) -> usize {
        self.weight.ncols()
    }

    pub fn outputs(&self) -> usize {
        self.weight.nrows()
    }

    pub fn forward(&self, x: &Array2<f64>) -> Array2<f64> {
        let mut y = x.dot(&self.weight.t());
        if let Some(b) = &self.bias {
            y += b;
        }
        y
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerNorm {
    pub gamma: Array1<f64>,
    pub beta: Array1<f64>,
    pub eps: f64,
}

impl LayerNorm {
    pub fn new(width: usize) -> Self {
        LayerNorm {
            gamma: Array1::ones(width),
            beta: Array1::zeros(width),
            eps: 1e-5,
        }
    }

    pub fn forward(&self, x: &Array2<f64>) -> Array2<f64> {
        let mut y = x.clone();
        for mut row in y.axis_iter_mut(Axis(0)) {
            let n = row.len() as f64;
            let mean = row.sum() / n;
            let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            let inv = 1.0 / (var + self.eps).sqrt();
            for (j, v) in row.iter_mut().enumerate() {
                *v = (*v - mean) * inv * self.gamma[j] + self.beta[j];
            }
        }
        y
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn linear_shapes_and_values() {
        let l = Linear {
            weight: array![[1.0, 2.0], [0.0, -1.0], [3.0, 0.5]],
            bias: Some(array![0.5, 0.0, -1.0]),
        };
        let y = l.forward(&array![[1.0, 1.0], [2.0, 0.0]]);
        assert_eq!(y, array![[3.5, -1.0, 2.5], [2.5, 0.0, 5.0]]);
    }

    #[test]
    fn layer_norm_statistics() {
        let y = LayerNorm::new(4).forward(&array![[1.0, 2.0, 3.0, 4.0], [0.0, 0.0, 0.0, 0.0]]);
        let row = y.row(0);
        assert!(row.sum().abs() < 1e-12);
        assert!((row.iter().map(|v| v * v).sum::<f64>() / 4.0 - 1.0).abs() < 1e-4);
        assert!(y.row(1).iter().all(|v| *v == 0.0));
    }
}
