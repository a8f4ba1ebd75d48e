//! Bias-free fully connected network: ReLU on hidden layers, identity on the
//! output layer. Shared by the backbone, the projector and the predictor.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkit::DenseMatrix;
use crate::rng::{RngSeed, SeededRng, Stream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    weights: Vec<DenseMatrix>,
}

/// Intermediate values of a forward pass, consumed by [`Mlp::backward`].
#[derive(Debug, Clone)]
pub struct Trace {
    /// Input of every layer (index 0 is the network input).
    inputs: Vec<DenseMatrix>,
    /// Pre-activation output of every layer.
    pre: Vec<DenseMatrix>,
}

impl Trace {
    pub fn output(&self) -> &DenseMatrix {
        self.pre.last().expect("non-empty network")
    }
}

#[derive(Debug, Clone)]
pub struct Backward {
    pub weight_grads: Vec<DenseMatrix>,
    pub input_grad: DenseMatrix,
}

impl Mlp {
    /// He-normal initialization (`std = √(2 / fan_in)`), layers drawn in order
    /// from the init stream of `seed`.
    pub fn new(widths: &[usize], seed: RngSeed) -> Result<Self> {
        if widths.len() < 2 || widths.contains(&0) {
            return Err(Error::Parameter(format!(
                "network needs at least two nonzero widths, got {widths:?}"
            )));
        }
        let mut rng = SeededRng::new(seed, Stream::Init);
        let weights = widths
            .windows(2)
            .map(|w| {
                let std = (2.0 / w[0] as f64).sqrt();
                let data = (0..w[0] * w[1]).map(|_| std * rng.normal()).collect();
                DenseMatrix::new(w[0], w[1], data).expect("sized")
            })
            .collect();
        Ok(Self { weights })
    }

    pub fn from_weights(weights: Vec<DenseMatrix>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::Parameter("network needs at least one layer".into()));
        }
        for (i, pair) in weights.windows(2).enumerate() {
            if pair[0].cols() != pair[1].rows() {
                return Err(Error::shape(
                    "Mlp::from_weights",
                    format!("layer {i} out {}", pair[0].cols()),
                    format!("layer {} in {}", i + 1, pair[1].rows()),
                ));
            }
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::Parameter("network weights must be finite".into()));
        }
        Ok(Self { weights })
    }

    pub fn widths(&self) -> Vec<usize> {
        let mut w = vec![self.weights[0].rows()];
        w.extend(self.weights.iter().map(DenseMatrix::cols));
        w
    }

    pub fn input_dim(&self) -> usize {
        self.weights[0].rows()
    }

    pub fn output_dim(&self) -> usize {
        self.weights.last().expect("non-empty").cols()
    }

    pub fn weights(&self) -> &[DenseMatrix] {
        &self.weights
    }

    pub(crate) fn weights_mut(&mut self) -> &mut [DenseMatrix] {
        &mut self.weights
    }

    pub fn forward(&self, x: &DenseMatrix) -> Result<DenseMatrix> {
        Ok(self.forward_trace(x)?.pre.pop().expect("non-empty"))
    }

    pub fn forward_trace(&self, x: &DenseMatrix) -> Result<Trace> {
        if x.cols() != self.input_dim() {
            return Err(Error::shape(
                "forward",
                format!("input with {} columns", x.cols()),
                format!("network input width {}", self.input_dim()),
            ));
        }
        let last = self.weights.len() - 1;
        let mut inputs = Vec::with_capacity(self.weights.len());
        let mut pre = Vec::with_capacity(self.weights.len());
        let mut current = x.clone();
        for (i, w) in self.weights.iter().enumerate() {
            let z = current.matmul(w)?;
            inputs.push(current);
            current = if i < last { z.map(|v| v.max(0.0)) } else { z.clone() };
            pre.push(z);
        }
        Ok(Trace { inputs, pre })
    }

    /// Gradients of a scalar loss given `∂L/∂output`.
    pub fn backward(&self, trace: &Trace, upstream: &DenseMatrix) -> Result<Backward> {
        let out = trace.output();
        if upstream.shape() != out.shape() {
            return Err(Error::shape(
                "backward",
                format!("upstream {}x{}", upstream.rows(), upstream.cols()),
                format!("output {}x{}", out.rows(), out.cols()),
            ));
        }
        let n_layers = self.weights.len();
        let mut grads = vec![DenseMatrix::zeros(0, 0); n_layers];
        let mut delta = upstream.clone();
        for i in (0..n_layers).rev() {
            if i < n_layers - 1 {
                // ReLU derivative, taken as 0 at the kink.
                for (d, z) in delta.data_mut().iter_mut().zip(trace.pre[i].data()) {
                    if *z <= 0.0 {
                        *d = 0.0;
                    }
                }
            }
            grads[i] = trace.inputs[i].t_matmul(&delta)?;
            delta = delta.matmul_t(&self.weights[i])?;
        }
        Ok(Backward {
            weight_grads: grads,
            input_grad: delta,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkit::gaussian_matrix;

    #[test]
    fn widths_round_trip() {
        let net = Mlp::new(&[4, 5, 3], RngSeed(1)).unwrap();
        assert_eq!(net.widths(), vec![4, 5, 3]);
        assert!(Mlp::new(&[4], RngSeed(1)).is_err());
        let bad = Mlp::from_weights(vec![DenseMatrix::zeros(2, 3), DenseMatrix::zeros(4, 1)]);
        assert_eq!(bad.unwrap_err().kind(), "shape");
    }

    #[test]
    fn input_gradient_matches_finite_differences() {
        let net = Mlp::new(&[3, 6, 2], RngSeed(4)).unwrap();
        let x = gaussian_matrix(2, 3, 1.0, RngSeed(5)).unwrap();
        let up = gaussian_matrix(2, 2, 1.0, RngSeed(6)).unwrap();
        let loss = |x: &DenseMatrix| -> f64 {
            let y = net.forward(x).unwrap();
            y.data().iter().zip(up.data()).map(|(a, b)| a * b).sum()
        };
        let trace = net.forward_trace(&x).unwrap();
        let g = net.backward(&trace, &up).unwrap().input_grad;
        let h = 1e-6;
        for k in 0..x.data().len() {
            let mut p = x.clone();
            p.data_mut()[k] += h;
            let mut m = x.clone();
            m.data_mut()[k] -= h;
            let fd = (loss(&p) - loss(&m)) / (2.0 * h);
            assert!((fd - g.data()[k]).abs() <= 1e-6 * (1.0 + fd.abs()));
        }
    }
}
