//! Three-layer feed-forward scorer: `2E -> hidden -> hidden -> E`, SiLU after
//! each hidden layer, linear output. Outputs are predicted next-use distances.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;

use super::MlError;

pub const DEFAULT_HIDDEN: usize = 128;

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn silu(x: f64) -> f64 {
    x * sigmoid(x)
}

fn silu_grad(x: f64) -> f64 {
    let s = sigmoid(x);
    s * (1.0 + x * (1.0 - s))
}

/// Fully connected layer; `weight` is `out x in`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Dense {
    fn zeros(inputs: usize, outputs: usize) -> Self {
        Self { weight: Array2::zeros((outputs, inputs)), bias: Array1::zeros(outputs) }
    }

    /// Uniform in `±1/sqrt(inputs)` for weights and biases.
    fn init<R: Rng>(inputs: usize, outputs: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (inputs as f64).sqrt();
        let mut d = Self::zeros(inputs, outputs);
        d.weight.iter_mut().for_each(|w| *w = rng.random_range(-bound..bound));
        d.bias.iter_mut().for_each(|b| *b = rng.random_range(-bound..bound));
        d
    }

    fn apply(&self, x: &ArrayView2<f64>) -> Array2<f64> {
        x.dot(&self.weight.t()) + &self.bias
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvictionNet {
    num_experts: usize,
    hidden: usize,
    pub layers: [Dense; 3],
}

/// Gradients with the same layout as [`EvictionNet::layers`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: [Dense; 3],
}

struct Activations {
    z1: Array2<f64>,
    a1: Array2<f64>,
    z2: Array2<f64>,
    a2: Array2<f64>,
    out: Array2<f64>,
}

impl EvictionNet {
    pub fn zeros(num_experts: usize, hidden: usize) -> Self {
        Self {
            num_experts,
            hidden,
            layers: [
                Dense::zeros(2 * num_experts, hidden),
                Dense::zeros(hidden, hidden),
                Dense::zeros(hidden, num_experts),
            ],
        }
    }

    pub fn init<R: Rng>(num_experts: usize, hidden: usize, rng: &mut R) -> Self {
        Self {
            num_experts,
            hidden,
            layers: [
                Dense::init(2 * num_experts, hidden, rng),
                Dense::init(hidden, hidden, rng),
                Dense::init(hidden, num_experts, rng),
            ],
        }
    }

    pub fn num_experts(&self) -> usize {
        self.num_experts
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn input_len(&self) -> usize {
        2 * self.num_experts
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    /// Parameter arrays in storage order: `w1, b1, w2, b2, w3, b3`, row-major.
    pub fn param_slices(&self) -> Vec<&[f64]> {
        self.layers
            .iter()
            .flat_map(|l| [l.weight.as_slice().expect("standard layout"), l.bias.as_slice().expect("contiguous")])
            .collect()
    }

    pub fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers
            .iter_mut()
            .flat_map(|l| {
                [l.weight.as_slice_mut().expect("standard layout"), l.bias.as_slice_mut().expect("contiguous")]
            })
            .collect()
    }

    pub fn is_finite(&self) -> bool {
        self.param_slices().iter().all(|s| s.iter().all(|x| x.is_finite()))
    }

    fn check_input(&self, len: usize) -> Result<(), MlError> {
        if len != self.input_len() {
            return Err(MlError::DimensionMismatch { expected: self.input_len(), found: len });
        }
        Ok(())
    }

    /// Predicted distance for each expert.
    pub fn score(&self, features: &[f64]) -> Result<Vec<f64>, MlError> {
        self.check_input(features.len())?;
        let x = ArrayView2::from_shape((1, features.len()), features).expect("row vector");
        Ok(self.forward_batch(&x)?.into_raw_vec_and_offset().0)
    }

    pub fn forward_batch(&self, x: &ArrayView2<f64>) -> Result<Array2<f64>, MlError> {
        self.check_input(x.ncols())?;
        Ok(self.forward(x).out)
    }

    fn forward(&self, x: &ArrayView2<f64>) -> Activations {
        let [l1, l2, l3] = &self.layers;
        let z1 = l1.apply(x);
        let a1 = z1.mapv(silu);
        let z2 = l2.apply(&a1.view());
        let a2 = z2.mapv(silu);
        let out = l3.apply(&a2.view());
        Activations { z1, a1, z2, a2, out }
    }

    /// Mean squared error over positions where `mask` is 1. Zero when nothing is masked in.
    pub fn masked_mse(
        &self,
        x: &ArrayView2<f64>,
        targets: &ArrayView2<f64>,
        mask: &ArrayView2<f64>,
    ) -> Result<f64, MlError> {
        let out = self.forward_batch(x)?;
        Ok(masked_mse(&out.view(), targets, mask).0)
    }

    /// Masked MSE and its gradient with respect to every parameter.
    pub fn loss_and_gradients(
        &self,
        x: &ArrayView2<f64>,
        targets: &ArrayView2<f64>,
        mask: &ArrayView2<f64>,
    ) -> Result<(f64, Gradients), MlError> {
        self.check_input(x.ncols())?;
        let act = self.forward(x);
        let (loss, count) = masked_mse(&act.out.view(), targets, mask);
        let scale = if count > 0.0 { 2.0 / count } else { 0.0 };
        let d_out = (&act.out - targets) * mask * scale;

        let [_, l2, l3] = &self.layers;
        let g3 = Dense { weight: d_out.t().dot(&act.a2), bias: d_out.sum_axis(Axis(0)) };
        let mut d_z2 = d_out.dot(&l3.weight);
        d_z2.zip_mut_with(&act.z2, |d, &z| *d *= silu_grad(z));
        let g2 = Dense { weight: d_z2.t().dot(&act.a1), bias: d_z2.sum_axis(Axis(0)) };
        let mut d_z1 = d_z2.dot(&l2.weight);
        d_z1.zip_mut_with(&act.z1, |d, &z| *d *= silu_grad(z));
        let g1 = Dense { weight: d_z1.t().dot(x), bias: d_z1.sum_axis(Axis(0)) };
        Ok((loss, Gradients { layers: [g1, g2, g3] }))
    }
}

impl Gradients {
    pub fn slices(&self) -> Vec<&[f64]> {
        self.layers
            .iter()
            .flat_map(|l| [l.weight.as_slice().expect("standard layout"), l.bias.as_slice().expect("contiguous")])
            .collect()
    }
}

/// Returns `(loss, masked count)`.
fn masked_mse(out: &ArrayView2<f64>, targets: &ArrayView2<f64>, mask: &ArrayView2<f64>) -> (f64, f64) {
    let count = mask.sum();
    if count == 0.0 {
        return (0.0, 0.0);
    }
    let mut sum = 0.0;
    ndarray::Zip::from(out).and(targets).and(mask).for_each(|&o, &t, &m| {
        let d = o - t;
        sum += m * d * d;
    });
    (sum / count, count)
}
