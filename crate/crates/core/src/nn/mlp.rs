use nalgebra::{DMatrix, DVector, Vector3};
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};

/// One fully-connected layer `z = W a + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub w: DMatrix<f64>,
    pub b: DVector<f64>,
}

/// Weights and biases of a ReLU network; the last layer is purely affine.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    layers: Vec<Dense>,
}

impl MlpParams {
    pub fn from_layers(layers: Vec<Dense>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Invalid("network needs at least one layer".into()));
        }
        for (k, l) in layers.iter().enumerate() {
            if l.b.len() != l.w.nrows() {
                return Err(Error::dimension(
                    format!("layer {k} bias"),
                    l.w.nrows(),
                    l.b.len(),
                ));
            }
            if k > 0 && l.w.ncols() != layers[k - 1].w.nrows() {
                return Err(Error::dimension(
                    format!("layer {k} input width"),
                    layers[k - 1].w.nrows(),
                    l.w.ncols(),
                ));
            }
            if l.w.iter().chain(l.b.iter()).any(|x| !x.is_finite()) {
                return Err(Error::Invalid(format!(
                    "layer {k} has non-finite parameters"
                )));
            }
        }
        Ok(Self { layers })
    }

    /// All-zero parameters with the given widths `[n_in, h_1, …, n_out]`.
    pub fn zeros(widths: &[usize]) -> Result<Self> {
        if widths.len() < 2 || widths.contains(&0) {
            return Err(Error::Invalid(format!("invalid layer widths {widths:?}")));
        }
        let layers = widths
            .windows(2)
            .map(|w| Dense {
                w: DMatrix::zeros(w[1], w[0]),
                b: DVector::zeros(w[1]),
            })
            .collect();
        Ok(Self { layers })
    }

    /// He initialisation: weights ~ N(0, 2 / fan_in), biases zero.
    pub fn he_init<R: Rng>(widths: &[usize], rng: &mut R) -> Result<Self> {
        let mut p = Self::zeros(widths)?;
        for l in &mut p.layers {
            let fan_in = l.w.ncols() as f64;
            let normal = Normal::new(0.0, (2.0 / fan_in).sqrt()).expect("positive std");
            // column-major fill order is part of the reproducibility contract
            for x in l.w.iter_mut() {
                *x = normal.sample(rng);
            }
        }
        Ok(p)
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub(crate) fn layers_mut(&mut self) -> &mut [Dense] {
        &mut self.layers
    }

    pub fn widths(&self) -> Vec<usize> {
        let mut w = vec![self.layers[0].w.ncols()];
        w.extend(self.layers.iter().map(|l| l.w.nrows()));
        w
    }

    pub fn input_width(&self) -> usize {
        self.layers[0].w.ncols()
    }

    pub fn output_width(&self) -> usize {
        self.layers.last().unwrap().w.nrows()
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.w.iter().chain(l.b.iter()).all(|x| x.is_finite()))
    }

    /// Forward pass on a batch stored column-wise (n_in × B).
    pub fn forward_batch(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if x.nrows() != self.input_width() {
            return Err(Error::dimension(
                "network input",
                self.input_width(),
                x.nrows(),
            ));
        }
        let last = self.layers.len() - 1;
        let mut a = x.clone();
        for (k, l) in self.layers.iter().enumerate() {
            let mut z = &l.w * &a;
            for mut col in z.column_iter_mut() {
                col += &l.b;
            }
            if k < last {
                z.apply(|v| *v = v.max(0.0));
            }
            a = z;
        }
        Ok(a)
    }

    /// Mean over the batch of `‖NN(x) − y‖²`, and its gradient.
    ///
    /// The ReLU derivative at exactly zero is taken as zero.
    pub fn loss_and_gradient(
        &self,
        x: &DMatrix<f64>,
        y: &DMatrix<f64>,
    ) -> Result<(f64, MlpParams)> {
        let batch = x.ncols();
        if batch == 0 {
            return Err(Error::Invalid("gradient of an empty batch".into()));
        }
        if x.nrows() != self.input_width() {
            return Err(Error::dimension(
                "network input",
                self.input_width(),
                x.nrows(),
            ));
        }
        if y.nrows() != self.output_width() || y.ncols() != batch {
            return Err(Error::dimension(
                "network target",
                self.output_width(),
                y.nrows(),
            ));
        }
        let last = self.layers.len() - 1;
        // activations[k] is the input to layer k
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        activations.push(x.clone());
        for (k, l) in self.layers.iter().enumerate() {
            let mut z = &l.w * &activations[k];
            for mut col in z.column_iter_mut() {
                col += &l.b;
            }
            if k < last {
                z.apply(|v| *v = v.max(0.0));
            }
            activations.push(z);
        }
        let out = &activations[self.layers.len()];
        let diff = out - y;
        let loss = diff.norm_squared() / batch as f64;

        let mut grads = Vec::with_capacity(self.layers.len());
        let mut delta = diff * (2.0 / batch as f64);
        for k in (0..self.layers.len()).rev() {
            let gw = &delta * activations[k].transpose();
            let gb = delta.column_sum();
            if k > 0 {
                let mut back = self.layers[k].w.transpose() * &delta;
                // activations[k] = relu(z_{k-1}); positive exactly where z > 0
                back.zip_apply(&activations[k], |d, a| {
                    if a <= 0.0 {
                        *d = 0.0
                    }
                });
                delta = back;
            }
            grads.push(Dense { w: gw, b: gb });
        }
        grads.reverse();
        Ok((loss, MlpParams { layers: grads }))
    }
}

/// Single-sample forward pass.
pub fn mlp_forward(params: &MlpParams, x: &[f64]) -> Result<DVector<f64>> {
    let xm = DMatrix::from_column_slice(x.len(), 1, x);
    Ok(params.forward_batch(&xm)?.column(0).into_owned())
}

/// Gradient of the batch-mean squared error for `(input, target)` pairs.
pub fn mlp_gradient(params: &MlpParams, batch: &[(Vec<f64>, Vector3<f64>)]) -> Result<MlpParams> {
    let (x, y) = stack_batch(params, batch)?;
    Ok(params.loss_and_gradient(&x, &y)?.1)
}

/// Batch-mean squared error, the objective [`mlp_gradient`] differentiates.
pub fn mlp_loss(params: &MlpParams, batch: &[(Vec<f64>, Vector3<f64>)]) -> Result<f64> {
    let (x, y) = stack_batch(params, batch)?;
    let out = params.forward_batch(&x)?;
    Ok((out - y).norm_squared() / batch.len() as f64)
}

fn stack_batch(
    params: &MlpParams,
    batch: &[(Vec<f64>, Vector3<f64>)],
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    if batch.is_empty() {
        return Err(Error::Invalid("empty batch".into()));
    }
    let n_in = params.input_width();
    if let Some((x, _)) = batch.iter().find(|(x, _)| x.len() != n_in) {
        return Err(Error::dimension("batch input", n_in, x.len()));
    }
    if params.output_width() != 3 {
        return Err(Error::dimension("network output", 3, params.output_width()));
    }
    let x = DMatrix::from_fn(n_in, batch.len(), |r, c| batch[c].0[r]);
    let y = DMatrix::from_fn(3, batch.len(), |r, c| batch[c].1[r]);
    Ok((x, y))
}
