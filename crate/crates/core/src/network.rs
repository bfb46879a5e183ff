//! Fully connected transformation model with manual reverse-mode gradients
//! and an Adam optimizer.
//!
//! Hidden layers use ReLU. The output layer is squashed by a sigmoid and
//! mapped affinely onto the decision box, so every output lies strictly
//! inside (lb, ub).

use ndarray::{Array1, Array2, ArrayView1, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

// Keeps sigmoid outputs away from exactly 0 or 1.
const SQUASH_MARGIN: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
}

/// Weights stored input-major: `weights[[i, o]]` connects input i to output o.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Layer {
    fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Layer {
            weights: Array2::zeros((fan_in, fan_out)),
            bias: Array1::zeros(fan_out),
        }
    }

    fn is_finite(&self) -> bool {
        self.weights.iter().chain(self.bias.iter()).all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkParams {
    layer_sizes: Vec<usize>,
    layers: Vec<Layer>,
    activation: Activation,
}

/// Per-layer parameter gradients, shaped like [`NetworkParams::layers`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Layer>,
}

impl Gradients {
    pub fn scale(&mut self, factor: f64) {
        for layer in &mut self.layers {
            layer.weights *= factor;
            layer.bias *= factor;
        }
    }

    /// All entries flattened in layer order, weights before biases.
    pub fn flatten(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(l.bias.iter()).copied())
            .collect()
    }
}

/// Intermediate values of one batch forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// Input to each layer (the latent batch first).
    inputs: Vec<Array2<f64>>,
    /// Hidden pre-activations, one per hidden layer.
    hidden_pre: Vec<Array2<f64>>,
    /// Sigmoid outputs of the final layer.
    squashed: Array2<f64>,
    span: Array1<f64>,
}

impl ForwardCache {
    pub fn batch_size(&self) -> usize {
        self.squashed.nrows()
    }
}

fn sigmoid(z: f64) -> f64 {
    let s = if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    };
    s.clamp(SQUASH_MARGIN, 1.0 - SQUASH_MARGIN)
}

/// Weights uniform in ±1/√fan_in, biases zero.
pub fn init_network(layer_sizes: &[usize], seed: u64) -> Result<NetworkParams> {
    if layer_sizes.len() < 2 || layer_sizes.contains(&0) {
        return Err(Error::InvalidArgument(format!(
            "need at least two positive layer sizes, got {layer_sizes:?}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let layers = layer_sizes
        .windows(2)
        .map(|w| {
            let (fan_in, fan_out) = (w[0], w[1]);
            let bound = 1.0 / (fan_in as f64).sqrt();
            let mut layer = Layer::zeros(fan_in, fan_out);
            layer
                .weights
                .mapv_inplace(|_| rng.random_range(-bound..=bound));
            layer
        })
        .collect();
    Ok(NetworkParams {
        layer_sizes: layer_sizes.to_vec(),
        layers,
        activation: Activation::Relu,
    })
}

impl NetworkParams {
    /// A network with every parameter zero.
    pub fn zeros(layer_sizes: &[usize]) -> Result<Self> {
        let mut net = init_network(layer_sizes, 0)?;
        for layer in &mut net.layers {
            layer.weights.fill(0.0);
        }
        Ok(net)
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.layers.iter().all(Layer::is_finite)
    }

    fn check_box(&self, lower: &[f64], upper: &[f64]) -> Result<Array1<f64>> {
        let d = self.output_dim();
        for b in [lower, upper] {
            if b.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    found: b.len(),
                });
            }
        }
        Ok(lower.iter().zip(upper).map(|(l, u)| u - l).collect())
    }

    /// Maps one latent vector into the box.
    pub fn forward(&self, v: &[f64], lower: &[f64], upper: &[f64]) -> Result<Vec<f64>> {
        let batch = Array2::from_shape_vec((1, v.len()), v.to_vec())
            .map_err(|e| Error::InvalidArgument(e.to_string()))?;
        let (x, _) = self.forward_batch(&batch, lower, upper)?;
        Ok(x.row(0).to_vec())
    }

    /// Maps a batch (one latent vector per row) into the box, keeping the
    /// intermediates needed by [`NetworkParams::backward`].
    pub fn forward_batch(
        &self,
        v: &Array2<f64>,
        lower: &[f64],
        upper: &[f64],
    ) -> Result<(Array2<f64>, ForwardCache)> {
        if v.ncols() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                found: v.ncols(),
            });
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidArgument("latent input is not finite".into()));
        }
        let span = self.check_box(lower, upper)?;
        let n_layers = self.layers.len();
        let mut inputs = Vec::with_capacity(n_layers);
        let mut hidden_pre = Vec::with_capacity(n_layers - 1);
        let mut a = v.clone();
        for layer in &self.layers[..n_layers - 1] {
            let z = a.dot(&layer.weights) + &layer.bias;
            inputs.push(a);
            a = z.mapv(|t| t.max(0.0));
            hidden_pre.push(z);
        }
        let last = &self.layers[n_layers - 1];
        let z = a.dot(&last.weights) + &last.bias;
        inputs.push(a);
        let squashed = z.mapv(sigmoid);
        let lower_row = ArrayView1::from(lower);
        let x = &squashed * &span + &lower_row;
        Ok((
            x,
            ForwardCache {
                inputs,
                hidden_pre,
                squashed,
                span,
            },
        ))
    }

    /// Accumulates ∂L/∂θ over the batch given `upstream` = ∂L/∂x (one row per
    /// sample). ReLU uses subgradient 0 at 0.
    pub fn backward(&self, cache: &ForwardCache, upstream: &Array2<f64>) -> Result<Gradients> {
        let n_layers = self.layers.len();
        if cache.inputs.len() != n_layers
            || upstream.dim() != cache.squashed.dim()
            || cache.inputs[0].ncols() != self.input_dim()
        {
            return Err(Error::DimensionMismatch {
                expected: cache.squashed.ncols(),
                found: upstream.ncols(),
            });
        }
        let mut grads: Vec<Layer> = Vec::with_capacity(n_layers);
        // Through x = lb + span * sigmoid(z).
        let mut delta = upstream * &cache.span * &cache.squashed.mapv(|s| s * (1.0 - s));
        for l in (0..n_layers).rev() {
            let input = &cache.inputs[l];
            grads.push(Layer {
                weights: input.t().dot(&delta),
                bias: delta.sum_axis(Axis(0)),
            });
            if l > 0 {
                let mut back = delta.dot(&self.layers[l].weights.t());
                back.zip_mut_with(&cache.hidden_pre[l - 1], |g, &z| {
                    if z <= 0.0 {
                        *g = 0.0;
                    }
                });
                delta = back;
            }
        }
        grads.reverse();
        Ok(Gradients { layers: grads })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub config: AdamConfig,
    pub step: u64,
    first_moment: Vec<Layer>,
    second_moment: Vec<Layer>,
}

impl AdamState {
    pub fn new(params: &NetworkParams, config: AdamConfig) -> Self {
        let zeros: Vec<Layer> = params
            .layers
            .iter()
            .map(|l| Layer::zeros(l.weights.nrows(), l.weights.ncols()))
            .collect();
        AdamState {
            config,
            step: 0,
            first_moment: zeros.clone(),
            second_moment: zeros,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.first_moment
            .iter()
            .chain(&self.second_moment)
            .all(Layer::is_finite)
    }
}

/// One bias-corrected Adam update, in place.
pub fn adam_step(params: &mut NetworkParams, grads: &Gradients, state: &mut AdamState) -> Result<()> {
    if grads.layers.len() != params.layers.len() {
        return Err(Error::DimensionMismatch {
            expected: params.layers.len(),
            found: grads.layers.len(),
        });
    }
    for (i, (g, p)) in grads.layers.iter().zip(&params.layers).enumerate() {
        if g.weights.dim() != p.weights.dim() || g.bias.len() != p.bias.len() {
            return Err(Error::DimensionMismatch {
                expected: p.weights.len() + p.bias.len(),
                found: g.weights.len() + g.bias.len(),
            });
        }
        if !g.is_finite() {
            return Err(Error::NonFiniteGradient { layer: i });
        }
    }
    state.step += 1;
    let AdamConfig {
        learning_rate,
        beta1,
        beta2,
        epsilon,
    } = state.config;
    let t = state.step as i32;
    let c1 = 1.0 - beta1.powi(t);
    let c2 = 1.0 - beta2.powi(t);
    let update = |theta: &mut f64, g: f64, m: &mut f64, v: &mut f64| {
        *m = beta1 * *m + (1.0 - beta1) * g;
        *v = beta2 * *v + (1.0 - beta2) * g * g;
        let m_hat = *m / c1;
        let v_hat = *v / c2;
        *theta -= learning_rate * m_hat / (v_hat.sqrt() + epsilon);
    };
    for (((p, g), m), v) in params
        .layers
        .iter_mut()
        .zip(&grads.layers)
        .zip(&mut state.first_moment)
        .zip(&mut state.second_moment)
    {
        ndarray::Zip::from(&mut p.weights)
            .and(&g.weights)
            .and(&mut m.weights)
            .and(&mut v.weights)
            .for_each(|theta, &gi, mi, vi| update(theta, gi, mi, vi));
        ndarray::Zip::from(&mut p.bias)
            .and(&g.bias)
            .and(&mut m.bias)
            .and(&mut v.bias)
            .for_each(|theta, &gi, mi, vi| update(theta, gi, mi, vi));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, StandardNormal};

    fn random_batch(rng: &mut ChaCha8Rng, n: usize, k: usize) -> Array2<f64> {
        Array2::from_shape_fn((n, k), |_| StandardNormal.sample(rng))
    }

    #[test]
    fn init_is_deterministic_and_bounded() {
        let a = init_network(&[2, 256, 256, 30], 5).unwrap();
        let b = init_network(&[2, 256, 256, 30], 5).unwrap();
        assert_eq!(a, b);
        for layer in a.layers() {
            assert!(layer.bias.iter().all(|&b| b == 0.0));
            let bound = 1.0 / (layer.weights.nrows() as f64).sqrt();
            assert!(layer.weights.iter().all(|w| w.abs() <= bound));
        }
        assert!(init_network(&[3], 0).is_err());
        assert!(init_network(&[3, 0, 2], 0).is_err());
    }

    #[test]
    fn zero_network_maps_to_center() {
        let net = NetworkParams::zeros(&[3, 8, 2]).unwrap();
        let x = net.forward(&[0.3, -2.0, 9.0], &[0.0, -4.0], &[1.0, 2.0]).unwrap();
        assert_eq!(x, vec![0.5, -1.0]);
    }

    #[test]
    fn outputs_strictly_inside_box() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut net = init_network(&[4, 16, 3], 2).unwrap();
        // Large weights saturate the sigmoid.
        for layer in net.layers_mut() {
            layer.weights *= 100.0;
        }
        let v = random_batch(&mut rng, 64, 4) * 50.0;
        let (lo, hi) = ([0.0, 55.0, 1000.0], [1.0, 80.0, 3000.0]);
        let (x, _) = net.forward_batch(&v, &lo, &hi).unwrap();
        for row in x.rows() {
            for j in 0..3 {
                assert!(row[j] > lo[j] && row[j] < hi[j], "{row}");
            }
        }
    }

    #[test]
    fn batch_forward_matches_single() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let net = init_network(&[5, 32, 32, 4], 9).unwrap();
        let v = random_batch(&mut rng, 10, 5);
        let (lo, hi) = ([0.0; 4], [1.0; 4]);
        let (x, _) = net.forward_batch(&v, &lo, &hi).unwrap();
        for (i, row) in v.rows().into_iter().enumerate() {
            let single = net.forward(&row.to_vec(), &lo, &hi).unwrap();
            for j in 0..4 {
                assert!((single[j] - x[[i, j]]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn forward_rejects_bad_input() {
        let net = init_network(&[2, 4, 1], 0).unwrap();
        assert!(net.forward(&[f64::NAN, 0.0], &[0.0], &[1.0]).is_err());
        assert!(net.forward(&[0.0], &[0.0], &[1.0]).is_err());
    }

    fn weighted_output_loss(net: &NetworkParams, v: &Array2<f64>, w: &Array2<f64>) -> f64 {
        let (x, _) = net.forward_batch(v, &[0.0, -1.0], &[1.0, 3.0]).unwrap();
        (&x * w).sum()
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for probe in 0..5 {
            let net = init_network(&[3, 7, 2], 100 + probe).unwrap();
            let v = random_batch(&mut rng, 4, 3);
            let w = random_batch(&mut rng, 4, 2);
            let (_, cache) = net.forward_batch(&v, &[0.0, -1.0], &[1.0, 3.0]).unwrap();
            let analytic = net.backward(&cache, &w).unwrap().flatten();

            let h = 1e-6;
            let mut numeric = Vec::with_capacity(analytic.len());
            for l in 0..net.layers().len() {
                let (rows, cols) = net.layers()[l].weights.dim();
                for idx in 0..rows * cols + cols {
                    let perturb = |delta: f64| {
                        let mut p = net.clone();
                        let layer = &mut p.layers_mut()[l];
                        if idx < rows * cols {
                            layer.weights[[idx / cols, idx % cols]] += delta;
                        } else {
                            layer.bias[idx - rows * cols] += delta;
                        }
                        weighted_output_loss(&p, &v, &w)
                    };
                    numeric.push((perturb(h) - perturb(-h)) / (2.0 * h));
                }
            }
            let diff: f64 = analytic.iter().zip(&numeric).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            let scale: f64 = analytic.iter().map(|a| a * a).sum::<f64>().sqrt();
            assert!(diff / scale < 1e-4, "probe {probe}: relative error {}", diff / scale);
        }
    }

    #[test]
    fn backward_is_linear_in_upstream() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let net = init_network(&[3, 8, 8, 2], 1).unwrap();
        let v = random_batch(&mut rng, 6, 3);
        let (_, cache) = net.forward_batch(&v, &[0.0; 2], &[1.0; 2]).unwrap();
        let zero = net.backward(&cache, &Array2::zeros((6, 2))).unwrap();
        assert!(zero.flatten().iter().all(|&g| g == 0.0));
        let up = random_batch(&mut rng, 6, 2);
        let g1 = net.backward(&cache, &up).unwrap().flatten();
        let g2 = net.backward(&cache, &(&up * 2.0)).unwrap().flatten();
        for (a, b) in g1.iter().zip(&g2) {
            assert!((2.0 * a - b).abs() <= 1e-12 * b.abs().max(1.0));
        }
        assert!(net.backward(&cache, &Array2::zeros((5, 2))).is_err());
    }

    #[test]
    fn adam_zero_gradient_only_advances_step() {
        let mut net = init_network(&[2, 4, 2], 0).unwrap();
        let before = net.clone();
        let mut state = AdamState::new(&net, AdamConfig::default());
        let zeros = Gradients {
            layers: net.layers().iter().map(|l| Layer::zeros(l.weights.nrows(), l.weights.ncols())).collect(),
        };
        adam_step(&mut net, &zeros, &mut state).unwrap();
        assert_eq!(net, before);
        assert_eq!(state.step, 1);
    }

    #[test]
    fn adam_first_step_is_sign_scaled() {
        let mut net = init_network(&[2, 3, 1], 0).unwrap();
        let before = net.clone();
        let config = AdamConfig::default();
        let mut state = AdamState::new(&net, config);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let grads = Gradients {
            layers: net
                .layers()
                .iter()
                .map(|l| Layer {
                    weights: Array2::from_shape_fn(l.weights.dim(), |_| rng.random_range(-2.0..2.0)),
                    bias: Array1::from_shape_fn(l.bias.len(), |_| rng.random_range(-2.0..2.0)),
                })
                .collect(),
        };
        let mut again = net.clone();
        let mut state2 = state.clone();
        adam_step(&mut net, &grads, &mut state).unwrap();
        adam_step(&mut again, &grads, &mut state2).unwrap();
        assert_eq!(net, again);
        assert_eq!(state, state2);
        let moved: Vec<f64> = net
            .layers()
            .iter()
            .zip(before.layers())
            .flat_map(|(a, b)| (&a.weights - &b.weights).into_iter().chain(&a.bias - &b.bias))
            .collect();
        for (delta, g) in moved.iter().zip(grads.flatten()) {
            let expected = -config.learning_rate * g / (g.abs() + config.epsilon);
            assert!((delta - expected).abs() < 1e-15, "{delta} vs {expected}");
        }
    }

    #[test]
    fn adam_rejects_non_finite() {
        let mut net = init_network(&[2, 3, 1], 0).unwrap();
        let mut state = AdamState::new(&net, AdamConfig::default());
        let mut grads = Gradients {
            layers: net.layers().iter().map(|l| Layer::zeros(l.weights.nrows(), l.weights.ncols())).collect(),
        };
        grads.layers[1].bias[0] = f64::NAN;
        match adam_step(&mut net, &grads, &mut state) {
            Err(Error::NonFiniteGradient { layer }) => assert_eq!(layer, 1),
            other => panic!("{other:?}"),
        }
        assert_eq!(state.step, 0);
    }
}
