//! Deterministic pseudo-random models and windows for tests and sweeps.
//!
//! A fixture model draws, from a ChaCha8 stream seeded with the 64-bit seed,
//! every parameter in storage order (cells, gates i/f/g/o, U then W then B,
//! then FC1 and FC2 neurons, weights before bias): weights uniform in
//! `[-weight, weight]`, biases uniform in `[-bias, bias]`, and the forget
//! gate bias shifted by `forget_bias`.

use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::fxp::{FxpError, RoundingMode};
use crate::net::model::{Dims, Gate, GateParams, ModelParams, Neuron, FC1_NEURONS, FC2_NEURONS};
use crate::net::window::{GaitWindow, Label};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixtureSpec {
    pub dims: Dims,
    pub weight: f64,
    pub bias: f64,
    pub forget_bias: f64,
}

impl Default for FixtureSpec {
    fn default() -> Self {
        Self {
            dims: Dims::default(),
            weight: 0.5,
            bias: 0.1,
            forget_bias: 0.5,
        }
    }
}

impl FixtureSpec {
    /// Larger weights that drive gate pre-activations past +-4, so formats
    /// with only two integer bits saturate.
    pub fn saturating() -> Self {
        Self {
            weight: 1.5,
            bias: 0.5,
            ..Self::default()
        }
    }

    pub fn generate(&self, seed: u64) -> ModelParams {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = self.dims;
        let (wr, br) = (self.weight, self.bias);
        let weights = |rng: &mut ChaCha8Rng, n: usize| -> Vec<f64> { (0..n).map(|_| rng.gen_range(-wr..=wr)).collect() };
        let cells = (0..d.num_cells)
            .map(|_| {
                Gate::ALL.map(|gate| {
                    let u = weights(&mut rng, d.num_cells);
                    let w = weights(&mut rng, d.input_channels);
                    let mut b = rng.gen_range(-br..=br);
                    if gate == Gate::F {
                        b += self.forget_bias;
                    }
                    GateParams { u, w, b }
                })
            })
            .collect();
        let layer = |rng: &mut ChaCha8Rng, neurons: usize, inputs: usize| -> Vec<Neuron<f64>> {
            (0..neurons)
                .map(|_| Neuron {
                    w: weights(rng, inputs),
                    b: rng.gen_range(-br..=br),
                })
                .collect()
        };
        let fc1 = layer(&mut rng, FC1_NEURONS, d.num_cells);
        let fc2 = layer(&mut rng, FC2_NEURONS, FC1_NEURONS);
        ModelParams {
            dims: d,
            cells,
            fc1,
            fc2,
        }
    }
}

pub fn gen_fixture_model(seed: u64) -> ModelParams {
    FixtureSpec::default().generate(seed)
}

/// A gait-like window: per channel a sum of two sinusoids with random
/// amplitude, frequency and phase plus uniform jitter, inside `[-1.5, 1.5]`.
pub fn random_window(seed: u64, dims: Dims) -> Result<GaitWindow, FxpError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let label = if rng.gen_bool(0.5) { Label::Abnormal } else { Label::Normal };
    let comps: Vec<[(f64, f64, f64); 2]> = (0..dims.input_channels)
        .map(|_| {
            [(); 2].map(|_| {
                (
                    rng.gen_range(0.1..0.6),
                    rng.gen_range(0.5..4.0),
                    rng.gen_range(0.0..core::f64::consts::TAU),
                )
            })
        })
        .collect();
    let mut samples = Vec::with_capacity(dims.timesteps * dims.input_channels);
    for t in 0..dims.timesteps {
        let phase = t as f64 / dims.timesteps as f64 * core::f64::consts::TAU;
        for parts in &comps {
            let v: f64 = parts.iter().map(|&(a, f, p)| a * libm::sin(f * phase + p)).sum();
            let jitter = rng.gen_range(-0.05..0.05);
            samples.push((v + jitter).clamp(-1.5, 1.5));
        }
    }
    GaitWindow::from_reals(&samples, dims.input_channels, label, seed, RoundingMode::NearestTiesAway)
}
