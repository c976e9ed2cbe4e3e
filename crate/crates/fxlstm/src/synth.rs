//! Synthetic 4-channel gait signals.
//!
//! Each subject gets 2 or 3 sinusoids per axis with their own amplitudes,
//! frequencies (cycles per step) and phases. A step is sampled over one
//! gait cycle with Gaussian noise; abnormal steps add a perturbation. The
//! fourth channel is the magnitude of the first three. Every channel is then
//! mapped affinely onto `[-1.5, 1.5]` over the whole dataset; the maps are
//! stored in a sidecar so raw values can be recovered. Transcendentals come
//! from `libm` so the output does not depend on the platform's math library.

use std::f64::consts::TAU;
use std::path::{Path, PathBuf};

use fxlstm_core::net::{GaitStep, Label};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const RESCALE_BOUND: f64 = 1.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Abnormality {
    /// High-frequency oscillation on all axes.
    Tremor,
    /// Reduced amplitude in the second half of the step.
    Asymmetry,
    /// A dip on the vertical axis late in the step.
    Drag,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub seed: u64,
    pub subjects: usize,
    pub steps_per_subject: usize,
    pub min_len: usize,
    pub max_len: usize,
    pub kind: Abnormality,
    pub abnormal_fraction: f64,
    pub noise: f64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            seed: 0,
            subjects: 8,
            steps_per_subject: 16,
            min_len: 110,
            max_len: 180,
            kind: Abnormality::Tremor,
            abnormal_fraction: 0.5,
            noise: 0.03,
        }
    }
}

impl SynthSpec {
    pub fn check(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Usage(format!("invalid synthetic spec: {m}")));
        if self.subjects == 0 || self.steps_per_subject == 0 {
            return bad("subjects and steps per subject must be positive");
        }
        if self.min_len == 0 || self.min_len > self.max_len {
            return bad("need 0 < min_len <= max_len");
        }
        if !(0.0..=1.0).contains(&self.abnormal_fraction) {
            return bad("abnormal fraction must be in [0, 1]");
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return bad("noise must be a finite non-negative standard deviation");
        }
        Ok(())
    }
}

/// `emitted = raw * scale + offset`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelMap {
    pub name: String,
    pub scale: f64,
    pub offset: f64,
}

impl ChannelMap {
    pub fn apply(&self, raw: f64) -> f64 {
        raw * self.scale + self.offset
    }

    pub fn invert(&self, emitted: f64) -> f64 {
        (emitted - self.offset) / self.scale
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthMeta {
    pub spec: SynthSpec,
    pub channels: Vec<ChannelMap>,
}

#[derive(Debug, Clone, Copy)]
struct Component {
    amp: f64,
    cycles: f64,
    phase: f64,
}

fn subject_profile(rng: &mut ChaCha8Rng) -> [Vec<Component>; 3] {
    core::array::from_fn(|_| {
        let n = rng.gen_range(2..=3);
        (0..n)
            .map(|k| Component {
                amp: rng.gen_range(0.2..1.0) / (k + 1) as f64,
                cycles: (k + 1) as f64 + rng.gen_range(-0.15..0.15),
                phase: rng.gen_range(0.0..TAU),
            })
            .collect()
    })
}

fn perturb(kind: Abnormality, axis: usize, p: f64, t: usize, base: f64, phase: f64) -> f64 {
    match kind {
        Abnormality::Tremor => base + 0.25 * libm::sin(TAU * 0.21 * t as f64 + phase + axis as f64),
        Abnormality::Asymmetry => {
            if p > 0.5 {
                base * 0.55
            } else {
                base
            }
        }
        Abnormality::Drag => {
            if axis == 2 {
                base - 0.8 * libm::exp(-((p - 0.7) / 0.08).powi(2))
            } else {
                base
            }
        }
    }
}

/// Raw (unscaled) steps; the magnitude channel is exact for the raw axes.
pub fn generate_raw(spec: &SynthSpec) -> Result<Vec<GaitStep>> {
    spec.check()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let noise = Normal::new(0.0, spec.noise).expect("checked noise");
    let mut steps = Vec::with_capacity(spec.subjects * spec.steps_per_subject);
    for s in 0..spec.subjects {
        let profile = subject_profile(&mut rng);
        for k in 0..spec.steps_per_subject {
            let len = rng.gen_range(spec.min_len..=spec.max_len);
            let abnormal = rng.gen_bool(spec.abnormal_fraction);
            let tremor_phase = rng.gen_range(0.0..TAU);
            let mut samples = Vec::with_capacity(len * 4);
            for t in 0..len {
                let p = t as f64 / len as f64;
                let mut axes = [0.0; 3];
                for (axis, comps) in profile.iter().enumerate() {
                    let mut v: f64 = comps.iter().map(|c| c.amp * libm::sin(TAU * c.cycles * p + c.phase)).sum();
                    if abnormal {
                        v = perturb(spec.kind, axis, p, t, v, tremor_phase);
                    }
                    axes[axis] = v + noise.sample(&mut rng);
                }
                let mag = (axes[0] * axes[0] + axes[1] * axes[1] + axes[2] * axes[2]).sqrt();
                samples.extend(axes);
                samples.push(mag);
            }
            steps.push(GaitStep {
                id: (s * spec.steps_per_subject + k) as u64,
                label: if abnormal { Label::Abnormal } else { Label::Normal },
                channels: 4,
                samples,
            });
        }
    }
    Ok(steps)
}

/// Per-channel maps sending the dataset's range onto `[-1.5, 1.5]`.
pub fn fit_rescale(steps: &[GaitStep]) -> Vec<ChannelMap> {
    crate::dataset::CHANNELS
        .iter()
        .enumerate()
        .map(|(c, name)| {
            let (lo, hi) = steps
                .iter()
                .flat_map(|s| s.samples.iter().skip(c).step_by(4))
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
            let span = hi - lo;
            let scale = if span > 0.0 { 2.0 * RESCALE_BOUND / span } else { 1.0 };
            let offset = if span > 0.0 { -RESCALE_BOUND - lo * scale } else { -lo };
            ChannelMap {
                name: name.to_string(),
                scale,
                offset,
            }
        })
        .collect()
}

pub fn apply_rescale(steps: &mut [GaitStep], maps: &[ChannelMap]) {
    for s in steps {
        for (i, v) in s.samples.iter_mut().enumerate() {
            // Rounding can leave the extremes one ulp outside the bound.
            *v = maps[i % 4].apply(*v).clamp(-RESCALE_BOUND, RESCALE_BOUND);
        }
    }
}

pub fn generate(spec: &SynthSpec) -> Result<(Vec<GaitStep>, SynthMeta)> {
    let mut steps = generate_raw(spec)?;
    let channels = fit_rescale(&steps);
    apply_rescale(&mut steps, &channels);
    Ok((
        steps,
        SynthMeta {
            spec: spec.clone(),
            channels,
        },
    ))
}

pub fn meta_path(csv: &Path) -> PathBuf {
    let mut s = csv.as_os_str().to_owned();
    s.push(".meta.json");
    PathBuf::from(s)
}

pub fn save_meta(path: &Path, meta: &SynthMeta) -> Result<()> {
    let mut text = serde_json::to_string_pretty(meta).expect("meta serializes");
    text.push('\n');
    crate::write_file(path, text.as_bytes())
}

pub fn load_meta(path: &Path) -> Result<SynthMeta> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::schema(path, Some(e.line() as u64), e))
}
