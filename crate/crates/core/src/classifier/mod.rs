//! Differentiable binary classifiers over occupancy volumes.
//!
//! A classifier maps a volume to one logit; `logit > 0` predicts
//! [`Label::Female`]. Besides the forward pass every model exposes the gradient
//! of its logit with respect to the input voxels, which is what the attack
//! consumes.

mod augment;
pub(crate) mod convnet;
mod io;
mod linear;
mod loss;
mod metrics;
mod train;

pub use augment::{augment, mask_patches};
pub use io::{read_model, write_model, SCLF_HEADER_LEN, SCLF_MAGIC};
pub use loss::{bce_loss, sigmoid};
pub use metrics::{auroc, evaluate, evaluate_logits, Metrics};
pub use train::{train, train_from_manifests, EpochStats, TrainConfig, TrainReport};

use serde::{Deserialize, Serialize};

use crate::volume::{flip_x, voxel_count, Dims, Label, Volume};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Architecture {
    Linear,
    ConvNet,
}

impl Architecture {
    pub fn tag(self) -> u32 {
        match self {
            Architecture::Linear => 0,
            Architecture::ConvNet => 1,
        }
    }

    pub fn from_tag(tag: u32) -> Result<Self> {
        match tag {
            0 => Ok(Architecture::Linear),
            1 => Ok(Architecture::ConvNet),
            _ => Err(Error::invalid(format!("unknown architecture tag {tag}"))),
        }
    }

    pub fn param_count(self, dims: Dims) -> usize {
        match self {
            Architecture::Linear => voxel_count(dims) + 1,
            Architecture::ConvNet => convnet::param_count(),
        }
    }
}

impl std::str::FromStr for Architecture {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(Architecture::Linear),
            "convnet" => Ok(Architecture::ConvNet),
            _ => Err(Error::invalid(format!("unknown architecture {s:?}"))),
        }
    }
}

impl std::fmt::Display for Architecture {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Architecture::Linear => "linear",
            Architecture::ConvNet => "convnet",
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelMeta {
    pub seed: u64,
    /// FNV-1a hash of the JSON-serialized training configuration, 0 if untrained.
    pub config_hash: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Classifier {
    arch: Architecture,
    dims: Dims,
    params: Vec<f64>,
    pub meta: ModelMeta,
}

/// Forward activations needed by the reverse pass.
pub(crate) enum Cache {
    Linear,
    ConvNet(convnet::Cache),
}

impl Classifier {
    /// Freshly initialized model. The output layer starts at zero, so the
    /// initial logit is 0 for every input.
    pub fn new(arch: Architecture, dims: Dims, seed: u64) -> Result<Self> {
        if dims.iter().any(|&d| d == 0) {
            return Err(Error::invalid(format!("input dims must be positive, got {dims:?}")));
        }
        let params = match arch {
            Architecture::Linear => vec![0.0; arch.param_count(dims)],
            Architecture::ConvNet => convnet::init(&mut crate::rng::stream(seed, &[0xC0]))
        };
        Ok(Self {
            arch,
            dims,
            params,
            meta: ModelMeta {
                seed,
                config_hash: 0,
            },
        })
    }

    pub fn from_params(arch: Architecture, dims: Dims, params: Vec<f64>) -> Result<Self> {
        let expected = arch.param_count(dims);
        if params.len() != expected {
            return Err(Error::invalid(format!(
                "{arch} over {dims:?} needs {expected} parameters, got {}",
                params.len()
            )));
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::invalid("non-finite parameter"));
        }
        Ok(Self {
            arch,
            dims,
            params,
            meta: ModelMeta::default(),
        })
    }

    pub fn arch(&self) -> Architecture {
        self.arch
    }

    pub fn input_dims(&self) -> Dims {
        self.dims
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub(crate) fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn check(&self, dims: Dims) -> Result<()> {
        if dims != self.dims {
            return Err(Error::invalid(format!(
                "model expects input dims {:?}, got {dims:?}",
                self.dims
            )));
        }
        Ok(())
    }

    pub fn forward(&self, v: &Volume) -> Result<f64> {
        self.check(v.dims())?;
        Ok(self.forward_cached(v.data()).0)
    }

    pub fn probability(&self, v: &Volume) -> Result<f64> {
        self.forward(v).map(sigmoid)
    }

    /// `upstream * d(logit)/d(input)`, x-fastest over the input voxels.
    pub fn backward_input(&self, v: &Volume, upstream: f64) -> Result<Vec<f64>> {
        self.check(v.dims())?;
        let (_, cache) = self.forward_cached(v.data());
        Ok(self.backward(v.data(), &cache, upstream, true, false).0.unwrap())
    }

    pub(crate) fn forward_cached(&self, input: &[f64]) -> (f64, Cache) {
        match self.arch {
            Architecture::Linear => (linear::forward(&self.params, input), Cache::Linear),
            Architecture::ConvNet => {
                let (logit, c) = convnet::forward(&self.params, input, self.dims);
                (logit, Cache::ConvNet(c))
            }
        }
    }

    pub(crate) fn backward(
        &self,
        input: &[f64],
        cache: &Cache,
        upstream: f64,
        want_input: bool,
        want_params: bool,
    ) -> (Option<Vec<f64>>, Option<Vec<f64>>) {
        match cache {
            Cache::Linear => linear::backward(&self.params, input, upstream, want_input, want_params),
            Cache::ConvNet(c) => convnet::backward(&self.params, c, upstream, want_input, want_params),
        }
    }

    /// Rounds parameters to f32, the precision of the model file.
    pub(crate) fn quantize(&mut self) {
        for p in &mut self.params {
            *p = *p as f32 as f64;
        }
    }
}

/// An ordered set of classifiers sharing one input shape. With
/// `flip_augment`, every member also scores the mirrored input, giving two
/// logits per member ordered `[f_0(x), f_0(flip x), f_1(x), ...]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    members: Vec<Classifier>,
    pub flip_augment: bool,
}

impl Ensemble {
    pub fn new(members: Vec<Classifier>, flip_augment: bool) -> Result<Self> {
        let first = members
            .first()
            .ok_or_else(|| Error::invalid("ensemble needs at least one member"))?;
        if let Some(m) = members.iter().find(|m| m.dims != first.dims) {
            return Err(Error::invalid(format!(
                "ensemble members disagree on input dims: {:?} vs {:?}",
                first.dims, m.dims
            )));
        }
        Ok(Self {
            members,
            flip_augment,
        })
    }

    pub fn members(&self) -> &[Classifier] {
        &self.members
    }

    pub fn input_dims(&self) -> Dims {
        self.members[0].dims
    }

    pub fn logit_count(&self) -> usize {
        self.members.len() * if self.flip_augment { 2 } else { 1 }
    }

    pub fn logits(&self, v: &Volume) -> Result<Vec<f64>> {
        self.members[0].check(v.dims())?;
        let flipped = self.flip_augment.then(|| v.flip_midsagittal());
        let mut out = Vec::with_capacity(self.logit_count());
        for m in &self.members {
            out.push(m.forward_cached(v.data()).0);
            if let Some(f) = &flipped {
                out.push(m.forward_cached(f.data()).0);
            }
        }
        Ok(out)
    }

    /// Mean member logit on the unflipped input; used to score the ensemble as
    /// a single classifier.
    pub fn mean_logit(&self, v: &Volume) -> Result<f64> {
        self.members[0].check(v.dims())?;
        let sum: f64 = self.members.iter().map(|m| m.forward_cached(v.data()).0).sum();
        Ok(sum / self.members.len() as f64)
    }

    /// Logits plus `sum_j w_j * d(logit_j)/d(input)`, where the weights are
    /// computed from the logits by `weights`. Gradients of mirrored logits are
    /// mirrored back onto the input grid.
    pub(crate) fn logits_and_input_grad(
        &self,
        v: &Volume,
        weights: impl FnOnce(&[f64]) -> Vec<f64>,
    ) -> (Vec<f64>, Vec<f64>) {
        let flipped = self.flip_augment.then(|| v.flip_midsagittal());
        let mut logits = Vec::with_capacity(self.logit_count());
        let mut caches = Vec::with_capacity(self.logit_count());
        for m in &self.members {
            let (l, c) = m.forward_cached(v.data());
            logits.push(l);
            caches.push((m, c, false));
            if let Some(f) = &flipped {
                let (l, c) = m.forward_cached(f.data());
                logits.push(l);
                caches.push((m, c, true));
            }
        }
        let w = weights(&logits);
        let mut grad = vec![0.0; v.len()];
        let mut grad_flipped = vec![0.0; v.len()];
        for ((m, cache, is_flip), &wj) in caches.iter().zip(&w) {
            if wj == 0.0 {
                continue;
            }
            let input = if *is_flip { flipped.as_ref().unwrap().data() } else { v.data() };
            let g = m.backward(input, cache, wj, true, false).0.unwrap();
            let acc = if *is_flip { &mut grad_flipped } else { &mut grad };
            for (a, b) in acc.iter_mut().zip(&g) {
                *a += b;
            }
        }
        if self.flip_augment {
            for (a, b) in grad.iter_mut().zip(flip_x(&grad_flipped, v.dims())) {
                *a += b;
            }
        }
        (logits, grad)
    }
}

/// Predicted label for a logit.
pub fn predict(logit: f64) -> Label {
    if logit > 0.0 {
        Label::Female
    } else {
        Label::Male
    }
}
