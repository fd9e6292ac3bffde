//! Minibatch training with AdamW, per-iteration augmentation and patch
//! masking, inverse-frequency class weights, and best-validation-epoch model
//! selection.

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{augment, bce_loss, mask_patches, predict, Architecture, Classifier};
use crate::optim::Adam;
use crate::volume::{Dims, Label, LabeledSample, Manifest};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub mask_prob: f64,
    /// Patch size for masking; `None` means a quarter of the volume per axis.
    pub mask_patch: Option<[usize; 3]>,
    pub flip_prob: f64,
    pub affine_prob: f64,
    pub scale_range: (f64, f64),
    /// Each axis rotation is drawn from `U(-r, r)` degrees.
    pub rotation_deg: f64,
    /// Translation range in voxels; `None` scales 10 voxels per 256 with the axis length.
    pub translation_vox: Option<f64>,
    /// `[w_male, w_female]`; `None` uses inverse class frequencies normalized to mean 1.
    pub class_weights: Option<[f64; 2]>,
    /// Fraction of the training samples held out for model selection when no
    /// validation set is given.
    pub val_fraction: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 16,
            epochs: 100,
            lr: 1e-4,
            weight_decay: 0.01,
            mask_prob: 0.5,
            mask_patch: None,
            flip_prob: 0.5,
            affine_prob: 1.0,
            scale_range: (0.9, 1.1),
            rotation_deg: 5.0,
            translation_vox: None,
            class_weights: None,
            val_fraction: 0.15,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.batch_size == 0 {
            return bad("batch size must be >= 1".into());
        }
        for (name, p) in [
            ("mask_prob", self.mask_prob),
            ("flip_prob", self.flip_prob),
            ("affine_prob", self.affine_prob),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("{name} must lie in [0, 1], got {p}"));
            }
        }
        if !(0.0..1.0).contains(&self.val_fraction) {
            return bad(format!("val_fraction must lie in [0, 1), got {}", self.val_fraction));
        }
        let (lo, hi) = self.scale_range;
        if !(lo.is_finite() && hi.is_finite() && lo > 0.0 && lo <= hi) {
            return bad(format!("invalid scale range ({lo}, {hi})"));
        }
        let finite = [self.lr, self.weight_decay, self.rotation_deg]
            .into_iter()
            .chain(self.translation_vox)
            .all(f64::is_finite);
        if !finite || self.lr <= 0.0 {
            return bad("learning rate, decay and augmentation ranges must be finite (lr > 0)".into());
        }
        if let Some(w) = self.class_weights {
            if w.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
                return bad(format!("invalid class weights {w:?}"));
            }
        }
        Ok(())
    }

    pub(crate) fn translation_for(&self, axis_len: usize) -> f64 {
        self.translation_vox
            .unwrap_or(10.0 * axis_len as f64 / 256.0)
    }

    pub(crate) fn patch_for(&self, dims: Dims) -> [usize; 3] {
        self.mask_patch
            .unwrap_or_else(|| dims.map(|d| (d / 4).max(1)))
    }

    /// FNV-1a over the JSON form; identifies the configuration in model metadata.
    pub fn hash(&self) -> u64 {
        let json = serde_json::to_vec(self).expect("config serializes");
        json.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| {
            (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3)
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_accuracy: Option<f64>,
    pub val_loss: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochStats>,
    /// Epoch whose parameters were kept.
    pub best_epoch: usize,
    pub class_weights: [f64; 2],
    pub train_size: usize,
    pub val_size: usize,
}

fn class_weights(samples: &[&LabeledSample]) -> Result<[f64; 2]> {
    let n1 = samples.iter().filter(|s| s.label == Label::Female).count();
    let n0 = samples.len() - n1;
    if n0 == 0 || n1 == 0 {
        return Err(Error::Config(format!(
            "training needs both classes, got {n0} male and {n1} female samples"
        )));
    }
    let inv = [1.0 / n0 as f64, 1.0 / n1 as f64];
    let mean = (inv[0] + inv[1]) / 2.0;
    Ok([inv[0] / mean, inv[1] / mean])
}

/// Deterministic stratified hold-out of `fraction` of each class.
fn split_validation<'a>(
    samples: &'a [LabeledSample],
    fraction: f64,
    seed: u64,
) -> (Vec<&'a LabeledSample>, Vec<&'a LabeledSample>) {
    let mut train = Vec::new();
    let mut val = Vec::new();
    for (c, label) in [Label::Male, Label::Female].into_iter().enumerate() {
        let mut idx: Vec<usize> = (0..samples.len()).filter(|&i| samples[i].label == label).collect();
        idx.shuffle(&mut crate::rng::stream(seed, &[0x5A, c as u64]));
        let n_val = (idx.len() as f64 * fraction).round() as usize;
        val.extend(idx[..n_val].iter().map(|&i| &samples[i]));
        train.extend(idx[n_val..].iter().map(|&i| &samples[i]));
    }
    (train, val)
}

fn validation_scores(model: &Classifier, val: &[&LabeledSample], weights: [f64; 2]) -> (f64, f64) {
    let logits: Vec<f64> = val
        .par_iter()
        .map(|s| model.forward_cached(s.volume.data()).0)
        .collect();
    let labels: Vec<Label> = val.iter().map(|s| s.label).collect();
    let acc = logits
        .iter()
        .zip(&labels)
        .filter(|(l, y)| predict(**l) == **y)
        .count() as f64
        / val.len() as f64;
    let loss = bce_loss(&logits, &labels, weights).map(|r| r.0).unwrap_or(f64::NAN);
    (acc, loss)
}

/// Trains a fresh model of `arch`. If `val` is `None`, `cfg.val_fraction` of
/// `train_set` is held out (stratified) for model selection. The kept
/// parameters come from the epoch with the best validation accuracy (ties go
/// to the lower validation loss) and are rounded to f32.
pub fn train(
    train_set: &[LabeledSample],
    val: Option<&[LabeledSample]>,
    arch: Architecture,
    cfg: &TrainConfig,
) -> Result<(Classifier, TrainReport)> {
    cfg.validate()?;
    let (train_refs, val_refs): (Vec<&LabeledSample>, Vec<&LabeledSample>) = match val {
        Some(v) => (train_set.iter().collect(), v.iter().collect()),
        None => split_validation(train_set, cfg.val_fraction, cfg.seed),
    };
    let first = train_refs
        .first()
        .ok_or_else(|| Error::Config("empty training set".into()))?;
    let dims = first.volume.dims();
    if let Some(s) = train_refs.iter().chain(&val_refs).find(|s| s.volume.dims() != dims) {
        return Err(Error::invalid(format!(
            "mixed volume dims in dataset: {dims:?} vs {:?}",
            s.volume.dims()
        )));
    }
    let inverse_freq = class_weights(&train_refs)?;
    let weights = cfg.class_weights.unwrap_or(inverse_freq);

    let mut model = Classifier::new(arch, dims, cfg.seed)?;
    model.meta.config_hash = cfg.hash();
    let mut adam = Adam::new(model.params().len()).with_weight_decay(cfg.weight_decay);
    let mut best: Option<(f64, f64, usize, Vec<f64>)> = None;
    let mut history = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        let mut order: Vec<usize> = (0..train_refs.len()).collect();
        order.shuffle(&mut crate::rng::stream(cfg.seed, &[0xE0, epoch as u64]));
        let mut loss_sum = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let inv_b = 1.0 / batch.len() as f64;
            let per_sample: Vec<(f64, Vec<f64>)> = batch
                .par_iter()
                .map(|&i| {
                    let s = train_refs[i];
                    let mut rng = crate::rng::stream(cfg.seed, &[0xA0, epoch as u64, i as u64]);
                    let aug = augment(s, cfg, &mut rng);
                    let x = mask_patches(&aug.volume, cfg, &mut rng).expect("validated patch dims");
                    let (logit, cache) = model.forward_cached(x.data());
                    let (loss, g) = bce_loss(&[logit], &[s.label], weights).expect("one logit");
                    let grad = model.backward(x.data(), &cache, g[0] * inv_b, false, true).1.unwrap();
                    (loss, grad)
                })
                .collect();
            let mut grad = vec![0.0; model.params().len()];
            for (loss, g) in &per_sample {
                loss_sum += loss;
                for (a, b) in grad.iter_mut().zip(g) {
                    *a += b;
                }
            }
            adam.step(model.params_mut(), &grad, cfg.lr)?;
        }
        let train_loss = loss_sum / train_refs.len() as f64;
        if !train_loss.is_finite() {
            return Err(Error::NonFinite { step: epoch });
        }
        let (val_accuracy, val_loss) = if val_refs.is_empty() {
            (None, None)
        } else {
            let (a, l) = validation_scores(&model, &val_refs, weights);
            (Some(a), Some(l))
        };
        let key = (val_accuracy.unwrap_or(0.0), val_loss.unwrap_or(0.0));
        let better = val_refs.is_empty()
            || best
                .as_ref()
                .map_or(true, |(a, l, _, _)| key.0 > *a || (key.0 == *a && key.1 < *l));
        if better {
            best = Some((key.0, key.1, epoch, model.params().to_vec()));
        }
        history.push(EpochStats {
            epoch,
            train_loss,
            val_accuracy,
            val_loss,
        });
    }

    let best_epoch = match best {
        Some((_, _, epoch, params)) => {
            model.params_mut().copy_from_slice(&params);
            epoch
        }
        None => 0,
    };
    model.quantize();
    Ok((
        model,
        TrainReport {
            epochs: history,
            best_epoch,
            class_weights: weights,
            train_size: train_refs.len(),
            val_size: val_refs.len(),
        },
    ))
}

/// Loads the manifests and trains; see [`train`].
pub fn train_from_manifests(
    train_manifest: &Manifest,
    val_manifest: Option<&Manifest>,
    arch: Architecture,
    cfg: &TrainConfig,
) -> Result<(Classifier, TrainReport)> {
    let train_set = train_manifest.load_samples()?;
    let val = val_manifest.map(Manifest::load_samples).transpose()?;
    train(&train_set, val.as_deref(), arch, cfg)
}
