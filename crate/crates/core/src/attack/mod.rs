//! Deformation-based targeted attack on a frozen classifier ensemble.
//!
//! The FFD control offsets are optimized with Adam so that every (optionally
//! mirrored) ensemble logit of the warped volume clears the margin `gamma` on
//! the target side, while smoothness and bending penalties keep the
//! deformation regular.
//!
//! Adam works on normalized offsets `theta = offset / ((dim - 1) / 2)` per
//! axis, so the learning rate is a fraction of the half-extent of the volume
//! regardless of grid size. Lattices, traces and gradients exposed by this
//! module are in voxels.

mod loss;

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::classifier::{sigmoid, Ensemble};
use crate::ffd::{chain_field, warp_with_grad, DisplacementField, FfdLattice};
use crate::regularize::{bending_field, smoothness_field, RegWeights};
use crate::volume::{Dims, Label, Volume};
use crate::{Error, Result};

pub use crate::optim::{cosine_lr, Adam, LrSchedule};
pub use loss::{smooth_max, smooth_min, swm_loss};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackConfig {
    pub target: Label,
    pub steps: usize,
    pub lr: f64,
    pub gamma: f64,
    pub tau: f64,
    pub weights: RegWeights,
    /// Lattice cells per axis; `None` picks [`default_cells`] for the input.
    pub cells: Option<[usize; 3]>,
    pub freeze_posterior: bool,
    pub schedule: LrSchedule,
    /// Penalties are evaluated on every `reg_stride`-th voxel per axis.
    pub reg_stride: usize,
    /// Recorded for provenance; the attack itself is deterministic.
    pub seed: u64,
}

impl AttackConfig {
    pub fn new(target: Label) -> Self {
        Self {
            target,
            steps: 100,
            lr: 5e-3,
            gamma: 4.5,
            tau: 1.0,
            weights: RegWeights {
                smooth: 1e3,
                bend: 1e3,
            },
            cells: None,
            freeze_posterior: true,
            schedule: LrSchedule::Cosine,
            reg_stride: 1,
            seed: 0,
        }
    }

    /// The unconstrained variant: one lattice cell per voxel and no penalties.
    pub fn ablated(mut self, dims: Dims) -> Self {
        self.cells = Some(dims);
        self.weights = RegWeights { smooth: 0.0, bend: 0.0 };
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("lr must be > 0, got {}", self.lr)));
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::Config(format!("tau must be > 0, got {}", self.tau)));
        }
        if !self.gamma.is_finite() {
            return Err(Error::Config(format!("gamma must be finite, got {}", self.gamma)));
        }
        if self.reg_stride == 0 {
            return Err(Error::Config("reg_stride must be >= 1".into()));
        }
        if self.cells.is_some_and(|c| c.contains(&0)) {
            return Err(Error::Config("lattice cells must be positive".into()));
        }
        self.weights.validate()
    }

    pub fn cells_for(&self, dims: Dims) -> [usize; 3] {
        self.cells.unwrap_or_else(|| default_cells(dims))
    }

    /// Identity lattice for `dims`, with the posterior half frozen if requested.
    pub fn lattice_for(&self, dims: Dims) -> Result<FfdLattice> {
        let mut lattice = FfdLattice::new(self.cells_for(dims), dims)?;
        if self.freeze_posterior {
            lattice.freeze_posterior_half();
        }
        Ok(lattice)
    }
}

/// 32 cells for a 256-voxel axis, scaled linearly, at least 4.
pub fn default_cells(dims: Dims) -> [usize; 3] {
    dims.map(|d| ((32.0 * d as f64 / 256.0).round() as usize).max(4))
}

/// Loss terms and logits at one step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    /// Rate used for the update that follows this record; 0 for the final one.
    pub lr: f64,
    pub swm: f64,
    pub smooth: f64,
    pub bend: f64,
    pub total: f64,
    pub logits: Vec<f64>,
}

/// One record per step plus the final state (`steps + 1` entries).
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct AttackTrace {
    pub records: Vec<StepRecord>,
}

impl AttackTrace {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn first(&self) -> Option<&StepRecord> {
        self.records.first()
    }

    pub fn last(&self) -> Option<&StepRecord> {
        self.records.last()
    }

    pub fn to_csv(&self) -> String {
        let n = self.records.first().map_or(0, |r| r.logits.len());
        let mut out = String::from("step,lr,l_swm,r_smooth,r_bend,total");
        for j in 0..n {
            let _ = write!(out, ",logit_{j}");
        }
        out.push('\n');
        for r in &self.records {
            let _ = write!(out, "{},{},{},{},{},{}", r.step, r.lr, r.swm, r.smooth, r.bend, r.total);
            for l in &r.logits {
                let _ = write!(out, ",{l}");
            }
            out.push('\n');
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

/// Total loss terms at the lattice's current offsets together with the
/// gradient over the offsets (voxel units, frozen entries zeroed).
#[derive(Debug, Clone, PartialEq)]
pub struct Objective {
    pub swm: f64,
    pub smooth: f64,
    pub bend: f64,
    pub total: f64,
    pub logits: Vec<f64>,
    pub grad: Vec<f64>,
    pub warped: Volume,
}

pub fn objective(v: &Volume, ensemble: &Ensemble, lattice: &FfdLattice, cfg: &AttackConfig) -> Result<Objective> {
    check_dims(v, ensemble, lattice)?;
    cfg.validate()?;
    Ok(evaluate(v, ensemble, lattice, cfg))
}

fn check_dims(v: &Volume, ensemble: &Ensemble, lattice: &FfdLattice) -> Result<()> {
    if ensemble.input_dims() != v.dims() {
        return Err(Error::invalid(format!(
            "volume dims {:?} do not match model input dims {:?}",
            v.dims(),
            ensemble.input_dims()
        )));
    }
    if lattice.domain_dims() != v.dims() {
        return Err(Error::invalid(format!(
            "volume dims {:?} do not match lattice domain {:?}",
            v.dims(),
            lattice.domain_dims()
        )));
    }
    Ok(())
}

fn evaluate(v: &Volume, ensemble: &Ensemble, lattice: &FfdLattice, cfg: &AttackConfig) -> Objective {
    let field = lattice.field();
    let (warped, image_grad) = warp_with_grad(v, &field);
    let mut swm = 0.0;
    let (logits, dl_dwarped) = ensemble.logits_and_input_grad(&warped, |l| {
        // Non-finite logits surface through the loss below.
        match swm_loss(l, cfg.target, cfg.gamma, cfg.tau) {
            Ok((value, g)) => {
                swm = value;
                g
            }
            Err(_) => {
                swm = f64::NAN;
                vec![0.0; l.len()]
            }
        }
    });
    let mut g = chain_field(v.dims(), &dl_dwarped, &image_grad);
    let RegWeights { smooth: ls, bend: lb } = cfg.weights;
    let (smooth, gs) = smoothness_field(&field, cfg.reg_stride);
    let (bend, gb) = bending_field(&field, cfg.reg_stride);
    accumulate(&mut g, &gs, ls);
    accumulate(&mut g, &gb, lb);
    let mut grad = lattice.field_adjoint(&g).expect("field dims match lattice");
    lattice.zero_frozen(&mut grad);
    Objective {
        swm,
        smooth,
        bend,
        total: swm + ls * smooth + lb * bend,
        logits,
        grad,
        warped,
    }
}

fn accumulate(g: &mut DisplacementField, other: &DisplacementField, scale: f64) {
    if scale == 0.0 {
        return;
    }
    for (a, b) in g.data.iter_mut().zip(&other.data) {
        for c in 0..3 {
            a[c] += scale * b[c];
        }
    }
}

/// Runs `cfg.steps` Adam updates from the identity deformation and returns
/// the final warped volume, the lattice and the per-step trace.
pub fn run_attack(v: &Volume, ensemble: &Ensemble, cfg: &AttackConfig) -> Result<(Volume, FfdLattice, AttackTrace)> {
    cfg.validate()?;
    let dims = v.dims();
    let mut lattice = cfg.lattice_for(dims)?;
    check_dims(v, ensemble, &lattice)?;

    let scale: [f64; 3] = dims.map(|d| (d - 1) as f64 / 2.0);
    let n = lattice.offsets().len();
    let frozen: Vec<bool> = (0..n).map(|i| lattice.frozen()[i / 3]).collect();
    let mut theta = vec![0.0; n];
    let mut offsets = vec![0.0; n];
    let mut grad_theta = vec![0.0; n];
    let mut adam = Adam::new(n);
    let mut trace = AttackTrace {
        records: Vec::with_capacity(cfg.steps + 1),
    };

    for step in 0..=cfg.steps {
        let obj = evaluate(v, ensemble, &lattice, cfg);
        if !obj.total.is_finite() {
            return Err(Error::NonFinite { step });
        }
        let lr = if step < cfg.steps {
            cfg.schedule.rate(step, cfg.steps, cfg.lr)
        } else {
            0.0
        };
        trace.records.push(StepRecord {
            step,
            lr,
            swm: obj.swm,
            smooth: obj.smooth,
            bend: obj.bend,
            total: obj.total,
            logits: obj.logits,
        });
        if step == cfg.steps {
            return Ok((obj.warped, lattice, trace));
        }
        for (i, (gt, g)) in grad_theta.iter_mut().zip(&obj.grad).enumerate() {
            *gt = g * scale[i % 3];
        }
        adam.step_masked(&mut theta, &grad_theta, lr, Some(&frozen))?;
        for (i, (o, t)) in offsets.iter_mut().zip(&theta).enumerate() {
            *o = t * scale[i % 3];
        }
        lattice.set_offsets(&offsets)?;
    }
    unreachable!("loop returns at the final step")
}

/// Probability that a classifier logit belongs to `target`.
pub fn target_probability(logit: f64, target: Label) -> f64 {
    match target {
        Label::Female => sigmoid(logit),
        Label::Male => sigmoid(-logit),
    }
}
