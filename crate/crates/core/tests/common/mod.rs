#![allow(dead_code)]

use cfmorph::attack::{objective, AttackConfig};
use cfmorph::classifier::{bce_loss, Architecture, Classifier, Ensemble};
use cfmorph::ffd::{warp, warp_backward, FfdLattice};
use cfmorph::regularize::Penalty;
use cfmorph::rng::stream;
use cfmorph::volume::{Dims, Label, Volume};
use rand::Rng;

/// Largest relative error seen and how many coordinates were compared.
#[derive(Debug, Clone, Copy, Default)]
pub struct FdReport {
    pub checked: usize,
    pub max_rel: f64,
}

impl FdReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.checked > 0 && self.max_rel < tol
    }
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

/// Central differences of `f(idx, delta)` against `analytic[idx]` for every
/// index whose analytic magnitude exceeds `threshold`.
pub fn fd_check(
    analytic: &[f64],
    indices: impl IntoIterator<Item = usize>,
    eps: f64,
    threshold: f64,
    mut f: impl FnMut(usize, f64) -> f64,
) -> FdReport {
    let mut report = FdReport::default();
    for idx in indices {
        let a = analytic[idx];
        if a.abs() <= threshold {
            continue;
        }
        let fd = (f(idx, eps) - f(idx, -eps)) / (2.0 * eps);
        report.checked += 1;
        report.max_rel = report.max_rel.max(rel_err(a, fd));
    }
    report
}

/// Independent uniform voxels in [0, 1].
pub fn random_volume(dims: Dims, seed: u64) -> Volume {
    let mut rng = stream(seed, &[100]);
    Volume::from_fn(dims, |_, _, _| rng.gen())
}

/// Independent uniform voxels with a zero margin of `margin` voxels, so warps
/// that sample slightly outside the grid see a continuous background.
pub fn random_volume_with_margin(dims: Dims, margin: usize, seed: u64) -> Volume {
    let mut rng = stream(seed, &[100]);
    Volume::from_fn(dims, |i, j, k| {
        let inside = [i, j, k]
            .iter()
            .zip(dims)
            .all(|(&x, n)| x >= margin && x + margin < n);
        let u: f64 = rng.gen();
        if inside {
            u
        } else {
            0.0
        }
    })
}

/// A smooth random field in [0, 1): a squashed sum of low-frequency waves
/// times a window that is zero within two voxels of every grid face.
pub fn smooth_volume(dims: Dims, seed: u64) -> Volume {
    let mut rng = stream(seed, &[101]);
    let waves: Vec<([f64; 3], f64, f64)> = (0..6)
        .map(|_| {
            let k = std::array::from_fn(|a| rng.gen_range(-3.0..3.0) / dims[a] as f64);
            (k, rng.gen_range(0.0..std::f64::consts::TAU), rng.gen_range(0.3..1.0))
        })
        .collect();
    Volume::from_fn(dims, |i, j, k| {
        let s: f64 = waves
            .iter()
            .map(|(w, phase, amp)| amp * (w[0] * i as f64 + w[1] * j as f64 + w[2] * k as f64 + phase).sin())
            .sum();
        let window: f64 = [i, j, k]
            .iter()
            .zip(dims)
            .map(|(&x, n)| {
                let (lo, hi) = (2.0, n as f64 - 3.0);
                let t = ((x as f64 - lo) / (hi - lo)).clamp(0.0, 1.0);
                (std::f64::consts::PI * t).sin().powi(2)
            })
            .product();
        window * (0.5 + 0.5 * s.tanh())
    })
}

pub fn random_lattice(cells: [usize; 3], dims: Dims, scale: f64, seed: u64) -> FfdLattice {
    let mut rng = stream(seed, &[102]);
    let mut l = FfdLattice::new(cells, dims).unwrap();
    let vals: Vec<f64> = (0..l.offsets().len()).map(|_| rng.gen_range(-scale..scale)).collect();
    l.set_offsets(&vals).unwrap();
    l
}

/// A classifier with every parameter nonzero, so all layers carry gradient.
pub fn random_classifier(arch: Architecture, dims: Dims, seed: u64) -> Classifier {
    let base = Classifier::new(arch, dims, seed).unwrap();
    let mut rng = stream(seed, &[103]);
    let n = base.params().len();
    let params = match arch {
        Architecture::Linear => {
            let s = 3.0 / (n as f64).sqrt();
            (0..n).map(|_| rng.gen_range(-s..s)).collect()
        }
        Architecture::ConvNet => base
            .params()
            .iter()
            .map(|&p| if p == 0.0 { rng.gen_range(-0.5..0.5) } else { p })
            .collect(),
    };
    Classifier::from_params(arch, dims, params).unwrap()
}

/// A linear classifier whose weights form a smooth random field.
pub fn smooth_linear(dims: Dims, seed: u64) -> Classifier {
    let field = smooth_volume(dims, seed ^ 0x5eed);
    let n = field.len() as f64;
    let mut params: Vec<f64> = field.data().iter().map(|w| 40.0 * (w - 0.25) / n).collect();
    params.push(0.1);
    Classifier::from_params(Architecture::Linear, dims, params).unwrap()
}

pub fn two_member_ensemble(dims: Dims, seed: u64) -> Ensemble {
    Ensemble::new(
        vec![
            random_classifier(Architecture::Linear, dims, seed),
            random_classifier(Architecture::ConvNet, dims, seed + 1),
        ],
        true,
    )
    .unwrap()
}

pub fn with_offsets(l: &FfdLattice, idx: usize, delta: f64) -> FfdLattice {
    let mut vals = l.offsets().to_vec();
    vals[idx] += delta;
    let mut out = l.clone();
    out.set_offsets(&vals).unwrap();
    out
}

/// `warp_backward` against differences of `sum(dl * warp(v))` over every offset.
pub fn warp_backward_fd(v: &Volume, l: &FfdLattice, seed: u64) -> FdReport {
    let mut rng = stream(seed, &[104]);
    let dl: Vec<f64> = (0..v.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let g = warp_backward(v, l, &dl).unwrap();
    fd_check(&g, 0..g.len(), 1e-3, 1e-6, |idx, d| {
        let w = warp(v, &with_offsets(l, idx, d)).unwrap();
        w.data().iter().zip(&dl).map(|(a, b)| a * b).sum()
    })
}

pub fn penalty_fd(penalty: impl Fn(&FfdLattice) -> Penalty, l: &FfdLattice) -> FdReport {
    let p = penalty(l);
    fd_check(&p.grad, 0..p.grad.len(), 1e-3, 1e-6, |idx, d| penalty(&with_offsets(l, idx, d)).value)
}

/// Input gradient of a classifier over `count` random voxels.
pub fn input_grad_fd(m: &Classifier, v: &Volume, count: usize, eps: f64, seed: u64) -> FdReport {
    let g = m.backward_input(v, 1.0).unwrap();
    let mut rng = stream(seed, &[105]);
    // Only voxels whose perturbed values stay inside [0, 1].
    let picks: Vec<usize> = std::iter::repeat_with(|| rng.gen_range(0..v.len()))
        .filter(|&i| v.data()[i] >= eps && v.data()[i] <= 1.0 - eps)
        .take(count)
        .collect();
    fd_check(&g, picks, eps, 1e-6, |idx, d| {
        let mut data = v.data().to_vec();
        data[idx] += d;
        m.forward(&Volume::new(v.dims(), data).unwrap()).unwrap()
    })
}

pub fn bce_fd(n: usize, seed: u64) -> FdReport {
    let mut rng = stream(seed, &[106]);
    let logits: Vec<f64> = (0..n).map(|_| rng.gen_range(-6.0..6.0)).collect();
    let labels: Vec<Label> = (0..n).map(|i| if i % 3 == 0 { Label::Male } else { Label::Female }).collect();
    let weights = [1.7, 0.6];
    let (_, g) = bce_loss(&logits, &labels, weights).unwrap();
    fd_check(&g, 0..n, 1e-5, 0.0, |idx, d| {
        let mut l = logits.clone();
        l[idx] += d;
        bce_loss(&l, &labels, weights).unwrap().0
    })
}

/// End-to-end total-loss gradient over every non-frozen offset.
pub fn objective_fd(v: &Volume, ensemble: &Ensemble, l: &FfdLattice, cfg: &AttackConfig) -> FdReport {
    let obj = objective(v, ensemble, l, cfg).unwrap();
    let free: Vec<usize> = (0..obj.grad.len()).filter(|&i| !l.frozen()[i / 3]).collect();
    fd_check(&obj.grad, free, 1e-3, 1e-6, |idx, d| {
        objective(v, ensemble, &with_offsets(l, idx, d), cfg).unwrap().total
    })
}

/// Random offsets on an attack lattice, respecting its frozen points.
pub fn attack_lattice(cfg: &AttackConfig, dims: Dims, scale: f64, seed: u64) -> FfdLattice {
    let mut l = cfg.lattice_for(dims).unwrap();
    let mut rng = stream(seed, &[107]);
    let mut vals: Vec<f64> = (0..l.offsets().len()).map(|_| rng.gen_range(-scale..scale)).collect();
    l.zero_frozen(&mut vals);
    l.set_offsets(&vals).unwrap();
    l
}
