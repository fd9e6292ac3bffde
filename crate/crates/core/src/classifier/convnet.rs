//! Small 3D convnet: three stride-2 convolutions (1 -> 8 -> 16 -> 32 channels,
//! kernel 3, padding 1, ReLU), global average pooling, then an affine map to
//! one logit.
//!
//! Parameter layout, in order: for each conv layer the kernel
//! `[out][in][kz][ky][kx]` followed by the bias `[out]`; then the 32 head
//! weights and the head bias. Convolutions run as im2col + GEMM.

use crate::volume::Dims;

pub(crate) const CHANNELS: [usize; 4] = [1, 8, 16, 32];
const TAPS: usize = 27;

pub(crate) fn out_dims(d: Dims) -> Dims {
    d.map(|n| (n - 1) / 2 + 1)
}

fn count(d: Dims) -> usize {
    d[0] * d[1] * d[2]
}

pub(crate) fn param_count() -> usize {
    let convs: usize = (0..3)
        .map(|l| CHANNELS[l + 1] * CHANNELS[l] * TAPS + CHANNELS[l + 1])
        .sum();
    convs + CHANNELS[3] + 1
}

/// Offsets of each layer's kernel and bias inside the flat parameter vector.
struct Layout {
    kernel: [usize; 3],
    bias: [usize; 3],
    head: usize,
    head_bias: usize,
}

fn layout() -> Layout {
    let mut at = 0;
    let mut kernel = [0; 3];
    let mut bias = [0; 3];
    for l in 0..3 {
        kernel[l] = at;
        at += CHANNELS[l + 1] * CHANNELS[l] * TAPS;
        bias[l] = at;
        at += CHANNELS[l + 1];
    }
    Layout {
        kernel,
        bias,
        head: at,
        head_bias: at + CHANNELS[3],
    }
}

/// Extra scale on the first layer's He bound. Occupancy inputs have a
/// standard deviation near 0.2 rather than 1.
const INPUT_GAIN: f64 = 5.0;

/// He-uniform kernels, zero biases, zero head (initial logit 0).
pub(crate) fn init(rng: &mut impl rand::Rng) -> Vec<f64> {
    let lay = layout();
    let mut p = vec![0.0; param_count()];
    for l in 0..3 {
        let fan_in = (CHANNELS[l] * TAPS) as f64;
        let gain = if l == 0 { INPUT_GAIN } else { 1.0 };
        let bound = gain * (6.0 / fan_in).sqrt();
        let n = CHANNELS[l + 1] * CHANNELS[l] * TAPS;
        for w in &mut p[lay.kernel[l]..lay.kernel[l] + n] {
            *w = rng.gen_range(-bound..bound);
        }
    }
    p
}

/// Activations kept from the forward pass.
pub(crate) struct Cache {
    dims: [Dims; 4],
    cols: [Vec<f64>; 3],
    /// Post-ReLU activations of each conv layer, `[channel][voxel]`.
    act: [Vec<f64>; 3],
    pooled: Vec<f64>,
}

fn im2col(input: &[f64], channels: usize, d: Dims) -> Vec<f64> {
    let od = out_dims(d);
    let o = count(od);
    let mut cols = vec![0.0; channels * TAPS * o];
    for c in 0..channels {
        let src = &input[c * count(d)..(c + 1) * count(d)];
        for kz in 0..3 {
            for ky in 0..3 {
                for kx in 0..3 {
                    let row = c * TAPS + kz * 9 + ky * 3 + kx;
                    let dst = &mut cols[row * o..(row + 1) * o];
                    for oz in 0..od[2] {
                        let iz = (2 * oz + kz) as isize - 1;
                        if iz < 0 || iz >= d[2] as isize {
                            continue;
                        }
                        for oy in 0..od[1] {
                            let iy = (2 * oy + ky) as isize - 1;
                            if iy < 0 || iy >= d[1] as isize {
                                continue;
                            }
                            let base = d[0] * (iy as usize + d[1] * iz as usize);
                            let drow = od[0] * (oy + od[1] * oz);
                            for ox in 0..od[0] {
                                let ix = (2 * ox + kx) as isize - 1;
                                if ix >= 0 && ix < d[0] as isize {
                                    dst[drow + ox] = src[base + ix as usize];
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    cols
}

fn col2im(cols: &[f64], channels: usize, d: Dims) -> Vec<f64> {
    let od = out_dims(d);
    let o = count(od);
    let mut out = vec![0.0; channels * count(d)];
    for c in 0..channels {
        let dst = &mut out[c * count(d)..(c + 1) * count(d)];
        for kz in 0..3 {
            for ky in 0..3 {
                for kx in 0..3 {
                    let row = c * TAPS + kz * 9 + ky * 3 + kx;
                    let src = &cols[row * o..(row + 1) * o];
                    for oz in 0..od[2] {
                        let iz = (2 * oz + kz) as isize - 1;
                        if iz < 0 || iz >= d[2] as isize {
                            continue;
                        }
                        for oy in 0..od[1] {
                            let iy = (2 * oy + ky) as isize - 1;
                            if iy < 0 || iy >= d[1] as isize {
                                continue;
                            }
                            let base = d[0] * (iy as usize + d[1] * iz as usize);
                            let srow = od[0] * (oy + od[1] * oz);
                            for ox in 0..od[0] {
                                let ix = (2 * ox + kx) as isize - 1;
                                if ix >= 0 && ix < d[0] as isize {
                                    dst[base + ix as usize] += src[srow + ox];
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

/// `c = alpha * op(a) * op(b) + beta * c` on row-major buffers.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    a_t: bool,
    b: &[f64],
    b_t: bool,
    beta: f64,
    c: &mut [f64],
) {
    assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    let (rsa, csa) = if a_t { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if b_t { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: buffer extents are checked above; strides describe row-major
    // m x k, k x n and m x n matrices (or their transposes) within them.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

pub(crate) fn forward(params: &[f64], input: &[f64], dims: Dims) -> (f64, Cache) {
    let lay = layout();
    let mut d = [dims; 4];
    let mut cols: [Vec<f64>; 3] = Default::default();
    let mut act: [Vec<f64>; 3] = Default::default();
    for l in 0..3 {
        let (cin, cout) = (CHANNELS[l], CHANNELS[l + 1]);
        let x = if l == 0 { input } else { &act[l - 1][..] };
        let c = im2col(x, cin, d[l]);
        d[l + 1] = out_dims(d[l]);
        let o = count(d[l + 1]);
        let mut y = vec![0.0; cout * o];
        for (co, row) in y.chunks_exact_mut(o).enumerate() {
            row.fill(params[lay.bias[l] + co]);
        }
        let w = &params[lay.kernel[l]..lay.kernel[l] + cout * cin * TAPS];
        gemm(cout, cin * TAPS, o, w, false, &c, false, 1.0, &mut y);
        for v in &mut y {
            *v = v.max(0.0);
        }
        cols[l] = c;
        act[l] = y;
    }
    let o3 = count(d[3]);
    let pooled: Vec<f64> = act[2]
        .chunks_exact(o3)
        .map(|ch| ch.iter().sum::<f64>() / o3 as f64)
        .collect();
    let head = &params[lay.head..lay.head + CHANNELS[3]];
    let logit = params[lay.head_bias] + head.iter().zip(&pooled).map(|(w, x)| w * x).sum::<f64>();
    (
        logit,
        Cache {
            dims: d,
            cols,
            act,
            pooled,
        },
    )
}

/// Reverse pass for an upstream gradient on the logit. Returns the input
/// gradient and/or the parameter gradient as requested.
pub(crate) fn backward(
    params: &[f64],
    cache: &Cache,
    upstream: f64,
    want_input: bool,
    want_params: bool,
) -> (Option<Vec<f64>>, Option<Vec<f64>>) {
    let lay = layout();
    let mut pgrad = want_params.then(|| vec![0.0; params.len()]);
    let head = &params[lay.head..lay.head + CHANNELS[3]];
    if let Some(g) = pgrad.as_mut() {
        for (c, &x) in cache.pooled.iter().enumerate() {
            g[lay.head + c] = upstream * x;
        }
        g[lay.head_bias] = upstream;
    }
    let o3 = count(cache.dims[3]);
    // d(loss)/d(pre-activation) of layer 3; ReLU mask applied via act > 0.
    let mut delta = vec![0.0; CHANNELS[3] * o3];
    for (c, row) in delta.chunks_exact_mut(o3).enumerate() {
        let g = upstream * head[c] / o3 as f64;
        for (d, &a) in row.iter_mut().zip(&cache.act[2][c * o3..(c + 1) * o3]) {
            *d = if a > 0.0 { g } else { 0.0 };
        }
    }
    let mut input_grad = None;
    for l in (0..3).rev() {
        let (cin, cout) = (CHANNELS[l], CHANNELS[l + 1]);
        let o = count(cache.dims[l + 1]);
        let k = cin * TAPS;
        if let Some(g) = pgrad.as_mut() {
            gemm(
                cout,
                o,
                k,
                &delta,
                false,
                &cache.cols[l],
                true,
                0.0,
                &mut g[lay.kernel[l]..lay.kernel[l] + cout * k],
            );
            for (co, row) in delta.chunks_exact(o).enumerate() {
                g[lay.bias[l] + co] = row.iter().sum();
            }
        }
        if l == 0 && !want_input {
            break;
        }
        let w = &params[lay.kernel[l]..lay.kernel[l] + cout * k];
        let mut dcols = vec![0.0; k * o];
        gemm(k, cout, o, w, true, &delta, false, 0.0, &mut dcols);
        let mut dx = col2im(&dcols, cin, cache.dims[l]);
        if l == 0 {
            input_grad = Some(dx);
        } else {
            for (d, &a) in dx.iter_mut().zip(&cache.act[l - 1]) {
                if a <= 0.0 {
                    *d = 0.0;
                }
            }
            delta = dx;
        }
    }
    (input_grad, pgrad)
}
