//! Linear classifier: `logit = <w, x> + b`. Parameters: one weight per voxel
//! (x-fastest) followed by the bias.

pub(crate) fn forward(params: &[f64], input: &[f64]) -> f64 {
    let (w, b) = params.split_at(input.len());
    b[0] + w.iter().zip(input).map(|(w, x)| w * x).sum::<f64>()
}

pub(crate) fn backward(
    params: &[f64],
    input: &[f64],
    upstream: f64,
    want_input: bool,
    want_params: bool,
) -> (Option<Vec<f64>>, Option<Vec<f64>>) {
    let n = input.len();
    let gi = want_input.then(|| params[..n].iter().map(|w| upstream * w).collect());
    let gp = want_params.then(|| {
        let mut g: Vec<f64> = input.iter().map(|x| upstream * x).collect();
        g.push(upstream);
        g
    });
    (gi, gp)
}
