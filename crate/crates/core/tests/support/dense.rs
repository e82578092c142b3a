//! Dense-matrix restatements of the per-point MLP and the Ray-Mixer, written
//! against whole matrices rather than the loops in the library.

use nalgebra::{DMatrix, DVector};
use nerfsim_core::field::Network;

fn relu(m: &DMatrix<f64>) -> DMatrix<f64> {
    m.map(|v| v.max(0.0))
}

/// `(color, density feature)` for an `S × C` row-major feature block.
pub fn mlp(net: &Network, features: &[f64], views: usize) -> ([f64; 3], Vec<f64>) {
    let c = features.len() / views;
    let x = DMatrix::from_row_slice(views, c, features);
    let ones = DMatrix::from_element(1, views, 1.0 / views as f64);
    let mean = &ones * &x;
    let centered = DMatrix::from_fn(views, c, |i, j| x[(i, j)] - mean[(0, j)]);
    let var = &ones * centered.component_mul(&centered);
    let mut h = DVector::from_iterator(2 * c, mean.iter().chain(var.iter()).copied());
    let layers = net.mlp_layers();
    for (i, w) in layers.iter().enumerate() {
        h = w * h;
        if i + 1 < layers.len() {
            h = h.map(|v| v.max(0.0));
        }
    }
    let sq = |v: f64| 1.0 / (1.0 + (-v).exp());
    ([sq(h[0]), sq(h[1]), sq(h[2])], h.as_slice()[3..].to_vec())
}

/// Densities for an `N × Dσ` row-major block; padded rows are dropped from
/// both sides of the token mix and get 0.
pub fn mixer(net: &Network, f_sigma: &[f64], valid: &[bool]) -> Vec<f64> {
    let n = valid.len();
    let d = net.config().density_features;
    let keep: Vec<usize> = (0..n).filter(|&j| valid[j]).collect();
    let (w1, w2, w3) = net.mixer_weights();
    let f = DMatrix::from_fn(keep.len(), d, |r, c| f_sigma[keep[r] * d + c]);
    let w1v = DMatrix::from_fn(keep.len(), keep.len(), |r, c| w1[(keep[r], keep[c])]);
    let tokens = &f + relu(&(&w1v * &f));
    let channels = &tokens + relu(&(&tokens * w2.transpose()));
    let sigma = channels * w3.transpose();
    let mut out = vec![0.0; n];
    for (r, &j) in keep.iter().enumerate() {
        out[j] = sigma[(r, 0)];
    }
    out
}

/// Relative difference with a 1e-9 floor on the scale.
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-9)
}
