use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::analytic::Rgb;

const MAGIC: &[u8; 4] = b"NRFW";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum WeightSource {
    Seeded {
        seed: u64,
    },
    /// One weight file per stage network.
    File {
        focused: PathBuf,
        coarse: PathBuf,
    },
}

/// Layer widths of the per-point MLP and the Ray-Mixer.
///
/// The MLP maps the `2C` aggregated feature (mean and variance across views)
/// through `hidden` to `3 + Dσ` outputs. The Ray-Mixer uses `W1: N_max×N_max`,
/// `W2: Dσ×Dσ`, `W3: 1×Dσ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkConfig {
    pub feature_channels: usize,
    pub hidden: Vec<usize>,
    pub density_features: usize,
    pub n_max: usize,
    #[serde(default = "default_coarse_scale")]
    pub coarse_channel_scale: f64,
    pub weights: WeightSource,
}

fn default_coarse_scale() -> f64 {
    0.25
}

impl NetworkConfig {
    pub fn validate(&self) -> Result<()> {
        if self.feature_channels == 0 || self.density_features == 0 || self.n_max == 0 {
            return Err(Error::Config("network widths must be at least 1".into()));
        }
        if self.hidden.contains(&0) {
            return Err(Error::Config("hidden widths must be at least 1".into()));
        }
        if !(self.coarse_channel_scale > 0.0 && self.coarse_channel_scale <= 1.0) {
            return Err(Error::Config("coarse_channel_scale must lie in (0, 1]".into()));
        }
        Ok(())
    }

    /// Widths of the coarse network: hidden widths and `Dσ` scaled and
    /// rounded down, never below 1. Input width is unchanged.
    pub fn coarse(&self) -> NetworkConfig {
        let scale = |w: usize| ((w as f64 * self.coarse_channel_scale).floor() as usize).max(1);
        let weights = match &self.weights {
            WeightSource::Seeded { seed } => WeightSource::Seeded { seed: seed.wrapping_add(0x9E37_79B9_7F4A_7C15) },
            WeightSource::File { coarse, .. } => WeightSource::File { focused: coarse.clone(), coarse: coarse.clone() },
        };
        NetworkConfig {
            feature_channels: self.feature_channels,
            hidden: self.hidden.iter().map(|&h| scale(h)).collect(),
            density_features: scale(self.density_features),
            n_max: self.n_max,
            coarse_channel_scale: 1.0,
            weights,
        }
    }

    /// `(rows, cols)` of every MLP layer, input to output.
    pub fn mlp_shapes(&self) -> Vec<(usize, usize)> {
        let mut widths = vec![2 * self.feature_channels];
        widths.extend(&self.hidden);
        widths.push(3 + self.density_features);
        widths.windows(2).map(|w| (w[1], w[0])).collect()
    }

    /// Every weight matrix shape in file order: MLP layers, then W1, W2, W3.
    pub fn layer_shapes(&self) -> Vec<(usize, usize)> {
        let mut s = self.mlp_shapes();
        s.push((self.n_max, self.n_max));
        s.push((self.density_features, self.density_features));
        s.push((1, self.density_features));
        s
    }
}

/// Instantiated weights. Immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    cfg: NetworkConfig,
    mlp: Vec<DMatrix<f64>>,
    w1: DMatrix<f64>,
    w2: DMatrix<f64>,
    w3: DMatrix<f64>,
}

impl Network {
    pub fn build(cfg: &NetworkConfig) -> Result<Self> {
        cfg.validate()?;
        match &cfg.weights {
            WeightSource::Seeded { seed } => Ok(Self::seeded(cfg, *seed)),
            WeightSource::File { focused, .. } => Self::load(cfg, focused),
        }
    }

    /// Uniform `±sqrt(3 / fan_in)` weights (unit variance per unit input),
    /// drawn layer by layer in file order.
    pub fn seeded(cfg: &NetworkConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut mats: Vec<DMatrix<f64>> = cfg
            .layer_shapes()
            .into_iter()
            .map(|(r, c)| {
                let a = (3.0 / c as f64).sqrt();
                let data: Vec<f64> = (0..r * c).map(|_| rng.gen_range(-a..=a)).collect();
                DMatrix::from_row_slice(r, c, &data)
            })
            .collect();
        Self::from_matrices(cfg, &mut mats).expect("seeded shapes match config")
    }

    /// Weights from explicit matrices in file order.
    pub fn from_parts(cfg: &NetworkConfig, mut mats: Vec<DMatrix<f64>>) -> Result<Self> {
        cfg.validate()?;
        Self::from_matrices(cfg, &mut mats)
    }

    fn from_matrices(cfg: &NetworkConfig, mats: &mut Vec<DMatrix<f64>>) -> Result<Self> {
        let shapes = cfg.layer_shapes();
        if mats.len() != shapes.len() {
            return Err(Error::WeightFile(format!("expected {} layers, got {}", shapes.len(), mats.len())));
        }
        for (i, (m, &(r, c))) in mats.iter().zip(&shapes).enumerate() {
            if m.shape() != (r, c) {
                return Err(Error::WeightFile(format!("layer {i}: expected {r}x{c}, got {}x{}", m.nrows(), m.ncols())));
            }
            if m.iter().any(|v| !v.is_finite()) {
                return Err(Error::WeightFile(format!("layer {i}: non-finite weight")));
            }
        }
        let w3 = mats.pop().unwrap();
        let w2 = mats.pop().unwrap();
        let w1 = mats.pop().unwrap();
        Ok(Self { cfg: cfg.clone(), mlp: std::mem::take(mats), w1, w2, w3 })
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.cfg
    }

    pub fn mlp_layers(&self) -> &[DMatrix<f64>] {
        &self.mlp
    }

    pub fn mixer_weights(&self) -> (&DMatrix<f64>, &DMatrix<f64>, &DMatrix<f64>) {
        (&self.w1, &self.w2, &self.w3)
    }

    fn all_layers(&self) -> impl Iterator<Item = &DMatrix<f64>> {
        self.mlp.iter().chain([&self.w1, &self.w2, &self.w3])
    }

    /// Binary layout, little-endian: `b"NRFW"`, `u32` version, `u32` layer
    /// count, `(u32 rows, u32 cols)` per layer, then each matrix row-major as
    /// `f32`.
    pub fn write_to(&self, mut w: impl Write) -> Result<()> {
        let layers: Vec<_> = self.all_layers().collect();
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&(layers.len() as u32).to_le_bytes())?;
        for m in &layers {
            w.write_all(&(m.nrows() as u32).to_le_bytes())?;
            w.write_all(&(m.ncols() as u32).to_le_bytes())?;
        }
        for m in &layers {
            for r in 0..m.nrows() {
                for c in 0..m.ncols() {
                    w.write_all(&(m[(r, c)] as f32).to_le_bytes())?;
                }
            }
        }
        Ok(())
    }

    pub fn read_from(cfg: &NetworkConfig, mut r: impl Read) -> Result<Self> {
        let mut buf = Vec::new();
        r.read_to_end(&mut buf)?;
        let mut cur = Cursor { buf: &buf, pos: 0 };
        if cur.take(4)? != MAGIC {
            return Err(Error::WeightFile("bad magic".into()));
        }
        let version = cur.u32()?;
        if version != VERSION {
            return Err(Error::WeightFile(format!("unsupported version {version}")));
        }
        let n = cur.u32()? as usize;
        let mut shapes = Vec::with_capacity(n.min(1024));
        for _ in 0..n {
            shapes.push((cur.u32()? as usize, cur.u32()? as usize));
        }
        let mut mats = Vec::with_capacity(n);
        for (rows, cols) in shapes {
            let mut data = Vec::with_capacity(rows * cols);
            for _ in 0..rows * cols {
                data.push(f32::from_le_bytes(cur.take(4)?.try_into().unwrap()) as f64);
            }
            mats.push(DMatrix::from_row_slice(rows, cols, &data));
        }
        if cur.pos != buf.len() {
            return Err(Error::WeightFile("trailing bytes".into()));
        }
        Self::from_parts(cfg, mats)
    }

    pub fn load(cfg: &NetworkConfig, path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path).map_err(|e| Error::WeightFile(format!("{}: {e}", path.display())))?;
        Self::read_from(cfg, std::io::BufReader::new(f))
    }
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end =
            self.pos.checked_add(n).filter(|&e| e <= self.buf.len()).ok_or_else(|| Error::WeightFile("truncated".into()))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

fn relu(x: f64) -> f64 {
    x.max(0.0)
}

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Element-wise mean and population variance over the `S` rows of an
/// `S × C` row-major matrix, concatenated.
pub fn aggregate_views(features: &[f64], views: usize, channels: usize) -> Result<Vec<f64>> {
    if views == 0 || features.len() != views * channels {
        return Err(Error::Domain(format!("expected {views}x{channels} feature matrix, got {} values", features.len())));
    }
    if features.iter().any(|v| !v.is_finite()) {
        return Err(Error::NumericInput("per-view features".into()));
    }
    let n = views as f64;
    let mut out = vec![0.0; 2 * channels];
    for row in features.chunks_exact(channels) {
        for (m, v) in out[..channels].iter_mut().zip(row) {
            *m += v;
        }
    }
    for m in &mut out[..channels] {
        *m /= n;
    }
    for row in features.chunks_exact(channels) {
        for c in 0..channels {
            let d = row[c] - out[c];
            out[channels + c] += d * d;
        }
    }
    for v in &mut out[channels..] {
        *v /= n;
    }
    Ok(out)
}

/// Per-point MLP: returns the logistic color and the unbounded density
/// feature.
pub fn eval_point_mlp(net: &Network, features: &[f64], views: usize) -> Result<(Rgb, Vec<f64>)> {
    let agg = aggregate_views(features, views, net.cfg.feature_channels)?;
    let mut x = DVector::from_vec(agg);
    let last = net.mlp.len() - 1;
    for (i, w) in net.mlp.iter().enumerate() {
        x = w * x;
        if i != last {
            x.apply(|v| *v = relu(*v));
        }
    }
    let color = [logistic(x[0]), logistic(x[1]), logistic(x[2])];
    Ok((color, x.as_slice()[3..].to_vec()))
}

/// Ray-Mixer over `N` points, `f_sigma` row-major `N × Dσ`.
///
/// Token mixing runs over valid positions only, so padded rows neither
/// receive nor contribute mixed features; their output is 0. The raw density
/// is returned without a non-negativity clamp.
pub fn ray_mixer_forward(net: &Network, f_sigma: &[f64], valid: &[bool]) -> Result<Vec<f64>> {
    let n = valid.len();
    let d = net.cfg.density_features;
    if n > net.cfg.n_max {
        return Err(Error::Capacity { what: "points per ray", got: n as u64, max: net.cfg.n_max as u64 });
    }
    if f_sigma.len() != n * d {
        return Err(Error::Domain(format!("expected {n}x{d} density features, got {} values", f_sigma.len())));
    }
    let idx: Vec<usize> = (0..n).filter(|&j| valid[j]).collect();
    let mut mixed = vec![0.0; n * d];
    for &j in &idx {
        for i in 0..d {
            let mut g = 0.0;
            for &k in &idx {
                g += net.w1[(j, k)] * f_sigma[k * d + i];
            }
            mixed[j * d + i] = f_sigma[j * d + i] + relu(g);
        }
    }
    let mut sigma = vec![0.0; n];
    for &j in &idx {
        let row = &mixed[j * d..(j + 1) * d];
        let mut out = 0.0;
        for a in 0..d {
            let mut g = 0.0;
            for (b, rv) in row.iter().enumerate() {
                g += net.w2[(a, b)] * rv;
            }
            out += net.w3[(0, a)] * (row[a] + relu(g));
        }
        sigma[j] = out;
    }
    Ok(sigma)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> NetworkConfig {
        NetworkConfig {
            feature_channels: 4,
            hidden: vec![8, 6],
            density_features: 5,
            n_max: 6,
            coarse_channel_scale: 0.25,
            weights: WeightSource::Seeded { seed: 3 },
        }
    }

    #[test]
    fn coarse_widths_round_down_with_floor_one() {
        let c = cfg().coarse();
        assert_eq!(c.hidden, vec![2, 1]);
        assert_eq!(c.density_features, 1);
        assert_eq!(c.feature_channels, 4);
    }

    #[test]
    fn single_view_has_zero_variance() {
        let agg = aggregate_views(&[1.0, -2.0, 3.0, 0.5], 1, 4).unwrap();
        assert_eq!(&agg[4..], &[0.0; 4]);
    }

    #[test]
    fn duplicated_views_match_single() {
        let net = Network::build(&cfg()).unwrap();
        let row = [0.3, -0.2, 0.9, 0.1];
        let one = eval_point_mlp(&net, &row, 1).unwrap();
        let two = eval_point_mlp(&net, &[row, row].concat(), 2).unwrap();
        assert_eq!(one, two);
    }

    #[test]
    fn non_finite_features_rejected() {
        let net = Network::build(&cfg()).unwrap();
        assert!(matches!(eval_point_mlp(&net, &[f64::NAN, 0.0, 0.0, 0.0], 1), Err(Error::NumericInput(_))));
    }

    #[test]
    fn zero_mixing_is_projection() {
        let c = cfg();
        let net = Network::build(&c).unwrap();
        let mut mats: Vec<_> = net.all_layers().cloned().collect();
        let n = mats.len();
        mats[n - 3].fill(0.0);
        mats[n - 2].fill(0.0);
        let net = Network::from_parts(&c, mats).unwrap();
        let f: Vec<f64> = (0..15).map(|i| (i as f64 * 0.37).sin()).collect();
        let sigma = ray_mixer_forward(&net, &f, &[true; 3]).unwrap();
        for j in 0..3 {
            let expect: f64 = (0..5).map(|a| net.w3[(0, a)] * f[j * 5 + a]).sum();
            assert_eq!(sigma[j], expect);
        }
    }

    #[test]
    fn padding_is_inert() {
        let net = Network::build(&cfg()).unwrap();
        let f: Vec<f64> = (0..15).map(|i| (i as f64 * 0.71).cos()).collect();
        let base = ray_mixer_forward(&net, &f, &[true; 3]).unwrap();
        let mut padded = f.clone();
        padded.extend([9.0; 10]);
        let out = ray_mixer_forward(&net, &padded, &[true, true, true, false, false]).unwrap();
        assert_eq!(&out[..3], &base[..]);
        assert_eq!(&out[3..], &[0.0, 0.0]);
        let none = ray_mixer_forward(&net, &padded, &[false; 5]).unwrap();
        assert!(none.iter().all(|&s| s == 0.0));
    }

    #[test]
    fn too_many_points() {
        let net = Network::build(&cfg()).unwrap();
        let err = ray_mixer_forward(&net, &[0.0; 35], &[true; 7]).unwrap_err();
        assert!(matches!(err, Error::Capacity { got: 7, max: 6, .. }));
    }

    #[test]
    fn weight_file_round_trip() {
        let c = cfg();
        let net = Network::build(&c).unwrap();
        let mut bytes = Vec::new();
        net.write_to(&mut bytes).unwrap();
        let back = Network::read_from(&c, bytes.as_slice()).unwrap();
        // f32 storage: compare after the same rounding
        for (a, b) in net.all_layers().zip(back.all_layers()) {
            assert_eq!(a.map(|v| v as f32 as f64), *b);
        }
        assert!(Network::read_from(&c, &bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(Network::read_from(&c, bad.as_slice()).is_err());
        assert!(Network::read_from(&c.coarse(), bytes.as_slice()).is_err());
    }
}
