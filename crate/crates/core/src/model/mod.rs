//! Per-pixel probabilistic classifier with Monte-Carlo dropout.
//!
//! Each pixel is classified from the `(2q+1) x (2q+1)` patch of features
//! around it by a two-hidden-layer tanh network. Dropout acts on both hidden
//! layers; with dropout disabled the network is deterministic.

mod checkpoint;

use crate::error::{Error, Result};
use crate::raster::Raster;
use crate::rng;
use crate::world::{Frame, FEATURE_CHANNELS};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

/// Features in `[0, 1]` are centred and stretched so that class colour
/// differences of a few hundredths are not lost next to the biases.
const INPUT_SCALE: f64 = 4.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub patch_radius: usize,
    pub channels: usize,
    pub hidden: [usize; 2],
    pub classes: usize,
}

impl Architecture {
    pub fn new(patch_radius: usize, hidden: [usize; 2], classes: usize) -> Self {
        Self {
            patch_radius,
            channels: FEATURE_CHANNELS,
            hidden,
            classes,
        }
    }

    pub fn input_dim(&self) -> usize {
        let side = 2 * self.patch_radius + 1;
        side * side * self.channels
    }

    pub fn param_count(&self) -> usize {
        let [h1, h2] = self.hidden;
        h1 * self.input_dim() + h1 + h2 * h1 + h2 + self.classes * h2 + self.classes
    }

    fn offsets(&self) -> Offsets {
        let d = self.input_dim();
        let [h1, h2] = self.hidden;
        let w1 = 0;
        let b1 = w1 + h1 * d;
        let w2 = b1 + h1;
        let b2 = w2 + h2 * h1;
        let w3 = b2 + h2;
        let b3 = w3 + self.classes * h2;
        Offsets { w1, b1, w2, b2, w3, b3 }
    }
}

#[derive(Clone, Copy, Debug)]
struct Offsets {
    w1: usize,
    b1: usize,
    w2: usize,
    b2: usize,
    w3: usize,
    b3: usize,
}

/// Per-pixel class probabilities plus their argmax labels (1-based, ties to
/// the lowest class id).
#[derive(Clone, Debug, PartialEq)]
pub struct PredictionTensor {
    width: usize,
    height: usize,
    classes: usize,
    probs: Vec<f64>,
    ml_labels: Raster<u8>,
}

impl PredictionTensor {
    /// Pixel-major probabilities, `classes` values per pixel.
    pub fn from_probs(width: usize, height: usize, classes: usize, probs: Vec<f64>) -> Self {
        assert_eq!(probs.len(), width * height * classes);
        let labels = probs.chunks_exact(classes).map(argmax).collect();
        Self {
            width,
            height,
            classes,
            probs,
            ml_labels: Raster::from_vec(width, height, labels),
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    #[inline]
    pub fn probs_at(&self, m: usize, n: usize) -> &[f64] {
        let i = (n * self.width + m) * self.classes;
        &self.probs[i..i + self.classes]
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn ml_labels(&self) -> &Raster<u8> {
        &self.ml_labels
    }
}

/// Index (1-based) of the largest value; the first maximum wins.
pub(crate) fn argmax(values: &[f64]) -> u8 {
    let mut best = 0;
    for (k, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = k;
        }
    }
    best as u8 + 1
}

/// Per-pixel model uncertainty in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct UncertaintyImage(Raster<f64>);

impl UncertaintyImage {
    pub fn new(values: Raster<f64>) -> Result<Self> {
        if values.as_slice().iter().any(|u| !(0.0..=1.0).contains(u)) {
            return Err(Error::Domain("uncertainty outside [0, 1]".into()));
        }
        Ok(Self(values))
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        Self(Raster::filled(width, height, value.clamp(0.0, 1.0)))
    }

    #[inline]
    pub fn at(&self, m: usize, n: usize) -> f64 {
        self.0.at(m, n)
    }

    pub fn raster(&self) -> &Raster<f64> {
        &self.0
    }

    pub fn width(&self) -> usize {
        self.0.width()
    }

    pub fn height(&self) -> usize {
        self.0.height()
    }
}

/// Entropy of `probs` divided by `ln K`, clamped to `[0, 1]`.
pub fn normalized_entropy(probs: &[f64]) -> f64 {
    if probs.len() < 2 {
        return 0.0;
    }
    let h: f64 = probs
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| -p * p.ln())
        .sum();
    (h / (probs.len() as f64).ln()).clamp(0.0, 1.0)
}

/// Scratch buffers for one forward/backward pass.
#[derive(Clone, Debug)]
pub(crate) struct Workspace {
    pub input: Vec<f64>,
    pub t1: Vec<f64>,
    pub h1: Vec<f64>,
    pub t2: Vec<f64>,
    pub h2: Vec<f64>,
    pub logits: Vec<f64>,
    pub probs: Vec<f64>,
    pub mask1: Vec<f64>,
    pub mask2: Vec<f64>,
    da: Vec<f64>,
    dh: Vec<f64>,
}

impl Workspace {
    pub fn new(arch: &Architecture) -> Self {
        let [h1, h2] = arch.hidden;
        Self {
            input: vec![0.0; arch.input_dim()],
            t1: vec![0.0; h1],
            h1: vec![0.0; h1],
            t2: vec![0.0; h2],
            h2: vec![0.0; h2],
            logits: vec![0.0; arch.classes],
            probs: vec![0.0; arch.classes],
            mask1: vec![1.0; h1],
            mask2: vec![1.0; h2],
            da: vec![0.0; h1.max(h2)],
            dh: vec![0.0; h1.max(h2)],
        }
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn softmax_into(logits: &[f64], out: &mut [f64]) {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (o, &z) in out.iter_mut().zip(logits) {
        *o = (z - max).exp();
        sum += *o;
    }
    for o in out.iter_mut() {
        *o /= sum;
    }
}

/// `ln sum exp(logits)`.
pub(crate) fn log_sum_exp(logits: &[f64]) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln()
}

#[derive(Clone, Debug, PartialEq)]
pub struct SurrogateModel {
    arch: Architecture,
    dropout: f64,
    seed: u64,
    params: Vec<f64>,
}

impl SurrogateModel {
    /// Glorot-uniform weights, zero biases.
    pub fn new(arch: Architecture, dropout: f64, seed: u64) -> Result<Self> {
        if !(0.0..1.0).contains(&dropout) {
            return Err(Error::Config(format!("dropout {dropout} outside [0, 1)")));
        }
        if arch.classes == 0 || arch.hidden.contains(&0) {
            return Err(Error::Config("empty network layer".into()));
        }
        let mut params = vec![0.0; arch.param_count()];
        let o = arch.offsets();
        let [h1, h2] = arch.hidden;
        let d = arch.input_dim();
        let mut rng = rng::rng(seed);
        let mut fill = |slice: &mut [f64], fan_in: usize, fan_out: usize| {
            let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
            for w in slice {
                *w = a * (2.0 * rng.random::<f64>() - 1.0);
            }
        };
        fill(&mut params[o.w1..o.b1], d, h1);
        fill(&mut params[o.w2..o.b2], h1, h2);
        fill(&mut params[o.w3..o.b3], h2, arch.classes);
        Ok(Self {
            arch,
            dropout,
            seed,
            params,
        })
    }

    pub fn from_params(arch: Architecture, dropout: f64, seed: u64, params: Vec<f64>) -> Result<Self> {
        if params.len() != arch.param_count() {
            return Err(Error::Domain(format!(
                "expected {} parameters, got {}",
                arch.param_count(),
                params.len()
            )));
        }
        if !(0.0..1.0).contains(&dropout) {
            return Err(Error::Config(format!("dropout {dropout} outside [0, 1)")));
        }
        Ok(Self {
            arch,
            dropout,
            seed,
            params,
        })
    }

    /// Same model with every output-layer weight and bias set to zero, which
    /// predicts the uniform distribution everywhere.
    pub fn with_zero_output_layer(mut self) -> Self {
        let o = self.arch.offsets();
        self.params[o.w3..].fill(0.0);
        self
    }

    pub fn architecture(&self) -> &Architecture {
        &self.arch
    }

    pub fn classes(&self) -> usize {
        self.arch.classes
    }

    pub fn dropout(&self) -> f64 {
        self.dropout
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn output_bias_mut(&mut self) -> &mut [f64] {
        let o = self.arch.offsets();
        &mut self.params[o.b3..]
    }

    pub fn squared_norm(&self) -> f64 {
        self.params.iter().map(|p| p * p).sum()
    }

    fn check_finite(&self) -> Result<()> {
        if self.params.iter().all(|p| p.is_finite()) {
            Ok(())
        } else {
            Err(Error::NonFiniteParameters)
        }
    }

    fn check_frame(&self, frame: &Frame) -> Result<()> {
        if frame.features().iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::Domain(format!(
                "frame {} has features outside [0, 1]",
                frame.id()
            )));
        }
        Ok(())
    }

    /// Writes the centred feature patch around `(m, n)` into `out`, clamping
    /// at the image border.
    pub(crate) fn gather_patch(&self, frame: &Frame, m: usize, n: usize, out: &mut [f64]) {
        let q = self.arch.patch_radius as isize;
        let (w, h) = (frame.width() as isize, frame.height() as isize);
        let mut i = 0;
        for dn in -q..=q {
            let y = (n as isize + dn).clamp(0, h - 1) as usize;
            for dm in -q..=q {
                let x = (m as isize + dm).clamp(0, w - 1) as usize;
                for &v in frame.feature(x, y) {
                    out[i] = INPUT_SCALE * (v - 0.5);
                    i += 1;
                }
            }
        }
    }

    /// First layer for `ws.input`: fills `ws.t1 = tanh(W1 x + b1)`.
    #[inline]
    fn layer1(&self, ws: &mut Workspace) {
        let o = self.arch.offsets();
        let d = self.arch.input_dim();
        for j in 0..self.arch.hidden[0] {
            let row = &self.params[o.w1 + j * d..o.w1 + (j + 1) * d];
            ws.t1[j] = (dot(row, &ws.input) + self.params[o.b1 + j]).tanh();
        }
    }

    /// Layers two and three from `ws.t1` using the current masks.
    #[inline]
    fn layers23(&self, ws: &mut Workspace) {
        let o = self.arch.offsets();
        let [h1, h2] = self.arch.hidden;
        for j in 0..h1 {
            ws.h1[j] = ws.t1[j] * ws.mask1[j];
        }
        for j in 0..h2 {
            let row = &self.params[o.w2 + j * h1..o.w2 + (j + 1) * h1];
            ws.t2[j] = (dot(row, &ws.h1) + self.params[o.b2 + j]).tanh();
            ws.h2[j] = ws.t2[j] * ws.mask2[j];
        }
        for k in 0..self.arch.classes {
            let row = &self.params[o.w3 + k * h2..o.w3 + (k + 1) * h2];
            ws.logits[k] = dot(row, &ws.h2) + self.params[o.b3 + k];
        }
        softmax_into(&ws.logits, &mut ws.probs);
    }

    /// Forward pass on `ws.input` with the masks in `ws`.
    pub(crate) fn forward(&self, ws: &mut Workspace) {
        self.layer1(ws);
        self.layers23(ws);
    }

    /// Draws inverted-dropout masks into `ws`.
    pub(crate) fn draw_masks(&self, rng: &mut rng::Rng, ws: &mut Workspace) {
        let p = self.dropout;
        if p == 0.0 {
            ws.mask1.fill(1.0);
            ws.mask2.fill(1.0);
            return;
        }
        let keep = 1.0 / (1.0 - p);
        for v in ws.mask1.iter_mut().chain(ws.mask2.iter_mut()) {
            *v = if rng.random::<f64>() < p { 0.0 } else { keep };
        }
    }

    /// Accumulates into `grad` the gradient of `sum_k dlogits[k] * z_k`
    /// for the pass currently held in `ws`.
    pub(crate) fn backward(&self, ws: &mut Workspace, dlogits: &[f64], grad: &mut [f64]) {
        let o = self.arch.offsets();
        let d = self.arch.input_dim();
        let [h1, h2] = self.arch.hidden;
        let k = self.arch.classes;
        for c in 0..k {
            let g = dlogits[c];
            grad[o.b3 + c] += g;
            let row = &mut grad[o.w3 + c * h2..o.w3 + (c + 1) * h2];
            for (r, &h) in row.iter_mut().zip(&ws.h2) {
                *r += g * h;
            }
        }
        // dL/da2
        for j in 0..h2 {
            let mut dh = 0.0;
            for c in 0..k {
                dh += self.params[o.w3 + c * h2 + j] * dlogits[c];
            }
            ws.da[j] = dh * ws.mask2[j] * (1.0 - ws.t2[j] * ws.t2[j]);
        }
        for j in 0..h2 {
            let g = ws.da[j];
            grad[o.b2 + j] += g;
            let row = &mut grad[o.w2 + j * h1..o.w2 + (j + 1) * h1];
            for (r, &h) in row.iter_mut().zip(&ws.h1) {
                *r += g * h;
            }
        }
        for i in 0..h1 {
            let mut dh = 0.0;
            for j in 0..h2 {
                dh += self.params[o.w2 + j * h1 + i] * ws.da[j];
            }
            ws.dh[i] = dh * ws.mask1[i] * (1.0 - ws.t1[i] * ws.t1[i]);
        }
        for i in 0..h1 {
            let g = ws.dh[i];
            grad[o.b1 + i] += g;
            let row = &mut grad[o.w1 + i * d..o.w1 + (i + 1) * d];
            for (r, &x) in row.iter_mut().zip(&ws.input) {
                *r += g * x;
            }
        }
    }

    /// Deterministic prediction (dropout off).
    pub fn predict(&self, frame: &Frame) -> Result<PredictionTensor> {
        self.check_finite()?;
        self.check_frame(frame)?;
        let (w, h, k) = (frame.width(), frame.height(), self.arch.classes);
        let mut ws = Workspace::new(&self.arch);
        let mut probs = Vec::with_capacity(w * h * k);
        for n in 0..h {
            for m in 0..w {
                self.gather_patch(frame, m, n, &mut ws.input);
                self.forward(&mut ws);
                probs.extend_from_slice(&ws.probs);
            }
        }
        Ok(PredictionTensor::from_probs(w, h, k, probs))
    }

    /// Mean of `samples` stochastic passes and its normalized predictive
    /// entropy.
    pub fn mc_predict(
        &self,
        frame: &Frame,
        samples: usize,
        seed: u64,
    ) -> Result<(PredictionTensor, UncertaintyImage)> {
        if samples == 0 {
            return Err(Error::Config("Monte-Carlo sample count must be at least 1".into()));
        }
        self.check_finite()?;
        self.check_frame(frame)?;
        let (w, h, k) = (frame.width(), frame.height(), self.arch.classes);
        let mut ws = Workspace::new(&self.arch);
        let mut rng = rng::rng(seed);
        let mut probs = Vec::with_capacity(w * h * k);
        let mut unc = Vec::with_capacity(w * h);
        let mut acc = vec![0.0; k];
        for n in 0..h {
            for m in 0..w {
                self.gather_patch(frame, m, n, &mut ws.input);
                self.layer1(&mut ws);
                acc.fill(0.0);
                for _ in 0..samples {
                    self.draw_masks(&mut rng, &mut ws);
                    self.layers23(&mut ws);
                    for (a, p) in acc.iter_mut().zip(&ws.probs) {
                        *a += p;
                    }
                }
                let start = probs.len();
                probs.extend(acc.iter().map(|a| a / samples as f64));
                unc.push(normalized_entropy(&probs[start..]));
            }
        }
        Ok((
            PredictionTensor::from_probs(w, h, k, probs),
            UncertaintyImage(Raster::from_vec(w, h, unc)),
        ))
    }
}

/// Monte-Carlo inference settings shared by mapping and rebuilds, so a frame
/// always sees the same dropout draws for a given campaign seed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct McSettings {
    pub samples: usize,
    pub seed: u64,
}

impl McSettings {
    pub fn infer(&self, model: &SurrogateModel, frame: &Frame) -> Result<(PredictionTensor, UncertaintyImage)> {
        model.mc_predict(frame, self.samples, rng::mix3(self.seed, rng::stream::MC_DROPOUT, frame.id()))
    }
}
