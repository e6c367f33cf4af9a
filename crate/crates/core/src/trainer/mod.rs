//! Masked semi-supervised cross-entropy training of the surrogate model.

mod schedule;

pub use schedule::OneCycle;

use crate::error::{Error, Result};
use crate::labels::{LabelEntry, Provenance, SparseLabelImage};
use crate::metrics::ConfusionMatrix;
use crate::model::{argmax, log_sum_exp, SurrogateModel, Workspace};
use crate::rng::{self, stream};
use crate::world::Frame;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use std::io::Write;

/// A frame with its sparse labels.
pub type Example<'a> = (&'a Frame, &'a SparseLabelImage);

/// Human- and pseudo-labelled frames.
#[derive(Clone, Debug, Default)]
pub struct TrainingSet<'a> {
    human: Vec<Example<'a>>,
    pseudo: Vec<Example<'a>>,
}

impl<'a> TrainingSet<'a> {
    pub fn new(human: Vec<Example<'a>>, pseudo: Vec<Example<'a>>) -> Result<Self> {
        for (list, provenance) in [(&human, Provenance::Human), (&pseudo, Provenance::Pseudo)] {
            for (frame, labels) in list {
                if labels.provenance() != provenance {
                    return Err(Error::Domain(format!(
                        "frame {} labels are {} but listed as {provenance}",
                        frame.id(),
                        labels.provenance()
                    )));
                }
                if (labels.width(), labels.height()) != (frame.width(), frame.height())
                    || labels.frame_id() != frame.id()
                {
                    return Err(Error::Domain(format!("labels do not belong to frame {}", frame.id())));
                }
            }
        }
        Ok(Self { human, pseudo })
    }

    pub fn human(&self) -> &[Example<'a>] {
        &self.human
    }

    pub fn pseudo(&self) -> &[Example<'a>] {
        &self.pseudo
    }

    /// `N_l`
    pub fn n_human(&self) -> usize {
        self.human.len()
    }

    /// `N_u`
    pub fn n_pseudo(&self) -> usize {
        self.pseudo.len()
    }

    pub fn is_empty(&self) -> bool {
        self.human.is_empty() && self.pseudo.is_empty()
    }
}

/// Per-image label budgets dividing each loss term.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LossNormalization {
    pub human_alpha: usize,
    pub pseudo_alpha: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ForwardMode {
    Deterministic,
    /// Dropout masks drawn per pixel from `(seed, frame id, pixel)`.
    Dropout { seed: u64 },
}

/// `(1 - p) / (2 N)` with `N = N_l + N_u`.
pub fn weight_decay(dropout: f64, n_human: usize, n_pseudo: usize) -> Result<f64> {
    let n = n_human + n_pseudo;
    if n == 0 {
        return Err(Error::Domain("weight decay needs at least one training image".into()));
    }
    Ok((1.0 - dropout) / (2.0 * n as f64))
}

/// Masked cross-entropy over both label lists plus `lambda ‖θ‖²`, and its
/// exact gradient. Each list's sum is divided by its frame count times its
/// α; void pixels contribute nothing.
pub fn masked_loss(
    model: &SurrogateModel,
    human: &[Example<'_>],
    pseudo: &[Example<'_>],
    norm: LossNormalization,
    lambda: f64,
    mode: ForwardMode,
) -> Result<(f64, Vec<f64>)> {
    if norm.human_alpha == 0 || norm.pseudo_alpha == 0 {
        return Err(Error::Domain("label budget α must be at least 1".into()));
    }
    let params = model.params();
    let mut grad: Vec<f64> = params.iter().map(|p| 2.0 * lambda * p).collect();
    let mut loss = lambda * model.squared_norm();
    let mut ws = Workspace::new(model.architecture());
    let mut dlogits = vec![0.0; model.classes()];
    for (list, alpha) in [(human, norm.human_alpha), (pseudo, norm.pseudo_alpha)] {
        if list.is_empty() {
            continue;
        }
        let scale = 1.0 / (list.len() * alpha) as f64;
        for (frame, labels) in list {
            let mut frame_loss = 0.0;
            for entry in labels.entries() {
                frame_loss += pixel_step(model, frame, entry, mode, scale, &mut ws, &mut dlogits, &mut grad);
            }
            if !frame_loss.is_finite() {
                return Err(Error::NonFiniteLoss { frame_id: frame.id() });
            }
            loss += scale * frame_loss;
        }
    }
    if !loss.is_finite() {
        return Err(Error::NonFiniteParameters);
    }
    Ok((loss, grad))
}

/// NLL of one labelled pixel; accumulates `scale` times its gradient.
#[allow(clippy::too_many_arguments)]
#[inline]
fn pixel_step(
    model: &SurrogateModel,
    frame: &Frame,
    entry: &LabelEntry,
    mode: ForwardMode,
    scale: f64,
    ws: &mut Workspace,
    dlogits: &mut [f64],
    grad: &mut [f64],
) -> f64 {
    let (m, n) = (entry.m as usize, entry.n as usize);
    model.gather_patch(frame, m, n, &mut ws.input);
    match mode {
        ForwardMode::Deterministic => {
            ws.mask1.fill(1.0);
            ws.mask2.fill(1.0);
        }
        ForwardMode::Dropout { seed } => {
            let pixel = (n * frame.width() + m) as u64;
            let mut r = rng::rng(rng::mix3(seed, frame.id(), pixel));
            model.draw_masks(&mut r, ws);
        }
    }
    model.forward(ws);
    let y = entry.class as usize - 1;
    let nll = log_sum_exp(&ws.logits) - ws.logits[y];
    for (k, d) in dlogits.iter_mut().enumerate() {
        *d = scale * (ws.probs[k] - if k == y { 1.0 } else { 0.0 });
    }
    model.backward(ws, dlogits, grad);
    nll
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub peak_lr: f64,
    /// Length of the one-cycle schedule; later epochs use its final rate.
    pub schedule_epochs: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub batch_size: usize,
    pub momentum: f64,
    /// Share of human-labelled pixels held out for early stopping.
    pub val_fraction: f64,
    /// Overrides the dropout-derived weight decay when set.
    pub weight_decay: Option<f64>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            peak_lr: 0.1,
            schedule_epochs: 60,
            max_epochs: 200,
            patience: 10,
            batch_size: 8,
            momentum: 0.9,
            val_fraction: 0.1,
            weight_decay: None,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be at least 1".into()));
        }
        if !(0.0..=0.5).contains(&self.val_fraction) {
            return Err(Error::Config("validation fraction must lie in [0, 0.5]".into()));
        }
        if !(self.peak_lr > 0.0) || !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config("need a positive learning rate and momentum in [0, 1)".into()));
        }
        if matches!(self.weight_decay, Some(l) if !(l >= 0.0)) {
            return Err(Error::Config("weight decay must be non-negative".into()));
        }
        if self.max_epochs == 0 || self.schedule_epochs == 0 {
            return Err(Error::Config("epoch counts must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_miou: Option<f64>,
    pub lr: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainReport {
    pub epochs: Vec<EpochRecord>,
    /// Epoch whose parameters were kept (1-based).
    pub best_epoch: usize,
    pub stopped_epoch: usize,
    pub validation_pixels: usize,
}

impl TrainReport {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["epoch", "train_loss", "val_miou", "lr"])?;
        for e in &self.epochs {
            w.write_record([
                e.epoch.to_string(),
                format!("{:.8}", e.train_loss),
                e.val_miou.map(|v| format!("{v:.6}")).unwrap_or_default(),
                format!("{:.8}", e.lr),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Held-out human pixels and the remaining training labels.
struct Split {
    human: Vec<SparseLabelImage>,
    validation: Vec<(usize, LabelEntry)>,
}

fn split_validation(set: &TrainingSet<'_>, fraction: f64, seed: u64) -> Result<Split> {
    let all: Vec<(usize, usize)> = set
        .human
        .iter()
        .enumerate()
        .flat_map(|(f, (_, l))| (0..l.len()).map(move |e| (f, e)))
        .collect();
    let held = (fraction * all.len() as f64).floor() as usize;
    let mut take = vec![false; all.len()];
    for i in rand::seq::index::sample(&mut rng::rng(seed), all.len(), held) {
        take[i] = true;
    }
    let mut keep: Vec<Vec<LabelEntry>> = vec![Vec::new(); set.human.len()];
    let mut validation = Vec::with_capacity(held);
    for (i, &(f, e)) in all.iter().enumerate() {
        let entry = set.human[f].1.entries()[e];
        if take[i] {
            validation.push((f, entry));
        } else {
            keep[f].push(entry);
        }
    }
    let human = set
        .human
        .iter()
        .zip(keep)
        .map(|((frame, labels), entries)| {
            SparseLabelImage::new(frame.id(), frame.width(), frame.height(), entries, Provenance::Human, labels.alpha())
        })
        .collect::<Result<_>>()?;
    Ok(Split { human, validation })
}

fn validation_miou(model: &SurrogateModel, set: &TrainingSet<'_>, validation: &[(usize, LabelEntry)]) -> Result<f64> {
    let mut cm = ConfusionMatrix::new(model.classes());
    let mut ws = Workspace::new(model.architecture());
    ws.mask1.fill(1.0);
    ws.mask2.fill(1.0);
    for &(f, e) in validation {
        model.gather_patch(set.human[f].0, e.m as usize, e.n as usize, &mut ws.input);
        model.forward(&mut ws);
        cm.record(e.class, argmax(&ws.probs));
    }
    cm.miou()
}

/// Trains a copy of `initial` (the fixed starting checkpoint) on `set`
/// with SGD + momentum under a one-cycle rate, keeping the parameters of
/// the best validation epoch. `norm` gives each list's per-image α.
pub fn train(
    initial: &SurrogateModel,
    set: &TrainingSet<'_>,
    norm: LossNormalization,
    cfg: &TrainConfig,
) -> Result<(SurrogateModel, TrainReport)> {
    cfg.validate()?;
    if set.is_empty() {
        return Err(Error::Domain("training set is empty".into()));
    }
    let lambda = match cfg.weight_decay {
        Some(l) => l,
        None => weight_decay(initial.dropout(), set.n_human(), set.n_pseudo())?,
    };
    let train_seed = rng::mix(cfg.seed, stream::TRAIN);
    let split = split_validation(set, cfg.val_fraction, train_seed)?;
    let human: Vec<Example<'_>> = set.human.iter().zip(&split.human).map(|((f, _), l)| (*f, l)).collect();
    let pseudo = set.pseudo.clone();

    // frames of both lists mixed into shared batches
    let mut order: Vec<(bool, usize)> = (0..human.len())
        .map(|i| (true, i))
        .chain((0..pseudo.len()).map(|i| (false, i)))
        .collect();
    let batches_per_epoch = order.len().div_ceil(cfg.batch_size);
    let schedule = OneCycle::new(cfg.peak_lr, cfg.schedule_epochs * batches_per_epoch);

    let mut model = initial.clone();
    let mut velocity = vec![0.0; model.params().len()];
    let mut shuffle_rng = rng::rng(rng::mix(train_seed, 1));
    let mut report = TrainReport {
        validation_pixels: split.validation.len(),
        ..Default::default()
    };
    let mut best: Option<(f64, Vec<f64>, usize)> = None;
    let mut improved_at = 0;
    let mut step = 0usize;
    let mut batch_h = Vec::new();
    let mut batch_u = Vec::new();

    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut shuffle_rng);
        let mut epoch_loss = 0.0;
        let mut lr = schedule.rate(step);
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            batch_h.clear();
            batch_u.clear();
            for &(is_human, i) in chunk {
                if is_human {
                    batch_h.push(human[i]);
                } else {
                    batch_u.push(pseudo[i]);
                }
            }
            let mode = if model.dropout() > 0.0 {
                ForwardMode::Dropout {
                    seed: rng::mix3(train_seed, epoch as u64, b as u64),
                }
            } else {
                ForwardMode::Deterministic
            };
            let (loss, grad) = match masked_loss(&model, &batch_h, &batch_u, norm, lambda, mode) {
                Ok(v) => v,
                Err(Error::NonFiniteLoss { .. } | Error::NonFiniteParameters) => {
                    return Err(Error::Diverged { epoch })
                }
                Err(e) => return Err(e),
            };
            lr = schedule.rate(step);
            for ((p, v), g) in model.params_mut().iter_mut().zip(&mut velocity).zip(&grad) {
                *v = cfg.momentum * *v + g;
                *p -= lr * *v;
            }
            epoch_loss += loss;
            step += 1;
        }
        let train_loss = epoch_loss / batches_per_epoch as f64;
        if !train_loss.is_finite() || model.params().iter().any(|p| !p.is_finite()) {
            return Err(Error::Diverged { epoch });
        }
        // Validation only decides once the learning-rate cycle has run its
        // course; small validation splits otherwise favour half-trained
        // warm-up epochs.
        let settled = epoch >= cfg.schedule_epochs.min(cfg.max_epochs);
        let val = if split.validation.is_empty() || !settled {
            None
        } else {
            Some(validation_miou(&model, set, &split.validation)?)
        };
        report.epochs.push(EpochRecord {
            epoch,
            train_loss,
            val_miou: val,
            lr,
        });
        report.stopped_epoch = epoch;
        // Ties go to the later model.
        if let Some(v) = val {
            let prev = best.as_ref().map(|b| b.0);
            if prev.is_none_or(|b| v > b) {
                improved_at = epoch;
            }
            if prev.is_none_or(|b| v >= b) {
                best = Some((v, model.params().to_vec(), epoch));
            }
            if epoch - improved_at >= cfg.patience {
                break;
            }
        }
    }
    match best {
        Some((_, params, epoch)) => {
            model.params_mut().copy_from_slice(&params);
            report.best_epoch = epoch;
        }
        None => report.best_epoch = report.stopped_epoch,
    }
    Ok((model, report))
}
