use super::{ranked, sample_from, LabelEntry, Provenance, SelectionConfig, SparseLabelImage};
use crate::error::{Error, Result};
use crate::mapping::{MultiLayerMap, SemanticRender};
use crate::model::UncertaintyImage;
use crate::rng::{self, stream};
use crate::world::Frame;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PseudoSelector {
    /// α uniform draws from the lowest-β% rendered uncertainty.
    Ours,
    Random,
    /// Class quotas from the human label histogram, lowest uncertainty
    /// first within each class.
    DistAlign,
    /// No pseudo labels (human-only training).
    None,
    /// Every rendered pixel.
    Dense,
}

impl PseudoSelector {
    pub const ALL: [PseudoSelector; 5] = [
        PseudoSelector::Ours,
        PseudoSelector::Random,
        PseudoSelector::DistAlign,
        PseudoSelector::None,
        PseudoSelector::Dense,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            PseudoSelector::Ours => "ours",
            PseudoSelector::Random => "random",
            PseudoSelector::DistAlign => "dist_align",
            PseudoSelector::None => "none",
            PseudoSelector::Dense => "dense",
        }
    }
}

/// Splits `total` over classes proportionally to `hist` by largest
/// remainders (ties to the lower class). An empty histogram counts as
/// uniform.
pub(crate) fn class_quotas(hist: &[u64], total: usize) -> Vec<usize> {
    let k = hist.len();
    if k == 0 {
        return Vec::new();
    }
    let sum: u64 = hist.iter().sum();
    let weights: Vec<f64> = if sum == 0 {
        vec![1.0 / k as f64; k]
    } else {
        hist.iter().map(|&c| c as f64 / sum as f64).collect()
    };
    let exact: Vec<f64> = weights.iter().map(|w| w * total as f64).collect();
    let mut quotas: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let left = total - quotas.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| {
        let (ra, rb) = (exact[a] - exact[a].floor(), exact[b] - exact[b].floor());
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &c in order.iter().take(left) {
        quotas[c] += 1;
    }
    quotas
}

/// Chooses pseudo-labelled pixels of one rendered view. Only pixels that
/// hit a mapped surface are candidates; entries carry the map's most likely
/// class. `human_hist[k - 1]` counts human labels of class `k`.
pub fn select_pseudo_pixels(
    kind: PseudoSelector,
    frame_id: u64,
    render: &SemanticRender,
    uncertainty: &UncertaintyImage,
    human_hist: &[u64],
    cfg: &SelectionConfig,
) -> Result<SparseLabelImage> {
    cfg.validate()?;
    let (w, h) = (render.labels.width(), render.labels.height());
    if (uncertainty.width(), uncertainty.height()) != (w, h) {
        return Err(Error::Domain("uncertainty image size differs from render".into()));
    }
    let hits: Vec<usize> = render
        .hit_mask
        .as_slice()
        .iter()
        .enumerate()
        .filter(|(_, &hit)| hit)
        .map(|(i, _)| i)
        .collect();
    let unc = uncertainty.raster().as_slice();
    let labels = render.labels.as_slice();
    let mut rng = rng::rng(cfg.seed);

    let (chosen, alpha) = match kind {
        PseudoSelector::None => (Vec::new(), 0),
        PseudoSelector::Dense => (hits.clone(), hits.len()),
        PseudoSelector::Random => (sample_from(&hits, cfg.alpha, &mut rng), cfg.alpha),
        PseudoSelector::Ours => {
            if hits.len() <= cfg.alpha {
                if hits.len() < cfg.alpha {
                    log::debug!("frame {frame_id}: {} hit pixels for {} pseudo labels", hits.len(), cfg.alpha);
                }
                (hits.clone(), cfg.alpha)
            } else {
                let size = cfg.pool_size(hits.len()).max(cfg.alpha);
                let pool = ranked(&hits, |i| unc[i], false, size);
                (sample_from(&pool, cfg.alpha, &mut rng), cfg.alpha)
            }
        }
        PseudoSelector::DistAlign => {
            let quotas = class_quotas(human_hist, cfg.alpha);
            let mut out = Vec::new();
            for (c, &q) in quotas.iter().enumerate() {
                let class = (c + 1) as u8;
                let of_class: Vec<usize> = hits.iter().copied().filter(|&i| labels[i] == class).collect();
                out.extend(ranked(&of_class, |i| unc[i], false, q));
            }
            (out, cfg.alpha)
        }
    };
    let entries = chosen
        .into_iter()
        .map(|i| LabelEntry::new(i % w, i / w, labels[i]))
        .collect();
    SparseLabelImage::new(frame_id, w, h, entries, Provenance::Pseudo, alpha)
}

/// Renders `frame`'s view from the map and selects its pseudo labels, with
/// a selection seed derived from `cfg.seed` and the frame id.
pub fn pseudo_label_frame(
    kind: PseudoSelector,
    map: &MultiLayerMap,
    frame: &Frame,
    human_hist: &[u64],
    cfg: &SelectionConfig,
) -> Result<SparseLabelImage> {
    if kind == PseudoSelector::None {
        return Ok(SparseLabelImage::empty(frame.id(), frame.width(), frame.height(), Provenance::Pseudo));
    }
    let (render, unc) = map.render(frame.pose(), frame.camera());
    let cfg = cfg.with_seed(rng::mix3(cfg.seed, stream::PSEUDO_SELECT, frame.id()));
    select_pseudo_pixels(kind, frame.id(), &render, &unc, human_hist, &cfg)
}

/// Fresh pseudo labels for every stored pseudo frame from the current map.
/// Earlier selections are discarded by the caller; one output per frame.
pub fn rerender_all_pseudo(
    kind: PseudoSelector,
    map: &MultiLayerMap,
    frames: &[&Frame],
    human_hist: &[u64],
    cfg: &SelectionConfig,
) -> Result<Vec<SparseLabelImage>> {
    frames
        .iter()
        .map(|f| pseudo_label_frame(kind, map, f, human_hist, cfg))
        .collect()
}
