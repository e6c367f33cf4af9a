use super::{ranked, region_impurity, sample_from, SelectionConfig};
use crate::error::{Error, Result};
use crate::model::{PredictionTensor, UncertaintyImage};
use crate::rng;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HumanSelector {
    /// α uniform draws from the top-β% region impurity.
    Ours,
    Random,
    /// α uniform draws from the top-β% uncertainty.
    UncRand,
    /// β% uniform draws, then the α most uncertain of those.
    RandUnc,
    /// The α highest region impurities.
    RegImpGreedy,
    /// Every pixel; the fully supervised reference.
    Dense,
}

impl HumanSelector {
    pub const ALL: [HumanSelector; 6] = [
        HumanSelector::Ours,
        HumanSelector::Random,
        HumanSelector::UncRand,
        HumanSelector::RandUnc,
        HumanSelector::RegImpGreedy,
        HumanSelector::Dense,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            HumanSelector::Ours => "ours",
            HumanSelector::Random => "random",
            HumanSelector::UncRand => "unc_rand",
            HumanSelector::RandUnc => "rand_unc",
            HumanSelector::RegImpGreedy => "reg_imp_greedy",
            HumanSelector::Dense => "dense",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PixelSelection {
    /// Distinct `(m, n)` pixels.
    pub pixels: Vec<(usize, usize)>,
    /// True when too few informative pixels existed and random ones were
    /// added to reach α.
    pub padded: bool,
}

/// Picks the pixels of one image to send to the annotator. Deterministic in
/// `cfg.seed`.
pub fn select_human_pixels(
    kind: HumanSelector,
    prediction: &PredictionTensor,
    uncertainty: &UncertaintyImage,
    cfg: &SelectionConfig,
) -> Result<PixelSelection> {
    cfg.validate()?;
    let (w, h) = (prediction.width(), prediction.height());
    if (uncertainty.width(), uncertainty.height()) != (w, h) {
        return Err(Error::Domain("uncertainty image size differs from prediction".into()));
    }
    let n = w * h;
    let alpha = cfg.alpha.min(n);
    let pool_size = cfg.pool_size(n).max(alpha);
    let all: Vec<usize> = (0..n).collect();
    let mut rng = rng::rng(cfg.seed);
    let unc = uncertainty.raster().as_slice();
    let mut padded = false;

    let chosen = match kind {
        HumanSelector::Dense => all,
        HumanSelector::Random => sample_from(&all, alpha, &mut rng),
        HumanSelector::UncRand => {
            let pool = ranked(&all, |i| unc[i], true, pool_size);
            sample_from(&pool, alpha, &mut rng)
        }
        HumanSelector::RandUnc => {
            let pool = sample_from(&all, pool_size, &mut rng);
            ranked(&pool, |i| unc[i], true, alpha)
        }
        HumanSelector::RegImpGreedy => {
            let imp = region_impurity(prediction.ml_labels(), cfg.radius)?;
            ranked(&all, |i| imp.as_slice()[i], true, alpha)
        }
        HumanSelector::Ours => {
            let imp = region_impurity(prediction.ml_labels(), cfg.radius)?;
            let imp = imp.as_slice();
            let positive: Vec<usize> = all.iter().copied().filter(|&i| imp[i] > 0.0).collect();
            if positive.len() < alpha {
                log::info!(
                    "only {} of {} pixels have non-zero impurity; padding with random pixels",
                    positive.len(),
                    alpha
                );
                padded = true;
                let rest: Vec<usize> = all.iter().copied().filter(|&i| imp[i] <= 0.0).collect();
                let mut out = positive;
                out.extend(sample_from(&rest, alpha - out.len(), &mut rng));
                out
            } else {
                let pool = ranked(&all, |i| imp[i], true, pool_size);
                sample_from(&pool, alpha, &mut rng)
            }
        }
    };
    Ok(PixelSelection {
        pixels: chosen.into_iter().map(|i| (i % w, i / w)).collect(),
        padded,
    })
}
