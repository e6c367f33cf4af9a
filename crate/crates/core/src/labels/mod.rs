//! Sparse label images and the human / pseudo pixel selectors.

mod human;
mod impurity;
mod pseudo;

pub use human::{select_human_pixels, HumanSelector, PixelSelection};
pub use impurity::region_impurity;
pub use pseudo::{pseudo_label_frame, rerender_all_pseudo, select_pseudo_pixels, PseudoSelector};

use crate::error::{Error, Result};
use crate::raster::Raster;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::io::{BufRead, Write};

/// Class id of unlabelled pixels. Real classes are `1..=K`.
pub const VOID: u8 = 0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Human,
    Pseudo,
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Provenance::Human => "human",
            Provenance::Pseudo => "pseudo",
        })
    }
}

impl std::str::FromStr for Provenance {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "human" => Ok(Provenance::Human),
            "pseudo" => Ok(Provenance::Pseudo),
            other => Err(Error::format("label file", format!("unknown provenance `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LabelEntry {
    pub m: u32,
    pub n: u32,
    pub class: u8,
}

impl LabelEntry {
    pub fn new(m: usize, n: usize, class: u8) -> Self {
        Self {
            m: m as u32,
            n: n as u32,
            class,
        }
    }
}

/// Labels for a few pixels of one frame; every other pixel is [`VOID`].
#[derive(Clone, Debug, PartialEq)]
pub struct SparseLabelImage {
    frame_id: u64,
    width: usize,
    height: usize,
    entries: Vec<LabelEntry>,
    provenance: Provenance,
    alpha: usize,
}

impl SparseLabelImage {
    pub fn new(
        frame_id: u64,
        width: usize,
        height: usize,
        entries: Vec<LabelEntry>,
        provenance: Provenance,
        alpha: usize,
    ) -> Result<Self> {
        if entries.len() > alpha {
            return Err(Error::Domain(format!(
                "{} entries exceed the label budget {alpha}",
                entries.len()
            )));
        }
        let mut seen = vec![false; width * height];
        for e in &entries {
            let (m, n) = (e.m as usize, e.n as usize);
            if m >= width || n >= height {
                return Err(Error::PixelOutOfBounds { m, n, width, height });
            }
            if e.class == VOID {
                return Err(Error::Domain(format!("entry ({m}, {n}) has the void class")));
            }
            if std::mem::replace(&mut seen[n * width + m], true) {
                return Err(Error::Domain(format!("pixel ({m}, {n}) labelled twice")));
            }
        }
        Ok(Self {
            frame_id,
            width,
            height,
            entries,
            provenance,
            alpha,
        })
    }

    pub fn empty(frame_id: u64, width: usize, height: usize, provenance: Provenance) -> Self {
        Self {
            frame_id,
            width,
            height,
            entries: Vec::new(),
            provenance,
            alpha: 0,
        }
    }

    pub fn frame_id(&self) -> u64 {
        self.frame_id
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn entries(&self) -> &[LabelEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn alpha(&self) -> usize {
        self.alpha
    }

    pub fn to_raster(&self) -> Raster<u8> {
        let mut r = Raster::filled(self.width, self.height, VOID);
        for e in &self.entries {
            *r.get_mut(e.m as usize, e.n as usize) = e.class;
        }
        r
    }

    /// Adds the per-class entry counts into `hist` (index `k - 1`).
    pub fn accumulate_histogram(&self, hist: &mut [u64]) {
        for e in &self.entries {
            if let Some(slot) = hist.get_mut(e.class as usize - 1) {
                *slot += 1;
            }
        }
    }

    /// Text form: the frame id, then one `m n k provenance` line per entry.
    pub fn write<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{}", self.frame_id)?;
        for e in &self.entries {
            writeln!(out, "{} {} {} {}", e.m, e.n, e.class, self.provenance)?;
        }
        Ok(())
    }

    /// Reads the text form for an image of the given size. All entries
    /// must share one provenance; the budget is the entry count.
    pub fn read<R: BufRead>(input: R, width: usize, height: usize) -> Result<Self> {
        let bad = |line: usize, detail: &str| Error::format("label file", format!("line {line}: {detail}"));
        let mut lines = input.lines().enumerate();
        let frame_id = loop {
            match lines.next() {
                None => return Err(bad(1, "missing frame id")),
                Some((_, l)) if l.as_ref().map(|s| s.trim().is_empty()).unwrap_or(false) => continue,
                Some((i, l)) => {
                    break l?.trim().parse::<u64>().map_err(|_| bad(i + 1, "bad frame id"))?;
                }
            }
        };
        let mut entries = Vec::new();
        let mut provenance = None;
        for (i, line) in lines {
            let line = line?;
            let tokens: Vec<&str> = line.split_whitespace().collect();
            if tokens.is_empty() {
                continue;
            }
            if tokens.len() != 4 {
                return Err(bad(i + 1, "expected `m n k provenance`"));
            }
            let m: usize = tokens[0].parse().map_err(|_| bad(i + 1, "bad m"))?;
            let n: usize = tokens[1].parse().map_err(|_| bad(i + 1, "bad n"))?;
            let k: u8 = tokens[2].parse().map_err(|_| bad(i + 1, "bad class"))?;
            let p: Provenance = tokens[3].parse()?;
            if *provenance.get_or_insert(p) != p {
                return Err(bad(i + 1, "mixed provenance"));
            }
            entries.push(LabelEntry::new(m, n, k));
        }
        let alpha = entries.len();
        Self::new(
            frame_id,
            width,
            height,
            entries,
            provenance.unwrap_or(Provenance::Human),
            alpha,
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectionConfig {
    /// Pixels to label per image.
    pub alpha: usize,
    /// Percent of pixels forming the candidate pool, in `(0, 100]`.
    pub beta: f64,
    /// Neighbourhood radius of the impurity score.
    pub radius: usize,
    pub seed: u64,
}

impl SelectionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0 && self.beta <= 100.0) {
            return Err(Error::Config(format!("beta {} outside (0, 100]", self.beta)));
        }
        if self.radius < 1 {
            return Err(Error::Config("neighbourhood radius must be at least 1".into()));
        }
        Ok(())
    }

    pub fn with_seed(self, seed: u64) -> Self {
        Self { seed, ..self }
    }

    /// Size of the top-β% pool over `n` candidates.
    pub fn pool_size(&self, n: usize) -> usize {
        ((self.beta * n as f64 / 100.0).ceil() as usize).min(n)
    }
}

/// Indices ordered by `key` (ascending, or descending if `descending`),
/// ties broken by index, truncated to `take`.
pub(crate) fn ranked(indices: &[usize], key: impl Fn(usize) -> f64, descending: bool, take: usize) -> Vec<usize> {
    let mut order = indices.to_vec();
    order.sort_by(|&a, &b| {
        let (ka, kb) = (key(a), key(b));
        let ord = if descending { kb.total_cmp(&ka) } else { ka.total_cmp(&kb) };
        ord.then(a.cmp(&b))
    });
    order.truncate(take);
    order
}

/// `k` distinct elements of `pool`, uniformly, in sampled order.
pub(crate) fn sample_from(pool: &[usize], k: usize, rng: &mut crate::rng::Rng) -> Vec<usize> {
    let k = k.min(pool.len());
    rand::seq::index::sample(rng, pool.len(), k)
        .into_iter()
        .map(|i| pool[i])
        .collect()
}
