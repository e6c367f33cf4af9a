//! Confusion-matrix based segmentation metrics.

use crate::error::{Error, Result};
use crate::raster::Raster;
use crate::labels::VOID;

/// `K x K` pixel counts; rows are ground truth, columns are predictions.
/// Class ids are 1-based; the void class is never counted.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConfusionMatrix {
    classes: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(classes: usize) -> Self {
        Self {
            classes,
            counts: vec![0; classes * classes],
        }
    }

    /// Row-major counts, `counts[g * K + p]` for 0-based `g` and `p`.
    pub fn from_counts(classes: usize, counts: Vec<u64>) -> Self {
        assert_eq!(counts.len(), classes * classes);
        Self { classes, counts }
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    /// Count for 1-based ground-truth and predicted classes.
    pub fn get(&self, gt: u8, pred: u8) -> u64 {
        self.counts[(gt as usize - 1) * self.classes + pred as usize - 1]
    }

    #[inline]
    pub fn record(&mut self, gt: u8, pred: u8) {
        if gt == VOID || pred == VOID {
            return;
        }
        debug_assert!(gt as usize <= self.classes && pred as usize <= self.classes);
        self.counts[(gt as usize - 1) * self.classes + pred as usize - 1] += 1;
    }

    /// Adds every pixel not masked by `ignore` (true = skip). Void pixels in
    /// either image are skipped as well.
    pub fn accumulate(
        &mut self,
        gt: &Raster<u8>,
        pred: &Raster<u8>,
        ignore: Option<&Raster<bool>>,
    ) -> Result<()> {
        if !gt.same_shape(pred) || ignore.is_some_and(|i| !i.same_shape(gt)) {
            return Err(Error::Domain("label images differ in size".into()));
        }
        if let Some(bad) = gt
            .as_slice()
            .iter()
            .chain(pred.as_slice())
            .find(|&&c| c as usize > self.classes)
        {
            return Err(Error::Domain(format!("class {bad} exceeds K = {}", self.classes)));
        }
        for (i, (&g, &p)) in gt.as_slice().iter().zip(pred.as_slice()).enumerate() {
            if ignore.is_some_and(|mask| mask.as_slice()[i]) {
                continue;
            }
            self.record(g, p);
        }
        Ok(())
    }

    pub fn merge(&mut self, other: &ConfusionMatrix) {
        assert_eq!(self.classes, other.classes);
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.classes).map(|k| self.counts[k * self.classes + k]).sum()
    }

    /// IoU per class; `None` where the class appears in neither ground truth
    /// nor prediction.
    pub fn per_class_iou(&self) -> Vec<Option<f64>> {
        let k = self.classes;
        (0..k)
            .map(|c| {
                let tp = self.counts[c * k + c];
                let row: u64 = self.counts[c * k..(c + 1) * k].iter().sum();
                let col: u64 = (0..k).map(|g| self.counts[g * k + c]).sum();
                let union = row + col - tp;
                (union > 0).then(|| tp as f64 / union as f64)
            })
            .collect()
    }

    /// Mean IoU over classes with a non-empty union.
    pub fn miou(&self) -> Result<f64> {
        if self.total() == 0 {
            return Err(Error::EmptyConfusionMatrix);
        }
        let ious: Vec<f64> = self.per_class_iou().into_iter().flatten().collect();
        Ok(ious.iter().sum::<f64>() / ious.len() as f64)
    }

    pub fn accuracy(&self) -> Result<f64> {
        let total = self.total();
        if total == 0 {
            return Err(Error::EmptyConfusionMatrix);
        }
        Ok(self.trace() as f64 / total as f64)
    }
}
