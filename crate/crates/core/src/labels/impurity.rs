use crate::error::{Error, Result};
use crate::raster::Raster;

/// Entropy of the predicted classes in each pixel's `(2r+1)²` window,
/// natural log. At the border only in-bounds neighbours count.
pub fn region_impurity(labels: &Raster<u8>, radius: usize) -> Result<Raster<f64>> {
    if radius < 1 {
        return Err(Error::Config("neighbourhood radius must be at least 1".into()));
    }
    let (w, h) = (labels.width(), labels.height());
    let mut counts = [0u32; 256];
    let mut touched = Vec::with_capacity((2 * radius + 1).pow(2));
    Ok(Raster::from_fn(w, h, |m, n| {
        let (m0, m1) = (m.saturating_sub(radius), (m + radius).min(w - 1));
        let (n0, n1) = (n.saturating_sub(radius), (n + radius).min(h - 1));
        for j in n0..=n1 {
            for i in m0..=m1 {
                let c = labels.at(i, j) as usize;
                if counts[c] == 0 {
                    touched.push(c);
                }
                counts[c] += 1;
            }
        }
        let total = ((m1 - m0 + 1) * (n1 - n0 + 1)) as f64;
        let mut entropy = 0.0;
        for &c in &touched {
            let p = counts[c] as f64 / total;
            entropy -= p * p.ln();
            counts[c] = 0;
        }
        touched.clear();
        // a single class gives -1·ln 1 = -0.0
        entropy.max(0.0)
    }))
}
