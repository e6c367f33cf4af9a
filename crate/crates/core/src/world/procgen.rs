use super::{Appearance, ClassAppearance, WorldModel};
use crate::error::{Error, Result};
use crate::raster::Raster;
use crate::rng;
use rand::Rng as _;
use serde::{Deserialize, Serialize};
use std::path::PathBuf;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Layout {
    /// Five-class aerial scene: impervious surface, building, low
    /// vegetation, tree, car.
    Urban,
    /// Voronoi patches over any number of classes.
    Patches,
}

/// Where a world comes from: a procedural recipe, or world files on disk
/// when `path` is set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorldSpec {
    pub width: usize,
    pub length: usize,
    pub cell_size: f64,
    pub classes: usize,
    pub layout: Layout,
    pub seed: u64,
    /// Illumination variation amplitude.
    pub variation: f64,
    /// Terrain height per class in meters; empty means flat.
    pub class_heights: Vec<f64>,
    pub path: Option<PathBuf>,
}

impl Default for WorldSpec {
    fn default() -> Self {
        Self {
            width: 256,
            length: 256,
            cell_size: 1.0,
            classes: 5,
            layout: Layout::Urban,
            seed: 1,
            variation: 0.08,
            class_heights: Vec::new(),
            path: None,
        }
    }
}

pub(crate) const ROAD: u8 = 1;
pub(crate) const BUILDING: u8 = 2;
pub(crate) const LOW_VEGETATION: u8 = 3;
pub(crate) const TREE: u8 = 4;
pub(crate) const CAR: u8 = 5;

fn urban_appearance() -> Vec<ClassAppearance> {
    vec![
        ClassAppearance { color: [0.55, 0.55, 0.56], texture: 0.04 },
        ClassAppearance { color: [0.62, 0.50, 0.46], texture: 0.07 },
        ClassAppearance { color: [0.42, 0.56, 0.32], texture: 0.05 },
        ClassAppearance { color: [0.22, 0.38, 0.18], texture: 0.08 },
        ClassAppearance { color: [0.66, 0.30, 0.32], texture: 0.12 },
    ]
}

fn patch_appearance(k: usize, seed: u64) -> Vec<ClassAppearance> {
    let mut rng = rng::rng(rng::mix(seed, 0xc010));
    (0..k)
        .map(|_| ClassAppearance {
            color: [
                0.2 + 0.6 * rng.random::<f64>(),
                0.2 + 0.6 * rng.random::<f64>(),
                0.2 + 0.6 * rng.random::<f64>(),
            ],
            texture: 0.05,
        })
        .collect()
}

/// Builds the world a spec describes, loading it from disk if `path` is set.
pub fn generate_world(spec: &WorldSpec) -> Result<WorldModel> {
    if let Some(path) = &spec.path {
        return super::load_world(path);
    }
    if spec.width == 0 || spec.length == 0 {
        return Err(Error::Config("world must have at least one cell".into()));
    }
    if !spec.class_heights.is_empty() && spec.class_heights.len() != spec.classes {
        return Err(Error::Config(format!(
            "class_heights has {} entries for {} classes",
            spec.class_heights.len(),
            spec.classes
        )));
    }
    let (classes, table) = match spec.layout {
        Layout::Urban => {
            if spec.classes != 5 {
                return Err(Error::Config("the urban layout has exactly 5 classes".into()));
            }
            (urban_layout(spec), urban_appearance())
        }
        Layout::Patches => {
            if spec.classes == 0 || spec.classes > 255 {
                return Err(Error::Config(format!("invalid class count {}", spec.classes)));
            }
            (patch_layout(spec), patch_appearance(spec.classes, spec.seed))
        }
    };
    let heights = if spec.class_heights.is_empty() {
        Raster::filled(spec.width, spec.length, 0.0)
    } else {
        classes.map(|&c| spec.class_heights[c as usize - 1])
    };
    let appearance = Appearance {
        classes: table,
        variation: spec.variation,
        seed: rng::mix(spec.seed, 0xa99e),
    };
    WorldModel::with_appearance(classes, heights, spec.cell_size, spec.classes, appearance)
}

fn fill_rect(r: &mut Raster<u8>, x0: usize, y0: usize, w: usize, h: usize, c: u8) {
    for y in y0..(y0 + h).min(r.height()) {
        for x in x0..(x0 + w).min(r.width()) {
            *r.get_mut(x, y) = c;
        }
    }
}

fn rect_all(r: &Raster<u8>, x0: usize, y0: usize, w: usize, h: usize, f: impl Fn(u8) -> bool) -> bool {
    if x0 + w > r.width() || y0 + h > r.height() {
        return false;
    }
    (y0..y0 + h).all(|y| (x0..x0 + w).all(|x| f(r.at(x, y))))
}

fn urban_layout(spec: &WorldSpec) -> Raster<u8> {
    let (w, l) = (spec.width, spec.length);
    let mut rng = rng::rng(rng::mix(spec.seed, 0x0ab1));
    let mut r = Raster::filled(w, l, LOW_VEGETATION);

    // Roads: a jittered lattice of 4-6 cell wide strips.
    let mut roads = |extent: usize, horizontal: bool, r: &mut Raster<u8>| {
        let count = (extent / 48).max(1);
        let pitch = extent as f64 / count as f64;
        for i in 0..count {
            let centre = pitch * (i as f64 + 0.5) + pitch * 0.25 * (2.0 * rng.random::<f64>() - 1.0);
            let width = rng.random_range(4..=6);
            let start = (centre as usize).saturating_sub(width / 2);
            if horizontal {
                fill_rect(r, 0, start, w, width, ROAD);
            } else {
                fill_rect(r, start, 0, width, l, ROAD);
            }
        }
    };
    roads(l, true, &mut r);
    roads(w, false, &mut r);

    let area = w * l;
    let mut rng = rng::rng(rng::mix(spec.seed, 0xb1d6));
    for _ in 0..area / 300 {
        let bw = rng.random_range(6..=16);
        let bh = rng.random_range(6..=16);
        if bw + 2 > w || bh + 2 > l {
            continue;
        }
        let x0 = rng.random_range(0..=w - bw - 2);
        let y0 = rng.random_range(0..=l - bh - 2);
        if rect_all(&r, x0, y0, bw + 2, bh + 2, |c| c == LOW_VEGETATION) {
            fill_rect(&mut r, x0 + 1, y0 + 1, bw, bh, BUILDING);
        }
    }

    // Paved courtyards next to buildings.
    for _ in 0..area / 1200 {
        let pw = rng.random_range(3..=8);
        let ph = rng.random_range(3..=8);
        if pw > w || ph > l {
            continue;
        }
        let x0 = rng.random_range(0..=w - pw);
        let y0 = rng.random_range(0..=l - ph);
        if rect_all(&r, x0, y0, pw, ph, |c| c == LOW_VEGETATION) {
            fill_rect(&mut r, x0, y0, pw, ph, ROAD);
        }
    }

    for _ in 0..area / 160 {
        let cx = rng.random::<f64>() * w as f64;
        let cy = rng.random::<f64>() * l as f64;
        let rad = 1.2 + 2.3 * rng.random::<f64>();
        let (x0, x1) = ((cx - rad).floor().max(0.0) as usize, ((cx + rad).ceil() as usize).min(w));
        let (y0, y1) = ((cy - rad).floor().max(0.0) as usize, ((cy + rad).ceil() as usize).min(l));
        for y in y0..y1 {
            for x in x0..x1 {
                let (dx, dy) = (x as f64 + 0.5 - cx, y as f64 + 0.5 - cy);
                if dx * dx + dy * dy <= rad * rad && r.at(x, y) == LOW_VEGETATION {
                    *r.get_mut(x, y) = TREE;
                }
            }
        }
    }

    // Cars: 2x4 cell rectangles fully on impervious surface, anchored on
    // random road cells.
    let paved: Vec<usize> = (0..area).filter(|&i| r.as_slice()[i] == ROAD).collect();
    if !paved.is_empty() {
        for _ in 0..area / 300 {
            let (cw, ch) = if rng.random::<bool>() { (2, 4) } else { (4, 2) };
            let (x0, y0) = r.coords(paved[rng.random_range(0..paved.len())]);
            if rect_all(&r, x0, y0, cw + 1, ch + 1, |c| c == ROAD) {
                fill_rect(&mut r, x0, y0, cw, ch, CAR);
            }
        }
    }
    r
}

fn patch_layout(spec: &WorldSpec) -> Raster<u8> {
    let (w, l) = (spec.width, spec.length);
    let mut rng = rng::rng(rng::mix(spec.seed, 0x9a7c));
    let sites: Vec<(f64, f64, u8)> = (0..(w * l / 100).max(1))
        .map(|_| {
            (
                rng.random::<f64>() * w as f64,
                rng.random::<f64>() * l as f64,
                rng.random_range(1..=spec.classes) as u8,
            )
        })
        .collect();
    Raster::from_fn(w, l, |x, y| {
        let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
        sites
            .iter()
            .min_by(|a, b| {
                let da = (a.0 - px).powi(2) + (a.1 - py).powi(2);
                let db = (b.0 - px).powi(2) + (b.1 - py).powi(2);
                da.total_cmp(&db)
            })
            .map(|s| s.2)
            .unwrap_or(1)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn urban_world_contains_every_class() {
        let world = generate_world(&WorldSpec {
            width: 96,
            length: 96,
            ..WorldSpec::default()
        })
        .unwrap();
        let mut counts = [0usize; 6];
        for &c in world.class_raster().as_slice() {
            counts[c as usize] += 1;
        }
        assert!(counts[1..].iter().all(|&c| c > 0), "{counts:?}");
        // Cars stay rare.
        assert!(counts[5] * 20 < 96 * 96);
    }

    #[test]
    fn generation_is_seeded() {
        let spec = WorldSpec {
            width: 40,
            length: 30,
            ..WorldSpec::default()
        };
        let a = generate_world(&spec).unwrap();
        let b = generate_world(&spec).unwrap();
        assert_eq!(a.class_raster(), b.class_raster());
        assert_eq!(a.features, b.features);
        let c = generate_world(&WorldSpec { seed: 2, ..spec }).unwrap();
        assert_ne!(a.class_raster(), c.class_raster());
    }

    #[test]
    fn patches_support_any_class_count() {
        let world = generate_world(&WorldSpec {
            width: 32,
            length: 32,
            classes: 2,
            layout: Layout::Patches,
            ..WorldSpec::default()
        })
        .unwrap();
        assert!(world.class_raster().as_slice().iter().all(|&c| c == 1 || c == 2));
    }

    #[test]
    fn urban_rejects_other_class_counts() {
        let spec = WorldSpec {
            classes: 4,
            ..WorldSpec::default()
        };
        assert!(matches!(generate_world(&spec), Err(Error::Config(_))));
    }
}
