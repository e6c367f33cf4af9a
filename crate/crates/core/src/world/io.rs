//! World files: an indexed class raster, an optional 16-bit height raster,
//! and a `key=value` manifest with the cell size and class colour table.
//!
//! ```text
//! version=1
//! cell_size=1
//! classes=5
//! class_raster=classes.pgm
//! height_raster=heights.pgm
//! height_scale=0.01
//! variation=0.08
//! seed=42
//! color.1=0.55,0.55,0.56
//! texture.1=0.04
//! ```

use super::{Appearance, ClassAppearance, WorldModel};
use crate::error::{Error, Result};
use crate::raster::Raster;
use image::{GrayImage, ImageBuffer, Luma};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

pub const MANIFEST_NAME: &str = "world.txt";
const HEIGHT_SCALE: f64 = 0.01;

#[derive(Clone, Debug, PartialEq)]
pub struct WorldManifest {
    pub cell_size: f64,
    pub classes: usize,
    pub class_raster: PathBuf,
    pub height_raster: Option<PathBuf>,
    pub height_scale: f64,
    pub appearance: Appearance,
}

impl WorldManifest {
    pub fn parse(text: &str) -> Result<Self> {
        let mut kv = BTreeMap::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                Error::format("world manifest", format!("line {}: expected key=value", lineno + 1))
            })?;
            kv.insert(k.trim().to_string(), v.trim().to_string());
        }
        let get = |k: &str| {
            kv.get(k)
                .ok_or_else(|| Error::format("world manifest", format!("missing key `{k}`")))
        };
        let num = |k: &str| -> Result<f64> {
            get(k)?
                .parse::<f64>()
                .map_err(|e| Error::format("world manifest", format!("`{k}`: {e}")))
        };
        if let Some(v) = kv.get("version") {
            if v != "1" {
                return Err(Error::format("world manifest", format!("unsupported version {v}")));
            }
        }
        let classes = num("classes")? as usize;
        let mut table = Vec::with_capacity(classes);
        for k in 1..=classes {
            let color: Vec<f64> = get(&format!("color.{k}"))?
                .split(',')
                .map(|c| c.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::format("world manifest", format!("color.{k}: {e}")))?;
            if color.len() != 3 {
                return Err(Error::format("world manifest", format!("color.{k} needs 3 values")));
            }
            let texture = if kv.contains_key(&format!("texture.{k}")) {
                num(&format!("texture.{k}"))?
            } else {
                0.0
            };
            table.push(ClassAppearance {
                color: [color[0], color[1], color[2]],
                texture,
            });
        }
        Ok(Self {
            cell_size: num("cell_size")?,
            classes,
            class_raster: PathBuf::from(get("class_raster")?),
            height_raster: kv.get("height_raster").map(PathBuf::from),
            height_scale: if kv.contains_key("height_scale") {
                num("height_scale")?
            } else {
                HEIGHT_SCALE
            },
            appearance: Appearance {
                classes: table,
                variation: if kv.contains_key("variation") { num("variation")? } else { 0.0 },
                seed: match kv.get("seed") {
                    Some(v) => v
                        .parse::<u64>()
                        .map_err(|e| Error::format("world manifest", format!("`seed`: {e}")))?,
                    None => 0,
                },
            },
        })
    }

    pub fn render(&self) -> String {
        let mut s = String::from("# activeseg world manifest\nversion=1\n");
        let _ = writeln!(s, "cell_size={}", self.cell_size);
        let _ = writeln!(s, "classes={}", self.classes);
        let _ = writeln!(s, "class_raster={}", self.class_raster.display());
        if let Some(h) = &self.height_raster {
            let _ = writeln!(s, "height_raster={}", h.display());
            let _ = writeln!(s, "height_scale={}", self.height_scale);
        }
        let _ = writeln!(s, "variation={}", self.appearance.variation);
        let _ = writeln!(s, "seed={}", self.appearance.seed);
        for (i, c) in self.appearance.classes.iter().enumerate() {
            let _ = writeln!(
                s,
                "color.{}={},{},{}",
                i + 1,
                c.color[0],
                c.color[1],
                c.color[2]
            );
            let _ = writeln!(s, "texture.{}={}", i + 1, c.texture);
        }
        s
    }
}

/// Loads a world from a directory holding `world.txt`, or from a manifest
/// path directly. Raster paths resolve relative to the manifest.
pub fn load_world(path: &Path) -> Result<WorldModel> {
    let manifest_path = if path.is_dir() {
        path.join(MANIFEST_NAME)
    } else {
        path.to_path_buf()
    };
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    let manifest = WorldManifest::parse(&std::fs::read_to_string(&manifest_path)?)?;
    let img = image::open(base.join(&manifest.class_raster))?.to_luma8();
    let (w, l) = (img.width() as usize, img.height() as usize);
    let classes = Raster::from_vec(w, l, img.into_raw());
    let heights = match &manifest.height_raster {
        Some(p) => {
            let img = image::open(base.join(p))?.to_luma16();
            if (img.width() as usize, img.height() as usize) != (w, l) {
                return Err(Error::Domain("height raster size differs from class raster".into()));
            }
            Raster::from_vec(
                w,
                l,
                img.into_raw()
                    .into_iter()
                    .map(|v| v as f64 * manifest.height_scale)
                    .collect(),
            )
        }
        None => Raster::filled(w, l, 0.0),
    };
    WorldModel::with_appearance(
        classes,
        heights,
        manifest.cell_size,
        manifest.classes,
        manifest.appearance,
    )
}

/// Writes `classes.pgm`, `heights.pgm` (16-bit, centimetres) and `world.txt`.
pub fn save_world(world: &WorldModel, dir: &Path) -> Result<()> {
    let appearance = world.appearance().cloned().ok_or_else(|| {
        Error::Domain("only worlds built from an appearance table can be saved".into())
    })?;
    std::fs::create_dir_all(dir)?;
    let (w, l) = world.cells();
    let classes: GrayImage =
        ImageBuffer::from_raw(w as u32, l as u32, world.class_raster().as_slice().to_vec())
            .expect("raster dimensions");
    classes.save(dir.join("classes.pgm"))?;
    let heights: ImageBuffer<Luma<u16>, Vec<u16>> = ImageBuffer::from_raw(
        w as u32,
        l as u32,
        world
            .heights()
            .as_slice()
            .iter()
            .map(|h| (h / HEIGHT_SCALE).round().min(u16::MAX as f64) as u16)
            .collect(),
    )
    .expect("raster dimensions");
    heights.save(dir.join("heights.pgm"))?;
    let manifest = WorldManifest {
        cell_size: world.cell_size(),
        classes: world.num_classes(),
        class_raster: "classes.pgm".into(),
        height_raster: Some("heights.pgm".into()),
        height_scale: HEIGHT_SCALE,
        appearance,
    };
    std::fs::write(dir.join(MANIFEST_NAME), manifest.render())?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::{generate_world, WorldSpec};

    #[test]
    fn save_then_load_reproduces_the_world() {
        let spec = WorldSpec {
            width: 24,
            length: 20,
            class_heights: vec![0.0, 3.0, 0.0, 1.5, 0.0],
            ..WorldSpec::default()
        };
        let world = generate_world(&spec).unwrap();
        let dir = tempfile::tempdir().unwrap();
        save_world(&world, dir.path()).unwrap();
        let back = load_world(dir.path()).unwrap();
        assert_eq!(back.class_raster(), world.class_raster());
        assert_eq!(back.heights(), world.heights());
        assert_eq!(back.features, world.features);
    }

    #[test]
    fn manifest_requires_colors() {
        let err = WorldManifest::parse("cell_size=1\nclasses=2\nclass_raster=a.pgm\ncolor.1=0,0,0\n");
        assert!(matches!(err, Err(Error::Format { .. })));
    }
}
