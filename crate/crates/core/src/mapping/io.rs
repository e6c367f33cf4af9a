//! Map persistence: a short text header followed by the layers as
//! little-endian binary, plus per-layer PGM slices for inspection.
//!
//! ```text
//! ACTIVESEG-MAP 1
//! dims 64 64 3
//! voxel_size 1
//! origin 0 0 -1
//! classes 5
//! params {"p_hit":0.7,...}
//! end
//! ```

use super::{MapParams, MultiLayerMap, VoxelClass, VoxelGrid};
use crate::error::{Error, Result};
use crate::geometry::Vec3;
use image::{GrayImage, Luma};
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

const MAGIC: &str = "ACTIVESEG-MAP 1";

/// Layers that can be exported as image slices.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MapLayer {
    Occupancy,
    /// Most likely class, scaled to grey levels.
    Semantics,
    Uncertainty,
    TrainCount,
}

fn write_f64s<W: Write>(out: &mut W, xs: &[f64]) -> std::io::Result<()> {
    let mut buf = Vec::with_capacity(xs.len() * 8);
    for x in xs {
        buf.extend_from_slice(&x.to_le_bytes());
    }
    out.write_all(&buf)
}

fn write_u32s<W: Write>(out: &mut W, xs: &[u32]) -> std::io::Result<()> {
    let mut buf = Vec::with_capacity(xs.len() * 4);
    for x in xs {
        buf.extend_from_slice(&x.to_le_bytes());
    }
    out.write_all(&buf)
}

fn read_f64s<R: Read>(input: &mut R, n: usize) -> Result<Vec<f64>> {
    let mut buf = vec![0u8; n * 8];
    input.read_exact(&mut buf)?;
    Ok(buf
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect())
}

fn read_u32s<R: Read>(input: &mut R, n: usize) -> Result<Vec<u32>> {
    let mut buf = vec![0u8; n * 4];
    input.read_exact(&mut buf)?;
    Ok(buf
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes(c.try_into().expect("4 bytes")))
        .collect())
}

fn header_field<'a>(line: &'a str, key: &str) -> Result<&'a str> {
    line.strip_prefix(key)
        .and_then(|rest| rest.strip_prefix(' '))
        .ok_or_else(|| Error::format("map header", format!("expected `{key}`, got `{line}`")))
}

fn parse_nums<T: std::str::FromStr>(s: &str, n: usize) -> Result<Vec<T>> {
    let out: Vec<T> = s
        .split_whitespace()
        .map(|t| t.parse::<T>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::format("map header", format!("bad numbers `{s}`")))?;
    if out.len() != n {
        return Err(Error::format("map header", format!("expected {n} values in `{s}`")));
    }
    Ok(out)
}

impl MultiLayerMap {
    pub fn write_to<W: Write>(&self, mut out: W) -> Result<()> {
        let g = &self.grid;
        writeln!(out, "{MAGIC}")?;
        writeln!(out, "dims {} {} {}", g.dims[0], g.dims[1], g.dims[2])?;
        writeln!(out, "voxel_size {}", g.voxel_size)?;
        writeln!(out, "origin {} {} {}", g.origin.x, g.origin.y, g.origin.z)?;
        writeln!(out, "classes {}", self.classes)?;
        writeln!(out, "params {}", serde_json::to_string(&self.params)?)?;
        writeln!(out, "end")?;
        write_f64s(&mut out, &self.geo)?;
        write_u32s(&mut out, &self.updates)?;
        write_f64s(&mut out, &self.sem)?;
        write_f64s(&mut out, &self.unc_sum)?;
        write_u32s(&mut out, &self.unc_count)?;
        write_u32s(&mut out, &self.train_count)?;
        Ok(())
    }

    pub fn read_from<R: Read>(input: R) -> Result<Self> {
        let mut input = BufReader::new(input);
        let mut lines = Vec::new();
        loop {
            let mut line = String::new();
            if input.read_line(&mut line)? == 0 {
                return Err(Error::format("map header", "missing `end`"));
            }
            let line = line.trim_end().to_string();
            if line == "end" {
                break;
            }
            lines.push(line);
            if lines.len() > 16 {
                return Err(Error::format("map header", "header too long"));
            }
        }
        if lines.first().map(String::as_str) != Some(MAGIC) || lines.len() != 6 {
            return Err(Error::format("map header", "bad magic or field count"));
        }
        let dims: Vec<usize> = parse_nums(header_field(&lines[1], "dims")?, 3)?;
        let voxel_size: f64 = parse_nums(header_field(&lines[2], "voxel_size")?, 1)?[0];
        let origin: Vec<f64> = parse_nums(header_field(&lines[3], "origin")?, 3)?;
        let classes: usize = parse_nums(header_field(&lines[4], "classes")?, 1)?[0];
        let params: MapParams = serde_json::from_str(header_field(&lines[5], "params")?)?;
        let grid = VoxelGrid::new(
            [dims[0], dims[1], dims[2]],
            voxel_size,
            Vec3::new(origin[0], origin[1], origin[2]),
        );
        let mut map = MultiLayerMap::new(grid, classes, params)?;
        let n = grid.len();
        map.geo = read_f64s(&mut input, n)?;
        map.updates = read_u32s(&mut input, n)?;
        map.sem = read_f64s(&mut input, n * classes)?;
        map.unc_sum = read_f64s(&mut input, n)?;
        map.unc_count = read_u32s(&mut input, n)?;
        map.train_count = read_u32s(&mut input, n)?;
        let mut rest = [0u8; 1];
        if input.read(&mut rest)? != 0 {
            return Err(Error::format("map", "trailing bytes after layers"));
        }
        Ok(map)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read_from(std::fs::File::open(path)?)
    }

    /// One horizontal slice of `layer` at voxel height `z` as 8-bit grey.
    /// Unknown voxels are black in every layer but occupancy.
    pub fn slice_image(&self, layer: MapLayer, z: usize) -> Result<GrayImage> {
        let [w, l, h] = self.grid.dims;
        if z >= h {
            return Err(Error::Domain(format!("slice {z} beyond map height {h}")));
        }
        let max_t = self.train_count.iter().copied().max().unwrap_or(0).max(1) as f64;
        let k = self.classes as f64;
        Ok(GrayImage::from_fn(w as u32, l as u32, |x, y| {
            let v = self.grid.linear([x as usize, y as usize, z]);
            let known = self.voxel_class(v) != VoxelClass::Unknown;
            let value = match layer {
                MapLayer::Occupancy => self.occupancy(v),
                MapLayer::Semantics if known => {
                    super::argmax(&self.semantic_probs(v)) as f64 / k
                }
                MapLayer::Uncertainty => self.model_uncertainty(v).unwrap_or(0.0),
                MapLayer::TrainCount => self.train_count[v] as f64 / max_t,
                MapLayer::Semantics => 0.0,
            };
            Luma([(value.clamp(0.0, 1.0) * 255.0).round() as u8])
        }))
    }

    /// Writes `<layer>_z<k>.pgm` for every layer and height into `dir`.
    pub fn export_slices(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let layers = [
            (MapLayer::Occupancy, "occupancy"),
            (MapLayer::Semantics, "semantics"),
            (MapLayer::Uncertainty, "uncertainty"),
            (MapLayer::TrainCount, "train_count"),
        ];
        for z in 0..self.grid.dims[2] {
            for (layer, name) in layers {
                self.slice_image(layer, z)?
                    .save_with_format(dir.join(format!("{name}_z{z}.pgm")), image::ImageFormat::Pnm)?;
            }
        }
        Ok(())
    }
}
