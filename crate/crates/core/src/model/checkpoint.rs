//! Checkpoint format: a magic line, one JSON header line, then the
//! parameters as little-endian `f64`.

use super::{Architecture, SurrogateModel};
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

const MAGIC: &str = "ACTIVESEG-CKPT";
const VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    version: u32,
    patch_radius: usize,
    channels: usize,
    hidden: [usize; 2],
    classes: usize,
    dropout: f64,
    seed: u64,
    params: usize,
}

impl SurrogateModel {
    pub fn write_checkpoint<W: Write>(&self, mut out: W) -> Result<()> {
        let header = Header {
            version: VERSION,
            patch_radius: self.arch.patch_radius,
            channels: self.arch.channels,
            hidden: self.arch.hidden,
            classes: self.arch.classes,
            dropout: self.dropout,
            seed: self.seed,
            params: self.params.len(),
        };
        writeln!(out, "{MAGIC}")?;
        writeln!(out, "{}", serde_json::to_string(&header)?)?;
        let mut bytes = Vec::with_capacity(self.params.len() * 8);
        for p in &self.params {
            bytes.extend_from_slice(&p.to_le_bytes());
        }
        out.write_all(&bytes)?;
        Ok(())
    }

    pub fn read_checkpoint<R: Read>(input: R) -> Result<Self> {
        let mut input = BufReader::new(input);
        let mut line = String::new();
        input.read_line(&mut line)?;
        if line.trim_end() != MAGIC {
            return Err(Error::format("checkpoint", "bad magic"));
        }
        line.clear();
        input.read_line(&mut line)?;
        let header: Header = serde_json::from_str(line.trim_end())?;
        if header.version != VERSION {
            return Err(Error::format("checkpoint", format!("unsupported version {}", header.version)));
        }
        let arch = Architecture {
            patch_radius: header.patch_radius,
            channels: header.channels,
            hidden: header.hidden,
            classes: header.classes,
        };
        if arch.param_count() != header.params {
            return Err(Error::format("checkpoint", "parameter count disagrees with architecture"));
        }
        let mut bytes = vec![0u8; header.params * 8];
        input.read_exact(&mut bytes)?;
        let params = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        SurrogateModel::from_params(arch, header.dropout, header.seed, params)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        let mut w = std::io::BufWriter::new(file);
        self.write_checkpoint(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read_checkpoint(std::fs::File::open(path)?)
    }
}
