//! Binary model checkpoints.
//!
//! Little-endian layout:
//!
//! ```text
//! offset  size  field
//! 0       8     magic "LNAVCKP1"
//! 8       4     u32 version (1)
//! 12      4     u32 latent_dim
//! 16      4     u32 image_height
//! 20      4     u32 image_width
//! 24      4     u32 channels
//! 28      4     u32 likelihood code (0 = gaussian_unit_variance, 1 = bernoulli)
//! 32      4     u32 encoder hidden layer count, then that many u32 sizes
//! ...     4     u32 decoder hidden layer count, then that many u32 sizes
//! ...     8*n   parameter tensors as f64 arrays, in the fixed order
//!               encoder trunk layers, mu head, log-var head, decoder layers;
//!               each layer row-major weights then bias
//! ```
//!
//! A round trip reproduces every parameter bit exactly.

use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor;
use crate::vae::{Likelihood, ModelConfig, ModelParams};

pub const MAGIC: &[u8; 8] = b"LNAVCKP1";
pub const VERSION: u32 = 1;

pub fn save_checkpoint(params: &ModelParams, path: &Path) -> Result<()> {
    let config = params.config();
    let mut bytes = Vec::new();
    bytes.extend_from_slice(MAGIC);
    for v in [
        VERSION,
        config.latent_dim as u32,
        config.image_height as u32,
        config.image_width as u32,
        config.channels as u32,
        config.likelihood.code(),
    ] {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    bytes.extend_from_slice(&(config.encoder_hidden.len() as u32).to_le_bytes());
    for &s in &config.encoder_hidden {
        bytes.extend_from_slice(&(s as u32).to_le_bytes());
    }
    bytes.extend_from_slice(&(config.decoder_hidden.len() as u32).to_le_bytes());
    for &s in &config.decoder_hidden {
        bytes.extend_from_slice(&(s as u32).to_le_bytes());
    }
    for tensor in params.tensors() {
        for v in tensor.data() {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    crate::fsio::write_atomic(path, &bytes)
}

pub fn load_checkpoint(path: &Path) -> Result<ModelParams> {
    let name = path.display().to_string();
    let bytes = std::fs::read(path).map_err(|e| Error::io(name.clone(), e))?;
    let mut cursor = Cursor {
        bytes: &bytes,
        offset: 0,
        path: &name,
    };

    let magic = cursor.take(8)?;
    if magic != MAGIC {
        return Err(Error::BadMagic {
            path: name.clone(),
            expected: String::from_utf8_lossy(MAGIC).into_owned(),
        });
    }
    let version = cursor.u32()?;
    if version != VERSION {
        return Err(Error::UnsupportedVersion {
            path: name.clone(),
            found: version,
            supported: VERSION,
        });
    }
    let latent_dim = cursor.u32()? as usize;
    let image_height = cursor.u32()? as usize;
    let image_width = cursor.u32()? as usize;
    let channels = cursor.u32()? as usize;
    let likelihood_code = cursor.u32()?;
    let likelihood = Likelihood::from_code(likelihood_code).ok_or_else(|| {
        Error::malformed(&name, format!("unknown likelihood code {likelihood_code}"))
    })?;
    let enc_count = cursor.u32()? as usize;
    let encoder_hidden: Vec<usize> = (0..enc_count)
        .map(|_| cursor.u32().map(|v| v as usize))
        .collect::<Result<_>>()?;
    let dec_count = cursor.u32()? as usize;
    let decoder_hidden: Vec<usize> = (0..dec_count)
        .map(|_| cursor.u32().map(|v| v as usize))
        .collect::<Result<_>>()?;

    let config = ModelConfig {
        latent_dim,
        image_height,
        image_width,
        channels,
        encoder_hidden,
        decoder_hidden,
        likelihood,
    };
    config.validate().map_err(|e| Error::malformed(&name, e.to_string()))?;

    let shapes: Vec<Vec<usize>> = config
        .all_layers()
        .iter()
        .flat_map(|l| vec![vec![l.output, l.input], vec![l.output]])
        .collect();
    let value_count: usize = shapes.iter().map(|s| s.iter().product::<usize>()).sum();
    let expected_total = cursor.offset as u64 + 8 * value_count as u64;
    if (bytes.len() as u64) < expected_total {
        return Err(Error::Truncated {
            path: name.clone(),
            expected: expected_total,
            actual: bytes.len() as u64,
        });
    }
    if bytes.len() as u64 > expected_total {
        return Err(Error::malformed(
            &name,
            format!(
                "{} trailing bytes after parameter data",
                bytes.len() as u64 - expected_total
            ),
        ));
    }

    let mut tensors = Vec::with_capacity(shapes.len());
    for shape in &shapes {
        let count: usize = shape.iter().product();
        let mut data = Vec::with_capacity(count);
        for _ in 0..count {
            let raw = cursor.take(8)?;
            data.push(f64::from_le_bytes(raw.try_into().expect("8 bytes")));
        }
        tensors.push(Tensor::from_vec(shape, data)?);
    }
    ModelParams::from_tensors(config, tensors)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    offset: usize,
    path: &'a str,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.offset + n > self.bytes.len() {
            return Err(Error::Truncated {
                path: self.path.to_string(),
                expected: (self.offset + n) as u64,
                actual: self.bytes.len() as u64,
            });
        }
        let slice = &self.bytes[self.offset..self.offset + n];
        self.offset += n;
        Ok(slice)
    }

    fn u32(&mut self) -> Result<u32> {
        let raw = self.take(4)?;
        Ok(u32::from_le_bytes(raw.try_into().expect("4 bytes")))
    }
}
