//! `HRNN` weight file.
//!
//! ```text
//! offset  size  field
//! 0       4     magic "HRNN"
//! 4       2     version (u16, = 1)
//! 6       1     variant (0 = HC, 1 = C)
//! 7       1     reserved (0)
//! 8       16    feature_dim, hidden1, hidden2, mask_dim (u32 each)
//! 24      4*P   f32 tensors: gru1.{input_kernel, recurrent_kernel,
//!               input_bias, recurrent_bias}, gru2.{same}, out_kernel, out_bias
//! 24+4P   4     CRC-32 of every preceding byte
//! ```
//!
//! All integers and floats are little-endian. Kernels are row-major with
//! rows gate-blocked as (reset, update, candidate).

use std::fs;
use std::io::{self, Write};
use std::path::Path;

use super::{ArchConfig, GruWeights, ModelWeights, Variant, CONTEXT};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"HRNN";
pub const VERSION: u16 = 1;
const HEADER_LEN: usize = 24;
const CRC_LEN: usize = 4;

impl ModelWeights {
    pub fn to_bytes(&self) -> Vec<u8> {
        let a = &self.arch;
        let mut out = Vec::with_capacity(HEADER_LEN + 4 * self.param_count() + CRC_LEN);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.push(a.variant.code());
        out.push(0);
        for dim in [a.feature_dim, a.hidden1, a.hidden2, a.mask_dim] {
            out.extend_from_slice(&(dim as u32).to_le_bytes());
        }
        for v in self.values() {
            out.extend_from_slice(&v.to_le_bytes());
        }
        let crc = crc32fast::hash(&out);
        out.extend_from_slice(&crc.to_le_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_LEN + CRC_LEN {
            return Err(Error::Io(io::Error::new(
                io::ErrorKind::UnexpectedEof,
                format!(
                    "weight file truncated: {} bytes, header and checksum need {}",
                    bytes.len(),
                    HEADER_LEN + CRC_LEN
                ),
            )));
        }
        if &bytes[..4] != MAGIC {
            return Err(Error::Format(format!(
                "bad magic {:?} at offset 0, expected \"HRNN\"",
                String::from_utf8_lossy(&bytes[..4])
            )));
        }
        let version = u16::from_le_bytes([bytes[4], bytes[5]]);
        if version != VERSION {
            return Err(Error::Format(format!(
                "unsupported version {version} at offset 4, expected {VERSION}"
            )));
        }
        let variant = Variant::from_code(bytes[6]).ok_or_else(|| {
            Error::Format(format!("unknown variant code {} at offset 6", bytes[6]))
        })?;
        let dim = |i: usize| {
            let o = 8 + 4 * i;
            u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap()) as usize
        };
        let arch = ArchConfig {
            variant,
            feature_dim: dim(0),
            hidden1: dim(1),
            hidden2: dim(2),
            mask_dim: dim(3),
            context: CONTEXT,
        };
        arch.validate()?;

        let params = crate::complexity::param_count(&arch).total;
        let payload = bytes.len() - HEADER_LEN - CRC_LEN;
        if payload != 4 * params {
            return Err(Error::Validation(format!(
                "{arch} needs {params} weights ({} bytes) after the header, file holds {payload} bytes",
                4 * params
            )));
        }
        let body_end = bytes.len() - CRC_LEN;
        let stored = u32::from_le_bytes(bytes[body_end..].try_into().unwrap());
        let computed = crc32fast::hash(&bytes[..body_end]);
        if stored != computed {
            return Err(Error::Format(format!(
                "checksum mismatch at offset {body_end}: stored {stored:08x}, computed {computed:08x}"
            )));
        }

        let mut floats = bytes[HEADER_LEN..body_end]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()));
        let mut take = |n: usize| -> Vec<f32> { floats.by_ref().take(n).collect() };
        let mut read_gru = |m: usize, n: usize| {
            let mut g = GruWeights::zeros(m, n);
            g.input_kernel = take(3 * n * m);
            g.recurrent_kernel = take(3 * n * n);
            g.input_bias = take(3 * n);
            g.recurrent_bias = take(3 * n);
            g
        };
        let gru1 = read_gru(arch.layer1_input(), arch.hidden1);
        let gru2 = read_gru(arch.layer2_input(), arch.hidden2);
        let out_kernel = take(arch.mask_dim * arch.hidden2);
        let out_bias = take(arch.mask_dim);
        let w = ModelWeights {
            arch,
            gru1,
            gru2,
            out_kernel,
            out_bias,
        };
        w.validate()?;
        Ok(w)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path)
            .map_err(|e| Error::Io(io::Error::new(e.kind(), format!("{}: {e}", path.display()))))?;
        Self::from_bytes(&bytes).map_err(|e| match e {
            Error::Format(m) => Error::Format(format!("{}: {m}", path.display())),
            Error::Validation(m) => Error::Validation(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    /// Writes through a temporary file in the same directory, then renames.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let tmp = path.with_extension("hrnn.tmp");
        {
            let mut f = fs::File::create(&tmp)?;
            f.write_all(&self.to_bytes())?;
            f.sync_all()?;
        }
        fs::rename(&tmp, path)?;
        Ok(())
    }
}
