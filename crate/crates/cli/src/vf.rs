//! Binary value-function files.
//!
//! Layout, all little-endian:
//!
//! ```text
//! "HJVF" | version u32 | dim u32 | dim × (min f64, max f64, count u32, periodic u8)
//! | bound f64 | model id (u32 length, UTF-8 bytes) | converged u8 | residual f64
//! | values f64 × Π count, row-major with the last axis fastest
//! ```
//!
//! Periodic axes store `max` as the wrap point, matching [`Axis`].

use std::path::Path;

use hjarl_core::adversary::BufferEntry;
use hjarl_core::hjsolver::SolveResult;
use hjarl_core::{Axis, Grid, ScalarField};

use crate::error::{CliError, Result};

pub const MAGIC: &[u8; 4] = b"HJVF";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct ValueFunctionFile {
    pub grid: Grid,
    pub bound: f64,
    pub model_id: String,
    pub converged: bool,
    pub residual: f64,
    pub values: Vec<f64>,
}

/// Why a byte stream is not a valid value-function file.
#[derive(Debug, PartialEq, Eq)]
pub struct FormatError(pub String);

impl ValueFunctionFile {
    pub fn from_result(result: &SolveResult, bound: f64, model_id: &str) -> Self {
        Self {
            grid: result.value.grid().clone(),
            bound,
            model_id: model_id.to_string(),
            converged: result.converged,
            residual: result.final_residual(),
            values: result.value.values().to_vec(),
        }
    }

    pub fn from_entry(entry: &BufferEntry) -> Self {
        Self::from_result(&entry.result, entry.bound, entry.model.model_id())
    }

    /// A solve result carrying only the final residual; the iteration history is not stored.
    pub fn to_result(&self) -> hjarl_core::Result<SolveResult> {
        Ok(SolveResult {
            value: ScalarField::new(self.grid.clone(), self.values.clone())?,
            residual_history: vec![self.residual],
            accumulated_time: 0.0,
            converged: self.converged,
        })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(64 + 8 * self.values.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.grid.dim() as u32).to_le_bytes());
        for a in self.grid.axes() {
            out.extend_from_slice(&a.lower.to_le_bytes());
            out.extend_from_slice(&a.upper.to_le_bytes());
            out.extend_from_slice(&(a.points as u32).to_le_bytes());
            out.push(a.periodic as u8);
        }
        out.extend_from_slice(&self.bound.to_le_bytes());
        out.extend_from_slice(&(self.model_id.len() as u32).to_le_bytes());
        out.extend_from_slice(self.model_id.as_bytes());
        out.push(self.converged as u8);
        out.extend_from_slice(&self.residual.to_le_bytes());
        for v in &self.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> std::result::Result<Self, FormatError> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(FormatError("bad magic".into()));
        }
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(FormatError(format!("unsupported format version {version}")));
        }
        let dim = r.u32()? as usize;
        if dim == 0 || dim > 16 {
            return Err(FormatError(format!("implausible dimension {dim}")));
        }
        let mut axes = Vec::with_capacity(dim);
        for _ in 0..dim {
            let lower = r.f64()?;
            let upper = r.f64()?;
            let points = r.u32()? as usize;
            let periodic = r.flag()?;
            axes.push(Axis {
                lower,
                upper,
                points,
                periodic,
            });
        }
        let grid = Grid::new(axes).map_err(|e| FormatError(e.to_string()))?;
        let bound = r.f64()?;
        let id_len = r.u32()? as usize;
        let model_id = std::str::from_utf8(r.take(id_len)?)
            .map_err(|_| FormatError("model id is not UTF-8".into()))?
            .to_string();
        let converged = r.flag()?;
        let residual = r.f64()?;
        let payload = r.rest();
        let expected = grid
            .len()
            .checked_mul(8)
            .ok_or_else(|| FormatError("grid too large".into()))?;
        if payload.len() != expected {
            return Err(FormatError(format!(
                "payload has {} bytes, header shape needs {expected}",
                payload.len()
            )));
        }
        let values = payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok(Self {
            grid,
            bound,
            model_id,
            converged,
            residual,
            values,
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| CliError::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
        Self::from_bytes(&bytes).map_err(|e| CliError::corrupt(path, e.0))
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> std::result::Result<&'a [u8], FormatError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| FormatError("truncated header".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> std::result::Result<u32, FormatError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> std::result::Result<f64, FormatError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn flag(&mut self) -> std::result::Result<bool, FormatError> {
        match self.take(1)?[0] {
            0 => Ok(false),
            1 => Ok(true),
            b => Err(FormatError(format!("flag byte {b} is neither 0 nor 1"))),
        }
    }

    fn rest(&mut self) -> &'a [u8] {
        let s = &self.bytes[self.pos..];
        self.pos = self.bytes.len();
        s
    }
}
