//! Binary checkpoint format.
//!
//! Layout: magic `"STRL1"`, then a little-endian u32 header
//! (dtype bits, epoch, adam step, n_u, n_v), the model config as
//! length-prefixed JSON, a length-prefixed id-map reference string, and
//! finally length-prefixed named tensor blocks (u32 name length, name
//! bytes, u32 rows, u32 cols, row-major floats at the stated width)
//! covering θ, φ and both Adam moment sets. The dtype field makes an
//! f64 run resumable bit-for-bit; f32 checkpoints store 32-bit floats.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use crate::diff::{Adam, ParamSet, Tensor};
use crate::nets::{ModelConfig, ModelState};
use crate::scalar::{Dtype, Scalar};

use super::TrainError;

const MAGIC: &[u8; 5] = b"STRL1";

/// Everything needed to resume a run.
#[derive(Debug)]
pub struct Checkpoint<S: Scalar> {
    pub state: ModelState<S>,
    pub optimizer: Adam<S>,
    pub epoch: usize,
    pub idmap_ref: String,
}

fn put_u32(buf: &mut Vec<u8>, x: u32) {
    buf.extend_from_slice(&x.to_le_bytes());
}

fn put_bytes(buf: &mut Vec<u8>, b: &[u8]) {
    put_u32(buf, b.len() as u32);
    buf.extend_from_slice(b);
}

fn put_block<S: Scalar>(buf: &mut Vec<u8>, name: &str, t: &Tensor<S>) {
    put_bytes(buf, name.as_bytes());
    put_u32(buf, t.rows() as u32);
    put_u32(buf, t.cols() as u32);
    for &x in t.data() {
        match S::DTYPE {
            Dtype::F32 => buf.extend_from_slice(&(x.as_f64() as f32).to_le_bytes()),
            Dtype::F64 => buf.extend_from_slice(&x.as_f64().to_le_bytes()),
        }
    }
}

pub fn save_checkpoint<S: Scalar>(
    path: &Path,
    state: &ModelState<S>,
    optimizer: &Adam<S>,
    epoch: usize,
    idmap_ref: &str,
) -> Result<(), TrainError> {
    let io_err = |source| TrainError::Io { path: path.to_path_buf(), source };

    let n_u = state.theta.get("u0").map_or(0, Tensor::rows);
    let n_v = state.theta.get("v0").map_or(0, Tensor::rows);
    let config_json = serde_json::to_vec(&state.config)
        .map_err(|e| TrainError::Config(format!("serializing config: {e}")))?;

    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    put_u32(&mut buf, S::DTYPE.bits());
    put_u32(&mut buf, epoch as u32);
    put_u32(&mut buf, optimizer.step_count() as u32);
    put_u32(&mut buf, n_u as u32);
    put_u32(&mut buf, n_v as u32);
    put_bytes(&mut buf, &config_json);
    put_bytes(&mut buf, idmap_ref.as_bytes());

    let n_blocks = state.theta.len()
        + state.phi.len()
        + 2 * optimizer.moments().count();
    put_u32(&mut buf, n_blocks as u32);
    for (name, t) in state.theta.iter() {
        put_block(&mut buf, &format!("theta.{name}"), t);
    }
    for (name, t) in state.phi.iter() {
        put_block(&mut buf, &format!("phi.{name}"), t);
    }
    for (name, m, v) in optimizer.moments() {
        put_block(&mut buf, &format!("adam.m.{name}"), m);
        put_block(&mut buf, &format!("adam.v.{name}"), v);
    }

    // write-then-rename so an interrupted save never clobbers the last good file
    let tmp = path.with_extension("tmp");
    fs::File::create(&tmp)
        .and_then(|mut f| f.write_all(&buf).and_then(|()| f.sync_all()))
        .map_err(io_err)?;
    fs::rename(&tmp, path).map_err(io_err)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn fail<T>(&self, msg: impl Into<String>) -> Result<T, TrainError> {
        Err(TrainError::Checkpoint { path: self.path.to_path_buf(), msg: msg.into() })
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], TrainError> {
        if self.pos + n > self.buf.len() {
            return self.fail(format!("truncated at byte {}", self.pos));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, TrainError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn bytes(&mut self) -> Result<&'a [u8], TrainError> {
        let n = self.u32()? as usize;
        self.take(n)
    }
}

pub fn load_checkpoint<S: Scalar>(path: &Path) -> Result<Checkpoint<S>, TrainError> {
    let buf = fs::read(path).map_err(|source| TrainError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut r = Reader { buf: &buf, pos: 0, path };

    if r.take(MAGIC.len())? != MAGIC {
        return r.fail("bad magic: not a checkpoint file");
    }
    let bits = r.u32()?;
    let dtype = match Dtype::from_bits(bits) {
        Some(d) => d,
        None => return r.fail(format!("unknown dtype width {bits}")),
    };
    if dtype != S::DTYPE {
        return r.fail(format!(
            "precision mismatch: file stores {dtype}, requested {}",
            S::DTYPE
        ));
    }
    let epoch = r.u32()? as usize;
    let adam_step = r.u32()? as u64;
    let _n_u = r.u32()?;
    let _n_v = r.u32()?;
    let config: ModelConfig = serde_json::from_slice(r.bytes()?)
        .map_err(|e| TrainError::Checkpoint {
            path: path.to_path_buf(),
            msg: format!("config block: {e}"),
        })?;
    let idmap_ref = String::from_utf8_lossy(r.bytes()?).into_owned();

    let n_blocks = r.u32()? as usize;
    let mut theta = ParamSet::new();
    let mut phi = ParamSet::new();
    let mut moments: Vec<(String, Tensor<S>, Tensor<S>)> = Vec::new();
    let mut pending_m: Option<(String, Tensor<S>)> = None;
    for _ in 0..n_blocks {
        let name = String::from_utf8_lossy(r.bytes()?).into_owned();
        let rows = r.u32()? as usize;
        let cols = r.u32()? as usize;
        let width = (bits / 8) as usize;
        let raw = r.take(rows * cols * width)?;
        let data: Vec<S> = match dtype {
            Dtype::F32 => raw
                .chunks_exact(4)
                .map(|c| S::from_f64(f32::from_le_bytes(c.try_into().unwrap()) as f64))
                .collect(),
            Dtype::F64 => raw
                .chunks_exact(8)
                .map(|c| S::from_f64(f64::from_le_bytes(c.try_into().unwrap())))
                .collect(),
        };
        let t = Tensor::from_vec(rows, cols, data);
        if let Some(rest) = name.strip_prefix("theta.") {
            theta.insert(rest.to_string(), t);
        } else if let Some(rest) = name.strip_prefix("phi.") {
            phi.insert(rest.to_string(), t);
        } else if let Some(rest) = name.strip_prefix("adam.m.") {
            pending_m = Some((rest.to_string(), t));
        } else if let Some(rest) = name.strip_prefix("adam.v.") {
            match pending_m.take() {
                Some((m_name, m)) if m_name == rest => moments.push((m_name, m, t)),
                _ => return r.fail(format!("moment block {rest} without matching first moment")),
            }
        } else {
            return r.fail(format!("unrecognized block {name}"));
        }
    }
    if r.pos != buf.len() {
        return r.fail(format!("{} trailing bytes", buf.len() - r.pos));
    }

    let mut optimizer = Adam::new(&theta, S::from_f64(config.lr));
    optimizer.set_step(adam_step);
    for (name, m, v) in moments {
        if !optimizer.set_moments(&name, m, v) {
            return Err(TrainError::Checkpoint {
                path: path.to_path_buf(),
                msg: format!("moments for unknown parameter {name}"),
            });
        }
    }
    let state = ModelState { config, theta, phi, ema_tau: 0.0 };
    Ok(Checkpoint { state, optimizer, epoch, idmap_ref })
}

pub(super) fn checkpoint_path(out_dir: &Path) -> PathBuf {
    out_dir.join("checkpoint.bin")
}
