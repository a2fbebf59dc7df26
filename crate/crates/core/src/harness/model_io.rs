use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::diff::Tensor;
use crate::global::{GlobalConfig, GlobalParams};
use crate::local::{LocalConfig, LocalParams};
use crate::nn::{FNet, Trainable};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum SavedModel {
    Local(LocalParams),
    Global(GlobalParams),
}

#[derive(Serialize, Deserialize)]
struct TensorRecord {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum ModelFile {
    Local { dim: usize, config: LocalConfig, tensors: Vec<TensorRecord> },
    Global { dim: usize, config: GlobalConfig, tensors: Vec<TensorRecord> },
}

fn records(ts: Vec<&Tensor>) -> Vec<TensorRecord> {
    ts.into_iter().map(|t| TensorRecord { rows: t.rows(), cols: t.cols(), data: t.data().to_vec() }).collect()
}

fn fill(dst: Vec<&mut Tensor>, src: Vec<TensorRecord>) -> Result<()> {
    if dst.len() != src.len() {
        return Err(Error::invalid(format!("model file holds {} tensors, expected {}", src.len(), dst.len())));
    }
    for (i, (d, s)) in dst.into_iter().zip(src).enumerate() {
        if d.shape() != (s.rows, s.cols) || s.data.len() != s.rows * s.cols {
            return Err(Error::invalid(format!(
                "tensor {i} has shape {}x{}, expected {}x{}",
                s.rows,
                s.cols,
                d.rows(),
                d.cols()
            )));
        }
        *d = Tensor::new(s.rows, s.cols, s.data);
    }
    Ok(())
}

impl SavedModel {
    pub fn kind(&self) -> &'static str {
        match self {
            Self::Local(_) => "local",
            Self::Global(_) => "global",
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = match self {
            Self::Local(m) => ModelFile::Local { dim: m.dim(), config: m.cfg.clone(), tensors: records(m.tensors()) },
            Self::Global(m) => ModelFile::Global { dim: m.dim(), config: m.cfg.clone(), tensors: records(m.tensors()) },
        };
        let json = serde_json::to_string(&file)?;
        std::fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: ModelFile = serde_json::from_str(&text)?;
        match file {
            ModelFile::Local { dim, config, tensors } => {
                config.validate()?;
                let one = Tensor::vector(vec![1.0; dim]);
                let f = FNet::zeros(&config.f.hidden);
                let mut m = LocalParams { a: one.clone(), b: one, f, cfg: config };
                fill(m.tensors_mut(), tensors)?;
                Ok(Self::Local(m))
            }
            ModelFile::Global { dim, config, tensors } => {
                config.validate()?;
                let one = Tensor::vector(vec![1.0; dim]);
                let f = FNet::zeros(&config.f.hidden);
                let mut m = GlobalParams { a: one.clone(), b: one.clone(), c: one, f, cfg: config };
                fill(m.tensors_mut(), tensors)?;
                Ok(Self::Global(m))
            }
        }
    }
}
