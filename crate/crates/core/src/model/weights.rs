//! Named weight tensors and the text manifest that lists them.
//!
//! Manifest lines are `<name> <relative path>` for tensor files and
//! `epsilon <layer> <float>` for per-layer GIN self weights.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::{Matrix, Vector};
use crate::tensor_file::{self, Tensor};

#[derive(Clone, Debug, Default, PartialEq)]
pub struct WeightSet {
    matrices: BTreeMap<String, Matrix>,
    vectors: BTreeMap<String, Vector>,
    epsilon: BTreeMap<usize, f32>,
}

impl WeightSet {
    pub fn insert_matrix(&mut self, name: impl Into<String>, m: Matrix) {
        self.matrices.insert(name.into(), m);
    }

    pub fn insert_vector(&mut self, name: impl Into<String>, v: Vector) {
        self.vectors.insert(name.into(), v);
    }

    pub fn set_epsilon(&mut self, layer: usize, eps: f32) -> Result<()> {
        if !eps.is_finite() {
            return Err(Error::NaN(format!("epsilon for layer {layer}")));
        }
        self.epsilon.insert(layer, eps);
        Ok(())
    }

    pub fn matrix(&self, name: &str) -> Result<&Matrix> {
        self.matrices
            .get(name)
            .ok_or_else(|| Error::MissingWeight(name.to_string()))
    }

    pub fn vector(&self, name: &str) -> Result<&Vector> {
        self.vectors
            .get(name)
            .ok_or_else(|| Error::MissingWeight(name.to_string()))
    }

    pub fn epsilon(&self, layer: usize) -> Result<f32> {
        self.epsilon
            .get(&layer)
            .copied()
            .ok_or_else(|| Error::MissingWeight(format!("epsilon {layer}")))
    }

    /// Reads a manifest and every tensor file it references. Paths are
    /// resolved relative to the manifest's directory.
    pub fn load(manifest: impl AsRef<Path>) -> Result<Self> {
        let manifest = manifest.as_ref();
        let base = manifest.parent().unwrap_or(Path::new("."));
        let text = fs::read_to_string(manifest)?;
        let mut out = Self::default();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let toks: Vec<&str> = content.split_whitespace().collect();
            let bad = |message: &str| Error::Parse {
                line,
                message: message.to_string(),
            };
            match toks[..] {
                ["epsilon", layer, eps] => {
                    let layer = layer.parse().map_err(|_| bad("bad layer index"))?;
                    let eps: f32 = eps.parse().map_err(|_| bad("bad epsilon"))?;
                    out.set_epsilon(layer, eps)?;
                }
                [name, path] => match tensor_file::read(base.join(path))? {
                    t if t.rank() == 1 => out.insert_vector(name, t.into_vector()?),
                    t if t.rank() == 2 => out.insert_matrix(name, t.into_matrix()?),
                    t => {
                        return Err(Error::Format(format!(
                            "`{name}` has rank {}, expected 1 or 2",
                            t.rank()
                        )))
                    }
                },
                _ => return Err(bad("expected `<name> <path>` or `epsilon <layer> <value>`")),
            }
        }
        Ok(out)
    }

    /// Writes `<name>.tnsr` files and a manifest named `manifest_name` into
    /// `dir`. Returns the manifest path.
    pub fn save(&self, dir: impl AsRef<Path>, manifest_name: &str) -> Result<std::path::PathBuf> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        let mut manifest = String::new();
        let tensors = self
            .matrices
            .iter()
            .map(|(n, m)| (n, Tensor::from(m)))
            .chain(self.vectors.iter().map(|(n, v)| (n, Tensor::from(v))));
        for (name, tensor) in tensors {
            let file = format!("{name}.tnsr");
            tensor_file::write(dir.join(&file), &tensor)?;
            writeln!(manifest, "{name} {file}").unwrap();
        }
        for (layer, eps) in &self.epsilon {
            // `{:?}` prints the shortest string that parses back exactly.
            writeln!(manifest, "epsilon {layer} {eps:?}").unwrap();
        }
        let path = dir.join(manifest_name);
        fs::write(&path, manifest)?;
        Ok(path)
    }
}
