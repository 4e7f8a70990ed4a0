//! TOML model files.
//!
//! ```toml
//! name = "symmetric scalar"
//! description = "A = -1, B = C = 1, K = 1/2 both ways"
//!
//! [[modes]]
//! a = { rows = 1, cols = 1, data = [[-1.0]] }
//! b = { rows = 1, cols = 1, data = [[1.0]] }
//! c = { rows = 1, cols = 1, data = [[1.0]] }
//!
//! [couplings."1->2"]
//! rows = 1
//! cols = 1
//! data = [[0.5]]
//! ```
//!
//! Modes are labelled from 1 in files; a coupling `"q->s"` is the reset map
//! applied when switching from mode `q` to mode `s` (shape `n_s x n_q`).
//! Couplings left out default to the identity.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use serde::{Deserialize, Serialize};
use swmor::{LssModel, Matrix, Mode, Vector};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatrixDoc {
    pub rows: usize,
    pub cols: usize,
    /// Row-major rows.
    pub data: Vec<Vec<f64>>,
}

impl MatrixDoc {
    pub fn from_matrix(m: &Matrix) -> Self {
        MatrixDoc {
            rows: m.nrows(),
            cols: m.ncols(),
            data: (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect(),
        }
    }

    pub fn to_matrix(&self, what: &str) -> Result<Matrix> {
        if self.data.len() != self.rows {
            bail!("{what}: declared {} rows but {} given", self.rows, self.data.len());
        }
        if let Some((i, row)) = self.data.iter().enumerate().find(|(_, r)| r.len() != self.cols) {
            bail!("{what}: row {} has {} entries, expected {}", i + 1, row.len(), self.cols);
        }
        Ok(Matrix::from_fn(self.rows, self.cols, |i, j| self.data[i][j]))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModeDoc {
    pub a: MatrixDoc,
    pub b: MatrixDoc,
    pub c: MatrixDoc,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelDoc {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_state: Option<Vec<f64>>,
    pub modes: Vec<ModeDoc>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub couplings: BTreeMap<String, MatrixDoc>,
}

/// A parsed model together with its metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelFile {
    pub name: Option<String>,
    pub description: Option<String>,
    pub model: LssModel,
}

fn parse_key(key: &str, modes: usize) -> Result<(usize, usize)> {
    let (q, s) = key.split_once("->").ok_or_else(|| anyhow!("coupling key {key:?} is not of the form \"q->s\""))?;
    let label = |v: &str| -> Result<usize> {
        let n: usize = v.trim().parse().with_context(|| format!("coupling key {key:?}: bad mode label {v:?}"))?;
        if n == 0 || n > modes {
            bail!("coupling key {key:?}: mode {n} does not exist (modes are 1..={modes})");
        }
        Ok(n - 1)
    };
    Ok((label(q)?, label(s)?))
}

impl ModelFile {
    pub fn new(model: LssModel) -> Self {
        ModelFile { name: None, description: None, model }
    }

    pub fn parse(text: &str) -> Result<Self> {
        let doc: ModelDoc = toml::from_str(text).map_err(|e| anyhow!("model file: {e}"))?;
        Self::from_doc(&doc)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("in {}", path.display()))
    }

    pub fn from_doc(doc: &ModelDoc) -> Result<Self> {
        let modes = doc
            .modes
            .iter()
            .enumerate()
            .map(|(i, m)| {
                let label = |x: &str| format!("mode {} {x}", i + 1);
                Ok(Mode::new(m.a.to_matrix(&label("A"))?, m.b.to_matrix(&label("B"))?, m.c.to_matrix(&label("C"))?))
            })
            .collect::<Result<Vec<_>>>()?;
        let couplings = doc
            .couplings
            .iter()
            .map(|(key, m)| Ok((parse_key(key, modes.len())?, m.to_matrix(&format!("coupling {key}"))?)))
            .collect::<Result<Vec<_>>>()?;
        let mut model = LssModel::new(modes, couplings)?;
        if let Some(x0) = &doc.initial_state {
            model = model.with_initial_state(Vector::from_column_slice(x0))?;
        }
        Ok(ModelFile { name: doc.name.clone(), description: doc.description.clone(), model })
    }

    pub fn to_doc(&self) -> ModelDoc {
        let model = &self.model;
        let modes = model
            .modes()
            .iter()
            .map(|m| ModeDoc {
                a: MatrixDoc::from_matrix(&m.a),
                b: MatrixDoc::from_matrix(&m.b),
                c: MatrixDoc::from_matrix(&m.c),
            })
            .collect();
        let mut couplings = BTreeMap::new();
        for q in 0..model.num_modes() {
            for s in 0..model.num_modes() {
                if q != s && model.is_explicit_coupling(q, s) {
                    couplings.insert(format!("{}->{}", q + 1, s + 1), MatrixDoc::from_matrix(model.coupling(q, s)));
                }
            }
        }
        ModelDoc {
            name: self.name.clone(),
            description: self.description.clone(),
            initial_state: model.initial_state().map(|x| x.iter().copied().collect()),
            modes,
            couplings,
        }
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(&self.to_doc()).context("serializing model")
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_toml()?).with_context(|| format!("writing {}", path.display()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SCALAR: &str = r#"
name = "symmetric scalar"

[[modes]]
a = { rows = 1, cols = 1, data = [[-1.0]] }
b = { rows = 1, cols = 1, data = [[1.0]] }
c = { rows = 1, cols = 1, data = [[1.0]] }

[[modes]]
a = { rows = 1, cols = 1, data = [[-1.0]] }
b = { rows = 1, cols = 1, data = [[1.0]] }
c = { rows = 1, cols = 1, data = [[1.0]] }

[couplings."1->2"]
rows = 1
cols = 1
data = [[0.5]]

[couplings."2->1"]
rows = 1
cols = 1
data = [[0.5]]
"#;

    #[test]
    fn parses_scalar_model() {
        let f = ModelFile::parse(SCALAR).unwrap();
        assert_eq!(f.name.as_deref(), Some("symmetric scalar"));
        assert_eq!(f.model.num_modes(), 2);
        assert_eq!(f.model.coupling(1, 0)[(0, 0)], 0.5);
    }

    #[test]
    fn round_trip() {
        let f = ModelFile::parse(SCALAR).unwrap();
        let again = ModelFile::parse(&f.to_toml().unwrap()).unwrap();
        assert_eq!(f, again);
    }

    #[test]
    fn syntax_errors_are_positioned() {
        let err = ModelFile::parse("name = \n[[modes]]").unwrap_err();
        assert!(format!("{err:#}").contains("line"), "{err:#}");
    }

    #[test]
    fn bad_coupling_key() {
        let text = SCALAR.replace("\"2->1\"", "\"2->3\"");
        let err = ModelFile::parse(&text).unwrap_err();
        assert!(format!("{err:#}").contains("mode 3 does not exist"));
    }

    #[test]
    fn ragged_rows_rejected() {
        let text = SCALAR.replacen("data = [[-1.0]]", "data = [[-1.0, 2.0]]", 1);
        let err = ModelFile::parse(&text).unwrap_err();
        assert!(format!("{err:#}").contains("mode 1 A"));
    }
}
