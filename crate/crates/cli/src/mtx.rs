//! Matrix Market reader for dense and coordinate real matrices.

use std::fs;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use swmor::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Symmetry {
    General,
    Symmetric,
    SkewSymmetric,
}

pub fn read_mtx(path: &Path) -> Result<Matrix> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse_mtx(&text).with_context(|| format!("in {}", path.display()))
}

pub fn parse_mtx(text: &str) -> Result<Matrix> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or_else(|| anyhow!("empty file"))?;
    let words: Vec<String> = header.split_whitespace().map(str::to_ascii_lowercase).collect();
    if words.len() != 5 || words[0] != "%%matrixmarket" || words[1] != "matrix" {
        bail!("line 1: not a Matrix Market matrix header");
    }
    let coordinate = match words[2].as_str() {
        "coordinate" => true,
        "array" => false,
        f => bail!("line 1: unsupported format {f:?}"),
    };
    match words[3].as_str() {
        "real" | "integer" | "double" => {}
        f => bail!("line 1: unsupported field {f:?} (only real and integer)"),
    }
    let symmetry = match words[4].as_str() {
        "general" => Symmetry::General,
        "symmetric" => Symmetry::Symmetric,
        "skew-symmetric" => Symmetry::SkewSymmetric,
        s => bail!("line 1: unsupported symmetry {s:?}"),
    };

    let mut body = lines.filter(|(_, l)| {
        let t = l.trim();
        !t.is_empty() && !t.starts_with('%')
    });
    let (size_line, size) = body.next().ok_or_else(|| anyhow!("missing size line"))?;
    let dims: Vec<usize> = size
        .split_whitespace()
        .map(|w| w.parse().with_context(|| format!("line {}: bad size {w:?}", size_line + 1)))
        .collect::<Result<_>>()?;
    let (rows, cols) = match (coordinate, dims.as_slice()) {
        (true, [r, c, _]) | (false, [r, c]) => (*r, *c),
        _ => bail!("line {}: malformed size line", size_line + 1),
    };
    if symmetry != Symmetry::General && rows != cols {
        bail!("line {}: symmetric storage needs a square matrix", size_line + 1);
    }

    let mut m = Matrix::zeros(rows, cols);
    let number = |w: &str, line: usize| -> Result<f64> {
        w.parse::<f64>().with_context(|| format!("line {}: bad number {w:?}", line + 1))
    };
    if coordinate {
        let nnz = dims[2];
        let mut seen = 0;
        for (line, l) in body {
            let f: Vec<&str> = l.split_whitespace().collect();
            if f.len() != 3 {
                bail!("line {}: expected `row col value`", line + 1);
            }
            let i: usize = f[0].parse().with_context(|| format!("line {}: bad row index", line + 1))?;
            let j: usize = f[1].parse().with_context(|| format!("line {}: bad column index", line + 1))?;
            if i == 0 || j == 0 || i > rows || j > cols {
                bail!("line {}: index ({i}, {j}) outside {rows}x{cols}", line + 1);
            }
            let v = number(f[2], line)?;
            m[(i - 1, j - 1)] += v;
            if i != j {
                match symmetry {
                    Symmetry::General => {}
                    Symmetry::Symmetric => m[(j - 1, i - 1)] += v,
                    Symmetry::SkewSymmetric => m[(j - 1, i - 1)] -= v,
                }
            }
            seen += 1;
        }
        if seen != nnz {
            bail!("expected {nnz} entries, found {seen}");
        }
    } else {
        // column-major; symmetric storage lists the lower triangle only
        let mut slots = Vec::new();
        for j in 0..cols {
            let start = match symmetry {
                Symmetry::General => 0,
                Symmetry::Symmetric => j,
                Symmetry::SkewSymmetric => j + 1,
            };
            slots.extend((start..rows).map(|i| (i, j)));
        }
        let mut values = Vec::with_capacity(slots.len());
        for (line, l) in body {
            for w in l.split_whitespace() {
                values.push(number(w, line)?);
            }
        }
        if values.len() != slots.len() {
            bail!("expected {} values, found {}", slots.len(), values.len());
        }
        for (&(i, j), &v) in slots.iter().zip(&values) {
            m[(i, j)] = v;
            match symmetry {
                Symmetry::General => {}
                Symmetry::Symmetric => m[(j, i)] = v,
                Symmetry::SkewSymmetric => m[(j, i)] = -v,
            }
        }
    }
    Ok(m)
}
