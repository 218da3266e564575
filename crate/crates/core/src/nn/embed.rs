use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use ndarray::Array2;

use super::mlp::{forward, ModelParams};
use crate::error::{Error, Result};

/// Last hidden representation (the classifier input) for every row of `x`.
pub fn embeddings(params: &ModelParams, x: &Array2<f64>) -> Result<Array2<f64>> {
    Ok(forward(params, x)?.hidden)
}

/// Writes embeddings as CSV with columns `e0..e{H-1}` and a trailing `label`.
pub fn export_embeddings(
    params: &ModelParams,
    x: &Array2<f64>,
    labels: &[usize],
    path: impl AsRef<Path>,
) -> Result<Array2<f64>> {
    let path = path.as_ref();
    if labels.len() != x.nrows() {
        return Err(Error::Shape(format!("{} labels for {} rows", labels.len(), x.nrows())));
    }
    let emb = embeddings(params, x)?;
    let io = |e| Error::io(path, e);
    let mut out = BufWriter::new(File::create(path).map_err(io)?);
    let header: Vec<String> = (0..emb.ncols()).map(|j| format!("e{j}")).collect();
    writeln!(out, "{},label", header.join(",")).map_err(io)?;
    for (row, y) in emb.rows().into_iter().zip(labels) {
        let cells: Vec<String> = row.iter().map(f64::to_string).collect();
        writeln!(out, "{},{y}", cells.join(",")).map_err(io)?;
    }
    out.flush().map_err(io)?;
    Ok(emb)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{init_mlp, MlpShape};

    #[test]
    fn shape_and_determinism() {
        let p = init_mlp(MlpShape::new(4, 2), 1).unwrap();
        let x = Array2::from_shape_fn((100, 4), |(i, j)| ((i * 7 + j) % 11) as f64 / 5.0 - 1.0);
        let labels: Vec<usize> = (0..100).map(|i| i % 2).collect();
        let dir = tempfile::tempdir().unwrap();
        let (a, b) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
        let emb = export_embeddings(&p, &x, &labels, &a).unwrap();
        export_embeddings(&p, &x, &labels, &b).unwrap();
        assert_eq!(emb.dim(), (100, 28));
        let text = std::fs::read_to_string(&a).unwrap();
        assert_eq!(text.lines().count(), 101);
        assert_eq!(text.lines().next().unwrap().split(',').count(), 29);
        assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    }

    #[test]
    fn zero_model_zero_embeddings() {
        let p = init_mlp(MlpShape::new(3, 2), 1).unwrap().zeros_like();
        let x = Array2::from_elem((5, 3), 1.7);
        assert!(embeddings(&p, &x).unwrap().iter().all(|&v| v == 0.0));
    }
}
