//! Polarization-disagreement indices over learned embeddings.

use ndarray::{Array2, ArrayView1, Axis};
use serde::{Deserialize, Serialize};

use crate::encoder::EmbeddingPair;
use crate::graph::EdgeRecord;
use crate::{Error, Result};

pub const EPS: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IndexVariant {
    Classic,
    Unified,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexReport {
    pub variant: IndexVariant,
    #[serde(rename = "P")]
    pub p: f64,
    #[serde(rename = "D")]
    pub d: f64,
    #[serde(rename = "I")]
    pub i: f64,
    pub normalized: f64,
}

impl IndexReport {
    fn new(variant: IndexVariant, p: f64, d: f64) -> Result<Self> {
        let i = p + d;
        Ok(IndexReport { variant, p, d, i, normalized: normalize_index(i)? })
    }
}

/// `I / (1 + I)`.
pub fn normalize_index(i: f64) -> Result<f64> {
    if i.is_nan() || i < 0.0 {
        return Err(Error::Validation(format!("index must be non-negative, got {i}")));
    }
    if i.is_infinite() {
        return Ok(1.0);
    }
    Ok(i / (1.0 + i))
}

/// Sum over columns of the population variance.
pub fn total_variance(h: &Array2<f64>) -> f64 {
    if h.nrows() == 0 {
        return 0.0;
    }
    h.var_axis(Axis(0), 0.0).sum()
}

/// Edge weights divided by their total, so `D` is a weighted mean over edges.
pub fn default_weights(edges: &[EdgeRecord]) -> Vec<f64> {
    let total: f64 = edges.iter().map(|e| e.weight).sum();
    if total <= 0.0 {
        return vec![0.0; edges.len()];
    }
    edges.iter().map(|e| e.weight / total).collect()
}

fn resolve_weights(edges: &[EdgeRecord], w: Option<&[f64]>, n: usize) -> Result<Vec<f64>> {
    if let Some(e) = edges.iter().find(|e| e.src >= n || e.dst >= n) {
        return Err(Error::Validation(format!("edge ({}, {}) out of range for {n} nodes", e.src, e.dst)));
    }
    match w {
        None => Ok(default_weights(edges)),
        Some(w) if w.len() != edges.len() => Err(Error::Validation(format!(
            "{} weights supplied for {} edges",
            w.len(),
            edges.len()
        ))),
        Some(w) => {
            if w.iter().any(|v| !v.is_finite() || *v < 0.0) {
                return Err(Error::Validation("edge weights must be finite and non-negative".into()));
            }
            Ok(w.to_vec())
        }
    }
}

fn distance(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// `P = Var(H)`, `D = Σ w_ij ‖H_i − H_j‖`.
pub fn classic_index(h: &Array2<f64>, edges: &[EdgeRecord], w: Option<&[f64]>) -> Result<IndexReport> {
    if h.nrows() < 2 {
        return Err(Error::Validation(format!("index needs at least 2 nodes, got {}", h.nrows())));
    }
    let w = resolve_weights(edges, w, h.nrows())?;
    let p = total_variance(h);
    let d = edges
        .iter()
        .zip(&w)
        .map(|(e, w)| w * distance(h.row(e.src), h.row(e.dst)))
        .sum();
    IndexReport::new(IndexVariant::Classic, p, d)
}

/// `P = Var(H^po) / (Var(H^in) + ε·s²)`,
/// `D = Σ w_ij ‖H^po_i − H^po_j‖ / (‖H^in_i − H^in_j‖ + ε·s)`, where
/// `s = sqrt(Var(H^in))` so that a joint rescaling leaves `I` unchanged.
pub fn unified_index(e: &EmbeddingPair, edges: &[EdgeRecord], w: Option<&[f64]>) -> Result<IndexReport> {
    let n = e.num_nodes();
    if n < 2 {
        return Err(Error::Validation(format!("index needs at least 2 nodes, got {n}")));
    }
    let w = resolve_weights(edges, w, n)?;
    let var_in = total_variance(&e.invariant);
    if var_in <= 0.0 {
        return Err(Error::DegenerateData("invariant embeddings have zero variance".into()));
    }
    let s = var_in.sqrt();
    let p = total_variance(&e.polarized) / (var_in + EPS * var_in);
    let d = edges
        .iter()
        .zip(&w)
        .map(|(r, w)| {
            let num = distance(e.polarized.row(r.src), e.polarized.row(r.dst));
            let den = distance(e.invariant.row(r.src), e.invariant.row(r.dst));
            w * num / (den + EPS * s)
        })
        .sum();
    IndexReport::new(IndexVariant::Unified, p, d)
}
