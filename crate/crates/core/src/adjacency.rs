//! Symmetric normalised adjacency `D^{-1/2}(A+I)D^{-1/2}` in CSR form.

use ndarray::{Array2, ArrayView2};

use crate::graph::{AttributedGraph, EdgeRecord, Sign};

/// Compressed sparse row matrix, square.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    n: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMatrix {
    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.indptr[i]..self.indptr[i + 1];
        self.indices[span.clone()]
            .iter()
            .copied()
            .zip(self.values[span].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let span = self.indptr[i]..self.indptr[i + 1];
        match self.indices[span.clone()].binary_search(&j) {
            Ok(k) => self.values[span.start + k],
            Err(_) => 0.0,
        }
    }

    /// `self * rhs` for a dense right-hand side.
    pub fn matmul(&self, rhs: &ArrayView2<f64>) -> Array2<f64> {
        assert_eq!(self.n, rhs.nrows(), "sparse-dense shape mismatch");
        let mut out = Array2::zeros((self.n, rhs.ncols()));
        for i in 0..self.n {
            let mut out_row = out.row_mut(i);
            for (j, v) in self.row(i) {
                out_row.scaled_add(v, &rhs.row(j));
            }
        }
        out
    }

    pub fn to_dense(&self) -> Array2<f64> {
        let mut d = Array2::zeros((self.n, self.n));
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                d[[i, j]] = v;
            }
        }
        d
    }

    /// Normalises the weighted, undirected edge set plus unit self-loops.
    fn normalized(n: usize, edges: impl Iterator<Item = (usize, usize, f64)>) -> Self {
        let mut rows: Vec<Vec<(usize, f64)>> = (0..n).map(|i| vec![(i, 1.0)]).collect();
        for (a, b, w) in edges {
            rows[a].push((b, w));
            rows[b].push((a, w));
        }
        let mut degree = vec![0.0; n];
        for (i, row) in rows.iter_mut().enumerate() {
            row.sort_unstable_by_key(|(j, _)| *j);
            // Merge repeated columns (only possible through self-loops, which
            // the graph never stores, but keep the matrix well formed).
            row.dedup_by(|next, prev| {
                if next.0 == prev.0 {
                    prev.1 += next.1;
                    true
                } else {
                    false
                }
            });
            degree[i] = row.iter().map(|(_, w)| w).sum::<f64>();
        }
        let inv_sqrt: Vec<f64> = degree
            .iter()
            .map(|d| if *d > 0.0 { 1.0 / d.sqrt() } else { 0.0 })
            .collect();

        let mut indptr = Vec::with_capacity(n + 1);
        let mut indices = Vec::new();
        let mut values = Vec::new();
        indptr.push(0);
        for (i, row) in rows.into_iter().enumerate() {
            for (j, w) in row {
                indices.push(j);
                values.push(inv_sqrt[i] * w * inv_sqrt[j]);
            }
            indptr.push(indices.len());
        }
        SparseMatrix { n, indptr, indices, values }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum NormalizedAdjacency {
    Unsigned(SparseMatrix),
    /// Positive (including unsigned) and negative edges, each normalised on
    /// its own with its own self-loops.
    SignedPair {
        positive: SparseMatrix,
        negative: SparseMatrix,
    },
}

impl NormalizedAdjacency {
    pub fn num_nodes(&self) -> usize {
        self.channels()[0].dim()
    }

    /// Propagation operators in encoder channel order.
    pub fn channels(&self) -> Vec<&SparseMatrix> {
        match self {
            NormalizedAdjacency::Unsigned(a) => vec![a],
            NormalizedAdjacency::SignedPair { positive, negative } => vec![positive, negative],
        }
    }

    pub fn is_signed(&self) -> bool {
        matches!(self, NormalizedAdjacency::SignedPair { .. })
    }
}

fn triples<'a>(edges: impl Iterator<Item = &'a EdgeRecord> + 'a) -> impl Iterator<Item = (usize, usize, f64)> + 'a {
    edges.map(|e| (e.src, e.dst, e.weight))
}

/// Unsigned variant unless the graph carries negative edges, in which case
/// the signed pair is returned.
pub fn normalized_adjacency(g: &AttributedGraph) -> NormalizedAdjacency {
    if g.has_signed_edges() {
        signed_adjacency(g)
    } else {
        unsigned_adjacency(g)
    }
}

/// Union of all edges regardless of sign.
pub fn unsigned_adjacency(g: &AttributedGraph) -> NormalizedAdjacency {
    NormalizedAdjacency::Unsigned(SparseMatrix::normalized(g.num_nodes(), triples(g.edges().iter())))
}

pub fn signed_adjacency(g: &AttributedGraph) -> NormalizedAdjacency {
    let n = g.num_nodes();
    let pos = g.edges().iter().filter(|e| e.sign != Sign::Negative);
    let neg = g.edges().iter().filter(|e| e.sign == Sign::Negative);
    NormalizedAdjacency::SignedPair {
        positive: SparseMatrix::normalized(n, triples(pos)),
        negative: SparseMatrix::normalized(n, triples(neg)),
    }
}
