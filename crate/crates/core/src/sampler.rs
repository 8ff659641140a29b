//! Positive and silence-derived negative samples.
//!
//! A candidate `j` for anchor `i` is a silence negative when the two are not
//! linked, their connect score is low (`< σ1`), and yet the score would be high
//! (`> σ2`) once the anchor's polarized half is augmented. The fast path swaps
//! the augmented condition for an invariant-adaptor score above `σ3`.

use std::collections::BTreeSet;

use ndarray::{Array1, Array2, ArrayView1};
use rand::seq::IndexedRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::encoder::EmbeddingPair;
use crate::error::{Error, Result};
use crate::graph::{AttributedGraph, NodeId};
use crate::rng::{component_rng, Rng};
use crate::tensor::{write_tensor, Momentum, TensorReader, TensorSet};

/// Sequential left-to-right dot product, so every caller rounds identically.
pub(crate) fn dot(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    if let (Some(x), Some(y)) = (a.as_slice(), b.as_slice()) {
        let mut s = 0.0;
        for (p, q) in x.iter().zip(y) {
            s += p * q;
        }
        return s;
    }
    let mut s = 0.0;
    for (p, q) in a.iter().zip(b) {
        s += p * q;
    }
    s
}

/// `M(h) = relu(h · W_a) · W_b`.
#[derive(Debug, Clone, PartialEq)]
pub struct Adaptor {
    pub w_a: Array2<f64>,
    pub w_b: Array2<f64>,
}

impl Adaptor {
    pub fn input_dim(&self) -> usize {
        self.w_a.nrows()
    }

    pub fn apply_row(&self, h: ArrayView1<f64>) -> Array1<f64> {
        let hidden = h.dot(&self.w_a).mapv(|v| v.max(0.0));
        hidden.dot(&self.w_b)
    }

    /// Applies the map to every row.
    pub fn apply(&self, h: &Array2<f64>) -> Array2<f64> {
        let mut out = Array2::zeros((h.nrows(), self.w_b.ncols()));
        for (i, row) in h.outer_iter().enumerate() {
            out.row_mut(i).assign(&self.apply_row(row));
        }
        out
    }

    /// Exact identity on `d` dimensions: `relu(h) − relu(−h) = h`.
    pub fn identity(d: usize) -> Self {
        let eye = Array2::<f64>::eye(d);
        let w_a = ndarray::concatenate![ndarray::Axis(1), eye, -&eye];
        let w_b = ndarray::concatenate![ndarray::Axis(0), eye, -&eye];
        Adaptor { w_a, w_b }
    }

    /// Gradient with respect to the input row only.
    fn input_grad_row(&self, h: ArrayView1<f64>, g: ArrayView1<f64>) -> Array1<f64> {
        let z = h.dot(&self.w_a);
        let mut gz = self.w_b.dot(&g);
        gz.zip_mut_with(&z, |gv, zv| {
            if *zv <= 0.0 {
                *gv = 0.0;
            }
        });
        self.w_a.dot(&gz)
    }

    /// Weight gradients summed over rows, given output gradients `g`.
    fn backward_batch(&self, h: &Array2<f64>, g: &Array2<f64>) -> Adaptor {
        let z = h.dot(&self.w_a);
        let hidden = z.mapv(|v| v.max(0.0));
        let mut gz = g.dot(&self.w_b.t());
        gz.zip_mut_with(&z, |gv, zv| {
            if *zv <= 0.0 {
                *gv = 0.0;
            }
        });
        Adaptor { w_a: h.t().dot(&gz), w_b: hidden.t().dot(g) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ConnectKind {
    #[default]
    InnerProduct,
    AdaptorMlp,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ConnectModel {
    InnerProduct,
    /// `M(H) = M_po(H_po) ∥ M_in(H_in)`, scored by `M(H_i) · M(H_j)`.
    AdaptorMlp { polarized: Adaptor, invariant: Adaptor },
}

impl ConnectModel {
    pub fn kind(&self) -> ConnectKind {
        match self {
            ConnectModel::InnerProduct => ConnectKind::InnerProduct,
            ConnectModel::AdaptorMlp { .. } => ConnectKind::AdaptorMlp,
        }
    }

    /// Adaptor model whose score coincides with the inner product.
    pub fn identity_adaptors(d_po: usize, d_in: usize) -> Self {
        ConnectModel::AdaptorMlp { polarized: Adaptor::identity(d_po), invariant: Adaptor::identity(d_in) }
    }

    /// `doctra-connect 1`, a `kind` line, then for adaptors a `dims` line
    /// (`in hidden out` per branch) and the four weight tensors.
    pub fn to_checkpoint(&self) -> String {
        let mut out = String::from("doctra-connect 1\n");
        match self {
            ConnectModel::InnerProduct => out.push_str("kind inner-product\n"),
            ConnectModel::AdaptorMlp { polarized, invariant } => {
                out.push_str("kind adaptor-mlp\n");
                let dims = |a: &Adaptor| format!("{} {} {}", a.w_a.nrows(), a.w_a.ncols(), a.w_b.ncols());
                out.push_str(&format!("dims {} {}\n", dims(polarized), dims(invariant)));
                write_tensor(&mut out, "polarized.w_a", &polarized.w_a);
                write_tensor(&mut out, "polarized.w_b", &polarized.w_b);
                write_tensor(&mut out, "invariant.w_a", &invariant.w_a);
                write_tensor(&mut out, "invariant.w_b", &invariant.w_b);
            }
        }
        out.push_str("end\n");
        out
    }

    pub fn from_checkpoint(text: &str) -> Result<Self> {
        const SOURCE: &str = "connect checkpoint";
        let mut r = TensorReader::new(SOURCE, text);
        let (line, toks) = r.next_tokens()?;
        if toks != ["doctra-connect", "1"] {
            return Err(Error::parse(SOURCE, line, "not a doctra-connect v1 checkpoint"));
        }
        let (line, toks) = r.next_tokens()?;
        let model = match toks.as_slice() {
            ["kind", "inner-product"] => ConnectModel::InnerProduct,
            ["kind", "adaptor-mlp"] => {
                let d = r.keyed::<usize>("dims", 6)?;
                if d.contains(&0) {
                    return Err(Error::parse(SOURCE, line + 1, "adaptor dimensions must be positive"));
                }
                let polarized = Adaptor { w_a: r.tensor("polarized.w_a", d[0], d[1])?, w_b: r.tensor("polarized.w_b", d[1], d[2])? };
                let invariant = Adaptor { w_a: r.tensor("invariant.w_a", d[3], d[4])?, w_b: r.tensor("invariant.w_b", d[4], d[5])? };
                ConnectModel::AdaptorMlp { polarized, invariant }
            }
            _ => return Err(Error::parse(SOURCE, line, "expected `kind inner-product` or `kind adaptor-mlp`")),
        };
        r.finish()?;
        Ok(model)
    }

    fn check(&self, e: &EmbeddingPair) -> Result<()> {
        if let ConnectModel::AdaptorMlp { polarized, invariant } = self {
            if polarized.input_dim() != e.polarized.ncols() || invariant.input_dim() != e.invariant.ncols() {
                return Err(Error::Validation(format!(
                    "adaptor input dims ({}, {}) do not match embeddings ({}, {})",
                    polarized.input_dim(),
                    invariant.input_dim(),
                    e.polarized.ncols(),
                    e.invariant.ncols()
                )));
            }
        }
        Ok(())
    }
}

fn check_id(e: &EmbeddingPair, i: NodeId) -> Result<()> {
    if i < e.num_nodes() {
        Ok(())
    } else {
        Err(Error::Validation(format!("node {i} out of range 0..{}", e.num_nodes())))
    }
}

/// `Connect(i, j)` under `m`.
pub fn connect_score(e: &EmbeddingPair, i: NodeId, j: NodeId, m: &ConnectModel) -> Result<f64> {
    check_id(e, i)?;
    check_id(e, j)?;
    m.check(e)?;
    Ok(match m {
        ConnectModel::InnerProduct => {
            dot(e.polarized.row(i), e.polarized.row(j)) + dot(e.invariant.row(i), e.invariant.row(j))
        }
        ConnectModel::AdaptorMlp { polarized, invariant } => {
            let (pi, pj) = (polarized.apply_row(e.polarized.row(i)), polarized.apply_row(e.polarized.row(j)));
            let (qi, qj) = (invariant.apply_row(e.invariant.row(i)), invariant.apply_row(e.invariant.row(j)));
            dot(pi.view(), pj.view()) + dot(qi.view(), qj.view())
        }
    })
}

/// Link-predictor training settings for the adaptor model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitConfig {
    pub hidden: usize,
    pub epochs: usize,
    pub lr: f64,
    pub margin: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig { hidden: 16, epochs: 50, lr: 0.05, margin: 1.0 }
    }
}

#[derive(Clone)]
struct AdaptorPair {
    polarized: Adaptor,
    invariant: Adaptor,
}

impl TensorSet for AdaptorPair {
    fn tensors(&self) -> Vec<(&'static str, &Array2<f64>)> {
        vec![
            ("polarized.w_a", &self.polarized.w_a),
            ("polarized.w_b", &self.polarized.w_b),
            ("invariant.w_a", &self.invariant.w_a),
            ("invariant.w_b", &self.invariant.w_b),
        ]
    }

    fn tensors_mut(&mut self) -> Vec<&mut Array2<f64>> {
        vec![
            &mut self.polarized.w_a,
            &mut self.polarized.w_b,
            &mut self.invariant.w_a,
            &mut self.invariant.w_b,
        ]
    }
}

fn glorot(rng: &mut Rng, rows: usize, cols: usize) -> Array2<f64> {
    let limit = (6.0 / (rows + cols) as f64).sqrt();
    Array2::from_shape_simple_fn((rows, cols), || rng.random_range(-limit..=limit))
}

/// Fits a connect model. The inner product has no parameters and is returned
/// as is; the adaptor model is trained so observed edges outscore uniformly
/// drawn non-edges by `margin` (hinge loss, full batch).
pub fn fit_connect(
    g: &AttributedGraph,
    e: &EmbeddingPair,
    kind: ConnectKind,
    cfg: &FitConfig,
    seed: u64,
) -> Result<ConnectModel> {
    if kind == ConnectKind::InnerProduct {
        return Ok(ConnectModel::InnerProduct);
    }
    if g.num_edges() == 0 {
        return Err(Error::Fit("cannot fit a link predictor on an edgeless graph".into()));
    }
    if e.num_nodes() != g.num_nodes() {
        return Err(Error::Validation("embedding rows do not match graph nodes".into()));
    }
    if cfg.hidden == 0 {
        return Err(Error::Config("adaptor hidden width must be positive".into()));
    }
    let n = g.num_nodes();
    let mut rng = component_rng(seed, "connect-fit");
    let (d_po, d_in, d_a) = (e.polarized.ncols(), e.invariant.ncols(), cfg.hidden);
    let mut params = AdaptorPair {
        polarized: Adaptor { w_a: glorot(&mut rng, d_po, d_a), w_b: glorot(&mut rng, d_a, d_a) },
        invariant: Adaptor { w_a: glorot(&mut rng, d_in, d_a), w_b: glorot(&mut rng, d_a, d_a) },
    };
    // One non-edge per observed edge, drawn once.
    let mut triples = Vec::with_capacity(g.num_edges());
    for edge in g.edges() {
        if n <= g.degree(edge.src) + 1 {
            continue;
        }
        let k = loop {
            let k = rng.random_range(0..n);
            if k != edge.src && !g.is_edge(edge.src, k) {
                break k;
            }
        };
        triples.push((edge.src, edge.dst, k));
    }
    if triples.is_empty() {
        return Err(Error::Fit("graph is complete; no non-edges to contrast".into()));
    }
    // Fit on inputs scaled to unit RMS row norm, then fold the scale into W_a.
    let rms = |h: &Array2<f64>| {
        let s = (h.iter().map(|v| v * v).sum::<f64>() / h.nrows() as f64).sqrt();
        if s > 0.0 { s } else { 1.0 }
    };
    let (s_po, s_in) = (rms(&e.polarized), rms(&e.invariant));
    let (h_po, h_in) = (&e.polarized / s_po, &e.invariant / s_in);
    let mut opt = Momentum::new(&params, cfg.lr, 0.9);
    for _ in 0..cfg.epochs {
        let zp = params.polarized.apply(&h_po);
        let zi = params.invariant.apply(&h_in);
        let score = |a: usize, b: usize| dot(zp.row(a), zp.row(b)) + dot(zi.row(a), zi.row(b));
        let mut gp = Array2::<f64>::zeros(zp.dim());
        let mut gi = Array2::<f64>::zeros(zi.dim());
        let scale = 1.0 / triples.len() as f64;
        for &(i, j, k) in &triples {
            if cfg.margin - score(i, j) + score(i, k) <= 0.0 {
                continue;
            }
            // d/dz of (-z_i·z_j + z_i·z_k).
            for (z, gz) in [(&zp, &mut gp), (&zi, &mut gi)] {
                let diff = &z.row(k) - &z.row(j);
                gz.row_mut(i).scaled_add(scale, &diff);
                gz.row_mut(j).scaled_add(-scale, &z.row(i));
                gz.row_mut(k).scaled_add(scale, &z.row(i));
            }
        }
        let grads = AdaptorPair {
            polarized: params.polarized.backward_batch(&h_po, &gp),
            invariant: params.invariant.backward_batch(&h_in, &gi),
        };
        opt.step(&mut params, &grads);
        if !params.all_finite() {
            return Err(Error::Fit("adaptor weights became non-finite".into()));
        }
    }
    params.polarized.w_a /= s_po;
    params.invariant.w_a /= s_in;
    Ok(ConnectModel::AdaptorMlp { polarized: params.polarized, invariant: params.invariant })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum AugmentationKind {
    #[default]
    Perturbation,
    Interpolation,
}

/// Augmentation `f` applied to an anchor's polarized embedding.
#[derive(Debug, Clone, PartialEq)]
pub enum AugmentationSpec {
    /// `f(h) = h + μ` with `‖μ‖∞ ≤ bound`.
    Perturbation { bound: f64, mu: Array1<f64> },
    /// `f(h, h') = a·h + b·h'` with `a + b = 1`.
    Interpolation { a: f64, b: f64 },
}

impl AugmentationSpec {
    pub fn perturbation(bound: f64, dim: usize) -> Result<Self> {
        if !(bound >= 0.0 && bound.is_finite()) {
            return Err(Error::Config(format!("augmentation bound must be non-negative, got {bound}")));
        }
        Ok(AugmentationSpec::Perturbation { bound, mu: Array1::zeros(dim) })
    }

    pub fn interpolation(a: f64) -> Result<Self> {
        if !a.is_finite() {
            return Err(Error::Config(format!("interpolation weight must be finite, got {a}")));
        }
        Ok(AugmentationSpec::Interpolation { a, b: 1.0 - a })
    }

    /// Sets `μ`, clipping each coordinate into `[-B, B]`.
    pub fn set_mu(&mut self, value: ArrayView1<f64>) -> Result<()> {
        match self {
            AugmentationSpec::Perturbation { bound, mu } => {
                if value.len() != mu.len() {
                    return Err(Error::Argument(format!("mu has {} entries, expected {}", value.len(), mu.len())));
                }
                let b = *bound;
                mu.assign(&value.mapv(|v| v.clamp(-b, b)));
                Ok(())
            }
            AugmentationSpec::Interpolation { .. } => {
                Err(Error::Argument("interpolation has no perturbation vector".into()))
            }
        }
    }

    pub fn mu(&self) -> Option<&Array1<f64>> {
        match self {
            AugmentationSpec::Perturbation { mu, .. } => Some(mu),
            AugmentationSpec::Interpolation { .. } => None,
        }
    }
}

pub fn augment(spec: &AugmentationSpec, h_po: ArrayView1<f64>, other: Option<ArrayView1<f64>>) -> Result<Array1<f64>> {
    match spec {
        AugmentationSpec::Perturbation { bound, mu } => {
            if mu.len() != h_po.len() {
                return Err(Error::Argument(format!("mu has {} entries, h has {}", mu.len(), h_po.len())));
            }
            let b = *bound;
            Ok(&h_po + &mu.mapv(|v| v.clamp(-b, b)))
        }
        AugmentationSpec::Interpolation { a, b } => {
            let other = other.ok_or_else(|| Error::Argument("interpolation needs a partner vector".into()))?;
            if other.len() != h_po.len() {
                return Err(Error::Argument("partner vector length differs".into()));
            }
            Ok(&h_po * *a + &other * *b)
        }
    }
}

/// Either an absolute cutoff or a quantile of the anchor's candidate scores.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Threshold {
    Absolute(f64),
    Quantile(f64),
}

/// Resolved absolute thresholds for one anchor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplerThresholds {
    pub sigma1: f64,
    pub sigma2: f64,
    pub sigma3: f64,
}

impl SamplerThresholds {
    pub fn new(sigma1: f64, sigma2: f64, sigma3: f64) -> Self {
        SamplerThresholds { sigma1, sigma2, sigma3 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ThresholdRule {
    pub sigma1: Threshold,
    pub sigma2: Threshold,
    pub sigma3: Threshold,
}

impl Default for ThresholdRule {
    fn default() -> Self {
        ThresholdRule {
            sigma1: Threshold::Quantile(0.3),
            sigma2: Threshold::Quantile(0.7),
            sigma3: Threshold::Quantile(0.5),
        }
    }
}

/// Linear-interpolation quantile of unsorted values; `None` when empty.
pub fn quantile(values: &[f64], q: f64) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = q * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    Some(v[lo] + (v[hi] - v[lo]) * (pos - lo as f64))
}

impl ThresholdRule {
    pub fn validate(&self) -> Result<()> {
        for (name, t) in [("sigma1", self.sigma1), ("sigma2", self.sigma2), ("sigma3", self.sigma3)] {
            match t {
                Threshold::Quantile(q) if !(0.0..=1.0).contains(&q) => {
                    return Err(Error::Config(format!("{name} quantile must lie in [0, 1], got {q}")));
                }
                Threshold::Absolute(v) if v.is_nan() => {
                    return Err(Error::Config(format!("{name} is NaN")));
                }
                _ => {}
            }
        }
        match (self.sigma1, self.sigma2) {
            (Threshold::Quantile(a), Threshold::Quantile(b)) | (Threshold::Absolute(a), Threshold::Absolute(b))
                if a > b =>
            {
                Err(Error::Config(format!("sigma1 ({a}) exceeds sigma2 ({b})")))
            }
            _ => Ok(()),
        }
    }

    /// Resolves quantiles against one anchor's candidate scores.
    pub fn resolve(&self, base: &[f64], invariant: &[f64]) -> Result<SamplerThresholds> {
        let pick = |t: Threshold, values: &[f64]| match t {
            Threshold::Absolute(v) => v,
            Threshold::Quantile(q) => quantile(values, q).unwrap_or(f64::NAN),
        };
        let t = SamplerThresholds {
            sigma1: pick(self.sigma1, base),
            sigma2: pick(self.sigma2, base),
            sigma3: pick(self.sigma3, invariant),
        };
        if t.sigma1 > t.sigma2 {
            return Err(Error::Config(format!("resolved sigma1 ({}) exceeds sigma2 ({})", t.sigma1, t.sigma2)));
        }
        Ok(t)
    }
}

/// Per-epoch scoring snapshot: adaptor outputs (or raw embeddings for the
/// inner product) computed once so each pair costs one dot product.
pub struct Scorer<'a> {
    model: &'a ConnectModel,
    embeddings: &'a EmbeddingPair,
    z_po: Array2<f64>,
    z_in: Array2<f64>,
}

impl<'a> Scorer<'a> {
    pub fn new(model: &'a ConnectModel, e: &'a EmbeddingPair) -> Result<Self> {
        model.check(e)?;
        let (z_po, z_in) = match model {
            ConnectModel::InnerProduct => (
                e.polarized.as_standard_layout().into_owned(),
                e.invariant.as_standard_layout().into_owned(),
            ),
            ConnectModel::AdaptorMlp { polarized, invariant } => {
                (polarized.apply(&e.polarized), invariant.apply(&e.invariant))
            }
        };
        Ok(Scorer { model, embeddings: e, z_po, z_in })
    }

    pub fn num_nodes(&self) -> usize {
        self.z_po.nrows()
    }

    pub fn model(&self) -> &ConnectModel {
        self.model
    }

    pub fn score(&self, i: NodeId, j: NodeId) -> f64 {
        dot(self.z_po.row(i), self.z_po.row(j)) + dot(self.z_in.row(i), self.z_in.row(j))
    }

    /// Invariant-adaptor score `M_in(H_i^in) · M_in(H_j^in)`.
    pub fn invariant_score(&self, i: NodeId, j: NodeId) -> f64 {
        dot(self.z_in.row(i), self.z_in.row(j))
    }

    /// Largest score reachable by augmenting anchor `i`'s polarized half.
    pub fn augmented_max(&self, i: NodeId, j: NodeId, spec: &AugmentationSpec) -> f64 {
        let e = self.embeddings;
        match (self.model, spec) {
            (ConnectModel::InnerProduct, AugmentationSpec::Perturbation { bound, .. }) => {
                let l1: f64 = e.polarized.row(j).iter().map(|v| v.abs()).sum();
                self.score(i, j) + bound * l1
            }
            (_, AugmentationSpec::Interpolation { .. }) => {
                let h = augment(spec, e.polarized.row(i), Some(e.polarized.row(j))).expect("partner supplied");
                self.score_with_anchor(h.view(), i, j)
            }
            (ConnectModel::AdaptorMlp { polarized, .. }, AugmentationSpec::Perturbation { bound, .. }) => {
                self.ascend(polarized, i, j, *bound)
            }
        }
    }

    /// Gradient w.r.t. `μ` of the score of `f(H_i^po) = H_i^po + μ` against `j`.
    pub fn mu_gradient(&self, i: NodeId, j: NodeId, mu: ArrayView1<f64>) -> Array1<f64> {
        let e = self.embeddings;
        match self.model {
            ConnectModel::InnerProduct => e.polarized.row(j).to_owned(),
            ConnectModel::AdaptorMlp { polarized, .. } => {
                let x = &e.polarized.row(i) + &mu;
                polarized.input_grad_row(x.view(), self.z_po.row(j))
            }
        }
    }

    fn score_with_anchor(&self, h_po: ArrayView1<f64>, i: NodeId, j: NodeId) -> f64 {
        let po = match self.model {
            ConnectModel::InnerProduct => dot(h_po, self.z_po.row(j)),
            ConnectModel::AdaptorMlp { polarized, .. } => dot(polarized.apply_row(h_po).view(), self.z_po.row(j)),
        };
        po + dot(self.z_in.row(i), self.z_in.row(j))
    }

    /// Projected sign-gradient ascent on `μ` from zero, `ASCENT_STEPS` steps;
    /// returns the best score visited.
    fn ascend(&self, adaptor: &Adaptor, i: NodeId, j: NodeId, bound: f64) -> f64 {
        let h = self.embeddings.polarized.row(i);
        let target = self.z_po.row(j);
        let inv = dot(self.z_in.row(i), self.z_in.row(j));
        let mut mu = Array1::<f64>::zeros(h.len());
        let mut best = self.score(i, j);
        let step = bound / 2.0;
        for _ in 0..ASCENT_STEPS {
            let x = &h + &mu;
            let g = adaptor.input_grad_row(x.view(), target);
            mu.zip_mut_with(&g, |m, gv| *m = (*m + step * gv.signum()).clamp(-bound, bound));
            let s = dot(adaptor.apply_row((&h + &mu).view()).view(), target) + inv;
            best = best.max(s);
        }
        best
    }
}

pub const ASCENT_STEPS: usize = 5;

/// Every node other than `i` and its neighbours, ascending.
fn candidates(g: &AttributedGraph, i: NodeId) -> Vec<NodeId> {
    let nbrs = g.neighbors(i).unwrap_or(&[]);
    let mut out = Vec::with_capacity(g.num_nodes().saturating_sub(nbrs.len() + 1));
    let mut k = 0;
    for j in 0..g.num_nodes() {
        while k < nbrs.len() && nbrs[k] < j {
            k += 1;
        }
        if j != i && !(k < nbrs.len() && nbrs[k] == j) {
            out.push(j);
        }
    }
    out
}

fn check_anchor(g: &AttributedGraph, s: &Scorer<'_>, i: NodeId) -> Result<()> {
    if s.num_nodes() != g.num_nodes() {
        return Err(Error::Validation("embedding rows do not match graph nodes".into()));
    }
    if i >= g.num_nodes() {
        return Err(Error::Validation(format!("node {i} out of range 0..{}", g.num_nodes())));
    }
    Ok(())
}

/// Non-neighbour candidates of one anchor with their base and invariant scores.
#[derive(Debug, Clone, PartialEq)]
pub struct AnchorScores {
    pub anchor: NodeId,
    pub candidates: Vec<NodeId>,
    pub base: Vec<f64>,
    pub invariant: Vec<f64>,
}

impl Scorer<'_> {
    pub fn anchor_scores(&self, g: &AttributedGraph, i: NodeId) -> Result<AnchorScores> {
        check_anchor(g, self, i)?;
        let candidates = candidates(g, i);
        let base = candidates.iter().map(|&j| self.score(i, j)).collect();
        let invariant = candidates.iter().map(|&j| self.invariant_score(i, j)).collect();
        Ok(AnchorScores { anchor: i, candidates, base, invariant })
    }
}

fn exact_from(s: &AnchorScores, scorer: &Scorer<'_>, t: &SamplerThresholds, spec: &AugmentationSpec) -> Result<BTreeSet<NodeId>> {
    if t.sigma1 > t.sigma2 {
        return Err(Error::Config(format!("sigma1 ({}) exceeds sigma2 ({})", t.sigma1, t.sigma2)));
    }
    Ok(s.candidates
        .iter()
        .zip(&s.base)
        .filter(|(&j, &b)| b < t.sigma1 && scorer.augmented_max(s.anchor, j, spec) > t.sigma2)
        .map(|(&j, _)| j)
        .collect())
}

fn fast_from(s: &AnchorScores, scorer: &Scorer<'_>, t: &SamplerThresholds) -> Result<BTreeSet<NodeId>> {
    if scorer.model().kind() != ConnectKind::AdaptorMlp {
        return Err(Error::UnsupportedModel("the fast sampler needs the decomposed adaptor model".into()));
    }
    Ok(s.candidates
        .iter()
        .zip(s.base.iter().zip(&s.invariant))
        .filter(|(_, (&b, &v))| b < t.sigma1 && v > t.sigma3)
        .map(|(&j, _)| j)
        .collect())
}

/// `{j ∉ N_i ∪ {i} : score(i,j) < σ1 and max_f score(f(H_i^po) ∥ H_i^in, H_j) > σ2}`.
pub fn sample_negatives_exact(
    g: &AttributedGraph,
    i: NodeId,
    scorer: &Scorer<'_>,
    t: &SamplerThresholds,
    spec: &AugmentationSpec,
) -> Result<BTreeSet<NodeId>> {
    exact_from(&scorer.anchor_scores(g, i)?, scorer, t, spec)
}

/// `{j ∉ N_i ∪ {i} : score(i,j) < σ1 and M_in(H_i^in)·M_in(H_j^in) > σ3}`.
pub fn sample_negatives_fast(
    g: &AttributedGraph,
    i: NodeId,
    scorer: &Scorer<'_>,
    t: &SamplerThresholds,
) -> Result<BTreeSet<NodeId>> {
    if scorer.model().kind() != ConnectKind::AdaptorMlp {
        return Err(Error::UnsupportedModel("the fast sampler needs the decomposed adaptor model".into()));
    }
    fast_from(&scorer.anchor_scores(g, i)?, scorer, t)
}

pub fn sample_positives(g: &AttributedGraph, i: NodeId) -> Result<BTreeSet<NodeId>> {
    Ok(g.neighbors(i)?.iter().copied().collect())
}

/// Thresholds for anchor `i` resolved over its non-neighbour candidates.
pub fn resolve_for_anchor(
    g: &AttributedGraph,
    i: NodeId,
    scorer: &Scorer<'_>,
    rule: &ThresholdRule,
) -> Result<SamplerThresholds> {
    let s = scorer.anchor_scores(g, i)?;
    rule.resolve(&s.base, &s.invariant)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum SamplerKind {
    Exact,
    #[default]
    Fast,
    /// Uniform non-neighbours; the ablation baseline.
    Uniform,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct AnchorSamples {
    pub positives: BTreeSet<NodeId>,
    pub negatives: BTreeSet<NodeId>,
}

/// Per-anchor positive and negative sets.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ContrastiveSampleSet {
    pub anchors: Vec<AnchorSamples>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct Triple {
    pub anchor: NodeId,
    pub positive: NodeId,
    pub negative: NodeId,
}

impl ContrastiveSampleSet {
    /// Every (anchor, positive, negative) combination; anchors lacking either
    /// side contribute nothing.
    pub fn triples(&self) -> Vec<Triple> {
        let mut out = Vec::new();
        for (anchor, s) in self.anchors.iter().enumerate() {
            for &positive in &s.positives {
                for &negative in &s.negatives {
                    out.push(Triple { anchor, positive, negative });
                }
            }
        }
        out
    }
}

/// Builds the sample set for every anchor, subsampling negatives to `n_neg`.
pub fn build_samples(
    g: &AttributedGraph,
    scorer: &Scorer<'_>,
    rule: &ThresholdRule,
    kind: SamplerKind,
    spec: &AugmentationSpec,
    n_neg: usize,
    rng: &mut Rng,
) -> Result<ContrastiveSampleSet> {
    rule.validate()?;
    let mut anchors = Vec::with_capacity(g.num_nodes());
    for i in 0..g.num_nodes() {
        let positives = sample_positives(g, i)?;
        if positives.is_empty() {
            anchors.push(AnchorSamples::default());
            continue;
        }
        let pool: Vec<NodeId> = match kind {
            SamplerKind::Uniform => candidates(g, i),
            SamplerKind::Exact | SamplerKind::Fast => {
                let scores = scorer.anchor_scores(g, i)?;
                let t = rule.resolve(&scores.base, &scores.invariant)?;
                let set = if kind == SamplerKind::Exact {
                    exact_from(&scores, scorer, &t, spec)?
                } else {
                    fast_from(&scores, scorer, &t)?
                };
                set.into_iter().collect()
            }
        };
        let negatives = if pool.len() > n_neg {
            pool.choose_multiple(rng, n_neg).copied().collect()
        } else {
            pool.into_iter().collect()
        };
        anchors.push(AnchorSamples { positives, negatives });
    }
    Ok(ContrastiveSampleSet { anchors })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::EdgeRecord;
    use ndarray::array;

    fn pair(po: Array2<f64>, inv: Array2<f64>) -> EmbeddingPair {
        EmbeddingPair::new(po, inv).unwrap()
    }

    #[test]
    fn inner_product_score() {
        let e = pair(array![[1.0, 0.0], [0.0, 1.0]], array![[1.0], [1.0]]);
        assert_eq!(connect_score(&e, 0, 1, &ConnectModel::InnerProduct).unwrap(), 1.0);
        let e = pair(array![[1.0], [0.0]], array![[0.0], [1.0]]);
        assert_eq!(connect_score(&e, 0, 1, &ConnectModel::InnerProduct).unwrap(), 0.0);
        assert!(connect_score(&e, 0, 2, &ConnectModel::InnerProduct).is_err());
    }

    #[test]
    fn connect_checkpoint_roundtrips() {
        let mut rng = component_rng(9, "t");
        let m = ConnectModel::AdaptorMlp {
            polarized: Adaptor { w_a: glorot(&mut rng, 3, 4), w_b: glorot(&mut rng, 4, 2) },
            invariant: Adaptor { w_a: glorot(&mut rng, 2, 4), w_b: glorot(&mut rng, 4, 2) },
        };
        let text = m.to_checkpoint();
        assert_eq!(ConnectModel::from_checkpoint(&text).unwrap(), m);
        let ip = ConnectModel::InnerProduct.to_checkpoint();
        assert_eq!(ConnectModel::from_checkpoint(&ip).unwrap(), ConnectModel::InnerProduct);
        assert!(ConnectModel::from_checkpoint("doctra-connect 1\nkind mlp\nend\n").is_err());
        assert!(ConnectModel::from_checkpoint(&text.replace("dims 3 4 2", "dims 3 0 2")).is_err());
        assert!(ConnectModel::from_checkpoint(&format!("{ip}x\n")).is_err());
    }

    #[test]
    fn adaptor_gradients_match_finite_differences() {
        use crate::tensor::grad_check;
        let h = Array2::from_shape_fn((5, 3), |(i, j)| ((i * 3 + j) as f64 * 0.7).sin() + 0.1);
        let g = Array2::from_shape_fn((5, 4), |(i, j)| ((i + 2 * j) as f64 * 1.3).cos());
        let mut rng = component_rng(3, "t");
        let start = AdaptorPair {
            polarized: Adaptor { w_a: glorot(&mut rng, 3, 4), w_b: glorot(&mut rng, 4, 4) },
            invariant: Adaptor { w_a: glorot(&mut rng, 3, 4), w_b: glorot(&mut rng, 4, 4) },
        };
        let objective = |p: &AdaptorPair| -> Result<(f64, AdaptorPair)> {
            let v = (&p.polarized.apply(&h) * &g).sum() + (&p.invariant.apply(&h) * &g).sum();
            let grads = AdaptorPair {
                polarized: p.polarized.backward_batch(&h, &g),
                invariant: p.invariant.backward_batch(&h, &g),
            };
            Ok((v, grads))
        };
        let report = grad_check(objective, &start, 1e-6).unwrap();
        assert!(report.max_rel_error < 1e-5, "{report:?}");

        let a = &start.polarized;
        let objective = |x: &Array2<f64>| -> Result<(f64, Array2<f64>)> {
            let v = dot(a.apply_row(x.row(0)).view(), g.row(0));
            let grad = a.input_grad_row(x.row(0), g.row(0)).insert_axis(ndarray::Axis(0));
            Ok((v, grad))
        };
        let x = h.slice(ndarray::s![0..1, ..]).to_owned();
        let report = grad_check(objective, &x, 1e-6).unwrap();
        assert!(report.max_rel_error < 1e-5, "{report:?}");
    }

    #[test]
    fn identity_adaptors_reproduce_inner_product() {
        let e = pair(array![[1.5, -2.0], [0.3, 0.7]], array![[-1.0], [4.0]]);
        let m = ConnectModel::identity_adaptors(2, 1);
        let a = connect_score(&e, 0, 1, &m).unwrap();
        let b = connect_score(&e, 0, 1, &ConnectModel::InnerProduct).unwrap();
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn augmentation_examples() {
        let spec = AugmentationSpec::perturbation(0.0, 2).unwrap();
        let h = array![1.0, -3.0];
        assert_eq!(augment(&spec, h.view(), None).unwrap(), h);

        let mut spec = AugmentationSpec::perturbation(2.0, 1).unwrap();
        spec.set_mu(array![-2.0].view()).unwrap();
        assert_eq!(augment(&spec, array![1.0].view(), None).unwrap(), array![-1.0]);
        spec.set_mu(array![-7.0].view()).unwrap();
        assert_eq!(spec.mu().unwrap(), &array![-2.0]);

        let interp = AugmentationSpec::interpolation(1.0).unwrap();
        assert_eq!(augment(&interp, h.view(), Some(array![9.0, 9.0].view())).unwrap(), h);
        assert!(matches!(augment(&interp, h.view(), None), Err(Error::Argument(_))));
    }

    fn line_graph_1d() -> (AttributedGraph, EmbeddingPair) {
        let g = AttributedGraph::new(3, vec![], Array2::zeros((3, 1))).unwrap();
        let e = pair(array![[1.0], [-1.0], [0.0]], array![[1.0], [1.0], [-1.0]]);
        (g, e)
    }

    #[test]
    fn exact_sampler_closed_form_example() {
        let (g, e) = line_graph_1d();
        let m = ConnectModel::InnerProduct;
        let s = Scorer::new(&m, &e).unwrap();
        let spec = AugmentationSpec::perturbation(2.0, 1).unwrap();
        let t = SamplerThresholds::new(0.5, 1.5, 0.0);
        let got = sample_negatives_exact(&g, 0, &s, &t, &spec).unwrap();
        assert_eq!(got, BTreeSet::from([1]));

        let zero = AugmentationSpec::perturbation(0.0, 1).unwrap();
        assert!(sample_negatives_exact(&g, 0, &s, &t, &zero).unwrap().is_empty());
        let bad = SamplerThresholds::new(2.0, 1.0, 0.0);
        assert!(matches!(sample_negatives_exact(&g, 0, &s, &bad, &spec), Err(Error::Config(_))));
    }

    #[test]
    fn neighbours_are_never_negatives() {
        let (_, e) = line_graph_1d();
        let g = AttributedGraph::new(3, vec![EdgeRecord::new(0, 1)], Array2::zeros((3, 1))).unwrap();
        let m = ConnectModel::InnerProduct;
        let s = Scorer::new(&m, &e).unwrap();
        let spec = AugmentationSpec::perturbation(2.0, 1).unwrap();
        let t = SamplerThresholds::new(0.5, 1.5, 0.0);
        assert!(sample_negatives_exact(&g, 0, &s, &t, &spec).unwrap().is_empty());
    }

    #[test]
    fn fast_sampler_examples() {
        let (g, e) = line_graph_1d();
        let m = ConnectModel::identity_adaptors(1, 1);
        let s = Scorer::new(&m, &e).unwrap();
        let t = SamplerThresholds::new(0.5, 1.5, 0.5);
        assert_eq!(sample_negatives_fast(&g, 0, &s, &t).unwrap(), BTreeSet::from([1]));
        let never = SamplerThresholds::new(0.5, 1.5, f64::INFINITY);
        assert!(sample_negatives_fast(&g, 0, &s, &never).unwrap().is_empty());

        let ip = ConnectModel::InnerProduct;
        let s = Scorer::new(&ip, &e).unwrap();
        assert!(matches!(sample_negatives_fast(&g, 0, &s, &t), Err(Error::UnsupportedModel(_))));
    }

    #[test]
    fn adaptor_ascent_never_falls_below_base() {
        let (g, e) = line_graph_1d();
        let mut rng = component_rng(0, "t");
        let m = ConnectModel::AdaptorMlp {
            polarized: Adaptor { w_a: glorot(&mut rng, 1, 4), w_b: glorot(&mut rng, 4, 3) },
            invariant: Adaptor { w_a: glorot(&mut rng, 1, 4), w_b: glorot(&mut rng, 4, 3) },
        };
        let s = Scorer::new(&m, &e).unwrap();
        let spec = AugmentationSpec::perturbation(1.0, 1).unwrap();
        for j in 1..3 {
            assert!(s.augmented_max(0, j, &spec) >= s.score(0, j));
        }
        let _ = g;
    }

    #[test]
    fn quantile_interpolates_linearly() {
        assert_eq!(quantile(&[3.0, 1.0, 2.0, 4.0], 0.5), Some(2.5));
        assert_eq!(quantile(&[5.0], 0.3), Some(5.0));
        assert_eq!(quantile(&[], 0.3), None);
        assert!((quantile(&[0.0, 10.0], 0.3).unwrap() - 3.0).abs() < 1e-12);
    }

    #[test]
    fn threshold_rule_validation() {
        assert!(ThresholdRule::default().validate().is_ok());
        let bad = ThresholdRule { sigma1: Threshold::Quantile(0.8), ..ThresholdRule::default() };
        assert!(bad.validate().is_err());
        let bad = ThresholdRule { sigma3: Threshold::Quantile(1.5), ..ThresholdRule::default() };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn fitted_adaptor_separates_two_cliques() {
        let mut edges = Vec::new();
        for block in 0..2 {
            for a in 0..5 {
                for b in a + 1..5 {
                    edges.push(EdgeRecord::new(block * 5 + a, block * 5 + b));
                }
            }
        }
        let g = AttributedGraph::new(10, edges, Array2::zeros((10, 1))).unwrap();
        let po = Array2::from_shape_fn((10, 2), |(i, j)| if (i < 5) == (j == 0) { 1.0 } else { -1.0 });
        let inv = Array2::from_shape_fn((10, 1), |(i, _)| i as f64 * 0.1);
        let e = pair(po, inv);
        let cfg = FitConfig { epochs: 200, ..FitConfig::default() };
        let m = fit_connect(&g, &e, ConnectKind::AdaptorMlp, &cfg, 1).unwrap();
        let (mut on, mut off, mut n_on, mut n_off) = (0.0, 0.0, 0, 0);
        for i in 0..10 {
            for j in i + 1..10 {
                let s = connect_score(&e, i, j, &m).unwrap();
                if g.is_edge(i, j) {
                    on += s;
                    n_on += 1;
                } else {
                    off += s;
                    n_off += 1;
                }
            }
        }
        assert!(on / n_on as f64 > off / n_off as f64);
        assert_eq!(m, fit_connect(&g, &e, ConnectKind::AdaptorMlp, &cfg, 1).unwrap());
        assert_eq!(
            fit_connect(&g, &e, ConnectKind::InnerProduct, &cfg, 1).unwrap(),
            ConnectModel::InnerProduct
        );
        let empty = AttributedGraph::new(10, vec![], Array2::zeros((10, 1))).unwrap();
        assert!(matches!(fit_connect(&empty, &e, ConnectKind::AdaptorMlp, &cfg, 1), Err(Error::Fit(_))));
    }
}
