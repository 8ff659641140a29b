//! Label-abundant classifier path and prompt tuning against frozen encoders.

use ndarray::{Array1, Array2, Axis};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::adjacency::{signed_adjacency, unsigned_adjacency, NormalizedAdjacency};
use crate::encoder::{backward_with_input, embed_isolated, forward, EmbeddingPair, EncoderInput, EncoderParams, InvariantScaling, OutputScaling};
use crate::graph::{AttributedGraph, EdgeRecord, Labels, NodeId};
use crate::rng::component_rng;
use crate::sampler::{connect_score, ConnectModel};
use crate::tensor::{write_tensor, TensorReader};
use crate::{Error, Result};

/// Fractions strictly above this use the classifier path.
pub const CLASSIFIER_THRESHOLD: f64 = 0.05;
pub const DEFAULT_PROMPTS: usize = 2;
pub const DEFAULT_K_INDUCED: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SupervisionPath {
    Classifier,
    SemiObjective,
}

pub fn choose_supervision_path(label_fraction: f64) -> Result<SupervisionPath> {
    if !(0.0..=1.0).contains(&label_fraction) {
        return Err(Error::Validation(format!("label fraction must lie in [0, 1], got {label_fraction}")));
    }
    Ok(if label_fraction > CLASSIFIER_THRESHOLD {
        SupervisionPath::Classifier
    } else {
        SupervisionPath::SemiObjective
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearClassifier {
    pub w: Vec<f64>,
    pub b: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClassifierConfig {
    pub epochs: usize,
    pub lr: f64,
    pub l2: f64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        ClassifierConfig { epochs: 500, lr: 0.5, l2: 1e-4 }
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl LinearClassifier {
    /// Probability of class 1 for each row.
    pub fn predict_proba(&self, h: &Array2<f64>) -> Result<Vec<f64>> {
        if h.ncols() != self.w.len() {
            return Err(Error::Validation(format!(
                "classifier expects {} columns, got {}",
                self.w.len(),
                h.ncols()
            )));
        }
        let w = Array1::from(self.w.clone());
        Ok(h.dot(&w).iter().map(|z| sigmoid(z + self.b)).collect())
    }

    pub fn predict(&self, h: &Array2<f64>) -> Result<Vec<usize>> {
        Ok(self.predict_proba(h)?.into_iter().map(|p| usize::from(p > 0.5)).collect())
    }

    /// Fraction of labelled rows predicted correctly.
    pub fn accuracy(&self, h: &Array2<f64>, labels: &Labels) -> Result<f64> {
        let pred = self.predict(h)?;
        if labels.is_empty() {
            return Err(Error::Validation("no labels to score".into()));
        }
        let mut hits = 0usize;
        for (&i, &c) in labels {
            let p = pred
                .get(i)
                .ok_or_else(|| Error::Validation(format!("label for node {i} out of range")))?;
            hits += usize::from(*p == c);
        }
        Ok(hits as f64 / labels.len() as f64)
    }
}

fn check_labels(labels: &Labels, n: usize) -> Result<()> {
    for (&i, &c) in labels {
        if i >= n {
            return Err(Error::Validation(format!("label for node {i} out of range 0..{n}")));
        }
        if c > 1 {
            return Err(Error::Validation(format!("node {i} has class {c}; expected 0 or 1")));
        }
    }
    Ok(())
}

/// Logistic regression on the labelled rows of frozen embeddings `h`,
/// full-batch gradient descent from a seeded small initialisation.
pub fn train_classifier(h: &Array2<f64>, labels: &Labels, cfg: &ClassifierConfig, seed: u64) -> Result<LinearClassifier> {
    check_labels(labels, h.nrows())?;
    if labels.len() < 2 {
        return Err(Error::Fit(format!("need at least 2 labelled nodes, got {}", labels.len())));
    }
    if labels.values().all(|&c| c == labels.values().next().copied().unwrap_or(0)) {
        return Err(Error::Fit("labels span a single class".into()));
    }
    if !(cfg.lr > 0.0 && cfg.lr.is_finite()) || !(cfg.l2 >= 0.0) {
        return Err(Error::Config("classifier lr must be positive and l2 non-negative".into()));
    }
    let rows: Vec<NodeId> = labels.keys().copied().collect();
    let x = h.select(Axis(0), &rows);
    let y = Array1::from_iter(labels.values().map(|&c| c as f64));
    let m = rows.len() as f64;
    let mut rng = component_rng(seed, "classifier-init");
    let mut w = Array1::from_shape_simple_fn(h.ncols(), || rng.random_range(-0.01..0.01));
    let mut b = 0.0;
    for _ in 0..cfg.epochs {
        let p = (x.dot(&w) + b).mapv(sigmoid);
        let err = &p - &y;
        let gw = x.t().dot(&err) / m + &w * cfg.l2;
        let gb = err.sum() / m;
        w.scaled_add(-cfg.lr, &gw);
        b -= cfg.lr * gb;
    }
    if !(w.iter().all(|v| v.is_finite()) && b.is_finite()) {
        return Err(Error::Fit("classifier weights became non-finite".into()));
    }
    Ok(LinearClassifier { w: w.to_vec(), b })
}

/// Learnable prompt nodes, one row of features each.
#[derive(Debug, Clone, PartialEq)]
pub struct PromptSet {
    pub features: Array2<f64>,
    pub k_induced: usize,
}

impl PromptSet {
    pub fn new(features: Array2<f64>, k_induced: usize) -> Result<Self> {
        if features.nrows() == 0 {
            return Err(Error::Config("need at least one prompt node".into()));
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation("prompt features must be finite".into()));
        }
        Ok(PromptSet { features, k_induced })
    }

    /// One prompt per class, each starting at the mean feature row of the
    /// nodes labelled with that class.
    pub fn from_labels(g: &AttributedGraph, labels: &Labels, k_induced: usize) -> Result<Self> {
        check_labels(labels, g.num_nodes())?;
        let x = g.features();
        let mut features = Array2::zeros((DEFAULT_PROMPTS, x.ncols()));
        for c in 0..DEFAULT_PROMPTS {
            let rows: Vec<NodeId> = labels.iter().filter(|(_, &k)| k == c).map(|(&i, _)| i).collect();
            if rows.is_empty() {
                return Err(Error::Validation(format!("no labelled node for class {c}")));
            }
            let mean = x.select(Axis(0), &rows).mean_axis(Axis(0)).expect("non-empty selection");
            features.row_mut(c).assign(&mean);
        }
        PromptSet::new(features, k_induced)
    }

    pub fn len(&self) -> usize {
        self.features.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.features.nrows() == 0
    }

    pub fn to_checkpoint(&self) -> String {
        let mut out = String::from("doctra-prompts 1\n");
        out.push_str(&format!("k_induced {}\n", self.k_induced));
        out.push_str(&format!("dims {} {}\n", self.features.nrows(), self.features.ncols()));
        write_tensor(&mut out, "features", &self.features);
        out.push_str("end\n");
        out
    }

    pub fn from_checkpoint(text: &str) -> Result<Self> {
        let mut r = TensorReader::new("prompt checkpoint", text);
        let (line, toks) = r.next_tokens()?;
        if toks != ["doctra-prompts", "1"] {
            return Err(Error::parse("prompt checkpoint", line, "not a doctra-prompts v1 checkpoint"));
        }
        let k_induced = r.keyed::<usize>("k_induced", 1)?[0];
        let d = r.keyed::<usize>("dims", 2)?;
        if d[0] == 0 || d[1] == 0 {
            return Err(Error::parse("prompt checkpoint", 3, "prompt dimensions must be positive"));
        }
        let features = r.tensor("features", d[0], d[1])?;
        r.finish()?;
        PromptSet::new(features, k_induced)
    }
}

/// Propagation operator shaped for `p`'s channel count.
pub fn adjacency_for(g: &AttributedGraph, p: &EncoderParams) -> NormalizedAdjacency {
    if p.dims.channels == 2 {
        signed_adjacency(g)
    } else {
        unsigned_adjacency(g)
    }
}

/// Frozen encoder state shared by prompt attachment and tuning.
pub struct PromptContext<'a> {
    pub frozen: &'a EncoderParams,
    pub graph: &'a AttributedGraph,
    /// Embeddings of `graph` without prompts.
    pub embeddings: &'a EmbeddingPair,
    pub connect: &'a ConnectModel,
    scaling: InvariantScaling,
}

impl<'a> PromptContext<'a> {
    pub fn new(
        frozen: &'a EncoderParams,
        graph: &'a AttributedGraph,
        embeddings: &'a EmbeddingPair,
        connect: &'a ConnectModel,
    ) -> Result<Self> {
        let adj = adjacency_for(graph, frozen);
        let input = EncoderInput::new(&adj, &graph.model_features())?;
        let raw = forward(&input, frozen, OutputScaling::None)?.embeddings;
        if embeddings.num_nodes() != graph.num_nodes() {
            return Err(Error::Validation("embedding rows do not match graph nodes".into()));
        }
        Ok(PromptContext { frozen, graph, embeddings, connect, scaling: InvariantScaling::of(&raw.invariant) })
    }

    /// Prompt features as the encoder sees them: prompts are users, so on
    /// heterogeneous graphs they carry the user one-hot.
    fn model_rows(&self, ps: &PromptSet) -> Array2<f64> {
        if !self.graph.is_heterogeneous() {
            return ps.features.clone();
        }
        let mut kind = Array2::zeros((ps.len(), 2));
        kind.column_mut(0).fill(1.0);
        ndarray::concatenate![Axis(1), ps.features, kind]
    }

    /// Real nodes each prompt links to: its top `k_induced` by Connect score,
    /// ties to the lower id.
    pub fn induced_edges(&self, ps: &PromptSet) -> Result<Vec<EdgeRecord>> {
        let n = self.graph.num_nodes();
        if ps.k_induced >= n {
            return Err(Error::Config(format!("k_induced ({}) must be below the node count ({n})", ps.k_induced)));
        }
        let prompts = embed_isolated(self.frozen, &self.model_rows(ps), &self.scaling)?;
        let joint = EmbeddingPair::new(
            ndarray::concatenate![Axis(0), self.embeddings.polarized, prompts.polarized],
            ndarray::concatenate![Axis(0), self.embeddings.invariant, prompts.invariant],
        )?;
        let mut edges = Vec::with_capacity(ps.len() * ps.k_induced);
        for p in 0..ps.len() {
            let mut scored = Vec::with_capacity(n);
            for j in 0..n {
                scored.push((connect_score(&joint, n + p, j, self.connect)?, j));
            }
            scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
            edges.extend(scored.iter().take(ps.k_induced).map(|&(_, j)| EdgeRecord::new(n + p, j)));
        }
        Ok(edges)
    }

    /// `graph` with the prompts appended as nodes `N..N+P`.
    pub fn attach(&self, ps: &PromptSet) -> Result<AttributedGraph> {
        let edges = self.induced_edges(ps)?;
        self.graph.extended(&ps.features, edges)
    }

    /// Polarized embeddings of the prompt-attached graph.
    pub fn attached_polarized(&self, ps: &PromptSet) -> Result<Array2<f64>> {
        let g = self.attach(ps)?;
        let adj = adjacency_for(&g, self.frozen);
        let input = EncoderInput::new(&adj, &g.model_features())?;
        Ok(forward(&input, self.frozen, OutputScaling::None)?.embeddings.polarized)
    }

    /// Class of the nearest prompt for every real node, in the attached graph.
    pub fn predict(&self, ps: &PromptSet) -> Result<Vec<usize>> {
        let h = self.attached_polarized(ps)?;
        let n = self.graph.num_nodes();
        Ok((0..n)
            .map(|i| {
                let mut best = (f64::INFINITY, 0);
                for p in 0..ps.len() {
                    let d = (&h.row(i) - &h.row(n + p)).mapv(|v| v * v).sum();
                    if d < best.0 {
                        best = (d, p);
                    }
                }
                best.1
            })
            .collect())
    }
}

/// Convenience wrapper: `g` plus prompt nodes and their induced edges.
pub fn attach_prompts(
    g: &AttributedGraph,
    e: &EmbeddingPair,
    m: &ConnectModel,
    ps: &PromptSet,
    frozen: &EncoderParams,
) -> Result<AttributedGraph> {
    PromptContext::new(frozen, g, e, m)?.attach(ps)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PromptTuneConfig {
    pub epochs: usize,
    pub lr: f64,
    pub momentum: f64,
}

impl Default for PromptTuneConfig {
    fn default() -> Self {
        PromptTuneConfig { epochs: 50, lr: 0.05, momentum: 0.9 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PromptTuneOutput {
    /// The lowest-loss prompts visited, including the start and the final step.
    pub prompts: PromptSet,
    /// `L_n` before each step.
    pub losses: Vec<f64>,
    /// `L_n` of the returned prompts.
    pub best_loss: f64,
}

/// `Σ_l ‖H^po_l − H^po_{prompt(class l)}‖` on the prompt-attached graph and
/// its gradient w.r.t. the prompt rows of `X`.
fn prompt_loss(ctx: &PromptContext<'_>, ps: &PromptSet, labels: &Labels) -> Result<(f64, Array2<f64>)> {
    let n = ctx.graph.num_nodes();
    let g = ctx.attach(ps)?;
    let adj = adjacency_for(&g, ctx.frozen);
    let input = EncoderInput::new(&adj, &g.model_features())?;
    let fwd = forward(&input, ctx.frozen, OutputScaling::None)?;
    let h = &fwd.embeddings.polarized;
    let mut loss = 0.0;
    let mut grad_po = Array2::<f64>::zeros(h.dim());
    for (&i, &c) in labels {
        let diff = &h.row(i) - &h.row(n + c);
        let d = diff.mapv(|v| v * v).sum().sqrt();
        loss += d;
        if d > 0.0 {
            let g = diff / d;
            grad_po.row_mut(i).scaled_add(1.0, &g);
            grad_po.row_mut(n + c).scaled_add(-1.0, &g);
        }
    }
    let grad_in = Array2::zeros(fwd.embeddings.invariant.dim());
    let (_, gx) = backward_with_input(&input, ctx.frozen, &fwd, &grad_po, &grad_in);
    Ok((loss, gx.slice(ndarray::s![n.., ..ps.features.ncols()]).to_owned()))
}

/// Tunes prompt features only, by momentum descent on the prompt loss with
/// the induced edges re-derived every epoch. The encoder is never written.
pub fn prompt_tune(ctx: &PromptContext<'_>, start: PromptSet, labels: &Labels, cfg: &PromptTuneConfig) -> Result<PromptTuneOutput> {
    if labels.is_empty() {
        return Err(Error::Validation("prompt tuning needs at least one label".into()));
    }
    check_labels(labels, ctx.graph.num_nodes())?;
    if let Some(&c) = labels.values().find(|&&c| c >= start.len()) {
        return Err(Error::Validation(format!("class {c} has no prompt node")));
    }
    let mut ps = start;
    let mut velocity = Array2::<f64>::zeros(ps.features.dim());
    let mut losses = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(f64, PromptSet)> = None;
    for epoch in 0..=cfg.epochs {
        let (loss, grad) = prompt_loss(ctx, &ps, labels)?;
        if !loss.is_finite() {
            return Err(Error::Divergence { epoch, msg: format!("prompt loss is {loss}") });
        }
        if !matches!(&best, Some((b, _)) if loss >= *b) {
            best = Some((loss, ps.clone()));
        }
        if epoch == cfg.epochs {
            break;
        }
        losses.push(loss);
        velocity = &velocity * cfg.momentum + &grad;
        ps.features.scaled_add(-cfg.lr, &velocity);
        if ps.features.iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence { epoch, msg: "prompt features became non-finite".into() });
        }
    }
    let (best_loss, prompts) = best.expect("at least one evaluation");
    Ok(PromptTuneOutput { prompts, losses, best_loss })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adjacency::normalized_adjacency;
    use crate::encoder::{embed, init_params, EncoderDims};
    use crate::tensor::grad_check;
    use ndarray::array;

    #[test]
    fn path_threshold_is_strict() {
        assert_eq!(choose_supervision_path(0.06).unwrap(), SupervisionPath::Classifier);
        assert_eq!(choose_supervision_path(0.05).unwrap(), SupervisionPath::SemiObjective);
        assert_eq!(choose_supervision_path(0.0).unwrap(), SupervisionPath::SemiObjective);
        assert!(choose_supervision_path(1.5).is_err());
        assert!(choose_supervision_path(f64::NAN).is_err());
    }

    #[test]
    fn separable_labels_are_fit_exactly() {
        let h = array![[-2.0, 0.1], [-1.5, -0.3], [-1.0, 0.4], [1.0, 0.2], [1.7, -0.1], [2.2, 0.3]];
        let labels: Labels = (0..6).map(|i| (i, usize::from(i >= 3))).collect();
        let c = train_classifier(&h, &labels, &ClassifierConfig::default(), 0).unwrap();
        assert_eq!(c.accuracy(&h, &labels).unwrap(), 1.0);
    }

    #[test]
    fn constant_embeddings_predict_majority() {
        let h = Array2::from_elem((5, 3), 0.7);
        let labels: Labels = [(0, 1), (1, 1), (2, 1), (3, 0), (4, 0)].into_iter().collect();
        let c = train_classifier(&h, &labels, &ClassifierConfig::default(), 0).unwrap();
        assert!((c.accuracy(&h, &labels).unwrap() - 0.6).abs() < 1e-12);
    }

    #[test]
    fn classifier_errors() {
        let h = Array2::zeros((3, 2));
        let one: Labels = [(0, 1), (1, 1)].into_iter().collect();
        assert!(matches!(train_classifier(&h, &one, &ClassifierConfig::default(), 0), Err(Error::Fit(_))));
        let bad: Labels = [(0, 1), (7, 0)].into_iter().collect();
        assert!(train_classifier(&h, &bad, &ClassifierConfig::default(), 0).is_err());
    }

    fn two_blocks() -> AttributedGraph {
        let mut edges = vec![];
        for block in [0usize, 6] {
            for i in 0..6 {
                for j in i + 1..6 {
                    if (i + j) % 2 == 1 {
                        edges.push(EdgeRecord::new(block + i, block + j));
                    }
                }
            }
        }
        edges.push(EdgeRecord::new(0, 6));
        let x = Array2::from_shape_fn((12, 3), |(i, j)| {
            let side = if i < 6 { 1.0 } else { -1.0 };
            side * (1.0 + 0.1 * j as f64) + 0.05 * ((i * 7 + j * 3) % 5) as f64
        });
        AttributedGraph::new(12, edges, x).unwrap()
    }

    #[test]
    fn attach_adds_nodes_and_edges_without_touching_the_graph() {
        let g = two_blocks();
        let p = init_params(EncoderDims::new(3, 4, 2, 2), 1).unwrap();
        let e = embed(&normalized_adjacency(&g), g.features(), &p).unwrap();
        let ps = PromptSet::new(Array2::from_elem((2, 3), 0.5), 3).unwrap();
        let g2 = attach_prompts(&g, &e, &ConnectModel::InnerProduct, &ps, &p).unwrap();
        assert_eq!(g2.num_nodes(), g.num_nodes() + 2);
        assert_eq!(g2.num_edges(), g.num_edges() + 2 * 3);
        assert_eq!(&g2.edges()[..g.num_edges()], g.edges());
        for i in 0..g.num_nodes() {
            let old = g.neighbors(i).unwrap();
            let new: Vec<_> = g2.neighbors(i).unwrap().iter().copied().filter(|&j| j < g.num_nodes()).collect();
            assert_eq!(old, new.as_slice());
        }
        let too_many = PromptSet::new(Array2::zeros((2, 3)), 12).unwrap();
        assert!(matches!(attach_prompts(&g, &e, &ConnectModel::InnerProduct, &too_many, &p), Err(Error::Config(_))));
    }

    #[test]
    fn prompt_copying_a_node_links_to_it() {
        // Node 3 is isolated, so its embedding equals the prompt's exactly
        // and has the largest norm under identity weights.
        let g = AttributedGraph::new(
            4,
            vec![EdgeRecord::new(0, 1), EdgeRecord::new(1, 2)],
            array![[0.1, 0.2], [0.2, 0.1], [0.1, 0.1], [2.0, 1.0]],
        )
        .unwrap();
        let mut p = init_params(EncoderDims::new(2, 2, 2, 2), 0).unwrap();
        for w in crate::tensor::TensorSet::tensors_mut(&mut p) {
            w.assign(&Array2::eye(2));
        }
        let e = embed(&normalized_adjacency(&g), g.features(), &p).unwrap();
        let ps = PromptSet::new(array![[2.0, 1.0]], 1).unwrap();
        let ctx = PromptContext::new(&p, &g, &e, &ConnectModel::InnerProduct).unwrap();
        let edges = ctx.induced_edges(&ps).unwrap();
        assert_eq!(edges, vec![EdgeRecord::new(4, 3)]);
    }

    #[test]
    fn tuning_leaves_encoder_untouched_and_epochs_zero_is_identity() {
        let g = two_blocks();
        let p = init_params(EncoderDims::new(3, 4, 2, 2), 2).unwrap();
        let digest = p.digest();
        let e = embed(&normalized_adjacency(&g), g.features(), &p).unwrap();
        let labels: Labels = [(1, 0), (8, 1)].into_iter().collect();
        let ctx = PromptContext::new(&p, &g, &e, &ConnectModel::InnerProduct).unwrap();
        let start = PromptSet::from_labels(&g, &labels, 3).unwrap();
        let none = prompt_tune(&ctx, start.clone(), &labels, &PromptTuneConfig { epochs: 0, ..Default::default() }).unwrap();
        assert_eq!(none.prompts, start);
        assert!(none.losses.is_empty());
        let out = prompt_tune(&ctx, start, &labels, &PromptTuneConfig::default()).unwrap();
        assert_eq!(p.digest(), digest);
        assert!(out.best_loss <= out.losses[0]);
        assert_eq!(out.losses.len(), PromptTuneConfig::default().epochs);
    }

    #[test]
    fn prompt_loss_gradient_matches_finite_differences() {
        // Fixed induced edges; gradient w.r.t. the prompt rows of X.
        let g = two_blocks();
        let p = init_params(EncoderDims::new(3, 4, 2, 2), 3).unwrap();
        let labels: Labels = [(1, 0), (2, 0), (8, 1)].into_iter().collect();
        let edges = vec![EdgeRecord::new(12, 1), EdgeRecord::new(13, 8)];
        let n = g.num_nodes();
        let objective = |f: &Array2<f64>| -> Result<(f64, Array2<f64>)> {
            let g2 = g.extended(f, edges.clone())?;
            let adj = adjacency_for(&g2, &p);
            let input = EncoderInput::new(&adj, &g2.model_features())?;
            let fwd = forward(&input, &p, OutputScaling::None)?;
            let h = &fwd.embeddings.polarized;
            let mut loss = 0.0;
            let mut gp = Array2::<f64>::zeros(h.dim());
            for (&i, &c) in &labels {
                let diff = &h.row(i) - &h.row(n + c);
                let d = diff.mapv(|v| v * v).sum().sqrt();
                loss += d;
                gp.row_mut(i).scaled_add(1.0 / d, &diff);
                gp.row_mut(n + c).scaled_add(-1.0 / d, &diff);
            }
            let gi = Array2::zeros(fwd.embeddings.invariant.dim());
            let (_, gx) = backward_with_input(&input, &p, &fwd, &gp, &gi);
            Ok((loss, gx.slice(ndarray::s![n.., ..]).to_owned()))
        };
        let start = array![[0.4, -0.2, 0.9], [-0.7, 0.3, 0.1]];
        let report = grad_check(objective, &start, 1e-5).unwrap();
        assert!(report.max_rel_error < 1e-5, "{report:?}");
    }

    #[test]
    fn prompt_checkpoint_roundtrips() {
        let ps = PromptSet::new(array![[0.1, -2.5e-7], [3.0, 1.0 / 3.0]], 10).unwrap();
        let text = ps.to_checkpoint();
        assert_eq!(PromptSet::from_checkpoint(&text).unwrap(), ps);
        assert!(PromptSet::from_checkpoint("doctra-prompts 2\n").is_err());
        assert!(PromptSet::from_checkpoint(&text.replace("end\n", "")).is_err());
    }
}
