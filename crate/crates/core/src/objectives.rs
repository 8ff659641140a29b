//! Contrastive and supervision losses with analytic gradients, and the
//! alternating training loop.

use std::time::Instant;

use ndarray::{Array1, Array2, ArrayView1};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::adjacency::{normalized_adjacency, unsigned_adjacency, NormalizedAdjacency};
use crate::clustering::{self, Centroids};
use crate::encoder::{
    backward, forward, init_params, Branch, EmbeddingPair, EncoderDims, EncoderInput, EncoderParams, OutputScaling,
};
use crate::error::{Error, Result};
use crate::graph::{AttributedGraph, Labels, NodeId};
use crate::rng::{component_rng, derive_seed, Rng};
use crate::sampler::{
    build_samples, fit_connect, AugmentationKind, AugmentationSpec, ConnectKind, ConnectModel, ContrastiveSampleSet,
    FitConfig, SamplerKind, Scorer, ThresholdRule, Triple,
};
use crate::tensor::{Momentum, TensorSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum DistanceKind {
    #[default]
    Euclidean,
    /// `1 − cos(a, b)`.
    Cosine,
}

impl DistanceKind {
    pub fn eval(self, a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
        self.eval_grad(a, b).0
    }

    /// Distance and its gradients w.r.t. `a` and `b`. Non-differentiable
    /// points (coincident vectors, zero norms) get a zero gradient.
    pub fn eval_grad(self, a: ArrayView1<f64>, b: ArrayView1<f64>) -> (f64, Array1<f64>, Array1<f64>) {
        match self {
            DistanceKind::Euclidean => {
                let diff = &a - &b;
                let d = diff.dot(&diff).sqrt();
                if d == 0.0 {
                    return (0.0, Array1::zeros(a.len()), Array1::zeros(a.len()));
                }
                let ga = diff / d;
                let gb = -&ga;
                (d, ga, gb)
            }
            DistanceKind::Cosine => {
                let (na, nb) = (a.dot(&a).sqrt(), b.dot(&b).sqrt());
                if na == 0.0 || nb == 0.0 {
                    return (1.0, Array1::zeros(a.len()), Array1::zeros(a.len()));
                }
                let c = a.dot(&b) / (na * nb);
                let ga = -(&b / (na * nb) - &a * (c / (na * na)));
                let gb = -(&a / (na * nb) - &b * (c / (nb * nb)));
                (1.0 - c, ga, gb)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossConfig {
    pub lambda_f: f64,
    /// Weight on the labelled-node anchor term.
    pub lambda_n: f64,
    pub eps: f64,
    pub n_neg: usize,
    /// Feature-loss pairs drawn per node per epoch.
    pub pairs_per_node: usize,
    pub distance_i: DistanceKind,
    pub distance_f: DistanceKind,
    pub use_interaction: bool,
    pub use_feature: bool,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            lambda_f: 0.01,
            lambda_n: 10.0,
            eps: 1e-8,
            n_neg: 5,
            pairs_per_node: 10,
            distance_i: DistanceKind::Euclidean,
            distance_f: DistanceKind::Euclidean,
            use_interaction: true,
            use_feature: true,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda_f >= 0.0 && self.lambda_f.is_finite()) {
            return Err(Error::Config(format!("lambda_f must be non-negative, got {}", self.lambda_f)));
        }
        if !(self.lambda_n >= 0.0 && self.lambda_n.is_finite()) {
            return Err(Error::Config(format!("lambda_n must be non-negative, got {}", self.lambda_n)));
        }
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return Err(Error::Config(format!("eps must be positive, got {}", self.eps)));
        }
        if self.n_neg == 0 {
            return Err(Error::Config("n_neg must be positive".into()));
        }
        if self.pairs_per_node == 0 {
            return Err(Error::Config("pairs_per_node must be positive".into()));
        }
        Ok(())
    }
}

/// A loss value with its gradients w.r.t. both embedding blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct LossGrad {
    pub value: f64,
    pub polarized: Array2<f64>,
    pub invariant: Array2<f64>,
}

impl LossGrad {
    fn zeros(e: &EmbeddingPair) -> Self {
        LossGrad {
            value: 0.0,
            polarized: Array2::zeros(e.polarized.dim()),
            invariant: Array2::zeros(e.invariant.dim()),
        }
    }
}

/// Mean over triples of `d(+) / (d(+) + d(−) + ε)` on polarized embeddings.
pub fn interaction_loss_grad(e: &EmbeddingPair, triples: &[Triple], cfg: &LossConfig) -> Result<LossGrad> {
    if triples.is_empty() {
        return Err(Error::DegenerateBatch("no anchor has both a positive and a negative".into()));
    }
    let h = &e.polarized;
    let mut out = LossGrad::zeros(e);
    let scale = 1.0 / triples.len() as f64;
    for t in triples {
        let (dp, ga_p, gp) = cfg.distance_i.eval_grad(h.row(t.anchor), h.row(t.positive));
        let (dn, ga_n, gn) = cfg.distance_i.eval_grad(h.row(t.anchor), h.row(t.negative));
        let s = dp + dn + cfg.eps;
        out.value += dp / s;
        let d_dp = scale * (dn + cfg.eps) / (s * s);
        let d_dn = -scale * dp / (s * s);
        let g = &mut out.polarized;
        g.row_mut(t.anchor).scaled_add(d_dp, &ga_p);
        g.row_mut(t.anchor).scaled_add(d_dn, &ga_n);
        g.row_mut(t.positive).scaled_add(d_dp, &gp);
        g.row_mut(t.negative).scaled_add(d_dn, &gn);
    }
    out.value *= scale;
    Ok(out)
}

pub fn interaction_loss(e: &EmbeddingPair, samples: &ContrastiveSampleSet, cfg: &LossConfig) -> Result<f64> {
    Ok(interaction_loss_grad(e, &samples.triples(), cfg)?.value)
}

/// Sum over ordered pairs of `d(H_i^po, H_j^po) / (d(H_i^in, H_j^in) + ε)`.
pub fn feature_loss_grad(e: &EmbeddingPair, pairs: &[(NodeId, NodeId)], cfg: &LossConfig) -> Result<LossGrad> {
    if pairs.is_empty() {
        return Err(Error::DegenerateBatch("feature loss needs at least one pair".into()));
    }
    let mut out = LossGrad::zeros(e);
    for &(i, j) in pairs {
        if i == j {
            return Err(Error::Argument(format!("feature pair ({i}, {i}) is not distinct")));
        }
        let (dpo, gpi, gpj) = cfg.distance_f.eval_grad(e.polarized.row(i), e.polarized.row(j));
        let (din, gii, gij) = cfg.distance_f.eval_grad(e.invariant.row(i), e.invariant.row(j));
        let den = din + cfg.eps;
        out.value += dpo / den;
        let d_po = 1.0 / den;
        let d_in = -dpo / (den * den);
        out.polarized.row_mut(i).scaled_add(d_po, &gpi);
        out.polarized.row_mut(j).scaled_add(d_po, &gpj);
        out.invariant.row_mut(i).scaled_add(d_in, &gii);
        out.invariant.row_mut(j).scaled_add(d_in, &gij);
    }
    Ok(out)
}

pub fn feature_loss(e: &EmbeddingPair, pairs: &[(NodeId, NodeId)], cfg: &LossConfig) -> Result<f64> {
    Ok(feature_loss_grad(e, pairs, cfg)?.value)
}

fn centroid_pull(e: &EmbeddingPair, targets: impl Iterator<Item = (NodeId, usize)>, c: &Centroids) -> Result<LossGrad> {
    let mut out = LossGrad::zeros(e);
    for (node, class) in targets {
        if node >= e.num_nodes() {
            return Err(Error::Validation(format!("node {node} out of range 0..{}", e.num_nodes())));
        }
        if class >= c.mu.nrows() {
            return Err(Error::Validation(format!("class {class} has no centroid")));
        }
        let (d, g, _) = DistanceKind::Euclidean.eval_grad(e.polarized.row(node), c.mu.row(class));
        out.value += d;
        out.polarized.row_mut(node).scaled_add(1.0, &g);
    }
    Ok(out)
}

/// `Σ_{l labeled} ‖H_l^po − μ_{class(l)}‖`.
pub fn supervised_anchor_loss_grad(e: &EmbeddingPair, labels: &Labels, c: &Centroids) -> Result<LossGrad> {
    centroid_pull(e, labels.iter().map(|(n, k)| (*n, *k)), c)
}

pub fn supervised_anchor_loss(e: &EmbeddingPair, labels: &Labels, c: &Centroids) -> Result<f64> {
    Ok(supervised_anchor_loss_grad(e, labels, c)?.value)
}

/// Row argmax of an initial assignment; ties go to the first class.
pub fn r0_classes(r0: &Array2<f64>) -> Vec<usize> {
    clustering::hard_assignments(r0)
}

/// `Σ_i ‖H_i^po − μ_{argmax R0_i}‖`.
pub fn class_init_loss_grad(e: &EmbeddingPair, r0: Option<&Array2<f64>>, c: &Centroids) -> Result<LossGrad> {
    let r0 = r0.ok_or_else(|| Error::Config("class initialisation loss needs R0".into()))?;
    if r0.nrows() != e.num_nodes() {
        return Err(Error::Validation(format!("R0 has {} rows for {} nodes", r0.nrows(), e.num_nodes())));
    }
    centroid_pull(e, r0_classes(r0).into_iter().enumerate(), c)
}

pub fn class_init_loss(e: &EmbeddingPair, r0: Option<&Array2<f64>>, c: &Centroids) -> Result<f64> {
    Ok(class_init_loss_grad(e, r0, c)?.value)
}

/// `count` ordered pairs `(i, j)`, `i ≠ j`, drawn uniformly.
pub fn sample_pairs(n: usize, count: usize, rng: &mut Rng) -> Result<Vec<(NodeId, NodeId)>> {
    if n < 2 {
        return Err(Error::DegenerateBatch(format!("need at least 2 nodes for pairs, got {n}")));
    }
    Ok((0..count)
        .map(|_| {
            let i = rng.random_range(0..n);
            let j = rng.random_range(0..n - 1);
            (i, if j >= i { j + 1 } else { j })
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub init_epochs: usize,
    pub lr: f64,
    pub momentum: f64,
    pub seed: u64,
    pub early_stop_tol: f64,
    pub early_stop_window: usize,
    pub d_h: usize,
    pub d_po: usize,
    pub d_in: usize,
    /// Propagate positive and negative edges on separate channels.
    pub signed: bool,
    pub sampler: SamplerKind,
    pub connect: ConnectKind,
    pub thresholds: ThresholdRule,
    pub augmentation: AugmentationKind,
    /// `B`, the L∞ bound on the perturbation.
    pub bound: f64,
    /// `a` in `a·h + (1 − a)·h'`.
    pub interpolation_a: f64,
    /// Epochs between adaptor refits.
    pub refit_every: usize,
    pub fit: FitConfig,
    /// Step size for the shared perturbation vector.
    pub mu_lr: f64,
    pub beta: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 200,
            init_epochs: 20,
            lr: 0.3,
            momentum: 0.9,
            seed: 0,
            early_stop_tol: 1e-4,
            early_stop_window: 10,
            d_h: 64,
            d_po: 32,
            d_in: 32,
            signed: false,
            sampler: SamplerKind::Fast,
            connect: ConnectKind::AdaptorMlp,
            thresholds: ThresholdRule::default(),
            augmentation: AugmentationKind::Perturbation,
            bound: 1.0,
            interpolation_a: 0.5,
            refit_every: 10,
            fit: FitConfig::default(),
            mu_lr: 0.1,
            beta: clustering::DEFAULT_BETA,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.init_epochs > self.epochs {
            return Err(Error::Config(format!(
                "init_epochs ({}) exceeds epochs ({})",
                self.init_epochs, self.epochs
            )));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("lr must be positive, got {}", self.lr)));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config(format!("momentum must lie in [0, 1), got {}", self.momentum)));
        }
        if self.d_h == 0 || self.d_po == 0 || self.d_in == 0 {
            return Err(Error::Config("d_h, d_po and d_in must be positive".into()));
        }
        if !(self.bound >= 0.0 && self.bound.is_finite()) {
            return Err(Error::Config(format!("bound must be non-negative, got {}", self.bound)));
        }
        if self.refit_every == 0 {
            return Err(Error::Config("refit_every must be positive".into()));
        }
        if self.sampler == SamplerKind::Fast && self.connect == ConnectKind::InnerProduct {
            return Err(Error::Config("the fast sampler needs connect = adaptor-mlp".into()));
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(Error::Config(format!("beta must be positive, got {}", self.beta)));
        }
        self.thresholds.validate()
    }

    pub fn adjacency(&self, g: &AttributedGraph) -> NormalizedAdjacency {
        if self.signed {
            normalized_adjacency(g)
        } else {
            unsigned_adjacency(g)
        }
    }

    pub fn augmentation_spec(&self) -> Result<AugmentationSpec> {
        match self.augmentation {
            AugmentationKind::Perturbation => AugmentationSpec::perturbation(self.bound, self.d_po),
            AugmentationKind::Interpolation => AugmentationSpec::interpolation(self.interpolation_a),
        }
    }
}

/// Optional supervision signals fed to the trainer.
#[derive(Debug, Clone, Copy, Default)]
pub struct Supervision<'a> {
    /// Labeled nodes pulled toward their class centroid (`L_n`).
    pub labels: Option<&'a Labels>,
    /// Initial assignment for `L_c` during the initialisation epochs.
    pub r0: Option<&'a Array2<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// `None` while the interaction loss is inactive.
    pub interaction: Option<f64>,
    pub feature: Option<f64>,
    pub total: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct TrainHistory {
    pub records: Vec<EpochRecord>,
    /// Epoch at which the early-stop rule fired.
    pub stopped_early: Option<usize>,
}

impl TrainHistory {
    /// `epoch L_i L_f total seconds`, one line per epoch; inactive terms print `-`.
    pub fn to_log(&self) -> String {
        let opt = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |x| x.to_string());
        self.records
            .iter()
            .map(|r| format!("{} {} {} {} {:.6}\n", r.epoch, opt(r.interaction), opt(r.feature), r.total, r.seconds))
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub params: EncoderParams,
    pub embeddings: EmbeddingPair,
    pub history: TrainHistory,
    pub augmentation: AugmentationSpec,
    pub connect: ConnectModel,
}

impl TensorSet for Branch {
    fn tensors(&self) -> Vec<(&'static str, &Array2<f64>)> {
        vec![("w1", &self.w1), ("w2", &self.w2)]
    }

    fn tensors_mut(&mut self) -> Vec<&mut Array2<f64>> {
        vec![&mut self.w1, &mut self.w2]
    }
}

fn add_scaled(acc: &mut LossGrad, term: &LossGrad, scale: f64) {
    acc.value += scale * term.value;
    acc.polarized.scaled_add(scale, &term.polarized);
    acc.invariant.scaled_add(scale, &term.invariant);
}

/// `term / σ(H_po)`, where `σ` is the root total variance of the polarized
/// rows; the gradient includes the dependence of `σ` on every row.
pub fn relative_to_spread(term: &LossGrad, e: &EmbeddingPair) -> LossGrad {
    let h = &e.polarized;
    let n = h.nrows() as f64;
    let sigma = crate::index::total_variance(h).sqrt() + crate::index::EPS;
    let centred = h - &h.mean_axis(ndarray::Axis(0)).expect("non-empty embeddings");
    let mut polarized = &term.polarized / sigma;
    polarized.scaled_add(-term.value / (sigma * sigma * sigma * n), &centred);
    LossGrad { value: term.value / sigma, polarized, invariant: &term.invariant / sigma }
}

/// Centroids for `L_n`: soft k-means on `H_po` seeded at the labelled class
/// means, with labelled rows held at their labels.
fn label_centroids(h: &Array2<f64>, labels: &Labels, beta: f64) -> Result<Centroids> {
    Ok(clustering::soft_kmeans_clamped(h, labels, beta, clustering::DEFAULT_ITERS)?.1)
}

/// Total objective and its gradients for one epoch, given sampled inputs.
pub struct EpochObjective<'a> {
    pub loss: &'a LossConfig,
    pub triples: Option<&'a [Triple]>,
    pub pairs: Option<&'a [(NodeId, NodeId)]>,
    pub labels: Option<(&'a Labels, &'a Centroids)>,
    pub r0: Option<(&'a Array2<f64>, &'a Centroids)>,
}

pub struct EpochValue {
    pub total: LossGrad,
    pub interaction: Option<f64>,
    pub feature: Option<f64>,
}

impl EpochObjective<'_> {
    /// `L_i − λ_f · L_f + λ_n · L_n + L_c` over whichever terms are present,
    /// with `L_f`, `L_n` and `L_c` each averaged over their pairs or nodes and
    /// `L_n`, `L_c` divided by the polarized spread.
    pub fn evaluate(&self, e: &EmbeddingPair) -> Result<EpochValue> {
        let mut total = LossGrad::zeros(e);
        let mut interaction = None;
        let mut feature = None;
        if let Some(triples) = self.triples {
            let li = interaction_loss_grad(e, triples, self.loss)?;
            interaction = Some(li.value);
            add_scaled(&mut total, &li, 1.0);
        }
        if let Some(pairs) = self.pairs {
            let lf = feature_loss_grad(e, pairs, self.loss)?;
            let scale = 1.0 / pairs.len() as f64;
            feature = Some(lf.value * scale);
            add_scaled(&mut total, &lf, -self.loss.lambda_f * scale);
        }
        if let Some((labels, c)) = self.labels {
            let ln = relative_to_spread(&supervised_anchor_loss_grad(e, labels, c)?, e);
            add_scaled(&mut total, &ln, self.loss.lambda_n / labels.len() as f64);
        }
        if let Some((r0, c)) = self.r0 {
            let lc = relative_to_spread(&class_init_loss_grad(e, Some(r0), c)?, e);
            add_scaled(&mut total, &lc, 1.0 / r0.nrows() as f64);
        }
        Ok(EpochValue { total, interaction, feature })
    }
}

/// Trains the twin encoders on `g`.
///
/// Each epoch encodes the graph, refreshes centroids and samples, then takes
/// one momentum step on the polarized branch (even epochs) or the invariant
/// branch (odd epochs). The first `init_epochs` use only the feature loss
/// (plus `L_c` when R0 is supplied). Polarized weights are projected back to
/// their initial Frobenius norms after each step; the invariant block is
/// standardised inside the forward pass.
pub fn train(
    g: &AttributedGraph,
    cfg: &TrainConfig,
    loss: &LossConfig,
    supervision: Supervision<'_>,
) -> Result<TrainOutput> {
    cfg.validate()?;
    loss.validate()?;
    if g.num_edges() == 0 {
        return Err(Error::Validation("training needs a graph with at least one edge".into()));
    }
    if let Some(r0) = supervision.r0 {
        crate::graph::validate_assignment(r0, g.num_nodes())?;
    }
    let adj = cfg.adjacency(g);
    let x = g.model_features();
    let input = EncoderInput::new(&adj, &x)?;
    let dims = EncoderDims::new(x.ncols(), cfg.d_h, cfg.d_po, cfg.d_in).with_channels(adj.channels().len());
    let mut params = init_params(dims, cfg.seed)?;
    let po_norms = params.polarized_norms();
    let mut opt_po = Momentum::new(&params.polarized, cfg.lr, cfg.momentum);
    let mut opt_in = Momentum::new(&params.invariant, cfg.lr, cfg.momentum);
    let mut sample_rng = component_rng(cfg.seed, "negatives");
    let mut pair_rng = component_rng(cfg.seed, "feature-pairs");
    let mut augmentation = cfg.augmentation_spec()?;
    let mut connect = ConnectModel::InnerProduct;
    let mut connect_age = usize::MAX;
    let mut history = TrainHistory::default();
    let clock = Instant::now();
    let labels = supervision.labels.filter(|l| !l.is_empty());

    for epoch in 0..cfg.epochs {
        let fwd = forward(&input, &params, OutputScaling::StandardizeInvariant)?;
        let e = &fwd.embeddings;
        let init_phase = epoch < cfg.init_epochs;

        let label_c = labels.map(|l| label_centroids(&e.polarized, l, cfg.beta)).transpose()?;
        let r0_centroids = match (init_phase, supervision.r0) {
            (true, Some(r0)) => {
                let seed_c = Centroids { mu: Array2::zeros((r0.ncols(), e.polarized.ncols())) };
                Some(clustering::update_centroids(&e.polarized, r0, &seed_c))
            }
            _ => None,
        };

        let triples = if loss.use_interaction && !init_phase {
            if cfg.sampler != SamplerKind::Uniform && cfg.connect == ConnectKind::AdaptorMlp && connect_age >= cfg.refit_every {
                connect = fit_connect(g, e, cfg.connect, &cfg.fit, derive_seed(cfg.seed, &format!("fit-{epoch}")))?;
                connect_age = 0;
            }
            connect_age = connect_age.saturating_add(1);
            let scorer = Scorer::new(&connect, e)?;
            let samples = build_samples(
                g,
                &scorer,
                &cfg.thresholds,
                cfg.sampler,
                &augmentation,
                loss.n_neg,
                &mut sample_rng,
            )?;
            let triples = samples.triples();
            update_mu(&mut augmentation, &scorer, &triples, cfg.mu_lr)?;
            // An epoch without any usable triple simply skips the term.
            Some(triples).filter(|t| !t.is_empty())
        } else {
            None
        };
        let pairs = if loss.use_feature {
            Some(sample_pairs(g.num_nodes(), loss.pairs_per_node * g.num_nodes(), &mut pair_rng)?)
        } else {
            None
        };

        let objective = EpochObjective {
            loss,
            triples: triples.as_deref(),
            pairs: pairs.as_deref(),
            labels: labels.zip(label_c.as_ref()),
            r0: supervision.r0.zip(r0_centroids.as_ref()),
        };
        let value = objective.evaluate(e)?;
        if !value.total.value.is_finite() {
            return Err(Error::Divergence { epoch, msg: format!("objective is {}", value.total.value) });
        }
        let grads = backward(&input, &params, &fwd, &value.total.polarized, &value.total.invariant);
        if epoch % 2 == 0 {
            opt_po.step(&mut params.polarized, &grads.polarized);
            params.project_polarized(po_norms);
        } else {
            opt_in.step(&mut params.invariant, &grads.invariant);
        }
        if !params.all_finite() {
            return Err(Error::Divergence { epoch, msg: "parameters became non-finite".into() });
        }
        history.records.push(EpochRecord {
            epoch,
            interaction: value.interaction,
            feature: value.feature,
            total: value.total.value,
            seconds: clock.elapsed().as_secs_f64(),
        });
        if !init_phase && should_stop(&history, cfg) {
            history.stopped_early = Some(epoch);
            break;
        }
    }

    let embeddings = forward(&input, &params, OutputScaling::StandardizeInvariant)?.embeddings;
    Ok(TrainOutput { params, embeddings, history, augmentation, connect })
}

fn should_stop(h: &TrainHistory, cfg: &TrainConfig) -> bool {
    let w = cfg.early_stop_window;
    let n = h.records.len();
    if w == 0 || n <= w + cfg.init_epochs {
        return false;
    }
    let now = h.records[n - 1].total;
    let then = h.records[n - 1 - w].total;
    (now - then).abs() / then.abs().max(f64::MIN_POSITIVE) < cfg.early_stop_tol
}

/// One projected ascent step on the shared perturbation vector, raising the
/// mean augmented score of sampled negatives.
fn update_mu(spec: &mut AugmentationSpec, scorer: &Scorer<'_>, triples: &[Triple], lr: f64) -> Result<()> {
    let Some(mu) = spec.mu().cloned() else {
        return Ok(());
    };
    if triples.is_empty() {
        return Ok(());
    }
    let mut grad = Array1::<f64>::zeros(mu.len());
    for t in triples {
        grad += &scorer.mu_gradient(t.anchor, t.negative, mu.view());
    }
    grad /= triples.len() as f64;
    spec.set_mu((&mu + &(grad * lr)).view())
}
