//! Run configuration and the end-to-end train → cluster → score pipeline.

use std::path::PathBuf;

use ndarray::Array2;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::clustering::{self, clustering_accuracy, flag_irrelevant, flag_neutral, soft_kmeans, NodeFlags, SoftAssignment};
use crate::encoder::EmbeddingPair;
use crate::graph::{AttributedGraph, Labels, NodeId};
use crate::index::{classic_index, unified_index, IndexReport};
use crate::io::GroundTruth;
use crate::objectives::{train, LossConfig, Supervision, TrainConfig, TrainOutput};
use crate::rng::component_rng;
use crate::sampler::SamplerKind;
use crate::supervision::{
    choose_supervision_path, train_classifier, ClassifierConfig, PromptTuneConfig, SupervisionPath, DEFAULT_K_INDUCED,
};
use crate::synth::SynthConfig;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClusterConfig {
    pub beta: f64,
    pub iters: usize,
    pub tau: f64,
    pub n_std: f64,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        ClusterConfig {
            beta: clustering::DEFAULT_BETA,
            iters: clustering::DEFAULT_ITERS,
            tau: clustering::DEFAULT_TAU,
            n_std: clustering::DEFAULT_N_STD,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SupervisionConfig {
    pub classifier: ClassifierConfig,
    pub k_induced: usize,
    pub tune: PromptTuneConfig,
}

impl Default for SupervisionConfig {
    fn default() -> Self {
        SupervisionConfig { classifier: ClassifierConfig::default(), k_induced: DEFAULT_K_INDUCED, tune: PromptTuneConfig::default() }
    }
}

/// Input and output locations; relative paths resolve against the working
/// directory.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Paths {
    pub edges: Option<PathBuf>,
    pub features: Option<PathBuf>,
    pub labels: Option<PathBuf>,
    pub r0: Option<PathBuf>,
    pub truth: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub connect: Option<PathBuf>,
    pub prompts: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind", content = "value")]
pub enum Variant {
    Full,
    NoInteraction,
    NoFeature,
    NoFastSampler,
    /// Fraction of planted-class nodes given their true label.
    Labels(f64),
    /// Fraction of R0 rows whose class is flipped.
    CorruptedR0(f64),
}

impl Variant {
    pub fn name(&self) -> String {
        match self {
            Variant::Full => "full".into(),
            Variant::NoInteraction => "-L_i".into(),
            Variant::NoFeature => "-L_f".into(),
            Variant::NoFastSampler => "-fast-sampler".into(),
            Variant::Labels(f) => format!("labels-{}%", f * 100.0),
            Variant::CorruptedR0(f) => format!("corrupted-r0-{}%", f * 100.0),
        }
    }

    pub fn standard_set() -> Vec<Variant> {
        vec![
            Variant::Full,
            Variant::NoInteraction,
            Variant::NoFeature,
            Variant::NoFastSampler,
            Variant::Labels(0.01),
            Variant::Labels(0.02),
            Variant::Labels(0.05),
            Variant::CorruptedR0(0.3),
            Variant::CorruptedR0(0.6),
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub seeds: usize,
    pub variants: Vec<Variant>,
    /// Synthetic suites; each member is regenerated per seed.
    pub suites: Vec<SynthConfig>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig { seeds: 5, variants: Variant::standard_set(), suites: vec![mid_difficulty_suite()] }
    }
}

/// Two planted classes at signal 1.5 whose invariant features and extra
/// edges follow two locality groups cutting across the classes.
pub fn mid_difficulty_suite() -> SynthConfig {
    SynthConfig {
        n_per_class: 250,
        p_intra: 0.02,
        p_inter: 0.004,
        signal: 1.5,
        groups: 2,
        locality_signal: 4.0,
        p_locality: 0.02,
        ..SynthConfig::default()
    }
}

/// Every tunable, with defaults. Unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub paths: Paths,
    pub synth: SynthConfig,
    pub train: TrainConfig,
    pub loss: LossConfig,
    pub cluster: ClusterConfig,
    pub supervision: SupervisionConfig,
    pub eval: EvalConfig,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Propagates the top-level seed into every component and validates.
    pub fn resolved(mut self) -> Result<Self> {
        self.train.seed = self.seed;
        self.synth.seed = self.seed;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        self.synth.validate()?;
        self.train.validate()?;
        self.loss.validate()?;
        let c = &self.cluster;
        if !(c.beta > 0.0 && c.beta.is_finite()) {
            return Err(Error::Config(format!("cluster.beta must be positive, got {}", c.beta)));
        }
        if !(c.tau > 0.5 && c.tau <= 1.0) {
            return Err(Error::Config(format!("cluster.tau must lie in (0.5, 1], got {}", c.tau)));
        }
        if !(c.n_std >= 0.0 && c.n_std.is_finite()) {
            return Err(Error::Config(format!("cluster.n_std must be non-negative, got {}", c.n_std)));
        }
        for v in &self.eval.variants {
            if let Variant::Labels(f) | Variant::CorruptedR0(f) = v {
                if !(0.0..=1.0).contains(f) {
                    return Err(Error::Config(format!("eval variant {} has a fraction outside [0, 1]", v.name())));
                }
            }
        }
        for s in &self.eval.suites {
            s.validate()?;
        }
        Ok(())
    }
}

/// Soft assignment and flags over trained embeddings.
#[derive(Debug, Clone)]
pub struct Clustering {
    pub assignment: SoftAssignment,
    pub flags: NodeFlags,
}

impl Clustering {
    pub fn hard(&self) -> Vec<usize> {
        self.assignment.hard()
    }

    pub fn accuracy(&self, labels: &Labels) -> Result<f64> {
        clustering_accuracy(&self.assignment, labels, &self.flags)
    }
}

pub fn cluster(e: &EmbeddingPair, cfg: &ClusterConfig, seed: u64, labels: Option<&Labels>) -> Result<Clustering> {
    let (assignment, _) = match labels {
        Some(l) => clustering::soft_kmeans_clamped(&e.polarized, l, cfg.beta, cfg.iters)?,
        None => soft_kmeans(&e.polarized, cfg.beta, cfg.iters, seed)?,
    };
    let flags = NodeFlags {
        neutral: flag_neutral(&assignment, cfg.tau)?,
        irrelevant: flag_irrelevant(&e.invariant, cfg.n_std)?,
    };
    Ok(Clustering { assignment, flags })
}

/// Both index variants over trained embeddings; the classic one reads
/// `H = H_po ∥ H_in`.
pub fn indices(g: &AttributedGraph, e: &EmbeddingPair) -> Result<(IndexReport, IndexReport)> {
    let classic = classic_index(&e.concat(), g.edges(), None)?;
    let unified = unified_index(e, g.edges(), None)?;
    Ok((classic, unified))
}

/// A random `fraction` of each class (rounded down, at least one when the
/// fraction is positive), so the realised share never exceeds the request.
pub fn sample_labels(truth: &Labels, fraction: f64, seed: u64) -> Labels {
    let mut rng = component_rng(seed, "label-sample");
    let mut out = Labels::new();
    for class in 0..clustering::NUM_CLASSES {
        let mut nodes: Vec<NodeId> = truth.iter().filter(|(_, &c)| c == class).map(|(&i, _)| i).collect();
        let take = if fraction > 0.0 { ((nodes.len() as f64 * fraction).floor() as usize).max(1) } else { 0 };
        nodes.shuffle(&mut rng);
        out.extend(nodes.into_iter().take(take).map(|i| (i, class)));
    }
    out
}

/// One-hot R0 from `truth` with a random `fraction` of the planted nodes
/// flipped to the other class. Nodes outside the planted classes get
/// uniform rows.
pub fn corrupted_r0(truth: &GroundTruth, fraction: f64, seed: u64) -> Array2<f64> {
    let mut rng = component_rng(seed, "r0-corruption");
    let n = truth.len();
    let mut planted: Vec<NodeId> = (0..n).filter(|&i| truth.class[i].is_some()).collect();
    planted.shuffle(&mut rng);
    let flips = (planted.len() as f64 * fraction).round() as usize;
    let flipped: std::collections::BTreeSet<NodeId> = planted.into_iter().take(flips).collect();
    let mut r = Array2::from_elem((n, 2), 0.5);
    for i in 0..n {
        if let Some(c) = truth.class[i] {
            let c = if flipped.contains(&i) { 1 - c } else { c };
            r[[i, c]] = 1.0;
            r[[i, 1 - c]] = 0.0;
        }
    }
    r
}

/// Accuracy of the hard R0 assignment itself.
pub fn r0_accuracy(r0: &Array2<f64>, labels: &Labels) -> Result<f64> {
    let a = SoftAssignment { r: r0.clone(), beta: 0.0 };
    clustering_accuracy(&a, labels, &NodeFlags::none(r0.nrows()))
}

#[derive(Debug, Clone)]
pub struct PipelineRun {
    pub train: TrainOutput,
    pub clustering: Clustering,
    pub path: Option<SupervisionPath>,
    /// Final predicted class per node.
    pub predicted: Vec<usize>,
}

/// Trains, clusters and, when labels are abundant, replaces the cluster
/// labels with a classifier fitted on frozen embeddings.
pub fn run_pipeline(g: &AttributedGraph, cfg: &RunConfig, labels: Option<&Labels>, r0: Option<&Array2<f64>>) -> Result<PipelineRun> {
    let labels = labels.filter(|l| !l.is_empty());
    let path = labels.map(|l| choose_supervision_path(l.len() as f64 / g.num_nodes() as f64)).transpose()?;
    let semi = (path == Some(SupervisionPath::SemiObjective)).then_some(labels).flatten();
    let out = train(g, &cfg.train, &cfg.loss, Supervision { labels: semi, r0 })?;
    let clustering = cluster(&out.embeddings, &cfg.cluster, cfg.train.seed, semi)?;
    let predicted = match (path, labels) {
        (Some(SupervisionPath::Classifier), Some(l)) => {
            let c = train_classifier(&out.embeddings.concat(), l, &cfg.supervision.classifier, cfg.train.seed)?;
            c.predict(&out.embeddings.concat())?
        }
        _ => clustering.hard(),
    };
    Ok(PipelineRun { train: out, clustering, path, predicted })
}

/// Accuracy of `predicted` against `truth`, excluding nodes flagged irrelevant.
pub fn prediction_accuracy(predicted: &[usize], truth: &Labels, flags: &NodeFlags) -> Result<f64> {
    let mut r = Array2::zeros((predicted.len(), 2));
    for (i, &c) in predicted.iter().enumerate() {
        r[[i, c.min(1)]] = 1.0;
    }
    clustering_accuracy(&SoftAssignment { r, beta: 0.0 }, truth, flags)
}

/// Configuration for one ablation variant of `base`.
pub fn variant_config(base: &RunConfig, v: Variant) -> RunConfig {
    let mut cfg = base.clone();
    match v {
        Variant::NoInteraction => cfg.loss.use_interaction = false,
        Variant::NoFeature => cfg.loss.use_feature = false,
        Variant::NoFastSampler => cfg.train.sampler = SamplerKind::Uniform,
        Variant::Full | Variant::Labels(_) | Variant::CorruptedR0(_) => {}
    }
    cfg
}

/// Accuracy of one variant on one generated graph.
pub fn run_variant(g: &AttributedGraph, truth: &GroundTruth, base: &RunConfig, v: Variant) -> Result<f64> {
    let cfg = variant_config(base, v);
    let seed = cfg.train.seed;
    let all = truth.labels();
    let (labels, r0) = match v {
        Variant::Labels(f) => (Some(sample_labels(&all, f, seed)), None),
        Variant::CorruptedR0(f) => (None, Some(corrupted_r0(truth, f, seed))),
        _ => (None, None),
    };
    let run = run_pipeline(g, &cfg, labels.as_ref(), r0.as_ref())?;
    prediction_accuracy(&run.predicted, &all, &run.clustering.flags)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub suite: usize,
    pub variant: String,
    pub mean: f64,
    pub std: f64,
    pub accuracies: Vec<f64>,
}

pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Every configured variant on every suite over seeds `seed..seed+seeds`.
/// Rows are ordered by suite, then variant.
pub fn evaluate(cfg: &RunConfig) -> Result<Vec<EvalRow>> {
    let mut rows = Vec::new();
    for (si, suite) in cfg.eval.suites.iter().enumerate() {
        let mut accs = vec![Vec::with_capacity(cfg.eval.seeds); cfg.eval.variants.len()];
        for k in 0..cfg.eval.seeds as u64 {
            let seed = cfg.seed.wrapping_add(k);
            let (g, truth) = crate::synth::generate(&SynthConfig { seed, ..suite.clone() })?;
            let mut run_cfg = cfg.clone();
            run_cfg.train.seed = seed;
            for (vi, v) in cfg.eval.variants.iter().enumerate() {
                let a = run_variant(&g, &truth, &run_cfg, *v)
                    .map_err(|e| Error::Evaluation(format!("suite {si}, seed {seed}, variant {}: {e}", v.name())))?;
                accs[vi].push(a);
            }
        }
        for (v, a) in cfg.eval.variants.iter().zip(accs) {
            let (mean, std) = mean_std(&a);
            rows.push(EvalRow { suite: si, variant: v.name(), mean, std, accuracies: a });
        }
    }
    Ok(rows)
}
