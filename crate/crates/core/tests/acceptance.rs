//! Acceptance run: one PASS/FAIL line per criterion, tolerances fixed below.
//!
//! Run with `cargo test -p doctra --test acceptance`. The process exits
//! non-zero only on a harness error; a failed criterion is reported, not
//! raised.

use std::collections::BTreeSet;
use std::time::{Duration, Instant};

use doctra::adjacency::normalized_adjacency;
use doctra::clustering::{clustering_accuracy, Centroids, NodeFlags, SoftAssignment};
use doctra::encoder::{backward, embed, forward, init_params, EmbeddingPair, EncoderDims, EncoderInput, EncoderParams, OutputScaling};
use doctra::graph::{AttributedGraph, EdgeRecord, Labels};
use doctra::index::unified_index;
use doctra::io::GroundTruth;
use doctra::objectives::{
    class_init_loss_grad, feature_loss_grad, interaction_loss_grad, relative_to_spread, sample_pairs,
    supervised_anchor_loss_grad, LossConfig, LossGrad,
};
use doctra::pipeline::{
    corrupted_r0, indices, mean_std, mid_difficulty_suite, prediction_accuracy, r0_accuracy, run_pipeline,
    run_variant, sample_labels, PipelineRun, RunConfig, Variant,
};
use doctra::rng::{component_rng, Rng};
use doctra::sampler::{
    connect_score, quantile, sample_negatives_exact, sample_negatives_fast, Adaptor, AugmentationSpec, ConnectModel,
    SamplerThresholds, Scorer, ThresholdRule, Triple,
};
use doctra::supervision::{adjacency_for, prompt_tune, train_classifier, ClassifierConfig, PromptContext, PromptSet, PromptTuneConfig};
use doctra::synth::{generate, generate_unpolarized, SynthConfig};
use doctra::tensor::grad_check;
use doctra::Result;
use ndarray::Array2;
use rand::Rng as _;

const SEEDS: u64 = 5;

// Criterion 1.
const RECOVERY_MIN: f64 = 0.95;
const RECOVERY_MAX_RUN: Duration = Duration::from_secs(300);
// Criterion 2.
const ABLATION_GAP: f64 = 0.02;
// Criterion 3.
const GRAD_STEP: f64 = 1e-5;
const GRAD_MAX_REL: f64 = 1e-4;
// Criterion 4.
const SAMPLER_GRAPHS: u64 = 20;
const SAMPLER_MAX_NODES: usize = 200;
// Criterion 5.
const GRID_STEPS: usize = 50;
// Criterion 6.
const SEPARATION_MIN: f64 = 0.3;
// Criterion 7.
const LABEL_GAIN: f64 = 0.01;
const LABEL_FRACTION: f64 = 0.05;
const R0_CORRUPTION: f64 = 0.6;
// Criterion 8.
const ROW_SUM_TOL: f64 = 1e-9;
const RESCALE_TOL: f64 = 1e-9;
const RANDOM_ASSIGNMENTS: usize = 1000;

struct Outcome {
    pass: bool,
    detail: String,
}

fn report(id: u32, name: &str, o: &Outcome) {
    println!("{} C{id} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
}

fn mean(xs: &[f64]) -> f64 {
    mean_std(xs).0
}

fn fmt(xs: &[f64]) -> String {
    let v: Vec<String> = xs.iter().map(|x| format!("{x:.3}")).collect();
    format!("[{}]", v.join(", "))
}

fn run_config(seed: u64) -> Result<RunConfig> {
    RunConfig { seed, ..RunConfig::default() }.resolved()
}

struct Recovery {
    outcome: Outcome,
    runs: Vec<(AttributedGraph, PipelineRun)>,
}

fn recovery() -> Result<Recovery> {
    let mut acc = Vec::new();
    let mut slowest = Duration::ZERO;
    let mut runs = Vec::new();
    for seed in 0..SEEDS {
        let start = Instant::now();
        let cfg = run_config(seed)?;
        let (g, truth) = generate(&SynthConfig { seed, ..SynthConfig::default() })?;
        let run = run_pipeline(&g, &cfg, None, None)?;
        acc.push(prediction_accuracy(&run.predicted, &truth.labels(), &run.clustering.flags)?);
        slowest = slowest.max(start.elapsed());
        runs.push((g, run));
    }
    let m = mean(&acc);
    let pass = m >= RECOVERY_MIN && slowest <= RECOVERY_MAX_RUN;
    let detail = format!(
        "mean accuracy {m:.4} {} (need >= {RECOVERY_MIN}), slowest run {:.1}s (limit {}s)",
        fmt(&acc),
        slowest.as_secs_f64(),
        RECOVERY_MAX_RUN.as_secs()
    );
    Ok(Recovery { outcome: Outcome { pass, detail }, runs })
}

type SeededTruth = (GroundTruth, u64);

/// Per-seed accuracy of each variant on the mid-difficulty suite.
fn mid_suite(variants: &[Variant]) -> Result<(Vec<Vec<f64>>, Vec<SeededTruth>)> {
    let mut acc = vec![Vec::new(); variants.len()];
    let mut truths = Vec::new();
    for seed in 0..SEEDS {
        let cfg = run_config(seed)?;
        let (g, truth) = generate(&SynthConfig { seed, ..mid_difficulty_suite() })?;
        for (k, v) in variants.iter().enumerate() {
            acc[k].push(run_variant(&g, &truth, &cfg, *v)?);
        }
        truths.push((truth, seed));
    }
    Ok((acc, truths))
}

fn ablation(full: &[f64], no_f: &[f64], no_i: &[f64]) -> Outcome {
    let (a, b, c) = (mean(full), mean(no_f), mean(no_i));
    Outcome {
        pass: a > b && b > c && a - c >= ABLATION_GAP,
        detail: format!(
            "full {a:.4} {} > -L_f {b:.4} {} > -L_i {c:.4} {}, full - (-L_i) = {:.4} (need >= {ABLATION_GAP})",
            fmt(full),
            fmt(no_f),
            fmt(no_i),
            a - c
        ),
    }
}

fn encoder_objective<'a>(
    input: &'a EncoderInput<'a>,
    loss: impl Fn(&EmbeddingPair) -> Result<LossGrad> + 'a,
) -> impl Fn(&EncoderParams) -> Result<(f64, EncoderParams)> + 'a {
    move |p: &EncoderParams| {
        let f = forward(input, p, OutputScaling::StandardizeInvariant)?;
        let l = loss(&f.embeddings)?;
        Ok((l.value, backward(input, p, &f, &l.polarized, &l.invariant)))
    }
}

fn gradients() -> Result<Outcome> {
    let synth = SynthConfig { n_per_class: 10, p_intra: 0.4, p_inter: 0.05, d_x: 5, seed: 7, ..SynthConfig::default() };
    let (g, truth) = generate(&synth)?;
    let n = g.num_nodes();
    let adj = normalized_adjacency(&g);
    let x = g.model_features();
    let input = EncoderInput::new(&adj, &x)?;
    let params = init_params(EncoderDims::new(5, 6, 3, 3), 7)?;
    let cfg = LossConfig::default();
    let mut rng = component_rng(7, "acceptance-grad");

    let mut triples = Vec::new();
    for i in 0..n {
        for &p in g.neighbors(i)? {
            let j = rng.random_range(0..n);
            if j != i && !g.is_edge(i, j) {
                triples.push(Triple { anchor: i, positive: p, negative: j });
            }
        }
    }
    let pairs = sample_pairs(n, 10 * n, &mut rng)?;
    let labels: Labels = truth.labels().into_iter().step_by(4).collect();
    let centroids = Centroids { mu: Array2::from_shape_fn((2, 3), |_| rng.random_range(-1.0..1.0)) };
    let r0 = Array2::from_shape_fn((n, 2), |(i, k)| {
        let p = (i as f64 * 0.37).sin().abs();
        if k == 0 { p } else { 1.0 - p }
    });

    let mut worst = Vec::new();
    type Loss<'a> = Box<dyn Fn(&EmbeddingPair) -> Result<LossGrad> + 'a>;
    let checks: Vec<(&str, Loss<'_>)> = vec![
        ("L_i", Box::new(|e: &EmbeddingPair| interaction_loss_grad(e, &triples, &cfg))),
        ("L_f", Box::new(|e: &EmbeddingPair| feature_loss_grad(e, &pairs, &cfg))),
        ("L_n", Box::new(|e: &EmbeddingPair| Ok(relative_to_spread(&supervised_anchor_loss_grad(e, &labels, &centroids)?, e)))),
        ("L_c", Box::new(|e: &EmbeddingPair| Ok(relative_to_spread(&class_init_loss_grad(e, Some(&r0), &centroids)?, e)))),
    ];
    for (name, loss) in checks {
        let r = grad_check(encoder_objective(&input, loss), &params, GRAD_STEP)?;
        worst.push((name, r.max_rel_error));
    }
    let pass = worst.iter().all(|(_, e)| *e <= GRAD_MAX_REL);
    let parts: Vec<String> = worst.iter().map(|(n, e)| format!("{n} {e:.2e}")).collect();
    Ok(Outcome {
        pass,
        detail: format!("{n} nodes, h = {GRAD_STEP:e}: {} (need <= {GRAD_MAX_REL:e})", parts.join(", ")),
    })
}

fn random_adaptor(rng: &mut Rng, d: usize, hidden: usize, out: usize) -> Adaptor {
    Adaptor {
        w_a: Array2::from_shape_fn((d, hidden), |_| rng.random_range(-1.0..1.0)),
        w_b: Array2::from_shape_fn((hidden, out), |_| rng.random_range(-1.0..1.0)),
    }
}

fn random_graph(rng: &mut Rng, n: usize, p: f64) -> Result<(AttributedGraph, BTreeSet<(usize, usize)>)> {
    let mut edges = Vec::new();
    let mut set = BTreeSet::new();
    for i in 0..n {
        for j in i + 1..n {
            if rng.random::<f64>() < p {
                edges.push(EdgeRecord::new(i, j));
                set.insert((i, j));
            }
        }
    }
    Ok((AttributedGraph::new(n, edges, Array2::zeros((n, 1)))?, set))
}

fn random_pair(rng: &mut Rng, n: usize, d: usize) -> Result<EmbeddingPair> {
    EmbeddingPair::new(
        Array2::from_shape_fn((n, d), |_| rng.random_range(-1.0..1.0)),
        Array2::from_shape_fn((n, d), |_| rng.random_range(-1.0..1.0)),
    )
}

fn left_dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |s, (x, y)| s + x * y)
}

fn sampler_oracle() -> Result<Outcome> {
    let rule = ThresholdRule::default();
    let (mut anchors, mut negatives, mut mismatches) = (0usize, 0usize, 0usize);
    for k in 0..SAMPLER_GRAPHS {
        let mut rng = component_rng(k, "acceptance-sampler");
        let n = rng.random_range(10..=SAMPLER_MAX_NODES);
        let p = rng.random_range(0.01..0.2);
        let (g, edge_set) = random_graph(&mut rng, n, p)?;
        let e = random_pair(&mut rng, n, 4)?;
        let polarized = random_adaptor(&mut rng, 4, 8, 4);
        let invariant = random_adaptor(&mut rng, 4, 8, 4);
        let m = ConnectModel::AdaptorMlp { polarized, invariant: invariant.clone() };
        let scorer = Scorer::new(&m, &e)?;
        let z_in: Vec<Vec<f64>> = (0..n).map(|i| invariant.apply_row(e.invariant.row(i)).to_vec()).collect();
        for i in 0..n {
            let candidates: Vec<usize> =
                (0..n).filter(|&j| j != i && !edge_set.contains(&(i.min(j), i.max(j)))).collect();
            let base: Vec<f64> = candidates.iter().map(|&j| connect_score(&e, i, j, &m)).collect::<Result<_>>()?;
            let inv: Vec<f64> = candidates.iter().map(|&j| left_dot(&z_in[i], &z_in[j])).collect();
            let (Some(s1), Some(s3)) = (quantile(&base, 0.3), quantile(&inv, 0.5)) else { continue };
            let oracle: BTreeSet<usize> = candidates
                .iter()
                .zip(base.iter().zip(&inv))
                .filter(|(_, (&b, &v))| b < s1 && v > s3)
                .map(|(&j, _)| j)
                .collect();
            let t = rule.resolve(&base, &inv)?;
            let got = sample_negatives_fast(&g, i, &scorer, &SamplerThresholds::new(t.sigma1, t.sigma2, t.sigma3))?;
            anchors += 1;
            negatives += oracle.len();
            mismatches += usize::from(got != oracle);
        }
    }
    Ok(Outcome {
        pass: mismatches == 0,
        detail: format!("{SAMPLER_GRAPHS} graphs, {anchors} anchors, {negatives} negatives, {mismatches} mismatched sets (need 0)"),
    })
}

/// Every point of the grid `{-B, -B + B/steps, …, B}^d`.
fn grid(bound: f64, d: usize) -> Vec<Vec<f64>> {
    let axis: Vec<f64> = (0..=2 * GRID_STEPS).map(|k| -bound + k as f64 * bound / GRID_STEPS as f64).collect();
    let mut out = vec![Vec::new()];
    for _ in 0..d {
        out = out.into_iter().flat_map(|p| axis.iter().map(move |&v| [p.clone(), vec![v]].concat())).collect();
    }
    out
}

fn closed_form_max() -> Result<Outcome> {
    let (mut instances, mut mismatches, mut negatives) = (0usize, 0usize, 0usize);
    for d in 1..=2 {
        for k in 0..10u64 {
            let mut rng = component_rng(k + 100 * d as u64, "acceptance-closed-form");
            let n = rng.random_range(8..30);
            let (g, _) = random_graph(&mut rng, n, 0.1)?;
            let e = random_pair(&mut rng, n, d)?;
            let bound = rng.random_range(0.1..2.0);
            let m = ConnectModel::InnerProduct;
            let scorer = Scorer::new(&m, &e)?;
            let spec = AugmentationSpec::perturbation(bound, d)?;
            let points = grid(bound, d);
            for i in 0..n {
                let t = SamplerThresholds::new(-0.1, 0.4, 0.0);
                let got = sample_negatives_exact(&g, i, &scorer, &t, &spec)?;
                let h_i = e.polarized.row(i).to_vec();
                let mut oracle = BTreeSet::new();
                for j in (0..n).filter(|&j| j != i && !g.is_edge(i, j)) {
                    let h_j = e.polarized.row(j).to_vec();
                    let inv = left_dot(&e.invariant.row(i).to_vec(), &e.invariant.row(j).to_vec());
                    let best = points
                        .iter()
                        .map(|mu| {
                            let shifted: Vec<f64> = h_i.iter().zip(mu).map(|(a, b)| a + b).collect();
                            left_dot(&shifted, &h_j) + inv
                        })
                        .fold(f64::NEG_INFINITY, f64::max);
                    if scorer.score(i, j) < t.sigma1 && best > t.sigma2 {
                        oracle.insert(j);
                    }
                }
                instances += 1;
                negatives += oracle.len();
                mismatches += usize::from(got != oracle);
            }
        }
    }
    Ok(Outcome {
        pass: mismatches == 0,
        detail: format!("{instances} anchors in 1-D/2-D, grid step B/{GRID_STEPS}, {negatives} negatives, {mismatches} mismatched sets (need 0)"),
    })
}

fn separation(polarized: &[(AttributedGraph, PipelineRun)]) -> Result<Outcome> {
    let (mut pu, mut pc, mut uu, mut uc) = (vec![], vec![], vec![], vec![]);
    for (seed, (g, run)) in polarized.iter().enumerate() {
        let (c, u) = indices(g, &run.train.embeddings)?;
        pu.push(u.normalized);
        pc.push(c.normalized);
        let n = g.num_nodes();
        let density = g.num_edges() as f64 / (n * (n - 1) / 2) as f64;
        let h = generate_unpolarized(n, density, SynthConfig::default().d_x, seed as u64 + 100)?;
        let other = run_pipeline(&h, &run_config(seed as u64)?, None, None)?;
        let (c, u) = indices(&h, &other.train.embeddings)?;
        uu.push(u.normalized);
        uc.push(c.normalized);
    }
    let unified = mean(&pu) - mean(&uu);
    let classic = mean(&pc) - mean(&uc);
    Ok(Outcome {
        pass: unified >= SEPARATION_MIN && classic < unified,
        detail: format!(
            "unified {:.4} - {:.4} = {unified:.4} (need >= {SEPARATION_MIN}); classic {:.4} - {:.4} = {classic:.4} (need < unified)",
            mean(&pu),
            mean(&uu),
            mean(&pc),
            mean(&uc)
        ),
    })
}

fn semi_supervision(full: &[f64], labelled: &[f64], corrupted: &[f64], truths: &[SeededTruth]) -> Result<Outcome> {
    let raw: Vec<f64> = truths
        .iter()
        .map(|(t, seed)| r0_accuracy(&corrupted_r0(t, R0_CORRUPTION, *seed), &t.labels()))
        .collect::<Result<_>>()?;
    let (u, l, c, r) = (mean(full), mean(labelled), mean(corrupted), mean(raw.as_slice()));
    Ok(Outcome {
        pass: l >= u + LABEL_GAIN && c >= r,
        detail: format!(
            "{}% labels {l:.4} {} vs unsupervised {u:.4} (need gain >= {LABEL_GAIN}); {}%-corrupted R0 final {c:.4} {} vs raw R0 {r:.4}",
            LABEL_FRACTION * 100.0,
            fmt(labelled),
            R0_CORRUPTION * 100.0,
            fmt(corrupted)
        ),
    })
}

fn contracts(runs: &[(AttributedGraph, PipelineRun)]) -> Result<Outcome> {
    let mut failures = Vec::new();

    let worst_row = runs
        .iter()
        .flat_map(|(_, r)| r.clustering.assignment.r.outer_iter().map(|row| (row.sum() - 1.0).abs()).collect::<Vec<_>>())
        .fold(0.0, f64::max);
    if worst_row > ROW_SUM_TOL {
        failures.push(format!("row sum off by {worst_row:e}"));
    }

    let mut rng = component_rng(0, "acceptance-contracts");
    let mut lowest = 1.0f64;
    for _ in 0..RANDOM_ASSIGNMENTS {
        let n = rng.random_range(1..50);
        let r = Array2::from_shape_fn((n, 2), |_| rng.random::<f64>());
        let sums = r.sum_axis(ndarray::Axis(1)).insert_axis(ndarray::Axis(1));
        let labels: Labels = (0..n).map(|i| (i, rng.random_range(0..2))).collect();
        let a = clustering_accuracy(&SoftAssignment { r: &r / &sums, beta: 1.0 }, &labels, &NodeFlags::none(n))?;
        lowest = lowest.min(a);
    }
    if lowest < 0.5 {
        failures.push(format!("random accuracy {lowest}"));
    }

    let mut worst_scale = 0.0f64;
    for (g, run) in runs {
        let e = &run.train.embeddings;
        let base = unified_index(e, g.edges(), None)?.i;
        for c in [1e-3, 0.5, 3.0, 1e3] {
            let scaled = EmbeddingPair::new(&e.polarized * c, &e.invariant * c)?;
            let i = unified_index(&scaled, g.edges(), None)?.i;
            worst_scale = worst_scale.max((i - base).abs() / base);
        }
    }
    if worst_scale > RESCALE_TOL {
        failures.push(format!("rescaled index off by {worst_scale:e}"));
    }

    let (g, run) = &runs[0];
    let params = &run.train.params;
    let digest = params.digest();
    let e = embed(&adjacency_for(g, params), &g.model_features(), params)?;
    let (_, truth) = generate(&SynthConfig { seed: 0, ..SynthConfig::default() })?;
    let many = sample_labels(&truth.labels(), 0.2, 0);
    train_classifier(&e.concat(), &many, &ClassifierConfig::default(), 0)?;
    let after_classifier = params.digest();
    let few = sample_labels(&truth.labels(), 0.02, 0);
    let ctx = PromptContext::new(params, g, &e, &run.train.connect)?;
    prompt_tune(&ctx, PromptSet::from_labels(g, &few, 10)?, &few, &PromptTuneConfig { epochs: 5, ..Default::default() })?;
    let after_prompts = params.digest();
    if after_classifier != digest || after_prompts != digest {
        failures.push("encoder digest changed".into());
    }

    let small = SynthConfig { n_per_class: 60, p_intra: 0.1, p_inter: 0.01, seed: 9, ..SynthConfig::default() };
    let (sg, st) = generate(&small)?;
    let labels = sample_labels(&st.labels(), LABEL_FRACTION, 9);
    let cfg = run_config(9)?;
    let a = run_pipeline(&sg, &cfg, Some(&labels), None)?;
    let b = run_pipeline(&sg, &cfg, Some(&labels), None)?;
    let identical = a.train.params == b.train.params
        && a.train.embeddings == b.train.embeddings
        && a.clustering.assignment == b.clustering.assignment
        && a.predicted == b.predicted;
    if !identical {
        failures.push("fixed-seed rerun differs".into());
    }

    let detail = format!(
        "row sums within {worst_row:.1e}, random accuracy >= {lowest:.3}, rescaled index within {worst_scale:.1e}, \
         digests {}, reruns {}{}",
        if after_classifier == digest && after_prompts == digest { "equal" } else { "differ" },
        if identical { "bit-identical" } else { "differ" },
        if failures.is_empty() { String::new() } else { format!("; failed: {}", failures.join(", ")) }
    );
    Ok(Outcome { pass: failures.is_empty(), detail })
}

fn main() -> Result<()> {
    let start = Instant::now();
    let mut passed = 0;
    let mut tally = |id: u32, name: &str, o: Outcome| {
        report(id, name, &o);
        passed += usize::from(o.pass);
    };

    let rec = recovery()?;
    let runs = rec.runs;
    tally(1, "synthetic recovery", rec.outcome);

    let variants = [
        Variant::Full,
        Variant::NoFeature,
        Variant::NoInteraction,
        Variant::Labels(LABEL_FRACTION),
        Variant::CorruptedR0(R0_CORRUPTION),
    ];
    let (acc, truths) = mid_suite(&variants)?;
    tally(2, "ablation ordering", ablation(&acc[0], &acc[1], &acc[2]));
    tally(3, "gradient correctness", gradients()?);
    tally(4, "fast sampler oracle", sampler_oracle()?);
    tally(5, "closed-form augmentation max", closed_form_max()?);
    tally(6, "index separation", separation(&runs)?);
    tally(7, "semi-supervision benefit", semi_supervision(&acc[0], &acc[3], &acc[4], &truths)?);
    tally(8, "contract suite", contracts(&runs)?);

    println!("{passed}/8 criteria passed in {:.0}s", start.elapsed().as_secs_f64());
    Ok(())
}
