use std::fs;
use std::path::{Path, PathBuf};

use doctra::encoder::{embed, EmbeddingPair, EncoderParams};
use doctra::graph::{AttributedGraph, Labels};
use doctra::io::{format_ground_truth, format_labels, load_graph, load_ground_truth, save_graph, GroundTruth};
use doctra::pipeline::{self, RunConfig};
use doctra::sampler::ConnectModel;
use doctra::supervision::{adjacency_for, choose_supervision_path, PromptContext, PromptSet, SupervisionPath};
use doctra::synth;
use doctra::{Error, Result};
use serde_json::json;

use crate::report::Report;

fn required<'a>(p: &'a Option<PathBuf>, key: &str) -> Result<&'a Path> {
    p.as_deref().ok_or_else(|| Error::Config(format!("paths.{key} is required for this command")))
}

fn load_inputs(cfg: &RunConfig) -> Result<AttributedGraph> {
    let p = &cfg.paths;
    load_graph(required(&p.edges, "edges")?, required(&p.features, "features")?, p.labels.as_deref(), p.r0.as_deref())
}

fn load_truth(cfg: &RunConfig) -> Result<Option<GroundTruth>> {
    cfg.paths.truth.as_deref().map(load_ground_truth).transpose()
}

fn checkpoint_path(cfg: &RunConfig, r: &Report) -> PathBuf {
    cfg.paths.checkpoint.clone().unwrap_or_else(|| r.path("encoder.ckpt"))
}

fn load_encoder(path: &Path) -> Result<EncoderParams> {
    let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("checkpoint {}: {e}", path.display())))?;
    EncoderParams::from_checkpoint(&text)
}

fn embeddings(g: &AttributedGraph, p: &EncoderParams) -> Result<EmbeddingPair> {
    embed(&adjacency_for(g, p), &g.model_features(), p)
}

/// Labels to score against: the ground truth when given, else the label file.
fn scoring_labels(g: &AttributedGraph, truth: Option<&GroundTruth>) -> Option<Labels> {
    truth.map(GroundTruth::labels).or_else(|| g.labels().cloned())
}

/// Labels that drive the semi-objective path, if any.
fn semi_labels(g: &AttributedGraph) -> Result<Option<&Labels>> {
    match g.labels().filter(|l| !l.is_empty()) {
        Some(l) if choose_supervision_path(l.len() as f64 / g.num_nodes() as f64)? == SupervisionPath::SemiObjective => Ok(Some(l)),
        _ => Ok(None),
    }
}

pub fn generate(cfg: &RunConfig) -> Result<()> {
    let mut r = Report::open(cfg, "generate")?;
    let (g, truth) = synth::generate(&cfg.synth)?;
    let mut files = save_graph(&g, r.dir(), "graph")?;
    for (name, body) in [("graph.labels", format_labels(&truth.labels())), ("graph.truth", format_ground_truth(&truth))] {
        let p = r.path(name);
        fs::write(&p, body)?;
        files.push(p);
    }
    let files: Vec<String> = files.iter().map(|p| p.display().to_string()).collect();
    r.line(json!({ "command": "generate", "nodes": g.num_nodes(), "edges": g.num_edges(), "files": files }))?;
    r.finish()?;
    println!("generated {} nodes, {} edges into {}", g.num_nodes(), g.num_edges(), crate::report::out_dir(cfg).display());
    Ok(())
}

pub fn train(cfg: &RunConfig) -> Result<()> {
    let mut r = Report::open(cfg, "train")?;
    let g = load_inputs(cfg)?;
    let truth = load_truth(cfg)?;
    let run = pipeline::run_pipeline(&g, cfg, g.labels(), g.r0())?;
    let ckpt = checkpoint_path(cfg, &r);
    fs::write(&ckpt, run.train.params.to_checkpoint())?;
    let connect = cfg.paths.connect.clone().unwrap_or_else(|| r.path("connect.ckpt"));
    fs::write(&connect, run.train.connect.to_checkpoint())?;
    fs::write(r.path("history.log"), run.train.history.to_log())?;
    let accuracy = scoring_labels(&g, truth.as_ref())
        .map(|l| pipeline::prediction_accuracy(&run.predicted, &l, &run.clustering.flags))
        .transpose()?;
    let h = &run.train.history;
    r.line(json!({
        "command": "train",
        "epochs_run": h.records.len(),
        "stopped_early": h.stopped_early,
        "final_loss": h.records.last().map(|x| x.total),
        "supervision": run.path.map(|p| format!("{p:?}")),
        "checkpoint": ckpt.display().to_string(),
        "digest": run.train.params.digest(),
        "accuracy": accuracy,
    }))?;
    r.finish()?;
    println!("trained {} epochs; checkpoint {}", h.records.len(), ckpt.display());
    if let Some(a) = accuracy {
        println!("accuracy {a:.4}");
    }
    Ok(())
}

pub fn cluster(cfg: &RunConfig) -> Result<()> {
    let mut r = Report::open(cfg, "cluster")?;
    let g = load_inputs(cfg)?;
    let truth = load_truth(cfg)?;
    let params = load_encoder(&checkpoint_path(cfg, &r))?;
    let e = embeddings(&g, &params)?;
    let c = pipeline::cluster(&e, &cfg.cluster, cfg.seed, semi_labels(&g)?)?;
    let hard = c.hard();
    let mut rows = String::new();
    for (i, row) in c.assignment.r.outer_iter().enumerate() {
        let v = json!({
            "id": i,
            "r1": row[0],
            "r2": row[1],
            "hard_class": hard[i],
            "neutral": c.flags.neutral[i],
            "irrelevant": c.flags.irrelevant[i],
        });
        rows.push_str(&v.to_string());
        rows.push('\n');
    }
    fs::write(r.path("assignments.jsonl"), rows)?;
    let accuracy = scoring_labels(&g, truth.as_ref()).map(|l| c.accuracy(&l)).transpose()?;
    let neutral = c.flags.neutral.iter().filter(|&&f| f).count();
    let irrelevant = c.flags.irrelevant.iter().filter(|&&f| f).count();
    r.line(json!({
        "command": "cluster",
        "nodes": hard.len(),
        "class_sizes": [hard.iter().filter(|&&k| k == 0).count(), hard.iter().filter(|&&k| k == 1).count()],
        "neutral": neutral,
        "irrelevant": irrelevant,
        "accuracy": accuracy,
    }))?;
    r.finish()?;
    println!("clustered {} nodes ({neutral} neutral, {irrelevant} irrelevant)", hard.len());
    if let Some(a) = accuracy {
        println!("accuracy {a:.4}");
    }
    Ok(())
}

pub fn index(cfg: &RunConfig) -> Result<()> {
    let mut r = Report::open(cfg, "index")?;
    let g = load_inputs(cfg)?;
    let params = load_encoder(&checkpoint_path(cfg, &r))?;
    let e = embeddings(&g, &params)?;
    let (classic, unified) = pipeline::indices(&g, &e)?;
    r.line(json!({ "command": "index", "classic": classic, "unified": unified }))?;
    r.finish()?;
    println!("classic I {:.4} (normalized {:.4})", classic.i, classic.normalized);
    println!("unified I {:.4} (normalized {:.4})", unified.i, unified.normalized);
    Ok(())
}

pub fn eval(cfg: &RunConfig) -> Result<()> {
    let mut r = Report::open(cfg, "eval")?;
    let rows = pipeline::evaluate(cfg)?;
    let mut table = String::from("suite\tvariant\tmean\tstd\n");
    for row in &rows {
        r.line(json!({ "command": "eval", "row": row }))?;
        table.push_str(&format!("{}\t{}\t{:.4}\t{:.4}\n", row.suite, row.variant, row.mean, row.std));
    }
    fs::write(r.path("eval.tsv"), &table)?;
    r.finish()?;
    for row in &rows {
        println!("suite {} {:<20} {:.4} ± {:.4}", row.suite, row.variant, row.mean, row.std);
    }
    Ok(())
}

fn direct_accuracy(predicted: &[usize], labels: &Labels) -> f64 {
    if labels.is_empty() {
        return 0.0;
    }
    labels.iter().filter(|(&i, &c)| predicted.get(i) == Some(&c)).count() as f64 / labels.len() as f64
}

pub fn prompt_tune(cfg: &RunConfig) -> Result<()> {
    let mut r = Report::open(cfg, "prompt-tune")?;
    let g = load_inputs(cfg)?;
    let truth = load_truth(cfg)?;
    let labels = g.labels().cloned().ok_or_else(|| Error::Config("paths.labels is required for prompt-tune".into()))?;
    let params = load_encoder(&checkpoint_path(cfg, &r))?;
    let connect_path = cfg.paths.connect.clone().unwrap_or_else(|| r.path("connect.ckpt"));
    let text = fs::read_to_string(&connect_path).map_err(|e| Error::Config(format!("connect {}: {e}", connect_path.display())))?;
    let connect = ConnectModel::from_checkpoint(&text)?;
    let e = embeddings(&g, &params)?;
    let ctx = PromptContext::new(&params, &g, &e, &connect)?;
    let start = match &cfg.paths.prompts {
        Some(p) => PromptSet::from_checkpoint(&fs::read_to_string(p)?)?,
        None => PromptSet::from_labels(&g, &labels, cfg.supervision.k_induced)?,
    };
    let score = scoring_labels(&g, truth.as_ref()).unwrap_or_else(|| labels.clone());
    let digest = params.digest();
    let pre = direct_accuracy(&ctx.predict(&start)?, &score);
    let out = doctra::supervision::prompt_tune(&ctx, start, &labels, &cfg.supervision.tune)?;
    let post = direct_accuracy(&ctx.predict(&out.prompts)?, &score);
    let prompts_path = r.path("prompts.ckpt");
    fs::write(&prompts_path, out.prompts.to_checkpoint())?;
    r.line(json!({
        "command": "prompt-tune",
        "pre_accuracy": pre,
        "post_accuracy": post,
        "first_loss": out.losses.first(),
        "last_loss": out.losses.last(),
        "best_loss": out.best_loss,
        "encoder_digest": digest,
        "encoder_unchanged": params.digest() == digest,
        "prompts": prompts_path.display().to_string(),
    }))?;
    r.finish()?;
    println!("prompt accuracy {pre:.4} -> {post:.4}");
    Ok(())
}
