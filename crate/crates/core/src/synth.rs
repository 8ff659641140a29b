//! Seeded planted-partition graphs with ground truth.

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{AttributedGraph, EdgeRecord, Sign};
use crate::io::GroundTruth;
use crate::rng::component_rng;

/// Shift applied to the invariant dimensions of irrelevant nodes.
pub const IRRELEVANT_OFFSET: f64 = 4.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub n_per_class: usize,
    pub p_intra: f64,
    pub p_inter: f64,
    /// Fraction of inter-block edges marked negative.
    pub hostile_frac: f64,
    /// Neutral and irrelevant node counts, as fractions of `2 · n_per_class`.
    pub neutral_frac: f64,
    pub irrelevant_frac: f64,
    pub d_x: usize,
    /// Distance between the two class means in the polarized dimensions.
    pub signal: f64,
    /// Locality groups that cut across both classes (0 disables them).
    pub groups: usize,
    /// Distance-scale of locality means in the invariant dimensions.
    pub locality_signal: f64,
    /// Extra edge probability between members of the same locality.
    pub p_locality: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_per_class: 500,
            p_intra: 0.02,
            p_inter: 0.002,
            hostile_frac: 0.0,
            neutral_frac: 0.0,
            irrelevant_frac: 0.0,
            d_x: 16,
            signal: 3.0,
            groups: 0,
            locality_signal: 0.0,
            p_locality: 0.0,
            seed: 0,
        }
    }
}

fn check_unit(name: &str, v: f64) -> Result<()> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(Error::Config(format!("{name} must lie in [0, 1], got {v}")))
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("p_intra", self.p_intra),
            ("p_inter", self.p_inter),
            ("hostile_frac", self.hostile_frac),
            ("neutral_frac", self.neutral_frac),
            ("irrelevant_frac", self.irrelevant_frac),
            ("p_locality", self.p_locality),
        ] {
            check_unit(name, v)?;
        }
        if self.n_per_class < 2 {
            return Err(Error::Config(format!("n_per_class must be at least 2, got {}", self.n_per_class)));
        }
        if self.d_x == 0 {
            return Err(Error::Config("d_x must be positive".into()));
        }
        if !self.signal.is_finite() || !self.locality_signal.is_finite() {
            return Err(Error::Config("signal and locality_signal must be finite".into()));
        }
        if self.groups > 0 && self.d_x < 2 {
            return Err(Error::Config("locality groups need d_x >= 2".into()));
        }
        Ok(())
    }

    /// Number of leading feature dimensions that carry the class signal.
    pub fn polarized_dims(&self) -> usize {
        self.d_x.div_ceil(2)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Role {
    Class(usize),
    Neutral,
    Irrelevant,
}

fn unit_vector(rng: &mut crate::rng::Rng, d: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-12 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

/// Two planted blocks plus optional neutral and irrelevant nodes.
///
/// Class means sit at `±signal/2` along a unit direction spanning the first
/// `⌈d_x/2⌉` dimensions; neutral nodes sit at the midpoint and link to either
/// block with probability `(p_intra + p_inter)/2`; irrelevant nodes are shifted
/// in the remaining dimensions and attach by sparse random edges (`p = 2/N`).
/// Node ids are shuffled so roles are not contiguous.
pub fn generate(cfg: &SynthConfig) -> Result<(AttributedGraph, GroundTruth)> {
    cfg.validate()?;
    let n_class = 2 * cfg.n_per_class;
    let n_neutral = (cfg.neutral_frac * n_class as f64).round() as usize;
    let n_irrelevant = (cfg.irrelevant_frac * n_class as f64).round() as usize;
    let n = n_class + n_neutral + n_irrelevant;

    let mut roles: Vec<Role> = (0..n_class)
        .map(|i| Role::Class(i / cfg.n_per_class))
        .chain(std::iter::repeat_n(Role::Neutral, n_neutral))
        .chain(std::iter::repeat_n(Role::Irrelevant, n_irrelevant))
        .collect();
    let mut rng = component_rng(cfg.seed, "synth-roles");
    roles.shuffle(&mut rng);

    let kp = cfg.polarized_dims();
    let mut frng = component_rng(cfg.seed, "synth-features");
    let mut x = Array2::from_shape_simple_fn((n, cfg.d_x), || frng.sample::<f64, _>(StandardNormal));
    let scale = 1.0 / (kp as f64).sqrt();
    for (i, role) in roles.iter().enumerate() {
        let shift = match role {
            Role::Class(0) => cfg.signal / 2.0,
            Role::Class(_) => -cfg.signal / 2.0,
            Role::Neutral => 0.0,
            Role::Irrelevant => {
                for v in x.row_mut(i).iter_mut().skip(kp) {
                    *v += IRRELEVANT_OFFSET;
                }
                0.0
            }
        };
        for v in x.row_mut(i).iter_mut().take(kp) {
            *v += shift * scale;
        }
    }

    let mut lrng = component_rng(cfg.seed, "synth-locality");
    let locality: Vec<usize> = (0..n).map(|_| if cfg.groups > 0 { lrng.random_range(0..cfg.groups) } else { 0 }).collect();
    if cfg.groups > 0 && kp < cfg.d_x {
        let dirs: Vec<Vec<f64>> = (0..cfg.groups).map(|_| unit_vector(&mut lrng, cfg.d_x - kp)).collect();
        for (i, role) in roles.iter().enumerate() {
            if *role == Role::Irrelevant {
                continue;
            }
            for (v, d) in x.row_mut(i).iter_mut().skip(kp).zip(&dirs[locality[i]]) {
                *v += cfg.locality_signal / 2.0 * d;
            }
        }
    }

    let mut erng = component_rng(cfg.seed, "synth-edges");
    let sparse = 2.0 / n as f64;
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            let (a, b) = (roles[i], roles[j]);
            let mut p = match (a, b) {
                (Role::Irrelevant, _) | (_, Role::Irrelevant) => sparse,
                (Role::Neutral, _) | (_, Role::Neutral) => (cfg.p_intra + cfg.p_inter) / 2.0,
                (Role::Class(x), Role::Class(y)) if x == y => cfg.p_intra,
                _ => cfg.p_inter,
            };
            let local = !matches!(a, Role::Irrelevant) && !matches!(b, Role::Irrelevant);
            if cfg.groups > 0 && local && locality[i] == locality[j] {
                p += cfg.p_locality;
            }
            if erng.random::<f64>() < p {
                let inter = matches!((a, b), (Role::Class(x), Role::Class(y)) if x != y);
                let hostile = inter && erng.random::<f64>() < cfg.hostile_frac;
                let sign = if hostile { Sign::Negative } else { Sign::Unsigned };
                edges.push(EdgeRecord::new(i, j).with_sign(sign));
            }
        }
    }

    let truth = GroundTruth {
        class: roles.iter().map(|r| if let Role::Class(c) = r { Some(*c) } else { None }).collect(),
        neutral: roles.iter().map(|r| *r == Role::Neutral).collect(),
        irrelevant: roles.iter().map(|r| *r == Role::Irrelevant).collect(),
    };
    Ok((AttributedGraph::new(n, edges, x)?, truth))
}

/// Erdős–Rényi graph with standard normal features and no planted structure.
pub fn generate_unpolarized(n: usize, p: f64, d_x: usize, seed: u64) -> Result<AttributedGraph> {
    check_unit("p", p)?;
    if d_x == 0 {
        return Err(Error::Config("d_x must be positive".into()));
    }
    let mut frng = component_rng(seed, "er-features");
    let x = Array2::from_shape_simple_fn((n, d_x), || frng.sample::<f64, _>(StandardNormal));
    let mut erng = component_rng(seed, "er-edges");
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if erng.random::<f64>() < p {
                edges.push(EdgeRecord::new(i, j));
            }
        }
    }
    AttributedGraph::new(n, edges, x)
}

/// Edge density `|E| / C(n, 2)` a planted graph has in expectation.
pub fn expected_density(cfg: &SynthConfig) -> f64 {
    let n = cfg.n_per_class as f64;
    let intra = 2.0 * n * (n - 1.0) / 2.0 * cfg.p_intra;
    let inter = n * n * cfg.p_inter;
    let total = 2.0 * n;
    (intra + inter) / (total * (total - 1.0) / 2.0)
}
