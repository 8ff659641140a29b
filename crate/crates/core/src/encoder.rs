//! Twin two-layer graph convolution encoders.
//!
//! Each branch computes `H = Â · relu(Â · X · W1) · W2`. With a signed
//! adjacency the hidden layer is propagated over `Â⁺` and `Â⁻` separately and
//! the two results are concatenated before `W2`.
//!
//! Training embeds through [`forward`] with [`OutputScaling::StandardizeInvariant`]:
//! the invariant block is centred and divided by the square root of its total
//! variance, which pins its scale so the ratio objective cannot shrink it
//! away. [`encode`] is the plain, unscaled map.

use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use rand::Rng as _;

use crate::adjacency::NormalizedAdjacency;
use crate::error::{Error, Result};
use crate::rng::component_rng;
use crate::tensor::{write_tensor, TensorReader, TensorSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EncoderDims {
    pub d_x: usize,
    pub d_h: usize,
    pub d_po: usize,
    pub d_in: usize,
    /// Propagation channels: 1 for unsigned adjacency, 2 for a signed pair.
    pub channels: usize,
}

impl EncoderDims {
    pub fn new(d_x: usize, d_h: usize, d_po: usize, d_in: usize) -> Self {
        EncoderDims { d_x, d_h, d_po, d_in, channels: 1 }
    }

    pub fn with_channels(mut self, channels: usize) -> Self {
        self.channels = channels;
        self
    }

    fn validate(&self) -> Result<()> {
        let EncoderDims { d_x, d_h, d_po, d_in, channels } = *self;
        if d_x == 0 || d_h == 0 || d_po == 0 || d_in == 0 {
            return Err(Error::Config(format!(
                "encoder dimensions must be positive (d_x={d_x}, d_h={d_h}, d_po={d_po}, d_in={d_in})"
            )));
        }
        if !(1..=2).contains(&channels) {
            return Err(Error::Config(format!("channels must be 1 or 2, got {channels}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Branch {
    pub w1: Array2<f64>,
    pub w2: Array2<f64>,
}

impl Branch {
    fn frobenius(&self) -> (f64, f64) {
        (frobenius(&self.w1), frobenius(&self.w2))
    }
}

fn frobenius(m: &Array2<f64>) -> f64 {
    m.iter().map(|v| v * v).sum::<f64>().sqrt()
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    pub dims: EncoderDims,
    pub seed: u64,
    pub polarized: Branch,
    pub invariant: Branch,
}

fn glorot(rng: &mut crate::rng::Rng, rows: usize, cols: usize) -> Array2<f64> {
    let limit = (6.0 / (rows + cols) as f64).sqrt();
    Array2::from_shape_simple_fn((rows, cols), || rng.random_range(-limit..=limit))
}

/// Deterministic uniform Glorot initialisation.
pub fn init_params(dims: EncoderDims, seed: u64) -> Result<EncoderParams> {
    dims.validate()?;
    let mut rng = component_rng(seed, "encoder-init");
    let hidden = dims.d_h * dims.channels;
    let polarized = Branch {
        w1: glorot(&mut rng, dims.d_x, dims.d_h),
        w2: glorot(&mut rng, hidden, dims.d_po),
    };
    let invariant = Branch {
        w1: glorot(&mut rng, dims.d_x, dims.d_h),
        w2: glorot(&mut rng, hidden, dims.d_in),
    };
    Ok(EncoderParams { dims, seed, polarized, invariant })
}

impl TensorSet for EncoderParams {
    fn tensors(&self) -> Vec<(&'static str, &Array2<f64>)> {
        vec![
            ("polarized.w1", &self.polarized.w1),
            ("polarized.w2", &self.polarized.w2),
            ("invariant.w1", &self.invariant.w1),
            ("invariant.w2", &self.invariant.w2),
        ]
    }

    fn tensors_mut(&mut self) -> Vec<&mut Array2<f64>> {
        vec![
            &mut self.polarized.w1,
            &mut self.polarized.w2,
            &mut self.invariant.w1,
            &mut self.invariant.w2,
        ]
    }
}

impl EncoderParams {
    /// Frobenius norms of the polarized weights, `(w1, w2)`.
    pub fn polarized_norms(&self) -> (f64, f64) {
        self.polarized.frobenius()
    }

    /// Rescales the polarized weights back onto spheres of the given norms.
    pub fn project_polarized(&mut self, norms: (f64, f64)) {
        for (w, target) in [(&mut self.polarized.w1, norms.0), (&mut self.polarized.w2, norms.1)] {
            let n = frobenius(w);
            if n > 0.0 {
                w.mapv_inplace(|v| v * target / n);
            }
        }
    }

    /// Text checkpoint; `{}` formatting of `f64` round-trips bit-exactly.
    pub fn to_checkpoint(&self) -> String {
        let d = self.dims;
        let mut out = String::from("doctra-encoder 1\n");
        out.push_str(&format!("seed {}\n", self.seed));
        out.push_str(&format!("dims {} {} {} {} {}\n", d.d_x, d.d_h, d.d_po, d.d_in, d.channels));
        for (name, t) in self.tensors() {
            write_tensor(&mut out, name, t);
        }
        out.push_str("end\n");
        out
    }

    pub fn from_checkpoint(text: &str) -> Result<Self> {
        let mut r = TensorReader::new("encoder checkpoint", text);
        let (line, toks) = r.next_tokens()?;
        if toks != ["doctra-encoder", "1"] {
            return Err(Error::parse("encoder checkpoint", line, "not a doctra-encoder v1 checkpoint"));
        }
        let seed = r.keyed::<u64>("seed", 1)?[0];
        let d = r.keyed::<usize>("dims", 5)?;
        let dims = EncoderDims { d_x: d[0], d_h: d[1], d_po: d[2], d_in: d[3], channels: d[4] };
        dims.validate()?;
        let hidden = dims
            .d_h
            .checked_mul(dims.channels)
            .ok_or_else(|| Error::Config("hidden width overflows".into()))?;
        let polarized = Branch {
            w1: r.tensor("polarized.w1", dims.d_x, dims.d_h)?,
            w2: r.tensor("polarized.w2", hidden, dims.d_po)?,
        };
        let invariant = Branch {
            w1: r.tensor("invariant.w1", dims.d_x, dims.d_h)?,
            w2: r.tensor("invariant.w2", hidden, dims.d_in)?,
        };
        r.finish()?;
        Ok(EncoderParams { dims, seed, polarized, invariant })
    }

    pub fn digest(&self) -> String {
        crate::tensor::sha256_hex(self.to_checkpoint().as_bytes())
    }
}

/// Polarized and invariant embeddings; `H = H_po ∥ H_in`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingPair {
    pub polarized: Array2<f64>,
    pub invariant: Array2<f64>,
}

impl EmbeddingPair {
    pub fn new(polarized: Array2<f64>, invariant: Array2<f64>) -> Result<Self> {
        if polarized.nrows() != invariant.nrows() {
            return Err(Error::Validation(format!(
                "polarized has {} rows, invariant has {}",
                polarized.nrows(),
                invariant.nrows()
            )));
        }
        Ok(EmbeddingPair { polarized, invariant })
    }

    pub fn num_nodes(&self) -> usize {
        self.polarized.nrows()
    }

    pub fn concat(&self) -> Array2<f64> {
        ndarray::concatenate(Axis(1), &[self.polarized.view(), self.invariant.view()])
            .expect("row counts agree")
    }

    /// Row `i` of `H_po ∥ H_in`.
    pub fn full_row(&self, i: usize) -> Vec<f64> {
        self.polarized.row(i).iter().chain(self.invariant.row(i)).copied().collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OutputScaling {
    /// Raw branch outputs.
    None,
    /// Centre the invariant block and scale it to unit total variance.
    #[default]
    StandardizeInvariant,
}

/// Graph-dependent encoder input with `Â X` precomputed per channel.
pub struct EncoderInput<'a> {
    adj: &'a NormalizedAdjacency,
    propagated: Vec<Array2<f64>>,
}

impl<'a> EncoderInput<'a> {
    pub fn new(adj: &'a NormalizedAdjacency, x: &Array2<f64>) -> Result<Self> {
        if adj.num_nodes() != x.nrows() {
            return Err(Error::Validation(format!(
                "adjacency has {} nodes but feature matrix has {} rows",
                adj.num_nodes(),
                x.nrows()
            )));
        }
        let propagated = adj.channels().iter().map(|a| a.matmul(&x.view())).collect();
        Ok(EncoderInput { adj, propagated })
    }

    pub fn num_nodes(&self) -> usize {
        self.adj.num_nodes()
    }

    pub fn num_features(&self) -> usize {
        self.propagated[0].ncols()
    }

    fn check(&self, p: &EncoderParams) -> Result<()> {
        if p.dims.d_x != self.num_features() || p.dims.channels != self.propagated.len() {
            return Err(Error::Validation(format!(
                "encoder expects d_x={} with {} channel(s); input has d_x={} with {}",
                p.dims.d_x,
                p.dims.channels,
                self.num_features(),
                self.propagated.len()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
struct BranchTrace {
    pre_activation: Vec<Array2<f64>>,
    hidden: Array2<f64>,
}

fn branch_forward(input: &EncoderInput<'_>, b: &Branch) -> (Array2<f64>, BranchTrace) {
    let d_h = b.w1.ncols();
    let n = input.num_nodes();
    let channels = input.adj.channels();
    let mut hidden = Array2::zeros((n, d_h * channels.len()));
    let mut pre_activation = Vec::with_capacity(channels.len());
    for (c, (a, px)) in channels.iter().zip(&input.propagated).enumerate() {
        let z = px.dot(&b.w1);
        let act = z.mapv(|v| v.max(0.0));
        hidden.slice_mut(s![.., c * d_h..(c + 1) * d_h]).assign(&a.matmul(&act.view()));
        pre_activation.push(z);
    }
    let out = hidden.dot(&b.w2);
    (out, BranchTrace { pre_activation, hidden })
}

/// Returns parameter gradients and, optionally, the gradient w.r.t. `X`.
fn branch_backward(
    input: &EncoderInput<'_>,
    b: &Branch,
    trace: &BranchTrace,
    grad_out: &ArrayView2<f64>,
    want_input: bool,
) -> (Branch, Option<Array2<f64>>) {
    let d_h = b.w1.ncols();
    let grad_w2 = trace.hidden.t().dot(grad_out);
    let grad_hidden = grad_out.dot(&b.w2.t());
    let mut grad_w1 = Array2::zeros(b.w1.dim());
    let mut grad_x: Option<Array2<f64>> = None;
    for (c, a) in input.adj.channels().iter().enumerate() {
        let gh = grad_hidden.slice(s![.., c * d_h..(c + 1) * d_h]);
        let mut gz = a.matmul(&gh);
        gz.zip_mut_with(&trace.pre_activation[c], |g, z| {
            if *z <= 0.0 {
                *g = 0.0;
            }
        });
        grad_w1 += &input.propagated[c].t().dot(&gz);
        if want_input {
            let gpx = gz.dot(&b.w1.t());
            let gx = a.matmul(&gpx.view());
            grad_x = Some(match grad_x {
                Some(acc) => acc + gx,
                None => gx,
            });
        }
    }
    (Branch { w1: grad_w1, w2: grad_w2 }, grad_x)
}

/// Centres `raw` and divides by `sqrt(total variance)`. Returns the scale.
pub fn standardize(raw: &Array2<f64>) -> (Array2<f64>, f64) {
    let n = raw.nrows().max(1) as f64;
    let mean = raw.mean_axis(Axis(0)).expect("non-empty columns");
    let centered = raw - &mean;
    let scale = (centered.iter().map(|v| v * v).sum::<f64>() / n).sqrt();
    if scale <= 1e-12 {
        (Array2::zeros(raw.dim()), 0.0)
    } else {
        (centered / scale, scale)
    }
}

/// Backward pass of [`standardize`] given its output `h` and scale.
pub fn standardize_backward(h: &Array2<f64>, scale: f64, grad: &Array2<f64>) -> Array2<f64> {
    if scale == 0.0 {
        return Array2::zeros(h.dim());
    }
    let n = h.nrows() as f64;
    let inner: f64 = grad.iter().zip(h.iter()).map(|(g, v)| g * v).sum();
    let mut gc = (grad - &(h * (inner / n))) / scale;
    let mean = gc.mean_axis(Axis(0)).expect("non-empty columns");
    gc -= &mean;
    gc
}

/// Forward pass with everything needed for [`backward`].
pub struct Forward {
    pub embeddings: EmbeddingPair,
    scaling: OutputScaling,
    invariant_scale: f64,
    polarized: BranchTrace,
    invariant: BranchTrace,
}

pub fn forward(input: &EncoderInput<'_>, p: &EncoderParams, scaling: OutputScaling) -> Result<Forward> {
    input.check(p)?;
    let (h_po, t_po) = branch_forward(input, &p.polarized);
    let (raw_in, t_in) = branch_forward(input, &p.invariant);
    let (h_in, invariant_scale) = match scaling {
        OutputScaling::None => (raw_in, 1.0),
        OutputScaling::StandardizeInvariant => standardize(&raw_in),
    };
    Ok(Forward {
        embeddings: EmbeddingPair { polarized: h_po, invariant: h_in },
        scaling,
        invariant_scale,
        polarized: t_po,
        invariant: t_in,
    })
}

/// Gradients of a scalar loss w.r.t. both branches, given its gradients
/// w.r.t. the (possibly standardised) embeddings.
pub fn backward(
    input: &EncoderInput<'_>,
    p: &EncoderParams,
    fwd: &Forward,
    grad_po: &Array2<f64>,
    grad_in: &Array2<f64>,
) -> EncoderParams {
    backward_full(input, p, fwd, grad_po, grad_in, false).0
}

/// As [`backward`], also returning the gradient w.r.t. the input features.
pub fn backward_with_input(
    input: &EncoderInput<'_>,
    p: &EncoderParams,
    fwd: &Forward,
    grad_po: &Array2<f64>,
    grad_in: &Array2<f64>,
) -> (EncoderParams, Array2<f64>) {
    let (g, gx) = backward_full(input, p, fwd, grad_po, grad_in, true);
    (g, gx.expect("input gradient requested"))
}

fn backward_full(
    input: &EncoderInput<'_>,
    p: &EncoderParams,
    fwd: &Forward,
    grad_po: &Array2<f64>,
    grad_in: &Array2<f64>,
    want_input: bool,
) -> (EncoderParams, Option<Array2<f64>>) {
    let raw_grad_in = match fwd.scaling {
        OutputScaling::None => grad_in.clone(),
        OutputScaling::StandardizeInvariant => {
            standardize_backward(&fwd.embeddings.invariant, fwd.invariant_scale, grad_in)
        }
    };
    let (g_po, gx_po) = branch_backward(input, &p.polarized, &fwd.polarized, &grad_po.view(), want_input);
    let (g_in, gx_in) = branch_backward(input, &p.invariant, &fwd.invariant, &raw_grad_in.view(), want_input);
    let gx = match (gx_po, gx_in) {
        (Some(a), Some(b)) => Some(a + b),
        _ => None,
    };
    (
        EncoderParams {
            dims: p.dims,
            seed: p.seed,
            polarized: g_po,
            invariant: g_in,
        },
        gx,
    )
}

/// `H_po = Â·relu(Â·X·W1_po)·W2_po`, and likewise for the invariant branch.
pub fn encode(adj: &NormalizedAdjacency, x: &Array2<f64>, p: &EncoderParams) -> Result<EmbeddingPair> {
    let input = EncoderInput::new(adj, x)?;
    Ok(forward(&input, p, OutputScaling::None)?.embeddings)
}

/// Embeddings as used for training and everything downstream of it.
pub fn embed(adj: &NormalizedAdjacency, x: &Array2<f64>, p: &EncoderParams) -> Result<EmbeddingPair> {
    let input = EncoderInput::new(adj, x)?;
    Ok(forward(&input, p, OutputScaling::StandardizeInvariant)?.embeddings)
}

/// Centring and scale of the invariant block, fixed from a reference graph.
#[derive(Debug, Clone, PartialEq)]
pub struct InvariantScaling {
    pub mean: Array1<f64>,
    pub scale: f64,
}

impl InvariantScaling {
    pub fn of(raw_invariant: &Array2<f64>) -> Self {
        let mean = raw_invariant
            .mean_axis(Axis(0))
            .unwrap_or_else(|| Array1::zeros(raw_invariant.ncols()));
        let (_, scale) = standardize(raw_invariant);
        InvariantScaling { mean, scale }
    }

    pub fn apply(&self, raw: &Array2<f64>) -> Array2<f64> {
        if self.scale == 0.0 {
            return Array2::zeros(raw.dim());
        }
        (raw - &self.mean) / self.scale
    }
}

/// Embeds each row of `x` as an isolated node, whose propagation operator is
/// its self-loop alone, scaling the invariant block with `s`.
pub fn embed_isolated(p: &EncoderParams, x: &Array2<f64>, s: &InvariantScaling) -> Result<EmbeddingPair> {
    if x.ncols() != p.dims.d_x {
        return Err(Error::Validation(format!("expected {} feature columns, got {}", p.dims.d_x, x.ncols())));
    }
    let branch = |b: &Branch| {
        let act = x.dot(&b.w1).mapv(|v| v.max(0.0));
        let views = vec![act.view(); p.dims.channels];
        ndarray::concatenate(Axis(1), &views).expect("equal row counts").dot(&b.w2)
    };
    EmbeddingPair::new(branch(&p.polarized), s.apply(&branch(&p.invariant)))
}
