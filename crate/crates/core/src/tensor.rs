//! Named collections of dense matrices, their text serialisation, and a
//! central finite-difference gradient checker shared by every trainable
//! component.

use std::fmt::Write as _;

use ndarray::Array2;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// A fixed, ordered set of named matrices (model parameters or gradients).
pub trait TensorSet: Clone {
    fn tensors(&self) -> Vec<(&'static str, &Array2<f64>)>;
    fn tensors_mut(&mut self) -> Vec<&mut Array2<f64>>;

    fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for t in z.tensors_mut() {
            t.fill(0.0);
        }
        z
    }

    fn num_values(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }

    fn all_finite(&self) -> bool {
        self.tensors().iter().all(|(_, t)| t.iter().all(|v| v.is_finite()))
    }
}

impl TensorSet for Array2<f64> {
    fn tensors(&self) -> Vec<(&'static str, &Array2<f64>)> {
        vec![("matrix", self)]
    }

    fn tensors_mut(&mut self) -> Vec<&mut Array2<f64>> {
        vec![self]
    }
}

/// Momentum gradient descent: `v <- m v + g; p <- p - lr v`.
#[derive(Debug, Clone)]
pub struct Momentum<T: TensorSet> {
    velocity: T,
    lr: f64,
    momentum: f64,
}

impl<T: TensorSet> Momentum<T> {
    pub fn new(like: &T, lr: f64, momentum: f64) -> Self {
        Momentum {
            velocity: like.zeros_like(),
            lr,
            momentum,
        }
    }

    pub fn step(&mut self, params: &mut T, grads: &T) {
        let m = self.momentum;
        let lr = self.lr;
        let grads = grads.tensors();
        for ((v, p), (_, g)) in self
            .velocity
            .tensors_mut()
            .into_iter()
            .zip(params.tensors_mut())
            .zip(grads)
        {
            v.zip_mut_with(g, |v, g| *v = m * *v + g);
            p.scaled_add(-lr, v);
        }
    }
}

/// Outcome of comparing analytic gradients to central differences.
#[derive(Debug, Clone, PartialEq)]
pub struct GradReport {
    pub max_rel_error: f64,
    /// Largest relative error within each named tensor.
    pub per_tensor: Vec<(String, f64)>,
    pub entries_checked: usize,
}

/// Denominator floor in the relative error, so entries whose true gradient is
/// numerically zero are judged on absolute error instead.
pub const REL_ERROR_FLOOR: f64 = 1e-5;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_ERROR_FLOOR)
}

/// Checks `objective`'s gradient at `params` against central differences with
/// step `h`. The objective returns its value and its analytic gradient.
pub fn grad_check<T, F>(objective: F, params: &T, h: f64) -> Result<GradReport>
where
    T: TensorSet,
    F: Fn(&T) -> Result<(f64, T)>,
{
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::Argument(format!("finite-difference step must be positive, got {h}")));
    }
    let eval = |p: &T| -> Result<f64> {
        let (v, _) = objective(p)?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::Numerical(format!("objective evaluated to {v}")))
        }
    };
    let (value, analytic) = objective(params)?;
    if !value.is_finite() {
        return Err(Error::Numerical(format!("objective evaluated to {value}")));
    }
    let names: Vec<&'static str> = params.tensors().iter().map(|(n, _)| *n).collect();
    let analytic_flat: Vec<Vec<f64>> = analytic
        .tensors()
        .iter()
        .map(|(_, t)| t.iter().copied().collect())
        .collect();

    let mut probe = params.clone();
    let mut per_tensor = Vec::with_capacity(names.len());
    let mut max_rel_error: f64 = 0.0;
    let mut entries_checked = 0;
    for (k, name) in names.iter().enumerate() {
        let len = analytic_flat[k].len();
        let mut worst: f64 = 0.0;
        for idx in 0..len {
            let original = probe.tensors_mut()[k].as_slice_memory_order_mut().expect("standard layout")[idx];
            probe.tensors_mut()[k].as_slice_memory_order_mut().unwrap()[idx] = original + h;
            let plus = eval(&probe)?;
            probe.tensors_mut()[k].as_slice_memory_order_mut().unwrap()[idx] = original - h;
            let minus = eval(&probe)?;
            probe.tensors_mut()[k].as_slice_memory_order_mut().unwrap()[idx] = original;
            let numeric = (plus - minus) / (2.0 * h);
            worst = worst.max(relative_error(analytic_flat[k][idx], numeric));
            entries_checked += 1;
        }
        max_rel_error = max_rel_error.max(worst);
        per_tensor.push((name.to_string(), worst));
    }
    Ok(GradReport {
        max_rel_error,
        per_tensor,
        entries_checked,
    })
}

pub(crate) fn write_tensor(out: &mut String, name: &str, t: &Array2<f64>) {
    let _ = writeln!(out, "tensor {name} {} {}", t.nrows(), t.ncols());
    for row in t.outer_iter() {
        let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        out.push_str(&cells.join(" "));
        out.push('\n');
    }
}

/// Line cursor over a checkpoint body.
pub(crate) struct TensorReader<'a> {
    source: &'static str,
    lines: std::iter::Peekable<std::iter::Enumerate<std::str::Lines<'a>>>,
}

impl<'a> TensorReader<'a> {
    pub fn new(source: &'static str, text: &'a str) -> Self {
        TensorReader {
            source,
            lines: text.lines().enumerate().peekable(),
        }
    }

    /// Next line split into tokens, with its 1-based number.
    pub fn next_tokens(&mut self) -> Result<(usize, Vec<&'a str>)> {
        match self.lines.next() {
            Some((i, l)) => Ok((i + 1, l.split_whitespace().collect())),
            None => Err(Error::parse(self.source, 0, "unexpected end of file")),
        }
    }

    /// Expects a line `keyword v1 v2 ...` with exactly `n` values.
    pub fn keyed<T: std::str::FromStr>(&mut self, keyword: &str, n: usize) -> Result<Vec<T>> {
        let (line, toks) = self.next_tokens()?;
        if toks.first() != Some(&keyword) || toks.len() != n + 1 {
            return Err(Error::parse(self.source, line, format!("expected `{keyword}` with {n} values")));
        }
        toks[1..]
            .iter()
            .map(|t| {
                t.parse::<T>()
                    .map_err(|_| Error::parse(self.source, line, format!("invalid value `{t}`")))
            })
            .collect()
    }

    pub fn tensor(&mut self, name: &str, rows: usize, cols: usize) -> Result<Array2<f64>> {
        let (line, toks) = self.next_tokens()?;
        let header_ok = toks.len() == 4
            && toks[0] == "tensor"
            && toks[1] == name
            && toks[2].parse::<usize>().ok() == Some(rows)
            && toks[3].parse::<usize>().ok() == Some(cols);
        if !header_ok {
            return Err(Error::parse(
                self.source,
                line,
                format!("expected `tensor {name} {rows} {cols}`"),
            ));
        }
        let mut data = Vec::with_capacity(rows.saturating_mul(cols).min(1 << 20));
        for _ in 0..rows {
            let (line, toks) = self.next_tokens()?;
            if toks.len() != cols {
                return Err(Error::parse(self.source, line, format!("expected {cols} values")));
            }
            for t in toks {
                let v: f64 = t
                    .parse()
                    .map_err(|_| Error::parse(self.source, line, format!("invalid value `{t}`")))?;
                if !v.is_finite() {
                    return Err(Error::parse(self.source, line, "non-finite value"));
                }
                data.push(v);
            }
        }
        Ok(Array2::from_shape_vec((rows, cols), data).expect("row lengths checked"))
    }

    pub fn finish(mut self) -> Result<()> {
        let (line, toks) = self.next_tokens()?;
        if toks != ["end"] {
            return Err(Error::parse(self.source, line, "expected `end`"));
        }
        match self.lines.find(|(_, l)| !l.trim().is_empty()) {
            Some((i, _)) => Err(Error::parse(self.source, i + 1, "trailing content after `end`")),
            None => Ok(()),
        }
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().fold(String::new(), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}
