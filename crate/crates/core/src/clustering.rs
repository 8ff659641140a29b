//! Two-class soft k-means, neutral/irrelevant flags, and accuracy scoring.

use ndarray::{Array1, Array2, ArrayView1, Axis};
use rand::Rng as _;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::Labels;
use crate::rng::component_rng;

pub const NUM_CLASSES: usize = 2;
pub const DEFAULT_BETA: f64 = 5.0;
pub const DEFAULT_ITERS: usize = 100;
pub const DEFAULT_TAU: f64 = 0.7;
pub const DEFAULT_N_STD: f64 = 2.0;
const CONVERGENCE: f64 = 1e-6;

/// Row-stochastic N×2 membership matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftAssignment {
    pub r: Array2<f64>,
    pub beta: f64,
}

impl SoftAssignment {
    pub fn num_nodes(&self) -> usize {
        self.r.nrows()
    }

    /// Row argmax; ties go to the lower class index.
    pub fn hard(&self) -> Vec<usize> {
        hard_assignments(&self.r)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Centroids {
    /// One centroid per row.
    pub mu: Array2<f64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize)]
pub struct NodeFlags {
    pub neutral: Vec<bool>,
    pub irrelevant: Vec<bool>,
}

impl NodeFlags {
    pub fn none(n: usize) -> Self {
        NodeFlags { neutral: vec![false; n], irrelevant: vec![false; n] }
    }
}

fn distance(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// `r_ik ∝ exp(-β ‖h_i − μ_k‖)`, computed with the max-shift for stability.
pub fn assign(h: &Array2<f64>, c: &Centroids, beta: f64) -> SoftAssignment {
    let k = c.mu.nrows();
    let mut r = Array2::zeros((h.nrows(), k));
    for (i, row) in h.outer_iter().enumerate() {
        let logits: Vec<f64> = c.mu.outer_iter().map(|m| -beta * distance(row, m)).collect();
        let top = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = logits.iter().map(|l| (l - top).exp()).collect();
        let total: f64 = exps.iter().sum();
        for (kk, e) in exps.iter().enumerate() {
            r[[i, kk]] = e / total;
        }
    }
    SoftAssignment { r, beta }
}

/// `μ_k = Σ_i r_ik h_i / Σ_i r_ik`. An empty cluster keeps its previous centroid.
pub fn update_centroids(h: &Array2<f64>, r: &Array2<f64>, previous: &Centroids) -> Centroids {
    let mut mu = previous.mu.clone();
    for k in 0..r.ncols() {
        let weights = r.column(k);
        let total = weights.sum();
        if total > 0.0 {
            let mut acc = Array1::<f64>::zeros(h.ncols());
            for (w, row) in weights.iter().zip(h.outer_iter()) {
                acc.scaled_add(*w, &row);
            }
            mu.row_mut(k).assign(&(acc / total));
        }
    }
    Centroids { mu }
}

/// k-means++ seeding: first centroid uniform, second drawn proportional to
/// squared distance from the first.
fn seed_centroids(h: &Array2<f64>, seed: u64) -> Centroids {
    let mut rng = component_rng(seed, "kmeans-seed");
    let n = h.nrows();
    let first = rng.random_range(0..n);
    let d2: Vec<f64> = h.outer_iter().map(|row| distance(row, h.row(first)).powi(2)).collect();
    let total: f64 = d2.iter().sum();
    let mut target = rng.random::<f64>() * total;
    let mut second = n - 1;
    for (j, d) in d2.iter().enumerate() {
        if *d > 0.0 && target < *d {
            second = j;
            break;
        }
        target -= d;
    }
    if d2[second] == 0.0 {
        second = d2.iter().position(|d| *d > 0.0).unwrap_or(second);
    }
    let mut mu = Array2::zeros((NUM_CLASSES, h.ncols()));
    mu.row_mut(0).assign(&h.row(first));
    mu.row_mut(1).assign(&h.row(second));
    Centroids { mu }
}

pub fn soft_kmeans(h: &Array2<f64>, beta: f64, iters: usize, seed: u64) -> Result<(SoftAssignment, Centroids)> {
    if h.nrows() < 2 {
        return Err(Error::Validation(format!("soft k-means needs at least 2 rows, got {}", h.nrows())));
    }
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(Error::Config(format!("beta must be positive and finite, got {beta}")));
    }
    if !h.iter().all(|v| v.is_finite()) {
        return Err(Error::Numerical("non-finite embedding entry".into()));
    }
    let first = h.row(0);
    if h.outer_iter().all(|row| row == first) {
        return Err(Error::DegenerateData("all embedding rows are identical".into()));
    }
    soft_kmeans_from(h, seed_centroids(h, seed), beta, iters)
}

/// Soft k-means started from given centroids.
pub fn soft_kmeans_from(h: &Array2<f64>, start: Centroids, beta: f64, iters: usize) -> Result<(SoftAssignment, Centroids)> {
    if start.mu.ncols() != h.ncols() {
        return Err(Error::Validation(format!(
            "centroids have {} columns, data has {}",
            start.mu.ncols(),
            h.ncols()
        )));
    }
    let mut c = start;
    let mut a = assign(h, &c, beta);
    for _ in 0..iters {
        let next = update_centroids(h, &a.r, &c);
        let moved = (&next.mu - &c.mu).iter().fold(0.0f64, |m, v| m.max(v.abs()));
        c = next;
        a = assign(h, &c, beta);
        if moved < CONVERGENCE {
            break;
        }
    }
    Ok((a, c))
}

/// Soft k-means seeded at the labelled class means, with labelled rows held
/// at their one-hot labels throughout.
pub fn soft_kmeans_clamped(h: &Array2<f64>, labels: &Labels, beta: f64, iters: usize) -> Result<(SoftAssignment, Centroids)> {
    let mut mu = Array2::zeros((NUM_CLASSES, h.ncols()));
    for k in 0..NUM_CLASSES {
        let rows: Vec<usize> = labels.iter().filter(|(_, &c)| c == k).map(|(&i, _)| i).collect();
        if rows.is_empty() {
            return Err(Error::Validation(format!("no labelled node for class {k}")));
        }
        if let Some(&bad) = rows.iter().find(|&&i| i >= h.nrows()) {
            return Err(Error::Validation(format!("label references node {bad} outside 0..{}", h.nrows())));
        }
        mu.row_mut(k).assign(&h.select(Axis(0), &rows).mean_axis(Axis(0)).expect("non-empty"));
    }
    if labels.values().any(|&c| c >= NUM_CLASSES) {
        return Err(Error::Validation("label class is not 0 or 1".into()));
    }
    let clamp = |a: &mut SoftAssignment| {
        for (&i, &c) in labels {
            a.r.row_mut(i).fill(0.0);
            a.r[[i, c]] = 1.0;
        }
    };
    let mut c = Centroids { mu };
    let mut a = assign(h, &c, beta);
    clamp(&mut a);
    for _ in 0..iters {
        let next = update_centroids(h, &a.r, &c);
        let moved = (&next.mu - &c.mu).iter().fold(0.0f64, |m, v| m.max(v.abs()));
        c = next;
        a = assign(h, &c, beta);
        clamp(&mut a);
        if moved < CONVERGENCE {
            break;
        }
    }
    Ok((a, c))
}

fn check_tau(tau: f64) -> Result<()> {
    if tau > 0.5 && tau <= 1.0 {
        Ok(())
    } else {
        Err(Error::Config(format!("tau must lie in (0.5, 1], got {tau}")))
    }
}

/// Neutral iff `max_k r_ik < τ`.
pub fn flag_neutral(r: &SoftAssignment, tau: f64) -> Result<Vec<bool>> {
    check_tau(tau)?;
    Ok(r
        .r
        .outer_iter()
        .map(|row| row.iter().copied().fold(f64::NEG_INFINITY, f64::max) < tau)
        .collect())
}

/// Irrelevant iff the row's distance to the column mean exceeds `n_std`
/// pooled standard deviations.
pub fn flag_irrelevant(h_in: &Array2<f64>, n_std: f64) -> Result<Vec<bool>> {
    if h_in.nrows() < 2 {
        return Err(Error::Validation(format!("need at least 2 rows, got {}", h_in.nrows())));
    }
    if !(n_std >= 0.0 && n_std.is_finite()) {
        return Err(Error::Config(format!("n_std must be non-negative, got {n_std}")));
    }
    let mean = h_in.mean_axis(Axis(0)).expect("non-empty");
    let dev: Vec<f64> = h_in.outer_iter().map(|row| distance(row, mean.view())).collect();
    let pooled = (dev.iter().map(|d| d * d).sum::<f64>() / dev.len() as f64).sqrt();
    if pooled == 0.0 {
        return Ok(vec![false; dev.len()]);
    }
    Ok(dev.iter().map(|d| *d > n_std * pooled).collect())
}

pub fn hard_assignments(r: &Array2<f64>) -> Vec<usize> {
    r.outer_iter()
        .map(|row| {
            let mut best = 0;
            for (k, v) in row.iter().enumerate() {
                if *v > row[best] {
                    best = k;
                }
            }
            best
        })
        .collect()
}

/// Fraction of labeled, non-irrelevant nodes whose hard class matches, maximised
/// over the two label permutations.
pub fn clustering_accuracy(r: &SoftAssignment, labels: &Labels, flags: &NodeFlags) -> Result<f64> {
    let hard = r.hard();
    let mut agree = 0usize;
    let mut total = 0usize;
    for (&node, &class) in labels {
        if node >= hard.len() {
            return Err(Error::Validation(format!("label references node {node} outside 0..{}", hard.len())));
        }
        if class >= NUM_CLASSES {
            return Err(Error::Validation(format!("label class {class} is not 0 or 1")));
        }
        if flags.irrelevant.get(node).copied().unwrap_or(false) {
            continue;
        }
        total += 1;
        if hard[node] == class {
            agree += 1;
        }
    }
    if total == 0 {
        return Err(Error::Evaluation("no labeled, non-irrelevant node to score".into()));
    }
    let a = agree as f64 / total as f64;
    Ok(a.max(1.0 - a))
}

/// Whether class ids of `assignment` should be swapped to best match `labels`.
pub fn swap_to_match(hard: &[usize], labels: &Labels) -> bool {
    let agree = labels.iter().filter(|(n, c)| hard.get(**n) == Some(c)).count();
    2 * agree < labels.len()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn equidistant_point_splits_evenly() {
        let c = Centroids { mu: array![[0.0], [2.0]] };
        let a = assign(&array![[1.0]], &c, 5.0);
        assert_eq!(a.r, array![[0.5, 0.5]]);
    }

    #[test]
    fn assignment_matches_closed_form() {
        let c = Centroids { mu: array![[0.0], [2.0]] };
        let a = assign(&array![[0.5]], &c, 1.0);
        let expected = 1.0 / (1.0 + (-1.0f64).exp());
        assert!((a.r[[0, 0]] - expected).abs() < 1e-12);
        assert!((a.r[[0, 0]] - 0.7311).abs() < 1e-4);
    }

    #[test]
    fn kmeans_converges_to_fixed_point() {
        let h = array![[0.0, 0.1], [0.2, -0.1], [-0.1, 0.0], [5.0, 5.1], [5.2, 4.9], [4.9, 5.0]];
        let (a, c) = soft_kmeans(&h, 5.0, 500, 3).unwrap();
        let again = update_centroids(&h, &a.r, &c);
        assert!((&again.mu - &c.mu).iter().all(|v| v.abs() < 1e-6));
        let hard = a.hard();
        assert_eq!(hard[0], hard[1]);
        assert_ne!(hard[0], hard[3]);
        for row in a.r.outer_iter() {
            assert!((row.sum() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn clamped_kmeans_holds_labelled_rows() {
        let h = array![[0.0], [0.2], [0.9], [5.0], [5.2], [1.1]];
        let labels: Labels = [(0, 1), (3, 0)].into_iter().collect();
        let (a, c) = soft_kmeans_clamped(&h, &labels, 5.0, 100).unwrap();
        assert_eq!(a.r.row(0).to_vec(), vec![0.0, 1.0]);
        assert_eq!(a.r.row(3).to_vec(), vec![1.0, 0.0]);
        assert!(c.mu[[0, 0]] > c.mu[[1, 0]]);
        assert_eq!(a.hard()[1], 1);
        assert_eq!(a.hard()[4], 0);

        let one_class: Labels = [(0, 1)].into_iter().collect();
        assert!(soft_kmeans_clamped(&h, &one_class, 5.0, 10).is_err());
        let outside: Labels = [(0, 1), (9, 0)].into_iter().collect();
        assert!(soft_kmeans_clamped(&h, &outside, 5.0, 10).is_err());
    }

    #[test]
    fn identical_rows_are_degenerate() {
        let h = array![[1.0, 2.0], [1.0, 2.0], [1.0, 2.0]];
        assert!(matches!(soft_kmeans(&h, 5.0, 10, 0), Err(Error::DegenerateData(_))));
        assert!(matches!(soft_kmeans(&array![[1.0]], 5.0, 10, 0), Err(Error::Validation(_))));
    }

    #[test]
    fn neutral_threshold_is_strict() {
        let r = SoftAssignment { r: array![[0.5, 0.5], [0.71, 0.29], [0.7, 0.3]], beta: 5.0 };
        assert_eq!(flag_neutral(&r, 0.7).unwrap(), vec![true, false, false]);
        assert!(flag_neutral(&r, 0.5).is_err());
        assert!(flag_neutral(&r, 1.01).is_err());
        assert!(flag_neutral(&r, 1.0).is_ok());
    }

    #[test]
    fn irrelevant_outlier_is_flagged() {
        let mut h = Array2::from_shape_fn((50, 2), |(i, j)| ((i * 7 + j * 3) % 5) as f64 * 0.1);
        assert!(flag_irrelevant(&Array2::ones((4, 3)), 2.0).unwrap().iter().all(|f| !f));
        let before = flag_irrelevant(&h, 2.0).unwrap();
        h[[49, 0]] += 10.0;
        let after = flag_irrelevant(&h, 2.0).unwrap();
        assert!(after[49]);
        assert!(!before[49]);
    }

    #[test]
    fn irrelevant_boundary_is_strict() {
        // Deviations ±a on 1-D data: pooled sd is a, every node sits at exactly 1 sd.
        let h = array![[-1.0], [1.0], [-1.0], [1.0]];
        assert!(flag_irrelevant(&h, 1.0).unwrap().iter().all(|f| !f));
        assert!(flag_irrelevant(&h, 0.999).unwrap().iter().all(|f| *f));
    }

    #[test]
    fn accuracy_is_permutation_invariant() {
        let labels: Labels = [(0, 0), (1, 0), (2, 1), (3, 1)].into_iter().collect();
        let r = SoftAssignment { r: array![[0.1, 0.9], [0.2, 0.8], [0.9, 0.1], [0.6, 0.4]], beta: 5.0 };
        assert_eq!(clustering_accuracy(&r, &labels, &NodeFlags::none(4)).unwrap(), 1.0);
        let mut flags = NodeFlags::none(4);
        flags.irrelevant = vec![true; 4];
        assert!(matches!(clustering_accuracy(&r, &labels, &flags), Err(Error::Evaluation(_))));
    }

    #[test]
    fn ties_go_to_first_class() {
        assert_eq!(hard_assignments(&array![[0.5, 0.5], [0.4, 0.6]]), vec![0, 1]);
    }
}
