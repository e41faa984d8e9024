use std::any::Any;
use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rayon::prelude::*;

use super::{check_fit_inputs, FittedRegressor, Regressor};
use crate::error::{Error, Result};
use crate::matrix::Matrix;

const LEAF_SIZE: usize = 16;

/// Neighbour candidate ordered by `(squared distance, training index)`.
#[derive(Debug, Clone, Copy)]
struct Cand {
    dist2: f64,
    index: usize,
}

impl PartialEq for Cand {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Cand {}

impl PartialOrd for Cand {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Cand {
    fn cmp(&self, other: &Self) -> Ordering {
        self.dist2
            .total_cmp(&other.dist2)
            .then(self.index.cmp(&other.index))
    }
}

#[derive(Debug, Clone)]
enum Node {
    Leaf { start: usize, end: usize },
    Split { dim: usize, value: f64, left: usize, right: usize },
}

/// k-d tree over a private, reordered copy of the training points.
#[derive(Debug, Clone)]
struct KdTree {
    points: Matrix,
    original: Vec<usize>,
    nodes: Vec<Node>,
}

impl KdTree {
    fn build(features: &Matrix) -> Self {
        let n = features.rows();
        let mut order: Vec<usize> = (0..n).collect();
        let mut nodes = Vec::new();
        if n > 0 {
            Self::build_node(features, &mut order, 0, n, &mut nodes);
        }
        let points = features.select_rows(&order);
        Self {
            points,
            original: order,
            nodes,
        }
    }

    fn build_node(
        features: &Matrix,
        order: &mut [usize],
        start: usize,
        end: usize,
        nodes: &mut Vec<Node>,
    ) -> usize {
        let id = nodes.len();
        nodes.push(Node::Leaf { start, end });
        if end - start <= LEAF_SIZE || features.cols() == 0 {
            return id;
        }
        let slice = &mut order[start..end];
        let d = features.cols();
        let (mut best_dim, mut best_spread) = (0, -1.0);
        for j in 0..d {
            let (lo, hi) = slice.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &i| {
                let v = features.get(i, j);
                (lo.min(v), hi.max(v))
            });
            if hi - lo > best_spread {
                best_spread = hi - lo;
                best_dim = j;
            }
        }
        if best_spread <= 0.0 {
            return id;
        }
        let mid = slice.len() / 2;
        slice.select_nth_unstable_by(mid, |&a, &b| {
            features.get(a, best_dim).total_cmp(&features.get(b, best_dim))
        });
        let value = features.get(slice[mid], best_dim);
        let left = Self::build_node(features, order, start, start + mid, nodes);
        let right = Self::build_node(features, order, start + mid, end, nodes);
        nodes[id] = Node::Split {
            dim: best_dim,
            value,
            left,
            right,
        };
        id
    }

    fn search(&self, node: usize, query: &[f64], k: usize, heap: &mut BinaryHeap<Cand>) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for p in start..end {
                    let cand = Cand {
                        dist2: squared_distance(self.points.row(p), query),
                        index: self.original[p],
                    };
                    if heap.len() < k {
                        heap.push(cand);
                    } else if let Some(top) = heap.peek() {
                        if cand < *top {
                            heap.pop();
                            heap.push(cand);
                        }
                    }
                }
            }
            Node::Split {
                dim,
                value,
                left,
                right,
            } => {
                let diff = query[dim] - value;
                let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                self.search(near, query, k, heap);
                // `<=` keeps equidistant points with a lower index reachable
                let visit_far = heap.len() < k || heap.peek().is_some_and(|t| diff * diff <= t.dist2);
                if visit_far {
                    self.search(far, query, k, heap);
                }
            }
        }
    }
}

#[inline]
fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for (x, y) in a.iter().zip(b) {
        let d = x - y;
        s += d * d;
    }
    s
}

/// Fitted k-nearest-neighbour regressor (Euclidean distance, ties broken by
/// lower training index).
#[derive(Debug, Clone)]
pub struct KnnModel {
    k: usize,
    tree: KdTree,
    /// Targets indexed by original training index.
    targets: Vec<f64>,
}

impl KnnModel {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n_train(&self) -> usize {
        self.targets.len()
    }

    /// The `k` nearest training points as `(squared distance, training index)`,
    /// nearest first.
    pub fn neighbours(&self, x: &[f64]) -> Vec<(f64, usize)> {
        let mut heap = BinaryHeap::with_capacity(self.k + 1);
        if !self.tree.nodes.is_empty() {
            self.tree.search(0, x, self.k, &mut heap);
        }
        let mut found = heap.into_vec();
        found.sort_unstable();
        found.into_iter().map(|c| (c.dist2, c.index)).collect()
    }

    pub fn predict_row(&self, x: &[f64]) -> f64 {
        let sum: f64 = self
            .neighbours(x)
            .iter()
            .map(|&(_, i)| self.targets[i])
            .sum();
        sum / self.k as f64
    }
}

impl FittedRegressor for KnnModel {
    fn predict_one(&self, x: &[f64]) -> f64 {
        self.predict_row(x)
    }

    fn predict(&self, features: &Matrix) -> Vec<f64> {
        (0..features.rows())
            .into_par_iter()
            .map(|i| self.predict_row(features.row(i)))
            .collect()
    }

    fn as_any(&self) -> &dyn Any {
        self
    }
}

pub fn knn(features: &Matrix, targets: &[f64], k: usize) -> Result<KnnModel> {
    check_fit_inputs(features, targets)?;
    let n = targets.len();
    if k == 0 || k > n {
        return Err(Error::InvalidK { k, n });
    }
    Ok(KnnModel {
        k,
        tree: KdTree::build(features),
        targets: targets.to_vec(),
    })
}

/// Neighbour count that balances variance `sigma^2 / k` against the squared
/// bias `L^2 (k / n)^(2/d)` of a Lipschitz regression:
/// `ceil((sigma^2 / L^2)^(d / (2 + d)) * n^(2 / (2 + d)))`, clamped to `[1, n]`.
pub fn rate_optimal_k(noise_var: f64, lipschitz: f64, d: usize, n: usize) -> Result<usize> {
    if lipschitz.partial_cmp(&0.0) != Some(Ordering::Greater) {
        return Err(Error::InvalidArgument("Lipschitz constant must be positive".into()));
    }
    if noise_var.is_nan() || noise_var < 0.0 {
        return Err(Error::InvalidArgument("noise variance must be >= 0".into()));
    }
    if n == 0 || d == 0 {
        return Err(Error::InvalidArgument("n and d must be positive".into()));
    }
    let d = d as f64;
    let ratio = noise_var / (lipschitz * lipschitz);
    let raw = ratio.powf(d / (2.0 + d)) * (n as f64).powf(2.0 / (2.0 + d));
    // shave rounding noise so exact powers (16^(1/2) = 4) do not ceil upwards
    let k = (raw * (1.0 - 4.0 * f64::EPSILON)).ceil();
    Ok((k as usize).clamp(1, n))
}

/// How a [`KnnRegressor`] picks `k` for a training set of size `n`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KChoice {
    Fixed(usize),
    /// [`rate_optimal_k`] with the given noise variance and Lipschitz constant.
    Rate { noise_var: f64, lipschitz: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KnnRegressor {
    pub k: KChoice,
}

impl Default for KnnRegressor {
    fn default() -> Self {
        Self {
            k: KChoice::Rate {
                noise_var: 1.0,
                lipschitz: 1.0,
            },
        }
    }
}

impl Regressor for KnnRegressor {
    fn fit(&self, features: &Matrix, targets: &[f64]) -> Result<Box<dyn FittedRegressor>> {
        let k = match self.k {
            KChoice::Fixed(k) => k,
            KChoice::Rate {
                noise_var,
                lipschitz,
            } => rate_optimal_k(noise_var, lipschitz, features.cols().max(1), targets.len().max(1))?,
        };
        Ok(Box::new(knn(features, targets, k)?))
    }

    fn tag(&self) -> String {
        match self.k {
            KChoice::Fixed(k) => format!("knn{k}"),
            KChoice::Rate { .. } => "knn".into(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Full sort by (distance, index), then the first k targets in that order.
    fn brute_force(features: &Matrix, targets: &[f64], k: usize, q: &[f64]) -> f64 {
        let mut all: Vec<(f64, usize)> = (0..features.rows())
            .map(|i| (squared_distance(features.row(i), q), i))
            .collect();
        all.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        all[..k].iter().map(|&(_, i)| targets[i]).sum::<f64>() / k as f64
    }

    #[test]
    fn k_equals_n_is_global_mean() {
        let x = Matrix::column_vector(&[0.0, 1.0, 5.0, 9.0]);
        let y = [1.0, 2.0, 3.0, 10.0];
        let m = knn(&x, &y, 4).unwrap();
        for q in [-3.0, 0.5, 100.0] {
            assert_eq!(m.predict_row(&[q]), 4.0);
        }
    }

    #[test]
    fn nearest_point() {
        let m = knn(&Matrix::column_vector(&[0.0, 10.0]), &[5.0, 9.0], 1).unwrap();
        assert_eq!(m.predict_row(&[1.0]), 5.0);
    }

    #[test]
    fn equidistant_tie_prefers_lower_index() {
        let m = knn(&Matrix::column_vector(&[0.0, 1.0]), &[2.0, 8.0], 1).unwrap();
        assert_eq!(m.predict_row(&[0.5]), 2.0);
        let m = knn(&Matrix::column_vector(&[1.0, 0.0]), &[8.0, 2.0], 1).unwrap();
        assert_eq!(m.predict_row(&[0.5]), 8.0);
    }

    #[test]
    fn invalid_k() {
        let x = Matrix::column_vector(&[0.0, 1.0]);
        assert!(matches!(knn(&x, &[1.0, 2.0], 0), Err(Error::InvalidK { .. })));
        assert!(matches!(knn(&x, &[1.0, 2.0], 3), Err(Error::InvalidK { .. })));
    }

    #[test]
    fn rate_optimal_k_values() {
        assert_eq!(rate_optimal_k(1.0, 1.0, 2, 16).unwrap(), 4);
        assert_eq!(rate_optimal_k(4.0, 1.0, 2, 16).unwrap(), 8);
        assert_eq!(rate_optimal_k(2.0, 2.0f64.sqrt(), 3, 1000).unwrap(), 16); // 1000^(0.4) = 15.85
        assert_eq!(rate_optimal_k(1e6, 1.0, 2, 16).unwrap(), 16);
        assert_eq!(rate_optimal_k(0.0, 1.0, 2, 16).unwrap(), 1);
        assert!(rate_optimal_k(1.0, 0.0, 2, 16).is_err());
    }

    #[test]
    fn large_tree_matches_brute_force_with_duplicates() {
        // integer grid with many exact ties forces deep trees and tie handling
        let mut rows = Vec::new();
        let mut y = Vec::new();
        for i in 0..400usize {
            rows.push(vec![(i % 7) as f64, (i % 5) as f64, ((i * 13) % 11) as f64]);
            y.push(i as f64 * 0.37 - 20.0);
        }
        let x = Matrix::from_rows(&rows).unwrap();
        for k in [1, 3, 17, 64] {
            let m = knn(&x, &y, k).unwrap();
            for q in [[0.0, 0.0, 0.0], [3.5, 2.0, 5.5], [6.0, 4.0, 10.0], [2.2, 1.1, 7.7]] {
                assert_eq!(m.predict_row(&q), brute_force(&x, &y, k, &q));
            }
        }
    }

    proptest! {
        #[test]
        fn matches_brute_force(
            pts in prop::collection::vec((-5i32..5, -5i32..5, -1000.0f64..1000.0), 1..50),
            k_frac in 0.0f64..1.0,
            qx in -6.0f64..6.0,
            qy in -6.0f64..6.0,
        ) {
            let rows: Vec<Vec<f64>> = pts.iter().map(|&(a, b, _)| vec![f64::from(a), f64::from(b)]).collect();
            let y: Vec<f64> = pts.iter().map(|p| p.2).collect();
            let x = Matrix::from_rows(&rows).unwrap();
            let k = 1 + ((y.len() - 1) as f64 * k_frac) as usize;
            let m = knn(&x, &y, k).unwrap();
            prop_assert_eq!(m.predict_row(&[qx, qy]), brute_force(&x, &y, k, &[qx, qy]));
        }

        #[test]
        fn full_k_translation_equivariant(
            y in prop::collection::vec(-100.0f64..100.0, 2..30),
            c in -50.0f64..50.0,
            q in -3.0f64..3.0,
        ) {
            let x = Matrix::column_vector(&(0..y.len()).map(|i| i as f64 * 0.1).collect::<Vec<_>>());
            let n = y.len();
            let shifted: Vec<f64> = y.iter().map(|v| v + c).collect();
            let a = knn(&x, &y, n).unwrap().predict_row(&[q]);
            let b = knn(&x, &shifted, n).unwrap().predict_row(&[q]);
            prop_assert!((b - (a + c)).abs() < 1e-9);
        }
    }
}
