use std::any::Any;

use rand::seq::index::sample;
use rayon::prelude::*;

use super::{check_fit_inputs, FittedRegressor, Regressor};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rng::{derive_seed, rng_from_seed, Rng};

const LEAF: u32 = u32::MAX;

/// Honest random forest settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForestParams {
    pub n_trees: usize,
    pub min_leaf: usize,
    /// Features tried per split; `None` means `ceil(d / 3)`.
    pub mtry: Option<usize>,
    /// Share of each subsample used to grow the structure.
    pub honesty_fraction: f64,
    pub subsample_fraction: f64,
    pub seed: u64,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self {
            n_trees: 500,
            min_leaf: 5,
            mtry: None,
            honesty_fraction: 0.5,
            subsample_fraction: 0.5,
            seed: 0,
        }
    }
}

impl ForestParams {
    pub fn with_trees(mut self, n_trees: usize) -> Self {
        self.n_trees = n_trees;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_min_leaf(mut self, min_leaf: usize) -> Self {
        self.min_leaf = min_leaf;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.n_trees == 0 || self.min_leaf == 0 {
            return Err(Error::InvalidArgument("n_trees and min_leaf must be positive".into()));
        }
        if !(self.honesty_fraction > 0.0 && self.honesty_fraction < 1.0) {
            return Err(Error::InvalidArgument("honesty_fraction must lie in (0,1)".into()));
        }
        if !(self.subsample_fraction > 0.0 && self.subsample_fraction <= 1.0) {
            return Err(Error::InvalidArgument("subsample_fraction must lie in (0,1]".into()));
        }
        if self.mtry == Some(0) {
            return Err(Error::InvalidArgument("mtry must be positive".into()));
        }
        Ok(())
    }

    fn mtry_for(&self, d: usize) -> usize {
        self.mtry.unwrap_or(d.div_ceil(3)).clamp(1, d.max(1))
    }
}

impl Regressor for ForestParams {
    fn fit(&self, features: &Matrix, targets: &[f64]) -> Result<Box<dyn FittedRegressor>> {
        Ok(Box::new(honest_forest(features, targets, self)?))
    }

    fn tag(&self) -> String {
        "rf".into()
    }
}

#[derive(Debug, Clone, Copy)]
struct Node {
    feature: u32,
    threshold: f64,
    left: u32,
    right: u32,
    value: f64,
}

/// One honest regression tree. Internal nodes send `x[feature] <= threshold`
/// to the left child.
#[derive(Debug, Clone)]
pub struct HonestTree {
    nodes: Vec<Node>,
}

impl HonestTree {
    fn leaf_index(&self, x: &[f64]) -> usize {
        let mut i = 0;
        loop {
            let n = &self.nodes[i];
            if n.feature == LEAF {
                return i;
            }
            i = if x[n.feature as usize] <= n.threshold {
                n.left
            } else {
                n.right
            } as usize;
        }
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        self.nodes[self.leaf_index(x)].value
    }

    /// Whether the root-to-leaf path of `x` tests `feature`.
    pub fn path_uses_feature(&self, x: &[f64], feature: usize) -> bool {
        let mut i = 0;
        loop {
            let n = &self.nodes[i];
            if n.feature == LEAF {
                return false;
            }
            if n.feature as usize == feature {
                return true;
            }
            i = if x[n.feature as usize] <= n.threshold {
                n.left
            } else {
                n.right
            } as usize;
        }
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| n.feature == LEAF).count()
    }

    /// Feature tested at the root, if the tree split at all.
    pub fn root_feature(&self) -> Option<usize> {
        let f = self.nodes[0].feature;
        (f != LEAF).then_some(f as usize)
    }
}

#[derive(Debug, Clone)]
pub struct HonestForest {
    trees: Vec<HonestTree>,
    dim: usize,
}

impl HonestForest {
    pub fn trees(&self) -> &[HonestTree] {
        &self.trees
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn predict_row(&self, x: &[f64]) -> f64 {
        let s: f64 = self.trees.iter().map(|t| t.predict(x)).sum();
        s / self.trees.len() as f64
    }
}

impl FittedRegressor for HonestForest {
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

pub fn honest_forest(features: &Matrix, targets: &[f64], params: &ForestParams) -> Result<HonestForest> {
    check_fit_inputs(features, targets)?;
    params.validate()?;
    let n = targets.len();
    if n < 2 {
        return Err(Error::InvalidArgument(format!(
            "honest forest needs at least 2 rows, got {n}"
        )));
    }
    let trees = (0..params.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = rng_from_seed(derive_seed(params.seed, &[t as u64]));
            grow_tree(features, targets, params, &mut rng)
        })
        .collect();
    Ok(HonestForest {
        trees,
        dim: features.cols(),
    })
}

struct Grower<'a> {
    x: &'a Matrix,
    y: &'a [f64],
    min_leaf: usize,
    mtry: usize,
    nodes: Vec<Node>,
    pairs: Vec<(f64, f64)>,
}

struct Split {
    feature: usize,
    threshold: f64,
}

impl Grower<'_> {
    fn grow(&mut self, idx: &mut [usize], rng: &mut Rng) -> u32 {
        let id = self.nodes.len() as u32;
        self.nodes.push(Node {
            feature: LEAF,
            threshold: 0.0,
            left: LEAF,
            right: LEAF,
            value: 0.0,
        });
        if idx.len() < 2 * self.min_leaf {
            return id;
        }
        let Some(split) = self.best_split(idx, rng) else {
            return id;
        };
        let mut k = 0;
        for i in 0..idx.len() {
            if self.x.get(idx[i], split.feature) <= split.threshold {
                idx.swap(i, k);
                k += 1;
            }
        }
        let (l, r) = idx.split_at_mut(k);
        let left = self.grow(l, rng);
        let right = self.grow(r, rng);
        self.nodes[id as usize] = Node {
            feature: split.feature as u32,
            threshold: split.threshold,
            left,
            right,
            value: 0.0,
        };
        id
    }

    /// Largest variance reduction over `mtry` random features and midpoint
    /// thresholds; ties keep the lower feature, then the lower threshold.
    fn best_split(&mut self, idx: &[usize], rng: &mut Rng) -> Option<Split> {
        let d = self.x.cols();
        let mut feats = sample(rng, d, self.mtry).into_vec();
        feats.sort_unstable();
        let n = idx.len();
        let total: f64 = idx.iter().map(|&i| self.y[i]).sum();
        let parent = total * total / n as f64;
        let tol = 1e-12 * (parent.abs() + 1.0);
        let mut best: Option<(f64, Split)> = None;
        for &f in &feats {
            self.pairs.clear();
            self.pairs.extend(idx.iter().map(|&i| (self.x.get(i, f), self.y[i])));
            self.pairs.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));
            let mut left_sum = 0.0;
            for j in 0..n - 1 {
                left_sum += self.pairs[j].1;
                let nl = j + 1;
                if nl < self.min_leaf {
                    continue;
                }
                if n - nl < self.min_leaf {
                    break;
                }
                let (a, b) = (self.pairs[j].0, self.pairs[j + 1].0);
                if a == b {
                    continue;
                }
                let right_sum = total - left_sum;
                let score = left_sum * left_sum / nl as f64 + right_sum * right_sum / (n - nl) as f64;
                if score - parent <= tol {
                    continue;
                }
                if best.as_ref().is_none_or(|(s, _)| score > *s) {
                    let mut threshold = 0.5 * (a + b);
                    if threshold >= b {
                        threshold = a;
                    }
                    best = Some((score, Split { feature: f, threshold }));
                }
            }
        }
        best.map(|(_, s)| s)
    }

    /// Leaf values from the estimation rows; nodes reached by none take the
    /// parent's value.
    fn estimate(&mut self, est: &[usize]) {
        let m = self.nodes.len();
        let mut sum = vec![0.0; m];
        let mut count = vec![0usize; m];
        for &i in est {
            let x = self.x.row(i);
            let mut node = 0usize;
            loop {
                sum[node] += self.y[i];
                count[node] += 1;
                let n = &self.nodes[node];
                if n.feature == LEAF {
                    break;
                }
                node = if x[n.feature as usize] <= n.threshold {
                    n.left
                } else {
                    n.right
                } as usize;
            }
        }
        // children always have larger ids than their parent
        self.nodes[0].value = sum[0] / count[0] as f64;
        for p in 0..m {
            let Node {
                feature,
                left,
                right,
                value,
                ..
            } = self.nodes[p];
            if feature == LEAF {
                continue;
            }
            for c in [left as usize, right as usize] {
                self.nodes[c].value = if count[c] > 0 {
                    sum[c] / count[c] as f64
                } else {
                    value
                };
            }
        }
    }
}

fn grow_tree(features: &Matrix, targets: &[f64], params: &ForestParams, rng: &mut Rng) -> HonestTree {
    let n = targets.len();
    let sub = ((params.subsample_fraction * n as f64).round() as usize).clamp(2, n);
    let mut rows = sample(rng, n, sub).into_vec();
    let n_struct = ((params.honesty_fraction * sub as f64).round() as usize).clamp(1, sub - 1);
    let (structure, estimation) = rows.split_at_mut(n_struct);
    let mut grower = Grower {
        x: features,
        y: targets,
        min_leaf: params.min_leaf,
        mtry: params.mtry_for(features.cols()),
        nodes: Vec::new(),
        pairs: Vec::with_capacity(structure.len()),
    };
    grower.grow(structure, rng);
    grower.estimate(estimation);
    HonestTree {
        nodes: grower.nodes,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;
    use rand::Rng as _;

    fn line_data(n: usize, seed: u64) -> (Matrix, Vec<f64>) {
        let mut rng = rng_from_seed(seed);
        let mut x = Matrix::zeros(n, 2);
        for i in 0..n {
            x.set(i, 0, rng.gen());
            x.set(i, 1, rng.gen());
        }
        let y = (0..n).map(|i| x.get(i, 0)).collect();
        (x, y)
    }

    #[test]
    fn min_leaf_n_gives_constant_tree() {
        let (x, y) = line_data(40, 1);
        let p = ForestParams::default().with_trees(1).with_min_leaf(40);
        let f = honest_forest(&x, &y, &p).unwrap();
        assert_eq!(f.trees()[0].n_leaves(), 1);
        let a = f.predict_row(&[0.0, 0.0]);
        assert_eq!(a, f.predict_row(&[1.0, 1.0]));
    }

    #[test]
    fn constant_tree_value_is_estimation_mean() {
        // replay the tree's sampling to recover its estimation half
        let (x, y) = line_data(30, 2);
        let p = ForestParams {
            n_trees: 1,
            min_leaf: 30,
            seed: 5,
            ..ForestParams::default()
        };
        let f = honest_forest(&x, &y, &p).unwrap();
        let mut rng = rng_from_seed(derive_seed(5, &[0]));
        let rows = sample(&mut rng, 30, 15).into_vec();
        let est = &rows[8..];
        let mean = est.iter().map(|&i| y[i]).sum::<f64>() / est.len() as f64;
        assert_eq!(f.predict_row(&[0.5, 0.5]), mean);
    }

    #[test]
    fn predictions_within_target_range() {
        let (x, y) = line_data(300, 3);
        let f = honest_forest(&x, &y, &ForestParams::default().with_trees(50)).unwrap();
        let (lo, hi) = y.iter().fold((f64::MAX, f64::MIN), |(l, h), &v| (l.min(v), h.max(v)));
        for i in 0..=20 {
            for j in 0..=20 {
                let p = f.predict_row(&[i as f64 / 10.0 - 0.5, j as f64 / 10.0 - 0.5]);
                assert!(p >= lo && p <= hi);
            }
        }
    }

    #[test]
    fn deterministic_given_seed() {
        let (x, y) = line_data(200, 4);
        let p = ForestParams::default().with_trees(20).with_seed(9);
        let a = honest_forest(&x, &y, &p).unwrap();
        let b = honest_forest(&x, &y, &p).unwrap();
        let (probe, _) = line_data(100, 5);
        assert_eq!(a.predict(&probe), b.predict(&probe));
    }

    #[test]
    fn learns_a_line() {
        let (x, y) = line_data(2000, 6);
        let f = honest_forest(&x, &y, &ForestParams::default().with_trees(100)).unwrap();
        let (tx, ty) = line_data(2000, 7);
        let pred = f.predict(&tx);
        let mean = y.iter().sum::<f64>() / y.len() as f64;
        let mse: f64 = pred.iter().zip(&ty).map(|(p, t)| (p - t).powi(2)).sum::<f64>() / 2000.0;
        let base: f64 = ty.iter().map(|t| (mean - t).powi(2)).sum::<f64>() / 2000.0;
        assert!(mse * 5.0 < base, "mse {mse}, constant {base}");
    }

    #[test]
    fn split_ties_take_lowest_feature() {
        // two identical columns; every tree must split on column 0 only
        let n = 64;
        let rows: Vec<[f64; 2]> = (0..n).map(|i| [i as f64, i as f64]).collect();
        let x = Matrix::from_rows(&rows).unwrap();
        let y: Vec<f64> = (0..n).map(|i| if i < n / 2 { 0.0 } else { 1.0 }).collect();
        let p = ForestParams {
            n_trees: 10,
            min_leaf: 2,
            mtry: Some(2),
            ..ForestParams::default()
        };
        let f = honest_forest(&x, &y, &p).unwrap();
        for t in f.trees() {
            assert_eq!(t.root_feature(), Some(0));
            for i in 0..n {
                assert!(!t.path_uses_feature(&[i as f64, i as f64], 1));
            }
        }
    }

    #[test]
    fn too_few_rows() {
        let x = Matrix::column_vector(&[1.0]);
        assert!(honest_forest(&x, &[1.0], &ForestParams::default()).is_err());
    }
}
