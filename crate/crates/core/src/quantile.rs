//! Conditional quantile estimation over a score series.
//!
//! Two engines share the [`QuantileModel`] interface:
//!
//! - **empirical**: order statistics of the stored scores, ignoring context;
//! - **qrf**: a quantile regression forest. Training rows are sliding windows
//!   `(ê_{t−w}, …, ê_{t−1}) → ê_t`; trees are CART regression trees grown on
//!   row subsamples by variance reduction, and every leaf keeps the full
//!   multiset of its targets. A query routes the context through all trees,
//!   pools the leaf multisets and takes an order statistic of the pool.
//!
//! Order statistics use the `m = ⌈q·n⌉` convention with no interpolation.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::par::Execution;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QuantileError {
    #[error("no scores to take a quantile of")]
    EmptyInput,
    #[error("quantile level {0} outside (0, 1)")]
    LevelOutOfRange(f64),
    #[error("need more than {needed} scores to fit, got {got}")]
    TooFewScores { needed: usize, got: usize },
    #[error("context has length {got}, model window is {expected}")]
    WindowMismatch { expected: usize, got: usize },
    #[error("quantile model has not been fitted")]
    NotFitted,
    #[error("invalid quantile configuration: {0}")]
    InvalidConfig(String),
}

pub type Result<T> = std::result::Result<T, QuantileError>;

/// Zero-based index of the `⌈q·n⌉`-th order statistic, clamped to `[0, n)`.
///
/// The small offset keeps products such as `0.9 · 10` from rounding up to
/// the next integer.
pub fn order_statistic_index(n: usize, q: f64) -> usize {
    debug_assert!(n > 0);
    let m = (q * n as f64 - 1e-9).ceil();
    (m.max(1.0) as usize).min(n) - 1
}

/// Order statistic of an already sorted slice; `q` may be 0 or 1.
pub fn sorted_quantile(sorted: &[f64], q: f64) -> f64 {
    sorted[order_statistic_index(sorted.len(), q)]
}

/// The `⌈q·n⌉`-th smallest score.
pub fn empirical_quantile(scores: &[f64], q: f64) -> Result<f64> {
    if scores.is_empty() {
        return Err(QuantileError::EmptyInput);
    }
    if !(q > 0.0 && q < 1.0) {
        return Err(QuantileError::LevelOutOfRange(q));
    }
    let mut v = scores.to_vec();
    let idx = order_statistic_index(v.len(), q);
    let (_, x, _) = v.select_nth_unstable_by(idx, f64::total_cmp);
    Ok(*x)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QrfConfig {
    pub n_trees: usize,
    pub max_depth: usize,
    pub min_leaf: usize,
    pub subsample_fraction: f64,
    pub rng_seed: u64,
}

impl Default for QrfConfig {
    fn default() -> Self {
        Self {
            n_trees: 20,
            max_depth: 6,
            min_leaf: 5,
            subsample_fraction: 0.8,
            rng_seed: 0,
        }
    }
}

impl QrfConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_trees == 0 {
            return Err(QuantileError::InvalidConfig("n_trees must be at least 1".into()));
        }
        if self.min_leaf == 0 {
            return Err(QuantileError::InvalidConfig("min_leaf must be at least 1".into()));
        }
        if !(self.subsample_fraction > 0.0 && self.subsample_fraction <= 1.0) {
            return Err(QuantileError::InvalidConfig(format!(
                "subsample_fraction must lie in (0, 1], got {}",
                self.subsample_fraction
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "engine", rename_all = "snake_case")]
pub enum QuantileEngine {
    Empirical,
    Qrf(QrfConfig),
}

impl Default for QuantileEngine {
    fn default() -> Self {
        QuantileEngine::Qrf(QrfConfig::default())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QuantileConfig {
    #[serde(flatten)]
    pub engine: QuantileEngine,
    /// Context length `w_q` of the forest.
    pub window: usize,
    /// Refit every this many steps.
    pub refit_stride: usize,
}

impl Default for QuantileConfig {
    fn default() -> Self {
        Self {
            engine: QuantileEngine::default(),
            window: 20,
            refit_stride: 1,
        }
    }
}

impl QuantileConfig {
    pub fn empirical() -> Self {
        Self {
            engine: QuantileEngine::Empirical,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.refit_stride == 0 {
            return Err(QuantileError::InvalidConfig("refit_stride must be at least 1".into()));
        }
        if let QuantileEngine::Qrf(q) = &self.engine {
            q.validate()?;
            if self.window == 0 {
                return Err(QuantileError::InvalidConfig("window must be at least 1".into()));
            }
        }
        Ok(())
    }

    /// Number of trailing scores a query needs as context.
    pub fn context_len(&self) -> usize {
        match self.engine {
            QuantileEngine::Empirical => 0,
            QuantileEngine::Qrf(_) => self.window,
        }
    }

    /// Fits the configured engine. `seed_offset` perturbs the forest seed so
    /// successive refits draw fresh subsamples.
    pub fn fit(&self, scores: &[f64], seed_offset: u64) -> Result<QuantileModel> {
        match self.engine {
            QuantileEngine::Empirical => QuantileModel::empirical(scores),
            QuantileEngine::Qrf(q) => {
                let cfg = QrfConfig {
                    rng_seed: q.rng_seed.wrapping_add(seed_offset),
                    ..q
                };
                Ok(QuantileModel::Qrf(fit_qrf(scores, self.window, &cfg)?))
            }
        }
    }
}

/// A sorted sample whose order statistics answer quantile queries.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalSample {
    sorted: Vec<f64>,
}

impl ConditionalSample {
    pub fn from_unsorted(mut values: Vec<f64>) -> Self {
        values.sort_unstable_by(f64::total_cmp);
        Self { sorted: values }
    }

    /// Order statistic at level `q ∈ [0, 1]`; 0 gives the minimum and 1 the
    /// maximum.
    pub fn quantile(&self, q: f64) -> f64 {
        sorted_quantile(&self.sorted, q.clamp(0.0, 1.0))
    }

    pub fn values(&self) -> &[f64] {
        &self.sorted
    }
}

/// A fitted conditional quantile estimator.
#[derive(Debug, Clone, PartialEq)]
pub enum QuantileModel {
    Empirical(ConditionalSample),
    Qrf(QuantileForest),
}

impl QuantileModel {
    pub fn empirical(scores: &[f64]) -> Result<Self> {
        if scores.is_empty() {
            return Err(QuantileError::EmptyInput);
        }
        Ok(QuantileModel::Empirical(ConditionalSample::from_unsorted(scores.to_vec())))
    }

    /// Context length expected by [`query`](Self::query); 0 for the
    /// empirical engine, which ignores context.
    pub fn window(&self) -> usize {
        match self {
            QuantileModel::Empirical(_) => 0,
            QuantileModel::Qrf(f) => f.window,
        }
    }

    /// The sample whose order statistics are the conditional quantiles.
    pub fn conditional(&self, context: &[f64]) -> Result<ConditionalSample> {
        match self {
            QuantileModel::Empirical(sample) => Ok(sample.clone()),
            QuantileModel::Qrf(forest) => forest.conditional(context),
        }
    }

    pub fn query(&self, context: &[f64], q: f64) -> Result<f64> {
        if !(q > 0.0 && q < 1.0) {
            return Err(QuantileError::LevelOutOfRange(q));
        }
        Ok(self.conditional(context)?.quantile(q))
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        values: Vec<f64>,
    },
}

#[derive(Debug, Clone, PartialEq)]
struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    fn leaf(&self, context: &[f64]) -> &[f64] {
        let mut idx = 0;
        loop {
            match &self.nodes[idx] {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    idx = if context[*feature] <= *threshold { *left } else { *right };
                }
                Node::Leaf { values } => return values,
            }
        }
    }

    fn depth(&self) -> usize {
        fn go(nodes: &[Node], i: usize) -> usize {
            match &nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + go(nodes, *left).max(go(nodes, *right)),
            }
        }
        go(&self.nodes, 0)
    }
}

/// Quantile regression forest over lagged score windows.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantileForest {
    window: usize,
    trees: Vec<Tree>,
}

impl QuantileForest {
    pub fn window(&self) -> usize {
        self.window
    }

    pub fn n_trees(&self) -> usize {
        self.trees.len()
    }

    pub fn max_depth(&self) -> usize {
        self.trees.iter().map(Tree::depth).max().unwrap_or(0)
    }

    /// Pooled leaf multisets for `context` (oldest score first).
    pub fn conditional(&self, context: &[f64]) -> Result<ConditionalSample> {
        if context.len() != self.window {
            return Err(QuantileError::WindowMismatch {
                expected: self.window,
                got: context.len(),
            });
        }
        let total: usize = self.trees.iter().map(|t| t.leaf(context).len()).sum();
        let mut pooled = Vec::with_capacity(total);
        for t in &self.trees {
            pooled.extend_from_slice(t.leaf(context));
        }
        Ok(ConditionalSample::from_unsorted(pooled))
    }

    pub fn query(&self, context: &[f64], q: f64) -> Result<f64> {
        Ok(self.conditional(context)?.quantile(q))
    }
}

pub fn fit_qrf(scores: &[f64], window: usize, cfg: &QrfConfig) -> Result<QuantileForest> {
    fit_qrf_with(scores, window, cfg, Execution::default())
}

/// Fits a forest, building trees under the given execution strategy. Tree
/// `i` draws from ChaCha stream `i` of `cfg.rng_seed`, so the forest does not
/// depend on the strategy.
pub fn fit_qrf_with(
    scores: &[f64],
    window: usize,
    cfg: &QrfConfig,
    exec: Execution,
) -> Result<QuantileForest> {
    cfg.validate()?;
    if window == 0 {
        return Err(QuantileError::InvalidConfig("window must be at least 1".into()));
    }
    let needed = window + cfg.min_leaf;
    if scores.len() <= needed {
        return Err(QuantileError::TooFewScores {
            needed,
            got: scores.len(),
        });
    }
    let mut order: Vec<u32> = (0..scores.len() as u32).collect();
    order.sort_by(|&a, &b| scores[a as usize].total_cmp(&scores[b as usize]).then(a.cmp(&b)));

    let data = TrainingData {
        scores,
        window,
        rows: scores.len() - window,
        order: &order,
    };
    let trees = exec.map_range(cfg.n_trees, |i| data.grow(cfg, i as u64));
    Ok(QuantileForest { window, trees })
}

struct TrainingData<'a> {
    scores: &'a [f64],
    window: usize,
    rows: usize,
    /// Score indices sorted by value.
    order: &'a [u32],
}

struct Builder<'a> {
    data: &'a TrainingData<'a>,
    cfg: &'a QrfConfig,
    /// `window` row lists of length `m`, each sorted by its feature within
    /// every node segment.
    lists: Vec<u32>,
    m: usize,
    goes_left: Vec<bool>,
    scratch: Vec<u32>,
    /// `inverse[k] = 1 / k`.
    inverse: Vec<f64>,
    nodes: Vec<Node>,
}

struct SplitChoice {
    feature: usize,
    threshold: f64,
    n_left: usize,
}

impl TrainingData<'_> {
    #[inline]
    fn x(&self, row: u32, feature: usize) -> f64 {
        self.scores[row as usize + feature]
    }

    #[inline]
    fn y(&self, row: u32) -> f64 {
        self.scores[row as usize + self.window]
    }

    fn grow(&self, cfg: &QrfConfig, tree_index: u64) -> Tree {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
        rng.set_stream(tree_index);
        let m = ((cfg.subsample_fraction * self.rows as f64).round() as usize).clamp(1, self.rows);
        let mut in_sample = vec![false; self.rows];
        if m == self.rows {
            in_sample.iter_mut().for_each(|b| *b = true);
        } else {
            for r in rand::seq::index::sample(&mut rng, self.rows, m) {
                in_sample[r] = true;
            }
        }

        // Feature j of row r is scores[r + j], so its sorted row list is the
        // global score order shifted by j.
        let mut lists = vec![0u32; self.window * m + 1];
        let last = self.rows - 1;
        for j in 0..self.window {
            let mut w = j * m;
            for &s in self.order {
                let r = (s as usize).wrapping_sub(j);
                lists[w] = r as u32;
                w += usize::from(r <= last && in_sample[r.min(last)]);
            }
            debug_assert_eq!(w, (j + 1) * m);
        }
        lists.truncate(self.window * m);

        let mut b = Builder {
            data: self,
            cfg,
            lists,
            m,
            goes_left: vec![false; self.rows],
            scratch: vec![0; m],
            inverse: std::iter::once(0.0).chain((1..=m).map(|k| 1.0 / k as f64)).collect(),
            nodes: Vec::new(),
        };
        b.build(0, m, 0);
        Tree { nodes: b.nodes }
    }
}

impl Builder<'_> {
    fn segment(&self, feature: usize, lo: usize, hi: usize) -> &[u32] {
        let base = feature * self.m;
        &self.lists[base + lo..base + hi]
    }

    fn build(&mut self, lo: usize, hi: usize, depth: usize) -> usize {
        let id = self.nodes.len();
        self.nodes.push(Node::Leaf { values: Vec::new() });
        let n = hi - lo;
        let split = if depth < self.cfg.max_depth && n >= 2 * self.cfg.min_leaf {
            self.best_split(lo, hi)
        } else {
            None
        };
        match split {
            None => {
                let mut values: Vec<f64> = self.segment(0, lo, hi).iter().map(|&r| self.data.y(r)).collect();
                values.sort_unstable_by(f64::total_cmp);
                self.nodes[id] = Node::Leaf { values };
            }
            Some(choice) => {
                // Leaves only read the first feature's list.
                let splittable = |n: usize| depth + 1 < self.cfg.max_depth && n >= 2 * self.cfg.min_leaf;
                let features = if splittable(choice.n_left) || splittable(n - choice.n_left) {
                    self.data.window
                } else {
                    1
                };
                self.partition(lo, hi, &choice, features);
                let mid = lo + choice.n_left;
                let left = self.build(lo, mid, depth + 1);
                let right = self.build(mid, hi, depth + 1);
                self.nodes[id] = Node::Split {
                    feature: choice.feature,
                    threshold: choice.threshold,
                    left,
                    right,
                };
            }
        }
        id
    }

    fn best_split(&self, lo: usize, hi: usize) -> Option<SplitChoice> {
        let data = self.data;
        let n = hi - lo;
        let min_leaf = self.cfg.min_leaf;
        let (mut sum, mut sum_sq) = (0.0, 0.0);
        for &r in self.segment(0, lo, hi) {
            let y = data.y(r);
            sum += y;
            sum_sq += y * y;
        }
        let base = sum * sum / n as f64;
        let total_ss = sum_sq - base;
        if !(total_ss > 1e-12 * sum_sq.max(f64::MIN_POSITIVE)) {
            return None;
        }

        // Candidate split after position i leaves i + 1 rows on the left.
        let (first, last) = (min_leaf - 1, n - min_leaf);
        let inv = &self.inverse;
        let mut best: Option<(f64, SplitChoice)> = None;
        let mut best_gain = f64::NEG_INFINITY;
        for feature in 0..data.window {
            let seg = self.segment(feature, lo, hi);
            let mut left_sum: f64 = seg[..first].iter().map(|&r| data.y(r)).sum();
            let mut xa = data.x(seg[first], feature);
            for i in first..last {
                left_sum += data.y(seg[i]);
                let xb = data.x(seg[i + 1], feature);
                if xa < xb {
                    let right_sum = sum - left_sum;
                    let gain = left_sum * left_sum * inv[i + 1] + right_sum * right_sum * inv[n - i - 1];
                    if gain > best_gain {
                        best_gain = gain;
                        best = Some((
                            gain,
                            SplitChoice {
                                feature,
                                threshold: 0.5 * (xa + xb),
                                n_left: i + 1,
                            },
                        ));
                    }
                }
                xa = xb;
            }
        }
        best.filter(|(g, _)| g - base > 1e-12 * total_ss)
            .map(|(_, c)| c)
    }

    /// Stable partition of the first `features` segments around the chosen
    /// split.
    fn partition(&mut self, lo: usize, hi: usize, choice: &SplitChoice, features: usize) {
        let data = self.data;
        for k in lo..hi {
            let r = self.lists[choice.feature * self.m + k];
            self.goes_left[r as usize] = data.x(r, choice.feature) <= choice.threshold;
        }
        for feature in 0..features {
            let base = feature * self.m;
            let mut write = base + lo;
            let mut spill = 0;
            for k in base + lo..base + hi {
                let r = self.lists[k];
                let left = self.goes_left[r as usize];
                self.lists[write] = r;
                self.scratch[spill] = r;
                write += usize::from(left);
                spill += usize::from(!left);
            }
            debug_assert_eq!(write - base - lo, choice.n_left);
            self.lists[write..base + hi].copy_from_slice(&self.scratch[..spill]);
        }
    }
}
