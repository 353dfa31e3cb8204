//! Random forest of CART trees over window feature vectors.
//!
//! Each tree grows on a bootstrap resample, considers `max_features`
//! randomly chosen features per node and splits on the largest weighted
//! Gini decrease. Leaves hold the weighted positive fraction; the forest
//! score is the mean leaf score.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::{ByteReader, ByteWriter, CodecError};
use crate::dsp::{FeatureLayout, FeatureVector};
use crate::Prediction;

#[derive(Debug, Error, PartialEq)]
pub enum ForestError {
    #[error("training data needs both classes")]
    SingleClass,
    #[error("training needs at least 2 samples, got {0}")]
    TooFewSamples(usize),
    #[error("feature shape mismatch: {0}")]
    Shape(String),
    #[error("feature layout {got} does not match model layout {expected}")]
    Layout { expected: String, got: String },
    #[error("invalid forest configuration: {0}")]
    Config(String),
    #[error("malformed forest payload: {0}")]
    Codec(#[from] CodecError),
}

/// Class weighting.
///
/// `Balanced` computes `n / (2 · n_c)` once on the whole training set and
/// multiplies it with each sample's bootstrap multiplicity.
/// `BalancedPerTree` recomputes the weights on every bootstrap sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassWeight {
    Balanced,
    BalancedPerTree,
    Uniform,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaxFeatures {
    /// `round(sqrt(n_features))`, at least 1.
    Sqrt,
    All,
    Count(usize),
}

impl MaxFeatures {
    pub fn resolve(&self, n_features: usize) -> usize {
        let k = match *self {
            MaxFeatures::Sqrt => (n_features as f64).sqrt().round() as usize,
            MaxFeatures::All => n_features,
            MaxFeatures::Count(k) => k,
        };
        k.clamp(1, n_features.max(1))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForestConfig {
    pub n_trees: usize,
    pub max_features: MaxFeatures,
    pub min_samples_leaf: usize,
    /// `None` grows until leaves are pure or unsplittable.
    pub max_depth: Option<usize>,
    pub bootstrap: bool,
    pub class_weight: ClassWeight,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        Self {
            n_trees: 200,
            max_features: MaxFeatures::Sqrt,
            min_samples_leaf: 1,
            max_depth: None,
            bootstrap: true,
            class_weight: ClassWeight::Balanced,
            seed: 0,
        }
    }
}

impl ForestConfig {
    pub fn validate(&self) -> Result<(), ForestError> {
        if self.n_trees == 0 {
            return Err(ForestError::Config("n_trees must be at least 1".into()));
        }
        if self.min_samples_leaf == 0 {
            return Err(ForestError::Config("min_samples_leaf must be at least 1".into()));
        }
        if let MaxFeatures::Count(0) = self.max_features {
            return Err(ForestError::Config("max_features must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Node {
    /// `x[feature] <= threshold` goes left.
    Split { feature: usize, threshold: f64, left: usize, right: usize },
    Leaf { score: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecisionTree {
    /// Root at index 0.
    pub nodes: Vec<Node>,
}

impl DecisionTree {
    pub fn score(&self, x: &[f32]) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf { score } => return score,
                Node::Split { feature, threshold, left, right } => {
                    i = if (x[feature] as f64) <= threshold { left } else { right };
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], i: usize) -> usize {
            match nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, left).max(walk(nodes, right)),
            }
        }
        walk(&self.nodes, 0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForestModel {
    pub config: ForestConfig,
    pub trees: Vec<DecisionTree>,
    pub layout: FeatureLayout,
    pub n_features: usize,
}

/// `w_c = n / (2 · n_c)` for the negative and positive class.
pub fn balanced_class_weights(labels: &[bool]) -> Result<(f64, f64), ForestError> {
    let n_pos = labels.iter().filter(|&&y| y).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(ForestError::SingleClass);
    }
    let n = labels.len() as f64;
    Ok((n / (2.0 * n_neg as f64), n / (2.0 * n_pos as f64)))
}

/// Column-major copy of the training matrix.
struct Columns {
    cols: Vec<Vec<f64>>,
    n: usize,
}

impl Columns {
    fn new(rows: &[&[f32]], n_features: usize) -> Self {
        let cols = (0..n_features).map(|f| rows.iter().map(|r| r[f] as f64).collect()).collect();
        Self { cols, n: rows.len() }
    }
}

struct Grower<'a> {
    x: &'a Columns,
    y: &'a [bool],
    /// Per-sample weight (class weight times bootstrap multiplicity).
    w: Vec<f64>,
    mtry: usize,
    max_depth: Option<usize>,
    min_leaf: usize,
    rng: ChaCha8Rng,
    nodes: Vec<Node>,
}

struct BestSplit {
    gain: f64,
    feature: usize,
    threshold: f64,
}

fn gini(pos: f64, neg: f64) -> f64 {
    let t = pos + neg;
    if t <= 0.0 {
        return 0.0;
    }
    let p = pos / t;
    2.0 * p * (1.0 - p)
}

/// Weighted impurity `W · Gini` of a node.
pub fn weighted_gini(pos: f64, neg: f64) -> f64 {
    (pos + neg) * gini(pos, neg)
}

impl Grower<'_> {
    fn masses(&self, idx: &[usize]) -> (f64, f64) {
        idx.iter().fold((0.0, 0.0), |(p, n), &i| if self.y[i] { (p + self.w[i], n) } else { (p, n + self.w[i]) })
    }

    fn leaf(&mut self, pos: f64, neg: f64) -> usize {
        let score = if pos + neg > 0.0 { pos / (pos + neg) } else { 0.0 };
        self.nodes.push(Node::Leaf { score });
        self.nodes.len() - 1
    }

    /// Best threshold on one feature, or `None` if the feature is constant
    /// over `idx` or no split leaves `min_leaf` samples on each side.
    fn best_on_feature(&self, f: usize, idx: &[usize], sorted: &mut Vec<usize>, pos: f64, neg: f64) -> Option<BestSplit> {
        let col = &self.x.cols[f];
        sorted.clear();
        sorted.extend_from_slice(idx);
        sorted.sort_by(|&a, &b| col[a].total_cmp(&col[b]).then(a.cmp(&b)));
        if col[sorted[0]] == col[sorted[sorted.len() - 1]] {
            return None;
        }
        let parent = weighted_gini(pos, neg);
        let (mut lp, mut ln) = (0.0, 0.0);
        let mut best: Option<BestSplit> = None;
        for k in 0..sorted.len() - 1 {
            let i = sorted[k];
            if self.y[i] {
                lp += self.w[i];
            } else {
                ln += self.w[i];
            }
            let (a, b) = (col[i], col[sorted[k + 1]]);
            if a == b || k + 1 < self.min_leaf || sorted.len() - k - 1 < self.min_leaf {
                continue;
            }
            let gain = parent - weighted_gini(lp, ln) - weighted_gini(pos - lp, neg - ln);
            if best.as_ref().is_none_or(|bs| gain > bs.gain) {
                let mut threshold = a + (b - a) / 2.0;
                if threshold >= b {
                    threshold = a;
                }
                best = Some(BestSplit { gain, feature: f, threshold });
            }
        }
        best
    }

    fn grow(&mut self, idx: Vec<usize>, depth: usize) -> usize {
        let (pos, neg) = self.masses(&idx);
        let pure = pos == 0.0 || neg == 0.0;
        if pure || idx.len() < 2 * self.min_leaf || self.max_depth.is_some_and(|d| depth >= d) {
            return self.leaf(pos, neg);
        }

        let n_features = self.x.cols.len();
        let mut order: Vec<usize> = (0..n_features).collect();
        order.shuffle(&mut self.rng);
        let mut sorted = Vec::with_capacity(idx.len());
        let mut best: Option<BestSplit> = None;
        let mut informative = 0;
        // constant features do not count toward the mtry budget
        for &f in &order {
            if informative == self.mtry {
                break;
            }
            if let Some(cand) = self.best_on_feature(f, &idx, &mut sorted, pos, neg) {
                informative += 1;
                let better = match &best {
                    None => true,
                    Some(b) => {
                        cand.gain > b.gain
                            || (cand.gain == b.gain
                                && (cand.feature < b.feature || (cand.feature == b.feature && cand.threshold < b.threshold)))
                    }
                };
                if better {
                    best = Some(cand);
                }
            }
        }

        let Some(split) = best else {
            return self.leaf(pos, neg);
        };
        let col = &self.x.cols[split.feature];
        let (left, right): (Vec<usize>, Vec<usize>) = idx.iter().partition(|&&i| col[i] <= split.threshold);
        let at = self.nodes.len();
        self.nodes.push(Node::Leaf { score: f64::NAN });
        let l = self.grow(left, depth + 1);
        let r = self.grow(right, depth + 1);
        self.nodes[at] = Node::Split { feature: split.feature, threshold: split.threshold, left: l, right: r };
        at
    }
}

fn tree_rng(seed: u64, tree_index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(tree_index as u64);
    rng
}

fn train_tree(x: &Columns, y: &[bool], config: &ForestConfig, full_weights: (f64, f64), tree_index: usize) -> DecisionTree {
    let mut rng = tree_rng(config.seed, tree_index);
    let mut counts = vec![0usize; x.n];
    if config.bootstrap {
        for _ in 0..x.n {
            counts[rng.random_range(0..x.n)] += 1;
        }
    } else {
        counts.iter_mut().for_each(|c| *c = 1);
    }

    let (w_neg, w_pos) = match config.class_weight {
        ClassWeight::Balanced => full_weights,
        ClassWeight::Uniform => (1.0, 1.0),
        ClassWeight::BalancedPerTree => {
            let n_pos: usize = (0..x.n).filter(|&i| y[i]).map(|i| counts[i]).sum();
            let n_neg = x.n - n_pos;
            if n_pos == 0 || n_neg == 0 {
                (1.0, 1.0)
            } else {
                (x.n as f64 / (2.0 * n_neg as f64), x.n as f64 / (2.0 * n_pos as f64))
            }
        }
    };
    let w: Vec<f64> = (0..x.n).map(|i| counts[i] as f64 * if y[i] { w_pos } else { w_neg }).collect();
    let idx: Vec<usize> = (0..x.n).filter(|&i| counts[i] > 0).collect();

    let mut g = Grower {
        x,
        y,
        w,
        mtry: config.max_features.resolve(x.cols.len()),
        max_depth: config.max_depth,
        min_leaf: config.min_samples_leaf,
        rng,
        nodes: Vec::new(),
    };
    g.grow(idx, 0);
    DecisionTree { nodes: g.nodes }
}

/// Trains a forest on `vectors` with binary `labels`. Trees are grown in
/// parallel and collected in tree order, so the result does not depend on
/// the thread count.
pub fn train_forest(vectors: &[FeatureVector], labels: &[bool], config: &ForestConfig) -> Result<ForestModel, ForestError> {
    train_forest_timed(vectors, labels, config).map(|(m, _)| m)
}

/// [`train_forest`], also returning the wall time spent on each tree.
pub fn train_forest_timed(
    vectors: &[FeatureVector],
    labels: &[bool],
    config: &ForestConfig,
) -> Result<(ForestModel, Vec<std::time::Duration>), ForestError> {
    config.validate()?;
    if vectors.len() != labels.len() {
        return Err(ForestError::Shape(format!("{} vectors but {} labels", vectors.len(), labels.len())));
    }
    if vectors.len() < 2 {
        return Err(ForestError::TooFewSamples(vectors.len()));
    }
    let layout = vectors[0].layout;
    let n_features = vectors[0].len();
    if let Some(v) = vectors.iter().find(|v| v.layout != layout || v.len() != n_features) {
        return Err(ForestError::Shape(format!("mixed vectors: {} × {} and {} × {}", layout.tag(), n_features, v.layout.tag(), v.len())));
    }
    if vectors.iter().any(|v| v.values.iter().any(|x| !x.is_finite())) {
        return Err(ForestError::Shape("non-finite feature value".into()));
    }
    let full_weights = balanced_class_weights(labels)?;

    let rows: Vec<&[f32]> = vectors.iter().map(|v| v.values.as_slice()).collect();
    let x = Columns::new(&rows, n_features);
    let (trees, timings) = (0..config.n_trees)
        .into_par_iter()
        .map(|t| {
            let start = std::time::Instant::now();
            let tree = train_tree(&x, labels, config, full_weights, t);
            (tree, start.elapsed())
        })
        .unzip();
    Ok((ForestModel { config: config.clone(), trees, layout, n_features }, timings))
}

impl ForestModel {
    fn check(&self, v: &FeatureVector) -> Result<(), ForestError> {
        if v.layout != self.layout {
            return Err(ForestError::Layout { expected: self.layout.tag().into(), got: v.layout.tag().into() });
        }
        if v.len() != self.n_features {
            return Err(ForestError::Shape(format!("expected {} features, got {}", self.n_features, v.len())));
        }
        Ok(())
    }

    pub fn predict(&self, v: &FeatureVector) -> Result<Prediction, ForestError> {
        self.check(v)?;
        let sum: f64 = self.trees.iter().map(|t| t.score(&v.values)).sum();
        Ok(Prediction::from_score(sum / self.trees.len() as f64))
    }

    pub fn predict_many(&self, vs: &[FeatureVector]) -> Result<Vec<Prediction>, ForestError> {
        vs.par_iter().map(|v| self.predict(v)).collect()
    }

    /// Payload of the `FRST` envelope section: config JSON blob, layout
    /// tag, feature count (u16), tree count (u32), then per tree a node
    /// count (u32) and its nodes. A split node is `0u8, feature u16,
    /// threshold f64, left u32, right u32`; a leaf is `1u8, score f64`.
    pub fn to_payload(&self) -> Vec<u8> {
        let mut w = ByteWriter::new();
        w.blob(serde_json::to_string(&self.config).expect("config serializes").as_bytes());
        w.short_str(self.layout.tag());
        w.u16(self.n_features as u16);
        w.u32(self.trees.len() as u32);
        for t in &self.trees {
            w.u32(t.nodes.len() as u32);
            for n in &t.nodes {
                match *n {
                    Node::Split { feature, threshold, left, right } => {
                        w.u8(0);
                        w.u16(feature as u16);
                        w.f64(threshold);
                        w.u32(left as u32);
                        w.u32(right as u32);
                    }
                    Node::Leaf { score } => {
                        w.u8(1);
                        w.f64(score);
                    }
                }
            }
        }
        w.buf
    }

    pub fn from_payload(bytes: &[u8]) -> Result<Self, ForestError> {
        let bad = |m: String| ForestError::Codec(CodecError::Invalid(m));
        let mut r = ByteReader::new(bytes);
        let config: ForestConfig =
            serde_json::from_slice(r.blob()?).map_err(|e| bad(format!("forest config: {e}")))?;
        let tag = r.short_str()?;
        let layout = FeatureLayout::from_tag(&tag).ok_or_else(|| bad(format!("unknown layout {tag:?}")))?;
        let n_features = r.u16()? as usize;
        let n_trees = r.u32()? as usize;
        let mut trees = Vec::with_capacity(n_trees.min(r.remaining()));
        for _ in 0..n_trees {
            let n_nodes = r.u32()? as usize;
            let mut nodes = Vec::with_capacity(n_nodes.min(r.remaining()));
            for _ in 0..n_nodes {
                nodes.push(match r.u8()? {
                    0 => {
                        let feature = r.u16()? as usize;
                        let threshold = r.f64()?;
                        let (left, right) = (r.u32()? as usize, r.u32()? as usize);
                        if feature >= n_features || left >= n_nodes || right >= n_nodes || !threshold.is_finite() {
                            return Err(bad("split node out of range".into()));
                        }
                        Node::Split { feature, threshold, left, right }
                    }
                    1 => Node::Leaf { score: r.f64()? },
                    k => return Err(bad(format!("unknown node kind {k}"))),
                });
            }
            if nodes.is_empty() {
                return Err(bad("empty tree".into()));
            }
            trees.push(DecisionTree { nodes });
        }
        r.finish()?;
        if trees.is_empty() {
            return Err(bad("forest has no trees".into()));
        }
        Ok(Self { config, trees, layout, n_features })
    }
}
