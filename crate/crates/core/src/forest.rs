//! Isolation trees and forests.
//!
//! Trees are grown until every partition holds only duplicated points; there
//! is no depth cap. The splitting dimension cycles through the axes, skipping
//! axes on which the current partition has no spread. Points with a coordinate
//! strictly below the split go left, so every leaf owns a half-open box.
//!
//! The root sits at depth 0 and a leaf's depth is its number of ancestors.

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::{format_float, Dataset};
use crate::error::{Error, Result};

/// Number of splits on a search path, or the sum of those over a forest.
pub type Depth = u32;

#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Internal {
        dim: usize,
        split: f64,
        left: Box<Node>,
        right: Box<Node>,
    },
    Leaf {
        depth: Depth,
    },
}

impl Node {
    pub fn is_leaf(&self) -> bool {
        matches!(self, Node::Leaf { .. })
    }

    pub fn leaf_count(&self) -> usize {
        match self {
            Node::Leaf { .. } => 1,
            Node::Internal { left, right, .. } => left.leaf_count() + right.leaf_count(),
        }
    }

    /// Smallest and largest leaf depth in this subtree.
    pub fn depth_range(&self) -> (Depth, Depth) {
        match self {
            Node::Leaf { depth } => (*depth, *depth),
            Node::Internal { left, right, .. } => {
                let (a, b) = left.depth_range();
                let (c, d) = right.depth_range();
                (a.min(c), b.max(d))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IsolationTree {
    root: Node,
    dims: usize,
}

impl IsolationTree {
    pub fn new(root: Node, dims: usize) -> Result<Self> {
        if dims == 0 {
            return Err(Error::InvalidArgument("dims must be at least 1".into()));
        }
        fn check(node: &Node, dims: usize) -> Result<()> {
            if let Node::Internal {
                dim,
                split,
                left,
                right,
            } = node
            {
                if *dim >= dims {
                    return Err(Error::InvalidArgument(format!(
                        "split dimension {dim} out of range for {dims} dims"
                    )));
                }
                if !split.is_finite() {
                    return Err(Error::InvalidArgument("non-finite split value".into()));
                }
                check(left, dims)?;
                check(right, dims)?;
            }
            Ok(())
        }
        check(&root, dims)?;
        Ok(Self { root, dims })
    }

    pub fn root(&self) -> &Node {
        &self.root
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn leaf_count(&self) -> usize {
        self.root.leaf_count()
    }

    /// Depth of the leaf reached by `p`.
    pub fn path_depth(&self, p: &[f64]) -> Result<Depth> {
        if p.len() != self.dims {
            return Err(Error::DimensionMismatch {
                expected: self.dims,
                got: p.len(),
            });
        }
        Ok(self.path_depth_unchecked(p))
    }

    #[inline]
    pub(crate) fn path_depth_unchecked(&self, p: &[f64]) -> Depth {
        let mut node = &self.root;
        loop {
            match node {
                Node::Leaf { depth } => return *depth,
                Node::Internal {
                    dim,
                    split,
                    left,
                    right,
                } => node = if p[*dim] < *split { left } else { right },
            }
        }
    }

    /// Split values used on each dimension, in preorder.
    pub fn splits_by_dim(&self) -> Vec<Vec<f64>> {
        let mut out = vec![Vec::new(); self.dims];
        let mut stack = vec![&self.root];
        while let Some(node) = stack.pop() {
            if let Node::Internal {
                dim,
                split,
                left,
                right,
            } = node
            {
                out[*dim].push(*split);
                stack.push(right);
                stack.push(left);
            }
        }
        out
    }

    /// Rewrites every split `s` to `ceil(s) - 0.5`.
    ///
    /// For integer-valued data this leaves the side every integer point
    /// descends to unchanged, while trees built from the same integers end up
    /// sharing split values.
    pub fn normalize_integer_keys(&self) -> IsolationTree {
        fn walk(node: &Node) -> Node {
            match node {
                Node::Leaf { depth } => Node::Leaf { depth: *depth },
                Node::Internal {
                    dim,
                    split,
                    left,
                    right,
                } => Node::Internal {
                    dim: *dim,
                    split: integer_key(*split),
                    left: Box::new(walk(left)),
                    right: Box::new(walk(right)),
                },
            }
        }
        IsolationTree {
            root: walk(&self.root),
            dims: self.dims,
        }
    }
}

/// Split position that separates the same integers as `split` does.
pub fn integer_key(split: f64) -> f64 {
    split.ceil() - 0.5
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForestConfig {
    pub tree_count: usize,
    pub sample_size: usize,
    pub seed: u64,
    /// Snap split values to half-integers; only meaningful for integer data.
    pub integer_keys: bool,
}

impl Default for ForestConfig {
    fn default() -> Self {
        Self {
            tree_count: 100,
            sample_size: 256,
            seed: 0,
            integer_keys: false,
        }
    }
}

impl ForestConfig {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.tree_count == 0 {
            return Err(Error::InvalidArgument("tree_count must be at least 1".into()));
        }
        if self.sample_size < 2 {
            return Err(Error::InvalidArgument("sample_size must be at least 2".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Forest {
    trees: Vec<IsolationTree>,
    dims: usize,
    sample_size: usize,
    seed: u64,
    integer_keys: bool,
    source: String,
}

impl Forest {
    /// Builds `config.tree_count` trees, each from its own sample of `data`.
    ///
    /// Tree `i` draws from the ChaCha stream `i` of `config.seed`, so the forest
    /// is a pure function of the data, the configuration and the seed, and
    /// trees can be built in any order.
    pub fn build(data: &Dataset, config: &ForestConfig) -> Result<Forest> {
        config.validate()?;
        if data.is_empty() {
            return Err(Error::EmptyInput);
        }
        let trees = (0..config.tree_count)
            .map(|i| {
                let mut rng = tree_rng(config.seed, i);
                let picked = sample_without_replacement(data, config.sample_size, &mut rng)?;
                let sample = data.select(&picked);
                let tree = build_tree(&sample, &mut rng)?;
                Ok(if config.integer_keys {
                    tree.normalize_integer_keys()
                } else {
                    tree
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Forest {
            trees,
            dims: data.dims(),
            sample_size: config.sample_size,
            seed: config.seed,
            integer_keys: config.integer_keys,
            source: data.fingerprint(),
        })
    }

    /// Assembles a forest from prebuilt trees.
    pub fn from_trees(trees: Vec<IsolationTree>, sample_size: usize, seed: u64) -> Result<Forest> {
        let dims = trees.first().ok_or(Error::EmptyInput)?.dims();
        if let Some(t) = trees.iter().find(|t| t.dims() != dims) {
            return Err(Error::DimensionMismatch {
                expected: dims,
                got: t.dims(),
            });
        }
        Ok(Forest {
            trees,
            dims,
            sample_size,
            seed,
            integer_keys: false,
            source: String::new(),
        })
    }

    pub fn trees(&self) -> &[IsolationTree] {
        &self.trees
    }

    pub fn tree_count(&self) -> usize {
        self.trees.len()
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn sample_size(&self) -> usize {
        self.sample_size
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn integer_keys(&self) -> bool {
        self.integer_keys
    }

    /// Fingerprint of the training data, empty when unknown.
    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn set_source(&mut self, source: impl Into<String>) {
        self.source = source.into();
    }

    pub(crate) fn with_trees(&self, trees: Vec<IsolationTree>) -> Forest {
        Forest {
            trees,
            dims: self.dims,
            sample_size: self.sample_size,
            seed: self.seed,
            integer_keys: self.integer_keys,
            source: self.source.clone(),
        }
    }

    /// Sum of the path depths of `p` over all trees.
    pub fn cumulative_depth(&self, p: &[f64]) -> Result<Depth> {
        if p.len() != self.dims {
            return Err(Error::DimensionMismatch {
                expected: self.dims,
                got: p.len(),
            });
        }
        Ok(self.cumulative_depth_unchecked(p))
    }

    #[inline]
    pub(crate) fn cumulative_depth_unchecked(&self, p: &[f64]) -> Depth {
        self.trees.iter().map(|t| t.path_depth_unchecked(p)).sum()
    }

    /// Cumulative depth of every point of `data`.
    pub fn score(&self, data: &Dataset) -> Result<Vec<Depth>> {
        if data.dims() != self.dims {
            return Err(Error::DimensionMismatch {
                expected: self.dims,
                got: data.dims(),
            });
        }
        Ok(data
            .points()
            .map(|p| self.cumulative_depth_unchecked(p))
            .collect())
    }

    /// Serializes to the line-oriented model format.
    ///
    /// ```text
    /// dims 1
    /// trees 2
    /// sample 256
    /// seed 7
    /// integer_keys 0
    /// source 1a2b3c4d5e6f7a8b
    /// tree
    /// I 0 0.5
    /// L 1
    /// L 1
    /// tree
    /// L 0
    /// ```
    ///
    /// Nodes are listed in preorder, `I <dim> <split>` for internal nodes and
    /// `L <depth>` for leaves.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("dims {}\n", self.dims));
        out.push_str(&format!("trees {}\n", self.trees.len()));
        out.push_str(&format!("sample {}\n", self.sample_size));
        out.push_str(&format!("seed {}\n", self.seed));
        out.push_str(&format!("integer_keys {}\n", u8::from(self.integer_keys)));
        if !self.source.is_empty() {
            out.push_str(&format!("source {}\n", self.source));
        }
        for tree in &self.trees {
            out.push_str("tree\n");
            let mut stack = vec![&tree.root];
            while let Some(node) = stack.pop() {
                match node {
                    Node::Leaf { depth } => out.push_str(&format!("L {depth}\n")),
                    Node::Internal {
                        dim,
                        split,
                        left,
                        right,
                    } => {
                        out.push_str(&format!("I {dim} {}\n", format_float(*split)));
                        stack.push(right);
                        stack.push(left);
                    }
                }
            }
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Forest> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
            .peekable();

        let mut header = |key: &str| -> Result<(usize, String)> {
            let (n, line) = lines
                .next()
                .ok_or_else(|| Error::parse(0, format!("missing `{key}` header")))?;
            let value = line
                .strip_prefix(key)
                .and_then(|r| r.strip_prefix(' '))
                .ok_or_else(|| Error::parse(n, format!("expected `{key} <value>`")))?;
            Ok((n, value.trim().to_string()))
        };
        let num = |(n, v): (usize, String)| -> Result<u64> {
            v.parse()
                .map_err(|_| Error::parse(n, format!("invalid integer `{v}`")))
        };
        let dims = num(header("dims")?)? as usize;
        let tree_count = num(header("trees")?)? as usize;
        let sample_size = num(header("sample")?)? as usize;
        let seed = num(header("seed")?)?;
        let integer_keys = num(header("integer_keys")?)? != 0;
        let mut source = String::new();
        if let Some((_, l)) = lines.peek() {
            if let Some(s) = l.strip_prefix("source ") {
                source = s.trim().to_string();
                lines.next();
            }
        }
        if dims == 0 {
            return Err(Error::parse(1, "dims must be at least 1"));
        }

        let mut trees = Vec::with_capacity(tree_count);
        while let Some((n, line)) = lines.next() {
            if line != "tree" {
                return Err(Error::parse(n, "expected `tree`"));
            }
            let root = parse_node(&mut lines, dims, n)?;
            trees.push(IsolationTree { root, dims });
        }
        if trees.len() != tree_count {
            return Err(Error::parse(
                0,
                format!("header declares {tree_count} trees, found {}", trees.len()),
            ));
        }
        let mut forest = Forest::from_trees(trees, sample_size, seed)?;
        forest.integer_keys = integer_keys;
        forest.source = source;
        Ok(forest)
    }
}

fn parse_node<'a, I>(lines: &mut I, dims: usize, prev: usize) -> Result<Node>
where
    I: Iterator<Item = (usize, &'a str)>,
{
    let (n, line) = lines
        .next()
        .ok_or_else(|| Error::parse(prev + 1, "truncated tree"))?;
    let mut fields = line.split_whitespace();
    match fields.next() {
        Some("L") => {
            let d: Depth = fields
                .next()
                .and_then(|f| f.parse().ok())
                .ok_or_else(|| Error::parse(n, "expected `L <depth>`"))?;
            Ok(Node::Leaf { depth: d })
        }
        Some("I") => {
            let dim: usize = fields
                .next()
                .and_then(|f| f.parse().ok())
                .filter(|&d| d < dims)
                .ok_or_else(|| Error::parse(n, "invalid split dimension"))?;
            let split: f64 = fields
                .next()
                .and_then(|f| f.parse().ok())
                .filter(|s: &f64| s.is_finite())
                .ok_or_else(|| Error::parse(n, "invalid split value"))?;
            let left = parse_node(lines, dims, n)?;
            let right = parse_node(lines, dims, n)?;
            Ok(Node::Internal {
                dim,
                split,
                left: Box::new(left),
                right: Box::new(right),
            })
        }
        _ => Err(Error::parse(n, "expected `I <dim> <split>` or `L <depth>`")),
    }
}

pub(crate) fn tree_rng(seed: u64, tree_index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(tree_index as u64);
    rng
}

/// Picks `min(n, |data|)` distinct point indices.
///
/// Indices are distinct; the values behind them may still repeat.
pub fn sample_without_replacement<R: Rng + ?Sized>(
    data: &Dataset,
    n: usize,
    rng: &mut R,
) -> Result<Vec<usize>> {
    if data.is_empty() {
        return Err(Error::EmptyInput);
    }
    if n == 0 {
        return Err(Error::InvalidArgument("sample size must be at least 1".into()));
    }
    let n = n.min(data.len());
    Ok(index::sample(rng, data.len(), n).into_vec())
}

/// Grows one isolation tree over every point of `sample`.
pub fn build_tree<R: Rng + ?Sized>(sample: &Dataset, rng: &mut R) -> Result<IsolationTree> {
    if sample.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut idx: Vec<usize> = (0..sample.len()).collect();
    let root = grow(sample, &mut idx, 0, 0, rng);
    Ok(IsolationTree {
        root,
        dims: sample.dims(),
    })
}

fn grow<R: Rng + ?Sized>(
    data: &Dataset,
    idx: &mut [usize],
    depth: Depth,
    next_dim: usize,
    rng: &mut R,
) -> Node {
    let dims = data.dims();
    let chosen = (0..dims).map(|k| (next_dim + k) % dims).find_map(|dim| {
        let (lo, hi) = idx.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &i| {
            let v = data.point(i)[dim];
            (lo.min(v), hi.max(v))
        });
        (lo < hi).then_some((dim, lo, hi))
    });
    let Some((dim, lo, hi)) = chosen else {
        return Node::Leaf { depth };
    };
    let split = open_uniform(rng, lo, hi);

    // Partition in place: coordinates below the split first.
    let mut mid = 0;
    for j in 0..idx.len() {
        if data.point(idx[j])[dim] < split {
            idx.swap(mid, j);
            mid += 1;
        }
    }
    debug_assert!(mid > 0 && mid < idx.len());
    let (left, right) = idx.split_at_mut(mid);
    let next = (dim + 1) % dims;
    Node::Internal {
        dim,
        split,
        left: Box::new(grow(data, left, depth + 1, next, rng)),
        right: Box::new(grow(data, right, depth + 1, next, rng)),
    }
}

/// Uniform draw from the open interval `(lo, hi)`, `lo < hi`.
///
/// Falls back to `hi` when no float lies strictly between the bounds, which
/// still separates the two values under the `<` rule.
fn open_uniform<R: Rng + ?Sized>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    for _ in 0..64 {
        let s = rng.gen_range(lo..hi);
        if s > lo {
            return s;
        }
    }
    let mid = lo + (hi - lo) / 2.0;
    if mid > lo && mid < hi {
        mid
    } else {
        hi
    }
}
