//! One-dimensional specification: tree → range list, k-way merge of range
//! lists into cumulative depths, anomalous range extraction and a balanced
//! lookup tree over the result.
//!
//! Every range is half-open, `[from, to)`, matching the `<` descent rule.

use std::cmp::Ordering;

use crate::error::{Error, Result};
use crate::forest::{Depth, IsolationTree, Node};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Range {
    pub from: f64,
    pub to: f64,
    pub depth: Depth,
}

impl Range {
    pub fn new(from: f64, to: f64, depth: Depth) -> Self {
        Self { from, to, depth }
    }

    pub fn contains(&self, x: f64) -> bool {
        self.from <= x && x < self.to
    }
}

/// A contiguous, non-overlapping cover of the real line.
#[derive(Debug, Clone, PartialEq)]
pub struct RangeList {
    ranges: Vec<Range>,
}

impl RangeList {
    pub fn new(ranges: Vec<Range>) -> Result<Self> {
        let first = ranges.first().ok_or(Error::EmptyInput)?;
        let last = ranges.last().unwrap();
        if first.from != f64::NEG_INFINITY || last.to != f64::INFINITY {
            return Err(Error::InvalidArgument(
                "range list must span (-inf, +inf)".into(),
            ));
        }
        for (i, r) in ranges.iter().enumerate() {
            if r.from.partial_cmp(&r.to) != Some(Ordering::Less) {
                return Err(Error::InvalidArgument(format!("empty range at {i}")));
            }
            if i > 0 && ranges[i - 1].to != r.from {
                return Err(Error::InvalidArgument(format!("gap before range {i}")));
            }
        }
        Ok(Self { ranges })
    }

    pub fn ranges(&self) -> &[Range] {
        &self.ranges
    }

    pub fn len(&self) -> usize {
        self.ranges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ranges.is_empty()
    }

    /// Depth of the range containing `x`.
    pub fn depth_at(&self, x: f64) -> Depth {
        let i = self.ranges.partition_point(|r| r.to <= x);
        self.ranges[i.min(self.ranges.len() - 1)].depth
    }
}

/// Lists the leaves of a 1-D tree in order, one range per leaf.
pub fn tree_to_ranges(tree: &IsolationTree) -> Result<RangeList> {
    if tree.dims() != 1 {
        return Err(Error::DimensionMismatch {
            expected: 1,
            got: tree.dims(),
        });
    }
    fn walk(node: &Node, from: f64, to: f64, out: &mut Vec<Range>) {
        match node {
            Node::Leaf { depth } => out.push(Range::new(from, to, *depth)),
            Node::Internal {
                split, left, right, ..
            } => {
                walk(left, from, *split, out);
                walk(right, *split, to, out);
            }
        }
    }
    let mut out = Vec::with_capacity(tree.leaf_count());
    walk(tree.root(), f64::NEG_INFINITY, f64::INFINITY, &mut out);
    Ok(RangeList { ranges: out })
}

/// Intersects range lists, summing the depths of overlapping ranges.
///
/// Output boundaries are the sorted union of every input boundary, so equal
/// split values from different trees collapse instead of producing empty
/// ranges.
pub fn merge_range_lists(lists: &[RangeList]) -> Result<RangeList> {
    if lists.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut bounds: Vec<f64> = lists
        .iter()
        .flat_map(|l| l.ranges[1..].iter().map(|r| r.from))
        .collect();
    bounds.sort_unstable_by(f64::total_cmp);
    bounds.dedup();

    // Output range k spans [bounds[k-1], bounds[k]); slot(x) is the first
    // output range starting at or after x.
    let slot = |x: f64| -> usize {
        if x == f64::NEG_INFINITY {
            0
        } else if x == f64::INFINITY {
            bounds.len() + 1
        } else {
            bounds.partition_point(|&b| b < x) + 1
        }
    };
    let mut delta = vec![0i64; bounds.len() + 2];
    for list in lists {
        for r in &list.ranges {
            delta[slot(r.from)] += i64::from(r.depth);
            delta[slot(r.to)] -= i64::from(r.depth);
        }
    }
    let mut ranges = Vec::with_capacity(bounds.len() + 1);
    let mut running = 0i64;
    for k in 0..=bounds.len() {
        running += delta[k];
        let from = if k == 0 { f64::NEG_INFINITY } else { bounds[k - 1] };
        let to = bounds.get(k).copied().unwrap_or(f64::INFINITY);
        ranges.push(Range::new(from, to, running as Depth));
    }
    Ok(RangeList { ranges })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub from: f64,
    pub to: f64,
}

impl Interval {
    pub fn contains(&self, x: f64) -> bool {
        self.from <= x && x < self.to
    }
}

/// Disjoint anomalous intervals at a cumulative-depth cutoff.
#[derive(Debug, Clone, PartialEq)]
pub struct AnomalyRangeSet {
    pub intervals: Vec<Interval>,
    pub cutoff: Depth,
}

/// Keeps ranges with depth `<= cutoff`, coalescing neighbours.
pub fn extract_anomalous_ranges(merged: &RangeList, cutoff: Depth) -> AnomalyRangeSet {
    let mut intervals: Vec<Interval> = Vec::new();
    let mut extending = false;
    for r in &merged.ranges {
        if r.depth <= cutoff {
            match intervals.last_mut() {
                Some(last) if extending => last.to = r.to,
                _ => intervals.push(Interval {
                    from: r.from,
                    to: r.to,
                }),
            }
            extending = true;
        } else {
            extending = false;
        }
    }
    AnomalyRangeSet { intervals, cutoff }
}

const NIL: u32 = u32::MAX;

#[derive(Debug, Clone)]
struct SearchNode {
    interval: Interval,
    left: u32,
    right: u32,
}

/// Balanced binary search tree over disjoint, sorted intervals.
#[derive(Debug, Clone)]
pub struct RangeSearchTree {
    nodes: Vec<SearchNode>,
    root: u32,
}

impl RangeSearchTree {
    /// Builds the tree with the middle interval at each root.
    pub fn new(sorted: &[Interval]) -> Self {
        fn build(items: &[Interval], nodes: &mut Vec<SearchNode>) -> u32 {
            if items.is_empty() {
                return NIL;
            }
            let half = items.len() / 2;
            let at = nodes.len();
            nodes.push(SearchNode {
                interval: items[half],
                left: NIL,
                right: NIL,
            });
            let left = build(&items[..half], nodes);
            let right = build(&items[half + 1..], nodes);
            nodes[at].left = left;
            nodes[at].right = right;
            at as u32
        }
        let mut nodes = Vec::with_capacity(sorted.len());
        let root = build(sorted, &mut nodes);
        Self { nodes, root }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn height(&self) -> usize {
        fn h(nodes: &[SearchNode], at: u32) -> usize {
            if at == NIL {
                0
            } else {
                let n = &nodes[at as usize];
                1 + h(nodes, n.left).max(h(nodes, n.right))
            }
        }
        h(&self.nodes, self.root)
    }

    #[inline]
    pub fn contains(&self, x: f64) -> bool {
        let mut at = self.root;
        while at != NIL {
            let node = &self.nodes[at as usize];
            if x < node.interval.from {
                at = node.left;
            } else if x >= node.interval.to {
                at = node.right;
            } else {
                return true;
            }
        }
        false
    }
}

pub fn ranges_to_search_tree(anoms: &AnomalyRangeSet) -> RangeSearchTree {
    RangeSearchTree::new(&anoms.intervals)
}
