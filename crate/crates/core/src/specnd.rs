//! n-dimensional specification.
//!
//! Every KD-tree leaf owns a half-open box; the boxes of one tree cover the
//! space without overlap. Collecting every split value per dimension gives a
//! grid whose cells never straddle a leaf boundary, so cumulative depth is
//! constant on each cell. Anomalous cells are then consolidated into larger
//! boxes.
//!
//! Cell depths are computed by sweeping dimension 0: each leaf box is added
//! to a difference array over the remaining dimensions when the sweep enters
//! it and removed when it leaves, so only one slab of depths is alive at a
//! time.

use std::cmp::Ordering;

use crate::error::{Error, Result};
use crate::forest::{Depth, Forest, IsolationTree, Node};

/// Half-open axis-aligned box `[lo_k, hi_k)` per dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct Region {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl Region {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() {
            return Err(Error::DimensionMismatch {
                expected: lo.len(),
                got: hi.len(),
            });
        }
        if lo.is_empty() {
            return Err(Error::InvalidArgument("region needs at least one dimension".into()));
        }
        if lo.iter().zip(&hi).any(|(l, h)| l.partial_cmp(h) != Some(Ordering::Less)) {
            return Err(Error::InvalidArgument(format!(
                "empty region {lo:?}..{hi:?}"
            )));
        }
        Ok(Self { lo, hi })
    }

    /// The whole space.
    pub fn everything(dims: usize) -> Self {
        Self {
            lo: vec![f64::NEG_INFINITY; dims],
            hi: vec![f64::INFINITY; dims],
        }
    }

    pub fn dims(&self) -> usize {
        self.lo.len()
    }

    #[inline]
    pub fn contains(&self, p: &[f64]) -> bool {
        p.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .all(|(x, (l, h))| l <= x && x < h)
    }

    pub fn intersects(&self, other: &Region) -> bool {
        (0..self.dims()).all(|k| self.lo[k] < other.hi[k] && other.lo[k] < self.hi[k])
    }

    fn is_empty(&self) -> bool {
        self.lo.iter().zip(&self.hi).any(|(l, h)| l.partial_cmp(h) != Some(Ordering::Less))
    }
}

/// A leaf box of one tree together with the leaf's depth.
#[derive(Debug, Clone, PartialEq)]
pub struct HyperRect {
    pub region: Region,
    pub depth: Depth,
}

/// Boxes of every leaf that some point can reach.
pub fn tree_to_rects(tree: &IsolationTree) -> Vec<HyperRect> {
    fn walk(node: &Node, region: &mut Region, out: &mut Vec<HyperRect>) {
        match node {
            Node::Leaf { depth } => {
                if !region.is_empty() {
                    out.push(HyperRect {
                        region: region.clone(),
                        depth: *depth,
                    });
                }
            }
            Node::Internal {
                dim,
                split,
                left,
                right,
            } => {
                let saved = region.hi[*dim];
                region.hi[*dim] = saved.min(*split);
                walk(left, region, out);
                region.hi[*dim] = saved;
                let saved = region.lo[*dim];
                region.lo[*dim] = saved.max(*split);
                walk(right, region, out);
                region.lo[*dim] = saved;
            }
        }
    }
    let mut out = Vec::with_capacity(tree.leaf_count());
    walk(tree.root(), &mut Region::everything(tree.dims()), &mut out);
    out
}

const NIL: u32 = u32::MAX;

/// Arena copy of a tree with per-subtree depth extremes.
struct FlatTree {
    nodes: Vec<FlatNode>,
}

struct FlatNode {
    dim: usize,
    split: f64,
    left: u32,
    right: u32,
    min: Depth,
    max: Depth,
}

impl FlatTree {
    fn new(tree: &IsolationTree) -> Self {
        fn push(node: &Node, nodes: &mut Vec<FlatNode>) -> u32 {
            let at = nodes.len();
            match node {
                Node::Leaf { depth } => nodes.push(FlatNode {
                    dim: 0,
                    split: 0.0,
                    left: NIL,
                    right: NIL,
                    min: *depth,
                    max: *depth,
                }),
                Node::Internal {
                    dim,
                    split,
                    left,
                    right,
                } => {
                    nodes.push(FlatNode {
                        dim: *dim,
                        split: *split,
                        left: NIL,
                        right: NIL,
                        min: 0,
                        max: 0,
                    });
                    let l = push(left, nodes);
                    let r = push(right, nodes);
                    let (ln, rn) = (&nodes[l as usize], &nodes[r as usize]);
                    let (min, max) = (ln.min.min(rn.min), ln.max.max(rn.max));
                    let n = &mut nodes[at];
                    n.left = l;
                    n.right = r;
                    n.min = min;
                    n.max = max;
                }
            }
            at as u32
        }
        let mut nodes = Vec::new();
        push(tree.root(), &mut nodes);
        Self { nodes }
    }

    /// Smallest depth of a leaf whose box meets `region`.
    fn min_depth_in(&self, region: &Region) -> Depth {
        let mut best = Depth::MAX;
        let mut stack = vec![0u32];
        while let Some(at) = stack.pop() {
            let n = &self.nodes[at as usize];
            if n.min >= best {
                continue;
            }
            if n.left == NIL {
                best = n.min;
                continue;
            }
            if region.hi[n.dim] > n.split {
                stack.push(n.right);
            }
            if region.lo[n.dim] < n.split {
                stack.push(n.left);
            }
        }
        best
    }
}

/// Collapses subtrees that cannot change classification at any cutoff up to
/// `depth_bound`.
///
/// A subtree whose leaves all share one depth becomes a leaf of that depth.
/// A subtree whose box has a cumulative-depth lower bound above `depth_bound`
/// (its own shallowest leaf plus, for every other tree, the shallowest leaf
/// meeting the box) becomes a leaf at its deepest leaf depth. Depths of
/// points there can only grow, so points at or below any cutoff
/// `<= depth_bound` keep their exact depth and everything else stays above it.
pub fn prune_forest(forest: &Forest, depth_bound: Depth) -> Forest {
    let flats: Vec<FlatTree> = forest.trees().iter().map(FlatTree::new).collect();

    fn prune(
        t: usize,
        at: u32,
        region: &mut Region,
        flats: &[FlatTree],
        bound: Depth,
    ) -> Node {
        let n = &flats[t].nodes[at as usize];
        if n.left == NIL || n.min == n.max {
            return Node::Leaf { depth: n.min };
        }
        let mut lower = u64::from(n.min);
        for (u, other) in flats.iter().enumerate() {
            if u != t {
                lower += u64::from(other.min_depth_in(region));
                if lower > u64::from(bound) {
                    return Node::Leaf { depth: n.max };
                }
            }
        }
        let (dim, split) = (n.dim, n.split);
        let saved = region.hi[dim];
        region.hi[dim] = saved.min(split);
        let left = prune(t, n.left, region, flats, bound);
        region.hi[dim] = saved;
        let saved = region.lo[dim];
        region.lo[dim] = saved.max(split);
        let right = prune(t, n.right, region, flats, bound);
        region.lo[dim] = saved;
        Node::Internal {
            dim,
            split,
            left: Box::new(left),
            right: Box::new(right),
        }
    }

    let trees = (0..flats.len())
        .map(|t| {
            let root = prune(
                t,
                0,
                &mut Region::everything(forest.dims()),
                &flats,
                depth_bound,
            );
            IsolationTree::new(root, forest.dims()).expect("pruning keeps tree shape valid")
        })
        .collect();
    forest.with_trees(trees)
}

/// Mean cumulative depth of the points of `data`, the default pruning bound.
pub fn mean_cumulative_depth(forest: &Forest, data: &crate::data::Dataset) -> Result<Depth> {
    let depths = forest.score(data)?;
    if depths.is_empty() {
        return Err(Error::EmptyInput);
    }
    let sum: u64 = depths.iter().map(|&d| u64::from(d)).sum();
    Ok((sum / depths.len() as u64) as Depth)
}

/// Sorted cell boundaries along one dimension plus one representative
/// coordinate per cell.
#[derive(Debug, Clone, PartialEq)]
pub struct Axis {
    boundaries: Vec<f64>,
    reps: Vec<f64>,
}

impl Axis {
    /// `boundaries` must be finite and strictly increasing.
    pub fn new(boundaries: Vec<f64>) -> Result<Self> {
        if boundaries.iter().any(|b| !b.is_finite())
            || boundaries.windows(2).any(|w| w[0].partial_cmp(&w[1]) != Some(Ordering::Less))
        {
            return Err(Error::InvalidArgument(
                "axis boundaries must be finite and strictly increasing".into(),
            ));
        }
        let cells = boundaries.len() + 1;
        let mut axis = Axis {
            boundaries,
            reps: Vec::with_capacity(cells),
        };
        axis.reps = (0..cells).map(|c| axis.representative(c)).collect();
        Ok(axis)
    }

    pub fn boundaries(&self) -> &[f64] {
        &self.boundaries
    }

    pub fn cells(&self) -> usize {
        self.boundaries.len() + 1
    }

    pub fn lower(&self, cell: usize) -> f64 {
        if cell == 0 {
            f64::NEG_INFINITY
        } else {
            self.boundaries[cell - 1]
        }
    }

    pub fn upper(&self, cell: usize) -> f64 {
        self.boundaries.get(cell).copied().unwrap_or(f64::INFINITY)
    }

    /// Index of the cell containing `x`.
    pub fn locate(&self, x: f64) -> usize {
        self.boundaries.partition_point(|&b| b <= x)
    }

    /// Midpoint of a bounded cell; one unit inside the finite edge of an
    /// unbounded one.
    fn representative(&self, cell: usize) -> f64 {
        let (l, h) = (self.lower(cell), self.upper(cell));
        match (l.is_finite(), h.is_finite()) {
            (true, true) => {
                let mid = l / 2.0 + h / 2.0;
                if l <= mid && mid < h {
                    mid
                } else {
                    l
                }
            }
            (false, true) => {
                let r = h - 1.0;
                if r < h {
                    r
                } else {
                    f64::NEG_INFINITY
                }
            }
            (true, false) => {
                let r = l + 1.0;
                if r > l {
                    r
                } else {
                    l
                }
            }
            (false, false) => 0.0,
        }
    }

    pub fn rep(&self, cell: usize) -> f64 {
        self.reps[cell]
    }

    /// Cells whose representative lies in `[lo, hi)`.
    fn rep_span(&self, lo: f64, hi: f64) -> (usize, usize) {
        (
            self.reps.partition_point(|&r| r < lo),
            self.reps.partition_point(|&r| r < hi),
        )
    }
}

/// Refinement of the space by every split boundary of a forest.
#[derive(Debug, Clone, PartialEq)]
pub struct PixelGrid {
    axes: Vec<Axis>,
    merged: bool,
}

/// Default ceiling on grid size accepted by the full specification path.
pub const DEFAULT_MAX_CELLS: u128 = 1 << 30;

pub fn build_pixel_grid(forest: &Forest, min_cell: Option<&[f64]>) -> Result<PixelGrid> {
    let dims = forest.dims();
    if let Some(m) = min_cell {
        if m.len() != dims {
            return Err(Error::DimensionMismatch {
                expected: dims,
                got: m.len(),
            });
        }
    }
    let mut per_dim: Vec<Vec<f64>> = vec![Vec::new(); dims];
    for tree in forest.trees() {
        for (k, splits) in tree.splits_by_dim().into_iter().enumerate() {
            per_dim[k].extend(splits);
        }
    }
    let mut merged = false;
    let axes = per_dim
        .into_iter()
        .enumerate()
        .map(|(k, mut b)| {
            b.sort_unstable_by(f64::total_cmp);
            b.dedup();
            if let Some(m) = min_cell {
                let before = b.len();
                b = drop_thin_cells(&b, m[k]);
                merged |= b.len() != before;
            }
            Axis::new(b)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PixelGrid { axes, merged })
}

/// Drops every boundary closer than `min_width` to the last kept one, so
/// the thin cell joins the next cell.
fn drop_thin_cells(sorted: &[f64], min_width: f64) -> Vec<f64> {
    let mut kept: Vec<f64> = Vec::with_capacity(sorted.len());
    for &b in sorted {
        match kept.last() {
            Some(&last) if b - last < min_width => {}
            _ => kept.push(b),
        }
    }
    kept
}

impl PixelGrid {
    pub fn from_axes(axes: Vec<Axis>) -> Result<Self> {
        if axes.is_empty() {
            return Err(Error::InvalidArgument("grid needs at least one axis".into()));
        }
        Ok(Self {
            axes,
            merged: false,
        })
    }

    pub fn axes(&self) -> &[Axis] {
        &self.axes
    }

    pub fn dims(&self) -> usize {
        self.axes.len()
    }

    /// Whether thin cells were merged, making cell depths approximate.
    pub fn is_merged(&self) -> bool {
        self.merged
    }

    pub fn shape(&self) -> Vec<usize> {
        self.axes.iter().map(Axis::cells).collect()
    }

    pub fn cell_count(&self) -> u128 {
        self.axes.iter().map(|a| a.cells() as u128).product()
    }

    pub fn locate(&self, p: &[f64]) -> Vec<usize> {
        self.axes.iter().zip(p).map(|(a, &x)| a.locate(x)).collect()
    }

    pub fn representative(&self, cell: &[usize]) -> Vec<f64> {
        self.axes.iter().zip(cell).map(|(a, &c)| a.rep(c)).collect()
    }

    pub fn cell_region(&self, cell: &[usize]) -> Region {
        Region {
            lo: self.axes.iter().zip(cell).map(|(a, &c)| a.lower(c)).collect(),
            hi: self.axes.iter().zip(cell).map(|(a, &c)| a.upper(c)).collect(),
        }
    }

    /// Region covered by a box of cells.
    pub fn box_region(&self, b: &CellBox) -> Region {
        Region {
            lo: self
                .axes
                .iter()
                .zip(&b.lo)
                .map(|(a, &c)| a.lower(c as usize))
                .collect(),
            hi: self
                .axes
                .iter()
                .zip(&b.hi)
                .map(|(a, &c)| a.upper(c as usize - 1))
                .collect(),
        }
    }

    fn check_size(&self, limit: u128) -> Result<()> {
        let cells = self.cell_count();
        if cells > limit {
            return Err(Error::GridTooLarge { cells, limit });
        }
        Ok(())
    }

    /// Streams cumulative depths slab by slab along dimension 0.
    ///
    /// `visit(i, depths)` receives the depths of every cell with first index
    /// `i`, row-major over the remaining dimensions. A cell's depth is the
    /// forest's cumulative depth at its representative point.
    pub fn sweep_depths<F>(&self, forest: &Forest, mut visit: F) -> Result<()>
    where
        F: FnMut(usize, &[Depth]),
    {
        if forest.dims() != self.dims() {
            return Err(Error::DimensionMismatch {
                expected: self.dims(),
                got: forest.dims(),
            });
        }
        let shape = self.shape();
        let inner = &shape[1..];
        let ext: Vec<usize> = inner.iter().map(|n| n + 1).collect();
        let mut ext_stride = vec![1usize; ext.len()];
        for k in (0..ext.len().saturating_sub(1)).rev() {
            ext_stride[k] = ext_stride[k + 1] * ext[k + 1];
        }
        let ext_size: usize = ext.iter().product();
        let inner_size: usize = inner.iter().product();
        let corners = 1usize << inner.len();

        struct Entry {
            depth: i64,
            offsets: Vec<(usize, i64)>,
        }
        let mut entries: Vec<Entry> = Vec::new();
        let mut starts: Vec<Vec<u32>> = vec![Vec::new(); shape[0] + 1];
        let mut ends: Vec<Vec<u32>> = vec![Vec::new(); shape[0] + 1];
        for tree in forest.trees() {
            'leaf: for rect in tree_to_rects(tree) {
                let mut spans = Vec::with_capacity(self.dims());
                for (k, axis) in self.axes.iter().enumerate() {
                    let span = axis.rep_span(rect.region.lo[k], rect.region.hi[k]);
                    if span.0 == span.1 {
                        continue 'leaf;
                    }
                    spans.push(span);
                }
                let offsets = (0..corners)
                    .map(|mask| {
                        let mut off = 0;
                        let mut sign = 1i64;
                        for (k, &(a, b)) in spans[1..].iter().enumerate() {
                            if mask >> k & 1 == 1 {
                                off += b * ext_stride[k];
                                sign = -sign;
                            } else {
                                off += a * ext_stride[k];
                            }
                        }
                        (off, sign)
                    })
                    .collect();
                let id = entries.len() as u32;
                entries.push(Entry {
                    depth: i64::from(rect.depth),
                    offsets,
                });
                starts[spans[0].0].push(id);
                ends[spans[0].1].push(id);
            }
        }

        let mut diff = vec![0i64; ext_size];
        let mut scratch = vec![0i64; ext_size];
        let mut out = vec![0 as Depth; inner_size];
        let last = inner.last().copied().unwrap_or(1);
        for slab in 0..shape[0] {
            for &id in &ends[slab] {
                let e = &entries[id as usize];
                for &(off, sign) in &e.offsets {
                    diff[off] -= sign * e.depth;
                }
            }
            for &id in &starts[slab] {
                let e = &entries[id as usize];
                for &(off, sign) in &e.offsets {
                    diff[off] += sign * e.depth;
                }
            }
            scratch.copy_from_slice(&diff);
            for k in 0..ext.len() {
                let (stride, extent) = (ext_stride[k], ext[k]);
                let block = stride * extent;
                for base in (0..ext_size).step_by(block) {
                    for j in 1..extent {
                        let row = base + j * stride;
                        for r in 0..stride {
                            scratch[row + r] += scratch[row - stride + r];
                        }
                    }
                }
            }
            if inner.is_empty() {
                out[0] = scratch[0] as Depth;
            } else {
                // Copy contiguous runs along the last dimension.
                let outer = &inner[..inner.len() - 1];
                let mut idx = vec![0usize; outer.len()];
                let mut dst = 0;
                loop {
                    let src: usize = idx.iter().zip(&ext_stride).map(|(i, s)| i * s).sum();
                    for (o, s) in out[dst..dst + last].iter_mut().zip(&scratch[src..src + last]) {
                        *o = *s as Depth;
                    }
                    dst += last;
                    let mut k = outer.len();
                    loop {
                        if k == 0 {
                            break;
                        }
                        k -= 1;
                        idx[k] += 1;
                        if idx[k] < outer[k] {
                            break;
                        }
                        idx[k] = 0;
                    }
                    if dst >= inner_size {
                        break;
                    }
                }
            }
            visit(slab, &out);
        }
        Ok(())
    }
}

/// Cumulative depth of every cell in row-major order (dimension 0 slowest).
pub fn compute_cell_depths(grid: &PixelGrid, forest: &Forest, max_cells: u128) -> Result<Vec<Depth>> {
    grid.check_size(max_cells)?;
    let mut depths = Vec::with_capacity(grid.cell_count() as usize);
    grid.sweep_depths(forest, |_, slab| depths.extend_from_slice(slab))?;
    Ok(depths)
}

/// Bit per grid cell, row-major with dimension 0 slowest.
#[derive(Debug, Clone, PartialEq)]
pub struct CellMask {
    shape: Vec<usize>,
    strides: Vec<usize>,
    len: usize,
    bits: Vec<u64>,
}

impl CellMask {
    pub fn new(shape: Vec<usize>) -> Self {
        let mut strides = vec![1usize; shape.len()];
        for k in (0..shape.len().saturating_sub(1)).rev() {
            strides[k] = strides[k + 1] * shape[k + 1];
        }
        let len: usize = shape.iter().product();
        Self {
            shape,
            strides,
            len,
            bits: vec![0; len.div_ceil(64)],
        }
    }

    pub fn from_depths(shape: Vec<usize>, depths: &[Depth], cutoff: Depth) -> Self {
        let mut mask = Self::new(shape);
        for (i, &d) in depths.iter().enumerate() {
            if d <= cutoff {
                mask.set(i);
            }
        }
        mask
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    #[inline]
    pub fn get(&self, i: usize) -> bool {
        self.bits[i / 64] >> (i % 64) & 1 == 1
    }

    #[inline]
    pub fn set(&mut self, i: usize) {
        self.bits[i / 64] |= 1 << (i % 64);
    }

    #[inline]
    fn clear(&mut self, i: usize) {
        self.bits[i / 64] &= !(1 << (i % 64));
    }

    pub fn count_ones(&self) -> usize {
        self.bits.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn index_of(&self, cell: &[usize]) -> usize {
        cell.iter().zip(&self.strides).map(|(c, s)| c * s).sum()
    }

    pub fn cell_of(&self, mut i: usize) -> Vec<usize> {
        self.strides
            .iter()
            .map(|s| {
                let c = i / s;
                i %= s;
                c
            })
            .collect()
    }

    /// Visits every cell of the box `[lo, hi)` until `f` returns false.
    fn all_in_box(&self, lo: &[usize], hi: &[usize], mut f: impl FnMut(usize) -> bool) -> bool {
        let d = self.shape.len();
        let mut cell = lo.to_vec();
        loop {
            if !f(self.index_of(&cell)) {
                return false;
            }
            let mut k = d;
            loop {
                if k == 0 {
                    return true;
                }
                k -= 1;
                cell[k] += 1;
                if cell[k] < hi[k] {
                    break;
                }
                cell[k] = lo[k];
            }
        }
    }
}

/// Marks every cell whose cumulative depth is at most `cutoff`.
pub fn extract_anomalous_cells(
    grid: &PixelGrid,
    forest: &Forest,
    cutoff: Depth,
    max_cells: u128,
) -> Result<CellMask> {
    grid.check_size(max_cells)?;
    let mut mask = CellMask::new(grid.shape());
    let slab_len = mask.len / grid.shape()[0];
    grid.sweep_depths(forest, |slab, depths| {
        let base = slab * slab_len;
        for (j, &d) in depths.iter().enumerate() {
            if d <= cutoff {
                mask.set(base + j);
            }
        }
    })?;
    Ok(mask)
}

/// Half-open box of grid cells.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CellBox {
    pub lo: Vec<u32>,
    pub hi: Vec<u32>,
}

/// Covers the set cells of `mask` with disjoint boxes.
///
/// Starting from the lexicographically smallest uncovered cell, grow the
/// largest cube of set cells anchored there and consume it; repeat. Then
/// merge boxes that share a whole face until none do.
pub fn consolidate_cells(mask: &CellMask) -> Vec<CellBox> {
    let d = mask.shape.len();
    let mut remaining = mask.clone();
    let mut boxes = Vec::new();
    let mut lo = vec![0usize; d];
    let mut hi = vec![0usize; d];
    for word in 0..remaining.bits.len() {
        while remaining.bits[word] != 0 {
            let i = word * 64 + remaining.bits[word].trailing_zeros() as usize;
            let anchor = remaining.cell_of(i);
            let mut side = 1usize;
            'grow: loop {
                if anchor.iter().zip(&mask.shape).any(|(a, n)| a + side >= *n) {
                    break;
                }
                for face in 0..d {
                    for k in 0..d {
                        lo[k] = anchor[k];
                        hi[k] = anchor[k] + side + 1;
                    }
                    lo[face] = anchor[face] + side;
                    if !remaining.all_in_box(&lo, &hi, |c| remaining.get(c)) {
                        break 'grow;
                    }
                }
                side += 1;
            }
            let end: Vec<usize> = anchor.iter().map(|a| a + side).collect();
            let mut cleared = Vec::new();
            remaining.all_in_box(&anchor, &end, |c| {
                cleared.push(c);
                true
            });
            for c in cleared {
                remaining.clear(c);
            }
            boxes.push(CellBox {
                lo: anchor.iter().map(|&a| a as u32).collect(),
                hi: end.iter().map(|&e| e as u32).collect(),
            });
        }
    }
    merge_faces(&mut boxes, d);
    boxes
}

fn merge_faces(boxes: &mut Vec<CellBox>, d: usize) {
    loop {
        let before = boxes.len();
        for axis in 0..d {
            boxes.sort_unstable_by(|a, b| {
                (0..d)
                    .filter(|&k| k != axis)
                    .map(|k| (a.lo[k], a.hi[k]).cmp(&(b.lo[k], b.hi[k])))
                    .find(|o| o.is_ne())
                    .unwrap_or(Ordering::Equal)
                    .then(a.lo[axis].cmp(&b.lo[axis]))
            });
            let mut out: Vec<CellBox> = Vec::with_capacity(boxes.len());
            for b in boxes.drain(..) {
                if let Some(last) = out.last_mut() {
                    let same_face = (0..d)
                        .filter(|&k| k != axis)
                        .all(|k| last.lo[k] == b.lo[k] && last.hi[k] == b.hi[k]);
                    if same_face && last.hi[axis] == b.lo[axis] {
                        last.hi[axis] = b.hi[axis];
                        continue;
                    }
                }
                out.push(b);
            }
            *boxes = out;
        }
        if boxes.len() == before {
            break;
        }
    }
}

/// Consolidates grid-aligned disjoint regions into fewer disjoint regions
/// covering the same set.
pub fn consolidate_rects(cells: &[Region]) -> Result<Vec<Region>> {
    let Some(first) = cells.first() else {
        return Ok(Vec::new());
    };
    let d = first.dims();
    let mut axes = Vec::with_capacity(d);
    for k in 0..d {
        let mut b: Vec<f64> = cells
            .iter()
            .flat_map(|r| [r.lo[k], r.hi[k]])
            .filter(|v| v.is_finite())
            .collect();
        b.sort_unstable_by(f64::total_cmp);
        b.dedup();
        axes.push(Axis::new(b)?);
    }
    let grid = PixelGrid::from_axes(axes)?;
    let mut mask = CellMask::new(grid.shape());
    for r in cells {
        if r.dims() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: r.dims(),
            });
        }
        let lo: Vec<usize> = (0..d).map(|k| grid.axes[k].locate(r.lo[k])).collect();
        let hi: Vec<usize> = (0..d)
            .map(|k| {
                if r.hi[k] == f64::INFINITY {
                    grid.axes[k].cells()
                } else {
                    grid.axes[k].locate(r.hi[k])
                }
            })
            .collect();
        let mut set = Vec::new();
        mask.all_in_box(&lo, &hi, |c| {
            set.push(c);
            true
        });
        for c in set {
            mask.set(c);
        }
    }
    Ok(consolidate_cells(&mask)
        .iter()
        .map(|b| grid.box_region(b))
        .collect())
}

/// Point-location index over disjoint boxes: a bounding-box tree split at
/// the median box centre.
#[derive(Debug, Clone)]
pub struct BoxIndex {
    boxes: Vec<Region>,
    order: Vec<u32>,
    nodes: Vec<IndexNode>,
}

#[derive(Debug, Clone)]
struct IndexNode {
    lo: Vec<f64>,
    hi: Vec<f64>,
    start: u32,
    end: u32,
    left: u32,
    right: u32,
}

const BUCKET: usize = 8;

impl BoxIndex {
    pub fn new(boxes: Vec<Region>) -> Self {
        let mut order: Vec<u32> = (0..boxes.len() as u32).collect();
        let mut nodes = Vec::new();
        if !boxes.is_empty() {
            Self::build(&boxes, &mut order, 0, &mut nodes);
        }
        Self {
            boxes,
            order,
            nodes,
        }
    }

    fn centre(r: &Region, k: usize) -> f64 {
        match (r.lo[k].is_finite(), r.hi[k].is_finite()) {
            (true, true) => r.lo[k] / 2.0 + r.hi[k] / 2.0,
            (true, false) => r.lo[k],
            (false, true) => r.hi[k],
            (false, false) => 0.0,
        }
    }

    fn build(boxes: &[Region], order: &mut [u32], offset: usize, nodes: &mut Vec<IndexNode>) -> u32 {
        let d = boxes[order[0] as usize].dims();
        let mut lo = vec![f64::INFINITY; d];
        let mut hi = vec![f64::NEG_INFINITY; d];
        for &i in order.iter() {
            let r = &boxes[i as usize];
            for k in 0..d {
                lo[k] = lo[k].min(r.lo[k]);
                hi[k] = hi[k].max(r.hi[k]);
            }
        }
        let at = nodes.len();
        nodes.push(IndexNode {
            lo,
            hi,
            start: offset as u32,
            end: (offset + order.len()) as u32,
            left: NIL,
            right: NIL,
        });
        if order.len() > BUCKET {
            let spread = |k: usize| {
                let (mn, mx) = order.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &i| {
                    let c = Self::centre(&boxes[i as usize], k);
                    (a.min(c), b.max(c))
                });
                mx - mn
            };
            let axis = (0..d)
                .max_by(|&a, &b| spread(a).total_cmp(&spread(b)))
                .unwrap_or(0);
            let half = order.len() / 2;
            order.select_nth_unstable_by(half, |&a, &b| {
                Self::centre(&boxes[a as usize], axis)
                    .total_cmp(&Self::centre(&boxes[b as usize], axis))
            });
            let (l, r) = order.split_at_mut(half);
            let left = Self::build(boxes, l, offset, nodes);
            let right = Self::build(boxes, r, offset + half, nodes);
            nodes[at].left = left;
            nodes[at].right = right;
        }
        at as u32
    }

    pub fn boxes(&self) -> &[Region] {
        &self.boxes
    }

    /// Index of the box containing `p`, if any.
    pub fn find(&self, p: &[f64]) -> Option<usize> {
        if self.nodes.is_empty() {
            return None;
        }
        let mut stack = [0u32; 128];
        let mut top = 1;
        while top > 0 {
            top -= 1;
            let n = &self.nodes[stack[top] as usize];
            let inside = p
                .iter()
                .zip(n.lo.iter().zip(&n.hi))
                .all(|(x, (l, h))| l <= x && x < h);
            if !inside {
                continue;
            }
            if n.left == NIL {
                for &i in &self.order[n.start as usize..n.end as usize] {
                    if self.boxes[i as usize].contains(p) {
                        return Some(i as usize);
                    }
                }
            } else {
                stack[top] = n.right;
                stack[top + 1] = n.left;
                top += 2;
            }
        }
        None
    }

    pub fn contains(&self, p: &[f64]) -> bool {
        self.find(p).is_some()
    }
}
