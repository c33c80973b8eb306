//! The compiled specification: anomalous regions at a fixed cumulative-depth
//! cutoff, a lookup index over them, and a line-oriented text format.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::data::{format_float, Dataset};
use crate::error::{Error, Result};
use crate::forest::{Depth, Forest};
use crate::spec1d::{
    extract_anomalous_ranges, merge_range_lists, tree_to_ranges, Interval, RangeSearchTree,
};
use crate::specnd::{
    build_pixel_grid, consolidate_cells, extract_anomalous_cells, prune_forest, BoxIndex, Region,
    DEFAULT_MAX_CELLS,
};

/// Where a specification came from.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Provenance {
    pub seed: u64,
    pub tree_count: usize,
    pub sample_size: usize,
    /// Fingerprint of the training data, when known.
    pub source: Option<String>,
    /// Free-form creation parameters, emitted in key order.
    pub params: BTreeMap<String, String>,
}

#[derive(Debug, Clone)]
enum Lookup {
    Line(RangeSearchTree),
    Boxes(BoxIndex),
}

/// Disjoint anomalous regions with a point-location index.
#[derive(Debug, Clone)]
pub struct AnomalySpec {
    dims: usize,
    cutoff: Depth,
    regions: Vec<Region>,
    provenance: Provenance,
    lookup: Lookup,
}

impl PartialEq for AnomalySpec {
    fn eq(&self, other: &Self) -> bool {
        self.dims == other.dims
            && self.cutoff == other.cutoff
            && self.regions == other.regions
            && self.provenance == other.provenance
    }
}

impl AnomalySpec {
    /// One-dimensional regions are sorted and must not overlap. Higher
    /// dimensional regions are taken as given and assumed disjoint.
    pub fn new(
        dims: usize,
        cutoff: Depth,
        mut regions: Vec<Region>,
        provenance: Provenance,
    ) -> Result<Self> {
        if dims == 0 {
            return Err(Error::InvalidArgument("dims must be at least 1".into()));
        }
        for r in &regions {
            if r.dims() != dims {
                return Err(Error::DimensionMismatch {
                    expected: dims,
                    got: r.dims(),
                });
            }
            if r.lo.iter().zip(&r.hi).any(|(l, h)| l.partial_cmp(h) != Some(Ordering::Less)) {
                return Err(Error::InvalidArgument(format!(
                    "empty region {:?}..{:?}",
                    r.lo, r.hi
                )));
            }
        }
        let lookup = if dims == 1 {
            regions.sort_by(|a, b| a.lo[0].total_cmp(&b.lo[0]));
            if let Some(w) = regions.windows(2).find(|w| w[0].hi[0] > w[1].lo[0]) {
                return Err(Error::InvalidArgument(format!(
                    "overlapping ranges [{}, {}) and [{}, {})",
                    w[0].lo[0], w[0].hi[0], w[1].lo[0], w[1].hi[0]
                )));
            }
            let intervals: Vec<Interval> = regions
                .iter()
                .map(|r| Interval {
                    from: r.lo[0],
                    to: r.hi[0],
                })
                .collect();
            Lookup::Line(RangeSearchTree::new(&intervals))
        } else {
            Lookup::Boxes(BoxIndex::new(regions.clone()))
        };
        Ok(Self {
            dims,
            cutoff,
            regions,
            provenance,
            lookup,
        })
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn cutoff(&self) -> Depth {
        self.cutoff
    }

    pub fn regions(&self) -> &[Region] {
        &self.regions
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn is_anomalous(&self, p: &[f64]) -> Result<bool> {
        if p.len() != self.dims {
            return Err(Error::DimensionMismatch {
                expected: self.dims,
                got: p.len(),
            });
        }
        Ok(self.lookup_unchecked(p))
    }

    #[inline]
    fn lookup_unchecked(&self, p: &[f64]) -> bool {
        match &self.lookup {
            Lookup::Line(tree) => tree.contains(p[0]),
            Lookup::Boxes(index) => index.contains(p),
        }
    }

    /// Label per point, `true` for anomalous.
    pub fn classify(&self, data: &Dataset) -> Result<Vec<bool>> {
        if data.dims() != self.dims {
            return Err(Error::DimensionMismatch {
                expected: self.dims,
                got: data.dims(),
            });
        }
        Ok(data.points().map(|p| self.lookup_unchecked(p)).collect())
    }

    pub fn to_text(&self) -> String {
        let p = &self.provenance;
        let mut out = String::new();
        let _ = writeln!(out, "dims {}", self.dims);
        let _ = writeln!(out, "cutoff {}", self.cutoff);
        let _ = writeln!(out, "seed {}", p.seed);
        let _ = writeln!(out, "trees {}", p.tree_count);
        let _ = writeln!(out, "sample {}", p.sample_size);
        if let Some(source) = &p.source {
            let _ = writeln!(out, "source {source}");
        }
        for (k, v) in &p.params {
            let _ = writeln!(out, "param {k} {v}");
        }
        for r in &self.regions {
            let mut first = true;
            for (l, h) in r.lo.iter().zip(&r.hi) {
                let sep = if first { "" } else { " " };
                let _ = write!(out, "{sep}{} {}", format_float(*l), format_float(*h));
                first = false;
            }
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut dims = None;
        let mut cutoff = None;
        let mut provenance = Provenance::default();
        let (mut seed, mut trees, mut sample) = (None, None, None);
        let mut regions = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.trim();
            if line.is_empty() {
                continue;
            }
            let mut tokens = line.split_whitespace();
            let key = tokens.next().unwrap_or_default();
            let mut single = |what: &str| -> Result<&str> {
                let value = tokens
                    .next()
                    .ok_or_else(|| Error::parse(line_no, format!("missing value for {what}")))?;
                Ok(value)
            };
            match key {
                "dims" => dims = Some(parse_int::<usize>(single("dims")?, line_no)?),
                "cutoff" => cutoff = Some(parse_int::<Depth>(single("cutoff")?, line_no)?),
                "seed" => seed = Some(parse_int::<u64>(single("seed")?, line_no)?),
                "trees" => trees = Some(parse_int::<usize>(single("trees")?, line_no)?),
                "sample" => sample = Some(parse_int::<usize>(single("sample")?, line_no)?),
                "source" => provenance.source = Some(single("source")?.to_string()),
                "param" => {
                    let name = single("param")?.to_string();
                    let value = line
                        .splitn(3, char::is_whitespace)
                        .nth(2)
                        .map(str::trim)
                        .unwrap_or_default()
                        .to_string();
                    provenance.params.insert(name, value);
                }
                _ => {
                    let d = dims.ok_or_else(|| Error::parse(line_no, "region before dims"))?;
                    let values = line
                        .split_whitespace()
                        .map(|t| {
                            t.parse::<f64>()
                                .ok()
                                .filter(|v| !v.is_nan())
                                .ok_or_else(|| Error::parse(line_no, format!("bad number {t:?}")))
                        })
                        .collect::<Result<Vec<f64>>>()?;
                    if values.len() != 2 * d {
                        return Err(Error::parse(
                            line_no,
                            format!("expected {} bounds, got {}", 2 * d, values.len()),
                        ));
                    }
                    let lo = values.iter().step_by(2).copied().collect();
                    let hi = values.iter().skip(1).step_by(2).copied().collect();
                    let region = Region::new(lo, hi).map_err(|e| Error::parse(line_no, e.to_string()))?;
                    regions.push(region);
                    continue;
                }
            }
            if tokens.next().is_some() && key != "param" {
                return Err(Error::parse(line_no, format!("trailing tokens after {key}")));
            }
        }
        let missing = |what: &str| Error::parse(0, format!("missing {what} header"));
        provenance.seed = seed.ok_or_else(|| missing("seed"))?;
        provenance.tree_count = trees.ok_or_else(|| missing("trees"))?;
        provenance.sample_size = sample.ok_or_else(|| missing("sample"))?;
        Self::new(
            dims.ok_or_else(|| missing("dims"))?,
            cutoff.ok_or_else(|| missing("cutoff"))?,
            regions,
            provenance,
        )
    }
}

fn parse_int<T: std::str::FromStr>(token: &str, line: usize) -> Result<T> {
    token
        .parse()
        .map_err(|_| Error::parse(line, format!("bad integer {token:?}")))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompileOptions {
    /// Minimum cell width per dimension; narrower cells are merged and cell
    /// depths become approximate.
    pub min_cell: Option<Vec<f64>>,
    /// Prune the forest with this depth bound before compiling. Must be at
    /// least the cutoff for the result to stay exact.
    pub prune_bound: Option<Depth>,
    /// Allow more than three dimensions.
    pub force: bool,
    pub max_cells: u128,
}

impl Default for CompileOptions {
    fn default() -> Self {
        Self {
            min_cell: None,
            prune_bound: None,
            force: false,
            max_cells: DEFAULT_MAX_CELLS,
        }
    }
}

/// Compiles the anomalous space of `forest` at `cutoff` into explicit regions.
pub fn compile_spec(forest: &Forest, cutoff: Depth, options: &CompileOptions) -> Result<AnomalySpec> {
    let dims = forest.dims();
    if dims > 3 && !options.force {
        return Err(Error::IntractableDimensionality(dims));
    }
    let pruned;
    let forest_used = match options.prune_bound {
        Some(bound) => {
            pruned = prune_forest(forest, bound);
            &pruned
        }
        None => forest,
    };
    let mut params = BTreeMap::new();
    if let Some(m) = &options.min_cell {
        let text: Vec<String> = m.iter().map(|v| format_float(*v)).collect();
        params.insert("min_cell".to_string(), text.join(","));
    }
    if let Some(bound) = options.prune_bound {
        params.insert("prune_bound".to_string(), bound.to_string());
    }
    let regions = if dims == 1 {
        let lists = forest_used
            .trees()
            .iter()
            .map(tree_to_ranges)
            .collect::<Result<Vec<_>>>()?;
        let merged = merge_range_lists(&lists)?;
        let anomalous = extract_anomalous_ranges(&merged, cutoff);
        anomalous
            .intervals
            .iter()
            .map(|iv| Region {
                lo: vec![iv.from],
                hi: vec![iv.to],
            })
            .collect()
    } else {
        let grid = build_pixel_grid(forest_used, options.min_cell.as_deref())?;
        if grid.is_merged() {
            params.insert("approximate".to_string(), "true".to_string());
        }
        let mask = extract_anomalous_cells(&grid, forest_used, cutoff, options.max_cells)?;
        consolidate_cells(&mask)
            .iter()
            .map(|b| grid.box_region(b))
            .collect()
    };
    let source = (!forest.source().is_empty()).then(|| forest.source().to_string());
    AnomalySpec::new(
        dims,
        cutoff,
        regions,
        Provenance {
            seed: forest.seed(),
            tree_count: forest.tree_count(),
            sample_size: forest.sample_size(),
            source,
            params,
        },
    )
}
