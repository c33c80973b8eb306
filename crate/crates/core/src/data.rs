//! Flat point storage plus the CSV formats used for datasets and label files.
//!
//! Dataset CSV: a header line `dims=<d>`, then one point per line with `d`
//! comma-separated coordinates and an optional trailing `0`/`1` label.
//! Label CSV: a header line `label`, then one `0`/`1` per line.

use std::io::{BufRead, Write};

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// A set of `len` points of constant dimensionality stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    dims: usize,
    values: Vec<f64>,
}

impl Dataset {
    pub fn new(dims: usize, values: Vec<f64>) -> Result<Self> {
        if dims == 0 {
            return Err(Error::InvalidArgument("dims must be at least 1".into()));
        }
        if !values.len().is_multiple_of(dims) {
            return Err(Error::InvalidArgument(format!(
                "{} values do not divide into points of {} dims",
                values.len(),
                dims
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                point: pos / dims,
                dim: pos % dims,
            });
        }
        Ok(Self { dims, values })
    }

    pub fn from_points<P: AsRef<[f64]>>(points: &[P]) -> Result<Self> {
        let dims = points.first().ok_or(Error::EmptyInput)?.as_ref().len();
        let mut values = Vec::with_capacity(points.len() * dims);
        for p in points {
            let p = p.as_ref();
            if p.len() != dims {
                return Err(Error::DimensionMismatch {
                    expected: dims,
                    got: p.len(),
                });
            }
            values.extend_from_slice(p);
        }
        Self::new(dims, values)
    }

    /// One-dimensional dataset from scalar values.
    pub fn from_scalars(values: &[f64]) -> Result<Self> {
        Self::new(1, values.to_vec())
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn len(&self) -> usize {
        self.values.len() / self.dims
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.values[i * self.dims..(i + 1) * self.dims]
    }

    pub fn points(&self) -> std::slice::ChunksExact<'_, f64> {
        self.values.chunks_exact(self.dims)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn select(&self, indices: &[usize]) -> Dataset {
        let mut values = Vec::with_capacity(indices.len() * self.dims);
        for &i in indices {
            values.extend_from_slice(self.point(i));
        }
        Dataset {
            dims: self.dims,
            values,
        }
    }

    /// Per-dimension `(min, max)` over all points.
    pub fn bounds(&self) -> Option<Vec<(f64, f64)>> {
        if self.is_empty() {
            return None;
        }
        let mut b: Vec<(f64, f64)> = self.point(0).iter().map(|&v| (v, v)).collect();
        for p in self.points() {
            for (k, &v) in p.iter().enumerate() {
                b[k].0 = b[k].0.min(v);
                b[k].1 = b[k].1.max(v);
            }
        }
        Some(b)
    }

    /// Short hex digest of the dimensionality and coordinate bits.
    pub fn fingerprint(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update((self.dims as u64).to_le_bytes());
        for v in &self.values {
            hasher.update(v.to_bits().to_le_bytes());
        }
        let digest = hasher.finalize();
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Reads a dataset CSV. Returns the labels when every data line carries one.
pub fn read_dataset_csv<R: BufRead>(reader: R) -> Result<(Dataset, Option<Vec<bool>>)> {
    let mut lines = reader.lines().enumerate();
    let (_, header) = lines.next().ok_or(Error::EmptyInput)?;
    let header = header?;
    let dims: usize = header
        .trim()
        .strip_prefix("dims=")
        .and_then(|d| d.trim().parse().ok())
        .filter(|&d| d >= 1)
        .ok_or_else(|| Error::parse(1, "expected header `dims=<d>`"))?;

    let mut values = Vec::new();
    let mut labels = Vec::new();
    let mut labelled: Option<bool> = None;
    for (i, line) in lines {
        let line = line?;
        let line_no = i + 1;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let has_label = match fields.len() {
            n if n == dims => false,
            n if n == dims + 1 => true,
            n => {
                return Err(Error::parse(
                    line_no,
                    format!("expected {dims} or {} fields, found {n}", dims + 1),
                ))
            }
        };
        match labelled {
            None => labelled = Some(has_label),
            Some(l) if l != has_label => {
                return Err(Error::parse(line_no, "inconsistent label column"))
            }
            _ => {}
        }
        for f in &fields[..dims] {
            let v: f64 = f
                .parse()
                .map_err(|_| Error::parse(line_no, format!("invalid number `{f}`")))?;
            if !v.is_finite() {
                return Err(Error::parse(line_no, "non-finite coordinate"));
            }
            values.push(v);
        }
        if has_label {
            labels.push(parse_label(fields[dims], line_no)?);
        }
    }
    if values.is_empty() {
        return Err(Error::EmptyInput);
    }
    let data = Dataset::new(dims, values)?;
    Ok((data, labelled.unwrap_or(false).then_some(labels)))
}

/// Shortest text that parses back to exactly `v`, in plain or scientific
/// notation, whichever is shorter.
pub fn format_float(v: f64) -> String {
    let plain = v.to_string();
    let sci = format!("{v:e}");
    if sci.len() < plain.len() {
        sci
    } else {
        plain
    }
}

pub fn write_dataset_csv<W: Write>(
    mut out: W,
    data: &Dataset,
    labels: Option<&[bool]>,
) -> Result<()> {
    writeln!(out, "dims={}", data.dims())?;
    let mut line = String::new();
    for (i, p) in data.points().enumerate() {
        line.clear();
        for (k, v) in p.iter().enumerate() {
            if k > 0 {
                line.push(',');
            }
            line.push_str(&format_float(*v));
        }
        if let Some(labels) = labels {
            line.push_str(if labels[i] { ",1" } else { ",0" });
        }
        writeln!(out, "{line}")?;
    }
    Ok(())
}

/// Reads labels from either a label CSV or a labelled dataset CSV.
pub fn read_labels_csv<R: BufRead>(reader: R) -> Result<Vec<bool>> {
    let mut lines = reader.lines();
    let header = lines.next().ok_or(Error::EmptyInput)??;
    let header = header.trim();
    if header.starts_with("dims=") {
        let text: String = std::iter::once(Ok(header.to_string()))
            .chain(lines)
            .collect::<std::io::Result<Vec<_>>>()?
            .join("\n");
        let (_, labels) = read_dataset_csv(text.as_bytes())?;
        return labels.ok_or_else(|| Error::parse(2, "dataset has no label column"));
    }
    if header != "label" {
        return Err(Error::parse(1, "expected header `label` or `dims=<d>`"));
    }
    let mut labels = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        labels.push(parse_label(line, i + 2)?);
    }
    Ok(labels)
}

pub fn write_labels_csv<W: Write>(mut out: W, labels: &[bool]) -> Result<()> {
    writeln!(out, "label")?;
    for &l in labels {
        writeln!(out, "{}", u8::from(l))?;
    }
    Ok(())
}

fn parse_label(field: &str, line: usize) -> Result<bool> {
    match field {
        "0" => Ok(false),
        "1" => Ok(true),
        other => Err(Error::parse(line, format!("invalid label `{other}`"))),
    }
}
