//! Seeded synthetic experiment generators, rotations and PPM ingestion.
//!
//! Every point is independently anomalous with probability `anomaly_rate`.

use std::io::Read;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::Dataset;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub data: Dataset,
    /// `true` for injected anomalies.
    pub labels: Vec<bool>,
    pub experiment: u8,
    pub seed: u64,
}

/// Dimensionality of the points produced by an experiment generator.
pub fn experiment_dims(id: u8) -> Result<usize> {
    match id {
        1 | 2 => Ok(1),
        3..=9 => Ok(2),
        _ => Err(Error::InvalidArgument(format!("unknown experiment {id}"))),
    }
}

pub fn gen_experiment(id: u8, n: usize, anomaly_rate: f64, seed: u64) -> Result<LabeledDataset> {
    let dims = experiment_dims(id)?;
    if n == 0 {
        return Err(Error::InvalidArgument("n must be at least 1".into()));
    }
    if !(0.0..1.0).contains(&anomaly_rate) {
        return Err(Error::InvalidArgument(format!(
            "anomaly rate {anomaly_rate} outside [0, 1)"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut values = Vec::with_capacity(n * dims);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let anomalous = rng.gen_bool(anomaly_rate);
        labels.push(anomalous);
        match id {
            1 => values.push(exp1_point(&mut rng, anomalous)),
            2 => values.push(exp2_point(&mut rng, anomalous)),
            3..=5 => values.extend(square_point(&mut rng, anomalous)),
            6 => values.extend(sign_point(&mut rng, anomalous, 0.0)),
            7 => values.extend(sign_point(&mut rng, anomalous, 0.5)),
            8 => values.extend(sign_point(&mut rng, anomalous, 0.5).map(|v| 1.0 / v)),
            9 => values.extend(ring_point(&mut rng, anomalous)),
            _ => unreachable!(),
        }
    }
    let mut data = Dataset::new(dims, values)?;
    if id == 4 {
        data = rotate(&data, &[(0, 1, 45.0)])?;
    }
    Ok(LabeledDataset {
        data,
        labels,
        experiment: id,
        seed,
    })
}

fn random_sign<R: Rng>(rng: &mut R) -> f64 {
    if rng.gen_bool(0.5) {
        1.0
    } else {
        -1.0
    }
}

fn exp1_point<R: Rng>(rng: &mut R, anomalous: bool) -> f64 {
    if anomalous {
        // Uniform over [-1.5, -1) ∪ [-0.5, 0.5) ∪ [1, 1.5), total length 2.
        let u = rng.gen_range(0.0..2.0);
        if u < 0.5 {
            -1.5 + u
        } else if u < 1.5 {
            u - 1.0
        } else {
            u - 0.5
        }
    } else {
        random_sign(rng) * rng.gen_range(0.5..1.0)
    }
}

fn exp2_point<R: Rng>(rng: &mut R, anomalous: bool) -> f64 {
    let magnitude = if anomalous {
        rng.gen_range(2.0..100.0)
    } else {
        rng.gen_range(0.5..1.0)
    };
    random_sign(rng) * magnitude
}

fn square_point<R: Rng>(rng: &mut R, anomalous: bool) -> [f64; 2] {
    if !anomalous {
        return [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
    }
    loop {
        let p: [f64; 2] = [rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)];
        if p[0].abs() > 1.0 || p[1].abs() > 1.0 {
            return p;
        }
    }
}

fn sign_point<R: Rng>(rng: &mut R, anomalous: bool, min_magnitude: f64) -> [f64; 2] {
    let sign = random_sign(rng);
    let mut p = [
        sign * rng.gen_range(min_magnitude..2.0),
        sign * rng.gen_range(min_magnitude..2.0),
    ];
    if anomalous {
        let k = rng.gen_range(0..2);
        p[k] = -p[k];
    }
    p
}

fn ring_point<R: Rng>(rng: &mut R, anomalous: bool) -> [f64; 2] {
    // Squared radius uniform on an interval gives points uniform by area.
    let r2 = if !anomalous {
        rng.gen_range(1.0..4.0)
    } else if rng.gen_bool(0.5) {
        rng.gen_range(0.0..1.0)
    } else {
        rng.gen_range(4.0..9.0)
    };
    let theta = rng.gen_range(0.0..std::f64::consts::TAU);
    let r: f64 = f64::sqrt(r2);
    [r * theta.cos(), r * theta.sin()]
}

/// Ground-truth membership: whether `p` lies outside experiment `id`'s
/// normal region.
pub fn is_outside_normal(id: u8, p: &[f64]) -> Result<bool> {
    let dims = experiment_dims(id)?;
    if p.len() != dims {
        return Err(Error::DimensionMismatch {
            expected: dims,
            got: p.len(),
        });
    }
    Ok(match id {
        1 | 2 => !(0.5..=1.0).contains(&p[0].abs()),
        3 | 5 => p[0].abs() > 1.0 || p[1].abs() > 1.0,
        4 => {
            let back = rotate_point(p, &[(0, 1, -45.0)]);
            back[0].abs() > 1.0 || back[1].abs() > 1.0
        }
        6..=8 => (p[0] < 0.0) != (p[1] < 0.0),
        9 => {
            let r2 = p[0] * p[0] + p[1] * p[1];
            !(1.0..=4.0).contains(&r2)
        }
        _ => unreachable!(),
    })
}

/// Rotation by `degrees` within the plane of axes `(i, j)`.
pub type PlaneRotation = (usize, usize, f64);

fn rotate_point(p: &[f64], planes: &[PlaneRotation]) -> Vec<f64> {
    let mut q = p.to_vec();
    for &(i, j, degrees) in planes {
        let (s, c) = degrees.to_radians().sin_cos();
        let (x, y) = (q[i], q[j]);
        q[i] = c * x - s * y;
        q[j] = s * x + c * y;
    }
    q
}

/// Applies the plane rotations in order to every point.
pub fn rotate(data: &Dataset, planes: &[PlaneRotation]) -> Result<Dataset> {
    for &(i, j, degrees) in planes {
        if i == j || i >= data.dims() || j >= data.dims() || !degrees.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "bad rotation plane ({i}, {j}) by {degrees} in {} dims",
                data.dims()
            )));
        }
    }
    let values = data.points().flat_map(|p| rotate_point(p, planes)).collect();
    Dataset::new(data.dims(), values)
}

/// Inverse of [`rotate`] for the same plane list.
pub fn unrotate(data: &Dataset, planes: &[PlaneRotation]) -> Result<Dataset> {
    let inverse: Vec<PlaneRotation> = planes.iter().rev().map(|&(i, j, d)| (i, j, -d)).collect();
    rotate(data, &inverse)
}

/// Reads an 8-bit P3 or P6 image as one `[r, g, b]` point per pixel,
/// row-major.
pub fn ingest_ppm<R: Read>(mut reader: R) -> Result<Dataset> {
    let mut bytes = Vec::new();
    reader.read_to_end(&mut bytes)?;
    let mut pos = 0usize;

    fn bad(msg: impl Into<String>) -> Error {
        Error::InvalidArgument(format!("malformed ppm: {}", msg.into()))
    }
    let token = |pos: &mut usize| -> Result<String> {
        loop {
            while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
                *pos += 1;
            }
            if *pos < bytes.len() && bytes[*pos] == b'#' {
                while *pos < bytes.len() && bytes[*pos] != b'\n' {
                    *pos += 1;
                }
                continue;
            }
            break;
        }
        let start = *pos;
        while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() && bytes[*pos] != b'#' {
            *pos += 1;
        }
        if start == *pos {
            return Err(bad("unexpected end of header"));
        }
        Ok(String::from_utf8_lossy(&bytes[start..*pos]).into_owned())
    };
    let magic = token(&mut pos)?;
    let number = |t: String| t.parse::<usize>().map_err(|_| bad(format!("bad number {t:?}")));
    let width = number(token(&mut pos)?)?;
    let height = number(token(&mut pos)?)?;
    let maxval = number(token(&mut pos)?)?;
    if maxval == 0 || maxval > 255 {
        return Err(bad(format!("unsupported maxval {maxval}")));
    }
    let count = width
        .checked_mul(height)
        .and_then(|p| p.checked_mul(3))
        .ok_or_else(|| bad("image too large"))?;
    if count == 0 {
        return Err(Error::EmptyInput);
    }
    let mut values = Vec::with_capacity(count);
    match magic.as_str() {
        "P3" => {
            for _ in 0..count {
                let v = number(token(&mut pos).map_err(|_| bad("truncated payload"))?)?;
                if v > maxval {
                    return Err(bad(format!("sample {v} exceeds maxval {maxval}")));
                }
                values.push(v as f64);
            }
        }
        "P6" => {
            // Exactly one whitespace byte separates the header from the raster.
            pos += 1;
            let raster = bytes
                .get(pos..pos + count)
                .ok_or_else(|| bad("truncated payload"))?;
            values.extend(raster.iter().map(|&b| f64::from(b)));
        }
        other => return Err(bad(format!("unsupported magic {other:?}"))),
    }
    Dataset::new(3, values)
}
