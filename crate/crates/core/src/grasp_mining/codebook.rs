//! K-means codebook over hand pose vectors.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub const DEFAULT_K: usize = 10;
pub const MAX_ITERATIONS: usize = 300;
pub const TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct Codebook {
    pub centers: Vec<Vec<f64>>,
    pub seed: u64,
}

impl Codebook {
    pub fn k(&self) -> usize {
        self.centers.len()
    }

    pub fn dim(&self) -> usize {
        self.centers.first().map_or(0, Vec::len)
    }
}

/// A finished k-means run with its objective after every assignment step.
#[derive(Debug, Clone)]
pub struct KMeansRun {
    pub codebook: Codebook,
    /// Sum of squared distances to the assigned center, one per iteration.
    pub objective: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Index of the nearest center; ties go to the lower index.
fn nearest(x: &[f64], centers: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centers.iter().enumerate() {
        let d = sq_dist(x, c);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

pub fn assign_code(theta: &[f64], codebook: &Codebook) -> Result<usize> {
    if codebook.centers.is_empty() {
        return Err(Error::Empty("codebook".into()));
    }
    if theta.len() != codebook.dim() {
        return Err(Error::DimensionMismatch {
            expected: codebook.dim(),
            actual: theta.len(),
        });
    }
    Ok(nearest(theta, &codebook.centers).0)
}

fn check_points(points: &[Vec<f64>], k: usize) -> Result<usize> {
    if k == 0 {
        return Err(Error::InvalidArgument("codebook size must be at least 1".into()));
    }
    let Some(first) = points.first() else {
        return Err(Error::Empty("pose vectors".into()));
    };
    if points.len() < k {
        return Err(Error::InvalidArgument(format!(
            "{} pose vectors cannot fill {k} codes",
            points.len()
        )));
    }
    let d = first.len();
    if d == 0 {
        return Err(Error::InvalidArgument("pose vectors are empty".into()));
    }
    for p in points {
        if p.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                actual: p.len(),
            });
        }
        if p.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("pose vector has a non-finite entry".into()));
        }
    }
    Ok(d)
}

/// First center drawn from the seed, then repeatedly the point farthest from
/// all chosen centers (lowest index on ties).
fn farthest_point_seeds(points: &[Vec<f64>], k: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let first = rng.gen_range(0..points.len());
    let mut centers = vec![points[first].clone()];
    let mut min_d: Vec<f64> = points.iter().map(|p| sq_dist(p, &points[first])).collect();
    while centers.len() < k {
        let mut pick = 0;
        for (i, &d) in min_d.iter().enumerate() {
            if d > min_d[pick] {
                pick = i;
            }
        }
        let c = points[pick].clone();
        for (m, p) in min_d.iter_mut().zip(points) {
            *m = m.min(sq_dist(p, &c));
        }
        centers.push(c);
    }
    centers
}

/// Lloyd iterations from farthest-point seeds until no center moves more
/// than [`TOLERANCE`] or [`MAX_ITERATIONS`] is reached. An emptied cluster
/// keeps its previous center.
pub fn kmeans(points: &[Vec<f64>], k: usize, seed: u64) -> Result<KMeansRun> {
    let d = check_points(points, k)?;
    let mut centers = farthest_point_seeds(points, k, seed);
    let mut objective = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    while iterations < MAX_ITERATIONS {
        iterations += 1;
        let mut sums = vec![vec![0.0; d]; k];
        let mut counts = vec![0usize; k];
        let mut total = 0.0;
        for p in points {
            let (j, dist) = nearest(p, &centers);
            total += dist;
            counts[j] += 1;
            for (s, v) in sums[j].iter_mut().zip(p) {
                *s += v;
            }
        }
        objective.push(total);
        let mut shift: f64 = 0.0;
        for j in 0..k {
            if counts[j] == 0 {
                continue;
            }
            let mean: Vec<f64> = sums[j].iter().map(|s| s / counts[j] as f64).collect();
            shift = shift.max(sq_dist(&mean, &centers[j]).sqrt());
            centers[j] = mean;
        }
        if shift <= TOLERANCE {
            converged = true;
            break;
        }
    }
    Ok(KMeansRun {
        codebook: Codebook { centers, seed },
        objective,
        iterations,
        converged,
    })
}

pub fn build_codebook(thetas: &[Vec<f64>], k: usize, seed: u64) -> Result<Codebook> {
    kmeans(thetas, k, seed).map(|run| run.codebook)
}

/// Text format: a `K D seed` header, then one line of `D` floats per center.
pub fn write_codebook<W: Write>(mut w: W, cb: &Codebook) -> std::io::Result<()> {
    writeln!(w, "{} {} {}", cb.k(), cb.dim(), cb.seed)?;
    for c in &cb.centers {
        let line: Vec<String> = c.iter().map(|v| v.to_string()).collect();
        writeln!(w, "{}", line.join(" "))?;
    }
    w.flush()
}

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

pub fn read_codebook<R: BufRead>(r: R) -> Result<Codebook> {
    let mut lines = r.lines().enumerate().filter_map(|(i, l)| match l {
        Ok(l) if l.trim().is_empty() => None,
        other => Some((i + 1, other)),
    });
    let (hl, header) = lines.next().ok_or_else(|| parse_err(1, "missing header"))?;
    let header = header.map_err(|e| parse_err(hl, e.to_string()))?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    let [k, d, seed] = fields[..] else {
        return Err(parse_err(hl, "header must be `K D seed`"));
    };
    let k: usize = k.parse().map_err(|_| parse_err(hl, format!("bad K {k:?}")))?;
    let d: usize = d.parse().map_err(|_| parse_err(hl, format!("bad D {d:?}")))?;
    let seed: u64 = seed.parse().map_err(|_| parse_err(hl, format!("bad seed {seed:?}")))?;
    if k == 0 || d == 0 {
        return Err(parse_err(hl, "K and D must be positive"));
    }
    let mut centers = Vec::with_capacity(k);
    for (line, text) in lines {
        let text = text.map_err(|e| parse_err(line, e.to_string()))?;
        let row = text
            .split_whitespace()
            .map(|t| match t.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => Err(parse_err(line, format!("bad value {t:?}"))),
            })
            .collect::<Result<Vec<f64>>>()?;
        if row.len() != d {
            return Err(parse_err(line, format!("expected {d} values, found {}", row.len())));
        }
        centers.push(row);
    }
    if centers.len() != k {
        return Err(parse_err(hl, format!("header says {k} centers, found {}", centers.len())));
    }
    Ok(Codebook { centers, seed })
}

pub fn save_codebook(path: &Path, cb: &Codebook) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_codebook(BufWriter::new(file), cb).map_err(|e| Error::io(path, e))
}

pub fn load_codebook(path: &Path) -> Result<Codebook> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_codebook(BufReader::new(file))
}
