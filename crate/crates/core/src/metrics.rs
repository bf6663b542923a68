//! Distribution distances for terminal samples.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::state::squared_distance;

/// 2-Wasserstein distance between diagonal Gaussians.
pub fn gaussian_w2(mean1: &[f64], var1: &[f64], mean2: &[f64], var2: &[f64]) -> Result<f64> {
    let d = mean1.len();
    if var1.len() != d || mean2.len() != d || var2.len() != d {
        return Err(Error::Shape(format!(
            "gaussian_w2 dimensions differ: {} / {} / {} / {}",
            d,
            var1.len(),
            mean2.len(),
            var2.len()
        )));
    }
    if var1.iter().chain(var2).any(|v| !(*v >= 0.0)) {
        return Err(Error::Contract("gaussian_w2 needs nonnegative variances".into()));
    }
    let mean_part = squared_distance(mean1, mean2);
    let sd_part: f64 = var1.iter().zip(var2).map(|(a, b)| (a.sqrt() - b.sqrt()).powi(2)).sum();
    Ok((mean_part + sd_part).sqrt())
}

/// Per-dimension sample mean and unbiased variance.
pub fn empirical_moments(samples: &[Vec<f64>]) -> Result<(Vec<f64>, Vec<f64>)> {
    if samples.len() < 2 {
        return Err(Error::Contract("moments need at least two samples".into()));
    }
    let d = samples[0].len();
    if samples.iter().any(|s| s.len() != d) {
        return Err(Error::Shape("samples differ in length".into()));
    }
    let n = samples.len() as f64;
    let mut mean = vec![0.0; d];
    for s in samples {
        for (m, x) in mean.iter_mut().zip(s) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = vec![0.0; d];
    for s in samples {
        for ((v, x), m) in var.iter_mut().zip(s).zip(&mean) {
            *v += (x - m) * (x - m);
        }
    }
    var.iter_mut().for_each(|v| *v /= n - 1.0);
    Ok((mean, var))
}

fn rbf(x: &[f64], y: &[f64], bandwidth: f64) -> f64 {
    (-squared_distance(x, y) / (2.0 * bandwidth * bandwidth)).exp()
}

fn mean_kernel(a: &[Vec<f64>], b: &[Vec<f64>], bandwidth: f64) -> f64 {
    let mut total = 0.0;
    for x in a {
        for y in b {
            total += rbf(x, y, bandwidth);
        }
    }
    total / (a.len() * b.len()) as f64
}

/// Biased (V-statistic) RBF-kernel MMD, returned as `√max(0, MMD²)`.
pub fn mmd_rbf(p: &[Vec<f64>], q: &[Vec<f64>], bandwidth: f64) -> Result<f64> {
    if p.is_empty() || q.is_empty() {
        return Err(Error::Contract("mmd_rbf needs two nonempty sample sets".into()));
    }
    if !(bandwidth > 0.0 && bandwidth.is_finite()) {
        return Err(Error::Contract(format!("bandwidth must be positive, got {bandwidth}")));
    }
    let d = p[0].len();
    if p.iter().chain(q).any(|v| v.len() != d) {
        return Err(Error::Shape("mmd_rbf samples differ in length".into()));
    }
    let mmd2 = mean_kernel(p, p, bandwidth) + mean_kernel(q, q, bandwidth) - 2.0 * mean_kernel(p, q, bandwidth);
    Ok(mmd2.max(0.0).sqrt())
}

/// Median pairwise distance over the pooled samples, or 1 when every
/// distance is zero.
pub fn median_bandwidth(p: &[Vec<f64>], q: &[Vec<f64>]) -> f64 {
    let pooled: Vec<&Vec<f64>> = p.iter().chain(q).collect();
    let mut d: Vec<f64> = Vec::new();
    for i in 0..pooled.len() {
        for j in (i + 1)..pooled.len() {
            d.push(squared_distance(pooled[i], pooled[j]).sqrt());
        }
    }
    d.retain(|v| *v > 0.0);
    if d.is_empty() {
        return 1.0;
    }
    d.sort_by(f64::total_cmp);
    let m = d.len();
    if m % 2 == 1 {
        d[m / 2]
    } else {
        0.5 * (d[m / 2 - 1] + d[m / 2])
    }
}

/// Rounds a flattened `n×n` edge part to 0/1 at 0.5.
pub fn threshold_adjacency(edge: &[f64]) -> Vec<f64> {
    edge.iter().map(|&v| if v >= 0.5 { 1.0 } else { 0.0 }).collect()
}

fn side(adj: &[f64]) -> Result<usize> {
    let n = (adj.len() as f64).sqrt().round() as usize;
    if n * n != adj.len() {
        return Err(Error::Shape(format!("{} entries do not form a square matrix", adj.len())));
    }
    Ok(n)
}

fn check_adjacency(adj: &[f64]) -> Result<usize> {
    let n = side(adj)?;
    for i in 0..n {
        for j in 0..n {
            let v = adj[i * n + j];
            if v != 0.0 && v != 1.0 {
                return Err(Error::Shape(format!("adjacency entry ({i},{j}) = {v} is not 0/1")));
            }
            if v != adj[j * n + i] {
                return Err(Error::Shape(format!("adjacency is asymmetric at ({i},{j})")));
            }
        }
    }
    Ok(n)
}

/// Node counts per degree `0..len`, ignoring self loops.
pub fn degree_histogram(adj: &[f64], len: usize) -> Result<Vec<f64>> {
    let n = check_adjacency(adj)?;
    let mut hist = vec![0.0; len.max(n)];
    for i in 0..n {
        let deg = (0..n).filter(|&j| j != i && adj[i * n + j] == 1.0).count();
        hist[deg] += 1.0;
    }
    Ok(hist)
}

/// Ascending eigenvalues of `L = D − A`, zero-padded to `len`.
pub fn laplacian_spectrum(adj: &[f64], len: usize) -> Result<Vec<f64>> {
    let n = check_adjacency(adj)?;
    let mut l = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            if i != j && adj[i * n + j] == 1.0 {
                l[(i, j)] = -1.0;
                l[(i, i)] += 1.0;
            }
        }
    }
    let mut ev: Vec<f64> = SymmetricEigen::new(l).eigenvalues.iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev.resize(len.max(n), 0.0);
    Ok(ev)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GraphMmd {
    pub mmd_degree: f64,
    pub mmd_spectral: f64,
    pub bandwidth_degree: f64,
    pub bandwidth_spectral: f64,
}

/// Degree-histogram and Laplacian-spectrum MMD between two sets of 0/1
/// adjacency matrices. `bandwidth = None` uses the median heuristic per
/// feature.
pub fn graph_summary_mmd(generated: &[Vec<f64>], reference: &[Vec<f64>], bandwidth: Option<f64>) -> Result<GraphMmd> {
    let mut len = 0;
    for a in generated.iter().chain(reference) {
        len = len.max(check_adjacency(a)?);
    }
    let feats = |set: &[Vec<f64>], f: fn(&[f64], usize) -> Result<Vec<f64>>| -> Result<Vec<Vec<f64>>> {
        set.iter().map(|a| f(a, len)).collect()
    };
    let (dg, dr) = (feats(generated, degree_histogram)?, feats(reference, degree_histogram)?);
    let (sg, sr) = (feats(generated, laplacian_spectrum)?, feats(reference, laplacian_spectrum)?);
    let bw_d = bandwidth.unwrap_or_else(|| median_bandwidth(&dg, &dr));
    let bw_s = bandwidth.unwrap_or_else(|| median_bandwidth(&sg, &sr));
    Ok(GraphMmd {
        mmd_degree: mmd_rbf(&dg, &dr, bw_d)?,
        mmd_spectral: mmd_rbf(&sg, &sr, bw_s)?,
        bandwidth_degree: bw_d,
        bandwidth_spectral: bw_s,
    })
}
