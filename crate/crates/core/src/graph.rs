//! Dynamic geometric graphs and the six centrality measures used for driver
//! behavior profiling.
//!
//! Power and Katz series run on the normalized adjacency `A / r`, whose
//! entries lie in `(0, 1]`.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use crate::error::{DataError, Result};
use crate::types::Vec2;

/// Distance-weighted proximity graph of one frame.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dgg {
    n: usize,
    /// Row-major `n × n`.
    adjacency: Vec<f64>,
    r: f64,
}

impl Dgg {
    pub fn from_positions(positions: &[Vec2], r: f64) -> Result<Self> {
        if !(r > 0.0) {
            return Err(DataError::Invalid(format!("radius must be positive, got {r}")));
        }
        let n = positions.len();
        let mut adjacency = vec![0.0; n * n];
        for i in 0..n {
            for j in (i + 1)..n {
                let d = (positions[i] - positions[j]).norm();
                if d == 0.0 {
                    return Err(DataError::DegeneratePair);
                }
                if d <= r {
                    adjacency[i * n + j] = d;
                    adjacency[j * n + i] = d;
                }
            }
        }
        Ok(Self { n, adjacency, r })
    }

    /// Builds a graph from an explicit symmetric weight matrix.
    pub fn from_adjacency(n: usize, adjacency: Vec<f64>, r: f64) -> Result<Self> {
        if adjacency.len() != n * n {
            return Err(DataError::Invalid(format!("adjacency has {} entries, expected {}", adjacency.len(), n * n)));
        }
        for i in 0..n {
            if adjacency[i * n + i] != 0.0 {
                return Err(DataError::Invalid("adjacency diagonal must be zero".into()));
            }
            for j in 0..n {
                let w = adjacency[i * n + j];
                if w != adjacency[j * n + i] || !(0.0..=r).contains(&w) {
                    return Err(DataError::Invalid(format!("bad adjacency entry ({i},{j}) = {w}")));
                }
            }
        }
        Ok(Self { n, adjacency, r })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn radius(&self) -> f64 {
        self.r
    }

    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.adjacency[i * self.n + j]
    }

    pub fn adjacency(&self) -> &[f64] {
        &self.adjacency
    }

    pub fn neighbors(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        (0..self.n).map(move |j| (j, self.weight(i, j))).filter(|&(_, w)| w > 0.0)
    }

    pub fn degree(&self, i: usize) -> usize {
        self.neighbors(i).count()
    }

    pub fn has_edges(&self) -> bool {
        self.adjacency.iter().any(|&w| w > 0.0)
    }

    /// `A / r`.
    pub fn normalized(&self) -> Vec<f64> {
        self.adjacency.iter().map(|w| w / self.r).collect()
    }
}

fn matmul_sq(a: &[f64], b: &[f64], n: usize) -> Vec<f64> {
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        for k in 0..n {
            let aik = a[i * n + k];
            if aik == 0.0 {
                continue;
            }
            for j in 0..n {
                out[i * n + j] += aik * b[k * n + j];
            }
        }
    }
    out
}

pub const POWER_TOL: f64 = 1e-10;
pub const POWER_MAX_ITER: usize = 500;

/// Largest eigenvalue of a symmetric non-negative matrix by shifted power
/// iteration. Each step squares the iteration matrix, so step `k` applies
/// `2^k` plain power steps. Returns 0 for the zero matrix.
pub fn largest_eigenvalue(matrix: &[f64], n: usize) -> Result<f64> {
    let max_row = (0..n).map(|i| matrix[i * n..(i + 1) * n].iter().sum::<f64>()).fold(0.0, f64::max);
    if max_row == 0.0 {
        return Ok(0.0);
    }
    // the shift separates +lambda_max from -lambda_max on bipartite graphs
    let shift = 0.5 * max_row;
    let mut b = matrix.to_vec();
    for i in 0..n {
        b[i * n + i] += shift;
    }
    let start = vec![1.0 / (n as f64).sqrt(); n];
    let mut lambda = f64::NAN;
    for _ in 0..POWER_MAX_ITER {
        let mut x: Vec<f64> = (0..n).map(|i| (0..n).map(|j| b[i * n + j] * start[j]).sum()).collect();
        let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        x.iter_mut().for_each(|v| *v /= norm);
        let rayleigh: f64 = (0..n)
            .map(|i| x[i] * (0..n).map(|j| matrix[i * n + j] * x[j]).sum::<f64>())
            .sum();
        if (rayleigh - lambda).abs() <= POWER_TOL * rayleigh.abs().max(1.0) {
            return Ok(rayleigh);
        }
        lambda = rayleigh;
        b = matmul_sq(&b, &b, n);
        let scale = b.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        b.iter_mut().for_each(|v| *v /= scale);
    }
    Err(DataError::NoConvergence(POWER_MAX_ITER))
}

/// Neighbor count of agent `i` in each frame, accumulated over the series.
pub fn degree_centrality(series: &[Dgg], agent: usize) -> Vec<f64> {
    assert!(!series.is_empty(), "series must be non-empty");
    series
        .iter()
        .scan(0.0, |acc, g| {
            *acc += g.degree(agent) as f64;
            Some(*acc)
        })
        .collect()
}

/// `(|N_i| - 1) / sum of neighbor distances`, zero for `|N_i| <= 1`.
pub fn closeness_centrality(g: &Dgg, agent: usize) -> f64 {
    let (count, total) = g.neighbors(agent).fold((0usize, 0.0), |(c, s), (_, w)| (c + 1, s + w));
    if count <= 1 {
        0.0
    } else {
        (count - 1) as f64 / total
    }
}

/// Sum of neighbor distances divided by the largest adjacency eigenvalue.
pub fn eigenvector_centrality(g: &Dgg, agent: usize) -> Result<f64> {
    Ok(eigenvector_all(g)?[agent])
}

fn eigenvector_all(g: &Dgg) -> Result<Vec<f64>> {
    let lambda = largest_eigenvalue(g.adjacency(), g.n())?;
    if lambda == 0.0 {
        return Ok(vec![0.0; g.n()]);
    }
    Ok((0..g.n()).map(|i| g.neighbors(i).map(|(_, w)| w).sum::<f64>() / lambda).collect())
}

#[derive(PartialEq)]
struct HeapItem(f64, usize);

impl Eq for HeapItem {}

impl PartialOrd for HeapItem {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for HeapItem {
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.total_cmp(&self.0).then(other.1.cmp(&self.1))
    }
}

const PATH_TIE: f64 = 1e-9;

/// Weighted betweenness of every node over unordered pairs (Brandes with
/// Dijkstra, distances as edge lengths).
pub fn betweenness_all(g: &Dgg) -> Vec<f64> {
    let n = g.n();
    let mut centrality = vec![0.0; n];
    for s in 0..n {
        let mut dist = vec![f64::INFINITY; n];
        let mut sigma = vec![0.0; n];
        let mut preds: Vec<Vec<usize>> = vec![Vec::new(); n];
        let mut order = Vec::with_capacity(n);
        let mut done = vec![false; n];
        dist[s] = 0.0;
        sigma[s] = 1.0;
        let mut heap = BinaryHeap::new();
        heap.push(HeapItem(0.0, s));
        while let Some(HeapItem(d, v)) = heap.pop() {
            if done[v] || d > dist[v] {
                continue;
            }
            done[v] = true;
            order.push(v);
            for (w, len) in g.neighbors(v) {
                let alt = d + len;
                let tol = PATH_TIE * alt.max(1.0);
                if alt < dist[w] - tol {
                    dist[w] = alt;
                    sigma[w] = sigma[v];
                    preds[w] = vec![v];
                    heap.push(HeapItem(alt, w));
                } else if (alt - dist[w]).abs() <= tol && !done[w] {
                    sigma[w] += sigma[v];
                    preds[w].push(v);
                }
            }
        }
        let mut delta = vec![0.0; n];
        for &w in order.iter().rev() {
            for &v in &preds[w] {
                delta[v] += sigma[v] / sigma[w] * (1.0 + delta[w]);
            }
            if w != s {
                centrality[w] += delta[w];
            }
        }
    }
    // each unordered pair was counted from both endpoints
    centrality.iter_mut().for_each(|c| *c *= 0.5);
    centrality
}

pub fn betweenness_centrality(g: &Dgg, agent: usize) -> f64 {
    betweenness_all(g)[agent]
}

/// Powers `Ā^1 .. Ā^k_max` of the normalized adjacency.
fn normalized_powers(g: &Dgg, k_max: usize) -> Vec<Vec<f64>> {
    let n = g.n();
    let base = g.normalized();
    let mut out = Vec::with_capacity(k_max);
    let mut cur = base.clone();
    for k in 0..k_max {
        if k > 0 {
            cur = matmul_sq(&cur, &base, n);
        }
        out.push(cur.clone());
    }
    out
}

pub const DEFAULT_K_MAX: usize = 10;

/// `sum_{k=1}^{k_max} (Ā^k)_ii / k!`.
pub fn power_centrality(g: &Dgg, agent: usize, k_max: usize) -> f64 {
    power_all(g, k_max)[agent]
}

fn power_all(g: &Dgg, k_max: usize) -> Vec<f64> {
    assert!(k_max >= 1, "k_max must be at least 1");
    let n = g.n();
    let mut out = vec![0.0; n];
    let mut fact = 1.0;
    for (k, p) in normalized_powers(g, k_max).iter().enumerate() {
        fact *= (k + 1) as f64;
        for (i, o) in out.iter_mut().enumerate() {
            *o += p[i * n + i] / fact;
        }
    }
    out
}

/// Katz-style series `sum_k [alpha^k sum_j (Ā^k)_ij + beta^k]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KatzParams {
    /// `None` selects `0.9 / lambda_max(Ā)` (0.5 on edgeless graphs).
    pub alpha: Option<f64>,
    pub beta: f64,
    pub k_max: usize,
}

impl Default for KatzParams {
    fn default() -> Self {
        Self { alpha: None, beta: 0.5, k_max: DEFAULT_K_MAX }
    }
}

pub fn katz_centrality(g: &Dgg, agent: usize, params: &KatzParams) -> Result<f64> {
    Ok(katz_all(g, params)?[agent])
}

fn katz_all(g: &Dgg, params: &KatzParams) -> Result<Vec<f64>> {
    let n = g.n();
    let lambda = largest_eigenvalue(&g.normalized(), n)?;
    let alpha = match params.alpha {
        Some(a) => a,
        None if lambda > 0.0 => 0.9 / lambda,
        None => 0.5,
    };
    if lambda > 0.0 && alpha * lambda >= 1.0 {
        return Err(DataError::SpectralBound { alpha, bound: 1.0 / lambda });
    }
    let mut out = vec![0.0; n];
    let (mut ak, mut bk) = (1.0, 1.0);
    for p in normalized_powers(g, params.k_max) {
        ak *= alpha;
        bk *= params.beta;
        for (i, o) in out.iter_mut().enumerate() {
            *o += ak * p[i * n..(i + 1) * n].iter().sum::<f64>() + bk;
        }
    }
    Ok(out)
}

/// Frame-level centralities except degree (which accumulates over frames):
/// `[closeness, eigenvector, betweenness, power, katz]` per node.
pub fn frame_centralities(g: &Dgg, k_max: usize, katz: &KatzParams) -> Result<Vec<[f64; 5]>> {
    let eig = eigenvector_all(g)?;
    let btw = betweenness_all(g);
    let pow = power_all(g, k_max);
    let katz = katz_all(g, katz)?;
    Ok((0..g.n())
        .map(|i| [closeness_centrality(g, i), eig[i], btw[i], pow[i], katz[i]])
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(xs: &[f64], r: f64) -> Dgg {
        let p: Vec<Vec2> = xs.iter().map(|&x| Vec2::new(x, 0.0)).collect();
        Dgg::from_positions(&p, r).unwrap()
    }

    fn weighted(n: usize, edges: &[(usize, usize, f64)], r: f64) -> Dgg {
        let mut a = vec![0.0; n * n];
        for &(i, j, w) in edges {
            a[i * n + j] = w;
            a[j * n + i] = w;
        }
        Dgg::from_adjacency(n, a, r).unwrap()
    }

    #[test]
    fn dgg_construction() {
        let g = line(&[0.0, 10.0], 30.0);
        assert_eq!((g.weight(0, 1), g.weight(1, 0)), (10.0, 10.0));
        let g = line(&[0.0, 40.0], 30.0);
        assert!(!g.has_edges());
        let g = line(&[0.0, 20.0, 40.0], 30.0);
        assert_eq!(g.weight(0, 1), 20.0);
        assert_eq!(g.weight(1, 2), 20.0);
        assert_eq!(g.weight(0, 2), 0.0);
        assert!(Dgg::from_positions(&[Vec2::ZERO, Vec2::ZERO], 30.0).is_err());
    }

    #[test]
    fn degree_accumulates() {
        let frames = vec![
            weighted(4, &[(0, 1, 1.0), (0, 2, 1.0)], 30.0),
            weighted(4, &[(0, 1, 1.0), (0, 3, 1.0)], 30.0),
            weighted(4, &[(0, 1, 1.0), (0, 2, 1.0), (0, 3, 1.0)], 30.0),
        ];
        assert_eq!(degree_centrality(&frames, 0), vec![2.0, 4.0, 7.0]);
        let lone = vec![weighted(2, &[], 30.0); 3];
        assert_eq!(degree_centrality(&lone, 0), vec![0.0; 3]);
        let star5 = weighted(6, &[(0, 1, 1.), (0, 2, 1.), (0, 3, 1.), (0, 4, 1.), (0, 5, 1.)], 30.0);
        assert_eq!(degree_centrality(&[star5], 0), vec![5.0]);
    }

    #[test]
    fn closeness_cases() {
        let g = weighted(4, &[(0, 1, 10.0), (0, 2, 20.0), (0, 3, 30.0)], 30.0);
        assert!((closeness_centrality(&g, 0) - 2.0 / 60.0).abs() < 1e-15);
        assert_eq!(closeness_centrality(&g, 1), 0.0);
        assert_eq!(closeness_centrality(&weighted(2, &[], 30.0), 0), 0.0);
    }

    #[test]
    fn eigenvector_cases() {
        let g = weighted(2, &[(0, 1, 10.0)], 30.0);
        assert!((largest_eigenvalue(g.adjacency(), 2).unwrap() - 10.0).abs() < 1e-9);
        assert!((eigenvector_centrality(&g, 0).unwrap() - 1.0).abs() < 1e-9);
        assert_eq!(eigenvector_centrality(&weighted(3, &[], 30.0), 1).unwrap(), 0.0);
        let path = weighted(3, &[(0, 1, 20.0), (1, 2, 20.0)], 30.0);
        let l = largest_eigenvalue(path.adjacency(), 3).unwrap();
        assert!((l - 20.0 * 2f64.sqrt()).abs() < 1e-8);
        assert!((eigenvector_centrality(&path, 1).unwrap() - 2f64.sqrt()).abs() < 1e-9);
    }

    #[test]
    fn betweenness_cases() {
        let path = weighted(3, &[(0, 1, 5.0), (1, 2, 5.0)], 30.0);
        assert!((betweenness_centrality(&path, 1) - 1.0).abs() < 1e-12);
        let star = weighted(5, &[(0, 1, 3.), (0, 2, 3.), (0, 3, 3.), (0, 4, 3.)], 30.0);
        let b = betweenness_all(&star);
        assert!((b[0] - 6.0).abs() < 1e-12);
        assert!(b[1..].iter().all(|&x| x == 0.0));
        // square: two equal shortest paths between opposite corners
        let sq = weighted(4, &[(0, 1, 1.), (1, 2, 1.), (2, 3, 1.), (3, 0, 1.)], 30.0);
        let b = betweenness_all(&sq);
        assert!(b.iter().all(|&x| (x - 0.5).abs() < 1e-12), "{b:?}");
    }

    #[test]
    fn power_cases() {
        let g = weighted(2, &[(0, 1, 30.0)], 30.0);
        let expected = 1f64.cosh() - 1.0;
        assert!((power_centrality(&g, 0, 10) - expected).abs() < 1e-7);
        assert!((power_centrality(&g, 0, 2) - 0.5).abs() < 1e-15);
        assert_eq!(power_centrality(&weighted(3, &[], 30.0), 0, 10), 0.0);
    }

    #[test]
    fn katz_cases() {
        let g = weighted(2, &[(0, 1, 30.0)], 30.0);
        let p = KatzParams { alpha: Some(0.5), beta: 0.5, k_max: 3 };
        assert!((katz_centrality(&g, 0, &p).unwrap() - 1.75).abs() < 1e-15);
        let e = weighted(2, &[], 30.0);
        assert!((katz_centrality(&e, 0, &p).unwrap() - 0.875).abs() < 1e-15);
        let bad = KatzParams { alpha: Some(1.2), ..p };
        assert!(matches!(katz_centrality(&g, 0, &bad), Err(DataError::SpectralBound { .. })));
        // auto alpha always satisfies the bound
        assert!(katz_centrality(&g, 0, &KatzParams::default()).is_ok());
    }
}
