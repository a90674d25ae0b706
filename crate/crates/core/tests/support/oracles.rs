//! Brute-force reference implementations used to cross-check the graph
//! centralities and the TTC kinematics.

#![allow(dead_code)]

use citf_core::graph::Dgg;
use citf_core::Vec2;
use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Random graph on `1..=max_n` nodes. Even seeds scatter points in a box and
/// connect within the radius; odd seeds draw an explicit weight matrix.
pub fn random_graph(seed: u64, max_n: usize) -> Dgg {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(1..=max_n);
    let r = 30.0;
    if seed % 2 == 0 {
        let pts: Vec<Vec2> =
            (0..n).map(|_| Vec2::new(rng.gen_range(0.0..70.0), rng.gen_range(0.0..40.0))).collect();
        Dgg::from_positions(&pts, r).unwrap()
    } else {
        let p_edge = rng.gen_range(0.2..0.9);
        let mut a = vec![0.0; n * n];
        for i in 0..n {
            for j in (i + 1)..n {
                if rng.gen::<f64>() < p_edge {
                    let w = rng.gen_range(0.5..=r);
                    a[i * n + j] = w;
                    a[j * n + i] = w;
                }
            }
        }
        Dgg::from_adjacency(n, a, r).unwrap()
    }
}

pub fn dense(g: &Dgg) -> DMatrix<f64> {
    DMatrix::from_row_slice(g.n(), g.n(), g.adjacency())
}

pub fn dense_normalized(g: &Dgg) -> DMatrix<f64> {
    dense(g) / g.radius()
}

pub fn max_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    SymmetricEigen::new(m.clone()).eigenvalues.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

pub fn degree(g: &Dgg, i: usize) -> f64 {
    (0..g.n()).filter(|&j| g.adjacency()[i * g.n() + j] > 0.0).count() as f64
}

pub fn closeness(g: &Dgg, i: usize) -> f64 {
    let row = &g.adjacency()[i * g.n()..(i + 1) * g.n()];
    let count = row.iter().filter(|&&w| w > 0.0).count();
    if count <= 1 {
        0.0
    } else {
        (count - 1) as f64 / row.iter().sum::<f64>()
    }
}

pub fn eigenvector(g: &Dgg, i: usize) -> f64 {
    let m = dense(g);
    let lambda = max_eigenvalue(&m);
    if lambda <= 0.0 {
        return 0.0;
    }
    m.row(i).sum() / lambda
}

/// Betweenness by enumerating every simple path between each unordered pair.
pub fn betweenness(g: &Dgg) -> Vec<f64> {
    let n = g.n();
    let mut out = vec![0.0; n];
    for s in 0..n {
        for t in (s + 1)..n {
            let mut paths: Vec<(f64, Vec<usize>)> = Vec::new();
            let mut stack = vec![s];
            let mut seen = vec![false; n];
            seen[s] = true;
            enumerate(g, t, 0.0, &mut stack, &mut seen, &mut paths);
            let Some(best) = paths.iter().map(|p| p.0).reduce(f64::min) else { continue };
            let tol = 1e-9 * best.max(1.0);
            let shortest: Vec<&Vec<usize>> = paths.iter().filter(|p| p.0 <= best + tol).map(|p| &p.1).collect();
            let total = shortest.len() as f64;
            for path in &shortest {
                for &v in &path[1..path.len() - 1] {
                    out[v] += 1.0 / total;
                }
            }
        }
    }
    out
}

fn enumerate(g: &Dgg, t: usize, len: f64, stack: &mut Vec<usize>, seen: &mut [bool], out: &mut Vec<(f64, Vec<usize>)>) {
    let v = *stack.last().unwrap();
    if v == t {
        out.push((len, stack.clone()));
        return;
    }
    for w in 0..g.n() {
        let d = g.adjacency()[v * g.n() + w];
        if d > 0.0 && !seen[w] {
            seen[w] = true;
            stack.push(w);
            enumerate(g, t, len + d, stack, seen, out);
            stack.pop();
            seen[w] = false;
        }
    }
}

/// Truncated series `sum_{k=1}^{k_max} (Ā^k)_ii / k!` by dense products.
pub fn power_truncated(g: &Dgg, i: usize, k_max: usize) -> f64 {
    let a = dense_normalized(g);
    let mut p = DMatrix::identity(g.n(), g.n());
    let mut fact = 1.0;
    let mut sum = 0.0;
    for k in 1..=k_max {
        p = &p * &a;
        fact *= k as f64;
        sum += p[(i, i)] / fact;
    }
    sum
}

/// `exp(Ā)_ii - 1` through the eigendecomposition.
pub fn power_exact(g: &Dgg, i: usize) -> f64 {
    if g.n() == 0 {
        return 0.0;
    }
    let eig = SymmetricEigen::new(dense_normalized(g));
    let v = &eig.eigenvectors;
    (0..g.n()).map(|k| v[(i, k)] * v[(i, k)] * eig.eigenvalues[k].exp()).sum::<f64>() - 1.0
}

/// Truncated Katz series with the default step size `0.9 / lambda_max`.
pub fn katz_truncated(g: &Dgg, i: usize, beta: f64, k_max: usize) -> f64 {
    let a = dense_normalized(g);
    let lambda = max_eigenvalue(&a);
    let alpha = if lambda > 1e-12 { 0.9 / lambda } else { 0.5 };
    let mut p = DMatrix::identity(g.n(), g.n());
    let mut sum = 0.0;
    for k in 1..=k_max {
        p = &p * &a;
        sum += alpha.powi(k as i32) * p.row(i).sum() + beta.powi(k as i32);
    }
    sum
}

/// Exact head-on collision time of two agents on the x-axis at constant
/// velocity, found by minimizing the gap along the relative motion.
pub fn head_on_collision_time(x_i: f64, v_i: f64, x_j: f64, v_j: f64) -> f64 {
    let dp = x_j - x_i;
    let dv = v_j - v_i;
    if dp * dv >= 0.0 {
        return f64::INFINITY;
    }
    // |dp + t dv| reaches zero at t = -dp/dv
    -dp / dv
}

pub fn n_pow_over_factorial(n: usize, k: u32) -> f64 {
    let fact: f64 = (1..=k).map(f64::from).product();
    (n as f64).powi(k as i32) / fact
}
