//! Small dense-vector helpers and a min-norm-point solver for convex hulls.

use nalgebra::{DMatrix, DVector};
use std::cmp::Ordering;

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

pub fn scale(a: &[f64], s: f64) -> Vec<f64> {
    a.iter().map(|x| x * s).collect()
}

/// `a + s * b`
pub fn axpy(a: &[f64], s: f64, b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + s * y).collect()
}

pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

pub fn lex_cmp(a: &[f64], b: &[f64]) -> Ordering {
    for (x, y) in a.iter().zip(b) {
        match x.total_cmp(y) {
            Ordering::Equal => continue,
            o => return o,
        }
    }
    a.len().cmp(&b.len())
}

pub fn unit(dim: usize, i: usize) -> Vec<f64> {
    let mut e = vec![0.0; dim];
    e[i] = 1.0;
    e
}

/// Minimum-norm point of conv(points), Wolfe's active-set method.
///
/// Returns the point and its convex weights. The active set is a simplex of
/// affinely independent points; each minor cycle solves the affine
/// least-norm problem on it and drops vertices with nonpositive weight.
pub fn min_norm_point(points: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
    let m = points.len();
    assert!(m > 0, "min_norm_point on empty set");
    let dim = points[0].len();
    let scale2 = points
        .iter()
        .map(|p| dot(p, p))
        .fold(0.0f64, f64::max)
        .max(1e-300);
    let eps = 1e-13 * scale2;

    let start = (0..m)
        .min_by(|&i, &j| dot(&points[i], &points[i]).total_cmp(&dot(&points[j], &points[j])))
        .unwrap();
    let mut active: Vec<usize> = vec![start];
    let mut lam: Vec<f64> = vec![1.0];
    let mut x = points[start].clone();

    for _major in 0..(50 * m + 100) {
        // most negative direction
        let xx = dot(&x, &x);
        let j = (0..m)
            .min_by(|&a, &b| dot(&x, &points[a]).total_cmp(&dot(&x, &points[b])))
            .unwrap();
        if xx - dot(&x, &points[j]) <= eps || active.contains(&j) || active.len() > dim {
            break;
        }
        active.push(j);
        lam.push(0.0);

        for _minor in 0..(m + 5) {
            let Some(alpha) = affine_min_norm(points, &active) else {
                // degenerate corral: keep the current point
                active.pop();
                lam.pop();
                return finish(points, &active, &lam, dim);
            };
            if alpha.iter().all(|&a| a > 1e-14) {
                lam = alpha;
                x = combine(points, &active, &lam, dim);
                break;
            }
            let mut theta = 1.0f64;
            for (k, &a) in alpha.iter().enumerate() {
                if a <= 1e-14 {
                    let d = lam[k] - a;
                    if d > 0.0 {
                        theta = theta.min(lam[k] / d);
                    }
                }
            }
            for k in 0..lam.len() {
                lam[k] = theta * alpha[k] + (1.0 - theta) * lam[k];
            }
            let mut keep_idx = Vec::with_capacity(active.len());
            let mut keep_lam = Vec::with_capacity(active.len());
            for (k, &idx) in active.iter().enumerate() {
                if lam[k] > 1e-14 {
                    keep_idx.push(idx);
                    keep_lam.push(lam[k]);
                }
            }
            if keep_idx.is_empty() {
                keep_idx.push(active[0]);
                keep_lam.push(1.0);
            }
            let s: f64 = keep_lam.iter().sum();
            active = keep_idx;
            lam = keep_lam.into_iter().map(|l| l / s).collect();
            x = combine(points, &active, &lam, dim);
        }
    }
    finish(points, &active, &lam, dim)
}

fn finish(points: &[Vec<f64>], active: &[usize], lam: &[f64], dim: usize) -> (Vec<f64>, Vec<f64>) {
    let mut w = vec![0.0; points.len()];
    for (k, &i) in active.iter().enumerate() {
        w[i] += lam[k];
    }
    (combine(points, active, lam, dim), w)
}

fn combine(points: &[Vec<f64>], active: &[usize], lam: &[f64], dim: usize) -> Vec<f64> {
    let mut x = vec![0.0; dim];
    for (k, &i) in active.iter().enumerate() {
        for d in 0..dim {
            x[d] += lam[k] * points[i][d];
        }
    }
    x
}

/// Weights of the min-norm point of the affine hull of the active points.
fn affine_min_norm(points: &[Vec<f64>], active: &[usize]) -> Option<Vec<f64>> {
    let k = active.len();
    let mut a = DMatrix::<f64>::zeros(k + 1, k + 1);
    for (r, &i) in active.iter().enumerate() {
        for (c, &j) in active.iter().enumerate() {
            a[(r, c)] = dot(&points[i], &points[j]);
        }
        a[(r, k)] = 1.0;
        a[(k, r)] = 1.0;
    }
    let mut b = DVector::<f64>::zeros(k + 1);
    b[k] = 1.0;
    let sol = a.lu().solve(&b)?;
    let w: Vec<f64> = (0..k).map(|i| sol[i]).collect();
    if w.iter().any(|v| !v.is_finite()) {
        return None;
    }
    Some(w)
}
