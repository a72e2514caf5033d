//! Brute-force reference implementations, written from the formulas with
//! plain loops and no shared code paths with the library.

#![allow(dead_code)]

use wordreg::numerics::Mat;

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

pub fn row(m: &Mat, i: usize) -> Vec<f64> {
    (0..m.ncols()).map(|j| m[(i, j)]).collect()
}

pub fn cosine_matrix(a: &Mat, b: &Mat) -> Vec<Vec<f64>> {
    (0..a.nrows())
        .map(|i| (0..b.nrows()).map(|j| cosine(&row(a, i), &row(b, j))).collect())
        .collect()
}

fn mean_top(mut v: Vec<f64>, k: usize) -> f64 {
    v.sort_by(|a, b| b.partial_cmp(a).unwrap());
    v.iter().take(k).sum::<f64>() / k as f64
}

/// `2 cos(a_i, b_j) − r_a(i) − r_b(j)`.
pub fn csls(a: &Mat, b: &Mat, k: usize) -> Vec<Vec<f64>> {
    let c = cosine_matrix(a, b);
    let r_a: Vec<f64> = c.iter().map(|r| mean_top(r.clone(), k)).collect();
    let r_b: Vec<f64> = (0..b.nrows())
        .map(|j| mean_top(c.iter().map(|r| r[j]).collect(), k))
        .collect();
    c.iter()
        .enumerate()
        .map(|(i, r)| r.iter().enumerate().map(|(j, v)| 2.0 * v - r_a[i] - r_b[j]).collect())
        .collect()
}

pub fn add(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    a.iter()
        .zip(b)
        .map(|(r, s)| r.iter().zip(s).map(|(x, y)| x + y).collect())
        .collect()
}

/// First index of the maximum.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Pairs `(n, m)` that are each other's argmax, ordered by `n`.
pub fn mutual_nn(s: &[Vec<f64>]) -> Vec<(usize, usize)> {
    let cols = s[0].len();
    let col_best: Vec<usize> = (0..cols)
        .map(|m| argmax(&s.iter().map(|r| r[m]).collect::<Vec<_>>()))
        .collect();
    s.iter()
        .enumerate()
        .filter_map(|(n, r)| {
            let m = argmax(r);
            (col_best[m] == n).then_some((n, m))
        })
        .collect()
}

/// Gaussian-plus-uniform responsibilities evaluated straight from the
/// density, without the log domain. `moved` are the transformed centroids.
/// Returns `P` as `[m][n]` and the outlier responsibilities.
pub fn posterior(data: &Mat, moved: &Mat, sigma2: f64, w: f64) -> (Vec<Vec<f64>>, Vec<f64>) {
    let (n, m, d) = (data.nrows(), moved.nrows(), data.ncols() as f64);
    let c = (2.0 * std::f64::consts::PI * sigma2).powf(d / 2.0) * w / (1.0 - w) * m as f64 / n as f64;
    let mut p = vec![vec![0.0; n]; m];
    let mut outlier = vec![0.0; n];
    for j in 0..n {
        let xj = row(data, j);
        let num: Vec<f64> = (0..m)
            .map(|i| {
                let yi = row(moved, i);
                let dist: f64 = xj.iter().zip(&yi).map(|(a, b)| (a - b) * (a - b)).sum();
                (-dist / (2.0 * sigma2)).exp()
            })
            .collect();
        let den: f64 = num.iter().sum::<f64>() + c;
        for i in 0..m {
            p[i][j] = num[i] / den;
        }
        outlier[j] = c / den;
    }
    (p, outlier)
}

/// Cyclic Jacobi eigenvalues of a symmetric matrix, ascending.
pub fn jacobi_eigenvalues(a: &Mat) -> Vec<f64> {
    let n = a.nrows();
    let mut m: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| a[(i, j)]).collect()).collect();
    for _ in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[i][j] * m[i][j])
            .sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if m[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (m[q][q] - m[p][p]) / (2.0 * m[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (mkp, mkq) = (m[k][p], m[k][q]);
                    m[k][p] = c * mkp - s * mkq;
                    m[k][q] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let (mpk, mqk) = (m[p][k], m[q][k]);
                    m[p][k] = c * mpk - s * mqk;
                    m[q][k] = s * mpk + c * mqk;
                }
            }
        }
    }
    let mut ev: Vec<f64> = (0..n).map(|i| m[i][i]).collect();
    ev.sort_by(|a, b| a.partial_cmp(b).unwrap());
    ev
}
