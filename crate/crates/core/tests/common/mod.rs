//! Independent reference implementations the library is checked against.
#![allow(dead_code)]

use nalgebra::DMatrix;

/// Cyclic Jacobi eigensolver for a symmetric matrix. Returns eigenvalues in
/// nonincreasing order with matching unit eigenvector columns.
pub fn jacobi_eigen(m: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let n = m.nrows();
    let mut a = m.clone();
    let mut v = DMatrix::<f64>::identity(n, n);
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[(i, j)] * a[(i, j)])
            .sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[(p, q)].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * a[(p, q)]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(j, j)].total_cmp(&a[(i, i)]));
    let values = order.iter().map(|&i| a[(i, i)]).collect();
    let vectors = DMatrix::from_fn(n, n, |r, c| v[(r, order[c])]);
    (values, vectors)
}

/// Per-column standardization with population std; zero std left unscaled.
pub fn standardize(x: &DMatrix<f64>) -> DMatrix<f64> {
    let n = x.nrows() as f64;
    let mut z = x.clone();
    for mut col in z.column_iter_mut() {
        let mean = col.iter().sum::<f64>() / n;
        let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        let sd = if var.sqrt() > 0.0 { var.sqrt() } else { 1.0 };
        col.iter_mut().for_each(|v| *v = (*v - mean) / sd);
    }
    z
}

pub fn centre(x: &DMatrix<f64>) -> DMatrix<f64> {
    let n = x.nrows() as f64;
    let mut z = x.clone();
    for mut col in z.column_iter_mut() {
        let mean = col.iter().sum::<f64>() / n;
        col.iter_mut().for_each(|v| *v -= mean);
    }
    z
}

/// Pascal's triangle in exact integers.
pub fn pascal(n: usize) -> Vec<Vec<u128>> {
    let mut rows: Vec<Vec<u128>> = vec![vec![1]];
    for i in 1..=n {
        let prev = &rows[i - 1];
        let mut row = vec![1u128; i + 1];
        for k in 1..i {
            row[k] = prev[k - 1] + prev[k];
        }
        rows.push(row);
    }
    rows
}

/// Two-sided Fisher p-value by enumerating every table with the observed
/// margins, comparing table weights as exact integers.
pub fn fisher_oracle(binom: &[Vec<u128>], a: u64, b: u64, c: u64, d: u64) -> f64 {
    let (r1, r2, c1) = ((a + b) as usize, (c + d) as usize, (a + c) as usize);
    let n = r1 + r2;
    let weight = |x: usize| binom[r1][x] * binom[r2][c1 - x];
    let observed = weight(a as usize);
    let lo = c1.saturating_sub(r2);
    let hi = r1.min(c1);
    let tail: u128 = (lo..=hi).map(weight).filter(|w| *w <= observed).sum();
    tail as f64 / binom[n][c1] as f64
}

/// Lowest within-cluster SSE over every split of the points into two
/// nonempty groups.
pub fn best_two_partition_sse(points: &[[f64; 2]]) -> f64 {
    let n = points.len();
    let sse = |members: &[usize]| {
        let m = members.len() as f64;
        let cx = members.iter().map(|&i| points[i][0]).sum::<f64>() / m;
        let cy = members.iter().map(|&i| points[i][1]).sum::<f64>() / m;
        members
            .iter()
            .map(|&i| (points[i][0] - cx).powi(2) + (points[i][1] - cy).powi(2))
            .sum::<f64>()
    };
    let mut best = f64::INFINITY;
    // point 0 always in the first group, so each split is seen once
    for mask in 0u32..(1 << (n - 1)) {
        let full = mask << 1;
        let first: Vec<usize> = (0..n).filter(|&i| full & (1 << i) == 0).collect();
        let second: Vec<usize> = (0..n).filter(|&i| full & (1 << i) != 0).collect();
        if second.is_empty() {
            continue;
        }
        best = best.min(sse(&first) + sse(&second));
    }
    best
}

/// Central finite difference of `f` at `x` along coordinate `i`.
pub fn central_difference(mut f: impl FnMut(&[f64]) -> f64, x: &[f64], i: usize, h: f64) -> f64 {
    let mut p = x.to_vec();
    p[i] = x[i] + h;
    let up = f(&p);
    p[i] = x[i] - h;
    let down = f(&p);
    (up - down) / (2.0 * h)
}

/// Largest entry of |a - s*b| minimized over the sign s.
pub fn sign_aligned_gap(a: &[f64], b: &[f64]) -> f64 {
    let gap = |s: f64| a.iter().zip(b).map(|(x, y)| (x - s * y).abs()).fold(0.0, f64::max);
    gap(1.0).min(gap(-1.0))
}
