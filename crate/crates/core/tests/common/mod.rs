//! Independent reference computations shared by the integration suites.
//! Nothing here calls into the simplex code.
#![allow(dead_code)]

use mibpsd::linalg::Matrix;
use mibpsd::lp::{LpProblem, Sense};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Solves the square system `m x = r` by Gaussian elimination with partial
/// pivoting. Returns `None` when the system is (numerically) singular.
pub fn solve_square(mut m: Vec<Vec<f64>>, mut r: Vec<f64>) -> Option<Vec<f64>> {
    let n = r.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&a, &b| m[a][col].abs().total_cmp(&m[b][col].abs()))?;
        if m[piv][col].abs() < 1e-10 {
            return None;
        }
        m.swap(col, piv);
        r.swap(col, piv);
        for row in col + 1..n {
            let f = m[row][col] / m[col][col];
            if f == 0.0 {
                continue;
            }
            for k in col..n {
                m[row][k] -= f * m[col][k];
            }
            r[row] -= f * r[col];
        }
    }
    let mut x = vec![0.0; n];
    for col in (0..n).rev() {
        let s: f64 = (col + 1..n).map(|k| m[col][k] * x[k]).sum();
        x[col] = (r[col] - s) / m[col][col];
    }
    Some(x)
}

/// Best objective over all vertices of `{G z ≥ h, z ≥ 0}`, found by making
/// every `n`-subset of the `m + n` inequalities active.
pub fn vertex_enumeration(p: &LpProblem) -> Option<f64> {
    let n = p.num_vars();
    let m = p.num_rows();
    let total = m + n;
    let mut best: Option<f64> = None;
    let mut subset: Vec<usize> = (0..n).collect();
    loop {
        let mut mat = Vec::with_capacity(n);
        let mut rhs = Vec::with_capacity(n);
        for &k in &subset {
            if k < m {
                mat.push(p.g.row(k).to_vec());
                rhs.push(p.h[k]);
            } else {
                let mut e = vec![0.0; n];
                e[k - m] = 1.0;
                mat.push(e);
                rhs.push(0.0);
            }
        }
        if let Some(z) = solve_square(mat, rhs) {
            let feasible = z.iter().all(|&v| v >= -1e-9)
                && (0..m).all(|i| {
                    let lhs: f64 = p.g.row(i).iter().zip(&z).map(|(a, b)| a * b).sum();
                    lhs >= p.h[i] - 1e-9 * (1.0 + p.h[i].abs())
                });
            if feasible {
                let obj: f64 = p.c.iter().zip(&z).map(|(a, b)| a * b).sum();
                best = Some(match (best, p.sense) {
                    (None, _) => obj,
                    (Some(b), Sense::Min) => b.min(obj),
                    (Some(b), Sense::Max) => b.max(obj),
                });
            }
        }
        // next combination
        let mut i = n;
        loop {
            if i == 0 {
                return best;
            }
            i -= 1;
            if subset[i] < total - n + i {
                subset[i] += 1;
                for j in i + 1..n {
                    subset[j] = subset[j - 1] + 1;
                }
                break;
            }
        }
    }
}

/// Random LP that is feasible (a planted point satisfies every row) and
/// bounded (an explicit budget row caps `Σ z`).
pub fn random_bounded_lp(seed: u64) -> LpProblem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (n, m) = loop {
        let n = rng.gen_range(1..=12);
        let m = rng.gen_range(1..=12);
        if n + m <= 18 {
            break (n, m);
        }
    };
    let z0: Vec<f64> = (0..n).map(|_| rng.gen_range(0..4) as f64).collect();
    let mut rows = Vec::new();
    let mut h = Vec::new();
    for _ in 0..m - 1 {
        let row: Vec<f64> = (0..n)
            .map(|_| if rng.gen_bool(0.7) { rng.gen_range(-5..=5) as f64 } else { 0.0 })
            .collect();
        let lhs: f64 = row.iter().zip(&z0).map(|(a, b)| a * b).sum();
        h.push(lhs - rng.gen_range(0..3) as f64);
        rows.push(row);
    }
    let budget = 10.0 * (1.0 + z0.iter().sum::<f64>());
    rows.push(vec![-1.0; n]);
    h.push(-budget);
    let c: Vec<f64> = (0..n).map(|_| rng.gen_range(-6..=6) as f64).collect();
    let sense = if rng.gen_bool(0.5) { Sense::Min } else { Sense::Max };
    LpProblem::new(sense, c, Matrix::from_rows(n, &rows).unwrap(), h).unwrap()
}
