//! Dense two-phase primal simplex on the standard-form equivalent of
//! `min cᵀz  s.t.  Gz ≥ h, z ≥ 0`.
//!
//! Every row gets a surplus column (`G_i z - s_i = h_i`). Rows with
//! `h_i <= 0` are negated so their surplus starts basic; the remaining rows
//! receive an artificial variable. Pricing is Dantzig's most negative
//! reduced cost; a long run of degenerate pivots falls back to Bland's
//! smallest-index rule for both pricing and the ratio test, so the method
//! terminates on degenerate problems.
//!
//! Row multipliers are read off the final tableau: the reduced cost of the
//! surplus column of row `i` equals the multiplier of `G_i z ≥ h_i` in the
//! original inequality form, both for the phase-2 optimum (dual solution) and
//! for the phase-1 optimum (Farkas certificate).

use crate::error::{Error, Result};
use crate::linalg::{norm_inf, Matrix};

/// Result of the raw minimisation, before sense conversion.
pub(crate) enum RawOutcome {
    Optimal { primal: Vec<f64>, dual: Vec<f64> },
    Unbounded { ray: Vec<f64> },
    Infeasible { farkas: Vec<f64> },
}

pub(crate) struct Params {
    pub pivot_tol: f64,
    pub feas_tol: f64,
    pub iteration_cap: usize,
}

/// Pivots between rebuilds of the tableau from the original data.
const REFACTOR_INTERVAL: usize = 100;

struct Tableau {
    rows: usize,
    n: usize,
    ncols: usize,
    width: usize,
    data: Vec<f64>,
    basis: Vec<usize>,
}

impl Tableau {
    #[inline]
    fn at(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.width + j]
    }

    #[inline]
    fn rhs(&self, i: usize) -> f64 {
        self.data[i * self.width + self.ncols]
    }

    #[inline]
    fn obj(&self, j: usize) -> f64 {
        self.data[self.rows * self.width + j]
    }

    fn is_artificial(&self, j: usize) -> bool {
        j >= self.n + self.rows
    }

    fn pivot(&mut self, r: usize, q: usize) {
        let w = self.width;
        let piv = self.data[r * w + q];
        let mut pivot_row = self.data[r * w..(r + 1) * w].to_vec();
        for v in pivot_row.iter_mut() {
            *v /= piv;
        }
        pivot_row[q] = 1.0;
        for i in 0..=self.rows {
            let row = &mut self.data[i * w..(i + 1) * w];
            if i == r {
                row.copy_from_slice(&pivot_row);
                continue;
            }
            let f = row[q];
            if f == 0.0 {
                continue;
            }
            for (x, p) in row.iter_mut().zip(&pivot_row) {
                *x -= f * p;
            }
            row[q] = 0.0;
            if i < self.rows {
                let rhs = &mut row[self.ncols];
                if *rhs < 0.0 && *rhs > -1e-11 {
                    *rhs = 0.0;
                }
            }
        }
        self.basis[r] = q;
    }

    /// Most negative reduced cost, ties to the smallest index; with `bland`,
    /// the smallest index with a negative reduced cost.
    fn entering(&self, tol: f64, bland: bool) -> Option<usize> {
        let mut candidates = (0..self.ncols).filter(|&j| !self.is_artificial(j) && self.obj(j) < -tol);
        if bland {
            return candidates.next();
        }
        candidates.fold(None, |best: Option<usize>, j| match best {
            Some(b) if self.obj(b) <= self.obj(j) => Some(b),
            _ => Some(j),
        })
    }

    /// Minimum-ratio row. Among rows tied at the minimum ratio, pivots
    /// smaller than a tenth of the largest tied pivot are skipped for
    /// stability unless `strict`; the rest go to the smallest basic index.
    /// With `strict` this is Bland's leaving rule.
    fn leaving(&self, q: usize, pivot_tol: f64, strict: bool) -> Option<(usize, bool)> {
        let mut min_ratio = f64::INFINITY;
        for i in 0..self.rows {
            let a = self.at(i, q);
            if a > pivot_tol {
                min_ratio = min_ratio.min(self.rhs(i).max(0.0) / a);
            }
        }
        if !min_ratio.is_finite() {
            return None;
        }
        let tie = 1e-12 * (1.0 + min_ratio);
        let tied = |i: usize| {
            let a = self.at(i, q);
            a > pivot_tol && self.rhs(i).max(0.0) / a <= min_ratio + tie
        };
        let biggest = (0..self.rows)
            .filter(|&i| tied(i))
            .map(|i| self.at(i, q))
            .fold(0.0, f64::max);
        let floor = if strict { 0.0 } else { 0.1 * biggest };
        (0..self.rows)
            .filter(|&i| tied(i) && self.at(i, q) >= floor)
            .min_by_key(|&i| self.basis[i])
            .map(|r| (r, min_ratio == 0.0))
    }

    fn run(&mut self, params: &Params, budget: &mut usize, original: &[f64], costs: &[f64]) -> Result<Option<usize>> {
        let dtol = 1e-9;
        let mut since_refactor = 0;
        let mut degenerate_run = 0;
        loop {
            // Dantzig pricing can cycle on degenerate vertices; a long
            // degenerate run switches to Bland's rule, which cannot, until
            // the objective moves again. Refactoring is held off meanwhile so
            // the reduced costs Bland relies on stay consistent.
            let bland = degenerate_run > self.rows;
            if since_refactor >= REFACTOR_INTERVAL && !bland {
                since_refactor = 0;
                let saved = (self.data.clone(), self.basis.clone());
                if !self.refactor(original, costs) {
                    (self.data, self.basis) = saved;
                }
            }
            since_refactor += 1;
            let Some(q) = self.entering(dtol, bland) else {
                return Ok(None);
            };
            let Some((r, degenerate)) = self.leaving(q, params.pivot_tol, bland) else {
                return Ok(Some(q));
            };
            degenerate_run = if degenerate { degenerate_run + 1 } else { 0 };
            if *budget == 0 {
                return Err(Error::NumericalFailure(format!(
                    "iteration cap of {} pivots reached",
                    params.iteration_cap
                )));
            }
            *budget -= 1;
            self.pivot(r, q);
        }
    }

    /// Rebuilds the constraint rows from the original data for the current
    /// basis (Gauss-Jordan with partial pivoting), discarding accumulated
    /// rounding error, and recomputes the objective row for `costs`.
    /// Returns `false` if the basis is numerically singular.
    fn refactor(&mut self, original: &[f64], costs: &[f64]) -> bool {
        let (m, w) = (self.rows, self.width);
        let mut data = original.to_vec();
        let mut assigned = vec![usize::MAX; m];
        let mut free: Vec<bool> = vec![true; m];
        for &b in &self.basis {
            let mut best: Option<(usize, f64)> = None;
            for r in (0..m).filter(|&r| free[r]) {
                let a = data[r * w + b].abs();
                if best.is_none_or(|(_, v)| a > v) {
                    best = Some((r, a));
                }
            }
            let Some((r, a)) = best else { return false };
            if a < 1e-11 {
                return false;
            }
            free[r] = false;
            assigned[r] = b;
            let piv = data[r * w + b];
            let pivot_row: Vec<f64> = data[r * w..(r + 1) * w].iter().map(|v| v / piv).collect();
            for i in 0..m {
                let row = &mut data[i * w..(i + 1) * w];
                if i == r {
                    row.copy_from_slice(&pivot_row);
                    row[b] = 1.0;
                    continue;
                }
                let f = row[b];
                if f != 0.0 {
                    for (x, p) in row.iter_mut().zip(&pivot_row) {
                        *x -= f * p;
                    }
                    row[b] = 0.0;
                }
            }
        }
        self.data[..m * w].copy_from_slice(&data);
        self.basis = assigned;
        let obj = m * w;
        for j in 0..w {
            self.data[obj + j] = if j < costs.len() { costs[j] } else { 0.0 };
        }
        for i in 0..m {
            let cb = costs.get(self.basis[i]).copied().unwrap_or(0.0);
            if cb != 0.0 {
                for j in 0..w {
                    let v = self.data[i * w + j];
                    self.data[obj + j] -= cb * v;
                }
            }
        }
        true
    }

    /// Runs to termination, then refactors and resumes until a fresh
    /// factorisation confirms the result.
    fn run_refined(
        &mut self,
        params: &Params,
        budget: &mut usize,
        original: &[f64],
        costs: &[f64],
    ) -> Result<Option<usize>> {
        let mut out = self.run(params, budget, original, costs)?;
        for _ in 0..4 {
            let before = *budget;
            let saved = (self.data.clone(), self.basis.clone());
            if !self.refactor(original, costs) {
                (self.data, self.basis) = saved;
                break;
            }
            out = self.run(params, budget, original, costs)?;
            if *budget == before {
                break;
            }
        }
        Ok(out)
    }

    fn surplus_costs(&self) -> Vec<f64> {
        (0..self.rows).map(|i| self.obj(self.n + i)).collect()
    }
}

pub(crate) fn minimize(c: &[f64], g: &Matrix, h: &[f64], params: &Params) -> Result<RawOutcome> {
    let n = c.len();
    let m = g.rows();
    let signs: Vec<f64> = h.iter().map(|&hi| if hi > 0.0 { 1.0 } else { -1.0 }).collect();
    let art_rows: Vec<usize> = (0..m).filter(|&i| signs[i] > 0.0).collect();
    let ncols = n + m + art_rows.len();
    let width = ncols + 1;
    let mut t = Tableau {
        rows: m,
        n,
        ncols,
        width,
        data: vec![0.0; (m + 1) * width],
        basis: vec![0; m],
    };

    let mut art = n + m;
    for i in 0..m {
        let s = signs[i];
        let row = &mut t.data[i * width..(i + 1) * width];
        for (dst, &gij) in row[..n].iter_mut().zip(g.row(i)) {
            *dst = s * gij;
        }
        row[n + i] = -s;
        row[ncols] = s * h[i];
        if s > 0.0 {
            row[art] = 1.0;
            t.basis[i] = art;
            art += 1;
        } else {
            t.basis[i] = n + i;
        }
    }

    let mut budget = params.iteration_cap;
    let original = t.data[..m * width].to_vec();

    if !art_rows.is_empty() {
        // Phase 1: minimise the sum of artificials.
        let obj = m * width;
        for &i in &art_rows {
            for j in 0..width {
                let v = t.data[i * width + j];
                t.data[obj + j] -= v;
            }
        }
        for j in n + m..ncols {
            t.data[obj + j] = 0.0;
        }
        let mut phase1_costs = vec![0.0; ncols];
        for j in n + m..ncols {
            phase1_costs[j] = 1.0;
        }
        t.run_refined(params, &mut budget, &original, &phase1_costs)?;
        let infeasibility = -t.data[obj + ncols];
        if infeasibility > params.feas_tol * (1.0 + norm_inf(h)) {
            let mut farkas = t.surplus_costs();
            for v in farkas.iter_mut() {
                if *v < 0.0 {
                    *v = 0.0;
                }
            }
            let scale = norm_inf(&farkas);
            if scale > 0.0 {
                for v in farkas.iter_mut() {
                    *v /= scale;
                }
            }
            return Ok(RawOutcome::Infeasible { farkas });
        }
        // Drive zero-level artificials out of the basis where possible.
        for i in 0..m {
            if !t.is_artificial(t.basis[i]) {
                continue;
            }
            let mut best: Option<(usize, f64)> = None;
            for j in 0..n + m {
                let a = t.at(i, j).abs();
                if a > params.pivot_tol && best.is_none_or(|(_, b)| a > b) {
                    best = Some((j, a));
                }
            }
            if let Some((j, _)) = best {
                t.pivot(i, j);
            }
        }
    }

    // Phase 2 objective row.
    let obj = m * width;
    for j in 0..width {
        t.data[obj + j] = if j < n { c[j] } else { 0.0 };
    }
    for i in 0..m {
        let b = t.basis[i];
        let cb = if b < n { c[b] } else { 0.0 };
        if cb != 0.0 {
            for j in 0..width {
                let v = t.data[i * width + j];
                t.data[obj + j] -= cb * v;
            }
        }
    }

    let mut phase2_costs = vec![0.0; ncols];
    phase2_costs[..n].copy_from_slice(c);
    if let Some(q) = t.run_refined(params, &mut budget, &original, &phase2_costs)? {
        let mut ray = vec![0.0; n];
        if q < n {
            ray[q] = 1.0;
        }
        for i in 0..m {
            let b = t.basis[i];
            if b < n {
                ray[b] = (-t.at(i, q)).max(0.0);
            }
        }
        let scale = norm_inf(&ray);
        for v in ray.iter_mut() {
            *v /= scale;
        }
        return Ok(RawOutcome::Unbounded { ray });
    }

    let mut primal = vec![0.0; n];
    for i in 0..m {
        let b = t.basis[i];
        if b < n {
            primal[b] = t.rhs(i).max(0.0);
        }
    }
    let dual = t.surplus_costs();
    Ok(RawOutcome::Optimal { primal, dual })
}
