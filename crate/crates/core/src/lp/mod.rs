//! Dense LP oracle.
//!
//! Every linear program in the crate is posed as
//!
//! ```text
//! min / max  cᵀz   s.t.  G z ≥ h,  z ≥ 0
//! ```
//!
//! and solved by a two-phase primal simplex (see [`simplex`]). Outcomes carry
//! certificates: finite optima come with a basic primal solution and the
//! nonnegative row multipliers of the internal minimisation, unbounded
//! problems with an extreme ray of the recession cone, and infeasible
//! problems with a Farkas vector. [`check_certificate`] verifies any of
//! them against the problem data.

mod simplex;

use crate::error::{Error, Result};
use crate::linalg::{dot, norm_inf, Matrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Min,
    Max,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ToleranceSet {
    /// Primal and dual feasibility residual.
    pub feas: f64,
    /// Relative duality gap.
    pub gap: f64,
    /// Minimum improvement of a ray or Farkas certificate.
    pub ray: f64,
    /// Smallest admissible pivot element.
    pub pivot: f64,
}

impl Default for ToleranceSet {
    fn default() -> Self {
        Self {
            feas: 1e-7,
            gap: 1e-7,
            ray: 1e-7,
            pivot: 1e-9,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpProblem {
    pub c: Vec<f64>,
    pub g: Matrix,
    pub h: Vec<f64>,
    pub sense: Sense,
    pub names: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LpOutcome {
    /// `dual` holds the nonnegative multipliers of `G z ≥ h` in the
    /// minimisation form (`min cᵀz`, or `min -cᵀz` for `Sense::Max`), so
    /// `objective = cᵀ primal = ±hᵀ dual` at optimality.
    Finite {
        primal: Vec<f64>,
        dual: Vec<f64>,
        objective: f64,
    },
    /// Improving direction in the problem's own sense, scaled to unit
    /// infinity norm.
    Unbounded { ray: Vec<f64> },
    /// `farkas ≥ 0`, `Gᵀ farkas ≤ 0` and `hᵀ farkas > 0`.
    Infeasible { farkas: Vec<f64> },
}

impl LpOutcome {
    pub fn is_finite(&self) -> bool {
        matches!(self, LpOutcome::Finite { .. })
    }

    pub fn kind(&self) -> &'static str {
        match self {
            LpOutcome::Finite { .. } => "finite",
            LpOutcome::Unbounded { .. } => "unbounded",
            LpOutcome::Infeasible { .. } => "infeasible",
        }
    }
}

impl LpProblem {
    pub fn new(sense: Sense, c: Vec<f64>, g: Matrix, h: Vec<f64>) -> Result<Self> {
        let p = Self {
            c,
            g,
            h,
            sense,
            names: None,
        };
        p.check_dimensions()?;
        Ok(p)
    }

    pub fn num_vars(&self) -> usize {
        self.c.len()
    }

    pub fn num_rows(&self) -> usize {
        self.h.len()
    }

    pub fn check_dimensions(&self) -> Result<()> {
        if self.g.cols() != self.c.len() || self.g.rows() != self.h.len() {
            return Err(Error::Dimension(format!(
                "LP has {} costs, a {}x{} matrix and {} right-hand sides",
                self.c.len(),
                self.g.rows(),
                self.g.cols(),
                self.h.len()
            )));
        }
        if let Some(names) = &self.names {
            if names.len() != self.c.len() {
                return Err(Error::Dimension("variable label count".into()));
            }
        }
        Ok(())
    }

    /// Costs of the internal minimisation.
    pub fn min_costs(&self) -> Vec<f64> {
        match self.sense {
            Sense::Min => self.c.clone(),
            Sense::Max => self.c.iter().map(|v| -v).collect(),
        }
    }

    pub fn objective_at(&self, z: &[f64]) -> f64 {
        dot(&self.c, z)
    }
}

/// Solves `p` with Bland-rule two-phase simplex.
pub fn solve(p: &LpProblem, tol: &ToleranceSet) -> Result<LpOutcome> {
    p.check_dimensions()?;
    // Phase 1 is the expensive part when many rows start infeasible. If the
    // dual starts closer to feasibility, solve it and read the primal off its
    // multipliers; anything that does not verify goes the direct way.
    let primal_artificials = p.h.iter().filter(|&&h| h > 0.0).count();
    let dual_artificials = p.min_costs().iter().filter(|&&c| c < 0.0).count();
    if dual_artificials < primal_artificials {
        if let Some(out) = solve_via_dual(p, tol) {
            return Ok(out);
        }
    }
    solve_direct(p, tol)
}

/// `max hᵀu s.t. −Gᵀu ≥ −c, u ≥ 0` for the minimisation form of `p`.
fn dual_problem(p: &LpProblem) -> LpProblem {
    let gt = p.g.transpose();
    let mut g = Matrix::zeros(0, gt.cols());
    for j in 0..gt.rows() {
        let row: Vec<f64> = gt.row(j).iter().map(|v| -v).collect();
        g.push_row(&row);
    }
    LpProblem {
        c: p.h.clone(),
        g,
        h: p.min_costs().iter().map(|v| -v).collect(),
        sense: Sense::Max,
        names: None,
    }
}

fn solve_via_dual(p: &LpProblem, tol: &ToleranceSet) -> Option<LpOutcome> {
    let out = match solve_direct(&dual_problem(p), tol).ok()? {
        LpOutcome::Finite { primal: u, dual: z, .. } => {
            let primal: Vec<f64> = z.into_iter().map(|v| v.max(0.0)).collect();
            LpOutcome::Finite {
                objective: dot(&p.c, &primal),
                primal,
                dual: u,
            }
        }
        // A dual ray is a Farkas vector for the primal.
        LpOutcome::Unbounded { ray } => LpOutcome::Infeasible { farkas: ray },
        // Primal unbounded or infeasible; the direct solve tells which.
        LpOutcome::Infeasible { .. } => return None,
    };
    check_certificate(p, &out, tol).then_some(out)
}

fn solve_direct(p: &LpProblem, tol: &ToleranceSet) -> Result<LpOutcome> {
    let params = simplex::Params {
        pivot_tol: tol.pivot,
        feas_tol: tol.feas,
        iteration_cap: 50 * (p.num_rows() + p.num_vars()).max(1),
    };
    let costs = p.min_costs();
    // Rows are equilibrated to unit max-norm; multipliers are mapped back.
    let scales: Vec<f64> = (0..p.num_rows())
        .map(|i| match norm_inf(p.g.row(i)) {
            s if s > 0.0 => s,
            _ => 1.0,
        })
        .collect();
    let mut g = p.g.clone();
    for (i, &s) in scales.iter().enumerate() {
        g.row_mut(i).iter_mut().for_each(|v| *v /= s);
    }
    let h: Vec<f64> = p.h.iter().zip(&scales).map(|(h, s)| h / s).collect();
    let unscale = |mult: Vec<f64>| -> Vec<f64> { mult.iter().zip(&scales).map(|(y, s)| y / s).collect() };
    let raw = simplex::minimize(&costs, &g, &h, &params)?;
    Ok(match raw {
        simplex::RawOutcome::Optimal { primal, dual } => {
            let objective = dot(&p.c, &primal);
            LpOutcome::Finite {
                primal,
                dual: unscale(dual),
                objective,
            }
        }
        simplex::RawOutcome::Unbounded { ray } => LpOutcome::Unbounded { ray },
        simplex::RawOutcome::Infeasible { farkas } => {
            let mut farkas = unscale(farkas);
            let top = norm_inf(&farkas);
            if top > 0.0 {
                farkas.iter_mut().for_each(|v| *v /= top);
            }
            LpOutcome::Infeasible { farkas }
        }
    })
}

/// Solves `p` and rejects any outcome whose certificate does not verify.
pub fn solve_checked(p: &LpProblem, tol: &ToleranceSet) -> Result<LpOutcome> {
    let out = solve(p, tol)?;
    if !check_certificate(p, &out, tol) {
        return Err(Error::NumericalFailure(format!(
            "{} outcome failed certificate verification ({} rows, {} columns)",
            out.kind(),
            p.num_rows(),
            p.num_vars()
        )));
    }
    Ok(out)
}

/// Verifies an outcome against the problem data.
///
/// Residuals are measured relative to the magnitude of the terms that
/// produce them, so badly scaled rows are not rejected for rounding noise.
pub fn check_certificate(p: &LpProblem, o: &LpOutcome, tol: &ToleranceSet) -> bool {
    if p.check_dimensions().is_err() {
        return false;
    }
    let n = p.num_vars();
    let m = p.num_rows();
    let costs = p.min_costs();
    let finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
    match o {
        LpOutcome::Finite {
            primal,
            dual,
            objective,
        } => {
            if primal.len() != n || dual.len() != m || !finite(primal) || !finite(dual) {
                return false;
            }
            if primal.iter().any(|&z| z < -tol.feas) || dual.iter().any(|&y| y < -tol.feas) {
                return false;
            }
            for i in 0..m {
                let row = p.g.row(i);
                let lhs = dot(row, primal);
                let mag: f64 = row.iter().zip(primal).map(|(a, z)| (a * z).abs()).sum();
                if lhs - p.h[i] < -tol.feas * (1.0 + p.h[i].abs() + mag) {
                    return false;
                }
            }
            let mut gty = vec![0.0; n];
            let mut mag = vec![0.0; n];
            for i in 0..m {
                for (j, &a) in p.g.row(i).iter().enumerate() {
                    gty[j] += a * dual[i];
                    mag[j] += (a * dual[i]).abs();
                }
            }
            for j in 0..n {
                if gty[j] - costs[j] > tol.feas * (1.0 + costs[j].abs() + mag[j]) {
                    return false;
                }
            }
            let primal_obj = dot(&costs, primal);
            let dual_obj = dot(&p.h, dual);
            let scale = 1.0 + objective.abs();
            if (primal_obj - dual_obj).abs() > tol.gap * scale {
                return false;
            }
            (objective - p.objective_at(primal)).abs() <= tol.gap * scale
        }
        LpOutcome::Unbounded { ray } => {
            if ray.len() != n || !finite(ray) {
                return false;
            }
            if ray.iter().any(|&r| r < -tol.feas) {
                return false;
            }
            if (norm_inf(ray) - 1.0).abs() > 1e-9 {
                return false;
            }
            for i in 0..m {
                let row = p.g.row(i);
                let mag: f64 = row.iter().zip(ray).map(|(a, r)| (a * r).abs()).sum();
                if dot(row, ray) < -tol.feas * (1.0 + mag) {
                    return false;
                }
            }
            dot(&costs, ray) < -tol.ray
        }
        LpOutcome::Infeasible { farkas } => {
            if farkas.len() != m || !finite(farkas) {
                return false;
            }
            if farkas.iter().any(|&y| y < -tol.feas) {
                return false;
            }
            let mut gty = vec![0.0; n];
            let mut mag = vec![0.0; n];
            for i in 0..m {
                for (j, &a) in p.g.row(i).iter().enumerate() {
                    gty[j] += a * farkas[i];
                    mag[j] += (a * farkas[i]).abs();
                }
            }
            if (0..n).any(|j| gty[j] > tol.feas * (1.0 + mag[j])) {
                return false;
            }
            dot(&p.h, farkas) >= tol.ray
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cmp {
    Ge,
    Le,
    Eq,
}

/// Row-by-row constructor for [`LpProblem`]. `≤` rows are negated and
/// equalities split into two inequalities.
#[derive(Debug, Clone)]
pub struct LpBuilder {
    sense: Sense,
    c: Vec<f64>,
    rows: Vec<(Vec<(usize, f64)>, f64)>,
}

impl LpBuilder {
    pub fn new(sense: Sense) -> Self {
        Self {
            sense,
            c: Vec::new(),
            rows: Vec::new(),
        }
    }

    /// Adds `costs.len()` variables and returns the index of the first.
    pub fn add_vars(&mut self, costs: &[f64]) -> usize {
        let start = self.c.len();
        self.c.extend_from_slice(costs);
        start
    }

    pub fn add_var(&mut self, cost: f64) -> usize {
        self.add_vars(&[cost])
    }

    pub fn num_vars(&self) -> usize {
        self.c.len()
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn set_cost(&mut self, j: usize, cost: f64) {
        self.c[j] = cost;
    }

    pub fn add_row<I>(&mut self, terms: I, cmp: Cmp, rhs: f64)
    where
        I: IntoIterator<Item = (usize, f64)>,
    {
        let terms: Vec<(usize, f64)> = terms.into_iter().filter(|&(_, a)| a != 0.0).collect();
        match cmp {
            Cmp::Ge => self.rows.push((terms, rhs)),
            Cmp::Le => self
                .rows
                .push((terms.into_iter().map(|(j, a)| (j, -a)).collect(), -rhs)),
            Cmp::Eq => {
                let neg = terms.iter().map(|&(j, a)| (j, -a)).collect();
                self.rows.push((terms, rhs));
                self.rows.push((neg, -rhs));
            }
        }
    }

    pub fn build(self) -> LpProblem {
        let n = self.c.len();
        let mut g = Matrix::zeros(self.rows.len(), n);
        let mut h = Vec::with_capacity(self.rows.len());
        for (i, (terms, rhs)) in self.rows.into_iter().enumerate() {
            for (j, a) in terms {
                g[(i, j)] += a;
            }
            h.push(rhs);
        }
        LpProblem {
            c: self.c,
            g,
            h,
            sense: self.sense,
            names: None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lp(sense: Sense, c: &[f64], rows: &[Vec<f64>], h: &[f64]) -> LpProblem {
        LpProblem::new(
            sense,
            c.to_vec(),
            Matrix::from_rows(c.len(), rows).unwrap(),
            h.to_vec(),
        )
        .unwrap()
    }

    #[test]
    fn bounded_single_variable() {
        let p = lp(Sense::Min, &[-1.0], &[vec![-1.0]], &[-1.0]);
        let tol = ToleranceSet::default();
        let out = solve(&p, &tol).unwrap();
        match &out {
            LpOutcome::Finite {
                primal, objective, ..
            } => {
                assert!((primal[0] - 1.0).abs() < 1e-12);
                assert!((objective + 1.0).abs() < 1e-12);
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(check_certificate(&p, &out, &tol));
    }

    #[test]
    fn unbounded_without_rows() {
        let p = lp(Sense::Min, &[-1.0], &[], &[]);
        let tol = ToleranceSet::default();
        let out = solve(&p, &tol).unwrap();
        assert_eq!(out, LpOutcome::Unbounded { ray: vec![1.0] });
        assert!(check_certificate(&p, &out, &tol));
    }

    #[test]
    fn infeasible_pair_sums_rows() {
        let p = lp(Sense::Min, &[0.0], &[vec![1.0], vec![-1.0]], &[1.0, 0.0]);
        let tol = ToleranceSet::default();
        let out = solve(&p, &tol).unwrap();
        match &out {
            LpOutcome::Infeasible { farkas } => {
                assert!((farkas[0] - farkas[1]).abs() < 1e-12);
                assert!(farkas[0] > 0.0);
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(check_certificate(&p, &out, &tol));
    }

    #[test]
    fn maximisation_reports_original_sense() {
        // max x + y  s.t. x + 2y ≤ 4, 3x + y ≤ 6
        let p = lp(
            Sense::Max,
            &[1.0, 1.0],
            &[vec![-1.0, -2.0], vec![-3.0, -1.0]],
            &[-4.0, -6.0],
        );
        let tol = ToleranceSet::default();
        let out = solve(&p, &tol).unwrap();
        let LpOutcome::Finite { objective, .. } = &out else {
            panic!("expected optimum");
        };
        assert!((objective - 2.8).abs() < 1e-12);
        assert!(check_certificate(&p, &out, &tol));
    }

    #[test]
    fn perturbed_primal_rejected() {
        let p = lp(Sense::Min, &[-1.0], &[vec![-1.0]], &[-1.0]);
        let tol = ToleranceSet::default();
        let LpOutcome::Finite {
            primal,
            dual,
            objective,
        } = solve(&p, &tol).unwrap()
        else {
            panic!()
        };
        let bad = LpOutcome::Finite {
            primal: vec![primal[0] + 10.0 * tol.feas * 3.0],
            dual,
            objective,
        };
        assert!(!check_certificate(&p, &bad, &tol));
    }

    #[test]
    fn negative_ray_component_rejected() {
        let p = lp(Sense::Min, &[-1.0, 0.0], &[], &[]);
        let tol = ToleranceSet::default();
        let bad = LpOutcome::Unbounded {
            ray: vec![1.0, -1.0],
        };
        assert!(!check_certificate(&p, &bad, &tol));
    }

    #[test]
    fn builder_splits_equalities() {
        let mut b = LpBuilder::new(Sense::Min);
        let x = b.add_var(1.0);
        let y = b.add_var(2.0);
        b.add_row([(x, 1.0), (y, 1.0)], Cmp::Eq, 3.0);
        b.add_row([(y, 1.0)], Cmp::Le, 1.0);
        let p = b.build();
        assert_eq!(p.num_rows(), 3);
        let out = solve_checked(&p, &ToleranceSet::default()).unwrap();
        let LpOutcome::Finite { objective, .. } = out else {
            panic!()
        };
        assert!((objective - 3.0).abs() < 1e-12);
    }

    #[test]
    fn degenerate_cycling_example_terminates() {
        // Beale's classic cycling instance under Dantzig pricing.
        let p = lp(
            Sense::Min,
            &[-0.75, 150.0, -0.02, 6.0],
            &[
                vec![-0.25, 60.0, 0.04, -9.0],
                vec![-0.5, 90.0, 0.02, -3.0],
                vec![0.0, 0.0, -1.0, 0.0],
            ],
            &[0.0, 0.0, -1.0],
        );
        let tol = ToleranceSet::default();
        let out = solve(&p, &tol).unwrap();
        let LpOutcome::Finite { objective, .. } = &out else {
            panic!("expected optimum, got {out:?}")
        };
        assert!((objective + 0.05).abs() < 1e-9);
        assert!(check_certificate(&p, &out, &tol));
    }
}
