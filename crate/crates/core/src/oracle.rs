//! Brute-force bilevel reference solver.
//!
//! Every binary assignment is evaluated in two stages: the follower LP gives
//! the optimal follower value, then a restriction LP picks the leader's
//! favourite among the follower optima (and, with the extension block,
//! among the follower's optimal dual solutions).

use crate::error::{Error, Result};
use crate::instance::MibpsdInstance;
use crate::linalg::{dot, sub};
use crate::lp::{self, Cmp, LpBuilder, LpOutcome, Sense, ToleranceSet};

/// Enumeration refuses more binaries than this.
pub const MAX_ENUMERATED_BINARIES: usize = 20;
/// [`verify_solution`] re-runs the enumeration up to this many binaries.
pub const REVERIFY_BINARIES: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OracleStatus {
    Optimal,
    Infeasible,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BilevelSolution {
    pub status: OracleStatus,
    pub x_star: Vec<f64>,
    pub y_star: Vec<f64>,
    /// Follower dual solution; only set for instances with an extension block.
    pub psi_star: Option<Vec<f64>>,
    pub objective: f64,
}

impl BilevelSolution {
    pub fn infeasible() -> Self {
        Self {
            status: OracleStatus::Infeasible,
            x_star: Vec::new(),
            y_star: Vec::new(),
            psi_star: None,
            objective: f64::INFINITY,
        }
    }
}

/// Best leader completion at one binary assignment.
#[derive(Debug, Clone, PartialEq)]
pub struct Response {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub psi: Option<Vec<f64>>,
    pub objective: f64,
}

/// Leader vector for the `code`-th binary assignment: bit `k` of `code`
/// sets binary `binary_indices[k]`; continuous entries are zero.
pub(crate) fn assignment(inst: &MibpsdInstance, code: usize) -> Vec<f64> {
    let mut x = vec![0.0; inst.n1];
    for (k, &i) in inst.binary_indices.iter().enumerate() {
        if code >> k & 1 == 1 {
            x[i] = 1.0;
        }
    }
    x
}

/// Slack granted to the follower value bound; keeps the restriction LP from
/// flipping to infeasible on rounding noise.
fn value_slack(v: f64) -> f64 {
    1e-9 * (1.0 + v.abs())
}

/// Solves the two stages at a fixed binary part `xb`. Returns `None` when
/// the follower has no finite optimum or no follower optimum can be
/// completed to satisfy the leader's rows.
pub(crate) fn best_response_at(
    inst: &MibpsdInstance,
    xb: &[f64],
    tol: &ToleranceSet,
) -> Result<Option<Response>> {
    response_fixing(inst, xb, &inst.binary_mask(), tol)
}

/// Optimistic follower response at a fully fixed leader decision `x`:
/// the follower optimum (and, with the extension block, dual optimum) that
/// is cheapest for the leader. `None` if no such response meets the
/// upper-level rows.
pub fn optimistic_response(inst: &MibpsdInstance, x: &[f64]) -> Result<Option<Response>> {
    response_fixing(inst, x, &vec![true; inst.n1], &ToleranceSet::default())
}

/// Restriction LP with the leader entries marked in `mask` fixed to `xb`.
fn response_fixing(
    inst: &MibpsdInstance,
    xb: &[f64],
    mask: &[bool],
    tol: &ToleranceSet,
) -> Result<Option<Response>> {
    let follower_value = match lp::solve_checked(&inst.follower_lp(xb), tol)? {
        LpOutcome::Finite { objective, .. } => objective,
        _ => return Ok(None),
    };
    let rhs_lower = sub(&inst.b, &inst.a.mul_vec(xb));

    let mut lp = LpBuilder::new(Sense::Min);
    // Continuous leader variables get their own columns; binaries are data.
    let mut col = vec![usize::MAX; inst.n1];
    for i in 0..inst.n1 {
        if !mask[i] {
            col[i] = lp.add_var(inst.c_x[i]);
        }
    }
    let y0 = lp.add_vars(&inst.c_y);

    let leader_terms = |row: &[f64]| -> (Vec<(usize, f64)>, f64) {
        let mut terms = Vec::new();
        let mut shift = 0.0;
        for (i, &a) in row.iter().enumerate() {
            if mask[i] {
                shift += a * xb[i];
            } else {
                terms.push((col[i], a));
            }
        }
        (terms, shift)
    };

    for r in 0..inst.p {
        let (mut terms, shift) = leader_terms(inst.g_xy.row(r));
        terms.extend(inst.g_y.row(r).iter().enumerate().map(|(k, &a)| (y0 + k, a)));
        lp.add_row(terms, Cmp::Ge, inst.h_y[r] - shift);
    }
    for j in 0..inst.m {
        let terms = inst.b_mat.row(j).iter().enumerate().map(|(k, &a)| (y0 + k, a));
        lp.add_row(terms.collect::<Vec<_>>(), Cmp::Ge, rhs_lower[j]);
    }
    let terms: Vec<_> = inst.d.iter().enumerate().map(|(k, &a)| (y0 + k, a)).collect();
    lp.add_row(terms, Cmp::Le, follower_value + value_slack(follower_value));

    let psi0 = inst.extension.as_ref().map(|ext| {
        let psi0 = lp.add_vars(&vec![0.0; inst.m]);
        for k in 0..inst.n2 {
            let terms: Vec<_> = (0..inst.m).map(|j| (psi0 + j, inst.b_mat[(j, k)])).collect();
            lp.add_row(terms, Cmp::Le, inst.d[k]);
        }
        let terms: Vec<_> = (0..inst.m).map(|j| (psi0 + j, rhs_lower[j])).collect();
        lp.add_row(terms, Cmp::Ge, follower_value - value_slack(follower_value));
        for r in 0..ext.q() {
            let (mut terms, shift) = leader_terms(ext.g_xpsi.row(r));
            terms.extend(ext.g_psi.row(r).iter().enumerate().map(|(j, &a)| (psi0 + j, a)));
            lp.add_row(terms, Cmp::Ge, ext.h_psi[r] - shift);
        }
        psi0
    });

    match lp::solve_checked(&lp.build(), tol)? {
        LpOutcome::Finite { primal, .. } => {
            let mut x = xb.to_vec();
            for i in 0..inst.n1 {
                if !mask[i] {
                    x[i] = primal[col[i]];
                }
            }
            let y = primal[y0..y0 + inst.n2].to_vec();
            let psi = psi0.map(|s| primal[s..s + inst.m].to_vec());
            let objective = dot(&inst.c_x, &x) + dot(&inst.c_y, &y);
            Ok(Some(Response {
                x,
                y,
                psi,
                objective,
            }))
        }
        LpOutcome::Infeasible { .. } => Ok(None),
        LpOutcome::Unbounded { .. } => Err(Error::AssumptionViolation(
            "leader objective is unbounded below over the follower's optimal set".into(),
        )),
    }
}

/// Enumerates every binary assignment and returns the best bilevel-feasible
/// point, or `Infeasible` when none exists.
pub fn solve_bruteforce(inst: &MibpsdInstance) -> Result<BilevelSolution> {
    inst.check_dimensions()?;
    let nb = inst.binary_indices.len();
    if nb > MAX_ENUMERATED_BINARIES {
        return Err(Error::EnumerationTooLarge {
            binaries: nb,
            limit: MAX_ENUMERATED_BINARIES,
        });
    }
    let tol = ToleranceSet::default();
    let mut best: Option<Response> = None;
    for code in 0..1usize << nb {
        let xb = assignment(inst, code);
        if let Some(resp) = best_response_at(inst, &xb, &tol)? {
            if best.as_ref().is_none_or(|b| resp.objective < b.objective) {
                best = Some(resp);
            }
        }
    }
    Ok(match best {
        None => BilevelSolution::infeasible(),
        Some(r) => BilevelSolution {
            status: OracleStatus::Optimal,
            x_star: r.x,
            y_star: r.y,
            psi_star: r.psi,
            objective: r.objective,
        },
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerificationReport {
    pub checks: Vec<(String, bool)>,
}

impl VerificationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|(_, ok)| *ok)
    }

    pub fn failed(&self) -> Vec<&str> {
        self.checks
            .iter()
            .filter(|(_, ok)| !ok)
            .map(|(name, _)| name.as_str())
            .collect()
    }

    fn push(&mut self, name: &str, ok: bool) {
        self.checks.push((name.to_string(), ok));
    }
}

/// Checks a claimed solution: sign and integrality, upper-level rows,
/// follower feasibility and optimality, the dual-side rows, the reported
/// objective, and (for at most [`REVERIFY_BINARIES`] binaries) agreement
/// with a fresh enumeration.
pub fn verify_solution(inst: &MibpsdInstance, sol: &BilevelSolution, tol: f64) -> VerificationReport {
    let mut rep = VerificationReport { checks: Vec::new() };
    let rel = |v: f64| tol * (1.0 + v.abs());
    if inst.check_dimensions().is_err() {
        rep.push("dimensions", false);
        return rep;
    }
    if sol.status == OracleStatus::Optimal {
        let (x, y) = (&sol.x_star, &sol.y_star);
        if x.len() != inst.n1 || y.len() != inst.n2 {
            rep.push("solution length", false);
            return rep;
        }
        let mask = inst.binary_mask();
        rep.push(
            "leader domain",
            (0..inst.n1).all(|i| {
                x[i] >= -tol && (!mask[i] || x[i].abs() <= tol || (x[i] - 1.0).abs() <= tol)
            }),
        );
        rep.push("follower sign", y.iter().all(|&v| v >= -tol));
        let upper = crate::linalg::add(&inst.g_xy.mul_vec(x), &inst.g_y.mul_vec(y));
        rep.push(
            "upper-level rows",
            (0..inst.p).all(|r| upper[r] >= inst.h_y[r] - rel(inst.h_y[r])),
        );
        let lower = crate::linalg::add(&inst.a.mul_vec(x), &inst.b_mat.mul_vec(y));
        rep.push(
            "follower feasibility",
            (0..inst.m).all(|j| lower[j] >= inst.b[j] - rel(inst.b[j])),
        );
        let value = dot(&inst.d, y);
        let optimal = match lp::solve(&inst.follower_lp(x), &ToleranceSet::default()) {
            Ok(LpOutcome::Finite { objective, .. }) => value <= objective + rel(objective),
            _ => false,
        };
        rep.push("follower optimality", optimal);
        if let Some(ext) = &inst.extension {
            let ok = sol.psi_star.as_ref().is_some_and(|psi| {
                let rows = crate::linalg::add(&ext.g_xpsi.mul_vec(x), &ext.g_psi.mul_vec(psi));
                let dual_feas = inst
                    .b_mat
                    .tr_mul_vec(psi)
                    .iter()
                    .zip(&inst.d)
                    .all(|(l, d)| *l <= d + rel(*d));
                let dual_val = dot(psi, &sub(&inst.b, &inst.a.mul_vec(x)));
                psi.len() == inst.m
                    && psi.iter().all(|&v| v >= -tol)
                    && dual_feas
                    && dual_val >= value - rel(value)
                    && (0..ext.q()).all(|r| rows[r] >= ext.h_psi[r] - rel(ext.h_psi[r]))
            });
            rep.push("dual-side rows", ok);
        }
        let obj = inst.leader_objective(x, y);
        rep.push("objective value", (obj - sol.objective).abs() <= rel(obj));
    }
    if inst.binary_indices.len() <= REVERIFY_BINARIES {
        let ok = match solve_bruteforce(inst) {
            Ok(fresh) => {
                fresh.status == sol.status
                    && (fresh.status == OracleStatus::Infeasible
                        || (fresh.objective - sol.objective).abs() <= 1e-6 * (1.0 + fresh.objective.abs()))
            }
            Err(_) => false,
        };
        rep.push("matches enumeration", ok);
    }
    rep
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::fixtures::t1;
    use crate::linalg::Matrix;

    #[test]
    fn t1_optimum() {
        let sol = solve_bruteforce(&t1()).unwrap();
        assert_eq!(sol.status, OracleStatus::Optimal);
        assert_eq!(sol.x_star, vec![0.0]);
        assert!((sol.y_star[0] - 1.0).abs() < 1e-9);
        assert!((sol.objective - 1.0).abs() < 1e-9);
        assert!(verify_solution(&t1(), &sol, 1e-7).passed());
    }

    #[test]
    fn no_binaries_is_one_solve() {
        let mut inst = t1();
        inst.binary_indices.clear();
        inst.a = Matrix::from_rows(1, &[vec![0.0]]).unwrap();
        inst.c_x = vec![1.0];
        let sol = solve_bruteforce(&inst).unwrap();
        assert_eq!(sol.status, OracleStatus::Optimal);
        assert!((sol.objective - 1.0).abs() < 1e-9);
    }

    #[test]
    fn unreachable_upper_row_is_infeasible() {
        let mut inst = t1();
        inst.h_y = vec![2.0];
        assert_eq!(solve_bruteforce(&inst).unwrap().status, OracleStatus::Infeasible);
    }

    #[test]
    fn perturbed_answers_rejected() {
        let inst = t1();
        let sol = solve_bruteforce(&inst).unwrap();
        let mut low_y = sol.clone();
        low_y.y_star = vec![0.9];
        let rep = verify_solution(&inst, &low_y, 1e-7);
        assert!(rep.failed().contains(&"follower feasibility"), "{rep:?}");
        let mut wrong_obj = sol;
        wrong_obj.objective = 0.5;
        let rep = verify_solution(&inst, &wrong_obj, 1e-7);
        assert!(rep.failed().contains(&"objective value"));
        assert!(rep.failed().contains(&"matches enumeration"));
    }

    #[test]
    fn optimistic_choice_among_follower_optima() {
        // Follower min 0·y1 + 0·y2 s.t. y1 + y2 ≥ 1: every split is optimal;
        // the leader prefers y2 (cost 1) over y1 (cost 3).
        let inst = MibpsdInstance {
            n1: 1,
            n2: 2,
            m: 1,
            p: 0,
            binary_indices: vec![0],
            c_x: vec![0.0],
            c_y: vec![3.0, 1.0],
            d: vec![0.0, 0.0],
            a: Matrix::from_rows(1, &[vec![0.0]]).unwrap(),
            b_mat: Matrix::from_rows(2, &[vec![1.0, 1.0]]).unwrap(),
            b: vec![1.0],
            g_xy: Matrix::zeros(0, 1),
            g_y: Matrix::zeros(0, 2),
            h_y: vec![],
            extension: None,
            psi_bound: None,
        };
        let sol = solve_bruteforce(&inst).unwrap();
        assert!((sol.objective - 1.0).abs() < 1e-9);
        assert!((sol.y_star[1] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn too_many_binaries_refused() {
        let n = MAX_ENUMERATED_BINARIES + 1;
        let inst = MibpsdInstance {
            n1: n,
            n2: 1,
            m: 1,
            p: 0,
            binary_indices: (0..n).collect(),
            c_x: vec![0.0; n],
            c_y: vec![0.0],
            d: vec![1.0],
            a: Matrix::zeros(1, n),
            b_mat: Matrix::from_rows(1, &[vec![1.0]]).unwrap(),
            b: vec![0.0],
            g_xy: Matrix::zeros(0, n),
            g_y: Matrix::zeros(0, 1),
            h_y: vec![],
            extension: None,
            psi_bound: None,
        };
        assert!(matches!(
            solve_bruteforce(&inst),
            Err(Error::EnumerationTooLarge { binaries: 21, .. })
        ));
    }
}
