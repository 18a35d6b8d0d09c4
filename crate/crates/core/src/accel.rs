//! Feasibility-ray normalisation and in-out separation points.
//!
//! A feasibility cut is read from a ray of the subproblem dual. Rays of
//! unit ℓ₁ norm that maximise the cut violation give deeper cuts. Rays that
//! live entirely in one of the two split LPs are normalised by re-solving
//! that LP with the norm row. Rays that mix both (the follower side finite,
//! the leader side unbounded with `w > 0`) are normalised by a Newton root
//! search on
//!
//! ```text
//! t(λ) = t¹(λ) − t²(λ) − λ
//! t¹(λ) = max { ψᵀ(b − A x̂ − λ1) + u_yᵀ(h_y − G_xy x̂ − λ1) : Bᵀψ + G_yᵀu_y ≤ d }
//! t²(λ) = min { (d + λ1)ᵀy − vᵀ(k + K_x x̂ − λ1) − u_ψᵀ(h_ψ − G_xψ x̂ − λ1) : follower-side rows }
//! ```
//!
//! which keeps the two LPs separate. Its root is the best normalised
//! violation.

use crate::benders::{s1_costs, s1_rows, s2_problem_with, Cut, CutFamily, DualVector, S1Layout};
use crate::error::{Error, Result};
use crate::instance::MibpsdInstance;
use crate::linalg::{dot, norm_l1, Matrix};
use crate::lp::{self, LpOutcome, LpProblem, Sense, ToleranceSet};
use crate::reformulation::{build_bsp_dual, BspLayout, McCormickBlock};

/// Stopping threshold of the Newton search.
pub const NEWTON_EPS: f64 = 1e-7;
pub const NEWTON_MAX_ITERS: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RayCase {
    RayOfS1,
    RayOfS2WZero,
    NewtonCase,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedRay {
    pub ray: DualVector,
    pub source_case: RayCase,
}

impl NormalizedRay {
    pub fn l1_norm(&self) -> f64 {
        self.ray.l1_norm()
    }

    pub fn cut(&self, family: CutFamily, inst: &MibpsdInstance, mc: &McCormickBlock) -> Cut {
        Cut::from_dual(family, self.ray.clone(), inst, mc)
    }

    /// Checks nonnegativity and the homogeneous subproblem-dual rows
    /// `B y − K_ψᵀv − G_ψᵀu_ψ − b w ≥ 0`, `−Bᵀψ − G_yᵀu_y + d w ≥ 0`,
    /// `−K_sᵀv + σ w ≥ 0`, each within `tol`.
    pub fn is_homogeneous_ray(&self, inst: &MibpsdInstance, mc: &McCormickBlock, tol: f64) -> bool {
        let p = build_bsp_dual(inst, mc, &vec![0.0; inst.n1]);
        let z = self.ray.to_vec();
        z.iter().all(|&v| v >= -1e-9)
            && (0..p.num_rows()).all(|r| {
                let row = p.g.row(r);
                let mag: f64 = row.iter().zip(&z).map(|(a, b)| (a * b).abs()).sum();
                dot(row, &z) >= -tol * (1.0 + mag)
            })
    }
}

/// A ray of one of the two split LPs.
#[derive(Debug, Clone, PartialEq)]
pub enum SimpleRay {
    S1 { y: Vec<f64>, v: Vec<f64>, u_psi: Vec<f64> },
    S2 { psi: Vec<f64>, u_y: Vec<f64> },
}

impl SimpleRay {
    fn embed(&self, inst: &MibpsdInstance, mc: &McCormickBlock) -> DualVector {
        let mut d = DualVector::zeros(inst, mc);
        match self {
            SimpleRay::S1 { y, v, u_psi } => {
                d.y = y.clone();
                d.v = v.clone();
                d.u_psi = u_psi.clone();
            }
            SimpleRay::S2 { psi, u_y } => {
                d.psi = psi.clone();
                d.u_y = u_y.clone();
            }
        }
        d
    }
}

/// Appends `1ᵀz = 1` as two inequalities.
fn with_unit_sum(mut p: LpProblem) -> LpProblem {
    let n = p.num_vars();
    p.g.push_row(&vec![1.0; n]);
    p.h.push(1.0);
    p.g.push_row(&vec![-1.0; n]);
    p.h.push(-1.0);
    p
}

fn divided(ray: DualVector) -> DualVector {
    let n = ray.l1_norm();
    ray.scaled(1.0 / n)
}

/// Homogeneous follower-side LP with the unit-sum row.
fn s1_normal_lp(inst: &MibpsdInstance, mc: &McCormickBlock, x_hat: &[f64]) -> LpProblem {
    let (g, h) = s1_rows(inst, mc, 0.0);
    with_unit_sum(LpProblem {
        c: s1_costs(inst, mc, x_hat),
        g,
        h,
        sense: Sense::Min,
        names: None,
    })
}

/// Homogeneous leader-side LP (`w = 0`) with the unit-sum row.
fn s2_normal_lp(inst: &MibpsdInstance, x_hat: &[f64]) -> LpProblem {
    with_unit_sum(s2_problem_with(inst, x_hat, None, &vec![0.0; inst.n2]))
}

/// Best unit-norm ray of the same split LP as `ray`; falls back to
/// dividing `ray` by its ℓ₁ norm if the re-solve fails.
pub fn normalize_simple_ray(
    inst: &MibpsdInstance,
    mc: &McCormickBlock,
    x_hat: &[f64],
    ray: &SimpleRay,
) -> NormalizedRay {
    let tol = ToleranceSet::default();
    let (case, solved) = match ray {
        SimpleRay::S1 { .. } => {
            let lay = S1Layout::new(inst, mc);
            let out = lp::solve_checked(&s1_normal_lp(inst, mc, x_hat), &tol);
            let d = match out {
                Ok(LpOutcome::Finite { primal, .. }) => Some(
                    SimpleRay::S1 {
                        y: primal[lay.y..lay.v].to_vec(),
                        v: primal[lay.v..lay.u_psi].to_vec(),
                        u_psi: primal[lay.u_psi..lay.len].to_vec(),
                    }
                    .embed(inst, mc),
                ),
                _ => None,
            };
            (RayCase::RayOfS1, d)
        }
        SimpleRay::S2 { .. } => {
            let (m, p) = (inst.m, inst.p);
            let out = lp::solve_checked(&s2_normal_lp(inst, x_hat), &tol);
            let d = match out {
                Ok(LpOutcome::Finite { primal, .. }) => Some(
                    SimpleRay::S2 {
                        psi: primal[..m].to_vec(),
                        u_y: primal[m..m + p].to_vec(),
                    }
                    .embed(inst, mc),
                ),
                _ => None,
            };
            (RayCase::RayOfS2WZero, d)
        }
    };
    NormalizedRay {
        ray: solved.unwrap_or_else(|| divided(ray.embed(inst, mc))),
        source_case: case,
    }
}

/// One evaluation of `t(λ)` with the optimisers behind it.
#[derive(Debug, Clone, PartialEq)]
pub struct NewtonStep {
    pub lambda: f64,
    pub t: f64,
    /// `(ψ, u_y, 1, y, v, u_ψ)` from the two LPs at this `λ`.
    pub point: DualVector,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NewtonTrace {
    pub steps: Vec<NewtonStep>,
    pub ray: NormalizedRay,
}

/// `t(λ)`, or `None` when `t¹(λ)` is unbounded.
fn evaluate_t(inst: &MibpsdInstance, mc: &McCormickBlock, x_hat: &[f64], lambda: f64) -> Result<Option<NewtonStep>> {
    let tol = ToleranceSet::default();
    let (m, p) = (inst.m, inst.p);
    let mut p1 = s2_problem_with(inst, x_hat, None, &inst.d);
    for c in p1.c.iter_mut() {
        *c -= lambda;
    }
    let (psi, u_y, t1) = match lp::solve_checked(&p1, &tol)? {
        LpOutcome::Finite {
            primal, objective, ..
        } => (primal[..m].to_vec(), primal[m..m + p].to_vec(), objective),
        LpOutcome::Unbounded { .. } => return Ok(None),
        LpOutcome::Infeasible { .. } => {
            return Err(Error::AssumptionViolation("leader-side Newton subproblem is infeasible".into()))
        }
    };
    let (g, h) = s1_rows(inst, mc, 1.0);
    let mut c2 = s1_costs(inst, mc, x_hat);
    for c in c2.iter_mut() {
        *c += lambda;
    }
    let p2 = LpProblem {
        c: c2,
        g,
        h,
        sense: Sense::Min,
        names: None,
    };
    let lay = S1Layout::new(inst, mc);
    let (y, v, u_psi, t2) = match lp::solve_checked(&p2, &tol)? {
        LpOutcome::Finite {
            primal, objective, ..
        } => (
            primal[lay.y..lay.v].to_vec(),
            primal[lay.v..lay.u_psi].to_vec(),
            primal[lay.u_psi..lay.len].to_vec(),
            objective,
        ),
        other => {
            return Err(Error::NumericalFailure(format!(
                "follower-side Newton subproblem came back {}",
                other.kind()
            )))
        }
    };
    Ok(Some(NewtonStep {
        lambda,
        t: t1 - t2 - lambda,
        point: DualVector {
            psi,
            u_y,
            w: 1.0,
            y,
            v,
            u_psi,
        },
    }))
}

/// Runs the Newton search and reports every iterate.
///
/// Starts at `λ = 0`. If `t¹(0)` is unbounded, some `w = 0` ray already
/// separates; the search then starts at the value `λ₀` of the best unit-norm
/// such ray (where `t¹` becomes bounded), and returns that ray if
/// `t(λ₀) ≤ ε`.
pub fn newton_search(inst: &MibpsdInstance, mc: &McCormickBlock, x_hat: &[f64]) -> Result<NewtonTrace> {
    let mut steps = Vec::new();
    let mut step = match evaluate_t(inst, mc, x_hat, 0.0)? {
        Some(s) => s,
        None => {
            let r = normalize_simple_ray(
                inst,
                mc,
                x_hat,
                &SimpleRay::S2 {
                    psi: vec![0.0; inst.m],
                    u_y: vec![0.0; inst.p],
                },
            );
            let c = build_bsp_dual(inst, mc, x_hat).c;
            let lambda0 = dot(&c, &r.ray.to_vec());
            let mut found = None;
            for k in 0..8 {
                let lam = lambda0 + 1e-9 * 10f64.powi(k) * (1.0 + lambda0.abs());
                if let Some(s) = evaluate_t(inst, mc, x_hat, lam)? {
                    found = Some(s);
                    break;
                }
            }
            let s = found.ok_or(Error::NewtonStall { iterations: 0 })?;
            if s.t <= NEWTON_EPS {
                steps.push(s);
                return Ok(NewtonTrace { steps, ray: r });
            }
            s
        }
    };
    for _ in 0..NEWTON_MAX_ITERS {
        let t = step.t;
        let sum = norm_l1(&step.point.to_vec());
        steps.push(step.clone());
        if t <= NEWTON_EPS {
            let ray = step.point.scaled(1.0 / sum);
            return Ok(NewtonTrace {
                steps,
                ray: NormalizedRay {
                    ray,
                    source_case: RayCase::NewtonCase,
                },
            });
        }
        // Subgradient of t at λ is −‖point‖₁ (the w entry contributes the 1).
        let next = step.lambda + t / sum;
        step = evaluate_t(inst, mc, x_hat, next)?.ok_or(Error::NumericalFailure(
            "leader-side Newton subproblem became unbounded at a larger λ".into(),
        ))?;
    }
    Err(Error::NewtonStall {
        iterations: NEWTON_MAX_ITERS,
    })
}

/// Normalised ray for the mixed case, by Newton search; falls back to
/// dividing `seed` (the unnormalised `(ψ̃, ũ_y, w̃, w̃ŷ, w̃v̂, w̃û_ψ)`) by its
/// ℓ₁ norm when the search fails.
pub fn newton_normalized_ray(
    inst: &MibpsdInstance,
    mc: &McCormickBlock,
    x_hat: &[f64],
    _value: f64,
    seed: &DualVector,
) -> NormalizedRay {
    match newton_search(inst, mc, x_hat) {
        Ok(trace) => trace.ray,
        Err(_) => NormalizedRay {
            ray: divided(seed.clone()),
            source_case: RayCase::NewtonCase,
        },
    }
}

/// Solves the normalised subproblem dual as one LP: the homogeneous rows,
/// `1ᵀz = 1`, and the subproblem-dual objective. Returns `None` when no ray
/// with positive objective exists.
pub fn solve_normal_lp(inst: &MibpsdInstance, mc: &McCormickBlock, x_hat: &[f64]) -> Result<Option<(DualVector, f64)>> {
    let mut p = build_bsp_dual(inst, mc, x_hat);
    p.h.iter_mut().for_each(|h| *h = 0.0);
    let p = with_unit_sum(p);
    match lp::solve_checked(&p, &ToleranceSet::default())? {
        LpOutcome::Finite {
            primal, objective, ..
        } if objective > NEWTON_EPS => Ok(Some((
            DualVector::from_vec(&BspLayout::new(inst, mc), &primal),
            objective,
        ))),
        LpOutcome::Finite { .. } => Ok(None),
        other => Err(Error::NumericalFailure(format!(
            "normalised subproblem dual came back {}",
            other.kind()
        ))),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InOutPhase {
    InOut,
    Reverted,
}

pub const IN_OUT_LAMBDA: f64 = 0.5;
pub const IN_OUT_EPSILON: f64 = 1e-6;
/// Consecutive non-improving iterations that count as a stall.
pub const STALL_ITERATIONS: usize = 3;
const LAMBDA_FLOOR: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq)]
pub struct InOutState {
    pub lambda: f64,
    pub epsilon: f64,
    /// Consecutive iterations without a lower-bound improvement; maintained
    /// by the caller.
    pub stall_counter: usize,
    pub phase: InOutPhase,
    pub x_in: Option<Vec<f64>>,
}

impl Default for InOutState {
    fn default() -> Self {
        Self {
            lambda: IN_OUT_LAMBDA,
            epsilon: IN_OUT_EPSILON,
            stall_counter: 0,
            phase: InOutPhase::InOut,
            x_in: None,
        }
    }
}

impl InOutState {
    /// Restarts the schedule around a new incumbent.
    pub fn on_incumbent(&mut self, x: &[f64]) {
        *self = Self {
            x_in: Some(x.to_vec()),
            ..Self::default()
        };
    }

    /// Applies one stall: halve `λ`; once `λ < 1e-5` drop the perturbation;
    /// on the next stall revert to plain separation.
    fn on_stall(&mut self) {
        if self.lambda >= LAMBDA_FLOOR {
            self.lambda /= 2.0;
        } else if self.epsilon > 0.0 {
            self.epsilon = 0.0;
        } else {
            self.phase = InOutPhase::Reverted;
        }
    }
}

/// Separation point `λ x_in + (1 − λ) x_out + ε 1`, with binary coordinates
/// clipped to `[0, 1]`. A stall counter that reached
/// [`STALL_ITERATIONS`] advances the schedule first.
pub fn in_out_point(state: &InOutState, x_out: &[f64], binary: &[bool]) -> (Vec<f64>, InOutState) {
    let mut next = state.clone();
    let Some(x_in) = &state.x_in else {
        return (x_out.to_vec(), next);
    };
    if next.phase == InOutPhase::InOut && next.stall_counter >= STALL_ITERATIONS {
        next.stall_counter = 0;
        next.on_stall();
    }
    if next.phase == InOutPhase::Reverted {
        return (x_out.to_vec(), next);
    }
    let (lam, eps) = (next.lambda, next.epsilon);
    let x_sep = x_out
        .iter()
        .zip(x_in)
        .zip(binary)
        .map(|((&o, &i), &bin)| {
            let v = lam * i + (1.0 - lam) * o + eps;
            if bin {
                v.clamp(0.0, 1.0)
            } else {
                v
            }
        })
        .collect();
    (x_sep, next)
}

/// Rows `G z ≥ 0` of the homogeneous subproblem dual; used by tests that
/// check ray feasibility independently of the builders.
pub fn homogeneous_rows(inst: &MibpsdInstance, mc: &McCormickBlock) -> Matrix {
    build_bsp_dual(inst, mc, &vec![0.0; inst.n1]).g
}
