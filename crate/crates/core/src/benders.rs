//! Benders separation for the single-level reformulation.
//!
//! The subproblem dual at a leader point `x̂` (see
//! [`build_bsp_dual`](crate::reformulation::build_bsp_dual)) splits into two
//! LPs that are solved one after the other:
//!
//! * the follower side, `min dᵀy − vᵀ(k + K_x x̂) − u_ψᵀ(h_ψ − G_xψ x̂)` over
//!   `B y − K_ψᵀv − G_ψᵀu_ψ ≥ b`, `K_sᵀv ≤ σ`, whose value `𝔒` is the
//!   follower's optimal cost at `x̂`;
//! * the leader side, `max ψᵀ(b − A x̂) + u_yᵀ(h_y − G_xy x̂) − 𝔒 w` over
//!   `Bᵀψ + G_yᵀu_y ≤ d w + c_y`, which prices the follower optima against
//!   the upper-level rows.
//!
//! Their outcomes decide which of four cut families is emitted.

use std::time::Instant;

use crate::accel::{self, NormalizedRay, SimpleRay};
use crate::error::{Error, Result};
use crate::instance::MibpsdInstance;
use crate::linalg::{dot, norm_l1, sub, Matrix};
use crate::lp::{self, LpOutcome, LpProblem, Sense, ToleranceSet};
use crate::reformulation::{build_bsp_dual, BspLayout, McCormickBlock};

/// Minimum violation for a cut to count as separating.
pub const CUT_VIOLATION_TOL: f64 = 1e-7;
/// Distance from `{0, 1}` below which a binary coordinate counts as integral.
pub const INTEGRALITY_TOL: f64 = 1e-9;

/// Outcome of the follower-side LP.
#[derive(Debug, Clone, PartialEq)]
pub enum S1Outcome {
    Finite {
        y_hat: Vec<f64>,
        v_hat: Vec<f64>,
        u_psi_hat: Vec<f64>,
        /// Follower value `𝔒`.
        value: f64,
        /// Row multipliers: the follower dual `ψ` ...
        psi: Vec<f64>,
        /// ... and the linearised products `s`.
        s: Vec<f64>,
    },
    Unbounded {
        y_tilde: Vec<f64>,
        v_tilde: Vec<f64>,
        u_psi_tilde: Vec<f64>,
        /// `dᵀỹ − ṽᵀ(k + K_x x̂) − ũ_ψᵀ(h_ψ − G_xψ x̂) < 0`.
        improvement: f64,
    },
}

impl S1Outcome {
    pub fn value(&self) -> Option<f64> {
        match self {
            S1Outcome::Finite { value, .. } => Some(*value),
            S1Outcome::Unbounded { .. } => None,
        }
    }
}

/// Outcome of the leader-side LP.
#[derive(Debug, Clone, PartialEq)]
pub enum S2Outcome {
    Finite {
        psi_hat: Vec<f64>,
        u_y_hat: Vec<f64>,
        w_hat: f64,
        value: f64,
        /// Row multipliers: a follower response that is best for the leader.
        y: Vec<f64>,
    },
    Unbounded {
        psi_tilde: Vec<f64>,
        u_y_tilde: Vec<f64>,
        w_tilde: f64,
        /// Objective growth along the ray, `> 0`.
        improvement: f64,
    },
}

impl S2Outcome {
    pub fn value(&self) -> Option<f64> {
        match self {
            S2Outcome::Finite { value, .. } => Some(*value),
            S2Outcome::Unbounded { .. } => None,
        }
    }
}

/// A point or ray `(ψ, u_y, w, y, v, u_ψ)` of the subproblem dual.
#[derive(Debug, Clone, PartialEq)]
pub struct DualVector {
    pub psi: Vec<f64>,
    pub u_y: Vec<f64>,
    pub w: f64,
    pub y: Vec<f64>,
    pub v: Vec<f64>,
    pub u_psi: Vec<f64>,
}

impl DualVector {
    pub fn zeros(inst: &MibpsdInstance, mc: &McCormickBlock) -> Self {
        Self {
            psi: vec![0.0; inst.m],
            u_y: vec![0.0; inst.p],
            w: 0.0,
            y: vec![0.0; inst.n2],
            v: vec![0.0; mc.num_rows()],
            u_psi: vec![0.0; inst.q()],
        }
    }

    /// `(ψ, u_y, w, w·y, w·v, w·u_ψ)`.
    pub fn combine(psi: &[f64], u_y: &[f64], w: f64, y: &[f64], v: &[f64], u_psi: &[f64]) -> Self {
        let sc = |x: &[f64]| x.iter().map(|a| w * a).collect();
        Self {
            psi: psi.to_vec(),
            u_y: u_y.to_vec(),
            w,
            y: sc(y),
            v: sc(v),
            u_psi: sc(u_psi),
        }
    }

    pub fn to_vec(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.len());
        out.extend(&self.psi);
        out.extend(&self.u_y);
        out.push(self.w);
        out.extend(&self.y);
        out.extend(&self.v);
        out.extend(&self.u_psi);
        out
    }

    pub fn from_vec(lay: &BspLayout, z: &[f64]) -> Self {
        Self {
            psi: z[lay.psi.clone()].to_vec(),
            u_y: z[lay.u_y.clone()].to_vec(),
            w: z[lay.w],
            y: z[lay.y.clone()].to_vec(),
            v: z[lay.v.clone()].to_vec(),
            u_psi: z[lay.u_psi.clone()].to_vec(),
        }
    }

    pub fn len(&self) -> usize {
        self.psi.len() + self.u_y.len() + 1 + self.y.len() + self.v.len() + self.u_psi.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn l1_norm(&self) -> f64 {
        norm_l1(&self.to_vec())
    }

    pub fn scaled(&self, alpha: f64) -> Self {
        let sc = |x: &[f64]| x.iter().map(|a| alpha * a).collect();
        Self {
            psi: sc(&self.psi),
            u_y: sc(&self.u_y),
            w: alpha * self.w,
            y: sc(&self.y),
            v: sc(&self.v),
            u_psi: sc(&self.u_psi),
        }
    }

    /// The affine form `E(x) = const + coefᵀx` with
    ///
    /// ```text
    /// E(x) = ψᵀ(b − A x) + u_yᵀ(h_y − G_xy x) − dᵀy + vᵀ(k + K_x x) + u_ψᵀ(h_ψ − G_xψ x)
    /// ```
    ///
    /// which is the subproblem dual objective as a function of `x`.
    pub fn affine_form(&self, inst: &MibpsdInstance, mc: &McCormickBlock) -> (Vec<f64>, f64) {
        let mut constant = dot(&self.psi, &inst.b) + dot(&self.u_y, &inst.h_y) - dot(&inst.d, &self.y)
            + dot(&self.v, &mc.k);
        let mut coef = vec![0.0; inst.n1];
        let sub_from = |coef: &mut Vec<f64>, v: Vec<f64>| {
            for (c, x) in coef.iter_mut().zip(v) {
                *c -= x;
            }
        };
        sub_from(&mut coef, inst.a.tr_mul_vec(&self.psi));
        sub_from(&mut coef, inst.g_xy.tr_mul_vec(&self.u_y));
        for (c, x) in coef.iter_mut().zip(mc.k_x.tr_mul_vec(&self.v)) {
            *c += x;
        }
        if let Some(ext) = &inst.extension {
            constant += dot(&self.u_psi, &ext.h_psi);
            sub_from(&mut coef, ext.g_xpsi.tr_mul_vec(&self.u_psi));
        }
        (coef, constant)
    }

    pub fn value_at(&self, inst: &MibpsdInstance, mc: &McCormickBlock, x: &[f64]) -> f64 {
        let (coef, constant) = self.affine_form(inst, mc);
        dot(&coef, x) + constant
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CutFamily {
    /// `t ≥ E(x)` from a subproblem optimum.
    C1Optimality,
    /// The follower problem has no finite optimum at `x`.
    C2LowerInfeasible,
    /// No follower-feasible point meets the upper-level rows.
    C3UpperRay,
    /// No follower-optimal point meets the upper-level rows.
    C4OptimalFace,
}

impl CutFamily {
    pub fn label(&self) -> &'static str {
        match self {
            CutFamily::C1Optimality => "C1",
            CutFamily::C2LowerInfeasible => "C2",
            CutFamily::C3UpperRay => "C3",
            CutFamily::C4OptimalFace => "C4",
        }
    }

    pub fn is_feasibility(&self) -> bool {
        *self != CutFamily::C1Optimality
    }
}

/// `coef_t · t ≥ coef_xᵀx + rhs`, with `coef_t = 1` for optimality cuts and
/// `0` for feasibility cuts.
#[derive(Debug, Clone, PartialEq)]
pub struct Cut {
    pub family: CutFamily,
    pub coef_x: Vec<f64>,
    pub coef_t: f64,
    pub rhs: f64,
    /// The subproblem point or ray the cut was read from.
    pub source: DualVector,
}

impl Cut {
    pub fn from_dual(
        family: CutFamily,
        source: DualVector,
        inst: &MibpsdInstance,
        mc: &McCormickBlock,
    ) -> Self {
        let (coef_x, rhs) = source.affine_form(inst, mc);
        let coef_t = if family.is_feasibility() { 0.0 } else { 1.0 };
        Self {
            family,
            coef_x,
            coef_t,
            rhs,
            source,
        }
    }

    /// Amount by which `(x, t)` violates the cut; positive means cut off.
    pub fn violation(&self, x: &[f64], t: f64) -> f64 {
        dot(&self.coef_x, x) + self.rhs - self.coef_t * t
    }

    /// Scale used to make violations comparable across cuts.
    pub fn scale(&self) -> f64 {
        1.0 + self.rhs.abs() + self.coef_x.iter().map(|c| c.abs()).sum::<f64>()
    }

    pub fn is_violated(&self, x: &[f64], t: f64) -> bool {
        self.violation(x, t) > CUT_VIOLATION_TOL
    }
}

/// A bilevel-feasible leader point found during separation.
#[derive(Debug, Clone, PartialEq)]
pub struct FeasiblePoint {
    pub x_hat: Vec<f64>,
    pub objective: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Separation {
    pub cuts: Vec<Cut>,
    pub feasible_point: Option<FeasiblePoint>,
    /// Normalised rays behind feasibility cuts, when normalisation was on.
    pub normalized: Vec<NormalizedRay>,
}

pub fn is_integral(inst: &MibpsdInstance, x: &[f64]) -> bool {
    inst.binary_indices
        .iter()
        .all(|&i| x[i].abs() <= INTEGRALITY_TOL || (x[i] - 1.0).abs() <= INTEGRALITY_TOL)
}

fn violation_error(what: &str) -> Error {
    Error::AssumptionViolation(format!("{what} is infeasible"))
}

/// Column starts of the follower-side LP over `(y, v, u_ψ)`.
pub(crate) struct S1Layout {
    pub y: usize,
    pub v: usize,
    pub u_psi: usize,
    pub len: usize,
}

impl S1Layout {
    pub(crate) fn new(inst: &MibpsdInstance, mc: &McCormickBlock) -> Self {
        let v = inst.n2;
        let u_psi = v + mc.num_rows();
        Self {
            y: 0,
            v,
            u_psi,
            len: u_psi + inst.q(),
        }
    }
}

/// Constraint block of the follower-side LP:
/// `B y − K_ψᵀv − G_ψᵀu_ψ ≥ b·w` and `−K_sᵀv ≥ −σ·w` with the given `w`.
pub(crate) fn s1_rows(inst: &MibpsdInstance, mc: &McCormickBlock, w: f64) -> (Matrix, Vec<f64>) {
    let lay = S1Layout::new(inst, mc);
    let rows = inst.m + mc.num_terms();
    let mut g = Matrix::zeros(rows, lay.len);
    let mut h = vec![0.0; rows];
    for j in 0..inst.m {
        for k in 0..inst.n2 {
            g[(j, lay.y + k)] = inst.b_mat[(j, k)];
        }
        for r in 0..mc.num_rows() {
            g[(j, lay.v + r)] = -mc.k_psi[(r, j)];
        }
        if let Some(ext) = &inst.extension {
            for r in 0..ext.q() {
                g[(j, lay.u_psi + r)] = -ext.g_psi[(r, j)];
            }
        }
        h[j] = w * inst.b[j];
    }
    for (t, term) in mc.terms.iter().enumerate() {
        let row = inst.m + t;
        for r in 0..mc.num_rows() {
            g[(row, lay.v + r)] = -mc.k_s[(r, t)];
        }
        h[row] = -w * term.sigma();
    }
    (g, h)
}

/// Objective of the follower-side LP:
/// `dᵀy − vᵀ(k + K_x x̂) − u_ψᵀ(h_ψ − G_xψ x̂)`.
pub(crate) fn s1_costs(inst: &MibpsdInstance, mc: &McCormickBlock, x_hat: &[f64]) -> Vec<f64> {
    let lay = S1Layout::new(inst, mc);
    let mut c = vec![0.0; lay.len];
    c[..inst.n2].copy_from_slice(&inst.d);
    for (r, v) in mc.rhs_at(x_hat).into_iter().enumerate() {
        c[lay.v + r] = -v;
    }
    if let Some(ext) = &inst.extension {
        for (r, v) in sub(&ext.h_psi, &ext.g_xpsi.mul_vec(x_hat)).into_iter().enumerate() {
            c[lay.u_psi + r] = -v;
        }
    }
    c
}

pub fn s1_problem(inst: &MibpsdInstance, mc: &McCormickBlock, x_hat: &[f64]) -> LpProblem {
    let (g, h) = s1_rows(inst, mc, 1.0);
    LpProblem {
        c: s1_costs(inst, mc, x_hat),
        g,
        h,
        sense: Sense::Min,
        names: None,
    }
}

/// Solves the follower-side LP at `x̂`.
pub fn solve_s1(inst: &MibpsdInstance, mc: &McCormickBlock, x_hat: &[f64]) -> Result<S1Outcome> {
    let p = s1_problem(inst, mc, x_hat);
    let lay = S1Layout::new(inst, mc);
    let split = |z: &[f64]| {
        (
            z[lay.y..lay.v].to_vec(),
            z[lay.v..lay.u_psi].to_vec(),
            z[lay.u_psi..lay.len].to_vec(),
        )
    };
    match lp::solve_checked(&p, &ToleranceSet::default())? {
        LpOutcome::Finite {
            primal,
            dual,
            objective,
        } => {
            let (y_hat, v_hat, u_psi_hat) = split(&primal);
            Ok(S1Outcome::Finite {
                y_hat,
                v_hat,
                u_psi_hat,
                value: objective,
                psi: dual[..inst.m].to_vec(),
                s: dual[inst.m..].to_vec(),
            })
        }
        LpOutcome::Unbounded { ray } => {
            let improvement = dot(&p.c, &ray);
            let (y_tilde, v_tilde, u_psi_tilde) = split(&ray);
            Ok(S1Outcome::Unbounded {
                y_tilde,
                v_tilde,
                u_psi_tilde,
                improvement,
            })
        }
        LpOutcome::Infeasible { .. } => Err(violation_error("the follower-side subproblem")),
    }
}

/// Leader-side LP over `(ψ, u_y[, w])`. `value = None` stands for `𝔒 = ∞`
/// and drops the `w` column. `rhs` replaces `c_y` on the right-hand side.
pub fn s2_problem_with(inst: &MibpsdInstance, x_hat: &[f64], value: Option<f64>, rhs: &[f64]) -> LpProblem {
    let (m, p, n2) = (inst.m, inst.p, inst.n2);
    let has_w = value.is_some();
    let n = m + p + usize::from(has_w);
    let mut c = vec![0.0; n];
    c[..m].copy_from_slice(&sub(&inst.b, &inst.a.mul_vec(x_hat)));
    c[m..m + p].copy_from_slice(&sub(&inst.h_y, &inst.g_xy.mul_vec(x_hat)));
    if let Some(o) = value {
        c[m + p] = -o;
    }
    let mut g = Matrix::zeros(n2, n);
    let mut h = vec![0.0; n2];
    for k in 0..n2 {
        for j in 0..m {
            g[(k, j)] = -inst.b_mat[(j, k)];
        }
        for r in 0..p {
            g[(k, m + r)] = -inst.g_y[(r, k)];
        }
        if has_w {
            g[(k, m + p)] = inst.d[k];
        }
        h[k] = -rhs[k];
    }
    LpProblem {
        c,
        g,
        h,
        sense: Sense::Max,
        names: None,
    }
}

pub fn s2_problem(inst: &MibpsdInstance, x_hat: &[f64], value: Option<f64>) -> LpProblem {
    s2_problem_with(inst, x_hat, value, &inst.c_y)
}

fn solve_s2_problem(inst: &MibpsdInstance, p: &LpProblem) -> Result<S2Outcome> {
    let (m, pp) = (inst.m, inst.p);
    let has_w = p.num_vars() > m + pp;
    let w_of = |z: &[f64]| if has_w { z[m + pp] } else { 0.0 };
    match lp::solve_checked(p, &ToleranceSet::default())? {
        LpOutcome::Finite {
            primal,
            dual,
            objective,
        } => Ok(S2Outcome::Finite {
            psi_hat: primal[..m].to_vec(),
            u_y_hat: primal[m..m + pp].to_vec(),
            w_hat: w_of(&primal),
            value: objective,
            y: dual,
        }),
        LpOutcome::Unbounded { ray } => Ok(S2Outcome::Unbounded {
            psi_tilde: ray[..m].to_vec(),
            u_y_tilde: ray[m..m + pp].to_vec(),
            w_tilde: w_of(&ray),
            improvement: dot(&p.c, &ray),
        }),
        LpOutcome::Infeasible { .. } => Err(violation_error("the leader-side subproblem")),
    }
}

/// Solves the leader-side LP at `x̂` for follower value `value`
/// (`None` meaning `+∞`).
pub fn solve_s2(inst: &MibpsdInstance, x_hat: &[f64], value: Option<f64>) -> Result<S2Outcome> {
    solve_s2_problem(inst, &s2_problem(inst, x_hat, value))
}

/// Reassembles the subproblem-dual certificate from the two split solves:
/// an optimum with its row multipliers when both are finite, otherwise the
/// unbounded ray they imply.
pub fn assemble_bsp_outcome(inst: &MibpsdInstance, mc: &McCormickBlock, s1: &S1Outcome, s2: &S2Outcome) -> LpOutcome {
    let lay = BspLayout::new(inst, mc);
    let ray = |d: DualVector| {
        let z = d.to_vec();
        let scale = crate::linalg::norm_inf(&z);
        LpOutcome::Unbounded {
            ray: z.iter().map(|v| v / scale).collect(),
        }
    };
    match (s1, s2) {
        (
            S1Outcome::Finite {
                y_hat,
                v_hat,
                u_psi_hat,
                psi,
                s,
                ..
            },
            S2Outcome::Finite {
                psi_hat,
                u_y_hat,
                w_hat,
                value,
                y,
            },
        ) => {
            let point = DualVector::combine(psi_hat, u_y_hat, *w_hat, y_hat, v_hat, u_psi_hat);
            let mut dual = psi.clone();
            dual.extend(y);
            dual.extend(s);
            debug_assert_eq!(point.len(), lay.len());
            LpOutcome::Finite {
                primal: point.to_vec(),
                dual,
                objective: *value,
            }
        }
        (
            S1Outcome::Unbounded {
                y_tilde,
                v_tilde,
                u_psi_tilde,
                ..
            },
            _,
        ) => {
            let mut d = DualVector::zeros(inst, mc);
            d.y = y_tilde.clone();
            d.v = v_tilde.clone();
            d.u_psi = u_psi_tilde.clone();
            ray(d)
        }
        (
            S1Outcome::Finite {
                y_hat,
                v_hat,
                u_psi_hat,
                ..
            },
            S2Outcome::Unbounded {
                psi_tilde,
                u_y_tilde,
                w_tilde,
                ..
            },
        ) => ray(DualVector::combine(
            psi_tilde, u_y_tilde, *w_tilde, y_hat, v_hat, u_psi_hat,
        )),
    }
}

fn c2_cut(inst: &MibpsdInstance, mc: &McCormickBlock, y: &[f64], v: &[f64], u_psi: &[f64]) -> Cut {
    let mut d = DualVector::zeros(inst, mc);
    d.y = y.to_vec();
    d.v = v.to_vec();
    d.u_psi = u_psi.to_vec();
    Cut::from_dual(CutFamily::C2LowerInfeasible, d, inst, mc)
}

fn c3_cut(inst: &MibpsdInstance, mc: &McCormickBlock, psi: &[f64], u_y: &[f64]) -> Cut {
    let mut d = DualVector::zeros(inst, mc);
    d.psi = psi.to_vec();
    d.u_y = u_y.to_vec();
    Cut::from_dual(CutFamily::C3UpperRay, d, inst, mc)
}

fn leader_cost(inst: &MibpsdInstance, x: &[f64]) -> f64 {
    dot(&inst.c_x, x)
}

/// Dedicated separation at `x̂` without ray normalisation.
pub fn separate(inst: &MibpsdInstance, mc: &McCormickBlock, x_hat: &[f64]) -> Result<Separation> {
    separate_with(inst, mc, x_hat, false)
}

/// Dedicated separation at `x̂`:
///
/// | follower side | leader side | emitted |
/// |---------------|-------------|---------|
/// | unbounded     | unbounded   | C2 and C3 |
/// | unbounded     | finite      | C2 |
/// | finite        | unbounded   | C4 |
/// | finite        | finite      | C1 and a feasible point |
///
/// With `normalize`, feasibility cuts come from rays of unit ℓ₁ norm.
pub fn separate_with(
    inst: &MibpsdInstance,
    mc: &McCormickBlock,
    x_hat: &[f64],
    normalize: bool,
) -> Result<Separation> {
    let mut out = Separation::default();
    let s1 = solve_s1(inst, mc, x_hat)?;
    let s2 = solve_s2(inst, x_hat, s1.value())?;
    match (&s1, &s2) {
        (
            S1Outcome::Unbounded {
                y_tilde,
                v_tilde,
                u_psi_tilde,
                ..
            },
            _,
        ) => {
            if normalize {
                let r = accel::normalize_simple_ray(
                    inst,
                    mc,
                    x_hat,
                    &SimpleRay::S1 {
                        y: y_tilde.clone(),
                        v: v_tilde.clone(),
                        u_psi: u_psi_tilde.clone(),
                    },
                );
                out.cuts.push(r.cut(CutFamily::C2LowerInfeasible, inst, mc));
                out.normalized.push(r);
            } else {
                out.cuts.push(c2_cut(inst, mc, y_tilde, v_tilde, u_psi_tilde));
            }
            if let S2Outcome::Unbounded {
                psi_tilde,
                u_y_tilde,
                ..
            } = &s2
            {
                if normalize {
                    let r = accel::normalize_simple_ray(
                        inst,
                        mc,
                        x_hat,
                        &SimpleRay::S2 {
                            psi: psi_tilde.clone(),
                            u_y: u_y_tilde.clone(),
                        },
                    );
                    out.cuts.push(r.cut(CutFamily::C3UpperRay, inst, mc));
                    out.normalized.push(r);
                } else {
                    out.cuts.push(c3_cut(inst, mc, psi_tilde, u_y_tilde));
                }
            }
        }
        (
            S1Outcome::Finite {
                y_hat,
                v_hat,
                u_psi_hat,
                value,
                ..
            },
            S2Outcome::Unbounded {
                psi_tilde,
                u_y_tilde,
                w_tilde,
                ..
            },
        ) => {
            let raw = DualVector::combine(psi_tilde, u_y_tilde, *w_tilde, y_hat, v_hat, u_psi_hat);
            if normalize {
                let r = if *w_tilde > 0.0 {
                    accel::newton_normalized_ray(inst, mc, x_hat, *value, &raw)
                } else {
                    accel::normalize_simple_ray(
                        inst,
                        mc,
                        x_hat,
                        &SimpleRay::S2 {
                            psi: psi_tilde.clone(),
                            u_y: u_y_tilde.clone(),
                        },
                    )
                };
                out.cuts.push(r.cut(CutFamily::C4OptimalFace, inst, mc));
                out.normalized.push(r);
            } else {
                out.cuts.push(Cut::from_dual(CutFamily::C4OptimalFace, raw, inst, mc));
            }
        }
        (
            S1Outcome::Finite {
                y_hat,
                v_hat,
                u_psi_hat,
                ..
            },
            S2Outcome::Finite {
                psi_hat,
                u_y_hat,
                w_hat,
                value,
                ..
            },
        ) => {
            let point = DualVector::combine(psi_hat, u_y_hat, *w_hat, y_hat, v_hat, u_psi_hat);
            out.cuts.push(Cut::from_dual(CutFamily::C1Optimality, point, inst, mc));
            if is_integral(inst, x_hat) {
                out.feasible_point = Some(FeasiblePoint {
                    x_hat: x_hat.to_vec(),
                    objective: leader_cost(inst, x_hat) + value,
                });
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SequenceMode {
    /// `d = c_y` entrywise.
    DEqualsCy,
    /// `c_y = 0` entrywise.
    CyZero,
}

impl SequenceMode {
    /// Picks the mode the instance satisfies, preferring `DEqualsCy`.
    pub fn detect(inst: &MibpsdInstance) -> Option<Self> {
        if inst.d == inst.c_y {
            Some(SequenceMode::DEqualsCy)
        } else if inst.c_y.iter().all(|&v| v == 0.0) {
            Some(SequenceMode::CyZero)
        } else {
            None
        }
    }

    fn check(self, inst: &MibpsdInstance) -> Result<()> {
        let ok = match self {
            SequenceMode::DEqualsCy => inst.d == inst.c_y,
            SequenceMode::CyZero => inst.c_y.iter().all(|&v| v == 0.0),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::ModeMismatch(match self {
                SequenceMode::DEqualsCy => "d and c_y differ".into(),
                SequenceMode::CyZero => "c_y has nonzero entries".into(),
            }))
        }
    }
}

/// Timings and problem handles of one order-free separation.
#[derive(Debug, Clone)]
pub struct IndependentSolves {
    /// The leader-side LP, fixed before the follower side was solved.
    pub s2_problem: LpProblem,
    pub s1: S1Outcome,
    pub s2: S2Outcome,
}

/// Order-free separation for instances with `d = c_y` or `c_y = 0`.
///
/// Both LPs are built from `x̂` alone (the leader side has no `w` column and
/// uses `d` on its right-hand side), so they can be solved in any order:
/// a ray of the leader side gives C3, a ray of the follower side C2; if the
/// follower value is strictly below the leader-side value, no follower
/// optimum meets the upper rows and the combined vector gives a C4-type
/// cut; otherwise the leader side's point gives the optimality cut.
pub fn separate_sequence_independent(
    inst: &MibpsdInstance,
    mc: &McCormickBlock,
    x_hat: &[f64],
    mode: SequenceMode,
) -> Result<Separation> {
    separate_sequence_independent_traced(inst, mc, x_hat, mode).map(|(s, _)| s)
}

pub fn separate_sequence_independent_traced(
    inst: &MibpsdInstance,
    mc: &McCormickBlock,
    x_hat: &[f64],
    mode: SequenceMode,
) -> Result<(Separation, IndependentSolves)> {
    mode.check(inst)?;
    let s2_problem = s2_problem_with(inst, x_hat, None, &inst.d);
    let s2 = solve_s2_problem(inst, &s2_problem)?;
    let s1 = solve_s1(inst, mc, x_hat)?;
    let mut out = Separation::default();
    match (&s1, &s2) {
        (
            _,
            S2Outcome::Unbounded {
                psi_tilde,
                u_y_tilde,
                ..
            },
        ) => out.cuts.push(c3_cut(inst, mc, psi_tilde, u_y_tilde)),
        (
            S1Outcome::Unbounded {
                y_tilde,
                v_tilde,
                u_psi_tilde,
                ..
            },
            _,
        ) => out.cuts.push(c2_cut(inst, mc, y_tilde, v_tilde, u_psi_tilde)),
        (
            S1Outcome::Finite {
                y_hat,
                v_hat,
                u_psi_hat,
                value: o1,
                ..
            },
            S2Outcome::Finite {
                psi_hat,
                u_y_hat,
                value: o2,
                ..
            },
        ) => {
            if *o1 < *o2 - 1e-7 * (1.0 + o2.abs()) {
                let d = DualVector::combine(psi_hat, u_y_hat, 1.0, y_hat, v_hat, u_psi_hat);
                out.cuts.push(Cut::from_dual(CutFamily::C4OptimalFace, d, inst, mc));
            } else {
                let mut d = DualVector::zeros(inst, mc);
                if mode == SequenceMode::DEqualsCy {
                    d.psi = psi_hat.clone();
                    d.u_y = u_y_hat.clone();
                }
                out.cuts.push(Cut::from_dual(CutFamily::C1Optimality, d, inst, mc));
                if is_integral(inst, x_hat) {
                    let follower_cost = if mode == SequenceMode::DEqualsCy { *o2 } else { 0.0 };
                    out.feasible_point = Some(FeasiblePoint {
                        x_hat: x_hat.to_vec(),
                        objective: leader_cost(inst, x_hat) + follower_cost,
                    });
                }
            }
        }
    }
    Ok((out, IndependentSolves { s2_problem, s1, s2 }))
}

#[derive(Debug, Clone, PartialEq)]
pub enum BspOutcome {
    Finite { point: DualVector, objective: f64 },
    Unbounded { ray: DualVector },
}

/// Solves the subproblem dual in one piece.
pub fn solve_bsp_monolithic(inst: &MibpsdInstance, mc: &McCormickBlock, x_hat: &[f64]) -> Result<BspOutcome> {
    let lay = BspLayout::new(inst, mc);
    match lp::solve_checked(&build_bsp_dual(inst, mc, x_hat), &ToleranceSet::default())? {
        LpOutcome::Finite {
            primal, objective, ..
        } => Ok(BspOutcome::Finite {
            point: DualVector::from_vec(&lay, &primal),
            objective,
        }),
        LpOutcome::Unbounded { ray } => Ok(BspOutcome::Unbounded {
            ray: DualVector::from_vec(&lay, &ray),
        }),
        LpOutcome::Infeasible { .. } => Err(violation_error("the subproblem dual")),
    }
}

/// Family of a ray of the subproblem dual, read from which blocks are
/// nonzero.
pub fn classify_ray(ray: &DualVector) -> CutFamily {
    let tiny = |v: &[f64]| v.iter().all(|x| x.abs() <= 1e-9);
    let leader_zero = tiny(&ray.psi) && tiny(&ray.u_y);
    let follower_zero = tiny(&ray.y) && tiny(&ray.v) && tiny(&ray.u_psi);
    if ray.w.abs() <= 1e-9 && leader_zero {
        CutFamily::C2LowerInfeasible
    } else if ray.w.abs() <= 1e-9 && follower_zero {
        CutFamily::C3UpperRay
    } else {
        CutFamily::C4OptimalFace
    }
}

/// Standard Benders separation on the monolithic subproblem dual; with
/// `normalize`, rays are divided by their ℓ₁ norm.
pub fn separate_monolithic(
    inst: &MibpsdInstance,
    mc: &McCormickBlock,
    x_hat: &[f64],
    normalize: bool,
) -> Result<Separation> {
    let mut out = Separation::default();
    match solve_bsp_monolithic(inst, mc, x_hat)? {
        BspOutcome::Finite { point, objective } => {
            out.cuts.push(Cut::from_dual(CutFamily::C1Optimality, point, inst, mc));
            if is_integral(inst, x_hat) {
                out.feasible_point = Some(FeasiblePoint {
                    x_hat: x_hat.to_vec(),
                    objective: leader_cost(inst, x_hat) + objective,
                });
            }
        }
        BspOutcome::Unbounded { ray } => {
            let family = classify_ray(&ray);
            let ray = if normalize { ray.scaled(1.0 / ray.l1_norm()) } else { ray };
            out.cuts.push(Cut::from_dual(family, ray, inst, mc));
        }
    }
    Ok(out)
}

/// Wall-clock seconds spent in `f`.
pub(crate) fn timed<T>(f: impl FnOnce() -> T) -> (T, f64) {
    let start = Instant::now();
    let v = f();
    (v, start.elapsed().as_secs_f64())
}
