//! Single-level reformulation of the bilevel problem.
//!
//! The follower is replaced by primal feasibility, dual feasibility and the
//! strong-duality row `−dᵀy + bᵀψ − ψᵀA x ≥ 0`. Each bilinear product
//! `A_ji ψ_j x_i` with binary `x_i` is linearised exactly by McCormick rows
//! on a variable `s = |A_ji| ψ_j x_i ≥ 0`; the sign of `A_ji` moves into a
//! weight `σ = ±1`, so the strong-duality row reads `−dᵀy + bᵀψ − σᵀs ≥ 0`.

use std::ops::Range;

use crate::error::{Error, Result};
use crate::instance::MibpsdInstance;
use crate::linalg::{sub, Matrix};
use crate::lp::{LpProblem, Sense};

/// Safety factor applied to the data-driven dual bound.
pub const PSI_BOUND_FACTOR: f64 = 10.0;
/// McCormick rows emitted per bilinear term.
pub const ROWS_PER_TERM: usize = 3;

/// Returns the user bound when present, otherwise
/// `10 · max(1, Σ|d| / max(1e-9, max_k |B_jk|))` for every row `j`.
pub fn compute_psi_bound(inst: &MibpsdInstance) -> Result<Vec<f64>> {
    if let Some(pb) = &inst.psi_bound {
        return Ok(pb.clone());
    }
    let d_sum: f64 = inst.d.iter().map(|v| v.abs()).sum();
    (0..inst.m)
        .map(|j| {
            let row_max = inst.b_mat.row(j).iter().fold(0.0f64, |m, v| m.max(v.abs()));
            if row_max == 0.0 {
                return Err(Error::BoundUnavailable { row: j });
            }
            Ok(PSI_BOUND_FACTOR * (d_sum / row_max.max(1e-9)).max(1.0))
        })
        .collect()
}

/// One kept product `A_ji ψ_j x_i`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BilinearTerm {
    /// Follower row `j`.
    pub row: usize,
    /// Leader column `i`.
    pub col: usize,
    pub coef: f64,
}

impl BilinearTerm {
    /// Weight of this term's `s` in the strong-duality row.
    pub fn sigma(&self) -> f64 {
        self.coef.signum()
    }
}

/// Rows `K_ψ ψ + K_s s ≥ k + K_x x`; term `t` owns rows `3t..3t+3` and
/// column `t` of `K_s`.
#[derive(Debug, Clone, PartialEq)]
pub struct McCormickBlock {
    pub k_psi: Matrix,
    pub k_s: Matrix,
    pub k_x: Matrix,
    pub k: Vec<f64>,
    pub psi_bar: Vec<f64>,
    pub terms: Vec<BilinearTerm>,
}

impl McCormickBlock {
    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn num_rows(&self) -> usize {
        self.k.len()
    }

    /// `σ`, one entry per term.
    pub fn sigma(&self) -> Vec<f64> {
        self.terms.iter().map(BilinearTerm::sigma).collect()
    }

    /// Row range of the product `A_ji ψ_j x_i`, if it was kept.
    pub fn term_rows(&self, j: usize, i: usize) -> Option<Range<usize>> {
        let t = self.terms.iter().position(|t| t.row == j && t.col == i)?;
        Some(ROWS_PER_TERM * t..ROWS_PER_TERM * (t + 1))
    }

    /// `k + K_x x`.
    pub fn rhs_at(&self, x: &[f64]) -> Vec<f64> {
        crate::linalg::add(&self.k, &self.k_x.mul_vec(x))
    }

    /// The exact product values `s_t = |A_ji| ψ_j x_i`.
    pub fn products(&self, psi: &[f64], x: &[f64]) -> Vec<f64> {
        self.terms
            .iter()
            .map(|t| t.coef.abs() * psi[t.row] * x[t.col])
            .collect()
    }
}

/// Builds the McCormick rows for every nonzero `A_ji` in a binary column.
pub fn build_mccormick(inst: &MibpsdInstance, psi_bar: &[f64]) -> McCormickBlock {
    let mask = inst.binary_mask();
    let mut terms = Vec::new();
    for j in 0..inst.m {
        for i in 0..inst.n1 {
            let a = inst.a[(j, i)];
            if a != 0.0 && mask[i] {
                terms.push(BilinearTerm { row: j, col: i, coef: a });
            }
        }
    }
    let rows = ROWS_PER_TERM * terms.len();
    let mut k_psi = Matrix::zeros(rows, inst.m);
    let mut k_s = Matrix::zeros(rows, terms.len());
    let mut k_x = Matrix::zeros(rows, inst.n1);
    let mut k = vec![0.0; rows];
    for (t, term) in terms.iter().enumerate() {
        let alpha = term.coef.abs();
        let bound = alpha * psi_bar[term.row];
        let r = ROWS_PER_TERM * t;
        // s ≤ |a| ψ̄ x
        k_s[(r, t)] = -1.0;
        k_x[(r, term.col)] = -bound;
        // s ≤ |a| ψ
        k_psi[(r + 1, term.row)] = alpha;
        k_s[(r + 1, t)] = -1.0;
        // s ≥ |a| ψ + |a| ψ̄ x − |a| ψ̄
        k_psi[(r + 2, term.row)] = -alpha;
        k_s[(r + 2, t)] = 1.0;
        k[r + 2] = -bound;
        k_x[(r + 2, term.col)] = bound;
    }
    McCormickBlock {
        k_psi,
        k_s,
        k_x,
        k,
        psi_bar: psi_bar.to_vec(),
        terms,
    }
}

/// Column ranges of the single-level problem.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MipLayout {
    pub x: Range<usize>,
    pub y: Range<usize>,
    pub psi: Range<usize>,
    pub s: Range<usize>,
}

/// Row ranges of the single-level problem, in build order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MipRows {
    pub binary_bounds: Range<usize>,
    pub upper: Range<usize>,
    pub primal: Range<usize>,
    pub dual: Range<usize>,
    pub strong_duality: usize,
    pub mccormick: Range<usize>,
    pub dual_side: Range<usize>,
}

/// `min c_xᵀx + c_yᵀy` over `(x, y, ψ, s) ≥ 0` with the rows below and
/// `x_i ∈ {0,1}` on the columns listed in `integer`.
#[derive(Debug, Clone, PartialEq)]
pub struct MipProblem {
    pub lp: LpProblem,
    pub integer: Vec<usize>,
    pub layout: MipLayout,
    pub rows: MipRows,
}

/// Assembles the single-level problem:
///
/// ```text
/// G_xy x + G_y y                      ≥ h_y
/// A x + B y                           ≥ b
///           − Bᵀψ                     ≥ −d
///    −dᵀy + bᵀψ − σᵀs                 ≥ 0
/// −K_x x + K_ψ ψ + K_s s              ≥ k
/// G_xψ x + G_ψ ψ                      ≥ h_ψ     (extension only)
/// ```
///
/// plus `x_i ≤ 1` for every binary `i`.
pub fn build_single_level_mip(inst: &MibpsdInstance, mc: &McCormickBlock) -> MipProblem {
    let (n1, n2, m, nt) = (inst.n1, inst.n2, inst.m, mc.num_terms());
    let layout = MipLayout {
        x: 0..n1,
        y: n1..n1 + n2,
        psi: n1 + n2..n1 + n2 + m,
        s: n1 + n2 + m..n1 + n2 + m + nt,
    };
    let ncols = layout.s.end;
    let mut g = Matrix::zeros(0, ncols);
    let mut h = Vec::new();
    let mut row = vec![0.0; ncols];
    let push = |g: &mut Matrix, h: &mut Vec<f64>, row: &mut Vec<f64>, rhs: f64| {
        g.push_row(row);
        h.push(rhs);
        row.iter_mut().for_each(|v| *v = 0.0);
    };

    let start = g.rows();
    for &i in &inst.binary_indices {
        row[layout.x.start + i] = -1.0;
        push(&mut g, &mut h, &mut row, -1.0);
    }
    let binary_bounds = start..g.rows();

    let start = g.rows();
    for r in 0..inst.p {
        row[layout.x.clone()].copy_from_slice(inst.g_xy.row(r));
        row[layout.y.clone()].copy_from_slice(inst.g_y.row(r));
        push(&mut g, &mut h, &mut row, inst.h_y[r]);
    }
    let upper = start..g.rows();

    let start = g.rows();
    for j in 0..m {
        row[layout.x.clone()].copy_from_slice(inst.a.row(j));
        row[layout.y.clone()].copy_from_slice(inst.b_mat.row(j));
        push(&mut g, &mut h, &mut row, inst.b[j]);
    }
    let primal = start..g.rows();

    let start = g.rows();
    for k in 0..n2 {
        for j in 0..m {
            row[layout.psi.start + j] = -inst.b_mat[(j, k)];
        }
        push(&mut g, &mut h, &mut row, -inst.d[k]);
    }
    let dual = start..g.rows();

    let strong_duality = g.rows();
    for k in 0..n2 {
        row[layout.y.start + k] = -inst.d[k];
    }
    row[layout.psi.clone()].copy_from_slice(&inst.b);
    for (t, term) in mc.terms.iter().enumerate() {
        row[layout.s.start + t] = -term.sigma();
    }
    push(&mut g, &mut h, &mut row, 0.0);

    let start = g.rows();
    for r in 0..mc.num_rows() {
        for i in 0..n1 {
            row[layout.x.start + i] = -mc.k_x[(r, i)];
        }
        row[layout.psi.clone()].copy_from_slice(mc.k_psi.row(r));
        row[layout.s.clone()].copy_from_slice(mc.k_s.row(r));
        push(&mut g, &mut h, &mut row, mc.k[r]);
    }
    let mccormick = start..g.rows();

    let start = g.rows();
    if let Some(ext) = &inst.extension {
        for r in 0..ext.q() {
            row[layout.x.clone()].copy_from_slice(ext.g_xpsi.row(r));
            row[layout.psi.clone()].copy_from_slice(ext.g_psi.row(r));
            push(&mut g, &mut h, &mut row, ext.h_psi[r]);
        }
    }
    let dual_side = start..g.rows();

    let mut c = vec![0.0; ncols];
    c[layout.x.clone()].copy_from_slice(&inst.c_x);
    c[layout.y.clone()].copy_from_slice(&inst.c_y);
    let lp = LpProblem {
        c,
        g,
        h,
        sense: Sense::Min,
        names: None,
    };
    MipProblem {
        lp,
        integer: inst.binary_indices.clone(),
        layout,
        rows: MipRows {
            binary_bounds,
            upper,
            primal,
            dual,
            strong_duality,
            mccormick,
            dual_side,
        },
    }
}

/// Column ranges of the subproblem dual; see [`build_bsp_dual`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BspLayout {
    pub psi: Range<usize>,
    pub u_y: Range<usize>,
    pub w: usize,
    pub y: Range<usize>,
    pub v: Range<usize>,
    pub u_psi: Range<usize>,
}

impl BspLayout {
    pub fn new(inst: &MibpsdInstance, mc: &McCormickBlock) -> Self {
        let psi = 0..inst.m;
        let u_y = psi.end..psi.end + inst.p;
        let w = u_y.end;
        let y = w + 1..w + 1 + inst.n2;
        let v = y.end..y.end + mc.num_rows();
        let u_psi = v.end..v.end + inst.q();
        Self {
            psi,
            u_y,
            w,
            y,
            v,
            u_psi,
        }
    }

    pub fn len(&self) -> usize {
        self.u_psi.end
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Dual of the follower-side subproblem at a fixed leader point `x̂`, over
/// `(ψ, u_y, w, y, v, u_ψ) ≥ 0`:
///
/// ```text
/// max  ψᵀ(b − A x̂) + u_yᵀ(h_y − G_xy x̂) − dᵀy + vᵀ(k + K_x x̂) + u_ψᵀ(h_ψ − G_xψ x̂)
/// s.t. B y − K_ψᵀv − G_ψᵀu_ψ − b w ≥ 0
///      −Bᵀψ − G_yᵀu_y + d w       ≥ −c_y
///      −K_sᵀv + σ w               ≥ 0
/// ```
///
/// A finite optimum is the leader's follower cost at `x̂`; an unbounded ray
/// certifies that `x̂` admits no feasible follower response.
pub fn build_bsp_dual(inst: &MibpsdInstance, mc: &McCormickBlock, x_hat: &[f64]) -> LpProblem {
    let lay = BspLayout::new(inst, mc);
    let n = lay.len();
    let mut c = vec![0.0; n];
    c[lay.psi.clone()].copy_from_slice(&sub(&inst.b, &inst.a.mul_vec(x_hat)));
    c[lay.u_y.clone()].copy_from_slice(&sub(&inst.h_y, &inst.g_xy.mul_vec(x_hat)));
    for k in 0..inst.n2 {
        c[lay.y.start + k] = -inst.d[k];
    }
    c[lay.v.clone()].copy_from_slice(&mc.rhs_at(x_hat));
    if let Some(ext) = &inst.extension {
        c[lay.u_psi.clone()].copy_from_slice(&sub(&ext.h_psi, &ext.g_xpsi.mul_vec(x_hat)));
    }

    let rows = inst.m + inst.n2 + mc.num_terms();
    let mut g = Matrix::zeros(rows, n);
    let mut h = vec![0.0; rows];
    for j in 0..inst.m {
        for k in 0..inst.n2 {
            g[(j, lay.y.start + k)] = inst.b_mat[(j, k)];
        }
        for r in 0..mc.num_rows() {
            g[(j, lay.v.start + r)] = -mc.k_psi[(r, j)];
        }
        if let Some(ext) = &inst.extension {
            for r in 0..ext.q() {
                g[(j, lay.u_psi.start + r)] = -ext.g_psi[(r, j)];
            }
        }
        g[(j, lay.w)] = -inst.b[j];
    }
    for k in 0..inst.n2 {
        let row = inst.m + k;
        for j in 0..inst.m {
            g[(row, lay.psi.start + j)] = -inst.b_mat[(j, k)];
        }
        for r in 0..inst.p {
            g[(row, lay.u_y.start + r)] = -inst.g_y[(r, k)];
        }
        g[(row, lay.w)] = inst.d[k];
        h[row] = -inst.c_y[k];
    }
    for (t, term) in mc.terms.iter().enumerate() {
        let row = inst.m + inst.n2 + t;
        for r in 0..mc.num_rows() {
            g[(row, lay.v.start + r)] = -mc.k_s[(r, t)];
        }
        g[(row, lay.w)] = term.sigma();
    }
    LpProblem {
        c,
        g,
        h,
        sense: Sense::Max,
        names: None,
    }
}
