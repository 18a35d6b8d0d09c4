//! Bilevel instance data, validation, file format and a seeded generator.
//!
//! The leader chooses `x ≥ 0` with `x_i ∈ {0,1}` for `i ∈ binary_indices`
//! and the follower answers with an optimal `y` of
//!
//! ```text
//! min dᵀy  s.t.  A x + B y ≥ b,  y ≥ 0
//! ```
//!
//! The leader minimises `c_xᵀx + c_yᵀy` subject to `G_xy x + G_y y ≥ h_y`,
//! picking the follower optimum it likes best. The optional extension block
//! adds rows `G_xψ x + G_ψ ψ ≥ h_ψ` on the follower's dual solution `ψ`.

mod generate;
mod io;

pub use generate::{generate_random, GeneratorParams, ObjectiveMode};
pub use io::{load, save, save_with, NumberFormat};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::lp::{self, LpBuilder, LpOutcome, Sense, ToleranceSet};

#[derive(Debug, Clone, PartialEq)]
pub struct ExtensionBlock {
    pub g_xpsi: Matrix,
    pub g_psi: Matrix,
    pub h_psi: Vec<f64>,
}

impl ExtensionBlock {
    pub fn q(&self) -> usize {
        self.h_psi.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MibpsdInstance {
    pub n1: usize,
    pub n2: usize,
    pub m: usize,
    pub p: usize,
    pub binary_indices: Vec<usize>,
    pub c_x: Vec<f64>,
    pub c_y: Vec<f64>,
    pub d: Vec<f64>,
    pub a: Matrix,
    pub b_mat: Matrix,
    pub b: Vec<f64>,
    pub g_xy: Matrix,
    pub g_y: Matrix,
    pub h_y: Vec<f64>,
    pub extension: Option<ExtensionBlock>,
    pub psi_bound: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CheckStatus {
    Verified,
    Violated,
    Unchecked,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub dimension_ok: bool,
    pub assumption2_ok: bool,
    pub assumption4_status: CheckStatus,
    pub assumption5_status: CheckStatus,
    pub messages: Vec<String>,
}

impl ValidationReport {
    /// Dimensions and the binary-only coupling hold, and no LP check failed.
    pub fn is_ok(&self) -> bool {
        self.dimension_ok
            && self.assumption2_ok
            && self.assumption4_status != CheckStatus::Violated
            && self.assumption5_status != CheckStatus::Violated
    }
}

/// Largest number of binary assignments the existence search will try.
pub const ASSIGNMENT_SEARCH_CAP: usize = 4096;

impl MibpsdInstance {
    pub fn is_binary(&self, i: usize) -> bool {
        self.binary_indices.contains(&i)
    }

    /// Returns a mask with `true` on binary positions.
    pub fn binary_mask(&self) -> Vec<bool> {
        let mut mask = vec![false; self.n1];
        for &i in &self.binary_indices {
            if i < self.n1 {
                mask[i] = true;
            }
        }
        mask
    }

    pub fn q(&self) -> usize {
        self.extension.as_ref().map_or(0, ExtensionBlock::q)
    }

    /// Lists every dimension inconsistency; empty when the data is coherent.
    pub fn dimension_errors(&self) -> Vec<String> {
        let mut errs = Vec::new();
        let mut vec_len = |name: &str, v: &[f64], want: usize| {
            if v.len() != want {
                errs.push(format!("{name} has length {}, expected {want}", v.len()));
            }
        };
        vec_len("c_x", &self.c_x, self.n1);
        vec_len("c_y", &self.c_y, self.n2);
        vec_len("d", &self.d, self.n2);
        vec_len("b", &self.b, self.m);
        vec_len("h_y", &self.h_y, self.p);
        if let Some(ext) = &self.extension {
            vec_len("h_psi", &ext.h_psi, ext.q());
        }
        if let Some(pb) = &self.psi_bound {
            vec_len("psi_bound", pb, self.m);
        }
        let mut mat = |name: &str, a: &Matrix, rows: usize, cols: usize| {
            if a.rows() != rows || a.cols() != cols {
                errs.push(format!(
                    "{name} is {}x{}, expected {rows}x{cols}",
                    a.rows(),
                    a.cols()
                ));
            }
        };
        mat("A", &self.a, self.m, self.n1);
        mat("B", &self.b_mat, self.m, self.n2);
        mat("G_xy", &self.g_xy, self.p, self.n1);
        mat("G_y", &self.g_y, self.p, self.n2);
        if let Some(ext) = &self.extension {
            mat("G_xpsi", &ext.g_xpsi, ext.q(), self.n1);
            mat("G_psi", &ext.g_psi, ext.q(), self.m);
        }
        let mut seen = vec![false; self.n1];
        for &i in &self.binary_indices {
            if i >= self.n1 {
                errs.push(format!("binary index {i} is out of range 0..{}", self.n1));
            } else if seen[i] {
                errs.push(format!("binary index {i} is listed twice"));
            } else {
                seen[i] = true;
            }
        }
        if let Some(pb) = &self.psi_bound {
            if pb.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
                errs.push("psi_bound entries must be positive and finite".into());
            }
        }
        if !self.all_finite() {
            errs.push("non-finite coefficient".into());
        }
        errs
    }

    fn all_finite(&self) -> bool {
        let vecs = [&self.c_x, &self.c_y, &self.d, &self.b, &self.h_y];
        let mats = [&self.a, &self.b_mat, &self.g_xy, &self.g_y];
        let fin = |v: &[f64]| v.iter().all(|x| x.is_finite());
        vecs.iter().all(|v| fin(v))
            && mats.iter().all(|m| m.to_rows().iter().all(|r| fin(r)))
            && self.extension.as_ref().is_none_or(|e| {
                fin(&e.h_psi)
                    && e.g_xpsi.to_rows().iter().all(|r| fin(r))
                    && e.g_psi.to_rows().iter().all(|r| fin(r))
            })
    }

    pub fn check_dimensions(&self) -> Result<()> {
        let errs = self.dimension_errors();
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Dimension(errs.join("; ")))
        }
    }

    /// Continuous leader columns of `A` that are not zero.
    pub fn coupled_continuous_columns(&self) -> Vec<usize> {
        let mask = self.binary_mask();
        (0..self.n1)
            .filter(|&i| !mask[i] && !self.a.is_zero_column(i))
            .collect()
    }

    /// The follower's LP `min dᵀy s.t. B y ≥ b − A x, y ≥ 0` at a fixed `x`.
    pub fn follower_lp(&self, x: &[f64]) -> lp::LpProblem {
        let rhs = crate::linalg::sub(&self.b, &self.a.mul_vec(x));
        lp::LpProblem {
            c: self.d.clone(),
            g: self.b_mat.clone(),
            h: rhs,
            sense: Sense::Min,
            names: None,
        }
    }

    /// Leader objective `c_xᵀx + c_yᵀy`.
    pub fn leader_objective(&self, x: &[f64], y: &[f64]) -> f64 {
        crate::linalg::dot(&self.c_x, x) + crate::linalg::dot(&self.c_y, y)
    }

    /// Builds the high-point relaxation over `(x, y[, ψ])` with binaries
    /// relaxed to `[0, 1]`. Columns are laid out as `x`, then `y`, then `ψ`
    /// when the extension block is present.
    pub fn relaxation_builder(&self) -> LpBuilder {
        let mut lp = LpBuilder::new(Sense::Min);
        let x0 = lp.add_vars(&self.c_x);
        let y0 = lp.add_vars(&self.c_y);
        for &i in &self.binary_indices {
            lp.add_row([(x0 + i, 1.0)], lp::Cmp::Le, 1.0);
        }
        for r in 0..self.p {
            let terms = self.g_xy.row(r).iter().enumerate().map(|(i, &a)| (x0 + i, a));
            let terms = terms.chain(self.g_y.row(r).iter().enumerate().map(|(k, &a)| (y0 + k, a)));
            lp.add_row(terms.collect::<Vec<_>>(), lp::Cmp::Ge, self.h_y[r]);
        }
        for j in 0..self.m {
            let terms = self.a.row(j).iter().enumerate().map(|(i, &a)| (x0 + i, a));
            let terms = terms.chain(self.b_mat.row(j).iter().enumerate().map(|(k, &a)| (y0 + k, a)));
            lp.add_row(terms.collect::<Vec<_>>(), lp::Cmp::Ge, self.b[j]);
        }
        if let Some(ext) = &self.extension {
            let psi0 = lp.add_vars(&vec![0.0; self.m]);
            for r in 0..ext.q() {
                let terms = ext.g_xpsi.row(r).iter().enumerate().map(|(i, &a)| (x0 + i, a));
                let terms =
                    terms.chain(ext.g_psi.row(r).iter().enumerate().map(|(j, &a)| (psi0 + j, a)));
                lp.add_row(terms.collect::<Vec<_>>(), lp::Cmp::Ge, ext.h_psi[r]);
            }
            for k in 0..self.n2 {
                let terms: Vec<_> = (0..self.m).map(|j| (psi0 + j, self.b_mat[(j, k)])).collect();
                lp.add_row(terms, lp::Cmp::Le, self.d[k]);
            }
        }
        lp
    }
}

/// Checks dimensions and the binary-only coupling of the follower, and with
/// `check_lps` also the solvability conditions that make the bilevel
/// problem well posed.
pub fn validate(instance: &MibpsdInstance, check_lps: bool) -> ValidationReport {
    let mut messages = instance.dimension_errors();
    let dimension_ok = messages.is_empty();
    let mut report = ValidationReport {
        dimension_ok,
        assumption2_ok: false,
        assumption4_status: CheckStatus::Unchecked,
        assumption5_status: CheckStatus::Unchecked,
        messages: Vec::new(),
    };
    if !dimension_ok {
        messages.push("continuous-coupling check skipped: dimensions inconsistent".into());
        report.messages = messages;
        return report;
    }
    let bad = instance.coupled_continuous_columns();
    report.assumption2_ok = bad.is_empty();
    if !bad.is_empty() {
        messages.push(format!(
            "A has nonzero entries in continuous leader columns {bad:?}; the follower may only see binary leader variables"
        ));
    }
    if check_lps {
        let tol = ToleranceSet::default();
        report.assumption4_status = match lp::solve(&instance.relaxation_builder().build(), &tol) {
            Ok(LpOutcome::Finite { .. }) => CheckStatus::Verified,
            Ok(other) => {
                messages.push(format!("the relaxed high-point problem is {}", other.kind()));
                CheckStatus::Violated
            }
            Err(e) => {
                messages.push(format!("relaxed high-point problem: {e}"));
                CheckStatus::Unchecked
            }
        };
        if report.assumption2_ok {
            report.assumption5_status = search_feasible_assignment(instance, &mut messages);
        } else {
            messages.push("existence search skipped: coupling check failed".into());
        }
    }
    report.messages = messages;
    report
}

/// Looks for a binary assignment whose follower LP has a finite optimum
/// that can be completed to satisfy the upper-level rows.
fn search_feasible_assignment(inst: &MibpsdInstance, messages: &mut Vec<String>) -> CheckStatus {
    let nb = inst.binary_indices.len();
    let total = if nb >= usize::BITS as usize - 1 { usize::MAX } else { 1usize << nb };
    let budget = total.min(ASSIGNMENT_SEARCH_CAP);
    let tol = ToleranceSet::default();
    for code in 0..budget {
        let xb = crate::oracle::assignment(inst, code);
        match crate::oracle::best_response_at(inst, &xb, &tol) {
            Ok(Some(_)) => return CheckStatus::Verified,
            Ok(None) => {}
            Err(e) => {
                messages.push(format!("existence search: {e}"));
                return CheckStatus::Unchecked;
            }
        }
    }
    if budget == total {
        messages.push("no binary assignment admits a follower optimum meeting the upper-level rows".into());
        CheckStatus::Violated
    } else {
        messages.push(format!(
            "existence search gave up after {budget} of {nb}-bit assignments"
        ));
        CheckStatus::Unchecked
    }
}


#[cfg(test)]
mod tests {
    use super::fixtures::t1;
    use super::*;

    #[test]
    fn t1_is_well_posed() {
        let r = validate(&t1(), true);
        assert!(r.dimension_ok && r.assumption2_ok, "{:?}", r.messages);
        assert_eq!(r.assumption4_status, CheckStatus::Verified);
        assert_eq!(r.assumption5_status, CheckStatus::Verified);
    }

    #[test]
    fn continuous_coupling_flagged() {
        let mut inst = t1();
        inst.n1 = 2;
        inst.c_x.push(0.0);
        inst.a = Matrix::from_rows(2, &[vec![1.0, 2.0]]).unwrap();
        inst.g_xy = Matrix::from_rows(2, &[vec![0.0, 0.0]]).unwrap();
        let r = validate(&inst, false);
        assert!(r.dimension_ok);
        assert!(!r.assumption2_ok);
        assert!(!r.messages.is_empty());
    }

    #[test]
    fn long_rhs_is_a_dimension_error() {
        let mut inst = t1();
        inst.b.push(2.0);
        let r = validate(&inst, true);
        assert!(!r.dimension_ok);
        assert!(!r.messages.is_empty());
        assert!(inst.check_dimensions().is_err());
    }

    #[test]
    fn duplicate_binary_index_rejected() {
        let mut inst = t1();
        inst.binary_indices = vec![0, 0];
        assert!(!validate(&inst, false).dimension_ok);
    }

    #[test]
    fn no_feasible_assignment_is_violated() {
        // x + y ≥ 1 forces y = 1 at x = 0 and y = 0 at x = 1; y ≥ 2 fails both.
        let mut inst = t1();
        inst.h_y = vec![2.0];
        let r = validate(&inst, true);
        assert_eq!(r.assumption5_status, CheckStatus::Violated);
        assert!(!r.messages.is_empty());
    }

    #[test]
    fn validation_leaves_input_alone() {
        let inst = t1();
        let before = inst.clone();
        let _ = validate(&inst, true);
        assert_eq!(inst, before);
    }
}
