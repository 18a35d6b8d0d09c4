//! Seeded random instances with a planted feasible point.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{ExtensionBlock, MibpsdInstance};
use crate::error::{Error, Result};
use crate::linalg::{add, Matrix};
use crate::lp::{self, LpBuilder, LpOutcome, Sense, ToleranceSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ObjectiveMode {
    /// `c_y` drawn independently of `d`.
    #[default]
    Independent,
    /// `c_y = d`: leader and follower agree on the follower cost.
    DEqualsCy,
    /// `c_y = 0`: the leader does not price the follower's decision.
    CyZero,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorParams {
    pub n1: usize,
    pub n2: usize,
    pub m: usize,
    pub p: usize,
    /// Number of binary leader variables; they occupy indices `0..nbin`.
    pub nbin: usize,
    /// Probability that an eligible matrix entry is nonzero.
    pub density: f64,
    /// Integer coefficients are drawn from `[-range, range]`.
    pub range: i64,
    /// Rows of the dual-side block; `0` means no extension.
    pub q: usize,
    pub objective: ObjectiveMode,
}

impl Default for GeneratorParams {
    fn default() -> Self {
        Self {
            n1: 4,
            n2: 4,
            m: 4,
            p: 2,
            nbin: 3,
            density: 0.6,
            range: 5,
            q: 0,
            objective: ObjectiveMode::Independent,
        }
    }
}

impl GeneratorParams {
    fn check(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidParams(msg.into()));
        if self.n1 == 0 || self.n2 == 0 || self.m == 0 {
            return bad("n1, n2 and m must be positive");
        }
        if self.nbin > self.n1 {
            return bad("more binary variables than leader variables");
        }
        if !(self.density > 0.0 && self.density <= 1.0) {
            return bad("density must lie in (0, 1]");
        }
        if self.range < 1 {
            return bad("coefficient range must be at least 1");
        }
        Ok(())
    }
}

/// Generates an instance that satisfies the well-posedness conditions by
/// construction.
///
/// Column 0 of `B` is strictly positive and `d ≥ 0` with `d₀ ≥ 1`, so the
/// follower's dual polytope `{ψ ≥ 0 : Bᵀψ ≤ d}` is nonempty and bounded and
/// the follower LP has a finite optimum at every leader decision. A planted
/// binary `x⁰` with its follower optimum `ŷ` satisfies every upper-level row
/// with slack at least 1. Binary-column-only `A` keeps continuous leader
/// variables out of the follower problem, and `psi_bound` is set from the
/// exact dual maxima.
pub fn generate_random(params: &GeneratorParams, seed: u64) -> Result<MibpsdInstance> {
    params.check()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let GeneratorParams {
        n1,
        n2,
        m,
        p,
        nbin,
        density,
        range: r,
        q,
        objective,
    } = *params;

    let coef = |rng: &mut ChaCha8Rng| loop {
        let v = rng.gen_range(-r..=r);
        if v != 0 {
            return v as f64;
        }
    };

    let mut a = Matrix::zeros(m, n1);
    for j in 0..m {
        for i in 0..nbin {
            if rng.gen_bool(density) {
                a[(j, i)] = coef(&mut rng);
            }
        }
    }
    let mut b_mat = Matrix::zeros(m, n2);
    for j in 0..m {
        b_mat[(j, 0)] = rng.gen_range(1..=r) as f64;
        for k in 1..n2 {
            if rng.gen_bool(density) {
                b_mat[(j, k)] = coef(&mut rng);
            }
        }
    }
    let mut d: Vec<f64> = (0..n2).map(|_| rng.gen_range(0..=r) as f64).collect();
    d[0] = d[0].max(1.0);

    let x0: Vec<f64> = (0..n1)
        .map(|i| {
            if i < nbin {
                rng.gen_range(0..=1) as f64
            } else {
                rng.gen_range(0..=r) as f64
            }
        })
        .collect();
    let y0: Vec<f64> = (0..n2).map(|_| rng.gen_range(0..=r) as f64).collect();
    let ax0 = a.mul_vec(&x0);
    let by0 = b_mat.mul_vec(&y0);
    let b: Vec<f64> = (0..m)
        .map(|j| ax0[j] + by0[j] - rng.gen_range(1..=r) as f64)
        .collect();

    let mut g_xy = Matrix::zeros(p, n1);
    let mut g_y = Matrix::zeros(p, n2);
    for i in 0..p {
        for k in 0..n1 {
            if rng.gen_bool(density) {
                g_xy[(i, k)] = coef(&mut rng);
            }
        }
        for k in 0..n2 {
            if rng.gen_bool(density) {
                g_y[(i, k)] = coef(&mut rng);
            }
        }
    }

    let mut inst = MibpsdInstance {
        n1,
        n2,
        m,
        p,
        binary_indices: (0..nbin).collect(),
        c_x: vec![0.0; n1],
        c_y: vec![0.0; n2],
        d,
        a,
        b_mat,
        b,
        g_xy,
        g_y,
        h_y: Vec::new(),
        extension: None,
        psi_bound: None,
    };

    let tol = ToleranceSet::default();
    let follower = lp::solve_checked(&inst.follower_lp(&x0), &tol)?;
    let LpOutcome::Finite {
        primal: y_hat,
        dual: psi_hat,
        ..
    } = follower
    else {
        return Err(Error::NumericalFailure(format!(
            "planted follower LP came back {}",
            follower.kind()
        )));
    };
    let lhs = add(&inst.g_xy.mul_vec(&x0), &inst.g_y.mul_vec(&y_hat));
    inst.h_y = lhs
        .iter()
        .map(|v| v.floor() - rng.gen_range(1..=r) as f64)
        .collect();

    if q > 0 {
        let mut g_xpsi = Matrix::zeros(q, n1);
        let mut g_psi = Matrix::zeros(q, m);
        for i in 0..q {
            for k in 0..n1 {
                if rng.gen_bool(density) {
                    g_xpsi[(i, k)] = coef(&mut rng);
                }
            }
            for j in 0..m {
                if rng.gen_bool(density) {
                    g_psi[(i, j)] = coef(&mut rng);
                }
            }
        }
        let lhs = add(&g_xpsi.mul_vec(&x0), &g_psi.mul_vec(&psi_hat));
        let h_psi = lhs
            .iter()
            .map(|v| v.floor() - rng.gen_range(1..=r) as f64)
            .collect();
        inst.extension = Some(ExtensionBlock {
            g_xpsi,
            g_psi,
            h_psi,
        });
    }

    inst.c_x = (0..n1)
        .map(|i| {
            if i < nbin {
                rng.gen_range(-r..=r) as f64
            } else {
                rng.gen_range(0..=r) as f64
            }
        })
        .collect();
    inst.c_y = match objective {
        ObjectiveMode::Independent => (0..n2).map(|_| rng.gen_range(0..=r) as f64).collect(),
        ObjectiveMode::DEqualsCy => inst.d.clone(),
        ObjectiveMode::CyZero => vec![0.0; n2],
    };
    inst.psi_bound = Some(dual_bounds(&inst, &tol)?);
    Ok(inst)
}

/// `ceil(max ψ_j) + 1` over `{ψ ≥ 0 : Bᵀψ ≤ d}` for every row `j`.
fn dual_bounds(inst: &MibpsdInstance, tol: &ToleranceSet) -> Result<Vec<f64>> {
    (0..inst.m)
        .map(|j| {
            let mut lp = LpBuilder::new(Sense::Max);
            let psi = lp.add_vars(&vec![0.0; inst.m]);
            lp.set_cost(psi + j, 1.0);
            for k in 0..inst.n2 {
                let terms: Vec<_> = (0..inst.m).map(|r| (psi + r, inst.b_mat[(r, k)])).collect();
                lp.add_row(terms, lp::Cmp::Le, inst.d[k]);
            }
            match lp::solve_checked(&lp.build(), tol)? {
                LpOutcome::Finite { objective, .. } => Ok(objective.ceil() + 1.0),
                other => Err(Error::NumericalFailure(format!(
                    "dual bound LP for row {j} came back {}",
                    other.kind()
                ))),
            }
        })
        .collect()
}
