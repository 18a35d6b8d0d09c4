//! Benders master loop.
//!
//! The relaxed master problem (RMP) is `min c_xᵀx + t` over the leader domain
//! and the current cut pool. Each round solves it to optimality with a
//! best-first branch-and-bound, separates at the optimum (or at an in-out
//! point), and stops once the incumbent and the RMP value meet.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashSet};
use std::str::FromStr;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::accel::{in_out_point, InOutState};
use crate::benders::{
    self, is_integral, separate_monolithic, separate_sequence_independent, separate_with, timed, Cut,
    SequenceMode, Separation,
};
use crate::error::{Error, Result};
use crate::instance::MibpsdInstance;
use crate::linalg::{dot, Matrix};
use crate::lp::{self, LpOutcome, LpProblem, Sense, ToleranceSet};
use crate::oracle::{self, OracleStatus};
use crate::reformulation::{build_mccormick, build_single_level_mip, compute_psi_bound, McCormickBlock};

/// Values within this distance of an integer count as integral in B&B.
pub const BRANCH_TOL: f64 = 1e-7;
/// Absolute pruning tolerance against the incumbent.
pub const PRUNE_TOL: f64 = 1e-9;
/// Cut coefficients are compared on this grid for duplicate detection.
const CUT_KEY_GRID: f64 = 1e-9;

#[derive(Debug, Clone, Default)]
pub struct BnbOptions {
    pub deadline: Option<Instant>,
    pub node_limit: Option<usize>,
    /// The objective is known to be bounded below on every node, which
    /// allows tall node LPs to be solved through their dual.
    pub bounded: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub enum MipOutcome {
    Optimal { x: Vec<f64>, objective: f64 },
    Infeasible,
    /// Deadline or node limit reached.
    Stopped { incumbent: Option<(Vec<f64>, f64)>, bound: f64 },
}

struct Node {
    bound: f64,
    id: usize,
    /// `(column, is_upper, value)`
    fixes: Vec<(usize, bool, f64)>,
    primal: Vec<f64>,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Node {}
impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Node {
    // BinaryHeap is a max-heap: smaller bound first, then older node.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .bound
            .total_cmp(&self.bound)
            .then_with(|| other.id.cmp(&self.id))
    }
}

/// Solves `min cᵀz s.t. Gz ≥ h, z ≥ 0` through its dual
/// `max hᵀu s.t. Gᵀu ≤ c, u ≥ 0`, reading `z` off the dual's multipliers.
/// Only valid when the primal is known to be bounded below; `None` means
/// the dual route failed and the primal should be solved directly.
fn solve_through_dual(p: &LpProblem) -> Option<Option<(Vec<f64>, f64)>> {
    let gt = p.g.transpose();
    let mut g = Matrix::zeros(0, gt.cols());
    for j in 0..gt.rows() {
        let row: Vec<f64> = gt.row(j).iter().map(|v| -v).collect();
        g.push_row(&row);
    }
    let dual = LpProblem {
        c: p.h.clone(),
        g,
        h: p.c.iter().map(|v| -v).collect(),
        sense: Sense::Max,
        names: None,
    };
    match lp::solve_checked(&dual, &ToleranceSet::default()).ok()? {
        LpOutcome::Finite { dual: z, .. } => {
            let z: Vec<f64> = z.into_iter().map(|v| v.max(0.0)).collect();
            // Only primal feasibility matters here; optimality came from the dual.
            let feasible = (0..p.num_rows()).all(|i| {
                let row = p.g.row(i);
                let mag: f64 = row.iter().zip(&z).map(|(a, b)| (a * b).abs()).sum();
                dot(row, &z) - p.h[i] >= -1e-7 * (1.0 + p.h[i].abs() + mag)
            });
            feasible.then(|| {
                let obj = dot(&p.c, &z);
                Some((z, obj))
            })
        }
        // An unbounded dual means an infeasible primal.
        LpOutcome::Unbounded { .. } => Some(None),
        LpOutcome::Infeasible { .. } => None,
    }
}

fn solve_node(base: &LpProblem, fixes: &[(usize, bool, f64)], bounded: bool) -> Result<Option<(Vec<f64>, f64)>> {
    let mut p = base.clone();
    let n = p.num_vars();
    for &(j, upper, v) in fixes {
        let mut row = vec![0.0; n];
        row[j] = if upper { -1.0 } else { 1.0 };
        p.g.push_row(&row);
        p.h.push(if upper { -v } else { v });
    }
    if bounded && p.num_rows() > 2 * n {
        if let Some(out) = solve_through_dual(&p) {
            return Ok(out);
        }
    }
    match lp::solve_checked(&p, &ToleranceSet::default())? {
        LpOutcome::Finite {
            primal, objective, ..
        } => Ok(Some((primal, objective))),
        LpOutcome::Infeasible { .. } => Ok(None),
        LpOutcome::Unbounded { .. } => Err(Error::AssumptionViolation(
            "the continuous relaxation of a master problem is unbounded".into(),
        )),
    }
}

/// Most fractional integer column; ties go to the lowest index.
fn branching_column(x: &[f64], integer: &[usize]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for &j in integer {
        let frac = x[j] - x[j].floor();
        if frac <= BRANCH_TOL || frac >= 1.0 - BRANCH_TOL {
            continue;
        }
        let dist = (frac - 0.5).abs();
        if best.is_none_or(|(bj, bd)| dist < bd || dist == bd && j < bj) {
            best = Some((j, dist));
        }
    }
    best.map(|(j, _)| j)
}

/// Best-first branch-and-bound for `min cᵀz s.t. Gz ≥ h, z ≥ 0` with the
/// columns in `integer` restricted to integers. Integer entries of the
/// returned point are rounded exactly.
pub fn solve_mip(base: &LpProblem, integer: &[usize], opts: &BnbOptions) -> Result<MipOutcome> {
    let base = LpProblem {
        c: base.min_costs(),
        sense: Sense::Min,
        ..base.clone()
    };
    let mut heap = BinaryHeap::new();
    let mut next_id = 0;
    let mut incumbent: Option<(Vec<f64>, f64)> = None;
    let mut nodes = 0usize;
    if let Some((primal, bound)) = solve_node(&base, &[], opts.bounded)? {
        heap.push(Node {
            bound,
            id: next_id,
            fixes: Vec::new(),
            primal,
        });
        next_id += 1;
    }
    while let Some(node) = heap.pop() {
        let cutoff = incumbent.as_ref().map_or(f64::INFINITY, |(_, v)| v - PRUNE_TOL);
        if node.bound >= cutoff {
            continue;
        }
        let out_of_budget = opts.deadline.is_some_and(|d| Instant::now() >= d)
            || opts.node_limit.is_some_and(|l| nodes >= l);
        if out_of_budget {
            return Ok(MipOutcome::Stopped {
                incumbent,
                bound: node.bound,
            });
        }
        nodes += 1;
        let Some(j) = branching_column(&node.primal, integer) else {
            let mut x = node.primal;
            for &k in integer {
                x[k] = x[k].round();
            }
            incumbent = Some((x, node.bound));
            continue;
        };
        let v = node.primal[j];
        for (upper, bound) in [(true, v.floor()), (false, v.ceil())] {
            let mut fixes = node.fixes.clone();
            fixes.push((j, upper, bound));
            if let Some((primal, b)) = solve_node(&base, &fixes, opts.bounded)? {
                let cutoff = incumbent.as_ref().map_or(f64::INFINITY, |(_, v)| v - PRUNE_TOL);
                if b < cutoff {
                    heap.push(Node {
                        bound: b,
                        id: next_id,
                        fixes,
                        primal,
                    });
                    next_id += 1;
                }
            }
        }
    }
    Ok(match incumbent {
        Some((x, objective)) => MipOutcome::Optimal { x, objective },
        None => MipOutcome::Infeasible,
    })
}

/// The relaxed master problem over `(x, t)`.
#[derive(Debug, Clone)]
pub struct RelaxedMaster {
    pub c_x: Vec<f64>,
    pub binary: Vec<bool>,
    /// Upper bounds for continuous leader entries with negative cost.
    pub x_upper: Vec<Option<f64>>,
    pub t_lower: f64,
    pub cuts: Vec<Cut>,
    keys: HashSet<Vec<i64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RmpSolution {
    pub x_hat: Vec<f64>,
    pub t_hat: f64,
    pub objective: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum RmpOutcome {
    Solved(RmpSolution),
    Infeasible,
    Stopped,
}

impl RelaxedMaster {
    /// The initial RMP: no cuts, `t ≥ t_lower`.
    pub fn new(c_x: Vec<f64>, binary: Vec<bool>, t_lower: f64) -> Self {
        let n = c_x.len();
        Self {
            c_x,
            binary,
            x_upper: vec![None; n],
            t_lower,
            cuts: Vec::new(),
            keys: HashSet::new(),
        }
    }

    fn key(cut: &Cut) -> Vec<i64> {
        let s = cut
            .coef_x
            .iter()
            .chain([&cut.coef_t, &cut.rhs])
            .fold(0.0f64, |m, v| m.max(v.abs()))
            .max(f64::MIN_POSITIVE);
        std::iter::once(cut.coef_t)
            .chain(cut.coef_x.iter().copied())
            .chain(std::iter::once(cut.rhs))
            .map(|v| (v / s / CUT_KEY_GRID).round() as i64)
            .collect()
    }

    /// Adds `cut` unless an equal one (after scaling) is already pooled.
    pub fn add_cut(&mut self, cut: Cut) -> bool {
        if self.keys.insert(Self::key(&cut)) {
            self.cuts.push(cut);
            true
        } else {
            false
        }
    }

    /// The LP relaxation over `(x, t − t_lower)`.
    pub fn lp(&self) -> LpProblem {
        let n = self.c_x.len();
        let mut c = self.c_x.clone();
        c.push(1.0);
        let mut g = Matrix::zeros(0, n + 1);
        let mut h = Vec::new();
        let mut row = vec![0.0; n + 1];
        for i in 0..n {
            let ub = if self.binary[i] { Some(1.0) } else { self.x_upper[i] };
            if let Some(ub) = ub {
                row[i] = -1.0;
                g.push_row(&row);
                h.push(-ub);
                row[i] = 0.0;
            }
        }
        for cut in &self.cuts {
            for (r, &a) in row.iter_mut().zip(&cut.coef_x) {
                *r = -a;
            }
            row[n] = cut.coef_t;
            g.push_row(&row);
            h.push(cut.rhs - cut.coef_t * self.t_lower);
        }
        LpProblem {
            c,
            g,
            h,
            sense: Sense::Min,
            names: None,
        }
    }
}

/// Solves the RMP to optimality over binary `x`.
pub fn solve_rmp(rmp: &RelaxedMaster, opts: &BnbOptions) -> Result<RmpOutcome> {
    let integer: Vec<usize> = (0..rmp.c_x.len()).filter(|&i| rmp.binary[i]).collect();
    let n = rmp.c_x.len();
    // c_xᵀx + t' is bounded below: t' ≥ 0 and negative costs carry bounds.
    let opts = BnbOptions {
        bounded: true,
        ..opts.clone()
    };
    Ok(match solve_mip(&rmp.lp(), &integer, &opts)? {
        MipOutcome::Optimal { x, objective } => RmpOutcome::Solved(RmpSolution {
            x_hat: x[..n].to_vec(),
            t_hat: x[n] + rmp.t_lower,
            objective: objective + rmp.t_lower,
        }),
        MipOutcome::Infeasible => RmpOutcome::Infeasible,
        MipOutcome::Stopped { .. } => RmpOutcome::Stopped,
    })
}

/// Floor on `t`: the least leader-side follower cost `c_yᵀy` over the
/// relaxed high-point feasible set. `None` when that set is empty.
pub fn lower_bound_floor(inst: &MibpsdInstance) -> Result<Option<f64>> {
    let mut b = inst.relaxation_builder();
    for i in 0..inst.n1 {
        b.set_cost(i, 0.0);
    }
    match lp::solve_checked(&b.build(), &ToleranceSet::default())? {
        LpOutcome::Finite { objective, .. } => Ok(Some(objective)),
        LpOutcome::Infeasible { .. } => Ok(None),
        LpOutcome::Unbounded { .. } => Err(Error::AssumptionViolation(
            "c_yᵀy is unbounded below over the relaxed high-point set".into(),
        )),
    }
}

/// Upper bounds for continuous leader entries with negative cost, which the
/// RMP would otherwise push to infinity.
fn continuous_upper_bounds(inst: &MibpsdInstance) -> Result<Vec<Option<f64>>> {
    let mut out = vec![None; inst.n1];
    for i in 0..inst.n1 {
        if inst.is_binary(i) || inst.c_x[i] >= 0.0 {
            continue;
        }
        let mut b = inst.relaxation_builder();
        for j in 0..b.num_vars() {
            b.set_cost(j, if j == i { -1.0 } else { 0.0 });
        }
        match lp::solve_checked(&b.build(), &ToleranceSet::default())? {
            LpOutcome::Finite { objective, .. } => out[i] = Some(-objective),
            _ => {
                return Err(Error::AssumptionViolation(format!(
                    "continuous leader variable {i} has negative cost and no finite upper bound"
                )))
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Method {
    Dedicated,
    Standard,
    SequenceIndependent,
    DirectMip,
    BruteForce,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::Dedicated,
        Method::Standard,
        Method::SequenceIndependent,
        Method::DirectMip,
        Method::BruteForce,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Method::Dedicated => "dedicated",
            Method::Standard => "standard",
            Method::SequenceIndependent => "seqind",
            Method::DirectMip => "mip",
            Method::BruteForce => "brute",
        }
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| format!("unknown method `{s}` (expected dedicated, standard, seqind, mip or brute)"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveOptions {
    pub gap_tol: f64,
    pub time_limit: Option<Duration>,
    pub iteration_cap: usize,
    pub normalize: bool,
    pub in_out: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            gap_tol: 1e-6,
            time_limit: Some(Duration::from_secs(3600)),
            iteration_cap: 10_000,
            normalize: true,
            in_out: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolveStatus {
    Optimal,
    TimeLimit,
    Infeasible,
}

/// One master iteration. Infinite bounds are stored as `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iter: usize,
    pub x_hat: Vec<f64>,
    /// Labels of the cuts added this round.
    pub cuts: Vec<String>,
    pub new_incumbent: bool,
    pub lower_bound: Option<f64>,
    pub upper_bound: Option<f64>,
    pub elapsed_seconds: f64,
    pub separation_seconds: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SolveLog {
    pub records: Vec<IterationRecord>,
}

impl SolveLog {
    pub fn mean_separation_seconds(&self) -> Option<f64> {
        let n = self.records.iter().filter(|r| r.separation_seconds > 0.0).count();
        (n > 0).then(|| self.records.iter().map(|r| r.separation_seconds).sum::<f64>() / n as f64)
    }

    /// Lower bounds never decrease and upper bounds never increase, up to
    /// rounding (the final bound is clipped to an incumbent value that may
    /// differ from the master bound in the last digits).
    pub fn is_monotone(&self) -> bool {
        let slack = |a: f64| 1e-9 * (1.0 + a.abs());
        self.records.windows(2).all(|w| {
            let lb_ok = match (w[0].lower_bound, w[1].lower_bound) {
                (Some(a), Some(b)) => b >= a - slack(a),
                (Some(_), None) => false,
                _ => true,
            };
            let ub_ok = match (w[0].upper_bound, w[1].upper_bound) {
                (Some(a), Some(b)) => b <= a + slack(a),
                (Some(_), None) => false,
                _ => true,
            };
            lb_ok && ub_ok
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveResult {
    pub status: SolveStatus,
    pub x_star: Vec<f64>,
    pub y_star: Vec<f64>,
    /// `+∞` when no feasible point is known.
    pub objective: f64,
    pub lower_bound: f64,
    pub upper_bound: f64,
    pub gap: f64,
    pub log: SolveLog,
}

fn relative_gap(lb: f64, ub: f64) -> f64 {
    if ub.is_finite() && lb.is_finite() {
        ((ub - lb) / (1.0 + ub.abs())).max(0.0)
    } else {
        f64::INFINITY
    }
}

fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

fn infeasible_result(log: SolveLog) -> SolveResult {
    SolveResult {
        status: SolveStatus::Infeasible,
        x_star: Vec::new(),
        y_star: Vec::new(),
        objective: f64::INFINITY,
        lower_bound: f64::INFINITY,
        upper_bound: f64::INFINITY,
        gap: 0.0,
        log,
    }
}

/// Solves the bilevel instance with the chosen method.
pub fn solve(inst: &MibpsdInstance, method: Method, opts: &SolveOptions) -> Result<SolveResult> {
    inst.check_dimensions()?;
    let coupled = inst.coupled_continuous_columns();
    if !coupled.is_empty() {
        return Err(Error::AssumptionViolation(format!(
            "the follower sees continuous leader columns {coupled:?}"
        )));
    }
    match method {
        Method::BruteForce => solve_brute(inst),
        Method::DirectMip => solve_direct(inst, opts),
        _ => solve_benders(inst, method, opts),
    }
}

fn solve_brute(inst: &MibpsdInstance) -> Result<SolveResult> {
    let sol = oracle::solve_bruteforce(inst)?;
    if sol.status == OracleStatus::Infeasible {
        return Ok(infeasible_result(SolveLog::default()));
    }
    Ok(SolveResult {
        status: SolveStatus::Optimal,
        x_star: sol.x_star,
        y_star: sol.y_star,
        objective: sol.objective,
        lower_bound: sol.objective,
        upper_bound: sol.objective,
        gap: 0.0,
        log: SolveLog::default(),
    })
}

fn solve_direct(inst: &MibpsdInstance, opts: &SolveOptions) -> Result<SolveResult> {
    let start = Instant::now();
    let mc = build_mccormick(inst, &compute_psi_bound(inst)?);
    let mip = build_single_level_mip(inst, &mc);
    let bnb = BnbOptions {
        deadline: opts.time_limit.map(|d| start + d),
        ..BnbOptions::default()
    };
    let unpack = |z: &[f64]| (z[mip.layout.x.clone()].to_vec(), z[mip.layout.y.clone()].to_vec());
    Ok(match solve_mip(&mip.lp, &mip.integer, &bnb)? {
        MipOutcome::Optimal { x, objective } => {
            let (x_star, y_star) = unpack(&x);
            SolveResult {
                status: SolveStatus::Optimal,
                x_star,
                y_star,
                objective,
                lower_bound: objective,
                upper_bound: objective,
                gap: 0.0,
                log: SolveLog::default(),
            }
        }
        MipOutcome::Infeasible => infeasible_result(SolveLog::default()),
        MipOutcome::Stopped { incumbent, bound } => {
            let (x_star, y_star, ub) = match incumbent {
                Some((z, v)) => {
                    let (x, y) = unpack(&z);
                    (x, y, v)
                }
                None => (Vec::new(), Vec::new(), f64::INFINITY),
            };
            SolveResult {
                status: SolveStatus::TimeLimit,
                x_star,
                y_star,
                objective: ub,
                lower_bound: bound.min(ub),
                upper_bound: ub,
                gap: relative_gap(bound, ub),
                log: SolveLog::default(),
            }
        }
    })
}

enum Separator {
    Dedicated { normalize: bool },
    Standard { normalize: bool },
    Independent(SequenceMode),
}

impl Separator {
    fn run(&self, inst: &MibpsdInstance, mc: &McCormickBlock, x: &[f64]) -> Result<Separation> {
        match *self {
            Separator::Dedicated { normalize } => separate_with(inst, mc, x, normalize),
            Separator::Standard { normalize } => separate_monolithic(inst, mc, x, normalize),
            Separator::Independent(mode) => separate_sequence_independent(inst, mc, x, mode),
        }
    }
}

/// Separation round bookkeeping.
struct Round {
    added: Vec<String>,
    feasible: Option<benders::FeasiblePoint>,
}

fn absorb(rmp: &mut RelaxedMaster, sep: Separation, x_out: &[f64], t_out: f64, round: &mut Round) {
    for cut in sep.cuts {
        if cut.is_violated(x_out, t_out) {
            let label = cut.family.label().to_string();
            if rmp.add_cut(cut) {
                round.added.push(label);
            }
        }
    }
    if let Some(fp) = sep.feasible_point {
        if round.feasible.as_ref().is_none_or(|f| fp.objective < f.objective) {
            round.feasible = Some(fp);
        }
    }
}

fn solve_benders(inst: &MibpsdInstance, method: Method, opts: &SolveOptions) -> Result<SolveResult> {
    let start = Instant::now();
    let deadline = opts.time_limit.map(|d| start + d);
    let separator = match method {
        Method::Dedicated => Separator::Dedicated {
            normalize: opts.normalize,
        },
        Method::Standard => Separator::Standard {
            normalize: opts.normalize,
        },
        Method::SequenceIndependent => Separator::Independent(SequenceMode::detect(inst).ok_or_else(|| {
            Error::ModeMismatch("order-free separation needs d = c_y or c_y = 0".into())
        })?),
        _ => unreachable!("not a decomposition method"),
    };
    let mc = build_mccormick(inst, &compute_psi_bound(inst)?);
    let mut log = SolveLog::default();
    let Some(t_lower) = lower_bound_floor(inst)? else {
        return Ok(infeasible_result(log));
    };
    let mut rmp = RelaxedMaster::new(inst.c_x.clone(), inst.binary_mask(), t_lower);
    rmp.x_upper = continuous_upper_bounds(inst)?;
    let bnb = BnbOptions {
        deadline,
        ..BnbOptions::default()
    };
    let mask = inst.binary_mask();

    let mut state = InOutState::default();
    let (mut lb, mut ub) = (f64::NEG_INFINITY, f64::INFINITY);
    let mut incumbent: Option<Vec<f64>> = None;
    let mut status = SolveStatus::TimeLimit;
    let closed = |lb: f64, ub: f64| ub.is_finite() && ub - lb <= opts.gap_tol * (1.0 + ub.abs());

    for iter in 1..=opts.iteration_cap {
        if deadline.is_some_and(|d| Instant::now() >= d) {
            break;
        }
        let sol = match solve_rmp(&rmp, &bnb)? {
            RmpOutcome::Solved(s) => s,
            RmpOutcome::Stopped => break,
            RmpOutcome::Infeasible => {
                status = if incumbent.is_some() {
                    lb = ub;
                    SolveStatus::Optimal
                } else {
                    SolveStatus::Infeasible
                };
                break;
            }
        };
        let improved = sol.objective > lb + 1e-9 * (1.0 + lb.abs());
        lb = lb.max(sol.objective);
        let mut record = IterationRecord {
            iter,
            x_hat: sol.x_hat.clone(),
            cuts: Vec::new(),
            new_incumbent: false,
            lower_bound: finite(lb.min(ub)),
            upper_bound: finite(ub),
            elapsed_seconds: start.elapsed().as_secs_f64(),
            separation_seconds: 0.0,
        };
        if closed(lb, ub) {
            status = SolveStatus::Optimal;
            log.records.push(record);
            break;
        }

        let (x_out, t_out) = (sol.x_hat, sol.t_hat);
        let x_sep = if opts.in_out {
            let (x_sep, next) = in_out_point(&state, &x_out, &mask);
            state = next;
            x_sep
        } else {
            x_out.clone()
        };
        let mut round = Round {
            added: Vec::new(),
            feasible: None,
        };
        let (sep, secs) = timed(|| separator.run(inst, &mc, &x_sep));
        let mut sep_seconds = secs;
        absorb(&mut rmp, sep?, &x_out, t_out, &mut round);
        if round.added.is_empty() && x_sep != x_out {
            let (sep, secs) = timed(|| separator.run(inst, &mc, &x_out));
            sep_seconds += secs;
            absorb(&mut rmp, sep?, &x_out, t_out, &mut round);
        }

        let mut reset = false;
        if let Some(fp) = round.feasible.take() {
            if fp.objective < ub && is_integral(inst, &fp.x_hat) {
                ub = fp.objective;
                state.on_incumbent(&fp.x_hat);
                incumbent = Some(fp.x_hat);
                record.new_incumbent = true;
                reset = true;
            }
        }
        if !reset {
            state.stall_counter = if improved { 0 } else { state.stall_counter + 1 };
        }
        record.cuts = round.added;
        record.lower_bound = finite(lb.min(ub));
        record.upper_bound = finite(ub);
        record.separation_seconds = sep_seconds;
        record.elapsed_seconds = start.elapsed().as_secs_f64();
        let no_cut = record.cuts.is_empty();
        log.records.push(record);
        if closed(lb, ub) {
            status = SolveStatus::Optimal;
            break;
        }
        if no_cut {
            return Err(Error::NumericalFailure(format!(
                "iteration {iter}: no violated cut at an unconverged master solution"
            )));
        }
    }

    if status == SolveStatus::Infeasible {
        return Ok(infeasible_result(log));
    }
    let (x_star, y_star) = match &incumbent {
        Some(x) => {
            let resp = oracle::optimistic_response(inst, x)?.ok_or_else(|| {
                Error::NumericalFailure("no optimistic follower response at the incumbent".into())
            })?;
            (x.clone(), resp.y)
        }
        None => (Vec::new(), Vec::new()),
    };
    Ok(SolveResult {
        status,
        objective: ub,
        x_star,
        y_star,
        lower_bound: lb.min(ub),
        upper_bound: ub,
        gap: if status == SolveStatus::Optimal { relative_gap(lb.min(ub), ub) } else { relative_gap(lb, ub) },
        log,
    })
}

/// Leader objective of a result's `(x*, y*)`, for cross-checks.
pub fn evaluate(inst: &MibpsdInstance, res: &SolveResult) -> Option<f64> {
    (res.x_star.len() == inst.n1).then(|| dot(&inst.c_x, &res.x_star) + dot(&inst.c_y, &res.y_star))
}
