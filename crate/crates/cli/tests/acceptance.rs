//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any
//! criterion fails.

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use mibpsd::accel::{solve_normal_lp, RayCase};
use mibpsd::benders::{
    assemble_bsp_outcome, DualVector, s2_problem_with, separate_sequence_independent_traced, separate_with, solve_bsp_monolithic,
    solve_s1, solve_s2, BspOutcome, Cut, CutFamily, S1Outcome, S2Outcome,
};
use mibpsd::instance::{generate_random, GeneratorParams, MibpsdInstance, ObjectiveMode};
use mibpsd::linalg::Matrix;
use mibpsd::lp::{self, check_certificate, LpOutcome, LpProblem, Sense, ToleranceSet};
use mibpsd::master::{solve, Method, SolveOptions, SolveStatus};
use mibpsd::reformulation::{build_bsp_dual, BspLayout, build_mccormick, compute_psi_bound, McCormickBlock};
use mibpsd_cli::{compare, render_table, RunArgs};

type Verdict = (bool, String);

fn rel(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / b.abs().max(1.0)
    }
}

/// Objectives of two runs agree: both infeasible, or both finite and close.
fn agree(a: &mibpsd::master::SolveResult, b: &mibpsd::master::SolveResult, tol: f64) -> (bool, f64) {
    match (a.status, b.status) {
        (SolveStatus::Infeasible, SolveStatus::Infeasible) => (true, 0.0),
        (SolveStatus::Optimal, SolveStatus::Optimal) => {
            let d = rel(a.objective, b.objective);
            (d <= tol, d)
        }
        _ => (false, f64::INFINITY),
    }
}

fn t1() -> MibpsdInstance {
    let one = |v: f64| Matrix::from_rows(1, &[vec![v]]).unwrap();
    MibpsdInstance {
        n1: 1,
        n2: 1,
        m: 1,
        p: 1,
        binary_indices: vec![0],
        c_x: vec![-1.0],
        c_y: vec![1.0],
        d: vec![1.0],
        a: one(1.0),
        b_mat: one(1.0),
        b: vec![1.0],
        g_xy: one(0.0),
        g_y: one(1.0),
        h_y: vec![0.3],
        extension: None,
        psi_bound: None,
    }
}

/// The 50 instances shared by several criteria; the even-numbered half
/// carries a dual-side block.
fn suite() -> Vec<MibpsdInstance> {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    (0..50)
        .map(|k| {
            let n1 = rng.gen_range(3..=8);
            let params = GeneratorParams {
                n1,
                n2: rng.gen_range(4..=10),
                m: rng.gen_range(4..=10),
                p: rng.gen_range(1..=5),
                nbin: rng.gen_range(1..=n1),
                density: 0.5,
                range: 5,
                q: if k % 2 == 0 { rng.gen_range(1..=3) } else { 0 },
                objective: ObjectiveMode::Independent,
            };
            generate_random(&params, 1000 + k as u64).unwrap()
        })
        .collect()
}

fn random_point(inst: &MibpsdInstance, rng: &mut ChaCha8Rng, integral: bool) -> Vec<f64> {
    (0..inst.n1)
        .map(|i| match (inst.is_binary(i), integral) {
            (true, true) => rng.gen_range(0..=1) as f64,
            (true, false) => rng.gen_range(0.0..=1.0),
            (false, _) => rng.gen_range(0.0..=5.0),
        })
        .collect()
}

fn mccormick(inst: &MibpsdInstance) -> McCormickBlock {
    build_mccormick(inst, &compute_psi_bound(inst).unwrap())
}

fn criterion_1(suite: &[MibpsdInstance]) -> Verdict {
    let start = Instant::now();
    let opts = SolveOptions::default();
    let mut worst = 0.0f64;
    let mut failures = Vec::new();
    let mut infeasible = 0;
    for (k, inst) in suite.iter().enumerate() {
        let brute = solve(inst, Method::BruteForce, &opts).unwrap();
        if brute.status == SolveStatus::Infeasible {
            infeasible += 1;
        }
        let ded = solve(inst, Method::Dedicated, &opts);
        for m in [Method::Standard, Method::DirectMip] {
            let other = solve(inst, m, &opts);
            match (&ded, &other) {
                (Ok(d), Ok(o)) => {
                    let (ok_b, db) = agree(d, &brute, 1e-6);
                    let (ok_o, dm) = agree(d, o, 1e-6);
                    worst = worst.max(db).max(dm);
                    if !ok_b || !ok_o {
                        failures.push(format!("#{k} {}", m.name()));
                    }
                }
                (a, b) => failures.push(format!("#{k}: {:?} / {:?}", a.as_ref().err(), b.as_ref().err())),
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    (
        failures.is_empty(),
        format!(
            "50 instances ({infeasible} infeasible), dedicated vs brute/standard/mip worst rel diff {worst:.1e}, {secs:.1} s{}",
            if failures.is_empty() { String::new() } else { format!(", mismatches {failures:?}") }
        ),
    )
}

fn criterion_2(suite: &[MibpsdInstance]) -> Verdict {
    let start = Instant::now();
    let tol = ToleranceSet {
        feas: 1e-6,
        gap: 1e-6,
        ray: 1e-9,
        ..ToleranceSet::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (mut finite, mut rays, mut bad) = (0, 0, Vec::new());
    for (k, inst) in suite.iter().enumerate() {
        let mc = mccormick(inst);
        for j in 0..4 {
            let x = random_point(inst, &mut rng, j < 2);
            let s1 = solve_s1(inst, &mc, &x).unwrap();
            let s2 = solve_s2(inst, &x, s1.value()).unwrap();
            let assembled = assemble_bsp_outcome(inst, &mc, &s1, &s2);
            let bsp = build_bsp_dual(inst, &mc, &x);
            let certified = check_certificate(&bsp, &assembled, &tol);
            let same = match (solve_bsp_monolithic(inst, &mc, &x).unwrap(), &assembled) {
                (BspOutcome::Finite { objective, .. }, LpOutcome::Finite { objective: o2, .. }) => {
                    finite += 1;
                    rel(*o2, objective) <= 1e-6
                }
                (BspOutcome::Unbounded { .. }, LpOutcome::Unbounded { .. }) => {
                    rays += 1;
                    true
                }
                _ => false,
            };
            if !certified || !same {
                bad.push(format!("#{k}/{j} certified={certified} same={same}"));
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    (
        bad.is_empty() && secs < 30.0,
        format!("200 pairs ({finite} finite, {rays} rays) agree and verify, {secs:.1} s{}", if bad.is_empty() { String::new() } else { format!(", failures {bad:?}") }),
    )
}

fn criterion_3() -> Verdict {
    let opts = SolveOptions {
        in_out: false,
        ..SolveOptions::default()
    };
    let res = solve(&t1(), Method::Dedicated, &opts).unwrap();
    let cuts: Vec<String> = res.log.records.iter().flat_map(|r| r.cuts.clone()).collect();
    let c4 = cuts.iter().position(|c| c == "C4");
    let c1 = cuts.iter().position(|c| c == "C1");
    let ordered = matches!((c4, c1), (Some(a), Some(b)) if a < b);
    let iters = res.log.records.len();
    let ok = ordered && (res.objective - 1.0).abs() <= 1e-6 && iters <= 5 && res.status == SolveStatus::Optimal;
    (ok, format!("cuts {cuts:?}, objective {:.6}, {iters} iterations", res.objective))
}

/// `max bᵀψ − ψᵀA x̂` over `Bᵀψ ≤ d, ψ ≥ 0`, with each product `|a| ψ_j x_i`
/// replaced by a variable under its four McCormick inequalities.
fn mccormick_value(inst: &MibpsdInstance, psi_bar: &[f64], x: &[f64]) -> f64 {
    let mut lp = lp::LpBuilder::new(Sense::Max);
    let psi0 = lp.add_vars(&inst.b);
    for k in 0..inst.n2 {
        let terms: Vec<_> = (0..inst.m).map(|j| (psi0 + j, inst.b_mat[(j, k)])).collect();
        lp.add_row(terms, lp::Cmp::Le, inst.d[k]);
    }
    for j in 0..inst.m {
        for i in 0..inst.n1 {
            let a = inst.a[(j, i)];
            if a == 0.0 {
                continue;
            }
            let al = a.abs();
            let s = lp.add_var(-a.signum());
            lp.add_row([(s, 1.0)], lp::Cmp::Le, al * psi_bar[j] * x[i]);
            lp.add_row([(s, 1.0), (psi0 + j, -al)], lp::Cmp::Le, 0.0);
            lp.add_row([(s, 1.0), (psi0 + j, -al)], lp::Cmp::Ge, -al * psi_bar[j] * (1.0 - x[i]));
        }
    }
    match lp::solve_checked(&lp.build(), &ToleranceSet::default()).unwrap() {
        LpOutcome::Finite { objective, .. } => objective,
        other => panic!("McCormick LP came back {}", other.kind()),
    }
}

fn criterion_4(suite: &[MibpsdInstance]) -> Verdict {
    let mut worst = 0.0f64;
    let mut points = 0;
    for inst in suite {
        let psi_bar = compute_psi_bound(inst).unwrap();
        let nb = inst.binary_indices.len();
        for code in 0..1usize << nb {
            let mut x = vec![0.0; inst.n1];
            for (bit, &i) in inst.binary_indices.iter().enumerate() {
                x[i] = ((code >> bit) & 1) as f64;
            }
            let direct = match lp::solve_checked(&inst.follower_lp(&x), &ToleranceSet::default()).unwrap() {
                LpOutcome::Finite { objective, .. } => objective,
                other => panic!("follower LP came back {}", other.kind()),
            };
            worst = worst.max(rel(mccormick_value(inst, &psi_bar, &x), direct));
            points += 1;
        }
    }
    (worst <= 1e-6, format!("{points} binary points, worst rel diff {worst:.1e}"))
}

fn cut_distance(a: &Cut, b: &Cut) -> f64 {
    let va: Vec<f64> = a.coef_x.iter().copied().chain([a.rhs]).collect();
    let vb: Vec<f64> = b.coef_x.iter().copied().chain([b.rhs]).collect();
    let na = va.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let nb = vb.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    va.iter().zip(&vb).map(|(x, y)| (x / na - y / nb).abs()).fold(0.0, f64::max)
}

/// Whether every optimum of the normalized problem induces the same cut:
/// each cut coefficient, a linear function of the dual point, is minimised
/// and maximised over the optimal face.
fn unique_normal_cut(inst: &MibpsdInstance, mc: &McCormickBlock, x: &[f64], value: f64) -> bool {
    let lay = BspLayout::new(inst, mc);
    let mut face = build_bsp_dual(inst, mc, x);
    let n = face.num_vars();
    face.h.iter_mut().for_each(|h| *h = 0.0);
    face.g.push_row(&vec![1.0; n]);
    face.h.push(1.0);
    face.g.push_row(&vec![-1.0; n]);
    face.h.push(-1.0);
    let c = face.c.clone();
    face.g.push_row(&c);
    face.h.push(value - 1e-9 * (1.0 + value.abs()));
    let columns: Vec<Vec<f64>> = (0..n)
        .map(|k| {
            let mut e = vec![0.0; n];
            e[k] = 1.0;
            let (coef, rhs) = DualVector::from_vec(&lay, &e).affine_form(inst, mc);
            coef.into_iter().chain([rhs]).collect()
        })
        .collect();
    (0..=inst.n1).all(|i| {
        let f: Vec<f64> = columns.iter().map(|col| col[i]).collect();
        let range: Vec<f64> = [Sense::Min, Sense::Max]
            .into_iter()
            .map(|sense| {
                let p = LpProblem { c: f.clone(), sense, ..face.clone() };
                match lp::solve_checked(&p, &ToleranceSet::default()) {
                    Ok(LpOutcome::Finite { objective, .. }) => objective,
                    _ => f64::NAN,
                }
            })
            .collect();
        range[1] - range[0] <= 1e-7
    })
}

fn criterion_5(suite: &[MibpsdInstance]) -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (mut rays, mut worst_norm, mut infeasible_rays) = (0, 0.0f64, 0);
    for inst in suite {
        let mc = mccormick(inst);
        for j in 0..4 {
            let x = random_point(inst, &mut rng, j < 2);
            for r in separate_with(inst, &mc, &x, true).unwrap().normalized {
                rays += 1;
                worst_norm = worst_norm.max((r.l1_norm() - 1.0).abs());
                if !r.is_homogeneous_ray(inst, &mc, 1e-6) {
                    infeasible_rays += 1;
                }
            }
        }
    }

    // Newton-case pairs: points where the follower side is finite and the
    // leader side has a ray with w > 0.
    let mut pairs = 0;
    let mut worst_cut = 0.0f64;
    let mut seed = 5000;
    let mut non_unique = 0;
    while pairs < 20 && seed < 7000 {
        seed += 1;
        let params = GeneratorParams {
            n1: 3,
            n2: 4,
            m: 4,
            p: 3,
            nbin: 3,
            q: (seed % 2) as usize,
            ..GeneratorParams::default()
        };
        let inst = generate_random(&params, seed).unwrap();
        let mc = mccormick(&inst);
        let x = random_point(&inst, &mut rng, seed % 3 != 0);
        let sep = separate_with(&inst, &mc, &x, true).unwrap();
        let Some(r) = sep.normalized.iter().find(|r| r.source_case == RayCase::NewtonCase) else {
            continue;
        };
        let Some((mono, value)) = solve_normal_lp(&inst, &mc, &x).unwrap() else {
            continue;
        };
        if !unique_normal_cut(&inst, &mc, &x, value) {
            non_unique += 1;
            continue;
        }
        pairs += 1;
        let a = r.cut(CutFamily::C4OptimalFace, &inst, &mc);
        let b = Cut::from_dual(CutFamily::C4OptimalFace, mono, &inst, &mc);
        worst_cut = worst_cut.max(cut_distance(&a, &b));
        worst_norm = worst_norm.max((r.l1_norm() - 1.0).abs());
        if !r.is_homogeneous_ray(&inst, &mc, 1e-6) {
            infeasible_rays += 1;
        }
    }
    let ok = worst_norm <= 1e-6 && infeasible_rays == 0 && pairs == 20 && worst_cut <= 1e-5;
    (
        ok,
        format!(
            "{rays} suite rays, {pairs} Newton pairs with a unique optimal cut ({non_unique} with alternative optima skipped): worst |‖r‖₁−1| {worst_norm:.1e}, {infeasible_rays} infeasible, worst cut diff {worst_cut:.1e}"
        ),
    )
}

fn criterion_6(suite: &[MibpsdInstance]) -> Verdict {
    let mut worst = 0.0f64;
    let mut bad = Vec::new();
    for (k, inst) in suite.iter().enumerate() {
        let runs: Vec<_> = [(false, false), (true, false), (false, true), (true, true)]
            .into_iter()
            .map(|(normalize, in_out)| {
                let opts = SolveOptions {
                    normalize,
                    in_out,
                    ..SolveOptions::default()
                };
                solve(inst, Method::Dedicated, &opts).unwrap()
            })
            .collect();
        for r in &runs[1..] {
            let (ok, d) = agree(r, &runs[0], 1e-6);
            worst = worst.max(d);
            if !ok || !r.log.is_monotone() {
                bad.push(k);
            }
        }
    }
    (bad.is_empty(), format!("4 configurations x 50 instances, worst rel diff {worst:.1e}{}", if bad.is_empty() { String::new() } else { format!(", mismatches {bad:?}") }))
}

fn criterion_7() -> Verdict {
    let mut worst = 0.0f64;
    let mut bad = Vec::new();
    let mut separations = 0;
    for (k, mode) in (0..40).map(|k| (k, if k < 20 { ObjectiveMode::DEqualsCy } else { ObjectiveMode::CyZero })) {
        let mut rng = ChaCha8Rng::seed_from_u64(300 + k);
        let n1 = rng.gen_range(2..=6);
        let params = GeneratorParams {
            n1,
            n2: rng.gen_range(2..=8),
            m: rng.gen_range(2..=8),
            p: rng.gen_range(0..=4),
            nbin: rng.gen_range(1..=n1),
            density: 0.5,
            range: 5,
            q: if k % 2 == 0 { 2 } else { 0 },
            objective: mode,
        };
        let inst = generate_random(&params, 300 + k).unwrap();
        let opts = SolveOptions::default();
        let seq = solve(&inst, Method::SequenceIndependent, &opts).unwrap();
        let ded = solve(&inst, Method::Dedicated, &opts).unwrap();
        let (ok, d) = agree(&seq, &ded, 1e-6);
        worst = worst.max(d);
        if !ok {
            bad.push(format!("#{k} objective"));
        }
        // Order freedom: the leader-side LP is a function of x̂ alone, and
        // solving the follower side first gives the same two outcomes.
        let mc = mccormick(&inst);
        let m = mibpsd::benders::SequenceMode::detect(&inst).unwrap();
        for rec in &seq.log.records {
            let (sep, solves) = separate_sequence_independent_traced(&inst, &mc, &rec.x_hat, m).unwrap();
            separations += 1;
            let prebuilt = s2_problem_with(&inst, &rec.x_hat, None, &inst.d);
            let s1_first = solve_s1(&inst, &mc, &rec.x_hat).unwrap();
            let s2_after = lp::solve_checked(&prebuilt, &ToleranceSet::default()).unwrap();
            let s2_same = match (&solves.s2, &s2_after) {
                (S2Outcome::Finite { value, .. }, LpOutcome::Finite { objective, .. }) => rel(*value, *objective) <= 1e-9,
                (S2Outcome::Unbounded { .. }, LpOutcome::Unbounded { .. }) => true,
                _ => false,
            };
            let s1_same = match (&solves.s1, &s1_first) {
                (S1Outcome::Finite { value: a, .. }, S1Outcome::Finite { value: b, .. }) => rel(*a, *b) <= 1e-9,
                (S1Outcome::Unbounded { .. }, S1Outcome::Unbounded { .. }) => true,
                _ => false,
            };
            if solves.s2_problem != prebuilt || !s2_same || !s1_same || sep.cuts.is_empty() {
                bad.push(format!("#{k} iteration {}", rec.iter));
            }
        }
    }
    (
        bad.is_empty(),
        format!("20 d = c_y + 20 c_y = 0 instances, worst rel diff {worst:.1e}, {separations} order-free separations checked{}", if bad.is_empty() { String::new() } else { format!(", failures {bad:?}") }),
    )
}

fn criterion_8() -> Verdict {
    let start = Instant::now();
    let run = RunArgs {
        iteration_cap: 3,
        ..RunArgs::default()
    };
    let (mut ded, mut std_) = (Vec::new(), Vec::new());
    let mut last_table = String::new();
    for k in 1..=20u64 {
        let size = 10 * k as usize;
        let params = GeneratorParams {
            n1: 6,
            n2: size,
            m: size,
            p: 5,
            nbin: 4,
            density: 0.1,
            range: 5,
            q: 0,
            objective: ObjectiveMode::Independent,
        };
        let inst = generate_random(&params, 9000 + k).unwrap();
        let c = compare(&inst, &[Method::Dedicated, Method::Standard], &run).unwrap();
        if let (Some(d), Some(s)) = (c.rows[0].mean_separation_seconds, c.rows[1].mean_separation_seconds) {
            ded.push(d);
            std_.push(s);
        }
        last_table = render_table(&c);
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len().max(1) as f64;
    let (d, s) = (mean(&ded), mean(&std_));
    let ratio_line = last_table.lines().last().unwrap_or("").to_string();
    (
        ded.len() == 20 && d <= s,
        format!(
            "20 instances up to n2 = m = 200: mean separation {:.2} ms dedicated vs {:.2} ms standard (ratio {:.3}); largest instance reports \"{ratio_line}\"; {:.0} s",
            d * 1e3,
            s * 1e3,
            d / s,
            start.elapsed().as_secs_f64()
        ),
    )
}

fn criterion_9() -> Verdict {
    let tol = ToleranceSet::default();
    let mut worst = 0.0f64;
    let mut bad = 0;
    for seed in 0..200 {
        let p: LpProblem = common::random_bounded_lp(seed);
        let out = lp::solve(&p, &tol).unwrap();
        let certified = check_certificate(&p, &out, &tol);
        let reference = common::vertex_enumeration(&p);
        match (&out, reference) {
            (LpOutcome::Finite { objective, .. }, Some(r)) if certified => {
                let d = (objective - r).abs() / (1.0 + r.abs());
                worst = worst.max(d);
                if d > 1e-7 {
                    bad += 1;
                }
            }
            _ => bad += 1,
        }
    }
    (bad == 0, format!("200 LPs, worst rel diff {worst:.1e}, {bad} failures"))
}

fn main() {
    let suite = suite();
    let criteria: Vec<(&str, Box<dyn Fn() -> Verdict + '_>)> = vec![
        ("oracle equivalence", Box::new(|| criterion_1(&suite))),
        ("split vs monolithic subproblem", Box::new(|| criterion_2(&suite))),
        ("T1 walkthrough", Box::new(criterion_3)),
        ("McCormick exactness", Box::new(|| criterion_4(&suite))),
        ("ray normalization", Box::new(|| criterion_5(&suite))),
        ("acceleration invariance", Box::new(|| criterion_6(&suite))),
        ("order-free separation", Box::new(criterion_7)),
        ("separation cost ordering", Box::new(criterion_8)),
        ("LP oracle", Box::new(criterion_9)),
    ];
    let filter = std::env::args().nth(1).filter(|a| !a.starts_with('-'));
    let mut failed = 0;
    for (k, (name, check)) in criteria.iter().enumerate() {
        let id = (k + 1).to_string();
        if filter.as_ref().is_some_and(|f| *f != id) {
            continue;
        }
        let (ok, detail) = check();
        println!("criterion {id} {name}: {} ({detail})", if ok { "PASS" } else { "FAIL" });
        failed += usize::from(!ok);
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
