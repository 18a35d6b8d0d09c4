mod common;

use common::{random_bounded_lp, vertex_enumeration};
use mibpsd::linalg::Matrix;
use mibpsd::lp::{check_certificate, solve, LpOutcome, LpProblem, Sense, ToleranceSet};
use proptest::prelude::*;

#[test]
fn random_lps_match_vertex_enumeration() {
    let tol = ToleranceSet::default();
    for seed in 0..200 {
        let p = random_bounded_lp(seed);
        let out = solve(&p, &tol).unwrap();
        assert!(check_certificate(&p, &out, &tol), "seed {seed}: certificate");
        let LpOutcome::Finite { objective, .. } = out else {
            panic!("seed {seed}: expected a finite optimum, got {out:?}");
        };
        let reference = vertex_enumeration(&p).expect("planted point is feasible");
        assert!(
            (objective - reference).abs() <= 1e-7 * (1.0 + reference.abs()),
            "seed {seed}: simplex {objective} vs enumeration {reference}"
        );
    }
}

#[test]
fn solve_is_deterministic() {
    let tol = ToleranceSet::default();
    for seed in 0..20 {
        let p = random_bounded_lp(seed);
        assert_eq!(solve(&p, &tol).unwrap(), solve(&p, &tol).unwrap());
    }
}

fn small_matrix() -> impl Strategy<Value = (usize, Vec<Vec<f64>>, Vec<f64>, Vec<f64>)> {
    (1usize..5, 1usize..5).prop_flat_map(|(n, m)| {
        (
            Just(n),
            prop::collection::vec(prop::collection::vec(-4i32..=4, n), m),
            prop::collection::vec(-4i32..=4, m),
            prop::collection::vec(-4i32..=4, n),
        )
            .prop_map(|(n, g, h, c)| {
                (
                    n,
                    g.into_iter()
                        .map(|r| r.into_iter().map(f64::from).collect())
                        .collect(),
                    h.into_iter().map(f64::from).collect(),
                    c.into_iter().map(f64::from).collect(),
                )
            })
    })
}

proptest! {
    #![proptest_config(ProptestConfig { failure_persistence: None, ..ProptestConfig::default() })]

    // Any LP, feasible or not, comes back with a certificate that verifies.
    #[test]
    fn every_outcome_is_certified((n, g, h, c) in small_matrix(), max in any::<bool>()) {
        let sense = if max { Sense::Max } else { Sense::Min };
        let p = LpProblem::new(sense, c, Matrix::from_rows(n, &g).unwrap(), h).unwrap();
        let tol = ToleranceSet::default();
        let out = solve(&p, &tol).unwrap();
        prop_assert!(check_certificate(&p, &out, &tol), "{:?} for {:?}", out, p);
    }
}
