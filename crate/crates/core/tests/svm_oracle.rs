//! SMO against an exhaustive dual oracle, plus KKT and Gram-matrix checks.

#[path = "support/svm_oracle.rs"]
mod oracle;

use oracle::{check_case, kkt_violation, min_eigenvalue, rbf_cases, sigmoid_cases, Case};
use proptest::prelude::*;
use tagasc::svm::{gram, train_binary, KernelSpec, SmoParams};

fn check_against_oracle(cases: Vec<Case>) {
    for case in &cases {
        let gap = check_case(case, 1e-3).unwrap_or_else(|e| panic!("{:?} C={}: {e}", case.2, case.3));
        assert!(gap < 1e-3, "{:?} C={}: dual gap {gap}", case.2, case.3);
    }
}

#[test]
fn smo_matches_exhaustive_dual_oracle_rbf() {
    check_against_oracle(rbf_cases());
}

#[test]
fn smo_matches_exhaustive_dual_oracle_sigmoid() {
    check_against_oracle(sigmoid_cases());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn rbf_gram_is_psd(
        pts in prop::collection::vec(prop::collection::vec(-3.0f64..3.0, 4), 2..24),
        gamma in 0.01f64..5.0,
    ) {
        let k = gram(&pts, &KernelSpec::rbf(gamma)).unwrap();
        for i in 0..k.len() {
            prop_assert_eq!(k[i][i], 1.0);
            for j in 0..k.len() {
                prop_assert_eq!(k[i][j], k[j][i]);
                prop_assert!(k[i][j] > 0.0 && k[i][j] <= 1.0);
            }
        }
        prop_assert!(min_eigenvalue(&k) > -1e-8);
    }

    #[test]
    fn converged_runs_satisfy_kkt(
        pts in prop::collection::vec(prop::collection::vec(-2.0f64..2.0, 3), 4..30),
        gamma in 0.05f64..2.0,
        c in 0.1f64..20.0,
    ) {
        let y: Vec<f64> = (0..pts.len()).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let spec = KernelSpec::rbf(gamma);
        let params = SmoParams { c, tol: 1e-3, max_iter: 1_000_000 };
        let sol = train_binary(&pts, &y, &spec, &params).unwrap();
        prop_assert!(kkt_violation(&sol, &pts, &y, &spec, c, 1e-3).is_ok());
    }
}
