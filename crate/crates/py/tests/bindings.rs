//! The binding functions called directly from Rust.

use eqodds_py::{
    check, ci_test, experiment, gaussian_fair_ratio, postprocess, rates, search, simulate_linear, violation,
};

fn exp_l() -> Vec<Vec<Vec<f64>>> {
    // p[a][x][y] from P(A,Y) and P(X=1 | A, Y).
    let p_ay = [[0.2, 0.4], [0.3, 0.1]];
    let x1 = [[0.3, 0.8], [0.7, 0.2]];
    (0..2)
        .map(|a| {
            (0..2)
                .map(|x| (0..2).map(|y| p_ay[a][y] * if x == 1 { x1[a][y] } else { 1.0 - x1[a][y] }).collect())
                .collect()
        })
        .collect()
}

#[test]
fn rates_and_violation_of_group_matching_classifier() {
    let f = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
    let r = rates(exp_l(), f.clone()).unwrap();
    for (fpr, tpr) in r {
        assert!((fpr - 0.7).abs() < 1e-12 && (tpr - 0.2).abs() < 1e-12);
    }
    assert!(violation(exp_l(), f).unwrap() < 1e-12);
    let (holds, gap) = check(exp_l(), vec![vec![1, 0], vec![0, 1]], 1e-9).unwrap();
    assert!(holds && gap < 1e-12);
}

#[test]
fn search_and_postprocess_agree_with_the_library() {
    let found = search(exp_l(), 1e-9).unwrap();
    assert!(found.contains(&vec![vec![0, 0], vec![0, 0]]));
    assert!(found.contains(&vec![vec![1, 0], vec![0, 1]]));
    let (b0, b1, _, loss) = postprocess(exp_l(), vec![vec![0.0, 1.0], vec![0.0, 1.0]], 1.0, 1.0).unwrap();
    assert_eq!((b0.len(), b1.len()), (2, 2));
    assert!((0.0..=1.0).contains(&loss));
}

#[test]
fn malformed_inputs_are_errors() {
    assert!(rates(vec![vec![vec![0.5, 0.5]], vec![]], vec![vec![0.0]]).is_err());
    assert!(check(exp_l(), vec![vec![2, 0], vec![0, 1]], 1e-9).is_err());
    assert!(simulate_linear(10, 0, "cauchy", false).is_err());
    assert!(experiment("nope", vec![0], None).is_err());
}

#[test]
fn simulation_and_ci_test_run() {
    let (a, x, y) = simulate_linear(200, 1, "gaussian", false).unwrap();
    assert_eq!((a.len(), x.len(), y.len()), (200, 200, 200));
    let (stat, p) = ci_test(x, a, y, 19, 0).unwrap();
    assert!(stat >= 0.0 && (0.0..=1.0).contains(&p));
    assert!(gaussian_fair_ratio().unwrap().is_finite());
}
