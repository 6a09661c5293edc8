//! Worked examples checked against oracles computed independently of the
//! library: Monte-Carlo counts, brute-force geometry, closed forms.

use eqodds::attain::{corollary_ratio, gaussian_q_gap};
use eqodds::postprocess::{
    feasible_area_in, feasible_area_in_pseudo, fit_postprocess, postprocess_rates, pseudo_betas, Costs, OutcomeTable,
    PostParams,
};
use eqodds::probcore::{
    empirical_rates, eo_violation, positive_rates, DeterministicClassifier, DiscreteJoint, RocPoint,
    StochasticClassifier,
};
use eqodds::rocgeom::{feasible_area_post, group_hull, nontriviality_margin, region_hausdorff, ConvexRegion};
use eqodds::sample::Sample;
use eqodds::simulate::{
    gen_discrete, gen_linear_scm, random_joint, AttributeLaw, BuiltinJoint, LinearScm, NoiseLaw, ScmOptions,
};
use eqodds::statmod::{ci_test, kmcd, kmcd_value_and_grad, KernelConfig};
use eqodds::trainer::{grad_check, train, FittedModel, MlpSpec, Task, TrainConfig};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

fn rng(seed: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(seed)
}

fn random_table(seed: u64) -> StochasticClassifier {
    let mut r = rng(seed);
    StochasticClassifier::new(2, 2, (0..4).map(|_| r.random::<f64>()).collect()).unwrap()
}

/// Draws `n` rows `(a, x, y, ŷ)` by inverse-cdf sampling of the joint,
/// with `ŷ ~ Bernoulli(p1(a, x))`.
fn monte_carlo(joint: &DiscreteJoint, clf: &StochasticClassifier, n: usize, seed: u64) -> Vec<[usize; 4]> {
    let mut r = rng(seed);
    let cells: Vec<(usize, usize, usize, f64)> = (0..2)
        .flat_map(|a| (0..2).flat_map(move |x| (0..2).map(move |y| (a, x, y))))
        .map(|(a, x, y)| (a, x, y, joint.p(a, x, y)))
        .collect();
    (0..n)
        .map(|_| {
            let u: f64 = r.random();
            let mut acc = 0.0;
            let mut pick = cells[cells.len() - 1];
            for c in &cells {
                acc += c.3;
                if u < acc {
                    pick = *c;
                    break;
                }
            }
            let yhat = usize::from(r.random::<f64>() < clf.p1(pick.0, pick.1));
            [pick.0, pick.1, pick.2, yhat]
        })
        .collect()
}

fn within_3se(est: f64, truth: f64, count: usize) -> bool {
    let se = (truth * (1.0 - truth) / count as f64).sqrt().max(1e-12);
    (est - truth).abs() <= 3.0 * se
}

#[test]
fn positive_rates_match_monte_carlo() {
    let joint = random_joint(2, 2, &mut rng(11)).unwrap();
    let clf = random_table(12);
    let rates = positive_rates(&joint, &clf).unwrap();
    let rows = monte_carlo(&joint, &clf, 1_000_000, 13);
    for (a, rate) in rates.iter().enumerate() {
        for y in 0..2 {
            let cell: Vec<_> = rows.iter().filter(|r| r[0] == a && r[2] == y).collect();
            let est = cell.iter().filter(|r| r[3] == 1).count() as f64 / cell.len() as f64;
            let truth = if y == 0 { rate.fpr } else { rate.tpr };
            assert!(within_3se(est, truth, cell.len()), "a={a} y={y}: {est} vs {truth}");
        }
    }
}

#[test]
fn empirical_rates_match_exact_rates() {
    let joint = random_joint(2, 2, &mut rng(21)).unwrap();
    let clf = random_table(22);
    let rates = positive_rates(&joint, &clf).unwrap();
    let rows = monte_carlo(&joint, &clf, 1_000_000, 23);
    let mut s = Sample::from_columns(
        rows.iter().map(|r| r[0] as f64).collect(),
        rows.iter().map(|r| vec![r[1] as f64]).collect(),
        rows.iter().map(|r| r[2] as f64).collect(),
    );
    s.yhat = Some(rows.iter().map(|r| r[3] as f64).collect());
    let emp = empirical_rates(&s).unwrap();
    for a in 0..2 {
        let count = |y: usize| rows.iter().filter(|r| r[0] == a && r[2] == y).count();
        assert!(within_3se(emp[&(a as i64)].fpr, rates[a].fpr, count(0)));
        assert!(within_3se(emp[&(a as i64)].tpr, rates[a].tpr, count(1)));
    }
}

#[test]
fn violation_of_stated_rates_is_direct_arithmetic() {
    let v = eo_violation(&[RocPoint::new(0.3, 0.8), RocPoint::new(0.7, 0.2)]).unwrap();
    assert!((v - f64::max((0.3f64 - 0.7).abs(), (0.8f64 - 0.2).abs())).abs() < 1e-12);
}

#[test]
fn expr_x_classifier_violation_from_conditionals() {
    // P(X=1|a,y) of the expR joint.
    let x1: [[f64; 2]; 2] = [[0.4, 0.6], [0.7, 0.2]];
    let expected = f64::max((x1[0][0] - x1[1][0]).abs(), (x1[0][1] - x1[1][1]).abs());
    let f = DeterministicClassifier::from_fn(2, 2, |_, x| x as u8).unwrap();
    let joint = BuiltinJoint::ExpR.joint();
    let v = eo_violation(&positive_rates(&joint, &f).unwrap()).unwrap();
    assert!((v - expected).abs() < 1e-12);
    let margin = nontriviality_margin(&positive_rates(&joint, &f).unwrap());
    let expected_margin = f64::min((x1[0][1] - x1[0][0]).abs(), (x1[1][1] - x1[1][0]).abs());
    assert!((margin - expected_margin).abs() < 1e-12);
}

/// Gift-wrapping hull, independent of the library's monotone chain.
fn brute_hull(points: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let mut pts: Vec<(f64, f64)> = Vec::new();
    for p in points {
        if !pts.iter().any(|q| (q.0 - p.0).abs() < 1e-9 && (q.1 - p.1).abs() < 1e-9) {
            pts.push(*p);
        }
    }
    let start = *pts.iter().min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1))).unwrap();
    let mut hull = vec![start];
    let mut cur = start;
    loop {
        let mut next = pts[0];
        for &p in &pts {
            if (next.0 - cur.0).abs() < 1e-12 && (next.1 - cur.1).abs() < 1e-12 {
                next = p;
                continue;
            }
            let cross = (next.0 - cur.0) * (p.1 - cur.1) - (next.1 - cur.1) * (p.0 - cur.0);
            let d = |q: (f64, f64)| (q.0 - cur.0).powi(2) + (q.1 - cur.1).powi(2);
            if cross < -1e-12 || (cross.abs() <= 1e-12 && d(p) > d(next)) {
                next = p;
            }
        }
        if (next.0 - start.0).abs() < 1e-12 && (next.1 - start.1).abs() < 1e-12 {
            break;
        }
        hull.push(next);
        cur = next;
        if hull.len() > pts.len() {
            break;
        }
    }
    hull
}

fn same_vertex_set(region: &ConvexRegion, oracle: &[(f64, f64)], tol: f64) -> bool {
    region.vertices().len() == oracle.len()
        && oracle
            .iter()
            .all(|o| region.vertices().iter().any(|v| (v.fpr - o.0).abs() <= tol && (v.tpr - o.1).abs() <= tol))
}

#[test]
fn group_hull_matches_brute_force_hull() {
    let g = RocPoint::new(0.2, 0.8);
    let oracle = brute_hull(&[(0.0, 0.0), (0.2, 0.8), (0.8, 0.2), (1.0, 1.0)]);
    assert_eq!(oracle.len(), 4);
    assert!(same_vertex_set(&group_hull(g), &oracle, 1e-12));
}

/// Whether `pt` lies in the convex polygon, for either vertex orientation.
fn inside(poly: &[(f64, f64)], pt: (f64, f64)) -> bool {
    let n = poly.len();
    let signs: Vec<f64> = (0..n)
        .map(|i| {
            let (a, b) = (poly[i], poly[(i + 1) % n]);
            (b.0 - a.0) * (pt.1 - a.1) - (b.1 - a.1) * (pt.0 - a.0)
        })
        .collect();
    signs.iter().all(|&s| s >= -1e-12) || signs.iter().all(|&s| s <= 1e-12)
}

/// Intersection of convex polygons by brute force: every vertex of one
/// inside the other, plus every pairwise edge crossing, then their hull.
fn brute_intersection(p: &[(f64, f64)], q: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let mut pts: Vec<(f64, f64)> = p.iter().copied().filter(|&v| inside(q, v)).collect();
    pts.extend(q.iter().copied().filter(|&v| inside(p, v)));
    for i in 0..p.len() {
        for j in 0..q.len() {
            let (a, b) = (p[i], p[(i + 1) % p.len()]);
            let (c, d) = (q[j], q[(j + 1) % q.len()]);
            let den = (b.0 - a.0) * (d.1 - c.1) - (b.1 - a.1) * (d.0 - c.0);
            if den.abs() < 1e-15 {
                continue;
            }
            let t = ((c.0 - a.0) * (d.1 - c.1) - (c.1 - a.1) * (d.0 - c.0)) / den;
            let u = ((c.0 - a.0) * (b.1 - a.1) - (c.1 - a.1) * (b.0 - a.0)) / den;
            if (-1e-12..=1.0 + 1e-12).contains(&t) && (-1e-12..=1.0 + 1e-12).contains(&u) {
                pts.push((a.0 + t * (b.0 - a.0), a.1 + t * (b.1 - a.1)));
            }
        }
    }
    brute_hull(&pts)
}

fn quad(g: (f64, f64)) -> Vec<(f64, f64)> {
    brute_hull(&[(0.0, 0.0), g, (1.0 - g.0, 1.0 - g.1), (1.0, 1.0)])
}

#[test]
fn feasible_area_post_matches_brute_intersection() {
    let (g0, g1) = ((0.1, 0.7), (0.3, 0.9));
    let oracle = brute_intersection(&quad(g0), &quad(g1));
    let region = feasible_area_post(&[RocPoint::new(g0.0, g0.1), RocPoint::new(g1.0, g1.1)]).unwrap();
    assert!(same_vertex_set(&region, &oracle, 1e-9), "{:?} vs {oracle:?}", region.vertices());
}

#[test]
fn margin_by_direct_arithmetic() {
    let m = nontriviality_margin(&[RocPoint::new(0.3, 0.8), RocPoint::new(0.6, 0.7)]);
    assert!((m - f64::min(0.8 - 0.3, 0.7 - 0.6)).abs() < 1e-12);
}

#[test]
fn hausdorff_of_offset_squares() {
    let a = ConvexRegion::from_points(&[
        RocPoint::new(0.0, 0.0),
        RocPoint::new(0.5, 0.0),
        RocPoint::new(0.5, 0.5),
        RocPoint::new(0.0, 0.5),
    ]);
    let b = ConvexRegion::from_points(&[
        RocPoint::new(0.1, 0.0),
        RocPoint::new(0.6, 0.0),
        RocPoint::new(0.6, 0.5),
        RocPoint::new(0.1, 0.5),
    ]);
    assert!((region_hausdorff(&a, &b) - 0.1).abs() < 1e-9);
}

#[test]
fn postprocessed_point_lies_in_hull() {
    let g = RocPoint::new(0.2, 0.8);
    let p = postprocess_rates(&[g], &PostParams::new(vec![0.5], vec![0.75]).unwrap()).unwrap()[0];
    let oracle = quad((0.2, 0.8));
    assert!(inside(&oracle, (p.fpr, p.tpr)), "{p:?} outside {oracle:?}");
}

fn outcome_from_rates(p_ay: [[f64; 2]; 2], rates: [(f64, f64); 2]) -> OutcomeTable {
    let cells = (0..2)
        .map(|a| {
            let r = [rates[a].0, rates[a].1];
            [[p_ay[a][0] * (1.0 - r[0]), p_ay[a][0] * r[0]], [p_ay[a][1] * (1.0 - r[1]), p_ay[a][1] * r[1]]]
        })
        .collect();
    OutcomeTable::new(cells).unwrap()
}

#[test]
fn fitted_postprocessor_equals_best_polygon_vertex() {
    let rates = [(0.1, 0.9), (0.3, 0.7)];
    let p_ay = [[0.25, 0.25], [0.25, 0.25]];
    let table = outcome_from_rates(p_ay, rates);
    let fit = fit_postprocess(&table, Costs::default()).unwrap();
    let poly = brute_intersection(&quad(rates[0]), &quad(rates[1]));
    let loss_at = |p: (f64, f64)| (0..2).map(|a| p_ay[a][0] * p.0 + p_ay[a][1] * (1.0 - p.1)).sum::<f64>();
    let best = poly.iter().map(|&v| loss_at(v)).fold(f64::INFINITY, f64::min);
    assert!((fit.loss - best).abs() < 1e-9, "{} vs {best}", fit.loss);
}

#[test]
fn expr_postprocessing_removes_violation() {
    let joint = BuiltinJoint::ExpR.joint();
    let f = DeterministicClassifier::from_fn(2, 2, |_, x| x as u8).unwrap();
    let table = OutcomeTable::from_joint(&joint, &f).unwrap();
    let base = eo_violation(&table.rates().unwrap()).unwrap();
    assert!((base - 0.4).abs() < 1e-12);
    let fit = fit_postprocess(&table, Costs::default()).unwrap();
    assert!(eo_violation(&fit.rates).unwrap() <= 1e-9);
}

#[test]
fn pseudo_betas_match_monte_carlo() {
    let joint = random_joint(2, 2, &mut rng(31)).unwrap();
    let in_clf = random_table(32);
    let opt_clf = random_table(33);
    let beta = pseudo_betas(&joint, &in_clf, &opt_clf).unwrap();
    let mut r = rng(34);
    let rows = monte_carlo(&joint, &opt_clf, 1_000_000, 35);
    let mut counts = [[[(0usize, 0usize); 2]; 2]; 2];
    for row in &rows {
        let yin = usize::from(r.random::<f64>() < in_clf.p1(row[0], row[1]));
        let c = &mut counts[row[3]][row[0]][row[2]];
        c.0 += yin;
        c.1 += 1;
    }
    for yhat in 0..2 {
        for a in 0..2 {
            for y in 0..2 {
                let (hits, n) = counts[yhat][a][y];
                assert!(within_3se(hits as f64 / n as f64, beta[yhat][a][y], n), "cell {yhat}{a}{y}");
            }
        }
    }
}

#[test]
fn post_region_within_in_region_on_random_joints() {
    for seed in 0..10 {
        let joint = random_joint(2, 2, &mut rng(seed)).unwrap();
        let opt = joint.bayes_classifier().unwrap();
        let post = feasible_area_post(&positive_rates(&joint, &opt).unwrap()).unwrap();
        let inn = feasible_area_in(&joint, 41).unwrap();
        assert!(post.vertices().iter().all(|v| inn.region.contains(*v, 1e-6)), "seed {seed}");
        let pseudo = feasible_area_in_pseudo(&joint, &opt, 41).unwrap();
        assert!(region_hausdorff(&pseudo.region, &post) <= 2.0 / 40.0, "seed {seed}");
    }
}

#[test]
fn q_gap_grows_when_ratio_is_perturbed() {
    let scm = LinearScm::gaussian_setting();
    let r = corollary_ratio(&scm).unwrap();
    assert!(r.is_finite());
    let grid: Vec<f64> = (0..5).map(|k| -1.0 + 0.5 * k as f64).collect();
    let a = [0.0, 0.25, 0.5, 0.75, 1.0];
    assert!(gaussian_q_gap(&scm, r, 1.0, &a, &grid, &grid).unwrap() <= 1e-12);
    assert!(gaussian_q_gap(&scm, r + 0.1, 1.0, &a, &grid, &grid).unwrap() > 0.0);
}

#[test]
fn ratio_tends_to_bd_over_c() {
    let tiny = NoiseLaw::gaussian((0.5e-8f64).sqrt()).unwrap();
    let mut scm = LinearScm::gaussian_setting();
    scm.e_h = tiny;
    scm.e_y = tiny;
    let r = corollary_ratio(&scm).unwrap();
    assert!((r - scm.b * scm.d / scm.c).abs() < 1e-6, "{r}");
}

/// Permutation null of the raw statistic, permuting `ỹ` globally.
fn null_quantile(yt: &[f64], a: &[f64], y: &[f64], cfg: &KernelConfig, perms: usize, q: f64, seed: u64) -> f64 {
    let mut r = rng(seed);
    let mut v = yt.to_vec();
    let mut stats: Vec<f64> = (0..perms)
        .map(|_| {
            v.shuffle(&mut r);
            kmcd(&v, a, y, cfg).unwrap()
        })
        .collect();
    stats.sort_by(f64::total_cmp);
    stats[((perms as f64 * q) as usize).min(perms - 1)]
}

fn normals(n: usize, r: &mut ChaCha20Rng) -> Vec<f64> {
    (0..n).map(|_| r.sample::<f64, _>(StandardNormal)).collect()
}

#[test]
fn kmcd_of_pure_noise_sits_inside_its_null() {
    let cfg = KernelConfig::test_default();
    let mut inside = 0;
    for seed in 0..20 {
        let mut r = rng(100 + seed);
        let (yt, a, y) = (normals(500, &mut r), normals(500, &mut r), normals(500, &mut r));
        let stat = kmcd(&yt, &a, &y, &cfg).unwrap();
        if stat < null_quantile(&yt, &a, &y, &cfg, 19, 0.95, seed) {
            inside += 1;
        }
    }
    assert!(inside >= 18, "{inside}/20");
}

#[test]
fn kmcd_of_copied_attribute_exceeds_its_null() {
    let cfg = KernelConfig::test_default();
    let mut r = rng(7);
    let (a, y) = (normals(300, &mut r), normals(300, &mut r));
    let stat = kmcd(&a, &a, &y, &cfg).unwrap();
    assert!(stat > null_quantile(&a, &a, &y, &cfg, 199, 0.99, 8));
}

#[test]
fn ci_test_level_and_power() {
    let mut rejected_null = 0;
    let mut rejected_alt = 0;
    let seeds = 60;
    for seed in 0..seeds {
        let mut r = rng(500 + seed);
        let cfg = KernelConfig { seed, permutations: 99, ..KernelConfig::test_default() };
        let (yt, a, y) = (normals(200, &mut r), normals(200, &mut r), normals(200, &mut r));
        rejected_null += usize::from(ci_test(&yt, &a, &y, &cfg).unwrap().p_value <= 0.05);
        let (a, y) = (normals(500, &mut r), normals(500, &mut r));
        let yt: Vec<f64> = a.iter().map(|v| v + 0.5 * r.sample::<f64, _>(StandardNormal)).collect();
        rejected_alt += usize::from(ci_test(&yt, &a, &y, &cfg).unwrap().p_value <= 0.05);
    }
    assert!(rejected_null as f64 / seeds as f64 <= 0.08, "{rejected_null}/{seeds}");
    assert!(rejected_alt as f64 / seeds as f64 >= 0.9, "{rejected_alt}/{seeds}");
}

#[test]
fn kmcd_gradient_matches_finite_differences() {
    let mut r = rng(3);
    let (yt, a, y) = (normals(50, &mut r), normals(50, &mut r), normals(50, &mut r));
    for cfg in [KernelConfig::default(), KernelConfig::test_default()] {
        let (_, g) = kmcd_value_and_grad(&yt, &a, &y, &cfg).unwrap();
        let h = 1e-6;
        for i in 0..yt.len() {
            let mut up = yt.clone();
            up[i] += h;
            let mut down = yt.clone();
            down[i] -= h;
            let fd = (kmcd(&up, &a, &y, &cfg).unwrap() - kmcd(&down, &a, &y, &cfg).unwrap()) / (2.0 * h);
            let rel = (g[i] - fd).abs() / g[i].abs().max(fd.abs()).max(1e-6);
            assert!(rel <= 1e-4, "coordinate {i}: {} vs {fd}", g[i]);
        }
    }
}

fn linear_data(n: usize, seed: u64) -> Sample {
    let mut r = rng(seed);
    let rows: Vec<(f64, f64, f64)> = (0..n)
        .map(|_| {
            let a: f64 = r.random();
            let x: f64 = r.sample(StandardNormal);
            let e: f64 = r.sample(StandardNormal);
            (a, x, 0.5 + 1.5 * a - 0.8 * x + 0.3 * e)
        })
        .collect();
    Sample::from_columns(
        rows.iter().map(|r| r.0).collect(),
        rows.iter().map(|r| vec![r.1]).collect(),
        rows.iter().map(|r| r.2).collect(),
    )
}

/// Least squares on `[1, a, x]` by the normal equations and Cramer's rule.
fn ols_mse(train_s: &Sample, test_s: &Sample) -> f64 {
    let mut m = [[0.0; 3]; 3];
    let mut v = [0.0; 3];
    for i in 0..train_s.n() {
        let z = [1.0, train_s.a[i], train_s.x[i]];
        for j in 0..3 {
            v[j] += z[j] * train_s.y[i];
            for k in 0..3 {
                m[j][k] += z[j] * z[k];
            }
        }
    }
    let det = |m: &[[f64; 3]; 3]| {
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    };
    let d = det(&m);
    let coef: Vec<f64> = (0..3)
        .map(|c| {
            let mut mc = m;
            for (r, row) in mc.iter_mut().enumerate() {
                row[c] = v[r];
            }
            det(&mc) / d
        })
        .collect();
    (0..test_s.n())
        .map(|i| (coef[0] + coef[1] * test_s.a[i] + coef[2] * test_s.x[i] - test_s.y[i]).powi(2))
        .sum::<f64>()
        / test_s.n() as f64
}

#[test]
fn unpenalized_network_matches_least_squares() {
    let (train_s, test_s) = (linear_data(1000, 1), linear_data(1000, 2));
    let spec = MlpSpec { hidden: vec![16], ..MlpSpec::default() };
    let model =
        train(&train_s, &spec, &TrainConfig { epochs: 200, learning_rate: 3e-3, ..TrainConfig::default() }).unwrap();
    let pred = model.predict_sample(&test_s, &mut rng(0)).unwrap();
    let mse = pred.iter().zip(&test_s.y).map(|(p, y)| (p - y).powi(2)).sum::<f64>() / test_s.n() as f64;
    let ols = ols_mse(&train_s, &test_s);
    assert!(mse <= 1.1 * ols, "network {mse} vs least squares {ols}");
}

#[test]
fn penalty_falls_at_high_lambda() {
    let opts = ScmOptions { a_law: AttributeLaw::Uniform01, ..ScmOptions::default() };
    let data = gen_linear_scm(&LinearScm::uniform_setting(), opts, 600, 4).unwrap();
    let spec = MlpSpec { hidden: vec![20, 20], ..MlpSpec::default() };
    let fit = |lambda: f64| train(&data, &spec, &TrainConfig { lambda, epochs: 60, ..TrainConfig::default() }).unwrap();
    let (low, high) = (fit(0.0), fit(1024.0));
    let last = |m: &FittedModel| {
        let tail = &m.trace[m.trace.len() - 10..];
        tail.iter().map(|r| r.penalty).sum::<f64>() / tail.len() as f64
    };
    assert!(last(&high) < last(&low), "{} vs {}", last(&high), last(&low));
}

#[test]
fn stochastic_classifier_frequency_matches_head() {
    let joint = BuiltinJoint::ExpR.joint();
    let s = gen_discrete(&joint, 400, 5).unwrap();
    let spec = MlpSpec { hidden: vec![8], noise_dim: 2, task: Task::Binary, ..MlpSpec::default() };
    let model = train(&s, &spec, &TrainConfig { epochs: 20, ..TrainConfig::default() }).unwrap();
    let draws = 10_000;
    let (a, x) = (vec![1.0; draws], vec![0.0; draws]);
    let head = model.scores(&vec![1.0; 200_000], &vec![0.0; 200_000], &mut rng(6)).unwrap();
    let p = head.iter().sum::<f64>() / head.len() as f64;
    let yhat = model.predict(&a, &x, &mut rng(7)).unwrap();
    let freq = yhat.iter().sum::<f64>() / draws as f64;
    assert!(within_3se(freq, p, draws), "{freq} vs {p}");
}

#[test]
fn grad_check_at_zero_and_unit_lambda() {
    let opts = ScmOptions { a_law: AttributeLaw::Uniform01, ..ScmOptions::default() };
    let data = gen_linear_scm(&LinearScm::laplace_setting(), opts, 64, 9).unwrap();
    for noise_dim in [0, 2] {
        let spec = MlpSpec { hidden: vec![6, 5], noise_dim, ..MlpSpec::default() };
        let model = FittedModel::init(&spec, &data).unwrap();
        for lambda in [0.0, 1.0] {
            let err = grad_check(&model, &data, lambda, 3).unwrap();
            assert!(err <= 1e-4, "noise_dim {noise_dim} lambda {lambda}: {err}");
        }
    }
}

#[test]
fn laplace_moments_match_analytic_variance() {
    let scm = LinearScm::laplace_setting();
    let s = gen_linear_scm(&scm, ScmOptions::default(), 100_000, 10).unwrap();
    // Laplace(0, b) has variance 2b²; A ~ Bernoulli(1/2) has variance 1/4.
    let (vx, vh, vy, va) = (2.0 * 0.4f64.powi(2), 2.0 * 0.4f64.powi(2), 2.0 * 0.2f64.powi(2), 0.25);
    let (q, b, c, d) = (0.7, 0.6, 0.9, 0.6);
    let analytic = c * c * (q * q * va + vx) + d * d * (b * b * va + vh) + 2.0 * c * d * q * b * va + vy;
    let mean = s.y.iter().sum::<f64>() / s.n() as f64;
    let var = s.y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (s.n() - 1) as f64;
    assert!((var - analytic).abs() / analytic <= 0.05, "{var} vs {analytic}");
}

/// Mardia's test of bivariate normality at level 0.05, split evenly
/// between skewness (χ² with 4 degrees of freedom) and kurtosis (normal).
fn mardia_rejects(pts: &[(f64, f64)]) -> bool {
    let n = pts.len() as f64;
    let (mx, my) = (pts.iter().map(|p| p.0).sum::<f64>() / n, pts.iter().map(|p| p.1).sum::<f64>() / n);
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for p in pts {
        sxx += (p.0 - mx).powi(2) / n;
        sxy += (p.0 - mx) * (p.1 - my) / n;
        syy += (p.1 - my).powi(2) / n;
    }
    let det = sxx * syy - sxy * sxy;
    let inv = [[syy / det, -sxy / det], [-sxy / det, sxx / det]];
    let centred: Vec<(f64, f64)> = pts.iter().map(|p| (p.0 - mx, p.1 - my)).collect();
    let form = |u: (f64, f64), v: (f64, f64)| {
        u.0 * (inv[0][0] * v.0 + inv[0][1] * v.1) + u.1 * (inv[1][0] * v.0 + inv[1][1] * v.1)
    };
    let mut skew = 0.0;
    let mut kurt = 0.0;
    for &u in &centred {
        kurt += form(u, u).powi(2);
        for &v in &centred {
            skew += form(u, v).powi(3);
        }
    }
    let b1 = skew / (n * n);
    let b2 = kurt / n;
    let chi = n * b1 / 6.0;
    let p_skew = (-chi / 2.0).exp() * (1.0 + chi / 2.0);
    let z = (b2 - 8.0) / (64.0 / n).sqrt();
    p_skew < 0.025 || z.abs() > 2.2414
}

#[test]
fn gaussian_model_is_jointly_gaussian_given_a() {
    let scm = LinearScm::gaussian_setting();
    let mut kept = 0;
    for seed in 0..20 {
        let s = gen_linear_scm(&scm, ScmOptions::default(), 600, seed).unwrap();
        let group: Vec<(f64, f64)> = (0..s.n()).filter(|&i| s.a[i] == 1.0).map(|i| (s.x[i], s.y[i])).collect();
        kept += usize::from(!mardia_rejects(&group));
    }
    assert!(kept >= 18, "{kept}/20");
}

#[test]
fn discrete_sampling_matches_cell_probabilities() {
    let joint = BuiltinJoint::ExpL.joint();
    let n = 1_000_000;
    let s = gen_discrete(&joint, n, 12).unwrap();
    let p_ay = [[0.2, 0.4], [0.3, 0.1]];
    let x1 = [[0.3, 0.8], [0.7, 0.2]];
    for a in 0..2 {
        for x in 0..2 {
            for y in 0..2 {
                let truth = p_ay[a][y] * if x == 1 { x1[a][y] } else { 1.0 - x1[a][y] };
                let hits = (0..n).filter(|&i| s.a[i] == a as f64 && s.x[i] == x as f64 && s.y[i] == y as f64).count();
                assert!(within_3se(hits as f64 / n as f64, truth, n), "cell {a}{x}{y}");
            }
        }
    }
}
