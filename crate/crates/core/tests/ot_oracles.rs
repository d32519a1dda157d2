//! Cross-checks of the OT solvers against enumeration, feasibility bounds,
//! and a second independent Sinkhorn implementation.

use flowmatch::batch::sq_dist;
use flowmatch::coupling::{exact_ot_plan, sinkhorn_plan};
use flowmatch::rng::seed_rng;
use ndarray::{array, Array2};
use rand::Rng as _;

fn randn(n: usize, d: usize, rng: &mut flowmatch::rng::Rng) -> Array2<f64> {
    use rand_distr::{Distribution, StandardNormal};
    Array2::from_shape_fn((n, d), |_| StandardNormal.sample(rng))
}

fn for_each_permutation(n: usize, f: &mut impl FnMut(&[usize])) {
    fn rec(p: &mut Vec<usize>, k: usize, f: &mut impl FnMut(&[usize])) {
        if k == p.len() {
            f(p);
            return;
        }
        for i in k..p.len() {
            p.swap(k, i);
            rec(p, k + 1, f);
            p.swap(k, i);
        }
    }
    rec(&mut (0..n).collect(), 0, f);
}

#[test]
fn exact_ot_matches_brute_force_on_200_random_instances() {
    let mut rng = seed_rng(71);
    for case in 0..200 {
        let n = 2 + case % 6; // 2..=7
        let d = 1 + case % 3;
        let x0 = randn(n, d, &mut rng);
        let x1 = randn(n, d, &mut rng);
        let plan = exact_ot_plan(x0.clone(), x1.clone(), None, None).unwrap();
        let mut best = f64::INFINITY;
        for_each_permutation(n, &mut |p| {
            let c: f64 = (0..n)
                .map(|i| sq_dist(x0.row(i).as_slice().unwrap(), x1.row(p[i]).as_slice().unwrap()))
                .sum::<f64>()
                / n as f64;
            best = best.min(c);
        });
        assert!(
            (plan.cost - best).abs() <= 1e-10,
            "case {case}: solver {} vs brute force {best}",
            plan.cost
        );
    }
}

#[test]
fn sinkhorn_marginals_hold_across_instances() {
    let mut rng = seed_rng(72);
    for case in 0..12 {
        let n = 5 + case * 3;
        let m = 4 + case * 2;
        let x0 = randn(n, 2, &mut rng);
        let x1 = randn(m, 2, &mut rng);
        let (a, b) = if case % 2 == 0 {
            (None, None)
        } else {
            let mut a: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() + 0.1).collect();
            let mut b: Vec<f64> = (0..m).map(|_| rng.gen::<f64>() + 0.1).collect();
            let sa: f64 = a.iter().sum();
            let sb: f64 = b.iter().sum();
            a.iter_mut().for_each(|v| *v /= sa);
            b.iter_mut().for_each(|v| *v /= sb);
            (Some(a), Some(b))
        };
        for eps in [0.1, 1.0, 10.0] {
            let plan = sinkhorn_plan(
                x0.clone(),
                x1.clone(),
                a.as_deref(),
                b.as_deref(),
                eps,
                1e-10,
                50_000,
            )
            .unwrap();
            let viol = plan.marginal_violation();
            assert!(viol <= 1e-8, "case {case} eps {eps}: violation {viol}");
        }
    }
}

#[test]
fn sinkhorn_huge_epsilon_is_outer_product() {
    let mut rng = seed_rng(73);
    let x0 = randn(5, 2, &mut rng);
    let x1 = randn(4, 2, &mut rng);
    let b = vec![0.4, 0.3, 0.2, 0.1];
    let plan = sinkhorn_plan(x0, x1, None, Some(&b), 1e6, 1e-12, 10_000).unwrap();
    for i in 0..5 {
        for j in 0..4 {
            let expect = plan.a[i] * plan.b[j];
            assert!(
                (plan.joint(i, j) - expect).abs() <= 1e-6,
                "entry ({i},{j})"
            );
        }
    }
}

/// Project a random positive matrix onto the transport polytope by
/// alternating row/column scaling, giving feasible competitors for the LP.
fn random_feasible_plan(
    a: &[f64],
    b: &[f64],
    rng: &mut flowmatch::rng::Rng,
) -> Array2<f64> {
    let (n, m) = (a.len(), b.len());
    let mut p = Array2::from_shape_fn((n, m), |_| rng.gen::<f64>() + 0.1);
    for _ in 0..500 {
        for i in 0..n {
            let s: f64 = p.row(i).sum();
            p.row_mut(i).mapv_inplace(|v| v * a[i] / s);
        }
        for j in 0..m {
            let s: f64 = p.column(j).sum();
            p.column_mut(j).mapv_inplace(|v| v * b[j] / s);
        }
    }
    p
}

#[test]
fn exact_cost_is_below_all_feasible_plans() {
    let mut rng = seed_rng(74);
    for &(n, m) in &[(5usize, 5usize), (6, 4)] {
        let x0 = randn(n, 2, &mut rng);
        let x1 = randn(m, 2, &mut rng);
        let (a, b) = if n == m {
            (vec![1.0 / n as f64; n], vec![1.0 / m as f64; m])
        } else {
            let mut a: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() + 0.2).collect();
            let mut bb: Vec<f64> = (0..m).map(|_| rng.gen::<f64>() + 0.2).collect();
            let sa: f64 = a.iter().sum();
            let sb: f64 = bb.iter().sum();
            a.iter_mut().for_each(|v| *v /= sa);
            bb.iter_mut().for_each(|v| *v /= sb);
            (a, bb)
        };
        let plan = exact_ot_plan(x0.clone(), x1.clone(), Some(&a), Some(&b)).unwrap();
        let cost = |p: &Array2<f64>| -> f64 {
            let mut c = 0.0;
            for i in 0..n {
                for j in 0..m {
                    c += p[[i, j]]
                        * sq_dist(x0.row(i).as_slice().unwrap(), x1.row(j).as_slice().unwrap());
                }
            }
            c
        };
        for k in 0..100 {
            let p = random_feasible_plan(&a, &b, &mut rng);
            assert!(
                plan.cost <= cost(&p) + 1e-9,
                "({n},{m}) competitor {k}: {} vs {}",
                plan.cost,
                cost(&p)
            );
        }
    }
}

#[test]
fn sinkhorn_agrees_with_independent_fixed_point() {
    // plain-domain kernel-scaling Sinkhorn written from the definition;
    // fixture cost frozen from an offline high-precision run
    let x0 = array![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
    let x1 = array![[1.0, 1.0], [-1.0, 0.0], [0.5, -0.5]];
    let eps = 0.5;

    let c = Array2::from_shape_fn((3, 3), |(i, j)| {
        sq_dist(x0.row(i).as_slice().unwrap(), x1.row(j).as_slice().unwrap())
    });
    let k = c.mapv(|v| (-v / eps).exp());
    let mut u = [1.0f64; 3];
    let mut v = [1.0f64; 3];
    for _ in 0..100_000 {
        for i in 0..3 {
            let s: f64 = (0..3).map(|j| k[[i, j]] * v[j]).sum();
            u[i] = (1.0 / 3.0) / s;
        }
        for j in 0..3 {
            let s: f64 = (0..3).map(|i| k[[i, j]] * u[i]).sum();
            v[j] = (1.0 / 3.0) / s;
        }
    }
    let reference = Array2::from_shape_fn((3, 3), |(i, j)| u[i] * k[[i, j]] * v[j]);
    let ref_cost = (&reference * &c).sum();

    let plan = sinkhorn_plan(x0, x1, None, None, eps, 1e-14, 200_000).unwrap();
    for i in 0..3 {
        for j in 0..3 {
            assert!(
                (plan.joint(i, j) - reference[[i, j]]).abs() <= 1e-9,
                "entry ({i},{j}): {} vs {}",
                plan.joint(i, j),
                reference[[i, j]]
            );
        }
    }
    assert!((plan.cost - ref_cost).abs() <= 1e-9);
    assert!(
        (plan.cost - 0.97259028637330103).abs() <= 1e-9,
        "cost {} drifted from the frozen fixture",
        plan.cost
    );
}

#[test]
fn entropic_pair_samples_pass_chi_square() {
    // epsilon far above the cost scale: the plan is the product coupling and
    // sampled pair frequencies must match it (chi-square, 5 dof)
    let x0 = array![[0.0], [1.0]];
    let x1 = array![[10.0], [20.0], [30.0]];
    let plan = sinkhorn_plan(x0, x1, None, None, 1e6, 1e-12, 10_000).unwrap();
    let n_draws = 100_000usize;
    let mut rng = seed_rng(75);
    let (p0, p1) = plan.sample_pairs(n_draws, &mut rng);
    let mut counts = [[0usize; 3]; 2];
    for r in 0..n_draws {
        let i = if p0[[r, 0]] < 0.5 { 0 } else { 1 };
        let j = ((p1[[r, 0]] / 10.0).round() as usize) - 1;
        counts[i][j] += 1;
    }
    let mut chi2 = 0.0;
    for i in 0..2 {
        for j in 0..3 {
            let expect = plan.joint(i, j) * n_draws as f64;
            let diff = counts[i][j] as f64 - expect;
            chi2 += diff * diff / expect;
        }
    }
    assert!(chi2 < 25.0, "chi-square {chi2}");
}
