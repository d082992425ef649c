use chanest_adapt::{cost_matrix, frobenius_norm, sinkhorn_w1, OtProblem};
use chanest_core::CMatrix;
use ndarray::Array2;
use num_complex::Complex64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Exact discrete OT with uniform marginals via successive shortest paths on
/// integer supplies scaled by `ns * nt`.
fn exact_ot(cost: &Array2<f64>) -> f64 {
    let (ns, nt) = cost.dim();
    let n = ns + nt + 2;
    let (src, sink) = (ns + nt, ns + nt + 1);
    // (to, cap, cost, rev)
    let mut adj: Vec<Vec<(usize, i64, f64, usize)>> = vec![Vec::new(); n];
    let add = |adj: &mut Vec<Vec<(usize, i64, f64, usize)>>, u: usize, v: usize, cap: i64, c: f64| {
        let (ru, rv) = (adj[v].len(), adj[u].len());
        adj[u].push((v, cap, c, ru));
        adj[v].push((u, 0, -c, rv));
    };
    for i in 0..ns {
        add(&mut adj, src, i, nt as i64, 0.0);
        for j in 0..nt {
            add(&mut adj, i, ns + j, i64::MAX / 4, cost[[i, j]]);
        }
    }
    for j in 0..nt {
        add(&mut adj, ns + j, sink, ns as i64, 0.0);
    }
    let mut remaining = (ns * nt) as i64;
    let mut total = 0.0;
    while remaining > 0 {
        let mut dist = vec![f64::INFINITY; n];
        let mut prev: Vec<Option<(usize, usize)>> = vec![None; n];
        dist[src] = 0.0;
        for _ in 0..n {
            let mut changed = false;
            for u in 0..n {
                if dist[u].is_infinite() {
                    continue;
                }
                for (k, &(v, cap, c, _)) in adj[u].iter().enumerate() {
                    if cap > 0 && dist[u] + c < dist[v] - 1e-12 {
                        dist[v] = dist[u] + c;
                        prev[v] = Some((u, k));
                        changed = true;
                    }
                }
            }
            if !changed {
                break;
            }
        }
        let mut push = remaining;
        let mut v = sink;
        while let Some((u, k)) = prev[v] {
            push = push.min(adj[u][k].1);
            v = u;
        }
        let mut v = sink;
        while let Some((u, k)) = prev[v] {
            adj[u][k].1 -= push;
            let (to, _, c, rev) = adj[u][k];
            adj[to][rev].1 += push;
            total += push as f64 * c;
            v = u;
        }
        remaining -= push;
    }
    total / (ns * nt) as f64
}

fn random_set(n: usize, shape: (usize, usize), scale: f64, rng: &mut impl Rng) -> Vec<CMatrix> {
    (0..n)
        .map(|_| {
            CMatrix::from_shape_fn(shape, |_| Complex64::new(rng.random_range(-scale..scale), rng.random_range(-scale..scale)))
        })
        .collect()
}

fn median(c: &Array2<f64>) -> f64 {
    let mut v: Vec<f64> = c.iter().copied().collect();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

#[test]
fn oracle_matches_assignment_on_permutation_instance() {
    // Identical sets: the optimum is the identity assignment with zero cost.
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let s = random_set(5, (2, 2), 1.0, &mut rng);
    assert!(exact_ot(&cost_matrix(&s, &s).unwrap()).abs() < 1e-12);
}

fn best_permutation(cost: &Array2<f64>) -> f64 {
    fn go(cost: &Array2<f64>, row: usize, used: &mut Vec<bool>, acc: f64, best: &mut f64) {
        let n = used.len();
        if row == n {
            *best = best.min(acc);
            return;
        }
        for j in 0..n {
            if !used[j] {
                used[j] = true;
                go(cost, row + 1, used, acc + cost[[row, j]], best);
                used[j] = false;
            }
        }
    }
    let n = cost.nrows();
    let mut best = f64::INFINITY;
    go(cost, 0, &mut vec![false; n], 0.0, &mut best);
    best / n as f64
}

#[test]
fn oracle_agrees_with_brute_force_on_square_instances() {
    // With equal sizes and uniform weights an optimal plan is a permutation.
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for n in 1..=6 {
        let s = random_set(n, (2, 2), 1.0, &mut rng);
        let t = random_set(n, (2, 2), 1.0, &mut rng);
        let cost = cost_matrix(&s, &t).unwrap();
        assert!((exact_ot(&cost) - best_permutation(&cost)).abs() < 1e-12);
    }
}

#[test]
fn close_to_exact_optimum_for_small_epsilon() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    for _ in 0..20 {
        let ns = rng.random_range(1..=8);
        let nt = rng.random_range(1..=8);
        let s = random_set(ns, (3, 2), 1.0, &mut rng);
        let t = random_set(nt, (3, 2), 1.5, &mut rng);
        let cost = cost_matrix(&s, &t).unwrap();
        let exact = exact_ot(&cost);
        let mut p = OtProblem::new(s, t);
        p.epsilon = Some(1e-3 * median(&cost));
        let r = sinkhorn_w1(&p).unwrap();
        assert!((r.distance - exact).abs() <= 0.02 * exact, "{ns}x{nt}: {} vs {exact}", r.distance);
    }
}

#[test]
fn six_by_five_instance() {
    let mut rng = ChaCha8Rng::seed_from_u64(65);
    let s = random_set(6, (4, 3), 1.0, &mut rng);
    let t = random_set(5, (4, 3), 1.0, &mut rng);
    let cost = cost_matrix(&s, &t).unwrap();
    let exact = exact_ot(&cost);
    let mut p = OtProblem::new(s, t);
    p.epsilon = Some(1e-3 * median(&cost));
    let r = sinkhorn_w1(&p).unwrap();
    assert!((r.distance - exact).abs() <= 0.02 * exact);
}

#[test]
fn identical_sets_are_within_entropic_bias() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let s = random_set(7, (3, 3), 1.0, &mut rng);
    let r = sinkhorn_w1(&OtProblem::new(s.clone(), s.clone())).unwrap();
    assert!(r.distance < r.epsilon * (s.len() as f64).ln() + 1e-6, "{} eps {}", r.distance, r.epsilon);
}

#[test]
fn plan_marginals_are_feasible() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let s = random_set(4, (2, 2), 1.0, &mut rng);
    let t = random_set(6, (2, 2), 1.0, &mut rng);
    let r = sinkhorn_w1(&OtProblem::new(s, t)).unwrap();
    assert!(r.converged);
    let rows: f64 = r.plan.rows().into_iter().map(|row| (row.sum() - 0.25).abs()).sum();
    let cols: f64 = r.plan.columns().into_iter().map(|c| (c.sum() - 1.0 / 6.0).abs()).sum();
    assert!(rows < 1e-8 && cols < 1e-8, "{rows} {cols}");
}

#[test]
fn frobenius_equals_trace_identity() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for m in random_set(10, (4, 3), 2.0, &mut rng) {
        let gram = m.t().mapv(|v| v.conj()).dot(&m);
        let tr: f64 = (0..3).map(|i| gram[[i, i]].re).sum();
        assert!((frobenius_norm(&m) - tr.sqrt()).abs() < 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn symmetric_under_swap(seed in any::<u64>(), ns in 1usize..6, nt in 1usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = random_set(ns, (2, 3), 1.0, &mut rng);
        let t = random_set(nt, (2, 3), 1.0, &mut rng);
        let a = sinkhorn_w1(&OtProblem::new(s.clone(), t.clone())).unwrap();
        let b = sinkhorn_w1(&OtProblem::new(t, s)).unwrap();
        prop_assert!((a.distance - b.distance).abs() < 1e-9);
    }

    #[test]
    fn scales_with_matrix_magnitude(seed in any::<u64>(), scale in 1e-5f64..1e3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = random_set(3, (2, 2), 1.0, &mut rng);
        let t = random_set(4, (2, 2), 1.0, &mut rng);
        let base = sinkhorn_w1(&OtProblem::new(s.clone(), t.clone())).unwrap().distance;
        let mul = |v: &[CMatrix]| v.iter().map(|m| m * Complex64::new(-scale, 0.0)).collect::<Vec<_>>();
        let scaled = sinkhorn_w1(&OtProblem::new(mul(&s), mul(&t))).unwrap().distance;
        prop_assert!((scaled - scale * base).abs() <= 1e-9 * scale * base.max(1.0));
    }
}
