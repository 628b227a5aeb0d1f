mod common;

use common::{brute_force_assignment, enumerate_cycle_gap, permutations};
use otconv::measures::DiscreteMeasure;
use otconv::sampler::{random_measure, random_plan, random_points, rng_for};
use otconv::transport::{
    cyclical_monotonicity_gap, default_cycle_len, glue_plans, is_cyclically_monotone, solve_w2, transport_cost,
};
use proptest::prelude::*;
use rand::Rng;

const SEED: u64 = 91;

#[test]
fn heap_permutations_are_complete() {
    assert_eq!(permutations(4).len(), 24);
    let mut p = permutations(3);
    p.sort();
    p.dedup();
    assert_eq!(p.len(), 6);
}

#[test]
fn solver_matches_brute_force_assignment() {
    for k in 0..150u64 {
        let mut rng = rng_for(SEED, k);
        let n = rng.gen_range(1..=6);
        let d = rng.gen_range(1..=3);
        let xs = random_points(&mut rng, d, n, (-1.0, 1.0));
        let ys = random_points(&mut rng, d, n, (-1.0, 1.0));
        let oracle = brute_force_assignment(&xs, &ys);
        let ot = solve_w2(
            &DiscreteMeasure::uniform(xs).unwrap(),
            &DiscreteMeasure::uniform(ys).unwrap(),
        )
        .unwrap();
        assert!((ot.cost - oracle).abs() <= 1e-9, "instance {k}: {} vs {oracle}", ot.cost);
    }
}

#[test]
fn solver_output_is_cyclically_monotone_and_basic() {
    for k in 0..50u64 {
        let mut rng = rng_for(SEED + 1, k);
        let d = rng.gen_range(1..=3);
        let (m, n) = (rng.gen_range(1..=6), rng.gen_range(1..=6));
        let mu = random_measure(&mut rng, d, m, (-1.0, 1.0), k % 2 == 0);
        let nu = random_measure(&mut rng, d, n, (-1.0, 1.0), false);
        let ot = solve_w2(&mu, &nu).unwrap();
        let s = ot.plan.support_len();
        assert!(s <= m + n - 1);
        assert!(is_cyclically_monotone(&ot.plan, s), "instance {k}");
        assert!(enumerate_cycle_gap(&ot.plan, s) >= -1e-9, "instance {k}");
        assert!(ot.min_reduced_cost >= -1e-12);
    }
}

#[test]
fn dp_certificate_agrees_with_enumeration() {
    let mut violated = 0;
    for k in 0..120u64 {
        let mut rng = rng_for(SEED + 2, k);
        let d = rng.gen_range(1..=2);
        let mu = { let n = rng.gen_range(2..=4); random_measure(&mut rng, d, n, (-1.0, 1.0), false) };
        let nu = { let n = rng.gen_range(2..=4); random_measure(&mut rng, d, n, (-1.0, 1.0), false) };
        let plan = random_plan(&mut rng, &mu, &nu).unwrap();
        let s = plan.support_len();
        for len in 2..=s {
            let dp = cyclical_monotonicity_gap(&plan, len);
            let brute = enumerate_cycle_gap(&plan, len);
            // walks may repeat a cycle, so only the sign has to match
            assert!(dp <= brute + 1e-12);
            assert_eq!(dp < -1e-9, brute < -1e-9, "instance {k}, len {len}: {dp} vs {brute}");
        }
        if !is_cyclically_monotone(&plan, s) {
            violated += 1;
        }
    }
    assert!(violated > 10, "sampler should produce non-optimal plans");
}

#[test]
fn default_cycle_length_is_capped() {
    let mut rng = rng_for(SEED + 3, 0);
    let mu = random_measure(&mut rng, 2, 5, (-1.0, 1.0), false);
    let nu = random_measure(&mut rng, 2, 5, (-1.0, 1.0), false);
    let plan = random_plan(&mut rng, &mu, &nu).unwrap();
    assert_eq!(default_cycle_len(&plan), plan.support_len().min(6));
}

#[test]
fn symmetry_triangle_and_lower_bound() {
    for k in 0..60u64 {
        let mut rng = rng_for(SEED + 4, k);
        let d = rng.gen_range(1..=3);
        let mut m = || {
            let n = rng.gen_range(1..=5);
            random_measure(&mut rng, d, n, (-1.0, 1.0), false)
        };
        let (a, b, c) = (m(), m(), m());
        let ab = solve_w2(&a, &b).unwrap().w2;
        let ba = solve_w2(&b, &a).unwrap().w2;
        let bc = solve_w2(&b, &c).unwrap().w2;
        let ac = solve_w2(&a, &c).unwrap().w2;
        assert!((ab - ba).abs() <= 1e-12, "{ab} vs {ba}");
        assert!(ac <= ab + bc + 1e-9);

        let mut rng = rng_for(SEED + 5, k);
        for _ in 0..5 {
            let plan = random_plan(&mut rng, &a, &b).unwrap();
            assert!(transport_cost(&plan) >= ab * ab - 1e-9);
        }
    }
}

#[test]
fn glued_marginals_reproduce_inputs() {
    for k in 0..40u64 {
        let mut rng = rng_for(SEED + 6, k);
        let d = rng.gen_range(1..=2);
        let base = random_measure(&mut rng, d, 3, (-1.0, 1.0), false);
        let second = { let n = rng.gen_range(1..=4); random_measure(&mut rng, d, n, (-1.0, 1.0), false) };
        let third = { let n = rng.gen_range(1..=4); random_measure(&mut rng, d, n, (-1.0, 1.0), false) };
        let g12 = random_plan(&mut rng, &base, &second).unwrap();
        let g13 = random_plan(&mut rng, &base, &third).unwrap();
        let glued = glue_plans(&g12, &g13).unwrap();
        for (proj, orig) in [(glued.project_12().unwrap(), &g12), (glued.project_13().unwrap(), &g13)] {
            assert_eq!(proj.support_len(), orig.support_len());
            for e in orig.entries() {
                let hit = proj
                    .entries()
                    .iter()
                    .find(|p| p.source == e.source && p.target == e.target)
                    .expect("pair survives projection");
                assert!((hit.mass - e.mass).abs() <= 1e-12);
            }
        }
    }
}

fn uniform_points() -> impl Strategy<Value = (Vec<Vec<f64>>, Vec<Vec<f64>>)> {
    (1usize..=3, 1usize..=5).prop_flat_map(|(d, n)| {
        let pt = prop::collection::vec(-1.0f64..1.0, d);
        (
            prop::collection::vec(pt.clone(), n),
            prop::collection::vec(pt, n),
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn solver_is_optimal_over_assignments((xs, ys) in uniform_points()) {
        let oracle = brute_force_assignment(&xs, &ys);
        let mu = DiscreteMeasure::uniform(xs).unwrap();
        let nu = DiscreteMeasure::uniform(ys).unwrap();
        let ot = solve_w2(&mu, &nu).unwrap();
        prop_assert!((ot.cost - oracle).abs() <= 1e-9);
        prop_assert!(is_cyclically_monotone(&ot.plan, ot.plan.support_len()));
    }
}
