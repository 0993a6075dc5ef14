//! End-to-end checks on small models: flows feed the bound programs, the
//! truncated-chain oracle validates every resulting bound, and certificates
//! replay cleanly both against the generated rows and pointwise.

use std::collections::BTreeMap;

use walkbound_core::bounds::{
    pointwise_family_check, sandwich, BoundConfig, BoundInputs, BoundKind,
};
use walkbound_core::flow::{solve_all_flows, FlowConfig};
use walkbound_core::lattice::{refine, validate_partition, LatticeBox, Partition};
use walkbound_core::linfunc::CLinearFn;
use walkbound_core::lp::LpStatus;
use walkbound_core::measure::GeometricStationaryMeasure;
use walkbound_core::oracle::{
    check_flow_identity, check_reward_inequality, exact_performance, iterate_rewards,
    stationary_exact, suggest_caps, RewardTrace, TruncatedChain,
};
use walkbound_core::walk::{delta, validate_walk, RandomWalkSpec, TransitionLaw};

fn mm1_partition() -> Partition {
    validate_partition(
        vec![
            LatticeBox::new(vec![0], vec![Some(0)]).unwrap(),
            LatticeBox::new(vec![1], vec![None]).unwrap(),
        ],
        1,
    )
    .unwrap()
}

fn mm1_walk(p: &Partition, lambda: f64, mu: f64) -> RandomWalkSpec {
    let mut boundary = BTreeMap::new();
    boundary.insert(vec![1], lambda);
    boundary.insert(vec![0], 1.0 - lambda);
    let mut interior = BTreeMap::new();
    interior.insert(vec![1], lambda);
    interior.insert(vec![-1], mu);
    interior.insert(vec![0], 1.0 - lambda - mu);
    validate_walk(p, TransitionLaw::from_rows(vec![boundary, interior])).unwrap()
}

fn geometric_measure(p: &Partition, rho: f64) -> GeometricStationaryMeasure {
    GeometricStationaryMeasure::new(p, vec![1.0; p.len()], vec![vec![rho]; p.len()])
        .unwrap()
        .normalize(p)
        .unwrap()
}

#[test]
fn zero_perturbation_reproduces_the_exact_value() {
    let p = mm1_partition();
    let walk = mm1_walk(&p, 0.3, 0.5);
    let refinement = refine(&p);
    let flows = solve_all_flows(&refinement, &walk, &FlowConfig::default()).unwrap();
    let measure = geometric_measure(&p, 0.6);
    let f = CLinearFn::uniform(p.len(), vec![0.0, 1.0]);
    let inputs = BoundInputs {
        refinement: &refinement,
        walk: &walk,
        perturbed: &walk,
        measure: &measure,
        performance: &f,
        flows: &flows,
    };
    let all = sandwich(&inputs, &BoundConfig::default()).unwrap();
    let exact = 0.6 / 0.4;
    for r in all.results() {
        assert_eq!(r.status, LpStatus::Optimal, "{}", r.kind);
    }
    assert!((all.upper.value - exact).abs() <= 1e-8, "{}", all.upper.value);
    assert!((all.lower.value - exact).abs() <= 1e-8, "{}", all.lower.value);
    assert!((all.upper.value - all.lower.value).abs() <= 1e-8);
    // With no active perturbation the pruned programs carry no bias pairs.
    let cert = all.upper.certificate.as_ref().unwrap();
    assert!(cert.bias_upper.is_empty());
    assert!(cert.bias_lower.is_empty());
}

#[test]
fn perturbed_service_rate_sandwiches_the_true_mean() {
    // Original M/M/1 at rho = 0.6; perturbed serves slower (rho = 2/3), with
    // the perturbed measure known in closed form. The bounds must contain
    // the original stationary mean rho/(1-rho) = 1.5.
    let p = mm1_partition();
    let original = mm1_walk(&p, 0.3, 0.5);
    let perturbed = mm1_walk(&p, 0.3, 0.45);
    let refinement = refine(&p);
    let flows = solve_all_flows(&refinement, &original, &FlowConfig::default()).unwrap();
    let measure = geometric_measure(&p, 0.3 / 0.45);
    let f = CLinearFn::uniform(p.len(), vec![0.0, 1.0]);
    let inputs = BoundInputs {
        refinement: &refinement,
        walk: &original,
        perturbed: &perturbed,
        measure: &measure,
        performance: &f,
        flows: &flows,
    };
    let config = BoundConfig::default();
    let all = sandwich(&inputs, &config).unwrap();

    let truth = 1.5;
    assert_eq!(all.upper.status, LpStatus::Optimal);
    assert_eq!(all.lower.status, LpStatus::Optimal);
    assert!(all.lower.value - 1e-8 <= truth, "lower {}", all.lower.value);
    assert!(truth <= all.upper.value + 1e-8, "upper {}", all.upper.value);
    assert!(all.lower.value <= all.upper.value + 1e-8);

    // Comparison bounds, where optimal, must also be valid.
    if all.cmp_upper.status == LpStatus::Optimal {
        assert!(all.cmp_upper.value >= truth - 1e-8);
    }
    if all.cmp_lower.status == LpStatus::Optimal {
        assert!(all.cmp_lower.value <= truth + 1e-8);
    }

    // Certificates replay on the generated rows and pointwise.
    for r in [&all.upper, &all.lower] {
        assert!(r.replay_violation <= 1e-8, "{}: {}", r.kind, r.replay_violation);
        let cert = r.certificate.as_ref().unwrap();
        let states: Vec<Vec<i64>> = (0..40).map(|x| vec![x]).collect();
        let violation = pointwise_family_check(&inputs, cert, &states).unwrap();
        assert!(violation <= 1e-8, "{}: pointwise {violation}", r.kind);
    }

    // Variable count stays within the coefficient budget.
    let m = p.dim() as u32;
    let budget = 2 * p.len() * (3usize.pow(m) + 1) * (p.dim() + 1);
    for r in all.results() {
        assert!(r.decision_vars <= budget);
    }
}

#[test]
fn reward_inequality_holds_for_the_solved_certificate() {
    let p = mm1_partition();
    let original = mm1_walk(&p, 0.3, 0.5);
    let perturbed = mm1_walk(&p, 0.3, 0.45);
    let refinement = refine(&p);
    let flows = solve_all_flows(&refinement, &original, &FlowConfig::default()).unwrap();
    let measure = geometric_measure(&p, 0.3 / 0.45);
    let f = CLinearFn::uniform(p.len(), vec![0.0, 1.0]);
    let inputs = BoundInputs {
        refinement: &refinement,
        walk: &original,
        perturbed: &perturbed,
        measure: &measure,
        performance: &f,
        flows: &flows,
    };
    let result =
        walkbound_core::bounds::solve_bound(BoundKind::UpperError, &inputs, &BoundConfig::default())
            .unwrap();
    assert_eq!(result.status, LpStatus::Optimal);
    let cert = result.certificate.unwrap();

    let caps = suggest_caps(&p, &measure, 1e-13);
    let chain_orig = TruncatedChain::new(&original, &caps).unwrap();
    let chain_pert = TruncatedChain::new(&perturbed, &caps).unwrap();
    let deltas = delta(&original, &perturbed).unwrap();
    let samples: Vec<Vec<i64>> = (0..10).map(|x| vec![x]).collect();
    let report = check_reward_inequality(
        &chain_orig,
        &chain_pert,
        &p,
        &measure,
        &deltas,
        &f,
        &cert.fbar,
        &cert.gain,
        &samples,
        200,
    );
    assert!(
        report.max_aggregate_violation <= 1e-7,
        "aggregate {}",
        report.max_aggregate_violation
    );
    assert!(
        report.max_pointwise_violation <= 1e-7,
        "pointwise {}",
        report.max_pointwise_violation
    );

    // The certified interval brackets the truncated-chain truth as well.
    let pi = stationary_exact(&chain_orig).unwrap();
    let truth = exact_performance(&chain_orig, &pi, &p, &f);
    assert!((truth - 1.5).abs() <= 1e-6);
}

#[test]
fn threshold_walk_bounds_match_the_truncated_oracle() {
    // Two-dimensional walk whose first-queue service speeds up past a
    // threshold; the perturbed walk serves at the fast rate everywhere, so
    // its measure is piecewise geometric with a weight jump at the
    // threshold.
    let t = 3i64;
    let p = validate_partition(
        vec![
            LatticeBox::new(vec![0, 0], vec![Some(0), Some(0)]).unwrap(),
            LatticeBox::new(vec![1, 0], vec![Some(t), Some(0)]).unwrap(),
            LatticeBox::new(vec![t + 1, 0], vec![None, Some(0)]).unwrap(),
            LatticeBox::new(vec![0, 1], vec![Some(0), None]).unwrap(),
            LatticeBox::new(vec![1, 1], vec![Some(t), None]).unwrap(),
            LatticeBox::new(vec![t + 1, 1], vec![None, None]).unwrap(),
        ],
        2,
    )
    .unwrap();
    let (lam, mu1, mu1s, mu2) = (0.14, 0.28, 0.42, 0.42);
    let d1 = vec![-1i64, 1];
    let build = |slow_below: bool| -> RandomWalkSpec {
        let rows: Vec<BTreeMap<Vec<i64>, f64>> = (0..6)
            .map(|k| {
                let mut row = BTreeMap::new();
                row.insert(vec![1, 0], lam);
                let has_jobs = !matches!(k, 0 | 3);
                if has_jobs {
                    let past = k == 2 || k == 5;
                    let rate = if past || !slow_below { mu1s } else { mu1 };
                    row.insert(d1.clone(), rate);
                }
                if k >= 3 {
                    row.insert(vec![0, -1], mu2);
                }
                let total: f64 = row.values().sum();
                row.insert(vec![0, 0], 1.0 - total);
                row
            })
            .collect();
        validate_walk(&p, TransitionLaw::from_rows(rows)).unwrap()
    };
    let original = build(true);
    let perturbed = build(false);

    // Perturbed measure: fast service everywhere gives a plain product,
    // rho2 in the first dimension and sigma in the second.
    let rho2 = lam / mu1s;
    let sigma = lam / mu2;
    let measure = GeometricStationaryMeasure::new(
        &p,
        vec![1.0; 6],
        vec![vec![rho2, sigma]; 6],
    )
    .unwrap()
    .normalize(&p)
    .unwrap();
    let states: Vec<Vec<i64>> = (0..12)
        .flat_map(|x| (0..12).map(move |y| vec![x, y]))
        .collect();
    assert!(measure.verify_balance(&p, &perturbed, &states) <= 1e-10);

    let refinement = refine(&p);
    let flows = solve_all_flows(&refinement, &original, &FlowConfig::default()).unwrap();
    let f = CLinearFn::uniform(p.len(), vec![0.0, 1.0, 1.0]);
    let inputs = BoundInputs {
        refinement: &refinement,
        walk: &original,
        perturbed: &perturbed,
        measure: &measure,
        performance: &f,
        flows: &flows,
    };
    let all = sandwich(&inputs, &BoundConfig::default()).unwrap();
    assert_eq!(all.upper.status, LpStatus::Optimal);
    assert_eq!(all.lower.status, LpStatus::Optimal);

    let caps = suggest_caps(&p, &measure, 1e-12);
    let chain = TruncatedChain::new(&original, &caps).unwrap();
    let pi = stationary_exact(&chain).unwrap();
    let truth = exact_performance(&chain, &pi, &p, &f);
    assert!(
        all.lower.value - 1e-6 <= truth && truth <= all.upper.value + 1e-6,
        "lower {} truth {} upper {}",
        all.lower.value,
        truth,
        all.upper.value
    );
    if all.cmp_upper.status == LpStatus::Optimal {
        assert!(all.cmp_upper.value >= truth - 1e-6);
    }
    if all.cmp_lower.status == LpStatus::Optimal {
        assert!(all.cmp_lower.value <= truth + 1e-6);
    }

    // Flow identity along the recursion on the truncated chain.
    let mut trace = RewardTrace::new(&chain, &p, &f);
    for _ in 0..30 {
        for n in [vec![0i64, 0], vec![2, 1], vec![t, 0], vec![t + 1, 2], vec![6, 6]] {
            let k = p.locate(&n);
            for u in p.neighborhood(k).to_vec() {
                if u.iter().all(|&x| x == 0) {
                    continue;
                }
                let res = check_flow_identity(
                    &flows,
                    &refinement,
                    &chain,
                    &p,
                    &f,
                    &trace,
                    &n,
                    &u,
                );
                assert!(res <= 1e-8, "t {} n {n:?} u {u:?}: {res}", trace.t);
            }
        }
        trace.advance(&chain);
    }

    // Convergence diagnostic for the average reward on this model too.
    let trace = iterate_rewards(&chain, &p, &f, 600);
    let avg = trace.values[chain.index(&[0, 0])] / 600.0;
    assert!((avg - truth).abs() <= 0.1, "avg {avg} truth {truth}");
}
