use gramsos::bench::{freedom_ratio, random_instance, random_instance_with, run_experiment, BasisMode, Case, ExperimentMode, ExperimentSpec, InstanceOptions};
use gramsos::Variant;

#[test]
fn freedom_ratio_matches_reference_triples() {
    let triples = [
        (100, 10, 579, 1.6494),
        (200, 10, 1221, 1.6011),
        (500, 10, 5124, 0.9670),
        (500, 10, 3309, 1.4974),
        (1000, 50, 10621, 4.5923),
        (1500, 10, 25573, 0.5848),
        (1500, 50, 25573, 2.8849),
    ];
    for (n, r, p, want) in triples {
        let got = freedom_ratio(n, r, p);
        assert!((got - want).abs() < 5e-5, "({n}, {r}, {p}) -> {got}");
    }
    // printed truncated rather than rounded
    assert!((freedom_ratio(1000, 10, 10621) - 0.9372).abs() < 1e-4);
    assert_eq!(freedom_ratio(7, 7, 28), 1.0);
}

#[test]
fn planted_instances_are_feasible_in_both_basis_modes() {
    for mode in [BasisMode::Leading, BasisMode::Sparse] {
        for seed in 0..5 {
            let opts = InstanceOptions { basis_mode: mode, ..Default::default() };
            let inst = random_instance_with(20, 3, seed, &opts).unwrap();
            assert_eq!(inst.cs.apply_exact(&inst.w_true).unwrap(), inst.cs.b_exact());
            assert_eq!(inst.basis.len(), 20);
        }
    }
}

#[test]
fn sparse_basis_lowers_the_freedom_ratio() {
    let lead = random_instance(50, 5, 1, 5).unwrap();
    let opts = InstanceOptions { basis_mode: BasisMode::Sparse, ..Default::default() };
    let sparse = random_instance_with(50, 5, 1, &opts).unwrap();
    assert!(sparse.p > lead.p);
    assert!(sparse.fr < lead.fr);
}

fn small_spec() -> ExperimentSpec {
    ExperimentSpec {
        mode: ExperimentMode::Continuation,
        cases: vec![Case { n: 20, r: 2 }, Case { n: 30, r: 3 }],
        variants: Variant::ALL.to_vec(),
        seeds: vec![1, 2],
        record_time: false,
        ..ExperimentSpec::empty()
    }
}

#[test]
fn reports_are_byte_identical_across_runs_and_thread_counts() {
    let spec = small_spec();
    let a = run_experiment(&spec, 1).unwrap();
    let b = run_experiment(&spec, 4).unwrap();
    assert_eq!(a.to_csv(), b.to_csv());
    assert_eq!(a.to_json(), b.to_json());
    assert_eq!(a.records.len(), 12);
    assert_eq!(a.aggregate.len(), 6);
}

#[test]
fn failing_runs_are_recorded_and_the_harness_continues() {
    let spec = ExperimentSpec { cases: vec![Case { n: 10, r: 11 }, Case { n: 10, r: 2 }], seeds: vec![0], ..small_spec() };
    let rep = run_experiment(&spec, 2).unwrap();
    assert_eq!(rep.records.len(), 6);
    assert!(rep.records[..3].iter().all(|r| r.error.is_some()));
    assert!(rep.records[3..].iter().all(|r| r.error.is_none() && r.converged));
}

#[test]
fn certify_mode_yields_exact_certificates() {
    let spec = ExperimentSpec { cases: vec![Case { n: 15, r: 2 }], variants: vec![Variant::AfpcBb], certify: true, ..small_spec() };
    let rep = run_experiment(&spec, 2).unwrap();
    for r in &rep.records {
        assert_eq!(r.exact, Some(true), "{r:?}");
        assert!(r.squares.unwrap() <= 4);
    }
}
