use proptest::prelude::*;
use reaction_inverse::experiments::*;
use reaction_inverse::mesh::boundary_nodes;
use reaction_inverse::*;

fn setup(level: usize, gamma: &str) -> (FemSpace, ExactData) {
    let space = FemSpace::new(build_square_mesh(level).unwrap());
    let exact = synthesize_exact(&space, FluxTuple::DEFAULT, gamma.parse().unwrap()).unwrap();
    (space, exact)
}

#[test]
fn noise_level_scales_linearly_with_amplitude() {
    let (space, exact) = setup(8, "bottom,left");
    for seed in [0, 1, 99] {
        let a = add_noise(&space, &exact, 0.05, seed).unwrap();
        let b = add_noise(&space, &exact, 0.1, seed).unwrap();
        assert!((b.delta - 2.0 * a.delta).abs() <= 1e-12);
    }
    assert_eq!(add_noise(&space, &exact, 0.0, 3).unwrap().delta, 0.0);
    assert!(add_noise(&space, &exact, -1.0, 3).is_err());
}

#[test]
fn noise_touches_only_the_observation_boundary() {
    let (space, exact) = setup(8, "bottom");
    let theta = 0.3;
    let m = add_noise(&space, &exact, theta, 17).unwrap();
    let mesh = space.mesh();
    for (e, (noisy, clean)) in mesh.boundary_edges().iter().zip(m.data.flux.values().iter().zip(exact.flux.values())) {
        if e.side == Side::Bottom {
            assert!((noisy - clean).abs() < theta);
        } else {
            assert_eq!(noisy, clean);
        }
    }
    assert_eq!(m.data.trace.len(), boundary_nodes(mesh, &"bottom".parse().unwrap()).len());
    assert!(m.data.trace.iter().zip(&exact.trace).all(|(a, b)| (a - b).abs() < theta));
    assert!(m.data.trace.iter().zip(&exact.trace).any(|(a, b)| a != b));
}

#[test]
fn noise_is_deterministic_per_seed() {
    let (space, exact) = setup(16, "bottom,left");
    let a = add_noise(&space, &exact, 0.1, 5).unwrap();
    let b = add_noise(&space, &exact, 0.1, 5).unwrap();
    let c = add_noise(&space, &exact, 0.1, 6).unwrap();
    assert_eq!(a, b);
    assert_ne!(a.data.trace, c.data.trace);
}

#[test]
fn noise_level_is_close_to_reported_scale() {
    // the reported table lists delta = 0.1116 at level 4
    let (space, exact) = setup(4, "bottom");
    let rho = RhoRule::Sqrt.rho(4);
    let theta = ThetaRule::Ex1.theta(4, rho);
    let deltas: Vec<f64> = (0..20).map(|s| add_noise(&space, &exact, theta, s).unwrap().delta).collect();
    let mean = deltas.iter().sum::<f64>() / deltas.len() as f64;
    assert!(mean > 0.05 && mean < 0.2, "mean delta {mean}");
}

#[test]
fn exact_data_are_reproduced_by_the_interpolated_truth() {
    let (space, exact) = setup(16, "bottom");
    let beta = NodalField::interpolate(space.mesh(), beta_true);
    let data = exact.cauchy();
    let e = error_metrics(&space, &beta, &[(&exact, &data)]).unwrap();
    assert!(e.beta > 0.0 && e.beta < 0.5);
    assert!(e.neumann < 1e-9 && e.mixed < 1e-9 && e.dirichlet < 1e-9, "{e:?}");
    let far = error_metrics(&space, &NodalField::constant(space.node_count(), 5.0), &[(&exact, &data)]).unwrap();
    assert!(far.beta > e.beta && far.neumann > e.neumann);
    assert!(error_metrics(&space, &beta, &[]).is_err());
}

#[test]
fn multilevel_beta_error_stays_controlled_over_seeds() {
    for seed in 0..5 {
        let settings = StudySettings {
            levels: vec![4, 8, 16],
            rho: RhoRule::Sqrt,
            theta: ThetaRule::Ex1,
            gamma: "bottom".parse().unwrap(),
            tuples: vec![FluxTuple::DEFAULT],
            seed,
            params: AlgorithmParams::default(),
        };
        let study = run_study(&settings).unwrap();
        for w in study.levels.windows(2) {
            assert!(w[1].errors.as_array().iter().all(|v| v.is_finite()));
            assert!(w[1].errors.beta <= 2.0 * w[0].errors.beta, "seed {seed}");
        }
    }
}

#[test]
fn small_example_writes_a_complete_report() {
    let overrides = ExampleOverrides { levels: Some(vec![4, 8]), max_iter: Some(15), ..Default::default() };
    let report = run_example(ExampleId::BottomObservation, 7, &overrides).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("nested/out");
    let files = report.write_to(&out).unwrap();
    let names: Vec<String> = files.iter().map(|p| p.file_name().unwrap().to_string_lossy().into_owned()).collect();
    for expected in ["example1_errors.csv", "example1_eoc.csv", "example1_log_l4.csv", "example1_beta.txt", "manifest.json"] {
        assert!(names.iter().any(|n| n == expected), "missing {expected}");
    }
    let errors = std::fs::read_to_string(out.join("example1_errors.csv")).unwrap();
    let mut lines = errors.lines();
    assert_eq!(lines.next(), Some("level,h,rho,delta,L2_beta,L2_N,L2_M,L2_D"));
    assert!(lines.next().unwrap().starts_with("4,7.0711e-1,8.4090e-4,"));
    let manifest: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 7);
    assert_eq!(manifest["example"], 1);
    assert_eq!(manifest["gamma"], "bottom");
    assert_eq!(manifest["rho_rules"][0], "sqrt");
    assert_eq!(manifest["levels"], serde_json::json!([4, 8]));
    let beta = std::fs::read_to_string(out.join("example1_beta.txt")).unwrap();
    assert_eq!(beta.lines().count(), 81);
    assert!(std::fs::read_dir(&out).unwrap().all(|e| !e.unwrap().file_name().to_string_lossy().ends_with(".tmp")));
}

#[test]
fn example_four_uses_nested_measurement_sets() {
    let overrides = ExampleOverrides {
        levels: Some(vec![4]),
        max_iter: Some(5),
        measurement_counts: Some(vec![1, 6]),
        ..Default::default()
    };
    let report = run_example(ExampleId::MultipleMeasurements, 1, &overrides).unwrap();
    assert_eq!(report.manifest.tuples[1].len(), 6);
    assert_eq!(report.manifest.tuples[0][0], report.manifest.tuples[1][0]);
    assert_eq!(report.manifest.gamma, "bottom,left");
    assert_eq!(report.tables[0].rows.len(), 2);
}

#[test]
fn runs_are_bitwise_reproducible() {
    let overrides = ExampleOverrides { levels: Some(vec![4, 8]), max_iter: Some(10), ..Default::default() };
    let a = run_example(ExampleId::BottomLeftObservation, 3, &overrides).unwrap();
    let b = run_example(ExampleId::BottomLeftObservation, 3, &overrides).unwrap();
    for (x, y) in a.fields.iter().zip(&b.fields) {
        assert!(x.values.iter().zip(&y.values).all(|(p, q)| p.to_bits() == q.to_bits()));
    }
    for (x, y) in a.tables.iter().zip(&b.tables) {
        assert_eq!(x.to_csv(), y.to_csv());
    }
    for ((_, x), (_, y)) in a.logs.iter().zip(&b.logs) {
        assert!(x.iter().zip(y).all(|(p, q)| p.cost.to_bits() == q.cost.to_bits() && p.mu == q.mu));
    }
}

proptest! {
    #[test]
    fn eoc_is_invariant_under_error_scaling(
        e in proptest::collection::vec(1e-6f64..10.0, 3..6),
        scale in 1e-3f64..1e3,
    ) {
        let h: Vec<f64> = (0..e.len()).map(|i| 8f64.sqrt() / (4 << i) as f64).collect();
        let scaled: Vec<f64> = e.iter().map(|v| v * scale).collect();
        let (s1, m1) = eoc(&e, &h).unwrap();
        let (s2, m2) = eoc(&scaled, &h).unwrap();
        for (a, b) in s1.iter().zip(&s2) {
            prop_assert!((a - b).abs() <= 1e-9 * (1.0 + a.abs()));
        }
        prop_assert!((m1 - m2).abs() <= 1e-9 * (1.0 + m1.abs()));
    }

    #[test]
    fn eoc_recovers_power_laws(p in -1.0f64..4.0, c in 1e-3f64..1e2) {
        let h = [0.5f64, 0.25, 0.125, 0.0625];
        let e: Vec<f64> = h.iter().map(|x| c * x.powf(p)).collect();
        let (steps, mean) = eoc(&e, &h).unwrap();
        prop_assert!(steps.iter().all(|s| (s - p).abs() < 1e-10));
        prop_assert!((mean - p).abs() < 1e-10);
    }

    #[test]
    fn schedules_are_positive_and_monotone(k in 0u32..5) {
        let level = 4usize << k;
        for rule in ["sqrt", "h2", "h2e-1", "h2e-2", "h2e-3"] {
            let r: RhoRule = rule.parse().unwrap();
            prop_assert!(r.rho(level) > 0.0);
            prop_assert!(r.rho(2 * level) < r.rho(level));
        }
    }
}
