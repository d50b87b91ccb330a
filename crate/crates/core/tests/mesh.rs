use proptest::prelude::*;
use reaction_inverse::mesh::{boundary_nodes, prolongate, prolongate_to};
use reaction_inverse::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn prolongation_reproduces_affine_functions(level in 1usize..12, a in -5.0f64..5.0, b in -5.0f64..5.0, c in -5.0f64..5.0) {
        let coarse = build_square_mesh(level).unwrap();
        let fine = build_square_mesh(2 * level).unwrap();
        let f = |p: Point| a + b * p[0] + c * p[1];
        let u = prolongate(&coarse, &NodalField::interpolate(&coarse, f), &fine).unwrap();
        let exact = NodalField::interpolate(&fine, f);
        for (x, y) in u.values().iter().zip(exact.values()) {
            prop_assert!((x - y).abs() <= 1e-12 * (1.0 + y.abs()));
        }
    }

    #[test]
    fn prolongation_keeps_coarse_values_and_bounds(level in 1usize..10, seed in any::<u64>()) {
        let coarse = build_square_mesh(level).unwrap();
        let fine = build_square_mesh(2 * level).unwrap();
        let mut s = seed;
        let vals: Vec<f64> = (0..coarse.node_count()).map(|_| {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            0.05 + 9.95 * ((s >> 11) as f64 / (1u64 << 53) as f64)
        }).collect();
        let u = prolongate(&coarse, &NodalField::new(vals.clone()), &fine).unwrap();
        for j in 0..=level {
            for i in 0..=level {
                prop_assert_eq!(u.values()[2 * j * (2 * level + 1) + 2 * i], vals[j * (level + 1) + i]);
            }
        }
        // averages of admissible values stay admissible
        prop_assert!(u.values().iter().all(|&v| (0.05..=10.0).contains(&v)));
    }

    #[test]
    fn mesh_invariants(level in 1usize..20) {
        let mesh = build_square_mesh(level).unwrap();
        prop_assert_eq!(mesh.node_count(), (level + 1) * (level + 1));
        prop_assert_eq!(mesh.triangles().len(), 2 * level * level);
        prop_assert_eq!(mesh.boundary_edges().len(), 4 * level);
        let total: f64 = (0..mesh.triangles().len()).map(|t| mesh.signed_area(t)).sum();
        prop_assert!((total - 4.0).abs() < 1e-12);
        prop_assert!((0..mesh.triangles().len()).all(|t| mesh.signed_area(t) > 0.0));
        prop_assert_eq!(boundary_nodes(&mesh, &BoundaryRegion::all()).len(), 4 * level);
        prop_assert_eq!(boundary_nodes(&mesh, &"bottom".parse().unwrap()).len(), level + 1);
        prop_assert_eq!(boundary_nodes(&mesh, &"bottom,left".parse().unwrap()).len(), 2 * level + 1);
    }
}

#[test]
fn repeated_prolongation_matches_direct() {
    let coarse = build_square_mesh(4).unwrap();
    let mid = build_square_mesh(8).unwrap();
    let fine = build_square_mesh(16).unwrap();
    let u = NodalField::interpolate(&coarse, |p| (3.0 * p[0]).sin() + p[1] * p[1]);
    let twice = prolongate(&mid, &prolongate(&coarse, &u, &mid).unwrap(), &fine).unwrap();
    let direct = prolongate_to(&coarse, &u, 16).unwrap();
    assert_eq!(twice, direct);
    assert!(prolongate_to(&coarse, &u, 12).is_err());
}
