mod common;

use common::{max_abs_diff, Rand};
use proptest::prelude::*;
use reaction_inverse::experiments::{beta_true_coefficient, catalog_coefficients, FluxTuple};
use reaction_inverse::fem::{assemble_stiffness, EdgeFlux};
use reaction_inverse::forward::{trace, StateKind};
use reaction_inverse::sparse::{dot, matvec};
use reaction_inverse::*;

fn unit_coefficients(source: fn(Point) -> f64) -> Coefficients {
    Coefficients {
        alpha: MatrixCoefficient::identity(),
        sigma: ScalarCoefficient::Constant(0.0),
        source: ScalarCoefficient::function(source),
    }
}

#[test]
fn linear_state_is_reproduced_by_all_three_problems() {
    // u = x1 solves -lap u + u = x1 with flux n1
    let coeffs = unit_coefficients(|p| p[0]);
    for level in [2, 4, 8] {
        let space = FemSpace::new(build_square_mesh(level).unwrap());
        let model = ForwardModel::new(&space, coeffs.clone()).unwrap();
        let k = model.stiffness(&ScalarCoefficient::Constant(1.0)).unwrap();
        let flux = EdgeFlux::from_fn(space.mesh(), |_, side| side.normal()[0]);
        let exact = NodalField::interpolate(space.mesh(), |p| p[0]);
        let gamma: BoundaryRegion = "bottom,left".parse().unwrap();
        let n = model.neumann(&k, &flux).unwrap();
        let m = model.mixed(&k, &flux, &gamma, &trace(&space, &exact, &gamma)).unwrap();
        let d = model.dirichlet(&k, &trace(&space, &exact, &BoundaryRegion::all())).unwrap();
        for u in [&n, &m, &d] {
            assert!(max_abs_diff(u.values(), exact.values()) < 1e-10, "level {level}");
        }
    }
}

#[test]
fn cauchy_consistency_for_random_coefficients() {
    let space = FemSpace::new(build_square_mesh(8).unwrap());
    let model = ForwardModel::new(&space, catalog_coefficients()).unwrap();
    let flux = FluxTuple::DEFAULT.edge_flux(space.mesh());
    let mut rng = Rand::new(11);
    for gamma in ["bottom", "bottom,left", "top,right"] {
        let gamma: BoundaryRegion = gamma.parse().unwrap();
        let beta = rng.field(space.node_count(), 0.1, 5.0);
        let k = model.stiffness(&ScalarCoefficient::Nodal(beta)).unwrap();
        let n = model.neumann(&k, &flux).unwrap();
        let m = model.mixed(&k, &flux, &gamma, &trace(&space, &n, &gamma)).unwrap();
        assert!(space.l2_norm(&n.sub(&m)) <= 1e-9);
    }
}

#[test]
fn adjoint_identity() {
    let space = FemSpace::new(build_square_mesh(8).unwrap());
    let model = ForwardModel::new(&space, catalog_coefficients()).unwrap();
    let gamma: BoundaryRegion = "bottom".parse().unwrap();
    let mut rng = Rand::new(5);
    let n = space.node_count();
    let k = model.stiffness(&ScalarCoefficient::Nodal(rng.field(n, 0.5, 3.0))).unwrap();
    let flux = FluxTuple::DEFAULT.edge_flux(space.mesh());
    let base = model.neumann(&k, &flux).unwrap();
    let residual = rng.field(n, -1.0, 1.0);
    let kappa = rng.field(n, -1.0, 1.0);
    for kind in [StateKind::Neumann, StateKind::Mixed] {
        let adj = match kind {
            StateKind::Neumann => model.adjoint_neumann(&k, &residual).unwrap(),
            StateKind::Mixed => model.adjoint_mixed(&k, &gamma, &residual).unwrap(),
        };
        let deriv = model.directional_derivative(&k, &kappa, &base, kind, &gamma).unwrap();
        let lhs = dot(&space.mass_times(&residual), deriv.values()).unwrap();
        let rhs = -dot(&space.product_load(&kappa, &base), adj.values()).unwrap();
        assert!((lhs - rhs).abs() <= 1e-9 * (1.0 + rhs.abs()), "{kind:?}: {lhs} vs {rhs}");
    }
}

#[test]
fn directional_derivative_matches_central_difference() {
    let space = FemSpace::new(build_square_mesh(4).unwrap());
    let model = ForwardModel::new(&space, catalog_coefficients()).unwrap();
    let gamma: BoundaryRegion = "bottom".parse().unwrap();
    let flux = FluxTuple::DEFAULT.edge_flux(space.mesh());
    let n = space.node_count();
    let mut rng = Rand::new(21);
    let beta = rng.field(n, 1.0, 3.0);
    let g: Vec<f64> = (0..gamma_len(&space, &gamma)).map(|_| rng.uniform(-1.0, 1.0)).collect();
    let t = 1e-5;
    for _ in 0..3 {
        let kappa = rng.field(n, -1.0, 1.0);
        let solve = |b: &NodalField, kind| {
            let k = model.stiffness(&ScalarCoefficient::Nodal(b.clone())).unwrap();
            match kind {
                StateKind::Neumann => model.neumann(&k, &flux).unwrap(),
                StateKind::Mixed => model.mixed(&k, &flux, &gamma, &g).unwrap(),
            }
        };
        for kind in [StateKind::Neumann, StateKind::Mixed] {
            let k = model.stiffness(&ScalarCoefficient::Nodal(beta.clone())).unwrap();
            let base = solve(&beta, kind);
            let d = model.directional_derivative(&k, &kappa, &base, kind, &gamma).unwrap();
            let fd = solve(&beta.axpy(t, &kappa), kind).sub(&solve(&beta.axpy(-t, &kappa), kind)).scale(0.5 / t);
            let rel = space.l2_norm(&d.sub(&fd)) / space.l2_norm(&fd);
            assert!(rel <= 1e-5, "{kind:?}: relative error {rel}");
        }
    }
}

fn gamma_len(space: &FemSpace, gamma: &BoundaryRegion) -> usize {
    reaction_inverse::mesh::boundary_nodes(space.mesh(), gamma).len()
}

#[test]
fn exact_states_are_finite_and_nonconstant() {
    let space = FemSpace::new(build_square_mesh(16).unwrap());
    let model = ForwardModel::new(&space, catalog_coefficients()).unwrap();
    let k = model.stiffness(&beta_true_coefficient()).unwrap();
    let u = model.neumann(&k, &FluxTuple::DEFAULT.edge_flux(space.mesh())).unwrap();
    assert!(u.values().iter().all(|v| v.is_finite()));
    let (lo, hi) = u.values().iter().fold((f64::MAX, f64::MIN), |a, &v| (a.0.min(v), a.1.max(v)));
    assert!(hi - lo > 0.1);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn stiffness_is_symmetric_positive_definite(seed in any::<u64>(), level in 1usize..6) {
        let space = FemSpace::new(build_square_mesh(level).unwrap());
        let mut rng = Rand::new(seed);
        let n = space.node_count();
        let beta = rng.field(n, 0.05, 10.0);
        let k = assemble_stiffness(&space, &catalog_coefficients().alpha, &ScalarCoefficient::Nodal(beta), &ScalarCoefficient::Constant(0.0)).unwrap();
        let dense = k.to_dense();
        for (i, row) in dense.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                prop_assert!((v - dense[j][i]).abs() <= 1e-14 * (1.0 + v.abs()));
            }
        }
        let x = rng.field(n, -1.0, 1.0);
        let kx = matvec(&k, x.values()).unwrap();
        prop_assert!(dot(x.values(), &kx).unwrap() > 0.0);
    }

    #[test]
    fn neumann_state_is_linear_in_flux(seed in any::<u64>(), a in -3.0f64..3.0) {
        // zero source so the map from flux to state is linear
        let coeffs = unit_coefficients(|_| 0.0);
        let space = FemSpace::new(build_square_mesh(4).unwrap());
        let model = ForwardModel::new(&space, coeffs).unwrap();
        let mut rng = Rand::new(seed);
        let k = model.stiffness(&ScalarCoefficient::Nodal(rng.field(space.node_count(), 0.5, 2.0))).unwrap();
        let m = space.mesh().boundary_edges().len();
        let f1 = EdgeFlux::new((0..m).map(|_| rng.uniform(-1.0, 1.0)).collect());
        let f2 = EdgeFlux::new((0..m).map(|_| rng.uniform(-1.0, 1.0)).collect());
        let combo = EdgeFlux::new(f1.values().iter().zip(f2.values()).map(|(x, y)| x + a * y).collect());
        let u1 = model.neumann(&k, &f1).unwrap();
        let u2 = model.neumann(&k, &f2).unwrap();
        let u = model.neumann(&k, &combo).unwrap();
        prop_assert!(max_abs_diff(u.values(), u1.axpy(a, &u2).values()) < 1e-9);
    }
}
