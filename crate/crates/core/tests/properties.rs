//! Property tests of the structural invariants on randomized inputs.

use dispersal_core::dynamics::{comparison_check, Reaction};
use dispersal_core::linalg::{smallest_eigenpair, EigenOptions};
use dispersal_core::operators::{
    assemble_fractional, gagliardo_seminorm_sq, normalization_constant,
};
use dispersal_core::{ball_nodes, integrate, spectral, Field, Grid, NodeSet};
use proptest::prelude::*;

fn small_grid() -> impl Strategy<Value = Grid> {
    (8usize..48, -3.0f64..0.0, 0.5f64..3.0)
        .prop_map(|(n, lo, width)| Grid::interval(lo, lo + width, n).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 16, ..ProptestConfig::default() })]

    #[test]
    fn quadrature_is_linear_and_monotone(
        grid in small_grid(),
        seed in any::<u64>(),
        a in -2.0f64..2.0,
        b in -2.0f64..2.0,
    ) {
        use rand::prelude::*;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let f = Field::from_fn(&grid, |_| rng.gen_range(-1.0..1.0));
        let g = Field::from_fn(&grid, |_| rng.gen_range(-1.0..1.0));
        let combo = f.zip(&g, |x, y| a * x + b * y).unwrap();
        let lhs = integrate(&combo);
        let rhs = a * integrate(&f) + b * integrate(&g);
        prop_assert!((lhs - rhs).abs() <= 1e-12 * (lhs.abs() + rhs.abs() + 1.0));

        let above = f.map(|x| x + 0.25);
        prop_assert!(integrate(&above) >= integrate(&f));
    }

    #[test]
    fn balls_grow_with_the_radius(
        n in 16usize..96,
        x0 in -0.5f64..0.5,
        r1 in 0.05f64..0.2,
        dr in 0.0f64..0.2,
    ) {
        let grid = Grid::interval(-1.0, 1.0, n).unwrap();
        let r2 = r1 + dr;
        if let (Ok(small), Ok(large)) = (
            ball_nodes(&grid, [x0, 0.0], r1),
            ball_nodes(&grid, [x0, 0.0], r2),
        ) {
            prop_assert!(small.indices().iter().all(|i| large.contains(*i)));
        }
    }

    #[test]
    fn node_ordering_is_a_pure_function(
        n in 8usize..64,
        lo in -4.0f64..0.0,
        width in 0.1f64..5.0,
    ) {
        let a = Grid::interval(lo, lo + width, n).unwrap();
        let b = Grid::interval(lo, lo + width, n).unwrap();
        prop_assert_eq!(a.node_count(), b.node_count());
        for i in 0..a.node_count() {
            prop_assert_eq!(a.coord(i), b.coord(i));
        }
    }

    #[test]
    fn seminorm_matches_the_quadratic_form(
        s in 0.15f64..0.95,
        seed in any::<u64>(),
    ) {
        use rand::prelude::*;
        let grid = Grid::interval(-1.0, 1.0, 24).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let u = Field::from_fn(&grid, |_| rng.gen_range(-1.0..1.0));
        let op = assemble_fractional(&grid, s).unwrap();
        let c = normalization_constant(1, s);
        let semi = gagliardo_seminorm_sq(&grid, s, &u).unwrap();
        let quad = op.quadratic_form(&u).unwrap();
        prop_assert!(semi > 0.0);
        prop_assert!((c / 2.0 * semi - quad).abs() <= 1e-10 * (c / 2.0 * semi));
    }

    #[test]
    fn assembled_matrices_are_m_matrices(
        s in 0.15f64..0.95,
        n in 8usize..40,
    ) {
        let grid = Grid::interval(-1.0, 1.0, n).unwrap();
        let op = assemble_fractional(&grid, s).unwrap();
        let m = op.matrix();
        for i in 0..m.nrows() {
            prop_assert!(m[(i, i)] > 0.0);
            let off: f64 = (0..m.ncols()).filter(|&j| j != i).map(|j| m[(i, j)]).sum();
            prop_assert!(m[(i, j_max(m, i))] <= 0.0 || m.ncols() == 1);
            // strict diagonal dominance through the exterior tail
            prop_assert!(m[(i, i)] + off > 0.0);
        }
        // positive definiteness: the smallest eigenvalue is positive
        let pair = smallest_eigenpair(m, EigenOptions::default()).unwrap();
        prop_assert!(pair.lambda > 0.0);
    }

    #[test]
    fn excess_is_monotone_and_lipschitz(
        t1 in 0.0f64..12.0,
        t2 in 0.0f64..12.0,
        r in 0.15f64..0.6,
    ) {
        let grid = Grid::interval(-1.0, 1.0, 32).unwrap();
        let ball = ball_nodes(&grid, [0.0, 0.0], r).unwrap();
        let (lo, hi) = (t1.min(t2), t1.max(t2));
        let e_lo = spectral::excess(&grid, lo, &ball).unwrap();
        let e_hi = spectral::excess(&grid, hi, &ball).unwrap();
        prop_assert!(e_hi - e_lo >= -1e-9);
        prop_assert!(e_hi - e_lo <= (hi - lo) + 1e-9);
    }

    #[test]
    fn comparison_principle_on_ordered_pairs(
        seed in any::<u64>(),
        s in 0.3f64..0.9,
    ) {
        use rand::prelude::*;
        let grid = Grid::interval(-1.0, 1.0, 24).unwrap();
        let sigma = Field::from_fn(&grid, |x| 1.5 * (1.0 - x[0] * x[0]));
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let lower = Field::from_fn(&grid, |_| rng.gen_range(0.0..0.6));
        let upper = lower.map(|v| v + 0.2);
        let reaction = Reaction::Logistic { sigma };
        let dt = 0.9 / (4.0 * (1.5 + 2.0 * (2.0 * (upper.sup_norm() + lower.sup_norm()) + 1.0) + 1.0));
        prop_assert!(comparison_check(&upper, &lower, &reaction, s, 0.3, dt).unwrap());
    }

    #[test]
    fn whole_domain_excess_shifts_the_spectrum(tau in 0.0f64..10.0) {
        let grid = Grid::interval(-1.0, 1.0, 24).unwrap();
        let whole = NodeSet::whole_domain(&grid);
        let op = dispersal_core::assemble_classical(&grid);
        let l1 = spectral::principal_eigenpair(&op).unwrap().eigenvalue;
        let e = spectral::excess(&grid, tau, &whole).unwrap();
        prop_assert!((e - (tau - l1)).abs() <= 1e-7 * (1.0 + tau + l1));
    }
}

fn j_max(m: &nalgebra::DMatrix<f64>, i: usize) -> usize {
    // most negative off-diagonal entry of the row (nearest neighbor)
    let mut best = if i == 0 { 1 } else { 0 };
    for j in 0..m.ncols() {
        if j != i && m[(i, j)] < m[(i, best)] {
            best = j;
        }
    }
    best
}
