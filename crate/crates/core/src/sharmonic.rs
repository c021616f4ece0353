//! Steering an s-harmonic profile inside the unit ball by exterior data:
//! fit the free values on a collar `B_R \ B_1` so the s-harmonic extension
//! matches a given resource inside `B_1`; and the local control showing that
//! harmonic functions cannot do the same against a contrast resource.
//!
//! Exterior-data steering is realized constructively as linear least
//! squares: the interior trace is linear in the collar values,
//! `u_in(g) = -A_in^{-1} A_cross g`, so fitting is one SVD.

use nalgebra::{DMatrix, DVector};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg;
use crate::mesh::{ball_nodes, Field, Grid, NodeSet};
use crate::operators;

/// Relative truncation of singular values when fitting without a ridge.
const PSEUDOINVERSE_CUTOFF: f64 = 1e-13;

/// Result of one exterior-data fit.
#[derive(Debug, Clone)]
pub struct SHarmonicFit {
    pub s: f64,
    /// Outer radius `R` of the collar.
    pub r_outer: f64,
    pub grid: Grid,
    pub inner: NodeSet,
    pub collar: NodeSet,
    /// Fitted values on the whole box: the s-harmonic trace inside `B_1`,
    /// the free exterior data on the collar, zero outside `B_R`.
    pub solution: Field,
    /// The resource sampled on the inner nodes (zero elsewhere).
    pub target: Field,
    /// `||u - sigma||_inf` over the inner ball.
    pub misfit_sup: f64,
    /// `||A_in u_in + A_cross g||_inf`; the trace solves the discrete
    /// s-harmonicity system exactly up to the linear solver.
    pub harmonicity_residual: f64,
    /// Ridge actually used (0 means truncated pseudo-inverse).
    pub rho: f64,
}

impl SHarmonicFit {
    /// The adjusted resource `sigma_eps := u`, which the fitted profile
    /// consumes exactly: `(sigma_eps - u) u = 0` identically in `B_1`.
    pub fn sigma_eps(&self) -> Field {
        let mut values = vec![0.0; self.grid.node_count()];
        for &i in self.inner.indices() {
            values[i] = self.solution.values()[i];
        }
        Field::new(&self.grid, values).expect("trace values are finite")
    }
}

fn split_inner_collar(grid: &Grid) -> Result<(NodeSet, Vec<usize>)> {
    let inner = ball_nodes(grid, [0.0, 0.0], 1.0)?;
    let collar: Vec<usize> = (0..grid.node_count())
        .filter(|i| !inner.contains(*i))
        .collect();
    if collar.is_empty() {
        return Err(Error::EmptyRegion);
    }
    Ok((inner, collar))
}

/// Fits exterior data on the collar `B_R \ B_1` so the s-harmonic extension
/// reproduces `sigma` inside `B_1`.
///
/// `rho = None` uses the default ridge `1e-10 * trace-scale` of the normal
/// system; `Some(0.0)` solves by truncated pseudo-inverse (exact recovery of
/// realizable traces). A singular solve is retried once with the default
/// ridge before giving up.
pub fn fit_s_harmonic(
    sigma: impl Fn([f64; 2]) -> f64,
    s: f64,
    r_outer: f64,
    nodes: usize,
    rho: Option<f64>,
) -> Result<SHarmonicFit> {
    assert!(r_outer > 1.0, "the collar needs R > 1");
    let grid = Grid::interval(-r_outer, r_outer, nodes)?;
    fit_s_harmonic_on(&grid, sigma, s, r_outer, rho)
}

/// Same fit on a caller-supplied box grid (1D interval or 2D square of
/// half-width `r_outer`).
pub fn fit_s_harmonic_on(
    grid: &Grid,
    sigma: impl Fn([f64; 2]) -> f64,
    s: f64,
    r_outer: f64,
    rho: Option<f64>,
) -> Result<SHarmonicFit> {
    let (inner, collar) = split_inner_collar(grid)?;
    let op = operators::assemble_fractional(grid, s)?;
    let m = inner.len();
    let c = collar.len();

    let mut a_in = DMatrix::zeros(m, m);
    for (p, &i) in inner.indices().iter().enumerate() {
        for (q, &j) in inner.indices().iter().enumerate() {
            a_in[(p, q)] = op.matrix()[(i, j)];
        }
    }
    let mut a_cross = DMatrix::zeros(m, c);
    for (p, &i) in inner.indices().iter().enumerate() {
        for (q, &j) in collar.iter().enumerate() {
            a_cross[(p, q)] = op.matrix()[(i, j)];
        }
    }
    let factor = linalg::factor_spd(&a_in)?;
    // interior trace as a linear map of the collar values
    let trace_map = -factor.solve_matrix(&a_cross);

    let target = DVector::from_iterator(m, inner.indices().iter().map(|&i| sigma(grid.coord(i))));

    let svd = trace_map.clone().svd(true, true);
    let u_left = svd.u.as_ref().expect("svd with u");
    let v_t = svd.v_t.as_ref().expect("svd with v_t");
    let projected = u_left.tr_mul(&target);
    let s_max = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let trace_scale = svd.singular_values.iter().map(|x| x * x).sum::<f64>() / c as f64;
    let rho_used = rho.unwrap_or(1e-10 * trace_scale);

    let filtered = |rho_eff: f64| -> DVector<f64> {
        let mut coeffs = DVector::zeros(svd.singular_values.len());
        for (k, &sv) in svd.singular_values.iter().enumerate() {
            if rho_eff == 0.0 {
                if sv > PSEUDOINVERSE_CUTOFF * s_max {
                    coeffs[k] = projected[k] / sv;
                }
            } else {
                coeffs[k] = sv * projected[k] / (sv * sv + rho_eff);
            }
        }
        v_t.tr_mul(&coeffs)
    };
    let mut rho_eff = rho_used;
    let mut g = filtered(rho_eff);
    if g.iter().any(|x| !x.is_finite()) {
        rho_eff = 1e-10 * trace_scale.max(f64::MIN_POSITIVE);
        g = filtered(rho_eff);
        if g.iter().any(|x| !x.is_finite()) {
            return Err(Error::SingularLeastSquares { rho: rho_eff });
        }
    }

    // solve the s-harmonicity system directly for the returned trace
    let u_in = factor.solve(&(-(&a_cross * &g)));
    let residual = (&a_in * &u_in + &a_cross * &g)
        .iter()
        .fold(0.0_f64, |acc, v| acc.max(v.abs()));

    let mut solution = vec![0.0; grid.node_count()];
    let mut target_field = vec![0.0; grid.node_count()];
    for (p, &i) in inner.indices().iter().enumerate() {
        solution[i] = u_in[p];
        target_field[i] = target[p];
    }
    for (q, &j) in collar.iter().enumerate() {
        solution[j] = g[q];
    }
    let misfit_sup = (0..m)
        .map(|p| (u_in[p] - target[p]).abs())
        .fold(0.0, f64::max);

    Ok(SHarmonicFit {
        s,
        r_outer,
        grid: grid.clone(),
        inner,
        collar: NodeSet::from_indices(grid, collar),
        solution: Field::new(grid, solution)?,
        target: Field::new(grid, target_field)?,
        misfit_sup,
        harmonicity_residual: residual,
        rho: rho_eff,
    })
}

/// The contrast resource of the local impossibility statement: at least `m`
/// deep inside, at most 1 outside a slightly larger core, smooth ramp between.
pub fn contrast_resource(m: f64) -> impl Fn([f64; 2]) -> f64 {
    move |x: [f64; 2]| {
        let r = (x[0] * x[0] + x[1] * x[1]).sqrt();
        let lo = 1.0 / 16.0;
        let hi = 1.0 / 10.0;
        if r <= lo {
            m
        } else if r >= hi {
            1.0
        } else {
            let t = (r - lo) / (hi - lo);
            1.0 + (m - 1.0) * (1.0 - t * t * (3.0 - 2.0 * t))
        }
    }
}

/// Best sup-misfit of a discrete harmonic function (interior trace of the
/// Dirichlet problem, free boundary values) against `sigma` on `(-1, 1)`.
pub fn harmonic_fit_1d(sigma: impl Fn([f64; 2]) -> f64, nodes: usize) -> Result<f64> {
    let grid = Grid::interval(-1.0, 1.0, nodes)?;
    let op = operators::assemble_classical(&grid);
    let factor = linalg::factor_spd(op.matrix())?;
    let n = grid.node_count();
    let h2 = grid.spacing() * grid.spacing();
    // interior trace columns for unit boundary values
    let mut rhs = DMatrix::zeros(n, 2);
    rhs[(0, 0)] = 2.0 / h2;
    rhs[(n - 1, 1)] = 2.0 / h2;
    let trace = factor.solve_matrix(&rhs);
    let target = DVector::from_iterator(n, (0..n).map(|i| sigma(grid.coord(i))));
    let svd = trace.clone().svd(true, true);
    let b = svd.solve(&target, 1e-12).map_err(|_| Error::SingularLeastSquares { rho: 0.0 })?;
    let fitted = trace * b;
    Ok((0..n).map(|i| (fitted[i] - target[i]).abs()).fold(0.0, f64::max))
}

/// Largest measured ratio `avg_{B_1/4} u / inf_{B_1/8} u` over nonnegative
/// discrete harmonic functions; the constant behind the impossibility bound.
pub fn harnack_quotient(nodes: usize) -> Result<f64> {
    let grid = Grid::interval(-1.0, 1.0, nodes)?;
    let op = operators::assemble_classical(&grid);
    let factor = linalg::factor_spd(op.matrix())?;
    let n = grid.node_count();
    let h2 = grid.spacing() * grid.spacing();
    let quarter = ball_nodes(&grid, [0.0, 0.0], 0.25)?;
    let eighth = ball_nodes(&grid, [0.0, 0.0], 0.125)?;
    let mut worst: f64 = 1.0;
    for k in 0..=20 {
        let t = k as f64 / 20.0;
        for (b_left, b_right) in [(1.0, t), (t, 1.0)] {
            let mut rhs = DVector::zeros(n);
            rhs[0] = 2.0 * b_left / h2;
            rhs[n - 1] = 2.0 * b_right / h2;
            let u = factor.solve(&rhs);
            let avg: f64 = quarter.indices().iter().map(|&i| u[i]).sum::<f64>()
                / quarter.len() as f64;
            let inf = eighth
                .indices()
                .iter()
                .map(|&i| u[i])
                .fold(f64::INFINITY, f64::min);
            if inf > 0.0 {
                worst = worst.max(avg / inf);
            }
        }
    }
    Ok(worst)
}

/// Outcome of the impossibility control: harmonic functions cannot track the
/// contrast resource, the s-harmonic fit can.
#[derive(Debug, Clone, serde::Serialize)]
pub struct ImpossibilityReport {
    pub m: f64,
    pub nodes: usize,
    /// Best harmonic sup-misfit on `(-1, 1)`.
    pub harmonic_misfit: f64,
    /// Sup-misfit of the s-harmonic fit with collar `B_4`.
    pub fractional_misfit: f64,
    pub fractional_order: f64,
    pub harnack_quotient: f64,
}

/// Runs both fits against the contrast resource `sigma_M`.
///
/// The harmonic misfit grows linearly in `m` (Harnack obstruction); the
/// s-harmonic fit does measurably better, though the exterior data required
/// to pin the narrow spike grows beyond what f64 conditioning can deliver,
/// so its misfit stays a fraction of `m` rather than vanishing.
pub fn local_impossibility(m: f64, nodes: usize) -> Result<ImpossibilityReport> {
    assert!(m > 0.0, "contrast must be positive");
    let sigma = contrast_resource(m);
    let harmonic_misfit = harmonic_fit_1d(&sigma, nodes)?;
    let s = 0.5;
    let fit = fit_s_harmonic(&sigma, s, 4.0, nodes, Some(0.0))?;
    Ok(ImpossibilityReport {
        m,
        nodes,
        harmonic_misfit,
        fractional_misfit: fit.misfit_sup,
        fractional_order: s,
        harnack_quotient: harnack_quotient(nodes)?,
    })
}

/// Generates a reference pair for self-consistency tests: random compactly
/// supported exterior data and its exact s-harmonic interior trace.
pub fn random_realizable_trace(
    s: f64,
    r_outer: f64,
    nodes: usize,
    seed: u64,
) -> Result<(Field, Field)> {
    let grid = Grid::interval(-r_outer, r_outer, nodes)?;
    let (inner, collar) = split_inner_collar(&grid)?;
    let op = operators::assemble_fractional(&grid, s)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut exterior = vec![0.0; grid.node_count()];
    for &j in &collar {
        // leave the tail beyond 0.8 R at zero: compact support inside B_R
        if grid.coord(j)[0].abs() < 0.8 * r_outer {
            exterior[j] = rng.gen_range(-1.0..1.0);
        }
    }
    let m = inner.len();
    let mut a_in = DMatrix::zeros(m, m);
    for (p, &i) in inner.indices().iter().enumerate() {
        for (q, &j) in inner.indices().iter().enumerate() {
            a_in[(p, q)] = op.matrix()[(i, j)];
        }
    }
    let mut rhs = DVector::zeros(m);
    for (p, &i) in inner.indices().iter().enumerate() {
        let mut acc = 0.0;
        for &j in &collar {
            acc += op.matrix()[(i, j)] * exterior[j];
        }
        rhs[p] = -acc;
    }
    let u_in = linalg::factor_spd(&a_in)?.solve(&rhs);
    let mut full = exterior.clone();
    let mut trace = vec![0.0; grid.node_count()];
    for (p, &i) in inner.indices().iter().enumerate() {
        full[i] = u_in[p];
        trace[i] = u_in[p];
    }
    Ok((Field::new(&grid, full)?, Field::new(&grid, trace)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_resource_fits_exactly() {
        let fit = fit_s_harmonic(|_| 0.0, 0.5, 2.0, 64, None).unwrap();
        assert_eq!(fit.misfit_sup, 0.0);
        assert_eq!(fit.solution.sup_norm(), 0.0);
    }

    #[test]
    fn realizable_traces_are_recovered() {
        let s = 0.6;
        let r = 2.5;
        let nodes = 128;
        let (reference, trace) = random_realizable_trace(s, r, nodes, 42).unwrap();
        let grid = reference.grid().clone();
        let fit = fit_s_harmonic_on(
            &grid,
            |x| {
                // sample the generated trace at inner nodes
                let i = ((x[0] + r) / grid.spacing() - 0.5).round() as usize;
                trace.values()[i]
            },
            s,
            r,
            Some(0.0),
        )
        .unwrap();
        assert!(
            fit.misfit_sup <= 1e-8 * trace.sup_norm().max(1.0),
            "misfit {}",
            fit.misfit_sup
        );
    }

    #[test]
    fn harmonicity_residual_is_linear_solver_exact() {
        let fit = fit_s_harmonic(|x| 1.0 + 0.5 * x[0] * x[0], 0.5, 3.0, 128, None).unwrap();
        let g_sup = fit
            .collar
            .indices()
            .iter()
            .map(|&j| fit.solution.values()[j].abs())
            .fold(0.0_f64, f64::max);
        assert!(fit.harmonicity_residual <= 1e-10 * g_sup.max(1.0));
    }

    #[test]
    fn consumed_resource_identity_is_exact() {
        let fit = fit_s_harmonic(|x| 1.0 + x[0] * x[0] / 2.0, 0.5, 2.0, 96, None).unwrap();
        let sigma_eps = fit.sigma_eps();
        for &i in fit.inner.indices() {
            let u = fit.solution.values()[i];
            assert_eq!((sigma_eps.values()[i] - u) * u, 0.0);
        }
    }

    #[test]
    fn larger_collars_fit_better() {
        let sigma = |x: [f64; 2]| 1.0 + x[0] * x[0] / 2.0;
        let mut previous = f64::INFINITY;
        for r in [1.5, 3.0, 6.0] {
            let fit = fit_s_harmonic(sigma, 0.5, r, 256, None).unwrap();
            assert!(
                fit.misfit_sup < previous,
                "R = {r}: {} not below {previous}",
                fit.misfit_sup
            );
            previous = fit.misfit_sup;
        }
    }

    #[test]
    fn constant_resource_is_easy_for_the_harmonic_fit() {
        // M = 1 means sigma is the constant 1, an exactly harmonic profile
        let misfit = harmonic_fit_1d(contrast_resource(1.0), 128).unwrap();
        assert!(misfit <= 1e-9);
    }

    #[test]
    fn contrast_beats_every_harmonic_function() {
        let report = local_impossibility(100.0, 256).unwrap();
        assert!(report.harmonic_misfit >= 1.0);
        // measured Harnack chain: avg over B_1/4 of the shifted fit is at
        // least (M-1)/4, the infimum over B_1/8 at most twice the misfit
        let lower = (report.m - 1.0) / (8.0 * report.harnack_quotient);
        assert!(
            report.harmonic_misfit >= lower * 0.99,
            "misfit {} below Harnack bound {lower}",
            report.harmonic_misfit
        );
        // the s-harmonic fit tracks the same resource measurably closer; the
        // exterior data needed to pin the narrow spike grows beyond f64
        // conditioning, so full tracking is out of reach at this precision
        assert!(report.fractional_misfit < 0.6 * report.harmonic_misfit);
    }

    #[test]
    fn two_dimensional_fit_runs() {
        let grid = Grid::rectangle((-2.0, 2.0), (-2.0, 2.0), 20).unwrap();
        let fit = fit_s_harmonic_on(&grid, |x| 1.0 + 0.2 * x[0] - 0.1 * x[1], 0.5, 2.0, None).unwrap();
        assert!(fit.misfit_sup.is_finite());
        let g_sup = fit
            .collar
            .indices()
            .iter()
            .map(|&j| fit.solution.values()[j].abs())
            .fold(0.0_f64, f64::max);
        assert!(fit.harmonicity_residual <= 1e-9 * g_sup.max(1.0));
    }
}
