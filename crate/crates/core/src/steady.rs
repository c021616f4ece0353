//! Non-trivial, non-negative steady states of the scalar logistic equation
//! `A u = (sigma - u) u` with zero exterior data, for `s in (0, 1]`.
//!
//! The solver minimizes the coercive energy
//!
//! ```text
//! E(u) = 1/2 h^n u^T A u - 1/2 int sigma u^2 + 1/3 int |u|^3
//! ```
//!
//! by monotone descent, replacing the iterate by its absolute value each step
//! (the energy never increases under that replacement), then polishes the
//! root with damped Newton. Descent directions are preconditioned by
//! `(A + c I)^{-1}`; a raw gradient step would need `O(h^-2)` iterations to
//! move the smooth modes.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::linalg::{self, SpdFactor};
use crate::mesh::{integrate, Field, Grid};
use crate::operators::{self, OperatorMatrix};
use crate::spectral;

const MAX_DESCENT_ITERATIONS: usize = 4000;
const MAX_NEWTON_ITERATIONS: usize = 40;
const ARMIJO_SLOPE: f64 = 1e-4;

/// Value and decomposition of the steady-state energy.
#[derive(Debug, Clone, serde::Serialize)]
pub struct EnergyReport {
    pub total: f64,
    /// `1/2 h^n u^T A u`, the Dirichlet (s = 1) or Gagliardo (s < 1) part.
    pub diffusion_part: f64,
    /// `-1/2 int sigma u^2`.
    pub resource_part: f64,
    /// `1/3 int |u|^3`.
    pub cubic_part: f64,
    /// `L^2` norm of the Euler-Lagrange residual `A u - (sigma - |u|) u`.
    pub gradient_norm: f64,
}

/// A residual-verified steady state.
#[derive(Debug, Clone)]
pub struct SteadyState {
    pub field: Field,
    /// `||A u - (sigma - u) u||_inf`.
    pub residual: f64,
    /// Residual target actually enforced: `1e-10 max(1, ||sigma||)`, floored
    /// by the floating-point noise of evaluating `A u` at the operator scale
    /// (dominant on strongly rescaled domains, where `||A|| ~ lambda/h^2`).
    pub tolerance: f64,
    pub energy: EnergyReport,
    /// `E < -tol_E`: the state is not the trivial one.
    pub nontrivial: bool,
    pub descent_iterations: usize,
    /// Energy after every accepted descent step; nonincreasing.
    pub energy_trace: Vec<f64>,
}

/// Roundoff floor of the Euler-Lagrange residual: evaluating `A u` cancels
/// terms of size `||A||_inf ||u||_inf`.
fn residual_noise_floor(op: &OperatorMatrix, sigma: &Field, u_sup: f64) -> f64 {
    20.0 * f64::EPSILON * u_sup * (op.inf_norm() + sigma.sup_norm() + u_sup)
}

/// Discrete energy of a field, with its parts.
pub fn energy(grid: &Grid, s: f64, sigma: &Field, u: &Field) -> Result<EnergyReport> {
    let op = operators::assemble(grid, s)?;
    energy_of(&op, sigma, u)
}

fn energy_of(op: &OperatorMatrix, sigma: &Field, u: &Field) -> Result<EnergyReport> {
    let diffusion = 0.5 * op.quadratic_form(u)?;
    let resource = -0.5 * integrate(&u.zip(sigma, |v, s| s * v * v)?);
    let cubic = integrate(&u.map(|v| v.abs().powi(3))) / 3.0;
    let residual_field = euler_lagrange(op, sigma, u)?;
    let gradient_norm = residual_field.l2_norm();
    Ok(EnergyReport {
        total: diffusion + resource + cubic,
        diffusion_part: diffusion,
        resource_part: resource,
        cubic_part: cubic,
        gradient_norm,
    })
}

/// `A u - (sigma - |u|) u`, the Euler-Lagrange residual of the energy.
fn euler_lagrange(op: &OperatorMatrix, sigma: &Field, u: &Field) -> Result<Field> {
    let au = op.apply(u)?;
    au.zip(u, |a, v| a + v.abs() * v)?
        .zip(&u.zip(sigma, |v, s| s * v)?, |l, r| l - r)
}

fn energy_value(op: &OperatorMatrix, sigma: &Field, u: &Field) -> Result<f64> {
    let diffusion = 0.5 * op.quadratic_form(u)?;
    let resource = -0.5 * integrate(&u.zip(sigma, |v, s| s * v * v)?);
    let cubic = integrate(&u.map(|v| v.abs().powi(3))) / 3.0;
    Ok(diffusion + resource + cubic)
}

/// Minimizes the energy and returns a residual-verified steady state.
///
/// The default seed is the reverse-condition witness scaled so the cubic
/// term balances the negative quadratic part; that makes the seed energy
/// strictly negative whenever a nontrivial state exists, steering the
/// descent away from the trivial minimizer. Without the reverse condition
/// the seed is a small multiple of the principal eigenfunction and the
/// descent collapses onto zero.
pub fn minimize_energy(
    grid: &Grid,
    s: f64,
    sigma: &Field,
    seed: Option<&Field>,
) -> Result<SteadyState> {
    if sigma.grid() != grid {
        return Err(Error::GridMismatch);
    }
    let op = operators::assemble(grid, s)?;
    let scale = sigma.sup_norm().max(1.0);
    let residual_tol = 1e-8 * scale;

    let mut u = match seed {
        Some(f) => {
            if f.grid() != grid {
                return Err(Error::GridMismatch);
            }
            f.map(f64::abs)
        }
        None => default_seed(grid, s, sigma)?,
    };

    // descent metric: (A + scale I)^{-1}
    let mut shifted = op.matrix().clone();
    for i in 0..shifted.nrows() {
        shifted[(i, i)] += scale;
    }
    let preconditioner = linalg::factor_spd(&shifted)?;

    let mut trace = vec![energy_value(&op, sigma, &u)?];
    let mut iterations = 0;
    // hand Newton the polishing once the residual is in its basin
    let mut handoff = 1e-2 * scale;

    loop {
        let state = descend(
            &op,
            sigma,
            &preconditioner,
            u,
            handoff.max(residual_tol),
            &mut trace,
            &mut iterations,
        )?;
        u = state;
        match newton_polish(&op, sigma, &u, 1e-10 * scale) {
            Ok(refined) => {
                u = refined;
                break;
            }
            Err(Error::SingularJacobian { .. }) if handoff > residual_tol => {
                // keep descending; the Jacobian turns definite near the root
                handoff /= 100.0;
            }
            Err(e) => return Err(e),
        }
    }

    let residual = euler_lagrange(&op, sigma, &u)?.sup_norm();
    let energy = energy_of(&op, sigma, &u)?;
    let tol_e = 1e-12 * grid.volume();
    let tolerance = (1e-10 * scale).max(residual_noise_floor(&op, sigma, u.sup_norm()));
    Ok(SteadyState {
        nontrivial: energy.total < -tol_e,
        residual,
        tolerance,
        energy,
        field: u,
        descent_iterations: iterations,
        energy_trace: trace,
    })
}

fn default_seed(grid: &Grid, s: f64, sigma: &Field) -> Result<Field> {
    let rc = spectral::reverse_condition(grid, s, sigma)?;
    if rc.holds {
        let cubic = integrate(&rc.witness.map(|v| v.abs().powi(3)));
        let eps = rc.margin / cubic.max(f64::MIN_POSITIVE);
        Ok(rc.witness.map(|v| eps * v.abs()))
    } else {
        let op = operators::assemble(grid, s)?;
        let principal = spectral::principal_eigenpair(&op)?;
        Ok(principal.eigenfunction.map(|v| 1e-3 * v.abs()))
    }
}

fn descend(
    op: &OperatorMatrix,
    sigma: &Field,
    preconditioner: &SpdFactor,
    mut u: Field,
    target: f64,
    trace: &mut Vec<f64>,
    iterations: &mut usize,
) -> Result<Field> {
    let grid = op.grid().clone();
    let hn = grid.cell_volume();
    let mut e_current = energy_value(op, sigma, &u)?;
    while *iterations < MAX_DESCENT_ITERATIONS {
        let gradient = euler_lagrange(op, sigma, &u)?;
        if gradient.sup_norm() < target {
            return Ok(u);
        }
        *iterations += 1;
        let g = DVector::from_column_slice(gradient.values());
        let d = -preconditioner.solve(&g);
        let slope = hn * g.dot(&d); // strictly negative: the metric is SPD
        let direction = Field::new(&grid, d.as_slice().to_vec())?;

        let mut step = 1.0;
        loop {
            let candidate = u.zip(&direction, |a, b| (a + step * b).abs())?;
            let e_candidate = energy_value(op, sigma, &candidate)?;
            if e_candidate <= e_current + ARMIJO_SLOPE * step * slope {
                u = candidate;
                e_current = e_candidate;
                trace.push(e_current);
                break;
            }
            step *= 0.5;
            if step < 1e-14 {
                return Err(Error::DescentStagnation {
                    residual: gradient.sup_norm(),
                    tolerance: target,
                    iterate: u,
                });
            }
        }
    }
    let residual = euler_lagrange(op, sigma, &u)?.sup_norm();
    if residual < target {
        Ok(u)
    } else {
        Err(Error::DescentStagnation {
            residual,
            tolerance: target,
            iterate: u,
        })
    }
}

/// One damped-Newton polishing pass on the root of `F(u) = A u - (sigma-u) u`,
/// with Jacobian `A - diag(sigma - 2u)`. Non-negativity is re-imposed by
/// clipping at zero, and the clipped result must pass the residual check.
pub fn newton_refine(grid: &Grid, s: f64, sigma: &Field, u: &Field) -> Result<SteadyState> {
    let op = operators::assemble(grid, s)?;
    let scale = sigma.sup_norm().max(1.0);
    let refined = newton_polish(&op, sigma, u, 1e-10 * scale)?;
    let residual = euler_lagrange(&op, sigma, &refined)?.sup_norm();
    let energy = energy_of(&op, sigma, &refined)?;
    let tol_e = 1e-12 * grid.volume();
    let tolerance = (1e-10 * scale).max(residual_noise_floor(&op, sigma, refined.sup_norm()));
    Ok(SteadyState {
        nontrivial: energy.total < -tol_e,
        residual,
        tolerance,
        energy,
        field: refined,
        descent_iterations: 0,
        energy_trace: Vec::new(),
    })
}

fn newton_polish(op: &OperatorMatrix, sigma: &Field, start: &Field, target: f64) -> Result<Field> {
    let grid = op.grid().clone();
    let mut u = start.map(|v| v.max(0.0));
    let mut residual = euler_lagrange(op, sigma, &u)?;
    let mut res_norm = residual.l2_norm();
    for _ in 0..MAX_NEWTON_ITERATIONS {
        let target = target.max(residual_noise_floor(op, sigma, u.sup_norm()));
        if residual.sup_norm() < target {
            return Ok(u);
        }
        let mut jac = op.matrix().clone();
        for (i, (&sig, &v)) in sigma.values().iter().zip(u.values()).enumerate() {
            jac[(i, i)] -= sig - 2.0 * v;
        }
        let factor = linalg::factor_spd(&jac).map_err(|_| Error::SingularJacobian {
            residual: residual.sup_norm(),
        })?;
        let delta = -factor.solve(&DVector::from_column_slice(residual.values()));
        let direction = Field::new(&grid, delta.as_slice().to_vec())?;

        let mut step = 1.0;
        loop {
            let candidate = u.zip(&direction, |a, b| (a + step * b).max(0.0))?;
            let cand_residual = euler_lagrange(op, sigma, &candidate)?;
            let cand_norm = cand_residual.l2_norm();
            if cand_norm <= (1.0 - ARMIJO_SLOPE * step) * res_norm {
                u = candidate;
                residual = cand_residual;
                res_norm = cand_norm;
                break;
            }
            step *= 0.5;
            if step < 1e-12 {
                // stalled in roundoff: accept if already at the noise floor
                if residual.sup_norm() < target.max(residual_noise_floor(op, sigma, u.sup_norm()))
                {
                    return Ok(u);
                }
                return Err(Error::SingularJacobian {
                    residual: residual.sup_norm(),
                });
            }
        }
    }
    if residual.sup_norm() < target.max(residual_noise_floor(op, sigma, u.sup_norm())) {
        Ok(u)
    } else {
        Err(Error::SingularJacobian {
            residual: residual.sup_norm(),
        })
    }
}

/// Bound check: the population never beats the resource,
/// `max u <= ||sigma||_inf` up to solver tolerance.
pub fn max_principle_check(state: &SteadyState, sigma: &Field) -> bool {
    let tol = 1e-7 * sigma.sup_norm().max(1.0);
    state.field.max() <= sigma.sup_norm() + tol
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{ball_nodes, Grid};
    use crate::operators::assemble_classical;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn lambda1(grid: &Grid) -> f64 {
        spectral::principal_eigenpair(&assemble_classical(grid))
            .unwrap()
            .eigenvalue
    }

    #[test]
    fn zero_resource_gives_trivial_state() {
        let grid = Grid::interval(-1.0, 1.0, 96).unwrap();
        let sigma = Field::zeros(&grid);
        let state = minimize_energy(&grid, 1.0, &sigma, None).unwrap();
        assert!(!state.nontrivial);
        assert!(state.field.sup_norm() < 1e-8);
        assert!(state.energy.total.abs() < 1e-12);
    }

    #[test]
    fn subcritical_constant_resource_stays_trivial() {
        // oracle: the smallest eigenvalue of A - c I is positive, so the
        // energy is convex near zero and only the trivial minimizer remains
        let grid = Grid::interval(-1.0, 1.0, 96).unwrap();
        let l1 = lambda1(&grid);
        let c = 0.5 * l1;
        let sigma = Field::constant(&grid, c);
        let rc = spectral::reverse_condition(&grid, 1.0, &sigma).unwrap();
        assert!(!rc.holds);
        let state = minimize_energy(&grid, 1.0, &sigma, None).unwrap();
        assert!(!state.nontrivial);
        assert!(state.field.sup_norm() < 1e-7);
    }

    #[test]
    fn supercritical_resource_gives_nontrivial_state() {
        let grid = Grid::interval(-1.0, 1.0, 128).unwrap();
        let l1 = lambda1(&grid);
        let sigma = Field::constant(&grid, 2.0 * l1);
        let state = minimize_energy(&grid, 1.0, &sigma, None).unwrap();
        assert!(state.nontrivial);
        assert!(state.energy.total < 0.0);
        assert!(state.residual <= 1e-8 * sigma.sup_norm().max(1.0));
        assert!(state.field.min() >= 0.0);
        assert!(max_principle_check(&state, &sigma));
        // energy is monotone along the descent
        for w in state.energy_trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-12);
        }
    }

    #[test]
    fn fractional_steady_state() {
        let grid = Grid::interval(-1.0, 1.0, 96).unwrap();
        let s = 0.5;
        let op = operators::assemble_fractional(&grid, s).unwrap();
        let l1 = spectral::principal_eigenpair(&op).unwrap().eigenvalue;
        let sigma = Field::constant(&grid, 3.0 * l1);
        let state = minimize_energy(&grid, s, &sigma, None).unwrap();
        assert!(state.nontrivial);
        assert!(state.residual <= 1e-8 * sigma.sup_norm());
        assert!(state.field.min() >= 0.0);
        assert!(max_principle_check(&state, &sigma));
    }

    #[test]
    fn energy_of_zero_is_zero() {
        let grid = Grid::interval(-1.0, 1.0, 64).unwrap();
        let sigma = Field::constant(&grid, 1.0);
        let rep = energy(&grid, 1.0, &sigma, &Field::zeros(&grid)).unwrap();
        assert_eq!(rep.total, 0.0);
        assert_eq!(rep.diffusion_part, 0.0);
        assert_eq!(rep.cubic_part, 0.0);
    }

    #[test]
    fn energy_decreases_under_absolute_value() {
        let grid = Grid::interval(-1.0, 1.0, 64).unwrap();
        let sigma = Field::from_fn(&grid, |x| 1.0 + x[0] * x[0]);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for s in [0.4, 0.7] {
            for _ in 0..5 {
                let u = Field::from_fn(&grid, |_| rng.gen_range(-1.0..1.0));
                let e_u = energy(&grid, s, &sigma, &u).unwrap().total;
                let e_abs = energy(&grid, s, &sigma, &u.map(f64::abs)).unwrap().total;
                assert!(e_abs <= e_u + 1e-12);
            }
        }
    }

    #[test]
    fn energy_parts_sum_and_epsilon_expansion() {
        let grid = Grid::interval(-1.0, 1.0, 64).unwrap();
        let sigma = Field::from_fn(&grid, |x| 2.0 * (1.0 - x[0] * x[0]));
        let u = Field::from_fn(&grid, |x| (1.0 - x[0] * x[0]).max(0.0));
        let op = assemble_classical(&grid);
        let quad = op.quadratic_form(&u).unwrap();
        let weighted = integrate(&u.zip(&sigma, |v, s| s * v * v).unwrap());
        let cubic = integrate(&u.map(|v| v.powi(3)));
        for eps in [1e-2, 1e-3] {
            let scaled = u.map(|v| eps * v);
            let rep = energy(&grid, 1.0, &sigma, &scaled).unwrap();
            assert!(
                (rep.total - (rep.diffusion_part + rep.resource_part + rep.cubic_part)).abs()
                    <= 1e-15 * rep.total.abs().max(1e-30)
            );
            let formula = eps * eps * (0.5 * quad - 0.5 * weighted + eps * cubic / 3.0);
            assert!((rep.total - formula).abs() <= 1e-8 * formula.abs());
        }
    }

    #[test]
    fn energy_is_coercive_along_rays() {
        let grid = Grid::interval(-1.0, 1.0, 64).unwrap();
        let l1 = lambda1(&grid);
        let sigma = Field::constant(&grid, 2.0 * l1);
        let phi = spectral::principal_eigenpair(&assemble_classical(&grid))
            .unwrap()
            .eigenfunction;
        let mut last = f64::NEG_INFINITY;
        for c in [10.0, 100.0, 1000.0] {
            let e = energy(&grid, 1.0, &sigma, &phi.map(|v| c * v))
                .unwrap()
                .total;
            assert!(e > last);
            last = e;
        }
        assert!(last > 0.0);
    }

    #[test]
    fn second_variation_nonnegative_at_minimizer() {
        let grid = Grid::interval(-1.0, 1.0, 96).unwrap();
        let l1 = lambda1(&grid);
        let sigma = Field::constant(&grid, 2.0 * l1);
        let state = minimize_energy(&grid, 1.0, &sigma, None).unwrap();
        let op = assemble_classical(&grid);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let d = Field::from_fn(&grid, |_| rng.gen_range(-1.0..1.0)).l2_normalized();
            let quad = op.quadratic_form(&d).unwrap();
            let sig_term = integrate(&d.zip(&sigma, |v, s| s * v * v).unwrap());
            let u_term = integrate(
                &d.zip(&state.field, |v, uu| 2.0 * uu * v * v)
                    .unwrap(),
            );
            assert!(quad - sig_term + u_term >= -1e-8);
        }
    }

    #[test]
    fn newton_keeps_exact_roots_fixed() {
        let grid = Grid::interval(-1.0, 1.0, 64).unwrap();
        let sigma = Field::from_fn(&grid, |x| 3.0 * (1.0 - 0.5 * x[0] * x[0]));
        // u = 0 solves exactly; with a failing reverse condition it stays 0
        let weak = Field::constant(&grid, 0.1);
        let state = newton_refine(&grid, 1.0, &weak, &Field::zeros(&grid)).unwrap();
        assert_eq!(state.field.sup_norm(), 0.0);
        // and an exact numerical root passes through unchanged
        let solved = minimize_energy(&grid, 1.0, &sigma, None).unwrap();
        let again = newton_refine(&grid, 1.0, &sigma, &solved.field).unwrap();
        assert_eq!(again.field, solved.field);
    }

    #[test]
    fn newton_contracts_perturbed_roots() {
        let grid = Grid::interval(-1.0, 1.0, 96).unwrap();
        let l1 = lambda1(&grid);
        let sigma = Field::constant(&grid, 2.0 * l1);
        let state = minimize_energy(&grid, 1.0, &sigma, None).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let noise = Field::from_fn(&grid, |_| rng.gen_range(-1.0..1.0));
        let scale = 1e-3 / noise.sup_norm();
        let perturbed = state.field.zip(&noise, |u, n| u + scale * n).unwrap();
        let before = energy(&grid, 1.0, &sigma, &perturbed).unwrap().gradient_norm;
        let refined = newton_refine(&grid, 1.0, &sigma, &perturbed).unwrap();
        let after = refined.energy.gradient_norm;
        assert!(
            after <= before / 1e4,
            "residual only fell from {before:.3e} to {after:.3e}"
        );
    }

    #[test]
    fn bump_resource_respects_max_principle() {
        let grid = Grid::interval(-1.0, 1.0, 128).unwrap();
        let ball = ball_nodes(&grid, [0.0, 0.0], 0.5).unwrap();
        let tau = 12.0;
        let mask = ball.indicator();
        let sigma = mask.map(|m| tau * m);
        let state = minimize_energy(&grid, 1.0, &sigma, None).unwrap();
        assert!(state.nontrivial);
        assert!(state.field.max() <= tau + 1e-6);
        assert!(max_principle_check(&state, &sigma));
        // negative control: an artificially inflated state fails the check
        let violated = SteadyState {
            field: state.field.map(|_| 2.0 * tau),
            ..state.clone()
        };
        assert!(!max_principle_check(&violated, &sigma));
    }
}
