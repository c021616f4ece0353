//! Semi-implicit (IMEX) time integration of the coupled system
//!
//! ```text
//! u_t =        Delta u  + (sigma - (u+v)) u
//! v_t = -(-Delta)^s v   + (sigma - (u+v)) v
//! ```
//!
//! diffusion implicit, reaction explicit. Under the reaction-Lipschitz bound
//! `dt <= 1 / (2 (||sigma|| + ||u|| + ||v||) + 1)` the explicit factor stays
//! positive and the M-matrix solves preserve sign and ordering; the bound is
//! enforced, not advisory.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::linalg::{self, SpdFactor};
use crate::mesh::{Field, Grid};
use crate::operators;
use crate::steady;

/// Densities of both populations at one time.
#[derive(Debug, Clone)]
pub struct SystemState {
    pub t: f64,
    pub u: Field,
    pub v: Field,
}

/// Per-step diagnostics.
#[derive(Debug, Clone, serde::Serialize)]
pub struct TrajectorySample {
    pub t: f64,
    pub l2_u: f64,
    pub l2_v: f64,
    pub min_u: f64,
    pub max_u: f64,
    pub min_v: f64,
    pub max_v: f64,
    pub energy_u: f64,
}

/// Time history: full states by copy at sample instants, diagnostics at
/// every step.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub states: Vec<SystemState>,
    pub diagnostics: Vec<TrajectorySample>,
}

/// Largest admissible step for the current fields.
pub fn admissible_dt(sigma: &Field, u: &Field, v: &Field) -> f64 {
    1.0 / (2.0 * (sigma.sup_norm() + u.sup_norm() + v.sup_norm()) + 1.0)
}

/// IMEX stepper with cached factorizations of `I + dt A_1` and `I + dt A_s`.
pub struct Stepper {
    grid: Grid,
    s: f64,
    dt: f64,
    factor_u: SpdFactor,
    factor_v: SpdFactor,
}

impl Stepper {
    pub fn new(grid: &Grid, s: f64, dt: f64) -> Result<Self> {
        assert!(dt > 0.0, "time step must be positive");
        let a1 = operators::assemble_classical(grid);
        let a_s = operators::assemble(grid, s)?;
        let implicit = |m: &nalgebra::DMatrix<f64>| {
            let mut out = m.clone();
            out *= dt;
            for i in 0..out.nrows() {
                out[(i, i)] += 1.0;
            }
            out
        };
        Ok(Stepper {
            grid: grid.clone(),
            s,
            dt,
            factor_u: linalg::factor_spd(&implicit(a1.matrix()))?,
            factor_v: linalg::factor_spd(&implicit(a_s.matrix()))?,
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn order(&self) -> f64 {
        self.s
    }

    /// One IMEX step; rejects the step if the reaction-Lipschitz bound fails
    /// for the current fields.
    pub fn step(&self, state: &SystemState, sigma: &Field) -> Result<SystemState> {
        if state.u.grid() != &self.grid || state.v.grid() != &self.grid {
            return Err(Error::GridMismatch);
        }
        let admissible = admissible_dt(sigma, &state.u, &state.v);
        if self.dt > admissible {
            return Err(Error::DtTooLarge {
                dt: self.dt,
                admissible,
            });
        }
        let total = state.u.zip(&state.v, |a, b| a + b)?;
        let growth = sigma.zip(&total, |sg, t| sg - t)?;
        let rhs_u = state.u.zip(&growth, |uu, g| uu * (1.0 + self.dt * g))?;
        let rhs_v = state.v.zip(&growth, |vv, g| vv * (1.0 + self.dt * g))?;
        let u_next = self
            .factor_u
            .solve(&DVector::from_column_slice(rhs_u.values()));
        let v_next = self
            .factor_v
            .solve(&DVector::from_column_slice(rhs_v.values()));
        Ok(SystemState {
            t: state.t + self.dt,
            u: Field::new(&self.grid, u_next.as_slice().to_vec())?,
            v: Field::new(&self.grid, v_next.as_slice().to_vec())?,
        })
    }
}

/// One-shot step without a cached stepper.
pub fn step(state: &SystemState, sigma: &Field, s: f64, dt: f64) -> Result<SystemState> {
    Stepper::new(state.u.grid(), s, dt)?.step(state, sigma)
}

/// Integrates the coupled system to `t_final`, sampling every
/// `sample_every` steps (diagnostics are recorded at every step).
///
/// Aborts if either component exceeds ten times the resource scale, which a
/// correct scheme cannot produce from admissible steps.
pub fn simulate(
    u0: &Field,
    v0: &Field,
    sigma: &Field,
    s: f64,
    t_final: f64,
    dt: f64,
    sample_every: usize,
) -> Result<Trajectory> {
    let grid = u0.grid().clone();
    let stepper = Stepper::new(&grid, s, dt)?;
    let a1 = operators::assemble_classical(&grid);
    let guard = 10.0 * (sigma.sup_norm() + 1.0);
    let sample_every = sample_every.max(1);

    let mut state = SystemState {
        t: 0.0,
        u: u0.clone(),
        v: v0.clone(),
    };
    let diag = |state: &SystemState| -> Result<TrajectorySample> {
        Ok(TrajectorySample {
            t: state.t,
            l2_u: state.u.l2_norm(),
            l2_v: state.v.l2_norm(),
            min_u: state.u.min(),
            max_u: state.u.max(),
            min_v: state.v.min(),
            max_v: state.v.max(),
            energy_u: 0.5 * a1.quadratic_form(&state.u)?
                - 0.5 * crate::mesh::integrate(&state.u.zip(sigma, |uu, sg| sg * uu * uu)?)
                + crate::mesh::integrate(&state.u.map(|x| x.abs().powi(3))) / 3.0,
        })
    };

    let steps = (t_final / dt).ceil() as usize;
    let mut trajectory = Trajectory {
        states: vec![state.clone()],
        diagnostics: vec![diag(&state)?],
    };
    for k in 1..=steps {
        state = stepper.step(&state, sigma)?;
        let sup = state.u.sup_norm().max(state.v.sup_norm());
        if sup > guard {
            return Err(Error::BlowUp {
                t: state.t,
                sup,
                guard,
            });
        }
        trajectory.diagnostics.push(diag(&state)?);
        if k % sample_every == 0 || k == steps {
            trajectory.states.push(state.clone());
        }
    }
    Ok(trajectory)
}

/// Outcome of seeding an invader `eps v_star` on top of the resident state.
#[derive(Debug, Clone, serde::Serialize)]
pub struct InvasionReport {
    /// `d/dt log ||v||^2` over the first ten steps.
    pub initial_rate: f64,
    pub positive: bool,
    pub eps: f64,
    pub dt: f64,
    /// `(t, ||v||_L2)` at every step up to `t_final`.
    pub l2_history: Vec<(f64, f64)>,
}

/// Follows the invasion of a small nonlocal population `eps v_star` released
/// on the resident steady state; the initial growth rate of `||v||^2` tracks
/// twice the principal eigenvalue of the v-block as `eps -> 0`.
pub fn invasion_experiment(
    u_tilde: &Field,
    v_star: &Field,
    eps: f64,
    sigma: &Field,
    s: f64,
    t_final: f64,
) -> Result<InvasionReport> {
    assert!(eps > 0.0 && eps <= 1e-2, "eps must lie in (0, 1e-2]");
    let v0 = v_star.map(|x| eps * x);
    let dt = 0.5 * admissible_dt(sigma, u_tilde, &v0);
    let t_final = t_final.max(11.0 * dt);
    let trajectory = simulate(u_tilde, &v0, sigma, s, t_final, dt, 1)?;
    let l2_history: Vec<(f64, f64)> = trajectory
        .diagnostics
        .iter()
        .map(|d| (d.t, d.l2_v))
        .collect();
    let k = 10.min(l2_history.len() - 1);
    let rate = (l2_history[k].1.powi(2).ln() - l2_history[0].1.powi(2).ln()) / (k as f64 * dt);
    Ok(InvasionReport {
        initial_rate: rate,
        positive: rate > 0.0,
        eps,
        dt,
        l2_history,
    })
}

/// Reaction term of the scalar equation `v_t + (-Delta)^s v + f(v) = 0`.
#[derive(Debug, Clone)]
pub enum Reaction {
    /// Logistic uptake `f(v) = -(sigma - v) v`.
    Logistic { sigma: Field },
    /// `f(v) = rate * v`.
    Linear { rate: f64 },
}

impl Reaction {
    fn apply(&self, v: &Field) -> Result<Field> {
        match self {
            Reaction::Logistic { sigma } => v.zip(sigma, |x, sg| -(sg - x) * x),
            Reaction::Linear { rate } => Ok(v.map(|x| rate * x)),
        }
    }

    /// Lipschitz bound of `f` on `|v| <= range`.
    fn lipschitz(&self, range: f64) -> f64 {
        match self {
            Reaction::Logistic { sigma } => sigma.sup_norm() + 2.0 * range,
            Reaction::Linear { rate } => rate.abs(),
        }
    }
}

/// Evolves two ordered initial states under the same scalar scheme and
/// checks that the ordering survives: the discrete comparison principle.
///
/// Requires `v0 >= w0` pointwise and `dt <= 1 / (4 (M + 1))` for the
/// Lipschitz bound `M` of the reaction on the solution range; ordering is
/// checked at every step up to the roundoff allowance `10 dt^2 (1+M) T`.
pub fn comparison_check(
    v0: &Field,
    w0: &Field,
    reaction: &Reaction,
    s: f64,
    t_final: f64,
    dt: f64,
) -> Result<bool> {
    let grid = v0.grid().clone();
    if w0.grid() != &grid {
        return Err(Error::GridMismatch);
    }
    for (i, (&a, &b)) in v0.values().iter().zip(w0.values()).enumerate() {
        if a < b {
            return Err(Error::NotOrdered { node: i });
        }
    }
    let range = 2.0 * (v0.sup_norm() + w0.sup_norm()) + 1.0;
    let lipschitz = reaction.lipschitz(range);
    let admissible = 1.0 / (4.0 * (lipschitz + 1.0));
    if dt > admissible {
        return Err(Error::DtTooLarge { dt, admissible });
    }
    let a_s = operators::assemble(&grid, s)?;
    let implicit = {
        let mut m = a_s.matrix().clone();
        m *= dt;
        for i in 0..m.nrows() {
            m[(i, i)] += 1.0;
        }
        linalg::factor_spd(&m)?
    };
    let advance = |x: &Field| -> Result<Field> {
        let fx = reaction.apply(x)?;
        let rhs = x.zip(&fx, |a, b| a - dt * b)?;
        let next = implicit.solve(&DVector::from_column_slice(rhs.values()));
        Field::new(&grid, next.as_slice().to_vec())
    };

    let tol = 10.0 * dt * dt * (1.0 + lipschitz) * t_final;
    let steps = (t_final / dt).ceil() as usize;
    let mut v = v0.clone();
    let mut w = w0.clone();
    for k in 0..steps {
        v = advance(&v)?;
        w = advance(&w)?;
        if v.sup_norm().max(w.sup_norm()) > range {
            return Err(Error::BlowUp {
                t: (k + 1) as f64 * dt,
                sup: v.sup_norm().max(w.sup_norm()),
                guard: range,
            });
        }
        let ordered = v
            .values()
            .iter()
            .zip(w.values())
            .all(|(&a, &b)| a >= b - tol);
        if !ordered {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Equilibrium-preservation bound: a steady state with residual `res`
/// drifts at most `res * T` under the scheme.
pub fn equilibrium_drift_bound(state: &steady::SteadyState, t_final: f64) -> f64 {
    state.residual * t_final
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::ball_nodes;
    use crate::spectral;
    use crate::stability;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn origin_is_an_equilibrium() {
        let grid = Grid::interval(-1.0, 1.0, 32).unwrap();
        let sigma = Field::constant(&grid, 2.0);
        let z = Field::zeros(&grid);
        let traj = simulate(&z, &z, &sigma, 0.5, 0.5, 0.05, 2).unwrap();
        for d in &traj.diagnostics {
            assert_eq!(d.max_u, 0.0);
            assert_eq!(d.max_v, 0.0);
        }
    }

    #[test]
    fn oversized_step_is_rejected_with_the_bound() {
        let grid = Grid::interval(-1.0, 1.0, 32).unwrap();
        let sigma = Field::constant(&grid, 4.0);
        let state = SystemState {
            t: 0.0,
            u: Field::constant(&grid, 1.0),
            v: Field::zeros(&grid),
        };
        let err = step(&state, &sigma, 0.5, 0.2).unwrap_err();
        match err {
            Error::DtTooLarge { admissible, .. } => {
                assert!((admissible - 1.0 / 11.0).abs() < 1e-12);
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn pure_dissipation_decays_in_l2() {
        let grid = Grid::interval(-1.0, 1.0, 64).unwrap();
        let sigma = Field::zeros(&grid);
        let u0 = Field::from_fn(&grid, |x| (1.0 - x[0] * x[0]).max(0.0));
        let v0 = Field::from_fn(&grid, |x| 0.5 * (1.0 + (3.0 * x[0]).sin().powi(2)) * (1.0 - x[0].abs()).max(0.0));
        let traj = simulate(&u0, &v0, &sigma, 0.5, 1.0, 0.05, 1).unwrap();
        for w in traj.diagnostics.windows(2) {
            assert!(w[1].l2_u < w[0].l2_u);
            assert!(w[1].l2_v < w[0].l2_v);
        }
    }

    #[test]
    fn first_step_dissipation_matches_scheme_algebra() {
        // oracle: with sigma = 0, d/dt ||u||^2 at step one is negative by the
        // scheme's own algebra: u1 = (I + dt A)^{-1}(u0 - dt u0^2)
        let grid = Grid::interval(-1.0, 1.0, 64).unwrap();
        let sigma = Field::zeros(&grid);
        let u0 = Field::from_fn(&grid, |x| (1.0 - x[0] * x[0]).max(0.0));
        let traj = simulate(&u0, &Field::zeros(&grid), &sigma, 0.5, 0.1, 0.02, 1).unwrap();
        let d0 = &traj.diagnostics[0];
        let d1 = &traj.diagnostics[1];
        assert!(d1.l2_u < d0.l2_u);
    }

    #[test]
    fn nonnegativity_is_preserved() {
        let grid = Grid::interval(-1.0, 1.0, 64).unwrap();
        let sigma = Field::from_fn(&grid, |x| 3.0 * (1.0 - x[0] * x[0]));
        let u0 = Field::from_fn(&grid, |x| (0.5 - x[0]).abs().min(1.0));
        let v0 = Field::from_fn(&grid, |x| (1.0 - x[0] * x[0]).max(0.0));
        let traj = simulate(&u0, &v0, &sigma, 0.5, 1.0, 0.04, 1).unwrap();
        for d in &traj.diagnostics {
            assert!(d.min_u >= -1e-14);
            assert!(d.min_v >= -1e-14);
        }
    }

    #[test]
    fn steady_states_are_preserved() {
        let grid = Grid::interval(-1.0, 1.0, 96).unwrap();
        let l1 = spectral::principal_eigenpair(&operators::assemble_classical(&grid))
            .unwrap()
            .eigenvalue;
        let sigma = Field::constant(&grid, 2.0 * l1);
        // local steady state in the u slot
        let state = steady::minimize_energy(&grid, 1.0, &sigma, None).unwrap();
        let traj = simulate(
            &state.field,
            &Field::zeros(&grid),
            &sigma,
            0.5,
            1.0,
            0.02,
            10,
        )
        .unwrap();
        let last = traj.states.last().unwrap();
        let drift = last.u.zip(&state.field, |a, b| a - b).unwrap().sup_norm();
        // oracle: the scheme moves a residual-res state by at most res * T
        let bound = equilibrium_drift_bound(&state, 1.0);
        assert!(bound <= 1e-6);
        assert!(drift <= bound.max(1e-12), "drift {drift} vs bound {bound}");
        assert_eq!(last.v.sup_norm(), 0.0);

        // fractional steady state in the v slot
        let s = 0.5;
        let op = operators::assemble_fractional(&grid, s).unwrap();
        let l1s = spectral::principal_eigenpair(&op).unwrap().eigenvalue;
        let sigma_s = Field::constant(&grid, 3.0 * l1s);
        let vstate = steady::minimize_energy(&grid, s, &sigma_s, None).unwrap();
        let traj2 = simulate(
            &Field::zeros(&grid),
            &vstate.field,
            &sigma_s,
            s,
            1.0,
            0.02,
            10,
        )
        .unwrap();
        let last2 = traj2.states.last().unwrap();
        let drift2 = last2.v.zip(&vstate.field, |a, b| a - b).unwrap().sup_norm();
        assert!(drift2 <= 1e-6, "drift {drift2}");
    }

    #[test]
    fn invasion_grows_at_certified_scenarios_and_decays_without_resource() {
        let grid = Grid::interval(-1.0, 1.0, 96).unwrap();
        let s = 0.4;
        let ball = ball_nodes(&grid, [0.0, 0.0], 0.45).unwrap();
        let curve = spectral::branching_threshold(&grid, &ball, 1e-5).unwrap();
        let tau = 1.05 * curve.threshold;
        let sigma = ball.indicator().map(|m| tau * m);
        let state = steady::minimize_energy(&grid, 1.0, &sigma, None).unwrap();
        let cert = stability::instability_certificate(&grid, s, &sigma, &state.field, &ball).unwrap();
        assert!(cert.satisfied);

        let report =
            invasion_experiment(&state.field, &cert.witness, 1e-4, &sigma, s, 0.2).unwrap();
        assert!(report.positive, "rate {}", report.initial_rate);
        assert_eq!(report.initial_rate > 0.0, cert.lambda > 0.0);

        // linear regime: halving eps moves the rate by little
        let report2 =
            invasion_experiment(&state.field, &cert.witness, 5e-5, &sigma, s, 0.2).unwrap();
        let rel = (report2.initial_rate - report.initial_rate).abs() / report.initial_rate.abs();
        assert!(rel < 0.05, "rates {} vs {}", report.initial_rate, report2.initial_rate);

        // without resource the invader dies
        let zero = Field::zeros(&grid);
        let trivial = Field::zeros(&grid);
        let decay = invasion_experiment(&trivial, &cert.witness, 1e-4, &zero, s, 0.2).unwrap();
        assert!(!decay.positive);
    }

    #[test]
    fn comparison_holds_for_ordered_logistic_pairs() {
        let grid = Grid::interval(-1.0, 1.0, 48).unwrap();
        let sigma = Field::from_fn(&grid, |x| 2.0 * (1.0 - x[0] * x[0]));
        let reaction = Reaction::Logistic {
            sigma: sigma.clone(),
        };
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..10 {
            let base = Field::from_fn(&grid, |_| rng.gen_range(0.0..0.8));
            let bump = Field::from_fn(&grid, |_| rng.gen_range(0.0..0.4));
            let v0 = base.zip(&bump, |a, b| a + b).unwrap();
            let m = reaction.lipschitz(2.0 * (v0.sup_norm() + base.sup_norm()) + 1.0);
            let dt = 0.9 / (4.0 * (m + 1.0));
            assert!(comparison_check(&v0, &base, &reaction, 0.5, 0.5, dt).unwrap());
        }
    }

    #[test]
    fn comparison_rejects_unordered_data() {
        let grid = Grid::interval(-1.0, 1.0, 32).unwrap();
        let v0 = Field::zeros(&grid);
        let w0 = Field::constant(&grid, 0.1);
        let reaction = Reaction::Linear { rate: 0.5 };
        assert!(matches!(
            comparison_check(&v0, &w0, &reaction, 0.5, 0.1, 0.01),
            Err(Error::NotOrdered { .. })
        ));
    }

    #[test]
    fn comparison_gap_follows_the_linear_oracle() {
        // v0 = w0 + c with linear reaction: the gap is the scheme applied to
        // the constant field; its projection on the principal mode contracts
        // by ((1 - rate dt)/(1 + dt lambda))^k exactly
        let grid = Grid::interval(-1.0, 1.0, 64).unwrap();
        let s = 0.5;
        let rate = 0.3;
        let c = 0.2;
        let w0 = Field::from_fn(&grid, |x| 0.3 * (1.0 - x[0] * x[0]).max(0.0));
        let v0 = w0.map(|x| x + c);
        let reaction = Reaction::Linear { rate };
        let dt = 0.9 / (4.0 * (rate + 1.0));
        assert!(comparison_check(&v0, &w0, &reaction, s, 1.0, dt).unwrap());

        // evolve the gap directly and compare its principal projection
        let op = operators::assemble_fractional(&grid, s).unwrap();
        let pair = spectral::principal_eigenpair(&op).unwrap();
        let mut m = op.matrix().clone();
        m *= dt;
        for i in 0..m.nrows() {
            m[(i, i)] += 1.0;
        }
        let factor = linalg::factor_spd(&m).unwrap();
        let mut gap = Field::constant(&grid, c);
        let steps = (1.0 / dt).ceil() as usize;
        for _ in 0..steps {
            let rhs = gap.map(|x| x * (1.0 - dt * rate));
            let next = factor.solve(&DVector::from_column_slice(rhs.values()));
            gap = Field::new(&grid, next.as_slice().to_vec()).unwrap();
        }
        let project = |f: &Field| {
            crate::mesh::integrate(&f.zip(&pair.eigenfunction, |a, b| a * b).unwrap())
        };
        let predicted = project(&Field::constant(&grid, c))
            * ((1.0 - rate * dt) / (1.0 + dt * pair.eigenvalue)).powi(steps as i32);
        let actual = project(&gap);
        assert!(
            (actual - predicted).abs() <= 1e-6 * predicted.abs(),
            "projection {actual} vs oracle {predicted}"
        );
        assert!(gap.min() > 0.0);
    }
}
