//! The two concrete instability constructions, wired end to end: the
//! rescaled family on a shrinking domain, and characteristic-function
//! resources driven down to the branching threshold.

use crate::error::{Error, Result};
use crate::mesh::{ball_nodes, integrate, Field, Grid, NodeSet};
use crate::spectral::{self, BranchingCurve, TauStarEstimate};
use crate::stability::{self, MismatchCertificate};
use crate::steady::{self, SteadyState};

/// Parameters of a named construction, echoed into reports as JSON.
#[derive(Debug, Clone, serde::Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ScenarioSpec {
    Rescaled {
        lambda: f64,
        s: f64,
        nodes: usize,
    },
    Bump {
        tau: f64,
        x0: [f64; 2],
        r: f64,
        s: f64,
        s_prime: f64,
        nodes: usize,
    },
}

impl ScenarioSpec {
    /// Structural invariants of a well-formed scenario.
    pub fn is_valid(&self) -> bool {
        match self {
            ScenarioSpec::Rescaled { lambda, s, .. } => *lambda >= 1.0 && *s > 0.0 && *s < 1.0,
            ScenarioSpec::Bump {
                tau, r, s, s_prime, ..
            } => *tau > 0.0 && *r > 0.0 && *s > 0.0 && *s < *s_prime && *s_prime < 1.0,
        }
    }
}

/// Shrinks the domain by `1/sqrt(lambda)` and intensifies the resource by
/// `lambda`, the exact correspondence `sigma_lambda(x) = lambda sigma(sqrt(lambda) x)`
/// on the matched node set.
pub fn rescaled_family(base_sigma: &Field, lambda: f64) -> Result<(Grid, Field)> {
    assert!(lambda >= 1.0, "the rescaled family needs lambda >= 1");
    let base = base_sigma.grid();
    let root = lambda.sqrt();
    let bounds: Vec<(f64, f64)> = (0..base.dim())
        .map(|a| (base.lower()[a] / root, base.upper()[a] / root))
        .collect();
    let grid = crate::mesh::build_grid(&bounds, base.nodes_per_axis())?;
    let sigma = Field::new(&grid, base_sigma.values().iter().map(|&v| lambda * v).collect())?;
    Ok((grid, sigma))
}

/// Maps a field through the same correspondence, `lambda * values` on the
/// shrunk grid; a residual-verified steady state stays one, with residual
/// scaled by `lambda^2`.
pub fn rescale_onto(grid: &Grid, field: &Field, lambda: f64) -> Result<Field> {
    if field.len() != grid.node_count() {
        return Err(Error::FieldLength {
            expected: grid.node_count(),
            got: field.len(),
        });
    }
    Field::new(grid, field.values().iter().map(|&v| lambda * v).collect())
}

/// The intensity beyond which the rescaled pair is mismatched:
/// `Lambda = (c0 r^{2s} C_sharp(s, B_1))^{-1/(1-s)}`, clamped to `>= 1`.
pub fn rescaled_instability_threshold(c0: f64, r: f64, s: f64, c_sharp_unit: f64) -> Result<f64> {
    if c0 <= 0.0 {
        return Err(Error::NoGap { c0 });
    }
    let product = c0 * r.powf(2.0 * s) * c_sharp_unit;
    Ok(product.powf(-1.0 / (1.0 - s)).max(1.0))
}

/// Characteristic-function resource `tau` on the ball, zero elsewhere.
pub fn bump_resource(grid: &Grid, tau: f64, x0: [f64; 2], r: f64) -> Result<Field> {
    assert!(tau >= 0.0, "bump intensity must be nonnegative");
    let ball = ball_nodes(grid, x0, r)?;
    Ok(ball.indicator().map(|m| tau * m))
}

/// Everything the rescaled construction produces.
#[derive(Debug, Clone)]
pub struct RescaledScenario {
    /// Resource gap of the base pair on the chosen ball.
    pub c0: f64,
    /// Ball `(x0, r)` realizing the gap on the base domain.
    pub base_center: [f64; 2],
    pub base_radius: f64,
    /// `Lambda` from the threshold formula.
    pub lambda_threshold: f64,
    /// Intensity actually used (`factor * Lambda`).
    pub lambda: f64,
    pub grid: Grid,
    pub sigma: Field,
    pub state: SteadyState,
    pub ball: NodeSet,
    pub certificate: MismatchCertificate,
    /// Principal eigenvalues of the (u, v) diagonal blocks at the state.
    pub block_pair: (f64, f64),
}

impl RescaledScenario {
    pub fn spec(&self) -> ScenarioSpec {
        ScenarioSpec::Rescaled {
            lambda: self.lambda,
            s: self.certificate.s,
            nodes: self.grid.nodes_per_axis(),
        }
    }
}

/// Runs the rescaled construction: solve the base state, find the gap ball,
/// rescale past the instability threshold, re-verify the mapped state, and
/// certify the mismatch on the mapped ball.
pub fn rescaled_scenario(
    base_grid: &Grid,
    base_sigma: &Field,
    s: f64,
    factor: f64,
) -> Result<RescaledScenario> {
    assert!(factor >= 1.0, "intensity factor must be >= 1");
    let base_state = steady::minimize_energy(base_grid, 1.0, base_sigma, None)?;

    // the gap ball: mismatch-scan geometry with threshold zero
    let candidates = stability::candidate_balls(base_grid);
    let mut best: Option<(f64, &NodeSet)> = None;
    for ball in &candidates {
        let gap = ball
            .indices()
            .iter()
            .map(|&i| base_sigma.values()[i] - base_state.field.values()[i])
            .fold(f64::INFINITY, f64::min);
        if best.is_none_or(|(g, _)| gap > g) {
            best = Some((gap, ball));
        }
    }
    let (c0, gap_ball) = best.ok_or(Error::NoCandidateBall)?;
    let (x0, r) = gap_ball.geometry().ok_or(Error::NoCandidateBall)?;
    if c0 <= 0.0 {
        return Err(Error::NoGap { c0 });
    }

    let c_sharp = stability::unit_ball_reference(base_grid.dim(), s)?;
    let lambda_threshold = rescaled_instability_threshold(c0, r, s, c_sharp)?;
    let lambda = factor * lambda_threshold;

    let (grid, sigma) = rescaled_family(base_sigma, lambda)?;
    let seed = rescale_onto(&grid, &base_state.field, lambda)?;
    // the mapped state solves the mapped equation exactly; one Newton pass
    // brings the residual back to the tolerance of the new scale
    let state = steady::newton_refine(&grid, 1.0, &sigma, &seed)?;

    let root = lambda.sqrt();
    let ball = ball_nodes(&grid, [x0[0] / root, x0[1] / root], r / root)?;
    let certificate = stability::instability_certificate(&grid, s, &sigma, &state.field, &ball)?;
    let block_pair = stability::block_eigenvalues(&grid, s, &sigma, &state.field)?;
    Ok(RescaledScenario {
        c0,
        base_center: x0,
        base_radius: r,
        lambda_threshold,
        lambda,
        grid,
        sigma,
        state,
        ball,
        certificate,
        block_pair,
    })
}

/// One row of the branching sweep.
#[derive(Debug, Clone, serde::Serialize)]
pub struct SweepRow {
    pub tau: f64,
    pub sup_u: f64,
    pub l2_u: f64,
    /// `int u^3 = ||u||^3_{L^3}`.
    pub l3_cubed: f64,
    /// `e(tau, x0, r)`.
    pub excess: f64,
    pub gap: f64,
    pub threshold: f64,
    pub nontrivial: bool,
    pub certified: bool,
}

/// Full record of the bump-resource sweep toward the branching threshold.
#[derive(Debug, Clone)]
pub struct SweepReport {
    pub x0: [f64; 2],
    pub r: f64,
    pub s: f64,
    pub s_prime: f64,
    pub taubar: BranchingCurve,
    pub tau_star: TauStarEstimate,
    /// Admissibility bound on `r` from the measured `tau_star`:
    /// `r < (C_sharp(s,B_1) tau_star / 2)^{1/(2(s'-s))}`.
    pub r_bound: f64,
    pub r_admissible: bool,
    pub rows: Vec<SweepRow>,
    /// Smallest tau in the list whose certificate is satisfied.
    pub certified_tau: Option<f64>,
    pub certificate: Option<MismatchCertificate>,
    pub certified_state: Option<SteadyState>,
}

impl SweepReport {
    /// Descriptor of the certified scenario, when the sweep produced one.
    pub fn spec(&self, nodes: usize) -> Option<ScenarioSpec> {
        self.certified_tau.map(|tau| ScenarioSpec::Bump {
            tau,
            x0: self.x0,
            r: self.r,
            s: self.s,
            s_prime: self.s_prime,
            nodes,
        })
    }
}

/// The geometric approach `tau_k = taubar (1 + 2^{-k})`, `k = 0..=k_max`,
/// sorted descending toward the threshold.
pub fn geometric_tau_list(taubar: f64, k_max: usize) -> Vec<f64> {
    (0..=k_max)
        .map(|k| taubar * (1.0 + 0.5f64.powi(k as i32)))
        .collect()
}

/// Dyadic radii `width / 2^k` that fit around `x0` with at least four
/// spacings of resolution.
pub fn dyadic_radii(grid: &Grid, x0: [f64; 2]) -> Vec<f64> {
    let mut radii = Vec::new();
    for k in 1..=8 {
        let r = grid.width() / (1 << k) as f64;
        if r < 4.0 * grid.spacing() {
            break;
        }
        if ball_nodes(grid, x0, r).is_ok() {
            radii.push(r);
        }
    }
    radii
}

/// Sweeps bump intensities down toward the branching threshold: solves the
/// local steady state at each `tau` (warm-started along the branch), records
/// norms, excess and certificate data, and returns the smallest certified
/// intensity.
pub fn branching_sweep(
    grid: &Grid,
    s: f64,
    s_prime: f64,
    x0: [f64; 2],
    r: f64,
    tau_list: &[f64],
    bisection_tol: f64,
) -> Result<SweepReport> {
    let ball = ball_nodes(grid, x0, r)?;
    let mut taubar = spectral::branching_threshold(grid, &ball, bisection_tol)?;
    let tau_star = spectral::tau_star_proxy(grid, x0, s_prime, &dyadic_radii(grid, x0), bisection_tol)?;
    // the scaling lower bound taubar >= r^{-2s'} tau_star, reported not asserted
    taubar.reference_bound = Some(r.powf(-2.0 * s_prime) * tau_star.value);
    let c_sharp = stability::unit_ball_reference(grid.dim(), s)?;
    let r_bound = (c_sharp * tau_star.value / 2.0).powf(1.0 / (2.0 * (s_prime - s)));
    let r_admissible = r < r_bound;

    let mut taus: Vec<f64> = tau_list.to_vec();
    taus.sort_by(|a, b| b.total_cmp(a));

    let mut rows = Vec::new();
    let mut warm: Option<Field> = None;
    let mut best: Option<(f64, SteadyState)> = None;
    let mut any_nontrivial = false;
    for &tau in &taus {
        let sigma = bump_resource(grid, tau, x0, r)?;
        let state = steady::minimize_energy(grid, 1.0, &sigma, warm.as_ref())?;
        let gap = tau
            - ball
                .indices()
                .iter()
                .map(|&i| state.field.values()[i])
                .fold(f64::NEG_INFINITY, f64::max);
        let threshold = 1.0 / spectral::scaled_poincare(c_sharp, r, s);
        let excess = spectral::excess(grid, tau, &ball)?;
        let certified = state.nontrivial && gap > threshold;
        rows.push(SweepRow {
            tau,
            sup_u: state.field.sup_norm(),
            l2_u: state.field.l2_norm(),
            l3_cubed: integrate(&state.field.map(|v| v.abs().powi(3))),
            excess,
            gap,
            threshold,
            nontrivial: state.nontrivial,
            certified,
        });
        any_nontrivial |= state.nontrivial;
        if state.nontrivial {
            warm = Some(state.field.clone());
        }
        if certified {
            best = Some((tau, state));
        }
    }
    if !any_nontrivial {
        return Err(Error::SweepAllTrivial);
    }

    let (certified_tau, certificate, certified_state) = match best {
        Some((tau, state)) => {
            let sigma = bump_resource(grid, tau, x0, r)?;
            let cert = stability::instability_certificate(grid, s, &sigma, &state.field, &ball)?;
            (Some(tau), Some(cert), Some(state))
        }
        None => (None, None, None),
    };
    Ok(SweepReport {
        x0,
        r,
        s,
        s_prime,
        taubar,
        tau_star,
        r_bound,
        r_admissible,
        rows,
        certified_tau,
        certificate,
        certified_state,
    })
}
