//! Principal eigenpairs, sharp Poincare-Sobolev constants, reverse-condition
//! checks, and the branching machinery `e(tau, x0, r)`, `taubar(x0, r)`.
//!
//! Mass convention: the quadrature mass is the uniform factor `h^n`, so every
//! Rayleigh quotient reduces to an ordinary matrix eigenproblem and the
//! matrix eigenvalues approximate the continuum ones directly.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::{self, EigenOptions};
use crate::mesh::{ball_nodes, Field, Grid, NodeSet};
use crate::operators::{self, OperatorMatrix};

/// Safety cap for the bracket expansion in [`branching_threshold`].
const BRACKET_CAP: f64 = 1e8;

/// Principal eigenvalue, normalized eigenfunction and solver diagnostics.
#[derive(Debug, Clone)]
pub struct EigenReport {
    pub eigenvalue: f64,
    /// Eigenfunction with `L^2(Omega)` norm 1, sign-normalized so that the
    /// dominant component is positive (Perron structure of M-matrices).
    pub eigenfunction: Field,
    /// `||A phi - lambda phi|| / max(||lambda phi||, floor)` with a floor tied
    /// to the matrix scale, so near-zero eigenvalues still report cleanly.
    pub residual: f64,
    pub iterations: usize,
}

fn eigen_report(matrix: &DMatrix<f64>, grid: &Grid, opts: EigenOptions) -> Result<EigenReport> {
    let pair = linalg::smallest_eigenpair(matrix, opts)?;
    let mut values = pair.vector.as_slice().to_vec();
    // sign-normalize on the dominant component
    let dominant = values
        .iter()
        .cloned()
        .max_by(|a, b| a.abs().total_cmp(&b.abs()))
        .unwrap_or(1.0);
    let flip = if dominant < 0.0 { -1.0 } else { 1.0 };
    let scale = flip / grid.cell_volume().sqrt();
    for v in &mut values {
        *v *= scale;
    }
    Ok(EigenReport {
        eigenvalue: pair.lambda,
        eigenfunction: Field::new(grid, values)?,
        residual: pair.residual,
        iterations: pair.iterations,
    })
}

/// Smallest eigenpair of an assembled operator (so the principal eigenpair
/// of the generator `-A`), by inverse iteration.
pub fn principal_eigenpair(op: &OperatorMatrix) -> Result<EigenReport> {
    eigen_report(op.matrix(), op.grid(), EigenOptions::default())
}

/// Smallest eigenpair of the operator restricted to a node set, extended by
/// zero to the whole grid. Restriction to the principal submatrix is exactly
/// the zero-extension convention.
pub fn principal_eigenpair_on(op: &OperatorMatrix, region: &NodeSet) -> Result<EigenReport> {
    let sub = op.restricted(region)?;
    let pair = linalg::smallest_eigenpair(&sub, EigenOptions::default())?;
    let grid = op.grid();
    let mut values = vec![0.0; grid.node_count()];
    let dominant = pair
        .vector
        .iter()
        .cloned()
        .max_by(|a, b| a.abs().total_cmp(&b.abs()))
        .unwrap_or(1.0);
    let flip = if dominant < 0.0 { -1.0 } else { 1.0 };
    let scale = flip / grid.cell_volume().sqrt();
    for (k, &i) in region.indices().iter().enumerate() {
        values[i] = pair.vector[k] * scale;
    }
    Ok(EigenReport {
        eigenvalue: pair.lambda,
        eigenfunction: Field::new(grid, values)?,
        residual: pair.residual,
        iterations: pair.iterations,
    })
}

/// Sharp Poincare-Sobolev constant `C_sharp(s, region) = 1 / lambda_1` of the
/// operator restricted to the region (defaults to the whole box).
pub fn poincare_constant(grid: &Grid, s: f64, region: Option<&NodeSet>) -> Result<f64> {
    let op = operators::assemble(grid, s)?;
    let lambda = match region {
        None => linalg::smallest_eigenpair(op.matrix(), EigenOptions::default())?.lambda,
        Some(set) => {
            let sub = op.restricted(set)?;
            linalg::smallest_eigenpair(&sub, EigenOptions::default())?.lambda
        }
    };
    Ok(1.0 / lambda)
}

/// Exact scaling of the sharp constant to a ball of radius `r`:
/// `C_sharp(s, B_r) = r^{2s} C_sharp(s, B_1)`.
pub fn scaled_poincare(c_ref_unit_ball: f64, r: f64, s: f64) -> f64 {
    r.powf(2.0 * s) * c_ref_unit_ball
}

/// Outcome of the reverse Poincare-Sobolev test for a resource.
#[derive(Debug, Clone)]
pub struct ReverseConditionReport {
    /// Whether some test function gains more from the resource than it pays
    /// in diffusion energy.
    pub holds: bool,
    /// Optimal test function, `L^2`-normalized and nonnegative.
    pub witness: Field,
    /// `int sigma w^2 - energy(w)`; positive exactly when the condition holds.
    pub margin: f64,
    /// Smallest eigenvalue of `A - diag(sigma)`; `margin = -nu`.
    pub nu: f64,
    /// The easier sufficient check tested on the principal eigenfunction:
    /// `lambda_1 int phi^2 < int sigma phi^2`. Implies `holds`, not conversely.
    pub sufficient_check: bool,
}

/// Tests the reverse (fractional) Poincare-Sobolev condition for `sigma >= 0`.
pub fn reverse_condition(grid: &Grid, s: f64, sigma: &Field) -> Result<ReverseConditionReport> {
    if sigma.grid() != grid {
        return Err(Error::GridMismatch);
    }
    let op = operators::assemble(grid, s)?;
    let mut shifted = op.matrix().clone();
    for (i, &sig) in sigma.values().iter().enumerate() {
        shifted[(i, i)] -= sig;
    }
    // the smallest eigenvalue can sit at zero when sigma is marginal
    let opts = EigenOptions::with_zero_scale(10.0 * (1.0 + sigma.sup_norm()));
    let report = eigen_report(&shifted, grid, opts)?;
    let nu = report.eigenvalue;

    let principal = principal_eigenpair(&op)?;
    let phi = &principal.eigenfunction;
    let weighted = crate::mesh::integrate(&phi.zip(sigma, |p, s| s * p * p)?);
    let sufficient = principal.eigenvalue < weighted;

    Ok(ReverseConditionReport {
        holds: nu < 0.0,
        witness: report.eigenfunction,
        margin: -nu,
        nu,
        sufficient_check: sufficient,
    })
}

fn shifted_by_mask(a: &DMatrix<f64>, tau: f64, ball: &NodeSet) -> DMatrix<f64> {
    let mut m = a.clone();
    for &i in ball.indices() {
        m[(i, i)] -= tau;
    }
    m
}

fn excess_of(a1: &DMatrix<f64>, tau: f64, ball: &NodeSet) -> Result<f64> {
    let shifted = shifted_by_mask(a1, tau, ball);
    // near the branching threshold the smallest eigenvalue crosses zero
    let opts = EigenOptions::with_zero_scale(10.0 * (1.0 + tau.abs()));
    Ok(-linalg::smallest_eigenpair(&shifted, opts)?.lambda)
}

/// Excess `e(tau, x0, r) = sup { tau int_B u^2 - int |grad u|^2 : ||u||_2 = 1 }`,
/// the negative of the smallest eigenvalue of `A_1 - tau diag(chi_B)`.
pub fn excess(grid: &Grid, tau: f64, ball: &NodeSet) -> Result<f64> {
    if ball.grid() != grid {
        return Err(Error::GridMismatch);
    }
    let a1 = operators::assemble_classical(grid);
    excess_of(a1.matrix(), tau, ball)
}

/// Branching threshold data: excess samples and the bisected `taubar`.
#[derive(Debug, Clone, serde::Serialize)]
pub struct BranchingCurve {
    /// Generating ball `(x0, r)` when the region is one.
    pub center: Option<[f64; 2]>,
    pub radius: Option<f64>,
    /// `(tau, e(tau))` samples from the bracket search, sorted by tau.
    pub samples: Vec<(f64, f64)>,
    /// Estimated `taubar(x0, r)`.
    pub threshold: f64,
    /// Final bisection bracket `(lo, hi)`, `hi - lo <= tolerance`.
    pub bracket: (f64, f64),
    pub tolerance: f64,
    /// `e(taubar + tol) <= 2 tol`: the excess is continuous at the threshold.
    pub continuity_ok: bool,
    /// `r^{-2s'} tau_star` when a scaling reference was attached.
    pub reference_bound: Option<f64>,
}

/// Bisects `e(tau)` for the threshold `taubar = sup { tau : e(tau) <= 0 }`.
///
/// The initial bracket is `[0, tau_hi]` with `tau_hi` doubled until the
/// excess turns positive; finiteness of the threshold guarantees the
/// expansion terminates (a hard cap guards against misuse).
pub fn branching_threshold(grid: &Grid, ball: &NodeSet, tol: f64) -> Result<BranchingCurve> {
    assert!(tol > 0.0, "bisection tolerance must be positive");
    if ball.grid() != grid {
        return Err(Error::GridMismatch);
    }
    let a1 = operators::assemble_classical(grid);
    let mut samples = Vec::new();
    let mut eval = |tau: f64| -> Result<f64> {
        let e = excess_of(a1.matrix(), tau, ball)?;
        samples.push((tau, e));
        Ok(e)
    };

    let mut lo = 0.0;
    let mut e_lo = eval(0.0)?;
    let mut hi = 1.0;
    let mut e_hi = eval(hi)?;
    while e_hi <= 0.0 {
        lo = hi;
        e_lo = e_hi;
        hi *= 2.0;
        if hi > BRACKET_CAP {
            return Err(Error::BracketCap { cap: BRACKET_CAP });
        }
        e_hi = eval(hi)?;
    }
    debug_assert!(e_lo <= 0.0 && e_hi > 0.0);
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        let e_mid = eval(mid)?;
        if e_mid <= 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let threshold = 0.5 * (lo + hi);
    let continuity_ok = eval(threshold + tol)? <= 2.0 * tol;
    samples.sort_by(|a, b| a.0.total_cmp(&b.0));
    let (center, radius) = match ball.geometry() {
        Some((c, r)) => (Some(c), Some(r)),
        None => (None, None),
    };
    Ok(BranchingCurve {
        center,
        radius,
        samples,
        threshold,
        bracket: (lo, hi),
        tolerance: tol,
        continuity_ok,
        reference_bound: None,
    })
}

/// Empirical stand-in for the scaling constant `tau_star(s', Omega)`:
/// the infimum of `taubar(x0, r) r^{2s'}` over a sweep of radii.
#[derive(Debug, Clone, serde::Serialize)]
pub struct TauStarEstimate {
    pub s_prime: f64,
    pub value: f64,
    /// `(r, taubar(x0, r))` per swept radius.
    pub samples: Vec<(f64, f64)>,
}

/// Measures `tau_star` on a dyadic radius sweep around `x0`.
pub fn tau_star_proxy(
    grid: &Grid,
    x0: [f64; 2],
    s_prime: f64,
    radii: &[f64],
    tol: f64,
) -> Result<TauStarEstimate> {
    let mut samples = Vec::new();
    let mut value = f64::INFINITY;
    for &r in radii {
        let ball = ball_nodes(grid, x0, r)?;
        let curve = branching_threshold(grid, &ball, tol)?;
        samples.push((r, curve.threshold));
        value = value.min(curve.threshold * r.powf(2.0 * s_prime));
    }
    if samples.is_empty() {
        return Err(Error::NoCandidateBall);
    }
    Ok(TauStarEstimate {
        s_prime,
        value,
        samples,
    })
}
