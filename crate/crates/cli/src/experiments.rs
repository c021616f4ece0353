//! Experiment dispatch: each named experiment runs its module pipeline,
//! writes the declared CSV/JSON artifacts, and reports key numbers plus
//! pass flags for the exit status.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{anyhow, Context};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use dispersal_core::acceptance::{self, AcceptanceConfig};
use dispersal_core::dynamics::{self, Reaction};
use dispersal_core::mesh::{ball_nodes, Field};
use dispersal_core::{operators, report, scenarios, sharmonic, spectral, stability, steady};

use crate::config::{Experiment, ExperimentConfig};

/// Outcome of one run: ordered key numbers and pass flags.
#[derive(Debug, Default)]
pub struct RunOutcome {
    pub numbers: BTreeMap<String, f64>,
    pub passes: BTreeMap<String, bool>,
}

impl RunOutcome {
    fn number(&mut self, key: &str, value: f64) {
        self.numbers.insert(key.to_string(), value);
    }

    fn pass(&mut self, key: &str, value: bool) {
        self.passes.insert(key.to_string(), value);
    }

    pub fn all_passed(&self) -> bool {
        self.passes.values().all(|&v| v)
    }
}

fn err(e: dispersal_core::Error) -> anyhow::Error {
    anyhow!("{e}")
}

fn ball_center(config: &ExperimentConfig) -> [f64; 2] {
    match &config.center {
        Some(c) => [*c.first().unwrap_or(&0.0), *c.get(1).unwrap_or(&0.0)],
        None => [0.0, 0.0],
    }
}

fn ball_radius(config: &ExperimentConfig, grid: &dispersal_core::Grid) -> f64 {
    config.radius.unwrap_or_else(|| {
        let max_k = (grid.width() / (4.0 * grid.spacing())).log2().floor() as i32;
        grid.width() / (1 << max_k.clamp(1, 6)) as f64
    })
}

pub fn run(config: &ExperimentConfig, out: &Path) -> anyhow::Result<RunOutcome> {
    match config.experiment {
        Experiment::Eigen => run_eigen(config, out),
        Experiment::Steady => run_steady(config, out),
        Experiment::Mismatch => run_mismatch(config, out),
        Experiment::Rescaled => run_rescaled(config, out),
        Experiment::Branching => run_branching(config, out),
        Experiment::Invasion => run_invasion(config, out),
        Experiment::Comparison => run_comparison(config, out),
        Experiment::Sharmonic => run_sharmonic(config, out),
        Experiment::Impossibility => run_impossibility(config, out),
        Experiment::Acceptance => run_acceptance(config, out),
    }
}

fn run_eigen(config: &ExperimentConfig, out: &Path) -> anyhow::Result<RunOutcome> {
    let grid = config.build_grid()?;
    let op = operators::assemble(&grid, config.s).map_err(err)?;
    let pair = spectral::principal_eigenpair(&op).map_err(err)?;
    report::write_field_csv(
        &out.join("eigenfunction.csv"),
        &pair.eigenfunction,
        &[
            ("s", format!("{}", config.s)),
            ("eigenvalue", format!("{:.17e}", pair.eigenvalue)),
        ],
    )
    .map_err(err)?;
    let mut outcome = RunOutcome::default();
    outcome.number("lambda1", pair.eigenvalue);
    outcome.number("c_sharp", 1.0 / pair.eigenvalue);
    outcome.number("residual", pair.residual);
    outcome.number("iterations", pair.iterations as f64);
    outcome.pass("eigen_residual", pair.residual <= 1e-10);
    outcome.pass("eigenfunction_nonnegative", pair.eigenfunction.min() >= -1e-12);
    Ok(outcome)
}

fn run_steady(config: &ExperimentConfig, out: &Path) -> anyhow::Result<RunOutcome> {
    let grid = config.build_grid()?;
    let sigma = config.build_sigma(&grid)?;
    let state = steady::minimize_energy(&grid, config.s, &sigma, None).map_err(err)?;
    report::write_steady_csv(
        &out.join("steady.csv"),
        &state,
        config.s,
        &config.sigma.describe(),
    )
    .map_err(err)?;
    let mut outcome = RunOutcome::default();
    outcome.number("residual", state.residual);
    outcome.number("tolerance", state.tolerance);
    outcome.number("energy", state.energy.total);
    outcome.number("sup_u", state.field.sup_norm());
    outcome.number("nontrivial", state.nontrivial as i64 as f64);
    outcome.pass("residual_within_tolerance", state.residual <= state.tolerance);
    outcome.pass("nonnegative", state.field.min() >= 0.0);
    outcome.pass(
        "max_principle",
        steady::max_principle_check(&state, &sigma),
    );
    Ok(outcome)
}

fn run_mismatch(config: &ExperimentConfig, out: &Path) -> anyhow::Result<RunOutcome> {
    let grid = config.build_grid()?;
    let sigma = config.build_sigma(&grid)?;
    let state = steady::minimize_energy(&grid, 1.0, &sigma, None).map_err(err)?;
    let candidates = stability::candidate_balls(&grid);
    let cert =
        stability::mismatch_scan(&grid, config.s, &sigma, &state.field, &candidates).map_err(err)?;
    report::write_certificate_json(&out.join("certificate.json"), &cert).map_err(err)?;
    report::write_steady_csv(
        &out.join("steady.csv"),
        &state,
        1.0,
        &config.sigma.describe(),
    )
    .map_err(err)?;
    let mut outcome = RunOutcome::default();
    outcome.number("gap", cert.gap);
    outcome.number("threshold", cert.threshold);
    outcome.number("Q", cert.q_value);
    outcome.number("lambda", cert.lambda);
    outcome.number("satisfied", cert.satisfied as i64 as f64);
    // the scan itself cannot fail its contract; certified scans must carry a
    // positive witness form and eigenvalue
    outcome.pass(
        "certificate_consistent",
        !cert.satisfied || (cert.q_value > 0.0 && cert.lambda > 0.0),
    );
    Ok(outcome)
}

fn run_rescaled(config: &ExperimentConfig, out: &Path) -> anyhow::Result<RunOutcome> {
    let grid = config.build_grid()?;
    let sigma = config.build_sigma(&grid)?;
    let factor = config.lambda_factor.unwrap_or(2.0);
    let scenario = scenarios::rescaled_scenario(&grid, &sigma, config.s, factor).map_err(err)?;
    report::write_certificate_json(&out.join("certificate.json"), &scenario.certificate)
        .map_err(err)?;
    let file = std::fs::File::create(out.join("scenario.json"))?;
    serde_json::to_writer_pretty(file, &scenario.spec())?;
    report::write_steady_csv(
        &out.join("rescaled_steady.csv"),
        &scenario.state,
        1.0,
        &format!("rescaled lambda={}", scenario.lambda),
    )
    .map_err(err)?;
    let mut outcome = RunOutcome::default();
    outcome.number("c0", scenario.c0);
    outcome.number("lambda_threshold", scenario.lambda_threshold);
    outcome.number("lambda", scenario.lambda);
    outcome.number("gap", scenario.certificate.gap);
    outcome.number("threshold", scenario.certificate.threshold);
    outcome.number("Q", scenario.certificate.q_value);
    outcome.number("lambda_u", scenario.block_pair.0);
    outcome.number("lambda_v", scenario.block_pair.1);
    outcome.pass("mismatch_satisfied", scenario.certificate.satisfied);
    outcome.pass("witness_form_positive", scenario.certificate.q_value > 0.0);
    outcome.pass(
        "sign_pair",
        scenario.block_pair.0 < 0.0 && scenario.block_pair.1 > 0.0,
    );
    Ok(outcome)
}

fn run_branching(config: &ExperimentConfig, out: &Path) -> anyhow::Result<RunOutcome> {
    let grid = config.build_grid()?;
    let x0 = ball_center(config);
    let r = ball_radius(config, &grid);
    let ball = ball_nodes(&grid, x0, r).map_err(err)?;
    let lambda1 = spectral::principal_eigenpair(&operators::assemble_classical(&grid))
        .map_err(err)?
        .eigenvalue;
    let tol = config.tolerances.bisection * lambda1;
    let curve = spectral::branching_threshold(&grid, &ball, tol).map_err(err)?;
    let taus = config
        .tau_list
        .clone()
        .unwrap_or_else(|| scenarios::geometric_tau_list(curve.threshold, 6));
    let sweep =
        scenarios::branching_sweep(&grid, config.s, config.s_prime(), x0, r, &taus, tol)
            .map_err(err)?;
    report::write_branching_csv(&out.join("branching_curve.csv"), &curve, Some(config.s_prime()))
        .map_err(err)?;
    report::write_sweep_csv(&out.join("sweep.csv"), &sweep).map_err(err)?;
    if let Some(cert) = &sweep.certificate {
        report::write_certificate_json(&out.join("certificate.json"), cert).map_err(err)?;
    }
    if let Some(spec) = sweep.spec(config.grid.n) {
        let file = std::fs::File::create(out.join("scenario.json"))?;
        serde_json::to_writer_pretty(file, &spec)?;
    }
    let mut outcome = RunOutcome::default();
    outcome.number("taubar", sweep.taubar.threshold);
    outcome.number("tau_star", sweep.tau_star.value);
    outcome.number("r", r);
    outcome.number("r_bound", sweep.r_bound);
    outcome.number("r_admissible", sweep.r_admissible as i64 as f64);
    if let Some(tau) = sweep.certified_tau {
        outcome.number("certified_tau", tau);
    }
    outcome.pass("some_tau_certified", sweep.certified_tau.is_some());
    outcome.pass(
        "sup_monotone_toward_threshold",
        sweep
            .rows
            .windows(2)
            .all(|w| w[0].sup_u >= w[1].sup_u - 1e-12),
    );
    Ok(outcome)
}

fn run_invasion(config: &ExperimentConfig, out: &Path) -> anyhow::Result<RunOutcome> {
    let grid = config.build_grid()?;
    let x0 = ball_center(config);
    let r = ball_radius(config, &grid);
    let ball = ball_nodes(&grid, x0, r).map_err(err)?;
    let lambda1 = spectral::principal_eigenpair(&operators::assemble_classical(&grid))
        .map_err(err)?
        .eigenvalue;
    let curve =
        spectral::branching_threshold(&grid, &ball, config.tolerances.bisection * lambda1)
            .map_err(err)?;
    let tau = 1.05 * curve.threshold;
    let sigma = scenarios::bump_resource(&grid, tau, x0, r).map_err(err)?;
    let state = steady::minimize_energy(&grid, 1.0, &sigma, None).map_err(err)?;
    let cert =
        stability::instability_certificate(&grid, config.s, &sigma, &state.field, &ball)
            .map_err(err)?;
    let eps = config.eps.unwrap_or(1e-4);
    let t_final = config.t_final.unwrap_or(0.1);
    let invasion =
        dynamics::invasion_experiment(&state.field, &cert.witness, eps, &sigma, config.s, t_final)
            .map_err(err)?;
    report::write_certificate_json(&out.join("certificate.json"), &cert).map_err(err)?;
    let mut w = std::fs::File::create(out.join("invasion.csv"))?;
    use std::io::Write;
    writeln!(w, "t,L2_v")?;
    for (t, l2) in &invasion.l2_history {
        writeln!(w, "{t:.17e},{l2:.17e}")?;
    }
    let mut outcome = RunOutcome::default();
    outcome.number("tau", tau);
    outcome.number("rate", invasion.initial_rate);
    outcome.number("lambda", cert.lambda);
    outcome.number("eps", eps);
    outcome.pass("scenario_certified", cert.satisfied);
    outcome.pass(
        "rate_sign_matches_lambda",
        (invasion.initial_rate > 0.0) == (cert.lambda > 0.0),
    );
    Ok(outcome)
}

fn run_comparison(config: &ExperimentConfig, _out: &Path) -> anyhow::Result<RunOutcome> {
    let grid = config.build_grid()?;
    let sigma = config.build_sigma(&grid)?;
    let reaction = Reaction::Logistic {
        sigma: sigma.clone(),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let t_final = config.t_final.unwrap_or(0.25);
    let mut all = true;
    for _ in 0..10 {
        let lower = Field::from_fn(&grid, |_| rng.gen_range(0.0..0.8));
        let bump = Field::from_fn(&grid, |_| rng.gen_range(0.0..0.4));
        let upper = lower.zip(&bump, |a, b| a + b).map_err(err)?;
        let lipschitz = sigma.sup_norm() + 2.0 * (2.0 * (upper.sup_norm() + lower.sup_norm()) + 1.0);
        let dt = config
            .dt
            .unwrap_or(0.9 / (4.0 * (lipschitz + 1.0)))
            .min(1.0 / (4.0 * (lipschitz + 1.0)));
        if !dynamics::comparison_check(&upper, &lower, &reaction, config.s, t_final, dt)
            .map_err(err)?
        {
            all = false;
            break;
        }
    }
    let mut outcome = RunOutcome::default();
    outcome.number("pairs", 10.0);
    outcome.pass("ordering_preserved", all);
    Ok(outcome)
}

fn run_sharmonic(config: &ExperimentConfig, out: &Path) -> anyhow::Result<RunOutcome> {
    let grid = config.build_grid()?;
    let sigma = config.build_sigma(&grid)?;
    // sample the configured resource through the grid it was validated on
    let sigma_fn = |c: [f64; 2]| {
        let i = ((c[0] - grid.lower()[0]) / grid.spacing() - 0.5)
            .round()
            .clamp(0.0, (grid.node_count() - 1) as f64) as usize;
        sigma.values()[i]
    };
    let r_outer = config.r_outer.unwrap_or(6.0);
    let mut outcome = RunOutcome::default();
    let mut previous = f64::INFINITY;
    let mut monotone = true;
    let mut last = None;
    for r in [r_outer / 4.0, r_outer / 2.0, r_outer] {
        let fit = sharmonic::fit_s_harmonic(sigma_fn, config.s, r.max(1.5), config.grid.n, None)
            .map_err(err)?;
        outcome.number(&format!("misfit_R{r:.2}"), fit.misfit_sup);
        if fit.misfit_sup >= previous {
            monotone = false;
        }
        previous = fit.misfit_sup;
        last = Some(fit);
    }
    let fit = last.expect("three fits ran");
    report::write_fit_csv(&out.join("fit.csv"), &fit).map_err(err)?;
    report::write_fit_summary_json(&out.join("fit.json"), &fit).map_err(err)?;
    outcome.number("rho", fit.rho);
    outcome.pass("misfit_monotone_in_R", monotone);
    outcome.pass(
        "misfit_within_5_percent",
        fit.misfit_sup <= 0.05 * sigma.sup_norm().max(f64::MIN_POSITIVE),
    );
    Ok(outcome)
}

fn run_impossibility(config: &ExperimentConfig, out: &Path) -> anyhow::Result<RunOutcome> {
    let m = config.contrast.unwrap_or(100.0);
    let report_data = sharmonic::local_impossibility(m, config.grid.n).map_err(err)?;
    let mut w = std::fs::File::create(out.join("impossibility.json"))?;
    serde_json::to_writer_pretty(&mut w, &report_data)?;
    let mut outcome = RunOutcome::default();
    outcome.number("harmonic_misfit", report_data.harmonic_misfit);
    outcome.number("fractional_misfit", report_data.fractional_misfit);
    outcome.number("harnack_quotient", report_data.harnack_quotient);
    outcome.pass("harmonic_obstructed", report_data.harmonic_misfit >= 1.0);
    outcome.pass(
        "fractional_tracks_closer",
        report_data.fractional_misfit < 0.6 * report_data.harmonic_misfit,
    );
    Ok(outcome)
}

fn run_acceptance(config: &ExperimentConfig, out: &Path) -> anyhow::Result<RunOutcome> {
    let cfg = AcceptanceConfig {
        fast: config.fast.unwrap_or(false),
        seed: config.seed,
    };
    let result = acceptance::run_all(cfg).map_err(err)?;
    let mut outcome = RunOutcome::default();
    for criterion in &result.criteria {
        println!(
            "criterion {:2} [{}] {:6.2}s: {}",
            criterion.id,
            if criterion.passed { "PASS" } else { "FAIL" },
            criterion.seconds,
            criterion.name
        );
        for check in &criterion.checks {
            if !check.passed {
                println!("    FAIL: {} - {}", check.name, check.detail);
            }
        }
        outcome.pass(&format!("criterion_{:02}", criterion.id), criterion.passed);
        for (key, value) in &criterion.numbers {
            outcome.number(&format!("c{:02}_{key}", criterion.id), *value);
        }
    }
    let detail = serde_json::to_value(&result.criteria)?;
    let mut w = std::fs::File::create(out.join("acceptance.json"))?;
    serde_json::to_writer_pretty(&mut w, &detail)?;
    outcome.number("total_seconds", result.total_seconds);
    Ok(outcome)
}

pub fn describe(outcome: &RunOutcome) -> String {
    let mut lines = Vec::new();
    for (key, value) in &outcome.numbers {
        lines.push(format!("  {key} = {value:.9e}"));
    }
    for (key, pass) in &outcome.passes {
        lines.push(format!("  [{}] {key}", if *pass { "PASS" } else { "FAIL" }));
    }
    lines.join("\n")
}

/// Ensures invalid configs never leave partial artifacts behind: everything
/// validated before this call may write into `out`.
pub fn prepare_output(out: &Path) -> anyhow::Result<()> {
    std::fs::create_dir_all(out)
        .with_context(|| format!("creating output directory {}", out.display()))
}
