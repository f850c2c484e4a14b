//! Command execution: turn a resolved `RunConfig` into computations and
//! an output artifact.

use std::sync::Arc;

use serde_json::json;

use sphere_gns::euclidean;
use sphere_gns::flow::{flow_params, evolve};
use sphere_gns::functionals::{Family, InequalityParams};
use sphere_gns::optimize::{
    bifurcation_lambda, branch_sweep, detect_threshold_bracket, gns2_threshold_bracket,
    MinimizeOptions,
};
use sphere_gns::ultraspherical::{make_grid, ZonalFunction};

use crate::config::{CommandKind, RunConfig};
use crate::report::Report;
use crate::verify;

pub enum RunError {
    Validation(String),
    Numerical(String),
}

impl From<sphere_gns::Error> for RunError {
    fn from(e: sphere_gns::Error) -> Self {
        use sphere_gns::Error::*;
        match e {
            NoConvergence(_) | Numerical(_) => RunError::Numerical(e.to_string()),
            _ => RunError::Validation(e.to_string()),
        }
    }
}

fn invalid(msg: impl Into<String>) -> RunError {
    RunError::Validation(msg.into())
}

const VERSION: &str = env!("CARGO_PKG_VERSION");
const GAMMA_CONVENTION: &str = "gamma = 1 - theta*theta_star";

/// Grid-doubling agreement gate for reported constants.
const GRID_CHECK_REL: f64 = 1e-8;

pub fn run(cfg: &RunConfig) -> Result<(), RunError> {
    let (report, failures) = match cfg.command {
        CommandKind::Branch => (branch_cmd(cfg)?, 0),
        CommandKind::Threshold => (threshold_cmd(cfg)?, 0),
        CommandKind::Flow => (flow_cmd(cfg)?, 0),
        CommandKind::Euclidean => (euclidean_cmd(cfg)?, 0),
        CommandKind::Verify => verify_cmd(cfg)?,
    };
    let rendered = report.render(cfg.format);
    match &cfg.output {
        Some(path) => std::fs::write(path, rendered)
            .map_err(|e| invalid(format!("cannot write {path}: {e}")))?,
        None => print!("{rendered}"),
    }
    if failures > 0 {
        return Err(RunError::Numerical(format!(
            "{failures} verification check(s) failed"
        )));
    }
    Ok(())
}

fn build_params(cfg: &RunConfig, lambda: f64) -> Result<InequalityParams, RunError> {
    let family = cfg
        .family
        .ok_or_else(|| invalid("this command needs --family"))?;
    match family {
        Family::Gns0 => {
            if cfg.theta.is_some() {
                return Err(invalid(
                    "--theta is not a gns0 parameter (theta is fixed at 1)",
                ));
            }
            Ok(InequalityParams::gns0(cfg.d, cfg.p, lambda)?)
        }
        Family::Gns1 => {
            let theta = cfg.theta.ok_or_else(|| invalid("gns1 needs --theta"))?;
            Ok(InequalityParams::gns1(cfg.d, cfg.p, theta, lambda)?)
        }
        Family::Gns2 => {
            let theta = cfg.theta.ok_or_else(|| invalid("gns2 needs --theta"))?;
            Ok(InequalityParams::gns2(cfg.d, cfg.p, theta, lambda)?)
        }
    }
}

fn base_metadata(cfg: &RunConfig) -> serde_json::Value {
    json!({
        "config": cfg,
        "version": VERSION,
        "seed": cfg.seed,
    })
}

fn branch_cmd(cfg: &RunConfig) -> Result<Report, RunError> {
    let grid_spec = cfg
        .lambda_grid
        .ok_or_else(|| invalid("branch needs --lambda start:stop:count"))?;
    let lambdas = grid_spec.values().map_err(invalid)?;
    let params = build_params(cfg, lambdas[0])?;
    let grid = Arc::new(make_grid(cfg.d, cfg.grid_n)?);
    let opts = MinimizeOptions::default();
    let branch = branch_sweep(&params, &grid, &lambdas, &opts)?;

    let mut grid_check_meta = json!({"performed": false});
    if cfg.grid_check {
        let grid2 = Arc::new(make_grid(cfg.d, 2 * cfg.grid_n)?);
        let branch2 = branch_sweep(&params, &grid2, &lambdas, &opts)?;
        let mut worst = 0.0_f64;
        for (a, b) in branch.points.iter().zip(branch2.points.iter()) {
            worst = worst.max((a.mu - b.mu).abs() / b.mu.abs().max(1.0));
        }
        if worst > GRID_CHECK_REL {
            return Err(RunError::Numerical(format!(
                "grid check failed: mu at N = {} and 2N differ by {worst:.3e} (gate {GRID_CHECK_REL:.0e})",
                cfg.grid_n
            )));
        }
        grid_check_meta = json!({
            "performed": true,
            "max_rel_mu_change": worst,
            "gate": GRID_CHECK_REL,
        });
    }

    let mut metadata = base_metadata(cfg);
    metadata["gamma_convention"] = json!(GAMMA_CONVENTION);
    metadata["grid_check"] = grid_check_meta;
    metadata["bifurcation_lambda"] = match bifurcation_lambda(&params) {
        l if l.is_finite() => json!(l),
        _ => json!(null),
    };
    let rows = branch
        .points
        .iter()
        .map(|pt| {
            vec![
                json!(pt.lambda),
                json!(pt.mu),
                json!(pt.symmetric),
                json!(pt.mass),
                json!(pt.kinetic),
                json!(pt.el_residual),
            ]
        })
        .collect();
    Ok(Report {
        metadata,
        columns: vec!["lambda", "mu", "symmetric", "mass", "kinetic", "el_residual"],
        rows,
    })
}

fn threshold_cmd(cfg: &RunConfig) -> Result<Report, RunError> {
    let tol = cfg.tol.unwrap_or(1e-3);
    if !(tol > 0.0) {
        return Err(invalid("tolerance must be positive"));
    }
    let params = build_params(cfg, 1.0)?;
    let guess = bifurcation_lambda(&params);
    if !guess.is_finite() {
        return Err(invalid(
            "no finite symmetry-breaking threshold for these parameters",
        ));
    }
    let lambdas = match cfg.lambda_grid {
        Some(gspec) => gspec.values().map_err(invalid)?,
        None => {
            let lo = 0.4 * guess;
            let hi = 1.8 * guess + 0.5;
            (0..8)
                .map(|i| lo + (hi - lo) * i as f64 / 7.0)
                .collect()
        }
    };
    let grid = Arc::new(make_grid(cfg.d, cfg.grid_n)?);
    let opts = MinimizeOptions::default();
    let branch = branch_sweep(&params, &grid, &lambdas, &opts)?;
    let (blo, bhi) = detect_threshold_bracket(&branch, &grid, &opts, tol)?;
    let estimate = 0.5 * (blo + bhi);

    let mut grid_check_meta = json!({"performed": false});
    if cfg.grid_check {
        let grid2 = Arc::new(make_grid(cfg.d, 2 * cfg.grid_n)?);
        let branch2 = branch_sweep(&params, &grid2, &lambdas, &opts)?;
        let (b2lo, b2hi) = detect_threshold_bracket(&branch2, &grid2, &opts, tol)?;
        let est2 = 0.5 * (b2lo + b2hi);
        if (estimate - est2).abs() > 2.0 * tol {
            return Err(RunError::Numerical(format!(
                "grid check failed: threshold at N = {} is {estimate:.6}, at 2N {est2:.6}",
                cfg.grid_n
            )));
        }
        grid_check_meta = json!({
            "performed": true,
            "estimate_2n": est2,
            "gate": 2.0 * tol,
        });
    }

    let mut metadata = base_metadata(cfg);
    metadata["grid_check"] = grid_check_meta;
    metadata["bifurcation_lambda"] = json!(guess);
    if params.family() == Family::Gns2 {
        let (plo, phi) = gns2_threshold_bracket(cfg.d, cfg.p, params.theta());
        metadata["proven_bracket"] = json!([plo, phi]);
    }
    Ok(Report {
        metadata,
        columns: vec![
            "family",
            "d",
            "p",
            "theta",
            "bracket_lo",
            "bracket_hi",
            "estimate",
            "tol",
        ],
        rows: vec![vec![
            json!(params.family()),
            json!(cfg.d),
            json!(cfg.p),
            json!(params.theta()),
            json!(blo),
            json!(bhi),
            json!(estimate),
            json!(tol),
        ]],
    })
}

fn flow_cmd(cfg: &RunConfig) -> Result<Report, RunError> {
    let block = cfg
        .flow
        .ok_or_else(|| invalid("flow needs --m (and optionally --t-end, --dt)"))?;
    if !(block.t_end > 0.0) || !(block.dt > 0.0) || block.dt > block.t_end {
        return Err(invalid("flow needs 0 < dt <= t_end"));
    }
    let fp = flow_params(cfg.d, cfg.p, block.m)?;
    let grid = Arc::new(make_grid(cfg.d, cfg.grid_n)?);
    // fixed nonconstant positive initial state, recorded in metadata
    let w0 = ZonalFunction::from_fn(&grid, |z| 1.0 + 0.3 * z);
    let trace = evolve(&grid, &fp, &w0, block.t_end, block.dt)?;

    let mut metadata = base_metadata(cfg);
    metadata["beta"] = json!(fp.beta);
    metadata["kappa"] = json!(fp.kappa);
    metadata["initial_state"] = json!("w0(z) = 1 + 0.3 z");
    metadata["mass_drift_per_unit_time"] = json!(trace.mass_drift_per_unit_time());
    metadata["dissipation_identity_max_rel_err"] =
        json!(trace.dissipation_identity_max_rel_err());
    let rows = (0..trace.times.len())
        .map(|i| {
            vec![
                json!(trace.times[i]),
                json!(trace.mass[i]),
                json!(trace.dirichlet[i]),
                json!(trace.production[i]),
                json!(trace.l2_sq[i]),
                json!(trace.lp_sq[i]),
            ]
        })
        .collect();
    Ok(Report {
        metadata,
        columns: vec!["time", "mass", "dirichlet", "production", "l2_sq", "lp_sq"],
        rows,
    })
}

fn euclidean_cmd(cfg: &RunConfig) -> Result<Report, RunError> {
    let c = euclidean::gns_constants(cfg.d, cfg.p)?;
    let mut metadata = base_metadata(cfg);
    metadata["gamma_convention"] = json!(GAMMA_CONVENTION);
    let mut columns = vec!["d", "p", "theta_star", "k_pd", "c_gns"];
    let mut row = vec![
        json!(cfg.d),
        json!(cfg.p),
        json!(c.theta_star),
        json!(c.k_pd),
        json!(c.c_gns),
    ];
    if let Some(theta) = cfg.theta {
        let gamma = euclidean::gamma_exponent(cfg.d, cfg.p, theta)?;
        let mu_inf = euclidean::mu_infinity(cfg.d, cfg.p, theta)?;
        columns.extend(["theta", "gamma", "mu_infinity"]);
        row.extend([json!(theta), json!(gamma), json!(mu_inf)]);
    }
    Ok(Report {
        metadata,
        columns,
        rows: vec![row],
    })
}

fn verify_cmd(cfg: &RunConfig) -> Result<(Report, usize), RunError> {
    let suite = cfg.suite.as_deref().unwrap_or("all");
    let checks = verify::run_suite(suite, cfg.d, cfg.p, cfg.seed).map_err(invalid)?;
    let failures = checks.iter().filter(|c| !c.pass).count();
    let mut metadata = base_metadata(cfg);
    metadata["suite"] = json!(suite);
    metadata["failures"] = json!(failures);
    let rows = checks
        .iter()
        .map(|c| {
            vec![
                json!(c.name),
                json!(if c.pass { "PASS" } else { "FAIL" }),
                json!(c.detail),
            ]
        })
        .collect();
    Ok((
        Report {
            metadata,
            columns: vec!["check", "status", "detail"],
            rows,
        },
        failures,
    ))
}
