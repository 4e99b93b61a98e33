//! Command implementations: each takes a validated [`RunConfig`], writes its
//! report files, and returns the process exit code (0, or 2 for a
//! mathematically valid "not solvable" outcome).

use std::fs;
use std::path::{Path, PathBuf};

use fredholm_core::nystrom::{discretize, von_koch_check};
use fredholm_core::quadrature::build_rule;
use fredholm_core::series::{minor_dp, minor_dp_scan, MinorRequest};
use fredholm_core::solver::{solve, RightHandSide, SolveOptions};
use fredholm_core::spectral_index::{find_index, refine_base_points, IndexSearchConfig};
use fredholm_core::{Complex, FredholmError, IndexReport, Result};

use crate::config::{Command, IndexSpec, RunConfig};
use crate::report::{
    csv_document, to_json_string, CheckJson, IndexReportJson, MinorValueJson, SolutionReportJson,
    ValidationJson,
};

/// Executes the configured command, writing reports under `out_dir`.
pub fn run(cfg: &RunConfig, out_dir: &Path) -> Result<i32> {
    fs::create_dir_all(out_dir).map_err(|e| {
        FredholmError::InvalidConfig(format!("cannot create output dir {}: {e}", out_dir.display()))
    })?;
    match cfg.command {
        Command::DetScan => det_scan(cfg, out_dir),
        Command::MinorEval => minor_eval(cfg, out_dir),
        Command::Index => index(cfg, out_dir),
        Command::Solve => run_solve(cfg, out_dir),
        Command::Validate => validate(cfg, out_dir),
    }
}

fn write_file(path: &PathBuf, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| {
        FredholmError::InvalidConfig(format!("cannot write {}: {e}", path.display()))
    })
}

fn det_scan(cfg: &RunConfig, out_dir: &Path) -> Result<i32> {
    let spec = cfg.scan.as_ref().expect("validated by config");
    let values = minor_dp_scan(
        &cfg.kernel,
        &cfg.rule,
        0,
        &[],
        &[],
        &spec.lambdas,
        &cfg.bounds,
        cfg.eval.target_eps,
        cfg.eval.max_tuples,
    )?;
    let rows: Vec<Vec<f64>> = spec
        .lambdas
        .iter()
        .zip(&values)
        .map(|(l, v)| {
            vec![l.re, l.im, v.value.re, v.value.im, v.truncation_bound, v.quadrature_tail]
        })
        .collect();
    let doc = csv_document(
        &["re_lambda", "im_lambda", "re_d0", "im_d0", "truncation_bound", "quad_tail"],
        &rows,
    )?;
    write_file(&out_dir.join("det-scan.csv"), &doc)?;
    Ok(0)
}

fn minor_eval(cfg: &RunConfig, out_dir: &Path) -> Result<i32> {
    let spec = cfg.minor.as_ref().expect("validated by config");
    let req = MinorRequest {
        p: spec.p,
        s_points: spec.s_points.clone(),
        t_points: spec.t_points.clone(),
        lambda: spec.lambda,
        derivative_order: spec.derivative_order,
        target_eps: cfg.eval.target_eps,
    };
    let value = minor_dp(&cfg.kernel, &cfg.rule, &req, &cfg.bounds, cfg.eval.max_tuples)?;
    let json = to_json_string(&MinorValueJson::from(&value))?;
    write_file(&out_dir.join("minor-eval.json"), &json)?;
    Ok(0)
}

fn search_config(cfg: &RunConfig, spec: Option<&IndexSpec>) -> IndexSearchConfig {
    let mut search = IndexSearchConfig { eval: cfg.eval, ..Default::default() };
    if let Some(spec) = spec {
        if spec.tau.is_some() {
            search.zero_threshold = spec.tau;
        }
        if let Some(d) = spec.d_max {
            search.max_order = d;
        }
        if let Some(r) = spec.r_max {
            search.max_derivative = r;
        }
        if let Some(grid) = &spec.grid {
            search.candidate_grid = grid.clone();
        }
    }
    search
}

fn find_and_refine(cfg: &RunConfig, lambda: Complex) -> Result<IndexReport> {
    let spec = cfg.index.as_ref();
    let search = search_config(cfg, spec);
    let report = find_index(&cfg.kernel, &cfg.rule, &cfg.bounds, lambda, &search)?;
    if spec.is_some_and(|s| s.refine) {
        return refine_base_points(
            &cfg.kernel,
            &cfg.rule,
            &cfg.bounds,
            report.d,
            &report,
            &cfg.eval,
        );
    }
    Ok(report)
}

fn index(cfg: &RunConfig, out_dir: &Path) -> Result<i32> {
    let spec = cfg.index.as_ref().expect("validated by config");
    let lambda = spec.lambda.expect("validated by config");
    let report = find_and_refine(cfg, lambda)?;
    let json = to_json_string(&IndexReportJson::from(&report))?;
    write_file(&out_dir.join("index.json"), &json)?;
    Ok(0)
}

fn run_solve(cfg: &RunConfig, out_dir: &Path) -> Result<i32> {
    let spec = cfg.solve.as_ref().expect("validated by config");
    let idx = find_and_refine(cfg, spec.lambda)?;
    let g = RightHandSide::from_expr(&spec.rhs, &cfg.rule)?;
    let opts = SolveOptions {
        solvability_rel: spec.solvability_rel,
        residual_rel: spec.residual_rel,
        eval: cfg.eval,
    };
    let report = solve(&cfg.kernel, &cfg.rule, &cfg.bounds, &idx, &g, &opts)?;
    let json = to_json_string(&SolutionReportJson::from(&report))?;
    write_file(&out_dir.join("solve.json"), &json)?;
    match &report.particular {
        Some(f) => {
            let samples = f.sample(&spec.output_grid)?;
            let rows: Vec<Vec<f64>> = spec
                .output_grid
                .iter()
                .zip(&samples)
                .map(|(&s, v)| vec![s, v.re, v.im])
                .collect();
            let doc = csv_document(&["s", "re_f", "im_f"], &rows)?;
            write_file(&out_dir.join("solve.csv"), &doc)?;
            Ok(0)
        }
        // The Fredholm alternative said no: a valid outcome, flagged by the
        // exit code so batch drivers can branch on it.
        None => Ok(2),
    }
}

fn validate(cfg: &RunConfig, out_dir: &Path) -> Result<i32> {
    let spec = &cfg.validate;
    let mut checks = Vec::new();

    // Finite samples over the full node grid.
    checks.push(match sample_check(cfg) {
        Ok(sup) => CheckJson {
            name: "finite-samples".into(),
            pass: true,
            detail: format!("sup node sample {sup:.3e}"),
        },
        Err(e) => CheckJson { name: "finite-samples".into(), pass: false, detail: e.to_string() },
    });

    // Sections must have faded by the rule's edge (K⁰ behaviour proxy).
    let (boundary, interior) = boundary_ratio(cfg);
    let vanish_pass = boundary <= 1e-4 * interior.max(f64::MIN_POSITIVE);
    checks.push(CheckJson {
        name: "vanishes-at-boundary".into(),
        pass: vanish_pass,
        detail: format!("boundary sup {boundary:.3e} vs interior sup {interior:.3e}"),
    });

    // Discrete Hilbert–Schmidt norm.
    let hs = hs_norm(cfg);
    checks.push(CheckJson {
        name: "hilbert-schmidt".into(),
        pass: hs.is_finite(),
        detail: format!("‖(H, S)‖_HS ≈ {hs:.6e}"),
    });

    // Carleman data resolved on this rule (estimation would have failed
    // on an indefinite Gram before we got here).
    checks.push(CheckJson {
        name: "positive-gram".into(),
        pass: true,
        detail: format!(
            "M = {:.6e}, tr A = {:.6e}, tr Ã = {:.6e}, refinement error {:.2e}",
            cfg.bounds.sup_diag,
            cfg.bounds.trace_a,
            cfg.bounds.trace_a_tilde,
            cfg.bounds.refinement_error
        ),
    });

    // Discrete determinant identity across the requested sizes and λ.
    let mut worst_gap = 0.0f64;
    let mut von_koch_err = None;
    'outer: for &n in &spec.von_koch_nodes {
        for &lambda in &spec.lambdas {
            let outcome = build_rule(cfg.rule.kind, n, cfg.rule.truncation_radius)
                .and_then(|small| discretize(&cfg.kernel, &small, lambda))
                .and_then(|sys| von_koch_check(&sys));
            match outcome {
                Ok(check) => worst_gap = worst_gap.max(check.gap),
                Err(e) => {
                    von_koch_err = Some(format!("N = {n}, λ = {lambda}: {e}"));
                    break 'outer;
                }
            }
        }
    }
    checks.push(match von_koch_err {
        None => CheckJson {
            name: "von-koch".into(),
            pass: worst_gap < spec.gap_tol,
            detail: format!("worst gap {worst_gap:.3e} (tolerance {:.1e})", spec.gap_tol),
        },
        Some(msg) => CheckJson { name: "von-koch".into(), pass: false, detail: msg },
    });

    let all_pass = checks.iter().all(|c| c.pass);
    let json = to_json_string(&ValidationJson {
        kernel: cfg.kernel.label().to_string(),
        all_pass,
        checks,
    })?;
    write_file(&out_dir.join("validate.json"), &json)?;
    Ok(0)
}

fn sample_check(cfg: &RunConfig) -> Result<f64> {
    let mut sup = 0.0f64;
    for &x in &cfg.rule.nodes {
        for &y in &cfg.rule.nodes {
            let h = cfg.kernel.eval_h(x, y)?;
            let s = cfg.kernel.eval_s(x, y)?;
            sup = sup.max(h.norm()).max(s.norm());
        }
    }
    Ok(sup)
}

fn boundary_ratio(cfg: &RunConfig) -> (f64, f64) {
    let r = cfg.rule.truncation_radius;
    let mut boundary = 0.0f64;
    for &x in &cfg.rule.nodes {
        for &edge in &[-r, r] {
            boundary = boundary
                .max(cfg.kernel.h(edge, x).norm())
                .max(cfg.kernel.h(x, edge).norm())
                .max(cfg.kernel.s_part(edge, x).norm())
                .max(cfg.kernel.s_part(x, edge).norm());
        }
    }
    let mut interior = 0.0f64;
    for &x in &cfg.rule.nodes {
        for &y in &cfg.rule.nodes {
            interior = interior.max(cfg.kernel.h(x, y).norm()).max(cfg.kernel.s_part(x, y).norm());
        }
    }
    (boundary, interior)
}

fn hs_norm(cfg: &RunConfig) -> f64 {
    let mut acc = 0.0;
    for (&x, &wx) in cfg.rule.nodes.iter().zip(&cfg.rule.weights) {
        for (&y, &wy) in cfg.rule.nodes.iter().zip(&cfg.rule.weights) {
            acc += wx
                * wy
                * (cfg.kernel.h(x, y).norm_sqr() + cfg.kernel.s_part(x, y).norm_sqr());
        }
    }
    acc.sqrt()
}
