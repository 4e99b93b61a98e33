//! Run configuration: a single TOML file drives one command.
//!
//! The schema is versioned (`schema = 1`) and documented in `docs/config.md`.
//! Unknown keys are rejected with the offending key named, so golden configs
//! stay honest as the schema evolves.

use std::path::PathBuf;

use serde::Deserialize;

use fredholm_core::kernels::{
    estimate_trace_bounds, trace_bounds_from_parts, DecayEnvelope, KernelPair, TraceBounds,
};
use fredholm_core::quadrature::{build_rule, QuadratureKind, QuadratureRule};
use fredholm_core::series::EvalParams;
use fredholm_core::{Complex, FredholmError, Result};

/// The command a config file requests.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    DetScan,
    MinorEval,
    Index,
    Solve,
    Validate,
}

impl Command {
    fn parse(s: &str) -> Result<Self> {
        match s {
            "det-scan" => Ok(Command::DetScan),
            "minor-eval" => Ok(Command::MinorEval),
            "index" => Ok(Command::Index),
            "solve" => Ok(Command::Solve),
            "validate" => Ok(Command::Validate),
            other => Err(FredholmError::InvalidConfig(format!(
                "command: expected one of det-scan, minor-eval, index, solve, validate; got '{other}'"
            ))),
        }
    }

    /// File stem for this command's reports.
    pub fn stem(self) -> &'static str {
        match self {
            Command::DetScan => "det-scan",
            Command::MinorEval => "minor-eval",
            Command::Index => "index",
            Command::Solve => "solve",
            Command::Validate => "validate",
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    schema: u32,
    command: String,
    kernel: RawKernel,
    #[serde(default)]
    quadrature: RawQuadrature,
    #[serde(default)]
    series: RawSeries,
    trace: Option<RawTrace>,
    output: Option<PathBuf>,
    #[serde(default)]
    reproducible: bool,
    scan: Option<RawScan>,
    minor: Option<RawMinor>,
    index: Option<RawIndex>,
    solve: Option<RawSolve>,
    validate: Option<RawValidate>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawKernel {
    name: Option<String>,
    #[serde(default)]
    params: Vec<f64>,
    expr_h: Option<String>,
    expr_s: Option<String>,
    decay_radius: Option<f64>,
    label: Option<String>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawQuadrature {
    kind: Option<String>,
    nodes: Option<usize>,
    radius: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSeries {
    target_eps: Option<f64>,
    max_tuples: Option<u64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTrace {
    sup_diag: f64,
    trace_a: f64,
    trace_a_tilde: f64,
    envelope: RawEnvelope,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEnvelope {
    kind: String,
    amplitude: f64,
    /// Decay rate for `exponential`, exponent for `power`.
    order: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScan {
    start: Option<[f64; 2]>,
    end: Option<[f64; 2]>,
    count: Option<usize>,
    points: Option<Vec<[f64; 2]>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMinor {
    p: usize,
    #[serde(default)]
    s_points: Vec<f64>,
    #[serde(default)]
    t_points: Vec<f64>,
    lambda: [f64; 2],
    #[serde(default)]
    derivative_order: usize,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawIndex {
    lambda: Option<[f64; 2]>,
    tau: Option<f64>,
    d_max: Option<usize>,
    r_max: Option<usize>,
    grid: Option<Vec<f64>>,
    #[serde(default)]
    refine: bool,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSolve {
    lambda: [f64; 2],
    rhs: String,
    output_grid: Option<RawGrid>,
    solvability_rel: Option<f64>,
    residual_rel: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGrid {
    start: Option<f64>,
    end: Option<f64>,
    count: Option<usize>,
    points: Option<Vec<f64>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawValidate {
    von_koch_nodes: Option<Vec<usize>>,
    lambdas: Option<Vec<[f64; 2]>>,
    gap_tol: Option<f64>,
}

/// Fully validated run configuration with instantiated numerics.
#[derive(Debug)]
pub struct RunConfig {
    pub command: Command,
    pub kernel: KernelPair,
    pub rule: QuadratureRule,
    pub bounds: TraceBounds,
    pub eval: EvalParams,
    pub output: Option<PathBuf>,
    pub reproducible: bool,
    pub scan: Option<ScanSpec>,
    pub minor: Option<MinorSpec>,
    pub index: Option<IndexSpec>,
    pub solve: Option<SolveSpec>,
    pub validate: ValidateSpec,
}

#[derive(Debug)]
pub struct ScanSpec {
    pub lambdas: Vec<Complex>,
}

#[derive(Debug)]
pub struct MinorSpec {
    pub p: usize,
    pub s_points: Vec<f64>,
    pub t_points: Vec<f64>,
    pub lambda: Complex,
    pub derivative_order: usize,
}

#[derive(Debug, Clone)]
pub struct IndexSpec {
    pub lambda: Option<Complex>,
    pub tau: Option<f64>,
    pub d_max: Option<usize>,
    pub r_max: Option<usize>,
    pub grid: Option<Vec<f64>>,
    pub refine: bool,
}

#[derive(Debug)]
pub struct SolveSpec {
    pub lambda: Complex,
    pub rhs: String,
    pub output_grid: Vec<f64>,
    pub solvability_rel: f64,
    pub residual_rel: f64,
}

#[derive(Debug)]
pub struct ValidateSpec {
    pub von_koch_nodes: Vec<usize>,
    pub lambdas: Vec<Complex>,
    pub gap_tol: f64,
}

fn missing(table: &str, cmd: &str) -> FredholmError {
    FredholmError::InvalidConfig(format!("command '{cmd}' requires a [{table}] table"))
}

fn cx(pair: [f64; 2]) -> Complex {
    Complex::new(pair[0], pair[1])
}

impl RunConfig {
    /// Parses and validates TOML text into a ready-to-run configuration.
    pub fn from_toml(text: &str) -> Result<Self> {
        let raw: RawConfig = toml::from_str(text)
            .map_err(|e| FredholmError::InvalidConfig(e.message().to_string()))?;
        if raw.schema != 1 {
            return Err(FredholmError::InvalidConfig(format!(
                "schema: this build reads schema 1, got {}",
                raw.schema
            )));
        }
        let command = Command::parse(&raw.command)?;

        let kernel = build_kernel(&raw.kernel)?;
        let rule = build_quadrature(&raw.quadrature, &kernel)?;
        let bounds = match &raw.trace {
            Some(t) => build_trace_override(t)?,
            None => estimate_trace_bounds(&kernel, &rule)?,
        };
        let mut eval = EvalParams::default();
        if let Some(eps) = raw.series.target_eps {
            if !(eps.is_finite() && eps > 0.0) {
                return Err(FredholmError::InvalidConfig(format!(
                    "series.target_eps: must be positive and finite, got {eps}"
                )));
            }
            eval.target_eps = eps;
        }
        if let Some(m) = raw.series.max_tuples {
            eval.max_tuples = m;
        }

        let scan = raw.scan.as_ref().map(build_scan).transpose()?;
        let minor = raw.minor.as_ref().map(build_minor).transpose()?;
        let index = raw.index.as_ref().map(build_index).transpose()?;
        let solve = raw.solve.as_ref().map(build_solve).transpose()?;
        let validate = build_validate(raw.validate.as_ref())?;

        match command {
            Command::DetScan if scan.is_none() => return Err(missing("scan", "det-scan")),
            Command::MinorEval if minor.is_none() => return Err(missing("minor", "minor-eval")),
            Command::Index => {
                let has_lambda = index.as_ref().is_some_and(|i| i.lambda.is_some());
                if !has_lambda {
                    return Err(FredholmError::InvalidConfig(
                        "command 'index' requires index.lambda".into(),
                    ));
                }
            }
            Command::Solve if solve.is_none() => return Err(missing("solve", "solve")),
            _ => {}
        }

        Ok(RunConfig {
            command,
            kernel,
            rule,
            bounds,
            eval,
            output: raw.output,
            reproducible: raw.reproducible,
            scan,
            minor,
            index,
            solve,
            validate,
        })
    }
}

fn build_kernel(raw: &RawKernel) -> Result<KernelPair> {
    match (&raw.name, &raw.expr_h, &raw.expr_s) {
        (Some(name), None, None) => {
            if raw.decay_radius.is_some() {
                return Err(FredholmError::InvalidConfig(
                    "kernel.decay_radius: only valid with expression kernels".into(),
                ));
            }
            KernelPair::builtin(name, &raw.params)
        }
        (Some(_), _, _) => Err(FredholmError::InvalidConfig(
            "kernel: give either kernel.name or kernel.expr_h/expr_s, not both".into(),
        )),
        (None, None, None) => Err(FredholmError::InvalidConfig(
            "kernel: needs kernel.name or at least one of kernel.expr_h/expr_s".into(),
        )),
        (None, h, s) => {
            if !raw.params.is_empty() {
                return Err(FredholmError::InvalidConfig(
                    "kernel.params: only valid with kernel.name".into(),
                ));
            }
            let radius = raw.decay_radius.ok_or_else(|| {
                FredholmError::InvalidConfig(
                    "kernel.decay_radius: required for expression kernels".into(),
                )
            })?;
            if !(radius.is_finite() && radius > 0.0) {
                return Err(FredholmError::InvalidConfig(format!(
                    "kernel.decay_radius: must be positive and finite, got {radius}"
                )));
            }
            let label = raw.label.clone().unwrap_or_else(|| "custom".to_string());
            KernelPair::from_exprs(label, h.as_deref(), s.as_deref(), radius)
        }
    }
}

fn build_quadrature(raw: &RawQuadrature, kernel: &KernelPair) -> Result<QuadratureRule> {
    let kind = match &raw.kind {
        Some(s) => s
            .parse::<QuadratureKind>()
            .map_err(|_| FredholmError::InvalidConfig(format!("quadrature.kind: unknown kind '{s}'")))?,
        None => QuadratureKind::GaussLegendreTruncated,
    };
    let nodes = raw.nodes.unwrap_or(64);
    // Default radius: half again the kernel's decay radius, so envelope
    // tails are already negligible at the rule's edge.
    let radius = raw.radius.unwrap_or(1.5 * kernel.decay_radius());
    if !(radius.is_finite() && radius > 0.0) {
        return Err(FredholmError::InvalidConfig(format!(
            "quadrature.radius: must be positive and finite, got {radius}"
        )));
    }
    build_rule(kind, nodes, radius)
}

fn build_trace_override(raw: &RawTrace) -> Result<TraceBounds> {
    let envelope = match raw.envelope.kind.as_str() {
        "exponential" => DecayEnvelope::Exponential {
            amplitude: raw.envelope.amplitude,
            rate: raw.envelope.order,
        },
        "power" => DecayEnvelope::Power {
            amplitude: raw.envelope.amplitude,
            order: raw.envelope.order,
        },
        other => {
            return Err(FredholmError::InvalidConfig(format!(
                "trace.envelope.kind: expected 'exponential' or 'power', got '{other}'"
            )))
        }
    };
    trace_bounds_from_parts(raw.sup_diag, raw.trace_a, raw.trace_a_tilde, envelope)
}

fn build_scan(raw: &RawScan) -> Result<ScanSpec> {
    let lambdas: Vec<Complex> = match (&raw.points, raw.start, raw.end, raw.count) {
        (Some(points), None, None, None) => points.iter().copied().map(cx).collect(),
        (None, Some(start), Some(end), Some(count)) => {
            if count < 2 {
                return Err(FredholmError::InvalidConfig(format!(
                    "scan.count: a line scan needs at least 2 points, got {count}"
                )));
            }
            let (a, b) = (cx(start), cx(end));
            (0..count)
                .map(|i| a + (b - a) * Complex::new(i as f64 / (count - 1) as f64, 0.0))
                .collect()
        }
        _ => {
            return Err(FredholmError::InvalidConfig(
                "scan: give either scan.points or all of scan.start/end/count".into(),
            ))
        }
    };
    if lambdas.is_empty() {
        return Err(FredholmError::InvalidConfig("scan.points: grid is empty".into()));
    }
    for l in &lambdas {
        if !(l.re.is_finite() && l.im.is_finite()) {
            return Err(FredholmError::InvalidConfig(format!(
                "scan: non-finite λ ({}, {})",
                l.re, l.im
            )));
        }
    }
    Ok(ScanSpec { lambdas })
}

fn build_minor(raw: &RawMinor) -> Result<MinorSpec> {
    Ok(MinorSpec {
        p: raw.p,
        s_points: raw.s_points.clone(),
        t_points: raw.t_points.clone(),
        lambda: cx(raw.lambda),
        derivative_order: raw.derivative_order,
    })
}

fn build_index(raw: &RawIndex) -> Result<IndexSpec> {
    Ok(IndexSpec {
        lambda: raw.lambda.map(cx),
        tau: raw.tau,
        d_max: raw.d_max,
        r_max: raw.r_max,
        grid: raw.grid.clone(),
        refine: raw.refine,
    })
}

fn build_solve(raw: &RawSolve) -> Result<SolveSpec> {
    let output_grid: Vec<f64> = match &raw.output_grid {
        None => default_output_grid(),
        Some(g) => match (&g.points, g.start, g.end, g.count) {
            (Some(points), None, None, None) => points.clone(),
            (None, Some(start), Some(end), Some(count)) => {
                if count < 2 || !(start.is_finite() && end.is_finite()) {
                    return Err(FredholmError::InvalidConfig(
                        "solve.output_grid: needs finite start/end and count ≥ 2".into(),
                    ));
                }
                (0..count)
                    .map(|i| start + (end - start) * i as f64 / (count - 1) as f64)
                    .collect()
            }
            _ => {
                return Err(FredholmError::InvalidConfig(
                    "solve.output_grid: give either points or all of start/end/count".into(),
                ))
            }
        },
    };
    if output_grid.is_empty() {
        return Err(FredholmError::InvalidConfig("solve.output_grid: grid is empty".into()));
    }
    Ok(SolveSpec {
        lambda: cx(raw.lambda),
        rhs: raw.rhs.clone(),
        output_grid,
        solvability_rel: raw.solvability_rel.unwrap_or(1e-6),
        residual_rel: raw.residual_rel.unwrap_or(1e-6),
    })
}

fn default_output_grid() -> Vec<f64> {
    (0..41).map(|i| -4.0 + 0.2 * i as f64).collect()
}

fn build_validate(raw: Option<&RawValidate>) -> Result<ValidateSpec> {
    let von_koch_nodes = raw
        .and_then(|r| r.von_koch_nodes.clone())
        .unwrap_or_else(|| vec![4, 8, 12]);
    let lambdas = raw
        .and_then(|r| r.lambdas.clone())
        .map(|ls| ls.into_iter().map(cx).collect())
        .unwrap_or_else(|| {
            vec![
                Complex::new(0.0, 0.0),
                Complex::new(1.0, 0.0),
                Complex::new(-1.0, 0.0),
                Complex::new(0.0, 1.0),
            ]
        });
    let gap_tol = raw.and_then(|r| r.gap_tol).unwrap_or(1e-10);
    if !(gap_tol.is_finite() && gap_tol > 0.0) {
        return Err(FredholmError::InvalidConfig(format!(
            "validate.gap_tol: must be positive and finite, got {gap_tol}"
        )));
    }
    Ok(ValidateSpec { von_koch_nodes, lambdas, gap_tol })
}
