//! Command-line front end: run configuration, flag parsing and output.
//!
//! A run is fully described by a [`RunConfig`], which can be read from a
//! TOML file and overridden by flags. Exit codes: 0 success, 1 a failing
//! verdict, 2 an invalid configuration, 3 quadrature non-convergence.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::besselpairs::{
    geometric_grid, poincare_pair, power_pair, validate_pair, BesselPair, PairValidation, PoincareWeight,
};
use crate::error::{Error, Result};
use crate::geometry::ModelManifold;
use crate::profiles::{make_bump, make_testfunction, random_testfunction, TestFunction};
use crate::quadrature::QuadratureSpec;
use crate::sharpness::{estimate_target, ladder, ConstantEstimate, LadderKind, SharpnessTarget};
use crate::verifier::{self, Target, VerificationReport};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAIL: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_QUADRATURE: i32 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    #[default]
    Verify,
    Sharpness,
    Sweep,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ProfileKind {
    #[default]
    Random,
    Bump,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum PairKind {
    #[default]
    Poincare,
    Power,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Json,
    Csv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SharpnessConfig {
    /// Spherical-harmonic degree; the target's default when absent.
    pub mode: Option<usize>,
    pub rmin: Option<f64>,
    pub rmax: Option<f64>,
    pub ladder: Option<LadderKind>,
    pub levels: usize,
    /// Nodes on the finest level.
    pub nodes: usize,
}

impl Default for SharpnessConfig {
    fn default() -> Self {
        Self {
            mode: None,
            rmin: None,
            rmax: None,
            ladder: None,
            levels: 4,
            nodes: 1600,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridAxis {
    pub param: String,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    /// Axes in declaration order; the first varies slowest.
    pub grid: Vec<GridAxis>,
}

/// Everything a run depends on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub command: Command,
    pub target: String,
    /// `euclidean`, `hyperbolic` or `sinh:<k>` (curvature `-k²`). When
    /// absent, verification runs on hyperbolic space and sharpness runs on
    /// the target's own manifold.
    pub manifold: Option<String>,
    #[serde(rename = "N")]
    pub dimension: usize,
    pub lambda: f64,
    pub alpha: f64,
    pub beta: f64,
    pub j: i64,
    pub modes: Vec<usize>,
    pub support: (f64, f64),
    pub seed: u64,
    pub profile: ProfileKind,
    pub pair: PairKind,
    pub quadrature: QuadratureSpec,
    pub output: Option<PathBuf>,
    pub format: Format,
    pub sharpness: SharpnessConfig,
    pub sweep: SweepConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            command: Command::Verify,
            target: "eq12".into(),
            manifold: None,
            dimension: 3,
            lambda: 0.0,
            alpha: 0.0,
            beta: 0.0,
            j: -1,
            modes: vec![0],
            support: (1.0, 3.0),
            seed: 0,
            profile: ProfileKind::Random,
            pair: PairKind::Poincare,
            quadrature: QuadratureSpec::default(),
            output: None,
            format: Format::Json,
            sharpness: SharpnessConfig::default(),
            sweep: SweepConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::invalid("config", e.to_string()))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::invalid("config", e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::invalid("config", format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    /// Checks that do not need any numerics. Target-specific parameter
    /// ranges are checked again where they are used.
    pub fn validate(&self) -> Result<()> {
        if self.dimension < 2 {
            return Err(Error::invalid("N", format!("need N >= 2, got {}", self.dimension)));
        }
        for (field, v) in [("lambda", self.lambda), ("alpha", self.alpha), ("beta", self.beta)] {
            if !v.is_finite() {
                return Err(Error::invalid(field, format!("must be finite, got {v}")));
            }
        }
        if self.j < -1 {
            return Err(Error::invalid("j", format!("need j >= -1, got {}", self.j)));
        }
        let lambda_1 = crate::besselpairs::poincare_constant(self.dimension);
        if !(0.0..=lambda_1).contains(&self.lambda) {
            return Err(Error::invalid(
                "lambda",
                format!("need 0 <= lambda <= {lambda_1} for N = {}, got {}", self.dimension, self.lambda),
            ));
        }
        if let Some(&n) = self.modes.iter().find(|&&n| (n as i64) < self.j + 1) {
            return Err(Error::invalid("modes", format!("mode {n} is not allowed for j = {}", self.j)));
        }
        let (s0, s1) = self.support;
        if !(s0 > 0.0 && s1 > s0 && s1.is_finite()) {
            return Err(Error::invalid("support", format!("need 0 < s0 < s1, got ({s0}, {s1})")));
        }
        if self.seed > i64::MAX as u64 {
            return Err(Error::invalid("seed", "must fit in a signed 64-bit integer"));
        }
        self.quadrature.validate()?;
        if self.sharpness.levels == 0 {
            return Err(Error::invalid("levels", "need at least one level"));
        }
        match self.command {
            Command::Verify => {
                self.target.parse::<Target>()?;
            }
            Command::Sharpness => {
                self.target.parse::<SharpnessTarget>()?;
            }
            Command::Sweep => {
                if self.target.parse::<Target>().is_err() {
                    self.target.parse::<SharpnessTarget>()?;
                }
                for axis in &self.sweep.grid {
                    if !SWEEP_PARAMS.contains(&axis.param.as_str()) {
                        return Err(Error::invalid(
                            "grid",
                            format!("cannot sweep `{}`; expected one of {SWEEP_PARAMS:?}", axis.param),
                        ));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn manifold(&self, default: &str) -> Result<ModelManifold> {
        parse_manifold(self.manifold.as_deref().unwrap_or(default), self.dimension)
    }

    pub fn test_function(&self, manifold: &ModelManifold) -> Result<TestFunction> {
        match self.profile {
            ProfileKind::Random => random_testfunction(manifold, &self.modes, self.support, self.seed, self.j),
            ProfileKind::Bump => {
                let terms = self
                    .modes
                    .iter()
                    .map(|&n| make_bump(self.support.0, self.support.1).map(|p| (n, p)))
                    .collect::<Result<Vec<_>>>()?;
                make_testfunction(manifold, terms, self.j)
            }
        }
    }

    pub fn bessel_pair(&self) -> Result<BesselPair> {
        match self.pair {
            PairKind::Poincare => Ok(poincare_pair(&PoincareWeight::new(self.dimension, self.lambda)?)),
            PairKind::Power => power_pair(self.dimension, self.alpha),
        }
    }

    fn sharpness_target(&self) -> Result<SharpnessTarget> {
        Ok(match self.target.parse::<SharpnessTarget>()? {
            SharpnessTarget::Ckn { .. } => SharpnessTarget::Ckn {
                alpha: self.alpha,
                beta: self.beta,
            },
            t => t,
        })
    }
}

/// `euclidean`, `hyperbolic`, or `sinh:<k>` for `ψ(r) = sinh(k r)/k`.
pub fn parse_manifold(name: &str, dimension: usize) -> Result<ModelManifold> {
    if let Some(k) = name.strip_prefix("sinh:") {
        let k: f64 = k
            .parse()
            .map_err(|_| Error::invalid("manifold", format!("bad curvature scale in `{name}`")))?;
        if !(k > 0.0 && k.is_finite()) {
            return Err(Error::invalid("manifold", format!("need k > 0 in `{name}`")));
        }
        return ModelManifold::custom(
            dimension,
            name,
            move |r| (k * r).sinh() / k,
            move |r| (k * r).cosh(),
            move |r| k * (k * r).sinh(),
        );
    }
    ModelManifold::by_name(name, dimension)
}

pub fn verify(cfg: &RunConfig) -> Result<VerificationReport> {
    let target: Target = cfg.target.parse()?;
    let manifold = cfg.manifold("hyperbolic")?;
    let u = cfg.test_function(&manifold)?;
    let spec = &cfg.quadrature;
    let alpha = cfg.alpha;
    match target {
        Target::Eq12 => verifier::verify_eq12(&u, cfg.lambda, spec),
        Target::Thm21 => verifier::verify_thm21(&u, &cfg.bessel_pair()?, cfg.j, spec),
        Target::Model27 => verifier::verify_model(&u, &cfg.bessel_pair()?, cfg.j, spec),
        Target::Thm22 => verifier::verify_thm22(&u, move |r: f64| r.powf(-alpha), cfg.j, spec),
        Target::Model28 => verifier::verify_model_identity(&u, move |r: f64| r.powf(-alpha), cfg.j, spec),
        Target::Cor23 => verifier::verify_cor23(&u, cfg.lambda, cfg.j, spec),
        Target::Cor23Remark => verifier::verify_cor23_remark(&u, spec),
        Target::Cor24 => verifier::verify_cor24(&u, cfg.alpha, cfg.j, spec),
        Target::Ckn25 => verifier::verify_ckn(&u, cfg.alpha, cfg.beta, spec),
        Target::Ckn26 => verifier::verify_ckn_remainder(&u, cfg.alpha, cfg.beta, spec),
    }
}

pub fn sharpness(cfg: &RunConfig) -> Result<ConstantEstimate> {
    let target = cfg.sharpness_target()?;
    let manifold = match &cfg.manifold {
        Some(name) => parse_manifold(name, cfg.dimension)?,
        None => target.default_manifold(cfg.dimension)?,
    };
    let (kind, rmin, rmax) = target.default_ladder();
    let s = &cfg.sharpness;
    let levels = ladder(
        s.ladder.unwrap_or(kind),
        s.rmin.unwrap_or(rmin),
        s.rmax.unwrap_or(rmax),
        s.nodes,
        s.levels,
    )?;
    estimate_target(target, &manifold, s.mode.unwrap_or(target.default_mode()), &levels)
}

pub const SWEEP_PARAMS: [&str; 6] = ["lambda", "alpha", "beta", "j", "N", "seed"];

fn set_param(cfg: &mut RunConfig, param: &str, value: f64) -> Result<()> {
    let integer = |v: f64| {
        if v.fract() == 0.0 && v.abs() < 9.0e15 {
            Ok(v as i64)
        } else {
            Err(Error::invalid("grid", format!("`{param}` needs integer values, got {v}")))
        }
    };
    match param {
        "lambda" => cfg.lambda = value,
        "alpha" => cfg.alpha = value,
        "beta" => cfg.beta = value,
        "j" => cfg.j = integer(value)?,
        "N" => cfg.dimension = usize::try_from(integer(value)?).map_err(|_| Error::invalid("N", "must be >= 2"))?,
        "seed" => cfg.seed = u64::try_from(integer(value)?).map_err(|_| Error::invalid("seed", "must be >= 0"))?,
        _ => return Err(Error::invalid("grid", format!("cannot sweep `{param}`"))),
    }
    Ok(())
}

/// Cartesian product of the grid axes, first axis slowest. A grid with no
/// axes, or with an empty axis, has no points.
pub fn grid_points(grid: &[GridAxis]) -> Vec<Vec<f64>> {
    if grid.is_empty() || grid.iter().any(|a| a.values.is_empty()) {
        return Vec::new();
    }
    let mut points = vec![Vec::new()];
    for axis in grid {
        points = points
            .into_iter()
            .flat_map(|p| {
                axis.values.iter().map(move |&v| {
                    let mut q = p.clone();
                    q.push(v);
                    q
                })
            })
            .collect();
    }
    points
}

pub enum SweepRows {
    Verify(Vec<(Vec<f64>, VerificationReport)>),
    Sharpness(Vec<(Vec<f64>, ConstantEstimate)>),
}

pub fn sweep(cfg: &RunConfig) -> Result<SweepRows> {
    let points = grid_points(&cfg.sweep.grid);
    let configure = |p: &Vec<f64>| -> Result<RunConfig> {
        let mut c = cfg.clone();
        for (axis, &v) in cfg.sweep.grid.iter().zip(p) {
            set_param(&mut c, &axis.param, v)?;
        }
        c.validate()?;
        Ok(c)
    };
    if cfg.target.parse::<Target>().is_ok() {
        let rows = points
            .par_iter()
            .map(|p| Ok((p.clone(), verify(&configure(p)?)?)))
            .collect::<Result<Vec<_>>>()?;
        Ok(SweepRows::Verify(rows))
    } else {
        let rows = points
            .par_iter()
            .map(|p| Ok((p.clone(), sharpness(&configure(p)?)?)))
            .collect::<Result<Vec<_>>>()?;
        Ok(SweepRows::Sharpness(rows))
    }
}

/// Full-precision rendering used in every CSV cell.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn csv_string(header: &[String], rows: &[Vec<String>]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("writing to memory");
    for row in rows {
        w.write_record(row).expect("writing to memory");
    }
    String::from_utf8(w.into_inner().expect("writing to memory")).expect("csv output is utf-8")
}

const REPORT_COLUMNS: [&str; 9] = ["target", "N", "manifold", "lhs", "rhs", "gap_or_residual", "scale", "kind", "verdict"];

fn report_cells(r: &VerificationReport) -> Vec<String> {
    let kind = serde_json::to_value(r.kind).expect("enum");
    let verdict = serde_json::to_value(r.verdict).expect("enum");
    vec![
        r.target.to_string(),
        r.parameters.dimension.to_string(),
        r.parameters.manifold.clone(),
        fmt_f64(r.lhs),
        fmt_f64(r.rhs),
        fmt_f64(r.gap_or_residual),
        fmt_f64(r.scale),
        kind.as_str().unwrap_or_default().to_string(),
        verdict.as_str().unwrap_or_default().to_string(),
    ]
}

pub fn report_csv(r: &VerificationReport) -> String {
    let header: Vec<String> = REPORT_COLUMNS.iter().map(|s| s.to_string()).collect();
    csv_string(&header, &[report_cells(r)])
}

/// One row per ladder level, then a row with the extrapolated value.
pub fn estimate_csv(e: &ConstantEstimate) -> String {
    let header: Vec<String> = ["level", "nodes", "r_min", "r_max", "value"].iter().map(|s| s.to_string()).collect();
    let mut rows: Vec<Vec<String>> = e
        .levels
        .iter()
        .zip(&e.values_per_level)
        .enumerate()
        .map(|(k, (l, v))| vec![k.to_string(), l.nodes.to_string(), fmt_f64(l.r_min), fmt_f64(l.r_max), fmt_f64(*v)])
        .collect();
    rows.push(vec!["extrapolated".into(), String::new(), String::new(), String::new(), fmt_f64(e.extrapolated)]);
    csv_string(&header, &rows)
}

pub fn sweep_csv(grid: &[GridAxis], rows: &SweepRows) -> String {
    let mut header: Vec<String> = grid.iter().map(|a| a.param.clone()).collect();
    let params = |p: &[f64]| p.iter().map(|v| fmt_f64(*v)).collect::<Vec<_>>();
    let body: Vec<Vec<String>> = match rows {
        SweepRows::Verify(rows) => {
            header.extend(REPORT_COLUMNS.iter().map(|s| s.to_string()));
            rows.iter()
                .map(|(p, r)| {
                    let mut row = params(p);
                    row.extend(report_cells(r));
                    row
                })
                .collect()
        }
        SweepRows::Sharpness(rows) => {
            header.extend(["value", "flagged"].iter().map(|s| s.to_string()));
            rows.iter()
                .map(|(p, e)| {
                    let mut row = params(p);
                    row.push(fmt_f64(e.value));
                    row.push(e.flagged.to_string());
                    row
                })
                .collect()
        }
    };
    csv_string(&header, &body)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairReport {
    pub pair: String,
    #[serde(rename = "N")]
    pub dimension: usize,
    pub r_min: f64,
    pub r_max: f64,
    pub points: usize,
    pub tolerance: f64,
    pub max_residual: f64,
    pub worst_radius: f64,
    pub passed: bool,
}

/// Result of one command: text to emit and the exit code it implies.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub output: String,
    pub exit_code: i32,
}

pub fn exit_code_for(e: &Error) -> i32 {
    match e {
        Error::QuadratureNotConverged { .. } | Error::NonFiniteIntegrand { .. } => EXIT_QUADRATURE,
        _ => EXIT_CONFIG,
    }
}

/// Runs a configured command and renders its output.
pub fn execute(cfg: &RunConfig) -> Result<Outcome> {
    cfg.validate()?;
    match cfg.command {
        Command::Verify => {
            let r = verify(cfg)?;
            let output = match cfg.format {
                Format::Json => r.to_json() + "\n",
                Format::Csv => report_csv(&r),
            };
            Ok(Outcome {
                output,
                exit_code: if r.passed() { EXIT_OK } else { EXIT_FAIL },
            })
        }
        Command::Sharpness => {
            let e = sharpness(cfg)?;
            let output = match cfg.format {
                Format::Json => serde_json::to_string(&e).expect("estimate serializes") + "\n",
                Format::Csv => estimate_csv(&e),
            };
            Ok(Outcome {
                output,
                exit_code: EXIT_OK,
            })
        }
        Command::Sweep => {
            let rows = sweep(cfg)?;
            let failed = matches!(&rows, SweepRows::Verify(r) if r.iter().any(|(_, rep)| !rep.passed()));
            let output = match (cfg.format, &rows) {
                (Format::Csv, _) => sweep_csv(&cfg.sweep.grid, &rows),
                (Format::Json, SweepRows::Verify(r)) => r.iter().fold(String::new(), |mut s, (_, rep)| {
                    let _ = writeln!(s, "{}", rep.to_json());
                    s
                }),
                (Format::Json, SweepRows::Sharpness(r)) => r.iter().fold(String::new(), |mut s, (_, e)| {
                    let _ = writeln!(s, "{}", serde_json::to_string(e).expect("estimate serializes"));
                    s
                }),
            };
            Ok(Outcome {
                output,
                exit_code: if failed { EXIT_FAIL } else { EXIT_OK },
            })
        }
    }
}

pub fn validate_bessel(
    pair: PairKind,
    dimension: usize,
    lambda: f64,
    alpha: f64,
    range: (f64, f64),
    points: usize,
    tolerance: f64,
) -> Result<PairReport> {
    let cfg = RunConfig {
        dimension,
        lambda,
        alpha,
        pair,
        ..RunConfig::default()
    };
    let bp = cfg.bessel_pair()?;
    if !(range.0 > 0.0 && range.1 > range.0 && range.1.is_finite()) {
        return Err(Error::invalid("range", format!("need 0 < rmin < rmax, got {range:?}")));
    }
    if points < 2 {
        return Err(Error::invalid("points", "need at least two grid points"));
    }
    let grid = geometric_grid(range.0, range.1, points);
    let (v, passed) = match validate_pair(&bp, &grid) {
        Ok(v) => {
            let ok = v.max_residual <= tolerance;
            (v, ok)
        }
        Err(Error::NotPositive { r, .. }) => (
            PairValidation {
                max_residual: f64::INFINITY,
                worst_radius: r,
            },
            false,
        ),
        Err(e) => return Err(e),
    };
    Ok(PairReport {
        pair: bp.name().to_string(),
        dimension,
        r_min: range.0,
        r_max: range.1,
        points,
        tolerance,
        max_residual: v.max_residual,
        worst_radius: v.worst_radius,
        passed,
    })
}

#[derive(Debug, Parser)]
#[command(name = "hyperhardy", version, about = "Verify Hardy-type inequalities on model manifolds")]
pub struct Cli {
    #[command(subcommand)]
    pub command: CliCommand,
}

#[derive(Debug, Subcommand)]
pub enum CliCommand {
    /// Evaluate one inequality or identity on a test function.
    ///
    /// CSV columns: target, N, manifold, lhs, rhs, gap_or_residual, scale,
    /// kind, verdict.
    Verify(CommonArgs),
    /// Estimate a best constant on a refinement ladder.
    ///
    /// CSV columns: level, nodes, r_min, r_max, value, with a final
    /// `extrapolated` row.
    Sharpness {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        ladder: LadderArgs,
    },
    /// Run a verification or sharpness target over a parameter grid.
    ///
    /// CSV columns: the swept parameters in grid order, followed by the
    /// `verify` columns, or by value, flagged for sharpness targets.
    Sweep {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        ladder: LadderArgs,
        /// `param=v1,v2,...`; repeat for more axes, first varies slowest.
        #[arg(long = "grid", value_name = "PARAM=VALUES")]
        grid: Vec<String>,
    },
    /// Bessel-pair utilities.
    #[command(subcommand)]
    Bessel(BesselCommand),
}

#[derive(Debug, Subcommand)]
pub enum BesselCommand {
    /// Check the ODE residual of a built-in pair on a geometric grid.
    Validate {
        #[arg(long, value_enum, default_value = "poincare")]
        pair: PairKind,
        #[arg(long = "N", default_value_t = 3)]
        dimension: usize,
        #[arg(long, default_value_t = 1.0)]
        lambda: f64,
        #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
        alpha: f64,
        #[arg(long, default_value_t = 1e-2)]
        rmin: f64,
        #[arg(long, default_value_t = 20.0)]
        rmax: f64,
        #[arg(long, default_value_t = 400)]
        points: usize,
        #[arg(long, default_value_t = 1e-8)]
        tol: f64,
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

#[derive(Debug, Default, Args)]
pub struct CommonArgs {
    /// TOML run configuration; flags override its entries.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub target: Option<String>,
    #[arg(long)]
    pub manifold: Option<String>,
    #[arg(long = "N")]
    pub dimension: Option<usize>,
    #[arg(long, allow_negative_numbers = true)]
    pub lambda: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub alpha: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub beta: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub j: Option<i64>,
    /// Comma-separated harmonic degrees.
    #[arg(long, value_delimiter = ',')]
    pub modes: Option<Vec<usize>>,
    /// Profile support as `s0,s1`.
    #[arg(long, value_delimiter = ',', num_args = 2)]
    pub support: Option<Vec<f64>>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_enum)]
    pub profile: Option<ProfileKind>,
    #[arg(long, value_enum)]
    pub pair: Option<PairKind>,
    #[arg(long)]
    pub rel_tol: Option<f64>,
    #[arg(long)]
    pub abs_tol: Option<f64>,
    #[arg(long)]
    pub max_subdivisions: Option<usize>,
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
}

#[derive(Debug, Default, Args)]
pub struct LadderArgs {
    #[arg(long)]
    pub mode: Option<usize>,
    #[arg(long)]
    pub rmin: Option<f64>,
    #[arg(long)]
    pub rmax: Option<f64>,
    #[arg(long, value_parser = parse_ladder)]
    pub ladder: Option<LadderKind>,
    #[arg(long)]
    pub levels: Option<usize>,
    #[arg(long)]
    pub nodes: Option<usize>,
}

fn parse_ladder(s: &str) -> std::result::Result<LadderKind, String> {
    match s {
        "refine" => Ok(LadderKind::Refine),
        "expand" => Ok(LadderKind::Expand),
        "expand-inward" => Ok(LadderKind::ExpandInward),
        _ => Err(format!("expected refine, expand or expand-inward, got `{s}`")),
    }
}

pub fn parse_grid_flag(s: &str) -> Result<GridAxis> {
    let (param, values) = s
        .split_once('=')
        .ok_or_else(|| Error::invalid("grid", format!("expected PARAM=V1,V2,..., got `{s}`")))?;
    let values = values
        .split(',')
        .map(str::trim)
        .filter(|v| !v.is_empty())
        .map(|v| {
            v.parse::<f64>()
                .map_err(|_| Error::invalid("grid", format!("`{v}` is not a number")))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(GridAxis {
        param: param.trim().to_string(),
        values,
    })
}

impl CommonArgs {
    fn apply(&self, cfg: &mut RunConfig) -> Result<()> {
        if let Some(v) = &self.target {
            cfg.target = v.clone();
        }
        if let Some(v) = &self.manifold {
            cfg.manifold = Some(v.clone());
        }
        if let Some(v) = self.dimension {
            cfg.dimension = v;
        }
        if let Some(v) = self.lambda {
            cfg.lambda = v;
        }
        if let Some(v) = self.alpha {
            cfg.alpha = v;
        }
        if let Some(v) = self.beta {
            cfg.beta = v;
        }
        if let Some(v) = self.j {
            cfg.j = v;
        }
        if let Some(v) = &self.modes {
            cfg.modes = v.clone();
        }
        if let Some(v) = &self.support {
            match v[..] {
                [a, b] => cfg.support = (a, b),
                _ => return Err(Error::invalid("support", "expected two values s0,s1")),
            }
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.profile {
            cfg.profile = v;
        }
        if let Some(v) = self.pair {
            cfg.pair = v;
        }
        if let Some(v) = self.rel_tol {
            cfg.quadrature.rel_tol = v;
        }
        if let Some(v) = self.abs_tol {
            cfg.quadrature.abs_tol = v;
        }
        if let Some(v) = self.max_subdivisions {
            cfg.quadrature.max_subdivisions = v;
        }
        if let Some(v) = &self.output {
            cfg.output = Some(v.clone());
        }
        if let Some(v) = self.format {
            cfg.format = v;
        }
        Ok(())
    }
}

impl LadderArgs {
    fn apply(&self, s: &mut SharpnessConfig) {
        if self.mode.is_some() {
            s.mode = self.mode;
        }
        if self.rmin.is_some() {
            s.rmin = self.rmin;
        }
        if self.rmax.is_some() {
            s.rmax = self.rmax;
        }
        if self.ladder.is_some() {
            s.ladder = self.ladder;
        }
        if let Some(v) = self.levels {
            s.levels = v;
        }
        if let Some(v) = self.nodes {
            s.nodes = v;
        }
    }
}

fn base_config(common: &CommonArgs, command: Command) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    cfg.command = command;
    common.apply(&mut cfg)?;
    Ok(cfg)
}

/// Builds the run configuration a parsed command line describes. `None`
/// for the Bessel utilities, which do not use one.
pub fn config_from_cli(cli: &Cli) -> Result<Option<RunConfig>> {
    Ok(Some(match &cli.command {
        CliCommand::Verify(common) => base_config(common, Command::Verify)?,
        CliCommand::Sharpness { common, ladder } => {
            let mut cfg = base_config(common, Command::Sharpness)?;
            ladder.apply(&mut cfg.sharpness);
            cfg
        }
        CliCommand::Sweep { common, ladder, grid } => {
            let mut cfg = base_config(common, Command::Sweep)?;
            ladder.apply(&mut cfg.sharpness);
            if !grid.is_empty() {
                cfg.sweep.grid = grid.iter().map(|g| parse_grid_flag(g)).collect::<Result<_>>()?;
            }
            cfg
        }
        CliCommand::Bessel(_) => return Ok(None),
    }))
}

fn emit(output: &str, path: Option<&Path>) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, output)
            .map_err(|e| Error::invalid("output", format!("cannot write {}: {e}", p.display()))),
        None => {
            print!("{output}");
            Ok(())
        }
    }
}

fn thread_pool() -> Result<Option<rayon::ThreadPool>> {
    let Ok(v) = std::env::var("HYP_THREADS") else {
        return Ok(None);
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Error::invalid("HYP_THREADS", format!("expected a positive integer, got `{v}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build()
        .map(Some)
        .map_err(|e| Error::invalid("HYP_THREADS", e.to_string()))
}

fn run_parsed(cli: &Cli) -> Result<i32> {
    if let CliCommand::Bessel(BesselCommand::Validate {
        pair,
        dimension,
        lambda,
        alpha,
        rmin,
        rmax,
        points,
        tol,
        output,
    }) = &cli.command
    {
        let report = validate_bessel(*pair, *dimension, *lambda, *alpha, (*rmin, *rmax), *points, *tol)?;
        let text = serde_json::to_string(&report).expect("pair report serializes") + "\n";
        emit(&text, output.as_deref())?;
        return Ok(if report.passed { EXIT_OK } else { EXIT_FAIL });
    }
    let cfg = config_from_cli(cli)?.expect("non-bessel command has a config");
    let outcome = match thread_pool()? {
        Some(pool) => pool.install(|| execute(&cfg))?,
        None => execute(&cfg)?,
    };
    emit(&outcome.output, cfg.output.as_deref())?;
    Ok(outcome.exit_code)
}

/// Entry point used by the binary; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match run_parsed(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code_for(&e)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_round_trip() {
        let mut cfg = RunConfig {
            command: Command::Sweep,
            target: "ckn25".into(),
            manifold: Some("euclidean".into()),
            alpha: -0.5,
            beta: 1.25,
            modes: vec![0, 2],
            support: (0.5, 2.0),
            seed: 17,
            format: Format::Csv,
            ..RunConfig::default()
        };
        cfg.sharpness.ladder = Some(LadderKind::ExpandInward);
        cfg.sharpness.rmin = Some(1e-12);
        cfg.sweep.grid.push(GridAxis {
            param: "alpha".into(),
            values: vec![0.0, 0.1, 1.0 / 3.0],
        });
        let text = cfg.to_toml().unwrap();
        assert_eq!(RunConfig::from_toml(&text).unwrap(), cfg);
    }

    #[test]
    fn unknown_key_is_rejected() {
        let err = RunConfig::from_toml("target = \"eq12\"\nlamda = 0.5\n").unwrap_err();
        assert!(err.to_string().contains("lamda"), "{err}");
    }

    #[test]
    fn partial_file_uses_defaults() {
        let cfg = RunConfig::from_toml("target = \"cor23\"\n[quadrature]\nrel_tol = 1e-9\n").unwrap();
        assert_eq!(cfg.dimension, 3);
        assert_eq!(cfg.quadrature.rel_tol, 1e-9);
        assert_eq!(cfg.quadrature.base_rule, QuadratureSpec::default().base_rule);
    }

    #[test]
    fn grid_order_is_first_axis_slowest() {
        let grid = vec![
            GridAxis {
                param: "alpha".into(),
                values: vec![1.0, 2.0],
            },
            GridAxis {
                param: "beta".into(),
                values: vec![10.0, 20.0, 30.0],
            },
        ];
        let pts = grid_points(&grid);
        assert_eq!(pts.len(), 6);
        assert_eq!(pts[0], vec![1.0, 10.0]);
        assert_eq!(pts[1], vec![1.0, 20.0]);
        assert_eq!(pts[3], vec![2.0, 10.0]);
    }

    #[test]
    fn empty_grid_is_header_only() {
        let cfg = RunConfig {
            command: Command::Sweep,
            target: "eq12".into(),
            format: Format::Csv,
            sweep: SweepConfig {
                grid: vec![GridAxis {
                    param: "lambda".into(),
                    values: vec![],
                }],
            },
            ..RunConfig::default()
        };
        let out = execute(&cfg).unwrap();
        assert_eq!(out.exit_code, EXIT_OK);
        assert_eq!(out.output.lines().count(), 1);
        assert!(out.output.starts_with("lambda,target,"));
    }

    #[test]
    fn grid_flag_parsing() {
        let a = parse_grid_flag("lambda=0,0.25, 0.5").unwrap();
        assert_eq!(a.param, "lambda");
        assert_eq!(a.values, vec![0.0, 0.25, 0.5]);
        assert!(parse_grid_flag("lambda").is_err());
        assert!(parse_grid_flag("lambda=x").is_err());
    }

    #[test]
    fn out_of_range_lambda_names_the_field() {
        let cfg = RunConfig {
            target: "cor23".into(),
            lambda: 5.0,
            ..RunConfig::default()
        };
        let err = execute(&cfg).unwrap_err();
        assert_eq!(exit_code_for(&err), EXIT_CONFIG);
        assert!(err.to_string().contains("lambda"), "{err}");
    }

    #[test]
    fn sinh_manifold_scales_curvature() {
        let m = parse_manifold("sinh:2", 3).unwrap();
        assert!((m.psi(1.0) - 2f64.sinh() / 2.0).abs() < 1e-15);
        assert!(parse_manifold("sinh:-1", 3).is_err());
        assert!(parse_manifold("spherical", 3).is_err());
    }

    #[test]
    fn sharpness_csv_has_extrapolated_row() {
        let cfg = RunConfig {
            command: Command::Sharpness,
            target: "hardy".into(),
            format: Format::Csv,
            sharpness: SharpnessConfig {
                levels: 3,
                nodes: 400,
                ..SharpnessConfig::default()
            },
            ..RunConfig::default()
        };
        let out = execute(&cfg).unwrap();
        let lines: Vec<&str> = out.output.lines().collect();
        assert_eq!(lines[0], "level,nodes,r_min,r_max,value");
        assert_eq!(lines.len(), 5);
        assert!(lines[4].starts_with("extrapolated,"));
    }
}
