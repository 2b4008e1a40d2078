//! Command-line front end: `run`, `validate`, `analyze` and `selftest`.
//!
//! Exit codes: 0 success, 1 runtime failure or failed check, 2 invalid
//! input, 3 incompatible domain/adversary/player triple.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::adversary::{check_validity, ValidityReport, DEFAULT_Z_GRID};
use crate::analysis::{fit_scaling, CellMean, ScalingFit, Weighting};
use crate::config::{manifest, AdversarySpec, DomainSpec, ExperimentConfig, MeanSpec, ResolvedCell};
use crate::error::{Error, Result};
use crate::geometry::Domain;
use crate::harness::{
    adversary_rng, derive_seed, monte_carlo, secret_rng, with_workers, Cell, CellOutcome, RunOptions,
};

#[derive(Debug, Parser)]
#[command(name = "banditlab", version, about = "Bandit linear optimization experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run every grid cell of an experiment config.
    Run(RunArgs),
    /// Check that a loss distribution is valid on a domain.
    Validate(ValidateArgs),
    /// Fit scaling exponents and write plot data from a results directory.
    Analyze(AnalyzeArgs),
    /// Run the built-in enumeration and grid checks.
    Selftest(SelftestArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Experiment config or a manifest from an earlier run.
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory; overrides `output_dir` in the config.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads; defaults to machine parallelism.
    #[arg(long)]
    pub workers: Option<usize>,
    /// Replaces the config's master seed.
    #[arg(long)]
    pub seed_override: Option<u64>,
    /// Record wall-clock time per run; CSVs are then no longer reproducible.
    #[arg(long)]
    pub timing: bool,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    /// Adversary spec as inline JSON or `@path`.
    #[arg(long)]
    pub adversary: String,
    /// Domain spec as inline JSON or `@path`; defaults to the
    /// construction's own domain.
    #[arg(long)]
    pub domain: Option<String>,
    /// Horizon used to resolve "auto" parameters.
    #[arg(long, default_value_t = 10_000)]
    pub horizon: u64,
    #[arg(long, default_value_t = 1_000_000)]
    pub samples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Tail thresholds, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub z: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum WeightingArg {
    Equal,
    InverseVariance,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    /// Results directory containing `aggregate.csv`.
    pub dir: PathBuf,
    /// Where to write `fit.json` and plot data; defaults to `dir`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "equal")]
    pub weighting: WeightingArg,
}

#[derive(Debug, Args)]
pub struct SelftestArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

/// Parses `std::env::args` and runs; returns the process exit code.
pub fn main() -> i32 {
    let cli = Cli::parse();
    match cli.command {
        Command::Run(a) => cmd_run(&a),
        Command::Validate(a) => cmd_validate(&a),
        Command::Analyze(a) => cmd_analyze(&a),
        Command::Selftest(a) => cmd_selftest(&a),
    }
}

/// Exit code for an error raised while running an experiment.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::Json(_) | Error::InvalidParameter(_) | Error::Precondition(_) => 2,
        Error::Incompatible(_)
        | Error::ChannelMismatch(_)
        | Error::NoCornerSet(_)
        | Error::DimensionMismatch { .. } => 3,
        _ => 1,
    }
}

/// One line of `runs.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRow {
    pub experiment_id: String,
    pub domain_kind: String,
    pub dim: usize,
    pub adversary_kind: String,
    pub player_kind: String,
    #[serde(rename = "T")]
    pub horizon: u64,
    pub repetition: usize,
    pub seed: u64,
    pub sigma_or_j: String,
    pub regret: f64,
    pub error: f64,
    pub wall_ms: f64,
}

/// One line of `aggregate.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub experiment_id: String,
    pub domain_kind: String,
    pub adversary_kind: String,
    pub player_kind: String,
    pub protocol: String,
    pub dim: usize,
    #[serde(rename = "T")]
    pub horizon: u64,
    pub repetitions: usize,
    pub failures: usize,
    pub mean: f64,
    pub stderr: f64,
    pub q05: f64,
    pub q50: f64,
    pub q95: f64,
    pub upper_bound: Option<f64>,
    /// On the protocol's scale: error bounds are multiplied by `T` for
    /// regret runs.
    pub lower_bound: Option<f64>,
    /// Whether the source bound is stated for error or regret.
    pub lower_bound_kind: Option<String>,
}

/// Everything a finished experiment produced.
#[derive(Debug)]
pub struct RunSummary {
    pub outcomes: Vec<CellOutcome>,
    pub resolved: Vec<ResolvedCell>,
    pub runs: Vec<RunRow>,
    pub aggregate: Vec<AggregateRow>,
}

impl RunSummary {
    pub fn failures(&self) -> usize {
        self.outcomes.iter().map(|o| o.failures.len()).sum()
    }
}

/// Resolves, runs and writes `runs.csv`, `aggregate.csv`,
/// `diagnostics.csv` and `manifest.json` into `out`.
pub fn run_experiment(
    cfg: &ExperimentConfig,
    raw_config: &Value,
    out: &Path,
    workers: Option<usize>,
    timing: bool,
) -> Result<RunSummary> {
    let resolved = cfg.resolve_all()?;
    let opts = RunOptions { trajectory: cfg.trajectory };
    let outcomes = with_workers(workers, || {
        cfg.cells()
            .into_iter()
            .map(|(dim, horizon)| {
                let cell = Cell {
                    dim,
                    horizon,
                    protocol: cfg.protocol,
                    repetitions: cfg.repetitions,
                    master_seed: cfg.master_seed,
                };
                monte_carlo(cell, opts, |_, rng| cfg.build_trial(dim, horizon, rng).map(|(t, _)| t))
            })
            .collect::<Result<Vec<_>>>()
    })??;

    let mut runs = Vec::new();
    let mut aggregate = Vec::new();
    let mut diagnostics = Vec::new();
    for (o, res) in outcomes.iter().zip(&resolved) {
        let first = &o.runs[0].1;
        for (rep, r) in &o.runs {
            runs.push(RunRow {
                experiment_id: cfg.experiment_id.clone(),
                domain_kind: r.domain_kind.to_string(),
                dim: r.dim,
                adversary_kind: r.adversary_kind.to_string(),
                player_kind: r.player_kind.to_string(),
                horizon: r.horizon,
                repetition: *rep,
                seed: r.seed,
                sigma_or_j: r.secret.clone().unwrap_or_default(),
                regret: r.regret,
                error: r.error.unwrap_or(r.average_error),
                wall_ms: if timing { r.wall_ms } else { 0.0 },
            });
            for (k, v) in &r.diagnostics {
                diagnostics.push((r.dim, r.horizon, *rep, k.clone(), *v));
            }
        }
        let s = &o.stats;
        aggregate.push(AggregateRow {
            experiment_id: cfg.experiment_id.clone(),
            domain_kind: first.domain_kind.to_string(),
            adversary_kind: first.adversary_kind.to_string(),
            player_kind: first.player_kind.to_string(),
            protocol: cfg.protocol.as_str().to_string(),
            dim: s.dim,
            horizon: s.horizon,
            repetitions: s.repetitions,
            failures: o.failures.len(),
            mean: s.mean,
            stderr: s.stderr,
            q05: s.q05,
            q50: s.q50,
            q95: s.q95,
            upper_bound: res.upper_bound,
            lower_bound: res.lower_bound,
            lower_bound_kind: res.lower_bound_kind.map(|k| {
                serde_json::to_value(k).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default()
            }),
        });
    }

    fs::create_dir_all(out)?;
    write_csv(&out.join("runs.csv"), &runs)?;
    write_csv(&out.join("aggregate.csv"), &aggregate)?;
    let mut w = csv::Writer::from_path(out.join("diagnostics.csv"))?;
    w.write_record(["dim", "T", "repetition", "name", "value"])?;
    for (d, t, rep, k, v) in &diagnostics {
        w.serialize((d, t, rep, k, v))?;
    }
    w.flush()?;
    let m = manifest(raw_config, &resolved, cfg.master_seed);
    let mut f = fs::File::create(out.join("manifest.json"))?;
    serde_json::to_writer_pretty(&mut f, &m)?;
    writeln!(f)?;
    Ok(RunSummary { outcomes, resolved, runs, aggregate })
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn cmd_run(a: &RunArgs) -> i32 {
    let (mut cfg, mut raw) = match ExperimentConfig::load(&a.config) {
        Ok(v) => v,
        Err(e) => {
            eprintln!("error: {e}");
            return 2;
        }
    };
    if let Some(s) = a.seed_override {
        cfg.master_seed = s;
        raw["master_seed"] = s.into();
    }
    let out = match a.out.clone().or_else(|| cfg.output_dir.as_ref().map(PathBuf::from)) {
        Some(o) => o,
        None => {
            eprintln!("error: no output directory; pass --out or set output_dir");
            return 2;
        }
    };
    match run_experiment(&cfg, &raw, &out, a.workers, a.timing) {
        Ok(s) => {
            for o in &s.outcomes {
                for (rep, e) in &o.failures {
                    eprintln!("error: d = {}, T = {}, repetition {rep}: {e}", o.cell.dim, o.cell.horizon);
                }
            }
            for r in &s.aggregate {
                println!(
                    "d={} T={} mean={:.6} stderr={:.6} reps={}",
                    r.dim, r.horizon, r.mean, r.stderr, r.repetitions
                );
            }
            println!("wrote {}", out.display());
            if s.failures() > 0 {
                1
            } else {
                0
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

/// Reads inline JSON or `@path`.
fn json_arg(s: &str) -> Result<Value> {
    let text = match s.strip_prefix('@') {
        Some(p) => fs::read_to_string(p).map_err(|e| Error::Config(format!("{p}: {e}")))?,
        None => s.to_string(),
    };
    serde_json::from_str(&text).map_err(|e| Error::Config(e.to_string()))
}

fn parse_spec<T: for<'de> Deserialize<'de>>(s: &str) -> Result<T> {
    serde_json::from_value(json_arg(s)?).map_err(|e| Error::Config(e.to_string()))
}

/// Domain for a validation run: the explicit spec, or the construction's
/// natural domain at the adversary's dimension.
pub fn validation_domain(adv: &AdversarySpec, domain: Option<&DomainSpec>) -> Result<Domain> {
    let adv_dim = adversary_dim(adv);
    match domain {
        Some(spec) => match (spec.dim, adv_dim) {
            (Some(_), _) => spec.build_standalone(),
            (None, Some(d)) => spec.build(d),
            (None, None) => Err(Error::Config("give `dim` in the domain or adversary spec".into())),
        },
        None => {
            let kind = adv.construction().ok_or_else(|| {
                Error::Config(format!("{} needs an explicit --domain", adv.kind_name()))
            })?;
            let d = adv_dim.ok_or_else(|| Error::Config("adversary spec needs `dim`".into()))?;
            kind.natural_domain(d)
        }
    }
}

fn adversary_dim(adv: &AdversarySpec) -> Option<usize> {
    
    match adv {
        AdversarySpec::ShrinkToBounded { inner, .. } => adversary_dim(inner),
        AdversarySpec::GenericGaussian { dim, mean: MeanSpec::Vector(m), .. } => dim.or(Some(m.len())),
        AdversarySpec::GenericGaussian { dim, .. }
        | AdversarySpec::ShiftedBallConstruction { dim, .. }
        | AdversarySpec::CylinderConstruction { dim, .. }
        | AdversarySpec::SimplexConstruction { dim, .. }
        | AdversarySpec::HypercubeConstruction { dim, .. }
        | AdversarySpec::BinarySequence { dim, .. } => *dim,
    }
}

/// Builds the model described by the arguments and runs the validity check.
pub fn validate(
    adversary: &AdversarySpec,
    domain: Option<&DomainSpec>,
    horizon: u64,
    samples: usize,
    seed: u64,
    z: &[f64],
) -> Result<ValidityReport> {
    let dom = validation_domain(adversary, domain)?;
    let run_seed = derive_seed(seed, dom.dim(), horizon, 0);
    let (mut model, _) = adversary.build(&dom, horizon, &mut secret_rng(run_seed))?;
    check_validity(&mut model, &dom, samples, z, &mut adversary_rng(run_seed))
}

pub fn cmd_validate(a: &ValidateArgs) -> i32 {
    let parsed = parse_spec::<AdversarySpec>(&a.adversary).and_then(|adv| {
        let dom = a.domain.as_deref().map(parse_spec::<DomainSpec>).transpose()?;
        Ok((adv, dom))
    });
    let (adv, dom) = match parsed {
        Ok(v) => v,
        Err(e) => {
            eprintln!("error: {e}");
            return 2;
        }
    };
    let z = a.z.clone().unwrap_or_else(|| DEFAULT_Z_GRID.to_vec());
    match validate(&adv, dom.as_ref(), a.horizon, a.samples, a.seed, &z) {
        Ok(report) => {
            println!("{report}");
            if report.passed {
                0
            } else {
                1
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Io(_) | Error::Csv(_) => 1,
                _ => 2,
            }
        }
    }
}

/// Fit and plot data computed from an aggregate table.
#[derive(Debug)]
pub struct Analysis {
    pub fit: Result<ScalingFit>,
    /// File name and contents of each plot-data file.
    pub plots: Vec<(String, String)>,
}

pub fn read_aggregate(dir: &Path) -> Result<Vec<AggregateRow>> {
    let path = dir.join("aggregate.csv");
    let mut r = csv::Reader::from_path(&path)
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

pub fn analyze(rows: &[AggregateRow], weighting: Weighting) -> Analysis {
    let cells: Vec<CellMean> = rows
        .iter()
        .map(|r| CellMean { dim: r.dim, horizon: r.horizon, mean: r.mean, stderr: r.stderr })
        .collect();
    let metric = rows.first().map(|r| r.protocol.as_str()).unwrap_or("regret");
    let mut by_d: BTreeMap<usize, Vec<&AggregateRow>> = BTreeMap::new();
    let mut by_t: BTreeMap<u64, Vec<&AggregateRow>> = BTreeMap::new();
    for r in rows {
        by_d.entry(r.dim).or_default().push(r);
        by_t.entry(r.horizon).or_default().push(r);
    }
    let mut plots = Vec::new();
    for (d, mut rs) in by_d {
        rs.sort_by_key(|r| r.horizon);
        let pts = rs.iter().map(|r| (r.horizon as f64, r.mean, r.lower_bound)).collect::<Vec<_>>();
        plots.push((format!("{metric}_vs_T_d{d}.dat"), plot_text("T", metric, &pts)));
    }
    for (t, mut rs) in by_t {
        rs.sort_by_key(|r| r.dim);
        let pts = rs.iter().map(|r| (r.dim as f64, r.mean, r.lower_bound)).collect::<Vec<_>>();
        plots.push((format!("{metric}_vs_d_T{t}.dat"), plot_text("d", metric, &pts)));
    }
    Analysis { fit: fit_scaling(&cells, weighting), plots }
}

fn plot_text(x: &str, y: &str, pts: &[(f64, f64, Option<f64>)]) -> String {
    let overlay = pts.iter().all(|p| p.2.is_some());
    let mut s = if overlay {
        format!("# {x} {y} lower_bound\n")
    } else {
        format!("# {x} {y}\n")
    };
    for (px, py, lb) in pts {
        match (overlay, lb) {
            (true, Some(lb)) => s.push_str(&format!("{px} {py:e} {lb:e}\n")),
            _ => s.push_str(&format!("{px} {py:e}\n")),
        }
    }
    s
}

pub fn cmd_analyze(a: &AnalyzeArgs) -> i32 {
    let rows = match read_aggregate(&a.dir) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return 2;
        }
    };
    let weighting = match a.weighting {
        WeightingArg::Equal => Weighting::Equal,
        WeightingArg::InverseVariance => Weighting::InverseVariance,
    };
    let out = a.out.clone().unwrap_or_else(|| a.dir.clone());
    let res = analyze(&rows, weighting);
    let write = || -> Result<()> {
        fs::create_dir_all(&out)?;
        for (name, text) in &res.plots {
            fs::write(out.join(name), text)?;
        }
        if let Ok(fit) = &res.fit {
            let f = fs::File::create(out.join("fit.json"))?;
            serde_json::to_writer_pretty(f, fit)?;
        }
        Ok(())
    };
    if let Err(e) = write() {
        eprintln!("error: {e}");
        return 1;
    }
    match res.fit {
        Ok(fit) => {
            println!(
                "alpha={:.4} beta={:.4} logC={:.4} r2={:.4} cells={}",
                fit.alpha, fit.beta, fit.log_c, fit.r2, fit.cells
            );
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}

pub fn cmd_selftest(a: &SelftestArgs) -> i32 {
    match crate::selftest::run_all(a.seed) {
        Ok(suites) => {
            let mut ok = true;
            for s in &suites {
                println!(
                    "{} {}: {} checks, {} failures",
                    if s.passed() { "PASS" } else { "FAIL" },
                    s.name,
                    s.checks,
                    s.failures
                );
                ok &= s.passed();
            }
            if ok {
                0
            } else {
                1
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(&Error::Config("x".into())), 2);
        assert_eq!(exit_code(&Error::ChannelMismatch("x".into())), 3);
        assert_eq!(exit_code(&Error::DimensionMismatch { expected: 1, got: 2 }), 3);
        assert_eq!(exit_code(&Error::CorruptedChannel("x".into())), 1);
    }

    #[test]
    fn plot_overlay_needs_every_row() {
        let t = plot_text("T", "regret", &[(10.0, 1.0, Some(0.5)), (100.0, 2.0, Some(1.0))]);
        assert_eq!(t, "# T regret lower_bound\n10 1e0 5e-1\n100 2e0 1e0\n");
        let t = plot_text("T", "regret", &[(10.0, 1.0, Some(0.5)), (100.0, 2.0, None)]);
        assert!(t.starts_with("# T regret\n"));
    }

    #[test]
    fn validation_domain_defaults() {
        let adv: AdversarySpec =
            serde_json::from_value(json!({"kind": "cylinder_construction", "dim": 5})).unwrap();
        assert_eq!(validation_domain(&adv, None).unwrap(), Domain::cylinder(5).unwrap());
        let adv: AdversarySpec =
            serde_json::from_value(json!({"kind": "generic_gaussian", "mean": [2.0, 0.0]})).unwrap();
        assert!(validation_domain(&adv, None).is_err());
        let dom: DomainSpec = serde_json::from_value(json!({"kind": "unit_ball"})).unwrap();
        assert_eq!(validation_domain(&adv, Some(&dom)).unwrap(), Domain::unit_ball(2).unwrap());
    }
}
