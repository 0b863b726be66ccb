//! Command-line front end: check | simulate | rate | bound | ldp, wired to
//! a single TOML config, with a JSON manifest next to every run's outputs.

use clap::{Parser, Subcommand};
use nalgebra::DVector;
use serde::Serialize;
use std::path::{Path, PathBuf};

use crate::coeffs::{
    ellipticity_kappa, regularity_pairs, verify_h2, CoefficientField, LevyMeasure,
    RegularityReport, TorusGrid, DEFAULT_GRID_PER_AXIS,
};
use crate::config::{load_config, Manifest, RunConfig};
use crate::error::{Error, Result};
use crate::mc::{ldp_sweep, LdpSweep, SweepOpts};
use crate::rate::{estimate_J, MinimizeOpts, RateEstimate};
use crate::sim::{simulate_batch, SimConfig};
use crate::symbol::{density_upper_bound, hartman_wintner_margin, DensityBound, MarginReport};

#[derive(Debug, Parser)]
#[command(name = "ldpms", version, about = "Large-deviation toolkit for two-parameter jump diffusions")]
pub struct Cli {
    /// Run configuration: a TOML file, or a manifest.json from an earlier run.
    #[arg(long, global = true, default_value = "ldpms.toml")]
    pub config: PathBuf,
    /// Override the config's seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Override the config's output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Rayon worker count; falls back to the LDPMS_THREADS variable.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Verify the standing assumptions: ellipticity, regularity, scale separation.
    Check,
    /// Write simulated trajectories as CSV.
    Simulate,
    /// Tabulate the rate function over the configured velocities.
    Rate,
    /// Evaluate the transition-density upper bound and the growth margin.
    Bound,
    /// Run the eps log P sweep against the variational target.
    Ldp {
        /// Read the epsilon list from stdin (whitespace or comma separated),
        /// overriding [regime].epsilons.
        #[arg(long)]
        epsilons_from_stdin: bool,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Check => "check",
            Command::Simulate => "simulate",
            Command::Rate => "rate",
            Command::Bound => "bound",
            Command::Ldp { .. } => "ldp",
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckReport {
    pub kappa: f64,
    pub regularity: RegularityReport,
    pub scale_separation: bool,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct SimulateReport {
    pub n_paths: usize,
    pub epsilon: f64,
    pub delta: f64,
    pub seed: u64,
    pub files: Vec<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RateReport {
    pub estimates: Vec<RateEstimate>,
}

#[derive(Debug, Clone, Serialize)]
pub struct BoundReport {
    pub bound: DensityBound,
    pub margin: MarginReport,
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<PathBuf> {
    let path = dir.join(name);
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::Io(std::io::Error::new(std::io::ErrorKind::Other, e)))?;
    text.push('\n');
    std::fs::write(&path, text)?;
    Ok(path)
}

/// The preflight shared by every subcommand: Eq.-(3)-style ellipticity,
/// H.2-style regularity, H.1-style scale separation.
fn run_assumption_checks(
    config: &RunConfig,
    field: &CoefficientField,
    nu: &LevyMeasure,
) -> Result<CheckReport> {
    let grid = TorusGrid::new(field.dimension, DEFAULT_GRID_PER_AXIS);
    let kappa = ellipticity_kappa(field, &grid)?;
    let pairs = regularity_pairs(
        field.dimension,
        config.check.bulk_pairs.expect("effective config"),
        config.check.pairs_seed.expect("effective config"),
    );
    let regularity = verify_h2(field, nu, &pairs, config.check.ratio_cap.expect("effective config"))?;
    if !regularity.pass {
        return Err(Error::Assumption {
            name: "coefficient_regularity",
            detail: format!(
                "sampled Lipschitz ratio {:.3e} or growth ratio {:.3e} exceeds the cap {:.3e}",
                regularity.lipschitz_ratio_max, regularity.growth_ratio_max, regularity.ratio_cap
            ),
        });
    }
    let eps = config.epsilons();
    let law = config.law();
    // A single epsilon still gets its law probed along a short sweep.
    let sweep: Vec<f64> = if eps.len() >= 2 {
        eps.to_vec()
    } else {
        vec![eps[0], eps[0] / 2.0]
    };
    law.check_scale_separation(&sweep)?;
    Ok(CheckReport {
        kappa,
        regularity,
        scale_separation: true,
        pass: true,
    })
}

pub fn cmd_check(config: &RunConfig) -> Result<CheckReport> {
    let (field, nu) = config.build_model()?;
    let report = run_assumption_checks(config, &field, &nu)?;
    if config.wants("json") {
        write_json(config.out_dir(), "check.json", &report)?;
    }
    Ok(report)
}

fn sim_config(config: &RunConfig) -> Result<SimConfig> {
    let epsilon = config.epsilons()[0];
    let regime = config.law().regime(epsilon)?;
    let x0 = DVector::from_column_slice(&config.scheme.x0);
    let mut cfg = SimConfig::new(
        config.scheme.t_horizon,
        x0,
        regime,
        config.scheme.seed.expect("effective config"),
    )
    .with_dt(config.scheme.dt.expect("effective config"));
    if let Some(budget) = config.scheme.jump_budget {
        cfg = cfg.with_jump_budget(budget);
    }
    Ok(cfg)
}

pub fn cmd_simulate(config: &RunConfig) -> Result<SimulateReport> {
    let (field, nu) = config.build_model()?;
    run_assumption_checks(config, &field, &nu)?;
    let cfg = sim_config(config)?;
    let n_paths = config.scheme.n_paths.expect("effective config");
    if n_paths == 0 {
        return Err(Error::Config("scheme.n_paths must be at least 1".into()));
    }
    let batch = simulate_batch(&field, &nu, &cfg, n_paths, None)?;
    let dir = config.out_dir();
    let mut files = Vec::with_capacity(n_paths);
    for (i, (traj, _)) in batch.iter().enumerate() {
        let name = format!("traj_{i:05}.csv");
        if config.wants("csv") {
            let file = std::fs::File::create(dir.join(&name))?;
            traj.write_csv(file)?;
        }
        files.push(name);
    }
    let report = SimulateReport {
        n_paths,
        epsilon: cfg.regime.epsilon,
        delta: cfg.regime.delta,
        seed: cfg.seed,
        files,
    };
    if config.wants("json") {
        write_json(dir, "simulate.json", &report)?;
    }
    Ok(report)
}

pub fn cmd_rate(config: &RunConfig) -> Result<RateReport> {
    let (field, nu) = config.build_model()?;
    run_assumption_checks(config, &field, &nu)?;
    let velocities = config.rate.velocities.as_ref().expect("effective config");
    if velocities.is_empty() {
        return Err(Error::Config("rate.velocities is empty; nothing to tabulate".into()));
    }
    let d = field.dimension;
    if velocities.iter().any(|v| v.len() != d) {
        return Err(Error::Config(format!("every rate velocity must have dimension {d}")));
    }
    let schedule = config.rate.l_schedule.as_ref().expect("effective config");
    let opts = MinimizeOpts {
        grad_tol: config.rate.grad_tol.expect("effective config"),
        max_iters: config.rate.max_iters.expect("effective config"),
        sign: config.rate.drift_sign.expect("effective config"),
    };
    let mut estimates = Vec::with_capacity(velocities.len());
    for v in velocities {
        let v = DVector::from_column_slice(v);
        estimates.push(estimate_J(&field, &nu, &v, schedule, &opts)?);
    }
    let dir = config.out_dir();
    if config.wants("csv") {
        let mut w = csv::Writer::from_path(dir.join("rate.csv"))?;
        let mut header: Vec<String> = (1..=d).map(|i| format!("v{i}")).collect();
        header.extend(["j", "iterations", "grad_norm", "warning"].map(String::from));
        w.write_record(&header)?;
        let mut buf = ryu::Buffer::new();
        for est in &estimates {
            let mut row: Vec<String> = est.velocity.iter().map(|&x| buf.format(x).to_string()).collect();
            row.push(buf.format(est.extrapolated).to_string());
            row.push(est.iterations_total.to_string());
            row.push(buf.format(est.final_grad_norm).to_string());
            row.push(u8::from(est.extrapolation_warning).to_string());
            w.write_record(&row)?;
        }
        w.flush()?;
    }
    let report = RateReport { estimates };
    if config.wants("json") {
        write_json(dir, "rate.json", &report)?;
    }
    Ok(report)
}

pub fn cmd_bound(config: &RunConfig) -> Result<BoundReport> {
    let (field, nu) = config.build_model()?;
    run_assumption_checks(config, &field, &nu)?;
    let radii = config.bound.margin_radii.as_ref().expect("effective config");
    let margin = hartman_wintner_margin(&field, &nu, radii)?;
    let bound = density_upper_bound(&field, &nu, config.bound.t.expect("effective config"))?;
    let dir = config.out_dir();
    if config.wants("csv") {
        let mut w = csv::Writer::from_path(dir.join("margin.csv"))?;
        w.write_record(["radius", "margin"])?;
        let mut buf = ryu::Buffer::new();
        for (r, m) in margin.radii.iter().zip(&margin.margins) {
            let row = [buf.format(*r).to_string(), buf.format(*m).to_string()];
            w.write_record(&row)?;
        }
        w.flush()?;
    }
    let report = BoundReport { bound, margin };
    if config.wants("json") {
        write_json(dir, "bound.json", &report)?;
    }
    Ok(report)
}

pub fn cmd_ldp(config: &RunConfig) -> Result<LdpSweep> {
    let (field, nu) = config.build_model()?;
    run_assumption_checks(config, &field, &nu)?;
    let Some(event) = &config.event else {
        return Err(Error::Config("ldp needs an [event] section".into()));
    };
    let opts = SweepOpts {
        seed: config.scheme.seed.expect("effective config"),
        dt: config.scheme.dt,
        gap_tol: config.mc.gap_tol.expect("effective config"),
        resolution: config.mc.resolution.expect("effective config"),
        l_schedule: config.mc.l_schedule.clone().expect("effective config"),
        minimize: MinimizeOpts {
            grad_tol: config.rate.grad_tol.expect("effective config"),
            max_iters: config.rate.max_iters.expect("effective config"),
            sign: config.rate.drift_sign.expect("effective config"),
        },
    };
    let x0 = DVector::from_column_slice(&config.scheme.x0);
    let sweep = ldp_sweep(
        &field,
        &nu,
        config.law(),
        event,
        &x0,
        config.scheme.t_horizon,
        config.epsilons(),
        config.mc.n_paths.expect("effective config"),
        &opts,
    )?;
    let dir = config.out_dir();
    if config.wants("csv") {
        sweep.write_csv(dir.join("sweep.csv"))?;
    }
    if config.wants("json") {
        write_json(dir, "ldp.json", &sweep)?;
    }
    Ok(sweep)
}

/// Resolve the worker count (flag first, then LDPMS_THREADS) and configure
/// the global pool. Outputs stay bitwise identical across worker counts.
pub fn setup_threads(requested: Option<usize>) -> Result<Option<usize>> {
    let n = requested.or_else(|| {
        std::env::var("LDPMS_THREADS")
            .ok()
            .and_then(|s| s.trim().parse().ok())
    });
    if let Some(n) = n {
        if n == 0 {
            return Err(Error::Config("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    }
    Ok(n)
}

pub fn run(cli: Cli) -> Result<()> {
    let threads = setup_threads(cli.threads)?;
    let mut config = load_config(&cli.config)?;
    if let Some(seed) = cli.seed {
        config.scheme.seed = Some(seed);
    }
    if let Some(out) = &cli.out {
        config.output.directory = Some(out.clone());
    }
    if let Command::Ldp { epsilons_from_stdin: true } = &cli.command {
        let mut text = String::new();
        std::io::Read::read_to_string(&mut std::io::stdin(), &mut text)?;
        let eps: Vec<f64> = text
            .split(|ch: char| ch.is_whitespace() || ch == ',')
            .filter(|s| !s.is_empty())
            .map(|s| {
                s.parse::<f64>()
                    .map_err(|_| Error::Config(format!("bad epsilon {s:?} on stdin")))
            })
            .collect::<Result<_>>()?;
        config.regime.epsilons = Some(eps);
    }
    let config = config.effective(Path::new("."))?;
    std::fs::create_dir_all(config.out_dir())?;

    match &cli.command {
        Command::Check => {
            let report = cmd_check(&config)?;
            println!("check: pass");
            println!("  kappa = {:.6e}", report.kappa);
            println!(
                "  lipschitz ratio max = {:.3e} (cap {:.3e})",
                report.regularity.lipschitz_ratio_max, report.regularity.ratio_cap
            );
            println!("  growth ratio max = {:.3e}", report.regularity.growth_ratio_max);
            println!("  scale separation: ok");
        }
        Command::Simulate => {
            let report = cmd_simulate(&config)?;
            println!(
                "simulate: wrote {} trajectories to {} (eps {}, delta {:.6e}, seed {})",
                report.n_paths,
                config.out_dir().display(),
                report.epsilon,
                report.delta,
                report.seed
            );
        }
        Command::Rate => {
            let report = cmd_rate(&config)?;
            for est in &report.estimates {
                let v: Vec<f64> = est.velocity.iter().copied().collect();
                println!(
                    "J({v:?}) = {:.9e}{}",
                    est.extrapolated,
                    if est.extrapolation_warning { "  [oscillation warning]" } else { "" }
                );
            }
        }
        Command::Bound => {
            let report = cmd_bound(&config)?;
            println!(
                "bound(t = {}) = {:.6e} (truncation radius {:.3e})",
                report.bound.t, report.bound.value, report.bound.truncation_radius
            );
            if !report.bound.hw_pass {
                println!("warning: the growth-margin check failed; the bound may be vacuous");
            }
        }
        Command::Ldp { .. } => {
            let sweep = cmd_ldp(&config)?;
            for e in &sweep.entries {
                match &e.error {
                    None => println!(
                        "eps {:<8} p_hat {:.6e} (SE {:.3e})  eps*log = {:.6}",
                        e.epsilon, e.p_hat, e.std_error, e.eps_log_p
                    ),
                    Some(msg) => println!("eps {:<8} failed: {msg}", e.epsilon),
                }
            }
            println!("target = {:.6}", sweep.target);
            match sweep.gap {
                Some(gap) => println!(
                    "ldp: {} (gap {:.4}, tolerance {})",
                    if sweep.pass { "pass" } else { "fail" },
                    gap,
                    sweep.gap_tol
                ),
                None => println!("ldp: fail (no successful sweep point)"),
            }
        }
    }
    Manifest::new(cli.command.name(), threads, config.clone())?.write(config.out_dir())?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_config(dir: &Path, text: &str) -> PathBuf {
        let path = dir.join("run.toml");
        std::fs::write(&path, text).unwrap();
        path
    }

    #[test]
    fn check_passes_on_the_identity_suite() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("out");
        let text = format!(
            r#"
            [model]
            dimension = 1
            suite = "gaussian"

            [scheme]
            t_horizon = 1.0
            x0 = [0.0]

            [output]
            directory = "{}"
            "#,
            out.display()
        );
        let path = write_config(dir.path(), &text);
        let config = load_config(&path).unwrap();
        std::fs::create_dir_all(config.out_dir()).unwrap();
        let report = cmd_check(&config).unwrap();
        assert!(report.pass);
        assert!((report.kappa - 1.0).abs() < 1e-12);
        assert!(out.join("check.json").exists());
    }

    #[test]
    fn check_rejects_a_degenerate_sigma() {
        let dir = tempfile::tempdir().unwrap();
        let text = format!(
            r#"
            [model]
            dimension = 2
            suite = "anisotropic"
            diag = [1.0, 0.0]

            [scheme]
            t_horizon = 1.0
            x0 = [0.0, 0.0]

            [output]
            directory = "{}"
            "#,
            dir.path().join("out").display()
        );
        let path = write_config(dir.path(), &text);
        let config = load_config(&path).unwrap();
        match cmd_check(&config) {
            Err(Error::Assumption { name, .. }) => assert_eq!(name, "uniform_ellipticity"),
            other => panic!("expected assumption failure, got {other:?}"),
        }
    }

    #[test]
    fn simulate_writes_one_constant_trajectory() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("out");
        let text = format!(
            r#"
            [model]
            dimension = 1
            suite = "custom"
            ellipticity_floor = -1.0

            [model.fields]
            sigma = [[{{ kind = "constant", value = 0.0 }}]]

            [scheme]
            t_horizon = 1.0
            x0 = [0.25]
            dt = 0.25

            [output]
            directory = "{}"
            "#,
            out.display()
        );
        let path = write_config(dir.path(), &text);
        let config = load_config(&path).unwrap();
        std::fs::create_dir_all(config.out_dir()).unwrap();
        let report = cmd_simulate(&config).unwrap();
        assert_eq!(report.n_paths, 1);
        let csv = std::fs::read_to_string(out.join("traj_00000.csv")).unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 6);
        for line in &lines[1..] {
            assert!(line.contains(",0.25,"), "state drifted: {line}");
        }
    }

    #[test]
    fn rate_command_needs_velocities() {
        let dir = tempfile::tempdir().unwrap();
        let text = format!(
            r#"
            [model]
            dimension = 1
            suite = "gaussian"

            [scheme]
            t_horizon = 1.0
            x0 = [0.0]

            [output]
            directory = "{}"
            "#,
            dir.path().join("out").display()
        );
        let path = write_config(dir.path(), &text);
        let config = load_config(&path).unwrap();
        assert!(matches!(cmd_rate(&config), Err(Error::Config(_))));
    }
}
