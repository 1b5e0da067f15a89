//! `tshelm`: Helmholtz analysis and Hamiltonian dynamics on bounded time
//! scales.
//!
//! Subcommands: `check` (Helmholtz conditions of a field), `reconstruct`
//! (recover the Hamiltonian and sample it), `simulate` (solve the Hamilton
//! equations on a scale), `calculus` (structural table of a scale) and
//! `selftest` (run the acceptance catalog).
//!
//! Exit codes: 0 on success, 1 when `check` decides not-hamiltonian, 2 on
//! any error.

mod config;

use std::fmt::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use config::{Overrides, RunConfig};
use tshelm::calculus::composition_identity_residual;
use tshelm::calculus::inverse_identity_residual;
use tshelm::calculus::GridFunction;
use tshelm::dynamics::{
    energy_series, residual_star1, residual_star2, solve_derivative_form, solve_integral_form,
    SolverConfig, Trajectory,
};
use tshelm::hamiltonian::Hamiltonian;
use tshelm::helmholtz::{
    catalog, check_conditions, reconstruct, roundtrip_residual, CheckOptions, HelmholtzReport,
    Verdict,
};
use tshelm::selftest::run_all;
use tshelm::timescale::PointRole;

#[derive(Parser)]
#[command(name = "tshelm", version, about = "Hamiltonian systems on time scales")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct CommonArgs {
    /// TOML configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for every randomized component (overrides the config).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Helmholtz tolerance (overrides the config).
    #[arg(long, global = true)]
    tol: Option<f64>,
    /// Output directory for artifacts (overrides the config).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Table format where both make sense: json or csv.
    #[arg(long, global = true)]
    format: Option<String>,
    /// Time-scale literal (overrides the config), e.g.
    /// "union: [0,1]; points: 1.5 2; dense_step: 0.001".
    #[arg(long, global = true)]
    scale: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Decide whether the configured field admits a Hamiltonian formulation.
    Check(CommonArgs),
    /// Reconstruct the Hamiltonian of the configured field and sample it.
    Reconstruct(CommonArgs),
    /// Solve the Hamilton equations on the configured time scale.
    Simulate(CommonArgs),
    /// Print the structural table of the configured time scale.
    Calculus(CommonArgs),
    /// Run the acceptance catalog and write its artifacts.
    Selftest(CommonArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (common, runner): (&CommonArgs, fn(&RunConfig) -> Result<i32>) = match &cli.command {
        Command::Check(c) => (c, run_check),
        Command::Reconstruct(c) => (c, run_reconstruct),
        Command::Simulate(c) => (c, run_simulate),
        Command::Calculus(c) => (c, run_calculus),
        Command::Selftest(c) => (c, run_selftest),
    };
    let overrides = Overrides {
        seed: common.seed,
        tol: common.tol,
        out: common.out.clone(),
        format: common.format.clone(),
        scale: common.scale.clone(),
    };
    let outcome = config::load(common.config.as_deref(), &overrides).and_then(|cfg| runner(&cfg));
    match outcome {
        Ok(code) => ExitCode::from(code as u8),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(2)
        }
    }
}

fn write_artifact(cfg: &RunConfig, name: &str, contents: &str) -> Result<PathBuf> {
    std::fs::create_dir_all(&cfg.out_dir)
        .with_context(|| format!("cannot create output directory {}", cfg.out_dir.display()))?;
    let path = cfg.out_dir.join(name);
    std::fs::write(&path, contents)
        .with_context(|| format!("cannot write {}", path.display()))?;
    Ok(path)
}

fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

fn print_report(report: &HelmholtzReport<f64>) {
    let verdict = match report.verdict {
        Verdict::Hamiltonian => "hamiltonian",
        Verdict::NotHamiltonian => "not_hamiltonian",
    };
    println!("verdict: {verdict}");
    println!(
        "trace violation {:.3e}   asym(dXq/dp) {:.3e}   asym(dXp/dq) {:.3e}   (tol {:.1e})",
        report.trace_violation, report.asym_qp, report.asym_pq, report.tolerance
    );
    println!(
        "sampled {} points in [{}, {}]^{} ({} failed); worst: {} = {:.3e} at {:?}",
        report.samples,
        report.box_lo,
        report.box_hi,
        2 * report.dimension,
        report.failed_samples,
        report.worst.condition,
        report.worst.value,
        report.worst.location
    );
}

fn run_check(cfg: &RunConfig) -> Result<i32> {
    let field = cfg.field()?;
    let [lo, hi] = cfg.file.check.r#box;
    let report = check_conditions(
        field.as_ref(),
        lo,
        hi,
        CheckOptions { samples: cfg.file.check.samples, tol: cfg.file.check.tol, seed: cfg.seed },
    )
    .map_err(anyhow::Error::msg)?;
    print_report(&report);
    let path = write_artifact(cfg, "check_report.json", &to_json(&report)?)?;
    println!("report written to {}", path.display());
    Ok(match report.verdict {
        Verdict::Hamiltonian => 0,
        Verdict::NotHamiltonian => 1,
    })
}

#[derive(Serialize)]
struct ReconstructSummary {
    verdict: Verdict,
    nodes: usize,
    roundtrip_residual: f64,
    grid_points_per_axis: usize,
    samples_csv: String,
}

fn run_reconstruct(cfg: &RunConfig) -> Result<i32> {
    let field = cfg.field()?;
    let d = field.dim();
    let [lo, hi] = cfg.file.check.r#box;
    let report = check_conditions(
        field.as_ref(),
        lo,
        hi,
        CheckOptions { samples: cfg.file.check.samples, tol: cfg.file.check.tol, seed: cfg.seed },
    )
    .map_err(anyhow::Error::msg)?;
    if report.verdict == Verdict::NotHamiltonian {
        eprintln!(
            "warning: field fails the Helmholtz conditions (trace {:.3e}, asym {:.3e}/{:.3e}); \
             reconstructing diagnostically",
            report.trace_violation, report.asym_qp, report.asym_pq
        );
    }
    let h = reconstruct(field.clone(), cfg.file.reconstruct.nodes);
    let residual =
        roundtrip_residual(field.as_ref(), &h, lo, hi, cfg.file.check.samples, cfg.seed)
            .map_err(anyhow::Error::msg)?;

    // Lattice sample of the reconstructed Hamiltonian.
    let per_axis = cfg.file.reconstruct.grid.max(2);
    let mut csv = String::new();
    for k in 0..d {
        write!(csv, "q{},", k + 1).unwrap();
    }
    for k in 0..d {
        write!(csv, "p{},", k + 1).unwrap();
    }
    csv.push_str("H\n");
    let axis: Vec<f64> = (0..per_axis)
        .map(|i| lo + (hi - lo) * i as f64 / (per_axis - 1) as f64)
        .collect();
    let total = axis.len().pow(2 * d as u32);
    let mut z = vec![0.0f64; 2 * d];
    for flat in 0..total {
        let mut rest = flat;
        for slot in z.iter_mut() {
            *slot = axis[rest % axis.len()];
            rest /= axis.len();
        }
        let (q, p) = z.split_at(d);
        let value = h.eval(q, p);
        for v in q.iter().chain(p.iter()) {
            write!(csv, "{v},").unwrap();
        }
        writeln!(csv, "{value}").unwrap();
    }
    let csv_path = write_artifact(cfg, "reconstruction.csv", &csv)?;
    let summary = ReconstructSummary {
        verdict: report.verdict,
        nodes: cfg.file.reconstruct.nodes,
        roundtrip_residual: residual,
        grid_points_per_axis: per_axis,
        samples_csv: csv_path.display().to_string(),
    };
    write_artifact(cfg, "reconstruct_summary.json", &to_json(&summary)?)?;
    println!(
        "reconstructed H with {} nodes; round-trip residual {residual:.3e}; samples in {}",
        cfg.file.reconstruct.nodes,
        csv_path.display()
    );
    Ok(0)
}

fn trajectory_csv(traj: &Trajectory<f64>) -> String {
    let d = traj.dim();
    let mut out = String::from("t,kind");
    for k in 0..d {
        write!(out, ",q{}", k + 1).unwrap();
    }
    for k in 0..d {
        write!(out, ",p{}", k + 1).unwrap();
    }
    out.push_str(",newton_iters,residual\n");
    for i in 0..traj.len() {
        let step = traj.step(i);
        write!(out, "{},{}", traj.time(i), step.kind.label()).unwrap();
        for v in traj.q(i) {
            write!(out, ",{v}").unwrap();
        }
        for v in traj.p(i) {
            write!(out, ",{v}").unwrap();
        }
        writeln!(out, ",{},{}", step.newton_iters, step.residual).unwrap();
    }
    out
}

#[derive(Serialize)]
struct SimulateSummary {
    form: String,
    points: usize,
    junctions: Vec<f64>,
    residual_star1: f64,
    residual_star2: f64,
    energy_drift: f64,
}

fn run_simulate(cfg: &RunConfig) -> Result<i32> {
    let scale = cfg.scale()?;
    let d = cfg.dimension()?;
    let sim = &cfg.file.simulate;
    let solver_cfg = SolverConfig {
        newton_tol: sim.newton_tol,
        newton_max_iter: sim.newton_max_iter,
        picard_max_sweeps: sim.picard_max_sweeps,
    };

    // Prefer an explicit Hamiltonian; otherwise reconstruct from the field.
    enum H {
        Expr(tshelm::hamiltonian::ExprHamiltonian),
        Rec(tshelm::helmholtz::ReconstructedHamiltonian<f64>),
    }
    let h = match cfg.hamiltonian()? {
        Some(h) => H::Expr(h),
        None => {
            let field = cfg
                .field()
                .context("simulate needs a [hamiltonian] section or a [field] to reconstruct from")?;
            H::Rec(reconstruct(field, cfg.file.reconstruct.nodes))
        }
    };
    let h: &dyn Hamiltonian<f64> = match &h {
        H::Expr(e) => e,
        H::Rec(r) => r,
    };
    if sim.q0.len() != d || sim.p0.len() != d {
        bail!("q0 and p0 must have dimension {d}");
    }

    let junctions = scale.admissibility_report();
    if !junctions.is_empty() {
        eprintln!(
            "warning: scale has {} junction point(s) at {:?}; solving piecewise",
            junctions.len(),
            junctions
        );
    }

    let traj = match sim.form.as_str() {
        "derivative" => solve_derivative_form(h, scale.clone(), &sim.q0, &sim.p0, &solver_cfg)
            .map_err(anyhow::Error::msg)?,
        "integral" => {
            let cq = sim.cq.clone().unwrap_or_else(|| sim.q0.clone());
            let cp = match &sim.cp {
                Some(cp) => cp.clone(),
                None => {
                    // Constants induced by (q0, p0).
                    let probe =
                        solve_derivative_form(h, scale.clone(), &sim.q0, &sim.p0, &solver_cfg)
                            .map_err(anyhow::Error::msg)?;
                    probe.c_p.clone()
                }
            };
            solve_integral_form(h, scale.clone(), &cq, &cp, &solver_cfg)
                .map_err(anyhow::Error::msg)?
        }
        other => bail!("simulate.form must be `derivative` or `integral`, got `{other}`"),
    };

    let traj_path = write_artifact(cfg, "trajectory.csv", &trajectory_csv(&traj))?;
    let energy = energy_series(h, &traj);
    let mut energy_csv = String::from("t,energy\n");
    for (t, e) in &energy {
        writeln!(energy_csv, "{t},{e}").unwrap();
    }
    write_artifact(cfg, "energy.csv", &energy_csv)?;

    let e0 = energy.first().map(|&(_, e)| e).unwrap_or(0.0);
    let drift = energy.iter().map(|&(_, e)| (e - e0).abs()).fold(0.0, f64::max);
    let summary = SimulateSummary {
        form: sim.form.clone(),
        points: traj.len(),
        junctions,
        residual_star1: residual_star1(h, &traj),
        residual_star2: residual_star2(h, &traj),
        energy_drift: drift,
    };
    write_artifact(cfg, "simulate_summary.json", &to_json(&summary)?)?;
    println!(
        "{} points; star1 residual {:.3e}, star2 residual {:.3e}, energy drift {:.3e}",
        summary.points, summary.residual_star1, summary.residual_star2, summary.energy_drift
    );
    println!("trajectory written to {}", traj_path.display());
    Ok(0)
}

#[derive(Serialize)]
struct CalculusRow {
    t: f64,
    sigma: f64,
    rho: f64,
    mu: f64,
    nu: f64,
    class: String,
    sigma_continuous: bool,
    rho_continuous: bool,
    inverse_residual: Option<f64>,
    composition_sigma: Option<f64>,
    composition_rho: Option<f64>,
}

fn run_calculus(cfg: &RunConfig) -> Result<i32> {
    let scale = cfg.scale()?;
    let probe = GridFunction::sample_scalar(scale.clone(), |t| t.sin());
    let grid = scale.grid();
    let mut rows = Vec::new();
    for i in 0..grid.len() {
        if grid.role(i) != PointRole::Structural {
            continue;
        }
        let t = grid.point(i);
        let class = scale.class_idx(i);
        let reg = scale.jump_regularity(t).map_err(anyhow::Error::msg)?;
        let (inverse, comp_sigma, comp_rho) = if scale.in_core_domain_idx(i)
            && !scale.is_junction_idx(i)
        {
            let inv = inverse_identity_residual(scale.as_ref(), t).map_err(anyhow::Error::msg)?;
            let comp = composition_identity_residual(&probe, t).map_err(anyhow::Error::msg)?;
            (Some(inv), Some(comp.sigma_side), Some(comp.rho_side))
        } else {
            (None, None, None)
        };
        rows.push(CalculusRow {
            t,
            sigma: scale.sigma(t).map_err(anyhow::Error::msg)?,
            rho: scale.rho(t).map_err(anyhow::Error::msg)?,
            mu: scale.mu(t).map_err(anyhow::Error::msg)?,
            nu: scale.nu(t).map_err(anyhow::Error::msg)?,
            class: class.code().to_string(),
            sigma_continuous: reg.sigma_continuous,
            rho_continuous: reg.rho_continuous,
            inverse_residual: inverse,
            composition_sigma: comp_sigma,
            composition_rho: comp_rho,
        });
    }

    let junctions = scale.admissibility_report();
    println!(
        "scale [{}, {}] with {} segments, {} grid points, dense_step {}",
        scale.a(),
        scale.b(),
        scale.segments().len(),
        grid.len(),
        scale.dense_step()
    );
    if junctions.is_empty() {
        println!("admissible: no junction points");
    } else {
        println!("junction points: {junctions:?}");
    }
    println!(
        "{:>10} {:>10} {:>10} {:>8} {:>8}  {:<6} inverse residual",
        "t", "sigma", "rho", "mu", "nu", "class"
    );
    for r in &rows {
        let inv = r
            .inverse_residual
            .map(|v| format!("{v:.2e}"))
            .unwrap_or_else(|| "-".to_string());
        println!(
            "{:>10.4} {:>10.4} {:>10.4} {:>8.4} {:>8.4}  {:<6} {}",
            r.t, r.sigma, r.rho, r.mu, r.nu, r.class, inv
        );
    }

    let artifact = if cfg.format == "csv" {
        let mut csv = String::from(
            "t,sigma,rho,mu,nu,class,sigma_continuous,rho_continuous,inverse_residual,composition_sigma,composition_rho\n",
        );
        for r in &rows {
            let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
            writeln!(
                csv,
                "{},{},{},{},{},{},{},{},{},{},{}",
                r.t,
                r.sigma,
                r.rho,
                r.mu,
                r.nu,
                r.class,
                r.sigma_continuous,
                r.rho_continuous,
                opt(r.inverse_residual),
                opt(r.composition_sigma),
                opt(r.composition_rho)
            )
            .unwrap();
        }
        write_artifact(cfg, "calculus.csv", &csv)?
    } else {
        write_artifact(cfg, "calculus.json", &to_json(&rows)?)?
    };
    println!("table written to {}", artifact.display());
    Ok(0)
}

#[derive(Serialize)]
struct NamedReport {
    name: &'static str,
    report: HelmholtzReport<f64>,
}

fn run_selftest(cfg: &RunConfig) -> Result<i32> {
    let results = run_all(cfg.seed);
    for r in &results {
        let status = if r.passed { "PASS" } else { "FAIL" };
        println!(
            "{status} criterion {:>2} {:<26} worst {:.3e} threshold {:.3e}",
            r.index, r.name, r.worst, r.threshold
        );
    }
    write_artifact(cfg, "criteria.json", &to_json(&results)?)?;

    // Catalog reports, a sample trajectory on a mixed admissible scale and a
    // reconstruction lattice: the deterministic artifact set.
    let mut reports = Vec::new();
    for entry in catalog::<f64>() {
        let report = check_conditions(
            entry.field.as_ref(),
            -1.0,
            1.0,
            CheckOptions { samples: 128, tol: Some(1e-8), seed: cfg.seed },
        )
        .map_err(anyhow::Error::msg)?;
        reports.push(NamedReport { name: entry.name, report });
    }
    write_artifact(cfg, "catalog_reports.json", &to_json(&reports)?)?;

    let h = tshelm::hamiltonian::ExprHamiltonian::parse(1, "(q1^2 + p1^2)/2")
        .map_err(anyhow::Error::msg)?;
    let discrete = Arc::new(
        tshelm::timescale::TimeScale::uniform(0.0, 1.0, 10).map_err(anyhow::Error::msg)?,
    );
    let traj = solve_derivative_form(&h, discrete, &[1.0], &[0.0], &SolverConfig::default())
        .map_err(anyhow::Error::msg)?;
    write_artifact(cfg, "trajectory_discrete.csv", &trajectory_csv(&traj))?;

    let dense = Arc::new(
        tshelm::timescale::TimeScale::interval(0.0, 1.0, Some(1e-3)).map_err(anyhow::Error::msg)?,
    );
    let traj = solve_derivative_form(&h, dense, &[1.0], &[0.0], &SolverConfig::default())
        .map_err(anyhow::Error::msg)?;
    write_artifact(cfg, "trajectory_continuous.csv", &trajectory_csv(&traj))?;

    let harmonic = catalog::<f64>().remove(0);
    let rec = reconstruct(harmonic.field.clone(), 32);
    let mut csv = String::from("q1,p1,H\n");
    for i in 0..9 {
        for j in 0..9 {
            let q = -1.0 + 0.25 * i as f64;
            let p = -1.0 + 0.25 * j as f64;
            writeln!(csv, "{q},{p},{}", rec.eval(&[q], &[p])).unwrap();
        }
    }
    write_artifact(cfg, "reconstruction.csv", &csv)?;

    if results.iter().all(|r| r.passed) {
        println!("selftest passed; artifacts in {}", cfg.out_dir.display());
        Ok(0)
    } else {
        eprintln!("selftest FAILED");
        Ok(2)
    }
}
