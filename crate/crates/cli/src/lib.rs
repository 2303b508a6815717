//! Subcommands of the `infersched` binary.
//!
//! Every command reads one experiment config, writes CSV (and TOML policy
//! artifacts) into the output directory, and prints a short summary. CSV
//! files start with a `# config_hash=... seed=...` comment line.

use clap::{Parser, Subcommand};
use infersched::config::{
    csv_header_comment, ArtifactKind, ConfigError, ExperimentConfig, PolicyArtifact,
};
use infersched::oracle::{
    greedy_matches_threshold, random_instance, relative_value_iteration, OracleError,
    OracleReport, TruncatedSmdp, DEFAULT_MAX_ITERS, DEFAULT_TOL,
};
use infersched::policy::{PolicyContext, PolicyError, ThresholdPolicy};
use infersched::simulator::{
    replay_trace, run_simulation, run_sweep, write_trace_csv, PolicySpec, SimError, SimReport,
};
use infersched::stats::combine_independent;
use infersched::{ChannelModel, ErrorCurve};
use log::info;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use thiserror::Error;

/// State-action pairs above which `oracle-check` refuses an instance.
const ORACLE_SIZE_LIMIT: usize = 2_000_000;

#[derive(Debug, Parser)]
#[command(name = "infersched", version, about = "Threshold scheduling for remote inference over a Markov-delay channel")]
pub struct Cli {
    /// Experiment config (TOML). Defaults to the built-in reference experiment.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory, overriding `output.dir`.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Base seed, overriding `simulation.base_seed`.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for parallel runs.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write the inference error curve h(δ).
    ErrorCurve,
    /// Solve the optimal buffer mapping and threshold.
    Solve {
        /// Solve on the IID surrogate channel instead (the baseline policy).
        #[arg(long)]
        iid: bool,
    },
    /// Simulate a policy for every configured seed.
    Simulate {
        /// Policy artifact written by `solve`; solved on the fly if omitted.
        #[arg(long, conflicts_with = "zero_wait")]
        policy: Option<PathBuf>,
        /// Simulate the zero-wait policy instead.
        #[arg(long)]
        zero_wait: bool,
        /// Also write a per-slot trace of this many slots for the first seed.
        #[arg(long)]
        trace: Option<u64>,
    },
    /// Three-policy comparison over `simulation.alphas`.
    Sweep,
    /// Compare the solver against relative value iteration.
    OracleCheck {
        /// Check this many random small instances instead of the config's.
        #[arg(long)]
        random: Option<usize>,
        /// Write the value table of the config's instance.
        #[arg(long)]
        dump_values: bool,
    },
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error("oracle mismatch: {0}")]
    OracleMismatch(String),
}

impl CliError {
    /// 1 validation, 2 solver, 3 oracle mismatch.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Usage(_) | CliError::Io { .. } => 1,
            CliError::Oracle(OracleError::Truncation { .. }) => 1,
            CliError::Policy(_) | CliError::Sim(_) | CliError::Oracle(_) => 2,
            CliError::OracleMismatch(_) => 3,
        }
    }
}

struct Session {
    cfg: ExperimentConfig,
    out: PathBuf,
    config_hash: String,
}

impl Session {
    fn open(cli: &Cli) -> Result<Self, CliError> {
        let mut cfg = match &cli.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => {
                info!("no --config given, using the reference experiment");
                ExperimentConfig::reference()
            }
        };
        if let Some(seed) = cli.seed {
            cfg.simulation.base_seed = seed;
        }
        cfg.validate()?;
        let out = cli.out.clone().unwrap_or_else(|| cfg.output.dir.clone());
        fs::create_dir_all(&out).map_err(|source| CliError::Io {
            path: out.clone(),
            source,
        })?;
        let config_hash = cfg.config_hash()?;
        Ok(Self {
            cfg,
            out,
            config_hash,
        })
    }

    fn seed(&self) -> u64 {
        self.cfg.simulation.base_seed
    }

    /// Creates `name` in the output directory, writes the header comment,
    /// then hands the writer to `body`.
    fn write_csv(
        &self,
        name: &str,
        body: impl FnOnce(&mut BufWriter<File>) -> io::Result<()>,
    ) -> Result<PathBuf, CliError> {
        let path = self.out.join(name);
        let io_err = |source| CliError::Io {
            path: path.clone(),
            source,
        };
        let mut w = BufWriter::new(File::create(&path).map_err(io_err)?);
        writeln!(w, "{}", csv_header_comment(&self.config_hash, self.seed())).map_err(io_err)?;
        body(&mut w).map_err(io_err)?;
        w.flush().map_err(io_err)?;
        Ok(path)
    }

    fn write_text(&self, name: &str, text: &str) -> Result<PathBuf, CliError> {
        let path = self.out.join(name);
        fs::write(&path, text).map_err(|source| CliError::Io {
            path: path.clone(),
            source,
        })?;
        Ok(path)
    }

    fn context(&self, curve: ErrorCurve, channel: ChannelModel) -> Result<PolicyContext, CliError> {
        Ok(match self.cfg.policy.nu_max {
            Some(nu) => PolicyContext::with_nu_max(curve, channel, nu)?,
            None => PolicyContext::new(curve, channel),
        })
    }
}

pub fn run(cli: &Cli) -> Result<(), CliError> {
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            return Err(CliError::Usage("--jobs must be at least 1".into()));
        }
        // Fails only if a pool already exists, which is harmless.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global();
    }
    let session = Session::open(cli)?;
    match &cli.command {
        Command::ErrorCurve => cmd_error_curve(&session),
        Command::Solve { iid } => cmd_solve(&session, *iid),
        Command::Simulate {
            policy,
            zero_wait,
            trace,
        } => cmd_simulate(&session, policy.as_deref(), *zero_wait, *trace),
        Command::Sweep => cmd_sweep(&session),
        Command::OracleCheck {
            random,
            dump_values,
        } => cmd_oracle_check(&session, *random, *dump_values),
    }
}

fn cmd_error_curve(s: &Session) -> Result<(), CliError> {
    let curve = s.cfg.curve()?;
    let rows = s.cfg.output.curve_rows;
    let path = s.write_csv("error_curve.csv", |w| curve.write_csv(w, rows))?;
    let (argmin, min) = (1..=rows)
        .map(|d| (d, curve.get(d)))
        .fold((0, f64::INFINITY), |best, x| if x.1 < best.1 { x } else { best });
    println!(
        "wrote {rows} rows to {}; min h = {min:.6} at delta = {argmin}; {}",
        path.display(),
        if curve.is_nondecreasing() { "nondecreasing" } else { "non-monotone" }
    );
    Ok(())
}

fn solve_policy(s: &Session, kind: ArtifactKind) -> Result<(PolicyContext, ThresholdPolicy, Vec<(String, f64)>), CliError> {
    let channel = s.cfg.channel()?;
    let channel = match kind {
        ArtifactKind::Optimal => channel,
        ArtifactKind::IidBaseline => channel.iid_surrogate(),
    };
    let ctx = s.context(s.cfg.curve()?, channel)?;
    let sol = ctx.optimize_mapping(s.cfg.policy.buffer_size, s.cfg.policy.tol)?;
    let betas = sol
        .evaluated
        .iter()
        .map(|(m, beta)| (mapping_label(m.positions()), *beta))
        .collect();
    let policy = ThresholdPolicy::new(sol.mapping, sol.h_opt, Arc::clone(ctx.index_table()));
    Ok((ctx, policy, betas))
}

fn mapping_label(positions: &[usize]) -> String {
    positions
        .iter()
        .map(usize::to_string)
        .collect::<Vec<_>>()
        .join(";")
}

fn cmd_solve(s: &Session, iid: bool) -> Result<(), CliError> {
    let kind = if iid {
        ArtifactKind::IidBaseline
    } else {
        ArtifactKind::Optimal
    };
    let prefix = if iid { "iid_" } else { "" };
    let (ctx, policy, betas) = solve_policy(s, kind)?;
    let artifact = PolicyArtifact {
        kind,
        problem_hash: s.cfg.problem_hash()?,
        threshold: policy.threshold(),
        buffer_size: policy.mapping().buffer_size(),
        mapping: policy.mapping().positions().to_vec(),
    };
    let artifact_path = s.write_text(&format!("{prefix}policy.toml"), &artifact.to_toml()?)?;
    s.write_csv(&format!("{prefix}mapping.csv"), |w| {
        writeln!(w, "state,buffer_pos")?;
        for (c, b) in policy.mapping().positions().iter().enumerate() {
            writeln!(w, "{c},{b}")?;
        }
        Ok(())
    })?;
    s.write_csv(&format!("{prefix}index.csv"), |w| ctx.index_table().write_csv(w))?;
    s.write_csv(&format!("{prefix}betas.csv"), |w| {
        writeln!(w, "mapping,beta")?;
        for (m, beta) in &betas {
            writeln!(w, "{m},{beta}")?;
        }
        Ok(())
    })?;
    if betas.len() <= 16 {
        for (m, beta) in &betas {
            println!("  psi = [{m}]  beta = {beta:.9}");
        }
    }
    println!(
        "h_opt = {:.9}, psi* = [{}] ({} mappings); artifact {}",
        policy.threshold(),
        mapping_label(policy.mapping().positions()),
        betas.len(),
        artifact_path.display()
    );
    if ctx.cap_raises() > 0 {
        println!("note: the index window cap was raised {} times", ctx.cap_raises());
    }
    Ok(())
}

fn cmd_simulate(
    s: &Session,
    artifact: Option<&Path>,
    zero_wait: bool,
    trace: Option<u64>,
) -> Result<(), CliError> {
    let channel = s.cfg.channel()?;
    let curve = s.cfg.curve()?;
    let spec = if zero_wait {
        PolicySpec::ZeroWait
    } else if let Some(path) = artifact {
        let art = PolicyArtifact::load(path)?;
        art.check_compatible(&s.cfg)?;
        let index_channel = match art.kind {
            ArtifactKind::Optimal => channel.clone(),
            ArtifactKind::IidBaseline => channel.iid_surrogate(),
        };
        let ctx = s.context(curve.clone(), index_channel)?;
        let policy =
            ThresholdPolicy::new(art.buffer_mapping()?, art.threshold, Arc::clone(ctx.index_table()));
        match art.kind {
            ArtifactKind::Optimal => PolicySpec::OptimalThreshold(policy),
            ArtifactKind::IidBaseline => PolicySpec::IidBaseline(policy),
        }
    } else {
        PolicySpec::OptimalThreshold(solve_policy(s, ArtifactKind::Optimal)?.1)
    };

    let sim = s.cfg.sim_config();
    let reports = s
        .cfg
        .seeds()
        .par_iter()
        .map(|&seed| run_simulation(&spec, &channel, &curve, &sim, seed))
        .collect::<Result<Vec<SimReport>, _>>()?;
    let path = s.write_csv("simulate.csv", |w| {
        writeln!(w, "{}", SimReport::CSV_HEADER)?;
        for r in &reports {
            writeln!(w, "{}", r.csv_row())?;
        }
        Ok(())
    })?;
    let means: Vec<f64> = reports.iter().map(|r| r.mean_cost).collect();
    let ses: Vec<f64> = reports.iter().map(|r| r.std_error).collect();
    let (mean, se) = combine_independent(&means, &ses);
    println!(
        "{}: mean cost {mean:.6} +/- {se:.2e} over {} seeds; {}",
        spec.name(),
        reports.len(),
        path.display()
    );
    let truth = s.context(curve.clone(), channel.clone())?;
    let exact = match spec.threshold_policy() {
        Some(p) => truth.policy_cost(p)?,
        None => truth.zero_wait_cost(),
    };
    println!(
        "  exact long-run cost {exact:.6} ({:.2} standard errors away)",
        (mean - exact).abs() / se.max(f64::MIN_POSITIVE)
    );
    let extension: u64 = reports.iter().map(|r| r.extension_slots).sum();
    if extension > 0 {
        println!("  note: {extension} measured slots had AoI beyond the error table");
    }
    if let Some(slots) = trace {
        let rows = replay_trace(&spec, &channel, &curve, s.seed(), slots)?;
        let path = s.write_csv("trace.csv", |w| write_trace_csv(w, &rows))?;
        println!("  trace of {slots} slots in {}", path.display());
    }
    Ok(())
}

fn cmd_sweep(s: &Session) -> Result<(), CliError> {
    let setup = s.cfg.sweep_setup()?;
    let alphas = &s.cfg.simulation.alphas;
    let table = run_sweep(alphas, &setup, &s.cfg.seeds(), &s.cfg.sim_config())?;
    let path = s.write_csv("sweep.csv", |w| table.write_csv(w))?;
    s.write_csv("sweep_policies.csv", |w| {
        writeln!(w, "alpha,h_opt,optimal_mapping,iid_threshold,iid_mapping")?;
        for p in &table.points {
            writeln!(
                w,
                "{},{},{},{},{}",
                p.alpha,
                p.h_opt,
                mapping_label(p.optimal_mapping.positions()),
                p.iid_threshold,
                mapping_label(p.iid_mapping.positions())
            )?;
        }
        Ok(())
    })?;
    println!("{:>6}  {:<13} {:>11} {:>11} {:>10}", "alpha", "policy", "mean_cost", "normalized", "exact");
    for r in table.rows() {
        println!(
            "{:>6.2}  {:<13} {:>11.6} {:>11.4} {:>10.6}",
            r.alpha, r.policy, r.mean_cost, r.normalized_cost, r.analytic_cost
        );
    }
    println!("wrote {}", path.display());
    Ok(())
}

fn oracle_report(
    channel: &ChannelModel,
    curve: &ErrorCurve,
    buffer_size: usize,
    size_limit: usize,
) -> Result<(OracleReport, infersched::oracle::RviSolution), CliError> {
    let ctx = PolicyContext::new(curve.clone(), channel.clone());
    let smdp = TruncatedSmdp::with_default_caps(channel.clone(), curve.clone(), buffer_size)?;
    let size = smdp.delta_cap() * channel.states() * (smdp.tau_cap() + 1) * buffer_size;
    if size > size_limit {
        return Err(CliError::Usage(format!(
            "instance too large for the oracle: {size} state-action pairs (limit {size_limit})"
        )));
    }
    let sol = ctx.optimize_mapping(buffer_size, None)?;
    let policy = ThresholdPolicy::new(sol.mapping, sol.h_opt, Arc::clone(ctx.index_table()));
    let rvi = relative_value_iteration(&smdp, DEFAULT_TOL, DEFAULT_MAX_ITERS)?;
    Ok((greedy_matches_threshold(&smdp, &rvi, &policy), rvi))
}

fn describe(report: &OracleReport) -> String {
    format!(
        "|rvi - h_opt| = {:.2e}, {} states, {} ties, {} mismatches, aoi-dependent b: {:?}",
        report.cost_error(),
        report.states_checked,
        report.ties,
        report.mismatches.len(),
        report.aoi_dependent_buffer
    )
}

fn cmd_oracle_check(s: &Session, random: Option<usize>, dump_values: bool) -> Result<(), CliError> {
    const COST_TOL: f64 = 1e-3;
    let mut rows = Vec::new();
    match random {
        Some(n) => {
            let mut rng = ChaCha8Rng::seed_from_u64(s.seed());
            let instances: Vec<_> = (0..n).map(|_| random_instance(&mut rng)).collect();
            let results = instances
                .par_iter()
                .map(|inst| {
                    oracle_report(&inst.channel, &inst.curve, inst.buffer_size, ORACLE_SIZE_LIMIT)
                        .map(|(r, _)| (inst.channel.states(), inst.buffer_size, r))
                })
                .collect::<Result<Vec<_>, _>>()?;
            rows.extend(results);
        }
        None => {
            let channel = s.cfg.channel()?;
            let b = s.cfg.policy.buffer_size;
            let (report, rvi) = oracle_report(&channel, &s.cfg.curve()?, b, ORACLE_SIZE_LIMIT)?;
            if dump_values {
                let path = s.write_csv("values.csv", |w| rvi.write_csv(w))?;
                println!("value table in {}", path.display());
            }
            rows.push((channel.states(), b, report));
        }
    }
    let path = s.write_csv("oracle.csv", |w| {
        writeln!(w, "instance,states,buffer_size,rvi_h_opt,policy_h_opt,cost_error,mismatches,ties,passed")?;
        for (i, (states, b, r)) in rows.iter().enumerate() {
            writeln!(
                w,
                "{i},{states},{b},{},{},{},{},{},{}",
                r.rvi_h_opt,
                r.policy_h_opt,
                r.cost_error(),
                r.mismatches.len(),
                r.ties,
                r.passed(COST_TOL)
            )?;
        }
        Ok(())
    })?;
    let mut failed = Vec::new();
    for (i, (_, _, r)) in rows.iter().enumerate() {
        let ok = r.passed(COST_TOL);
        println!("{} instance {i}: {}", if ok { "PASS" } else { "FAIL" }, describe(r));
        if !ok {
            failed.push(i);
        }
    }
    println!("wrote {}", path.display());
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::OracleMismatch(format!("instances {failed:?} failed")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes() {
        assert_eq!(CliError::Usage("x".into()).exit_code(), 1);
        assert_eq!(
            CliError::Oracle(OracleError::Truncation { delta_cap: 3, required: 9 }).exit_code(),
            1
        );
        assert_eq!(CliError::Policy(PolicyError::ZeroBuffer).exit_code(), 2);
        assert_eq!(CliError::Oracle(OracleError::ZeroBuffer).exit_code(), 2);
        assert_eq!(CliError::OracleMismatch("x".into()).exit_code(), 3);
    }
}
