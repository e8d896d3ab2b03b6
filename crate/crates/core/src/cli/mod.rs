//! Config-driven command line: `classify`, `simulate`, `profile`, `sweep`, `verify`.
//!
//! Every artifact carries a `config_hash=` token in its first line. The hash
//! covers the whole configuration except the output directory, so identical
//! configs written to different places compare equal.

pub mod config;
pub mod verify;

use std::ffi::OsString;
use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::Parser;
use rayon::prelude::*;

use crate::profiles::shoot;
use crate::regimes::{classify, report};
use crate::solver::{run, SeriesRow, SimulationRun, SolverError, Verdict};
use config::section;
pub use config::{Command, ConfigError, ExperimentConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_VERIFY: i32 = 3;
pub const EXIT_ESCAPE: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "hhlab", version, about = "Radial experiments for u_t = lap(u^m) + |x|^sigma u^p")]
pub struct Cli {
    /// Command to run; falls back to `command` in the config file.
    #[arg(value_enum)]
    pub command: Option<Command>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads for sweeps and verification; 0 picks the core count.
    #[arg(long, default_value_t = 0)]
    pub workers: usize,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("verification failed: {0}")]
    Verify(String),
    #[error("{0}")]
    Escape(String),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("{0}")]
    Other(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Verify(_) => EXIT_VERIFY,
            CliError::Escape(_) => EXIT_ESCAPE,
            CliError::Io(_) | CliError::Other(_) => EXIT_FAILURE,
        }
    }
}

fn solver_error(e: SolverError) -> CliError {
    match e {
        SolverError::DomainEscape { .. } => CliError::Escape(e.to_string()),
        other => CliError::Other(other.to_string()),
    }
}

/// Where and how a command runs.
#[derive(Debug, Clone)]
pub struct Context {
    pub out: PathBuf,
    pub workers: usize,
}

/// Parses `argv`, runs the command, prints its summary and returns the exit code.
pub fn run_cli<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match prepare(&cli).and_then(|(cmd, cfg, ctx)| execute(cmd, &cfg, &ctx)) {
        Ok(summary) => {
            print!("{summary}");
            EXIT_OK
        }
        Err(e) => {
            eprintln!("hhlab: {e}");
            e.exit_code()
        }
    }
}

fn prepare(cli: &Cli) -> Result<(Command, ExperimentConfig, Context), CliError> {
    let mut cfg = match &cli.config {
        Some(path) => {
            let text =
                fs::read_to_string(path).map_err(|e| ConfigError::new("config", format!("{}: {e}", path.display())))?;
            ExperimentConfig::parse(&text)?
        }
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    let cmd = match (cli.command, cfg.command) {
        (Some(a), Some(b)) if a != b => {
            return Err(ConfigError::new("command", format!("config says {b:?} but {a:?} was requested")).into())
        }
        (Some(a), _) | (None, Some(a)) => a,
        (None, None) => return Err(ConfigError::new("command", "no command given").into()),
    };
    cfg.command = Some(cmd);
    let out = cli
        .out
        .clone()
        .or_else(|| cfg.output.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("hhlab-out"));
    cfg.output = Some(out.display().to_string());
    Ok((cmd, cfg, Context { out, workers: cli.workers }))
}

/// Runs `cmd` and returns the text summary that the binary prints.
pub fn execute(cmd: Command, cfg: &ExperimentConfig, ctx: &Context) -> Result<String, CliError> {
    fs::create_dir_all(&ctx.out)?;
    let hash = cfg.hash();
    fs::write(ctx.out.join("config.toml"), cfg.to_toml())?;
    match cmd {
        Command::Classify => cmd_classify(cfg, ctx, &hash),
        Command::Simulate => cmd_simulate(cfg, ctx, &hash),
        Command::Profile => cmd_profile(cfg, ctx, &hash),
        Command::Sweep => cmd_sweep(cfg, ctx, &hash),
        Command::Verify => cmd_verify(cfg, ctx, &hash),
    }
}

fn create(path: &Path) -> io::Result<BufWriter<fs::File>> {
    Ok(BufWriter::new(fs::File::create(path)?))
}

fn cmd_classify(cfg: &ExperimentConfig, ctx: &Context, hash: &str) -> Result<String, CliError> {
    let e = cfg.exponents()?;
    let text = format!("config_hash={hash}\n{}", report(&e));
    fs::write(ctx.out.join("classify.txt"), &text)?;
    Ok(text)
}

fn write_series(path: &Path, hash: &str, run: &SimulationRun) -> io::Result<()> {
    let mut w = create(path)?;
    writeln!(w, "# config_hash={hash} verdict={}", run.verdict.label())?;
    writeln!(w, "t,l1,l_m1,l_r0,linf,energy,dt")?;
    for SeriesRow { t, l1, l_m1, l_r0, linf, energy, dt } in &run.series {
        let r0 = l_r0.map_or(String::new(), |v| format!("{v:.17e}"));
        writeln!(w, "{t:.17e},{l1:.17e},{l_m1:.17e},{r0},{linf:.17e},{energy:.17e},{dt:.17e}")?;
    }
    w.flush()
}

fn verdict_fields(v: &Verdict) -> String {
    match *v {
        Verdict::ReachedHorizon { t } => format!("verdict=ReachedHorizon\nt_end={t:.17e}\n"),
        Verdict::BlowUpDetected { t_detect, t_hat } => format!(
            "verdict=BlowUpDetected\nt_detect={t_detect:.17e}\nt_hat={}\n",
            t_hat.map_or("undefined".into(), |x| format!("{x:.17e}"))
        ),
    }
}

fn simulate_point(cfg: &ExperimentConfig, p: Option<f64>) -> Result<SimulationRun, CliError> {
    let mut e = cfg.exponents()?;
    if let Some(p) = p {
        e = e.with_p(p).map_err(|x| ConfigError::new("p", x.to_string()))?;
    }
    let grid = section(&cfg.grid, "grid")?.build(e.dim())?;
    let u0 = section(&cfg.initial, "initial")?.build(&e, grid)?;
    let solver = section(&cfg.solver, "solver")?;
    let prob = solver.problem(e, u0)?;
    run(&prob, &solver.options()?).map_err(solver_error)
}

fn cmd_simulate(cfg: &ExperimentConfig, ctx: &Context, hash: &str) -> Result<String, CliError> {
    let r = simulate_point(cfg, None)?;
    write_series(&ctx.out.join("series.csv"), hash, &r)?;
    for (k, (t, u)) in r.snapshots.iter().enumerate() {
        let mut w = create(&ctx.out.join(format!("snapshot_{k:04}.csv")))?;
        u.write_csv(&mut w, &format!(" t={t:.17e} config_hash={hash}"))?;
        w.flush()?;
    }
    let text = format!(
        "config_hash={hash}\n{}steps={}\nsnapshots={}\nclipped_mass={:.17e}\n",
        verdict_fields(&r.verdict),
        r.steps,
        r.snapshots.len(),
        r.clipped_mass
    );
    fs::write(ctx.out.join("run.txt"), &text)?;
    Ok(text)
}

fn cmd_profile(cfg: &ExperimentConfig, ctx: &Context, hash: &str) -> Result<String, CliError> {
    let e = cfg.exponents()?;
    let spec = section(&cfg.profile, "profile")?;
    let prof = shoot(spec.kind()?, &e, &spec.search()?).map_err(|x| CliError::Other(x.to_string()))?;
    let mut w = create(&ctx.out.join("profile.csv"))?;
    prof.write_csv(&mut w, &format!(" config_hash={hash}"))?;
    w.flush()?;
    Ok(format!(
        "config_hash={hash}\nkind={}\nshoot_param={:.17e}\nalpha={:.17e}\nbeta={:.17e}\nrho={:.17e}\nresidual={:.6e}\n",
        prof.kind,
        prof.shoot_param(),
        prof.alpha,
        prof.beta,
        prof.support_radius,
        prof.residual
    ))
}

fn pool(workers: usize) -> Result<rayon::ThreadPool, CliError> {
    rayon::ThreadPoolBuilder::new().num_threads(workers).build().map_err(|e| CliError::Other(e.to_string()))
}

fn cmd_sweep(cfg: &ExperimentConfig, ctx: &Context, hash: &str) -> Result<String, CliError> {
    let base = cfg.exponents()?;
    let ps = &section(&cfg.sweep, "sweep")?.p;
    if ps.is_empty() {
        return Err(ConfigError::new("p", "sweep needs at least one value").into());
    }
    for &p in ps {
        base.with_p(p).map_err(|x| ConfigError::new("p", x.to_string()))?;
    }
    let results: Vec<Result<SimulationRun, CliError>> =
        pool(ctx.workers)?.install(|| ps.par_iter().map(|&p| simulate_point(cfg, Some(p))).collect());
    let mut table = format!("# config_hash={hash}\np,regime,verdict,t_end\n");
    let mut escaped = Vec::new();
    for (i, (&p, res)) in ps.iter().zip(results).enumerate() {
        let regime = classify(&base.with_p(p).expect("checked above")).tag;
        let (verdict, t_end) = match res {
            Ok(r) => {
                write_series(&ctx.out.join(format!("point_{i:03}_series.csv")), hash, &r)?;
                let t = match r.verdict {
                    Verdict::ReachedHorizon { t } => t,
                    Verdict::BlowUpDetected { t_detect, .. } => t_detect,
                };
                (r.verdict.label().to_string(), t)
            }
            Err(CliError::Escape(msg)) => {
                escaped.push(format!("p={p}: {msg}"));
                ("DomainEscape".to_string(), f64::NAN)
            }
            Err(e) => return Err(e),
        };
        table.push_str(&format!("{p:.17e},{regime},{verdict},{t_end:.17e}\n"));
    }
    fs::write(ctx.out.join("sweep.csv"), &table)?;
    if escaped.is_empty() {
        Ok(table)
    } else {
        print!("{table}");
        Err(CliError::Escape(escaped.join("; ")))
    }
}

/// Reads the `config_hash=` token from an artifact's first line.
pub fn artifact_hash(text: &str) -> Option<&str> {
    let first = text.lines().next()?;
    let start = first.find("config_hash=")? + "config_hash=".len();
    Some(first[start..].split_whitespace().next().unwrap_or(""))
}

/// Bit-identity of two artifacts, refused when their config hashes differ.
pub fn compare_artifacts(a: &Path, b: &Path) -> Result<bool, CliError> {
    let (ta, tb) = (fs::read_to_string(a)?, fs::read_to_string(b)?);
    match (artifact_hash(&ta), artifact_hash(&tb)) {
        (Some(x), Some(y)) if x == y => Ok(ta == tb),
        (x, y) => Err(CliError::Verify(format!(
            "refusing to compare {} (hash {}) with {} (hash {})",
            a.display(),
            x.unwrap_or("missing"),
            b.display(),
            y.unwrap_or("missing")
        ))),
    }
}

fn cmd_verify(cfg: &ExperimentConfig, ctx: &Context, hash: &str) -> Result<String, CliError> {
    let spec = cfg.verify.clone().unwrap_or_default();
    let mut text = format!("config_hash={hash}\n");
    let mut failed = Vec::new();
    if !spec.compare.is_empty() {
        if spec.compare.len() != 2 {
            return Err(ConfigError::new("compare", "expects exactly two artifact paths").into());
        }
        let same = compare_artifacts(Path::new(&spec.compare[0]), Path::new(&spec.compare[1]))?;
        text.push_str(&format!("artifacts_identical={same}\n"));
        if !same {
            failed.push("compare".to_string());
        }
    }
    let ids: Vec<u32> =
        if spec.criteria.is_empty() { verify::CRITERIA.iter().map(|c| c.0).collect() } else { spec.criteria };
    if let Some(bad) = ids.iter().find(|&&i| !verify::CRITERIA.iter().any(|c| c.0 == i)) {
        return Err(ConfigError::new("criteria", format!("unknown criterion {bad}")).into());
    }
    let seed = cfg.seed;
    let reports: Vec<_> = pool(ctx.workers)?
        .install(|| ids.par_iter().map(|&i| verify::run_criterion(i, seed).expect("id checked")).collect());
    for r in &reports {
        text.push_str(&format!("{r}\n"));
        if !r.passed {
            failed.push(r.id.to_string());
        }
    }
    fs::write(ctx.out.join("verify.txt"), &text)?;
    if failed.is_empty() {
        Ok(text)
    } else {
        print!("{text}");
        Err(CliError::Verify(format!("failed: {}", failed.join(", "))))
    }
}
