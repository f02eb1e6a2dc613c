//! Command-line front end.
//!
//! Exit codes: 0 on success, 2 on usage or validation errors (reported
//! before any computation), 3 when a computation fails. Human-readable text
//! goes to stderr; results go to stdout or the output directory.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use crate::distributions::Family;
use crate::error::{Error, Result};
use crate::experiments::{ExperimentGrid, Study};
use crate::gof::{CorrectionKind, TestConfig, TestKind};
use crate::resampling::{self, BlockRule};
use crate::returns::{self, Nu};

#[derive(Debug, Parser)]
#[command(name = "npbb", version = env!("CARGO_PKG_VERSION"), about = "Bootstrap KS goodness-of-fit tests for stationary series")]
pub struct Cli {
    /// Worker threads (default: available cores).
    #[arg(long, global = true)]
    workers: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum FamilyArg {
    Normal,
    Gamma,
    T,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum MethodArg {
    Npbb,
    Npb,
    Pb,
    Spb,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum CorrectionArg {
    Kn,
    Cn,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum RuleArg {
    Cube,
    Pw,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Test one series against a parametric family.
    Test {
        /// One-column numeric CSV (header optional).
        data: PathBuf,
        #[arg(long, value_enum)]
        family: FamilyArg,
        /// Degrees of freedom for `--family t`.
        #[arg(long)]
        nu: Option<f64>,
        #[arg(long, value_enum, default_value = "npbb")]
        method: MethodArg,
        #[arg(long = "B", default_value_t = 1000)]
        replicates: usize,
        /// Block length: `auto` (cube root), `pw` (Politis–White) or an integer.
        #[arg(long = "l", default_value = "auto")]
        block: String,
        #[arg(long, value_enum, default_value = "kn")]
        correction: CorrectionArg,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Also write result.json and t_boot.csv here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Empirical size study over a grid of cells.
    SimulateSize(SimulateArgs),
    /// Empirical power study over a grid of cells.
    SimulatePower(SimulateArgs),
    /// Student-t battery on daily log returns.
    AnalyzeReturns {
        /// `date,close` CSV.
        #[arg(long)]
        data: PathBuf,
        /// Comma-separated degrees of freedom; `inf` is the Normal family.
        #[arg(long, default_value = "inf,30,20,10,5,4,3,2,1")]
        nus: String,
        #[arg(long = "B", default_value_t = 10_000)]
        replicates: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Block length chosen for a series.
    BlockSize {
        data: PathBuf,
        #[arg(long, value_enum, default_value = "pw")]
        rule: RuleArg,
    },
}

#[derive(Debug, clap::Args)]
struct SimulateArgs {
    /// Grid JSON; the built-in desk-scale grid is used when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Use R = 10000 replicates and B = 1000 bootstrap samples.
    #[arg(long)]
    paper_scale: bool,
    #[arg(long)]
    out: PathBuf,
}

struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure {
            code: if e.is_validation() { 2 } else { 3 },
            message: e.to_string(),
        }
    }
}

fn usage(message: impl Into<String>) -> Failure {
    Failure {
        code: 2,
        message: message.into(),
    }
}

fn compute(e: Error) -> Failure {
    Failure {
        code: 3,
        message: e.to_string(),
    }
}

/// Parses `args` and runs the command, returning the process exit code.
pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn run(cli: Cli) -> std::result::Result<(), Failure> {
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(w) = cli.workers {
        if w == 0 {
            return Err(usage("--workers must be at least 1"));
        }
        pool = pool.num_threads(w);
    }
    let pool = pool.build().map_err(|e| usage(e.to_string()))?;
    pool.install(|| dispatch(cli.command))
}

fn dispatch(command: Command) -> std::result::Result<(), Failure> {
    match command {
        Command::Test {
            data,
            family,
            nu,
            method,
            replicates,
            block,
            correction,
            seed,
            out,
        } => cmd_test(
            &data,
            family,
            nu,
            method,
            replicates,
            &block,
            correction,
            seed,
            out.as_deref(),
        ),
        Command::SimulateSize(args) => cmd_simulate(Study::Size, &args),
        Command::SimulatePower(args) => cmd_simulate(Study::Power, &args),
        Command::AnalyzeReturns {
            data,
            nus,
            replicates,
            seed,
            out,
        } => cmd_analyze_returns(&data, &nus, replicates, seed, &out),
        Command::BlockSize { data, rule } => cmd_block_size(&data, rule),
    }
}

/// Reads a one-column numeric CSV. A non-numeric first line is a header.
pub fn read_series(path: &Path) -> Result<Vec<f64>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let field = line.split(',').next().unwrap_or("").trim();
        if field.is_empty() {
            continue;
        }
        match field.parse::<f64>() {
            Ok(v) if v.is_finite() => out.push(v),
            _ if i == 0 => continue,
            _ => {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line: i + 1,
                    message: format!("not a finite number: {field:?}"),
                })
            }
        }
    }
    if out.is_empty() {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: 0,
            message: "no observations".into(),
        });
    }
    Ok(out)
}

fn parse_block(block: &str) -> std::result::Result<BlockRule, Failure> {
    match block {
        "auto" | "cube" => Ok(BlockRule::CubeRoot),
        "pw" => Ok(BlockRule::PolitisWhite),
        s => match s.parse::<usize>() {
            Ok(l) if l > 0 => Ok(BlockRule::Fixed(l)),
            _ => Err(usage(format!("--l must be auto, pw or a positive integer, got {s:?}"))),
        },
    }
}

#[allow(clippy::too_many_arguments)]
fn cmd_test(
    data: &Path,
    family: FamilyArg,
    nu: Option<f64>,
    method: MethodArg,
    replicates: usize,
    block: &str,
    correction: CorrectionArg,
    seed: u64,
    out: Option<&Path>,
) -> std::result::Result<(), Failure> {
    let family = match (family, nu) {
        (FamilyArg::Normal, _) => Family::Normal,
        (FamilyArg::Gamma, _) => Family::Gamma,
        (FamilyArg::T, Some(nu)) if nu > 0.0 && nu.is_finite() => Family::student_t(nu),
        (FamilyArg::T, _) => return Err(usage("--family t needs a positive finite --nu")),
    };
    if replicates == 0 {
        return Err(usage("--B must be at least 1"));
    }
    let config = TestConfig {
        kind: match method {
            MethodArg::Npbb => TestKind::Npbb,
            MethodArg::Npb => TestKind::Npb,
            MethodArg::Pb => TestKind::Pb,
            MethodArg::Spb => TestKind::Spb,
        },
        correction: match correction {
            CorrectionArg::Kn => CorrectionKind::Kn,
            CorrectionArg::Cn => CorrectionKind::Cn,
        },
        block_rule: parse_block(block)?,
        replicates,
    };
    let sample = read_series(data)?;
    let result = config.run(&sample, &family, seed).map_err(|e| match e {
        Error::InvalidBlockLength { .. } | Error::Config(_) => Failure::from(e),
        other => compute(other),
    })?;
    let json = serde_json::to_string_pretty(&result.to_json()).map_err(Error::from)?;
    println!("{json}");
    if let Some(dir) = out {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let write = |name: &str, body: &str| -> Result<()> {
            let p = dir.join(name);
            fs::write(&p, body).map_err(|e| Error::io(&p, e))
        };
        write("result.json", &(json + "\n"))?;
        write("t_boot.csv", &result.t_boot_csv())?;
    }
    Ok(())
}

/// Built-in desk-scale grids: both margins, seven τ levels, four lengths,
/// R = 1000 replicates and B = 500 bootstrap samples.
pub fn default_grid(study: Study) -> ExperimentGrid {
    let json = match study {
        Study::Size => include_str!("../configs/size_desk.json"),
        Study::Power => include_str!("../configs/power_desk.json"),
    };
    ExperimentGrid::from_json(json).expect("built-in grid is valid")
}

fn cmd_simulate(study: Study, args: &SimulateArgs) -> std::result::Result<(), Failure> {
    let mut grid = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            ExperimentGrid::from_json(&text)?
        }
        None => default_grid(study),
    };
    if grid.study != study {
        return Err(usage(format!("grid {:?} is a {:?} study", grid.name, grid.study)));
    }
    if args.paper_scale {
        grid = grid.paper_scale();
    }
    grid.validate()?;
    let total = grid.cells()?.len();
    let mut done = 0usize;
    let summaries = grid
        .run(|s| {
            done += 1;
            let rates: Vec<String> = s.sizes.iter().map(|(a, r)| format!("{a}:{r:.4}")).collect();
            eprintln!(
                "[{done}/{total}] {} tested as {} tau={} n={} {}",
                s.cell.generate.label(),
                s.cell.hypothesis,
                s.cell.tau,
                s.cell.n,
                rates.join(" ")
            );
        })
        .map_err(compute)?;
    let files = grid.write_outputs(&args.out, &summaries)?;
    eprintln!("wrote {} to {}", files.join(", "), args.out.display());
    Ok(())
}

fn cmd_analyze_returns(
    data: &Path,
    nus: &str,
    replicates: usize,
    seed: u64,
    out: &Path,
) -> std::result::Result<(), Failure> {
    let nus: Vec<Nu> = nus.split(',').map(str::parse).collect::<Result<_>>()?;
    if nus.is_empty() {
        return Err(usage("--nus is empty"));
    }
    if replicates == 0 {
        return Err(usage("--B must be at least 1"));
    }
    let bytes = fs::read(data).map_err(|e| Error::io(data, e))?;
    let text = String::from_utf8(bytes.clone()).map_err(|e| usage(format!("{}: {e}", data.display())))?;
    let prices = returns::parse_prices(&text, data)?;
    let rets = returns::log_returns(&prices)?;
    let tau = crate::tsgen::kendall_tau_lag1(&rets).map_err(compute)?;
    eprintln!("{} returns, lag-1 Kendall tau {tau:.4}", rets.len());
    let table = returns::run_table2(&rets, &nus, replicates, seed).map_err(compute)?;

    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let csv = table.to_csv();
    let csv_path = out.join("table2.csv");
    fs::write(&csv_path, &csv).map_err(|e| Error::io(&csv_path, e))?;
    let errors: Vec<serde_json::Value> = table
        .rows
        .iter()
        .flat_map(|r| {
            r.cells.iter().filter_map(move |c| {
                c.error
                    .as_ref()
                    .map(|e| serde_json::json!({"nu": r.nu.to_string(), "method": c.method, "error": e}))
            })
        })
        .collect();
    let manifest = serde_json::json!({
        "software": crate::build_id(),
        "data": data.display().to_string(),
        "data_sha256": returns::sha256_hex(&bytes),
        "first_date": prices.dates.first().map(|d| d.to_string()),
        "last_date": prices.dates.last().map(|d| d.to_string()),
        "returns": rets.len(),
        "lag1_kendall_tau": tau,
        "B": replicates,
        "seed": seed,
        "block_length": table.block_length,
        "nus": nus.iter().map(|n| n.to_string()).collect::<Vec<_>>(),
        "spb_note": "semiparametric baseline reconstructed with an AR(1) working model",
        "errors": errors,
    });
    let man_path = out.join("manifest.json");
    fs::write(
        &man_path,
        serde_json::to_string_pretty(&manifest).map_err(Error::from)? + "\n",
    )
    .map_err(|e| Error::io(&man_path, e))?;
    print!("{csv}");
    Ok(())
}

fn cmd_block_size(data: &Path, rule: RuleArg) -> std::result::Result<(), Failure> {
    let series = read_series(data)?;
    let json = match rule {
        RuleArg::Cube => serde_json::json!({
            "n": series.len(),
            "rule": "cube_root",
            "l": resampling::cube_root_block(series.len()),
        }),
        RuleArg::Pw => {
            let sel = resampling::politis_white(&series).map_err(compute)?;
            serde_json::json!({
                "n": series.len(),
                "rule": "politis_white",
                "l": sel.block_length,
                "estimate": sel.estimate,
                "bandwidth": sel.bandwidth,
                "warning": sel.warning,
            })
        }
    };
    println!("{}", serde_json::to_string_pretty(&json).map_err(Error::from)?);
    Ok(())
}
