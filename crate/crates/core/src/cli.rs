//! Command-line front end.
//!
//! Every subcommand resolves its settings from flags, then the optional
//! `--config` TOML file, then built-in defaults, validates them, and only
//! then starts work. Output files land in `--out-dir`, the config's
//! `[output] dir`, `$ERRW_OUT_DIR`, or the working directory, in that
//! order, and each starts with `#` lines recording the tool version and
//! the resolved settings.
//!
//! Exit codes: 0 success, 1 configuration error, 2 runtime failure.

use crate::diagnostics::{default_stride, CrossingCount, DiagnosticsTrace};
use crate::error::{Error, Result};
use crate::experiments::{
    calibrate_thresholds, run_summary, search_thresholds, sweep, Calibration, PilotConfig,
    RunSummary, SummaryOptions, SweepConfig, SweepFamily, Thresholds, DEFAULT_THRESHOLDS,
    SWEEP_CSV_HEADER,
};
use crate::numfmt::{fmt_num, round12};
use crate::rng::run_rng;
use crate::schemes::{
    classify_power_law, preset, table1_phase, theory_phase, PresetParams, SchemeSpec,
};
use crate::urn::{lemma_bound, sample_bstar, BStarMethod, BStarStat, DEFAULT_DRAW_CAP};
use crate::walk::{
    enumerate_paths, path_positions, run, RunOptions, StopReason, StopRule, MAX_ENUM_DEPTH,
};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

pub const OUT_DIR_ENV: &str = "ERRW_OUT_DIR";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Parser)]
#[command(
    name = "errw",
    version,
    about = "Edge-reinforced random walk laboratory"
)]
pub struct Cli {
    /// TOML configuration file; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Output directory [default: $ERRW_OUT_DIR, else the working directory].
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run independent walks and write one JSON summary per run.
    Simulate(SimulateArgs),
    /// Classify runs on an (alpha, rho) grid and write the phase table.
    Sweep(SweepArgs),
    /// Sample B*_n from the urn and compare with the lemma bound.
    Urn(UrnArgs),
    /// Dump M, Theta, S2 and down-crossing counts of one run.
    Diagnose(DiagnoseArgs),
    /// Theoretical phase labels and exact path probabilities.
    Oracle(OracleArgs),
    /// Choose classification thresholds on pilot points.
    Calibrate(CalibrateArgs),
}

#[derive(Debug, Args, Default, Clone)]
pub struct SchemeArgs {
    /// Scheme preset: power-dt, perturbed-dt, davis-example, no-reinforcement [default: power-dt].
    #[arg(long)]
    pub scheme: Option<String>,
    /// Base exponent: f(0, x) = (x+1)^alpha [default: 0.9, 1.2 for no-reinforcement].
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Factor exponent: delta_{2k} = delta_{2k+1} = (k+1)^rho [default: 0.4].
    #[arg(long)]
    pub rho: Option<f64>,
    /// Perturbation size for perturbed-dt [default: 0.05].
    #[arg(long)]
    pub epsilon: Option<f64>,
}

#[derive(Debug, Args, Default, Clone)]
pub struct RunArgs {
    /// Steps per run [default: 1000000].
    #[arg(long)]
    pub horizon: Option<u64>,
    /// Number of runs [default: 1].
    #[arg(long)]
    pub runs: Option<u64>,
    /// Master seed [default: 0].
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub scheme: SchemeArgs,
    #[command(flatten)]
    pub run: RunArgs,
    /// Comma-separated stop rules: first-return, escape:L, visits:K, visits:K@V.
    #[arg(long)]
    pub stop: Option<String>,
    /// Also write the trajectory of each of the first --dump-runs runs.
    #[arg(long)]
    pub trajectory: bool,
    /// Also write the M/Theta/S2 trace of each of the first --dump-runs runs.
    #[arg(long)]
    pub diagnostics: bool,
    /// Runs to dump with --trajectory or --diagnostics [default: 1].
    #[arg(long)]
    pub dump_runs: Option<u64>,
    /// Thresholds file written by `calibrate`.
    #[arg(long)]
    pub thresholds: Option<PathBuf>,
    /// Output file name [default: simulate.jsonl].
    #[arg(long)]
    pub output: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FamilyArg {
    PowerDt,
    PerturbedDt,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// Comma-separated alpha values [default: 0.6,0.75,0.9,1].
    #[arg(long)]
    pub alphas: Option<String>,
    /// Comma-separated rho values [default: 0.05,0.3,0.45,0.6,1.5].
    #[arg(long)]
    pub rhos: Option<String>,
    /// Scheme family of every cell [default: power-dt].
    #[arg(long, value_enum)]
    pub family: Option<FamilyArg>,
    /// Perturbation size for the perturbed-dt family [default: 0.05].
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Runs per cell [default: 200].
    #[arg(long)]
    pub runs: Option<u64>,
    /// Steps per run [default: 1000000].
    #[arg(long)]
    pub horizon: Option<u64>,
    /// Master seed [default: 0].
    #[arg(long)]
    pub seed: Option<u64>,
    /// Thresholds file written by `calibrate`.
    #[arg(long)]
    pub thresholds: Option<PathBuf>,
    /// Output file name [default: sweep.csv].
    #[arg(long)]
    pub output: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MethodArg {
    Direct,
    Rubin,
    Both,
}

#[derive(Debug, Args)]
pub struct UrnArgs {
    /// Comma-separated gamma values [default: 1.1,1.5].
    #[arg(long)]
    pub gamma: Option<String>,
    /// Comma-separated rho values [default: 0.3,0.5].
    #[arg(long)]
    pub rho: Option<String>,
    /// Comma-separated target white counts n [default: 10,100,1000].
    #[arg(long)]
    pub n: Option<String>,
    /// Samples per (gamma, rho, n, method) [default: 10000].
    #[arg(long)]
    pub samples: Option<u64>,
    /// Sampler [default: both].
    #[arg(long, value_enum)]
    pub method: Option<MethodArg>,
    /// Constant C of the bound gamma^(1/(1-rho)) n + C n^((1+rho)/2) [default: 10].
    #[arg(long)]
    pub bound_c: Option<f64>,
    /// Draw cap per sample; capped samples are flagged as censored [default: 100000000].
    #[arg(long)]
    pub cap: Option<u64>,
    /// Master seed [default: 0].
    #[arg(long)]
    pub seed: Option<u64>,
    /// Per-sample output file name [default: urn.csv]; the bound table goes to <stem>_bound.csv.
    #[arg(long)]
    pub output: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CrossingArg {
    PreTau,
    Unconditional,
}

#[derive(Debug, Args)]
pub struct DiagnoseArgs {
    #[command(flatten)]
    pub scheme: SchemeArgs,
    /// Steps [default: 1000000].
    #[arg(long)]
    pub horizon: Option<u64>,
    /// Master seed [default: 0].
    #[arg(long)]
    pub seed: Option<u64>,
    /// Run index within the master seed's streams [default: 0].
    #[arg(long)]
    pub run_index: Option<u64>,
    /// Sampling stride [default: max(1, horizon / 65536)].
    #[arg(long)]
    pub stride: Option<u64>,
    /// Down-crossing counter to dump [default: pre-tau].
    #[arg(long, value_enum)]
    pub crossings: Option<CrossingArg>,
    /// File name prefix [default: diagnose].
    #[arg(long)]
    pub output: Option<String>,
}

#[derive(Debug, Args)]
pub struct OracleArgs {
    #[command(flatten)]
    pub scheme: SchemeArgs,
    /// Enumerate all paths of this length (at most 24).
    #[arg(long)]
    pub depth: Option<u32>,
    /// Path table file name [default: oracle_paths.csv].
    #[arg(long)]
    pub output: Option<String>,
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    /// Runs per pilot point [default: 100].
    #[arg(long)]
    pub runs: Option<u64>,
    /// Steps per run [default: 1000000].
    #[arg(long)]
    pub horizon: Option<u64>,
    /// Master seed [default: 0].
    #[arg(long)]
    pub seed: Option<u64>,
    /// Pilot points as alpha:rho pairs, comma-separated [default: 0.9:0.05,0.9:0.6,0.9:1.5].
    #[arg(long)]
    pub points: Option<String>,
    /// Write the best thresholds even when pilot agreement is below 70%.
    #[arg(long)]
    pub force: bool,
    /// Output file name [default: thresholds.toml].
    #[arg(long)]
    pub output: Option<String>,
}

#[derive(Debug, Default, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FileConfig {
    pub scheme: SchemeSection,
    pub run: RunSection,
    pub output: OutputSection,
    pub thresholds: Option<Thresholds>,
    pub sweep: SweepSection,
    pub urn: UrnSection,
    pub diagnose: DiagnoseSection,
    pub calibrate: CalibrateSection,
}

#[derive(Debug, Default, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SchemeSection {
    pub preset: Option<String>,
    pub alpha: Option<f64>,
    pub rho: Option<f64>,
    pub epsilon: Option<f64>,
}

#[derive(Debug, Default, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSection {
    pub horizon: Option<u64>,
    pub runs: Option<u64>,
    pub seed: Option<u64>,
    pub stop: Option<Vec<String>>,
}

#[derive(Debug, Default, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: Option<PathBuf>,
}

#[derive(Debug, Default, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    pub alphas: Option<Vec<f64>>,
    pub rhos: Option<Vec<f64>>,
    pub family: Option<FamilyArg>,
    pub epsilon: Option<f64>,
}

#[derive(Debug, Default, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct UrnSection {
    pub gamma: Option<Vec<f64>>,
    pub rho: Option<Vec<f64>>,
    pub n: Option<Vec<u64>>,
    pub samples: Option<u64>,
    pub method: Option<MethodArg>,
    pub bound_c: Option<f64>,
    pub cap: Option<u64>,
}

#[derive(Debug, Default, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DiagnoseSection {
    pub run_index: Option<u64>,
    pub stride: Option<u64>,
    pub crossings: Option<CrossingArg>,
}

#[derive(Debug, Default, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CalibrateSection {
    pub points: Option<Vec<[f64; 2]>>,
}

/// Layout of a thresholds file written by `calibrate`.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ThresholdsFile {
    thresholds: Thresholds,
    #[serde(default)]
    #[allow(dead_code)]
    calibration: Option<toml::Table>,
}

pub fn load_config(path: &Path) -> Result<FileConfig> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::config(format!("cannot read config {}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| Error::config(format!("{}: {e}", path.display())))
}

pub fn load_thresholds(path: &Path) -> Result<Thresholds> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::config(format!("cannot read thresholds {}: {e}", path.display())))?;
    let file: ThresholdsFile =
        toml::from_str(&text).map_err(|e| Error::config(format!("{}: {e}", path.display())))?;
    file.thresholds.validate()?;
    Ok(file.thresholds)
}

fn parse_list<T: std::str::FromStr>(what: &str, s: &str) -> Result<Vec<T>> {
    s.split(',')
        .map(|v| {
            v.trim()
                .parse()
                .map_err(|_| Error::config(format!("bad {what} value {:?}", v.trim())))
        })
        .collect()
}

/// Settings resolved for one invocation, in output order.
#[derive(Debug, Default)]
struct Resolved(Vec<(String, String)>);

impl Resolved {
    fn set(&mut self, key: &str, value: impl ToString) {
        self.0.push((key.to_string(), value.to_string()));
    }

    fn header(&self, command: &str) -> String {
        let mut s = format!("# errw {VERSION}\n# command = {command}\n");
        for (k, v) in &self.0 {
            let _ = writeln!(s, "# {k} = {v}");
        }
        s
    }
}

fn join_nums(v: &[f64]) -> String {
    v.iter().map(|&x| fmt_num(x)).collect::<Vec<_>>().join(",")
}

struct Ctx {
    file: FileConfig,
    out_dir: PathBuf,
}

impl Ctx {
    fn path(&self, name: &str) -> PathBuf {
        let p = Path::new(name);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.out_dir.join(p)
        }
    }

    fn write(&self, name: &str, contents: &str) -> Result<PathBuf> {
        let path = self.path(name);
        if let Some(parent) = path.parent() {
            if !parent.as_os_str().is_empty() {
                fs::create_dir_all(parent)?;
            }
        }
        fs::write(&path, contents)?;
        Ok(path)
    }

    fn thresholds(&self, flag: &Option<PathBuf>) -> Result<Thresholds> {
        let t = match flag {
            Some(path) => load_thresholds(path)?,
            None => self.file.thresholds.unwrap_or(DEFAULT_THRESHOLDS),
        };
        t.validate()?;
        Ok(t)
    }

    fn scheme(&self, args: &SchemeArgs, r: &mut Resolved) -> Result<SchemeSpec> {
        let f = &self.file.scheme;
        let name = args
            .scheme
            .clone()
            .or_else(|| f.preset.clone())
            .unwrap_or_else(|| "power-dt".into());
        let params = PresetParams {
            alpha: args.alpha.or(f.alpha),
            rho: args.rho.or(f.rho),
            epsilon: args.epsilon.or(f.epsilon),
        };
        let scheme = preset(&name, params).map_err(|e| match e {
            Error::Config(_) => e,
            other => Error::config(other.to_string()),
        })?;
        r.set("scheme", &name);
        if let Some((alpha, rho)) = scheme.power_law_params() {
            r.set("alpha", fmt_num(alpha));
            r.set("rho", fmt_num(rho));
        } else if let Some(alpha) = params.alpha {
            r.set("alpha", fmt_num(alpha));
        }
        if let Some(eps) = params.epsilon {
            r.set("epsilon", fmt_num(eps));
        } else if name == "perturbed-dt" {
            r.set("epsilon", fmt_num(crate::schemes::DEFAULT_EPSILON));
        }
        Ok(scheme)
    }
}

fn positive(what: &str, v: u64) -> Result<u64> {
    if v == 0 {
        return Err(Error::config(format!("{what} must be positive")));
    }
    Ok(v)
}

fn set_thresholds(r: &mut Resolved, t: &Thresholds) {
    r.set("window_fraction", fmt_num(t.window_fraction));
    r.set("escape_fraction", fmt_num(t.escape_fraction));
    r.set("drift_exponent", fmt_num(t.drift_exponent));
}

/// Rounds every float in a JSON value to 12 significant digits.
fn round_json(v: &mut serde_json::Value) {
    match v {
        serde_json::Value::Number(n) if n.is_f64() => {
            if let Some(r) = n
                .as_f64()
                .map(round12)
                .and_then(serde_json::Number::from_f64)
            {
                *n = r;
            }
        }
        serde_json::Value::Array(items) => items.iter_mut().for_each(round_json),
        serde_json::Value::Object(map) => map.values_mut().for_each(round_json),
        _ => {}
    }
}

fn json_line<T: Serialize>(value: &T) -> Result<String> {
    let mut v = serde_json::to_value(value).map_err(|e| Error::Io(std::io::Error::other(e)))?;
    round_json(&mut v);
    Ok(v.to_string())
}

fn cmd_simulate(ctx: &Ctx, a: &SimulateArgs) -> Result<()> {
    let mut r = Resolved::default();
    let scheme = ctx.scheme(&a.scheme, &mut r)?;
    let f = &ctx.file.run;
    let horizon = positive("horizon", a.run.horizon.or(f.horizon).unwrap_or(1_000_000))?;
    let runs = positive("runs", a.run.runs.or(f.runs).unwrap_or(1))?;
    let seed = a.run.seed.or(f.seed).unwrap_or(0);
    let stop: Vec<StopRule> = match (&a.stop, &f.stop) {
        (Some(s), _) => s
            .split(',')
            .filter(|s| !s.trim().is_empty())
            .map(str::parse)
            .collect::<Result<_>>()?,
        (None, Some(list)) => list.iter().map(|s| s.parse()).collect::<Result<_>>()?,
        (None, None) => Vec::new(),
    };
    let thresholds = ctx.thresholds(&a.thresholds)?;
    let dump_runs = a.dump_runs.unwrap_or(1).min(runs);
    let output = a.output.clone().unwrap_or_else(|| "simulate.jsonl".into());
    r.set("horizon", horizon);
    r.set("runs", runs);
    r.set("seed", seed);
    r.set(
        "stop",
        stop.iter()
            .map(ToString::to_string)
            .collect::<Vec<_>>()
            .join(","),
    );
    set_thresholds(&mut r, &thresholds);
    r.set("output", &output);

    let mut opts = SummaryOptions::for_thresholds(horizon, &thresholds);
    opts.stop_rules = stop.clone();
    let summaries: Vec<RunSummary> = (0..runs)
        .into_par_iter()
        .map(|i| run_summary(&scheme, &opts, seed, i))
        .collect();

    let header = r.header("simulate");
    let mut out = header.clone();
    for s in &summaries {
        out.push_str(&json_line(s)?);
        out.push('\n');
    }
    let escaped = summaries
        .iter()
        .filter(|s| s.stop_reason == StopReason::Escape)
        .count();
    let stay = 1.0 - escaped as f64 / runs as f64;
    #[derive(Serialize)]
    struct Aggregate {
        runs: u64,
        escaped: u64,
        stay_fraction: f64,
    }
    #[derive(Serialize)]
    struct AggregateLine {
        aggregate: Aggregate,
    }
    out.push_str(&json_line(&AggregateLine {
        aggregate: Aggregate {
            runs,
            escaped: escaped as u64,
            stay_fraction: stay,
        },
    })?);
    out.push('\n');
    let path = ctx.write(&output, &out)?;
    eprintln!(
        "stay fraction {} ({} of {runs} runs not stopped by escape)",
        fmt_num(stay),
        runs as usize - escaped
    );
    eprintln!("wrote {}", path.display());

    let stem = output.strip_suffix(".jsonl").unwrap_or(&output).to_string();
    for i in 0..dump_runs {
        if !(a.trajectory || a.diagnostics) {
            break;
        }
        let mut rng = run_rng(seed, i);
        let mut trace = DiagnosticsTrace::new(default_stride(horizon));
        let walk_opts = RunOptions {
            stop_rules: stop.clone(),
            record_stride: a.trajectory.then(|| default_stride(horizon)),
            ..RunOptions::default()
        };
        let outcome = run(&scheme, horizon, &walk_opts, &mut rng, &mut trace);
        trace.push_sample();
        let mut run_header = header.clone();
        let _ = writeln!(run_header, "# run_index = {i}");
        if let Some(traj) = &outcome.trajectory {
            let mut s = run_header.clone();
            s.push_str("n,x\n");
            for (k, x) in traj.positions.iter().enumerate() {
                let _ = writeln!(s, "{},{x}", k as u64 * traj.stride);
            }
            ctx.write(&format!("{stem}_trajectory_{i}.csv"), &s)?;
        }
        if a.diagnostics {
            ctx.write(
                &format!("{stem}_diagnostics_{i}.csv"),
                &diagnostics_csv(&run_header, &trace),
            )?;
        }
    }
    Ok(())
}

fn diagnostics_csv(header: &str, trace: &DiagnosticsTrace) -> String {
    let mut s = header.to_string();
    s.push_str("n,M,Theta,S2\n");
    for p in trace.samples() {
        let _ = writeln!(
            s,
            "{},{},{},{}",
            p.n,
            fmt_num(p.m),
            fmt_num(p.theta),
            fmt_num(p.s2)
        );
    }
    s
}

fn cmd_sweep(ctx: &Ctx, a: &SweepArgs) -> Result<()> {
    let mut r = Resolved::default();
    let s = &ctx.file.sweep;
    let alphas = match &a.alphas {
        Some(v) => parse_list("alpha", v)?,
        None => s
            .alphas
            .clone()
            .unwrap_or_else(|| vec![0.6, 0.75, 0.9, 1.0]),
    };
    let rhos = match &a.rhos {
        Some(v) => parse_list("rho", v)?,
        None => s
            .rhos
            .clone()
            .unwrap_or_else(|| vec![0.05, 0.3, 0.45, 0.6, 1.5]),
    };
    if alphas.is_empty() || rhos.is_empty() {
        return Err(Error::config("empty sweep grid"));
    }
    if let Some(&bad) = alphas.iter().find(|&&x| !(x > 0.5 && x <= 1.0)) {
        return Err(Error::config(format!("sweep alpha {bad} not in (1/2, 1]")));
    }
    let family_arg = a.family.or(s.family).unwrap_or(FamilyArg::PowerDt);
    let epsilon = a
        .epsilon
        .or(s.epsilon)
        .unwrap_or(crate::schemes::DEFAULT_EPSILON);
    let family = match family_arg {
        FamilyArg::PowerDt => SweepFamily::PowerDt,
        FamilyArg::PerturbedDt => SweepFamily::PerturbedDt { epsilon },
    };
    let f = &ctx.file.run;
    let runs = positive("runs", a.runs.or(f.runs).unwrap_or(200))?;
    let horizon = positive("horizon", a.horizon.or(f.horizon).unwrap_or(1_000_000))?;
    let seed = a.seed.or(f.seed).unwrap_or(0);
    let thresholds = ctx.thresholds(&a.thresholds)?;
    let output = a.output.clone().unwrap_or_else(|| "sweep.csv".into());
    let grid: Vec<(f64, f64)> = alphas
        .iter()
        .flat_map(|&x| rhos.iter().map(move |&y| (x, y)))
        .collect();
    for &(x, y) in &grid {
        family
            .scheme(x, y)
            .map_err(|e| Error::config(e.to_string()))?;
    }
    r.set(
        "family",
        family_arg.to_possible_value().expect("value").get_name(),
    );
    if family_arg == FamilyArg::PerturbedDt {
        r.set("epsilon", fmt_num(epsilon));
    }
    r.set("alphas", join_nums(&alphas));
    r.set("rhos", join_nums(&rhos));
    r.set("runs", runs);
    r.set("horizon", horizon);
    r.set("seed", seed);
    set_thresholds(&mut r, &thresholds);
    r.set("output", &output);

    let cells = sweep(&SweepConfig {
        family,
        grid,
        runs_per_cell: runs,
        horizon,
        master_seed: seed,
        thresholds,
    })?;
    let mut out = r.header("sweep");
    out.push_str(SWEEP_CSV_HEADER);
    out.push('\n');
    for c in &cells {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            fmt_num(c.alpha),
            fmt_num(c.rho),
            c.n_runs,
            c.horizon,
            fmt_num(c.frac_recurrent_like),
            fmt_num(c.frac_transient_like),
            fmt_num(c.frac_localized_like),
            c.theory_label.phase,
            c.master_seed
        );
    }
    let path = ctx.write(&output, &out)?;
    eprintln!("wrote {}", path.display());
    Ok(())
}

fn cmd_urn(ctx: &Ctx, a: &UrnArgs) -> Result<()> {
    let mut r = Resolved::default();
    let u = &ctx.file.urn;
    let gammas = match &a.gamma {
        Some(v) => parse_list("gamma", v)?,
        None => u.gamma.clone().unwrap_or_else(|| vec![1.1, 1.5]),
    };
    let rhos = match &a.rho {
        Some(v) => parse_list("rho", v)?,
        None => u.rho.clone().unwrap_or_else(|| vec![0.3, 0.5]),
    };
    let ns: Vec<u64> = match &a.n {
        Some(v) => parse_list("n", v)?,
        None => u.n.clone().unwrap_or_else(|| vec![10, 100, 1000]),
    };
    if gammas.is_empty() || rhos.is_empty() || ns.is_empty() {
        return Err(Error::config("empty urn grid"));
    }
    if let Some(&g) = gammas.iter().find(|&&g| !(g >= 1.0 && g.is_finite())) {
        return Err(Error::config(format!("gamma {g} must be >= 1")));
    }
    if let Some(&p) = rhos.iter().find(|&&p| !(0.0..1.0).contains(&p)) {
        return Err(Error::config(format!("rho {p} must lie in [0, 1)")));
    }
    if ns.contains(&0) {
        return Err(Error::config("n must be positive"));
    }
    let samples = positive("samples", a.samples.or(u.samples).unwrap_or(10_000))?;
    let method = a.method.or(u.method).unwrap_or(MethodArg::Both);
    let bound_c = a.bound_c.or(u.bound_c).unwrap_or(10.0);
    if !(bound_c >= 0.0 && bound_c.is_finite()) {
        return Err(Error::config(
            "bound-c must be a finite non-negative number",
        ));
    }
    let cap = positive("cap", a.cap.or(u.cap).unwrap_or(DEFAULT_DRAW_CAP))?;
    let seed = a.seed.or(ctx.file.run.seed).unwrap_or(0);
    let output = a.output.clone().unwrap_or_else(|| "urn.csv".into());
    r.set("gamma", join_nums(&gammas));
    r.set("rho", join_nums(&rhos));
    r.set(
        "n",
        ns.iter().map(u64::to_string).collect::<Vec<_>>().join(","),
    );
    r.set("samples", samples);
    r.set(
        "method",
        method.to_possible_value().expect("value").get_name(),
    );
    r.set("bound_c", fmt_num(bound_c));
    r.set("cap", cap);
    r.set("seed", seed);
    r.set("output", &output);

    let methods: Vec<BStarMethod> = match method {
        MethodArg::Direct => vec![BStarMethod::Direct],
        MethodArg::Rubin => vec![BStarMethod::Rubin],
        MethodArg::Both => vec![BStarMethod::Direct, BStarMethod::Rubin],
    };
    let header = r.header("urn");
    let mut samples_csv = header.clone();
    samples_csv.push_str("method,gamma,rho,n,b_star,h,censored\n");
    let mut bound_csv = header;
    bound_csv.push_str(
        "method,gamma,rho,n,samples,censored,mean_b_star,stderr,lemma_bound,within_bound\n",
    );
    let mut cell = 0u64;
    for &g in &gammas {
        for &p in &rhos {
            for &n in &ns {
                for &m in &methods {
                    let stream = crate::rng::mix64(seed ^ cell);
                    cell += 1;
                    let stats: Vec<BStarStat> = sample_bstar(m, g, p, n, samples, stream, cap)?;
                    let name = match m {
                        BStarMethod::Direct => "direct",
                        BStarMethod::Rubin => "rubin",
                    };
                    for s in &stats {
                        let _ = writeln!(
                            samples_csv,
                            "{name},{},{},{},{},{},{}",
                            fmt_num(g),
                            fmt_num(p),
                            n,
                            s.b_star,
                            s.h,
                            s.censored
                        );
                    }
                    let values: Vec<f64> = stats.iter().map(|s| s.b_star as f64).collect();
                    let (mean, se) = crate::stats::mean_and_stderr(&values);
                    let censored = stats.iter().filter(|s| s.censored).count();
                    let bound = lemma_bound(g, p, n, bound_c)?;
                    let _ = writeln!(
                        bound_csv,
                        "{name},{},{},{n},{samples},{censored},{},{},{},{}",
                        fmt_num(g),
                        fmt_num(p),
                        fmt_num(mean),
                        fmt_num(se),
                        fmt_num(bound),
                        mean <= bound
                    );
                }
            }
        }
    }
    let stem = output.strip_suffix(".csv").unwrap_or(&output);
    let p1 = ctx.write(&output, &samples_csv)?;
    let p2 = ctx.write(&format!("{stem}_bound.csv"), &bound_csv)?;
    eprintln!("wrote {} and {}", p1.display(), p2.display());
    Ok(())
}

fn cmd_diagnose(ctx: &Ctx, a: &DiagnoseArgs) -> Result<()> {
    let mut r = Resolved::default();
    let scheme = ctx.scheme(&a.scheme, &mut r)?;
    let d = &ctx.file.diagnose;
    let horizon = positive(
        "horizon",
        a.horizon.or(ctx.file.run.horizon).unwrap_or(1_000_000),
    )?;
    let seed = a.seed.or(ctx.file.run.seed).unwrap_or(0);
    let run_index = a.run_index.or(d.run_index).unwrap_or(0);
    let stride = positive(
        "stride",
        a.stride
            .or(d.stride)
            .unwrap_or_else(|| default_stride(horizon)),
    )?;
    let crossings = a.crossings.or(d.crossings).unwrap_or(CrossingArg::PreTau);
    let prefix = a.output.clone().unwrap_or_else(|| "diagnose".into());
    r.set("horizon", horizon);
    r.set("seed", seed);
    r.set("run_index", run_index);
    r.set("stride", stride);
    r.set(
        "crossings",
        crossings.to_possible_value().expect("value").get_name(),
    );
    r.set("output", &prefix);

    let mut rng = run_rng(seed, run_index);
    let mut trace = DiagnosticsTrace::new(stride);
    run(
        &scheme,
        horizon,
        &RunOptions::default(),
        &mut rng,
        &mut trace,
    );
    trace.push_sample();
    let header = r.header("diagnose");
    let p1 = ctx.write(
        &format!("{prefix}_martingale.csv"),
        &diagnostics_csv(&header, &trace),
    )?;
    let which = match crossings {
        CrossingArg::PreTau => CrossingCount::PreTau,
        CrossingArg::Unconditional => CrossingCount::Unconditional,
    };
    let mut s = header;
    s.push_str("x,N\n");
    for (x, n) in trace.down_crossings(which).iter().enumerate() {
        let _ = writeln!(s, "{x},{n}");
    }
    let p2 = ctx.write(&format!("{prefix}_crossings.csv"), &s)?;
    eprintln!(
        "max checkpoint drift {}",
        fmt_num(trace.max_checkpoint_drift())
    );
    eprintln!("wrote {} and {}", p1.display(), p2.display());
    Ok(())
}

fn cmd_oracle(ctx: &Ctx, a: &OracleArgs) -> Result<()> {
    let mut r = Resolved::default();
    let scheme = ctx.scheme(&a.scheme, &mut r)?;
    let mut text = String::new();
    match scheme.power_law_params() {
        Some((alpha, rho)) => match theory_phase(alpha, rho) {
            Ok(label) => {
                let _ = writeln!(text, "theory_phase: {} ({})", label.phase, label.provenance);
            }
            Err(e) => {
                let _ = writeln!(text, "theory_phase: n/a ({e}); table rules apply");
            }
        },
        None => {
            let _ = writeln!(text, "theory_phase: n/a (not a power-law DT scheme)");
        }
    }
    let table = table1_phase(&scheme);
    let _ = writeln!(text, "table1_phase: {} ({})", table.phase, table.provenance);
    if let Some((alpha, rho)) = scheme.power_law_params() {
        let label = classify_power_law(alpha, rho)?;
        let _ = writeln!(text, "label: {} ({})", label.phase, label.provenance);
    }
    print!("{text}");

    if let Some(depth) = a.depth {
        if depth > MAX_ENUM_DEPTH {
            return Err(Error::config(format!(
                "depth {depth} exceeds {MAX_ENUM_DEPTH}"
            )));
        }
        let output = a
            .output
            .clone()
            .unwrap_or_else(|| "oracle_paths.csv".into());
        r.set("depth", depth);
        r.set("output", &output);
        let paths = enumerate_paths(&scheme, depth)?;
        let mut s = r.header("oracle");
        for line in text.lines() {
            let _ = writeln!(s, "# {line}");
        }
        s.push_str("moves,positions,probability\n");
        let mut total = crate::stats::CompensatedSum::new();
        for p in &paths {
            total.add(p.prob);
            let pos = path_positions(p.moves, depth)
                .iter()
                .map(u64::to_string)
                .collect::<Vec<_>>()
                .join(" ");
            let _ = writeln!(s, "{},{pos},{}", p.moves, fmt_num(p.prob));
        }
        let _ = writeln!(s, "# total probability {}", fmt_num(total.value()));
        let path = ctx.write(&output, &s)?;
        println!(
            "{} paths of length {depth}, total probability {}",
            paths.len(),
            fmt_num(total.value())
        );
        eprintln!("wrote {}", path.display());
    }
    Ok(())
}

fn parse_points(s: &str) -> Result<Vec<(f64, f64)>> {
    s.split(',')
        .map(|p| {
            let (a, r) = p.split_once(':').ok_or_else(|| {
                Error::config(format!("bad pilot point {p:?}; expected alpha:rho"))
            })?;
            let parse = |v: &str| {
                v.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::config(format!("bad pilot point {p:?}")))
            };
            Ok((parse(a)?, parse(r)?))
        })
        .collect()
}

fn thresholds_toml(header: &str, cal: &Calibration, below_floor: bool) -> String {
    let t = &cal.thresholds;
    let mut s = header.to_string();
    if below_floor {
        let _ = writeln!(
            s,
            "# WARNING: pilot agreement {} is below the 0.7 floor; written because of --force",
            fmt_num(cal.min_agreement)
        );
    }
    let _ = writeln!(s, "[thresholds]");
    let _ = writeln!(s, "window_fraction = {}", fmt_num(t.window_fraction));
    let _ = writeln!(s, "escape_fraction = {}", fmt_num(t.escape_fraction));
    let _ = writeln!(s, "drift_exponent = {}", fmt_num(t.drift_exponent));
    let _ = writeln!(s, "\n[calibration]");
    let _ = writeln!(s, "horizon = {}", cal.horizon);
    let _ = writeln!(s, "runs_per_point = {}", cal.runs_per_point);
    let _ = writeln!(s, "master_seed = {}", cal.master_seed);
    let _ = writeln!(s, "min_agreement = {}", fmt_num(cal.min_agreement));
    let _ = writeln!(s, "mean_agreement = {}", fmt_num(cal.mean_agreement));
    for p in &cal.per_point {
        let _ = writeln!(
            s,
            "\n[[calibration.point]]\nalpha = {}\nrho = {}\ntheory = \"{}\"\nagreement = {}",
            fmt_num(p.alpha),
            fmt_num(p.rho),
            p.theory,
            fmt_num(p.agreement)
        );
    }
    s
}

fn cmd_calibrate(ctx: &Ctx, a: &CalibrateArgs) -> Result<()> {
    let mut r = Resolved::default();
    let f = &ctx.file.run;
    let runs = positive("runs", a.runs.or(f.runs).unwrap_or(100))?;
    let horizon = positive("horizon", a.horizon.or(f.horizon).unwrap_or(1_000_000))?;
    let seed = a.seed.or(f.seed).unwrap_or(0);
    let mut pilot = PilotConfig::standard(runs, horizon, seed);
    if let Some(p) = &a.points {
        pilot.points = parse_points(p)?;
    } else if let Some(p) = &ctx.file.calibrate.points {
        pilot.points = p.iter().map(|&[x, y]| (x, y)).collect();
    }
    if pilot.points.is_empty() {
        return Err(Error::config("empty pilot set"));
    }
    let output = a.output.clone().unwrap_or_else(|| "thresholds.toml".into());
    r.set(
        "points",
        pilot
            .points
            .iter()
            .map(|&(x, y)| format!("{}:{}", fmt_num(x), fmt_num(y)))
            .collect::<Vec<_>>()
            .join(","),
    );
    r.set("runs", runs);
    r.set("horizon", horizon);
    r.set("seed", seed);
    r.set("window_fractions", join_nums(&pilot.window_fractions));
    r.set("escape_fractions", join_nums(&pilot.escape_fractions));
    r.set("drift_exponents", join_nums(&pilot.drift_exponents));
    r.set("force", a.force);
    r.set("output", &output);

    let (cal, below) = if a.force {
        let cal = search_thresholds(&pilot)?;
        let below = cal.min_agreement < crate::experiments::MIN_PILOT_AGREEMENT;
        (cal, below)
    } else {
        (calibrate_thresholds(&pilot)?, false)
    };
    for p in &cal.per_point {
        eprintln!(
            "({}, {}) {}: agreement {}",
            fmt_num(p.alpha),
            fmt_num(p.rho),
            p.theory,
            fmt_num(p.agreement)
        );
    }
    let path = ctx.write(
        &output,
        &thresholds_toml(&r.header("calibrate"), &cal, below),
    )?;
    if below {
        eprintln!("warning: pilot agreement below the 0.7 floor");
    }
    eprintln!("wrote {}", path.display());
    Ok(())
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::Domain(_) | Error::InvalidScheme(_) => 1,
        Error::Calibration(_) | Error::Overflow(_) | Error::Io(_) => 2,
    }
}

/// Parses `args` (program name first), runs the subcommand and returns the
/// process exit code.
pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("errw: {e}");
            exit_code(&e)
        }
    }
}

pub fn execute(cli: &Cli) -> Result<()> {
    let file = match &cli.config {
        Some(path) => load_config(path)?,
        None => FileConfig::default(),
    };
    let out_dir = cli
        .out_dir
        .clone()
        .or_else(|| file.output.dir.clone())
        .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."));
    let ctx = Ctx { file, out_dir };
    match &cli.command {
        Command::Simulate(a) => cmd_simulate(&ctx, a),
        Command::Sweep(a) => cmd_sweep(&ctx, a),
        Command::Urn(a) => cmd_urn(&ctx, a),
        Command::Diagnose(a) => cmd_diagnose(&ctx, a),
        Command::Oracle(a) => cmd_oracle(&ctx, a),
        Command::Calibrate(a) => cmd_calibrate(&ctx, a),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn preset_names_are_listed() {
        assert!(crate::schemes::PRESET_NAMES.contains(&"davis-example"));
    }

    #[test]
    fn unknown_config_keys_are_rejected() {
        let bad: std::result::Result<FileConfig, _> = toml::from_str("[run]\nhorizn = 5\n");
        assert!(bad.is_err());
        let good: FileConfig = toml::from_str("[run]\nhorizon = 5\n[thresholds]\nwindow_fraction = 0.1\nescape_fraction = 0.5\ndrift_exponent = 0.6\n").unwrap();
        assert_eq!(good.run.horizon, Some(5));
        assert!(good.thresholds.is_some());
    }

    #[test]
    fn json_floats_are_rounded() {
        let mut v = serde_json::json!({"a": 1.0 / 3.0, "b": [2.0f64.sqrt()], "c": 7});
        round_json(&mut v);
        assert_eq!(
            v.to_string(),
            r#"{"a":0.333333333333,"b":[1.41421356237],"c":7}"#
        );
    }

    #[test]
    fn pilot_points_parse() {
        assert_eq!(
            parse_points("0.9:0.05, 0.9:1.5").unwrap(),
            vec![(0.9, 0.05), (0.9, 1.5)]
        );
        assert!(parse_points("0.9").is_err());
    }
}
