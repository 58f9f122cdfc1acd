//! Finite-horizon phase classification, `(alpha, rho)` sweeps and
//! threshold calibration.
//!
//! A finite run cannot certify an almost-sure property, so every run is
//! only labelled recurrent-like, transient-like or localized-like, and
//! every cell carries the theoretical label next to the empirical
//! fractions.

use crate::diagnostics::DiagnosticsTrace;
use crate::error::{Error, Result};
use crate::rng::{mix64, run_rng, run_seed};
use crate::schemes::{classify_power_law, table1_phase, Phase, PhaseLabel, SchemeSpec};
use crate::walk::{run, RunOptions, StepEvent, StepObserver, StopReason, StopRule, Walker};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt;

/// Thresholds shipped with the crate, chosen by [`calibrate_thresholds`]
/// on the default pilot (see `thresholds.toml` at the repository root).
pub const DEFAULT_THRESHOLDS: Thresholds = Thresholds {
    window_fraction: 0.1,
    escape_fraction: 0.9999,
    drift_exponent: 0.0,
};

/// `S2` tail fractions are measured after `horizon / S2_CUT_DIVISOR` steps.
pub const S2_CUT_DIVISOR: u64 = 10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Thresholds {
    /// Trailing window, as a fraction of the horizon, whose range decides
    /// localization.
    pub window_fraction: f64,
    /// A transient-like run has no return to 0 in this final fraction of
    /// the horizon.
    pub escape_fraction: f64,
    /// ... and ends at or beyond `horizon^drift_exponent`.
    pub drift_exponent: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        DEFAULT_THRESHOLDS
    }
}

impl Thresholds {
    pub fn validate(&self) -> Result<()> {
        let unit = |v: f64| v > 0.0 && v <= 1.0;
        if !unit(self.window_fraction) || !unit(self.escape_fraction) {
            return Err(Error::config(
                "window_fraction and escape_fraction must lie in (0, 1]",
            ));
        }
        if !(self.drift_exponent >= 0.0 && self.drift_exponent <= 1.0) {
            return Err(Error::config("drift_exponent must lie in [0, 1]"));
        }
        Ok(())
    }

    pub fn window(&self, horizon: u64) -> u64 {
        ((horizon as f64 * self.window_fraction).floor() as u64).max(1)
    }

    pub fn min_drift(&self, horizon: u64) -> u64 {
        (horizon as f64).powf(self.drift_exponent).ceil() as u64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RunClass {
    RecurrentLike,
    TransientLike,
    LocalizedLike,
}

impl RunClass {
    pub fn matches(self, phase: Phase) -> bool {
        matches!(
            (self, phase),
            (RunClass::RecurrentLike, Phase::Recurrent)
                | (RunClass::TransientLike, Phase::Transient)
                | (RunClass::LocalizedLike, Phase::Localizes)
        )
    }
}

impl fmt::Display for RunClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RunClass::RecurrentLike => "RecurrentLike",
            RunClass::TransientLike => "TransientLike",
            RunClass::LocalizedLike => "LocalizedLike",
        })
    }
}

/// Range of positions over a trailing window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowSpan {
    pub window: u64,
    pub min: u64,
    pub max: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub run_index: u64,
    pub seed: u64,
    pub horizon: u64,
    pub steps: u64,
    pub returns_to_0: u64,
    pub last_return: Option<u64>,
    pub tau_hit: bool,
    pub max_position: u64,
    pub final_position: u64,
    /// The first requested window; more are kept in `windows`.
    pub last_window_range: (u64, u64),
    pub windows: Vec<WindowSpan>,
    /// Share of the final `S2` accrued after the cut step.
    pub s2_tail_fraction: f64,
    pub s2_final: f64,
    pub stop_reason: StopReason,
}

impl RunSummary {
    pub fn window_range(&self, window: u64) -> Option<(u64, u64)> {
        self.windows
            .iter()
            .find(|w| w.window == window.min(self.steps))
            .map(|w| (w.min, w.max))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryOptions {
    pub horizon: u64,
    /// Trailing windows to report; the first is `last_window_range`.
    pub windows: Vec<u64>,
    pub stop_rules: Vec<StopRule>,
    /// Step after which the `S2` tail is measured.
    pub s2_cut: u64,
}

impl SummaryOptions {
    pub fn for_thresholds(horizon: u64, thresholds: &Thresholds) -> Self {
        Self {
            horizon,
            windows: vec![thresholds.window(horizon)],
            stop_rules: Vec::new(),
            s2_cut: horizon / S2_CUT_DIVISOR,
        }
    }
}

struct S2Probe {
    trace: DiagnosticsTrace,
    cut: u64,
    at_cut: f64,
}

impl StepObserver for S2Probe {
    #[inline]
    fn on_step(&mut self, _: &Walker<'_>, ev: &StepEvent) {
        let was_frozen = self.trace.is_frozen();
        let dm = self.trace.update_m(ev);
        if !was_frozen {
            self.trace.update_s2(dm);
        }
        if ev.n + 1 == self.cut {
            self.at_cut = self.trace.s2();
        }
    }
}

/// Runs one walk on stream `(master_seed, run_index)` and extracts the
/// classification features.
pub fn run_summary(
    scheme: &SchemeSpec,
    opts: &SummaryOptions,
    master_seed: u64,
    run_index: u64,
) -> RunSummary {
    let mut rng = run_rng(master_seed, run_index);
    let walk_opts = RunOptions {
        stop_rules: opts.stop_rules.clone(),
        windows: opts.windows.clone(),
        ..RunOptions::default()
    };
    let mut probe = S2Probe {
        trace: DiagnosticsTrace::new(u64::MAX),
        cut: opts.s2_cut,
        at_cut: 0.0,
    };
    let out = run(scheme, opts.horizon, &walk_opts, &mut rng, &mut probe);
    let f = out.features;
    let s2_final = probe.trace.s2();
    if f.steps < opts.s2_cut {
        probe.at_cut = s2_final;
    }
    let s2_tail_fraction = if s2_final > 0.0 {
        ((s2_final - probe.at_cut) / s2_final).max(0.0)
    } else {
        0.0
    };
    let windows: Vec<WindowSpan> = f
        .window_ranges
        .iter()
        .map(|w| WindowSpan {
            window: w.window,
            min: w.min,
            max: w.max,
        })
        .collect();
    let last_window_range = windows
        .first()
        .map(|w| (w.min, w.max))
        .unwrap_or((f.final_position, f.final_position));
    RunSummary {
        run_index,
        seed: run_seed(master_seed, run_index),
        horizon: opts.horizon,
        steps: f.steps,
        returns_to_0: f.returns_to_0,
        last_return: f.last_return,
        tau_hit: f.tau.is_some(),
        max_position: f.max_position,
        final_position: f.final_position,
        last_window_range,
        windows,
        s2_tail_fraction,
        s2_final,
        stop_reason: f.stop,
    }
}

/// Labels a run. Localized-like if the trailing window visits at most two
/// vertices; otherwise transient-like if the walk did not touch 0 in the
/// final `escape_fraction` of the horizon and ended at least
/// `horizon^drift_exponent` away; otherwise recurrent-like.
pub fn classify_run(summary: &RunSummary, thresholds: &Thresholds) -> Result<RunClass> {
    let horizon = summary.horizon;
    let window = thresholds.window(horizon);
    if horizon < window || horizon == 0 {
        return Err(Error::config(format!(
            "horizon {horizon} is shorter than the window {window}"
        )));
    }
    let (lo, hi) = summary.window_range(window).ok_or_else(|| {
        Error::config(format!(
            "run summary has no range for a window of {window} steps"
        ))
    })?;
    if hi - lo <= 1 {
        return Ok(RunClass::LocalizedLike);
    }
    let escape_from = horizon as f64 * (1.0 - thresholds.escape_fraction);
    let escaped = summary.last_return.is_none_or(|r| (r as f64) < escape_from);
    if escaped && summary.final_position >= thresholds.min_drift(horizon) {
        return Ok(RunClass::TransientLike);
    }
    Ok(RunClass::RecurrentLike)
}

/// Which scheme family a sweep instantiates at each grid point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "family")]
pub enum SweepFamily {
    PowerDt,
    PerturbedDt { epsilon: f64 },
}

impl SweepFamily {
    pub fn scheme(&self, alpha: f64, rho: f64) -> Result<SchemeSpec> {
        match *self {
            SweepFamily::PowerDt => SchemeSpec::power_law_dt(alpha, rho),
            SweepFamily::PerturbedDt { epsilon } => SchemeSpec::perturbed_dt(alpha, rho, epsilon),
        }
    }

    pub fn theory_label(&self, alpha: f64, rho: f64) -> Result<PhaseLabel> {
        match self {
            SweepFamily::PowerDt => classify_power_law(alpha, rho),
            SweepFamily::PerturbedDt { .. } => Ok(table1_phase(&self.scheme(alpha, rho)?)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PhaseCell {
    pub alpha: f64,
    pub rho: f64,
    pub n_runs: u64,
    pub horizon: u64,
    pub n_recurrent_like: u64,
    pub n_transient_like: u64,
    pub n_localized_like: u64,
    pub frac_recurrent_like: f64,
    pub frac_transient_like: f64,
    pub frac_localized_like: f64,
    pub theory_label: PhaseLabel,
    pub master_seed: u64,
}

impl PhaseCell {
    fn from_classes(
        alpha: f64,
        rho: f64,
        horizon: u64,
        master_seed: u64,
        theory_label: PhaseLabel,
        classes: &[RunClass],
    ) -> Self {
        let count = |c: RunClass| classes.iter().filter(|&&k| k == c).count() as u64;
        let n = classes.len() as u64;
        let (r, t, l) = (
            count(RunClass::RecurrentLike),
            count(RunClass::TransientLike),
            count(RunClass::LocalizedLike),
        );
        let counts = [r, t, l];
        let mut f = counts.map(|k| if n == 0 { 0.0 } else { k as f64 / n as f64 });
        // the last non-empty class takes the remainder, so the fractions
        // add up to exactly 1
        if let Some(last) = (0..3).rev().find(|&i| counts[i] > 0) {
            f[last] = 1.0 - f[..last].iter().fold(0.0, |acc, v| acc + v);
        }
        let [fr, ft, fl] = f;
        Self {
            alpha,
            rho,
            n_runs: n,
            horizon,
            n_recurrent_like: r,
            n_transient_like: t,
            n_localized_like: l,
            frac_recurrent_like: fr,
            frac_transient_like: ft,
            frac_localized_like: fl,
            theory_label,
            master_seed,
        }
    }

    pub fn fraction(&self, class: RunClass) -> f64 {
        match class {
            RunClass::RecurrentLike => self.frac_recurrent_like,
            RunClass::TransientLike => self.frac_transient_like,
            RunClass::LocalizedLike => self.frac_localized_like,
        }
    }
}

pub const SWEEP_CSV_HEADER: &str =
    "alpha,rho,n_runs,horizon,frac_recurrent_like,frac_transient_like,frac_localized_like,theory_label,master_seed";

/// Master seed of the runs of cell `(alpha, rho)`. Keyed by the parameters
/// so a cell's runs do not depend on the rest of the grid.
pub fn cell_seed(master_seed: u64, alpha: f64, rho: f64) -> u64 {
    mix64(master_seed ^ mix64(alpha.to_bits() ^ mix64(rho.to_bits())))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub family: SweepFamily,
    pub grid: Vec<(f64, f64)>,
    pub runs_per_cell: u64,
    pub horizon: u64,
    pub master_seed: u64,
    pub thresholds: Thresholds,
}

/// Runs and summarises every `(cell, run)` pair in parallel. The result is
/// ordered by grid position, then run index.
fn summarise_grid(
    family: SweepFamily,
    grid: &[(f64, f64)],
    runs: u64,
    opts: &SummaryOptions,
    master_seed: u64,
) -> Result<Vec<Vec<RunSummary>>> {
    let schemes = grid
        .iter()
        .map(|&(a, r)| family.scheme(a, r))
        .collect::<Result<Vec<_>>>()?;
    let jobs: Vec<(usize, u64)> = (0..grid.len())
        .flat_map(|c| (0..runs).map(move |i| (c, i)))
        .collect();
    let flat: Vec<RunSummary> = jobs
        .par_iter()
        .map(|&(c, i)| {
            let (a, r) = grid[c];
            run_summary(&schemes[c], opts, cell_seed(master_seed, a, r), i)
        })
        .collect();
    let mut out: Vec<Vec<RunSummary>> = vec![Vec::with_capacity(runs as usize); grid.len()];
    for ((c, _), s) in jobs.into_iter().zip(flat) {
        out[c].push(s);
    }
    Ok(out)
}

pub fn sweep(cfg: &SweepConfig) -> Result<Vec<PhaseCell>> {
    cfg.thresholds.validate()?;
    if cfg.horizon == 0 {
        return Err(Error::config("horizon must be positive"));
    }
    let labels = cfg
        .grid
        .iter()
        .map(|&(a, r)| cfg.family.theory_label(a, r))
        .collect::<Result<Vec<_>>>()?;
    let opts = SummaryOptions::for_thresholds(cfg.horizon, &cfg.thresholds);
    let per_cell = summarise_grid(
        cfg.family,
        &cfg.grid,
        cfg.runs_per_cell,
        &opts,
        cfg.master_seed,
    )?;
    cfg.grid
        .iter()
        .zip(labels)
        .zip(per_cell)
        .map(|((&(a, r), label), runs)| {
            let classes = runs
                .iter()
                .map(|s| classify_run(s, &cfg.thresholds))
                .collect::<Result<Vec<_>>>()?;
            Ok(PhaseCell::from_classes(
                a,
                r,
                cfg.horizon,
                cfg.master_seed,
                label,
                &classes,
            ))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct PilotConfig {
    pub points: Vec<(f64, f64)>,
    pub runs_per_point: u64,
    pub horizon: u64,
    pub master_seed: u64,
    pub window_fractions: Vec<f64>,
    pub escape_fractions: Vec<f64>,
    pub drift_exponents: Vec<f64>,
}

impl PilotConfig {
    /// The three unambiguous pilot points with the default candidate grid.
    pub fn standard(runs_per_point: u64, horizon: u64, master_seed: u64) -> Self {
        Self {
            points: vec![(0.9, 0.05), (0.9, 0.6), (0.9, 1.5)],
            runs_per_point,
            horizon,
            master_seed,
            window_fractions: vec![0.1],
            escape_fractions: vec![0.5, 0.75, 0.9, 0.99, 0.999, 0.9999, 1.0],
            drift_exponents: (0..=16).map(|i| i as f64 * 0.05).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PilotAgreement {
    pub alpha: f64,
    pub rho: f64,
    pub theory: Phase,
    pub agreement: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Calibration {
    pub thresholds: Thresholds,
    pub per_point: Vec<PilotAgreement>,
    /// Smallest per-point agreement.
    pub min_agreement: f64,
    pub mean_agreement: f64,
    pub horizon: u64,
    pub runs_per_point: u64,
    pub master_seed: u64,
}

/// Below this pilot agreement calibration fails.
pub const MIN_PILOT_AGREEMENT: f64 = 0.7;

/// Grid search over the candidate thresholds, maximising the worst
/// per-point agreement with the theoretical label (ties: mean agreement,
/// then first candidate in grid order). Fails if the best candidate
/// agrees on less than [`MIN_PILOT_AGREEMENT`] of some point's runs.
pub fn calibrate_thresholds(pilot: &PilotConfig) -> Result<Calibration> {
    let cal = search_thresholds(pilot)?;
    if cal.min_agreement < MIN_PILOT_AGREEMENT {
        let t = cal.thresholds;
        return Err(Error::Calibration(format!(
            "best thresholds (window_fraction {}, escape_fraction {}, drift_exponent {}) reach only {:.1}% agreement on some pilot point (need {:.0}%)",
            t.window_fraction,
            t.escape_fraction,
            t.drift_exponent,
            100.0 * cal.min_agreement,
            100.0 * MIN_PILOT_AGREEMENT
        )));
    }
    Ok(cal)
}

/// The grid search behind [`calibrate_thresholds`], without the agreement
/// floor.
pub fn search_thresholds(pilot: &PilotConfig) -> Result<Calibration> {
    if pilot.points.is_empty() || pilot.runs_per_point == 0 {
        return Err(Error::Calibration("empty pilot set".into()));
    }
    if pilot.window_fractions.is_empty()
        || pilot.escape_fractions.is_empty()
        || pilot.drift_exponents.is_empty()
    {
        return Err(Error::Calibration("empty candidate grid".into()));
    }
    let mut phases = Vec::with_capacity(pilot.points.len());
    for &(a, r) in &pilot.points {
        let label = classify_power_law(a, r)?;
        if label.phase == Phase::Unknown {
            return Err(Error::Calibration(format!(
                "pilot point ({a}, {r}) has no theoretical label"
            )));
        }
        phases.push(label.phase);
    }
    let mut windows: Vec<u64> = Vec::new();
    for &wf in &pilot.window_fractions {
        let t = Thresholds {
            window_fraction: wf,
            ..DEFAULT_THRESHOLDS
        };
        t.validate()?;
        let w = t.window(pilot.horizon);
        if w > pilot.horizon {
            return Err(Error::Calibration(format!(
                "horizon {} is shorter than the window {w}",
                pilot.horizon
            )));
        }
        if !windows.contains(&w) {
            windows.push(w);
        }
    }
    let opts = SummaryOptions {
        horizon: pilot.horizon,
        windows,
        stop_rules: Vec::new(),
        s2_cut: pilot.horizon / S2_CUT_DIVISOR,
    };
    let runs = summarise_grid(
        SweepFamily::PowerDt,
        &pilot.points,
        pilot.runs_per_point,
        &opts,
        pilot.master_seed,
    )?;

    let mut best: Option<(Thresholds, Vec<f64>)> = None;
    let score = |v: &[f64]| {
        let min = v.iter().copied().fold(f64::INFINITY, f64::min);
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        (min, mean)
    };
    for &window_fraction in &pilot.window_fractions {
        for &escape_fraction in &pilot.escape_fractions {
            for &drift_exponent in &pilot.drift_exponents {
                let t = Thresholds {
                    window_fraction,
                    escape_fraction,
                    drift_exponent,
                };
                t.validate()?;
                let mut agreements = Vec::with_capacity(runs.len());
                for (cell, &phase) in runs.iter().zip(&phases) {
                    let mut hits = 0u64;
                    for s in cell {
                        if classify_run(s, &t)?.matches(phase) {
                            hits += 1;
                        }
                    }
                    agreements.push(hits as f64 / cell.len() as f64);
                }
                let better = match &best {
                    None => true,
                    Some((_, b)) => score(&agreements) > score(b),
                };
                if better {
                    best = Some((t, agreements));
                }
            }
        }
    }
    let (thresholds, agreements) = best.expect("non-empty candidate grid");
    let (min_agreement, mean_agreement) = score(&agreements);
    let per_point = pilot
        .points
        .iter()
        .zip(&phases)
        .zip(&agreements)
        .map(|((&(alpha, rho), &theory), &agreement)| PilotAgreement {
            alpha,
            rho,
            theory,
            agreement,
        })
        .collect();
    Ok(Calibration {
        thresholds,
        per_point,
        min_agreement,
        mean_agreement,
        horizon: pilot.horizon,
        runs_per_point: pilot.runs_per_point,
        master_seed: pilot.master_seed,
    })
}
