//! Reinforcement schemes and the theoretical phase classification.
//!
//! A scheme assigns a weight `f(l, x)` to edge `{x, x+1}` after it has been
//! traversed `l` times. Factor-type schemes split this as
//! `f(l, x) = delta_l * f(0, x)` with `delta_0 = 1` and `delta` non-decreasing;
//! a factor is *down-only* (DT) when `delta_{2k} = delta_{2k+1}`, so an edge
//! only gains weight when it is crossed from right to left.
//!
//! Besides evaluating weights this module decides the divergence of the
//! series that drive the classical classification:
//!
//! ```text
//! F_l^(k) = sum_y f(l, y)^-k        Phi_x = sum_j 1 / f(j, x)
//! ```
//!
//! Power-law schemes get exact p-series answers. Closure-defined schemes are
//! judged by a dyadic block-sum heuristic bounded by [`SERIES_CUTOFF`] terms,
//! which answers [`Convergence::Undetermined`] when it cannot tell.

use crate::error::{Error, Result};
use crate::stats::CompensatedSum;
use serde::Serialize;
use std::fmt;
use std::sync::Arc;

pub type FactorFn = Arc<dyn Fn(u64) -> f64 + Send + Sync>;
pub type SiteFn = Arc<dyn Fn(u64) -> f64 + Send + Sync>;
pub type WeightFn = Arc<dyn Fn(u64, u64) -> f64 + Send + Sync>;

/// Prefix on which invariants of closure-defined schemes are checked.
pub const CHECK_PREFIX: u64 = 4096;
/// Maximum number of terms the series heuristic may evaluate.
pub const SERIES_CUTOFF: u64 = 10_000_000;
/// Number of sites probed for `Phi_x` on non-factor schemes.
pub const PHI_PROBE_SITES: u64 = 16;
/// Perturbation size of the `perturbed-dt` preset.
pub const DEFAULT_EPSILON: f64 = 0.05;

/// Slack used when comparing `rho` against the closed-form phase boundaries,
/// so that decimal inputs such as `(0.9, 0.1)` land on the closed side.
const BOUNDARY_EPS: f64 = 1e-12;
/// Number of leading terms summed for the `partial_sum` of exact verdicts.
const EXACT_PREFIX: u64 = 1 << 12;

#[derive(Clone)]
pub enum SchemeKind {
    /// `f(0, x) = (x+1)^alpha`, `delta_l = (floor(l/2) + 1)^rho`.
    PowerLawDt { alpha: f64, rho: f64 },
    /// Power-law DT factor with a single bump of size `epsilon` at
    /// `l = 2K + 1`, `K = floor(1/epsilon)`.
    PerturbedDt { alpha: f64, rho: f64, epsilon: f64 },
    /// Arbitrary factor-type scheme.
    GeneralFtr {
        delta: FactorFn,
        base: SiteFn,
        down_only: bool,
    },
    /// Arbitrary `f(l, x)`.
    Tabular { weight: WeightFn },
}

impl fmt::Debug for SchemeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SchemeKind::PowerLawDt { alpha, rho } => f
                .debug_struct("PowerLawDt")
                .field("alpha", alpha)
                .field("rho", rho)
                .finish(),
            SchemeKind::PerturbedDt {
                alpha,
                rho,
                epsilon,
            } => f
                .debug_struct("PerturbedDt")
                .field("alpha", alpha)
                .field("rho", rho)
                .field("epsilon", epsilon)
                .finish(),
            SchemeKind::GeneralFtr { down_only, .. } => f
                .debug_struct("GeneralFtr")
                .field("down_only", down_only)
                .finish_non_exhaustive(),
            SchemeKind::Tabular { .. } => f.debug_struct("Tabular").finish_non_exhaustive(),
        }
    }
}

/// A validated reinforcement scheme.
#[derive(Clone, Debug)]
pub struct SchemeSpec {
    kind: SchemeKind,
    name: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Convergence {
    Diverges,
    Converges,
    Undetermined,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeriesVerdict {
    pub kind: Convergence,
    pub partial_sum: f64,
    pub terms_used: u64,
}

impl SeriesVerdict {
    pub fn diverges(&self) -> bool {
        self.kind == Convergence::Diverges
    }

    pub fn converges(&self) -> bool {
        self.kind == Convergence::Converges
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, PartialOrd, Ord)]
pub enum Phase {
    Recurrent,
    Transient,
    Localizes,
    Unknown,
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Phase::Recurrent => "Recurrent",
            Phase::Transient => "Transient",
            Phase::Localizes => "Localizes",
            Phase::Unknown => "Unknown",
        };
        f.write_str(s)
    }
}

/// A phase together with the rule that produced it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PhaseLabel {
    pub phase: Phase,
    pub provenance: String,
}

impl PhaseLabel {
    fn new(phase: Phase, provenance: &str) -> Self {
        Self {
            phase,
            provenance: provenance.to_string(),
        }
    }
}

fn check_exponent(name: &str, v: f64, allow_zero: bool) -> Result<()> {
    let ok = v.is_finite() && if allow_zero { v >= 0.0 } else { v > 0.0 };
    if ok {
        Ok(())
    } else {
        Err(Error::InvalidScheme(format!("{name} = {v} out of range")))
    }
}

impl SchemeSpec {
    pub fn power_law_dt(alpha: f64, rho: f64) -> Result<Self> {
        check_exponent("alpha", alpha, false)?;
        check_exponent("rho", rho, true)?;
        Ok(Self {
            kind: SchemeKind::PowerLawDt { alpha, rho },
            name: format!("power-dt(alpha={alpha}, rho={rho})"),
        })
    }

    pub fn perturbed_dt(alpha: f64, rho: f64, epsilon: f64) -> Result<Self> {
        check_exponent("alpha", alpha, false)?;
        check_exponent("rho", rho, true)?;
        if !(epsilon > 0.0 && epsilon < 1.0) {
            return Err(Error::InvalidScheme(format!(
                "epsilon = {epsilon} not in (0, 1)"
            )));
        }
        let k = (1.0 / epsilon).floor();
        // the bumped delta_{2K+1} must not exceed delta_{2K+2}
        if (k + 1.0).powf(rho) + epsilon > (k + 2.0).powf(rho) {
            return Err(Error::InvalidScheme(format!(
                "epsilon = {epsilon} breaks monotonicity of delta at l = {}",
                2.0 * k + 2.0
            )));
        }
        Ok(Self {
            kind: SchemeKind::PerturbedDt {
                alpha,
                rho,
                epsilon,
            },
            name: format!("perturbed-dt(alpha={alpha}, rho={rho}, epsilon={epsilon})"),
        })
    }

    /// Factor-type scheme from closures. `delta_0 = 1`, monotonicity and
    /// positivity are checked on the first [`CHECK_PREFIX`] indices, and the
    /// down-only flag is read off the same prefix.
    pub fn general_ftr(name: impl Into<String>, delta: FactorFn, base: SiteFn) -> Result<Self> {
        if delta(0) != 1.0 {
            return Err(Error::InvalidScheme(format!("delta_0 = {} != 1", delta(0))));
        }
        let mut prev = 1.0;
        for l in 1..CHECK_PREFIX {
            let d = delta(l);
            if !(d.is_finite() && d >= prev) {
                return Err(Error::InvalidScheme(format!(
                    "delta not non-decreasing at l = {l}"
                )));
            }
            prev = d;
        }
        for x in 0..CHECK_PREFIX {
            let b = base(x);
            if !(b.is_finite() && b > 0.0) {
                return Err(Error::InvalidScheme(format!(
                    "f(0, {x}) = {b} not positive"
                )));
            }
        }
        let down_only = (0..CHECK_PREFIX / 2).all(|k| delta(2 * k) == delta(2 * k + 1));
        Ok(Self {
            kind: SchemeKind::GeneralFtr {
                delta,
                base,
                down_only,
            },
            name: name.into(),
        })
    }

    /// Arbitrary `f(l, x)`; positivity and monotonicity in `l` are checked on
    /// a sampled prefix.
    pub fn tabular(name: impl Into<String>, weight: WeightFn) -> Result<Self> {
        for x in 0..64 {
            let mut prev = 0.0;
            for l in 0..256 {
                let w = weight(l, x);
                if !(w.is_finite() && w > 0.0 && w >= prev) {
                    return Err(Error::InvalidScheme(format!(
                        "f({l}, {x}) = {w} not positive and non-decreasing in l"
                    )));
                }
                prev = w;
            }
        }
        Ok(Self {
            kind: SchemeKind::Tabular { weight },
            name: name.into(),
        })
    }

    /// The two-level example: `f(l, 0) = (l+1)^2`, `f(l, x) = x^2` for `x >= 1`.
    /// The walk stays on `{0, 1}` forever with probability
    /// `prod_k 4k^2 / (1 + 4k^2)` and otherwise escapes to infinity.
    pub fn davis_example() -> Self {
        let weight: WeightFn = Arc::new(|l, x| {
            if x == 0 {
                let l = (l + 1) as f64;
                l * l
            } else {
                let x = x as f64;
                x * x
            }
        });
        Self {
            kind: SchemeKind::Tabular { weight },
            name: "davis-example".into(),
        }
    }

    /// No reinforcement: `delta = 1`, `f(0, x) = (x+1)^alpha`.
    pub fn no_reinforcement(alpha: f64) -> Result<Self> {
        check_exponent("alpha", alpha, false)?;
        Self::general_ftr(
            format!("no-reinforcement(alpha={alpha})"),
            Arc::new(|_| 1.0),
            Arc::new(move |x| ((x + 1) as f64).powf(alpha)),
        )
    }

    pub fn kind(&self) -> &SchemeKind {
        &self.kind
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn is_factor_type(&self) -> bool {
        !matches!(self.kind, SchemeKind::Tabular { .. })
    }

    pub fn is_down_only(&self) -> bool {
        match &self.kind {
            SchemeKind::PowerLawDt { .. } => true,
            SchemeKind::GeneralFtr { down_only, .. } => *down_only,
            SchemeKind::PerturbedDt { .. } | SchemeKind::Tabular { .. } => false,
        }
    }

    /// `(alpha, rho)` for the power-law kinds.
    pub fn power_law_params(&self) -> Option<(f64, f64)> {
        match self.kind {
            SchemeKind::PowerLawDt { alpha, rho } | SchemeKind::PerturbedDt { alpha, rho, .. } => {
                Some((alpha, rho))
            }
            _ => None,
        }
    }

    /// Reinforcement factor `delta_l`; `None` for non-factor schemes.
    #[inline]
    pub fn delta(&self, l: u64) -> Option<f64> {
        match &self.kind {
            SchemeKind::PowerLawDt { rho, .. } => Some(((l / 2 + 1) as f64).powf(*rho)),
            SchemeKind::PerturbedDt { rho, epsilon, .. } => {
                let bump = 2 * (1.0 / epsilon).floor() as u64 + 1;
                let d = ((l / 2 + 1) as f64).powf(*rho);
                Some(if l == bump { d + epsilon } else { d })
            }
            SchemeKind::GeneralFtr { delta, .. } => Some(delta(l)),
            SchemeKind::Tabular { .. } => None,
        }
    }

    /// Initial weight `f(0, x)`.
    #[inline]
    pub fn base_weight(&self, x: u64) -> f64 {
        match &self.kind {
            SchemeKind::PowerLawDt { alpha, .. } | SchemeKind::PerturbedDt { alpha, .. } => {
                ((x + 1) as f64).powf(*alpha)
            }
            SchemeKind::GeneralFtr { base, .. } => base(x),
            SchemeKind::Tabular { weight } => weight(0, x),
        }
    }

    /// `f(l, x)`.
    #[inline]
    pub fn weight(&self, l: u64, x: u64) -> f64 {
        match &self.kind {
            SchemeKind::Tabular { weight } => weight(l, x),
            _ => self.delta(l).unwrap_or(1.0) * self.base_weight(x),
        }
    }

    /// `ln f(l, x)`, analytic for the power-law kinds so it stays finite
    /// where `f` itself overflows.
    pub fn ln_weight(&self, l: u64, x: u64) -> f64 {
        match &self.kind {
            SchemeKind::PowerLawDt { alpha, rho } => {
                rho * ((l / 2 + 1) as f64).ln() + alpha * ((x + 1) as f64).ln()
            }
            _ => self.weight(l, x).ln(),
        }
    }

    /// Whether crossing an edge whose count becomes `l_new` may change its
    /// weight. Down-only factors only change on even counts.
    #[inline]
    pub fn weight_may_change(&self, l_new: u64) -> bool {
        !self.is_down_only() || l_new.is_multiple_of(2)
    }

    /// `F_l^(k) = sum_y f(l, y)^-k` for `k` in `{1, 2}`.
    pub fn series_f(&self, l: u64, k: u32) -> Result<SeriesVerdict> {
        if !(k == 1 || k == 2) {
            return Err(Error::domain(format!(
                "series power k = {k} not in {{1, 2}}"
            )));
        }
        let kf = k as f64;
        let term = |y: u64| self.weight(l, y).powi(-(k as i32));
        Ok(match self.power_law_params() {
            Some((alpha, _)) => exact_p_series(kf * alpha, term),
            None => condensation_verdict(term, SERIES_CUTOFF),
        })
    }

    /// `Phi_x = sum_j 1 / f(j, x)`.
    pub fn series_phi(&self, x: u64) -> SeriesVerdict {
        match &self.kind {
            SchemeKind::PowerLawDt { rho, .. } | SchemeKind::PerturbedDt { rho, .. } => {
                exact_p_series(*rho, |j| 1.0 / self.weight(j, x))
            }
            _ => condensation_verdict(|j| 1.0 / self.weight(j, x), SERIES_CUTOFF),
        }
    }

    /// `sum_l delta_l^-p`; `None` for non-factor schemes.
    pub fn delta_series(&self, p: f64) -> Option<SeriesVerdict> {
        let term = |l: u64| self.delta(l).unwrap_or(f64::NAN).powf(-p);
        match &self.kind {
            SchemeKind::PowerLawDt { rho, .. } | SchemeKind::PerturbedDt { rho, .. } => {
                Some(exact_p_series(p * rho, term))
            }
            SchemeKind::GeneralFtr { .. } => Some(condensation_verdict(term, SERIES_CUTOFF)),
            SchemeKind::Tabular { .. } => None,
        }
    }

    /// Whether `delta` is bounded. `None` when the heuristic cannot tell or
    /// the scheme is not factor-type.
    pub fn delta_bounded(&self) -> Option<bool> {
        match &self.kind {
            SchemeKind::PowerLawDt { rho, .. } | SchemeKind::PerturbedDt { rho, .. } => {
                Some(*rho == 0.0)
            }
            SchemeKind::GeneralFtr { delta, .. } => {
                let growth = (delta(1 << 23) / delta(1 << 22)).log2();
                if growth < 1e-4 {
                    Some(true)
                } else if growth > 1e-2 {
                    Some(false)
                } else {
                    None
                }
            }
            SchemeKind::Tabular { .. } => None,
        }
    }

    /// Whether `f(0, x) / f(0, x-1)` is bounded over `x >= 1` (heuristic for
    /// closure-defined factors: dyadic tail ratios must not exceed the
    /// maximum over the checked prefix).
    pub fn base_ratio_bounded(&self) -> bool {
        match &self.kind {
            SchemeKind::PowerLawDt { .. } | SchemeKind::PerturbedDt { .. } => true,
            _ => {
                let ratio = |x: u64| self.base_weight(x) / self.base_weight(x - 1);
                let prefix_max = (1..CHECK_PREFIX).map(ratio).fold(0.0, f64::max);
                (12..=23).all(|j| ratio(1 << j) <= prefix_max * (1.0 + 1e-9))
            }
        }
    }

    /// Some `k` with `delta_{2k} < delta_{2k+1}`, the witness used by the
    /// bounded-factor recurrence criterion's second branch.
    fn has_up_step_reinforcement(&self) -> bool {
        match &self.kind {
            SchemeKind::PerturbedDt { .. } => true,
            SchemeKind::GeneralFtr { down_only, .. } => !down_only,
            _ => false,
        }
    }

    /// Truncated lower bound on the probability that the walk never jumps
    /// from `x` to `x + 1`:
    /// `prod_{k=1..K} (1 + f(0, x) / f(2k-1, x-1))^-1`.
    ///
    /// The `k`-th factor is the chance of stepping left on the `k`-th visit
    /// to `x`, when edge `{x-1, x}` has been crossed `2k - 1` times. With
    /// reflection directly below (`x = 1`) the limit is exact.
    pub fn stick_probability_lower_bound(&self, x: u64, truncation: u64) -> Result<f64> {
        if x == 0 {
            return Err(Error::domain("stick probability needs x >= 1"));
        }
        let right = self.base_weight(x);
        let mut p = 1.0;
        for k in 1..=truncation {
            p /= 1.0 + right / self.weight(2 * k - 1, x - 1);
        }
        Ok(p)
    }
}

fn exact_p_series(p: f64, term: impl Fn(u64) -> f64) -> SeriesVerdict {
    let mut acc = CompensatedSum::new();
    (0..EXACT_PREFIX).for_each(|i| acc.add(term(i)));
    SeriesVerdict {
        kind: if p <= 1.0 {
            Convergence::Diverges
        } else {
            Convergence::Converges
        },
        partial_sum: acc.value(),
        terms_used: EXACT_PREFIX,
    }
}

/// Dyadic block-sum test. Block `j` holds terms `2^j - 1 .. 2^(j+1) - 1`; for
/// a p-series the ratio of consecutive block sums tends to `2^(1-p)`.
fn condensation_verdict(term: impl Fn(u64) -> f64, cutoff: u64) -> SeriesVerdict {
    const DIVERGE_RATIO: f64 = 0.986; // p <= ~1.02
    const CONVERGE_RATIO: f64 = 0.9; // p >= ~1.15
    const EARLY_DIVERGE: f64 = 1.5;
    const EARLY_CONVERGE: f64 = 0.55;

    let mut total = CompensatedSum::new();
    let mut blocks: Vec<f64> = Vec::new();
    let (mut start, mut len, mut used) = (0u64, 1u64, 0u64);

    let last_ratios = |blocks: &[f64]| -> Vec<f64> {
        blocks
            .windows(2)
            .rev()
            .take(3)
            .map(|w| w[1] / w[0])
            .collect()
    };

    let verdict = |kind, total: &CompensatedSum, used| SeriesVerdict {
        kind,
        partial_sum: total.value(),
        terms_used: used,
    };

    while start + len <= cutoff {
        let mut block = CompensatedSum::new();
        for i in start..start + len {
            let t = term(i);
            if !(t.is_finite() && t >= 0.0) {
                return verdict(Convergence::Undetermined, &total, used);
            }
            block.add(t);
        }
        used += len;
        total.add(block.value());
        blocks.push(block.value());
        start += len;
        len *= 2;

        if blocks.len() >= 10 {
            let r = last_ratios(&blocks);
            if r.iter().all(|&q| q >= EARLY_DIVERGE) {
                return verdict(Convergence::Diverges, &total, used);
            }
            if r.iter().all(|&q| q <= EARLY_CONVERGE) {
                return verdict(Convergence::Converges, &total, used);
            }
        }
    }
    let r = last_ratios(&blocks);
    let kind = if r.len() == 3 && r.iter().all(|&q| q >= DIVERGE_RATIO) {
        Convergence::Diverges
    } else if r.len() == 3 && r.iter().all(|&q| q <= CONVERGE_RATIO) {
        Convergence::Converges
    } else {
        Convergence::Undetermined
    };
    verdict(kind, &total, used)
}

fn le(a: f64, b: f64) -> bool {
    a <= b + BOUNDARY_EPS
}

/// Phase of the power-law DT walk with `f(0, x) = (x+1)^alpha` and
/// `delta_{2k} = (k+1)^rho`, for `alpha` in `(1/2, 1]`.
pub fn theory_phase(alpha: f64, rho: f64) -> Result<PhaseLabel> {
    if !(alpha.is_finite() && alpha > 0.5 + BOUNDARY_EPS && le(alpha, 1.0)) {
        return Err(Error::domain(format!("alpha = {alpha} not in (1/2, 1]")));
    }
    if !(rho.is_finite() && rho >= 0.0) {
        return Err(Error::domain(format!("rho = {rho} must be >= 0")));
    }
    let transient_floor = (1.5 - alpha) / (2.5 - alpha);
    Ok(if le(rho, 1.0 - alpha) {
        PhaseLabel::new(Phase::Recurrent, "main theorem, part 1: rho <= 1 - alpha")
    } else if le(rho, 0.5) && !le(rho, transient_floor) {
        PhaseLabel::new(
            Phase::Transient,
            "main theorem, part 2: 1 - alpha < rho <= 1/2 and rho > (1.5 - alpha)/(2.5 - alpha)",
        )
    } else if !le(rho, 0.5) && le(rho, 1.0) {
        PhaseLabel::new(Phase::Transient, "main theorem, part 3: 1/2 < rho <= 1")
    } else if !le(rho, 1.0) {
        PhaseLabel::new(
            Phase::Localizes,
            "main theorem, part 4: rho > 1, localizes on a single edge",
        )
    } else {
        PhaseLabel::new(
            Phase::Unknown,
            "open region: 1 - alpha < rho <= (1.5 - alpha)/(2.5 - alpha)",
        )
    })
}

/// Classification from the divergence of `F_0^(1)`, `F_0^(2)`, `Phi_x` and
/// the factor criteria, applied in a fixed priority order.
pub fn table1_phase(scheme: &SchemeSpec) -> PhaseLabel {
    let f1 = scheme.series_f(0, 1).expect("k = 1");
    let f2 = scheme.series_f(0, 2).expect("k = 2");
    let phis: Vec<SeriesVerdict> = if scheme.is_factor_type() {
        vec![scheme.series_phi(0)]
    } else {
        (0..PHI_PROBE_SITES).map(|x| scheme.series_phi(x)).collect()
    };
    let phi_some_finite = phis.iter().any(SeriesVerdict::converges);
    let phi_all_infinite = phis.iter().all(SeriesVerdict::diverges);
    let undetermined = |v: &SeriesVerdict| v.kind == Convergence::Undetermined;
    if undetermined(&f1) || undetermined(&f2) || (!phi_some_finite && !phi_all_infinite) {
        return PhaseLabel::new(Phase::Unknown, "undetermined series");
    }

    if phi_all_infinite && f1.diverges() && f2.diverges() {
        return PhaseLabel::new(
            Phase::Recurrent,
            "phase table: Phi_x infinite for all x, F0(1) and F0(2) infinite",
        );
    }
    if phi_all_infinite && f1.converges() {
        return PhaseLabel::new(
            Phase::Transient,
            "phase table: Phi_x infinite for all x, F0(1) finite",
        );
    }
    if phi_some_finite && f2.diverges() {
        return PhaseLabel::new(
            Phase::Localizes,
            "phase table: Phi_x finite for some x, F0(2) infinite",
        );
    }

    if scheme.is_factor_type() {
        let bounded = scheme.delta_bounded();
        if bounded == Some(true) && f1.diverges() {
            return PhaseLabel::new(
                Phase::Recurrent,
                "factor criterion: delta bounded and F0(1) infinite",
            );
        }
        if scheme.has_up_step_reinforcement() && phi_all_infinite && f1.diverges() {
            return PhaseLabel::new(
                Phase::Recurrent,
                "factor criterion: delta_2k < delta_2k+1 for some k, Phi_x infinite for all x, F0(1) infinite",
            );
        }
        let inv1 = scheme.delta_series(1.0).expect("factor type");
        let inv2 = scheme.delta_series(2.0).expect("factor type");
        if undetermined(&inv1) || undetermined(&inv2) {
            return PhaseLabel::new(Phase::Unknown, "undetermined series");
        }
        if scheme.is_down_only()
            && inv2.converges()
            && inv1.diverges()
            && f2.converges()
            && f1.diverges()
        {
            return PhaseLabel::new(
                Phase::Transient,
                "L2-bounded martingale: DT, sum delta^-2 finite, sum delta^-1 infinite, F0(2) finite, F0(1) infinite",
            );
        }
        if inv1.converges() && scheme.base_ratio_bounded() {
            return PhaseLabel::new(
                Phase::Localizes,
                "single-edge trapping: sum delta^-1 finite and f(0,x)/f(0,x-1) bounded",
            );
        }
    }
    PhaseLabel::new(
        Phase::Unknown,
        "mixed behaviour possible: open cell of the phase table",
    )
}

/// `theory_phase` inside its box, the table rules outside it.
pub fn classify_power_law(alpha: f64, rho: f64) -> Result<PhaseLabel> {
    match theory_phase(alpha, rho) {
        Ok(label) => Ok(label),
        Err(_) => Ok(table1_phase(&SchemeSpec::power_law_dt(alpha, rho)?)),
    }
}

/// Optional parameters for a named preset.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PresetParams {
    pub alpha: Option<f64>,
    pub rho: Option<f64>,
    pub epsilon: Option<f64>,
}

pub const PRESET_NAMES: [&str; 4] = [
    "power-dt",
    "perturbed-dt",
    "davis-example",
    "no-reinforcement",
];

/// Builds a named preset. Unset parameters take these defaults:
/// `power-dt` alpha 0.9, rho 0.4; `perturbed-dt` alpha 0.9, rho 0.4,
/// epsilon [`DEFAULT_EPSILON`]; `no-reinforcement` alpha 1.2.
/// `davis-example` takes no parameters.
pub fn preset(name: &str, params: PresetParams) -> Result<SchemeSpec> {
    let alpha = params.alpha.unwrap_or(0.9);
    let rho = params.rho.unwrap_or(0.4);
    let reject = |what: &str| Error::config(format!("preset {name} takes no {what}"));
    match name {
        "power-dt" => {
            if params.epsilon.is_some() {
                return Err(reject("epsilon"));
            }
            SchemeSpec::power_law_dt(alpha, rho)
        }
        "perturbed-dt" => {
            SchemeSpec::perturbed_dt(alpha, rho, params.epsilon.unwrap_or(DEFAULT_EPSILON))
        }
        "davis-example" => {
            if params != PresetParams::default() {
                return Err(reject("parameters"));
            }
            Ok(SchemeSpec::davis_example())
        }
        "no-reinforcement" => {
            if params.rho.is_some() || params.epsilon.is_some() {
                return Err(reject("rho or epsilon"));
            }
            SchemeSpec::no_reinforcement(params.alpha.unwrap_or(1.2))
        }
        other => Err(Error::config(format!(
            "unknown scheme preset {other:?}; expected one of {PRESET_NAMES:?}"
        ))),
    }
}
