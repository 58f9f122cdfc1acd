//! Martingale functionals of a running walk.
//!
//! * `M_n = sum_{x < X_{n ^ tau}} 1 / w_n(x)`, frozen at 0 from the first
//!   return `tau` on. Under a down-only factor it is a martingale.
//! * `Theta_n = M_n + C_n`, where `C_n` accumulates
//!   `1/w_m(X_m) - 1/w_{m+1}(X_m)` over up-steps before `tau`, including the
//!   forced first step. It is a martingale for every factor-type scheme and
//!   coincides with `M_n` under a down-only factor.
//! * `S2 = sum (M_{n+1} - M_n)^2`, the quadratic variation of `M`.
//! * `N[x]`, the number of jumps `x -> x-1` before `tau` (the jump that
//!   realises `tau` included), and an unconditional variant counting all of
//!   them.
//!
//! `M`, `C` and `S2` use compensated summation; `M` is additionally
//! re-derived from its definition every [`CHECKPOINT_INTERVAL`] steps.

use crate::stats::CompensatedSum;
use crate::walk::{StepEvent, StepObserver, Walker};
use serde::Serialize;

pub const CHECKPOINT_INTERVAL: u64 = 1 << 20;

/// Default sampling stride: `max(1, horizon / 2^16)`.
pub fn default_stride(horizon: u64) -> u64 {
    (horizon >> 16).max(1)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DiagnosticsSample {
    pub n: u64,
    pub m: f64,
    pub theta: f64,
    pub s2: f64,
}

/// Which down-crossing counter a report uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CrossingCount {
    /// Jumps `x -> x-1` up to and including the first return.
    PreTau,
    /// All jumps `x -> x-1`.
    Unconditional,
}

#[derive(Debug, Clone)]
pub struct DiagnosticsTrace {
    m: CompensatedSum,
    correction: CompensatedSum,
    s2: CompensatedSum,
    n_pre_tau: Vec<u64>,
    n_all: Vec<u64>,
    samples: Vec<DiagnosticsSample>,
    sample_stride: u64,
    frozen: bool,
    steps: u64,
    max_checkpoint_drift: f64,
}

impl DiagnosticsTrace {
    pub fn new(sample_stride: u64) -> Self {
        Self {
            m: CompensatedSum::new(),
            correction: CompensatedSum::new(),
            s2: CompensatedSum::new(),
            n_pre_tau: vec![0],
            n_all: vec![0],
            samples: vec![DiagnosticsSample {
                n: 0,
                m: 0.0,
                theta: 0.0,
                s2: 0.0,
            }],
            sample_stride: sample_stride.max(1),
            frozen: false,
            steps: 0,
            max_checkpoint_drift: 0.0,
        }
    }

    pub fn m(&self) -> f64 {
        if self.frozen {
            0.0
        } else {
            self.m.value()
        }
    }

    pub fn correction(&self) -> f64 {
        self.correction.value()
    }

    pub fn theta(&self) -> f64 {
        self.m() + self.correction()
    }

    pub fn s2(&self) -> f64 {
        self.s2.value()
    }

    /// Whether `tau` has been reached.
    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn samples(&self) -> &[DiagnosticsSample] {
        &self.samples
    }

    pub fn sample_stride(&self) -> u64 {
        self.sample_stride
    }

    pub fn down_crossings(&self, which: CrossingCount) -> &[u64] {
        match which {
            CrossingCount::PreTau => &self.n_pre_tau,
            CrossingCount::Unconditional => &self.n_all,
        }
    }

    /// Largest relative gap seen between the running `M` and its direct
    /// recomputation at checkpoints.
    pub fn max_checkpoint_drift(&self) -> f64 {
        self.max_checkpoint_drift
    }

    /// Applies the `M` increment of one step and returns it. An up-step
    /// over edge `x` adds `1/w_{n+1}(x)`, a down-step subtracts
    /// `1/w_n(x)`; the step that returns to 0 sets `M` to 0 for good.
    pub fn update_m(&mut self, ev: &StepEvent) -> f64 {
        if self.frozen {
            return 0.0;
        }
        let dm = if ev.is_up() {
            1.0 / ev.weight_after
        } else {
            -1.0 / ev.weight_before
        };
        if ev.to == 0 {
            self.frozen = true;
            self.m.reset_to(0.0);
        } else {
            self.m.add(dm);
        }
        dm
    }

    /// Adds `1/w_n(x) - 1/w_{n+1}(x)` on up-steps before `tau`. Zero under a
    /// down-only factor, where up-crossings leave weights unchanged.
    pub fn update_theta(&mut self, ev: &StepEvent) {
        if self.frozen || !ev.is_up() {
            return;
        }
        let c = 1.0 / ev.weight_before - 1.0 / ev.weight_after;
        if c != 0.0 {
            self.correction.add(c);
        }
    }

    pub fn update_s2(&mut self, dm: f64) {
        self.s2.add(dm * dm);
    }

    /// Full update for one step: `Theta` correction, `M`, `S2`, crossings.
    pub fn record(&mut self, walker: &Walker<'_>, ev: &StepEvent) {
        self.update_theta(ev);
        let was_frozen = self.frozen;
        let dm = self.update_m(ev);
        if !was_frozen {
            self.update_s2(dm);
        }
        if !ev.is_up() {
            let x = ev.from as usize;
            if self.n_all.len() <= x {
                self.n_all.resize(x + 1, 0);
            }
            self.n_all[x] += 1;
            if !was_frozen {
                if self.n_pre_tau.len() <= x {
                    self.n_pre_tau.resize(x + 1, 0);
                }
                self.n_pre_tau[x] += 1;
            }
        }
        self.steps = ev.n + 1;
        if !self.frozen && self.steps.is_multiple_of(CHECKPOINT_INTERVAL) {
            self.checkpoint(walker);
        }
        if self.steps.is_multiple_of(self.sample_stride) {
            self.push_sample();
        }
    }

    /// Re-derives `M` from its definition and resynchronises.
    pub fn checkpoint(&mut self, walker: &Walker<'_>) {
        if self.frozen {
            return;
        }
        let direct = m_direct(walker);
        let drift = (self.m.value() - direct).abs() / direct.abs().max(f64::MIN_POSITIVE);
        self.max_checkpoint_drift = self.max_checkpoint_drift.max(drift);
        self.m.reset_to(direct);
    }

    /// Appends a sample for the current step unless one is already there.
    pub fn push_sample(&mut self) {
        if self.samples.last().is_some_and(|s| s.n == self.steps) {
            return;
        }
        self.samples.push(DiagnosticsSample {
            n: self.steps,
            m: self.m(),
            theta: self.theta(),
            s2: self.s2(),
        });
    }
}

impl StepObserver for DiagnosticsTrace {
    fn on_step(&mut self, walker: &Walker<'_>, event: &StepEvent) {
        self.record(walker, event);
    }
}

/// `M_n` from its definition: the sum of reciprocal current weights below
/// the position, or 0 once the walk has returned to the origin.
pub fn m_direct(walker: &Walker<'_>) -> f64 {
    if walker.state().tau.is_some() {
        return 0.0;
    }
    let mut acc = CompensatedSum::new();
    (0..walker.position()).for_each(|x| acc.add(1.0 / walker.edge_weight(x)));
    acc.value()
}

/// Jumps `x -> x-1` along `positions`, counted up to and including the
/// first return to 0 (`pre_tau`) and over the whole path (`all`).
pub fn down_crossings(positions: &[u64]) -> (Vec<u64>, Vec<u64>) {
    let len = positions.iter().copied().max().unwrap_or(0) as usize + 1;
    let mut pre = vec![0u64; len];
    let mut all = vec![0u64; len];
    let mut returned = false;
    for w in positions.windows(2) {
        if w[1] + 1 == w[0] {
            let x = w[0] as usize;
            all[x] += 1;
            if !returned {
                pre[x] += 1;
            }
        }
        if w[1] == 0 {
            returned = true;
        }
    }
    (pre, all)
}

/// The two series controlling the recurrence argument, over the explored
/// range: `sum_x (N_x+1)^-rho / (x+1)^alpha` and
/// `sum_x (N_x+1)^(1-2rho) / (x+1)^(2alpha)`.
pub fn proof_series(n: &[u64], alpha: f64, rho: f64) -> (f64, f64) {
    let mut first = CompensatedSum::new();
    let mut second = CompensatedSum::new();
    for (x, &nx) in n.iter().enumerate() {
        let site = (x + 1) as f64;
        let count = (nx + 1) as f64;
        first.add(count.powf(-rho) / site.powf(alpha));
        second.add(count.powf(1.0 - 2.0 * rho) / site.powf(2.0 * alpha));
    }
    (first.value(), second.value())
}

/// `sum_x sum_{l < phi(x)} f(l, x)^-2`, which equals `S2` on a walk stopped
/// at `tau` (or not yet returned) under a down-only factor.
pub fn s2_from_counts(scheme: &crate::schemes::SchemeSpec, phi: &[u64]) -> f64 {
    let mut acc = CompensatedSum::new();
    for (x, &c) in phi.iter().enumerate() {
        for l in 0..c {
            acc.add(scheme.weight(l, x as u64).powi(-2));
        }
    }
    acc.value()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::run_rng;
    use crate::schemes::SchemeSpec;
    use crate::walk::Direction;
    use approx::assert_relative_eq;
    use std::sync::Arc;

    fn drive(scheme: &SchemeSpec, moves: &[Direction]) -> (DiagnosticsTrace, Vec<f64>) {
        let mut w = Walker::new(scheme);
        let mut t = DiagnosticsTrace::new(1);
        let mut ms = Vec::new();
        for &d in moves {
            let ev = w.apply(d);
            t.record(&w, &ev);
            ms.push(t.m());
        }
        (t, ms)
    }

    use Direction::{Left as L, Right as R};

    #[test]
    fn first_step_adds_reciprocal_base_weight() {
        let s = SchemeSpec::power_law_dt(0.9, 0.4).unwrap();
        let (t, ms) = drive(&s, &[R]);
        assert_eq!(ms, vec![1.0]);
        assert_eq!(t.theta(), 1.0);
    }

    #[test]
    fn out_and_back_on_linear_scheme() {
        let s = SchemeSpec::power_law_dt(1.0, 1.0).unwrap();
        let (t, ms) = drive(&s, &[R, L]);
        assert_eq!(ms, vec![1.0, 0.0]);
        assert_eq!(t.s2(), 2.0);
        assert!(t.is_frozen());
        assert_eq!(t.down_crossings(CrossingCount::PreTau), &[0, 1]);
    }

    #[test]
    fn frozen_after_tau() {
        let s = SchemeSpec::power_law_dt(1.0, 1.0).unwrap();
        let (t, ms) = drive(&s, &[R, L, R, R, L]);
        assert_eq!(&ms[1..], &[0.0; 4]);
        assert_eq!(t.s2(), 2.0);
        assert_eq!(t.theta(), 0.0);
        assert_eq!(t.down_crossings(CrossingCount::PreTau), &[0, 1]);
        assert_eq!(t.down_crossings(CrossingCount::Unconditional), &[0, 1, 1]);
    }

    #[test]
    fn theta_correction_on_every_crossing_scheme() {
        // delta_0 = 1, delta_1 = 2: the first crossing already reinforces
        let s = SchemeSpec::general_ftr(
            "every-crossing",
            Arc::new(|l| if l == 0 { 1.0 } else { 2.0 }),
            Arc::new(|_| 1.0),
        )
        .unwrap();
        let (t, _) = drive(&s, &[R]);
        assert_eq!(t.m(), 0.5);
        assert_eq!(t.theta(), 1.0);
    }

    #[test]
    fn theta_equals_m_under_down_only() {
        let s = SchemeSpec::power_law_dt(0.9, 0.4).unwrap();
        let mut rng = run_rng(11, 0);
        let mut w = Walker::new(&s);
        let mut t = DiagnosticsTrace::new(1);
        for _ in 0..20_000 {
            let ev = w.step(&mut rng);
            t.record(&w, &ev);
            assert_eq!(t.theta(), t.m());
        }
    }

    #[test]
    fn incremental_m_matches_direct_definition() {
        let s = SchemeSpec::power_law_dt(0.9, 0.45).unwrap();
        for seed in 0..20 {
            let mut rng = run_rng(5, seed);
            let mut w = Walker::new(&s);
            let mut t = DiagnosticsTrace::new(1);
            for _ in 0..5_000 {
                let ev = w.step(&mut rng);
                t.record(&w, &ev);
                let direct = m_direct(&w);
                assert!((t.m() - direct).abs() <= 1e-9 * direct.max(1e-300));
            }
        }
    }

    #[test]
    fn s2_matches_count_identity_before_tau() {
        let s = SchemeSpec::power_law_dt(0.9, 0.6).unwrap();
        for seed in 0..20 {
            let mut rng = run_rng(6, seed);
            let mut w = Walker::new(&s);
            let mut t = DiagnosticsTrace::new(1);
            for _ in 0..3_000 {
                let ev = w.step(&mut rng);
                t.record(&w, &ev);
                if t.is_frozen() {
                    break;
                }
            }
            let direct = s2_from_counts(&s, &w.state().phi);
            assert_relative_eq!(t.s2(), direct, max_relative = 1e-9);
        }
    }

    #[test]
    fn down_crossing_examples() {
        let (pre, _) = down_crossings(&[0, 1, 0]);
        assert_eq!(pre, vec![0, 1]);
        let (pre, _) = down_crossings(&[0, 1, 2, 1, 0]);
        assert_eq!(pre, vec![0, 1, 1]);
        let (pre, all) = down_crossings(&[0, 1, 0, 1, 0]);
        assert_eq!(pre, vec![0, 1]);
        assert_eq!(all, vec![0, 2]);
    }

    #[test]
    fn proof_series_examples() {
        assert_eq!(proof_series(&[], 0.9, 0.4), (0.0, 0.0));
        let (a, b) = proof_series(&[0; 10], 0.9, 0.4);
        let ea: f64 = (1..=10).map(|x| (x as f64).powf(-0.9)).sum();
        let eb: f64 = (1..=10).map(|x| (x as f64).powf(-1.8)).sum();
        assert_relative_eq!(a, ea, max_relative = 1e-14);
        assert_relative_eq!(b, eb, max_relative = 1e-14);
        let (a2, _) = proof_series(&[0, 3, 0, 0, 0, 0, 0, 0, 0, 0], 0.9, 0.4);
        assert!(a2 < a);
    }

    #[test]
    fn samples_follow_stride() {
        let s = SchemeSpec::power_law_dt(0.9, 0.4).unwrap();
        let mut rng = run_rng(2, 0);
        let mut w = Walker::new(&s);
        let mut t = DiagnosticsTrace::new(10);
        for _ in 0..95 {
            let ev = w.step(&mut rng);
            t.record(&w, &ev);
        }
        let ns: Vec<u64> = t.samples().iter().map(|s| s.n).collect();
        assert_eq!(ns, (0..=90).step_by(10).collect::<Vec<_>>());
        assert!(t.samples().windows(2).all(|p| p[0].s2 <= p[1].s2));
        assert_eq!(default_stride(1_000_000), 15);
        assert_eq!(default_stride(10), 1);
    }
}
