//! The reinforced walk on the half-line.
//!
//! At position `x > 0` the walk steps right with probability
//! `w(x) / (w(x-1) + w(x))`, where `w(y) = f(phi(y), y)` and `phi(y)` counts
//! traversals of edge `{y, y+1}`. From 0 it always steps right.

use crate::error::{Error, Result};
use crate::schemes::SchemeSpec;
use rand::Rng;
use serde::Serialize;
use std::fmt;
use std::str::FromStr;

/// Largest depth accepted by [`enumerate_paths`].
pub const MAX_ENUM_DEPTH: u32 = 24;
/// Default cap on the number of recorded trajectory points.
pub const DEFAULT_MAX_POINTS: usize = 1 << 22;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Direction {
    Left,
    Right,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct WalkState {
    pub position: u64,
    /// `phi[x]` = traversals of edge `{x, x+1}` so far. Always at least
    /// `max_position + 1` entries long.
    pub phi: Vec<u64>,
    pub step_count: u64,
    /// Step index of the first return to 0.
    pub tau: Option<u64>,
    pub max_position: u64,
}

impl Default for WalkState {
    fn default() -> Self {
        Self {
            position: 0,
            phi: vec![0],
            step_count: 0,
            tau: None,
            max_position: 0,
        }
    }
}

impl WalkState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn phi_at(&self, x: u64) -> u64 {
        self.phi.get(x as usize).copied().unwrap_or(0)
    }

    /// Checks the bookkeeping invariants: counts sum to the step count,
    /// nothing beyond the running maximum has been crossed, and the edge
    /// below the current position has been crossed an odd number of times
    /// while the one above has been crossed an even number of times.
    pub fn check_invariants(&self) -> std::result::Result<(), String> {
        let total: u64 = self.phi.iter().sum();
        if total != self.step_count {
            return Err(format!(
                "sum phi = {total} != step count {}",
                self.step_count
            ));
        }
        if let Some((x, _)) = self
            .phi
            .iter()
            .enumerate()
            .find(|&(x, &c)| x as u64 >= self.max_position && c != 0)
        {
            return Err(format!(
                "phi[{x}] != 0 beyond max position {}",
                self.max_position
            ));
        }
        let x = self.position;
        if !self.phi_at(x).is_multiple_of(2) {
            return Err(format!("phi[{x}] odd while sitting at {x}"));
        }
        if x > 0 && self.phi_at(x - 1) % 2 != 1 {
            return Err(format!("phi[{}] even while sitting at {x}", x - 1));
        }
        Ok(())
    }
}

/// One completed move: the walk went from `from` to `to` at step `n`,
/// crossing `edge` whose count was `count_before` and whose weight changed
/// from `weight_before` to `weight_after`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepEvent {
    pub n: u64,
    pub from: u64,
    pub to: u64,
    pub edge: u64,
    pub count_before: u64,
    pub weight_before: f64,
    pub weight_after: f64,
}

impl StepEvent {
    pub fn is_up(&self) -> bool {
        self.to > self.from
    }
}

#[inline]
fn p_right_from(wl: f64, wr: f64, ln_weights: impl FnOnce() -> (f64, f64)) -> f64 {
    let ratio = wl / wr;
    if ratio.is_finite() && wl.is_finite() && wr.is_finite() && wr > 0.0 {
        1.0 / (1.0 + ratio)
    } else {
        let (ll, lr) = ln_weights();
        1.0 / (1.0 + (ll - lr).exp())
    }
}

/// Exact transition probability from `state`, computed from the counts.
pub fn transition_probability(scheme: &SchemeSpec, state: &WalkState, direction: Direction) -> f64 {
    let x = state.position;
    let right = if x == 0 {
        1.0
    } else {
        let (cl, cr) = (state.phi_at(x - 1), state.phi_at(x));
        p_right_from(scheme.weight(cl, x - 1), scheme.weight(cr, x), || {
            (scheme.ln_weight(cl, x - 1), scheme.ln_weight(cr, x))
        })
    };
    match direction {
        Direction::Right => right,
        Direction::Left => 1.0 - right,
    }
}

/// Anything that wants to see every step of a walk.
pub trait StepObserver {
    fn on_step(&mut self, walker: &Walker<'_>, event: &StepEvent);
}

impl StepObserver for () {
    #[inline]
    fn on_step(&mut self, _: &Walker<'_>, _: &StepEvent) {}
}

/// Walk engine with a per-edge cache of current weights.
#[derive(Debug, Clone)]
pub struct Walker<'s> {
    scheme: &'s SchemeSpec,
    state: WalkState,
    weights: Vec<f64>,
}

impl<'s> Walker<'s> {
    pub fn new(scheme: &'s SchemeSpec) -> Self {
        Self::from_state(scheme, WalkState::new())
    }

    pub fn from_state(scheme: &'s SchemeSpec, mut state: WalkState) -> Self {
        let need = state.max_position.max(state.position) as usize + 1;
        if state.phi.len() < need {
            state.phi.resize(need, 0);
        }
        let weights = state
            .phi
            .iter()
            .enumerate()
            .map(|(x, &c)| scheme.weight(c, x as u64))
            .collect();
        Self {
            scheme,
            state,
            weights,
        }
    }

    pub fn scheme(&self) -> &'s SchemeSpec {
        self.scheme
    }

    pub fn state(&self) -> &WalkState {
        &self.state
    }

    pub fn into_state(self) -> WalkState {
        self.state
    }

    pub fn position(&self) -> u64 {
        self.state.position
    }

    /// Current weight `w_n(x)` of edge `{x, x+1}`.
    #[inline]
    pub fn edge_weight(&self, x: u64) -> f64 {
        match self.weights.get(x as usize) {
            Some(&w) => w,
            None => self.scheme.base_weight(x),
        }
    }

    #[inline]
    pub fn p_right(&self) -> f64 {
        let x = self.state.position as usize;
        if x == 0 {
            return 1.0;
        }
        let (wl, wr) = (self.weights[x - 1], self.weights[x]);
        p_right_from(wl, wr, || {
            let s = &self.state;
            let x = x as u64;
            (
                self.scheme.ln_weight(s.phi[x as usize - 1], x - 1),
                self.scheme.ln_weight(s.phi[x as usize], x),
            )
        })
    }

    /// Moves one step using one uniform draw.
    #[inline]
    pub fn step<R: Rng + ?Sized>(&mut self, rng: &mut R) -> StepEvent {
        let dir = if self.state.position == 0 || crate::rng::uniform(rng) < self.p_right() {
            Direction::Right
        } else {
            Direction::Left
        };
        self.apply(dir)
    }

    /// Applies a move chosen by the caller.
    ///
    /// # Panics
    /// On a left move from 0, or if a 64-bit counter would overflow.
    pub fn apply(&mut self, dir: Direction) -> StepEvent {
        let s = &mut self.state;
        let from = s.position;
        let (to, edge) = match dir {
            Direction::Right => (from + 1, from),
            Direction::Left => {
                assert!(from > 0, "left move from the origin");
                (from - 1, from - 1)
            }
        };
        let e = edge as usize;
        let count_before = s.phi[e];
        let count_after = count_before
            .checked_add(1)
            .unwrap_or_else(|| panic!("edge counter overflow on edge {edge}"));
        s.phi[e] = count_after;
        let weight_before = self.weights[e];
        if self.scheme.weight_may_change(count_after) {
            self.weights[e] = self.scheme.weight(count_after, edge);
        }
        let weight_after = self.weights[e];

        let n = s.step_count;
        s.step_count = n
            .checked_add(1)
            .unwrap_or_else(|| panic!("step counter overflow"));
        s.position = to;
        if to == 0 && s.tau.is_none() {
            s.tau = Some(s.step_count);
        }
        if to > s.max_position {
            s.max_position = to;
            if s.phi.len() <= to as usize {
                s.phi.push(0);
                self.weights.push(self.scheme.base_weight(to));
            }
        }
        StepEvent {
            n,
            from,
            to,
            edge,
            count_before,
            weight_before,
            weight_after,
        }
    }

    /// Number of arrivals at `x` so far (the start at 0 is not counted).
    pub fn visits(&self, x: u64) -> u64 {
        let s = &self.state;
        let down_into = s.phi_at(x) / 2;
        let up_into = if x == 0 {
            0
        } else {
            s.phi_at(x - 1).div_ceil(2)
        };
        down_into + up_into
    }
}

/// Conditions that end a run before its horizon.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopRule {
    FirstReturn,
    /// Stop on reaching `level`.
    Escape {
        level: u64,
    },
    /// Stop on the `count`-th arrival at `vertex`, or at any vertex if `None`.
    Visits {
        vertex: Option<u64>,
        count: u64,
    },
}

impl FromStr for StopRule {
    type Err = Error;

    /// `first-return`, `escape:L`, `visits:K` or `visits:K@V`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::config(format!("bad stop rule {s:?}"));
        let parse = |v: &str| v.trim().parse::<u64>().map_err(|_| bad());
        let s = s.trim();
        if s == "first-return" {
            return Ok(StopRule::FirstReturn);
        }
        let (key, val) = s.split_once(':').ok_or_else(bad)?;
        match key.trim() {
            "escape" => Ok(StopRule::Escape { level: parse(val)? }),
            "visits" => {
                let (count, vertex) = match val.split_once('@') {
                    Some((c, v)) => (parse(c)?, Some(parse(v)?)),
                    None => (parse(val)?, None),
                };
                if count == 0 {
                    return Err(bad());
                }
                Ok(StopRule::Visits { vertex, count })
            }
            _ => Err(bad()),
        }
    }
}

impl fmt::Display for StopRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StopRule::FirstReturn => write!(f, "first-return"),
            StopRule::Escape { level } => write!(f, "escape:{level}"),
            StopRule::Visits {
                vertex: None,
                count,
            } => write!(f, "visits:{count}"),
            StopRule::Visits {
                vertex: Some(v),
                count,
            } => write!(f, "visits:{count}@{v}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    Horizon,
    FirstReturn,
    Escape,
    Visits,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunOptions {
    pub stop_rules: Vec<StopRule>,
    /// Record positions every `stride` steps, if set.
    pub record_stride: Option<u64>,
    /// Recording budget; the stride is doubled until the trajectory fits.
    pub max_points: usize,
    /// Sizes of the trailing windows whose position range is reported.
    pub windows: Vec<u64>,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            stop_rules: Vec::new(),
            record_stride: None,
            max_points: DEFAULT_MAX_POINTS,
            windows: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Trajectory {
    /// Positions at steps `0, stride, 2 * stride, ...`.
    pub positions: Vec<u64>,
    pub stride: u64,
    pub final_state: WalkState,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct WindowRange {
    pub window: u64,
    pub min: u64,
    pub max: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RunFeatures {
    pub steps: u64,
    pub returns_to_0: u64,
    pub last_return: Option<u64>,
    pub tau: Option<u64>,
    pub max_position: u64,
    pub final_position: u64,
    pub window_ranges: Vec<WindowRange>,
    pub stop: StopReason,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub trajectory: Option<Trajectory>,
    pub state: WalkState,
    pub features: RunFeatures,
}

/// Runs a walk from the origin for at most `horizon` steps.
pub fn run<R: Rng + ?Sized, O: StepObserver>(
    scheme: &SchemeSpec,
    horizon: u64,
    opts: &RunOptions,
    rng: &mut R,
    observer: &mut O,
) -> RunOutcome {
    let mut walker = Walker::new(scheme);
    let mut recorder = opts.record_stride.map(|stride| {
        let mut stride = stride.max(1);
        while (horizon / stride) as usize + 1 > opts.max_points.max(1) {
            stride *= 2;
        }
        (stride, vec![0u64])
    });

    let tail_len = opts.windows.iter().copied().max().unwrap_or(0).min(horizon) as usize;
    let mut tail = if opts.windows.is_empty() {
        Vec::new()
    } else {
        vec![0u64; tail_len + 1]
    };
    // tail[0] holds the start
    let mut tail_pos = if tail.is_empty() { 0 } else { 1 % tail.len() };
    let mut returns = 0u64;
    let mut last_return = None;
    let mut stop = StopReason::Horizon;

    for _ in 0..horizon {
        let ev = walker.step(rng);
        observer.on_step(&walker, &ev);
        let pos = ev.to;
        if !tail.is_empty() {
            tail[tail_pos] = pos;
            tail_pos = (tail_pos + 1) % tail.len();
        }
        if let Some((stride, rec)) = recorder.as_mut() {
            if (ev.n + 1).is_multiple_of(*stride) {
                rec.push(pos);
            }
        }
        if pos == 0 {
            returns += 1;
            last_return = Some(ev.n + 1);
        }
        if let Some(reason) = check_stop(&opts.stop_rules, &walker, pos) {
            stop = reason;
            break;
        }
    }

    let steps = walker.state().step_count;
    let window_ranges = opts
        .windows
        .iter()
        .map(|&w| {
            let w = w.min(steps) as usize;
            let len = tail.len();
            let (mut min, mut max) = (u64::MAX, 0);
            // the last w + 1 positions (steps - w ..= steps)
            for back in 0..=w {
                let idx = (tail_pos + len - 1 - back) % len;
                min = min.min(tail[idx]);
                max = max.max(tail[idx]);
            }
            WindowRange {
                window: w as u64,
                min,
                max,
            }
        })
        .collect();

    let state = walker.into_state();
    let features = RunFeatures {
        steps,
        returns_to_0: returns,
        last_return,
        tau: state.tau,
        max_position: state.max_position,
        final_position: state.position,
        window_ranges,
        stop,
    };
    let trajectory = recorder.map(|(stride, positions)| Trajectory {
        positions,
        stride,
        final_state: state.clone(),
    });
    RunOutcome {
        trajectory,
        state,
        features,
    }
}

#[inline]
fn check_stop(rules: &[StopRule], walker: &Walker<'_>, pos: u64) -> Option<StopReason> {
    rules.iter().find_map(|rule| match *rule {
        StopRule::FirstReturn if pos == 0 => Some(StopReason::FirstReturn),
        StopRule::Escape { level } if pos >= level => Some(StopReason::Escape),
        StopRule::Visits { vertex, count }
            if vertex.is_none_or(|v| v == pos) && walker.visits(pos) >= count =>
        {
            Some(StopReason::Visits)
        }
        _ => None,
    })
}

/// A length-`depth` path from the origin, encoded by its moves: bit `i` of
/// `moves` is set when step `i` goes right.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathProb {
    pub moves: u64,
    pub prob: f64,
}

/// Positions `X_0 .. X_depth` of an encoded path.
pub fn path_positions(moves: u64, depth: u32) -> Vec<u64> {
    let mut pos = 0u64;
    let mut out = Vec::with_capacity(depth as usize + 1);
    out.push(0);
    for i in 0..depth {
        if moves >> i & 1 == 1 {
            pos += 1;
        } else {
            pos -= 1;
        }
        out.push(pos);
    }
    out
}

/// Encodes a position sequence starting at 0 as move bits.
pub fn encode_path(positions: &[u64]) -> u64 {
    positions.windows(2).enumerate().fold(
        0,
        |acc, (i, w)| if w[1] > w[0] { acc | 1 << i } else { acc },
    )
}

/// Every reachable path of length `depth` with its exact probability, in
/// depth-first order (left branch first).
pub fn enumerate_paths(scheme: &SchemeSpec, depth: u32) -> Result<Vec<PathProb>> {
    if depth > MAX_ENUM_DEPTH {
        return Err(Error::domain(format!(
            "enumeration depth {depth} exceeds {MAX_ENUM_DEPTH}"
        )));
    }
    let mut out = Vec::new();
    descend(&Walker::new(scheme), depth, 0, 1.0, &mut out);
    Ok(out)
}

fn descend(walker: &Walker<'_>, remaining: u32, moves: u64, prob: f64, out: &mut Vec<PathProb>) {
    if remaining == 0 {
        out.push(PathProb { moves, prob });
        return;
    }
    let bit = walker.state().step_count;
    let p_right = walker.p_right();
    if p_right < 1.0 {
        let mut left = walker.clone();
        left.apply(Direction::Left);
        descend(&left, remaining - 1, moves, prob * (1.0 - p_right), out);
    }
    let mut right = walker.clone();
    right.apply(Direction::Right);
    descend(&right, remaining - 1, moves | 1 << bit, prob * p_right, out);
}

/// Samples the move bits of a length-`depth` path.
pub fn sample_path<R: Rng + ?Sized>(scheme: &SchemeSpec, depth: u32, rng: &mut R) -> u64 {
    let mut walker = Walker::new(scheme);
    (0..depth).fold(0, |acc, i| {
        if walker.step(rng).is_up() {
            acc | 1 << i
        } else {
            acc
        }
    })
}
