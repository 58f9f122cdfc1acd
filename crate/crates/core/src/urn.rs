//! Generalized Pólya urns, their Rubin embedding, and the urn-driven walk.
//!
//! The urn starts with one white and one black ball. With `W` white and `B`
//! black balls it draws white with probability
//! `W^rho / (W^rho + gamma * B^rho)` and returns the ball with a copy.
//!
//! In the Rubin embedding each colour runs its own clock: the white count
//! moves `k -> k+1` after an `Exp(k^rho)` wait, the black count after an
//! `Exp(gamma * k^rho)` wait. Reading off which colour fires next reproduces
//! the urn's draw sequence exactly. Here the `k`-th white clock is the one
//! that fires when the white count goes `k -> k+1`, so
//! `W~_k = sum_{i <= k} Y_i / i^rho` is the time the urn first holds `k+1`
//! white balls, and likewise `B~_s` for black.
//!
//! For a power-law DT walk, vertex `x >= 1` behaves like its own urn with
//! `gamma_x = ((x+1)/x)^alpha`: a black draw sends the walk right, a white
//! draw sends it left.

use crate::error::{Error, Result};
use crate::rng::{exp1, run_rng, uniform};
use crate::schemes::{SchemeKind, SchemeSpec};
use crate::walk::{PathProb, MAX_ENUM_DEPTH};
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

pub const DEFAULT_DRAW_CAP: u64 = 100_000_000;
pub const DEFAULT_CLOCK_CAP: u64 = 100_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Color {
    White,
    Black,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UrnState {
    white: u64,
    black: u64,
    gamma: f64,
    rho: f64,
    draws: u64,
    white_pow: f64,
    black_pow: f64,
}

fn check_urn_params(gamma: f64, rho: f64) -> Result<()> {
    if !(gamma.is_finite() && gamma >= 1.0) {
        return Err(Error::domain(format!("gamma = {gamma} must be >= 1")));
    }
    if !(rho.is_finite() && rho >= 0.0) {
        return Err(Error::domain(format!("rho = {rho} must be >= 0")));
    }
    Ok(())
}

impl UrnState {
    pub fn new(gamma: f64, rho: f64) -> Result<Self> {
        check_urn_params(gamma, rho)?;
        Ok(Self {
            white: 1,
            black: 1,
            gamma,
            rho,
            draws: 0,
            white_pow: 1.0,
            black_pow: 1.0,
        })
    }

    pub fn white(&self) -> u64 {
        self.white
    }

    pub fn black(&self) -> u64 {
        self.black
    }

    pub fn draws(&self) -> u64 {
        self.draws
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    #[inline]
    pub fn p_white(&self) -> f64 {
        self.white_pow / (self.white_pow + self.gamma * self.black_pow)
    }

    /// Adds a ball of `color`.
    #[inline]
    pub fn add(&mut self, color: Color) {
        match color {
            Color::White => {
                self.white += 1;
                self.white_pow = (self.white as f64).powf(self.rho);
            }
            Color::Black => {
                self.black += 1;
                self.black_pow = (self.black as f64).powf(self.rho);
            }
        }
        self.draws += 1;
    }

    #[inline]
    pub fn draw<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Color {
        let color = if uniform(rng) < self.p_white() {
            Color::White
        } else {
            Color::Black
        };
        self.add(color);
        color
    }
}

/// Urn scale at vertex `x`: `((x+1)/x)^alpha`. Undefined at the origin.
pub fn gamma_at(alpha: f64, x: u64) -> Result<f64> {
    if x == 0 {
        return Err(Error::domain("gamma_x is undefined at x = 0"));
    }
    Ok((((x + 1) as f64) / x as f64).powf(alpha))
}

/// The urn driven by its two Rubin clocks.
#[derive(Debug, Clone, PartialEq)]
pub struct RubinUrn {
    white: u64,
    black: u64,
    gamma: f64,
    rho: f64,
    next_white: f64,
    next_black: f64,
}

impl RubinUrn {
    pub fn new<R: Rng + ?Sized>(gamma: f64, rho: f64, rng: &mut R) -> Result<Self> {
        check_urn_params(gamma, rho)?;
        Ok(Self {
            white: 1,
            black: 1,
            gamma,
            rho,
            next_white: exp1(rng),
            next_black: exp1(rng) / gamma,
        })
    }

    pub fn white(&self) -> u64 {
        self.white
    }

    pub fn black(&self) -> u64 {
        self.black
    }

    /// Advances to the next clock firing and returns its colour.
    pub fn draw<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Color {
        if self.next_white < self.next_black {
            self.white += 1;
            self.next_white += exp1(rng) / (self.white as f64).powf(self.rho);
            Color::White
        } else {
            self.black += 1;
            self.next_black += exp1(rng) / (self.gamma * (self.black as f64).powf(self.rho));
            Color::Black
        }
    }
}

/// `B*_n`: the black count when the white count first reaches `n`, and
/// `H_n`, the number of draws taken to get there.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BStarStat {
    pub gamma: f64,
    pub rho: f64,
    pub n: u64,
    pub b_star: u64,
    pub h: u64,
    /// The cap was hit first; `b_star` and `h` are then lower bounds.
    pub censored: bool,
}

/// `B*_n` by drawing from the urn.
pub fn simulate_bstar<R: Rng + ?Sized>(
    gamma: f64,
    rho: f64,
    n: u64,
    rng: &mut R,
    draw_cap: u64,
) -> Result<BStarStat> {
    if n == 0 {
        return Err(Error::domain("B*_n needs n >= 1"));
    }
    let mut urn = UrnState::new(gamma, rho)?;
    let mut censored = false;
    while urn.white < n {
        if urn.draws >= draw_cap {
            censored = true;
            break;
        }
        urn.draw(rng);
    }
    Ok(BStarStat {
        gamma,
        rho,
        n,
        b_star: urn.black,
        h: urn.draws,
        censored,
    })
}

/// `B*_n` through the embedding: the white count reaches `n` at
/// `W~_{n-1}`, so `B*_n = 1 + #{s >= 1 : B~_s < W~_{n-1}}`.
pub fn rubin_bstar<R: Rng + ?Sized>(
    gamma: f64,
    rho: f64,
    n: u64,
    rng: &mut R,
    clock_cap: u64,
) -> Result<BStarStat> {
    if n == 0 {
        return Err(Error::domain("B*_n needs n >= 1"));
    }
    check_urn_params(gamma, rho)?;
    let mut white_time = 0.0;
    for k in 1..n {
        white_time += exp1(rng) / (k as f64).powf(rho);
    }
    let mut black_time = 0.0;
    let mut fired = 0u64;
    let mut censored = false;
    loop {
        if (n - 1) + fired >= clock_cap {
            censored = true;
            break;
        }
        let s = fired + 1;
        black_time += exp1(rng) / (gamma * (s as f64).powf(rho));
        if black_time >= white_time {
            break;
        }
        fired = s;
    }
    Ok(BStarStat {
        gamma,
        rho,
        n,
        b_star: 1 + fired,
        h: (n - 1) + fired,
        censored,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum BStarMethod {
    Direct,
    Rubin,
}

/// `samples` independent draws of `B*_n`; sample `i` uses run stream
/// `(master_seed, i)`, so the output does not depend on scheduling.
pub fn sample_bstar(
    method: BStarMethod,
    gamma: f64,
    rho: f64,
    n: u64,
    samples: u64,
    master_seed: u64,
    cap: u64,
) -> Result<Vec<BStarStat>> {
    (0..samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = run_rng(master_seed, i);
            match method {
                BStarMethod::Direct => simulate_bstar(gamma, rho, n, &mut rng, cap),
                BStarMethod::Rubin => rubin_bstar(gamma, rho, n, &mut rng, cap),
            }
        })
        .collect()
}

/// `gamma^(1/(1-rho)) n + C n^((1+rho)/2)`.
pub fn lemma_bound(gamma: f64, rho: f64, n: u64, c: f64) -> Result<f64> {
    if rho.is_nan() || rho >= 1.0 {
        return Err(Error::domain(format!(
            "lemma bound needs rho < 1, got {rho}"
        )));
    }
    let n = n as f64;
    Ok(gamma.powf(1.0 / (1.0 - rho)) * n + c * n.powf((1.0 + rho) / 2.0))
}

fn power_law_only(scheme: &SchemeSpec) -> Result<(f64, f64)> {
    match scheme.kind() {
        SchemeKind::PowerLawDt { alpha, rho } => Ok((*alpha, *rho)),
        _ => Err(Error::domain(format!(
            "urn generator needs a power-law DT scheme, got {}",
            scheme.name()
        ))),
    }
}

fn urn_at(
    urns: &mut Vec<UrnState>,
    alpha: f64,
    rho: f64,
    x: u64,
) -> Result<&mut UrnState> {
    while urns.len() < x as usize {
        let next = urns.len() as u64 + 1;
        urns.push(UrnState::new(gamma_at(alpha, next)?, rho)?);
    }
    Ok(&mut urns[x as usize - 1])
}

/// One step of the urn-driven walk. `urns[x - 1]` is the urn of vertex `x`
/// and is created fresh on first use.
pub fn urn_driven_step<R: Rng + ?Sized>(
    scheme: &SchemeSpec,
    urns: &mut Vec<UrnState>,
    position: u64,
    rng: &mut R,
) -> Result<u64> {
    let (alpha, rho) = power_law_only(scheme)?;
    if position == 0 {
        return Ok(1);
    }
    Ok(match urn_at(urns, alpha, rho, position)?.draw(rng) {
        Color::Black => position + 1,
        Color::White => position - 1,
    })
}

/// Exact path probabilities of the urn-driven walk, in the same encoding
/// and order as [`crate::walk::enumerate_paths`].
pub fn enumerate_urn_paths(scheme: &SchemeSpec, depth: u32) -> Result<Vec<PathProb>> {
    let (alpha, rho) = power_law_only(scheme)?;
    if depth > MAX_ENUM_DEPTH {
        return Err(Error::domain(format!(
            "enumeration depth {depth} exceeds {MAX_ENUM_DEPTH}"
        )));
    }
    let mut out = Vec::new();
    urn_descend(alpha, rho, &mut Vec::new(), 0, 0, depth, 0, 1.0, &mut out)?;
    Ok(out)
}

#[allow(clippy::too_many_arguments)]
fn urn_descend(
    alpha: f64,
    rho: f64,
    urns: &mut Vec<UrnState>,
    position: u64,
    step: u32,
    depth: u32,
    moves: u64,
    prob: f64,
    out: &mut Vec<PathProb>,
) -> Result<()> {
    if step == depth {
        out.push(PathProb { moves, prob });
        return Ok(());
    }
    if position == 0 {
        return urn_descend(
            alpha,
            rho,
            urns,
            1,
            step + 1,
            depth,
            moves | 1 << step,
            prob,
            out,
        );
    }
    let p_white = urn_at(urns, alpha, rho, position)?.p_white();
    for color in [Color::White, Color::Black] {
        let mut branch = urns.clone();
        urn_at(&mut branch, alpha, rho, position)?.add(color);
        let (next, bits, p) = match color {
            Color::White => (position - 1, moves, p_white),
            Color::Black => (position + 1, moves | 1 << step, 1.0 - p_white),
        };
        urn_descend(
            alpha,
            rho,
            &mut branch,
            next,
            step + 1,
            depth,
            bits,
            prob * p,
            out,
        )?;
    }
    Ok(())
}

/// Samples a length-`depth` path of the walk whose vertex urns run on
/// Rubin clocks. Returns the move bits.
pub fn rubin_walk_path<R: Rng + ?Sized>(
    scheme: &SchemeSpec,
    depth: u32,
    rng: &mut R,
) -> Result<u64> {
    let (alpha, rho) = power_law_only(scheme)?;
    let mut urns: Vec<RubinUrn> = Vec::new();
    let mut position = 0u64;
    let mut moves = 0u64;
    for step in 0..depth {
        if position == 0 {
            position = 1;
            moves |= 1 << step;
            continue;
        }
        while urns.len() < position as usize {
            let x = urns.len() as u64 + 1;
            urns.push(RubinUrn::new(gamma_at(alpha, x)?, rho, rng)?);
        }
        match urns[position as usize - 1].draw(rng) {
            Color::Black => {
                position += 1;
                moves |= 1 << step;
            }
            Color::White => position -= 1,
        }
    }
    Ok(moves)
}

/// Extremal solution of `a_{x+1} = gamma_x^(1/(1-rho)) a_x + C a_x^((1+rho)/2)`
/// and the smallest power of two `c_bar` with `a_x <= c_bar x^(2/(1-rho))`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RecursionCertificate {
    /// `ln a_x` for `x = 1..=x_max`.
    pub ln_a: Vec<f64>,
    /// Largest `a_x / x^(2/(1-rho))` over the range.
    pub max_ratio: f64,
    pub argmax: u64,
    pub c_bar: f64,
    /// The ratio at `x_max` is at least its value at `x_max / 2`.
    pub ratio_rising: bool,
}

impl RecursionCertificate {
    pub fn a(&self, x: u64) -> f64 {
        self.ln_a[x as usize - 1].exp()
    }

    /// Term-by-term check of `a_x <= c_bar x^(2/(1-rho))` in log space.
    pub fn verify(&self, rho: f64) -> bool {
        let power = 2.0 / (1.0 - rho);
        let ln_c = self.c_bar.ln();
        self.ln_a
            .iter()
            .enumerate()
            .all(|(i, &la)| la <= ln_c + power * ((i + 1) as f64).ln())
    }
}

fn ln_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

pub fn recursion_sequence(
    alpha: f64,
    rho: f64,
    c: f64,
    a1: f64,
    x_max: u64,
) -> Result<RecursionCertificate> {
    if !(alpha > 0.5 && alpha <= 1.0) {
        return Err(Error::domain(format!("alpha = {alpha} not in (1/2, 1]")));
    }
    if !(rho > 0.0 && rho <= 0.5) {
        return Err(Error::domain(format!("rho = {rho} not in (0, 1/2]")));
    }
    if !(a1 >= 1.0 && a1.is_finite()) || !(c >= 0.0 && c.is_finite()) || x_max == 0 {
        return Err(Error::domain("need a1 >= 1, C >= 0 and x_max >= 1"));
    }
    let growth = alpha / (1.0 - rho);
    let half = (1.0 + rho) / 2.0;
    let ln_c = if c > 0.0 { c.ln() } else { f64::NEG_INFINITY };

    let mut ln_a = Vec::with_capacity(x_max as usize);
    ln_a.push(a1.ln());
    for x in 1..x_max {
        let la = ln_a[x as usize - 1];
        let xf = x as f64;
        let linear = growth * ((xf + 1.0) / xf).ln() + la;
        ln_a.push(ln_add_exp(linear, ln_c + half * la));
    }
    if ln_a.iter().any(|v| !v.is_finite()) {
        return Err(Error::Overflow("recursion left the f64 range".into()));
    }

    let power = 2.0 / (1.0 - rho);
    let ln_ratio = |i: usize| ln_a[i] - power * ((i + 1) as f64).ln();
    let (argmax, max_ln_ratio) =
        (0..ln_a.len())
            .map(|i| (i, ln_ratio(i)))
            .fold((0, f64::NEG_INFINITY), |best, cur| {
                if cur.1 > best.1 {
                    cur
                } else {
                    best
                }
            });
    let last = ln_a.len() - 1;
    let ratio_rising = last >= 3 && ln_ratio(last) >= ln_ratio(last / 2);
    let c_bar = 2f64.powf((max_ln_ratio / std::f64::consts::LN_2).ceil());
    Ok(RecursionCertificate {
        ln_a,
        max_ratio: max_ln_ratio.exp(),
        argmax: argmax as u64 + 1,
        c_bar,
        ratio_rising,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn draw_probabilities() {
        assert_eq!(UrnState::new(1.0, 0.7).unwrap().p_white(), 0.5);
        let u = UrnState::new(2.0, 0.5).unwrap();
        assert_relative_eq!(1.0 - u.p_white(), 2.0 / 3.0, max_relative = 1e-15);
        let mut u = UrnState::new(1.0, 1.0).unwrap();
        for _ in 0..3 {
            u.add(Color::White);
        }
        assert_relative_eq!(u.p_white(), 0.8, max_relative = 1e-15);
        assert!(UrnState::new(0.5, 1.0).is_err());
    }

    #[test]
    fn counts_are_conserved() {
        let mut rng = run_rng(4, 4);
        let mut u = UrnState::new(1.3, 0.4).unwrap();
        for _ in 0..1000 {
            u.draw(&mut rng);
            assert_eq!(u.white() + u.black(), 2 + u.draws());
        }
    }

    #[test]
    fn bstar_at_one_is_one() {
        let mut rng = run_rng(1, 0);
        for _ in 0..10 {
            let d = simulate_bstar(1.5, 0.5, 1, &mut rng, DEFAULT_DRAW_CAP).unwrap();
            let r = rubin_bstar(1.5, 0.5, 1, &mut rng, DEFAULT_CLOCK_CAP).unwrap();
            assert_eq!((d.b_star, d.h), (1, 0));
            assert_eq!((r.b_star, r.h), (1, 0));
        }
        assert!(simulate_bstar(1.5, 0.5, 0, &mut rng, 10).is_err());
    }

    #[test]
    fn fair_urn_bstar_two_has_mean_two() {
        let stats = sample_bstar(
            BStarMethod::Direct,
            1.0,
            0.0,
            2,
            100_000,
            9,
            DEFAULT_DRAW_CAP,
        )
        .unwrap();
        let mean = stats.iter().map(|s| s.b_star as f64).sum::<f64>() / stats.len() as f64;
        // B*_2 - 1 ~ Geometric(1/2): variance 2
        assert!((mean - 2.0).abs() < 4.0 * (2.0f64 / 100_000.0).sqrt());
        assert!(stats.iter().all(|s| s.h == (s.n - 1) + (s.b_star - 1)));
    }

    #[test]
    fn censoring_is_reported() {
        let mut rng = run_rng(2, 2);
        let s = simulate_bstar(1.0, 0.0, 1_000_000, &mut rng, 10).unwrap();
        assert!(s.censored);
        assert_eq!(s.h, 10);
        let r = rubin_bstar(1.0, 0.0, 50, &mut rng, 10).unwrap();
        assert!(r.censored);
    }

    #[test]
    fn lemma_bound_examples() {
        assert_relative_eq!(
            lemma_bound(1.5, 0.5, 100, 10.0).unwrap(),
            225.0 + 10.0 * 100f64.powf(0.75),
            max_relative = 1e-14
        );
        assert_relative_eq!(
            lemma_bound(1.5, 0.5, 100, 10.0).unwrap(),
            541.227_766_016_838,
            max_relative = 1e-12
        );
        assert_eq!(lemma_bound(1.0, 0.0, 37, 0.0).unwrap(), 37.0);
        assert_eq!(lemma_bound(1.0, 0.5, 1, 1.0).unwrap(), 2.0);
        assert!(lemma_bound(1.0, 1.0, 1, 1.0).is_err());
    }

    #[test]
    fn gamma_rejected_at_origin() {
        assert!(gamma_at(0.9, 0).is_err());
        assert_relative_eq!(
            gamma_at(0.9, 1).unwrap(),
            2f64.powf(0.9),
            max_relative = 1e-15
        );
    }

    #[test]
    fn first_urn_decision_matches_walk() {
        let s = SchemeSpec::power_law_dt(0.9, 0.4).unwrap();
        let u = UrnState::new(gamma_at(0.9, 1).unwrap(), 0.4).unwrap();
        let st = crate::walk::WalkState {
            position: 1,
            phi: vec![1, 0],
            step_count: 1,
            tau: None,
            max_position: 1,
        };
        let direct = crate::walk::transition_probability(&s, &st, crate::walk::Direction::Right);
        assert_relative_eq!(1.0 - u.p_white(), direct, max_relative = 1e-14);
        assert_relative_eq!(direct, 0.651_089_679_754_133_2, max_relative = 1e-14);
    }

    #[test]
    fn urn_step_reflects_at_origin() {
        let s = SchemeSpec::power_law_dt(0.9, 0.4).unwrap();
        let mut urns = Vec::new();
        let mut rng = run_rng(0, 0);
        assert_eq!(urn_driven_step(&s, &mut urns, 0, &mut rng).unwrap(), 1);
        assert!(urns.is_empty());
        let perturbed = SchemeSpec::perturbed_dt(0.9, 0.4, 0.05).unwrap();
        assert!(urn_driven_step(&perturbed, &mut urns, 1, &mut rng).is_err());
    }

    #[test]
    fn recursion_examples() {
        let cert = recursion_sequence(0.9, 0.4, 1.0, 1.0, 2).unwrap();
        assert_relative_eq!(cert.a(2), 2f64.powf(1.5) + 1.0, max_relative = 1e-13);
        assert_relative_eq!(cert.a(2), 3.828_427_124_746_19, max_relative = 1e-13);

        let flat = recursion_sequence(0.9, 0.4, 0.0, 1.0, 1000).unwrap();
        for x in [1u64, 10, 500, 1000] {
            assert_relative_eq!(flat.a(x), (x as f64).powf(0.9 / 0.6), max_relative = 1e-10);
        }
        assert_eq!(flat.c_bar, 1.0);
        assert!(flat.verify(0.4));

        assert!(recursion_sequence(0.9, 0.6, 1.0, 1.0, 10).is_err());
        assert!(recursion_sequence(0.4, 0.3, 1.0, 1.0, 10).is_err());
    }
}
