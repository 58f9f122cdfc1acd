//! The walk engine against a from-scratch reference of the transition rule.

use errw::rng::run_rng;
use errw::schemes::{preset, PresetParams, SchemeSpec, PRESET_NAMES};
use errw::stats::chi_square_gof;
use errw::walk::{
    encode_path, enumerate_paths, path_positions, run, sample_path, RunOptions, Walker,
};
use std::collections::HashMap;

/// Reference weights written out by hand, independent of the library.
#[derive(Clone, Copy)]
enum Reference {
    Power { alpha: f64, rho: f64 },
    Perturbed { alpha: f64, rho: f64, epsilon: f64 },
    Davis,
    Flat { alpha: f64 },
}

impl Reference {
    fn weight(self, l: u64, x: u64) -> f64 {
        match self {
            Reference::Power { alpha, rho } => {
                ((l / 2 + 1) as f64).powf(rho) * ((x + 1) as f64).powf(alpha)
            }
            Reference::Perturbed {
                alpha,
                rho,
                epsilon,
            } => {
                let k = (1.0 / epsilon).floor() as u64;
                let mut d = ((l / 2 + 1) as f64).powf(rho);
                if l == 2 * k + 1 {
                    d += epsilon;
                }
                d * ((x + 1) as f64).powf(alpha)
            }
            Reference::Davis => {
                if x == 0 {
                    ((l + 1) * (l + 1)) as f64
                } else {
                    (x * x) as f64
                }
            }
            Reference::Flat { alpha } => ((x + 1) as f64).powf(alpha),
        }
    }

    /// Probability of a move sequence, or `None` if it leaves `Z+`.
    fn path_prob(self, moves: u64, depth: u32) -> Option<f64> {
        let mut counts: HashMap<u64, u64> = HashMap::new();
        let mut x = 0u64;
        let mut p = 1.0;
        for i in 0..depth {
            let right = moves >> i & 1 == 1;
            if x == 0 {
                if !right {
                    return None;
                }
            } else {
                let wl = self.weight(*counts.get(&(x - 1)).unwrap_or(&0), x - 1);
                let wr = self.weight(*counts.get(&x).unwrap_or(&0), x);
                let pr = wr / (wl + wr);
                p *= if right { pr } else { 1.0 - pr };
            }
            let edge = if right { x } else { x - 1 };
            *counts.entry(edge).or_insert(0) += 1;
            x = if right { x + 1 } else { x - 1 };
        }
        Some(p)
    }
}

fn cases() -> Vec<(SchemeSpec, Reference)> {
    vec![
        (
            SchemeSpec::power_law_dt(0.9, 0.4).unwrap(),
            Reference::Power {
                alpha: 0.9,
                rho: 0.4,
            },
        ),
        (
            SchemeSpec::power_law_dt(1.0, 1.0).unwrap(),
            Reference::Power {
                alpha: 1.0,
                rho: 1.0,
            },
        ),
        (
            SchemeSpec::power_law_dt(0.6, 1.5).unwrap(),
            Reference::Power {
                alpha: 0.6,
                rho: 1.5,
            },
        ),
        (
            SchemeSpec::perturbed_dt(0.9, 1.0, 0.3).unwrap(),
            Reference::Perturbed {
                alpha: 0.9,
                rho: 1.0,
                epsilon: 0.3,
            },
        ),
        (SchemeSpec::davis_example(), Reference::Davis),
        (
            SchemeSpec::no_reinforcement(1.2).unwrap(),
            Reference::Flat { alpha: 1.2 },
        ),
    ]
}

#[test]
fn enumeration_matches_reference_rule() {
    let depth = 12;
    for (scheme, reference) in cases() {
        let paths = enumerate_paths(&scheme, depth).unwrap();
        let got: HashMap<u64, f64> = paths.iter().map(|p| (p.moves, p.prob)).collect();
        assert_eq!(got.len(), paths.len(), "{}: duplicate paths", scheme.name());
        let mut expected = 0;
        for moves in 0..1u64 << depth {
            if let Some(p) = reference.path_prob(moves, depth) {
                expected += 1;
                let q = got.get(&moves).copied().unwrap_or(0.0);
                assert!(
                    (p - q).abs() <= 1e-13 * p.max(1e-300) + 1e-300,
                    "{}: path {moves:b}: {q} vs {p}",
                    scheme.name()
                );
            }
        }
        assert_eq!(expected, paths.len(), "{}", scheme.name());
    }
}

#[test]
fn total_mass_is_one_for_every_preset() {
    for name in PRESET_NAMES {
        let scheme = preset(name, PresetParams::default()).unwrap();
        for depth in [1, 2, 5, 9, 13, 16] {
            let total: f64 = enumerate_paths(&scheme, depth)
                .unwrap()
                .iter()
                .map(|p| p.prob)
                .sum();
            assert!(
                (total - 1.0).abs() <= 1e-12,
                "{name} depth {depth}: {total}"
            );
        }
    }
}

#[test]
fn first_steps_frozen_values() {
    // X_1 = 1 surely; from 1 the walk sees f(1, 0) on the left, f(0, 1) on the right
    let s = SchemeSpec::power_law_dt(0.9, 0.4).unwrap();
    let paths = enumerate_paths(&s, 2).unwrap();
    let right = paths.iter().find(|p| p.moves == 0b11).unwrap().prob;
    assert!((right - 0.651_089_679_754_133_2).abs() < 1e-15);

    let davis = enumerate_paths(&SchemeSpec::davis_example(), 2).unwrap();
    let left = davis.iter().find(|p| p.moves == 0b01).unwrap().prob;
    assert!((left - 0.8).abs() < 1e-15);
}

#[test]
fn monte_carlo_matches_enumeration() {
    let depth = 12;
    let samples = 1_000_000u64;
    for (i, scheme) in [
        SchemeSpec::power_law_dt(0.9, 0.4).unwrap(),
        SchemeSpec::perturbed_dt(0.9, 1.0, 0.3).unwrap(),
        SchemeSpec::davis_example(),
    ]
    .iter()
    .enumerate()
    {
        let paths = enumerate_paths(scheme, depth).unwrap();
        let index: HashMap<u64, usize> = paths
            .iter()
            .enumerate()
            .map(|(k, p)| (p.moves, k))
            .collect();
        let mut counts = vec![0u64; paths.len()];
        let mut rng = run_rng(31, i as u64);
        for _ in 0..samples {
            counts[index[&sample_path(scheme, depth, &mut rng)]] += 1;
        }
        let probs: Vec<f64> = paths.iter().map(|p| p.prob).collect();
        let test = chi_square_gof(&counts, &probs, 5.0);
        assert!(test.passes(1e-3), "{}: {test:?}", scheme.name());
    }
}

#[test]
fn probabilities_are_normalised_along_a_run() {
    let s = SchemeSpec::power_law_dt(0.8, 0.7).unwrap();
    let mut walker = Walker::new(&s);
    let mut rng = run_rng(8, 8);
    for _ in 0..20_000 {
        let p = walker.p_right();
        assert!((0.0..=1.0).contains(&p));
        let left =
            errw::walk::transition_probability(&s, walker.state(), errw::walk::Direction::Left);
        let right =
            errw::walk::transition_probability(&s, walker.state(), errw::walk::Direction::Right);
        assert_eq!(left + right, 1.0);
        walker.step(&mut rng);
    }
}

#[test]
fn edge_crossings_alternate_in_direction() {
    let s = SchemeSpec::power_law_dt(0.9, 0.6).unwrap();
    let opts = RunOptions {
        record_stride: Some(1),
        ..RunOptions::default()
    };
    let out = run(&s, 50_000, &opts, &mut run_rng(2, 0), &mut ());
    let traj = out.trajectory.unwrap();
    assert_eq!(traj.stride, 1);
    let mut last_up: HashMap<u64, bool> = HashMap::new();
    for w in traj.positions.windows(2) {
        let (edge, up) = if w[1] > w[0] {
            (w[0], true)
        } else {
            (w[1], false)
        };
        if let Some(prev) = last_up.insert(edge, up) {
            assert_ne!(prev, up, "edge {edge} crossed twice in the same direction");
        } else {
            assert!(up, "edge {edge} first crossed downwards");
        }
    }
    out.state.check_invariants().unwrap();
}

#[test]
fn trajectories_are_bit_identical_per_seed() {
    let s = SchemeSpec::power_law_dt(0.9, 0.45).unwrap();
    let opts = RunOptions {
        record_stride: Some(7),
        ..RunOptions::default()
    };
    let a = run(&s, 200_000, &opts, &mut run_rng(99, 3), &mut ());
    let b = run(&s, 200_000, &opts, &mut run_rng(99, 3), &mut ());
    assert_eq!(a.trajectory, b.trajectory);
    assert_eq!(a.state, b.state);
    let c = run(&s, 200_000, &opts, &mut run_rng(99, 4), &mut ());
    assert_ne!(a.trajectory, c.trajectory);
}

#[test]
fn path_codec_round_trips() {
    for moves in [0b1u64, 0b101, 0b1011_0111, 0b11_1111] {
        let depth = 64 - moves.leading_zeros();
        let pos = path_positions(moves, depth);
        assert_eq!(encode_path(&pos), moves);
    }
}
