//! Small numeric and statistical helpers shared by the simulation modules.

use statrs::distribution::{ChiSquared, ContinuousCDF};
use std::collections::BTreeMap;

/// Neumaier compensated summation.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.comp += (self.sum - t) + v;
        } else {
            self.comp += (v - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }

    pub fn reset_to(&mut self, v: f64) {
        self.sum = v;
        self.comp = 0.0;
    }
}

/// Mean and standard error of the mean.
pub fn mean_and_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mut acc = CompensatedSum::new();
    xs.iter().for_each(|&x| acc.add(x));
    let mean = acc.value() / n;
    if xs.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChiSquareTest {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
}

impl ChiSquareTest {
    fn from_statistic(statistic: f64, dof: usize) -> Self {
        let p_value = if dof == 0 {
            1.0
        } else {
            ChiSquared::new(dof as f64)
                .map(|d| d.sf(statistic))
                .unwrap_or(f64::NAN)
        };
        Self {
            statistic,
            dof,
            p_value,
        }
    }

    pub fn passes(&self, significance: f64) -> bool {
        self.p_value >= significance
    }
}

/// Goodness-of-fit test of `observed` counts against cell probabilities.
///
/// Cells whose expected count falls below `min_expected` are pooled (in
/// increasing order of expectation) until every pooled cell reaches it.
pub fn chi_square_gof(observed: &[u64], probs: &[f64], min_expected: f64) -> ChiSquareTest {
    assert_eq!(observed.len(), probs.len());
    let total: u64 = observed.iter().sum();
    let n = total as f64;
    let mut cells: Vec<(f64, f64)> = observed
        .iter()
        .zip(probs)
        .map(|(&o, &p)| (n * p, o as f64))
        .collect();
    cells.sort_by(|a, b| a.0.total_cmp(&b.0));

    let mut pooled = Vec::new();
    let (mut e_acc, mut o_acc) = (0.0, 0.0);
    for (e, o) in cells {
        e_acc += e;
        o_acc += o;
        if e_acc >= min_expected {
            pooled.push((e_acc, o_acc));
            e_acc = 0.0;
            o_acc = 0.0;
        }
    }
    if e_acc > 0.0 || o_acc > 0.0 {
        match pooled.last_mut() {
            Some(last) => {
                last.0 += e_acc;
                last.1 += o_acc;
            }
            None => pooled.push((e_acc, o_acc)),
        }
    }
    let statistic = pooled
        .iter()
        .map(|&(e, o)| {
            if e > 0.0 {
                (o - e).powi(2) / e
            } else if o > 0.0 {
                f64::INFINITY
            } else {
                0.0
            }
        })
        .sum();
    ChiSquareTest::from_statistic(statistic, pooled.len().saturating_sub(1))
}

/// Two-sample chi-square homogeneity test on integer-valued samples.
///
/// Consecutive values are merged into bins holding at least `min_bin`
/// combined observations.
pub fn chi_square_two_sample(a: &[u64], b: &[u64], min_bin: u64) -> ChiSquareTest {
    let mut counts: BTreeMap<u64, (u64, u64)> = BTreeMap::new();
    for &v in a {
        counts.entry(v).or_default().0 += 1;
    }
    for &v in b {
        counts.entry(v).or_default().1 += 1;
    }
    let mut bins: Vec<(u64, u64)> = Vec::new();
    let mut cur = (0u64, 0u64);
    for (_, (ca, cb)) in counts {
        cur.0 += ca;
        cur.1 += cb;
        if cur.0 + cur.1 >= min_bin {
            bins.push(cur);
            cur = (0, 0);
        }
    }
    if cur.0 + cur.1 > 0 {
        match bins.last_mut() {
            Some(last) => {
                last.0 += cur.0;
                last.1 += cur.1;
            }
            None => bins.push(cur),
        }
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (k1, k2) = ((nb / na).sqrt(), (na / nb).sqrt());
    let statistic = bins
        .iter()
        .map(|&(x, y)| {
            let (x, y) = (x as f64, y as f64);
            (k1 * x - k2 * y).powi(2) / (x + y)
        })
        .sum();
    ChiSquareTest::from_statistic(statistic, bins.len().saturating_sub(1))
}
