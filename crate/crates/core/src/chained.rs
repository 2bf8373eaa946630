//! The chained correlation measure for two separated parties.
//!
//! The first party measures one of `n` even-labelled settings, the second
//! one of `n` odd-labelled settings, and the settings form a cycle
//! `0, 1, 2, ..., 2n-1` back to `0`. The measure sums, over adjacent
//! settings, the probability of the "wrong" relation: differing outcomes on
//! every interior edge, equal outcomes on the wrap edge. Deterministic
//! strategies give an odd integer, so no local model scores below 1, while
//! the optimal quantum strategy reaches `2n * sin^2(pi/4n)`, which falls
//! toward zero as the chain grows.

use std::f64::consts::PI;

use crate::dist::{local_strategy_box, ConditionalDist, LocalStrategy};
use crate::{Error, Result};

/// Largest chain length accepted by the exhaustive classical search; the
/// search visits `4^n` strategies.
pub const ENUMERATION_CAP: usize = 12;

/// Setting layout for a chain of length `n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChainedSettings {
    n: usize,
}

impl ChainedSettings {
    /// A chain needs at least one setting per party. At `n = 1` the wrap
    /// edge and the single interior edge connect the same two settings, so
    /// the measure is identically 1.
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidParameter(
                "chain length must be at least 1".into(),
            ));
        }
        Ok(Self { n })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// First party's settings: `0, 2, ..., 2n-2`.
    pub fn a_values(&self) -> Vec<u32> {
        (0..self.n as u32).map(|k| 2 * k).collect()
    }

    /// Second party's settings: `1, 3, ..., 2n-1`.
    pub fn b_values(&self) -> Vec<u32> {
        (0..self.n as u32).map(|k| 2 * k + 1).collect()
    }

    /// The edge that closes the cycle.
    pub fn wrap_pair(&self) -> (u32, u32) {
        (0, 2 * self.n as u32 - 1)
    }

    /// Interior edges in cycle order: `(0,1), (2,1), (2,3), (4,3), ...,
    /// (2n-2, 2n-1)`.
    pub fn strict_pairs(&self) -> Vec<(u32, u32)> {
        let mut out = Vec::with_capacity(2 * self.n - 1);
        for s in 0..(2 * self.n as u32 - 1) {
            // Edge between cycle positions s and s+1; the even label
            // belongs to the first party.
            if s.is_multiple_of(2) {
                out.push((s, s + 1));
            } else {
                out.push((s + 1, s));
            }
        }
        out
    }

    /// All edges in cycle order, wrap edge last. At `n = 1` the wrap edge
    /// coincides with the single interior edge and is listed once.
    pub fn neighbour_pairs(&self) -> Vec<(u32, u32)> {
        let mut out = self.strict_pairs();
        if self.n > 1 {
            out.push(self.wrap_pair());
        }
        out
    }

    /// Whether `(a, b)` is an edge of the cycle.
    pub fn is_neighbour(&self, a: u32, b: u32) -> bool {
        let interior = a.abs_diff(b) == 1;
        interior || (a, b) == self.wrap_pair()
    }

    pub fn input_spaces(&self) -> Vec<Vec<u32>> {
        vec![self.a_values(), self.b_values()]
    }

    pub fn output_spaces(&self) -> Vec<Vec<i32>> {
        vec![vec![1, -1], vec![1, -1]]
    }

    fn check_box(&self, b: &ConditionalDist) -> Result<()> {
        if b.input_spaces() != self.input_spaces().as_slice() {
            return Err(Error::InvalidParameter(format!(
                "box input spaces do not match a chain of length {}",
                self.n
            )));
        }
        for space in b.output_spaces() {
            let mut sorted = space.clone();
            sorted.sort_unstable();
            if sorted != vec![-1, 1] {
                return Err(Error::InvalidParameter(
                    "box outputs must be the detector labels +1 and -1".into(),
                ));
            }
        }
        Ok(())
    }
}

fn prob_equal(b: &ConditionalDist, a: u32, bb: u32) -> Result<f64> {
    Ok(b.prob(&[a, bb], &[1, 1])? + b.prob(&[a, bb], &[-1, -1])?)
}

fn prob_differ(b: &ConditionalDist, a: u32, bb: u32) -> Result<f64> {
    Ok(b.prob(&[a, bb], &[1, -1])? + b.prob(&[a, bb], &[-1, 1])?)
}

/// Evaluates the chained measure on a two-party box: equal-outcome
/// probability on the wrap edge plus differing-outcome probability on every
/// interior edge. Linear in the box, so it distributes over mixtures.
pub fn chained_value(settings: &ChainedSettings, b: &ConditionalDist) -> Result<f64> {
    settings.check_box(b)?;
    let (wa, wb) = settings.wrap_pair();
    let mut total = prob_equal(b, wa, wb)?;
    for (a, bb) in settings.strict_pairs() {
        total += prob_differ(b, a, bb)?;
    }
    Ok(total)
}

/// The two-party box realized by measuring a maximally entangled pair at
/// angles `pi * s / 2n`: outcome products follow
/// `P(x, y | a, b) = (1 + x y cos(theta_a - theta_b)) / 4`, with uniform
/// single-party marginals.
pub fn quantum_chained_box(settings: &ChainedSettings) -> Result<ConditionalDist> {
    let n = settings.n as f64;
    ConditionalDist::from_fn(
        settings.input_spaces(),
        settings.output_spaces(),
        |inputs, outputs| {
            let theta_a = PI * inputs[0] as f64 / (2.0 * n);
            let theta_b = PI * inputs[1] as f64 / (2.0 * n);
            let correlator = (theta_a - theta_b).cos();
            (1.0 + (outputs[0] * outputs[1]) as f64 * correlator) / 4.0
        },
    )
}

/// Value of the chained measure on the optimal quantum box.
pub fn quantum_closed_form(n: usize) -> f64 {
    let n = n as f64;
    2.0 * n * (PI / (4.0 * n)).sin().powi(2)
}

/// A deterministic response pattern: one fixed outcome per setting.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DeterministicStrategy {
    /// Outcome for each first-party setting, aligned with `a_values()`.
    pub a_outputs: Vec<i32>,
    /// Outcome for each second-party setting, aligned with `b_values()`.
    pub b_outputs: Vec<i32>,
}

impl DeterministicStrategy {
    /// Decodes bit masks into outcome lists; a set bit means outcome -1.
    pub fn from_masks(n: usize, a_mask: u64, b_mask: u64) -> Self {
        let decode = |mask: u64| {
            (0..n)
                .map(|k| if mask >> k & 1 == 1 { -1 } else { 1 })
                .collect()
        };
        Self {
            a_outputs: decode(a_mask),
            b_outputs: decode(b_mask),
        }
    }

    /// The deterministic product box implementing this pattern.
    pub fn to_box(&self, settings: &ChainedSettings) -> Result<ConditionalDist> {
        local_strategy_box(
            &settings.input_spaces(),
            &settings.output_spaces(),
            &LocalStrategy {
                responses: vec![self.a_outputs.clone(), self.b_outputs.clone()],
            },
        )
    }

    /// Exact integer value of the chained measure for this pattern: one
    /// count per interior edge with differing outcomes, plus one if the
    /// wrap edge outcomes agree.
    pub fn chained_score(&self, settings: &ChainedSettings) -> u32 {
        let n = settings.n;
        // Outcomes in cycle order 0, 1, ..., 2n-1.
        let at = |s: usize| {
            if s.is_multiple_of(2) {
                self.a_outputs[s / 2]
            } else {
                self.b_outputs[s / 2]
            }
        };
        let mut score = 0;
        for s in 0..(2 * n - 1) {
            if at(s) != at(s + 1) {
                score += 1;
            }
        }
        if at(0) == at(2 * n - 1) {
            score += 1;
        }
        score
    }
}

/// Exhaustive minimum of the chained measure over deterministic strategies,
/// with one strategy attaining it. The minimum is always exactly 1: walking
/// the cycle flips parity on every differing edge, so the total count of
/// wrong relations is odd.
pub fn classical_min_chained(n: usize) -> Result<(u32, DeterministicStrategy)> {
    if n == 0 || n > ENUMERATION_CAP {
        return Err(Error::InvalidParameter(format!(
            "chain length must be in 1..={ENUMERATION_CAP}, got {n}"
        )));
    }
    // A strategy is a sequence of 2n outcome bits in cycle order; the score
    // counts differing adjacent bits plus an agreeing wrap.
    let bits = 2 * n as u32;
    let interior_mask: u64 = (1u64 << (bits - 1)) - 1;
    let mut best_score = u32::MAX;
    let mut best_seq = 0u64;
    for seq in 0u64..(1u64 << bits) {
        let transitions = ((seq ^ (seq >> 1)) & interior_mask).count_ones();
        let wrap_agrees = (((seq ^ (seq >> (bits - 1))) & 1) ^ 1) as u32;
        let score = transitions + wrap_agrees;
        if score < best_score {
            best_score = score;
            best_seq = seq;
            if score == 1 {
                break;
            }
        }
    }
    let mut a_mask = 0u64;
    let mut b_mask = 0u64;
    for k in 0..n {
        a_mask |= ((best_seq >> (2 * k)) & 1) << k;
        b_mask |= ((best_seq >> (2 * k + 1)) & 1) << k;
    }
    Ok((best_score, DeterministicStrategy::from_masks(n, a_mask, b_mask)))
}

/// The no-signalling extreme point scoring zero: uniform outcome pairs
/// constrained to agree on every edge except the wrap edge, where they
/// always differ. Single-party marginals are uniform for every setting
/// pair, so no complement marginal can move.
pub fn extremal_chained_box(settings: &ChainedSettings) -> Result<ConditionalDist> {
    if settings.n == 1 {
        // Both edges connect the same setting pair; no box scores zero.
        return Err(Error::InvalidParameter(
            "a chain of length 1 has no zero-score box".into(),
        ));
    }
    let wrap = settings.wrap_pair();
    ConditionalDist::from_fn(
        settings.input_spaces(),
        settings.output_spaces(),
        move |inputs, outputs| {
            let want_differ = (inputs[0], inputs[1]) == wrap;
            let differ = outputs[0] != outputs[1];
            if differ == want_differ {
                0.5
            } else {
                0.0
            }
        },
    )
}
