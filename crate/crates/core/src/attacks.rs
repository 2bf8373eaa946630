//! The designated-pair classical attack on chained correlations.
//!
//! The adversary exploits partially free setting choices: before each round
//! it designates one edge of the setting cycle, hands the parties a
//! deterministic strategy that satisfies every edge relation except the
//! designated one, and steers the setting bits away from that edge. The
//! designated edge is then sampled with probability `(1/2 - e)^(2r)`
//! instead of `2^(-2r)`, so the observed chained measure collapses to about
//! `(1 - 2e)^(2r)` while every box stays local. Once that value drops to
//! the quantum level, measuring the chained value alone can no longer
//! separate the device from an honest one.

use rand::Rng;

use crate::chained::{ChainedSettings, DeterministicStrategy};
use crate::dist::WFamily;
use crate::sources::{bits_to_index, index_to_bits, BiasRule, SvSourceModel, SvStream};
use crate::{Error, Result};

/// Largest chain exponent for the attack construction; the strategy table
/// grows as `4^r` entries per hidden value.
pub const MAX_ATTACK_EXPONENT: usize = 8;

/// Largest chain exponent for materializing the attack as a full
/// hidden-variable family; the table grows as `16^r` cells.
pub const MAX_FAMILY_EXPONENT: usize = 4;

/// The attack: one hidden value per cycle edge, each with a deterministic
/// strategy failing exactly that edge, plus the steering rule that hides
/// the failure.
#[derive(Debug, Clone)]
pub struct DesignatedPairAttack {
    r: usize,
    epsilon: f64,
    settings: ChainedSettings,
    pairs: Vec<(u32, u32)>,
    strategies: Vec<DeterministicStrategy>,
}

/// Monte Carlo estimate of the observed chained measure under the attack.
#[derive(Debug, Clone, Copy)]
pub struct ObservedIEstimate {
    /// Sum of per-edge wrong-relation frequencies.
    pub value: f64,
    /// Standard error propagated from the per-edge binomial counts.
    pub sigma: f64,
    pub rounds: usize,
}

impl DesignatedPairAttack {
    /// Builds the attack for a chain of `2^r` settings per party.
    pub fn build(r: usize, epsilon: f64) -> Result<Self> {
        if r == 0 || r > MAX_ATTACK_EXPONENT {
            return Err(Error::InvalidParameter(format!(
                "attack exponent must be in 1..={MAX_ATTACK_EXPONENT}, got {r}"
            )));
        }
        if !(0.0..0.5).contains(&epsilon) {
            return Err(Error::EpsilonOutOfRange(epsilon));
        }
        let n = 1usize << r;
        let settings = ChainedSettings::new(n)?;
        let pairs = settings.neighbour_pairs();
        let strategies = (0..pairs.len())
            .map(|k| staircase_strategy(n, k))
            .collect();
        Ok(Self {
            r,
            epsilon,
            settings,
            pairs,
            strategies,
        })
    }

    pub fn r(&self) -> usize {
        self.r
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn settings(&self) -> &ChainedSettings {
        &self.settings
    }

    /// The hidden-value alphabet: all cycle edges, wrap edge last.
    pub fn pairs(&self) -> &[(u32, u32)] {
        &self.pairs
    }

    pub fn strategies(&self) -> &[DeterministicStrategy] {
        &self.strategies
    }

    /// The settings block that would select edge `w_idx`.
    pub fn pair_block(&self, w_idx: usize) -> Vec<u8> {
        let (a, b) = self.pairs[w_idx];
        [
            index_to_bits(a / 2, self.r),
            index_to_bits(b / 2, self.r),
        ]
        .concat()
    }

    /// The source the adversary runs while edge `w_idx` is designated.
    pub fn source_model(&self, w_idx: usize) -> Result<SvSourceModel> {
        SvSourceModel::new(
            self.epsilon,
            BiasRule::AwayFromPattern {
                pattern: self.pair_block(w_idx),
            },
        )
    }

    /// Materializes the attack as a hidden-variable family: per-edge
    /// deterministic boxes with the Bayes posterior of the designated edge
    /// given each settings block as weights.
    pub fn family(&self) -> Result<WFamily> {
        if self.r > MAX_FAMILY_EXPONENT {
            return Err(Error::InvalidParameter(format!(
                "family tables are limited to exponent {MAX_FAMILY_EXPONENT}, got {}",
                self.r
            )));
        }
        let models: Vec<SvSourceModel> = (0..self.pairs.len())
            .map(|k| self.source_model(k))
            .collect::<Result<_>>()?;
        let mut weight_rows = Vec::new();
        for a in self.settings.a_values() {
            for b in self.settings.b_values() {
                let block = [
                    index_to_bits(a / 2, self.r),
                    index_to_bits(b / 2, self.r),
                ]
                .concat();
                let mut row: Vec<f64> = models
                    .iter()
                    .map(|m| m.block_probability(&block))
                    .collect::<Result<_>>()?;
                // Uniform prior over edges cancels in the posterior.
                let total: f64 = row.iter().sum();
                for v in &mut row {
                    *v /= total;
                }
                weight_rows.push(row);
            }
        }
        let boxes = self
            .strategies
            .iter()
            .map(|s| s.to_box(&self.settings))
            .collect::<Result<_>>()?;
        WFamily::new(
            (0..self.pairs.len() as u32).collect(),
            weight_rows,
            boxes,
        )
    }

    /// Exact expected value of the observed chained measure: for each edge
    /// `t`, the posterior probability that `t` was the designated edge
    /// given that `t` was measured.
    pub fn observed_i_exact(&self) -> Result<f64> {
        let models: Vec<SvSourceModel> = (0..self.pairs.len())
            .map(|k| self.source_model(k))
            .collect::<Result<_>>()?;
        let mut total = 0.0;
        for t in 0..self.pairs.len() {
            let block = self.pair_block(t);
            let num = models[t].block_probability(&block)?;
            let den: f64 = models
                .iter()
                .map(|m| m.block_probability(&block))
                .sum::<Result<f64>>()?;
            total += num / den;
        }
        Ok(total)
    }

    /// Simulates rounds of the attack and estimates the chained measure
    /// the way a verifier would: per-edge wrong-relation frequencies among
    /// rounds that landed on that edge. Every edge must be sampled at
    /// least once.
    pub fn estimate_observed_i<R: Rng>(
        &self,
        rounds: usize,
        rng: &mut R,
    ) -> Result<ObservedIEstimate> {
        if rounds == 0 {
            return Err(Error::TooFewTrials { min: 1, got: 0 });
        }
        let models: Vec<SvSourceModel> = (0..self.pairs.len())
            .map(|k| self.source_model(k))
            .collect::<Result<_>>()?;
        let n = 1u32 << self.r;
        let mut counts = vec![0usize; self.pairs.len()];
        let mut wrongs = vec![0usize; self.pairs.len()];
        for _ in 0..rounds {
            let w_idx = rng.gen_range(0..self.pairs.len());
            let block =
                SvStream::new(models[w_idx].clone(), &mut *rng).take_bits(2 * self.r)?;
            let a = 2 * bits_to_index(&block[..self.r]);
            let b = 2 * bits_to_index(&block[self.r..]) + 1;
            let Some(t) = self.pairs.iter().position(|&p| p == (a, b)) else {
                continue;
            };
            counts[t] += 1;
            let strategy = &self.strategies[w_idx];
            let x = strategy.a_outputs[(a / 2) as usize];
            let y = strategy.b_outputs[(b / 2) as usize];
            let wrap = (a, b) == self.settings.wrap_pair() && n > 1;
            let wrong = if wrap { x == y } else { x != y };
            wrongs[t] += usize::from(wrong);
        }
        let mut value = 0.0;
        let mut variance = 0.0;
        for t in 0..self.pairs.len() {
            if counts[t] == 0 {
                return Err(Error::TooFewTrials {
                    min: self.pairs.len(),
                    got: rounds,
                });
            }
            let p = wrongs[t] as f64 / counts[t] as f64;
            value += p;
            variance += p * (1.0 - p) / counts[t] as f64;
        }
        Ok(ObservedIEstimate {
            value,
            sigma: variance.sqrt(),
            rounds,
        })
    }
}

/// The deterministic strategy whose only wrong relation is cycle edge
/// `designated` (edges indexed in cycle order, wrap edge last).
///
/// Walking the cycle with constant outcomes satisfies every interior edge
/// and fails only the wrap edge; flipping the sign immediately after an
/// interior edge moves the single failure onto that edge instead.
fn staircase_strategy(n: usize, designated: usize) -> DeterministicStrategy {
    let positions = 2 * n;
    let outcome_at = |pos: usize| -> i32 {
        if designated == positions - 1 {
            // Wrap edge designated: constant outcomes fail only the wrap.
            1
        } else if pos <= designated {
            1
        } else {
            -1
        }
    };
    let a_outputs = (0..n).map(|m| outcome_at(2 * m)).collect();
    let b_outputs = (0..n).map(|m| outcome_at(2 * m + 1)).collect();
    DeterministicStrategy {
        a_outputs,
        b_outputs,
    }
}

/// Idealized observed chained measure under the attack, pretending the
/// steered settings stay uniform: `(1 - 2e)^(2r)`.
pub fn observed_i_closed_form(r: usize, epsilon: f64) -> Result<f64> {
    if r == 0 {
        return Err(Error::InvalidParameter("exponent must be positive".into()));
    }
    if !(0.0..0.5).contains(&epsilon) {
        return Err(Error::EpsilonOutOfRange(epsilon));
    }
    Ok((1.0 - 2.0 * epsilon).powi(2 * r as i32))
}

/// Idealized contribution of a single edge: `2^(r-1) (1/2 - e)^(2r)`.
/// Summing it over the `2^(r+1)` edges recovers the closed form.
pub fn per_pair_term_idealized(r: usize, epsilon: f64) -> f64 {
    2.0f64.powi(r as i32 - 1) * (0.5 - epsilon).powi(2 * r as i32)
}

/// Smallest freedom parameter at which the attack's idealized observed
/// value sinks to the honest quantum value for a chain of `2^r` settings:
/// `1/2 - (1/sqrt(2)) (2 sin^2(pi / 2^(r+2)))^(1/(2r))`. Grows with `r`
/// toward [`limit_threshold`]: the subtracted root rises toward
/// `sin(pi/2^(r+2))`-free limit `1/(2 sqrt 2)` from above as the exponent
/// `1/(2r)` flattens the shrinking sine.
pub fn feasibility_threshold(r: usize) -> Result<f64> {
    if r == 0 || r > 60 {
        return Err(Error::InvalidParameter(format!(
            "exponent must be in 1..=60, got {r}"
        )));
    }
    let angle = std::f64::consts::PI / 2.0f64.powi(r as i32 + 2);
    let inner = 2.0 * angle.sin().powi(2);
    Ok(0.5 - inner.powf(1.0 / (2.0 * r as f64)) / 2.0f64.sqrt())
}

/// Limit of the feasibility threshold as the chain grows:
/// `1/2 - 1/(2 sqrt 2)`.
pub fn limit_threshold() -> f64 {
    0.5 - 1.0 / (2.0 * 2.0f64.sqrt())
}
