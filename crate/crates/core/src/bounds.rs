//! Freedom bounds for chained correlations and the amplification
//! convergence calculator.
//!
//! The central inequality: for a hidden-variable family whose per-value
//! boxes are all no-signalling and whose hidden value stays possible across
//! neighbouring setting pairs (factor `q` below), the first party's outcome
//! at any setting pair is within `I_N / 2q` of an ideal free bit, where
//! `I_N` is the chained measure of the observed (averaged) box. Driving
//! `I_N` down with longer chains therefore drives the outcome toward
//! freedom, provided `q` does not decay faster; the closed-form trade-off
//! lives in [`amplification_bound`].

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::chained::{
    chained_value, extremal_chained_box, quantum_chained_box, ChainedSettings,
    DeterministicStrategy,
};
use crate::dist::{epsilon_free_deficit, ConditionalDist, Dist, WFamily};
use crate::sources::{index_to_bits, BiasRule, SvSourceModel};
use crate::{Error, Result, COMPARISON_TOL, NORMALIZATION_TOL};

/// One row of the freedom-bound comparison at a single setting pair.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct FreedomBoundReport {
    pub a: u32,
    pub b: u32,
    /// Chained measure of the observed box.
    pub i_n: f64,
    /// Worst-case hidden-value weight ratio across neighbouring pairs.
    pub q: f64,
    /// Measured distance of the outcome-and-hidden-value joint from an
    /// ideal free bit.
    pub lhs: f64,
    /// The bound `i_n / (2 q)`.
    pub rhs: f64,
    /// `rhs - lhs`; the bound asserts this is nonnegative up to 1e-9.
    pub margin: f64,
}

fn settings_for(fam: &WFamily) -> Result<ChainedSettings> {
    let spaces = fam.input_spaces();
    if spaces.len() != 2 {
        return Err(Error::PartyCountMismatch {
            expected: 2,
            got: spaces.len(),
        });
    }
    let settings = ChainedSettings::new(spaces[0].len())?;
    if spaces[0] != settings.a_values() || spaces[1] != settings.b_values() {
        return Err(Error::InvalidParameter(
            "family input spaces do not form a chained layout".into(),
        ));
    }
    Ok(settings)
}

/// Worst-case ratio `P(w | a', b') / P(w | a, b)` over all neighbouring
/// setting pairs `(a', b')` (wrap edge included) and hidden values `w`.
///
/// Hidden values with zero weight on both sides of a ratio are skipped:
/// they never occur there and contribute nothing. A zero weight at the
/// target pair with nonzero weight at a neighbour leaves the ratio
/// undefined and is an error. A zero at a neighbour against a nonzero
/// target weight makes the minimum 0, which the freedom bound rejects
/// downstream.
pub fn q_factor(fam: &WFamily, a: u32, b: u32) -> Result<f64> {
    let settings = settings_for(fam)?;
    let target = fam.weight_dist(&[a, b])?;
    let mut q = f64::INFINITY;
    for (na, nb) in settings.neighbour_pairs() {
        let neighbour = fam.weight_dist(&[na, nb])?;
        for (w_idx, w) in fam.w_values().iter().enumerate() {
            let num = neighbour.weights()[w_idx];
            let den = target.weights()[w_idx];
            if num <= COMPARISON_TOL && den <= COMPARISON_TOL {
                continue;
            }
            if den <= COMPARISON_TOL {
                return Err(Error::QUndefined {
                    a,
                    b,
                    w: *w,
                    numerator: num,
                });
            }
            q = q.min(num / den);
        }
    }
    if q.is_infinite() {
        // Every ratio was skipped; cannot happen for normalized rows.
        return Err(Error::InvalidParameter(
            "no hidden value has weight at the target pair".into(),
        ));
    }
    Ok(q)
}

fn deficit_at(fam: &WFamily, a: u32, b: u32) -> Result<f64> {
    let weights = fam.weight_dist(&[a, b])?;
    let outcomes = fam.output_spaces()[0].clone();
    let mut support = Vec::with_capacity(outcomes.len() * fam.w_values().len());
    let mut mass = Vec::with_capacity(support.capacity());
    for &x in &outcomes {
        for (w_idx, &w) in fam.w_values().iter().enumerate() {
            let marginal = fam.box_at(w_idx).party_marginal(&[a, b], 0)?;
            support.push((x, w));
            mass.push(weights.weights()[w_idx] * marginal.prob(&x).unwrap());
        }
    }
    epsilon_free_deficit(&Dist::new(support, mass)?)
}

/// Exact distance of the joint distribution of the first party's outcome
/// and the hidden value, at setting pair `(a, b)`, from the product of a
/// uniform outcome with the hidden-value marginal. Every member box must be
/// no-signalling; the outcome marginal is otherwise setting-dependent in a
/// way the bound does not cover.
pub fn measured_freedom_deficit(fam: &WFamily, a: u32, b: u32) -> Result<f64> {
    fam.require_no_signalling(NORMALIZATION_TOL)?;
    deficit_at(fam, a, b)
}

/// Evaluates the freedom bound at every setting pair of the family's
/// chained layout, returning one report per pair in row-major order.
pub fn freedom_bound_check(fam: &WFamily) -> Result<Vec<FreedomBoundReport>> {
    fam.require_no_signalling(NORMALIZATION_TOL)?;
    let settings = settings_for(fam)?;
    let i_n = chained_value(&settings, &fam.averaged_box()?)?;
    let mut reports = Vec::new();
    for a in settings.a_values() {
        for b in settings.b_values() {
            let q = q_factor(fam, a, b)?;
            if q <= COMPARISON_TOL {
                return Err(Error::QZero { a, b });
            }
            let lhs = deficit_at(fam, a, b)?;
            let rhs = i_n / (2.0 * q);
            reports.push(FreedomBoundReport {
                a,
                b,
                i_n,
                q,
                lhs,
                rhs,
                margin: rhs - lhs,
            });
        }
    }
    Ok(reports)
}

/// Convergence of the amplification recursion at chain length `2^r`.
#[derive(Debug, Clone, Copy)]
pub struct AmplificationBound {
    /// `(pi^2/16) * ((1+2e) / (sqrt(2) (1-2e)))^(2r)`.
    pub closed: f64,
    /// `2^r * ((1+2e)/(1-2e))^(2r) * sin^2(pi / 2^(r+2))`; never exceeds
    /// the closed form because `sin x <= x`.
    pub pre: f64,
}

/// Largest chain exponent the calculator accepts; keeps the power terms
/// comfortably inside f64 range.
pub const MAX_CHAIN_EXPONENT: u32 = 64;

/// Deficit bound for the outcome of a chain with `2^r` settings per party
/// when the settings are chosen with `epsilon`-free bits.
pub fn amplification_bound(epsilon: f64, r: u32) -> Result<AmplificationBound> {
    if !(0.0..0.5).contains(&epsilon) {
        return Err(Error::EpsilonOutOfRange(epsilon));
    }
    if r == 0 || r > MAX_CHAIN_EXPONENT {
        return Err(Error::InvalidParameter(format!(
            "chain exponent must be in 1..={MAX_CHAIN_EXPONENT}, got {r}"
        )));
    }
    let ratio = (1.0 + 2.0 * epsilon) / (1.0 - 2.0 * epsilon);
    let closed_base = ratio / 2.0f64.sqrt();
    let closed = std::f64::consts::PI.powi(2) / 16.0 * closed_base.powi(2 * r as i32);
    let half_angle = std::f64::consts::PI / 2.0f64.powi(r as i32 + 2);
    let pre = 2.0f64.powi(r as i32) * ratio.powi(2 * r as i32) * half_angle.sin().powi(2);
    Ok(AmplificationBound { closed, pre })
}

/// The freedom parameter below which the closed-form bound shrinks as the
/// chain grows: `(sqrt(2) - 1)^2 / 2`.
pub fn amplification_threshold() -> f64 {
    (3.0 - 2.0 * 2.0f64.sqrt()) / 2.0
}

/// Smallest chain exponent whose closed-form bound reaches `target`.
///
/// Only meaningful below the amplification threshold, where the bound is
/// strictly decreasing in `r`.
pub fn select_r(epsilon: f64, target: f64) -> Result<u32> {
    if !(0.0..0.5).contains(&epsilon) {
        return Err(Error::EpsilonOutOfRange(epsilon));
    }
    let threshold = amplification_threshold();
    if epsilon >= threshold {
        return Err(Error::AboveAmplificationThreshold { epsilon, threshold });
    }
    if target <= 0.0 {
        return Err(Error::InvalidParameter(
            "target deficit must be positive".into(),
        ));
    }
    for r in 1..=MAX_CHAIN_EXPONENT {
        if amplification_bound(epsilon, r)?.closed <= target {
            return Ok(r);
        }
    }
    Err(Error::InvalidParameter(format!(
        "target {target} not reachable with chain exponent <= {MAX_CHAIN_EXPONENT}"
    )))
}

/// Uniform-outcome box whose outcome product is pinned per setting pair:
/// `P(x, y | a, b) = 1/2` when `x * y = sign(a, b)`, else 0. No-signalling
/// for any sign pattern because both marginals stay uniform.
fn sign_pattern_box(
    settings: &ChainedSettings,
    signs: &dyn Fn(u32, u32) -> i32,
) -> Result<ConditionalDist> {
    ConditionalDist::from_fn(
        settings.input_spaces(),
        settings.output_spaces(),
        |inputs, outputs| {
            if outputs[0] * outputs[1] == signs(inputs[0], inputs[1]) {
                0.5
            } else {
                0.0
            }
        },
    )
}

/// Random per-value no-signalling family on a chained layout.
///
/// Member boxes are convex mixtures drawn from a no-signalling vertex pool:
/// every deterministic strategy box, plus, for two settings per party, the
/// eight uniform-outcome boxes whose sign patterns have odd parity, and,
/// for three settings per party, the zero-score extreme box. Hidden-value
/// weight rows are independently random per setting pair with a positive
/// floor, so every `q` factor is strictly positive.
pub fn random_ns_family<R: Rng>(n: usize, w_count: usize, rng: &mut R) -> Result<WFamily> {
    if !(2..=3).contains(&n) {
        return Err(Error::InvalidParameter(format!(
            "random families are generated for 2 or 3 settings per party, got {n}"
        )));
    }
    if w_count == 0 {
        return Err(Error::EmptySupport);
    }
    let settings = ChainedSettings::new(n)?;
    let mut pool: Vec<ConditionalDist> = Vec::new();
    for a_mask in 0..(1u64 << n) {
        for b_mask in 0..(1u64 << n) {
            pool.push(DeterministicStrategy::from_masks(n, a_mask, b_mask).to_box(&settings)?);
        }
    }
    if n == 2 {
        // Sign patterns over the four setting pairs with an odd number of
        // anti-correlations; these sit outside the local polytope.
        for mask in 0..16u32 {
            if mask.count_ones() % 2 == 1 {
                let signs = move |a: u32, bb: u32| {
                    let idx = (a / 2) * 2 + bb / 2;
                    if mask >> idx & 1 == 1 {
                        -1
                    } else {
                        1
                    }
                };
                pool.push(sign_pattern_box(&settings, &signs)?);
            }
        }
    } else {
        pool.push(extremal_chained_box(&settings)?);
    }

    let mut boxes = Vec::with_capacity(w_count);
    for _ in 0..w_count {
        let picks = 2 + rng.gen_range(0..5usize);
        let mut parts = Vec::with_capacity(picks);
        let mut raw = Vec::with_capacity(picks);
        for _ in 0..picks {
            parts.push(&pool[rng.gen_range(0..pool.len())]);
            raw.push(rng.gen::<f64>() + 0.05);
        }
        let total: f64 = raw.iter().sum();
        let weighted: Vec<(f64, &ConditionalDist)> = raw
            .iter()
            .map(|w| w / total)
            .zip(parts.iter().copied())
            .collect();
        boxes.push(ConditionalDist::mix(&weighted)?);
    }

    let mut weight_rows = Vec::with_capacity(n * n);
    for _ in 0..(n * n) {
        let mut row: Vec<f64> = (0..w_count).map(|_| rng.gen::<f64>() + 0.1).collect();
        let total: f64 = row.iter().sum();
        for w in &mut row {
            *w /= total;
        }
        weight_rows.push(row);
    }
    WFamily::new((0..w_count as u32).collect(), weight_rows, boxes)
}

/// Batch of freedom-bound scans over independently seeded random families.
/// Instances run in parallel; results are returned in instance order.
pub fn batch_random_check(
    n: usize,
    instances: usize,
    w_count: usize,
    seed: u64,
) -> Result<Vec<Vec<FreedomBoundReport>>> {
    (0..instances)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha12Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            let fam = random_ns_family(n, w_count, &mut rng)?;
            freedom_bound_check(&fam)
        })
        .collect()
}

/// The hidden-value family induced by a source that steers every settings
/// block toward a designated bit pattern: one hidden value per pattern,
/// uniform pattern prior, and the quantum box for every member.
///
/// The observed settings distribution is exactly uniform, and the weight of
/// pattern `w` given a settings block follows the per-bit steering odds, so
/// the worst-case ratio between neighbouring blocks is exactly
/// `((1-2e)/(1+2e))^(2r)`.
pub fn pattern_steered_family(epsilon: f64, r: usize) -> Result<WFamily> {
    if !(0.0..0.5).contains(&epsilon) {
        return Err(Error::EpsilonOutOfRange(epsilon));
    }
    if r == 0 || r > 4 {
        return Err(Error::InvalidParameter(format!(
            "pattern family enumerates 2^(2r) hidden values; r must be in 1..=4, got {r}"
        )));
    }
    let n = 1usize << r;
    let settings = ChainedSettings::new(n)?;
    let quantum = quantum_chained_box(&settings)?;
    let block_count = 1u32 << (2 * r);

    let models: Vec<SvSourceModel> = (0..block_count)
        .map(|w| {
            SvSourceModel::new(
                epsilon,
                BiasRule::TowardPattern {
                    pattern: index_to_bits(w, 2 * r),
                },
            )
        })
        .collect::<Result<_>>()?;

    let mut weight_rows = Vec::with_capacity(n * n);
    for a_idx in 0..n as u32 {
        for b_idx in 0..n as u32 {
            let block = [
                index_to_bits(a_idx, r),
                index_to_bits(b_idx, r),
            ]
            .concat();
            // Uniform pattern prior and uniform observed blocks cancel, so
            // the posterior weight of w equals the block probability under
            // w's steering rule.
            let row: Vec<f64> = models
                .iter()
                .map(|m| m.block_probability(&block))
                .collect::<Result<_>>()?;
            weight_rows.push(row);
        }
    }
    WFamily::new(
        (0..block_count).collect(),
        weight_rows,
        vec![quantum; block_count as usize],
    )
}
