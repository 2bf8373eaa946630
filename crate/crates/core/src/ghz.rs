//! Multiparty parity relations, classical limits on satisfying them, a
//! no-signalling box construction with one deterministic output, and an
//! exploratory harness for how selected-bit freedom scales with the party
//! count.
//!
//! The relation family comes from measuring each qubit of the state
//! `(|0...0> - |1...1>)/sqrt(2)` in the X (input 0) or Y (input 1) basis:
//! whenever the number of Y inputs is even the outcome product is fixed,
//! equal to -1 when that number is divisible by four and +1 otherwise. Odd
//! numbers of Y inputs leave the outcomes unconstrained and uniform.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;

use crate::dist::{epsilon_free_deficit, ConditionalDist, Dist};
use crate::sources::{bits_to_index, ceil_log2, index_to_bits, BiasRule, SvSourceModel, SvStream};
use crate::{Error, Result};

/// Largest party count for explicit relation enumeration.
pub const MAX_RELATION_PARTIES: usize = 16;
/// Largest party count for a fully tabulated multiparty box.
pub const MAX_BOX_PARTIES: usize = 8;
/// Largest party count for the scaling harness.
pub const MAX_HARNESS_PARTIES: usize = 24;

/// One parity relation: an input bit per party and the outcome product it
/// forces.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GhzRelation {
    /// Measurement choice per party: 0 for X, 1 for Y.
    pub pattern: Vec<u8>,
    /// Required product of the +-1 outcomes.
    pub parity: i32,
}

fn check_bits(pattern: &[u8]) -> Result<()> {
    if pattern.iter().any(|&b| b > 1) {
        return Err(Error::InvalidParameter(
            "input patterns must be bits".into(),
        ));
    }
    Ok(())
}

/// Forced outcome product for an input pattern, or `None` when the pattern
/// has an odd number of Y inputs and the outcomes are unconstrained.
pub fn relation_parity(pattern: &[u8]) -> Result<Option<i32>> {
    check_bits(pattern)?;
    let ys = pattern.iter().filter(|&&b| b == 1).count();
    if ys % 2 == 1 {
        return Ok(None);
    }
    Ok(Some(if ys % 4 == 0 { -1 } else { 1 }))
}

/// All parity relations for `m` parties, in increasing order of the
/// pattern read as a big-endian integer. For three parties this is
/// `(0,0,0) -> -1` followed by `(0,1,1), (1,0,1), (1,1,0) -> +1`.
pub fn relations(m: usize) -> Result<Vec<GhzRelation>> {
    if !(3..=MAX_RELATION_PARTIES).contains(&m) {
        return Err(Error::InvalidParameter(format!(
            "party count must be in 3..={MAX_RELATION_PARTIES}, got {m}"
        )));
    }
    let mut out = Vec::new();
    for u in 0..(1u32 << m) {
        let pattern = index_to_bits(u, m);
        if let Some(parity) = relation_parity(&pattern)? {
            out.push(GhzRelation { pattern, parity });
        }
    }
    Ok(out)
}

/// The full `m`-party box: outcomes uniform over the strings whose product
/// matches the forced parity on constrained patterns and uniform over all
/// strings otherwise.
pub fn ghz_box(m: usize) -> Result<ConditionalDist> {
    if !(3..=MAX_BOX_PARTIES).contains(&m) {
        return Err(Error::InvalidParameter(format!(
            "party count must be in 3..={MAX_BOX_PARTIES}, got {m}"
        )));
    }
    let input_spaces = vec![vec![0u32, 1]; m];
    let output_spaces = vec![vec![1i32, -1]; m];
    ConditionalDist::from_fn(input_spaces, output_spaces, |inputs, outputs| {
        let pattern: Vec<u8> = inputs.iter().map(|&u| u as u8).collect();
        let product: i32 = outputs.iter().product();
        match relation_parity(&pattern).expect("bit inputs") {
            Some(parity) => {
                if product == parity {
                    (2.0f64).powi(-(m as i32 - 1))
                } else {
                    0.0
                }
            }
            None => (2.0f64).powi(-(m as i32)),
        }
    })
}

/// Samples one outcome string for the given input pattern: parity-forced
/// uniform on constrained patterns, fully uniform otherwise. Any party
/// count from 3 to 63 is supported.
pub fn sample_ghz_outcomes<R: Rng + ?Sized>(pattern: &[u8], rng: &mut R) -> Result<Vec<i32>> {
    let m = pattern.len();
    if !(3..=63).contains(&m) {
        return Err(Error::InvalidParameter(format!(
            "party count must be in 3..=63, got {m}"
        )));
    }
    let parity = relation_parity(pattern)?;
    let mut outcomes: Vec<i32> = (0..m)
        .map(|_| if rng.gen::<bool>() { 1 } else { -1 })
        .collect();
    if let Some(target) = parity {
        let head: i32 = outcomes[..m - 1].iter().product();
        outcomes[m - 1] = target * head;
    }
    Ok(outcomes)
}

/// A deterministic classical strategy: each party fixes both answers in
/// advance, one per input value.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GhzAssignment {
    /// Entry `i` holds party `i`'s outputs for inputs 0 and 1.
    pub outputs: Vec<[i32; 2]>,
}

impl GhzAssignment {
    /// Strategy number `index` of the `2^(2m)` possibilities: bit `2i + c`
    /// set means party `i` answers -1 on input `c`. Index 0 is the all-+1
    /// strategy.
    pub fn from_index(m: usize, index: u64) -> Self {
        let outputs = (0..m)
            .map(|i| {
                let pick = |c: u64| if (index >> (2 * i as u64 + c)) & 1 == 1 { -1 } else { 1 };
                [pick(0), pick(1)]
            })
            .collect();
        Self { outputs }
    }

    pub fn all_plus(m: usize) -> Self {
        Self::from_index(m, 0)
    }

    pub fn parties(&self) -> usize {
        self.outputs.len()
    }

    pub fn output(&self, party: usize, input: u8) -> i32 {
        self.outputs[party][usize::from(input)]
    }

    pub fn satisfies(&self, relation: &GhzRelation) -> bool {
        let product: i32 = relation
            .pattern
            .iter()
            .enumerate()
            .map(|(i, &c)| self.output(i, c))
            .product();
        product == relation.parity
    }

    /// Input patterns of the relations this strategy gets wrong.
    pub fn failed_patterns(&self, rels: &[GhzRelation]) -> Vec<Vec<u8>> {
        rels.iter()
            .filter(|rel| !self.satisfies(rel))
            .map(|rel| rel.pattern.clone())
            .collect()
    }
}

/// Exhaustive maximum of simultaneously satisfiable relations over all
/// deterministic strategies, with the first maximizing strategy as
/// witness. For three parties the maximum is 3 of 4 and the witness is the
/// all-+1 strategy.
pub fn max_classical_satisfiable(m: usize) -> Result<(usize, GhzAssignment)> {
    if !(3..=MAX_BOX_PARTIES).contains(&m) {
        return Err(Error::InvalidParameter(format!(
            "party count must be in 3..={MAX_BOX_PARTIES}, got {m}"
        )));
    }
    let rels = relations(m)?;
    let mut best = 0usize;
    let mut witness = GhzAssignment::all_plus(m);
    for index in 0..(1u64 << (2 * m)) {
        let assignment = GhzAssignment::from_index(m, index);
        let count = rels.iter().filter(|rel| assignment.satisfies(rel)).count();
        if count > best {
            best = count;
            witness = assignment;
        }
    }
    Ok((best, witness))
}

/// Guaranteed per-round probability of catching any fixed three-party
/// deterministic strategy with inputs from a partially free source:
/// `(1/2 - e)^3`, the least probability the source can give to the one
/// input pattern of a violated relation.
pub fn detection_probability_lower_bound(epsilon: f64) -> Result<f64> {
    if !(0.0..0.5).contains(&epsilon) {
        return Err(Error::EpsilonOutOfRange(epsilon));
    }
    Ok((0.5 - epsilon).powi(3))
}

/// Least probability an adaptive source with per-bit bias inside
/// `[1/2-e, 1/2+e]` can give to landing in `targets`. The optimum sits at
/// an extremal bias for every prefix, so a depth-first scan over the two
/// endpoint choices per bit is exact.
fn steered_min_probability(targets: &[Vec<u8>], m: usize, epsilon: f64, prefix: &mut Vec<u8>) -> f64 {
    if prefix.len() == m {
        return if targets.iter().any(|t| t == prefix) {
            1.0
        } else {
            0.0
        };
    }
    prefix.push(0);
    let v0 = steered_min_probability(targets, m, epsilon, prefix);
    prefix.pop();
    prefix.push(1);
    let v1 = steered_min_probability(targets, m, epsilon, prefix);
    prefix.pop();
    let lo = 0.5 - epsilon;
    let hi = 0.5 + epsilon;
    // P(bit = 1) = p; value = (1-p) v0 + p v1, linear in p.
    ((1.0 - hi) * v0 + hi * v1).min((1.0 - lo) * v0 + lo * v1)
}

/// Worst case over all 64 three-party strategies of the exactly computed
/// steered detection probability, with the strategy attaining it.
pub fn worst_case_detection_exact(epsilon: f64) -> Result<(f64, GhzAssignment)> {
    if !(0.0..0.5).contains(&epsilon) {
        return Err(Error::EpsilonOutOfRange(epsilon));
    }
    let rels = relations(3)?;
    let mut worst = f64::INFINITY;
    let mut witness = GhzAssignment::all_plus(3);
    for index in 0..64u64 {
        let assignment = GhzAssignment::from_index(3, index);
        let failed = assignment.failed_patterns(&rels);
        let p = steered_min_probability(&failed, 3, epsilon, &mut Vec::new());
        if p < worst {
            worst = p;
            witness = assignment;
        }
    }
    Ok((worst, witness))
}

/// Simulates the optimal steering adversary against one strategy and
/// returns the empirical per-round detection rate. Each bit is drawn at
/// the extremal bias minimizing the continuation value, mirroring the
/// exact computation.
pub fn detection_monte_carlo<R: Rng>(
    assignment: &GhzAssignment,
    epsilon: f64,
    trials: usize,
    rng: &mut R,
) -> Result<f64> {
    if assignment.parties() != 3 {
        return Err(Error::PartyCountMismatch {
            expected: 3,
            got: assignment.parties(),
        });
    }
    if !(0.0..0.5).contains(&epsilon) {
        return Err(Error::EpsilonOutOfRange(epsilon));
    }
    if trials == 0 {
        return Err(Error::TooFewTrials { min: 1, got: 0 });
    }
    let rels = relations(3)?;
    let failed = assignment.failed_patterns(&rels);
    let mut caught = 0usize;
    let mut prefix = Vec::with_capacity(3);
    for _ in 0..trials {
        prefix.clear();
        for _ in 0..3 {
            prefix.push(0);
            let v0 = steered_min_probability(&failed, 3, epsilon, &mut prefix);
            *prefix.last_mut().expect("nonempty") = 1;
            let v1 = steered_min_probability(&failed, 3, epsilon, &mut prefix);
            prefix.pop();
            let hi = 0.5 + epsilon;
            let lo = 0.5 - epsilon;
            let p_one = if (1.0 - hi) * v0 + hi * v1 <= (1.0 - lo) * v0 + lo * v1 {
                hi
            } else {
                lo
            };
            prefix.push(u8::from(rng.gen_bool(p_one)));
        }
        caught += usize::from(failed.iter().any(|t| t == &prefix));
    }
    Ok(caught as f64 / trials as f64)
}

/// Three-party no-signalling box in which `party`'s output is the
/// deterministic function `input 0 -> out0, input 1 -> out1` and the other
/// two share outcomes that are individually uniform but whose product
/// completes every forced parity. All constrained patterns are satisfied
/// with probability 1.
pub fn deterministic_party_box(party: usize, out0: i32, out1: i32) -> Result<ConditionalDist> {
    if party >= 3 {
        return Err(Error::InvalidParameter(format!(
            "party index must be 0..3, got {party}"
        )));
    }
    for &v in &[out0, out1] {
        if v != 1 && v != -1 {
            return Err(Error::UnknownOutput(vec![v]));
        }
    }
    let f = move |c: u8| if c == 0 { out0 } else { out1 };
    let input_spaces = vec![vec![0u32, 1]; 3];
    let output_spaces = vec![vec![1i32, -1]; 3];
    ConditionalDist::from_fn(input_spaces, output_spaces, move |inputs, outputs| {
        let u_d = inputs[party] as u8;
        if outputs[party] != f(u_d) {
            return 0.0;
        }
        let others: Vec<usize> = (0..3).filter(|&i| i != party).collect();
        // Only one input at `party` makes the full pattern constrained;
        // the pair's product is pinned to complete that relation whatever
        // `party` actually received.
        let completing = ((inputs[others[0]] + inputs[others[1]]) % 2) as u8;
        let mut pattern = [0u8; 3];
        pattern[others[0]] = inputs[others[0]] as u8;
        pattern[others[1]] = inputs[others[1]] as u8;
        pattern[party] = completing;
        let parity = relation_parity(&pattern)
            .expect("bit inputs")
            .expect("pattern built even");
        let target = parity * f(completing);
        if outputs[others[0]] * outputs[others[1]] == target {
            0.5
        } else {
            0.0
        }
    })
}

/// Scaling-harness summary: empirical freedom of a randomly selected
/// output bit for an honest sampler and for an adversary hiding one
/// constant deterministic party, plus the adversary's exact value.
#[derive(Debug, Clone, Copy)]
pub struct HarnessReport {
    pub m: usize,
    pub epsilon: f64,
    pub trials: usize,
    /// Selected-bit uniformity deficit for the honest sampler.
    pub honest_deficit: f64,
    /// Selected-bit freedom deficit against the hidden (slot, sign) value.
    pub adversarial_deficit: f64,
    /// Exact adversarial deficit; `1/(2m)` at `epsilon = 0`, growing with
    /// selection steering.
    pub adversarial_exact: f64,
}

/// Exact selected-bit deficit for the constant-party adversary whose
/// selection bits are steered toward the deterministic slot.
fn adversary_deficit_exact(m: usize, epsilon: f64) -> f64 {
    let k = ceil_log2(m);
    let mut sum = 0.0;
    for d in 0..m {
        let d_bits = index_to_bits(d as u32, k);
        let mut num = 0.0;
        let mut denom = 0.0;
        for j in 0..m {
            let j_bits = index_to_bits(j as u32, k);
            let weight: f64 = d_bits
                .iter()
                .zip(&j_bits)
                .map(|(&a, &b)| if a == b { 0.5 + epsilon } else { 0.5 - epsilon })
                .product();
            denom += weight;
            if j == d {
                num = weight;
            }
        }
        sum += num / denom;
    }
    sum / (2.0 * m as f64)
}

/// Runs the exploratory selected-bit experiment at one party count. The
/// trend is diagnostic only: the adversarial deficit shrinking like
/// `1/(2m)` shows this particular adversary weakening, not that every
/// adversary does. Small samples bias the empirical deficit upward by
/// roughly `sqrt(m / trials)`.
pub fn scaling_harness(m: usize, epsilon: f64, trials: usize, seed: u64) -> Result<HarnessReport> {
    if !(3..=MAX_HARNESS_PARTIES).contains(&m) {
        return Err(Error::InvalidParameter(format!(
            "party count must be in 3..={MAX_HARNESS_PARTIES}, got {m}"
        )));
    }
    if !(0.0..0.5).contains(&epsilon) {
        return Err(Error::EpsilonOutOfRange(epsilon));
    }
    if trials < 100 {
        return Err(Error::TooFewTrials {
            min: 100,
            got: trials,
        });
    }
    let k = ceil_log2(m);

    struct TrialOutcome {
        honest_bit: i32,
        adv_bit: i32,
        adv_w: u32,
    }

    let outcomes: Vec<TrialOutcome> = (0..trials)
        .into_par_iter()
        .map(|trial| -> Result<TrialOutcome> {
            let mut rng = ChaCha12Rng::seed_from_u64(seed);
            rng.set_stream(trial as u64);

            // Honest arm: uniform inputs, parity sampler, fair selection.
            let pattern: Vec<u8> = (0..m).map(|_| u8::from(rng.gen::<bool>())).collect();
            let honest_outcomes = sample_ghz_outcomes(&pattern, &mut rng)?;
            let honest_sel = loop {
                let idx = rng.gen_range(0..1usize << k);
                if idx < m {
                    break idx;
                }
            };
            let honest_bit = honest_outcomes[honest_sel];

            // Adversarial arm: hidden constant slot, steered selection.
            let d = rng.gen_range(0..m);
            let s = if rng.gen::<bool>() { 1 } else { -1 };
            let adv_w = (2 * d + usize::from(s == -1)) as u32;
            let inputs: Vec<u8> = (0..m).map(|_| u8::from(rng.gen::<bool>())).collect();
            let mut x = vec![0i32; m];
            x[d] = s;
            let others: Vec<usize> = (0..m).filter(|&i| i != d).collect();
            let completing: u8 = others.iter().map(|&i| inputs[i]).sum::<u8>() % 2;
            let mut full = inputs.clone();
            full[d] = completing;
            let parity = relation_parity(&full)?.expect("pattern built even");
            let target = parity * s;
            let mut head = 1i32;
            for &i in &others[..others.len() - 1] {
                x[i] = if rng.gen::<bool>() { 1 } else { -1 };
                head *= x[i];
            }
            x[*others.last().expect("m >= 3")] = target * head;

            let model = SvSourceModel::new(
                epsilon,
                BiasRule::TowardPattern {
                    pattern: index_to_bits(d as u32, k),
                },
            )?;
            let mut chooser = SvStream::new(model, &mut rng);
            let adv_sel = loop {
                let idx = bits_to_index(&chooser.take_bits(k)?) as usize;
                if idx < m {
                    break idx;
                }
            };
            Ok(TrialOutcome {
                honest_bit,
                adv_bit: x[adv_sel],
                adv_w,
            })
        })
        .collect::<Result<_>>()?;

    let total = trials as f64;
    let honest_plus = outcomes.iter().filter(|t| t.honest_bit == 1).count() as f64;
    let honest_joint = Dist::new(
        vec![(1i32, 0u32), (-1, 0)],
        vec![honest_plus / total, 1.0 - honest_plus / total],
    )?;
    let honest_deficit = epsilon_free_deficit(&honest_joint)?;

    let mut support = Vec::new();
    let mut weights = Vec::new();
    for &bit in &[1i32, -1] {
        for w in 0..(2 * m) as u32 {
            support.push((bit, w));
            weights.push(
                outcomes
                    .iter()
                    .filter(|t| t.adv_bit == bit && t.adv_w == w)
                    .count() as f64
                    / total,
            );
        }
    }
    let adv_joint = Dist::new(support, weights)?;
    let adversarial_deficit = epsilon_free_deficit(&adv_joint)?;

    Ok(HarnessReport {
        m,
        epsilon,
        trials,
        honest_deficit,
        adversarial_deficit,
        adversarial_exact: adversary_deficit_exact(m, epsilon),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::is_no_signalling;

    fn rng(seed: u64) -> ChaCha12Rng {
        ChaCha12Rng::seed_from_u64(seed)
    }

    #[test]
    fn three_party_relations_are_the_known_four() {
        let rels = relations(3).unwrap();
        assert_eq!(rels.len(), 4);
        let expected = [
            (vec![0u8, 0, 0], -1),
            (vec![0, 1, 1], 1),
            (vec![1, 0, 1], 1),
            (vec![1, 1, 0], 1),
        ];
        for (rel, (pattern, parity)) in rels.iter().zip(&expected) {
            assert_eq!(&rel.pattern, pattern);
            assert_eq!(rel.parity, *parity);
        }
        // Squaring the product of all four forced products would have to
        // give +1, yet the parities multiply to -1: no assignment of fixed
        // outputs can satisfy all four.
        let product: i32 = rels.iter().map(|rel| rel.parity).product();
        assert_eq!(product, -1);

        assert_eq!(relations(4).unwrap().len(), 8);
        assert!(relations(2).is_err());
        assert_eq!(relation_parity(&[1, 1, 1, 1]).unwrap(), Some(-1));
        assert_eq!(relation_parity(&[1, 0, 0]).unwrap(), None);
        assert!(relation_parity(&[2, 0, 0]).is_err());
    }

    #[test]
    fn box_satisfies_relations_with_uniform_marginals() {
        let b = ghz_box(3).unwrap();
        let (ok, violation) = is_no_signalling(&b, 1e-12).unwrap();
        assert!(ok, "no-signalling violation {violation}");
        for rel in relations(3).unwrap() {
            let inputs: Vec<u32> = rel.pattern.iter().map(|&c| u32::from(c)).collect();
            let mut satisfied = 0.0;
            for outputs in b.joint_outputs() {
                let product: i32 = outputs.iter().product();
                if product == rel.parity {
                    satisfied += b.prob(&inputs, &outputs).unwrap();
                }
            }
            assert!((satisfied - 1.0).abs() < 1e-12, "relation {inputs:?}");
        }
        for u in 0..8u32 {
            let inputs: Vec<u32> = vec![(u >> 2) & 1, (u >> 1) & 1, u & 1];
            for party in 0..3 {
                let marginal = b.party_marginal(&inputs, party).unwrap();
                for (_, p) in marginal.iter() {
                    assert!((p - 0.5).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn sampler_never_breaks_a_relation() {
        let mut r = rng(5);
        let mut unconstrained_products = [0usize; 2];
        for round in 0..100_000 {
            let u = round % 8;
            let pattern = vec![(u >> 2 & 1) as u8, (u >> 1 & 1) as u8, (u & 1) as u8];
            let outcomes = sample_ghz_outcomes(&pattern, &mut r).unwrap();
            let product: i32 = outcomes.iter().product();
            match relation_parity(&pattern).unwrap() {
                Some(parity) => assert_eq!(product, parity, "pattern {pattern:?}"),
                None => unconstrained_products[usize::from(product == 1)] += 1,
            }
        }
        // Unconstrained patterns leave the product free; both signs occur.
        assert!(unconstrained_products[0] > 10_000);
        assert!(unconstrained_products[1] > 10_000);

        // Empirical frequencies track the tabulated box at one pattern.
        let b = ghz_box(3).unwrap();
        let pattern = [0u8, 1, 1];
        let inputs = [0u32, 1, 1];
        let mut counts = std::collections::HashMap::new();
        let rounds = 40_000;
        for _ in 0..rounds {
            let outcomes = sample_ghz_outcomes(&pattern, &mut r).unwrap();
            *counts.entry(outcomes).or_insert(0usize) += 1;
        }
        for outputs in b.joint_outputs() {
            let expected = b.prob(&inputs, &outputs).unwrap();
            let observed =
                *counts.get(&outputs).unwrap_or(&0) as f64 / rounds as f64;
            assert!(
                (observed - expected).abs() < 0.02,
                "outputs {outputs:?}: {observed} vs {expected}"
            );
        }
    }

    #[test]
    fn classical_maximum_is_three_of_four() {
        let (best, witness) = max_classical_satisfiable(3).unwrap();
        assert_eq!(best, 3);
        assert_eq!(witness, GhzAssignment::all_plus(3));
        let rels = relations(3).unwrap();
        let verdicts: Vec<bool> = rels.iter().map(|rel| witness.satisfies(rel)).collect();
        assert_eq!(verdicts, vec![false, true, true, true]);
        for index in 0..64u64 {
            let count = rels
                .iter()
                .filter(|rel| GhzAssignment::from_index(3, index).satisfies(rel))
                .count();
            assert!(count <= 3, "assignment {index} satisfies {count}");
        }
    }

    #[test]
    fn detection_bound_is_tight_under_optimal_steering() {
        assert!((detection_probability_lower_bound(0.0).unwrap() - 0.125).abs() < 1e-15);
        assert!(detection_probability_lower_bound(0.499).unwrap() < 1e-8);
        assert!(detection_probability_lower_bound(0.5).is_err());
        for &epsilon in &[0.0, 0.1, 0.2, 0.3, 0.4, 0.45] {
            let bound = detection_probability_lower_bound(epsilon).unwrap();
            let (worst, witness) = worst_case_detection_exact(epsilon).unwrap();
            assert!(
                (worst - bound).abs() < 1e-12,
                "epsilon {epsilon}: worst {worst} vs bound {bound}"
            );
            // The witness must fail at least one relation; the bound is
            // attained by strategies failing exactly one.
            let rels = relations(3).unwrap();
            assert_eq!(witness.failed_patterns(&rels).len(), 1);
        }
    }

    #[test]
    fn steered_detection_monte_carlo_matches() {
        let mut r = rng(9);
        for &epsilon in &[0.0, 0.2, 0.4] {
            let (_, witness) = worst_case_detection_exact(epsilon).unwrap();
            let trials = 100_000;
            let empirical =
                detection_monte_carlo(&witness, epsilon, trials, &mut r).unwrap();
            let bound = detection_probability_lower_bound(epsilon).unwrap();
            let sigma = (bound * (1.0 - bound) / trials as f64).sqrt();
            assert!(
                empirical >= bound - 3.0 * sigma,
                "epsilon {epsilon}: empirical {empirical} vs bound {bound}"
            );
            assert!(
                (empirical - bound).abs() < 4.0 * sigma.max(1e-4),
                "epsilon {epsilon}: empirical {empirical} vs bound {bound}"
            );
        }
    }

    #[test]
    fn deterministic_party_box_contract() {
        for party in 0..3 {
            for &(out0, out1) in &[(1, 1), (1, -1), (-1, 1), (-1, -1)] {
                let b = deterministic_party_box(party, out0, out1).unwrap();
                let (ok, violation) = is_no_signalling(&b, 1e-12).unwrap();
                assert!(ok, "party {party}: violation {violation}");
                for rel in relations(3).unwrap() {
                    let inputs: Vec<u32> =
                        rel.pattern.iter().map(|&c| u32::from(c)).collect();
                    let mut satisfied = 0.0;
                    for outputs in b.joint_outputs() {
                        let product: i32 = outputs.iter().product();
                        if product == rel.parity {
                            satisfied += b.prob(&inputs, &outputs).unwrap();
                        }
                    }
                    assert!((satisfied - 1.0).abs() < 1e-12);
                }
                // The deterministic slot is a point mass; the others are
                // uniform.
                for u in 0..8u32 {
                    let inputs = vec![(u >> 2) & 1, (u >> 1) & 1, u & 1];
                    for i in 0..3 {
                        let marginal = b.party_marginal(&inputs, i).unwrap();
                        for (_, p) in marginal.iter() {
                            if i == party {
                                assert!(p.abs() < 1e-12 || (p - 1.0).abs() < 1e-12);
                            } else {
                                assert!((p - 0.5).abs() < 1e-12);
                            }
                        }
                    }
                }
            }
        }
        assert!(deterministic_party_box(3, 1, 1).is_err());
        assert!(deterministic_party_box(0, 2, 1).is_err());
    }

    #[test]
    fn deterministic_output_is_not_free_given_the_hidden_value() {
        // Two variants with opposite constant outputs, uniform hidden
        // value: knowing the value pins the bit completely.
        let plus = deterministic_party_box(0, 1, 1).unwrap();
        let minus = deterministic_party_box(0, -1, -1).unwrap();
        let inputs = [0u32, 0, 0];
        let mut support = Vec::new();
        let mut weights = Vec::new();
        for (w, b) in [(0u32, &plus), (1, &minus)] {
            let marginal = b.party_marginal(&inputs, 0).unwrap();
            for (&x, p) in marginal.iter() {
                support.push((x, w));
                weights.push(0.5 * p);
            }
        }
        let joint = Dist::new(support, weights).unwrap();
        assert!((epsilon_free_deficit(&joint).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn harness_exact_values_and_trend() {
        assert!((adversary_deficit_exact(3, 0.0) - 1.0 / 6.0).abs() < 1e-12);
        assert!((adversary_deficit_exact(24, 0.0) - 1.0 / 48.0).abs() < 1e-12);
        // Steered selection concentrates on the deterministic slot and
        // raises the deficit above the fair-selection value.
        assert!(adversary_deficit_exact(4, 0.2) > 1.0 / 8.0 + 0.05);

        let small = scaling_harness(3, 0.0, 10_000, 31).unwrap();
        assert!(small.honest_deficit < 0.02, "honest {}", small.honest_deficit);
        assert!(
            (small.adversarial_deficit - small.adversarial_exact).abs() < 0.03,
            "empirical {} vs exact {}",
            small.adversarial_deficit,
            small.adversarial_exact
        );
        assert!((small.adversarial_exact - 1.0 / 6.0).abs() < 1e-12);

        let large = scaling_harness(12, 0.0, 10_000, 31).unwrap();
        assert!(
            large.adversarial_deficit < small.adversarial_deficit,
            "m=12 {} vs m=3 {}",
            large.adversarial_deficit,
            small.adversarial_deficit
        );

        assert!(scaling_harness(2, 0.0, 1000, 1).is_err());
        assert!(scaling_harness(25, 0.0, 1000, 1).is_err());
        assert!(scaling_harness(3, 0.0, 50, 1).is_err());
    }
}
