//! Finite probability distributions, multi-party conditional boxes, and
//! hidden-variable families.
//!
//! Everything downstream reduces to three objects: a distribution over a
//! finite support ([`Dist`]), a conditional table mapping joint inputs to a
//! distribution over joint outputs ([`ConditionalDist`]), and a family of
//! such tables indexed by a hidden value with input-dependent weights
//! ([`WFamily`]). Freedom of a bit is always measured as variational
//! distance from the uniform product, and signalling is always measured on
//! complement marginals.

use std::collections::BTreeMap;

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::{Error, Result, COMPARISON_TOL, NORMALIZATION_TOL};

/// Marker for types usable as outcome labels.
pub trait Label: Clone + PartialEq + Ord + std::fmt::Debug {}
impl<T: Clone + PartialEq + Ord + std::fmt::Debug> Label for T {}

/// A probability distribution over an explicit, ordered finite support.
///
/// Zero weights are legal and meaningful: a support entry with weight zero
/// still declares that the outcome is part of the alphabet, which matters
/// when a marginal or a uniform reference over the alphabet is taken.
#[derive(Debug, Clone, PartialEq)]
pub struct Dist<T: Label> {
    support: Vec<T>,
    weights: Vec<f64>,
}

impl<T: Label> Dist<T> {
    /// Builds a distribution, validating weight range and normalization.
    pub fn new(support: Vec<T>, weights: Vec<f64>) -> Result<Self> {
        if support.is_empty() {
            return Err(Error::EmptySupport);
        }
        if support.len() != weights.len() {
            return Err(Error::LengthMismatch {
                labels: support.len(),
                weights: weights.len(),
            });
        }
        for (i, a) in support.iter().enumerate() {
            if support[i + 1..].contains(a) {
                return Err(Error::DuplicateLabel);
            }
        }
        let mut clean = Vec::with_capacity(weights.len());
        for &w in &weights {
            if !(-COMPARISON_TOL..=1.0 + COMPARISON_TOL).contains(&w) || w.is_nan() {
                return Err(Error::ProbabilityOutOfRange(w));
            }
            clean.push(w.clamp(0.0, 1.0));
        }
        let sum: f64 = clean.iter().sum();
        if (sum - 1.0).abs() > NORMALIZATION_TOL {
            return Err(Error::NotNormalized(sum));
        }
        Ok(Self {
            support,
            weights: clean,
        })
    }

    /// Uniform distribution over the given support.
    pub fn uniform(support: Vec<T>) -> Result<Self> {
        let n = support.len();
        if n == 0 {
            return Err(Error::EmptySupport);
        }
        let w = vec![1.0 / n as f64; n];
        Self::new(support, w)
    }

    /// Point mass on `at`, which must be a member of the support.
    pub fn point(support: Vec<T>, at: &T) -> Result<Self> {
        let idx = support
            .iter()
            .position(|s| s == at)
            .ok_or(Error::SupportMismatch)?;
        let mut w = vec![0.0; support.len()];
        w[idx] = 1.0;
        Self::new(support, w)
    }

    pub fn support(&self) -> &[T] {
        &self.support
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.support.len()
    }

    pub fn is_empty(&self) -> bool {
        self.support.is_empty()
    }

    /// Probability of a label, or `None` if it is not in the support.
    pub fn prob(&self, label: &T) -> Option<f64> {
        self.support
            .iter()
            .position(|s| s == label)
            .map(|i| self.weights[i])
    }

    pub fn iter(&self) -> impl Iterator<Item = (&T, f64)> {
        self.support.iter().zip(self.weights.iter().copied())
    }

    /// Samples one outcome by inverse transform over the stored order.
    pub fn sample<R: rand::Rng + ?Sized>(&self, rng: &mut R) -> &T {
        let mut u: f64 = rng.gen();
        for (label, w) in self.iter() {
            if u < w {
                return label;
            }
            u -= w;
        }
        // Rounding can leave a sliver of leftover mass; fall back to the
        // last outcome with nonzero weight.
        self.support
            .iter()
            .zip(&self.weights)
            .rev()
            .find(|(_, &w)| w > 0.0)
            .map(|(l, _)| l)
            .unwrap_or(&self.support[0])
    }
}

impl<A: Label, B: Label> Dist<(A, B)> {
    /// Distinct first components, in order of first appearance.
    pub fn first_alphabet(&self) -> Vec<A> {
        let mut out: Vec<A> = Vec::new();
        for (a, _) in &self.support {
            if !out.contains(a) {
                out.push(a.clone());
            }
        }
        out
    }

    /// Distinct second components, in order of first appearance.
    pub fn second_alphabet(&self) -> Vec<B> {
        let mut out: Vec<B> = Vec::new();
        for (_, b) in &self.support {
            if !out.contains(b) {
                out.push(b.clone());
            }
        }
        out
    }

    /// Marginal over the second component.
    pub fn second_marginal(&self) -> Result<Dist<B>> {
        let alphabet = self.second_alphabet();
        let mut weights = vec![0.0; alphabet.len()];
        for ((_, b), w) in self.iter() {
            let i = alphabet.iter().position(|x| x == b).unwrap();
            weights[i] += w;
        }
        Dist::new(alphabet, weights)
    }

    /// Marginal over the first component.
    pub fn first_marginal(&self) -> Result<Dist<A>> {
        let alphabet = self.first_alphabet();
        let mut weights = vec![0.0; alphabet.len()];
        for ((a, _), w) in self.iter() {
            let i = alphabet.iter().position(|x| x == a).unwrap();
            weights[i] += w;
        }
        Dist::new(alphabet, weights)
    }

    fn require_rectangular(&self) -> Result<(Vec<A>, Vec<B>)> {
        let first = self.first_alphabet();
        let second = self.second_alphabet();
        if self.support.len() != first.len() * second.len() {
            return Err(Error::NotRectangular);
        }
        for a in &first {
            for b in &second {
                if !self.support.iter().any(|(x, y)| x == a && y == b) {
                    return Err(Error::NotRectangular);
                }
            }
        }
        Ok((first, second))
    }
}

/// Variational distance `(1/2) * sum_x |P(x) - Q(x)|`.
///
/// Both distributions must declare the same support in the same order; this
/// keeps the comparison honest when zero-weight outcomes matter.
pub fn variational_distance<T: Label>(p: &Dist<T>, q: &Dist<T>) -> Result<f64> {
    if p.support != q.support {
        return Err(Error::SupportMismatch);
    }
    let sum: f64 = p
        .weights
        .iter()
        .zip(&q.weights)
        .map(|(a, b)| (a - b).abs())
        .sum();
    Ok(sum / 2.0)
}

/// Distance from the uniform distribution over the same support.
pub fn uniform_deficit<T: Label>(p: &Dist<T>) -> Result<f64> {
    let u = Dist::uniform(p.support.to_vec())?;
    variational_distance(p, &u)
}

/// Freedom deficit of the first component of a joint distribution: the
/// variational distance between `P(x, g)` and the product of the uniform
/// distribution over the x-alphabet with the marginal `P(g)`.
///
/// A deficit of zero means the first component is uniform and carries no
/// correlation with the second; a deficit of `e` makes it an `e`-free bit
/// relative to that side information. The joint support must cover the full
/// product of the two alphabets (zero weights are how a thin support is
/// declared).
pub fn epsilon_free_deficit<X: Label, G: Label>(joint: &Dist<(X, G)>) -> Result<f64> {
    let (first, _) = joint.require_rectangular()?;
    let g_marginal = joint.second_marginal()?;
    let u = 1.0 / first.len() as f64;
    let mut sum = 0.0;
    for ((_, g), w) in joint.iter() {
        let reference = u * g_marginal.prob(g).unwrap();
        sum += (w - reference).abs();
    }
    Ok(sum / 2.0)
}

fn cartesian<T: Clone>(spaces: &[Vec<T>]) -> Vec<Vec<T>> {
    let mut acc: Vec<Vec<T>> = vec![Vec::new()];
    for space in spaces {
        let mut next = Vec::with_capacity(acc.len() * space.len());
        for prefix in &acc {
            for v in space {
                let mut row = prefix.clone();
                row.push(v.clone());
                next.push(row);
            }
        }
        acc = next;
    }
    acc
}

/// Result of a signalling scan over all complement marginals.
#[derive(Debug, Clone, Copy)]
pub struct SignallingCheck {
    /// Largest deviation of any complement marginal from its average over
    /// the scanned party's inputs.
    pub max_violation: f64,
    /// Tolerance the check was run with.
    pub tol: f64,
}

impl SignallingCheck {
    pub fn passes(&self) -> bool {
        self.max_violation <= self.tol
    }
}

/// A conditional distribution `P(outputs | inputs)` for one or more parties.
///
/// Inputs are small unsigned setting labels, outputs are signed outcome
/// labels (detector outcomes use +1 and -1). Rows are stored per joint
/// input; every input combination must be present and normalized.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalDist {
    input_spaces: Vec<Vec<u32>>,
    output_spaces: Vec<Vec<i32>>,
    /// `rows[input_index][output_index]`, last party varying fastest.
    rows: Vec<Vec<f64>>,
}

impl ConditionalDist {
    /// Builds a box by evaluating `f` on every (inputs, outputs) pair.
    pub fn from_fn<F>(
        input_spaces: Vec<Vec<u32>>,
        output_spaces: Vec<Vec<i32>>,
        mut f: F,
    ) -> Result<Self>
    where
        F: FnMut(&[u32], &[i32]) -> f64,
    {
        let joint_outputs = cartesian(&output_spaces);
        let mut rows = Vec::new();
        for inputs in cartesian(&input_spaces) {
            let row: Vec<f64> = joint_outputs.iter().map(|o| f(&inputs, o)).collect();
            rows.push(row);
        }
        Self::from_rows(input_spaces, output_spaces, rows)
    }

    /// Builds a box from pre-computed rows in canonical index order.
    pub fn from_rows(
        input_spaces: Vec<Vec<u32>>,
        output_spaces: Vec<Vec<i32>>,
        rows: Vec<Vec<f64>>,
    ) -> Result<Self> {
        if input_spaces.len() != output_spaces.len() {
            return Err(Error::PartyCountMismatch {
                expected: input_spaces.len(),
                got: output_spaces.len(),
            });
        }
        if input_spaces.is_empty() {
            return Err(Error::EmptySupport);
        }
        for space in input_spaces.iter() {
            if space.is_empty() {
                return Err(Error::EmptySupport);
            }
            for (i, v) in space.iter().enumerate() {
                if space[i + 1..].contains(v) {
                    return Err(Error::DuplicateLabel);
                }
            }
        }
        for space in output_spaces.iter() {
            if space.is_empty() {
                return Err(Error::EmptySupport);
            }
            for (i, v) in space.iter().enumerate() {
                if space[i + 1..].contains(v) {
                    return Err(Error::DuplicateLabel);
                }
            }
        }
        let n_inputs: usize = input_spaces.iter().map(Vec::len).product();
        let n_outputs: usize = output_spaces.iter().map(Vec::len).product();
        if rows.len() != n_inputs {
            return Err(Error::LengthMismatch {
                labels: n_inputs,
                weights: rows.len(),
            });
        }
        let mut clean_rows = Vec::with_capacity(rows.len());
        for row in rows {
            if row.len() != n_outputs {
                return Err(Error::LengthMismatch {
                    labels: n_outputs,
                    weights: row.len(),
                });
            }
            let mut clean = Vec::with_capacity(row.len());
            for &w in &row {
                if !(-COMPARISON_TOL..=1.0 + COMPARISON_TOL).contains(&w) || w.is_nan() {
                    return Err(Error::ProbabilityOutOfRange(w));
                }
                clean.push(w.clamp(0.0, 1.0));
            }
            let sum: f64 = clean.iter().sum();
            if (sum - 1.0).abs() > NORMALIZATION_TOL {
                return Err(Error::NotNormalized(sum));
            }
            clean_rows.push(clean);
        }
        Ok(Self {
            input_spaces,
            output_spaces,
            rows: clean_rows,
        })
    }

    /// Convex mixture of boxes sharing identical input and output spaces.
    pub fn mix(parts: &[(f64, &ConditionalDist)]) -> Result<Self> {
        let (first_weight, first) = parts.first().ok_or(Error::EmptySupport)?;
        let mut total = *first_weight;
        let mut rows = first.rows.clone();
        for row in rows.iter_mut() {
            for w in row.iter_mut() {
                *w *= first_weight;
            }
        }
        for (weight, part) in &parts[1..] {
            if part.input_spaces != first.input_spaces
                || part.output_spaces != first.output_spaces
            {
                return Err(Error::SupportMismatch);
            }
            total += weight;
            for (acc, row) in rows.iter_mut().zip(&part.rows) {
                for (a, w) in acc.iter_mut().zip(row) {
                    *a += weight * w;
                }
            }
        }
        if (total - 1.0).abs() > NORMALIZATION_TOL {
            return Err(Error::NotNormalized(total));
        }
        Self::from_rows(
            first.input_spaces.clone(),
            first.output_spaces.clone(),
            rows,
        )
    }

    pub fn party_count(&self) -> usize {
        self.input_spaces.len()
    }

    pub fn input_spaces(&self) -> &[Vec<u32>] {
        &self.input_spaces
    }

    pub fn output_spaces(&self) -> &[Vec<i32>] {
        &self.output_spaces
    }

    /// All joint inputs in canonical row order.
    pub fn joint_inputs(&self) -> Vec<Vec<u32>> {
        cartesian(&self.input_spaces)
    }

    /// All joint outputs in canonical column order.
    pub fn joint_outputs(&self) -> Vec<Vec<i32>> {
        cartesian(&self.output_spaces)
    }

    pub fn input_index(&self, inputs: &[u32]) -> Result<usize> {
        if inputs.len() != self.input_spaces.len() {
            return Err(Error::UnknownInput(inputs.to_vec()));
        }
        let mut idx = 0;
        for (space, label) in self.input_spaces.iter().zip(inputs) {
            let pos = space
                .iter()
                .position(|v| v == label)
                .ok_or_else(|| Error::UnknownInput(inputs.to_vec()))?;
            idx = idx * space.len() + pos;
        }
        Ok(idx)
    }

    pub fn output_index(&self, outputs: &[i32]) -> Result<usize> {
        if outputs.len() != self.output_spaces.len() {
            return Err(Error::UnknownOutput(outputs.to_vec()));
        }
        let mut idx = 0;
        for (space, label) in self.output_spaces.iter().zip(outputs) {
            let pos = space
                .iter()
                .position(|v| v == label)
                .ok_or_else(|| Error::UnknownOutput(outputs.to_vec()))?;
            idx = idx * space.len() + pos;
        }
        Ok(idx)
    }

    /// `P(outputs | inputs)`.
    pub fn prob(&self, inputs: &[u32], outputs: &[i32]) -> Result<f64> {
        Ok(self.rows[self.input_index(inputs)?][self.output_index(outputs)?])
    }

    /// The output distribution for one joint input.
    pub fn row_dist(&self, inputs: &[u32]) -> Result<Dist<Vec<i32>>> {
        let idx = self.input_index(inputs)?;
        Dist::new(self.joint_outputs(), self.rows[idx].clone())
    }

    pub(crate) fn row(&self, input_index: usize) -> &[f64] {
        &self.rows[input_index]
    }

    /// Marginal over the listed parties' outputs, in the listed order.
    pub fn output_marginal(&self, inputs: &[u32], parties: &[usize]) -> Result<Dist<Vec<i32>>> {
        let weights = self.output_marginal_vector(inputs, parties)?;
        let spaces: Vec<Vec<i32>> = parties
            .iter()
            .map(|&p| self.output_spaces[p].clone())
            .collect();
        Dist::new(cartesian(&spaces), weights)
    }

    /// Single-party outcome marginal.
    pub fn party_marginal(&self, inputs: &[u32], party: usize) -> Result<Dist<i32>> {
        let weights = self.output_marginal_vector(inputs, &[party])?;
        Dist::new(self.output_spaces[party].clone(), weights)
    }

    fn output_marginal_vector(&self, inputs: &[u32], parties: &[usize]) -> Result<Vec<f64>> {
        for &p in parties {
            if p >= self.party_count() {
                return Err(Error::InvalidParameter(format!(
                    "party index {p} out of range"
                )));
            }
        }
        let row = &self.rows[self.input_index(inputs)?];
        let sizes: Vec<usize> = self.output_spaces.iter().map(Vec::len).collect();
        let cells: usize = parties.iter().map(|&p| sizes[p]).product();
        let mut out = vec![0.0; cells];
        for (joint_idx, &w) in row.iter().enumerate() {
            // Decode the joint output index into per-party positions.
            let mut rest = joint_idx;
            let mut positions = vec![0usize; sizes.len()];
            for p in (0..sizes.len()).rev() {
                positions[p] = rest % sizes[p];
                rest /= sizes[p];
            }
            let mut cell = 0;
            for &p in parties {
                cell = cell * sizes[p] + positions[p];
            }
            out[cell] += w;
        }
        Ok(out)
    }

    /// Scans every complement marginal for dependence on the remaining
    /// party's input. For each party `i`, each fixed choice of the other
    /// parties' inputs, and each outcome cell of the other parties, the
    /// marginal must not move as party `i`'s input varies; the violation is
    /// the largest deviation from the average over party `i`'s inputs.
    pub fn no_signalling_check(&self, tol: f64) -> Result<SignallingCheck> {
        let m = self.party_count();
        if m < 2 {
            return Err(Error::TooFewParties { min: 2, got: m });
        }
        let mut max_violation: f64 = 0.0;
        for i in 0..m {
            let others: Vec<usize> = (0..m).filter(|&k| k != i).collect();
            let other_spaces: Vec<Vec<u32>> = others
                .iter()
                .map(|&k| self.input_spaces[k].clone())
                .collect();
            for other_inputs in cartesian(&other_spaces) {
                let mut vectors = Vec::with_capacity(self.input_spaces[i].len());
                for &a_i in &self.input_spaces[i] {
                    let mut inputs = vec![0u32; m];
                    for (pos, &k) in others.iter().enumerate() {
                        inputs[k] = other_inputs[pos];
                    }
                    inputs[i] = a_i;
                    vectors.push(self.output_marginal_vector(&inputs, &others)?);
                }
                let cells = vectors[0].len();
                for c in 0..cells {
                    let mean: f64 =
                        vectors.iter().map(|v| v[c]).sum::<f64>() / vectors.len() as f64;
                    for v in &vectors {
                        max_violation = max_violation.max((v[c] - mean).abs());
                    }
                }
            }
        }
        Ok(SignallingCheck { max_violation, tol })
    }
}

/// Convenience wrapper returning `(passes, max_violation)`.
pub fn is_no_signalling(b: &ConditionalDist, tol: f64) -> Result<(bool, f64)> {
    let check = b.no_signalling_check(tol)?;
    Ok((check.passes(), check.max_violation))
}

/// One party's deterministic response table: output per own input, with no
/// access to the other parties' inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalStrategy {
    /// `responses[party][input_position]` is that party's outcome.
    pub responses: Vec<Vec<i32>>,
}

/// Deterministic product box induced by a local strategy.
pub fn local_strategy_box(
    input_spaces: &[Vec<u32>],
    output_spaces: &[Vec<i32>],
    strategy: &LocalStrategy,
) -> Result<ConditionalDist> {
    if strategy.responses.len() != input_spaces.len() {
        return Err(Error::PartyCountMismatch {
            expected: input_spaces.len(),
            got: strategy.responses.len(),
        });
    }
    for (party, responses) in strategy.responses.iter().enumerate() {
        if responses.len() != input_spaces[party].len() {
            return Err(Error::LengthMismatch {
                labels: input_spaces[party].len(),
                weights: responses.len(),
            });
        }
        for r in responses {
            if !output_spaces[party].contains(r) {
                return Err(Error::UnknownOutput(vec![*r]));
            }
        }
    }
    ConditionalDist::from_fn(
        input_spaces.to_vec(),
        output_spaces.to_vec(),
        |inputs, outputs| {
            let matches = inputs.iter().zip(outputs).enumerate().all(|(p, (a, x))| {
                let pos = input_spaces[p].iter().position(|v| v == a).unwrap();
                strategy.responses[p][pos] == *x
            });
            if matches {
                1.0
            } else {
                0.0
            }
        },
    )
}

/// Numerical witness that freely chosen inputs cannot signal: a hidden value
/// with local deterministic responses induces, for every hidden value and
/// for the mixture, a conditional distribution that passes the signalling
/// scan. Returns `true` when all induced boxes pass at `tol`.
pub fn free_inputs_imply_no_signalling_check(
    strategies: &[(f64, LocalStrategy)],
    input_spaces: &[Vec<u32>],
    output_spaces: &[Vec<i32>],
    tol: f64,
) -> Result<bool> {
    if strategies.is_empty() {
        return Err(Error::EmptySupport);
    }
    let mut boxes = Vec::with_capacity(strategies.len());
    for (weight, strategy) in strategies {
        if *weight < -COMPARISON_TOL {
            return Err(Error::ProbabilityOutOfRange(*weight));
        }
        boxes.push(local_strategy_box(input_spaces, output_spaces, strategy)?);
    }
    for b in &boxes {
        if !b.no_signalling_check(tol)?.passes() {
            return Ok(false);
        }
    }
    let parts: Vec<(f64, &ConditionalDist)> = strategies
        .iter()
        .map(|(w, _)| *w)
        .zip(boxes.iter())
        .collect();
    let mixture = ConditionalDist::mix(&parts)?;
    Ok(mixture.no_signalling_check(tol)?.passes())
}

/// A hidden-variable family: one box per hidden value `w`, together with
/// input-dependent weights `P(w | inputs)`.
///
/// The weights are conditional on the inputs because steering the input
/// choice is exactly the power a partially free source hands an adversary.
#[derive(Debug, Clone, PartialEq)]
pub struct WFamily {
    w_values: Vec<u32>,
    /// `weights[input_index][w_index]`, rows normalized.
    weights: Vec<Vec<f64>>,
    boxes: Vec<ConditionalDist>,
}

impl WFamily {
    /// Builds a family from parallel lists of hidden values and boxes plus a
    /// weight row per joint input (canonical input order of the boxes).
    pub fn new(
        w_values: Vec<u32>,
        weights: Vec<Vec<f64>>,
        boxes: Vec<ConditionalDist>,
    ) -> Result<Self> {
        if w_values.is_empty() || boxes.is_empty() {
            return Err(Error::EmptySupport);
        }
        if w_values.len() != boxes.len() {
            return Err(Error::LengthMismatch {
                labels: w_values.len(),
                weights: boxes.len(),
            });
        }
        for (i, w) in w_values.iter().enumerate() {
            if w_values[i + 1..].contains(w) {
                return Err(Error::DuplicateLabel);
            }
        }
        let first = &boxes[0];
        for b in &boxes[1..] {
            if b.input_spaces != first.input_spaces || b.output_spaces != first.output_spaces {
                return Err(Error::SupportMismatch);
            }
        }
        let n_inputs: usize = first.input_spaces.iter().map(Vec::len).product();
        if weights.len() != n_inputs {
            return Err(Error::LengthMismatch {
                labels: n_inputs,
                weights: weights.len(),
            });
        }
        for row in &weights {
            if row.len() != w_values.len() {
                return Err(Error::LengthMismatch {
                    labels: w_values.len(),
                    weights: row.len(),
                });
            }
            for &w in row {
                if !(-COMPARISON_TOL..=1.0 + COMPARISON_TOL).contains(&w) || w.is_nan() {
                    return Err(Error::ProbabilityOutOfRange(w));
                }
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > NORMALIZATION_TOL {
                return Err(Error::NotNormalized(sum));
            }
        }
        Ok(Self {
            w_values,
            weights,
            boxes,
        })
    }

    /// Family whose weights do not depend on the inputs.
    pub fn with_constant_weights(
        w_values: Vec<u32>,
        prior: Vec<f64>,
        boxes: Vec<ConditionalDist>,
    ) -> Result<Self> {
        let n_inputs: usize = boxes
            .first()
            .ok_or(Error::EmptySupport)?
            .input_spaces
            .iter()
            .map(Vec::len)
            .product();
        Self::new(w_values, vec![prior; n_inputs], boxes)
    }

    pub fn w_values(&self) -> &[u32] {
        &self.w_values
    }

    pub fn boxes(&self) -> &[ConditionalDist] {
        &self.boxes
    }

    pub fn box_at(&self, w_index: usize) -> &ConditionalDist {
        &self.boxes[w_index]
    }

    pub fn input_spaces(&self) -> &[Vec<u32>] {
        self.boxes[0].input_spaces()
    }

    pub fn output_spaces(&self) -> &[Vec<i32>] {
        self.boxes[0].output_spaces()
    }

    /// `P(w | inputs)` by hidden-value index.
    pub fn weight(&self, inputs: &[u32], w_index: usize) -> Result<f64> {
        let idx = self.boxes[0].input_index(inputs)?;
        Ok(self.weights[idx][w_index])
    }

    /// The weight row for one joint input, as a distribution over `w`.
    pub fn weight_dist(&self, inputs: &[u32]) -> Result<Dist<u32>> {
        let idx = self.boxes[0].input_index(inputs)?;
        Dist::new(self.w_values.clone(), self.weights[idx].clone())
    }

    /// The observed output distribution for one joint input, averaging the
    /// per-w rows with their input-conditional weights.
    pub fn average_row(&self, inputs: &[u32]) -> Result<Dist<Vec<i32>>> {
        let idx = self.boxes[0].input_index(inputs)?;
        let n_outputs = self.boxes[0].rows[0].len();
        let mut acc = vec![0.0; n_outputs];
        for (w_idx, b) in self.boxes.iter().enumerate() {
            let weight = self.weights[idx][w_idx];
            for (a, p) in acc.iter_mut().zip(&b.rows[idx]) {
                *a += weight * p;
            }
        }
        Dist::new(self.boxes[0].joint_outputs(), acc)
    }

    /// The full observed box, one averaged row per joint input.
    pub fn averaged_box(&self) -> Result<ConditionalDist> {
        let n_inputs = self.weights.len();
        let n_outputs = self.boxes[0].rows[0].len();
        let mut rows = vec![vec![0.0; n_outputs]; n_inputs];
        for (w_idx, b) in self.boxes.iter().enumerate() {
            for (input_idx, row) in rows.iter_mut().enumerate() {
                let weight = self.weights[input_idx][w_idx];
                for (a, p) in row.iter_mut().zip(&b.rows[input_idx]) {
                    *a += weight * p;
                }
            }
        }
        ConditionalDist::from_rows(
            self.boxes[0].input_spaces.clone(),
            self.boxes[0].output_spaces.clone(),
            rows,
        )
    }

    /// Errors with the offending hidden value if any member box signals.
    pub fn require_no_signalling(&self, tol: f64) -> Result<()> {
        for (w_idx, b) in self.boxes.iter().enumerate() {
            let check = b.no_signalling_check(tol)?;
            if !check.passes() {
                return Err(Error::SignallingBox {
                    w: self.w_values[w_idx],
                    violation: check.max_violation,
                });
            }
        }
        Ok(())
    }
}

/// Observed output distribution of a family at one joint input (the
/// weight-averaged row).
pub fn average_family(fam: &WFamily, inputs: &[u32]) -> Result<Dist<Vec<i32>>> {
    fam.average_row(inputs)
}

// Serialization. Boxes travel as {"inputs": [...], "outputs": [...],
// "table": {"a,b": [row...]}} with rows in canonical output order; table
// keys are the joint input labels joined by commas. Probabilities are
// accepted as JSON numbers or as decimal strings, and written as numbers.

#[derive(Serialize, Deserialize)]
struct BoxRepr {
    inputs: Vec<Vec<u32>>,
    outputs: Vec<Vec<i32>>,
    table: BTreeMap<String, Vec<NumberOrString>>,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum NumberOrString {
    Number(f64),
    Text(String),
}

impl NumberOrString {
    fn value(&self) -> std::result::Result<f64, String> {
        match self {
            NumberOrString::Number(x) => Ok(*x),
            NumberOrString::Text(s) => s
                .trim()
                .parse::<f64>()
                .map_err(|e| format!("bad probability string {s:?}: {e}")),
        }
    }
}

fn input_key(inputs: &[u32]) -> String {
    inputs
        .iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

impl Serialize for ConditionalDist {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let mut table = BTreeMap::new();
        for (idx, inputs) in self.joint_inputs().iter().enumerate() {
            table.insert(
                input_key(inputs),
                self.rows[idx]
                    .iter()
                    .map(|&w| NumberOrString::Number(w))
                    .collect(),
            );
        }
        BoxRepr {
            inputs: self.input_spaces.clone(),
            outputs: self.output_spaces.clone(),
            table,
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for ConditionalDist {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let repr = BoxRepr::deserialize(deserializer)?;
        let joint_inputs = cartesian(&repr.inputs);
        let mut rows = Vec::with_capacity(joint_inputs.len());
        for inputs in &joint_inputs {
            let key = input_key(inputs);
            let raw = repr
                .table
                .get(&key)
                .ok_or_else(|| D::Error::custom(format!("missing table row for inputs {key}")))?;
            let row: std::result::Result<Vec<f64>, String> =
                raw.iter().map(NumberOrString::value).collect();
            rows.push(row.map_err(D::Error::custom)?);
        }
        ConditionalDist::from_rows(repr.inputs, repr.outputs, rows)
            .map_err(|e| D::Error::custom(e.to_string()))
    }
}

#[derive(Serialize, Deserialize)]
struct WFamilyRepr {
    w_values: Vec<u32>,
    /// Keyed like a box table: joint input labels joined by commas.
    weights: BTreeMap<String, Vec<NumberOrString>>,
    /// Aligned with `w_values`.
    boxes: Vec<ConditionalDist>,
}

impl Serialize for WFamily {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let mut weights = BTreeMap::new();
        for (idx, inputs) in self.boxes[0].joint_inputs().iter().enumerate() {
            weights.insert(
                input_key(inputs),
                self.weights[idx]
                    .iter()
                    .map(|&w| NumberOrString::Number(w))
                    .collect(),
            );
        }
        WFamilyRepr {
            w_values: self.w_values.clone(),
            weights,
            boxes: self.boxes.clone(),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for WFamily {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let repr = WFamilyRepr::deserialize(deserializer)?;
        if repr.boxes.is_empty() {
            return Err(D::Error::custom("family has no boxes"));
        }
        let joint_inputs = repr.boxes[0].joint_inputs();
        let mut weights = Vec::with_capacity(joint_inputs.len());
        for inputs in &joint_inputs {
            let key = input_key(inputs);
            let raw = repr.weights.get(&key).ok_or_else(|| {
                D::Error::custom(format!("missing weight row for inputs {key}"))
            })?;
            let row: std::result::Result<Vec<f64>, String> =
                raw.iter().map(NumberOrString::value).collect();
            weights.push(row.map_err(D::Error::custom)?);
        }
        WFamily::new(repr.w_values, weights, repr.boxes)
            .map_err(|e| D::Error::custom(e.to_string()))
    }
}
