//! The chained-correlation certification protocol and its test harness.
//!
//! One run: draw `M` setting pairs from a partially free source, query the
//! device once per round, keep only rounds whose settings landed on a cycle
//! edge, abort if the kept count falls outside a size window, pick one kept
//! round with fresh source bits, then demand the correct relation on every
//! kept round (equal outcomes on interior edges, differing outcomes on the
//! wrap edge). The outcome of the picked round is the certified bit.
//!
//! Aborts are ordinary results; errors are reserved for devices or
//! parameters that break their declared contract.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;

use crate::attacks::DesignatedPairAttack;
use crate::chained::{quantum_chained_box, ChainedSettings};
use crate::dist::{epsilon_free_deficit, ConditionalDist, Dist};
use crate::sources::{bits_to_index, ceil_log2, SvSourceModel, SvStream};
use crate::{Error, Result, NORMALIZATION_TOL};

/// Protocol sizing: settings per side and round count.
///
/// The defaults tie the round count to the chain length so that the kept
/// set concentrates inside the size window while the per-round violation
/// probability shrinks faster than the kept count grows.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ProtocolParams {
    n: usize,
    m: usize,
}

impl ProtocolParams {
    /// Default sizing for a chain of `n` settings per side: `m` rounds with
    /// `m = round(n^(5/2))`. `n` must be a power of two at least 2 so that
    /// whole source bits address the settings.
    pub fn defaults(n: usize) -> Result<Self> {
        let m = (n as f64).powf(2.5).round() as usize;
        Self::with_rounds(n, m)
    }

    /// Explicit round count. Scaling claims hold at the default count;
    /// smaller counts are for quick experiments.
    pub fn with_rounds(n: usize, m: usize) -> Result<Self> {
        if n < 2 || !n.is_power_of_two() {
            return Err(Error::InvalidParameter(format!(
                "settings per side must be a power of two >= 2, got {n}"
            )));
        }
        if m == 0 {
            return Err(Error::InvalidParameter("round count must be positive".into()));
        }
        Ok(Self { n, m })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    /// Bits per setting: `log2(n)`.
    pub fn r(&self) -> usize {
        self.n.trailing_zeros() as usize
    }

    /// Lower edge of the kept-count window: `m / n`.
    pub fn s_min(&self) -> f64 {
        self.m as f64 / self.n as f64
    }

    /// Upper edge of the kept-count window: `m / n^(3/4)`.
    pub fn s_max(&self) -> f64 {
        self.m as f64 / (self.n as f64).powf(0.75)
    }

    /// Violation-scale reference `n^(-1/4)` used by the scaling analysis.
    pub fn i_star(&self) -> f64 {
        (self.n as f64).powf(-0.25)
    }

    /// Window membership; both edges are inclusive.
    pub fn window_contains(&self, kept: usize) -> bool {
        let s = kept as f64;
        s >= self.s_min() && s <= self.s_max()
    }
}

/// Why a run ended without a certified bit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AbortReason {
    /// Run completed and produced a bit.
    None,
    /// Kept-round count fell outside the size window.
    SizeWindow,
    /// Some kept round had the wrong outcome relation.
    CheckFailure,
}

impl std::fmt::Display for AbortReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            AbortReason::None => "none",
            AbortReason::SizeWindow => "size-window",
            AbortReason::CheckFailure => "check-failure",
        };
        f.write_str(s)
    }
}

/// One protocol round as recorded in the transcript.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RoundRecord {
    pub a: u32,
    pub b: u32,
    pub x: i32,
    pub y: i32,
    /// Whether the settings landed on a cycle edge.
    pub kept: bool,
    /// Whether the edge relation held; vacuously true for dropped rounds.
    pub check_ok: bool,
}

/// Complete outcome of one protocol run.
#[derive(Debug, Clone)]
pub struct ProtocolResult {
    pub aborted: bool,
    pub reason: AbortReason,
    /// Round index of the certified bit, present iff not aborted.
    pub final_index: Option<usize>,
    /// The certified outcome, present iff not aborted.
    pub final_bit: Option<i32>,
    /// Hidden value the run was executed under.
    pub w: u32,
    /// Kept-round count.
    pub s_size: usize,
    /// Failed checks among kept rounds, counted even when the size window
    /// already aborted the run (diagnostic, not protocol flow).
    pub violations: usize,
    pub transcript: Vec<RoundRecord>,
}

/// A device as the protocol sees it: a declared no-signalling box per
/// hidden value, sampled independently each round.
#[derive(Debug, Clone)]
pub struct DeviceModel {
    w_values: Vec<u32>,
    boxes: Vec<ConditionalDist>,
    settings: ChainedSettings,
    joint_outputs: Vec<Vec<i32>>,
}

impl DeviceModel {
    /// Registers a device, validating the chained layout and the
    /// no-signalling contract of every declared box.
    pub fn new(w_values: Vec<u32>, boxes: Vec<ConditionalDist>) -> Result<Self> {
        if w_values.is_empty() || w_values.len() != boxes.len() {
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
        let spaces = boxes[0].input_spaces();
        let settings = ChainedSettings::new(spaces[0].len())?;
        for (w_idx, b) in boxes.iter().enumerate() {
            if b.input_spaces() != settings.input_spaces().as_slice()
                || b.output_spaces() != settings.output_spaces().as_slice()
            {
                return Err(Error::InvalidParameter(
                    "device boxes must share one chained layout".into(),
                ));
            }
            let check = b.no_signalling_check(NORMALIZATION_TOL)?;
            if !check.passes() {
                return Err(Error::SignallingBox {
                    w: w_values[w_idx],
                    violation: check.max_violation,
                });
            }
        }
        let joint_outputs = boxes[0].joint_outputs();
        Ok(Self {
            w_values,
            boxes,
            settings,
            joint_outputs,
        })
    }

    pub fn n(&self) -> usize {
        self.settings.n()
    }

    pub fn settings(&self) -> &ChainedSettings {
        &self.settings
    }

    pub fn w_values(&self) -> &[u32] {
        &self.w_values
    }

    pub fn box_for(&self, w: u32) -> Result<&ConditionalDist> {
        let idx = self
            .w_values
            .iter()
            .position(|&v| v == w)
            .ok_or(Error::UnknownHiddenValue(w))?;
        Ok(&self.boxes[idx])
    }

    /// Samples one outcome pair for the given hidden value and settings.
    pub fn respond<R: Rng + ?Sized>(
        &self,
        w: u32,
        a: u32,
        b: u32,
        rng: &mut R,
    ) -> Result<(i32, i32)> {
        let device_box = self.box_for(w)?;
        let row = device_box.row(device_box.input_index(&[a, b])?);
        let mut u: f64 = rng.gen();
        let mut cell = row.len() - 1;
        for (i, &p) in row.iter().enumerate() {
            if u < p {
                cell = i;
                break;
            }
            u -= p;
        }
        let outputs = &self.joint_outputs[cell];
        Ok((outputs[0], outputs[1]))
    }
}

/// Honest device: the optimal quantum box, one trivial hidden value.
pub fn honest_quantum_device(n: usize) -> Result<DeviceModel> {
    let settings = ChainedSettings::new(n)?;
    DeviceModel::new(vec![0], vec![quantum_chained_box(&settings)?])
}

/// Classical device that always answers with equal uniform outcomes. It
/// passes every interior-edge check and fails every wrap-edge check, so it
/// survives only the runs whose kept set misses the wrap edge entirely.
pub fn all_equal_device(n: usize) -> Result<DeviceModel> {
    let settings = ChainedSettings::new(n)?;
    let b = ConditionalDist::from_fn(
        settings.input_spaces(),
        settings.output_spaces(),
        |_, outputs| {
            if outputs[0] == outputs[1] {
                0.5
            } else {
                0.0
            }
        },
    )?;
    DeviceModel::new(vec![0], vec![b])
}

/// The designated-pair attack packaged as a device: one hidden value per
/// cycle edge, each with its single-failure deterministic box.
pub fn attack_device(attack: &DesignatedPairAttack) -> Result<DeviceModel> {
    let boxes = attack
        .strategies()
        .iter()
        .map(|s| s.to_box(attack.settings()))
        .collect::<Result<_>>()?;
    DeviceModel::new((0..attack.pairs().len() as u32).collect(), boxes)
}

fn edge_check_ok(settings: &ChainedSettings, a: u32, b: u32, x: i32, y: i32) -> bool {
    if !settings.is_neighbour(a, b) {
        return true;
    }
    if (a, b) == settings.wrap_pair() {
        x != y
    } else {
        x == y
    }
}

/// Upper bound on rejection-sampling attempts when picking the final round;
/// each attempt succeeds with probability at least `|S| (1/2-e)^k > 0`, so
/// hitting this bound indicates a broken source rather than bad luck.
const MAX_PICK_ATTEMPTS: usize = 100_000;

/// Executes one protocol run under hidden value `w`.
///
/// Source-bit order is fixed: for each round in order, `r` bits choose the
/// first party's setting then `r` bits the second party's; after the size
/// window passes, a fresh-history stream from the same source model feeds
/// the final-round choice, `ceil(log2 |S|)` bits per rejection-sampling
/// attempt, most significant bit first. The round pick happens before the
/// edge checks, so its bits are consumed even by runs that then abort.
pub fn run_protocol<R: Rng>(
    params: &ProtocolParams,
    device: &DeviceModel,
    source: &SvSourceModel,
    w: u32,
    rng: &mut R,
) -> Result<ProtocolResult> {
    if device.n() != params.n() {
        return Err(Error::InvalidParameter(format!(
            "device has {} settings per side, protocol expects {}",
            device.n(),
            params.n()
        )));
    }
    device.box_for(w)?;
    let r = params.r();

    // Phase 1: all setting bits, in the documented order.
    let mut pairs = Vec::with_capacity(params.m());
    {
        let mut stream = SvStream::new(source.clone(), &mut *rng);
        for _ in 0..params.m() {
            let a_bits = stream.take_bits(r)?;
            let b_bits = stream.take_bits(r)?;
            let a = 2 * bits_to_index(&a_bits);
            let b = 2 * bits_to_index(&b_bits) + 1;
            pairs.push((a, b));
        }
    }

    // Phase 2: query the device round by round.
    let settings = *device.settings();
    let mut transcript = Vec::with_capacity(params.m());
    let mut kept_rounds = Vec::new();
    for (q, &(a, b)) in pairs.iter().enumerate() {
        let (x, y) = device.respond(w, a, b, rng)?;
        let kept = settings.is_neighbour(a, b);
        let check_ok = edge_check_ok(&settings, a, b, x, y);
        if kept {
            kept_rounds.push(q);
        }
        transcript.push(RoundRecord {
            a,
            b,
            x,
            y,
            kept,
            check_ok,
        });
    }
    let s_size = kept_rounds.len();
    let violations = kept_rounds
        .iter()
        .filter(|&&q| !transcript[q].check_ok)
        .count();

    if !params.window_contains(s_size) {
        return Ok(ProtocolResult {
            aborted: true,
            reason: AbortReason::SizeWindow,
            final_index: None,
            final_bit: None,
            w,
            s_size,
            violations,
            transcript,
        });
    }

    // Phase 3: pick the final round with fresh-history source bits.
    let f = {
        let mut chooser = SvStream::new(source.clone(), &mut *rng);
        let k = ceil_log2(s_size);
        let mut attempts = 0;
        loop {
            let idx = bits_to_index(&chooser.take_bits(k)?) as usize;
            if idx < s_size {
                break kept_rounds[idx];
            }
            attempts += 1;
            if attempts >= MAX_PICK_ATTEMPTS {
                return Err(Error::InvalidParameter(
                    "final-round choice failed to terminate".into(),
                ));
            }
        }
    };

    if violations > 0 {
        return Ok(ProtocolResult {
            aborted: true,
            reason: AbortReason::CheckFailure,
            final_index: None,
            final_bit: None,
            w,
            s_size,
            violations,
            transcript,
        });
    }

    let final_bit = transcript[f].x;
    Ok(ProtocolResult {
        aborted: false,
        reason: AbortReason::None,
        final_index: Some(f),
        final_bit: Some(final_bit),
        w,
        s_size,
        violations,
        transcript,
    })
}

/// How the hidden value and the source are chosen for each trial.
#[derive(Debug, Clone)]
pub enum Scenario {
    /// Every trial runs under the same hidden value and source.
    Fixed { w: u32, source: SvSourceModel },
    /// The hidden value is drawn uniformly from the device alphabet each
    /// trial; entry `k` of `sources` is used with the device's `k`-th
    /// hidden value.
    UniformW { sources: Vec<SvSourceModel> },
}

impl Scenario {
    fn draw<R: Rng>(&self, device: &DeviceModel, rng: &mut R) -> Result<(u32, SvSourceModel)> {
        match self {
            Scenario::Fixed { w, source } => Ok((*w, source.clone())),
            Scenario::UniformW { sources } => {
                if sources.len() != device.w_values().len() {
                    return Err(Error::LengthMismatch {
                        labels: device.w_values().len(),
                        weights: sources.len(),
                    });
                }
                let k = rng.gen_range(0..sources.len());
                Ok((device.w_values()[k], sources[k].clone()))
            }
        }
    }
}

/// Scenario for the designated-pair attack: uniform edge choice, each with
/// its away-steering source.
pub fn attack_scenario(attack: &DesignatedPairAttack) -> Result<Scenario> {
    let sources = (0..attack.pairs().len())
        .map(|k| attack.source_model(k))
        .collect::<Result<_>>()?;
    Ok(Scenario::UniformW { sources })
}

/// Per-trial summary without the transcript.
#[derive(Debug, Clone, Copy)]
pub struct TrialSummary {
    pub trial: usize,
    pub w: u32,
    pub aborted: bool,
    pub reason: AbortReason,
    pub s_size: usize,
    pub violations: usize,
    pub final_bit: Option<i32>,
}

/// Runs independent trials in parallel, one RNG stream per trial derived
/// from the master seed, and returns summaries in trial order.
pub fn run_trials(
    params: &ProtocolParams,
    device: &DeviceModel,
    scenario: &Scenario,
    trials: usize,
    seed: u64,
) -> Result<Vec<TrialSummary>> {
    (0..trials)
        .into_par_iter()
        .map(|trial| {
            let mut rng = ChaCha12Rng::seed_from_u64(seed);
            rng.set_stream(trial as u64);
            let (w, source) = scenario.draw(device, &mut rng)?;
            let result = run_protocol(params, device, &source, w, &mut rng)?;
            Ok(TrialSummary {
                trial,
                w,
                aborted: result.aborted,
                reason: result.reason,
                s_size: result.s_size,
                violations: result.violations,
                final_bit: result.final_bit,
            })
        })
        .collect()
}

/// Abort-rate estimate with a 95% Wilson interval.
#[derive(Debug, Clone, Copy)]
pub struct AbortRateEstimate {
    pub rate: f64,
    pub wilson_low: f64,
    pub wilson_high: f64,
    pub aborts: usize,
    pub trials: usize,
}

fn wilson_interval(successes: usize, trials: usize) -> (f64, f64) {
    let z = 1.959963984540054;
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let centre = (p + z2 / (2.0 * n)) / denom;
    let half = (z / denom) * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

/// Fraction of aborted runs over at least 100 trials.
pub fn estimate_abort_rate(
    params: &ProtocolParams,
    device: &DeviceModel,
    scenario: &Scenario,
    trials: usize,
    seed: u64,
) -> Result<AbortRateEstimate> {
    if trials < 100 {
        return Err(Error::TooFewTrials {
            min: 100,
            got: trials,
        });
    }
    let summaries = run_trials(params, device, scenario, trials, seed)?;
    let aborts = summaries.iter().filter(|t| t.aborted).count();
    let (lo, hi) = wilson_interval(aborts, trials);
    Ok(AbortRateEstimate {
        rate: aborts as f64 / trials as f64,
        wilson_low: lo,
        wilson_high: hi,
        aborts,
        trials,
    })
}

/// Exponent governing how the expected number of detectable deviations
/// scales with the chain length at the default round count:
/// `-(7/2) log2(1/2 + e) + 2 log2(1/2 - e) - 5/4`. Positive means the
/// detection signal grows as chains lengthen; the sign flips near 0.0158.
pub fn failure_exponent(epsilon: f64) -> Result<f64> {
    if !(0.0..0.5).contains(&epsilon) {
        return Err(Error::EpsilonOutOfRange(epsilon));
    }
    Ok(-3.5 * (0.5 + epsilon).log2() + 2.0 * (0.5 - epsilon).log2() - 1.25)
}

/// One row of the detection-scaling table.
#[derive(Debug, Clone, Copy)]
pub struct ExponentScanRow {
    pub n: usize,
    pub m: usize,
    /// The scaling expression evaluated at this chain length.
    pub value: f64,
    pub exponent: f64,
    pub positive: bool,
}

/// Evaluates the detection-count scaling expression
/// `(m/n)^(-log2(1/2+e)) * n^(-1 - 2 log2(1/2+e) + 2 log2(1/2-e)) * i_star`
/// at the default sizing for each chain length.
pub fn failure_exponent_scan(epsilon: f64, n_list: &[usize]) -> Result<Vec<ExponentScanRow>> {
    if !(0.0..=0.1).contains(&epsilon) {
        return Err(Error::InvalidParameter(format!(
            "scan is calibrated for epsilon in [0, 0.1], got {epsilon}"
        )));
    }
    let exponent = failure_exponent(epsilon)?;
    let lp = (0.5 + epsilon).log2();
    let lm = (0.5 - epsilon).log2();
    n_list
        .iter()
        .map(|&n| {
            let params = ProtocolParams::defaults(n)?;
            let nf = n as f64;
            let value = (params.m() as f64 / nf).powf(-lp)
                * nf.powf(-1.0 - 2.0 * lp + 2.0 * lm)
                * params.i_star();
            Ok(ExponentScanRow {
                n,
                m: params.m(),
                value,
                exponent,
                positive: exponent > 0.0,
            })
        })
        .collect()
}

/// Bisects the failure exponent's sign change inside `[lo, hi]`.
pub fn exponent_sign_change(lo: f64, hi: f64) -> Result<f64> {
    let (mut lo, mut hi) = (lo, hi);
    let f_lo = failure_exponent(lo)?;
    let f_hi = failure_exponent(hi)?;
    if f_lo.signum() == f_hi.signum() {
        return Err(Error::InvalidParameter(
            "exponent does not change sign on the given bracket".into(),
        ));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let f_mid = failure_exponent(mid)?;
        if f_mid.signum() == f_lo.signum() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Empirical freedom of the certified bit relative to the hidden value.
#[derive(Debug, Clone, Copy)]
pub struct FreedomEstimate {
    /// Distance of the accepted-run (bit, hidden value) joint from the
    /// product of a uniform bit with the hidden-value marginal.
    pub deficit: f64,
    /// Order-of-magnitude sampling error for the plug-in estimate.
    pub sigma: f64,
    pub accepted: usize,
    pub trials: usize,
}

/// Estimates the certified bit's freedom deficit across accepted runs.
pub fn estimate_final_bit_freedom(
    params: &ProtocolParams,
    device: &DeviceModel,
    scenario: &Scenario,
    trials: usize,
    seed: u64,
) -> Result<FreedomEstimate> {
    let summaries = run_trials(params, device, scenario, trials, seed)?;
    let accepted: Vec<&TrialSummary> = summaries.iter().filter(|t| !t.aborted).collect();
    if accepted.is_empty() {
        return Err(Error::NoAcceptedRuns(trials));
    }
    let mut support = Vec::new();
    let mut counts = Vec::new();
    for &x in &[1i32, -1] {
        for &w in device.w_values() {
            support.push((x, w));
            counts.push(
                accepted
                    .iter()
                    .filter(|t| t.final_bit == Some(x) && t.w == w)
                    .count() as f64,
            );
        }
    }
    let total = accepted.len() as f64;
    let weights: Vec<f64> = counts.iter().map(|c| c / total).collect();
    let joint = Dist::new(support, weights)?;
    let deficit = epsilon_free_deficit(&joint)?;
    let cells = 2.0 * device.w_values().len() as f64;
    Ok(FreedomEstimate {
        deficit,
        sigma: (cells / (4.0 * total)).sqrt(),
        accepted: accepted.len(),
        trials,
    })
}

/// One chain length's honest violation statistics.
#[derive(Debug, Clone, Copy)]
pub struct TrendRow {
    pub n: usize,
    pub m: usize,
    pub trials: usize,
    /// Mean failed checks per run, counted on all runs.
    pub mean_violations: f64,
    /// Expected value for the honest quantum device with a fair source:
    /// `(2m/n) sin^2(pi/4n)`.
    pub expected: f64,
}

/// Measures how honest violation counts fall as the chain grows; the
/// expected column shrinks like `n^(-1/2)` at the default sizing.
pub fn violation_trend(n_list: &[usize], trials: usize, seed: u64) -> Result<Vec<TrendRow>> {
    use crate::sources::BiasRule;
    n_list
        .iter()
        .map(|&n| {
            let params = ProtocolParams::defaults(n)?;
            let device = honest_quantum_device(n)?;
            let source = SvSourceModel::new(0.0, BiasRule::Unbiased)?;
            let scenario = Scenario::Fixed { w: 0, source };
            let summaries = run_trials(&params, &device, &scenario, trials, seed)?;
            let mean = summaries.iter().map(|t| t.violations as f64).sum::<f64>()
                / trials as f64;
            let nf = n as f64;
            let expected = 2.0 * params.m() as f64 / nf
                * (std::f64::consts::PI / (4.0 * nf)).sin().powi(2);
            Ok(TrendRow {
                n,
                m: params.m(),
                trials,
                mean_violations: mean,
                expected,
            })
        })
        .collect()
}

/// Result of the sampled-versus-declared device screen.
#[derive(Debug, Clone, Copy)]
pub struct DeviceAuditReport {
    /// Largest standardized deviation of an outcome-cell count from the
    /// declared probability, across all setting pairs.
    pub max_abs_z: f64,
    /// True when any cell deviates beyond four standard errors.
    pub flagged: bool,
    pub rounds_per_pair: usize,
}

/// Samples every setting pair and screens outcome frequencies against a
/// declared box, which need not be the one the device actually samples.
/// An honest self-audit is flagged with probability well under a percent;
/// a mislabeled device lights up quickly.
pub fn audit_device<R: Rng>(
    device: &DeviceModel,
    w: u32,
    declared: &ConditionalDist,
    rounds_per_pair: usize,
    rng: &mut R,
) -> Result<DeviceAuditReport> {
    if rounds_per_pair < 100 {
        return Err(Error::TooFewTrials {
            min: 100,
            got: rounds_per_pair,
        });
    }
    device.box_for(w)?;
    if declared.input_spaces() != device.settings().input_spaces().as_slice()
        || declared.output_spaces() != device.settings().output_spaces().as_slice()
    {
        return Err(Error::InvalidParameter(
            "declared box must share the device layout".into(),
        ));
    }
    let joint_outputs = declared.joint_outputs();
    let mut max_abs_z: f64 = 0.0;
    for a in device.settings().a_values() {
        for b in device.settings().b_values() {
            let mut counts = vec![0usize; joint_outputs.len()];
            for _ in 0..rounds_per_pair {
                let (x, y) = device.respond(w, a, b, rng)?;
                let cell = declared.output_index(&[x, y])?;
                counts[cell] += 1;
            }
            for (cell, outputs) in joint_outputs.iter().enumerate() {
                let p = declared.prob(&[a, b], outputs)?;
                let nf = rounds_per_pair as f64;
                let observed = counts[cell] as f64;
                if p <= 0.0 {
                    if counts[cell] > 0 {
                        max_abs_z = f64::INFINITY;
                    }
                    continue;
                }
                let sd = (nf * p * (1.0 - p)).sqrt().max(f64::MIN_POSITIVE);
                max_abs_z = max_abs_z.max((observed - nf * p).abs() / sd);
            }
        }
    }
    Ok(DeviceAuditReport {
        max_abs_z,
        flagged: max_abs_z > 4.0,
        rounds_per_pair,
    })
}
