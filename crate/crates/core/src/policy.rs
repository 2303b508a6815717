//! Index-based threshold policies.
//!
//! At each ACK time the scheduler knows the current age `δ = Δ(A_i)` and the
//! channel state `c` of the epoch that just ended. It waits until the index
//!
//! ```text
//! γ(δ, c) = inf_{ν ≥ 1} (1/ν) Σ_{k<ν} E[h(δ + T' + k) | c]
//! ```
//!
//! reaches the threshold `β`, then submits buffer position `ψ(c)`. The
//! threshold for a fixed mapping `ψ` is the unique root of the epoch cost
//! gap `E[epoch cost] - β E[epoch length]`, and the best mapping is found by
//! exhaustive enumeration.

use crate::channel::ChannelModel;
use crate::error_model::ErrorCurve;
use rayon::prelude::*;
use std::io::{self, Write};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use thiserror::Error;

/// Largest `B^C` that `optimize_mapping` will enumerate.
pub const MAX_MAPPINGS: usize = 1_000_000;
const MAX_BISECTION_ITERS: usize = 200;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PolicyError {
    #[error("buffer size must be at least 1")]
    ZeroBuffer,
    #[error("mapping covers {got} states, channel has {expected}")]
    MappingStates { got: usize, expected: usize },
    #[error("mapping sends state {state} to position {position}, outside a buffer of size {buffer_size}")]
    MappingPosition {
        state: usize,
        position: usize,
        buffer_size: usize,
    },
    #[error("nu_max must be at least 1")]
    ZeroNuMax,
    #[error("tolerance must be positive and finite, got {0}")]
    Tolerance(f64),
    #[error("waiting from age {delta} in state {state} never reaches threshold {threshold} within {cap} slots; delta_max is too small for this threshold")]
    WaitCapExceeded {
        delta: usize,
        state: usize,
        threshold: f64,
        cap: usize,
    },
    #[error("bisection bracket [{lo}, {hi}] fails the sign condition (gap {gap_lo} at lo, {gap_hi} at hi)")]
    BracketSign {
        lo: f64,
        hi: f64,
        gap_lo: f64,
        gap_hi: f64,
    },
    #[error("optimal cost is approached only by waiting forever (index tail {tail}); extend delta_max")]
    InfimumNotAttained { tail: f64 },
    #[error("{count} buffer mappings exceed the enumeration limit {limit}")]
    EnumerationTooLarge { count: u128, limit: usize },
}

/// `ψ`: channel state of the finished epoch -> buffer position to submit next.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BufferMapping {
    positions: Vec<usize>,
    buffer_size: usize,
}

impl BufferMapping {
    pub fn new(positions: Vec<usize>, buffer_size: usize) -> Result<Self, PolicyError> {
        if buffer_size == 0 {
            return Err(PolicyError::ZeroBuffer);
        }
        if let Some(state) = positions.iter().position(|&b| b >= buffer_size) {
            return Err(PolicyError::MappingPosition {
                state,
                position: positions[state],
                buffer_size,
            });
        }
        Ok(Self {
            positions,
            buffer_size,
        })
    }

    /// Always submit the freshest sample.
    pub fn freshest(states: usize, buffer_size: usize) -> Result<Self, PolicyError> {
        Self::new(vec![0; states], buffer_size)
    }

    /// The `rank`-th mapping in lexicographic order of `(ψ(0), ..., ψ(C-1))`.
    pub fn from_rank(rank: usize, states: usize, buffer_size: usize) -> Self {
        let mut positions = vec![0; states];
        let mut r = rank;
        for slot in positions.iter_mut().rev() {
            *slot = r % buffer_size;
            r /= buffer_size;
        }
        Self {
            positions,
            buffer_size,
        }
    }

    #[inline]
    pub fn position(&self, state: usize) -> usize {
        self.positions[state]
    }

    pub fn positions(&self) -> &[usize] {
        &self.positions
    }

    pub fn buffer_size(&self) -> usize {
        self.buffer_size
    }

    pub fn states(&self) -> usize {
        self.positions.len()
    }

    fn check_states(&self, states: usize) -> Result<(), PolicyError> {
        if self.positions.len() != states {
            return Err(PolicyError::MappingStates {
                got: self.positions.len(),
                expected: states,
            });
        }
        Ok(())
    }
}

/// Memoized `γ(δ, c)` for `δ ∈ [1, δ_max]`; constant beyond.
#[derive(Debug, Clone, PartialEq)]
pub struct IndexTable {
    delta_max: usize,
    per_state: Vec<Vec<f64>>,
}

impl IndexTable {
    #[inline]
    pub fn get(&self, delta: usize, state: usize) -> f64 {
        let row = &self.per_state[state];
        row[delta.clamp(1, self.delta_max) - 1]
    }

    pub fn delta_max(&self) -> usize {
        self.delta_max
    }

    pub fn states(&self) -> usize {
        self.per_state.len()
    }

    /// `lim_{δ→∞} γ(δ, c)`.
    pub fn tail(&self, state: usize) -> f64 {
        self.get(self.delta_max, state)
    }

    pub fn write_csv<W: Write>(&self, out: &mut W) -> io::Result<()> {
        writeln!(out, "delta,state,gamma")?;
        for d in 1..=self.delta_max {
            for c in 0..self.states() {
                writeln!(out, "{},{},{}", d, c, self.get(d, c))?;
            }
        }
        Ok(())
    }
}

/// Smallest `k ≥ 0` with `γ(δ + k, c) ≥ β`.
pub fn waiting_time(
    index: &IndexTable,
    delta: usize,
    state: usize,
    threshold: f64,
) -> Result<usize, PolicyError> {
    let cap = 10 * index.delta_max();
    for k in 0..=cap {
        if index.get(delta + k, state) >= threshold {
            return Ok(k);
        }
        // Past the table the index is constant: nothing changes by waiting longer.
        if delta + k >= index.delta_max() {
            break;
        }
    }
    Err(PolicyError::WaitCapExceeded {
        delta,
        state,
        threshold,
        cap,
    })
}

/// A mapping, a threshold and the index the threshold is compared against.
#[derive(Debug, Clone)]
pub struct ThresholdPolicy {
    mapping: BufferMapping,
    threshold: f64,
    index: Arc<IndexTable>,
}

impl ThresholdPolicy {
    pub fn new(mapping: BufferMapping, threshold: f64, index: Arc<IndexTable>) -> Self {
        Self {
            mapping,
            threshold,
            index,
        }
    }

    pub fn mapping(&self) -> &BufferMapping {
        &self.mapping
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn index(&self) -> &IndexTable {
        &self.index
    }

    #[inline]
    pub fn should_submit(&self, delta: usize, state: usize) -> bool {
        self.index.get(delta, state) >= self.threshold
    }

    pub fn waiting_time(&self, delta: usize, state: usize) -> Result<usize, PolicyError> {
        waiting_time(&self.index, delta, state, self.threshold)
    }
}

/// Stationary expectations over one epoch `[A_i, A_{i+1})`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochMoments {
    pub cost: f64,
    pub length: f64,
}

impl EpochMoments {
    pub fn average_cost(&self) -> f64 {
        self.cost / self.length
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThresholdSolution {
    pub beta: f64,
    pub iterations: usize,
    pub bracket_width: f64,
}

#[derive(Debug, Clone)]
pub struct MappingSolution {
    pub mapping: BufferMapping,
    pub h_opt: f64,
    /// Every enumerated mapping with its threshold, in lexicographic order.
    pub evaluated: Vec<(BufferMapping, f64)>,
}

/// Error curve and channel, with the expected-error and index tables
/// derived from them.
#[derive(Debug)]
pub struct PolicyContext {
    curve: ErrorCurve,
    channel: ChannelModel,
    nu_max: usize,
    // expected[c][m - 1] = E[h(m + T') | c] for m ∈ [1, δ_max]
    expected: Vec<Vec<f64>>,
    index: Arc<IndexTable>,
    cap_raises: usize,
    extension_hits: AtomicU64,
}

impl PolicyContext {
    /// Uses `ν_max = δ_max`.
    pub fn new(curve: ErrorCurve, channel: ChannelModel) -> Self {
        let nu_max = curve.delta_max();
        Self::with_nu_max(curve, channel, nu_max).expect("δ_max ≥ 1")
    }

    pub fn with_nu_max(
        curve: ErrorCurve,
        channel: ChannelModel,
        nu_max: usize,
    ) -> Result<Self, PolicyError> {
        if nu_max == 0 {
            return Err(PolicyError::ZeroNuMax);
        }
        let dmax = curve.delta_max();
        let expected: Vec<Vec<f64>> = (0..channel.states())
            .map(|c| {
                (1..=dmax)
                    .map(|m| expected_error(&curve, &channel, m, c))
                    .collect()
            })
            .collect();
        let mut cap_raises = 0;
        let per_state = expected
            .iter()
            .map(|e| {
                (1..=dmax)
                    .map(|d| window_infimum(e, d, nu_max, &mut cap_raises))
                    .collect()
            })
            .collect();
        if cap_raises > 0 {
            log::warn!("index window cap nu_max={nu_max} was raised {cap_raises} times");
        }
        Ok(Self {
            curve,
            channel,
            nu_max,
            expected,
            index: Arc::new(IndexTable {
                delta_max: dmax,
                per_state,
            }),
            cap_raises,
            extension_hits: AtomicU64::new(0),
        })
    }

    pub fn curve(&self) -> &ErrorCurve {
        &self.curve
    }

    pub fn channel(&self) -> &ChannelModel {
        &self.channel
    }

    pub fn nu_max(&self) -> usize {
        self.nu_max
    }

    /// How often the `ν_max` window had to be widened.
    pub fn cap_raises(&self) -> usize {
        self.cap_raises
    }

    /// Calls of [`Self::expected_future_error`] that read `h` past `δ_max`.
    pub fn extension_hits(&self) -> u64 {
        self.extension_hits.load(Ordering::Relaxed)
    }

    pub fn index_table(&self) -> &Arc<IndexTable> {
        &self.index
    }

    /// `E[h(δ + T_{i+1} + k) | c_i = c]`.
    pub fn expected_future_error(&self, delta: usize, state: usize, k: usize) -> f64 {
        let m = delta + k;
        if m + self.channel.max_transmission() as usize > self.curve.delta_max() {
            self.extension_hits.fetch_add(1, Ordering::Relaxed);
        }
        if m <= self.curve.delta_max() {
            self.expected[state][m - 1]
        } else {
            expected_error(&self.curve, &self.channel, m, state)
        }
    }

    #[inline]
    pub fn index(&self, delta: usize, state: usize) -> f64 {
        self.index.get(delta, state)
    }

    pub fn waiting_time(&self, delta: usize, state: usize, threshold: f64) -> Result<usize, PolicyError> {
        waiting_time(&self.index, delta, state, threshold)
    }

    /// Enumerates one stationary epoch exactly: `c_{i-1} ~ π`, `c_i`, `T_i`,
    /// `F_i`, then `c_{i+1}`, `T_{i+1}`, `F_{i+1}`. The epoch starts at age
    /// `ψ(c_{i-1}) + T_i + F_i`, waits `wait(δ, c_i)` slots, and pays
    /// `Σ_{k<τ+T_{i+1}} h(δ+k) + Σ_{k<F_{i+1}} h(ψ(c_i) + T_{i+1} + k)`.
    ///
    /// Returns `None` if some reachable decision state waits forever.
    pub fn epoch_moments<W>(&self, mapping: &BufferMapping, mut wait: W) -> Option<EpochMoments>
    where
        W: FnMut(usize, usize) -> Option<usize>,
    {
        let ch = &self.channel;
        let p = ch.transition();
        let pi = ch.stationary_distribution();
        let (mut cost, mut length) = (0.0, 0.0);
        for (c_prev, &w_prev) in pi.iter().enumerate() {
            for (c_cur, &p_cur) in p[c_prev].iter().enumerate() {
                if p_cur == 0.0 {
                    continue;
                }
                for (t_cur, pt) in ch.transmission(c_cur).iter() {
                    for (f_cur, pf) in ch.feedback(c_cur).iter() {
                        let w_state = w_prev * p_cur * pt * pf;
                        let delta = mapping.position(c_prev) + (t_cur + f_cur) as usize;
                        let tau = wait(delta, c_cur)?;
                        let b_next = mapping.position(c_cur);
                        for (c_next, &p_next) in p[c_cur].iter().enumerate() {
                            if p_next == 0.0 {
                                continue;
                            }
                            for (t, pt2) in ch.transmission(c_next).iter() {
                                for (f, pf2) in ch.feedback(c_next).iter() {
                                    let w = w_state * p_next * pt2 * pf2;
                                    let (t, f) = (t as usize, f as usize);
                                    cost += w
                                        * (self.curve.segment_sum(delta, tau + t)
                                            + self.curve.segment_sum(b_next + t, f));
                                    length += w * (tau + t + f) as f64;
                                }
                            }
                        }
                    }
                }
            }
        }
        Some(EpochMoments { cost, length })
    }

    /// `E[epoch cost] - β E[epoch length]` under the threshold rule at `β`.
    ///
    /// When `β` exceeds what the index can ever reach from some decision
    /// state, the infimum over waiting times diverges and this is `-∞`.
    pub fn epoch_cost_gap(&self, beta: f64, mapping: &BufferMapping) -> f64 {
        match self.epoch_moments(mapping, |d, c| self.waiting_time(d, c, beta).ok()) {
            Some(m) => m.cost - beta * m.length,
            None => f64::NEG_INFINITY,
        }
    }

    /// Bisection for the root of [`Self::epoch_cost_gap`] on `[min h, max h]`.
    ///
    /// `tol` defaults to `1e-9 (max h - min h)`.
    pub fn solve_threshold(
        &self,
        mapping: &BufferMapping,
        tol: Option<f64>,
    ) -> Result<ThresholdSolution, PolicyError> {
        mapping.check_states(self.channel.states())?;
        let (mut lo, mut hi) = (self.curve.min(), self.curve.max());
        let range = hi - lo;
        if range == 0.0 {
            return Ok(ThresholdSolution {
                beta: lo,
                iterations: 0,
                bracket_width: 0.0,
            });
        }
        let tol = tol.unwrap_or(1e-9 * range);
        if !(tol.is_finite() && tol > 0.0) {
            return Err(PolicyError::Tolerance(tol));
        }
        let gap_lo = self.epoch_cost_gap(lo, mapping);
        let gap_hi = self.epoch_cost_gap(hi, mapping);
        if gap_lo < 0.0 || gap_hi > 0.0 {
            return Err(PolicyError::BracketSign {
                lo,
                hi,
                gap_lo,
                gap_hi,
            });
        }
        let reachable_tail = (0..self.channel.states())
            .map(|c| self.index.tail(c))
            .fold(f64::INFINITY, f64::min);
        if reachable_tail < hi && self.epoch_cost_gap(reachable_tail, mapping) > 0.0 {
            return Err(PolicyError::InfimumNotAttained {
                tail: reachable_tail,
            });
        }

        let mut iterations = 0;
        while hi - lo >= tol && iterations < MAX_BISECTION_ITERS {
            let mid = 0.5 * (lo + hi);
            let g = self.epoch_cost_gap(mid, mapping);
            iterations += 1;
            if g > 0.0 {
                lo = mid;
            } else if g < 0.0 {
                hi = mid;
            } else {
                lo = mid;
                hi = mid;
            }
        }
        Ok(ThresholdSolution {
            beta: 0.5 * (lo + hi),
            iterations,
            bracket_width: hi - lo,
        })
    }

    /// Solves every mapping `C -> {0..B-1}` and keeps the smallest threshold.
    /// Thresholds within `tol` of each other tie; the lexicographically
    /// first mapping wins.
    pub fn optimize_mapping(
        &self,
        buffer_size: usize,
        tol: Option<f64>,
    ) -> Result<MappingSolution, PolicyError> {
        if buffer_size == 0 {
            return Err(PolicyError::ZeroBuffer);
        }
        let states = self.channel.states();
        let count = (buffer_size as u128).pow(states as u32);
        if count > MAX_MAPPINGS as u128 {
            return Err(PolicyError::EnumerationTooLarge {
                count,
                limit: MAX_MAPPINGS,
            });
        }
        let tie = tol.unwrap_or(1e-9 * (self.curve.max() - self.curve.min()));
        let evaluated = (0..count as usize)
            .into_par_iter()
            .map(|rank| {
                let mapping = BufferMapping::from_rank(rank, states, buffer_size);
                self.solve_threshold(&mapping, tol).map(|s| (mapping, s.beta))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let mut best = 0;
        for (i, (_, beta)) in evaluated.iter().enumerate().skip(1) {
            if *beta < evaluated[best].1 - tie {
                best = i;
            }
        }
        Ok(MappingSolution {
            mapping: evaluated[best].0.clone(),
            h_opt: evaluated[best].1,
            evaluated,
        })
    }

    /// Exact long-run average cost of `policy` when run on this context's
    /// channel. The policy's index may come from a different channel.
    pub fn policy_cost(&self, policy: &ThresholdPolicy) -> Result<f64, PolicyError> {
        policy.mapping.check_states(self.channel.states())?;
        let mut failure = None;
        let moments = self.epoch_moments(&policy.mapping, |d, c| match policy.waiting_time(d, c) {
            Ok(k) => Some(k),
            Err(e) => {
                failure = Some(e);
                None
            }
        });
        match moments {
            Some(m) => Ok(m.average_cost()),
            None => Err(failure.expect("failure recorded")),
        }
    }

    /// Exact long-run average cost of always submitting the freshest sample
    /// right after each ACK.
    pub fn zero_wait_cost(&self) -> f64 {
        let fresh = BufferMapping::freshest(self.channel.states(), 1).expect("B = 1");
        self.epoch_moments(&fresh, |_, _| Some(0))
            .expect("zero wait is always finite")
            .average_cost()
    }
}

fn expected_error(curve: &ErrorCurve, channel: &ChannelModel, m: usize, state: usize) -> f64 {
    let row = &channel.transition()[state];
    let mut total = 0.0;
    for (c_next, &p) in row.iter().enumerate() {
        if p == 0.0 {
            continue;
        }
        let inner: f64 = channel
            .transmission(c_next)
            .iter()
            .map(|(q, pq)| pq * curve.get(m + q as usize))
            .sum();
        total += p * inner;
    }
    total
}

/// `inf_{ν≥1}` of the running window averages of `e` starting at `delta`.
///
/// Averages are accumulated as `e_δ + (Σ (e_k - e_δ)) / ν`, so a
/// nondecreasing `e` yields exactly `e_δ`. Once the window reaches the held
/// tail every later average moves monotonically toward the tail value, so
/// the infimum is the smaller of the prefix minimum and that limit.
fn window_infimum(e: &[f64], delta: usize, nu_max: usize, cap_raises: &mut usize) -> f64 {
    let dmax = e.len();
    let at = |m: usize| e[m.min(dmax) - 1];
    let tail = e[dmax - 1];
    let first = at(delta);
    let mut best = first;
    let mut deviation = 0.0;
    let mut cap = nu_max;
    let mut nu = 1;
    loop {
        if delta + nu - 1 >= dmax {
            let limit = first + (tail - first);
            if limit < best {
                best = limit;
            }
            break;
        }
        if nu >= cap {
            if at(delta + nu) > best {
                break;
            }
            cap *= 2;
            *cap_raises += 1;
        }
        nu += 1;
        deviation += at(delta + nu - 1) - first;
        let avg = first + deviation / nu as f64;
        if avg < best {
            best = avg;
        }
    }
    best
}
