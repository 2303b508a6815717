//! Brute-force optimality check on small instances.
//!
//! The scheduling problem is posed as an average-cost semi-Markov decision
//! process. Decision states are `(δ, c)` at ACK times, actions are a waiting
//! time `τ` and a buffer position `b`, and one transition spans a whole epoch.
//! Relative value iteration solves it with no reference to the index or the
//! threshold structure. Its answer is then compared to the policy module's.

use crate::channel::ChannelModel;
use crate::error_model::ErrorCurve;
use crate::policy::{BufferMapping, PolicyContext, PolicyError, ThresholdPolicy};
use crate::channel::DelayPmf;
use rand::Rng;
use std::io::{self, Write};
use std::sync::Arc;
use thiserror::Error;

pub const DEFAULT_TOL: f64 = 1e-10;
pub const DEFAULT_MAX_ITERS: usize = 1_000_000;
/// Action-value differences up to this count as ties.
pub const TIE_TOL: f64 = 1e-8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("buffer size must be at least 1")]
    ZeroBuffer,
    #[error("AoI truncation {delta_cap} is below the required {required}")]
    Truncation { delta_cap: usize, required: usize },
    #[error("tolerance must be positive and finite, got {0}")]
    Tolerance(f64),
    #[error("reference state ({delta}, {state}) is outside the truncated state space")]
    ReferenceState { delta: usize, state: usize },
    #[error("value iteration did not converge in {iterations} iterations (span {span:e})")]
    NonConvergence { iterations: usize, span: f64 },
    #[error(transparent)]
    Policy(#[from] PolicyError),
}

#[derive(Debug, Clone)]
pub struct TruncatedSmdp {
    delta_cap: usize,
    tau_cap: usize,
    buffer_size: usize,
    channel: ChannelModel,
    curve: ErrorCurve,
}

impl TruncatedSmdp {
    /// Largest decision-time age: `b + T + F` at its maximum.
    fn reach(channel: &ChannelModel, buffer_size: usize) -> usize {
        buffer_size - 1 + (channel.max_transmission() + channel.max_feedback()) as usize
    }

    pub fn new(
        channel: ChannelModel,
        curve: ErrorCurve,
        buffer_size: usize,
        delta_cap: usize,
        tau_cap: usize,
    ) -> Result<Self, OracleError> {
        if buffer_size == 0 {
            return Err(OracleError::ZeroBuffer);
        }
        let required = Self::reach(&channel, buffer_size) + tau_cap;
        if delta_cap < required {
            return Err(OracleError::Truncation {
                delta_cap,
                required,
            });
        }
        Ok(Self {
            delta_cap,
            tau_cap,
            buffer_size,
            channel,
            curve,
        })
    }

    /// Smallest caps that cover every useful action: `τ_cap` is the longest
    /// wait before the index reaches `max h` from any decision state, and
    /// `Δ_cap` is the tight bound for that `τ_cap`.
    pub fn with_default_caps(
        channel: ChannelModel,
        curve: ErrorCurve,
        buffer_size: usize,
    ) -> Result<Self, OracleError> {
        if buffer_size == 0 {
            return Err(OracleError::ZeroBuffer);
        }
        let ctx = PolicyContext::new(curve.clone(), channel.clone());
        let reach = Self::reach(&channel, buffer_size);
        let mut tau_cap = 0;
        for state in 0..channel.states() {
            for delta in 1..=reach {
                let tau = ctx
                    .waiting_time(delta, state, curve.max())
                    .unwrap_or(curve.delta_max());
                tau_cap = tau_cap.max(tau);
            }
        }
        Self::new(channel, curve, buffer_size, reach + tau_cap, tau_cap)
    }

    pub fn delta_cap(&self) -> usize {
        self.delta_cap
    }

    pub fn tau_cap(&self) -> usize {
        self.tau_cap
    }

    pub fn buffer_size(&self) -> usize {
        self.buffer_size
    }

    pub fn channel(&self) -> &ChannelModel {
        &self.channel
    }

    pub fn curve(&self) -> &ErrorCurve {
        &self.curve
    }

    /// Decision states `(δ, c)` that occur under some policy: the epoch
    /// just ended in `c`, so `δ = b + T + F` with `T ~ Q_c`, `F ~ R_c`.
    pub fn reachable_states(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for c in 0..self.channel.states() {
            let mut deltas = Vec::new();
            for b in 0..self.buffer_size {
                for (t, _) in self.channel.transmission(c).iter() {
                    for (f, _) in self.channel.feedback(c).iter() {
                        deltas.push(b + (t + f) as usize);
                    }
                }
            }
            deltas.sort_unstable();
            deltas.dedup();
            out.extend(deltas.into_iter().map(|d| (d, c)));
        }
        out
    }

    #[inline]
    fn state_index(&self, delta: usize, state: usize) -> usize {
        state * self.delta_cap + (delta - 1)
    }

    /// Exact one-epoch expectations for every state and action.
    fn tables(&self) -> Tables {
        let ch = &self.channel;
        let states = ch.states();
        let (nd, nt, nb) = (self.delta_cap, self.tau_cap + 1, self.buffer_size);
        let h = &self.curve;
        let mut wait_cost = vec![0.0; states * nd * nt];
        let mut buffer_cost = vec![0.0; states * nb];
        let mut mean_len = vec![0.0; states];
        let mut next: Vec<Vec<(usize, f64)>> = vec![Vec::new(); states * nb];
        for c in 0..states {
            let row = &ch.transition()[c];
            for (c2, &p) in row.iter().enumerate() {
                if p == 0.0 {
                    continue;
                }
                let (q, r): (&DelayPmf, &DelayPmf) = (ch.transmission(c2), ch.feedback(c2));
                mean_len[c] += p * (q.mean() + r.mean());
                for (t, pt) in q.iter() {
                    let t = t as usize;
                    for delta in 1..=nd {
                        for tau in 0..nt {
                            wait_cost[(c * nd + delta - 1) * nt + tau] +=
                                p * pt * h.segment_sum(delta, tau + t);
                        }
                    }
                    for (f, pf) in r.iter() {
                        let f = f as usize;
                        for b in 0..nb {
                            buffer_cost[c * nb + b] += p * pt * pf * h.segment_sum(b + t, f);
                            next[c * nb + b].push((self.state_index(b + t + f, c2), p * pt * pf));
                        }
                    }
                }
            }
        }
        Tables {
            wait_cost,
            buffer_cost,
            mean_len,
            next,
        }
    }
}

struct Tables {
    /// `E[Σ_{k<τ+T'} h(δ+k) | c]`, indexed `[(c, δ), τ]`.
    wait_cost: Vec<f64>,
    /// `E[Σ_{k<F'} h(b+T'+k) | c]`, indexed `[c, b]`.
    buffer_cost: Vec<f64>,
    /// `E[T' + F' | c]`.
    mean_len: Vec<f64>,
    /// Next-state law given `(c, b)`.
    next: Vec<Vec<(usize, f64)>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Action {
    pub tau: usize,
    pub buffer_pos: usize,
}

#[derive(Debug, Clone)]
pub struct RviSolution {
    /// Long-run average cost per slot.
    pub h_opt: f64,
    /// Relative values, indexed `[c][δ - 1]`.
    pub values: Vec<Vec<f64>>,
    /// Greedy action per state, indexed like `values`.
    pub greedy: Vec<Vec<Action>>,
    pub iterations: usize,
    pub span: f64,
    /// `Q(s, a) = cost - h_opt · length + E[V(next)]` for every state and action,
    /// indexed `[c][δ - 1][τ][b]` flattened.
    q: Vec<f64>,
    tau_count: usize,
    buffer_size: usize,
    delta_cap: usize,
}

impl RviSolution {
    pub fn value(&self, delta: usize, state: usize) -> f64 {
        self.values[state][delta - 1]
    }

    pub fn greedy_action(&self, delta: usize, state: usize) -> Action {
        self.greedy[state][delta - 1]
    }

    /// Bellman action value; `None` if the action is outside the caps.
    pub fn action_value(&self, delta: usize, state: usize, action: Action) -> Option<f64> {
        if action.tau >= self.tau_count || action.buffer_pos >= self.buffer_size {
            return None;
        }
        let s = state * self.delta_cap + delta - 1;
        Some(self.q[(s * self.tau_count + action.tau) * self.buffer_size + action.buffer_pos])
    }

    /// How much worse `action` is than the best action at `(δ, c)`.
    pub fn action_gap(&self, delta: usize, state: usize, action: Action) -> f64 {
        let best = self
            .action_value(delta, state, self.greedy_action(delta, state))
            .expect("greedy action is in range");
        self.action_value(delta, state, action)
            .map_or(f64::INFINITY, |q| q - best)
    }

    pub fn write_csv<W: Write>(&self, out: &mut W) -> io::Result<()> {
        writeln!(out, "delta,state,value,tau,buffer_pos")?;
        for (c, row) in self.values.iter().enumerate() {
            for (i, v) in row.iter().enumerate() {
                let a = self.greedy[c][i];
                writeln!(out, "{},{},{},{},{}", i + 1, c, v, a.tau, a.buffer_pos)?;
            }
        }
        Ok(())
    }
}

/// Relative value iteration with the default reference state `(1, 0)`.
pub fn relative_value_iteration(
    smdp: &TruncatedSmdp,
    tol: f64,
    max_iters: usize,
) -> Result<RviSolution, OracleError> {
    relative_value_iteration_from(smdp, tol, max_iters, (1, 0))
}

/// Relative value iteration on the Schweitzer-transformed chain (`η = 1`),
/// stopped when the span of successive differences drops below `tol`.
/// Values are normalized to zero at `reference = (δ, c)`.
pub fn relative_value_iteration_from(
    smdp: &TruncatedSmdp,
    tol: f64,
    max_iters: usize,
    reference: (usize, usize),
) -> Result<RviSolution, OracleError> {
    if !(tol.is_finite() && tol > 0.0) {
        return Err(OracleError::Tolerance(tol));
    }
    let (ref_delta, ref_state) = reference;
    if ref_delta == 0 || ref_delta > smdp.delta_cap || ref_state >= smdp.channel.states() {
        return Err(OracleError::ReferenceState {
            delta: ref_delta,
            state: ref_state,
        });
    }
    let tables = smdp.tables();
    let states = smdp.channel.states();
    let (nd, nt, nb) = (smdp.delta_cap, smdp.tau_cap + 1, smdp.buffer_size);
    let n = states * nd;
    let reference = smdp.state_index(ref_delta, ref_state);

    let mut v = vec![0.0; n];
    let mut v_new = vec![0.0; n];
    let mut w = vec![0.0; states * nb];
    let mut span = f64::INFINITY;
    let mut gain = 0.0;
    let mut iterations = 0;
    while iterations < max_iters {
        iterations += 1;
        for (wi, next) in w.iter_mut().zip(&tables.next) {
            *wi = next.iter().map(|&(j, p)| p * v[j]).sum();
        }
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for c in 0..states {
            for d in 0..nd {
                let s = c * nd + d;
                let mut best = f64::INFINITY;
                for tau in 0..nt {
                    let wc = tables.wait_cost[s * nt + tau];
                    let len = tau as f64 + tables.mean_len[c];
                    for b in 0..nb {
                        let cost = wc + tables.buffer_cost[c * nb + b];
                        let x = (cost + w[c * nb + b] - v[s]) / len;
                        if x < best {
                            best = x;
                        }
                    }
                }
                v_new[s] = v[s] + best;
                lo = lo.min(best);
                hi = hi.max(best);
            }
        }
        span = hi - lo;
        gain = 0.5 * (lo + hi);
        let shift = v_new[reference];
        for (a, b) in v.iter_mut().zip(&v_new) {
            *a = b - shift;
        }
        if span <= tol {
            break;
        }
    }
    if span > tol {
        return Err(OracleError::NonConvergence { iterations, span });
    }

    for (wi, next) in w.iter_mut().zip(&tables.next) {
        *wi = next.iter().map(|&(j, p)| p * v[j]).sum();
    }
    let mut q = vec![0.0; n * nt * nb];
    let mut greedy = vec![Vec::with_capacity(nd); states];
    for c in 0..states {
        for d in 0..nd {
            let s = c * nd + d;
            let mut best = (f64::INFINITY, Action { tau: 0, buffer_pos: 0 });
            for tau in 0..nt {
                let len = tau as f64 + tables.mean_len[c];
                for b in 0..nb {
                    let cost = tables.wait_cost[s * nt + tau] + tables.buffer_cost[c * nb + b];
                    let value = cost - gain * len + w[c * nb + b];
                    q[(s * nt + tau) * nb + b] = value;
                    if value < best.0 {
                        best = (value, Action { tau, buffer_pos: b });
                    }
                }
            }
            greedy[c].push(best.1);
        }
    }
    Ok(RviSolution {
        h_opt: gain,
        values: v.chunks(nd).map(<[f64]>::to_vec).collect(),
        greedy,
        iterations,
        span,
        q,
        tau_count: nt,
        buffer_size: nb,
        delta_cap: nd,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActionMismatch {
    pub delta: usize,
    pub state: usize,
    pub greedy: Action,
    /// `None` when the threshold rule's wait exceeds the oracle's cap.
    pub threshold: Option<Action>,
    pub action_gap: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleReport {
    pub rvi_h_opt: f64,
    pub policy_h_opt: f64,
    pub states_checked: usize,
    /// States where the greedy action differed from the threshold action
    /// only within the tie tolerance.
    pub ties: usize,
    pub max_tie_gap: f64,
    pub mismatches: Vec<ActionMismatch>,
    /// Channel states whose greedy buffer choice, after tie resolution,
    /// varies with the AoI.
    pub aoi_dependent_buffer: Vec<usize>,
}

impl OracleReport {
    pub fn cost_error(&self) -> f64 {
        (self.rvi_h_opt - self.policy_h_opt).abs()
    }

    pub fn passed(&self, cost_tol: f64) -> bool {
        self.cost_error() <= cost_tol
            && self.mismatches.is_empty()
            && self.aoi_dependent_buffer.is_empty()
    }
}

/// Compares the oracle's greedy actions with `(waiting_time(δ, c, β), ψ(c))`
/// on every reachable decision state. Greedy ties are resolved toward the
/// threshold action.
pub fn greedy_matches_threshold(
    smdp: &TruncatedSmdp,
    rvi: &RviSolution,
    policy: &ThresholdPolicy,
) -> OracleReport {
    let mut report = OracleReport {
        rvi_h_opt: rvi.h_opt,
        policy_h_opt: policy.threshold(),
        states_checked: 0,
        ties: 0,
        max_tie_gap: 0.0,
        mismatches: Vec::new(),
        aoi_dependent_buffer: Vec::new(),
    };
    let mut chosen_b: Vec<Option<usize>> = vec![None; smdp.channel.states()];
    for (delta, state) in smdp.reachable_states() {
        report.states_checked += 1;
        let greedy = rvi.greedy_action(delta, state);
        let threshold = policy
            .waiting_time(delta, state)
            .ok()
            .filter(|&tau| tau <= smdp.tau_cap)
            .map(|tau| Action {
                tau,
                buffer_pos: policy.mapping().position(state),
            });
        let resolved = match threshold {
            Some(a) => {
                let gap = rvi.action_gap(delta, state, a);
                if gap <= TIE_TOL {
                    if a != greedy {
                        report.ties += 1;
                        report.max_tie_gap = report.max_tie_gap.max(gap);
                    }
                    a
                } else {
                    report.mismatches.push(ActionMismatch {
                        delta,
                        state,
                        greedy,
                        threshold,
                        action_gap: gap,
                    });
                    greedy
                }
            }
            None => {
                report.mismatches.push(ActionMismatch {
                    delta,
                    state,
                    greedy,
                    threshold,
                    action_gap: f64::INFINITY,
                });
                greedy
            }
        };
        match chosen_b[state] {
            None => chosen_b[state] = Some(resolved.buffer_pos),
            Some(b) if b != resolved.buffer_pos => {
                if !report.aoi_dependent_buffer.contains(&state) {
                    report.aoi_dependent_buffer.push(state);
                }
            }
            Some(_) => {}
        }
    }
    report
}

/// Full check of one instance: solve it with the policy module, solve it
/// again by value iteration, and compare.
pub fn check_instance(
    channel: &ChannelModel,
    curve: &ErrorCurve,
    buffer_size: usize,
) -> Result<(OracleReport, RviSolution, ThresholdPolicy), OracleError> {
    let ctx = PolicyContext::new(curve.clone(), channel.clone());
    let sol = ctx.optimize_mapping(buffer_size, None)?;
    let policy = ThresholdPolicy::new(sol.mapping, sol.h_opt, Arc::clone(ctx.index_table()));
    let smdp = TruncatedSmdp::with_default_caps(channel.clone(), curve.clone(), buffer_size)?;
    let rvi = relative_value_iteration(&smdp, DEFAULT_TOL, DEFAULT_MAX_ITERS)?;
    let report = greedy_matches_threshold(&smdp, &rvi, &policy);
    Ok((report, rvi, policy))
}

#[derive(Debug, Clone)]
pub struct RandomInstance {
    pub channel: ChannelModel,
    pub curve: ErrorCurve,
    pub buffer_size: usize,
}

/// Random PMF on a nonempty subset of `1..=max_delay`.
pub fn random_pmf<R: Rng + ?Sized>(rng: &mut R, max_delay: u32) -> DelayPmf {
    loop {
        let mut pairs: Vec<(u32, f64)> = Vec::new();
        for d in 1..=max_delay {
            if rng.random_bool(0.5) {
                pairs.push((d, rng.random_range(0.05..1.0)));
            }
        }
        if pairs.is_empty() {
            continue;
        }
        let total: f64 = pairs.iter().map(|p| p.1).sum();
        let pairs: Vec<(u32, f64)> = pairs.into_iter().map(|(d, w)| (d, w / total)).collect();
        if let Ok(pmf) = DelayPmf::new(&pairs) {
            return pmf;
        }
    }
}

/// Random bounded error table whose last entry is its maximum.
pub fn random_curve<R: Rng + ?Sized>(rng: &mut R, min_len: usize, max_len: usize) -> ErrorCurve {
    let len = rng.random_range(min_len..=max_len);
    let mut values: Vec<f64> = (0..len).map(|_| rng.random_range(0.0..1.0)).collect();
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    values[len - 1] = max;
    ErrorCurve::from_values(values).expect("finite values")
}

/// Random channel with `states` states, strictly positive transitions and
/// delays up to `max_delay`.
pub fn random_channel<R: Rng + ?Sized>(rng: &mut R, states: usize, max_delay: u32) -> ChannelModel {
    let transition = (0..states)
        .map(|_| {
            let row: Vec<f64> = (0..states).map(|_| rng.random_range(0.05..1.0)).collect();
            let total: f64 = row.iter().sum();
            row.into_iter().map(|x| x / total).collect()
        })
        .collect();
    let transmission = (0..states).map(|_| random_pmf(rng, max_delay)).collect();
    let feedback = (0..states).map(|_| random_pmf(rng, max_delay)).collect();
    ChannelModel::new(transition, transmission, feedback).expect("positive rows are ergodic")
}

/// Small instance: up to 3 states, delays up to 5, buffer up to 3, and a
/// random error table of 8 to 20 entries.
pub fn random_instance<R: Rng + ?Sized>(rng: &mut R) -> RandomInstance {
    let states = rng.random_range(1..=3);
    RandomInstance {
        channel: random_channel(rng, states, 5),
        curve: random_curve(rng, 8, 20),
        buffer_size: rng.random_range(1..=3),
    }
}

/// A mapping drawn uniformly from all `B^C` mappings.
pub fn random_mapping<R: Rng + ?Sized>(rng: &mut R, states: usize, buffer_size: usize) -> BufferMapping {
    let positions = (0..states).map(|_| rng.random_range(0..buffer_size)).collect();
    BufferMapping::new(positions, buffer_size).expect("positions in range")
}
