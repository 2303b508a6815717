//! Slot-level simulation of scheduling policies.
//!
//! Epoch `i` submits buffer position `b_i` at `S_i`, the packet is delivered
//! at `D_i = S_i + T_i` and acknowledged at `A_i = D_i + F_i`. The channel
//! moves once per epoch at ACK times, and the transmitter stays silent on
//! `(S_i, A_i)`. The age drops to `T_i + b_i` at each delivery and grows by
//! one slot otherwise.
//!
//! Cost is accumulated slot by slot over the whole timeline, independently
//! of the per-epoch formulas used by the solver.

use crate::channel::{ChannelError, ChannelModel, DelayPmf};
use crate::error_model::ErrorCurve;
use crate::policy::{BufferMapping, PolicyContext, PolicyError, ThresholdPolicy};
use crate::stats::{batch_standard_error, combine_independent};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use std::fmt;
use std::io::{self, Write};
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("horizon {horizon} must exceed warm-up {warm_up}")]
    Horizon { horizon: u64, warm_up: u64 },
    #[error("batch count must be at least 2")]
    Batches,
    #[error("warm-up left only {measured} measured slots for {batches} batches")]
    TooShort { measured: u64, batches: usize },
    #[error("policy covers {got} channel states, channel has {expected}")]
    PolicyStates { got: usize, expected: usize },
    #[error("{count} deliveries in one slot; at most one packet is in flight")]
    MultipleDeliveries { count: usize },
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Channel(#[from] ChannelError),
}

#[derive(Debug, Clone)]
pub enum PolicySpec {
    /// Threshold policy solved on the true channel.
    OptimalThreshold(ThresholdPolicy),
    /// Threshold policy solved on the channel's IID surrogate.
    IidBaseline(ThresholdPolicy),
    /// Freshest sample, submitted right at each ACK.
    ZeroWait,
}

impl PolicySpec {
    pub fn name(&self) -> &'static str {
        match self {
            PolicySpec::OptimalThreshold(_) => "optimal",
            PolicySpec::IidBaseline(_) => "iid_baseline",
            PolicySpec::ZeroWait => "zero_wait",
        }
    }

    pub fn threshold_policy(&self) -> Option<&ThresholdPolicy> {
        match self {
            PolicySpec::OptimalThreshold(p) | PolicySpec::IidBaseline(p) => Some(p),
            PolicySpec::ZeroWait => None,
        }
    }

    #[inline]
    fn buffer_position(&self, state: usize) -> usize {
        self.threshold_policy()
            .map_or(0, |p| p.mapping().position(state))
    }

    #[inline]
    fn submit_now(&self, delta: usize, state: usize) -> bool {
        self.threshold_policy()
            .is_none_or(|p| p.should_submit(delta, state))
    }

    fn check(&self, channel: &ChannelModel) -> Result<(), SimError> {
        if let Some(p) = self.threshold_policy() {
            for got in [p.mapping().states(), p.index().states()] {
                if got != channel.states() {
                    return Err(SimError::PolicyStates {
                        got,
                        expected: channel.states(),
                    });
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Delivery {
    pub transmission: u32,
    pub buffer_pos: usize,
}

/// Age at slot `t` from the age at `t - 1` and the deliveries landing at `t`.
pub fn step_aoi(prev: usize, deliveries: &[Delivery]) -> Result<usize, SimError> {
    match deliveries {
        [] => Ok(prev + 1),
        [d] => Ok(d.transmission as usize + d.buffer_pos),
        _ => Err(SimError::MultipleDeliveries {
            count: deliveries.len(),
        }),
    }
}

/// Submission, delivery and ACK markers of one slot.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Events {
    pub ack: bool,
    pub submit: bool,
    pub delivery: bool,
}

impl fmt::Display for Events {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<&str> = [(self.delivery, "D"), (self.ack, "A"), (self.submit, "S")]
            .iter()
            .filter(|(on, _)| *on)
            .map(|(_, s)| *s)
            .collect();
        f.write_str(&parts.join("|"))
    }
}

/// One slot of a trace. `channel_state`, `buffer_pos` and `epoch` describe
/// the most recently submitted packet.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub t: u64,
    pub delta: usize,
    pub cost: f64,
    pub events: Events,
    pub channel_state: usize,
    pub buffer_pos: usize,
    pub epoch: u64,
}

pub fn write_trace_csv<W: Write>(out: &mut W, rows: &[TraceRow]) -> io::Result<()> {
    writeln!(out, "t,delta,cost,event,channel_state,buffer_pos")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            r.t, r.delta, r.cost, r.events, r.channel_state, r.buffer_pos
        )?;
    }
    Ok(())
}

struct InFlight {
    epoch: u64,
    submit: u64,
    delivery: u64,
    ack: u64,
    state: usize,
    buffer_pos: usize,
    transmission: u32,
}

/// Runs the epoch state machine for `horizon` slots, handing every slot to
/// `visit`.
fn drive<V: FnMut(&TraceRow)>(
    policy: &PolicySpec,
    channel: &ChannelModel,
    curve: &ErrorCurve,
    horizon: u64,
    seed: u64,
    mut visit: V,
) -> Result<(), SimError> {
    policy.check(channel)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let c0 = channel.sample_stationary(&mut rng);
    let b0 = policy.buffer_position(c0);
    let (t0, f0) = channel.sample_epoch_delays(c0, &mut rng);
    let mut cur = InFlight {
        epoch: 0,
        submit: 0,
        delivery: t0 as u64,
        ack: (t0 + f0) as u64,
        state: c0,
        buffer_pos: b0,
        transmission: t0,
    };
    let mut delta = b0 + 1;
    let mut waiting = false;
    let mut next_state = c0;

    for t in 0..horizon {
        let mut events = Events::default();
        if t == cur.submit {
            events.submit = true;
        }
        if t > 0 {
            let delivered = t == cur.delivery;
            let arrivals = [Delivery {
                transmission: cur.transmission,
                buffer_pos: cur.buffer_pos,
            }];
            delta = step_aoi(delta, if delivered { &arrivals } else { &[] })?;
            events.delivery = delivered;
        }
        if t == cur.ack {
            events.ack = true;
            waiting = true;
            next_state = channel.sample_next_state(cur.state, &mut rng);
        }
        if waiting && policy.submit_now(delta, cur.state) {
            let buffer_pos = policy.buffer_position(cur.state);
            let (tx, fb) = channel.sample_epoch_delays(next_state, &mut rng);
            cur = InFlight {
                epoch: cur.epoch + 1,
                submit: t,
                delivery: t + tx as u64,
                ack: t + (tx + fb) as u64,
                state: next_state,
                buffer_pos,
                transmission: tx,
            };
            events.submit = true;
            waiting = false;
        }
        visit(&TraceRow {
            t,
            delta,
            cost: curve.get(delta),
            events,
            channel_state: cur.state,
            buffer_pos: cur.buffer_pos,
            epoch: cur.epoch,
        });
    }
    Ok(())
}

/// Per-slot trace of a run, for inspection and invariant checks.
pub fn replay_trace(
    policy: &PolicySpec,
    channel: &ChannelModel,
    curve: &ErrorCurve,
    seed: u64,
    horizon: u64,
) -> Result<Vec<TraceRow>, SimError> {
    let mut rows = Vec::with_capacity(horizon as usize);
    drive(policy, channel, curve, horizon, seed, |r| rows.push(*r))?;
    Ok(rows)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimConfig {
    /// Total simulated slots, warm-up included.
    pub horizon: u64,
    /// Minimum slots discarded before measuring.
    pub warm_up: u64,
    /// Minimum completed epochs before measuring.
    pub warm_up_epochs: u64,
    pub batches: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            horizon: 1_000_000,
            warm_up: 10_000,
            warm_up_epochs: 100,
            batches: 50,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimReport {
    pub policy: String,
    pub seed: u64,
    pub mean_cost: f64,
    /// Batch-means standard error of `mean_cost`.
    pub std_error: f64,
    pub horizon: u64,
    pub warm_up_discarded: u64,
    pub measured_slots: u64,
    /// Epochs lying entirely inside the measured window.
    pub epochs: u64,
    pub mean_epoch_cost: f64,
    pub mean_epoch_length: f64,
    /// Measured slots whose age was past the tabulated error curve.
    pub extension_slots: u64,
}

impl SimReport {
    pub const CSV_HEADER: &'static str = "policy,seed,mean_cost,stderr,horizon,warm_up,measured_slots,epochs,mean_epoch_cost,mean_epoch_length,extension_slots";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{}",
            self.policy,
            self.seed,
            self.mean_cost,
            self.std_error,
            self.horizon,
            self.warm_up_discarded,
            self.measured_slots,
            self.epochs,
            self.mean_epoch_cost,
            self.mean_epoch_length,
            self.extension_slots
        )
    }
}

pub fn run_simulation(
    policy: &PolicySpec,
    channel: &ChannelModel,
    curve: &ErrorCurve,
    config: &SimConfig,
    seed: u64,
) -> Result<SimReport, SimError> {
    if config.horizon <= config.warm_up {
        return Err(SimError::Horizon {
            horizon: config.horizon,
            warm_up: config.warm_up,
        });
    }
    if config.batches < 2 {
        return Err(SimError::Batches);
    }
    let dmax = curve.delta_max();
    let horizon = config.horizon;

    let mut acks: u64 = 0;
    let mut start: Option<u64> = None;
    let mut batch_len = 0u64;
    let mut batch_sums = vec![0.0; config.batches];
    let mut batch_counts = vec![0u64; config.batches];
    let mut total = 0.0;
    let mut extension_slots = 0;
    // Epoch bookkeeping: cost and start of the epoch in progress, if it began
    // inside the measured window.
    let mut epoch_open: Option<(u64, f64)> = None;
    let (mut epochs, mut epoch_cost_sum, mut epoch_len_sum) = (0u64, 0.0, 0.0);
    let mut too_short = None;

    drive(policy, channel, curve, horizon, seed, |row| {
        if row.events.ack {
            acks += 1;
            if let Some((began, cost)) = epoch_open.take() {
                epochs += 1;
                epoch_cost_sum += cost;
                epoch_len_sum += (row.t - began) as f64;
            }
        }
        if start.is_none() && row.t >= config.warm_up && acks >= config.warm_up_epochs {
            let measured = horizon - row.t;
            if measured < config.batches as u64 {
                too_short = Some(measured);
            }
            start = Some(row.t);
            batch_len = (measured / config.batches as u64).max(1);
        }
        let Some(s) = start else { return };
        if row.events.ack {
            epoch_open = Some((row.t, 0.0));
        }
        if let Some((_, cost)) = epoch_open.as_mut() {
            *cost += row.cost;
        }
        let b = (((row.t - s) / batch_len) as usize).min(config.batches - 1);
        batch_sums[b] += row.cost;
        batch_counts[b] += 1;
        total += row.cost;
        if row.delta > dmax {
            extension_slots += 1;
        }
    })?;

    let start = start.unwrap_or(horizon);
    let measured = horizon - start;
    if let Some(m) = too_short.or((measured == 0).then_some(0)) {
        return Err(SimError::TooShort {
            measured: m,
            batches: config.batches,
        });
    }
    let batch_means: Vec<f64> = batch_sums
        .iter()
        .zip(&batch_counts)
        .map(|(s, &n)| s / n as f64)
        .collect();
    Ok(SimReport {
        policy: policy.name().to_string(),
        seed,
        mean_cost: total / measured as f64,
        std_error: batch_standard_error(&batch_means),
        horizon,
        warm_up_discarded: start,
        measured_slots: measured,
        epochs,
        mean_epoch_cost: if epochs > 0 { epoch_cost_sum / epochs as f64 } else { f64::NAN },
        mean_epoch_length: if epochs > 0 { epoch_len_sum / epochs as f64 } else { f64::NAN },
        extension_slots,
    })
}

/// Everything an α sweep shares across α values.
#[derive(Debug, Clone)]
pub struct SweepSetup {
    pub curve: ErrorCurve,
    pub transmission: Vec<DelayPmf>,
    pub feedback: Vec<DelayPmf>,
    pub buffer_size: usize,
    pub nu_max: Option<usize>,
    pub tol: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub alpha: f64,
    pub policy: String,
    pub mean_cost: f64,
    /// Mean cost divided by the IID baseline's mean cost at the same α.
    pub normalized_cost: f64,
    pub std_error: f64,
    pub normalized_std_error: f64,
    pub seeds: usize,
    /// Exact long-run cost from the epoch enumeration.
    pub analytic_cost: f64,
}

#[derive(Debug, Clone)]
pub struct SweepPoint {
    pub alpha: f64,
    pub optimal_mapping: BufferMapping,
    pub h_opt: f64,
    pub iid_mapping: BufferMapping,
    pub iid_threshold: f64,
    pub rows: Vec<SweepRow>,
    pub reports: Vec<SimReport>,
}

#[derive(Debug, Clone)]
pub struct SweepTable {
    pub points: Vec<SweepPoint>,
}

impl SweepTable {
    pub fn rows(&self) -> impl Iterator<Item = &SweepRow> {
        self.points.iter().flat_map(|p| p.rows.iter())
    }

    pub fn row(&self, alpha: f64, policy: &str) -> Option<&SweepRow> {
        self.rows().find(|r| r.alpha == alpha && r.policy == policy)
    }

    pub fn write_csv<W: Write>(&self, out: &mut W) -> io::Result<()> {
        writeln!(out, "alpha,policy,mean_cost,normalized_cost,stderr,seeds")?;
        for r in self.rows() {
            writeln!(
                out,
                "{},{},{},{},{},{}",
                r.alpha, r.policy, r.mean_cost, r.normalized_cost, r.std_error, r.seeds
            )?;
        }
        Ok(())
    }
}

/// The two threshold policies at one α: solved on the true channel and on
/// its IID surrogate.
pub fn solve_policies(
    setup: &SweepSetup,
    channel: &ChannelModel,
) -> Result<(ThresholdPolicy, ThresholdPolicy), SimError> {
    let build = |ch: ChannelModel| -> Result<ThresholdPolicy, SimError> {
        let ctx = match setup.nu_max {
            Some(nu) => PolicyContext::with_nu_max(setup.curve.clone(), ch, nu)?,
            None => PolicyContext::new(setup.curve.clone(), ch),
        };
        let sol = ctx.optimize_mapping(setup.buffer_size, setup.tol)?;
        Ok(ThresholdPolicy::new(
            sol.mapping,
            sol.h_opt,
            Arc::clone(ctx.index_table()),
        ))
    };
    Ok((build(channel.clone())?, build(channel.iid_surrogate())?))
}

/// For each α: rebuild the symmetric two-state channel, solve both threshold
/// policies, simulate all three policies on the true channel for every
/// seed, and normalize by the IID baseline.
pub fn run_sweep(
    alphas: &[f64],
    setup: &SweepSetup,
    seeds: &[u64],
    sim: &SimConfig,
) -> Result<SweepTable, SimError> {
    let mut points = Vec::with_capacity(alphas.len());
    for &alpha in alphas {
        let channel = ChannelModel::symmetric_two_state(
            alpha,
            setup.transmission.clone(),
            setup.feedback.clone(),
        )?;
        let (optimal, iid) = solve_policies(setup, &channel)?;
        let truth = PolicyContext::new(setup.curve.clone(), channel.clone());
        let analytic = [
            truth.policy_cost(&optimal)?,
            truth.policy_cost(&iid)?,
            truth.zero_wait_cost(),
        ];
        let policies = [
            PolicySpec::OptimalThreshold(optimal.clone()),
            PolicySpec::IidBaseline(iid.clone()),
            PolicySpec::ZeroWait,
        ];
        let jobs: Vec<(usize, u64)> = (0..policies.len())
            .flat_map(|p| seeds.iter().map(move |&s| (p, s)))
            .collect();
        let reports = jobs
            .par_iter()
            .map(|&(p, seed)| run_simulation(&policies[p], &channel, &setup.curve, sim, seed))
            .collect::<Result<Vec<_>, _>>()?;

        let summary: Vec<(f64, f64)> = (0..policies.len())
            .map(|p| {
                let chunk = &reports[p * seeds.len()..(p + 1) * seeds.len()];
                let means: Vec<f64> = chunk.iter().map(|r| r.mean_cost).collect();
                let ses: Vec<f64> = chunk.iter().map(|r| r.std_error).collect();
                combine_independent(&means, &ses)
            })
            .collect();
        let (base, base_se) = summary[1];
        let rows = policies
            .iter()
            .zip(&summary)
            .zip(analytic)
            .map(|((policy, &(mean, se)), exact)| {
                let ratio = mean / base;
                let norm_se = if policy.name() == "iid_baseline" {
                    0.0
                } else {
                    ratio * ((se / mean).powi(2) + (base_se / base).powi(2)).sqrt()
                };
                SweepRow {
                    alpha,
                    policy: policy.name().to_string(),
                    mean_cost: mean,
                    normalized_cost: ratio,
                    std_error: se,
                    normalized_std_error: norm_se,
                    seeds: seeds.len(),
                    analytic_cost: exact,
                }
            })
            .collect();
        points.push(SweepPoint {
            alpha,
            optimal_mapping: optimal.mapping().clone(),
            h_opt: optimal.threshold(),
            iid_mapping: iid.mapping().clone(),
            iid_threshold: iid.threshold(),
            rows,
            reports,
        });
    }
    Ok(SweepTable { points })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_setup() -> (ChannelModel, ErrorCurve) {
        let d = DelayPmf::deterministic(1).unwrap();
        let ch = ChannelModel::new(vec![vec![1.0]], vec![d.clone()], vec![d]).unwrap();
        let h = ErrorCurve::from_values((1..=100).map(|d| d as f64).collect()).unwrap();
        (ch, h)
    }

    #[test]
    fn aoi_steps() {
        let d = |t, b| Delivery {
            transmission: t,
            buffer_pos: b,
        };
        assert_eq!(step_aoi(7, &[]).unwrap(), 8);
        assert_eq!(step_aoi(7, &[d(3, 0)]).unwrap(), 3);
        assert_eq!(step_aoi(7, &[d(3, 5)]).unwrap(), 8);
        assert!(matches!(
            step_aoi(7, &[d(3, 0), d(4, 0)]),
            Err(SimError::MultipleDeliveries { count: 2 })
        ));
    }

    #[test]
    fn hand_renewal_zero_wait_is_exact() {
        let (ch, h) = unit_setup();
        let r = run_simulation(&PolicySpec::ZeroWait, &ch, &h, &SimConfig::default(), 3).unwrap();
        assert_eq!(r.mean_cost, 1.5);
        assert_eq!(r.std_error, 0.0);
        assert_eq!(r.mean_epoch_length, 2.0);
        assert_eq!(r.mean_epoch_cost, 3.0);
        assert_eq!(r.warm_up_discarded, 10_000);
    }

    #[test]
    fn hand_trace_has_period_two() {
        let (ch, h) = unit_setup();
        let rows = replay_trace(&PolicySpec::ZeroWait, &ch, &h, 0, 12).unwrap();
        let deltas: Vec<usize> = rows.iter().map(|r| r.delta).collect();
        assert_eq!(deltas, vec![1, 1, 2, 1, 2, 1, 2, 1, 2, 1, 2, 1]);
        assert_eq!(rows[0].events.to_string(), "S");
        assert_eq!(rows[1].events.to_string(), "D");
        assert_eq!(rows[2].events.to_string(), "A|S");
        let mut buf = Vec::new();
        write_trace_csv(&mut buf, &rows[..2]).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "t,delta,cost,event,channel_state,buffer_pos\n0,1,1,S,0,0\n1,1,1,D,0,0\n"
        );
    }

    #[test]
    fn config_errors() {
        let (ch, h) = unit_setup();
        let bad = SimConfig {
            horizon: 10,
            warm_up: 10,
            ..SimConfig::default()
        };
        assert!(matches!(
            run_simulation(&PolicySpec::ZeroWait, &ch, &h, &bad, 0),
            Err(SimError::Horizon { .. })
        ));
        let short = SimConfig {
            horizon: 120,
            warm_up: 100,
            warm_up_epochs: 1,
            batches: 50,
        };
        assert!(matches!(
            run_simulation(&PolicySpec::ZeroWait, &ch, &h, &short, 0),
            Err(SimError::TooShort { .. })
        ));
    }

    #[test]
    fn mismatched_policy_is_rejected() {
        let (ch, h) = unit_setup();
        let two = ChannelModel::reference(0.5).unwrap();
        let ctx = PolicyContext::new(h.clone(), two);
        let p = ThresholdPolicy::new(
            BufferMapping::freshest(2, 1).unwrap(),
            1.0,
            Arc::clone(ctx.index_table()),
        );
        assert!(matches!(
            run_simulation(&PolicySpec::OptimalThreshold(p), &ch, &h, &SimConfig::default(), 0),
            Err(SimError::PolicyStates { got: 2, expected: 1 })
        ));
    }
}
