//! Two-way channel whose state follows an ergodic Markov chain.
//!
//! The chain moves once per epoch, at ACK times. The state of an epoch fixes
//! the law of that epoch's transmission delay `T` and feedback delay `F`.

use nalgebra::{DMatrix, DVector};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use thiserror::Error;

const SUM_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ChannelError {
    #[error("delay PMF is empty")]
    EmptyPmf,
    #[error("delay support value {0} is below one slot")]
    DelayBelowOne(u32),
    #[error("delay support value {0} appears twice")]
    DuplicateSupport(u32),
    #[error("delay probability {0} is negative or not finite")]
    BadProbability(f64),
    #[error("delay probabilities sum to {0}, expected 1")]
    PmfSum(f64),
    #[error("channel needs at least one state")]
    NoStates,
    #[error("transition matrix has {rows} rows, expected {expected}")]
    Shape { rows: usize, expected: usize },
    #[error("transition row {row} has {len} entries, expected {expected}")]
    RowLength { row: usize, len: usize, expected: usize },
    #[error("transition entry ({row}, {col}) = {value} is negative or not finite")]
    BadTransition { row: usize, col: usize, value: f64 },
    #[error("transition row {row} sums to {sum}, expected 1")]
    RowSum { row: usize, sum: f64 },
    #[error("state {0} is not reachable from every other state")]
    Reducible(usize),
    #[error("chain is periodic with period {0}")]
    Periodic(usize),
    #[error("{what} has {got} entries for {states} states")]
    PmfCount {
        what: &'static str,
        got: usize,
        states: usize,
    },
    #[error("state index {state} out of range for {states} states")]
    StateOutOfRange { state: usize, states: usize },
    #[error("alpha must lie in (0, 2), got {0}")]
    Alpha(f64),
}

/// Finite-support PMF over delays in slots.
#[derive(Debug, Clone)]
pub struct DelayPmf {
    support: Vec<u32>,
    probs: Vec<f64>,
    sampler: WeightedIndex<f64>,
}

impl PartialEq for DelayPmf {
    fn eq(&self, other: &Self) -> bool {
        self.support == other.support && self.probs == other.probs
    }
}

impl DelayPmf {
    pub fn new(pairs: &[(u32, f64)]) -> Result<Self, ChannelError> {
        if pairs.is_empty() {
            return Err(ChannelError::EmptyPmf);
        }
        let mut support = Vec::with_capacity(pairs.len());
        let mut probs = Vec::with_capacity(pairs.len());
        for &(value, p) in pairs {
            if value < 1 {
                return Err(ChannelError::DelayBelowOne(value));
            }
            if !(p.is_finite() && p >= 0.0) {
                return Err(ChannelError::BadProbability(p));
            }
            if support.contains(&value) {
                return Err(ChannelError::DuplicateSupport(value));
            }
            support.push(value);
            probs.push(p);
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > SUM_TOL {
            return Err(ChannelError::PmfSum(sum));
        }
        let sampler = WeightedIndex::new(&probs).map_err(|_| ChannelError::PmfSum(sum))?;
        Ok(Self {
            support,
            probs,
            sampler,
        })
    }

    pub fn deterministic(value: u32) -> Result<Self, ChannelError> {
        Self::new(&[(value, 1.0)])
    }

    /// `(value, probability)` pairs with nonzero probability.
    pub fn iter(&self) -> impl Iterator<Item = (u32, f64)> + '_ {
        self.support
            .iter()
            .copied()
            .zip(self.probs.iter().copied())
            .filter(|(_, p)| *p > 0.0)
    }

    pub fn pairs(&self) -> Vec<(u32, f64)> {
        self.support.iter().copied().zip(self.probs.iter().copied()).collect()
    }

    pub fn mean(&self) -> f64 {
        self.iter().map(|(v, p)| v as f64 * p).sum()
    }

    pub fn max(&self) -> u32 {
        self.iter().map(|(v, _)| v).max().unwrap_or(1)
    }

    pub fn min(&self) -> u32 {
        self.iter().map(|(v, _)| v).min().unwrap_or(1)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u32 {
        self.support[self.sampler.sample(rng)]
    }
}

#[derive(Debug, Clone)]
pub struct ChannelModel {
    transition: Vec<Vec<f64>>,
    transmission: Vec<DelayPmf>,
    feedback: Vec<DelayPmf>,
    stationary: Vec<f64>,
    row_samplers: Vec<WeightedIndex<f64>>,
}

impl PartialEq for ChannelModel {
    fn eq(&self, other: &Self) -> bool {
        self.transition == other.transition
            && self.transmission == other.transmission
            && self.feedback == other.feedback
    }
}

impl ChannelModel {
    pub fn new(
        transition: Vec<Vec<f64>>,
        transmission: Vec<DelayPmf>,
        feedback: Vec<DelayPmf>,
    ) -> Result<Self, ChannelError> {
        let c = transition.len();
        if c == 0 {
            return Err(ChannelError::NoStates);
        }
        for (row, entries) in transition.iter().enumerate() {
            if entries.len() != c {
                return Err(ChannelError::RowLength {
                    row,
                    len: entries.len(),
                    expected: c,
                });
            }
            for (col, &value) in entries.iter().enumerate() {
                if !(value.is_finite() && value >= 0.0) {
                    return Err(ChannelError::BadTransition { row, col, value });
                }
            }
            let sum: f64 = entries.iter().sum();
            if (sum - 1.0).abs() > SUM_TOL {
                return Err(ChannelError::RowSum { row, sum });
            }
        }
        if transmission.len() != c {
            return Err(ChannelError::PmfCount {
                what: "transmission",
                got: transmission.len(),
                states: c,
            });
        }
        if feedback.len() != c {
            return Err(ChannelError::PmfCount {
                what: "feedback",
                got: feedback.len(),
                states: c,
            });
        }
        check_ergodic(&transition)?;
        let stationary = solve_stationary(&transition);
        let row_samplers = transition
            .iter()
            .map(|row| WeightedIndex::new(row).expect("validated row"))
            .collect();
        Ok(Self {
            transition,
            transmission,
            feedback,
            stationary,
            row_samplers,
        })
    }

    /// Two states with `p01 = p10 = α/2`, so both are visited half the time
    /// and `α` alone sets the memory of the delay.
    pub fn symmetric_two_state(
        alpha: f64,
        transmission: Vec<DelayPmf>,
        feedback: Vec<DelayPmf>,
    ) -> Result<Self, ChannelError> {
        if !(alpha > 0.0 && alpha < 2.0) {
            return Err(ChannelError::Alpha(alpha));
        }
        let s = alpha / 2.0;
        Self::new(vec![vec![1.0 - s, s], vec![s, 1.0 - s]], transmission, feedback)
    }

    /// The reference two-state channel: a fast state with short delays and a
    /// slow state with long ones.
    pub fn reference(alpha: f64) -> Result<Self, ChannelError> {
        let (q, r) = reference_pmfs();
        Self::symmetric_two_state(alpha, q, r)
    }

    /// Same delays, but every row of the transition matrix is the stationary
    /// distribution: the next state is drawn independently of the history.
    pub fn iid_surrogate(&self) -> Self {
        let rows = vec![self.stationary.clone(); self.states()];
        Self::new(rows, self.transmission.clone(), self.feedback.clone())
            .expect("stationary rows form an ergodic matrix")
    }

    pub fn states(&self) -> usize {
        self.transition.len()
    }

    pub fn transition(&self) -> &[Vec<f64>] {
        &self.transition
    }

    pub fn transmission(&self, state: usize) -> &DelayPmf {
        &self.transmission[state]
    }

    pub fn feedback(&self, state: usize) -> &DelayPmf {
        &self.feedback[state]
    }

    pub fn stationary_distribution(&self) -> &[f64] {
        &self.stationary
    }

    pub fn next_state_distribution(&self, state: usize) -> Result<&[f64], ChannelError> {
        self.transition
            .get(state)
            .map(Vec::as_slice)
            .ok_or(ChannelError::StateOutOfRange {
                state,
                states: self.states(),
            })
    }

    pub fn max_transmission(&self) -> u32 {
        self.transmission.iter().map(DelayPmf::max).max().unwrap_or(1)
    }

    pub fn max_feedback(&self) -> u32 {
        self.feedback.iter().map(DelayPmf::max).max().unwrap_or(1)
    }

    pub fn sample_stationary<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (c, p) in self.stationary.iter().enumerate() {
            acc += p;
            if u < acc {
                return c;
            }
        }
        self.states() - 1
    }

    pub fn sample_next_state<R: Rng + ?Sized>(&self, state: usize, rng: &mut R) -> usize {
        self.row_samplers[state].sample(rng)
    }

    /// Draws `(T, F)` for an epoch spent in `state`.
    pub fn sample_epoch_delays<R: Rng + ?Sized>(&self, state: usize, rng: &mut R) -> (u32, u32) {
        let t = self.transmission[state].sample(rng);
        let f = self.feedback[state].sample(rng);
        (t, f)
    }
}

/// Transmission and feedback PMFs of the reference channel.
pub fn reference_pmfs() -> (Vec<DelayPmf>, Vec<DelayPmf>) {
    let q1 = DelayPmf::new(&[(3, 0.45), (4, 0.25), (5, 0.15), (6, 0.15)]).unwrap();
    let q2 = DelayPmf::new(&[(18, 0.15), (19, 0.15), (20, 0.4), (21, 0.3)]).unwrap();
    let r1 = DelayPmf::deterministic(2).unwrap();
    let r2 = DelayPmf::deterministic(6).unwrap();
    (vec![q1, q2], vec![r1, r2])
}

fn check_ergodic(p: &[Vec<f64>]) -> Result<(), ChannelError> {
    let n = p.len();
    let reach = |forward: bool| {
        let mut seen = vec![false; n];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(u) = stack.pop() {
            for v in 0..n {
                let w = if forward { p[u][v] } else { p[v][u] };
                if w > 0.0 && !seen[v] {
                    seen[v] = true;
                    stack.push(v);
                }
            }
        }
        seen
    };
    for seen in [reach(true), reach(false)] {
        if let Some(s) = seen.iter().position(|s| !s) {
            return Err(ChannelError::Reducible(s));
        }
    }
    let period = chain_period(p);
    if period != 1 {
        return Err(ChannelError::Periodic(period));
    }
    Ok(())
}

/// Period of an irreducible chain: gcd over edges `u -> v` of
/// `level(u) + 1 - level(v)` for BFS levels from state 0.
fn chain_period(p: &[Vec<f64>]) -> usize {
    let n = p.len();
    let mut level = vec![usize::MAX; n];
    level[0] = 0;
    let mut queue = std::collections::VecDeque::from([0]);
    while let Some(u) = queue.pop_front() {
        for v in 0..n {
            if p[u][v] > 0.0 && level[v] == usize::MAX {
                level[v] = level[u] + 1;
                queue.push_back(v);
            }
        }
    }
    let mut g = 0usize;
    for u in 0..n {
        for v in 0..n {
            if p[u][v] > 0.0 {
                let diff = (level[u] as isize + 1 - level[v] as isize).unsigned_abs();
                g = gcd(g, diff);
            }
        }
    }
    g
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Solves `πP = π`, `Σπ = 1` by replacing one balance equation with the
/// normalization.
fn solve_stationary(p: &[Vec<f64>]) -> Vec<f64> {
    let n = p.len();
    let mut a = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            a[(i, j)] = p[j][i] - if i == j { 1.0 } else { 0.0 };
        }
    }
    for j in 0..n {
        a[(n - 1, j)] = 1.0;
    }
    let mut b = DVector::<f64>::zeros(n);
    b[n - 1] = 1.0;
    let pi = a.lu().solve(&b).expect("ergodic chain has a unique stationary law");
    let pi: Vec<f64> = pi.iter().map(|v| v.max(0.0)).collect();
    let total: f64 = pi.iter().sum();
    pi.into_iter().map(|v| v / total).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn unit_delays(c: usize) -> (Vec<DelayPmf>, Vec<DelayPmf>) {
        let d = DelayPmf::deterministic(1).unwrap();
        (vec![d.clone(); c], vec![d; c])
    }

    #[test]
    fn single_state_stationary() {
        let (q, r) = unit_delays(1);
        let ch = ChannelModel::new(vec![vec![1.0]], q, r).unwrap();
        assert_eq!(ch.stationary_distribution(), &[1.0]);
        assert_eq!(ch.next_state_distribution(0).unwrap(), &[1.0]);
    }

    #[test]
    fn asymmetric_two_state_stationary() {
        let (q, r) = unit_delays(2);
        let ch = ChannelModel::new(vec![vec![0.8, 0.2], vec![0.3, 0.7]], q, r).unwrap();
        let pi = ch.stationary_distribution();
        assert!((pi[0] - 0.6).abs() < 1e-12);
        assert!((pi[1] - 0.4).abs() < 1e-12);
        assert_eq!(ch.next_state_distribution(0).unwrap(), &[0.8, 0.2]);
    }

    #[test]
    fn symmetric_channel_is_balanced() {
        for alpha in [0.1, 0.5, 1.0, 1.7] {
            let ch = ChannelModel::reference(alpha).unwrap();
            let pi = ch.stationary_distribution();
            assert!((pi[0] - 0.5).abs() < 1e-12 && (pi[1] - 0.5).abs() < 1e-12);
        }
        let ch = ChannelModel::reference(0.2).unwrap();
        let row = ch.next_state_distribution(0).unwrap();
        assert!((row[0] - 0.9).abs() < 1e-15 && (row[1] - 0.1).abs() < 1e-15);
        assert!(ChannelModel::reference(0.0).is_err());
        assert!(ChannelModel::reference(2.0).is_err());
    }

    #[test]
    fn rejects_bad_chains() {
        let (q, r) = unit_delays(2);
        let periodic = ChannelModel::new(vec![vec![0.0, 1.0], vec![1.0, 0.0]], q.clone(), r.clone());
        assert_eq!(periodic.unwrap_err(), ChannelError::Periodic(2));
        let reducible = ChannelModel::new(vec![vec![1.0, 0.0], vec![0.5, 0.5]], q.clone(), r.clone());
        assert!(matches!(reducible, Err(ChannelError::Reducible(_))));
        let bad_sum = ChannelModel::new(vec![vec![0.5, 0.6], vec![0.5, 0.5]], q.clone(), r.clone());
        assert!(matches!(bad_sum, Err(ChannelError::RowSum { row: 0, .. })));
        let negative = ChannelModel::new(vec![vec![1.5, -0.5], vec![0.5, 0.5]], q, r);
        assert!(matches!(negative, Err(ChannelError::BadTransition { .. })));
    }

    #[test]
    fn pmf_validation() {
        assert!(DelayPmf::new(&[]).is_err());
        assert_eq!(DelayPmf::new(&[(0, 1.0)]).unwrap_err(), ChannelError::DelayBelowOne(0));
        assert!(DelayPmf::new(&[(1, 0.5), (2, 0.4)]).is_err());
        assert!(DelayPmf::new(&[(1, 0.5), (1, 0.5)]).is_err());
        assert!(DelayPmf::new(&[(1, 1.5), (2, -0.5)]).is_err());
        let pmf = DelayPmf::new(&[(3, 0.45), (4, 0.25), (5, 0.15), (6, 0.15)]).unwrap();
        assert!((pmf.mean() - 4.0).abs() < 1e-12);
        assert_eq!((pmf.min(), pmf.max()), (3, 6));
    }

    #[test]
    fn out_of_range_state() {
        let ch = ChannelModel::reference(0.2).unwrap();
        assert!(matches!(
            ch.next_state_distribution(2),
            Err(ChannelError::StateOutOfRange { state: 2, states: 2 })
        ));
    }

    #[test]
    fn reference_feedback_is_deterministic() {
        let ch = ChannelModel::reference(0.3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..1000 {
            assert_eq!(ch.sample_epoch_delays(0, &mut rng).1, 2);
            assert_eq!(ch.sample_epoch_delays(1, &mut rng).1, 6);
        }
    }

    #[test]
    fn iid_surrogate_rows_equal_stationary() {
        let ch = ChannelModel::reference(0.2).unwrap();
        let iid = ch.iid_surrogate();
        for row in iid.transition() {
            assert_eq!(row.as_slice(), ch.stationary_distribution());
            assert!(row.iter().all(|p| (p - 0.5).abs() < 1e-15));
        }
        assert_eq!(ChannelModel::reference(1.0).unwrap(), ChannelModel::reference(1.0).unwrap().iid_surrogate());
    }
}
