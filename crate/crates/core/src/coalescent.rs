//! Direct simulation of the finite additive coalescent.
//!
//! Every pair of clusters with masses `x`, `y` merges at rate `x + y`. With
//! `n` clusters of unit total mass the total rate is `n - 1`, so holding
//! times are `Exp(n - 1)` and the merging pair is chosen with probability
//! `(x_i + x_j) / (n - 1)`, independently of the holding time. The pair is
//! drawn by picking one index size-biased by mass and the other uniformly
//! among the remaining `n - 1` indices.

use rand::Rng;
use rand_distr::{Distribution, Exp};

use crate::error::{Error, Result};
use crate::fenwick::Fenwick;
use crate::mass::RankedMassVector;

/// Cluster count at which size-biased selection switches from a linear
/// scan to prefix sums.
const PREFIX_SEARCH_THRESHOLD: usize = 1000;

#[derive(Debug, Clone, PartialEq)]
pub struct CoalescentTrajectory {
    /// `states[k]` is the configuration after `k` merges.
    pub states: Vec<RankedMassVector>,
    /// Strictly increasing merge times `γ_1 < … < γ_{n-1}`.
    pub jump_times: Vec<f64>,
}

impl CoalescentTrajectory {
    /// Holding times `γ_1, γ_2 - γ_1, …`.
    pub fn increments(&self) -> Vec<f64> {
        let mut prev = 0.0;
        self.jump_times
            .iter()
            .map(|&g| {
                let d = g - prev;
                prev = g;
                d
            })
            .collect()
    }

    /// Configuration at time `t >= 0`.
    pub fn state_at(&self, t: f64) -> &RankedMassVector {
        let k = self.jump_times.partition_point(|&g| g <= t);
        &self.states[k]
    }
}

pub fn total_merge_rate(state: &RankedMassVector) -> Result<f64> {
    let n = state.len();
    if n < 2 {
        return Err(Error::NoMergePossible(n));
    }
    Ok((n - 1) as f64 * state.total())
}

fn size_biased_index<R: Rng + ?Sized>(masses: &[f64], rng: &mut R) -> usize {
    let total: f64 = masses.iter().sum();
    let target = rng.random::<f64>() * total;
    if masses.len() < PREFIX_SEARCH_THRESHOLD {
        let mut acc = 0.0;
        for (i, &x) in masses.iter().enumerate() {
            acc += x;
            if acc > target {
                return i;
            }
        }
        masses.len() - 1
    } else {
        let prefix: Vec<f64> = masses
            .iter()
            .scan(0.0, |acc, &x| {
                *acc += x;
                Some(*acc)
            })
            .collect();
        prefix.partition_point(|&c| c <= target).min(masses.len() - 1)
    }
}

fn uniform_other<R: Rng + ?Sized>(n: usize, exclude: usize, rng: &mut R) -> usize {
    let k = rng.random_range(0..n - 1);
    if k >= exclude {
        k + 1
    } else {
        k
    }
}

/// Draw the pair of ranked indices `(i, j)`, `i < j`, that merges next.
pub fn sample_merge_pair<R: Rng + ?Sized>(
    state: &RankedMassVector,
    rng: &mut R,
) -> Result<(usize, usize)> {
    let n = state.len();
    if n < 2 {
        return Err(Error::NoMergePossible(n));
    }
    let i = size_biased_index(state.masses(), rng);
    let j = uniform_other(n, i, rng);
    Ok((i.min(j), i.max(j)))
}

/// One transition: the next state and the holding time before it.
pub fn step<R: Rng + ?Sized>(
    state: &RankedMassVector,
    rng: &mut R,
) -> Result<(RankedMassVector, f64)> {
    let rate = total_merge_rate(state)?;
    let (i, j) = sample_merge_pair(state, rng)?;
    let holding = Exp::new(rate)
        .map_err(|e| Error::Numerical {
            context: "coalescent holding time",
            message: e.to_string(),
        })?
        .sample(rng);
    Ok((state.merge(i, j)?, holding))
}

/// Run the coalescent from `initial` until a single cluster remains.
pub fn simulate<R: Rng + ?Sized>(initial: &RankedMassVector, rng: &mut R) -> CoalescentTrajectory {
    let n = initial.len();
    let mut states = Vec::with_capacity(n);
    let mut jump_times = Vec::with_capacity(n.saturating_sub(1));
    states.push(initial.clone());
    let mut time = 0.0;
    while states.last().map_or(0, RankedMassVector::len) > 1 {
        let current = states.last().expect("non-empty");
        let (next, holding) = step(current, rng).expect("at least two clusters");
        time += holding;
        jump_times.push(time);
        states.push(next);
    }
    CoalescentTrajectory { states, jump_times }
}

/// Configuration at time `t` of a coalescent started from `initial`.
pub fn state_at<R: Rng + ?Sized>(
    initial: &RankedMassVector,
    t: f64,
    rng: &mut R,
) -> Result<RankedMassVector> {
    if !(t >= 0.0) {
        return Err(Error::invalid_arg(format!("time must be non-negative, got {t}")));
    }
    let mut engine = CoalescentEngine::new(initial);
    engine.run_until(t, rng);
    Ok(engine.state())
}

/// Time elapsed since the start of a monodisperse `n`-cluster coalescent
/// at standard time `t`, when the clock starts at `-½ log n`.
pub fn standard_elapsed(n: usize, t: f64) -> f64 {
    t + 0.5 * (n as f64).ln()
}

/// Configuration at standard time `t` of the coalescent started from `n`
/// clusters of mass `1/n` at time `-½ log n`.
pub fn standard_monodisperse_state<R: Rng + ?Sized>(
    n: usize,
    t: f64,
    rng: &mut R,
) -> Result<RankedMassVector> {
    let elapsed = standard_elapsed(n, t);
    if elapsed < 0.0 {
        return Err(Error::invalid_arg(format!(
            "standard time {t} precedes the start -½ log {n}"
        )));
    }
    state_at(&RankedMassVector::monodisperse(n)?, elapsed, rng)
}

/// Unranked coalescent state with O(log n) transitions, for large `n`.
///
/// Masses live in fixed slots; merged-away slots are zeroed and dropped from
/// the active list. Ranking happens only when a state is read out.
#[derive(Debug, Clone)]
pub struct CoalescentEngine {
    masses: Vec<f64>,
    weights: Fenwick,
    active: Vec<usize>,
    position: Vec<usize>,
    time: f64,
}

impl CoalescentEngine {
    pub fn new(initial: &RankedMassVector) -> Self {
        let masses = initial.masses().to_vec();
        let n = masses.len();
        Self {
            weights: Fenwick::from_weights(&masses),
            masses,
            active: (0..n).collect(),
            position: (0..n).collect(),
            time: 0.0,
        }
    }

    pub fn len(&self) -> usize {
        self.active.len()
    }

    pub fn is_empty(&self) -> bool {
        self.active.is_empty()
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    fn pick_size_biased<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        loop {
            let slot = self.weights.find(rng.random::<f64>() * self.weights.total());
            // rounding residue in the tree can point at an emptied slot
            if self.masses[slot] > 0.0 {
                return slot;
            }
        }
    }

    fn merge_slots(&mut self, keep: usize, drop: usize) {
        let moved = self.masses[drop];
        self.masses[keep] += moved;
        self.masses[drop] = 0.0;
        self.weights.add(keep, moved);
        self.weights.add(drop, -moved);
        let p = self.position[drop];
        let last = *self.active.last().expect("non-empty");
        self.active.swap_remove(p);
        if last != drop {
            self.position[last] = p;
        }
    }

    /// Perform one merge, returning its holding time, or `None` when a
    /// single cluster remains.
    pub fn step<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Option<f64> {
        let n = self.active.len();
        if n < 2 {
            return None;
        }
        let holding = -(1.0 - rng.random::<f64>()).ln() / (n - 1) as f64;
        self.apply_random_merge(rng);
        self.time += holding;
        Some(holding)
    }

    fn apply_random_merge<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        let n = self.active.len();
        let i = self.pick_size_biased(rng);
        let k = uniform_other(n, self.position[i], rng);
        let j = self.active[k];
        self.merge_slots(i, j);
    }

    /// Advance to time `t`, stopping before the first merge after `t`.
    pub fn run_until<R: Rng + ?Sized>(&mut self, t: f64, rng: &mut R) {
        loop {
            let n = self.active.len();
            if n < 2 {
                break;
            }
            let holding = -(1.0 - rng.random::<f64>()).ln() / (n - 1) as f64;
            if self.time + holding > t {
                break;
            }
            self.time += holding;
            self.apply_random_merge(rng);
        }
        self.time = self.time.max(t);
    }

    /// Current cluster masses in slot order (unranked).
    pub fn cluster_masses(&self) -> impl Iterator<Item = f64> + '_ {
        self.active.iter().map(move |&s| self.masses[s])
    }

    pub fn state(&self) -> RankedMassVector {
        if self.active.len() == 1 {
            return RankedMassVector::unit();
        }
        let mut masses: Vec<f64> = self.cluster_masses().collect();
        masses.sort_by(|a, b| b.total_cmp(a));
        let sum: f64 = masses.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            masses.iter_mut().for_each(|x| *x /= sum);
        }
        RankedMassVector::from_sorted_unchecked(masses)
    }
}
