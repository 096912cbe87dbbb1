//! One-dimensional sticky particles: free flight plus completely inelastic
//! collisions that conserve mass and momentum.
//!
//! Every cluster moves on an affine trajectory `c + v t`. When two neighbours
//! meet they fuse into a cluster whose intercept and velocity are the
//! mass-weighted averages of theirs, so the merged trajectory is the centre
//! of mass of its constituents in free flight. Particles are created in
//! spatial order with ids `0..n`; the `k`-th merge creates id `n + k`.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap, HashSet};
use std::io::{self, Write};

use crate::error::{Error, Result};
use crate::levy::DiscretePath;
use crate::mass::RankedMassVector;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cluster {
    pub id: usize,
    pub position: f64,
    pub mass: f64,
    pub velocity: f64,
    /// Index of the leftmost initial particle in the cluster.
    pub first: usize,
    /// Number of initial particles in the cluster.
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterSystem {
    clusters: Vec<Cluster>,
    time: f64,
}

impl ClusterSystem {
    /// Initial particles `(position, mass, velocity)` at time 0, positions
    /// strictly increasing.
    pub fn from_particles(particles: &[(f64, f64, f64)]) -> Result<Self> {
        if particles.is_empty() {
            return Err(Error::invalid_arg("system needs at least one particle"));
        }
        if particles.windows(2).any(|w| !(w[1].0 > w[0].0)) {
            return Err(Error::invalid_arg("positions must be strictly increasing"));
        }
        if particles
            .iter()
            .any(|&(x, m, v)| !(m > 0.0) || !x.is_finite() || !v.is_finite() || !m.is_finite())
        {
            return Err(Error::invalid_arg("particles need finite positions and velocities and positive mass"));
        }
        let clusters = particles
            .iter()
            .enumerate()
            .map(|(i, &(position, mass, velocity))| Cluster {
                id: i,
                position,
                mass,
                velocity,
                first: i,
                count: 1,
            })
            .collect();
        Ok(Self { clusters, time: 0.0 })
    }

    pub fn clusters(&self) -> &[Cluster] {
        &self.clusters
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn len(&self) -> usize {
        self.clusters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clusters.is_empty()
    }

    pub fn total_mass(&self) -> f64 {
        self.clusters.iter().map(|c| c.mass).sum()
    }

    pub fn momentum(&self) -> f64 {
        self.clusters.iter().map(|c| c.mass * c.velocity).sum()
    }

    /// `(first, count)` of every cluster, left to right.
    pub fn blocks(&self) -> Vec<(usize, usize)> {
        self.clusters.iter().map(|c| (c.first, c.count)).collect()
    }
}

/// Particles of mass `dr` at `(i + ½) dr`, `i = 0..n`, with velocity read
/// from `path` at the particle position, preceded by `buffer` particles of
/// velocity 0 at `-(j + ½) dr`.
pub fn initial_system(path: &DiscretePath, n: usize, dr: f64, buffer: usize) -> Result<ClusterSystem> {
    if n == 0 || !(dr > 0.0) {
        return Err(Error::invalid_arg("need n >= 1 and dr > 0"));
    }
    let h = path.step();
    let mut particles = Vec::with_capacity(n + buffer);
    for j in (0..buffer).rev() {
        particles.push((-(j as f64 + 0.5) * dr, dr, 0.0));
    }
    for i in 0..n {
        let x = (i as f64 + 0.5) * dr;
        let k = (x / h).floor() as usize;
        let v = *path.values().get(k).ok_or_else(|| {
            Error::invalid_arg(format!(
                "path of horizon {} does not cover {n} particles of width {dr}",
                path.horizon()
            ))
        })?;
        particles.push((x, dr, v));
    }
    ClusterSystem::from_particles(&particles)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MergeEvent {
    pub time: f64,
    pub left_id: usize,
    pub right_id: usize,
    pub location: f64,
    pub merged_mass: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EventLog {
    initial_masses: Vec<f64>,
    events: Vec<MergeEvent>,
}

impl EventLog {
    pub fn events(&self) -> &[MergeEvent] {
        &self.events
    }

    pub fn initial_count(&self) -> usize {
        self.initial_masses.len()
    }

    pub fn mass_of(&self, id: usize) -> Result<f64> {
        let n = self.initial_count();
        if id < n {
            Ok(self.initial_masses[id])
        } else {
            self.events
                .get(id - n)
                .map(|e| e.merged_mass)
                .ok_or(Error::UnknownCluster(id))
        }
    }

    /// Event that created `id`, if it is not an initial particle.
    pub fn creation(&self, id: usize) -> Option<&MergeEvent> {
        id.checked_sub(self.initial_count())
            .and_then(|k| self.events.get(k))
    }

    /// CSV with header `time,left_id,right_id,location,merged_mass`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "time,left_id,right_id,location,merged_mass")?;
        for e in &self.events {
            writeln!(
                out,
                "{:.16e},{},{},{:.16e},{:.16e}",
                e.time, e.left_id, e.right_id, e.location, e.merged_mass
            )?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
struct Time(f64);
impl Eq for Time {}
impl Ord for Time {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0)
    }
}

struct Slot {
    id: usize,
    intercept: f64,
    velocity: f64,
    mass: f64,
    first: usize,
    count: usize,
    generation: u64,
}

fn collision_time(a: &Slot, b: &Slot) -> Option<f64> {
    (a.velocity > b.velocity).then(|| (b.intercept - a.intercept) / (a.velocity - b.velocity))
}

/// Run the dynamics up to `horizon` (absolute time). Events that happen at
/// the same time are applied left to right.
pub fn evolve(system: &ClusterSystem, horizon: f64) -> Result<(EventLog, ClusterSystem)> {
    if !(horizon >= system.time) {
        return Err(Error::invalid_arg(format!(
            "horizon {horizon} precedes the system time {}",
            system.time
        )));
    }
    let t0 = system.time;
    let n = system.clusters.len();
    let mut slots: Vec<Slot> = system
        .clusters
        .iter()
        .map(|c| Slot {
            id: c.id,
            intercept: c.position - c.velocity * t0,
            velocity: c.velocity,
            mass: c.mass,
            first: c.first,
            count: c.count,
            generation: 0,
        })
        .collect();
    let mut next: Vec<Option<usize>> = (0..n).map(|i| (i + 1 < n).then_some(i + 1)).collect();
    let mut prev: Vec<Option<usize>> = (0..n).map(|i| i.checked_sub(1)).collect();
    let mut alive = vec![true; n];

    let initial_count = system
        .clusters
        .iter()
        .map(|c| c.id + 1)
        .max()
        .unwrap_or(0);
    let mut initial_masses = vec![0.0; initial_count];
    for c in &system.clusters {
        initial_masses[c.id] = c.mass;
    }

    type Entry = Reverse<(Time, usize, u64, usize, u64)>;
    let mut heap: BinaryHeap<Entry> = BinaryHeap::new();
    let push = |heap: &mut BinaryHeap<Entry>, slots: &[Slot], l: usize, r: usize, now: f64| {
        if let Some(t) = collision_time(&slots[l], &slots[r]) {
            let t = t.max(now);
            if t <= horizon {
                heap.push(Reverse((Time(t), l, slots[l].generation, r, slots[r].generation)));
            }
        }
    };
    for i in 0..n.saturating_sub(1) {
        push(&mut heap, &slots, i, i + 1, t0);
    }

    let mut events = Vec::new();
    while let Some(Reverse((Time(t), l, gl, r, gr))) = heap.pop() {
        if !alive[l] || !alive[r] || slots[l].generation != gl || slots[r].generation != gr || next[l] != Some(r) {
            continue;
        }
        let (a, b) = (&slots[l], &slots[r]);
        let mass = a.mass + b.mass;
        let intercept = (a.mass * a.intercept + b.mass * b.intercept) / mass;
        let velocity = (a.mass * a.velocity + b.mass * b.velocity) / mass;
        let new_id = initial_count + events.len();
        events.push(MergeEvent {
            time: t,
            left_id: a.id,
            right_id: b.id,
            location: intercept + velocity * t,
            merged_mass: mass,
        });
        let count = a.count + b.count;
        let first = a.first;
        let merged = &mut slots[l];
        merged.id = new_id;
        merged.intercept = intercept;
        merged.velocity = velocity;
        merged.mass = mass;
        merged.first = first;
        merged.count = count;
        merged.generation += 1;
        alive[r] = false;
        next[l] = next[r];
        if let Some(nr) = next[r] {
            prev[nr] = Some(l);
        }
        if let Some(p) = prev[l] {
            push(&mut heap, &slots, p, l, t);
        }
        if let Some(nx) = next[l] {
            push(&mut heap, &slots, l, nx, t);
        }
    }

    let mut clusters = Vec::new();
    let mut cur = (0..n).find(|&i| alive[i]);
    while let Some(i) = cur {
        let s = &slots[i];
        clusters.push(Cluster {
            id: s.id,
            position: s.intercept + s.velocity * horizon,
            mass: s.mass,
            velocity: s.velocity,
            first: s.first,
            count: s.count,
        });
        cur = next[i];
    }
    Ok((
        EventLog {
            initial_masses,
            events,
        },
        ClusterSystem {
            clusters,
            time: horizon,
        },
    ))
}

/// Cluster decomposition at time `t` without event simulation: the
/// mass-weighted isotonic regression of the free-flight positions
/// `x_i + (t - t_0) v_i`, computed by pooling adjacent violators. Each block
/// sits at the mass-weighted mean of its free-flight positions. Ids of the
/// returned clusters are the ids of their leftmost members.
pub fn variational_oracle(system: &ClusterSystem, t: f64) -> Result<ClusterSystem> {
    if !(t >= system.time) {
        return Err(Error::invalid_arg("oracle time precedes the system time"));
    }
    let dt = t - system.time;
    struct Block {
        mass: f64,
        moment: f64,
        momentum: f64,
        start: usize,
        end: usize,
    }
    let mut blocks: Vec<Block> = Vec::new();
    for (i, c) in system.clusters.iter().enumerate() {
        let mut b = Block {
            mass: c.mass,
            moment: c.mass * (c.position + dt * c.velocity),
            momentum: c.mass * c.velocity,
            start: i,
            end: i + 1,
        };
        while let Some(top) = blocks.last() {
            if top.moment / top.mass >= b.moment / b.mass {
                let top = blocks.pop().expect("non-empty");
                b = Block {
                    mass: top.mass + b.mass,
                    moment: top.moment + b.moment,
                    momentum: top.momentum + b.momentum,
                    start: top.start,
                    end: b.end,
                };
            } else {
                break;
            }
        }
        blocks.push(b);
    }
    let src = &system.clusters;
    let clusters = blocks
        .iter()
        .map(|b| Cluster {
            id: src[b.start].id,
            position: b.moment / b.mass,
            mass: src[b.start..b.end].iter().map(|c| c.mass).sum(),
            velocity: b.momentum / b.mass,
            first: src[b.start].first,
            count: src[b.start..b.end].iter().map(|c| c.count).sum(),
        })
        .collect();
    Ok(ClusterSystem { clusters, time: t })
}

/// Heaviest cluster with position in `[a, b]`; ties go to the leftmost.
pub fn pick_cluster(system: &ClusterSystem, a: f64, b: f64) -> Result<usize> {
    let mut best: Option<&Cluster> = None;
    for c in system.clusters.iter().filter(|c| c.position >= a && c.position <= b) {
        if best.is_none_or(|x| c.mass > x.mass) {
            best = Some(c);
        }
    }
    best.map(|c| c.id).ok_or_else(|| {
        Error::invalid_arg(format!("no cluster in the window [{a}, {b}]"))
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HistoryMerge {
    pub time: f64,
    pub left: usize,
    pub right: usize,
    pub merged: usize,
}

/// The merge tree of a picked cluster. `M(r)` is the ranked list of masses,
/// normalized by the picked cluster's mass, of the clusters present at time
/// `r` that have fused into the picked cluster by the observation time.
/// States are rebuilt from the tree on demand.
#[derive(Debug, Clone, PartialEq)]
pub struct MergerHistory {
    pub picked: usize,
    pub observation_time: f64,
    pub mass: f64,
    leaves: Vec<usize>,
    /// Non-decreasing in time.
    merges: Vec<HistoryMerge>,
    normalized: HashMap<usize, f64>,
}

impl MergerHistory {
    pub fn merges(&self) -> &[HistoryMerge] {
        &self.merges
    }

    pub fn merge_times(&self) -> Vec<f64> {
        self.merges.iter().map(|m| m.time).collect()
    }

    pub fn leaf_count(&self) -> usize {
        self.leaves.len()
    }

    /// Mass of a cluster in the tree, divided by the picked cluster's mass.
    pub fn normalized_mass(&self, id: usize) -> Option<f64> {
        self.normalized.get(&id).copied()
    }

    fn ranked(&self, ids: impl Iterator<Item = usize>) -> RankedMassVector {
        let masses: Vec<f64> = ids.map(|id| self.normalized[&id]).collect();
        RankedMassVector::rank(&masses).expect("positive masses summing to one")
    }

    fn ids_after(&self, k: usize) -> Vec<usize> {
        let mut ids: HashSet<usize> = self.leaves.iter().copied().collect();
        for m in &self.merges[..k] {
            ids.remove(&m.left);
            ids.remove(&m.right);
            ids.insert(m.merged);
        }
        let mut ids: Vec<usize> = ids.into_iter().collect();
        ids.sort_unstable();
        ids
    }

    /// State after the first `k` merges.
    pub fn state_after(&self, k: usize) -> RankedMassVector {
        self.ranked(self.ids_after(k.min(self.merges.len())).into_iter())
    }

    /// `M(r)`: merges at times `<= r` have happened.
    pub fn state_at(&self, r: f64) -> RankedMassVector {
        self.state_after(self.merges.partition_point(|m| m.time <= r))
    }

    /// Every state, from the leaves to `(1)`.
    pub fn states(&self) -> Vec<RankedMassVector> {
        let mut ids: HashSet<usize> = self.leaves.iter().copied().collect();
        let mut out = vec![self.ranked(self.leaves.iter().copied())];
        for m in &self.merges {
            ids.remove(&m.left);
            ids.remove(&m.right);
            ids.insert(m.merged);
            let mut sorted: Vec<usize> = ids.iter().copied().collect();
            sorted.sort_unstable();
            out.push(self.ranked(sorted.into_iter()));
        }
        out
    }

    /// The last merges, found by splitting clusters backwards from `(1)`:
    /// for every merge that starts from a state of at most `max_blocks`
    /// blocks, the ranked state before it and the normalized masses of the
    /// merging pair. Ordered by decreasing block count.
    pub fn final_transitions(&self, max_blocks: usize) -> Vec<(RankedMassVector, (f64, f64))> {
        let mut ids = vec![self.picked];
        let mut out = Vec::new();
        for m in self.merges.iter().rev() {
            if ids.len() + 1 > max_blocks {
                break;
            }
            let at = ids.iter().position(|&id| id == m.merged).expect("merge output is present");
            ids.swap_remove(at);
            ids.push(m.left);
            ids.push(m.right);
            let pair = (self.normalized[&m.left], self.normalized[&m.right]);
            out.push((self.ranked(ids.iter().copied()), pair));
        }
        out.reverse();
        out
    }
}

pub fn merger_history(log: &EventLog, picked: usize, t: f64) -> Result<MergerHistory> {
    let mass = log.mass_of(picked)?;
    if let Some(e) = log.creation(picked) {
        if e.time > t {
            return Err(Error::invalid_arg(format!(
                "cluster {picked} does not exist yet at time {t}"
            )));
        }
    }
    let n = log.initial_count();
    let mut leaves = Vec::new();
    let mut merges = Vec::new();
    let mut normalized = HashMap::new();
    let mut stack = vec![picked];
    while let Some(id) = stack.pop() {
        normalized.insert(id, log.mass_of(id)? / mass);
        if id < n {
            leaves.push(id);
        } else {
            let e = &log.events[id - n];
            merges.push(HistoryMerge {
                time: e.time,
                left: e.left_id,
                right: e.right_id,
                merged: id,
            });
            stack.push(e.left_id);
            stack.push(e.right_id);
        }
    }
    // ids of merged clusters follow processing order, which is
    // non-decreasing in time
    merges.sort_unstable_by_key(|m| m.merged);
    leaves.sort_unstable();
    normalized.insert(picked, 1.0);
    Ok(MergerHistory {
        picked,
        observation_time: t,
        mass,
        leaves,
        merges,
        normalized,
    })
}

/// `r = t e^s / (t + e^s)`, mapping `s ∈ ℝ` onto `r ∈ (0, t)`.
pub fn time_change(t: f64, s: f64) -> f64 {
    // written as t / (1 + t e^{-s}) to stay finite for large s
    t / (1.0 + t * (-s).exp())
}

/// Inverse of [`time_change`]: `s = ln(t r / (t - r))`.
pub fn inverse_time_change(t: f64, r: f64) -> f64 {
    (t * r / (t - r)).ln()
}

/// The history as a function of `s`: the finest state at `s = -∞`, then the
/// state reached at each merge, keyed by the merge's `s` value.
pub fn time_changed_chain(history: &MergerHistory) -> Vec<(f64, RankedMassVector)> {
    let t = history.observation_time;
    let states = history.states();
    let mut out = Vec::with_capacity(states.len());
    let mut states = states.into_iter();
    out.push((f64::NEG_INFINITY, states.next().expect("at least one state")));
    for (m, state) in history.merges.iter().zip(states) {
        out.push((inverse_time_change(t, m.time), state));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::levy::{simulate_path, LevySpec};
    use crate::rng::RngStream;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn two_particle_collision() {
        let dr = 0.01;
        let path = DiscretePath::new(dr, vec![0.0; 4]).unwrap();
        let _ = initial_system(&path, 2, dr, 0).unwrap();
        let sys = ClusterSystem::from_particles(&[(0.5 * dr, dr, 1.0), (1.5 * dr, dr, -1.0)]).unwrap();
        let (log, fin) = evolve(&sys, 1.0).unwrap();
        assert_eq!(log.events().len(), 1);
        let e = log.events()[0];
        assert_relative_eq!(e.time, dr / 2.0, max_relative = 1e-12);
        assert_relative_eq!(e.location, dr, max_relative = 1e-12);
        assert_eq!(fin.len(), 1);
        assert_eq!(fin.clusters()[0].velocity, 0.0);
        assert_eq!(fin.clusters()[0].id, 2);
        let oracle = variational_oracle(&sys, 1.0).unwrap();
        assert_eq!(oracle.blocks(), fin.blocks());
        assert_relative_eq!(oracle.clusters()[0].position, fin.clusters()[0].position, max_relative = 1e-12);
    }

    #[test]
    fn unequal_masses() {
        let sys = ClusterSystem::from_particles(&[(0.0, 1.0, 4.0), (1.0, 3.0, 0.0)]).unwrap();
        let (log, fin) = evolve(&sys, 10.0).unwrap();
        assert_eq!(fin.clusters()[0].velocity, 1.0);
        assert_eq!(log.events()[0].merged_mass, 4.0);
        assert_relative_eq!(log.events()[0].time, 0.25);
    }

    #[test]
    fn zero_path_never_collides() {
        let path = DiscretePath::new(0.01, vec![0.0; 100]).unwrap();
        let sys = initial_system(&path, 100, 0.01, 20).unwrap();
        assert_eq!(sys.len(), 120);
        let (log, fin) = evolve(&sys, 100.0).unwrap();
        assert!(log.events().is_empty());
        assert_eq!(fin.len(), 120);
        assert!(initial_system(&path, 101, 0.01, 0).is_err());
    }

    #[test]
    fn momentum_is_sum_of_path_values() {
        let mut rng = RngStream::new(31, 0);
        let path = simulate_path(&LevySpec::brownian(), 1.0, 1e-3, &mut rng).unwrap();
        let sys = initial_system(&path, 1000, 1e-3, 0).unwrap();
        let direct: f64 = path.values().iter().sum::<f64>() * 1e-3;
        assert_relative_eq!(sys.momentum(), direct, max_relative = 1e-9);
    }

    fn brownian_system(seed: u64, n: usize, buffer: usize) -> ClusterSystem {
        let dr = 1.0 / n as f64;
        let mut rng = RngStream::new(seed, 0);
        let path = simulate_path(&LevySpec::brownian(), 1.0, dr, &mut rng).unwrap();
        initial_system(&path, n, dr, buffer).unwrap()
    }

    #[test]
    fn conservation_and_oracle() {
        for seed in 0..20 {
            let sys = brownian_system(seed, 1000, 200);
            let (log, fin) = evolve(&sys, 1.0).unwrap();
            let p0 = sys.momentum();
            assert!((fin.momentum() - p0).abs() <= 1e-9 * sys.clusters().iter().map(|c| (c.mass * c.velocity).abs()).sum::<f64>());
            assert_relative_eq!(fin.total_mass(), sys.total_mass(), max_relative = 1e-12);
            assert!(fin.clusters().windows(2).all(|w| w[0].position < w[1].position));
            let oracle = variational_oracle(&sys, 1.0).unwrap();
            assert_eq!(oracle.blocks(), fin.blocks());
            for (a, b) in oracle.clusters().iter().zip(fin.clusters()) {
                assert!((a.position - b.position).abs() < 1e-6);
            }
            assert_eq!(log.events().len(), sys.len() - fin.len());
        }
    }

    #[test]
    fn simultaneous_triple_collision() {
        let sys = ClusterSystem::from_particles(&[(-1.0, 1.0, 1.0), (0.0, 1.0, 0.0), (1.0, 1.0, -1.0)]).unwrap();
        let (log, fin) = evolve(&sys, 2.0).unwrap();
        assert_eq!(fin.len(), 1);
        assert_eq!(log.events()[0].left_id, 0);
        assert_eq!(log.events()[1].left_id, 3);
        assert_eq!(fin.clusters()[0].velocity, 0.0);
        assert_eq!(variational_oracle(&sys, 2.0).unwrap().blocks(), fin.blocks());
    }

    #[test]
    fn evolve_in_stages_matches_single_run() {
        let sys = brownian_system(40, 500, 100);
        let (_, mid) = evolve(&sys, 0.3).unwrap();
        let (_, staged) = evolve(&mid, 1.0).unwrap();
        let (_, direct) = evolve(&sys, 1.0).unwrap();
        assert_eq!(staged.blocks(), direct.blocks());
        assert_eq!(variational_oracle(&mid, 1.0).unwrap().blocks(), direct.blocks());
    }

    #[test]
    fn pick_rules() {
        let sys = ClusterSystem::from_particles(&[(0.3, 0.2, 0.0), (0.8, 0.5, 0.0), (1.5, 3.0, 0.0)]).unwrap();
        assert_eq!(pick_cluster(&sys, 0.0, 1.0).unwrap(), 1);
        assert_eq!(pick_cluster(&sys, 0.0, 0.5).unwrap(), 0);
        assert!(pick_cluster(&sys, 2.0, 3.0).is_err());
        let tie = ClusterSystem::from_particles(&[(0.3, 0.5, 0.0), (0.8, 0.5, 0.0)]).unwrap();
        assert_eq!(pick_cluster(&tie, 0.0, 1.0).unwrap(), 0);
    }

    #[test]
    fn history_examples() {
        let sys = ClusterSystem::from_particles(&[(0.0, 0.6, 1.0), (1.0, 0.4, 0.0), (5.0, 1.0, 0.0)]).unwrap();
        let (log, _) = evolve(&sys, 3.0).unwrap();
        let h = merger_history(&log, 3, 3.0).unwrap();
        assert_eq!(h.merge_times(), vec![1.0]);
        assert_eq!(h.state_at(0.5).masses(), &[0.6, 0.4]);
        assert_eq!(h.state_at(1.0).masses(), &[1.0]);
        assert_eq!(h.state_at(2.9).masses(), &[1.0]);
        let lone = merger_history(&log, 2, 3.0).unwrap();
        assert!(lone.merges().is_empty());
        assert_eq!(lone.state_at(1.0).masses(), &[1.0]);
        assert!(merger_history(&log, 99, 3.0).is_err());
        assert!(merger_history(&log, 3, 0.5).is_err());

        let mut out = Vec::new();
        log.write_csv(&mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines[0], "time,left_id,right_id,location,merged_mass");
        assert_eq!(lines.len(), 2);
        assert!(lines[1].starts_with("1.0000000000000000e0,0,1,"));
    }

    #[test]
    fn history_block_count_monotone() {
        let sys = brownian_system(41, 1000, 500);
        let (log, fin) = evolve(&sys, 1.0).unwrap();
        let picked = pick_cluster(&fin, 0.0, 1.0).unwrap();
        let h = merger_history(&log, picked, 1.0).unwrap();
        let states = h.states();
        assert_eq!(states.len(), h.leaf_count());
        assert!(states.windows(2).all(|w| w[1].len() + 1 == w[0].len()));
        assert_eq!(states.last().unwrap().masses(), &[1.0]);
        assert!(h.merge_times().windows(2).all(|w| w[0] <= w[1]));
        assert_eq!(h.state_at(0.0), states[h.merge_times().partition_point(|&m| m <= 0.0)]);
        // backward reconstruction agrees with the forward replay
        let tail = h.final_transitions(6);
        let k0 = states.len() - 1 - tail.len();
        for (j, (before, (a, b))) in tail.iter().enumerate() {
            assert_eq!(before, &states[k0 + j]);
            let m = h.merges()[k0 + j];
            assert_eq!((*a, *b), (h.normalized_mass(m.left).unwrap(), h.normalized_mass(m.right).unwrap()));
        }
        assert_eq!(tail.len(), 5.min(states.len() - 1));
        let chain = time_changed_chain(&h);
        assert!(chain.windows(2).all(|w| w[0].0 <= w[1].0));
        assert_eq!(chain.len(), states.len());
    }

    #[test]
    fn time_change_limits() {
        let t = 1.5;
        assert!((time_change(t, 60.0) - t).abs() < 1e-12);
        assert!(time_change(t, -60.0) < 1e-20);
        let mut last = 0.0;
        for k in -100..100 {
            let s = k as f64 * 0.1;
            let r = time_change(t, s);
            // derivative t² e^s / (t + e^s)²
            let es = s.exp();
            assert!(t * t * es / (t + es).powi(2) > 0.0);
            assert!(r > last);
            assert_relative_eq!(r, t * (1.0 - t / (t + es)), max_relative = 1e-12);
            assert_relative_eq!(inverse_time_change(t, r), s, epsilon = 1e-9);
            last = r;
        }
    }

    proptest! {
        #[test]
        fn oracle_matches_evolve(
            vs in proptest::collection::vec(-3.0..3.0f64, 2..40),
            ms in proptest::collection::vec(0.1..2.0f64, 40),
            t in 0.0..3.0f64,
        ) {
            let particles: Vec<_> = vs.iter().enumerate().map(|(i, &v)| (i as f64 * 0.1, ms[i], v)).collect();
            let sys = ClusterSystem::from_particles(&particles).unwrap();
            let (_, fin) = evolve(&sys, t).unwrap();
            let oracle = variational_oracle(&sys, t).unwrap();
            prop_assert_eq!(oracle.blocks(), fin.blocks());
            prop_assert!((fin.momentum() - sys.momentum()).abs() < 1e-9 * (1.0 + sys.momentum().abs()));
        }
    }
}
