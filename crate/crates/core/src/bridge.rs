//! Bridges with exchangeable increments, their rotation into excursions, and
//! the fragmentation obtained by cutting an excursion along the lines of
//! slope `t`.
//!
//! A [`JumpBridge`] puts jumps of the given sizes at independent uniform
//! locations on a line of slope `-Σx`. Rotating it at its infimum
//! ([`vervaat_transform`]) gives an excursion. For every `t >= 0` the
//! excursion splits `[0, 1)` into `t`-intervals: maximal stretches where
//! `t·u - ε(u)` stays strictly below the running maximum of its positive
//! part. Ranked per-interval jump sums, observed at the split times in
//! reverse order, form the additive coalescent state chain.
//!
//! The Brownian case is approximated on a grid: a Gaussian random-walk
//! bridge rotated at its minimum. On the grid the record set of
//! `t·u - ε(u)` is treated as a null set, so the blocks are the gaps between
//! consecutive record points and their lengths sum to one.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::mass::RankedMassVector;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jump {
    pub location: f64,
    pub size: f64,
}

/// `b(u) = Σ x_i (1{u >= U_i} - u)` on `[0, 1]`; jumps sorted by location.
#[derive(Debug, Clone, PartialEq)]
pub struct JumpBridge {
    jumps: Vec<Jump>,
    total: f64,
}

impl JumpBridge {
    pub fn new(mut jumps: Vec<Jump>) -> Result<Self> {
        if jumps.is_empty() {
            return Err(Error::invalid_arg("a bridge needs at least one jump"));
        }
        for j in &jumps {
            if !(0.0..1.0).contains(&j.location) || !(j.size > 0.0) {
                return Err(Error::invalid_arg(format!(
                    "jump of size {} at {} is not valid",
                    j.size, j.location
                )));
            }
        }
        jumps.sort_by(|a, b| a.location.total_cmp(&b.location));
        if jumps.windows(2).any(|w| w[0].location == w[1].location) {
            return Err(Error::invalid_arg("jump locations must be distinct"));
        }
        let total = jumps.iter().map(|j| j.size).sum();
        Ok(Self { jumps, total })
    }

    pub fn jumps(&self) -> &[Jump] {
        &self.jumps
    }

    pub fn total_mass(&self) -> f64 {
        self.total
    }

    pub fn drift_slope(&self) -> f64 {
        -self.total
    }

    /// `b(u)`, right-continuous.
    pub fn eval(&self, u: f64) -> f64 {
        self.jumps
            .iter()
            .filter(|j| j.location <= u)
            .map(|j| j.size)
            .sum::<f64>()
            - self.total * u
    }

    /// `b(u-)`.
    pub fn left_limit(&self, u: f64) -> f64 {
        self.jumps
            .iter()
            .filter(|j| j.location < u)
            .map(|j| j.size)
            .sum::<f64>()
            - self.total * u
    }
}

/// Bridge with the given jump sizes at i.i.d. uniform locations.
pub fn build_bridge<R: Rng + ?Sized>(masses: &RankedMassVector, rng: &mut R) -> JumpBridge {
    loop {
        let jumps: Vec<Jump> = masses
            .masses()
            .iter()
            .map(|&size| Jump {
                location: rng.random::<f64>(),
                size,
            })
            .collect();
        // coincident locations have probability zero; redraw if they occur
        if let Ok(b) = JumpBridge::new(jumps) {
            return b;
        }
    }
}

/// Excursion with finitely many positive jumps and slope `-total` between
/// them. The first jump sits at `0`; `ε(0-) = ε(1-) = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct JumpExcursion {
    positions: Vec<f64>,
    sizes: Vec<f64>,
    /// `cumulative[k]`: total size of jumps strictly before `positions[k]`.
    cumulative: Vec<f64>,
    total: f64,
}

/// Discrete excursion: `values[i] = ε(i/m)`, `i = 0..=m`, with
/// `values[0] = values[m] = 0` and all values non-negative.
#[derive(Debug, Clone, PartialEq)]
pub struct GridExcursion {
    values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ExcursionPath {
    Jumps(JumpExcursion),
    Grid(GridExcursion),
}

/// Half-open interval `[start, end)` together with the mass it carries:
/// the jump sum for jump paths, the length for grid paths.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub start: f64,
    pub end: f64,
    pub mass: f64,
}

impl JumpExcursion {
    fn from_sorted(positions: Vec<f64>, sizes: Vec<f64>) -> Self {
        let mut cumulative = Vec::with_capacity(sizes.len());
        let mut acc = 0.0;
        for &x in &sizes {
            cumulative.push(acc);
            acc += x;
        }
        Self {
            positions,
            sizes,
            cumulative,
            total: acc,
        }
    }

    pub fn positions(&self) -> &[f64] {
        &self.positions
    }

    pub fn sizes(&self) -> &[f64] {
        &self.sizes
    }

    pub fn len(&self) -> usize {
        self.sizes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sizes.is_empty()
    }

    /// `ε(u)`, right-continuous.
    pub fn eval(&self, u: f64) -> f64 {
        let k = self.positions.partition_point(|&p| p <= u);
        let jumped: f64 = self.sizes[..k].iter().sum();
        jumped - self.total * u
    }

    /// `ε(u-)`.
    pub fn left_limit(&self, u: f64) -> f64 {
        let k = self.positions.partition_point(|&p| p < u);
        let jumped: f64 = self.sizes[..k].iter().sum();
        jumped - self.total * u
    }

    /// `t`-intervals by a left-to-right sweep. Between jumps
    /// `f(u) = t·u - ε(u)` increases with slope `t + total`; at a jump it
    /// drops by the jump size. An interval opens at a jump where `f` was at
    /// its running maximum and closes where `f` climbs back to that level.
    pub fn t_intervals(&self, t: f64) -> Vec<Interval> {
        let slope = t + self.total;
        let mut out = Vec::new();
        let mut level = 0.0f64;
        let mut open: Option<(f64, f64)> = None;
        let mut last_pos = 0.0;
        let mut f_after = 0.0;
        for k in 0..self.positions.len() {
            let p = self.positions[k];
            let f_before = slope * p - self.cumulative[k];
            if k > 0 {
                if let Some((start, mass)) = open {
                    if f_before > level {
                        let end = (last_pos + (level - f_after) / slope).clamp(last_pos, p);
                        out.push(Interval { start, end, mass });
                        open = None;
                    }
                }
                if open.is_none() {
                    level = level.max(f_before);
                }
            }
            f_after = f_before - self.sizes[k];
            let (start, mass) = open.unwrap_or((p, 0.0));
            open = Some((start, mass + self.sizes[k]));
            last_pos = p;
        }
        if let Some((start, mass)) = open {
            // f(1-) = t
            let end = if t > level {
                (last_pos + (level - f_after) / slope).clamp(last_pos, 1.0)
            } else {
                1.0
            };
            out.push(Interval { start, end, mass });
        }
        out
    }

    /// Threshold above which jump `k` opens its own `t`-interval:
    /// `max_{i<k} (C_k - C_i) / (p_k - p_i) - total`, with `C` the jump sums
    /// before each position. Jump 0 always opens one.
    pub fn split_thresholds(&self) -> Vec<f64> {
        let n = self.positions.len();
        let mut out = vec![f64::NEG_INFINITY; n];
        for k in 1..n {
            let mut steepest = f64::NEG_INFINITY;
            for i in 0..k {
                let slope = (self.cumulative[k] - self.cumulative[i])
                    / (self.positions[k] - self.positions[i]);
                steepest = steepest.max(slope);
            }
            out[k] = steepest - self.total;
        }
        out
    }
}

impl GridExcursion {
    /// Wrap grid values, checking the excursion shape.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() < 3 {
            return Err(Error::invalid_arg("grid excursion needs m >= 2"));
        }
        if values[0] != 0.0 || *values.last().expect("non-empty") != 0.0 {
            return Err(Error::invalid_arg("grid excursion must start and end at 0"));
        }
        if values.iter().any(|&v| !(v >= 0.0)) {
            return Err(Error::invalid_arg("grid excursion must be non-negative"));
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Number of grid steps `m`.
    pub fn steps(&self) -> usize {
        self.values.len() - 1
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    /// Grid indices `i` where `t·i/m - ε(i/m)` is at least its running
    /// maximum over earlier indices; index 0 always qualifies.
    pub fn record_indices(&self, t: f64) -> Vec<usize> {
        let m = self.steps() as f64;
        let mut best = f64::NEG_INFINITY;
        let mut records = Vec::new();
        for (i, &e) in self.values.iter().enumerate() {
            let f = t * (i as f64 / m) - e;
            if f >= best {
                records.push(i);
                best = f;
            }
        }
        records
    }

    pub fn t_intervals(&self, t: f64) -> Vec<Interval> {
        let m = self.steps() as f64;
        let mut records = self.record_indices(t);
        if *records.last().expect("index 0 is a record") != self.steps() {
            records.push(self.steps());
        }
        records
            .windows(2)
            .map(|w| Interval {
                start: w[0] as f64 / m,
                end: w[1] as f64 / m,
                mass: (w[1] - w[0]) as f64 / m,
            })
            .collect()
    }
}

impl ExcursionPath {
    pub fn t_intervals(&self, t: f64) -> Vec<Interval> {
        match self {
            ExcursionPath::Jumps(p) => p.t_intervals(t),
            ExcursionPath::Grid(g) => g.t_intervals(t),
        }
    }

    /// `ε(u)`; linear interpolation between grid points for grid paths.
    pub fn eval(&self, u: f64) -> f64 {
        match self {
            ExcursionPath::Jumps(p) => p.eval(u),
            ExcursionPath::Grid(g) => {
                let m = g.steps() as f64;
                let x = (u.clamp(0.0, 1.0) * m).min(m);
                let i = (x.floor() as usize).min(g.steps() - 1);
                let w = x - i as f64;
                g.values[i] * (1.0 - w) + g.values[i + 1] * w
            }
        }
    }
}

/// Rotate a bridge at the location of its infimum.
///
/// Between jumps the bridge decreases, so the infimum is a left limit
/// `b(U_i-)`; `μ` is the first location attaining it. The excursion is
/// `ε(u) = b(u + μ mod 1) - b(μ-)`, whose jumps sit at `(U_i - μ) mod 1`.
pub fn vervaat_transform(bridge: &JumpBridge) -> ExcursionPath {
    let jumps = bridge.jumps();
    let mut mu = jumps[0].location;
    let mut lowest = f64::INFINITY;
    let mut before = 0.0;
    for j in jumps {
        let value = before - bridge.total_mass() * j.location;
        if value < lowest {
            lowest = value;
            mu = j.location;
        }
        before += j.size;
    }
    let mut rotated: Vec<(f64, f64)> = jumps
        .iter()
        .map(|j| {
            let shifted = j.location - mu;
            let p = if shifted < 0.0 { shifted + 1.0 } else { shifted };
            (p, j.size)
        })
        .collect();
    rotated.sort_by(|a, b| a.0.total_cmp(&b.0));
    let (positions, sizes) = rotated.into_iter().unzip();
    ExcursionPath::Jumps(JumpExcursion::from_sorted(positions, sizes))
}

/// Rotate a discrete bridge `walk[0..=m]` (with `walk[0] = walk[m]`) at its
/// first minimum.
pub fn vervaat_grid(walk: &[f64]) -> Result<GridExcursion> {
    if walk.len() < 3 {
        return Err(Error::invalid_arg("grid excursion needs m >= 2"));
    }
    let m = walk.len() - 1;
    let cycle = &walk[..m];
    let (argmin, &min) = cycle
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .expect("non-empty");
    let mut values: Vec<f64> = (0..m).map(|i| cycle[(argmin + i) % m] - min).collect();
    values.push(0.0);
    GridExcursion::new(values)
}

/// Discrete approximation of the normalized Brownian excursion: a Gaussian
/// walk bridge on `m` steps (mean-centred increments, scaled by `m^{-1/2}`)
/// rotated at its minimum.
pub fn brownian_excursion<R: Rng + ?Sized>(m: usize, rng: &mut R) -> Result<GridExcursion> {
    if m < 2 {
        return Err(Error::invalid_arg("grid size m must be at least 2"));
    }
    let steps: Vec<f64> = (0..m).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    let mean = steps.iter().sum::<f64>() / m as f64;
    let scale = (m as f64).sqrt().recip();
    let mut walk = Vec::with_capacity(m + 1);
    let mut acc = 0.0;
    walk.push(0.0);
    for z in &steps[..m - 1] {
        acc += (z - mean) * scale;
        walk.push(acc);
    }
    walk.push(0.0);
    vervaat_grid(&walk)
}

/// Ranked block masses at parameter `t`: jump sums per `t`-interval for
/// jump paths, interval lengths for grid paths.
pub fn fragmentation_masses(path: &ExcursionPath, t: f64) -> RankedMassVector {
    let masses: Vec<f64> = path.t_intervals(t).iter().map(|i| i.mass).collect();
    RankedMassVector::from_weights(&masses).expect("blocks carry positive mass")
}

/// One sample of the standard additive coalescent at time `t`: ranked
/// lengths of the blocks of a grid excursion cut at slope `e^{-t}`.
pub fn standard_coalescent_marginal<R: Rng + ?Sized>(
    m: usize,
    t: f64,
    rng: &mut R,
) -> Result<RankedMassVector> {
    let path = ExcursionPath::Grid(brownian_excursion(m, rng)?);
    Ok(fragmentation_masses(&path, (-t).exp()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct FragmentationRecord {
    /// `0 < δ_1 <= … <= δ_{n-1}`.
    pub split_times: Vec<f64>,
    /// `states[k]`: block masses after the first `k` splits; `states[0] = (1)`.
    pub states: Vec<RankedMassVector>,
    /// Indices `k` (into `split_times`) with `split_times[k] == split_times[k-1]`.
    /// Such splits are applied in order of the position of the opening jump.
    pub simultaneous: Vec<usize>,
}

impl FragmentationRecord {
    /// The states in merging order, from `n` blocks down to one.
    pub fn coalescent_chain(&self) -> Vec<RankedMassVector> {
        self.states.iter().rev().cloned().collect()
    }
}

/// Exact split times of a jump excursion and the block masses between them.
pub fn split_times(path: &ExcursionPath) -> Result<FragmentationRecord> {
    let ExcursionPath::Jumps(exc) = path else {
        return Err(Error::invalid_arg(
            "split times are defined for finite-jump excursions only",
        ));
    };
    let thresholds = exc.split_thresholds();
    let mut order: Vec<usize> = (1..exc.len()).collect();
    order.sort_by(|&a, &b| thresholds[a].total_cmp(&thresholds[b]).then(a.cmp(&b)));

    let mut opens = vec![false; exc.len()];
    opens[0] = true;
    let mut states = Vec::with_capacity(exc.len());
    states.push(RankedMassVector::unit());
    let mut split_times = Vec::with_capacity(order.len());
    let mut simultaneous = Vec::new();
    for (k, &j) in order.iter().enumerate() {
        if k > 0 && thresholds[j] == thresholds[order[k - 1]] {
            simultaneous.push(k);
        }
        split_times.push(thresholds[j]);
        opens[j] = true;
        let mut blocks = Vec::new();
        for (i, &x) in exc.sizes.iter().enumerate() {
            if opens[i] {
                blocks.push(0.0);
            }
            *blocks.last_mut().expect("jump 0 opens a block") += x;
        }
        states.push(RankedMassVector::from_weights(&blocks)?);
    }
    Ok(FragmentationRecord {
        split_times,
        states,
        simultaneous,
    })
}

/// True when every interval of `fine` lies inside some interval of `coarse`.
pub fn is_refinement(fine: &[Interval], coarse: &[Interval]) -> bool {
    const SLACK: f64 = 1e-12;
    fine.iter().all(|f| {
        coarse
            .iter()
            .any(|c| c.start <= f.start + SLACK && f.end <= c.end + SLACK)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mass::rank;
    use crate::rng::RngStream;
    use crate::stats::mean_and_se;
    use approx::assert_relative_eq;

    fn fixed_bridge() -> JumpBridge {
        JumpBridge::new(vec![
            Jump {
                location: 0.5,
                size: 0.6,
            },
            Jump {
                location: 0.25,
                size: 0.4,
            },
        ])
        .unwrap()
    }

    #[test]
    fn bridge_values() {
        let b = fixed_bridge();
        assert_relative_eq!(b.eval(0.3), 0.1, max_relative = 1e-12);
        assert_eq!(b.eval(0.0), 0.0);
        assert!(b.eval(1.0).abs() < 1e-15);
        assert_eq!(b.drift_slope(), -1.0);
    }

    #[test]
    fn built_bridge_closes() {
        let mut rng = RngStream::new(1, 0);
        let masses = rank(&[0.4, 0.3, 0.2, 0.1]).unwrap();
        for _ in 0..100 {
            let b = build_bridge(&masses, &mut rng);
            assert!(b.eval(1.0).abs() < 1e-12);
            assert_eq!(b.eval(0.0).max(0.0), b.jumps().iter().filter(|j| j.location == 0.0).map(|j| j.size).sum::<f64>());
        }
        let single = build_bridge(&RankedMassVector::unit(), &mut rng);
        assert_eq!(single.jumps().len(), 1);
        assert_eq!(single.drift_slope(), -1.0);
    }

    #[test]
    fn vervaat_single_jump() {
        let b = JumpBridge::new(vec![Jump {
            location: 0.37,
            size: 1.0,
        }])
        .unwrap();
        let ExcursionPath::Jumps(e) = vervaat_transform(&b) else {
            unreachable!()
        };
        assert_eq!(e.positions(), &[0.0]);
        assert_eq!(e.left_limit(0.0), 0.0);
        assert_relative_eq!(e.eval(0.0), 1.0);
        assert_relative_eq!(e.eval(0.5), 0.5);
        assert!(e.left_limit(1.0).abs() < 1e-15);
    }

    #[test]
    fn vervaat_matches_rotation_formula() {
        // ε(u) = b(u + μ mod 1) - b(μ-), checked against direct bridge evaluation
        let mut rng = RngStream::new(2, 0);
        let masses = rank(&[0.35, 0.25, 0.2, 0.1, 0.06, 0.04]).unwrap();
        for _ in 0..200 {
            let b = build_bridge(&masses, &mut rng);
            let path = vervaat_transform(&b);
            let ExcursionPath::Jumps(e) = &path else {
                unreachable!()
            };
            let mu = b
                .jumps()
                .iter()
                .map(|j| j.location)
                .min_by(|&x, &y| b.left_limit(x).total_cmp(&b.left_limit(y)))
                .unwrap();
            for k in 0..50 {
                let u = (k as f64 + 0.5) / 50.0;
                let shifted = (u + mu) % 1.0;
                let expect = b.eval(shifted) - b.left_limit(mu);
                assert!((e.eval(u) - expect).abs() < 1e-12);
                assert!(e.eval(u) >= -1e-12);
            }
            assert!(e.left_limit(1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn grid_vervaat_is_non_negative() {
        let mut rng = RngStream::new(3, 0);
        for _ in 0..1000 {
            let e = brownian_excursion(200, &mut rng).unwrap();
            assert_eq!(e.values()[0], 0.0);
            assert_eq!(*e.values().last().unwrap(), 0.0);
            assert!(e.values().iter().all(|&v| v >= 0.0));
        }
        assert!(brownian_excursion(1, &mut rng).is_err());
    }

    /// Independent coarse check of E[max ε] = sqrt(π/2) for the normalized
    /// Brownian excursion, by rejection: a ±1 walk of 2k steps conditioned
    /// to stay positive and return to 0, scaled by (2k)^{-1/2}.
    #[test]
    fn excursion_max_coarse_oracle() {
        let mut rng = RngStream::new(4, 0);
        let k = 200;
        let mut maxima = Vec::new();
        while maxima.len() < 1500 {
            let mut pos: i64 = 0;
            let mut best = 0;
            let mut ok = true;
            let mut ups = 0;
            for step in 0..2 * k {
                let remaining = 2 * k - step;
                // uniform bridge step: up with probability (remaining - pos)/(2 remaining)
                let p_up = (remaining as f64 - pos as f64) / (2.0 * remaining as f64);
                if rng.random::<f64>() < p_up {
                    pos += 1;
                    ups += 1;
                } else {
                    pos -= 1;
                }
                if pos < 0 || (pos == 0 && step + 1 < 2 * k) {
                    ok = false;
                    break;
                }
                best = best.max(pos);
            }
            let _ = ups;
            if ok {
                maxima.push(best as f64 / (2.0 * k as f64).sqrt());
            }
        }
        let (mean, se) = mean_and_se(&maxima);
        let target = (std::f64::consts::PI / 2.0).sqrt();
        // discrete walk has an O(k^{-1/2}) downward bias
        assert!((mean - target).abs() < 4.0 * se + 0.1, "mean {mean}");
    }

    #[test]
    fn t_zero_single_block() {
        let mut rng = RngStream::new(5, 0);
        let masses = rank(&[0.5, 0.3, 0.2]).unwrap();
        let path = vervaat_transform(&build_bridge(&masses, &mut rng));
        let iv = path.t_intervals(0.0);
        assert_eq!(iv.len(), 1);
        assert_eq!(iv[0].start, 0.0);
        assert_eq!(iv[0].end, 1.0);
        assert_eq!(fragmentation_masses(&path, 0.0).masses(), &[1.0]);

        let g = ExcursionPath::Grid(brownian_excursion(500, &mut rng).unwrap());
        assert_eq!(fragmentation_masses(&g, 0.0).masses(), &[1.0]);
    }

    #[test]
    fn large_t_isolates_jumps() {
        let mut rng = RngStream::new(6, 0);
        let masses = rank(&[0.4, 0.3, 0.2, 0.1]).unwrap();
        let path = vervaat_transform(&build_bridge(&masses, &mut rng));
        let ExcursionPath::Jumps(e) = &path else {
            unreachable!()
        };
        let iv = path.t_intervals(1e6);
        assert_eq!(iv.len(), 4);
        for (i, p) in iv.iter().zip(e.positions()) {
            assert_eq!(i.start, *p);
            assert!(i.end - i.start < 1e-5);
        }
        let swept = fragmentation_masses(&path, 1e6);
        for (a, b) in swept.masses().iter().zip(masses.masses()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    /// First split time straight from the definition: the smallest `t` with
    /// `t·u - ε(u-) >= 0` somewhere before the last jump, scanned over a 10⁻⁶ grid
    /// using the bridge itself for `ε`.
    fn first_split_by_grid(b: &JumpBridge) -> f64 {
        let mu = b
            .jumps()
            .iter()
            .map(|j| j.location)
            .min_by(|&x, &y| b.left_limit(x).total_cmp(&b.left_limit(y)))
            .unwrap();
        // a new block needs a jump after the crossing point
        let last = b
            .jumps()
            .iter()
            .map(|j| (j.location - mu).rem_euclid(1.0))
            .fold(0.0, f64::max);
        let res = 1_000_000;
        let mut best = f64::INFINITY;
        for k in 1..res {
            let u = k as f64 / res as f64;
            if u > last {
                break;
            }
            let s = u + mu;
            let s = if s >= 1.0 { s - 1.0 } else { s };
            let eps_left = b.left_limit(s) - b.left_limit(mu);
            best = best.min(eps_left / u);
        }
        best
    }

    #[test]
    fn two_jump_split_matches_grid_oracle() {
        let b = fixed_bridge();
        let path = vervaat_transform(&b);
        let rec = split_times(&path).unwrap();
        assert_eq!(rec.split_times.len(), 1);
        let oracle = first_split_by_grid(&b);
        assert!((rec.split_times[0] - oracle).abs() < 1e-6, "{} vs {oracle}", rec.split_times[0]);
        assert_relative_eq!(rec.split_times[0], 0.6, max_relative = 1e-12);
        assert_eq!(rec.states[1].masses(), &[0.6, 0.4]);
    }

    #[test]
    fn single_jump_record() {
        let b = JumpBridge::new(vec![Jump {
            location: 0.2,
            size: 1.0,
        }])
        .unwrap();
        let rec = split_times(&vervaat_transform(&b)).unwrap();
        assert!(rec.split_times.is_empty());
        assert_eq!(rec.states, vec![RankedMassVector::unit()]);
    }

    #[test]
    fn closed_form_agrees_with_sweep() {
        let mut rng = RngStream::new(7, 0);
        let masses = RankedMassVector::from_weights(&[5.0, 4.0, 3.0, 3.0, 2.0, 1.0, 1.0, 0.5]).unwrap();
        for _ in 0..300 {
            let b = build_bridge(&masses, &mut rng);
            let path = vervaat_transform(&b);
            let rec = split_times(&path).unwrap();
            assert!(rec.split_times[0] > 0.0);
            assert!(rec.split_times.windows(2).all(|w| w[0] <= w[1]));
            assert!((rec.split_times[0] - first_split_grid_free(&b)).abs() < 1e-9);
            let mut probes = vec![rec.split_times[0] * 0.5];
            for w in rec.split_times.windows(2) {
                probes.push(0.5 * (w[0] + w[1]));
            }
            probes.push(rec.split_times.last().unwrap() + 1.0);
            for (k, t) in probes.into_iter().enumerate() {
                let swept = fragmentation_masses(&path, t);
                let exact = &rec.states[k];
                assert_eq!(swept.len(), exact.len());
                for (a, b) in swept.masses().iter().zip(exact.masses()) {
                    assert!((a - b).abs() < 1e-12);
                }
            }
        }
    }

    /// First split evaluated exactly at the jump left limits (no grid).
    fn first_split_grid_free(b: &JumpBridge) -> f64 {
        let ExcursionPath::Jumps(e) = vervaat_transform(b) else {
            unreachable!()
        };
        e.positions()
            .iter()
            .skip(1)
            .map(|&p| e.left_limit(p) / p)
            .fold(f64::INFINITY, f64::min)
    }

    #[test]
    fn intervals_refine_with_t() {
        let mut rng = RngStream::new(8, 0);
        let masses = RankedMassVector::monodisperse(30).unwrap();
        let ts = [0.0, 0.1, 0.3, 0.7, 1.5, 3.0, 10.0];
        for _ in 0..200 {
            let path = vervaat_transform(&build_bridge(&masses, &mut rng));
            for w in ts.windows(2) {
                assert!(is_refinement(&path.t_intervals(w[1]), &path.t_intervals(w[0])));
            }
        }
        for _ in 0..50 {
            let path = ExcursionPath::Grid(brownian_excursion(2000, &mut rng).unwrap());
            for w in ts.windows(2) {
                assert!(is_refinement(&path.t_intervals(w[1]), &path.t_intervals(w[0])));
            }
        }
    }

    #[test]
    fn grid_lengths_sum_to_one() {
        let mut rng = RngStream::new(9, 0);
        for &t in &[-2.0, 0.0, 1.0] {
            let s = standard_coalescent_marginal(1000, t, &mut rng).unwrap();
            assert!((s.total() - 1.0).abs() <= 2.0 / 1000.0);
        }
    }

    #[test]
    fn grid_block_count_grows_with_t() {
        let mut rng = RngStream::new(10, 0);
        let e = ExcursionPath::Grid(brownian_excursion(5000, &mut rng).unwrap());
        let counts: Vec<usize> = [0.0, 0.5, 1.0, 2.0, 4.0, 8.0]
            .iter()
            .map(|&t| e.t_intervals(t).len())
            .collect();
        assert!(counts.windows(2).all(|w| w[0] <= w[1]), "{counts:?}");
    }

    #[test]
    fn late_standard_time_is_one_block() {
        let mut rng = RngStream::new(11, 0);
        let s = standard_coalescent_marginal(2000, 12.0, &mut rng).unwrap();
        assert!(s.largest() > 0.99);
    }

    #[test]
    fn split_times_need_jump_path() {
        let mut rng = RngStream::new(12, 0);
        let g = ExcursionPath::Grid(brownian_excursion(10, &mut rng).unwrap());
        assert!(split_times(&g).is_err());
    }

    #[test]
    fn tied_thresholds_are_flagged() {
        // symmetric placement: two jumps reach their thresholds together
        let b = JumpBridge::new(vec![
            Jump { location: 0.0, size: 0.5 },
            Jump { location: 0.25, size: 0.25 },
            Jump { location: 0.375, size: 0.25 },
        ])
        .unwrap();
        let rec = split_times(&vervaat_transform(&b)).unwrap();
        assert_eq!(rec.split_times.len(), 2);
        assert_eq!(rec.split_times[0], rec.split_times[1]);
        assert_eq!(rec.simultaneous, vec![1]);
    }

    #[test]
    fn invalid_bridges() {
        assert!(JumpBridge::new(vec![]).is_err());
        assert!(JumpBridge::new(vec![Jump { location: 1.0, size: 1.0 }]).is_err());
        assert!(JumpBridge::new(vec![
            Jump { location: 0.5, size: 0.5 },
            Jump { location: 0.5, size: 0.5 }
        ])
        .is_err());
    }
}
