//! The acceptance checks: each compares two constructions of the additive
//! coalescent, or a construction with an exact formula, at a fixed
//! tolerance. Results depend only on the master seed.

use std::collections::BTreeMap;
use std::fmt;

use rand::Rng;
use rayon::prelude::*;

use crate::bridge::{
    brownian_excursion, build_bridge, is_refinement, split_times, standard_coalescent_marginal,
    vervaat_transform, ExcursionPath,
};
use crate::coalescent::{sample_merge_pair, simulate, standard_monodisperse_state};
use crate::error::Result;
use crate::levy::{check_nesting, simulate_path, LevySpec};
use crate::mass::RankedMassVector;
use crate::random_tree::{forest_chain, sample_uniform_tree};
use crate::rng::{derive_seed, RngStream};
use crate::smoluchowski::{mean_field_check, verify_laplace_identity, EternalSolution, FD_STEP};
use crate::stats::{
    chi_square_from_expected, chi_square_homogeneity, chi_square_test, correlation, ks_test,
    ks_two_sample, DEFAULT_ALPHA,
};
use crate::sticky::{evolve, initial_system, merger_history, pick_cluster, variational_oracle};

#[derive(Debug, Clone, PartialEq)]
pub struct CriterionResult {
    pub id: u32,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl fmt::Display for CriterionResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "[{:>2}] {:<4} {:<44} {}",
            self.id,
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.detail
        )
    }
}

fn result(id: u32, name: &'static str, passed: bool, detail: String) -> CriterionResult {
    CriterionResult {
        id,
        name,
        passed,
        detail,
    }
}

fn seeded(master_seed: u64, id: u32) -> u64 {
    derive_seed(master_seed, id as u64)
}

fn replicates<T, F>(count: usize, seed: u64, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(&mut RngStream) -> T + Sync + Send,
{
    (0..count)
        .into_par_iter()
        .map(|r| f(&mut RngStream::new(seed, r as u64)))
        .collect()
}

pub const NAMES: [&str; 14] = [
    "pair-selection law",
    "jump-time law",
    "jump times independent of states",
    "tree cutting matches direct chain",
    "bridge fragmentation matches direct chain",
    "t-interval refinement",
    "standard coalescent cross-check",
    "inverse exponent vs closed form",
    "Laplace identity for Brownian solution",
    "reduced coagulation-equation residual",
    "mean-field size-biased law",
    "first-passage record nesting",
    "sticky conservation and oracle",
    "merger-history pair selection",
];

/// From `(0.5, 0.3, 0.2)`, first-step pair frequencies against
/// `(0.40, 0.35, 0.25)`.
pub fn criterion_1(master_seed: u64) -> Result<CriterionResult> {
    let state = RankedMassVector::rank(&[0.5, 0.3, 0.2])?;
    let mut rng = RngStream::new(seeded(master_seed, 1), 0);
    let mut counts = [0u64; 3];
    for _ in 0..100_000 {
        let cell = match sample_merge_pair(&state, &mut rng)? {
            (0, 1) => 0,
            (0, 2) => 1,
            _ => 2,
        };
        counts[cell] += 1;
    }
    let report = chi_square_test(&counts, &[0.40, 0.35, 0.25])?;
    Ok(result(
        1,
        NAMES[0],
        report.passed,
        format!("counts {counts:?}, chi2 = {:.3}, p = {:.4}", report.statistic, report.p_value),
    ))
}

fn monodisperse_runs(master_seed: u64, id: u32, n: usize, count: usize) -> Result<Vec<crate::coalescent::CoalescentTrajectory>> {
    let initial = RankedMassVector::monodisperse(n)?;
    Ok(replicates(count, seeded(master_seed, id), |rng| simulate(&initial, rng)))
}

/// `n = 10`, `10⁴` runs: each holding time against `Exp(9 - k)`, Bonferroni
/// over the nine increments.
pub fn criterion_2(master_seed: u64) -> Result<CriterionResult> {
    let runs = monodisperse_runs(master_seed, 2, 10, 10_000)?;
    let increments: Vec<Vec<f64>> = runs.iter().map(|r| r.increments()).collect();
    let alpha = DEFAULT_ALPHA / 9.0;
    let mut worst = 1.0f64;
    let mut passed = true;
    for k in 0..9 {
        let rate = (9 - k) as f64;
        let xs: Vec<f64> = increments.iter().map(|inc| inc[k]).collect();
        let report = ks_test(&xs, |x| if x <= 0.0 { 0.0 } else { -(-rate * x).exp_m1() })?.at_alpha(alpha);
        passed &= report.passed;
        worst = worst.min(report.p_value);
    }
    Ok(result(2, NAMES[1], passed, format!("min p = {worst:.4} (alpha {alpha:.2e} per increment)")))
}

/// Correlation between each holding time and the largest mass right after
/// the corresponding merge.
pub fn criterion_3(master_seed: u64) -> Result<CriterionResult> {
    let count = 10_000;
    let runs = monodisperse_runs(master_seed, 3, 10, count)?;
    let bound = 4.0 / (count as f64).sqrt();
    let mut worst = 0.0f64;
    let mut constant = Vec::new();
    for k in 0..9 {
        let inc: Vec<f64> = runs.iter().map(|r| r.increments()[k]).collect();
        let largest: Vec<f64> = runs.iter().map(|r| r.states[k + 1].largest()).collect();
        if largest.iter().all(|&x| x == largest[0]) {
            constant.push(k);
            continue;
        }
        worst = worst.max(correlation(&inc, &largest)?.abs());
    }
    Ok(result(
        3,
        NAMES[2],
        worst <= bound,
        format!("max |corr| = {worst:.4} (bound {bound:.4}); constant largest after merges {constant:?}"),
    ))
}

fn category_counts(a: &[Vec<u64>], b: &[Vec<u64>]) -> (Vec<u64>, Vec<u64>) {
    let mut cells: BTreeMap<&Vec<u64>, (u64, u64)> = BTreeMap::new();
    for k in a {
        cells.entry(k).or_default().0 += 1;
    }
    for k in b {
        cells.entry(k).or_default().1 += 1;
    }
    cells.values().map(|&(x, y)| (x, y)).unzip()
}

/// Homogeneity test per chain position; positions with a single observed
/// state in both samples are reported as degenerate and pass.
fn compare_chains(
    id: u32,
    name: &'static str,
    left: &[Vec<RankedMassVector>],
    right: &[Vec<RankedMassVector>],
    scale: f64,
) -> Result<CriterionResult> {
    let steps = left[0].len();
    let mut passed = true;
    let mut parts = Vec::new();
    for k in 1..steps {
        let a: Vec<Vec<u64>> = left.iter().map(|c| c[k].partition_key(scale)).collect();
        let b: Vec<Vec<u64>> = right.iter().map(|c| c[k].partition_key(scale)).collect();
        let (ca, cb) = category_counts(&a, &b);
        if ca.len() <= 1 {
            parts.push(format!("k={k}: single state"));
            continue;
        }
        let report = chi_square_homogeneity(&ca, &cb)?;
        passed &= report.passed;
        parts.push(format!("k={k}: p={:.4}", report.p_value));
    }
    Ok(result(id, name, passed, parts.join(", ")))
}

/// `n = 6`: states after each merge, forest chain vs direct chain.
pub fn criterion_4(master_seed: u64) -> Result<CriterionResult> {
    let n = 6;
    let count = 10_000;
    let direct: Vec<Vec<RankedMassVector>> = monodisperse_runs(master_seed, 4, n, count)?
        .into_iter()
        .map(|r| r.states)
        .collect();
    let tree_seed = derive_seed(seeded(master_seed, 4), 1);
    let trees: Vec<Vec<RankedMassVector>> = replicates(count, tree_seed, |rng| {
        let tree = sample_uniform_tree(n, rng).expect("n >= 1");
        forest_chain(&tree, rng).states
    });
    compare_chains(4, NAMES[3], &direct, &trees, n as f64)
}

/// Initial masses `(0.4, 0.3, 0.2, 0.1)`: the reversed bridge fragmentation
/// chain vs the direct chain.
pub fn criterion_5(master_seed: u64) -> Result<CriterionResult> {
    let masses = RankedMassVector::rank(&[0.4, 0.3, 0.2, 0.1])?;
    let count = 10_000;
    let seed = seeded(master_seed, 5);
    let direct: Vec<Vec<RankedMassVector>> = replicates(count, seed, |rng| simulate(&masses, rng).states);
    let bridge: Vec<Vec<RankedMassVector>> = replicates(count, derive_seed(seed, 1), |rng| {
        let path = vervaat_transform(&build_bridge(&masses, rng));
        split_times(&path).expect("jump path").coalescent_chain()
    });
    compare_chains(5, NAMES[4], &direct, &bridge, 10.0)
}

/// Refinement of `t`-intervals along an increasing `t` grid on finite-jump
/// and grid excursions.
pub fn criterion_6(master_seed: u64) -> Result<CriterionResult> {
    let seed = seeded(master_seed, 6);
    let ts: Vec<f64> = std::iter::once(0.0)
        .chain((0..40).map(|k| 10f64.powf(-2.0 + k as f64 * 0.1)))
        .collect();
    let violations = |path: &ExcursionPath| -> usize {
        let intervals: Vec<_> = ts.iter().map(|&t| path.t_intervals(t)).collect();
        intervals.windows(2).filter(|w| !is_refinement(&w[1], &w[0])).count()
    };
    let jumps: usize = replicates(1000, seed, |rng| {
        let n = rng.random_range(2..=30);
        let weights: Vec<f64> = (0..n).map(|_| rng.random::<f64>() + 1e-3).collect();
        let masses = RankedMassVector::from_weights(&weights).expect("positive weights");
        violations(&vervaat_transform(&build_bridge(&masses, rng)))
    })
    .into_iter()
    .sum();
    let grids: usize = replicates(1000, derive_seed(seed, 1), |rng| {
        violations(&ExcursionPath::Grid(brownian_excursion(2000, rng).expect("m >= 2")))
    })
    .into_iter()
    .sum();
    Ok(result(
        6,
        NAMES[5],
        jumps == 0 && grids == 0,
        format!("violations: {jumps} on jump paths, {grids} on grid excursions ({} t values)", ts.len()),
    ))
}

/// Largest fragment: excursion construction (`m = 10⁴`, `t = 0`) vs the
/// monodisperse coalescent (`n = 10⁴`) at standard time 0.
pub fn criterion_7(master_seed: u64) -> Result<CriterionResult> {
    let seed = seeded(master_seed, 7);
    let size = 10_000;
    let excursion: Vec<f64> = replicates(1000, seed, |rng| {
        standard_coalescent_marginal(size, 0.0, rng).expect("m >= 2").largest()
    });
    let direct: Vec<f64> = replicates(1000, derive_seed(seed, 1), |rng| {
        standard_monodisperse_state(size, 0.0, rng).expect("valid time").largest()
    });
    let report = ks_two_sample(&excursion, &direct)?;
    Ok(result(7, NAMES[6], report.passed, format!("D = {:.4}, p = {:.4}", report.statistic, report.p_value)))
}

/// Numeric `Φ` against `(√(1 + 2s²q) - 1)/s²` for the Brownian spec.
pub fn criterion_8() -> Result<CriterionResult> {
    let spec = LevySpec::brownian();
    let mut worst = 0.0f64;
    for &q in &[0.1f64, 1.0, 10.0] {
        for &s in &[0.5f64, 1.0, 2.0] {
            let exact = 2.0 * q / ((1.0 + 2.0 * s * s * q).sqrt() + 1.0);
            worst = worst.max(((spec.phi(q, s)? - exact) / exact).abs());
        }
    }
    Ok(result(8, NAMES[7], worst <= 1e-10, format!("max relative error {worst:.2e}")))
}

const Q_GRID: [f64; 4] = [0.5, 1.0, 2.0, 5.0];
const T_GRID: [f64; 3] = [-1.0, 0.0, 1.0];

pub fn criterion_9() -> Result<CriterionResult> {
    let mut worst = 0.0f64;
    for &t in &T_GRID {
        worst = worst.max(verify_laplace_identity(t, &Q_GRID)?);
    }
    Ok(result(9, NAMES[8], worst <= 1e-6, format!("max relative residual {worst:.2e}")))
}

pub fn criterion_10() -> Result<CriterionResult> {
    let sol = EternalSolution::brownian();
    let mut worst = 0.0f64;
    for &t in &T_GRID {
        for &q in &Q_GRID {
            worst = worst.max(sol.pde_residual(t, q, FD_STEP)?);
        }
    }
    Ok(result(10, NAMES[9], worst <= 1e-4, format!("max residual {worst:.2e}")))
}

/// Size-biased cluster mass of the monodisperse coalescent (`n = 10⁴`) at
/// standard time 0 against the size-biased Brownian solution.
pub fn criterion_11(master_seed: u64) -> Result<CriterionResult> {
    let report = mean_field_check(10_000, 0.0, 1000, seeded(master_seed, 11))?;
    Ok(result(
        11,
        NAMES[10],
        report.statistic <= 0.05,
        format!("KS statistic {:.4} (limit 0.05), p = {:.2e}", report.statistic, report.p_value),
    ))
}

/// Record-set inclusion for `(s, s') = (2, 1)` on Brownian paths of `10⁵`
/// steps.
pub fn criterion_12(master_seed: u64) -> Result<CriterionResult> {
    let spec = LevySpec::brownian();
    let h = 1e-3;
    let violations = replicates(1000, seeded(master_seed, 12), |rng| {
        let path = simulate_path(&spec, 100.0, h, rng).expect("valid spec");
        debug_assert_eq!(path.len(), 100_000);
        !check_nesting(&path, 2.0, 1.0).expect("ordered parameters")
    })
    .into_iter()
    .filter(|&v| v)
    .count();
    Ok(result(12, NAMES[11], violations == 0, format!("{violations} violations on 1000 paths")))
}

/// Event-driven evolution vs the variational oracle, `n = 10³` Brownian
/// particles to time 1, 100 seeds.
pub fn criterion_13(master_seed: u64) -> Result<CriterionResult> {
    let n = 1000;
    let dr = 1.0 / n as f64;
    let outcomes = replicates(100, seeded(master_seed, 13), |rng| -> Result<(f64, bool, f64)> {
        let path = simulate_path(&LevySpec::brownian(), 1.0, dr, rng)?;
        let system = initial_system(&path, n, dr, n)?;
        let (_, evolved) = evolve(&system, 1.0)?;
        let oracle = variational_oracle(&system, 1.0)?;
        let p0 = system.momentum();
        let drift = ((evolved.momentum() - p0) / p0).abs();
        let same = oracle.blocks() == evolved.blocks();
        let gap = oracle
            .clusters()
            .iter()
            .zip(evolved.clusters())
            .map(|(a, b)| (a.position - b.position).abs())
            .fold(0.0, f64::max);
        Ok((drift, same, gap))
    });
    let mut drift = 0.0f64;
    let mut mismatches = 0;
    let mut gap = 0.0f64;
    for o in outcomes {
        let (d, same, g) = o?;
        drift = drift.max(d);
        mismatches += usize::from(!same);
        gap = gap.max(g);
    }
    Ok(result(
        13,
        NAMES[12],
        drift <= 1e-9 && mismatches == 0 && gap <= 1e-6,
        format!("max momentum drift {drift:.2e}, {mismatches} block mismatches, max position gap {gap:.2e}"),
    ))
}

/// One step of a merger history seen from a `k`-block state: `(k, i, j)`
/// ranked indices of the merging pair and the state's masses.
#[derive(Debug, Clone)]
pub struct PairObservation {
    pub blocks: usize,
    pub pair: (usize, usize),
    pub masses: Vec<f64>,
}

/// Ranked index of `mass` in `masses`, uniform among exact ties and
/// excluding `taken`.
fn rank_of<R: Rng + ?Sized>(masses: &[f64], mass: f64, taken: Option<usize>, rng: &mut R) -> usize {
    let tied: Vec<usize> = (0..masses.len())
        .filter(|&i| masses[i] == mass && Some(i) != taken)
        .collect();
    tied[rng.random_range(0..tied.len())]
}

/// Parameters of the sticky-particle merger-history experiment.
#[derive(Debug, Clone, Copy)]
pub struct HistoryExperiment {
    pub systems: usize,
    pub length: f64,
    pub dr: f64,
    pub time: f64,
    pub min_blocks: usize,
    pub max_blocks: usize,
}

impl Default for HistoryExperiment {
    fn default() -> Self {
        Self {
            systems: 10_000,
            length: 4.0,
            dr: 1.25e-4,
            time: 1.0,
            min_blocks: 3,
            max_blocks: 5,
        }
    }
}

/// Merger-history pair observations of the heaviest cluster in `[0, 1]`
/// for one Brownian system on `[0, length]` with an equally long
/// zero-velocity buffer on the left; `None` when the window is empty.
fn system_observations(exp: &HistoryExperiment, rng: &mut RngStream) -> Result<Option<Vec<PairObservation>>> {
    let n = (exp.length / exp.dr).round() as usize;
    let path = simulate_path(&LevySpec::brownian(), exp.length, exp.dr, rng)?;
    let system = initial_system(&path, n, exp.dr, n)?;
    let (log, fin) = evolve(&system, exp.time)?;
    let Ok(picked) = pick_cluster(&fin, 0.0, 1.0) else {
        return Ok(None);
    };
    let history = merger_history(&log, picked, exp.time)?;
    let mut out = Vec::new();
    for (before, (a, b)) in history.final_transitions(exp.max_blocks) {
        let blocks = before.len();
        if blocks < exp.min_blocks {
            continue;
        }
        let masses = before.masses();
        let i = rank_of(masses, a, None, rng);
        let j = rank_of(masses, b, Some(i), rng);
        out.push(PairObservation {
            blocks,
            pair: (i.min(j), i.max(j)),
            masses: masses.to_vec(),
        });
    }
    Ok(Some(out))
}

/// Observations from the first `exp.systems` systems (in replicate order)
/// that have a cluster in `[0, 1]` at the observation time. Also returns
/// the number of systems simulated.
pub fn history_observations(exp: &HistoryExperiment, seed: u64) -> Result<(Vec<PairObservation>, usize)> {
    let mut picked = 0;
    let mut next = 0;
    let mut all = Vec::new();
    while picked < exp.systems {
        let batch = (exp.systems - picked).max(16);
        let results: Vec<_> = (next..next + batch)
            .into_par_iter()
            .map(|r| system_observations(exp, &mut RngStream::new(seed, r as u64)))
            .collect();
        next += batch;
        for r in results {
            if picked == exp.systems {
                break;
            }
            if let Some(obs) = r? {
                picked += 1;
                all.extend(obs);
            }
        }
    }
    Ok((all, next))
}

/// Pooled chi-square of observed merging pairs against expected counts
/// `Σ (x_i + x_j)/(k - 1)`, with categories `(k, i, j)`.
pub fn pair_signature_test(observations: &[PairObservation]) -> Result<crate::stats::TestReport> {
    let mut index: BTreeMap<(usize, usize, usize), usize> = BTreeMap::new();
    let mut groups = std::collections::BTreeSet::new();
    for o in observations {
        groups.insert(o.blocks);
    }
    for &k in &groups {
        for i in 0..k {
            for j in i + 1..k {
                let next = index.len();
                index.insert((k, i, j), next);
            }
        }
    }
    let mut observed = vec![0u64; index.len()];
    let mut expected = vec![0.0f64; index.len()];
    for o in observations {
        let k = o.blocks;
        let total: f64 = o.masses.iter().sum();
        for i in 0..k {
            for j in i + 1..k {
                expected[index[&(k, i, j)]] += (o.masses[i] + o.masses[j]) / (total * (k - 1) as f64);
            }
        }
        observed[index[&(k, o.pair.0, o.pair.1)]] += 1;
    }
    let dof = index.len().saturating_sub(groups.len());
    chi_square_from_expected(&observed, &expected, dof)
}

pub fn criterion_14(master_seed: u64) -> Result<CriterionResult> {
    let exp = HistoryExperiment::default();
    let (obs, simulated) = history_observations(&exp, seeded(master_seed, 14))?;
    let report = pair_signature_test(&obs)?;
    Ok(result(
        14,
        NAMES[13],
        report.passed,
        format!(
            "{} transitions from {} picked clusters ({simulated} systems), chi2 = {:.2}, p = {:.4}",
            obs.len(),
            exp.systems,
            report.statistic,
            report.p_value
        ),
    ))
}

/// Run one criterion by number; numerical errors count as failures.
pub fn run_criterion(id: u32, master_seed: u64) -> CriterionResult {
    let outcome = match id {
        1 => criterion_1(master_seed),
        2 => criterion_2(master_seed),
        3 => criterion_3(master_seed),
        4 => criterion_4(master_seed),
        5 => criterion_5(master_seed),
        6 => criterion_6(master_seed),
        7 => criterion_7(master_seed),
        8 => criterion_8(),
        9 => criterion_9(),
        10 => criterion_10(),
        11 => criterion_11(master_seed),
        12 => criterion_12(master_seed),
        13 => criterion_13(master_seed),
        14 => criterion_14(master_seed),
        _ => return result(id, "unknown criterion", false, String::new()),
    };
    outcome.unwrap_or_else(|e| {
        let name = NAMES.get(id as usize - 1).copied().unwrap_or("unknown criterion");
        result(id, name, false, format!("error: {e}"))
    })
}

pub fn run_all(master_seed: u64) -> Vec<CriterionResult> {
    (1..=14).map(|id| run_criterion(id, master_seed)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cheap_criteria_pass() {
        assert!(criterion_8().unwrap().passed);
        assert!(criterion_9().unwrap().passed);
        assert!(criterion_10().unwrap().passed);
    }

    #[test]
    fn pair_signature_on_exact_coalescent() {
        // histories generated by the coalescent itself must pass
        let mut rng = RngStream::new(51, 0);
        let mut obs = Vec::new();
        for _ in 0..3000 {
            let weights: Vec<f64> = (0..5).map(|_| rng.random::<f64>() + 0.01).collect();
            let mut state = RankedMassVector::from_weights(&weights).unwrap();
            while state.len() >= 3 {
                let (i, j) = sample_merge_pair(&state, &mut rng).unwrap();
                obs.push(PairObservation {
                    blocks: state.len(),
                    pair: (i, j),
                    masses: state.masses().to_vec(),
                });
                state = state.merge(i, j).unwrap();
            }
        }
        let report = pair_signature_test(&obs).unwrap();
        assert!(report.passed, "{report:?}");

        // uniform pair choice is rejected
        let uniform: Vec<PairObservation> = obs
            .iter()
            .map(|o| {
                let k = o.blocks;
                let i = rng.random_range(0..k);
                let mut j = rng.random_range(0..k - 1);
                if j >= i {
                    j += 1;
                }
                PairObservation { pair: (i.min(j), i.max(j)), ..o.clone() }
            })
            .collect();
        assert!(!pair_signature_test(&uniform).unwrap().passed);
    }

    #[test]
    fn rank_of_ties_is_uniform() {
        let mut rng = RngStream::new(52, 0);
        let masses = [0.4, 0.2, 0.2, 0.2];
        let mut counts = [0u64; 4];
        for _ in 0..3000 {
            counts[rank_of(&masses, 0.2, None, &mut rng)] += 1;
        }
        assert_eq!(counts[0], 0);
        assert!(chi_square_test(&counts[1..], &[1.0 / 3.0; 3]).unwrap().passed);
        assert_eq!(rank_of(&masses, 0.2, Some(1), &mut rng).min(1), 1);
    }
}
