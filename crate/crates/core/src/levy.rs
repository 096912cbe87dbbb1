//! Spectrally negative Lévy processes: the exponent `Ψ`, its inverse `Φ`,
//! discretised paths, first-passage record sets and the interval partition
//! of their complement.
//!
//! `Ψ(q) = ½σ²q² + ∫(e^{-qx} - 1 + qx) Λ(dx)`. The Lévy measure `Λ` is a
//! finite list of atoms plus an optional density sampled on a grid. The
//! density part is integrated with the trapezoid rule, which is the same as
//! replacing it with atoms at the grid nodes; both `Ψ` and path simulation
//! use that atomic form.

use std::fmt;
use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, Normal, Poisson};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Atom {
    pub size: f64,
    pub rate: f64,
}

pub type DensityFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

#[derive(Clone)]
pub struct DensityPart {
    density: DensityFn,
    grid: Vec<f64>,
}

impl fmt::Debug for DensityPart {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DensityPart")
            .field("grid_points", &self.grid.len())
            .finish()
    }
}

impl DensityPart {
    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn eval(&self, x: f64) -> f64 {
        (self.density)(x)
    }

    fn as_atoms(&self) -> Vec<Atom> {
        let g = &self.grid;
        (0..g.len())
            .map(|i| {
                let left = if i > 0 { g[i] - g[i - 1] } else { 0.0 };
                let right = if i + 1 < g.len() { g[i + 1] - g[i] } else { 0.0 };
                Atom {
                    size: g[i],
                    rate: 0.5 * (left + right) * (self.density)(g[i]),
                }
            })
            .filter(|a| a.rate > 0.0)
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct LevySpec {
    sigma2: f64,
    atoms: Vec<Atom>,
    density: Option<DensityPart>,
    /// All atoms, including the grid nodes of the density part.
    measure: Vec<Atom>,
}

impl LevySpec {
    pub fn new(sigma2: f64, atoms: Vec<Atom>) -> Result<Self> {
        if !(sigma2 >= 0.0) || !sigma2.is_finite() {
            return Err(Error::invalid_arg(format!("sigma2 = {sigma2} must be finite and >= 0")));
        }
        for a in &atoms {
            if !(a.size > 0.0 && a.size.is_finite() && a.rate > 0.0 && a.rate.is_finite()) {
                return Err(Error::invalid_arg(format!(
                    "atom (size {}, rate {}) must have positive finite size and rate",
                    a.size, a.rate
                )));
            }
        }
        let measure = atoms.clone();
        Ok(Self {
            sigma2,
            atoms,
            density: None,
            measure,
        })
    }

    /// `σ² = 1`, `Λ = 0`.
    pub fn brownian() -> Self {
        Self::new(1.0, Vec::new()).expect("valid")
    }

    /// Add a density part `Λ(dx) = density(x) dx`, integrated over `grid`
    /// (strictly increasing, positive nodes).
    pub fn with_density(mut self, density: DensityFn, grid: Vec<f64>) -> Result<Self> {
        if grid.len() < 2 {
            return Err(Error::invalid_arg("density grid needs at least two nodes"));
        }
        if !(grid[0] > 0.0) || grid.windows(2).any(|w| !(w[1] > w[0])) || !grid.iter().all(|x| x.is_finite()) {
            return Err(Error::invalid_arg("density grid must be positive, finite and strictly increasing"));
        }
        if grid.iter().any(|&x| !(density(x) >= 0.0) || !density(x).is_finite()) {
            return Err(Error::invalid_arg("density must be finite and non-negative on the grid"));
        }
        let part = DensityPart { density, grid };
        self.measure = self.atoms.clone();
        self.measure.extend(part.as_atoms());
        self.density = Some(part);
        Ok(self)
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn density(&self) -> Option<&DensityPart> {
        self.density.as_ref()
    }

    /// Whether the spec qualifies for the eternal-solution construction:
    /// `σ² > 0` or `∫xΛ(dx) = ∞`. A finite representation always has
    /// `∫xΛ < ∞`, so only `σ² > 0` qualifies.
    pub fn is_conforming(&self) -> bool {
        self.sigma2 > 0.0
    }

    /// `∫ x Λ(dx)` over the represented measure.
    pub fn first_moment(&self) -> f64 {
        self.measure.iter().map(|a| a.size * a.rate).sum()
    }

    pub fn psi(&self, q: f64) -> Result<f64> {
        check_q(q)?;
        let jumps: f64 = self
            .measure
            .iter()
            .map(|a| a.rate * compensated_exp(q * a.size))
            .sum();
        Ok(0.5 * self.sigma2 * q * q + jumps)
    }

    /// `Ψ'(q) = σ²q + ∫x(1 - e^{-qx})Λ(dx)`.
    pub fn psi_derivative(&self, q: f64) -> Result<f64> {
        check_q(q)?;
        let jumps: f64 = self
            .measure
            .iter()
            .map(|a| -a.rate * a.size * (-q * a.size).exp_m1())
            .sum();
        Ok(self.sigma2 * q + jumps)
    }

    /// `Φ(q, s)`: the root `r >= 0` of `Ψ(s r) + r = q`.
    pub fn phi(&self, q: f64, s: f64) -> Result<f64> {
        check_q(q)?;
        if !(s > 0.0) || !s.is_finite() {
            return Err(Error::invalid_arg(format!("s = {s} must be positive")));
        }
        if q == 0.0 {
            return Ok(0.0);
        }
        const MAX_ITER: usize = 200;
        const REL_TOL: f64 = 1e-12;
        let g = |r: f64| -> Result<f64> { Ok(self.psi(s * r)? + r - q) };
        let (mut lo, mut hi) = (0.0, q);
        // the objective is convex and increasing, so Newton from the right
        // end stays to the right of the root
        let mut r = q;
        for _ in 0..MAX_ITER {
            let value = g(r)?;
            if value == 0.0 {
                return Ok(r);
            }
            if value > 0.0 {
                hi = r;
            } else {
                lo = r;
            }
            let slope = s * self.psi_derivative(s * r)? + 1.0;
            let mut next = r - value / slope;
            if !(next > lo && next < hi) {
                next = 0.5 * (lo + hi);
            }
            if (next - r).abs() <= REL_TOL * next.abs() || hi - lo <= REL_TOL * hi {
                return Ok(next);
            }
            r = next;
        }
        Err(Error::Numerical {
            context: "phi",
            message: format!(
                "no convergence after {MAX_ITER} iterations for q = {q}, s = {s}: bracket [{lo}, {hi}], last residual {}",
                g(r).unwrap_or(f64::NAN)
            ),
        })
    }

    /// Atoms actually used for simulation and `Ψ`.
    pub fn effective_atoms(&self) -> &[Atom] {
        &self.measure
    }
}

fn check_q(q: f64) -> Result<()> {
    if !(q >= 0.0) || !q.is_finite() {
        return Err(Error::invalid_arg(format!("q = {q} must be finite and >= 0")));
    }
    Ok(())
}

/// `e^{-y} - 1 + y` without cancellation for small `y`.
fn compensated_exp(y: f64) -> f64 {
    if y < 1e-3 {
        let y2 = y * y;
        y2 * (0.5 - y / 6.0 + y2 / 24.0 - y2 * y / 120.0)
    } else {
        (-y).exp_m1() + y
    }
}

/// Path sampled at `0, h, 2h, …`; `values[i]` is `ξ_{ih}` and owns the cell
/// `[ih, (i+1)h)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscretePath {
    step: f64,
    values: Vec<f64>,
}

impl DiscretePath {
    pub fn new(step: f64, values: Vec<f64>) -> Result<Self> {
        if !(step > 0.0) || values.is_empty() || values[0] != 0.0 {
            return Err(Error::invalid_arg("path needs h > 0 and values starting at 0"));
        }
        Ok(Self { step, values })
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn horizon(&self) -> f64 {
        self.step * self.values.len() as f64
    }

    /// `ξ_r` at the nearest sample, if `r` lies on the sampled range.
    pub fn value_at(&self, r: f64) -> Option<f64> {
        let i = (r / self.step).round();
        (i >= 0.0).then_some(i as usize).and_then(|i| self.values.get(i).copied())
    }
}

/// Euler scheme with exact increments for atomic `Λ`: each step adds
/// `N(0, σ²h) - Σ x_k Poisson(λ_k h) + h Σ λ_k x_k`. The path holds
/// `round(horizon / h)` samples, `ξ_0 = 0` first.
pub fn simulate_path<R: Rng + ?Sized>(
    spec: &LevySpec,
    horizon: f64,
    h: f64,
    rng: &mut R,
) -> Result<DiscretePath> {
    if !(horizon > 0.0 && h > 0.0) || !horizon.is_finite() || !h.is_finite() {
        return Err(Error::invalid_arg("horizon and h must be positive"));
    }
    let n = ((horizon / h).round() as usize).max(1);
    let gauss = Normal::new(0.0, (spec.sigma2 * h).sqrt())
        .map_err(|e| Error::invalid_arg(e.to_string()))?;
    let jumps: Vec<(f64, Poisson<f64>)> = spec
        .effective_atoms()
        .iter()
        .map(|a| {
            Poisson::new(a.rate * h)
                .map(|p| (a.size, p))
                .map_err(|e| Error::invalid_arg(e.to_string()))
        })
        .collect::<Result<_>>()?;
    let drift = h * spec.first_moment();
    let mut values = Vec::with_capacity(n);
    let mut x = 0.0;
    values.push(x);
    for _ in 1..n {
        let mut dx = drift;
        if spec.sigma2 > 0.0 {
            dx += gauss.sample(rng);
        }
        for (size, poisson) in &jumps {
            let count: f64 = poisson.sample(rng);
            dx -= size * count;
        }
        x += dx;
        values.push(x);
    }
    DiscretePath::new(h, values)
}

fn check_s(s: f64) -> Result<()> {
    if !(s > 0.0) || !s.is_finite() {
        return Err(Error::invalid_arg(format!("s = {s} must be positive")));
    }
    Ok(())
}

/// Indices `i` where `s ξ_{ih} + ih` strictly exceeds every earlier value;
/// index 0 is always included.
pub fn record_set(path: &DiscretePath, s: f64) -> Result<Vec<usize>> {
    check_s(s)?;
    let h = path.step;
    let mut best = f64::NEG_INFINITY;
    let mut records = Vec::new();
    for (i, &x) in path.values.iter().enumerate() {
        let v = s * x + i as f64 * h;
        if v > best {
            records.push(i);
            best = v;
        }
    }
    Ok(records)
}

/// Whether the records for `s` are all records for `s_prime`; requires
/// `0 < s_prime < s`.
pub fn check_nesting(path: &DiscretePath, s: f64, s_prime: f64) -> Result<bool> {
    check_s(s_prime)?;
    if !(s_prime < s) {
        return Err(Error::invalid_arg(format!(
            "nesting needs 0 < s_prime < s, got s = {s}, s_prime = {s_prime}"
        )));
    }
    let coarse = record_set(path, s)?;
    let fine = record_set(path, s_prime)?;
    let mut it = fine.iter().peekable();
    Ok(coarse.iter().all(|r| {
        while it.next_if(|&&f| f < *r).is_some() {}
        it.peek() == Some(&r)
    }))
}

/// Maximal runs of non-record indices, as `(first index, length)`.
pub fn non_record_runs(path: &DiscretePath, s: f64) -> Result<Vec<(usize, usize)>> {
    let records = record_set(path, s)?;
    let mut runs = Vec::new();
    let mut bounds = records.clone();
    bounds.push(path.len());
    for w in bounds.windows(2) {
        if w[1] > w[0] + 1 {
            runs.push((w[0] + 1, w[1] - w[0] - 1));
        }
    }
    Ok(runs)
}

/// For each `s` (strictly increasing), the ranked lengths of the interval
/// components of the complement of the record set, `run length × h`.
pub fn interval_aggregation(path: &DiscretePath, s_values: &[f64]) -> Result<Vec<Vec<f64>>> {
    if s_values.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::invalid_arg("s values must be strictly increasing"));
    }
    s_values
        .iter()
        .map(|&s| {
            let mut lengths: Vec<f64> = non_record_runs(path, s)?
                .into_iter()
                .map(|(_, len)| len as f64 * path.step)
                .collect();
            lengths.sort_by(|a, b| b.total_cmp(a));
            Ok(lengths)
        })
        .collect()
}

/// Every run in `fine` lies inside a run of `coarse`.
pub fn runs_refine(fine: &[(usize, usize)], coarse: &[(usize, usize)]) -> bool {
    fine.iter().all(|&(a, len)| {
        let k = coarse.partition_point(|&(c, _)| c <= a);
        k > 0 && {
            let (c, clen) = coarse[k - 1];
            a + len <= c + clen
        }
    })
}
