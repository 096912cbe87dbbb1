//! Eternal solutions of Smoluchowski's coagulation equation with additive
//! kernel, described through their Laplace functional
//! `∫(1 - e^{-qx}) μ_t(dx) = Φ(q, e^t)`.

use std::f64::consts::PI;

use rayon::prelude::*;

use crate::coalescent::{standard_elapsed, CoalescentEngine};
use crate::error::{Error, Result};
use crate::levy::LevySpec;
use crate::mass::RankedMassVector;
use crate::quadrature::integrate_half_line;
use crate::rng::RngStream;
use crate::stats::{ks_test, regularized_gamma_p, TestReport};

pub const QUADRATURE_TOL: f64 = 1e-10;
pub const FD_STEP: f64 = 1e-4;

#[derive(Debug, Clone)]
pub struct EternalSolution {
    spec: LevySpec,
}

impl EternalSolution {
    /// Specs with `σ² = 0` do not generate an eternal solution and are
    /// rejected.
    pub fn new(spec: LevySpec) -> Result<Self> {
        if !spec.is_conforming() {
            return Err(Error::InvalidConfiguration(
                "eternal solutions need sigma2 > 0 (or a Lévy measure with infinite first moment)".into(),
            ));
        }
        Ok(Self { spec })
    }

    pub fn brownian() -> Self {
        Self {
            spec: LevySpec::brownian(),
        }
    }

    pub fn spec(&self) -> &LevySpec {
        &self.spec
    }

    pub fn is_brownian(&self) -> bool {
        self.spec.sigma2() == 1.0 && self.spec.effective_atoms().is_empty()
    }

    /// `Φ(q, e^t)`.
    pub fn laplace_functional(&self, q: f64, t: f64) -> Result<f64> {
        self.spec.phi(q, t.exp())
    }

    /// `|∂_t Φ + Φ (1 - ∂_q Φ)|` at `(q, e^t)` with central differences of
    /// step `h` in both variables (forward in `q` when `q < h`).
    pub fn pde_residual(&self, t: f64, q: f64, h: f64) -> Result<f64> {
        if !(h > 0.0) {
            return Err(Error::invalid_arg("finite-difference step must be positive"));
        }
        let f = |q: f64, t: f64| self.laplace_functional(q, t);
        let value = f(q, t)?;
        let d_t = (f(q, t + h)? - f(q, t - h)?) / (2.0 * h);
        let d_q = if q >= h {
            (f(q + h, t)? - f(q - h, t)?) / (2.0 * h)
        } else {
            (f(q + h, t)? - value) / h
        };
        Ok((d_t + value * (1.0 - d_q)).abs())
    }
}

/// `e^{-t} (2π x³)^{-1/2} exp(-x e^{-2t} / 2)`.
pub fn brownian_density(t: f64, x: f64) -> Result<f64> {
    if !(x > 0.0) {
        return Err(Error::invalid_arg(format!("density needs x > 0, got {x}")));
    }
    Ok((-t).exp() / (2.0 * PI * x.powi(3)).sqrt() * (-0.5 * x * (-2.0 * t).exp()).exp())
}

/// CDF of the size-biased law `x μ_t(dx)`, a Gamma(1/2) law with rate
/// `e^{-2t}/2`.
pub fn size_biased_brownian_cdf(t: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    regularized_gamma_p(0.5, 0.5 * x * (-2.0 * t).exp())
}

/// `∫ (1 - e^{-qx}) density(x) dx` by adaptive quadrature on `(0, ∞)`.
pub fn laplace_by_quadrature<F: Fn(f64) -> f64>(density: F, q: f64) -> Result<f64> {
    Ok(integrate_half_line(|x| -(-q * x).exp_m1() * density(x), QUADRATURE_TOL)?.value)
}

fn worst_residual<F: Fn(f64) -> f64>(density: F, t: f64, q_grid: &[f64]) -> Result<f64> {
    let sol = EternalSolution::brownian();
    let mut worst = 0.0f64;
    for &q in q_grid {
        if !(q >= 0.0) {
            return Err(Error::invalid_arg("q grid must be non-negative"));
        }
        let exact = sol.laplace_functional(q, t)?;
        let quad = laplace_by_quadrature(&density, q)?;
        let residual = if exact == 0.0 {
            quad.abs()
        } else {
            ((quad - exact) / exact).abs()
        };
        worst = worst.max(residual);
    }
    Ok(worst)
}

/// Worst relative gap between the quadrature of the Brownian density's
/// Laplace functional and `Φ(q, e^t)` over `q_grid`.
pub fn verify_laplace_identity(t: f64, q_grid: &[f64]) -> Result<f64> {
    worst_residual(|x| brownian_density(t, x).unwrap_or(0.0), t, q_grid)
}

/// Same comparison with the density multiplied by `scale`; used as a
/// negative control.
pub fn verify_laplace_identity_scaled(t: f64, q_grid: &[f64], scale: f64) -> Result<f64> {
    worst_residual(|x| scale * brownian_density(t, x).unwrap_or(0.0), t, q_grid)
}

/// Mass of the cluster containing a uniformly chosen unit of mass.
fn size_biased_pick(state: &RankedMassVector, u: f64) -> f64 {
    let mut acc = 0.0;
    for &m in state.masses() {
        acc += m;
        if u < acc {
            return m;
        }
    }
    *state.masses().last().expect("non-empty state")
}

/// Size-biased cluster masses, one per independent monodisperse system of
/// `n` clusters run to standard time `t`.
pub fn size_biased_samples(n: usize, t: f64, replicates: usize, master_seed: u64) -> Result<Vec<f64>> {
    let elapsed = standard_elapsed(n, t);
    if !(elapsed >= 0.0) {
        return Err(Error::invalid_arg(format!(
            "standard time {t} precedes the start of a system of {n} clusters"
        )));
    }
    let initial = RankedMassVector::monodisperse(n)?;
    Ok((0..replicates)
        .into_par_iter()
        .map(|r| {
            let mut rng = RngStream::new(master_seed, r as u64);
            let mut engine = CoalescentEngine::new(&initial);
            engine.run_until(elapsed, &mut rng);
            let u: f64 = rand::Rng::random(&mut rng);
            size_biased_pick(&engine.state(), u * engine.state().total())
        })
        .collect())
}

/// KS comparison of size-biased cluster masses of the monodisperse
/// coalescent at standard time `t` with the size-biased Brownian solution.
pub fn mean_field_check(n: usize, t: f64, replicates: usize, master_seed: u64) -> Result<TestReport> {
    let samples = size_biased_samples(n, t, replicates, master_seed)?;
    ks_test(&samples, |x| size_biased_brownian_cdf(t, x))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::levy::Atom;
    use crate::quadrature::integrate_half_line;
    use approx::assert_relative_eq;
    use statrs::distribution::{ContinuousCDF, Gamma};

    #[test]
    fn density_examples() {
        let v = brownian_density(0.0, 1.0).unwrap();
        assert_relative_eq!(v, (2.0 * PI).sqrt().recip() * (-0.5f64).exp(), max_relative = 1e-15);
        assert!((v - 0.24197).abs() < 1e-5);
        assert!(brownian_density(0.0, 0.0).is_err());
        assert!(brownian_density(0.0, -1.0).is_err());
        // x^{-3/2} blow-up
        let ratio = brownian_density(0.0, 1e-8).unwrap() / brownian_density(0.0, 4e-8).unwrap();
        assert_relative_eq!(ratio, 8.0, max_relative = 1e-6);
    }

    #[test]
    fn unit_mass_by_quadrature() {
        for &t in &[-1.0, 0.0, 1.0] {
            let q = integrate_half_line(|x| x * brownian_density(t, x).unwrap(), 1e-10).unwrap();
            assert!((q.value - 1.0).abs() <= 1e-8, "t={t}: {}", q.value);
        }
    }

    #[test]
    fn size_biased_cdf_matches_gamma() {
        for &t in &[-1.0, 0.0, 1.0] {
            let rate = 0.5 * (-2.0f64 * t).exp();
            let g = Gamma::new(0.5, rate).unwrap();
            for &x in &[0.01, 0.3, 1.0, 4.0, 20.0] {
                assert!((size_biased_brownian_cdf(t, x) - g.cdf(x)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn laplace_functional_examples() {
        let sol = EternalSolution::brownian();
        assert_eq!(sol.laplace_functional(0.0, 0.3).unwrap(), 0.0);
        assert_relative_eq!(sol.laplace_functional(4.0, 0.0).unwrap(), 2.0, max_relative = 1e-12);
        let values: Vec<f64> = (1..50).map(|k| sol.laplace_functional(k as f64 * 0.2, 0.5).unwrap()).collect();
        for w in values.windows(3) {
            assert!(w[0] < w[1] && w[1] < w[2]);
            assert!(w[0] + w[2] - 2.0 * w[1] <= 1e-12);
        }
    }

    #[test]
    fn laplace_identity() {
        let grid = [0.5, 1.0, 2.0, 5.0];
        for &t in &[-1.0, 0.0, 1.0] {
            assert!(verify_laplace_identity(t, &grid).unwrap() <= 1e-6);
            assert!(verify_laplace_identity_scaled(t, &grid, 1.01).unwrap() > 5e-3);
        }
        assert_eq!(verify_laplace_identity(0.0, &[0.0]).unwrap(), 0.0);
    }

    #[test]
    fn reduced_pde_identity() {
        let specs = [
            EternalSolution::brownian(),
            EternalSolution::new(LevySpec::new(0.5, vec![Atom { size: 1.0, rate: 2.0 }, Atom { size: 0.1, rate: 7.0 }]).unwrap()).unwrap(),
        ];
        for sol in &specs {
            for &q in &[0.5, 1.0, 2.0, 5.0] {
                for &t in &[-1.0, 0.0, 1.0] {
                    let r = sol.pde_residual(t, q, FD_STEP).unwrap();
                    assert!(r <= 1e-4, "q={q} t={t} residual {r}");
                }
            }
            assert!(sol.pde_residual(0.0, 0.0, FD_STEP).unwrap() < 1e-4);
        }
    }

    #[test]
    fn pde_residual_detects_wrong_sign() {
        // Φ evaluated at e^{-t} does not solve the equation
        let sol = EternalSolution::brownian();
        let f = |q: f64, t: f64| sol.laplace_functional(q, -t).unwrap();
        let (q, t, h) = (1.0, 0.0, 1e-4);
        let d_t = (f(q, t + h) - f(q, t - h)) / (2.0 * h);
        let d_q = (f(q + h, t) - f(q - h, t)) / (2.0 * h);
        assert!((d_t + f(q, t) * (1.0 - d_q)).abs() > 1e-2);
    }

    #[test]
    fn decreasing_in_time() {
        let sol = EternalSolution::brownian();
        let values: Vec<f64> = (-20..20).map(|k| sol.laplace_functional(1.5, k as f64 * 0.1).unwrap()).collect();
        assert!(values.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn non_conforming_rejected() {
        let spec = LevySpec::new(0.0, vec![Atom { size: 1.0, rate: 1.0 }]).unwrap();
        assert!(EternalSolution::new(spec).is_err());
    }

    #[test]
    fn size_biased_pick_boundaries() {
        let s = RankedMassVector::rank(&[0.5, 0.3, 0.2]).unwrap();
        assert_eq!(size_biased_pick(&s, 0.0), 0.5);
        assert_eq!(size_biased_pick(&s, 0.6), 0.3);
        assert_eq!(size_biased_pick(&s, 0.99), 0.2);
    }

    #[test]
    fn mean_field_agrees_in_dust_regime() {
        // early standard time: clusters are small and the unit-sum
        // constraint is immaterial
        let report = mean_field_check(10_000, -2.0, 1000, 5).unwrap();
        assert!(report.statistic < 0.08, "{report:?}");
        assert!(size_biased_samples(100, -10.0, 1, 0).is_err());
    }
}
