//! A-priori error bound calculators and assumption checkers: the quantities
//! that connect quantization resolution to the optimality gap, and numeric
//! verification of the minorization and Lipschitz hypotheses behind them.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::mdp_core::{ContinuousModel, Interval};
use crate::numerics::adaptive_quadrature;
use crate::quantization::QuantizationScheme;
use crate::rng::Rng;

/// Relative inflation applied to grid-estimated constants: finite grids
/// underestimate suprema, so upper-bound constants are inflated and floor
/// estimates deflated by this margin.
pub const ESTIMATE_SAFETY_MARGIN: f64 = 0.02;

/// Default number of grid points per state dimension for the estimators.
pub const DEFAULT_GRID_RESOLUTION: usize = 50;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum CertificateSource {
    Declared,
    Estimated { grid_resolution: usize },
}

/// Lipschitz constants of the cost (K_c) and of the kernel under the
/// first-order Wasserstein distance (K_f).
#[derive(Clone, Debug, Serialize)]
pub struct LipschitzCertificate {
    pub k_c: f64,
    pub k_f: f64,
    pub source: CertificateSource,
}

impl LipschitzCertificate {
    pub fn declared(k_c: f64, k_f: f64) -> Result<Self> {
        if k_c < 0.0 || k_f < 0.0 {
            return Err(Error::Config("Lipschitz constants must be nonnegative".into()));
        }
        Ok(LipschitzCertificate {
            k_c,
            k_f,
            source: CertificateSource::Declared,
        })
    }

    /// Wrap grid estimates, inflating both constants by the safety margin.
    pub fn estimated(k_c_raw: f64, k_f_raw: f64, grid_resolution: usize) -> Result<Self> {
        if k_c_raw < 0.0 || k_f_raw < 0.0 {
            return Err(Error::Config("Lipschitz estimates must be nonnegative".into()));
        }
        Ok(LipschitzCertificate {
            k_c: k_c_raw * (1.0 + ESTIMATE_SAFETY_MARGIN),
            k_f: k_f_raw * (1.0 + ESTIMATE_SAFETY_MARGIN),
            source: CertificateSource::Estimated { grid_resolution },
        })
    }

    fn require_contractive(&self) -> Result<()> {
        if self.k_f >= 1.0 {
            return Err(Error::Assumption(format!(
                "kernel Lipschitz constant K_f = {} must be below 1 for the rate bounds",
                self.k_f
            )));
        }
        Ok(())
    }
}

/// Gap between the optimal average costs of the true and the quantized
/// model: K_c / (1 - K_f) * L_X.
pub fn bound_value_gap(cert: &LipschitzCertificate, l_x: f64) -> Result<f64> {
    cert.require_contractive()?;
    if l_x < 0.0 {
        return Err(Error::Config("quantization loss must be nonnegative".into()));
    }
    Ok(cert.k_c / (1.0 - cert.k_f) * l_x)
}

/// Performance loss of the lifted quantized-model policy on the true model:
/// 2 K_c / ((1 - K_f) mu(X)) * L_X.
pub fn bound_policy_gap(cert: &LipschitzCertificate, l_x: f64, mu_mass: f64) -> Result<f64> {
    cert.require_contractive()?;
    if !(0.0 < mu_mass && mu_mass < 1.0) {
        return Err(Error::Assumption(format!(
            "minorization mass mu(X) = {mu_mass} must lie in (0,1)"
        )));
    }
    if l_x < 0.0 {
        return Err(Error::Config("quantization loss must be nonnegative".into()));
    }
    Ok(2.0 * cert.k_c / ((1.0 - cert.k_f) * mu_mass) * l_x)
}

/// Gap from discretizing the action space with a 1/n-net:
/// K_c / (1 - K_f) * (1/n).
pub fn bound_action_gap(cert: &LipschitzCertificate, n: f64) -> Result<f64> {
    cert.require_contractive()?;
    if n <= 0.0 {
        return Err(Error::Config("net resolution must be positive".into()));
    }
    Ok(cert.k_c / (1.0 - cert.k_f) / n)
}

/// Combined state and action bound:
/// 2 K_c / ((1 - K_f) mu(X)) * L_X + K_c / (1 - K_f) * L_U.
pub fn bound_combined(
    cert: &LipschitzCertificate,
    l_x: f64,
    mu_mass: f64,
    l_u: f64,
) -> Result<f64> {
    if l_u < 0.0 {
        return Err(Error::Config("action covering radius must be nonnegative".into()));
    }
    Ok(bound_policy_gap(cert, l_x, mu_mass)? + cert.k_c / (1.0 - cert.k_f) * l_u)
}

/// Exact first-order Wasserstein distance between the kernels at two states
/// under the same action, for models exposing bin masses: in one dimension
/// W1 is the L1 distance of the CDFs.
pub fn wasserstein1_exact(
    model: &dyn ContinuousModel,
    x1: f64,
    x2: f64,
    u: f64,
    tol: f64,
) -> Option<f64> {
    let bounds = model.state_bounds();
    let probe = Interval::closed(bounds.lo, bounds.midpoint());
    model.bin_mass(x1, u, &probe)?;
    let cdf = |x: f64, t: f64| {
        model
            .bin_mass(x, u, &Interval::closed(bounds.lo, t))
            .expect("bin masses available")
    };
    Some(adaptive_quadrature(
        |t| (cdf(x1, t) - cdf(x2, t)).abs(),
        bounds.lo,
        bounds.hi,
        tol,
    ))
}

/// Empirical W1 between the kernels at two states from matched sample sets:
/// the mean absolute difference of sorted samples.
pub fn wasserstein1_empirical(
    model: &dyn ContinuousModel,
    x1: f64,
    x2: f64,
    u: f64,
    num_samples: usize,
    rng: &mut Rng,
) -> f64 {
    let mut a: Vec<f64> = (0..num_samples)
        .map(|_| model.sample_next(x1, u, rng))
        .collect();
    let mut b: Vec<f64> = (0..num_samples)
        .map(|_| model.sample_next(x2, u, rng))
        .collect();
    a.sort_by(|p, q| p.partial_cmp(q).unwrap());
    b.sort_by(|p, q| p.partial_cmp(q).unwrap());
    a.iter().zip(&b).map(|(p, q)| (p - q).abs()).sum::<f64>() / num_samples as f64
}

/// Raw grid estimate of the kernel's Wasserstein-Lipschitz constant: the
/// maximum of W1(T(.|x,u), T(.|x',u)) / |x - x'| over a state grid and the
/// given actions. Exact CDFs are used when the model exposes bin masses,
/// empirical CDFs from 10^4 samples otherwise.
pub fn estimate_wasserstein_lipschitz(
    model: &dyn ContinuousModel,
    grid_points: usize,
    actions: &[f64],
    seed: u64,
) -> Result<f64> {
    if model.state_dim() != 1 {
        return Err(Error::Config(
            "Wasserstein-Lipschitz estimation supports one-dimensional states only".into(),
        ));
    }
    if grid_points < 2 || actions.is_empty() {
        return Err(Error::Config("need at least two grid points and one action".into()));
    }
    let bounds = model.state_bounds();
    let grid: Vec<f64> = (0..grid_points)
        .map(|i| bounds.lo + (bounds.hi - bounds.lo) * i as f64 / (grid_points - 1) as f64)
        .collect();
    let probe = Interval::closed(bounds.lo, bounds.midpoint());
    let exact = model.bin_mass(grid[0], actions[0], &probe).is_some();
    let mut best = 0.0f64;
    for (ui, &u) in actions.iter().enumerate() {
        for i in 0..grid.len() {
            for j in (i + 1)..grid.len() {
                let dx = grid[j] - grid[i];
                if dx <= 0.0 {
                    continue;
                }
                let w1 = if exact {
                    wasserstein1_exact(model, grid[i], grid[j], u, 1e-9).unwrap()
                } else {
                    let mut rng = Rng::derive(seed, &[ui as u64, i as u64, j as u64]);
                    wasserstein1_empirical(model, grid[i], grid[j], u, 10_000, &mut rng)
                };
                best = best.max(w1 / dx);
            }
        }
    }
    Ok(best)
}

/// Outcome of the minorization check on a quantization scheme.
#[derive(Clone, Debug, Serialize)]
pub enum MinorizationCheck {
    /// A declared certificate was confirmed on the grid. `slack[i]` is the
    /// smallest observed T(B_i|x,u) minus the certified mu(B_i).
    Verified {
        bin_floor: Vec<f64>,
        slack: Vec<f64>,
        /// Every bin carries positive certified mass (the hypothesis of the
        /// all-bins shift); otherwise only some bins do and the shift
        /// support must be restricted.
        all_bins_positive: bool,
    },
    /// No certificate was declared but the grid supports a nontrivial
    /// floor (deflated by the safety margin).
    EstimatedCertificate {
        bin_floor: Vec<f64>,
        all_bins_positive: bool,
    },
    /// A declared certificate failed on the grid, or no nontrivial floor
    /// exists.
    Violation { report: String },
    /// The model exposes no kernel bin masses, so nothing can be checked.
    Unverifiable,
}

/// Verify T(B_i|x,u) >= mu(B_i) on a `grid_points` x actions grid.
pub fn check_minorization(
    model: &dyn ContinuousModel,
    scheme: &QuantizationScheme,
    grid_points: usize,
) -> MinorizationCheck {
    let bounds = model.state_bounds();
    let probe = &scheme.bins[0];
    if model.bin_mass(bounds.lo, scheme.action_net[0], probe).is_none() {
        return MinorizationCheck::Unverifiable;
    }
    let grid: Vec<f64> = (0..grid_points.max(2))
        .map(|i| bounds.lo + (bounds.hi - bounds.lo) * i as f64 / (grid_points.max(2) - 1) as f64)
        .collect();
    let m = scheme.num_bins();
    let mut inf_mass = vec![f64::INFINITY; m];
    for &x in &grid {
        for &u in &scheme.action_net {
            for (i, bin) in scheme.bins.iter().enumerate() {
                let mass = model.bin_mass(x, u, bin).expect("bin masses available");
                inf_mass[i] = inf_mass[i].min(mass);
            }
        }
    }
    match model.minorization() {
        Some(mu) => {
            let bin_floor: Vec<f64> = scheme.bins.iter().map(|b| mu.bin_mass(b)).collect();
            let slack: Vec<f64> = inf_mass
                .iter()
                .zip(&bin_floor)
                .map(|(inf, fl)| inf - fl)
                .collect();
            let bad: Vec<usize> = slack
                .iter()
                .enumerate()
                .filter(|(_, s)| **s < -1e-9)
                .map(|(i, _)| i)
                .collect();
            if bad.is_empty() {
                let all_bins_positive = bin_floor.iter().all(|f| *f > 0.0);
                MinorizationCheck::Verified {
                    bin_floor,
                    slack,
                    all_bins_positive,
                }
            } else {
                MinorizationCheck::Violation {
                    report: format!(
                        "declared minorization violated on bins {bad:?}: kernel mass drops \
                         below the certified floor"
                    ),
                }
            }
        }
        None => {
            let bin_floor: Vec<f64> = inf_mass
                .iter()
                .map(|inf| inf * (1.0 - ESTIMATE_SAFETY_MARGIN))
                .collect();
            let total: f64 = bin_floor.iter().sum();
            if total > 1e-12 {
                let all_bins_positive = bin_floor.iter().all(|f| *f > 0.0);
                MinorizationCheck::EstimatedCertificate {
                    bin_floor,
                    all_bins_positive,
                }
            } else {
                MinorizationCheck::Violation {
                    report: "no nontrivial minorization measure: some bin has zero worst-case \
                             mass under every grid state-action"
                        .into(),
                }
            }
        }
    }
}

/// Machine-readable bound report emitted by the CLI.
#[derive(Clone, Debug, Serialize)]
pub struct BoundReport {
    pub theorem: String,
    pub inputs: BTreeMap<String, f64>,
    pub bound: f64,
    pub empirical_gap: Option<f64>,
    pub satisfied: Option<bool>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environments::{CaseStudyModel, HalvingModel};
    use crate::quantization::WeightMeasure;

    fn case_cert() -> LipschitzCertificate {
        let (kc, kf) = CaseStudyModel::lipschitz_constants();
        LipschitzCertificate::declared(kc, kf).unwrap()
    }

    #[test]
    fn value_gap_formula_instances() {
        let cert = case_cert();
        // M = 5 uniform bins: L_X = 0.1
        assert!((bound_value_gap(&cert, 0.1).unwrap() - 0.7).abs() < 1e-12);
        assert_eq!(bound_value_gap(&cert, 0.0).unwrap(), 0.0);
        let unit = LipschitzCertificate::declared(1.0, 0.0).unwrap();
        assert!((bound_value_gap(&unit, 0.25).unwrap() - 0.25).abs() < 1e-15);
    }

    #[test]
    fn policy_gap_formula_instances() {
        let cert = case_cert();
        let b = bound_policy_gap(&cert, 0.1, 0.1).unwrap();
        assert!((b - 14.0).abs() < 1e-9);
        assert_eq!(bound_policy_gap(&cert, 0.0, 0.1).unwrap(), 0.0);
        // halving M doubles L_X and therefore the bound
        let b10 = bound_policy_gap(&cert, 0.05, 0.1).unwrap();
        assert!((b / b10 - 2.0).abs() < 1e-12);
    }

    #[test]
    fn action_gap_and_combined() {
        let cert = case_cert();
        // the 3-point net on [-1,1] has covering radius 1/2, i.e. n = 2
        let b = bound_action_gap(&cert, 2.0).unwrap();
        assert!((b - 3.5).abs() < 1e-9);
        assert!(bound_action_gap(&cert, 1e12).unwrap() < 1e-11);
        let combined = bound_combined(&cert, 0.1, 0.1, 0.5).unwrap();
        assert!((combined - 17.5).abs() < 1e-9);
    }

    #[test]
    fn bounds_refuse_non_contractive_kernels() {
        let cert = LipschitzCertificate::declared(1.0, 1.0).unwrap();
        assert_eq!(bound_value_gap(&cert, 0.1).unwrap_err().exit_code(), 3);
        assert_eq!(
            bound_policy_gap(&cert, 0.1, 0.1).unwrap_err().exit_code(),
            3
        );
    }

    #[test]
    fn estimated_certificates_carry_margin() {
        let cert = LipschitzCertificate::estimated(0.7, 0.9, 50).unwrap();
        assert!((cert.k_c - 0.714).abs() < 1e-12);
        assert!((cert.k_f - 0.918).abs() < 1e-12);
    }

    #[test]
    fn w1_case_study_spot_check() {
        // neighbouring states under the same action: W1 <= K_f |x - x'|
        let model = CaseStudyModel;
        let w1 = wasserstein1_exact(&model, 0.2, 0.3, 0.5, 1e-9).unwrap();
        assert!(w1 <= 0.9 * 0.1 + 1e-6, "w1 = {w1}");
        assert!(w1 > 0.9 * 0.1 - 1e-3);
    }

    #[test]
    fn wasserstein_lipschitz_estimates() {
        let model = CaseStudyModel;
        let est =
            estimate_wasserstein_lipschitz(&model, 25, &[-1.0, -0.5, 0.0, 0.5, 1.0], 0).unwrap();
        assert!(est <= 0.9 + 0.02, "estimate {est}");
        assert!(est >= 0.9 - 0.02, "estimate {est}");

        // deterministic halving map: kernels are point masses at x/2
        let est_halving = estimate_wasserstein_lipschitz(&HalvingModel, 9, &[0.0], 0).unwrap();
        assert!((est_halving - 0.5).abs() < 1e-6, "estimate {est_halving}");
    }

    #[test]
    fn iid_kernel_has_zero_lipschitz_constant() {
        #[derive(Debug)]
        struct Iid;
        impl ContinuousModel for Iid {
            fn state_bounds(&self) -> Interval {
                Interval::closed(0.0, 1.0)
            }
            fn action_domain(&self) -> crate::mdp_core::ActionDomain {
                crate::mdp_core::ActionDomain::Finite(vec![0.0])
            }
            fn cost(&self, x: f64, _u: f64) -> f64 {
                x
            }
            fn cost_bound(&self) -> f64 {
                1.0
            }
            fn sample_next(&self, _x: f64, _u: f64, rng: &mut Rng) -> f64 {
                rng.next_f64()
            }
            fn bin_mass(&self, _x: f64, _u: f64, bin: &Interval) -> Option<f64> {
                Some(bin.overlap_len(0.0, 1.0))
            }
        }
        let est = estimate_wasserstein_lipschitz(&Iid, 11, &[0.0], 0).unwrap();
        assert!(est < 1e-9);
    }

    #[test]
    fn minorization_check_case_study() {
        let scheme = QuantizationScheme::uniform(
            Interval::closed(0.0, 1.0),
            4,
            vec![-1.0, 0.0, 1.0],
            WeightMeasure::Uniform,
        )
        .unwrap();
        match check_minorization(&CaseStudyModel, &scheme, 21) {
            MinorizationCheck::Verified {
                bin_floor,
                slack,
                all_bins_positive,
            } => {
                assert!(all_bins_positive);
                for f in &bin_floor {
                    assert!((f - 0.025).abs() < 1e-12);
                }
                for s in &slack {
                    assert!(*s >= -1e-9);
                }
            }
            other => panic!("expected verification, got {other:?}"),
        }
    }

    #[test]
    fn minorization_check_estimates_iid_uniform_floor() {
        // a kernel with no x-dependence supports the full distribution as a
        // floor; without a declared certificate the checker estimates it
        #[derive(Debug)]
        struct Iid;
        impl ContinuousModel for Iid {
            fn state_bounds(&self) -> Interval {
                Interval::closed(0.0, 1.0)
            }
            fn action_domain(&self) -> crate::mdp_core::ActionDomain {
                crate::mdp_core::ActionDomain::Finite(vec![0.0])
            }
            fn cost(&self, x: f64, _u: f64) -> f64 {
                x
            }
            fn cost_bound(&self) -> f64 {
                1.0
            }
            fn sample_next(&self, _x: f64, _u: f64, rng: &mut Rng) -> f64 {
                rng.next_f64()
            }
            fn bin_mass(&self, _x: f64, _u: f64, bin: &Interval) -> Option<f64> {
                Some(bin.overlap_len(0.0, 1.0))
            }
        }
        let scheme = QuantizationScheme::uniform(
            Interval::closed(0.0, 1.0),
            4,
            vec![0.0],
            WeightMeasure::Uniform,
        )
        .unwrap();
        match check_minorization(&Iid, &scheme, 11) {
            MinorizationCheck::EstimatedCertificate {
                bin_floor,
                all_bins_positive,
            } => {
                assert!(all_bins_positive);
                for f in &bin_floor {
                    assert!((f - 0.25 * (1.0 - ESTIMATE_SAFETY_MARGIN)).abs() < 1e-12);
                }
            }
            other => panic!("expected estimated certificate, got {other:?}"),
        }
    }

    #[test]
    fn minorization_check_rejects_halving() {
        let scheme = QuantizationScheme::uniform(
            Interval::closed(-1.0, 1.0),
            2,
            vec![0.0],
            WeightMeasure::Uniform,
        )
        .unwrap();
        match check_minorization(&HalvingModel, &scheme, 21) {
            MinorizationCheck::Violation { .. } => {}
            other => panic!("expected violation, got {other:?}"),
        }
    }
}
