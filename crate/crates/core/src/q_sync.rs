//! Synchronous quantized Q-learning: every (bin, action) cell is updated in
//! each sweep from freshly sampled states, and the table is reported
//! normalized at a reference pair.

use crate::error::{Error, Result};
use crate::mdp_core::{ContinuousModel, FiniteModel};
use crate::numerics::{span_diff, sup_norm};
use crate::quantization::QuantizationScheme;
use crate::rng::Rng;

/// Step-size schedule; must satisfy sum(alpha) = inf, sum(alpha^2) < inf.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum LearningRate {
    /// alpha_t = 1/t, t starting at 1.
    Harmonic,
    /// alpha_t = t^(-exponent) with exponent in (1/2, 1].
    Polynomial { exponent: f64 },
}

impl LearningRate {
    pub fn validate(&self) -> Result<()> {
        match self {
            LearningRate::Harmonic => Ok(()),
            LearningRate::Polynomial { exponent } => {
                if *exponent > 0.5 && *exponent <= 1.0 {
                    Ok(())
                } else {
                    Err(Error::Config(format!(
                        "polynomial learning-rate exponent {exponent} outside (1/2, 1]"
                    )))
                }
            }
        }
    }

    #[inline]
    pub fn alpha(&self, t: u64) -> f64 {
        debug_assert!(t >= 1);
        match self {
            LearningRate::Harmonic => 1.0 / t as f64,
            LearningRate::Polynomial { exponent } => (t as f64).powf(-exponent),
        }
    }
}

#[derive(Clone, Debug)]
pub struct SyncConfig {
    pub num_sweeps: u64,
    pub learning_rate: LearningRate,
    /// Reference pair (y0, u0) subtracted from the table after every sweep.
    pub normalization: (usize, usize),
    pub seed: u64,
    /// Sweeps between recorded learning-curve rows.
    pub snapshot_every: u64,
    /// Initial table; zero when absent.
    pub q0: Option<Vec<f64>>,
}

impl Default for SyncConfig {
    fn default() -> Self {
        SyncConfig {
            num_sweeps: 1000,
            learning_rate: LearningRate::Harmonic,
            normalization: (0, 0),
            seed: 0,
            snapshot_every: 100,
            q0: None,
        }
    }
}

/// Exact finite model and Q table the learning curve is measured against.
#[derive(Clone, Copy, Debug)]
pub struct SyncReference<'a> {
    pub finite: &'a FiniteModel,
    pub q_star: &'a [f64],
}

#[derive(Clone, Debug)]
pub struct SyncCurveRow {
    pub sweep: u64,
    /// span of (Q_hat_t - Q*) when a reference is supplied.
    pub span_to_ref: Option<f64>,
    /// span of the last sweep's table change.
    pub span_successive: f64,
    /// Gain recovered through the reference model's optimality identity.
    pub gain_estimate: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct SyncOutcome {
    /// Final normalized table: Q_hat(y0, u0) = 0.
    pub q_hat: Vec<f64>,
    pub curve: Vec<SyncCurveRow>,
    /// sup-norm of the unnormalized table after each sweep (index 0 is the
    /// initial table), for the boundedness growth law.
    pub sup_norms: Vec<f64>,
    pub warning: Option<String>,
}

/// Run synchronous quantized Q-learning.
///
/// Each sweep draws one state per bin from the normalized weight measure,
/// shares it across all actions of that bin, and draws an independent next
/// state per (bin, action) cell. Cell randomness is derived from
/// (seed, sweep, bin, cell), so any parallel schedule of the cell updates
/// produces the same table as this sequential one.
pub fn train_sync(
    model: &dyn ContinuousModel,
    scheme: &QuantizationScheme,
    cfg: &SyncConfig,
    reference: Option<SyncReference<'_>>,
) -> Result<SyncOutcome> {
    cfg.learning_rate.validate()?;
    if cfg.num_sweeps == 0 {
        return Err(Error::Config("num_sweeps must be at least 1".into()));
    }
    if cfg.snapshot_every == 0 {
        return Err(Error::Config("snapshot_every must be at least 1".into()));
    }
    let m = scheme.num_bins();
    let k = scheme.action_net.len();
    let (y0, u0) = cfg.normalization;
    if y0 >= m || u0 >= k {
        return Err(Error::Config(format!(
            "normalization pair ({y0},{u0}) out of range for {m}x{k} table"
        )));
    }
    let mut q = match &cfg.q0 {
        Some(init) => {
            if init.len() != m * k {
                return Err(Error::Config("q0 shape mismatch".into()));
            }
            init.clone()
        }
        None => vec![0.0; m * k],
    };
    let mut warning = None;
    if let Some(r) = &reference {
        if r.finite.num_states != m || r.finite.num_actions != k {
            return Err(Error::Config("reference model shape mismatch".into()));
        }
        if r.q_star.len() != m * k {
            return Err(Error::Config("reference Q table shape mismatch".into()));
        }
        let beta = crate::finite_solver::tv_contraction_certificate(r.finite);
        if beta >= 1.0 {
            warning = Some(format!(
                "reference model TV certificate {beta:.6} >= 1; span convergence is not \
                 certified (the minorization route may still apply)"
            ));
        }
    }

    let mut sup_norms = Vec::with_capacity(cfg.num_sweeps as usize + 1);
    sup_norms.push(sup_norm(&q));
    let mut curve = Vec::new();
    let mut q_next = vec![0.0; m * k];
    let net = &scheme.action_net;

    for t in 1..=cfg.num_sweeps {
        let alpha = cfg.learning_rate.alpha(t);
        for i in 0..m {
            let mut state_rng = Rng::derive(cfg.seed, &[t, i as u64, 0]);
            let x = scheme.sample_in_bin(i, &mut state_rng);
            for j in 0..k {
                let mut cell_rng = Rng::derive(cfg.seed, &[t, i as u64, 1 + j as u64]);
                let u = net[j];
                let cost = model.cost(x, u);
                let next = model.sample_next(x, u, &mut cell_rng);
                let (bin_next, _) = scheme.quantize(next)?;
                let continuation = (0..k)
                    .map(|v| q[bin_next * k + v])
                    .fold(f64::INFINITY, f64::min);
                q_next[i * k + j] = (1.0 - alpha) * q[i * k + j] + alpha * (cost + continuation);
            }
        }
        let successive = span_diff(&q_next, &q);
        std::mem::swap(&mut q, &mut q_next);
        sup_norms.push(sup_norm(&q));

        if t % cfg.snapshot_every == 0 || t == cfg.num_sweeps {
            let offset = q[y0 * k + u0];
            let q_hat: Vec<f64> = q.iter().map(|v| v - offset).collect();
            let (span_to_ref, gain_estimate) = match &reference {
                Some(r) => (
                    Some(span_diff(&q_hat, r.q_star)),
                    Some(recover_gain(&q_hat, r.finite, (y0, u0))?),
                ),
                None => (None, None),
            };
            curve.push(SyncCurveRow {
                sweep: t,
                span_to_ref,
                span_successive: successive,
                gain_estimate,
            });
        }
    }

    let offset = q[y0 * k + u0];
    let q_hat = q.iter().map(|v| v - offset).collect();
    Ok(SyncOutcome {
        q_hat,
        curve,
        sup_norms,
        warning,
    })
}

/// Recover the average-cost gain from a normalized table through the
/// optimality identity at the normalization pair:
/// j = C*(y0,u0) + sum_z P*(z|y0,u0) min_u Q_hat(z,u).
pub fn recover_gain(q_hat: &[f64], finite: &FiniteModel, pair: (usize, usize)) -> Result<f64> {
    let (m, k) = (finite.num_states, finite.num_actions);
    if q_hat.len() != m * k {
        return Err(Error::Config("table shape mismatch".into()));
    }
    let (y0, u0) = pair;
    if y0 >= m || u0 >= k {
        return Err(Error::Config("normalization pair out of range".into()));
    }
    if q_hat[y0 * k + u0].abs() > 1e-9 {
        return Err(Error::Config(format!(
            "table is not normalized at ({y0},{u0}): {}",
            q_hat[y0 * k + u0]
        )));
    }
    let values: Vec<f64> = q_hat
        .chunks(k)
        .map(|row| row.iter().cloned().fold(f64::INFINITY, f64::min))
        .collect();
    let mut j = finite.cost_at(y0, u0);
    for (p, v) in finite.kernel_row(y0, u0).iter().zip(&values) {
        j += p * v;
    }
    Ok(j)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environments::SyntheticFiniteModel;
    use crate::finite_solver::{solve_shifted_kernel, SolverConfig};
    use crate::mdp_core::FiniteModel;

    fn tiny_model(cost: f64) -> SyntheticFiniteModel {
        SyntheticFiniteModel::new(
            FiniteModel::new(1, 1, vec![cost], vec![1.0], vec![0.5]).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn single_cell_table_normalizes_to_zero() {
        let model = tiny_model(0.9);
        let scheme = model.identity_scheme();
        let cfg = SyncConfig {
            num_sweeps: 50,
            snapshot_every: 10,
            ..Default::default()
        };
        let out = train_sync(&model, &scheme, &cfg, None).unwrap();
        assert_eq!(out.q_hat, vec![0.0]);
        for row in &out.curve {
            assert!(row.span_to_ref.is_none());
        }
    }

    #[test]
    fn one_sweep_full_step_equals_value_iteration() {
        // deterministic kernel: one sweep with alpha_1 = 1 from Q0 = 0 is an
        // exact Bellman image of the zero table, i.e. the cost matrix
        let finite = FiniteModel::new(
            3,
            2,
            vec![0.3, 0.9, 0.1, 0.5, 0.8, 0.2],
            vec![
                0.0, 1.0, 0.0, 0.0, 0.0, 1.0, // y=0
                1.0, 0.0, 0.0, 0.0, 1.0, 0.0, // y=1
                0.0, 0.0, 1.0, 1.0, 0.0, 0.0, // y=2
            ],
            vec![0.0; 3],
        )
        .unwrap();
        let model = SyntheticFiniteModel::new(finite.clone()).unwrap();
        let scheme = model.identity_scheme();
        let cfg = SyncConfig {
            num_sweeps: 1,
            normalization: (0, 0),
            snapshot_every: 1,
            ..Default::default()
        };
        let out = train_sync(&model, &scheme, &cfg, None).unwrap();
        let offset = finite.cost_at(0, 0);
        for (got, want) in out.q_hat.iter().zip(&finite.cost) {
            assert!((got - (want - offset)).abs() < 1e-9);
        }
    }

    #[test]
    fn growth_law_and_determinism() {
        let model = SyntheticFiniteModel::random(3, 2, 0.05, 0.1, 42).unwrap();
        let scheme = model.identity_scheme();
        let cfg = SyncConfig {
            num_sweeps: 500,
            seed: 5,
            snapshot_every: 100,
            ..Default::default()
        };
        let out1 = train_sync(&model, &scheme, &cfg, None).unwrap();
        let out2 = train_sync(&model, &scheme, &cfg, None).unwrap();
        assert_eq!(out1.q_hat, out2.q_hat);
        let c_sup = model.cost_bound();
        for (t, w) in out1.sup_norms.windows(2).enumerate() {
            let alpha = cfg.learning_rate.alpha(t as u64 + 1);
            assert!(
                w[1] <= w[0] + alpha * c_sup + 1e-12,
                "sweep {}: {} > {} + {alpha} * {c_sup}",
                t + 1,
                w[1],
                w[0]
            );
        }
    }

    #[test]
    fn recover_gain_from_exact_table() {
        let model = SyntheticFiniteModel::random(4, 3, 0.05, 0.1, 7).unwrap();
        let sol = solve_shifted_kernel(model.finite(), &SolverConfig::default()).unwrap();
        let k = model.finite().num_actions;
        let offset = sol.q[0];
        let q_hat: Vec<f64> = sol.q.iter().map(|v| v - offset).collect();
        let j = recover_gain(&q_hat, model.finite(), (0, 0)).unwrap();
        assert!((j - sol.gain).abs() < 1e-9, "{j} vs {}", sol.gain);
        // a second normalization pair must agree
        let offset2 = sol.q[k + 1];
        let q_hat2: Vec<f64> = sol.q.iter().map(|v| v - offset2).collect();
        let j2 = recover_gain(&q_hat2, model.finite(), (1, 1)).unwrap();
        assert!((j2 - sol.gain).abs() < 1e-9);
    }

    #[test]
    fn recover_gain_rejects_unnormalized_table() {
        let model = SyntheticFiniteModel::random(2, 2, 0.05, 0.1, 8).unwrap();
        let q = vec![1.0, 2.0, 3.0, 4.0];
        assert!(recover_gain(&q, model.finite(), (0, 0)).is_err());
    }

    #[test]
    fn warns_when_reference_has_no_span_certificate() {
        // the absorbing two-bin aggregation has disjoint kernel rows, so the
        // pairwise TV certificate is 1 and convergence is only advisory
        let model = crate::environments::HalvingModel;
        let scheme = crate::environments::halving_two_bin_scheme();
        let finite = crate::quantization::build_finite_model(
            &model,
            &scheme,
            crate::quantization::BuildMethod::Exact,
        )
        .unwrap();
        let q_star = vec![0.0, 0.0];
        let cfg = SyncConfig {
            num_sweeps: 10,
            snapshot_every: 10,
            ..Default::default()
        };
        let out = train_sync(
            &model,
            &scheme,
            &cfg,
            Some(SyncReference {
                finite: &finite,
                q_star: &q_star,
            }),
        )
        .unwrap();
        assert!(out.warning.is_some());
    }

    #[test]
    fn constant_cost_model_recovers_cost() {
        let model = tiny_model(0.35);
        let scheme = model.identity_scheme();
        let cfg = SyncConfig {
            num_sweeps: 200,
            snapshot_every: 50,
            ..Default::default()
        };
        let out = train_sync(&model, &scheme, &cfg, None).unwrap();
        let j = recover_gain(&out.q_hat, model.finite(), (0, 0)).unwrap();
        assert!((j - 0.35).abs() < 1e-12);
    }
}
