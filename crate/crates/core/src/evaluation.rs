//! Monte Carlo evaluation of lifted policies on the true continuous model,
//! and the quantization-rate sweep behind the regret-versus-resolution
//! experiment.

use crate::analysis::{bound_policy_gap, LipschitzCertificate};
use crate::error::{Error, Result};
use crate::finite_solver::{solve, SolveRoute, SolverConfig};
use crate::mdp_core::{lift_policy, ContinuousModel, StationaryPolicy};
use crate::numerics::mean_stderr;
use crate::quantization::{build_finite_model_with_threads, BuildMethod, QuantizationScheme, WeightMeasure};
use crate::rng::Rng;

#[derive(Clone, Debug)]
pub struct EvalConfig {
    /// Rollout length, including the burn-in prefix.
    pub horizon: u64,
    /// Steps discarded before costs are accumulated.
    pub burn_in: u64,
    pub num_rollouts: usize,
    /// Rollout r starts from initial_states[r % len].
    pub initial_states: Vec<f64>,
    pub seed: u64,
    pub threads: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            horizon: 1_000_000,
            burn_in: 10_000,
            num_rollouts: 8,
            initial_states: vec![0.5],
            seed: 0,
            threads: 1,
        }
    }
}

impl EvalConfig {
    fn validate(&self, model: &dyn ContinuousModel) -> Result<()> {
        if self.horizon <= self.burn_in {
            return Err(Error::Config(format!(
                "horizon {} must exceed burn-in {}",
                self.horizon, self.burn_in
            )));
        }
        if self.num_rollouts == 0 {
            return Err(Error::Config("need at least one rollout".into()));
        }
        if self.initial_states.is_empty() {
            return Err(Error::Config("need at least one initial state".into()));
        }
        let bounds = model.state_bounds();
        for x0 in &self.initial_states {
            if !bounds.contains(*x0) {
                return Err(Error::Domain(format!(
                    "initial state {x0} outside [{}, {}]",
                    bounds.lo, bounds.hi
                )));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug)]
pub struct RolloutValue {
    pub initial_state: f64,
    pub value: f64,
}

#[derive(Clone, Debug)]
pub struct EvalReport {
    pub mean: f64,
    pub stderr: f64,
    pub per_rollout: Vec<RolloutValue>,
}

fn single_rollout(
    model: &dyn ContinuousModel,
    policy: &StationaryPolicy,
    cfg: &EvalConfig,
    rollout: usize,
) -> Result<RolloutValue> {
    let x0 = cfg.initial_states[rollout % cfg.initial_states.len()];
    let mut rng = Rng::derive(cfg.seed, &[rollout as u64]);
    let mut x = x0;
    let mut total = 0.0;
    for t in 0..cfg.horizon {
        let u = lift_policy(policy, x)?;
        if t >= cfg.burn_in {
            total += model.cost(x, u);
        }
        x = model.sample_next(x, u, &mut rng);
    }
    Ok(RolloutValue {
        initial_state: x0,
        value: total / (cfg.horizon - cfg.burn_in) as f64,
    })
}

/// Cesàro average cost of a lifted stationary policy, estimated over
/// independent rollouts. Rollouts use substreams derived from the rollout
/// index, so the report does not depend on the thread count.
pub fn evaluate_policy(
    model: &dyn ContinuousModel,
    policy: &StationaryPolicy,
    cfg: &EvalConfig,
) -> Result<EvalReport> {
    cfg.validate(model)?;
    let rollouts: Vec<usize> = (0..cfg.num_rollouts).collect();
    let per_rollout: Vec<Result<RolloutValue>> = if cfg.threads <= 1 {
        rollouts
            .iter()
            .map(|r| single_rollout(model, policy, cfg, *r))
            .collect()
    } else {
        let chunk = rollouts.len().div_ceil(cfg.threads);
        std::thread::scope(|scope| {
            let handles: Vec<_> = rollouts
                .chunks(chunk)
                .map(|part| {
                    scope.spawn(move || {
                        part.iter()
                            .map(|r| single_rollout(model, policy, cfg, *r))
                            .collect::<Vec<_>>()
                    })
                })
                .collect();
            let mut all = Vec::with_capacity(rollouts.len());
            for h in handles {
                all.extend(h.join().expect("rollout worker panicked"));
            }
            all
        })
    };
    let per_rollout: Vec<RolloutValue> = per_rollout.into_iter().collect::<Result<_>>()?;
    let values: Vec<f64> = per_rollout.iter().map(|r| r.value).collect();
    let (mean, stderr) = mean_stderr(&values);
    Ok(EvalReport {
        mean,
        stderr,
        per_rollout,
    })
}

/// One cell of the quantization sweep.
#[derive(Clone, Debug)]
pub struct SweepCell {
    pub num_bins: usize,
    pub net_id: usize,
    pub net: Vec<f64>,
    pub l_x: f64,
    pub mean_cost: f64,
    pub stderr: f64,
    pub gain_finite_model: f64,
    pub bound_theorem7: Option<f64>,
}

/// For each (bin count, action net) pair: build the exact finite model under
/// the uniform weight measure, solve the optimality equation, lift the
/// greedy policy, and evaluate it on the true model.
pub fn sweep_quantization(
    model: &dyn ContinuousModel,
    bin_counts: &[usize],
    nets: &[Vec<f64>],
    eval_cfg: &EvalConfig,
    cert: Option<&LipschitzCertificate>,
) -> Result<Vec<SweepCell>> {
    if bin_counts.is_empty() || nets.is_empty() {
        return Err(Error::Config("sweep needs at least one bin count and one net".into()));
    }
    let mu_mass = model.minorization().map(|mu| mu.total_mass());
    let mut cells = Vec::new();
    for &m in bin_counts {
        for (net_id, net) in nets.iter().enumerate() {
            let scheme = QuantizationScheme::uniform(
                model.state_bounds(),
                m,
                net.clone(),
                WeightMeasure::Uniform,
            )?;
            let finite = build_finite_model_with_threads(
                model,
                &scheme,
                BuildMethod::Exact,
                eval_cfg.threads.max(1),
            )?;
            let route = if finite.floor_total() > 0.0 {
                SolveRoute::ShiftedKernel
            } else {
                SolveRoute::SpanRvi
            };
            let sol = solve(&finite, &SolverConfig::with_route(route))?;
            let l_x = scheme.loss_bound();
            let policy = StationaryPolicy::new(sol.policy.clone(), scheme)?;
            // decorrelate cells while keeping each cell reproducible
            let cell_cfg = EvalConfig {
                seed: cfg_cell_seed(eval_cfg.seed, m, net_id),
                ..eval_cfg.clone()
            };
            let report = evaluate_policy(model, &policy, &cell_cfg)?;
            let bound_theorem7 = match (cert, mu_mass) {
                (Some(c), Some(mu)) => Some(bound_policy_gap(c, l_x, mu)?),
                _ => None,
            };
            cells.push(SweepCell {
                num_bins: m,
                net_id,
                net: net.clone(),
                l_x,
                mean_cost: report.mean,
                stderr: report.stderr,
                gain_finite_model: sol.gain,
                bound_theorem7,
            });
        }
    }
    Ok(cells)
}

fn cfg_cell_seed(base: u64, m: usize, net_id: usize) -> u64 {
    let mut rng = Rng::derive(base, &[m as u64, net_id as u64]);
    rng.next_u64()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environments::{HalvingModel, SyntheticFiniteModel};
    use crate::mdp_core::FiniteModel;

    #[test]
    fn zero_cost_model_evaluates_to_zero() {
        let model = SyntheticFiniteModel::new(
            FiniteModel::new(2, 1, vec![0.0, 0.0], vec![0.5, 0.5, 0.5, 0.5], vec![0.2, 0.2])
                .unwrap(),
        )
        .unwrap();
        let scheme = model.identity_scheme();
        let policy = StationaryPolicy::new(vec![0, 0], scheme).unwrap();
        let cfg = EvalConfig {
            horizon: 1000,
            burn_in: 10,
            num_rollouts: 2,
            initial_states: vec![0.0],
            ..Default::default()
        };
        let report = evaluate_policy(&model, &policy, &cfg).unwrap();
        assert_eq!(report.mean, 0.0);
        assert_eq!(report.stderr, 0.0);
    }

    #[test]
    fn halving_from_one_decays_to_zero_average() {
        let model = HalvingModel;
        let scheme = crate::environments::halving_two_bin_scheme();
        let policy = StationaryPolicy::new(vec![0, 0], scheme).unwrap();
        let cfg = EvalConfig {
            horizon: 1000,
            burn_in: 10,
            num_rollouts: 1,
            initial_states: vec![1.0],
            ..Default::default()
        };
        let report = evaluate_policy(&model, &policy, &cfg).unwrap();
        assert!(report.mean.abs() <= 1e-3, "mean {}", report.mean);
    }

    #[test]
    fn thread_count_does_not_change_results() {
        let model = SyntheticFiniteModel::random(3, 2, 0.05, 0.1, 21).unwrap();
        let scheme = model.identity_scheme();
        let policy = StationaryPolicy::new(vec![0, 1, 0], scheme).unwrap();
        let base = EvalConfig {
            horizon: 2000,
            burn_in: 100,
            num_rollouts: 4,
            initial_states: vec![0.0, 1.0],
            seed: 9,
            threads: 1,
        };
        let serial = evaluate_policy(&model, &policy, &base).unwrap();
        let parallel = evaluate_policy(
            &model,
            &policy,
            &EvalConfig {
                threads: 4,
                ..base
            },
        )
        .unwrap();
        assert_eq!(serial.mean, parallel.mean);
        assert_eq!(serial.stderr, parallel.stderr);
    }

    #[test]
    fn bad_configs_are_rejected() {
        let model = HalvingModel;
        let scheme = crate::environments::halving_two_bin_scheme();
        let policy = StationaryPolicy::new(vec![0, 0], scheme).unwrap();
        let cfg = EvalConfig {
            horizon: 10,
            burn_in: 10,
            ..Default::default()
        };
        assert!(evaluate_policy(&model, &policy, &cfg).is_err());
        let cfg2 = EvalConfig {
            horizon: 100,
            burn_in: 0,
            initial_states: vec![2.0],
            ..Default::default()
        };
        assert!(evaluate_policy(&model, &policy, &cfg2).is_err());
    }
}
