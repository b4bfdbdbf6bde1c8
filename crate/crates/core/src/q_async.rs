//! Asynchronous single-trajectory quantized Q-learning with the delta-shift
//! that pins the average cost, plus the occupation-measure estimator that
//! identifies the finite model the iterates converge to.

use crate::error::{Error, Result};
use crate::mdp_core::ContinuousModel;
use crate::quantization::{QuantizationScheme, WeightMeasure};
use crate::rng::Rng;

/// Bins whose values enter the delta-shift term. Restricting the support is
/// the escape hatch for models whose minorization measure only charges some
/// bins.
#[derive(Clone, Debug, PartialEq)]
pub enum ShiftSupport {
    AllBins,
    Bins(Vec<usize>),
}

impl ShiftSupport {
    fn indices(&self, m: usize) -> Vec<usize> {
        match self {
            ShiftSupport::AllBins => (0..m).collect(),
            ShiftSupport::Bins(list) => list.clone(),
        }
    }
}

/// Per-bin exploration policy over action-net indices.
#[derive(Clone, Debug)]
pub enum ExplorationPolicy {
    UniformActions,
    /// One weight vector per bin; every action needs positive mass so every
    /// pair is visited infinitely often.
    PerBin(Vec<Vec<f64>>),
}

#[derive(Clone, Debug)]
pub struct AsyncConfig {
    /// Trajectory length (number of updates).
    pub horizon: u64,
    pub delta: f64,
    pub shift_support: ShiftSupport,
    pub exploration: ExplorationPolicy,
    pub initial_state: f64,
    pub seed: u64,
    pub snapshot_every: u64,
    /// Keep the full trajectory in the outcome for occupation-measure
    /// estimation.
    pub log_trajectory: bool,
    pub q0: Option<Vec<f64>>,
}

impl Default for AsyncConfig {
    fn default() -> Self {
        AsyncConfig {
            horizon: 100_000,
            delta: 0.01,
            shift_support: ShiftSupport::AllBins,
            exploration: ExplorationPolicy::UniformActions,
            initial_state: 0.0,
            seed: 0,
            snapshot_every: 1000,
            log_trajectory: true,
            q0: None,
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct TrajectoryStep {
    pub t: u64,
    pub x: f64,
    pub bin: usize,
    pub action_index: usize,
    pub cost: f64,
    pub x_next: f64,
}

#[derive(Clone, Debug)]
pub struct AsyncCurveRow {
    pub t: u64,
    /// delta * sum over the shift support of min_u Q_t(y, u).
    pub gain_estimate: f64,
    pub sup_to_ref: Option<f64>,
    /// Minimum visit count over all (bin, action) pairs.
    pub visits_min: u64,
}

#[derive(Clone, Debug)]
pub struct AsyncOutcome {
    pub q: Vec<f64>,
    pub visits: Vec<u64>,
    pub curve: Vec<AsyncCurveRow>,
    pub trajectory: Vec<TrajectoryStep>,
}

fn validate_config(
    model: &dyn ContinuousModel,
    scheme: &QuantizationScheme,
    cfg: &AsyncConfig,
) -> Result<Vec<usize>> {
    if cfg.horizon == 0 {
        return Err(Error::Config("horizon must be at least 1".into()));
    }
    if cfg.snapshot_every == 0 {
        return Err(Error::Config("snapshot_every must be at least 1".into()));
    }
    if cfg.delta <= 0.0 {
        return Err(Error::Config("delta must be positive".into()));
    }
    let m = scheme.num_bins();
    let k = scheme.action_net.len();
    let support = cfg.shift_support.indices(m);
    if support.is_empty() {
        return Err(Error::Config("shift support must be nonempty".into()));
    }
    if support.iter().any(|i| *i >= m) {
        return Err(Error::Config("shift support bin index out of range".into()));
    }
    if let Some(mu) = model.minorization() {
        let min_mass = support
            .iter()
            .map(|i| mu.bin_mass(&scheme.bins[*i]))
            .fold(f64::INFINITY, f64::min);
        if cfg.delta >= min_mass {
            return Err(Error::Assumption(format!(
                "delta {} must be smaller than the minimum certified bin mass {min_mass} \
                 over the shift support",
                cfg.delta
            )));
        }
    }
    match &cfg.exploration {
        ExplorationPolicy::UniformActions => {}
        ExplorationPolicy::PerBin(weights) => {
            if weights.len() != m {
                return Err(Error::Config("exploration policy needs one row per bin".into()));
            }
            for row in weights {
                if row.len() != k {
                    return Err(Error::Config(
                        "exploration policy row length must match the action net".into(),
                    ));
                }
                if row.iter().any(|w| *w <= 0.0) {
                    return Err(Error::Config(
                        "exploration policy must give every action positive mass".into(),
                    ));
                }
            }
        }
    }
    let bounds = model.state_bounds();
    if !bounds.contains(cfg.initial_state) {
        return Err(Error::Domain(format!(
            "initial state {} outside [{}, {}]",
            cfg.initial_state, bounds.lo, bounds.hi
        )));
    }
    if let Some(q0) = &cfg.q0 {
        if q0.len() != m * k {
            return Err(Error::Config("q0 shape mismatch".into()));
        }
    }
    Ok(support)
}

/// delta-shifted gain estimate read off a Q table.
pub fn gain_estimate(
    q: &[f64],
    num_states: usize,
    num_actions: usize,
    delta: f64,
    support: &ShiftSupport,
) -> f64 {
    debug_assert_eq!(q.len(), num_states * num_actions);
    support
        .indices(num_states)
        .iter()
        .map(|y| {
            (0..num_actions)
                .map(|u| q[y * num_actions + u])
                .fold(f64::INFINITY, f64::min)
        })
        .sum::<f64>()
        * delta
}

/// Run the single-trajectory learning algorithm.
///
/// Each step updates only the visited (bin, action) pair with step size
/// 1/(1 + N) where N counts visits including the current one, and subtracts
/// delta times the summed state values over the shift support from the
/// target.
pub fn train_async(
    model: &dyn ContinuousModel,
    scheme: &QuantizationScheme,
    cfg: &AsyncConfig,
    reference: Option<&[f64]>,
) -> Result<AsyncOutcome> {
    let support = validate_config(model, scheme, cfg)?;
    let m = scheme.num_bins();
    let k = scheme.action_net.len();
    if let Some(r) = reference {
        if r.len() != m * k {
            return Err(Error::Config("reference table shape mismatch".into()));
        }
    }
    let mut q = cfg.q0.clone().unwrap_or_else(|| vec![0.0; m * k]);
    let mut visits = vec![0u64; m * k];
    let mut rng = Rng::derive(cfg.seed, &[0x51_u64]);
    let mut curve = Vec::new();
    let mut trajectory = Vec::new();
    if cfg.log_trajectory {
        trajectory.reserve(cfg.horizon as usize);
    }

    let sample_action = |bin: usize, rng: &mut Rng| -> usize {
        match &cfg.exploration {
            ExplorationPolicy::UniformActions => rng.index(k),
            ExplorationPolicy::PerBin(weights) => rng.categorical(&weights[bin]),
        }
    };

    let mut x = cfg.initial_state;
    let (mut bin, _) = scheme.quantize(x)?;
    let mut action = sample_action(bin, &mut rng);

    for t in 0..cfg.horizon {
        let u = scheme.action_net[action];
        let cost = model.cost(x, u);
        let x_next = model.sample_next(x, u, &mut rng);
        let (bin_next, _) = scheme.quantize(x_next)?;

        let cell = bin * k + action;
        visits[cell] += 1;
        let alpha = 1.0 / (1.0 + visits[cell] as f64);
        let continuation = (0..k)
            .map(|v| q[bin_next * k + v])
            .fold(f64::INFINITY, f64::min);
        let shift: f64 = support
            .iter()
            .map(|y| {
                (0..k)
                    .map(|v| q[y * k + v])
                    .fold(f64::INFINITY, f64::min)
            })
            .sum::<f64>()
            * cfg.delta;
        q[cell] = (1.0 - alpha) * q[cell] + alpha * (cost + continuation - shift);

        if cfg.log_trajectory {
            trajectory.push(TrajectoryStep {
                t,
                x,
                bin,
                action_index: action,
                cost,
                x_next,
            });
        }
        if (t + 1) % cfg.snapshot_every == 0 || t + 1 == cfg.horizon {
            curve.push(AsyncCurveRow {
                t: t + 1,
                gain_estimate: gain_estimate(&q, m, k, cfg.delta, &cfg.shift_support),
                sup_to_ref: reference.map(|r| crate::numerics::sup_norm_diff(&q, r)),
                visits_min: *visits.iter().min().unwrap(),
            });
        }

        x = x_next;
        bin = bin_next;
        action = sample_action(bin, &mut rng);
    }

    Ok(AsyncOutcome {
        q,
        visits,
        curve,
        trajectory,
    })
}

/// Empirical occupation measure of a logged trajectory: per-bin visit
/// frequencies of the state process and the within-bin sample lists.
#[derive(Clone, Debug)]
pub struct OccupationWeights {
    pub frequencies: Vec<f64>,
    pub samples: Vec<Vec<f64>>,
    pub empty_bins: Vec<usize>,
}

impl OccupationWeights {
    /// Weight measure for the finite-model builder; refuses if any bin was
    /// never visited.
    pub fn to_weight_measure(&self) -> Result<WeightMeasure> {
        if !self.empty_bins.is_empty() {
            return Err(Error::Config(format!(
                "trajectory never visited bins {:?}; cannot estimate the occupation-weighted \
                 model (extend the run or exclude the bins)",
                self.empty_bins
            )));
        }
        Ok(WeightMeasure::Empirical {
            samples: self.samples.clone(),
        })
    }
}

pub fn occupation_weights(
    trajectory: &[TrajectoryStep],
    scheme: &QuantizationScheme,
) -> Result<OccupationWeights> {
    if trajectory.is_empty() {
        return Err(Error::Config("trajectory log is empty".into()));
    }
    let m = scheme.num_bins();
    let mut samples = vec![Vec::new(); m];
    for step in trajectory {
        if step.bin >= m {
            return Err(Error::Config("trajectory bin index out of range".into()));
        }
        samples[step.bin].push(step.x);
    }
    let total = trajectory.len() as f64;
    let frequencies = samples.iter().map(|s| s.len() as f64 / total).collect();
    let empty_bins = samples
        .iter()
        .enumerate()
        .filter(|(_, s)| s.is_empty())
        .map(|(i, _)| i)
        .collect();
    Ok(OccupationWeights {
        frequencies,
        samples,
        empty_bins,
    })
}
