//! Domain types shared by every other module: continuous-model abstraction,
//! the aggregated finite model, optimality-equation solutions, and
//! stationary policies.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quantization::QuantizationScheme;
use crate::rng::Rng;

/// A one-dimensional interval. Bins are left-closed/right-open except the
/// last bin of a partition, which is right-closed, so every point of a
/// compact interval belongs to exactly one bin.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
    pub closed_right: bool,
}

impl Interval {
    pub fn half_open(lo: f64, hi: f64) -> Self {
        Interval {
            lo,
            hi,
            closed_right: false,
        }
    }

    pub fn closed(lo: f64, hi: f64) -> Self {
        Interval {
            lo,
            hi,
            closed_right: true,
        }
    }

    #[inline]
    pub fn len(&self) -> f64 {
        (self.hi - self.lo).max(0.0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0.0 && !self.closed_right
    }

    #[inline]
    pub fn contains(&self, x: f64) -> bool {
        x >= self.lo && (x < self.hi || (self.closed_right && x <= self.hi))
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    /// Lebesgue measure of the overlap with `[lo, hi]`.
    #[inline]
    pub fn overlap_len(&self, lo: f64, hi: f64) -> f64 {
        (self.hi.min(hi) - self.lo.max(lo)).max(0.0)
    }
}

/// The action space: a compact interval to be discretized, or an explicit
/// finite set.
#[derive(Clone, Debug, PartialEq)]
pub enum ActionDomain {
    Interval { lo: f64, hi: f64 },
    Finite(Vec<f64>),
}

impl ActionDomain {
    pub fn contains(&self, u: f64) -> bool {
        match self {
            ActionDomain::Interval { lo, hi } => u >= *lo && u <= *hi,
            ActionDomain::Finite(list) => list.contains(&u),
        }
    }
}

/// A certified minorization measure mu with T(.|x,u) >= mu(.) for all (x,u).
///
/// Carried in a form that lets per-bin masses mu(B_i) be computed for any
/// partition: either a uniform density over an interval or a finite set of
/// atoms.
#[derive(Clone, Debug)]
pub enum Minorization {
    /// mu(B) = total_mass * |B ∩ support| / |support|
    UniformDensity { total_mass: f64, support: Interval },
    /// mu(B) = sum of masses at atoms inside B
    Atoms { points: Vec<f64>, masses: Vec<f64> },
}

impl Minorization {
    pub fn total_mass(&self) -> f64 {
        match self {
            Minorization::UniformDensity { total_mass, .. } => *total_mass,
            Minorization::Atoms { masses, .. } => masses.iter().sum(),
        }
    }

    pub fn bin_mass(&self, bin: &Interval) -> f64 {
        match self {
            Minorization::UniformDensity { total_mass, support } => {
                if support.len() == 0.0 {
                    0.0
                } else {
                    total_mass * bin.overlap_len(support.lo, support.hi) / support.len()
                }
            }
            Minorization::Atoms { points, masses } => points
                .iter()
                .zip(masses)
                .filter(|(p, _)| bin.contains(**p))
                .map(|(_, m)| m)
                .sum(),
        }
    }
}

/// A continuous state/action Markov control model on a compact interval.
///
/// `cost_bound` bounds |cost(x,u)| over the feasible set; the solver and
/// learning modules rely on it for their boundedness arguments. Costs are
/// nonnegative for all the models the approximation theorems apply to; the
/// halving counterexample deliberately uses a signed cost, so the bound is
/// on the magnitude.
pub trait ContinuousModel: Send + Sync {
    fn state_dim(&self) -> usize {
        1
    }

    /// Compact state space as a closed interval.
    fn state_bounds(&self) -> Interval;

    fn action_domain(&self) -> ActionDomain;

    fn cost(&self, x: f64, u: f64) -> f64;

    fn cost_bound(&self) -> f64;

    /// Draw the next state from T(.|x,u).
    fn sample_next(&self, x: f64, u: f64, rng: &mut Rng) -> f64;

    /// Exact mass T(B|x,u) when the model can integrate its own kernel.
    fn bin_mass(&self, _x: f64, _u: f64, _bin: &Interval) -> Option<f64> {
        None
    }

    /// Certified minorization measure, when one exists.
    fn minorization(&self) -> Option<Minorization> {
        None
    }
}

/// Aggregated finite model: stage cost matrix, transition kernel tensor, and
/// the certified per-state minorization floor.
///
/// Layout is row-major: `cost[y * K + u]`, `kernel[(y * K + u) * M + z]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FiniteModel {
    pub num_states: usize,
    pub num_actions: usize,
    pub cost: Vec<f64>,
    pub kernel: Vec<f64>,
    pub floor: Vec<f64>,
}

pub const KERNEL_ROW_TOL: f64 = 1e-9;

impl FiniteModel {
    pub fn new(
        num_states: usize,
        num_actions: usize,
        cost: Vec<f64>,
        kernel: Vec<f64>,
        floor: Vec<f64>,
    ) -> Result<Self> {
        let model = FiniteModel {
            num_states,
            num_actions,
            cost,
            kernel,
            floor,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        let (m, k) = (self.num_states, self.num_actions);
        if m == 0 || k == 0 {
            return Err(Error::Config("finite model needs at least one state and action".into()));
        }
        if self.cost.len() != m * k || self.kernel.len() != m * k * m || self.floor.len() != m {
            return Err(Error::Config(format!(
                "finite model shape mismatch: M={m} K={k}, cost={}, kernel={}, floor={}",
                self.cost.len(),
                self.kernel.len(),
                self.floor.len()
            )));
        }
        if self.floor.iter().any(|f| *f < 0.0) {
            return Err(Error::Config("minorization floor must be nonnegative".into()));
        }
        if self.floor_total() >= 1.0 {
            return Err(Error::Config("minorization floor must have total mass < 1".into()));
        }
        for y in 0..m {
            for u in 0..k {
                let row = self.kernel_row(y, u);
                let sum: f64 = row.iter().sum();
                if (sum - 1.0).abs() > KERNEL_ROW_TOL {
                    return Err(Error::Config(format!(
                        "kernel row ({y},{u}) sums to {sum}, expected 1"
                    )));
                }
                for (z, &p) in row.iter().enumerate() {
                    if p < 0.0 {
                        return Err(Error::Config(format!(
                            "kernel entry ({y},{u},{z}) is negative: {p}"
                        )));
                    }
                    if p < self.floor[z] - KERNEL_ROW_TOL {
                        return Err(Error::Config(format!(
                            "kernel entry ({y},{u},{z})={p} below floor {}",
                            self.floor[z]
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    #[inline]
    pub fn cost_at(&self, y: usize, u: usize) -> f64 {
        self.cost[y * self.num_actions + u]
    }

    #[inline]
    pub fn kernel_at(&self, y: usize, u: usize, z: usize) -> f64 {
        self.kernel[(y * self.num_actions + u) * self.num_states + z]
    }

    #[inline]
    pub fn kernel_row(&self, y: usize, u: usize) -> &[f64] {
        let start = (y * self.num_actions + u) * self.num_states;
        &self.kernel[start..start + self.num_states]
    }

    pub fn floor_total(&self) -> f64 {
        self.floor.iter().sum()
    }
}

/// Solution of the average cost optimality equation for a finite model:
/// gain, relative value function, Q table, greedy policy, and the residual
/// of the fixed point actually achieved.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AcoeSolution {
    pub gain: f64,
    pub h: Vec<f64>,
    /// Row-major M x K table.
    pub q: Vec<f64>,
    pub policy: Vec<usize>,
    pub residual: f64,
    pub route: String,
    pub iterations: u64,
}

impl AcoeSolution {
    pub fn num_actions(&self) -> usize {
        if self.h.is_empty() {
            0
        } else {
            self.q.len() / self.h.len()
        }
    }

    #[inline]
    pub fn q_at(&self, y: usize, u: usize) -> f64 {
        self.q[y * self.num_actions() + u]
    }
}

/// A deterministic stationary policy on the finite state space, together
/// with the quantizer that lifts it to the continuous space by making it
/// constant over the quantization bins.
#[derive(Clone, Debug)]
pub struct StationaryPolicy {
    pub actions: Vec<usize>,
    pub scheme: QuantizationScheme,
}

impl StationaryPolicy {
    pub fn new(actions: Vec<usize>, scheme: QuantizationScheme) -> Result<Self> {
        if actions.len() != scheme.num_bins() {
            return Err(Error::Config(format!(
                "policy covers {} bins, scheme has {}",
                actions.len(),
                scheme.num_bins()
            )));
        }
        let k = scheme.action_net.len();
        if actions.iter().any(|a| *a >= k) {
            return Err(Error::Config(format!("policy action index out of range (K={k})")));
        }
        Ok(StationaryPolicy { actions, scheme })
    }
}

/// Action assigned to the bin of `x` by a stationary policy.
pub fn lift_policy(policy: &StationaryPolicy, x: f64) -> Result<f64> {
    let (bin, _) = policy.scheme.quantize(x)?;
    Ok(policy.scheme.action_net[policy.actions[bin]])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quantization::WeightMeasure;

    #[test]
    fn interval_boundary_conventions() {
        let open = Interval::half_open(0.0, 0.25);
        assert!(open.contains(0.0));
        assert!(!open.contains(0.25));
        let closed = Interval::closed(0.75, 1.0);
        assert!(closed.contains(1.0));
    }

    #[test]
    fn minorization_uniform_density_bin_mass() {
        let mu = Minorization::UniformDensity {
            total_mass: 0.1,
            support: Interval::closed(0.0, 1.0),
        };
        let bin = Interval::half_open(0.25, 0.5);
        assert!((mu.bin_mass(&bin) - 0.025).abs() < 1e-15);
        assert!((mu.total_mass() - 0.1).abs() < 1e-15);
    }

    #[test]
    fn minorization_atoms_respect_bin_membership() {
        let mu = Minorization::Atoms {
            points: vec![0.25, 0.75],
            masses: vec![0.1, 0.2],
        };
        // 0.25 is the left endpoint of this bin, so it belongs to it
        assert!((mu.bin_mass(&Interval::half_open(0.25, 0.5)) - 0.1).abs() < 1e-15);
        assert!((mu.bin_mass(&Interval::half_open(0.0, 0.25)) - 0.0).abs() < 1e-15);
    }

    #[test]
    fn finite_model_validation_catches_bad_rows() {
        let bad = FiniteModel {
            num_states: 2,
            num_actions: 1,
            cost: vec![0.0, 1.0],
            kernel: vec![0.6, 0.3, 0.5, 0.5],
            floor: vec![0.0, 0.0],
        };
        assert!(bad.validate().is_err());

        let good = FiniteModel::new(
            2,
            1,
            vec![0.0, 1.0],
            vec![0.7, 0.3, 0.5, 0.5],
            vec![0.1, 0.2],
        );
        assert!(good.is_ok());
    }

    #[test]
    fn finite_model_floor_violation_rejected() {
        let res = FiniteModel::new(
            2,
            1,
            vec![0.0, 1.0],
            vec![0.7, 0.3, 0.5, 0.5],
            vec![0.6, 0.2],
        );
        assert!(res.is_err());
    }

    #[test]
    fn lift_policy_identity_quantizer() {
        // finite 2-state model seen through the identity quantizer; the
        // policy assigns action 1 to state 0 and action 0 to state 1
        let scheme = QuantizationScheme::identity_for_finite(2, vec![10.0, 20.0]).unwrap();
        let policy = StationaryPolicy::new(vec![1, 0], scheme).unwrap();
        assert_eq!(lift_policy(&policy, 0.0).unwrap(), 20.0);
        assert_eq!(lift_policy(&policy, 1.0).unwrap(), 10.0);
    }

    #[test]
    fn lift_policy_case_study_bins() {
        let scheme = QuantizationScheme::uniform(
            Interval::closed(0.0, 1.0),
            4,
            vec![-1.0, 0.0, 1.0],
            WeightMeasure::Uniform,
        )
        .unwrap();
        let policy = StationaryPolicy::new(vec![0, 1, 2, 0], scheme).unwrap();
        // x = 0.3 falls in the second bin
        assert_eq!(lift_policy(&policy, 0.3).unwrap(), 0.0);
        // bins are left-closed, so the boundary 0.25 belongs to bin 1
        assert_eq!(lift_policy(&policy, 0.25).unwrap(), 0.0);
        // out-of-bounds states are a domain error
        assert!(lift_policy(&policy, 1.5).is_err());
    }
}
