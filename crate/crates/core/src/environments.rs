//! Concrete models used by the tests and experiment reproduction: the
//! benchmark continuous-space control problem, the uncontrolled halving
//! counterexample, and small explicit finite models for oracle checks.

use crate::error::{Error, Result};
use crate::mdp_core::{ActionDomain, ContinuousModel, FiniteModel, Interval, Minorization};
use crate::quantization::QuantizationScheme;
use crate::rng::Rng;

/// Benchmark control problem on X = [0,1], U = [-1,1] with cost
/// c(x,u) = 0.7(1-x) + 0.2(u+1). Transitions move uniformly toward x+u with
/// probability 0.9 and restart uniformly on [0,1] with probability 0.1.
#[derive(Clone, Copy, Debug, Default)]
pub struct CaseStudyModel;

impl CaseStudyModel {
    /// Reachable interval of the directed branch from state `x` under `u`.
    fn reachable(x: f64, u: f64) -> (f64, f64) {
        if u > 0.0 {
            (x, (x + u).min(1.0))
        } else {
            ((x + u).max(0.0), x)
        }
    }

    /// Exact mass T(bin | x, u).
    ///
    /// When the directed branch degenerates to a point (u = 0, or x pinned
    /// at a boundary), its 0.9 mass is a point mass at x: the weak limit of
    /// the uniform branch as its width vanishes.
    pub fn kernel_mass(x: f64, u: f64, bin: &Interval) -> f64 {
        let (lo, hi) = Self::reachable(x, u);
        let directed = if hi > lo {
            bin.overlap_len(lo, hi) / (hi - lo)
        } else if bin.contains(x) {
            1.0
        } else {
            0.0
        };
        0.9 * directed + 0.1 * bin.overlap_len(0.0, 1.0)
    }

    /// Lipschitz constants (K_c, K_f) of the cost and of the kernel under
    /// the first-order Wasserstein distance.
    pub fn lipschitz_constants() -> (f64, f64) {
        (0.7, 0.9)
    }
}

impl ContinuousModel for CaseStudyModel {
    fn state_bounds(&self) -> Interval {
        Interval::closed(0.0, 1.0)
    }

    fn action_domain(&self) -> ActionDomain {
        ActionDomain::Interval { lo: -1.0, hi: 1.0 }
    }

    fn cost(&self, x: f64, u: f64) -> f64 {
        0.7 * (1.0 - x) + 0.2 * (u + 1.0)
    }

    fn cost_bound(&self) -> f64 {
        1.1
    }

    fn sample_next(&self, x: f64, u: f64, rng: &mut Rng) -> f64 {
        let branch = rng.next_f64();
        if branch < 0.9 {
            let (lo, hi) = Self::reachable(x, u);
            if hi > lo {
                rng.uniform(lo, hi)
            } else {
                // keep the draw count independent of the branch geometry
                let _ = rng.next_f64();
                x
            }
        } else {
            rng.next_f64()
        }
    }

    fn bin_mass(&self, x: f64, u: f64, bin: &Interval) -> Option<f64> {
        Some(Self::kernel_mass(x, u, bin))
    }

    fn minorization(&self) -> Option<Minorization> {
        Some(Minorization::UniformDensity {
            total_mass: 0.1,
            support: Interval::closed(0.0, 1.0),
        })
    }
}

/// Uncontrolled dynamics X_{t+1} = X_t / 2 on [-1,1] with cost c(x) = x.
///
/// The true average cost is 0 from every start, but coarse quantization
/// produces absorbing bins with start-dependent averages. The model carries
/// no minorization certificate on purpose: assumption checkers must reject
/// it.
#[derive(Clone, Copy, Debug, Default)]
pub struct HalvingModel;

impl ContinuousModel for HalvingModel {
    fn state_bounds(&self) -> Interval {
        Interval::closed(-1.0, 1.0)
    }

    fn action_domain(&self) -> ActionDomain {
        ActionDomain::Finite(vec![0.0])
    }

    fn cost(&self, x: f64, _u: f64) -> f64 {
        x
    }

    fn cost_bound(&self) -> f64 {
        1.0
    }

    fn sample_next(&self, x: f64, _u: f64, _rng: &mut Rng) -> f64 {
        x / 2.0
    }

    fn bin_mass(&self, x: f64, _u: f64, bin: &Interval) -> Option<f64> {
        Some(if bin.contains(x / 2.0) { 1.0 } else { 0.0 })
    }
}

/// The counterexample quantization: [-1, 0) and [0, 1] with the endpoints
/// -1 and 1 as representatives and the point mass at each representative as
/// the weight measure.
pub fn halving_two_bin_scheme() -> QuantizationScheme {
    QuantizationScheme::new(
        vec![Interval::half_open(-1.0, 0.0), Interval::closed(0.0, 1.0)],
        vec![-1.0, 1.0],
        crate::quantization::WeightMeasure::Empirical {
            samples: vec![vec![-1.0], vec![1.0]],
        },
        vec![0.0],
    )
    .expect("static scheme is valid")
}

/// An explicit finite model embedded on the integer grid so it can be driven
/// through the same pipeline as the continuous models. State i sits at
/// x = i with the singleton bin [i, i]; action j is the real number j.
#[derive(Clone, Debug)]
pub struct SyntheticFiniteModel {
    finite: FiniteModel,
}

impl SyntheticFiniteModel {
    pub fn new(finite: FiniteModel) -> Result<Self> {
        finite.validate()?;
        Ok(SyntheticFiniteModel { finite })
    }

    /// Random model for oracle tests: costs uniform in [0,1], kernel rows a
    /// random simplex on top of a per-state floor in
    /// `[floor_min, floor_max]`.
    pub fn random(
        num_states: usize,
        num_actions: usize,
        floor_min: f64,
        floor_max: f64,
        seed: u64,
    ) -> Result<Self> {
        let mut rng = Rng::seed_from(seed);
        let m = num_states;
        let k = num_actions;
        let floor: Vec<f64> = (0..m).map(|_| rng.uniform(floor_min, floor_max)).collect();
        let floor_total: f64 = floor.iter().sum();
        if floor_total >= 1.0 {
            return Err(Error::Config(
                "floor range too large: total mass must stay below 1".into(),
            ));
        }
        let cost: Vec<f64> = (0..m * k).map(|_| rng.next_f64()).collect();
        let mut kernel = vec![0.0; m * k * m];
        for row in kernel.chunks_mut(m) {
            let raw: Vec<f64> = (0..m).map(|_| rng.next_f64() + 1e-3).collect();
            let sum: f64 = raw.iter().sum();
            for (slot, (r, f)) in row.iter_mut().zip(raw.iter().zip(&floor)) {
                *slot = f + (1.0 - floor_total) * r / sum;
            }
        }
        SyntheticFiniteModel::new(FiniteModel::new(m, k, cost, kernel, floor)?)
    }

    pub fn finite(&self) -> &FiniteModel {
        &self.finite
    }

    /// The identity quantizer for this model: singleton-support bins around
    /// each grid state and the full action list as the net.
    pub fn identity_scheme(&self) -> QuantizationScheme {
        let actions = (0..self.finite.num_actions).map(|j| j as f64).collect();
        QuantizationScheme::identity_for_finite(self.finite.num_states, actions)
            .expect("identity scheme is valid")
    }

    fn state_index(&self, x: f64) -> usize {
        let i = (x + 0.5).floor();
        (i.max(0.0) as usize).min(self.finite.num_states - 1)
    }

    fn action_index(&self, u: f64) -> usize {
        let j = (u + 0.5).floor();
        (j.max(0.0) as usize).min(self.finite.num_actions - 1)
    }
}

impl ContinuousModel for SyntheticFiniteModel {
    fn state_bounds(&self) -> Interval {
        Interval::closed(0.0, self.finite.num_states as f64 - 1.0)
    }

    fn action_domain(&self) -> ActionDomain {
        ActionDomain::Finite((0..self.finite.num_actions).map(|j| j as f64).collect())
    }

    fn cost(&self, x: f64, u: f64) -> f64 {
        self.finite.cost_at(self.state_index(x), self.action_index(u))
    }

    fn cost_bound(&self) -> f64 {
        self.finite.cost.iter().fold(0.0f64, |a, c| a.max(c.abs()))
    }

    fn sample_next(&self, x: f64, u: f64, rng: &mut Rng) -> f64 {
        let row = self
            .finite
            .kernel_row(self.state_index(x), self.action_index(u));
        rng.categorical(row) as f64
    }

    fn bin_mass(&self, x: f64, u: f64, bin: &Interval) -> Option<f64> {
        let row = self
            .finite
            .kernel_row(self.state_index(x), self.action_index(u));
        Some(
            row.iter()
                .enumerate()
                .filter(|(j, _)| bin.contains(*j as f64))
                .map(|(_, p)| p)
                .sum(),
        )
    }

    fn minorization(&self) -> Option<Minorization> {
        if self.finite.floor_total() > 0.0 {
            Some(Minorization::Atoms {
                points: (0..self.finite.num_states).map(|i| i as f64).collect(),
                masses: self.finite.floor.clone(),
            })
        } else {
            None
        }
    }
}
