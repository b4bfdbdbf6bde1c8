//! State-space quantization: bins, representatives, weight measures, action
//! nets, the induced finite model, and the quantization loss.

use crate::error::{Error, Result};
use crate::mdp_core::{ActionDomain, ContinuousModel, FiniteModel, Interval};
use crate::numerics::{adaptive_quadrature, adaptive_quadrature_vec};
use crate::rng::Rng;

/// Quadrature tolerance for the exact aggregation integrals.
pub const QUADRATURE_TOL: f64 = 1e-8;

/// Weight measure pi* assigning positive mass to every bin. Its per-bin
/// normalizations define the aggregation integrals.
#[derive(Clone, Debug)]
pub enum WeightMeasure {
    Uniform,
    /// Empirical measure given by sample lists, one list per bin. A single
    /// sample per bin is a point mass; logged trajectories give the
    /// occupation-measure estimate used by the asynchronous pipeline.
    Empirical { samples: Vec<Vec<f64>> },
}

/// Partition of the state space into interval bins with representative
/// states, a weight measure, and a finite action net.
#[derive(Clone, Debug)]
pub struct QuantizationScheme {
    pub bins: Vec<Interval>,
    pub representatives: Vec<f64>,
    pub weight: WeightMeasure,
    pub action_net: Vec<f64>,
}

impl QuantizationScheme {
    pub fn new(
        bins: Vec<Interval>,
        representatives: Vec<f64>,
        weight: WeightMeasure,
        action_net: Vec<f64>,
    ) -> Result<Self> {
        if bins.is_empty() {
            return Err(Error::Config("quantization needs at least one bin".into()));
        }
        if representatives.len() != bins.len() {
            return Err(Error::Config("one representative per bin required".into()));
        }
        for bin in &bins {
            if bin.hi < bin.lo || (bin.hi == bin.lo && !bin.closed_right) {
                return Err(Error::Config(format!(
                    "empty bin [{}, {})",
                    bin.lo, bin.hi
                )));
            }
        }
        // bins are ordered and disjoint; a shared endpoint belongs to the
        // right bin (left-closed convention), and degenerate singleton bins
        // carry a finite state space
        for w in bins.windows(2) {
            let disjoint = w[0].hi < w[1].lo || (w[0].hi == w[1].lo && !w[0].closed_right);
            if !disjoint {
                return Err(Error::Config(format!(
                    "bins overlap near {}",
                    w[1].lo
                )));
            }
        }
        if !bins.last().unwrap().closed_right {
            return Err(Error::Config("last bin must be right-closed".into()));
        }
        for (bin, rep) in bins.iter().zip(&representatives) {
            if !bin.contains(*rep) {
                return Err(Error::Config(format!(
                    "representative {rep} outside its bin [{}, {})",
                    bin.lo, bin.hi
                )));
            }
        }
        if let WeightMeasure::Empirical { samples } = &weight {
            if samples.len() != bins.len() {
                return Err(Error::Config("one sample list per bin required".into()));
            }
            for (i, (bin, list)) in bins.iter().zip(samples).enumerate() {
                if list.is_empty() {
                    return Err(Error::Config(format!(
                        "empirical weight measure has an empty bin {i}"
                    )));
                }
                if list.iter().any(|x| !bin.contains(*x)) {
                    return Err(Error::Config(format!(
                        "empirical sample outside bin {i}"
                    )));
                }
            }
        }
        if action_net.is_empty() {
            return Err(Error::Config("action net must be nonempty".into()));
        }
        let mut sorted = action_net.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        if sorted != action_net {
            return Err(Error::Config("action net must be sorted ascending".into()));
        }
        Ok(QuantizationScheme {
            bins,
            representatives,
            weight,
            action_net,
        })
    }

    /// Uniform partition of `bounds` into `m` bins with midpoint
    /// representatives.
    pub fn uniform(
        bounds: Interval,
        m: usize,
        action_net: Vec<f64>,
        weight: WeightMeasure,
    ) -> Result<Self> {
        if m == 0 {
            return Err(Error::Config("need at least one bin".into()));
        }
        let w = (bounds.hi - bounds.lo) / m as f64;
        let mut bins = Vec::with_capacity(m);
        for i in 0..m {
            let lo = bounds.lo + i as f64 * w;
            let hi = if i + 1 == m { bounds.hi } else { bounds.lo + (i + 1) as f64 * w };
            bins.push(if i + 1 == m {
                Interval::closed(lo, hi)
            } else {
                Interval::half_open(lo, hi)
            });
        }
        let reps = bins.iter().map(|b| b.midpoint()).collect();
        QuantizationScheme::new(bins, reps, weight, action_net)
    }

    /// Identity quantizer for a finite model embedded on the integer grid:
    /// singleton bins `[i, i]` with representative `i`, and the point mass
    /// at the representative as the weight measure, so the aggregation
    /// integrals reduce to evaluation at the grid points.
    pub fn identity_for_finite(m: usize, action_net: Vec<f64>) -> Result<Self> {
        let bins = (0..m)
            .map(|i| Interval::closed(i as f64, i as f64))
            .collect();
        let reps: Vec<f64> = (0..m).map(|i| i as f64).collect();
        let samples = reps.iter().map(|r| vec![*r]).collect();
        QuantizationScheme::new(bins, reps, WeightMeasure::Empirical { samples }, action_net)
    }

    pub fn num_bins(&self) -> usize {
        self.bins.len()
    }

    pub fn state_bounds(&self) -> Interval {
        Interval::closed(self.bins[0].lo, self.bins.last().unwrap().hi)
    }

    /// Map a state to its bin index and representative.
    pub fn quantize(&self, x: f64) -> Result<(usize, f64)> {
        let bounds = self.state_bounds();
        if !(x >= bounds.lo && x <= bounds.hi) {
            return Err(Error::Domain(format!(
                "state {x} outside [{}, {}]",
                bounds.lo, bounds.hi
            )));
        }
        // bins are contiguous and sorted; find the last bin starting at or
        // before x, then resolve the boundary convention
        let mut idx = self.bins.partition_point(|b| b.lo <= x);
        idx = idx.saturating_sub(1);
        if !self.bins[idx].contains(x) {
            return Err(Error::Domain(format!("state {x} not covered by any bin")));
        }
        Ok((idx, self.representatives[idx]))
    }

    /// Nearest-net projection of an action; ties break toward the smaller
    /// action.
    pub fn nearest_action(&self, u: f64) -> usize {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (i, a) in self.action_net.iter().enumerate() {
            let d = (u - a).abs();
            if d < best_d {
                best_d = d;
                best = i;
            }
        }
        best
    }

    /// Covering radius of the action net over a domain: the largest distance
    /// from a feasible action to the net.
    pub fn action_covering_radius(&self, domain: &ActionDomain) -> f64 {
        match domain {
            ActionDomain::Finite(actions) => actions
                .iter()
                .map(|u| (u - self.action_net[self.nearest_action(*u)]).abs())
                .fold(0.0f64, f64::max),
            ActionDomain::Interval { lo, hi } => {
                let net = &self.action_net;
                let mut r = (net[0] - lo).max(0.0);
                r = r.max((hi - net[net.len() - 1]).max(0.0));
                for w in net.windows(2) {
                    let gap_lo = w[0].max(*lo);
                    let gap_hi = w[1].min(*hi);
                    if gap_hi > gap_lo {
                        // worst point in the gap is its midpoint
                        let mid = 0.5 * (w[0] + w[1]);
                        let worst = mid.clamp(gap_lo, gap_hi);
                        r = r.max((worst - w[0]).min(w[1] - worst));
                    }
                }
                r
            }
        }
    }

    /// Mean in-bin distance of `x` to its bin under the normalized weight
    /// measure.
    fn mean_in_bin_distance(&self, bin_idx: usize, x: f64) -> f64 {
        let bin = &self.bins[bin_idx];
        match &self.weight {
            WeightMeasure::Uniform => {
                let w = bin.len();
                if w == 0.0 {
                    0.0
                } else {
                    ((x - bin.lo).powi(2) + (bin.hi - x).powi(2)) / (2.0 * w)
                }
            }
            WeightMeasure::Empirical { samples } => {
                let list = &samples[bin_idx];
                list.iter().map(|s| (x - s).abs()).sum::<f64>() / list.len() as f64
            }
        }
    }

    /// Uniform bound L_X on the quantization loss: the supremum over states
    /// of the mean in-bin distance. The mean distance is convex in x, so the
    /// supremum over each bin is attained at an endpoint; sample points are
    /// evaluated as well for the empirical measure.
    pub fn loss_bound(&self) -> f64 {
        let mut sup: f64 = 0.0;
        for (i, bin) in self.bins.iter().enumerate() {
            sup = sup.max(self.mean_in_bin_distance(i, bin.lo));
            sup = sup.max(self.mean_in_bin_distance(i, bin.hi));
            if let WeightMeasure::Empirical { samples } = &self.weight {
                for s in &samples[i] {
                    sup = sup.max(self.mean_in_bin_distance(i, *s));
                }
            }
        }
        sup
    }

    /// Draw a state from the normalized weight measure on bin `i`.
    pub fn sample_in_bin(&self, i: usize, rng: &mut Rng) -> f64 {
        match &self.weight {
            WeightMeasure::Uniform => rng.uniform(self.bins[i].lo, self.bins[i].hi),
            WeightMeasure::Empirical { samples } => {
                let list = &samples[i];
                list[rng.index(list.len())]
            }
        }
    }
}

/// Uniform 1/n-net on `[lo, hi]`: a grid whose spacing is at most `2/n`, so
/// every action is within `1/n` of a grid point.
pub fn uniform_action_net(lo: f64, hi: f64, n: usize) -> Result<Vec<f64>> {
    if n == 0 || hi < lo {
        return Err(Error::Config("net resolution must be positive on a valid interval".into()));
    }
    if hi == lo {
        return Ok(vec![lo]);
    }
    let max_spacing = 2.0 / n as f64;
    let k = ((hi - lo) / max_spacing).ceil() as usize + 1;
    let step = (hi - lo) / (k - 1) as f64;
    Ok((0..k)
        .map(|i| if i + 1 == k { hi } else { lo + i as f64 * step })
        .collect())
}

/// How the aggregation integrals are computed.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum BuildMethod {
    /// Adaptive quadrature (uniform weight) or exact averaging over the
    /// sample support (empirical weight); requires the model to expose its
    /// kernel bin masses.
    Exact,
    /// Sample states from the weight measure and next states from the
    /// model's transition sampler.
    MonteCarlo { samples_per_bin: usize, seed: u64 },
}

struct CellResult {
    cost: f64,
    row: Vec<f64>,
}

fn exact_cell(
    model: &dyn ContinuousModel,
    scheme: &QuantizationScheme,
    i: usize,
    u: f64,
) -> Result<CellResult> {
    let m = scheme.num_bins();
    let bin = scheme.bins[i];
    let eval_row = |x: f64, out: &mut [f64]| {
        for (j, b) in scheme.bins.iter().enumerate() {
            out[j] = model
                .bin_mass(x, u, b)
                .expect("exact build requires a kernel with bin masses");
        }
    };
    match &scheme.weight {
        WeightMeasure::Uniform => {
            if model.bin_mass(bin.lo, u, &bin).is_none() {
                return Err(Error::Config(
                    "exact build requested but the model has no kernel bin masses".into(),
                ));
            }
            let w = bin.len();
            if w == 0.0 {
                return Err(Error::Config(
                    "uniform weight measure is degenerate on a zero-width bin".into(),
                ));
            }
            let cost =
                adaptive_quadrature(|x| model.cost(x, u), bin.lo, bin.hi, QUADRATURE_TOL * w) / w;
            let mut f = |x: f64, out: &mut [f64]| eval_row(x, out);
            let mut row =
                adaptive_quadrature_vec(&mut f, m, bin.lo, bin.hi, QUADRATURE_TOL * w);
            for v in &mut row {
                *v /= w;
            }
            Ok(CellResult { cost, row })
        }
        WeightMeasure::Empirical { samples } => {
            let list = &samples[i];
            if model.bin_mass(list[0], u, &bin).is_none() {
                return Err(Error::Config(
                    "exact build requested but the model has no kernel bin masses".into(),
                ));
            }
            let inv = 1.0 / list.len() as f64;
            let mut cost = 0.0;
            let mut row = vec![0.0; m];
            let mut tmp = vec![0.0; m];
            for &x in list {
                cost += model.cost(x, u);
                eval_row(x, &mut tmp);
                for (r, t) in row.iter_mut().zip(&tmp) {
                    *r += t;
                }
            }
            for r in &mut row {
                *r *= inv;
            }
            Ok(CellResult { cost: cost * inv, row })
        }
    }
}

fn monte_carlo_cell(
    model: &dyn ContinuousModel,
    scheme: &QuantizationScheme,
    i: usize,
    u: f64,
    samples_per_bin: usize,
    seed: u64,
    u_idx: usize,
) -> Result<CellResult> {
    let m = scheme.num_bins();
    let mut rng = Rng::derive(seed, &[i as u64, u_idx as u64]);
    let mut cost = 0.0;
    let mut counts = vec![0u64; m];
    for _ in 0..samples_per_bin {
        let x = scheme.sample_in_bin(i, &mut rng);
        cost += model.cost(x, u);
        let next = model.sample_next(x, u, &mut rng);
        let (j, _) = scheme.quantize(next)?;
        counts[j] += 1;
    }
    let inv = 1.0 / samples_per_bin as f64;
    Ok(CellResult {
        cost: cost * inv,
        row: counts.iter().map(|c| *c as f64 * inv).collect(),
    })
}

/// Renormalize a row to total mass one while respecting the per-state floor:
/// the excess above the floor is scaled to the available mass. A no-op for
/// rows that already satisfy both constraints.
fn project_row(row: &mut [f64], floor: &[f64]) {
    let floor_total: f64 = floor.iter().sum();
    let target = 1.0 - floor_total;
    let mut excess: Vec<f64> = row
        .iter()
        .zip(floor)
        .map(|(p, f)| (p - f).max(0.0))
        .collect();
    let s: f64 = excess.iter().sum();
    if s > 0.0 {
        let scale = target / s;
        for e in &mut excess {
            *e *= scale;
        }
    } else {
        excess.fill(target / row.len() as f64);
    }
    for ((p, f), e) in row.iter_mut().zip(floor).zip(&excess) {
        *p = f + e;
    }
}

/// Build the aggregated finite model (C*, P*) of a continuous model under a
/// quantization scheme.
pub fn build_finite_model(
    model: &dyn ContinuousModel,
    scheme: &QuantizationScheme,
    method: BuildMethod,
) -> Result<FiniteModel> {
    build_finite_model_with_threads(model, scheme, method, 1)
}

/// As [`build_finite_model`], parallelized over `(bin, action)` cells.
/// Per-cell randomness is derived from the cell index, so the result is
/// identical for any thread count.
pub fn build_finite_model_with_threads(
    model: &dyn ContinuousModel,
    scheme: &QuantizationScheme,
    method: BuildMethod,
    threads: usize,
) -> Result<FiniteModel> {
    let bounds = model.state_bounds();
    let sb = scheme.state_bounds();
    if (sb.lo - bounds.lo).abs() > 1e-12 || (sb.hi - bounds.hi).abs() > 1e-12 {
        return Err(Error::Config(format!(
            "scheme covers [{}, {}] but the model state space is [{}, {}]",
            sb.lo, sb.hi, bounds.lo, bounds.hi
        )));
    }
    if let BuildMethod::MonteCarlo { samples_per_bin, .. } = method {
        if samples_per_bin == 0 {
            return Err(Error::Config("monte_carlo needs samples_per_bin >= 1".into()));
        }
    }
    let m = scheme.num_bins();
    let k = scheme.action_net.len();
    let floor: Vec<f64> = match model.minorization() {
        Some(mu) => scheme.bins.iter().map(|b| mu.bin_mass(b)).collect(),
        None => vec![0.0; m],
    };

    let cells: Vec<(usize, usize)> = (0..m)
        .flat_map(|i| (0..k).map(move |u| (i, u)))
        .collect();
    let compute = |&(i, u_idx): &(usize, usize)| -> Result<CellResult> {
        let u = scheme.action_net[u_idx];
        match method {
            BuildMethod::Exact => exact_cell(model, scheme, i, u),
            BuildMethod::MonteCarlo { samples_per_bin, seed } => {
                monte_carlo_cell(model, scheme, i, u, samples_per_bin, seed, u_idx)
            }
        }
    };

    let results: Vec<Result<CellResult>> = if threads <= 1 {
        cells.iter().map(compute).collect()
    } else {
        let chunk = cells.len().div_ceil(threads);
        std::thread::scope(|scope| {
            let handles: Vec<_> = cells
                .chunks(chunk)
                .map(|part| scope.spawn(move || part.iter().map(compute).collect::<Vec<_>>()))
                .collect();
            let mut all = Vec::with_capacity(cells.len());
            for h in handles {
                all.extend(h.join().expect("build worker panicked"));
            }
            all
        })
    };

    let mut cost = vec![0.0; m * k];
    let mut kernel = vec![0.0; m * k * m];
    for ((i, u_idx), res) in cells.iter().zip(results) {
        let mut cell = res?;
        project_row(&mut cell.row, &floor);
        cost[i * k + u_idx] = cell.cost;
        kernel[(i * k + u_idx) * m..(i * k + u_idx + 1) * m].copy_from_slice(&cell.row);
    }
    FiniteModel::new(m, k, cost, kernel, floor)
}
