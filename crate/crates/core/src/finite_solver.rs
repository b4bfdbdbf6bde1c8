//! Exact solution of the average cost optimality equation for finite models
//! via two independent contraction routes, plus a brute-force oracle over
//! stationary policies and a vanishing-discount cross-check.

use crate::error::{Error, Result};
use crate::mdp_core::{AcoeSolution, FiniteModel};
use crate::numerics::{
    cesaro_limit, span, span_diff, stationary_distribution, sup_norm, sup_norm_diff,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SolveRoute {
    /// Relative value iteration, contracting in the span semi-norm under the
    /// pairwise total-variation certificate.
    SpanRvi,
    /// Value iteration on the kernel with the minorization floor subtracted,
    /// contracting in the sup norm with constant 1 - sum(floor).
    ShiftedKernel,
}

impl SolveRoute {
    pub fn name(&self) -> &'static str {
        match self {
            SolveRoute::SpanRvi => "span_rvi",
            SolveRoute::ShiftedKernel => "shifted_kernel",
        }
    }
}

#[derive(Clone, Debug)]
pub struct SolverConfig {
    pub route: SolveRoute,
    pub tolerance: f64,
    pub max_iters: u64,
    /// Reference state z for the span route.
    pub reference_state: usize,
    /// Replaces the model's own floor in the shifted route. Used for the
    /// delta-shift fixed point, where the subtracted measure is a constant
    /// delta per state rather than a certified kernel floor.
    pub floor_override: Option<Vec<f64>>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            route: SolveRoute::ShiftedKernel,
            tolerance: 1e-10,
            max_iters: 1_000_000,
            reference_state: 0,
            floor_override: None,
        }
    }
}

impl SolverConfig {
    pub fn with_route(route: SolveRoute) -> Self {
        SolverConfig {
            route,
            ..Default::default()
        }
    }
}

/// Pairwise total-variation contraction certificate: the maximum over row
/// pairs of half their L1 distance. The Bellman operator contracts the span
/// semi-norm by exactly this factor.
pub fn tv_contraction_certificate(model: &FiniteModel) -> f64 {
    let rows: Vec<&[f64]> = (0..model.num_states)
        .flat_map(|y| (0..model.num_actions).map(move |u| (y, u)))
        .map(|(y, u)| model.kernel_row(y, u))
        .collect();
    let mut beta = 0.0f64;
    for a in 0..rows.len() {
        for b in (a + 1)..rows.len() {
            let tv: f64 = rows[a]
                .iter()
                .zip(rows[b])
                .map(|(p, q)| (p - q).abs())
                .sum();
            beta = beta.max(0.5 * tv);
        }
    }
    beta
}

/// Q-shaped Bellman image: out[y,u] = C(y,u) + sum_z P(z|y,u) h(z).
pub fn bellman_q(model: &FiniteModel, h: &[f64]) -> Vec<f64> {
    let (m, k) = (model.num_states, model.num_actions);
    let mut out = vec![0.0; m * k];
    for y in 0..m {
        for u in 0..k {
            let row = model.kernel_row(y, u);
            let mut acc = model.cost_at(y, u);
            for (p, hv) in row.iter().zip(h) {
                acc += p * hv;
            }
            out[y * k + u] = acc;
        }
    }
    out
}

/// Bellman operator (T h)(y) = min_u [C(y,u) + sum_z P(z|y,u) h(z)].
pub fn bellman(model: &FiniteModel, h: &[f64]) -> Vec<f64> {
    let k = model.num_actions;
    bellman_q(model, h)
        .chunks(k)
        .map(|row| row.iter().cloned().fold(f64::INFINITY, f64::min))
        .collect()
}

/// Q-shaped image of the floor-shifted operator:
/// out[y,u] = C(y,u) + sum_z (P(z|y,u) - floor(z)) f(z).
pub fn shifted_bellman_q(model: &FiniteModel, floor: &[f64], f: &[f64]) -> Vec<f64> {
    let (m, k) = (model.num_states, model.num_actions);
    let shift: f64 = floor.iter().zip(f).map(|(fl, fv)| fl * fv).sum();
    let mut out = vec![0.0; m * k];
    for y in 0..m {
        for u in 0..k {
            let row = model.kernel_row(y, u);
            let mut acc = model.cost_at(y, u) - shift;
            for (p, fv) in row.iter().zip(f) {
                acc += p * fv;
            }
            out[y * k + u] = acc;
        }
    }
    out
}

/// Floor-shifted Bellman operator (T' f)(y).
pub fn shifted_bellman(model: &FiniteModel, floor: &[f64], f: &[f64]) -> Vec<f64> {
    let k = model.num_actions;
    shifted_bellman_q(model, floor, f)
        .chunks(k)
        .map(|row| row.iter().cloned().fold(f64::INFINITY, f64::min))
        .collect()
}

fn greedy_policy(q: &[f64], k: usize) -> Vec<usize> {
    q.chunks(k)
        .map(|row| {
            let mut best = 0;
            for (i, v) in row.iter().enumerate() {
                if *v < row[best] {
                    best = i;
                }
            }
            best
        })
        .collect()
}

/// Max-norm residual of the optimality equation
/// gain + Q(y,u) = C(y,u) + sum_z P(z|y,u) min_v Q(z,v).
pub fn acoe_residual(model: &FiniteModel, q: &[f64], gain: f64) -> f64 {
    let (m, k) = (model.num_states, model.num_actions);
    let values: Vec<f64> = q
        .chunks(k)
        .map(|row| row.iter().cloned().fold(f64::INFINITY, f64::min))
        .collect();
    let mut res = 0.0f64;
    for y in 0..m {
        for u in 0..k {
            let row = model.kernel_row(y, u);
            let mut rhs = model.cost_at(y, u);
            for (p, v) in row.iter().zip(&values) {
                rhs += p * v;
            }
            res = res.max((gain + q[y * k + u] - rhs).abs());
        }
    }
    res
}

/// Relative value iteration in the span semi-norm. Refuses models whose
/// pairwise TV certificate is not strictly below one.
pub fn solve_span_rvi(model: &FiniteModel, cfg: &SolverConfig) -> Result<AcoeSolution> {
    model.validate()?;
    let (m, k) = (model.num_states, model.num_actions);
    let z = cfg.reference_state;
    if z >= m {
        return Err(Error::Config(format!("reference state {z} out of range (M={m})")));
    }
    if cfg.tolerance <= 0.0 {
        return Err(Error::Config("tolerance must be positive".into()));
    }
    let beta = tv_contraction_certificate(model);
    if beta >= 1.0 {
        return Err(Error::Assumption(format!(
            "span contraction certificate failed: pairwise TV bound {beta:.6} >= 1; \
             the kernel has (nearly) disjoint rows, try the shifted route with a floor"
        )));
    }
    let mut h = vec![0.0; m];
    let mut iterations = 0u64;
    loop {
        iterations += 1;
        let th = bellman(model, &h);
        let offset = th[z];
        let h_next: Vec<f64> = th.iter().map(|v| v - offset).collect();
        let gap = span_diff(&h_next, &h);
        h = h_next;
        if gap <= cfg.tolerance {
            break;
        }
        if iterations >= cfg.max_iters {
            return Err(Error::Numerical(format!(
                "span RVI did not reach tolerance {} in {} iterations (span gap {gap:.3e})",
                cfg.tolerance, cfg.max_iters
            )));
        }
    }
    let tq = bellman_q(model, &h);
    let gain = (0..k).map(|u| tq[z * k + u]).fold(f64::INFINITY, f64::min);
    let q: Vec<f64> = tq.iter().map(|v| v - gain).collect();
    let policy = greedy_policy(&q, k);
    let residual = acoe_residual(model, &q, gain);
    Ok(AcoeSolution {
        gain,
        h,
        q,
        policy,
        residual,
        route: SolveRoute::SpanRvi.name().into(),
        iterations,
    })
}

/// Value iteration on the floor-shifted kernel. Requires a floor with
/// positive total mass dominated by every kernel row.
pub fn solve_shifted_kernel(model: &FiniteModel, cfg: &SolverConfig) -> Result<AcoeSolution> {
    model.validate()?;
    let (m, k) = (model.num_states, model.num_actions);
    if cfg.tolerance <= 0.0 {
        return Err(Error::Config("tolerance must be positive".into()));
    }
    let floor = cfg.floor_override.clone().unwrap_or_else(|| model.floor.clone());
    if floor.len() != m {
        return Err(Error::Config("floor override length mismatch".into()));
    }
    let total: f64 = floor.iter().sum();
    if total <= 0.0 {
        return Err(Error::Assumption(
            "shifted route needs a floor with positive total mass; use the span route".into(),
        ));
    }
    if total > 1.0 + 1e-12 {
        return Err(Error::Config("floor total mass exceeds 1".into()));
    }
    if floor.iter().any(|f| *f < 0.0) {
        return Err(Error::Config("floor entries must be nonnegative".into()));
    }
    for y in 0..m {
        for u in 0..k {
            for (p, fl) in model.kernel_row(y, u).iter().zip(&floor) {
                if *p < fl - 1e-9 {
                    return Err(Error::Assumption(format!(
                        "floor is not dominated by the kernel at state-action ({y},{u})"
                    )));
                }
            }
        }
    }
    let alpha = (1.0 - total).max(0.0);
    // stop when the remaining fixed-point distance alpha/(1-alpha) * gap is
    // below the tolerance
    let threshold = if alpha > 0.0 {
        cfg.tolerance * (1.0 - alpha) / alpha
    } else {
        f64::INFINITY
    };
    let mut f = vec![0.0; m];
    let mut iterations = 0u64;
    loop {
        iterations += 1;
        let f_next = shifted_bellman(model, &floor, &f);
        let gap = sup_norm_diff(&f_next, &f);
        f = f_next;
        if gap <= threshold {
            break;
        }
        if iterations >= cfg.max_iters {
            return Err(Error::Numerical(format!(
                "shifted-kernel iteration did not reach tolerance {} in {} iterations",
                cfg.tolerance, cfg.max_iters
            )));
        }
    }
    let gain: f64 = floor.iter().zip(&f).map(|(fl, fv)| fl * fv).sum();
    let q = shifted_bellman_q(model, &floor, &f);
    let policy = greedy_policy(&q, k);
    let min_f = f.iter().cloned().fold(f64::INFINITY, f64::min);
    let h: Vec<f64> = f.iter().map(|v| v - min_f).collect();
    let residual = acoe_residual(model, &q, gain);
    Ok(AcoeSolution {
        gain,
        h,
        q,
        policy,
        residual,
        route: SolveRoute::ShiftedKernel.name().into(),
        iterations,
    })
}

pub fn solve(model: &FiniteModel, cfg: &SolverConfig) -> Result<AcoeSolution> {
    match cfg.route {
        SolveRoute::SpanRvi => solve_span_rvi(model, cfg),
        SolveRoute::ShiftedKernel => solve_shifted_kernel(model, cfg),
    }
}

/// Result of exhaustive policy enumeration. `gain` is per starting state;
/// `constant_gain` is set when the average cost does not depend on the
/// start, which is the only regime where policies are comparable by a
/// single number.
#[derive(Clone, Debug)]
pub struct BruteForceSolution {
    pub gain: Vec<f64>,
    pub policy: Vec<usize>,
    pub constant_gain: Option<f64>,
}

const START_INDEPENDENCE_TOL: f64 = 1e-9;

fn policy_kernel_and_cost(model: &FiniteModel, policy: &[usize]) -> (Vec<f64>, Vec<f64>) {
    let m = model.num_states;
    let mut p = vec![0.0; m * m];
    let mut c = vec![0.0; m];
    for y in 0..m {
        p[y * m..(y + 1) * m].copy_from_slice(model.kernel_row(y, policy[y]));
        c[y] = model.cost_at(y, policy[y]);
    }
    (p, c)
}

/// Average cost of one stationary policy, per starting state. Uses the
/// stationary distribution when the floor certifies unique ergodicity and
/// the Cesàro limit of the kernel powers otherwise.
pub fn evaluate_policy_exact(model: &FiniteModel, policy: &[usize]) -> Result<Vec<f64>> {
    if policy.len() != model.num_states {
        return Err(Error::Config("policy length mismatch".into()));
    }
    if policy.iter().any(|u| *u >= model.num_actions) {
        return Err(Error::Config("policy action index out of range".into()));
    }
    let m = model.num_states;
    let (p, c) = policy_kernel_and_cost(model, policy);
    if model.floor_total() > 0.0 {
        let pi = stationary_distribution(&p, m)?;
        let j: f64 = pi.iter().zip(&c).map(|(w, cv)| w * cv).sum();
        Ok(vec![j; m])
    } else {
        let limit = cesaro_limit(&p, m, 60);
        let mut g = vec![0.0; m];
        for y in 0..m {
            for z in 0..m {
                g[y] += limit[y * m + z] * c[z];
            }
        }
        Ok(g)
    }
}

/// Enumerate every deterministic stationary policy and return the one with
/// the smallest average cost.
pub fn brute_force_gain(model: &FiniteModel) -> Result<BruteForceSolution> {
    model.validate()?;
    let (m, k) = (model.num_states, model.num_actions);
    let count = (k as f64).powi(m as i32);
    if count > 1e6 {
        return Err(Error::Config(format!(
            "policy enumeration too large: {k}^{m} > 1e6"
        )));
    }
    let total = count as u64;
    let mut policy = vec![0usize; m];
    let mut best: Option<BruteForceSolution> = None;
    for _ in 0..total {
        let gain = evaluate_policy_exact(model, &policy)?;
        let constant = span(&gain) <= START_INDEPENDENCE_TOL;
        if !constant {
            if total == 1 {
                return Ok(BruteForceSolution {
                    gain,
                    policy,
                    constant_gain: None,
                });
            }
            return Err(Error::Numerical(
                "start-dependent average cost: policies are not comparable by a single gain \
                 (no minorization floor)"
                    .into(),
            ));
        }
        let j = gain.iter().sum::<f64>() / m as f64;
        let better = match &best {
            None => true,
            Some(b) => j < b.constant_gain.unwrap(),
        };
        if better {
            best = Some(BruteForceSolution {
                gain,
                policy: policy.clone(),
                constant_gain: Some(j),
            });
        }
        // odometer increment over action indices
        for slot in policy.iter_mut().rev() {
            *slot += 1;
            if *slot < k {
                break;
            }
            *slot = 0;
        }
    }
    Ok(best.expect("at least one policy"))
}

/// Discounted value iteration for a list of discount factors; returns
/// (beta, (1-beta) * J_beta(y) per state) for each.
pub fn vanishing_discount(model: &FiniteModel, betas: &[f64]) -> Result<Vec<(f64, Vec<f64>)>> {
    model.validate()?;
    let (m, k) = (model.num_states, model.num_actions);
    let mut out = Vec::with_capacity(betas.len());
    for &beta in betas {
        if !(0.0 < beta && beta < 1.0) {
            return Err(Error::Config(format!("discount factor {beta} outside (0,1)")));
        }
        let tol = 1e-12;
        let mut v = vec![0.0; m];
        loop {
            let v_next: Vec<f64> = (0..m)
                .map(|y| {
                    (0..k)
                        .map(|u| {
                            let row = model.kernel_row(y, u);
                            let mut acc = model.cost_at(y, u);
                            for (p, vv) in row.iter().zip(&v) {
                                acc += beta * p * vv;
                            }
                            acc
                        })
                        .fold(f64::INFINITY, f64::min)
                })
                .collect();
            let gap = sup_norm_diff(&v_next, &v);
            v = v_next;
            // second term: floating-point floor once successive iterates
            // differ only in the last few ulps of the value scale
            let floor_eps = 8.0 * f64::EPSILON * (1.0 + sup_norm(&v));
            if gap <= (tol * (1.0 - beta) / beta).max(floor_eps) {
                break;
            }
        }
        out.push((beta, v.iter().map(|vv| (1.0 - beta) * vv).collect()));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environments::SyntheticFiniteModel;
    use crate::rng::Rng;

    fn single_state_model(cost: f64) -> FiniteModel {
        FiniteModel::new(1, 1, vec![cost], vec![1.0], vec![0.0]).unwrap()
    }

    #[test]
    fn degenerate_chain_span_route() {
        let model = single_state_model(0.7);
        let sol = solve_span_rvi(&model, &SolverConfig::with_route(SolveRoute::SpanRvi)).unwrap();
        assert!((sol.gain - 0.7).abs() < 1e-12);
        assert_eq!(sol.h, vec![0.0]);
        assert!(sol.residual < 1e-9);
    }

    #[test]
    fn shifted_route_refuses_zero_floor() {
        let model = single_state_model(0.7);
        let err = solve_shifted_kernel(&model, &SolverConfig::default()).unwrap_err();
        assert_eq!(err.exit_code(), 3);
    }

    #[test]
    fn shifted_route_with_override_matches() {
        let model = single_state_model(0.7);
        let cfg = SolverConfig {
            floor_override: Some(vec![0.4]),
            ..Default::default()
        };
        let sol = solve_shifted_kernel(&model, &cfg).unwrap();
        assert!((sol.gain - 0.7).abs() < 1e-10);
    }

    #[test]
    fn iid_chain_full_floor_gain_is_weighted_cost() {
        // uncontrolled chain whose rows all equal the floor: the shifted
        // operator is constant and the gain is the floor-weighted cost
        let dist = vec![0.2, 0.5, 0.3];
        let cost = vec![1.0, 2.0, 4.0];
        let mut kernel = Vec::new();
        for _ in 0..3 {
            kernel.extend_from_slice(&dist);
        }
        let model = FiniteModel::new(3, 1, cost.clone(), kernel, vec![0.0; 3]).unwrap();
        let cfg = SolverConfig {
            floor_override: Some(dist.clone()),
            ..Default::default()
        };
        let sol = solve_shifted_kernel(&model, &cfg).unwrap();
        let expect: f64 = dist.iter().zip(&cost).map(|(d, c)| d * c).sum();
        assert!((sol.gain - expect).abs() < 1e-12);
        assert!(sol.residual < 1e-12);
    }

    #[test]
    fn routes_agree_on_random_models() {
        for seed in 0..8 {
            let model = SyntheticFiniteModel::random(4, 3, 0.05, 0.12, 100 + seed).unwrap();
            let span_sol =
                solve_span_rvi(model.finite(), &SolverConfig::with_route(SolveRoute::SpanRvi))
                    .unwrap();
            let shift_sol = solve_shifted_kernel(model.finite(), &SolverConfig::default()).unwrap();
            assert!(
                (span_sol.gain - shift_sol.gain).abs() < 1e-8,
                "seed {seed}: {} vs {}",
                span_sol.gain,
                shift_sol.gain
            );
            assert!(span_diff(&span_sol.h, &shift_sol.h) < 1e-7);
        }
    }

    #[test]
    fn brute_force_dominated_action() {
        // action 0 strictly dominates everywhere
        let model = FiniteModel::new(
            2,
            2,
            vec![0.1, 5.0, 0.2, 7.0],
            vec![
                0.5, 0.5, 0.5, 0.5, // y=0: u=0, u=1
                0.5, 0.5, 0.5, 0.5, // y=1
            ],
            vec![0.2, 0.2],
        )
        .unwrap();
        let bf = brute_force_gain(&model).unwrap();
        assert_eq!(bf.policy, vec![0, 0]);
        assert!((bf.constant_gain.unwrap() - 0.15).abs() < 1e-12);
    }

    #[test]
    fn brute_force_matches_solvers() {
        for seed in 0..6 {
            let model = SyntheticFiniteModel::random(3, 3, 0.06, 0.1, 500 + seed).unwrap();
            let bf = brute_force_gain(model.finite()).unwrap();
            let sol = solve_shifted_kernel(model.finite(), &SolverConfig::default()).unwrap();
            assert!(
                (bf.constant_gain.unwrap() - sol.gain).abs() < 1e-8,
                "seed {seed}"
            );
        }
    }

    #[test]
    fn brute_force_reports_start_dependence_when_uncontrolled() {
        // two absorbing states, costs -1 and 1
        let model = FiniteModel::new(
            2,
            1,
            vec![-1.0, 1.0],
            vec![1.0, 0.0, 0.0, 1.0],
            vec![0.0, 0.0],
        )
        .unwrap();
        let bf = brute_force_gain(&model).unwrap();
        assert!(bf.constant_gain.is_none());
        assert!((bf.gain[0] + 1.0).abs() < 1e-9);
        assert!((bf.gain[1] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn contraction_laws_hold_exactly() {
        let model = SyntheticFiniteModel::random(4, 2, 0.05, 0.1, 9).unwrap();
        let finite = model.finite();
        let alpha = 1.0 - finite.floor_total();
        let beta = tv_contraction_certificate(finite);
        let mut rng = Rng::seed_from(17);
        for _ in 0..20 {
            let f: Vec<f64> = (0..4).map(|_| rng.uniform(-10.0, 10.0)).collect();
            let g: Vec<f64> = (0..4).map(|_| rng.uniform(-10.0, 10.0)).collect();
            let tf = shifted_bellman(finite, &finite.floor, &f);
            let tg = shifted_bellman(finite, &finite.floor, &g);
            assert!(sup_norm_diff(&tf, &tg) <= alpha * sup_norm_diff(&f, &g) + 1e-12);
            let bf = bellman(finite, &f);
            let bg = bellman(finite, &g);
            assert!(span_diff(&bf, &bg) <= beta * span_diff(&f, &g) + 1e-12);
        }
    }

    #[test]
    fn cost_shift_moves_gain_keeps_policy() {
        let model = SyntheticFiniteModel::random(4, 3, 0.05, 0.1, 2718).unwrap();
        let base = solve_shifted_kernel(model.finite(), &SolverConfig::default()).unwrap();
        let mut shifted = model.finite().clone();
        for c in &mut shifted.cost {
            *c += 2.5;
        }
        let moved = solve_shifted_kernel(&shifted, &SolverConfig::default()).unwrap();
        assert!((moved.gain - base.gain - 2.5).abs() < 1e-9);
        assert_eq!(moved.policy, base.policy);
    }

    #[test]
    fn vanishing_discount_trivial_models() {
        let zero = FiniteModel::new(2, 1, vec![0.0, 0.0], vec![0.5, 0.5, 0.5, 0.5], vec![0.1, 0.1])
            .unwrap();
        for (_, v) in vanishing_discount(&zero, &[0.5, 0.9, 0.999]).unwrap() {
            assert!(v.iter().all(|x| x.abs() < 1e-12));
        }
        let constant =
            FiniteModel::new(2, 1, vec![3.0, 3.0], vec![0.5, 0.5, 0.5, 0.5], vec![0.1, 0.1])
                .unwrap();
        for (_, v) in vanishing_discount(&constant, &[0.5, 0.99]).unwrap() {
            for x in v {
                assert!((x - 3.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn residual_bound_holds_for_solutions() {
        for seed in 0..4 {
            let model = SyntheticFiniteModel::random(4, 2, 0.05, 0.1, 900 + seed).unwrap();
            for route in [SolveRoute::SpanRvi, SolveRoute::ShiftedKernel] {
                let sol = solve(model.finite(), &SolverConfig::with_route(route)).unwrap();
                assert!(sol.residual <= 10.0 * 1e-10, "route {route:?}");
            }
        }
    }
}
