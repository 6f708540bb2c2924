//! Forward dynamics and cost evaluation under a fixed tax field.
//!
//! The tax field is treated as exogenous here: these routines answer "what
//! does a driver pay, and what is her best response, when the per-edge
//! charges are frozen?" — which is exactly the single-driver problem faced
//! against an equilibrium population.

use thiserror::Error;

use crate::policy::{DensityTrajectory, PolicyProfile, TaxField, TeamPolicy};
use crate::scalar::Scalar;
use crate::spec::GameSpec;
use crate::tensor::{Tensor2, Tensor3};

#[derive(Debug, Clone, Error, PartialEq)]
pub enum DynamicsError {
    #[error("InfiniteCost: positive probability mass on an undefined-charge edge at (team={team}, t={t}, node={node}, pos={pos})")]
    InfiniteCost {
        team: usize,
        t: usize,
        node: usize,
        pos: usize,
    },
}

/// Expected-cost breakdown for each team.
#[derive(Debug, Clone, PartialEq)]
pub struct CostReport<T> {
    /// Total expected cost per team.
    pub total: Vec<T>,
    /// Per-stage expected cost, `[team][t]`.
    pub per_stage: Tensor2<T>,
    /// Travel-cost component of `per_stage`.
    pub travel_part: Tensor2<T>,
    /// Congestion-charge component of `per_stage`.
    pub tax_part: Tensor2<T>,
}

/// Deterministic best response of one team against a fixed tax field.
#[derive(Debug, Clone)]
pub struct BestResponse<T> {
    /// One-hot rows: all mass on the cheapest successor.
    pub policy: TeamPolicy<T>,
    /// Expected total cost of the response, integrated against the team's
    /// initial density.
    pub value: T,
    /// `spread[t][i]`: max minus min of the per-successor continuation costs
    /// at each node. Under an equilibrium-induced tax every admissible move
    /// costs the same, so this collapses to rounding noise at reachable
    /// nodes.
    pub tie_spread: Tensor2<T>,
}

/// Push each team's initial density forward through its policy:
/// `p[l][t+1][j] = sum_i p[l][t][i] q[l][t][i][p(j)]`. The returned
/// trajectory has `horizon + 1` time slices.
pub fn propagate<T: Scalar>(spec: &GameSpec<T>, policy: &PolicyProfile<T>) -> DensityTrajectory<T> {
    let p = (0..spec.team_count)
        .map(|l| propagate_rows(spec, &policy.q[l], l))
        .collect();
    DensityTrajectory { p }
}

/// Forward propagation for one team's rows, starting from that team's
/// initial density.
pub fn propagate_rows<T: Scalar>(spec: &GameSpec<T>, rows: &Tensor3<T>, team: usize) -> Tensor2<T> {
    let v_count = spec.graph.node_count;
    let mut out = Vec::with_capacity(spec.horizon + 1);
    out.push(spec.initial_density[team].clone());
    for t in 0..spec.horizon {
        let mut next = vec![T::zero(); v_count];
        let cur = &out[t];
        for i in 0..v_count {
            let mass = cur[i];
            if mass <= T::zero() {
                continue;
            }
            for (p, &j) in spec.graph.succ(i).iter().enumerate() {
                next[j] = next[j] + mass * rows[t][i][p];
            }
        }
        out.push(next);
    }
    out
}

/// Expected travel plus congestion cost of every team when it follows
/// `policy` and faces the frozen `tax` field.
///
/// Zero-probability edges contribute nothing even when the tax there is the
/// `-inf` sentinel (`0 * -inf = 0` convention); an edge that carries both
/// positive probability flow and the sentinel is an error.
pub fn evaluate_cost<T: Scalar>(
    spec: &GameSpec<T>,
    policy: &PolicyProfile<T>,
    tax: &TaxField<T>,
) -> Result<CostReport<T>, DynamicsError> {
    let densities = propagate(spec, policy);
    let mut per_stage = vec![vec![T::zero(); spec.horizon]; spec.team_count];
    let mut travel_part = per_stage.clone();
    let mut tax_part = per_stage.clone();
    for l in 0..spec.team_count {
        for t in 0..spec.horizon {
            let density = densities.at(l, t);
            let mut travel = T::zero();
            let mut charge = T::zero();
            for i in 0..spec.graph.node_count {
                if density[i] <= T::zero() {
                    continue;
                }
                for p in 0..spec.graph.out_degree(i) {
                    let weight = density[i] * policy.q[l][t][i][p];
                    if weight <= T::zero() {
                        continue;
                    }
                    let tau = tax.get(l, t, i, p);
                    if !tau.is_finite() {
                        return Err(DynamicsError::InfiniteCost {
                            team: l,
                            t,
                            node: i,
                            pos: p,
                        });
                    }
                    travel = travel + weight * spec.travel_cost[l][t][i][p];
                    charge = charge + weight * tau;
                }
            }
            travel_part[l][t] = travel;
            tax_part[l][t] = charge;
            per_stage[l][t] = travel + charge;
        }
    }
    let total = per_stage.iter().map(|row| row.iter().cloned().sum()).collect();
    Ok(CostReport {
        total,
        per_stage,
        travel_part,
        tax_part,
    })
}

/// Backward dynamic program for a single driver of `team` against a frozen
/// tax field: terminal value zero, per-move cost
/// `travel + tax + continuation`. Ties break toward the lowest successor
/// position; sentinel-tax edges are never selected.
pub fn best_response<T: Scalar>(spec: &GameSpec<T>, team: usize, tax: &TaxField<T>) -> BestResponse<T> {
    let graph = &spec.graph;
    let v_count = graph.node_count;
    let mut w_next = vec![T::zero(); v_count];
    let mut rows = vec![Vec::new(); spec.horizon];
    let mut tie_spread = vec![vec![T::zero(); v_count]; spec.horizon];
    for t in (0..spec.horizon).rev() {
        let mut w_cur = vec![T::zero(); v_count];
        let mut rows_t = Vec::with_capacity(v_count);
        for i in 0..v_count {
            let succ = graph.succ(i);
            let mut best_pos = 0usize;
            let mut best = T::infinity();
            let mut lo = T::infinity();
            let mut hi = T::neg_infinity();
            for (p, &j) in succ.iter().enumerate() {
                let tau = tax.get(team, t, i, p);
                let move_cost = if tau.is_finite() {
                    spec.travel_cost[team][t][i][p] + tau + w_next[j]
                } else {
                    T::infinity()
                };
                if move_cost < best {
                    best = move_cost;
                    best_pos = p;
                }
                if move_cost.is_finite() {
                    lo = lo.min(move_cost);
                    hi = hi.max(move_cost);
                }
            }
            let mut row = vec![T::zero(); succ.len()];
            row[best_pos] = T::one();
            rows_t.push(row);
            w_cur[i] = best;
            tie_spread[t][i] = if hi >= lo { hi - lo } else { T::zero() };
        }
        rows[t] = rows_t;
        w_next = w_cur;
    }
    let value = spec.initial_density[team]
        .iter()
        .zip(&w_next)
        .filter(|(&p0, _)| p0 > T::zero())
        .map(|(&p0, &w)| p0 * w)
        .sum();
    BestResponse {
        policy: TeamPolicy { rows },
        value,
        tie_spread,
    }
}

/// Per-team gain from unilaterally deviating to a best response while the
/// population (and hence the tax field) keeps playing `policy`. Nonnegative
/// by construction; zero (to rounding) exactly at an equilibrium profile.
pub fn exploitability<T: Scalar>(
    spec: &GameSpec<T>,
    policy: &PolicyProfile<T>,
) -> Result<Vec<T>, crate::error::Error> {
    let tax = crate::solver::mean_field_tax(spec, policy)?;
    let report = evaluate_cost(spec, policy, &tax)?;
    let mut gaps = Vec::with_capacity(spec.team_count);
    for l in 0..spec.team_count {
        let br = best_response(spec, l, &tax);
        gaps.push((report.total[l] - br.value).max(T::zero()));
    }
    Ok(gaps)
}
