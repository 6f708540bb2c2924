//! Game instance: graph, horizon, teams, costs, reference policy,
//! interaction matrix, initial densities — and its validation.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::TrafficGraph;
use crate::linalg;
use crate::scalar::{Scalar, Tolerances};
use crate::tensor::{Tensor2, Tensor3, Tensor4};

/// Full description of a multi-team routing game.
///
/// Tensor layouts (`L` teams, horizon `T`, `V` nodes, positions indexing the
/// ordered successor list of each node):
///
/// * `travel_cost[l][t][i][p]` — cost for a team-`l` driver moving from `i`
///   to `successors[i][p]` at time `t`; nonnegative.
/// * `reference_policy[t][i][p]` — nominal routing distribution the operator
///   wants drivers to follow; rows are strictly positive and sum to 1.
/// * `interaction[l][m]` — positive invertible matrix weighting how team
///   `l`'s tax responds to team `m`'s congestion.
/// * `initial_density[l][i]` — team-`l` start distribution over nodes.
/// * `population_ratios[l]` — positive shares summing to 1; used to split a
///   finite driver population into teams.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GameSpec<T> {
    pub graph: TrafficGraph,
    pub horizon: usize,
    pub team_count: usize,
    pub travel_cost: Tensor4<T>,
    pub reference_policy: Tensor3<T>,
    pub interaction: Tensor2<T>,
    pub initial_density: Tensor2<T>,
    pub population_ratios: Vec<T>,
}

/// A single invariant violation, locating the offending tensor entry.
///
/// Violations are data: validation always returns a verdict and never fails.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Violation {
    #[error("graph has no nodes")]
    EmptyGraph,
    #[error("node {node} has no admissible successors")]
    DeadEnd { node: usize },
    #[error("node {node} lists invalid successor {succ}")]
    InvalidSuccessor { node: usize, succ: usize },
    #[error("node {node} lists duplicate successor {succ}")]
    DuplicateSuccessor { node: usize, succ: usize },
    #[error("horizon must be positive")]
    ZeroHorizon,
    #[error("team count must be positive")]
    ZeroTeams,
    #[error("{tensor}: {detail}")]
    Shape {
        tensor: &'static str,
        detail: String,
    },
    #[error("travel_cost[{team}][{t}][{node}][{pos}] = {value} is not a finite nonnegative cost")]
    BadCost {
        team: usize,
        t: usize,
        node: usize,
        pos: usize,
        value: f64,
    },
    #[error("reference_policy row (t={t}, node={node}) sums to {sum}, expected 1")]
    ReferenceRowSum { t: usize, node: usize, sum: f64 },
    #[error("reference_policy[{t}][{node}][{pos}] = {value} must be strictly positive")]
    ReferenceNotPositive {
        t: usize,
        node: usize,
        pos: usize,
        value: f64,
    },
    #[error("interaction entry ({row},{col}) = {value} must be positive and finite")]
    InteractionNotPositive { row: usize, col: usize, value: f64 },
    #[error("interaction matrix A singular (condition estimate {cond:e} exceeds threshold)")]
    InteractionSingular { cond: f64 },
    #[error("initial_density team {team} sums to {sum}, expected 1")]
    DensitySum { team: usize, sum: f64 },
    #[error("initial_density[{team}][{node}] = {value} is negative")]
    DensityNegative { team: usize, node: usize, value: f64 },
    #[error("population_ratios[{team}] = {value} must be positive")]
    RatioNotPositive { team: usize, value: f64 },
    #[error("population_ratios sum to {sum}, expected 1")]
    RatioSum { sum: f64 },
}

impl<T: Scalar> GameSpec<T> {
    pub fn node_count(&self) -> usize {
        self.graph.node_count
    }

    /// Check every structural and numeric invariant; returns the full list
    /// of violations (empty when the spec is valid). Total: any tensor of
    /// finite reals produces a verdict, never a panic.
    pub fn validate(&self) -> Vec<Violation> {
        validate_spec(self)
    }
}

pub fn validate_spec<T: Scalar>(spec: &GameSpec<T>) -> Vec<Violation> {
    let tol = Tolerances::<T>::default();
    let mut out = spec.graph.violations();
    if spec.horizon == 0 {
        out.push(Violation::ZeroHorizon);
    }
    if spec.team_count == 0 {
        out.push(Violation::ZeroTeams);
    }
    // Shape errors make element checks meaningless, so bail out early on a
    // malformed graph.
    if !out.is_empty()
        && out.iter().any(|v| {
            matches!(
                v,
                Violation::EmptyGraph | Violation::Shape { .. } | Violation::InvalidSuccessor { .. }
            )
        })
    {
        return out;
    }
    let v_count = spec.graph.node_count;
    let l_count = spec.team_count;
    let t_count = spec.horizon;

    check_edge_tensor_shape(
        "travel_cost",
        &spec.travel_cost,
        l_count,
        t_count,
        &spec.graph,
        &mut out,
    );
    if !shape_ok_3(&spec.reference_policy, t_count, &spec.graph) {
        out.push(Violation::Shape {
            tensor: "reference_policy",
            detail: "expected [horizon][node][successor] layout matching the graph".into(),
        });
    }
    if spec.interaction.len() != l_count || spec.interaction.iter().any(|r| r.len() != l_count) {
        out.push(Violation::Shape {
            tensor: "interaction",
            detail: format!("expected {l_count}x{l_count} matrix"),
        });
    }
    if spec.initial_density.len() != l_count
        || spec.initial_density.iter().any(|r| r.len() != v_count)
    {
        out.push(Violation::Shape {
            tensor: "initial_density",
            detail: format!("expected {l_count} rows of {v_count} nodes"),
        });
    }
    if spec.population_ratios.len() != l_count {
        out.push(Violation::Shape {
            tensor: "population_ratios",
            detail: format!("expected {l_count} entries"),
        });
    }
    if !out.is_empty() {
        return out;
    }

    // Element-level checks, now safe to index.
    for (l, per_t) in spec.travel_cost.iter().enumerate() {
        for (t, per_i) in per_t.iter().enumerate() {
            for (i, row) in per_i.iter().enumerate() {
                for (p, &c) in row.iter().enumerate() {
                    if !(c.is_finite() && c >= T::zero()) {
                        out.push(Violation::BadCost {
                            team: l,
                            t,
                            node: i,
                            pos: p,
                            value: c.as_f64(),
                        });
                    }
                }
            }
        }
    }
    for (t, per_i) in spec.reference_policy.iter().enumerate() {
        for (i, row) in per_i.iter().enumerate() {
            let mut sum = T::zero();
            for (p, &r) in row.iter().enumerate() {
                if !(r.is_finite() && r > T::zero()) {
                    out.push(Violation::ReferenceNotPositive {
                        t,
                        node: i,
                        pos: p,
                        value: r.as_f64(),
                    });
                }
                sum = sum + r;
            }
            if !((sum - T::one()).abs() <= tol.row_sum) {
                out.push(Violation::ReferenceRowSum {
                    t,
                    node: i,
                    sum: sum.as_f64(),
                });
            }
        }
    }
    let mut interaction_ok = true;
    for (l, row) in spec.interaction.iter().enumerate() {
        for (m, &a) in row.iter().enumerate() {
            if !(a.is_finite() && a > T::zero()) {
                out.push(Violation::InteractionNotPositive {
                    row: l,
                    col: m,
                    value: a.as_f64(),
                });
                interaction_ok = false;
            }
        }
    }
    if interaction_ok {
        match linalg::condition_estimate(&spec.interaction) {
            Some(cond) if cond <= tol.interaction_cond => {}
            Some(cond) => out.push(Violation::InteractionSingular {
                cond: cond.as_f64(),
            }),
            None => out.push(Violation::InteractionSingular { cond: f64::INFINITY }),
        }
    }
    for (l, row) in spec.initial_density.iter().enumerate() {
        let mut sum = T::zero();
        for (i, &p) in row.iter().enumerate() {
            if p < -tol.nonneg {
                out.push(Violation::DensityNegative {
                    team: l,
                    node: i,
                    value: p.as_f64(),
                });
            }
            sum = sum + p;
        }
        if !((sum - T::one()).abs() <= tol.row_sum) {
            out.push(Violation::DensitySum {
                team: l,
                sum: sum.as_f64(),
            });
        }
    }
    let mut ratio_sum = T::zero();
    for (l, &r) in spec.population_ratios.iter().enumerate() {
        if !(r.is_finite() && r > T::zero()) {
            out.push(Violation::RatioNotPositive {
                team: l,
                value: r.as_f64(),
            });
        }
        ratio_sum = ratio_sum + r;
    }
    if !((ratio_sum - T::one()).abs() <= tol.row_sum) {
        out.push(Violation::RatioSum {
            sum: ratio_sum.as_f64(),
        });
    }
    out
}

fn shape_ok_3<T>(t3: &Tensor3<T>, t_count: usize, graph: &TrafficGraph) -> bool {
    t3.len() == t_count
        && t3.iter().all(|per_i| {
            per_i.len() == graph.node_count
                && per_i
                    .iter()
                    .enumerate()
                    .all(|(i, row)| row.len() == graph.out_degree(i))
        })
}

fn check_edge_tensor_shape<T>(
    name: &'static str,
    t4: &Tensor4<T>,
    l_count: usize,
    t_count: usize,
    graph: &TrafficGraph,
    out: &mut Vec<Violation>,
) {
    let ok = t4.len() == l_count && t4.iter().all(|per_t| shape_ok_3(per_t, t_count, graph));
    if !ok {
        out.push(Violation::Shape {
            tensor: name,
            detail: "expected [team][horizon][node][successor] layout matching the graph".into(),
        });
    }
}
