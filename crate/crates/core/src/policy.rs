//! Policies, densities, and tax fields.

use serde::{Deserialize, Serialize};

use crate::scalar::{Scalar, Tolerances};
use crate::spec::{GameSpec, Violation};
use crate::tensor::{Tensor3, Tensor4};

/// Mixed routing strategies for every team: `q[l][t][i][p]` is the
/// probability a team-`l` driver at node `i` at time `t` moves to
/// `successors[i][p]`. Rows are distributions over the successor list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyProfile<T> {
    pub q: Tensor4<T>,
}

/// Routing strategy for a single team, `rows[t][i][p]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TeamPolicy<T> {
    pub rows: Tensor3<T>,
}

/// Node-occupation distributions over time: `p[l][t][i]` for
/// `t = 0..=horizon` (one more slice than the horizon).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityTrajectory<T> {
    pub p: Tensor3<T>,
}

/// Per-edge expected congestion charge faced by each team:
/// `tau[l][t][i][p]`, in cost units.
///
/// Entries may carry a `-inf` sentinel where the charge is undefined because
/// some team places zero probability on the edge; a driver placing zero
/// probability there incurs zero contribution (`0 * -inf = 0` by convention),
/// and positive-probability use of such an edge is an error at evaluation
/// time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaxField<T> {
    pub tau: Tensor4<T>,
}

impl<T: Scalar> PolicyProfile<T> {
    /// Policy rows equal to the spec's reference policy for every team.
    pub fn from_reference(spec: &GameSpec<T>) -> Self {
        let q = (0..spec.team_count)
            .map(|_| spec.reference_policy.clone())
            .collect();
        PolicyProfile { q }
    }

    pub fn row(&self, l: usize, t: usize, i: usize) -> &[T] {
        &self.q[l][t][i]
    }

    /// Single team's slice as a [`TeamPolicy`].
    pub fn team(&self, l: usize) -> TeamPolicy<T> {
        TeamPolicy {
            rows: self.q[l].clone(),
        }
    }

    /// Copy of `self` with team `l`'s rows replaced.
    pub fn with_team(&self, l: usize, team: &TeamPolicy<T>) -> Self {
        let mut q = self.q.clone();
        q[l] = team.rows.clone();
        PolicyProfile { q }
    }

    /// Validate against a spec: shape, row-stochasticity within the row-sum
    /// tolerance, nonnegativity, and support contained in the reference
    /// policy's support.
    pub fn violations(&self, spec: &GameSpec<T>) -> Vec<Violation> {
        let tol = Tolerances::<T>::default();
        let mut out = Vec::new();
        let shape_ok = self.q.len() == spec.team_count
            && self.q.iter().all(|per_t| {
                per_t.len() == spec.horizon
                    && per_t.iter().all(|per_i| {
                        per_i.len() == spec.graph.node_count
                            && per_i
                                .iter()
                                .enumerate()
                                .all(|(i, row)| row.len() == spec.graph.out_degree(i))
                    })
            });
        if !shape_ok {
            out.push(Violation::Shape {
                tensor: "policy",
                detail: "expected [team][horizon][node][successor] layout matching the graph"
                    .into(),
            });
            return out;
        }
        for (l, per_t) in self.q.iter().enumerate() {
            for (t, per_i) in per_t.iter().enumerate() {
                for (i, row) in per_i.iter().enumerate() {
                    let mut sum = T::zero();
                    for (p, &qv) in row.iter().enumerate() {
                        if qv < -tol.nonneg || !qv.is_finite() {
                            out.push(Violation::Shape {
                                tensor: "policy",
                                detail: format!(
                                    "q[{l}][{t}][{i}][{p}] = {} is not a probability",
                                    qv.as_f64()
                                ),
                            });
                        }
                        if qv > T::zero() && spec.reference_policy[t][i][p] <= T::zero() {
                            out.push(Violation::Shape {
                                tensor: "policy",
                                detail: format!(
                                    "q[{l}][{t}][{i}][{p}] positive outside reference support"
                                ),
                            });
                        }
                        sum = sum + qv;
                    }
                    if !((sum - T::one()).abs() <= tol.row_sum) {
                        out.push(Violation::Shape {
                            tensor: "policy",
                            detail: format!(
                                "row (team={l}, t={t}, node={i}) sums to {}, expected 1",
                                sum.as_f64()
                            ),
                        });
                    }
                }
            }
        }
        out
    }
}

impl<T: Scalar> DensityTrajectory<T> {
    /// Density of team `l` at time `t` (`t` may equal the horizon).
    pub fn at(&self, l: usize, t: usize) -> &[T] {
        &self.p[l][t]
    }

    /// Shannon entropy (nats) of team `l`'s density at time `t`, with the
    /// `0 log 0 = 0` convention.
    pub fn spatial_entropy(&self, l: usize, t: usize) -> T {
        self.p[l][t]
            .iter()
            .filter(|&&p| p > T::zero())
            .map(|&p| -p * p.ln())
            .sum()
    }
}

impl<T: Scalar> TaxField<T> {
    pub fn zeros(spec: &GameSpec<T>) -> Self {
        TaxField {
            tau: crate::tensor::edge_tensor(spec.team_count, spec.horizon, &spec.graph, |_, _, _, _| {
                T::zero()
            }),
        }
    }

    pub fn get(&self, l: usize, t: usize, i: usize, p: usize) -> T {
        self.tau[l][t][i][p]
    }

    /// True when the entry is the "undefined charge" sentinel.
    pub fn is_sentinel(v: T) -> bool {
        !v.is_finite()
    }
}
