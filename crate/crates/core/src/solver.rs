//! Equilibrium computation for the multi-team routing game.
//!
//! The game with a log-population tax is linearly solvable: one backward
//! pass computes, per time step and per edge, an L-dimensional linear solve
//! against the interaction matrix followed by a log-sum-exp normalization.
//! No fixed-point iteration over policies is needed.
//!
//! Backward recursion, for `t = T-1, ..., 0` and every node `i` with
//! successor `j` at position `p`:
//!
//! ```text
//! phi[l][T-1][i][p] = C[l][T-1][i][p]
//! m[.][t][i][p]     = A^-1 (-a_ll - phi[l][t][i][p])_l
//! lse[l][i]         = log sum_p R[t][i][p] exp(m[l][t][i][p])   (max-shifted)
//! lambda[.][t][i]   = A (lse[l][i])_l
//! q[l][t][i][p]     = R[t][i][p] exp(m[l][t][i][p] - lse[l][i])
//! phi[l][t-1][i][p] = C[l][t-1][i][p] - a_ll - lambda[l][t][j]
//! ```
//!
//! `lse` equals `[A^-1 lambda]_l` by construction; using it directly for the
//! normalization avoids a pointless round trip through the factorization.

use thiserror::Error;

use crate::artifacts::SolverArtifacts;
use crate::linalg::{self, Lu};
use crate::policy::{PolicyProfile, TaxField};
use crate::scalar::{Scalar, Tolerances};
use crate::spec::GameSpec;
use crate::tensor;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum SolverError {
    #[error("SingularInteraction: interaction matrix condition estimate {cond:e} exceeds 1e12")]
    SingularInteraction { cond: f64 },
    #[error("NonFiniteIntermediate: {tensor}[team={team}][t={t}][node={node}] became non-finite")]
    NonFiniteIntermediate {
        tensor: &'static str,
        team: usize,
        t: usize,
        node: usize,
    },
    #[error("IndexOutOfRange: t={t} outside 0..={horizon}")]
    IndexOutOfRange { t: usize, horizon: usize },
    #[error("SupportViolation: policy positive where reference is zero at (team={team}, t={t}, node={node}, pos={pos})")]
    SupportViolation {
        team: usize,
        t: usize,
        node: usize,
        pos: usize,
    },
}

/// Run the backward recursion and return all solver tensors.
///
/// Expects a spec that passes validation; tensor shapes are not re-checked.
/// The interaction matrix is factored once and reused across all stages and
/// edges.
pub fn solve<T: Scalar>(spec: &GameSpec<T>) -> Result<SolverArtifacts<T>, SolverError> {
    let tol = Tolerances::<T>::default();
    let cond = linalg::condition_estimate(&spec.interaction);
    let lu: Lu<T> = match cond {
        Some(c) if c <= tol.interaction_cond => Lu::factor(&spec.interaction).unwrap(),
        Some(c) => return Err(SolverError::SingularInteraction { cond: c.as_f64() }),
        None => {
            return Err(SolverError::SingularInteraction {
                cond: f64::INFINITY,
            })
        }
    };
    let a_inv = lu.inverse();
    let a = &spec.interaction;
    let l_count = spec.team_count;
    let t_count = spec.horizon;
    let graph = &spec.graph;
    let diag: Vec<T> = (0..l_count).map(|l| a[l][l]).collect();

    let mut q = tensor::edge_tensor(l_count, t_count, graph, |_, _, _, _| T::zero());
    let mut m_out = q.clone();
    let mut phi_out = q.clone();
    let mut lambda = vec![vec![vec![T::zero(); graph.node_count]; t_count]; l_count];

    // phi for the stage currently being processed, [l][i][p]
    let mut phi_cur: Vec<Vec<Vec<T>>> = (0..l_count)
        .map(|l| spec.travel_cost[l][t_count - 1].clone())
        .collect();

    let mut rhs = vec![T::zero(); l_count];
    for t in (0..t_count).rev() {
        for l in 0..l_count {
            phi_out[l][t] = phi_cur[l].clone();
        }
        // per-edge linear solve for the log ratios
        for i in 0..graph.node_count {
            for p in 0..graph.out_degree(i) {
                for l in 0..l_count {
                    rhs[l] = -diag[l] - phi_cur[l][i][p];
                }
                let mv = linalg::mat_vec(&a_inv, &rhs);
                for l in 0..l_count {
                    m_out[l][t][i][p] = mv[l];
                }
            }
        }
        // normalization and multipliers
        for i in 0..graph.node_count {
            let r_row = &spec.reference_policy[t][i];
            let mut lse = vec![T::zero(); l_count];
            for l in 0..l_count {
                // max-shifted weights; normalizing by their sum instead of
                // exponentiating (m - lse) keeps rows stochastic even when
                // the shift dwarfs the log of the sum
                let shift = m_out[l][t][i]
                    .iter()
                    .cloned()
                    .fold(T::neg_infinity(), T::max);
                let mut z = T::zero();
                for p in 0..graph.out_degree(i) {
                    let w = r_row[p] * (m_out[l][t][i][p] - shift).exp();
                    q[l][t][i][p] = w;
                    z = z + w;
                }
                for p in 0..graph.out_degree(i) {
                    q[l][t][i][p] = q[l][t][i][p] / z;
                }
                lse[l] = shift + z.ln();
                if !lse[l].is_finite() {
                    return Err(SolverError::NonFiniteIntermediate {
                        tensor: "lambda",
                        team: l,
                        t,
                        node: i,
                    });
                }
            }
            let lam = linalg::mat_vec(a, &lse);
            for l in 0..l_count {
                if !lam[l].is_finite() {
                    return Err(SolverError::NonFiniteIntermediate {
                        tensor: "lambda",
                        team: l,
                        t,
                        node: i,
                    });
                }
                lambda[l][t][i] = lam[l];
                debug_assert!({
                    let s: T = q[l][t][i].iter().cloned().sum();
                    (s - T::one()).abs() <= tol.row_sum
                });
            }
        }
        if t > 0 {
            for l in 0..l_count {
                for i in 0..graph.node_count {
                    for (p, &j) in graph.succ(i).iter().enumerate() {
                        let v = spec.travel_cost[l][t - 1][i][p] - diag[l] - lambda[l][t][j];
                        if !v.is_finite() {
                            return Err(SolverError::NonFiniteIntermediate {
                                tensor: "phi",
                                team: l,
                                t: t - 1,
                                node: i,
                            });
                        }
                        phi_cur[l][i][p] = v;
                    }
                }
            }
        }
    }

    let value_coeff = (0..l_count)
        .map(|l| {
            (0..t_count)
                .map(|t| {
                    (0..graph.node_count)
                        .map(|i| -diag[l] - lambda[l][t][i])
                        .collect()
                })
                .collect()
        })
        .collect();

    Ok(SolverArtifacts {
        policy: PolicyProfile { q },
        lambda,
        phi: phi_out,
        m: m_out,
        value_coeff,
    })
}

/// Expected cost-to-go of each team from time `t` under the given node
/// densities: the inner product of the density with the value coefficients.
///
/// `t == horizon` is allowed and returns zero for every team (the terminal
/// convention); larger `t` is an error.
pub fn value_function<T: Scalar>(
    artifacts: &SolverArtifacts<T>,
    density: &[Vec<T>],
    t: usize,
) -> Result<Vec<T>, SolverError> {
    let horizon = artifacts.horizon();
    if t > horizon {
        return Err(SolverError::IndexOutOfRange { t, horizon });
    }
    if t == horizon {
        return Ok(vec![T::zero(); artifacts.team_count()]);
    }
    Ok(artifacts
        .value_coeff
        .iter()
        .zip(density)
        .map(|(per_t, d)| per_t[t].iter().zip(d).map(|(&c, &p)| c * p).sum())
        .collect())
}

/// Maximum absolute violation of the first-order stationarity identity
///
/// ```text
/// phi + sum_m a_lm log(q_m / r) + a_ll + lambda = 0
/// ```
///
/// over all entries where the policy mass exceeds `1e-12`. A solution
/// straight from [`solve`] keeps this below `1e-8` for moderately scaled
/// costs; it grows sharply when the policy is perturbed.
pub fn stationarity_residual<T: Scalar>(spec: &GameSpec<T>, artifacts: &SolverArtifacts<T>) -> T {
    let support_floor = T::c(1e-12);
    let mut worst = T::zero();
    for l in 0..spec.team_count {
        let a_row = &spec.interaction[l];
        let diag = spec.interaction[l][l];
        for t in 0..spec.horizon {
            for i in 0..spec.graph.node_count {
                for p in 0..spec.graph.out_degree(i) {
                    if artifacts.policy.q[l][t][i][p] <= support_floor {
                        continue;
                    }
                    let r = spec.reference_policy[t][i][p];
                    let mut tax = T::zero();
                    for m in 0..spec.team_count {
                        tax = tax + a_row[m] * (artifacts.policy.q[m][t][i][p] / r).ln();
                    }
                    let residual =
                        artifacts.phi[l][t][i][p] + tax + diag + artifacts.lambda[l][t][i];
                    worst = worst.max(residual.abs());
                }
            }
        }
    }
    worst
}

/// Large-population limit of the per-edge congestion charge under a common
/// policy profile: `tau[l] = sum_m a_lm log(q_m / r)`.
///
/// Edges where some team places zero probability get the `-inf` sentinel
/// (the limit charge is undefined there; downstream cost evaluation applies
/// the `0 * -inf = 0` convention). Positive policy mass where the reference
/// is zero is a support violation.
pub fn mean_field_tax<T: Scalar>(
    spec: &GameSpec<T>,
    policy: &PolicyProfile<T>,
) -> Result<TaxField<T>, SolverError> {
    let mut tau = tensor::edge_tensor(spec.team_count, spec.horizon, &spec.graph, |_, _, _, _| {
        T::zero()
    });
    for t in 0..spec.horizon {
        for i in 0..spec.graph.node_count {
            for p in 0..spec.graph.out_degree(i) {
                let r = spec.reference_policy[t][i][p];
                for m in 0..spec.team_count {
                    if policy.q[m][t][i][p] > T::zero() && r <= T::zero() {
                        return Err(SolverError::SupportViolation {
                            team: m,
                            t,
                            node: i,
                            pos: p,
                        });
                    }
                }
                let mut any_zero = false;
                let mut ratios = vec![T::zero(); spec.team_count];
                for m in 0..spec.team_count {
                    let q = policy.q[m][t][i][p];
                    if q <= T::zero() {
                        any_zero = true;
                    } else {
                        ratios[m] = (q / r).ln();
                    }
                }
                for l in 0..spec.team_count {
                    tau[l][t][i][p] = if any_zero {
                        T::neg_infinity()
                    } else {
                        (0..spec.team_count)
                            .map(|m| spec.interaction[l][m] * ratios[m])
                            .sum()
                    };
                }
            }
        }
    }
    Ok(TaxField { tau })
}
