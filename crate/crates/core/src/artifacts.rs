//! Output bundle of the equilibrium solver.

use serde::{Deserialize, Serialize};

use crate::policy::PolicyProfile;
use crate::tensor::{Tensor3, Tensor4};

/// Everything the backward recursion produces.
///
/// * `policy` — the equilibrium strategies `Q*[l][t][i][p]`.
/// * `lambda[l][t][i]` — normalization multipliers, in cost units.
/// * `phi[l][t][i][p]` — per-edge cost-to-go coefficients used at stage `t`
///   (stage cost plus continuation through the successor's multiplier).
/// * `m[l][t][i][p]` — log-policy ratios before normalization, the solution
///   of the per-edge linear system.
/// * `value_coeff[l][t][i]` — node value coefficients `-a_ll - lambda`; the
///   value of a density is its inner product with this slice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverArtifacts<T> {
    pub policy: PolicyProfile<T>,
    pub lambda: Tensor3<T>,
    pub phi: Tensor4<T>,
    pub m: Tensor4<T>,
    pub value_coeff: Tensor3<T>,
}

impl<T> SolverArtifacts<T> {
    pub fn team_count(&self) -> usize {
        self.lambda.len()
    }

    pub fn horizon(&self) -> usize {
        self.lambda.first().map_or(0, |per_t| per_t.len())
    }
}
