//! Shared test support: seeded random instances and two independent
//! equilibrium oracles that avoid the production solver's linear-algebra
//! path entirely.

use mfr_core::dynamics::propagate_rows;
use mfr_core::graph::TrafficGraph;
use mfr_core::policy::PolicyProfile;
use mfr_core::spec::GameSpec;
use mfr_core::tensor::{self, Tensor3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Random valid instance with a diagonally dominant interaction matrix and
/// strictly positive initial densities (every node stays reachable, which
/// the gradient oracle needs).
pub fn random_instance(seed: u64, node_count: usize, team_count: usize, horizon: usize) -> GameSpec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let successors: Vec<Vec<usize>> = (0..node_count)
        .map(|i| {
            let mut succ = vec![i];
            let extra = 1 + rng.gen_range(0..2usize);
            while succ.len() < 1 + extra.min(node_count - 1) {
                let j = rng.gen_range(0..node_count);
                if !succ.contains(&j) {
                    succ.push(j);
                }
            }
            succ.sort_unstable();
            succ
        })
        .collect();
    let graph = TrafficGraph::new(node_count, successors);
    let travel_cost = tensor::edge_tensor(team_count, horizon, &graph, |_, _, _, _| {
        (rng.gen_range(0..11) as f64) * 0.5
    });
    let reference_policy = tensor::uniform_reference(horizon, &graph);
    let mut interaction = vec![vec![0.0; team_count]; team_count];
    for l in 0..team_count {
        let diag = rng.gen_range(2.0..4.0);
        interaction[l][l] = diag;
        for m in 0..team_count {
            if m != l {
                let cap = 0.8 * diag / (team_count - 1) as f64;
                interaction[l][m] = rng.gen_range(0.2..cap.max(0.25));
            }
        }
    }
    let initial_density = (0..team_count)
        .map(|_| {
            let raw: Vec<f64> = (0..node_count).map(|_| rng.gen_range(0.1..1.0)).collect();
            let z: f64 = raw.iter().sum();
            raw.into_iter().map(|v| v / z).collect()
        })
        .collect();
    let spec = GameSpec {
        graph,
        horizon,
        team_count,
        travel_cost,
        reference_policy,
        interaction,
        initial_density,
        population_ratios: vec![1.0 / team_count as f64; team_count],
    };
    assert!(spec.validate().is_empty(), "generator produced invalid spec");
    spec
}

/// Exact best response of one team in the coupled game, with the other
/// teams' log terms frozen: a plain temperature-`a_ll` soft-min backward
/// recursion. Used by the fixed-point oracle.
fn kl_best_response(spec: &GameSpec<f64>, team: usize, profile: &PolicyProfile<f64>) -> Tensor3<f64> {
    let graph = &spec.graph;
    let a_own = spec.interaction[team][team];
    let mut w_next = vec![0.0; graph.node_count];
    let mut rows = vec![Vec::new(); spec.horizon];
    for t in (0..spec.horizon).rev() {
        let mut w_cur = vec![0.0; graph.node_count];
        let mut rows_t = Vec::with_capacity(graph.node_count);
        for i in 0..graph.node_count {
            let succ = graph.succ(i);
            let costs: Vec<f64> = succ
                .iter()
                .enumerate()
                .map(|(p, &j)| {
                    let mut c = spec.travel_cost[team][t][i][p] + w_next[j];
                    for m in 0..spec.team_count {
                        if m != team {
                            c += spec.interaction[team][m]
                                * (profile.q[m][t][i][p] / spec.reference_policy[t][i][p]).ln();
                        }
                    }
                    c
                })
                .collect();
            let shift = costs.iter().cloned().fold(f64::INFINITY, f64::min);
            let weights: Vec<f64> = costs
                .iter()
                .enumerate()
                .map(|(p, &c)| spec.reference_policy[t][i][p] * (-(c - shift) / a_own).exp())
                .collect();
            let z: f64 = weights.iter().sum();
            rows_t.push(weights.iter().map(|w| w / z).collect::<Vec<f64>>());
            w_cur[i] = shift - a_own * z.ln();
        }
        rows[t] = rows_t;
        w_next = w_cur;
    }
    rows
}

/// Damped Jacobi fixed-point iteration on the coupled first-order
/// conditions: every team best-responds to the current iterate, then
/// policies move a damped step toward the responses. Independent of the
/// production solver (no interaction-matrix inverse anywhere).
pub fn fixed_point_oracle(spec: &GameSpec<f64>, damping: f64, tol: f64, max_iter: usize) -> PolicyProfile<f64> {
    let mut profile = PolicyProfile::from_reference(spec);
    for _ in 0..max_iter {
        let responses: Vec<Tensor3<f64>> = (0..spec.team_count)
            .map(|l| kl_best_response(spec, l, &profile))
            .collect();
        let mut delta: f64 = 0.0;
        for (l, response) in responses.into_iter().enumerate() {
            for t in 0..spec.horizon {
                for i in 0..spec.graph.node_count {
                    for p in 0..spec.graph.out_degree(i) {
                        let old = profile.q[l][t][i][p];
                        let new = (1.0 - damping) * old + damping * response[t][i][p];
                        delta = delta.max((new - old).abs());
                        profile.q[l][t][i][p] = new;
                    }
                }
            }
        }
        if delta < tol {
            return profile;
        }
    }
    panic!("fixed-point oracle did not converge");
}

/// One team's realized objective in the coupled game, everything else held
/// fixed. Shared by the gradient oracle.
fn team_objective(spec: &GameSpec<f64>, team: usize, rows: &Tensor3<f64>, profile: &PolicyProfile<f64>) -> f64 {
    let density = propagate_rows(spec, rows, team);
    let mut total = 0.0;
    for t in 0..spec.horizon {
        for i in 0..spec.graph.node_count {
            let mass = density[t][i];
            if mass <= 0.0 {
                continue;
            }
            for p in 0..spec.graph.out_degree(i) {
                let q = rows[t][i][p];
                if q <= 0.0 {
                    continue;
                }
                let r = spec.reference_policy[t][i][p];
                let mut cost = spec.travel_cost[team][t][i][p];
                for m in 0..spec.team_count {
                    let qm = if m == team { q } else { profile.q[m][t][i][p] };
                    cost += spec.interaction[team][m] * (qm / r).ln();
                }
                total += mass * q * cost;
            }
        }
    }
    total
}

/// Euclidean projection onto the probability simplex, floored away from the
/// boundary so logarithms stay finite.
fn project_simplex(row: &mut [f64]) {
    let n = row.len();
    let mut sorted = row.to_vec();
    sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let mut cum = 0.0;
    let mut theta = 0.0;
    for (k, &v) in sorted.iter().enumerate() {
        cum += v;
        let candidate = (cum - 1.0) / (k + 1) as f64;
        if v - candidate > 0.0 {
            theta = candidate;
        }
    }
    let mut z = 0.0;
    for v in row.iter_mut() {
        *v = (*v - theta).max(1e-9);
        z += *v;
    }
    for v in row.iter_mut() {
        *v /= z;
    }
    let _ = n;
}

/// Simultaneous projected-gradient play on the coupled objectives, with
/// finite-difference gradients. Slow and deliberately dumb; serves as a
/// second, structurally different check on the fixed-point oracle.
pub fn projected_gradient_oracle(spec: &GameSpec<f64>, iters: usize, step0: f64) -> PolicyProfile<f64> {
    let mut profile = PolicyProfile::from_reference(spec);
    let h = 1e-6;
    for k in 0..iters {
        let step = step0 / (1.0 + k as f64 / 400.0);
        let mut next = profile.clone();
        for l in 0..spec.team_count {
            let mut rows = profile.q[l].clone();
            for t in 0..spec.horizon {
                for i in 0..spec.graph.node_count {
                    let deg = spec.graph.out_degree(i);
                    let mut grad = vec![0.0; deg];
                    for p in 0..deg {
                        let orig = rows[t][i][p];
                        let lo = (orig - h).max(orig * 0.5);
                        rows[t][i][p] = orig + h;
                        let up = team_objective(spec, l, &rows, &profile);
                        rows[t][i][p] = lo;
                        let down = team_objective(spec, l, &rows, &profile);
                        rows[t][i][p] = orig;
                        grad[p] = (up - down) / (orig + h - lo);
                    }
                    for p in 0..deg {
                        next.q[l][t][i][p] = rows[t][i][p] - step * grad[p];
                    }
                    project_simplex(&mut next.q[l][t][i]);
                }
            }
        }
        profile = next;
    }
    profile
}

/// Largest absolute entry-wise difference between two policy profiles.
pub fn max_policy_gap(a: &PolicyProfile<f64>, b: &PolicyProfile<f64>) -> f64 {
    let mut gap: f64 = 0.0;
    for (qa, qb) in a.q.iter().zip(&b.q) {
        for (ta, tb) in qa.iter().zip(qb) {
            for (ia, ib) in ta.iter().zip(tb) {
                for (&va, &vb) in ia.iter().zip(ib) {
                    gap = gap.max((va - vb).abs());
                }
            }
        }
    }
    gap
}
