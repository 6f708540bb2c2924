//! Finite-population Monte Carlo: sample driver trajectories, tabulate
//! populations, charge the realized log-population tax, and measure how
//! fast the finite game approaches its large-population limit.
//!
//! # Randomness
//!
//! All sampling uses ChaCha8 streams. A root seed fans out into independent
//! substreams through a documented SplitMix64 chain
//! ([`substream_seed`]): replication `r` of the tax estimator draws from
//! `substream_seed(seed, &[1, r])`, and replication `r` of team `l`'s
//! deviation experiment from `substream_seed(seed, &[2, l, r])`.
//! Replications are therefore independent, order-insensitive, and safe to
//! evaluate in parallel; results are merged in fixed replication order so
//! the thread count never changes any output bit.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::dynamics::{best_response, propagate, propagate_rows};
use crate::policy::{PolicyProfile, TaxField};
use crate::scalar::Scalar;
use crate::solver::{mean_field_tax, solve, SolverError};
use crate::spec::GameSpec;
use crate::tensor::{Tensor2, Tensor3};

const STREAM_TAX: u64 = 1;
const STREAM_EPSILON: u64 = 2;
const STREAM_POLICY: u64 = 3;

/// Driver head counts tabulated from one simulated population.
///
/// `k_node[m][t][i]` counts team-`m` drivers at node `i` at time `t` for
/// `t = 0..=horizon`; `k_edge[m][t][i][p]` counts those at `i` at time `t`
/// who move to `successors[i][p]`, for `t < horizon`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PopulationCounts {
    pub team_sizes: Vec<u64>,
    pub k_node: Vec<Vec<Vec<u64>>>,
    pub k_edge: Vec<Vec<Vec<Vec<u64>>>>,
}

impl PopulationCounts {
    /// Every time slice must conserve each team's size, and edge counts must
    /// disaggregate node counts.
    pub fn conservation_holds(&self) -> bool {
        self.k_node.iter().enumerate().all(|(m, per_t)| {
            per_t
                .iter()
                .all(|nodes| nodes.iter().sum::<u64>() == self.team_sizes[m])
        }) && self.k_edge.iter().enumerate().all(|(m, per_t)| {
            per_t.iter().enumerate().all(|(t, per_i)| {
                per_i
                    .iter()
                    .enumerate()
                    .all(|(i, row)| row.iter().sum::<u64>() == self.k_node[m][t][i])
            })
        })
    }
}

/// Per-edge statistics gathered by the expected-tax estimator.
#[derive(Debug, Clone, PartialEq)]
pub struct TaxCellStat<T> {
    pub team: usize,
    pub t: usize,
    pub node: usize,
    /// Successor position and the successor node it denotes.
    pub pos: usize,
    pub succ: usize,
    /// Mean-field probability of a driver of `team` traversing this edge.
    pub flow: T,
    /// Smallest such probability across all teams; the limit charge is only
    /// meaningful where every team keeps positive flow, so the reported gap
    /// is restricted to cells whose `min_team_flow` clears the threshold.
    pub min_team_flow: T,
    /// Large-population limit of the charge.
    pub limit: T,
    /// Monte Carlo estimate of the expected realized charge, if any
    /// replication produced a finite sample.
    pub empirical: Option<T>,
    /// Replications contributing a finite sample.
    pub samples: u32,
    /// Replications where the edge was used but the charge was undefined
    /// (some other team present at the node left the edge untouched).
    pub excluded: u32,
}

/// Exploitability estimate for one team.
#[derive(Debug, Clone, PartialEq)]
pub struct EpsilonEstimate<T> {
    pub team: usize,
    /// `max(0, mean cost of staying with the equilibrium - mean cost of the
    /// best deviation)` across replications.
    pub epsilon: T,
    /// Standard error of the per-replication cost difference.
    pub std_error: T,
    pub mean_equilibrium_cost: T,
    pub mean_deviation_cost: T,
    /// Count of cross-team zero-count log terms floored during evaluation.
    pub clamped_terms: u64,
}

/// Report of a finite-population experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationReport<T> {
    pub n_total: u64,
    pub replications: u32,
    pub seed: u64,
    pub support_threshold: T,
    pub cells: Vec<TaxCellStat<T>>,
    /// Max absolute gap between the empirical and limit tax over cells whose
    /// mean-field flow exceeds `support_threshold`.
    pub convergence_error: T,
    pub epsilon: Vec<EpsilonEstimate<T>>,
}

/// SplitMix64 step, used only for seed derivation.
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive an independent stream seed from a root seed and a word path.
pub fn substream_seed(root: u64, words: &[u64]) -> u64 {
    let mut s = splitmix64(root ^ 0xA5A5_5A5A_C3C3_3C3C);
    for &w in words {
        s = splitmix64(s ^ w);
    }
    s
}

/// Split `n_total` drivers into teams by largest-remainder rounding of the
/// population ratios; the sizes always sum to `n_total`.
pub fn team_sizes<T: Scalar>(n_total: u64, ratios: &[T]) -> Vec<u64> {
    let quotas: Vec<f64> = ratios
        .iter()
        .map(|r| r.as_f64() * n_total as f64)
        .collect();
    let mut sizes: Vec<u64> = quotas.iter().map(|q| q.floor() as u64).collect();
    let assigned: u64 = sizes.iter().sum();
    let mut order: Vec<usize> = (0..ratios.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = quotas[a] - quotas[a].floor();
        let rb = quotas[b] - quotas[b].floor();
        rb.partial_cmp(&ra).unwrap().then(a.cmp(&b))
    });
    let mut leftover = n_total.saturating_sub(assigned);
    let mut cursor = order.iter().cycle();
    while leftover > 0 {
        match cursor.next() {
            Some(&idx) => sizes[idx] += 1,
            None => break,
        }
        leftover -= 1;
    }
    sizes
}

/// Cumulative rows for categorical sampling; the last entry is forced to 1.
fn cumulative(row: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    let mut out: Vec<f64> = row
        .iter()
        .map(|&p| {
            acc += p.max(0.0);
            acc
        })
        .collect();
    if let Some(last) = out.last_mut() {
        *last = 1.0;
    }
    out
}

fn sample_index(cdf: &[f64], u: f64) -> usize {
    cdf.iter().position(|&c| u < c).unwrap_or(cdf.len() - 1)
}

/// Sample a full population with the given team sizes: each driver draws an
/// initial node from her team's start distribution and then follows the
/// team policy independently. Deterministic given the seed.
pub fn simulate_with_sizes<T: Scalar>(
    spec: &GameSpec<T>,
    policy: &PolicyProfile<T>,
    sizes: &[u64],
    seed: u64,
) -> PopulationCounts {
    let graph = &spec.graph;
    let v_count = graph.node_count;
    let horizon = spec.horizon;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let initial_cdf: Vec<Vec<f64>> = spec
        .initial_density
        .iter()
        .map(|row| cumulative(&row.iter().map(|p| p.as_f64()).collect::<Vec<_>>()))
        .collect();
    let policy_cdf: Vec<Vec<Vec<Vec<f64>>>> = policy
        .q
        .iter()
        .map(|per_t| {
            per_t
                .iter()
                .map(|per_i| {
                    per_i
                        .iter()
                        .map(|row| cumulative(&row.iter().map(|p| p.as_f64()).collect::<Vec<_>>()))
                        .collect()
                })
                .collect()
        })
        .collect();

    let mut k_node = vec![vec![vec![0u64; v_count]; horizon + 1]; sizes.len()];
    let mut k_edge: Vec<Vec<Vec<Vec<u64>>>> = (0..sizes.len())
        .map(|_| {
            (0..horizon)
                .map(|_| (0..v_count).map(|i| vec![0u64; graph.out_degree(i)]).collect())
                .collect()
        })
        .collect();

    for (m, &n_m) in sizes.iter().enumerate() {
        for _ in 0..n_m {
            let mut node = sample_index(&initial_cdf[m], rng.gen::<f64>());
            k_node[m][0][node] += 1;
            for t in 0..horizon {
                let pos = sample_index(&policy_cdf[m][t][node], rng.gen::<f64>());
                k_edge[m][t][node][pos] += 1;
                node = graph.succ(node)[pos];
                k_node[m][t + 1][node] += 1;
            }
        }
    }
    PopulationCounts {
        team_sizes: sizes.to_vec(),
        k_node,
        k_edge,
    }
}

/// [`simulate_with_sizes`] with the team split derived from the spec's
/// population ratios.
pub fn simulate<T: Scalar>(
    spec: &GameSpec<T>,
    policy: &PolicyProfile<T>,
    n_total: u64,
    seed: u64,
) -> PopulationCounts {
    let sizes = team_sizes(n_total, &spec.population_ratios);
    simulate_with_sizes(spec, policy, &sizes, seed)
}

/// Realized log-population charge for every team and edge:
///
/// ```text
/// pi[l][t][i][p] = sum_m a_lm (log(k_edge[m]/k_node[m]) - log r)
/// ```
///
/// A team absent from the node contributes nothing (the `0/0 = 1` reading of
/// the empty ratio); a team present at the node but absent from the edge
/// makes the charge undefined, marked with the `-inf` sentinel.
pub fn empirical_tax<T: Scalar>(spec: &GameSpec<T>, counts: &PopulationCounts) -> TaxField<T> {
    let l_count = spec.team_count;
    let mut tau =
        crate::tensor::edge_tensor(l_count, spec.horizon, &spec.graph, |_, _, _, _| T::zero());
    for t in 0..spec.horizon {
        for i in 0..spec.graph.node_count {
            for p in 0..spec.graph.out_degree(i) {
                let r = spec.reference_policy[t][i][p];
                let mut terms = vec![T::zero(); l_count];
                let mut undefined = false;
                for m in 0..l_count {
                    let node = counts.k_node[m][t][i];
                    let edge = counts.k_edge[m][t][i][p];
                    if node == 0 {
                        terms[m] = T::zero();
                    } else if edge == 0 {
                        undefined = true;
                    } else {
                        let frac = T::from_u64(edge).unwrap() / T::from_u64(node).unwrap();
                        terms[m] = frac.ln() - r.ln();
                    }
                }
                for l in 0..l_count {
                    tau[l][t][i][p] = if undefined {
                        T::neg_infinity()
                    } else {
                        (0..l_count)
                            .map(|m| spec.interaction[l][m] * terms[m])
                            .sum()
                    };
                }
            }
        }
    }
    TaxField { tau }
}

/// Monte Carlo estimate of the expected charge conditioned on a driver
/// traversing each edge, compared against the large-population limit.
///
/// In each replication the population plays `policy`; for a cell
/// `(l, t, i, p)` a sample exists when some team-`l` driver realized the
/// edge, and its value is the common charge those drivers paid. Replications
/// where that charge is undefined (cross-team zero count) are excluded from
/// the mean and counted in [`TaxCellStat::excluded`]. The reported max-gap
/// covers cells where every team's mean-field flow exceeds
/// `support_threshold`: that is the regime where the limit charge applies,
/// and it keeps cells one team never visits (empty-node convention) from
/// being compared against a limit they do not approximate.
pub fn estimate_expected_tax<T: Scalar>(
    spec: &GameSpec<T>,
    policy: &PolicyProfile<T>,
    n_total: u64,
    replications: u32,
    seed: u64,
) -> SimulationReport<T> {
    let support_threshold = T::c(0.05);
    let limit = mean_field_tax(spec, policy).expect("policy within reference support");
    let densities = propagate(spec, policy);
    let sizes = team_sizes(n_total, &spec.population_ratios);

    // flat cell index over (l, t, i, p)
    let mut offsets = Vec::new();
    let mut cell_count = 0usize;
    for l in 0..spec.team_count {
        for t in 0..spec.horizon {
            for i in 0..spec.graph.node_count {
                offsets.push((l, t, i, cell_count));
                cell_count += spec.graph.out_degree(i);
            }
        }
    }

    let per_rep: Vec<(Vec<T>, Vec<bool>, Vec<bool>)> = (0..replications)
        .into_par_iter()
        .map(|r| {
            let counts = simulate_with_sizes(
                spec,
                policy,
                &sizes,
                substream_seed(seed, &[STREAM_TAX, r as u64]),
            );
            let pi = empirical_tax(spec, &counts);
            let mut values = vec![T::zero(); cell_count];
            let mut present = vec![false; cell_count];
            let mut undefined = vec![false; cell_count];
            for &(l, t, i, base) in &offsets {
                for p in 0..spec.graph.out_degree(i) {
                    if counts.k_edge[l][t][i][p] == 0 {
                        continue;
                    }
                    let v = pi.tau[l][t][i][p];
                    if v.is_finite() {
                        values[base + p] = v;
                        present[base + p] = true;
                    } else {
                        undefined[base + p] = true;
                    }
                }
            }
            (values, present, undefined)
        })
        .collect();

    let mut sums = vec![T::zero(); cell_count];
    let mut sample_counts = vec![0u32; cell_count];
    let mut excluded_counts = vec![0u32; cell_count];
    for (values, present, undefined) in &per_rep {
        for c in 0..cell_count {
            if present[c] {
                sums[c] = sums[c] + values[c];
                sample_counts[c] += 1;
            }
            if undefined[c] {
                excluded_counts[c] += 1;
            }
        }
    }

    let mut cells = Vec::with_capacity(cell_count);
    let mut convergence_error = T::zero();
    for &(l, t, i, base) in &offsets {
        for (p, &j) in spec.graph.succ(i).iter().enumerate() {
            let c = base + p;
            let samples = sample_counts[c];
            let empirical = if samples > 0 {
                Some(sums[c] / T::from_u32(samples).unwrap())
            } else {
                None
            };
            let flow = densities.at(l, t)[i] * policy.q[l][t][i][p];
            let min_team_flow = (0..spec.team_count)
                .map(|m| densities.at(m, t)[i] * policy.q[m][t][i][p])
                .fold(T::infinity(), T::min);
            let lim = limit.tau[l][t][i][p];
            if let Some(e) = empirical {
                if min_team_flow > support_threshold && lim.is_finite() {
                    convergence_error = convergence_error.max((e - lim).abs());
                }
            }
            cells.push(TaxCellStat {
                team: l,
                t,
                node: i,
                pos: p,
                succ: j,
                flow,
                min_team_flow,
                limit: lim,
                empirical,
                samples,
                excluded: excluded_counts[c],
            });
        }
    }

    SimulationReport {
        n_total,
        replications,
        seed,
        support_threshold,
        cells,
        convergence_error,
        epsilon: Vec::new(),
    }
}

/// Evaluation tax field seen by one tagged team-`l` driver: background
/// counts plus her own presence on whichever edge she traverses.
///
/// Her own team's term is always finite (she contributes one driver to both
/// counts). A rival team present at the node but absent from the edge would
/// make the term `-inf`; those logs are floored at `log(1/k_node)` and
/// counted, keeping every replication usable. The floor's effect vanishes as
/// the population grows.
fn deviator_tax_field<T: Scalar>(
    spec: &GameSpec<T>,
    counts: &PopulationCounts,
    team: usize,
    clamped: &mut u64,
) -> Tensor3<T> {
    let l_count = spec.team_count;
    let mut field = crate::tensor::node_edge_tensor(spec.horizon, &spec.graph, |_, _, _| T::zero());
    for t in 0..spec.horizon {
        for i in 0..spec.graph.node_count {
            for p in 0..spec.graph.out_degree(i) {
                let r_log = spec.reference_policy[t][i][p].ln();
                let mut charge = T::zero();
                for m in 0..l_count {
                    let mut node = counts.k_node[m][t][i];
                    let mut edge = counts.k_edge[m][t][i][p];
                    if m == team {
                        node += 1;
                        edge += 1;
                    }
                    let term = if node == 0 {
                        T::zero()
                    } else if edge == 0 {
                        *clamped += 1;
                        -(T::from_u64(node).unwrap().ln()) - r_log
                    } else {
                        (T::from_u64(edge).unwrap() / T::from_u64(node).unwrap()).ln() - r_log
                    };
                    charge = charge + spec.interaction[team][m] * term;
                }
                field[t][i][p] = charge;
            }
        }
    }
    field
}

/// Expected cost of a tagged driver with trajectory `density` and rows
/// `rows`, facing per-edge charges `field` on top of her travel costs.
fn tagged_cost<T: Scalar>(
    spec: &GameSpec<T>,
    team: usize,
    rows: &Tensor3<T>,
    density: &Tensor2<T>,
    field: &Tensor3<T>,
) -> T {
    let mut total = T::zero();
    for t in 0..spec.horizon {
        for i in 0..spec.graph.node_count {
            let mass = density[t][i];
            if mass <= T::zero() {
                continue;
            }
            for p in 0..spec.graph.out_degree(i) {
                let w = mass * rows[t][i][p];
                if w <= T::zero() {
                    continue;
                }
                total = total + w * (spec.travel_cost[team][t][i][p] + field[t][i][p]);
            }
        }
    }
    total
}

/// Estimate each team's incentive to deviate in the finite game.
///
/// Everyone plays the equilibrium profile except one tagged driver per team.
/// Replications first estimate the expected charge field the tagged driver
/// faces (self-inclusively); her deviation policy is the dynamic-programming
/// best response to that mean field, and the estimate is the clamped mean of
/// the per-replication cost difference between staying with the equilibrium
/// and deviating, with matched backgrounds.
pub fn estimate_epsilon<T: Scalar>(
    spec: &GameSpec<T>,
    n_total: u64,
    replications: u32,
    seed: u64,
) -> Result<Vec<EpsilonEstimate<T>>, SolverError> {
    let artifacts = solve(spec)?;
    let eq_policy = &artifacts.policy;
    let eq_density = propagate(spec, eq_policy);
    let full_sizes = team_sizes(n_total, &spec.population_ratios);

    let mut out = Vec::with_capacity(spec.team_count);
    for l in 0..spec.team_count {
        let mut sizes = full_sizes.clone();
        sizes[l] = sizes[l].saturating_sub(1);

        // pass 1: mean charge field seen by the tagged driver
        let fields: Vec<(Tensor3<T>, u64)> = (0..replications)
            .into_par_iter()
            .map(|r| {
                let counts = simulate_with_sizes(
                    spec,
                    eq_policy,
                    &sizes,
                    substream_seed(seed, &[STREAM_EPSILON, l as u64, r as u64]),
                );
                let mut clamped = 0u64;
                let field = deviator_tax_field(spec, &counts, l, &mut clamped);
                (field, clamped)
            })
            .collect();

        let inv_reps = T::one() / T::from_u32(replications).unwrap();
        let mut mean_field =
            crate::tensor::node_edge_tensor(spec.horizon, &spec.graph, |_, _, _| T::zero());
        let mut clamped_total = 0u64;
        for (field, clamped) in &fields {
            clamped_total += clamped;
            for t in 0..spec.horizon {
                for i in 0..spec.graph.node_count {
                    for p in 0..spec.graph.out_degree(i) {
                        mean_field[t][i][p] = mean_field[t][i][p] + field[t][i][p] * inv_reps;
                    }
                }
            }
        }

        let mut br_tax = TaxField::zeros(spec);
        br_tax.tau[l] = mean_field;
        let deviation = best_response(spec, l, &br_tax);
        let dev_density = propagate_rows(spec, &deviation.policy.rows, l);

        // pass 2: matched per-replication costs for both strategies
        let diffs: Vec<(T, T)> = fields
            .iter()
            .map(|(field, _)| {
                let stay = tagged_cost(spec, l, &eq_policy.q[l], &eq_density.p[l], field);
                let dev = tagged_cost(spec, l, &deviation.policy.rows, &dev_density, field);
                (stay, dev)
            })
            .collect();

        let mean_stay: T = diffs.iter().map(|&(s, _)| s).sum::<T>() * inv_reps;
        let mean_dev: T = diffs.iter().map(|&(_, d)| d).sum::<T>() * inv_reps;
        let mean_diff = mean_stay - mean_dev;
        let std_error = if replications > 1 {
            let var: T = diffs
                .iter()
                .map(|&(s, d)| {
                    let x = (s - d) - mean_diff;
                    x * x
                })
                .sum::<T>()
                / T::from_u32(replications - 1).unwrap();
            (var / T::from_u32(replications).unwrap()).sqrt()
        } else {
            T::zero()
        };

        out.push(EpsilonEstimate {
            team: l,
            epsilon: mean_diff.max(T::zero()),
            std_error,
            mean_equilibrium_cost: mean_stay,
            mean_deviation_cost: mean_dev,
            clamped_terms: clamped_total,
        });
    }
    Ok(out)
}

/// Random row-stochastic policy with full support on the reference policy's
/// support: each row is a flat Dirichlet draw over the successor list.
/// Deterministic given the seed; intended for tests and experiments.
pub fn random_feasible_policy<T: Scalar>(spec: &GameSpec<T>, seed: u64) -> PolicyProfile<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(substream_seed(seed, &[STREAM_POLICY]));
    let q = crate::tensor::edge_tensor(spec.team_count, spec.horizon, &spec.graph, |_, _, _, _| {
        let u: f64 = rng.gen();
        T::c((-(1.0 - u).ln()).max(1e-12))
    });
    let mut policy = PolicyProfile { q };
    for per_t in policy.q.iter_mut() {
        for per_i in per_t.iter_mut() {
            for row in per_i.iter_mut() {
                let z: T = row.iter().cloned().sum();
                for v in row.iter_mut() {
                    *v = *v / z;
                }
            }
        }
    }
    policy
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::TrafficGraph;
    use crate::scenario;
    use crate::tensor;

    #[test]
    fn largest_remainder_sizes_sum_and_track_ratios() {
        assert_eq!(team_sizes(10, &[0.5f64, 0.5]), vec![5, 5]);
        assert_eq!(team_sizes(10, &[0.55f64, 0.45]), vec![6, 4]);
        assert_eq!(team_sizes(7, &[1.0f64 / 3.0; 3]).iter().sum::<u64>(), 7);
        assert_eq!(team_sizes(2, &[0.4f64, 0.35, 0.25]), vec![1, 1, 0]);
    }

    #[test]
    fn deterministic_policy_gives_deterministic_counts() {
        let graph = TrafficGraph::new(2, vec![vec![0, 1], vec![1]]);
        let travel_cost = tensor::edge_tensor(1, 2, &graph, |_, _, _, _| 1.0);
        let spec = GameSpec {
            reference_policy: tensor::uniform_reference(2, &graph),
            graph,
            horizon: 2,
            team_count: 1,
            travel_cost,
            interaction: vec![vec![1.0]],
            initial_density: vec![vec![1.0, 0.0]],
            population_ratios: vec![1.0],
        };
        let policy = PolicyProfile {
            q: vec![vec![vec![vec![0.0, 1.0], vec![1.0]], vec![vec![0.0, 1.0], vec![1.0]]]],
        };
        let counts = simulate(&spec, &policy, 25, 42);
        assert_eq!(counts.k_node[0][0], vec![25, 0]);
        assert_eq!(counts.k_node[0][1], vec![0, 25]);
        assert_eq!(counts.k_node[0][2], vec![0, 25]);
        assert_eq!(counts.k_edge[0][0][0], vec![0, 25]);
        assert!(counts.conservation_holds());
    }

    #[test]
    fn single_driver_counts_are_binary_and_conserved() {
        let spec = scenario::three_node_demo::<f64>();
        let policy = PolicyProfile::from_reference(&spec);
        let counts = simulate_with_sizes(&spec, &policy, &[1, 0], 9);
        assert!(counts.conservation_holds());
        for per_t in &counts.k_node[0] {
            assert!(per_t.iter().all(|&k| k <= 1));
        }
    }

    #[test]
    fn counts_reproducible_for_fixed_seed() {
        let spec = scenario::three_node_demo::<f64>();
        let policy = PolicyProfile::from_reference(&spec);
        let a = simulate(&spec, &policy, 500, 1234);
        let b = simulate(&spec, &policy, 500, 1234);
        assert_eq!(a, b);
        let c = simulate(&spec, &policy, 500, 1235);
        assert_ne!(a, c);
    }

    #[test]
    fn empirical_tax_zero_when_counts_split_like_reference() {
        // two nodes, uniform reference; split counts exactly in half
        let graph = TrafficGraph::new(2, vec![vec![0, 1], vec![0, 1]]);
        let travel_cost = tensor::edge_tensor(1, 1, &graph, |_, _, _, _| 0.0);
        let spec: GameSpec<f64> = GameSpec {
            reference_policy: tensor::uniform_reference(1, &graph),
            graph,
            horizon: 1,
            team_count: 1,
            travel_cost,
            interaction: vec![vec![1.5]],
            initial_density: vec![vec![0.5, 0.5]],
            population_ratios: vec![1.0],
        };
        let counts = PopulationCounts {
            team_sizes: vec![8],
            k_node: vec![vec![vec![4, 4], vec![4, 4]]],
            k_edge: vec![vec![vec![vec![2, 2], vec![2, 2]]]],
        };
        let tax = empirical_tax(&spec, &counts);
        for i in 0..2 {
            for p in 0..2 {
                assert_eq!(tax.tau[0][0][i][p], 0.0);
            }
        }
    }

    #[test]
    fn empirical_tax_log_two_when_everyone_picks_one_edge() {
        let graph = TrafficGraph::new(2, vec![vec![0, 1], vec![0, 1]]);
        let travel_cost = tensor::edge_tensor(1, 1, &graph, |_, _, _, _| 0.0);
        let spec: GameSpec<f64> = GameSpec {
            reference_policy: tensor::uniform_reference(1, &graph),
            graph,
            horizon: 1,
            team_count: 1,
            travel_cost,
            interaction: vec![vec![1.0]],
            initial_density: vec![vec![1.0, 0.0]],
            population_ratios: vec![1.0],
        };
        let counts = PopulationCounts {
            team_sizes: vec![6],
            k_node: vec![vec![vec![6, 0], vec![0, 6]]],
            k_edge: vec![vec![vec![vec![0, 6], vec![0, 0]]]],
        };
        let tax = empirical_tax(&spec, &counts);
        // everyone at node 0 picked position 1: log((6/6)/0.5) = log 2
        assert!((tax.tau[0][0][0][1] - 0.6931471805599453).abs() < 1e-15);
        // empty node contributes zero despite the reference log
        assert_eq!(tax.tau[0][0][1][0], 0.0);
        assert_eq!(tax.tau[0][0][1][1], 0.0);
        // occupied node, untouched edge: undefined charge
        assert!(tax.tau[0][0][0][0].is_infinite());
    }

    #[test]
    fn edge_frequencies_match_mean_field_within_four_sigma() {
        let spec = scenario::three_node_demo::<f64>();
        let artifacts = crate::solver::solve(&spec).unwrap();
        let policy = &artifacts.policy;
        let densities = propagate(&spec, policy);
        let n: u64 = 2000;
        let reps: u32 = 30;
        let sizes = team_sizes(n, &spec.population_ratios);
        let mut freq_sum = vec![0.0f64; 2 * spec.horizon * 3 * 3];
        for r in 0..reps {
            let counts = simulate_with_sizes(&spec, policy, &sizes, substream_seed(77, &[r as u64]));
            let mut k = 0;
            for l in 0..2 {
                for t in 0..spec.horizon {
                    for i in 0..3 {
                        for p in 0..spec.graph.out_degree(i) {
                            freq_sum[k + p] +=
                                counts.k_edge[l][t][i][p] as f64 / sizes[l] as f64;
                        }
                        k += 3;
                    }
                }
            }
        }
        let mut k = 0;
        for l in 0..2 {
            for t in 0..spec.horizon {
                for i in 0..3 {
                    for p in 0..spec.graph.out_degree(i) {
                        let expect = densities.at(l, t)[i] * policy.q[l][t][i][p];
                        let mean = freq_sum[k + p] / reps as f64;
                        let sigma =
                            (expect * (1.0 - expect) / (sizes[l] as f64 * reps as f64)).sqrt();
                        assert!(
                            (mean - expect).abs() <= 4.0 * sigma + 1e-12,
                            "cell (l={l},t={t},i={i},p={p}): mean {mean} expect {expect}"
                        );
                    }
                    k += 3;
                }
            }
        }
    }

    #[test]
    fn single_node_report_is_exact() {
        let graph = TrafficGraph::new(1, vec![vec![0]]);
        let travel_cost = tensor::edge_tensor(1, 2, &graph, |_, _, _, _| 1.0);
        let spec = GameSpec {
            reference_policy: tensor::uniform_reference(2, &graph),
            graph,
            horizon: 2,
            team_count: 1,
            travel_cost,
            interaction: vec![vec![2.0]],
            initial_density: vec![vec![1.0]],
            population_ratios: vec![1.0],
        };
        let policy = PolicyProfile::from_reference(&spec);
        let report = estimate_expected_tax(&spec, &policy, 50, 5, 3);
        assert_eq!(report.convergence_error, 0.0);
        for cell in &report.cells {
            assert_eq!(cell.empirical, Some(0.0));
            assert_eq!(cell.limit, 0.0);
            assert_eq!(cell.samples, 5);
        }
    }

    #[test]
    fn expected_tax_report_is_bit_reproducible() {
        let spec = scenario::three_node_demo::<f64>();
        let artifacts = crate::solver::solve(&spec).unwrap();
        let a = estimate_expected_tax(&spec, &artifacts.policy, 300, 10, 99);
        let b = estimate_expected_tax(&spec, &artifacts.policy, 300, 10, 99);
        assert_eq!(a, b);
    }

    #[test]
    fn epsilon_zero_without_route_choice() {
        let graph = TrafficGraph::new(2, vec![vec![1], vec![0]]);
        let travel_cost = tensor::edge_tensor(1, 2, &graph, |_, _, _, _| 1.0);
        let spec = GameSpec {
            reference_policy: tensor::uniform_reference(2, &graph),
            graph,
            horizon: 2,
            team_count: 1,
            travel_cost,
            interaction: vec![vec![1.0]],
            initial_density: vec![vec![1.0, 0.0]],
            population_ratios: vec![1.0],
        };
        let eps = estimate_epsilon(&spec, 20, 4, 5).unwrap();
        assert_eq!(eps[0].epsilon, 0.0);
        assert_eq!(eps[0].std_error, 0.0);
    }

    #[test]
    fn epsilon_estimates_are_reproducible() {
        let spec = scenario::three_node_demo::<f64>();
        let a = estimate_epsilon(&spec, 120, 6, 2024).unwrap();
        let b = estimate_epsilon(&spec, 120, 6, 2024).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn node_counts_concentrate_like_binomials() {
        // K[m][t][i]/N_m should sit within 3 binomial sigmas of the
        // mean-field density in (nearly) all cells across 100 seeds
        let spec = scenario::three_node_demo::<f64>();
        let artifacts = crate::solver::solve(&spec).unwrap();
        let densities = propagate(&spec, &artifacts.policy);
        let n: u64 = 10_000;
        let sizes = team_sizes(n, &spec.population_ratios);
        let mut total_cells = 0u32;
        let mut inside = 0u32;
        for seed in 0..100u64 {
            let counts = simulate_with_sizes(&spec, &artifacts.policy, &sizes, seed);
            for m in 0..2 {
                for t in 0..=spec.horizon {
                    for i in 0..3 {
                        let p = densities.at(m, t)[i];
                        let bound = 3.0 * (p * (1.0 - p) / sizes[m] as f64).sqrt();
                        let freq = counts.k_node[m][t][i] as f64 / sizes[m] as f64;
                        total_cells += 1;
                        if (freq - p).abs() <= bound {
                            inside += 1;
                        }
                    }
                }
            }
        }
        let fraction = inside as f64 / total_cells as f64;
        assert!(fraction >= 0.99, "only {fraction} of cells inside 3 sigma");
    }

    #[test]
    fn lone_driver_epsilon_matches_exhaustive_path_search() {
        // with one driver total (L=1, N=1) the charge field is her own
        // self-inclusive reference deviation, so the deviation gain is the
        // gap between the equilibrium policy's expected cost and the best
        // deterministic path, both computable exactly
        let spec = scenario::three_node_demo::<f64>();
        let mut spec = spec;
        spec.team_count = 1;
        spec.travel_cost.truncate(1);
        spec.interaction = vec![vec![3.0]];
        spec.initial_density = vec![vec![1.0, 0.0, 0.0]];
        spec.population_ratios = vec![1.0];
        assert!(spec.validate().is_empty());

        let a = spec.interaction[0][0];
        let field = |t: usize, i: usize, p: usize| -a * spec.reference_policy[t][i][p].ln();

        // exhaustive search over deterministic paths from node 0
        let mut best = f64::INFINITY;
        for p0 in 0..spec.graph.out_degree(0) {
            let mid = spec.graph.succ(0)[p0];
            for p1 in 0..spec.graph.out_degree(mid) {
                let cost = spec.travel_cost[0][0][0][p0]
                    + field(0, 0, p0)
                    + spec.travel_cost[0][1][mid][p1]
                    + field(1, mid, p1);
                best = best.min(cost);
            }
        }
        let artifacts = crate::solver::solve(&spec).unwrap();
        let densities = propagate(&spec, &artifacts.policy);
        let mut stay = 0.0;
        for t in 0..spec.horizon {
            for i in 0..3 {
                for p in 0..spec.graph.out_degree(i) {
                    stay += densities.at(0, t)[i]
                        * artifacts.policy.q[0][t][i][p]
                        * (spec.travel_cost[0][t][i][p] + field(t, i, p));
                }
            }
        }
        let expected = (stay - best).max(0.0);

        let eps = estimate_epsilon(&spec, 1, 3, 4242).unwrap();
        assert!(eps[0].epsilon >= 0.0);
        assert!(
            (eps[0].epsilon - expected).abs() < 1e-12,
            "estimated {} vs enumerated {expected}",
            eps[0].epsilon
        );
        assert!(eps[0].std_error < 1e-12);
    }

    #[test]
    fn random_policies_are_stochastic_and_distinct() {
        let spec = scenario::three_node_demo::<f64>();
        let a = random_feasible_policy(&spec, 1);
        let b = random_feasible_policy(&spec, 2);
        assert!(a.violations(&spec).is_empty());
        assert_ne!(a, b);
        assert_eq!(a, random_feasible_policy(&spec, 1));
    }
}
