//! Instance builders and file loading: grid worlds with obstacles, the
//! JSON game-spec format, and small demo instances.

use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::TrafficGraph;
use crate::policy::PolicyProfile;
use crate::scalar::{Scalar, Tolerances};
use crate::spec::{GameSpec, Violation};
use crate::tensor::{self, Tensor3, Tensor4};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("ParseError: {0}")]
    Parse(String),
    #[error("ValidationError: {}", format_violations(.0))]
    Validation(Vec<Violation>),
    #[error("InvalidGrid: {0}")]
    InvalidGrid(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

fn format_violations(v: &[Violation]) -> String {
    v.iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}

/// Grid cell as `(x, y)`, with `x` growing east and `y` growing north.
pub type Cell = (usize, usize);

/// Rectangular grid world with obstacle cells and one origin/destination
/// pair per team.
///
/// Two cost conventions are supported. The default prunes moves into
/// obstacles or off the board from the admissible sets. With
/// `literal_costs`, every cell keeps its full compass-plus-stay action set:
/// obstacle cells stay in the graph, off-board moves collapse into a single
/// absorbing sink node, and both are priced at `penalty_cost` instead of
/// being pruned.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Scalar", deserialize = "T: Scalar"))]
pub struct GridWorld<T> {
    pub width: usize,
    pub height: usize,
    #[serde(default)]
    pub obstacles: Vec<Cell>,
    pub origins: Vec<Cell>,
    pub destinations: Vec<Cell>,
    #[serde(default = "default_penalty")]
    pub penalty_cost: T,
    #[serde(default = "default_step")]
    pub step_cost: T,
    #[serde(default = "default_terminal_weight")]
    pub terminal_weight: T,
    #[serde(default)]
    pub literal_costs: bool,
}

fn default_penalty<T: Scalar>() -> T {
    T::c(100_000.0)
}
fn default_step<T: Scalar>() -> T {
    T::one()
}
fn default_terminal_weight<T: Scalar>() -> T {
    T::c(10.0)
}

/// What a graph node of a grid-built spec stands for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridNode {
    Cell { x: usize, y: usize },
    /// Absorbing off-board node, present only under `literal_costs`.
    Sink,
}

impl<T: Scalar> GridWorld<T> {
    pub fn new(width: usize, height: usize, origins: Vec<Cell>, destinations: Vec<Cell>) -> Self {
        GridWorld {
            width,
            height,
            obstacles: Vec::new(),
            origins,
            destinations,
            penalty_cost: default_penalty(),
            step_cost: default_step(),
            terminal_weight: default_terminal_weight(),
            literal_costs: false,
        }
    }

    pub fn team_count(&self) -> usize {
        self.origins.len()
    }

    fn obstacle_set(&self) -> HashSet<Cell> {
        self.obstacles.iter().copied().collect()
    }

    fn on_board(&self, c: Cell) -> bool {
        c.0 < self.width && c.1 < self.height
    }

    /// North, east, south, west neighbors that stay on the board.
    fn compass(&self, (x, y): Cell) -> [Option<Cell>; 4] {
        [
            (y + 1 < self.height).then_some((x, y + 1)),
            (x + 1 < self.width).then_some((x + 1, y)),
            y.checked_sub(1).map(|v| (x, v)),
            x.checked_sub(1).map(|v| (v, y)),
        ]
    }

    fn check(&self) -> Result<(), ScenarioError> {
        if self.width == 0 || self.height == 0 {
            return Err(ScenarioError::InvalidGrid("empty board".into()));
        }
        if self.origins.is_empty() || self.origins.len() != self.destinations.len() {
            return Err(ScenarioError::InvalidGrid(
                "need one origin and one destination per team".into(),
            ));
        }
        let obstacles = self.obstacle_set();
        for (kind, cells) in [("origin", &self.origins), ("destination", &self.destinations)] {
            for &c in cells.iter() {
                if !self.on_board(c) {
                    return Err(ScenarioError::InvalidGrid(format!(
                        "{kind} {c:?} is off the board"
                    )));
                }
                if obstacles.contains(&c) {
                    return Err(ScenarioError::InvalidGrid(format!(
                        "{kind} {c:?} is an obstacle"
                    )));
                }
            }
        }
        for &c in &self.obstacles {
            if !self.on_board(c) {
                return Err(ScenarioError::InvalidGrid(format!(
                    "obstacle {c:?} is off the board"
                )));
            }
        }
        Ok(())
    }

    /// Node-to-cell layout of the graph [`build_grid_spec`] constructs.
    pub fn node_layout(&self) -> Vec<GridNode> {
        let obstacles = self.obstacle_set();
        let mut nodes = Vec::new();
        for y in 0..self.height {
            for x in 0..self.width {
                if self.literal_costs || !obstacles.contains(&(x, y)) {
                    nodes.push(GridNode::Cell { x, y });
                }
            }
        }
        if self.literal_costs {
            nodes.push(GridNode::Sink);
        }
        nodes
    }
}

/// Manhattan distance between two cells.
pub fn manhattan(a: Cell, b: Cell) -> usize {
    a.0.abs_diff(b.0) + a.1.abs_diff(b.1)
}

/// Build a full game spec from a grid description.
///
/// Staying put is free until the final stage; moving costs `step_cost`; at
/// the final stage every move additionally pays
/// `terminal_weight * sqrt(manhattan(j, destination))` for where it lands.
/// The reference policy is uniform over each admissible set and every team
/// starts as a point mass on its origin.
pub fn build_grid_spec<T: Scalar>(
    grid: &GridWorld<T>,
    horizon: usize,
    interaction: Vec<Vec<T>>,
) -> Result<GameSpec<T>, ScenarioError> {
    grid.check()?;
    if horizon == 0 {
        return Err(ScenarioError::InvalidGrid("horizon must be positive".into()));
    }
    let team_count = grid.team_count();
    if interaction.len() != team_count || interaction.iter().any(|r| r.len() != team_count) {
        return Err(ScenarioError::InvalidGrid(format!(
            "interaction matrix must be {team_count}x{team_count}"
        )));
    }

    let layout = grid.node_layout();
    let obstacles = grid.obstacle_set();
    let node_of: std::collections::HashMap<Cell, usize> = layout
        .iter()
        .enumerate()
        .filter_map(|(n, g)| match g {
            GridNode::Cell { x, y } => Some(((*x, *y), n)),
            GridNode::Sink => None,
        })
        .collect();
    let sink = grid.literal_costs.then(|| layout.len() - 1);

    let mut successors: Vec<Vec<usize>> = Vec::with_capacity(layout.len());
    for g in &layout {
        match *g {
            GridNode::Cell { x, y } => {
                let mut succ = vec![node_of[&(x, y)]];
                for neighbor in grid.compass((x, y)).into_iter() {
                    let target = match neighbor {
                        Some(c) if grid.literal_costs => Some(node_of[&c]),
                        Some(c) if !obstacles.contains(&c) => Some(node_of[&c]),
                        Some(_) => None,
                        None => sink,
                    };
                    if let Some(n) = target {
                        if !succ.contains(&n) {
                            succ.push(n);
                        }
                    }
                }
                successors.push(succ);
            }
            GridNode::Sink => successors.push(vec![sink.unwrap()]),
        }
    }
    let graph = TrafficGraph::new(layout.len(), successors);

    // Terminal landing penalty; the sink counts as farther than any cell.
    let terminal = |node: usize, dest: Cell| -> T {
        let d = match layout[node] {
            GridNode::Cell { x, y } => manhattan((x, y), dest),
            GridNode::Sink => grid.width + grid.height,
        };
        grid.terminal_weight * T::from_usize(d).unwrap().sqrt()
    };
    let is_penalized = |node: usize| -> bool {
        match layout[node] {
            GridNode::Cell { x, y } => obstacles.contains(&(x, y)),
            GridNode::Sink => true,
        }
    };

    let travel_cost = tensor::edge_tensor(team_count, horizon, &graph, |l, t, i, p| {
        let j = graph.succ(i)[p];
        let base = if is_penalized(j) {
            grid.penalty_cost
        } else if j == i {
            T::zero()
        } else {
            grid.step_cost
        };
        if t + 1 == horizon {
            base + terminal(j, grid.destinations[l])
        } else {
            base
        }
    });

    let reference_policy = tensor::uniform_reference(horizon, &graph);
    let initial_density = grid
        .origins
        .iter()
        .map(|&c| {
            let mut row = vec![T::zero(); graph.node_count];
            row[node_of[&c]] = T::one();
            row
        })
        .collect();
    let ratio = T::one() / T::from_usize(team_count).unwrap();

    Ok(GameSpec {
        graph,
        horizon,
        team_count,
        travel_cost,
        reference_policy,
        interaction,
        initial_density,
        population_ratios: vec![ratio; team_count],
    })
}

// ---------------------------------------------------------------------------
// JSON formats

/// On-disk game spec. `travel_cost` is either the dense
/// `[team][time][node][successor]` tensor or `{default, overrides}` with
/// overrides addressed by successor node (optionally wildcarded over teams
/// and times). `reference_policy` is `"uniform"` or a dense
/// `[time][node][successor]` tensor. `population_ratios` defaults to an even
/// split.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
#[serde(bound(serialize = "T: Scalar", deserialize = "T: Scalar"))]
struct SpecFile<T> {
    nodes: usize,
    successors: Vec<Vec<usize>>,
    horizon: usize,
    teams: usize,
    travel_cost: CostSpec<T>,
    reference_policy: ReferenceSpec<T>,
    interaction: Vec<Vec<T>>,
    initial_density: Vec<Vec<T>>,
    #[serde(default)]
    population_ratios: Option<Vec<T>>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(untagged)]
#[serde(bound(serialize = "T: Scalar", deserialize = "T: Scalar"))]
enum CostSpec<T> {
    Dense(Tensor4<T>),
    Sparse {
        default: T,
        #[serde(default)]
        overrides: Vec<CostOverride<T>>,
    },
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Scalar", deserialize = "T: Scalar"))]
struct CostOverride<T> {
    /// Team index; omitted means every team.
    #[serde(default)]
    team: Option<usize>,
    /// Time index; omitted means every stage.
    #[serde(default)]
    t: Option<usize>,
    node: usize,
    to: usize,
    cost: T,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(untagged)]
#[serde(bound(serialize = "T: Scalar", deserialize = "T: Scalar"))]
enum ReferenceSpec<T> {
    Named(String),
    Dense(Tensor3<T>),
}

fn clamp_small_negatives<T: Scalar>(v: &mut T, tol: T) {
    if *v < T::zero() && *v >= -tol {
        *v = T::zero();
    }
}

fn spec_from_file<T: Scalar>(file: SpecFile<T>) -> Result<GameSpec<T>, ScenarioError> {
    let graph = TrafficGraph::new(file.nodes, file.successors);
    let graph_issues = graph.violations();
    if !graph_issues.is_empty() {
        return Err(ScenarioError::Validation(graph_issues));
    }
    let travel_cost = match file.travel_cost {
        CostSpec::Dense(t) => t,
        CostSpec::Sparse { default, overrides } => {
            let mut dense =
                tensor::edge_tensor(file.teams, file.horizon, &graph, |_, _, _, _| default);
            for o in overrides {
                let pos = graph.position_of(o.node, o.to).ok_or_else(|| {
                    ScenarioError::Parse(format!(
                        "travel_cost override: {} is not a successor of {}",
                        o.to, o.node
                    ))
                })?;
                let teams: Vec<usize> = match o.team {
                    Some(l) if l < file.teams => vec![l],
                    Some(l) => {
                        return Err(ScenarioError::Parse(format!(
                            "travel_cost override: team {l} out of range"
                        )))
                    }
                    None => (0..file.teams).collect(),
                };
                let times: Vec<usize> = match o.t {
                    Some(t) if t < file.horizon => vec![t],
                    Some(t) => {
                        return Err(ScenarioError::Parse(format!(
                            "travel_cost override: t {t} out of range"
                        )))
                    }
                    None => (0..file.horizon).collect(),
                };
                for &l in &teams {
                    for &t in &times {
                        dense[l][t][o.node][pos] = o.cost;
                    }
                }
            }
            dense
        }
    };
    let reference_policy = match file.reference_policy {
        ReferenceSpec::Named(name) if name == "uniform" => {
            tensor::uniform_reference(file.horizon, &graph)
        }
        ReferenceSpec::Named(name) => {
            return Err(ScenarioError::Parse(format!(
                "reference_policy: unknown shorthand {name:?} (expected \"uniform\")"
            )))
        }
        ReferenceSpec::Dense(t) => t,
    };
    let population_ratios = file.population_ratios.unwrap_or_else(|| {
        vec![T::one() / T::from_usize(file.teams).unwrap(); file.teams]
    });

    let tol = Tolerances::<T>::default();
    let mut spec = GameSpec {
        graph,
        horizon: file.horizon,
        team_count: file.teams,
        travel_cost,
        reference_policy,
        interaction: file.interaction,
        initial_density: file.initial_density,
        population_ratios,
    };
    for row in spec.initial_density.iter_mut() {
        for v in row.iter_mut() {
            clamp_small_negatives(v, tol.nonneg);
        }
    }
    let violations = spec.validate();
    if violations.is_empty() {
        Ok(spec)
    } else {
        Err(ScenarioError::Validation(violations))
    }
}

fn read_to_string(path: &Path) -> Result<String, ScenarioError> {
    std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Load and validate a game spec from its JSON file format.
pub fn load_spec<T: Scalar>(path: &Path) -> Result<GameSpec<T>, ScenarioError> {
    let text = read_to_string(path)?;
    let file: SpecFile<T> =
        serde_json::from_str(&text).map_err(|e| ScenarioError::Parse(e.to_string()))?;
    spec_from_file(file)
}

/// Write a spec in the same JSON format `load_spec` reads (dense tensors).
pub fn save_spec<T: Scalar>(path: &Path, spec: &GameSpec<T>) -> Result<(), ScenarioError> {
    let file = SpecFile {
        nodes: spec.graph.node_count,
        successors: spec.graph.successors.clone(),
        horizon: spec.horizon,
        teams: spec.team_count,
        travel_cost: CostSpec::Dense(spec.travel_cost.clone()),
        reference_policy: ReferenceSpec::Dense(spec.reference_policy.clone()),
        interaction: spec.interaction.clone(),
        initial_density: spec.initial_density.clone(),
        population_ratios: Some(spec.population_ratios.clone()),
    };
    let text = serde_json::to_string_pretty(&file).expect("spec serialization cannot fail");
    std::fs::write(path, text).map_err(|source| ScenarioError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Load a grid scenario file (`width`/`height`/`obstacles`/`origins`/
/// `destinations` plus `horizon` and `interaction`) and build its spec.
/// `literal_override` forces the cost convention regardless of the file.
pub fn load_grid_scenario<T: Scalar>(
    path: &Path,
    literal_override: Option<bool>,
) -> Result<GameSpec<T>, ScenarioError> {
    let text = read_to_string(path)?;
    let file: GridScenarioFile<T> =
        serde_json::from_str(&text).map_err(|e| ScenarioError::Parse(e.to_string()))?;
    let mut grid = file.grid;
    if let Some(literal) = literal_override {
        grid.literal_costs = literal;
    }
    let spec = build_grid_spec(&grid, file.horizon, file.interaction)?;
    let violations = spec.validate();
    if violations.is_empty() {
        Ok(spec)
    } else {
        Err(ScenarioError::Validation(violations))
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Scalar", deserialize = "T: Scalar"))]
struct GridScenarioFile<T> {
    #[serde(flatten)]
    grid: GridWorld<T>,
    horizon: usize,
    interaction: Vec<Vec<T>>,
}

/// Detect whether `path` holds a grid scenario (has `width`) or a raw game
/// spec, and load accordingly.
pub fn load_spec_auto<T: Scalar>(
    path: &Path,
    literal_override: Option<bool>,
) -> Result<GameSpec<T>, ScenarioError> {
    let text = read_to_string(path)?;
    let value: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| ScenarioError::Parse(e.to_string()))?;
    if value.get("width").is_some() {
        load_grid_scenario(path, literal_override)
    } else {
        load_spec(path)
    }
}

/// Load a policy profile (`{"q": [team][time][node][successor]}`) and check
/// it against the spec.
pub fn load_policy<T: Scalar>(
    path: &Path,
    spec: &GameSpec<T>,
) -> Result<PolicyProfile<T>, ScenarioError> {
    let text = read_to_string(path)?;
    let mut policy: PolicyProfile<T> =
        serde_json::from_str(&text).map_err(|e| ScenarioError::Parse(e.to_string()))?;
    let tol = Tolerances::<T>::default();
    for per_t in policy.q.iter_mut() {
        for per_i in per_t.iter_mut() {
            for row in per_i.iter_mut() {
                for v in row.iter_mut() {
                    clamp_small_negatives(v, tol.nonneg);
                }
            }
        }
    }
    let violations = policy.violations(spec);
    if violations.is_empty() {
        Ok(policy)
    } else {
        Err(ScenarioError::Validation(violations))
    }
}

/// Load a JSON array of interaction matrices.
pub fn load_interaction_list<T: Scalar>(path: &Path) -> Result<Vec<Vec<Vec<T>>>, ScenarioError> {
    let text = read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| ScenarioError::Parse(e.to_string()))
}

/// Small fixed instance used across tests and examples: a 3-node line with
/// self-loops, two teams with distinct costs, two stages, and the
/// diagonally dominant interaction matrix `[[3,2],[2,3]]`.
pub fn three_node_demo<T: Scalar>() -> GameSpec<T> {
    let graph = TrafficGraph::new(3, vec![vec![0, 1], vec![0, 1, 2], vec![1, 2]]);
    let costs: [[[&[f64]; 3]; 2]; 2] = [
        [
            [&[0.0, 1.0], &[1.0, 0.0, 1.0], &[1.0, 0.0]],
            [&[1.0, 0.0], &[0.0, 1.0, 1.0], &[0.0, 1.0]],
        ],
        [
            [&[1.0, 0.0], &[0.0, 1.0, 0.0], &[0.0, 1.0]],
            [&[0.0, 1.0], &[1.0, 0.0, 0.0], &[1.0, 0.0]],
        ],
    ];
    let travel_cost =
        tensor::edge_tensor(2, 2, &graph, |l, t, i, p| T::c(costs[l][t][i][p]));
    let reference_policy = tensor::uniform_reference(2, &graph);
    let third = T::one() / T::c(3.0);
    GameSpec {
        graph,
        horizon: 2,
        team_count: 2,
        travel_cost,
        reference_policy,
        interaction: vec![
            vec![T::c(3.0), T::c(2.0)],
            vec![T::c(2.0), T::c(3.0)],
        ],
        initial_density: vec![vec![third; 3]; 2],
        population_ratios: vec![T::c(0.5); 2],
    }
}
