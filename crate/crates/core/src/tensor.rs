//! Nested-`Vec` tensor aliases and small constructors.
//!
//! Successor lists are ragged, so flat strided arrays buy little here; the
//! nested layout keeps indices readable: `[team][time][node][succ position]`.

use crate::graph::TrafficGraph;
use crate::scalar::Scalar;

pub type Tensor2<T> = Vec<Vec<T>>;
pub type Tensor3<T> = Vec<Vec<Vec<T>>>;
pub type Tensor4<T> = Vec<Vec<Vec<Vec<T>>>>;

/// `[time][node][pos]` tensor filled by `f(t, i, pos)`.
pub fn node_edge_tensor<T, F>(horizon: usize, graph: &TrafficGraph, mut f: F) -> Tensor3<T>
where
    F: FnMut(usize, usize, usize) -> T,
{
    (0..horizon)
        .map(|t| {
            (0..graph.node_count)
                .map(|i| (0..graph.out_degree(i)).map(|p| f(t, i, p)).collect())
                .collect()
        })
        .collect()
}

/// `[team][time][node][pos]` tensor filled by `f(l, t, i, pos)`.
pub fn edge_tensor<T, F>(teams: usize, horizon: usize, graph: &TrafficGraph, mut f: F) -> Tensor4<T>
where
    F: FnMut(usize, usize, usize, usize) -> T,
{
    (0..teams)
        .map(|l| node_edge_tensor(horizon, graph, |t, i, p| f(l, t, i, p)))
        .collect()
}

/// Uniform reference policy over each successor list.
pub fn uniform_reference<T: Scalar>(horizon: usize, graph: &TrafficGraph) -> Tensor3<T> {
    node_edge_tensor(horizon, graph, |_, i, _| {
        T::one() / T::from_usize(graph.out_degree(i)).unwrap()
    })
}
