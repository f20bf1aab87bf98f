//! Topological environment graphs: viewpoint positions, adjacency,
//! geodesic distances, and trajectory validation.

use std::collections::BTreeMap;
use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};

/// 3-D viewpoint position in meters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Position {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Position {
    pub fn distance(&self, other: &Position) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        let dz = self.z - other.z;
        (dx * dx + dy * dy + dz * dz).sqrt()
    }
}

/// Undirected viewpoint graph for one scan. Edge weights are the Euclidean
/// distances between endpoint positions; the graph is immutable after load.
#[derive(Debug, Clone)]
pub struct EnvironmentGraph {
    scan: String,
    nodes: BTreeMap<String, Position>,
    adjacency: BTreeMap<String, Vec<String>>,
}

/// Single-source shortest-path distances. Unreachable viewpoints are absent.
#[derive(Debug, Clone)]
pub struct GeodesicTable {
    pub source: String,
    pub distances: BTreeMap<String, f64>,
}

impl GeodesicTable {
    pub fn get(&self, target: &str) -> Option<f64> {
        self.distances.get(target).copied()
    }
}

#[derive(Deserialize)]
struct GraphFile {
    scan: String,
    nodes: Vec<NodeRecord>,
    edges: Vec<(String, String)>,
}

#[derive(Deserialize)]
struct NodeRecord {
    id: String,
    x: f64,
    y: f64,
    z: f64,
}

impl EnvironmentGraph {
    pub fn new(
        scan: impl Into<String>,
        nodes: Vec<(String, Position)>,
        edges: Vec<(String, String)>,
    ) -> Result<Self> {
        let scan = scan.into();
        let mut node_map = BTreeMap::new();
        for (id, pos) in nodes {
            if ![pos.x, pos.y, pos.z].iter().all(|c| c.is_finite()) {
                return Err(Error::Invalid(format!(
                    "scan `{scan}`: node `{id}`: coordinates must be finite"
                )));
            }
            if node_map.insert(id.clone(), pos).is_some() {
                return Err(Error::DuplicateNode { scan, id });
            }
        }
        let mut adjacency: BTreeMap<String, Vec<String>> =
            node_map.keys().map(|id| (id.clone(), Vec::new())).collect();
        for (a, b) in edges {
            for endpoint in [&a, &b] {
                if !node_map.contains_key(endpoint) {
                    return Err(Error::DanglingEdge {
                        scan,
                        a: a.clone(),
                        b: b.clone(),
                        missing: endpoint.clone(),
                    });
                }
            }
            adjacency.get_mut(&a).unwrap().push(b.clone());
            adjacency.get_mut(&b).unwrap().push(a.clone());
        }
        for neighbors in adjacency.values_mut() {
            neighbors.sort();
            neighbors.dedup();
        }
        Ok(Self {
            scan,
            nodes: node_map,
            adjacency,
        })
    }

    pub fn scan(&self) -> &str {
        &self.scan
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn node_ids(&self) -> impl Iterator<Item = &str> {
        self.nodes.keys().map(String::as_str)
    }

    pub fn position(&self, id: &str) -> Result<Position> {
        self.nodes
            .get(id)
            .copied()
            .ok_or_else(|| Error::UnknownViewpoint(id.to_string()))
    }

    pub fn has_edge(&self, a: &str, b: &str) -> bool {
        self.adjacency
            .get(a)
            .map(|ns| ns.iter().any(|n| n == b))
            .unwrap_or(false)
    }

    /// Euclidean length of the edge {a, b}.
    pub fn edge_length(&self, a: &str, b: &str) -> Result<f64> {
        if !self.has_edge(a, b) {
            return Err(Error::NotAdjacent {
                from: a.to_string(),
                to: b.to_string(),
            });
        }
        Ok(self.position(a)?.distance(&self.position(b)?))
    }
}

/// Loads a graph file: `{"scan", "nodes": [{"id","x","y","z"}], "edges": [[a,b],...]}`.
pub fn load_graph(path: impl AsRef<Path>) -> Result<EnvironmentGraph> {
    let path = path.as_ref();
    let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let file: GraphFile = serde_json::from_str(&raw).map_err(|e| Error::parse(path, e))?;
    EnvironmentGraph::new(
        file.scan,
        file.nodes
            .into_iter()
            .map(|n| {
                (
                    n.id,
                    Position {
                        x: n.x,
                        y: n.y,
                        z: n.z,
                    },
                )
            })
            .collect(),
        file.edges,
    )
}

/// Min-heap entry; distances are finite and non-negative, so the
/// total order below never sees NaN.
struct HeapEntry(f64, String);

impl PartialEq for HeapEntry {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == std::cmp::Ordering::Equal
    }
}
impl Eq for HeapEntry {}
impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        // Reversed on distance for a min-heap; node id breaks ties so pop
        // order (and therefore float rounding) is deterministic.
        other
            .0
            .partial_cmp(&self.0)
            .unwrap()
            .then_with(|| other.1.cmp(&self.1))
    }
}

/// Exact single-source shortest paths (Dijkstra) over Euclidean edge weights.
pub fn geodesic(graph: &EnvironmentGraph, source: &str) -> Result<GeodesicTable> {
    if !graph.nodes.contains_key(source) {
        return Err(Error::UnknownViewpoint(source.to_string()));
    }
    let mut distances: BTreeMap<String, f64> = BTreeMap::new();
    let mut heap = std::collections::BinaryHeap::new();
    distances.insert(source.to_string(), 0.0);
    heap.push(HeapEntry(0.0, source.to_string()));
    while let Some(HeapEntry(dist, node)) = heap.pop() {
        if dist > distances[&node] {
            continue;
        }
        for neighbor in &graph.adjacency[&node] {
            let next = dist + graph.nodes[&node].distance(&graph.nodes[neighbor]);
            let better = distances
                .get(neighbor)
                .map(|&cur| next < cur)
                .unwrap_or(true);
            if better {
                distances.insert(neighbor.clone(), next);
                heap.push(HeapEntry(next, neighbor.clone()));
            }
        }
    }
    Ok(GeodesicTable {
        source: source.to_string(),
        distances,
    })
}

/// Checks that every viewpoint exists and every consecutive pair is an edge.
pub fn validate_trajectory(graph: &EnvironmentGraph, path: &[String]) -> Result<()> {
    if path.len() < 2 {
        return Err(Error::PathTooShort);
    }
    for id in path {
        if !graph.nodes.contains_key(id) {
            return Err(Error::UnknownViewpoint(id.clone()));
        }
    }
    for pair in path.windows(2) {
        if !graph.has_edge(&pair[0], &pair[1]) {
            return Err(Error::NotAdjacent {
                from: pair[0].clone(),
                to: pair[1].clone(),
            });
        }
    }
    Ok(())
}

/// Sum of Euclidean edge lengths along a valid trajectory.
pub fn path_length(graph: &EnvironmentGraph, path: &[String]) -> Result<f64> {
    validate_trajectory(graph, path)?;
    let mut total = 0.0;
    for pair in path.windows(2) {
        total += graph.nodes[&pair[0]].distance(&graph.nodes[&pair[1]]);
    }
    Ok(total)
}

/// Memoized geodesic tables for one graph. Lookups exploit symmetry on the
/// undirected graph, so either endpoint's table can answer.
pub struct GeodesicCache<'g> {
    graph: &'g EnvironmentGraph,
    tables: BTreeMap<String, GeodesicTable>,
}

impl<'g> GeodesicCache<'g> {
    pub fn new(graph: &'g EnvironmentGraph) -> Self {
        Self {
            graph,
            tables: BTreeMap::new(),
        }
    }

    pub fn table(&mut self, source: &str) -> Result<&GeodesicTable> {
        if !self.tables.contains_key(source) {
            let table = geodesic(self.graph, source)?;
            self.tables.insert(source.to_string(), table);
        }
        Ok(&self.tables[source])
    }

    /// Geodesic distance, erroring on unreachable pairs.
    pub fn distance(&mut self, from: &str, to: &str) -> Result<f64> {
        if let Some(table) = self.tables.get(to) {
            return table.get(from).ok_or_else(|| Error::Unreachable {
                from: from.to_string(),
                to: to.to_string(),
            });
        }
        self.table(from)?.get(to).ok_or_else(|| Error::Unreachable {
            from: from.to_string(),
            to: to.to_string(),
        })
    }
}
