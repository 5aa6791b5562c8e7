//! Cell adjacency graphs and adjacency degrees.
//!
//! Two cells are neighbours when they share a grid boundary: `a` is left of
//! `b` when `a.end_col + 1 == b.start_col` and their row ranges intersect,
//! and above `b` when `a.end_row + 1 == b.start_row` and their column ranges
//! intersect. A spanning cell gets one edge per distinct neighbour.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::table::{check_grid_disjoint, Cell};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Direction {
    /// Left/right neighbours.
    Horizontal,
    /// Top/bottom neighbours.
    Vertical,
}

impl Direction {
    pub fn as_str(&self) -> &'static str {
        match self {
            Direction::Horizontal => "horizontal",
            Direction::Vertical => "vertical",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AdjacencyGraph {
    nodes: BTreeSet<u32>,
    /// Keyed by `(min id, max id)`.
    edges: BTreeMap<(u32, u32), Direction>,
}

impl AdjacencyGraph {
    pub fn nodes(&self) -> &BTreeSet<u32> {
        &self.nodes
    }

    pub fn edges(&self) -> impl Iterator<Item = (u32, u32, Direction)> + '_ {
        self.edges.iter().map(|(&(a, b), &d)| (a, b, d))
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn has_edge(&self, a: u32, b: u32) -> bool {
        self.edges.contains_key(&(a.min(b), a.max(b)))
    }

    /// Number of incident edges.
    pub fn degree(&self, cell_id: u32) -> Result<usize> {
        if !self.nodes.contains(&cell_id) {
            return Err(Error::NotFound(format!(
                "cell {cell_id} is not in the graph"
            )));
        }
        Ok(self
            .edges
            .keys()
            .filter(|(a, b)| *a == cell_id || *b == cell_id)
            .count())
    }

    /// Degree of every node in one pass.
    pub fn degrees(&self) -> BTreeMap<u32, usize> {
        let mut out: BTreeMap<u32, usize> = self.nodes.iter().map(|&n| (n, 0)).collect();
        for &(a, b) in self.edges.keys() {
            *out.get_mut(&a).expect("edge endpoint is a node") += 1;
            *out.get_mut(&b).expect("edge endpoint is a node") += 1;
        }
        out
    }

    /// Average degree, `2 |E| / |V|`.
    pub fn mean_degree(&self) -> Result<f64> {
        if self.nodes.is_empty() {
            return Err(Error::InvalidInput("mean degree of an empty graph".into()));
        }
        Ok(2.0 * self.edges.len() as f64 / self.nodes.len() as f64)
    }

    /// One `id_a id_b direction` line per edge, sorted.
    pub fn to_edge_list(&self) -> String {
        let mut s = String::new();
        for (a, b, d) in self.edges() {
            let _ = writeln!(s, "{a} {b} {}", d.as_str());
        }
        s
    }
}

pub fn build_adjacency(cells: &[Cell]) -> Result<AdjacencyGraph> {
    check_grid_disjoint(cells).map_err(|ids| Error::Validation {
        message: "overlapping grid rectangles".into(),
        ids,
    })?;
    let nodes: BTreeSet<u32> = cells.iter().map(|c| c.id).collect();
    if nodes.len() != cells.len() {
        return Err(Error::validation("duplicate cell ids"));
    }
    let mut edges = BTreeMap::new();
    for a in cells {
        for b in cells {
            let (ga, gb) = (&a.grid, &b.grid);
            let dir = if ga.end_col + 1 == gb.start_col && ga.rows_overlap(gb) {
                Direction::Horizontal
            } else if ga.end_row + 1 == gb.start_row && ga.cols_overlap(gb) {
                Direction::Vertical
            } else {
                continue;
            };
            edges.insert((a.id.min(b.id), a.id.max(b.id)), dir);
        }
    }
    Ok(AdjacencyGraph { nodes, edges })
}
