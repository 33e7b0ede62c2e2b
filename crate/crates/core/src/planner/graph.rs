//! Equilateral triangular waypoint lattice.
//!
//! Rows run along +x and are stacked along +y ("north") with spacing
//! `pitch·√3/2`; odd rows are shifted east by half a pitch. Nodes are
//! numbered row-major from the south-west corner and the lattice is centred
//! in the extent.

use crate::error::{Error, Result};
use crate::grf::Extent;
use serde::{Deserialize, Serialize};

/// The six lattice directions, counter-clockwise from east.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    East,
    NorthEast,
    NorthWest,
    West,
    SouthWest,
    SouthEast,
}

impl Direction {
    pub const ALL: [Direction; 6] = [
        Direction::East,
        Direction::NorthEast,
        Direction::NorthWest,
        Direction::West,
        Direction::SouthWest,
        Direction::SouthEast,
    ];

    /// Heading in degrees, counter-clockwise from east.
    pub fn degrees(self) -> f64 {
        60.0 * Self::ALL.iter().position(|d| *d == self).unwrap() as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaypointGraph {
    pub pitch: f64,
    pub rows: usize,
    pub cols: usize,
    pub nodes: Vec<[f64; 2]>,
    /// Neighbor lists in ascending node order.
    pub adjacency: Vec<Vec<usize>>,
}

/// Builds the lattice with the given pitch inside `extent`.
pub fn build_graph(extent: &Extent, pitch: f64) -> Result<WaypointGraph> {
    if !(pitch > 0.0 && pitch.is_finite()) {
        return Err(Error::DegenerateExtent(format!("pitch {pitch}")));
    }
    let (w, h) = (extent.width(), extent.height());
    if !(w > 0.0 && h > 0.0) {
        return Err(Error::DegenerateExtent(format!("{extent:?}")));
    }
    let row_step = pitch * 3f64.sqrt() / 2.0;
    // Every row (shifted or not) must fit, hence the half-pitch allowance.
    let span = w / pitch - 0.5;
    if span < 0.0 {
        return Err(Error::DegenerateExtent(format!("pitch {pitch} wider than extent {w}")));
    }
    let cols = span.floor() as usize + 1;
    let rows = (h / row_step).floor() as usize + 1;
    let x0 = extent.x_min + (w - (cols as f64 - 0.5) * pitch) / 2.0;
    let y0 = extent.y_min + (h - (rows as f64 - 1.0) * row_step) / 2.0;

    let mut nodes = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        let shift = if r % 2 == 1 { 0.5 * pitch } else { 0.0 };
        for c in 0..cols {
            nodes.push([x0 + shift + c as f64 * pitch, y0 + r as f64 * row_step]);
        }
    }
    let mut graph = WaypointGraph {
        pitch,
        rows,
        cols,
        nodes,
        adjacency: Vec::new(),
    };
    graph.adjacency = (0..graph.len())
        .map(|i| {
            let mut nb: Vec<usize> = Direction::ALL.iter().filter_map(|&d| graph.neighbor(i, d)).collect();
            nb.sort_unstable();
            nb
        })
        .collect();
    Ok(graph)
}

impl WaypointGraph {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn position(&self, node: usize) -> [f64; 2] {
        self.nodes[node]
    }

    pub fn neighbors(&self, node: usize) -> &[usize] {
        &self.adjacency[node]
    }

    /// Row and column of a node.
    pub fn cell(&self, node: usize) -> (usize, usize) {
        (node / self.cols, node % self.cols)
    }

    /// The neighbor in direction `d`, if it exists.
    pub fn neighbor(&self, node: usize, d: Direction) -> Option<usize> {
        let (r, c) = self.cell(node);
        let (r, c) = (r as isize, c as isize);
        let odd = r % 2 == 1;
        // Column offsets into the adjacent rows depend on the row's shift.
        let (left, right) = if odd { (0, 1) } else { (-1, 0) };
        let (nr, nc) = match d {
            Direction::East => (r, c + 1),
            Direction::West => (r, c - 1),
            Direction::NorthEast => (r + 1, c + right),
            Direction::NorthWest => (r + 1, c + left),
            Direction::SouthEast => (r - 1, c + right),
            Direction::SouthWest => (r - 1, c + left),
        };
        if nr < 0 || nc < 0 || nr >= self.rows as isize || nc >= self.cols as isize {
            return None;
        }
        Some(nr as usize * self.cols + nc as usize)
    }

    /// Direction of the edge `from → to`, if they are adjacent.
    pub fn direction(&self, from: usize, to: usize) -> Option<Direction> {
        Direction::ALL.into_iter().find(|&d| self.neighbor(from, d) == Some(to))
    }

    pub fn check_node(&self, node: usize) -> Result<()> {
        if node >= self.len() {
            return Err(Error::Config(format!(
                "node {node} outside the waypoint graph of {} nodes",
                self.len()
            )));
        }
        Ok(())
    }
}
