//! Uniform cell-centered grids on intervals and boxes, fields of nodal
//! values, ball-shaped node sets and midpoint quadrature.
//!
//! Nodes sit at cell centers, never on the box boundary, so the zero
//! extension starts immediately outside the box: the exterior of the box is
//! identified with the region where every function is extended by zero.

use crate::error::{Error, Result};

/// Minimum total node count; below this no experiment is meaningful.
const MIN_TOTAL_NODES: usize = 8;

/// A uniform cell-centered grid on an interval (dim 1) or a box (dim 2).
///
/// Node ordering is lexicographic by axis: in 2D the node with multi-index
/// `(ix, iy)` has flat index `ix * n + iy`. Two grids built from equal
/// parameters produce identical node coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    dim: usize,
    lower: [f64; 2],
    upper: [f64; 2],
    nodes_per_axis: usize,
    h: f64,
}

impl Grid {
    /// Cell-centered interval grid on `(lower, upper)` with `n` nodes.
    pub fn interval(lower: f64, upper: f64, n: usize) -> Result<Self> {
        build_grid(&[(lower, upper)], n)
    }

    /// Cell-centered box grid with `n` nodes per axis; axis lengths must match.
    pub fn rectangle(x: (f64, f64), y: (f64, f64), n: usize) -> Result<Self> {
        build_grid(&[x, y], n)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nodes_per_axis(&self) -> usize {
        self.nodes_per_axis
    }

    pub fn node_count(&self) -> usize {
        self.nodes_per_axis.pow(self.dim as u32)
    }

    /// Grid spacing, identical on both axes.
    pub fn spacing(&self) -> f64 {
        self.h
    }

    /// Cell volume `h^n`; the midpoint quadrature weight of one node.
    pub fn cell_volume(&self) -> f64 {
        self.h.powi(self.dim as i32)
    }

    pub fn lower(&self) -> [f64; 2] {
        self.lower
    }

    pub fn upper(&self) -> [f64; 2] {
        self.upper
    }

    /// Coordinates of node `i`. The second component is 0 in dimension 1.
    pub fn coord(&self, i: usize) -> [f64; 2] {
        match self.dim {
            1 => [self.lower[0] + (i as f64 + 0.5) * self.h, 0.0],
            _ => {
                let ix = i / self.nodes_per_axis;
                let iy = i % self.nodes_per_axis;
                [
                    self.lower[0] + (ix as f64 + 0.5) * self.h,
                    self.lower[1] + (iy as f64 + 0.5) * self.h,
                ]
            }
        }
    }

    /// Multi-index of node `i` (second component 0 in dimension 1).
    pub fn multi_index(&self, i: usize) -> [usize; 2] {
        match self.dim {
            1 => [i, 0],
            _ => [i / self.nodes_per_axis, i % self.nodes_per_axis],
        }
    }

    /// Total measure of the box.
    pub fn volume(&self) -> f64 {
        (0..self.dim)
            .map(|a| self.upper[a] - self.lower[a])
            .product()
    }

    /// Domain width along the first axis (used for dyadic radius ladders).
    pub fn width(&self) -> f64 {
        self.upper[0] - self.lower[0]
    }
}

/// Builds a uniform cell-centered grid. `bounds` holds one `(lower, upper)`
/// pair per axis; the dimension is `bounds.len()`.
pub fn build_grid(bounds: &[(f64, f64)], nodes_per_axis: usize) -> Result<Grid> {
    let dim = bounds.len();
    assert!(dim == 1 || dim == 2, "only dimensions 1 and 2 are supported");
    for &(lo, hi) in bounds {
        if hi <= lo || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::DegenerateBounds { lower: lo, upper: hi });
        }
    }
    if nodes_per_axis.pow(dim as u32) < MIN_TOTAL_NODES {
        return Err(Error::TooFewNodes {
            min: MIN_TOTAL_NODES,
            got: nodes_per_axis.pow(dim as u32),
        });
    }
    let len_x = bounds[0].1 - bounds[0].0;
    if dim == 2 {
        let len_y = bounds[1].1 - bounds[1].0;
        if (len_x - len_y).abs() > 1e-12 * len_x.max(len_y) {
            return Err(Error::UnequalAxes { len_x, len_y });
        }
    }
    let mut lower = [0.0; 2];
    let mut upper = [0.0; 2];
    for (a, &(lo, hi)) in bounds.iter().enumerate() {
        lower[a] = lo;
        upper[a] = hi;
    }
    Ok(Grid {
        dim,
        lower,
        upper,
        nodes_per_axis,
        h: len_x / nodes_per_axis as f64,
    })
}

/// Real values on the grid nodes, implicitly extended by zero outside the box.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    grid: Grid,
    values: Vec<f64>,
}

impl Field {
    /// Wraps a value vector, checking length and finiteness.
    pub fn new(grid: &Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.node_count() {
            return Err(Error::FieldLength {
                expected: grid.node_count(),
                got: values.len(),
            });
        }
        if let Some(node) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteField { node });
        }
        Ok(Field {
            grid: grid.clone(),
            values,
        })
    }

    pub fn zeros(grid: &Grid) -> Self {
        Field {
            grid: grid.clone(),
            values: vec![0.0; grid.node_count()],
        }
    }

    pub fn constant(grid: &Grid, c: f64) -> Self {
        Field {
            grid: grid.clone(),
            values: vec![c; grid.node_count()],
        }
    }

    /// Samples `f` at every node coordinate.
    pub fn from_fn(grid: &Grid, mut f: impl FnMut([f64; 2]) -> f64) -> Self {
        let values = (0..grid.node_count()).map(|i| f(grid.coord(i))).collect();
        Field {
            grid: grid.clone(),
            values,
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Applies `f` to every value, keeping the grid.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Field {
        Field {
            grid: self.grid.clone(),
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Combines two fields on the same grid value by value.
    pub fn zip(&self, other: &Field, f: impl Fn(f64, f64) -> f64) -> Result<Field> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch);
        }
        Ok(Field {
            grid: self.grid.clone(),
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn min(&self) -> f64 {
        self.values.iter().fold(f64::INFINITY, |m, &v| m.min(v))
    }

    pub fn max(&self) -> f64 {
        self.values.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v))
    }

    /// `L^2(Omega)` norm under midpoint quadrature.
    pub fn l2_norm(&self) -> f64 {
        (self.grid.cell_volume() * self.values.iter().map(|v| v * v).sum::<f64>()).sqrt()
    }

    /// Rescales so that the `L^2(Omega)` norm is 1. No-op on the zero field.
    pub fn l2_normalized(&self) -> Field {
        let n = self.l2_norm();
        if n == 0.0 {
            self.clone()
        } else {
            self.map(|v| v / n)
        }
    }
}

/// A subset of grid nodes, optionally remembering the generating ball.
#[derive(Debug, Clone)]
pub struct NodeSet {
    grid: Grid,
    indices: Vec<usize>,
    geometry: Option<([f64; 2], f64)>,
}

impl NodeSet {
    /// Every node of the grid; the geometry of the whole box is not a ball.
    pub fn whole_domain(grid: &Grid) -> Self {
        NodeSet {
            grid: grid.clone(),
            indices: (0..grid.node_count()).collect(),
            geometry: None,
        }
    }

    /// A set from explicit node indices (sorted, deduplicated, no geometry).
    pub fn from_indices(grid: &Grid, mut indices: Vec<usize>) -> Self {
        indices.sort_unstable();
        indices.dedup();
        indices.retain(|&i| i < grid.node_count());
        NodeSet {
            grid: grid.clone(),
            indices,
            geometry: None,
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// Generating `(center, radius)` when the set came from `ball_nodes`.
    pub fn geometry(&self) -> Option<([f64; 2], f64)> {
        self.geometry
    }

    /// Indicator field: 1 on the set, 0 elsewhere.
    pub fn indicator(&self) -> Field {
        let mut values = vec![0.0; self.grid.node_count()];
        for &i in &self.indices {
            values[i] = 1.0;
        }
        Field {
            grid: self.grid.clone(),
            values,
        }
    }

    pub fn contains(&self, node: usize) -> bool {
        self.indices.binary_search(&node).is_ok()
    }
}

/// Collects the nodes strictly inside the ball `B_r(x0)`.
///
/// The ball must sit inside the box with a margin of one spacing `h`, so that
/// restriction to the set is compatible with extension by zero.
pub fn ball_nodes(grid: &Grid, x0: [f64; 2], r: f64) -> Result<NodeSet> {
    let margin = grid.spacing();
    for a in 0..grid.dim() {
        if x0[a] - r < grid.lower()[a] + margin || x0[a] + r > grid.upper()[a] - margin {
            return Err(Error::BallNotContained { x0, r, margin });
        }
    }
    let indices: Vec<usize> = (0..grid.node_count())
        .filter(|&i| {
            let c = grid.coord(i);
            let mut d2 = 0.0;
            for a in 0..grid.dim() {
                d2 += (c[a] - x0[a]) * (c[a] - x0[a]);
            }
            d2.sqrt() < r
        })
        .collect();
    if indices.is_empty() {
        return Err(Error::EmptyBall { x0, r });
    }
    Ok(NodeSet {
        grid: grid.clone(),
        indices,
        geometry: Some((x0, r)),
    })
}

/// Midpoint quadrature of a field over the box: `h^n * sum(values)`.
/// Exact for constants.
pub fn integrate(field: &Field) -> f64 {
    field.grid().cell_volume() * field.values().iter().sum::<f64>()
}
