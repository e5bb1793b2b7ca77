//! Masked uniform grids and discrete `L²(Ω)` geometry.
//!
//! Every domain is covered by an `nx × ny` lattice of nodes. Nodes strictly
//! inside the open domain are unknowns (`Interior`); lattice neighbours of
//! interior nodes that are not themselves interior carry the homogeneous
//! Dirichlet value (`DirichletBoundary`); everything else is `Exterior`.
//!
//! Two node placements are used:
//!
//! * boundary-fitted (`Rectangle`, `Interval`): the outermost lattice lines lie
//!   exactly on the boundary, `h = L / (n - 1)`;
//! * immersed (`UnitDisk`, `LShape`): the lattice covers the bounding box padded
//!   by half a cell, `h = 2R / (n - 2)`, so grid-aligned boundaries fall midway
//!   between node rows and each interior node is the centre of a cell that
//!   tiles the domain (staircase approximation).
//!
//! Quadrature is the midpoint rule: each interior node carries the full cell
//! measure `hx·hy` (or `hx` in one dimension).

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::region::Region;

/// Quadrant of `[-1,1]²` removed to form the L-shape.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Quadrant {
    UpperRight,
    UpperLeft,
    LowerLeft,
    #[default]
    LowerRight,
}

impl Quadrant {
    /// True if `p` lies in the closed removed quadrant.
    fn covers(self, p: [f64; 2]) -> bool {
        let (x, y) = (p[0], p[1]);
        match self {
            Quadrant::UpperRight => x >= 0.0 && y >= 0.0,
            Quadrant::UpperLeft => x <= 0.0 && y >= 0.0,
            Quadrant::LowerLeft => x <= 0.0 && y <= 0.0,
            Quadrant::LowerRight => x >= 0.0 && y <= 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum DomainSpec {
    /// Disk of the given radius (the unit disk for `radius = 1`).
    UnitDisk {
        center: [f64; 2],
        radius: f64,
    },
    /// `[-1,1]²` minus one closed quadrant.
    LShape {
        removed: Quadrant,
    },
    Rectangle {
        min: [f64; 2],
        max: [f64; 2],
    },
    /// One-dimensional segment; used for small dense surrogate problems.
    Interval {
        min: f64,
        max: f64,
    },
}

impl DomainSpec {
    pub fn unit_disk() -> Self {
        DomainSpec::UnitDisk {
            center: [0.0, 0.0],
            radius: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            DomainSpec::UnitDisk { radius, center } => {
                if !(radius > 0.0 && radius.is_finite()) {
                    return Err(Error::InvalidDomain(format!(
                        "disk radius {radius} must be positive"
                    )));
                }
                if !(center[0].is_finite() && center[1].is_finite()) {
                    return Err(Error::InvalidDomain("disk center must be finite".into()));
                }
            }
            DomainSpec::LShape { .. } => {}
            DomainSpec::Rectangle { min, max } => {
                if !(min[0] < max[0] && min[1] < max[1]) {
                    return Err(Error::InvalidDomain(format!(
                        "rectangle min {min:?} must be below max {max:?} componentwise"
                    )));
                }
            }
            DomainSpec::Interval { min, max } => {
                if !(min < max) {
                    return Err(Error::InvalidDomain(format!(
                        "interval [{min}, {max}] is empty"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Exact measure of the continuous domain.
    pub fn measure(&self) -> f64 {
        match *self {
            DomainSpec::UnitDisk { radius, .. } => std::f64::consts::PI * radius * radius,
            DomainSpec::LShape { .. } => 3.0,
            DomainSpec::Rectangle { min, max } => (max[0] - min[0]) * (max[1] - min[1]),
            DomainSpec::Interval { min, max } => max - min,
        }
    }

    pub fn dimension(&self) -> usize {
        match self {
            DomainSpec::Interval { .. } => 1,
            _ => 2,
        }
    }

    /// Strict membership in the open domain (immersed shapes only).
    fn contains_open(&self, p: [f64; 2]) -> bool {
        match *self {
            DomainSpec::UnitDisk { center, radius } => {
                let dx = p[0] - center[0];
                let dy = p[1] - center[1];
                dx * dx + dy * dy < radius * radius
            }
            DomainSpec::LShape { removed } => {
                p[0].abs() < 1.0 && p[1].abs() < 1.0 && !removed.covers(p)
            }
            // Boundary-fitted shapes are classified by lattice index.
            DomainSpec::Rectangle { min, max } => {
                p[0] > min[0] && p[0] < max[0] && p[1] > min[1] && p[1] < max[1]
            }
            DomainSpec::Interval { min, max } => p[0] > min && p[0] < max,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NodeKind {
    Interior,
    DirichletBoundary,
    Exterior,
}

/// Five-point (three-point in 1-D) stencil of `-Δ_h`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) struct Stencil {
    pub diag: f64,
    /// Coefficients for the neighbour slots `[x-, x+, y-, y+]`.
    pub off: [f64; 4],
}

#[derive(Clone, Debug, PartialEq)]
pub struct Grid {
    domain: DomainSpec,
    nx: usize,
    ny: usize,
    xs: Vec<f64>,
    ys: Vec<f64>,
    spacing: [f64; 2],
    mask: Vec<NodeKind>,
    node_to_interior: Vec<Option<usize>>,
    interior_nodes: Vec<(usize, usize)>,
    neighbors: Vec<[Option<usize>; 4]>,
    quad_weight: Vec<f64>,
    stencil: Stencil,
}

/// Build the masked grid for `spec` with `n` nodes per axis.
pub fn build_grid(spec: &DomainSpec, n: usize) -> Result<Arc<Grid>> {
    spec.validate()?;
    if n < 3 {
        return Err(Error::InvalidParameter(format!(
            "need at least 3 nodes per axis, got {n}"
        )));
    }

    let fitted = |lo: f64, hi: f64| -> Vec<f64> {
        (0..n)
            .map(|i| {
                if i == n - 1 {
                    hi
                } else {
                    lo + (hi - lo) * i as f64 / (n - 1) as f64
                }
            })
            .collect()
    };
    // Symmetric about `c`; the middle node (odd n) is exactly `c`.
    let immersed = |c: f64, r: f64| -> Vec<f64> {
        let m = (n - 1) as f64;
        (0..n)
            .map(|i| c + (2.0 * i as f64 - m) / (n - 2) as f64 * r)
            .collect()
    };

    let (xs, ys, by_index) = match *spec {
        DomainSpec::UnitDisk { center, radius } => (
            immersed(center[0], radius),
            immersed(center[1], radius),
            false,
        ),
        DomainSpec::LShape { .. } => (immersed(0.0, 1.0), immersed(0.0, 1.0), false),
        DomainSpec::Rectangle { min, max } => {
            (fitted(min[0], max[0]), fitted(min[1], max[1]), true)
        }
        DomainSpec::Interval { min, max } => (fitted(min, max), vec![0.0], true),
    };
    let nx = xs.len();
    let ny = ys.len();
    let spacing = [
        (xs[nx - 1] - xs[0]) / (nx - 1) as f64,
        if ny > 1 {
            (ys[ny - 1] - ys[0]) / (ny - 1) as f64
        } else {
            f64::INFINITY
        },
    ];

    let inside = |i: usize, j: usize| -> bool {
        if by_index {
            let x_ok = i > 0 && i < nx - 1;
            let y_ok = ny == 1 || (j > 0 && j < ny - 1);
            x_ok && y_ok
        } else {
            spec.contains_open([xs[i], ys[j]])
        }
    };

    let mut node_to_interior = vec![None; nx * ny];
    let mut interior_nodes = Vec::new();
    for j in 0..ny {
        for i in 0..nx {
            if inside(i, j) {
                node_to_interior[i + nx * j] = Some(interior_nodes.len());
                interior_nodes.push((i, j));
            }
        }
    }
    if interior_nodes.is_empty() {
        return Err(Error::NoInteriorNodes);
    }

    let mut mask = vec![NodeKind::Exterior; nx * ny];
    let mut neighbors = Vec::with_capacity(interior_nodes.len());
    for &(i, j) in &interior_nodes {
        mask[i + nx * j] = NodeKind::Interior;
        let mut slots = [None; 4];
        let candidates = [
            (i.checked_sub(1), Some(j)),
            (Some(i + 1).filter(|&v| v < nx), Some(j)),
            (Some(i), j.checked_sub(1)),
            (Some(i), Some(j + 1).filter(|&v| v < ny)),
        ];
        for (slot, cand) in slots.iter_mut().zip(candidates) {
            if let (Some(a), Some(b)) = cand {
                let id = a + nx * b;
                *slot = node_to_interior[id];
                if slot.is_none() {
                    mask[id] = NodeKind::DirichletBoundary;
                }
            }
        }
        neighbors.push(slots);
    }

    let (cell, stencil) = if ny == 1 {
        let hx2 = spacing[0] * spacing[0];
        (
            spacing[0],
            Stencil {
                diag: 2.0 / hx2,
                off: [-1.0 / hx2, -1.0 / hx2, 0.0, 0.0],
            },
        )
    } else {
        let hx2 = spacing[0] * spacing[0];
        let hy2 = spacing[1] * spacing[1];
        (
            spacing[0] * spacing[1],
            Stencil {
                diag: 2.0 / hx2 + 2.0 / hy2,
                off: [-1.0 / hx2, -1.0 / hx2, -1.0 / hy2, -1.0 / hy2],
            },
        )
    };
    let quad_weight = vec![cell; interior_nodes.len()];

    Ok(Arc::new(Grid {
        domain: spec.clone(),
        nx,
        ny,
        xs,
        ys,
        spacing,
        mask,
        node_to_interior,
        interior_nodes,
        neighbors,
        quad_weight,
        stencil,
    }))
}

impl Grid {
    pub fn domain(&self) -> &DomainSpec {
        &self.domain
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    /// Number of interior unknowns `N`.
    pub fn len(&self) -> usize {
        self.interior_nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.interior_nodes.is_empty()
    }

    /// Lattice spacing per axis (`[hx, ∞]` in one dimension).
    pub fn spacing(&self) -> [f64; 2] {
        self.spacing
    }

    /// Mesh size: the largest finite lattice spacing.
    pub fn h(&self) -> f64 {
        if self.ny == 1 {
            self.spacing[0]
        } else {
            self.spacing[0].max(self.spacing[1])
        }
    }

    pub fn node_kind(&self, i: usize, j: usize) -> NodeKind {
        self.mask[i + self.nx * j]
    }

    pub fn node_coords(&self, i: usize, j: usize) -> [f64; 2] {
        [self.xs[i], self.ys[j]]
    }

    pub fn interior_index(&self, i: usize, j: usize) -> Option<usize> {
        if i >= self.nx || j >= self.ny {
            return None;
        }
        self.node_to_interior[i + self.nx * j]
    }

    /// Lattice position of interior unknown `k`.
    pub fn interior_node(&self, k: usize) -> (usize, usize) {
        self.interior_nodes[k]
    }

    pub fn coords(&self, k: usize) -> [f64; 2] {
        let (i, j) = self.interior_nodes[k];
        [self.xs[i], self.ys[j]]
    }

    pub fn quad_weight(&self, k: usize) -> f64 {
        self.quad_weight[k]
    }

    pub fn quad_weights(&self) -> &[f64] {
        &self.quad_weight
    }

    /// Discrete measure of the domain, `Σ quad_weight`.
    pub fn measure(&self) -> f64 {
        self.quad_weight.iter().sum()
    }

    /// Interior neighbours in slots `[x-, x+, y-, y+]`; `None` is a Dirichlet
    /// node (or no neighbour along that axis in 1-D).
    pub fn neighbors(&self, k: usize) -> &[Option<usize>; 4] {
        &self.neighbors[k]
    }

    pub(crate) fn stencil(&self) -> Stencil {
        self.stencil
    }

    /// Interior unknowns whose node lies in `region`.
    pub fn region_nodes(&self, region: &Region) -> Vec<usize> {
        (0..self.len())
            .filter(|&k| region.contains(self.coords(k)))
            .collect()
    }
}

/// Nodal scalar function on the interior nodes of a grid.
#[derive(Clone, Debug)]
pub struct Field {
    grid: Arc<Grid>,
    values: Vec<f64>,
}

fn same_grid(a: &Arc<Grid>, b: &Arc<Grid>) -> bool {
    Arc::ptr_eq(a, b) || **a == **b
}

impl Field {
    pub fn zeros(grid: &Arc<Grid>) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn constant(grid: &Arc<Grid>, value: f64) -> Self {
        Field {
            grid: Arc::clone(grid),
            values: vec![value; grid.len()],
        }
    }

    pub fn from_values(grid: &Arc<Grid>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::LengthMismatch {
                expected: grid.len(),
                got: values.len(),
            });
        }
        Ok(Field {
            grid: Arc::clone(grid),
            values,
        })
    }

    /// Samples `f` at every interior node.
    pub fn from_fn(grid: &Arc<Grid>, f: impl Fn([f64; 2]) -> f64) -> Self {
        let values = (0..grid.len()).map(|k| f(grid.coords(k))).collect();
        Field {
            grid: Arc::clone(grid),
            values,
        }
    }

    /// Characteristic function of `region`.
    pub fn indicator(grid: &Arc<Grid>, region: &Region) -> Self {
        Self::from_fn(grid, |p| if region.contains(p) { 1.0 } else { 0.0 })
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn ensure_same_grid(&self, other: &Field) -> Result<()> {
        if same_grid(&self.grid, &other.grid) {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }

    pub fn inner(&self, other: &Field) -> Result<f64> {
        inner_product(self, other)
    }

    /// `L²(Ω)` norm.
    pub fn norm(&self) -> f64 {
        self.values
            .iter()
            .zip(self.grid.quad_weights())
            .map(|(v, w)| w * v * v)
            .sum::<f64>()
            .sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `self += a·x`.
    pub fn axpy(&mut self, a: f64, x: &Field) -> Result<()> {
        self.ensure_same_grid(x)?;
        for (s, v) in self.values.iter_mut().zip(&x.values) {
            *s += a * v;
        }
        Ok(())
    }

    pub fn scale(&mut self, a: f64) {
        self.values.iter_mut().for_each(|v| *v *= a);
    }

    pub fn scaled(&self, a: f64) -> Field {
        let mut out = self.clone();
        out.scale(a);
        out
    }

    /// `a·x + b·y`.
    pub fn lin_comb(a: f64, x: &Field, b: f64, y: &Field) -> Result<Field> {
        x.ensure_same_grid(y)?;
        let values = x
            .values
            .iter()
            .zip(&y.values)
            .map(|(u, v)| a * u + b * v)
            .collect();
        Ok(Field {
            grid: Arc::clone(&x.grid),
            values,
        })
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Field {
        Field {
            grid: Arc::clone(&self.grid),
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }
}

/// Discrete `L²(Ω)` inner product `Σ_i quad_weight_i · u_i · v_i`.
pub fn inner_product(u: &Field, v: &Field) -> Result<f64> {
    u.ensure_same_grid(v)?;
    Ok(u.values
        .iter()
        .zip(&v.values)
        .zip(u.grid.quad_weights())
        .map(|((a, b), w)| w * a * b)
        .sum())
}
