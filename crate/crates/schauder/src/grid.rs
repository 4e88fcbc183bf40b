//! Domains, structured grids, distance/curvature fields and finite-difference
//! derivative stencils.
//!
//! All other modules act on [`Grid`]/[`GridFunction`]. Grids are uniform
//! Cartesian lattices over the domain's bounding box with a per-node
//! classification mask (interior / boundary / exterior); curved boundaries are
//! handled by the mask plus closed-form distance functions, never by
//! body-fitted meshes. Ball and annulus additionally support a 1-D radial
//! mode with geometric grading toward the boundary, used by the blow-up
//! solver where the finest cells must reach d ~ 1e-3 * r0.

use crate::config::ConfigSection;
use crate::error::{Error, Result};
use std::sync::Arc;

pub const TAU: f64 = std::f64::consts::TAU;

/// Domain shape selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DomainKind {
    Rectangle,
    Torus,
    Ball,
    Annulus,
    Strip,
}

/// Geometric description of a computational domain.
///
/// * rectangle: `(0, sides[0]) x ... x (0, sides[n-1])`
/// * torus: periodic box of the given side lengths (no boundary)
/// * ball: |x| < r0, centered at the origin
/// * annulus: r_in < |x| < r_out
/// * strip: 0 < T < theta with one tangential coordinate Y, periodic of
///   period 2*theta (the half-space model chart; T plays the role of the
///   distance to the flat boundary T = 0)
#[derive(Debug, Clone, PartialEq)]
pub struct DomainSpec {
    pub kind: DomainKind,
    /// Ambient dimension. For the strip this is the dimension carried by the
    /// degenerate model operators, while the grid itself is always 2-D (Y, T).
    pub n: usize,
    pub sides: Vec<f64>,
    pub r0: f64,
    pub r_in: f64,
    pub r_out: f64,
    pub theta: f64,
}

impl DomainSpec {
    pub fn rectangle(sides: &[f64]) -> Result<Self> {
        if sides.is_empty() {
            return Err(Error::InvalidDomain(
                "rectangle needs at least one side".into(),
            ));
        }
        if sides.iter().any(|&s| !(s > 0.0)) {
            return Err(Error::InvalidDomain(format!(
                "nonpositive side in {sides:?}"
            )));
        }
        Ok(Self {
            kind: DomainKind::Rectangle,
            n: sides.len(),
            sides: sides.to_vec(),
            r0: 0.0,
            r_in: 0.0,
            r_out: 0.0,
            theta: 0.0,
        })
    }

    pub fn torus(sides: &[f64]) -> Result<Self> {
        let mut d = Self::rectangle(sides)?;
        d.kind = DomainKind::Torus;
        Ok(d)
    }

    pub fn ball(n: usize, r0: f64) -> Result<Self> {
        if n < 1 {
            return Err(Error::InvalidDomain("dimension must be >= 1".into()));
        }
        if !(r0 > 0.0) {
            return Err(Error::InvalidDomain(format!(
                "ball radius {r0} must be positive"
            )));
        }
        Ok(Self {
            kind: DomainKind::Ball,
            n,
            sides: vec![],
            r0,
            r_in: 0.0,
            r_out: 0.0,
            theta: 0.0,
        })
    }

    pub fn annulus(n: usize, r_in: f64, r_out: f64) -> Result<Self> {
        if n < 1 {
            return Err(Error::InvalidDomain("dimension must be >= 1".into()));
        }
        if !(r_in > 0.0) || !(r_out > r_in) {
            return Err(Error::InvalidDomain(format!(
                "annulus needs 0 < r_in < r_out, got ({r_in}, {r_out})"
            )));
        }
        Ok(Self {
            kind: DomainKind::Annulus,
            n,
            sides: vec![],
            r0: 0.0,
            r_in,
            r_out,
            theta: 0.0,
        })
    }

    pub fn strip(n: usize, theta: f64) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidDomain(
                "strip needs ambient dimension >= 2".into(),
            ));
        }
        if !(theta > 0.0) {
            return Err(Error::InvalidDomain(format!(
                "strip height {theta} must be positive"
            )));
        }
        Ok(Self {
            kind: DomainKind::Strip,
            n,
            sides: vec![],
            r0: 0.0,
            r_in: 0.0,
            r_out: 0.0,
            theta,
        })
    }

    pub fn has_boundary(&self) -> bool {
        self.kind != DomainKind::Torus
    }

    /// Bounding box as (origin, extents) per grid axis.
    fn bounding_box(&self) -> (Vec<f64>, Vec<f64>) {
        match self.kind {
            DomainKind::Rectangle | DomainKind::Torus => (vec![0.0; self.n], self.sides.clone()),
            DomainKind::Ball => (vec![-self.r0; self.n], vec![2.0 * self.r0; self.n]),
            DomainKind::Annulus => (vec![-self.r_out; self.n], vec![2.0 * self.r_out; self.n]),
            DomainKind::Strip => (vec![0.0, 0.0], vec![2.0 * self.theta, self.theta]),
        }
    }

    /// Distance from `x` to the domain boundary (closed form).
    pub fn boundary_distance(&self, x: &[f64]) -> Result<f64> {
        match self.kind {
            DomainKind::Torus => Err(Error::NoBoundary),
            DomainKind::Rectangle => {
                // Distance to the boundary of the box, valid inside and out.
                let mut inside = true;
                let mut d_in = f64::INFINITY;
                let mut d_out2 = 0.0;
                for (xi, s) in x.iter().zip(&self.sides) {
                    d_in = d_in.min(xi.min(s - xi));
                    if *xi < 0.0 {
                        d_out2 += xi * xi;
                        inside = false;
                    } else if xi > s {
                        d_out2 += (xi - s) * (xi - s);
                        inside = false;
                    }
                }
                Ok(if inside { d_in } else { d_out2.sqrt() })
            }
            DomainKind::Ball => {
                let r = norm(x);
                Ok((self.r0 - r).abs())
            }
            DomainKind::Annulus => {
                let r = norm(x);
                Ok((r - self.r_in).abs().min((self.r_out - r).abs()))
            }
            DomainKind::Strip => Ok(x[1].abs()),
        }
    }

    fn contains(&self, x: &[f64]) -> bool {
        match self.kind {
            DomainKind::Torus => true,
            DomainKind::Rectangle => x
                .iter()
                .zip(&self.sides)
                .all(|(xi, s)| *xi > 0.0 && *xi < *s),
            DomainKind::Ball => norm(x) < self.r0,
            DomainKind::Annulus => {
                let r = norm(x);
                r > self.r_in && r < self.r_out
            }
            DomainKind::Strip => x[1] > 0.0 && x[1] < self.theta,
        }
    }

    /// Parse from a key-value config section. Recognized keys: kind, n, r0,
    /// r_in, r_out, theta, sides.
    pub fn from_config(sec: &ConfigSection) -> Result<Self> {
        let kind = sec.require_str("kind")?;
        match kind {
            "rectangle" => Self::rectangle(&sec.require_f64_list("sides")?),
            "torus" => Self::torus(&sec.require_f64_list("sides")?),
            "ball" => Self::ball(sec.require_usize("n")?, sec.require_f64("r0")?),
            "annulus" => Self::annulus(
                sec.require_usize("n")?,
                sec.require_f64("r_in")?,
                sec.require_f64("r_out")?,
            ),
            "strip" => Self::strip(sec.usize_or("n", 2)?, sec.require_f64("theta")?),
            other => Err(Error::InvalidDomain(format!(
                "unknown domain kind '{other}'"
            ))),
        }
    }

    /// Emit the config text block for this domain.
    pub fn to_config(&self) -> String {
        match self.kind {
            DomainKind::Rectangle | DomainKind::Torus => {
                let kind = if self.kind == DomainKind::Rectangle {
                    "rectangle"
                } else {
                    "torus"
                };
                let sides: Vec<String> = self.sides.iter().map(|s| format!("{s}")).collect();
                format!("kind = {kind}\nsides = {}\n", sides.join(", "))
            }
            DomainKind::Ball => format!("kind = ball\nn = {}\nr0 = {}\n", self.n, self.r0),
            DomainKind::Annulus => format!(
                "kind = annulus\nn = {}\nr_in = {}\nr_out = {}\n",
                self.n, self.r_in, self.r_out
            ),
            DomainKind::Strip => format!("kind = strip\nn = {}\ntheta = {}\n", self.n, self.theta),
        }
    }
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Per-node classification.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeClass {
    Interior,
    Boundary,
    Exterior,
}

#[derive(Debug, Clone)]
enum GridKind {
    Cartesian {
        shape: Vec<usize>,
        spacing: Vec<f64>,
        periodic: Vec<bool>,
        strides: Vec<usize>,
    },
    /// 1-D radial reduction for ball/annulus; radii strictly increasing,
    /// possibly graded.
    Radial { radii: Vec<f64> },
}

/// Structured sampling of a domain.
#[derive(Debug, Clone)]
pub struct Grid {
    pub domain: DomainSpec,
    kind: GridKind,
    class: Vec<NodeClass>,
    coords: Vec<f64>,
    dim: usize,
}

/// Build a uniform Cartesian grid over the domain's bounding box with
/// `resolution` nodes per axis, classifying each node against the domain
/// indicator.
pub fn build_grid(domain: &DomainSpec, resolution: usize) -> Result<Grid> {
    if resolution < 4 {
        return Err(Error::InvalidArgument(format!(
            "resolution {resolution} < 4 nodes per axis"
        )));
    }
    match domain.kind {
        DomainKind::Strip => Grid::strip(domain, resolution, (resolution / 4).max(8) + 1),
        DomainKind::Ball | DomainKind::Annulus => {
            // Curved domains place nodes at cell centers: no node needs to
            // sit on the wall (classification handles it) and midpoint
            // quadrature over node cells becomes exact bookkeeping. One pad
            // cell per side keeps the stencils of interior nodes near the
            // bounding box inside the lattice.
            let (mut origin, mut extent) = domain.bounding_box();
            let dim = origin.len();
            let h = extent[0] / resolution as f64;
            for a in 0..dim {
                origin[a] -= h;
                extent[a] += 2.0 * h;
            }
            let shape = vec![resolution + 2; dim];
            Grid::cartesian_with(
                domain.clone(),
                shape,
                origin,
                extent,
                vec![false; dim],
                true,
            )
        }
        _ => {
            let (origin, extent) = domain.bounding_box();
            let dim = origin.len();
            let periodic = vec![domain.kind == DomainKind::Torus; dim];
            let shape = vec![resolution; dim];
            Grid::cartesian_with(domain.clone(), shape, origin, extent, periodic, false)
        }
    }
}

impl Grid {
    fn cartesian(
        domain: DomainSpec,
        shape: Vec<usize>,
        origin: Vec<f64>,
        extent: Vec<f64>,
        periodic: Vec<bool>,
    ) -> Result<Grid> {
        Grid::cartesian_with(domain, shape, origin, extent, periodic, false)
    }

    fn cartesian_with(
        domain: DomainSpec,
        shape: Vec<usize>,
        origin: Vec<f64>,
        extent: Vec<f64>,
        periodic: Vec<bool>,
        cell_centered: bool,
    ) -> Result<Grid> {
        let dim = shape.len();
        let mut origin = origin;
        let mut spacing = Vec::with_capacity(dim);
        for a in 0..dim {
            // Periodic axes do not duplicate the seam node; cell-centered
            // axes shift in by half a cell.
            let cells = if periodic[a] || cell_centered {
                shape[a]
            } else {
                shape[a] - 1
            };
            let h = extent[a] / cells as f64;
            if cell_centered {
                origin[a] += 0.5 * h;
            }
            spacing.push(h);
        }
        let mut strides = vec![1usize; dim];
        for a in (0..dim.saturating_sub(1)).rev() {
            strides[a] = strides[a + 1] * shape[a + 1];
        }
        let count: usize = shape.iter().product();
        let mut coords = Vec::with_capacity(count * dim);
        let mut idx = vec![0usize; dim];
        for _ in 0..count {
            for a in 0..dim {
                coords.push(origin[a] + idx[a] as f64 * spacing[a]);
            }
            // odometer increment, last axis fastest
            for a in (0..dim).rev() {
                idx[a] += 1;
                if idx[a] < shape[a] {
                    break;
                }
                idx[a] = 0;
            }
        }
        let mut grid = Grid {
            domain,
            kind: GridKind::Cartesian {
                shape,
                spacing,
                periodic,
                strides,
            },
            class: vec![NodeClass::Exterior; count],
            coords,
            dim,
        };
        grid.classify();
        Ok(grid)
    }

    /// Strip grid with explicit tangential/normal resolutions. Y is periodic
    /// with period 2*theta; T runs over [0, theta] inclusive.
    pub fn strip(domain: &DomainSpec, n_y: usize, n_t: usize) -> Result<Grid> {
        if domain.kind != DomainKind::Strip {
            return Err(Error::Unsupported(
                "strip grid requires a strip domain".into(),
            ));
        }
        if n_y < 4 || n_t < 4 {
            return Err(Error::InvalidArgument(
                "strip grid needs >= 4 nodes per axis".into(),
            ));
        }
        Grid::cartesian(
            domain.clone(),
            vec![n_y, n_t],
            vec![0.0, 0.0],
            vec![2.0 * domain.theta, domain.theta],
            vec![true, false],
        )
    }

    /// Uniform 1-D radial grid for ball/annulus.
    pub fn radial_uniform(domain: &DomainSpec, nodes: usize) -> Result<Grid> {
        let (lo, hi) = radial_range(domain)?;
        if nodes < 4 {
            return Err(Error::InvalidArgument(
                "radial grid needs >= 4 nodes".into(),
            ));
        }
        let h = (hi - lo) / (nodes - 1) as f64;
        let radii: Vec<f64> = (0..nodes).map(|i| lo + i as f64 * h).collect();
        Grid::radial_from_radii(domain.clone(), radii)
    }

    /// Graded 1-D radial grid: cell sizes grow geometrically (factor
    /// 1/ratio per cell) from `h_boundary` at each blow-up boundary up to
    /// `h_interior` away from it. For the ball only the outer boundary is
    /// refined; for the annulus both components are.
    pub fn radial_graded(
        domain: &DomainSpec,
        h_interior: f64,
        h_boundary: f64,
        ratio: f64,
    ) -> Result<Grid> {
        if !(h_boundary > 0.0) || !(h_interior >= h_boundary) || !(ratio > 0.0 && ratio < 1.0) {
            return Err(Error::InvalidArgument(
                "graded grid needs 0 < h_boundary <= h_interior and ratio in (0,1)".into(),
            ));
        }
        let (lo, hi) = radial_range(domain)?;
        let len = hi - lo;
        // Distances from the refined end(s), geometric until h_interior.
        let ladder = |limit: f64| -> Vec<f64> {
            let mut out = vec![0.0];
            let mut h = h_boundary;
            let mut d = 0.0;
            while d < limit {
                d += h;
                out.push(d.min(limit));
                h = (h / ratio).min(h_interior);
            }
            out
        };
        let radii: Vec<f64> = match domain.kind {
            DomainKind::Ball => {
                let mut r: Vec<f64> = ladder(len).iter().map(|d| hi - d).collect();
                r.reverse();
                r
            }
            DomainKind::Annulus => {
                // refine toward both r_in and r_out; meet in the middle
                let half = len / 2.0;
                let inner: Vec<f64> = ladder(half).iter().map(|d| lo + d).collect();
                let outer: Vec<f64> = ladder(half).iter().map(|d| hi - d).collect();
                let mut r = inner;
                let mut o = outer;
                o.reverse();
                // drop the duplicated midpoint
                if (r.last().unwrap() - o[0]).abs() < 1e-14 * len {
                    o.remove(0);
                }
                r.extend(o);
                r
            }
            _ => unreachable!(),
        };
        Grid::radial_from_radii(domain.clone(), radii)
    }

    /// Radial grid from an explicit increasing radius list.
    pub fn radial_from_radii_pub(domain: DomainSpec, radii: Vec<f64>) -> Result<Grid> {
        Grid::radial_from_radii(domain, radii)
    }

    fn radial_from_radii(domain: DomainSpec, radii: Vec<f64>) -> Result<Grid> {
        if radii.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidArgument(
                "radii must be strictly increasing".into(),
            ));
        }
        let count = radii.len();
        let mut class = vec![NodeClass::Interior; count];
        match domain.kind {
            DomainKind::Ball => class[count - 1] = NodeClass::Boundary,
            DomainKind::Annulus => {
                class[0] = NodeClass::Boundary;
                class[count - 1] = NodeClass::Boundary;
            }
            _ => unreachable!(),
        }
        Ok(Grid {
            domain,
            coords: radii.clone(),
            kind: GridKind::Radial { radii },
            class,
            dim: 1,
        })
    }

    fn classify(&mut self) {
        let count = self.node_count();
        // indicator pass
        for i in 0..count {
            self.class[i] = if self.domain.contains(self.coord(i)) {
                NodeClass::Interior
            } else {
                NodeClass::Exterior
            };
        }
        match self.domain.kind {
            DomainKind::Torus => {
                self.class.fill(NodeClass::Interior);
            }
            DomainKind::Rectangle => {
                // every non-interior node of the box lies on a face
                for c in self.class.iter_mut() {
                    if *c == NodeClass::Exterior {
                        *c = NodeClass::Boundary;
                    }
                }
            }
            DomainKind::Strip => {
                let GridKind::Cartesian { shape, strides, .. } = &self.kind else {
                    unreachable!()
                };
                let (n_y, n_t) = (shape[0], shape[1]);
                for iy in 0..n_y {
                    self.class[iy * strides[0]] = NodeClass::Boundary;
                    self.class[iy * strides[0] + (n_t - 1) * strides[1]] = NodeClass::Boundary;
                }
                for c in self.class.iter_mut() {
                    if *c == NodeClass::Exterior {
                        *c = NodeClass::Interior;
                    }
                }
            }
            DomainKind::Ball | DomainKind::Annulus => {
                // non-interior nodes adjacent (along an axis) to an interior
                // node become boundary nodes; they lie within h of the wall
                let mut promote = Vec::new();
                for i in 0..count {
                    if self.class[i] != NodeClass::Exterior {
                        continue;
                    }
                    'axes: for a in 0..self.dim {
                        for nb in [self.neighbor(i, a, -1), self.neighbor(i, a, 1)]
                            .into_iter()
                            .flatten()
                        {
                            if self.class[nb] == NodeClass::Interior {
                                promote.push(i);
                                break 'axes;
                            }
                        }
                    }
                }
                for i in promote {
                    self.class[i] = NodeClass::Boundary;
                }
            }
        }
    }

    pub fn node_count(&self) -> usize {
        self.class.len()
    }

    /// Number of grid axes (1 for radial mode).
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_radial(&self) -> bool {
        matches!(self.kind, GridKind::Radial { .. })
    }

    pub fn coord(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn class(&self, i: usize) -> NodeClass {
        self.class[i]
    }

    pub fn classes(&self) -> &[NodeClass] {
        &self.class
    }

    pub fn interior_nodes(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.node_count()).filter(|&i| self.class[i] == NodeClass::Interior)
    }

    pub fn boundary_nodes(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.node_count()).filter(|&i| self.class[i] == NodeClass::Boundary)
    }

    /// Grid spacing per axis (Cartesian mode only; uniform within each axis).
    pub fn spacing(&self) -> Result<&[f64]> {
        match &self.kind {
            GridKind::Cartesian { spacing, .. } => Ok(spacing),
            GridKind::Radial { .. } => Err(Error::Unsupported(
                "radial grids are graded; no uniform spacing".into(),
            )),
        }
    }

    /// Nodes per axis (Cartesian mode only).
    pub fn shape(&self) -> Result<&[usize]> {
        match &self.kind {
            GridKind::Cartesian { shape, .. } => Ok(shape),
            GridKind::Radial { .. } => Err(Error::Unsupported(
                "radial grids have no Cartesian shape".into(),
            )),
        }
    }

    pub fn is_periodic(&self, axis: usize) -> bool {
        match &self.kind {
            GridKind::Cartesian { periodic, .. } => periodic[axis],
            GridKind::Radial { .. } => false,
        }
    }

    /// Radii of a radial grid.
    pub fn radii(&self) -> Result<&[f64]> {
        match &self.kind {
            GridKind::Radial { radii } => Ok(radii),
            _ => Err(Error::Unsupported("not a radial grid".into())),
        }
    }

    /// Axis index of node `i` along `axis`.
    pub fn axis_index(&self, i: usize, axis: usize) -> usize {
        match &self.kind {
            GridKind::Cartesian { shape, strides, .. } => (i / strides[axis]) % shape[axis],
            GridKind::Radial { .. } => i,
        }
    }

    /// Neighbor of node `i` along `axis`, `step` = +-1 (periodic wrap where
    /// applicable).
    pub fn neighbor(&self, i: usize, axis: usize, step: isize) -> Option<usize> {
        match &self.kind {
            GridKind::Cartesian {
                shape,
                strides,
                periodic,
                ..
            } => {
                let len = shape[axis];
                let pos = self.axis_index(i, axis) as isize;
                let mut q = pos + step;
                if periodic[axis] {
                    q = q.rem_euclid(len as isize);
                } else if q < 0 || q >= len as isize {
                    return None;
                }
                Some((i as isize + (q - pos) * strides[axis] as isize) as usize)
            }
            GridKind::Radial { radii } => {
                let q = i as isize + step;
                if q < 0 || q >= radii.len() as isize {
                    None
                } else {
                    Some(q as usize)
                }
            }
        }
    }

    /// Largest spacing (mesh parameter h).
    pub fn h_max(&self) -> f64 {
        match &self.kind {
            GridKind::Cartesian { spacing, .. } => spacing.iter().cloned().fold(0.0, f64::max),
            GridKind::Radial { radii } => radii.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max),
        }
    }

    /// Cell volume for masked-sum quadrature (Cartesian mode).
    pub fn cell_volume(&self) -> Result<f64> {
        Ok(self.spacing()?.iter().product())
    }

    /// Euclidean distance between two nodes (accounting for periodic axes by
    /// the flat metric on the torus).
    pub fn node_distance(&self, i: usize, j: usize) -> f64 {
        match &self.kind {
            GridKind::Radial { radii } => (radii[i] - radii[j]).abs(),
            GridKind::Cartesian {
                shape,
                spacing,
                periodic,
                ..
            } => {
                let xi = self.coord(i);
                let xj = self.coord(j);
                let mut s = 0.0;
                for a in 0..self.dim {
                    let mut da = (xi[a] - xj[a]).abs();
                    if periodic[a] {
                        let period = shape[a] as f64 * spacing[a];
                        da = da.min(period - da);
                    }
                    s += da * da;
                }
                s.sqrt()
            }
        }
    }
}

fn radial_range(domain: &DomainSpec) -> Result<(f64, f64)> {
    match domain.kind {
        DomainKind::Ball => Ok((0.0, domain.r0)),
        DomainKind::Annulus => Ok((domain.r_in, domain.r_out)),
        _ => Err(Error::Unsupported(
            "radial mode exists only for ball/annulus".into(),
        )),
    }
}

/// Scalar field sampled on a grid, with optional exact-derivative channels
/// for analytically supplied test functions.
#[derive(Debug, Clone)]
pub struct GridFunction {
    pub grid: Arc<Grid>,
    pub values: Vec<f64>,
    exact_grad: Option<Vec<f64>>,
    exact_hess: Option<Vec<f64>>,
}

impl GridFunction {
    pub fn from_values(grid: &Arc<Grid>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.node_count() {
            return Err(Error::InvalidArgument(format!(
                "value count {} != node count {}",
                values.len(),
                grid.node_count()
            )));
        }
        Ok(Self {
            grid: Arc::clone(grid),
            values,
            exact_grad: None,
            exact_hess: None,
        })
    }

    pub fn sample<F: Fn(&[f64]) -> f64>(grid: &Arc<Grid>, f: F) -> Self {
        let values = (0..grid.node_count()).map(|i| f(grid.coord(i))).collect();
        Self {
            grid: Arc::clone(grid),
            values,
            exact_grad: None,
            exact_hess: None,
        }
    }

    /// Sample a function together with its exact gradient and Hessian.
    pub fn sample_with_derivs<F, G, H>(grid: &Arc<Grid>, f: F, grad: G, hess: H) -> Self
    where
        F: Fn(&[f64]) -> f64,
        G: Fn(&[f64], &mut [f64]),
        H: Fn(&[f64], &mut [f64]),
    {
        let n = grid.node_count();
        let d = grid.dim();
        let mut values = Vec::with_capacity(n);
        let mut eg = vec![0.0; n * d];
        let mut eh = vec![0.0; n * d * d];
        for i in 0..n {
            let x = grid.coord(i);
            values.push(f(x));
            grad(x, &mut eg[i * d..(i + 1) * d]);
            hess(x, &mut eh[i * d * d..(i + 1) * d * d]);
        }
        Self {
            grid: Arc::clone(grid),
            values,
            exact_grad: Some(eg),
            exact_hess: Some(eh),
        }
    }

    pub fn constant(grid: &Arc<Grid>, c: f64) -> Self {
        Self {
            grid: Arc::clone(grid),
            values: vec![c; grid.node_count()],
            exact_grad: None,
            exact_hess: None,
        }
    }

    pub fn has_exact_derivs(&self) -> bool {
        self.exact_grad.is_some() && self.exact_hess.is_some()
    }

    /// Attach exact derivative channels (flattened node-major: gradient
    /// `n*dim`, Hessian `n*dim*dim`).
    pub fn set_exact_derivs(&mut self, grad: Vec<f64>, hess: Vec<f64>) {
        let n = self.grid.node_count();
        let d = self.grid.dim();
        assert_eq!(grad.len(), n * d);
        assert_eq!(hess.len(), n * d * d);
        self.exact_grad = Some(grad);
        self.exact_hess = Some(hess);
    }

    pub fn exact_grad_at(&self, i: usize) -> Option<&[f64]> {
        let d = self.grid.dim();
        self.exact_grad.as_ref().map(|g| &g[i * d..(i + 1) * d])
    }

    pub fn exact_hess_at(&self, i: usize) -> Option<&[f64]> {
        let d = self.grid.dim();
        self.exact_hess
            .as_ref()
            .map(|h| &h[i * d * d..(i + 1) * d * d])
    }

    /// Sup norm over interior nodes.
    pub fn sup_interior(&self) -> f64 {
        self.grid
            .interior_nodes()
            .map(|i| self.values[i].abs())
            .fold(0.0, f64::max)
    }

    /// Sup norm over all nodes.
    pub fn sup_all(&self) -> f64 {
        self.values.iter().map(|v| v.abs()).fold(0.0, f64::max)
    }
}

/// Multilinear interpolation of a Cartesian grid function (clamped to the
/// grid box); linear interpolation in r on radial grids.
pub fn interpolate(f: &GridFunction, p: &[f64]) -> f64 {
    let grid = &f.grid;
    if grid.is_radial() {
        let radii = grid.radii().expect("radial");
        let r: f64 = p.iter().map(|v| v * v).sum::<f64>().sqrt();
        let k = match radii.binary_search_by(|probe| probe.partial_cmp(&r).unwrap()) {
            Ok(k) => return f.values[k],
            Err(k) => k,
        };
        if k == 0 {
            return f.values[0];
        }
        if k >= radii.len() {
            return *f.values.last().unwrap();
        }
        let t = (r - radii[k - 1]) / (radii[k] - radii[k - 1]);
        return f.values[k - 1] * (1.0 - t) + f.values[k] * t;
    }
    let dim = grid.dim();
    let shape = grid.shape().expect("cartesian").to_vec();
    let spacing = grid.spacing().expect("cartesian").to_vec();
    let origin: Vec<f64> = grid.coord(0).to_vec();
    // locate the cell and blend the 2^dim corners
    let mut base = vec![0usize; dim];
    let mut frac = vec![0.0f64; dim];
    for a in 0..dim {
        let t = (p[a] - origin[a]) / spacing[a];
        let i = t.floor().clamp(0.0, (shape[a] - 2) as f64) as usize;
        base[a] = i;
        frac[a] = (t - i as f64).clamp(0.0, 1.0);
    }
    let mut strides = vec![1usize; dim];
    for a in (0..dim.saturating_sub(1)).rev() {
        strides[a] = strides[a + 1] * shape[a + 1];
    }
    let mut acc = 0.0;
    for corner in 0..(1usize << dim) {
        let mut idx = 0usize;
        let mut w = 1.0;
        for a in 0..dim {
            let up = (corner >> a) & 1 == 1;
            idx += (base[a] + up as usize) * strides[a];
            w *= if up { frac[a] } else { 1.0 - frac[a] };
        }
        acc += w * f.values[idx];
    }
    acc
}

/// Distance to the domain boundary, sampled by closed form.
pub fn distance_field(grid: &Arc<Grid>) -> Result<GridFunction> {
    if !grid.domain.has_boundary() {
        return Err(Error::NoBoundary);
    }
    let domain = grid.domain.clone();
    if grid.is_radial() {
        let radii = grid.radii()?.to_vec();
        let values = radii
            .iter()
            .map(|&r| domain.boundary_distance(&[r]).unwrap_or(0.0))
            .collect();
        return GridFunction::from_values(grid, values);
    }
    Ok(GridFunction::sample(grid, |x| {
        domain.boundary_distance(x).unwrap()
    }))
}

/// Laplacian of the distance function with its tubular-neighborhood validity
/// mask.
///
/// Uses the curvature sum -sum_j kappa_j / (1 - kappa_j d) with the principal
/// curvatures of the nearest boundary component: kappa = 1/r0 on the sphere
/// seen from inside, kappa = -1/r_in on the inner wall of an annulus, 0 on a
/// flat strip wall. Nodes at or beyond the cut locus are flagged invalid.
pub struct CurvatureField {
    pub laplacian: GridFunction,
    pub valid: Vec<bool>,
}

pub fn laplacian_of_distance(grid: &Arc<Grid>) -> Result<CurvatureField> {
    let domain = grid.domain.clone();
    let cut = match domain.kind {
        DomainKind::Ball => domain.r0,
        DomainKind::Annulus => (domain.r_out - domain.r_in) / 2.0,
        DomainKind::Strip => f64::INFINITY,
        DomainKind::Torus => return Err(Error::NoBoundary),
        DomainKind::Rectangle => {
            return Err(Error::Unsupported(
                "rectangle corners break the curvature formula".into(),
            ))
        }
    };
    let nm1 = (domain.n - 1) as f64;
    let value_at = |x: &[f64]| -> (f64, bool) {
        match domain.kind {
            DomainKind::Strip => (0.0, true),
            DomainKind::Ball => {
                let r = norm(x);
                let d = domain.r0 - r;
                if d <= 0.0 || d >= cut {
                    (f64::NAN, false)
                } else {
                    // kappa_j = 1/r0, all j: -Delta d = (n-1)/r0 / (1 - d/r0)
                    let k = 1.0 / domain.r0;
                    (-nm1 * k / (1.0 - k * d), true)
                }
            }
            DomainKind::Annulus => {
                let r = norm(x);
                let d_in = r - domain.r_in;
                let d_out = domain.r_out - r;
                if d_in <= 0.0 || d_out <= 0.0 || d_in.min(d_out) >= cut {
                    (f64::NAN, false)
                } else if d_out <= d_in {
                    let k = 1.0 / domain.r_out;
                    (-nm1 * k / (1.0 - k * d_out), true)
                } else {
                    let k = -1.0 / domain.r_in;
                    (-nm1 * k / (1.0 - k * d_in), true)
                }
            }
            _ => unreachable!(),
        }
    };
    let n = grid.node_count();
    let mut values = Vec::with_capacity(n);
    let mut valid = Vec::with_capacity(n);
    for i in 0..n {
        let x = grid.coord(i);
        let (v, ok) = if grid.is_radial() {
            // radial coordinate is |x|
            value_at(&build_radial_point(x[0], domain.n))
        } else {
            value_at(x)
        };
        let ok = ok && grid.class(i) == NodeClass::Interior;
        values.push(if ok { v } else { 0.0 });
        valid.push(ok);
    }
    Ok(CurvatureField {
        laplacian: GridFunction::from_values(grid, values)?,
        valid,
    })
}

fn build_radial_point(r: f64, n: usize) -> Vec<f64> {
    let mut x = vec![0.0; n];
    x[0] = r;
    x
}

/// Gradient and Hessian fields from second-order finite differences
/// (central in the interior, one-sided at the boundary layer).
pub struct DerivativeFields {
    pub dim: usize,
    pub grad: Vec<f64>,
    pub hess: Vec<f64>,
}

impl DerivativeFields {
    pub fn grad_at(&self, i: usize) -> &[f64] {
        &self.grad[i * self.dim..(i + 1) * self.dim]
    }

    pub fn hess_at(&self, i: usize) -> &[f64] {
        &self.hess[i * self.dim * self.dim..(i + 1) * self.dim * self.dim]
    }
}

/// Differentiate along one axis with second-order stencils, one-sided where a
/// neighbor is exterior or missing. Exterior nodes receive 0.
fn axis_derivative(grid: &Grid, values: &[f64], axis: usize) -> Result<Vec<f64>> {
    let h = grid.spacing()?[axis];
    let n = grid.node_count();
    let mut out = vec![0.0; n];
    let usable =
        |j: Option<usize>| -> Option<usize> { j.filter(|&j| grid.class(j) != NodeClass::Exterior) };
    for i in 0..n {
        if grid.class(i) == NodeClass::Exterior {
            continue;
        }
        let m1 = usable(grid.neighbor(i, axis, -1));
        let p1 = usable(grid.neighbor(i, axis, 1));
        out[i] = match (m1, p1) {
            (Some(m), Some(p)) => (values[p] - values[m]) / (2.0 * h),
            (None, Some(p)) => {
                if let Some(p2) = usable(grid.neighbor(i, axis, 2)) {
                    (-3.0 * values[i] + 4.0 * values[p] - values[p2]) / (2.0 * h)
                } else {
                    (values[p] - values[i]) / h
                }
            }
            (Some(m), None) => {
                if let Some(m2) = usable(grid.neighbor(i, axis, -2)) {
                    (3.0 * values[i] - 4.0 * values[m] + values[m2]) / (2.0 * h)
                } else {
                    (values[i] - values[m]) / h
                }
            }
            (None, None) => 0.0,
        };
    }
    Ok(out)
}

pub fn fd_derivatives(u: &GridFunction) -> Result<DerivativeFields> {
    let grid = &u.grid;
    if grid.is_radial() {
        return Err(Error::Unsupported(
            "fd_derivatives requires uniform spacing; use radial_derivatives".into(),
        ));
    }
    let dim = grid.dim();
    for a in 0..dim {
        let len = match &grid.kind {
            GridKind::Cartesian { shape, .. } => shape[a],
            _ => unreachable!(),
        };
        if len < 3 {
            return Err(Error::GridTooCoarse(format!(
                "axis {a} has {len} < 3 nodes"
            )));
        }
    }
    let n = grid.node_count();
    // exact channels pass through when present
    if let (Some(eg), Some(eh)) = (&u.exact_grad, &u.exact_hess) {
        return Ok(DerivativeFields {
            dim,
            grad: eg.clone(),
            hess: eh.clone(),
        });
    }
    let mut grad = vec![0.0; n * dim];
    let mut partials = Vec::with_capacity(dim);
    for a in 0..dim {
        let da = axis_derivative(grid, &u.values, a)?;
        for i in 0..n {
            grad[i * dim + a] = da[i];
        }
        partials.push(da);
    }
    let mut hess = vec![0.0; n * dim * dim];
    for a in 0..dim {
        // pure second derivative: central 3-point where possible, else
        // one-sided 4-point; falls back to differentiating the gradient
        let haa = second_derivative(grid, &u.values, a)?;
        for i in 0..n {
            hess[i * dim * dim + a * dim + a] = haa[i];
        }
        for b in (a + 1)..dim {
            let dab = axis_derivative(grid, &partials[b], a)?;
            let dba = axis_derivative(grid, &partials[a], b)?;
            for i in 0..n {
                let v = 0.5 * (dab[i] + dba[i]);
                hess[i * dim * dim + a * dim + b] = v;
                hess[i * dim * dim + b * dim + a] = v;
            }
        }
    }
    Ok(DerivativeFields { dim, grad, hess })
}

fn second_derivative(grid: &Grid, values: &[f64], axis: usize) -> Result<Vec<f64>> {
    let h = grid.spacing()?[axis];
    let h2 = h * h;
    let n = grid.node_count();
    let mut out = vec![0.0; n];
    let usable =
        |j: Option<usize>| -> Option<usize> { j.filter(|&j| grid.class(j) != NodeClass::Exterior) };
    for i in 0..n {
        if grid.class(i) == NodeClass::Exterior {
            continue;
        }
        let m1 = usable(grid.neighbor(i, axis, -1));
        let p1 = usable(grid.neighbor(i, axis, 1));
        out[i] = match (m1, p1) {
            (Some(m), Some(p)) => (values[p] - 2.0 * values[i] + values[m]) / h2,
            (None, Some(p)) => {
                match (
                    usable(grid.neighbor(i, axis, 2)),
                    usable(grid.neighbor(i, axis, 3)),
                ) {
                    (Some(p2), Some(p3)) => {
                        (2.0 * values[i] - 5.0 * values[p] + 4.0 * values[p2] - values[p3]) / h2
                    }
                    (Some(p2), None) => (values[i] - 2.0 * values[p] + values[p2]) / h2,
                    _ => 0.0,
                }
            }
            (Some(m), None) => {
                match (
                    usable(grid.neighbor(i, axis, -2)),
                    usable(grid.neighbor(i, axis, -3)),
                ) {
                    (Some(m2), Some(m3)) => {
                        (2.0 * values[i] - 5.0 * values[m] + 4.0 * values[m2] - values[m3]) / h2
                    }
                    (Some(m2), None) => (values[i] - 2.0 * values[m] + values[m2]) / h2,
                    _ => 0.0,
                }
            }
            (None, None) => 0.0,
        };
    }
    Ok(out)
}

/// First and second radial derivatives on a (possibly graded) radial grid,
/// by the standard 3-point nonuniform stencils.
pub fn radial_derivatives(u: &GridFunction) -> Result<(Vec<f64>, Vec<f64>)> {
    let radii = u.grid.radii()?;
    let n = radii.len();
    if n < 3 {
        return Err(Error::GridTooCoarse("radial grid needs >= 3 nodes".into()));
    }
    let v = &u.values;
    let mut d1 = vec![0.0; n];
    let mut d2 = vec![0.0; n];
    for i in 0..n {
        if i == 0 || i == n - 1 {
            let (i0, i1, i2) = if i == 0 {
                (0, 1, 2)
            } else {
                (n - 1, n - 2, n - 3)
            };
            let a = radii[i1] - radii[i0];
            let b = radii[i2] - radii[i0];
            // quadratic fit through three nodes
            d1[i] = (v[i1] - v[i0]) * b / (a * (b - a)) - (v[i2] - v[i0]) * a / (b * (b - a));
            d2[i] = 2.0 * ((v[i2] - v[i0]) / b - (v[i1] - v[i0]) / a) / (b - a);
        } else {
            let hm = radii[i] - radii[i - 1];
            let hp = radii[i + 1] - radii[i];
            d1[i] = (v[i + 1] * hm * hm - v[i - 1] * hp * hp + v[i] * (hp * hp - hm * hm))
                / (hm * hp * (hm + hp));
            d2[i] =
                2.0 * (v[i - 1] * hp + v[i + 1] * hm - v[i] * (hm + hp)) / (hm * hp * (hm + hp));
        }
    }
    Ok((d1, d2))
}
