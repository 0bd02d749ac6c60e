//! Grids, velocity models, transducer arrays, source wavelets, and the
//! discrete symmetrized wave operator.
//!
//! The operator built here is `A_h = C L_h C`, where `C` is the diagonal of
//! nodal velocity values and `L_h` is the 5-point Laplacian with mirror-ghost
//! Neumann rows on accessible-boundary nodes and eliminated Dirichlet rows on
//! inaccessible-boundary nodes. This assembly is symmetric entrywise and
//! `-A_h` is positive semidefinite.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::chebyshev;
use crate::{Error, Result};

/// Domain edges of the rectangular grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Edge {
    Top,
    Bottom,
    Left,
    Right,
}

impl Edge {
    pub const ALL: [Edge; 4] = [Edge::Top, Edge::Bottom, Edge::Left, Edge::Right];

    fn index(self) -> usize {
        match self {
            Edge::Top => 0,
            Edge::Bottom => 1,
            Edge::Left => 2,
            Edge::Right => 3,
        }
    }
}

/// Per-edge accessibility tags. Accessible edges carry transducers and get
/// reflective (Neumann) rows; inaccessible edges get zero Dirichlet rows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoundaryLabels {
    accessible: [bool; 4],
}

impl BoundaryLabels {
    pub fn new(accessible_edges: &[Edge]) -> Self {
        let mut accessible = [false; 4];
        for e in accessible_edges {
            accessible[e.index()] = true;
        }
        Self { accessible }
    }

    /// Only the top edge accessible, the usual surface-array setup.
    pub fn top_accessible() -> Self {
        Self::new(&[Edge::Top])
    }

    /// Every edge accessible (all-Neumann operator).
    pub fn all_accessible() -> Self {
        Self::new(&Edge::ALL)
    }

    pub fn is_accessible(&self, edge: Edge) -> bool {
        self.accessible[edge.index()]
    }

    pub fn accessible_edges(&self) -> Vec<Edge> {
        Edge::ALL
            .into_iter()
            .filter(|e| self.is_accessible(*e))
            .collect()
    }
}

/// Uniform tensor product grid of `nx * ny` nodes with spacing `h` (meters).
///
/// Node `(ix, iy)` sits at physical coordinates
/// `origin + (ix * h, iy * h)`; `iy` grows with depth so the top edge is
/// `iy = 0`. Linear node index is `iy * nx + ix`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid2D {
    pub nx: usize,
    pub ny: usize,
    pub h: f64,
    pub origin: (f64, f64),
}

impl Grid2D {
    pub fn new(nx: usize, ny: usize, h: f64, origin: (f64, f64)) -> Result<Self> {
        if nx < 3 || ny < 3 {
            return Err(Error::GridTooSmall { nx, ny });
        }
        if !(h > 0.0) {
            return Err(Error::Validation(format!("grid spacing must be positive, got {h}")));
        }
        Ok(Self { nx, ny, h, origin })
    }

    /// Total node count `N = nx * ny`.
    pub fn n_nodes(&self) -> usize {
        self.nx * self.ny
    }

    pub fn idx(&self, ix: usize, iy: usize) -> usize {
        debug_assert!(ix < self.nx && iy < self.ny);
        iy * self.nx + ix
    }

    pub fn node(&self, idx: usize) -> (usize, usize) {
        (idx % self.nx, idx / self.nx)
    }

    pub fn coords(&self, ix: usize, iy: usize) -> (f64, f64) {
        (
            self.origin.0 + ix as f64 * self.h,
            self.origin.1 + iy as f64 * self.h,
        )
    }

    /// Physical extent `(width, height)` of the domain.
    pub fn extent(&self) -> (f64, f64) {
        ((self.nx - 1) as f64 * self.h, (self.ny - 1) as f64 * self.h)
    }

    /// Edges that node `(ix, iy)` lies on (a corner node lies on two).
    pub fn edges_of(&self, ix: usize, iy: usize) -> Vec<Edge> {
        let mut edges = Vec::new();
        if iy == 0 {
            edges.push(Edge::Top);
        }
        if iy == self.ny - 1 {
            edges.push(Edge::Bottom);
        }
        if ix == 0 {
            edges.push(Edge::Left);
        }
        if ix == self.nx - 1 {
            edges.push(Edge::Right);
        }
        edges
    }
}

/// Grid-sampled acoustic velocity field `c(x)` with boundary labels.
///
/// Velocities are stored in m/s; loaders converting from km/s do so before
/// construction.
#[derive(Debug, Clone, PartialEq)]
pub struct VelocityModel {
    pub grid: Grid2D,
    pub c: Vec<f64>,
    pub boundary: BoundaryLabels,
}

impl VelocityModel {
    pub fn new(grid: Grid2D, c: Vec<f64>, boundary: BoundaryLabels) -> Result<Self> {
        if c.len() != grid.n_nodes() {
            return Err(Error::Mismatch(format!(
                "velocity field has {} values, grid has {} nodes",
                c.len(),
                grid.n_nodes()
            )));
        }
        for (i, &v) in c.iter().enumerate() {
            if !(v > 0.0) || !v.is_finite() {
                let (ix, iy) = grid.node(i);
                return Err(Error::NonPositiveVelocity { ix, iy, value: v });
            }
        }
        Ok(Self { grid, c, boundary })
    }

    pub fn constant(grid: Grid2D, c: f64, boundary: BoundaryLabels) -> Result<Self> {
        let n = grid.n_nodes();
        Self::new(grid, vec![c; n], boundary)
    }

    /// True if the node lies on an inaccessible edge (zero Dirichlet node).
    /// Dirichlet wins at corners shared with an accessible edge.
    pub fn is_dirichlet(&self, ix: usize, iy: usize) -> bool {
        self.grid
            .edges_of(ix, iy)
            .iter()
            .any(|e| !self.boundary.is_accessible(*e))
    }

    pub fn min_c(&self) -> f64 {
        self.c.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn max_c(&self) -> f64 {
        self.c.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Transducer array on the accessible boundary; positions are grid nodes with
/// disjoint supports, weights default to the constant function 1.
#[derive(Debug, Clone, PartialEq)]
pub struct TransducerArray {
    positions: Vec<(usize, usize)>,
    theta: Vec<f64>,
}

impl TransducerArray {
    pub fn new(model: &VelocityModel, positions: Vec<(usize, usize)>, theta: Option<Vec<f64>>) -> Result<Self> {
        if positions.is_empty() {
            return Err(Error::Validation("transducer array is empty".into()));
        }
        for (i, &(ix, iy)) in positions.iter().enumerate() {
            if ix >= model.grid.nx || iy >= model.grid.ny {
                return Err(Error::Validation(format!(
                    "transducer {i} at ({ix}, {iy}) outside the grid"
                )));
            }
            let edges = model.grid.edges_of(ix, iy);
            if edges.is_empty() {
                return Err(Error::Validation(format!(
                    "transducer {i} at ({ix}, {iy}) is not a boundary node"
                )));
            }
            if model.is_dirichlet(ix, iy) {
                return Err(Error::Validation(format!(
                    "transducer {i} at ({ix}, {iy}) is not on the accessible boundary"
                )));
            }
            if positions[..i].contains(&(ix, iy)) {
                return Err(Error::Validation(format!(
                    "duplicate transducer position ({ix}, {iy})"
                )));
            }
        }
        let theta = theta.unwrap_or_else(|| vec![1.0; positions.len()]);
        if theta.len() != positions.len() {
            return Err(Error::Mismatch(format!(
                "{} theta weights for {} transducers",
                theta.len(),
                positions.len()
            )));
        }
        Ok(Self { positions, theta })
    }

    /// Place `m` transducers evenly on an accessible edge, leaving `margin`
    /// nodes at each end (corner nodes are Dirichlet).
    pub fn uniform_on_edge(model: &VelocityModel, edge: Edge, m: usize, margin: usize) -> Result<Self> {
        if !model.boundary.is_accessible(edge) {
            return Err(Error::Validation(format!("edge {edge:?} is not accessible")));
        }
        let along = match edge {
            Edge::Top | Edge::Bottom => model.grid.nx,
            Edge::Left | Edge::Right => model.grid.ny,
        };
        if m < 1 || along < 2 * margin + m {
            return Err(Error::Validation(format!(
                "cannot place {m} transducers with margin {margin} on an edge of {along} nodes"
            )));
        }
        let span = along - 1 - 2 * margin;
        let positions = (0..m)
            .map(|j| {
                let t = if m == 1 { 0.5 } else { j as f64 / (m - 1) as f64 };
                let a = margin + (t * span as f64).round() as usize;
                match edge {
                    Edge::Top => (a, 0),
                    Edge::Bottom => (a, model.grid.ny - 1),
                    Edge::Left => (0, a),
                    Edge::Right => (model.grid.nx - 1, a),
                }
            })
            .collect();
        Self::new(model, positions, None)
    }

    pub fn m(&self) -> usize {
        self.positions.len()
    }

    pub fn positions(&self) -> &[(usize, usize)] {
        &self.positions
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    /// Restrict to a contiguous index range (used by composite sub-array
    /// imaging). Range bounds are inclusive, zero-based.
    pub fn restrict(&self, lo: usize, hi: usize) -> Result<Self> {
        if lo > hi || hi >= self.m() {
            return Err(Error::Validation(format!(
                "sub-array range [{lo}, {hi}] invalid for m = {}",
                self.m()
            )));
        }
        Ok(Self {
            positions: self.positions[lo..=hi].to_vec(),
            theta: self.theta[lo..=hi].to_vec(),
        })
    }
}

/// Gaussian source wavelet parameters and time sampling.
///
/// The wavelet's Fourier transform is `exp(-sigma^2 s^2 / 2)`; data is
/// sampled at `t_k = k * tau` for `k = 0 .. 2n - 1`. The recommended sampling
/// is `tau ~ 0.87 * sigma`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WaveletSpec {
    pub sigma: f64,
    pub tau: f64,
    pub n2: usize,
}

impl WaveletSpec {
    pub fn new(sigma: f64, tau: f64, n2: usize) -> Result<Self> {
        if !(sigma >= 0.0) {
            return Err(Error::Validation(format!("sigma must be nonnegative, got {sigma}")));
        }
        if !(tau > 0.0) {
            return Err(Error::Validation(format!("tau must be positive, got {tau}")));
        }
        if n2 < 4 || n2 % 2 != 0 {
            return Err(Error::Validation(format!(
                "total sample count 2n must be even and at least 4, got {n2}"
            )));
        }
        Ok(Self { sigma, tau, n2 })
    }

    /// Sigma chosen from tau by the `tau = sqrt(3)/2 * sigma` rule.
    pub fn from_tau(tau: f64, n2: usize) -> Result<Self> {
        Self::new(tau / (3.0f64.sqrt() / 2.0), tau, n2)
    }

    /// Half the sample count: the snapshot/Krylov block count n.
    pub fn n(&self) -> usize {
        self.n2 / 2
    }
}

/// Sparse symmetric discretization of `c * Laplace * c` with its Gershgorin
/// spectral bound for `-A_h`.
#[derive(Debug, Clone)]
pub struct SymmetrizedOperator {
    grid: Grid2D,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
    dirichlet: Vec<bool>,
    lambda_max: f64,
}

impl SymmetrizedOperator {
    pub fn grid(&self) -> &Grid2D {
        &self.grid
    }

    /// Gershgorin upper bound on the spectrum of `-A_h`.
    pub fn lambda_max(&self) -> f64 {
        self.lambda_max
    }

    pub fn n_nodes(&self) -> usize {
        self.grid.n_nodes()
    }

    pub fn is_dirichlet_node(&self, idx: usize) -> bool {
        self.dirichlet[idx]
    }

    /// `out = A_h * f`, column by column.
    pub fn apply(&self, f: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(f.nrows(), f.ncols());
        self.apply_into(f, &mut out);
        out
    }

    pub fn apply_into(&self, f: &DMatrix<f64>, out: &mut DMatrix<f64>) {
        let n = self.n_nodes();
        assert_eq!(f.nrows(), n, "field has wrong node count");
        assert_eq!(out.nrows(), n);
        assert_eq!(out.ncols(), f.ncols());
        for col in 0..f.ncols() {
            let fc = f.column(col);
            let mut oc = out.column_mut(col);
            for i in 0..n {
                let mut acc = 0.0;
                for p in self.row_ptr[i]..self.row_ptr[i + 1] {
                    acc += self.vals[p] * fc[self.cols[p]];
                }
                oc[i] = acc;
            }
        }
    }

    /// Dense assembly, for oracles and small-grid tests.
    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.n_nodes();
        let mut a = DMatrix::zeros(n, n);
        for i in 0..n {
            for p in self.row_ptr[i]..self.row_ptr[i + 1] {
                a[(i, self.cols[p])] += self.vals[p];
            }
        }
        a
    }
}

/// Assemble `A_h = C L_h C`.
///
/// Rows of Dirichlet nodes (and their columns) are zero; fields stay zero
/// there provided they start zero. The entry between neighbor nodes `i`, `j`
/// is `c_i * c_j / h^2`, so the matrix is symmetric by construction.
pub fn build_symmetrized_operator(model: &VelocityModel) -> Result<SymmetrizedOperator> {
    let grid = model.grid.clone();
    let n = grid.n_nodes();
    let h2 = grid.h * grid.h;
    let dirichlet: Vec<bool> = (0..n)
        .map(|i| {
            let (ix, iy) = grid.node(i);
            model.is_dirichlet(ix, iy)
        })
        .collect();

    let mut row_ptr = Vec::with_capacity(n + 1);
    let mut cols = Vec::new();
    let mut vals = Vec::new();
    let mut lambda_max = 0.0f64;
    row_ptr.push(0);
    for i in 0..n {
        if dirichlet[i] {
            row_ptr.push(cols.len());
            continue;
        }
        let (ix, iy) = grid.node(i);
        let ci = model.c[i];
        let mut diag = 0.0;
        let mut row_abs = 0.0;
        let neighbors = [
            (ix.wrapping_sub(1), iy, ix > 0),
            (ix + 1, iy, ix + 1 < grid.nx),
            (ix, iy.wrapping_sub(1), iy > 0),
            (ix, iy + 1, iy + 1 < grid.ny),
        ];
        for &(jx, jy, inside) in &neighbors {
            if !inside {
                // Mirror-ghost Neumann across the accessible edge: the ghost
                // value equals the interior value, the connection cancels.
                continue;
            }
            let j = grid.idx(jx, jy);
            diag -= ci * ci / h2;
            if dirichlet[j] {
                // Eliminated Dirichlet neighbor: value is zero, only the
                // diagonal contribution remains.
                continue;
            }
            let v = ci * model.c[j] / h2;
            cols.push(j);
            vals.push(v);
            row_abs += v.abs();
        }
        cols.push(i);
        vals.push(diag);
        row_abs += diag.abs();
        lambda_max = lambda_max.max(row_abs);
        row_ptr.push(cols.len());
    }

    Ok(SymmetrizedOperator {
        grid,
        row_ptr,
        cols,
        vals,
        dirichlet,
        lambda_max,
    })
}

/// Relative tolerance pinned for the operator exponential remainder.
pub const EXP_SERIES_TOL: f64 = 1e-12;

/// Build the transducer field block `b = exp(sigma^2 A_h / 4) (theta e)`,
/// one column per transducer.
///
/// The discrete delta `e_j` carries the value `1/h` at the transducer node
/// (surface-distribution convention, keeping the data scale grid
/// independent). The exponential is applied as a Chebyshev series on
/// `[-lambda_max, 0]` with the scalar remainder kept below
/// [`EXP_SERIES_TOL`].
pub fn build_transducer_field(
    op: &SymmetrizedOperator,
    array: &TransducerArray,
    w: &WaveletSpec,
) -> Result<DMatrix<f64>> {
    let n = op.n_nodes();
    let m = array.m();
    let mut e = DMatrix::zeros(n, m);
    for (j, &(ix, iy)) in array.positions().iter().enumerate() {
        let idx = op.grid().idx(ix, iy);
        if op.is_dirichlet_node(idx) {
            return Err(Error::Validation(format!(
                "transducer {j} sits on a Dirichlet node"
            )));
        }
        e[(idx, j)] = array.theta()[j] / op.grid().h;
    }
    if w.sigma == 0.0 {
        return Ok(e);
    }
    let lam = op.lambda_max().max(f64::MIN_POSITIVE);
    // exp(sigma^2 a / 4) for a in [-lam, 0]; map a = lam * (x - 1) / 2.
    let alpha = w.sigma * w.sigma * lam / 8.0;
    let f = |x: f64| (alpha * (x - 1.0)).exp();
    let mut num_nodes = 32;
    let coeffs = loop {
        let c = chebyshev::interp_coeffs(f, num_nodes);
        let cut = chebyshev::truncate_tail(&c, EXP_SERIES_TOL / 10.0);
        if cut.len() < num_nodes || num_nodes >= 16384 {
            break cut;
        }
        num_nodes *= 2;
    };
    // Verify the scalar remainder on a dense sample of the spectrum interval.
    let mut residual = 0.0f64;
    for j in 0..=400 {
        let x = -1.0 + 2.0 * j as f64 / 400.0;
        residual = residual.max((chebyshev::eval_series(&coeffs, x) - f(x)).abs());
    }
    if residual > EXP_SERIES_TOL {
        return Err(Error::ExpResidual {
            residual,
            tol: EXP_SERIES_TOL,
        });
    }
    // Apply the series to the field with X = (2 / lam) A_h + I.
    let apply_x = |v: &DMatrix<f64>| -> DMatrix<f64> {
        let mut out = op.apply(v);
        out *= 2.0 / lam;
        out += v;
        out
    };
    let mut acc = &e * coeffs[0];
    if coeffs.len() > 1 {
        let mut prev = e.clone();
        let mut cur = apply_x(&e);
        acc += &cur * coeffs[1];
        for &c in &coeffs[2..] {
            let next = 2.0 * apply_x(&cur) - &prev;
            prev = cur;
            cur = next;
            acc += &cur * c;
        }
    }
    Ok(acc)
}

/// Smooth a velocity model by separable truncated-Gaussian convolution with
/// reflecting extension at the domain edges. `width_*` are the Gaussian
/// standard deviations in meters; zero width is the identity.
pub fn gaussian_smooth_velocity(
    model: &VelocityModel,
    width_x: f64,
    width_y: f64,
) -> Result<VelocityModel> {
    if !(width_x >= 0.0) || !(width_y >= 0.0) {
        return Err(Error::Validation(format!(
            "smoothing widths must be nonnegative, got ({width_x}, {width_y})"
        )));
    }
    let grid = &model.grid;
    let kernel = |width: f64| -> Vec<f64> {
        if width == 0.0 {
            return vec![1.0];
        }
        let sigma_nodes = width / grid.h;
        let half = (3.0 * sigma_nodes).ceil() as i64;
        let mut k: Vec<f64> = (-half..=half)
            .map(|i| (-0.5 * (i as f64 / sigma_nodes).powi(2)).exp())
            .collect();
        let s: f64 = k.iter().sum();
        k.iter_mut().for_each(|v| *v /= s);
        k
    };
    let kx = kernel(width_x);
    let ky = kernel(width_y);
    let reflect = |i: i64, len: usize| -> usize {
        // Reflect about the end nodes: ..., 2, 1, 0 | 1, 2, ...
        let len = len as i64;
        let mut i = i;
        loop {
            if i < 0 {
                i = -i;
            } else if i >= len {
                i = 2 * (len - 1) - i;
            } else {
                return i as usize;
            }
        }
    };
    let half_x = (kx.len() / 2) as i64;
    let half_y = (ky.len() / 2) as i64;
    let mut tmp = vec![0.0; grid.n_nodes()];
    for iy in 0..grid.ny {
        for ix in 0..grid.nx {
            let mut acc = 0.0;
            for (o, &w) in kx.iter().enumerate() {
                let jx = reflect(ix as i64 + o as i64 - half_x, grid.nx);
                acc += w * model.c[grid.idx(jx, iy)];
            }
            tmp[grid.idx(ix, iy)] = acc;
        }
    }
    let mut out = vec![0.0; grid.n_nodes()];
    for iy in 0..grid.ny {
        for ix in 0..grid.nx {
            let mut acc = 0.0;
            for (o, &w) in ky.iter().enumerate() {
                let jy = reflect(iy as i64 + o as i64 - half_y, grid.ny);
                acc += w * tmp[grid.idx(ix, jy)];
            }
            out[grid.idx(ix, iy)] = acc;
        }
    }
    VelocityModel::new(grid.clone(), out, model.boundary)
}

/// Synthetic phantom kinds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PhantomKind {
    /// Smooth depth-gradient background with two extended horizontal
    /// reflectors of two grid nodes thickness.
    TwoReflectors,
    /// Three horizontal layers.
    Layered,
    /// Small square inclusion at a fractional position with relative
    /// velocity contrast.
    Point { at: (f64, f64), contrast: f64 },
    /// Circular phantom of the given diameter (meters) with a boundary
    /// layer and six inclusions, four round and two star-shaped.
    CircularPhantom { diameter: f64 },
}

/// Geometry-independent phantom parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PhantomParams {
    pub nx: usize,
    pub ny: usize,
    pub h: f64,
    #[serde(default)]
    pub origin: (f64, f64),
    /// Background velocity at the top of the domain, m/s.
    pub background: f64,
    /// Background velocity increase per meter of depth, m/s per m.
    #[serde(default)]
    pub background_gradient: f64,
    /// Velocity inside extended reflectors, m/s.
    pub reflector_velocity: f64,
    /// Accessible edges; defaults to the top edge only.
    #[serde(default)]
    pub accessible: Option<Vec<Edge>>,
}

impl PhantomParams {
    fn boundary(&self) -> BoundaryLabels {
        match &self.accessible {
            Some(edges) => BoundaryLabels::new(edges),
            None => BoundaryLabels::top_accessible(),
        }
    }
}

/// Generate a deterministic synthetic velocity model.
pub fn make_phantom(kind: PhantomKind, params: &PhantomParams) -> Result<VelocityModel> {
    let grid = Grid2D::new(params.nx, params.ny, params.h, params.origin)?;
    let boundary = params.boundary();
    let depth_of = |iy: usize| iy as f64 * params.h;
    let background = |iy: usize| params.background + params.background_gradient * depth_of(iy);
    let mut c: Vec<f64> = (0..grid.n_nodes())
        .map(|i| background(grid.node(i).1))
        .collect();

    match kind {
        PhantomKind::TwoReflectors => {
            // Upper reflector spans the middle 60% of the width, lower one
            // 40%, each two grid nodes thick.
            let bars = [(0.45, 0.2, 0.8), (0.70, 0.3, 0.7)];
            for &(depth_frac, x0, x1) in &bars {
                let iy0 = (depth_frac * (grid.ny - 1) as f64).round() as usize;
                if iy0 + 1 >= grid.ny {
                    return Err(Error::Validation(format!(
                        "reflector at depth fraction {depth_frac} outside the domain"
                    )));
                }
                let jx0 = (x0 * (grid.nx - 1) as f64).round() as usize;
                let jx1 = (x1 * (grid.nx - 1) as f64).round() as usize;
                for iy in iy0..=iy0 + 1 {
                    for ix in jx0..=jx1 {
                        c[grid.idx(ix, iy)] = params.reflector_velocity;
                    }
                }
            }
        }
        PhantomKind::Layered => {
            let cuts = [0.4, 0.7];
            for i in 0..grid.n_nodes() {
                let iy = grid.node(i).1;
                let frac = iy as f64 / (grid.ny - 1) as f64;
                if frac >= cuts[1] {
                    c[i] = background(iy) * 1.3;
                } else if frac >= cuts[0] {
                    c[i] = params.reflector_velocity;
                }
            }
        }
        PhantomKind::Point { at, contrast } => {
            if !(at.0 > 0.0 && at.0 < 1.0 && at.1 > 0.0 && at.1 < 1.0) {
                return Err(Error::Validation(format!(
                    "point reflector position {at:?} outside the domain interior"
                )));
            }
            let ix = (at.0 * (grid.nx - 1) as f64).round() as usize;
            let iy = (at.1 * (grid.ny - 1) as f64).round() as usize;
            for dy in 0..2usize {
                for dx in 0..2usize {
                    let (jx, jy) = (ix + dx, iy + dy);
                    if jx < grid.nx && jy < grid.ny {
                        c[grid.idx(jx, jy)] = background(jy) * (1.0 + contrast);
                    }
                }
            }
        }
        PhantomKind::CircularPhantom { diameter } => {
            let (w, hgt) = grid.extent();
            if diameter <= 0.0 || diameter > w.min(hgt) {
                return Err(Error::Validation(format!(
                    "phantom diameter {diameter} does not fit the {w} x {hgt} domain"
                )));
            }
            let r = diameter / 2.0;
            let cx = params.origin.0 + w / 2.0;
            let cy = params.origin.1 + hgt / 2.0;
            // Six inclusions: four round (benign), two star-shaped
            // (malignant, rough boundary).
            let incl: [(f64, f64, f64, bool); 6] = [
                (0.45, 0.8, 0.12, true),
                (0.45, 4.0, 0.10, false),
                (0.55, 1.8, 0.09, false),
                (0.40, 2.9, 0.11, false),
                (0.55, 5.4, 0.10, false),
                (0.50, 4.9, 0.13, true),
            ];
            for i in 0..grid.n_nodes() {
                let (ix, iy) = grid.node(i);
                let (x, y) = grid.coords(ix, iy);
                let (dx, dy) = (x - cx, y - cy);
                let rho = (dx * dx + dy * dy).sqrt();
                if rho > r {
                    continue;
                }
                // Fatty layer under the skin surface with a rough inner edge.
                let ang = dy.atan2(dx);
                let layer = r * (0.92 + 0.015 * (9.0 * ang).sin());
                if rho > layer {
                    c[i] = params.background * 0.95;
                    continue;
                }
                for &(rad_frac, theta0, size_frac, star) in &incl {
                    let px = cx + rad_frac * r * theta0.cos();
                    let py = cy + rad_frac * r * theta0.sin();
                    let (ex, ey) = (x - px, y - py);
                    let d = (ex * ex + ey * ey).sqrt();
                    let local = ey.atan2(ex);
                    let radius = if star {
                        size_frac * r * (1.0 + 0.35 * (5.0 * local).cos())
                    } else {
                        size_frac * r
                    };
                    if d <= radius {
                        c[i] = params.reflector_velocity;
                    }
                }
            }
        }
    }

    VelocityModel::new(grid, c, boundary)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use nalgebra::SymmetricEigen;

    fn unit_model(nx: usize, ny: usize, c: f64) -> VelocityModel {
        let grid = Grid2D::new(nx, ny, 1.0, (0.0, 0.0)).unwrap();
        VelocityModel::constant(grid, c, BoundaryLabels::all_accessible()).unwrap()
    }

    #[test]
    fn interior_stencil_c1() {
        let model = unit_model(5, 5, 1.0);
        let op = build_symmetrized_operator(&model).unwrap();
        let a = op.to_dense();
        let i = model.grid.idx(2, 2);
        assert_abs_diff_eq!(a[(i, i)], -4.0);
        for j in [
            model.grid.idx(1, 2),
            model.grid.idx(3, 2),
            model.grid.idx(2, 1),
            model.grid.idx(2, 3),
        ] {
            assert_abs_diff_eq!(a[(i, j)], 1.0);
        }
    }

    #[test]
    fn interior_stencil_c2_scaled() {
        let model = unit_model(5, 5, 2.0);
        let op = build_symmetrized_operator(&model).unwrap();
        let a = op.to_dense();
        let i = model.grid.idx(2, 2);
        assert_abs_diff_eq!(a[(i, i)], -16.0);
        assert_abs_diff_eq!(a[(i, model.grid.idx(1, 2))], 4.0);
    }

    #[test]
    fn operator_symmetric_and_negative_semidefinite() {
        let grid = Grid2D::new(6, 6, 1.0, (0.0, 0.0)).unwrap();
        let c: Vec<f64> = (0..36)
            .map(|i| 1.5 + 0.3 * ((i % 6) as f64 * 0.7).sin() + 0.1 * (i / 6) as f64)
            .collect();
        let model = VelocityModel::new(grid, c, BoundaryLabels::top_accessible()).unwrap();
        let op = build_symmetrized_operator(&model).unwrap();
        let a = op.to_dense();
        assert_eq!(a.clone().transpose(), a, "assembly must be exactly symmetric");
        let eig = SymmetricEigen::new(a.clone());
        let scale = eig.eigenvalues.iter().cloned().fold(0.0f64, |s, v| s.max(v.abs()));
        for &lam in eig.eigenvalues.iter() {
            assert!(lam <= 1e-12 * scale, "positive eigenvalue {lam}");
            assert!(-lam <= op.lambda_max() * (1.0 + 1e-12), "Gershgorin bound violated");
        }
    }

    #[test]
    fn dirichlet_rows_zero() {
        let model = {
            let grid = Grid2D::new(5, 5, 1.0, (0.0, 0.0)).unwrap();
            VelocityModel::constant(grid, 1.0, BoundaryLabels::top_accessible()).unwrap()
        };
        let op = build_symmetrized_operator(&model).unwrap();
        let a = op.to_dense();
        let i = model.grid.idx(0, 2); // left edge: Dirichlet
        assert!(a.row(i).iter().all(|&v| v == 0.0));
        assert!(a.column(i).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn non_positive_velocity_rejected() {
        let grid = Grid2D::new(4, 4, 1.0, (0.0, 0.0)).unwrap();
        let mut c = vec![1.0; 16];
        c[5] = 0.0;
        assert!(matches!(
            VelocityModel::new(grid, c, BoundaryLabels::top_accessible()),
            Err(Error::NonPositiveVelocity { .. })
        ));
    }

    #[test]
    fn grid_too_small_rejected() {
        assert!(matches!(
            Grid2D::new(2, 5, 1.0, (0.0, 0.0)),
            Err(Error::GridTooSmall { .. })
        ));
    }

    #[test]
    fn transducer_field_sigma_zero_is_delta() {
        let model = unit_model(6, 6, 1.0);
        let op = build_symmetrized_operator(&model).unwrap();
        let array = TransducerArray::new(&model, vec![(2, 0), (4, 0)], None).unwrap();
        let w = WaveletSpec::new(0.0, 0.1, 4).unwrap();
        let b = build_transducer_field(&op, &array, &w).unwrap();
        let mut expected = DMatrix::zeros(36, 2);
        expected[(model.grid.idx(2, 0), 0)] = 1.0;
        expected[(model.grid.idx(4, 0), 1)] = 1.0;
        assert_eq!(b, expected);
    }

    #[test]
    fn transducer_field_matches_eigenvector_scaling() {
        // Feed an eigenvector of A_h through the field builder via a custom
        // "theta e" by exploiting linearity: compare against the dense
        // eigendecomposition of exp(sigma^2 A / 4).
        let model = unit_model(6, 6, 1.0);
        let op = build_symmetrized_operator(&model).unwrap();
        let a = op.to_dense();
        let eig = SymmetricEigen::new(a);
        let sigma = 0.4;
        let w = WaveletSpec::new(sigma, 0.3, 4).unwrap();
        let array = TransducerArray::new(&model, vec![(3, 0)], None).unwrap();
        let b = build_transducer_field(&op, &array, &w).unwrap();
        // Dense reference: exp(sigma^2 A / 4) e.
        let mut e = DMatrix::zeros(36, 1);
        e[(model.grid.idx(3, 0), 0)] = 1.0 / model.grid.h;
        let q = &eig.eigenvectors;
        let scaled = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| (sigma * sigma * l / 4.0).exp()));
        let reference = q * scaled * q.transpose() * e;
        assert!((b.clone() - &reference).norm() <= 1e-11 * reference.norm());
    }

    #[test]
    fn mollifier_mass_localizes_for_small_sigma() {
        let model = unit_model(12, 12, 1.0);
        let op = build_symmetrized_operator(&model).unwrap();
        let array = TransducerArray::new(&model, vec![(3, 0), (9, 0)], None).unwrap();
        let mut prev_err = f64::INFINITY;
        let mut e = DMatrix::zeros(144, 2);
        e[(model.grid.idx(3, 0), 0)] = 1.0;
        e[(model.grid.idx(9, 0), 1)] = 1.0;
        for sigma in [0.8, 0.4, 0.2, 0.1] {
            let w = WaveletSpec::new(sigma, 0.3, 4).unwrap();
            let b = build_transducer_field(&op, &array, &w).unwrap();
            let err = (b - &e).norm();
            assert!(err < prev_err, "mollifier error not monotone in sigma");
            prev_err = err;
        }
        // Small sigma: overlap of the two columns' supports is tiny.
        let w = WaveletSpec::new(0.1, 0.3, 4).unwrap();
        let b = build_transducer_field(&op, &array, &w).unwrap();
        let overlap: f64 = (0..144).map(|i| b[(i, 0)].abs() * b[(i, 1)].abs()).sum();
        let mass: f64 = (0..144).map(|i| b[(i, 0)].powi(2)).sum();
        assert!(overlap / mass < 1e-10);
    }

    #[test]
    fn smoothing_constant_identity_and_bounds() {
        let model = unit_model(8, 8, 2.5);
        let s = gaussian_smooth_velocity(&model, 2.0, 2.0).unwrap();
        for &v in &s.c {
            assert_abs_diff_eq!(v, 2.5, epsilon = 1e-12);
        }
        let s0 = gaussian_smooth_velocity(&model, 0.0, 0.0).unwrap();
        assert_eq!(s0.c, model.c);

        let phantom = make_phantom(
            PhantomKind::TwoReflectors,
            &PhantomParams {
                nx: 24,
                ny: 24,
                h: 10.0,
                origin: (0.0, 0.0),
                background: 2000.0,
                background_gradient: 4.0,
                reflector_velocity: 1000.0,
                accessible: None,
            },
        )
        .unwrap();
        let sm = gaussian_smooth_velocity(&phantom, 30.0, 30.0).unwrap();
        assert!(sm.min_c() >= phantom.min_c() - 1e-9);
        assert!(sm.max_c() <= phantom.max_c() + 1e-9);
    }

    #[test]
    fn phantom_two_reflectors_regime() {
        let p = make_phantom(
            PhantomKind::TwoReflectors,
            &PhantomParams {
                nx: 30,
                ny: 30,
                h: 10.0,
                origin: (0.0, 0.0),
                background: 2000.0,
                background_gradient: 3.4,
                reflector_velocity: 1000.0,
                accessible: None,
            },
        )
        .unwrap();
        assert_abs_diff_eq!(p.min_c(), 1000.0);
        assert!(p.max_c() > 2000.0 && p.max_c() < 3100.0);
    }

    #[test]
    fn phantom_point_zero_contrast_is_background() {
        let params = PhantomParams {
            nx: 20,
            ny: 20,
            h: 5.0,
            origin: (0.0, 0.0),
            background: 1500.0,
            background_gradient: 0.0,
            reflector_velocity: 1200.0,
            accessible: None,
        };
        let p = make_phantom(PhantomKind::Point { at: (0.5, 0.5), contrast: 0.0 }, &params).unwrap();
        for &v in &p.c {
            assert_abs_diff_eq!(v, 1500.0);
        }
        assert!(make_phantom(PhantomKind::Point { at: (1.5, 0.5), contrast: 0.1 }, &params).is_err());
    }

    #[test]
    fn phantom_circular_fits_or_rejects() {
        let params = PhantomParams {
            nx: 40,
            ny: 40,
            h: 0.005,
            origin: (0.0, 0.0),
            background: 1500.0,
            background_gradient: 0.0,
            reflector_velocity: 1560.0,
            accessible: Some(Edge::ALL.to_vec()),
        };
        let p = make_phantom(PhantomKind::CircularPhantom { diameter: 0.17 }, &params).unwrap();
        assert!(p.min_c() > 0.0);
        assert!(
            make_phantom(PhantomKind::CircularPhantom { diameter: 0.5 }, &params).is_err()
        );
    }
}
