//! Imaging functionals: ROM backprojection, composite sub-array imaging, a
//! reverse time migration (RTM) baseline, depth scaling, and diagnostics.
//!
//! The central object is the backprojection image
//! `I_BP(x) = V_o(x) (P~ - P~_o) V_o^T(x)`, where `V_o` is the orthonormal
//! snapshot basis of a smooth kinematic model, `P~` is the reduced
//! propagator built from measured data, and `P~_o` is its kinematic
//! counterpart. Reflectors perturb the propagator; projecting the
//! perturbation back onto the kinematic basis localizes it in space.

use nalgebra::DMatrix;
use sha2::{Digest, Sha256};

use crate::media::{
    build_symmetrized_operator, build_transducer_field, Grid2D, TransducerArray, VelocityModel,
    WaveletSpec,
};
use crate::propagate::{compute_snapshots, simulate, DiscretePropagator, SampledData};
use crate::regularization::scale_zero_lag;
use crate::rom::{
    assemble_mass, orthogonalize_snapshots_against, orthogonalize_snapshots_with, reduce_with,
    DiagonalConvention, OrthonormalBasis, ReducedModel,
};
use crate::{Error, Result};

/// How an image was produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImageMethod {
    Backprojection,
    CompositeBackprojection,
    Rtm,
}

/// Sub-array partition for composite imaging: inclusive transducer index
/// ranges (0-based) with positive weights. Ranges may overlap.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SubArrayPartition {
    /// Inclusive `(lo, hi)` transducer index ranges.
    pub ranges: Vec<(usize, usize)>,
    /// One positive weight per range.
    pub weights: Vec<f64>,
}

impl SubArrayPartition {
    /// Uniformly weighted partition.
    pub fn uniform(ranges: Vec<(usize, usize)>) -> Self {
        let weights = vec![1.0; ranges.len()];
        SubArrayPartition { ranges, weights }
    }

    pub fn validate(&self, m: usize) -> Result<()> {
        if self.ranges.is_empty() {
            return Err(Error::Validation("partition has no sub-arrays".into()));
        }
        if self.ranges.len() != self.weights.len() {
            return Err(Error::Mismatch(format!(
                "{} ranges but {} weights",
                self.ranges.len(),
                self.weights.len()
            )));
        }
        for &(lo, hi) in &self.ranges {
            if lo > hi || hi >= m {
                return Err(Error::Validation(format!(
                    "sub-array range [{lo}, {hi}] invalid for m = {m}"
                )));
            }
            if hi - lo + 1 < 2 {
                return Err(Error::Validation(format!(
                    "sub-array range [{lo}, {hi}] has fewer than 2 transducers"
                )));
            }
        }
        for &w in &self.weights {
            if !(w > 0.0) {
                return Err(Error::Validation(format!("weight must be positive, got {w}")));
            }
        }
        Ok(())
    }
}

/// Scalar imaging field on a grid with provenance metadata.
#[derive(Debug, Clone)]
pub struct Image {
    pub grid: Grid2D,
    /// Row-major node values, `iy * nx + ix`.
    pub values: Vec<f64>,
    pub method: ImageMethod,
    /// Hash of the kinematic velocity model.
    pub kinematic_hash: String,
    /// Hash of the input data that produced the data-side ROM.
    pub data_hash: String,
    /// `(a0, a1)` if depth scaling was applied.
    pub depth_scaling: Option<(f64, f64)>,
    /// Partition used, for composite images.
    pub partition: Option<SubArrayPartition>,
}

impl Image {
    fn new(grid: Grid2D, values: Vec<f64>, method: ImageMethod) -> Result<Self> {
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { step: pos });
        }
        Ok(Image {
            grid,
            values,
            method,
            kinematic_hash: String::new(),
            data_hash: String::new(),
            depth_scaling: None,
            partition: None,
        })
    }

    pub fn value(&self, ix: usize, iy: usize) -> f64 {
        self.values[self.grid.idx(ix, iy)]
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |a, &v| a.max(v.abs()))
    }

    /// Grid node of the largest absolute value.
    pub fn argmax_abs(&self) -> (usize, usize) {
        let (idx, _) = self
            .values
            .iter()
            .enumerate()
            .fold((0, 0.0f64), |(bi, bv), (i, &v)| {
                if v.abs() > bv {
                    (i, v.abs())
                } else {
                    (bi, bv)
                }
            });
        self.grid.node(idx)
    }
}

/// Hex SHA-256 of a velocity model (grid shape plus node velocities).
pub fn model_hash(model: &VelocityModel) -> String {
    let mut hasher = Sha256::new();
    hasher.update((model.grid.nx as u64).to_le_bytes());
    hasher.update((model.grid.ny as u64).to_le_bytes());
    hasher.update(model.grid.h.to_le_bytes());
    for &v in &model.c {
        hasher.update(v.to_le_bytes());
    }
    hasher
        .finalize()
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Simulate the kinematic model and return its orthonormal snapshot basis
/// together with its reduced model (both under the same diagonal-block
/// convention, which the imaging difference requires).
pub fn kinematic_basis(
    c_o: &VelocityModel,
    array: &TransducerArray,
    w: &WaveletSpec,
    substeps: Option<usize>,
    convention: DiagonalConvention,
) -> Result<(OrthonormalBasis, ReducedModel)> {
    kinematic_basis_regularized(c_o, array, w, substeps, convention, 1.0)
}

/// [`kinematic_basis`] with the kinematic data's zero-lag sample scaled by
/// `mu` before reduction and orthogonalization.
///
/// When the measured data has been regularized, the same scaling must be
/// applied on the kinematic side: otherwise the zero-lag perturbation does
/// not cancel in `P~ - P~_o` and swamps the image with artifacts near the
/// array.
pub fn kinematic_basis_regularized(
    c_o: &VelocityModel,
    array: &TransducerArray,
    w: &WaveletSpec,
    substeps: Option<usize>,
    convention: DiagonalConvention,
    mu: f64,
) -> Result<(OrthonormalBasis, ReducedModel)> {
    if !(mu >= 1.0) {
        return Err(Error::Validation(format!(
            "zero-lag scaling must satisfy mu >= 1, got {mu}"
        )));
    }
    let op = build_symmetrized_operator(c_o)?;
    let sim = simulate(&op, array, w, substeps)?;
    if mu == 1.0 {
        let (basis, _) = orthogonalize_snapshots_with(&sim.snapshots, c_o.grid.h, convention)?;
        let rm = reduce_with(&sim.data, convention)?;
        return Ok((basis, rm));
    }
    let scaled = scale_zero_lag(&sim.data, mu);
    let rm = reduce_with(&scaled, convention)?;
    // The basis must live in the same scaled coordinates, so its
    // orthogonalizer comes from the scaled data's mass matrix rather than
    // the raw snapshot Gramian.
    let mass = assemble_mass(&scaled);
    let (basis, _) =
        orthogonalize_snapshots_against(&sim.snapshots, &mass.mat, c_o.grid.h, convention)?;
    Ok((basis, rm))
}

fn check_compatible(data: &SampledData, array: &TransducerArray, w: &WaveletSpec) -> Result<()> {
    if data.m() != array.m() {
        return Err(Error::Mismatch(format!(
            "data has m = {} but array has m = {}",
            data.m(),
            array.m()
        )));
    }
    if data.n2() != w.n2 {
        return Err(Error::Mismatch(format!(
            "data has {} samples but wavelet specifies {}",
            data.n2(),
            w.n2
        )));
    }
    if (data.tau() - w.tau).abs() > 1e-12 * w.tau.abs().max(1.0) {
        return Err(Error::Mismatch(format!(
            "data tau = {} but wavelet tau = {}",
            data.tau(),
            w.tau
        )));
    }
    Ok(())
}

/// Stack the basis blocks into an `N x mn` matrix matching the reduced
/// propagator's block ordering.
fn stack_basis(basis: &OrthonormalBasis) -> DMatrix<f64> {
    let (n, m, nn) = (basis.n(), basis.m(), basis.n_nodes());
    let mut v = DMatrix::zeros(nn, m * n);
    for k in 0..n {
        v.view_mut((0, k * m), (nn, m)).copy_from(basis.block(k));
    }
    v
}

/// `I_BP(x) = V_o(x) (P~ - P~_o) V_o^T(x)` at every grid node.
///
/// Both the data-side and kinematic-side reductions run under the given
/// diagonal-block convention; the difference of the two projected
/// propagators is only meaningful in a common convention.
///
/// ```
/// use rombp::imaging::backprojection_image;
/// use rombp::media::{BoundaryLabels, Edge, Grid2D, TransducerArray, VelocityModel, WaveletSpec};
/// use rombp::propagate::simulate_data;
/// use rombp::rom::DiagonalConvention;
///
/// let grid = Grid2D::new(16, 16, 1.0, (0.0, 0.0))?;
/// let boundary = BoundaryLabels::top_accessible();
/// // Truth: a slow square inclusion in a unit background.
/// let c: Vec<f64> = (0..grid.n_nodes())
///     .map(|i| {
///         let (ix, iy) = grid.node(i);
///         if (6..10).contains(&ix) && (8..11).contains(&iy) { 0.8 } else { 1.0 }
///     })
///     .collect();
/// let truth = VelocityModel::new(grid.clone(), c, boundary.clone())?;
/// // Kinematic model: the background only.
/// let kinematic = VelocityModel::constant(grid, 1.0, boundary)?;
///
/// let array = TransducerArray::uniform_on_edge(&truth, Edge::Top, 3, 2)?;
/// let wavelet = WaveletSpec::from_tau(1.2, 12)?;
/// let data = simulate_data(&truth, &array, &wavelet, None)?;
///
/// let image = backprojection_image(
///     &data, &kinematic, &array, &wavelet, None, DiagonalConvention::SpdSqrt,
/// )?;
/// assert_eq!(image.values.len(), image.grid.n_nodes());
/// assert!(image.max_abs() > 0.0);
/// # Ok::<(), rombp::Error>(())
/// ```
pub fn backprojection_image(
    data: &SampledData,
    c_o: &VelocityModel,
    array: &TransducerArray,
    w: &WaveletSpec,
    substeps: Option<usize>,
    convention: DiagonalConvention,
) -> Result<Image> {
    check_compatible(data, array, w)?;
    let rm = reduce_with(data, convention)?;
    let (basis, rm_o) =
        kinematic_basis_regularized(c_o, array, w, substeps, convention, rm.mu)?;
    let image = backprojection_from_parts(&basis, &rm, &rm_o, c_o)?;
    Ok(image)
}

/// Backprojection from precomputed parts; the basis is the expensive piece
/// and can be reused across data sets.
pub fn backprojection_from_parts(
    basis: &OrthonormalBasis,
    rm: &ReducedModel,
    rm_o: &ReducedModel,
    c_o: &VelocityModel,
) -> Result<Image> {
    if rm.m != rm_o.m || rm.n != rm_o.n {
        return Err(Error::Mismatch(format!(
            "data ROM is {}x{} blocks but kinematic ROM is {}x{}",
            rm.n, rm.m, rm_o.n, rm_o.m
        )));
    }
    if rm.convention != rm_o.convention {
        return Err(Error::Mismatch(format!(
            "diagonal conventions differ: data {:?} vs kinematic {:?}",
            rm.convention, rm_o.convention
        )));
    }
    if rm.mu != rm_o.mu {
        return Err(Error::Mismatch(format!(
            "zero-lag scalings differ: data mu = {} vs kinematic mu = {}",
            rm.mu, rm_o.mu
        )));
    }
    if basis.n() != rm.n || basis.m() != rm.m {
        return Err(Error::Mismatch(format!(
            "basis is {} blocks of width {} but ROM is {} blocks of width {}",
            basis.n(),
            basis.m(),
            rm.n,
            rm.m
        )));
    }
    let v = stack_basis(basis);
    let dp = &rm.p - &rm_o.p;
    let w = &v * dp;
    let values: Vec<f64> = (0..v.nrows())
        .map(|i| w.row(i).dot(&v.row(i)))
        .collect();
    let mut image = Image::new(c_o.grid.clone(), values, ImageMethod::Backprojection)?;
    image.kinematic_hash = model_hash(c_o);
    image.data_hash = rm.data_hash.clone();
    Ok(image)
}

/// Multiply each node by `a0 + a1 * dist(x, array)`, the distance taken to
/// the nearest transducer.
pub fn depth_scale(img: &Image, array: &TransducerArray, a0: f64, a1: f64) -> Result<Image> {
    if !(a0 >= 0.0 && a1 >= 0.0) {
        return Err(Error::Validation(format!(
            "depth scaling coefficients must be nonnegative, got a0 = {a0}, a1 = {a1}"
        )));
    }
    let grid = &img.grid;
    let mut out = img.clone();
    for iy in 0..grid.ny {
        for ix in 0..grid.nx {
            let (x, y) = grid.coords(ix, iy);
            let dist = array
                .positions()
                .iter()
                .map(|&(tx, ty)| {
                    let (px, py) = grid.coords(tx, ty);
                    ((x - px).powi(2) + (y - py).powi(2)).sqrt()
                })
                .fold(f64::INFINITY, f64::min);
            out.values[grid.idx(ix, iy)] *= a0 + a1 * dist;
        }
    }
    out.depth_scaling = Some((a0, a1));
    Ok(out)
}

/// What to do when a sub-array's ROM factorization fails.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SubArrayFailurePolicy {
    /// Abort the composite image.
    Fail,
    /// Log the failed sub-array index and continue with the rest.
    Skip,
}

/// Composite image: weighted sum of backprojection images from diagonal
/// data blocks `D^k_{S_i, S_i}` of the full array data.
///
/// Returns the image and the indices of sub-arrays skipped under the
/// [`SubArrayFailurePolicy::Skip`] policy.
pub fn composite_image(
    data: &SampledData,
    partition: &SubArrayPartition,
    c_o: &VelocityModel,
    array: &TransducerArray,
    w: &WaveletSpec,
    substeps: Option<usize>,
    convention: DiagonalConvention,
    policy: SubArrayFailurePolicy,
) -> Result<(Image, Vec<usize>)> {
    check_compatible(data, array, w)?;
    partition.validate(array.m())?;
    let grid = c_o.grid.clone();
    let mut values = vec![0.0f64; grid.n_nodes()];
    let mut skipped = Vec::new();
    for (i, (&(lo, hi), &eta)) in partition.ranges.iter().zip(&partition.weights).enumerate() {
        let sub_data = data.restrict(lo, hi)?;
        let sub_array = array.restrict(lo, hi)?;
        match backprojection_image(&sub_data, c_o, &sub_array, w, substeps, convention) {
            Ok(img) => {
                for (acc, v) in values.iter_mut().zip(&img.values) {
                    *acc += eta * v;
                }
            }
            Err(e) if policy == SubArrayFailurePolicy::Skip && !e.is_validation() => {
                skipped.push(i);
            }
            Err(e) => return Err(e),
        }
    }
    if skipped.len() == partition.ranges.len() {
        return Err(Error::NotPositiveDefinite {
            block: 0,
            min_eig: f64::NAN,
        });
    }
    let mut image = Image::new(grid, values, ImageMethod::CompositeBackprojection)?;
    image.kinematic_hash = model_hash(c_o);
    image.data_hash = crate::rom::data_hash(data);
    image.partition = Some(partition.clone());
    Ok((image, skipped))
}

/// Reverse time migration baseline with a zero-lag cross-correlation imaging
/// condition.
///
/// The residual `R^k = D^k - D_o^k` (measured minus kinematic-predicted,
/// which removes the direct arrival) is re-injected at the receiver
/// positions in reverse time; the image is the sum over sources and sample
/// times of the forward kinematic field times the back-propagated residual
/// field.
pub fn rtm_image(
    data: &SampledData,
    c_o: &VelocityModel,
    array: &TransducerArray,
    w: &WaveletSpec,
    substeps: Option<usize>,
) -> Result<Image> {
    check_compatible(data, array, w)?;
    let op = build_symmetrized_operator(c_o)?;
    let b = build_transducer_field(&op, array, w)?;
    let substeps = substeps.unwrap_or_else(|| crate::propagate::default_substeps(&op, w.tau));
    let prop = DiscretePropagator::new(&op, w.tau, substeps)?;

    // Forward kinematic fields u^k = T_k(P) b for all sample times, and the
    // predicted data they generate.
    let forward = compute_snapshots(&prop, &b, w.n2)?;
    let h2 = op.grid().h * op.grid().h;
    let residuals: Vec<DMatrix<f64>> = (0..w.n2)
        .map(|k| {
            let raw = (b.transpose() * forward.block(k)) * h2;
            // Symmetrize exactly like the stored measured samples so that
            // data predicted by this pipeline cancels bitwise.
            let predicted = (&raw + raw.transpose()) * 0.5;
            data.sample(k) - predicted
        })
        .collect();

    // Backward sweep: inject B R^k at each sample time, correlate with the
    // forward field, then march one sample interval backwards in fine
    // leapfrog steps (the scheme is time-symmetric).
    let n_nodes = op.n_nodes();
    let m = array.m();
    let mut values = vec![0.0f64; n_nodes];
    let mut cur = DMatrix::<f64>::zeros(n_nodes, m);
    let mut ahead = DMatrix::<f64>::zeros(n_nodes, m);
    for k in (0..w.n2).rev() {
        cur += &b * &residuals[k];
        let u = forward.block(k);
        for i in 0..n_nodes {
            let mut acc = 0.0;
            for j in 0..m {
                acc += u[(i, j)] * cur[(i, j)];
            }
            values[i] += acc;
        }
        if k > 0 {
            for _ in 0..substeps {
                let behind = prop.leapfrog(&cur, &ahead);
                ahead = std::mem::replace(&mut cur, behind);
            }
        }
    }

    let mut image = Image::new(c_o.grid.clone(), values, ImageMethod::Rtm)?;
    image.kinematic_hash = model_hash(c_o);
    image.data_hash = crate::rom::data_hash(data);
    Ok(image)
}

/// The kernel slice `y -> [V_a V_b^T](x_alpha, y)`, a diagnostic for how
/// well the basis outer product approximates a delta function.
pub fn delta_diagnostic(
    va: &OrthonormalBasis,
    vb: &OrthonormalBasis,
    node: usize,
) -> Result<Vec<f64>> {
    if va.n() != vb.n() || va.m() != vb.m() || va.n_nodes() != vb.n_nodes() {
        return Err(Error::Mismatch(format!(
            "bases differ: ({}, {}, {}) vs ({}, {}, {})",
            va.n(),
            va.m(),
            va.n_nodes(),
            vb.n(),
            vb.m(),
            vb.n_nodes()
        )));
    }
    if node >= va.n_nodes() {
        return Err(Error::Validation(format!(
            "probe node {node} outside grid of {} nodes",
            va.n_nodes()
        )));
    }
    let mut field = vec![0.0f64; va.n_nodes()];
    for k in 0..va.n() {
        let a = va.block(k);
        let b = vb.block(k);
        for y in 0..field.len() {
            let mut acc = 0.0;
            for c in 0..va.m() {
                acc += a[(node, c)] * b[(y, c)];
            }
            field[y] += acc;
        }
    }
    Ok(field)
}

/// Schrödinger potential `q = sqrt(sigma) div(c grad(1 / sqrt(sigma)))` by
/// centered differences (one-sided at edges).
pub fn schrodinger_potential(model: &VelocityModel, sigma: &[f64]) -> Result<Vec<f64>> {
    let grid = &model.grid;
    if sigma.len() != grid.n_nodes() {
        return Err(Error::Mismatch(format!(
            "sigma has {} values for a grid of {} nodes",
            sigma.len(),
            grid.n_nodes()
        )));
    }
    if let Some(pos) = sigma.iter().position(|&s| !(s > 0.0)) {
        let (ix, iy) = grid.node(pos);
        return Err(Error::Validation(format!(
            "impedance must be positive, got {} at node ({ix}, {iy})",
            sigma[pos]
        )));
    }
    let (nx, ny, h) = (grid.nx, grid.ny, grid.h);
    let g: Vec<f64> = sigma.iter().map(|&s| 1.0 / s.sqrt()).collect();

    // First derivative with centered interior, one-sided edges.
    let dx = |f: &dyn Fn(usize, usize) -> f64, ix: usize, iy: usize| -> f64 {
        if ix == 0 {
            (f(1, iy) - f(0, iy)) / h
        } else if ix == nx - 1 {
            (f(nx - 1, iy) - f(nx - 2, iy)) / h
        } else {
            (f(ix + 1, iy) - f(ix - 1, iy)) / (2.0 * h)
        }
    };
    let dy = |f: &dyn Fn(usize, usize) -> f64, ix: usize, iy: usize| -> f64 {
        if iy == 0 {
            (f(ix, 1) - f(ix, 0)) / h
        } else if iy == ny - 1 {
            (f(ix, ny - 1) - f(ix, ny - 2)) / h
        } else {
            (f(ix, iy + 1) - f(ix, iy - 1)) / (2.0 * h)
        }
    };

    let gf = |ix: usize, iy: usize| g[grid.idx(ix, iy)];
    let mut fx = vec![0.0f64; grid.n_nodes()];
    let mut fy = vec![0.0f64; grid.n_nodes()];
    for iy in 0..ny {
        for ix in 0..nx {
            let c = model.c[grid.idx(ix, iy)];
            fx[grid.idx(ix, iy)] = c * dx(&gf, ix, iy);
            fy[grid.idx(ix, iy)] = c * dy(&gf, ix, iy);
        }
    }
    let fxf = |ix: usize, iy: usize| fx[grid.idx(ix, iy)];
    let fyf = |ix: usize, iy: usize| fy[grid.idx(ix, iy)];
    let mut q = vec![0.0f64; grid.n_nodes()];
    for iy in 0..ny {
        for ix in 0..nx {
            let div = dx(&fxf, ix, iy) + dy(&fyf, ix, iy);
            q[grid.idx(ix, iy)] = sigma[grid.idx(ix, iy)].sqrt() * div;
        }
    }
    Ok(q)
}
