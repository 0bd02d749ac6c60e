//! Reduced order model construction from sampled data only.
//!
//! The mass matrix is the snapshot Gramian expressed through the Chebyshev
//! product identity, the stiffness matrix is the Gramian against propagated
//! snapshots, and the ROM is the projection `P~ = L^-1 S L^-T`,
//! `B~ = L^-1 [D^0; ...; D^{n-1}]` where `L` is the block Cholesky factor of
//! the mass matrix. The snapshots themselves are never needed, which is what
//! makes the model data driven.

use nalgebra::{Cholesky, DMatrix};

use crate::linalg::sym_eigen;
use sha2::{Digest, Sha256};

use crate::propagate::{SampledData, SnapshotSet};
use crate::{Error, Result};

/// Scale-invariant positivity threshold: a Schur complement is declared
/// non-PD when an eigenvalue falls at or below `EPS_PD * trace`.
pub const EPS_PD: f64 = 1e-14;

/// Convention for the diagonal blocks of the block Cholesky factor. All
/// satisfy `L_kk L_kk^T = Schur_k`; they differ by an orthogonal factor that
/// cancels in resimulated data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiagonalConvention {
    /// Symmetric positive definite square root via eigendecomposition
    /// (the default; basis-symmetric and deterministic).
    SpdSqrt,
    /// Lower triangular scalar Cholesky factor.
    Cholesky,
    /// `Q Lambda^{1/2}` from the eigendecomposition.
    Eig,
}

impl Default for DiagonalConvention {
    fn default() -> Self {
        DiagonalConvention::SpdSqrt
    }
}

/// Symmetric `mn x mn` matrix of `m x m` blocks.
#[derive(Debug, Clone)]
pub struct MassMatrix {
    pub mat: DMatrix<f64>,
    pub m: usize,
    pub n: usize,
}

/// Symmetric `mn x mn` stiffness matrix of `m x m` blocks.
#[derive(Debug, Clone)]
pub struct StiffnessMatrix {
    pub mat: DMatrix<f64>,
    pub m: usize,
    pub n: usize,
}

impl MassMatrix {
    pub fn block(&self, k: usize, l: usize) -> DMatrix<f64> {
        self.mat.view((k * self.m, l * self.m), (self.m, self.m)).into_owned()
    }

    /// Leading `mn' x mn'` principal submatrix for `n' <= n`.
    pub fn leading(&self, n_lead: usize) -> DMatrix<f64> {
        let sz = n_lead * self.m;
        self.mat.view((0, 0), (sz, sz)).into_owned()
    }
}

/// `M_{k,l} = (D^{k+l} + D^{|k-l|}) / 2` for `k, l = 0 .. n-1`.
pub fn assemble_mass(data: &SampledData) -> MassMatrix {
    let (m, n) = (data.m(), data.n());
    let mut mat = DMatrix::zeros(m * n, m * n);
    for k in 0..n {
        for l in 0..n {
            let sum = data.sample(k + l) + data.sample(k.abs_diff(l));
            mat.view_mut((k * m, l * m), (m, m)).copy_from(&(sum * 0.5));
        }
    }
    MassMatrix { mat, m, n }
}

/// `S_{k,l} = (D^{k+l+1} + D^{|k-l+1|} + D^{|k+l-1|} + D^{|k-l-1|}) / 4`.
pub fn assemble_stiffness(data: &SampledData) -> StiffnessMatrix {
    let (m, n) = (data.m(), data.n());
    let idx = |v: i64| v.unsigned_abs() as usize;
    let mut mat = DMatrix::zeros(m * n, m * n);
    for k in 0..n as i64 {
        for l in 0..n as i64 {
            let sum = data.sample(idx(k + l + 1))
                + data.sample(idx(k - l + 1))
                + data.sample(idx(k + l - 1))
                + data.sample(idx(k - l - 1));
            mat.view_mut((k as usize * m, l as usize * m), (m, m))
                .copy_from(&(sum * 0.25));
        }
    }
    StiffnessMatrix { mat, m, n }
}

/// Block lower triangular Cholesky factor with per-block solves.
#[derive(Debug, Clone)]
pub struct BlockLowerTriangular {
    mat: DMatrix<f64>,
    m: usize,
    n: usize,
}

impl BlockLowerTriangular {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.mat
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn block(&self, k: usize, l: usize) -> DMatrix<f64> {
        self.mat.view((k * self.m, l * self.m), (self.m, self.m)).into_owned()
    }

    fn solve_diag(&self, k: usize, rhs: &DMatrix<f64>) -> DMatrix<f64> {
        let d = self.block(k, k);
        d.lu().solve(rhs).expect("diagonal block is invertible by construction")
    }

    fn solve_diag_transpose(&self, k: usize, rhs: &DMatrix<f64>) -> DMatrix<f64> {
        let d = self.block(k, k).transpose();
        d.lu().solve(rhs).expect("diagonal block is invertible by construction")
    }

    /// Solve `L X = B` by block forward substitution.
    pub fn solve_lower(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        assert_eq!(b.nrows(), self.m * self.n);
        let m = self.m;
        let mut x = DMatrix::zeros(b.nrows(), b.ncols());
        for k in 0..self.n {
            let mut rhs = b.view((k * m, 0), (m, b.ncols())).into_owned();
            for r in 0..k {
                rhs -= self.block(k, r) * x.view((r * m, 0), (m, b.ncols()));
            }
            let xk = self.solve_diag(k, &rhs);
            x.view_mut((k * m, 0), (m, b.ncols())).copy_from(&xk);
        }
        x
    }

    /// Solve `L^T X = B` by block backward substitution.
    pub fn solve_lower_transpose(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        assert_eq!(b.nrows(), self.m * self.n);
        let m = self.m;
        let mut x = DMatrix::zeros(b.nrows(), b.ncols());
        for k in (0..self.n).rev() {
            let mut rhs = b.view((k * m, 0), (m, b.ncols())).into_owned();
            for r in k + 1..self.n {
                // (L^T)_{k,r} = L_{r,k}^T.
                rhs -= self.block(r, k).transpose() * x.view((r * m, 0), (m, b.ncols()));
            }
            let xk = self.solve_diag_transpose(k, &rhs);
            x.view_mut((k * m, 0), (m, b.ncols())).copy_from(&xk);
        }
        x
    }
}

fn diag_factor(schur: &DMatrix<f64>, convention: DiagonalConvention, block: usize) -> Result<DMatrix<f64>> {
    let sym = (schur + schur.transpose()) * 0.5;
    let trace = sym.trace();
    let eig = sym_eigen(&sym);
    let min_eig = eig.min();
    if min_eig <= EPS_PD * trace.abs() {
        return Err(Error::NotPositiveDefinite { block, min_eig });
    }
    Ok(match convention {
        DiagonalConvention::SpdSqrt => eig.spectral_map(f64::sqrt),
        DiagonalConvention::Cholesky => Cholesky::new(sym)
            .ok_or(Error::NotPositiveDefinite { block, min_eig })?
            .l(),
        DiagonalConvention::Eig => {
            let sqrt = DMatrix::from_diagonal(&eig.values.map(f64::sqrt));
            &eig.vectors * sqrt
        }
    })
}

/// Block Cholesky decomposition `M = L L^T` of a blockwise symmetric matrix.
///
/// Diagonal blocks follow the requested convention; a Schur complement with
/// an eigenvalue at or below `EPS_PD * trace` fails with the block index,
/// which the regularization stage treats as a first-class signal.
pub fn block_cholesky_with(
    mat: &DMatrix<f64>,
    m: usize,
    n: usize,
    convention: DiagonalConvention,
) -> Result<BlockLowerTriangular> {
    assert_eq!(mat.nrows(), m * n);
    assert_eq!(mat.ncols(), m * n);
    let blk = |k: usize, l: usize| mat.view((k * m, l * m), (m, m)).into_owned();
    let mut lmat = DMatrix::zeros(m * n, m * n);
    let lblk = |lm: &DMatrix<f64>, k: usize, l: usize| lm.view((k * m, l * m), (m, m)).into_owned();
    for k in 0..n {
        let mut schur = blk(k, k);
        for r in 0..k {
            let lkr = lblk(&lmat, k, r);
            schur -= &lkr * lkr.transpose();
        }
        let lkk = diag_factor(&schur, convention, k)?;
        lmat.view_mut((k * m, k * m), (m, m)).copy_from(&lkk);
        let lkk_lu = lkk.clone().lu();
        for l in k + 1..n {
            let mut rhs = blk(l, k);
            for r in 0..k {
                rhs -= lblk(&lmat, l, r) * lblk(&lmat, k, r).transpose();
            }
            // L_{l,k} = rhs (L_{k,k}^T)^{-1}; transpose to the left solve
            // L_{k,k} X^T = rhs^T.
            let xt = lkk_lu
                .solve(&rhs.transpose())
                .expect("diagonal factor invertible");
            let llk = xt.transpose();
            lmat.view_mut((l * m, k * m), (m, m)).copy_from(&llk);
        }
    }
    Ok(BlockLowerTriangular { mat: lmat, m, n })
}

/// Block Cholesky of a mass matrix with the default SPD-square-root
/// convention.
pub fn block_cholesky(mass: &MassMatrix) -> Result<BlockLowerTriangular> {
    block_cholesky_with(&mass.mat, mass.m, mass.n, DiagonalConvention::SpdSqrt)
}

/// Data-driven reduced order model: projected propagator and transducer
/// matrix with provenance.
#[derive(Debug, Clone)]
pub struct ReducedModel {
    /// Symmetric `mn x mn` projected propagator.
    pub p: DMatrix<f64>,
    /// `mn x m` projected transducer matrix.
    pub b: DMatrix<f64>,
    pub m: usize,
    pub n: usize,
    pub convention: DiagonalConvention,
    /// Regularization parameter used upstream; 1 for clean data.
    pub mu: f64,
    /// Hex SHA-256 of the input data samples.
    pub data_hash: String,
    /// Logged asymmetry of `L^-1 S L^-T` before symmetrization.
    pub sym_deviation: f64,
}

/// Hash the raw sample bytes for provenance tracking.
pub fn data_hash(data: &SampledData) -> String {
    let mut hasher = Sha256::new();
    hasher.update((data.m() as u64).to_le_bytes());
    hasher.update((data.n2() as u64).to_le_bytes());
    hasher.update(data.tau().to_le_bytes());
    for d in data.samples() {
        for v in d.iter() {
            hasher.update(v.to_le_bytes());
        }
    }
    hex_string(&hasher.finalize())
}

fn hex_string(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Algorithm: mass, stiffness, block Cholesky, then the projection
/// `P~ = L^-1 S L^-T` and `B~ = L^-1 [D^0; ...; D^{n-1}]` by triangular
/// block solves (the factor is never inverted explicitly).
pub fn reduce_with(data: &SampledData, convention: DiagonalConvention) -> Result<ReducedModel> {
    let mass = assemble_mass(data);
    let stiff = assemble_stiffness(data);
    let l = block_cholesky_with(&mass.mat, mass.m, mass.n, convention)?;
    let y = l.solve_lower(&stiff.mat);
    let p_raw = l.solve_lower(&y.transpose()).transpose();
    let sym_deviation = {
        let norm = p_raw.norm();
        if norm > 0.0 {
            (&p_raw - p_raw.transpose()).norm() / (2.0 * norm)
        } else {
            0.0
        }
    };
    let p = (&p_raw + p_raw.transpose()) * 0.5;
    let (m, n) = (data.m(), data.n());
    let mut stacked = DMatrix::zeros(m * n, m);
    for k in 0..n {
        stacked.view_mut((k * m, 0), (m, m)).copy_from(data.sample(k));
    }
    let b = l.solve_lower(&stacked);
    let mu = match data.provenance() {
        crate::propagate::Provenance::Regularized { mu } => mu,
        _ => 1.0,
    };
    Ok(ReducedModel {
        p,
        b,
        m,
        n,
        convention,
        mu,
        data_hash: data_hash(data),
        sym_deviation,
    })
}

/// [`reduce_with`] using the default diagonal convention.
pub fn reduce(data: &SampledData) -> Result<ReducedModel> {
    reduce_with(data, DiagonalConvention::SpdSqrt)
}

impl ReducedModel {
    /// `F~^k = B~^T T_k(P~) B~` by the matrix three-term recurrence.
    pub fn resimulate(&self, k: usize) -> DMatrix<f64> {
        self.resimulate_upto(k).pop().expect("at least one term")
    }

    /// All of `F~^0 .. F~^k` in one sweep.
    pub fn resimulate_upto(&self, k: usize) -> Vec<DMatrix<f64>> {
        let mut out = Vec::with_capacity(k + 1);
        let mut prev = self.b.clone();
        out.push(self.b.transpose() * &prev);
        if k == 0 {
            return out;
        }
        let mut cur = &self.p * &self.b;
        out.push(self.b.transpose() * &cur);
        for _ in 2..=k {
            let next = 2.0 * (&self.p * &cur) - &prev;
            prev = cur;
            cur = next;
            out.push(self.b.transpose() * &cur);
        }
        out
    }

    pub fn p_block(&self, k: usize, l: usize) -> DMatrix<f64> {
        self.p.view((k * self.m, l * self.m), (self.m, self.m)).into_owned()
    }

    pub fn b_block(&self, k: usize) -> DMatrix<f64> {
        self.b.view((k * self.m, 0), (self.m, self.m)).into_owned()
    }
}

/// Report on the reduced model's expected block structure.
#[derive(Debug, Clone)]
pub struct StructureReport {
    /// Max block Frobenius norm of `P~_{k,l}`, `|k-l| >= 2`, relative to the
    /// largest block of `P~`.
    pub max_off_tridiagonal: f64,
    /// Max block norm of `B~` blocks below the first, relative to the top
    /// block.
    pub max_sub_top: f64,
    pub tol: f64,
    pub pass: bool,
}

impl std::fmt::Display for StructureReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "block structure verification (tol = {:.3e})", self.tol)?;
        writeln!(f, "  off-tridiagonal P~ blocks: {:.6e}", self.max_off_tridiagonal)?;
        writeln!(f, "  sub-top B~ blocks:         {:.6e}", self.max_sub_top)?;
        write!(f, "  verdict: {}", if self.pass { "PASS" } else { "FAIL" })
    }
}

/// Measure how far the ROM is from the block tridiagonal / top-block
/// structure it should have.
pub fn verify_structure(rm: &ReducedModel, tol: f64) -> StructureReport {
    let mut p_scale = 0.0f64;
    for k in 0..rm.n {
        for l in 0..rm.n {
            p_scale = p_scale.max(rm.p_block(k, l).norm());
        }
    }
    let mut max_off = 0.0f64;
    for k in 0..rm.n {
        for l in 0..rm.n {
            if k.abs_diff(l) >= 2 {
                max_off = max_off.max(rm.p_block(k, l).norm());
            }
        }
    }
    let b_scale = rm.b_block(0).norm();
    let mut max_sub = 0.0f64;
    for k in 1..rm.n {
        max_sub = max_sub.max(rm.b_block(k).norm());
    }
    let max_off_rel = if p_scale > 0.0 { max_off / p_scale } else { 0.0 };
    let max_sub_rel = if b_scale > 0.0 { max_sub / b_scale } else { 0.0 };
    StructureReport {
        max_off_tridiagonal: max_off_rel,
        max_sub_top: max_sub_rel,
        tol,
        pass: max_off_rel <= tol && max_sub_rel <= tol,
    }
}

/// Block-orthonormal snapshot basis on the grid: `n` fields of `N x m`
/// values with `V^T V h^2 = I`.
#[derive(Debug, Clone)]
pub struct OrthonormalBasis {
    blocks: Vec<DMatrix<f64>>,
    h: f64,
    pub convention: DiagonalConvention,
}

impl OrthonormalBasis {
    pub fn n(&self) -> usize {
        self.blocks.len()
    }

    pub fn m(&self) -> usize {
        self.blocks[0].ncols()
    }

    pub fn n_nodes(&self) -> usize {
        self.blocks[0].nrows()
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn block(&self, k: usize) -> &DMatrix<f64> {
        &self.blocks[k]
    }

    pub fn blocks(&self) -> &[DMatrix<f64>] {
        &self.blocks
    }

    /// `max |V^T V h^2 - I|` entrywise.
    pub fn orthonormality_error(&self) -> f64 {
        let (n, m) = (self.n(), self.m());
        let h2 = self.h * self.h;
        let mut err = 0.0f64;
        for k in 0..n {
            for l in 0..n {
                let g = (self.blocks[k].transpose() * &self.blocks[l]) * h2;
                for i in 0..m {
                    for j in 0..m {
                        let target = if k == l && i == j { 1.0 } else { 0.0 };
                        err = err.max((g[(i, j)] - target).abs());
                    }
                }
            }
        }
        err
    }
}

/// Implicit block Gram-Schmidt through the Gramian: `L` from the block
/// Cholesky of `U^T U h^2` and `V = U L^-T`.
///
/// Only possible when the snapshots themselves are known, i.e. for the
/// kinematic model.
pub fn orthogonalize_snapshots_with(
    snapshots: &SnapshotSet,
    h: f64,
    convention: DiagonalConvention,
) -> Result<(OrthonormalBasis, BlockLowerTriangular)> {
    let (n, m) = (snapshots.n(), snapshots.m());
    let h2 = h * h;
    let mut gram = DMatrix::zeros(m * n, m * n);
    for k in 0..n {
        for l in 0..n {
            let g = (snapshots.block(k).transpose() * snapshots.block(l)) * h2;
            gram.view_mut((k * m, l * m), (m, m)).copy_from(&g);
        }
    }
    orthogonalize_snapshots_against(snapshots, &gram, h, convention)
}

/// Orthogonalize snapshots against an externally assembled Gramian (for
/// instance the mass matrix of regularized data, whose zero-lag scaling must
/// be shared by the basis for the projected coordinates to match).
pub fn orthogonalize_snapshots_against(
    snapshots: &SnapshotSet,
    gram: &DMatrix<f64>,
    h: f64,
    convention: DiagonalConvention,
) -> Result<(OrthonormalBasis, BlockLowerTriangular)> {
    let (n, m) = (snapshots.n(), snapshots.m());
    if gram.nrows() != m * n || gram.ncols() != m * n {
        return Err(Error::Mismatch(format!(
            "gramian is {}x{} but snapshots give {} blocks of width {}",
            gram.nrows(),
            gram.ncols(),
            n,
            m
        )));
    }
    let l = block_cholesky_with(gram, m, n, convention)?;
    // U = V L^T, so v^k = (u^k - sum_{r<k} v^r L_{k,r}^T) (L_{k,k}^T)^{-1}.
    let mut blocks: Vec<DMatrix<f64>> = Vec::with_capacity(n);
    for k in 0..n {
        let mut w = snapshots.block(k).clone();
        for (r, vr) in blocks.iter().enumerate() {
            w -= vr * l.block(k, r).transpose();
        }
        // v^k L_{k,k}^T = w  =>  L_{k,k} (v^k)^T = w^T.
        let vk_t = l
            .block(k, k)
            .lu()
            .solve(&w.transpose())
            .ok_or(Error::NotPositiveDefinite { block: k, min_eig: 0.0 })?;
        blocks.push(vk_t.transpose());
    }
    Ok((
        OrthonormalBasis {
            blocks,
            h,
            convention,
        },
        l,
    ))
}

/// [`orthogonalize_snapshots_with`] using the default convention.
pub fn orthogonalize_snapshots(
    snapshots: &SnapshotSet,
    h: f64,
) -> Result<(OrthonormalBasis, BlockLowerTriangular)> {
    orthogonalize_snapshots_with(snapshots, h, DiagonalConvention::SpdSqrt)
}
