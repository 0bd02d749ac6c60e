//! Exact-in-discretization wave propagation.
//!
//! The discrete one-sample propagator is `P_h = T_s(P_fine)` with
//! `P_fine = I + (tau/s)^2 A_h / 2`, i.e. `s` fine leapfrog steps per data
//! sample composed through the Chebyshev identity `T_k(T_s(x)) = T_{ks}(x)`.
//! With this choice every Chebyshev-moment identity used by the ROM assembly
//! holds exactly for the discrete data, so interpolation is testable at
//! machine precision instead of being discretization limited.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::chebyshev;
use crate::media::{
    build_symmetrized_operator, build_transducer_field, SymmetrizedOperator, TransducerArray,
    VelocityModel, WaveletSpec,
};
use crate::{Error, Result};

/// Stability margin: default substep count is the smallest `s` with
/// `(tau/s)^2 * lambda_max <= 3.6` (10% below the limit of 4).
pub const STABILITY_TARGET: f64 = 3.6;

/// One-sample discrete propagator `T_s(I + (tau/s)^2 A_h / 2)`.
pub struct DiscretePropagator<'a> {
    op: &'a SymmetrizedOperator,
    tau: f64,
    substeps: usize,
}

impl<'a> DiscretePropagator<'a> {
    pub fn new(op: &'a SymmetrizedOperator, tau: f64, substeps: usize) -> Result<Self> {
        if substeps < 1 {
            return Err(Error::Validation("substep count must be at least 1".into()));
        }
        let fine = tau / substeps as f64;
        let product = fine * fine * op.lambda_max();
        if product >= 4.0 {
            return Err(Error::Unstable {
                lambda_max: op.lambda_max(),
                product,
            });
        }
        Ok(Self { op, tau, substeps })
    }

    /// Default substep rule, see [`STABILITY_TARGET`].
    pub fn with_default_substeps(op: &'a SymmetrizedOperator, tau: f64) -> Result<Self> {
        Self::new(op, tau, default_substeps(op, tau))
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn substeps(&self) -> usize {
        self.substeps
    }

    pub fn operator(&self) -> &SymmetrizedOperator {
        self.op
    }

    /// One leapfrog fine step: from the pair `(f(t), f(t +- dt))` produce
    /// `f(t -+ dt) = 2 P_fine f(t) - f(t +- dt)`. The scheme is symmetric in
    /// time, so the same step marches forward and backward; reverse-time
    /// migration uses it to run fields backwards.
    pub fn leapfrog(&self, cur: &DMatrix<f64>, other: &DMatrix<f64>) -> DMatrix<f64> {
        2.0 * self.fine_apply(cur) - other
    }

    fn fine_apply(&self, f: &DMatrix<f64>) -> DMatrix<f64> {
        let fine = self.tau / self.substeps as f64;
        let mut out = self.op.apply(f);
        out *= fine * fine / 2.0;
        out += f;
        out
    }

    /// `T_s(P_fine) f` by the three-term recurrence.
    pub fn apply(&self, f: &DMatrix<f64>) -> DMatrix<f64> {
        if self.substeps == 1 {
            return self.fine_apply(f);
        }
        let mut prev = f.clone();
        let mut cur = self.fine_apply(f);
        for _ in 1..self.substeps {
            let next = 2.0 * self.fine_apply(&cur) - &prev;
            prev = cur;
            cur = next;
        }
        cur
    }
}

/// Smallest substep count meeting the stability target.
pub fn default_substeps(op: &SymmetrizedOperator, tau: f64) -> usize {
    let s = (tau * (op.lambda_max() / STABILITY_TARGET).sqrt()).ceil();
    (s as usize).max(1)
}

/// The first `n` symmetrized snapshots `u^k = T_k(P_h) b` on the grid.
#[derive(Debug, Clone)]
pub struct SnapshotSet {
    blocks: Vec<DMatrix<f64>>,
    tau: f64,
}

impl SnapshotSet {
    /// Assemble a snapshot set from per-sample `N x m` blocks.
    pub fn from_blocks(blocks: Vec<DMatrix<f64>>, tau: f64) -> Self {
        assert!(!blocks.is_empty());
        SnapshotSet { blocks, tau }
    }

    pub fn n(&self) -> usize {
        self.blocks.len()
    }

    pub fn m(&self) -> usize {
        self.blocks[0].ncols()
    }

    pub fn n_nodes(&self) -> usize {
        self.blocks[0].nrows()
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn block(&self, k: usize) -> &DMatrix<f64> {
        &self.blocks[k]
    }

    pub fn blocks(&self) -> &[DMatrix<f64>] {
        &self.blocks
    }
}

/// Data provenance carried with sampled data matrices.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Provenance {
    Clean,
    Noisy { epsilon: f64, seed: u64 },
    Regularized { mu: f64 },
}

/// The `2n` symmetric `m x m` data matrices `D^k`, the only input the ROM
/// pipeline may consume.
#[derive(Debug, Clone)]
pub struct SampledData {
    samples: Vec<DMatrix<f64>>,
    tau: f64,
    provenance: Provenance,
    /// Max relative asymmetry observed before symmetrization.
    sym_deviation: f64,
}

impl SampledData {
    /// Wrap externally produced samples, symmetrizing each one.
    pub fn new(samples: Vec<DMatrix<f64>>, tau: f64, provenance: Provenance) -> Result<Self> {
        if samples.len() < 2 || samples.len() % 2 != 0 {
            return Err(Error::Validation(format!(
                "need an even number (>= 2) of data samples, got {}",
                samples.len()
            )));
        }
        let m = samples[0].nrows();
        let mut sym_deviation = 0.0f64;
        let mut stored = Vec::with_capacity(samples.len());
        for (k, d) in samples.into_iter().enumerate() {
            if d.nrows() != m || d.ncols() != m {
                return Err(Error::Mismatch(format!(
                    "data sample {k} is {}x{}, expected {m}x{m}",
                    d.nrows(),
                    d.ncols()
                )));
            }
            let sym = (&d + d.transpose()) * 0.5;
            let norm = d.norm();
            if norm > 0.0 {
                sym_deviation = sym_deviation.max((&d - d.transpose()).norm() / (2.0 * norm));
            }
            stored.push(sym);
        }
        Ok(Self {
            samples: stored,
            tau,
            provenance,
            sym_deviation,
        })
    }

    pub fn m(&self) -> usize {
        self.samples[0].nrows()
    }

    /// Total sample count `2n`.
    pub fn n2(&self) -> usize {
        self.samples.len()
    }

    /// Krylov block count `n`.
    pub fn n(&self) -> usize {
        self.samples.len() / 2
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn sym_deviation(&self) -> f64 {
        self.sym_deviation
    }

    pub fn sample(&self, k: usize) -> &DMatrix<f64> {
        &self.samples[k]
    }

    pub fn samples(&self) -> &[DMatrix<f64>] {
        &self.samples
    }

    /// Restrict every sample to the `(lo..=hi, lo..=hi)` transducer block.
    pub fn restrict(&self, lo: usize, hi: usize) -> Result<Self> {
        if lo > hi || hi >= self.m() {
            return Err(Error::Validation(format!(
                "sub-array range [{lo}, {hi}] invalid for m = {}",
                self.m()
            )));
        }
        let w = hi - lo + 1;
        let samples = self
            .samples
            .iter()
            .map(|d| d.view((lo, lo), (w, w)).into_owned())
            .collect();
        Ok(Self {
            samples,
            tau: self.tau,
            provenance: self.provenance,
            sym_deviation: self.sym_deviation,
        })
    }

    pub fn with_provenance(mut self, provenance: Provenance) -> Self {
        self.provenance = provenance;
        self
    }
}

/// Forward simulation output: grid snapshots plus sampled array data.
pub struct Simulation {
    pub snapshots: SnapshotSet,
    pub data: SampledData,
    pub substeps: usize,
}

/// `u^0 = b`, `u^1 = P_h b`, `u^{k+1} = 2 P_h u^k - u^{k-1}`; exactly `n`
/// blocks.
pub fn compute_snapshots(
    prop: &DiscretePropagator,
    b: &DMatrix<f64>,
    n: usize,
) -> Result<SnapshotSet> {
    if n == 0 {
        return Err(Error::Validation("snapshot count must be positive".into()));
    }
    let mut blocks = Vec::with_capacity(n);
    blocks.push(b.clone());
    if n > 1 {
        blocks.push(prop.apply(b));
    }
    for k in 2..n {
        let next = 2.0 * prop.apply(&blocks[k - 1]) - &blocks[k - 2];
        if !next.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite { step: k });
        }
        blocks.push(next);
    }
    Ok(SnapshotSet {
        blocks,
        tau: prop.tau(),
    })
}

/// Simulate the sampled data and keep the first `n` snapshots.
///
/// `D^k = b^T u^k h^2` with the `h^2` quadrature weight; snapshots are
/// extended to `2n` by the same recursion for the data samples.
pub fn simulate(
    op: &SymmetrizedOperator,
    array: &TransducerArray,
    w: &WaveletSpec,
    substeps: Option<usize>,
) -> Result<Simulation> {
    let b = build_transducer_field(op, array, w)?;
    let substeps = substeps.unwrap_or_else(|| default_substeps(op, w.tau));
    let prop = DiscretePropagator::new(op, w.tau, substeps)?;
    let all = compute_snapshots(&prop, &b, w.n2)?;
    let h2 = op.grid().h * op.grid().h;
    let samples: Vec<DMatrix<f64>> = all
        .blocks
        .iter()
        .map(|u| (b.transpose() * u) * h2)
        .collect();
    let data = SampledData::new(samples, w.tau, Provenance::Clean)?;
    let snapshots = SnapshotSet {
        blocks: all.blocks[..w.n()].to_vec(),
        tau: w.tau,
    };
    Ok(Simulation {
        snapshots,
        data,
        substeps,
    })
}

/// Convenience wrapper building the operator from a model.
pub fn simulate_data(
    model: &VelocityModel,
    array: &TransducerArray,
    w: &WaveletSpec,
    substeps: Option<usize>,
) -> Result<SampledData> {
    let op = build_symmetrized_operator(model)?;
    Ok(simulate(&op, array, w, substeps)?.data)
}

/// Node-count guard for the dense oracle.
pub const DENSE_ORACLE_MAX_NODES: usize = 2500;

/// Dense eigendecomposition oracle: exact propagator, snapshots, and data on
/// tiny grids, computed by a route independent of the sparse recursion.
pub struct DenseOracle {
    /// Dense one-sample propagator `P_h`.
    pub propagator: DMatrix<f64>,
    /// Transducer field computed via the dense eigendecomposition.
    pub b: DMatrix<f64>,
    /// `T_k(P_h) b` for `k = 0 .. 2n-1`.
    pub snapshots: Vec<DMatrix<f64>>,
    /// `b^T T_k(P_h) b h^2` for `k = 0 .. 2n-1`.
    pub data: Vec<DMatrix<f64>>,
    pub eigenvalues: Vec<f64>,
}

pub fn dense_oracle(
    model: &VelocityModel,
    array: &TransducerArray,
    w: &WaveletSpec,
    substeps: Option<usize>,
) -> Result<DenseOracle> {
    let op = build_symmetrized_operator(model)?;
    let n_nodes = op.n_nodes();
    if n_nodes > DENSE_ORACLE_MAX_NODES {
        return Err(Error::Validation(format!(
            "dense oracle limited to {DENSE_ORACLE_MAX_NODES} nodes, got {n_nodes}"
        )));
    }
    let substeps = substeps.unwrap_or_else(|| default_substeps(&op, w.tau));
    let fine = w.tau / substeps as f64;
    if fine * fine * op.lambda_max() >= 4.0 {
        return Err(Error::Unstable {
            lambda_max: op.lambda_max(),
            product: fine * fine * op.lambda_max(),
        });
    }
    let a = op.to_dense();
    let eig = SymmetricEigen::new(a);
    let q = &eig.eigenvectors;

    // Transducer delta block theta * e.
    let m = array.m();
    let mut e = DMatrix::zeros(n_nodes, m);
    for (j, &(ix, iy)) in array.positions().iter().enumerate() {
        e[(op.grid().idx(ix, iy), j)] = array.theta()[j] / op.grid().h;
    }
    // b = exp(sigma^2 A / 4) theta e through the eigendecomposition.
    let exp_diag = eig
        .eigenvalues
        .map(|l| (w.sigma * w.sigma * l / 4.0).exp());
    let qt_e = q.transpose() * &e;
    let mut scaled = qt_e.clone();
    for (i, mut row) in scaled.row_iter_mut().enumerate() {
        row *= exp_diag[i];
    }
    let b = q * &scaled;

    // Fine-step symbol and one-sample eigenvalues mu_i = T_s(1 + dt^2 l / 2).
    let mu: Vec<f64> = eig
        .eigenvalues
        .iter()
        .map(|&l| chebyshev::eval_tk(substeps, 1.0 + fine * fine * l / 2.0))
        .collect();
    let mut p_scaled = q.transpose().clone();
    for (i, mut row) in p_scaled.row_iter_mut().enumerate() {
        row *= mu[i];
    }
    let propagator = q * &p_scaled;

    let qt_b = q.transpose() * &b;
    let h2 = op.grid().h * op.grid().h;
    let mut snapshots = Vec::with_capacity(w.n2);
    let mut data = Vec::with_capacity(w.n2);
    for k in 0..w.n2 {
        let mut sk = qt_b.clone();
        for (i, mut row) in sk.row_iter_mut().enumerate() {
            row *= chebyshev::eval_tk(k, mu[i]);
        }
        let snap = q * &sk;
        data.push((b.transpose() * &snap) * h2);
        snapshots.push(snap);
    }

    Ok(DenseOracle {
        propagator,
        b,
        snapshots,
        data,
        eigenvalues: eig.eigenvalues.iter().cloned().collect(),
    })
}
