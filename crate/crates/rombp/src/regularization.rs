//! Noise injection for experiments and spectral-shift data regularization.
//!
//! Measured array data carries multiplicative noise that destroys the
//! positive definiteness of the mass matrix and with it the block Cholesky
//! step. The remedy implemented here exploits that the zero-lag sample `D^0`
//! enters only the diagonal blocks of the mass matrix, and positively:
//! scaling `D^0` by a factor `mu >= 1` shifts the spectrum up without
//! touching any other sample. The loop sweeps a geometric schedule of `mu`
//! until the smallest eigenvalue clears a scale-invariant safety margin.

use nalgebra::DMatrix;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::linalg::sym_eigen;
use crate::propagate::{Provenance, SampledData};
use crate::rom::{assemble_mass, MassMatrix};
use crate::{Error, Result};

/// Multiplicative noise description: relative level and RNG seed.
#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct NoiseSpec {
    /// Relative noise level (0.10 means 10%, signal-to-noise about 10x).
    pub epsilon: f64,
    /// Seed for the deterministic stream generator.
    pub seed: u64,
}

impl NoiseSpec {
    pub fn new(epsilon: f64, seed: u64) -> Result<Self> {
        if !(epsilon >= 0.0) {
            return Err(Error::Validation(format!(
                "noise level must be nonnegative, got {epsilon}"
            )));
        }
        Ok(NoiseSpec { epsilon, seed })
    }
}

/// `D_eps^k = D^k o (1 + eps G^k)` entrywise, with `G^k` a symmetric matrix
/// of iid standard normals on the upper triangle (mirrored below to keep the
/// source-receiver reciprocity of the data). Deterministic for a fixed seed.
pub fn add_noise(data: &SampledData, spec: &NoiseSpec) -> SampledData {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let m = data.m();
    let mut out = Vec::with_capacity(data.n2());
    for d in data.samples() {
        let mut g = DMatrix::zeros(m, m);
        for i in 0..m {
            for j in i..m {
                let z: f64 = rng.sample(StandardNormal);
                g[(i, j)] = z;
                g[(j, i)] = z;
            }
        }
        let noisy = DMatrix::from_fn(m, m, |i, j| d[(i, j)] * (1.0 + spec.epsilon * g[(i, j)]));
        out.push(noisy);
    }
    SampledData::new(out, data.tau(), Provenance::Noisy {
        epsilon: spec.epsilon,
        seed: spec.seed,
    })
    .expect("noisy data keeps the shape of its input")
}

/// Smallest eigenvalue of a mass matrix.
pub fn min_eig(mass: &MassMatrix) -> f64 {
    sym_eigen(&mass.mat).min()
}

/// Schedule for the regularization sweep.
#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct MuSchedule {
    /// First value tried; 1 leaves clean data untouched.
    pub mu_start: f64,
    /// Geometric growth factor between trials.
    pub mu_factor: f64,
    /// Failure threshold: the data is declared too corrupted beyond this.
    pub mu_cap: f64,
    /// Scale-invariant positivity margin: accept when
    /// `lambda_min > delta * trace / (m n)`.
    pub delta: f64,
}

impl Default for MuSchedule {
    fn default() -> Self {
        MuSchedule {
            mu_start: 1.0,
            mu_factor: 1.05,
            mu_cap: 100.0,
            delta: 1e-12,
        }
    }
}

impl MuSchedule {
    pub fn validate(&self) -> Result<()> {
        if !(self.mu_start >= 1.0) {
            return Err(Error::Validation(format!(
                "mu_start must be >= 1, got {}",
                self.mu_start
            )));
        }
        if !(self.mu_factor > 1.0) {
            return Err(Error::Validation(format!(
                "mu_factor must be > 1, got {}",
                self.mu_factor
            )));
        }
        if !(self.mu_cap >= self.mu_start) {
            return Err(Error::Validation(format!(
                "mu_cap {} below mu_start {}",
                self.mu_cap, self.mu_start
            )));
        }
        if !(self.delta >= 0.0) {
            return Err(Error::Validation(format!(
                "delta must be nonnegative, got {}",
                self.delta
            )));
        }
        Ok(())
    }
}

/// Outcome of the regularization sweep.
#[derive(Debug, Clone)]
pub struct RegularizationResult {
    /// Data with `D^0` scaled by the final `mu`; all other samples are
    /// bitwise equal to the input.
    pub data: SampledData,
    /// Final scale factor on the zero-lag sample.
    pub mu: f64,
    /// Number of candidate values tried.
    pub iterations: usize,
    /// `lambda_min` of the candidate mass matrix at each trial.
    pub min_eig_history: Vec<f64>,
}

/// Scale only `D^0` by successive `mu` values until the mass matrix clears
/// the positivity margin.
///
/// `lambda_min(M_mu)` is non-decreasing in `mu` because `D^0` enters only
/// the diagonal blocks of the mass matrix with positive weight, so the first
/// passing `mu` in the schedule is returned. Exceeding the cap means the
/// noise has overwhelmed the data.
///
/// ```
/// use rombp::media::{BoundaryLabels, Edge, Grid2D, TransducerArray, VelocityModel, WaveletSpec};
/// use rombp::propagate::simulate_data;
/// use rombp::regularization::{add_noise, regularize, MuSchedule, NoiseSpec};
///
/// let grid = Grid2D::new(12, 12, 1.0, (0.0, 0.0))?;
/// let model = VelocityModel::constant(grid, 1.0, BoundaryLabels::top_accessible())?;
/// let array = TransducerArray::uniform_on_edge(&model, Edge::Top, 2, 2)?;
/// let wavelet = WaveletSpec::from_tau(1.0, 8)?;
///
/// let data = simulate_data(&model, &array, &wavelet, None)?;
/// let noisy = add_noise(&data, &NoiseSpec::new(0.02, 7)?);
/// let reg = regularize(&noisy, &MuSchedule::default())?;
/// assert!(reg.mu >= 1.0);
/// # Ok::<(), rombp::Error>(())
/// ```
pub fn regularize(data: &SampledData, schedule: &MuSchedule) -> Result<RegularizationResult> {
    schedule.validate()?;
    let (m, n) = (data.m(), data.n());
    let mut mu = schedule.mu_start;
    let mut history = Vec::new();
    loop {
        let candidate = scale_zero_lag(data, mu);
        let mass = assemble_mass(&candidate);
        let lam = min_eig(&mass);
        history.push(lam);
        if lam > schedule.delta * mass.mat.trace() / (m * n) as f64 {
            return Ok(RegularizationResult {
                data: candidate,
                mu,
                iterations: history.len(),
                min_eig_history: history,
            });
        }
        let next = mu * schedule.mu_factor;
        if next > schedule.mu_cap {
            return Err(Error::MuCapExceeded {
                mu,
                cap: schedule.mu_cap,
            });
        }
        mu = next;
    }
}

/// Scale only the zero-lag sample `D^0` by `mu`, tagging the result as
/// regularized. Imaging applies the same scaling on the kinematic side so
/// that the perturbation cancels in the projected difference.
pub fn scale_zero_lag(data: &SampledData, mu: f64) -> SampledData {
    let mut samples: Vec<DMatrix<f64>> = data.samples().to_vec();
    samples[0] *= mu;
    SampledData::new(samples, data.tau(), Provenance::Regularized { mu })
        .expect("scaling keeps the shape of its input")
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn scalar_data(values: &[f64]) -> SampledData {
        let samples = values
            .iter()
            .map(|&v| DMatrix::from_element(1, 1, v))
            .collect();
        SampledData::new(samples, 0.1, Provenance::Clean).unwrap()
    }

    fn random_data(m: usize, n2: usize, seed: u64) -> SampledData {
        use rand::{Rng, SeedableRng};
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let samples: Vec<DMatrix<f64>> = (0..n2)
            .map(|_| {
                let a = DMatrix::from_fn(m, m, |_, _| rng.gen_range(-1.0..1.0f64));
                (&a + a.transpose()) * 0.5
            })
            .collect();
        SampledData::new(samples, 0.1, Provenance::Clean).unwrap()
    }

    #[test]
    fn zero_noise_is_identity() {
        let data = random_data(4, 8, 2);
        let spec = NoiseSpec::new(0.0, 99).unwrap();
        let noisy = add_noise(&data, &spec);
        for k in 0..data.n2() {
            assert_eq!(noisy.sample(k), data.sample(k));
        }
    }

    #[test]
    fn noise_keeps_symmetry_exactly() {
        let data = random_data(5, 6, 3);
        let noisy = add_noise(&data, &NoiseSpec::new(0.1, 7).unwrap());
        for k in 0..data.n2() {
            let d = noisy.sample(k);
            assert_eq!(d, &d.transpose());
        }
        assert_eq!(noisy.sym_deviation(), 0.0);
    }

    #[test]
    fn noise_is_deterministic_per_seed() {
        let data = random_data(4, 6, 5);
        let a = add_noise(&data, &NoiseSpec::new(0.1, 42).unwrap());
        let b = add_noise(&data, &NoiseSpec::new(0.1, 42).unwrap());
        let c = add_noise(&data, &NoiseSpec::new(0.1, 43).unwrap());
        let mut differs = false;
        for k in 0..data.n2() {
            assert_eq!(a.sample(k), b.sample(k));
            differs |= a.sample(k) != c.sample(k);
        }
        assert!(differs, "different seeds must give different noise");
    }

    #[test]
    fn noise_rms_matches_requested_level() {
        // Empirical relative perturbation RMS should sit within 20% of eps.
        let data = random_data(8, 20, 11);
        let eps = 0.10;
        let noisy = add_noise(&data, &NoiseSpec::new(eps, 1).unwrap());
        let mut sum_sq = 0.0;
        let mut count = 0usize;
        for k in 0..data.n2() {
            let d = data.sample(k);
            let e = noisy.sample(k);
            for i in 0..d.nrows() {
                for j in 0..d.ncols() {
                    if d[(i, j)].abs() > 1e-12 {
                        let rel = (e[(i, j)] - d[(i, j)]) / d[(i, j)];
                        sum_sq += rel * rel;
                        count += 1;
                    }
                }
            }
        }
        let rms = (sum_sq / count as f64).sqrt();
        assert!((rms - eps).abs() <= 0.2 * eps, "rms {rms} vs eps {eps}");
    }

    #[test]
    fn min_eig_trivial_cases() {
        let id = SampledData::new(
            vec![DMatrix::identity(2, 2), DMatrix::zeros(2, 2)],
            0.1,
            Provenance::Clean,
        )
        .unwrap();
        // Mass of [I, 0] with n = 1 is just D^0 = I.
        assert_abs_diff_eq!(min_eig(&assemble_mass(&id)), 1.0, epsilon = 1e-12);

        let mass = MassMatrix {
            mat: DMatrix::from_row_slice(2, 2, &[3.0, 0.0, 0.0, -2.0]),
            m: 1,
            n: 2,
        };
        assert_abs_diff_eq!(min_eig(&mass), -2.0, epsilon = 1e-12);
    }

    #[test]
    fn min_eig_matches_dense_oracle() {
        use rand::{Rng, SeedableRng};
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let a = DMatrix::from_fn(8, 8, |_, _| rng.gen_range(-1.0..1.0f64));
        let sym = (&a + a.transpose()) * 0.5;
        let mass = MassMatrix {
            mat: sym.clone(),
            m: 2,
            n: 4,
        };
        // Oracle: minimize the Rayleigh quotient over random restarts via
        // inverse iteration on a shifted matrix.
        let oracle = {
            let shift = sym.norm() * 2.0;
            let shifted = DMatrix::identity(8, 8) * shift - &sym;
            let mut v = DMatrix::from_fn(8, 1, |i, _| ((i + 1) as f64 * 0.7).sin());
            for _ in 0..500 {
                v = &shifted * v;
                let nrm = v.norm();
                v /= nrm;
            }
            let num = (v.transpose() * &sym * &v)[(0, 0)];
            num / (v.transpose() * &v)[(0, 0)]
        };
        assert_abs_diff_eq!(min_eig(&mass), oracle, epsilon = 1e-10);
    }

    #[test]
    fn clean_spd_data_terminates_at_one() {
        // A strongly diagonally dominant scalar sequence keeps M PD.
        let data = scalar_data(&[1.0, 0.5, 0.2, 0.1]);
        let result = regularize(&data, &MuSchedule::default()).unwrap();
        assert_eq!(result.mu, 1.0);
        assert_eq!(result.iterations, 1);
        for k in 0..data.n2() {
            assert_eq!(result.data.sample(k), data.sample(k));
        }
    }

    #[test]
    fn manufactured_indefinite_case() {
        // D = [1, 1.1, 0.9, 0.9] gives M = [[1, 1.1], [1.1, 0.95]] with a
        // negative eigenvalue; regularization scales D^0 so that
        // [[mu, 1.1], [1.1, (0.9 + mu)/2]] becomes PD. Oracle: smallest
        // schedule value whose 2x2 determinant and trace are both positive.
        let data = scalar_data(&[1.0, 1.1, 0.9, 0.9]);
        let mass0 = assemble_mass(&data);
        assert!(min_eig(&mass0) < 0.0);
        let schedule = MuSchedule::default();
        let result = regularize(&data, &schedule).unwrap();

        let pd = |mu: f64| {
            let a = mu;
            let d = (0.9 + mu) / 2.0;
            let det = a * d - 1.1 * 1.1;
            det > 0.0 && a + d > 0.0
        };
        let mut expected = schedule.mu_start;
        while !pd(expected) {
            expected *= schedule.mu_factor;
        }
        assert_abs_diff_eq!(result.mu, expected, epsilon = 1e-12);
        assert!(pd(result.mu));
        // Only the zero-lag sample changed, exactly.
        assert_abs_diff_eq!(result.data.sample(0)[(0, 0)], result.mu * 1.0);
        for k in 1..4 {
            assert_eq!(result.data.sample(k), data.sample(k));
        }
        // History is non-decreasing (monotonicity in mu).
        for w in result.min_eig_history.windows(2) {
            assert!(w[1] >= w[0] - 1e-14);
        }
    }

    #[test]
    fn cap_exceeded_is_an_error() {
        let data = scalar_data(&[1.0, 1.1, 0.9, 0.9]);
        let schedule = MuSchedule {
            mu_cap: 1.01,
            ..MuSchedule::default()
        };
        match regularize(&data, &schedule) {
            Err(Error::MuCapExceeded { cap, .. }) => assert_abs_diff_eq!(cap, 1.01),
            other => panic!("expected cap failure, got ok = {}", other.is_ok()),
        }
    }

    #[test]
    fn regularized_output_factorizes() {
        use crate::rom::block_cholesky;
        // Noisy simulated-like data: random symmetric with decaying scale.
        let mut data = random_data(3, 8, 23);
        // Rescale so D^0 dominates enough that moderate mu can fix it.
        let mut samples: Vec<DMatrix<f64>> = data.samples().to_vec();
        let m = data.m();
        samples[0] = DMatrix::identity(m, m) + &samples[0] * 0.1;
        for s in samples.iter_mut().skip(1) {
            *s *= 0.5;
        }
        data = SampledData::new(samples, data.tau(), Provenance::Clean).unwrap();
        let noisy = add_noise(&data, &NoiseSpec::new(0.3, 4).unwrap());
        let result = regularize(&noisy, &MuSchedule::default()).unwrap();
        assert!(result.mu >= 1.0);
        let mass = assemble_mass(&result.data);
        assert!(min_eig(&mass) > 0.0);
        assert!(block_cholesky(&mass).is_ok());
        // Provenance records mu for the downstream ROM.
        match result.data.provenance() {
            Provenance::Regularized { mu } => assert_abs_diff_eq!(mu, result.mu),
            p => panic!("wrong provenance {p:?}"),
        }
    }
}
