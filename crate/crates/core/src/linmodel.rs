//! The observation model `y = A h + z` with a diagonal Gaussian prior, its
//! validation, synthetic data, and the exact posterior used as ground truth.

use std::fmt;

use nalgebra::Cholesky;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::error::{Result, SigaError};
use crate::linalg::{CMatrix, CVector, RVector};

/// Default tolerance on `| 1 - |a_ij| |`.
pub const UNIT_MAGNITUDE_TOL: f64 = 1e-9;

/// `y = A h + z` with `h ~ CN(0, Diag(d))` and `z ~ CN(0, sigma_z2 I)`.
#[derive(Debug, Clone)]
pub struct GaussianLinearModel {
    a: CMatrix,
    d: RVector,
    sigma_z2: f64,
    y: CVector,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    NonUnitEntry { row: usize, col: usize, magnitude: f64 },
    NonPositivePrior { index: usize, value: f64 },
    NonPositiveNoise { value: f64 },
    NonFinite { field: &'static str, index: usize },
    Shape { reason: String },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NonUnitEntry { row, col, magnitude } => {
                write!(f, "A[{row},{col}] has magnitude {magnitude}, expected 1")
            }
            Violation::NonPositivePrior { index, value } => {
                write!(f, "nonpositive prior variance D[{index}] = {value}")
            }
            Violation::NonPositiveNoise { value } => write!(f, "nonpositive noise power {value}"),
            Violation::NonFinite { field, index } => write!(f, "non-finite entry {field}[{index}]"),
            Violation::Shape { reason } => write!(f, "{reason}"),
        }
    }
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let msgs: Vec<String> = self.violations.iter().map(ToString::to_string).collect();
        write!(f, "{}", msgs.join("; "))
    }
}

impl GaussianLinearModel {
    /// Builds a model and rejects it unless every invariant holds at [`UNIT_MAGNITUDE_TOL`].
    pub fn new(a: CMatrix, d: RVector, sigma_z2: f64, y: CVector) -> Result<Self> {
        let model = Self::from_parts_unchecked(a, d, sigma_z2, y);
        let report = model.validate(UNIT_MAGNITUDE_TOL);
        if report.is_valid() {
            Ok(model)
        } else {
            Err(SigaError::InvalidModel(report.to_string()))
        }
    }

    /// No checks at all; pair with [`GaussianLinearModel::validate`].
    pub fn from_parts_unchecked(a: CMatrix, d: RVector, sigma_z2: f64, y: CVector) -> Self {
        Self { a, d, sigma_z2, y }
    }

    /// Same measurement setup with a different observation.
    pub fn with_observation(&self, y: CVector) -> Result<Self> {
        if y.len() != self.n() {
            return Err(SigaError::Dimension(format!(
                "observation has length {}, expected {}",
                y.len(),
                self.n()
            )));
        }
        Ok(Self { y, ..self.clone() })
    }

    pub fn a(&self) -> &CMatrix {
        &self.a
    }
    pub fn d(&self) -> &RVector {
        &self.d
    }
    pub fn sigma_z2(&self) -> f64 {
        self.sigma_z2
    }
    pub fn y(&self) -> &CVector {
        &self.y
    }
    pub fn n(&self) -> usize {
        self.a.nrows()
    }
    pub fn m(&self) -> usize {
        self.a.ncols()
    }

    /// Lower end of the admissible `nu` range, `-(N-1)/sigma_z2` per component.
    pub fn g_min(&self) -> f64 {
        -((self.n() as f64) - 1.0) / self.sigma_z2
    }

    /// Reports every violated invariant; empty means valid.
    pub fn validate(&self, tol: f64) -> ValidationReport {
        let mut violations = Vec::new();
        let (n, m) = self.a.shape();
        if n < 1 {
            violations.push(Violation::Shape {
                reason: "A must have at least one row".into(),
            });
        }
        if m < 2 {
            violations.push(Violation::Shape {
                reason: format!("A must have at least two columns, found {m}"),
            });
        }
        if self.d.len() != m {
            violations.push(Violation::Shape {
                reason: format!("D has length {}, A has {m} columns", self.d.len()),
            });
        }
        if self.y.len() != n {
            violations.push(Violation::Shape {
                reason: format!("y has length {}, A has {n} rows", self.y.len()),
            });
        }
        for j in 0..m {
            for i in 0..n {
                let v = self.a[(i, j)];
                if !(v.re.is_finite() && v.im.is_finite()) {
                    violations.push(Violation::NonFinite {
                        field: "A",
                        index: j * n + i,
                    });
                    continue;
                }
                let magnitude = v.norm();
                if (1.0 - magnitude).abs() > tol {
                    violations.push(Violation::NonUnitEntry { row: i, col: j, magnitude });
                }
            }
        }
        for (index, &value) in self.d.iter().enumerate() {
            if !value.is_finite() {
                violations.push(Violation::NonFinite { field: "D", index });
            } else if value <= 0.0 {
                violations.push(Violation::NonPositivePrior { index, value });
            }
        }
        if !(self.sigma_z2.is_finite() && self.sigma_z2 > 0.0) {
            violations.push(Violation::NonPositiveNoise {
                value: self.sigma_z2,
            });
        }
        for (index, v) in self.y.iter().enumerate() {
            if !(v.re.is_finite() && v.im.is_finite()) {
                violations.push(Violation::NonFinite { field: "y", index });
            }
        }
        ValidationReport { violations }
    }

    /// Signal-to-noise ratio `E||A h||^2 / E||z||^2 = sum(D) / sigma_z2` for unit-magnitude `A`.
    pub fn expected_snr(&self) -> f64 {
        self.d.sum() / self.sigma_z2
    }
}

/// Exact posterior `CN(mu, sigma)` of `h` given `y`.
#[derive(Debug, Clone)]
pub struct PosteriorExact {
    pub mu: CVector,
    pub sigma: CMatrix,
}

impl PosteriorExact {
    pub fn marginal_variances(&self) -> RVector {
        RVector::from_iterator(self.sigma.nrows(), self.sigma.diagonal().iter().map(|v| v.re))
    }
}

/// `mu = D (A^H A D + sigma² I)^{-1} A^H y` and `sigma = (D^{-1} + A^H A / sigma²)^{-1}`.
///
/// The mean comes from an LU solve of the non-Hermitian system; the covariance
/// from a Cholesky factorization of the Hermitian precision matrix.
pub fn exact_posterior(model: &GaussianLinearModel) -> Result<PosteriorExact> {
    let a = model.a();
    let d = model.d();
    let s2 = model.sigma_z2();
    let m = model.m();
    let gram = a.ad_mul(a);
    let q = a.ad_mul(model.y());

    let mut system = CMatrix::from_fn(m, m, |i, j| gram[(i, j)] * d[j]);
    for i in 0..m {
        system[(i, i)] += Complex64::new(s2, 0.0);
    }
    let x = system
        .clone()
        .lu()
        .solve(&q)
        .ok_or_else(|| SigaError::Singular("A^H A D + sigma^2 I".into()))?;
    let resid = (&system * &x - &q).norm();
    if !(resid <= 1e-8 * (1.0 + q.norm())) {
        return Err(SigaError::Singular(format!(
            "A^H A D + sigma^2 I solve residual {resid:e}"
        )));
    }
    let mu = CVector::from_fn(m, |i, _| x[i] * d[i]);

    let mut precision = gram / Complex64::new(s2, 0.0);
    for i in 0..m {
        precision[(i, i)] += Complex64::new(1.0 / d[i], 0.0);
    }
    let chol = Cholesky::new(precision)
        .ok_or_else(|| SigaError::Singular("D^-1 + A^H A / sigma^2 is not positive definite".into()))?;
    let mut sigma = chol.inverse();
    // Symmetrize away rounding so downstream Hermitian solvers see an exact Hermitian matrix.
    for i in 0..m {
        sigma[(i, i)] = Complex64::new(sigma[(i, i)].re, 0.0);
        for j in 0..i {
            let avg = (sigma[(i, j)] + sigma[(j, i)].conj()) * 0.5;
            sigma[(i, j)] = avg;
            sigma[(j, i)] = avg.conj();
        }
    }
    Ok(PosteriorExact { mu, sigma })
}

/// The alternative mean form `sigma A^H y / sigma_z2`.
pub fn posterior_mean_via_covariance(model: &GaussianLinearModel, sigma: &CMatrix) -> CVector {
    let q = model.a().ad_mul(model.y());
    sigma * q / Complex64::new(model.sigma_z2(), 0.0)
}

/// Draw from `CN(0, variance)`: real and imaginary parts each `N(0, variance / 2)`.
pub fn complex_normal<R: Rng + ?Sized>(rng: &mut R, variance: f64) -> Complex64 {
    let s = (variance / 2.0).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(s * re, s * im)
}

/// A unit-magnitude complex number with the phase of a standard complex Gaussian draw.
pub fn unit_phase<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    loop {
        let z = complex_normal(rng, 1.0);
        let r = z.norm();
        if r > 0.0 {
            return z / r;
        }
    }
}

/// `rows x cols` matrix of i.i.d. uniform phases, generated column-major.
pub fn random_unit_modulus_matrix<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> CMatrix {
    let mut a = CMatrix::zeros(rows, cols);
    for j in 0..cols {
        for i in 0..rows {
            a[(i, j)] = unit_phase(rng);
        }
    }
    a
}

pub fn random_unit_modulus_vector<R: Rng + ?Sized>(rng: &mut R, len: usize) -> CVector {
    CVector::from_fn(len, |_, _| unit_phase(rng))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NoiseMode {
    #[default]
    Gaussian,
    /// `z = 0`, so `y = A h` exactly.
    Noiseless,
}

#[derive(Debug, Clone)]
pub struct Observation {
    pub h: CVector,
    pub z: CVector,
    pub y: CVector,
}

/// Draws `h ~ CN(0, Diag(d))`, then `z ~ CN(0, sigma_z2 I)`, and returns `y = A h + z`.
///
/// A pure function of its arguments and `seed`.
pub fn simulate_observation(
    a: &CMatrix,
    d: &RVector,
    sigma_z2: f64,
    seed: u64,
    noise: NoiseMode,
) -> Observation {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h = CVector::from_fn(d.len(), |i, _| complex_normal(&mut rng, d[i]));
    let z = match noise {
        NoiseMode::Gaussian => CVector::from_fn(a.nrows(), |_, _| complex_normal(&mut rng, sigma_z2)),
        NoiseMode::Noiseless => CVector::zeros(a.nrows()),
    };
    let y = a * &h + &z;
    Observation { h, z, y }
}

/// A seeded instance with i.i.d. phase-only `A`, the setting of the general-case experiments.
pub fn random_instance(
    n: usize,
    m: usize,
    prior_variance: f64,
    sigma_z2: f64,
    seed: u64,
) -> Result<(GaussianLinearModel, Observation)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = random_unit_modulus_matrix(&mut rng, n, m);
    let d = RVector::from_element(m, prior_variance);
    let obs = simulate_observation(&a, &d, sigma_z2, seed.wrapping_add(0x9e37_79b9_7f4a_7c15), NoiseMode::Gaussian);
    let model = GaussianLinearModel::new(a, d, sigma_z2, obs.y.clone())?;
    Ok((model, obs))
}
