//! Convergence certificates for the damped iteration.
//!
//! `nu` always converges; `theta` converges whenever the iteration matrix at
//! the `nu` fixed point, `B~* = d B* + (1 - d) I`, has spectral radius below
//! one. `B*` is not Hermitian, but it is similar through a positive diagonal
//! matrix to `Q = S (N I - A^H A) S` with
//! `S = ((I - D^{-1} Lambda*/N) Lambda*/beta*)^{1/2}`, so its spectrum comes
//! from a Hermitian eigensolver.

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Result, SigaError};
use crate::linalg::{hermitian_eigenvalues, lanczos_extreme, CMatrix, CVector, Extreme, LinearOperator, RVector};
use crate::linmodel::GaussianLinearModel;
use crate::report::sig17;
use crate::siga::{lambda_beta, nu_step, SigaWorkspace};

/// Absolute tolerance for the `nu` fixed-point residual and the fixed-point identity.
pub const CERT_TOL: f64 = 1e-10;
/// Tolerance of the Lanczos path for `rho(N I - A^H A)`.
pub const ITERATIVE_EIG_TOL: f64 = 1e-9;
/// Largest `M` for which `rho_shift` uses a full Hermitian eigendecomposition.
pub const DENSE_EIG_MAX_M: usize = 2000;
pub const DEFAULT_FIXED_POINT_ITMAX: usize = 100_000;

#[derive(Debug, Clone, Serialize)]
pub struct FixedPointData {
    #[serde(with = "sig17::rvec")]
    pub nu_star: RVector,
    #[serde(with = "sig17::rvec")]
    pub lambda_star: RVector,
    #[serde(with = "sig17::num")]
    pub beta_star: f64,
    /// `||nu* - g~(nu*)||_inf`.
    #[serde(with = "sig17::num")]
    pub residual_g: f64,
    /// `max_i |Lambda*_i - Lambda*_i²/beta* - 1/(1/D_i - N/(N-1) nu*_i)|`.
    #[serde(with = "sig17::num")]
    pub residual_eq21: f64,
    pub iterations: usize,
}

/// Iterates `nu <- g~(nu)` from `nu = 0`.
pub fn nu_fixed_point(model: &GaussianLinearModel, damping: f64, tol: f64, itmax: usize) -> Result<FixedPointData> {
    nu_fixed_point_from(model, damping, &RVector::zeros(model.m()), tol, itmax)
}

/// Iterates `nu <- g~(nu)` from `nu_init` until `||nu - g~(nu)||_inf <= tol`.
pub fn nu_fixed_point_from(
    model: &GaussianLinearModel,
    damping: f64,
    nu_init: &RVector,
    tol: f64,
    itmax: usize,
) -> Result<FixedPointData> {
    if !(damping > 0.0 && damping <= 1.0) {
        return Err(SigaError::config("damping", format!("{damping} is outside (0, 1]")));
    }
    if model.m() < 2 {
        return Err(SigaError::InvalidModel("the fixed point is interior only for M >= 2".into()));
    }
    let lo = model.g_min();
    if nu_init.len() != model.m() || nu_init.iter().any(|v| !(*v <= 0.0 && *v >= lo)) {
        return Err(SigaError::config("nu_init", format!("must have length M and lie in [{lo}, 0]")));
    }
    let (d, s2, n) = (model.d(), model.sigma_z2(), model.n());
    let mut nu = nu_init.clone();
    let mut residual = f64::INFINITY;
    for it in 0..=itmax {
        let next = nu_step(&nu, damping, d, s2, n)?;
        residual = (&next - &nu).amax();
        if residual <= tol {
            let (lambda_star, beta_star) = lambda_beta(&nu, d, s2)?;
            let residual_eq21 = fixed_point_identity_residual(&nu, &lambda_star, beta_star, d, n);
            return Ok(FixedPointData {
                nu_star: nu,
                lambda_star,
                beta_star,
                residual_g: residual,
                residual_eq21,
                iterations: it,
            });
        }
        nu = next;
    }
    Err(SigaError::NotConverged {
        tol,
        iterations: itmax,
        residual,
    })
}

fn fixed_point_identity_residual(nu: &RVector, lambda: &RVector, beta: f64, d: &RVector, n: usize) -> f64 {
    let ratio = n as f64 / (n as f64 - 1.0);
    (0..nu.len())
        .map(|i| {
            let lhs = lambda[i] - lambda[i] * lambda[i] / beta;
            let rhs = 1.0 / (1.0 / d[i] - ratio * nu[i]);
            (lhs - rhs).abs()
        })
        .fold(0.0, f64::max)
}

/// `rho(N I - G)` from the extreme eigenvalues of the PSD Gram matrix `G`.
pub fn rho_shift_from_extremes(n: usize, v_min: f64, v_max: f64) -> f64 {
    let n = n as f64;
    (n - v_min).abs().max((n - v_max).abs())
}

/// `rho(N I - A^H A)`, dense for `M <= DENSE_EIG_MAX_M` and by Lanczos above.
pub fn rho_shift(a: &CMatrix) -> f64 {
    if a.ncols() <= DENSE_EIG_MAX_M {
        rho_shift_dense(a)
    } else {
        rho_shift_operator(a, ITERATIVE_EIG_TOL)
    }
}

pub fn rho_shift_dense(a: &CMatrix) -> f64 {
    let eig = hermitian_eigenvalues(&a.ad_mul(a));
    rho_shift_from_extremes(a.nrows(), eig[0], eig[eig.len() - 1])
}

/// `rho(N I - A^H A)` without forming `A` or `A^H A`.
pub fn rho_shift_operator<Op: LinearOperator + ?Sized>(a: &Op, tol: f64) -> f64 {
    let (v_min, v_max) = gram_extremes(a, tol);
    rho_shift_from_extremes(a.nrows(), v_min, v_max)
}

/// Smallest and largest eigenvalues of `A^H A` by Lanczos.
pub fn gram_extremes<Op: LinearOperator + ?Sized>(a: &Op, tol: f64) -> (f64, f64) {
    let gram = |x: &CVector| a.apply_adjoint(&a.apply(x));
    let dim = a.ncols();
    let v_max = lanczos_extreme(gram, dim, Extreme::Largest, tol);
    let v_min = lanczos_extreme(gram, dim, Extreme::Smallest, tol).max(0.0);
    (v_min, v_max)
}

/// Fine factors of the MIMO-OFDM measurement structure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, serde::Deserialize)]
pub struct FineStructure {
    pub users: usize,
    pub fv: usize,
    pub fh: usize,
    pub ftau: usize,
    /// The measurement uses phase-shift pilots, so the user count drops out of the bound.
    pub apsp: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DampingBounds {
    /// `2 / (1 + rho_shift/N)`.
    #[serde(with = "sig17::num")]
    pub general: f64,
    /// `2 / M`, valid for any unit-magnitude `A`.
    #[serde(with = "sig17::num")]
    pub worst: f64,
    /// `2 / (K Fv Fh Ftau)` for general constant-magnitude pilots.
    #[serde(with = "sig17::opt")]
    pub mimo: Option<f64>,
    /// `2 / (Fv Fh Ftau)` for phase-shift pilots.
    #[serde(with = "sig17::opt")]
    pub apsp: Option<f64>,
}

impl DampingBounds {
    /// The structural bound that applies to the given pilot type, if any.
    pub fn structured(&self, structure: &FineStructure) -> Option<f64> {
        if structure.apsp {
            self.apsp
        } else {
            self.mimo
        }
    }
}

pub fn damping_bounds(rho_shift: f64, n: usize, m: usize, structure: Option<&FineStructure>) -> DampingBounds {
    let fine = structure.map(|s| (s.fv * s.fh * s.ftau) as f64);
    DampingBounds {
        general: 2.0 / (1.0 + rho_shift / n as f64),
        worst: 2.0 / m as f64,
        mimo: structure.zip(fine).map(|(s, f)| 2.0 / (s.users as f64 * f)),
        apsp: fine.map(|f| 2.0 / f),
    }
}

/// `margin > 0` iff the check passes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Check {
    pub pass: bool,
    #[serde(with = "sig17::num")]
    pub margin: f64,
}

impl Check {
    fn from_margin(margin: f64) -> Self {
        Self {
            pass: margin > 0.0,
            margin,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LemmaChecks {
    /// `beta*/N - max Lambda*`.
    pub lambda_below_beta_over_n: Check,
    /// Eigenvalues of `B*` lie strictly inside `(-rho_shift/N, 1)`.
    pub bstar_spectrum_range: Check,
    /// Eigenvalues of `B~*` lie strictly inside `(1 - d(1 + rho_shift/N), 1)`.
    pub btilde_spectrum_range: Check,
    /// `eig(B~*) = d eig(B*) + 1 - d` within `AFFINE_SPECTRUM_TOL`.
    pub affine_spectrum: Check,
    /// Fixed-point residuals within `CERT_TOL`.
    pub fixed_point: Check,
}

pub const AFFINE_SPECTRUM_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Serialize)]
pub struct Tolerances {
    #[serde(with = "sig17::num")]
    pub fixed_point: f64,
    #[serde(with = "sig17::num")]
    pub affine_spectrum: f64,
    #[serde(with = "sig17::num")]
    pub iterative_eigensolver: f64,
    pub dense_eigensolver_max_m: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceCertificate {
    #[serde(with = "sig17::num")]
    pub d: f64,
    pub n: usize,
    pub m: usize,
    #[serde(with = "sig17::num")]
    pub rho_shift: f64,
    pub bounds: DampingBounds,
    #[serde(with = "sig17::slice")]
    pub eig_bstar: Vec<f64>,
    #[serde(with = "sig17::slice")]
    pub eig_btilde: Vec<f64>,
    #[serde(with = "sig17::num")]
    pub rho_btilde: f64,
    /// `rho(B~*) < 1`. `false` only means the sufficient condition fails.
    pub certified: bool,
    pub lemma_checks: LemmaChecks,
    pub fixed_point: FixedPointData,
    pub tolerances: Tolerances,
}

/// Diagonal of the similarity scaling `S` at a `nu` fixed point.
pub fn similarity_scaling(fp: &FixedPointData, d: &RVector, n: usize) -> RVector {
    let n = n as f64;
    RVector::from_fn(d.len(), |i, _| {
        let lam = fp.lambda_star[i];
        ((1.0 - lam / (d[i] * n)) * lam / fp.beta_star).sqrt()
    })
}

/// The Hermitian matrix `S (N I - G) S`, similar to `B*`.
pub fn hermitian_similar(gram: &CMatrix, scaling: &RVector, n: usize) -> CMatrix {
    let n = n as f64;
    let m = scaling.len();
    CMatrix::from_fn(m, m, |i, j| {
        let shifted = if i == j { Complex64::new(n, 0.0) - gram[(i, j)] } else { -gram[(i, j)] };
        shifted * (scaling[i] * scaling[j])
    })
}

/// The explicit (non-Hermitian) `B~(nu)` for small problems and cross-checks.
pub fn iteration_matrix(nu: &RVector, damping: f64, ws: &SigaWorkspace) -> Result<CMatrix> {
    let (lambda, beta) = lambda_beta(nu, &ws.d, ws.sigma_z2)?;
    let n = ws.n as f64;
    let m = ws.m();
    Ok(CMatrix::from_fn(m, m, |i, j| {
        let t = 1.0 / (1.0 - lambda[i] / beta);
        let eye = if i == j { Complex64::new(1.0, 0.0) } else { Complex64::new(0.0, 0.0) };
        let b = (eye - ws.gram[(i, j)] / n) * ((n - 1.0) / beta * t * lambda[j]);
        b * damping + eye * (1.0 - damping)
    }))
}

/// `theta* = (I - B~*)^{-1} b*`, the limit of the `theta` iteration when it converges.
pub fn theta_fixed_point(model: &GaussianLinearModel, nu_star: &RVector, damping: f64) -> Result<CVector> {
    let ws = SigaWorkspace::new(model);
    let b_tilde = iteration_matrix(nu_star, damping, &ws)?;
    let (lambda, beta) = lambda_beta(nu_star, &ws.d, ws.sigma_z2)?;
    let n = ws.n as f64;
    let rhs = CVector::from_fn(ws.m(), |i, _| {
        ws.q[i] * (2.0 * damping * (n - 1.0) / (n * beta) / (1.0 - lambda[i] / beta))
    });
    let system = CMatrix::identity(ws.m(), ws.m()) - b_tilde;
    system
        .lu()
        .solve(&rhs)
        .ok_or_else(|| SigaError::Singular("I - B~* is singular".into()))
}

/// Certificate for damping `d` using the default fine structure (none).
pub fn certify(model: &GaussianLinearModel, d: f64) -> Result<ConvergenceCertificate> {
    certify_with(model, d, None)
}

pub fn certify_with(
    model: &GaussianLinearModel,
    d: f64,
    structure: Option<&FineStructure>,
) -> Result<ConvergenceCertificate> {
    let fp = nu_fixed_point(model, d, CERT_TOL, DEFAULT_FIXED_POINT_ITMAX)?;
    let ws = SigaWorkspace::new(model);
    let (n, m) = (model.n(), model.m());
    let nf = n as f64;

    let v = hermitian_eigenvalues(&ws.gram);
    let rho_shift = rho_shift_from_extremes(n, v[0], v[m - 1]);
    let bounds = damping_bounds(rho_shift, n, m, structure);

    let scaling = similarity_scaling(&fp, model.d(), n);
    let q = hermitian_similar(&ws.gram, &scaling, n);
    let eig_bstar = hermitian_eigenvalues(&q);

    let mut q_tilde = q * Complex64::new(d, 0.0);
    for i in 0..m {
        q_tilde[(i, i)] += Complex64::new(1.0 - d, 0.0);
    }
    let eig_btilde = hermitian_eigenvalues(&q_tilde);
    let rho_btilde = eig_btilde.iter().fold(0.0f64, |a, x| a.max(x.abs()));

    let max_lambda = fp.lambda_star.max();
    let lo_b = -rho_shift / nf;
    let lo_bt = 1.0 - d * (1.0 + rho_shift / nf);
    let range_margin = |vals: &[f64], lo: f64| (vals[0] - lo).min(1.0 - vals[vals.len() - 1]);
    let affine_err = eig_bstar
        .iter()
        .zip(&eig_btilde)
        .map(|(b, bt)| (d * b + 1.0 - d - bt).abs())
        .fold(0.0, f64::max);

    let lemma_checks = LemmaChecks {
        lambda_below_beta_over_n: Check::from_margin(fp.beta_star / nf - max_lambda),
        bstar_spectrum_range: Check::from_margin(range_margin(&eig_bstar, lo_b)),
        btilde_spectrum_range: Check::from_margin(range_margin(&eig_btilde, lo_bt)),
        affine_spectrum: Check::from_margin(AFFINE_SPECTRUM_TOL - affine_err),
        fixed_point: Check {
            pass: fp.residual_g <= CERT_TOL && fp.residual_eq21 <= CERT_TOL,
            margin: CERT_TOL - fp.residual_g.max(fp.residual_eq21),
        },
    };

    Ok(ConvergenceCertificate {
        d,
        n,
        m,
        rho_shift,
        bounds,
        eig_bstar,
        eig_btilde,
        rho_btilde,
        certified: rho_btilde < 1.0,
        lemma_checks,
        fixed_point: fp,
        tolerances: Tolerances {
            fixed_point: CERT_TOL,
            affine_spectrum: AFFINE_SPECTRUM_TOL,
            iterative_eigensolver: ITERATIVE_EIG_TOL,
            dense_eigensolver_max_m: DENSE_EIG_MAX_M,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linmodel::random_instance;
    use approx::assert_abs_diff_eq;

    fn dft_columns(n: usize, m: usize) -> CMatrix {
        CMatrix::from_fn(n, m, |r, c| {
            Complex64::from_polar(1.0, -2.0 * std::f64::consts::PI * (r * c) as f64 / n as f64)
        })
    }

    #[test]
    fn all_ones_matrix_hits_the_worst_case() {
        let a = CMatrix::from_element(4, 3, Complex64::new(1.0, 0.0));
        let eig = hermitian_eigenvalues(&a.ad_mul(&a));
        assert_abs_diff_eq!(eig[2], 12.0, epsilon = 1e-12);
        assert_abs_diff_eq!(eig[0], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(rho_shift(&a), 8.0, epsilon = 1e-12);
    }

    #[test]
    fn orthogonal_dft_columns_have_zero_shift() {
        assert_abs_diff_eq!(rho_shift(&dft_columns(16, 7)), 0.0, epsilon = 1e-10);
    }

    #[test]
    fn operator_path_matches_dense_path() {
        let (model, _) = random_instance(30, 50, 1.0, 0.1, 8).unwrap();
        let dense = rho_shift_dense(model.a());
        let lazy = rho_shift_operator(model.a(), ITERATIVE_EIG_TOL);
        assert!((dense - lazy).abs() <= 1e-8 * dense, "{dense} vs {lazy}");
    }

    #[test]
    fn reference_scale_bound_values() {
        let b = damping_bounds(
            0.0,
            46_080,
            29_277,
            Some(&FineStructure {
                users: 48,
                fv: 2,
                fh: 2,
                ftau: 2,
                apsp: false,
            }),
        );
        assert_eq!(format!("{:.1e}", b.worst), "6.8e-5");
        assert_eq!(format!("{:.4}", b.mimo.unwrap()), "0.0052");
        assert_eq!(b.apsp.unwrap(), 0.25);
    }

    #[test]
    fn fixed_point_rejects_bad_inputs() {
        let (model, _) = random_instance(10, 4, 1.0, 0.5, 1).unwrap();
        assert!(nu_fixed_point(&model, 0.0, 1e-10, 10).is_err());
        let outside = RVector::from_element(4, 2.0 * model.g_min());
        assert!(nu_fixed_point_from(&model, 1.0, &outside, 1e-10, 10).is_err());
        assert!(matches!(
            nu_fixed_point(&model, 1.0, 0.0, 5),
            Err(SigaError::NotConverged { iterations: 5, .. })
        ));
    }

    #[test]
    fn certificate_on_small_instance() {
        let (model, _) = random_instance(24, 8, 1.0, 0.2, 6).unwrap();
        let probe = certify(&model, 1.0).unwrap();
        let d = 0.9 * probe.bounds.general;
        let cert = certify(&model, d).unwrap();
        assert!(cert.certified);
        let c = cert.lemma_checks;
        assert!(c.lambda_below_beta_over_n.pass);
        assert!(c.bstar_spectrum_range.pass);
        assert!(c.btilde_spectrum_range.pass);
        assert!(c.affine_spectrum.pass);
        assert!(c.fixed_point.pass);
        assert!(cert.bounds.worst <= cert.bounds.general);
        let json = serde_json::to_value(&cert).unwrap();
        assert!(json["eig_bstar"].as_array().unwrap().len() == 8);
    }
}
