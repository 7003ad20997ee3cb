//! The damped SIGA iteration.
//!
//! The second-order parameter `nu` evolves on its own through
//! `nu' = d g(nu) + (1 - d) nu`, where every component of `g` only needs the
//! diagonal `Lambda(nu)` and the scalar `beta(nu)`. The first-order parameter
//! `theta` follows the affine map `theta' = B~(nu) theta + b(nu)` whose matrix
//! is assembled implicitly from the precomputed Gram matrix `A^H A`.

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Result, SigaError};
use crate::linalg::{cmax_abs, cnorm2, CMatrix, CVector, RVector};
use crate::linmodel::GaussianLinearModel;
use crate::report::sig17;

pub const DEFAULT_TOL_NU: f64 = 1e-12;
pub const DEFAULT_TOL_THETA: f64 = 1e-12;
pub const DEFAULT_T_MAX: usize = 10_000;
pub const DEFAULT_GUARD_FACTOR: f64 = 1e12;

fn check_domain(nu: &RVector) -> Result<()> {
    for (index, &value) in nu.iter().enumerate() {
        if !(value <= 0.0) {
            return Err(SigaError::Domain { index, value });
        }
    }
    Ok(())
}

/// `Lambda_i = 1 / (1/D_i - nu_i)` and `beta = sigma² + sum(Lambda)`.
pub fn lambda_beta(nu: &RVector, d: &RVector, sigma_z2: f64) -> Result<(RVector, f64)> {
    check_domain(nu)?;
    let lambda = RVector::from_fn(nu.len(), |i, _| 1.0 / (1.0 / d[i] - nu[i]));
    let beta = sigma_z2 + lambda.sum();
    Ok((lambda, beta))
}

/// Undamped map `g_i(nu) = -(N-1) / (sigma² + sum_{j != i} Lambda_j)`.
pub fn g(nu: &RVector, d: &RVector, sigma_z2: f64, n: usize) -> Result<RVector> {
    let (lambda, _) = lambda_beta(nu, d, sigma_z2)?;
    let total: f64 = lambda.sum();
    let scale = n as f64 - 1.0;
    Ok(RVector::from_fn(nu.len(), |i, _| {
        -scale / (sigma_z2 + (total - lambda[i]))
    }))
}

/// One damped update of the second-order parameter, `d g(nu) + (1 - d) nu`.
pub fn nu_step(nu: &RVector, damping: f64, d: &RVector, sigma_z2: f64, n: usize) -> Result<RVector> {
    let gv = g(nu, d, sigma_z2, n)?;
    Ok(gv * damping + nu * (1.0 - damping))
}

/// Quantities reused by every `theta` update: `G = A^H A`, `q = A^H y`.
#[derive(Debug, Clone)]
pub struct SigaWorkspace {
    pub gram: CMatrix,
    pub q: CVector,
    pub d: RVector,
    pub sigma_z2: f64,
    pub n: usize,
}

impl SigaWorkspace {
    pub fn new(model: &GaussianLinearModel) -> Self {
        Self {
            gram: model.a().ad_mul(model.a()),
            q: model.a().ad_mul(model.y()),
            d: model.d().clone(),
            sigma_z2: model.sigma_z2(),
            n: model.n(),
        }
    }

    pub fn m(&self) -> usize {
        self.d.len()
    }
}

/// One damped update of the first-order parameter, `B~(nu) theta + b(nu)`.
///
/// With `T = (I - Lambda/beta)^{-1}` diagonal,
/// `B = (N-1)/beta T (I - G/N) Lambda` and `b = 2d(N-1)/(N beta) T q`.
/// Only the product `G (Lambda theta)` is `O(M²)`.
pub fn theta_step(theta: &CVector, nu: &RVector, damping: f64, ws: &SigaWorkspace) -> Result<CVector> {
    let (lambda, beta) = lambda_beta(nu, &ws.d, ws.sigma_z2)?;
    let n = ws.n as f64;
    let m = ws.m();
    let w = CVector::from_fn(m, |i, _| theta[i] * lambda[i]);
    let gw = &ws.gram * &w;
    let b_scale = (n - 1.0) / beta;
    let q_scale = 2.0 * damping * (n - 1.0) / (n * beta);
    Ok(CVector::from_fn(m, |i, _| {
        let t = 1.0 / (1.0 - lambda[i] / beta);
        let b_theta = (w[i] - gw[i] / n) * (b_scale * t);
        b_theta * damping + theta[i] * (1.0 - damping) + ws.q[i] * (q_scale * t)
    }))
}

/// How the initial parameters are chosen.
#[derive(Debug, Clone, PartialEq)]
pub struct SigaConfig {
    pub damping: f64,
    pub t_max: usize,
    pub tol_nu: f64,
    pub tol_theta: f64,
    /// `None` means `nu(0) = 0`.
    pub nu_init: Option<RVector>,
    /// `None` means `theta(0) = 0`.
    pub theta_init: Option<CVector>,
    /// `None` means `1e12 * (1 + ||theta(0)||_inf)`.
    pub divergence_guard: Option<f64>,
}

impl SigaConfig {
    pub fn new(damping: f64) -> Self {
        Self {
            damping,
            t_max: DEFAULT_T_MAX,
            tol_nu: DEFAULT_TOL_NU,
            tol_theta: DEFAULT_TOL_THETA,
            nu_init: None,
            theta_init: None,
            divergence_guard: None,
        }
    }

    pub fn with_nu_init(mut self, nu: RVector) -> Self {
        self.nu_init = Some(nu);
        self
    }

    pub fn with_theta_init(mut self, theta: CVector) -> Self {
        self.theta_init = Some(theta);
        self
    }

    pub fn with_t_max(mut self, t_max: usize) -> Self {
        self.t_max = t_max;
        self
    }

    pub fn validate(&self, model: &GaussianLinearModel) -> Result<()> {
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(SigaError::config("damping", format!("{} is outside (0, 1]", self.damping)));
        }
        if self.t_max == 0 {
            return Err(SigaError::config("t_max", "must be positive"));
        }
        if !(self.tol_nu > 0.0) {
            return Err(SigaError::config("tol_nu", "must be positive"));
        }
        if !(self.tol_theta > 0.0) {
            return Err(SigaError::config("tol_theta", "must be positive"));
        }
        if let Some(guard) = self.divergence_guard {
            if !(guard > 0.0) {
                return Err(SigaError::config("divergence_guard", "must be positive"));
            }
        }
        if let Some(nu) = &self.nu_init {
            if nu.len() != model.m() {
                return Err(SigaError::config("nu_init", format!("length {} != M = {}", nu.len(), model.m())));
            }
            let lo = model.g_min();
            if let Some((i, v)) = nu.iter().enumerate().find(|(_, v)| !(**v <= 0.0 && **v >= lo)) {
                return Err(SigaError::config(
                    "nu_init",
                    format!("nu_init[{i}] = {v} is outside [{lo}, 0]"),
                ));
            }
        }
        if let Some(theta) = &self.theta_init {
            if theta.len() != model.m() {
                return Err(SigaError::config(
                    "theta_init",
                    format!("length {} != M = {}", theta.len(), model.m()),
                ));
            }
            if theta.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
                return Err(SigaError::config("theta_init", "entries must be finite"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Converged,
    MaxIterations,
    Diverged,
}

/// One row of the trajectory log. Row `t = 0` is the initialization with zero steps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrajectoryRecord {
    pub t: usize,
    pub nu_norm2: f64,
    pub theta_norm2: f64,
    pub dnu_inf: f64,
    pub dtheta_inf: f64,
}

/// A single synchronous step: both new parameters read only the old ones.
#[derive(Debug, Clone)]
pub struct Siga {
    ws: SigaWorkspace,
    damping: f64,
    nu: RVector,
    theta: CVector,
    t: usize,
}

impl Siga {
    pub fn new(model: &GaussianLinearModel, damping: f64, nu0: RVector, theta0: CVector) -> Result<Self> {
        check_domain(&nu0)?;
        Ok(Self {
            ws: SigaWorkspace::new(model),
            damping,
            nu: nu0,
            theta: theta0,
            t: 0,
        })
    }

    pub fn nu(&self) -> &RVector {
        &self.nu
    }
    pub fn theta(&self) -> &CVector {
        &self.theta
    }
    pub fn t(&self) -> usize {
        self.t
    }
    pub fn workspace(&self) -> &SigaWorkspace {
        &self.ws
    }

    /// Advances one iteration and returns `(||Δnu||_inf, ||Δtheta||_inf)`.
    pub fn step(&mut self) -> Result<(f64, f64)> {
        let theta = theta_step(&self.theta, &self.nu, self.damping, &self.ws)?;
        let nu = nu_step(&self.nu, self.damping, &self.ws.d, self.ws.sigma_z2, self.ws.n)?;
        let dnu = (&nu - &self.nu).amax();
        let dtheta = cmax_abs(&(&theta - &self.theta));
        self.nu = nu;
        self.theta = theta;
        self.t += 1;
        Ok((dnu, dtheta))
    }

    fn record(&self, dnu: f64, dtheta: f64) -> TrajectoryRecord {
        TrajectoryRecord {
            t: self.t,
            nu_norm2: self.nu.norm(),
            theta_norm2: cnorm2(&self.theta),
            dnu_inf: dnu,
            dtheta_inf: dtheta,
        }
    }
}

/// Output of [`run`].
#[derive(Debug, Clone, Serialize)]
pub struct SigaResult {
    pub status: Status,
    pub iterations: usize,
    #[serde(with = "sig17::num")]
    pub damping: f64,
    #[serde(with = "sig17::cvec")]
    pub theta_star: CVector,
    #[serde(with = "sig17::rvec")]
    pub nu_star: RVector,
    /// `N/(N-1) theta`, the first half of the output natural parameter.
    #[serde(with = "sig17::cvec")]
    pub theta0: CVector,
    #[serde(with = "sig17::rvec")]
    pub nu0: RVector,
    #[serde(with = "sig17::cvec")]
    pub mu0: CVector,
    #[serde(with = "sig17::rvec")]
    pub sigma0_diag: RVector,
    /// `||nu - g~(nu)||_inf` at the returned point.
    #[serde(with = "sig17::num")]
    pub residual_nu: f64,
    /// `||theta - B~(nu) theta - b(nu)||_inf` at the returned point.
    #[serde(with = "sig17::num")]
    pub residual_theta: f64,
    /// Every `nu(t)` with `t >= 1` was strictly negative.
    pub nu_strictly_negative: bool,
    #[serde(skip)]
    pub trajectory: Vec<TrajectoryRecord>,
}

/// Marginal means and variances from a converged common parameter:
/// `Sigma0 = (D^{-1} - Diag(nu0))^{-1}` and `mu0 = Sigma0 theta0 / 2`.
pub fn output_marginals(
    theta: &CVector,
    nu: &RVector,
    d: &RVector,
    n: usize,
) -> (CVector, RVector, CVector, RVector) {
    let scale = n as f64 / (n as f64 - 1.0);
    let theta0 = theta * Complex64::new(scale, 0.0);
    let nu0 = nu * scale;
    let sigma0 = RVector::from_fn(nu.len(), |i, _| 1.0 / (1.0 / d[i] - nu0[i]));
    let mu0 = CVector::from_fn(nu.len(), |i, _| theta0[i] * (0.5 * sigma0[i]));
    (theta0, nu0, mu0, sigma0)
}

/// Runs the damped iteration until both parameters settle, `t_max` is hit, or
/// `theta` blows past the divergence guard.
///
/// Convergence means `||Δnu||_inf <= tol_nu (1 + ||nu||_inf)` and
/// `||Δtheta||_inf <= tol_theta (1 + ||theta||_inf)`, both measured against the
/// previous iterate.
pub fn run(model: &GaussianLinearModel, config: &SigaConfig) -> Result<SigaResult> {
    config.validate(model)?;
    let m = model.m();
    let nu0 = config.nu_init.clone().unwrap_or_else(|| RVector::zeros(m));
    let theta0 = config.theta_init.clone().unwrap_or_else(|| CVector::zeros(m));
    let guard = config
        .divergence_guard
        .unwrap_or_else(|| DEFAULT_GUARD_FACTOR * (1.0 + cmax_abs(&theta0)));

    let mut siga = Siga::new(model, config.damping, nu0, theta0)?;
    let mut trajectory = vec![siga.record(0.0, 0.0)];
    let mut nu_negative = true;
    let status = loop {
        if siga.t() >= config.t_max {
            break Status::MaxIterations;
        }
        let prev_nu_inf = siga.nu().amax();
        let prev_theta_inf = cmax_abs(siga.theta());
        let (dnu, dtheta) = siga.step()?;
        trajectory.push(siga.record(dnu, dtheta));
        nu_negative &= siga.nu().iter().all(|v| *v < 0.0);

        let theta_inf = cmax_abs(siga.theta());
        if !(theta_inf <= guard) {
            break Status::Diverged;
        }
        if dnu <= config.tol_nu * (1.0 + prev_nu_inf) && dtheta <= config.tol_theta * (1.0 + prev_theta_inf) {
            break Status::Converged;
        }
    };

    let nu = siga.nu().clone();
    let theta = siga.theta().clone();
    let ws = siga.workspace();
    let nu_next = nu_step(&nu, config.damping, &ws.d, ws.sigma_z2, ws.n)?;
    let residual_nu = (&nu - nu_next).amax();
    let residual_theta = cmax_abs(&(&theta - theta_step(&theta, &nu, config.damping, ws)?));
    let (theta0, nu0, mu0, sigma0_diag) = output_marginals(&theta, &nu, &ws.d, ws.n);

    Ok(SigaResult {
        status,
        iterations: siga.t(),
        damping: config.damping,
        theta_star: theta,
        nu_star: nu,
        theta0,
        nu0,
        mu0,
        sigma0_diag,
        residual_nu,
        residual_theta,
        nu_strictly_negative: nu_negative,
        trajectory,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linmodel::random_instance;
    use approx::assert_abs_diff_eq;

    #[test]
    fn lambda_beta_at_zero_is_prior() {
        let d = RVector::from_vec(vec![1.0, 2.0, 0.5]);
        let (lambda, beta) = lambda_beta(&RVector::zeros(3), &d, 0.3).unwrap();
        assert_eq!(lambda, d);
        assert_abs_diff_eq!(beta, 3.8, epsilon = 1e-15);
    }

    #[test]
    fn lambda_beta_hand_values() {
        let d = RVector::from_vec(vec![1.0, 2.0]);
        let nu = RVector::from_vec(vec![-1.0, -3.0]);
        let (lambda, beta) = lambda_beta(&nu, &d, 1.0).unwrap();
        assert_abs_diff_eq!(lambda[0], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(lambda[1], 2.0 / 7.0, epsilon = 1e-15);
        assert_abs_diff_eq!(beta, 1.0 + 0.5 + 2.0 / 7.0, epsilon = 1e-15);
    }

    #[test]
    fn positive_nu_is_a_domain_error() {
        let d = RVector::from_vec(vec![1.0, 1.0]);
        let nu = RVector::from_vec(vec![-1.0, 0.25]);
        assert!(matches!(
            lambda_beta(&nu, &d, 1.0),
            Err(SigaError::Domain { index: 1, .. })
        ));
        assert!(nu_step(&nu, 0.5, &d, 1.0, 3).is_err());
    }

    #[test]
    fn nu_step_small_instance() {
        let d = RVector::from_vec(vec![1.0, 1.0]);
        let zero = RVector::zeros(2);
        let full = nu_step(&zero, 1.0, &d, 1.0, 3).unwrap();
        assert_abs_diff_eq!(full[0], -1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(full[1], -1.0, epsilon = 1e-15);
        let half = nu_step(&zero, 0.5, &d, 1.0, 3).unwrap();
        assert_abs_diff_eq!(half[0], -0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(half[1], -0.5, epsilon = 1e-15);
    }

    #[test]
    fn g_tends_to_g_min_at_full_scale() {
        // Deep negative nu drives every Lambda to zero, leaving -(N-1)/sigma².
        let d = RVector::from_element(4, 1.0);
        let nu = RVector::from_element(4, -1e300);
        let gv = g(&nu, &d, 1.0, 46_080).unwrap();
        for v in gv.iter() {
            assert_eq!(*v, -46_079.0);
        }
    }

    #[test]
    fn theta_step_is_linear_in_y_and_theta() {
        let (model, _) = random_instance(12, 5, 1.0, 0.4, 2).unwrap();
        let zero_y = model.with_observation(CVector::zeros(12)).unwrap();
        let ws = SigaWorkspace::new(&zero_y);
        let nu = RVector::from_element(5, -3.0);
        let out = theta_step(&CVector::zeros(5), &nu, 0.7, &ws).unwrap();
        assert_eq!(out.norm(), 0.0);
    }

    #[test]
    fn vanishing_damping_freezes_theta() {
        let (model, _) = random_instance(12, 5, 1.0, 0.4, 2).unwrap();
        let ws = SigaWorkspace::new(&model);
        let nu = RVector::from_element(5, -2.0);
        let theta = CVector::from_fn(5, |i, _| Complex64::new(i as f64, -1.0));
        let out = theta_step(&theta, &nu, 1e-300, &ws).unwrap();
        assert_abs_diff_eq!((out - &theta).norm(), 0.0, epsilon = 1e-280);
    }

    #[test]
    fn config_validation() {
        let (model, _) = random_instance(10, 4, 1.0, 0.5, 1).unwrap();
        assert!(SigaConfig::new(0.0).validate(&model).is_err());
        assert!(SigaConfig::new(1.5).validate(&model).is_err());
        assert!(SigaConfig::new(1.0).validate(&model).is_ok());
        let too_low = RVector::from_element(4, model.g_min() * 1.01);
        assert!(SigaConfig::new(0.5).with_nu_init(too_low).validate(&model).is_err());
        let at_min = RVector::from_element(4, model.g_min());
        assert!(SigaConfig::new(0.5).with_nu_init(at_min).validate(&model).is_ok());
        let positive = RVector::from_element(4, 1e-3);
        assert!(SigaConfig::new(0.5).with_nu_init(positive).validate(&model).is_err());
    }

    #[test]
    fn output_map_zero_theta_gives_zero_mean() {
        let d = RVector::from_vec(vec![1.0, 2.0]);
        let nu = RVector::from_vec(vec![-4.0, -1.0]);
        let (_, nu0, mu0, sigma0) = output_marginals(&CVector::zeros(2), &nu, &d, 5);
        assert_eq!(mu0.norm(), 0.0);
        assert_abs_diff_eq!(nu0[0], -5.0, epsilon = 1e-15);
        assert_abs_diff_eq!(sigma0[0], 1.0 / 6.0, epsilon = 1e-15);
        assert!(sigma0.iter().all(|v| *v > 0.0));
    }

    #[test]
    fn small_run_converges_with_small_residuals() {
        let (model, _) = random_instance(40, 10, 1.0, 0.2, 4).unwrap();
        let res = run(&model, &SigaConfig::new(0.3)).unwrap();
        assert_eq!(res.status, Status::Converged);
        assert!(res.residual_nu <= 1e-8);
        assert!(res.residual_theta <= 1e-8);
        assert!(res.nu_strictly_negative);
        assert_eq!(res.trajectory.len(), res.iterations + 1);
        assert_eq!(res.trajectory[0].t, 0);
    }

    #[test]
    fn max_iterations_is_reported() {
        let (model, _) = random_instance(40, 10, 1.0, 0.2, 4).unwrap();
        let res = run(&model, &SigaConfig::new(0.3).with_t_max(3)).unwrap();
        assert_eq!(res.status, Status::MaxIterations);
        assert_eq!(res.iterations, 3);
    }
}
