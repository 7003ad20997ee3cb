//! One damped run on a random model, compared with the exact posterior.

use siga::convergence::{damping_bounds, rho_shift};
use siga::linmodel::random_instance;
use siga::{exact_posterior, run, SigaConfig};

fn main() -> siga::Result<()> {
    let (model, _) = random_instance(200, 100, 1.0, 0.1, 3)?;
    let bounds = damping_bounds(rho_shift(model.a()), model.n(), model.m(), None);
    let d = 0.9 * bounds.general;
    let result = run(&model, &SigaConfig::new(d).with_t_max(20_000))?;
    let exact = exact_posterior(&model)?;

    println!("damping {d:.4} (bound {:.4})", bounds.general);
    println!("{:?} after {} iterations", result.status, result.iterations);
    println!("residuals: nu {:.2e}, theta {:.2e}", result.residual_nu, result.residual_theta);
    let rel = (&result.mu0 - &exact.mu).norm() / exact.mu.norm();
    println!("mean vs exact posterior: relative error {rel:.3e}");
    let var = exact.marginal_variances();
    let worst = (0..model.m()).map(|i| result.sigma0_diag[i] / var[i]).fold(0.0, f64::max);
    println!("largest variance ratio approximate/exact: {worst:.3}");
    Ok(())
}
