//! Exact Gaussian posterior of a small random model, checked against the truth.

use siga::exact_posterior;
use siga::linmodel::random_instance;

fn main() -> siga::Result<()> {
    let (model, obs) = random_instance(40, 12, 1.0, 0.05, 1)?;
    let post = exact_posterior(&model)?;
    let err = (&post.mu - &obs.h).norm() / obs.h.norm();
    println!("N = {}, M = {}, sigma_z^2 = {}", model.n(), model.m(), model.sigma_z2());
    println!("relative error of the posterior mean against h: {err:.4}");
    for (i, v) in post.marginal_variances().iter().enumerate().take(4) {
        println!("  var[h_{i}] = {v:.6}  (prior {})", model.d()[i]);
    }
    Ok(())
}
