//! Damping bounds and the spectral certificate on either side of the general bound.

use siga::linmodel::random_instance;
use siga::{certify, damping_bounds, rho_shift, run, SigaConfig};

fn main() -> siga::Result<()> {
    let (model, _) = random_instance(300, 150, 1.0, 0.15, 7)?;
    let rho = rho_shift(model.a());
    let b = damping_bounds(rho, model.n(), model.m(), None);
    println!("rho(N I - A^H A) = {rho:.4}");
    println!("bounds: general {:.4}, worst case {:.3e}", b.general, b.worst);

    for d in [0.5 * b.general, 0.99 * b.general, 1.0] {
        let cert = certify(&model, d)?;
        let outcome = run(&model, &SigaConfig::new(d).with_t_max(5_000))?;
        println!(
            "d = {d:.4}: spectral radius {:.6}, certified {}, run {:?} after {}",
            cert.rho_btilde, cert.certified, outcome.status, outcome.iterations
        );
    }
    Ok(())
}
