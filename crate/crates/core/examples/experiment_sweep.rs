//! A seeded sweep over damping and initializations, written to a directory of artifacts.

use siga::harness::{theta_damping_spec, run_experiment};

fn main() -> siga::Result<()> {
    let spec = theta_damping_spec();
    let out = std::env::temp_dir().join("siga_example_sweep");
    let manifest = run_experiment(&spec, &out, 2)?;
    println!("{} cells in {}", manifest.cells.len(), out.display());
    println!(
        "rho_shift {:.3}, general bound {:.4}",
        manifest.model.rho_shift, manifest.model.bounds.general
    );
    for c in &manifest.cells {
        println!(
            "  {} d={} nu0={} theta0={}: {:?} after {:?}, certified {:?}",
            c.id,
            c.damping_spec,
            c.nu_init,
            c.theta_init,
            c.status,
            c.iterations,
            c.certified
        );
    }
    Ok(())
}
