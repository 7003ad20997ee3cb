//! The quadratic parameter reaches the same fixed point from any start and damping.

use siga::convergence::nu_fixed_point_from;
use siga::linalg::RVector;
use siga::linmodel::random_instance;

fn main() -> siga::Result<()> {
    let (model, _) = random_instance(120, 60, 1.0, 0.1, 5)?;
    let m = model.m();
    let mut reference: Option<RVector> = None;
    for start in [0.0, model.g_min(), 0.5 * model.g_min()] {
        for d in [1.0, 0.5, 0.1] {
            let fp = nu_fixed_point_from(&model, d, &RVector::from_element(m, start), 1e-13, 1_000_000)?;
            let gap = reference.as_ref().map_or(0.0, |r| (&fp.nu_star - r).amax());
            println!(
                "start {start:>9.2}  d {d:.1}: {:>5} iterations, nu*[0] = {:.10}, gap {gap:.1e}",
                fp.iterations, fp.nu_star[0]
            );
            reference.get_or_insert(fp.nu_star);
        }
    }
    Ok(())
}
