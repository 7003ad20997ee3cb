//! Phase-shift pilots: the observation is de-rotated and the structural bound drops the user count.

use siga::harness::desk_clusters;
use siga::linmodel::complex_normal;
use siga::linalg::CVector;
use siga::mimo::{
    apsp_support, build_apsp_measurement, build_general_measurement, clustered_support, derotate_observation,
    sample_channel, MimoOfdmConfig, PilotScheme,
};
use siga::{damping_bounds, rho_shift, run, GaussianLinearModel, SigaConfig};
use rand::SeedableRng;

fn main() -> siga::Result<()> {
    let cfg = MimoOfdmConfig::desk();
    let pilots = PilotScheme::spread_apsp(&cfg, 1);
    let PilotScheme::Apsp { shifts, p } = &pilots else { unreachable!() };
    let general = clustered_support(&cfg, &desk_clusters())?;
    let (support, origin) = apsp_support(&cfg, shifts, &general)?;

    // Observe through the physical pilots, then move into the de-rotated frame.
    let h = sample_channel(&general, 2);
    let physical = build_general_measurement(&cfg, &PilotScheme::General { x: pilots.user_pilots(&cfg) }, &general)?;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
    let sigma_z2 = 0.01;
    let y = &physical.a * &h + CVector::from_fn(cfg.n(), |_, _| complex_normal(&mut rng, sigma_z2));
    let y = derotate_observation(&cfg, p, &y);

    let measurement = build_apsp_measurement(&cfg, &pilots, &support)?;
    let model: GaussianLinearModel = measurement.into_model(sigma_z2, y)?;
    let b = damping_bounds(rho_shift(model.a()), model.n(), model.m(), Some(&cfg.structure(true)));
    println!("shifts {shifts:?}, support {} columns", model.m());
    println!("bounds: general {:.4}, phase-shift {:.4}", b.general, b.apsp.unwrap());

    for d in [0.5, 0.9 * b.apsp.unwrap()] {
        let r = run(&model, &SigaConfig::new(d).with_t_max(100_000))?;
        let truth = CVector::from_fn(model.m(), |i, _| h[origin[i]]);
        let nmse = (&r.mu0 - &truth).norm_squared() / truth.norm_squared();
        println!("d = {d:.4}: {:?} after {} iterations, NMSE {nmse:.3e}", r.status, r.iterations);
    }
    Ok(())
}
