//! Beam-domain channel estimation with general pilots on a small MIMO-OFDM grid.

use siga::convergence::rho_shift_operator;
use siga::harness::desk_clusters;
use siga::linmodel::NoiseMode;
use siga::mimo::{build_general_measurement, clustered_support, general_operator, MimoOfdmConfig, PilotScheme};
use siga::{damping_bounds, exact_posterior, rho_shift, run, SigaConfig};

fn main() -> siga::Result<()> {
    let cfg = MimoOfdmConfig::desk();
    let pilots = PilotScheme::random_general(&cfg, 1);
    let support = clustered_support(&cfg, &desk_clusters())?;
    let (model, obs) = build_general_measurement(&cfg, &pilots, &support)?.simulate(0.01, 2, NoiseMode::Gaussian)?;
    println!("N = {}, full grid {} columns, support {}", cfg.n(), cfg.m_tilde_general(), model.m());

    let full = rho_shift_operator(&general_operator(&cfg, &pilots), 1e-9);
    let b = damping_bounds(rho_shift(model.a()), model.n(), model.m(), Some(&cfg.structure(false)));
    println!("shift: full operator {full:.2}, selected columns {:.2}", rho_shift(model.a()));
    println!("bounds: general {:.4}, structural {:.4}", b.general, b.mimo.unwrap());

    let d = 0.9 * b.mimo.unwrap();
    let r = run(&model, &SigaConfig::new(d).with_t_max(100_000))?;
    let exact = exact_posterior(&model)?;
    println!("d = {d:.4}: {:?} after {} iterations", r.status, r.iterations);
    println!(
        "NMSE vs h: approximate {:.3e}, exact {:.3e}",
        (&r.mu0 - &obs.h).norm_squared() / obs.h.norm_squared(),
        (&exact.mu - &obs.h).norm_squared() / obs.h.norm_squared()
    );
    Ok(())
}
