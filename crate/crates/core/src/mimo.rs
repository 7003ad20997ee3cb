//! Measurement matrices for massive MIMO-OFDM uplink channel estimation.
//!
//! The beam-domain channel of user `k` is a `(Fv Nrv Fh Nrh) x (Ftau Nf)` matrix
//! observed through oversampled DFT bases: `V = V_v ⊗ V_h` in space and the
//! first `Ftau Nf` columns of the partial delay DFT `F_d`. Vectorizing
//! column-major, column `(k Ftau Nf + f) Fa Nr + b` of the stacked measurement
//! is `(X_k F)[:, f] ⊗ V[:, b]` with `Fa = Fv Fh`; rows are indexed by
//! `subcarrier * Nr + antenna`.
//!
//! With phase-shift pilots `X_k = P Diag(r(n_k))`, and `Diag(r(n_k)) F_d` is a
//! cyclic shift of the columns of `F_d`, so every user lands in one shared
//! `F_d ⊗ V` column space once the common basic pilot `P` is removed from the
//! observation. [`build_apsp_measurement`] returns `A` in that de-rotated frame;
//! see [`derotate_observation`].

use std::f64::consts::PI;
use std::fmt;
use std::path::Path;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::convergence::FineStructure;
use crate::error::{Result, SigaError};
use crate::linalg::{kron, CMatrix, CVector, Kronecker, RVector};
use crate::linmodel::{complex_normal, random_unit_modulus_vector, simulate_observation, GaussianLinearModel, NoiseMode, Observation};

/// How `Nf = Np Ng / Nc` is rounded to an integer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NfRounding {
    #[default]
    Floor,
    Ceil,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MimoOfdmConfig {
    pub nrv: usize,
    pub nrh: usize,
    #[serde(alias = "k")]
    pub users: usize,
    pub np: usize,
    pub nc: usize,
    pub ng: usize,
    pub fv: usize,
    pub fh: usize,
    pub ftau: usize,
    #[serde(default)]
    pub nf_rounding: NfRounding,
}

impl MimoOfdmConfig {
    /// The full-scale reference system: 8x16 UPA, 48 users, 360 of 2048 subcarriers, CP 144.
    pub fn reference_scale() -> Self {
        Self {
            nrv: 8,
            nrh: 16,
            users: 48,
            np: 360,
            nc: 2048,
            ng: 144,
            fv: 2,
            fh: 2,
            ftau: 2,
            nf_rounding: NfRounding::Floor,
        }
    }

    /// Same fine factors as [`Self::reference_scale`], shrunk to `N = 64`.
    pub fn desk() -> Self {
        Self {
            nrv: 2,
            nrh: 2,
            users: 2,
            np: 16,
            nc: 64,
            ng: 8,
            fv: 2,
            fh: 2,
            ftau: 2,
            nf_rounding: NfRounding::Floor,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("nrv", self.nrv),
            ("nrh", self.nrh),
            ("users", self.users),
            ("np", self.np),
            ("nc", self.nc),
            ("ng", self.ng),
            ("fv", self.fv),
            ("fh", self.fh),
            ("ftau", self.ftau),
        ];
        for (name, v) in fields {
            if v == 0 {
                return Err(SigaError::config(name, "must be positive"));
            }
        }
        if self.np > self.nc {
            return Err(SigaError::config("np", format!("{} exceeds nc = {}", self.np, self.nc)));
        }
        if self.nf() == 0 {
            return Err(SigaError::config("ng", "np * ng / nc rounds to zero delay taps"));
        }
        Ok(())
    }

    pub fn nr(&self) -> usize {
        self.nrv * self.nrh
    }

    pub fn nf(&self) -> usize {
        let num = self.np * self.ng;
        match self.nf_rounding {
            NfRounding::Floor => num / self.nc,
            NfRounding::Ceil => num.div_ceil(self.nc),
        }
    }

    /// Observations per training block, `Nr Np`.
    pub fn n(&self) -> usize {
        self.nr() * self.np
    }

    /// Spatial oversampling `Fv Fh`.
    pub fn fa(&self) -> usize {
        self.fv * self.fh
    }

    /// Columns of `V`.
    pub fn beams(&self) -> usize {
        self.fa() * self.nr()
    }

    /// Delay bins per user, `Ftau Nf`.
    pub fn delays(&self) -> usize {
        self.ftau * self.nf()
    }

    /// Columns of the full general-pilot measurement, `K Fv Fh Ftau Nr Nf`.
    pub fn m_tilde_general(&self) -> usize {
        self.users * self.delays() * self.beams()
    }

    /// Columns of `F_d ⊗ V`, `Fv Fh Ftau N`.
    pub fn m_tilde_apsp(&self) -> usize {
        self.ftau * self.np * self.beams()
    }

    pub fn structure(&self, apsp: bool) -> FineStructure {
        FineStructure {
            users: self.users,
            fv: self.fv,
            fh: self.fh,
            ftau: self.ftau,
            apsp,
        }
    }
}

/// First `rows` rows of the unnormalized `factor * rows`-point DFT.
pub fn partial_dft(rows: usize, factor: usize) -> CMatrix {
    let size = factor * rows;
    CMatrix::from_fn(rows, size, |m, n| dft_entry(m * n, size))
}

fn dft_entry(mn: usize, size: usize) -> Complex64 {
    // Reduce first so large products keep full phase accuracy.
    Complex64::from_polar(1.0, -2.0 * PI * (mn % size) as f64 / size as f64)
}

/// `V = V_v ⊗ V_h`, `Nr x Fa Nr`.
pub fn spatial_basis(cfg: &MimoOfdmConfig) -> CMatrix {
    kron(&partial_dft(cfg.nrv, cfg.fv), &partial_dft(cfg.nrh, cfg.fh))
}

/// `F_d`, the first `Np` rows of the `Ftau Np`-point DFT.
pub fn delay_basis(cfg: &MimoOfdmConfig) -> CMatrix {
    partial_dft(cfg.np, cfg.ftau)
}

/// `F = F_d[:, ..Ftau Nf]`.
pub fn truncated_delay_basis(cfg: &MimoOfdmConfig) -> CMatrix {
    delay_basis(cfg).columns(0, cfg.delays()).into_owned()
}

/// `r(n)`: entry `j` is `exp(-i 2 pi n j / (Ftau Np))`, training subcarriers taken contiguous.
pub fn apsp_phase_vector(cfg: &MimoOfdmConfig, shift: usize) -> CVector {
    CVector::from_fn(cfg.np, |j, _| dft_entry(shift * j, cfg.ftau * cfg.np))
}

#[derive(Debug, Clone, PartialEq)]
pub enum PilotScheme {
    /// Per-user constant-magnitude pilots, the diagonals of `X_k`.
    General { x: Vec<CVector> },
    /// Phase-shift pilots `X_k = P Diag(r(n_k))` sharing the basic pilot `p`.
    Apsp { shifts: Vec<usize>, p: CVector },
}

impl PilotScheme {
    /// Independent uniform-phase pilots per user.
    pub fn random_general(cfg: &MimoOfdmConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        PilotScheme::General {
            x: (0..cfg.users).map(|_| random_unit_modulus_vector(&mut rng, cfg.np)).collect(),
        }
    }

    /// Shifts spread evenly over the `Ftau Np` delay grid, with a uniform-phase basic pilot.
    pub fn spread_apsp(cfg: &MimoOfdmConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let spacing = cfg.ftau * cfg.np / cfg.users;
        PilotScheme::Apsp {
            shifts: (0..cfg.users).map(|k| k * spacing).collect(),
            p: random_unit_modulus_vector(&mut rng, cfg.np),
        }
    }

    /// The per-user diagonals `x_k`; for phase-shift pilots `x_k = p ∘ r(n_k)`.
    pub fn user_pilots(&self, cfg: &MimoOfdmConfig) -> Vec<CVector> {
        match self {
            PilotScheme::General { x } => x.clone(),
            PilotScheme::Apsp { shifts, p } => shifts
                .iter()
                .map(|&n| p.component_mul(&apsp_phase_vector(cfg, n)))
                .collect(),
        }
    }

    pub fn validate(&self, cfg: &MimoOfdmConfig) -> Result<()> {
        let unit = |v: &CVector, what: &str| -> Result<()> {
            if v.len() != cfg.np {
                return Err(SigaError::Dimension(format!("{what} has length {}, expected np = {}", v.len(), cfg.np)));
            }
            if let Some(i) = v.iter().position(|z| (z.norm() - 1.0).abs() > 1e-9) {
                return Err(SigaError::config(what, format!("entry {i} is not unit magnitude")));
            }
            Ok(())
        };
        match self {
            PilotScheme::General { x } => {
                if x.len() != cfg.users {
                    return Err(SigaError::Dimension(format!("{} pilots for {} users", x.len(), cfg.users)));
                }
                x.iter().enumerate().try_for_each(|(k, v)| unit(v, &format!("pilot[{k}]")))
            }
            PilotScheme::Apsp { shifts, p } => {
                if shifts.len() != cfg.users {
                    return Err(SigaError::Dimension(format!("{} shifts for {} users", shifts.len(), cfg.users)));
                }
                if let Some(&n) = shifts.iter().find(|&&n| n >= cfg.ftau * cfg.np) {
                    return Err(SigaError::config("shifts", format!("{n} is outside [0, ftau*np)")));
                }
                unit(p, "basic pilot")
            }
        }
    }
}

/// `[X_1 F, ..., X_K F]`, `Np x K Ftau Nf`.
pub fn pilot_delay_matrix(cfg: &MimoOfdmConfig, pilots: &PilotScheme) -> CMatrix {
    let f = truncated_delay_basis(cfg);
    let x = pilots.user_pilots(cfg);
    let per = cfg.delays();
    CMatrix::from_fn(cfg.np, cfg.users * per, |s, c| x[c / per][s] * f[(s, c % per)])
}

/// The full general-pilot measurement as a lazy operator.
pub fn general_operator(cfg: &MimoOfdmConfig, pilots: &PilotScheme) -> Kronecker<CMatrix, Kronecker<CMatrix, CMatrix>> {
    Kronecker::new(
        pilot_delay_matrix(cfg, pilots),
        Kronecker::new(partial_dft(cfg.nrv, cfg.fv), partial_dft(cfg.nrh, cfg.fh)),
    )
}

/// `F_d ⊗ V` as a lazy operator.
pub fn apsp_operator(cfg: &MimoOfdmConfig) -> Kronecker<CMatrix, Kronecker<CMatrix, CMatrix>> {
    Kronecker::new(
        delay_basis(cfg),
        Kronecker::new(partial_dft(cfg.nrv, cfg.fv), partial_dft(cfg.nrh, cfg.fh)),
    )
}

/// Nonzero beam-domain coefficients: 0-based column indices and their prior variances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeamSupport {
    pub support: Vec<usize>,
    pub omega: Vec<f64>,
}

impl BeamSupport {
    pub fn new(support: Vec<usize>, omega: Vec<f64>) -> Result<Self> {
        let s = Self { support, omega };
        s.check()?;
        Ok(s)
    }

    fn check(&self) -> Result<()> {
        if self.support.len() != self.omega.len() {
            return Err(SigaError::Dimension(format!(
                "{} support indices but {} variances",
                self.support.len(),
                self.omega.len()
            )));
        }
        if self.support.is_empty() {
            return Err(SigaError::config("support", "empty"));
        }
        if let Some(w) = self.support.windows(2).find(|w| w[0] >= w[1]) {
            return Err(SigaError::config("support", format!("not strictly increasing at {} -> {}", w[0], w[1])));
        }
        if let Some(i) = self.omega.iter().position(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(SigaError::config("omega", format!("entry {i} is not a positive variance")));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.support.len()
    }

    pub fn is_empty(&self) -> bool {
        self.support.is_empty()
    }

    fn check_range(&self, m_tilde: usize) -> Result<()> {
        match self.support.last() {
            Some(&last) if last >= m_tilde => Err(SigaError::Dimension(format!(
                "support index {last} exceeds the {m_tilde} available columns"
            ))),
            _ => Ok(()),
        }
    }

    /// Reads one entry per line, `index` or `index variance` (variance defaults to 1).
    /// Blank lines and `#` comments are skipped; entries are sorted on load.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| SigaError::io(path, e))?;
        let mut pairs = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let bad = |what: &str| SigaError::format(path, format!("line {}: {what}", lineno + 1));
            let mut parts = line.split_whitespace();
            let idx: usize = parts
                .next()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| bad("expected a nonnegative integer index"))?;
            let omega: f64 = match parts.next() {
                Some(s) => s.parse().map_err(|_| bad("expected a real variance"))?,
                None => 1.0,
            };
            if parts.next().is_some() {
                return Err(bad("more than two fields"));
            }
            pairs.push((idx, omega));
        }
        pairs.sort_by_key(|p| p.0);
        let (support, omega) = pairs.into_iter().unzip();
        Self::new(support, omega).map_err(|e| SigaError::format(path, e.to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = String::from("# index variance\n");
        for (i, w) in self.support.iter().zip(&self.omega) {
            out.push_str(&format!("{i} {}\n", crate::report::fmt17(*w)));
        }
        crate::report::write_atomic(path, out.as_bytes())
    }
}

impl fmt::Display for BeamSupport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} beam-domain coefficients", self.len())
    }
}

/// A box of adjacent beams for one user: delay bins, vertical and horizontal beams.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cluster {
    pub user: usize,
    pub delay: (usize, usize),
    pub vertical: (usize, usize),
    pub horizontal: (usize, usize),
    pub power: f64,
}

/// Coordinates of one beam-domain coefficient in the general-pilot layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BeamCoord {
    pub user: usize,
    pub delay: usize,
    pub beam: usize,
}

pub fn general_column(cfg: &MimoOfdmConfig, c: BeamCoord) -> usize {
    (c.user * cfg.delays() + c.delay) * cfg.beams() + c.beam
}

pub fn general_coord(cfg: &MimoOfdmConfig, column: usize) -> BeamCoord {
    let beam = column % cfg.beams();
    let rest = column / cfg.beams();
    BeamCoord {
        user: rest / cfg.delays(),
        delay: rest % cfg.delays(),
        beam,
    }
}

/// Column of `F_d ⊗ V` hit by `(user, delay, beam)` under shift `n_k`.
pub fn apsp_column(cfg: &MimoOfdmConfig, shift: usize, delay: usize, beam: usize) -> usize {
    ((shift + delay) % (cfg.ftau * cfg.np)) * cfg.beams() + beam
}

/// Support in the general-pilot layout covering the given clusters.
pub fn clustered_support(cfg: &MimoOfdmConfig, clusters: &[Cluster]) -> Result<BeamSupport> {
    let fvn = cfg.fv * cfg.nrv;
    let fhn = cfg.fh * cfg.nrh;
    let mut pairs = Vec::new();
    for (ci, c) in clusters.iter().enumerate() {
        let field = format!("clusters[{ci}]");
        let fits = |(start, len): (usize, usize), limit: usize| len > 0 && start + len <= limit;
        if c.user >= cfg.users
            || !fits(c.delay, cfg.delays())
            || !fits(c.vertical, fvn)
            || !fits(c.horizontal, fhn)
        {
            return Err(SigaError::config(field, "outside the beam-domain grid or empty"));
        }
        for f in c.delay.0..c.delay.0 + c.delay.1 {
            for v in c.vertical.0..c.vertical.0 + c.vertical.1 {
                for h in c.horizontal.0..c.horizontal.0 + c.horizontal.1 {
                    let col = general_column(
                        cfg,
                        BeamCoord {
                            user: c.user,
                            delay: f,
                            beam: v * fhn + h,
                        },
                    );
                    pairs.push((col, c.power));
                }
            }
        }
    }
    pairs.sort_by_key(|p| p.0);
    if let Some(w) = pairs.windows(2).find(|w| w[0].0 == w[1].0) {
        return Err(SigaError::config("clusters", format!("column {} covered twice", w[0].0)));
    }
    let (support, omega) = pairs.into_iter().unzip();
    BeamSupport::new(support, omega)
}

/// Maps a general-layout support to the `F_d ⊗ V` layout through the users' shifts.
///
/// Returns the mapped support and, for each of its entries, the position of the
/// originating entry in `general`.
pub fn apsp_support(cfg: &MimoOfdmConfig, shifts: &[usize], general: &BeamSupport) -> Result<(BeamSupport, Vec<usize>)> {
    general.check_range(cfg.m_tilde_general())?;
    if shifts.len() != cfg.users {
        return Err(SigaError::Dimension(format!("{} shifts for {} users", shifts.len(), cfg.users)));
    }
    let mut mapped: Vec<(usize, f64, usize)> = general
        .support
        .iter()
        .zip(&general.omega)
        .enumerate()
        .map(|(pos, (&col, &w))| {
            let c = general_coord(cfg, col);
            (apsp_column(cfg, shifts[c.user], c.delay, c.beam), w, pos)
        })
        .collect();
    mapped.sort_by_key(|e| e.0);
    if let Some(w) = mapped.windows(2).find(|w| w[0].0 == w[1].0) {
        return Err(SigaError::config(
            "shifts",
            format!("two users share column {} of the phase-shift layout", w[0].0),
        ));
    }
    let origin = mapped.iter().map(|e| e.2).collect();
    let support = BeamSupport::new(mapped.iter().map(|e| e.0).collect(), mapped.iter().map(|e| e.1).collect())?;
    Ok((support, origin))
}

/// Measurement matrix and prior variances; noise level and observation come later.
#[derive(Debug, Clone)]
pub struct Measurement {
    pub a: CMatrix,
    pub d: RVector,
}

impl Measurement {
    pub fn into_model(self, sigma_z2: f64, y: CVector) -> Result<GaussianLinearModel> {
        GaussianLinearModel::new(self.a, self.d, sigma_z2, y)
    }

    /// Draws `h ~ CN(0, Diag(omega))` and noise, and returns the model with its observation.
    pub fn simulate(self, sigma_z2: f64, seed: u64, noise: NoiseMode) -> Result<(GaussianLinearModel, Observation)> {
        let obs = simulate_observation(&self.a, &self.d, sigma_z2, seed, noise);
        let model = self.into_model(sigma_z2, obs.y.clone())?;
        Ok((model, obs))
    }
}

/// Columns of `left ⊗ right` listed in `support`, materialized without the full product.
fn selected_kron_columns(left: &CMatrix, right: &CMatrix, support: &[usize]) -> CMatrix {
    let rr = right.nrows();
    let rc = right.ncols();
    CMatrix::from_fn(left.nrows() * rr, support.len(), |row, j| {
        let col = support[j];
        left[(row / rr, col / rc)] * right[(row % rr, col % rc)]
    })
}

/// `A = Ã E` for general pilots, with `Ã = [X_1 F, ..., X_K F] ⊗ V`.
pub fn build_general_measurement(cfg: &MimoOfdmConfig, pilots: &PilotScheme, support: &BeamSupport) -> Result<Measurement> {
    cfg.validate()?;
    if !matches!(pilots, PilotScheme::General { .. }) {
        return Err(SigaError::config("pilots", "expected general pilots"));
    }
    pilots.validate(cfg)?;
    support.check()?;
    support.check_range(cfg.m_tilde_general())?;
    let left = pilot_delay_matrix(cfg, pilots);
    let a = selected_kron_columns(&left, &spatial_basis(cfg), &support.support);
    Ok(Measurement {
        a,
        d: RVector::from_column_slice(&support.omega),
    })
}

/// `A = (F_d ⊗ V) E_p`, in the frame where the basic pilot has been removed from `y`.
///
/// `support` indexes the `Fv Fh Ftau N` columns of `F_d ⊗ V` directly; build it
/// with [`apsp_support`] or supply it explicitly.
pub fn build_apsp_measurement(cfg: &MimoOfdmConfig, pilots: &PilotScheme, support: &BeamSupport) -> Result<Measurement> {
    cfg.validate()?;
    if !matches!(pilots, PilotScheme::Apsp { .. }) {
        return Err(SigaError::config("pilots", "expected phase-shift pilots"));
    }
    pilots.validate(cfg)?;
    support.check()?;
    support.check_range(cfg.m_tilde_apsp())?;
    let a = selected_kron_columns(&delay_basis(cfg), &spatial_basis(cfg), &support.support);
    Ok(Measurement {
        a,
        d: RVector::from_column_slice(&support.omega),
    })
}

/// `(P^H ⊗ I) y`: moves an observation taken with basic pilot `p` into the frame of
/// [`build_apsp_measurement`]. Unitary, so white noise stays white.
pub fn derotate_observation(cfg: &MimoOfdmConfig, p: &CVector, y: &CVector) -> CVector {
    let nr = cfg.nr();
    CVector::from_fn(y.len(), |row, _| p[row / nr].conj() * y[row])
}

/// `h_i ~ CN(0, omega_i)`, independent and seeded. Draws the same `h` as
/// [`Measurement::simulate`] with the same seed.
pub fn sample_channel(support: &BeamSupport, seed: u64) -> CVector {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    CVector::from_fn(support.len(), |i, _| complex_normal(&mut rng, support.omega[i]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::convergence::rho_shift_operator;
    use crate::linalg::{hermitian_eigenvalues, LinearOperator};
    use crate::linmodel::UNIT_MAGNITUDE_TOL;
    use approx::assert_abs_diff_eq;

    fn gram_defect(v: &CMatrix, scale: f64) -> f64 {
        let g = v * v.adjoint();
        (g - CMatrix::identity(v.nrows(), v.nrows()) * Complex64::new(scale, 0.0)).norm()
    }

    fn spectral_radius(h: &CMatrix) -> f64 {
        *hermitian_eigenvalues(h).last().unwrap()
    }

    fn desk_clusters() -> Vec<Cluster> {
        vec![
            Cluster {
                user: 0,
                delay: (0, 3),
                vertical: (1, 2),
                horizontal: (0, 2),
                power: 1.0,
            },
            Cluster {
                user: 1,
                delay: (1, 2),
                vertical: (2, 2),
                horizontal: (2, 2),
                power: 0.5,
            },
        ]
    }

    #[test]
    fn two_point_dft() {
        let v = partial_dft(2, 1);
        let expected = [[1.0, 1.0], [1.0, -1.0]];
        for i in 0..2 {
            for j in 0..2 {
                assert_abs_diff_eq!(v[(i, j)].re, expected[i][j], epsilon = 1e-15);
                assert_abs_diff_eq!(v[(i, j)].im, 0.0, epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn partial_dft_rows_are_orthogonal() {
        for (l, f) in [(1, 1), (3, 2), (4, 3), (5, 1), (16, 2)] {
            let v = partial_dft(l, f);
            assert!(gram_defect(&v, (f * l) as f64) <= 1e-10, "L={l} F={f}");
            assert!(v.iter().all(|z| (z.norm() - 1.0).abs() <= 1e-14));
        }
        let v = partial_dft(3, 2);
        for r in 0..3 {
            assert_abs_diff_eq!(v.row(r).norm_squared(), 6.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn basis_identities_on_desk_config() {
        let cfg = MimoOfdmConfig::desk();
        let vv = partial_dft(cfg.nrv, cfg.fv);
        let vh = partial_dft(cfg.nrh, cfg.fh);
        assert!(gram_defect(&vv, (cfg.fv * cfg.nrv) as f64) <= 1e-10);
        assert!(gram_defect(&vh, (cfg.fh * cfg.nrh) as f64) <= 1e-10);
        assert!(gram_defect(&delay_basis(&cfg), (cfg.ftau * cfg.np) as f64) <= 1e-10);
        assert!(gram_defect(&spatial_basis(&cfg), cfg.beams() as f64) <= 1e-10);
    }

    #[test]
    fn config_dimensions() {
        let cfg = MimoOfdmConfig::desk();
        assert_eq!((cfg.n(), cfg.nf(), cfg.m_tilde_general(), cfg.m_tilde_apsp()), (64, 2, 128, 512));
        let big = MimoOfdmConfig::reference_scale();
        assert_eq!((big.n(), big.nf()), (46_080, 25));
        let ceil = MimoOfdmConfig {
            nf_rounding: NfRounding::Ceil,
            ..big
        };
        assert_eq!(ceil.nf(), 26);
        let bad = MimoOfdmConfig { np: 100, ..cfg.clone() };
        assert!(bad.validate().is_err());
        let zero = MimoOfdmConfig { fv: 0, ..cfg };
        assert!(matches!(zero.validate(), Err(SigaError::InvalidConfig { field, .. }) if field == "fv"));
    }

    #[test]
    fn general_measurement_is_unit_magnitude_and_matches_operator() {
        let cfg = MimoOfdmConfig::desk();
        let pilots = PilotScheme::random_general(&cfg, 3);
        let support = clustered_support(&cfg, &desk_clusters()).unwrap();
        let meas = build_general_measurement(&cfg, &pilots, &support).unwrap();
        assert_eq!(meas.a.shape(), (64, support.len()));
        assert!(meas.a.iter().all(|z| (z.norm() - 1.0).abs() <= UNIT_MAGNITUDE_TOL));
        let full = general_operator(&cfg, &pilots).to_dense();
        for (j, &c) in support.support.iter().enumerate() {
            assert_abs_diff_eq!((meas.a.column(j) - full.column(c)).norm(), 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn appendix_chain_for_general_pilots() {
        let cfg = MimoOfdmConfig::desk();
        let pilots = PilotScheme::random_general(&cfg, 11);
        let full = general_operator(&cfg, &pilots).to_dense();
        let rho_full = spectral_radius(&(&full * full.adjoint()));
        let m = pilot_delay_matrix(&cfg, &pilots);
        let rho_pilot = spectral_radius(&(&m * m.adjoint()));
        assert!((rho_full - (cfg.fa() * cfg.nr()) as f64 * rho_pilot).abs() <= 1e-9 * rho_full);
        let k8n = (cfg.users * cfg.fa() * cfg.ftau * cfg.n()) as f64;
        assert!(rho_full <= k8n * (1.0 + 1e-12));
        let support = clustered_support(&cfg, &desk_clusters()).unwrap();
        let a = build_general_measurement(&cfg, &pilots, &support).unwrap().a;
        assert!(spectral_radius(&a.ad_mul(&a)) <= rho_full * (1.0 + 1e-12));
    }

    #[test]
    fn apsp_full_operator_spectrum_is_exact() {
        let cfg = MimoOfdmConfig::desk();
        let full = apsp_operator(&cfg).to_dense();
        let rho = spectral_radius(&(&full * full.adjoint()));
        assert_abs_diff_eq!(rho, (cfg.fa() * cfg.ftau * cfg.n()) as f64, epsilon = 1e-8);
    }

    #[test]
    fn apsp_matches_general_pilots_after_derotation() {
        let cfg = MimoOfdmConfig::desk();
        let pilots = PilotScheme::spread_apsp(&cfg, 5);
        let PilotScheme::Apsp { shifts, p } = &pilots else { unreachable!() };
        for &n in shifts {
            assert!(apsp_phase_vector(&cfg, n).iter().all(|z| (z.norm() - 1.0).abs() <= 1e-14));
        }
        let general_support = clustered_support(&cfg, &desk_clusters()).unwrap();
        let as_general = PilotScheme::General { x: pilots.user_pilots(&cfg) };
        let a_general = build_general_measurement(&cfg, &as_general, &general_support).unwrap().a;

        let (support, origin) = apsp_support(&cfg, shifts, &general_support).unwrap();
        let meas = build_apsp_measurement(&cfg, &pilots, &support).unwrap();
        assert!(meas.a.iter().all(|z| (z.norm() - 1.0).abs() <= UNIT_MAGNITUDE_TOL));
        for (j, &pos) in origin.iter().enumerate() {
            let rotated = derotate_observation(&cfg, p, &a_general.column(pos).into_owned());
            assert_abs_diff_eq!((rotated - meas.a.column(j)).norm(), 0.0, epsilon = 1e-11);
            assert_eq!(meas.d[j], general_support.omega[pos]);
        }
        let rho = spectral_radius(&meas.a.ad_mul(&meas.a));
        assert!(rho <= (cfg.fa() * cfg.ftau * cfg.n()) as f64 * (1.0 + 1e-12));
    }

    #[test]
    fn colliding_shifts_are_rejected() {
        let cfg = MimoOfdmConfig::desk();
        let support = clustered_support(&cfg, &desk_clusters()).unwrap();
        assert!(apsp_support(&cfg, &[0, 0], &support).is_ok());
        let overlapping = vec![Cluster {
            user: 1,
            delay: (0, 1),
            vertical: (1, 1),
            horizontal: (0, 1),
            power: 1.0,
        }];
        let mut clusters = desk_clusters();
        clusters.truncate(1);
        clusters.extend(overlapping);
        let support = clustered_support(&cfg, &clusters).unwrap();
        assert!(apsp_support(&cfg, &[0, 0], &support).is_err());
        assert!(apsp_support(&cfg, &[0, 16], &support).is_ok());
    }

    #[test]
    fn out_of_range_support_is_a_dimension_error() {
        let cfg = MimoOfdmConfig::desk();
        let pilots = PilotScheme::random_general(&cfg, 1);
        let support = BeamSupport::new(vec![3, cfg.m_tilde_general()], vec![1.0, 1.0]).unwrap();
        assert!(matches!(
            build_general_measurement(&cfg, &pilots, &support),
            Err(SigaError::Dimension(_))
        ));
        assert!(BeamSupport::new(vec![2, 2], vec![1.0, 1.0]).is_err());
        assert!(BeamSupport::new(vec![1, 2], vec![1.0, 0.0]).is_err());
    }

    #[test]
    fn lazy_operator_path_gives_the_same_shift() {
        let cfg = MimoOfdmConfig::desk();
        let pilots = PilotScheme::random_general(&cfg, 2);
        let op = general_operator(&cfg, &pilots);
        let dense = crate::convergence::rho_shift_dense(&op.to_dense());
        let lazy = rho_shift_operator(&op, 1e-10);
        assert!((dense - lazy).abs() <= 1e-7 * dense.max(1.0), "{dense} vs {lazy}");
    }

    #[test]
    fn channel_samples_are_seeded_and_scaled() {
        let support = BeamSupport::new((0..4).collect(), vec![1.0; 4]).unwrap();
        assert_eq!(sample_channel(&support, 9), sample_channel(&support, 9));
        let draws = 10_000;
        let mut acc = [0.0; 4];
        for s in 0..draws {
            let h = sample_channel(&support, s);
            for i in 0..4 {
                acc[i] += h[i].norm_sqr();
            }
        }
        for v in acc {
            assert!((v / draws as f64 - 1.0).abs() < 0.05);
        }
    }

    #[test]
    fn support_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("support.txt");
        std::fs::write(&path, "# comment\n7 0.5\n\n2\n").unwrap();
        let s = BeamSupport::load(&path).unwrap();
        assert_eq!(s.support, vec![2, 7]);
        assert_eq!(s.omega, vec![1.0, 0.5]);
        std::fs::write(&path, "2\n2\n").unwrap();
        assert!(matches!(BeamSupport::load(&path), Err(SigaError::Format { .. })));
        std::fs::write(&path, "x\n").unwrap();
        assert!(BeamSupport::load(&path).is_err());
    }
}
