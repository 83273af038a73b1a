//! Pseudo-spectral reference solver for
//!
//! ```text
//! ∂t u = D D̃a(t) Δu + a(t) u - κ β(t) u (k * u)²,   k(r) = exp(-|r|²/2ϱ²)
//! ```
//!
//! on a periodic square grid. Each step is a Strang splitting: exact Fourier
//! diffusion over half a step, an explicit midpoint step of the reaction, and
//! another half step of diffusion. The Gaussian kernel factorizes, so the
//! double integral of the recombination term is the square of one
//! convolution, evaluated with the exact Fourier transform of `k`.

use std::fs;
use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ale::{AleError, AlePotential};
use crate::coeffs::{ExpProfiles, GaussianKernel};
use crate::ee::{grid_moments, EeError};
use crate::grid::{GridError, GridField};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PdeError {
    #[error("invalid solver configuration: {0}")]
    Config(String),
    #[error("field maximum grew {growth:.3e}-fold in one step at t = {t}")]
    StabilityViolation { t: f64, growth: f64 },
    #[error("boundary values reach {ratio:.3e} of the peak at t = {t}; enlarge the domain")]
    BoundaryContamination { t: f64, ratio: f64 },
    #[error("kernel is not separable")]
    KernelNotSeparable,
    #[error("grids differ: {0}")]
    GridMismatch(String),
    #[error("export failed: {0}")]
    Io(String),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Ee(#[from] EeError),
    #[error(transparent)]
    Ale(#[from] AleError),
}

/// Form of the recombination term.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum Interaction {
    /// `β u (k * u)²` with the Gaussian kernel of radius `rho`.
    Nonlocal { rho: f64 },
    /// Contact term `coupling · β u³`. The unnormalized kernel has no
    /// canonical local limit, so the coupling is chosen by the user.
    Local { coupling: f64 },
}

impl Interaction {
    pub fn nonlocal(kernel: GaussianKernel) -> Self {
        Interaction::Nonlocal { rho: kernel.rho }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PdeConfig {
    pub dt: f64,
    pub n_steps: usize,
    pub d: f64,
    pub kappa: f64,
    pub interaction: Interaction,
    pub profiles: ExpProfiles,
    pub snapshot_stride: usize,
}

/// Boundary values above this fraction of the peak count as wraparound.
pub const BOUNDARY_TOLERANCE: f64 = 1e-12;
/// Largest admissible growth of the field maximum in one step.
pub const MAX_STEP_GROWTH: f64 = 10.0;
/// Largest admissible `dt · λ`, with `λ` the linearized reaction rate.
pub const REACTION_CFL: f64 = 0.5;

impl PdeConfig {
    pub fn validate(&self) -> Result<(), PdeError> {
        let bad = |m: &str| Err(PdeError::Config(m.to_string()));
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return bad("dt must be positive");
        }
        if self.n_steps == 0 || self.snapshot_stride == 0 {
            return bad("n_steps and snapshot_stride must be at least 1");
        }
        if !(self.d.is_finite() && self.d >= 0.0) {
            return bad("D must be non-negative");
        }
        if !(self.kappa.is_finite() && self.kappa >= 0.0) {
            return bad("kappa must be non-negative");
        }
        match self.interaction {
            Interaction::Nonlocal { rho } => {
                GaussianKernel::new(rho).map_err(|e| PdeError::Config(e.to_string()))?;
            }
            Interaction::Local { coupling } => {
                if !(coupling.is_finite() && coupling >= 0.0) {
                    return bad("local coupling must be non-negative");
                }
            }
        }
        self.profiles.validate().map_err(|e| PdeError::Config(e.to_string()))?;
        Ok(())
    }

    pub fn horizon(&self) -> f64 {
        self.dt * self.n_steps as f64
    }

    /// Stability bound for the explicit reaction: `dt (ã + 3κ β c²) ≤ 0.5`,
    /// with `c²` the largest squared interaction field of `u`.
    pub fn check_reaction_bound(&self, u: &GridField) -> Result<(), PdeError> {
        let spec = Spectral::new(u.nx(), u.ny(), u.lx(), u.ly());
        let c2 = match self.interaction {
            Interaction::Nonlocal { rho } => {
                let c = spec.convolve(u.values(), &spec.gaussian_symbol(rho));
                c.iter().fold(0.0f64, |m, v| m.max(v * v))
            }
            Interaction::Local { coupling } => coupling * u.max_abs().powi(2),
        };
        let beta_max = self.profiles.b1.max(self.profiles.b2);
        let lambda = self.profiles.a1 + 3.0 * self.kappa * beta_max * c2;
        if self.dt * lambda > REACTION_CFL {
            return Err(PdeError::Config(format!(
                "dt = {} violates the reaction bound dt * {lambda:.3e} <= {REACTION_CFL}",
                self.dt
            )));
        }
        Ok(())
    }
}

/// Plans and wavenumbers for one grid.
pub struct Spectral {
    nx: usize,
    ny: usize,
    fx: Arc<dyn Fft<f64>>,
    fy: Arc<dyn Fft<f64>>,
    ix: Arc<dyn Fft<f64>>,
    iy: Arc<dyn Fft<f64>>,
    kx2: Vec<f64>,
    ky2: Vec<f64>,
    k2: Vec<f64>,
}

fn wavenumbers(n: usize, l: f64) -> Vec<f64> {
    (0..n)
        .map(|i| {
            let m = if i <= n / 2 { i as f64 } else { i as f64 - n as f64 };
            2.0 * std::f64::consts::PI * m / l
        })
        .collect()
}

fn transpose(src: &[Complex64], dst: &mut [Complex64], rows: usize, cols: usize) {
    dst.par_chunks_mut(rows).enumerate().for_each(|(c, out)| {
        for (r, v) in out.iter_mut().enumerate() {
            *v = src[r * cols + c];
        }
    });
}

impl Spectral {
    pub fn new(nx: usize, ny: usize, lx: f64, ly: f64) -> Self {
        let mut planner = FftPlanner::new();
        let kx = wavenumbers(nx, lx);
        let ky = wavenumbers(ny, ly);
        let mut k2 = vec![0.0; nx * ny];
        for j in 0..ny {
            for i in 0..nx {
                k2[j * nx + i] = kx[i] * kx[i] + ky[j] * ky[j];
            }
        }
        Self {
            nx,
            ny,
            kx2: kx.iter().map(|k| k * k).collect(),
            ky2: ky.iter().map(|k| k * k).collect(),
            fx: planner.plan_fft_forward(nx),
            fy: planner.plan_fft_forward(ny),
            ix: planner.plan_fft_inverse(nx),
            iy: planner.plan_fft_inverse(ny),
            k2,
        }
    }

    pub fn for_field(u: &GridField) -> Self {
        Self::new(u.nx(), u.ny(), u.lx(), u.ly())
    }

    /// `|k|²` in the same layout as the field.
    pub fn k2(&self) -> &[f64] {
        &self.k2
    }

    fn transform(&self, data: &mut [Complex64], row: &Arc<dyn Fft<f64>>, col: &Arc<dyn Fft<f64>>) {
        data.par_chunks_mut(self.nx).for_each(|r| row.process(r));
        let mut t = vec![Complex64::default(); data.len()];
        transpose(data, &mut t, self.ny, self.nx);
        t.par_chunks_mut(self.ny).for_each(|c| col.process(c));
        transpose(&t, data, self.nx, self.ny);
    }

    /// Unnormalized forward transform in place.
    pub fn forward(&self, data: &mut [Complex64]) {
        self.transform(data, &self.fx, &self.fy);
    }

    /// Inverse transform in place, normalized so that it undoes [`Spectral::forward`].
    pub fn inverse(&self, data: &mut [Complex64]) {
        self.transform(data, &self.ix, &self.iy);
        let s = 1.0 / (self.nx * self.ny) as f64;
        data.par_iter_mut().for_each(|v| *v *= s);
    }

    /// Multiplies the spectrum of `u` by `symbol` and returns the real part.
    pub fn apply(&self, u: &[f64], symbol: &[f64]) -> Vec<f64> {
        let mut c: Vec<Complex64> = u.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.forward(&mut c);
        c.par_iter_mut().zip(symbol.par_iter()).for_each(|(v, s)| *v *= s);
        self.inverse(&mut c);
        c.into_iter().map(|v| v.re).collect()
    }

    /// Continuous Fourier transform of `exp(-|r|²/2ϱ²)` on the wavenumber grid.
    pub fn gaussian_symbol(&self, rho: f64) -> Vec<f64> {
        let k = GaussianKernel { rho };
        self.k2.iter().map(|&k2| k.factor_fourier_2d(k2)).collect()
    }

    /// Periodic convolution `∫ k(x - y) u(y) dy` given the symbol of `k`.
    pub fn convolve(&self, u: &[f64], symbol: &[f64]) -> Vec<f64> {
        self.apply(u, symbol)
    }

    /// `exp(-D ∫D̃a · |k|²)`.
    pub fn heat_symbol(&self, spread: f64) -> Vec<f64> {
        let ex: Vec<f64> = self.kx2.iter().map(|k2| (-spread * k2).exp()).collect();
        let mut out = Vec::with_capacity(self.nx * self.ny);
        for k2 in &self.ky2 {
            let ey = (-spread * k2).exp();
            out.extend(ex.iter().map(|e| e * ey));
        }
        out
    }
}

/// `β u (k * u)²` for the Gaussian kernel, by periodic FFT convolution.
pub fn nonlocal_term(field: &GridField, kernel: &GaussianKernel, beta_t: f64) -> GridField {
    let spec = Spectral::for_field(field);
    let c = spec.convolve(field.values(), &spec.gaussian_symbol(kernel.rho));
    let values = field.values().iter().zip(&c).map(|(u, c)| beta_t * u * c * c).collect();
    GridField::from_values(field.nx(), field.ny(), field.lx(), field.ly(), values)
        .expect("same grid as a valid field")
}

/// Moments recorded during a run. A field without mass reports zeros.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PdeMoments {
    pub t: f64,
    pub sigma: f64,
    pub center: [f64; 2],
    pub alpha2: [f64; 4],
}

impl PdeMoments {
    fn of(field: &GridField, t: f64) -> Result<Self, PdeError> {
        match grid_moments(field) {
            Ok(m) => Ok(Self {
                t,
                sigma: m.sigma,
                center: [m.center[0], m.center[1]],
                alpha2: [m.alpha2[(0, 0)], m.alpha2[(0, 1)], m.alpha2[(1, 0)], m.alpha2[(1, 1)]],
            }),
            Err(EeError::ZeroMass) if field.max_abs() == 0.0 => Ok(Self {
                t,
                sigma: 0.0,
                center: [0.0; 2],
                alpha2: [0.0; 4],
            }),
            Err(e) => Err(e.into()),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Snapshot {
    pub t: f64,
    pub field: GridField,
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub snapshots: Vec<Snapshot>,
    pub moments: Vec<PdeMoments>,
    /// Smallest `min(u) / max(u)` seen at any step.
    pub min_ratio: f64,
    /// Largest boundary-to-peak ratio seen at any snapshot.
    pub boundary_ratio: f64,
}

impl RunResult {
    pub fn final_field(&self) -> &GridField {
        &self.snapshots.last().expect("at least the initial snapshot").field
    }
}

/// Reaction right-hand side for one stage.
trait Reaction: Sync {
    fn eval(&self, u: &[f64], t: f64) -> Result<Vec<f64>, PdeError>;
}

struct KineticReaction<'a> {
    config: &'a PdeConfig,
    spec: &'a Spectral,
    symbol: Option<Vec<f64>>,
}

impl Reaction for KineticReaction<'_> {
    fn eval(&self, u: &[f64], t: f64) -> Result<Vec<f64>, PdeError> {
        let pr = &self.config.profiles;
        let a = pr.ionization_rate(t);
        let kb = self.config.kappa * pr.recombination_amplitude(t);
        Ok(match (&self.config.interaction, &self.symbol) {
            (Interaction::Nonlocal { .. }, Some(symbol)) => {
                let c = self.spec.convolve(u, symbol);
                u.par_iter().zip(c.par_iter()).map(|(u, c)| a * u - kb * u * c * c).collect()
            }
            (Interaction::Local { coupling }, _) => u.par_iter().map(|u| a * u - kb * coupling * u * u * u).collect(),
            (Interaction::Nonlocal { .. }, None) => return Err(PdeError::KernelNotSeparable),
        })
    }
}

struct LinearReaction<'a> {
    potential: &'a AlePotential,
    nx: usize,
    xs: Vec<f64>,
    ys: Vec<f64>,
}

impl Reaction for LinearReaction<'_> {
    fn eval(&self, u: &[f64], t: f64) -> Result<Vec<f64>, PdeError> {
        let frame = self.potential.frame(t)?;
        Ok(u
            .par_iter()
            .enumerate()
            .map(|(k, u)| frame.value(&[self.xs[k % self.nx], self.ys[k / self.nx]]) * u)
            .collect())
    }
}

fn midpoint_step(r: &dyn Reaction, u: &[f64], t: f64, dt: f64) -> Result<Vec<f64>, PdeError> {
    let k1 = r.eval(u, t)?;
    let um: Vec<f64> = u.iter().zip(&k1).map(|(u, k)| u + 0.5 * dt * k).collect();
    let k2 = r.eval(&um, t + 0.5 * dt)?;
    Ok(u.iter().zip(&k2).map(|(u, k)| u + dt * k).collect())
}

/// One Strang step of the nonlinear equation from `t` to `t + dt`.
pub fn step(field: &GridField, t: f64, config: &PdeConfig) -> Result<GridField, PdeError> {
    config.validate()?;
    let spec = Spectral::for_field(field);
    let reaction = kinetic_reaction(config, &spec);
    let spread = |t0: f64, t1: f64| config.d * config.profiles.diffusion_integral_between(t0, t1);
    strang(field, t, config.dt, &spec, &reaction, &spread)
}

fn kinetic_reaction<'a>(config: &'a PdeConfig, spec: &'a Spectral) -> KineticReaction<'a> {
    let symbol = match config.interaction {
        Interaction::Nonlocal { rho } => Some(spec.gaussian_symbol(rho)),
        Interaction::Local { .. } => None,
    };
    KineticReaction { config, spec, symbol }
}

fn strang(
    field: &GridField,
    t: f64,
    dt: f64,
    spec: &Spectral,
    reaction: &dyn Reaction,
    spread: &dyn Fn(f64, f64) -> f64,
) -> Result<GridField, PdeError> {
    let half = t + 0.5 * dt;
    let u = spec.apply(field.values(), &spec.heat_symbol(spread(t, half)));
    let u = midpoint_step(reaction, &u, t, dt)?;
    let u = spec.apply(&u, &spec.heat_symbol(spread(half, t + dt)));
    Ok(GridField::from_values(field.nx(), field.ny(), field.lx(), field.ly(), u)?)
}

fn drive(
    boundary_limit: Option<f64>,
    phi: &GridField,
    dt: f64,
    n_steps: usize,
    stride: usize,
    spec: &Spectral,
    reaction: &dyn Reaction,
    spread: &dyn Fn(f64, f64) -> f64,
) -> Result<RunResult, PdeError> {
    if phi.min() < 0.0 {
        return Err(PdeError::Config("initial field must be non-negative".into()));
    }
    let mut u = phi.clone();
    let mut out = RunResult {
        snapshots: vec![Snapshot { t: 0.0, field: u.clone() }],
        moments: vec![PdeMoments::of(&u, 0.0)?],
        min_ratio: 0.0,
        boundary_ratio: 0.0,
    };
    record_boundary(&mut out, &u, 0.0, boundary_limit)?;
    for n in 0..n_steps {
        let t = n as f64 * dt;
        let before = u.max_abs();
        u = strang(&u, t, dt, spec, reaction, spread)?;
        let peak = u.max_abs();
        let t1 = (n + 1) as f64 * dt;
        if before > 0.0 && peak > MAX_STEP_GROWTH * before {
            return Err(PdeError::StabilityViolation {
                t: t1,
                growth: peak / before,
            });
        }
        if peak > 0.0 {
            let ratio = u.min() / peak;
            if ratio < out.min_ratio {
                out.min_ratio = ratio;
                if ratio < -BOUNDARY_TOLERANCE {
                    log::warn!("field min reaches {ratio:.3e} of the peak at t = {t1}");
                }
            }
        }
        if (n + 1) % stride == 0 || n + 1 == n_steps {
            record_boundary(&mut out, &u, t1, boundary_limit)?;
            out.moments.push(PdeMoments::of(&u, t1)?);
            out.snapshots.push(Snapshot { t: t1, field: u.clone() });
        }
    }
    Ok(out)
}

fn record_boundary(out: &mut RunResult, u: &GridField, t: f64, limit: Option<f64>) -> Result<(), PdeError> {
    let peak = u.max_abs();
    if peak == 0.0 {
        return Ok(());
    }
    let ratio = u.boundary_max_abs() / peak;
    out.boundary_ratio = out.boundary_ratio.max(ratio);
    match limit {
        Some(limit) if ratio > limit => Err(PdeError::BoundaryContamination { t, ratio }),
        _ => Ok(()),
    }
}

/// Runs the nonlinear equation from `phi` for `config.n_steps` steps,
/// keeping every `snapshot_stride`-th field (and the last one).
pub fn run(config: &PdeConfig, phi: &GridField) -> Result<RunResult, PdeError> {
    config.validate()?;
    config.check_reaction_bound(phi)?;
    let spec = Spectral::for_field(phi);
    let reaction = kinetic_reaction(config, &spec);
    let spread = |t0: f64, t1: f64| config.d * config.profiles.diffusion_integral_between(t0, t1);
    drive(
        Some(BOUNDARY_TOLERANCE),
        phi,
        config.dt,
        config.n_steps,
        config.snapshot_stride,
        &spec,
        &reaction,
        &spread,
    )
}

/// Runs the linear equation `∂t v = D D̃a Δv + V(x, t) v` with the potential
/// of an associated linear equation. The diffusion integral over each half
/// step uses Simpson's rule.
///
/// A quadratic potential grows without bound away from the packet and
/// amplifies round-off there, so boundary values are recorded in
/// [`RunResult::boundary_ratio`] for the caller to judge instead of aborting
/// the run.
pub fn run_linear(
    potential: &AlePotential,
    dt: f64,
    n_steps: usize,
    snapshot_stride: usize,
    phi: &GridField,
) -> Result<RunResult, PdeError> {
    if !(dt.is_finite() && dt > 0.0) || n_steps == 0 || snapshot_stride == 0 {
        return Err(PdeError::Config("need dt > 0 and at least one step".into()));
    }
    let spec = Spectral::for_field(phi);
    let reaction = LinearReaction {
        potential,
        nx: phi.nx(),
        xs: (0..phi.nx()).map(|i| phi.x(i)).collect(),
        ys: (0..phi.ny()).map(|j| phi.y(j)).collect(),
    };
    let spread = |t0: f64, t1: f64| {
        let m = 0.5 * (t0 + t1);
        (t1 - t0) / 6.0 * (potential.diffusivity(t0) + 4.0 * potential.diffusivity(m) + potential.diffusivity(t1))
    };
    drive(None, phi, dt, n_steps, snapshot_stride, &spec, &reaction, &spread)
}

/// Relative L2 difference `‖a - b‖₂ / ‖b‖₂`.
pub fn l2_error(a: &GridField, b: &GridField) -> Result<f64, PdeError> {
    if !a.same_grid(b) {
        return Err(PdeError::GridMismatch(format!(
            "{}x{} on {}x{} versus {}x{} on {}x{}",
            a.nx(),
            a.ny(),
            a.lx(),
            a.ly(),
            b.nx(),
            b.ny(),
            b.lx(),
            b.ly()
        )));
    }
    let (num, den) = a
        .values()
        .iter()
        .zip(b.values())
        .fold((0.0, 0.0), |(n, d), (x, y)| (n + (x - y) * (x - y), d + y * y));
    if den == 0.0 {
        return Err(PdeError::GridMismatch("reference field is identically zero".into()));
    }
    Ok((num / den).sqrt())
}

fn io_err(e: impl std::fmt::Display) -> PdeError {
    PdeError::Io(e.to_string())
}

/// Writes `<stem>.bin` (row-major little-endian `f64`) and `<stem>.json`
/// (`{nx, ny, Lx, Ly, t}`) into `dir`.
pub fn write_snapshot(dir: &Path, stem: &str, field: &GridField, t: f64) -> Result<(), PdeError> {
    fs::create_dir_all(dir).map_err(io_err)?;
    fs::write(dir.join(format!("{stem}.bin")), field.to_le_bytes()).map_err(io_err)?;
    let header = serde_json::to_string(&field.header(t)).map_err(io_err)?;
    fs::write(dir.join(format!("{stem}.json")), header).map_err(io_err)?;
    Ok(())
}

/// Reads a snapshot written by [`write_snapshot`].
pub fn read_snapshot(dir: &Path, stem: &str) -> Result<(GridField, f64), PdeError> {
    let header: crate::grid::SnapshotHeader =
        serde_json::from_str(&fs::read_to_string(dir.join(format!("{stem}.json"))).map_err(io_err)?)
            .map_err(io_err)?;
    let bytes = fs::read(dir.join(format!("{stem}.bin"))).map_err(io_err)?;
    Ok((GridField::from_le_bytes(&header, &bytes)?, header.t))
}

/// Moment trajectory as CSV: `t, sigma, X1, X2, alpha2_11, alpha2_12, alpha2_21, alpha2_22`.
pub fn write_moments_csv<W: Write>(moments: &[PdeMoments], w: W) -> Result<(), PdeError> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["t", "sigma", "X1", "X2", "alpha2_11", "alpha2_12", "alpha2_21", "alpha2_22"])
        .map_err(io_err)?;
    for m in moments {
        let mut row = vec![m.t.to_string(), m.sigma.to_string()];
        row.extend(m.center.iter().map(|v| v.to_string()));
        row.extend(m.alpha2.iter().map(|v| v.to_string()));
        wtr.write_record(&row).map_err(io_err)?;
    }
    wtr.flush().map_err(io_err)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gaussian(n: usize, l: f64, amp: f64, var: f64) -> GridField {
        GridField::from_fn(n, n, l, l, |x, y| amp * (-(x * x + y * y) / (2.0 * var)).exp()).unwrap()
    }

    #[test]
    fn transforms_round_trip() {
        let f = GridField::from_fn(64, 128, 2.0, 3.0, |x, y| (x * 3.0).sin() + y * y).unwrap();
        let spec = Spectral::for_field(&f);
        let mut c: Vec<Complex64> = f.values().iter().map(|&v| Complex64::new(v, 0.0)).collect();
        spec.forward(&mut c);
        spec.inverse(&mut c);
        for (a, b) in c.iter().zip(f.values()) {
            assert!((a.re - b).abs() < 1e-12);
        }
    }

    #[test]
    fn gaussian_convolution_matches_closed_form() {
        let (v, rho) = (0.02, 0.1);
        let u = gaussian(128, 4.0, 1.0, v);
        let term = nonlocal_term(&u, &GaussianKernel { rho }, 1.0);
        let w = rho * rho;
        let c0 = 2.0 * std::f64::consts::PI * v * w / (v + w);
        let peak = term.get(64, 64);
        assert!((peak - c0 * c0).abs() < 1e-6 * c0 * c0);
    }

    #[test]
    fn cubic_homogeneity() {
        let u = gaussian(64, 4.0, 1.0, 0.05);
        let k = GaussianKernel { rho: 0.3 };
        let a = nonlocal_term(&u, &k, 0.7);
        let b = nonlocal_term(&u.scaled(2.0), &k, 0.7);
        for (x, y) in a.values().iter().zip(b.values()) {
            assert!((8.0 * x - y).abs() <= 1e-12 * y.abs().max(1e-300) + 1e-15);
        }
        let zero = nonlocal_term(&u.scaled(0.0), &k, 0.7);
        assert_eq!(zero.max_abs(), 0.0);
    }

    #[test]
    fn l2_error_conventions() {
        let a = gaussian(64, 4.0, 1.0, 0.05);
        assert_eq!(l2_error(&a, &a).unwrap(), 0.0);
        assert!((l2_error(&a, &a.scaled(2.0)).unwrap() - 0.5).abs() < 1e-15);
        let b = gaussian(128, 4.0, 1.0, 0.05);
        assert!(matches!(l2_error(&a, &b), Err(PdeError::GridMismatch(_))));
    }

    #[test]
    fn reaction_bound_is_enforced() {
        let config = PdeConfig {
            dt: 0.6,
            n_steps: 1,
            d: 0.01,
            kappa: 0.0,
            interaction: Interaction::Local { coupling: 1.0 },
            profiles: ExpProfiles::new(1.0, 1.0, 2.0, 1.0, 0.2, 0.4, 1.0).unwrap(),
            snapshot_stride: 1,
        };
        let u = gaussian(64, 4.0, 1.0, 0.05);
        assert!(matches!(run(&config, &u), Err(PdeError::Config(_))));
    }
}
