//! Associated linear equation (ALE)
//!
//! ```text
//! -∂t v + D D̃a(t) Δv + [L + L_x Δx + ½ Δxᵀ L_xx Δx] v = 0,   Δx = x - X(t),
//! ```
//!
//! its Riccati-driven Green function for isotropic `L_xx`, and the Gaussian
//! packet that approximates the nonlinear solution.
//!
//! For a packet `N exp(-|x - X|² / 2V)` with `L_xx = ℓ(t) I` the propagator is
//! described by
//!
//! ```text
//! 𝒟' = ℓ 𝒟² + 2D D̃a,  𝒟(0) = 0
//! A  = exp(2 ∫ ℓ 𝒟),   J = ∫ ℓ A,   S = D ∫ L
//! V  = 𝒟 + A V0 / (1 - J V0)
//! N  = N0 √A V0 / (𝒟 (1 - J V0) + A V0) · exp(S / D)
//! ```
//!
//! and `H = 1/J`.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use thiserror::Error;

use crate::coeffs::CoefficientModel;
use crate::ee::{integrate_ee, EeError, EeParams, GaussianInitialData, MomentPath, MomentTrajectory};
use crate::grid::{GridError, GridField};
use crate::ode::{self, OdeError, StepControl, TimeGrid};
use crate::relax::{self, RelaxError, RelaxParams};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AleError {
    #[error("validity margin {margin} is not positive")]
    ValidityViolation { margin: f64 },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("L_xx is not a multiple of the identity at t = {t}")]
    Anisotropic { t: f64 },
    #[error("unsupported coefficients: {0}")]
    Unsupported(String),
    #[error("Riccati solution exceeded {bound} at t = {t}")]
    BlowupDetected { t: f64, bound: f64 },
    #[error("H is infinite at t = {t} (no quadratic term has acted yet)")]
    SingularH { t: f64 },
    #[error("packet focuses to a point before t = {t}")]
    Focusing { t: f64 },
    #[error("grid has {cells_per_sd:.1} cells per standard deviation, need at least 16")]
    ResolutionError { cells_per_sd: f64 },
    #[error("non-finite coefficient at t = {t}")]
    NonFinite { t: f64 },
    #[error("time {t} outside [0, {end}]")]
    OutOfRange { t: f64, end: f64 },
    #[error("domain error: {0}")]
    Domain(String),
    #[error(transparent)]
    Relax(#[from] RelaxError),
    #[error(transparent)]
    Ee(#[from] EeError),
    #[error(transparent)]
    Ode(#[from] OdeError),
    #[error(transparent)]
    Grid(#[from] GridError),
}

/// ALE coefficients at one time.
#[derive(Debug, Clone, PartialEq)]
pub struct AleSample {
    pub l: f64,
    pub l_x: DVector<f64>,
    pub l_xx: DMatrix<f64>,
    pub center: DVector<f64>,
}

impl AleSample {
    /// `L + L_x Δx + ½ Δxᵀ L_xx Δx`.
    pub fn potential(&self, x: &[f64]) -> f64 {
        let n = x.len();
        let mut v = self.l;
        for i in 0..n {
            let di = x[i] - self.center[i];
            v += self.l_x[i] * di;
            for j in 0..n {
                v += 0.5 * di * self.l_xx[(i, j)] * (x[j] - self.center[j]);
            }
        }
        v
    }

    /// Scalar `ℓ` with `L_xx = ℓ I`.
    pub fn isotropic_l_xx(&self, t: f64) -> Result<f64, AleError> {
        let n = self.l_xx.nrows();
        let l = self.l_xx[(0, 0)];
        let tol = 1e-12 * self.l_xx.abs().max().max(f64::MIN_POSITIVE);
        for i in 0..n {
            for j in 0..n {
                let expect = if i == j { l } else { 0.0 };
                if (self.l_xx[(i, j)] - expect).abs() > tol {
                    return Err(AleError::Anisotropic { t });
                }
            }
        }
        Ok(l)
    }

    fn check(&self, t: f64) -> Result<(), AleError> {
        let finite = self.l.is_finite()
            && self.l_x.iter().chain(self.l_xx.iter()).chain(self.center.iter()).all(|v| v.is_finite());
        if !finite {
            return Err(AleError::NonFinite { t });
        }
        Ok(())
    }
}

type SampleFn = dyn Fn(f64) -> Result<AleSample, AleError> + Send + Sync;
type ProfileFn = dyn Fn(f64) -> f64 + Send + Sync;

/// Time-dependent ALE coefficients and the diffusion profile.
#[derive(Clone)]
pub struct AleCoeffs {
    dim: usize,
    d: f64,
    sample: Arc<SampleFn>,
    diffusion: Arc<ProfileFn>,
}

impl std::fmt::Debug for AleCoeffs {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("AleCoeffs").field("dim", &self.dim).field("d", &self.d).finish_non_exhaustive()
    }
}

impl AleCoeffs {
    pub fn new(
        dim: usize,
        d: f64,
        sample: impl Fn(f64) -> Result<AleSample, AleError> + Send + Sync + 'static,
        diffusion: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Result<Self, AleError> {
        if !(d.is_finite() && d > 0.0) {
            return Err(AleError::Domain(format!("D = {d} must be positive")));
        }
        Ok(Self {
            dim,
            d,
            sample: Arc::new(sample),
            diffusion: Arc::new(diffusion),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn d(&self) -> f64 {
        self.d
    }

    pub fn sample(&self, t: f64) -> Result<AleSample, AleError> {
        let s = (self.sample)(t)?;
        if s.center.len() != self.dim || s.l_x.len() != self.dim || s.l_xx.nrows() != self.dim {
            return Err(AleError::DimensionMismatch {
                expected: self.dim,
                got: s.center.len(),
            });
        }
        s.check(t)?;
        Ok(s)
    }

    /// `D D̃a(t)`.
    pub fn diffusivity(&self, t: f64) -> f64 {
        self.d * (self.diffusion)(t)
    }
}

/// Coefficients of the relaxation scenario, with `σ` in closed form:
/// `L = ã - κσ²β(1 - 2α/ϱ²)`, `L_x = 0`, `L_xx = 2κσ²β/ϱ² I`, where
/// `α = D_in + 2D∫D̃a` is the per-axis second moment.
pub fn build_ale_example(params: &RelaxParams) -> Result<AleCoeffs, AleError> {
    let margin = relax::validity_margin(params);
    if !(margin > 0.0) {
        return Err(AleError::ValidityViolation { margin });
    }
    relax::sigma_closed(0.0, params)?;
    let p = *params;
    let rho2 = p.rho * p.rho;
    AleCoeffs::new(
        2,
        p.d,
        move |t| {
            let sigma = relax::sigma_closed(t, &p)?;
            let pr = &p.profiles;
            let beta = pr.recombination_amplitude(t);
            let k = p.kappa * sigma * sigma * beta;
            let bracket = 1.0 - 2.0 * p.d_in / rho2 - 4.0 * p.d / rho2 * pr.diffusion_integral(t);
            Ok(AleSample {
                l: pr.ionization_rate(t) - k * bracket,
                l_x: DVector::zeros(2),
                l_xx: DMatrix::identity(2, 2) * (2.0 * k / rho2),
                center: DVector::zeros(2),
            })
        },
        move |t| p.profiles.diffusion_factor(t),
    )
}

/// General coefficients from a moment path and Taylor data:
///
/// ```text
/// L    = a - κσ² (b + ½ Sp[(b_yy + b_zz) α⁽²⁾])
/// L_x  = a_x - κσ² b_x
/// L_xx = a_xx - κσ² b_xx
/// ```
///
/// all evaluated at `(X, X, X, t)`.
pub fn build_ale_general(
    path: Arc<dyn MomentPath>,
    model: Arc<dyn CoefficientModel>,
    d: f64,
    kappa: f64,
) -> Result<AleCoeffs, AleError> {
    if path.dim() != model.dim() {
        return Err(AleError::DimensionMismatch {
            expected: model.dim(),
            got: path.dim(),
        });
    }
    let m = model.clone();
    AleCoeffs::new(
        model.dim(),
        d,
        move |t| {
            let st = path.moments_at(t)?;
            let a = model.ionization(&st.center, t);
            let b = model.kernel(&st.center, &st.center, t);
            let k = kappa * st.sigma * st.sigma;
            let corr = 0.5 * ((&b.hess_yy + &b.hess_zz) * &st.alpha2).trace();
            Ok(AleSample {
                l: a.value - k * (b.value + corr),
                l_x: &a.grad - &b.grad_x * k,
                l_xx: &a.hess - &b.hess_xx * k,
                center: st.center,
            })
        },
        move |t| m.diffusion_factor(t),
    )
}

/// Which potential drives a linear evolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PotentialForm {
    /// Quadratic expansion `L + L_x Δx + ½ Δxᵀ L_xx Δx`.
    Quadratic,
    /// `a(x) - κσ² (b(x, X, X) + ½ Sp[(b_yy + b_zz)(x, X, X) α⁽²⁾])`, the kernel
    /// evaluated at `x` before expansion.
    Kernel,
}

/// Potential of the linear equation in either form, frozen at one time.
pub enum PotentialFrame {
    Quadratic(AleSample),
    Kernel {
        model: Arc<dyn CoefficientModel>,
        t: f64,
        k: f64,
        center: DVector<f64>,
        alpha2: DMatrix<f64>,
    },
}

impl PotentialFrame {
    pub fn value(&self, x: &[f64]) -> f64 {
        match self {
            PotentialFrame::Quadratic(s) => s.potential(x),
            PotentialFrame::Kernel {
                model,
                t,
                k,
                center,
                alpha2,
            } => model.ionization_value(x, *t) - k * model.kernel_potential(x, center, alpha2, *t),
        }
    }
}

/// Source of potential frames for the grid solver.
#[derive(Clone)]
pub struct AlePotential {
    pub form: PotentialForm,
    pub ale: AleCoeffs,
    pub path: Arc<dyn MomentPath>,
    pub model: Arc<dyn CoefficientModel>,
    pub kappa: f64,
}

impl AlePotential {
    /// Both forms over the same moment path.
    pub fn new(
        form: PotentialForm,
        path: Arc<dyn MomentPath>,
        model: Arc<dyn CoefficientModel>,
        d: f64,
        kappa: f64,
    ) -> Result<Self, AleError> {
        let ale = build_ale_general(path.clone(), model.clone(), d, kappa)?;
        Ok(Self {
            form,
            ale,
            path,
            model,
            kappa,
        })
    }

    pub fn frame(&self, t: f64) -> Result<PotentialFrame, AleError> {
        match self.form {
            PotentialForm::Quadratic => Ok(PotentialFrame::Quadratic(self.ale.sample(t)?)),
            PotentialForm::Kernel => {
                let st = self.path.moments_at(t)?;
                Ok(PotentialFrame::Kernel {
                    model: self.model.clone(),
                    t,
                    k: self.kappa * st.sigma * st.sigma,
                    center: st.center,
                    alpha2: st.alpha2,
                })
            }
        }
    }

    pub fn diffusivity(&self, t: f64) -> f64 {
        self.ale.diffusivity(t)
    }
}

/// Riccati integration settings: step control plus a blow-up bound on `𝒟`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RiccatiControl {
    pub step: StepControl,
    pub blowup_bound: f64,
}

impl Default for RiccatiControl {
    fn default() -> Self {
        Self {
            step: StepControl {
                rel_tol: 1e-10,
                ..StepControl::default()
            },
            blowup_bound: 1e3,
        }
    }
}

/// `𝒟` on a uniform time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct RiccatiSolution {
    pub grid: TimeGrid,
    pub dcal: Vec<f64>,
}

impl RiccatiSolution {
    pub fn at(&self, t: f64) -> Result<f64, AleError> {
        check_range(t, self.grid.horizon())?;
        Ok(ode::lagrange_uniform(&self.dcal, self.grid.step, t))
    }
}

fn check_range(t: f64, end: f64) -> Result<(), AleError> {
    if !(t >= 0.0 && t <= end * (1.0 + 1e-12)) {
        return Err(AleError::OutOfRange { t, end });
    }
    Ok(())
}

/// Solves `𝒟' = ℓ(t) 𝒟² + 2D D̃a(t)`, `𝒟(0) = 0` with RK4 and step halving.
pub fn solve_riccati(ale: &AleCoeffs, grid: &TimeGrid, control: &RiccatiControl) -> Result<RiccatiSolution, AleError> {
    let bound = control.blowup_bound;
    let out = ode::integrate(
        |t, y: &[f64], dy: &mut [f64]| -> Result<(), AleError> {
            let l = ale.sample(t)?.isotropic_l_xx(t)?;
            dy[0] = l * y[0] * y[0] + 2.0 * ale.diffusivity(t);
            Ok(())
        },
        |t, y: &[f64]| {
            if y[0].abs() > bound {
                Err(AleError::BlowupDetected { t, bound })
            } else {
                Ok(())
            }
        },
        &[0.0],
        &grid.times(),
        &[0],
        &control.step,
    )?;
    Ok(RiccatiSolution {
        grid: *grid,
        dcal: out.into_iter().map(|y| y[0]).collect(),
    })
}

/// Propagator data on the Riccati grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GreenState {
    pub grid: TimeGrid,
    pub d: f64,
    pub center: DVector<f64>,
    pub dcal: Vec<f64>,
    /// `A = exp(2∫ℓ𝒟)`.
    pub a: Vec<f64>,
    /// `J = ∫ℓA = 1/H`.
    pub h_inv: Vec<f64>,
    /// `S = D∫L`.
    pub s: Vec<f64>,
}

/// Propagator data interpolated at one time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GreenPoint {
    pub dcal: f64,
    pub a: f64,
    pub h_inv: f64,
    pub s: f64,
}

impl GreenState {
    pub fn at(&self, t: f64) -> Result<GreenPoint, AleError> {
        check_range(t, self.grid.horizon())?;
        let h = self.grid.step;
        Ok(GreenPoint {
            dcal: ode::lagrange_uniform(&self.dcal, h, t),
            a: ode::lagrange_uniform(&self.a, h, t),
            h_inv: ode::lagrange_uniform(&self.h_inv, h, t),
            s: ode::lagrange_uniform(&self.s, h, t),
        })
    }

    /// `H = 1/J`.
    pub fn h(&self, t: f64) -> Result<f64, AleError> {
        let j = self.at(t)?.h_inv;
        if j == 0.0 {
            return Err(AleError::SingularH { t });
        }
        Ok(1.0 / j)
    }
}

/// `A`, `H` and `S` by cumulative Simpson quadrature on the Riccati grid.
/// Requires `L_x = 0` and a stationary centroid.
pub fn green_params(ale: &AleCoeffs, riccati: &RiccatiSolution) -> Result<GreenState, AleError> {
    let times = riccati.grid.times();
    let samples = times.iter().map(|&t| ale.sample(t)).collect::<Result<Vec<_>, _>>()?;
    let center = samples[0].center.clone();
    let mut ell = Vec::with_capacity(times.len());
    for (s, &t) in samples.iter().zip(&times) {
        if s.l_x.iter().any(|v| *v != 0.0) {
            return Err(AleError::Unsupported("the Gaussian propagator needs L_x = 0".into()));
        }
        if (&s.center - &center).norm() > 1e-12 * (1.0 + center.norm()) {
            return Err(AleError::Unsupported("the Gaussian propagator needs a fixed centroid".into()));
        }
        ell.push(s.isotropic_l_xx(t)?);
    }
    let h = riccati.grid.step;
    let ld: Vec<f64> = ell.iter().zip(&riccati.dcal).map(|(l, d)| l * d).collect();
    let a: Vec<f64> = ode::cumulative_simpson(&ld, h).iter().map(|v| (2.0 * v).exp()).collect();
    let la: Vec<f64> = ell.iter().zip(&a).map(|(l, a)| l * a).collect();
    let h_inv = ode::cumulative_simpson(&la, h);
    let l: Vec<f64> = samples.iter().map(|s| s.l).collect();
    let s = ode::cumulative_simpson(&l, h).iter().map(|v| ale.d() * v).collect();
    Ok(GreenState {
        grid: riccati.grid,
        d: ale.d(),
        center,
        dcal: riccati.dcal.clone(),
        a,
        h_inv,
        s,
    })
}

/// Riccati solve followed by [`green_params`].
pub fn green_state(ale: &AleCoeffs, grid: &TimeGrid, control: &RiccatiControl) -> Result<GreenState, AleError> {
    green_params(ale, &solve_riccati(ale, grid, control)?)
}

/// `amplitude · exp(-|x - center|² / (2 variance))`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPacket {
    pub amplitude: f64,
    pub variance: f64,
    pub center: DVector<f64>,
}

impl GaussianPacket {
    pub fn value(&self, x: &[f64]) -> f64 {
        let r2: f64 = x.iter().zip(self.center.iter()).map(|(a, c)| (a - c) * (a - c)).sum();
        self.amplitude * (-0.5 * r2 / self.variance).exp()
    }

    /// Total mass in two dimensions.
    pub fn mass(&self) -> f64 {
        2.0 * std::f64::consts::PI * self.variance * self.amplitude
    }
}

/// Propagates the Gaussian initial packet `C0 exp(-|x - c|²/(Dγ²))`.
pub fn evolve_gaussian(initial: &GaussianInitialData, green: &GreenState, t: f64) -> Result<GaussianPacket, AleError> {
    initial.validate()?;
    let c = DVector::from_row_slice(&initial.center);
    if (&c - &green.center).norm() > 1e-12 * (1.0 + c.norm()) {
        return Err(AleError::Domain("initial packet and propagator have different centers".into()));
    }
    let g = green.at(t)?;
    let v0 = initial.variance();
    let focus = 1.0 - g.h_inv * v0;
    if !(focus > 0.0) {
        return Err(AleError::Focusing { t });
    }
    let den = g.dcal * focus + g.a * v0;
    Ok(GaussianPacket {
        amplitude: initial.c0 * g.a.sqrt() * v0 / den * (g.s / green.d).exp(),
        variance: g.dcal + g.a * v0 / focus,
        center: c,
    })
}

/// Leading semiclassical term assembled from the initial packet and the
/// propagator.
#[derive(Debug, Clone)]
pub struct SemiclassicalSolution {
    pub initial: GaussianInitialData,
    pub green: GreenState,
}

impl SemiclassicalSolution {
    /// Builds the propagator of the relaxation scenario on a grid of spacing
    /// at most `max_step`.
    pub fn relaxation(params: &RelaxParams, horizon: f64, max_step: f64) -> Result<Self, AleError> {
        let ale = build_ale_example(params)?;
        let grid = TimeGrid::with_max_step(horizon, max_step)?;
        Ok(Self {
            initial: params.initial_data(),
            green: green_state(&ale, &grid, &RiccatiControl::default())?,
        })
    }

    /// Builds the propagator from the integrated moment system instead of the
    /// closed form, so it exists wherever the moments do, including outside
    /// the closed-form validity regime. Also returns the trajectory, sampled
    /// every `max_step`.
    pub fn from_moment_system(
        params: &RelaxParams,
        horizon: f64,
        max_step: f64,
        control: &StepControl,
    ) -> Result<(Self, MomentTrajectory), AleError> {
        let grid = TimeGrid::with_max_step(horizon, max_step)?;
        let model = params.model();
        let ee = EeParams {
            d: params.d,
            kappa: params.kappa,
            model: &model,
        };
        let traj = integrate_ee(&params.initial_moments(), &grid.times(), &ee, control)?;
        let ale = build_ale_general(Arc::new(traj.clone()), Arc::new(model), params.d, params.kappa)?;
        let solution = Self {
            initial: params.initial_data(),
            green: green_state(&ale, &grid, &RiccatiControl::default())?,
        };
        Ok((solution, traj))
    }

    pub fn packet(&self, t: f64) -> Result<GaussianPacket, AleError> {
        evolve_gaussian(&self.initial, &self.green, t)
    }

    pub fn value(&self, x: &[f64], t: f64) -> Result<f64, AleError> {
        Ok(self.packet(t)?.value(x))
    }

    pub fn sample(&self, t: f64, nx: usize, ny: usize, lx: f64, ly: f64) -> Result<GridField, AleError> {
        let p = self.packet(t)?;
        Ok(GridField::from_fn(nx, ny, lx, ly, |x, y| p.value(&[x, y]))?)
    }
}

/// Value of the leading term at `(x, t)`.
pub fn semiclassical_u(x: &[f64], t: f64, solution: &SemiclassicalSolution) -> Result<f64, AleError> {
    solution.value(x, t)
}

/// Uniform sample points centred on the origin for [`ale_residual`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResidualGrid {
    pub nx: usize,
    pub ny: usize,
    pub lx: f64,
    pub ly: f64,
}

impl ResidualGrid {
    /// Square grid covering `±half_width` standard deviations with
    /// `cells_per_sd` cells per standard deviation.
    pub fn around(sd: f64, cells_per_sd: usize, half_width: f64) -> Self {
        let n = (2.0 * half_width * cells_per_sd as f64).ceil() as usize;
        let l = n as f64 * sd / cells_per_sd as f64;
        Self { nx: n, ny: n, lx: l, ly: l }
    }
}

/// Time step of the central difference in [`ale_residual`].
pub const RESIDUAL_TIME_STEP: f64 = 1e-5;

/// `‖[-∂t + D D̃a Δ + L + L_x Δx + ½ Δxᵀ L_xx Δx] v‖₂ / ‖v‖₂` on the grid, with
/// second-order central differences in space and time.
pub fn ale_residual<V>(v: V, ale: &AleCoeffs, t: f64, grid: &ResidualGrid, packet_sd: f64) -> Result<f64, AleError>
where
    V: Fn(&[f64], f64) -> Result<f64, AleError> + Sync,
{
    let hx = grid.lx / grid.nx as f64;
    let hy = grid.ly / grid.ny as f64;
    let cells_per_sd = packet_sd / hx.max(hy);
    if !(cells_per_sd >= 16.0) {
        return Err(AleError::ResolutionError { cells_per_sd });
    }
    if ale.dim() != 2 {
        return Err(AleError::DimensionMismatch {
            expected: 2,
            got: ale.dim(),
        });
    }
    let tau = RESIDUAL_TIME_STEP;
    if t < tau {
        return Err(AleError::Domain(format!("residual time {t} must exceed the time step {tau}")));
    }
    let coeffs = ale.sample(t)?;
    let diff = ale.diffusivity(t);
    let (res2, norm2) = (0..grid.ny)
        .into_par_iter()
        .map(|j| -> Result<(f64, f64), AleError> {
            let y = (j as f64 - (grid.ny / 2) as f64) * hy;
            let mut r2 = 0.0;
            let mut n2 = 0.0;
            for i in 0..grid.nx {
                let x = (i as f64 - (grid.nx / 2) as f64) * hx;
                let c = v(&[x, y], t)?;
                let dt = (v(&[x, y], t + tau)? - v(&[x, y], t - tau)?) / (2.0 * tau);
                let lap = (v(&[x + hx, y], t)? - 2.0 * c + v(&[x - hx, y], t)?) / (hx * hx)
                    + (v(&[x, y + hy], t)? - 2.0 * c + v(&[x, y - hy], t)?) / (hy * hy);
                let r = -dt + diff * lap + coeffs.potential(&[x, y]) * c;
                r2 += r * r;
                n2 += c * c;
            }
            Ok((r2, n2))
        })
        .try_reduce(|| (0.0, 0.0), |a, b| Ok((a.0 + b.0, a.1 + b.1)))?;
    if norm2 == 0.0 {
        return Err(AleError::Domain("v vanishes on the grid".into()));
    }
    Ok((res2 / norm2).sqrt())
}
