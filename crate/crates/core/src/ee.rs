//! Second-order moment system: zeroth moment `σ`, centroid `X` and the
//! central second-moment matrix `α⁽²⁾` of a concentrated solution.
//!
//! For Taylor data of `a` and `b` taken at the centroid the system reads
//!
//! ```text
//! σ'    = σ (a + ½ Sp[a_xx α⁽²⁾]) − κ σ³ (b + ½ Sp[(b_xx + b_yy + b_zz) α⁽²⁾])
//! X'    = α⁽²⁾ (a_x − κ σ² b_x)ᵀ
//! α⁽²⁾' = 2 D D̃a(t) I
//! ```
//!
//! The integration constants of the general solution are represented by the
//! initial state itself.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::coeffs::CoefficientModel;
use crate::grid::GridField;
use crate::ode::{self, OdeError, StepControl};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EeError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("non-finite coefficient data at t = {t}")]
    NonFiniteCoefficient { t: f64 },
    #[error("zeroth moment lost positivity at t = {t} (sigma = {sigma})")]
    StepFailure { t: f64, sigma: f64 },
    #[error("invalid moment state: {0}")]
    InvalidState(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("field has zero total mass")]
    ZeroMass,
    #[error("requested time {t} outside trajectory [0, {end}]")]
    OutOfRange { t: f64, end: f64 },
    #[error(transparent)]
    Ode(#[from] OdeError),
    #[error("csv export failed: {0}")]
    Export(String),
}

/// Aggregate moment vector `(σ, X, α⁽²⁾)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentState {
    pub sigma: f64,
    pub center: DVector<f64>,
    pub alpha2: DMatrix<f64>,
}

impl MomentState {
    /// Builds a state and checks `σ > 0` and that `α⁽²⁾` is symmetric
    /// positive semidefinite.
    pub fn new(sigma: f64, center: DVector<f64>, alpha2: DMatrix<f64>) -> Result<Self, EeError> {
        let s = Self { sigma, center, alpha2 };
        s.validate()?;
        Ok(s)
    }

    pub fn isotropic(sigma: f64, center: DVector<f64>, variance: f64) -> Result<Self, EeError> {
        let n = center.len();
        Self::new(sigma, center, DMatrix::identity(n, n) * variance)
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn validate(&self) -> Result<(), EeError> {
        let n = self.dim();
        if self.alpha2.nrows() != n || self.alpha2.ncols() != n {
            return Err(EeError::DimensionMismatch {
                expected: n,
                got: self.alpha2.nrows(),
            });
        }
        if !(self.sigma.is_finite() && self.sigma > 0.0) {
            return Err(EeError::InvalidState(format!("sigma = {} must be positive", self.sigma)));
        }
        if self.center.iter().chain(self.alpha2.iter()).any(|v| !v.is_finite()) {
            return Err(EeError::InvalidState("non-finite entries".into()));
        }
        let scale = self.alpha2.abs().max().max(f64::MIN_POSITIVE);
        if (&self.alpha2 - self.alpha2.transpose()).abs().max() > 1e-12 * scale {
            return Err(EeError::InvalidState("alpha2 is not symmetric".into()));
        }
        let eig = self.alpha2.clone().symmetric_eigen();
        if eig.eigenvalues.iter().any(|&l| l < -1e-12 * scale) {
            return Err(EeError::InvalidState("alpha2 is not positive semidefinite".into()));
        }
        Ok(())
    }

    fn flat_len(n: usize) -> usize {
        1 + n + n * n
    }

    fn to_flat(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(Self::flat_len(self.dim()));
        v.push(self.sigma);
        v.extend(self.center.iter());
        // column-major, identical to row-major for symmetric matrices
        v.extend(self.alpha2.iter());
        v
    }

    fn from_flat(n: usize, y: &[f64]) -> Self {
        Self {
            sigma: y[0],
            center: DVector::from_column_slice(&y[1..1 + n]),
            alpha2: DMatrix::from_column_slice(n, n, &y[1 + n..]),
        }
    }
}

/// Time derivative of a [`MomentState`].
#[derive(Debug, Clone, PartialEq)]
pub struct MomentRates {
    pub sigma: f64,
    pub center: DVector<f64>,
    pub alpha2: DMatrix<f64>,
}

impl MomentRates {
    fn to_flat(&self) -> Vec<f64> {
        let mut v = vec![self.sigma];
        v.extend(self.center.iter());
        v.extend(self.alpha2.iter());
        v
    }
}

/// Small diffusion parameter `D`, nonlinearity strength `κ` and the
/// coefficient model.
#[derive(Clone, Copy)]
pub struct EeParams<'a> {
    pub d: f64,
    pub kappa: f64,
    pub model: &'a dyn CoefficientModel,
}

impl EeParams<'_> {
    pub fn validate(&self) -> Result<(), EeError> {
        if !(self.d.is_finite() && self.d > 0.0) {
            return Err(EeError::Domain(format!("D = {} must be positive", self.d)));
        }
        if !self.kappa.is_finite() {
            return Err(EeError::Domain("kappa must be finite".into()));
        }
        Ok(())
    }
}

/// Right-hand side of the moment system.
pub fn ee_rhs(state: &MomentState, t: f64, params: &EeParams<'_>) -> Result<MomentRates, EeError> {
    let n = params.model.dim();
    if state.dim() != n {
        return Err(EeError::DimensionMismatch {
            expected: n,
            got: state.dim(),
        });
    }
    let a = params.model.ionization(&state.center, t);
    let b = params.model.kernel(&state.center, &state.center, t);
    let da = params.model.diffusion_factor(t);
    let finite = a.value.is_finite()
        && b.value.is_finite()
        && da.is_finite()
        && a.grad.iter().chain(a.hess.iter()).all(|v| v.is_finite())
        && b.grad_x.iter().all(|v| v.is_finite())
        && b.hess_xx.iter().chain(b.hess_yy.iter()).chain(b.hess_zz.iter()).all(|v| v.is_finite());
    if !finite {
        return Err(EeError::NonFiniteCoefficient { t });
    }
    let s = state.sigma;
    let alpha = &state.alpha2;
    let kernel_curv = &b.hess_xx + &b.hess_yy + &b.hess_zz;
    let d_sigma = s * (a.value + 0.5 * (&a.hess * alpha).trace())
        - params.kappa * s.powi(3) * (b.value + 0.5 * (kernel_curv * alpha).trace());
    let drift = &a.grad - &b.grad_x * (params.kappa * s * s);
    let d_center = alpha * drift;
    let d_alpha = DMatrix::identity(n, n) * (2.0 * params.d * da);
    Ok(MomentRates {
        sigma: d_sigma,
        center: d_center,
        alpha2: d_alpha,
    })
}

/// Moment trajectory on an output grid, with rates stored for Hermite
/// interpolation between nodes.
#[derive(Debug, Clone)]
pub struct MomentTrajectory {
    pub times: Vec<f64>,
    pub states: Vec<MomentState>,
    pub rates: Vec<MomentRates>,
}

/// Integrates the moment system with RK4, halving the step until `σ` changes
/// by less than `control.rel_tol` at every output time.
pub fn integrate_ee(
    state0: &MomentState,
    t_grid: &[f64],
    params: &EeParams<'_>,
    control: &StepControl,
) -> Result<MomentTrajectory, EeError> {
    params.validate()?;
    state0.validate()?;
    let n = state0.dim();
    if n != params.model.dim() {
        return Err(EeError::DimensionMismatch {
            expected: params.model.dim(),
            got: n,
        });
    }
    let rhs = |t: f64, y: &[f64], dy: &mut [f64]| -> Result<(), EeError> {
        let st = MomentState::from_flat(n, y);
        let r = ee_rhs(&st, t, params)?;
        dy.copy_from_slice(&r.to_flat());
        Ok(())
    };
    let check = |t: f64, y: &[f64]| -> Result<(), EeError> {
        if y[0] > 0.0 {
            Ok(())
        } else {
            Err(EeError::StepFailure { t, sigma: y[0] })
        }
    };
    let flat = ode::integrate(rhs, check, &state0.to_flat(), t_grid, &[0], control)?;
    let states: Vec<MomentState> = flat.iter().map(|y| MomentState::from_flat(n, y)).collect();
    let rates = states
        .iter()
        .zip(t_grid)
        .map(|(s, &t)| ee_rhs(s, t, params))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(MomentTrajectory {
        times: t_grid.to_vec(),
        states,
        rates,
    })
}

/// Anything that can report the moment state at time `t`.
pub trait MomentPath: Send + Sync {
    fn dim(&self) -> usize;
    fn moments_at(&self, t: f64) -> Result<MomentState, EeError>;
}

impl MomentTrajectory {
    pub fn dim(&self) -> usize {
        self.states[0].dim()
    }

    pub fn end(&self) -> f64 {
        *self.times.last().expect("non-empty trajectory")
    }

    /// Cubic Hermite interpolation of every component.
    pub fn state_at(&self, t: f64) -> Result<MomentState, EeError> {
        let end = self.end();
        if !(0.0..=end * (1.0 + 1e-12)).contains(&t) {
            return Err(EeError::OutOfRange { t, end });
        }
        let k = match self.times.binary_search_by(|x| x.total_cmp(&t)) {
            Ok(i) => return Ok(self.states[i].clone()),
            Err(i) => i.clamp(1, self.times.len() - 1),
        };
        let (t0, t1) = (self.times[k - 1], self.times[k]);
        let y0 = self.states[k - 1].to_flat();
        let y1 = self.states[k].to_flat();
        let d0 = self.rates[k - 1].to_flat();
        let d1 = self.rates[k].to_flat();
        let y: Vec<f64> = (0..y0.len())
            .map(|i| ode::hermite(t0, t1, y0[i], y1[i], d0[i], d1[i], t))
            .collect();
        Ok(MomentState::from_flat(self.dim(), &y))
    }

    /// Writes `t, sigma, X1..Xn, alpha2_11, alpha2_12, ..., alpha2_nn`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), EeError> {
        let n = self.dim();
        let mut wtr = csv::Writer::from_writer(w);
        let mut header = vec!["t".to_string(), "sigma".to_string()];
        header.extend((1..=n).map(|i| format!("X{i}")));
        for i in 1..=n {
            for j in 1..=n {
                header.push(format!("alpha2_{i}{j}"));
            }
        }
        let err = |e: csv::Error| EeError::Export(e.to_string());
        wtr.write_record(&header).map_err(err)?;
        for (t, s) in self.times.iter().zip(&self.states) {
            let mut row = vec![t.to_string(), s.sigma.to_string()];
            row.extend(s.center.iter().map(|v| v.to_string()));
            for i in 0..n {
                for j in 0..n {
                    row.push(s.alpha2[(i, j)].to_string());
                }
            }
            wtr.write_record(&row).map_err(err)?;
        }
        wtr.flush().map_err(|e| EeError::Export(e.to_string()))?;
        Ok(())
    }
}

impl MomentPath for MomentTrajectory {
    fn dim(&self) -> usize {
        MomentTrajectory::dim(self)
    }
    fn moments_at(&self, t: f64) -> Result<MomentState, EeError> {
        self.state_at(t)
    }
}

/// Gaussian initial packet `φ(x) = C0 exp(-|x - c|² / (D γ²))` in two dimensions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianInitialData {
    pub c0: f64,
    pub gamma: f64,
    pub d: f64,
    pub center: [f64; 2],
}

impl GaussianInitialData {
    pub fn validate(&self) -> Result<(), EeError> {
        for (name, v) in [("C0", self.c0), ("gamma", self.gamma), ("D", self.d)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(EeError::Domain(format!("{name} = {v} must be positive")));
            }
        }
        if self.center.iter().any(|v| !v.is_finite()) {
            return Err(EeError::Domain("packet center must be finite".into()));
        }
        Ok(())
    }

    /// Per-coordinate variance `Dγ²/2`.
    pub fn variance(&self) -> f64 {
        0.5 * self.d * self.gamma * self.gamma
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        let r2 = (x[0] - self.center[0]).powi(2) + (x[1] - self.center[1]).powi(2);
        self.c0 * (-r2 / (self.d * self.gamma * self.gamma)).exp()
    }

    pub fn sample(&self, nx: usize, ny: usize, lx: f64, ly: f64) -> Result<GridField, crate::grid::GridError> {
        GridField::from_fn(nx, ny, lx, ly, |x, y| self.value(&[x, y]))
    }
}

/// Moments of the Gaussian packet: `σ = C0 π D γ²`, `X = c`, `α⁽²⁾ = (Dγ²/2) I`.
pub fn initial_moments(data: &GaussianInitialData) -> Result<MomentState, EeError> {
    data.validate()?;
    let sigma = data.c0 * std::f64::consts::PI * data.d * data.gamma * data.gamma;
    MomentState::isotropic(sigma, DVector::from_row_slice(&data.center), data.variance())
}

/// Midpoint-rule moments of a sampled field.
pub fn grid_moments(field: &GridField) -> Result<MomentState, EeError> {
    let area = field.cell_area();
    let (nx, ny) = (field.nx(), field.ny());
    let mut mass = 0.0;
    let mut mx = 0.0;
    let mut my = 0.0;
    for j in 0..ny {
        let y = field.y(j);
        for i in 0..nx {
            let u = field.get(i, j);
            mass += u;
            mx += u * field.x(i);
            my += u * y;
        }
    }
    if mass * area <= 0.0 || !mass.is_finite() {
        return Err(EeError::ZeroMass);
    }
    let cx = mx / mass;
    let cy = my / mass;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for j in 0..ny {
        let dy = field.y(j) - cy;
        for i in 0..nx {
            let u = field.get(i, j);
            let dx = field.x(i) - cx;
            sxx += u * dx * dx;
            sxy += u * dx * dy;
            syy += u * dy * dy;
        }
    }
    let alpha2 = DMatrix::from_row_slice(2, 2, &[sxx / mass, sxy / mass, sxy / mass, syy / mass]);
    Ok(MomentState {
        sigma: mass * area,
        center: DVector::from_vec(vec![cx, cy]),
        alpha2,
    })
}
