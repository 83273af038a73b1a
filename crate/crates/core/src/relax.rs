//! Closed-form relaxation of an axially symmetric ion packet: the zeroth
//! moment `σ(t)` in terms of incomplete gamma functions, the validity margin,
//! and classification of the qualitative regime.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::coeffs::{CoeffError, ExpProfiles, GaussianKernel, RelaxationModel};
use crate::ee::{EeError, GaussianInitialData, MomentPath, MomentState};
use crate::specialfn::{inc_gamma, SpecialFnError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RelaxError {
    #[error("validity margin {margin} is not positive; the recombination bracket changes sign")]
    ValidityViolation { margin: f64 },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("{extrema} interior extrema with I = {i_value} do not match any regime")]
    Inconsistent { i_value: f64, extrema: usize },
    #[error(transparent)]
    SpecialFn(#[from] SpecialFnError),
    #[error(transparent)]
    Coeff(#[from] CoeffError),
}

/// Parameters of the relaxation scenario.
///
/// `sigma0 = C0 π D γ²` and `d_in = D γ² / 2` tie the packet description to
/// its moments; [`RelaxParams::validate`] cross-checks both.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RelaxParams {
    pub kappa: f64,
    pub d: f64,
    pub d_in: f64,
    pub rho: f64,
    pub sigma0: f64,
    pub gamma: f64,
    pub c0: f64,
    pub profiles: ExpProfiles,
}

const CONSISTENCY_TOL: f64 = 1e-9;

impl RelaxParams {
    /// Parameters from the Gaussian packet `C0 exp(-x²/(Dγ²))`.
    pub fn from_gaussian(
        kappa: f64,
        d: f64,
        rho: f64,
        gamma: f64,
        c0: f64,
        profiles: ExpProfiles,
    ) -> Result<Self, RelaxError> {
        let p = Self {
            kappa,
            d,
            d_in: 0.5 * d * gamma * gamma,
            rho,
            sigma0: c0 * std::f64::consts::PI * d * gamma * gamma,
            gamma,
            c0,
            profiles,
        };
        p.validate()?;
        Ok(p)
    }

    /// Parameters from the initial moments `σ(0)` and `D_in`.
    pub fn from_moments(
        kappa: f64,
        d: f64,
        d_in: f64,
        rho: f64,
        sigma0: f64,
        profiles: ExpProfiles,
    ) -> Result<Self, RelaxError> {
        if !(d > 0.0 && d_in > 0.0) {
            return Err(RelaxError::InvalidParameter(
                "D and D_in must be positive to recover the packet width".into(),
            ));
        }
        let gamma = (2.0 * d_in / d).sqrt();
        let c0 = sigma0 / (2.0 * std::f64::consts::PI * d_in);
        let p = Self {
            kappa,
            d,
            d_in,
            rho,
            sigma0,
            gamma,
            c0,
            profiles,
        };
        p.validate()?;
        Ok(p)
    }

    /// Linear limit `κ = 0`, which the physical invariant `κ > 0` excludes.
    /// Closed-form operations accept it; [`RelaxParams::validate`] does not.
    pub fn linear_limit(d: f64, d_in: f64, rho: f64, sigma0: f64, profiles: ExpProfiles) -> Self {
        Self {
            kappa: 0.0,
            d,
            d_in,
            rho,
            sigma0,
            gamma: (2.0 * d_in / d).sqrt(),
            c0: sigma0 / (2.0 * std::f64::consts::PI * d_in),
            profiles,
        }
    }

    fn check_finite(&self) -> Result<(), RelaxError> {
        let all = [self.kappa, self.d, self.d_in, self.rho, self.sigma0, self.gamma, self.c0];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(RelaxError::InvalidParameter("parameters must be finite".into()));
        }
        if !(self.d > 0.0 && self.rho > 0.0 && self.sigma0 > 0.0 && self.d_in >= 0.0 && self.kappa >= 0.0) {
            return Err(RelaxError::InvalidParameter(
                "need D > 0, rho > 0, sigma0 > 0, D_in >= 0, kappa >= 0".into(),
            ));
        }
        self.profiles.validate()?;
        Ok(())
    }

    pub fn validate(&self) -> Result<(), RelaxError> {
        self.check_finite()?;
        if !(self.kappa > 0.0) {
            return Err(RelaxError::InvalidParameter("kappa must be positive".into()));
        }
        if !(self.gamma > 0.0 && self.c0 > 0.0) {
            return Err(RelaxError::InvalidParameter("gamma and C0 must be positive".into()));
        }
        let g2 = self.d * self.gamma * self.gamma;
        let sigma_packet = self.c0 * std::f64::consts::PI * g2;
        if (sigma_packet - self.sigma0).abs() > CONSISTENCY_TOL * self.sigma0 {
            return Err(RelaxError::InvalidParameter(format!(
                "sigma0 = {} disagrees with C0 pi D gamma^2 = {sigma_packet}",
                self.sigma0
            )));
        }
        if (0.5 * g2 - self.d_in).abs() > CONSISTENCY_TOL * self.d_in.max(f64::MIN_POSITIVE) {
            return Err(RelaxError::InvalidParameter(format!(
                "D_in = {} disagrees with D gamma^2 / 2 = {}",
                self.d_in,
                0.5 * g2
            )));
        }
        Ok(())
    }

    /// Same packet width `γ` and initial count `σ(0)` at another `D`.
    pub fn with_diffusion(&self, d: f64) -> Result<Self, RelaxError> {
        let d_in = 0.5 * d * self.gamma * self.gamma;
        Self::from_moments(self.kappa, d, d_in, self.rho, self.sigma0, self.profiles)
    }

    /// Large initial electron temperature: transient growth then decay.
    pub fn excess_ionization() -> Self {
        let profiles = ExpProfiles {
            a1: 1.0,
            tau_a: 1.0,
            d1: 2.0,
            tau_d: 1.0,
            b1: 0.2,
            b2: 0.4,
            tau_b: 1.0,
        };
        Self::from_moments(2.0, 0.01, 0.01, 0.5, 1.0, profiles).expect("preset is valid")
    }

    /// Low initial electron temperature: monotone decay.
    pub fn monotone_decay() -> Self {
        let mut p = Self::excess_ionization();
        p.profiles.a1 = 0.3;
        p.profiles.b1 = 1.0;
        p.profiles.b2 = 2.0;
        p
    }

    /// Slow ionization decay: a minimum followed by a maximum.
    pub fn two_extrema() -> Self {
        let mut p = Self::monotone_decay();
        p.profiles.a1 = 1.5;
        p.profiles.tau_a = 2.0;
        p.profiles.tau_b = 2.0;
        p.profiles.tau_d = 1.0;
        p.profiles.d1 = 2.5;
        p
    }

    pub fn kernel(&self) -> GaussianKernel {
        GaussianKernel { rho: self.rho }
    }

    pub fn model(&self) -> RelaxationModel {
        RelaxationModel::new(self.profiles, self.kernel())
    }

    pub fn initial_data(&self) -> GaussianInitialData {
        GaussianInitialData {
            c0: self.c0,
            gamma: self.gamma,
            d: self.d,
            center: [0.0, 0.0],
        }
    }

    pub fn initial_moments(&self) -> MomentState {
        MomentState {
            sigma: self.sigma0,
            center: DVector::zeros(2),
            alpha2: DMatrix::identity(2, 2) * self.d_in,
        }
    }

    fn rho2(&self) -> f64 {
        self.rho * self.rho
    }
}

/// `1 - 4 D_in/ϱ² - 8 D d1 τd / ϱ²`; positive means the recombination
/// bracket stays positive for all `t ≥ 0`.
pub fn validity_margin(params: &RelaxParams) -> f64 {
    let p = &params.profiles;
    1.0 - 4.0 * params.d_in / params.rho2() - 8.0 * params.d * p.d1 * p.tau_d / params.rho2()
}

fn check_closed_form(params: &RelaxParams) -> Result<(), RelaxError> {
    params.check_finite()?;
    let margin = validity_margin(params);
    if !(margin > 0.0) {
        return Err(RelaxError::ValidityViolation { margin });
    }
    Ok(())
}

fn check_time(t: f64) -> Result<(), RelaxError> {
    if !(t.is_finite() && t >= 0.0) {
        return Err(RelaxError::InvalidParameter(format!("time {t} must be finite and non-negative")));
    }
    Ok(())
}

/// Recombination bracket `1 - 4D_in/ϱ² - 8(D/ϱ²)∫₀ᵗ D̃a`.
fn bracket(params: &RelaxParams, t: f64) -> f64 {
    1.0 - 4.0 * params.d_in / params.rho2()
        - 8.0 * params.d / params.rho2() * params.profiles.diffusion_integral(t)
}

/// `F(t) = ϱ² ∫₀ᵗ e^{2∫ã} β(θ) [bracket](θ) dθ`, assembled from four
/// incomplete gamma terms with exponents `τa/τb`, `τa/τd` and
/// `τa(τb+τd)/(τbτd)`. With `A1 = 0` the same integrals are elementary.
pub fn sigma_f(t: f64, params: &RelaxParams) -> Result<f64, RelaxError> {
    check_closed_form(params)?;
    check_time(t)?;
    if t == 0.0 {
        return Ok(0.0);
    }
    let pr = &params.profiles;
    let q = 8.0 * params.d * pr.d1 * pr.tau_d;
    let p = params.rho2() - 4.0 * params.d_in - q;
    let db = pr.b1 - pr.b2;
    let omegas = [0.0, 1.0 / pr.tau_b, 1.0 / pr.tau_d, 1.0 / pr.tau_b + 1.0 / pr.tau_d];
    let weights = [p * pr.b2, p * db, q * pr.b2, q * db];
    let mut f = 0.0;
    if pr.a1 == 0.0 {
        for (w, om) in weights.iter().zip(omegas) {
            let integral = if om == 0.0 { t } else { -(-om * t).exp_m1() / om };
            f += w * integral;
        }
        return Ok(f);
    }
    let z1 = 2.0 * pr.a1 * pr.tau_a;
    let z0 = z1 * (-t / pr.tau_a).exp();
    for (w, om) in weights.iter().zip(omegas) {
        if *w == 0.0 {
            continue;
        }
        let alpha = om * pr.tau_a;
        let g = if alpha == 0.0 {
            gamma0_log_lower(z1.ln() - t / pr.tau_a, z1)?
        } else {
            inc_gamma(alpha, z0, z1)?
        };
        f += w * z1.powf(-alpha) * g;
    }
    Ok(pr.tau_a * z1.exp() * f)
}

const SMALL_Z: f64 = 1e-6;

/// `Γ[0, e^{ln_z0}, z1]` with the lower bound given by its logarithm, so
/// that large times, where `z0` underflows, keep the logarithmic growth.
fn gamma0_log_lower(ln_z0: f64, z1: f64) -> Result<f64, SpecialFnError> {
    let z0 = ln_z0.exp();
    if z0 >= SMALL_Z {
        return inc_gamma(0.0, z0, z1);
    }
    let c = z1.min(SMALL_Z);
    // ∫ z⁻¹e^{-z} = ln z + Σ_{k≥1} (-z)^k / (k k!) on [z0, c]
    let mut head = c.ln() - ln_z0;
    let (mut pc, mut p0, mut fact) = (1.0, 1.0, 1.0);
    for k in 1..6 {
        pc *= -c;
        p0 *= -z0;
        fact *= k as f64;
        head += (pc - p0) / (k as f64 * fact);
    }
    let tail = if c < z1 { inc_gamma(0.0, c, z1)? } else { 0.0 };
    Ok(head + tail)
}

/// `σ(t) = exp[A1τa(1 - e^{-t/τa})] [2κF(t)/ϱ² + 1/σ(0)²]^{-1/2}`.
pub fn sigma_closed(t: f64, params: &RelaxParams) -> Result<f64, RelaxError> {
    let f = sigma_f(t, params)?;
    let growth = params.profiles.ionization_integral(t).exp();
    Ok(growth / (2.0 * params.kappa * f / params.rho2() + 1.0 / (params.sigma0 * params.sigma0)).sqrt())
}

/// Bernoulli right-hand side `σ ã - κ σ³ β [bracket]`.
pub fn bernoulli_rhs(sigma: f64, t: f64, params: &RelaxParams) -> f64 {
    let pr = &params.profiles;
    sigma * pr.ionization_rate(t) - params.kappa * sigma.powi(3) * pr.recombination_amplitude(t) * bracket(params, t)
}

/// `I = A1 - κ σ(0)² B1 (1 - 4D_in/ϱ²)`, the initial slope of `σ` divided by `σ(0)`.
pub fn bifurcation_index(params: &RelaxParams) -> f64 {
    let pr = &params.profiles;
    pr.a1 - params.kappa * params.sigma0 * params.sigma0 * pr.b1 * (1.0 - 4.0 * params.d_in / params.rho2())
}

/// `α⁽²⁾(t) = [D_in + 2D d1τd(1 - e^{-t/τd})] I`.
pub fn alpha2_closed(t: f64, params: &RelaxParams) -> DMatrix<f64> {
    DMatrix::identity(2, 2) * (params.d_in + 2.0 * params.d * params.profiles.diffusion_integral(t))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RelaxVariant {
    ExcessIonization,
    MonotoneDecay,
    TwoExtrema,
}

impl std::fmt::Display for RelaxVariant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            RelaxVariant::ExcessIonization => "ExcessIonization",
            RelaxVariant::MonotoneDecay => "MonotoneDecay",
            RelaxVariant::TwoExtrema => "TwoExtrema",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RelaxClassification {
    pub variant: RelaxVariant,
    pub i_value: f64,
    pub extrema_times: Vec<f64>,
}

const FLATNESS: f64 = 1e-9;

/// Samples `σ` on `samples + 1` uniform nodes of `[0, horizon]` and counts
/// sign changes of the discrete derivative. Steps smaller than `1e-9` of the
/// largest sample count as flat and are skipped.
pub fn classify(params: &RelaxParams, horizon: f64, samples: usize) -> Result<RelaxClassification, RelaxError> {
    check_closed_form(params)?;
    if !(horizon.is_finite() && horizon > 0.0) || samples < 100 {
        return Err(RelaxError::InvalidParameter(
            "classification needs a positive horizon and at least 100 samples".into(),
        ));
    }
    let h = horizon / samples as f64;
    let times: Vec<f64> = (0..=samples).map(|i| i as f64 * h).collect();
    let sig = times
        .iter()
        .map(|&t| sigma_closed(t, params))
        .collect::<Result<Vec<_>, _>>()?;
    let scale = sig.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut extrema_times = Vec::new();
    let mut maxima = 0;
    let mut prev_sign = 0i8;
    for i in 0..samples {
        let diff = sig[i + 1] - sig[i];
        if diff.abs() <= FLATNESS * scale {
            continue;
        }
        let sign = if diff > 0.0 { 1 } else { -1 };
        if prev_sign != 0 && sign != prev_sign {
            extrema_times.push(times[i]);
            if prev_sign > 0 {
                maxima += 1;
            }
        }
        prev_sign = sign;
    }
    let i_value = bifurcation_index(params);
    let variant = match (extrema_times.len(), maxima) {
        (1, 1) if i_value > 0.0 => RelaxVariant::ExcessIonization,
        (0, _) if i_value < 0.0 => RelaxVariant::MonotoneDecay,
        (2, _) => RelaxVariant::TwoExtrema,
        (n, _) => return Err(RelaxError::Inconsistent { i_value, extrema: n }),
    };
    Ok(RelaxClassification {
        variant,
        i_value,
        extrema_times,
    })
}

impl MomentPath for RelaxParams {
    fn dim(&self) -> usize {
        2
    }

    fn moments_at(&self, t: f64) -> Result<MomentState, EeError> {
        let sigma = sigma_closed(t, self).map_err(|e| EeError::Domain(e.to_string()))?;
        Ok(MomentState {
            sigma,
            center: DVector::zeros(2),
            alpha2: alpha2_closed(t, self),
        })
    }
}
