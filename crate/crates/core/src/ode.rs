//! Classical fourth-order Runge–Kutta with step-halving convergence control,
//! uniform time grids, and small interpolation/quadrature helpers shared by
//! the moment and propagator modules.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OdeError {
    #[error("invalid time grid: {0}")]
    InvalidGrid(String),
    #[error("step halving did not converge after {refinements} refinements (relative change {change:e} at t = {t})")]
    NoConvergence { refinements: u32, change: f64, t: f64 },
    #[error("non-finite state at t = {t}")]
    NonFinite { t: f64 },
}

/// Convergence control: the whole grid is re-integrated with doubled substep
/// counts until two successive solutions differ by less than `rel_tol`
/// (relative, on the checked components) at every output point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepControl {
    pub rel_tol: f64,
    /// Largest substep used in the first pass.
    pub initial_step: f64,
    pub max_refinements: u32,
}

impl Default for StepControl {
    fn default() -> Self {
        Self {
            rel_tol: 1e-8,
            initial_step: 0.05,
            max_refinements: 14,
        }
    }
}

/// Uniform grid `t_i = i * step`, `i = 0..=intervals`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    pub step: f64,
    pub intervals: usize,
}

impl TimeGrid {
    pub fn new(horizon: f64, intervals: usize) -> Result<Self, OdeError> {
        if !(horizon.is_finite() && horizon > 0.0) || intervals == 0 {
            return Err(OdeError::InvalidGrid(format!(
                "need a positive horizon and at least one interval (horizon {horizon}, intervals {intervals})"
            )));
        }
        Ok(Self {
            step: horizon / intervals as f64,
            intervals,
        })
    }

    /// Grid covering `[0, horizon]` with spacing at most `max_step`.
    pub fn with_max_step(horizon: f64, max_step: f64) -> Result<Self, OdeError> {
        let n = (horizon / max_step).ceil().max(1.0) as usize;
        Self::new(horizon, n)
    }

    pub fn horizon(&self) -> f64 {
        self.step * self.intervals as f64
    }

    pub fn times(&self) -> Vec<f64> {
        (0..=self.intervals).map(|i| i as f64 * self.step).collect()
    }
}

/// Checks that `t_grid` starts at zero and is strictly increasing.
pub fn check_grid(t_grid: &[f64]) -> Result<(), OdeError> {
    if t_grid.is_empty() || t_grid[0] != 0.0 {
        return Err(OdeError::InvalidGrid("time grid must start at 0".into()));
    }
    if t_grid.windows(2).any(|w| !(w[1] > w[0]) || !w[1].is_finite()) {
        return Err(OdeError::InvalidGrid("time grid must be strictly increasing".into()));
    }
    Ok(())
}

fn rk4_pass<F, C, E>(
    rhs: &mut F,
    check: &mut C,
    y0: &[f64],
    t_grid: &[f64],
    max_step: f64,
) -> Result<Vec<Vec<f64>>, E>
where
    F: FnMut(f64, &[f64], &mut [f64]) -> Result<(), E>,
    C: FnMut(f64, &[f64]) -> Result<(), E>,
    E: From<OdeError>,
{
    let n = y0.len();
    let mut y = y0.to_vec();
    let mut out = Vec::with_capacity(t_grid.len());
    out.push(y.clone());
    let (mut k1, mut k2, mut k3, mut k4) = (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    let mut tmp = vec![0.0; n];
    for w in t_grid.windows(2) {
        let substeps = ((w[1] - w[0]) / max_step).ceil().max(1.0) as usize;
        let h = (w[1] - w[0]) / substeps as f64;
        for s in 0..substeps {
            let t = w[0] + s as f64 * h;
            rhs(t, &y, &mut k1)?;
            for i in 0..n {
                tmp[i] = y[i] + 0.5 * h * k1[i];
            }
            rhs(t + 0.5 * h, &tmp, &mut k2)?;
            for i in 0..n {
                tmp[i] = y[i] + 0.5 * h * k2[i];
            }
            rhs(t + 0.5 * h, &tmp, &mut k3)?;
            for i in 0..n {
                tmp[i] = y[i] + h * k3[i];
            }
            rhs(t + h, &tmp, &mut k4)?;
            for i in 0..n {
                y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
            let t_new = if s + 1 == substeps { w[1] } else { t + h };
            if y.iter().any(|v| !v.is_finite()) {
                return Err(OdeError::NonFinite { t: t_new }.into());
            }
            check(t_new, &y)?;
        }
        out.push(y.clone());
    }
    Ok(out)
}

/// Integrates `y' = rhs(t, y)` and returns the state at every point of
/// `t_grid`. `check` runs after every accepted substep and may abort the
/// integration; `checked` lists the components used for the step-halving
/// comparison.
pub fn integrate<F, C, E>(
    mut rhs: F,
    mut check: C,
    y0: &[f64],
    t_grid: &[f64],
    checked: &[usize],
    control: &StepControl,
) -> Result<Vec<Vec<f64>>, E>
where
    F: FnMut(f64, &[f64], &mut [f64]) -> Result<(), E>,
    C: FnMut(f64, &[f64]) -> Result<(), E>,
    E: From<OdeError>,
{
    check_grid(t_grid)?;
    let mut step = control.initial_step;
    let mut coarse = rk4_pass(&mut rhs, &mut check, y0, t_grid, step)?;
    let mut last_change = f64::INFINITY;
    let mut last_t = 0.0;
    for _ in 0..control.max_refinements {
        step *= 0.5;
        let fine = rk4_pass(&mut rhs, &mut check, y0, t_grid, step)?;
        let mut worst = 0.0f64;
        let mut worst_t = 0.0;
        for (k, (a, b)) in coarse.iter().zip(&fine).enumerate() {
            for &i in checked {
                let scale = a[i].abs().max(b[i].abs());
                let change = if scale == 0.0 { 0.0 } else { (a[i] - b[i]).abs() / scale };
                if change > worst {
                    worst = change;
                    worst_t = t_grid[k];
                }
            }
        }
        if worst < control.rel_tol {
            return Ok(fine);
        }
        last_change = worst;
        last_t = worst_t;
        coarse = fine;
    }
    Err(OdeError::NoConvergence {
        refinements: control.max_refinements,
        change: last_change,
        t: last_t,
    }
    .into())
}

/// Cumulative integral of uniformly sampled values: composite Simpson at even
/// nodes, with the last interval of odd nodes closed by a three-point rule.
pub fn cumulative_simpson(values: &[f64], step: f64) -> Vec<f64> {
    let n = values.len();
    let mut out = vec![0.0; n];
    if n < 2 {
        return out;
    }
    if n == 2 {
        out[1] = 0.5 * step * (values[0] + values[1]);
        return out;
    }
    for i in 1..n {
        if i % 2 == 0 {
            out[i] = out[i - 2] + step / 3.0 * (values[i - 2] + 4.0 * values[i - 1] + values[i]);
        } else if i + 1 < n {
            // quadratic through i-1, i, i+1, integrated over the first interval
            out[i] = out[i - 1] + step / 12.0 * (5.0 * values[i - 1] + 8.0 * values[i] - values[i + 1]);
        } else {
            out[i] = out[i - 1] + step / 12.0 * (-values[i - 2] + 8.0 * values[i - 1] + 5.0 * values[i]);
        }
    }
    out
}

/// Cubic Hermite interpolation on `[t0, t1]` from values and slopes.
pub fn hermite(t0: f64, t1: f64, y0: f64, y1: f64, d0: f64, d1: f64, t: f64) -> f64 {
    let h = t1 - t0;
    let s = (t - t0) / h;
    let s2 = s * s;
    let s3 = s2 * s;
    (2.0 * s3 - 3.0 * s2 + 1.0) * y0
        + (s3 - 2.0 * s2 + s) * h * d0
        + (-2.0 * s3 + 3.0 * s2) * y1
        + (s3 - s2) * h * d1
}

/// Four-point Lagrange interpolation on a uniform grid. Exact at nodes.
pub fn lagrange_uniform(values: &[f64], step: f64, t: f64) -> f64 {
    let n = values.len();
    if n == 1 {
        return values[0];
    }
    let x = t / step;
    let i = x.round();
    if (x - i).abs() < 1e-9 && i >= 0.0 && (i as usize) < n {
        return values[i as usize];
    }
    if n < 4 {
        let j = (x.floor().max(0.0) as usize).min(n - 2);
        let s = x - j as f64;
        return values[j] * (1.0 - s) + values[j + 1] * s;
    }
    let base = (x.floor() as isize - 1).clamp(0, n as isize - 4) as usize;
    let mut acc = 0.0;
    for a in 0..4 {
        let xa = (base + a) as f64;
        let mut w = 1.0;
        for b in 0..4 {
            if a != b {
                let xb = (base + b) as f64;
                w *= (x - xb) / (xa - xb);
            }
        }
        acc += w * values[base + a];
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_growth_converges() {
        let t: Vec<f64> = (0..=10).map(|i| i as f64 * 0.1).collect();
        let out: Vec<Vec<f64>> = integrate::<_, _, OdeError>(
            |_, y, dy| {
                dy[0] = y[0];
                Ok(())
            },
            |_, _| Ok(()),
            &[1.0],
            &t,
            &[0],
            &StepControl::default(),
        )
        .unwrap();
        assert!((out[10][0] - 1f64.exp()).abs() < 1e-9);
    }

    #[test]
    fn grid_must_start_at_zero() {
        let r: Result<Vec<Vec<f64>>, OdeError> = integrate(
            |_, _, _| Ok(()),
            |_, _| Ok(()),
            &[1.0],
            &[0.5, 1.0],
            &[0],
            &StepControl::default(),
        );
        assert!(matches!(r, Err(OdeError::InvalidGrid(_))));
    }

    #[test]
    fn simpson_is_exact_for_cubics() {
        let h = 0.1;
        let v: Vec<f64> = (0..=9).map(|i| (i as f64 * h).powi(3)).collect();
        let c = cumulative_simpson(&v, h);
        for (i, ci) in c.iter().enumerate().step_by(2) {
            let x = i as f64 * h;
            assert!((ci - x.powi(4) / 4.0).abs() < 1e-14);
        }
        let v: Vec<f64> = (0..=9).map(|i| (i as f64 * h).powi(2)).collect();
        let c = cumulative_simpson(&v, h);
        for (i, ci) in c.iter().enumerate() {
            let x = i as f64 * h;
            assert!((ci - x.powi(3) / 3.0).abs() < 1e-14, "node {i}");
        }
    }

    #[test]
    fn lagrange_reproduces_cubics() {
        let h = 0.25;
        let v: Vec<f64> = (0..8).map(|i| (i as f64 * h).powi(3) - 2.0 * i as f64 * h).collect();
        for &t in &[0.1, 0.6, 1.3, 1.7] {
            let exact = t * t * t - 2.0 * t;
            assert!((lagrange_uniform(&v, h, t) - exact).abs() < 1e-13);
        }
    }
}
