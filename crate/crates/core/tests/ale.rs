mod common;

use std::sync::Arc;

use common::{fig1a, rel, rk4_scalar, D_LADDER};
use nalgebra::{DMatrix, DVector};
use vapor_kinetics::ale::{
    ale_residual, build_ale_example, build_ale_general, evolve_gaussian, green_state, semiclassical_u, solve_riccati,
    AleCoeffs, AleError, AlePotential, AleSample, PotentialForm, ResidualGrid, RiccatiControl, SemiclassicalSolution,
};
use vapor_kinetics::coeffs::{CoefficientModel, ScalarTaylor, TaylorData};
use vapor_kinetics::ee::{grid_moments, integrate_ee, EeError, EeParams, GaussianInitialData, MomentPath, MomentState};
use vapor_kinetics::ode::{StepControl, TimeGrid};
use vapor_kinetics::refpde::{l2_error, run_linear};
use vapor_kinetics::relax::{sigma_closed, RelaxParams};

fn riccati(ale: &AleCoeffs, horizon: f64, intervals: usize) -> Vec<f64> {
    solve_riccati(ale, &TimeGrid::new(horizon, intervals).unwrap(), &RiccatiControl::default()).unwrap().dcal
}

#[test]
fn general_construction_matches_specialized() {
    for p in [fig1a(), RelaxParams::monotone_decay(), RelaxParams::two_extrema()] {
        let example = build_ale_example(&p).unwrap();
        let general = build_ale_general(Arc::new(p), Arc::new(p.model()), p.d, p.kappa).unwrap();
        for i in 0..=50 {
            let t = 0.1 * i as f64;
            let a = example.sample(t).unwrap();
            let b = general.sample(t).unwrap();
            assert!((a.l - b.l).abs() <= 1e-12 * a.l.abs().max(1.0), "t={t}: {} vs {}", a.l, b.l);
            assert!((&a.l_xx - &b.l_xx).amax() <= 1e-12 * a.l_xx.amax());
            assert_eq!(b.l_x, DVector::zeros(2));
            assert_eq!(a.center, b.center);
            assert_eq!(example.diffusivity(t), general.diffusivity(t));
        }
    }
}

#[test]
fn general_construction_on_integrated_moments() {
    let p = fig1a();
    let model = p.model();
    let params = EeParams { d: p.d, kappa: p.kappa, model: &model };
    let times: Vec<f64> = (0..=200).map(|i| i as f64 * 0.01).collect();
    let traj = integrate_ee(&p.initial_moments(), &times, &params, &StepControl::default()).unwrap();
    let from_ee = build_ale_general(Arc::new(traj), Arc::new(model), p.d, p.kappa).unwrap();
    let example = build_ale_example(&p).unwrap();
    for t in [0.0, 0.37, 1.0, 1.99] {
        let a = example.sample(t).unwrap();
        let b = from_ee.sample(t).unwrap();
        assert!(rel(b.l, a.l) < 1e-6, "t={t}");
        assert!(rel(b.l_xx[(0, 0)], a.l_xx[(0, 0)]) < 1e-6);
    }
}

/// Quadratic ionization `a(x) = a0 + g·x + ½ xᵀ Q x` with no recombination.
struct Quadratic {
    a0: f64,
    g: [f64; 2],
    q: [f64; 4],
}

impl CoefficientModel for Quadratic {
    fn dim(&self) -> usize {
        2
    }
    fn ionization(&self, x: &DVector<f64>, _t: f64) -> ScalarTaylor {
        let q = DMatrix::from_row_slice(2, 2, &self.q);
        let g = DVector::from_row_slice(&self.g);
        ScalarTaylor {
            value: self.a0 + g.dot(x) + 0.5 * (x.transpose() * &q * x)[(0, 0)],
            grad: g + &q * x,
            hess: q,
        }
    }
    fn kernel(&self, _x: &DVector<f64>, _c: &DVector<f64>, _t: f64) -> TaylorData {
        TaylorData::zeros(2)
    }
    fn diffusion_factor(&self, _t: f64) -> f64 {
        1.0
    }
}

/// A fixed moment state.
struct Frozen(MomentState);

impl MomentPath for Frozen {
    fn dim(&self) -> usize {
        self.0.dim()
    }
    fn moments_at(&self, _t: f64) -> Result<MomentState, EeError> {
        Ok(self.0.clone())
    }
}

#[test]
fn linear_limit_without_kernel() {
    let model = Quadratic { a0: 0.4, g: [0.3, -0.1], q: [-0.5, 0.1, 0.1, -0.2] };
    let x = DVector::from_vec(vec![0.2, -0.3]);
    let path = Frozen(MomentState::isotropic(2.0, x.clone(), 0.01).unwrap());
    let ale = build_ale_general(Arc::new(path), Arc::new(model), 0.01, 5.0).unwrap();
    let reference = Quadratic { a0: 0.4, g: [0.3, -0.1], q: [-0.5, 0.1, 0.1, -0.2] }.ionization(&x, 0.0);
    for t in [0.0, 1.0, 3.0] {
        let s = ale.sample(t).unwrap();
        assert!((s.l - reference.value).abs() < 1e-15);
        assert!((&s.l_x - &reference.grad).amax() < 1e-15);
        assert!((&s.l_xx - &reference.hess).amax() < 1e-15);
    }
    let flat = Quadratic { a0: 0.7, g: [0.0, 0.0], q: [0.0; 4] };
    let path = Frozen(MomentState::isotropic(1.0, DVector::zeros(2), 0.01).unwrap());
    let ale = build_ale_general(Arc::new(path), Arc::new(flat), 0.01, 1.0).unwrap();
    let l0 = ale.sample(0.0).unwrap().l;
    assert_eq!(l0, 0.7);
    assert_eq!(ale.sample(4.0).unwrap().l, l0);
}

#[test]
fn example_coefficients() {
    let p = fig1a();
    let ale = build_ale_example(&p).unwrap();
    let s = ale.sample(0.0).unwrap();
    assert!((s.l_xx[(0, 0)] - 3.2).abs() < 1e-14);
    assert_eq!(s.l_xx[(0, 1)], 0.0);
    for t in [0.0, 0.5, 3.0] {
        assert_eq!(ale.sample(t).unwrap().l_x, DVector::zeros(2));
    }
    let lin = RelaxParams::linear_limit(p.d, p.d_in, p.rho, p.sigma0, p.profiles);
    let ale = build_ale_example(&lin).unwrap();
    for t in [0.0, 0.5, 3.0] {
        let s = ale.sample(t).unwrap();
        assert_eq!(s.l, p.profiles.ionization_rate(t));
        assert_eq!(s.l_xx, DMatrix::zeros(2, 2));
    }
    let bad = p.with_diffusion(0.04).unwrap();
    assert!(matches!(build_ale_example(&bad), Err(AleError::ValidityViolation { .. })));
}

#[test]
fn riccati_free_limit_and_start() {
    let p = fig1a();
    let lin = RelaxParams::linear_limit(p.d, p.d_in, p.rho, p.sigma0, p.profiles);
    let dcal = riccati(&build_ale_example(&lin).unwrap(), 1.0, 100);
    assert_eq!(dcal[0], 0.0);
    assert!((dcal[100] - 0.025285).abs() < 1e-6);
    assert!(rel(dcal[100], 0.04 * (1.0 - (-1.0f64).exp())) < 1e-10);
}

#[test]
fn riccati_matches_refined_oracle() {
    let p = fig1a();
    let dcal = riccati(&build_ale_example(&p).unwrap(), 1.0, 100);
    let ell = |t: f64| {
        let s = sigma_closed(t, &p).unwrap();
        2.0 * p.kappa * s * s * p.profiles.recombination_amplitude(t) / (p.rho * p.rho)
    };
    let oracle = rk4_scalar(|t, y| ell(t) * y * y + 2.0 * p.d * p.profiles.diffusion_factor(t), 0.0, 1.0, 2000);
    assert!(rel(dcal[100], oracle) < 1e-9, "{} vs {oracle}", dcal[100]);
}

#[test]
fn riccati_monotone_and_order_d() {
    let mut excess = Vec::new();
    for &d in &D_LADDER {
        let p = fig1a().with_diffusion(d).unwrap();
        let dcal = riccati(&build_ale_example(&p).unwrap(), 5.0, 250);
        assert!(dcal.iter().all(|&v| v >= 0.0));
        assert!(dcal.windows(2).all(|w| w[1] >= w[0]));
        let ratio = dcal.iter().fold(0.0f64, |m, v| m.max(v / d));
        // as D → 0, 𝒟/D → 2∫D̃
        let limit = 2.0 * p.profiles.diffusion_integral(5.0);
        assert!(ratio >= limit);
        excess.push(ratio - limit);
    }
    for w in excess.windows(2) {
        assert!(w[0] / w[1] >= 1.5, "{excess:?}");
    }
}

#[test]
fn riccati_blowup_is_detected() {
    let ale = AleCoeffs::new(
        2,
        0.5,
        |_| {
            Ok(AleSample {
                l: 0.0,
                l_x: DVector::zeros(2),
                l_xx: DMatrix::identity(2, 2) * 50.0,
                center: DVector::zeros(2),
            })
        },
        |_| 1.0,
    )
    .unwrap();
    let res = solve_riccati(&ale, &TimeGrid::new(2.0, 20).unwrap(), &RiccatiControl::default());
    assert!(matches!(res, Err(AleError::BlowupDetected { .. })), "{res:?}");
}

#[test]
fn green_state_start_values() {
    let p = fig1a();
    let ale = build_ale_example(&p).unwrap();
    let g = green_state(&ale, &TimeGrid::new(1.0, 100).unwrap(), &RiccatiControl::default()).unwrap();
    let g0 = g.at(0.0).unwrap();
    assert_eq!(g0.a, 1.0);
    assert_eq!(g0.s, 0.0);
    assert_eq!(g0.dcal, 0.0);
    assert!(matches!(g.h(0.0), Err(AleError::SingularH { .. })));
    assert!(g.h(1.0).unwrap() > 0.0);
    assert!(g.at(1.5).is_err());
    assert!(g.a.windows(2).all(|w| w[1] >= w[0]));
}

#[test]
fn action_tracks_relative_count_to_order_d() {
    let mut devs = Vec::new();
    for &d in &D_LADDER {
        let p = fig1a().with_diffusion(d).unwrap();
        let sol = SemiclassicalSolution::relaxation(&p, 1.0, 1e-3).unwrap();
        let s = sol.green.at(1.0).unwrap().s;
        let ratio = sigma_closed(1.0, &p).unwrap() / p.sigma0;
        devs.push(((s / d).exp() - ratio).abs());
    }
    for w in devs.windows(2) {
        let r = w[0] / w[1];
        assert!((1.5..=2.5).contains(&r), "{devs:?}");
    }
}

#[test]
fn packet_starts_at_initial_data() {
    let p = fig1a();
    let sol = SemiclassicalSolution::relaxation(&p, 1.0, 1e-3).unwrap();
    let pk = sol.packet(0.0).unwrap();
    let init = p.initial_data();
    assert!(rel(pk.amplitude, init.c0) < 1e-14);
    assert!(rel(pk.variance, init.variance()) < 1e-14);
    for x in [[0.0, 0.0], [0.05, -0.1], [0.2, 0.1]] {
        assert!(rel(pk.value(&x), init.value(&x)) < 1e-12);
    }
    assert!(rel(semiclassical_u(&[0.0, 0.0], 0.0, &sol).unwrap(), p.c0) < 1e-14);
}

#[test]
fn packet_variance_monotone_and_tail_small() {
    let p = fig1a();
    let sol = SemiclassicalSolution::relaxation(&p, 2.0, 1e-3).unwrap();
    let mut prev = 0.0;
    for i in 0..=200 {
        let pk = sol.packet(i as f64 * 0.01).unwrap();
        assert!(pk.variance >= prev);
        prev = pk.variance;
        let sd = pk.variance.sqrt();
        let far = pk.value(&[10.5 * sd, 0.0]);
        assert!(far < 1e-15 * pk.amplitude);
    }
}

#[test]
fn packet_moments_match_moment_system() {
    let mut alpha_gap = Vec::new();
    for &d in &D_LADDER {
        let p = fig1a().with_diffusion(d).unwrap();
        let sol = SemiclassicalSolution::relaxation(&p, 1.0, 1e-3).unwrap();
        let field = sol.sample(1.0, 256, 256, 3.0, 3.0).unwrap();
        let m = grid_moments(&field).unwrap();
        let model = p.model();
        let params = EeParams { d: p.d, kappa: p.kappa, model: &model };
        let traj = integrate_ee(&p.initial_moments(), &[0.0, 0.5, 1.0], &params, &StepControl::default()).unwrap();
        let ee = &traj.states[2];
        assert!(rel(m.sigma, ee.sigma) < 0.02, "D={d}: {} vs {}", m.sigma, ee.sigma);
        assert!(rel(m.alpha2[(0, 0)], m.alpha2[(1, 1)]) < 1e-10);
        alpha_gap.push(rel(m.alpha2[(0, 0)], ee.alpha2[(0, 0)]));
    }
    // the second moments agree to leading order only
    for w in alpha_gap.windows(2) {
        assert!(w[0] / w[1] >= 1.5, "{alpha_gap:?}");
    }
}

fn heat_kernel_case() -> (AleCoeffs, impl Fn(&[f64], f64) -> Result<f64, AleError> + Sync) {
    let d = 1e-4;
    let ale = AleCoeffs::new(
        2,
        d,
        |_| {
            Ok(AleSample {
                l: 0.0,
                l_x: DVector::zeros(2),
                l_xx: DMatrix::zeros(2, 2),
                center: DVector::zeros(2),
            })
        },
        |_| 1.0,
    )
    .unwrap();
    let v0 = 0.01;
    let v = move |x: &[f64], t: f64| {
        let var = v0 + 2.0 * d * t;
        Ok(v0 / var * (-(x[0] * x[0] + x[1] * x[1]) / (2.0 * var)).exp())
    };
    (ale, v)
}

#[test]
fn heat_kernel_satisfies_equation() {
    let (ale, v) = heat_kernel_case();
    let sd = (0.01f64 + 2e-4).sqrt();
    let r = ale_residual(&v, &ale, 1.0, &ResidualGrid::around(sd, 64, 6.0), sd).unwrap();
    assert!(r < 1e-6, "{r:e}");
    let coarse = ResidualGrid::around(sd, 8, 6.0);
    assert!(matches!(ale_residual(&v, &ale, 1.0, &coarse, sd), Err(AleError::ResolutionError { .. })));
}

#[test]
fn packet_satisfies_equation_with_second_order_error() {
    let p = fig1a();
    let ale = build_ale_example(&p).unwrap();
    let sol = SemiclassicalSolution::relaxation(&p, 1.0, 1e-3).unwrap();
    let sd = sol.packet(0.5).unwrap().variance.sqrt();
    let v = |x: &[f64], t: f64| sol.value(x, t);
    let r64 = ale_residual(v, &ale, 0.5, &ResidualGrid::around(sd, 64, 6.0), sd).unwrap();
    let r32 = ale_residual(v, &ale, 0.5, &ResidualGrid::around(sd, 32, 6.0), sd).unwrap();
    assert!(r64 < 1e-4, "{r64:e}");
    let ratio = r32 / r64;
    assert!((3.0..=5.0).contains(&ratio), "{r32:e} / {r64:e}");
}

fn linear_setup(p: &RelaxParams, form: PotentialForm) -> AlePotential {
    let path: Arc<dyn MomentPath> = Arc::new(*p);
    let model: Arc<dyn CoefficientModel> = Arc::new(p.model());
    AlePotential::new(form, path, model, p.d, p.kappa).unwrap()
}

#[test]
fn packet_agrees_with_grid_solution_of_the_equation() {
    let p = fig1a();
    let phi = p.initial_data().sample(256, 256, 4.0, 4.0).unwrap();
    let pot = linear_setup(&p, PotentialForm::Quadratic);
    let res = run_linear(&pot, 2e-3, 500, 500, &phi).unwrap();
    assert!(res.boundary_ratio < 1e-6, "{:e}", res.boundary_ratio);
    let sol = SemiclassicalSolution::relaxation(&p, 1.0, 1e-3).unwrap();
    let packet = sol.sample(1.0, 256, 256, 4.0, 4.0).unwrap();
    let e = l2_error(res.final_field(), &packet).unwrap();
    assert!(e < 1e-4, "{e:e}");
}

#[test]
fn operator_forms_differ_at_higher_order() {
    let mut errs = Vec::new();
    for &d in &D_LADDER {
        let p = fig1a().with_diffusion(d).unwrap();
        let phi = p.initial_data().sample(256, 256, 4.0, 4.0).unwrap();
        let quad = run_linear(&linear_setup(&p, PotentialForm::Quadratic), 2e-3, 500, 500, &phi).unwrap();
        let kern = run_linear(&linear_setup(&p, PotentialForm::Kernel), 2e-3, 500, 500, &phi).unwrap();
        errs.push(l2_error(kern.final_field(), quad.final_field()).unwrap());
    }
    let order = (errs[0] / errs[2]).ln() / (D_LADDER[0] / D_LADDER[2]).ln();
    assert!(order >= 1.5, "{errs:?} order {order}");
    assert!(errs.windows(2).all(|w| w[1] < w[0]));
}

#[test]
fn rejects_unsupported_propagators() {
    // drifting centroid
    let ale = AleCoeffs::new(
        2,
        0.01,
        |t| {
            Ok(AleSample {
                l: 0.0,
                l_x: DVector::zeros(2),
                l_xx: DMatrix::zeros(2, 2),
                center: DVector::from_vec(vec![t, 0.0]),
            })
        },
        |_| 1.0,
    )
    .unwrap();
    let grid = TimeGrid::new(1.0, 10).unwrap();
    assert!(matches!(green_state(&ale, &grid, &RiccatiControl::default()), Err(AleError::Unsupported(_))));
    // packet centred elsewhere than the propagator
    let p = fig1a();
    let sol = SemiclassicalSolution::relaxation(&p, 1.0, 1e-2).unwrap();
    let off = GaussianInitialData { center: [0.5, 0.0], ..p.initial_data() };
    assert!(evolve_gaussian(&off, &sol.green, 0.5).is_err());
    assert!(AleCoeffs::new(2, 0.0, |_| unreachable!(), |_| 1.0).is_err());
}
