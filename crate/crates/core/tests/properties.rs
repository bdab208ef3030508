//! Property tests over random rates, states and controls.

use proptest::prelude::*;

use sit_control::integrator::{integrate, ControlSchedule, Tolerance};
use sit_control::model::{
    f_partials, female_growth, jacobian_full, phi_threshold, rhs_full, FullState, ModelKind,
};
use sit_control::planner::{plan_release, psi, ProblemSpec};
use sit_control::singular::integrate_closed_loop;
use sit_control::Params;

const CASES: u32 = 256;

fn params(nu_e: f64) -> Params {
    Params::reference(nu_e).unwrap()
}

fn nu_e() -> impl Strategy<Value = f64> {
    0.005f64..0.25
}

fn start(model: ModelKind, p: &Params) -> Vec<f64> {
    match model {
        ModelKind::Reduced => vec![p.f_bar(), 0.0],
        ModelKind::Full => FullState::equilibrium(p).to_array().to_vec(),
    }
}

fn model() -> impl Strategy<Value = ModelKind> {
    prop_oneof![Just(ModelKind::Reduced), Just(ModelKind::Full)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(CASES))]

    #[test]
    fn comparison_principle(
        nu in nu_e(),
        model in model(),
        base in prop::collection::vec(0.0f64..15000.0, 6),
        extra in prop::collection::vec(0.0f64..5000.0, 6),
    ) {
        let p = params(nu);
        let horizon = 40.0;
        let more: Vec<f64> = base.iter().zip(&extra).map(|(a, b)| a + b).collect();
        let tol = Tolerance::for_params(&p);
        let s0 = start(model, &p);
        let u_lo = ControlSchedule::piecewise_constant(&base, horizon).unwrap();
        let u_hi = ControlSchedule::piecewise_constant(&more, horizon).unwrap();
        let lo = integrate(model, &p, &s0, &u_lo, (0.0, horizon), tol).unwrap();
        let hi = integrate(model, &p, &s0, &u_hi, (0.0, horizon), tol).unwrap();
        for k in 0..=40 {
            let t = k as f64;
            prop_assert!(hi.females(t).unwrap() <= lo.females(t).unwrap() + 1e-6 * p.f_bar());
        }
    }

    #[test]
    fn invariant_region(
        nu in nu_e(),
        model in model(),
        frac in prop::collection::vec(0.0f64..1.0, 3),
        ms0 in 0.0f64..1e5,
        u in prop::collection::vec(0.0f64..20000.0, 5),
    ) {
        let p = params(nu);
        let horizon = 50.0;
        let eq = FullState::equilibrium(&p);
        let s0 = match model {
            ModelKind::Reduced => vec![frac[2] * eq.f, ms0],
            ModelKind::Full => vec![frac[0] * eq.e, frac[1] * eq.m, frac[2] * eq.f, ms0],
        };
        let upper = match model {
            ModelKind::Reduced => vec![eq.f, f64::INFINITY],
            ModelKind::Full => vec![eq.e, eq.m, eq.f, f64::INFINITY],
        };
        let sched = ControlSchedule::piecewise_constant(&u, horizon).unwrap();
        let ms_cap = ms0.max(20000.0 / p.delta_s);
        let tr = integrate(model, &p, &s0, &sched, (0.0, horizon), Tolerance::for_params(&p)).unwrap();
        let slack = 1e-6 * p.e_bar();
        for i in 0..tr.mesh().len() {
            let y = tr.mesh_state(i);
            for (c, v) in y.iter().enumerate() {
                prop_assert!(*v >= -slack, "component {c} = {v}");
                prop_assert!(*v <= upper[c] + slack, "component {c} = {v} above {}", upper[c]);
            }
            prop_assert!(*y.last().unwrap() <= ms_cap + slack);
        }
    }

    #[test]
    fn psi_monotone_in_tau1(nu in nu_e(), a in 0.0f64..150.0, d in 0.0f64..50.0) {
        let p = params(nu);
        let tol = Tolerance::for_params(&p);
        let early = psi(&p, a, 1000.0, tol).unwrap();
        let late = psi(&p, a + d, 1000.0, tol).unwrap();
        prop_assert!(late <= early + 1e-7 * p.f_bar(), "psi({a}) = {early}, psi({}) = {late}", a + d);
    }

    #[test]
    fn phi_brackets_sign(nu in nu_e(), x in 0.001f64..0.999, r in 0.0f64..3.0) {
        let p = params(nu);
        let f = x * p.f_bar();
        let phi = phi_threshold(f, &p);
        prop_assert!(phi > 0.0);
        let scale = p.delta_f * p.f_bar();
        prop_assert!(female_growth(f, phi, &p).abs() <= 1e-9 * scale);
        let g = female_growth(f, r * phi, &p);
        if r < 0.999 {
            prop_assert!(g > 0.0, "f(F, {r} phi) = {g}");
        } else if r > 1.001 {
            prop_assert!(g < 0.0, "f(F, {r} phi) = {g}");
        }
    }

    #[test]
    fn lambda_form_matches_direct(nu in nu_e(), x in 1e-4f64..2.0, ms in 0.0f64..2e5) {
        let p = params(nu);
        let f = x * p.f_bar();
        let direct = female_growth(f, ms, &p);
        let lam = f_partials(f, ms, &p).unwrap().f;
        prop_assert!((direct - lam).abs() <= 1e-10 * (direct.abs() + p.delta_f * f));
    }

    #[test]
    fn partials_match_finite_differences(nu in nu_e(), x in 0.01f64..1.5, ms in 0.0f64..1e5) {
        let p = params(nu);
        let f = x * p.f_bar();
        let d = f_partials(f, ms, &p).unwrap();
        let hf = 1e-4 * f;
        let hm = 1e-4 * (ms + p.f_bar());
        let fd_f = (female_growth(f + hf, ms, &p) - female_growth(f - hf, ms, &p)) / (2.0 * hf);
        let fd_m = (female_growth(f, ms + hm, &p) - female_growth(f, ms - hm, &p)) / (2.0 * hm);
        let fd_mm = (f_partials(f, ms + hm, &p).unwrap().df_dms - f_partials(f, ms - hm, &p).unwrap().df_dms) / (2.0 * hm);
        let fd_mf = (f_partials(f + hf, ms, &p).unwrap().df_dms - f_partials(f - hf, ms, &p).unwrap().df_dms) / (2.0 * hf);
        let close = |a: f64, b: f64, scale: f64| (a - b).abs() <= 1e-5 * (a.abs().max(b.abs()) + scale);
        prop_assert!(close(d.df_df, fd_f, 1e-3 * p.delta_f));
        prop_assert!(close(d.df_dms, fd_m, 1e-3 * d.df_dms.abs()));
        prop_assert!(close(d.d2f_dms2, fd_mm, 1e-3 * d.d2f_dms2.abs()));
        prop_assert!(close(d.d2f_dms_df, fd_mf, 1e-3 * d.d2f_dms_df.abs()));
    }

    #[test]
    fn equilibrium_residual(nu in nu_e()) {
        let p = params(nu);
        let scale = p.e_bar().max(p.f_bar());
        let r = rhs_full(FullState::equilibrium(&p), 0.0, &p);
        for v in [r.e, r.m, r.f, r.ms] {
            prop_assert!(v.abs() <= 1e-10 * scale);
        }
        prop_assert!(female_growth(p.f_bar(), 0.0, &p).abs() <= 1e-10 * scale);
    }

    #[test]
    fn kamke_mueller_signs(
        nu in nu_e(),
        frac in prop::collection::vec(0.0f64..1.0, 3),
        ms in 0.0f64..1e5,
    ) {
        // cooperative once the sterile axis is reversed
        let p = params(nu);
        let s = FullState::new(frac[0] * p.k, frac[1] * p.m_bar(), frac[2] * p.f_bar(), ms);
        let j = jacobian_full(s, &p);
        let sign = [1.0, 1.0, 1.0, -1.0];
        for r in 0..4 {
            for c in 0..4 {
                if r != c {
                    prop_assert!(sign[r] * sign[c] * j[(r, c)] >= 0.0, "J[{r}][{c}] = {}", j[(r, c)]);
                }
            }
        }
    }

    #[test]
    fn terminal_pinning(nu in nu_e(), horizon in 130.0f64..300.0, frac in 0.15f64..0.4) {
        let p = params(nu);
        let spec = ProblemSpec::new(horizon, 5000.0, frac * p.f_bar());
        if let Ok(plan) = plan_release(&p, &spec) {
            prop_assert!((plan.f_terminal - spec.epsilon).abs() <= 1e-5 * spec.epsilon,
                "F(T) = {} vs eps = {}", plan.f_terminal, spec.epsilon);
            // the replayed trajectory has its minimum at the horizon
            let min = plan.trajectory.females_at_mesh().into_iter().fold(f64::INFINITY, f64::min);
            prop_assert!(min >= plan.f_terminal - 1e-6 * spec.epsilon);
        }
    }

    #[test]
    fn closed_loop_unimodal(nu in nu_e(), tau1 in 0.5f64..150.0) {
        let p = params(nu);
        let run = integrate_closed_loop(&p, tau1, 1000.0, Tolerance::for_params(&p)).unwrap();
        prop_assert!(run.is_unimodal(&p, 1e-6));
        prop_assert!(run.tau2 > tau1);
        // no mesh point dips below the located minimum
        let fs = run.trajectory.females_at_mesh();
        let min = fs.iter().copied().fold(f64::INFINITY, f64::min);
        prop_assert!(min >= run.f_min - 1e-6 * p.f_bar());
        let at = run.trajectory.females(run.tau2).unwrap();
        prop_assert!((at - run.f_min).abs() <= 1e-9 * p.f_bar());
    }
}
