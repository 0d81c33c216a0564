//! End-to-end checks of one iteration step at desk scale.

use elastoflow::exact::rat;
use elastoflow::geometry::builtin_family;
use elastoflow::grid::GridSpec;
use elastoflow::iteration::{step, StepOptions};
use elastoflow::samples::{single_mode_state, trivial_state};
use elastoflow::schedule::{LevelParams, ParameterSchedule};
use elastoflow::verifier::residual_system;

fn desk_schedule(nt_dt: f64) -> ParameterSchedule {
    let level = LevelParams {
        block: elastoflow::blocks::BlockParams {
            lambda: 2,
            sigma: rat(1, 2),
            r: rat(3, 4),
            mu: 1.5,
            n_lambda: 9,
        },
        delta: 0.4,
        ell: 4.5 * nt_dt,
    };
    ParameterSchedule::desk(rat(1, 2), 0.5, vec![level]).unwrap()
}

#[test]
fn trivial_state_is_a_fixed_point() {
    let grid = GridSpec::new(32, 33, 1.0).unwrap();
    let opts = StepOptions::default();
    let state = trivial_state(grid, 0.5, &opts).unwrap();
    assert_eq!(state.total_stress_l1().unwrap(), 0.0);

    let sched = desk_schedule(grid.dt());
    let fam = builtin_family().unwrap();
    let profiles = elastoflow::blocks::make_profiles(8).unwrap();
    let (state1, report) = step(&state, &sched, 0, &fam, &profiles, &opts).unwrap();

    // unchanged fields, zero stresses
    assert!(state1.v.sup_over_time(|s| s.max_coeff()) < 1e-13);
    for i in 0..3 {
        let dyn_part = state1.f[i].sup_over_time(|s| s.mean_zero().max_coeff());
        assert!(dyn_part < 1e-13, "F^{i} gained dynamic content {dyn_part}");
    }
    assert!(state1.total_stress_l1().unwrap() < 1e-13);
    assert!(report.checks.iter().all(|c| c.pass), "{:?}", report.checks.iter().filter(|c| !c.pass).collect::<Vec<_>>());
}

#[test]
fn single_mode_step_exact_identities() {
    let grid = GridSpec::new(32, 33, 1.0).unwrap();
    let opts = StepOptions::default();
    let theta = 0.5;
    let state = single_mode_state(grid, 0.25, 0.2, (0.42, 0.58), theta, &opts).unwrap();

    // the initial state itself satisfies the system to rounding
    let r0 = residual_system(&state, theta, 4).unwrap();
    assert!(r0.worst_momentum <= 1e-8, "init momentum residual {}", r0.worst_momentum);
    assert!(r0.worst_deformation <= 1e-8, "init deformation residual {}", r0.worst_deformation);
    let before = state.total_stress_l1().unwrap();
    assert!(before > 1e-3, "stresses too small to be interesting: {before}");

    let sched = desk_schedule(grid.dt());
    let fam = builtin_family().unwrap();
    let profiles = elastoflow::blocks::make_profiles(8).unwrap();
    let (state1, report) = step(&state, &sched, 0, &fam, &profiles, &opts).unwrap();

    // every in-step exact-identity check must pass
    for c in &report.checks {
        assert!(c.pass, "in-step check failed: {} = {:.3e} (tol {:.1e})", c.name, c.value, c.tolerance);
    }

    // cancellation residuals are rounding-level
    assert!(report.get("cancellation_skew").unwrap().value <= 1e-9);
    assert!(report.get("cancellation_sym").unwrap().value <= 1e-9);
    assert!(report.get("double_curl_potential_identity").unwrap().value <= 1e-10);

    // the new state satisfies its system to rounding under the same stencil
    state1.validate().unwrap();
    let r1 = residual_system(&state1, theta, 4).unwrap();
    assert!(r1.worst_momentum <= 1e-6, "momentum residual {}", r1.worst_momentum);
    assert!(r1.worst_deformation <= 1e-6, "deformation residual {}", r1.worst_deformation);

    // support bookkeeping: mollification widens by ℓ, the temporal cutoff by
    // at most another ℓ, and the FD stencil by 2Δt
    let growth = report.get("support_growth").unwrap().value;
    let lvl_ell = 4.5 * grid.dt();
    assert!(growth <= 2.0 * lvl_ell + 2.0 * grid.dt() + 1e-12, "support growth {growth}");
}
