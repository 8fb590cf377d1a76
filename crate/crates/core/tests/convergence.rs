use mirror_msa::mirror::{bregman_integrated, MirrorMap};
use mirror_msa::problem::ControlSet;
use mirror_msa::problems::{make_lq, make_quartic};
use mirror_msa::reference::{lq_reference, quartic_recursion, ConstantsLedger, RiccatiSolution};
use mirror_msa::sampling::{smooth_random_control, NormalSampler};
use mirror_msa::solver::{
    admissibility_modulus_check, check_descent_certificate, check_dissipation, constant_control, fit_geometric_factor,
    fit_loglog_slope, run, stationarity_residual, SolverConfig, Termination,
};
use mirror_msa::trajectory::{bound_check, integrate_adjoint, integrate_state, TimeGrid};
use nalgebra::DVector;

fn benchmark_lq() -> mirror_msa::ProblemSpec {
    make_lq(1.0, 1.0, 1.0, 0.5, 1.0).unwrap()
}

#[test]
fn lq_converges_to_riccati_optimum() {
    let grid = TimeGrid::new(1.0, 500).unwrap();
    let sol = RiccatiSolution::new(1.0, 1.0, 1.0, 1.0, 1.0).unwrap();
    let reference = lq_reference(&sol, 0.5, &grid).unwrap();
    let config = SolverConfig::new(grid, 30.0, 1.0, 200).unwrap();
    let report = run(&benchmark_lq(), &MirrorMap::Quadratic, &config, &constant_control(grid, &[4.0])).unwrap();
    let errors = report.cost_errors(reference.cost);
    assert!(errors[200] <= 1e-6 * errors[0], "{} vs {}", errors[200], errors[0]);
    let factor = fit_geometric_factor(&errors, 20..120).unwrap();
    assert!(factor < 1.0 - 1.0 / 30.0, "factor {factor}");
    let gap = report.final_control.sub(&reference.control).unwrap().sup_norm();
    assert!(gap < 5e-3, "control gap {gap}");
}

#[test]
fn optimum_is_a_fixed_point() {
    let grid = TimeGrid::new(1.0, 2000).unwrap();
    let sol = RiccatiSolution::new(1.0, 1.0, 1.0, 1.0, 1.0).unwrap();
    let reference = lq_reference(&sol, 0.5, &grid).unwrap();
    let lq = benchmark_lq();
    let x = integrate_state(&lq, &reference.control).unwrap();
    let p = integrate_adjoint(&lq, &reference.control, &x).unwrap();
    let r = stationarity_residual(&lq, &MirrorMap::Quadratic, 1.0, 30.0, &reference.control, &x, &p).unwrap();
    assert!(r <= 1e-6, "residual {r}");

    let mut config = SolverConfig::new(grid, 30.0, 1.0, 50).unwrap();
    config.stop_residual = 1e-7;
    let report = run(&lq, &MirrorMap::Quadratic, &config, &reference.control).unwrap();
    assert_eq!(report.termination, Termination::ResidualMet);
    assert!(report.records.len() <= 2);
    let delta = (report.records[0].cost - reference.cost).abs();
    assert!(delta <= 1e-6, "cost delta {delta}");
}

#[test]
fn dissipation_above_smoothness_constant() {
    let grid = TimeGrid::new(1.0, 500).unwrap();
    let lq = benchmark_lq();
    let ledger = ConstantsLedger::for_problem(&lq, &MirrorMap::Quadratic, 1.0).unwrap();
    let lambda = 500.0;
    assert!(lambda >= ledger.l);
    let config = SolverConfig::new(grid, lambda, 1.0, 300).unwrap();
    let report = run(&lq, &MirrorMap::Quadratic, &config, &constant_control(grid, &[4.0])).unwrap();
    assert!(check_dissipation(&report.records, lambda, ledger.l) >= -1e-8);
    assert!(check_descent_certificate(&report.records, lambda) >= -1e-8);

    // Partial sums of the Bregman steps are controlled by the total decrease.
    let first = report.records.first().unwrap();
    let last = report.final_record();
    let partial: f64 = report.records[..report.records.len() - 1].iter().map(|r| r.bregman_step).sum();
    assert!(partial <= (first.cost - last.cost) / (lambda - ledger.l) + 1e-12);
    assert!(last.bregman_step <= first.bregman_step);
}

#[test]
fn monotone_descent_at_lambda_30() {
    for tau in [0.5, 1.0] {
        let grid = TimeGrid::new(1.0, 500).unwrap();
        let config = SolverConfig::new(grid, 30.0, tau, 200).unwrap();
        let report = run(&benchmark_lq(), &MirrorMap::Quadratic, &config, &constant_control(grid, &[4.0])).unwrap();
        assert!(check_dissipation(&report.records, 30.0, 30.0) >= 0.0);
        assert!(check_descent_certificate(&report.records, 30.0) >= -1e-8);
    }
}

#[test]
fn admissibility_on_every_lq_iteration() {
    let grid = TimeGrid::new(1.0, 500).unwrap();
    let mut config = SolverConfig::new(grid, 30.0, 1.0, 100).unwrap();
    config.record_trajectories = true;
    let report = run(&benchmark_lq(), &MirrorMap::Quadratic, &config, &constant_control(grid, &[4.0])).unwrap();
    for snap in &report.snapshots {
        let slack = admissibility_modulus_check(&snap.next_control, &snap.eta, 30.0, 1.0).unwrap();
        assert!(slack >= -1e-10, "iteration {}: {slack}", snap.iter);
    }
}

#[test]
fn admissibility_with_box_and_quartic_map() {
    let grid = TimeGrid::new(1.0, 200).unwrap();
    let mut lq = benchmark_lq();
    lq.control_set = ControlSet::boxed(DVector::from_element(1, -1.5), DVector::from_element(1, 1.5)).unwrap();
    let map = MirrorMap::quartic(0.5).unwrap();
    let mut config = SolverConfig::new(grid, 30.0, 1.0, 40).unwrap();
    config.record_trajectories = true;
    let report = run(&lq, &map, &config, &constant_control(grid, &[1.5])).unwrap();
    for snap in &report.snapshots {
        assert!(snap.next_control.values().iter().all(|v| lq.control_set.contains(v, 0.0)));
        let slack = admissibility_modulus_check(&snap.next_control, &snap.eta, 30.0, map.strong_convexity()).unwrap();
        assert!(slack >= -1e-10, "iteration {}: {slack}", snap.iter);
    }
    assert!(check_dissipation(&report.records, 30.0, 30.0) >= -1e-12);
}

#[test]
fn quartic_sublinear_and_geometric() {
    let grid = TimeGrid::new(1.0, 20).unwrap();
    let quartic = make_quartic(1.0).unwrap();
    let u0 = constant_control(grid, &[2.0]);

    let config = SolverConfig::new(grid, 10.0, 0.0, 2000).unwrap();
    let report = run(&quartic, &MirrorMap::Quadratic, &config, &u0).unwrap();
    let costs = report.costs();
    // 𝒟_h(0|u⁰) = ½∫2² = 2, so the bound is λ·2/n.
    assert!(costs.iter().enumerate().skip(1).all(|(n, c)| *c <= 20.0 / n as f64));
    let slope = fit_loglog_slope(&costs, 500..2001).unwrap();
    assert!((slope + 2.0).abs() <= 0.2, "slope {slope}");

    let config = SolverConfig::new(grid, 10.0, 0.5, 300).unwrap();
    let report = run(&quartic, &MirrorMap::Quadratic, &config, &u0).unwrap();
    let factor = fit_geometric_factor(&report.costs(), 100..301).unwrap();
    assert!((factor - 0.9025).abs() <= 0.01, "factor {factor}");
}

#[test]
fn quartic_nodes_follow_recursion() {
    let grid = TimeGrid::new(1.0, 100).unwrap();
    let quartic = make_quartic(1.0).unwrap();
    for tau in [0.0, 0.5] {
        let mut config = SolverConfig::new(grid, 10.0, tau, 100).unwrap();
        config.record_trajectories = true;
        let report = run(&quartic, &MirrorMap::Quadratic, &config, &constant_control(grid, &[2.0])).unwrap();
        let alphas = quartic_recursion(2.0, 1.0, 10.0, tau, 100).unwrap();
        let worst = report
            .snapshots
            .iter()
            .flat_map(|s| {
                let alpha = alphas[s.iter];
                s.control.values().iter().map(move |v| (v[0] - alpha).abs())
            })
            .fold(0.0, f64::max);
        assert!(worst <= 1e-10, "tau {tau}: {worst}");
    }
}

#[test]
fn zero_initial_state_stays_at_zero() {
    let lq = make_lq(1.0, 1.0, 1.0, 0.0, 1.0).unwrap();
    let grid = TimeGrid::new(1.0, 100).unwrap();
    let config = SolverConfig::new(grid, 30.0, 1.0, 10).unwrap();
    let report = run(&lq, &MirrorMap::Quadratic, &config, &constant_control(grid, &[0.0])).unwrap();
    assert_eq!(report.termination, Termination::ResidualMet);
    assert_eq!(report.final_state.sup_norm(), 0.0);
    assert_eq!(report.final_adjoint.sup_norm(), 0.0);
}

#[test]
fn states_respect_a_priori_bound() {
    // b = x + u with U = [−1, 1] satisfies the growth condition with M = 1, so
    // from x₀ = 0 every state is bounded by M_X = e.
    let mut lq = make_lq(1.0, 1.0, 1.0, 0.0, 1.0).unwrap();
    lq.control_set = ControlSet::boxed(DVector::from_element(1, -1.0), DVector::from_element(1, 1.0)).unwrap();
    let m_x = ConstantsLedger::for_problem(&lq, &MirrorMap::Quadratic, 0.0).unwrap().m_x;
    assert!((m_x - std::f64::consts::E).abs() < 1e-14);
    let grid = TimeGrid::new(1.0, 200).unwrap();
    let mut sampler = NormalSampler::new(4);
    for _ in 0..50 {
        let u = smooth_random_control(&grid, 1, 2.0, &mut sampler).map(|v| lq.control_set.project(v));
        let x = integrate_state(&lq, &u).unwrap();
        assert!(bound_check(&x, m_x).unwrap());
    }
}

#[test]
fn bregman_partial_sums_with_quartic_map() {
    let grid = TimeGrid::new(1.0, 100).unwrap();
    let lq = benchmark_lq();
    let map = MirrorMap::quartic(1.0).unwrap();
    let config = SolverConfig::new(grid, 30.0, 1.0, 60).unwrap();
    let report = run(&lq, &map, &config, &constant_control(grid, &[2.0])).unwrap();
    assert!(check_descent_certificate(&report.records, 30.0) >= -1e-8);
    let first = &report.records[0];
    let u1 = {
        let one = SolverConfig::new(grid, 30.0, 1.0, 1).unwrap();
        run(&lq, &map, &one, &constant_control(grid, &[2.0])).unwrap().final_control
    };
    let d = bregman_integrated(&map, &u1, &constant_control(grid, &[2.0])).unwrap();
    assert!((d - first.bregman_step).abs() < 1e-15);
}
