use apd_core::certificate::{feasibility_check, verify_bounds};
use apd_core::dual::PidGains;
use apd_core::envs::{make_gridworld, GridworldSpec};
use apd_core::lagrangian::ConstraintSpec;
use apd_core::schedule::LrSchedule;
use apd_core::solver::{apd_run, papd_run, DualVariant, SolverConfig};
use apd_core::testbed::{ConstrainedProgram, QuadSpec};

// anisotropic program with a coupled constraint; the multiplier is positive
fn skewed() -> QuadSpec {
    QuadSpec {
        q: vec![vec![2.0, 0.5], vec![0.5, 1.0]],
        b: vec![2.0, -1.0],
        p: vec![vec![1.0, 0.2], vec![0.2, 3.0]],
        c: vec![0.5, 0.0],
        d: 0.2,
        ..QuadSpec::default()
    }
}

#[test]
fn apd_reaches_kkt_on_skewed_program() {
    let prog = skewed().build().unwrap();
    let kkt = prog.kkt().unwrap();
    assert!(kkt.lambda > 0.0);
    for schedule in [
        LrSchedule::InvlinExact { constants: prog.constants() },
        LrSchedule::InvquaExact { constants: prog.constants() },
    ] {
        let cfg = SolverConfig::new(20_000, schedule, DualVariant::Ascent { zeta: 0.05 });
        let rec = apd_run(&prog, &cfg).unwrap();
        assert!((rec.final_lambda[0] - kkt.lambda).abs() < 1e-4);
        for (a, b) in rec.final_theta.iter().zip(&kkt.theta) {
            assert!((a - b).abs() < 1e-4);
        }
        let cert = verify_bounds(&rec, &prog, &prog.constants(), 0.05).unwrap();
        assert!(cert.passed, "{:?}", cert.min_slack);
        let feas = feasibility_check(&rec, &prog.constraint(), 0.2, 1e-2).unwrap();
        assert!(feas.passed);
    }
}

#[test]
fn papd_gridworld_is_reproducible() {
    let env = make_gridworld(GridworldSpec::default()).unwrap();
    let spec = ConstraintSpec::new(vec![10.0]);
    let mut cfg = SolverConfig::new(
        40,
        LrSchedule::InvlinPractical { h1: 0.001, h2: 3.0 },
        DualVariant::Pid(PidGains::default()),
    );
    cfg.sampling.horizon = 30;
    cfg.seed = 11;
    let a = papd_run(&env, &spec, &cfg).unwrap();
    let b = papd_run(&env, &spec, &cfg).unwrap();
    assert_eq!(a.rows, b.rows);
    assert_eq!(a.len(), 40);
    for row in &a.rows {
        assert!(row.lambda[0] >= 0.0);
        assert!(row.j_r.is_finite() && row.j_c[0].is_finite());
        assert!((row.eta - 0.001 / (row.lambda[0] + 3.0)).abs() < 1e-15);
    }
    cfg.seed = 12;
    assert_ne!(papd_run(&env, &spec, &cfg).unwrap().rows, a.rows);
}
