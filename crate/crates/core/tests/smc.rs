use permabc::criterion::{best_match, within, Criterion};
use permabc::diagnostics::unique_particle_rate;
use permabc::models::{sample_prior, simulate, GaussianHierarchy, OverParameterized, Sir};
use permabc::smc::{
    compute_kernel_state, move_particle, run_smc, Particle, ScheduleKind, SmcConfig, SmcStatus,
};
use permabc::streams::{Purpose, StreamFactory};
use permabc::ObservedData;

fn gaussian_data(k: usize, seed: u64) -> (GaussianHierarchy, ObservedData<f64>) {
    let model = GaussianHierarchy::default();
    let mut rng = StreamFactory::new(seed).stream(Purpose::Synthetic, 0, 0);
    let theta = sample_prior::<f64, _>(&model, k, &mut rng).unwrap();
    let z = simulate(&model, &theta, &mut rng).unwrap();
    (model, ObservedData::with_unit_weights(z.into_compartments()).unwrap())
}

fn in_pool<R: Send>(threads: usize, f: impl FnOnce() -> R + Send) -> R {
    rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap().install(f)
}

#[test]
fn alive_particles_satisfy_their_criterion() {
    let (model, y) = gaussian_data(4, 1);
    let mut cfg = SmcConfig::new(300, 7, ScheduleKind::EpsilonDescent);
    cfg.max_iterations = 8;
    let out = run_smc(&model, &y, &cfg).unwrap();
    assert_eq!(out.status, SmcStatus::IterationLimit);
    assert_eq!(out.trace.len(), 9);
    for p in &out.particles {
        let best = best_match(&y, &p.z, Criterion::Permutation).unwrap();
        assert!((best.squared - p.squared).abs() <= 1e-9 * (1.0 + best.squared));
        assert!(within(p.squared, out.epsilon));
    }
    for w in out.trace.windows(2) {
        assert!(w[1].epsilon < w[0].epsilon);
        assert!(w[1].simulator_calls > w[0].simulator_calls);
        assert!(w[1].assignment_solves > w[0].assignment_solves);
    }
    // projection aligns slot k with observed k
    for (p, q) in out.particles.iter().zip(&out.projected) {
        for k in 0..4 {
            let m = p.matching.simulated_for(k).unwrap();
            assert_eq!(q.theta.locals[k], p.theta.locals[m]);
        }
    }
}

#[test]
fn simulator_calls_are_two_nk_per_iteration() {
    // full-support priors: no proposal is skipped
    let model = OverParameterized { n: 3, ..Default::default() };
    let mut rng = StreamFactory::new(2).stream(Purpose::Synthetic, 0, 0);
    let theta = sample_prior::<f64, _>(&model, 5, &mut rng).unwrap();
    let y = ObservedData::with_unit_weights(simulate(&model, &theta, &mut rng).unwrap().into_compartments()).unwrap();
    let mut cfg = SmcConfig::new(100, 3, ScheduleKind::EpsilonDescent);
    cfg.max_iterations = 4;
    let out = run_smc(&model, &y, &cfg).unwrap();
    assert_eq!(out.trace[0].simulator_calls, 100 * 5);
    for w in out.trace.windows(2) {
        assert_eq!(w[1].simulator_calls - w[0].simulator_calls, 2 * 100 * 5);
    }
}

#[test]
fn results_do_not_depend_on_thread_count() {
    let (model, y) = gaussian_data(5, 3);
    for kind in [
        ScheduleKind::EpsilonDescent,
        ScheduleKind::OverSampling { m0: 9 },
        ScheduleKind::UnderMatching { l0: 2 },
    ] {
        let mut cfg = SmcConfig::new(200, 11, kind);
        cfg.max_iterations = 6;
        let a = in_pool(1, || run_smc(&model, &y, &cfg).unwrap());
        let b = in_pool(4, || run_smc(&model, &y, &cfg).unwrap());
        assert_eq!(a.particles, b.particles);
        assert_eq!(a.trace.iter().map(|r| r.simulator_calls).collect::<Vec<_>>(),
                   b.trace.iter().map(|r| r.simulator_calls).collect::<Vec<_>>());
    }
}

#[test]
fn over_sampling_reaches_k_at_fixed_epsilon() {
    let (model, y) = gaussian_data(4, 4);
    let mut cfg = SmcConfig::new(300, 5, ScheduleKind::OverSampling { m0: 12 });
    cfg.record_snapshots = true;
    let out = run_smc(&model, &y, &cfg).unwrap();
    assert_eq!(out.status, SmcStatus::TargetReached);
    let ms: Vec<usize> = out.trace.iter().map(|r| r.m_or_l.unwrap()).collect();
    assert_eq!(ms[0], 12);
    assert_eq!(*ms.last().unwrap(), 4);
    assert!(ms.windows(2).all(|w| w[1] <= w[0]));
    assert!(out.trace.iter().all(|r| r.epsilon == out.epsilon));
    for p in &out.particles {
        assert_eq!(p.z.num_compartments(), 4);
        assert!(within(best_match(&y, &p.z, Criterion::Permutation).unwrap().squared, out.epsilon));
    }
    assert_eq!(out.snapshots.first().unwrap().m_or_l, Some(12));
}

#[test]
fn under_matching_reaches_full_matching() {
    let (model, y) = gaussian_data(6, 5);
    let cfg = SmcConfig::new(300, 6, ScheduleKind::UnderMatching { l0: 5 });
    let out = run_smc(&model, &y, &cfg).unwrap();
    assert_eq!(out.status, SmcStatus::TargetReached);
    let ls: Vec<usize> = out.trace.iter().map(|r| r.m_or_l.unwrap()).collect();
    assert_eq!(ls[0], 5);
    assert_eq!(*ls.last().unwrap(), 6);
    for p in &out.particles {
        assert_eq!(p.matching.len(), 6);
        assert!(within(p.squared, out.epsilon));
    }
}

#[test]
fn descent_stops_at_target() {
    let (model, y) = gaussian_data(3, 6);
    let mut cfg = SmcConfig::new(300, 8, ScheduleKind::EpsilonDescent);
    cfg.target_epsilon = Some(6.0);
    let out = run_smc(&model, &y, &cfg).unwrap();
    assert_eq!(out.status, SmcStatus::TargetReached);
    assert_eq!(out.epsilon, 6.0);
    let mut cfg = SmcConfig::new(300, 8, ScheduleKind::EpsilonDescent);
    cfg.budget = Some(10_000);
    let out = run_smc(&model, &y, &cfg).unwrap();
    assert_eq!(out.status, SmcStatus::BudgetExhausted);
    assert!(out.simulator_calls <= 10_000);
}

#[test]
fn invalid_configs_are_rejected() {
    let (model, y) = gaussian_data(3, 7);
    let mut cfg = SmcConfig::new(1, 1, ScheduleKind::UnderMatching { l0: 5 });
    cfg.alpha = 1.5;
    let err = run_smc(&model, &y, &cfg).unwrap_err().to_string();
    assert!(err.contains("N must be") && err.contains("alpha") && err.contains("L_0"), "{err}");
}

#[test]
fn null_move_on_a_deterministic_model_is_exact() {
    let model = Sir { horizon_days: 20, ..Default::default() };
    let f = StreamFactory::new(4);
    let mut rng = f.stream(Purpose::Test, 0, 0);
    let theta = sample_prior::<f64, _>(&model, 3, &mut rng).unwrap();
    let z = simulate(&model, &theta, &mut rng).unwrap();
    let y = ObservedData::with_unit_weights(z.compartments().to_vec()).unwrap();
    let best = best_match(&y, &z, Criterion::Permutation).unwrap();
    let p = Particle { theta, z, matching: best.matching, squared: best.squared, alive: true };
    let mut kernel = compute_kernel_state(std::slice::from_ref(&p), 3, 2, 3).unwrap();
    kernel.tau_global = vec![0.0];
    kernel.tau_local = vec![vec![0.0; 3]; 3];
    let out = move_particle(&model, &y, &p, 1e-6, &kernel, Criterion::Permutation, &mut rng).unwrap();
    assert_eq!(out.particle, p);
    assert!(out.global_accepted);
    assert_eq!(out.simulator_calls, 6);
}

#[test]
fn final_unique_rate_matches_trace() {
    let (model, y) = gaussian_data(3, 8);
    let mut cfg = SmcConfig::new(200, 9, ScheduleKind::EpsilonDescent);
    cfg.max_iterations = 5;
    let out = run_smc(&model, &y, &cfg).unwrap();
    let rate = unique_particle_rate(out.particles.iter().map(|p| &p.theta));
    assert_eq!(rate, out.trace.last().unwrap().unique_rate);
}
