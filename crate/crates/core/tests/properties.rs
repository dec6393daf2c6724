use mtherm_core::fixtures::{self, random_density};
use mtherm_core::kinetics::{arrhenius_rates, generator_apply};
use mtherm_core::sampler::{compare_marginals, residence_estimate, ssa_ensemble, short_time_rate_estimate};
use mtherm_core::semigroup::{
    evolve_expm, evolve_grid, evolve_grid_expm, reachable, stationary_density, transition_kernel,
};
use mtherm_core::statespace::{l1_norm, validate_density};
use mtherm_core::thermo::{free_energy, gibbs_distribution};
use mtherm_core::Density;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn engines_agree(seed in any::<u64>(), n in 2usize..50, t_max in 0.5f64..10.0) {
        let l = fixtures::random_landscape(seed, n);
        let rs = arrhenius_rates(&l).unwrap();
        let p0 = random_density(&mut ChaCha8Rng::seed_from_u64(seed ^ 1), n);
        let grid: Vec<f64> = (0..=10).map(|i| t_max * i as f64 / 10.0).collect();
        let rk = evolve_grid(&rs, &p0, &grid).unwrap();
        let ex = evolve_grid_expm(&rs, &p0, &grid).unwrap();
        for (a, b) in rk.densities.iter().zip(&ex.densities) {
            prop_assert!(a.l1_distance(b) <= 1e-6);
        }
    }

    #[test]
    fn stationary_solution_is_in_the_kernel(seed in any::<u64>(), n in 1usize..50) {
        let rs = arrhenius_rates(&fixtures::random_landscape(seed, n)).unwrap();
        let st = stationary_density(&rs).unwrap();
        prop_assert!(st.unique);
        prop_assert!(l1_norm(&generator_apply(&rs, st.density.weights()).unwrap()) <= 1e-10);
    }

    #[test]
    fn free_energy_minimal_at_gibbs(seed in any::<u64>(), n in 2usize..30) {
        let l = fixtures::random_landscape(seed, n);
        let g = gibbs_distribution(&l);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..20 {
            let p = random_density(&mut rng, n);
            let f = free_energy(&p, &l).unwrap();
            prop_assert!(f >= g.f_pi - 1e-12 * g.f_pi.abs().max(1.0));
            if p.l1_distance(&g.pi) >= 0.1 {
                prop_assert!(f > g.f_pi);
            }
        }
    }
}

#[test]
fn unreachable_states_stay_empty() {
    // chain a0–a1 and b0–b1 disconnected; mass starting in block a never leaks
    let rs = arrhenius_rates(&fixtures::two_blocks()).unwrap();
    let p0 = validate_density(&[0.3, 0.7, 0.0, 0.0], 4).unwrap();
    let reach = reachable(&rs, &p0.support());
    for t in [0.1, 1.0, 10.0, 100.0] {
        let p = evolve_expm(&rs, &p0, t).unwrap();
        for (x, &r) in reach.iter().enumerate() {
            if !r {
                assert!(p.weights()[x] <= 1e-12);
            }
        }
    }
    let traj = evolve_grid(&rs, &p0, &[0.0, 1.0, 5.0]).unwrap();
    assert!(traj.densities.iter().all(|d| d.weights()[2] <= 1e-12 && d.weights()[3] <= 1e-12));
}

#[test]
fn short_time_kernel_bound() {
    for seed in 0..10 {
        let rs = arrhenius_rates(&fixtures::random_landscape(seed, 12)).unwrap();
        let w0 = rs.w0();
        for h in [1e-3, 1e-4] {
            let k = transition_kernel(&rs, h).unwrap();
            for x in 0..rs.len() {
                for y in 0..rs.len() {
                    if x != y {
                        assert!(k.get(x, y) <= w0 * h + 2.0 * w0 * w0 * h * h);
                    }
                }
            }
        }
    }
}

#[test]
fn sampler_law_on_random_instances() {
    for seed in 0..4 {
        let l = fixtures::random_landscape(300 + seed, 6);
        let rs = arrhenius_rates(&l).unwrap();
        let p0 = Density::uniform(6);
        let paths = ssa_ensemble(&rs, &p0, 40_000, 3.0, seed).unwrap();
        let checks = compare_marginals(&rs, &p0, &paths, &[0.5, 1.5, 3.0]).unwrap();
        // 18 components per instance; allow the 3σ envelope with a small margin
        for c in &checks {
            assert!(c.max_sigma <= 4.0, "seed {seed}: {c:?}");
        }
        for x in 0..6 {
            let est = residence_estimate(&paths, x);
            if est.completed > 1000 {
                assert!((est.mean - rs.residence()[x]).abs() <= 4.0 * est.std_error, "{est:?}");
            }
        }
    }
}

#[test]
fn sampling_independent_of_thread_count() {
    let rs = arrhenius_rates(&fixtures::random_landscape(8, 10)).unwrap();
    let p0 = Density::uniform(10);
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| {
                (
                    ssa_ensemble(&rs, &p0, 3000, 4.0, 5).unwrap(),
                    short_time_rate_estimate(&rs, 0, 1e-3, 20_000, 5).unwrap(),
                )
            })
    };
    assert_eq!(run(1), run(4));
}
