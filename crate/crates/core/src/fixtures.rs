//! Reference landscapes and random instance generators used by tests,
//! benchmarks and demos.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;

use crate::statespace::{Density, Landscape};

/// Two states, `E_A = 0`, `E_B = ln 2`, one barrier of height 1, all scales 1.
pub fn two_state() -> Landscape {
    Landscape::new(
        vec!["A".into(), "B".into()],
        vec![0.0, std::f64::consts::LN_2],
        vec![(0, 1, 1.0)],
        1.0,
        1.0,
        1.0,
    )
    .expect("valid fixture")
}

/// Complete graph on `n` states with equal energies and equal barriers.
pub fn uniform(n: usize, energy: f64, barrier: f64) -> Landscape {
    let labels = (0..n).map(|i| format!("s{i}")).collect();
    let mut barriers = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            barriers.push((i, j, barrier));
        }
    }
    Landscape::new(labels, vec![energy; n], barriers, 1.0, 1.0, 1.0).expect("valid fixture")
}

/// Two disconnected two-state blocks `{a0, a1}` and `{b0, b1}`.
pub fn two_blocks() -> Landscape {
    Landscape::new(
        vec!["a0".into(), "a1".into(), "b0".into(), "b1".into()],
        vec![0.0, 0.5, 0.2, 0.9],
        vec![(0, 1, 1.2), (2, 3, 1.5)],
        1.0,
        1.0,
        1.0,
    )
    .expect("valid fixture")
}

/// Random connected landscape on `n` states: a random spanning tree plus
/// extra channels with probability 0.2. Energies lie in `[0, 2]`, barriers
/// sit `[0, 2]` above the higher endpoint, `E_B ∈ [0.5, 2]`, `k_B ∈ [0.5, 2]`.
pub fn random_landscape(seed: u64, n: usize) -> Landscape {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let energies: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..2.0)).collect();
    let mut barriers = Vec::new();
    let mut linked = vec![vec![false; n]; n];
    let mut add = |i: usize, j: usize, rng: &mut ChaCha8Rng, barriers: &mut Vec<_>| {
        if !linked[i][j] {
            linked[i][j] = true;
            linked[j][i] = true;
            let top = energies[i].max(energies[j]);
            barriers.push((i, j, top + rng.random_range(0.0..2.0)));
        }
    };
    for i in 1..n {
        let j = rng.random_range(0..i);
        add(i, j, &mut rng, &mut barriers);
    }
    for i in 0..n {
        for j in (i + 1)..n {
            if rng.random_bool(0.2) {
                add(i, j, &mut rng, &mut barriers);
            }
        }
    }
    let labels = (0..n).map(|i| format!("s{i}")).collect();
    let e_b = rng.random_range(0.5..2.0);
    let k_b = rng.random_range(0.5..2.0);
    Landscape::new(labels, energies, barriers, 1.0, e_b, k_b).expect("valid random landscape")
}

/// Uniform draw from the probability simplex via normalized exponential spacings.
pub fn random_density<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Density {
    let raw: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(Exp1)).collect();
    let sum: f64 = raw.iter().sum();
    Density::from_vec_unchecked(raw.into_iter().map(|x| x / sum).collect())
}
