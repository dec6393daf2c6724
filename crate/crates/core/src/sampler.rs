//! Exact jump-process sampling (Gillespie direct method) and empirical
//! estimators of densities, residence times and short-time rates.
//!
//! Every path draws from its own ChaCha stream keyed by `(seed, path index)`,
//! so ensembles are reproducible regardless of thread count.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{check_len, Error, Result};
use crate::kinetics::RateSystem;
use crate::semigroup::evolve_expm;
use crate::statespace::{l1_distance, Density};

/// Trials per RNG stream in [`short_time_rate_estimate`].
const TRIAL_CHUNK: usize = 4096;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Path {
    /// `(time, state)` pairs; the first is `(0, x₀)`.
    pub jumps: Vec<(f64, usize)>,
    pub t_end: f64,
}

impl Path {
    pub fn start(&self) -> usize {
        self.jumps[0].1
    }

    /// State occupied at time `t` (last jump at or before `t`).
    pub fn state_at(&self, t: f64) -> usize {
        let k = self.jumps.partition_point(|&(s, _)| s <= t);
        self.jumps[k.max(1) - 1].1
    }
}

fn stream(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

fn pick_target<R: Rng>(rs: &RateSystem, x: usize, rng: &mut R) -> usize {
    let u = rng.random::<f64>() * rs.exit()[x];
    let mut acc = 0.0;
    let mut last = x;
    for y in 0..rs.len() {
        let r = rs.rate(x, y);
        if r > 0.0 {
            acc += r;
            last = y;
            if u < acc {
                return y;
            }
        }
    }
    last
}

fn simulate<R: Rng>(rs: &RateSystem, x0: usize, t_end: f64, rng: &mut R) -> Path {
    let mut jumps = vec![(0.0, x0)];
    let (mut t, mut x) = (0.0, x0);
    loop {
        let w = rs.exit()[x];
        if w == 0.0 {
            break;
        }
        let hold: f64 = rng.sample::<f64, _>(Exp1) / w;
        t += hold;
        if t > t_end {
            break;
        }
        x = pick_target(rs, x, rng);
        jumps.push((t, x));
    }
    Path { jumps, t_end }
}

fn check_horizon(t_end: f64) -> Result<()> {
    if !(t_end > 0.0) || !t_end.is_finite() {
        return Err(Error::invalid("t_end", format!("horizon must be finite and > 0, got {t_end}")));
    }
    Ok(())
}

/// One exact path from `x0` up to `t_end`; deterministic in `seed`.
pub fn ssa_path(rs: &RateSystem, x0: usize, t_end: f64, seed: u64) -> Result<Path> {
    check_horizon(t_end)?;
    if x0 >= rs.len() {
        return Err(Error::invalid("x0", format!("state {x0} out of range")));
    }
    Ok(simulate(rs, x0, t_end, &mut stream(seed, 0)))
}

/// `count` independent paths with starting states drawn from `p0`. Path `i`
/// uses stream `i` of `seed`.
pub fn ssa_ensemble(rs: &RateSystem, p0: &Density, count: usize, t_end: f64, seed: u64) -> Result<Vec<Path>> {
    check_len(rs.len(), p0.len())?;
    check_horizon(t_end)?;
    let cdf: Vec<f64> = p0
        .weights()
        .iter()
        .scan(0.0, |acc, w| {
            *acc += w;
            Some(*acc)
        })
        .collect();
    let support_end = p0.support().last().copied().unwrap_or(0);
    Ok((0..count)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream(seed, i as u64);
            let u = rng.random::<f64>() * cdf[cdf.len() - 1];
            let x0 = cdf.partition_point(|&c| c <= u).min(support_end);
            simulate(rs, x0, t_end, &mut rng)
        })
        .collect())
}

/// Fraction of paths occupying each state at time `t`.
pub fn empirical_marginal(paths: &[Path], n: usize, t: f64) -> Result<Density> {
    if paths.is_empty() {
        return Err(Error::invalid("paths", "empty path collection"));
    }
    if !(t >= 0.0) || paths.iter().any(|p| t > p.t_end) {
        return Err(Error::invalid("t", format!("time {t} outside the simulated horizon")));
    }
    let mut counts = vec![0usize; n];
    for p in paths {
        counts[p.state_at(t)] += 1;
    }
    let total = paths.len() as f64;
    Ok(Density::from_vec_unchecked(
        counts.into_iter().map(|c| c as f64 / total).collect(),
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MarginalCheck {
    pub t: f64,
    pub empirical: Vec<f64>,
    pub expected: Vec<f64>,
    pub l1: f64,
    /// max_x |p̂ − p| / σ_x with σ_x = √(p(1−p)/n)
    pub max_sigma: f64,
    pub within_3_sigma: bool,
}

/// Compares the ensemble marginal with the master-equation density at each time.
pub fn compare_marginals(
    rs: &RateSystem,
    p0: &Density,
    paths: &[Path],
    times: &[f64],
) -> Result<Vec<MarginalCheck>> {
    let n_paths = paths.len() as f64;
    times
        .iter()
        .map(|&t| {
            let emp = empirical_marginal(paths, rs.len(), t)?;
            let exact = evolve_expm(rs, p0, t)?;
            let mut max_sigma: f64 = 0.0;
            let mut within = true;
            for (&e, &p) in emp.weights().iter().zip(exact.weights()) {
                let sigma = (p * (1.0 - p) / n_paths).sqrt();
                if sigma > 0.0 {
                    max_sigma = max_sigma.max((e - p).abs() / sigma);
                } else if (e - p).abs() > 1.0 / n_paths {
                    within = false;
                }
            }
            Ok(MarginalCheck {
                t,
                l1: l1_distance(emp.weights(), exact.weights()),
                empirical: emp.into_inner(),
                expected: exact.into_inner(),
                max_sigma,
                within_3_sigma: within && max_sigma <= 3.0,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ResidenceEstimate {
    pub state: usize,
    /// Total time spent in the state divided by completed sojourns (the
    /// censored exponential maximum-likelihood estimate of τ).
    pub mean: f64,
    pub std_error: f64,
    pub completed: usize,
}

pub fn residence_estimate(paths: &[Path], state: usize) -> ResidenceEstimate {
    let (mut occupied, mut completed) = (0.0, 0usize);
    for p in paths {
        for (k, &(t, x)) in p.jumps.iter().enumerate() {
            if x != state {
                continue;
            }
            match p.jumps.get(k + 1) {
                Some(&(next, _)) => {
                    occupied += next - t;
                    completed += 1;
                }
                None => occupied += p.t_end - t,
            }
        }
    }
    let mean = if completed > 0 {
        occupied / completed as f64
    } else {
        f64::INFINITY
    };
    ResidenceEstimate {
        state,
        mean,
        std_error: mean / (completed as f64).sqrt(),
        completed,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RateEstimate {
    pub target: usize,
    pub estimate: f64,
    pub std_error: f64,
    pub exact: f64,
    /// max(3 standard errors, w₀² h)
    pub tolerance: f64,
    pub within_tolerance: bool,
    /// estimate ≤ w₀ + w₀² h + 3 standard errors
    pub within_bound: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ShortTimeReport {
    pub from: usize,
    pub h: f64,
    pub trials: usize,
    pub estimates: Vec<RateEstimate>,
}

pub const MIN_SHORT_TIME_TRIALS: usize = 10_000;

/// Estimates `W(x, y) ≈ P(x_h = y | x₀ = x)/h` from `trials` exact paths.
pub fn short_time_rate_estimate(
    rs: &RateSystem,
    x: usize,
    h: f64,
    trials: usize,
    seed: u64,
) -> Result<ShortTimeReport> {
    if x >= rs.len() {
        return Err(Error::invalid("x", format!("state {x} out of range")));
    }
    if !(h > 0.0) || (rs.w0() > 0.0 && h >= 1.0 / rs.w0()) {
        return Err(Error::invalid(
            "h",
            format!("need 0 < h < 1/w0 = {}, got {h}", 1.0 / rs.w0()),
        ));
    }
    if trials < MIN_SHORT_TIME_TRIALS {
        return Err(Error::invalid(
            "trials",
            format!("at least {MIN_SHORT_TIME_TRIALS} trials required"),
        ));
    }
    let n = rs.len();
    let chunks = trials.div_ceil(TRIAL_CHUNK);
    let counts = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = stream(seed, c as u64);
            let mut counts = vec![0usize; n];
            let len = TRIAL_CHUNK.min(trials - c * TRIAL_CHUNK);
            for _ in 0..len {
                let path = simulate(rs, x, h, &mut rng);
                counts[path.state_at(h)] += 1;
            }
            counts
        })
        .reduce(
            || vec![0usize; n],
            |mut a, b| {
                a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                a
            },
        );
    let w0 = rs.w0();
    let nt = trials as f64;
    let estimates = (0..n)
        .filter(|&y| y != x)
        .map(|y| {
            let p = counts[y] as f64 / nt;
            let estimate = p / h;
            let std_error = (p * (1.0 - p) / nt).sqrt() / h;
            let exact = rs.rate(x, y);
            let tolerance = (3.0 * std_error).max(w0 * w0 * h);
            RateEstimate {
                target: y,
                estimate,
                std_error,
                exact,
                tolerance,
                within_tolerance: (estimate - exact).abs() <= tolerance,
                within_bound: estimate <= w0 + w0 * w0 * h + 3.0 * std_error,
            }
        })
        .collect();
    Ok(ShortTimeReport {
        from: x,
        h,
        trials,
        estimates,
    })
}

/// Path CSV rows `path_id,jump_time,state_label` (with header).
pub fn paths_to_csv(paths: &[Path], labels: &[String]) -> String {
    let mut out = String::from("path_id,jump_time,state_label\n");
    for (i, p) in paths.iter().enumerate() {
        for &(t, x) in &p.jumps {
            out.push_str(&format!("{i},{t:.16e},{}\n", labels[x]));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::kinetics::arrhenius_rates;
    use nalgebra::DMatrix;
    use std::f64::consts::E;

    fn two() -> RateSystem {
        arrhenius_rates(&fixtures::two_state()).unwrap()
    }

    #[test]
    fn frozen_path_stays_put() {
        let rs = RateSystem::from_matrix(DMatrix::zeros(3, 3)).unwrap();
        let p = ssa_path(&rs, 2, 10.0, 1).unwrap();
        assert_eq!(p.jumps, vec![(0.0, 2)]);
        let paths = ssa_ensemble(&rs, &Density::point_mass(3, 1), 50, 5.0, 3).unwrap();
        let m = empirical_marginal(&paths, 3, 4.0).unwrap();
        assert_eq!(m.weights(), &[0.0, 1.0, 0.0]);
    }

    #[test]
    fn path_invariants_and_determinism() {
        let rs = arrhenius_rates(&fixtures::random_landscape(5, 8)).unwrap();
        let a = ssa_path(&rs, 0, 30.0, 99).unwrap();
        let b = ssa_path(&rs, 0, 30.0, 99).unwrap();
        assert_eq!(a, b);
        assert!(a.jumps.len() > 2);
        for w in a.jumps.windows(2) {
            assert!(w[1].0 > w[0].0);
            assert_ne!(w[1].1, w[0].1);
        }
        assert!(a.jumps.last().unwrap().0 <= a.t_end);
        let e1 = ssa_ensemble(&rs, &Density::uniform(8), 200, 5.0, 4).unwrap();
        let e2 = ssa_ensemble(&rs, &Density::uniform(8), 200, 5.0, 4).unwrap();
        assert_eq!(paths_to_csv(&e1, fixtures::random_landscape(5, 8).labels()),
                   paths_to_csv(&e2, fixtures::random_landscape(5, 8).labels()));
    }

    #[test]
    fn marginal_at_zero_is_start() {
        let paths = ssa_ensemble(&two(), &Density::point_mass(2, 0), 100, 1.0, 8).unwrap();
        assert_eq!(empirical_marginal(&paths, 2, 0.0).unwrap().weights(), &[1.0, 0.0]);
        assert!(empirical_marginal(&paths, 2, 1.5).is_err());
        assert!(empirical_marginal(&[], 2, 0.5).is_err());
    }

    #[test]
    fn holding_time_in_a() {
        let paths = ssa_ensemble(&two(), &Density::point_mass(2, 0), 20_000, 20.0, 17).unwrap();
        let est = residence_estimate(&paths, 0);
        assert!((est.mean - E).abs() <= 3.0 * est.std_error, "{est:?}");
    }

    #[test]
    fn short_time_split_samples_agree() {
        let rs = two();
        let a = short_time_rate_estimate(&rs, 0, 1e-3, 200_000, 1).unwrap();
        let b = short_time_rate_estimate(&rs, 0, 1e-3, 200_000, 2).unwrap();
        let (ea, eb) = (a.estimates[0], b.estimates[0]);
        let combined = (ea.std_error.powi(2) + eb.std_error.powi(2)).sqrt();
        assert!((ea.estimate - eb.estimate).abs() <= 3.0 * combined);
        assert!(ea.within_tolerance && ea.within_bound);
    }

    #[test]
    fn short_time_rejects_bad_input() {
        let rs = two();
        assert!(short_time_rate_estimate(&rs, 0, 2.0, 20_000, 1).is_err());
        assert!(short_time_rate_estimate(&rs, 0, 1e-3, 100, 1).is_err());
        let frozen = RateSystem::from_matrix(DMatrix::zeros(2, 2)).unwrap();
        let r = short_time_rate_estimate(&frozen, 1, 1e-3, 10_000, 1).unwrap();
        assert!(r.estimates.iter().all(|e| e.estimate == 0.0));
    }
}
