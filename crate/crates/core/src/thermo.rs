//! Thermodynamic functionals of densities and trajectory audits.
//!
//! Mean energy `E(p) = Σ E_x p(x)`, Boltzmann entropy
//! `S(p) = −k_B Σ p ln p` and free energy `F = E − θ S` with `θ = E_B/k_B`.
//! Along a trajectory the audit checks that `F` never increases, which is the
//! same statement as nonnegative entropy production `δ_iS = dS − dE/θ`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{check_len, Error, Result};
use crate::fixtures::random_density;
use crate::kinetics::RateSystem;
use crate::semigroup::Trajectory;
use crate::statespace::{Density, Landscape};

/// Relative tolerance of `δ_iS = −dF/θ` on every balance row.
pub const BALANCE_IDENTITY_TOL: f64 = 1e-12;
/// Energy tolerance of the inverse-temperature solver.
pub const BETA_ENERGY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ThermoParams {
    pub theta: f64,
    #[serde(rename = "E_B")]
    pub e_b: f64,
    #[serde(rename = "k_B")]
    pub k_b: f64,
}

impl ThermoParams {
    pub fn of(landscape: &Landscape) -> Self {
        ThermoParams {
            theta: landscape.theta(),
            e_b: landscape.e_b(),
            k_b: landscape.k_b(),
        }
    }

    pub fn beta(&self) -> f64 {
        1.0 / self.theta
    }
}

pub fn mean_energy(p: &Density, landscape: &Landscape) -> Result<f64> {
    check_len(landscape.len(), p.len())?;
    Ok(p.weights().iter().zip(landscape.energies()).map(|(w, e)| w * e).sum())
}

fn entropy_density(z: f64, k_b: f64) -> f64 {
    if z == 0.0 {
        0.0
    } else {
        -k_b * z * z.ln()
    }
}

/// `S(p) = Σ −k_B p ln p` with `0 ln 0 = 0`.
pub fn boltzmann_entropy(p: &Density, k_b: f64) -> f64 {
    p.weights().iter().map(|&z| entropy_density(z, k_b)).sum()
}

pub fn free_energy(p: &Density, landscape: &Landscape) -> Result<f64> {
    Ok(mean_energy(p, landscape)? - landscape.theta() * boltzmann_entropy(p, landscape.k_b()))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GibbsReport {
    pub pi: Density,
    #[serde(rename = "Z")]
    pub z: f64,
    #[serde(rename = "F_pi")]
    pub f_pi: f64,
    #[serde(rename = "E_pi")]
    pub e_pi: f64,
    #[serde(rename = "S_pi")]
    pub s_pi: f64,
    pub params: ThermoParams,
}

/// `π(x) = exp(−E_x/E_B)/Z`, evaluated with the lowest energy shifted out.
pub fn gibbs_distribution(landscape: &Landscape) -> GibbsReport {
    let e_b = landscape.e_b();
    let e_min = landscape.energies().iter().copied().fold(f64::INFINITY, f64::min);
    let boltz: Vec<f64> = landscape
        .energies()
        .iter()
        .map(|e| (-(e - e_min) / e_b).exp())
        .collect();
    let shifted_z: f64 = boltz.iter().sum();
    let pi = Density::from_vec_unchecked(boltz.iter().map(|b| b / shifted_z).collect());
    let ln_z = shifted_z.ln() - e_min / e_b;
    let e_pi = mean_energy(&pi, landscape).expect("same length");
    let s_pi = boltzmann_entropy(&pi, landscape.k_b());
    GibbsReport {
        pi,
        z: ln_z.exp(),
        f_pi: -e_b * ln_z,
        e_pi,
        s_pi,
        params: ThermoParams::of(landscape),
    }
}

/// Mean energy of `π_β(x) ∝ exp(−β E_x)`.
fn gibbs_mean_at(energies: &[f64], beta: f64) -> f64 {
    let shift = energies
        .iter()
        .map(|e| -beta * e)
        .fold(f64::NEG_INFINITY, f64::max);
    let (mut num, mut den) = (0.0, 0.0);
    for e in energies {
        let w = (-beta * e - shift).exp();
        num += w * e;
        den += w;
    }
    num / den
}

fn gibbs_at(energies: &[f64], beta: f64) -> Density {
    let shift = energies
        .iter()
        .map(|e| -beta * e)
        .fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = energies.iter().map(|e| (-beta * e - shift).exp()).collect();
    let s: f64 = w.iter().sum();
    Density::from_vec_unchecked(w.into_iter().map(|x| x / s).collect())
}

/// Inverse temperature `β′` (per unit energy) whose Gibbs distribution has
/// mean energy `target`. Bisection with bracket expansion; the Gibbs mean is
/// strictly decreasing in `β′`.
pub fn beta_for_energy(landscape: &Landscape, target: f64) -> Result<f64> {
    let e = landscape.energies();
    let lo = e.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = e.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if lo == hi {
        return Err(Error::invalid(
            "landscape",
            "degenerate landscape: all energies are equal",
        ));
    }
    if !(target > lo && target < hi) {
        return Err(Error::OutOfRange { value: target, lo, hi });
    }
    let scale = 1.0 / (hi - lo);
    let (mut b_lo, mut b_hi) = (-scale, scale);
    // mean(b_lo) must exceed target, mean(b_hi) must fall below it
    while gibbs_mean_at(e, b_lo) <= target {
        b_hi = b_lo;
        b_lo *= 2.0;
        if !b_lo.is_finite() {
            return Err(Error::OutOfRange { value: target, lo, hi });
        }
    }
    while gibbs_mean_at(e, b_hi) >= target {
        b_lo = b_hi;
        b_hi *= 2.0;
        if !b_hi.is_finite() {
            return Err(Error::OutOfRange { value: target, lo, hi });
        }
    }
    // bisect to full precision; the energy tolerance is the guaranteed floor
    let mut best = (f64::INFINITY, 0.5 * (b_lo + b_hi));
    for _ in 0..2000 {
        let mid = 0.5 * (b_lo + b_hi);
        let m = gibbs_mean_at(e, mid);
        if (m - target).abs() < best.0 {
            best = ((m - target).abs(), mid);
        }
        if m == target || mid == b_lo || mid == b_hi {
            break;
        }
        if m > target {
            b_lo = mid;
        } else {
            b_hi = mid;
        }
    }
    if best.0 > BETA_ENERGY_TOL * target.abs().max(1.0) {
        log::warn!("β′ solve reached energy residual {:e}", best.0);
    }
    Ok(best.1)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BalanceRow {
    pub t_lo: f64,
    pub t_hi: f64,
    #[serde(rename = "dE")]
    pub d_e: f64,
    #[serde(rename = "dS")]
    pub d_s: f64,
    #[serde(rename = "dF")]
    pub d_f: f64,
    /// Heat increment δQ = dE in the isothermal setting.
    #[serde(rename = "deltaQ")]
    pub delta_q: f64,
    /// Entropy exchanged with the surroundings, δQ/θ.
    #[serde(rename = "delta_eS")]
    pub delta_e_s: f64,
    /// Entropy produced inside the system, dS − δ_eS.
    #[serde(rename = "delta_iS")]
    pub delta_i_s: f64,
}

impl BalanceRow {
    fn from_increments(t_lo: f64, t_hi: f64, d_e: f64, d_s: f64, theta: f64) -> Self {
        let delta_e_s = d_e / theta;
        BalanceRow {
            t_lo,
            t_hi,
            d_e,
            d_s,
            d_f: d_e - theta * d_s,
            delta_q: d_e,
            delta_e_s,
            delta_i_s: d_s - delta_e_s,
        }
    }

    /// Relative defect of `δ_iS = −dF/θ`, scaled by the magnitude of the
    /// terms that enter it.
    pub fn identity_defect(&self, theta: f64) -> f64 {
        let scale = self
            .d_s
            .abs()
            .max(self.delta_e_s.abs())
            .max(self.delta_i_s.abs())
            .max(f64::MIN_POSITIVE);
        (self.delta_i_s + self.d_f / theta).abs() / scale
    }
}

/// Per-interval increments of E, S, F and the entropy balance.
pub fn entropy_balance(traj: &Trajectory, landscape: &Landscape) -> Result<Vec<BalanceRow>> {
    if traj.len() < 2 {
        return Err(Error::invalid("trajectory", "at least 2 points required"));
    }
    let theta = landscape.theta();
    let k_b = landscape.k_b();
    let energies = traj
        .densities
        .iter()
        .map(|p| mean_energy(p, landscape))
        .collect::<Result<Vec<_>>>()?;
    let rows = (1..traj.len())
        .map(|i| {
            let (p0, p1) = (&traj.densities[i - 1], &traj.densities[i]);
            let d_e = energies[i] - energies[i - 1];
            // entropy increment summed termwise to limit cancellation
            let d_s: f64 = p0
                .weights()
                .iter()
                .zip(p1.weights())
                .map(|(&a, &b)| entropy_density(b, k_b) - entropy_density(a, k_b))
                .sum();
            let row = BalanceRow::from_increments(traj.times[i - 1], traj.times[i], d_e, d_s, theta);
            debug_assert!(row.identity_defect(theta) <= BALANCE_IDENTITY_TOL);
            row
        })
        .collect();
    Ok(rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Violation {
    pub interval: usize,
    #[serde(rename = "dF")]
    pub d_f: f64,
    pub tol: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuditReport {
    pub verdict: bool,
    pub first_violation: Option<Violation>,
    pub rows: Vec<BalanceRow>,
}

impl AuditReport {
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "schema_version": crate::SCHEMA_VERSION,
            "verdict": if self.verdict { "PASS" } else { "FAIL" },
            "first_violation": self.first_violation,
            "rows": self.rows,
        })
    }
}

/// Free-energy tolerance `1e-8 · max(1, |F|)` for an interval.
pub fn free_energy_tol(f_scale: f64) -> f64 {
    1e-8 * f_scale.abs().max(1.0)
}

/// PASS iff no interval increases F beyond [`free_energy_tol`] (equivalently
/// `δ_iS ≥ −tol/θ`).
pub fn permissibility_audit(traj: &Trajectory, landscape: &Landscape) -> Result<AuditReport> {
    let rows = entropy_balance(traj, landscape)?;
    let theta = landscape.theta();
    let mut first_violation = None;
    for (i, row) in rows.iter().enumerate() {
        let f_lo = free_energy(&traj.densities[i], landscape)?;
        let f_hi = free_energy(&traj.densities[i + 1], landscape)?;
        let tol = free_energy_tol(f_lo.abs().max(f_hi.abs()));
        if row.d_f > tol || row.delta_i_s < -tol / theta {
            first_violation = Some(Violation {
                interval: i,
                d_f: row.d_f,
                tol,
            });
            break;
        }
    }
    Ok(AuditReport {
        verdict: first_violation.is_none(),
        first_violation,
        rows,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ResidenceReport {
    /// Gibbs-averaged residence time; `None` encodes +∞.
    pub tau: Option<f64>,
    /// ν·τ, equal to 1 exactly when ν = 1/τ holds.
    pub nu_tau: Option<f64>,
    /// τ₀ = 1/w₀
    pub tau0: Option<f64>,
    pub metastable: Option<bool>,
}

/// `τ = Σ τ(x) π(x)`, compared with `τ₀ = 1/w₀`. The ratio `ν·τ` is reported,
/// never enforced: under Arrhenius rates it does not depend on `ν`.
pub fn gibbs_residence_report(rs: &RateSystem, report: &GibbsReport, nu: f64) -> Result<ResidenceReport> {
    check_len(rs.len(), report.pi.len())?;
    if rs.exit().contains(&0.0) {
        return Ok(ResidenceReport {
            tau: None,
            nu_tau: None,
            tau0: None,
            metastable: None,
        });
    }
    let tau: f64 = rs
        .residence()
        .iter()
        .zip(report.pi.weights())
        .map(|(t, p)| t * p)
        .sum();
    let tau0 = 1.0 / rs.w0();
    Ok(ResidenceReport {
        tau: Some(tau),
        nu_tau: Some(nu * tau),
        tau0: Some(tau0),
        // boundary case τ = τ₀ must not flip on the last ulp
        metastable: Some(tau >= tau0 * (1.0 - 1e-12)),
    })
}

/// `S(p) − S(π_β′)` where `π_β′` is the Gibbs density with the same mean
/// energy as `p`. `None` when `E(p)` lies on the boundary of the attainable
/// range (no finite `β′`).
pub fn entropy_excess(landscape: &Landscape, p: &Density) -> Result<Option<f64>> {
    let e = mean_energy(p, landscape)?;
    let beta = match beta_for_energy(landscape, e) {
        Ok(b) => b,
        Err(Error::OutOfRange { .. }) => return Ok(None),
        Err(err) => return Err(err),
    };
    let shell = gibbs_at(landscape.energies(), beta);
    let k_b = landscape.k_b();
    Ok(Some(boltzmann_entropy(p, k_b) - boltzmann_entropy(&shell, k_b)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MaximalityProbe {
    pub trials: usize,
    pub evaluated: usize,
    pub max_excess: f64,
}

/// Samples `trials` uniform densities (trial `i` seeded from `(seed, i)`)
/// and returns the largest entropy excess over the energy-matched Gibbs
/// density.
pub fn gibbs_maximality_probe(landscape: &Landscape, trials: usize, seed: u64) -> Result<MaximalityProbe> {
    let e = landscape.energies();
    if e.iter().all(|&x| x == e[0]) {
        return Err(Error::invalid(
            "landscape",
            "degenerate landscape: all energies are equal",
        ));
    }
    let n = landscape.len();
    let results = (0..trials)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            entropy_excess(landscape, &random_density(&mut rng, n))
        })
        .collect::<Result<Vec<_>>>()?;
    let evaluated: Vec<f64> = results.into_iter().flatten().collect();
    Ok(MaximalityProbe {
        trials,
        evaluated: evaluated.len(),
        max_excess: evaluated.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::kinetics::arrhenius_rates;
    use crate::semigroup::{evolve_grid, Engine};
    use approx::assert_relative_eq;
    use std::f64::consts::{E as EULER, LN_2};

    fn two_pi() -> Density {
        Density::from_vec_unchecked(vec![2.0 / 3.0, 1.0 / 3.0])
    }

    #[test]
    fn energy_examples() {
        let l = fixtures::two_state();
        assert_relative_eq!(mean_energy(&two_pi(), &l).unwrap(), LN_2 / 3.0, max_relative = 1e-15);
        assert_relative_eq!(mean_energy(&two_pi(), &l).unwrap(), 0.2310491, epsilon = 1e-7);
        assert_eq!(mean_energy(&Density::point_mass(2, 1), &l).unwrap(), LN_2);
        let flat = fixtures::uniform(3, 0.0, 1.0);
        assert_eq!(mean_energy(&Density::uniform(3), &flat).unwrap(), 0.0);
        assert!(mean_energy(&Density::uniform(3), &l).is_err());
    }

    #[test]
    fn entropy_examples() {
        assert_relative_eq!(boltzmann_entropy(&Density::uniform(4), 1.0), 4f64.ln(), max_relative = 1e-15);
        assert_eq!(boltzmann_entropy(&Density::point_mass(3, 2), 1.0), 0.0);
        let s = boltzmann_entropy(&two_pi(), 1.0);
        let expect = -(2.0 / 3.0f64) * (2.0 / 3.0f64).ln() - (1.0 / 3.0f64) * (1.0 / 3.0f64).ln();
        assert_relative_eq!(s, expect, max_relative = 1e-15);
        assert_relative_eq!(s, 0.6365142, epsilon = 1e-7);
    }

    #[test]
    fn gibbs_examples() {
        let g = gibbs_distribution(&fixtures::two_state());
        assert_relative_eq!(g.z, 1.5, max_relative = 1e-15);
        assert_relative_eq!(g.pi.weights()[0], 2.0 / 3.0, max_relative = 1e-15);
        assert_relative_eq!(g.f_pi, -(1.5f64.ln()), max_relative = 1e-15);
        assert_relative_eq!(g.f_pi, -0.4054651, epsilon = 1e-7);
        assert_relative_eq!(g.f_pi, g.e_pi - g.params.theta * g.s_pi, max_relative = 1e-10);

        let flat = fixtures::uniform(5, 0.7, 2.0);
        assert!(gibbs_distribution(&flat).pi.weights().iter().all(|&p| p == 0.2));

        let single = Landscape::new(vec!["x".into()], vec![0.8], vec![], 1.0, 2.0, 1.0).unwrap();
        let g = gibbs_distribution(&single);
        assert_eq!(g.pi.weights(), &[1.0]);
        assert_relative_eq!(g.z, (-0.4f64).exp(), max_relative = 1e-15);
        assert_relative_eq!(g.f_pi, 0.8, max_relative = 1e-15);
    }

    #[test]
    fn free_energy_examples() {
        let l = fixtures::two_state();
        let f_pi = free_energy(&two_pi(), &l).unwrap();
        assert_relative_eq!(f_pi, -(1.5f64.ln()), max_relative = 1e-12);
        assert_eq!(free_energy(&Density::point_mass(2, 0), &l).unwrap(), 0.0);
        let f_u = free_energy(&Density::uniform(2), &l).unwrap();
        assert_relative_eq!(f_u, -0.5 * LN_2, max_relative = 1e-15);
        assert_relative_eq!(f_u, -0.3465736, epsilon = 1e-7);
        assert!(f_u > f_pi);
    }

    #[test]
    fn beta_examples() {
        let l = fixtures::two_state();
        assert_relative_eq!(beta_for_energy(&l, LN_2 / 3.0).unwrap(), 1.0, epsilon = 1e-10);
        assert!(beta_for_energy(&l, LN_2 / 2.0).unwrap().abs() < 1e-10);
        assert!(matches!(beta_for_energy(&l, 0.0), Err(Error::OutOfRange { .. })));
        assert!(matches!(beta_for_energy(&l, LN_2), Err(Error::OutOfRange { .. })));
        assert!(beta_for_energy(&fixtures::uniform(3, 1.0, 2.0), 1.0).is_err());
        // energies above the midpoint need β′ < 0
        assert!(beta_for_energy(&l, 0.6).unwrap() < 0.0);
    }

    #[test]
    fn balance_from_point_mass() {
        let l = fixtures::two_state();
        let rs = arrhenius_rates(&l).unwrap();
        let traj = evolve_grid(&rs, &Density::point_mass(2, 0), &[0.0, 1.0]).unwrap();
        let rows = entropy_balance(&traj, &l).unwrap();
        assert_eq!(rows.len(), 1);
        let r = rows[0];
        // closed form at t = 1
        let pa = 2.0 / 3.0 + (-3.0 / EULER).exp() / 3.0;
        let p1 = Density::from_vec_unchecked(vec![pa, 1.0 - pa]);
        let f1 = free_energy(&p1, &l).unwrap();
        assert!(r.d_f < 0.0 && r.delta_i_s > 0.0);
        assert_relative_eq!(r.d_f, f1, max_relative = 1e-8);
        assert!(r.identity_defect(l.theta()) <= BALANCE_IDENTITY_TOL);
        assert_eq!(r.delta_q, r.d_e);
    }

    #[test]
    fn balance_needs_two_points() {
        let l = fixtures::two_state();
        let t = Trajectory::new(vec![0.0], vec![two_pi()], Engine::Expm).unwrap();
        assert!(entropy_balance(&t, &l).is_err());
    }

    #[test]
    fn constant_trajectories_have_zero_increments() {
        let l = fixtures::two_state();
        let t = Trajectory::new(vec![0.0, 1.0, 2.0], vec![two_pi(); 3], Engine::Expm).unwrap();
        let audit = permissibility_audit(&t, &l).unwrap();
        assert!(audit.verdict);
        assert!(audit.rows.iter().all(|r| r.d_e == 0.0 && r.d_s == 0.0 && r.d_f == 0.0));
    }

    #[test]
    fn uphill_trajectory_fails() {
        let l = fixtures::two_state();
        let t = Trajectory::new(vec![0.0, 1.0], vec![two_pi(), Density::point_mass(2, 1)], Engine::Expm)
            .unwrap();
        let audit = permissibility_audit(&t, &l).unwrap();
        assert!(!audit.verdict);
        let v = audit.first_violation.unwrap();
        assert_eq!(v.interval, 0);
        // F(δ_B) − F(π) = ln 2 + ln 1.5
        assert_relative_eq!(v.d_f, LN_2 + 1.5f64.ln(), max_relative = 1e-12);
        assert_eq!(audit.to_json()["verdict"], "FAIL");
    }

    #[test]
    fn residence_examples() {
        let l = fixtures::two_state();
        let rs = arrhenius_rates(&l).unwrap();
        let r = gibbs_residence_report(&rs, &gibbs_distribution(&l), l.nu()).unwrap();
        assert_relative_eq!(r.tau.unwrap(), 5.0 / 6.0 * EULER, max_relative = 1e-14);
        assert_relative_eq!(r.tau.unwrap(), 2.2652349, epsilon = 1e-7);
        assert_relative_eq!(r.tau0.unwrap(), EULER / 2.0, max_relative = 1e-14);
        assert_eq!(r.metastable, Some(true));

        let single = Landscape::new(vec!["x".into()], vec![0.0], vec![], 1.0, 1.0, 1.0).unwrap();
        let rs = arrhenius_rates(&single).unwrap();
        let r = gibbs_residence_report(&rs, &gibbs_distribution(&single), 1.0).unwrap();
        assert_eq!(r.tau, None);
        assert_eq!(r.metastable, None);

        let flat = fixtures::uniform(6, 0.0, 1.3);
        let rs = arrhenius_rates(&flat).unwrap();
        let r = gibbs_residence_report(&rs, &gibbs_distribution(&flat), 1.0).unwrap();
        assert_relative_eq!(r.tau.unwrap(), r.tau0.unwrap(), max_relative = 1e-14);
        assert_eq!(r.metastable, Some(true));
    }

    #[test]
    fn maximality_examples() {
        let l = fixtures::two_state();
        let probe = gibbs_maximality_probe(&l, 1000, 7).unwrap();
        assert!(probe.max_excess <= 1e-10);
        assert_eq!(probe.evaluated, 1000);
        let again = gibbs_maximality_probe(&l, 1000, 7).unwrap();
        assert_eq!(probe, again);

        let pi = gibbs_distribution(&l).pi;
        assert!(entropy_excess(&l, &pi).unwrap().unwrap().abs() <= 1e-10);
        assert_eq!(entropy_excess(&l, &Density::point_mass(2, 0)).unwrap(), None);
        assert!(gibbs_maximality_probe(&fixtures::uniform(3, 0.0, 1.0), 10, 1).is_err());

        // interior point mass on a three-level ladder: strict deficit
        let ladder = Landscape::new(
            vec!["a".into(), "b".into(), "c".into()],
            vec![0.0, 1.0, 2.0],
            vec![],
            1.0,
            1.0,
            1.0,
        )
        .unwrap();
        let ex = entropy_excess(&ladder, &Density::point_mass(3, 1)).unwrap().unwrap();
        assert!(ex < -0.5);
    }

    #[test]
    fn gibbs_shift_invariance() {
        let l = fixtures::random_landscape(11, 12);
        let c = 0.75;
        let (g, h) = (gibbs_distribution(&l), gibbs_distribution(&l.shifted(c).unwrap()));
        assert!(g.pi.l1_distance(&h.pi) < 1e-14);
        assert_relative_eq!(h.z, g.z * (-c / l.e_b()).exp(), max_relative = 1e-13);
        assert_relative_eq!(h.f_pi, g.f_pi + c, max_relative = 1e-13);
    }
}
