//! Arrhenius transition intensities and the Kolmogorov generator.
//!
//! `W(x, y)` is stored row-wise as the rate of jumping *from* `x` *to* `y`.
//! The generator acts on densities through the transpose:
//! `(L f)(x) = −w(x) f(x) + Σ_y W(y, x) f(y)`.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{check_len, Error, Result};
use crate::statespace::{Density, Landscape};

/// Largest state space handled with dense storage.
pub const MAX_DENSE_STATES: usize = 4096;

/// Floor used when normalizing pairwise flux differences.
const FLUX_FLOOR: f64 = 1e-300;

#[derive(Debug, Clone, PartialEq)]
pub struct RateSystem {
    rates: DMatrix<f64>,
    exit: Vec<f64>,
    residence: Vec<f64>,
    w0: f64,
}

impl RateSystem {
    /// Builds a rate system from an explicit rate matrix (`rates[(x, y)]` is
    /// the intensity of `x → y`). The diagonal must be zero.
    pub fn from_matrix(rates: DMatrix<f64>) -> Result<Self> {
        let n = rates.nrows();
        if n == 0 {
            return Err(Error::invalid("rates", "N ≥ 1 required"));
        }
        check_len(n, rates.ncols())?;
        if n > MAX_DENSE_STATES {
            return Err(Error::TooLarge {
                n,
                limit: MAX_DENSE_STATES,
            });
        }
        for x in 0..n {
            for y in 0..n {
                let r = rates[(x, y)];
                if !r.is_finite() || r < 0.0 || (x == y && r != 0.0) {
                    return Err(Error::invalid(
                        format!("rates[{x}][{y}]"),
                        format!("expected finite nonnegative off-diagonal rate, got {r}"),
                    ));
                }
            }
        }
        let exit: Vec<f64> = (0..n).map(|x| rates.row(x).iter().sum()).collect();
        let residence = exit
            .iter()
            .map(|&w| if w > 0.0 { 1.0 / w } else { f64::INFINITY })
            .collect();
        let w0 = exit.iter().copied().fold(0.0, f64::max);
        if exit.contains(&0.0) && n > 1 {
            log::warn!("rate system has absorbing states (zero exit intensity)");
        }
        Ok(RateSystem {
            rates,
            exit,
            residence,
            w0,
        })
    }

    pub fn len(&self) -> usize {
        self.exit.len()
    }

    pub fn is_empty(&self) -> bool {
        self.exit.is_empty()
    }

    pub fn rate(&self, from: usize, to: usize) -> f64 {
        self.rates[(from, to)]
    }

    pub fn rates(&self) -> &DMatrix<f64> {
        &self.rates
    }

    /// Exit intensities w(x) = Σ_y W(x, y).
    pub fn exit(&self) -> &[f64] {
        &self.exit
    }

    /// Mean residence times τ(x) = 1/w(x); `+∞` for absorbing states.
    pub fn residence(&self) -> &[f64] {
        &self.residence
    }

    pub fn w0(&self) -> f64 {
        self.w0
    }

    /// Generator in row form, `Q = W − diag(w)`; densities evolve as `p Q`.
    pub fn generator_matrix(&self) -> DMatrix<f64> {
        let mut q = self.rates.clone();
        for x in 0..self.len() {
            q[(x, x)] = -self.exit[x];
        }
        q
    }

    /// Directed channels `x → y` with positive rate.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let n = self.len();
        (0..n)
            .flat_map(move |x| (0..n).map(move |y| (x, y)))
            .filter(|&(x, y)| self.rates[(x, y)] > 0.0)
    }

    /// CSV matrix export, one row per source state.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for x in 0..self.len() {
            let row: Vec<String> = self.rates.row(x).iter().map(|r| format!("{r:.16e}")).collect();
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }

    /// JSON sidecar with exit intensities, residence times (`null` for +∞) and w₀.
    pub fn sidecar_json(&self) -> serde_json::Value {
        let tau: Vec<Option<f64>> = self
            .residence
            .iter()
            .map(|&t| t.is_finite().then_some(t))
            .collect();
        serde_json::json!({ "w": self.exit, "tau": tau, "w0": self.w0 })
    }
}

/// Arrhenius intensities `W(x, y) = ν exp(−(E_xy − E_x)/E_B)` over every
/// barrier pair; pairs without a barrier get no channel.
pub fn arrhenius_rates(landscape: &Landscape) -> Result<RateSystem> {
    let n = landscape.len();
    if n > MAX_DENSE_STATES {
        return Err(Error::TooLarge {
            n,
            limit: MAX_DENSE_STATES,
        });
    }
    let e = landscape.energies();
    let (nu, e_b) = (landscape.nu(), landscape.e_b());
    let mut rates = DMatrix::zeros(n, n);
    for (i, j, barrier) in landscape.barriers() {
        for (from, to) in [(i, j), (j, i)] {
            let activation = barrier - e[from];
            let r = nu * (-activation / e_b).exp();
            if !r.is_finite() {
                let labels = landscape.labels();
                return Err(Error::RateOverflow {
                    from: labels[from].clone(),
                    to: labels[to].clone(),
                    activation,
                });
            }
            rates[(from, to)] = r;
        }
    }
    RateSystem::from_matrix(rates)
}

/// `(L f)(x) = −w(x) f(x) + Σ_y W(y, x) f(y)`.
pub fn generator_apply(rs: &RateSystem, f: &[f64]) -> Result<Vec<f64>> {
    check_len(rs.len(), f.len())?;
    let n = rs.len();
    let mut out: Vec<f64> = (0..n).map(|x| -rs.exit[x] * f[x]).collect();
    for y in 0..n {
        if f[y] == 0.0 {
            continue;
        }
        for x in 0..n {
            out[x] += rs.rates[(y, x)] * f[y];
        }
    }
    Ok(out)
}

/// Upper bound `2 w₀` on the induced L1 norm of the generator.
pub fn generator_norm_bound(rs: &RateSystem) -> f64 {
    2.0 * rs.w0
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EquilibriumConstant {
    pub from: usize,
    pub to: usize,
    /// W(x, y) / W(y, x)
    pub measured: f64,
    /// exp[(E_x − E_y)/E_B]
    pub analytic: f64,
    pub rel_discrepancy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EquilibriumTable {
    pub entries: Vec<EquilibriumConstant>,
    /// Pairs with a rate in one direction only: no equilibrium constant.
    pub one_sided: Vec<(usize, usize)>,
}

impl EquilibriumTable {
    pub fn max_discrepancy(&self) -> f64 {
        self.entries.iter().map(|e| e.rel_discrepancy).fold(0.0, f64::max)
    }
}

pub fn equilibrium_constants(rs: &RateSystem, landscape: &Landscape) -> Result<EquilibriumTable> {
    check_len(rs.len(), landscape.len())?;
    let e = landscape.energies();
    let mut entries = Vec::new();
    let mut one_sided = Vec::new();
    for x in 0..rs.len() {
        for y in 0..rs.len() {
            if x == y {
                continue;
            }
            let (fwd, bwd) = (rs.rate(x, y), rs.rate(y, x));
            match (fwd > 0.0, bwd > 0.0) {
                (true, true) => {
                    let measured = fwd / bwd;
                    let analytic = ((e[x] - e[y]) / landscape.e_b()).exp();
                    entries.push(EquilibriumConstant {
                        from: x,
                        to: y,
                        measured,
                        analytic,
                        rel_discrepancy: (measured - analytic).abs() / analytic,
                    });
                }
                (true, false) => one_sided.push((x, y)),
                _ => {}
            }
        }
    }
    Ok(EquilibriumTable { entries, one_sided })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DetailedBalance {
    /// max over pairs of |π(x)W(x,y) − π(y)W(y,x)| / max(fluxes, 1e-300)
    pub residual: f64,
    /// Whether `W(x, y) > 0 ⇔ W(y, x) > 0` for every pair.
    pub symmetric_graph: bool,
}

pub fn detailed_balance_residual(rs: &RateSystem, pi: &Density) -> Result<DetailedBalance> {
    check_len(rs.len(), pi.len())?;
    let p = pi.weights();
    let mut residual: f64 = 0.0;
    let mut symmetric_graph = true;
    for x in 0..rs.len() {
        for y in (x + 1)..rs.len() {
            let (fwd, bwd) = (rs.rate(x, y), rs.rate(y, x));
            if (fwd > 0.0) != (bwd > 0.0) {
                symmetric_graph = false;
            }
            let a = p[x] * fwd;
            let b = p[y] * bwd;
            residual = residual.max((a - b).abs() / a.max(b).max(FLUX_FLOOR));
        }
    }
    Ok(DetailedBalance {
        residual,
        symmetric_graph,
    })
}
