//! Density evolution under the Kolmogorov equation `∂ₜp = L p`.
//!
//! Two independent engines are provided: the matrix exponential
//! `U_t = exp(t L)` ([`evolve_expm`]) and adaptive Dormand–Prince integration
//! of the master equation ([`evolve_grid`]). The transition kernel, stationary
//! densities, the asymptotic-stability certificate and relaxation distances
//! are built on top of them.

use nalgebra::{DMatrix, DVector};
use petgraph::algo::tarjan_scc;
use petgraph::graph::DiGraph;
use serde::Serialize;

use crate::error::{check_len, Error, Result};
use crate::kinetics::{generator_apply, RateSystem};
use crate::numerics::{expm, DormandPrince, Tolerances};
use crate::statespace::{l1_distance, repair_simplex, Density};

pub const RK_TOLERANCES: Tolerances = Tolerances {
    rtol: 1e-10,
    atol: 1e-12,
};

/// Mass threshold above which the stability certificate is issued.
pub const CERTIFICATE_MASS_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Engine {
    Expm,
    #[serde(rename = "rk")]
    RungeKutta,
    /// Read from a file rather than computed.
    External,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Kernel {
    pub t: f64,
    /// `matrix[(x, y)]`: probability of being at `y` after `t`, starting at `x`.
    pub matrix: DMatrix<f64>,
}

impl Kernel {
    pub fn len(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.matrix.nrows() == 0
    }

    pub fn get(&self, from: usize, to: usize) -> f64 {
        self.matrix[(from, to)]
    }

    /// CSV with a `# t=<value>` header; roundoff negatives are exported as 0.
    pub fn to_csv(&self) -> String {
        let mut out = format!("# t={:.16e}\n", self.t);
        for row in self.matrix.row_iter() {
            let cells: Vec<String> = row.iter().map(|v| format!("{:.16e}", v.max(0.0))).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub densities: Vec<Density>,
    pub engine: Engine,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Assembles a trajectory from externally supplied data, checking the grid
    /// and state count.
    pub fn new(times: Vec<f64>, densities: Vec<Density>, engine: Engine) -> Result<Self> {
        validate_grid(&times)?;
        check_len(times.len(), densities.len())?;
        if let Some(first) = densities.first() {
            for d in &densities {
                check_len(first.len(), d.len())?;
            }
        }
        Ok(Trajectory {
            times,
            densities,
            engine,
        })
    }
}

pub fn validate_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::invalid("grid", "at least one time point required"));
    }
    if !(grid[0] >= 0.0) || grid.iter().any(|t| !t.is_finite()) {
        return Err(Error::invalid("grid", "times must be finite with t₀ ≥ 0"));
    }
    if let Some(w) = grid.windows(2).find(|w| w[1] <= w[0]) {
        return Err(Error::invalid(
            "grid",
            format!("not strictly increasing at {} → {}", w[0], w[1]),
        ));
    }
    Ok(())
}

fn check_time(t: f64) -> Result<()> {
    if !(t >= 0.0) || !t.is_finite() {
        return Err(Error::invalid("t", format!("time must be finite and ≥ 0, got {t}")));
    }
    Ok(())
}

/// `exp(t Q)` for the row-form generator; row `x` is the density at time `t`
/// started from the point mass at `x`.
fn kernel_matrix(rs: &RateSystem, t: f64) -> DMatrix<f64> {
    if t == 0.0 {
        return DMatrix::identity(rs.len(), rs.len());
    }
    expm(&(rs.generator_matrix() * t))
}

fn apply_row(f: &[f64], k: &DMatrix<f64>) -> Vec<f64> {
    let v = DVector::from_column_slice(f);
    (k.transpose() * v).iter().copied().collect()
}

/// `U_t f` for an arbitrary (possibly signed) vector.
pub fn propagate(rs: &RateSystem, f: &[f64], t: f64) -> Result<Vec<f64>> {
    check_len(rs.len(), f.len())?;
    check_time(t)?;
    if t == 0.0 {
        return Ok(f.to_vec());
    }
    Ok(apply_row(f, &kernel_matrix(rs, t)))
}

/// Density at time `t` via the matrix exponential.
pub fn evolve_expm(rs: &RateSystem, p0: &Density, t: f64) -> Result<Density> {
    check_len(rs.len(), p0.len())?;
    check_time(t)?;
    if t == 0.0 {
        return Ok(p0.clone());
    }
    repair_simplex(apply_row(p0.weights(), &kernel_matrix(rs, t)))
}

/// Expm engine sampled on a grid; each point is computed directly from `p0`.
pub fn evolve_grid_expm(rs: &RateSystem, p0: &Density, grid: &[f64]) -> Result<Trajectory> {
    validate_grid(grid)?;
    let densities = grid
        .iter()
        .map(|&t| evolve_expm(rs, p0, t))
        .collect::<Result<Vec<_>>>()?;
    Ok(Trajectory {
        times: grid.to_vec(),
        densities,
        engine: Engine::Expm,
    })
}

/// Integrates the master equation with adaptive Dormand–Prince 5(4)
/// (rtol 1e-10, atol 1e-12), landing exactly on every grid point.
pub fn evolve_grid(rs: &RateSystem, p0: &Density, grid: &[f64]) -> Result<Trajectory> {
    check_len(rs.len(), p0.len())?;
    validate_grid(grid)?;
    let mut densities = Vec::with_capacity(grid.len());
    // the first grid point may lie after t = 0
    let mut y = p0.weights().to_vec();
    let mut t = 0.0;
    let h0 = if rs.w0() > 0.0 { 0.01 / rs.w0() } else { 1.0 };
    let rhs = |p: &[f64], dp: &mut [f64]| {
        let lp = generator_apply(rs, p).expect("length checked");
        dp.copy_from_slice(&lp);
    };
    let mut dp = DormandPrince::new(rhs, rs.len(), RK_TOLERANCES, h0);
    let renormalize = |p: &mut [f64]| -> Result<()> {
        let d = repair_simplex(p.to_vec())?;
        p.copy_from_slice(d.weights());
        Ok(())
    };
    for &target in grid {
        if target > t {
            if rs.w0() > 0.0 {
                dp.advance(&mut y, t, target, renormalize)?;
            }
            t = target;
        }
        densities.push(if t == 0.0 {
            p0.clone()
        } else {
            repair_simplex(y.clone())?
        });
    }
    log::debug!("rk: {} steps, {} rejected", dp.steps, dp.rejected);
    Ok(Trajectory {
        times: grid.to_vec(),
        densities,
        engine: Engine::RungeKutta,
    })
}

/// Chapman–Kolmogorov kernel `K_t`, row-stochastic.
pub fn transition_kernel(rs: &RateSystem, t: f64) -> Result<Kernel> {
    check_time(t)?;
    let mut matrix = kernel_matrix(rs, t);
    for x in 0..rs.len() {
        let row = repair_simplex(matrix.row(x).iter().copied().collect())?;
        for (y, v) in row.weights().iter().enumerate() {
            matrix[(x, y)] = *v;
        }
    }
    Ok(Kernel { t, matrix })
}

fn channel_graph(rs: &RateSystem) -> DiGraph<(), ()> {
    let mut g = DiGraph::new();
    let nodes: Vec<_> = (0..rs.len()).map(|_| g.add_node(())).collect();
    for (x, y) in rs.edges() {
        g.add_edge(nodes[x], nodes[y], ());
    }
    g
}

/// Closed communicating classes: strongly connected components with no
/// channel leaving them. Sorted by smallest member.
pub fn closed_classes(rs: &RateSystem) -> Vec<Vec<usize>> {
    let g = channel_graph(rs);
    let sccs = tarjan_scc(&g);
    let mut comp = vec![0usize; rs.len()];
    for (c, members) in sccs.iter().enumerate() {
        for v in members {
            comp[v.index()] = c;
        }
    }
    let mut closed: Vec<Vec<usize>> = sccs
        .iter()
        .enumerate()
        .filter(|(c, members)| {
            members.iter().all(|v| {
                let x = v.index();
                (0..rs.len()).all(|y| rs.rate(x, y) == 0.0 || comp[y] == *c)
            })
        })
        .map(|(_, members)| {
            let mut m: Vec<usize> = members.iter().map(|v| v.index()).collect();
            m.sort_unstable();
            m
        })
        .collect();
    closed.sort();
    closed
}

/// Whether every state reaches every other through channels.
pub fn strongly_connected(rs: &RateSystem) -> bool {
    tarjan_scc(&channel_graph(rs)).len() == 1
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Stationary {
    /// The stationary density if unique; otherwise the minimum-norm mixture
    /// of the extreme ones.
    pub density: Density,
    pub unique: bool,
    /// One extreme stationary density per closed class.
    pub extremes: Vec<Density>,
}

fn class_stationary(rs: &RateSystem, class: &[usize]) -> Result<Vec<f64>> {
    let m = class.len();
    if m == 1 {
        return Ok(vec![1.0]);
    }
    // π Q_C = 0  ⇔  Q_Cᵀ πᵀ = 0; last equation swapped for Σπ = 1
    let mut a = DMatrix::<f64>::zeros(m, m);
    for (i, &x) in class.iter().enumerate() {
        for (j, &y) in class.iter().enumerate() {
            a[(j, i)] = if x == y { -rs.exit()[x] } else { rs.rate(x, y) };
        }
    }
    for j in 0..m {
        a[(m - 1, j)] = 1.0;
    }
    let mut b = DVector::zeros(m);
    b[m - 1] = 1.0;
    let sol = a
        .lu()
        .solve(&b)
        .ok_or_else(|| Error::Singular("stationary system for a closed class".into()))?;
    Ok(sol.iter().copied().collect())
}

/// Solves `L π = 0` on the simplex, one extreme solution per closed class.
pub fn stationary_density(rs: &RateSystem) -> Result<Stationary> {
    let n = rs.len();
    let classes = closed_classes(rs);
    let mut extremes = Vec::with_capacity(classes.len());
    for class in &classes {
        let local = class_stationary(rs, class)?;
        let mut full = vec![0.0; n];
        for (&x, v) in class.iter().zip(local) {
            full[x] = v;
        }
        extremes.push(repair_simplex(full)?);
    }
    let unique = extremes.len() == 1;
    let density = if unique {
        extremes[0].clone()
    } else {
        // disjoint supports: minimizing ‖Σλᵢeᵢ‖₂ over the simplex gives λᵢ ∝ 1/‖eᵢ‖₂²
        let inv: Vec<f64> = extremes
            .iter()
            .map(|e| 1.0 / e.weights().iter().map(|v| v * v).sum::<f64>())
            .collect();
        let total: f64 = inv.iter().sum();
        let mut mix = vec![0.0; n];
        for (e, l) in extremes.iter().zip(&inv) {
            for (m, v) in mix.iter_mut().zip(e.weights()) {
                *m += v * l / total;
            }
        }
        repair_simplex(mix)?
    };
    Ok(Stationary {
        density,
        unique,
        extremes,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilityCertificate {
    pub t0: f64,
    /// h₀(x) = min over start states z of K_{t0}(z, x)
    pub h0: Vec<f64>,
    pub mass: f64,
    pub verdict: bool,
    /// A positive lower-bound mass implies relaxation to a unique stationary density.
    pub implies_relaxation: bool,
}

pub fn stability_certificate(rs: &RateSystem, t0: f64) -> Result<StabilityCertificate> {
    if !(t0 > 0.0) || !t0.is_finite() {
        return Err(Error::invalid("t0", format!("probe time must be > 0, got {t0}")));
    }
    let k = transition_kernel(rs, t0)?;
    let h0: Vec<f64> = (0..rs.len())
        .map(|x| k.matrix.column(x).iter().copied().fold(f64::INFINITY, f64::min).max(0.0))
        .collect();
    let mass = h0.iter().sum::<f64>().min(1.0);
    let verdict = mass > CERTIFICATE_MASS_TOL;
    Ok(StabilityCertificate {
        t0,
        h0,
        mass,
        verdict,
        implies_relaxation: verdict,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Relaxation {
    pub times: Vec<f64>,
    /// ‖U_t p₀ − π‖₁ per grid point
    pub distances: Vec<f64>,
    pub monotone: bool,
    pub final_distance: f64,
}

/// Slack allowed when checking that distances do not increase.
const MONOTONE_SLACK: f64 = 1e-12;

pub fn relaxation_distance(rs: &RateSystem, p0: &Density, grid: &[f64]) -> Result<Relaxation> {
    validate_grid(grid)?;
    let st = stationary_density(rs)?;
    if !st.unique {
        return Err(Error::NotUnique {
            classes: st.extremes.len(),
        });
    }
    let distances = grid
        .iter()
        .map(|&t| Ok(l1_distance(evolve_expm(rs, p0, t)?.weights(), st.density.weights())))
        .collect::<Result<Vec<f64>>>()?;
    let monotone = distances.windows(2).all(|w| w[1] <= w[0] + MONOTONE_SLACK);
    Ok(Relaxation {
        times: grid.to_vec(),
        final_distance: *distances.last().expect("grid non-empty"),
        distances,
        monotone,
    })
}

/// States reachable through channels from any state in `from`.
pub fn reachable(rs: &RateSystem, from: &[usize]) -> Vec<bool> {
    let mut seen = vec![false; rs.len()];
    let mut stack: Vec<usize> = from.to_vec();
    for &s in from {
        seen[s] = true;
    }
    while let Some(x) = stack.pop() {
        for y in 0..rs.len() {
            if !seen[y] && rs.rate(x, y) > 0.0 {
                seen[y] = true;
                stack.push(y);
            }
        }
    }
    seen
}
