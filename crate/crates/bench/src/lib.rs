//! Shared setup for the engine benchmarks in `benches/`.

use mtherm_core::fixtures::random_landscape;
use mtherm_core::{arrhenius_rates, Density, RateSystem};

/// Random connected Arrhenius system of `n` states with a uniform start.
pub fn system(n: usize) -> (RateSystem, Density) {
    let rs = arrhenius_rates(&random_landscape(7, n)).expect("fixture rates are finite");
    (rs, Density::uniform(n))
}

pub fn grid(t_max: f64, points: usize) -> Vec<f64> {
    (0..points).map(|k| t_max * k as f64 / (points - 1) as f64).collect()
}
