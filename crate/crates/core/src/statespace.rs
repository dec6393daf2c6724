//! Finite state space with counting measure: the energy landscape and
//! probability densities over it.
//!
//! A [`Landscape`] carries one energy per state, a symmetric table of barrier
//! energies over unordered state pairs, the attempt frequency `nu`, the
//! characteristic energy `E_B` and the entropy scale `k_B`. A pair without a
//! barrier entry has no transition channel at all.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};

/// Tolerance on the sum of user-supplied weights before renormalization is refused.
pub const USER_SUM_TOL: f64 = 1e-9;
/// Negative weights above this threshold are treated as roundoff and clipped.
pub const NEG_CLIP_TOL: f64 = 1e-12;
/// Simplex drift accepted from the numerical engines.
pub const ENGINE_DRIFT_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct Landscape {
    labels: Vec<String>,
    energies: Vec<f64>,
    // keyed by (i, j) with i < j
    barriers: BTreeMap<(usize, usize), f64>,
    nu: f64,
    e_b: f64,
    k_b: f64,
}

impl Landscape {
    /// Builds a validated landscape. `barriers` lists unordered pairs by index;
    /// each pair may appear at most once.
    pub fn new(
        labels: Vec<String>,
        energies: Vec<f64>,
        barriers: Vec<(usize, usize, f64)>,
        nu: f64,
        e_b: f64,
        k_b: f64,
    ) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::invalid("states", "N ≥ 1 required"));
        }
        check_len(labels.len(), energies.len())?;
        let mut seen = HashMap::new();
        for (i, l) in labels.iter().enumerate() {
            if let Some(j) = seen.insert(l.as_str(), i) {
                return Err(Error::invalid(
                    "states",
                    format!("duplicate label `{l}` at positions {j} and {i}"),
                ));
            }
        }
        for (l, &e) in labels.iter().zip(&energies) {
            if !e.is_finite() || e < 0.0 {
                return Err(Error::invalid(
                    format!("states[{l}].energy"),
                    format!("energy must be finite and ≥ 0, got {e}"),
                ));
            }
        }
        for (name, v) in [("nu", nu), ("E_B", e_b), ("k_B", k_b)] {
            if !v.is_finite() || v <= 0.0 {
                return Err(Error::invalid(name, format!("must be finite and > 0, got {v}")));
            }
        }
        let n = labels.len();
        let mut table = BTreeMap::new();
        for (i, j, value) in barriers {
            if i >= n || j >= n {
                return Err(Error::invalid(
                    "barriers",
                    format!("pair ({i}, {j}) out of range for N = {n}"),
                ));
            }
            let pair = format!("({}, {})", labels[i], labels[j]);
            if i == j {
                return Err(Error::invalid(
                    format!("barriers{pair}"),
                    "a state cannot have a barrier to itself",
                ));
            }
            if !value.is_finite() || value < 0.0 {
                return Err(Error::invalid(
                    format!("barriers{pair}.value"),
                    format!("barrier must be finite and ≥ 0, got {value}"),
                ));
            }
            let key = (i.min(j), i.max(j));
            if let Some(&prev) = table.get(&key) {
                let reason = if prev != value {
                    format!("asymmetric barrier pair: {prev} vs {value}")
                } else {
                    "duplicate barrier pair".to_string()
                };
                return Err(Error::invalid(format!("barriers{pair}"), reason));
            }
            let lowest = energies[i].max(energies[j]);
            if value < lowest {
                log::warn!(
                    "barrier {pair} = {value} lies below a state energy ({lowest}); negative activation energy"
                );
            }
            table.insert(key, value);
        }
        Ok(Landscape {
            labels,
            energies,
            barriers: table,
            nu,
            e_b,
            k_b,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn energies(&self) -> &[f64] {
        &self.energies
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    pub fn e_b(&self) -> f64 {
        self.e_b
    }

    pub fn k_b(&self) -> f64 {
        self.k_b
    }

    /// Temperature θ = E_B / k_B.
    pub fn theta(&self) -> f64 {
        self.e_b / self.k_b
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    /// Barrier energy between `i` and `j`, if a channel exists.
    pub fn barrier(&self, i: usize, j: usize) -> Option<f64> {
        self.barriers.get(&(i.min(j), i.max(j))).copied()
    }

    /// Barrier entries as `(i, j, E_ij)` with `i < j`, in index order.
    pub fn barriers(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.barriers.iter().map(|(&(i, j), &v)| (i, j, v))
    }

    /// Same landscape with a different attempt frequency.
    pub fn with_nu(&self, nu: f64) -> Result<Self> {
        let barriers = self.barriers().collect();
        Landscape::new(
            self.labels.clone(),
            self.energies.clone(),
            barriers,
            nu,
            self.e_b,
            self.k_b,
        )
    }

    /// Same landscape with every energy and barrier shifted by `c`.
    pub fn shifted(&self, c: f64) -> Result<Self> {
        let energies = self.energies.iter().map(|e| e + c).collect();
        let barriers = self.barriers().map(|(i, j, v)| (i, j, v + c)).collect();
        Landscape::new(
            self.labels.clone(),
            energies,
            barriers,
            self.nu,
            self.e_b,
            self.k_b,
        )
    }

    pub fn to_json(&self) -> String {
        let doc = LandscapeDoc {
            states: self
                .labels
                .iter()
                .zip(&self.energies)
                .map(|(label, &energy)| StateDoc {
                    label: label.clone(),
                    energy,
                })
                .collect(),
            barriers: self
                .barriers()
                .map(|(i, j, value)| BarrierDoc {
                    i: self.labels[i].clone(),
                    j: self.labels[j].clone(),
                    value,
                })
                .collect(),
            nu: Some(self.nu),
            e_b: Some(self.e_b),
            k_b: Some(self.k_b),
        };
        serde_json::to_string_pretty(&doc).expect("landscape serializes")
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct StateDoc {
    label: String,
    energy: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct BarrierDoc {
    i: String,
    j: String,
    value: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct LandscapeDoc {
    states: Vec<StateDoc>,
    #[serde(default)]
    barriers: Vec<BarrierDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    nu: Option<f64>,
    #[serde(rename = "E_B", default, skip_serializing_if = "Option::is_none")]
    e_b: Option<f64>,
    #[serde(rename = "k_B", default, skip_serializing_if = "Option::is_none")]
    k_b: Option<f64>,
}

/// Parses and validates a landscape JSON document. Missing `nu`, `E_B` and
/// `k_B` default to 1.
pub fn load_landscape(text: &str) -> Result<Landscape> {
    let doc: LandscapeDoc = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    let labels: Vec<String> = doc.states.iter().map(|s| s.label.clone()).collect();
    let energies = doc.states.iter().map(|s| s.energy).collect();
    let lookup = |l: &str, k: usize, side: &str| {
        labels.iter().position(|x| x == l).ok_or_else(|| {
            Error::invalid(format!("barriers[{k}].{side}"), format!("unknown state `{l}`"))
        })
    };
    let mut barriers = Vec::with_capacity(doc.barriers.len());
    for (k, b) in doc.barriers.iter().enumerate() {
        barriers.push((lookup(&b.i, k, "i")?, lookup(&b.j, k, "j")?, b.value));
    }
    Landscape::new(
        labels,
        energies,
        barriers,
        doc.nu.unwrap_or(1.0),
        doc.e_b.unwrap_or(1.0),
        doc.k_b.unwrap_or(1.0),
    )
}

/// A probability density on the finite state space: nonnegative weights
/// summing to one.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct Density(Vec<f64>);

impl Density {
    pub fn uniform(n: usize) -> Self {
        Density(vec![1.0 / n as f64; n])
    }

    pub fn point_mass(n: usize, at: usize) -> Self {
        let mut w = vec![0.0; n];
        w[at] = 1.0;
        Density(w)
    }

    pub(crate) fn from_vec_unchecked(w: Vec<f64>) -> Self {
        Density(w)
    }

    pub fn weights(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Indices carrying positive mass.
    pub fn support(&self) -> Vec<usize> {
        (0..self.0.len()).filter(|&i| self.0[i] > 0.0).collect()
    }

    pub fn l1_distance(&self, other: &Density) -> f64 {
        l1_distance(&self.0, &other.0)
    }
}

impl AsRef<[f64]> for Density {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

pub fn l1_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x.abs()).sum()
}

pub fn l1_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

/// Density from occupation numbers, p_x = n_x / Σ n.
pub fn density_from_counts(counts: &[i64]) -> Result<Density> {
    if counts.is_empty() {
        return Err(Error::invalid("counts", "N ≥ 1 required"));
    }
    if let Some(i) = counts.iter().position(|&c| c < 0) {
        return Err(Error::invalid(
            format!("counts[{i}]"),
            format!("negative count {}", counts[i]),
        ));
    }
    let total: i128 = counts.iter().map(|&c| c as i128).sum();
    if total == 0 {
        return Err(Error::invalid("counts", "at least one count must be positive"));
    }
    let total = total as f64;
    Ok(Density(counts.iter().map(|&c| c as f64 / total).collect()))
}

/// Validates user-supplied weights. Sums within [`USER_SUM_TOL`] of one are
/// renormalized; tiny negatives (≥ −1e-12) are clipped to zero first.
pub fn validate_density(weights: &[f64], n: usize) -> Result<Density> {
    check_len(n, weights.len())?;
    let w = clip_roundoff(weights)?;
    let sum: f64 = w.iter().sum();
    if !sum.is_finite() || (sum - 1.0).abs() > USER_SUM_TOL {
        return Err(Error::invalid(
            "density",
            format!("weights sum to {sum}, deviation exceeds {USER_SUM_TOL:e}"),
        ));
    }
    // already on the simplex up to summation roundoff
    if (sum - 1.0).abs() <= f64::EPSILON * n as f64 {
        return Ok(Density(w));
    }
    log::debug!("renormalizing density with sum {sum}");
    Ok(Density(w.into_iter().map(|x| x / sum).collect()))
}

fn clip_roundoff(weights: &[f64]) -> Result<Vec<f64>> {
    weights
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            if !x.is_finite() {
                Err(Error::invalid(format!("density[{i}]"), "non-finite weight"))
            } else if x < -NEG_CLIP_TOL {
                Err(Error::NegativeMass { index: i, value: x })
            } else {
                Ok(x.max(0.0))
            }
        })
        .collect()
}

/// Puts an engine output back on the simplex. Entries in `[−1e-12, 0)` are
/// clipped; anything more negative, or a sum off by more than
/// [`ENGINE_DRIFT_TOL`], is a numerical failure.
pub fn repair_simplex(v: Vec<f64>) -> Result<Density> {
    let w = clip_roundoff(&v)?;
    let sum: f64 = w.iter().sum();
    let drift = (sum - 1.0).abs();
    if !(drift <= ENGINE_DRIFT_TOL) {
        return Err(Error::SimplexDrift {
            drift,
            tol: ENGINE_DRIFT_TOL,
        });
    }
    Ok(Density(w.into_iter().map(|x| x / sum).collect()))
}

fn split_numbers(text: &str) -> Vec<&str> {
    text.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|s| !s.is_empty())
        .collect()
}

/// Parses a list of reals given either as a JSON array or as one CSV row.
pub fn parse_real_row(text: &str) -> Result<Vec<f64>> {
    let t = text.trim();
    if t.starts_with('[') {
        return serde_json::from_str(t).map_err(|e| Error::Parse(e.to_string()));
    }
    let row = t.lines().find(|l| !l.trim().is_empty() && !l.starts_with('#'));
    split_numbers(row.unwrap_or(""))
        .into_iter()
        .map(|s| s.parse::<f64>().map_err(|e| Error::Parse(format!("`{s}`: {e}"))))
        .collect()
}

/// Parses integer counts given as a JSON array or one CSV row.
pub fn parse_count_row(text: &str) -> Result<Vec<i64>> {
    let t = text.trim();
    if t.starts_with('[') {
        return serde_json::from_str(t).map_err(|e| Error::Parse(e.to_string()));
    }
    let row = t.lines().find(|l| !l.trim().is_empty() && !l.starts_with('#'));
    split_numbers(row.unwrap_or(""))
        .into_iter()
        .map(|s| s.parse::<i64>().map_err(|e| Error::Parse(format!("`{s}`: {e}"))))
        .collect()
}

/// Density file: JSON array or single CSV row, in landscape state order.
pub fn parse_density(text: &str, n: usize) -> Result<Density> {
    validate_density(&parse_real_row(text)?, n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const TWO: &str = r#"{
        "states": [{"label": "A", "energy": 0.0}, {"label": "B", "energy": 0.6931471805599453}],
        "barriers": [{"i": "A", "j": "B", "value": 1.0}]
    }"#;

    #[test]
    fn loads_two_state_document() {
        let l = load_landscape(TWO).unwrap();
        assert_eq!(l.len(), 2);
        assert_eq!(l.energies(), &[0.0, std::f64::consts::LN_2]);
        assert_eq!(l.barrier(1, 0), Some(1.0));
        assert_eq!((l.nu(), l.e_b(), l.k_b()), (1.0, 1.0, 1.0));
    }

    #[test]
    fn round_trip_is_exact() {
        let l = load_landscape(TWO).unwrap();
        assert_eq!(load_landscape(&l.to_json()).unwrap(), l);
    }

    #[test]
    fn asymmetric_pair_rejected() {
        let doc = r#"{"states": [{"label": "A", "energy": 0}, {"label": "B", "energy": 0}],
            "barriers": [{"i": "A", "j": "B", "value": 1}, {"i": "B", "j": "A", "value": 2}]}"#;
        let err = load_landscape(doc).unwrap_err();
        assert!(err.to_string().contains("asymmetric"), "{err}");
    }

    #[test]
    fn duplicate_pair_rejected() {
        let doc = r#"{"states": [{"label": "A", "energy": 0}, {"label": "B", "energy": 0}],
            "barriers": [{"i": "A", "j": "B", "value": 1}, {"i": "B", "j": "A", "value": 1}]}"#;
        assert!(load_landscape(doc).unwrap_err().to_string().contains("duplicate"));
    }

    #[test]
    fn empty_states_rejected() {
        let err = load_landscape(r#"{"states": []}"#).unwrap_err();
        assert!(err.to_string().contains("N ≥ 1 required"));
    }

    #[test]
    fn bad_fields_named() {
        let cases = [
            (r#"{"states": [{"label": "A", "energy": -1}]}"#, "states[A].energy"),
            (r#"{"states": [{"label": "A", "energy": 0}], "nu": 0}"#, "nu"),
            (r#"{"states": [{"label": "A", "energy": 0}], "E_B": -2}"#, "E_B"),
            (r#"{"states": [{"label": "A", "energy": 0}], "k_B": 0}"#, "k_B"),
            (r#"{"states": [{"label": "A", "energy": 0}, {"label": "A", "energy": 1}]}"#, "states"),
            (
                r#"{"states": [{"label": "A", "energy": 0}, {"label": "B", "energy": 0}],
                   "barriers": [{"i": "A", "j": "B", "value": -1}]}"#,
                "barriers(A, B).value",
            ),
            (
                r#"{"states": [{"label": "A", "energy": 0}],
                   "barriers": [{"i": "A", "j": "C", "value": 1}]}"#,
                "barriers[0].j",
            ),
        ];
        for (doc, field) in cases {
            match load_landscape(doc) {
                Err(Error::Invalid { field: f, .. }) => assert_eq!(f, field),
                other => panic!("expected invalid {field}, got {other:?}"),
            }
        }
        assert!(matches!(load_landscape("{not json"), Err(Error::Parse(_))));
    }

    #[test]
    fn negative_activation_is_allowed() {
        let doc = r#"{"states": [{"label": "A", "energy": 2}, {"label": "B", "energy": 0}],
            "barriers": [{"i": "A", "j": "B", "value": 1}]}"#;
        assert!(load_landscape(doc).is_ok());
    }

    #[test]
    fn counts_examples() {
        assert_eq!(density_from_counts(&[3, 1]).unwrap().weights(), &[0.75, 0.25]);
        assert_eq!(density_from_counts(&[5, 0, 0]).unwrap().weights(), &[1.0, 0.0, 0.0]);
        assert_eq!(density_from_counts(&[1, 1, 1, 1]).unwrap().weights(), &[0.25; 4]);
        assert!(density_from_counts(&[0, 0]).is_err());
        assert!(density_from_counts(&[1, -1]).is_err());
    }

    #[test]
    fn validate_examples() {
        assert_eq!(validate_density(&[0.5, 0.5], 2).unwrap().weights(), &[0.5, 0.5]);
        let w = [0.5, 0.5 + 1e-10];
        let d = validate_density(&w, 2).unwrap();
        let s = w[0] + w[1];
        assert_eq!(d.weights(), &[w[0] / s, w[1] / s]);
        assert!((d.weights().iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert!(matches!(
            validate_density(&[0.7, -0.1, 0.4], 3),
            Err(Error::NegativeMass { index: 1, .. })
        ));
        assert!(validate_density(&[0.5, 0.6], 2).is_err());
        assert!(matches!(
            validate_density(&[1.0], 2),
            Err(Error::LengthMismatch { .. })
        ));
    }

    #[test]
    fn density_file_formats() {
        assert_eq!(parse_density("[0.25, 0.75]", 2).unwrap().weights(), &[0.25, 0.75]);
        assert_eq!(parse_density("0.25,0.75\n", 2).unwrap().weights(), &[0.25, 0.75]);
        assert_eq!(parse_count_row("3, 1").unwrap(), vec![3, 1]);
    }

    proptest! {
        #[test]
        fn counts_give_valid_density(counts in prop::collection::vec(0i64..1000, 1..40)) {
            prop_assume!(counts.iter().any(|&c| c > 0));
            let d = density_from_counts(&counts).unwrap();
            prop_assert!(d.weights().iter().all(|&x| x >= 0.0));
            prop_assert!((d.weights().iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        }

        #[test]
        fn validate_is_idempotent(raw in prop::collection::vec(0.0f64..1.0, 1..30)) {
            let s: f64 = raw.iter().sum();
            prop_assume!(s > 0.0);
            let w: Vec<f64> = raw.iter().map(|x| x / s).collect();
            if let Ok(d) = validate_density(&w, w.len()) {
                let again = validate_density(d.weights(), d.len()).unwrap();
                prop_assert_eq!(again, d);
            }
        }
    }
}
