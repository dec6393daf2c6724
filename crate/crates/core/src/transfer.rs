//! Deterministic dynamics on the finite state space: a self-map `S` iterated
//! in discrete time and the pushforward (transfer) operator it induces on
//! densities, `(U f)(y) = Σ_{x : S(x) = y} f(x)`.
//!
//! With the counting measure every map is nonsingular, so nothing needs to be
//! checked for the pushforward to be well defined.

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::statespace::Density;

/// Mass threshold for declaring that forward images exhaust the measure.
pub const EXACTNESS_TOL: f64 = 1e-12;
/// Tolerance for invariance of real-valued weights.
pub const INVARIANCE_TOL: f64 = 1e-14;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FiniteMap {
    target: Vec<usize>,
}

impl FiniteMap {
    pub fn new(target: Vec<usize>) -> Result<Self> {
        let n = target.len();
        if n == 0 {
            return Err(Error::invalid("targets", "N ≥ 1 required"));
        }
        if let Some(i) = target.iter().position(|&t| t >= n) {
            return Err(Error::invalid(
                format!("targets[{i}]"),
                format!("index {} out of range for N = {n}", target[i]),
            ));
        }
        Ok(FiniteMap { target })
    }

    pub fn identity(n: usize) -> Self {
        FiniteMap {
            target: (0..n).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.target.len()
    }

    pub fn is_empty(&self) -> bool {
        self.target.is_empty()
    }

    pub fn apply(&self, x: usize) -> usize {
        self.target[x]
    }

    pub fn targets(&self) -> &[usize] {
        &self.target
    }

    pub fn is_bijective(&self) -> bool {
        let mut hit = vec![false; self.len()];
        self.target.iter().all(|&t| !std::mem::replace(&mut hit[t], true))
    }

    /// Forward image `S(A)`.
    pub fn image(&self, set: &BTreeSet<usize>) -> BTreeSet<usize> {
        set.iter().map(|&x| self.target[x]).collect()
    }
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum TargetRef {
    Index(usize),
    Label(String),
}

#[derive(Debug, Deserialize)]
struct MapDoc {
    targets: Vec<TargetRef>,
    #[serde(default)]
    labels: Option<Vec<String>>,
}

/// A map document with its state labels (indices as strings when absent).
#[derive(Debug, Clone, PartialEq)]
pub struct MapSpec {
    pub map: FiniteMap,
    pub labels: Vec<String>,
}

/// Parses `{"targets": [...], "labels": [...]?}`; targets may be indices or labels.
pub fn load_map(text: &str) -> Result<MapSpec> {
    let doc: MapDoc = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    let n = doc.targets.len();
    let labels = match doc.labels {
        Some(l) => {
            check_len(n, l.len())?;
            l
        }
        None => (0..n).map(|i| i.to_string()).collect(),
    };
    let index: HashMap<&str, usize> = labels.iter().enumerate().map(|(i, l)| (l.as_str(), i)).collect();
    if index.len() != n {
        return Err(Error::invalid("labels", "labels must be unique"));
    }
    let target = doc
        .targets
        .iter()
        .enumerate()
        .map(|(i, t)| match t {
            TargetRef::Index(k) => Ok(*k),
            TargetRef::Label(l) => index
                .get(l.as_str())
                .copied()
                .ok_or_else(|| Error::invalid(format!("targets[{i}]"), format!("unknown state `{l}`"))),
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(MapSpec {
        map: FiniteMap::new(target)?,
        labels,
    })
}

/// `(U f)(y) = Σ_{S(x) = y} f(x)`.
pub fn pushforward(map: &FiniteMap, f: &[f64]) -> Result<Vec<f64>> {
    check_len(map.len(), f.len())?;
    let mut out = vec![0.0; f.len()];
    for (x, &v) in f.iter().enumerate() {
        out[map.target[x]] += v;
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PushforwardIterates {
    pub densities: Vec<Density>,
    /// `supp(Uᵗ p₀) ⊆ Sₜ(supp p₀)` at every step.
    pub support_ok: Vec<bool>,
}

/// `Uᵗ p₀` for `t = 0..=steps`, with the support inclusion checked at each step.
pub fn iterate_pushforward(map: &FiniteMap, p0: &Density, steps: usize) -> Result<PushforwardIterates> {
    check_len(map.len(), p0.len())?;
    let mut densities = vec![p0.clone()];
    let mut image: BTreeSet<usize> = p0.support().into_iter().collect();
    let mut support_ok = vec![true];
    for _ in 0..steps {
        let next = pushforward(map, densities.last().expect("non-empty").weights())?;
        image = map.image(&image);
        let d = Density::from_vec_unchecked(next);
        support_ok.push(d.support().iter().all(|x| image.contains(x)));
        densities.push(d);
    }
    Ok(PushforwardIterates {
        densities,
        support_ok,
    })
}

/// Whether `U f = f`. Integer-valued weights are compared exactly, real
/// weights within [`INVARIANCE_TOL`].
pub fn invariance_check(map: &FiniteMap, f: &[f64]) -> Result<bool> {
    if let Some(i) = f.iter().position(|&v| v < 0.0) {
        return Err(Error::invalid(format!("f[{i}]"), "weights must be nonnegative"));
    }
    let uf = pushforward(map, f)?;
    let integral = f.iter().all(|v| v.fract() == 0.0);
    let tol = if integral { 0.0 } else { INVARIANCE_TOL };
    Ok(uf.iter().zip(f).all(|(a, b)| (a - b).abs() <= tol))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProbeStep {
    pub t: usize,
    pub mass: f64,
    pub image_set: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "SCREAMING-KEBAB-CASE")]
pub enum ExactnessVerdict {
    ExactOnA,
    NotExactOnA,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExactnessProbe {
    pub steps: Vec<ProbeStep>,
    /// `(start, period)` of the eventual cycle of image sets, if it was
    /// reached within the horizon.
    pub cycle: Option<(usize, usize)>,
    pub verdict: ExactnessVerdict,
}

/// Tracks `μ₀(Sₜ(A))` for `t = 0..=horizon`. The verdict holds for this set
/// only; once the image sets repeat, the cycle decides it for all later times.
pub fn exactness_probe(map: &FiniteMap, mu0: &Density, set: &BTreeSet<usize>, horizon: usize) -> Result<ExactnessProbe> {
    check_len(map.len(), mu0.len())?;
    if !invariance_check(map, mu0.weights())? {
        return Err(Error::invalid("mu0", "measure is not invariant under the map"));
    }
    if let Some(&x) = set.iter().find(|&&x| x >= map.len()) {
        return Err(Error::invalid("A", format!("state {x} out of range")));
    }
    let w = mu0.weights();
    let mass_of = |s: &BTreeSet<usize>| s.iter().map(|&x| w[x]).sum::<f64>();
    if mass_of(set) <= 0.0 {
        return Err(Error::invalid("A", "probe set has zero measure"));
    }
    let mut seen: HashMap<BTreeSet<usize>, usize> = HashMap::new();
    let mut steps = Vec::with_capacity(horizon + 1);
    let mut cycle = None;
    let mut current = set.clone();
    for t in 0..=horizon {
        if cycle.is_none() {
            if let Some(&start) = seen.get(&current) {
                cycle = Some((start, t - start));
            } else {
                seen.insert(current.clone(), t);
            }
        }
        steps.push(ProbeStep {
            t,
            mass: mass_of(&current),
            image_set: current.iter().copied().collect(),
        });
        current = map.image(&current);
    }
    let reached = |m: f64| m >= 1.0 - EXACTNESS_TOL;
    let exact = match cycle {
        // every set on the cycle recurs forever
        Some((start, _)) => steps[start..].iter().all(|s| reached(s.mass)),
        None => {
            let first = steps.iter().position(|s| reached(s.mass));
            first.is_some_and(|k| steps[k..].iter().all(|s| reached(s.mass)))
        }
    };
    Ok(ExactnessProbe {
        steps,
        cycle,
        verdict: if exact {
            ExactnessVerdict::ExactOnA
        } else {
            ExactnessVerdict::NotExactOnA
        },
    })
}
