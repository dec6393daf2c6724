use std::collections::BTreeSet;

use serde_json::{json, Value};

use mtherm_core::kinetics::{detailed_balance_residual, equilibrium_constants};
use mtherm_core::sampler::{compare_marginals, paths_to_csv, residence_estimate, ssa_ensemble};
use mtherm_core::semigroup::{evolve_grid, evolve_grid_expm, stability_certificate, transition_kernel};
use mtherm_core::thermo::{
    boltzmann_entropy, entropy_balance, gibbs_distribution, gibbs_residence_report, mean_energy,
    permissibility_audit,
};
use mtherm_core::transfer::{exactness_probe, invariance_check, iterate_pushforward, load_map};
use mtherm_core::{arrhenius_rates, Landscape, Trajectory, SCHEMA_VERSION};

use crate::input;
use crate::{AuditArgs, EngineChoice, Failure, GibbsArgs, GridArgs, SampleArgs, SimulateArgs, StabilityArgs, TransferArgs};

/// Largest L1 gap tolerated between the two engines under `--engine both`.
const ENGINE_AGREEMENT_TOL: f64 = 1e-6;

type Outcome = Result<u8, Failure>;

fn pretty(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("JSON values always serialize");
    s.push('\n');
    s
}

fn fmt(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn gibbs(args: &GibbsArgs) -> Outcome {
    let l = input::landscape(&args.landscape)?;
    let rs = arrhenius_rates(&l)?;
    let report = gibbs_distribution(&l);
    let table = equilibrium_constants(&rs, &l)?;
    let balance = detailed_balance_residual(&rs, &report.pi)?;
    let residence = gibbs_residence_report(&rs, &report, l.nu())?;
    let doc = pretty(&json!({
        "schema_version": SCHEMA_VERSION,
        "labels": l.labels(),
        "gibbs": report,
        "equilibrium_constants": table,
        "detailed_balance": balance,
        "residence": residence,
    }));
    print!("{doc}");
    if let Some(dir) = &args.out {
        input::write(dir, "gibbs.json", &doc)?;
        input::write(dir, "rates.csv", &rs.to_csv())?;
        let mut side = rs.sidecar_json();
        side["schema_version"] = json!(SCHEMA_VERSION);
        side["labels"] = json!(l.labels());
        input::write(dir, "rates.json", &pretty(&side))?;
    }
    Ok(0)
}

fn run_engines(l: &Landscape, grid: &GridArgs, engine: EngineChoice) -> Result<Trajectory, Failure> {
    let rs = arrhenius_rates(l)?;
    let p0 = input::initial_density(&grid.p0, l.labels())?;
    let times = input::time_grid(grid)?;
    match engine {
        EngineChoice::Expm => Ok(evolve_grid_expm(&rs, &p0, &times)?),
        EngineChoice::Rk => Ok(evolve_grid(&rs, &p0, &times)?),
        EngineChoice::Both => {
            let ex = evolve_grid_expm(&rs, &p0, &times)?;
            let rk = evolve_grid(&rs, &p0, &times)?;
            for ((t, a), b) in times.iter().zip(&ex.densities).zip(&rk.densities) {
                let gap = a.l1_distance(b);
                if gap > ENGINE_AGREEMENT_TOL {
                    return Err(Failure::numerical(format!(
                        "engines disagree at t = {t}: L1 gap {gap:e} exceeds {ENGINE_AGREEMENT_TOL:e}"
                    )));
                }
            }
            Ok(ex)
        }
    }
}

/// Columns `t, p_<label>…, E, S, F` followed by the balance of the interval
/// ending at that row (blank on the first row).
fn trajectory_csv(traj: &Trajectory, l: &Landscape) -> Result<String, Failure> {
    let rows = entropy_balance_or_empty(traj, l)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["t".to_string()];
    header.extend(l.labels().iter().map(|s| format!("p_{s}")));
    header.extend(
        ["E", "S", "F", "dE", "dS", "dF", "deltaQ", "delta_eS", "delta_iS"]
            .iter()
            .map(|s| s.to_string()),
    );
    let csv_err = |e: csv::Error| Failure::input(e.to_string());
    w.write_record(&header).map_err(csv_err)?;
    let theta = l.theta();
    for (k, (t, p)) in traj.times.iter().zip(&traj.densities).enumerate() {
        let e = mean_energy(p, l)?;
        let s = boltzmann_entropy(p, l.k_b());
        let mut rec = vec![fmt(*t)];
        rec.extend(p.weights().iter().map(|&x| fmt(x)));
        rec.extend([fmt(e), fmt(s), fmt(e - theta * s)]);
        match k.checked_sub(1).map(|i| rows[i]) {
            Some(r) => rec.extend(
                [r.d_e, r.d_s, r.d_f, r.delta_q, r.delta_e_s, r.delta_i_s]
                    .into_iter()
                    .map(fmt),
            ),
            None => rec.extend(std::iter::repeat_n(String::new(), 6)),
        }
        w.write_record(&rec).map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| Failure::input(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("CSV output is ASCII"))
}

fn entropy_balance_or_empty(traj: &Trajectory, l: &Landscape) -> Result<Vec<mtherm_core::BalanceRow>, Failure> {
    if traj.len() < 2 {
        return Ok(Vec::new());
    }
    Ok(entropy_balance(traj, l)?)
}

pub fn simulate(args: &SimulateArgs) -> Outcome {
    let l = input::landscape(&args.landscape)?;
    let traj = run_engines(&l, &args.grid, args.engine)?;
    let csv = trajectory_csv(&traj, &l)?;
    match &args.out {
        Some(dir) => input::write(dir, "trajectory.csv", &csv)?,
        None => print!("{csv}"),
    }
    Ok(0)
}

pub fn audit(args: &AuditArgs) -> Outcome {
    let l = input::landscape(&args.landscape)?;
    let traj = match &args.trajectory {
        Some(path) => input::trajectory(path, l.labels())?,
        None => run_engines(&l, &args.grid, args.engine)?,
    };
    let report = permissibility_audit(&traj, &l)?;
    let mut doc = report.to_json();
    doc["engine"] = json!(traj.engine);
    let doc = pretty(&doc);
    print!("{doc}");
    if let Some(dir) = &args.out {
        input::write(dir, "audit.json", &doc)?;
    }
    if !report.verdict {
        let v = report.first_violation.expect("a failed audit names its violation");
        eprintln!(
            "mtherm: audit FAIL: free energy rises by {:e} on interval {} (tolerance {:e})",
            v.d_f, v.interval, v.tol
        );
        return Ok(3);
    }
    Ok(0)
}

pub fn sample(args: &SampleArgs) -> Outcome {
    let l = input::landscape(&args.landscape)?;
    let rs = arrhenius_rates(&l)?;
    let p0 = input::initial_density(&args.grid.p0, l.labels())?;
    let times = input::time_grid(&args.grid)?;
    if args.paths == 0 {
        return Err(Failure::input("--paths must be ≥ 1"));
    }
    let t_end = *times.last().expect("validated grid is nonempty");
    let paths = ssa_ensemble(&rs, &p0, args.paths, t_end, args.seed)?;
    let marginals = compare_marginals(&rs, &p0, &paths, &times)?;
    let residence: Vec<Value> = (0..l.len())
        .map(|x| {
            let est = residence_estimate(&paths, x);
            let exact = rs.residence()[x];
            json!({
                "label": l.labels()[x],
                "mean": (est.completed > 0).then_some(est.mean),
                "std_error": (est.completed > 1).then_some(est.std_error),
                "completed": est.completed,
                "exact": exact.is_finite().then_some(exact),
            })
        })
        .collect();
    let doc = pretty(&json!({
        "schema_version": SCHEMA_VERSION,
        "labels": l.labels(),
        "seed": args.seed,
        "paths": args.paths,
        "t_end": t_end,
        "marginals": marginals,
        "all_within_3_sigma": marginals.iter().all(|m| m.within_3_sigma),
        "residence": residence,
    }));
    print!("{doc}");
    if let Some(dir) = &args.out {
        input::write(dir, "sample.json", &doc)?;
        input::write(dir, "paths.csv", &paths_to_csv(&paths, l.labels()))?;
    }
    Ok(0)
}

pub fn stability(args: &StabilityArgs) -> Outcome {
    let l = input::landscape(&args.landscape)?;
    let rs = arrhenius_rates(&l)?;
    let cert = stability_certificate(&rs, args.t0)?;
    let mut doc = serde_json::to_value(&cert).expect("certificate serializes");
    doc["schema_version"] = json!(SCHEMA_VERSION);
    doc["labels"] = json!(l.labels());
    let doc = pretty(&doc);
    print!("{doc}");
    if let Some(dir) = &args.out {
        input::write(dir, "stability.json", &doc)?;
        input::write(dir, "kernel.csv", &transition_kernel(&rs, args.t0)?.to_csv())?;
    }
    Ok(0)
}

fn probe_set(spec: &str, labels: &[String]) -> Result<BTreeSet<usize>, Failure> {
    let list = spec
        .strip_prefix("A=")
        .ok_or_else(|| Failure::input(format!("--set: expected `A=<labels>`, got `{spec}`")))?;
    list.split(',')
        .filter(|s| !s.is_empty())
        .map(|s| {
            labels
                .iter()
                .position(|l| l == s)
                .ok_or_else(|| Failure::input(format!("--set: unknown state label `{s}`")))
        })
        .collect()
}

pub fn transfer(args: &TransferArgs) -> Outcome {
    let spec = load_map(&input::read(&args.map)?)?;
    let p0 = input::initial_density(&args.p0, &spec.labels)?;
    let iterates = iterate_pushforward(&spec.map, &p0, args.steps)?;
    let rows: Vec<Value> = iterates
        .densities
        .iter()
        .zip(&iterates.support_ok)
        .enumerate()
        .map(|(t, (d, ok))| json!({ "t": t, "density": d, "support_ok": ok }))
        .collect();
    let probe = match &args.set {
        Some(s) => {
            let set = probe_set(s, &spec.labels)?;
            Some(exactness_probe(&spec.map, &p0, &set, args.steps)?)
        }
        None => None,
    };
    let doc = pretty(&json!({
        "schema_version": SCHEMA_VERSION,
        "labels": spec.labels,
        "bijective": spec.map.is_bijective(),
        "p0_invariant": invariance_check(&spec.map, p0.weights())?,
        "iterates": rows,
        "probe": probe,
    }));
    print!("{doc}");
    if let Some(dir) = &args.out {
        input::write(dir, "transfer.json", &doc)?;
    }
    Ok(0)
}
