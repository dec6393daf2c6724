use std::fs;
use std::path::Path;

use mtherm_core::semigroup::{validate_grid, Engine};
use mtherm_core::statespace::{density_from_counts, parse_count_row, parse_density, validate_density};
use mtherm_core::{Density, Landscape, Trajectory};

use crate::{Failure, GridArgs};

pub fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::input(format!("{}: {e}", path.display())))
}

pub fn write(dir: &Path, name: &str, contents: &str) -> Result<(), Failure> {
    fs::create_dir_all(dir).map_err(|e| Failure::input(format!("{}: {e}", dir.display())))?;
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|e| Failure::input(format!("{}: {e}", path.display())))
}

pub fn landscape(path: &Path) -> Result<Landscape, Failure> {
    Ok(mtherm_core::load_landscape(&read(path)?)?)
}

/// Resolves a `--p0` selector against the given state labels.
pub fn initial_density(spec: &str, labels: &[String]) -> Result<Density, Failure> {
    let n = labels.len();
    if spec == "uniform" {
        return Ok(Density::uniform(n));
    }
    let (kind, arg) = spec
        .split_once(':')
        .ok_or_else(|| Failure::input(format!("--p0: unrecognized selector `{spec}`")))?;
    match kind {
        "point" => labels
            .iter()
            .position(|l| l == arg)
            .map(|i| Density::point_mass(n, i))
            .ok_or_else(|| Failure::input(format!("--p0: unknown state label `{arg}`"))),
        "file" => Ok(parse_density(&read(Path::new(arg))?, n)?),
        "counts" => {
            let counts = parse_count_row(&read(Path::new(arg))?)?;
            if counts.len() != n {
                return Err(Failure::input(format!("--p0: expected {n} counts, got {}", counts.len())));
            }
            Ok(density_from_counts(&counts)?)
        }
        _ => Err(Failure::input(format!("--p0: unrecognized selector `{spec}`"))),
    }
}

/// `0, dt, 2dt, …` up to and including `t_max`, or the contents of `--grid`.
pub fn time_grid(args: &GridArgs) -> Result<Vec<f64>, Failure> {
    let grid = match &args.grid {
        Some(path) => parse_grid(&read(path)?)?,
        None => {
            if !(args.t_max > 0.0 && args.t_max.is_finite()) {
                return Err(Failure::input(format!("--t-max must be > 0, got {}", args.t_max)));
            }
            if !(args.dt > 0.0 && args.dt.is_finite()) {
                return Err(Failure::input(format!("--dt must be > 0, got {}", args.dt)));
            }
            let steps = ((args.t_max / args.dt) - 1e-9).ceil().max(1.0) as usize;
            (0..steps).map(|k| k as f64 * args.dt).chain([args.t_max]).collect()
        }
    };
    validate_grid(&grid)?;
    Ok(grid)
}

fn parse_grid(text: &str) -> Result<Vec<f64>, Failure> {
    let t = text.trim();
    if t.starts_with('[') {
        return serde_json::from_str(t).map_err(|e| Failure::input(format!("--grid: {e}")));
    }
    t.lines()
        .filter(|l| !l.trim_start().starts_with('#'))
        .flat_map(|l| l.split(|c: char| c == ',' || c.is_whitespace()))
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<f64>().map_err(|e| Failure::input(format!("--grid: `{s}`: {e}"))))
        .collect()
}

/// Reads the `t` and `p_<label>` columns of a trajectory CSV; other columns are ignored.
pub fn trajectory(path: &Path, labels: &[String]) -> Result<Trajectory, Failure> {
    let text = read(path)?;
    let bad = |e: csv::Error| Failure::input(format!("{}: {e}", path.display()));
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let headers = rdr.headers().map_err(bad)?.clone();
    let column = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Failure::input(format!("{}: missing column `{name}`", path.display())))
    };
    let t_col = column("t")?;
    let p_cols = labels
        .iter()
        .map(|l| column(&format!("p_{l}")))
        .collect::<Result<Vec<_>, _>>()?;
    let mut times = Vec::new();
    let mut densities = Vec::new();
    for (row, record) in rdr.records().enumerate() {
        let record = record.map_err(bad)?;
        let cell = |c: usize| {
            let s = record.get(c).unwrap_or("");
            s.trim()
                .parse::<f64>()
                .map_err(|e| Failure::input(format!("{}: row {}: `{s}`: {e}", path.display(), row + 1)))
        };
        times.push(cell(t_col)?);
        let w = p_cols.iter().map(|&c| cell(c)).collect::<Result<Vec<_>, _>>()?;
        densities.push(validate_density(&w, labels.len())?);
    }
    Ok(Trajectory::new(times, densities, Engine::External)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(t_max: f64, dt: f64) -> Vec<f64> {
        let args = GridArgs {
            p0: "uniform".into(),
            t_max,
            dt,
            grid: None,
        };
        time_grid(&args).unwrap()
    }

    #[test]
    fn grid_ends_at_t_max() {
        let g = grid(1.0, 0.1);
        assert_eq!(g.len(), 11);
        assert_eq!(g[10], 1.0);
        let g = grid(1.0, 0.3);
        assert_eq!(g, vec![0.0, 0.3, 0.6, 0.8999999999999999, 1.0]);
        assert_eq!(grid(0.5, 2.0), vec![0.0, 0.5]);
    }

    #[test]
    fn grid_file_formats() {
        assert_eq!(parse_grid("[0, 0.5, 2]").unwrap(), vec![0.0, 0.5, 2.0]);
        assert_eq!(parse_grid("# times\n0\n1.5\n3\n").unwrap(), vec![0.0, 1.5, 3.0]);
        assert_eq!(parse_grid("0, 1 ,2").unwrap(), vec![0.0, 1.0, 2.0]);
        assert!(parse_grid("0, x").is_err());
    }

    #[test]
    fn density_selectors() {
        let labels = vec!["A".to_string(), "B".to_string()];
        assert_eq!(initial_density("uniform", &labels).unwrap().weights(), [0.5, 0.5]);
        assert_eq!(initial_density("point:B", &labels).unwrap().weights(), [0.0, 1.0]);
        assert_eq!(initial_density("point:C", &labels).unwrap_err().code, 1);
        assert_eq!(initial_density("gauss", &labels).unwrap_err().code, 1);

        let dir = tempfile::tempdir().unwrap();
        let counts = dir.path().join("c.csv");
        fs::write(&counts, "3,1\n").unwrap();
        let p = initial_density(&format!("counts:{}", counts.display()), &labels).unwrap();
        assert_eq!(p.weights(), [0.75, 0.25]);
        let file = dir.path().join("p.json");
        fs::write(&file, "[0.2, 0.8]").unwrap();
        let p = initial_density(&format!("file:{}", file.display()), &labels).unwrap();
        assert_eq!(p.weights(), [0.2, 0.8]);
    }
}
