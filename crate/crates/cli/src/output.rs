//! CSV emission. Floats carry 17 significant digits so values round-trip.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use tvmfg::{Grid, IterationRecord, Termination};

use crate::CliError;

pub fn float(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|source| CliError::Io {
        path: dir.to_path_buf(),
        source,
    })
}

/// Writes `header` and `rows` to `dir/name`, returning the path.
pub fn write_csv<I>(dir: &Path, name: &str, header: &[&str], rows: I) -> Result<PathBuf, CliError>
where
    I: IntoIterator<Item = Vec<String>>,
{
    let path = dir.join(name);
    let io = |source| CliError::Io {
        path: path.clone(),
        source,
    };
    let mut w = BufWriter::new(File::create(&path).map_err(io)?);
    writeln!(w, "{}", header.join(",")).map_err(io)?;
    for row in rows {
        writeln!(w, "{}", row.join(",")).map_err(io)?;
    }
    w.flush().map_err(io)?;
    Ok(path)
}

/// Coordinate columns followed by `names`.
pub fn field_header(grid: &Grid, names: &[&'static str]) -> Vec<&'static str> {
    let coords: &[&str] = if grid.dim() == 1 { &["x"] } else { &["x", "y"] };
    coords.iter().chain(names).copied().collect()
}

/// One row per node: coordinates, then the value of every column.
pub fn field_rows<'a>(
    grid: &'a Grid,
    columns: &'a [&'a [f64]],
) -> impl Iterator<Item = Vec<String>> + 'a {
    (0..grid.len()).map(move |i| {
        let (x, y) = grid.coords(i);
        let mut row = vec![float(x)];
        if grid.dim() == 2 {
            row.push(float(y));
        }
        row.extend(columns.iter().map(|c| float(c[i])));
        row
    })
}

pub const ITERATION_HEADER: &[&str] = &[
    "iter",
    "epsilon",
    "residual",
    "sup_theta",
    "min_theta_supp",
    "tv_step",
    "mass_cum",
    "halvings",
];

pub fn iteration_row(r: &IterationRecord) -> Vec<String> {
    vec![
        r.iter.to_string(),
        float(r.epsilon),
        float(r.residual),
        float(r.sup_theta),
        float(r.min_theta_supp),
        float(r.tv_step),
        float(r.mass_cum),
        r.halvings.to_string(),
    ]
}

pub fn termination_name(t: &Termination) -> &'static str {
    match t {
        Termination::Converged => "converged",
        Termination::Stationary => "stationary",
        Termination::MaxOuter => "max-outer",
        Termination::StepExhausted => "step-exhausted",
        Termination::StepFailed(_) => "step-failed",
    }
}
