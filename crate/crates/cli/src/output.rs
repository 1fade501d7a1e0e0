//! CSV writers.
//!
//! Numbers are formatted with the shortest representation that parses back
//! to the same value, so files are byte-identical across runs, platforms and
//! parallelism degrees for a fixed configuration and seed.

use anyhow::{Context, Result};
use dexpsim::dde::DdeSolution;
use dexpsim::model::ModelSpec;
use dexpsim::ssa::{EnsembleSummary, Trajectory};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

pub fn write_deterministic(path: &Path, spec: &ModelSpec, sol: &DdeSolution) -> Result<()> {
    let mut w = writer(path)?;
    let names: Vec<&str> = spec.compartments.iter().map(|c| c.name.as_str()).collect();
    writeln!(w, "t,{}", names.join(","))?;
    for &t in &spec.record_grid {
        write!(w, "{t}")?;
        for c in 0..spec.n_compartments() {
            write!(w, ",{}", sol.eval(c, t))?;
        }
        writeln!(w)?;
    }
    Ok(w.flush()?)
}

pub fn write_ensemble(path: &Path, spec: &ModelSpec, summary: &EnsembleSummary) -> Result<()> {
    let mut w = writer(path)?;
    let header: Vec<String> = spec
        .compartments
        .iter()
        .flat_map(|c| {
            ["mean", "std", "stderr"]
                .iter()
                .map(move |s| format!("{}_{s}", c.name))
        })
        .collect();
    writeln!(w, "t,{}", header.join(","))?;
    for (j, &t) in summary.grid.iter().enumerate() {
        write!(w, "{t}")?;
        for c in 0..spec.n_compartments() {
            write!(
                w,
                ",{},{},{}",
                summary.mean_at(j, c),
                summary.variance_at(j, c).sqrt(),
                summary.stderr_at(j, c)
            )?;
        }
        writeln!(w)?;
    }
    Ok(w.flush()?)
}

pub fn write_path(path: &Path, spec: &ModelSpec, traj: &Trajectory) -> Result<()> {
    let mut w = writer(path)?;
    let names: Vec<&str> = spec.compartments.iter().map(|c| c.name.as_str()).collect();
    writeln!(w, "t,{}", names.join(","))?;
    for (j, &t) in traj.grid.iter().enumerate() {
        write!(w, "{t}")?;
        for &count in traj.counts_at(j) {
            write!(w, ",{count}")?;
        }
        writeln!(w)?;
    }
    Ok(w.flush()?)
}

/// Write generic rows to a file, or to stdout when no path is given.
pub fn write_csv(
    path: Option<&Path>,
    header: &str,
    rows: impl Iterator<Item = String>,
) -> Result<()> {
    match path {
        Some(p) => {
            let mut w = writer(p)?;
            writeln!(w, "{header}")?;
            for row in rows {
                writeln!(w, "{row}")?;
            }
            Ok(w.flush()?)
        }
        None => {
            let stdout = std::io::stdout();
            let mut w = BufWriter::new(stdout.lock());
            writeln!(w, "{header}")?;
            for row in rows {
                writeln!(w, "{row}")?;
            }
            Ok(w.flush()?)
        }
    }
}

fn writer(path: &Path) -> Result<BufWriter<File>> {
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(file))
}
