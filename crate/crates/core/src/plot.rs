//! CSV output of trajectories and gnuplot scripts for the emitted files.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::integrate::Trajectory;
use crate::sampling::fmt_f64;
use crate::systems::AugmentedField;

/// Column names `x1, x2, dx1, ...` for the slots of an augmented field.
pub fn slot_columns(field: &AugmentedField<'_>) -> Vec<String> {
    field
        .layout()
        .iter()
        .flat_map(|slot| (1..=slot.range.len()).map(move |i| format!("{}{i}", slot.name)))
        .collect()
}

/// `t,<columns>` followed by one row per stored step.
pub fn trajectory_csv(traj: &Trajectory, columns: &[String]) -> Result<String> {
    if columns.len() != traj.dim() {
        return Err(Error::Dimension(format!(
            "{} column names for a {}-dimensional trajectory",
            columns.len(),
            traj.dim()
        )));
    }
    let mut out = String::from("t");
    for c in columns {
        out.push(',');
        out.push_str(c);
    }
    out.push('\n');
    for (t, y) in traj.times().iter().zip(traj.states()) {
        out.push_str(&fmt_f64(*t));
        for v in y {
            out.push(',');
            out.push_str(&fmt_f64(*v));
        }
        out.push('\n');
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlotKind {
    /// Every column against the first one.
    Timeseries,
    /// Third column (or `det` when present) over the first two.
    Heatmap,
}

impl PlotKind {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "timeseries" => Ok(PlotKind::Timeseries),
            "heatmap" => Ok(PlotKind::Heatmap),
            other => Err(Error::Invalid(format!(
                "unknown plot kind `{other}` (expected timeseries or heatmap)"
            ))),
        }
    }
}

/// Gnuplot source for a CSV with the given header.
pub fn plot_script(csv_name: &str, header: &[&str], kind: PlotKind) -> Result<String> {
    let mut s = String::new();
    let _ = writeln!(s, "set datafile separator ','");
    let png = Path::new(csv_name).with_extension("png");
    let _ = writeln!(s, "set terminal pngcairo size 900,600");
    let _ = writeln!(s, "set output '{}'", png.display());
    match kind {
        PlotKind::Timeseries => {
            if header.len() < 2 {
                return Err(Error::Invalid("timeseries needs at least two columns".into()));
            }
            let _ = writeln!(s, "set xlabel '{}'", header[0]);
            let _ = writeln!(s, "set grid");
            let series: Vec<String> = (2..=header.len())
                .map(|c| {
                    format!(
                        "'{csv_name}' skip 1 using 1:{c} with lines title '{}'",
                        header[c - 1]
                    )
                })
                .collect();
            let _ = writeln!(s, "plot {}", series.join(", \\\n     "));
        }
        PlotKind::Heatmap => {
            if header.len() < 3 {
                return Err(Error::Invalid("heatmap needs x1, x2 and a value column".into()));
            }
            let col = header.iter().position(|h| *h == "det").unwrap_or(2) + 1;
            let _ = writeln!(s, "set xlabel '{}'", header[0]);
            let _ = writeln!(s, "set ylabel '{}'", header[1]);
            let _ = writeln!(s, "set title '{}'", header[col - 1]);
            let _ = writeln!(s, "set view map");
            let _ = writeln!(s, "plot '{csv_name}' skip 1 using 1:2:{col} with image notitle");
        }
    }
    Ok(s)
}

/// Writes `<csv stem>.gp` next to the CSV and returns its path.
pub fn emit_plot_script(csv: &Path, kind: PlotKind) -> Result<PathBuf> {
    let text = std::fs::read_to_string(csv)
        .map_err(|e| Error::Invalid(format!("cannot read {}: {e}", csv.display())))?;
    let header: Vec<&str> = text
        .lines()
        .next()
        .ok_or_else(|| Error::Invalid(format!("{} is empty", csv.display())))?
        .split(',')
        .collect();
    let name = csv
        .file_name()
        .ok_or_else(|| Error::Invalid(format!("{} has no file name", csv.display())))?
        .to_string_lossy();
    let script = plot_script(&name, &header, kind)?;
    let path = csv.with_extension("gp");
    std::fs::write(&path, script)?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn timeseries_lists_every_column() {
        let s = plot_script("trajectory.csv", &["t", "x1", "x2", "dp1"], PlotKind::Timeseries).unwrap();
        assert_eq!(s.matches("with lines").count(), 3);
        assert!(s.contains("using 1:4"));
        assert!(s.contains("title 'dp1'"));
    }

    #[test]
    fn heatmap_prefers_det() {
        let s = plot_script("scan.csv", &["x1", "x2", "min_eig", "det", "status"], PlotKind::Heatmap).unwrap();
        assert!(s.contains("using 1:2:4 with image"));
        assert!(plot_script("a.csv", &["x1", "x2"], PlotKind::Heatmap).is_err());
        assert!(PlotKind::parse("surface").is_err());
    }

    #[test]
    fn missing_csv_is_an_error() {
        let p = std::env::temp_dir().join("diffbal-definitely-missing.csv");
        assert!(emit_plot_script(&p, PlotKind::Timeseries).is_err());
    }
}
