//! CSV emission and parsing. Floats print with 17 significant digits so
//! every value round-trips exactly; every file carries a header row.

use porodiff::entropy::DiagnosticsRecord;
use porodiff::grid::{FieldSet, Grid};
use porodiff::solver::Trajectory;

use crate::config::ConfigError;

/// 17-significant-digit scientific form (round-trip exact for f64).
pub fn fmt(v: f64) -> String {
    if v.is_nan() {
        "NaN".to_string()
    } else if v.is_infinite() {
        if v > 0.0 {
            "inf".to_string()
        } else {
            "-inf".to_string()
        }
    } else {
        format!("{v:.16e}")
    }
}

/// Header label for a norm exponent (`p1`, `p2.5`, `pinf`).
pub fn p_label(p: f64) -> String {
    if p.is_infinite() {
        "pinf".to_string()
    } else if p.fract() == 0.0 {
        format!("p{}", p as i64)
    } else {
        format!("p{p}")
    }
}

/// Diagnostics table: `t, E, D, rel_E, <per-law mass>, <per-p distance>,
/// <per-species min/max>, <ratio columns>`.
pub fn diagnostics_csv(
    records: &[DiagnosticsRecord],
    mass_labels: &[String],
    species_labels: &[String],
    p_norms: &[f64],
) -> String {
    let mut header = vec![
        "t".to_string(),
        "E".to_string(),
        "D".to_string(),
        "rel_E".to_string(),
    ];
    header.extend(mass_labels.iter().cloned());
    header.extend(p_norms.iter().map(|&p| format!("dist_{}", p_label(p))));
    for s in species_labels {
        header.push(format!("min_{s}"));
        header.push(format!("max_{s}"));
    }
    header.extend(species_labels.iter().map(|s| format!("lsi_{s}")));
    header.push("eep_ratio".to_string());
    header.push("ckp_ratio".to_string());

    let mut out = header.join(",");
    out.push('\n');
    for rec in records {
        let mut row = vec![
            fmt(rec.t),
            fmt(rec.entropy),
            fmt(rec.production),
            fmt(rec.rel_entropy),
        ];
        row.extend(rec.masses.iter().map(|&v| fmt(v)));
        row.extend(rec.lp_distances.iter().map(|&v| fmt(v)));
        for &(lo, hi) in &rec.extrema {
            row.push(fmt(lo));
            row.push(fmt(hi));
        }
        row.extend(rec.lsi_ratios.iter().map(|&v| fmt(v)));
        row.push(fmt(rec.eep_ratio));
        row.push(fmt(rec.ckp_ratio));
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

/// Trajectory table: one row per cell per stored snapshot
/// (`t, cell, x[, y], <species values>`).
pub fn trajectory_csv(traj: &Trajectory, species_labels: &[String]) -> String {
    let two_d = traj.grid.dim() == 2;
    let mut header = vec!["t".to_string(), "cell".to_string(), "x".to_string()];
    if two_d {
        header.push("y".to_string());
    }
    header.extend(species_labels.iter().cloned());
    let mut out = header.join(",");
    out.push('\n');
    for (t, fields) in &traj.snapshots {
        for cell in 0..fields.cells() {
            let (x, y) = traj.grid.cell_center(cell);
            let mut row = vec![fmt(*t), cell.to_string(), fmt(x)];
            if two_d {
                row.push(fmt(y));
            }
            for s in 0..fields.species() {
                row.push(fmt(fields.field(s)[cell]));
            }
            out.push_str(&row.join(","));
            out.push('\n');
        }
    }
    out
}

/// Reads a trajectory table back into time-stamped field sets. The grid
/// fixes the expected cell count; species count comes from the header.
pub fn parse_trajectory_csv(text: &str, grid: &Grid) -> Result<Vec<(f64, FieldSet)>, ConfigError> {
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| ConfigError("empty trajectory file".into()))?;
    let columns: Vec<&str> = header.split(',').collect();
    let coord_cols = if grid.dim() == 2 { 4 } else { 3 };
    if columns.len() <= coord_cols || columns[0] != "t" || columns[1] != "cell" || columns[2] != "x"
    {
        return Err(ConfigError(format!(
            "unexpected trajectory header `{header}`"
        )));
    }
    let species = columns.len() - coord_cols;
    let cells = grid.cells();
    let mut frames: Vec<(f64, Vec<Vec<f64>>)> = Vec::new();
    for (lineno, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != columns.len() {
            return Err(ConfigError(format!(
                "trajectory line {}: {} fields, header has {}",
                lineno + 2,
                parts.len(),
                columns.len()
            )));
        }
        let parse = |s: &str| -> Result<f64, ConfigError> {
            s.parse::<f64>().map_err(|_| {
                ConfigError(format!("trajectory line {}: bad float `{s}`", lineno + 2))
            })
        };
        let t = parse(parts[0])?;
        let cell: usize = parts[1]
            .parse()
            .map_err(|_| ConfigError(format!("trajectory line {}: bad cell index", lineno + 2)))?;
        if frames.last().map(|(ft, _)| *ft != t).unwrap_or(true) {
            frames.push((t, vec![Vec::with_capacity(cells); species]));
        }
        let frame = &mut frames.last_mut().unwrap().1;
        if cell != frame[0].len() {
            return Err(ConfigError(format!(
                "trajectory line {}: cell {} out of order (expected {})",
                lineno + 2,
                cell,
                frame[0].len()
            )));
        }
        for s in 0..species {
            frame[s].push(parse(parts[coord_cols + s])?);
        }
    }
    let mut out = Vec::with_capacity(frames.len());
    for (t, fields) in frames {
        if fields[0].len() != cells {
            return Err(ConfigError(format!(
                "snapshot at t = {t} has {} cells, grid has {cells}",
                fields[0].len()
            )));
        }
        let set = FieldSet::from_fields(fields).map_err(|e| ConfigError(e.to_string()))?;
        out.push((t, set));
    }
    if out.is_empty() {
        return Err(ConfigError("trajectory file contains no rows".into()));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float_format_round_trips() {
        for v in [0.1, 1.0 / 3.0, 2.0_f64.sqrt(), 1e-300, -4.625] {
            let s = fmt(v);
            let back: f64 = s.parse().unwrap();
            assert_eq!(v, back, "{s}");
        }
        assert_eq!(fmt(f64::NAN), "NaN");
        assert_eq!(fmt(f64::INFINITY), "inf");
    }

    #[test]
    fn p_labels() {
        assert_eq!(p_label(1.0), "p1");
        assert_eq!(p_label(2.5), "p2.5");
        assert_eq!(p_label(f64::INFINITY), "pinf");
    }
}
