//! Result emission: a fixed-schema CSV of the result table and (x, y,
//! series) plot-data triples any plotting tool can consume.

use super::experiment::{HarnessError, ResultRow, ResultTable};
use std::path::Path;

/// Column order of the emitted CSV.
pub const CSV_COLUMNS: [&str; 15] = [
    "experiment",
    "setting",
    "setting_value",
    "model",
    "seed",
    "attack1_l1",
    "attack2_sr",
    "attack2_l1_recovered",
    "rge_l1",
    "rgu_l1",
    "rgn_l1",
    "per_feature_l1",
    "per_feature_macc",
    "wall_time_s",
    "error",
];

fn opt_cell(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

fn vec_cell(v: &[f64]) -> String {
    v.iter()
        .map(f64::to_string)
        .collect::<Vec<_>>()
        .join(";")
}

fn parse_opt(cell: &str) -> Result<Option<f64>, HarnessError> {
    if cell.is_empty() {
        return Ok(None);
    }
    cell.parse()
        .map(Some)
        .map_err(|e| HarnessError::Io(format!("bad number {cell:?}: {e}")))
}

fn parse_vec(cell: &str) -> Result<Vec<f64>, HarnessError> {
    if cell.is_empty() {
        return Ok(Vec::new());
    }
    cell.split(';')
        .map(|v| {
            v.parse()
                .map_err(|e| HarnessError::Io(format!("bad number {v:?}: {e}")))
        })
        .collect()
}

/// Write the table as CSV with the documented column order. Per-feature
/// vectors pack into one cell, semicolon-separated.
pub fn emit_csv(table: &ResultTable, path: impl AsRef<Path>) -> Result<(), HarnessError> {
    let mut writer = csv::Writer::from_path(path.as_ref())
        .map_err(|e| HarnessError::Io(format!("cannot create csv: {e}")))?;
    writer
        .write_record(CSV_COLUMNS)
        .map_err(|e| HarnessError::Io(e.to_string()))?;
    for row in &table.rows {
        writer
            .write_record([
                row.experiment.clone(),
                row.setting.clone(),
                row.setting_value.to_string(),
                row.model.clone(),
                row.seed.to_string(),
                opt_cell(row.attack1_l1),
                opt_cell(row.attack2_sr),
                opt_cell(row.attack2_l1_recovered),
                row.rge_l1.to_string(),
                row.rgu_l1.to_string(),
                row.rgn_l1.to_string(),
                vec_cell(&row.per_feature_l1),
                vec_cell(&row.per_feature_macc),
                row.wall_time_s.to_string(),
                row.error.clone().unwrap_or_default(),
            ])
            .map_err(|e| HarnessError::Io(e.to_string()))?;
    }
    writer.flush().map_err(|e| HarnessError::Io(e.to_string()))
}

/// Parse a CSV produced by [`emit_csv`].
pub fn read_csv(path: impl AsRef<Path>) -> Result<ResultTable, HarnessError> {
    let mut reader = csv::Reader::from_path(path.as_ref())
        .map_err(|e| HarnessError::Io(format!("cannot open csv: {e}")))?;
    let headers = reader
        .headers()
        .map_err(|e| HarnessError::Io(e.to_string()))?
        .clone();
    if headers.iter().ne(CSV_COLUMNS) {
        return Err(HarnessError::Io(format!(
            "unexpected csv schema: {headers:?}"
        )));
    }
    let mut rows = Vec::new();
    for record in reader.records() {
        let r = record.map_err(|e| HarnessError::Io(e.to_string()))?;
        let field = |i: usize| r.get(i).unwrap_or_default();
        rows.push(ResultRow {
            experiment: field(0).to_owned(),
            setting: field(1).to_owned(),
            setting_value: field(2)
                .parse()
                .map_err(|e| HarnessError::Io(format!("setting_value: {e}")))?,
            model: field(3).to_owned(),
            seed: field(4)
                .parse()
                .map_err(|e| HarnessError::Io(format!("seed: {e}")))?,
            attack1_l1: parse_opt(field(5))?,
            attack2_sr: parse_opt(field(6))?,
            attack2_l1_recovered: parse_opt(field(7))?,
            rge_l1: field(8)
                .parse()
                .map_err(|e| HarnessError::Io(format!("rge_l1: {e}")))?,
            rgu_l1: field(9)
                .parse()
                .map_err(|e| HarnessError::Io(format!("rgu_l1: {e}")))?,
            rgn_l1: field(10)
                .parse()
                .map_err(|e| HarnessError::Io(format!("rgn_l1: {e}")))?,
            per_feature_l1: parse_vec(field(11))?,
            per_feature_macc: parse_vec(field(12))?,
            wall_time_s: field(13)
                .parse()
                .map_err(|e| HarnessError::Io(format!("wall_time_s: {e}")))?,
            error: match field(14) {
                "" => None,
                e => Some(e.to_owned()),
            },
        });
    }
    Ok(ResultTable { rows })
}

/// Metrics [`emit_plotdata`] can extract.
pub const PLOT_METRICS: [&str; 6] = [
    "attack1_l1",
    "attack2_sr",
    "attack2_l1_recovered",
    "rge_l1",
    "rgu_l1",
    "rgn_l1",
];

/// Emit `(x, y, series)` triples for one metric: x is the swept setting
/// value, y the metric, series `experiment/model`.
pub fn emit_plotdata(
    table: &ResultTable,
    metric: &str,
    path: impl AsRef<Path>,
) -> Result<(), HarnessError> {
    let extract = |row: &ResultRow| -> Option<f64> {
        match metric {
            "attack1_l1" => row.attack1_l1,
            "attack2_sr" => row.attack2_sr,
            "attack2_l1_recovered" => row.attack2_l1_recovered,
            "rge_l1" => Some(row.rge_l1),
            "rgu_l1" => Some(row.rgu_l1),
            "rgn_l1" => Some(row.rgn_l1),
            _ => None,
        }
    };
    if !PLOT_METRICS.contains(&metric) {
        return Err(HarnessError::BadConfig(format!(
            "unknown metric {metric:?}; choose one of {PLOT_METRICS:?}"
        )));
    }
    let mut writer = csv::Writer::from_path(path.as_ref())
        .map_err(|e| HarnessError::Io(format!("cannot create plot data: {e}")))?;
    writer
        .write_record(["x", "y", "series"])
        .map_err(|e| HarnessError::Io(e.to_string()))?;
    for row in &table.rows {
        if let Some(y) = extract(row) {
            writer
                .write_record([
                    row.setting_value.to_string(),
                    y.to_string(),
                    format!("{}/{}", row.experiment, row.model),
                ])
                .map_err(|e| HarnessError::Io(e.to_string()))?;
        }
    }
    writer.flush().map_err(|e| HarnessError::Io(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_table() -> ResultTable {
        ResultTable {
            rows: vec![
                ResultRow {
                    experiment: "queries".into(),
                    setting: "queries=100".into(),
                    setting_value: 100.0,
                    model: "mlp".into(),
                    seed: 0,
                    attack1_l1: Some(0.12),
                    attack2_sr: Some(0.45),
                    attack2_l1_recovered: Some(0.08),
                    rge_l1: 0.31,
                    rgu_l1: 0.34,
                    rgn_l1: 0.29,
                    per_feature_l1: vec![0.1, 0.2],
                    per_feature_macc: vec![0.5, 0.01],
                    wall_time_s: 1.25,
                    error: None,
                },
                ResultRow {
                    experiment: "queries".into(),
                    setting: "queries=200".into(),
                    setting_value: 200.0,
                    model: "gbdt".into(),
                    seed: 1,
                    attack1_l1: None,
                    attack2_sr: None,
                    attack2_l1_recovered: None,
                    rge_l1: 0.3,
                    rgu_l1: 0.33,
                    rgn_l1: 0.28,
                    per_feature_l1: vec![],
                    per_feature_macc: vec![],
                    wall_time_s: 0.5,
                    error: Some("boom".into()),
                },
            ],
        }
    }

    #[test]
    fn csv_roundtrip_recovers_the_table() {
        let table = sample_table();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        emit_csv(&table, &path).unwrap();
        assert_eq!(read_csv(&path).unwrap(), table);
    }

    #[test]
    fn empty_table_is_header_only() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        emit_csv(&ResultTable::default(), &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 1);
        assert_eq!(text.lines().next().unwrap(), CSV_COLUMNS.join(","));
    }

    #[test]
    fn plotdata_emits_triples() {
        let table = sample_table();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("plot.csv");
        emit_plotdata(&table, "attack1_l1", &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "x,y,series");
        // The second row has no attack1 value and is skipped.
        assert_eq!(lines.len(), 2);
        assert_eq!(lines[1], "100,0.12,queries/mlp");
        assert!(emit_plotdata(&table, "nope", dir.path().join("x.csv")).is_err());
    }
}
