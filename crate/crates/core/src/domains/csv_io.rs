//! CSV trajectories: `traj_id,t,dim_0..dim_{D-1}`, one row per state.
//!
//! Rows of a trajectory need not be contiguous, but their `t` values must
//! strictly increase in file order. Trajectories keep the order in which
//! their ids first appear and are resampled in time to the requested horizon.

use std::collections::HashMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use crate::domains::resample_by_time;
use crate::error::{Result, TcfmError};
use crate::trajectory::Trajectory;

#[derive(Clone, Debug, PartialEq)]
pub struct CsvSchema {
    /// Expected state dimension; `None` accepts whatever the header declares.
    pub state_dim: Option<usize>,
    pub horizon: usize,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct LoadedTrajectories {
    pub ids: Vec<String>,
    pub trajectories: Vec<Trajectory>,
}

impl LoadedTrajectories {
    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }
}

pub fn load_trajectory_csv(path: &Path, schema: &CsvSchema) -> Result<LoadedTrajectories> {
    let file = File::open(path).map_err(|e| TcfmError::io(path, e))?;
    read_trajectory_csv(file, schema).map_err(|e| match e {
        TcfmError::Schema(m) => TcfmError::Schema(format!("{}: {m}", path.display())),
        TcfmError::Data(m) => TcfmError::Data(format!("{}: {m}", path.display())),
        other => other,
    })
}

fn header_dims(headers: &csv::StringRecord, first: &str, second: &str) -> Result<usize> {
    let names: Vec<&str> = headers.iter().map(str::trim).collect();
    if names.len() < 2 || names[0] != first || names[1] != second {
        return Err(TcfmError::Schema(format!("header must start with `{first},{second}`, found {:?}", names)));
    }
    for (i, name) in names[2..].iter().enumerate() {
        if *name != format!("dim_{i}") {
            return Err(TcfmError::Schema(format!("column {} should be `dim_{i}`, found `{name}`", i + 3)));
        }
    }
    if names.len() == 2 {
        return Err(TcfmError::Schema("missing state columns `dim_0..`".into()));
    }
    Ok(names.len() - 2)
}

fn parse_cell(field: &str, line: u64, column: &str) -> Result<f64> {
    let v: f64 = field
        .trim()
        .parse()
        .map_err(|_| TcfmError::Data(format!("line {line}: column `{column}` is not a number: {field:?}")))?;
    if !v.is_finite() {
        return Err(TcfmError::Data(format!("line {line}: column `{column}` is not finite: {field:?}")));
    }
    Ok(v)
}

pub fn read_trajectory_csv<R: Read>(reader: R, schema: &CsvSchema) -> Result<LoadedTrajectories> {
    if schema.horizon == 0 {
        return Err(TcfmError::Config("csv horizon must be >= 1".into()));
    }
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).flexible(true).from_reader(reader);
    let headers = rdr.headers().map_err(|e| TcfmError::Data(e.to_string()))?.clone();
    if headers.is_empty() {
        return Ok(LoadedTrajectories::default());
    }
    let dims = header_dims(&headers, "traj_id", "t")?;
    if let Some(d) = schema.state_dim {
        if d != dims {
            return Err(TcfmError::Schema(format!("file has {dims} state columns, expected {d}")));
        }
    }

    let mut order: Vec<String> = vec![];
    let mut groups: HashMap<String, (Vec<f64>, Vec<Vec<f64>>)> = HashMap::new();
    for record in rdr.records() {
        let record = record.map_err(|e| TcfmError::Data(e.to_string()))?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != dims + 2 {
            return Err(TcfmError::Schema(format!("line {line}: expected {} fields, found {}", dims + 2, record.len())));
        }
        let id = record[0].trim().to_string();
        let t = parse_cell(&record[1], line, "t")?;
        let state = (0..dims)
            .map(|d| parse_cell(&record[d + 2], line, &format!("dim_{d}")))
            .collect::<Result<Vec<_>>>()?;
        let entry = groups.entry(id.clone()).or_insert_with(|| {
            order.push(id.clone());
            (vec![], vec![])
        });
        if let Some(&prev) = entry.0.last() {
            if t <= prev {
                return Err(TcfmError::Data(format!(
                    "line {line}: time {t} of trajectory `{id}` does not increase (previous {prev})"
                )));
            }
        }
        entry.0.push(t);
        entry.1.push(state);
    }

    let mut out = LoadedTrajectories::default();
    for id in order {
        let (times, states) = &groups[&id];
        let rows = resample_by_time(times, states, schema.horizon);
        out.trajectories.push(Trajectory::from_rows(&rows)?);
        out.ids.push(id);
    }
    Ok(out)
}

/// Writes trajectories with integer time indices; ids are `0..n`.
pub fn write_trajectory_csv<W: Write>(writer: W, trajectories: &[Trajectory]) -> Result<()> {
    write_rows(writer, "traj_id", "t", trajectories)
}

/// Sample export: `sample_id,t_index,dim_0..`.
pub fn write_samples_csv<W: Write>(writer: W, samples: &[Trajectory]) -> Result<()> {
    write_rows(writer, "sample_id", "t_index", samples)
}

fn write_rows<W: Write>(writer: W, id_col: &str, t_col: &str, trajectories: &[Trajectory]) -> Result<()> {
    let dims = trajectories.first().map_or(0, Trajectory::state_dim);
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec![id_col.to_string(), t_col.to_string()];
    header.extend((0..dims).map(|d| format!("dim_{d}")));
    w.write_record(&header).map_err(csv_err)?;
    for (i, traj) in trajectories.iter().enumerate() {
        for (k, state) in traj.states().enumerate() {
            let mut row = vec![i.to_string(), k.to_string()];
            row.extend(state.iter().map(|v| v.to_string()));
            w.write_record(&row).map_err(csv_err)?;
        }
    }
    w.flush().map_err(|e| TcfmError::Data(e.to_string()))?;
    Ok(())
}

/// Contexts as `traj_id,c_0..c_{C-1}`.
pub fn write_context_csv<W: Write>(writer: W, contexts: &[Vec<f64>]) -> Result<()> {
    let width = contexts.first().map_or(0, Vec::len);
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["traj_id".to_string()];
    header.extend((0..width).map(|c| format!("c_{c}")));
    w.write_record(&header).map_err(csv_err)?;
    for (i, ctx) in contexts.iter().enumerate() {
        let mut row = vec![i.to_string()];
        row.extend(ctx.iter().map(|v| v.to_string()));
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush().map_err(|e| TcfmError::Data(e.to_string()))?;
    Ok(())
}

pub fn read_context_csv<R: Read>(reader: R) -> Result<Vec<Vec<f64>>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let headers = rdr.headers().map_err(|e| TcfmError::Data(e.to_string()))?.clone();
    if headers.get(0).map(str::trim) != Some("traj_id") {
        return Err(TcfmError::Schema("context header must start with `traj_id`".into()));
    }
    let width = headers.len() - 1;
    let mut out = vec![];
    for record in rdr.records() {
        let record = record.map_err(|e| TcfmError::Data(e.to_string()))?;
        let line = record.position().map_or(0, |p| p.line());
        out.push(
            (0..width)
                .map(|c| parse_cell(&record[c + 1], line, &format!("c_{c}")))
                .collect::<Result<Vec<_>>>()?,
        );
    }
    Ok(out)
}

fn csv_err(e: csv::Error) -> TcfmError {
    TcfmError::Data(e.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn schema(h: usize) -> CsvSchema {
        CsvSchema { state_dim: None, horizon: h }
    }

    #[test]
    fn empty_input_is_empty_dataset() {
        assert!(read_trajectory_csv("".as_bytes(), &schema(4)).unwrap().is_empty());
        assert!(read_trajectory_csv("traj_id,t,dim_0\n".as_bytes(), &schema(4)).unwrap().is_empty());
    }

    #[test]
    fn missing_column_is_schema_error() {
        let err = read_trajectory_csv("traj_id,dim_0\na,1\n".as_bytes(), &schema(2)).unwrap_err();
        assert!(matches!(err, TcfmError::Schema(_)), "{err:?}");
        let err = read_trajectory_csv("traj_id,t,dim_0,dim_1\na,0,1\n".as_bytes(), &schema(2)).unwrap_err();
        assert!(matches!(err, TcfmError::Schema(_)), "{err:?}");
    }

    #[test]
    fn nan_cell_names_line() {
        let text = "traj_id,t,dim_0\na,0,1\na,1,NaN\n";
        match read_trajectory_csv(text.as_bytes(), &schema(2)).unwrap_err() {
            TcfmError::Data(m) => assert!(m.contains("line 3"), "{m}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn non_monotone_time() {
        let text = "traj_id,t,dim_0\na,0,1\nb,0,2\na,0,3\n";
        match read_trajectory_csv(text.as_bytes(), &schema(2)).unwrap_err() {
            TcfmError::Data(m) => assert!(m.contains("line 4"), "{m}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn interleaved_ids_grouped_and_resampled() {
        let text = "traj_id,t,dim_0\nb,0,0\na,0,10\nb,2,4\na,1,11\n";
        let out = read_trajectory_csv(text.as_bytes(), &schema(3)).unwrap();
        assert_eq!(out.ids, vec!["b", "a"]);
        assert_eq!(out.trajectories[0].as_array().data(), &[0.0, 2.0, 4.0]);
        assert_eq!(out.trajectories[1].as_array().data(), &[10.0, 10.5, 11.0]);
    }

    #[test]
    fn contexts_roundtrip() {
        let ctx = vec![vec![0.1, -2.5], vec![1e-17, 3.0]];
        let mut buf = vec![];
        write_context_csv(&mut buf, &ctx).unwrap();
        assert_eq!(read_context_csv(buf.as_slice()).unwrap(), ctx);
    }
}
