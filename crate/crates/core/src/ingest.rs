//! CSV ingestion of trajectory datasets (noisy position readings with
//! optional ground truth) and export of synthetic trajectories in the same
//! format.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::scenario::Trajectory;

/// Which CSV columns hold time, observations and (optionally) ground truth.
#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSchema {
    pub time_column: String,
    pub observation_columns: Vec<String>,
    #[serde(default)]
    pub truth_columns: Vec<String>,
    /// Free-form unit label, e.g. "m".
    #[serde(default)]
    pub units: Option<String>,
}

impl DatasetSchema {
    pub fn new(time: &str, observations: &[&str], truth: &[&str]) -> Self {
        Self {
            time_column: time.to_owned(),
            observation_columns: observations.iter().map(|s| s.to_string()).collect(),
            truth_columns: truth.iter().map(|s| s.to_string()).collect(),
            units: None,
        }
    }

    /// Reads a TOML sidecar such as
    ///
    /// ```toml
    /// time_column = "t"
    /// observation_columns = ["gps_x", "gps_y"]
    /// truth_columns = ["gt_x", "gt_y"]
    /// units = "m"
    /// ```
    pub fn from_toml_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let schema: Self = toml::from_str(text).map_err(|e| Error::InvalidConfig(format!("dataset schema: {e}")))?;
        if schema.observation_columns.is_empty() {
            return Err(Error::InvalidConfig(
                "dataset schema names no observation columns".into(),
            ));
        }
        Ok(schema)
    }
}

/// Observations on a uniform time grid, with optional ground truth on the
/// same grid.
#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryDataset {
    pub times: Vec<f64>,
    /// T×n observations.
    pub observations: DMatrix<f64>,
    /// T×p ground-truth values, if the schema named any.
    pub truth: Option<DMatrix<f64>>,
    /// Rows skipped because a required cell was missing or unparseable.
    pub dropped_rows: usize,
    pub units: Option<String>,
}

impl TrajectoryDataset {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Median sampling interval, or `None` for fewer than two samples.
    pub fn sample_interval(&self) -> Option<f64> {
        median_interval(&self.times)
    }

    /// Replaces `truth` with values interpolated from a separate, finer or
    /// differently sampled truth timeline.
    pub fn attach_truth(&mut self, truth_times: &[f64], truth_values: &DMatrix<f64>) -> Result<()> {
        self.truth = Some(align_ground_truth(&self.times, truth_times, truth_values)?);
        Ok(())
    }
}

struct Rows {
    times: Vec<f64>,
    values: Vec<Vec<f64>>,
    dropped: usize,
}

fn column_index(headers: &csv::StringRecord, name: &str) -> Result<usize> {
    headers
        .iter()
        .position(|h| h.trim() == name)
        .ok_or_else(|| Error::Parse {
            row: 0,
            column: name.to_owned(),
            message: "column not found in header".into(),
        })
}

/// Reads `time` plus `columns` from every row, dropping rows with missing or
/// non-numeric cells, and checks that time strictly increases.
fn read_rows(reader: impl Read, time: &str, columns: &[String]) -> Result<Rows> {
    let mut rdr = csv::ReaderBuilder::new()
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| Error::Parse {
            row: 0,
            column: String::new(),
            message: e.to_string(),
        })?
        .clone();
    let time_idx = column_index(&headers, time)?;
    let idx = columns
        .iter()
        .map(|c| column_index(&headers, c))
        .collect::<Result<Vec<_>>>()?;

    let parse = |rec: &csv::StringRecord, i: usize| -> Option<f64> {
        rec.get(i).and_then(|s| s.parse::<f64>().ok()).filter(|v| v.is_finite())
    };
    let mut rows = Rows {
        times: Vec::new(),
        values: Vec::new(),
        dropped: 0,
    };
    for (line, rec) in rdr.records().enumerate() {
        let row = line + 1;
        let rec = match rec {
            Ok(r) => r,
            Err(e) if e.is_io_error() => {
                return Err(Error::Parse {
                    row,
                    column: String::new(),
                    message: e.to_string(),
                })
            }
            Err(_) => {
                rows.dropped += 1;
                continue;
            }
        };
        let parsed = parse(&rec, time_idx).zip(idx.iter().map(|&i| parse(&rec, i)).collect::<Option<Vec<_>>>());
        let Some((t, vals)) = parsed else {
            rows.dropped += 1;
            continue;
        };
        if let Some(&prev) = rows.times.last() {
            if t <= prev {
                return Err(Error::NonMonotonicTime { row });
            }
        }
        rows.times.push(t);
        rows.values.push(vals);
    }
    if rows.times.is_empty() {
        return Err(Error::EmptyDataset);
    }
    Ok(rows)
}

fn median_interval(times: &[f64]) -> Option<f64> {
    if times.len() < 2 {
        return None;
    }
    let mut d: Vec<f64> = times.windows(2).map(|w| w[1] - w[0]).collect();
    d.sort_by(f64::total_cmp);
    let mid = d.len() / 2;
    Some(if d.len().is_multiple_of(2) {
        0.5 * (d[mid - 1] + d[mid])
    } else {
        d[mid]
    })
}

/// Indices of the samples nearest to each point of a uniform grid with the
/// median spacing, starting at the first sample. `None` if the grid would
/// select every sample exactly once (already uniform).
fn uniform_selection(times: &[f64]) -> Option<(Vec<f64>, Vec<usize>)> {
    let dt = median_interval(times)?;
    let (t0, t_end) = (times[0], *times.last().unwrap());
    let steps = ((t_end - t0) / dt + 1e-9).floor() as usize;
    let mut grid = Vec::with_capacity(steps + 1);
    let mut picks = Vec::with_capacity(steps + 1);
    let mut j = 0;
    for i in 0..=steps {
        let g = t0 + i as f64 * dt;
        while j + 1 < times.len() && (times[j + 1] - g).abs() <= (times[j] - g).abs() {
            j += 1;
        }
        grid.push(g);
        picks.push(j);
    }
    if picks.len() == times.len() && picks.iter().enumerate().all(|(i, &p)| i == p) {
        None
    } else {
        Some((grid, picks))
    }
}

/// Loads a dataset from CSV. Rows with missing or malformed cells are
/// dropped and counted; observations are resampled onto a uniform grid with
/// the median sampling interval by nearest-sample selection.
pub fn load_csv(path: impl AsRef<Path>, schema: &DatasetSchema) -> Result<TrajectoryDataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    load_csv_from_reader(file, schema)
}

pub fn load_csv_from_reader(reader: impl Read, schema: &DatasetSchema) -> Result<TrajectoryDataset> {
    if schema.observation_columns.is_empty() {
        return Err(Error::InvalidConfig(
            "dataset schema names no observation columns".into(),
        ));
    }
    let columns: Vec<String> = schema
        .observation_columns
        .iter()
        .chain(schema.truth_columns.iter())
        .cloned()
        .collect();
    let rows = read_rows(reader, &schema.time_column, &columns)?;
    let (times, picks) = match uniform_selection(&rows.times) {
        Some((grid, picks)) => (grid, picks),
        None => (rows.times.clone(), (0..rows.times.len()).collect()),
    };
    let n = schema.observation_columns.len();
    let p = schema.truth_columns.len();
    let observations = DMatrix::from_fn(picks.len(), n, |i, k| rows.values[picks[i]][k]);
    let truth = (p > 0).then(|| DMatrix::from_fn(picks.len(), p, |i, k| rows.values[picks[i]][n + k]));
    Ok(TrajectoryDataset {
        times,
        observations,
        truth,
        dropped_rows: rows.dropped,
        units: schema.units.clone(),
    })
}

/// Loads a ground-truth timeline without resampling, for use with
/// [`align_ground_truth`].
pub fn load_truth_csv(
    path: impl AsRef<Path>,
    time_column: &str,
    columns: &[String],
) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let rows = read_rows(file, time_column, columns)?;
    let values = DMatrix::from_fn(rows.times.len(), columns.len(), |i, k| rows.values[i][k]);
    Ok((rows.times, values))
}

/// Linearly interpolates truth rows onto the observation timestamps.
pub fn align_ground_truth(obs_times: &[f64], truth_times: &[f64], truth: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if truth.nrows() != truth_times.len() {
        return Err(Error::dims("truth rows", truth_times.len(), truth.nrows()));
    }
    if truth_times.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if let Some(i) = truth_times.windows(2).position(|w| w[1] <= w[0]) {
        return Err(Error::NonMonotonicTime { row: i + 2 });
    }
    let (start, end) = (truth_times[0], *truth_times.last().unwrap());
    let mut out = DMatrix::zeros(obs_times.len(), truth.ncols());
    for (i, &t) in obs_times.iter().enumerate() {
        if !(t >= start && t <= end) {
            return Err(Error::OutOfRange { time: t, start, end });
        }
        // First knot at or after t.
        let hi = truth_times.partition_point(|&k| k < t);
        if truth_times[hi] == t {
            out.set_row(i, &truth.row(hi));
            continue;
        }
        let lo = hi - 1;
        let w = (t - truth_times[lo]) / (truth_times[hi] - truth_times[lo]);
        let row = truth.row(lo) * (1.0 - w) + truth.row(hi) * w;
        out.set_row(i, &row);
    }
    Ok(out)
}

/// Column names used by [`write_trajectory_csv`]: `t`, `y0..`, `x0..`.
pub fn trajectory_schema(obs_dim: usize, state_dim: usize) -> DatasetSchema {
    DatasetSchema {
        time_column: "t".into(),
        observation_columns: (0..obs_dim).map(|k| format!("y{k}")).collect(),
        truth_columns: (0..state_dim).map(|k| format!("x{k}")).collect(),
        units: None,
    }
}

/// Writes a trajectory as CSV with time `t · tau`. Floats use the shortest
/// representation that parses back to the same value.
pub fn write_trajectory_csv(writer: impl Write, trajectory: &Trajectory, tau: f64) -> Result<()> {
    let schema = trajectory_schema(trajectory.observations.ncols(), trajectory.states.ncols());
    let mut w = csv::Writer::from_writer(writer);
    let header: Vec<&str> = std::iter::once(schema.time_column.as_str())
        .chain(schema.observation_columns.iter().map(String::as_str))
        .chain(schema.truth_columns.iter().map(String::as_str))
        .collect();
    let to_err = |e: csv::Error| Error::io("<trajectory csv>", std::io::Error::other(e));
    w.write_record(&header).map_err(to_err)?;
    for t in 0..trajectory.len() {
        let record: Vec<String> = std::iter::once(t as f64 * tau)
            .chain(trajectory.observations.row(t).iter().copied())
            .chain(trajectory.states.row(t).iter().copied())
            .map(|v| v.to_string())
            .collect();
        w.write_record(&record).map_err(to_err)?;
    }
    w.flush().map_err(|e| Error::io("<trajectory csv>", e))
}

pub fn export_trajectory(path: impl AsRef<Path>, trajectory: &Trajectory, tau: f64) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_trajectory_csv(std::io::BufWriter::new(file), trajectory, tau)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn load(text: &str, schema: &DatasetSchema) -> Result<TrajectoryDataset> {
        load_csv_from_reader(text.as_bytes(), schema)
    }

    #[test]
    fn well_formed_file() {
        let schema = DatasetSchema::new("t", &["gps"], &["gt"]);
        let ds = load("t,gps,gt\n0,1.5,1\n1,2.5,2\n2,3.25,3\n", &schema).unwrap();
        assert_eq!(ds.len(), 3);
        assert_eq!(ds.dropped_rows, 0);
        assert_eq!(ds.observations.column(0).as_slice(), &[1.5, 2.5, 3.25]);
        assert_eq!(ds.truth.unwrap().column(0).as_slice(), &[1.0, 2.0, 3.0]);
    }

    #[test]
    fn malformed_row_is_dropped_and_counted() {
        let schema = DatasetSchema::new("t", &["gps"], &[]);
        let ds = load("t,gps\n0,1.0\n1,oops\n2,3.0\n", &schema).unwrap();
        assert_eq!(ds.dropped_rows, 1);
        assert_eq!(ds.len(), 2);
        let ds = load("t,gps\n0,1.0\n1\n2,3.0\n", &schema).unwrap();
        assert_eq!(ds.dropped_rows, 1);
        assert_eq!(ds.len(), 2);
    }

    #[test]
    fn non_monotonic_time_is_an_error() {
        let schema = DatasetSchema::new("t", &["gps"], &[]);
        let err = load("t,gps\n0,1\n2,1\n1,1\n", &schema).unwrap_err();
        assert!(matches!(err, Error::NonMonotonicTime { row: 3 }), "{err}");
    }

    #[test]
    fn empty_dataset_is_an_error() {
        let schema = DatasetSchema::new("t", &["gps"], &[]);
        assert!(matches!(load("t,gps\n", &schema), Err(Error::EmptyDataset)));
        assert!(matches!(load("t,gps\nx,y\n", &schema), Err(Error::EmptyDataset)));
    }

    #[test]
    fn missing_column_is_a_parse_error() {
        let schema = DatasetSchema::new("t", &["gps"], &[]);
        assert!(matches!(
            load("t,other\n0,1\n", &schema),
            Err(Error::Parse { row: 0, .. })
        ));
    }

    #[test]
    fn irregular_sampling_is_resampled_by_nearest_sample() {
        let schema = DatasetSchema::new("t", &["y"], &[]);
        // Median spacing 1.0; the gap between 3 and 5 gets a grid point at
        // 4 filled from the nearer sample (tie goes to the later one).
        let ds = load("t,y\n0,10\n1,11\n2,12\n3,13\n5,15\n", &schema).unwrap();
        assert_eq!(ds.times, vec![0.0, 1.0, 2.0, 3.0, 4.0, 5.0]);
        assert_eq!(
            ds.observations.column(0).as_slice(),
            &[10.0, 11.0, 12.0, 13.0, 15.0, 15.0]
        );
        assert_eq!(ds.sample_interval(), Some(1.0));
    }

    #[test]
    fn truth_interpolation() {
        let truth = DMatrix::from_column_slice(2, 1, &[0.0, 4.0]);
        let out = align_ground_truth(&[1.0], &[0.0, 2.0], &truth).unwrap();
        assert_eq!(out[(0, 0)], 2.0);
        let out = align_ground_truth(&[0.0, 2.0], &[0.0, 2.0], &truth).unwrap();
        assert_eq!(out.column(0).as_slice(), &[0.0, 4.0]);
        let err = align_ground_truth(&[3.0], &[0.0, 2.0], &truth).unwrap_err();
        assert!(matches!(err, Error::OutOfRange { .. }));
    }

    #[test]
    fn schema_from_toml() {
        let s = DatasetSchema::from_toml_str(
            "time_column = \"t\"\nobservation_columns = [\"a\", \"b\"]\ntruth_columns = [\"c\"]\nunits = \"m\"\n",
        )
        .unwrap();
        assert_eq!(s.observation_columns, vec!["a", "b"]);
        assert_eq!(s.units.as_deref(), Some("m"));
        assert!(DatasetSchema::from_toml_str("time_column = \"t\"\nobservation_columns = []\n").is_err());
    }
}
