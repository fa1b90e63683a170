//! Long-format CSV panels (`time,row,col,value`): ingest with per-row transforms and
//! demeaning, and export.

use std::collections::{BTreeMap, HashMap};
use std::io::{Read, Write};
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::model::MatrixSeries;

pub const SCHEMA_VERSION: &str = "v1";

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Transform {
    #[default]
    None,
    /// First difference.
    Diff,
    /// First difference of natural logs.
    Logdiff,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSpec {
    pub path: PathBuf,
    /// Row labels in model order; defaults to order of first appearance.
    #[serde(default)]
    pub row_order: Option<Vec<String>>,
    #[serde(default)]
    pub col_order: Option<Vec<String>>,
    /// Transform per row label; unlisted rows are left as they are.
    #[serde(default)]
    pub transforms: BTreeMap<String, Transform>,
    #[serde(default = "yes")]
    pub demean: bool,
}

fn yes() -> bool {
    true
}

impl DatasetSpec {
    pub fn new(path: impl Into<PathBuf>) -> Self {
        Self { path: path.into(), row_order: None, col_order: None, transforms: BTreeMap::new(), demean: true }
    }
}

/// A labelled panel.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub series: MatrixSeries,
    pub row_labels: Vec<String>,
    pub col_labels: Vec<String>,
    pub times: Vec<String>,
    /// Steps applied after parsing, in order.
    pub pipeline: Vec<String>,
}

#[derive(Debug, Deserialize)]
struct Record {
    time: String,
    row: String,
    col: String,
    value: f64,
}

fn first_appearance<'a>(it: impl Iterator<Item = &'a str>) -> Vec<String> {
    let mut seen = std::collections::HashSet::new();
    it.filter(|s| seen.insert(*s)).map(str::to_string).collect()
}

fn check_order(given: &Option<Vec<String>>, found: Vec<String>, what: &str) -> Result<Vec<String>> {
    let Some(order) = given else { return Ok(found) };
    let mut sorted = order.clone();
    sorted.sort();
    if sorted.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::Data(format!("duplicate label in {what} order")));
    }
    for f in &found {
        if !order.contains(f) {
            return Err(Error::Data(format!("{what} label '{f}' in the data is missing from the declared {what} order")));
        }
    }
    Ok(order.clone())
}

pub fn ingest(spec: &DatasetSpec) -> Result<Dataset> {
    let file = std::fs::File::open(&spec.path)
        .map_err(|e| Error::Data(format!("cannot open {}: {e}", spec.path.display())))?;
    ingest_reader(file, spec)
}

/// Same as [`ingest`] but reads from `reader`; `spec.path` is ignored.
pub fn ingest_reader<R: Read>(reader: R, spec: &DatasetSpec) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != ["time", "row", "col", "value"] {
        return Err(Error::Data(format!("expected header time,row,col,value, found {}", headers.iter().collect::<Vec<_>>().join(","))));
    }
    let records: Vec<Record> = rdr.deserialize().collect::<std::result::Result<_, _>>()?;
    if records.is_empty() {
        return Err(Error::Data("no observations".into()));
    }
    let times = first_appearance(records.iter().map(|r| r.time.as_str()));
    let rows = check_order(&spec.row_order, first_appearance(records.iter().map(|r| r.row.as_str())), "row")?;
    let cols = check_order(&spec.col_order, first_appearance(records.iter().map(|r| r.col.as_str())), "col")?;
    for label in spec.transforms.keys() {
        if !rows.contains(label) {
            return Err(Error::Data(format!("transform given for unknown row '{label}'")));
        }
    }
    let ti: HashMap<&str, usize> = times.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
    let ri: HashMap<&str, usize> = rows.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
    let ci: HashMap<&str, usize> = cols.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
    let (n1, n2) = (rows.len(), cols.len());
    let mut cells: Vec<Option<f64>> = vec![None; times.len() * n1 * n2];
    for r in &records {
        let idx = (ti[r.time.as_str()] * n1 + ri[r.row.as_str()]) * n2 + ci[r.col.as_str()];
        if cells[idx].replace(r.value).is_some() {
            return Err(Error::Data(format!("duplicate cell (time {}, row {}, col {})", r.time, r.row, r.col)));
        }
    }
    let mut data = Vec::with_capacity(times.len());
    for (t, time) in times.iter().enumerate() {
        let mut m = Mat::zeros(n1, n2);
        for i in 0..n1 {
            for k in 0..n2 {
                m[(i, k)] = cells[(t * n1 + i) * n2 + k]
                    .ok_or_else(|| Error::Data(format!("missing cell (time {time}, row {}, col {})", rows[i], cols[k])))?;
            }
        }
        data.push(m);
    }

    let mut pipeline = vec![];
    let transforms: Vec<Transform> = rows.iter().map(|r| spec.transforms.get(r).copied().unwrap_or_default()).collect();
    let mut times = times;
    if transforms.iter().any(|t| *t != Transform::None) {
        for (i, tr) in transforms.iter().enumerate() {
            if *tr == Transform::Logdiff {
                for (t, m) in data.iter().enumerate() {
                    for k in 0..n2 {
                        if m[(i, k)] <= 0.0 {
                            return Err(Error::Data(format!(
                                "logdiff needs positive values, found {} at (time {}, row {}, col {})",
                                m[(i, k)],
                                times[t],
                                rows[i],
                                cols[k]
                            )));
                        }
                    }
                }
            }
        }
        if data.len() < 2 {
            return Err(Error::Data("differencing needs at least two time points".into()));
        }
        let mut out = Vec::with_capacity(data.len() - 1);
        for t in 1..data.len() {
            let mut m = data[t].clone();
            for (i, tr) in transforms.iter().enumerate() {
                for k in 0..n2 {
                    m[(i, k)] = match tr {
                        Transform::None => data[t][(i, k)],
                        Transform::Diff => data[t][(i, k)] - data[t - 1][(i, k)],
                        Transform::Logdiff => data[t][(i, k)].ln() - data[t - 1][(i, k)].ln(),
                    };
                }
            }
            out.push(m);
        }
        data = out;
        times.remove(0);
        for (r, tr) in rows.iter().zip(&transforms) {
            if *tr != Transform::None {
                pipeline.push(format!("{}({r})", format!("{tr:?}").to_lowercase()));
            }
        }
        pipeline.push("drop first time point".into());
    }
    if spec.demean {
        let mut mean = Mat::zeros(n1, n2);
        for m in &data {
            mean += m;
        }
        mean /= data.len() as f64;
        for m in data.iter_mut() {
            *m -= &mean;
        }
        pipeline.push("demean".into());
    }
    Ok(Dataset { series: MatrixSeries::new(data)?, row_labels: rows, col_labels: cols, times, pipeline })
}

/// Writes the series in long format, values in shortest round-trip notation.
pub fn export_long<W: Write>(series: &MatrixSeries, row_labels: &[String], col_labels: &[String], times: &[String], out: W) -> Result<()> {
    if row_labels.len() != series.n1() || col_labels.len() != series.n2() || times.len() != series.len() {
        return Err(Error::InvalidArgument("label counts do not match the series".into()));
    }
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["time", "row", "col", "value"])?;
    for (t, m) in series.observations().iter().enumerate() {
        for (i, r) in row_labels.iter().enumerate() {
            for (k, c) in col_labels.iter().enumerate() {
                w.write_record([times[t].as_str(), r, c, &format!("{:?}", m[(i, k)])])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Wraps a serializable artifact with the schema version.
#[derive(Debug, Serialize, Deserialize)]
pub struct Artifact<T> {
    pub schema: String,
    pub kind: String,
    #[serde(flatten)]
    pub body: T,
}

impl<T: Serialize> Artifact<T> {
    pub fn new(kind: &str, body: T) -> Self {
        Self { schema: SCHEMA_VERSION.to_string(), kind: kind.to_string(), body }
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }
}

/// Parses an artifact, rejecting other schema versions and kinds.
pub fn read_artifact<T: for<'de> Deserialize<'de>>(text: &str, kind: &str) -> Result<T> {
    let a: Artifact<serde_json::Value> = serde_json::from_str(text)?;
    if a.schema != SCHEMA_VERSION {
        return Err(Error::Data(format!("unsupported schema '{}', expected '{SCHEMA_VERSION}'", a.schema)));
    }
    if a.kind != kind {
        return Err(Error::Data(format!("expected a {kind} artifact, found {}", a.kind)));
    }
    Ok(serde_json::from_value(a.body)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::report::default_labels;

    fn spec() -> DatasetSpec {
        DatasetSpec::new("unused.csv")
    }

    fn csv_of(rows: &[(&str, &str, &str, f64)]) -> String {
        let mut s = "time,row,col,value\n".to_string();
        for (t, r, c, v) in rows {
            s.push_str(&format!("{t},{r},{c},{v}\n"));
        }
        s
    }

    #[test]
    fn constant_series_demeans_to_zero() {
        let text = csv_of(&[("1", "a", "x", 5.0), ("2", "a", "x", 5.0), ("3", "a", "x", 5.0)]);
        let d = ingest_reader(text.as_bytes(), &spec()).unwrap();
        assert!(d.series.observations().iter().all(|m| m[(0, 0)] == 0.0));
        assert_eq!(d.pipeline, ["demean"]);
    }

    #[test]
    fn logdiff_of_geometric_growth() {
        let text = csv_of(&[("1", "g", "x", 100.0), ("2", "g", "x", 110.0), ("3", "g", "x", 121.0)]);
        let mut s = spec();
        s.demean = false;
        s.transforms.insert("g".into(), Transform::Logdiff);
        let d = ingest_reader(text.as_bytes(), &s).unwrap();
        assert_eq!(d.series.len(), 2);
        for m in d.series.observations() {
            assert!((m[(0, 0)] - 1.1f64.ln()).abs() < 1e-12);
        }
        s.demean = true;
        let d = ingest_reader(text.as_bytes(), &s).unwrap();
        for m in d.series.observations() {
            assert!(m[(0, 0)].abs() < 1e-12);
        }
        assert_eq!(d.times, ["2", "3"]);
    }

    #[test]
    fn mixed_transforms_shorten_uniformly() {
        let mut rows = vec![];
        let times: Vec<String> = (0..117).map(|t| format!("q{t}")).collect();
        for (t, time) in times.iter().enumerate() {
            for (r, base) in [("GDP", 100.0), ("PROD", 50.0), ("IR", 3.0)] {
                for c in ["USA", "DEU", "FRA", "GBR"] {
                    rows.push((time.as_str(), r, c, base * (1.0 + 0.01 * t as f64)));
                }
            }
        }
        let mut s = spec();
        s.transforms.insert("GDP".into(), Transform::Logdiff);
        s.transforms.insert("PROD".into(), Transform::Logdiff);
        s.transforms.insert("IR".into(), Transform::Diff);
        s.col_order = Some(vec!["USA".into(), "DEU".into(), "FRA".into(), "GBR".into()]);
        let d = ingest_reader(csv_of(&rows).as_bytes(), &s).unwrap();
        assert_eq!(d.series.len(), 116);
        assert_eq!((d.series.n1(), d.series.n2()), (3, 4));
        assert_eq!(d.row_labels, ["GDP", "PROD", "IR"]);
    }

    #[test]
    fn declared_order_permutes() {
        let text = csv_of(&[("1", "a", "x", 1.0), ("1", "b", "x", 2.0), ("2", "a", "x", 3.0), ("2", "b", "x", 4.0)]);
        let mut s = spec();
        s.demean = false;
        s.row_order = Some(vec!["b".into(), "a".into()]);
        let d = ingest_reader(text.as_bytes(), &s).unwrap();
        assert_eq!(d.series.get(0)[(0, 0)], 2.0);
        assert_eq!(d.series.get(1)[(1, 0)], 3.0);
        s.row_order = Some(vec!["b".into()]);
        assert!(ingest_reader(text.as_bytes(), &s).is_err());
    }

    #[test]
    fn errors_name_the_problem() {
        let text = csv_of(&[("1", "a", "x", 1.0), ("1", "a", "y", 1.0), ("2", "a", "x", 1.0)]);
        let e = ingest_reader(text.as_bytes(), &spec()).unwrap_err().to_string();
        assert!(e.contains("missing cell (time 2, row a, col y)"), "{e}");

        let text = csv_of(&[("1", "a", "x", 1.0), ("2", "a", "x", 0.0)]);
        let mut s = spec();
        s.transforms.insert("a".into(), Transform::Logdiff);
        let e = ingest_reader(text.as_bytes(), &s).unwrap_err().to_string();
        assert!(e.contains("positive") && e.contains("time 2"), "{e}");

        let text = csv_of(&[("1", "a", "x", 1.0), ("1", "a", "x", 2.0)]);
        assert!(ingest_reader(text.as_bytes(), &spec()).unwrap_err().to_string().contains("duplicate"));
        assert!(ingest_reader("t,r,c,v\n".as_bytes(), &spec()).is_err());
        s.transforms.insert("zzz".into(), Transform::Diff);
        assert!(ingest_reader(csv_of(&[("1", "a", "x", 1.0)]).as_bytes(), &s).is_err());
    }

    #[test]
    fn export_then_ingest_is_identity() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let data: Vec<Mat> = (0..20).map(|_| Mat::from_fn(3, 4, |_, _| rng.random::<f64>() * 1e3 - 5e2)).collect();
        let series = MatrixSeries::new(data).unwrap();
        let (r, c, t) = (default_labels("r", 3), default_labels("c", 4), default_labels("", 20));
        let mut buf = vec![];
        export_long(&series, &r, &c, &t, &mut buf).unwrap();
        let mut s = spec();
        s.demean = false;
        let back = ingest_reader(buf.as_slice(), &s).unwrap();
        assert_eq!(back.series, series);
        assert_eq!(back.times, t);
    }

    #[test]
    fn artifact_schema() {
        let a = Artifact::new("thing", serde_json::json!({"x": 1}));
        let text = a.to_json().unwrap();
        assert!(text.contains("\"schema\": \"v1\""));
        let v: serde_json::Value = read_artifact(&text, "thing").unwrap();
        assert_eq!(v["x"], 1);
        assert!(read_artifact::<serde_json::Value>(&text, "other").is_err());
        assert!(read_artifact::<serde_json::Value>(&text.replace("v1", "v0"), "thing").is_err());
    }
}
