//! External load time series.
//!
//! One row per time step and one column per node. A column headed `p_<id>`
//! or `<id>` belongs to node `<id>`; other columns (a timestamp, say) are
//! ignored unless an explicit column map names them. Values are loads in
//! the file's own unit: they are detrended, divided by the per-unit base and
//! negated to give injections.

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::grid::{Grid, NodeId};
use crate::powerflow::noise::detrend_matrix;
use crate::powerflow::Injections;

#[derive(Clone, Debug, PartialEq)]
pub struct LoadCsvOptions {
    /// Load value corresponding to one per-unit.
    pub base: f64,
    /// Node to column header. Without it, headers are matched by node id.
    pub columns: Option<BTreeMap<NodeId, String>>,
}

impl Default for LoadCsvOptions {
    fn default() -> Self {
        LoadCsvOptions {
            base: 1.0,
            columns: None,
        }
    }
}

fn node_of_header(h: &str) -> Option<NodeId> {
    h.trim().strip_prefix("p_").unwrap_or(h.trim()).parse().ok()
}

/// Reads a load file into active injections over [`Grid::labels`].
/// Zero-injection nodes get zero; reactive injections are zero.
pub fn ingest_load_csv(path: impl AsRef<Path>, grid: &Grid, opts: &LoadCsvOptions) -> Result<Injections> {
    let path = path.as_ref();
    let origin = path.display().to_string();
    if !(opts.base > 0.0) {
        return Err(Error::InvalidArgument("per-unit base must be positive".into()));
    }
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            other => Error::Parse {
                path: origin.clone(),
                line: 1,
                message: format!("{other:?}"),
            },
        })?;
    let headers = reader
        .headers()
        .map_err(|e| Error::Parse {
            path: origin.clone(),
            line: 1,
            message: e.to_string(),
        })?
        .clone();

    let excited = grid.excited();
    let mut column_of: BTreeMap<NodeId, usize> = BTreeMap::new();
    let mut unmapped = Vec::new();
    for &id in &excited {
        let found = match &opts.columns {
            Some(map) => map
                .get(&id)
                .and_then(|name| headers.iter().position(|h| h == name)),
            None => headers.iter().position(|h| node_of_header(h) == Some(id)),
        };
        match found {
            Some(c) => {
                column_of.insert(id, c);
            }
            None => unmapped.push(id),
        }
    }
    if !unmapped.is_empty() {
        let list: Vec<String> = unmapped.iter().map(|u| u.to_string()).collect();
        return Err(Error::InvalidArgument(format!(
            "{origin}: no load column for excited nodes {}",
            list.join(", ")
        )));
    }

    let labels = grid.labels();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::Parse {
            path: origin.clone(),
            line: e.position().map_or(0, |p| p.line() as usize),
            message: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        let mut row = vec![0.0; labels.len()];
        for (k, id) in labels.iter().enumerate() {
            if let Some(&c) = column_of.get(id) {
                let cell = record.get(c).unwrap_or("");
                row[k] = cell.parse().map_err(|_| Error::Parse {
                    path: origin.clone(),
                    line,
                    message: format!("column `{}`: non-numeric value `{cell}`", &headers[c]),
                })?;
            }
        }
        rows.push(row);
    }
    if rows.len() < 3 {
        return Err(Error::TooFewSamples {
            needed: 3,
            got: rows.len(),
        });
    }
    let mut p = DMatrix::from_fn(rows.len(), labels.len(), |r, c| rows[r][c]);
    detrend_matrix(&mut p);
    p /= -opts.base;
    for (k, id) in labels.iter().enumerate() {
        if column_of.contains_key(id) && p.column(k).amax() == 0.0 {
            log::warn!(
                "{origin}: load of node {id} is constant; its injection variance is zero and the excited-node covariance will be singular"
            );
        }
    }
    let q = DMatrix::zeros(p.nrows(), p.ncols());
    Ok(Injections { p, q, labels })
}

/// Writes active injections as loads (`-p * base`) with `p_<id>` headers
/// for the given nodes.
pub fn write_load_csv(injections: &Injections, nodes: &[NodeId], base: f64, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let cols = crate::linalg::positions(&injections.labels, nodes)?;
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Numerical(e.to_string()))?;
    let header: Vec<String> = std::iter::once("t".to_string())
        .chain(nodes.iter().map(|id| format!("p_{id}")))
        .collect();
    let io = |e: csv::Error| Error::Numerical(format!("writing {}: {e}", path.display()));
    w.write_record(&header).map_err(io)?;
    for r in 0..injections.p.nrows() {
        let row: Vec<String> = std::iter::once(r.to_string())
            .chain(cols.iter().map(|&c| (-injections.p[(r, c)] * base).to_string()))
            .collect();
        w.write_record(&row).map_err(io)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::fixtures;
    use crate::powerflow::{sample_injections, InjectionModel};
    use std::fs;

    #[test]
    fn round_trip_preserves_statistics() {
        let g = fixtures::g3();
        let inj = sample_injections(&InjectionModel::gaussian(&g, 0.1), 500, 4).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("loads.csv");
        write_load_csv(&inj, &g.excited(), 250.0, &path).unwrap();
        let back = ingest_load_csv(&path, &g, &LoadCsvOptions { base: 250.0, columns: None }).unwrap();
        assert_eq!(back.labels, inj.labels);
        let mut expected = inj.p.clone();
        detrend_matrix(&mut expected);
        assert!((back.p - expected).amax() < 1e-12);
        assert_eq!(back.q.amax(), 0.0);
    }

    #[test]
    fn zero_injection_columns_stay_zero() {
        let g = fixtures::g3();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("loads.csv");
        fs::write(&path, "p_1,p_2,p_3\n1,5,2\n2,6,1\n4,7,3\n3,1,1\n").unwrap();
        let inj = ingest_load_csv(&path, &g, &LoadCsvOptions::default()).unwrap();
        let u = inj.labels.iter().position(|&l| l == 2).unwrap();
        assert_eq!(inj.p.column(u).amax(), 0.0);
    }

    #[test]
    fn reports_missing_columns_and_bad_cells() {
        let g = fixtures::gstar();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("loads.csv");
        fs::write(&path, "t,p_2\n0,1\n1,2\n2,3\n").unwrap();
        let e = ingest_load_csv(&path, &g, &LoadCsvOptions::default()).unwrap_err().to_string();
        assert!(e.contains("3, 4"), "{e}");

        fs::write(&path, "p_2,p_3,p_4\n1,2,3\n1,x,3\n1,2,3\n").unwrap();
        let e = ingest_load_csv(&path, &g, &LoadCsvOptions::default()).unwrap_err().to_string();
        assert!(e.contains(":3") && e.contains("p_3") && e.contains("`x`"), "{e}");
    }

    #[test]
    fn explicit_column_map() {
        let g = fixtures::g3();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("loads.csv");
        fs::write(&path, "west,east\n1,4\n2,4\n4,5\n").unwrap();
        let columns = BTreeMap::from([(1, "west".to_string()), (3, "east".to_string())]);
        let inj = ingest_load_csv(&path, &g, &LoadCsvOptions { base: 2.0, columns: Some(columns) }).unwrap();
        assert_eq!(inj.p.nrows(), 3);
        assert!(inj.p.amax() > 0.0);
    }
}
