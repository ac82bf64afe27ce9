use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::grid::NodeId;

/// Provenance recorded alongside samples.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SampleMeta {
    pub model: String,
    pub seed: Option<u64>,
    /// Relative noise variance that was added.
    pub noise: f64,
}

/// `T x N` phase samples (radians from the reference) and optional
/// magnitude deviations from 1.0 per unit. Column `k` is node `labels[k]`.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleSet {
    pub theta: DMatrix<f64>,
    pub v: Option<DMatrix<f64>>,
    pub labels: Vec<NodeId>,
    pub meta: SampleMeta,
}

impl SampleSet {
    /// Number of samples `T`.
    pub fn len(&self) -> usize {
        self.theta.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Number of observed nodes.
    pub fn dim(&self) -> usize {
        self.labels.len()
    }

    /// First `t` samples.
    pub fn truncate(&self, t: usize) -> SampleSet {
        let t = t.min(self.len());
        SampleSet {
            theta: self.theta.rows(0, t).into_owned(),
            v: self.v.as_ref().map(|v| v.rows(0, t).into_owned()),
            labels: self.labels.clone(),
            meta: self.meta.clone(),
        }
    }

    /// Keeps only the listed nodes, in the given order.
    pub fn select(&self, keep: &[NodeId]) -> Result<SampleSet> {
        let idx = crate::linalg::positions(&self.labels, keep)?;
        let pick = |m: &DMatrix<f64>| m.select_columns(idx.iter());
        Ok(SampleSet {
            theta: pick(&self.theta),
            v: self.v.as_ref().map(pick),
            labels: keep.to_vec(),
            meta: self.meta.clone(),
        })
    }
}

fn meta_line(meta: &SampleMeta) -> String {
    let mut line = format!("# meta: model={}", if meta.model.is_empty() { "unknown" } else { &meta.model });
    if let Some(seed) = meta.seed {
        let _ = write!(line, " seed={seed}");
    }
    let _ = write!(line, " r={}", meta.noise);
    line
}

fn parse_meta(line: &str, meta: &mut SampleMeta) {
    for token in line.split_whitespace() {
        match token.split_once('=') {
            Some(("model", m)) => meta.model = m.to_string(),
            Some(("seed", s)) => meta.seed = s.parse().ok(),
            Some(("r", r)) => meta.noise = r.parse().unwrap_or(0.0),
            _ => {}
        }
    }
}

/// Writes `# meta: ...` followed by the CSV table
/// `t,theta_<id>,...[,v_<id>,...]`.
pub fn write_samples(samples: &SampleSet, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = meta_line(&samples.meta);
    out.push('\n');
    let mut wtr = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["t".to_string()];
    header.extend(samples.labels.iter().map(|id| format!("theta_{id}")));
    if samples.v.is_some() {
        header.extend(samples.labels.iter().map(|id| format!("v_{id}")));
    }
    let to_err = |e: csv::Error| Error::Numerical(format!("csv encoding failed: {e}"));
    wtr.write_record(&header).map_err(to_err)?;
    for row in 0..samples.len() {
        let mut rec = vec![row.to_string()];
        rec.extend(samples.theta.row(row).iter().map(|x| x.to_string()));
        if let Some(v) = &samples.v {
            rec.extend(v.row(row).iter().map(|x| x.to_string()));
        }
        wtr.write_record(&rec).map_err(to_err)?;
    }
    let body = wtr
        .into_inner()
        .map_err(|e| Error::Numerical(format!("csv encoding failed: {e}")))?;
    out.push_str(&String::from_utf8(body).expect("csv output is utf-8"));
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_samples(path: impl AsRef<Path>) -> Result<SampleSet> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let origin = path.display().to_string();
    let perr = |line: usize, message: String| Error::Parse {
        path: origin.clone(),
        line,
        message,
    };

    let mut meta = SampleMeta::default();
    for line in text.lines().take_while(|l| l.starts_with('#')) {
        if let Some(rest) = line.strip_prefix("# meta:") {
            parse_meta(rest, &mut meta);
        }
    }

    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header = rdr
        .headers()
        .map_err(|e| perr(0, format!("cannot read header: {e}")))?
        .clone();
    let header_line = header.position().map_or(0, |p| p.line() as usize);
    if header.get(0) != Some("t") {
        return Err(perr(header_line, "first column must be `t`".into()));
    }
    let mut theta_ids = Vec::new();
    let mut v_ids = Vec::new();
    for name in header.iter().skip(1) {
        let (kind, id) = name
            .split_once('_')
            .ok_or_else(|| perr(header_line, format!("unexpected column `{name}`")))?;
        let id: NodeId = id
            .parse()
            .map_err(|_| perr(header_line, format!("bad node id in column `{name}`")))?;
        match kind {
            "theta" if v_ids.is_empty() => theta_ids.push(id),
            "v" => v_ids.push(id),
            _ => return Err(perr(header_line, format!("unexpected column `{name}`"))),
        }
    }
    if theta_ids.is_empty() {
        return Err(perr(header_line, "no theta_<id> columns".into()));
    }
    if !v_ids.is_empty() && v_ids != theta_ids {
        return Err(perr(
            header_line,
            "v_<id> columns must list the same nodes as theta_<id>".into(),
        ));
    }

    let n = theta_ids.len();
    let mut values: Vec<f64> = Vec::new();
    let mut rows = 0;
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            perr(line, e.to_string())
        })?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        if rec.len() != header.len() {
            return Err(perr(
                line,
                format!("expected {} fields, found {}", header.len(), rec.len()),
            ));
        }
        for (col, field) in rec.iter().enumerate().skip(1) {
            let x: f64 = field.parse().map_err(|_| {
                perr(
                    line,
                    format!("non-numeric value `{field}` in column `{}`", &header[col]),
                )
            })?;
            if !x.is_finite() {
                return Err(perr(line, format!("non-finite value in column `{}`", &header[col])));
            }
            values.push(x);
        }
        rows += 1;
    }
    let width = header.len() - 1;
    let all = DMatrix::from_row_iterator(rows, width, values);
    let theta = all.columns(0, n).into_owned();
    let v = (!v_ids.is_empty()).then(|| all.columns(n, n).into_owned());
    Ok(SampleSet {
        theta,
        v,
        labels: theta_ids,
        meta,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.csv");
        let s = SampleSet {
            theta: DMatrix::from_fn(5, 3, |r, c| (r as f64 * 0.1 + c as f64).sin() / 7.0),
            v: Some(DMatrix::from_fn(5, 3, |r, c| 1e-3 * (r * c) as f64 - 1.0 / 3.0)),
            labels: vec![4, 1, 9],
            meta: SampleMeta {
                model: "lc-linear".into(),
                seed: Some(42),
                noise: 0.01,
            },
        };
        write_samples(&s, &path).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("# meta: model=lc-linear seed=42 r=0.01\nt,theta_4,theta_1,theta_9,v_4,v_1,v_9\n"));
        assert_eq!(read_samples(&path).unwrap(), s);
    }

    #[test]
    fn reports_bad_cells_with_position() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        fs::write(&path, "t,theta_1,theta_2\n0,0.1,0.2\n1,0.3,abc\n").unwrap();
        let e = read_samples(&path).unwrap_err().to_string();
        assert!(e.contains(":3:") && e.contains("theta_2") && e.contains("abc"), "{e}");
    }
}
