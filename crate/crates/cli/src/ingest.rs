//! CSV ingestion into a [`ClusteredDataset`].

use std::fmt;
use std::io::Read;
use std::path::Path;

use influence_core::models::{Cluster, ClusteredDataset};
use nalgebra::{DMatrix, DVector};

use crate::error::{CliError, Result};

/// Which CSV columns feed which field.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ColumnMap {
    pub cluster_id: String,
    pub y: String,
    pub obs_index: Option<String>,
    pub x: Vec<String>,
    pub d: Option<String>,
}

impl ColumnMap {
    /// The standard layout: `cluster_id`, `y`, `x1..xq`, optional
    /// `obs_index` and `d`. With no `x` columns the design is an intercept.
    pub fn detect(headers: &[&str]) -> Result<Self> {
        for required in ["cluster_id", "y"] {
            if !headers.contains(&required) {
                return Err(CliError::MissingColumn(required.into()));
            }
        }
        let mut x = Vec::new();
        while headers.contains(&format!("x{}", x.len() + 1).as_str()) {
            x.push(format!("x{}", x.len() + 1));
        }
        if let Some(stray) =
            headers.iter().find(|h| h.strip_prefix('x').is_some_and(|k| k.parse::<usize>().is_ok_and(|k| k > x.len())))
        {
            return Err(CliError::MissingColumn(format!("x{} (found {stray})", x.len() + 1)));
        }
        let optional = |name: &str| headers.contains(&name).then(|| name.to_string());
        Ok(Self {
            cluster_id: "cluster_id".into(),
            y: "y".into(),
            obs_index: optional("obs_index"),
            x,
            d: optional("d"),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DatasetSummary {
    pub n: usize,
    pub total: usize,
    pub min_m: usize,
    pub max_m: usize,
    pub q1: usize,
}

impl DatasetSummary {
    pub fn of(data: &ClusteredDataset) -> Self {
        let sizes = data.sizes();
        Self {
            n: data.n(),
            total: data.total(),
            min_m: sizes.iter().copied().min().unwrap_or(0),
            max_m: sizes.iter().copied().max().unwrap_or(0),
            q1: data.q1(),
        }
    }
}

impl fmt::Display for DatasetSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "n = {} clusters, M = {} observations, m_i in [{}, {}], q1 = {}",
            self.n, self.total, self.min_m, self.max_m, self.q1
        )
    }
}

struct Rows {
    y: Vec<f64>,
    x: Vec<Vec<f64>>,
    d: Vec<f64>,
    obs: Vec<i64>,
}

pub fn ingest(path: &Path) -> Result<ClusteredDataset> {
    read_csv(std::fs::File::open(path)?)
}

pub fn read_csv(reader: impl Read) -> Result<ClusteredDataset> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let names: Vec<&str> = headers.iter().collect();
    let map = ColumnMap::detect(&names)?;
    read_with(rdr, &headers, &map)
}

fn read_with(
    mut rdr: csv::Reader<impl Read>,
    headers: &csv::StringRecord,
    map: &ColumnMap,
) -> Result<ClusteredDataset> {
    let col =
        |name: &str| headers.iter().position(|h| h == name).ok_or_else(|| CliError::MissingColumn(name.to_string()));
    let id_col = col(&map.cluster_id)?;
    let y_col = col(&map.y)?;
    let x_cols: Vec<usize> = map.x.iter().map(|c| col(c)).collect::<Result<_>>()?;
    let d_col = map.d.as_deref().map(col).transpose()?;
    let obs_col = map.obs_index.as_deref().map(col).transpose()?;

    let mut order: Vec<String> = Vec::new();
    let mut groups: std::collections::HashMap<String, Rows> = std::collections::HashMap::new();
    for record in rdr.records() {
        let record = record?;
        let row = record.position().map_or(0, |p| p.line() as usize);
        let cell = |c: usize| record.get(c).unwrap_or("");
        let number = |c: usize| -> Result<f64> {
            let v = cell(c);
            v.parse::<f64>().ok().filter(|x| x.is_finite()).ok_or_else(|| CliError::NonNumericCell {
                row,
                column: headers[c].to_string(),
                value: v.to_string(),
            })
        };
        let id = cell(id_col).to_string();
        if id.is_empty() {
            return Err(CliError::EmptyCluster { row });
        }
        let y = number(y_col)?;
        let x = if x_cols.is_empty() { vec![1.0] } else { x_cols.iter().map(|&c| number(c)).collect::<Result<_>>()? };
        let d = d_col.map(number).transpose()?;
        let obs = obs_col
            .map(|c| {
                cell(c).parse::<i64>().map_err(|_| CliError::NonNumericCell {
                    row,
                    column: headers[c].to_string(),
                    value: cell(c).to_string(),
                })
            })
            .transpose()?;
        let entry = groups.entry(id.clone()).or_insert_with(|| {
            order.push(id);
            Rows { y: Vec::new(), x: Vec::new(), d: Vec::new(), obs: Vec::new() }
        });
        entry.y.push(y);
        entry.x.push(x);
        entry.d.extend(d);
        entry.obs.extend(obs);
    }
    if order.is_empty() {
        return Err(CliError::Invalid("data file has no rows".into()));
    }
    let clusters = order
        .into_iter()
        .map(|id| {
            let rows = groups.remove(&id).expect("every id in order has a group");
            let m = rows.y.len();
            let q = rows.x[0].len();
            let x = DMatrix::from_fn(m, q, |i, k| rows.x[i][k]);
            let mut c = Cluster::new(id, DVector::from_vec(rows.y), x);
            if d_col.is_some() {
                c = c.with_d(DVector::from_vec(rows.d));
            }
            if obs_col.is_some() {
                c.obs_index = Some(rows.obs);
            }
            c
        })
        .collect();
    Ok(ClusteredDataset::new(clusters)?)
}

/// Splits every observation into its own cluster, keeping the cluster id and
/// observation label, as the independent-observation models expect.
pub fn as_independent(data: &ClusteredDataset) -> Result<ClusteredDataset> {
    let clusters = data
        .clusters()
        .iter()
        .flat_map(|c| {
            (0..c.size()).map(move |l| {
                let mut one = Cluster::new(c.id.clone(), DVector::from_element(1, c.y[l]), c.x.rows(l, 1).into_owned());
                if let Some(d) = &c.d {
                    one = one.with_d(DVector::from_element(1, d[l]));
                }
                one.obs_index = Some(vec![c.obs_index.as_ref().map_or(l as i64 + 1, |o| o[l])]);
                one
            })
        })
        .collect();
    Ok(ClusteredDataset::new(clusters)?)
}

/// CSV text for a dataset in the layout [`read_csv`] accepts.
pub fn to_csv(data: &ClusteredDataset) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let has_d = data.clusters().iter().all(|c| c.d.is_some());
    let mut header = vec!["cluster_id".to_string(), "obs_index".into(), "y".into()];
    header.extend((1..=data.q1()).map(|k| format!("x{k}")));
    if has_d {
        header.push("d".into());
    }
    w.write_record(&header)?;
    for c in data.clusters() {
        for l in 0..c.size() {
            let mut rec = vec![c.id.clone(), c.obs_label(l), c.y[l].to_string()];
            rec.extend(c.x.row(l).iter().map(f64::to_string));
            if let (true, Some(d)) = (has_d, &c.d) {
                rec.push(d[l].to_string());
            }
            w.write_record(&rec)?;
        }
    }
    w.into_inner().map_err(|e| CliError::Io(e.into_error()))
}
