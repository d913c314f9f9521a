//! CSV import of labelled datasets and CSV export of datasets, attack
//! records and PCA plot data.

use std::collections::HashMap;
use std::path::Path;

use memaudit_core::attack::{AttackRecord, MembershipView};
use memaudit_core::data::Dataset;
use serde::{Deserialize, Serialize};

use crate::error::{io_err, parse_err, Error, Result};

/// Which column holds the class label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LabelColumn {
    Index(usize),
    Name(String),
}

impl Default for LabelColumn {
    fn default() -> Self {
        Self::Name("label".into())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CsvSource {
    pub path: std::path::PathBuf,
    pub label_column: LabelColumn,
    pub has_headers: bool,
    /// Min-max scale every feature column to `[0, 1]`.
    pub normalize: bool,
}

impl Default for CsvSource {
    fn default() -> Self {
        Self {
            path: Default::default(),
            label_column: LabelColumn::default(),
            has_headers: true,
            normalize: true,
        }
    }
}

/// Loads a numeric CSV. Label strings become class ids in order of first
/// appearance; every other column must parse as a finite number.
pub fn load_csv(src: &CsvSource) -> Result<Dataset> {
    let file = std::fs::File::open(&src.path).map_err(io_err(&src.path))?;
    read_csv(file, src)
}

pub fn read_csv(reader: impl std::io::Read, src: &CsvSource) -> Result<Dataset> {
    let path = &src.path;
    let mut rdr = csv::ReaderBuilder::new().has_headers(src.has_headers).trim(csv::Trim::All).from_reader(reader);
    let headers: Option<Vec<String>> = if src.has_headers {
        Some(rdr.headers().map_err(|e| parse_err(path, e))?.iter().map(str::to_owned).collect())
    } else {
        None
    };
    let label_idx = match (&src.label_column, &headers) {
        (LabelColumn::Index(i), _) => *i,
        (LabelColumn::Name(name), Some(h)) => h
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| parse_err(path, format!("no column named {name:?}")))?,
        (LabelColumn::Name(name), None) => {
            return Err(parse_err(path, format!("label column {name:?} given by name but the file has no header")));
        }
    };
    let column_name = |c: usize| headers.as_ref().and_then(|h| h.get(c).cloned()).unwrap_or_else(|| c.to_string());

    let mut width = None;
    let mut features = Vec::new();
    let mut labels = Vec::new();
    let mut class_ids: HashMap<String, usize> = HashMap::new();
    let mut class_names = Vec::new();
    for (r, rec) in rdr.records().enumerate() {
        // 1-based data row numbers, as a spreadsheet would show them.
        let row = r + 1;
        let rec = rec.map_err(|e| parse_err(path, e))?;
        let w = *width.get_or_insert(rec.len());
        if rec.len() != w {
            return Err(Error::Cell {
                path: path.clone(),
                row,
                column: "*".into(),
                message: format!("{} fields, expected {w}", rec.len()),
            });
        }
        if label_idx >= w {
            return Err(parse_err(path, format!("label column {label_idx} out of range for {w} columns")));
        }
        for (c, field) in rec.iter().enumerate() {
            if c == label_idx {
                let next = class_names.len();
                let id = *class_ids.entry(field.to_owned()).or_insert_with(|| {
                    class_names.push(field.to_owned());
                    next
                });
                labels.push(id);
            } else {
                let v: f64 = field.parse().map_err(|_| Error::Cell {
                    path: path.clone(),
                    row,
                    column: column_name(c),
                    message: format!("{field:?} is not a number"),
                })?;
                if !v.is_finite() {
                    return Err(Error::Cell {
                        path: path.clone(),
                        row,
                        column: column_name(c),
                        message: format!("{field:?} is not finite"),
                    });
                }
                features.push(v);
            }
        }
    }
    let width = width.ok_or_else(|| parse_err(path, "no data rows"))?;
    let k = class_names.len();
    let mut ds = Dataset::from_flat(features, width - 1, labels, k).map_err(|e| parse_err(path, e))?;
    ds = ds.with_class_names(class_names)?;
    if let Some(h) = headers {
        let names = h.into_iter().enumerate().filter(|(c, _)| *c != label_idx).map(|(_, n)| n).collect();
        ds = ds.with_feature_names(names)?;
    }
    Ok(if src.normalize { ds.normalized() } else { ds })
}

fn writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    let f = std::fs::File::create(path).map_err(io_err(path))?;
    Ok(csv::Writer::from_writer(f))
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> Error + '_ {
    move |e| parse_err(path, e)
}

/// Features (named `f0..` unless the dataset has names) followed by `label`.
pub fn export_dataset(ds: &Dataset, path: &Path) -> Result<()> {
    let mut w = writer(path)?;
    let mut header: Vec<String> = match ds.feature_names() {
        Some(n) => n.to_vec(),
        None => (0..ds.n_features()).map(|i| format!("f{i}")).collect(),
    };
    header.push("label".into());
    w.write_record(&header).map_err(csv_err(path))?;
    for i in 0..ds.len() {
        let mut rec: Vec<String> = ds.row(i).iter().map(f64::to_string).collect();
        rec.push(ds.label(i).to_string());
        w.write_record(&rec).map_err(csv_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

/// `p0..p{k-1}, true_class, membership_label`.
pub fn export_attack_records(records: &[AttackRecord], path: &Path) -> Result<()> {
    let mut w = writer(path)?;
    let k = records.first().map_or(0, |r| r.prediction.len());
    let mut header: Vec<String> = (0..k).map(|i| format!("p{i}")).collect();
    header.extend(["true_class".into(), "membership_label".into()]);
    w.write_record(&header).map_err(csv_err(path))?;
    for r in records {
        let mut rec: Vec<String> = r.prediction.iter().map(f64::to_string).collect();
        rec.push(r.true_class.to_string());
        rec.push(u8::from(r.member).to_string());
        w.write_record(&rec).map_err(csv_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

/// `pc1, pc2, label, group` with group one of `train`, `predicted_in`,
/// `predicted_out`.
pub fn export_pca(view: &MembershipView, path: &Path) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["pc1", "pc2", "label", "group"]).map_err(csv_err(path))?;
    for p in &view.points {
        w.write_record([p.pc1.to_string(), p.pc2.to_string(), p.label.to_string(), p.group.name().to_string()])
            .map_err(csv_err(path))?;
    }
    w.flush().map_err(io_err(path))
}
