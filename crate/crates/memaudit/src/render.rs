//! `report <dir>`: rebuilds the CSV tables from stored job records and
//! summarizes each scenario point over its seeds.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::Result;
use crate::runner::{load_records, write_tables, JobStatus, Manifest};

/// Median of the finite values; `None` when there are none.
pub fn median(values: &[f64]) -> Option<f64> {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    Some(if v.len() % 2 == 1 { v[m] } else { (v[m - 1] + v[m]) / 2.0 })
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PointSummary {
    pub ok: usize,
    pub failed: usize,
    pub attack_accuracy: Option<f64>,
    pub accuracy_difference: Option<f64>,
    pub epsilon: Option<f64>,
    /// Median attack accuracy of each per-class group.
    pub per_class: BTreeMap<usize, f64>,
}

#[derive(Default)]
struct Samples {
    summary: PointSummary,
    attack: Vec<f64>,
    gap: Vec<f64>,
    epsilon: Vec<f64>,
    per_class: BTreeMap<usize, Vec<f64>>,
}

/// Per-point medians over seeds, in the order points first appear.
pub fn summarize(jobs: &[JobStatus]) -> Vec<(String, PointSummary)> {
    let mut order: Vec<String> = Vec::new();
    let mut acc: BTreeMap<String, Samples> = BTreeMap::new();
    for job in jobs {
        let point = match job {
            JobStatus::Ok(r) => &r.point,
            JobStatus::Failed(e) => &e.point,
        };
        if !acc.contains_key(point) {
            order.push(point.clone());
        }
        let e = acc.entry(point.clone()).or_default();
        match job {
            JobStatus::Failed(_) => e.summary.failed += 1,
            JobStatus::Ok(r) => {
                let o = &r.outcome;
                e.summary.ok += 1;
                e.attack.push(o.report.aggregate.accuracy);
                e.gap.push(o.target_train_accuracy - o.target_test_accuracy);
                if let Some(a) = o.dp.as_ref().and_then(|d| d.accounting.as_ref()) {
                    e.epsilon.push(a.epsilon);
                }
                for (&c, g) in &o.report.per_class {
                    e.per_class.entry(c).or_default().push(g.metrics.accuracy);
                }
            }
        }
    }
    order
        .into_iter()
        .map(|p| {
            let e = acc.remove(&p).expect("point recorded");
            let mut s = e.summary;
            s.attack_accuracy = median(&e.attack);
            s.accuracy_difference = median(&e.gap);
            s.epsilon = median(&e.epsilon);
            s.per_class = e.per_class.into_iter().filter_map(|(c, v)| Some((c, median(&v)?))).collect();
            (p, s)
        })
        .collect()
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "-".into(), |x| format!("{x:.4}"))
}

/// Plain-text table of [`summarize`].
pub fn render_summary(rows: &[(String, PointSummary)]) -> String {
    let width = rows.iter().map(|(p, _)| p.len()).max().unwrap_or(5).max(5);
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<width$}  {:>4}  {:>6}  {:>10}  {:>10}  {:>8}",
        "point", "ok", "failed", "attack_acc", "train-test", "epsilon"
    );
    for (p, s) in rows {
        let _ = writeln!(
            out,
            "{:<width$}  {:>4}  {:>6}  {:>10}  {:>10}  {:>8}",
            p,
            s.ok,
            s.failed,
            cell(s.attack_accuracy),
            cell(s.accuracy_difference),
            cell(s.epsilon)
        );
    }
    out
}

/// Rewrites the CSV tables of `dir` from its records (appending them to the
/// manifest) and returns the summary text.
pub fn report(dir: &Path) -> Result<String> {
    let jobs = load_records(dir)?;
    let manifest = Manifest::reopen(dir)?;
    write_tables(dir, &jobs, &manifest)?;
    Ok(render_summary(&summarize(&jobs)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_examples() {
        assert_eq!(median(&[]), None);
        assert_eq!(median(&[3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), Some(2.5));
        assert_eq!(median(&[f64::NAN, 1.0]), Some(1.0));
    }
}
