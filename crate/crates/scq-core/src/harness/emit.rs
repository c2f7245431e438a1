//! Result emission: CSV, JSON and SVG.

use super::run::{CountRow, PointSummary, TrialResult};
use super::svg::{histogram, line_charts, Series};
use crate::error::{Error, Result};
use serde::Serialize;
use std::io::Write;

fn csv_err(e: csv::Error) -> Error {
    Error::Io(e.to_string())
}

pub fn write_results_csv<W: Write>(w: W, results: &[TrialResult]) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    for r in results {
        wr.serialize(r).map_err(csv_err)?;
    }
    wr.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct JsonDoc<'a> {
    summary: &'a [PointSummary],
    trials: &'a [TrialResult],
}

pub fn write_results_json<W: Write>(w: W, results: &[TrialResult], summary: &[PointSummary]) -> Result<()> {
    serde_json::to_writer_pretty(w, &JsonDoc { summary, trials: results }).map_err(|e| Error::Io(e.to_string()))
}

/// Columns i,j,count,true_ell,inferred_ell.
pub fn write_counts_csv<W: Write>(w: W, rows: &[CountRow]) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    for r in rows {
        wr.serialize(r).map_err(csv_err)?;
    }
    wr.flush()?;
    Ok(())
}

/// The grid coordinate that changes across points, with its values.
pub fn varying_axis(summary: &[PointSummary]) -> (&'static str, Vec<f64>) {
    let axes: [(&'static str, fn(&PointSummary) -> f64); 7] = [
        ("n", |s| s.n as f64),
        ("k", |s| s.k as f64),
        ("delta", |s| s.delta as f64),
        ("p", |s| s.p),
        ("q", |s| s.q),
        ("sigma", |s| s.sigma),
        ("|S|", |s| s.s_size as f64),
    ];
    for (name, f) in axes {
        let v: Vec<f64> = summary.iter().map(f).collect();
        if v.windows(2).any(|w| w[0] != w[1]) {
            return (name, v);
        }
    }
    ("point", summary.iter().map(|s| s.point as f64).collect())
}

/// Success rate, gram error and inference counts against the varying grid coordinate.
pub fn sweep_svg(summary: &[PointSummary]) -> String {
    let (x_label, xs) = varying_axis(summary);
    let pts = |f: &dyn Fn(&PointSummary) -> Option<f64>| -> Vec<(f64, f64)> {
        xs.iter().zip(summary).filter_map(|(&x, s)| f(s).map(|y| (x, y))).collect()
    };
    let mut panels = vec![(
        "success rate".to_string(),
        vec![Series { name: "success".into(), points: pts(&|s| Some(s.successes as f64 / s.trials as f64)) }],
    )];
    panels.push((
        "gram error".to_string(),
        vec![
            Series { name: "mean".into(), points: pts(&|s| s.mean_gram_error) },
            Series { name: "median".into(), points: pts(&|s| s.median_gram_error) },
            Series { name: "max".into(), points: pts(&|s| s.max_gram_error.map(|v| v as f64)) },
        ],
    ));
    if summary.iter().any(|s| s.mean_wrong_inferences.is_some()) {
        panels.push((
            "inferences".to_string(),
            vec![
                Series { name: "correct".into(), points: pts(&|s| s.mean_correct_inferences) },
                Series { name: "wrong".into(), points: pts(&|s| s.mean_wrong_inferences) },
            ],
        ));
    }
    line_charts(x_label, &panels)
}

/// Count histogram split by true overlap.
pub fn counts_svg(rows: &[CountRow]) -> String {
    let max_l = rows.iter().map(|r| r.true_ell).max().unwrap_or(0);
    let groups: Vec<(String, Vec<u32>)> = (0..=max_l)
        .map(|l| (format!("overlap {l}"), rows.iter().filter(|r| r.true_ell == l).map(|r| r.count).collect()))
        .collect();
    histogram("triangle counts", "count", &groups)
}
