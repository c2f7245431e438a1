//! Label CSV ingestion into an external ground truth.

use crate::error::{Error, Result};
use crate::model::{ClusteringMatrix, Ensemble, MAX_K};
use crate::worstcase::{verify_separation, SeparationMode};
use serde::Serialize;
use std::collections::{BTreeSet, HashMap};
use std::io::Read;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IngestStats {
    pub n: usize,
    pub k: usize,
    pub labels: Vec<String>,
    pub delta_max: usize,
    pub dropped: usize,
    pub cluster_sizes: Vec<usize>,
    pub exclusive: Vec<usize>,
    pub alpha_exclusive: f64,
    pub alpha_triplet: f64,
    pub warnings: Vec<String>,
}

#[derive(Clone, Debug)]
pub struct Ingested {
    pub truth: ClusteringMatrix,
    pub element_ids: Vec<String>,
    pub stats: IngestStats,
}

/// Read `element_id,label` rows. Elements keep their first-appearance order, labels are
/// sorted, and elements outside 1..=delta_max labels are dropped.
pub fn ingest_labels<R: Read>(reader: R, delta_max: usize) -> Result<Ingested> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers().map_err(|e| Error::Parse { line: 1, msg: e.to_string() })?.clone();
    if headers.len() != 2 || &headers[0] != "element_id" || &headers[1] != "label" {
        return Err(Error::Parse { line: 1, msg: "expected header element_id,label".into() });
    }
    let mut order: Vec<String> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut sets: Vec<BTreeSet<String>> = Vec::new();
    for (r, rec) in rdr.records().enumerate() {
        let line = r + 2;
        let rec = rec.map_err(|e| Error::Parse { line, msg: e.to_string() })?;
        if rec.len() != 2 || rec[0].is_empty() || rec[1].is_empty() {
            return Err(Error::Parse { line, msg: "expected two nonempty fields".into() });
        }
        let i = *index.entry(rec[0].to_string()).or_insert_with(|| {
            order.push(rec[0].to_string());
            sets.push(BTreeSet::new());
            order.len() - 1
        });
        sets[i].insert(rec[1].to_string());
    }
    let kept: Vec<usize> = (0..order.len()).filter(|&i| (1..=delta_max).contains(&sets[i].len())).collect();
    if kept.is_empty() {
        return Err(Error::InvalidInput("no element left after filtering".into()));
    }
    let labels: Vec<String> = kept.iter().flat_map(|&i| sets[i].iter().cloned()).collect::<BTreeSet<_>>().into_iter().collect();
    let k = labels.len();
    if k > MAX_K {
        return Err(Error::InvalidInput(format!("{k} labels exceed {MAX_K}")));
    }
    let col: HashMap<&str, usize> = labels.iter().enumerate().map(|(c, l)| (l.as_str(), c)).collect();
    let rows: Vec<u64> = kept.iter().map(|&i| sets[i].iter().fold(0u64, |acc, l| acc | 1 << col[l.as_str()])).collect();
    let truth = ClusteringMatrix::from_masks(k, rows, Ensemble::External { delta_max })?;
    let n = truth.n();
    let all = if k == 64 { u64::MAX } else { (1u64 << k) - 1 };
    let cluster_sizes = (0..k).map(|c| truth.rows().iter().filter(|&&r| r >> c & 1 == 1).count()).collect();
    let exclusive: Vec<usize> = (0..k).map(|c| truth.rows().iter().filter(|&&r| r & all == 1 << c).count()).collect();
    let alpha_exclusive = verify_separation(&truth, SeparationMode::Exclusive);
    let alpha_triplet = verify_separation(&truth, SeparationMode::Triplet);
    let mut warnings = Vec::new();
    if alpha_exclusive == 0.0 {
        warnings.push("some cluster has no element outside the union of the others (alpha = 0)".into());
    }
    if alpha_triplet == 0.0 {
        warnings.push("some cluster lies inside the union of two others (triplet alpha = 0)".into());
    }
    let stats = IngestStats {
        n,
        k,
        labels,
        delta_max,
        dropped: order.len() - n,
        cluster_sizes,
        exclusive,
        alpha_exclusive,
        alpha_triplet,
        warnings,
    };
    Ok(Ingested { truth, element_ids: kept.iter().map(|&i| order[i].clone()).collect(), stats })
}

/// Write `element_id,label` rows.
pub fn write_labels<W: std::io::Write>(w: W, rows: &[(String, String)]) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["element_id", "label"]).map_err(|e| Error::Io(e.to_string()))?;
    for (e, l) in rows {
        wr.write_record([e, l]).map_err(|e| Error::Io(e.to_string()))?;
    }
    wr.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::instances::genre_corpus;

    #[test]
    fn toy_csv() {
        let csv = "element_id,label\na,x\nb,y\nc,z\nd,x\nd,y\ne,z\nf,y\n";
        let r = ingest_labels(csv.as_bytes(), 2).unwrap();
        assert_eq!((r.truth.n(), r.truth.k()), (6, 3));
        assert_eq!(r.truth.row(3), 0b011);
        assert_eq!(r.stats.exclusive, vec![1, 2, 2]);
    }

    #[test]
    fn nested_label_warns() {
        let csv = "element_id,label\na,x\na,y\nb,y\n";
        let r = ingest_labels(csv.as_bytes(), 2).unwrap();
        assert_eq!(r.stats.alpha_exclusive, 0.0);
        assert!(!r.stats.warnings.is_empty());
    }

    #[test]
    fn malformed_rows() {
        assert!(matches!(ingest_labels("id,label\n".as_bytes(), 2), Err(Error::Parse { .. })));
        assert!(matches!(ingest_labels("element_id,label\na,\n".as_bytes(), 2), Err(Error::Parse { .. })));
        assert!(matches!(ingest_labels("element_id,label\na,x\na,y\na,z\n".as_bytes(), 2), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn corpus_filters_to_expected_sizes() {
        let mut buf = Vec::new();
        write_labels(&mut buf, &genre_corpus(3)).unwrap();
        let r = ingest_labels(buf.as_slice(), 2).unwrap();
        assert_eq!((r.stats.n, r.stats.k, r.stats.dropped), (3470, 5, 1612));
        assert!((r.stats.alpha_triplet - 53.0 / 3470.0).abs() < 1e-12);
        let r3 = ingest_labels(buf.as_slice(), 3).unwrap();
        assert_eq!(r3.stats.n, 5082);
    }
}
