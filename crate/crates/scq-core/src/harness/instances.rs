//! Planted worst-case instances and a synthetic genre-label corpus.

use crate::error::{Error, Result};
use crate::model::{ClusteringMatrix, Ensemble, MAX_K};
use crate::rng::{substream, Stream};
use rand::seq::index::sample;
use rand::seq::SliceRandom;
use rand::Rng;

/// `exclusive` elements in each cluster alone, every other element in a random set of
/// 2..=Δ clusters (one cluster when Δ = 1). Rows are shuffled.
pub fn planted_instance(n: usize, k: usize, delta_max: usize, exclusive: usize, seed: u64) -> Result<ClusteringMatrix> {
    if k == 0 || k > MAX_K || delta_max == 0 || delta_max > k {
        return Err(Error::InvalidParams(format!("need 1 <= delta <= k <= {MAX_K}, got k = {k}, delta = {delta_max}")));
    }
    if k * exclusive > n {
        return Err(Error::InvalidParams(format!("{k} clusters of {exclusive} exclusive elements exceed n = {n}")));
    }
    let mut rng = substream(seed, Stream::Ensemble);
    let mut rows: Vec<u64> = (0..k).flat_map(|c| std::iter::repeat_n(1u64 << c, exclusive)).collect();
    let lo = delta_max.min(2);
    while rows.len() < n {
        let w = rng.gen_range(lo..=delta_max);
        rows.push(sample(&mut rng, k, w).iter().fold(0u64, |acc, c| acc | 1 << c));
    }
    rows.shuffle(&mut rng);
    ClusteringMatrix::from_masks(k, rows, Ensemble::External { delta_max })
}

pub const GENRES: [&str; 5] = ["Mystery", "Drama", "Sci-Fi", "Horror", "Crime"];

/// (element_id, label) rows: 3470 elements with one or two genres, among them 53 Mystery
/// titles outside Sci-Fi and Horror, plus 1612 elements with three genres.
pub fn genre_corpus(seed: u64) -> Vec<(String, String)> {
    let exclusive = [21usize, 1030, 150, 250, 300];
    let pairs = [
        ((0, 1), 16usize),
        ((0, 2), 40),
        ((0, 3), 60),
        ((0, 4), 16),
        ((1, 2), 200),
        ((1, 3), 300),
        ((1, 4), 600),
        ((2, 3), 150),
        ((2, 4), 100),
        ((3, 4), 237),
    ];
    let mut patterns: Vec<Vec<usize>> = Vec::new();
    for (g, &c) in exclusive.iter().enumerate() {
        patterns.extend(std::iter::repeat_n(vec![g], c));
    }
    for &((a, b), c) in &pairs {
        patterns.extend(std::iter::repeat_n(vec![a, b], c));
    }
    let triples: Vec<Vec<usize>> =
        (0..5).flat_map(|a| (a + 1..5).flat_map(move |b| (b + 1..5).map(move |c| vec![a, b, c]))).collect();
    for (t, tr) in triples.iter().enumerate() {
        patterns.extend(std::iter::repeat_n(tr.clone(), if t < 2 { 162 } else { 161 }));
    }
    let mut rng = substream(seed, Stream::Ensemble);
    patterns.shuffle(&mut rng);
    let mut out = Vec::new();
    for (i, p) in patterns.iter().enumerate() {
        for &g in p {
            out.push((format!("m{:05}", i + 1), GENRES[g].to_string()));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::worstcase::{verify_separation, SeparationMode};

    #[test]
    fn planted_has_requested_exclusive_mass() {
        let a = planted_instance(3000, 5, 3, 36, 7).unwrap();
        assert_eq!(a.n(), 3000);
        assert!((verify_separation(&a, SeparationMode::Exclusive) - 0.012).abs() < 1e-12);
        assert!(a.rows().iter().all(|r| (1..=3).contains(&r.count_ones())));
    }

    #[test]
    fn corpus_shape() {
        let rows = genre_corpus(1);
        let ids: std::collections::BTreeSet<&String> = rows.iter().map(|r| &r.0).collect();
        assert_eq!(ids.len(), 3470 + 1612);
        assert_eq!(rows.len(), 21 + 1030 + 150 + 250 + 300 + 2 * 1719 + 3 * 1612);
    }
}
