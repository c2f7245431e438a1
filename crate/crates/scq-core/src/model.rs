//! Ground-truth membership matrices, their grams, and overlap laws.

use crate::error::{Error, Result};
use crate::rng::{substream, Stream};
use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;

pub const MAX_K: usize = 64;

/// Model parameters. Fields not used by a scenario are ignored.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Params {
    pub n: usize,
    pub k: usize,
    pub delta: usize,
    pub p: f64,
    pub q: f64,
    pub sigma: f64,
    pub epsilon: f64,
    /// Slack constant of the uniqueness regime for the uniform ensemble.
    pub c: f64,
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    /// Relative tolerance for eigen and pivot thresholds.
    pub tol: f64,
}

impl Default for Params {
    fn default() -> Self {
        Params {
            n: 100,
            k: 4,
            delta: 2,
            p: 0.5,
            q: 0.0,
            sigma: 1.0,
            epsilon: 1.0,
            c: 2.0,
            c1: 2.0,
            c2: 1.0,
            c3: 1.0,
            tol: 1e-8,
        }
    }
}

impl Params {
    pub fn new(n: usize, k: usize, delta: usize) -> Self {
        Params { n, k, delta, ..Default::default() }
    }

    pub fn with_p(mut self, p: f64) -> Self {
        self.p = p;
        self
    }

    pub fn with_q(mut self, q: f64) -> Self {
        self.q = q;
        self
    }

    pub fn with_sigma(mut self, sigma: f64) -> Self {
        self.sigma = sigma;
        self
    }

    pub fn with_epsilon(mut self, epsilon: f64) -> Self {
        self.epsilon = epsilon;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.k > MAX_K {
            return Err(Error::InvalidParams(format!("k = {} must lie in 1..={MAX_K}", self.k)));
        }
        if self.n < self.k {
            return Err(Error::InvalidParams(format!("n = {} < k = {}", self.n, self.k)));
        }
        if self.delta < 1 || self.delta > self.k {
            return Err(Error::InvalidParams(format!("delta = {} outside 1..={}", self.delta, self.k)));
        }
        if !(0.0..=1.0).contains(&self.p) {
            return Err(Error::InvalidParams(format!("p = {} outside [0, 1]", self.p)));
        }
        if !(0.0..0.5).contains(&self.q) {
            return Err(Error::InvalidParams(format!("q = {} outside [0, 0.5)", self.q)));
        }
        if !(self.sigma > 0.0) {
            return Err(Error::InvalidParams(format!("sigma = {} must be positive", self.sigma)));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::InvalidParams(format!("epsilon = {} must be positive", self.epsilon)));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Ensemble {
    Uniform { delta: usize },
    Iid { p: f64 },
    External { delta_max: usize },
}

/// n×k binary membership matrix. Row i is stored as a bit mask over clusters.
#[derive(Clone, Debug, PartialEq)]
pub struct ClusteringMatrix {
    k: usize,
    rows: Vec<u64>,
    ensemble: Ensemble,
}

#[inline]
fn low_mask(k: usize) -> u64 {
    if k == 64 {
        u64::MAX
    } else {
        (1u64 << k) - 1
    }
}

impl ClusteringMatrix {
    pub fn from_masks(k: usize, rows: Vec<u64>, ensemble: Ensemble) -> Result<Self> {
        if k == 0 || k > MAX_K {
            return Err(Error::InvalidParams(format!("k = {k} must lie in 1..={MAX_K}")));
        }
        let m = low_mask(k);
        for (i, r) in rows.iter().enumerate() {
            if r & !m != 0 {
                return Err(Error::InvalidInput(format!("row {i} has bits beyond k = {k}")));
            }
            let w = r.count_ones() as usize;
            match ensemble {
                Ensemble::Uniform { delta } if w != delta => {
                    return Err(Error::InvalidInput(format!("row {i} has weight {w}, expected {delta}")));
                }
                Ensemble::External { delta_max } if w < 1 || w > delta_max => {
                    return Err(Error::InvalidInput(format!("row {i} has weight {w} outside 1..={delta_max}")));
                }
                _ => {}
            }
        }
        Ok(ClusteringMatrix { k, rows, ensemble })
    }

    /// Build from rows written as strings of '0'/'1', column 0 first.
    pub fn from_strs(rows: &[&str], ensemble: Ensemble) -> Result<Self> {
        let k = rows.first().map(|r| r.len()).unwrap_or(0);
        let masks = rows
            .iter()
            .enumerate()
            .map(|(i, r)| parse_row(r, k, i + 1))
            .collect::<Result<Vec<_>>>()?;
        Self::from_masks(k, masks, ensemble)
    }

    pub fn n(&self) -> usize {
        self.rows.len()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn ensemble(&self) -> Ensemble {
        self.ensemble
    }

    pub fn row(&self, i: usize) -> u64 {
        self.rows[i]
    }

    pub fn rows(&self) -> &[u64] {
        &self.rows
    }

    pub fn get(&self, i: usize, c: usize) -> bool {
        self.rows[i] >> c & 1 == 1
    }

    #[inline]
    pub fn inner(&self, i: usize, j: usize) -> u32 {
        (self.rows[i] & self.rows[j]).count_ones()
    }

    /// Column c as a bit set over rows.
    pub fn column(&self, c: usize) -> Vec<u64> {
        let mut col = vec![0u64; self.n().div_ceil(64)];
        for (i, r) in self.rows.iter().enumerate() {
            if r >> c & 1 == 1 {
                col[i / 64] |= 1 << (i % 64);
            }
        }
        col
    }

    /// Apply a column permutation: column j of the result is column `perm[j]` of self.
    pub fn permute_columns(&self, perm: &PermutationMap) -> Self {
        let rows = self
            .rows
            .iter()
            .map(|&r| {
                perm.mapping
                    .iter()
                    .enumerate()
                    .fold(0u64, |acc, (j, &src)| acc | ((r >> src & 1) << j))
            })
            .collect();
        ClusteringMatrix { k: self.k, rows, ensemble: self.ensemble }
    }

    /// Cluster member lists.
    pub fn clusters(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.k];
        for (i, &r) in self.rows.iter().enumerate() {
            for (c, members) in out.iter_mut().enumerate() {
                if r >> c & 1 == 1 {
                    members.push(i);
                }
            }
        }
        out
    }

    pub fn to_text(&self) -> String {
        let (delta, tag) = match self.ensemble {
            Ensemble::Uniform { delta } => (delta, "uniform".to_string()),
            Ensemble::Iid { p } => (self.k, format!("iid:{p}")),
            Ensemble::External { delta_max } => (delta_max, "external".to_string()),
        };
        let mut s = String::new();
        let _ = writeln!(s, "{} {} {} {}", self.n(), self.k, delta, tag);
        for &r in &self.rows {
            for c in 0..self.k {
                s.push(if r >> c & 1 == 1 { '1' } else { '0' });
            }
            s.push('\n');
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, header) = lines.next().ok_or(Error::Parse { line: 1, msg: "empty input".into() })?;
        let parts: Vec<&str> = header.split_whitespace().collect();
        let bad = |msg: &str| Error::Parse { line: 1, msg: msg.to_string() };
        if parts.len() != 4 {
            return Err(bad("header must be `n k delta ensemble`"));
        }
        let n: usize = parts[0].parse().map_err(|_| bad("bad n"))?;
        let k: usize = parts[1].parse().map_err(|_| bad("bad k"))?;
        let delta: usize = parts[2].parse().map_err(|_| bad("bad delta"))?;
        let ensemble = match parts[3] {
            "uniform" => Ensemble::Uniform { delta },
            "external" => Ensemble::External { delta_max: delta },
            t => match t.strip_prefix("iid:") {
                Some(p) => Ensemble::Iid { p: p.parse().map_err(|_| bad("bad p"))? },
                None => return Err(bad("unknown ensemble tag")),
            },
        };
        let rows = lines
            .map(|(ln, l)| parse_row(l.trim(), k, ln + 1))
            .collect::<Result<Vec<_>>>()?;
        if rows.len() != n {
            return Err(Error::Parse { line: 1, msg: format!("header says {n} rows, found {}", rows.len()) });
        }
        Self::from_masks(k, rows, ensemble)
    }
}

fn parse_row(r: &str, k: usize, line: usize) -> Result<u64> {
    if r.len() != k {
        return Err(Error::Parse { line, msg: format!("expected {k} characters, got {}", r.len()) });
    }
    r.bytes().enumerate().try_fold(0u64, |acc, (c, b)| match b {
        b'0' => Ok(acc),
        b'1' => Ok(acc | 1 << c),
        _ => Err(Error::Parse { line, msg: format!("unexpected character {:?}", b as char) }),
    })
}

/// Each row drawn uniformly from the weight-Δ patterns.
pub fn sample_uniform(params: &Params, seed: u64) -> Result<ClusteringMatrix> {
    let (n, k, delta) = (params.n, params.k, params.delta);
    if delta < 1 || delta > k || k > MAX_K {
        return Err(Error::InvalidParams(format!("delta = {delta} outside 1..={k}")));
    }
    let mut rng = substream(seed, Stream::Ensemble);
    let rows = (0..n)
        .map(|_| sample(&mut rng, k, delta).iter().fold(0u64, |acc, c| acc | 1 << c))
        .collect();
    ClusteringMatrix::from_masks(k, rows, Ensemble::Uniform { delta })
}

/// Entries i.i.d. Bernoulli(p).
pub fn sample_iid(params: &Params, seed: u64) -> Result<ClusteringMatrix> {
    let (n, k, p) = (params.n, params.k, params.p);
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidParams(format!("p = {p} outside [0, 1]")));
    }
    if k == 0 || k > MAX_K {
        return Err(Error::InvalidParams(format!("k = {k} must lie in 1..={MAX_K}")));
    }
    let mut rng = substream(seed, Stream::Ensemble);
    let rows = (0..n)
        .map(|_| (0..k).fold(0u64, |acc, c| if rng.gen::<f64>() < p { acc | 1 << c } else { acc }))
        .collect();
    ClusteringMatrix::from_masks(k, rows, Ensemble::Iid { p })
}

/// Dense symmetric n×n matrix of small nonnegative integers.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SimilarityMatrix {
    n: usize,
    entries: Vec<u8>,
}

impl SimilarityMatrix {
    pub fn zeros(n: usize) -> Self {
        SimilarityMatrix { n, entries: vec![0; n * n] }
    }

    pub fn from_fn(n: usize, f: impl Fn(usize, usize) -> u8) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            for j in i..n {
                m.set(i, j, f(i, j));
            }
        }
        m
    }

    pub fn from_rows(rows: &[Vec<u8>]) -> Result<Self> {
        let n = rows.len();
        let mut m = Self::zeros(n);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != n {
                return Err(Error::InvalidInput(format!("row {i} has length {}", r.len())));
            }
            for (j, &v) in r.iter().enumerate() {
                if rows[j][i] != v {
                    return Err(Error::InvalidInput(format!("asymmetric entry ({i}, {j})")));
                }
                m.entries[i * n + j] = v;
            }
        }
        Ok(m)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> u8 {
        self.entries[i * self.n + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: u8) {
        self.entries[i * self.n + j] = v;
        self.entries[j * self.n + i] = v;
    }

    pub fn row(&self, i: usize) -> &[u8] {
        &self.entries[i * self.n..(i + 1) * self.n]
    }

    /// Entrywise 1[x > 0] off the diagonal; diagonal set to 0.
    pub fn quantized(&self) -> Self {
        Self::from_fn(self.n, |i, j| u8::from(i != j && self.get(i, j) > 0))
    }

    /// Principal submatrix on `idx`, in the given order.
    pub fn restrict(&self, idx: &[usize]) -> Self {
        Self::from_fn(idx.len(), |a, b| self.get(idx[a], idx[b]))
    }

    pub fn to_f64(&self) -> nalgebra::DMatrix<f64> {
        nalgebra::DMatrix::from_fn(self.n, self.n, |i, j| self.get(i, j) as f64)
    }

    pub fn is_symmetric(&self) -> bool {
        (0..self.n).all(|i| (0..i).all(|j| self.get(i, j) == self.get(j, i)))
    }
}

pub fn gram(a: &ClusteringMatrix) -> SimilarityMatrix {
    SimilarityMatrix::from_fn(a.n(), |i, j| a.inner(i, j) as u8)
}

/// Column permutation: entry j names the source column of output column j.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PermutationMap {
    pub mapping: Vec<usize>,
}

impl PermutationMap {
    pub fn identity(k: usize) -> Self {
        PermutationMap { mapping: (0..k).collect() }
    }

    pub fn new(mapping: Vec<usize>) -> Result<Self> {
        let mut seen = vec![false; mapping.len()];
        for &m in &mapping {
            if m >= mapping.len() || std::mem::replace(&mut seen[m], true) {
                return Err(Error::InvalidInput("mapping is not a bijection".into()));
            }
        }
        Ok(PermutationMap { mapping })
    }
}

/// Witness π with `b == a.permute_columns(π)`, if one exists.
pub fn is_column_permutation(a: &ClusteringMatrix, b: &ClusteringMatrix) -> Result<Option<PermutationMap>> {
    if a.n() != b.n() || a.k() != b.k() {
        return Err(Error::InvalidInput(format!(
            "shapes differ: {}x{} vs {}x{}",
            a.n(),
            a.k(),
            b.n(),
            b.k()
        )));
    }
    let cols_a: Vec<Vec<u64>> = (0..a.k()).map(|c| a.column(c)).collect();
    let mut used = vec![false; a.k()];
    let mut mapping = Vec::with_capacity(a.k());
    // Equality is transitive, so any unused equal column is a valid match.
    for c in 0..b.k() {
        let col = b.column(c);
        match (0..a.k()).find(|&s| !used[s] && cols_a[s] == col) {
            Some(s) => {
                used[s] = true;
                mapping.push(s);
            }
            None => return Ok(None),
        }
    }
    Ok(Some(PermutationMap { mapping }))
}

/// C(a, b) as a float, zero when b < 0, a < 0 or a < b.
pub fn binom(a: i64, b: i64) -> f64 {
    if b < 0 || a < 0 || a < b {
        return 0.0;
    }
    let b = b.min(a - b);
    let v = (0..b).fold(1.0, |acc, t| acc * (a - t) as f64 / (t + 1) as f64);
    if v < 9.0e15 {
        v.round()
    } else {
        v
    }
}

/// Law of ⟨A₁, A₂⟩ for independent rows uniform on the weight-Δ patterns.
pub fn overlap_distribution_uniform(k: usize, delta: usize) -> Vec<f64> {
    let (k, d) = (k as i64, delta as i64);
    let total = binom(k, d);
    (0..=d).map(|l| binom(d, l) * binom(k - d, d - l) / total).collect()
}

/// Law of ⟨A₁, A₂⟩ for independent i.i.d. Bernoulli(p) rows: Binomial(k, p²).
pub fn overlap_distribution_iid(k: usize, p: f64) -> Vec<f64> {
    let r = p * p;
    (0..=k)
        .map(|l| binom(k as i64, l as i64) * r.powi(l as i32) * (1.0 - r).powi((k - l) as i32))
        .collect()
}

/// Draw `s` distinct indices from 0..n, returned sorted.
pub fn sample_subset(n: usize, s: usize, seed: u64) -> Vec<usize> {
    let mut rng = substream(seed, Stream::Sample);
    let mut v = sample(&mut rng, n, s.min(n)).into_vec();
    v.sort_unstable();
    v
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn animal() -> ClusteringMatrix {
        // columns: mammals, marine, non-mammals, land
        ClusteringMatrix::from_strs(
            &["0110", "1001", "1100", "1001", "0110", "0011", "0011"],
            Ensemble::Uniform { delta: 2 },
        )
        .unwrap()
    }

    #[test]
    fn animal_gram_quantizes_to_response_pattern() {
        let printed = [
            [0, 0, 1, 0, 1, 1, 1],
            [0, 0, 1, 1, 0, 1, 1],
            [1, 1, 0, 1, 1, 0, 0],
            [0, 1, 1, 0, 0, 1, 1],
            [1, 0, 1, 0, 0, 1, 1],
            [1, 1, 0, 1, 1, 0, 1],
            [1, 1, 0, 1, 1, 1, 0],
        ];
        let g = gram(&animal()).quantized();
        for i in 0..7 {
            for j in 0..7 {
                assert_eq!(g.get(i, j), printed[i][j], "({i},{j})");
            }
        }
        assert_eq!(gram(&animal()).get(0, 4), 2);
    }

    #[test]
    fn delta_equal_k_gives_constant_gram() {
        let a = sample_uniform(&Params::new(20, 5, 5), 3).unwrap();
        let g = gram(&a);
        assert!((0..20).all(|i| (0..20).all(|j| g.get(i, j) == 5)));
    }

    #[test]
    fn invalid_delta_rejected() {
        assert!(sample_uniform(&Params { delta: 0, ..Params::new(5, 3, 1) }, 0).is_err());
        assert!(sample_uniform(&Params { delta: 4, ..Params::new(5, 3, 1) }, 0).is_err());
        assert!(sample_iid(&Params::new(5, 3, 1).with_p(1.5), 0).is_err());
    }

    #[test]
    fn iid_extremes() {
        let z = sample_iid(&Params::new(30, 6, 1).with_p(0.0), 1).unwrap();
        assert!(z.rows().iter().all(|&r| r == 0));
        let o = sample_iid(&Params::new(30, 6, 1).with_p(1.0), 1).unwrap();
        assert!(gram(&o).row(3).iter().all(|&v| v == 6));
    }

    #[test]
    fn text_round_trip() {
        let a = animal();
        let t = a.to_text();
        assert!(t.starts_with("7 4 2 uniform\n0110\n"));
        assert_eq!(ClusteringMatrix::from_text(&t).unwrap(), a);
        let b = sample_iid(&Params::new(9, 5, 1).with_p(0.3), 2).unwrap();
        assert_eq!(ClusteringMatrix::from_text(&b.to_text()).unwrap(), b);
        assert!(ClusteringMatrix::from_text("2 3 1 uniform\n100\n01x\n").is_err());
    }

    #[test]
    fn column_reversal_witness() {
        let a = animal();
        let rev = PermutationMap::new(vec![3, 2, 1, 0]).unwrap();
        let b = a.permute_columns(&rev);
        let w = is_column_permutation(&a, &b).unwrap().unwrap();
        assert_eq!(a.permute_columns(&w), b);
        assert_eq!(is_column_permutation(&a, &a).unwrap(), Some(PermutationMap::identity(4)));
    }

    #[test]
    fn binomial_convention() {
        assert_eq!(binom(6, 2), 15.0);
        assert_eq!(binom(2, 3), 0.0);
        assert_eq!(binom(-1, 0), 0.0);
        assert_eq!(binom(4, 0), 1.0);
    }
}
