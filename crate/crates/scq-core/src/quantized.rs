//! Recovery from noisy binary responses through triangle and degree counts.

use crate::bits::{and_count, BitRows};
use crate::dithered::{g_ell, mean_q};
use crate::error::{Error, Result};
use crate::factorize::{factorization1_with_budget, factorization2, find_basis_subset, real_rank_factorization, rounded_gram, solve_membership, DEFAULT_NODE_BUDGET};
use crate::model::{binom, overlap_distribution_uniform, sample_subset, ClusteringMatrix, Ensemble, Params, SimilarityMatrix};
use crate::oracle::{batch_pairwise, query_bits, PairOracle};
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// E[T_ij | ⟨Aᵢ,Aⱼ⟩ = ℓ] for the uniform ensemble behind a BSC(q).
pub fn expected_count_uniform(ell: usize, s_size: usize, k: usize, delta: usize, q: f64, within: bool) -> f64 {
    let terms = if within { s_size as f64 - 2.0 } else { s_size as f64 - 1.0 };
    let (k, d, l) = (k as i64, delta as i64, ell as i64);
    let total = binom(k, d);
    let miss = binom(k - d, d) / total;
    let miss_both = binom(k - 2 * d + l, d) / total;
    let f = 1.0 - 2.0 * q;
    terms.max(0.0) * ((1.0 - q).powi(2) - 2.0 * f * (1.0 - q) * miss + f * f * miss_both)
}

/// E[T_i | ‖Aᵢ‖₀ = ℓ] for the i.i.d. ensemble; `within` selects |S|−1 summands, otherwise |S|.
pub fn expected_degree_iid(ell: usize, s_size: usize, q: f64, p: f64, within: bool) -> f64 {
    let terms = if within { s_size as f64 - 1.0 } else { s_size as f64 };
    terms.max(0.0) * (1.0 - q - (1.0 - 2.0 * q) * (1.0 - p).powi(ell as i32))
}

/// E[T_ij | ⟨Aᵢ,Aⱼ⟩ = ℓ, ‖Aᵢ‖₀ = wᵢ, ‖Aⱼ‖₀ = wⱼ] for the i.i.d. ensemble.
pub fn expected_count_iid(ell: usize, s_size: usize, q: f64, p: f64, wi: usize, wj: usize, within: bool) -> f64 {
    let terms = if within { s_size as f64 - 2.0 } else { s_size as f64 - 1.0 };
    let f = 1.0 - 2.0 * q;
    let z = |e: i64| (1.0 - p).powi(e as i32);
    let union = wi as i64 + wj as i64 - ell as i64;
    terms.max(0.0) * ((1.0 - q).powi(2) - (1.0 - q) * f * (z(wi as i64) + z(wj as i64)) + f * f * z(union))
}

/// Admissible overlaps for rows of weights wi, wj given a positive response.
pub fn iid_overlap_range(wi: usize, wj: usize, k: usize) -> Option<(usize, usize)> {
    let lo = (wi + wj).saturating_sub(k).max(1);
    let hi = wi.min(wj);
    (lo <= hi).then_some((lo, hi))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Regime {
    UniformWithin,
    UniformCross,
    IidWithin,
    IidCross,
    DitheredWithin,
    DitheredCross,
    SupportSizeWithin,
    SupportSizeCross,
}

/// Hypothesis means E_ℓ for ℓ = offset, offset+1, ...
#[derive(Clone, Debug, PartialEq)]
pub struct HypothesisMeans {
    pub e: Vec<f64>,
    pub offset: usize,
    pub regime: Regime,
}

impl HypothesisMeans {
    pub fn is_strictly_increasing(&self) -> bool {
        self.e.windows(2).all(|w| w[0] < w[1])
    }
}

/// Nearest mean; ties go to the smaller ℓ.
pub fn infer_inner_product(t: f64, means: &HypothesisMeans) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (i, &e) in means.e.iter().enumerate() {
        let d = (t - e).abs();
        if d < best_d {
            best = i;
            best_d = d;
        }
    }
    means.offset + best
}

/// Triangle-count models for uniform rows.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum CountModel {
    Uniform { k: usize, delta: usize, q: f64 },
    Dithered { k: usize, delta: usize, sigma: f64 },
}

impl CountModel {
    fn kd(&self) -> (usize, usize) {
        match *self {
            CountModel::Uniform { k, delta, .. } | CountModel::Dithered { k, delta, .. } => (k, delta),
        }
    }

    pub fn means(&self, s_size: usize, within: bool) -> Result<HypothesisMeans> {
        let (k, delta) = self.kd();
        let offset = (2 * delta).saturating_sub(k);
        let e = match *self {
            CountModel::Uniform { q, .. } => (offset..=delta)
                .map(|l| expected_count_uniform(l, s_size, k, delta, q, within))
                .collect(),
            CountModel::Dithered { sigma, .. } => {
                let terms = if within { s_size as f64 - 2.0 } else { s_size as f64 - 1.0 };
                let single = mean_q(&overlap_distribution_uniform(k, delta), sigma);
                (offset..=delta)
                    .map(|l| Ok(terms.max(0.0) * (1.0 - 2.0 * single + g_ell(k, delta, sigma, l)?)))
                    .collect::<Result<Vec<f64>>>()?
            }
        };
        let regime = match (self, within) {
            (CountModel::Uniform { .. }, true) => Regime::UniformWithin,
            (CountModel::Uniform { .. }, false) => Regime::UniformCross,
            (CountModel::Dithered { .. }, true) => Regime::DitheredWithin,
            (CountModel::Dithered { .. }, false) => Regime::DitheredCross,
        };
        Ok(HypothesisMeans { e, offset, regime })
    }
}

/// How cross pairs (x outside S, a in S) are counted.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CrossMode {
    /// r ranges over S \ {a}.
    AllOthers,
    /// r ranges over S \ {a, x_a}, x_a the first element of S other than a.
    ExcludeAnchor,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct CountEntry {
    pub i: u32,
    pub j: u32,
    pub count: u32,
    pub within: bool,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct CountTable {
    pub entries: Vec<CountEntry>,
    pub basis_size: usize,
}

/// Responses of every element outside S against S, one packed row per element.
#[derive(Clone, Debug)]
pub struct CrossResponses {
    pub elements: Vec<usize>,
    pub bits: BitRows,
}

pub fn query_cross<O: PairOracle + ?Sized>(oracle: &mut O, s: &[usize]) -> Result<CrossResponses> {
    let n = oracle.n();
    let mut in_s = vec![false; n];
    for &x in s {
        in_s[x] = true;
    }
    let elements: Vec<usize> = (0..n).filter(|&x| !in_s[x]).collect();
    let mut bits = BitRows::new(0, s.len());
    for &x in &elements {
        bits.push_row(&query_bits(oracle, x, s)?);
    }
    Ok(CrossResponses { elements, bits })
}

#[inline]
fn anchor(a: usize) -> usize {
    usize::from(a == 0)
}

#[inline]
fn cross_count(within: &BitRows, xrow: &[u64], a: usize, mode: CrossMode) -> u32 {
    let t = and_count(within.row(a), xrow);
    match mode {
        CrossMode::AllOthers => t,
        CrossMode::ExcludeAnchor => {
            let x = anchor(a);
            let both = within.get(a, x) && xrow[x / 64] >> (x % 64) & 1 == 1;
            t - u32::from(both)
        }
    }
}

/// Triangle counts for every within-S pair (a < b) and every cross pair.
pub fn triangle_counts(s: &[usize], within: &BitRows, cross: Option<&CrossResponses>, mode: CrossMode) -> CountTable {
    let m = s.len();
    let mut entries = Vec::new();
    for a in 0..m {
        for b in a + 1..m {
            entries.push(CountEntry { i: s[a] as u32, j: s[b] as u32, count: and_count(within.row(a), within.row(b)), within: true });
        }
    }
    if let Some(c) = cross {
        for (r, &x) in c.elements.iter().enumerate() {
            for a in 0..m {
                entries.push(CountEntry { i: s[a] as u32, j: x as u32, count: cross_count(within, c.bits.row(r), a, mode), within: false });
            }
        }
    }
    CountTable { entries, basis_size: m }
}

/// Δ+1 count intervals, in increasing order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CountGrouping {
    pub groups: Vec<(u32, u32)>,
}

impl CountGrouping {
    pub fn label(&self, count: u32) -> Option<usize> {
        self.groups.iter().position(|&(lo, hi)| lo <= count && count <= hi)
    }
}

/// Cut the sorted counts at the Δ largest gaps and accept only if every group diameter
/// is strictly smaller than every gap between neighbouring groups.
pub fn group_counts(counts: &[u32], delta: usize) -> Result<CountGrouping> {
    let max = counts.iter().copied().max().unwrap_or(0) as usize;
    let mut seen = vec![false; max + 1];
    for &c in counts {
        seen[c as usize] = true;
    }
    let distinct: Vec<u32> = (0..=max).filter(|&v| seen[v]).map(|v| v as u32).collect();
    if distinct.len() < delta + 1 {
        return Err(Error::NotPossible(format!("{} distinct counts for {} groups", distinct.len(), delta + 1)));
    }
    let mut gaps: Vec<(u32, usize)> = distinct.windows(2).enumerate().map(|(i, w)| (w[1] - w[0], i)).collect();
    gaps.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    let mut cuts: Vec<usize> = gaps[..delta].iter().map(|g| g.1).collect();
    cuts.sort_unstable();
    let mut groups = Vec::with_capacity(delta + 1);
    let mut start = 0;
    for &c in &cuts {
        groups.push((distinct[start], distinct[c]));
        start = c + 1;
    }
    groups.push((distinct[start], distinct[distinct.len() - 1]));
    let diam = groups.iter().map(|&(lo, hi)| hi - lo).max().unwrap_or(0);
    let gap = groups.windows(2).map(|w| w[1].0 - w[0].1).min().unwrap_or(u32::MAX);
    if diam >= gap {
        return Err(Error::NotPossible(format!("largest group diameter {diam} is not below smallest gap {gap}")));
    }
    Ok(CountGrouping { groups })
}

/// Inferred inner products for the sample and for every outside element against it.
#[derive(Clone, Debug, Default)]
pub struct InferredProducts {
    pub s: Vec<usize>,
    /// |S|×|S|, diagonal holds the known or inferred row weight.
    pub within: Vec<u8>,
    pub cross_elements: Vec<usize>,
    /// (n−|S|)×|S|.
    pub cross: Vec<u8>,
}

impl InferredProducts {
    pub fn within_get(&self, a: usize, b: usize) -> u8 {
        self.within[a * self.s.len() + b]
    }

    pub fn cross_get(&self, r: usize, a: usize) -> u8 {
        self.cross[r * self.s.len() + a]
    }

    /// Every inferred off-diagonal pair as (global i, global j, ℓ̂).
    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize, u8)> + '_ {
        let m = self.s.len();
        let w = (0..m).flat_map(move |a| (a + 1..m).map(move |b| (self.s[a], self.s[b], self.within_get(a, b))));
        let c = self
            .cross_elements
            .iter()
            .enumerate()
            .flat_map(move |(r, &x)| (0..m).map(move |a| (self.s[a], x, self.cross_get(r, a))));
        w.chain(c)
    }
}

#[derive(Clone, Debug)]
pub struct RecoveryOptions {
    pub keep_counts: bool,
    pub factor_budget: u64,
}

impl Default for RecoveryOptions {
    fn default() -> Self {
        RecoveryOptions { keep_counts: false, factor_budget: DEFAULT_NODE_BUDGET }
    }
}

/// Result of a noisy recovery. A failed factorization or grouping is reported in
/// `failure` while the inferred products stay available for scoring.
#[derive(Clone, Debug, Default)]
pub struct QuantizedOutcome {
    pub similarity: Option<SimilarityMatrix>,
    pub clustering: Option<ClusteringMatrix>,
    pub inferred: InferredProducts,
    pub counts: Option<CountTable>,
    pub support_sizes: Option<Vec<(usize, u8)>>,
    pub inference_conflicts: usize,
    pub inconsistent_solves: usize,
    pub failure: Option<Error>,
}

fn within_inference(within: &BitRows, f: impl Fn(usize, usize, u32) -> u8 + Sync, diag: impl Fn(usize) -> u8 + Sync) -> Vec<u8> {
    let m = within.rows();
    let rows: Vec<Vec<u8>> = (0..m)
        .into_par_iter()
        .map(|a| {
            (0..m)
                .map(|b| if a == b { diag(a) } else { f(a, b, and_count(within.row(a), within.row(b))) })
                .collect()
        })
        .collect();
    rows.concat()
}

fn gram_of_masks(rows: &[u64]) -> SimilarityMatrix {
    SimilarityMatrix::from_fn(rows.len(), |i, j| (rows[i] & rows[j]).count_ones() as u8)
}

/// Binary memberships from products with a binary sample factor, by least squares then rounding.
/// Returns the masks and how many did not reproduce their products exactly.
fn solve_binary_rows(a_s: &[u64], k: usize, products: &[Vec<u8>]) -> Result<(Vec<u64>, usize)> {
    let m = a_s.len();
    let a = DMatrix::from_fn(m, k, |i, c| (a_s[i] >> c & 1) as f64);
    let ata = a.transpose() * &a;
    let lu = ata.lu();
    if !lu.is_invertible() {
        return Err(Error::NoBasis(k));
    }
    let mut bad = 0;
    let mut out = Vec::with_capacity(products.len());
    for c in products {
        let rhs = a.transpose() * DVector::from_iterator(m, c.iter().map(|&v| v as f64));
        let x = lu.solve(&rhs).ok_or(Error::SingularBasis)?;
        let mask = (0..k).fold(0u64, |acc, t| if x[t] >= 0.5 { acc | 1 << t } else { acc });
        if (0..m).any(|i| (a_s[i] & mask).count_ones() as u8 != c[i]) {
            bad += 1;
        }
        out.push(mask);
    }
    Ok((out, bad))
}

fn assemble(n: usize, s: &[usize], cross_elements: &[usize], s_rows: &[u64], x_rows: &[u64]) -> Vec<u64> {
    let mut rows = vec![0u64; n];
    for (a, &i) in s.iter().enumerate() {
        rows[i] = s_rows[a];
    }
    for (r, &x) in cross_elements.iter().enumerate() {
        rows[x] = x_rows[r];
    }
    rows
}

fn cross_rows_of(inferred: &InferredProducts) -> Vec<Vec<u8>> {
    let m = inferred.s.len();
    inferred.cross.chunks(m.max(1)).map(|c| c.to_vec()).take(inferred.cross_elements.len()).collect()
}

/// Sample, query, infer with the count model, factor, and extend to all elements.
pub fn recover_with_counts<O: PairOracle + ?Sized>(
    oracle: &mut O,
    params: &Params,
    model: &CountModel,
    s_size: usize,
    seed: u64,
    opts: &RecoveryOptions,
) -> Result<QuantizedOutcome> {
    let (n, k, delta) = (oracle.n(), params.k, params.delta);
    let s = sample_subset(n, s_size, seed);
    let m = s.len();
    let table = batch_pairwise(oracle, &s)?;
    let within = table.bit_rows();
    let cross = query_cross(oracle, &s)?;
    let mw = model.means(m, true)?;
    let mc = model.means(m, false)?;
    let w = within_inference(&within, |_, _, t| infer_inner_product(t as f64, &mw) as u8, |_| delta as u8);
    let xs: Vec<u8> = (0..cross.elements.len())
        .into_par_iter()
        .flat_map_iter(|r| {
            let row = cross.bits.row(r);
            let (within, mc) = (&within, &mc);
            (0..m).map(move |a| infer_inner_product(cross_count(within, row, a, CrossMode::AllOthers) as f64, mc) as u8)
        })
        .collect();
    let mut out = QuantizedOutcome {
        inferred: InferredProducts { s: s.clone(), within: w, cross_elements: cross.elements.clone(), cross: xs },
        counts: opts.keep_counts.then(|| triangle_counts(&s, &within, Some(&cross), CrossMode::AllOthers)),
        ..Default::default()
    };
    let g_s = SimilarityMatrix::from_fn(m, |a, b| out.inferred.within_get(a, b));
    let a_s = match factorization1_with_budget(&g_s, k, delta, opts.factor_budget) {
        Ok(a) => a,
        Err(e) => {
            out.failure = Some(e);
            return Ok(out);
        }
    };
    let (x_rows, bad) = match solve_binary_rows(a_s.rows(), k, &cross_rows_of(&out.inferred)) {
        Ok(v) => v,
        Err(e) => {
            out.failure = Some(e);
            return Ok(out);
        }
    };
    out.inconsistent_solves = bad;
    let rows = assemble(n, &s, &cross.elements, a_s.rows(), &x_rows);
    out.similarity = Some(gram_of_masks(&rows));
    out.clustering = ClusteringMatrix::from_masks(k, rows, Ensemble::Uniform { delta }).ok();
    Ok(out)
}

/// Known-q recovery for the uniform ensemble.
pub fn recover_uniform_quantized<O: PairOracle + ?Sized>(
    oracle: &mut O,
    params: &Params,
    s_size: usize,
    seed: u64,
    opts: &RecoveryOptions,
) -> Result<QuantizedOutcome> {
    let model = CountModel::Uniform { k: params.k, delta: params.delta, q: params.q };
    recover_with_counts(oracle, params, &model, s_size, seed, opts)
}

/// Support-size means for ℓ = 0..=k.
pub fn support_size_means(s_size: usize, q: f64, p: f64, k: usize, within: bool) -> HypothesisMeans {
    HypothesisMeans {
        e: (0..=k).map(|l| expected_degree_iid(l, s_size, q, p, within)).collect(),
        offset: 0,
        regime: if within { Regime::SupportSizeWithin } else { Regime::SupportSizeCross },
    }
}

pub fn infer_support_size(degree: u32, means: &HypothesisMeans) -> usize {
    infer_inner_product(degree as f64, means)
}

/// Overlap inference for one positively answered pair under the i.i.d. model.
/// Returns None when the weights admit no positive overlap.
fn iid_intersection(t: u32, s_size: usize, q: f64, p: f64, wi: usize, wj: usize, k: usize, within: bool) -> Option<u8> {
    let (lo, hi) = iid_overlap_range(wi, wj, k)?;
    let means = HypothesisMeans {
        e: (lo..=hi).map(|l| expected_count_iid(l, s_size, q, p, wi, wj, within)).collect(),
        offset: lo,
        regime: if within { Regime::IidWithin } else { Regime::IidCross },
    };
    Some(infer_inner_product(t as f64, &means) as u8)
}

/// Known-q recovery for the i.i.d. ensemble: support sizes, overlaps, unit-row factorization.
pub fn recover_iid_quantized<O: PairOracle + ?Sized>(
    oracle: &mut O,
    params: &Params,
    s_size: usize,
    seed: u64,
    opts: &RecoveryOptions,
) -> Result<QuantizedOutcome> {
    let (n, k, p, q) = (oracle.n(), params.k, params.p, params.q);
    let s = sample_subset(n, s_size, seed);
    let m = s.len();
    let table = batch_pairwise(oracle, &s)?;
    let within = table.bit_rows();
    let cross = query_cross(oracle, &s)?;

    let sw = support_size_means(m, q, p, k, true);
    let sc = support_size_means(m, q, p, k, false);
    let w_s: Vec<usize> = (0..m).map(|a| infer_support_size(within.count(a), &sw)).collect();
    let w_x: Vec<usize> = (0..cross.elements.len()).map(|r| infer_support_size(cross.bits.count(r), &sc)).collect();

    let conflicts = std::sync::atomic::AtomicUsize::new(0);
    let infer = |t: u32, wi: usize, wj: usize, positive: bool, within_pair: bool| -> u8 {
        if !positive {
            return 0;
        }
        iid_intersection(t, m, q, p, wi, wj, k, within_pair).unwrap_or_else(|| {
            conflicts.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
            0
        })
    };
    let w = within_inference(&within, |a, b, t| infer(t, w_s[a], w_s[b], within.get(a, b), true), |a| w_s[a] as u8);
    let xs: Vec<u8> = (0..cross.elements.len())
        .into_par_iter()
        .flat_map_iter(|r| {
            let row = cross.bits.row(r);
            let (within, w_s, w_x, infer) = (&within, &w_s, &w_x, &infer);
            (0..m).map(move |a| {
                let positive = row[a / 64] >> (a % 64) & 1 == 1;
                infer(cross_count(within, row, a, CrossMode::AllOthers), w_s[a], w_x[r], positive, false)
            })
        })
        .collect();
    let mut support: Vec<(usize, u8)> = s.iter().zip(&w_s).map(|(&i, &w)| (i, w as u8)).collect();
    support.extend(cross.elements.iter().zip(&w_x).map(|(&i, &w)| (i, w as u8)));
    support.sort_unstable();
    let mut out = QuantizedOutcome {
        inferred: InferredProducts { s: s.clone(), within: w, cross_elements: cross.elements.clone(), cross: xs },
        counts: opts.keep_counts.then(|| triangle_counts(&s, &within, Some(&cross), CrossMode::AllOthers)),
        support_sizes: Some(support),
        inference_conflicts: conflicts.into_inner(),
        ..Default::default()
    };
    let g_s = SimilarityMatrix::from_fn(m, |a, b| out.inferred.within_get(a, b));
    match factorization2(&g_s, k) {
        Ok(a_s) => {
            let (x_rows, bad) = match solve_binary_rows(a_s.rows(), k, &cross_rows_of(&out.inferred)) {
                Ok(v) => v,
                Err(e) => {
                    out.failure = Some(e);
                    return Ok(out);
                }
            };
            out.inconsistent_solves = bad;
            let rows = assemble(n, &s, &cross.elements, a_s.rows(), &x_rows);
            out.similarity = Some(gram_of_masks(&rows));
            let ones: u32 = rows.iter().map(|r| r.count_ones()).sum();
            let p_hat = ones as f64 / (n * k) as f64;
            out.clustering = ClusteringMatrix::from_masks(k, rows, Ensemble::Iid { p: p_hat }).ok();
        }
        Err(Error::NotApplicable(_)) => match similarity_by_real_factor(&out.inferred, n, k, params.tol) {
            Ok(sim) => out.similarity = Some(sim),
            Err(e) => out.failure = Some(e),
        },
        Err(e) => out.failure = Some(e),
    }
    Ok(out)
}

/// Real rank factorization of the sample gram, a basis from it, and membership solving
/// for everything outside the sample. Inner products must come out integral.
pub fn similarity_by_real_factor(inferred: &InferredProducts, n: usize, k: usize, tol: f64) -> Result<SimilarityMatrix> {
    let m = inferred.s.len();
    let g = DMatrix::from_fn(m, m, |a, b| inferred.within_get(a, b) as f64);
    let b = real_rank_factorization(&g, k, tol)?;
    let mut vecs: Vec<Option<DVector<f64>>> = vec![None; n];
    for (a, &i) in inferred.s.iter().enumerate() {
        vecs[i] = Some(b.row(a));
    }
    if !inferred.cross_elements.is_empty() {
        let t = find_basis_subset(&b, k)?;
        let basis = DMatrix::from_fn(k, k, |r, c| b.rows[(t[r], c)]);
        for (r, &x) in inferred.cross_elements.iter().enumerate() {
            let rhs = DVector::from_fn(k, |c, _| inferred.cross_get(r, t[c]) as f64);
            vecs[x] = Some(solve_membership(&basis, &rhs)?);
        }
    }
    let vecs: Vec<DVector<f64>> = vecs.into_iter().map(|v| v.expect("every element covered")).collect();
    rounded_gram(&vecs)
}

/// Noise-agnostic recovery: group the counts, read overlaps off the group order, factor.
pub fn recover_unknown_q<O: PairOracle + ?Sized>(
    oracle: &mut O,
    params: &Params,
    s_size: usize,
    seed: u64,
    opts: &RecoveryOptions,
) -> Result<QuantizedOutcome> {
    let (n, k, delta) = (oracle.n(), params.k, params.delta);
    let s = sample_subset(n, s_size, seed);
    let m = s.len();
    let table = batch_pairwise(oracle, &s)?;
    let within = table.bit_rows();
    let cross = query_cross(oracle, &s)?;
    let counts = triangle_counts(&s, &within, Some(&cross), CrossMode::ExcludeAnchor);
    let all: Vec<u32> = counts.entries.iter().map(|e| e.count).collect();
    let mut out = QuantizedOutcome {
        inferred: InferredProducts { s: s.clone(), cross_elements: cross.elements.clone(), ..Default::default() },
        ..Default::default()
    };
    let grouping = match group_counts(&all, delta) {
        Ok(g) => g,
        Err(e) => {
            out.counts = opts.keep_counts.then_some(counts);
            out.failure = Some(e);
            return Ok(out);
        }
    };
    let label = |c: u32| grouping.label(c).unwrap_or(0) as u8;
    let mut w = vec![delta as u8; m * m];
    let mut xs = vec![0u8; cross.elements.len() * m];
    let mut it = counts.entries.iter();
    for a in 0..m {
        for b in a + 1..m {
            let l = label(it.next().expect("within entry").count);
            w[a * m + b] = l;
            w[b * m + a] = l;
        }
    }
    for v in xs.iter_mut() {
        *v = label(it.next().expect("cross entry").count);
    }
    out.inferred.within = w;
    out.inferred.cross = xs;
    out.counts = opts.keep_counts.then_some(counts);
    match similarity_by_real_factor(&out.inferred, n, k, params.tol) {
        Ok(sim) => out.similarity = Some(sim),
        Err(e) => out.failure = Some(e),
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_means_hand_values() {
        assert!((expected_count_uniform(0, 12, 6, 2, 0.0, true) - 8.0 / 3.0).abs() < 1e-12);
        assert!((expected_count_uniform(2, 12, 6, 2, 0.0, true) - 6.0).abs() < 1e-12);
        let e: Vec<f64> = (0..=2).map(|l| expected_count_uniform(l, 50, 8, 2, 0.5, true)).collect();
        assert!((e[0] - e[2]).abs() < 1e-12);
    }

    #[test]
    fn degree_hand_values() {
        assert!((expected_degree_iid(3, 11, 0.0, 0.3, true) - 6.57).abs() < 1e-12);
        assert!((expected_degree_iid(0, 11, 0.2, 0.3, true) - 2.0).abs() < 1e-12);
        let a = expected_degree_iid(1, 30, 0.5, 0.3, false);
        assert!((a - expected_degree_iid(5, 30, 0.5, 0.3, false)).abs() < 1e-12);
    }

    #[test]
    fn tie_breaks_low() {
        let m = HypothesisMeans { e: vec![0.0, 2.0, 4.0], offset: 0, regime: Regime::UniformWithin };
        assert_eq!(infer_inner_product(1.0, &m), 0);
        assert_eq!(infer_inner_product(2.0, &m), 1);
        assert_eq!(infer_inner_product(3.5, &m), 2);
    }

    #[test]
    fn grouping_examples() {
        let g = group_counts(&[0, 0, 1, 10, 11, 20], 2).unwrap();
        assert_eq!(g.groups, vec![(0, 1), (10, 11), (20, 20)]);
        assert_eq!(g.label(11), Some(1));
        assert!(matches!(group_counts(&[5, 5, 5], 1), Err(Error::NotPossible(_))));
        assert!(matches!(group_counts(&[0, 4, 5, 9], 1), Err(Error::NotPossible(_))));
        assert_eq!(group_counts(&[0, 1, 7, 8], 1).unwrap().groups, vec![(0, 1), (7, 8)]);
    }

    #[test]
    fn overlap_range() {
        assert_eq!(iid_overlap_range(8, 8, 8), Some((8, 8)));
        assert_eq!(iid_overlap_range(3, 2, 8), Some((1, 2)));
        assert_eq!(iid_overlap_range(6, 5, 8), Some((3, 5)));
        assert_eq!(iid_overlap_range(0, 4, 8), None);
    }
}
