//! Recovery from exact overlap counts.

use crate::bounds::disjoint_sample_size;
use crate::error::{Error, Result};
use crate::factorize::{complete_diagonal, find_basis_subset, real_rank_factorization, rounded_gram, solve_membership};
use crate::model::{sample_subset, Ensemble, Params, SimilarityMatrix};
use crate::oracle::{batch_pairwise, query_against, PairOracle};
use crate::rng::{child_seed, substream, Stream};
use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use serde::Serialize;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum AssignmentSource {
    Disjoint,
    Overlapping,
}

/// k clusters as sorted element lists.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ClusterAssignment {
    pub clusters: Vec<Vec<usize>>,
    pub source: AssignmentSource,
}

impl ClusterAssignment {
    /// Membership masks per element, cluster c mapped to bit c.
    pub fn masks(&self, n: usize) -> Vec<u64> {
        let mut rows = vec![0u64; n];
        for (c, members) in self.clusters.iter().enumerate() {
            for &i in members {
                rows[i] |= 1 << c;
            }
        }
        rows
    }

    /// Whether the clusters are pairwise disjoint and cover 0..n.
    pub fn is_partition(&self, n: usize) -> bool {
        let mut seen = vec![0u8; n];
        for members in &self.clusters {
            for &i in members {
                if i >= n {
                    return false;
                }
                seen[i] += 1;
            }
        }
        seen.iter().all(|&s| s == 1)
    }
}

/// Sample, split the sample into response classes, then place every other element
/// by querying class representatives in random order until the first positive.
pub fn find_membership_disjoint<O: PairOracle + ?Sized>(
    oracle: &mut O,
    k: usize,
    n_min: usize,
    epsilon: f64,
    seed: u64,
) -> Result<ClusterAssignment> {
    let n = oracle.n();
    let m = (disjoint_sample_size(n, k, n_min, epsilon)?.ceil() as usize).min(n);
    find_membership_disjoint_with_size(oracle, k, m, seed)
}

/// The disjoint algorithm with an explicit sample size.
pub fn find_membership_disjoint_with_size<O: PairOracle + ?Sized>(
    oracle: &mut O,
    k: usize,
    m: usize,
    seed: u64,
) -> Result<ClusterAssignment> {
    let n = oracle.n();
    let s = sample_subset(n, m, seed);
    let table = batch_pairwise(oracle, &s)?;
    let mut reps: Vec<usize> = Vec::new();
    let mut clusters: Vec<Vec<usize>> = Vec::new();
    for a in 0..s.len() {
        match reps.iter().position(|&r| table.get(a, r) > 0) {
            Some(c) => clusters[c].push(s[a]),
            None => {
                reps.push(a);
                clusters.push(vec![s[a]]);
            }
        }
    }
    if clusters.len() > k {
        return Err(Error::InvalidInput(format!("{} response classes exceed k = {k}", clusters.len())));
    }
    if clusters.len() < k {
        return Err(Error::RepresentativesMissing { found: clusters.len(), k });
    }
    let rep_elems: Vec<usize> = reps.iter().map(|&a| s[a]).collect();
    let mut rng = substream(seed, Stream::Order);
    let mut in_s = vec![false; n];
    for &i in &s {
        in_s[i] = true;
    }
    let mut order: Vec<usize> = (0..k).collect();
    for x in (0..n).filter(|&x| !in_s[x]) {
        order.shuffle(&mut rng);
        let mut placed = false;
        for &c in &order {
            if oracle.query(x, rep_elems[c])? > 0 {
                clusters[c].push(x);
                placed = true;
                break;
            }
        }
        if !placed {
            return Err(Error::UnassignedElement(x));
        }
    }
    for c in clusters.iter_mut() {
        c.sort_unstable();
    }
    clusters.sort();
    Ok(ClusterAssignment { clusters, source: AssignmentSource::Disjoint })
}

#[derive(Clone, Debug, Default)]
pub struct DirectOptions {
    /// Extra attempts with a fresh sample after a rank or basis failure.
    pub retries: usize,
}

fn sample_gram_diagonal(ensemble: Ensemble, g: &DMatrix<f64>, k: usize) -> Result<Vec<u8>> {
    match ensemble {
        Ensemble::Uniform { delta } => Ok(vec![delta as u8; g.nrows()]),
        Ensemble::Iid { .. } => complete_diagonal(g, k),
        Ensemble::External { .. } => Err(Error::NotApplicable("row weights of an external ground truth are unknown".into())),
    }
}

/// Full similarity matrix from a sample gram and k queries per remaining element.
pub fn find_similarity_direct<O: PairOracle + ?Sized>(
    oracle: &mut O,
    params: &Params,
    ensemble: Ensemble,
    s_size: usize,
    seed: u64,
    opts: &DirectOptions,
) -> Result<SimilarityMatrix> {
    let mut attempt = 0;
    loop {
        let s_seed = if attempt == 0 { seed } else { child_seed(seed, attempt as u64) };
        match similarity_attempt(oracle, params, ensemble, s_size, s_seed) {
            Err(Error::NoBasis(_) | Error::RankDeficient { .. } | Error::SingularBasis | Error::NonIntegral(_))
                if attempt < opts.retries =>
            {
                attempt += 1
            }
            r => return r,
        }
    }
}

fn similarity_attempt<O: PairOracle + ?Sized>(
    oracle: &mut O,
    params: &Params,
    ensemble: Ensemble,
    s_size: usize,
    seed: u64,
) -> Result<SimilarityMatrix> {
    let n = oracle.n();
    let k = params.k;
    let s = sample_subset(n, s_size, seed);
    let m = s.len();
    let table = batch_pairwise(oracle, &s)?;
    let mut g = DMatrix::from_fn(m, m, |a, b| table.get(a, b) as f64);
    let diag = sample_gram_diagonal(ensemble, &g, k)?;
    for (a, &d) in diag.iter().enumerate() {
        g[(a, a)] = d as f64;
    }
    if m == n {
        return Ok(SimilarityMatrix::from_fn(n, |i, j| g[(i, j)] as u8));
    }
    let b = real_rank_factorization(&g, k, params.tol)?;
    let t = find_basis_subset(&b, k)?;
    let basis = DMatrix::from_fn(k, k, |r, c| b.rows[(t[r], c)]);
    let targets: Vec<usize> = t.iter().map(|&a| s[a]).collect();
    let mut vecs: Vec<Option<DVector<f64>>> = vec![None; n];
    for (a, &i) in s.iter().enumerate() {
        vecs[i] = Some(b.row(a));
    }
    for x in 0..n {
        if vecs[x].is_some() {
            continue;
        }
        let c = query_against(oracle, x, &targets)?;
        let rhs = DVector::from_iterator(k, c.iter().map(|&v| v as f64));
        vecs[x] = Some(solve_membership(&basis, &rhs)?);
    }
    let vecs: Vec<DVector<f64>> = vecs.into_iter().map(|v| v.expect("every element covered")).collect();
    rounded_gram(&vecs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{gram, sample_iid, sample_uniform, ClusteringMatrix};
    use crate::oracle::{OracleHandle, OracleKind};
    use std::sync::Arc;

    fn animal() -> ClusteringMatrix {
        ClusteringMatrix::from_strs(
            &["0110", "1001", "1100", "1001", "0110", "0011", "0011"],
            Ensemble::Uniform { delta: 2 },
        )
        .unwrap()
    }

    #[test]
    fn animal_full_sample() {
        let a = Arc::new(animal());
        let mut o = OracleHandle::new(a.clone(), OracleKind::Direct, 0).unwrap();
        let p = Params::new(7, 4, 2);
        let sim = find_similarity_direct(&mut o, &p, a.ensemble(), 7, 1, &DirectOptions::default()).unwrap();
        assert_eq!(sim, gram(&a));
        assert_eq!(o.ledger_size(), 21);
    }

    #[test]
    fn uniform_and_iid_round_trip() {
        let p = Params::new(300, 6, 2);
        let a = Arc::new(sample_uniform(&p, 3).unwrap());
        let mut o = OracleHandle::new(a.clone(), OracleKind::Direct, 0).unwrap();
        let sim = find_similarity_direct(&mut o, &p, a.ensemble(), 60, 4, &DirectOptions::default()).unwrap();
        assert_eq!(sim, gram(&a));
        assert_eq!(o.ledger_size(), 60 * 59 / 2 + 6 * 240);

        let p = Params::new(300, 8, 0).with_p(0.5);
        let a = Arc::new(sample_iid(&p, 3).unwrap());
        let mut o = OracleHandle::new(a.clone(), OracleKind::Direct, 0).unwrap();
        let sim = find_similarity_direct(&mut o, &p, a.ensemble(), 80, 4, &DirectOptions::default()).unwrap();
        assert_eq!(sim, gram(&a));
    }

    #[test]
    fn disjoint_single_cluster() {
        let a = Arc::new(ClusteringMatrix::from_masks(1, vec![1; 20], Ensemble::Uniform { delta: 1 }).unwrap());
        let mut o = OracleHandle::new(a, OracleKind::Direct, 0).unwrap();
        let r = find_membership_disjoint(&mut o, 1, 20, 1.0, 9).unwrap();
        assert_eq!(r.clusters, vec![(0..20).collect::<Vec<_>>()]);
    }
}
