//! Binary factorization of exact grams and real rank factorization with basis selection.

use crate::error::{Error, Result};
use crate::model::{binom, ClusteringMatrix, Ensemble, SimilarityMatrix};
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;
use std::collections::HashMap;

pub const DEFAULT_NODE_BUDGET: u64 = 2_000_000;
const MAX_OPEN_DIAGONAL: usize = 4;

/// Real factor B with B·Bᵀ ≈ G.
#[derive(Clone, Debug)]
pub struct RealFactor {
    pub rows: DMatrix<f64>,
    pub tol: f64,
}

impl RealFactor {
    pub fn row(&self, i: usize) -> DVector<f64> {
        self.rows.row(i).transpose()
    }

    pub fn reconstruct(&self) -> DMatrix<f64> {
        &self.rows * self.rows.transpose()
    }
}

fn abs_tol(g: &DMatrix<f64>, tol: f64) -> f64 {
    tol * g.amax().max(1.0)
}

/// Greedy diagonal pivoting (pivoted Cholesky); stops after `max_rank` pivots or when
/// every residual diagonal is at most `tol_abs`.
fn cholesky_pivots(g: &DMatrix<f64>, max_rank: usize, tol_abs: f64) -> Vec<usize> {
    let m = g.nrows();
    let mut d: Vec<f64> = (0..m).map(|i| g[(i, i)]).collect();
    let mut l: Vec<Vec<f64>> = Vec::new();
    let mut piv = Vec::new();
    let mut taken = vec![false; m];
    while piv.len() < max_rank {
        let best = (0..m)
            .filter(|&i| !taken[i])
            .fold(None::<usize>, |b, i| match b {
                Some(j) if d[j] >= d[i] => Some(j),
                _ => Some(i),
            });
        let Some(p) = best else { break };
        if d[p] <= tol_abs {
            break;
        }
        let s = d[p].sqrt();
        let col: Vec<f64> = (0..m)
            .map(|i| {
                let v = g[(i, p)] - l.iter().map(|c| c[i] * c[p]).sum::<f64>();
                v / s
            })
            .collect();
        for i in 0..m {
            d[i] -= col[i] * col[i];
        }
        taken[p] = true;
        piv.push(p);
        l.push(col);
    }
    piv
}

/// k indices whose principal submatrix is nonsingular, by pivoted Cholesky.
pub fn find_full_rank_submatrix(g: &SimilarityMatrix, k: usize, tol: f64) -> Result<Vec<usize>> {
    let gf = g.to_f64();
    let piv = cholesky_pivots(&gf, k, abs_tol(&gf, tol));
    if piv.len() < k {
        return Err(Error::RankDeficient { rank: piv.len(), k });
    }
    Ok(piv)
}

/// Representatives of identical rows: (reps in first-appearance order, class of every row).
fn dedupe_rows<T: Eq + std::hash::Hash>(rows: impl Iterator<Item = T>) -> (Vec<usize>, Vec<usize>) {
    let mut seen: HashMap<T, usize> = HashMap::new();
    let mut reps = Vec::new();
    let class = rows
        .enumerate()
        .map(|(i, r)| {
            *seen.entry(r).or_insert_with(|| {
                reps.push(i);
                reps.len() - 1
            })
        })
        .collect();
    (reps, class)
}

/// Weight-Δ patterns that reuse `t` of the first `used` columns and open the next Δ−t
/// fresh ones. Fresh columns are interchangeable, so opening them in order loses nothing.
fn candidates(k: usize, delta: usize, used: usize) -> Vec<(u64, usize)> {
    let mut out = Vec::new();
    for t in (0..=delta.min(used)).rev() {
        let fresh = delta - t;
        if used + fresh > k {
            continue;
        }
        let prefix = if fresh == 0 { 0 } else { ((1u64 << fresh) - 1) << used };
        for_each_subset(used, t, |s| out.push((s | prefix, used + fresh)));
    }
    out.sort_unstable();
    out
}

/// Calls f on every t-subset of 0..u, in increasing mask order.
fn for_each_subset(u: usize, t: usize, mut f: impl FnMut(u64)) {
    if t == 0 {
        f(0);
        return;
    }
    if t > u {
        return;
    }
    let mut s: u64 = (1u64 << t) - 1;
    let limit = if u == 64 { u64::MAX } else { 1u64 << u };
    loop {
        f(s);
        let c = s & s.wrapping_neg();
        let r = s.wrapping_add(c);
        if r == 0 || r >= limit {
            break;
        }
        s = (((r ^ s) >> 2) / c) | r;
        if s >= limit {
            break;
        }
    }
}

struct Search<'a> {
    g: &'a [Vec<u8>],
    order: Vec<usize>,
    k: usize,
    delta: usize,
    assigned: Vec<u64>,
    nodes: u64,
    budget: u64,
    cache: HashMap<usize, Vec<(u64, usize)>>,
}

impl Search<'_> {
    fn run(&mut self, pos: usize, used: usize) -> Result<bool> {
        if pos == self.order.len() {
            return Ok(true);
        }
        let row = self.order[pos];
        let (k, delta) = (self.k, self.delta);
        let cands = self.cache.entry(used).or_insert_with(|| candidates(k, delta, used)).clone();
        for (mask, next_used) in cands {
            self.nodes += 1;
            if self.nodes > self.budget {
                return Err(Error::BudgetExhausted("factorization1"));
            }
            let ok = (0..pos).all(|m| (mask & self.assigned[m]).count_ones() as u8 == self.g[row][self.order[m]]);
            if ok {
                self.assigned[pos] = mask;
                if self.run(pos + 1, next_used)? {
                    return Ok(true);
                }
            }
        }
        Ok(false)
    }
}

/// Binary factor with all rows of weight Δ reproducing `g` exactly.
pub fn factorization1(g: &SimilarityMatrix, k: usize, delta: usize) -> Result<ClusteringMatrix> {
    factorization1_with_budget(g, k, delta, DEFAULT_NODE_BUDGET)
}

pub fn factorization1_with_budget(g: &SimilarityMatrix, k: usize, delta: usize, budget: u64) -> Result<ClusteringMatrix> {
    if delta < 1 || delta > k || k > crate::model::MAX_K {
        return Err(Error::InvalidParams(format!("delta = {delta}, k = {k}")));
    }
    let n = g.n();
    if (0..n).any(|i| g.get(i, i) as usize != delta) {
        return Err(Error::FactorizationFailed);
    }
    let (reps, class) = dedupe_rows((0..n).map(|i| g.row(i)));
    let red: Vec<Vec<u8>> = reps.iter().map(|&a| reps.iter().map(|&b| g.get(a, b)).collect()).collect();
    if reps.len() as f64 > binom(k as i64, delta as i64) {
        return Err(Error::FactorizationFailed);
    }
    let gf = DMatrix::from_fn(reps.len(), reps.len(), |a, b| red[a][b] as f64);
    let mut order = cholesky_pivots(&gf, k, abs_tol(&gf, 1e-8));
    let mut rest: Vec<usize> = (0..reps.len()).filter(|r| !order.contains(r)).collect();
    rest.sort_unstable();
    order.extend(rest);
    let mut search = Search {
        g: &red,
        order,
        k,
        delta,
        assigned: vec![0; reps.len()],
        nodes: 0,
        budget,
        cache: HashMap::new(),
    };
    if !search.run(0, 0)? {
        return Err(Error::FactorizationFailed);
    }
    let mut by_rep = vec![0u64; reps.len()];
    for (pos, &r) in search.order.iter().enumerate() {
        by_rep[r] = search.assigned[pos];
    }
    let rows: Vec<u64> = class.iter().map(|&c| by_rep[c]).collect();
    let out = ClusteringMatrix::from_masks(k, rows, Ensemble::Uniform { delta })?;
    if crate::model::gram(&out) != *g {
        return Err(Error::FactorizationFailed);
    }
    Ok(out)
}

/// Read memberships off a k×k identity principal submatrix of `g`.
pub fn factorization2(g: &SimilarityMatrix, k: usize) -> Result<ClusteringMatrix> {
    let n = g.n();
    let mut units: Vec<usize> = Vec::new();
    for i in 0..n {
        if g.get(i, i) == 1 && units.iter().all(|&t| g.get(i, t) == 0) {
            units.push(i);
            if units.len() == k {
                break;
            }
        }
    }
    if units.len() < k {
        return Err(Error::NotApplicable(format!("only {} of {k} unit rows present", units.len())));
    }
    let mut rows = Vec::with_capacity(n);
    for i in 0..n {
        let mut mask = 0u64;
        for (c, &t) in units.iter().enumerate() {
            match g.get(i, t) {
                0 => {}
                1 => mask |= 1 << c,
                _ => return Err(Error::FactorizationFailed),
            }
        }
        rows.push(mask);
    }
    let ones: u32 = rows.iter().map(|r| r.count_ones()).sum();
    let p = ones as f64 / (n * k).max(1) as f64;
    let out = ClusteringMatrix::from_masks(k, rows, Ensemble::Iid { p })?;
    if crate::model::gram(&out) != *g {
        return Err(Error::FactorizationFailed);
    }
    Ok(out)
}

/// B = U·√Λ over the top k eigenpairs. Identical rows are factored once.
pub fn real_rank_factorization(g: &DMatrix<f64>, k: usize, tol: f64) -> Result<RealFactor> {
    let m = g.nrows();
    if g.ncols() != m {
        return Err(Error::InvalidInput("gram must be square".into()));
    }
    let tol_abs = abs_tol(g, tol);
    let (reps, class) = dedupe_rows((0..m).map(|i| g.row(i).iter().map(|v| v.to_bits()).collect::<Vec<u64>>()));
    let d = reps.len();
    let red = DMatrix::from_fn(d, d, |a, b| 0.5 * (g[(reps[a], reps[b])] + g[(reps[b], reps[a])]));
    let eig = SymmetricEigen::new(red);
    let mut idx: Vec<usize> = (0..d).collect();
    idx.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    if let Some(&last) = idx.last() {
        let lo = eig.eigenvalues[last];
        if lo < -tol_abs {
            return Err(Error::NotPsd(lo));
        }
    }
    let rank = idx.iter().filter(|&&i| eig.eigenvalues[i] > tol_abs).count();
    if rank > k {
        return Err(Error::RankTooHigh { rank, k });
    }
    let mut red_b = DMatrix::zeros(d, k);
    for (c, &e) in idx.iter().take(rank).enumerate() {
        let s = eig.eigenvalues[e].max(0.0).sqrt();
        for a in 0..d {
            red_b[(a, c)] = eig.eigenvectors[(a, e)] * s;
        }
    }
    let rows = DMatrix::from_fn(m, k, |i, c| red_b[(class[i], c)]);
    Ok(RealFactor { rows, tol: tol_abs })
}

/// k rows of B spanning its row space, by pivoted Gram-Schmidt.
pub fn find_basis_subset(b: &RealFactor, k: usize) -> Result<Vec<usize>> {
    let m = b.rows.nrows();
    let mut resid: Vec<DVector<f64>> = (0..m).map(|i| b.row(i)).collect();
    let max_norm = resid.iter().map(|r| r.norm()).fold(0.0, f64::max);
    let thresh = 1e-6 * max_norm.max(1.0);
    let mut chosen = Vec::with_capacity(k);
    let mut taken = vec![false; m];
    while chosen.len() < k {
        let best = (0..m)
            .filter(|&i| !taken[i])
            .map(|i| (i, resid[i].norm()))
            .fold(None::<(usize, f64)>, |acc, (i, v)| match acc {
                Some((_, bv)) if bv >= v => acc,
                _ => Some((i, v)),
            });
        match best {
            Some((p, v)) if v > thresh => {
                let dir = &resid[p] / v;
                for (i, r) in resid.iter_mut().enumerate() {
                    if !taken[i] {
                        let proj = r.dot(&dir);
                        *r -= &dir * proj;
                    }
                }
                taken[p] = true;
                chosen.push(p);
            }
            _ => return Err(Error::NoBasis(k)),
        }
    }
    Ok(chosen)
}

/// Solve basis · x = rhs.
pub fn solve_membership(basis: &DMatrix<f64>, rhs: &DVector<f64>) -> Result<DVector<f64>> {
    if basis.nrows() != basis.ncols() || basis.nrows() != rhs.len() {
        return Err(Error::InvalidInput("basis must be square and match rhs".into()));
    }
    let lu = basis.clone().lu();
    if !lu.is_invertible() || lu.determinant().abs() < 1e-12 {
        return Err(Error::SingularBasis);
    }
    lu.solve(rhs).ok_or(Error::SingularBasis)
}

/// Round to the nearest integer, failing if the value is further than 1e-6 from it.
pub fn round_exact(x: f64) -> Result<u8> {
    let r = x.round();
    if (x - r).abs() > 1e-6 || !(0.0..=255.0).contains(&r) {
        return Err(Error::NonIntegral(x));
    }
    Ok(r as u8)
}

/// All pairwise inner products of real membership vectors, each required to be integral.
pub fn rounded_gram(vecs: &[DVector<f64>]) -> Result<SimilarityMatrix> {
    let n = vecs.len();
    let rows: Vec<Result<Vec<u8>>> = (0..n)
        .into_par_iter()
        .map(|i| (0..n).map(|j| round_exact(vecs[i].dot(&vecs[j]))).collect())
        .collect();
    let rows = rows.into_iter().collect::<Result<Vec<_>>>()?;
    SimilarityMatrix::from_rows(&rows)
}

/// Disjoint halves (P, R) of the indices outside `avoid` with rank G[R,P] = k,
/// together with the rank-k pseudo-inverse of G[R,P]. Only off-diagonal entries are read.
fn cross_split(g: &DMatrix<f64>, avoid: Option<usize>, k: usize) -> Option<(Vec<usize>, Vec<usize>, DMatrix<f64>)> {
    use rand::seq::SliceRandom;
    let mut pool: Vec<usize> = (0..g.nrows()).filter(|&i| Some(i) != avoid).collect();
    let half = (pool.len() / 2).min(3 * k.max(1));
    if half < k {
        return None;
    }
    let mut rng = crate::rng::substream(avoid.map_or(0, |i| i as u64 + 1), crate::rng::Stream::Order);
    for attempt in 0..256 {
        if attempt > 0 {
            pool.shuffle(&mut rng);
        }
        let (p, r) = (pool[..half].to_vec(), pool[half..2 * half].to_vec());
        let grp = DMatrix::from_fn(half, half, |a, b| g[(r[a], p[b])]);
        let svd = grp.svd(true, true);
        let mut order: Vec<usize> = (0..half).collect();
        order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
        let top = svd.singular_values[order[0]].max(1.0);
        if k > 0 && svd.singular_values[order[k - 1]] <= 1e-8 * top {
            continue;
        }
        let (u, vt) = (svd.u.as_ref()?, svd.v_t.as_ref()?);
        let mut pinv = DMatrix::zeros(half, half);
        for &s in &order[..k] {
            let sv = svd.singular_values[s];
            pinv += vt.row(s).transpose() * u.column(s).transpose() / sv;
        }
        return Some((p, r, pinv));
    }
    None
}

/// Diagonal of a rank-k gram recovered from its off-diagonal entries alone.
/// For disjoint P, R whose factor rows both span ℝᵏ, G_ii = g_{iP}ᵀ G[R,P]⁺ g_{iR}.
/// Entries with no such split are filled by searching integer values for the unique rank-k PSD completion.
pub fn complete_diagonal(g: &DMatrix<f64>, k: usize) -> Result<Vec<u8>> {
    let m = g.nrows();
    let shared = cross_split(g, None, k).ok_or(Error::NoBasis(k))?;
    let solved: Vec<Option<u8>> = (0..m)
        .map(|i| {
            let own;
            let (p, r, pinv) = if shared.0.contains(&i) || shared.1.contains(&i) {
                match cross_split(g, Some(i), k) {
                    Some(s) => {
                        own = s;
                        (&own.0, &own.1, &own.2)
                    }
                    None => return Ok(None),
                }
            } else {
                (&shared.0, &shared.1, &shared.2)
            };
            let gi_p = DVector::from_fn(p.len(), |a, _| g[(i, p[a])]);
            let gi_r = DVector::from_fn(r.len(), |a, _| g[(i, r[a])]);
            round_exact(gi_p.dot(&(pinv * gi_r))).map(Some)
        })
        .collect::<Result<_>>()?;
    let open: Vec<usize> = (0..m).filter(|&i| solved[i].is_none()).collect();
    let mut out: Vec<u8> = solved.iter().map(|d| d.unwrap_or(0)).collect();
    if open.is_empty() {
        return Ok(out);
    }
    if open.len() > MAX_OPEN_DIAGONAL {
        return Err(Error::NoBasis(k));
    }
    let lo: Vec<u8> = open
        .iter()
        .map(|&i| (0..m).filter(|&j| j != i).map(|j| g[(i, j)].round() as u8).max().unwrap_or(0))
        .collect();
    let tol = 1e-6 * g.amax().max(1.0);
    let mut filled = g.clone();
    for i in 0..m {
        filled[(i, i)] = out[i] as f64;
    }
    let mut pick = lo.clone();
    let mut found: Option<Vec<u8>> = None;
    loop {
        for (slot, &i) in open.iter().enumerate() {
            filled[(i, i)] = pick[slot] as f64;
        }
        let mut ev: Vec<f64> = SymmetricEigen::new(filled.clone()).eigenvalues.iter().copied().collect();
        ev.sort_by(|a, b| b.total_cmp(a));
        let low_rank = ev.get(k).is_none_or(|&v| v.abs() <= tol);
        if low_rank && ev.last().is_none_or(|&v| v >= -tol) {
            if found.is_some() {
                return Err(Error::NoBasis(k));
            }
            found = Some(pick.clone());
        }
        let mut slot = 0;
        while slot < pick.len() && pick[slot] as usize == k {
            pick[slot] = lo[slot];
            slot += 1;
        }
        if slot == pick.len() {
            break;
        }
        pick[slot] += 1;
    }
    let found = found.ok_or(Error::NoBasis(k))?;
    for (slot, &i) in open.iter().enumerate() {
        out[i] = found[slot];
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{gram, is_column_permutation, sample_iid, sample_uniform, Params};

    fn animal() -> ClusteringMatrix {
        ClusteringMatrix::from_strs(
            &["0110", "1001", "1100", "1001", "0110", "0011", "0011"],
            Ensemble::Uniform { delta: 2 },
        )
        .unwrap()
    }

    #[test]
    fn subsets_enumerated_in_order() {
        let mut v = Vec::new();
        for_each_subset(4, 2, |s| v.push(s));
        assert_eq!(v, vec![0b0011, 0b0101, 0b0110, 0b1001, 0b1010, 0b1100]);
        let mut w = Vec::new();
        for_each_subset(3, 0, |s| w.push(s));
        assert_eq!(w, vec![0]);
    }

    #[test]
    fn identity_pivots() {
        let g = SimilarityMatrix::from_fn(5, |i, j| u8::from(i == j));
        let mut p = find_full_rank_submatrix(&g, 5, 1e-8).unwrap();
        p.sort();
        assert_eq!(p, vec![0, 1, 2, 3, 4]);
        assert!(matches!(find_full_rank_submatrix(&gram(&animal()), 4, 1e-8), Err(Error::RankDeficient { rank: 3, k: 4 })));
    }

    #[test]
    fn animal_factorization_is_a_permutation() {
        let a = animal();
        let f = factorization1(&gram(&a), 4, 2).unwrap();
        assert!(is_column_permutation(&a, &f).unwrap().is_some());
    }

    #[test]
    fn counterexample_factor_reproduces_gram() {
        let b = ClusteringMatrix::from_strs(
            &["100100", "110000", "011000", "001010", "000011", "000101"],
            Ensemble::Uniform { delta: 2 },
        )
        .unwrap();
        let g = gram(&b);
        let f = factorization1(&g, 6, 2).unwrap();
        assert_eq!(gram(&f), g);
    }

    #[test]
    fn delta_equal_k_all_ones() {
        let g = SimilarityMatrix::from_fn(4, |_, _| 3);
        let f = factorization1(&g, 3, 3).unwrap();
        assert!(f.rows().iter().all(|&r| r == 0b111));
    }

    #[test]
    fn infeasible_gram_fails() {
        // three pairwise-overlapping weight-1 rows cannot exist
        let g = SimilarityMatrix::from_fn(3, |_, _| 1);
        assert_eq!(factorization1(&g, 3, 1).unwrap().rows(), &[1, 1, 1]);
        let bad = SimilarityMatrix::from_rows(&[vec![2, 2, 0], vec![2, 2, 2], vec![0, 2, 2]]).unwrap();
        assert_eq!(factorization1(&bad, 4, 2), Err(Error::FactorizationFailed));
    }

    #[test]
    fn budget_is_a_distinct_error() {
        let a = sample_uniform(&Params::new(60, 8, 3), 4).unwrap();
        assert_eq!(factorization1_with_budget(&gram(&a), 8, 3, 3), Err(Error::BudgetExhausted("factorization1")));
    }

    #[test]
    fn factorization2_round_trip() {
        let mut rows = vec![1u64, 2, 4, 8];
        let extra = sample_iid(&Params::new(30, 4, 1).with_p(0.5), 8).unwrap();
        rows.extend_from_slice(extra.rows());
        let a = ClusteringMatrix::from_masks(4, rows, Ensemble::Iid { p: 0.5 }).unwrap();
        let f = factorization2(&gram(&a), 4).unwrap();
        assert!(is_column_permutation(&a, &f).unwrap().is_some());
        let id = SimilarityMatrix::from_fn(3, |i, j| u8::from(i == j));
        assert_eq!(factorization2(&id, 3).unwrap().rows(), &[1, 2, 4]);
        assert!(matches!(factorization2(&gram(&animal()), 4), Err(Error::NotApplicable(_))));
    }

    #[test]
    fn real_factor_cases() {
        let g = DMatrix::from_element(1, 1, 4.0);
        let b = real_rank_factorization(&g, 1, 1e-8).unwrap();
        assert!((b.rows[(0, 0)].abs() - 2.0).abs() < 1e-12);

        let ga = gram(&animal()).to_f64();
        let b = real_rank_factorization(&ga, 4, 1e-8).unwrap();
        assert!((b.reconstruct() - &ga).amax() <= 1e-9);
        assert!(b.rows.column(3).amax() < 1e-12);

        let r3 = sample_uniform(&Params::new(40, 3, 1), 1).unwrap();
        let b = real_rank_factorization(&gram(&r3).to_f64(), 5, 1e-8).unwrap();
        assert!(b.rows.column(3).amax() == 0.0 && b.rows.column(4).amax() == 0.0);
        assert!(matches!(real_rank_factorization(&gram(&r3).to_f64(), 2, 1e-8), Err(Error::RankTooHigh { .. })));
        let neg = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(matches!(real_rank_factorization(&neg, 2, 1e-8), Err(Error::NotPsd(_))));
    }

    #[test]
    fn basis_cases() {
        let id = RealFactor { rows: DMatrix::identity(3, 3), tol: 0.0 };
        assert_eq!(find_basis_subset(&id, 3).unwrap(), vec![0, 1, 2]);
        let dup = RealFactor { rows: DMatrix::from_row_slice(3, 2, &[1.0, 1.0, 1.0, 1.0, 1.0, 1.0]), tol: 0.0 };
        assert_eq!(find_basis_subset(&dup, 2), Err(Error::NoBasis(2)));
        let x = solve_membership(&DMatrix::identity(3, 3), &DVector::from_vec(vec![1.0, 2.0, 3.0])).unwrap();
        assert_eq!(x.as_slice(), &[1.0, 2.0, 3.0]);
        assert_eq!(solve_membership(&DMatrix::zeros(2, 2), &DVector::zeros(2)), Err(Error::SingularBasis));
    }

    #[test]
    fn diagonal_completion_recovers_weights() {
        let a = sample_iid(&Params::new(40, 6, 1).with_p(0.5), 21).unwrap();
        let mut g = gram(&a).to_f64();
        for i in 0..40 {
            g[(i, i)] = 99.0;
        }
        let d = complete_diagonal(&g, 6).unwrap();
        for i in 0..40 {
            assert_eq!(d[i] as u32, a.row(i).count_ones(), "row {i}");
        }
    }
}
