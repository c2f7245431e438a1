//! Assumption-free recovery from noiseless binary responses through maximal-clique covers.

use crate::bits::BitRows;
use crate::direct::{AssignmentSource, ClusterAssignment};
use crate::error::{Error, Result};
use crate::model::{sample_subset, ClusteringMatrix, Params, SimilarityMatrix};
use crate::oracle::{batch_pairwise, query_bits, PairOracle, ResponseTable};
use std::collections::{BTreeSet, HashMap};

pub const DEFAULT_CLIQUE_BUDGET: u64 = 5_000_000;
pub const DEFAULT_COVER_BUDGET: u64 = 200_000;

/// Graph on sampled elements with an edge for every positive response.
#[derive(Clone, Debug)]
pub struct SimilarityGraph {
    pub vertices: Vec<usize>,
    adj: BitRows,
}

impl SimilarityGraph {
    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        self.adj.get(a, b)
    }

    pub fn degree(&self, a: usize) -> usize {
        self.adj.count(a) as usize
    }

    pub fn edge_count(&self) -> usize {
        (0..self.len()).map(|a| self.degree(a)).sum::<usize>() / 2
    }

    pub fn from_edges(vertices: Vec<usize>, edges: &[(usize, usize)]) -> Result<Self> {
        let m = vertices.len();
        let mut adj = BitRows::new(m, m);
        for &(a, b) in edges {
            if a >= m || b >= m {
                return Err(Error::IndexOutOfRange { index: a.max(b), n: m });
            }
            if a == b {
                return Err(Error::SelfQuery(a));
            }
            adj.set(a, b);
            adj.set(b, a);
        }
        Ok(SimilarityGraph { vertices, adj })
    }
}

pub fn build_graph(responses: &ResponseTable) -> SimilarityGraph {
    SimilarityGraph { vertices: responses.s.clone(), adj: responses.bit_rows() }
}

/// Vertices with equal closed neighbourhoods merged into one class.
struct Quotient {
    class_of: Vec<usize>,
    members: Vec<Vec<usize>>,
    adj: Vec<Vec<u64>>,
}

fn words(n: usize) -> usize {
    n.div_ceil(64).max(1)
}

fn quotient(g: &SimilarityGraph) -> Quotient {
    let m = g.len();
    let mut seen: HashMap<Vec<u64>, usize> = HashMap::new();
    let mut class_of = vec![0; m];
    let mut members: Vec<Vec<usize>> = Vec::new();
    for a in 0..m {
        let mut closed = g.adj.row(a).to_vec();
        closed[a / 64] |= 1 << (a % 64);
        let next = members.len();
        let c = *seen.entry(closed).or_insert(next);
        if c == next {
            members.push(Vec::new());
        }
        members[c].push(a);
        class_of[a] = c;
    }
    let d = members.len();
    let w = words(d);
    let mut adj = vec![vec![0u64; w]; d];
    for (c, ms) in members.iter().enumerate() {
        let a = ms[0];
        for b in 0..m {
            if g.has_edge(a, b) && class_of[b] != c {
                let cb = class_of[b];
                adj[c][cb / 64] |= 1 << (cb % 64);
            }
        }
    }
    Quotient { class_of, members, adj }
}

fn bits_iter(set: &[u64]) -> impl Iterator<Item = usize> + '_ {
    set.iter().enumerate().flat_map(|(wi, &w)| {
        let mut w = w;
        std::iter::from_fn(move || {
            if w == 0 {
                return None;
            }
            let t = w.trailing_zeros() as usize;
            w &= w - 1;
            Some(wi * 64 + t)
        })
    })
}

fn and(a: &[u64], b: &[u64]) -> Vec<u64> {
    a.iter().zip(b).map(|(x, y)| x & y).collect()
}

fn is_empty(a: &[u64]) -> bool {
    a.iter().all(|&w| w == 0)
}

struct Enumerator<'a> {
    adj: &'a [Vec<u64>],
    out: Vec<Vec<usize>>,
    nodes: u64,
    budget: u64,
}

impl Enumerator<'_> {
    fn expand(&mut self, r: &mut Vec<usize>, mut p: Vec<u64>, mut x: Vec<u64>) -> Result<()> {
        self.nodes += 1;
        if self.nodes > self.budget {
            return Err(Error::BudgetExhausted("maximal clique enumeration"));
        }
        if is_empty(&p) {
            if is_empty(&x) {
                self.out.push(r.clone());
            }
            return Ok(());
        }
        let pivot = bits_iter(&p)
            .chain(bits_iter(&x))
            .max_by_key(|&u| (p.iter().zip(&self.adj[u]).map(|(a, b)| (a & b).count_ones()).sum::<u32>(), std::cmp::Reverse(u)))
            .expect("p is nonempty");
        let cand: Vec<usize> = bits_iter(&p).filter(|&v| self.adj[pivot][v / 64] >> (v % 64) & 1 == 0).collect();
        for v in cand {
            r.push(v);
            self.expand(r, and(&p, &self.adj[v]), and(&x, &self.adj[v]))?;
            r.pop();
            p[v / 64] &= !(1 << (v % 64));
            x[v / 64] |= 1 << (v % 64);
        }
        Ok(())
    }
}

fn quotient_cliques(q: &Quotient, budget: u64) -> Result<Vec<Vec<usize>>> {
    let d = q.members.len();
    let mut p = vec![0u64; words(d)];
    for v in 0..d {
        p[v / 64] |= 1 << (v % 64);
    }
    let mut e = Enumerator { adj: &q.adj, out: Vec::new(), nodes: 0, budget };
    e.expand(&mut Vec::new(), p, vec![0u64; words(d)])?;
    let mut out = e.out;
    for c in out.iter_mut() {
        c.sort_unstable();
    }
    out.sort();
    Ok(out)
}

fn expand_classes(q: &Quotient, classes: &[usize]) -> Vec<usize> {
    let mut v: Vec<usize> = classes.iter().flat_map(|&c| q.members[c].iter().copied()).collect();
    v.sort_unstable();
    v
}

/// All maximal cliques as sorted lists of graph-local vertex indices.
pub fn maximal_cliques(graph: &SimilarityGraph) -> Result<Vec<Vec<usize>>> {
    maximal_cliques_with_budget(graph, DEFAULT_CLIQUE_BUDGET)
}

pub fn maximal_cliques_with_budget(graph: &SimilarityGraph, budget: u64) -> Result<Vec<Vec<usize>>> {
    if graph.is_empty() {
        return Ok(Vec::new());
    }
    let q = quotient(graph);
    let mut out: Vec<Vec<usize>> = quotient_cliques(&q, budget)?.iter().map(|c| expand_classes(&q, c)).collect();
    out.sort();
    Ok(out)
}

/// A cover of the graph by exactly k cliques.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CliqueCover {
    pub cliques: Vec<Vec<usize>>,
    /// Some(true) when the search proved no other cover exists, Some(false) when
    /// a second one was found, None when the budget ran out first.
    pub unique: Option<bool>,
}

struct CoverSearch<'a> {
    items: Vec<(usize, usize)>,
    sets: &'a [Vec<u64>],
    k: usize,
    delta2: bool,
    nodes: u64,
    budget: u64,
    exhausted: bool,
    found: BTreeSet<Vec<usize>>,
    first: Option<Vec<usize>>,
}

impl CoverSearch<'_> {
    fn contains(&self, c: usize, u: usize) -> bool {
        self.sets[c][u / 64] >> (u % 64) & 1 == 1
    }

    fn covers(&self, c: usize, item: (usize, usize)) -> bool {
        self.contains(c, item.0) && self.contains(c, item.1)
    }

    fn allowed(&self, selected: &[usize], c: usize) -> bool {
        if selected.contains(&c) {
            return false;
        }
        if !self.delta2 {
            return true;
        }
        let mut count = vec![0u8; self.sets[c].len() * 64];
        for &s in selected.iter().chain(std::iter::once(&c)) {
            for u in bits_iter(&self.sets[s]) {
                count[u] += 1;
                if count[u] > 2 {
                    return false;
                }
            }
        }
        true
    }

    fn run(&mut self, selected: &mut Vec<usize>) {
        if self.exhausted || self.found.len() >= 2 {
            return;
        }
        self.nodes += 1;
        if self.nodes > self.budget {
            self.exhausted = true;
            return;
        }
        let uncovered: Vec<(usize, usize)> =
            self.items.iter().copied().filter(|&it| !selected.iter().any(|&c| self.covers(c, it))).collect();
        if uncovered.is_empty() {
            if selected.len() == self.k {
                let mut key = selected.clone();
                key.sort_unstable();
                if self.found.insert(key.clone()) && self.first.is_none() {
                    self.first = Some(key);
                }
            }
            return;
        }
        if selected.len() == self.k {
            return;
        }
        let mut best: Option<((usize, usize), Vec<usize>)> = None;
        for &it in &uncovered {
            let cands: Vec<usize> = (0..self.sets.len()).filter(|&c| self.covers(c, it) && self.allowed(selected, c)).collect();
            if best.as_ref().is_none_or(|b| cands.len() < b.1.len()) {
                let empty = cands.is_empty();
                best = Some((it, cands));
                if empty {
                    return;
                }
            }
        }
        let (_, mut cands) = best.expect("uncovered is nonempty");
        let gain = |c: usize| uncovered.iter().filter(|&&it| self.covers(c, it)).count();
        cands.sort_by_key(|&c| (std::cmp::Reverse(gain(c)), c));
        for c in cands {
            selected.push(c);
            self.run(selected);
            selected.pop();
            if self.exhausted || self.found.len() >= 2 {
                return;
            }
        }
    }
}

fn cover_items(q: &Quotient) -> Vec<(usize, usize)> {
    let d = q.members.len();
    let mut items: Vec<(usize, usize)> = (0..d).map(|u| (u, u)).collect();
    for u in 0..d {
        items.extend(bits_iter(&q.adj[u]).filter(|&v| v > u).map(|v| (u, v)));
    }
    items
}

fn class_sets(q: &Quotient, cliques: &[Vec<usize>]) -> Vec<Vec<u64>> {
    let w = words(q.members.len());
    cliques
        .iter()
        .map(|c| {
            let mut s = vec![0u64; w];
            for &a in c {
                let u = q.class_of[a];
                s[u / 64] |= 1 << (u % 64);
            }
            s
        })
        .collect()
}

/// Exactly k of the given cliques covering every edge and vertex. With `delta2`, no
/// vertex may lie in three chosen cliques.
pub fn clique_cover_clusters(cliques: &[Vec<usize>], graph: &SimilarityGraph, k: usize, delta2: bool) -> Result<CliqueCover> {
    clique_cover_with_budget(cliques, graph, k, delta2, DEFAULT_COVER_BUDGET)
}

pub fn clique_cover_with_budget(
    cliques: &[Vec<usize>],
    graph: &SimilarityGraph,
    k: usize,
    delta2: bool,
    budget: u64,
) -> Result<CliqueCover> {
    let q = quotient(graph);
    let sets = class_sets(&q, cliques);
    let mut s = CoverSearch {
        items: cover_items(&q),
        sets: &sets,
        k,
        delta2,
        nodes: 0,
        budget,
        exhausted: false,
        found: BTreeSet::new(),
        first: None,
    };
    s.run(&mut Vec::new());
    match s.first {
        Some(first) => {
            let unique = if s.found.len() >= 2 {
                Some(false)
            } else if s.exhausted {
                None
            } else {
                Some(true)
            };
            Ok(CliqueCover { cliques: first.iter().map(|&c| cliques[c].clone()).collect(), unique })
        }
        None if s.exhausted => Err(Error::BudgetExhausted("clique cover search")),
        None => Err(Error::CoverNotFound),
    }
}

/// Greedy cover by uncovered-item count, lowest index on ties, with no limit on size.
pub fn greedy_cover(cliques: &[Vec<usize>], graph: &SimilarityGraph) -> Vec<Vec<usize>> {
    let q = quotient(graph);
    let sets = class_sets(&q, cliques);
    let mut uncovered = cover_items(&q);
    let inside = |c: usize, u: usize| sets[c][u / 64] >> (u % 64) & 1 == 1;
    let mut chosen = Vec::new();
    while !uncovered.is_empty() {
        let (best, gain) = (0..sets.len())
            .map(|c| (c, uncovered.iter().filter(|&&(u, v)| inside(c, u) && inside(c, v)).count()))
            .fold((0, 0), |acc, x| if x.1 > acc.1 { x } else { acc });
        if gain == 0 {
            break;
        }
        uncovered.retain(|&(u, v)| !(inside(best, u) && inside(best, v)));
        chosen.push(cliques[best].clone());
    }
    chosen
}

/// Place every element outside S into each cluster whose sampled members all answered
/// positive. `strict` turns an element that fits nowhere into an error; otherwise it joins
/// the cluster with the largest positive fraction and is listed.
pub fn assign_remaining<O: PairOracle + ?Sized>(
    oracle: &mut O,
    s: &[usize],
    clusters: &[Vec<usize>],
    strict: bool,
) -> Result<(ClusterAssignment, Vec<usize>)> {
    let n = oracle.n();
    let mut out: Vec<Vec<usize>> = clusters.iter().map(|c| c.iter().map(|&a| s[a]).collect()).collect();
    let mut in_s = vec![false; n];
    for &i in s {
        in_s[i] = true;
    }
    let mut unassigned = Vec::new();
    for x in (0..n).filter(|&x| !in_s[x]) {
        let bits = query_bits(oracle, x, s)?;
        let pos = |a: usize| bits[a / 64] >> (a % 64) & 1 == 1;
        let mut placed = false;
        for (c, members) in clusters.iter().enumerate() {
            if !members.is_empty() && members.iter().all(|&a| pos(a)) {
                out[c].push(x);
                placed = true;
            }
        }
        if !placed {
            if strict {
                return Err(Error::UnassignedElement(x));
            }
            unassigned.push(x);
            let frac = |m: &Vec<usize>| m.iter().filter(|&&a| pos(a)).count() as f64 / m.len().max(1) as f64;
            let best = (0..clusters.len()).fold(None::<(usize, f64)>, |acc, c| {
                let f = frac(&clusters[c]);
                match acc {
                    Some((_, bf)) if bf >= f => acc,
                    _ => Some((c, f)),
                }
            });
            if let Some((c, _)) = best {
                out[c].push(x);
            }
        }
    }
    for c in out.iter_mut() {
        c.sort_unstable();
    }
    out.sort();
    Ok((ClusterAssignment { clusters: out, source: AssignmentSource::Overlapping }, unassigned))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SeparationMode {
    /// Mass of each cluster outside the union of all others.
    Exclusive,
    /// Mass of each cluster outside the union of any two others.
    Triplet,
}

/// Largest α such that every cluster keeps more than α·n elements away from the others.
pub fn verify_separation(truth: &ClusteringMatrix, mode: SeparationMode) -> f64 {
    let (n, k) = (truth.n(), truth.k());
    if n == 0 || k == 0 {
        return 0.0;
    }
    let count = |p: usize, others: u64| truth.rows().iter().filter(|&&r| r >> p & 1 == 1 && r & others == 0).count();
    let all = if k == 64 { u64::MAX } else { (1u64 << k) - 1 };
    let min = match mode {
        SeparationMode::Triplet if k >= 3 => (0..k)
            .flat_map(|p| (0..k).flat_map(move |q| (q + 1..k).map(move |r| (p, q, r))))
            .filter(|&(p, q, r)| p != q && p != r)
            .map(|(p, q, r)| count(p, 1 << q | 1 << r))
            .min()
            .unwrap_or(0),
        _ => (0..k).map(|p| count(p, all & !(1 << p))).min().unwrap_or(0),
    };
    min as f64 / n as f64
}

#[derive(Clone, Debug, Default)]
pub struct WorstCaseOutcome {
    pub s: Vec<usize>,
    pub assignment: Option<ClusterAssignment>,
    pub similarity: Option<SimilarityMatrix>,
    pub cover_found: bool,
    pub unique: Option<bool>,
    pub unassigned: Vec<usize>,
    pub clique_count: usize,
    pub failure: Option<Error>,
}

/// Sample, build the response graph, cover it with k maximal cliques and extend to all
/// elements. If no exact cover is found a greedy cover is scored instead and the failure kept.
pub fn recover_worst_case<O: PairOracle + ?Sized>(
    oracle: &mut O,
    params: &Params,
    s_size: usize,
    seed: u64,
    delta2: bool,
) -> Result<WorstCaseOutcome> {
    if params.q > 0.0 {
        return Err(Error::NotApplicable("clique-cover recovery needs noiseless responses".into()));
    }
    let n = oracle.n();
    let s = sample_subset(n, s_size, seed);
    let table = batch_pairwise(oracle, &s)?;
    let graph = build_graph(&table);
    let mut out = WorstCaseOutcome { s: s.clone(), ..Default::default() };
    let cliques = match maximal_cliques(&graph) {
        Ok(c) => c,
        Err(e) => {
            out.failure = Some(e);
            return Ok(out);
        }
    };
    out.clique_count = cliques.len();
    let clusters = match clique_cover_clusters(&cliques, &graph, params.k, delta2) {
        Ok(cover) => {
            out.cover_found = true;
            out.unique = cover.unique;
            cover.cliques
        }
        Err(e) => {
            out.failure = Some(e);
            greedy_cover(&cliques, &graph)
        }
    };
    let (assignment, unassigned) = assign_remaining(oracle, &s, &clusters, false)?;
    out.unassigned = unassigned;
    let masks = assignment_masks(&assignment, n);
    out.similarity = Some(SimilarityMatrix::from_fn(n, |i, j| (masks[i] & masks[j]).count_ones() as u8));
    out.assignment = Some(assignment);
    Ok(out)
}

/// Per-element membership sets of an assignment with any number of clusters.
fn assignment_masks(a: &ClusterAssignment, n: usize) -> Vec<u128> {
    let mut rows = vec![0u128; n];
    for (c, members) in a.clusters.iter().enumerate().take(128) {
        for &i in members {
            rows[i] |= 1 << c;
        }
    }
    rows
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{gram, Ensemble};
    use crate::oracle::{OracleHandle, OracleKind};
    use std::sync::Arc;

    fn animal() -> ClusteringMatrix {
        ClusteringMatrix::from_strs(
            &["0110", "1001", "1100", "1001", "0110", "0011", "0011"],
            Ensemble::Uniform { delta: 2 },
        )
        .unwrap()
    }

    fn full_graph(a: &ClusteringMatrix) -> SimilarityGraph {
        let n = a.n();
        let mut edges = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                if a.inner(i, j) > 0 {
                    edges.push((i, j));
                }
            }
        }
        SimilarityGraph::from_edges((0..n).collect(), &edges).unwrap()
    }

    #[test]
    fn small_graphs() {
        let tri = SimilarityGraph::from_edges(vec![0, 1, 2], &[(0, 1), (1, 2), (0, 2)]).unwrap();
        assert_eq!(maximal_cliques(&tri).unwrap(), vec![vec![0, 1, 2]]);
        let path = SimilarityGraph::from_edges(vec![0, 1, 2], &[(0, 1), (1, 2)]).unwrap();
        assert_eq!(maximal_cliques(&path).unwrap(), vec![vec![0, 1], vec![1, 2]]);
        let empty = SimilarityGraph::from_edges(vec![0, 1], &[]).unwrap();
        assert_eq!(maximal_cliques(&empty).unwrap(), vec![vec![0], vec![1]]);
    }

    #[test]
    fn animal_cliques_and_cover() {
        let a = animal();
        let g = full_graph(&a);
        assert_eq!(g.edge_count(), 15);
        let cl = maximal_cliques(&g).unwrap();
        assert!(cl.contains(&vec![1, 2, 3]));
        assert!(cl.contains(&vec![0, 4, 5, 6]));
        let cover = clique_cover_clusters(&cl, &g, 4, false).unwrap();
        let mut got = cover.cliques.clone();
        got.sort();
        let mut want = a.clusters();
        want.sort();
        assert_eq!(got, want);
    }

    #[test]
    fn delta2_rejects_triple_overlap() {
        let g = SimilarityGraph::from_edges(vec![0, 1, 2, 3], &[(0, 1), (0, 2), (0, 3)]).unwrap();
        let cl = maximal_cliques(&g).unwrap();
        assert_eq!(cl.len(), 3);
        assert!(clique_cover_clusters(&cl, &g, 3, false).is_ok());
        assert_eq!(clique_cover_clusters(&cl, &g, 3, true), Err(Error::CoverNotFound));
    }

    #[test]
    fn separation_values() {
        let rows: Vec<u64> = (0..9).map(|i| 1 << (i % 3)).collect();
        let a = ClusteringMatrix::from_masks(3, rows, Ensemble::Uniform { delta: 1 }).unwrap();
        assert!((verify_separation(&a, SeparationMode::Exclusive) - 1.0 / 3.0).abs() < 1e-15);
        let b = ClusteringMatrix::from_strs(&["11", "10"], Ensemble::External { delta_max: 2 }).unwrap();
        assert_eq!(verify_separation(&b, SeparationMode::Exclusive), 0.0);
    }

    #[test]
    fn animal_end_to_end() {
        let a = Arc::new(animal());
        let mut o = OracleHandle::new(a.clone(), OracleKind::Quantized { q: 0.0 }, 0).unwrap();
        let p = Params::new(7, 4, 2);
        let out = recover_worst_case(&mut o, &p, 7, 3, false).unwrap();
        assert!(out.cover_found);
        assert_eq!(out.similarity.unwrap(), gram(&a));
    }
}
