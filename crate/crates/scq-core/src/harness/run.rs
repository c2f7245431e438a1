//! Trial execution and deterministic sweeps.

use super::config::{ExperimentConfig, GridPoint};
use super::instances::planted_instance;
use crate::bounds::{necessary_omega, queries_total, sufficient_s, usable_sample_size, BoundExtras, Scenario};
use crate::direct::{find_membership_disjoint_with_size, find_similarity_direct, ClusterAssignment, DirectOptions};
use crate::dithered::recover_dithered;
use crate::error::{Error, Result};
use crate::model::{gram, sample_iid, sample_uniform, ClusteringMatrix, Ensemble, Params, SimilarityMatrix};
use crate::oracle::{OracleHandle, OracleKind, PairOracle};
use crate::quantized::{recover_iid_quantized, recover_uniform_quantized, recover_unknown_q, CountTable, InferredProducts, RecoveryOptions};
use crate::rng::{child_seed, noise_seed};
use crate::worstcase::{recover_worst_case, verify_separation, SeparationMode};
use rayon::prelude::*;
use serde::Serialize;
use std::sync::Arc;
use std::time::Instant;

/// Whatever a recovery produced, with its failure if any.
#[derive(Clone, Debug, Default)]
pub struct Recovered {
    pub similarity: Option<SimilarityMatrix>,
    pub assignment: Option<ClusterAssignment>,
    pub inferred: Option<InferredProducts>,
    pub counts: Option<CountTable>,
    pub support_sizes: Option<Vec<(usize, u8)>>,
    pub unique_cover: Option<bool>,
    pub failure: Option<Error>,
}

impl Recovered {
    fn failed(e: Error) -> Self {
        Recovered { failure: Some(e), ..Default::default() }
    }
}

pub fn oracle_kind(scenario: Scenario, params: &Params) -> OracleKind {
    match scenario {
        Scenario::DisjointDirect | Scenario::DirectUniform | Scenario::DirectIid => OracleKind::Direct,
        Scenario::DitheredUniform | Scenario::DitheredIid => OracleKind::Dithered { sigma: params.sigma },
        _ => OracleKind::Quantized { q: params.q },
    }
}

fn masks_similarity(a: &ClusterAssignment, n: usize) -> SimilarityMatrix {
    let mut rows = vec![0u128; n];
    for (c, members) in a.clusters.iter().enumerate().take(128) {
        for &i in members {
            rows[i] |= 1 << c;
        }
    }
    SimilarityMatrix::from_fn(n, |i, j| (rows[i] & rows[j]).count_ones() as u8)
}

/// Run the scenario's recovery algorithm against any oracle.
pub fn recover<O: PairOracle + ?Sized>(
    scenario: Scenario,
    oracle: &mut O,
    params: &Params,
    s_size: usize,
    seed: u64,
    opts: &RecoveryOptions,
    retries: usize,
) -> Recovered {
    let n = oracle.n();
    let from_quantized = |r: Result<crate::quantized::QuantizedOutcome>| match r {
        Ok(o) => Recovered {
            similarity: o.similarity,
            inferred: Some(o.inferred),
            counts: o.counts,
            support_sizes: o.support_sizes,
            failure: o.failure,
            ..Default::default()
        },
        Err(e) => Recovered::failed(e),
    };
    match scenario {
        Scenario::DisjointDirect => {
            match find_membership_disjoint_with_size(oracle, params.k, s_size, seed) {
                Ok(a) => Recovered { similarity: Some(masks_similarity(&a, n)), assignment: Some(a), ..Default::default() },
                Err(e) => Recovered::failed(e),
            }
        }
        Scenario::DirectUniform | Scenario::DirectIid => {
            let ens = if scenario == Scenario::DirectUniform {
                Ensemble::Uniform { delta: params.delta }
            } else {
                Ensemble::Iid { p: params.p }
            };
            match find_similarity_direct(oracle, params, ens, s_size, seed, &DirectOptions { retries }) {
                Ok(s) => Recovered { similarity: Some(s), ..Default::default() },
                Err(e) => Recovered::failed(e),
            }
        }
        Scenario::QuantizedUniform => from_quantized(recover_uniform_quantized(oracle, params, s_size, seed, opts)),
        Scenario::QuantizedIid => from_quantized(recover_iid_quantized(oracle, params, s_size, seed, opts)),
        Scenario::UnknownQ => from_quantized(recover_unknown_q(oracle, params, s_size, seed, opts)),
        Scenario::DitheredUniform => from_quantized(recover_dithered(oracle, params, s_size, seed, opts)),
        Scenario::DitheredIid => Recovered::failed(Error::NotApplicable("no recovery algorithm for this scenario".into())),
        Scenario::WorstCase | Scenario::WorstCaseDelta2 => {
            match recover_worst_case(oracle, params, s_size, seed, scenario == Scenario::WorstCaseDelta2) {
                Ok(o) => Recovered {
                    similarity: o.similarity,
                    assignment: o.assignment,
                    unique_cover: o.unique,
                    failure: o.failure.or_else(|| o.unassigned.first().map(|&x| Error::UnassignedElement(x))),
                    ..Default::default()
                },
                Err(e) => Recovered::failed(e),
            }
        }
    }
}

/// Off-diagonal entries where the two matrices differ; a flipped symmetric pair counts twice.
pub fn gram_error(estimate: &SimilarityMatrix, truth: &SimilarityMatrix) -> Result<u64> {
    if estimate.n() != truth.n() {
        return Err(Error::InvalidInput(format!("shape mismatch: {} vs {}", estimate.n(), truth.n())));
    }
    let n = truth.n();
    let mut e = 0;
    for i in 0..n {
        for j in 0..n {
            if i != j && estimate.get(i, j) != truth.get(i, j) {
                e += 1;
            }
        }
    }
    Ok(e)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrialResult {
    pub scenario: Scenario,
    pub point: usize,
    pub trial: usize,
    pub seed: u64,
    pub n: usize,
    pub k: usize,
    pub delta: usize,
    pub p: f64,
    pub q: f64,
    pub sigma: f64,
    pub s_size: usize,
    pub queries: u64,
    /// Closed-form query count; an upper bound for the disjoint scenario.
    pub queries_expected: Option<u64>,
    pub success: bool,
    pub gram_error: Option<u64>,
    pub correct_inferences: Option<u64>,
    pub wrong_inferences: Option<u64>,
    pub support_errors: Option<u64>,
    pub alpha: Option<f64>,
    pub omega_necessary: Option<f64>,
    pub unique_cover: Option<bool>,
    pub failure: String,
    #[serde(skip)]
    pub wall_ms: f64,
}

/// One row of the count export.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct CountRow {
    pub i: u32,
    pub j: u32,
    pub count: u32,
    pub true_ell: u8,
    pub inferred_ell: u8,
}

#[derive(Clone, Debug, Default)]
pub struct TrialOptions {
    pub keep_counts: bool,
    pub keep_log: bool,
}

#[derive(Clone, Debug)]
pub struct TrialOutput {
    pub result: TrialResult,
    pub counts: Option<Vec<CountRow>>,
    pub log: Option<Vec<(usize, usize, u32)>>,
}

/// Ground truth for one trial.
pub fn make_truth(cfg: &ExperimentConfig, point: &GridPoint, seed: u64) -> Result<ClusteringMatrix> {
    let params = point.params(cfg.epsilon);
    match cfg.scenario {
        Scenario::DisjointDirect => sample_uniform(&Params { delta: 1, ..params }, seed),
        Scenario::DirectIid | Scenario::QuantizedIid | Scenario::DitheredIid => sample_iid(&params, seed),
        Scenario::WorstCase | Scenario::WorstCaseDelta2 => {
            let e = (cfg.exclusive_fraction * point.n as f64).ceil() as usize;
            planted_instance(point.n, point.k, point.delta, e, seed)
        }
        _ => sample_uniform(&params, seed),
    }
}

pub fn trial_seed(root: u64, point: usize, trial: usize) -> u64 {
    child_seed(child_seed(root, point as u64), trial as u64)
}

/// Sample a truth (or use the dataset), run the recovery, score it.
pub fn run_trial(
    cfg: &ExperimentConfig,
    point: &GridPoint,
    point_index: usize,
    trial: usize,
    dataset: Option<&Arc<ClusteringMatrix>>,
    opts: &TrialOptions,
) -> TrialOutput {
    let start = Instant::now();
    let seed = trial_seed(cfg.seed, point_index, trial);
    let scenario = cfg.scenario;
    let mut params = point.params(cfg.epsilon);
    let mut result = TrialResult {
        scenario,
        point: point_index,
        trial,
        seed,
        n: point.n,
        k: point.k,
        delta: point.delta,
        p: point.p,
        q: point.q,
        sigma: point.sigma,
        s_size: 0,
        queries: 0,
        queries_expected: None,
        success: false,
        gram_error: None,
        correct_inferences: None,
        wrong_inferences: None,
        support_errors: None,
        alpha: None,
        omega_necessary: None,
        unique_cover: None,
        failure: String::new(),
        wall_ms: 0.0,
    };
    let truth = match dataset {
        Some(d) => Ok(d.clone()),
        None => make_truth(cfg, point, seed).map(Arc::new),
    };
    let truth = match truth {
        Ok(t) => t,
        Err(e) => {
            result.failure = e.tag().into();
            return TrialOutput { result, counts: None, log: None };
        }
    };
    if let Ensemble::External { delta_max } = truth.ensemble() {
        params.n = truth.n();
        params.k = truth.k();
        params.delta = delta_max;
        result.n = params.n;
        result.k = params.k;
        result.delta = delta_max;
    }
    let mut extras = BoundExtras::default();
    match scenario {
        Scenario::DisjointDirect => {
            extras.n_min = truth.clusters().iter().map(|c| c.len()).min();
        }
        Scenario::WorstCase | Scenario::WorstCaseDelta2 => {
            let mode = if scenario == Scenario::WorstCase { SeparationMode::Exclusive } else { SeparationMode::Triplet };
            let measured = verify_separation(&truth, mode);
            result.alpha = Some(measured);
            extras.alpha = Some(cfg.alpha_override.unwrap_or(measured));
        }
        _ => {}
    }
    result.omega_necessary = necessary_omega(scenario, &params, 0.01).ok().flatten();
    let s_used = match point.s_size {
        Some(s) => s.min(params.n),
        None => match sufficient_s(scenario, &params, &extras) {
            Ok(t) => usable_sample_size(t, params.n),
            Err(e) => {
                result.failure = e.tag().into();
                return TrialOutput { result, counts: None, log: None };
            }
        },
    };
    result.s_size = s_used;
    result.queries_expected = queries_total(s_used, params.n, params.k, scenario.query_mode()).ok();
    let kind = oracle_kind(scenario, &params);
    let mut oracle = match OracleHandle::new(truth.clone(), kind, noise_seed(seed)) {
        Ok(o) => o,
        Err(e) => {
            result.failure = e.tag().into();
            return TrialOutput { result, counts: None, log: None };
        }
    };
    let ropts = RecoveryOptions { keep_counts: opts.keep_counts, ..Default::default() };
    let rec = recover(scenario, &mut oracle, &params, s_used, seed, &ropts, cfg.retries);
    result.queries = oracle.ledger_size() as u64;
    let truth_gram = gram(&truth);
    if let Some(sim) = &rec.similarity {
        result.gram_error = gram_error(sim, &truth_gram).ok();
    }
    if let Some(inf) = rec.inferred.as_ref().filter(|i| !i.within.is_empty()) {
        let (mut ok, mut bad) = (0u64, 0u64);
        for (i, j, l) in inf.pairs() {
            if truth.inner(i, j) == l as u32 {
                ok += 1;
            } else {
                bad += 1;
            }
        }
        result.correct_inferences = Some(ok);
        result.wrong_inferences = Some(bad);
    }
    if let Some(ws) = &rec.support_sizes {
        result.support_errors = Some(ws.iter().filter(|&&(i, w)| truth.row(i).count_ones() != w as u32).count() as u64);
    }
    result.unique_cover = rec.unique_cover;
    result.success = rec.failure.is_none() && result.gram_error == Some(0);
    result.failure = match &rec.failure {
        Some(e) => e.tag().into(),
        None if result.gram_error.is_some_and(|g| g > 0) => "wrong-recovery".into(),
        None => String::new(),
    };
    let counts = match (&rec.counts, &rec.inferred) {
        (Some(c), Some(inf)) if !inf.within.is_empty() => Some(
            c.entries
                .iter()
                .zip(inf.pairs())
                .map(|(e, (_, _, l))| CountRow {
                    i: e.i,
                    j: e.j,
                    count: e.count,
                    true_ell: truth.inner(e.i as usize, e.j as usize) as u8,
                    inferred_ell: l,
                })
                .collect(),
        ),
        (Some(c), _) => Some(
            c.entries
                .iter()
                .map(|e| CountRow {
                    i: e.i,
                    j: e.j,
                    count: e.count,
                    true_ell: truth.inner(e.i as usize, e.j as usize) as u8,
                    inferred_ell: u8::MAX,
                })
                .collect(),
        ),
        _ => None,
    };
    let log = opts.keep_log.then(|| oracle.log());
    result.wall_ms = start.elapsed().as_secs_f64() * 1e3;
    TrialOutput { result, counts, log }
}

/// Every grid point × trial, run in parallel and returned in grid order.
pub fn run_sweep(cfg: &ExperimentConfig, dataset: Option<&Arc<ClusteringMatrix>>) -> Vec<TrialResult> {
    let points = cfg.points();
    let jobs: Vec<(usize, usize)> = (0..points.len()).flat_map(|p| (0..cfg.trials).map(move |t| (p, t))).collect();
    jobs.par_iter()
        .map(|&(p, t)| run_trial(cfg, &points[p], p, t, dataset, &TrialOptions::default()).result)
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PointSummary {
    pub point: usize,
    pub n: usize,
    pub k: usize,
    pub delta: usize,
    pub p: f64,
    pub q: f64,
    pub sigma: f64,
    pub s_size: usize,
    pub trials: usize,
    pub successes: usize,
    pub mean_queries: f64,
    pub mean_gram_error: Option<f64>,
    pub median_gram_error: Option<f64>,
    pub max_gram_error: Option<u64>,
    pub mean_correct_inferences: Option<f64>,
    pub mean_wrong_inferences: Option<f64>,
}

fn mean(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

pub fn summarize(results: &[TrialResult]) -> Vec<PointSummary> {
    let mut out: Vec<PointSummary> = Vec::new();
    let mut start = 0;
    while start < results.len() {
        let p = results[start].point;
        let end = start + results[start..].iter().take_while(|r| r.point == p).count();
        let rs = &results[start..end];
        let r0 = &rs[0];
        let mut errs: Vec<u64> = rs.iter().filter_map(|r| r.gram_error).collect();
        errs.sort_unstable();
        let median = match errs.len() {
            0 => None,
            m if m % 2 == 1 => Some(errs[m / 2] as f64),
            m => Some((errs[m / 2 - 1] + errs[m / 2]) as f64 / 2.0),
        };
        let f = |g: fn(&TrialResult) -> Option<u64>| mean(&rs.iter().filter_map(|r| g(r).map(|v| v as f64)).collect::<Vec<_>>());
        out.push(PointSummary {
            point: p,
            n: r0.n,
            k: r0.k,
            delta: r0.delta,
            p: r0.p,
            q: r0.q,
            sigma: r0.sigma,
            s_size: r0.s_size,
            trials: rs.len(),
            successes: rs.iter().filter(|r| r.success).count(),
            mean_queries: rs.iter().map(|r| r.queries as f64).sum::<f64>() / rs.len() as f64,
            mean_gram_error: mean(&errs.iter().map(|&e| e as f64).collect::<Vec<_>>()),
            median_gram_error: median,
            max_gram_error: errs.last().copied(),
            mean_correct_inferences: f(|r| r.correct_inferences),
            mean_wrong_inferences: f(|r| r.wrong_inferences),
        });
        start = end;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gram_error_counts_pairs() {
        let a = SimilarityMatrix::from_fn(3, |i, j| u8::from(i == j));
        let mut b = a.clone();
        assert_eq!(gram_error(&a, &b).unwrap(), 0);
        b.set(0, 2, 1);
        assert_eq!(gram_error(&a, &b).unwrap(), 2);
        assert!(gram_error(&a, &SimilarityMatrix::zeros(2)).is_err());
    }

    #[test]
    fn smoke_sweep_is_deterministic() {
        let mut cfg = ExperimentConfig::new(Scenario::DirectUniform);
        cfg.n = super::super::config::Grid::One(200);
        cfg.trials = 3;
        cfg.seed = 11;
        let a = run_sweep(&cfg, None);
        let b = run_sweep(&cfg, None);
        assert_eq!(a.len(), 3);
        assert!(a.iter().zip(&b).all(|(x, y)| TrialResult { wall_ms: 0.0, ..x.clone() } == TrialResult { wall_ms: 0.0, ..y.clone() }));
        assert!(a.iter().all(|r| r.success && Some(r.queries) == r.queries_expected));
    }
}
