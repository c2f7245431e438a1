//! Same-cluster query oracles with pair-keyed noise and a ledger of distinct queried pairs.

use crate::bits::BitRows;
use crate::error::{Error, Result};
use crate::model::ClusteringMatrix;
use crate::rng::{pair_normal, pair_uniform};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::io::{BufRead, Write};
use std::sync::Arc;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum OracleKind {
    Direct,
    Quantized { q: f64 },
    Dithered { sigma: f64 },
}

impl OracleKind {
    pub fn validate(&self) -> Result<()> {
        match *self {
            OracleKind::Quantized { q } if !(0.0..0.5).contains(&q) => {
                Err(Error::InvalidParams(format!("q = {q} outside [0, 0.5)")))
            }
            OracleKind::Dithered { sigma } if !(sigma > 0.0) => {
                Err(Error::InvalidParams(format!("sigma = {sigma} must be positive")))
            }
            _ => Ok(()),
        }
    }

    pub fn is_binary(&self) -> bool {
        !matches!(self, OracleKind::Direct)
    }
}

/// Anything that answers pair queries and counts the distinct pairs asked.
pub trait PairOracle {
    fn n(&self) -> usize;
    fn query(&mut self, i: usize, j: usize) -> Result<u32>;
    fn ledger_size(&self) -> usize;
}

const DENSE_LIMIT: usize = 20_000;
const ABSENT: u8 = u8::MAX;

#[derive(Clone, Debug)]
enum Memo {
    Dense(Vec<u8>),
    Sparse(HashMap<(u32, u32), u8>),
}

#[inline]
fn tri_index(a: usize, b: usize) -> usize {
    b * (b - 1) / 2 + a
}

impl Memo {
    fn new(n: usize) -> Self {
        if n <= DENSE_LIMIT {
            Memo::Dense(vec![ABSENT; n * n.saturating_sub(1) / 2])
        } else {
            Memo::Sparse(HashMap::new())
        }
    }

    #[inline]
    fn get(&self, a: usize, b: usize) -> Option<u8> {
        match self {
            Memo::Dense(v) => Some(v[tri_index(a, b)]).filter(|&x| x != ABSENT),
            Memo::Sparse(m) => m.get(&(a as u32, b as u32)).copied(),
        }
    }

    #[inline]
    fn put(&mut self, a: usize, b: usize, v: u8) {
        match self {
            Memo::Dense(m) => m[tri_index(a, b)] = v,
            Memo::Sparse(m) => {
                m.insert((a as u32, b as u32), v);
            }
        }
    }
}

/// Stateful query endpoint over a hidden ground truth.
#[derive(Clone, Debug)]
pub struct OracleHandle {
    truth: Arc<ClusteringMatrix>,
    kind: OracleKind,
    noise_seed: u64,
    memo: Memo,
    ledger: usize,
}

impl OracleHandle {
    pub fn new(truth: Arc<ClusteringMatrix>, kind: OracleKind, noise_seed: u64) -> Result<Self> {
        kind.validate()?;
        let memo = Memo::new(truth.n());
        Ok(OracleHandle { truth, kind, noise_seed, memo, ledger: 0 })
    }

    pub fn kind(&self) -> OracleKind {
        self.kind
    }

    /// Clear the memo and ledger and switch to a new noise seed.
    pub fn reset_noise(&mut self, seed: u64) {
        self.noise_seed = seed;
        self.memo = Memo::new(self.truth.n());
        self.ledger = 0;
    }

    /// Response for the pair without touching memo or ledger.
    pub fn answer(&self, i: usize, j: usize) -> u32 {
        let g = self.truth.inner(i, j);
        match self.kind {
            OracleKind::Direct => g,
            OracleKind::Quantized { q } => {
                let flip = pair_uniform(self.noise_seed, i, j, 0) < q;
                u32::from((g > 0) ^ flip)
            }
            OracleKind::Dithered { sigma } => u32::from(g as f64 + sigma * pair_normal(self.noise_seed, i, j) > 0.0),
        }
    }

    /// Queried pairs (i < j) with their responses, in lexicographic order.
    pub fn log(&self) -> Vec<(usize, usize, u32)> {
        let mut out = Vec::with_capacity(self.ledger);
        match &self.memo {
            Memo::Dense(_) => {
                let n = self.truth.n();
                for a in 0..n {
                    for b in a + 1..n {
                        if let Some(v) = self.memo.get(a, b) {
                            out.push((a, b, v as u32));
                        }
                    }
                }
            }
            Memo::Sparse(m) => {
                out.extend(m.iter().map(|(&(a, b), &v)| (a as usize, b as usize, v as u32)));
                out.sort_unstable();
            }
        }
        out
    }
}

fn check_pair(n: usize, i: usize, j: usize) -> Result<(usize, usize)> {
    if i >= n {
        return Err(Error::IndexOutOfRange { index: i, n });
    }
    if j >= n {
        return Err(Error::IndexOutOfRange { index: j, n });
    }
    if i == j {
        return Err(Error::SelfQuery(i));
    }
    Ok(if i < j { (i, j) } else { (j, i) })
}

impl PairOracle for OracleHandle {
    fn n(&self) -> usize {
        self.truth.n()
    }

    fn query(&mut self, i: usize, j: usize) -> Result<u32> {
        let (a, b) = check_pair(self.truth.n(), i, j)?;
        if let Some(v) = self.memo.get(a, b) {
            return Ok(v as u32);
        }
        let v = self.answer(a, b);
        self.memo.put(a, b, v as u8);
        self.ledger += 1;
        Ok(v)
    }

    fn ledger_size(&self) -> usize {
        self.ledger
    }
}

/// Oracle answering from a recorded response log.
#[derive(Clone, Debug)]
pub struct ReplayOracle {
    n: usize,
    responses: HashMap<(usize, usize), u32>,
    asked: std::collections::HashSet<(usize, usize)>,
}

impl ReplayOracle {
    pub fn new(n: usize, log: impl IntoIterator<Item = (usize, usize, u32)>) -> Result<Self> {
        let mut responses = HashMap::new();
        for (i, j, v) in log {
            let key = check_pair(n, i, j)?;
            if let Some(old) = responses.insert(key, v) {
                if old != v {
                    return Err(Error::InvalidInput(format!("conflicting responses for ({i}, {j})")));
                }
            }
        }
        Ok(ReplayOracle { n, responses, asked: Default::default() })
    }

    pub fn recorded(&self) -> usize {
        self.responses.len()
    }
}

impl PairOracle for ReplayOracle {
    fn n(&self) -> usize {
        self.n
    }

    fn query(&mut self, i: usize, j: usize) -> Result<u32> {
        let key = check_pair(self.n, i, j)?;
        let v = *self.responses.get(&key).ok_or(Error::MissingResponse(key.0, key.1))?;
        self.asked.insert(key);
        Ok(v)
    }

    fn ledger_size(&self) -> usize {
        self.asked.len()
    }
}

pub fn write_response_log<W: Write>(mut w: W, log: &[(usize, usize, u32)]) -> Result<()> {
    for (i, j, v) in log {
        writeln!(w, "{i} {j} {v}")?;
    }
    Ok(())
}

pub fn read_response_log<R: BufRead>(r: R) -> Result<Vec<(usize, usize, u32)>> {
    let mut out = Vec::new();
    for (ln, line) in r.lines().enumerate() {
        let line = line?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let f: Vec<&str> = t.split_whitespace().collect();
        let parse = |s: &str| {
            s.parse::<usize>()
                .map_err(|_| Error::Parse { line: ln + 1, msg: format!("bad field {s:?}") })
        };
        if f.len() != 3 {
            return Err(Error::Parse { line: ln + 1, msg: "expected `i j response`".into() });
        }
        out.push((parse(f[0])?, parse(f[1])?, parse(f[2])? as u32));
    }
    Ok(out)
}

/// Responses over all unordered pairs of a sampled index set, in sample order.
#[derive(Clone, Debug)]
pub struct ResponseTable {
    pub s: Vec<usize>,
    values: Vec<u8>,
}

impl ResponseTable {
    /// Table from explicit values; `values` is |S|×|S| with an ignored diagonal.
    pub fn from_values(s: Vec<usize>, values: Vec<u8>) -> Result<Self> {
        if values.len() != s.len() * s.len() {
            return Err(Error::InvalidInput("value table has the wrong size".into()));
        }
        Ok(ResponseTable { s, values })
    }

    /// Table from a sparse pair map; every unordered pair of `s` must be present.
    pub fn from_pairs(s: Vec<usize>, pairs: &HashMap<(usize, usize), u32>) -> Result<Self> {
        let m = s.len();
        let mut values = vec![0u8; m * m];
        for a in 0..m {
            for b in a + 1..m {
                let key = (s[a].min(s[b]), s[a].max(s[b]));
                let v = *pairs.get(&key).ok_or(Error::MissingResponse(key.0, key.1))? as u8;
                values[a * m + b] = v;
                values[b * m + a] = v;
            }
        }
        Ok(ResponseTable { s, values })
    }

    pub fn len(&self) -> usize {
        self.s.len()
    }

    pub fn is_empty(&self) -> bool {
        self.s.is_empty()
    }

    /// Response between local positions a and b; 0 on the diagonal.
    #[inline]
    pub fn get(&self, a: usize, b: usize) -> u8 {
        if a == b {
            0
        } else {
            self.values[a * self.s.len() + b]
        }
    }

    /// Rows of positive responses as packed bits, diagonal cleared.
    pub fn bit_rows(&self) -> BitRows {
        let m = self.s.len();
        let mut b = BitRows::new(m, m);
        for a in 0..m {
            for c in 0..m {
                if a != c && self.values[a * m + c] > 0 {
                    b.set(a, c);
                }
            }
        }
        b
    }
}

/// Query every unordered pair of `s`.
pub fn batch_pairwise<O: PairOracle + ?Sized>(oracle: &mut O, s: &[usize]) -> Result<ResponseTable> {
    let m = s.len();
    let mut values = vec![0u8; m * m];
    for a in 0..m {
        for b in a + 1..m {
            let v = oracle.query(s[a], s[b])? as u8;
            values[a * m + b] = v;
            values[b * m + a] = v;
        }
    }
    Ok(ResponseTable { s: s.to_vec(), values })
}

/// Query element x against every element of `targets`.
pub fn query_against<O: PairOracle + ?Sized>(oracle: &mut O, x: usize, targets: &[usize]) -> Result<Vec<u32>> {
    targets.iter().map(|&t| oracle.query(x, t)).collect()
}

/// Query x against targets and pack positive responses as bits.
pub fn query_bits<O: PairOracle + ?Sized>(oracle: &mut O, x: usize, targets: &[usize]) -> Result<Vec<u64>> {
    let mut bits = vec![0u64; targets.len().div_ceil(64).max(1)];
    for (c, &t) in targets.iter().enumerate() {
        if oracle.query(x, t)? > 0 {
            bits[c / 64] |= 1 << (c % 64);
        }
    }
    Ok(bits)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{sample_uniform, Ensemble, Params};

    fn animal() -> Arc<ClusteringMatrix> {
        Arc::new(
            ClusteringMatrix::from_strs(
                &["0110", "1001", "1100", "1001", "0110", "0011", "0011"],
                Ensemble::Uniform { delta: 2 },
            )
            .unwrap(),
        )
    }

    #[test]
    fn direct_values_and_errors() {
        let mut o = OracleHandle::new(animal(), OracleKind::Direct, 0).unwrap();
        assert_eq!(o.query(0, 4).unwrap(), 2);
        assert_eq!(o.query(0, 1).unwrap(), 0);
        assert_eq!(o.query(3, 3), Err(Error::SelfQuery(3)));
        assert!(matches!(o.query(0, 7), Err(Error::IndexOutOfRange { .. })));
        assert_eq!(o.ledger_size(), 2);
    }

    #[test]
    fn ledger_counts_distinct_pairs() {
        let a = Arc::new(sample_uniform(&Params::new(30, 6, 2), 1).unwrap());
        let mut o = OracleHandle::new(a, OracleKind::Quantized { q: 0.2 }, 9).unwrap();
        assert_eq!(o.ledger_size(), 0);
        let s: Vec<usize> = (0..10).collect();
        let t1 = batch_pairwise(&mut o, &s).unwrap();
        assert_eq!(o.ledger_size(), 45);
        let t2 = batch_pairwise(&mut o, &s).unwrap();
        assert_eq!(o.ledger_size(), 45);
        assert_eq!(t1.values, t2.values);
        batch_pairwise(&mut o, &[20, 21, 22]).unwrap();
        batch_pairwise(&mut o, &[23, 24, 25, 26]).unwrap();
        assert_eq!(o.ledger_size(), 54);
        o.query(1, 0).unwrap();
        assert_eq!(o.ledger_size(), 54);
    }

    #[test]
    fn responses_do_not_depend_on_order() {
        let a = Arc::new(sample_uniform(&Params::new(40, 6, 2), 2).unwrap());
        let mut o1 = OracleHandle::new(a.clone(), OracleKind::Dithered { sigma: 1.0 }, 5).unwrap();
        let mut o2 = OracleHandle::new(a, OracleKind::Dithered { sigma: 1.0 }, 5).unwrap();
        let fwd: Vec<u32> = (1..40).map(|j| o1.query(0, j).unwrap()).collect();
        let mut rev: Vec<u32> = (1..40).rev().map(|j| o2.query(j, 0).unwrap()).collect();
        rev.reverse();
        assert_eq!(fwd, rev);
    }

    #[test]
    fn noiseless_quantized_is_quantized_direct() {
        let a = Arc::new(sample_uniform(&Params::new(50, 8, 3), 3).unwrap());
        let mut d = OracleHandle::new(a.clone(), OracleKind::Direct, 0).unwrap();
        let mut q = OracleHandle::new(a, OracleKind::Quantized { q: 0.0 }, 11).unwrap();
        for i in 0..50 {
            for j in i + 1..50 {
                assert_eq!(q.query(i, j).unwrap(), u32::from(d.query(i, j).unwrap() > 0));
            }
        }
    }

    #[test]
    fn log_round_trip_and_replay() {
        let mut o = OracleHandle::new(animal(), OracleKind::Quantized { q: 0.0 }, 0).unwrap();
        batch_pairwise(&mut o, &[0, 2, 5]).unwrap();
        let log = o.log();
        assert_eq!(log, vec![(0, 2, 1), (0, 5, 1), (2, 5, 0)]);
        let mut buf = Vec::new();
        write_response_log(&mut buf, &log).unwrap();
        let back = read_response_log(&buf[..]).unwrap();
        let mut r = ReplayOracle::new(7, back).unwrap();
        assert_eq!(r.query(5, 2).unwrap(), 0);
        assert_eq!(r.query(1, 2), Err(Error::MissingResponse(1, 2)));
        assert_eq!(r.ledger_size(), 1);
    }

    #[test]
    fn reset_noise_clears_ledger() {
        let mut o = OracleHandle::new(animal(), OracleKind::Quantized { q: 0.3 }, 0).unwrap();
        o.query(0, 1).unwrap();
        o.reset_noise(4);
        assert_eq!(o.ledger_size(), 0);
    }

    #[test]
    fn invalid_kinds_rejected() {
        assert!(OracleHandle::new(animal(), OracleKind::Quantized { q: 0.5 }, 0).is_err());
        assert!(OracleHandle::new(animal(), OracleKind::Dithered { sigma: 0.0 }, 0).is_err());
    }
}
