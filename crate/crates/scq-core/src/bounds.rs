//! Sufficient sample sizes and information-theoretic query lower bounds.
//!
//! Sample-size thresholds use natural logarithms. Entropies and the lower bounds built
//! from them use base 2.

use crate::dithered::{g_ell, mean_entropy_q, mean_q};
use crate::error::{Error, Result};
use crate::model::{binom, overlap_distribution_iid, overlap_distribution_uniform, Params};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    DisjointDirect,
    DirectUniform,
    DirectIid,
    QuantizedUniform,
    QuantizedIid,
    UnknownQ,
    DitheredUniform,
    DitheredIid,
    WorstCase,
    WorstCaseDelta2,
}

impl Scenario {
    pub const ALL: [Scenario; 10] = [
        Scenario::DisjointDirect,
        Scenario::DirectUniform,
        Scenario::DirectIid,
        Scenario::QuantizedUniform,
        Scenario::QuantizedIid,
        Scenario::UnknownQ,
        Scenario::DitheredUniform,
        Scenario::DitheredIid,
        Scenario::WorstCase,
        Scenario::WorstCaseDelta2,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Scenario::DisjointDirect => "disjoint-direct",
            Scenario::DirectUniform => "direct-uniform",
            Scenario::DirectIid => "direct-iid",
            Scenario::QuantizedUniform => "quantized-uniform",
            Scenario::QuantizedIid => "quantized-iid",
            Scenario::UnknownQ => "unknown-q",
            Scenario::DitheredUniform => "dithered-uniform",
            Scenario::DitheredIid => "dithered-iid",
            Scenario::WorstCase => "worst-case",
            Scenario::WorstCaseDelta2 => "worst-case-delta2",
        }
    }

    pub fn query_mode(&self) -> QueryMode {
        match self {
            Scenario::DisjointDirect | Scenario::DirectUniform | Scenario::DirectIid => QueryMode::Basis,
            _ => QueryMode::Full,
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Scenario::ALL
            .iter()
            .copied()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::InvalidParams(format!("unknown scenario {s:?}")))
    }
}

/// How elements outside the sample are queried: against k basis elements or all of S.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QueryMode {
    Basis,
    Full,
}

/// Scenario inputs that are not model parameters.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BoundExtras {
    /// Smallest cluster size, for the disjoint case.
    pub n_min: Option<usize>,
    /// Exclusive-mass fraction, for the worst-case scenarios.
    pub alpha: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub scenario: Scenario,
    pub s_sufficient: Option<f64>,
    /// Sample size actually usable: ceil of the threshold, capped at n.
    pub s_used: Option<usize>,
    pub omega_sufficient: Option<u64>,
    pub omega_necessary: Option<f64>,
    pub target_error: f64,
    pub params: Params,
    pub extras: BoundExtras,
    pub notes: Vec<String>,
}

pub fn binary_entropy(x: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::Domain(format!("binary entropy of {x}")));
    }
    Ok(binary_entropy_unchecked(x))
}

pub(crate) fn binary_entropy_unchecked(x: f64) -> f64 {
    let h = |t: f64| if t <= 0.0 { 0.0 } else { -t * t.log2() };
    h(x) + h(1.0 - x)
}

/// p ⋆ q = (1−p)q + p(1−q).
pub fn binary_convolution(p: f64, q: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&p) || !(0.0..=1.0).contains(&q) {
        return Err(Error::Domain(format!("convolution of {p} and {q}")));
    }
    Ok((1.0 - p) * q + p * (1.0 - q))
}

/// C(s,2) + (k or s)·(n − s).
pub fn queries_total(s_size: usize, n: usize, k: usize, mode: QueryMode) -> Result<u64> {
    if s_size > n {
        return Err(Error::InvalidInput(format!("sample size {s_size} exceeds n = {n}")));
    }
    let s = s_size as u64;
    let rest = (n - s_size) as u64;
    let per = match mode {
        QueryMode::Basis => k as u64,
        QueryMode::Full => s,
    };
    Ok(s * s.saturating_sub(1) / 2 + per * rest)
}

fn log_term(params: &Params) -> f64 {
    (2.0f64).ln() + (2.0 + params.epsilon) * (params.n as f64).ln()
}

/// Separation C(k−2Δ+1, Δ) − C(k−2Δ, Δ) of the uniform triangle-count means.
pub fn uniform_separation(k: usize, delta: usize) -> f64 {
    let (k, d) = (k as i64, delta as i64);
    binom(k - 2 * d + 1, d) - binom(k - 2 * d, d)
}

/// Disjoint sample size (n/n_min)·ln(k·n^ε).
pub fn disjoint_sample_size(n: usize, k: usize, n_min: usize, epsilon: f64) -> Result<f64> {
    if n_min == 0 || n_min > n {
        return Err(Error::InvalidParams(format!("n_min = {n_min} outside 1..={n}")));
    }
    Ok(n as f64 / n_min as f64 * ((k as f64).ln() + epsilon * (n as f64).ln()))
}

pub fn sufficient_s(scenario: Scenario, params: &Params, extras: &BoundExtras) -> Result<f64> {
    let (n, k, d) = (params.n as f64, params.k as f64, params.delta);
    let noise = |q: f64| {
        let f = 1.0 - 2.0 * q;
        if f <= 0.0 {
            Err(Error::InfiniteThreshold)
        } else {
            Ok(f.powi(-4))
        }
    };
    match scenario {
        Scenario::DisjointDirect => {
            let n_min = extras.n_min.ok_or_else(|| Error::InvalidParams("n_min required".into()))?;
            disjoint_sample_size(params.n, params.k, n_min, params.epsilon)
        }
        Scenario::DirectUniform => {
            let num = binom(params.k as i64, d as i64);
            let den = binom(params.k as i64 - d as i64, d as i64 - 1);
            if den == 0.0 {
                return Err(Error::InfiniteThreshold);
            }
            Ok(num / den * (1.0 + params.c1 * k.ln() + params.c2 * n.ln()))
        }
        Scenario::DirectIid => {
            let m = params.p.max(1.0 - params.p);
            if m >= 1.0 {
                return Err(Error::InfiniteThreshold);
            }
            Ok(k - 1.0 - (k.ln() + params.c3 * n.ln()) / m.ln())
        }
        Scenario::QuantizedUniform | Scenario::UnknownQ => {
            let sep = uniform_separation(params.k, d);
            if sep <= 0.0 {
                return Err(Error::InfiniteThreshold);
            }
            let c = if scenario == Scenario::UnknownQ { 18.0 } else { 2.0 };
            let total = binom(params.k as i64, d as i64);
            Ok(c * noise(params.q)? * total * total / (sep * sep) * log_term(params))
        }
        Scenario::QuantizedIid => {
            if params.p <= 0.0 || params.p >= 1.0 {
                return Err(Error::InfiniteThreshold);
            }
            let p = params.p;
            Ok(2.0 * p.powi(-2) * noise(params.q)? * (1.0 - p).powf(2.0 - 2.0 * k) * log_term(params))
        }
        Scenario::DitheredUniform => {
            let lo = (2 * d).saturating_sub(params.k);
            if lo >= d {
                return Err(Error::InfiniteThreshold);
            }
            let g0 = g_ell(params.k, d, params.sigma, lo)?;
            let g1 = g_ell(params.k, d, params.sigma, lo + 1)?;
            let gap = (g1 - g0).abs();
            if gap < 1e-12 {
                return Err(Error::InfiniteThreshold);
            }
            Ok(2.0 * log_term(params) / (gap * gap))
        }
        Scenario::DitheredIid => Err(Error::NotApplicable("no recovery algorithm for this scenario".into())),
        Scenario::WorstCase | Scenario::WorstCaseDelta2 => {
            let alpha = extras.alpha.ok_or_else(|| Error::InvalidParams("alpha required".into()))?;
            if !(alpha > 0.0) {
                return Err(Error::InfiniteThreshold);
            }
            let c = if scenario == Scenario::WorstCase { 1.0 } else { 3.0 };
            Ok((c * k.ln() + n.ln()) / alpha)
        }
    }
}

/// Lower bound on |Ω| for target error δ; `None` where no bound is stated.
pub fn necessary_omega(scenario: Scenario, params: &Params, target_error: f64) -> Result<Option<f64>> {
    if !(0.0..1.0).contains(&target_error) {
        return Err(Error::Domain(format!("target error {target_error} outside [0, 1)")));
    }
    let (n, k) = (params.n as f64, params.k as f64);
    let iid_num = || Ok::<f64, Error>(binary_entropy(params.p)? - target_error);
    let uni_num = || binom(params.k as i64, params.delta as i64).log2() / k - target_error;
    let ratio = |num: f64, den: f64| {
        if num <= 0.0 {
            Ok(Some(0.0))
        } else if den <= 0.0 {
            Err(Error::Domain(format!("nonpositive denominator {den}")))
        } else {
            Ok(Some(n * k * num / den))
        }
    };
    let dither_den = |law: &[f64]| {
        binary_entropy_unchecked(mean_q(law, params.sigma)) - mean_entropy_q(law, params.sigma)
    };
    match scenario {
        Scenario::DirectIid => ratio(iid_num()?, k.log2()),
        Scenario::QuantizedIid => {
            let hit = 1.0 - (1.0 - params.p * params.p).powi(params.k as i32);
            let den = binary_entropy(binary_convolution(params.q, hit)?)? - binary_entropy(params.q)?;
            ratio(iid_num()?, den)
        }
        Scenario::DitheredIid => ratio(iid_num()?, dither_den(&overlap_distribution_iid(params.k, params.p))),
        Scenario::DirectUniform => ratio(uni_num(), (params.delta as f64).log2()),
        Scenario::QuantizedUniform | Scenario::UnknownQ => {
            let miss = binom(params.k as i64 - params.delta as i64, params.delta as i64)
                / binom(params.k as i64, params.delta as i64);
            let den = binary_entropy(binary_convolution(params.q, miss)?)? - binary_entropy(params.q)?;
            ratio(uni_num(), den)
        }
        Scenario::DitheredUniform => ratio(uni_num(), dither_den(&overlap_distribution_uniform(params.k, params.delta))),
        Scenario::DisjointDirect | Scenario::WorstCase | Scenario::WorstCaseDelta2 => Ok(None),
    }
}

pub fn bound_report(scenario: Scenario, params: &Params, extras: &BoundExtras, target_error: f64) -> Result<BoundReport> {
    let mut notes = Vec::new();
    let s = match sufficient_s(scenario, params, extras) {
        Ok(s) => Some(s),
        Err(Error::InfiniteThreshold) => {
            notes.push("sufficient sample size is infinite: the hypothesis means are not separated".into());
            None
        }
        Err(Error::NotApplicable(m)) => {
            notes.push(m);
            None
        }
        Err(e) => return Err(e),
    };
    let s_used = s.map(|s| (s.max(0.0).ceil() as usize).min(params.n));
    if let (Some(s), Some(u)) = (s, s_used) {
        if s > params.n as f64 {
            notes.push(format!("threshold {s:.1} exceeds n; sampling all {u} elements"));
        }
    }
    let omega_sufficient = match s_used {
        Some(u) => Some(queries_total(u, params.n, params.k, scenario.query_mode())?),
        None => None,
    };
    let omega_necessary = match necessary_omega(scenario, params, target_error) {
        Ok(v) => v,
        Err(Error::Domain(m)) => {
            notes.push(format!("lower bound undefined: {m}"));
            None
        }
        Err(e) => return Err(e),
    };
    Ok(BoundReport {
        scenario,
        s_sufficient: s,
        s_used,
        omega_sufficient,
        omega_necessary,
        target_error,
        params: params.clone(),
        extras: extras.clone(),
        notes,
    })
}

/// ceil of a threshold, capped at n.
pub fn usable_sample_size(threshold: f64, n: usize) -> usize {
    (threshold.max(0.0).ceil() as usize).min(n)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn entropy_basics() {
        assert_eq!(binary_entropy(0.5).unwrap(), 1.0);
        assert_eq!(binary_entropy(0.0).unwrap(), 0.0);
        assert!(binary_entropy(1.2).is_err());
        assert_eq!(binary_convolution(0.3, 0.0).unwrap(), 0.3);
    }

    #[test]
    fn query_totals() {
        assert_eq!(queries_total(245, 3470, 5, QueryMode::Full).unwrap(), 820_015);
        assert_eq!(queries_total(10, 10, 3, QueryMode::Full).unwrap(), 45);
        assert_eq!(queries_total(0, 10, 3, QueryMode::Full).unwrap(), 0);
        assert_eq!(queries_total(4, 10, 3, QueryMode::Basis).unwrap(), 6 + 18);
        assert!(queries_total(11, 10, 3, QueryMode::Full).is_err());
    }

    #[test]
    fn unknown_q_is_nine_times_known() {
        let p = Params::new(2000, 6, 2);
        let a = sufficient_s(Scenario::QuantizedUniform, &p, &BoundExtras::default()).unwrap();
        let b = sufficient_s(Scenario::UnknownQ, &p, &BoundExtras::default()).unwrap();
        assert!((b / a - 9.0).abs() < 1e-12);
    }

    #[test]
    fn zero_separation_is_infinite() {
        let p = Params::new(100, 3, 2);
        assert_eq!(sufficient_s(Scenario::QuantizedUniform, &p, &BoundExtras::default()), Err(Error::InfiniteThreshold));
    }

    #[test]
    fn vacuous_lower_bound() {
        let p = Params::new(100, 4, 2).with_p(0.1);
        let h = binary_entropy(0.1).unwrap();
        assert_eq!(necessary_omega(Scenario::DirectIid, &p, h + 1e-9).unwrap(), Some(0.0));
    }

    #[test]
    fn scenario_names_round_trip() {
        for s in Scenario::ALL {
            assert_eq!(s.name().parse::<Scenario>().unwrap(), s);
        }
    }
}
