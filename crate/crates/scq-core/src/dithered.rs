//! Dithered-oracle statistics: the Gaussian tail, exact joint overlap laws and G_ℓ.

use crate::error::{Error, Result};
use crate::model::{binom, overlap_distribution_uniform, Params};
use crate::oracle::{OracleKind, PairOracle};
use crate::quantized::{recover_with_counts, CountModel, QuantizedOutcome, RecoveryOptions};
use std::collections::BTreeMap;

/// Upper tail of the standard normal, Q(x) = P(Z > x).
pub fn q_function(x: f64) -> f64 {
    0.5 * libm::erfc(x / std::f64::consts::SQRT_2)
}

/// Law of (⟨A₁,A₃⟩, ⟨A₂,A₃⟩) given ⟨A₁,A₂⟩ = ℓ, all rows uniform of weight Δ.
#[derive(Clone, Debug, PartialEq)]
pub struct JointOverlapLaw {
    pub support: BTreeMap<(usize, usize), f64>,
}

impl JointOverlapLaw {
    pub fn total(&self) -> f64 {
        self.support.values().sum()
    }
}

/// Exact enumeration over the four regions of sizes (ℓ, Δ−ℓ, Δ−ℓ, k−2Δ+ℓ) cut out by A₁, A₂.
pub fn joint_overlap_law(k: usize, delta: usize, ell: usize) -> Result<JointOverlapLaw> {
    if ell > delta || delta > k {
        return Err(Error::InvalidParams(format!("need ell <= delta <= k, got {ell}, {delta}, {k}")));
    }
    if 2 * delta > k + ell {
        return Err(Error::InvalidParams(format!("overlap {ell} impossible for k = {k}, delta = {delta}")));
    }
    let (k, d, l) = (k as i64, delta as i64, ell as i64);
    let sizes = [l, d - l, d - l, k - 2 * d + l];
    let total = binom(k, d);
    let mut support = BTreeMap::new();
    for a in 0..=sizes[0].min(d) {
        for b in 0..=sizes[1].min(d - a) {
            for c in 0..=sizes[2].min(d - a - b) {
                let rest = d - a - b - c;
                let w = binom(sizes[0], a) * binom(sizes[1], b) * binom(sizes[2], c) * binom(sizes[3], rest);
                if w > 0.0 {
                    *support.entry(((a + b) as usize, (a + c) as usize)).or_insert(0.0) += w / total;
                }
            }
        }
    }
    Ok(JointOverlapLaw { support })
}

/// G_ℓ = E[Q(u/σ) Q(v/σ) | ⟨A₁,A₂⟩ = ℓ].
pub fn g_ell(k: usize, delta: usize, sigma: f64, ell: usize) -> Result<f64> {
    let law = joint_overlap_law(k, delta, ell)?;
    Ok(law
        .support
        .iter()
        .map(|(&(u, v), &w)| w * q_function(u as f64 / sigma) * q_function(v as f64 / sigma))
        .sum())
}

/// E[Q(⟨A₁,A₂⟩/σ)] for an overlap law indexed by ℓ.
pub fn mean_q(law: &[f64], sigma: f64) -> f64 {
    law.iter().enumerate().map(|(l, w)| w * q_function(l as f64 / sigma)).sum()
}

/// E[H₂(Q(⟨A₁,A₂⟩/σ))] for an overlap law indexed by ℓ.
pub fn mean_entropy_q(law: &[f64], sigma: f64) -> f64 {
    law.iter()
        .enumerate()
        .map(|(l, w)| w * crate::bounds::binary_entropy_unchecked(q_function(l as f64 / sigma)))
        .sum()
}

/// Expected triangle count under overlap ℓ; `within` selects |S|−2 summands, otherwise |S|−1.
pub fn expected_count_dithered(ell: usize, s_size: usize, k: usize, delta: usize, sigma: f64, within: bool) -> Result<f64> {
    let terms = if within { s_size as f64 - 2.0 } else { s_size as f64 - 1.0 };
    let single = mean_q(&overlap_distribution_uniform(k, delta), sigma);
    Ok(terms.max(0.0) * (1.0 - 2.0 * single + g_ell(k, delta, sigma, ell)?))
}

/// Dithered recovery on the uniform ensemble; the inference rule uses the dithered means.
pub fn recover_dithered<O: PairOracle + ?Sized>(
    oracle: &mut O,
    params: &Params,
    s_size: usize,
    seed: u64,
    opts: &RecoveryOptions,
) -> Result<QuantizedOutcome> {
    let model = CountModel::Dithered { k: params.k, delta: params.delta, sigma: params.sigma };
    let lo = (params.delta as i64 * 2 - params.k as i64).max(0) as usize;
    if params.delta >= 1 && lo < params.delta {
        let g0 = g_ell(params.k, params.delta, params.sigma, lo)?;
        let g1 = g_ell(params.k, params.delta, params.sigma, lo + 1)?;
        if (g1 - g0).abs() < 1e-12 {
            return Err(Error::DegenerateSeparation);
        }
    }
    recover_with_counts(oracle, params, &model, s_size, seed, opts)
}

/// Oracle kind matching a dithered parameter set.
pub fn dithered_kind(params: &Params) -> OracleKind {
    OracleKind::Dithered { sigma: params.sigma }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn q_function_values() {
        assert_eq!(q_function(0.0), 0.5);
        for x in [0.5, 1.0, 2.0] {
            assert!((q_function(x) + q_function(-x) - 1.0).abs() < 1e-15);
        }
        assert!((q_function(1.0) - 0.158_655_253_931_457_05).abs() < 1e-12);
    }

    #[test]
    fn laws_sum_to_one() {
        for k in 2..9 {
            for d in 1..=k {
                for l in 0..=d {
                    if 2 * d <= k + l {
                        let t = joint_overlap_law(k, d, l).unwrap().total();
                        assert!((t - 1.0).abs() < 1e-12, "{k} {d} {l}");
                    }
                }
            }
        }
    }

    #[test]
    fn degenerate_laws() {
        let law = joint_overlap_law(5, 5, 5).unwrap();
        assert_eq!(law.support.len(), 1);
        assert!((law.support[&(5, 5)] - 1.0).abs() < 1e-15);
        let law = joint_overlap_law(4, 2, 2).unwrap();
        let marg = overlap_distribution_uniform(4, 2);
        for (&(u, v), &w) in &law.support {
            assert_eq!(u, v);
            assert!((w - marg[u]).abs() < 1e-15);
        }
    }

    #[test]
    fn g_limits() {
        assert!((g_ell(6, 2, 1e9, 1).unwrap() - 0.25).abs() < 1e-9);
        let s = 0.7;
        assert!((g_ell(4, 4, s, 4).unwrap() - q_function(4.0 / s).powi(2)).abs() < 1e-15);
    }

    #[test]
    fn dithered_means_increase() {
        let e: Vec<f64> = (0..=2).map(|l| expected_count_dithered(l, 100, 6, 2, 1.0, true).unwrap()).collect();
        assert!(e[0] < e[1] && e[1] < e[2]);
    }
}
