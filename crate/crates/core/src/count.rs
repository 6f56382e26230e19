//! Exact counts of canonical configurations.
//!
//! Canonical chains of length `n` are counted by the coefficients of
//!
//! ```text
//! P(z) = 1 / (2 (1 - z)^m - 1),   m = n_c * n_v
//! ```
//!
//! Writing `Q(z) = 2 (1 - z)^m - 1 = 1 + sum_{k>=1} 2 C(m, k) (-1)^k z^k` and
//! equating coefficients of `P Q = 1` gives
//!
//! ```text
//! p_0 = 1,   p_n = sum_{k=1}^{min(n, m)} 2 C(m, k) (-1)^(k+1) p_{n-k}
//! ```
//!
//! which is evaluated here with arbitrary-precision integers.

use num_bigint::{BigInt, BigUint};
use num_traits::{One, Signed, Zero};
use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CanonicalCount {
    pub n: usize,
    pub n_c: usize,
    pub n_v: usize,
    #[serde(serialize_with = "serialize_big")]
    pub count: BigUint,
}

fn serialize_big<S: serde::Serializer>(v: &BigUint, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(&v.to_string())
}

/// Coefficient of `z^n` in the canonical-count generating function.
pub fn count_canonical(n: i64, n_c: usize, n_v: usize) -> Result<CanonicalCount> {
    if n < 0 {
        return Err(Error::invalid(format!("length must be nonnegative, got {n}")));
    }
    let n = n as usize;
    let series = canonical_count_series(n, n_c, n_v)?;
    Ok(CanonicalCount {
        n,
        n_c,
        n_v,
        count: series[n].clone(),
    })
}

/// All coefficients `p_0 ..= p_max_n`.
pub fn canonical_count_series(max_n: usize, n_c: usize, n_v: usize) -> Result<Vec<BigUint>> {
    if n_c == 0 || n_v == 0 {
        return Err(Error::invalid(format!(
            "n_c and n_v must be at least 1, got n_c={n_c} n_v={n_v}"
        )));
    }
    let m = n_c
        .checked_mul(n_v)
        .ok_or_else(|| Error::invalid("n_c * n_v overflows"))?;
    let kmax = max_n.min(m);

    // weights[k] = 2 C(m, k) (-1)^(k+1)
    let mut weights = Vec::with_capacity(kmax + 1);
    weights.push(BigInt::zero());
    let mut binom = BigInt::one();
    for k in 1..=kmax {
        binom = binom * BigInt::from(m - k + 1) / BigInt::from(k);
        let w = &binom * 2;
        weights.push(if k % 2 == 1 { w } else { -w });
    }

    let mut p: Vec<BigInt> = Vec::with_capacity(max_n + 1);
    p.push(BigInt::one());
    for n in 1..=max_n {
        let mut acc = BigInt::zero();
        for k in 1..=n.min(m) {
            acc += &weights[k] * &p[n - k];
        }
        p.push(acc);
    }
    p.into_iter()
        .map(|x| {
            if x.is_negative() {
                Err(Error::invalid("negative coefficient: recurrence broken"))
            } else {
                Ok(x.to_biguint().expect("nonnegative"))
            }
        })
        .collect()
}
