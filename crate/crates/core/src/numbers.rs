//! Top-degree ψ-integrals on Hassett spaces as signed sums over totally
//! unstable partitions of Witten–Kontsevich correlators.

use num_rational::BigRational;
use num_traits::{One, Zero};

use crate::error::{Error, Result};
use crate::partitions::{enumerate_totally_unstable, orient, relative_unstable_partitions, WeightData};
use crate::witten::witten_correlator;

/// `∫_{M̄_{g,A}} ∏ ψ_i^{k_i}` with `k` positional against `A`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HassettQuery {
    pub genus: u32,
    pub weights: WeightData,
    pub exponents: Vec<u32>,
}

impl HassettQuery {
    pub fn new(genus: u32, weights: WeightData, exponents: Vec<u32>) -> Result<Self> {
        check_lengths(&weights, &exponents)?;
        Ok(HassettQuery {
            genus,
            weights,
            exponents,
        })
    }
}

fn check_lengths(weights: &WeightData, exponents: &[u32]) -> Result<()> {
    if weights.len() != exponents.len() {
        return Err(Error::LengthMismatch {
            exponents: exponents.len(),
            weights: weights.len(),
        });
    }
    Ok(())
}

/// `3g - 3 + n`, negative for the unstable ranges.
pub fn dimension(genus: u32, n: usize) -> i64 {
    3 * genus as i64 - 3 + n as i64
}

pub(crate) fn is_top_degree(genus: u32, exponents: &[u32]) -> bool {
    exponents.iter().map(|&k| k as i64).sum::<i64>() == dimension(genus, exponents.len())
}

fn sign(exponent: usize) -> BigRational {
    if exponent.is_multiple_of(2) {
        BigRational::one()
    } else {
        -BigRational::one()
    }
}

pub fn hassett_correlator(q: &HassettQuery) -> BigRational {
    hassett_value(q.genus, &q.weights, &q.exponents)
}

/// Checked form of [`hassett_correlator`] taking the fields separately.
pub fn hassett_number(genus: u32, weights: &WeightData, exponents: &[u32]) -> Result<BigRational> {
    check_lengths(weights, exponents)?;
    Ok(hassett_value(genus, weights, exponents))
}

fn hassett_value(genus: u32, weights: &WeightData, k: &[u32]) -> BigRational {
    let n = weights.len();
    if !weights.is_stable(genus) || !is_top_degree(genus, k) {
        return BigRational::zero();
    }
    let mut total = BigRational::zero();
    'partitions: for p in enumerate_totally_unstable(weights) {
        let mut exps = Vec::with_capacity(p.len());
        for part in p.parts() {
            let alpha: i64 = part.iter().map(|&i| k[i] as i64).sum();
            let e = alpha - part.len() as i64 + 1;
            if e < 0 {
                continue 'partitions;
            }
            exps.push(e as u32);
        }
        let value = witten_correlator(genus, &exps);
        if !value.is_zero() {
            total += sign(n + p.len()) * value;
        }
    }
    total
}

/// Integral on the smaller-weight space expressed through integrals on the
/// larger-weight space.
///
/// Each relative partition `P` contributes `(-1)^{n+ℓ(P)}` times the integral
/// on the larger-weight space with every non-singleton part collapsed to a
/// single mark of weight 1 carrying `ψ^{α_j - |P_j| + 1}`. With larger
/// weights `1^n` this is exactly the partition sum of [`hassett_correlator`].
pub fn relative_hassett_correlator(
    genus: u32,
    a: &WeightData,
    b: &WeightData,
    exponents: &[u32],
) -> Result<BigRational> {
    let (finer, coarser) = orient(a, b)?;
    check_lengths(finer, exponents)?;
    let n = finer.len();
    if !coarser.is_stable(genus) || !is_top_degree(genus, exponents) {
        return Ok(BigRational::zero());
    }
    let mut total = BigRational::zero();
    'partitions: for p in relative_unstable_partitions(finer, coarser)? {
        let mut weights = Vec::with_capacity(p.len());
        let mut exps = Vec::with_capacity(p.len());
        for part in p.parts() {
            if let [i] = part[..] {
                weights.push(finer.weights()[i].clone());
                exps.push(exponents[i]);
            } else {
                let alpha: i64 = part.iter().map(|&i| exponents[i] as i64).sum();
                let e = alpha - part.len() as i64 + 1;
                if e < 0 {
                    continue 'partitions;
                }
                weights.push(BigRational::one());
                exps.push(e as u32);
            }
        }
        let collapsed = WeightData::new(weights)?;
        let value = hassett_value(genus, &collapsed, &exps);
        if !value.is_zero() {
            total += sign(n + p.len()) * value;
        }
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::{int, rat};

    fn h(g: u32, w: &str, k: &[u32]) -> BigRational {
        hassett_number(g, &WeightData::parse(w).unwrap(), k).unwrap()
    }

    #[test]
    fn spot_values() {
        assert_eq!(h(0, "1,1,1,1,1", &[1, 1, 0, 0, 0]), int(2));
        assert_eq!(h(1, "1/2,1/2", &[1, 1]), int(0));
        assert_eq!(h(0, "1/2,1/2,1/2,1/2,1/2", &[2, 0, 0, 0, 0]), int(-3));
        assert_eq!(h(0, "1/2,1/2,1/2,1/2,1/2", &[1, 1, 0, 0, 0]), int(1));
    }

    #[test]
    fn gates() {
        assert_eq!(h(0, "1/2,1/2,1/2,1/2", &[1, 0, 0, 0]), int(0));
        assert_eq!(h(0, "1,1,1,1", &[1, 1, 0, 0]), int(0));
        assert_eq!(h(1, "1", &[1]), rat(1, 24));
        assert!(matches!(
            hassett_number(0, &WeightData::ones(3), &[0, 0]),
            Err(Error::LengthMismatch {
                exponents: 2,
                weights: 3
            })
        ));
        assert!(HassettQuery::new(0, WeightData::ones(3), vec![0]).is_err());
    }

    #[test]
    fn query_form_matches() {
        let q = HassettQuery::new(0, WeightData::diagonal(2, 5), vec![2, 0, 0, 0, 0]).unwrap();
        assert_eq!(hassett_correlator(&q), int(-3));
    }

    #[test]
    fn relative_reductions() {
        let halves = WeightData::diagonal(2, 5);
        let ones = WeightData::ones(5);
        let k = [2, 0, 0, 0, 0];
        assert_eq!(relative_hassett_correlator(0, &ones, &halves, &k).unwrap(), int(-3));
        assert_eq!(relative_hassett_correlator(0, &halves, &ones, &k).unwrap(), int(-3));
        assert_eq!(relative_hassett_correlator(0, &halves, &halves, &k).unwrap(), int(-3));
        let x = WeightData::parse("1,1/2").unwrap();
        let y = WeightData::parse("1/2,1").unwrap();
        assert!(matches!(
            relative_hassett_correlator(1, &x, &y, &[1, 1]),
            Err(Error::NotComparable(..))
        ));
    }

    #[test]
    fn relative_between_light_weights() {
        // (1/2,1/2) and (1/3,1/3) share their unstable partitions, so only
        // the singleton term survives and both sides are 0 in genus 1.
        let a = WeightData::diagonal(2, 2);
        let b = WeightData::diagonal(3, 2);
        assert_eq!(relative_hassett_correlator(1, &a, &b, &[1, 1]).unwrap(), int(0));
        assert_eq!(hassett_number(1, &b, &[1, 1]).unwrap(), int(0));

        let fine = WeightData::parse("2/3,2/3,1/2,1/2,1").unwrap();
        let coarse = WeightData::diagonal(2, 5);
        for k in [[2, 0, 0, 0, 0], [0, 0, 1, 1, 0], [1, 0, 0, 0, 1]] {
            assert_eq!(
                relative_hassett_correlator(0, &fine, &coarse, &k).unwrap(),
                hassett_number(0, &coarse, &k).unwrap()
            );
        }
    }
}
