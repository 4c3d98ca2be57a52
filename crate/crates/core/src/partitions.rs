//! Weight data and totally unstable set partitions.
//!
//! Marks are 0-based internally and 1-based whenever they are printed or
//! parsed from user input.

use std::collections::BTreeSet;
use std::fmt;

use num_rational::BigRational;
use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rational::{format_rational, parse_rational_list};

/// Ordered weights `(a_1, …, a_n)` with every `a_i ∈ (0, 1]`.
///
/// Order is positional and never normalised: exponent vectors are indexed
/// by the same positions.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct WeightData(Vec<BigRational>);

impl WeightData {
    pub fn new(raw: Vec<BigRational>) -> Result<Self> {
        if raw.is_empty() {
            return Err(Error::EmptyWeights);
        }
        for (position, a) in raw.iter().enumerate() {
            if *a <= BigRational::zero() || *a > BigRational::one() {
                return Err(Error::WeightOutOfRange {
                    position: position + 1,
                    value: format_rational(a),
                });
            }
        }
        Ok(WeightData(raw))
    }

    /// Parses `"7/8,2/3,1"`.
    pub fn parse(s: &str) -> Result<Self> {
        Self::new(parse_rational_list(s)?)
    }

    /// `n` copies of `1/q`.
    pub fn diagonal(q: u32, n: usize) -> Self {
        assert!(q >= 1);
        WeightData(vec![BigRational::new(1.into(), q.into()); n])
    }

    pub fn ones(n: usize) -> Self {
        Self::diagonal(1, n)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn weights(&self) -> &[BigRational] {
        &self.0
    }

    pub fn total(&self) -> BigRational {
        self.0.iter().sum()
    }

    pub fn subset_sum(&self, marks: &[usize]) -> BigRational {
        marks.iter().map(|&i| &self.0[i]).sum()
    }

    /// `2g - 2 + Σ a_i > 0`.
    pub fn is_stable(&self, genus: u32) -> bool {
        BigRational::from_integer((2 * genus as i64 - 2).into()) + self.total() > BigRational::zero()
    }

    /// Componentwise `self ⪰ other`.
    pub fn dominates(&self, other: &WeightData) -> bool {
        self.len() == other.len() && self.0.iter().zip(&other.0).all(|(a, b)| a >= b)
    }

    pub fn permuted(&self, perm: &[usize]) -> WeightData {
        let mut out = self.0.clone();
        for (i, &p) in perm.iter().enumerate() {
            out[p] = self.0[i].clone();
        }
        WeightData(out)
    }
}

impl fmt::Display for WeightData {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(format_rational).collect();
        write!(f, "({})", parts.join(","))
    }
}

pub fn validate_weight_data(raw: Vec<BigRational>) -> Result<WeightData> {
    WeightData::new(raw)
}

/// A partition of `{0, …, n-1}` in canonical form: elements sorted within
/// parts, parts sorted by their minimum.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SetPartition {
    parts: Vec<Vec<usize>>,
}

impl SetPartition {
    /// Validates that `parts` partition `{0, …, n-1}` and canonicalises.
    pub fn new(parts: Vec<Vec<usize>>, n: usize) -> Result<Self> {
        let mut seen = vec![false; n];
        let mismatch = |parts: &Vec<Vec<usize>>| Error::SizeMismatch {
            expected: n,
            found: format!("{parts:?}"),
        };
        for part in &parts {
            if part.is_empty() {
                return Err(mismatch(&parts));
            }
            for &i in part {
                if i >= n || seen[i] {
                    return Err(mismatch(&parts));
                }
                seen[i] = true;
            }
        }
        if seen.iter().any(|s| !s) {
            return Err(mismatch(&parts));
        }
        Ok(Self::canonical(parts))
    }

    /// Like [`SetPartition::new`] but with 1-based marks.
    pub fn from_one_based(parts: &[&[usize]], n: usize) -> Result<Self> {
        let parts = parts
            .iter()
            .map(|p| p.iter().map(|&i| i.wrapping_sub(1)).collect())
            .collect();
        Self::new(parts, n)
    }

    pub(crate) fn canonical(mut parts: Vec<Vec<usize>>) -> Self {
        for p in &mut parts {
            p.sort_unstable();
        }
        parts.sort_unstable_by_key(|p| p[0]);
        SetPartition { parts }
    }

    pub fn singletons(n: usize) -> Self {
        SetPartition {
            parts: (0..n).map(|i| vec![i]).collect(),
        }
    }

    /// Builds the partition encoded by a restricted growth string.
    pub fn from_rgs(rgs: &[usize]) -> Self {
        let blocks = rgs.iter().copied().max().map_or(0, |m| m + 1);
        let mut parts = vec![Vec::new(); blocks];
        for (i, &b) in rgs.iter().enumerate() {
            parts[b].push(i);
        }
        SetPartition { parts }
    }

    pub fn parts(&self) -> &[Vec<usize>] {
        &self.parts
    }

    /// ℓ(P).
    pub fn len(&self) -> usize {
        self.parts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parts.is_empty()
    }

    pub fn ground_size(&self) -> usize {
        self.parts.iter().map(Vec::len).sum()
    }

    pub fn is_singletons(&self) -> bool {
        self.parts.iter().all(|p| p.len() == 1)
    }

    pub fn part_of(&self, mark: usize) -> Option<usize> {
        self.parts.iter().position(|p| p.contains(&mark))
    }

    /// Parts with at least two marks, in canonical order.
    pub fn tails(&self) -> impl Iterator<Item = &Vec<usize>> {
        self.parts.iter().filter(|p| p.len() > 1)
    }

    pub fn tail_count(&self) -> usize {
        self.tails().count()
    }

    /// Relabels mark `i` as `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> SetPartition {
        Self::canonical(
            self.parts
                .iter()
                .map(|p| p.iter().map(|&i| perm[i]).collect())
                .collect(),
        )
    }

    /// True when every part of `self` lies inside a part of `coarser`.
    pub fn refines(&self, coarser: &SetPartition) -> bool {
        self.parts
            .iter()
            .all(|p| coarser.parts.iter().any(|q| p.iter().all(|i| q.contains(i))))
    }
}

impl fmt::Display for SetPartition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (j, p) in self.parts.iter().enumerate() {
            if j > 0 {
                write!(f, ",")?;
            }
            write!(f, "{}", format_marks(p))?;
        }
        write!(f, "}}")
    }
}

/// `{1,4,5}` for the 0-based marks `[0,3,4]`.
pub fn format_marks(marks: &[usize]) -> String {
    let inner: Vec<String> = marks.iter().map(|i| (i + 1).to_string()).collect();
    format!("{{{}}}", inner.join(","))
}

fn check_ground(a: &WeightData, p: &SetPartition) -> Result<()> {
    if p.ground_size() != a.len() || p.parts.iter().flatten().any(|&i| i >= a.len()) {
        return Err(Error::SizeMismatch {
            expected: a.len(),
            found: p.to_string(),
        });
    }
    Ok(())
}

/// Every part has weight sum ≤ 1 (equality counts as unstable).
pub fn is_totally_unstable(a: &WeightData, p: &SetPartition) -> Result<bool> {
    check_ground(a, p)?;
    Ok(p.parts.iter().all(|part| a.subset_sum(part) <= BigRational::one()))
}

/// All A-totally unstable partitions, lexicographic on canonical form.
///
/// Restricted-growth-string search; a branch is abandoned as soon as one
/// block's weight exceeds 1.
pub fn enumerate_totally_unstable(a: &WeightData) -> Vec<SetPartition> {
    let n = a.len();
    let mut out = Vec::new();
    let mut rgs = Vec::with_capacity(n);
    let mut sums: Vec<BigRational> = Vec::with_capacity(n);
    extend_rgs(a, &mut rgs, &mut sums, &mut out);
    out.sort();
    out
}

fn extend_rgs(a: &WeightData, rgs: &mut Vec<usize>, sums: &mut Vec<BigRational>, out: &mut Vec<SetPartition>) {
    let i = rgs.len();
    if i == a.len() {
        out.push(SetPartition::from_rgs(rgs));
        return;
    }
    let w = &a.weights()[i];
    for block in 0..sums.len() {
        let s = &sums[block] + w;
        if s > BigRational::one() {
            continue;
        }
        let old = std::mem::replace(&mut sums[block], s);
        rgs.push(block);
        extend_rgs(a, rgs, sums, out);
        rgs.pop();
        sums[block] = old;
    }
    sums.push(w.clone());
    rgs.push(sums.len() - 1);
    extend_rgs(a, rgs, sums, out);
    rgs.pop();
    sums.pop();
}

/// Orients a comparable pair as `(finer, coarser)` with `finer ⪰ coarser`.
pub fn orient<'a>(a: &'a WeightData, b: &'a WeightData) -> Result<(&'a WeightData, &'a WeightData)> {
    if a.dominates(b) {
        Ok((a, b))
    } else if b.dominates(a) {
        Ok((b, a))
    } else {
        Err(Error::NotComparable(a.to_string(), b.to_string()))
    }
}

/// Partitions indexing the reduction from the larger weights to the
/// smaller ones: coarser-totally unstable partitions whose non-singleton
/// parts are all stable for the finer weights, plus the singletons.
///
/// The arguments may be given in either order; the componentwise larger
/// one is treated as the finer data.
pub fn relative_unstable_partitions(a: &WeightData, b: &WeightData) -> Result<Vec<SetPartition>> {
    let (finer, coarser) = orient(a, b)?;
    Ok(enumerate_totally_unstable(coarser)
        .into_iter()
        .filter(|p| p.tails().all(|t| finer.subset_sum(t) > BigRational::one()))
        .collect())
}

/// Subsets `S` with `|S| ≥ 2` and `Σ_S a_i ≤ 1`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct ChamberSignature {
    light_subsets: BTreeSet<Vec<usize>>,
}

impl ChamberSignature {
    pub fn light_subsets(&self) -> impl Iterator<Item = &Vec<usize>> {
        self.light_subsets.iter()
    }

    pub fn len(&self) -> usize {
        self.light_subsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.light_subsets.is_empty()
    }

    pub fn contains(&self, subset: &[usize]) -> bool {
        self.light_subsets.contains(subset)
    }
}

impl fmt::Display for ChamberSignature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sets: Vec<String> = self.light_subsets.iter().map(|s| format_marks(s)).collect();
        write!(f, "{{{}}}", sets.join(","))
    }
}

pub fn chamber_signature(a: &WeightData) -> ChamberSignature {
    let n = a.len();
    let mut light_subsets = BTreeSet::new();
    let mut stack: Vec<(Vec<usize>, BigRational)> = vec![(Vec::new(), BigRational::zero())];
    // Depth-first over increasing index sequences; supersets of heavy sets are pruned.
    while let Some((set, sum)) = stack.pop() {
        let start = set.last().map_or(0, |&l| l + 1);
        for i in start..n {
            let s = &sum + &a.weights()[i];
            if s > BigRational::one() {
                continue;
            }
            let mut next = set.clone();
            next.push(i);
            if next.len() >= 2 {
                light_subsets.insert(next.clone());
            }
            stack.push((next, s));
        }
    }
    ChamberSignature { light_subsets }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::{int, rat};

    fn sp(parts: &[&[usize]], n: usize) -> SetPartition {
        SetPartition::from_one_based(parts, n).unwrap()
    }

    #[test]
    fn validates_weights() {
        assert_eq!(WeightData::new(vec![int(1); 3]).unwrap().len(), 3);
        let b = WeightData::parse("7/8,2/3,1/3,1/4,1/6").unwrap();
        assert_eq!(b.len(), 5);
        assert_eq!(
            WeightData::new(vec![rat(1, 2), int(0)]),
            Err(Error::WeightOutOfRange {
                position: 2,
                value: "0".into()
            })
        );
        assert!(matches!(WeightData::parse("3/2"), Err(Error::WeightOutOfRange { .. })));
        assert_eq!(WeightData::new(vec![]), Err(Error::EmptyWeights));
        assert!(matches!(WeightData::parse("0.5"), Err(Error::InvalidRational(_))));
    }

    #[test]
    fn order_is_positional() {
        let w = WeightData::parse("1/3,1,1/2").unwrap();
        assert_eq!(w.weights(), &[rat(1, 3), int(1), rat(1, 2)]);
    }

    #[test]
    fn total_instability() {
        let ones = WeightData::ones(3);
        let halves = WeightData::diagonal(2, 3);
        assert!(is_totally_unstable(&ones, &sp(&[&[1], &[2], &[3]], 3)).unwrap());
        assert!(!is_totally_unstable(&ones, &sp(&[&[1, 2], &[3]], 3)).unwrap());
        assert!(is_totally_unstable(&halves, &sp(&[&[1, 2], &[3]], 3)).unwrap());
        assert!(matches!(
            is_totally_unstable(&halves, &sp(&[&[1, 2]], 2)),
            Err(Error::SizeMismatch { .. })
        ));
    }

    #[test]
    fn rejects_malformed_partitions() {
        assert!(SetPartition::from_one_based(&[&[1, 2], &[2, 3]], 3).is_err());
        assert!(SetPartition::from_one_based(&[&[1], &[3]], 3).is_err());
        assert!(SetPartition::from_one_based(&[&[1], &[2], &[4]], 3).is_err());
    }

    #[test]
    fn enumerates_small_cases() {
        assert_eq!(
            enumerate_totally_unstable(&WeightData::ones(3)),
            vec![SetPartition::singletons(3)]
        );
        let halves = enumerate_totally_unstable(&WeightData::diagonal(2, 3));
        assert_eq!(halves.len(), 4);
        assert!(!halves.contains(&sp(&[&[1, 2, 3]], 3)));
        assert_eq!(enumerate_totally_unstable(&WeightData::diagonal(3, 3)).len(), 5);
    }

    #[test]
    fn enumeration_is_sorted_and_contains_singletons() {
        let w = WeightData::parse("1/2,1/3,1/4,2/3").unwrap();
        let ps = enumerate_totally_unstable(&w);
        assert!(ps.windows(2).all(|p| p[0] < p[1]));
        assert!(ps.contains(&SetPartition::singletons(4)));
    }

    #[test]
    fn relative_partitions() {
        let ones = WeightData::ones(3);
        let halves = WeightData::diagonal(2, 3);
        let thirds = WeightData::diagonal(3, 3);
        assert_eq!(
            relative_unstable_partitions(&ones, &ones).unwrap(),
            vec![SetPartition::singletons(3)]
        );
        assert_eq!(relative_unstable_partitions(&ones, &halves).unwrap().len(), 4);
        assert_eq!(
            relative_unstable_partitions(&halves, &thirds).unwrap(),
            vec![SetPartition::singletons(3), sp(&[&[1, 2, 3]], 3)]
        );
        // argument order does not matter
        assert_eq!(
            relative_unstable_partitions(&thirds, &halves).unwrap(),
            relative_unstable_partitions(&halves, &thirds).unwrap()
        );
        let x = WeightData::parse("1,1/2").unwrap();
        let y = WeightData::parse("1/2,1").unwrap();
        assert!(matches!(
            relative_unstable_partitions(&x, &y),
            Err(Error::NotComparable(..))
        ));
    }

    #[test]
    fn chamber_signatures() {
        assert!(chamber_signature(&WeightData::ones(3)).is_empty());
        let halves = chamber_signature(&WeightData::diagonal(2, 3));
        let expected: Vec<Vec<usize>> = vec![vec![0, 1], vec![0, 2], vec![1, 2]];
        assert_eq!(halves.light_subsets().cloned().collect::<Vec<_>>(), expected);
        assert_eq!(halves.to_string(), "{{1,2},{1,3},{2,3}}");
        let other = chamber_signature(&WeightData::parse("2/5,9/20,1/2").unwrap());
        assert_eq!(other, halves);
    }

    #[test]
    fn display_is_one_based() {
        assert_eq!(sp(&[&[2, 3], &[1]], 3).to_string(), "{{1},{2,3}}");
    }
}
