//! Decorated pinwheel strata and pull-backs of weighted ψ-monomials.
//!
//! A pinwheel stratum `Δ_P` on `M̄_{g,n}` is indexed by a set partition `P`:
//! a genus-`g` spine carries one flag `•_j` per part, and every part with at
//! least two marks sits on its own rational tail, attached to the spine at
//! `•_j` through the flag `★_j`. A [`PinwheelMonomial`] records `Δ_P` together
//! with a power of `ψ_{•_j}` and of `ψ_{★_j}` for every part (the `★` power of
//! a singleton is always 0, since `•_j` is then the mark itself).
//!
//! Two independent routes produce `c_A^*(∏ ψ_{i,A}^{k_i})`:
//! [`pullback_psi_monomial`] evaluates the closed partition formula, and
//! [`PullbackOracle`] multiplies by `c_A^* ψ_{i,A}` one factor at a time,
//! resolving divisor self-intersections explicitly.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numbers::dimension;
use crate::partitions::{enumerate_totally_unstable, format_marks, SetPartition, WeightData};
use crate::rational::{format_rational, parse_rational};
use crate::witten::witten_correlator;

/// `Σ_m c_m ψ_•^{d-m} ψ_★^m`, homogeneous of degree `d = len - 1`.
/// The zero polynomial has no coefficients.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct EdgePolynomial {
    coefficients: Vec<BigRational>,
}

impl EdgePolynomial {
    pub fn new(coefficients: Vec<BigRational>) -> Self {
        if coefficients.iter().all(Zero::is_zero) {
            EdgePolynomial {
                coefficients: Vec::new(),
            }
        } else {
            EdgePolynomial { coefficients }
        }
    }

    pub fn zero() -> Self {
        EdgePolynomial {
            coefficients: Vec::new(),
        }
    }

    pub fn is_zero(&self) -> bool {
        self.coefficients.is_empty()
    }

    /// `None` for the zero polynomial.
    pub fn degree(&self) -> Option<u32> {
        self.coefficients.len().checked_sub(1).map(|d| d as u32)
    }

    /// Coefficient of `ψ_•^{d-m} ψ_★^m`.
    pub fn coefficients(&self) -> &[BigRational] {
        &self.coefficients
    }

    /// `(bullet power, star power, coefficient)` for each nonzero monomial.
    pub fn monomials(&self) -> impl Iterator<Item = (u32, u32, &BigRational)> {
        let d = self.coefficients.len() as u32;
        self.coefficients
            .iter()
            .enumerate()
            .filter(|(_, c)| !c.is_zero())
            .map(move |(m, c)| (d - 1 - m as u32, m as u32, c))
    }
}

impl fmt::Display for EdgePolynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut out = SignedSum::default();
        for (b, s, c) in self.monomials() {
            let mut factors = Vec::new();
            push_power(&mut factors, "psi_b", b);
            push_power(&mut factors, "psi_s", s);
            out.push(c, factors);
        }
        write!(f, "{out}")
    }
}

/// `(ψ_•^α - (-ψ_★)^α) / (-ψ_• - ψ_★) = Σ_{m<α} (-1)^{m+1} ψ_•^{α-1-m} ψ_★^m`;
/// zero for `α = 0`.
pub fn edge_polynomial(alpha: u32) -> EdgePolynomial {
    let coefficients = (0..alpha)
        .map(|m| {
            if m % 2 == 0 {
                -BigRational::one()
            } else {
                BigRational::one()
            }
        })
        .collect();
    EdgePolynomial { coefficients }
}

/// Powers of `ψ_•` and `ψ_★` attached to one part.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Flags {
    pub bullet: u32,
    pub star: u32,
}

/// `[Δ_P] ∏_j ψ_{•_j}^{b_j} ψ_{★_j}^{s_j}`; `flags[j]` belongs to `partition.parts()[j]`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct PinwheelMonomial {
    partition: SetPartition,
    flags: Vec<Flags>,
}

impl PinwheelMonomial {
    /// Panics if `flags` does not match the parts of `partition` or a
    /// singleton carries a `★` power.
    pub fn new(partition: SetPartition, flags: Vec<Flags>) -> Self {
        assert_eq!(partition.len(), flags.len(), "one flag pair per part");
        for (part, fl) in partition.parts().iter().zip(&flags) {
            assert!(part.len() > 1 || fl.star == 0, "singletons carry no star flag");
        }
        PinwheelMonomial { partition, flags }
    }

    /// The open stratum `∏ ψ_i^{k_i}`.
    pub fn singletons(exponents: &[u32]) -> Self {
        PinwheelMonomial {
            partition: SetPartition::singletons(exponents.len()),
            flags: exponents.iter().map(|&bullet| Flags { bullet, star: 0 }).collect(),
        }
    }

    /// Canonicalises an unordered list of `(part, flags)`.
    fn from_parts(mut parts: Vec<(Vec<usize>, Flags)>) -> Self {
        for (p, _) in &mut parts {
            p.sort_unstable();
        }
        parts.sort_by_key(|(p, _)| p[0]);
        let flags = parts.iter().map(|(_, f)| *f).collect();
        let partition = SetPartition::canonical(parts.into_iter().map(|(p, _)| p).collect());
        PinwheelMonomial { partition, flags }
    }

    pub fn partition(&self) -> &SetPartition {
        &self.partition
    }

    pub fn flags(&self) -> &[Flags] {
        &self.flags
    }

    /// Codimension of `Δ_P` plus the ψ-degree.
    pub fn degree(&self) -> i64 {
        let psi: i64 = self.flags.iter().map(|f| (f.bullet + f.star) as i64).sum();
        self.partition.tail_count() as i64 + psi
    }

    pub fn permuted(&self, perm: &[usize]) -> Self {
        Self::from_parts(
            self.partition
                .parts()
                .iter()
                .zip(&self.flags)
                .map(|(p, f)| (p.iter().map(|&i| perm[i]).collect(), *f))
                .collect(),
        )
    }

    fn tails_with_flags(&self) -> impl Iterator<Item = (&Vec<usize>, &Flags)> {
        self.partition
            .parts()
            .iter()
            .zip(&self.flags)
            .filter(|(p, _)| p.len() > 1)
    }

    fn render(&self, marks: usize) -> Vec<String> {
        let parts = self.partition.parts();
        let tails: Vec<&Vec<usize>> = self.partition.tails().collect();
        let mut factors = Vec::new();
        match tails.len() {
            0 => {}
            1 => {
                let spine: Vec<usize> = (0..marks).filter(|i| !tails[0].contains(i)).collect();
                factors.push(format!("D({}|{})", format_marks(&spine), format_marks(tails[0])));
            }
            _ => {
                let list: Vec<String> = tails.iter().map(|t| format_marks(t)).collect();
                factors.push(format!("Delta[{}]", list.join(",")));
            }
        }
        for (p, f) in parts.iter().zip(&self.flags) {
            if p.len() == 1 {
                push_power(&mut factors, &format!("psi_{}", p[0] + 1), f.bullet);
            }
        }
        for (p, f) in self.tails_with_flags() {
            let label = if tails.len() == 1 {
                String::new()
            } else {
                format_marks(p)
            };
            push_power(&mut factors, &format!("psi_b{label}"), f.bullet);
            push_power(&mut factors, &format!("psi_s{label}"), f.star);
        }
        factors
    }

    fn order_key(&self) -> (usize, Vec<usize>, Vec<&Vec<usize>>) {
        let tails: Vec<&Vec<usize>> = self.partition.tails().collect();
        let sizes = tails.iter().map(|t| t.len()).collect();
        (tails.len(), sizes, tails)
    }
}

/// Fewer tails first, then smaller tails, then tails lexicographically,
/// then flags.
impl Ord for PinwheelMonomial {
    fn cmp(&self, other: &Self) -> Ordering {
        self.order_key()
            .cmp(&other.order_key())
            .then_with(|| self.partition.cmp(&other.partition))
            .then_with(|| flag_key(&self.flags).cmp(&flag_key(&other.flags)))
    }
}

impl PartialOrd for PinwheelMonomial {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Lower `★` powers first, and within those higher `•` powers first, so a
/// tail prints in the same order as its edge polynomial.
fn flag_key(flags: &[Flags]) -> Vec<(u32, std::cmp::Reverse<u32>)> {
    flags.iter().map(|f| (f.star, std::cmp::Reverse(f.bullet))).collect()
}

fn push_power(factors: &mut Vec<String>, base: &str, power: u32) {
    match power {
        0 => {}
        1 => factors.push(base.to_string()),
        p => factors.push(format!("{base}^{p}")),
    }
}

/// Accumulates `± c*factor*factor` terms for display.
#[derive(Default)]
struct SignedSum(String);

impl SignedSum {
    fn push(&mut self, c: &BigRational, factors: Vec<String>) {
        let negative = c.is_negative();
        let magnitude = c.abs();
        let body = if factors.is_empty() {
            format_rational(&magnitude)
        } else if magnitude.is_one() {
            factors.join("*")
        } else {
            format!("{}*{}", format_rational(&magnitude), factors.join("*"))
        };
        match (self.0.is_empty(), negative) {
            (true, false) => self.0.push_str(&body),
            (true, true) => self.0.push_str(&format!("-{body}")),
            (false, false) => self.0.push_str(&format!(" + {body}")),
            (false, true) => self.0.push_str(&format!(" - {body}")),
        }
    }
}

impl fmt::Display for SignedSum {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            write!(f, "0")
        } else {
            write!(f, "{}", self.0)
        }
    }
}

/// A pinwheel stratum with factored decorations: a scalar, a ψ-power per
/// singleton and an [`EdgePolynomial`] per tail.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DecoratedPinwheelTerm {
    pub genus: u32,
    pub partition: SetPartition,
    pub scalar: BigRational,
    /// Keyed by the mark of the singleton.
    pub singleton_decorations: BTreeMap<usize, u32>,
    /// Keyed by the marks of the tail.
    pub edge_decorations: BTreeMap<Vec<usize>, EdgePolynomial>,
}

impl DecoratedPinwheelTerm {
    /// A term with a zero edge polynomial.
    pub fn is_zero(&self) -> bool {
        self.scalar.is_zero() || self.edge_decorations.values().any(EdgePolynomial::is_zero)
    }

    /// Multiplies out the edge polynomials.
    pub fn expand(&self) -> Vec<(PinwheelMonomial, BigRational)> {
        if self.is_zero() {
            return Vec::new();
        }
        let parts = self.partition.parts();
        let mut acc: Vec<(Vec<Flags>, BigRational)> = vec![(Vec::new(), self.scalar.clone())];
        for part in parts {
            if part.len() == 1 {
                let bullet = self.singleton_decorations.get(&part[0]).copied().unwrap_or(0);
                for (flags, _) in &mut acc {
                    flags.push(Flags { bullet, star: 0 });
                }
            } else {
                let edge = &self.edge_decorations[part];
                let mut next = Vec::with_capacity(acc.len() * edge.coefficients.len());
                for (flags, c) in &acc {
                    for (bullet, star, e) in edge.monomials() {
                        let mut f = flags.clone();
                        f.push(Flags { bullet, star });
                        next.push((f, c * e));
                    }
                }
                acc = next;
            }
        }
        acc.into_iter()
            .map(|(flags, c)| (PinwheelMonomial::new(self.partition.clone(), flags), c))
            .collect()
    }
}

/// A finite sum of pinwheel monomials on a fixed `M̄_{g,n}`, kept canonical:
/// sorted, merged, no zero coefficients.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PinwheelExpression {
    genus: u32,
    marks: usize,
    terms: BTreeMap<PinwheelMonomial, BigRational>,
}

impl PinwheelExpression {
    pub fn zero(genus: u32, marks: usize) -> Self {
        PinwheelExpression {
            genus,
            marks,
            terms: BTreeMap::new(),
        }
    }

    pub fn fundamental_class(genus: u32, marks: usize) -> Self {
        let mut e = Self::zero(genus, marks);
        e.add_term(PinwheelMonomial::singletons(&vec![0; marks]), BigRational::one());
        e
    }

    pub fn from_terms(genus: u32, marks: usize, terms: &[DecoratedPinwheelTerm]) -> Result<Self> {
        let mut e = Self::zero(genus, marks);
        for t in terms {
            if t.genus != genus || t.partition.ground_size() != marks {
                return Err(Error::GroundSetMismatch {
                    g1: genus,
                    n1: marks,
                    g2: t.genus,
                    n2: t.partition.ground_size(),
                });
            }
            for (m, c) in t.expand() {
                e.add_term(m, c);
            }
        }
        Ok(e)
    }

    /// Panics if `monomial` lives on a different ground set.
    pub fn add_term(&mut self, monomial: PinwheelMonomial, coefficient: BigRational) {
        assert_eq!(monomial.partition.ground_size(), self.marks);
        if coefficient.is_zero() {
            return;
        }
        let slot = self.terms.entry(monomial).or_insert_with(BigRational::zero);
        *slot += coefficient;
        if slot.is_zero() {
            self.terms.retain(|_, c| !c.is_zero());
        }
    }

    pub fn genus(&self) -> u32 {
        self.genus
    }

    pub fn marks(&self) -> usize {
        self.marks
    }

    pub fn terms(&self) -> impl Iterator<Item = (&PinwheelMonomial, &BigRational)> {
        self.terms.iter()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn coefficient(&self, monomial: &PinwheelMonomial) -> BigRational {
        self.terms.get(monomial).cloned().unwrap_or_else(BigRational::zero)
    }

    pub fn degrees(&self) -> BTreeSet<i64> {
        self.terms.keys().map(PinwheelMonomial::degree).collect()
    }

    /// Terms of Chow degree exactly `degree`.
    pub fn homogeneous_part(&self, degree: i64) -> Self {
        PinwheelExpression {
            genus: self.genus,
            marks: self.marks,
            terms: self
                .terms
                .iter()
                .filter(|(m, _)| m.degree() == degree)
                .map(|(m, c)| (m.clone(), c.clone()))
                .collect(),
        }
    }

    /// Relabels mark `i` as `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let mut e = Self::zero(self.genus, self.marks);
        for (m, c) in &self.terms {
            e.add_term(m.permuted(perm), c.clone());
        }
        e
    }

    pub fn to_serialized(&self) -> SerializedExpression {
        SerializedExpression {
            genus: self.genus,
            marks: self.marks,
            terms: self
                .terms
                .iter()
                .map(|(m, c)| SerializedTerm {
                    coefficient: format_rational(c),
                    parts: m
                        .partition
                        .parts()
                        .iter()
                        .map(|p| p.iter().map(|i| i + 1).collect())
                        .collect(),
                    flags: m.flags.iter().map(|f| [f.bullet, f.star]).collect(),
                })
                .collect(),
        }
    }

    pub fn from_serialized(s: &SerializedExpression) -> Result<Self> {
        let mut e = Self::zero(s.genus, s.marks);
        for t in &s.terms {
            let parts = t
                .parts
                .iter()
                .map(|p| p.iter().map(|i| i.wrapping_sub(1)).collect())
                .collect();
            let partition = SetPartition::new(parts, s.marks)?;
            if t.flags.len() != t.parts.len() {
                return Err(Error::SizeMismatch {
                    expected: t.parts.len(),
                    found: format!("{} flag pairs", t.flags.len()),
                });
            }
            // Flags follow the serialized part order, which may not be canonical.
            let mut listed: Vec<(Vec<usize>, Flags)> = t
                .parts
                .iter()
                .zip(&t.flags)
                .map(|(p, f)| {
                    (
                        p.iter().map(|i| i - 1).collect(),
                        Flags {
                            bullet: f[0],
                            star: f[1],
                        },
                    )
                })
                .collect();
            if listed.iter().any(|(p, f)| p.len() == 1 && f.star != 0) {
                return Err(Error::SizeMismatch {
                    expected: 0,
                    found: "star flag on a singleton".into(),
                });
            }
            listed.iter_mut().for_each(|(p, _)| p.sort_unstable());
            let monomial = PinwheelMonomial::from_parts(listed);
            debug_assert_eq!(monomial.partition, partition);
            e.add_term(monomial, parse_rational(&t.coefficient)?);
        }
        Ok(e)
    }
}

impl fmt::Display for PinwheelExpression {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut out = SignedSum::default();
        for (m, c) in &self.terms {
            out.push(c, m.render(self.marks));
        }
        write!(f, "{out}")
    }
}

/// Machine-readable form: 1-based parts, `[bullet, star]` per part, exact
/// coefficients as strings.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SerializedExpression {
    pub genus: u32,
    pub marks: usize,
    pub terms: Vec<SerializedTerm>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SerializedTerm {
    pub coefficient: String,
    pub parts: Vec<Vec<usize>>,
    pub flags: Vec<[u32; 2]>,
}

pub fn expressions_equal(e1: &PinwheelExpression, e2: &PinwheelExpression) -> Result<bool> {
    if e1.genus != e2.genus || e1.marks != e2.marks {
        return Err(Error::GroundSetMismatch {
            g1: e1.genus,
            n1: e1.marks,
            g2: e2.genus,
            n2: e2.marks,
        });
    }
    Ok(e1.terms == e2.terms)
}

fn check_space(genus: u32, a: &WeightData) -> Result<()> {
    if !a.is_stable(genus) {
        return Err(Error::UnstableWeights {
            genus,
            total: format_rational(&a.total()),
        });
    }
    Ok(())
}

fn check_mark(mark: usize, n: usize) -> Result<()> {
    if mark >= n {
        return Err(Error::InvalidMark { mark: mark + 1, n });
    }
    Ok(())
}

/// `c_A^* ψ_{i,A} = ψ_i - Σ D(P|Q)` over `Q ∋ i`, `|Q| ≥ 2`, `Σ_Q a ≤ 1`.
/// `mark` is 0-based.
pub fn pullback_psi_one(genus: u32, a: &WeightData, mark: usize) -> Result<PinwheelExpression> {
    let n = a.len();
    check_mark(mark, n)?;
    check_space(genus, a)?;
    let mut k = vec![0; n];
    k[mark] = 1;
    let mut e = PinwheelExpression::zero(genus, n);
    e.add_term(PinwheelMonomial::singletons(&k), BigRational::one());
    for mask in 0u64..(1 << n) {
        let q: Vec<usize> = (0..n).filter(|i| mask >> i & 1 == 1).collect();
        if q.len() < 2 || !q.contains(&mark) || a.subset_sum(&q) > BigRational::one() {
            continue;
        }
        let mut parts: Vec<(Vec<usize>, Flags)> = (0..n)
            .filter(|i| !q.contains(i))
            .map(|i| (vec![i], Flags::default()))
            .collect();
        parts.push((q, Flags::default()));
        e.add_term(PinwheelMonomial::from_parts(parts), -BigRational::one());
    }
    Ok(e)
}

/// Factored terms of the closed formula, one per `P ∈ 𝔓_A` whose tails all
/// carry a positive exponent.
pub fn pullback_terms(genus: u32, a: &WeightData, k: &[u32]) -> Result<Vec<DecoratedPinwheelTerm>> {
    if a.len() != k.len() {
        return Err(Error::LengthMismatch {
            exponents: k.len(),
            weights: a.len(),
        });
    }
    check_space(genus, a)?;
    let mut out = Vec::new();
    for p in enumerate_totally_unstable(a) {
        let mut singleton_decorations = BTreeMap::new();
        let mut edge_decorations = BTreeMap::new();
        for part in p.parts() {
            let alpha: u32 = part.iter().map(|&i| k[i]).sum();
            if part.len() == 1 {
                singleton_decorations.insert(part[0], alpha);
            } else {
                edge_decorations.insert(part.clone(), edge_polynomial(alpha));
            }
        }
        let term = DecoratedPinwheelTerm {
            genus,
            partition: p,
            scalar: BigRational::one(),
            singleton_decorations,
            edge_decorations,
        };
        if !term.is_zero() {
            out.push(term);
        }
    }
    Ok(out)
}

/// `c_A^*(∏ ψ_{i,A}^{k_i})` by the closed partition formula.
pub fn pullback_psi_monomial(genus: u32, a: &WeightData, k: &[u32]) -> Result<PinwheelExpression> {
    let terms = pullback_terms(genus, a, k)?;
    PinwheelExpression::from_terms(genus, a.len(), &terms)
}

/// Integral over `M̄_{g,n}`: spine correlator on the `•` powers times a
/// genus-0 correlator `⟨τ_s τ_0^{|P_j|}⟩_0` on each tail.
pub fn integrate(expr: &PinwheelExpression) -> Result<BigRational> {
    let expected = dimension(expr.genus, expr.marks);
    let mut total = BigRational::zero();
    for (m, c) in &expr.terms {
        let found = m.degree();
        if found != expected {
            return Err(Error::DegreeMismatch { expected, found });
        }
        let spine: Vec<u32> = m.flags.iter().map(|f| f.bullet).collect();
        let mut value = witten_correlator(expr.genus, &spine);
        for (p, f) in m.tails_with_flags() {
            if value.is_zero() {
                break;
            }
            let mut tail = vec![0; p.len()];
            tail.push(f.star);
            value *= witten_correlator(0, &tail);
        }
        total += c * value;
    }
    Ok(total)
}

/// Every tail contains a mark with positive exponent.
pub fn has_support_property(expr: &PinwheelExpression, k: &[u32]) -> bool {
    expr.terms
        .keys()
        .all(|m| m.partition.tails().all(|t| t.iter().any(|&i| k[i] > 0)))
}

/// Memoised inductive computation of pull-backs, independent of
/// [`pullback_psi_monomial`].
///
/// Each step multiplies by `c_A^* ψ_i = ψ_i - Σ_T D(T)`. On a tail, `ψ_i` is
/// rewritten as `-ψ_★` plus boundary divisors of the tail; the product with
/// `D(T)` falls down to a pull-back on the space where `T` is replaced by a
/// single mark of weight `min(1, Σ_T a)`, computed recursively on fewer
/// marks. The deeper strata created by the two halves must cancel, and
/// this is checked rather than assumed.
#[derive(Default)]
pub struct PullbackOracle {
    memo: HashMap<(u32, WeightData, Vec<u32>), PinwheelExpression>,
}

type DeepStratum = (PinwheelMonomial, Vec<usize>);

impl PullbackOracle {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn pullback(&mut self, genus: u32, a: &WeightData, k: &[u32]) -> Result<PinwheelExpression> {
        if a.len() != k.len() {
            return Err(Error::LengthMismatch {
                exponents: k.len(),
                weights: a.len(),
            });
        }
        check_space(genus, a)?;
        let key = (genus, a.clone(), k.to_vec());
        if let Some(e) = self.memo.get(&key) {
            return Ok(e.clone());
        }
        let e = match k.iter().rposition(|&x| x > 0) {
            None => PinwheelExpression::fundamental_class(genus, a.len()),
            Some(i) => {
                let mut lower = k.to_vec();
                lower[i] -= 1;
                let prev = self.pullback(genus, a, &lower)?;
                self.multiply(&prev, a, i)?
            }
        };
        self.memo.insert(key, e.clone());
        Ok(e)
    }

    /// `expr · c_A^* ψ_{mark,A}` for `expr` a pull-back of a ψ-monomial.
    pub fn multiply(&mut self, expr: &PinwheelExpression, a: &WeightData, mark: usize) -> Result<PinwheelExpression> {
        let (g, n) = (expr.genus, expr.marks);
        if a.len() != n {
            return Err(Error::GroundSetMismatch {
                g1: g,
                n1: n,
                g2: g,
                n2: a.len(),
            });
        }
        check_mark(mark, n)?;
        check_space(g, a)?;
        let k = read_exponents(expr)?;

        let mut out = PinwheelExpression::zero(g, n);
        let mut deep: HashMap<DeepStratum, BigRational> = HashMap::new();

        // expr · ψ_mark
        for (m, c) in &expr.terms {
            let j = m.partition.part_of(mark).expect("mark lies in a part");
            let part = &m.partition.parts()[j];
            let mut raised = m.clone();
            if part.len() == 1 {
                raised.flags[j].bullet += 1;
                out.add_term(raised, c.clone());
            } else {
                raised.flags[j].star += 1;
                out.add_term(raised, -c);
                for leaf in proper_subsets_containing(part, mark) {
                    *deep.entry((m.clone(), leaf)).or_insert_with(BigRational::zero) += c;
                }
            }
        }

        // -expr · D(T) for every unstable T ∋ mark
        for t in subsets_containing(n, mark) {
            let weight = a.subset_sum(&t);
            if t.len() < 2 || weight > BigRational::one() {
                continue;
            }
            let rest: Vec<usize> = (0..n).filter(|i| !t.contains(i)).collect();
            let mut spine_weights: Vec<BigRational> = rest.iter().map(|&i| a.weights()[i].clone()).collect();
            spine_weights.push(weight);
            let mut spine_k: Vec<u32> = rest.iter().map(|&i| k[i]).collect();
            spine_k.push(t.iter().map(|&i| k[i]).sum());
            let spine = self.pullback(g, &WeightData::new(spine_weights)?, &spine_k)?;
            let node = rest.len();
            for (q, c) in &spine.terms {
                let mut parts = Vec::with_capacity(q.partition.len());
                let mut glued: Option<(Vec<usize>, Flags)> = None;
                for (p, f) in q.partition.parts().iter().zip(&q.flags) {
                    let lifted: Vec<usize> = p.iter().filter(|&&i| i != node).map(|&i| rest[i]).collect();
                    if p.contains(&node) {
                        glued = Some((lifted, *f));
                    } else {
                        parts.push((lifted, *f));
                    }
                }
                let (outer, f) = glued.expect("node lies in a part");
                if outer.is_empty() {
                    parts.push((
                        t.clone(),
                        Flags {
                            bullet: f.bullet,
                            star: 0,
                        },
                    ));
                    out.add_term(PinwheelMonomial::from_parts(parts), -c);
                } else {
                    let mut merged = outer;
                    merged.extend(&t);
                    parts.push((merged, f));
                    let key = (PinwheelMonomial::from_parts(parts), t.clone());
                    *deep.entry(key).or_insert_with(BigRational::zero) -= c;
                }
            }
        }

        let leftover = deep.values().filter(|c| !c.is_zero()).count();
        if leftover > 0 {
            return Err(Error::UncancelledStratum(leftover));
        }
        Ok(out)
    }
}

/// One inductive step with a fresh [`PullbackOracle`]. `mark` is 0-based.
pub fn multiply_pullback_psi(expr: &PinwheelExpression, a: &WeightData, mark: usize) -> Result<PinwheelExpression> {
    PullbackOracle::new().multiply(expr, a, mark)
}

/// Recovers `k` from the open-stratum term `∏ ψ_i^{k_i}`, which must be the
/// only all-singletons monomial and carry coefficient 1.
fn read_exponents(expr: &PinwheelExpression) -> Result<Vec<u32>> {
    let open: Vec<_> = expr.terms.iter().filter(|(m, _)| m.partition.is_singletons()).collect();
    match open[..] {
        [(m, c)] if c.is_one() => Ok(m.flags.iter().map(|f| f.bullet).collect()),
        _ => Err(Error::NotAPullbackMonomial(format!(
            "expected a single open-stratum term with coefficient 1, found {}",
            open.len()
        ))),
    }
}

fn subsets_containing(n: usize, mark: usize) -> Vec<Vec<usize>> {
    (0u64..(1 << n))
        .filter(|mask| mask >> mark & 1 == 1)
        .map(|mask| (0..n).filter(|i| mask >> i & 1 == 1).collect())
        .collect()
}

/// `T ⊊ part` with `mark ∈ T` and `|T| ≥ 2`.
fn proper_subsets_containing(part: &[usize], mark: usize) -> Vec<Vec<usize>> {
    let pos = part.iter().position(|&i| i == mark).unwrap();
    subsets_containing(part.len(), pos)
        .into_iter()
        .filter(|s| s.len() >= 2 && s.len() < part.len())
        .map(|s| s.into_iter().map(|i| part[i]).collect())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numbers::hassett_number;
    use crate::rational::{int, rat};

    fn example_weights() -> WeightData {
        WeightData::parse("7/8,2/3,1/3,1/4,1/6").unwrap()
    }

    fn flags(bs: &[(u32, u32)]) -> Vec<Flags> {
        bs.iter().map(|&(bullet, star)| Flags { bullet, star }).collect()
    }

    #[test]
    fn edge_polynomials() {
        assert!(edge_polynomial(0).is_zero());
        assert_eq!(edge_polynomial(1).coefficients(), &[int(-1)]);
        assert_eq!(edge_polynomial(3).coefficients(), &[int(-1), int(1), int(-1)]);
        assert_eq!(edge_polynomial(3).to_string(), "-psi_b^2 + psi_b*psi_s - psi_s^2");
        assert_eq!(edge_polynomial(0).degree(), None);
        assert_eq!(edge_polynomial(4).degree(), Some(3));
    }

    #[test]
    fn edge_polynomial_clears_denominator() {
        // E(α)·(-ψ_• - ψ_★) = ψ_•^α - (-ψ_★)^α, coefficients indexed by ψ_★ power.
        for alpha in 1..8u32 {
            let e = edge_polynomial(alpha);
            let mut product = vec![BigRational::zero(); alpha as usize + 1];
            for (m, c) in e.coefficients().iter().enumerate() {
                product[m] -= c;
                product[m + 1] -= c;
            }
            let mut expected = vec![BigRational::zero(); alpha as usize + 1];
            expected[0] = int(1);
            expected[alpha as usize] -= if alpha % 2 == 0 { int(1) } else { int(-1) };
            assert_eq!(product, expected, "alpha = {alpha}");
        }
    }

    #[test]
    fn weighted_psi_pullbacks() {
        let b = example_weights();
        assert_eq!(pullback_psi_one(0, &b, 0).unwrap().to_string(), "psi_1");
        assert_eq!(
            pullback_psi_one(0, &b, 1).unwrap().to_string(),
            "psi_2 - D({1,4,5}|{2,3}) - D({1,3,5}|{2,4}) - D({1,3,4}|{2,5})"
        );
        assert_eq!(
            pullback_psi_one(0, &b, 2).unwrap().to_string(),
            "psi_3 - D({1,4,5}|{2,3}) - D({1,2,5}|{3,4}) - D({1,2,4}|{3,5}) - D({1,2}|{3,4,5})"
        );
        assert_eq!(pullback_psi_one(0, &b, 5), Err(Error::InvalidMark { mark: 6, n: 5 }));
    }

    #[test]
    fn unit_weights_give_one_term() {
        let e = pullback_psi_monomial(1, &WeightData::ones(4), &[2, 0, 1, 1]).unwrap();
        assert_eq!(e.len(), 1);
        assert_eq!(e.to_string(), "psi_1^2*psi_3*psi_4");
    }

    #[test]
    fn degree_one_matches_single_pullback() {
        let b = example_weights();
        for i in 0..5 {
            let mut k = vec![0; 5];
            k[i] = 1;
            assert_eq!(
                pullback_psi_monomial(0, &b, &k).unwrap(),
                pullback_psi_one(0, &b, i).unwrap()
            );
        }
    }

    #[test]
    fn genus_one_two_halves() {
        let a = WeightData::diagonal(2, 2);
        let e = pullback_psi_monomial(1, &a, &[1, 1]).unwrap();
        assert_eq!(e.to_string(), "psi_1*psi_2 - D({}|{1,2})*psi_b + D({}|{1,2})*psi_s");
        let one = pullback_psi_one(1, &a, 0).unwrap();
        assert_eq!(multiply_pullback_psi(&one, &a, 1).unwrap(), e);
        assert_eq!(integrate(&e).unwrap(), int(0));
    }

    #[test]
    fn integration() {
        let open = {
            let mut e = PinwheelExpression::zero(1, 2);
            e.add_term(PinwheelMonomial::singletons(&[1, 1]), int(1));
            e
        };
        assert_eq!(integrate(&open).unwrap(), rat(1, 24));

        let tail = SetPartition::from_one_based(&[&[1, 2]], 2).unwrap();
        let mut edge = PinwheelExpression::zero(1, 2);
        edge.add_term(PinwheelMonomial::new(tail.clone(), flags(&[(1, 0)])), int(-1));
        edge.add_term(PinwheelMonomial::new(tail, flags(&[(0, 1)])), int(1));
        assert_eq!(integrate(&edge).unwrap(), rat(-1, 24));

        let mut low = PinwheelExpression::zero(1, 2);
        low.add_term(PinwheelMonomial::singletons(&[1, 0]), int(1));
        assert_eq!(integrate(&low), Err(Error::DegreeMismatch { expected: 2, found: 1 }));
    }

    #[test]
    fn canonical_equality() {
        let terms = pullback_terms(0, &WeightData::diagonal(2, 5), &[1, 1, 0, 0, 0]).unwrap();
        let forward = PinwheelExpression::from_terms(0, 5, &terms).unwrap();
        let reversed: Vec<_> = terms.iter().rev().cloned().collect();
        let backward = PinwheelExpression::from_terms(0, 5, &reversed).unwrap();
        assert!(expressions_equal(&forward, &forward).unwrap());
        assert!(expressions_equal(&forward, &backward).unwrap());
        let other = PinwheelExpression::zero(0, 4);
        assert!(matches!(
            expressions_equal(&forward, &other),
            Err(Error::GroundSetMismatch { .. })
        ));
    }

    #[test]
    fn oracle_agrees_on_square() {
        let a = WeightData::diagonal(2, 5);
        let k = [2, 0, 0, 0, 0];
        let closed = pullback_psi_monomial(0, &a, &k).unwrap();
        let oracle = PullbackOracle::new().pullback(0, &a, &k).unwrap();
        assert!(expressions_equal(&closed, &oracle).unwrap());
        assert_eq!(integrate(&closed).unwrap(), int(-3));
        assert_eq!(integrate(&closed).unwrap(), hassett_number(0, &a, &k).unwrap());
    }

    #[test]
    fn oracle_rejects_non_pullbacks() {
        let a = WeightData::diagonal(2, 4);
        let mut e = PinwheelExpression::fundamental_class(1, 4);
        e.add_term(PinwheelMonomial::singletons(&[1, 0, 0, 0]), int(1));
        assert!(matches!(
            multiply_pullback_psi(&e, &a, 0),
            Err(Error::NotAPullbackMonomial(_))
        ));
        let wrong = PinwheelExpression::fundamental_class(1, 5);
        assert!(matches!(
            multiply_pullback_psi(&wrong, &a, 0),
            Err(Error::GroundSetMismatch { .. })
        ));
    }

    #[test]
    fn unstable_space_is_rejected() {
        let a = WeightData::diagonal(2, 4);
        assert!(matches!(
            pullback_psi_monomial(0, &a, &[1, 0, 0, 0]),
            Err(Error::UnstableWeights { .. })
        ));
        assert!(matches!(
            pullback_psi_monomial(0, &a, &[1, 0, 0]),
            Err(Error::LengthMismatch { .. })
        ));
    }

    #[test]
    fn multi_tail_display_and_degree() {
        let a = WeightData::diagonal(3, 5);
        let e = pullback_psi_monomial(1, &a, &[1, 0, 1, 0, 0]).unwrap();
        let p = SetPartition::from_one_based(&[&[1, 2], &[3, 4], &[5]], 5).unwrap();
        let m = PinwheelMonomial::new(p, flags(&[(0, 0), (0, 0), (0, 0)]));
        assert_eq!(e.coefficient(&m), int(1));
        assert!(e.to_string().contains("Delta[{1,2},{3,4}]"));
        assert_eq!(e.degrees(), [2].into_iter().collect());
        assert!(has_support_property(&e, &[1, 0, 1, 0, 0]));
    }

    #[test]
    fn relabelling_commutes_with_pullback() {
        let a = example_weights();
        let k = [0, 1, 1, 0, 0];
        let perm = [4, 2, 0, 1, 3];
        let direct = pullback_psi_monomial(0, &a.permuted(&perm), &permute(&k, &perm)).unwrap();
        let moved = pullback_psi_monomial(0, &a, &k).unwrap().permuted(&perm);
        assert_eq!(direct, moved);
    }

    fn permute(k: &[u32], perm: &[usize]) -> Vec<u32> {
        let mut out = vec![0; k.len()];
        for (i, &p) in perm.iter().enumerate() {
            out[p] = k[i];
        }
        out
    }

    #[test]
    fn serialization_round_trip() {
        let e = pullback_psi_monomial(1, &WeightData::diagonal(3, 5), &[1, 0, 1, 0, 0]).unwrap();
        let s = e.to_serialized();
        assert_eq!(PinwheelExpression::from_serialized(&s).unwrap(), e);
        let text = serde_json::to_string(&s).unwrap();
        let back: SerializedExpression = serde_json::from_str(&text).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn homogeneous_part_filters() {
        let mut e = PinwheelExpression::fundamental_class(0, 4);
        e.add_term(PinwheelMonomial::singletons(&[1, 0, 0, 0]), int(3));
        assert_eq!(e.homogeneous_part(1).len(), 1);
        assert_eq!(e.homogeneous_part(0).len(), 1);
        assert!(e.homogeneous_part(2).is_empty());
    }
}
