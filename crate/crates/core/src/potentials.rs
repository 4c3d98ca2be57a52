//! Truncated generating functions for ψ-integrals and the operators relating
//! them.
//!
//! A [`TruncatedSeries`] is graded by genus (standing in for `λ^{2g-2}`) and
//! keeps only monomials with at most `N` variable factors. Coefficients use
//! the exponential convention: a monomial `∏ v^{b_v}` carries
//! `correlator / ∏ b_v!`.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};

use crate::error::{Error, Result};
use crate::numbers::hassett_number;
use crate::partitions::WeightData;
use crate::rational::{factorial, format_rational, format_rational_strict, parse_rational};
use crate::witten::witten_correlator;

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Variable {
    /// `t_{a,k}`
    T { weight: BigRational, index: u32 },
    /// `x_k`
    X { index: u32 },
}

impl Variable {
    pub fn t(weight: BigRational, index: u32) -> Self {
        Variable::T { weight, index }
    }

    pub fn x(index: u32) -> Self {
        Variable::X { index }
    }

    /// `a` for `t_{a,k}`, 1 for `x_k`.
    pub fn weight(&self) -> BigRational {
        match self {
            Variable::T { weight, .. } => weight.clone(),
            Variable::X { .. } => BigRational::one(),
        }
    }
}

impl fmt::Display for Variable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Variable::T { weight, index } => write!(f, "t[{},{}]", format_rational_strict(weight), index),
            Variable::X { index } => write!(f, "x[{index}]"),
        }
    }
}

/// Sorted `(variable, power)` pairs with positive powers.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Monomial(Vec<(Variable, u32)>);

impl Monomial {
    pub fn one() -> Self {
        Monomial(Vec::new())
    }

    pub fn new(factors: Vec<(Variable, u32)>) -> Self {
        let mut merged: BTreeMap<Variable, u32> = BTreeMap::new();
        for (v, p) in factors {
            *merged.entry(v).or_insert(0) += p;
        }
        Monomial(merged.into_iter().filter(|(_, p)| *p > 0).collect())
    }

    pub fn var(v: Variable) -> Self {
        Monomial(vec![(v, 1)])
    }

    pub fn factors(&self) -> &[(Variable, u32)] {
        &self.0
    }

    /// Number of variable factors counted with multiplicity.
    pub fn degree(&self) -> u32 {
        self.0.iter().map(|(_, p)| p).sum()
    }

    pub fn has_x(&self) -> bool {
        self.0.iter().any(|(v, _)| matches!(v, Variable::X { .. }))
    }

    /// `Σ a_i` over factors with multiplicity; `x` factors count 1.
    pub fn total_weight(&self) -> BigRational {
        self.0
            .iter()
            .map(|(v, p)| v.weight() * BigRational::from_integer((*p).into()))
            .sum()
    }

    /// `∏ b_v!`.
    pub fn automorphism_factor(&self) -> BigInt {
        self.0.iter().fold(BigInt::one(), |acc, (_, p)| acc * factorial(*p))
    }

    pub fn mul(&self, other: &Monomial) -> Monomial {
        let mut all = self.0.clone();
        all.extend(other.0.iter().cloned());
        Monomial::new(all)
    }

    /// Splits off all `x` factors: `(t-part, [(k, power)])`.
    fn split_x(&self) -> (Monomial, Vec<(u32, u32)>) {
        let mut t = Vec::new();
        let mut x = Vec::new();
        for (v, p) in &self.0 {
            match v {
                Variable::X { index } => x.push((*index, *p)),
                _ => t.push((v.clone(), *p)),
            }
        }
        (Monomial(t), x)
    }

    /// `self` with one fewer copy of the factor at position `pos`.
    fn lowered(&self, pos: usize) -> Monomial {
        let mut f = self.0.clone();
        f[pos].1 -= 1;
        if f[pos].1 == 0 {
            f.remove(pos);
        }
        Monomial(f)
    }
}

impl fmt::Display for Monomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return write!(f, "1");
        }
        let parts: Vec<String> = self
            .0
            .iter()
            .map(|(v, p)| if *p == 1 { v.to_string() } else { format!("{v}^{p}") })
            .collect();
        write!(f, "{}", parts.join(" "))
    }
}

/// A genus-free polynomial, used for the values of a [`SubstitutionMap`].
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Polynomial {
    terms: BTreeMap<Monomial, BigRational>,
}

impl Polynomial {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn constant(c: BigRational) -> Self {
        let mut p = Self::zero();
        p.add_term(Monomial::one(), c);
        p
    }

    pub fn monomial(m: Monomial, c: BigRational) -> Self {
        let mut p = Self::zero();
        p.add_term(m, c);
        p
    }

    pub fn add_term(&mut self, m: Monomial, c: BigRational) {
        if c.is_zero() {
            return;
        }
        let slot = self.terms.entry(m.clone()).or_insert_with(BigRational::zero);
        *slot += c;
        if slot.is_zero() {
            self.terms.remove(&m);
        }
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Monomial, &BigRational)> {
        self.terms.iter()
    }

    pub fn coefficient(&self, m: &Monomial) -> BigRational {
        self.terms.get(m).cloned().unwrap_or_else(BigRational::zero)
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// Product with monomials of degree above `truncation` dropped.
    pub fn mul_truncated(&self, other: &Polynomial, truncation: u32) -> Polynomial {
        let mut out = Polynomial::zero();
        for (m1, c1) in &self.terms {
            for (m2, c2) in &other.terms {
                if m1.degree() + m2.degree() <= truncation {
                    out.add_term(m1.mul(m2), c1 * c2);
                }
            }
        }
        out
    }
}

impl fmt::Display for Polynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        // Lowest degree first, e.g. `t[1/4,0] - t[1/4,0] t[1/4,1] + 1/2 t[1/4,0]^2 t[1/4,2]`.
        let mut terms: Vec<_> = self.terms.iter().collect();
        terms.sort_by(|a, b| (a.0.degree(), a.0).cmp(&(b.0.degree(), b.0)));
        for (j, (m, c)) in terms.into_iter().enumerate() {
            let negative = c < &BigRational::zero();
            match (j, negative) {
                (0, true) => write!(f, "-")?,
                (0, false) => {}
                (_, true) => write!(f, " - ")?,
                (_, false) => write!(f, " + ")?,
            }
            let magnitude = if negative { -c.clone() } else { c.clone() };
            match (magnitude.is_one(), m.factors().is_empty()) {
                (true, true) => write!(f, "1")?,
                (true, false) => write!(f, "{m}")?,
                (false, true) => write!(f, "{}", format_rational(&magnitude))?,
                (false, false) => write!(f, "{} {m}", format_rational(&magnitude))?,
            }
        }
        Ok(())
    }
}

/// `Σ_g λ^{2g-2} Σ_m c_{g,m} m`, truncated at `N` factors.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TruncatedSeries {
    truncation: u32,
    terms: BTreeMap<(u32, Monomial), BigRational>,
}

impl TruncatedSeries {
    pub fn new(truncation: u32) -> Self {
        TruncatedSeries {
            truncation,
            terms: BTreeMap::new(),
        }
    }

    pub fn truncation(&self) -> u32 {
        self.truncation
    }

    /// Adds `c·m` in genus `g`; ignored above the truncation.
    pub fn add_term(&mut self, genus: u32, m: Monomial, c: BigRational) {
        if c.is_zero() || m.degree() > self.truncation {
            return;
        }
        let key = (genus, m);
        let slot = self.terms.entry(key.clone()).or_insert_with(BigRational::zero);
        *slot += c;
        if slot.is_zero() {
            self.terms.remove(&key);
        }
    }

    pub fn coefficient(&self, genus: u32, m: &Monomial) -> BigRational {
        self.terms
            .get(&(genus, m.clone()))
            .cloned()
            .unwrap_or_else(BigRational::zero)
    }

    /// Coefficient times `∏ b!`, i.e. the underlying correlator.
    pub fn correlator_value(&self, genus: u32, m: &Monomial) -> BigRational {
        self.coefficient(genus, m) * BigRational::from_integer(m.automorphism_factor())
    }

    pub fn terms(&self) -> impl Iterator<Item = (u32, &Monomial, &BigRational)> {
        self.terms.iter().map(|((g, m), c)| (*g, m, c))
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// Drops everything above `truncation` (which may not exceed the current one).
    pub fn truncated(&self, truncation: u32) -> Self {
        let truncation = truncation.min(self.truncation);
        TruncatedSeries {
            truncation,
            terms: self
                .terms
                .iter()
                .filter(|((_, m), _)| m.degree() <= truncation)
                .map(|(k, c)| (k.clone(), c.clone()))
                .collect(),
        }
    }

    /// Sum at the smaller of the two truncations.
    pub fn add(&self, other: &TruncatedSeries) -> Self {
        let mut out = self.truncated(other.truncation);
        for (g, m, c) in other.terms() {
            out.add_term(g, m.clone(), c.clone());
        }
        out
    }

    /// Multiplies every genus slice by a genus-free polynomial.
    pub fn mul_polynomial(&self, p: &Polynomial) -> Self {
        let mut out = TruncatedSeries::new(self.truncation);
        for (g, m, c) in self.terms() {
            for (pm, pc) in p.terms() {
                out.add_term(g, m.mul(pm), c * pc);
            }
        }
        out
    }

    /// One line per term, `g | monomial | p/q`, after a truncation header.
    pub fn to_lines(&self) -> String {
        let mut out = format!("# truncation {}\n", self.truncation);
        for (g, m, c) in self.terms() {
            out.push_str(&format!("{g} | {m} | {}\n", format_rational_strict(c)));
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut truncation = None;
        let mut rows = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            let bad = |reason: &str| Error::MalformedSeries {
                line: lineno + 1,
                reason: reason.to_string(),
            };
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('#') {
                if let Some(n) = rest.trim().strip_prefix("truncation") {
                    truncation = Some(n.trim().parse::<u32>().map_err(|_| bad("bad truncation"))?);
                }
                continue;
            }
            let fields: Vec<&str> = line.split('|').collect();
            let [g, m, c] = fields[..] else {
                return Err(bad("expected three '|'-separated fields"));
            };
            let g: u32 = g.trim().parse().map_err(|_| bad("bad genus"))?;
            let m = parse_monomial(m.trim()).map_err(|r| bad(&r))?;
            if !c.contains('/') {
                return Err(bad("coefficient must be p/q"));
            }
            let c = parse_rational(c).map_err(|_| bad("bad coefficient"))?;
            rows.push((g, m, c));
        }
        let truncation = truncation.unwrap_or_else(|| rows.iter().map(|(_, m, _)| m.degree()).max().unwrap_or(0));
        let mut s = TruncatedSeries::new(truncation);
        for (g, m, c) in rows {
            s.add_term(g, m, c);
        }
        Ok(s)
    }
}

impl fmt::Display for TruncatedSeries {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_lines())
    }
}

fn parse_monomial(s: &str) -> std::result::Result<Monomial, String> {
    if s == "1" || s.is_empty() {
        return Ok(Monomial::one());
    }
    let mut factors = Vec::new();
    for token in s.split_whitespace() {
        let (var, power) = match token.split_once("]^") {
            Some((v, p)) => (
                format!("{v}]"),
                p.parse::<u32>().map_err(|_| format!("bad power in {token}"))?,
            ),
            None => (token.to_string(), 1),
        };
        let inner = var.strip_suffix(']').ok_or_else(|| format!("bad variable {token}"))?;
        let v = if let Some(body) = inner.strip_prefix("t[") {
            let (a, k) = body.split_once(',').ok_or_else(|| format!("bad variable {token}"))?;
            let weight = parse_rational(a).map_err(|e| e.to_string())?;
            let index = k.trim().parse().map_err(|_| format!("bad index in {token}"))?;
            Variable::t(weight, index)
        } else if let Some(k) = inner.strip_prefix("x[") {
            Variable::x(k.trim().parse().map_err(|_| format!("bad index in {token}"))?)
        } else {
            return Err(format!("unknown variable {token}"));
        };
        factors.push((v, power));
    }
    Ok(Monomial::new(factors))
}

/// `x_k ↦ f_k(t)`.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SubstitutionMap {
    pub assignments: BTreeMap<u32, Polynomial>,
}

impl SubstitutionMap {
    pub fn get(&self, k: u32) -> Option<&Polynomial> {
        self.assignments.get(&k)
    }
}

/// Sorted, de-duplicated weight list.
fn weight_set(weights: &[BigRational]) -> Vec<BigRational> {
    let mut w = weights.to_vec();
    w.sort();
    w.dedup();
    w
}

fn check_weights(weights: &[BigRational]) -> Result<()> {
    for (position, a) in weights.iter().enumerate() {
        if *a <= BigRational::zero() || *a > BigRational::one() {
            return Err(Error::WeightOutOfRange {
                position: position + 1,
                value: format_rational(a),
            });
        }
    }
    Ok(())
}

/// A multiset as `(item, multiplicity)` pairs with increasing items.
type Chosen = [(usize, u32)];

/// Calls `visit` with every multiset of `(item, multiplicity)` drawn from
/// `0..items`, of size at most `max_size`, for which `keep` accepts every
/// prefix. `keep` sees the item being added.
fn for_each_multiset(
    items: usize,
    max_size: u32,
    keep: &mut dyn FnMut(&Chosen, usize) -> bool,
    visit: &mut dyn FnMut(&Chosen),
) {
    fn go(
        start: usize,
        items: usize,
        left: u32,
        chosen: &mut Vec<(usize, u32)>,
        keep: &mut dyn FnMut(&Chosen, usize) -> bool,
        visit: &mut dyn FnMut(&Chosen),
    ) {
        visit(chosen);
        if left == 0 {
            return;
        }
        for item in start..items {
            if !keep(chosen, item) {
                continue;
            }
            match chosen.last_mut() {
                Some((last, mult)) if *last == item => *mult += 1,
                _ => chosen.push((item, 1)),
            }
            go(item, items, left - 1, chosen, keep, visit);
            let top = chosen.last_mut().unwrap();
            top.1 -= 1;
            if top.1 == 0 {
                chosen.pop();
            }
        }
    }
    go(0, items, max_size, &mut Vec::new(), keep, visit);
}

fn inverse_automorphisms(chosen: &[(usize, u32)]) -> BigRational {
    let denom = chosen.iter().fold(BigInt::one(), |acc, (_, m)| acc * factorial(*m));
    BigRational::new(BigInt::one(), denom)
}

/// `F = Σ_g λ^{2g-2} Σ ⟨∏ τ_{k_i}⟩_g ∏ x_{k_i}^{b}/b!` for `g ≤ G`.
pub fn witten_potential(max_genus: u32, truncation: u32) -> TruncatedSeries {
    let mut out = TruncatedSeries::new(truncation);
    for g in 0..=max_genus {
        let max_index = (3 * g + truncation).saturating_sub(3);
        let items = max_index as usize + 1;
        let mut keep = |chosen: &[(usize, u32)], item: usize| {
            let used: usize = chosen.iter().map(|(i, m)| i * *m as usize).sum();
            used + item <= max_index as usize
        };
        let mut visit = |chosen: &[(usize, u32)]| {
            let mut k = Vec::new();
            for (i, m) in chosen {
                k.extend(std::iter::repeat_n(*i as u32, *m as usize));
            }
            let value = witten_correlator(g, &k);
            if value.is_zero() {
                return;
            }
            let m = Monomial::new(chosen.iter().map(|(i, p)| (Variable::x(*i as u32), *p)).collect());
            out.add_term(g, m, value * inverse_automorphisms(chosen));
        };
        for_each_multiset(items, truncation, &mut keep, &mut visit);
    }
    out
}

/// `H_W = Σ_g λ^{2g-2} Σ ⟨∏ τ_{a_i,k_i}⟩_{g,A} ∏ t_{a,k}^{b}/b!` over weights in `W`.
pub fn hassett_potential(weights: &[BigRational], max_genus: u32, truncation: u32) -> Result<TruncatedSeries> {
    check_weights(weights)?;
    let w = weight_set(weights);
    let mut out = TruncatedSeries::new(truncation);
    for g in 0..=max_genus {
        let max_index = (3 * g + truncation).saturating_sub(3);
        let per = max_index as usize + 1;
        let items = w.len() * per;
        let mut keep = |chosen: &[(usize, u32)], item: usize| {
            let used: usize = chosen.iter().map(|(i, m)| (i % per) * *m as usize).sum();
            used + item % per <= max_index as usize
        };
        let mut visit = |chosen: &[(usize, u32)]| {
            if chosen.is_empty() {
                return;
            }
            let mut a = Vec::new();
            let mut k = Vec::new();
            for (i, m) in chosen {
                for _ in 0..*m {
                    a.push(w[i / per].clone());
                    k.push((i % per) as u32);
                }
            }
            let value = hassett_number(g, &WeightData::new(a).expect("validated weights"), &k).expect("lengths agree");
            if value.is_zero() {
                return;
            }
            let m = Monomial::new(
                chosen
                    .iter()
                    .map(|(i, p)| (Variable::t(w[i / per].clone(), (i % per) as u32), *p))
                    .collect(),
            );
            out.add_term(g, m, value * inverse_automorphisms(chosen));
        };
        for_each_multiset(items, truncation, &mut keep, &mut visit);
    }
    Ok(out)
}

/// The Hassett potential on the single weight `1/q`.
pub fn q_diagonal_potential(q: u32, max_genus: u32, truncation: u32) -> TruncatedSeries {
    assert!(q >= 1);
    hassett_potential(&[BigRational::new(1.into(), q.into())], max_genus, truncation).expect("1/q is a valid weight")
}

/// Coefficients `f_m(t)` of the fork operator `L = Σ_m f_m(t) ∂_{x_m}`,
/// computed on demand.
struct Fork {
    weights: Vec<BigRational>,
    truncation: u32,
    cache: HashMap<u32, Polynomial>,
}

impl Fork {
    fn new(weights: &[BigRational], truncation: u32) -> Self {
        Fork {
            weights: weight_set(weights),
            truncation,
            cache: HashMap::new(),
        }
    }

    /// `f_m = Σ_{n≥1} (-1)^{n-1} Σ ∏ t_{a_j,k_j} / ∏ mult!` over multisets
    /// with `Σ a_j ≤ 1` and `Σ k_j = m + n - 1`.
    fn component(&mut self, m: u32) -> &Polynomial {
        if !self.cache.contains_key(&m) {
            let f = self.build(m);
            self.cache.insert(m, f);
        }
        &self.cache[&m]
    }

    fn build(&self, m: u32) -> Polynomial {
        let w = &self.weights;
        let max_index = m + self.truncation.saturating_sub(1);
        let per = max_index as usize + 1;
        let items = w.len() * per;
        let mut f = Polynomial::zero();
        let mut keep = |chosen: &[(usize, u32)], item: usize| {
            let mut weight = w[item / per].clone();
            let mut used = item % per;
            for (i, mult) in chosen {
                weight += &w[i / per] * BigRational::from_integer((*mult).into());
                used += (i % per) * *mult as usize;
            }
            weight <= BigRational::one() && used <= max_index as usize
        };
        let mut visit = |chosen: &[(usize, u32)]| {
            let n: u32 = chosen.iter().map(|(_, mult)| mult).sum();
            let used: u32 = chosen.iter().map(|(i, mult)| (i % per) as u32 * mult).sum();
            if n == 0 || used != m + n - 1 {
                return;
            }
            let sign = if n % 2 == 1 {
                BigRational::one()
            } else {
                -BigRational::one()
            };
            let mono = Monomial::new(
                chosen
                    .iter()
                    .map(|(i, p)| (Variable::t(w[i / per].clone(), (i % per) as u32), *p))
                    .collect(),
            );
            f.add_term(mono, sign * inverse_automorphisms(chosen));
        };
        for_each_multiset(items, self.truncation, &mut keep, &mut visit);
        f
    }

    fn apply(&mut self, series: &TruncatedSeries) -> TruncatedSeries {
        let n = series.truncation.min(self.truncation);
        let mut out = TruncatedSeries::new(n);
        for (g, mono, c) in series.terms() {
            for (pos, (v, p)) in mono.factors().iter().enumerate() {
                let Variable::X { index } = v else { continue };
                let rest = mono.lowered(pos);
                let scale = c * BigRational::from_integer((*p).into());
                for (tm, tc) in self.component(*index).terms() {
                    if rest.degree() + tm.degree() <= n {
                        out.add_term(g, rest.mul(tm), &scale * tc);
                    }
                }
            }
        }
        out
    }
}

/// `L(series)` for the fork operator on the weight set `W`, acting as a derivation.
pub fn apply_fork(weights: &[BigRational], series: &TruncatedSeries) -> TruncatedSeries {
    Fork::new(weights, series.truncation).apply(series)
}

/// `e^L series |_{x=0}`, with `series` first truncated at `N`.
///
/// Each application of `L` lowers the `x`-degree by one, so at most `N`
/// applications are needed.
pub fn exp_operator(weights: &[BigRational], series: &TruncatedSeries, truncation: u32) -> TruncatedSeries {
    let mut fork = Fork::new(weights, truncation);
    let mut current = series.truncated(truncation);
    let mut total = TruncatedSeries::new(current.truncation);
    let mut m = 0u32;
    let mut inv_factorial = BigRational::one();
    loop {
        for (g, mono, c) in current.terms() {
            if !mono.has_x() {
                total.add_term(g, mono.clone(), c * &inv_factorial);
            }
        }
        if m == truncation || current.terms().all(|(_, mono, _)| !mono.has_x()) {
            break;
        }
        current = fork.apply(&current);
        m += 1;
        inv_factorial /= BigRational::from_integer(m.into());
    }
    total
}

/// Removes every `(g, m)` with `2g - 2 + Σ weights ≤ 0`.
pub fn strip_unstable(series: &TruncatedSeries) -> TruncatedSeries {
    let mut out = TruncatedSeries::new(series.truncation);
    for (g, m, c) in series.terms() {
        let stability = BigRational::from_integer((2 * g as i64 - 2).into()) + m.total_weight();
        if stability > BigRational::zero() {
            out.add_term(g, m.clone(), c.clone());
        }
    }
    out
}

/// Formal substitution `x_k ↦ f_k(t)`, truncated at the series' truncation.
pub fn substitute(series: &TruncatedSeries, map: &SubstitutionMap) -> Result<TruncatedSeries> {
    let n = series.truncation;
    let mut powers: HashMap<(u32, u32), Polynomial> = HashMap::new();
    let mut out = TruncatedSeries::new(n);
    for (g, mono, c) in series.terms() {
        let (t_part, xs) = mono.split_x();
        if let Some(&(k, _)) = xs.iter().find(|(k, _)| map.get(*k).is_none()) {
            return Err(Error::UnmappedVariable(k));
        }
        let mut acc = Polynomial::monomial(t_part, c.clone());
        for (k, p) in xs {
            let f = &map.assignments[&k];
            let power = powers
                .entry((k, p))
                .or_insert_with(|| (0..p).fold(Polynomial::constant(BigRational::one()), |a, _| a.mul_truncated(f, n)));
            acc = acc.mul_truncated(power, n);
            if acc.is_zero() {
                break;
            }
        }
        for (m, v) in acc.terms() {
            out.add_term(g, m.clone(), v.clone());
        }
    }
    Ok(out)
}

/// `x_k ↦ g_k(t)` for `k ≤ max_index`, where `g_k` is the coefficient of
/// `∂_{x_k}` in the diagonal fork operator with weight `1/q`: the
/// non-negative `z`-part of `z(1 - exp(-Σ_k t_k z^{k-1}))` restricted to
/// monomials of degree at most `q`. Only monomials of degree at most
/// `truncation` are kept.
pub fn diag_change_of_variables(q: u32, max_index: u32, truncation: u32) -> SubstitutionMap {
    assert!(q >= 1);
    let mut fork = Fork::new(&[BigRational::new(1.into(), q.into())], truncation);
    SubstitutionMap {
        assignments: (0..=max_index).map(|k| (k, fork.component(k).clone())).collect(),
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Identity {
    /// `strip(e^{L_W} F |_{x=0}) = strip(H_W)`.
    WittenToHassett { weights: Vec<BigRational> },
    /// `strip(F(g(t))) = strip(H_q)`.
    WittenToDiag { q: u32 },
    /// `e^{L_q} F |_{x=0} = F(g(t))` on all monomials.
    ExpFlow { q: u32 },
}

impl fmt::Display for Identity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Identity::WittenToHassett { weights } => {
                let w: Vec<String> = weights.iter().map(format_rational).collect();
                write!(f, "witten_to_hassett W={{{}}}", w.join(","))
            }
            Identity::WittenToDiag { q } => write!(f, "witten_to_diag q={q}"),
            Identity::ExpFlow { q } => write!(f, "exp_flow q={q}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Mismatch {
    pub genus: u32,
    pub monomial: Monomial,
    pub left: BigRational,
    pub right: BigRational,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IdentityReport {
    pub identity: Identity,
    pub max_genus: u32,
    pub truncation: u32,
    /// Number of `(g, monomial)` keys present on either side.
    pub compared: usize,
    pub mismatches: Vec<Mismatch>,
}

impl IdentityReport {
    pub fn holds(&self) -> bool {
        self.mismatches.is_empty()
    }
}

impl fmt::Display for IdentityReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} G={} N={}: {} coefficients compared, {} mismatches",
            self.identity,
            self.max_genus,
            self.truncation,
            self.compared,
            self.mismatches.len()
        )?;
        for m in &self.mismatches {
            write!(
                f,
                "\n  g={} {}: {} vs {}",
                m.genus,
                m.monomial,
                format_rational(&m.left),
                format_rational(&m.right)
            )?;
        }
        Ok(())
    }
}

fn compare(
    identity: Identity,
    max_genus: u32,
    truncation: u32,
    left: &TruncatedSeries,
    right: &TruncatedSeries,
) -> IdentityReport {
    let keys: std::collections::BTreeSet<(u32, &Monomial)> =
        left.terms().chain(right.terms()).map(|(g, m, _)| (g, m)).collect();
    let mismatches = keys
        .iter()
        .filter_map(|&(g, m)| {
            let (l, r) = (left.coefficient(g, m), right.coefficient(g, m));
            (l != r).then(|| Mismatch {
                genus: g,
                monomial: m.clone(),
                left: l,
                right: r,
            })
        })
        .collect();
    IdentityReport {
        identity,
        max_genus,
        truncation,
        compared: keys.len(),
        mismatches,
    }
}

pub fn verify_identity(identity: &Identity, max_genus: u32, truncation: u32) -> Result<IdentityReport> {
    let f = witten_potential(max_genus, truncation);
    let max_index = (3 * max_genus + truncation).saturating_sub(3);
    let (left, right) = match identity {
        Identity::WittenToHassett { weights } => {
            check_weights(weights)?;
            let left = strip_unstable(&exp_operator(weights, &f, truncation));
            let right = strip_unstable(&hassett_potential(weights, max_genus, truncation)?);
            (left, right)
        }
        Identity::WittenToDiag { q } => {
            let map = diag_change_of_variables(*q, max_index, truncation);
            let left = strip_unstable(&substitute(&f, &map)?);
            let right = strip_unstable(&q_diagonal_potential(*q, max_genus, truncation));
            (left, right)
        }
        Identity::ExpFlow { q } => {
            let weight = [BigRational::new(1.into(), (*q).into())];
            let left = exp_operator(&weight, &f, truncation);
            let right = substitute(&f, &diag_change_of_variables(*q, max_index, truncation))?;
            (left, right)
        }
    };
    Ok(compare(identity.clone(), max_genus, truncation, &left, &right))
}
