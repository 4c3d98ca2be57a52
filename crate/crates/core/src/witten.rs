//! Witten–Kontsevich correlators `⟨τ_{k_1}⋯τ_{k_n}⟩_g = ∫_{M̄_{g,n}} ∏ ψ_i^{k_i}`.
//!
//! Values come from the DVV recursion, optionally short-circuited through
//! the string and dilaton equations. Results are memoized under a key with
//! sorted exponents, and the memo table can be persisted to a plain text
//! file with one `g;k1,...,kn;p/q` entry per line.

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{OnceLock, RwLock};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};

use crate::error::{Error, Result};
use crate::rational::{factorial, format_rational_strict, parse_rational};

/// `(g, sorted exponents)`; permuting exponents gives the same key.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CorrelatorKey {
    genus: u32,
    exponents: Vec<u32>,
}

impl CorrelatorKey {
    pub fn new(genus: u32, exponents: &[u32]) -> Self {
        let mut exponents = exponents.to_vec();
        exponents.sort_unstable();
        CorrelatorKey { genus, exponents }
    }

    pub fn genus(&self) -> u32 {
        self.genus
    }

    pub fn exponents(&self) -> &[u32] {
        &self.exponents
    }

    /// `2g - 2 + n > 0` and `Σ k_i = 3g - 3 + n`.
    fn passes_gates(&self) -> bool {
        let g = self.genus as i64;
        let n = self.exponents.len() as i64;
        let degree: i64 = self.exponents.iter().map(|&k| k as i64).sum();
        2 * g - 2 + n > 0 && degree == 3 * g - 3 + n
    }
}

/// Which reductions the engine may use before falling back to DVV.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Recursion {
    /// DVV only; base cases `⟨τ_0^3⟩_0` and `⟨τ_1⟩_1`.
    Dvv,
    /// String and dilaton equations first, DVV on the largest exponent otherwise.
    DvvWithShortcuts,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct CacheStats {
    pub entries: usize,
    pub hits: u64,
    pub misses: u64,
}

pub struct WittenEngine {
    recursion: Recursion,
    memo: RwLock<HashMap<CorrelatorKey, BigRational>>,
    hits: AtomicU64,
    misses: AtomicU64,
}

impl Default for WittenEngine {
    fn default() -> Self {
        Self::new()
    }
}

impl WittenEngine {
    pub fn new() -> Self {
        Self::with_recursion(Recursion::DvvWithShortcuts)
    }

    pub fn with_recursion(recursion: Recursion) -> Self {
        WittenEngine {
            recursion,
            memo: RwLock::new(HashMap::new()),
            hits: AtomicU64::new(0),
            misses: AtomicU64::new(0),
        }
    }

    /// Process-wide engine shared by the `numbers`, `cycles` and `potentials` modules.
    pub fn global() -> &'static WittenEngine {
        static GLOBAL: OnceLock<WittenEngine> = OnceLock::new();
        GLOBAL.get_or_init(WittenEngine::new)
    }

    pub fn correlator(&self, genus: u32, exponents: &[u32]) -> BigRational {
        let key = CorrelatorKey::new(genus, exponents);
        if !key.passes_gates() {
            return BigRational::zero();
        }
        if let Some(v) = self.memo.read().unwrap().get(&key) {
            self.hits.fetch_add(1, Ordering::Relaxed);
            return v.clone();
        }
        self.misses.fetch_add(1, Ordering::Relaxed);
        let value = self.compute(&key);
        // Racing writers insert the same value for the same key.
        self.memo.write().unwrap().entry(key).or_insert_with(|| value.clone());
        value
    }

    fn compute(&self, key: &CorrelatorKey) -> BigRational {
        let g = key.genus;
        let k = &key.exponents;
        if g == 0 && k == &[0, 0, 0] {
            return BigRational::one();
        }
        if g == 1 && k == &[1] {
            return BigRational::new(1.into(), 24.into());
        }
        if self.recursion == Recursion::DvvWithShortcuts {
            if k[0] == 0 {
                // string equation
                let rest = &k[1..];
                let mut total = BigRational::zero();
                for j in 0..rest.len() {
                    if rest[j] > 0 {
                        let mut lowered = rest.to_vec();
                        lowered[j] -= 1;
                        total += self.correlator(g, &lowered);
                    }
                }
                return total;
            }
            if k[0] == 1 {
                // dilaton equation
                let rest = &k[1..];
                let factor = 2 * g as i64 - 2 + rest.len() as i64;
                return BigRational::from_integer(factor.into()) * self.correlator(g, rest);
            }
        }
        let top = *k.last().unwrap();
        debug_assert!(top >= 1);
        self.dvv(g, top - 1, &k[..k.len() - 1])
    }

    /// `⟨τ_{m+1} τ_D⟩_g` by DVV, with `(2m+3)!!` normalisation.
    fn dvv(&self, g: u32, m: u32, rest: &[u32]) -> BigRational {
        let mut total = BigRational::zero();
        for j in 0..rest.len() {
            let dj = rest[j];
            let coeff = double_factorial(2 * (m + dj) as i64 + 1) / double_factorial(2 * dj as i64 - 1);
            let mut raised = rest.to_vec();
            raised[j] += m;
            total += BigRational::from_integer(coeff) * self.correlator(g, &raised);
        }
        let half = BigRational::new(1.into(), 2.into());
        if m >= 1 {
            for r in 0..m {
                let s = m - 1 - r;
                let coeff =
                    BigRational::from_integer(double_factorial(2 * r as i64 + 1) * double_factorial(2 * s as i64 + 1));
                let mut inner = BigRational::zero();
                if g >= 1 {
                    let mut with_pair = rest.to_vec();
                    with_pair.push(r);
                    with_pair.push(s);
                    inner += self.correlator(g - 1, &with_pair);
                }
                let n = rest.len();
                for g1 in 0..=g {
                    for mask in 0..(1u64 << n) {
                        let mut left = vec![r];
                        let mut right = vec![s];
                        for (i, &d) in rest.iter().enumerate() {
                            if mask >> i & 1 == 1 {
                                left.push(d);
                            } else {
                                right.push(d);
                            }
                        }
                        let a = self.correlator(g1, &left);
                        if a.is_zero() {
                            continue;
                        }
                        inner += a * self.correlator(g - g1, &right);
                    }
                }
                total += &half * coeff * inner;
            }
        }
        total / BigRational::from_integer(double_factorial(2 * m as i64 + 3))
    }

    pub fn stats(&self) -> CacheStats {
        CacheStats {
            entries: self.memo.read().unwrap().len(),
            hits: self.hits.load(Ordering::Relaxed),
            misses: self.misses.load(Ordering::Relaxed),
        }
    }

    pub fn len(&self) -> usize {
        self.memo.read().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn clear(&self) {
        self.memo.write().unwrap().clear();
    }

    /// Whether `(g, k)` is already in the memo table.
    pub fn is_cached(&self, genus: u32, exponents: &[u32]) -> bool {
        self.memo
            .read()
            .unwrap()
            .contains_key(&CorrelatorKey::new(genus, exponents))
    }

    /// Writes the memo table, sorted by key. Returns the number of entries.
    pub fn save(&self, path: &Path) -> Result<usize> {
        let memo = self.memo.read().unwrap();
        let mut entries: Vec<_> = memo.iter().collect();
        entries.sort_by(|a, b| a.0.cmp(b.0));
        let mut out = String::from("# g;k1,...,kn;value\n");
        for (key, value) in &entries {
            let ks: Vec<String> = key.exponents.iter().map(u32::to_string).collect();
            out.push_str(&format!(
                "{};{};{}\n",
                key.genus,
                ks.join(","),
                format_rational_strict(value)
            ));
        }
        let mut file = fs::File::create(path).map_err(|e| Error::CacheIo(e.to_string()))?;
        file.write_all(out.as_bytes())
            .map_err(|e| Error::CacheIo(e.to_string()))?;
        Ok(entries.len())
    }

    /// Merges entries from `path` into the memo table.
    ///
    /// The whole file is validated before anything is inserted; on
    /// [`Error::CorruptCache`] the table is left untouched.
    pub fn load(&self, path: &Path) -> Result<usize> {
        let text = fs::read_to_string(path).map_err(|e| Error::CacheIo(e.to_string()))?;
        let entries = parse_cache(&text)?;
        let count = entries.len();
        let mut memo = self.memo.write().unwrap();
        for (key, value) in entries {
            memo.insert(key, value);
        }
        Ok(count)
    }
}

fn parse_cache(text: &str) -> Result<Vec<(CorrelatorKey, BigRational)>> {
    let mut entries = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let corrupt = |reason: &str| Error::CorruptCache {
            line: lineno + 1,
            reason: reason.to_string(),
        };
        let fields: Vec<&str> = line.split(';').collect();
        let [genus, exps, value] = fields[..] else {
            return Err(corrupt("expected three ';'-separated fields"));
        };
        let genus: u32 = genus.trim().parse().map_err(|_| corrupt("bad genus"))?;
        let exponents: Vec<u32> = if exps.trim().is_empty() {
            Vec::new()
        } else {
            exps.split(',')
                .map(|s| s.trim().parse::<u32>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| corrupt("bad exponent list"))?
        };
        if !value.contains('/') {
            return Err(corrupt("value must be p/q"));
        }
        let value = parse_rational(value).map_err(|_| corrupt("bad rational"))?;
        let key = CorrelatorKey::new(genus, &exponents);
        if !key.passes_gates() {
            return Err(corrupt("entry violates the dimension constraint"));
        }
        entries.push((key, value));
    }
    Ok(entries)
}

/// `m!!` for odd `m ≥ -1`.
fn double_factorial(m: i64) -> BigInt {
    let mut acc = BigInt::one();
    let mut i = m;
    while i > 1 {
        acc *= i;
        i -= 2;
    }
    acc
}

/// `⟨τ_{k_1}⋯τ_{k_n}⟩_g` from the global engine. Unstable `(g, n)` and
/// dimension mismatches give 0.
pub fn witten_correlator(genus: u32, exponents: &[u32]) -> BigRational {
    WittenEngine::global().correlator(genus, exponents)
}

/// Genus-0 closed form `(n-3)! / ∏ k_i!` when `Σ k_i = n - 3`.
pub fn genus0_correlator(exponents: &[u32]) -> Result<BigRational> {
    let n = exponents.len();
    if n < 3 {
        return Err(Error::TooFewMarks(n));
    }
    let degree: u64 = exponents.iter().map(|&k| k as u64).sum();
    if degree != n as u64 - 3 {
        return Ok(BigRational::zero());
    }
    let denom = exponents.iter().fold(BigInt::one(), |acc, &k| acc * factorial(k));
    Ok(BigRational::new(factorial(n as u32 - 3), denom))
}

/// Persists `engine`'s memo to `path`, reloads it into a fresh table, and
/// returns the number of entries read back.
pub fn cache_roundtrip(engine: &WittenEngine, path: &Path) -> Result<usize> {
    engine.save(path)?;
    let fresh = WittenEngine::with_recursion(engine.recursion);
    fresh.load(path)
}
