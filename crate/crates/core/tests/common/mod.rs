#![allow(dead_code)]

use hassett_core::partitions::WeightData;

/// All vectors of `n` non-negative integers with sum `total`.
pub fn compositions(total: u32, n: usize) -> Vec<Vec<u32>> {
    fn go(left: u32, slots: usize, cur: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if slots == 1 {
            cur.push(left);
            out.push(cur.clone());
            cur.pop();
            return;
        }
        for first in 0..=left {
            cur.push(first);
            go(left - first, slots - 1, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    if n == 0 {
        if total == 0 {
            out.push(Vec::new());
        }
        return out;
    }
    go(total, n, &mut Vec::new(), &mut out);
    out
}

/// Exponent vectors of total degree `3g - 3 + n`, empty if that is negative.
pub fn top_degree(genus: u32, n: usize) -> Vec<Vec<u32>> {
    let d = 3 * genus as i64 - 3 + n as i64;
    if d < 0 {
        Vec::new()
    } else {
        compositions(d as u32, n)
    }
}

/// `1^n`, `(1/2)^n`, `(1/3)^n` and the first `n` of `(7/8,2/3,1/3,1/4,1/6)`.
pub fn weight_grid(n: usize) -> Vec<WeightData> {
    let mixed = WeightData::parse("7/8,2/3,1/3,1/4,1/6").unwrap();
    vec![
        WeightData::ones(n),
        WeightData::diagonal(2, n),
        WeightData::diagonal(3, n),
        WeightData::new(mixed.weights()[..n].to_vec()).unwrap(),
    ]
}

/// Places entry `i` at position `perm[i]`.
pub fn permute<T: Clone>(v: &[T], perm: &[usize]) -> Vec<T> {
    let mut out = v.to_vec();
    for (i, &p) in perm.iter().enumerate() {
        out[p] = v[i].clone();
    }
    out
}
