//! Hand-computed metric values, frozen.

pub struct BleuCase {
    pub hyps: &'static [&'static str],
    pub refs: &'static [&'static str],
    pub k: usize,
    pub expected: f64,
}

pub struct DistinctCase {
    pub hyps: &'static [&'static str],
    pub n: usize,
    pub expected: f64,
}

#[rustfmt::skip]
pub const BLEU: &[BleuCase] = &[
    BleuCase { hyps: &["the cat sat"], refs: &["the cat sat"], k: 1, expected: 1.0 },
    BleuCase { hyps: &["the cat sat"], refs: &["the cat sat"], k: 2, expected: 1.0 },
    // p1 = 1, BP = exp(1 - 3/2)
    BleuCase { hyps: &["the cat"], refs: &["the cat sat"], k: 1, expected: 0.6065306597126334 },
    BleuCase { hyps: &["the cat"], refs: &["the cat sat"], k: 2, expected: 0.6065306597126334 },
    // p1 = 1, p2 = 1 / (2 * 2), BP = 1
    BleuCase { hyps: &["a c b"], refs: &["a b c"], k: 2, expected: 0.5 },
    BleuCase { hyps: &["a c b"], refs: &["a b c"], k: 1, expected: 1.0 },
    // clipping: one "a" of four matches
    BleuCase { hyps: &["a a a a"], refs: &["a b"], k: 1, expected: 0.25 },
    // p1 = 1 / (2 * 2)
    BleuCase { hyps: &["x y"], refs: &["a b"], k: 1, expected: 0.25 },
    // sqrt(1/4 * 1/2)
    BleuCase { hyps: &["x y"], refs: &["a b"], k: 2, expected: 0.3535533905932738 },
    // pooled: p1 = 5/5, BP = exp(1 - 7/5)
    BleuCase { hyps: &["the cat sat", "a dog"], refs: &["the cat sat on", "a big dog"], k: 1, expected: 0.6703200460356393 },
    // p2 = 2/3
    BleuCase { hyps: &["the cat sat", "a dog"], refs: &["the cat sat on", "a big dog"], k: 2, expected: 0.5473140257154154 },
    BleuCase { hyps: &["Hello, world!"], refs: &["hello , world !"], k: 2, expected: 1.0 },
    // no hypothesis bigrams at all
    BleuCase { hyps: &["yes"], refs: &["yes"], k: 2, expected: 0.0 },
    BleuCase { hyps: &[""], refs: &["a"], k: 1, expected: 0.0 },
    // p1 = 3/4, p2 = 1/3, BP = exp(1 - 5/4)
    BleuCase { hyps: &["the the the cat"], refs: &["the cat on the mat"], k: 2, expected: 0.3894003915357024 },
];

#[rustfmt::skip]
pub const DISTINCT: &[DistinctCase] = &[
    DistinctCase { hyps: &["a a a"], n: 1, expected: 1.0 / 3.0 },
    DistinctCase { hyps: &["a b", "a b"], n: 2, expected: 0.5 },
    DistinctCase { hyps: &["a b c", "d e"], n: 1, expected: 1.0 },
    DistinctCase { hyps: &["a b c", "d e"], n: 2, expected: 1.0 },
    DistinctCase { hyps: &["a b a b"], n: 2, expected: 2.0 / 3.0 },
    DistinctCase { hyps: &[""], n: 1, expected: 0.0 },
    DistinctCase { hyps: &["a"], n: 2, expected: 0.0 },
    DistinctCase { hyps: &["a b", "b c"], n: 1, expected: 0.75 },
    DistinctCase { hyps: &["Hi, hi!"], n: 1, expected: 0.75 },
];

/// Every case whose computed value is off by more than `tol`, as
/// `(description, got, expected)`.
pub fn failures(tol: f64) -> Vec<(String, f64, f64)> {
    use cidg_core::metrics::{bleu_k, distinct_n};
    let mut bad = Vec::new();
    for c in BLEU {
        let got = bleu_k(c.hyps, c.refs, c.k).unwrap();
        if (got - c.expected).abs() > tol {
            bad.push((format!("BLEU-{} {:?} vs {:?}", c.k, c.hyps, c.refs), got, c.expected));
        }
    }
    for c in DISTINCT {
        let got = distinct_n(c.hyps, c.n).unwrap();
        if (got - c.expected).abs() > tol {
            bad.push((format!("Distinct-{} {:?}", c.n, c.hyps), got, c.expected));
        }
    }
    bad
}
