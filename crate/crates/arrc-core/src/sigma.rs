//! Index translation functions.
//!
//! An [`IndexMap`] is an injective finite map from a dense logical index
//! range `[0, n)` to physical indices of some underlying array. Splitting,
//! merging and composing views of arrays is pure algebra on these maps;
//! no storage is involved at this level.

use std::fmt;

use thiserror::Error;

/// Errors produced by index-map construction and combination.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SigmaError {
    /// A composed or literal map refers to an index outside the domain of
    /// the map it is applied to.
    #[error("index {index} is outside the domain [0, {dom_size})")]
    OutOfDomain { index: usize, dom_size: usize },
    /// A split was requested with zero parts or more parts than elements.
    #[error("cannot split {n} elements into {k} parts")]
    InvalidSplit { n: usize, k: usize },
    /// Two maps that must cover disjoint physical ranges overlap.
    #[error("index maps overlap on physical index {index}")]
    Overlap { index: usize },
    /// A textual form could not be parsed.
    #[error("malformed index map literal: {0}")]
    Parse(String),
}

/// An index translation function: position `i` holds the physical index
/// that logical index `i` maps to.
///
/// Maps built through this module's constructors are injective. Equality
/// is extensional: two maps are equal iff their target sequences are.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct IndexMap {
    targets: Vec<usize>,
}

impl IndexMap {
    /// Builds a map from an explicit target sequence, rejecting duplicate
    /// targets.
    pub fn new(targets: Vec<usize>) -> Result<Self, SigmaError> {
        if let Some(&dup) = find_duplicate(&targets) {
            return Err(SigmaError::Overlap { index: dup });
        }
        Ok(IndexMap { targets })
    }

    /// Builds a map without the injectivity check.
    ///
    /// The calculus evaluator merges read-only views whose ranges may
    /// overlap, which produces a non-injective translation function; this
    /// is the one construction path that needs to bypass the check.
    pub fn from_targets_unchecked(targets: Vec<usize>) -> Self {
        IndexMap { targets }
    }

    /// The identity map on `[0, n)`.
    pub fn identity(n: usize) -> Self {
        IndexMap {
            targets: (0..n).collect(),
        }
    }

    pub fn empty() -> Self {
        IndexMap { targets: Vec::new() }
    }

    /// Domain size.
    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    /// Applies the map: physical index for logical index `i`.
    pub fn apply(&self, i: usize) -> Option<usize> {
        self.targets.get(i).copied()
    }

    pub fn targets(&self) -> &[usize] {
        &self.targets
    }

    pub fn is_identity(&self) -> bool {
        self.targets.iter().enumerate().all(|(i, &t)| i == t)
    }

    pub fn is_injective(&self) -> bool {
        find_duplicate(&self.targets).is_none()
    }

    /// True iff the target set is exactly `[0, n)` for n = len.
    pub fn covers_range(&self, n: usize) -> bool {
        if self.targets.len() != n {
            return false;
        }
        let mut seen = vec![false; n];
        for &t in &self.targets {
            if t >= n || seen[t] {
                return false;
            }
            seen[t] = true;
        }
        true
    }

    /// Largest target plus one; 0 for the empty map.
    pub fn max_target_excl(&self) -> usize {
        self.targets.iter().map(|&t| t + 1).max().unwrap_or(0)
    }

    /// `outer ∘ inner`: the view of a view.
    pub fn compose(outer: &IndexMap, inner: &IndexMap) -> Result<IndexMap, SigmaError> {
        let mut targets = Vec::with_capacity(inner.len());
        for &t in &inner.targets {
            match outer.apply(t) {
                Some(p) => targets.push(p),
                None => {
                    return Err(SigmaError::OutOfDomain {
                        index: t,
                        dom_size: outer.len(),
                    })
                }
            }
        }
        Ok(IndexMap { targets })
    }

    /// Splits `[0, n)` into `k` consecutive parts. The first `n mod k`
    /// parts get one extra element.
    pub fn split_consecutive(n: usize, k: usize) -> Result<Vec<IndexMap>, SigmaError> {
        check_split(n, k)?;
        let (base, extra) = (n / k, n % k);
        let mut parts = Vec::with_capacity(k);
        let mut offset = 0;
        for j in 0..k {
            let size = base + usize::from(j < extra);
            parts.push(IndexMap {
                targets: (offset..offset + size).collect(),
            });
            offset += size;
        }
        Ok(parts)
    }

    /// Splits `[0, n)` into `k` strided parts: part `j` maps `i ↦ j + i·k`.
    pub fn split_strided(n: usize, k: usize) -> Result<Vec<IndexMap>, SigmaError> {
        check_split(n, k)?;
        Ok((0..k)
            .map(|j| IndexMap {
                targets: (j..n).step_by(k).collect(),
            })
            .collect())
    }

    /// Splits `[0, n)` at pivot `i` into `[0, i)` and `[i, n)`. Either side
    /// may be empty.
    pub fn split_at(n: usize, i: usize) -> Result<(IndexMap, IndexMap), SigmaError> {
        if i > n {
            return Err(SigmaError::InvalidSplit { n, k: i });
        }
        Ok((
            IndexMap {
                targets: (0..i).collect(),
            },
            IndexMap {
                targets: (i..n).collect(),
            },
        ))
    }

    /// Concatenation: `a`'s targets followed by `b`'s. Ranges must be
    /// disjoint.
    pub fn concat(a: &IndexMap, b: &IndexMap) -> Result<IndexMap, SigmaError> {
        if let Some(idx) = first_common_target(a, b) {
            return Err(SigmaError::Overlap { index: idx });
        }
        let mut targets = a.targets.clone();
        targets.extend_from_slice(&b.targets);
        Ok(IndexMap { targets })
    }

    /// Interleaves the `min(|a|, |b|)` first elements alternately, then
    /// appends the tail of the longer map.
    pub fn interleave(a: &IndexMap, b: &IndexMap) -> Result<IndexMap, SigmaError> {
        if let Some(idx) = first_common_target(a, b) {
            return Err(SigmaError::Overlap { index: idx });
        }
        let m = a.len().min(b.len());
        let mut targets = Vec::with_capacity(a.len() + b.len());
        for i in 0..m {
            targets.push(a.targets[i]);
            targets.push(b.targets[i]);
        }
        targets.extend_from_slice(&a.targets[m..]);
        targets.extend_from_slice(&b.targets[m..]);
        Ok(IndexMap { targets })
    }

    /// True iff the target sets do not intersect.
    pub fn disjoint(a: &IndexMap, b: &IndexMap) -> bool {
        first_common_target(a, b).is_none()
    }

    /// Parses the textual forms `{0->3, 1->4}`, `seq(lo, hi)` and
    /// `stride(start, step, count)`.
    pub fn parse(text: &str) -> Result<IndexMap, SigmaError> {
        let s = text.trim();
        if let Some(body) = s.strip_prefix('{') {
            let body = body
                .strip_suffix('}')
                .ok_or_else(|| SigmaError::Parse(format!("missing closing brace in {s:?}")))?;
            let body = body.trim();
            let mut pairs = Vec::new();
            if !body.is_empty() {
                for entry in body.split(',') {
                    let (from, to) = entry
                        .split_once("->")
                        .ok_or_else(|| SigmaError::Parse(format!("expected `i->j` in {entry:?}")))?;
                    let from = parse_usize(from)?;
                    let to = parse_usize(to)?;
                    pairs.push((from, to));
                }
            }
            let mut targets = vec![None; pairs.len()];
            for (from, to) in pairs {
                if from >= targets.len() || targets[from].is_some() {
                    return Err(SigmaError::Parse(format!(
                        "domain of {s:?} is not exactly [0, {})",
                        targets.len()
                    )));
                }
                targets[from] = Some(to);
            }
            return IndexMap::new(targets.into_iter().map(|t| t.unwrap()).collect());
        }
        if let Some(args) = call_args(s, "seq") {
            let [lo, hi] = two(&args, s)?;
            if hi < lo {
                return Err(SigmaError::Parse(format!("seq range reversed in {s:?}")));
            }
            return Ok(IndexMap {
                targets: (lo..hi).collect(),
            });
        }
        if let Some(args) = call_args(s, "stride") {
            let [start, step, count] = three(&args, s)?;
            return IndexMap::new((0..count).map(|i| start + i * step).collect());
        }
        Err(SigmaError::Parse(format!("unrecognised index map form: {s:?}")))
    }
}

impl fmt::Display for IndexMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (i, t) in self.targets.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{i}->{t}")?;
        }
        write!(f, "}}")
    }
}

// Debug reuses the textual form; maps read better as `{0->3, 1->4}` than
// as a struct dump.
impl fmt::Debug for IndexMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

fn check_split(n: usize, k: usize) -> Result<(), SigmaError> {
    if k == 0 || k > n {
        return Err(SigmaError::InvalidSplit { n, k });
    }
    Ok(())
}

fn find_duplicate(targets: &[usize]) -> Option<&usize> {
    let mut seen = std::collections::HashSet::with_capacity(targets.len());
    targets.iter().find(|&&t| !seen.insert(t))
}

fn first_common_target(a: &IndexMap, b: &IndexMap) -> Option<usize> {
    let set: std::collections::HashSet<usize> = a.targets.iter().copied().collect();
    b.targets.iter().copied().find(|t| set.contains(t))
}

fn parse_usize(s: &str) -> Result<usize, SigmaError> {
    s.trim()
        .parse()
        .map_err(|_| SigmaError::Parse(format!("expected a non-negative integer, got {s:?}")))
}

fn call_args(s: &str, name: &str) -> Option<Vec<String>> {
    let rest = s.strip_prefix(name)?.trim_start();
    let inner = rest.strip_prefix('(')?.strip_suffix(')')?;
    Some(inner.split(',').map(|a| a.to_string()).collect())
}

fn two(args: &[String], s: &str) -> Result<[usize; 2], SigmaError> {
    if args.len() != 2 {
        return Err(SigmaError::Parse(format!("seq takes two arguments: {s:?}")));
    }
    Ok([parse_usize(&args[0])?, parse_usize(&args[1])?])
}

fn three(args: &[String], s: &str) -> Result<[usize; 3], SigmaError> {
    if args.len() != 3 {
        return Err(SigmaError::Parse(format!("stride takes three arguments: {s:?}")));
    }
    Ok([
        parse_usize(&args[0])?,
        parse_usize(&args[1])?,
        parse_usize(&args[2])?,
    ])
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn map(targets: &[usize]) -> IndexMap {
        IndexMap::new(targets.to_vec()).unwrap()
    }

    #[test]
    fn identity_examples() {
        assert_eq!(IndexMap::identity(4).targets(), &[0, 1, 2, 3]);
        assert!(IndexMap::identity(0).is_empty());
        assert_eq!(IndexMap::identity(1).targets(), &[0]);
    }

    #[test]
    fn compose_identity_is_left_unit() {
        let inner = map(&[1, 3]);
        assert_eq!(IndexMap::compose(&IndexMap::identity(5), &inner).unwrap(), inner);
    }

    #[test]
    fn compose_pointwise() {
        // Oracle: result(i) = outer(inner(i)), evaluated by hand below.
        let outer = map(&[0, 2, 4, 1, 3]);
        let inner = map(&[3, 4]);
        let composed = IndexMap::compose(&outer, &inner).unwrap();
        assert_eq!(composed, map(&[1, 3]));
        for i in 0..inner.len() {
            assert_eq!(composed.apply(i), outer.apply(inner.apply(i).unwrap()));
        }
    }

    #[test]
    fn compose_out_of_domain() {
        let outer = map(&[1, 3]);
        let inner = map(&[2]);
        assert_eq!(
            IndexMap::compose(&outer, &inner),
            Err(SigmaError::OutOfDomain { index: 2, dom_size: 2 })
        );
    }

    #[test]
    fn split_consecutive_examples() {
        let parts = IndexMap::split_consecutive(5, 2).unwrap();
        assert_eq!(parts[0], map(&[0, 1, 2]));
        assert_eq!(parts[1], map(&[3, 4]));

        let parts = IndexMap::split_consecutive(4, 2).unwrap();
        assert_eq!(parts[0], map(&[0, 1]));
        assert_eq!(parts[1], map(&[2, 3]));

        let parts = IndexMap::split_consecutive(3, 3).unwrap();
        assert_eq!(parts, vec![map(&[0]), map(&[1]), map(&[2])]);
    }

    #[test]
    fn split_strided_examples() {
        let parts = IndexMap::split_strided(5, 2).unwrap();
        assert_eq!(parts[0], map(&[0, 2, 4]));
        assert_eq!(parts[1], map(&[1, 3]));

        let parts = IndexMap::split_strided(6, 3).unwrap();
        assert_eq!(parts, vec![map(&[0, 3]), map(&[1, 4]), map(&[2, 5])]);

        assert_eq!(IndexMap::split_strided(4, 1).unwrap(), vec![IndexMap::identity(4)]);
    }

    #[test]
    fn split_rejects_bad_part_counts() {
        assert_eq!(
            IndexMap::split_consecutive(3, 0),
            Err(SigmaError::InvalidSplit { n: 3, k: 0 })
        );
        assert_eq!(
            IndexMap::split_strided(3, 4),
            Err(SigmaError::InvalidSplit { n: 3, k: 4 })
        );
    }

    #[test]
    fn split_at_matches_enumeration() {
        // Oracle: enumerate indices below and above the pivot.
        let (lo, hi) = IndexMap::split_at(5, 3).unwrap();
        assert_eq!(lo, map(&[0, 1, 2]));
        assert_eq!(hi, map(&[3, 4]));
        let consecutive = IndexMap::split_consecutive(5, 2).unwrap();
        assert_eq!((lo, hi), (consecutive[0].clone(), consecutive[1].clone()));

        let (lo, hi) = IndexMap::split_at(5, 0).unwrap();
        assert!(lo.is_empty());
        assert_eq!(hi, IndexMap::identity(5));

        let (lo, hi) = IndexMap::split_at(5, 5).unwrap();
        assert_eq!(lo, IndexMap::identity(5));
        assert!(hi.is_empty());

        assert!(IndexMap::split_at(5, 6).is_err());
    }

    #[test]
    fn concat_piecewise_translation() {
        let evens = map(&[0, 2, 4]);
        let odds = map(&[1, 3]);
        let merged = IndexMap::concat(&evens, &odds).unwrap();
        assert_eq!(merged, map(&[0, 2, 4, 1, 3]));
        // translate(i) = 2i for i < 3, 2(i-3)+1 for i >= 3
        for i in 0..5 {
            let expected = if i < 3 { 2 * i } else { 2 * (i - 3) + 1 };
            assert_eq!(merged.apply(i), Some(expected));
        }

        let m = map(&[4, 2]);
        assert_eq!(IndexMap::concat(&IndexMap::empty(), &m).unwrap(), m);
        assert_eq!(
            IndexMap::concat(&map(&[0]), &map(&[0])),
            Err(SigmaError::Overlap { index: 0 })
        );
    }

    #[test]
    fn interleave_examples() {
        let evens = map(&[0, 2, 4]);
        let odds = map(&[1, 3]);
        assert_eq!(IndexMap::interleave(&evens, &odds).unwrap(), IndexMap::identity(5));

        let m = map(&[4, 2]);
        assert_eq!(IndexMap::interleave(&m, &IndexMap::empty()).unwrap(), m);

        // min-prefix alternation, then the tail of the longer map
        let a = map(&[0, 1, 2]);
        let b = map(&[5]);
        assert_eq!(IndexMap::interleave(&a, &b).unwrap(), map(&[0, 5, 1, 2]));
        assert_eq!(
            IndexMap::interleave(&map(&[1]), &map(&[1])),
            Err(SigmaError::Overlap { index: 1 })
        );
    }

    #[test]
    fn disjoint_examples() {
        assert!(IndexMap::disjoint(&map(&[0, 2]), &map(&[1, 3])));
        let m = map(&[7, 9]);
        assert!(!IndexMap::disjoint(&m, &m));
        assert!(IndexMap::disjoint(&IndexMap::empty(), &m));
    }

    /// Every split family partitions `[0, n)`: parts are pairwise disjoint
    /// and their ranges together cover exactly the full range.
    #[test]
    fn splits_partition_exhaustively() {
        for n in 1..=12 {
            for k in 1..=n {
                for parts in [
                    IndexMap::split_consecutive(n, k).unwrap(),
                    IndexMap::split_strided(n, k).unwrap(),
                ] {
                    let mut all: Vec<usize> =
                        parts.iter().flat_map(|p| p.targets().to_vec()).collect();
                    all.sort_unstable();
                    assert_eq!(all, (0..n).collect::<Vec<_>>(), "n={n} k={k}");
                    for (i, a) in parts.iter().enumerate() {
                        assert!(a.is_injective());
                        for b in &parts[i + 1..] {
                            assert!(IndexMap::disjoint(a, b), "n={n} k={k}");
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn consecutive_split_concat_roundtrip() {
        for n in 1..=12 {
            for k in 1..=n {
                let parts = IndexMap::split_consecutive(n, k).unwrap();
                let folded = parts
                    .into_iter()
                    .try_fold(IndexMap::empty(), |acc, p| IndexMap::concat(&acc, &p))
                    .unwrap();
                assert_eq!(folded, IndexMap::identity(n));
            }
        }
    }

    #[test]
    fn strided_two_way_interleave_roundtrip() {
        for n in 1..=12 {
            let parts = IndexMap::split_strided(n, 2.min(n)).unwrap();
            if parts.len() == 2 {
                assert_eq!(
                    IndexMap::interleave(&parts[0], &parts[1]).unwrap(),
                    IndexMap::identity(n)
                );
            }
        }
    }

    #[test]
    fn literal_with_duplicate_target_is_rejected() {
        assert_eq!(
            IndexMap::new(vec![1, 1]),
            Err(SigmaError::Overlap { index: 1 })
        );
    }

    #[test]
    fn parse_forms() {
        assert_eq!(IndexMap::parse("{0->3, 1->4}").unwrap(), map(&[3, 4]));
        assert_eq!(IndexMap::parse("{}").unwrap(), IndexMap::empty());
        assert_eq!(IndexMap::parse("{1->4,0->3}").unwrap(), map(&[3, 4]));
        assert_eq!(IndexMap::parse("seq(3, 5)").unwrap(), map(&[3, 4]));
        assert_eq!(IndexMap::parse("stride(1, 2, 3)").unwrap(), map(&[1, 3, 5]));
        assert!(IndexMap::parse("{0->3, 0->4}").is_err());
        assert!(IndexMap::parse("{5->0}").is_err());
        assert!(IndexMap::parse("nonsense").is_err());
    }

    proptest! {
        /// parse(to_string(m)) == m, for arbitrary injective maps.
        #[test]
        fn textual_roundtrip(perm in proptest::sample::subsequence((0..40usize).collect::<Vec<_>>(), 0..12)) {
            let m = IndexMap::new(perm).unwrap();
            prop_assert_eq!(IndexMap::parse(&m.to_string()).unwrap(), m);
        }

        /// compose is associative and identity is a two-sided unit.
        #[test]
        fn compose_unit_and_assoc(n in 1..10usize, seed in any::<u64>()) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let sample = |rng: &mut rand_chacha::ChaCha8Rng, bound: usize| {
                let len = rng.gen_range(0..=bound);
                let mut pool: Vec<usize> = (0..bound).collect();
                // partial shuffle: take `len` distinct targets
                let mut targets = Vec::with_capacity(len);
                for _ in 0..len {
                    let idx = rng.gen_range(0..pool.len());
                    targets.push(pool.swap_remove(idx));
                }
                IndexMap::new(targets).unwrap()
            };
            let a = IndexMap::identity(n);
            let b = sample(&mut rng, n);
            let c = sample(&mut rng, b.len());
            let d = sample(&mut rng, c.len());

            prop_assert_eq!(IndexMap::compose(&a, &b).unwrap(), b.clone());
            let left = IndexMap::compose(&IndexMap::compose(&b, &c).unwrap(), &d).unwrap();
            let right = IndexMap::compose(&b, &IndexMap::compose(&c, &d).unwrap()).unwrap();
            prop_assert_eq!(left, right);
            let id_right = IndexMap::compose(&b, &IndexMap::identity(b.len())).unwrap();
            prop_assert_eq!(id_right, b);
        }
    }
}
