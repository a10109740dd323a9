//! Truncated countable Markov shifts: transition structures, admissible and
//! periodic word enumeration, and finite primitivity certificates.

use crate::error::{Error, Result};

/// Default bound on the number of words any enumeration may produce.
pub const DEFAULT_CAP: u64 = 100_000_000;

/// Retained symbols of a truncation, with model-native labels.
#[derive(Debug, Clone, PartialEq)]
pub struct SymbolSet {
    labels: Vec<String>,
}

impl SymbolSet {
    pub fn new(labels: Vec<String>) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::invalid("symbol set must contain at least one symbol"));
        }
        let mut sorted: Vec<&String> = labels.iter().collect();
        sorted.sort();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::invalid("symbol labels must be distinct"));
        }
        Ok(Self { labels })
    }

    /// Symbols labelled by their own index.
    pub fn indexed(size: usize) -> Result<Self> {
        Self::new((0..size).map(|i| i.to_string()).collect())
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn label(&self, index: usize) -> &str {
        &self.labels[index]
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }
}

/// The 0/1 transition matrix, stored either implicitly (full shift) or as
/// successor/predecessor lists sorted by index.
#[derive(Debug, Clone, PartialEq)]
pub enum Allowed {
    Full,
    Sparse {
        successors: Vec<Vec<usize>>,
        predecessors: Vec<Vec<usize>>,
    },
}

/// Connector words certifying finite primitivity: for all symbols `a`, `b`
/// some `λ` in `words` makes `aλb` admissible.
#[derive(Debug, Clone, PartialEq)]
pub struct PrimitivityWitness {
    pub length: usize,
    pub words: Vec<Word>,
}

impl PrimitivityWitness {
    /// Whether some connector joins `left` to `right` admissibly.
    pub fn connects(&self, t: &TransitionStructure, left: &[usize], right: &[usize]) -> bool {
        let (Some(&a), Some(&b)) = (left.last(), right.first()) else {
            return false;
        };
        if self.length == 0 {
            return t.allowed(a, b);
        }
        self.words.iter().any(|w| {
            let s = w.symbols();
            t.allowed(a, s[0]) && t.allowed(s[s.len() - 1], b)
        })
    }
}

/// A finite admissible word over the retained symbols.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Word(Vec<usize>);

impl Word {
    pub fn new(symbols: Vec<usize>) -> Self {
        Self(symbols)
    }

    pub fn symbols(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_inner(self) -> Vec<usize> {
        self.0
    }
}

impl From<Vec<usize>> for Word {
    fn from(v: Vec<usize>) -> Self {
        Self(v)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransitionStructure {
    symbols: SymbolSet,
    allowed: Allowed,
    witness: Option<PrimitivityWitness>,
}

impl TransitionStructure {
    pub fn full(symbols: SymbolSet) -> Self {
        Self {
            symbols,
            allowed: Allowed::Full,
            witness: Some(PrimitivityWitness {
                length: 0,
                words: Vec::new(),
            }),
        }
    }

    /// Builds a structure from successor lists; every symbol needs a
    /// successor and a predecessor.
    pub fn from_successors(symbols: SymbolSet, successors: Vec<Vec<usize>>) -> Result<Self> {
        let n = symbols.len();
        if successors.len() != n {
            return Err(Error::invalid(format!(
                "expected {n} successor lists, got {}",
                successors.len()
            )));
        }
        let mut succ = successors;
        let mut pred = vec![Vec::new(); n];
        for (a, row) in succ.iter_mut().enumerate() {
            row.sort_unstable();
            row.dedup();
            if row.is_empty() {
                return Err(Error::invalid(format!("symbol {a} has no successor")));
            }
            for &b in row.iter() {
                if b >= n {
                    return Err(Error::invalid(format!("successor {b} out of range")));
                }
                pred[b].push(a);
            }
        }
        if let Some(b) = pred.iter().position(|p| p.is_empty()) {
            return Err(Error::invalid(format!("symbol {b} has no predecessor")));
        }
        if succ.iter().all(|row| row.len() == n) {
            return Ok(Self::full(symbols));
        }
        Ok(Self {
            symbols,
            allowed: Allowed::Sparse {
                successors: succ,
                predecessors: pred,
            },
            witness: None,
        })
    }

    /// Builds a structure from a dense 0/1 matrix.
    pub fn from_dense(symbols: SymbolSet, matrix: &[Vec<u8>]) -> Result<Self> {
        let n = symbols.len();
        if matrix.len() != n || matrix.iter().any(|r| r.len() != n) {
            return Err(Error::invalid(format!("transition matrix must be {n}x{n}")));
        }
        let mut succ = Vec::with_capacity(n);
        for row in matrix {
            let mut s = Vec::new();
            for (b, &v) in row.iter().enumerate() {
                match v {
                    0 => {}
                    1 => s.push(b),
                    _ => return Err(Error::invalid("transition matrix entries must be 0 or 1")),
                }
            }
            succ.push(s);
        }
        Self::from_successors(symbols, succ)
    }

    /// Two symbols, `1 -> 1` forbidden.
    pub fn golden_mean() -> Self {
        Self::from_successors(SymbolSet::indexed(2).unwrap(), vec![vec![0, 1], vec![0]]).unwrap()
    }

    pub fn with_witness(mut self, witness: PrimitivityWitness) -> Self {
        self.witness = Some(witness);
        self
    }

    pub fn symbols(&self) -> &SymbolSet {
        &self.symbols
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn is_full(&self) -> bool {
        matches!(self.allowed, Allowed::Full)
    }

    pub fn allowed_data(&self) -> &Allowed {
        &self.allowed
    }

    pub fn witness(&self) -> Option<&PrimitivityWitness> {
        self.witness.as_ref()
    }

    #[inline]
    pub fn allowed(&self, a: usize, b: usize) -> bool {
        match &self.allowed {
            Allowed::Full => a < self.len() && b < self.len(),
            Allowed::Sparse { successors, .. } => successors[a].binary_search(&b).is_ok(),
        }
    }

    /// Successors of `a` in increasing order.
    pub fn successors(&self, a: usize) -> Neighbours<'_> {
        match &self.allowed {
            Allowed::Full => Neighbours::Range(0..self.len()),
            Allowed::Sparse { successors, .. } => Neighbours::List(successors[a].iter()),
        }
    }

    /// Predecessors of `b` in increasing order.
    pub fn predecessors(&self, b: usize) -> Neighbours<'_> {
        match &self.allowed {
            Allowed::Full => Neighbours::Range(0..self.len()),
            Allowed::Sparse { predecessors, .. } => Neighbours::List(predecessors[b].iter()),
        }
    }

    pub fn out_degree(&self, a: usize) -> usize {
        match &self.allowed {
            Allowed::Full => self.len(),
            Allowed::Sparse { successors, .. } => successors[a].len(),
        }
    }

    pub fn is_admissible(&self, word: &[usize]) -> bool {
        word.iter().all(|&a| a < self.len()) && word.windows(2).all(|w| self.allowed(w[0], w[1]))
    }

    /// Whether the word closes up: admissible and last → first allowed.
    pub fn is_cyclically_admissible(&self, word: &[usize]) -> bool {
        !word.is_empty() && self.is_admissible(word) && self.allowed(word[word.len() - 1], word[0])
    }

    /// Dense 0/1 adjacency as rows of booleans.
    pub fn dense(&self) -> Vec<Vec<bool>> {
        let n = self.len();
        (0..n)
            .map(|a| {
                let mut row = vec![false; n];
                for b in self.successors(a) {
                    row[b] = true;
                }
                row
            })
            .collect()
    }

    /// |E^n| as a float (exact while below 2^53).
    pub fn count_admissible(&self, n: usize) -> f64 {
        if n == 0 {
            return 1.0;
        }
        let s = self.len();
        if self.is_full() {
            return (s as f64).powi(n as i32);
        }
        let mut v = vec![1.0f64; s];
        for _ in 1..n {
            v = (0..s).map(|a| self.successors(a).map(|b| v[b]).sum()).collect();
        }
        v.iter().sum()
    }

    /// |Per_n| = trace of the n-th adjacency power, as a float.
    pub fn count_periodic(&self, n: usize) -> f64 {
        let s = self.len();
        if self.is_full() {
            return (s as f64).powi(n as i32);
        }
        let mut total = 0.0;
        for start in 0..s {
            let mut v = vec![0.0f64; s];
            v[start] = 1.0;
            for _ in 0..n {
                let mut next = vec![0.0f64; s];
                for (a, &va) in v.iter().enumerate() {
                    if va != 0.0 {
                        for b in self.successors(a) {
                            next[b] += va;
                        }
                    }
                }
                v = next;
            }
            total += v[start];
        }
        total
    }

    /// The retained structure restricted to `keep` (indices in increasing order).
    pub fn restrict(&self, keep: &[usize]) -> Result<Self> {
        let mut index = vec![usize::MAX; self.len()];
        for (i, &k) in keep.iter().enumerate() {
            index[k] = i;
        }
        let labels = keep.iter().map(|&k| self.symbols.label(k).to_string()).collect();
        let succ = keep
            .iter()
            .map(|&k| {
                self.successors(k)
                    .filter_map(|b| (index[b] != usize::MAX).then_some(index[b]))
                    .collect()
            })
            .collect();
        Self::from_successors(SymbolSet::new(labels)?, succ)
    }
}

/// Iterator over successor or predecessor indices.
#[derive(Debug, Clone)]
pub enum Neighbours<'a> {
    Range(std::ops::Range<usize>),
    List(std::slice::Iter<'a, usize>),
}

impl Iterator for Neighbours<'_> {
    type Item = usize;

    #[inline]
    fn next(&mut self) -> Option<usize> {
        match self {
            Neighbours::Range(r) => r.next(),
            Neighbours::List(it) => it.next().copied(),
        }
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        match self {
            Neighbours::Range(r) => r.size_hint(),
            Neighbours::List(it) => it.size_hint(),
        }
    }
}

fn check_cap(count: f64, cap: u64) -> Result<()> {
    if count > cap as f64 {
        Err(Error::CapExceeded { count, cap })
    } else {
        Ok(())
    }
}

/// Visits every admissible word of length `n` in lexicographic order.
pub fn for_each_admissible<F: FnMut(&[usize])>(
    t: &TransitionStructure,
    n: usize,
    cap: u64,
    mut visit: F,
) -> Result<()> {
    if n == 0 {
        return Err(Error::invalid("word length must be at least 1"));
    }
    check_cap(t.count_admissible(n), cap)?;
    let mut word = Vec::with_capacity(n);
    fn rec<F: FnMut(&[usize])>(t: &TransitionStructure, n: usize, word: &mut Vec<usize>, visit: &mut F) {
        if word.len() == n {
            visit(word);
            return;
        }
        let next = match word.last() {
            None => Neighbours::Range(0..t.len()),
            Some(&a) => t.successors(a),
        };
        for b in next {
            word.push(b);
            rec(t, n, word, visit);
            word.pop();
        }
    }
    rec(t, n, &mut word, &mut visit);
    Ok(())
}

/// E^n in lexicographic order of symbol indices.
pub fn admissible_words(t: &TransitionStructure, n: usize, cap: u64) -> Result<Vec<Word>> {
    let mut out = Vec::new();
    for_each_admissible(t, n, cap, |w| out.push(Word::new(w.to_vec())))?;
    Ok(out)
}

/// Visits every necklace (lexicographically least rotation of a cyclically
/// admissible word of length `n`) together with its prime period.
///
/// Constrained FKM generation: prenecklaces containing a forbidden adjacent
/// pair are pruned, which is sound because that property is prefix-closed.
pub fn for_each_necklace<F: FnMut(&[usize], usize)>(
    t: &TransitionStructure,
    n: usize,
    cap: u64,
    mut visit: F,
) -> Result<()> {
    if n == 0 {
        return Err(Error::invalid("period must be at least 1"));
    }
    check_cap(t.count_periodic(n), cap)?;
    let k = t.len();
    // 1-based FKM array; a[0] is a sentinel.
    let mut a = vec![0usize; n + 1];
    fn gen<F: FnMut(&[usize], usize)>(
        t: &TransitionStructure,
        k: usize,
        n: usize,
        pos: usize,
        p: usize,
        a: &mut [usize],
        visit: &mut F,
    ) {
        if pos > n {
            let w = &a[1..=n];
            if n % p == 0 && t.allowed(w[n - 1], w[0]) {
                visit(w, p);
            }
            return;
        }
        let start = a[pos - p];
        for v in start..k {
            if pos > 1 && !t.allowed(a[pos - 1], v) {
                continue;
            }
            a[pos] = v;
            let np = if v == start { p } else { pos };
            gen(t, k, n, pos + 1, np, a, visit);
        }
    }
    for first in 0..k {
        a[1] = first;
        gen(t, k, n, 2, 1, &mut a, &mut visit);
    }
    Ok(())
}

/// Per_n on the truncation: every cyclically admissible word of length `n`
/// with its prime period, sorted lexicographically.
pub fn periodic_words(t: &TransitionStructure, n: usize, cap: u64) -> Result<Vec<(Word, usize)>> {
    let mut out = Vec::new();
    for_each_necklace(t, n, cap, |w, p| {
        for r in 0..p {
            let rotated: Vec<usize> = (0..n).map(|i| w[(i + r) % n]).collect();
            out.push((Word::new(rotated), p));
        }
    })?;
    out.sort_unstable_by(|x, y| x.0.cmp(&y.0));
    Ok(out)
}

type Bits = Vec<u64>;

fn bits_new(n: usize) -> Bits {
    vec![0; n.div_ceil(64)]
}

#[inline]
fn bit_set(b: &mut Bits, i: usize) {
    b[i / 64] |= 1 << (i % 64);
}

#[inline]
fn bit_get(b: &Bits, i: usize) -> bool {
    b[i / 64] >> (i % 64) & 1 == 1
}

/// reach[a] = set of b with a path of exactly `len` edges from a to b.
fn reach_after(t: &TransitionStructure, prev: &[Bits]) -> Vec<Bits> {
    let s = t.len();
    (0..s)
        .map(|a| {
            let mut row = bits_new(s);
            for c in t.successors(a) {
                for (dst, src) in row.iter_mut().zip(&prev[c]) {
                    *dst |= *src;
                }
            }
            row
        })
        .collect()
}

/// Smallest `N ≤ n_max` and a connector set Λ of length-`N` words such that
/// every ordered symbol pair is joined by some member of Λ.
///
/// Only the end symbols of a connector matter, so Λ is chosen by greedy set
/// cover over endpoint pairs (ties broken lexicographically) and each chosen
/// pair is realised by its lexicographically least path.
pub fn primitivity_witness(t: &TransitionStructure, n_max: usize) -> Result<PrimitivityWitness> {
    let s = t.len();
    let adjacency: Vec<Bits> = (0..s)
        .map(|a| {
            let mut row = bits_new(s);
            for b in t.successors(a) {
                bit_set(&mut row, b);
            }
            row
        })
        .collect();
    // paths[k] = reachability in exactly k edges.
    let mut paths: Vec<Vec<Bits>> = vec![(0..s)
        .map(|a| {
            let mut row = bits_new(s);
            bit_set(&mut row, a);
            row
        })
        .collect()];
    let mut failing = (0, 0);
    for n in 0..=n_max {
        // A connector of length n needs paths of n + 1 edges between a and b.
        while paths.len() < n + 2 {
            let next = reach_after(t, paths.last().unwrap());
            paths.push(next);
        }
        let full = &paths[n + 1];
        let missing = (0..s)
            .flat_map(|a| (0..s).map(move |b| (a, b)))
            .find(|&(a, b)| !bit_get(&full[a], b));
        if let Some(pair) = missing {
            failing = pair;
            continue;
        }
        if n == 0 {
            return Ok(PrimitivityWitness {
                length: 0,
                words: Vec::new(),
            });
        }
        let inner = &paths[n - 1];
        let pred_bits: Vec<Bits> = (0..s)
            .map(|u| {
                let mut row = bits_new(s);
                for a in t.predecessors(u) {
                    bit_set(&mut row, a);
                }
                row
            })
            .collect();
        let mut covered: Vec<Bits> = vec![bits_new(s); s];
        let mut remaining = s * s;
        let mut chosen = Vec::new();
        while remaining > 0 {
            let mut best = (0usize, 0usize, 0usize);
            for u in 0..s {
                for v in 0..s {
                    if !bit_get(&inner[u], v) {
                        continue;
                    }
                    let mut gain = 0;
                    for a in 0..s {
                        if bit_get(&pred_bits[u], a) {
                            gain += adjacency[v]
                                .iter()
                                .zip(&covered[a])
                                .map(|(x, c)| (x & !c).count_ones() as usize)
                                .sum::<usize>();
                        }
                    }
                    if gain > best.0 {
                        best = (gain, u, v);
                    }
                }
            }
            let (gain, u, v) = best;
            debug_assert!(gain > 0);
            for a in 0..s {
                if bit_get(&pred_bits[u], a) {
                    for (c, x) in covered[a].iter_mut().zip(&adjacency[v]) {
                        *c |= x;
                    }
                }
            }
            remaining -= gain;
            chosen.push(least_path(t, &paths, u, v, n));
        }
        chosen.sort();
        return Ok(PrimitivityWitness {
            length: n,
            words: chosen,
        });
    }
    Err(Error::NotPrimitive {
        a: failing.0,
        b: failing.1,
        bound: n_max,
    })
}

/// Lexicographically least admissible word of length `len` from `u` to `v`.
fn least_path(t: &TransitionStructure, paths: &[Vec<Bits>], u: usize, v: usize, len: usize) -> Word {
    let mut w = vec![u];
    let mut cur = u;
    for step in 1..len {
        let left = len - 1 - step;
        let next = t
            .successors(cur)
            .find(|&c| bit_get(&paths[left][c], v))
            .expect("endpoint pair is reachable");
        w.push(next);
        cur = next;
    }
    Word::new(w)
}

/// Primitivity via strong connectivity and aperiodicity (gcd of cycle lengths).
pub fn is_primitive(t: &TransitionStructure) -> bool {
    if t.is_full() {
        return true;
    }
    let s = t.len();
    let bfs = |forward: bool| -> Vec<Option<usize>> {
        let mut level = vec![None; s];
        level[0] = Some(0);
        let mut queue = std::collections::VecDeque::from([0usize]);
        while let Some(a) = queue.pop_front() {
            let next: Vec<usize> = if forward {
                t.successors(a).collect()
            } else {
                t.predecessors(a).collect()
            };
            for b in next {
                if level[b].is_none() {
                    level[b] = Some(level[a].unwrap() + 1);
                    queue.push_back(b);
                }
            }
        }
        level
    };
    let fwd = bfs(true);
    if fwd.iter().any(Option::is_none) || bfs(false).iter().any(Option::is_none) {
        return false;
    }
    let mut g: i64 = 0;
    for a in 0..s {
        for b in t.successors(a) {
            let d = fwd[a].unwrap() as i64 + 1 - fwd[b].unwrap() as i64;
            g = num_integer::gcd(g, d.abs());
        }
    }
    g == 1
}

#[cfg(test)]
mod tests {
    use super::*;

    fn full(n: usize) -> TransitionStructure {
        TransitionStructure::full(SymbolSet::indexed(n).unwrap())
    }

    #[test]
    fn full_two_shift_words() {
        let w = admissible_words(&full(2), 2, DEFAULT_CAP).unwrap();
        let v: Vec<Vec<usize>> = w.into_iter().map(Word::into_inner).collect();
        assert_eq!(v, vec![vec![0, 0], vec![0, 1], vec![1, 0], vec![1, 1]]);
    }

    #[test]
    fn golden_mean_words_match_brute_force() {
        let t = TransitionStructure::golden_mean();
        let words = admissible_words(&t, 3, DEFAULT_CAP).unwrap();
        let brute: Vec<Vec<usize>> = (0..8usize)
            .map(|m| vec![m >> 2 & 1, m >> 1 & 1, m & 1])
            .filter(|w| w.windows(2).all(|p| !(p[0] == 1 && p[1] == 1)))
            .collect();
        assert_eq!(words.len(), 5);
        assert_eq!(words.into_iter().map(Word::into_inner).collect::<Vec<_>>(), brute);
    }

    #[test]
    fn singleton_has_one_word() {
        for n in 1..6 {
            assert_eq!(admissible_words(&full(1), n, DEFAULT_CAP).unwrap().len(), 1);
        }
    }

    #[test]
    fn periodic_points_of_small_shifts() {
        let p = periodic_words(&full(2), 2, DEFAULT_CAP).unwrap();
        assert_eq!(p.len(), 4);
        let fixed: Vec<_> = p.iter().filter(|(_, d)| *d == 1).map(|(w, _)| w.clone()).collect();
        assert_eq!(fixed, vec![Word::new(vec![0, 0]), Word::new(vec![1, 1])]);

        let g = TransitionStructure::golden_mean();
        assert_eq!(periodic_words(&g, 3, DEFAULT_CAP).unwrap().len(), 4);
        let one = periodic_words(&g, 1, DEFAULT_CAP).unwrap();
        assert_eq!(one, vec![(Word::new(vec![0]), 1)]);
    }

    #[test]
    fn cap_is_enforced() {
        let err = admissible_words(&full(10), 9, 1000).unwrap_err();
        assert!(matches!(err, Error::CapExceeded { .. }));
    }

    #[test]
    fn witnesses() {
        let w = primitivity_witness(&full(3), 4).unwrap();
        assert_eq!(w.length, 0);
        assert!(w.words.is_empty());

        let g = TransitionStructure::golden_mean();
        let w = primitivity_witness(&g, 4).unwrap();
        assert_eq!(w.length, 1);
        assert_eq!(w.words, vec![Word::new(vec![0])]);

        let loops =
            TransitionStructure::from_successors(SymbolSet::indexed(2).unwrap(), vec![vec![0], vec![1]]).unwrap();
        match primitivity_witness(&loops, 5) {
            Err(Error::NotPrimitive { a, b, .. }) => assert_eq!((a, b), (0, 1)),
            other => panic!("expected failure, got {other:?}"),
        }
        assert!(!is_primitive(&loops));
        assert!(is_primitive(&g));
    }

    #[test]
    fn periodic_cycle_is_not_primitive() {
        let cyc = TransitionStructure::from_successors(SymbolSet::indexed(3).unwrap(), vec![vec![1], vec![2], vec![0]])
            .unwrap();
        assert!(!is_primitive(&cyc));
        assert!(primitivity_witness(&cyc, 6).is_err());
    }

    #[test]
    fn structure_rejects_dead_symbols() {
        let r = TransitionStructure::from_dense(SymbolSet::indexed(2).unwrap(), &[vec![1, 1], vec![0, 0]]);
        assert!(r.is_err());
        let c = TransitionStructure::from_dense(SymbolSet::indexed(2).unwrap(), &[vec![1, 0], vec![1, 0]]);
        assert!(c.is_err());
    }
}
