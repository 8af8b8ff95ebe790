//! Edit distance against the textbook recursion, exhaustively over every
//! pair of strings of length at most 8 over a three-letter alphabet.
//!
//! The recursion
//!   lev(i, 0) = i, lev(0, j) = j,
//!   lev(i, j) = min(lev(i-1, j) + 1, lev(i, j-1) + 1, lev(i-1, j-1) + [a_i != b_j])
//! is memoized over prefixes, and the memo for a prefix of `b` is shared by
//! all its extensions by walking the strings depth first. Metric axioms are
//! checked on the resulting table.

use crate::Check;
use tapbench_core::teleop::command::levenshtein_raw;

const ALPHABET: [u8; 3] = *b"abc";
const MAX_LEN: usize = 8;
const TRIANGLE_LEN: usize = 5;

/// All strings up to `MAX_LEN` in depth-first (trie preorder) order.
fn strings() -> Vec<Vec<u8>> {
    fn walk(prefix: &mut Vec<u8>, out: &mut Vec<Vec<u8>>) {
        out.push(prefix.clone());
        if prefix.len() == MAX_LEN {
            return;
        }
        for c in ALPHABET {
            prefix.push(c);
            walk(prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    walk(&mut Vec::new(), &mut out);
    out
}

/// Memoized recursion for one `a` against every `b` in trie order.
struct Recursion<'a> {
    a: &'a [u8],
    /// memo[j][i] = lev(a[..i], b[..j]) for the current path; filled[j]
    /// counts the known entries of column j.
    memo: [[usize; MAX_LEN + 1]; MAX_LEN + 1],
    filled: [usize; MAX_LEN + 1],
    b: Vec<u8>,
}

impl Recursion<'_> {
    fn new(a: &[u8]) -> Recursion<'_> {
        Recursion {
            a,
            memo: [[0; MAX_LEN + 1]; MAX_LEN + 1],
            filled: [0; MAX_LEN + 1],
            b: Vec::new(),
        }
    }

    fn lev(&mut self, i: usize, j: usize) -> usize {
        if i < self.filled[j] {
            return self.memo[j][i];
        }
        let v = if i == 0 {
            j
        } else if j == 0 {
            i
        } else {
            let sub = self.lev(i - 1, j - 1) + usize::from(self.a[i - 1] != self.b[j - 1]);
            let del = self.lev(i - 1, j) + 1;
            let ins = self.lev(i, j - 1) + 1;
            sub.min(del).min(ins)
        };
        debug_assert_eq!(self.filled[j], i);
        self.memo[j][i] = v;
        self.filled[j] = i + 1;
        v
    }

    /// Visits the trie below the current `b`, calling `f` with lev(a, b).
    fn walk(&mut self, f: &mut impl FnMut(usize)) {
        let j = self.b.len();
        // Fill the column bottom up so each recursive call hits the memo.
        for i in 0..=self.a.len() {
            self.lev(i, j);
        }
        f(self.memo[j][self.a.len()]);
        if j < MAX_LEN {
            for c in ALPHABET {
                self.b.push(c);
                self.walk(f);
                self.b.pop();
                self.filled[j + 1] = 0;
            }
        }
    }
}

pub fn check() -> Check {
    let all = strings();
    let n = all.len();
    let text: Vec<String> = all.iter().map(|s| String::from_utf8(s.clone()).unwrap()).collect();
    let mut table = vec![0u8; n * n];
    let mut mismatches = 0usize;
    let mut first_mismatch = None;
    for (ia, a) in all.iter().enumerate() {
        let mut rec = Recursion::new(a);
        let mut ib = 0;
        rec.walk(&mut |expected| {
            let got = levenshtein_raw(&text[ia], &text[ib]);
            if got != expected {
                mismatches += 1;
                first_mismatch.get_or_insert((ia, ib, got, expected));
            }
            table[ia * n + ib] = got as u8;
            ib += 1;
        });
        debug_assert_eq!(ib, n);
    }
    if let Some((ia, ib, got, expected)) = first_mismatch {
        return Err(format!(
            "{mismatches} pairs differ from the recursion, first `{}` vs `{}`: {got} != {expected}",
            text[ia], text[ib]
        ));
    }

    // Tiled so the transposed reads stay in cache.
    const TILE: usize = 64;
    for ta in (0..n).step_by(TILE) {
        for tb in (0..n).step_by(TILE) {
            for ia in ta..(ta + TILE).min(n) {
                for ib in tb..(tb + TILE).min(n) {
                    let d = table[ia * n + ib] as usize;
                    ensure!(
                        (d == 0) == (ia == ib),
                        "identity of indiscernibles fails for `{}`, `{}`",
                        text[ia],
                        text[ib]
                    );
                    ensure!(
                        d == table[ib * n + ia] as usize,
                        "asymmetric on `{}`, `{}`",
                        text[ia],
                        text[ib]
                    );
                    let (la, lb) = (all[ia].len(), all[ib].len());
                    ensure!(
                        la.abs_diff(lb) <= d && d <= la.max(lb),
                        "bounds fail on `{}`, `{}`",
                        text[ia],
                        text[ib]
                    );
                }
            }
        }
    }

    let short: Vec<usize> = (0..n).filter(|&i| all[i].len() <= TRIANGLE_LEN).collect();
    for &x in &short {
        for &y in &short {
            let xy = table[x * n + y];
            for &z in &short {
                ensure!(
                    table[x * n + z] <= xy + table[y * n + z],
                    "triangle inequality fails on `{}`, `{}`, `{}`",
                    text[x],
                    text[y],
                    text[z]
                );
            }
        }
    }
    Ok(format!(
        "{} ordered pairs match the recursion; identity, symmetry and length bounds on all, triangle inequality on all {} triples up to length {TRIANGLE_LEN}",
        n * n,
        short.len().pow(3)
    ))
}
