//! Words over `{E, B, D}`. A word is allowed when deleting every `B` leaves
//! `(ED)^r` for some `r >= 0`.

use std::fmt;

use serde::Serialize;

use super::kernel::Kernel;
use crate::error::{Error, Result};

pub const MAX_WORD_LEN: usize = 20;

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct Word(pub Vec<Kernel>);

impl Word {
    pub fn parse(s: &str) -> Result<Self> {
        s.chars().map(|c| Kernel::parse(&c.to_string())).collect::<Result<Vec<_>>>().map(Word)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// The literal deletion test.
    pub fn is_allowed(&self) -> bool {
        let rest: Vec<Kernel> = self.0.iter().copied().filter(|l| *l != Kernel::B).collect();
        rest.len().is_multiple_of(2) && rest.chunks(2).all(|p| p == [Kernel::E, Kernel::D])
    }

    /// Bitmask of the positions holding `E` or `D` (bit `i` = letter `i + 1`).
    pub fn position_set(&self) -> u32 {
        self.0.iter().enumerate().filter(|(_, l)| **l != Kernel::B).fold(0, |m, (i, _)| m | (1 << i))
    }
}

impl fmt::Display for Word {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.iter().try_for_each(|l| write!(f, "{}", l.symbol()))
    }
}

/// Deletion-test automaton. `None` is the dead state.
fn step(state: Option<bool>, letter: Kernel) -> Option<bool> {
    // `Some(true)`: expecting `E`; `Some(false)`: expecting `D`.
    match (state?, letter) {
        (_, Kernel::B) => state,
        (true, Kernel::E) => Some(false),
        (false, Kernel::D) => Some(true),
        _ => None,
    }
}

fn check_len(k: usize) -> Result<()> {
    if !(1..=MAX_WORD_LEN).contains(&k) {
        return Err(Error::WordLength(k));
    }
    Ok(())
}

/// Every allowed word of length `k`, in lexicographic order `E < B < D`.
/// Dead prefixes are pruned; every word produced passes the deletion test.
pub fn allowed_words(k: usize) -> Result<Vec<Word>> {
    check_len(k)?;
    let mut out = Vec::with_capacity(1 << (k - 1));
    let mut prefix = Vec::with_capacity(k);
    fn walk(prefix: &mut Vec<Kernel>, state: Option<bool>, k: usize, out: &mut Vec<Word>) {
        if prefix.len() == k {
            if state == Some(true) {
                let w = Word(prefix.clone());
                debug_assert!(w.is_allowed());
                out.push(w);
            }
            return;
        }
        for letter in Kernel::ALL {
            let next = step(state, letter);
            if next.is_some() {
                prefix.push(letter);
                walk(prefix, next, k, out);
                prefix.pop();
            }
        }
    }
    walk(&mut prefix, Some(true), k, &mut out);
    Ok(out)
}

/// Count of allowed words by visiting all `3^k` words.
pub fn count_allowed_exhaustive(k: usize) -> Result<u64> {
    check_len(k)?;
    // Odometer with the automaton state cached per prefix length.
    let mut digits = vec![0usize; k];
    let mut states = vec![Some(true); k + 1];
    let mut count = 0u64;
    let mut from = 0;
    loop {
        for i in from..k {
            states[i + 1] = step(states[i], Kernel::ALL[digits[i]]);
        }
        if states[k] == Some(true) {
            count += 1;
        }
        let mut i = k;
        loop {
            if i == 0 {
                return Ok(count);
            }
            i -= 1;
            digits[i] += 1;
            if digits[i] < 3 {
                break;
            }
            digits[i] = 0;
        }
        from = i;
    }
}

/// Every word of length `k` (small `k` only).
pub fn all_words(k: usize) -> Vec<Word> {
    (0..3usize.pow(k as u32))
        .map(|mut code| {
            let mut letters = vec![Kernel::E; k];
            for slot in letters.iter_mut().rev() {
                *slot = Kernel::ALL[code % 3];
                code /= 3;
            }
            Word(letters)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    fn words(k: usize) -> Vec<String> {
        allowed_words(k).unwrap().iter().map(|w| w.to_string()).collect()
    }

    #[test]
    fn small_lengths() {
        assert_eq!(words(1), ["B"]);
        let mut two = words(2);
        two.sort();
        assert_eq!(two, ["BB", "ED"]);
        assert_eq!(words(3).len(), 4);
        assert!(matches!(allowed_words(0), Err(Error::WordLength(0))));
        assert!(matches!(allowed_words(21), Err(Error::WordLength(21))));
    }

    #[test]
    fn deletion_test() {
        for (s, ok) in
            [("B", true), ("ED", true), ("EBD", true), ("DE", false), ("E", false), ("EDED", true), ("EEDD", false)]
        {
            assert_eq!(Word::parse(s).unwrap().is_allowed(), ok, "{s}");
        }
    }

    #[test]
    fn generator_matches_brute_force() {
        for k in 1..=8 {
            let brute: HashSet<Word> = all_words(k).into_iter().filter(Word::is_allowed).collect();
            let fast: HashSet<Word> = allowed_words(k).unwrap().into_iter().collect();
            assert_eq!(brute, fast, "k={k}");
        }
    }

    #[test]
    fn count_law() {
        for k in 1..=16 {
            assert_eq!(count_allowed_exhaustive(k).unwrap(), 1 << (k - 1), "k={k}");
        }
        for k in [17, 20] {
            assert_eq!(allowed_words(k).unwrap().len(), 1 << (k - 1));
        }
    }

    #[test]
    fn even_subset_bijection() {
        for k in 1..=14 {
            let masks: Vec<u32> = allowed_words(k).unwrap().iter().map(Word::position_set).collect();
            assert!(masks.iter().all(|m| m.count_ones() % 2 == 0));
            let distinct: HashSet<u32> = masks.iter().copied().collect();
            assert_eq!(distinct.len(), masks.len());
            let evens = (0u32..1 << k).filter(|m| m.count_ones() % 2 == 0).count();
            assert_eq!(distinct.len(), evens);
        }
    }
}
