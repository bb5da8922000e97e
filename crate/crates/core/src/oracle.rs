//! Reference implementations by exhaustive rewriting.
//!
//! These are deliberately slow and independent of the optimized paths in
//! [`crate::words`]; the test suites cross-check against them.

use crate::factors::GroupElement;
use crate::words::FiniteWord;

/// Rewrites a raw letter sequence to its fixpoint: repeatedly drops identity
/// letters and merges one adjacent same-index pair per pass, restarting the
/// scan after every rewrite, until nothing applies.
pub fn naive_reduce(raw: &[(u32, GroupElement)]) -> Vec<(u32, GroupElement)> {
    let mut word: Vec<(u32, GroupElement)> = raw.to_vec();
    loop {
        if let Some(pos) = word.iter().position(|(_, e)| e.is_identity()) {
            word.remove(pos);
            continue;
        }
        let merge_at = (0..word.len().saturating_sub(1)).find(|&i| word[i].0 == word[i + 1].0);
        match merge_at {
            Some(i) => {
                let index = word[i].0;
                let product = word[i]
                    .1
                    .op(&word[i + 1].1)
                    .expect("adjacent letters at one index share a descriptor");
                word.splice(i..=i + 1, std::iter::once((index, product)));
            }
            None => return word,
        }
    }
}

/// Smallest `1 <= m <= max` with `u^m = 1`, by building the `m`-fold letter
/// repetition and rewriting it to its fixpoint.
pub fn smallest_vanishing_power(u: &FiniteWord, max: u64) -> Option<u64> {
    let letters: Vec<(u32, GroupElement)> = u
        .letters()
        .iter()
        .map(|l| (l.index(), l.element().clone()))
        .collect();
    for m in 1..=max {
        let mut repeated = Vec::with_capacity(letters.len() * m as usize);
        for _ in 0..m {
            repeated.extend_from_slice(&letters);
        }
        if naive_reduce(&repeated).is_empty() {
            return Some(m);
        }
    }
    None
}
