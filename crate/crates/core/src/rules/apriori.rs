use std::collections::{BTreeSet, HashSet};

use rayon::prelude::*;

use super::{Itemset, RulesError};
use crate::ingest::Transaction;

/// Fixed-width bitset over dense item indices.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
struct Bits(Vec<u64>);

impl Bits {
    fn new(words: usize) -> Self {
        Bits(vec![0; words])
    }

    fn set(&mut self, i: usize) {
        self.0[i / 64] |= 1 << (i % 64);
    }

    fn contains_all(&self, mask: &Bits) -> bool {
        self.0.iter().zip(&mask.0).all(|(t, m)| t & m == *m)
    }
}

fn is_frequent(count: u64, total: u64, min_support: f64) -> bool {
    count as f64 / total as f64 >= min_support
}

/// Levelwise Apriori. Returns every itemset of size `1..=max_size` whose
/// support `count / |transactions|` is at least `min_support`, ordered by
/// size and then lexicographically.
pub fn mine_frequent_itemsets(
    transactions: &[Transaction],
    min_support: f64,
    max_size: usize,
) -> Result<Vec<Itemset>, RulesError> {
    if transactions.is_empty() {
        return Err(RulesError::EmptyTransactions);
    }
    if !(min_support > 0.0 && min_support <= 1.0) {
        return Err(RulesError::InvalidConfig(format!("min_support must be in (0, 1], got {min_support}")));
    }
    let total = transactions.len() as u64;

    let universe: Vec<u16> =
        transactions.iter().flat_map(|t| t.items.iter().copied()).collect::<BTreeSet<_>>().into_iter().collect();
    let words = universe.len().div_ceil(64).max(1);
    let index_of = |code: u16| universe.binary_search(&code).expect("code in universe");
    let baskets: Vec<Bits> = transactions
        .iter()
        .map(|t| {
            let mut b = Bits::new(words);
            for &c in &t.items {
                b.set(index_of(c));
            }
            b
        })
        .collect();

    let count = |cand: &[usize]| -> u64 {
        let mut mask = Bits::new(words);
        for &i in cand {
            mask.set(i);
        }
        baskets.iter().filter(|b| b.contains_all(&mask)).count() as u64
    };

    let mut out = Vec::new();
    // level 1
    let mut level: Vec<(Vec<usize>, u64)> = (0..universe.len())
        .map(|i| (vec![i], count(&[i])))
        .filter(|(_, c)| is_frequent(*c, total, min_support))
        .collect();

    let mut size = 1;
    while !level.is_empty() {
        out.extend(
            level.iter().map(|(items, c)| Itemset { items: items.iter().map(|&i| universe[i]).collect(), count: *c }),
        );
        if size >= max_size {
            break;
        }
        let candidates = join_and_prune(&level);
        level = candidates
            .into_par_iter()
            .map(|cand| {
                let c = count(&cand);
                (cand, c)
            })
            .filter(|(_, c)| is_frequent(*c, total, min_support))
            .collect();
        size += 1;
    }
    Ok(out)
}

/// Joins sorted k-itemsets sharing a (k-1)-prefix and drops candidates with
/// any infrequent k-subset.
fn join_and_prune(level: &[(Vec<usize>, u64)]) -> Vec<Vec<usize>> {
    let frequent: HashSet<&[usize]> = level.iter().map(|(s, _)| s.as_slice()).collect();
    let mut candidates = Vec::new();
    for (i, (a, _)) in level.iter().enumerate() {
        let k = a.len();
        for (b, _) in &level[i + 1..] {
            if a[..k - 1] != b[..k - 1] {
                // level is lexicographically sorted, so no later b shares the prefix
                break;
            }
            let mut cand = a.clone();
            cand.push(b[k - 1]);
            let all_subsets_frequent = (0..cand.len()).all(|skip| {
                let sub: Vec<usize> = cand.iter().enumerate().filter(|&(j, _)| j != skip).map(|(_, &v)| v).collect();
                frequent.contains(sub.as_slice())
            });
            if all_subsets_frequent {
                candidates.push(cand);
            }
        }
    }
    candidates
}
