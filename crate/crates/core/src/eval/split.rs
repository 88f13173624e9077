use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::{Error, Result};

/// Assigns `0..n` to `k` validation folds: a seeded shuffle, then position
/// `p` goes to fold `p % k`. Fold sizes differ by at most one; indices
/// within a fold are sorted.
pub fn kfold_split(n: usize, k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k < 2 || n < k {
        return Err(Error::Config(format!("k-fold needs n >= k >= 2 (n = {n}, k = {k})")));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut folds = vec![Vec::with_capacity(n / k + 1); k];
    for (p, i) in idx.into_iter().enumerate() {
        folds[p % k].push(i);
    }
    for f in &mut folds {
        f.sort_unstable();
    }
    Ok(folds)
}

/// Like [`kfold_split`], but over the distinct values of `groups`: every
/// record of a group lands in the same fold. Fold sizes are balanced in
/// groups, not records.
pub fn group_kfold_split<S: AsRef<str>>(groups: &[S], k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    let mut keys: Vec<&str> = groups.iter().map(AsRef::as_ref).collect();
    keys.sort_unstable();
    keys.dedup();
    let group_folds = kfold_split(keys.len(), k, seed)?;
    let mut fold_of = vec![0; keys.len()];
    for (f, members) in group_folds.iter().enumerate() {
        for &g in members {
            fold_of[g] = f;
        }
    }
    let mut folds = vec![Vec::new(); k];
    for (i, g) in groups.iter().enumerate() {
        let g = keys.binary_search(&g.as_ref()).expect("key collected above");
        folds[fold_of[g]].push(i);
    }
    Ok(folds)
}
