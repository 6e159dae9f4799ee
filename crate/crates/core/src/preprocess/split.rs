use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::preprocess::{DatasetManifest, Label, Split};

/// Disjoint train / validation / test record indices, each sorted.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitAssignment {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
    pub seed: u64,
}

impl SplitAssignment {
    pub fn split_of(&self, index: usize) -> Option<Split> {
        if self.train.binary_search(&index).is_ok() {
            Some(Split::Train)
        } else if self.validation.binary_search(&index).is_ok() {
            Some(Split::Val)
        } else if self.test.binary_search(&index).is_ok() {
            Some(Split::Test)
        } else {
            None
        }
    }

    /// Copy of `manifest` with each record's split tag set.
    pub fn tag(&self, manifest: &DatasetManifest) -> DatasetManifest {
        let mut out = manifest.clone();
        for (i, r) in out.records.iter_mut().enumerate() {
            r.split = self.split_of(i);
        }
        out
    }
}

/// Split sizes for `n` records: `round(0.7 n)`, `round(0.2 n)`, remainder.
pub fn split_sizes(n: usize) -> (usize, usize, usize) {
    let train = (7 * n + 5) / 10;
    let val = (2 * n + 5) / 10;
    (train, val, n - train - val)
}

/// Per-label `(train, val)` counts: floor or ceil of each label's ideal
/// share, chosen so the totals hit [`split_sizes`] while keeping every
/// label's train/val/test count as close as possible to 70/20/10.
fn allocate(groups: &[usize], train_total: usize, val_total: usize) -> Vec<(usize, usize)> {
    // Candidates are compared in tenths of a record to stay in integers.
    fn deviation(n: usize, tr: usize, va: usize) -> Option<usize> {
        let te = n.checked_sub(tr + va)?;
        let d = |count: usize, tenths: usize| (10 * count).abs_diff(tenths * n);
        Some(d(tr, 7).max(d(va, 2)).max(d(te, 1)))
    }
    let options: Vec<Vec<(usize, usize)>> = groups
        .iter()
        .map(|&n| {
            let mut v = Vec::new();
            for tr in (7 * n / 10)..=(7 * n).div_ceil(10) {
                for va in (2 * n / 10)..=(2 * n).div_ceil(10) {
                    if deviation(n, tr, va).is_some() {
                        v.push((tr, va));
                    }
                }
            }
            v
        })
        .collect();

    let mut best: Option<(usize, Vec<(usize, usize)>)> = None;
    let mut current = Vec::with_capacity(groups.len());
    fn search(
        level: usize,
        groups: &[usize],
        options: &[Vec<(usize, usize)>],
        totals: (usize, usize),
        current: &mut Vec<(usize, usize)>,
        best: &mut Option<(usize, Vec<(usize, usize)>)>,
        dev: &dyn Fn(usize, usize, usize) -> Option<usize>,
    ) {
        if level == groups.len() {
            let tr: usize = current.iter().map(|c| c.0).sum();
            let va: usize = current.iter().map(|c| c.1).sum();
            if (tr, va) != totals {
                return;
            }
            let worst = current
                .iter()
                .zip(groups)
                .filter_map(|(&(t, v), &n)| dev(n, t, v))
                .max()
                .unwrap_or(0);
            if best.as_ref().is_none_or(|(b, _)| worst < *b) {
                *best = Some((worst, current.clone()));
            }
            return;
        }
        for &opt in &options[level] {
            current.push(opt);
            search(level + 1, groups, options, totals, current, best, dev);
            current.pop();
        }
    }
    search(0, groups, &options, (train_total, val_total), &mut current, &mut best, &deviation);
    best.map(|(_, alloc)| alloc).unwrap_or_else(|| {
        // Unreachable for floor/ceil candidates; fall back to proportional floors.
        groups.iter().map(|&n| (7 * n / 10, 2 * n / 10)).collect()
    })
}

/// Seeded, label-stratified 70/20/10 partition of the manifest.
pub fn split_dataset(manifest: &DatasetManifest, seed: u64) -> Result<SplitAssignment> {
    if manifest.is_empty() {
        return Err(Error::usage("cannot split an empty manifest"));
    }
    let mut by_label: BTreeMap<Label, Vec<usize>> = BTreeMap::new();
    for (i, r) in manifest.records.iter().enumerate() {
        by_label.entry(r.label).or_default().push(i);
    }
    let groups: Vec<usize> = by_label.values().map(Vec::len).collect();
    let (train_total, val_total, _) = split_sizes(manifest.len());
    let alloc = allocate(&groups, train_total, val_total);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = SplitAssignment {
        train: Vec::new(),
        validation: Vec::new(),
        test: Vec::new(),
        seed,
    };
    for (mut indices, (tr, va)) in by_label.into_values().zip(alloc) {
        indices.shuffle(&mut rng);
        out.train.extend_from_slice(&indices[..tr]);
        out.validation.extend_from_slice(&indices[tr..tr + va]);
        out.test.extend_from_slice(&indices[tr + va..]);
    }
    out.train.sort_unstable();
    out.validation.sort_unstable();
    out.test.sort_unstable();
    Ok(out)
}
