//! Second-order iterative stratification for multi-label splits, plus
//! dataset statistics and the split CSV format.
//!
//! Each example is indexed by one key per label (its marginals) and one key
//! per label *pair* (its co-occurrences). The splitter repeatedly takes the
//! key with the fewest unassigned examples — the hardest constraint — and
//! deals those examples to whichever subset most needs that key, so rare
//! label combinations stay proportionally represented in train/val/test.
//! A short deterministic swap pass then retouches the marginals: the greedy
//! deal is near-exact for most genres but the very last batches (the most
//! common labels) land when little capacity is left to choose from.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::genres::{GenreSet, GENRES, GENRE_COUNT};
use crate::seed::rng_for;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Subset {
    Train,
    Val,
    Test,
}

pub const SUBSETS: [Subset; 3] = [Subset::Train, Subset::Val, Subset::Test];

impl std::fmt::Display for Subset {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Subset::Train => "train",
            Subset::Val => "val",
            Subset::Test => "test",
        })
    }
}

impl std::str::FromStr for Subset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Subset::Train),
            "val" => Ok(Subset::Val),
            "test" => Ok(Subset::Test),
            _ => Err(Error::validation(format!("unknown subset {s:?}"))),
        }
    }
}

/// Canonical label-pair key: two genre indices with the lower first, or a
/// doubled index for single-label examples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LabelPairKey(u8, u8);

impl LabelPairKey {
    pub fn pair(a: usize, b: usize) -> Self {
        assert!(a != b && a < GENRE_COUNT && b < GENRE_COUNT);
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        LabelPairKey(lo as u8, hi as u8)
    }

    pub fn singleton(a: usize) -> Self {
        assert!(a < GENRE_COUNT);
        LabelPairKey(a as u8, a as u8)
    }
}

/// Keys carried by one label set: a singleton per label plus every
/// unordered pair. Singletons keep per-genre marginals in check; pairs
/// handle co-occurrence. Pair keys alone turn out to be too coarse: most
/// pairs are rare, their integer allocations all round the small subsets
/// down to zero, and the 10% validation subset ends up assembled from a
/// handful of common-pair batches.
pub fn keys_of(set: GenreSet) -> Vec<LabelPairKey> {
    let idx: Vec<usize> = set.indices().collect();
    let mut keys: Vec<LabelPairKey> =
        idx.iter().map(|&g| LabelPairKey::singleton(g)).collect();
    for i in 0..idx.len() {
        for j in i + 1..idx.len() {
            keys.push(LabelPairKey::pair(idx[i], idx[j]));
        }
    }
    keys
}

/// Exact subset capacities: floors of `ratio·n`, remainder going to the
/// largest fractional parts (ties by subset order).
fn capacities(n: usize, ratios: (f64, f64, f64)) -> [usize; 3] {
    let r = [ratios.0, ratios.1, ratios.2];
    let mut caps = [0usize; 3];
    let mut frac: Vec<(usize, f64)> = Vec::new();
    for s in 0..3 {
        let want = r[s] * n as f64;
        caps[s] = want.floor() as usize;
        frac.push((s, want - want.floor()));
    }
    let mut rem = n - caps.iter().sum::<usize>();
    frac.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    for (s, _) in frac {
        if rem == 0 {
            break;
        }
        caps[s] += 1;
        rem -= 1;
    }
    caps
}

fn validate_ratios(ratios: (f64, f64, f64)) -> Result<()> {
    let r = [ratios.0, ratios.1, ratios.2];
    if r.iter().any(|&x| !(x > 0.0)) {
        return Err(Error::validation("split ratios must be positive"));
    }
    if (r.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::validation(format!(
            "split ratios sum to {}, expected 1",
            r.iter().sum::<f64>()
        )));
    }
    Ok(())
}

/// Stop the swap pass once every per-genre, per-subset deviation from the
/// global proportion is at most this (1.5 percentage points).
const REPAIR_TOLERANCE: f64 = 0.015;
const MAX_REPAIR_SWAPS: usize = 64;

fn subset_index(s: Subset) -> usize {
    match s {
        Subset::Train => 0,
        Subset::Val => 1,
        Subset::Test => 2,
    }
}

/// One stratified split. Returns the subset per example, aligned with the
/// input order. Subset sizes are exact (largest-remainder rounding of the
/// ratios); the rng settles ties and the within-batch dealing order, so
/// distinct seeds give distinct but equally balanced splits.
pub fn sois_split<R: Rng + ?Sized>(
    labelsets: &[GenreSet],
    ratios: (f64, f64, f64),
    rng: &mut R,
) -> Result<Vec<Subset>> {
    if labelsets.is_empty() {
        return Err(Error::validation("cannot split an empty dataset"));
    }
    if let Some(i) = labelsets.iter().position(|s| s.is_empty()) {
        return Err(Error::validation(format!("example {i} has no labels")));
    }
    validate_ratios(ratios)?;
    let n = labelsets.len();
    let ratio_arr = [ratios.0, ratios.1, ratios.2];
    let initial_caps = capacities(n, ratios);
    let mut caps = initial_caps;

    let example_keys: Vec<Vec<LabelPairKey>> = labelsets.iter().map(|&s| keys_of(s)).collect();
    // Rosters in a BTreeMap so the fewest-examples tie-break (then lowest
    // key) is deterministic.
    let mut rosters: BTreeMap<LabelPairKey, Vec<usize>> = BTreeMap::new();
    for (i, keys) in example_keys.iter().enumerate() {
        for &k in keys {
            rosters.entry(k).or_default().push(i);
        }
    }
    let mut desired: HashMap<LabelPairKey, [f64; 3]> = rosters
        .iter()
        .map(|(&k, v)| {
            let total = v.len() as f64;
            (k, [ratio_arr[0] * total, ratio_arr[1] * total, ratio_arr[2] * total])
        })
        .collect();

    let mut assignment: Vec<Option<Subset>> = vec![None; n];
    let mut remaining = n;
    while remaining > 0 {
        let key = *rosters
            .iter()
            .filter(|(_, v)| !v.is_empty())
            .min_by_key(|(k, v)| (v.len(), **k))
            .expect("unassigned examples always retain at least one key")
            .0;
        let mut batch = rosters[&key].clone();
        batch.shuffle(rng);
        for ex in batch {
            if assignment[ex].is_some() {
                continue;
            }
            let want = desired[&key];
            // Largest remaining desired count among subsets with capacity.
            let best = SUBSETS
                .iter()
                .enumerate()
                .filter(|(s, _)| caps[*s] > 0)
                .map(|(s, _)| want[s])
                .fold(f64::NEG_INFINITY, f64::max);
            let mut candidates: Vec<usize> = (0..3)
                .filter(|&s| caps[s] > 0 && want[s] > best - 1e-9)
                .collect();
            if candidates.len() > 1 {
                // Tie: prefer the subset furthest behind its fill
                // schedule. Comparing raw remaining capacity would hand
                // every tie to train (it starts with 7x the slots of val)
                // and starve the small subsets.
                let frac = |s: usize| caps[s] as f64 / initial_caps[s] as f64;
                let best_frac =
                    candidates.iter().map(|&s| frac(s)).fold(f64::NEG_INFINITY, f64::max);
                candidates.retain(|&s| frac(s) > best_frac - 1e-12);
            }
            let chosen = if candidates.len() > 1 {
                candidates[rng.gen_range(0..candidates.len())]
            } else {
                candidates[0]
            };

            assignment[ex] = Some(SUBSETS[chosen]);
            caps[chosen] -= 1;
            remaining -= 1;
            for &k in &example_keys[ex] {
                desired.get_mut(&k).expect("key registered")[chosen] -= 1.0;
                rosters.get_mut(&k).expect("key registered").retain(|&e| e != ex);
            }
        }
    }

    let mut assignment: Vec<Subset> =
        assignment.into_iter().map(|s| s.expect("all assigned")).collect();
    swap_repair(labelsets, &mut assignment);
    Ok(assignment)
}

/// Retouch marginals by swapping examples between subsets; sizes are
/// preserved exactly. Greedy best-improvement on the summed squared
/// per-genre proportion deviations, stopping at `REPAIR_TOLERANCE` on the
/// worst cell. Deterministic: fixed scan order, strict improvement only.
fn swap_repair(labelsets: &[GenreSet], assignment: &mut [Subset]) {
    let n = labelsets.len();
    let mut sizes = [0.0f64; 3];
    for &s in assignment.iter() {
        sizes[subset_index(s)] += 1.0;
    }
    if sizes.contains(&0.0) {
        return;
    }
    let mut counts = [[0f64; 3]; GENRE_COUNT];
    for (ls, &s) in labelsets.iter().zip(assignment.iter()) {
        for g in ls.indices() {
            counts[g][subset_index(s)] += 1.0;
        }
    }
    let global: Vec<f64> = (0..GENRE_COUNT)
        .map(|g| labelsets.iter().filter(|s| s.contains(g)).count() as f64 / n as f64)
        .collect();
    let objective = |counts: &[[f64; 3]; GENRE_COUNT]| -> f64 {
        let mut sum = 0.0;
        for g in 0..GENRE_COUNT {
            for s in 0..3 {
                let dev = counts[g][s] / sizes[s] - global[g];
                sum += dev * dev;
            }
        }
        sum
    };
    for _ in 0..MAX_REPAIR_SWAPS {
        let worst = (0..GENRE_COUNT)
            .flat_map(|g| (0..3).map(move |s| (g, s)))
            .map(|(g, s)| (counts[g][s] / sizes[s] - global[g]).abs())
            .fold(0.0f64, f64::max);
        if worst <= REPAIR_TOLERANCE {
            break;
        }
        let current = objective(&counts);
        let mut best: Option<(usize, usize, f64)> = None;
        for a in 0..n {
            let sa = subset_index(assignment[a]);
            for b in (a + 1)..n {
                let sb = subset_index(assignment[b]);
                if sa == sb || labelsets[a] == labelsets[b] {
                    continue;
                }
                let mut trial = counts;
                for g in labelsets[a].indices() {
                    trial[g][sa] -= 1.0;
                    trial[g][sb] += 1.0;
                }
                for g in labelsets[b].indices() {
                    trial[g][sb] -= 1.0;
                    trial[g][sa] += 1.0;
                }
                let delta = objective(&trial) - current;
                if delta < best.map_or(-1e-12, |(_, _, d)| d) {
                    best = Some((a, b, delta));
                }
            }
        }
        let Some((a, b, _)) = best else { break };
        let (sa, sb) = (subset_index(assignment[a]), subset_index(assignment[b]));
        for g in labelsets[a].indices() {
            counts[g][sa] -= 1.0;
            counts[g][sb] += 1.0;
        }
        for g in labelsets[b].indices() {
            counts[g][sb] -= 1.0;
            counts[g][sa] += 1.0;
        }
        assignment.swap(a, b);
    }
}

/// Baseline splitter: shuffle and deal to the same exact capacities, with
/// no attention to labels. Used to measure what stratification buys.
pub fn uniform_split<R: Rng + ?Sized>(
    n: usize,
    ratios: (f64, f64, f64),
    rng: &mut R,
) -> Result<Vec<Subset>> {
    if n == 0 {
        return Err(Error::validation("cannot split an empty dataset"));
    }
    validate_ratios(ratios)?;
    let caps = capacities(n, ratios);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut assignment = vec![Subset::Train; n];
    let mut at = 0;
    for (s, &cap) in caps.iter().enumerate() {
        for &i in &order[at..at + cap] {
            assignment[i] = SUBSETS[s];
        }
        at += cap;
    }
    Ok(assignment)
}

/// Three independent stratified folds from one root seed.
pub fn make_folds(
    labelsets: &[GenreSet],
    n_folds: usize,
    ratios: (f64, f64, f64),
    seed: u64,
) -> Result<Vec<Vec<Subset>>> {
    if n_folds == 0 {
        return Err(Error::validation("need at least one fold"));
    }
    (0..n_folds)
        .map(|fold| {
            let mut rng = rng_for(seed, &format!("split/fold{fold}"));
            sois_split(labelsets, ratios, &mut rng)
        })
        .collect()
}

/// Largest per-genre, per-subset deviation from the global genre
/// proportion (in absolute proportion units).
pub fn max_genre_deviation(labelsets: &[GenreSet], assignment: &[Subset]) -> f64 {
    assert_eq!(labelsets.len(), assignment.len());
    let n = labelsets.len() as f64;
    let mut worst = 0.0f64;
    for g in 0..GENRE_COUNT {
        let global = labelsets.iter().filter(|s| s.contains(g)).count() as f64 / n;
        for subset in SUBSETS {
            let members = assignment.iter().filter(|&&s| s == subset).count();
            if members == 0 {
                continue;
            }
            let with_genre = labelsets
                .iter()
                .zip(assignment)
                .filter(|(ls, &s)| s == subset && ls.contains(g))
                .count();
            worst = worst.max((with_genre as f64 / members as f64 - global).abs());
        }
    }
    worst
}

/// Mean labels per example.
pub fn label_cardinality(labelsets: &[GenreSet]) -> Result<f64> {
    if labelsets.is_empty() {
        return Err(Error::validation("no label sets"));
    }
    Ok(labelsets.iter().map(|s| s.len() as f64).sum::<f64>() / labelsets.len() as f64)
}

/// Cardinality normalized by the vocabulary size.
pub fn label_density(labelsets: &[GenreSet]) -> Result<f64> {
    Ok(label_cardinality(labelsets)? / GENRE_COUNT as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenreStats {
    pub counts: [usize; GENRE_COUNT],
    pub proportions: [f64; GENRE_COUNT],
    /// Symmetric matrix; diagonal holds the per-genre counts.
    pub co_occurrence: [[usize; GENRE_COUNT]; GENRE_COUNT],
}

pub fn genre_stats(labelsets: &[GenreSet]) -> Result<GenreStats> {
    if labelsets.is_empty() {
        return Err(Error::validation("no label sets"));
    }
    let mut counts = [0usize; GENRE_COUNT];
    let mut co = [[0usize; GENRE_COUNT]; GENRE_COUNT];
    for set in labelsets {
        let idx: Vec<usize> = set.indices().collect();
        for &g in &idx {
            counts[g] += 1;
            co[g][g] += 1;
        }
        for i in 0..idx.len() {
            for j in i + 1..idx.len() {
                co[idx[i]][idx[j]] += 1;
                co[idx[j]][idx[i]] += 1;
            }
        }
    }
    let n = labelsets.len() as f64;
    let mut proportions = [0.0; GENRE_COUNT];
    for g in 0..GENRE_COUNT {
        proportions[g] = counts[g] as f64 / n;
    }
    Ok(GenreStats { counts, proportions, co_occurrence: co })
}

pub fn co_occurrence_to_csv(stats: &GenreStats) -> String {
    let mut out = String::from("genre");
    for name in GENRES {
        out.push(',');
        out.push_str(name);
    }
    out.push('\n');
    for (g, name) in GENRES.iter().enumerate() {
        out.push_str(name);
        for h in 0..GENRE_COUNT {
            out.push_str(&format!(",{}", stats.co_occurrence[g][h]));
        }
        out.push('\n');
    }
    out
}

/// One row of a split file: which subset a trailer lands in for a fold.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitRecord {
    pub trailer_id: String,
    pub fold: usize,
    pub subset: Subset,
}

pub const SPLIT_HEADER: &str = "trailer_id,fold,subset";

pub fn splits_to_csv(records: &[SplitRecord]) -> String {
    let mut out = String::from(SPLIT_HEADER);
    out.push('\n');
    for r in records {
        out.push_str(&format!("{},{},{}\n", r.trailer_id, r.fold, r.subset));
    }
    out
}

/// Parse a split CSV. The header row is optional; blank lines are skipped.
pub fn parse_split_csv(text: &str) -> Result<Vec<SplitRecord>> {
    let mut records = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line == SPLIT_HEADER {
            continue;
        }
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 3 {
            return Err(Error::parse(lineno + 1, format!("expected 3 fields, got {}", parts.len())));
        }
        let trailer_id = parts[0].trim().to_string();
        if trailer_id.is_empty() {
            return Err(Error::parse(lineno + 1, "empty trailer id"));
        }
        let fold: usize = parts[1]
            .trim()
            .parse()
            .map_err(|_| Error::parse(lineno + 1, format!("bad fold index {:?}", parts[1])))?;
        let subset: Subset = parts[2]
            .trim()
            .parse()
            .map_err(|_| Error::parse(lineno + 1, format!("bad subset {:?}", parts[2])))?;
        records.push(SplitRecord { trailer_id, fold, subset });
    }
    Ok(records)
}

pub fn write_splits(path: &Path, records: &[SplitRecord]) -> Result<()> {
    std::fs::write(path, splits_to_csv(records))?;
    Ok(())
}

pub fn read_splits(path: &Path) -> Result<Vec<SplitRecord>> {
    let text = std::fs::read_to_string(path)?;
    parse_split_csv(&text)
}

/// Ids of one fold grouped by subset, in file order.
pub fn fold_members(records: &[SplitRecord], fold: usize) -> (Vec<String>, Vec<String>, Vec<String>) {
    let mut train = Vec::new();
    let mut val = Vec::new();
    let mut test = Vec::new();
    for r in records.iter().filter(|r| r.fold == fold) {
        match r.subset {
            Subset::Train => train.push(r.trailer_id.clone()),
            Subset::Val => val.push(r.trailer_id.clone()),
            Subset::Test => test.push(r.trailer_id.clone()),
        }
    }
    (train, val, test)
}
