//! Multi-label stratified train/validation/test splitting.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::EvalError;
use crate::corpus::{Corpus, Label};

/// Smallest corpus the splitter accepts.
pub const MIN_SPLIT_SIZE: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Part {
    Train,
    Val,
    Test,
}

impl Part {
    pub const ALL: [Part; 3] = [Part::Train, Part::Val, Part::Test];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Part::Train => "train",
            Part::Val => "val",
            Part::Test => "test",
        }
    }
}

/// Train/val/test fractions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Fractions(pub [f64; 3]);

impl Default for Fractions {
    fn default() -> Self {
        Fractions([0.6, 0.2, 0.2])
    }
}

impl Fractions {
    pub fn validate(&self) -> Result<(), EvalError> {
        if self.0.iter().any(|f| !(0.0..=1.0).contains(f)) {
            return Err(EvalError::Argument(format!("fractions {:?} outside [0, 1]", self.0)));
        }
        let sum: f64 = self.0.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(EvalError::Argument(format!(
                "fractions {:?} sum to {sum}, not 1",
                self.0
            )));
        }
        Ok(())
    }

    /// Integer part sizes summing to `n` (largest remainder rounding).
    pub fn sizes(&self, n: usize) -> [usize; 3] {
        let exact = self.0.map(|f| f * n as f64);
        let mut sizes = exact.map(|x| x.floor() as usize);
        let mut order = [0, 1, 2];
        order.sort_by(|&a, &b| {
            let ra = exact[a] - exact[a].floor();
            let rb = exact[b] - exact[b].floor();
            rb.total_cmp(&ra).then(a.cmp(&b))
        });
        let missing = n - sizes.iter().sum::<usize>();
        for &i in order.iter().take(missing) {
            sizes[i] += 1;
        }
        sizes
    }
}

/// Which part each corpus entry belongs to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitAssignment {
    pub seed: u64,
    pub fractions: Fractions,
    /// Review ids in corpus order.
    pub ids: Vec<String>,
    /// Part of `ids[i]`.
    pub parts: Vec<Part>,
}

impl SplitAssignment {
    /// Corpus positions assigned to `part`, ascending.
    pub fn indices(&self, part: Part) -> Vec<usize> {
        (0..self.parts.len()).filter(|&i| self.parts[i] == part).collect()
    }

    pub fn part_of(&self, id: &str) -> Option<Part> {
        self.ids.iter().position(|x| x == id).map(|i| self.parts[i])
    }

    pub fn sizes(&self) -> [usize; 3] {
        let mut s = [0; 3];
        for p in &self.parts {
            s[p.index()] += 1;
        }
        s
    }

    /// SHA-256 over `id<TAB>part` lines, identifying the split in manifests.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        for (id, part) in self.ids.iter().zip(&self.parts) {
            h.update(id.as_bytes());
            h.update(b"\t");
            h.update(part.name().as_bytes());
            h.update(b"\n");
        }
        hex::encode(h.finalize())
    }
}

/// Iterative stratification over the four labels.
///
/// Repeatedly takes the label with the fewest unassigned positives and
/// deals those reviews, in seeded random order, to the part furthest below
/// its quota for that label; ties go to the part with the most room left,
/// then to a seeded random choice. Full parts are skipped, so part sizes
/// are exact. Reviews without labels are dealt last by remaining room.
/// Size limits can leave the most common label unevenly spread, so the
/// result is then polished by prevalence-improving swaps between parts.
pub fn stratified_split(
    corpus: &Corpus,
    fractions: Fractions,
    seed: u64,
) -> Result<SplitAssignment, EvalError> {
    fractions.validate()?;
    let n = corpus.len();
    if n < MIN_SPLIT_SIZE {
        return Err(EvalError::Argument(format!(
            "cannot stratify {n} reviews; at least {MIN_SPLIT_SIZE} required"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let flags: Vec<[bool; 4]> = corpus.iter().map(|e| e.labels.flags()).collect();

    let mut room = fractions.sizes(n).map(|s| s as f64);
    let mut label_quota = [[0.0f64; 4]; 3];
    for l in 0..4 {
        let positives = flags.iter().filter(|f| f[l]).count() as f64;
        for p in 0..3 {
            label_quota[p][l] = fractions.0[p] * positives;
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let mut assigned: Vec<Option<Part>> = vec![None; n];
    let mut remaining = n;

    let place = |i: usize,
                     label: Option<usize>,
                     room: &mut [f64; 3],
                     label_quota: &mut [[f64; 4]; 3],
                     assigned: &mut Vec<Option<Part>>,
                     rng: &mut ChaCha8Rng| {
        let open: Vec<usize> = (0..3).filter(|&p| room[p] >= 1.0).collect();
        let key = |p: usize| (label.map_or(0.0, |l| label_quota[p][l]), room[p]);
        let best = open
            .iter()
            .map(|&p| key(p))
            .fold((f64::NEG_INFINITY, f64::NEG_INFINITY), |a, b| if b > a { b } else { a });
        let ties: Vec<usize> = open.into_iter().filter(|&p| key(p) == best).collect();
        let p = ties[rng.random_range(0..ties.len())];
        assigned[i] = Some(Part::ALL[p]);
        room[p] -= 1.0;
        for l in 0..4 {
            if flags[i][l] {
                label_quota[p][l] -= 1.0;
            }
        }
    };

    while remaining > 0 {
        let mut pending = [0usize; 4];
        for &i in &order {
            if assigned[i].is_none() {
                for l in 0..4 {
                    pending[l] += usize::from(flags[i][l]);
                }
            }
        }
        let label = (0..4).filter(|&l| pending[l] > 0).min_by_key(|&l| (pending[l], l));
        let batch: Vec<usize> = order
            .iter()
            .copied()
            .filter(|&i| assigned[i].is_none() && label.is_none_or(|l| flags[i][l]))
            .collect();
        for i in batch {
            place(i, label, &mut room, &mut label_quota, &mut assigned, &mut rng);
            remaining -= 1;
        }
    }

    let mut parts: Vec<usize> = assigned
        .into_iter()
        .map(|p| p.expect("every review placed").index())
        .collect();
    refine(&flags, &mut parts, &order);
    Ok(SplitAssignment {
        seed,
        fractions,
        ids: corpus.iter().map(|e| e.id().to_string()).collect(),
        parts: parts.into_iter().map(|p| Part::ALL[p]).collect(),
    })
}

fn label_code(f: &[bool; 4]) -> usize {
    f.iter().enumerate().map(|(l, &b)| usize::from(b) << l).sum()
}

/// Pairwise swaps between parts that lower the summed squared deviation of
/// each part's label prevalence from the global prevalence. Swaps keep part
/// sizes fixed. Reviews are interchangeable within a label combination, so
/// the search runs over combinations and moves the first matching review in
/// the seeded `order`.
fn refine(flags: &[[bool; 4]], parts: &mut [usize], order: &[usize]) {
    let n = flags.len() as f64;
    let mut members = vec![vec![0usize; 16]; 3];
    for (i, f) in flags.iter().enumerate() {
        members[parts[i]][label_code(f)] += 1;
    }
    let size: Vec<f64> = (0..3).map(|p| members[p].iter().sum::<usize>() as f64).collect();
    let global: Vec<f64> = (0..4)
        .map(|l| flags.iter().filter(|f| f[l]).count() as f64 / n)
        .collect();
    let mut counts = [[0f64; 4]; 3];
    for (i, f) in flags.iter().enumerate() {
        for l in 0..4 {
            if f[l] {
                counts[parts[i]][l] += 1.0;
            }
        }
    }
    let bit = |code: usize, l: usize| ((code >> l) & 1) as f64;
    let cost = |p: usize, c: &[f64; 4]| -> f64 {
        if size[p] == 0.0 {
            return 0.0;
        }
        (0..4).map(|l| (c[l] / size[p] - global[l]).powi(2)).sum()
    };
    loop {
        let mut best: Option<(f64, usize, usize, usize, usize)> = None;
        for a in 0..3 {
            for b in a + 1..3 {
                let before = cost(a, &counts[a]) + cost(b, &counts[b]);
                for s in 0..16 {
                    if members[a][s] == 0 {
                        continue;
                    }
                    for t in 0..16 {
                        if s == t || members[b][t] == 0 {
                            continue;
                        }
                        let mut ca = counts[a];
                        let mut cb = counts[b];
                        for l in 0..4 {
                            let d = bit(t, l) - bit(s, l);
                            ca[l] += d;
                            cb[l] -= d;
                        }
                        let gain = before - cost(a, &ca) - cost(b, &cb);
                        if gain > 1e-12 && best.is_none_or(|(g, ..)| gain > g) {
                            best = Some((gain, a, b, s, t));
                        }
                    }
                }
            }
        }
        let Some((_, a, b, s, t)) = best else { break };
        let i = *order
            .iter()
            .find(|&&i| parts[i] == a && label_code(&flags[i]) == s)
            .expect("member exists");
        let j = *order
            .iter()
            .find(|&&j| parts[j] == b && label_code(&flags[j]) == t)
            .expect("member exists");
        parts[i] = b;
        parts[j] = a;
        members[a][s] -= 1;
        members[b][s] += 1;
        members[b][t] -= 1;
        members[a][t] += 1;
        for l in 0..4 {
            let d = bit(t, l) - bit(s, l);
            counts[a][l] += d;
            counts[b][l] -= d;
        }
    }
}

/// Share of reviews carrying `label` among the given corpus positions.
pub fn prevalence(corpus: &Corpus, indices: &[usize], label: Label) -> f64 {
    if indices.is_empty() {
        return 0.0;
    }
    let pos = indices
        .iter()
        .filter(|&&i| corpus.entries()[i].labels.get(label))
        .count();
    pos as f64 / indices.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{synth, LabelSet, LabeledReview, Review};
    use proptest::prelude::*;
    use std::collections::HashSet;

    #[test]
    fn sizes_use_largest_remainder() {
        let f = Fractions::default();
        assert_eq!(f.sizes(6000), [3600, 1200, 1200]);
        assert_eq!(f.sizes(5), [3, 1, 1]);
        assert_eq!(f.sizes(7), [4, 2, 1]);
        assert_eq!(f.sizes(4000), [2400, 800, 800]);
    }

    #[test]
    fn rejects_tiny_corpora_and_bad_fractions() {
        let c = synth::toy_corpus(&["A"], 4, 0);
        assert!(matches!(stratified_split(&c, Fractions::default(), 0), Err(EvalError::Argument(_))));
        let c = synth::toy_corpus(&["A"], 10, 0);
        assert!(stratified_split(&c, Fractions([0.5, 0.2, 0.2]), 0).is_err());
        assert!(stratified_split(&c, Fractions([1.2, -0.1, -0.1]), 0).is_err());
    }

    #[test]
    fn identical_label_sets_give_exact_random_split() {
        let entries: Vec<_> = (0..50)
            .map(|i| {
                LabeledReview::new(
                    Review::new(format!("r{i}"), "A", "Super appli"),
                    LabelSet::of(&[Label::Rating]),
                )
            })
            .collect();
        let c = Corpus::new(entries).unwrap();
        let a = stratified_split(&c, Fractions::default(), 1).unwrap();
        let b = stratified_split(&c, Fractions::default(), 2).unwrap();
        assert_eq!(a.sizes(), [30, 10, 10]);
        assert_ne!(a.parts, b.parts);
    }

    #[test]
    fn prevalence_probe_over_seeds() {
        let prev = [0.6, 0.4, 0.1, 0.2];
        for seed in 0..50 {
            let c = synth::corpus_with_prevalence(200, prev, seed);
            let s = stratified_split(&c, Fractions::default(), seed).unwrap();
            let all: Vec<usize> = (0..c.len()).collect();
            for part in Part::ALL {
                let idx = s.indices(part);
                for (l, label) in Label::ALL.into_iter().enumerate() {
                    let global = prevalence(&c, &all, label);
                    let local = prevalence(&c, &idx, label);
                    let tol = if l == 2 { 0.05 } else { 0.02 };
                    assert!(
                        (global - local).abs() <= tol + 1e-12,
                        "seed {seed} {part:?} {label:?}: {local} vs {global}"
                    );
                }
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(40))]
        #[test]
        fn partition_is_total_disjoint_and_deterministic(n in 5usize..120, seed in any::<u64>()) {
            let c = synth::toy_corpus(&["A", "B"], n.div_ceil(2), seed % 1000);
            let s = stratified_split(&c, Fractions::default(), seed).unwrap();
            prop_assert_eq!(s.parts.len(), c.len());
            prop_assert_eq!(s.sizes(), Fractions::default().sizes(c.len()));
            let mut seen = HashSet::new();
            for part in Part::ALL {
                for i in s.indices(part) {
                    prop_assert!(seen.insert(i));
                }
            }
            prop_assert_eq!(seen.len(), c.len());
            let again = stratified_split(&c, Fractions::default(), seed).unwrap();
            prop_assert_eq!(s.digest(), again.digest());
        }
    }
}
