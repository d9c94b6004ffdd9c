//! Synthetic French review corpora for demos, smoke tests and protocol dry
//! runs.
//!
//! Texts are assembled from per-label phrase pools, so labels are learnable
//! from the text. [`table2_surrogate`] additionally matches the per-app label
//! counts of the published dataset exactly; it is a stand-in with the same
//! shape, not the published reviews.

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::io::slug;
use super::{reference, Corpus, Label, LabelCounts, LabelSet, LabeledReview, Review};

const RATING: &[&str] = &[
    "Très bien",
    "Super application",
    "Application nulle",
    "Je recommande",
    "Excellente appli",
    "Pas terrible",
    "Bonne application",
    "Top",
    "Très déçu",
    "Parfait",
    "Nul, à éviter",
    "Génial",
    "Bof, sans plus",
    "Application très complète",
    "Franchement décevant",
    "Très bon produit",
    "Je suis satisfait",
    "Une horreur",
];

const BUG: &[&str] = &[
    "l'application plante au démarrage",
    "impossible de synchroniser ma montre",
    "les données ont disparu depuis la mise à jour",
    "message d'erreur à chaque connexion",
    "la connexion bluetooth se coupe sans arrêt",
    "le suivi du sommeil ne fonctionne plus",
    "l'appli se ferme toute seule",
    "les pas ne sont plus comptés",
    "bug d'affichage sur l'écran d'accueil",
    "la synchronisation reste bloquée",
    "elle ne fonctionne plus: message d'erreur téléphone rooté",
    "impossible de me connecter à mon compte",
    "le GPS perd le signal pendant la course",
];

const FEATURE: &[&str] = &[
    "il faudrait ajouter un mode sombre",
    "ce serait bien de pouvoir exporter les données",
    "merci d'ajouter un widget pour la montre",
    "pourriez-vous ajouter le suivi de l'hydratation",
    "il manque une fonction pour arrêter de fumer",
    "j'aimerais pouvoir personnaliser les objectifs",
    "ajoutez la compatibilité avec Strava svp",
    "il serait utile d'avoir des rappels de pause",
    "est-il possible d'ajouter une version en français des conseils",
    "nous voudrions un partage avec le médecin",
];

const EXPERIENCE: &[&str] = &[
    "elle m'aide à rester actif tous les jours",
    "je l'utilise pour suivre mes marches",
    "son système de défi permet de bien se motiver à marcher",
    "grâce à elle je dors mieux",
    "je suis mes séances de course depuis un an",
    "pratique pour surveiller mon rythme cardiaque",
    "cette appli prend bien en compte les trajets",
    "elle m'aide à perdre du poids",
    "elle aide à faire plus d'activités",
    "je consulte mes statistiques chaque matin",
];

const TAILS: &[&str] = &[
    "",
    "",
    "",
    " depuis la dernière mise à jour",
    " sur mon téléphone",
    " avec ma montre",
    " merci",
    " dommage",
    " vraiment",
];

fn pool(label: Label) -> &'static [&'static str] {
    match label {
        Label::Rating => RATING,
        Label::BugReport => BUG,
        Label::FeatureRequest => FEATURE,
        Label::UserExperience => EXPERIENCE,
    }
}

/// A French review text whose content reflects `labels`.
pub fn review_text(labels: &LabelSet, rng: &mut impl Rng) -> String {
    let mut parts: Vec<&str> = labels
        .labels()
        .map(|l| *pool(l).choose(rng).expect("non-empty pool"))
        .collect();
    parts.shuffle(rng);
    let tail = TAILS.choose(rng).expect("non-empty tails");
    let mut text = parts.join(". ");
    text.push_str(tail);
    text.push(if rng.random_bool(0.2) { '!' } else { '.' });
    let mut chars = text.chars();
    match chars.next() {
        Some(first) => first.to_uppercase().chain(chars).collect(),
        None => text,
    }
}

/// Label sets for `total` reviews with exactly `counts` positives per label,
/// every review carrying at least one label. Requires `counts[l] <= total`
/// and `sum(counts) >= total`.
pub fn label_sets_with_counts(counts: &LabelCounts, rng: &mut impl Rng) -> Vec<LabelSet> {
    let n = counts.total;
    assert!(counts.counts.iter().all(|&c| c <= n), "count exceeds total");
    assert!(
        counts.counts.iter().sum::<usize>() >= n,
        "not enough labels to cover every review"
    );
    let mut sets = vec![LabelSet::default(); n];
    let mut order: Vec<usize> = (0..n).collect();
    for label in Label::ALL {
        order.shuffle(rng);
        for &i in &order[..counts.get(label)] {
            sets[i].set(label, true);
        }
    }
    // Move a label from a multi-label review onto each uncovered review; this
    // keeps every per-label count unchanged.
    let uncovered: Vec<usize> = (0..n).filter(|&i| sets[i].is_empty()).collect();
    for target in uncovered {
        let donors: Vec<(usize, Label)> = (0..n)
            .filter(|&i| sets[i].len() >= 2)
            .flat_map(|i| sets[i].labels().map(move |l| (i, l)).collect::<Vec<_>>())
            .collect();
        let &(donor, label) = donors.choose(rng).expect("sum of counts >= total");
        sets[donor].set(label, false);
        sets[target].set(label, true);
    }
    sets
}

fn build(apps: &[(&str, LabelCounts)], rng: &mut ChaCha8Rng) -> Corpus {
    let mut entries = Vec::new();
    for (app, counts) in apps {
        let sets = label_sets_with_counts(counts, rng);
        for (i, labels) in sets.into_iter().enumerate() {
            let text = review_text(&labels, rng);
            let mut review = Review::new(format!("{}-{i}", slug(app)), *app, text);
            review.store_score = Some(rng.random_range(1..=5));
            entries.push(LabeledReview::new(review, labels));
        }
    }
    Corpus::new(entries).expect("generated corpus satisfies invariants")
}

/// 6000 synthetic reviews, 2000 per app, with exactly the published per-app
/// label counts.
pub fn table2_surrogate(seed: u64) -> Corpus {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    build(&reference::LABEL_COUNTS, &mut rng)
}

/// Small corpus with `per_app` reviews for each app. Label prevalences are
/// roughly (0.6, 0.4, 0.2, 0.25).
pub fn toy_corpus(apps: &[&str], per_app: usize, seed: u64) -> Corpus {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let prevalence = [0.6, 0.4, 0.2, 0.25];
    let specs: Vec<(&str, LabelCounts)> = apps
        .iter()
        .map(|&app| {
            let mut counts = LabelCounts {
                total: per_app,
                counts: prevalence.map(|p| ((p * per_app as f64).round() as usize).max(1)),
            };
            // keep the generator's coverage precondition for tiny corpora
            let deficit = per_app.saturating_sub(counts.counts.iter().sum());
            counts.counts[0] = (counts.counts[0] + deficit).min(per_app);
            for c in counts.counts.iter_mut() {
                *c = (*c).min(per_app);
            }
            (app, counts)
        })
        .collect();
    build(&specs, &mut rng)
}

/// A corpus with the given label prevalences for one app, used to probe
/// stratification quality.
pub fn corpus_with_prevalence(n: usize, prevalence: [f64; 4], seed: u64) -> Corpus {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let counts = LabelCounts {
        total: n,
        counts: prevalence.map(|p| (p * n as f64).round() as usize),
    };
    build(&[("Synthetic", counts)], &mut rng)
}
