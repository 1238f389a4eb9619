//! Seeded synthetic fixtures for scenarios.
//!
//! Sentiment documents mix polarity words into neutral filler. Author
//! mention pairs are drawn from a pool of synthetic identities: positives
//! are two perturbed mentions of one identity, negatives pair mentions of
//! different identities, often sharing a surname.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Map, Value};

const POSITIVE: &[&str] = &[
    "great", "excellent", "wonderful", "delightful", "superb", "enjoyable", "brilliant", "charming", "moving",
    "fantastic", "lovely", "gripping", "memorable", "fresh", "clever",
];
const NEGATIVE: &[&str] = &[
    "awful", "boring", "terrible", "dull", "clumsy", "tedious", "weak", "painful", "bland", "messy", "annoying",
    "forgettable", "flat", "lifeless", "dreadful",
];
const NEUTRAL: &[&str] = &[
    "the", "movie", "film", "plot", "actor", "scene", "story", "music", "camera", "ending", "was", "is", "a", "an",
    "and", "with", "director", "script", "cast", "screen", "this", "that", "of", "in", "it", "role", "dialogue",
    "pace", "set", "character",
];

const FIRST: &[&str] = &[
    "Anna", "Bernd", "Carla", "Daniel", "Elena", "Felix", "Greta", "Hans", "Ines", "Jonas", "Karin", "Lukas",
    "Maria", "Nils", "Olga", "Peter", "Quinn", "Rosa", "Stefan", "Tanja", "Ulrich", "Vera", "Walter", "Xenia",
    "Yusuf", "Zoe", "Amir", "Bianca", "Chen", "Dara",
];
const LAST: &[&str] = &[
    "Schmidt", "Weber", "Wagner", "Becker", "Hoffmann", "Koch", "Richter", "Klein", "Wolf", "Neumann", "Braun",
    "Zimmermann", "Hartmann", "Lange", "Krause",
];
const TOPICS: &[&str] = &[
    "federated", "learning", "privacy", "semantic", "graph", "ontology", "query", "embedding", "clinical", "imaging",
    "genomics", "sensor", "stream", "retrieval", "ranking", "citation", "bibliometric", "scholarly", "knowledge",
    "reasoning", "neural", "bayesian", "inference", "distributed", "storage", "blockchain", "secure", "encryption",
    "workflow", "provenance", "metadata", "linked", "data", "web", "mining", "clustering", "classification",
    "entity", "resolution", "disambiguation", "transformer", "language", "speech", "vision", "robotics", "control",
    "optimization", "scheduling", "network", "wireless", "cloud", "edge", "container", "health", "patient",
    "trial", "survival", "regression", "sampling", "benchmark",
];
const VENUES: &[&str] = &[
    "Journal of Data Science", "Semantic Web Conference", "Health Informatics Review", "Machine Learning Letters",
    "Knowledge Graph Workshop", "Distributed Systems Symposium", "Digital Libraries Conference",
    "Privacy Engineering Forum", "Bioinformatics Annual", "Information Retrieval Meeting", "Web Mining Congress",
    "Applied Statistics Review",
];

pub fn rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

fn pick<'a>(rng: &mut ChaCha8Rng, words: &[&'a str]) -> &'a str {
    words.choose(rng).expect("non-empty word list")
}

const SYLLABLES: &[&str] = &[
    "ka", "lo", "mi", "ne", "ru", "ta", "vo", "zi", "be", "du", "fa", "go", "hu", "je", "po", "sa",
];

/// A made-up word from 2-4 syllables; most occur once in a corpus, which
/// gives exit control a long tail of rare tokens to prune.
fn rare_word(rng: &mut ChaCha8Rng) -> String {
    (0..rng.gen_range(2..=4)).map(|_| pick(rng, SYLLABLES)).collect()
}

/// One labelled movie-review style document.
pub fn sentiment_doc(rng: &mut ChaCha8Rng) -> Map<String, Value> {
    let positive = rng.gen_bool(0.5);
    let (own, other) = if positive { (POSITIVE, NEGATIVE) } else { (NEGATIVE, POSITIVE) };
    let len = rng.gen_range(8..=20);
    let mut words = Vec::with_capacity(len);
    for _ in 0..len {
        let roll: f64 = rng.gen();
        let mut word = if roll < 0.3 {
            pick(rng, own).to_string()
        } else if roll < 0.38 {
            pick(rng, other).to_string()
        } else if roll < 0.42 {
            rare_word(rng)
        } else {
            pick(rng, NEUTRAL).to_string()
        };
        if rng.gen_bool(0.1) {
            word = word.to_uppercase();
        }
        if rng.gen_bool(0.1) {
            word.push(*[',', '!', '.', ';'].choose(rng).expect("punctuation"));
        }
        words.push(word);
    }
    let label = if positive { "pos" } else { "neg" };
    json!({"text": words.join(" "), "label": label}).as_object().expect("object").clone()
}

pub fn sentiment_corpus(n: usize, seed: u64, stream: u64) -> Vec<Map<String, Value>> {
    let mut rng = rng(seed, stream);
    (0..n).map(|_| sentiment_doc(&mut rng)).collect()
}

#[derive(Debug, Clone)]
struct Identity {
    first: &'static str,
    middle: char,
    last: &'static str,
    coauthors: Vec<String>,
    topics: Vec<&'static str>,
    venues: Vec<&'static str>,
    base_year: i64,
}

fn identity_pool(rng: &mut ChaCha8Rng, size: usize) -> Vec<Identity> {
    (0..size)
        .map(|_| Identity {
            first: pick(rng, FIRST),
            middle: (b'A' + rng.gen_range(0..26u8)) as char,
            last: pick(rng, LAST),
            coauthors: (0..6).map(|_| format!("{} {}", pick(rng, FIRST), pick(rng, LAST))).collect(),
            topics: TOPICS.choose_multiple(rng, 8).copied().collect(),
            venues: VENUES.choose_multiple(rng, 2).copied().collect(),
            base_year: rng.gen_range(1975..=2015),
        })
        .collect()
}

struct Mention {
    name: String,
    coauthors: Vec<String>,
    title: String,
    year: i64,
    venue: String,
}

fn typo(rng: &mut ChaCha8Rng, word: &str) -> String {
    let mut chars: Vec<char> = word.chars().collect();
    if chars.len() > 3 {
        let i = rng.gen_range(1..chars.len() - 1);
        chars.swap(i, i + 1);
    }
    chars.into_iter().collect()
}

fn mention(rng: &mut ChaCha8Rng, who: &Identity) -> Mention {
    let last = if rng.gen_bool(0.1) { typo(rng, who.last) } else { who.last.to_string() };
    let name = match rng.gen_range(0..4) {
        0 => format!("{} {}", who.first, last),
        1 => format!("{}. {}", &who.first[..1], last),
        2 => format!("{} {}. {}", who.first, who.middle, last),
        _ => format!("{} {}", who.first.to_lowercase(), last),
    };
    let k = rng.gen_range(2..=4);
    let coauthors = who.coauthors.choose_multiple(rng, k).cloned().collect();
    let len = rng.gen_range(5..=8);
    let title = (0..len)
        .map(|_| if rng.gen_bool(0.6) { *who.topics.choose(rng).expect("topics") } else { pick(rng, TOPICS) })
        .collect::<Vec<_>>()
        .join(" ");
    let venue = if rng.gen_bool(0.85) { *who.venues.choose(rng).expect("venues") } else { pick(rng, VENUES) };
    Mention {
        name,
        coauthors,
        title,
        year: (who.base_year + rng.gen_range(-5..=5)).clamp(1950, 2025),
        venue: venue.to_string(),
    }
}

fn pair_row(a: Mention, b: Mention, same: bool) -> Map<String, Value> {
    json!({
        "name_a": a.name, "name_b": b.name,
        "coauthors_a": a.coauthors, "coauthors_b": b.coauthors,
        "title_a": a.title, "title_b": b.title,
        "year_a": a.year, "year_b": b.year,
        "venue_a": a.venue, "venue_b": b.venue,
        "same_author": if same { "1" } else { "0" },
    })
    .as_object()
    .expect("object")
    .clone()
}

/// Balanced candidate pairs. The identity pool depends only on `seed`, so
/// every stream draws mentions of the same people.
pub fn and_pairs(n: usize, seed: u64, stream: u64) -> Vec<Map<String, Value>> {
    let pool = identity_pool(&mut rng(seed, 0), 60);
    let mut rng = rng(seed, stream);
    (0..n)
        .map(|_| {
            let a = rng.gen_range(0..pool.len());
            if rng.gen_bool(0.5) {
                let (x, y) = (mention(&mut rng, &pool[a]), mention(&mut rng, &pool[a]));
                return pair_row(x, y, true);
            }
            let namesakes: Vec<usize> =
                (0..pool.len()).filter(|&i| i != a && pool[i].last == pool[a].last).collect();
            let b = if !namesakes.is_empty() && rng.gen_bool(0.4) {
                *namesakes.choose(&mut rng).expect("non-empty")
            } else {
                loop {
                    let b = rng.gen_range(0..pool.len());
                    if b != a {
                        break b;
                    }
                }
            };
            let (x, y) = (mention(&mut rng, &pool[a]), mention(&mut rng, &pool[b]));
            pair_row(x, y, false)
        })
        .collect()
}

/// A fresh canary: upper-case hex between `::` separators, so no tokenizer
/// or featurizer can reproduce it from its parts.
pub fn canary(seed: u64) -> String {
    let value: u64 = rng(seed, 99).gen();
    format!("CANARY::{value:016X}::PADME")
}

/// Plants `canary` into a free-text field of every row.
pub fn plant_canary(rows: &mut [Map<String, Value>], canary: &str) {
    for row in rows {
        for field in ["text", "title_a"] {
            if let Some(Value::String(s)) = row.get_mut(field) {
                s.push(' ');
                s.push_str(canary);
                break;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use padme_tasks::{DatasetSchema, LocalDataset};

    use super::*;

    #[test]
    fn fixtures_validate_and_repeat() {
        let docs = sentiment_corpus(50, 7, 1);
        assert_eq!(docs, sentiment_corpus(50, 7, 1));
        assert_ne!(docs, sentiment_corpus(50, 7, 2));
        LocalDataset::new(DatasetSchema::sentiment(), docs).unwrap();
        let pairs = and_pairs(80, 7, 1);
        assert_eq!(pairs, and_pairs(80, 7, 1));
        let ds = LocalDataset::new(DatasetSchema::and_pairs(), pairs).unwrap();
        let positives = ds.and_pairs().unwrap().iter().filter(|p| p.same_author == "1").count();
        assert!((20..=60).contains(&positives));
    }

    #[test]
    fn canary_is_planted_once_per_row() {
        let c = canary(3);
        let mut docs = sentiment_corpus(5, 1, 1);
        plant_canary(&mut docs, &c);
        assert!(docs.iter().all(|d| d["text"].as_str().unwrap().matches(&c).count() == 1));
        let mut pairs = and_pairs(5, 1, 1);
        plant_canary(&mut pairs, &c);
        assert!(pairs.iter().all(|d| d["title_a"].as_str().unwrap().ends_with(&c)));
        assert!(padme_tasks::tokenize(&c).iter().all(|t| !t.contains(&c)));
    }
}
