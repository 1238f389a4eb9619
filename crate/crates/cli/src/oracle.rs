//! Single-machine reference computations the harness compares the
//! distributed run against. They share no training code with the tasks
//! crate.

use std::collections::BTreeMap;
use std::sync::OnceLock;

use padme_core::canonical::Real;
use padme_tasks::NbState;
use regex::Regex;

fn word_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"[\p{Alphabetic}\p{N}]+").expect("valid regex"))
}

pub fn oracle_tokens(text: &str) -> Vec<String> {
    word_regex().find_iter(text).map(|m| m.as_str().to_lowercase()).collect()
}

/// Naive Bayes counts over all documents at once, with tokens whose total
/// count is below `min_token_count` dropped.
pub fn centralized_nb<'a>(
    docs: impl IntoIterator<Item = (&'a str, &'a str)>,
    labels: &[String],
    alpha: f64,
    min_token_count: u64,
) -> NbState {
    let mut class_doc_counts: BTreeMap<String, u64> = labels.iter().map(|l| (l.clone(), 0)).collect();
    let mut token_counts: BTreeMap<String, BTreeMap<String, u64>> =
        labels.iter().map(|l| (l.clone(), BTreeMap::new())).collect();
    for (text, label) in docs {
        *class_doc_counts.get_mut(label).expect("known label") += 1;
        let per_class = token_counts.get_mut(label).expect("known label");
        for token in oracle_tokens(text) {
            *per_class.entry(token).or_default() += 1;
        }
    }
    let mut totals: BTreeMap<String, u64> = BTreeMap::new();
    for per_class in token_counts.values() {
        for (token, count) in per_class {
            *totals.entry(token.clone()).or_default() += count;
        }
    }
    for per_class in token_counts.values_mut() {
        per_class.retain(|token, _| totals[token] >= min_token_count);
    }
    let total_tokens = token_counts.iter().map(|(l, m)| (l.clone(), m.values().sum())).collect();
    NbState {
        class_doc_counts,
        token_counts,
        total_tokens,
        alpha: Real::from(alpha),
    }
}

/// Multinomial naive Bayes decision with Laplace smoothing; ties go to the
/// first label in order.
pub fn nb_oracle_predict(state: &NbState, text: &str) -> String {
    let docs: u64 = state.class_doc_counts.values().sum();
    let mut vocabulary = std::collections::BTreeSet::new();
    for per_class in state.token_counts.values() {
        vocabulary.extend(per_class.keys());
    }
    let v = vocabulary.len() as f64;
    let alpha = state.alpha.get();
    let tokens = oracle_tokens(text);
    let mut best = (String::new(), f64::NEG_INFINITY);
    for (label, &n) in &state.class_doc_counts {
        if n == 0 {
            continue;
        }
        let mut score = (n as f64 / docs as f64).ln();
        if v > 0.0 {
            let counts = &state.token_counts[label];
            let total = state.total_tokens[label] as f64;
            for t in &tokens {
                let c = counts.get(t).copied().unwrap_or(0) as f64;
                score += ((c + alpha) / (total + alpha * v)).ln();
            }
        }
        if score > best.1 {
            best = (label.clone(), score);
        }
    }
    best.0
}

/// Plain per-row logistic regression SGD: `epochs` passes over each
/// partition, partitions in route order.
pub fn sequential_sgd(partitions: &[Vec<(Vec<f64>, f64)>], dimension: usize, lr: f64, epochs: u32) -> (Vec<f64>, f64) {
    let mut w = vec![0.0; dimension];
    let mut b = 0.0;
    for rows in partitions {
        for _ in 0..epochs {
            for (x, y) in rows {
                let z: f64 = w.iter().zip(x).map(|(wi, xi)| wi * xi).sum::<f64>() + b;
                let p = 1.0 / (1.0 + (-z).exp());
                let g = p - y;
                for (wi, xi) in w.iter_mut().zip(x) {
                    *wi -= lr * g * xi;
                }
                b -= lr * g;
            }
        }
    }
    (w, b)
}

pub fn logistic_probability(w: &[f64], b: f64, x: &[f64]) -> f64 {
    let z: f64 = w.iter().zip(x).map(|(wi, xi)| wi * xi).sum::<f64>() + b;
    1.0 / (1.0 + (-z).exp())
}

/// Largest `|a - b| / max(|a|, |b|)` over paired values; equal values,
/// including two zeros, count as zero error.
pub fn max_relative_error(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| if x == y { 0.0 } else { (x - y).abs() / x.abs().max(y.abs()) })
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn regex_tokens_match_the_task_tokenizer() {
        for text in ["Good, GREAT!", "a1-b2", "Über-gut", "  ", "x::Y::z", "déjà vu 42"] {
            assert_eq!(oracle_tokens(text), padme_tasks::tokenize(text), "{text}");
        }
    }

    #[test]
    fn hand_counted_model() {
        let labels = vec!["neg".to_string(), "pos".to_string()];
        let s = centralized_nb([("good good", "pos"), ("bad", "neg"), ("good fun", "pos")], &labels, 1.0, 1);
        assert_eq!(s.class_doc_counts["pos"], 2);
        assert_eq!(s.token_counts["pos"]["good"], 3);
        assert_eq!(s.total_tokens["pos"], 4);
        assert_eq!(s.total_tokens["neg"], 1);
        assert_eq!(nb_oracle_predict(&s, "good"), "pos");
        assert_eq!(nb_oracle_predict(&s, "bad bad"), "neg");
        let pruned = centralized_nb([("good good", "pos"), ("bad", "neg"), ("good fun", "pos")], &labels, 1.0, 2);
        assert!(pruned.token_counts["neg"].is_empty());
        assert_eq!(pruned.total_tokens["pos"], 3);
    }

    #[test]
    fn one_sgd_step_by_hand() {
        let (w, b) = sequential_sgd(&[vec![(vec![1.0, 2.0], 1.0)]], 2, 0.1, 1);
        // p = 0.5 at zero weights, gradient -0.5 * x.
        assert_eq!(w, vec![0.05, 0.1]);
        assert_eq!(b, 0.05);
        assert_eq!(max_relative_error(&[0.0, 2.0], &[0.0, 1.0]), 0.5);
    }
}
