//! Multinomial naive Bayes over exact integer counts.
//!
//! Updates are pure addition, so training over partitions `P1..Pk` in any
//! order yields the same state as training once over their concatenation.
//! The vocabulary is whatever the state has seen so far and grows per hop.

use std::collections::{BTreeMap, BTreeSet};

use padme_core::canonical::{canonical_deserialize, canonical_serialize, Real};
use serde::{Deserialize, Serialize};

use crate::error::TaskError;
use crate::tokenize::tokenize;

pub const DEFAULT_ALPHA: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NbState {
    pub class_doc_counts: BTreeMap<String, u64>,
    pub token_counts: BTreeMap<String, BTreeMap<String, u64>>,
    pub total_tokens: BTreeMap<String, u64>,
    pub alpha: Real,
}

impl NbState {
    /// Empty model over a fixed label set.
    pub fn new<I, S>(labels: I, alpha: f64) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let labels: Vec<String> = labels.into_iter().map(Into::into).collect();
        Self {
            class_doc_counts: labels.iter().map(|l| (l.clone(), 0)).collect(),
            token_counts: labels.iter().map(|l| (l.clone(), BTreeMap::new())).collect(),
            total_tokens: labels.iter().map(|l| (l.clone(), 0)).collect(),
            alpha: Real::from(alpha),
        }
    }

    pub fn labels(&self) -> impl Iterator<Item = &str> {
        self.class_doc_counts.keys().map(String::as_str)
    }

    pub fn document_count(&self) -> u64 {
        self.class_doc_counts.values().sum()
    }

    /// Union vocabulary across classes.
    pub fn vocabulary(&self) -> BTreeSet<&str> {
        self.token_counts
            .values()
            .flat_map(|m| m.keys().map(String::as_str))
            .collect()
    }

    pub fn token_totals(&self) -> BTreeMap<&str, u64> {
        let mut totals = BTreeMap::new();
        for per_class in self.token_counts.values() {
            for (token, count) in per_class {
                *totals.entry(token.as_str()).or_insert(0) += count;
            }
        }
        totals
    }

    /// Drop every token whose total count across classes is below
    /// `min_total`. Returns the pruned model and the number of distinct
    /// tokens removed.
    pub fn pruned(&self, min_total: u64) -> (NbState, usize) {
        let keep: BTreeSet<String> = self
            .token_totals()
            .into_iter()
            .filter(|(_, total)| *total >= min_total)
            .map(|(t, _)| t.to_string())
            .collect();
        let removed = self.vocabulary().len() - keep.len();
        let mut out = self.clone();
        for (label, per_class) in out.token_counts.iter_mut() {
            per_class.retain(|token, _| keep.contains(token));
            out.total_tokens.insert(label.clone(), per_class.values().sum());
        }
        (out, removed)
    }

    pub fn check_invariants(&self) -> Result<(), TaskError> {
        for (label, per_class) in &self.token_counts {
            let sum: u64 = per_class.values().sum();
            if self.total_tokens.get(label) != Some(&sum) {
                return Err(TaskError::Payload(format!("total_tokens for `{label}` out of sync")));
            }
            if per_class.values().any(|c| *c == 0) {
                return Err(TaskError::Payload("zero token count stored".into()));
            }
        }
        let labels: BTreeSet<&String> = self.class_doc_counts.keys().collect();
        if labels != self.token_counts.keys().collect() || labels != self.total_tokens.keys().collect() {
            return Err(TaskError::Payload("label sets disagree".into()));
        }
        if !(self.alpha.get() > 0.0) {
            return Err(TaskError::Payload("alpha must be positive".into()));
        }
        Ok(())
    }

    pub fn to_payload(&self) -> Vec<u8> {
        canonical_serialize(self).expect("finite alpha")
    }

    pub fn from_payload(bytes: &[u8]) -> Result<Self, TaskError> {
        let state: NbState =
            canonical_deserialize(bytes).map_err(|e| TaskError::Payload(e.to_string()))?;
        state.check_invariants()?;
        Ok(state)
    }
}

/// Add labelled documents to the counts.
pub fn nb_update<I, T, L>(state: &NbState, docs: I) -> Result<NbState, TaskError>
where
    I: IntoIterator<Item = (T, L)>,
    T: AsRef<str>,
    L: AsRef<str>,
{
    let mut next = state.clone();
    for (text, label) in docs {
        let label = label.as_ref();
        let Some(doc_count) = next.class_doc_counts.get_mut(label) else {
            return Err(TaskError::UnknownLabel(label.to_string()));
        };
        *doc_count += 1;
        let tokens = tokenize(text.as_ref());
        let per_class = next.token_counts.get_mut(label).expect("label sets agree");
        for token in &tokens {
            *per_class.entry(token.clone()).or_insert(0) += 1;
        }
        *next.total_tokens.get_mut(label).expect("label sets agree") += tokens.len() as u64;
    }
    Ok(next)
}

#[derive(Debug, Clone, PartialEq)]
pub struct NbPrediction {
    pub label: String,
    /// Normalized log-posterior per class; classes without documents get
    /// negative infinity.
    pub log_posteriors: BTreeMap<String, f64>,
}

impl NbPrediction {
    pub fn posterior(&self, label: &str) -> f64 {
        self.log_posteriors.get(label).map(|lp| lp.exp()).unwrap_or(0.0)
    }
}

/// Most probable label for `text`, with ties going to the lexicographically
/// smallest label.
pub fn nb_predict(state: &NbState, text: &str) -> Result<NbPrediction, TaskError> {
    let total_docs = state.document_count();
    if total_docs == 0 {
        return Err(TaskError::EmptyModel);
    }
    let alpha = state.alpha.get();
    let vocab = state.vocabulary().len() as f64;
    let tokens = tokenize(text);

    let mut joint = BTreeMap::new();
    for (label, &docs) in &state.class_doc_counts {
        if docs == 0 {
            joint.insert(label.clone(), f64::NEG_INFINITY);
            continue;
        }
        let mut score = (docs as f64).ln() - (total_docs as f64).ln();
        // With an empty vocabulary every class scores each token identically,
        // so the likelihood cancels and only the prior matters.
        if vocab > 0.0 {
            let per_class = &state.token_counts[label];
            let denom = (state.total_tokens[label] as f64 + alpha * vocab).ln();
            for token in &tokens {
                let count = per_class.get(token).copied().unwrap_or(0) as f64;
                score += (count + alpha).ln() - denom;
            }
        }
        joint.insert(label.clone(), score);
    }

    let max = joint.values().copied().fold(f64::NEG_INFINITY, f64::max);
    let log_norm = max + joint.values().map(|s| (s - max).exp()).sum::<f64>().ln();
    let mut best: Option<(&String, f64)> = None;
    for (label, score) in &joint {
        if best.map_or(true, |(_, b)| *score > b) {
            best = Some((label, *score));
        }
    }
    let label = best.expect("at least one class").0.clone();
    let log_posteriors = joint.into_iter().map(|(l, s)| (l, s - log_norm)).collect();
    Ok(NbPrediction { label, log_posteriors })
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    fn toy() -> NbState {
        let docs = [
            ("good great", "pos"),
            ("good", "pos"),
            ("bad", "neg"),
            ("bad good", "neg"),
        ];
        nb_update(&NbState::new(["neg", "pos"], 1.0), docs).unwrap()
    }

    #[test]
    fn single_document_counts() {
        let s = nb_update(&NbState::new(["neg", "pos"], 1.0), [("good movie", "pos")]).unwrap();
        assert_eq!(s.class_doc_counts["pos"], 1);
        assert_eq!(s.token_counts["pos"]["good"], 1);
        assert_eq!(s.token_counts["pos"]["movie"], 1);
        assert_eq!(s.total_tokens["pos"], 2);
        assert_eq!(s.class_doc_counts["neg"], 0);
    }

    #[test]
    fn empty_update_is_identity() {
        let s = toy();
        let empty: [(&str, &str); 0] = [];
        assert_eq!(nb_update(&s, empty).unwrap(), s);
    }

    #[test]
    fn unknown_label() {
        let err = nb_update(&NbState::new(["neg", "pos"], 1.0), [("x", "meh")]).unwrap_err();
        assert_eq!(err, TaskError::UnknownLabel("meh".into()));
    }

    #[test]
    fn one_class_dominance() {
        let s = nb_update(&NbState::new(["neg", "pos"], 1.0), [("good", "pos")]).unwrap();
        assert_eq!(nb_predict(&s, "good").unwrap().label, "pos");
    }

    #[test]
    fn hand_computed_posteriors() {
        // pos: 2 docs, {good:2, great:1}, 3 tokens; neg: 2 docs, {bad:2, good:1},
        // 3 tokens; V = 3, alpha = 1 so every denominator is 3 + 3 = 6.
        // "good bad": pos = 1/2 * 3/6 * 1/6 = 1/24, neg = 1/2 * 2/6 * 3/6 = 1/12.
        let p = nb_predict(&toy(), "good bad").unwrap();
        assert_eq!(p.label, "neg");
        assert!((p.log_posteriors["pos"] - (1.0f64 / 3.0).ln()).abs() < 1e-12);
        assert!((p.log_posteriors["neg"] - (2.0f64 / 3.0).ln()).abs() < 1e-12);

        // "great": pos = 1/2 * 2/6, neg = 1/2 * 1/6.
        let p = nb_predict(&toy(), "great").unwrap();
        assert_eq!(p.label, "pos");
        assert!((p.log_posteriors["pos"] - (2.0f64 / 3.0).ln()).abs() < 1e-12);
    }

    #[test]
    fn ties_go_to_smallest_label() {
        // An unseen token scores 1/6 in both classes and the priors are equal.
        let p = nb_predict(&toy(), "zzz").unwrap();
        assert_eq!(p.label, "neg");
        assert!((p.log_posteriors["neg"] - 0.5f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn empty_text_uses_prior() {
        let s = nb_update(&toy(), [("good", "pos")]).unwrap();
        let p = nb_predict(&s, "").unwrap();
        assert_eq!(p.label, "pos");
        assert!((p.posterior("pos") - 3.0 / 5.0).abs() < 1e-12);
    }

    #[test]
    fn empty_model() {
        assert_eq!(
            nb_predict(&NbState::new(["neg", "pos"], 1.0), "x").unwrap_err(),
            TaskError::EmptyModel
        );
    }

    #[test]
    fn pruning_keeps_totals_consistent() {
        let (pruned, removed) = toy().pruned(2);
        // totals: good 3, bad 2, great 1
        assert_eq!(removed, 1);
        assert!(!pruned.vocabulary().contains("great"));
        assert_eq!(pruned.total_tokens["pos"], 2);
        pruned.check_invariants().unwrap();
    }

    #[test]
    fn payload_round_trip() {
        let s = toy();
        assert_eq!(NbState::from_payload(&s.to_payload()).unwrap(), s);
    }

    fn corpus() -> impl Strategy<Value = Vec<(String, bool)>> {
        let word = prop::sample::select(vec!["good", "bad", "fine", "awful", "movie", "plot", "x1", "Ünï"]);
        let doc = prop::collection::vec(word, 0..8).prop_map(|w| w.join(" "));
        prop::collection::vec((doc, any::<bool>()), 0..60)
    }

    proptest! {
        #[test]
        fn partitions_equal_concatenation(
            docs in corpus(),
            cuts in prop::collection::vec(any::<prop::sample::Index>(), 0..4),
            order_seed in any::<u64>(),
        ) {
            let labelled: Vec<(String, &str)> = docs
                .iter()
                .map(|(t, pos)| (t.clone(), if *pos { "pos" } else { "neg" }))
                .collect();
            let mut bounds: Vec<usize> = cuts.iter().map(|i| i.index(labelled.len() + 1)).collect();
            bounds.push(0);
            bounds.push(labelled.len());
            bounds.sort_unstable();
            let mut parts: Vec<&[(String, &str)]> =
                bounds.windows(2).map(|w| &labelled[w[0]..w[1]]).collect();
            // Visit partitions in a scrambled order.
            let k = parts.len();
            parts.rotate_left((order_seed as usize) % k);
            if order_seed % 2 == 1 {
                parts.reverse();
            }

            let init = NbState::new(["neg", "pos"], 1.0);
            let mut distributed = init.clone();
            for part in parts {
                distributed = nb_update(&distributed, part.iter().map(|(t, l)| (t.as_str(), *l))).unwrap();
            }
            let central = nb_update(&init, labelled.iter().map(|(t, l)| (t.as_str(), *l))).unwrap();
            prop_assert_eq!(&distributed, &central);
            if central.document_count() > 0 {
                for probe in ["good plot", "awful", "", "unseen words"] {
                    prop_assert_eq!(nb_predict(&distributed, probe).unwrap(), nb_predict(&central, probe).unwrap());
                }
            }
        }

        #[test]
        fn posteriors_normalize(docs in corpus(), probe in "[a-z ]{0,30}") {
            let s = nb_update(
                &NbState::new(["neg", "pos"], 0.5),
                docs.iter().map(|(t, p)| (t.as_str(), if *p { "pos" } else { "neg" })),
            ).unwrap();
            prop_assume!(s.document_count() > 0);
            let p = nb_predict(&s, &probe).unwrap();
            let total: f64 = p.log_posteriors.values().map(|lp| lp.exp()).sum();
            prop_assert!((total - 1.0).abs() < 1e-9);
        }

        #[test]
        fn raising_the_floor_never_grows_the_vocabulary(docs in corpus(), floor in 1u64..6) {
            let s = nb_update(
                &NbState::new(["neg", "pos"], 1.0),
                docs.iter().map(|(t, p)| (t.as_str(), if *p { "pos" } else { "neg" })),
            ).unwrap();
            let (low, _) = s.pruned(floor);
            let (high, _) = s.pruned(floor + 1);
            prop_assert!(high.vocabulary().len() <= low.vocabulary().len());
        }
    }
}
