//! Pairwise features for author name disambiguation.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::tokenize::tokenize;

pub const AND_FEATURE_COUNT: usize = 6;
pub const AND_FEATURE_SPEC_ID: &str = "and-pairs-v1";

/// One candidate pair of author mentions; `same_author` is `"1"` when both
/// mentions refer to the same person.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AndPairRecord {
    pub name_a: String,
    pub name_b: String,
    #[serde(default)]
    pub coauthors_a: Vec<String>,
    #[serde(default)]
    pub coauthors_b: Vec<String>,
    #[serde(default)]
    pub title_a: String,
    #[serde(default)]
    pub title_b: String,
    pub year_a: i64,
    pub year_b: i64,
    #[serde(default)]
    pub venue_a: String,
    #[serde(default)]
    pub venue_b: String,
    pub same_author: String,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AndPairFeatures(pub [f64; AND_FEATURE_COUNT]);

impl AndPairFeatures {
    pub const NAMES: [&'static str; AND_FEATURE_COUNT] = [
        "name_similarity",
        "initials_match",
        "coauthor_jaccard",
        "title_jaccard",
        "year_gap",
        "venue_jaccard",
    ];

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

fn jaccard<T: Ord>(a: &BTreeSet<T>, b: &BTreeSet<T>) -> f64 {
    let union = a.union(b).count();
    if union == 0 {
        return 0.0;
    }
    a.intersection(b).count() as f64 / union as f64
}

fn token_set(text: &str) -> BTreeSet<String> {
    tokenize(text).into_iter().collect()
}

fn name_similarity(a: &str, b: &str) -> f64 {
    let a = a.to_lowercase();
    let b = b.to_lowercase();
    let longest = a.chars().count().max(b.chars().count());
    if longest == 0 {
        return 1.0;
    }
    1.0 - strsim::levenshtein(&a, &b) as f64 / longest as f64
}

fn initials(name: &str) -> String {
    tokenize(name).iter().filter_map(|t| t.chars().next()).collect()
}

pub fn and_featurize(record: &AndPairRecord) -> AndPairFeatures {
    let coauthors = |list: &[String]| -> BTreeSet<String> {
        list.iter().map(|c| c.trim().to_lowercase()).filter(|c| !c.is_empty()).collect()
    };
    let initials_a = initials(&record.name_a);
    let initials_match = if !initials_a.is_empty() && initials_a == initials(&record.name_b) { 1.0 } else { 0.0 };
    let year_gap = ((record.year_a - record.year_b).unsigned_abs() as f64 / 50.0).min(1.0);
    AndPairFeatures([
        name_similarity(&record.name_a, &record.name_b),
        initials_match,
        jaccard(&coauthors(&record.coauthors_a), &coauthors(&record.coauthors_b)),
        jaccard(&token_set(&record.title_a), &token_set(&record.title_b)),
        year_gap,
        jaccard(&token_set(&record.venue_a), &token_set(&record.venue_b)),
    ])
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    fn record(name_a: &str, name_b: &str) -> AndPairRecord {
        AndPairRecord {
            name_a: name_a.into(),
            name_b: name_b.into(),
            coauthors_a: vec![],
            coauthors_b: vec![],
            title_a: String::new(),
            title_b: String::new(),
            year_a: 2000,
            year_b: 2000,
            venue_a: String::new(),
            venue_b: String::new(),
            same_author: "0".into(),
        }
    }

    fn edit_distance(a: &[char], b: &[char]) -> usize {
        match (a.split_first(), b.split_first()) {
            (None, _) => b.len(),
            (_, None) => a.len(),
            (Some((ca, ra)), Some((cb, rb))) => {
                let substitute = edit_distance(ra, rb) + usize::from(ca != cb);
                substitute.min(edit_distance(ra, b) + 1).min(edit_distance(a, rb) + 1)
            }
        }
    }

    #[test]
    fn name_similarity_matches_recursive_oracle() {
        let a: Vec<char> = "j smith".chars().collect();
        let b: Vec<char> = "j. smith".chars().collect();
        let oracle = 1.0 - edit_distance(&a, &b) as f64 / 8.0;
        assert_eq!(oracle, 0.875);
        let f = and_featurize(&record("J Smith", "J. Smith"));
        assert!((f.0[0] - oracle).abs() < 1e-12);
        assert_eq!(f.0[1], 1.0);
        for (x, y) in [("anna", "hanna"), ("kitten", "sitting"), ("", "abc"), ("Lee", "Li")] {
            let (cx, cy): (Vec<char>, Vec<char>) = (x.to_lowercase().chars().collect(), y.to_lowercase().chars().collect());
            let longest = cx.len().max(cy.len()) as f64;
            let oracle = 1.0 - edit_distance(&cx, &cy) as f64 / longest;
            assert!((and_featurize(&record(x, y)).0[0] - oracle).abs() < 1e-12, "{x} / {y}");
        }
    }

    #[test]
    fn identical_and_disjoint_records() {
        let same = AndPairRecord {
            coauthors_a: vec!["B Jones".into(), "C Wu".into()],
            coauthors_b: vec!["b jones".into(), "C Wu".into()],
            title_a: "Learning to rank".into(),
            title_b: "learning to RANK".into(),
            venue_a: "Data Mining Conference".into(),
            venue_b: "data mining conference".into(),
            ..record("Maria Garcia", "Maria Garcia")
        };
        assert_eq!(and_featurize(&same).0, [1.0, 1.0, 1.0, 1.0, 0.0, 1.0]);

        let apart = AndPairRecord {
            coauthors_a: vec!["X".into()],
            coauthors_b: vec!["Y".into()],
            title_a: "alpha beta".into(),
            title_b: "gamma delta".into(),
            year_a: 1900,
            year_b: 2020,
            venue_a: "one".into(),
            venue_b: "two".into(),
            ..record("abc", "xyz")
        };
        assert_eq!(and_featurize(&apart).0, [0.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
    }

    #[test]
    fn empty_fields() {
        let f = and_featurize(&record("", ""));
        assert_eq!(f.0, [1.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        let mut r = record("A B", "A B");
        r.year_b = 2025;
        assert!((and_featurize(&r).0[4] - 0.5).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn features_are_bounded(
            na in ".{0,12}", nb in ".{0,12}",
            ca in prop::collection::vec("[a-z ]{0,6}", 0..4),
            cb in prop::collection::vec("[a-z ]{0,6}", 0..4),
            ta in ".{0,30}", tb in ".{0,30}",
            ya in -3000i64..3000, yb in -3000i64..3000,
        ) {
            let r = AndPairRecord {
                coauthors_a: ca, coauthors_b: cb, title_a: ta.clone(), title_b: tb.clone(),
                year_a: ya, year_b: yb, venue_a: tb, venue_b: ta,
                ..record(&na, &nb)
            };
            for v in and_featurize(&r).0 {
                prop_assert!(v.is_finite() && (0.0..=1.0).contains(&v));
            }
        }
    }
}
