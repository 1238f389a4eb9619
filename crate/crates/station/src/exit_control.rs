//! Final-hop exit control.
//!
//! Checks run in order: minimum aggregated records, the per-token count
//! floor (tokens below it are pruned first), and the allowed output
//! categories. Release requires all three to pass after pruning.

use padme_core::types::{CheckOutcome, ExitControlOutcome, ExitControlPolicy, ReleasedParams, ResultSummary};

pub const CHECK_MIN_RECORDS: &str = "min_records";
pub const CHECK_MIN_TOKEN_COUNT: &str = "min_token_count";
pub const CHECK_ALLOWED_OUTPUTS: &str = "allowed_outputs";

/// Prunes `summary` in place and returns the check outcome; the report is
/// also stored in `summary.exit_control_report`.
pub fn exit_control_check(summary: &mut ResultSummary, policy: &ExitControlPolicy) -> ExitControlOutcome {
    let mut report = Vec::with_capacity(3);

    report.push(CheckOutcome {
        check: CHECK_MIN_RECORDS.into(),
        passed: summary.total_records >= policy.min_records,
        detail: format!("{} aggregated records, minimum {}", summary.total_records, policy.min_records),
    });

    let mut pruned = 0usize;
    if let Some(ReleasedParams::NaiveBayes { token_counts, .. }) = summary.released_params.as_mut() {
        let totals = {
            let mut totals = std::collections::BTreeMap::<String, u64>::new();
            for per_class in token_counts.values() {
                for (token, count) in per_class {
                    *totals.entry(token.clone()).or_insert(0) += count;
                }
            }
            totals
        };
        pruned = totals.values().filter(|t| **t < policy.min_token_count).count();
        for per_class in token_counts.values_mut() {
            per_class.retain(|token, _| totals[token] >= policy.min_token_count);
        }
    }
    let floor_holds = summary
        .released_params
        .as_ref()
        .map_or(true, |p| p.token_totals().values().all(|c| *c >= policy.min_token_count));
    report.push(CheckOutcome {
        check: CHECK_MIN_TOKEN_COUNT.into(),
        passed: floor_holds,
        detail: format!("{pruned} tokens below {} pruned", policy.min_token_count),
    });

    let outputs = summary.output_categories();
    let disallowed: Vec<String> = outputs
        .iter()
        .filter(|o| !policy.allowed_outputs.contains(o))
        .map(|o| format!("{o:?}"))
        .collect();
    report.push(CheckOutcome {
        check: CHECK_ALLOWED_OUTPUTS.into(),
        passed: disallowed.is_empty(),
        detail: if disallowed.is_empty() {
            "all outputs allowed".into()
        } else {
            format!("not allowed: {}", disallowed.join(", "))
        },
    });

    let passed = report.iter().all(|c| c.passed);
    summary.exit_control_report = report.clone();
    ExitControlOutcome { passed, report }
}

#[cfg(test)]
mod tests {
    use std::collections::{BTreeMap, BTreeSet};

    use padme_core::canonical::Real;
    use padme_core::types::{OutputKind, TaskKind};

    use super::*;

    fn nb_summary(total_records: u64, tokens: &[(&str, &str, u64)]) -> ResultSummary {
        let mut token_counts: BTreeMap<String, BTreeMap<String, u64>> = BTreeMap::new();
        for (label, token, count) in tokens {
            token_counts.entry(label.to_string()).or_default().insert(token.to_string(), *count);
        }
        ResultSummary {
            task_kind: TaskKind::NbSentiment,
            metrics: BTreeMap::new(),
            released_params: Some(ReleasedParams::NaiveBayes {
                class_doc_counts: [("neg".to_string(), 1), ("pos".to_string(), 1)].into(),
                token_counts,
                alpha: Real::from(1.0),
            }),
            total_records,
            exit_control_report: vec![],
        }
    }

    fn policy(min_records: u64, min_token_count: u64, allowed: &[OutputKind]) -> ExitControlPolicy {
        ExitControlPolicy {
            min_records,
            min_token_count,
            allowed_outputs: allowed.iter().copied().collect(),
        }
    }

    #[test]
    fn too_few_records() {
        let mut s = nb_summary(5, &[]);
        let out = exit_control_check(&mut s, &policy(25, 1, &[OutputKind::ModelParams]));
        assert!(!out.passed);
        assert!(!out.report[0].passed && out.report[0].check == "min_records");
        assert_eq!(s.exit_control_report, out.report);
    }

    #[test]
    fn rare_tokens_are_pruned_then_pass() {
        let tokens = [("pos", "good", 3), ("neg", "good", 1), ("pos", "rare", 1), ("neg", "meh", 2)];
        let mut s = nb_summary(30, &tokens);
        let out = exit_control_check(&mut s, &policy(25, 2, &[OutputKind::ModelParams]));
        assert!(out.passed);
        let kept: BTreeSet<String> = s.released_params.unwrap().token_totals().keys().map(|k| k.to_string()).collect();
        // Brute force: sum every token over classes, keep those >= 2.
        let mut totals: BTreeMap<&str, u64> = BTreeMap::new();
        for (_, t, c) in tokens {
            *totals.entry(t).or_default() += c;
        }
        let oracle: BTreeSet<String> = totals.iter().filter(|(_, c)| **c >= 2).map(|(t, _)| t.to_string()).collect();
        assert_eq!(kept, oracle);
        assert_eq!(out.report[1].detail, "1 tokens below 2 pruned");
    }

    #[test]
    fn disallowed_output() {
        let mut s = nb_summary(30, &[("pos", "a", 5)]);
        let out = exit_control_check(&mut s, &policy(1, 1, &[OutputKind::AggregateMetrics]));
        assert!(!out.passed);
        assert!(!out.report[2].passed);
        assert!(out.report[0].passed && out.report[1].passed);
    }

    #[test]
    fn raising_the_floor_never_grows_the_vocabulary() {
        let tokens: Vec<(String, u64)> = (0..40).map(|i| (format!("t{i}"), (i * 7 % 11) as u64 + 1)).collect();
        let refs: Vec<(&str, &str, u64)> = tokens.iter().map(|(t, c)| ("pos", t.as_str(), *c)).collect();
        let mut last = usize::MAX;
        for floor in 1..14 {
            let mut s = nb_summary(100, &refs);
            exit_control_check(&mut s, &policy(1, floor, &[OutputKind::ModelParams]));
            let size = s.released_params.unwrap().token_totals().len();
            assert!(size <= last);
            last = size;
        }
        assert_eq!(last, 0);
    }
}
