//! Task-kind dispatch: build the initial state, apply one hop's update,
//! evaluate and produce the released parameter view.

use std::collections::BTreeMap;

use padme_core::canonical::Real;
use padme_core::types::{AnalysisTask, ReleasedParams, TaskKind};

use crate::dataset::LocalDataset;
use crate::error::TaskError;
use crate::features::{and_featurize, AND_FEATURE_COUNT, AND_FEATURE_SPEC_ID};
use crate::metrics::{accuracy, auc};
use crate::naive_bayes::{nb_predict, nb_update, NbState, DEFAULT_ALPHA};
use crate::schema::{DatasetSchema, FieldType};
use crate::sgd::{sgd_predict, sgd_update, SgdState};

pub fn check_schema(task: &AnalysisTask, schema_id: &str) -> Result<(), TaskError> {
    if task.required_schema_id != schema_id {
        return Err(TaskError::SchemaMismatch {
            required: task.required_schema_id.clone(),
            found: schema_id.to_string(),
        });
    }
    Ok(())
}

/// The untrained model state for `task` over datasets of `schema`.
pub fn initial_payload(task: &AnalysisTask, schema: &DatasetSchema) -> Result<Vec<u8>, TaskError> {
    check_schema(task, &schema.schema_id)?;
    let hp = &task.hyperparameters;
    match task.kind {
        TaskKind::NbSentiment => {
            let alpha = hp.alpha.map_or(DEFAULT_ALPHA, Real::get);
            Ok(NbState::new(schema.label_values().iter().cloned(), alpha).to_payload())
        }
        TaskKind::SgdLogReg | TaskKind::AndPairwise => {
            let lr = hp.learning_rate.map(Real::get).ok_or_else(|| TaskError::TaskFailure("missing learning_rate".into()))?;
            let epochs = hp.epochs.ok_or_else(|| TaskError::TaskFailure("missing epochs".into()))?;
            let (d, spec) = if task.kind == TaskKind::AndPairwise {
                (AND_FEATURE_COUNT, AND_FEATURE_SPEC_ID)
            } else {
                let d = schema
                    .fields
                    .iter()
                    .filter(|f| matches!(f.field_type, FieldType::Integer | FieldType::Real))
                    .count();
                (d, schema.schema_id.as_str())
            };
            Ok(SgdState::zeros(d, lr, epochs, hp.seed, spec).to_payload())
        }
    }
}

/// Feature rows for the SGD task kinds, in file order.
pub fn training_rows(kind: TaskKind, dataset: &LocalDataset) -> Result<Vec<(Vec<f64>, f64)>, TaskError> {
    match kind {
        TaskKind::SgdLogReg => dataset.numeric_rows(),
        TaskKind::AndPairwise => Ok(dataset
            .and_pairs()?
            .iter()
            .map(|r| (and_featurize(r).0.to_vec(), if r.same_author == "1" { 1.0 } else { 0.0 }))
            .collect()),
        TaskKind::NbSentiment => Err(TaskError::TaskFailure("naive Bayes does not use feature rows".into())),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HopUpdate {
    pub payload: Vec<u8>,
    pub record_count: u64,
}

/// Train the model in `payload` on every labelled row of `dataset`.
pub fn apply_update(task: &AnalysisTask, payload: &[u8], dataset: &LocalDataset) -> Result<HopUpdate, TaskError> {
    check_schema(task, dataset.schema_id())?;
    match task.kind {
        TaskKind::NbSentiment => {
            let state = NbState::from_payload(payload)?;
            let docs = dataset.labeled_texts()?;
            let next = nb_update(&state, docs.iter().map(|(t, l)| (*t, l.as_str())))?;
            Ok(HopUpdate {
                payload: next.to_payload(),
                record_count: docs.len() as u64,
            })
        }
        TaskKind::SgdLogReg | TaskKind::AndPairwise => {
            let state = SgdState::from_payload(payload)?;
            let rows = training_rows(task.kind, dataset)?;
            let next = sgd_update(&state, &rows)?;
            Ok(HopUpdate {
                payload: next.to_payload(),
                record_count: rows.len() as u64,
            })
        }
    }
}

/// Accuracy, and AUC when both classes occur, of the model on `dataset`.
/// An untrained naive Bayes model yields no metrics.
pub fn evaluate(kind: TaskKind, payload: &[u8], dataset: &LocalDataset) -> Result<BTreeMap<String, f64>, TaskError> {
    let mut metrics = BTreeMap::new();
    let (predicted, actual, scores): (Vec<bool>, Vec<bool>, Vec<f64>) = match kind {
        TaskKind::NbSentiment => {
            let state = NbState::from_payload(payload)?;
            if state.document_count() == 0 {
                return Ok(metrics);
            }
            let positive = dataset.schema().label_values().last().cloned().unwrap_or_default();
            let mut out = (vec![], vec![], vec![]);
            for (text, label) in dataset.labeled_texts()? {
                let p = nb_predict(&state, text)?;
                out.0.push(p.label == positive);
                out.1.push(label == positive);
                out.2.push(p.posterior(&positive));
            }
            out
        }
        TaskKind::SgdLogReg | TaskKind::AndPairwise => {
            let state = SgdState::from_payload(payload)?;
            let mut out = (vec![], vec![], vec![]);
            for (x, y) in training_rows(kind, dataset)? {
                let p = sgd_predict(&state, &x)?;
                out.0.push(p >= 0.5);
                out.1.push(y == 1.0);
                out.2.push(p);
            }
            out
        }
    };
    if let Some(a) = accuracy(&predicted, &actual) {
        metrics.insert("accuracy".to_string(), a);
    }
    if let Some(a) = auc(&scores, &actual) {
        metrics.insert("auc".to_string(), a);
    }
    Ok(metrics)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Release {
    pub params: ReleasedParams,
    /// The model state after pruning; equal to the input for models without
    /// token-level parameters.
    pub payload: Vec<u8>,
    pub pruned_tokens: usize,
}

/// The researcher-facing parameter view, with tokens whose total count is
/// below `min_token_count` removed.
pub fn release(kind: TaskKind, payload: &[u8], min_token_count: u64) -> Result<Release, TaskError> {
    match kind {
        TaskKind::NbSentiment => {
            let (state, pruned_tokens) = NbState::from_payload(payload)?.pruned(min_token_count);
            Ok(Release {
                params: ReleasedParams::NaiveBayes {
                    class_doc_counts: state.class_doc_counts.clone(),
                    token_counts: state.token_counts.clone(),
                    alpha: state.alpha,
                },
                payload: state.to_payload(),
                pruned_tokens,
            })
        }
        TaskKind::SgdLogReg | TaskKind::AndPairwise => {
            let state = SgdState::from_payload(payload)?;
            Ok(Release {
                params: ReleasedParams::Logistic {
                    feature_spec_id: state.feature_spec_id.clone(),
                    weights: state.weights.iter().map(|w| Real::from(*w)).collect(),
                    bias: Real::from(state.bias),
                },
                payload: payload.to_vec(),
                pruned_tokens: 0,
            })
        }
    }
}
