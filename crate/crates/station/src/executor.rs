//! Restricted task executor.
//!
//! Only the compiled-in task kinds run here. The executor gets the model
//! state and a read-only view of the dataset, performs no I/O, and is
//! deterministic in its inputs; the hop timestamp is passed in.

use padme_core::canonical::Timestamp;
use padme_core::types::{AnalysisTask, ModelState};
use padme_tasks::runner::{apply_update, check_schema};
use padme_tasks::LocalDataset;

use crate::error::StationError;

pub fn execute_task(
    task: &AnalysisTask,
    state: &ModelState,
    dataset: &LocalDataset,
    station_id: &str,
    at: Timestamp,
) -> Result<ModelState, StationError> {
    if state.task_kind != task.kind {
        return Err(StationError::TaskFailure(format!(
            "state holds a {:?} model, task is {:?}",
            state.task_kind, task.kind
        )));
    }
    check_schema(task, dataset.schema_id())?;
    let update = apply_update(task, &state.payload, dataset)?;
    let mut next = state.clone();
    next.payload = update.payload;
    next.record_hop(station_id, update.record_count, at);
    Ok(next)
}
