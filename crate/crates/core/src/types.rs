//! Domain types shared by the service center, station agents and researchers.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::canonical::{b64, canonical_serialize, Real, Timestamp};
use crate::crypto::{Digest, KeyId, KeyPair, PublicKey};
use crate::error::ProtocolError;
use crate::route::Route;

/// Current `ModelState::schema_version`.
pub const MODEL_STATE_SCHEMA_VERSION: u32 = 1;

/// Domain-separated canonical message for signatures.
pub fn signing_message<T: Serialize>(domain: &str, value: &T) -> Result<Vec<u8>, ProtocolError> {
    let mut msg = domain.as_bytes().to_vec();
    msg.push(b'\n');
    msg.extend(canonical_serialize(value)?);
    Ok(msg)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StationDescriptor {
    pub station_id: String,
    pub public_key_id: KeyId,
    pub endpoint: String,
    pub schema_id: String,
    pub display_name: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TaskKind {
    NbSentiment,
    SgdLogReg,
    AndPairwise,
}

/// Task hyperparameters. Which keys are present depends on the task kind;
/// `seed` is always required.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyperparameters {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub learning_rate: Option<Real>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epochs: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<Real>,
    pub seed: u64,
}

impl Hyperparameters {
    pub fn naive_bayes(alpha: f64, seed: u64) -> Self {
        Self {
            learning_rate: None,
            epochs: None,
            alpha: Some(Real::from(alpha)),
            seed,
        }
    }

    pub fn sgd(learning_rate: f64, epochs: u32, seed: u64) -> Self {
        Self {
            learning_rate: Some(Real::from(learning_rate)),
            epochs: Some(epochs),
            alpha: None,
            seed,
        }
    }

    pub fn validate(&self, kind: TaskKind) -> Result<(), ProtocolError> {
        let invalid = |msg: String| Err(ProtocolError::Invalid(msg));
        match kind {
            TaskKind::NbSentiment => {
                if self.learning_rate.is_some() || self.epochs.is_some() {
                    return invalid(format!("{kind:?} takes only `alpha` and `seed`"));
                }
                match self.alpha {
                    Some(a) if a.get() > 0.0 && a.get().is_finite() => Ok(()),
                    Some(a) => invalid(format!("alpha must be positive, got {a}")),
                    None => invalid(format!("{kind:?} requires `alpha`")),
                }
            }
            TaskKind::SgdLogReg | TaskKind::AndPairwise => {
                if self.alpha.is_some() {
                    return invalid(format!("{kind:?} does not take `alpha`"));
                }
                match self.learning_rate {
                    Some(lr) if lr.get() > 0.0 && lr.get().is_finite() => {}
                    Some(lr) => return invalid(format!("learning_rate must be positive, got {lr}")),
                    None => return invalid(format!("{kind:?} requires `learning_rate`")),
                }
                match self.epochs {
                    Some(e) if e > 0 => Ok(()),
                    Some(_) => invalid("epochs must be positive".into()),
                    None => invalid(format!("{kind:?} requires `epochs`")),
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum OutputKind {
    ModelParams,
    AggregateMetrics,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExitControlPolicy {
    /// Minimum total aggregated records before anything is released.
    pub min_records: u64,
    /// Per-token count floor for released token-level parameters.
    pub min_token_count: u64,
    pub allowed_outputs: BTreeSet<OutputKind>,
}

impl ExitControlPolicy {
    pub fn validate(&self) -> Result<(), ProtocolError> {
        if self.min_records < 1 || self.min_token_count < 1 {
            return Err(ProtocolError::Invalid(
                "exit policy thresholds must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisTask {
    pub task_id: String,
    pub kind: TaskKind,
    pub hyperparameters: Hyperparameters,
    pub required_schema_id: String,
    pub exit_policy: ExitControlPolicy,
}

impl AnalysisTask {
    pub fn validate(&self) -> Result<(), ProtocolError> {
        if self.task_id.is_empty() {
            return Err(ProtocolError::Invalid("task_id must not be empty".into()));
        }
        self.hyperparameters.validate(self.kind)?;
        self.exit_policy.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Verdict {
    Approve,
    Reject,
}

/// A party whose consent is required before a train leaves the center.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "role", content = "station_id")]
pub enum Party {
    Researcher,
    StationOwner(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApprovalRecord {
    pub party: Party,
    pub approver_key_id: KeyId,
    pub verdict: Verdict,
    #[serde(with = "b64")]
    pub signature: Vec<u8>,
}

#[derive(Serialize)]
struct ApprovalStatement<'a> {
    train_id: &'a str,
    party: &'a Party,
    verdict: Verdict,
    manifest_digest: &'a Digest,
}

impl ApprovalRecord {
    const DOMAIN: &'static str = "padme/approval/v1";

    fn message(train_id: &str, party: &Party, verdict: Verdict, manifest_digest: &Digest) -> Vec<u8> {
        let statement = ApprovalStatement {
            train_id,
            party,
            verdict,
            manifest_digest,
        };
        signing_message(Self::DOMAIN, &statement).expect("approval statements hold no reals")
    }

    pub fn sign(train_id: &str, party: Party, verdict: Verdict, manifest_digest: &Digest, key: &KeyPair) -> Self {
        let signature = key.sign(&Self::message(train_id, &party, verdict, manifest_digest));
        Self {
            party,
            approver_key_id: key.key_id(),
            verdict,
            signature,
        }
    }

    pub fn verify(&self, train_id: &str, manifest_digest: &Digest, key: &PublicKey) -> bool {
        key.key_id() == self.approver_key_id
            && key.verify(
                &Self::message(train_id, &self.party, self.verdict, manifest_digest),
                &self.signature,
            )
    }
}

/// The immutable part of a manifest. Its digest is what approvals sign and
/// what every hop envelope binds as associated data.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ManifestBinding<'a> {
    pub train_id: &'a str,
    pub task: &'a AnalysisTask,
    pub stations: &'a [String],
    pub researcher_key_id: &'a KeyId,
    pub station_key_ids: &'a BTreeMap<String, KeyId>,
    pub created_at: Timestamp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainManifest {
    pub train_id: String,
    pub task: AnalysisTask,
    pub route: Route,
    pub researcher_key_id: KeyId,
    pub station_key_ids: BTreeMap<String, KeyId>,
    pub created_at: Timestamp,
    pub approvals: Vec<ApprovalRecord>,
    #[serde(with = "b64")]
    pub manifest_signature: Vec<u8>,
}

impl TrainManifest {
    const SIGN_DOMAIN: &'static str = "padme/manifest/v1";

    pub fn binding(&self) -> ManifestBinding<'_> {
        ManifestBinding {
            train_id: &self.train_id,
            task: &self.task,
            stations: self.route.stations(),
            researcher_key_id: &self.researcher_key_id,
            station_key_ids: &self.station_key_ids,
            created_at: self.created_at,
        }
    }

    pub fn binding_digest(&self) -> Result<Digest, ProtocolError> {
        Ok(Digest::of(&canonical_serialize(&self.binding())?))
    }

    fn signing_bytes(&self) -> Result<Vec<u8>, ProtocolError> {
        #[derive(Serialize)]
        struct Signed<'a> {
            binding: ManifestBinding<'a>,
            approvals: &'a [ApprovalRecord],
        }
        signing_message(
            Self::SIGN_DOMAIN,
            &Signed {
                binding: self.binding(),
                approvals: &self.approvals,
            },
        )
    }

    /// Sign everything except route progress, which changes hop by hop.
    pub fn sign(&mut self, center: &KeyPair) -> Result<(), ProtocolError> {
        self.manifest_signature = center.sign(&self.signing_bytes()?);
        Ok(())
    }

    pub fn verify_signature(&self, center: &PublicKey) -> bool {
        self.signing_bytes()
            .map(|msg| center.verify(&msg, &self.manifest_signature))
            .unwrap_or(false)
    }

    /// Every station owner and the researcher appear with an approving vote.
    pub fn approvals_complete(&self) -> bool {
        let approving: BTreeSet<&Party> = self
            .approvals
            .iter()
            .filter(|a| a.verdict == Verdict::Approve)
            .map(|a| &a.party)
            .collect();
        approving.contains(&Party::Researcher)
            && self
                .route
                .stations()
                .iter()
                .all(|s| approving.contains(&Party::StationOwner(s.clone())))
    }

    pub fn validate(&self) -> Result<(), ProtocolError> {
        self.task.validate()?;
        self.route.validate()?;
        for station in self.route.stations() {
            if !self.station_key_ids.contains_key(station) {
                return Err(ProtocolError::Invalid(format!("no key bound for station `{station}`")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HopRecord {
    pub station_id: String,
    pub record_count: u64,
    pub at: Timestamp,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelState {
    pub task_kind: TaskKind,
    pub schema_version: u32,
    #[serde(with = "b64")]
    pub payload: Vec<u8>,
    pub records_aggregated: u64,
    pub hops_completed: Vec<HopRecord>,
}

impl ModelState {
    pub fn initial(task_kind: TaskKind, payload: Vec<u8>) -> Self {
        Self {
            task_kind,
            schema_version: MODEL_STATE_SCHEMA_VERSION,
            payload,
            records_aggregated: 0,
            hops_completed: Vec::new(),
        }
    }

    pub fn record_hop(&mut self, station_id: &str, record_count: u64, at: Timestamp) {
        self.records_aggregated += record_count;
        self.hops_completed.push(HopRecord {
            station_id: station_id.to_string(),
            record_count,
            at,
        });
    }

    pub fn digest(&self) -> Digest {
        Digest::of(&canonical_serialize(self).expect("model states hold no reals"))
    }

    pub fn validate(&self) -> Result<(), ProtocolError> {
        let sum: u64 = self.hops_completed.iter().map(|h| h.record_count).sum();
        if sum != self.records_aggregated {
            return Err(ProtocolError::Invalid(format!(
                "records_aggregated {} does not match hop total {sum}",
                self.records_aggregated
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckOutcome {
    pub check: String,
    pub passed: bool,
    pub detail: String,
}

/// Parameters a researcher may see once exit control passes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model")]
pub enum ReleasedParams {
    NaiveBayes {
        class_doc_counts: BTreeMap<String, u64>,
        token_counts: BTreeMap<String, BTreeMap<String, u64>>,
        alpha: Real,
    },
    Logistic {
        feature_spec_id: String,
        weights: Vec<Real>,
        bias: Real,
    },
}

impl ReleasedParams {
    /// Total count per token across all classes; empty for models without
    /// token-level parameters.
    pub fn token_totals(&self) -> BTreeMap<&str, u64> {
        let mut totals = BTreeMap::new();
        if let ReleasedParams::NaiveBayes { token_counts, .. } = self {
            for per_class in token_counts.values() {
                for (token, count) in per_class {
                    *totals.entry(token.as_str()).or_insert(0) += count;
                }
            }
        }
        totals
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultSummary {
    pub task_kind: TaskKind,
    pub metrics: BTreeMap<String, Real>,
    pub released_params: Option<ReleasedParams>,
    pub total_records: u64,
    pub exit_control_report: Vec<CheckOutcome>,
}

impl ResultSummary {
    pub fn output_categories(&self) -> BTreeSet<OutputKind> {
        let mut out = BTreeSet::new();
        if !self.metrics.is_empty() {
            out.insert(OutputKind::AggregateMetrics);
        }
        if self.released_params.is_some() {
            out.insert(OutputKind::ModelParams);
        }
        out
    }

    pub fn exit_control_passed(&self) -> bool {
        self.exit_control_report.iter().all(|c| c.passed)
    }

    pub fn validate(&self) -> Result<(), ProtocolError> {
        if !self.exit_control_passed() && self.released_params.is_some() {
            return Err(ProtocolError::Invalid(
                "parameters present although exit control failed".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExitControlOutcome {
    pub passed: bool,
    pub report: Vec<CheckOutcome>,
}

/// What a station tells the center about a hop it finished. Carries counts
/// and digests only.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HopReport {
    pub train_id: String,
    pub station_id: String,
    pub hop_index: u32,
    pub record_count: u64,
    pub verdict: Verdict,
    pub reason: String,
    pub exit_control: Option<ExitControlOutcome>,
    pub state_digest_before: Digest,
    pub state_digest_after: Digest,
    pub envelope_digest: Option<Digest>,
    #[serde(with = "b64")]
    pub signature: Vec<u8>,
}

impl HopReport {
    const SIGN_DOMAIN: &'static str = "padme/hop-report/v1";

    fn signing_bytes(&self) -> Vec<u8> {
        let mut unsigned = self.clone();
        unsigned.signature.clear();
        signing_message(Self::SIGN_DOMAIN, &unsigned).expect("hop reports hold no reals")
    }

    pub fn sign(&mut self, station: &KeyPair) {
        self.signature = station.sign(&self.signing_bytes());
    }

    pub fn verify(&self, station: &PublicKey) -> bool {
        station.verify(&self.signing_bytes(), &self.signature)
    }

    pub fn digest(&self) -> Digest {
        Digest::of(&canonical_serialize(self).expect("hop reports hold no reals"))
    }

    pub fn exit_control_passed(&self) -> bool {
        self.exit_control.as_ref().map(|e| e.passed).unwrap_or(false)
    }
}
