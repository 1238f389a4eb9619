//! Logistic regression trained by sequential stochastic gradient descent.
//!
//! Rows are visited in file order with no shuffling, so a route of
//! partitions `[P1, P2]` with one epoch per hop reproduces a single pass over
//! `P1 ‖ P2` exactly.

use crate::error::TaskError;

const PAYLOAD_MAGIC: &[u8; 4] = b"SGD1";

#[derive(Debug, Clone, PartialEq)]
pub struct SgdState {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub learning_rate: f64,
    pub epochs_per_hop: u32,
    pub seed: u64,
    pub feature_spec_id: String,
}

impl SgdState {
    pub fn zeros(dimension: usize, learning_rate: f64, epochs_per_hop: u32, seed: u64, feature_spec_id: &str) -> Self {
        Self {
            weights: vec![0.0; dimension],
            bias: 0.0,
            learning_rate,
            epochs_per_hop,
            seed,
            feature_spec_id: feature_spec_id.to_string(),
        }
    }

    pub fn dimension(&self) -> usize {
        self.weights.len()
    }

    /// Header then parameters, all little-endian:
    /// `"SGD1" | d u32 | learning_rate f64 | epochs u32 | seed u64 |
    ///  spec id len u16 + utf8 | weights d × f64 | bias f64`.
    pub fn to_payload(&self) -> Vec<u8> {
        let spec = self.feature_spec_id.as_bytes();
        let mut out = Vec::with_capacity(4 + 4 + 8 + 4 + 8 + 2 + spec.len() + 8 * (self.weights.len() + 1));
        out.extend_from_slice(PAYLOAD_MAGIC);
        out.extend_from_slice(&(self.weights.len() as u32).to_le_bytes());
        out.extend_from_slice(&self.learning_rate.to_le_bytes());
        out.extend_from_slice(&self.epochs_per_hop.to_le_bytes());
        out.extend_from_slice(&self.seed.to_le_bytes());
        out.extend_from_slice(&(spec.len() as u16).to_le_bytes());
        out.extend_from_slice(spec);
        for w in &self.weights {
            out.extend_from_slice(&w.to_le_bytes());
        }
        out.extend_from_slice(&self.bias.to_le_bytes());
        out
    }

    pub fn from_payload(bytes: &[u8]) -> Result<Self, TaskError> {
        let bad = |msg: &str| TaskError::Payload(format!("sgd state: {msg}"));
        let mut pos = 0usize;
        let mut take = |len: usize| -> Result<&[u8], TaskError> {
            let slice = bytes.get(pos..pos + len).ok_or_else(|| bad("truncated"))?;
            pos += len;
            Ok(slice)
        };
        if take(4)? != PAYLOAD_MAGIC {
            return Err(bad("bad magic"));
        }
        let d = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
        let learning_rate = f64::from_le_bytes(take(8)?.try_into().unwrap());
        let epochs_per_hop = u32::from_le_bytes(take(4)?.try_into().unwrap());
        let seed = u64::from_le_bytes(take(8)?.try_into().unwrap());
        let spec_len = u16::from_le_bytes(take(2)?.try_into().unwrap()) as usize;
        let feature_spec_id =
            String::from_utf8(take(spec_len)?.to_vec()).map_err(|_| bad("spec id is not utf-8"))?;
        let mut weights = Vec::with_capacity(d);
        for _ in 0..d {
            weights.push(f64::from_le_bytes(take(8)?.try_into().unwrap()));
        }
        let bias = f64::from_le_bytes(take(8)?.try_into().unwrap());
        if pos != bytes.len() {
            return Err(bad("trailing bytes"));
        }
        if !weights.iter().chain([&bias, &learning_rate]).all(|v| v.is_finite()) {
            return Err(bad("non-finite parameter"));
        }
        Ok(Self {
            weights,
            bias,
            learning_rate,
            epochs_per_hop,
            seed,
            feature_spec_id,
        })
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn margin(state: &SgdState, x: &[f64]) -> f64 {
    state.weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + state.bias
}

/// Gradient of the logistic loss for one row with respect to
/// `(weights, bias)`.
pub fn logistic_gradient(state: &SgdState, x: &[f64], y: f64) -> (Vec<f64>, f64) {
    let residual = sigmoid(margin(state, x)) - y;
    (x.iter().map(|v| residual * v).collect(), residual)
}

fn check_rows<X: AsRef<[f64]>>(state: &SgdState, rows: &[(X, f64)]) -> Result<(), TaskError> {
    let d = state.dimension();
    for (i, (x, y)) in rows.iter().enumerate() {
        let x = x.as_ref();
        if x.len() != d {
            return Err(TaskError::DimensionMismatch { expected: d, got: x.len() });
        }
        if !y.is_finite() || !x.iter().all(|v| v.is_finite()) {
            return Err(TaskError::NonFiniteFeature { row: i });
        }
    }
    Ok(())
}

/// `epochs_per_hop` passes over `rows` in order, one gradient step per row.
pub fn sgd_update<X: AsRef<[f64]>>(state: &SgdState, rows: &[(X, f64)]) -> Result<SgdState, TaskError> {
    check_rows(state, rows)?;
    let mut next = state.clone();
    let lr = state.learning_rate;
    for _ in 0..state.epochs_per_hop {
        for (x, y) in rows {
            let x = x.as_ref();
            let residual = sigmoid(margin(&next, x)) - y;
            for (w, v) in next.weights.iter_mut().zip(x) {
                *w -= lr * residual * v;
            }
            next.bias -= lr * residual;
        }
    }
    if !next.weights.iter().all(|w| w.is_finite()) || !next.bias.is_finite() {
        return Err(TaskError::TaskFailure("training diverged".into()));
    }
    Ok(next)
}

pub fn sgd_predict(state: &SgdState, x: &[f64]) -> Result<f64, TaskError> {
    if x.len() != state.dimension() {
        return Err(TaskError::DimensionMismatch {
            expected: state.dimension(),
            got: x.len(),
        });
    }
    Ok(sigmoid(margin(state, x)))
}
