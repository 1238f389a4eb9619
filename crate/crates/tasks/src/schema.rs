//! Dataset schemas and the synthetic schema-sample generator.
//!
//! A schema is a JSON document listing typed fields. Rows are JSON objects
//! with exactly the declared fields. Validation errors name the offending
//! field but never echo a value, since values are station data.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::TaskError;

pub const SENTIMENT_SCHEMA_ID: &str = "sentiment-v1";
pub const AND_PAIRS_SCHEMA_ID: &str = "and-pairs-v1";
pub const TABULAR_SCHEMA_ID: &str = "tabular-v1";

pub const SYNTHETIC_PROVENANCE: &str = "synthetic";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldType {
    String,
    Integer,
    Real,
    Label,
    StringList,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldSpec {
    pub name: String,
    #[serde(rename = "type")]
    pub field_type: FieldType,
    /// Allowed values of a label field, in declaration order.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub values: Option<Vec<String>>,
    /// Inclusive `[lo, hi]` bounds for integer and real fields.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub range: Option<[f64; 2]>,
}

impl FieldSpec {
    fn new(name: &str, field_type: FieldType) -> Self {
        Self {
            name: name.into(),
            field_type,
            values: None,
            range: None,
        }
    }

    fn label(name: &str, values: &[&str]) -> Self {
        Self {
            values: Some(values.iter().map(|v| v.to_string()).collect()),
            ..Self::new(name, FieldType::Label)
        }
    }

    fn ranged(name: &str, field_type: FieldType, lo: f64, hi: f64) -> Self {
        Self {
            range: Some([lo, hi]),
            ..Self::new(name, field_type)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSchema {
    pub schema_id: String,
    pub fields: Vec<FieldSpec>,
}

impl DatasetSchema {
    /// `{text: string, label: label ∈ {neg, pos}}`.
    pub fn sentiment() -> Self {
        Self {
            schema_id: SENTIMENT_SCHEMA_ID.into(),
            fields: vec![FieldSpec::new("text", FieldType::String), FieldSpec::label("label", &["neg", "pos"])],
        }
    }

    /// Candidate author-mention pairs for name disambiguation.
    pub fn and_pairs() -> Self {
        use FieldType::*;
        Self {
            schema_id: AND_PAIRS_SCHEMA_ID.into(),
            fields: vec![
                FieldSpec::new("name_a", String),
                FieldSpec::new("name_b", String),
                FieldSpec::new("coauthors_a", StringList),
                FieldSpec::new("coauthors_b", StringList),
                FieldSpec::new("title_a", String),
                FieldSpec::new("title_b", String),
                FieldSpec::ranged("year_a", Integer, 1950.0, 2025.0),
                FieldSpec::ranged("year_b", Integer, 1950.0, 2025.0),
                FieldSpec::new("venue_a", String),
                FieldSpec::new("venue_b", String),
                FieldSpec::label("same_author", &["0", "1"]),
            ],
        }
    }

    /// Four real features and a binary label, for generic logistic regression.
    pub fn tabular() -> Self {
        Self {
            schema_id: TABULAR_SCHEMA_ID.into(),
            fields: vec![
                FieldSpec::ranged("x1", FieldType::Real, -1.0, 1.0),
                FieldSpec::ranged("x2", FieldType::Real, -1.0, 1.0),
                FieldSpec::ranged("x3", FieldType::Real, -1.0, 1.0),
                FieldSpec::ranged("x4", FieldType::Real, -1.0, 1.0),
                FieldSpec::label("y", &["0", "1"]),
            ],
        }
    }

    pub fn builtin(schema_id: &str) -> Option<Self> {
        match schema_id {
            SENTIMENT_SCHEMA_ID => Some(Self::sentiment()),
            AND_PAIRS_SCHEMA_ID => Some(Self::and_pairs()),
            TABULAR_SCHEMA_ID => Some(Self::tabular()),
            _ => None,
        }
    }

    pub fn from_json(text: &str) -> Result<Self, TaskError> {
        let schema: Self = serde_json::from_str(text).map_err(|e| TaskError::InvalidSchema(e.to_string()))?;
        schema.validate()?;
        Ok(schema)
    }

    pub fn validate(&self) -> Result<(), TaskError> {
        let invalid = |msg: String| Err(TaskError::InvalidSchema(msg));
        if self.schema_id.is_empty() {
            return invalid("empty schema_id".into());
        }
        let mut names = BTreeSet::new();
        let mut labels = 0;
        for field in &self.fields {
            if field.name.is_empty() || !names.insert(field.name.as_str()) {
                return invalid(format!("empty or duplicate field name `{}`", field.name));
            }
            match field.field_type {
                FieldType::Label => {
                    labels += 1;
                    let values = field.values.as_deref().unwrap_or_default();
                    let distinct: BTreeSet<&String> = values.iter().collect();
                    if values.len() < 2 || distinct.len() != values.len() {
                        return invalid(format!("label field `{}` needs at least two distinct values", field.name));
                    }
                }
                _ if field.values.is_some() => {
                    return invalid(format!("field `{}` declares values but is not a label", field.name));
                }
                _ => {}
            }
            if let Some([lo, hi]) = field.range {
                let numeric = matches!(field.field_type, FieldType::Integer | FieldType::Real);
                let integral = field.field_type != FieldType::Integer || (lo.fract() == 0.0 && hi.fract() == 0.0);
                if !numeric || !integral || !lo.is_finite() || !hi.is_finite() || lo > hi {
                    return invalid(format!("field `{}` has an invalid range", field.name));
                }
            }
        }
        if labels > 1 {
            return invalid("at most one label field is allowed".into());
        }
        Ok(())
    }

    pub fn field(&self, name: &str) -> Option<&FieldSpec> {
        self.fields.iter().find(|f| f.name == name)
    }

    pub fn label_field(&self) -> Option<&FieldSpec> {
        self.fields.iter().find(|f| f.field_type == FieldType::Label)
    }

    pub fn label_values(&self) -> &[String] {
        self.label_field().and_then(|f| f.values.as_deref()).unwrap_or_default()
    }

    /// Checks one row. `line` is 1-based and only used in the error.
    pub fn validate_row(&self, row: &Map<String, Value>, line: usize) -> Result<(), TaskError> {
        let bad = |reason: String| TaskError::InvalidRow { line, reason };
        for key in row.keys() {
            if self.field(key).is_none() {
                return Err(bad(format!("undeclared field `{key}`")));
            }
        }
        for field in &self.fields {
            let value = row.get(&field.name).ok_or_else(|| bad(format!("missing field `{}`", field.name)))?;
            let wrong = || bad(format!("field `{}` is not a valid {:?}", field.name, field.field_type));
            let in_range = |v: f64| field.range.map_or(true, |[lo, hi]| (lo..=hi).contains(&v));
            match field.field_type {
                FieldType::String => {
                    value.as_str().ok_or_else(wrong)?;
                }
                FieldType::StringList => {
                    let items = value.as_array().ok_or_else(wrong)?;
                    if !items.iter().all(Value::is_string) {
                        return Err(wrong());
                    }
                }
                FieldType::Integer => {
                    let v = value.as_i64().ok_or_else(wrong)?;
                    if !in_range(v as f64) {
                        return Err(bad(format!("field `{}` is out of range", field.name)));
                    }
                }
                FieldType::Real => {
                    let v = value.as_f64().filter(|v| v.is_finite()).ok_or_else(wrong)?;
                    if !in_range(v) {
                        return Err(bad(format!("field `{}` is out of range", field.name)));
                    }
                }
                FieldType::Label => {
                    let v = label_text(value).ok_or_else(wrong)?;
                    if !field.values.as_deref().unwrap_or_default().contains(&v) {
                        return Err(bad(format!("field `{}` holds an undeclared label", field.name)));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Labels are written as JSON strings; integer labels such as `1` are
/// accepted and read as `"1"`.
pub fn label_text(value: &Value) -> Option<String> {
    match value {
        Value::String(s) => Some(s.clone()),
        Value::Number(n) if n.is_i64() || n.is_u64() => Some(n.to_string()),
        _ => None,
    }
}

/// Public stand-in data for a schema; never derived from real rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemaSample {
    pub schema_id: String,
    pub rows: Vec<Map<String, Value>>,
    pub seed: u64,
    pub provenance: String,
}

const WORDS: &[&str] = &[
    "amber", "anchor", "arrow", "aspen", "basin", "beacon", "birch", "bloom", "breeze", "brook", "cedar", "cinder",
    "cliff", "cloud", "comet", "coral", "crane", "creek", "delta", "dune", "ember", "fern", "field", "flint", "forest",
    "frost", "glade", "glow", "granite", "grove", "harbor", "hazel", "heron", "hollow", "island", "ivy", "jade",
    "juniper", "lagoon", "lantern", "maple", "meadow", "mesa", "mist", "moss", "orchid", "pebble", "pine", "prairie",
    "quartz", "raven", "reef", "ridge", "river", "sage", "shore", "slate", "spruce", "stone", "summit", "thistle",
    "tide", "valley", "willow",
];

fn words(rng: &mut ChaCha8Rng, min: usize, max: usize) -> String {
    let n = rng.gen_range(min..=max);
    (0..n).map(|_| *WORDS.choose(rng).unwrap()).collect::<Vec<_>>().join(" ")
}

pub fn generate_schema_sample(schema: &DatasetSchema, n: usize, seed: u64) -> SchemaSample {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows = (0..n)
        .map(|_| {
            schema
                .fields
                .iter()
                .map(|field| {
                    let value = match field.field_type {
                        FieldType::String => Value::from(words(&mut rng, 1, 8)),
                        FieldType::StringList => {
                            let k = rng.gen_range(0..=4);
                            Value::from((0..k).map(|_| words(&mut rng, 2, 2)).collect::<Vec<_>>())
                        }
                        FieldType::Integer => {
                            let [lo, hi] = field.range.unwrap_or([0.0, 100.0]);
                            Value::from(rng.gen_range(lo as i64..=hi as i64))
                        }
                        FieldType::Real => {
                            let [lo, hi] = field.range.unwrap_or([0.0, 1.0]);
                            Value::from(if lo == hi { lo } else { rng.gen_range(lo..=hi) })
                        }
                        FieldType::Label => {
                            let values = field.values.as_deref().unwrap_or_default();
                            Value::from(values[rng.gen_range(0..values.len())].clone())
                        }
                    };
                    (field.name.clone(), value)
                })
                .collect()
        })
        .collect();
    SchemaSample {
        schema_id: schema.schema_id.clone(),
        rows,
        seed,
        provenance: SYNTHETIC_PROVENANCE.into(),
    }
}

#[cfg(test)]
mod tests {
    use serde_json::json;

    use super::*;

    fn row(value: Value) -> Map<String, Value> {
        value.as_object().unwrap().clone()
    }

    #[test]
    fn builtins_are_valid() {
        for id in [SENTIMENT_SCHEMA_ID, AND_PAIRS_SCHEMA_ID, TABULAR_SCHEMA_ID] {
            let schema = DatasetSchema::builtin(id).unwrap();
            schema.validate().unwrap();
            let text = serde_json::to_string(&schema).unwrap();
            assert_eq!(DatasetSchema::from_json(&text).unwrap(), schema);
        }
        assert!(DatasetSchema::builtin("nope").is_none());
    }

    #[test]
    fn schema_json_shape() {
        let schema = DatasetSchema::from_json(
            r#"{"schema_id":"s","fields":[{"name":"t","type":"string"},{"name":"l","type":"label","values":["a","b"]}]}"#,
        )
        .unwrap();
        assert_eq!(schema.label_values(), ["a", "b"]);
        for bad in [
            r#"{"schema_id":"","fields":[]}"#,
            r#"{"schema_id":"s","fields":[{"name":"t","type":"string"},{"name":"t","type":"string"}]}"#,
            r#"{"schema_id":"s","fields":[{"name":"l","type":"label","values":["a"]}]}"#,
            r#"{"schema_id":"s","fields":[{"name":"n","type":"integer","range":[5,1]}]}"#,
            r#"{"schema_id":"s","fields":[{"name":"n","type":"matrix"}]}"#,
        ] {
            assert!(DatasetSchema::from_json(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn row_validation_never_echoes_values() {
        let schema = DatasetSchema::sentiment();
        schema.validate_row(&row(json!({"text": "fine", "label": "pos"})), 1).unwrap();
        let secret = "SECRET-VALUE-42";
        for bad in [
            json!({"text": "fine"}),
            json!({"text": 3, "label": "pos"}),
            json!({"text": "x", "label": secret}),
            json!({"text": "x", "label": "pos", "extra": secret}),
        ] {
            let err = schema.validate_row(&row(bad), 7).unwrap_err();
            assert!(matches!(err, TaskError::InvalidRow { line: 7, .. }));
            assert!(!err.to_string().contains("SECRET"));
        }
        let and = DatasetSchema::and_pairs();
        let mut good = generate_schema_sample(&and, 1, 1).rows.remove(0);
        and.validate_row(&good, 1).unwrap();
        good.insert("same_author".into(), json!(1));
        and.validate_row(&good, 1).unwrap();
        good.insert("year_a".into(), json!(1800));
        assert!(and.validate_row(&good, 1).is_err());
    }

    #[test]
    fn sample_edges_and_determinism() {
        let schema = DatasetSchema::and_pairs();
        assert!(generate_schema_sample(&schema, 0, 5).rows.is_empty());
        let a = generate_schema_sample(&schema, 50, 5);
        assert_eq!(a, generate_schema_sample(&schema, 50, 5));
        assert_ne!(a.rows, generate_schema_sample(&schema, 50, 6).rows);
        assert_eq!(a.provenance, "synthetic");
        for (i, r) in a.rows.iter().enumerate() {
            schema.validate_row(r, i + 1).unwrap();
        }
    }

    #[test]
    fn sample_labels_are_uniform() {
        // Binomial(10000, 1/2): sigma = 50, so 3 sigma = 150.
        let sample = generate_schema_sample(&DatasetSchema::sentiment(), 10_000, 2024);
        let pos = sample.rows.iter().filter(|r| r["label"] == "pos").count() as i64;
        assert!((pos - 5000).abs() <= 150, "pos = {pos}");
    }
}
