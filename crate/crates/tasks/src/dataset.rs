//! JSON-Lines datasets validated against a schema.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde_json::{Map, Value};

use crate::error::TaskError;
use crate::features::AndPairRecord;
use crate::schema::{label_text, DatasetSchema, FieldType};

#[derive(Debug, Clone, PartialEq)]
pub struct LocalDataset {
    schema: DatasetSchema,
    rows: Vec<Map<String, Value>>,
}

impl LocalDataset {
    pub fn new(schema: DatasetSchema, rows: Vec<Map<String, Value>>) -> Result<Self, TaskError> {
        schema.validate()?;
        for (i, row) in rows.iter().enumerate() {
            schema.validate_row(row, i + 1)?;
        }
        Ok(Self { schema, rows })
    }

    /// Parses JSON-Lines text. Blank lines are skipped.
    pub fn parse_jsonl(schema: DatasetSchema, text: &str) -> Result<Self, TaskError> {
        let mut rows = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let value: Value = serde_json::from_str(line).map_err(|e| TaskError::InvalidRow {
                line: i + 1,
                reason: format!("not valid JSON (column {})", e.column()),
            })?;
            match value {
                Value::Object(map) => {
                    schema.validate_row(&map, i + 1)?;
                    rows.push(map);
                }
                _ => {
                    return Err(TaskError::InvalidRow {
                        line: i + 1,
                        reason: "not a JSON object".into(),
                    })
                }
            }
        }
        Self::new(schema, rows)
    }

    pub fn load(path: &Path, schema: DatasetSchema) -> Result<Self, TaskError> {
        let text = fs::read_to_string(path).map_err(|e| TaskError::Io(format!("{}: {e}", path.display())))?;
        Self::parse_jsonl(schema, &text)
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for row in &self.rows {
            out.push_str(&serde_json::to_string(row).expect("json map serializes"));
            out.push('\n');
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<(), TaskError> {
        let io = |e: std::io::Error| TaskError::Io(format!("{}: {e}", path.display()));
        let mut file = fs::File::create(path).map_err(io)?;
        file.write_all(self.to_jsonl().as_bytes()).map_err(io)?;
        file.sync_all().map_err(io)
    }

    pub fn schema(&self) -> &DatasetSchema {
        &self.schema
    }

    pub fn schema_id(&self) -> &str {
        &self.schema.schema_id
    }

    pub fn rows(&self) -> &[Map<String, Value>] {
        &self.rows
    }

    pub fn row_count(&self) -> usize {
        self.rows.len()
    }

    fn require(&self, field: &str, ty: FieldType) -> Result<(), TaskError> {
        match self.schema.field(field) {
            Some(spec) if spec.field_type == ty => Ok(()),
            _ => Err(TaskError::TaskFailure(format!(
                "schema `{}` has no {ty:?} field `{field}`",
                self.schema.schema_id
            ))),
        }
    }

    fn label_name(&self) -> Result<&str, TaskError> {
        self.schema
            .label_field()
            .map(|f| f.name.as_str())
            .ok_or_else(|| TaskError::TaskFailure(format!("schema `{}` has no label field", self.schema.schema_id)))
    }

    /// `(text, label)` pairs for text classification.
    pub fn labeled_texts(&self) -> Result<Vec<(&str, String)>, TaskError> {
        self.require("text", FieldType::String)?;
        let label = self.label_name()?;
        Ok(self
            .rows
            .iter()
            .map(|r| (r["text"].as_str().unwrap_or_default(), label_text(&r[label]).unwrap_or_default()))
            .collect())
    }

    /// Numeric fields in declaration order, plus the label mapped to 1.0 for
    /// the last declared label value and 0.0 otherwise.
    pub fn numeric_rows(&self) -> Result<Vec<(Vec<f64>, f64)>, TaskError> {
        let label = self.label_name()?;
        let positive = self.schema.label_values().last().cloned().unwrap_or_default();
        let numeric: Vec<&str> = self
            .schema
            .fields
            .iter()
            .filter(|f| matches!(f.field_type, FieldType::Integer | FieldType::Real))
            .map(|f| f.name.as_str())
            .collect();
        Ok(self
            .rows
            .iter()
            .map(|r| {
                let x = numeric.iter().map(|n| r[*n].as_f64().unwrap_or(f64::NAN)).collect();
                let y = if label_text(&r[label]).as_deref() == Some(positive.as_str()) { 1.0 } else { 0.0 };
                (x, y)
            })
            .collect())
    }

    pub fn and_pairs(&self) -> Result<Vec<AndPairRecord>, TaskError> {
        for (name, ty) in [
            ("name_a", FieldType::String),
            ("name_b", FieldType::String),
            ("coauthors_a", FieldType::StringList),
            ("coauthors_b", FieldType::StringList),
            ("title_a", FieldType::String),
            ("title_b", FieldType::String),
            ("year_a", FieldType::Integer),
            ("year_b", FieldType::Integer),
            ("venue_a", FieldType::String),
            ("venue_b", FieldType::String),
            ("same_author", FieldType::Label),
        ] {
            self.require(name, ty)?;
        }
        let text = |r: &Map<String, Value>, k: &str| r[k].as_str().unwrap_or_default().to_string();
        let list = |r: &Map<String, Value>, k: &str| -> Vec<String> {
            r[k].as_array()
                .map(|a| a.iter().filter_map(|v| v.as_str().map(String::from)).collect())
                .unwrap_or_default()
        };
        Ok(self
            .rows
            .iter()
            .map(|r| AndPairRecord {
                name_a: text(r, "name_a"),
                name_b: text(r, "name_b"),
                coauthors_a: list(r, "coauthors_a"),
                coauthors_b: list(r, "coauthors_b"),
                title_a: text(r, "title_a"),
                title_b: text(r, "title_b"),
                year_a: r["year_a"].as_i64().unwrap_or_default(),
                year_b: r["year_b"].as_i64().unwrap_or_default(),
                venue_a: text(r, "venue_a"),
                venue_b: text(r, "venue_b"),
                same_author: label_text(&r["same_author"]).unwrap_or_default(),
            })
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::generate_schema_sample;

    #[test]
    fn jsonl_round_trip() {
        let schema = DatasetSchema::and_pairs();
        let sample = generate_schema_sample(&schema, 20, 9);
        let ds = LocalDataset::new(schema.clone(), sample.rows).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.jsonl");
        ds.write(&path).unwrap();
        let back = LocalDataset::load(&path, schema).unwrap();
        assert_eq!(back, ds);
        assert_eq!(back.row_count(), 20);
        assert_eq!(back.and_pairs().unwrap().len(), 20);
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let text = "{\"text\":\"a\",\"label\":\"pos\"}\n\n{\"text\":\"b\",\"label\":\"meh\"}\n";
        let err = LocalDataset::parse_jsonl(DatasetSchema::sentiment(), text).unwrap_err();
        assert!(matches!(err, TaskError::InvalidRow { line: 3, .. }));
        let err = LocalDataset::parse_jsonl(DatasetSchema::sentiment(), "not json\n").unwrap_err();
        assert!(matches!(err, TaskError::InvalidRow { line: 1, .. }));
        assert!(LocalDataset::parse_jsonl(DatasetSchema::sentiment(), "[1]\n").is_err());
    }

    #[test]
    fn views() {
        let text = "{\"text\":\"Good movie\",\"label\":\"pos\"}\n{\"text\":\"bad\",\"label\":\"neg\"}\n";
        let ds = LocalDataset::parse_jsonl(DatasetSchema::sentiment(), text).unwrap();
        assert_eq!(ds.labeled_texts().unwrap(), vec![("Good movie", "pos".to_string()), ("bad", "neg".to_string())]);
        assert!(ds.and_pairs().is_err());
        let rows = ds.numeric_rows().unwrap();
        assert_eq!(rows, vec![(vec![], 1.0), (vec![], 0.0)]);

        let tab = "{\"x1\":0.5,\"x2\":-1,\"x3\":0,\"x4\":1,\"y\":\"1\"}\n";
        let ds = LocalDataset::parse_jsonl(DatasetSchema::tabular(), tab).unwrap();
        assert_eq!(ds.numeric_rows().unwrap(), vec![(vec![0.5, -1.0, 0.0, 1.0], 1.0)]);
        assert!(ds.labeled_texts().is_err());
    }
}
