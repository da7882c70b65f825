//! Row matrix CSV and its JSON schema sidecar.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::{EpisodeRow, FeatureSchema, FeatureSpec, ProtectedAttributes};
use crate::episode_store::PersonId;
use crate::error::{Error, Result};

/// Columns preceding the features in a row file.
pub const ROW_META_COLUMNS: [&str; 7] = [
    "person_id",
    "spell_id",
    "year",
    "y",
    "female",
    "non_german",
    "high_education",
];

const SCHEMA_FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct SchemaFile {
    format_version: u32,
    hash: String,
    features: Vec<FeatureSpec>,
}

pub fn write_schema<W: Write>(output: W, schema: &FeatureSchema) -> Result<()> {
    let file = SchemaFile {
        format_version: SCHEMA_FORMAT_VERSION,
        hash: schema.hash(),
        features: schema.features.clone(),
    };
    serde_json::to_writer_pretty(output, &file)?;
    Ok(())
}

pub fn read_schema<R: Read>(input: R) -> Result<FeatureSchema> {
    let file: SchemaFile = serde_json::from_reader(input)?;
    if file.format_version != SCHEMA_FORMAT_VERSION {
        return Err(Error::Invalid(format!(
            "unsupported schema format version {}",
            file.format_version
        )));
    }
    let schema = FeatureSchema {
        features: file.features,
    };
    if schema.hash() != file.hash {
        return Err(Error::Invalid(
            "schema hash does not match its feature list".into(),
        ));
    }
    Ok(schema)
}

fn bit(b: bool) -> &'static str {
    if b {
        "1"
    } else {
        "0"
    }
}

pub fn write_rows<W: Write>(output: W, schema: &FeatureSchema, rows: &[EpisodeRow]) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(output);
    w.write_record(ROW_META_COLUMNS.iter().copied().chain(schema.names()))?;
    let mut fields: Vec<String> = Vec::with_capacity(ROW_META_COLUMNS.len() + schema.len());
    for r in rows {
        fields.clear();
        fields.push(r.person_id.0.clone());
        fields.push(r.spell_id.clone());
        fields.push(r.year.to_string());
        fields.push(bit(r.y).into());
        fields.push(bit(r.s.female).into());
        fields.push(bit(r.s.non_german).into());
        fields.push(bit(r.high_education).into());
        fields.extend(r.x.iter().map(|v| v.to_string()));
        w.write_record(&fields)?;
    }
    w.flush().map_err(|e| Error::io("<rows>", e))?;
    Ok(())
}

/// Reads a row file written under `schema`; the header must list exactly the
/// schema's columns in order.
pub fn read_rows<R: Read>(input: R, schema: &FeatureSchema) -> Result<Vec<EpisodeRow>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .from_reader(input);
    let mut records = rdr.records();
    let header = records
        .next()
        .ok_or_else(|| Error::Invalid("empty row file".into()))??;
    for (i, expected) in ROW_META_COLUMNS.iter().enumerate() {
        let found = header.get(i).unwrap_or("<none>");
        if found != *expected {
            return Err(Error::Header {
                expected: ROW_META_COLUMNS.join(","),
                found: header
                    .iter()
                    .take(ROW_META_COLUMNS.len())
                    .collect::<Vec<_>>()
                    .join(","),
            });
        }
    }
    let found = FeatureSchema::from_names(header.iter().skip(ROW_META_COLUMNS.len()));
    schema.check_matches(&found)?;

    let flag = |s: &str, line: u64| -> Result<bool> {
        match s {
            "1" => Ok(true),
            "0" => Ok(false),
            other => Err(Error::Line {
                line,
                message: format!("expected 0/1, found `{other}`"),
            }),
        }
    };
    let mut rows = Vec::new();
    for rec in records {
        let rec = rec?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let bad = |message: String| Error::Line { line, message };
        let x = rec
            .iter()
            .skip(ROW_META_COLUMNS.len())
            .map(|v| {
                v.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| bad(format!("malformed feature value `{v}`")))
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(EpisodeRow {
            person_id: PersonId(rec[0].to_string()),
            spell_id: rec[1].to_string(),
            year: rec[2]
                .parse()
                .map_err(|_| bad(format!("malformed year `{}`", &rec[2])))?,
            y: flag(&rec[3], line)?,
            s: ProtectedAttributes {
                female: flag(&rec[4], line)?,
                non_german: flag(&rec[5], line)?,
            },
            high_education: flag(&rec[6], line)?,
            x,
        });
    }
    Ok(rows)
}
