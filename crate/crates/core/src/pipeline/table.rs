//! Feature table rows, labels and their comma-separated file format.
//!
//! The first line is `# schema=<version>`; the second is the column header.

use std::fmt;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{FeatureVector, FEATURE_COUNT, FEATURE_NAMES, SCHEMA_VERSION};
use crate::error::{Error, Result};
use crate::spectral::AlignmentMode;

/// Method name given to reference-as-test rows.
pub const REFERENCE_METHOD: &str = "reference";

const META_COLUMNS: [&str; 8] = [
    "ref_id",
    "test_id",
    "method",
    "beta",
    "class",
    "subset",
    "alignment",
    "augmented",
];
const LABEL_COLUMNS: [&str; 4] = ["smos", "raw_smos", "median_os", "raw_median_os"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FileClass {
    Music,
    Solo,
    Voice,
}

impl FileClass {
    pub const ALL: [FileClass; 3] = [FileClass::Music, FileClass::Solo, FileClass::Voice];

    pub fn name(self) -> &'static str {
        match self {
            FileClass::Music => "music",
            FileClass::Solo => "solo",
            FileClass::Voice => "voice",
        }
    }
}

impl fmt::Display for FileClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FileClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "music" => Ok(FileClass::Music),
            "solo" => Ok(FileClass::Solo),
            "voice" | "speech" => Ok(FileClass::Voice),
            other => Err(Error::Parse(format!("unknown file class '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Subset {
    Train,
    Test,
    Eval,
}

impl Subset {
    pub fn name(self) -> &'static str {
        match self {
            Subset::Train => "train",
            Subset::Test => "test",
            Subset::Eval => "eval",
        }
    }
}

impl fmt::Display for Subset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Subset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "train" | "training" => Ok(Subset::Train),
            "test" | "testing" => Ok(Subset::Test),
            "eval" | "evaluation" => Ok(Subset::Eval),
            other => Err(Error::Parse(format!("unknown subset '{other}'"))),
        }
    }
}

/// Training target.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    #[default]
    Smos,
    MedianOs,
    RawSmos,
    RawMedianOs,
}

impl Target {
    pub fn name(self) -> &'static str {
        match self {
            Target::Smos => "smos",
            Target::MedianOs => "median_os",
            Target::RawSmos => "raw_smos",
            Target::RawMedianOs => "raw_median_os",
        }
    }
}

impl fmt::Display for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Target {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "smos" => Ok(Target::Smos),
            "median_os" | "medianos" => Ok(Target::MedianOs),
            "raw_smos" => Ok(Target::RawSmos),
            "raw_median_os" | "raw_medianos" => Ok(Target::RawMedianOs),
            other => Err(Error::Parse(format!("unknown target '{other}'"))),
        }
    }
}

/// Subjective scores on the [1, 5] scale.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Labels {
    pub smos: Option<f64>,
    pub raw_smos: Option<f64>,
    pub median_os: Option<f64>,
    pub raw_median_os: Option<f64>,
}

impl Labels {
    pub fn all(value: f64) -> Self {
        Self {
            smos: Some(value),
            raw_smos: Some(value),
            median_os: Some(value),
            raw_median_os: Some(value),
        }
    }

    pub fn get(&self, target: Target) -> Option<f64> {
        match target {
            Target::Smos => self.smos,
            Target::MedianOs => self.median_os,
            Target::RawSmos => self.raw_smos,
            Target::RawMedianOs => self.raw_median_os,
        }
    }

    fn as_array(&self) -> [Option<f64>; 4] {
        [self.smos, self.raw_smos, self.median_os, self.raw_median_os]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRow {
    pub ref_id: String,
    pub test_id: String,
    pub method: String,
    pub beta: f64,
    pub class: FileClass,
    pub subset: Subset,
    pub alignment: AlignmentMode,
    /// Reference-as-test row added for training.
    pub augmented: bool,
    pub features: FeatureVector,
    pub labels: Labels,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct FeatureTable {
    pub rows: Vec<FeatureRow>,
}

fn header() -> Vec<&'static str> {
    META_COLUMNS
        .iter()
        .chain(FEATURE_NAMES.iter())
        .chain(LABEL_COLUMNS.iter())
        .copied()
        .collect()
}

fn parse_f64(s: &str, column: &str, line: usize) -> Result<f64> {
    s.trim()
        .parse()
        .map_err(|_| Error::Parse(format!("line {line}, column {column}: bad number '{s}'")))
}

fn parse_label(s: &str, column: &str, line: usize) -> Result<Option<f64>> {
    if s.trim().is_empty() {
        Ok(None)
    } else {
        parse_f64(s, column, line).map(Some)
    }
}

fn csv_error(e: csv::Error) -> Error {
    Error::Parse(e.to_string())
}

impl FeatureTable {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn write_to(&self, writer: impl Write) -> Result<()> {
        let mut writer = writer;
        writeln!(writer, "# schema={SCHEMA_VERSION}").map_err(|e| Error::io("<table>", e))?;
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(header()).map_err(csv_error)?;
        for row in &self.rows {
            let mut rec: Vec<String> = vec![
                row.ref_id.clone(),
                row.test_id.clone(),
                row.method.clone(),
                row.beta.to_string(),
                row.class.to_string(),
                row.subset.to_string(),
                row.alignment.to_string(),
                row.augmented.to_string(),
            ];
            rec.extend(row.features.0.iter().map(|v| v.to_string()));
            rec.extend(
                row.labels
                    .as_array()
                    .iter()
                    .map(|l| l.map(|v| v.to_string()).unwrap_or_default()),
            );
            w.write_record(&rec).map_err(csv_error)?;
        }
        w.flush().map_err(|e| Error::io("<table>", e))?;
        Ok(())
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_to(std::io::BufWriter::new(file))
    }

    pub fn read_from(reader: impl std::io::Read) -> Result<Self> {
        let mut reader = BufReader::new(reader);
        let mut first = String::new();
        reader
            .read_line(&mut first)
            .map_err(|e| Error::io("<table>", e))?;
        let found = first
            .trim()
            .strip_prefix("# schema=")
            .unwrap_or("")
            .to_string();
        if found != SCHEMA_VERSION {
            return Err(Error::SchemaMismatch {
                expected: SCHEMA_VERSION.into(),
                found: if found.is_empty() { first.trim().to_string() } else { found },
            });
        }
        let mut r = csv::Reader::from_reader(reader);
        let cols = r.headers().map_err(csv_error)?.clone();
        let expected = header();
        if cols.len() != expected.len() || cols.iter().zip(&expected).any(|(a, b)| a != *b) {
            return Err(Error::SchemaMismatch {
                expected: expected.join(","),
                found: cols.iter().collect::<Vec<_>>().join(","),
            });
        }
        let mut rows = Vec::new();
        for (i, rec) in r.records().enumerate() {
            let rec = rec.map_err(csv_error)?;
            let line = i + 3;
            let mut features = [0.0; FEATURE_COUNT];
            for (j, f) in features.iter_mut().enumerate() {
                *f = parse_f64(&rec[8 + j], FEATURE_NAMES[j], line)?;
            }
            let l = 8 + FEATURE_COUNT;
            rows.push(FeatureRow {
                ref_id: rec[0].to_string(),
                test_id: rec[1].to_string(),
                method: rec[2].to_string(),
                beta: parse_f64(&rec[3], "beta", line)?,
                class: rec[4].parse()?,
                subset: rec[5].parse()?,
                alignment: rec[6].parse()?,
                augmented: rec[7]
                    .trim()
                    .parse()
                    .map_err(|_| Error::Parse(format!("line {line}: bad augmented flag")))?,
                features: FeatureVector(features),
                labels: Labels {
                    smos: parse_label(&rec[l], "smos", line)?,
                    raw_smos: parse_label(&rec[l + 1], "raw_smos", line)?,
                    median_os: parse_label(&rec[l + 2], "median_os", line)?,
                    raw_median_os: parse_label(&rec[l + 3], "raw_median_os", line)?,
                },
            });
        }
        Ok(Self { rows })
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_from(file)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn row(seed: f64) -> FeatureRow {
        let mut f = [0.0; FEATURE_COUNT];
        for (i, v) in f.iter_mut().enumerate() {
            *v = seed * (i as f64 + 1.0) / 7.0;
        }
        FeatureRow {
            ref_id: "refs/a, b.wav".into(),
            test_id: "tests/a.wav".into(),
            method: "WSOLA".into(),
            beta: 0.5383,
            class: FileClass::Solo,
            subset: Subset::Train,
            alignment: AlignmentMode::InterpTest,
            augmented: false,
            features: FeatureVector(f),
            labels: Labels {
                smos: Some(3.25),
                raw_smos: None,
                median_os: Some(3.0),
                raw_median_os: None,
            },
        }
    }

    #[test]
    fn wrong_schema_is_refused() {
        let text = "# schema=omoq-features-v0\nref_id\n";
        assert!(matches!(
            FeatureTable::read_from(text.as_bytes()),
            Err(Error::SchemaMismatch { .. })
        ));
    }

    #[test]
    fn parsing_of_enums() {
        assert_eq!("Voice".parse::<FileClass>().unwrap(), FileClass::Voice);
        assert_eq!("eval".parse::<Subset>().unwrap(), Subset::Eval);
        assert_eq!("raw_smos".parse::<Target>().unwrap(), Target::RawSmos);
        assert!("drums".parse::<FileClass>().is_err());
    }

    proptest! {
        #[test]
        fn round_trip_is_lossless(seeds in prop::collection::vec(-1e6f64..1e6, 1..5)) {
            let table = FeatureTable { rows: seeds.iter().map(|&s| row(s)).collect() };
            let mut buf = Vec::new();
            table.write_to(&mut buf).unwrap();
            let back = FeatureTable::read_from(buf.as_slice()).unwrap();
            prop_assert_eq!(back, table);
        }
    }
}
