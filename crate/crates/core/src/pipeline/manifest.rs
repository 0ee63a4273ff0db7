//! Dataset manifest: which pairs to analyse, and their labels.

use std::path::{Path, PathBuf};

use super::table::{FileClass, Labels, Subset};
use crate::error::{Error, Result};

pub const MANIFEST_COLUMNS: [&str; 10] = [
    "subset",
    "ref_path",
    "test_path",
    "method",
    "beta",
    "smos",
    "raw_smos",
    "median_os",
    "raw_median_os",
    "class",
];

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestRow {
    pub subset: Subset,
    /// Paths resolved against the manifest's directory.
    pub ref_path: PathBuf,
    pub test_path: PathBuf,
    /// Paths as written in the manifest.
    pub ref_id: String,
    pub test_id: String,
    pub method: String,
    /// Known time-scale ratio; estimated from lengths when absent.
    pub beta: Option<f64>,
    pub labels: Labels,
    pub class: FileClass,
}

fn optional_number(s: &str, column: &str, line: usize) -> Result<Option<f64>> {
    let s = s.trim();
    if s.is_empty() {
        return Ok(None);
    }
    s.parse()
        .map(Some)
        .map_err(|_| Error::Parse(format!("manifest line {line}, {column}: bad number '{s}'")))
}

/// Reads a manifest from text; relative paths are joined onto `base`.
pub fn parse_manifest(reader: impl std::io::Read, base: &Path) -> Result<Vec<ManifestRow>> {
    let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = r.headers().map_err(|e| Error::Parse(e.to_string()))?.clone();
    let mut index = [0usize; 10];
    for (slot, name) in index.iter_mut().zip(MANIFEST_COLUMNS) {
        *slot = headers
            .iter()
            .position(|h| h.eq_ignore_ascii_case(name))
            .ok_or_else(|| Error::Parse(format!("manifest lacks column '{name}'")))?;
    }
    let resolve = |p: &str| {
        let p = Path::new(p);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            base.join(p)
        }
    };
    let mut rows = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| Error::Parse(e.to_string()))?;
        let line = i + 2;
        let field = |k: usize| rec.get(index[k]).unwrap_or("");
        let beta = optional_number(field(4), "beta", line)?;
        if let Some(b) = beta {
            if !(b > 0.0 && b.is_finite()) {
                return Err(Error::Parse(format!("manifest line {line}: beta {b} is not positive")));
            }
        }
        let label = |k: usize| optional_number(field(k), MANIFEST_COLUMNS[k], line);
        rows.push(ManifestRow {
            subset: field(0).parse()?,
            ref_path: resolve(field(1)),
            test_path: resolve(field(2)),
            ref_id: field(1).to_string(),
            test_id: field(2).to_string(),
            method: field(3).to_string(),
            beta,
            labels: Labels {
                smos: label(5)?,
                raw_smos: label(6)?,
                median_os: label(7)?,
                raw_median_os: label(8)?,
            },
            class: field(9).parse()?,
        });
    }
    Ok(rows)
}

pub fn read_manifest(path: impl AsRef<Path>) -> Result<Vec<ManifestRow>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_manifest(file, path.parent().unwrap_or(Path::new(".")))
}

#[cfg(test)]
mod tests {
    use super::*;

    const TEXT: &str = "subset,ref_path,test_path,method,beta,smos,raw_smos,median_os,raw_median_os,class\n\
        train,ref/a.wav,out/a_05.wav,WSOLA,0.5383,3.2,3.1,3,3,music\n\
        test,/abs/b.wav,out/b.wav,PV,,,,,,voice\n";

    #[test]
    fn parses_rows_and_resolves_paths() {
        let rows = parse_manifest(TEXT.as_bytes(), Path::new("/data")).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].beta, Some(0.5383));
        assert_eq!(rows[0].ref_path, PathBuf::from("/data/ref/a.wav"));
        assert_eq!(rows[0].ref_id, "ref/a.wav");
        assert_eq!(rows[0].labels.smos, Some(3.2));
        assert_eq!(rows[1].ref_path, PathBuf::from("/abs/b.wav"));
        assert_eq!(rows[1].beta, None);
        assert_eq!(rows[1].labels.smos, None);
        assert_eq!(rows[1].class, FileClass::Voice);
    }

    #[test]
    fn rejects_bad_input() {
        let missing = "subset,ref_path\ntrain,a.wav\n";
        assert!(parse_manifest(missing.as_bytes(), Path::new(".")).is_err());
        let negative = TEXT.replace("0.5383", "-1");
        assert!(parse_manifest(negative.as_bytes(), Path::new(".")).is_err());
        let class = TEXT.replace("music", "drums");
        assert!(parse_manifest(class.as_bytes(), Path::new(".")).is_err());
    }
}
