//! Per-method evaluation of objective scores, with time-scale exclusions.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::pipeline::FileClass;

/// Ratios below this are excluded from every mean.
pub const MIN_BETA: f64 = 0.25;

/// One scored pair.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredRow {
    pub ref_id: String,
    pub test_id: String,
    pub method: String,
    pub beta: f64,
    pub class: FileClass,
    pub omos: f64,
}

/// Why a row was left out, if it was.
pub fn exclusion_reason(beta: f64) -> Option<&'static str> {
    if beta == 1.0 {
        Some("beta == 1")
    } else if beta < MIN_BETA {
        Some("beta < 0.25")
    } else {
        None
    }
}

/// Mean of a cell and the number of rows behind it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellMean {
    pub mean: f64,
    pub count: usize,
}

/// Order-independent mean: values are summed in sorted order.
fn cell(values: &[f64]) -> Option<CellMean> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    Some(CellMean {
        mean: v.iter().sum::<f64>() / v.len() as f64,
        count: v.len(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct MethodSummary {
    pub method: String,
    pub overall: CellMean,
    pub per_class: BTreeMap<FileClass, CellMean>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Exclusion {
    pub index: usize,
    pub method: String,
    pub beta: f64,
    pub class: FileClass,
    pub reason: &'static str,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationReport {
    /// Ordered by ascending overall mean.
    pub methods: Vec<MethodSummary>,
    /// `(class or None for all, method, beta) -> mean`.
    pub series: BTreeMap<(Option<FileClass>, String, u64), CellMean>,
    pub excluded: Vec<Exclusion>,
    pub total: usize,
    pub included: usize,
}

pub fn evaluate(rows: &[ScoredRow]) -> EvaluationReport {
    let mut excluded = Vec::new();
    let mut by_method: BTreeMap<&str, Vec<&ScoredRow>> = BTreeMap::new();
    for (i, r) in rows.iter().enumerate() {
        match exclusion_reason(r.beta) {
            Some(reason) => excluded.push(Exclusion {
                index: i,
                method: r.method.clone(),
                beta: r.beta,
                class: r.class,
                reason,
            }),
            None => by_method.entry(&r.method).or_default().push(r),
        }
    }
    let included = rows.len() - excluded.len();

    let mut methods = Vec::new();
    let mut series_values: BTreeMap<(Option<FileClass>, String, u64), Vec<f64>> = BTreeMap::new();
    for (method, members) in &by_method {
        let all: Vec<f64> = members.iter().map(|r| r.omos).collect();
        let per_class = FileClass::ALL
            .iter()
            .filter_map(|&c| {
                let v: Vec<f64> = members.iter().filter(|r| r.class == c).map(|r| r.omos).collect();
                cell(&v).map(|m| (c, m))
            })
            .collect();
        methods.push(MethodSummary {
            method: method.to_string(),
            overall: cell(&all).expect("non-empty group"),
            per_class,
        });
        for r in members {
            let key = beta_key(r.beta);
            series_values
                .entry((None, method.to_string(), key))
                .or_default()
                .push(r.omos);
            series_values
                .entry((Some(r.class), method.to_string(), key))
                .or_default()
                .push(r.omos);
        }
    }
    methods.sort_by(|a, b| {
        a.overall
            .mean
            .total_cmp(&b.overall.mean)
            .then_with(|| a.method.cmp(&b.method))
    });
    let series = series_values
        .into_iter()
        .map(|(k, v)| (k, cell(&v).expect("non-empty")))
        .collect();
    EvaluationReport {
        methods,
        series,
        excluded,
        total: rows.len(),
        included,
    }
}

/// Sortable key for a positive ratio.
fn beta_key(beta: f64) -> u64 {
    beta.to_bits()
}

fn csv_err(e: csv::Error) -> Error {
    Error::Parse(e.to_string())
}

fn create(path: &Path) -> Result<std::io::BufWriter<std::fs::File>> {
    std::fs::File::create(path)
        .map(std::io::BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

fn opt_mean(c: Option<&CellMean>) -> String {
    c.map(|c| c.mean.to_string()).unwrap_or_default()
}

impl EvaluationReport {
    /// Overall table: one row per method with overall and per-class means.
    pub fn write_overall(&self, writer: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["method", "overall", "music", "solo", "voice", "n"])
            .map_err(csv_err)?;
        for m in &self.methods {
            let mut rec = vec![m.method.clone(), m.overall.mean.to_string()];
            rec.extend(FileClass::ALL.iter().map(|c| opt_mean(m.per_class.get(c))));
            rec.push(m.overall.count.to_string());
            w.write_record(&rec).map_err(csv_err)?;
        }
        w.flush().map_err(|e| Error::io("<report>", e))
    }

    pub fn write_class(&self, class: FileClass, writer: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["method", "mean", "n"]).map_err(csv_err)?;
        let mut rows: Vec<(&str, CellMean)> = self
            .methods
            .iter()
            .filter_map(|m| m.per_class.get(&class).map(|c| (m.method.as_str(), *c)))
            .collect();
        rows.sort_by(|a, b| a.1.mean.total_cmp(&b.1.mean).then_with(|| a.0.cmp(b.0)));
        for (method, c) in rows {
            w.write_record([method.to_string(), c.mean.to_string(), c.count.to_string()])
                .map_err(csv_err)?;
        }
        w.flush().map_err(|e| Error::io("<report>", e))
    }

    /// Plot-ready series: rows indexed by β, one column per method.
    pub fn write_series(&self, class: Option<FileClass>, writer: impl Write) -> Result<()> {
        let methods: BTreeSet<&str> = self.methods.iter().map(|m| m.method.as_str()).collect();
        let betas: BTreeSet<u64> = self
            .series
            .keys()
            .filter(|k| k.0 == class)
            .map(|k| k.2)
            .collect();
        let mut betas: Vec<f64> = betas.into_iter().map(f64::from_bits).collect();
        betas.sort_by(f64::total_cmp);
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["beta".to_string()];
        header.extend(methods.iter().map(|m| m.to_string()));
        w.write_record(&header).map_err(csv_err)?;
        for beta in betas {
            let mut rec = vec![beta.to_string()];
            for m in &methods {
                rec.push(opt_mean(self.series.get(&(class, m.to_string(), beta_key(beta)))));
            }
            w.write_record(&rec).map_err(csv_err)?;
        }
        w.flush().map_err(|e| Error::io("<report>", e))
    }

    pub fn write_exclusions(&self, writer: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["row", "method", "beta", "class", "reason"])
            .map_err(csv_err)?;
        for e in &self.excluded {
            w.write_record([
                e.index.to_string(),
                e.method.clone(),
                e.beta.to_string(),
                e.class.to_string(),
                e.reason.to_string(),
            ])
            .map_err(csv_err)?;
        }
        w.flush().map_err(|e| Error::io("<report>", e))
    }

    /// Human-readable overall table with three decimals.
    pub fn render_table(&self) -> String {
        let mut out = format!(
            "{:<16} {:>8} {:>8} {:>8} {:>8} {:>6}\n",
            "method", "overall", "music", "solo", "voice", "n"
        );
        for m in &self.methods {
            let c = |class| {
                m.per_class
                    .get(&class)
                    .map(|c: &CellMean| format!("{:.3}", c.mean))
                    .unwrap_or_else(|| "-".into())
            };
            out.push_str(&format!(
                "{:<16} {:>8.3} {:>8} {:>8} {:>8} {:>6}\n",
                m.method,
                m.overall.mean,
                c(FileClass::Music),
                c(FileClass::Solo),
                c(FileClass::Voice),
                m.overall.count
            ));
        }
        out.push_str(&format!(
            "rows: {} total, {} included, {} excluded\n",
            self.total,
            self.included,
            self.excluded.len()
        ));
        out
    }

    /// Writes every report file into `dir`.
    pub fn write_all(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        self.write_overall(create(&dir.join("overall.csv"))?)?;
        for c in FileClass::ALL {
            self.write_class(c, create(&dir.join(format!("class_{c}.csv")))?)?;
            self.write_series(Some(c), create(&dir.join(format!("series_{c}.csv")))?)?;
        }
        self.write_series(None, create(&dir.join("series_all.csv"))?)?;
        self.write_exclusions(create(&dir.join("exclusions.csv"))?)?;
        let table = dir.join("overall.txt");
        std::fs::write(&table, self.render_table()).map_err(|e| Error::io(&table, e))
    }
}

/// Results file columns written by prediction and read by evaluation.
pub const RESULT_COLUMNS: [&str; 6] = ["ref_id", "test_id", "method", "beta", "class", "omos"];

pub fn write_results(rows: &[ScoredRow], writer: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(RESULT_COLUMNS).map_err(csv_err)?;
    for r in rows {
        w.write_record([
            r.ref_id.clone(),
            r.test_id.clone(),
            r.method.clone(),
            r.beta.to_string(),
            r.class.to_string(),
            r.omos.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io("<results>", e))
}

pub fn read_results(reader: impl std::io::Read) -> Result<Vec<ScoredRow>> {
    let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = r.headers().map_err(csv_err)?.clone();
    let mut idx = [0usize; 6];
    for (slot, name) in idx.iter_mut().zip(RESULT_COLUMNS) {
        *slot = headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Parse(format!("results file lacks column '{name}'")))?;
    }
    let mut rows = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        let f = |k: usize| rec.get(idx[k]).unwrap_or("");
        let num = |k: usize| {
            f(k).parse::<f64>()
                .map_err(|_| Error::Parse(format!("results line {}: bad {}", i + 2, RESULT_COLUMNS[k])))
        };
        rows.push(ScoredRow {
            ref_id: f(0).into(),
            test_id: f(1).into(),
            method: f(2).into(),
            beta: num(3)?,
            class: f(4).parse()?,
            omos: num(5)?,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(method: &str, beta: f64, class: FileClass, omos: f64) -> ScoredRow {
        ScoredRow {
            ref_id: "r".into(),
            test_id: "t".into(),
            method: method.into(),
            beta,
            class,
            omos,
        }
    }

    #[test]
    fn exclusions_and_hand_means() {
        let rows = vec![
            row("A", 0.5, FileClass::Music, 3.0),
            row("A", 1.5, FileClass::Solo, 4.0),
            row("B", 0.5, FileClass::Music, 2.0),
            row("B", 0.8, FileClass::Voice, 2.5),
            row("A", 1.0, FileClass::Music, 5.0),
            row("B", 0.22, FileClass::Music, 1.0),
        ];
        let rep = evaluate(&rows);
        assert_eq!(rep.total, 6);
        assert_eq!(rep.included, 4);
        assert_eq!(rep.excluded.len(), 2);
        assert_eq!(rep.excluded[0].reason, "beta == 1");
        assert_eq!(rep.excluded[1].reason, "beta < 0.25");
        assert_eq!(rep.methods[0].method, "B");
        assert_eq!(rep.methods[0].overall.mean, 2.25);
        assert_eq!(rep.methods[1].overall.mean, 3.5);
        assert_eq!(rep.methods[1].per_class[&FileClass::Solo].mean, 4.0);
        assert!(rep.methods[1].per_class.get(&FileClass::Voice).is_none());
    }

    #[test]
    fn permutation_invariant() {
        let rows: Vec<ScoredRow> = (0..40)
            .map(|i| {
                row(
                    ["A", "B", "C"][i % 3],
                    [0.3, 0.5383, 0.8, 1.0, 1.2][i % 5],
                    FileClass::ALL[i % 3],
                    1.0 + (i as f64 * 0.37) % 4.0,
                )
            })
            .collect();
        let mut rev = rows.clone();
        rev.reverse();
        let (a, b) = (evaluate(&rows), evaluate(&rev));
        assert_eq!(a.methods, b.methods);
        assert_eq!(a.series, b.series);
    }

    #[test]
    fn results_round_trip() {
        let rows = vec![row("A", 0.5383, FileClass::Voice, 3.123456789)];
        let mut buf = Vec::new();
        write_results(&rows, &mut buf).unwrap();
        assert_eq!(read_results(buf.as_slice()).unwrap(), rows);
    }
}
