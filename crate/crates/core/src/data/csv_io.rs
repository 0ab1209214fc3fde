use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::dataset::{Column, SiteDataset, SplitTag};
use super::schema::{Schema, VariableKind};
use crate::{Error, Result};

/// Optional column carrying split membership in site files.
pub const SPLIT_COLUMN: &str = "split";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FilterOp {
    #[serde(rename = ">=")]
    Ge,
    #[serde(rename = ">")]
    Gt,
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = "<")]
    Lt,
}

/// Keeps rows whose numeric `column` satisfies `op value`, e.g. `age>=18`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowFilter {
    pub column: String,
    pub op: FilterOp,
    pub value: f64,
}

impl RowFilter {
    fn keeps(&self, x: f64) -> bool {
        match self.op {
            FilterOp::Ge => x >= self.value,
            FilterOp::Gt => x > self.value,
            FilterOp::Le => x <= self.value,
            FilterOp::Lt => x < self.value,
        }
    }
}

impl FromStr for RowFilter {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        for (tok, op) in [
            (">=", FilterOp::Ge),
            ("<=", FilterOp::Le),
            (">", FilterOp::Gt),
            ("<", FilterOp::Lt),
        ] {
            if let Some((col, val)) = s.split_once(tok) {
                let value: f64 = val
                    .trim()
                    .parse()
                    .map_err(|_| Error::config(format!("bad filter value in `{s}`")))?;
                return Ok(RowFilter {
                    column: col.trim().to_string(),
                    op,
                    value,
                });
            }
        }
        Err(Error::config(format!(
            "filter `{s}` must look like column>=value"
        )))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IngestOptions {
    #[serde(default)]
    pub filters: Vec<RowFilter>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestReport {
    pub rows_read: usize,
    pub rows_kept: usize,
    pub excluded_missing: usize,
    pub excluded_by_filter: usize,
}

fn is_missing(cell: &str) -> bool {
    let t = cell.trim();
    t.is_empty() || t.eq_ignore_ascii_case("na")
}

pub fn load_csv(path: &Path, schema: &Schema) -> Result<(SiteDataset, IngestReport)> {
    load_csv_with(path, schema, &IngestOptions::default())
}

pub fn load_csv_with(
    path: &Path,
    schema: &Schema,
    opts: &IngestOptions,
) -> Result<(SiteDataset, IngestReport)> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv(file, schema, opts).map_err(|e| match e {
        Error::Data(msg) => Error::Data(format!("{}: {msg}", path.display())),
        other => other,
    })
}

pub(crate) fn read_csv<R: Read>(
    reader: R,
    schema: &Schema,
    opts: &IngestOptions,
) -> Result<(SiteDataset, IngestReport)> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| Error::data(format!("cannot read header: {e}")))?
        .clone();
    if headers.is_empty() || (headers.len() == 1 && headers[0].is_empty()) {
        return Err(Error::data("empty file"));
    }

    let mut var_col = vec![usize::MAX; schema.len()];
    let mut outcome_col = None;
    let mut split_col = None;
    for (i, h) in headers.iter().enumerate() {
        let h = h.trim();
        if h == schema.outcome_name {
            outcome_col = Some(i);
        } else if h == SPLIT_COLUMN && schema.index_of(h).is_none() {
            split_col = Some(i);
        } else if let Some(v) = schema.index_of(h) {
            var_col[v] = i;
        } else {
            return Err(Error::data(format!("unknown column `{h}`")));
        }
    }
    if let Some(v) = var_col.iter().position(|&c| c == usize::MAX) {
        return Err(Error::data(format!(
            "column `{}` missing from header",
            schema.variables[v].name
        )));
    }
    let outcome_col = outcome_col
        .ok_or_else(|| Error::data(format!("outcome column `{}` missing", schema.outcome_name)))?;
    for f in &opts.filters {
        match schema.variable(&f.column) {
            Some(v) if v.kind == VariableKind::Continuous => {}
            _ => {
                return Err(Error::config(format!(
                    "filter column `{}` is not a continuous variable",
                    f.column
                )))
            }
        }
    }

    let mut columns: Vec<Column> = schema
        .variables
        .iter()
        .map(|v| match v.kind {
            VariableKind::Continuous => Column::Continuous(Vec::new()),
            VariableKind::Categorical => Column::Categorical(Vec::new()),
        })
        .collect();
    let mut outcome = Vec::new();
    let mut split = Vec::new();
    let mut report = IngestReport::default();
    let mut parsed_cont = vec![0.0; schema.len()];
    let mut parsed_cat = vec![0u32; schema.len()];

    for (r, record) in rdr.records().enumerate() {
        let line = r + 2;
        let record = record.map_err(|e| Error::data(format!("line {line}: {e}")))?;
        report.rows_read += 1;
        let cell = |i: usize| record.get(i).unwrap_or("");

        let mut missing = is_missing(cell(outcome_col));
        for (v, spec) in schema.variables.iter().enumerate() {
            if is_missing(cell(var_col[v])) {
                missing = true;
                continue;
            }
            let raw = cell(var_col[v]).trim();
            match spec.kind {
                VariableKind::Continuous => {
                    let x: f64 = raw.parse().map_err(|_| {
                        Error::data(format!(
                            "line {line}, column `{}`: `{raw}` is not a number",
                            spec.name
                        ))
                    })?;
                    if !x.is_finite() {
                        return Err(Error::data(format!(
                            "line {line}, column `{}`: non-finite value",
                            spec.name
                        )));
                    }
                    parsed_cont[v] = x;
                }
                VariableKind::Categorical => {
                    parsed_cat[v] = spec.category_index(raw).ok_or_else(|| {
                        Error::data(format!(
                            "line {line}, column `{}`: label `{raw}` is not one of {:?}",
                            spec.name, spec.categories
                        ))
                    })?;
                }
            }
        }
        if missing {
            report.excluded_missing += 1;
            continue;
        }
        let y = match cell(outcome_col).trim() {
            "0" => 0u8,
            "1" => 1u8,
            other => {
                return Err(Error::data(format!(
                    "line {line}, column `{}`: outcome `{other}` is not 0 or 1",
                    schema.outcome_name
                )))
            }
        };
        let tag = match split_col {
            Some(c) => SplitTag::parse(cell(c).trim()).ok_or_else(|| {
                Error::data(format!("line {line}: unknown split tag `{}`", cell(c)))
            })?,
            None => SplitTag::Train,
        };
        let passes = opts.filters.iter().all(|f| {
            let v = schema.index_of(&f.column).expect("checked above");
            f.keeps(parsed_cont[v])
        });
        if !passes {
            report.excluded_by_filter += 1;
            continue;
        }
        for (v, col) in columns.iter_mut().enumerate() {
            match col {
                Column::Continuous(xs) => xs.push(parsed_cont[v]),
                Column::Categorical(cs) => cs.push(parsed_cat[v]),
            }
        }
        outcome.push(y);
        split.push(tag);
    }

    if report.rows_read == 0 {
        return Err(Error::data("empty file: no data rows"));
    }
    report.rows_kept = outcome.len();
    if outcome.is_empty() {
        return Err(Error::data(
            "no rows left after excluding missing values and filters",
        ));
    }
    if report.excluded_missing > 0 {
        log::info!(
            "excluded {} rows with missing values",
            report.excluded_missing
        );
    }
    let ds = SiteDataset {
        site_id: 1,
        schema: schema.clone(),
        columns,
        outcome,
        split,
    };
    ds.check()?;
    Ok((ds, report))
}

/// Writes the dataset with a trailing `split` column. Floats use the
/// shortest representation that parses back to the same value.
pub fn write_csv(path: &Path, data: &SiteDataset) -> Result<()> {
    let mut buf = Vec::new();
    write_csv_to(&mut buf, data)?;
    std::fs::write(path, buf).map_err(|e| Error::io(path, e))
}

pub(crate) fn write_csv_to<W: Write>(out: W, data: &SiteDataset) -> Result<()> {
    let mut w = csv::WriterBuilder::new().from_writer(out);
    let csv_err = |e: csv::Error| Error::data(format!("csv write: {e}"));
    let mut header: Vec<&str> = data.schema.names().collect();
    header.push(&data.schema.outcome_name);
    header.push(SPLIT_COLUMN);
    w.write_record(&header).map_err(csv_err)?;
    let mut row: Vec<String> = Vec::with_capacity(header.len());
    for i in 0..data.n_rows() {
        row.clear();
        for (v, col) in data.columns.iter().enumerate() {
            row.push(match col {
                Column::Continuous(xs) => format!("{}", xs[i]),
                Column::Categorical(cs) => {
                    data.schema.variables[v].categories[cs[i] as usize].clone()
                }
            });
        }
        row.push(data.outcome[i].to_string());
        row.push(data.split[i].as_str().to_string());
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush()
        .map_err(|e| Error::data(format!("csv write: {e}")))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::VariableSpec;

    fn schema() -> Schema {
        Schema::new(
            vec![
                VariableSpec::continuous("age"),
                VariableSpec::categorical("triage", ["P1", "P2", "P3", "P4"]),
            ],
            "death",
        )
        .unwrap()
    }

    fn read(text: &str) -> Result<(SiteDataset, IngestReport)> {
        read_csv(text.as_bytes(), &schema(), &IngestOptions::default())
    }

    #[test]
    fn three_matching_rows() {
        let (ds, rep) = read("age,triage,death\n30,P1,0\n71.5,P3,1\n45,P2,0\n").unwrap();
        assert_eq!(ds.n_rows(), 3);
        assert_eq!(rep.excluded_missing, 0);
        assert_eq!(ds.label(1, 1), Some("P3"));
    }

    #[test]
    fn missing_cell_excludes_row() {
        let (ds, rep) = read("age,triage,death\n30,P1,0\n,P3,1\n45,P2,0\n").unwrap();
        assert_eq!(ds.n_rows(), 2);
        assert_eq!(rep.excluded_missing, 1);
        assert_eq!(rep.rows_read, 3);
    }

    #[test]
    fn unknown_label_names_line_and_column() {
        let err = read("age,triage,death\n30,P1,0\n40,P5,1\n")
            .unwrap_err()
            .to_string();
        assert!(err.contains("line 3"), "{err}");
        assert!(err.contains("triage"), "{err}");
        assert!(err.contains("P5"), "{err}");
    }

    #[test]
    fn header_and_value_errors() {
        assert!(read("age,triage,death,extra\n1,P1,0,3\n").is_err());
        assert!(read("age,death\n1,0\n").is_err());
        assert!(read("age,triage,death\nold,P1,0\n").is_err());
        assert!(read("").is_err());
        assert!(read("age,triage,death\n").is_err());
    }

    #[test]
    fn filter_drops_minors() {
        let opts = IngestOptions {
            filters: vec!["age>=18".parse().unwrap()],
        };
        let (ds, rep) = read_csv(
            "age,triage,death\n12,P1,0\n30,P1,1\n18,P2,0\n".as_bytes(),
            &schema(),
            &opts,
        )
        .unwrap();
        assert_eq!(ds.n_rows(), 2);
        assert_eq!(rep.excluded_by_filter, 1);
    }

    #[test]
    fn write_then_read_is_lossless() {
        let (mut ds, _) = read("age,triage,death\n30.125,P1,0\n0.1,P3,1\n").unwrap();
        ds.split[1] = SplitTag::Test;
        let mut buf = Vec::new();
        write_csv_to(&mut buf, &ds).unwrap();
        let (back, _) = read_csv(buf.as_slice(), &schema(), &IngestOptions::default()).unwrap();
        assert_eq!(back, ds);
    }
}
