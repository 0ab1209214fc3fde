use serde::{Deserialize, Serialize};

use super::schema::{Schema, VariableKind};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitTag {
    Train,
    Validation,
    Test,
}

impl SplitTag {
    pub fn as_str(self) -> &'static str {
        match self {
            SplitTag::Train => "train",
            SplitTag::Validation => "validation",
            SplitTag::Test => "test",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "train" => Some(SplitTag::Train),
            "validation" => Some(SplitTag::Validation),
            "test" => Some(SplitTag::Test),
            _ => None,
        }
    }
}

/// One variable's values for every row. Categorical values are indices
/// into the schema's category list.
#[derive(Debug, Clone, PartialEq)]
pub enum Column {
    Continuous(Vec<f64>),
    Categorical(Vec<u32>),
}

impl Column {
    pub fn len(&self) -> usize {
        match self {
            Column::Continuous(v) => v.len(),
            Column::Categorical(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn take(&self, rows: &[usize]) -> Column {
        match self {
            Column::Continuous(v) => Column::Continuous(rows.iter().map(|&i| v[i]).collect()),
            Column::Categorical(v) => Column::Categorical(rows.iter().map(|&i| v[i]).collect()),
        }
    }

    fn extend_from(&mut self, other: &Column) -> Result<()> {
        match (self, other) {
            (Column::Continuous(a), Column::Continuous(b)) => a.extend_from_slice(b),
            (Column::Categorical(a), Column::Categorical(b)) => a.extend_from_slice(b),
            _ => return Err(Error::data("column kinds differ between datasets")),
        }
        Ok(())
    }
}

/// Rows held by one site. Column-major; all columns have `n_rows` entries.
#[derive(Debug, Clone, PartialEq)]
pub struct SiteDataset {
    pub site_id: u32,
    pub schema: Schema,
    pub columns: Vec<Column>,
    pub outcome: Vec<u8>,
    pub split: Vec<SplitTag>,
}

impl SiteDataset {
    /// Builds a dataset with every row tagged `train`.
    pub fn new(
        site_id: u32,
        schema: Schema,
        columns: Vec<Column>,
        outcome: Vec<u8>,
    ) -> Result<Self> {
        let split = vec![SplitTag::Train; outcome.len()];
        let ds = Self {
            site_id,
            schema,
            columns,
            outcome,
            split,
        };
        ds.check()?;
        Ok(ds)
    }

    pub(crate) fn check(&self) -> Result<()> {
        if self.columns.len() != self.schema.len() {
            return Err(Error::data(format!(
                "{} columns for {} schema variables",
                self.columns.len(),
                self.schema.len()
            )));
        }
        let n = self.outcome.len();
        if self.split.len() != n {
            return Err(Error::data("split tags do not match row count"));
        }
        if self.outcome.iter().any(|&y| y > 1) {
            return Err(Error::data("outcome values must be 0 or 1"));
        }
        for (col, spec) in self.columns.iter().zip(&self.schema.variables) {
            if col.len() != n {
                return Err(Error::data(format!(
                    "column `{}` has wrong length",
                    spec.name
                )));
            }
            match (col, spec.kind) {
                (Column::Continuous(v), VariableKind::Continuous) => {
                    if v.iter().any(|x| !x.is_finite()) {
                        return Err(Error::data(format!("non-finite value in `{}`", spec.name)));
                    }
                }
                (Column::Categorical(v), VariableKind::Categorical) => {
                    let k = spec.categories.len() as u32;
                    if v.iter().any(|&c| c >= k) {
                        return Err(Error::data(format!(
                            "category index out of range in `{}`",
                            spec.name
                        )));
                    }
                }
                _ => {
                    return Err(Error::data(format!(
                        "column `{}` does not match its declared kind",
                        spec.name
                    )))
                }
            }
        }
        Ok(())
    }

    pub fn n_rows(&self) -> usize {
        self.outcome.len()
    }

    pub fn column(&self, name: &str) -> Option<&Column> {
        self.schema.index_of(name).map(|i| &self.columns[i])
    }

    /// Rows in the given order (duplicates allowed).
    pub fn take_rows(&self, rows: &[usize]) -> SiteDataset {
        SiteDataset {
            site_id: self.site_id,
            schema: self.schema.clone(),
            columns: self.columns.iter().map(|c| c.take(rows)).collect(),
            outcome: rows.iter().map(|&i| self.outcome[i]).collect(),
            split: rows.iter().map(|&i| self.split[i]).collect(),
        }
    }

    pub fn rows_tagged(&self, tag: SplitTag) -> Vec<usize> {
        (0..self.n_rows())
            .filter(|&i| self.split[i] == tag)
            .collect()
    }

    pub fn subset(&self, tag: SplitTag) -> SiteDataset {
        self.take_rows(&self.rows_tagged(tag))
    }

    pub fn count_tag(&self, tag: SplitTag) -> usize {
        self.split.iter().filter(|&&t| t == tag).count()
    }

    pub fn positives(&self) -> usize {
        self.outcome.iter().filter(|&&y| y == 1).count()
    }

    pub fn has_both_classes(&self) -> bool {
        let pos = self.positives();
        pos > 0 && pos < self.n_rows()
    }

    /// Label of a categorical cell.
    pub fn label(&self, var: usize, row: usize) -> Option<&str> {
        match &self.columns[var] {
            Column::Categorical(v) => {
                Some(self.schema.variables[var].categories[v[row] as usize].as_str())
            }
            Column::Continuous(_) => None,
        }
    }

    /// Row-wise concatenation of datasets sharing a schema. Only the pooled
    /// baseline uses this; federated code never sees another site's rows.
    pub fn concat(parts: &[SiteDataset], site_id: u32) -> Result<SiteDataset> {
        let first = parts
            .first()
            .ok_or_else(|| Error::data("nothing to concatenate"))?;
        let mut out = first.clone();
        out.site_id = site_id;
        for p in &parts[1..] {
            if p.schema != first.schema {
                return Err(Error::data(
                    "cannot concatenate datasets with different schemas",
                ));
            }
            for (a, b) in out.columns.iter_mut().zip(&p.columns) {
                a.extend_from(b)?;
            }
            out.outcome.extend_from_slice(&p.outcome);
            out.split.extend_from_slice(&p.split);
        }
        Ok(out)
    }
}
