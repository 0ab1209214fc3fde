use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{Error, Result, FORMAT_VERSION};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VariableKind {
    Continuous,
    Categorical,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariableSpec {
    pub name: String,
    pub kind: VariableKind,
    /// Ordered category labels; empty for continuous variables.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub categories: Vec<String>,
    #[serde(default)]
    pub forced_include: bool,
}

impl VariableSpec {
    pub fn continuous(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            kind: VariableKind::Continuous,
            categories: Vec::new(),
            forced_include: false,
        }
    }

    pub fn categorical<S: Into<String>>(
        name: impl Into<String>,
        categories: impl IntoIterator<Item = S>,
    ) -> Self {
        Self {
            name: name.into(),
            kind: VariableKind::Categorical,
            categories: categories.into_iter().map(Into::into).collect(),
            forced_include: false,
        }
    }

    pub fn forced(mut self) -> Self {
        self.forced_include = true;
        self
    }

    pub fn is_continuous(&self) -> bool {
        self.kind == VariableKind::Continuous
    }

    pub fn category_index(&self, label: &str) -> Option<u32> {
        self.categories
            .iter()
            .position(|c| c == label)
            .map(|i| i as u32)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schema {
    pub variables: Vec<VariableSpec>,
    pub outcome_name: String,
}

#[derive(Serialize, Deserialize)]
struct SchemaFile {
    format_version: u32,
    #[serde(flatten)]
    schema: Schema,
}

impl Schema {
    pub fn new(variables: Vec<VariableSpec>, outcome_name: impl Into<String>) -> Result<Self> {
        let schema = Self {
            variables,
            outcome_name: outcome_name.into(),
        };
        schema.validate()?;
        Ok(schema)
    }

    /// Checks the invariants of a user-supplied schema.
    pub fn validate(&self) -> Result<()> {
        self.validate_structure()?;
        for v in &self.variables {
            match v.kind {
                VariableKind::Categorical => {
                    let distinct: HashSet<&str> = v.categories.iter().map(String::as_str).collect();
                    if distinct.len() < 2 || distinct.len() != v.categories.len() {
                        return Err(Error::config(format!(
                            "categorical variable `{}` needs at least 2 distinct category labels",
                            v.name
                        )));
                    }
                }
                VariableKind::Continuous => {
                    if !v.categories.is_empty() {
                        return Err(Error::config(format!(
                            "continuous variable `{}` must not list categories",
                            v.name
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// Structural checks shared with derived (binned) schemas, where a
    /// degenerate variable may legitimately collapse to a single category.
    pub(crate) fn validate_structure(&self) -> Result<()> {
        if self.variables.is_empty() {
            return Err(Error::config("schema needs at least one predictor"));
        }
        let mut seen = HashSet::new();
        for v in &self.variables {
            if v.name.is_empty() {
                return Err(Error::config("variable names must be non-empty"));
            }
            if !seen.insert(v.name.as_str()) {
                return Err(Error::config(format!(
                    "duplicate variable name `{}`",
                    v.name
                )));
            }
            if v.kind == VariableKind::Categorical && v.categories.is_empty() {
                return Err(Error::config(format!(
                    "categorical variable `{}` has no categories",
                    v.name
                )));
            }
        }
        if seen.contains(self.outcome_name.as_str()) {
            return Err(Error::config(format!(
                "outcome `{}` is also listed as a predictor",
                self.outcome_name
            )));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.variables.len()
    }

    pub fn is_empty(&self) -> bool {
        self.variables.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.variables.iter().position(|v| v.name == name)
    }

    pub fn variable(&self, name: &str) -> Option<&VariableSpec> {
        self.variables.iter().find(|v| v.name == name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.variables.iter().map(|v| v.name.as_str())
    }

    pub fn forced(&self) -> Vec<String> {
        self.variables
            .iter()
            .filter(|v| v.forced_include)
            .map(|v| v.name.clone())
            .collect()
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: SchemaFile =
            serde_json::from_str(text).map_err(|e| Error::config(format!("schema file: {e}")))?;
        file.schema.validate()?;
        Ok(file.schema)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        let file = SchemaFile {
            format_version: FORMAT_VERSION,
            schema: self.clone(),
        };
        serde_json::to_string_pretty(&file).expect("schema serializes")
    }
}
