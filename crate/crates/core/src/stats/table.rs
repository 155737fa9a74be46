//! Column-oriented data table consumed by the model fitters.

use serde::{Deserialize, Serialize};

use super::StatsError;
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Column<T> {
    Numeric(Vec<T>),
    Categorical(Vec<String>),
}

impl<T> Column<T> {
    pub fn len(&self) -> usize {
        match self {
            Column::Numeric(v) => v.len(),
            Column::Categorical(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Table<T> {
    names: Vec<String>,
    columns: Vec<Column<T>>,
}

impl<T: Scalar> Table<T> {
    pub fn new() -> Self {
        Self { names: Vec::new(), columns: Vec::new() }
    }

    pub fn nrows(&self) -> usize {
        self.columns.first().map_or(0, Column::len)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    fn push(&mut self, name: &str, col: Column<T>) -> Result<(), StatsError> {
        if self.names.iter().any(|n| n == name) {
            return Err(StatsError::DuplicateTerm(name.to_string()));
        }
        if !self.columns.is_empty() && col.len() != self.nrows() {
            return Err(StatsError::LengthMismatch(self.nrows(), col.len()));
        }
        self.names.push(name.to_string());
        self.columns.push(col);
        Ok(())
    }

    pub fn push_numeric(&mut self, name: &str, values: Vec<T>) -> Result<(), StatsError> {
        self.push(name, Column::Numeric(values))
    }

    pub fn push_categorical<S: Into<String>>(
        &mut self,
        name: &str,
        values: impl IntoIterator<Item = S>,
    ) -> Result<(), StatsError> {
        self.push(name, Column::Categorical(values.into_iter().map(Into::into).collect()))
    }

    pub fn with_numeric(mut self, name: &str, values: Vec<T>) -> Result<Self, StatsError> {
        self.push_numeric(name, values)?;
        Ok(self)
    }

    pub fn with_categorical<S: Into<String>>(
        mut self,
        name: &str,
        values: impl IntoIterator<Item = S>,
    ) -> Result<Self, StatsError> {
        self.push_categorical(name, values)?;
        Ok(self)
    }

    pub fn column(&self, name: &str) -> Result<&Column<T>, StatsError> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| &self.columns[i])
            .ok_or_else(|| StatsError::UnknownColumn(name.to_string()))
    }

    pub fn numeric(&self, name: &str) -> Result<&[T], StatsError> {
        match self.column(name)? {
            Column::Numeric(v) => Ok(v),
            Column::Categorical(_) => Err(StatsError::NotNumeric(name.to_string())),
        }
    }

    pub fn categorical(&self, name: &str) -> Result<&[String], StatsError> {
        match self.column(name)? {
            Column::Categorical(v) => Ok(v),
            Column::Numeric(_) => Err(StatsError::NotCategorical(name.to_string())),
        }
    }

    /// New table with rows taken in the order of `rows`.
    pub fn select_rows(&self, rows: &[usize]) -> Self {
        let columns = self
            .columns
            .iter()
            .map(|c| match c {
                Column::Numeric(v) => Column::Numeric(rows.iter().map(|&i| v[i]).collect()),
                Column::Categorical(v) => Column::Categorical(rows.iter().map(|&i| v[i].clone()).collect()),
            })
            .collect();
        Self { names: self.names.clone(), columns }
    }
}
