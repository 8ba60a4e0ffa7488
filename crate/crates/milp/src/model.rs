use std::collections::HashMap;
use std::fmt;

use crate::error::{MilpError, Result};

/// Column handle returned by [`Model::add_continuous`] and [`Model::add_binary`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Col(pub usize);

/// Row handle returned by [`Model::add_row`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RowId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarKind {
    Continuous,
    Binary,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Comparator {
    Le,
    Ge,
    Eq,
}

impl fmt::Display for Comparator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Comparator::Le => "<=",
            Comparator::Ge => ">=",
            Comparator::Eq => "=",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Column {
    pub name: String,
    pub lower: f64,
    pub upper: f64,
    pub obj: f64,
    pub kind: VarKind,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub name: String,
    pub terms: Vec<(Col, f64)>,
    pub cmp: Comparator,
    pub rhs: f64,
}

impl Row {
    pub fn activity(&self, x: &[f64]) -> f64 {
        self.terms.iter().map(|&(c, a)| a * x[c.0]).sum()
    }

    /// Amount by which `x` violates this row (zero when satisfied).
    pub fn violation(&self, x: &[f64]) -> f64 {
        let act = self.activity(x);
        match self.cmp {
            Comparator::Le => (act - self.rhs).max(0.0),
            Comparator::Ge => (self.rhs - act).max(0.0),
            Comparator::Eq => (act - self.rhs).abs(),
        }
    }
}

/// A maximization problem over bounded columns, some of them restricted to {0, 1}.
///
/// `objective = offset + sum(obj_j * x_j)`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Model {
    pub columns: Vec<Column>,
    pub rows: Vec<Row>,
    pub offset: f64,
    names: HashMap<String, usize>,
}

impl Model {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn num_cols(&self) -> usize {
        self.columns.len()
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn add_continuous(&mut self, name: impl Into<String>, lower: f64, upper: f64, obj: f64) -> Col {
        self.push_column(Column {
            name: name.into(),
            lower,
            upper,
            obj,
            kind: VarKind::Continuous,
        })
    }

    pub fn add_binary(&mut self, name: impl Into<String>, obj: f64) -> Col {
        self.push_column(Column {
            name: name.into(),
            lower: 0.0,
            upper: 1.0,
            obj,
            kind: VarKind::Binary,
        })
    }

    fn push_column(&mut self, column: Column) -> Col {
        let idx = self.columns.len();
        // Later duplicates are caught by `validate`; the lookup keeps the first.
        self.names.entry(column.name.clone()).or_insert(idx);
        self.columns.push(column);
        Col(idx)
    }

    pub fn add_row(
        &mut self,
        name: impl Into<String>,
        terms: impl IntoIterator<Item = (Col, f64)>,
        cmp: Comparator,
        rhs: f64,
    ) -> RowId {
        let mut merged: Vec<(Col, f64)> = Vec::new();
        for (c, a) in terms {
            if a == 0.0 {
                continue;
            }
            match merged.iter_mut().find(|(k, _)| *k == c) {
                Some((_, v)) => *v += a,
                None => merged.push((c, a)),
            }
        }
        merged.retain(|&(_, a)| a != 0.0);
        self.rows.push(Row {
            name: name.into(),
            terms: merged,
            cmp,
            rhs,
        });
        RowId(self.rows.len() - 1)
    }

    pub fn set_obj(&mut self, col: Col, obj: f64) {
        self.columns[col.0].obj = obj;
    }

    pub fn add_obj(&mut self, col: Col, delta: f64) {
        self.columns[col.0].obj += delta;
    }

    pub fn set_bounds(&mut self, col: Col, lower: f64, upper: f64) {
        self.columns[col.0].lower = lower;
        self.columns[col.0].upper = upper;
    }

    pub fn column_by_name(&self, name: &str) -> Option<Col> {
        self.names.get(name).copied().map(Col)
    }

    pub fn binaries(&self) -> Vec<Col> {
        self.columns
            .iter()
            .enumerate()
            .filter(|(_, c)| c.kind == VarKind::Binary)
            .map(|(j, _)| Col(j))
            .collect()
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.offset
            + self
                .columns
                .iter()
                .zip(x)
                .map(|(c, v)| c.obj * v)
                .sum::<f64>()
    }

    /// Largest row violation, bound violation or (for binaries) distance to {0,1}.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let rows = self.rows.iter().map(|r| r.violation(x)).fold(0.0, f64::max);
        let bounds = self
            .columns
            .iter()
            .zip(x)
            .map(|(c, &v)| {
                let b = (c.lower - v).max(v - c.upper).max(0.0);
                match c.kind {
                    VarKind::Binary => b.max(v.min(1.0 - v).max(0.0)),
                    VarKind::Continuous => b,
                }
            })
            .fold(0.0, f64::max);
        rows.max(bounds)
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = HashMap::with_capacity(self.columns.len());
        for c in &self.columns {
            if seen.insert(c.name.as_str(), ()).is_some() {
                return Err(MilpError::DuplicateName(c.name.clone()));
            }
            if !c.lower.is_finite() || !c.upper.is_finite() {
                return Err(MilpError::UnboundedColumn(c.name.clone()));
            }
            if c.lower > c.upper {
                return Err(MilpError::InvertedBounds {
                    name: c.name.clone(),
                    lower: c.lower,
                    upper: c.upper,
                });
            }
        }
        for r in &self.rows {
            if let Some(&(c, _)) = r.terms.iter().find(|(c, _)| c.0 >= self.columns.len()) {
                return Err(MilpError::UnknownColumn {
                    row: r.name.clone(),
                    col: c.0,
                });
            }
        }
        Ok(())
    }
}
