//! Model description and design-matrix expansion.
//!
//! A [`ModelSpec`] names columns of a table; [`ModelSpec::design`] expands
//! its terms into the `p` design columns shared by the in-memory path and the
//! SQL generator, so both evaluate exactly the same `x_i`.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use super::{Family, Link};
use crate::error::{Error, Result};

pub const INTERCEPT_LABEL: &str = "(Intercept)";

/// The response column, or an indicator of one level of a text column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Response {
    Column(String),
    Indicator { column: String, level: String },
}

impl Response {
    pub fn column(&self) -> &str {
        match self {
            Response::Column(c) => c,
            Response::Indicator { column, .. } => column,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Categorical {
    pub column: String,
    /// Sorted level list; empty until enumerated from the table.
    pub levels: Vec<String>,
    /// Overrides the default reference (the first level).
    pub reference: Option<String>,
}

impl Categorical {
    pub fn new(column: impl Into<String>) -> Self {
        Self {
            column: column.into(),
            levels: Vec::new(),
            reference: None,
        }
    }

    pub fn is_resolved(&self) -> bool {
        !self.levels.is_empty()
    }

    pub fn reference_level(&self) -> Option<&str> {
        self.reference.as_deref().or(self.levels.first().map(String::as_str))
    }

    /// Levels that receive an indicator column.
    pub fn contrast_levels(&self) -> Result<Vec<&str>> {
        if self.levels.is_empty() {
            return Err(Error::InvalidSpec(format!(
                "levels of categorical column {:?} have not been enumerated",
                self.column
            )));
        }
        if self.levels.len() < 2 {
            return Err(Error::TooFewLevels {
                column: self.column.clone(),
                count: self.levels.len(),
            });
        }
        let mut seen = HashSet::new();
        if let Some(dup) = self.levels.iter().find(|l| !seen.insert(l.as_str())) {
            return Err(Error::InvalidSpec(format!(
                "level {dup:?} of {:?} is listed twice",
                self.column
            )));
        }
        let reference = self.reference_level().unwrap_or_default();
        if !self.levels.iter().any(|l| l == reference) {
            return Err(Error::InvalidSpec(format!(
                "reference level {reference:?} is not a level of {:?}",
                self.column
            )));
        }
        Ok(self
            .levels
            .iter()
            .map(String::as_str)
            .filter(|l| *l != reference)
            .collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Term {
    Intercept,
    Numeric(String),
    Categorical(Categorical),
    Interaction(Vec<Term>),
}

/// One multiplicative factor of a design column.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Factor {
    Numeric(String),
    Indicator { column: String, level: String },
}

/// A design column: the product of its factors (empty product = intercept).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DesignColumn {
    pub label: String,
    pub factors: Vec<Factor>,
}

impl DesignColumn {
    fn intercept() -> Self {
        Self {
            label: INTERCEPT_LABEL.to_string(),
            factors: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RawKind {
    Numeric,
    Text,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub table: String,
    pub response: Response,
    pub terms: Vec<Term>,
    pub family: Family,
    pub link: Link,
    /// Raw SQL row predicate, ANDed into every query.
    pub filter: Option<String>,
    pub intercept_suppressed: bool,
}

impl ModelSpec {
    /// A model with an intercept and no other terms.
    pub fn new(table: impl Into<String>, response: Response, family: Family, link: Link) -> Self {
        Self {
            table: table.into(),
            response,
            terms: vec![Term::Intercept],
            family,
            link,
            filter: None,
            intercept_suppressed: false,
        }
    }

    pub fn numeric(mut self, column: impl Into<String>) -> Self {
        self.terms.push(Term::Numeric(column.into()));
        self
    }

    pub fn categorical(mut self, column: impl Into<String>) -> Self {
        self.terms.push(Term::Categorical(Categorical::new(column)));
        self
    }

    pub fn term(mut self, term: Term) -> Self {
        self.terms.push(term);
        self
    }

    pub fn with_filter(mut self, predicate: impl Into<String>) -> Self {
        self.filter = Some(predicate.into());
        self
    }

    pub fn without_intercept(mut self) -> Self {
        self.terms.retain(|t| *t != Term::Intercept);
        self.intercept_suppressed = true;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !self.family.supports(self.link) {
            return Err(Error::Unsupported {
                family: self.family,
                link: self.link,
            });
        }
        let intercepts = self.terms.iter().filter(|t| **t == Term::Intercept).count();
        match (self.intercept_suppressed, intercepts) {
            (false, 1) | (true, 0) => {}
            (false, k) => {
                return Err(Error::InvalidSpec(format!(
                    "expected exactly one intercept term, found {k}"
                )))
            }
            (true, _) => {
                return Err(Error::InvalidSpec(
                    "intercept is suppressed but an intercept term is present".into(),
                ))
            }
        }
        for term in &self.terms {
            if let Term::Interaction(parts) = term {
                if parts.len() < 2 || parts.contains(&Term::Intercept) {
                    return Err(Error::InvalidSpec(
                        "an interaction needs at least two non-intercept terms".into(),
                    ));
                }
            }
        }
        let design = self.design()?;
        if design.is_empty() {
            return Err(Error::InvalidSpec("model has no columns".into()));
        }
        let mut seen = HashSet::new();
        for col in &design {
            if !seen.insert(col.label.as_str()) {
                return Err(Error::InvalidSpec(format!(
                    "design column {:?} appears twice",
                    col.label
                )));
            }
        }
        Ok(())
    }

    /// Expanded design columns, in term order.
    pub fn design(&self) -> Result<Vec<DesignColumn>> {
        let mut out = Vec::new();
        for term in &self.terms {
            out.extend(expand_term(term)?);
        }
        Ok(out)
    }

    pub fn labels(&self) -> Result<Vec<String>> {
        Ok(self.design()?.into_iter().map(|c| c.label).collect())
    }

    pub fn n_params(&self) -> Result<usize> {
        Ok(self.design()?.len())
    }

    /// Categorical terms (including those nested in interactions), mutable.
    pub fn categoricals_mut(&mut self) -> Vec<&mut Categorical> {
        fn walk<'a>(term: &'a mut Term, out: &mut Vec<&'a mut Categorical>) {
            match term {
                Term::Categorical(c) => out.push(c),
                Term::Interaction(parts) => parts.iter_mut().for_each(|p| walk(p, out)),
                _ => {}
            }
        }
        let mut out = Vec::new();
        for t in &mut self.terms {
            walk(t, &mut out);
        }
        out
    }

    pub fn categoricals(&self) -> Vec<&Categorical> {
        fn walk<'a>(term: &'a Term, out: &mut Vec<&'a Categorical>) {
            match term {
                Term::Categorical(c) => out.push(c),
                Term::Interaction(parts) => parts.iter().for_each(|p| walk(p, out)),
                _ => {}
            }
        }
        let mut out = Vec::new();
        for t in &self.terms {
            walk(t, &mut out);
        }
        out
    }

    /// Distinct raw columns referenced by the model, response first.
    pub fn raw_columns(&self) -> Vec<(String, RawKind)> {
        fn walk(term: &Term, out: &mut Vec<(String, RawKind)>) {
            match term {
                Term::Intercept => {}
                Term::Numeric(c) => push_unique(out, c, RawKind::Numeric),
                Term::Categorical(c) => push_unique(out, &c.column, RawKind::Text),
                Term::Interaction(parts) => parts.iter().for_each(|p| walk(p, out)),
            }
        }
        let mut out = Vec::new();
        let kind = match self.response {
            Response::Column(_) => RawKind::Numeric,
            Response::Indicator { .. } => RawKind::Text,
        };
        push_unique(&mut out, self.response.column(), kind);
        for t in &self.terms {
            walk(t, &mut out);
        }
        out
    }
}

fn push_unique(out: &mut Vec<(String, RawKind)>, column: &str, kind: RawKind) {
    // A column used both as a number and as a category is fetched twice.
    if !out.iter().any(|(c, k)| c == column && *k == kind) {
        out.push((column.to_string(), kind));
    }
}

fn expand_term(term: &Term) -> Result<Vec<DesignColumn>> {
    Ok(match term {
        Term::Intercept => vec![DesignColumn::intercept()],
        Term::Numeric(c) => vec![DesignColumn {
            label: c.clone(),
            factors: vec![Factor::Numeric(c.clone())],
        }],
        Term::Categorical(cat) => cat
            .contrast_levels()?
            .into_iter()
            .map(|level| DesignColumn {
                label: format!("{}[{}]", cat.column, level),
                factors: vec![Factor::Indicator {
                    column: cat.column.clone(),
                    level: level.to_string(),
                }],
            })
            .collect(),
        Term::Interaction(parts) => {
            let mut acc = vec![DesignColumn {
                label: String::new(),
                factors: Vec::new(),
            }];
            for part in parts {
                let cols = expand_term(part)?;
                let mut next = Vec::with_capacity(acc.len() * cols.len());
                for a in &acc {
                    for c in &cols {
                        let label = if a.label.is_empty() {
                            c.label.clone()
                        } else {
                            format!("{}:{}", a.label, c.label)
                        };
                        let mut factors = a.factors.clone();
                        factors.extend(c.factors.iter().cloned());
                        next.push(DesignColumn { label, factors });
                    }
                }
                acc = next;
            }
            acc
        }
    })
}

/// A raw cell fetched from the table.
#[derive(Debug, Clone, PartialEq)]
pub enum RawValue {
    Num(f64),
    Text(String),
}

/// Maps raw rows (ordered as [`ModelSpec::raw_columns`]) to design rows.
#[derive(Debug, Clone)]
pub struct DesignEvaluator {
    response: CompiledFactor,
    columns: Vec<Vec<CompiledFactor>>,
    labels: Vec<String>,
}

#[derive(Debug, Clone)]
enum CompiledFactor {
    Num(usize),
    Ind(usize, String),
}

impl CompiledFactor {
    fn eval(&self, row: &[RawValue]) -> Result<f64> {
        match self {
            CompiledFactor::Num(i) => match &row[*i] {
                RawValue::Num(v) => Ok(*v),
                RawValue::Text(t) => t.trim().parse::<f64>().map_err(|_| {
                    Error::InvalidSpec(format!("non-numeric value {t:?} in a numeric column"))
                }),
            },
            CompiledFactor::Ind(i, level) => Ok(match &row[*i] {
                RawValue::Text(t) => (t == level) as u8 as f64,
                RawValue::Num(v) => (v.to_string() == *level) as u8 as f64,
            }),
        }
    }
}

impl DesignEvaluator {
    pub fn new(spec: &ModelSpec) -> Result<Self> {
        let raw = spec.raw_columns();
        let index = |name: &str, kind: RawKind| {
            raw.iter()
                .position(|(c, k)| c == name && *k == kind)
                .expect("raw column list covers every factor")
        };
        let response = match &spec.response {
            Response::Column(c) => CompiledFactor::Num(index(c, RawKind::Numeric)),
            Response::Indicator { column, level } => {
                CompiledFactor::Ind(index(column, RawKind::Text), level.clone())
            }
        };
        let design = spec.design()?;
        let labels = design.iter().map(|c| c.label.clone()).collect();
        let columns = design
            .iter()
            .map(|col| {
                col.factors
                    .iter()
                    .map(|f| match f {
                        Factor::Numeric(c) => CompiledFactor::Num(index(c, RawKind::Numeric)),
                        Factor::Indicator { column, level } => {
                            CompiledFactor::Ind(index(column, RawKind::Text), level.clone())
                        }
                    })
                    .collect()
            })
            .collect();
        Ok(Self {
            response,
            columns,
            labels,
        })
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    /// Appends the design row to `x` and returns the response.
    pub fn eval_row(&self, row: &[RawValue], x: &mut Vec<f64>) -> Result<f64> {
        for factors in &self.columns {
            let mut prod = 1.0;
            for f in factors {
                prod *= f.eval(row)?;
            }
            x.push(prod);
        }
        self.response.eval(row)
    }
}

/// Coefficient vector with term labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamVector {
    labels: Vec<String>,
    values: Vec<f64>,
}

impl ParamVector {
    pub fn new(labels: Vec<String>, values: Vec<f64>) -> Result<Self> {
        if labels.len() != values.len() {
            return Err(Error::DimensionMismatch {
                expected: labels.len(),
                found: values.len(),
            });
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidSpec(format!("coefficient {v} is not finite")));
        }
        let mut seen = HashSet::new();
        if let Some(dup) = labels.iter().find(|l| !seen.insert(l.as_str())) {
            return Err(Error::InvalidSpec(format!("duplicate coefficient label {dup:?}")));
        }
        Ok(Self { labels, values })
    }

    pub fn zeros(labels: Vec<String>) -> Self {
        let values = vec![0.0; labels.len()];
        Self { labels, values }
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        Self::new(self.labels.clone(), values)
    }
}

/// In-memory design matrix (row-major, `n x p`) and response.
#[derive(Debug, Clone, PartialEq)]
pub struct SubsampleData {
    labels: Vec<String>,
    x: Vec<f64>,
    y: Vec<f64>,
}

impl SubsampleData {
    pub fn new(labels: Vec<String>, x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        let p = labels.len();
        if p == 0 || x.len() != p * y.len() {
            return Err(Error::DimensionMismatch {
                expected: p * y.len(),
                found: x.len(),
            });
        }
        Ok(Self { labels, x, y })
    }

    /// Evaluates the design on raw rows.
    pub fn from_raw_rows<'a>(
        evaluator: &DesignEvaluator,
        rows: impl IntoIterator<Item = &'a [RawValue]>,
    ) -> Result<Self> {
        let mut x = Vec::new();
        let mut y = Vec::new();
        for row in rows {
            y.push(evaluator.eval_row(row, &mut x)?);
        }
        Ok(Self {
            labels: evaluator.labels().to_vec(),
            x,
            y,
        })
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn p(&self) -> usize {
        self.labels.len()
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        let p = self.p();
        &self.x[i * p..(i + 1) * p]
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    /// Rows `range`, as a new data set.
    pub fn slice(&self, range: std::ops::Range<usize>) -> Self {
        let p = self.p();
        Self {
            labels: self.labels.clone(),
            x: self.x[range.start * p..range.end * p].to_vec(),
            y: self.y[range].to_vec(),
        }
    }

    /// Sum of column `j`; zero for an indicator whose level is absent.
    pub fn column_sum(&self, j: usize) -> f64 {
        (0..self.n()).map(|i| self.row(i)[j]).sum()
    }

    /// Columns that are exactly zero in every row.
    pub fn zero_columns(&self) -> Vec<usize> {
        (0..self.p())
            .filter(|&j| (0..self.n()).all(|i| self.row(i)[j] == 0.0))
            .collect()
    }

    /// The data restricted to columns `keep`, in that order.
    pub fn select_columns(&self, keep: &[usize]) -> Self {
        let mut x = Vec::with_capacity(self.n() * keep.len());
        for i in 0..self.n() {
            let row = self.row(i);
            x.extend(keep.iter().map(|&j| row[j]));
        }
        Self {
            labels: keep.iter().map(|&j| self.labels[j].clone()).collect(),
            x,
            y: self.y.clone(),
        }
    }
}
