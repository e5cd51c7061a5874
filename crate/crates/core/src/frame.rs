//! Wide longitudinal data: `n` units observed over `tau` time points.
//!
//! Column convention for the wide CSV layout is `L<t>_<name>` for covariates,
//! `A<t>` for the treatment and `Y` for the outcome. Times are 1-based.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{GattError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutcomeFamily {
    Binomial,
    Gaussian,
}

/// Covariates measured at one time point, stored column-wise.
#[derive(Debug, Clone, PartialEq)]
pub struct CovariateBlock {
    pub names: Vec<String>,
    pub columns: Vec<Vec<f64>>,
}

impl CovariateBlock {
    pub fn new(names: Vec<String>, columns: Vec<Vec<f64>>) -> Self {
        Self { names, columns }
    }

    pub fn empty() -> Self {
        Self { names: Vec::new(), columns: Vec::new() }
    }

    pub fn width(&self) -> usize {
        self.columns.len()
    }
}

/// Immutable longitudinal data set. Histories `H_t` are never stored; they are
/// assembled on demand by [`LongitudinalFrame::design`].
#[derive(Debug, Clone, PartialEq)]
pub struct LongitudinalFrame {
    n: usize,
    covariates: Vec<CovariateBlock>,
    treatments: Vec<Vec<f64>>,
    outcome: Vec<f64>,
    family: OutcomeFamily,
}

impl LongitudinalFrame {
    pub fn new(
        covariates: Vec<CovariateBlock>,
        treatments: Vec<Vec<f64>>,
        outcome: Vec<f64>,
        family: OutcomeFamily,
    ) -> Result<Self> {
        let n = outcome.len();
        let tau = treatments.len();
        if tau == 0 {
            return Err(GattError::InvalidData("at least one time point is required".into()));
        }
        if covariates.len() != tau {
            return Err(GattError::InvalidData(format!(
                "{} covariate blocks for {} treatment columns",
                covariates.len(),
                tau
            )));
        }
        if n == 0 {
            return Err(GattError::InvalidData("frame has no units".into()));
        }
        for (t, a) in treatments.iter().enumerate() {
            check_column(a, n, &format!("A{}", t + 1))?;
        }
        for (t, block) in covariates.iter().enumerate() {
            if block.names.len() != block.columns.len() {
                return Err(GattError::InvalidData(format!(
                    "covariate block {} has {} names but {} columns",
                    t + 1,
                    block.names.len(),
                    block.columns.len()
                )));
            }
            for (name, col) in block.names.iter().zip(&block.columns) {
                check_column(col, n, &format!("L{}_{}", t + 1, name))?;
            }
        }
        check_column(&outcome, n, "Y")?;
        if family == OutcomeFamily::Binomial && outcome.iter().any(|&y| y != 0.0 && y != 1.0) {
            return Err(GattError::InvalidData(
                "binomial outcome must take values in {0, 1}".into(),
            ));
        }
        Ok(Self { n, covariates, treatments, outcome, family })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn tau(&self) -> usize {
        self.treatments.len()
    }

    pub fn family(&self) -> OutcomeFamily {
        self.family
    }

    pub fn outcome(&self) -> &[f64] {
        &self.outcome
    }

    /// Treatment vector `A_t`, `t` in `1..=tau`.
    pub fn treatment(&self, t: usize) -> &[f64] {
        &self.treatments[t - 1]
    }

    pub fn covariates(&self, t: usize) -> &CovariateBlock {
        &self.covariates[t - 1]
    }

    /// Number of columns of the design for `(A_t, H_t)`.
    pub fn design_width(&self, t: usize) -> usize {
        self.covariates[..t].iter().map(CovariateBlock::width).sum::<usize>() + t
    }

    /// Column names of the design for `(A_t, H_t)`: L-blocks then A-blocks,
    /// time-ascending, with `A_t` last.
    pub fn design_names(&self, t: usize) -> Vec<String> {
        let mut names = Vec::with_capacity(self.design_width(t));
        for (s, block) in self.covariates[..t].iter().enumerate() {
            names.extend(block.names.iter().map(|nm| format!("L{}_{}", s + 1, nm)));
        }
        names.extend((1..=t).map(|s| format!("A{s}")));
        names
    }

    /// Design matrix of `(a, H_t)` for all units, where `a` replaces the
    /// observed `A_t` in the last column.
    pub fn design(&self, t: usize, a: &[f64]) -> DMatrix<f64> {
        assert_eq!(a.len(), self.n, "treatment override length");
        let p = self.design_width(t);
        let mut x = DMatrix::zeros(self.n, p);
        let mut j = 0;
        for block in &self.covariates[..t] {
            for col in &block.columns {
                x.column_mut(j).copy_from_slice(col);
                j += 1;
            }
        }
        for s in 0..t - 1 {
            x.column_mut(j).copy_from_slice(&self.treatments[s]);
            j += 1;
        }
        x.column_mut(j).copy_from_slice(a);
        x
    }

    /// Design of `(A_t, H_t)` at the observed treatment.
    pub fn observed_design(&self, t: usize) -> DMatrix<f64> {
        self.design(t, self.treatment(t))
    }

    /// Design of `H_t` alone: the columns of [`Self::design`] without `A_t`.
    pub fn history_design(&self, t: usize) -> DMatrix<f64> {
        let x = self.observed_design(t);
        x.columns(0, x.ncols() - 1).into_owned()
    }

    /// History view of unit `i` just before `A_t`.
    pub fn history(&self, i: usize, t: usize) -> FrameHistory<'_> {
        FrameHistory { frame: self, unit: i, t }
    }

    /// Names of all columns in wide layout order.
    pub fn column_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        for t in 1..=self.tau() {
            names.extend(self.covariates[t - 1].names.iter().map(|nm| format!("L{t}_{nm}")));
            names.push(format!("A{t}"));
        }
        names.push("Y".to_string());
        names
    }

    pub fn from_csv<R: Read>(reader: R, family: OutcomeFamily) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        let headers = rdr.headers()?.clone();

        enum Slot {
            Covariate(usize, usize),
            Treatment(usize),
            Outcome,
        }
        let mut cov_names: BTreeMap<usize, Vec<String>> = BTreeMap::new();
        let mut treat_times: Vec<usize> = Vec::new();
        let mut slots = Vec::with_capacity(headers.len());
        let mut has_y = false;
        for h in headers.iter() {
            let h = h.trim();
            if h == "Y" {
                if has_y {
                    return Err(GattError::InvalidData("duplicate column Y".into()));
                }
                has_y = true;
                slots.push(Slot::Outcome);
            } else if let Some(rest) = h.strip_prefix('A') {
                let t: usize = rest
                    .parse()
                    .map_err(|_| GattError::InvalidData(format!("unrecognised column '{h}'")))?;
                if t == 0 || treat_times.contains(&t) {
                    return Err(GattError::InvalidData(format!("invalid or duplicate column '{h}'")));
                }
                treat_times.push(t);
                slots.push(Slot::Treatment(t));
            } else if let Some(rest) = h.strip_prefix('L') {
                let (time, name) = rest
                    .split_once('_')
                    .ok_or_else(|| GattError::InvalidData(format!("unrecognised column '{h}'")))?;
                let t: usize = time
                    .parse()
                    .map_err(|_| GattError::InvalidData(format!("unrecognised column '{h}'")))?;
                if t == 0 || name.is_empty() {
                    return Err(GattError::InvalidData(format!("unrecognised column '{h}'")));
                }
                let names = cov_names.entry(t).or_default();
                if names.iter().any(|x| x == name) {
                    return Err(GattError::InvalidData(format!("duplicate column '{h}'")));
                }
                names.push(name.to_string());
                slots.push(Slot::Covariate(t, names.len() - 1));
            } else {
                return Err(GattError::InvalidData(format!("unrecognised column '{h}'")));
            }
        }
        if !has_y {
            return Err(GattError::InvalidData("missing outcome column Y".into()));
        }
        let tau = treat_times.iter().copied().max().unwrap_or(0);
        if tau == 0 || treat_times.len() != tau {
            return Err(GattError::InvalidData(format!(
                "treatment columns must be A1..A{tau} without gaps"
            )));
        }
        if let Some((&t, _)) = cov_names.iter().find(|(&t, _)| t > tau) {
            return Err(GattError::InvalidData(format!("covariate block L{t} beyond A{tau}")));
        }

        let mut covariates: Vec<CovariateBlock> = (1..=tau)
            .map(|t| {
                let names = cov_names.get(&t).cloned().unwrap_or_default();
                let k = names.len();
                CovariateBlock::new(names, vec![Vec::new(); k])
            })
            .collect();
        let mut treatments = vec![Vec::new(); tau];
        let mut outcome = Vec::new();
        for (row, record) in rdr.records().enumerate() {
            let record = record?;
            if record.len() != slots.len() {
                return Err(GattError::InvalidData(format!("row {} has wrong field count", row + 1)));
            }
            for (field, slot) in record.iter().zip(&slots) {
                let v: f64 = field.trim().parse().map_err(|_| {
                    GattError::InvalidData(format!("row {}: cannot parse '{field}' as a number", row + 1))
                })?;
                match *slot {
                    Slot::Covariate(t, k) => covariates[t - 1].columns[k].push(v),
                    Slot::Treatment(t) => treatments[t - 1].push(v),
                    Slot::Outcome => outcome.push(v),
                }
            }
        }
        Self::new(covariates, treatments, outcome, family)
    }

    pub fn to_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record(self.column_names())?;
        let mut record = Vec::new();
        for i in 0..self.n {
            record.clear();
            for t in 0..self.tau() {
                for col in &self.covariates[t].columns {
                    record.push(col[i].to_string());
                }
                record.push(self.treatments[t][i].to_string());
            }
            record.push(self.outcome[i].to_string());
            wtr.write_record(&record)?;
        }
        wtr.flush()?;
        Ok(())
    }
}

fn check_column(col: &[f64], n: usize, name: &str) -> Result<()> {
    if col.len() != n {
        return Err(GattError::InvalidData(format!("column {name} has length {} (expected {n})", col.len())));
    }
    if let Some(i) = col.iter().position(|v| !v.is_finite()) {
        return Err(GattError::InvalidData(format!("column {name} has a missing or non-finite value at row {}", i + 1)));
    }
    Ok(())
}

/// Read access to a unit's history by wide column name.
pub trait HistoryLookup {
    fn lookup(&self, column: &str) -> Option<f64>;
}

/// History `H_t = (A_1..A_{t-1}, L_1..L_t)` of one unit in a frame.
#[derive(Debug, Clone, Copy)]
pub struct FrameHistory<'a> {
    frame: &'a LongitudinalFrame,
    unit: usize,
    t: usize,
}

impl HistoryLookup for FrameHistory<'_> {
    fn lookup(&self, column: &str) -> Option<f64> {
        if let Some(rest) = column.strip_prefix('A') {
            let s: usize = rest.parse().ok()?;
            return (s >= 1 && s < self.t).then(|| self.frame.treatments[s - 1][self.unit]);
        }
        let rest = column.strip_prefix('L')?;
        let (time, name) = rest.split_once('_')?;
        let s: usize = time.parse().ok()?;
        if s == 0 || s > self.t {
            return None;
        }
        let block = &self.frame.covariates[s - 1];
        let k = block.names.iter().position(|nm| nm == name)?;
        Some(block.columns[k][self.unit])
    }
}

/// A history with no columns, for callers that apply rules without bounds.
pub struct NoHistory;

impl HistoryLookup for NoHistory {
    fn lookup(&self, _column: &str) -> Option<f64> {
        None
    }
}
