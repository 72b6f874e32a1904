//! Stratified right-censored survival data and per-stratum risk sets.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const MANDATORY: [&str; 3] = ["time", "status", "stratum"];

#[derive(Debug, Clone, PartialEq)]
pub struct SurvivalDataset {
    time: Vec<f64>,
    status: Vec<bool>,
    /// Dense stratum code in `0..n_strata`.
    stratum: Vec<usize>,
    stratum_labels: Vec<String>,
    /// Row-major `n x P`.
    covariates: Vec<f64>,
    covariate_names: Vec<String>,
}

impl SurvivalDataset {
    /// Validates and assembles a dataset. `stratum` holds arbitrary labels;
    /// codes are assigned in order of first appearance.
    pub fn new(
        time: Vec<f64>,
        status: Vec<bool>,
        stratum: Vec<String>,
        covariates: Vec<f64>,
        covariate_names: Vec<String>,
    ) -> Result<Self> {
        let n = time.len();
        let p = covariate_names.len();
        if status.len() != n || stratum.len() != n || covariates.len() != n * p {
            return Err(Error::InvalidData(format!(
                "length mismatch: {n} times, {} statuses, {} strata, {} covariate cells for {p} columns",
                status.len(),
                stratum.len(),
                covariates.len()
            )));
        }
        if n == 0 {
            return Err(Error::InvalidData("dataset has no rows".into()));
        }
        if p == 0 {
            return Err(Error::InvalidData("dataset has no covariates".into()));
        }
        if let Some(row) = time.iter().position(|t| !t.is_finite() || *t < 0.0) {
            return Err(Error::Domain {
                row: row + 1,
                message: format!("time {} must be finite and non-negative", time[row]),
            });
        }
        if let Some(cell) = covariates.iter().position(|x| !x.is_finite()) {
            return Err(Error::Domain {
                row: cell / p + 1,
                message: format!("covariate `{}` is not finite", covariate_names[cell % p]),
            });
        }
        if !status.iter().any(|&s| s) {
            return Err(Error::InvalidData("dataset contains no events".into()));
        }
        let mut codes = HashMap::new();
        let mut stratum_labels = Vec::new();
        let stratum = stratum
            .into_iter()
            .map(|label| {
                *codes.entry(label.clone()).or_insert_with(|| {
                    stratum_labels.push(label);
                    stratum_labels.len() - 1
                })
            })
            .collect();
        Ok(Self {
            time,
            status,
            stratum,
            stratum_labels,
            covariates,
            covariate_names,
        })
    }

    pub fn n(&self) -> usize {
        self.time.len()
    }

    pub fn n_covariates(&self) -> usize {
        self.covariate_names.len()
    }

    pub fn n_strata(&self) -> usize {
        self.stratum_labels.len()
    }

    pub fn n_events(&self) -> usize {
        self.status.iter().filter(|&&s| s).count()
    }

    pub fn time(&self) -> &[f64] {
        &self.time
    }

    pub fn status(&self) -> &[bool] {
        &self.status
    }

    pub fn stratum(&self) -> &[usize] {
        &self.stratum
    }

    pub fn stratum_labels(&self) -> &[String] {
        &self.stratum_labels
    }

    pub fn covariate_names(&self) -> &[String] {
        &self.covariate_names
    }

    /// Row-major `n x P` covariate block.
    pub fn covariates(&self) -> &[f64] {
        &self.covariates
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let p = self.n_covariates();
        &self.covariates[i * p..(i + 1) * p]
    }

    pub fn covariate(&self, i: usize, p: usize) -> f64 {
        self.covariates[i * self.n_covariates() + p]
    }

    pub fn event_times(&self) -> Vec<f64> {
        self.time
            .iter()
            .zip(&self.status)
            .filter(|(_, &s)| s)
            .map(|(&t, _)| t)
            .collect()
    }

    /// Strata that hold no events; they contribute nothing to the likelihood.
    pub fn strata_without_events(&self) -> Vec<String> {
        let mut has_event = vec![false; self.n_strata()];
        for (s, &d) in self.stratum.iter().zip(&self.status) {
            has_event[*s] |= d;
        }
        has_event
            .iter()
            .enumerate()
            .filter(|(_, &e)| !e)
            .map(|(s, _)| self.stratum_labels[s].clone())
            .collect()
    }

    /// Rows `rows` in the given order, keeping stratum labels.
    pub fn subset(&self, rows: &[usize]) -> Result<Self> {
        let p = self.n_covariates();
        let mut covariates = Vec::with_capacity(rows.len() * p);
        for &i in rows {
            covariates.extend_from_slice(self.row(i));
        }
        Self::new(
            rows.iter().map(|&i| self.time[i]).collect(),
            rows.iter().map(|&i| self.status[i]).collect(),
            rows.iter()
                .map(|&i| self.stratum_labels[self.stratum[i]].clone())
                .collect(),
            covariates,
            self.covariate_names.clone(),
        )
    }

    pub fn from_reader<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_reader(reader);
        let headers = rdr.headers()?.clone();
        let position = |name: &str| {
            headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| Error::Schema(name.to_string()))
        };
        let time_col = position(MANDATORY[0])?;
        let status_col = position(MANDATORY[1])?;
        let stratum_col = position(MANDATORY[2])?;
        let covariate_cols: Vec<usize> = (0..headers.len())
            .filter(|c| ![time_col, status_col, stratum_col].contains(c))
            .collect();
        let covariate_names: Vec<String> = covariate_cols
            .iter()
            .map(|&c| headers[c].to_string())
            .collect();

        let mut time = Vec::new();
        let mut status = Vec::new();
        let mut stratum = Vec::new();
        let mut covariates = Vec::new();
        for (idx, record) in rdr.records().enumerate() {
            let row = idx + 1;
            let record = record?;
            let cell = |c: usize| -> Result<&str> {
                match record.get(c) {
                    Some(v) if !v.is_empty() => Ok(v),
                    _ => Err(Error::Parse {
                        row,
                        column: headers[c].to_string(),
                        message: "blank cell".into(),
                    }),
                }
            };
            let number = |c: usize| -> Result<f64> {
                let raw = cell(c)?;
                raw.parse::<f64>().map_err(|_| Error::Parse {
                    row,
                    column: headers[c].to_string(),
                    message: format!("`{raw}` is not a number"),
                })
            };
            time.push(number(time_col)?);
            let raw_status = cell(status_col)?;
            status.push(match raw_status {
                "0" => false,
                "1" => true,
                other => {
                    if other.parse::<f64>().is_err() {
                        return Err(Error::Parse {
                            row,
                            column: "status".into(),
                            message: format!("`{other}` is not an integer"),
                        });
                    }
                    return Err(Error::Domain {
                        row,
                        message: format!("status `{other}` is outside {{0, 1}}"),
                    });
                }
            });
            stratum.push(cell(stratum_col)?.to_string());
            for &c in &covariate_cols {
                covariates.push(number(c)?);
            }
        }
        Self::new(time, status, stratum, covariates, covariate_names)
    }

    pub fn load_csv(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_reader(std::fs::File::open(path)?)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        let mut header = vec!["time".to_string(), "status".into(), "stratum".into()];
        header.extend(self.covariate_names.iter().cloned());
        wtr.write_record(&header)?;
        for i in 0..self.n() {
            let mut record = vec![
                self.time[i].to_string(),
                u8::from(self.status[i]).to_string(),
                self.stratum_labels[self.stratum[i]].clone(),
            ];
            record.extend(self.row(i).iter().map(f64::to_string));
            wtr.write_record(&record)?;
        }
        wtr.flush()?;
        Ok(())
    }

    /// Centers and scales each covariate to unit sample variance (n - 1
    /// denominator). Returns the transformed data and the transform.
    pub fn standardize(&self) -> Result<(Self, Standardization)> {
        let n = self.n();
        let p = self.n_covariates();
        if n < 2 {
            return Err(Error::InvalidData("standardization needs at least two rows".into()));
        }
        let mut location = vec![0.0; p];
        let mut scale = vec![0.0; p];
        for j in 0..p {
            let mean = (0..n).map(|i| self.covariate(i, j)).sum::<f64>() / n as f64;
            let ss: f64 = (0..n).map(|i| (self.covariate(i, j) - mean).powi(2)).sum();
            let sd = (ss / (n - 1) as f64).sqrt();
            if !(sd > 1e-12 * (1.0 + mean.abs())) {
                return Err(Error::DegenerateCovariate(self.covariate_names[j].clone()));
            }
            location[j] = mean;
            scale[j] = sd;
        }
        let transform = Standardization { location, scale };
        let mut out = self.clone();
        transform.apply_in_place(&mut out.covariates);
        Ok((out, transform))
    }
}

/// Per-covariate affine map `x -> (x - location) / scale`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub location: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardization {
    pub fn identity(p: usize) -> Self {
        Self {
            location: vec![0.0; p],
            scale: vec![1.0; p],
        }
    }

    pub fn apply_in_place(&self, covariates: &mut [f64]) {
        let p = self.scale.len();
        for row in covariates.chunks_mut(p) {
            for ((x, loc), sc) in row.iter_mut().zip(&self.location).zip(&self.scale) {
                *x = (*x - loc) / sc;
            }
        }
    }

    /// Coefficient on the original covariate scale.
    pub fn to_original(&self, covariate: usize, beta_std: f64) -> f64 {
        beta_std / self.scale[covariate]
    }
}

/// Event subjects sharing a stratum and an event time, with their common
/// risk set.
#[derive(Debug, Clone, PartialEq)]
pub struct EventGroup {
    pub stratum: usize,
    pub time: f64,
    pub subjects: Vec<usize>,
    /// Length of the prefix of the stratum ordering forming the risk set.
    pub risk_len: usize,
}

/// Per stratum, subjects in descending time order; each risk set is a prefix.
#[derive(Debug, Clone, PartialEq)]
pub struct RiskIndex {
    orders: Vec<Vec<usize>>,
    groups: Vec<EventGroup>,
}

impl RiskIndex {
    pub fn build(data: &SurvivalDataset) -> Self {
        let mut orders = vec![Vec::new(); data.n_strata()];
        for (i, &s) in data.stratum().iter().enumerate() {
            orders[s].push(i);
        }
        let time = data.time();
        let mut groups = Vec::new();
        for (s, order) in orders.iter_mut().enumerate() {
            order.sort_by(|&a, &b| time[b].total_cmp(&time[a]).then(a.cmp(&b)));
            // Walk from the latest time; a tie block ends where the time drops.
            let mut end = 0;
            while end < order.len() {
                let t = time[order[end]];
                let mut block_end = end;
                while block_end < order.len() && time[order[block_end]] == t {
                    block_end += 1;
                }
                let subjects: Vec<usize> = order[end..block_end]
                    .iter()
                    .copied()
                    .filter(|&i| data.status()[i])
                    .collect();
                if !subjects.is_empty() {
                    groups.push(EventGroup {
                        stratum: s,
                        time: t,
                        subjects,
                        risk_len: block_end,
                    });
                }
                end = block_end;
            }
        }
        Self { orders, groups }
    }

    pub fn groups(&self) -> &[EventGroup] {
        &self.groups
    }

    pub fn stratum_order(&self, stratum: usize) -> &[usize] {
        &self.orders[stratum]
    }

    pub fn risk_set(&self, group: &EventGroup) -> &[usize] {
        &self.orders[group.stratum][..group.risk_len]
    }

    /// Risk set of the event experienced by `subject`, if it had one.
    pub fn risk_set_of(&self, subject: usize) -> Option<&[usize]> {
        self.groups
            .iter()
            .find(|g| g.subjects.contains(&subject))
            .map(|g| self.risk_set(g))
    }

    pub fn n_events(&self) -> usize {
        self.groups.iter().map(|g| g.subjects.len()).sum()
    }
}
