//! Weighted competition-rank aggregation for leaderboards.
//!
//! Each metric ranks the entrants with competition ("min") ranking: tied
//! values share the smallest rank of their group and the next distinct
//! value is ranked `1 + (number of strictly better entrants)`. An entrant's
//! total is the weight-rank dot product over all metrics; lower is better.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    HigherBetter,
    LowerBetter,
}

/// Which entrant field a metric's rank comes from.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RankSource {
    /// Ranks are computed from the entrants' raw `values`.
    #[default]
    Values,
    /// Ranks are taken verbatim from the entrants' `ranks` (for example when
    /// they were assigned within a larger field than the listed entrants).
    Ranks,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricSpec {
    pub name: String,
    pub direction: Direction,
    pub weight: f64,
    #[serde(default)]
    pub source: RankSource,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Entrant {
    pub name: String,
    #[serde(default)]
    pub values: BTreeMap<String, f64>,
    #[serde(default)]
    pub ranks: BTreeMap<String, u32>,
}

/// Input document for [`RankTable::build`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankInput {
    pub metrics: Vec<MetricSpec>,
    pub entrants: Vec<Entrant>,
}

/// Competition ranks of `values`, aligned with the input.
pub fn compute_ranks(values: &[f64], direction: Direction) -> Result<Vec<u32>> {
    if values.is_empty() {
        return Err(Error::Ranking("cannot rank an empty field".into()));
    }
    if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
        return Err(Error::Ranking(format!("non-finite value {bad}")));
    }
    let key = |v: f64| match direction {
        Direction::HigherBetter => -v,
        Direction::LowerBetter => v,
    };
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| key(values[a]).total_cmp(&key(values[b])));
    let mut ranks = vec![0u32; values.len()];
    for (pos, &idx) in order.iter().enumerate() {
        ranks[idx] = if pos > 0 && values[order[pos - 1]] == values[idx] {
            ranks[order[pos - 1]]
        } else {
            pos as u32 + 1
        };
    }
    Ok(ranks)
}

/// `sum_metric weight[metric] * rank[metric]`.
pub fn total_score(ranks: &BTreeMap<String, u32>, weights: &BTreeMap<String, f64>) -> Result<f64> {
    ranks.iter().try_fold(0.0, |acc, (metric, &rank)| {
        let w = weights
            .get(metric)
            .ok_or_else(|| Error::Ranking(format!("no weight for metric {metric}")))?;
        Ok(acc + w * rank as f64)
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RankedEntrant {
    pub name: String,
    pub values: BTreeMap<String, f64>,
    pub ranks: BTreeMap<String, u32>,
    pub total: f64,
}

/// Per-metric ranks and weighted totals, sorted by total ascending.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RankTable {
    pub metrics: Vec<MetricSpec>,
    pub entrants: Vec<RankedEntrant>,
}

impl RankTable {
    pub fn build(input: &RankInput) -> Result<Self> {
        if input.metrics.is_empty() {
            return Err(Error::Ranking("no metrics given".into()));
        }
        if input.entrants.is_empty() {
            return Err(Error::Ranking("no entrants given".into()));
        }
        let mut seen = BTreeSet::new();
        for m in &input.metrics {
            if !seen.insert(m.name.as_str()) {
                return Err(Error::Ranking(format!("duplicate metric {}", m.name)));
            }
            if !(m.weight.is_finite() && m.weight >= 0.0) {
                return Err(Error::Ranking(format!(
                    "metric {} has invalid weight {}",
                    m.name, m.weight
                )));
            }
        }
        let mut seen = BTreeSet::new();
        for e in &input.entrants {
            if !seen.insert(e.name.as_str()) {
                return Err(Error::Ranking(format!("duplicate entrant {}", e.name)));
            }
        }

        let mut ranks: Vec<BTreeMap<String, u32>> = vec![BTreeMap::new(); input.entrants.len()];
        for m in &input.metrics {
            let column: Vec<u32> = match m.source {
                RankSource::Values => {
                    let values = input
                        .entrants
                        .iter()
                        .map(|e| {
                            e.values.get(&m.name).copied().ok_or_else(|| {
                                Error::Ranking(format!("entrant {} has no value for {}", e.name, m.name))
                            })
                        })
                        .collect::<Result<Vec<_>>>()?;
                    compute_ranks(&values, m.direction)?
                }
                RankSource::Ranks => input
                    .entrants
                    .iter()
                    .map(|e| match e.ranks.get(&m.name) {
                        Some(&r) if r >= 1 => Ok(r),
                        Some(_) => Err(Error::Ranking(format!("entrant {}: ranks start at 1", e.name))),
                        None => Err(Error::Ranking(format!("entrant {} has no rank for {}", e.name, m.name))),
                    })
                    .collect::<Result<Vec<_>>>()?,
            };
            for (slot, r) in ranks.iter_mut().zip(column) {
                slot.insert(m.name.clone(), r);
            }
        }

        let weights: BTreeMap<String, f64> = input.metrics.iter().map(|m| (m.name.clone(), m.weight)).collect();
        let mut entrants = input
            .entrants
            .iter()
            .zip(ranks)
            .map(|(e, ranks)| {
                Ok(RankedEntrant {
                    name: e.name.clone(),
                    values: e.values.clone(),
                    total: total_score(&ranks, &weights)?,
                    ranks,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        entrants.sort_by(|a, b| a.total.total_cmp(&b.total));
        Ok(Self {
            metrics: input.metrics.clone(),
            entrants,
        })
    }

    pub fn total_of(&self, name: &str) -> Option<f64> {
        self.entrants.iter().find(|e| e.name == name).map(|e| e.total)
    }

    /// Aligned table: name, raw values, ranks, total.
    pub fn to_text_table(&self) -> String {
        let mut header = vec!["Entrant".to_string()];
        header.extend(self.metrics.iter().map(|m| m.name.clone()));
        header.extend(self.metrics.iter().map(|m| format!("Rank {} ({})", m.name, m.weight)));
        header.push("Total".to_string());
        let mut rows = vec![header];
        for e in &self.entrants {
            let mut row = vec![e.name.clone()];
            row.extend(
                self.metrics
                    .iter()
                    .map(|m| e.values.get(&m.name).map_or_else(|| "-".to_string(), |v| v.to_string())),
            );
            row.extend(self.metrics.iter().map(|m| e.ranks[&m.name].to_string()));
            row.push(format!("{}", (e.total * 1e10).round() / 1e10));
            rows.push(row);
        }
        let widths: Vec<usize> = (0..rows[0].len())
            .map(|c| rows.iter().map(|r| r[c].chars().count()).max().unwrap_or(0))
            .collect();
        let mut out = String::new();
        for row in &rows {
            for (c, cell) in row.iter().enumerate() {
                if c == 0 {
                    let _ = write!(out, "{cell:<width$}", width = widths[c]);
                } else {
                    let _ = write!(out, "  {cell:>width$}", width = widths[c]);
                }
            }
            out.push('\n');
        }
        out
    }
}
