use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

/// Counts of (gold, predicted) pairs from one classification pass.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(into = "MatrixRepr", from = "MatrixRepr")]
pub struct ConfusionMatrix {
    counts: BTreeMap<(String, String), u64>,
    total: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCell {
    pub gold: String,
    pub predicted: String,
    pub count: u64,
}

#[derive(Serialize, Deserialize)]
struct MatrixRepr {
    total: u64,
    cells: Vec<ConfusionCell>,
}

impl From<ConfusionMatrix> for MatrixRepr {
    fn from(m: ConfusionMatrix) -> Self {
        MatrixRepr {
            total: m.total,
            cells: m.cells().collect(),
        }
    }
}

impl From<MatrixRepr> for ConfusionMatrix {
    fn from(r: MatrixRepr) -> Self {
        let mut m = ConfusionMatrix::new();
        for c in r.cells {
            m.add(&c.gold, &c.predicted, c.count);
        }
        m
    }
}

impl ConfusionMatrix {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(&mut self, gold: &str, predicted: &str) {
        self.add(gold, predicted, 1);
    }

    pub fn add(&mut self, gold: &str, predicted: &str, count: u64) {
        if count == 0 {
            return;
        }
        *self
            .counts
            .entry((gold.to_string(), predicted.to_string()))
            .or_insert(0) += count;
        self.total += count;
    }

    pub fn count(&self, gold: &str, predicted: &str) -> u64 {
        self.counts
            .get(&(gold.to_string(), predicted.to_string()))
            .copied()
            .unwrap_or(0)
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    /// Non-zero cells ordered by (gold, predicted).
    pub fn cells(&self) -> impl Iterator<Item = ConfusionCell> + '_ {
        self.counts.iter().map(|((g, p), &count)| ConfusionCell {
            gold: g.clone(),
            predicted: p.clone(),
            count,
        })
    }

    pub fn row_total(&self, gold: &str) -> u64 {
        self.counts
            .iter()
            .filter(|((g, _), _)| g == gold)
            .map(|(_, &c)| c)
            .sum()
    }

    pub fn correct(&self) -> u64 {
        self.counts
            .iter()
            .filter(|((g, p), _)| g == p)
            .map(|(_, &c)| c)
            .sum()
    }

    /// Share of `gold` documents predicted as `gold`; `None` without data.
    pub fn accuracy_of(&self, gold: &str) -> Option<f64> {
        let row = self.row_total(gold);
        (row > 0).then(|| self.count(gold, gold) as f64 / row as f64)
    }

    pub fn accuracy(&self) -> Option<f64> {
        (self.total > 0).then(|| self.correct() as f64 / self.total as f64)
    }
}
