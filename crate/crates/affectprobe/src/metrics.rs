//! Confusion-matrix accumulation and the evaluation metrics derived from it:
//! per-class precision/recall/F1, macro averages, UAR and WAR.
//!
//! Rows of the matrix are truth labels, columns are predictions. Responses
//! that could not be parsed into a taxonomy label are tallied per truth class
//! in a separate bucket: they count against the class's recall (they sit in
//! its support) but are never attributed to any predicted class, so they do
//! not touch precision. Zero denominators yield a metric of 0.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::manifest::LabelTaxonomy;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("label '{0}' is not in taxonomy '{1}'")]
    UnknownLabel(String, String),
    #[error("confusion matrix is empty")]
    EmptyMatrix,
    #[error("taxonomies differ: '{0}' vs '{1}'")]
    TaxonomyMismatch(String, String),
}

/// Counts over (truth, prediction) pairs plus per-truth-class unparsed tallies.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub taxonomy: LabelTaxonomy,
    /// counts[truth][pred]
    pub counts: Vec<Vec<u64>>,
    pub unparsed_per_class: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(taxonomy: LabelTaxonomy) -> Self {
        let k = taxonomy.len();
        Self {
            taxonomy,
            counts: vec![vec![0; k]; k],
            unparsed_per_class: vec![0; k],
        }
    }

    /// Record one prediction; `pred = None` marks an unparseable response.
    pub fn accumulate(&mut self, truth: &str, pred: Option<&str>) -> Result<(), MetricsError> {
        let ti = self.index_of(truth)?;
        match pred {
            Some(p) => {
                let pi = self.index_of(p)?;
                self.counts[ti][pi] += 1;
            }
            None => self.unparsed_per_class[ti] += 1,
        }
        Ok(())
    }

    fn index_of(&self, label: &str) -> Result<usize, MetricsError> {
        self.taxonomy.index_of(label).ok_or_else(|| {
            MetricsError::UnknownLabel(label.to_string(), self.taxonomy.name.clone())
        })
    }

    /// Element-wise addition, for merging worker-local matrices.
    pub fn merge(&mut self, other: &ConfusionMatrix) -> Result<(), MetricsError> {
        if self.taxonomy != other.taxonomy {
            return Err(MetricsError::TaxonomyMismatch(
                self.taxonomy.name.clone(),
                other.taxonomy.name.clone(),
            ));
        }
        for (row, orow) in self.counts.iter_mut().zip(&other.counts) {
            for (c, oc) in row.iter_mut().zip(orow) {
                *c += *oc;
            }
        }
        for (u, ou) in self
            .unparsed_per_class
            .iter_mut()
            .zip(&other.unparsed_per_class)
        {
            *u += *ou;
        }
        Ok(())
    }

    /// Total number of recorded outcomes, unparsed included.
    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum::<u64>() + self.unparsed_per_class.iter().sum::<u64>()
    }

    /// Per-class support: row sum plus unparsed.
    pub fn support(&self, class: usize) -> u64 {
        self.counts[class].iter().sum::<u64>() + self.unparsed_per_class[class]
    }

    /// Derive the metrics report.
    pub fn report(&self) -> Result<MetricsReport, MetricsError> {
        if self.total() == 0 {
            return Err(MetricsError::EmptyMatrix);
        }
        let k = self.taxonomy.len();
        let mut per_class = Vec::with_capacity(k);
        let mut sum_p = 0.0;
        let mut sum_r = 0.0;
        let mut sum_f1 = 0.0;
        let mut weighted_r = 0.0;
        let mut total_support = 0u64;

        for c in 0..k {
            let tp = self.counts[c][c];
            let support = self.support(c);
            let col_sum: u64 = (0..k).map(|t| self.counts[t][c]).sum();
            let fp = col_sum - tp;

            let precision = ratio(tp, tp + fp);
            let recall = ratio(tp, support);
            let f1 = if precision + recall == 0.0 {
                0.0
            } else {
                2.0 * precision * recall / (precision + recall)
            };

            sum_p += precision;
            sum_r += recall;
            sum_f1 += f1;
            weighted_r += support as f64 * recall;
            total_support += support;

            per_class.push(ClassMetrics {
                label: self.taxonomy.labels[c].clone(),
                precision,
                recall,
                f1,
                support,
            });
        }

        let kf = k as f64;
        let uar = sum_r / kf;
        // On equal supports WAR reduces to UAR algebraically; take the same
        // code path so the identity holds bit-exactly.
        let balanced = per_class.windows(2).all(|w| w[0].support == w[1].support);
        let war = if balanced {
            uar
        } else {
            weighted_r / total_support as f64
        };
        Ok(MetricsReport {
            per_class,
            macro_precision: sum_p / kf,
            macro_recall: sum_r / kf,
            macro_f1: sum_f1 / kf,
            uar,
            war,
            total_support,
        })
    }

    /// CSV grid: header row/column of labels, trailing `unparsed` column.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("truth\\pred");
        for l in &self.taxonomy.labels {
            out.push(',');
            out.push_str(l);
        }
        out.push_str(",unparsed\n");
        for (t, row) in self.counts.iter().enumerate() {
            out.push_str(&self.taxonomy.labels[t]);
            for c in row {
                out.push_str(&format!(",{c}"));
            }
            out.push_str(&format!(",{}\n", self.unparsed_per_class[t]));
        }
        out
    }
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub label: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

/// Per-class and aggregate metrics.
///
/// `uar` is the unweighted mean of per-class recall; `war` weights each
/// class's recall by its support, which makes it equal to overall accuracy.
/// Macro F1 is the mean of per-class F1 scores, not the F1 of macro P/R.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricsReport {
    pub per_class: Vec<ClassMetrics>,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    pub uar: f64,
    pub war: f64,
    pub total_support: u64,
}

impl MetricsReport {
    /// CSV: one row per class plus a macro row.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("label,precision,recall,f1,support\n");
        for c in &self.per_class {
            out.push_str(&format!(
                "{},{:.6},{:.6},{:.6},{}\n",
                c.label, c.precision, c.recall, c.f1, c.support
            ));
        }
        out.push_str(&format!(
            "macro,{:.6},{:.6},{:.6},{}\n",
            self.macro_precision, self.macro_recall, self.macro_f1, self.total_support
        ));
        out
    }
}
