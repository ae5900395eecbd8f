use num_rational::Ratio;

use crate::error::{Error, Result};
use crate::pgm::encode_pgm;

/// Rows are true classes, columns predicted classes.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConfusionMatrix {
    counts: Vec<Vec<u64>>,
}

pub fn confusion(predictions: &[usize], labels: &[usize], n: usize) -> Result<ConfusionMatrix> {
    if predictions.len() != labels.len() {
        return Err(Error::data(format!(
            "{} predictions for {} labels",
            predictions.len(),
            labels.len()
        )));
    }
    let mut counts = vec![vec![0u64; n]; n];
    for (i, (&p, &l)) in predictions.iter().zip(labels).enumerate() {
        if p >= n || l >= n {
            return Err(Error::data(format!(
                "class index out of range at position {i}: predicted {p}, true {l}, n={n}"
            )));
        }
        counts[l][p] += 1;
    }
    Ok(ConfusionMatrix { counts })
}

impl ConfusionMatrix {
    pub fn from_counts(counts: Vec<Vec<u64>>) -> Result<Self> {
        let n = counts.len();
        if n == 0 || counts.iter().any(|r| r.len() != n) {
            return Err(Error::data("confusion counts must be a non-empty square matrix"));
        }
        Ok(Self { counts })
    }

    pub fn n(&self) -> usize {
        self.counts.len()
    }

    pub fn counts(&self) -> &[Vec<u64>] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.n()).map(|j| self.counts[j][j]).sum()
    }

    pub fn row_sum(&self, j: usize) -> u64 {
        self.counts[j].iter().sum()
    }

    /// Header `true,C0,...`, one row per true class.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("true");
        for j in 0..self.n() {
            out.push_str(&format!(",C{j}"));
        }
        out.push('\n');
        for (j, row) in self.counts.iter().enumerate() {
            out.push_str(&format!("C{j}"));
            for c in row {
                out.push_str(&format!(",{c}"));
            }
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let rows = text
            .lines()
            .skip(1)
            .filter(|l| !l.trim().is_empty())
            .enumerate()
            .map(|(i, line)| {
                line.split(',')
                    .skip(1)
                    .map(|c| {
                        c.trim()
                            .parse::<u64>()
                            .map_err(|_| Error::data(format!("bad count `{c}` in confusion row {i}")))
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_counts(rows)
    }

    /// Grayscale image with `cell`-pixel squares, each row scaled by its
    /// own sum so white is the whole row. Empty rows stay black.
    pub fn to_pgm(&self, cell: usize) -> Result<Vec<u8>> {
        let n = self.n();
        let side = n * cell.max(1);
        let cell = cell.max(1);
        let mut pixels = vec![0u8; side * side];
        for (r, row) in self.counts.iter().enumerate() {
            let sum = self.row_sum(r);
            for (c, &count) in row.iter().enumerate() {
                let level = if sum == 0 {
                    0
                } else {
                    ((count as f64 / sum as f64) * 255.0).round() as u8
                };
                for y in r * cell..(r + 1) * cell {
                    pixels[y * side + c * cell..y * side + (c + 1) * cell].fill(level);
                }
            }
        }
        encode_pgm(side, side, &pixels)
    }
}

/// Per-class recall and total accuracy as exact ratios.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EvalReport {
    pub method: String,
    /// `None` for a class with no test items.
    pub per_class: Vec<Option<Ratio<u64>>>,
    pub total: Ratio<u64>,
    pub matrix: ConfusionMatrix,
}

pub fn report(matrix: &ConfusionMatrix, method: &str) -> Result<EvalReport> {
    let total = matrix.total();
    if total == 0 {
        return Err(Error::data("cannot report on an empty confusion matrix"));
    }
    let per_class = (0..matrix.n())
        .map(|j| {
            let row = matrix.row_sum(j);
            (row > 0).then(|| Ratio::new(matrix.counts[j][j], row))
        })
        .collect();
    Ok(EvalReport {
        method: method.to_string(),
        per_class,
        total: Ratio::new(matrix.trace(), total),
        matrix: matrix.clone(),
    })
}

fn ratio_f64(r: &Ratio<u64>) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

fn percent(r: &Ratio<u64>) -> String {
    format!("{:.1}", 100.0 * ratio_f64(r))
}

impl EvalReport {
    pub fn total_accuracy(&self) -> f64 {
        ratio_f64(&self.total)
    }

    pub fn per_class_accuracy(&self) -> Vec<Option<f64>> {
        self.per_class.iter().map(|r| r.as_ref().map(ratio_f64)).collect()
    }

    pub fn csv_header(n: usize) -> String {
        let mut out = String::from("method");
        for j in 0..n {
            out.push_str(&format!(",C{j}"));
        }
        out.push_str(",Total\n");
        out
    }

    /// Recall per class and total in percent with one decimal; `n/a` for
    /// classes without test items.
    pub fn csv_row(&self) -> String {
        let mut out = self.method.clone();
        for r in &self.per_class {
            out.push(',');
            out.push_str(&r.as_ref().map_or_else(|| "n/a".to_string(), percent));
        }
        out.push_str(&format!(",{}\n", percent(&self.total)));
        out
    }

    /// Same layout with exact `correct/count` ratios.
    pub fn csv_ratio_row(&self) -> String {
        let mut out = self.method.clone();
        for (j, r) in self.per_class.iter().enumerate() {
            let row = self.matrix.row_sum(j);
            out.push_str(&match r {
                Some(_) => format!(",{}/{}", self.matrix.counts[j][j], row),
                None => ",n/a".to_string(),
            });
        }
        out.push_str(&format!(",{}/{}\n", self.matrix.trace(), self.matrix.total()));
        out
    }

    pub fn to_csv(&self) -> String {
        Self::csv_header(self.matrix.n()) + &self.csv_row()
    }
}
