//! Histogram dataset CSV: header `label,grid,K,v0,v1,...`, one sample per
//! row, label `-1` for unlabeled samples. Lines starting with `#` are
//! comments.

use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::features::histogram::{HistogramSample, SUPPORTED_GRIDS};
use crate::harness::output::{fmt_f64, CsvDocument, Provenance};

/// Sums this close to 1 are accepted as-is.
const EXACT_SUM_TOLERANCE: f64 = 1e-9;
/// Sums within this of 1 are renormalized; anything further is rejected.
const RENORMALIZE_TOLERANCE: f64 = 1e-6;

pub fn histograms_to_csv(samples: &[HistogramSample], provenance: &Provenance) -> Result<String> {
    let first = samples
        .first()
        .ok_or_else(|| Error::rejected("cannot write an empty dataset"))?;
    let dims = first.values.len();
    let mut columns = vec!["label".to_string(), "grid".to_string(), "K".to_string()];
    columns.extend((0..dims).map(|i| format!("v{i}")));
    let column_refs: Vec<&str> = columns.iter().map(String::as_str).collect();
    let mut doc = CsvDocument::new(provenance, &column_refs);
    for s in samples {
        if s.values.len() != dims || s.grid != first.grid || s.k != first.k {
            return Err(Error::rejected("samples have inconsistent dimensions"));
        }
        let label = s.label.map(|l| l.to_string()).unwrap_or_else(|| "-1".into());
        let mut fields = vec![label, s.grid.to_string(), s.k.to_string()];
        fields.extend(s.values.iter().map(|&v| fmt_f64(v)));
        doc.row(fields);
    }
    Ok(doc.as_str().to_string())
}

pub fn save_histograms(path: &Path, samples: &[HistogramSample], provenance: &Provenance) -> Result<()> {
    let text = histograms_to_csv(samples, provenance)?;
    crate::harness::output::write_atomic(path, text.as_bytes())
}

pub fn parse_histograms(text: &str) -> Result<Vec<HistogramSample>> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
    let (header_line, header) = lines.next().ok_or(Error::Parse {
        line: 1,
        msg: "missing header row".into(),
    })?;
    let columns: Vec<&str> = header.split(',').map(str::trim).collect();
    if columns.len() < 4 || columns[..3] != ["label", "grid", "K"] {
        return Err(Error::Parse {
            line: header_line,
            msg: "header must start with label,grid,K,v0".into(),
        });
    }
    for (i, c) in columns[3..].iter().enumerate() {
        if *c != format!("v{i}") {
            return Err(Error::Parse {
                line: header_line,
                msg: format!("expected column v{i}, found {c:?}"),
            });
        }
    }
    let dims = columns.len() - 3;

    let mut samples = Vec::new();
    for (line, row) in lines {
        let fields: Vec<&str> = row.split(',').map(str::trim).collect();
        if fields.len() != columns.len() {
            return Err(Error::Parse {
                line,
                msg: format!("{} fields, header has {}", fields.len(), columns.len()),
            });
        }
        let int = |s: &str, what: &str| {
            s.parse::<i64>().map_err(|_| Error::Parse {
                line,
                msg: format!("bad {what} {s:?}"),
            })
        };
        let label = match int(fields[0], "label")? {
            -1 => None,
            l if l >= 0 => Some(l as usize),
            l => {
                return Err(Error::Parse {
                    line,
                    msg: format!("label {l} must be -1 or non-negative"),
                })
            }
        };
        let grid = int(fields[1], "grid")?;
        let k = int(fields[2], "K")?;
        if grid <= 0 || k <= 0 || !SUPPORTED_GRIDS.contains(&(grid as usize)) {
            return Err(Error::DatasetFormat {
                line,
                msg: format!("unsupported grid {grid} or K {k}"),
            });
        }
        let (grid, k) = (grid as usize, k as usize);
        if HistogramSample::expected_len(grid, k) != dims {
            return Err(Error::DatasetFormat {
                line,
                msg: format!("grid {grid} and K {k} imply {} values, found {dims}", grid * grid * k + 1),
            });
        }
        if let Some(prev) = samples.last() {
            let prev: &HistogramSample = prev;
            if prev.grid != grid || prev.k != k {
                return Err(Error::DatasetFormat {
                    line,
                    msg: "grid/K differ from earlier rows".into(),
                });
            }
        }
        let mut values = fields[3..]
            .iter()
            .map(|s| {
                s.parse::<f64>().map_err(|_| Error::Parse {
                    line,
                    msg: format!("bad value {s:?}"),
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::DatasetFormat {
                line,
                msg: "values must be finite and non-negative".into(),
            });
        }
        let sum: f64 = values.iter().sum();
        if (sum - 1.0).abs() > RENORMALIZE_TOLERANCE {
            return Err(Error::DatasetFormat {
                line,
                msg: format!("values sum to {sum}, expected 1"),
            });
        }
        if (sum - 1.0).abs() > EXACT_SUM_TOLERANCE {
            values.iter_mut().for_each(|v| *v /= sum);
        }
        samples.push(HistogramSample { values, label, grid, k });
    }
    Ok(samples)
}

pub fn load_histograms(path: &Path) -> Result<Vec<HistogramSample>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_histograms(&text)
}

/// Stacks sample values into a `n_samples x dims` matrix.
pub fn to_matrix(samples: &[HistogramSample]) -> Result<Array2<f64>> {
    let dims = samples.first().map(|s| s.values.len()).unwrap_or(0);
    if samples.iter().any(|s| s.values.len() != dims) {
        return Err(Error::rejected("samples have inconsistent dimensions"));
    }
    Ok(Array2::from_shape_fn((samples.len(), dims), |(i, j)| samples[i].values[j]))
}

/// Labels of every sample; fails if any sample is unlabeled.
pub fn labels(samples: &[HistogramSample]) -> Result<Vec<usize>> {
    samples
        .iter()
        .map(|s| s.label.ok_or_else(|| Error::rejected("dataset contains unlabeled samples")))
        .collect()
}
