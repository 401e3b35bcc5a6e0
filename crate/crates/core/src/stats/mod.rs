//! Correlation coefficients with two-tailed p-values, and the report relating
//! CRS to mean accuracy.

mod beta;

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

pub use beta::{ln_gamma, regularized_incomplete_beta, t_two_tailed_p};

use crate::corpus::{AccuracyCell, CrsRow, StyleId};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CorrelationResult {
    pub coefficient: f64,
    pub n: usize,
    pub p_value: f64,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum StatsError {
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("need at least 3 observations, got {0}")]
    TooFew(usize),
    #[error("input has zero variance")]
    ZeroVariance,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Pearson,
    Spearman,
}

fn check(x: &[f64], y: &[f64]) -> Result<(), StatsError> {
    if x.len() != y.len() {
        return Err(StatsError::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < 3 {
        return Err(StatsError::TooFew(x.len()));
    }
    Ok(())
}

fn product_moment(x: &[f64], y: &[f64]) -> Result<f64, StatsError> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(StatsError::ZeroVariance);
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Two-tailed p-value for a correlation coefficient `r` over `n` points.
///
/// A perfect correlation has p = 0.
pub fn t_test_p(r: f64, n: usize) -> f64 {
    let df = (n - 2) as f64;
    if r.abs() >= 1.0 {
        return 0.0;
    }
    let t = r * (df / (1.0 - r * r)).sqrt();
    t_two_tailed_p(t, df)
}

pub fn pearson(x: &[f64], y: &[f64]) -> Result<CorrelationResult, StatsError> {
    check(x, y)?;
    let r = product_moment(x, y)?;
    Ok(CorrelationResult {
        coefficient: r,
        n: x.len(),
        p_value: t_test_p(r, x.len()),
    })
}

/// 1-based ranks; tied values share the mean of their rank block.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        // ranks start+1 ..= end
        let rank = (start + 1 + end) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = rank;
        }
        start = end;
    }
    ranks
}

pub fn spearman(x: &[f64], y: &[f64]) -> Result<CorrelationResult, StatsError> {
    check(x, y)?;
    pearson(&average_ranks(x), &average_ranks(y))
}

pub fn correlate(x: &[f64], y: &[f64], method: Method) -> Result<CorrelationResult, StatsError> {
    match method {
        Method::Pearson => pearson(x, y),
        Method::Spearman => spearman(x, y),
    }
}

/// Permutation-test p-value: the share of seeded shuffles of `y` whose
/// coefficient is at least as extreme as the observed one (add-one smoothed).
pub fn permutation_p_value(
    x: &[f64],
    y: &[f64],
    method: Method,
    n_permutations: usize,
    seed: u64,
) -> Result<f64, StatsError> {
    let observed = correlate(x, y, method)?.coefficient.abs();
    let (x, mut y) = match method {
        Method::Pearson => (x.to_vec(), y.to_vec()),
        Method::Spearman => (average_ranks(x), average_ranks(y)),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut extreme = 0usize;
    for _ in 0..n_permutations {
        y.shuffle(&mut rng);
        if product_moment(&x, &y)?.abs() >= observed - 1e-12 {
            extreme += 1;
        }
    }
    Ok((extreme + 1) as f64 / (n_permutations + 1) as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportRow {
    pub metric: &'static str,
    pub pearson: CorrelationResult,
    pub spearman: CorrelationResult,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorrelationReport {
    pub label: String,
    pub rows: Vec<ReportRow>,
    /// (model, benchmark) keys left out, with the reason.
    pub dropped: Vec<(String, String, &'static str)>,
}

impl CorrelationReport {
    pub fn row(&self, metric: &str) -> Option<&ReportRow> {
        self.rows.iter().find(|r| r.metric == metric)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("metric,pearson_r,pearson_p,spearman_rho,spearman_p,n\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{:.6},{:.6e},{:.6},{:.6e},{}",
                r.metric, r.pearson.coefficient, r.pearson.p_value, r.spearman.coefficient, r.spearman.p_value, r.pearson.n
            );
        }
        out
    }
}

pub const REPORT_METRICS: [&str; 4] = ["struct", "lex", "coh", "overall"];

/// How report p-values are obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PValueMode {
    #[default]
    TTest,
    Permutation { n_permutations: usize, seed: u64 },
}

/// Correlate each CRS dimension with the mean of the four style accuracies,
/// one observation per shared (model, benchmark) key.
pub fn correlate_report(
    crs_rows: &[CrsRow],
    accuracy_cells: &[AccuracyCell],
    label: &str,
) -> Result<CorrelationReport, StatsError> {
    correlate_report_with(crs_rows, accuracy_cells, label, PValueMode::TTest)
}

pub fn correlate_report_with(
    crs_rows: &[CrsRow],
    accuracy_cells: &[AccuracyCell],
    label: &str,
    mode: PValueMode,
) -> Result<CorrelationReport, StatsError> {
    let mut accuracies: BTreeMap<(&str, &str), BTreeMap<StyleId, f64>> = BTreeMap::new();
    for c in accuracy_cells {
        accuracies
            .entry((c.model.as_str(), c.benchmark.as_str()))
            .or_default()
            .insert(c.style, c.accuracy);
    }
    let crs: BTreeMap<(&str, &str), &CrsRow> = crs_rows
        .iter()
        .map(|r| ((r.model.as_str(), r.benchmark.as_str()), r))
        .collect();

    let mut dropped = Vec::new();
    let mut pairs: Vec<(&CrsRow, f64)> = Vec::new();
    for (key, row) in &crs {
        match accuracies.get(key) {
            None => dropped.push((key.0.to_owned(), key.1.to_owned(), "no accuracy cells")),
            Some(styles) if styles.len() != StyleId::ALL.len() => {
                dropped.push((key.0.to_owned(), key.1.to_owned(), "fewer than four styles"))
            }
            Some(styles) => {
                let mean = styles.values().sum::<f64>() / styles.len() as f64;
                pairs.push((row, mean));
            }
        }
    }
    for key in accuracies.keys().filter(|k| !crs.contains_key(*k)) {
        dropped.push((key.0.to_owned(), key.1.to_owned(), "no CRS row"));
    }
    for (model, benchmark, reason) in &dropped {
        log::warn!("{label}: dropping {model}/{benchmark}: {reason}");
    }

    let acc: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let mut rows = Vec::with_capacity(REPORT_METRICS.len());
    for metric in REPORT_METRICS {
        let values: Vec<f64> = pairs
            .iter()
            .map(|(r, _)| match metric {
                "struct" => r.crs_struct,
                "lex" => r.crs_lex,
                "coh" => r.crs_coh,
                _ => r.crs_overall,
            })
            .collect();
        let mut row = ReportRow {
            metric,
            pearson: pearson(&values, &acc)?,
            spearman: spearman(&values, &acc)?,
        };
        if let PValueMode::Permutation { n_permutations, seed } = mode {
            row.pearson.p_value = permutation_p_value(&values, &acc, Method::Pearson, n_permutations, seed)?;
            row.spearman.p_value = permutation_p_value(&values, &acc, Method::Spearman, n_permutations, seed)?;
        }
        rows.push(row);
    }
    Ok(CorrelationReport {
        label: label.to_owned(),
        rows,
        dropped,
    })
}
