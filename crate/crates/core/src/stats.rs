//! Agreement and correlation statistics.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::ops::RangeInclusive;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::corpus::{AnnotationRecord, EmotionCategory, EventChain, Method};
use crate::error::{Error, Result};
use crate::scalar::{Real, Scalar};

const K: usize = EmotionCategory::COUNT;

/// Per-item category counts with a fixed number of raters per item.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationMatrix {
    pub items: Vec<String>,
    pub counts: Vec<[u32; K]>,
    pub raters_per_item: u32,
}

impl AnnotationMatrix {
    pub fn new(items: Vec<String>, counts: Vec<[u32; K]>) -> Result<Self> {
        if items.is_empty() {
            return Err(Error::Empty("annotation matrix"));
        }
        if items.len() != counts.len() {
            return Err(Error::validation("counts", "one row per item required"));
        }
        let n: u32 = counts[0].iter().sum();
        if n < 2 {
            return Err(Error::validation("raters_per_item", "need at least 2 raters per item"));
        }
        if let Some(i) = counts.iter().position(|row| row.iter().sum::<u32>() != n) {
            return Err(Error::validation(
                "counts",
                format!("item {} has {} ratings, expected {n}", items[i], counts[i].iter().sum::<u32>()),
            ));
        }
        Ok(Self {
            items,
            counts,
            raters_per_item: n,
        })
    }

    /// Builds the matrix for `items` from annotation records.
    ///
    /// Every item must have exactly `raters` records; otherwise a coverage error
    /// lists the offending items. Records for other instances are ignored.
    pub fn from_annotations(records: &[AnnotationRecord], items: &[String], raters: u32) -> Result<Self> {
        let mut by_item: HashMap<&str, [u32; K]> =
            items.iter().map(|i| (i.as_str(), [0; K])).collect();
        for r in records {
            if let Some(row) = by_item.get_mut(r.instance_id.as_str()) {
                row[r.emotion.index()] += 1;
            }
        }
        let short: Vec<String> = items
            .iter()
            .filter(|i| by_item[i.as_str()].iter().sum::<u32>() != raters)
            .cloned()
            .collect();
        if !short.is_empty() {
            return Err(Error::Coverage(short));
        }
        let counts = items.iter().map(|i| by_item[i.as_str()]).collect();
        Self::new(items.to_vec(), counts)
    }

    /// Sub-matrix restricted to the given row indices.
    pub fn select(&self, rows: &[usize]) -> Result<Self> {
        Self::new(
            rows.iter().map(|&i| self.items[i].clone()).collect(),
            rows.iter().map(|&i| self.counts[i]).collect(),
        )
    }

    /// Most frequent label of a row; ties go to the earliest category.
    pub fn modal(&self, row: usize) -> (EmotionCategory, u32) {
        let counts = &self.counts[row];
        let mut best = 0;
        for j in 1..K {
            if counts[j] > counts[best] {
                best = j;
            }
        }
        (EmotionCategory::ALL[best], counts[best])
    }

    /// Fraction of a row's raters choosing each category.
    pub fn fractions<T: Scalar>(&self, row: usize) -> [T; K] {
        let n = u64::from(self.raters_per_item);
        std::array::from_fn(|j| T::ratio(u64::from(self.counts[row][j]), n))
    }
}

/// Fleiss' kappa, `(P̄ - P̄e) / (1 - P̄e)`.
pub fn fleiss_kappa<T: Scalar>(matrix: &AnnotationMatrix) -> Result<T> {
    let big_n = matrix.counts.len() as u64;
    let n = u64::from(matrix.raters_per_item);
    let mut p_bar = T::zero();
    for row in &matrix.counts {
        let agree: u64 = row.iter().map(|&c| u64::from(c) * u64::from(c).saturating_sub(1)).sum();
        p_bar = p_bar + T::ratio(agree, n * (n - 1));
    }
    p_bar = p_bar / T::from_count(big_n);
    let mut p_e = T::zero();
    for j in 0..K {
        let col: u64 = matrix.counts.iter().map(|row| u64::from(row[j])).sum();
        let p_j = T::ratio(col, big_n * n);
        p_e = p_e + p_j.clone() * p_j;
    }
    if p_e == T::one() {
        return Err(Error::Undefined("kappa with every rating in a single category"));
    }
    Ok((p_bar - p_e.clone()) / (T::one() - p_e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint<T> {
    pub k: usize,
    pub chains: usize,
    /// `None` when kappa is undefined on the selection.
    pub kappa: Option<T>,
}

/// Kappa over each event's `k` best-agreed chains, per method.
///
/// Chains of an event are ranked by the share of raters giving the modal label;
/// ties prefer chains whose modal label is the prompted emotion, then the
/// prompted emotion's position in the fixed category order, then chain id.
pub fn best_chain_curve<T: Scalar>(
    annotations: &[AnnotationRecord],
    chains: &[EventChain],
    raters: u32,
    k_range: RangeInclusive<usize>,
) -> Result<BTreeMap<Method, Vec<CurvePoint<T>>>> {
    if chains.is_empty() {
        return Err(Error::Empty("chains for the best-chain curve"));
    }
    let ids: Vec<String> = chains.iter().map(|c| c.id.clone()).collect();
    let matrix = AnnotationMatrix::from_annotations(annotations, &ids, raters)?;
    let mut groups: BTreeMap<Method, BTreeMap<&str, Vec<usize>>> = BTreeMap::new();
    for (i, c) in chains.iter().enumerate() {
        groups.entry(c.method).or_default().entry(&c.event_id).or_default().push(i);
    }
    let mut out = BTreeMap::new();
    for (method, events) in groups {
        let ranked: Vec<Vec<usize>> = events
            .into_values()
            .map(|mut rows| {
                rows.sort_by_key(|&i| {
                    let (label, count) = matrix.modal(i);
                    let c = &chains[i];
                    (
                        std::cmp::Reverse(count),
                        label != c.prompted_emotion,
                        c.prompted_emotion.index(),
                        c.id.clone(),
                    )
                });
                rows
            })
            .collect();
        let mut points = Vec::new();
        for k in k_range.clone() {
            let rows: Vec<usize> = ranked.iter().flat_map(|r| r.iter().take(k).copied()).collect();
            if rows.is_empty() {
                continue;
            }
            let kappa = match fleiss_kappa(&matrix.select(&rows)?) {
                Ok(v) => Some(v),
                Err(Error::Undefined(_)) => None,
                Err(e) => return Err(e),
            };
            points.push(CurvePoint { k, chains: rows.len(), kappa });
        }
        out.insert(method, points);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrelationResult<T> {
    pub coefficient: T,
    pub n: usize,
    pub p_value: T,
}

/// Below this size p-values come from an exact permutation test.
pub const EXACT_TEST_BELOW: usize = 10;

fn check_pair<T: Real>(x: &[T], y: &[T]) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::validation("samples", "x and y differ in length"));
    }
    if x.len() < 3 {
        return Err(Error::validation("samples", "need at least 3 paired values"));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::validation("samples", "non-finite value"));
    }
    Ok(())
}

fn pearson_coefficient(x: &[f64], y: &[f64]) -> Result<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::Undefined("correlation of a constant sample"));
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Two-sided p-value for `r` with `n` pairs, from the t distribution.
pub fn t_test_p_value(r: f64, n: usize) -> f64 {
    if r.abs() >= 1.0 {
        return 0.0;
    }
    let df = (n - 2) as f64;
    let t = r * (df / (1.0 - r * r)).sqrt();
    let dist = StudentsT::new(0.0, 1.0, df).expect("df > 0");
    (2.0 * (1.0 - dist.cdf(t.abs()))).clamp(0.0, 1.0)
}

/// Share of all orderings of `y` whose correlation is at least as extreme as observed.
fn permutation_p_value(x: &[f64], y: &[f64], observed: f64) -> f64 {
    let mut perm: Vec<usize> = (0..y.len()).collect();
    let mut yp = y.to_vec();
    let (mut extreme, mut total) = (0u64, 0u64);
    loop {
        for (slot, &i) in yp.iter_mut().zip(&perm) {
            *slot = y[i];
        }
        let r = pearson_coefficient(x, &yp).unwrap_or(0.0);
        if r.abs() >= observed.abs() - 1e-12 {
            extreme += 1;
        }
        total += 1;
        if !next_permutation(&mut perm) {
            break;
        }
    }
    extreme as f64 / total as f64
}

fn next_permutation(p: &mut [usize]) -> bool {
    let Some(i) = p.windows(2).rposition(|w| w[0] < w[1]) else {
        return false;
    };
    let j = p.iter().rposition(|&v| v > p[i]).expect("successor exists");
    p.swap(i, j);
    p[i + 1..].reverse();
    true
}

fn correlation<T: Real>(x: &[f64], y: &[f64], n: usize) -> Result<CorrelationResult<T>> {
    let r = pearson_coefficient(x, y)?;
    let p = if n < EXACT_TEST_BELOW {
        permutation_p_value(x, y, r)
    } else {
        t_test_p_value(r, n)
    };
    Ok(CorrelationResult {
        coefficient: T::from_f64(r),
        n,
        p_value: T::from_f64(p),
    })
}

fn to_f64s<T: Real>(v: &[T]) -> Vec<f64> {
    v.iter().map(Scalar::to_f64).collect()
}

/// Pearson product-moment correlation.
pub fn pearson<T: Real>(x: &[T], y: &[T]) -> Result<CorrelationResult<T>> {
    check_pair(x, y)?;
    correlation(&to_f64s(x), &to_f64s(y), x.len())
}

/// 1-based ranks, ties receiving the average of the positions they span.
pub fn average_ranks(v: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut ranks = vec![0.0; v.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && v[order[j + 1]] == v[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            ranks[idx] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation: Pearson over average ranks.
pub fn spearman<T: Real>(x: &[T], y: &[T]) -> Result<CorrelationResult<T>> {
    check_pair(x, y)?;
    let rx = average_ranks(&to_f64s(x));
    let ry = average_ranks(&to_f64s(y));
    correlation(&rx, &ry, x.len())
}

/// Rows are prompted (reference) labels, columns are assigned labels.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: [[u64; K]; K],
}

impl ConfusionMatrix {
    pub fn from_pairs(pairs: &[(EmotionCategory, EmotionCategory)]) -> Self {
        let mut counts = [[0; K]; K];
        for &(row, col) in pairs {
            counts[row.index()][col.index()] += 1;
        }
        Self { counts }
    }

    pub fn get(&self, row: EmotionCategory, col: EmotionCategory) -> u64 {
        self.counts[row.index()][col.index()]
    }

    pub fn row_sums(&self) -> [u64; K] {
        std::array::from_fn(|i| self.counts[i].iter().sum())
    }

    pub fn col_sums(&self) -> [u64; K] {
        std::array::from_fn(|j| self.counts.iter().map(|r| r[j]).sum())
    }

    pub fn total(&self) -> u64 {
        self.row_sums().iter().sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prf<T> {
    pub precision: T,
    pub recall: T,
    pub f1: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassScores<T> {
    pub per_class: BTreeMap<EmotionCategory, Prf<T>>,
    /// Unweighted mean over the classes in `per_class`.
    pub macro_avg: Prf<T>,
}

fn ratio_or_zero<T: Scalar>(num: u64, den: u64) -> T {
    if den == 0 {
        T::zero()
    } else {
        T::ratio(num, den)
    }
}

/// Per-class precision, recall and F1 with zero for empty denominators.
///
/// Only classes occurring as a reference or an assigned label are scored.
pub fn precision_recall_f1<T: Scalar>(cm: &ConfusionMatrix) -> ClassScores<T> {
    let rows = cm.row_sums();
    let cols = cm.col_sums();
    let present: BTreeSet<usize> = (0..K).filter(|&i| rows[i] > 0 || cols[i] > 0).collect();
    let mut per_class = BTreeMap::new();
    let (mut sp, mut sr, mut sf) = (T::zero(), T::zero(), T::zero());
    for &i in &present {
        let tp = cm.counts[i][i];
        let precision: T = ratio_or_zero(tp, cols[i]);
        let recall: T = ratio_or_zero(tp, rows[i]);
        let denom = precision.clone() + recall.clone();
        let f1 = if denom == T::zero() {
            T::zero()
        } else {
            T::from_count(2) * precision.clone() * recall.clone() / denom
        };
        sp = sp + precision.clone();
        sr = sr + recall.clone();
        sf = sf + f1.clone();
        per_class.insert(EmotionCategory::ALL[i], Prf { precision, recall, f1 });
    }
    let m = T::from_count(present.len().max(1) as u64);
    ClassScores {
        per_class,
        macro_avg: Prf {
            precision: sp / m.clone(),
            recall: sr / m.clone(),
            f1: sf / m,
        },
    }
}
