//! Removal of invalid detections.
//!
//! A candidate `A` is invalid when its center falls outside the valid road
//! region, or when a more confident valid box `B` overlaps it so that
//! `Int(A,B)/Area(A) > t` or `Int(A,B)/Area(B) > t`. The region test runs
//! first so boxes outside the region can never suppress boxes inside it.
//!
//! Confidence ties are broken by larger area, then by earlier input position.

use std::cmp::Ordering;

use thiserror::Error;

use crate::geometry::{Detection, ValidRegion};

pub const DEFAULT_OVERLAP_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FilterError {
    #[error("candidate {index} has a zero-area box")]
    ZeroArea { index: usize },
    #[error("overlap threshold {0} must lie in (0, 1]")]
    Threshold(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterConfig {
    overlap_threshold: f64,
    region: ValidRegion,
}

impl FilterConfig {
    pub fn new(overlap_threshold: f64, region: ValidRegion) -> Result<Self, FilterError> {
        if !(overlap_threshold > 0.0 && overlap_threshold <= 1.0) {
            return Err(FilterError::Threshold(overlap_threshold));
        }
        Ok(Self {
            overlap_threshold,
            region,
        })
    }

    pub fn overlap_threshold(&self) -> f64 {
        self.overlap_threshold
    }

    pub fn region(&self) -> &ValidRegion {
        &self.region
    }
}

fn check_areas(cands: &[Detection]) -> Result<(), FilterError> {
    match cands.iter().position(|d| d.bbox.area() <= 0.0) {
        Some(index) => Err(FilterError::ZeroArea { index }),
        None => Ok(()),
    }
}

/// Either containment ratio exceeds `t`.
pub fn overlaps(a: &Detection, b: &Detection, t: f64) -> bool {
    let inter = a.bbox.intersection_area(&b.bbox);
    inter / a.bbox.area() > t || inter / b.bbox.area() > t
}

/// Ranking used for suppression: higher confidence first, then larger area,
/// then earlier input index.
fn rank(cands: &[Detection], i: usize, j: usize) -> Ordering {
    let (a, b) = (&cands[i], &cands[j]);
    b.confidence
        .partial_cmp(&a.confidence)
        .unwrap_or(Ordering::Equal)
        .then_with(|| {
            b.bbox
                .area()
                .partial_cmp(&a.bbox.area())
                .unwrap_or(Ordering::Equal)
        })
        .then_with(|| i.cmp(&j))
}

/// Indices of the kept candidates, in suppression-rank order.
pub fn filter_indices(cands: &[Detection], cfg: &FilterConfig) -> Result<Vec<usize>, FilterError> {
    check_areas(cands)?;
    let t = cfg.overlap_threshold;

    let mut order: Vec<usize> = (0..cands.len())
        .filter(|&i| cfg.region.contains(cands[i].bbox.center()))
        .collect();
    order.sort_by(|&i, &j| rank(cands, i, j));

    let mut kept: Vec<usize> = Vec::with_capacity(order.len());
    for i in order {
        if !kept.iter().any(|&k| overlaps(&cands[i], &cands[k], t)) {
            kept.push(i);
        }
    }
    Ok(kept)
}

/// Greedy invalid-detection removal. Returns the kept detections in
/// descending confidence.
pub fn filter_detections(
    cands: &[Detection],
    cfg: &FilterConfig,
) -> Result<Vec<Detection>, FilterError> {
    Ok(filter_indices(cands, cfg)?
        .into_iter()
        .map(|i| cands[i])
        .collect())
}

/// Reference evaluation of the removal criterion without any sorting or
/// greedy sweep, for cross-checking [`filter_indices`].
///
/// Validity is the fixed point of: `A` is valid iff its center is in the
/// region and no other valid `B` that outranks `A` overlaps it. All ordered
/// pairs are re-evaluated every round until nothing changes. Returns kept
/// indices in input order.
pub fn brute_force_filter_indices(
    cands: &[Detection],
    cfg: &FilterConfig,
) -> Result<Vec<usize>, FilterError> {
    check_areas(cands)?;
    let n = cands.len();
    let t = cfg.overlap_threshold;
    let in_region: Vec<bool> = cands
        .iter()
        .map(|d| cfg.region.contains(d.bbox.center()))
        .collect();
    let outranks = |b: usize, a: usize| rank(cands, b, a) == Ordering::Less;

    let mut valid = in_region.clone();
    // the k-th ranked box is settled after k rounds
    for _ in 0..=n {
        let next: Vec<bool> = (0..n)
            .map(|a| {
                in_region[a]
                    && !(0..n).any(|b| {
                        b != a && valid[b] && outranks(b, a) && overlaps(&cands[a], &cands[b], t)
                    })
            })
            .collect();
        if next == valid {
            break;
        }
        valid = next;
    }
    Ok((0..n).filter(|&i| valid[i]).collect())
}

pub fn brute_force_filter(
    cands: &[Detection],
    cfg: &FilterConfig,
) -> Result<Vec<Detection>, FilterError> {
    Ok(brute_force_filter_indices(cands, cfg)?
        .into_iter()
        .map(|i| cands[i])
        .collect())
}

/// The criterion read with `B` ranging over every input box, valid or not,
/// and strict `Conf(A) < Conf(B)`. Out-of-region and suppressed boxes still
/// suppress here, so the result is always a subset of the greedy result.
/// Returns kept indices in input order.
pub fn literal_criterion_indices(
    cands: &[Detection],
    cfg: &FilterConfig,
) -> Result<Vec<usize>, FilterError> {
    check_areas(cands)?;
    let t = cfg.overlap_threshold;
    Ok((0..cands.len())
        .filter(|&a| {
            let suppressed = cands.iter().enumerate().any(|(b, other)| {
                b != a && cands[a].confidence < other.confidence && overlaps(&cands[a], other, t)
            });
            !suppressed && cfg.region.contains(cands[a].bbox.center())
        })
        .collect())
}
