//! Choosing which anchor to range to next.
//!
//! The greedy policy picks the anchor whose measurement would shrink the trace
//! of the 9x9 covariance the most. Because `H = [eᵀ, 0, 0]`, the trace change
//! of a scalar update reduces to
//!
//! ```text
//! tr ΔΣ = −(‖Σ_xx e‖² + ‖Σ_vx e‖² + ‖Σ_δx e‖²) / (eᵀ Σ_xx e + r)
//! ```
//!
//! which costs a handful of 3-vector operations per anchor.

use serde::{Deserialize, Serialize};

use crate::ekf::{range_direction, Covariance, EkfError};
use crate::sim::{Anchor, AnchorId};
use crate::so3::Vec3;

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum SelectError {
    #[error("estimate within {distance:e} m of anchor {anchor}")]
    AnchorCoincident { anchor: AnchorId, distance: f64 },
    #[error("zero innovation variance for anchor {0}")]
    ZeroDenominator(AnchorId),
    #[error("no anchors configured")]
    NoAnchors,
    #[error("no anchor can be scored this tick")]
    NoValidAnchor,
    #[error("sequential order is empty")]
    EmptyOrder,
}

impl From<EkfError> for SelectError {
    fn from(e: EkfError) -> Self {
        match e {
            EkfError::AnchorCoincident { anchor, distance } => SelectError::AnchorCoincident { anchor, distance },
            _ => SelectError::NoValidAnchor,
        }
    }
}

/// Scores within this relative distance of the best are treated as tied.
pub const TIE_TOL: f64 = 1e-13;

/// Predicted effect of ranging to one anchor.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AnchorScore {
    pub anchor_id: AnchorId,
    /// `tr(Σ⁺) − tr(Σ)`, never positive.
    pub trace_delta: f64,
    pub predicted_range: f64,
}

/// Per-block weights for a weighted trace criterion. All ones is the plain trace.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceWeights {
    pub position: f64,
    pub velocity: f64,
    pub attitude: f64,
}

impl Default for TraceWeights {
    fn default() -> Self {
        TraceWeights {
            position: 1.0,
            velocity: 1.0,
            attitude: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SelectionPolicy {
    /// Round-robin over `order`.
    Sequential { order: Vec<AnchorId> },
    /// One-step greedy trace reduction.
    Greedy,
}

impl SelectionPolicy {
    pub fn name(&self) -> &'static str {
        match self {
            SelectionPolicy::Sequential { .. } => "sequential",
            SelectionPolicy::Greedy => "greedy",
        }
    }

    /// Sequential policy visiting `anchors` in list order.
    pub fn sequential_over(anchors: &[Anchor]) -> Self {
        SelectionPolicy::Sequential {
            order: anchors.iter().map(|a| a.id).collect(),
        }
    }
}

/// Closed-form trace change of a range update from `anchor`.
pub fn score_anchor(cov: &Covariance, x_hat: &Vec3, anchor: &Anchor, r: f64) -> Result<AnchorScore, SelectError> {
    score_anchor_weighted(cov, x_hat, anchor, r, &TraceWeights::default())
}

pub fn score_anchor_weighted(
    cov: &Covariance,
    x_hat: &Vec3,
    anchor: &Anchor,
    r: f64,
    weights: &TraceWeights,
) -> Result<AnchorScore, SelectError> {
    let (e, predicted_range) = range_direction(x_hat, anchor)?;
    let pxx_e = cov.xx() * e;
    let denom = e.dot(&pxx_e) + r;
    if !(denom > 0.0) {
        return Err(SelectError::ZeroDenominator(anchor.id));
    }
    // Σ_vx e = Σ_xvᵀ e, Σ_δx e = Σ_xδᵀ e
    let pvx_e = cov.xv().tr_mul(&e);
    let pdx_e = cov.xd().tr_mul(&e);
    let numer = weights.position * pxx_e.norm_squared()
        + weights.velocity * pvx_e.norm_squared()
        + weights.attitude * pdx_e.norm_squared();
    Ok(AnchorScore {
        anchor_id: anchor.id,
        trace_delta: -numer / denom,
        predicted_range,
    })
}

/// Scores every anchor, dropping those that fail the score preconditions.
pub fn score_all(cov: &Covariance, x_hat: &Vec3, anchors: &[Anchor], r: f64) -> Vec<AnchorScore> {
    anchors
        .iter()
        .filter_map(|a| score_anchor(cov, x_hat, a, r).ok())
        .collect()
}

/// Picks the anchor to measure at ranging tick `step`.
///
/// Greedy returns the smallest `trace_delta`, ties going to the lowest id.
/// Sequential returns `order[step mod len]` and ignores the covariance.
pub fn select_anchor(
    cov: &Covariance,
    x_hat: &Vec3,
    anchors: &[Anchor],
    r: f64,
    policy: &SelectionPolicy,
    step: usize,
) -> Result<AnchorId, SelectError> {
    if anchors.is_empty() {
        return Err(SelectError::NoAnchors);
    }
    match policy {
        SelectionPolicy::Sequential { order } => {
            if order.is_empty() {
                return Err(SelectError::EmptyOrder);
            }
            Ok(order[step % order.len()])
        }
        SelectionPolicy::Greedy => {
            let scores = score_all(cov, x_hat, anchors, r);
            let best = scores
                .iter()
                .map(|s| s.trace_delta)
                .min_by(f64::total_cmp)
                .ok_or(SelectError::NoValidAnchor)?;
            let window = TIE_TOL * best.abs();
            scores
                .iter()
                .filter(|s| s.trace_delta <= best + window)
                .map(|s| s.anchor_id)
                .min()
                .ok_or(SelectError::NoValidAnchor)
        }
    }
}
