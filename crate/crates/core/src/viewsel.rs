//! Multi-hypothesis joint view selection.
//!
//! Each column of the candidate cost matrix votes on whether its source view
//! is trustworthy at this pixel; selected views are weighted by the mean
//! confidence of their good costs, and every candidate is then scored with
//! the same weights.

use crate::error::{Error, Result};
use crate::imaging::MAX_COST;

/// Weight given to the previous best view when it fails the vote.
pub const PREV_BEST_FALLBACK_WEIGHT: f64 = 0.2;

#[derive(Clone, Debug, PartialEq)]
pub struct ViewSelectionParams {
    /// Initial good-cost threshold.
    pub tau0: f64,
    /// Fixed bad-cost threshold.
    pub tau1: f64,
    /// Decay constant of the good-cost threshold, in iterations squared.
    pub alpha: f64,
    /// Confidence bandwidth.
    pub beta: f64,
    /// A view needs more than `n1` good costs...
    pub n1: usize,
    /// ...and fewer than `n2` bad costs.
    pub n2: usize,
}

impl Default for ViewSelectionParams {
    fn default() -> Self {
        Self {
            tau0: 0.8,
            tau1: 1.2,
            alpha: 90.0,
            beta: 0.3,
            n1: 2,
            n2: 3,
        }
    }
}

impl ViewSelectionParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau0 > 0.0 && self.tau0 < self.tau1 && self.tau1 <= MAX_COST) {
            return Err(Error::InvalidParameter(format!(
                "need 0 < tau0 < tau1 <= 2, got tau0={} tau1={}",
                self.tau0, self.tau1
            )));
        }
        if !(self.alpha > 0.0 && self.beta > 0.0) {
            return Err(Error::InvalidParameter("alpha and beta must be positive".into()));
        }
        if self.n1 < 1 || self.n2 < 1 {
            return Err(Error::InvalidParameter("n1 and n2 must be >= 1".into()));
        }
        Ok(())
    }
}

/// Good-cost threshold at iteration `t`: `tau0 * exp(-t^2 / alpha)`.
pub fn tau_of(t: usize, params: &ViewSelectionParams) -> f64 {
    let t = t as f64;
    params.tau0 * (-(t * t) / params.alpha).exp()
}

/// Confidence of a matching cost: `exp(-m^2 / (2 beta^2))`.
pub fn confidence(m: f64, params: &ViewSelectionParams) -> f64 {
    (-(m * m) / (2.0 * params.beta * params.beta)).exp()
}

/// Candidate-by-view matching costs; row `i` is hypothesis `i`, column `j`
/// source view `j`.
#[derive(Clone, Debug, PartialEq)]
pub struct CostMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl CostMatrix {
    pub fn new(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![MAX_COST; rows * cols],
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let cols = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|r| r.len() == cols), "ragged cost matrix");
        Self {
            rows: rows.len(),
            cols,
            data: rows.iter().flatten().copied().collect(),
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn aggregate_photometric(&self, i: usize, state: &ViewSelectionState) -> f64 {
        aggregate_row(self.row(i), &state.weights)
    }

    pub fn aggregate_geometric(
        &self,
        errors: &CostMatrix,
        i: usize,
        state: &ViewSelectionState,
        lambda: f64,
    ) -> f64 {
        aggregate_row_geometric(self.row(i), errors.row(i), &state.weights, lambda)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ViewSelectionState {
    pub selected: Vec<bool>,
    /// Final per-view weights `w'`.
    pub weights: Vec<f64>,
    /// View with the largest weight; `None` when all weights are zero.
    pub best_view: Option<usize>,
}

impl ViewSelectionState {
    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn uniform(weights: Vec<f64>) -> Self {
        Self {
            selected: weights.iter().map(|&w| w > 0.0).collect(),
            weights,
            best_view: None,
        }
    }
}

/// Votes on every column of `m` and derives the per-view weights.
pub fn select_views(
    m: &CostMatrix,
    t: usize,
    prev_best: Option<usize>,
    params: &ViewSelectionParams,
) -> ViewSelectionState {
    let tau = tau_of(t, params);
    let mut selected = vec![false; m.cols()];
    let mut weights = vec![0.0; m.cols()];
    for j in 0..m.cols() {
        let mut good = 0usize;
        let mut bad = 0usize;
        let mut conf_sum = 0.0;
        for i in 0..m.rows() {
            let c = m.get(i, j);
            if c < tau {
                good += 1;
                conf_sum += confidence(c, params);
            }
            if c > params.tau1 {
                bad += 1;
            }
        }
        let is_prev = prev_best == Some(j);
        if good > params.n1 && bad < params.n2 {
            selected[j] = true;
            let w = conf_sum / good as f64;
            weights[j] = if is_prev { 2.0 * w } else { w };
        } else if is_prev {
            weights[j] = PREV_BEST_FALLBACK_WEIGHT;
        }
    }
    let mut best_view = None;
    let mut best_w = 0.0;
    for (j, &w) in weights.iter().enumerate() {
        if w > best_w {
            best_w = w;
            best_view = Some(j);
        }
    }
    ViewSelectionState {
        selected,
        weights,
        best_view,
    }
}

/// Uniform weights over the `ceil(n/2)` views with the smallest column
/// minimum (lowest index on ties). Used when the vote selects nothing and
/// there is no previous best view.
pub fn fallback_weights(m: &CostMatrix) -> Vec<f64> {
    let n = m.cols();
    let keep = n.div_ceil(2);
    let mut order: Vec<(f64, usize)> = (0..n)
        .map(|j| {
            let min = (0..m.rows()).map(|i| m.get(i, j)).fold(f64::INFINITY, f64::min);
            (min, j)
        })
        .collect();
    order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut w = vec![0.0; n];
    for &(_, j) in order.iter().take(keep) {
        w[j] = 1.0;
    }
    w
}

/// `sum_j w_j m_j / sum_j w_j`; [`MAX_COST`] when the weights vanish.
#[inline]
pub fn aggregate_row(costs: &[f64], weights: &[f64]) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for (c, w) in costs.iter().zip(weights) {
        if *w > 0.0 {
            num += w * c;
            den += w;
        }
    }
    if den > 0.0 {
        num / den
    } else {
        MAX_COST
    }
}

/// `sum_j w_j (m_j + lambda e_j) / sum_j w_j`; [`MAX_COST`] when the weights
/// vanish.
#[inline]
pub fn aggregate_row_geometric(costs: &[f64], errors: &[f64], weights: &[f64], lambda: f64) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for ((c, e), w) in costs.iter().zip(errors).zip(weights) {
        if *w > 0.0 {
            num += w * (c + lambda * e);
            den += w;
        }
    }
    if den > 0.0 {
        num / den
    } else {
        MAX_COST
    }
}

pub fn aggregate_photometric(m: &CostMatrix, i: usize, state: &ViewSelectionState) -> f64 {
    m.aggregate_photometric(i, state)
}

pub fn aggregate_geometric(
    m: &CostMatrix,
    errors: &CostMatrix,
    i: usize,
    state: &ViewSelectionState,
    lambda: f64,
) -> f64 {
    m.aggregate_geometric(errors, i, state, lambda)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn column_matrix(col: &[f64]) -> CostMatrix {
        CostMatrix::from_rows(&col.iter().map(|&c| vec![c]).collect::<Vec<_>>())
    }

    #[test]
    fn threshold_decay_values() {
        let p = ViewSelectionParams::default();
        assert_eq!(tau_of(0, &p), 0.8);
        assert_relative_eq!(tau_of(1, &p), 0.8 * (-1.0f64 / 90.0).exp(), epsilon = 1e-15);
        assert!((tau_of(1, &p) - 0.79116).abs() < 1e-5);
        assert!((tau_of(3, &p) - 0.72387).abs() < 1e-5);
        for t in 0..50 {
            assert!(tau_of(t + 1, &p) < tau_of(t, &p));
            assert!(tau_of(t, &p) < p.tau1);
        }
    }

    #[test]
    fn confidence_values() {
        let p = ViewSelectionParams::default();
        assert_eq!(confidence(0.0, &p), 1.0);
        assert!((confidence(0.3, &p) - 0.60653).abs() < 1e-5);
        assert!((confidence(0.6, &p) - 0.13534).abs() < 1e-5);
    }

    #[test]
    fn vote_accepts_worked_column() {
        let p = ViewSelectionParams::default();
        let m = column_matrix(&[0.5, 0.6, 0.7, 0.9, 1.0, 1.1, 1.25, 1.3]);
        let s = select_views(&m, 0, None, &p);
        assert!(s.selected[0]);
        assert!((s.weights[0] - 0.15014).abs() < 1e-5, "{}", s.weights[0]);
        assert_eq!(s.best_view, Some(0));
    }

    #[test]
    fn vote_rejects_bad_column() {
        let p = ViewSelectionParams::default();
        let s = select_views(&column_matrix(&[2.0; 8]), 0, None, &p);
        assert!(!s.selected[0]);
        assert_eq!(s.weights[0], 0.0);
        assert_eq!(s.best_view, None);
    }

    #[test]
    fn rejected_previous_best_keeps_small_weight() {
        let p = ViewSelectionParams::default();
        let s = select_views(&column_matrix(&[2.0; 8]), 3, Some(0), &p);
        assert_eq!(s.weights[0], 0.2);
        assert_eq!(s.best_view, Some(0));
    }

    #[test]
    fn selected_previous_best_is_doubled() {
        let p = ViewSelectionParams::default();
        let col = [0.1, 0.2, 0.3, 1.0, 1.0, 1.0, 1.0, 1.0];
        let m = CostMatrix::from_rows(&col.iter().map(|&c| vec![c, c]).collect::<Vec<_>>());
        let s = select_views(&m, 0, Some(1), &p);
        assert_relative_eq!(s.weights[1], 2.0 * s.weights[0]);
        assert_eq!(s.best_view, Some(1));
    }

    #[test]
    fn boundary_counts_are_strict() {
        let p = ViewSelectionParams::default();
        // Exactly n1 = 2 good costs: rejected.
        let s = select_views(&column_matrix(&[0.1, 0.1, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0]), 0, None, &p);
        assert!(!s.selected[0]);
        // Exactly n2 = 3 bad costs: rejected.
        let s = select_views(&column_matrix(&[0.1, 0.1, 0.1, 1.0, 1.0, 1.5, 1.5, 1.5]), 0, None, &p);
        assert!(!s.selected[0]);
        let s = select_views(&column_matrix(&[0.1, 0.1, 0.1, 1.0, 1.0, 1.0, 1.5, 1.5]), 0, None, &p);
        assert!(s.selected[0]);
    }

    #[test]
    fn aggregation_examples() {
        let state = ViewSelectionState::uniform(vec![0.0, 0.37, 0.0]);
        let m = CostMatrix::from_rows(&[vec![0.9, 0.42, 1.7]]);
        assert_relative_eq!(m.aggregate_photometric(0, &state), 0.42);

        let state = ViewSelectionState::uniform(vec![1.0, 1.0]);
        let m = CostMatrix::from_rows(&[vec![0.2, 0.4]]);
        assert_relative_eq!(m.aggregate_photometric(0, &state), 0.3, epsilon = 1e-15);

        let state = ViewSelectionState::uniform(vec![1.0]);
        let m = CostMatrix::from_rows(&[vec![0.5]]);
        let e = CostMatrix::from_rows(&[vec![1.0]]);
        assert_relative_eq!(m.aggregate_geometric(&e, 0, &state, 0.2), 0.7, epsilon = 1e-15);

        let state = ViewSelectionState::uniform(vec![0.0, 0.0]);
        assert_eq!(m.aggregate_photometric(0, &ViewSelectionState::uniform(vec![0.0])), MAX_COST);
        let _ = state;
    }

    #[test]
    fn truncated_errors_add_constant() {
        let state = ViewSelectionState::uniform(vec![0.3, 0.9, 0.1]);
        let m = CostMatrix::from_rows(&[vec![0.2, 0.7, 1.1]]);
        let e = CostMatrix::from_rows(&[vec![3.0, 3.0, 3.0]]);
        let photo = m.aggregate_photometric(0, &state);
        assert_relative_eq!(m.aggregate_geometric(&e, 0, &state, 0.2), photo + 0.6, epsilon = 1e-12);
    }

    #[test]
    fn fallback_keeps_best_half() {
        let m = CostMatrix::from_rows(&[vec![1.9, 0.5, 1.0, 0.5, 2.0], vec![1.8, 1.5, 1.0, 2.0, 2.0]]);
        assert_eq!(fallback_weights(&m), vec![0.0, 1.0, 1.0, 1.0, 0.0]);
    }

    fn arb_matrix() -> impl Strategy<Value = CostMatrix> {
        (1usize..6).prop_flat_map(|cols| {
            proptest::collection::vec(proptest::collection::vec(0.0f64..2.0, cols), 8)
                .prop_map(|rows| CostMatrix::from_rows(&rows))
        })
    }

    proptest! {
        #[test]
        fn argmin_invariant_to_weight_scale(m in arb_matrix(), scale in 0.01f64..100.0, t in 0usize..8) {
            let p = ViewSelectionParams::default();
            let s = select_views(&m, t, None, &p);
            prop_assume!(s.total_weight() > 0.0);
            let scaled = ViewSelectionState { weights: s.weights.iter().map(|w| w * scale).collect(), ..s.clone() };
            let argmin = |st: &ViewSelectionState| (0..8).min_by(|&a, &b| m.aggregate_photometric(a, st).total_cmp(&m.aggregate_photometric(b, st))).unwrap();
            let a = argmin(&s);
            let b = argmin(&scaled);
            prop_assert!((m.aggregate_photometric(a, &s) - m.aggregate_photometric(b, &s)).abs() < 1e-12);
        }

        #[test]
        fn geometric_term_never_decreases(m in arb_matrix(), lambda in 0.0f64..1.0, seed in 0u64..100) {
            let p = ViewSelectionParams::default();
            let s = select_views(&m, 0, Some(0), &p);
            let e = CostMatrix::from_rows(&(0..8).map(|i| (0..m.cols()).map(|j| ((i * 7 + j * 3 + seed as usize) % 4) as f64 * 0.75).collect()).collect::<Vec<_>>());
            for i in 0..8 {
                prop_assert!(m.aggregate_geometric(&e, i, &s, lambda) >= m.aggregate_photometric(i, &s) - 1e-12);
            }
        }

        #[test]
        fn weights_are_bounded(m in arb_matrix(), t in 0usize..10, prev in proptest::option::of(0usize..6)) {
            let p = ViewSelectionParams::default();
            let s = select_views(&m, t, prev.filter(|&v| v < m.cols()), &p);
            for j in 0..m.cols() {
                if s.selected[j] {
                    prop_assert!(s.weights[j] > 0.0 && s.weights[j] <= 2.0);
                } else if s.weights[j] > 0.0 {
                    prop_assert_eq!(Some(j), prev);
                }
            }
        }

        #[test]
        fn selection_is_permutation_equivariant(m in arb_matrix(), t in 0usize..6) {
            let p = ViewSelectionParams::default();
            let cols = m.cols();
            let perm: Vec<usize> = (0..cols).rev().collect();
            let permuted = CostMatrix::from_rows(&(0..8).map(|i| perm.iter().map(|&j| m.get(i, j)).collect()).collect::<Vec<_>>());
            let a = select_views(&m, t, None, &p);
            let b = select_views(&permuted, t, None, &p);
            for (k, &j) in perm.iter().enumerate() {
                prop_assert_eq!(a.selected[j], b.selected[k]);
                prop_assert_eq!(a.weights[j], b.weights[k]);
            }
        }
    }
}
