//! Tubelet-wise matching.
//!
//! Every ground-truth tubelet is compared with every prediction slot over
//! the union of their temporal extents, the per-frame costs are averaged,
//! and the resulting square matrix (padded with no-object rows) is solved
//! with the Hungarian algorithm.

use std::collections::BTreeSet;

use itertools::Itertools;

use crate::config::EvalConfig;
use crate::error::{invalid, Result};
use crate::geometry::box_loss;
use crate::types::{BBox, EvalInstance, FrameIndex, PredictedTubelet, StateProbs, Tubelet};

/// Largest matrix [`brute_force_assignment`] accepts.
pub const BRUTE_FORCE_MAX: usize = 8;

/// Dense row-major cost matrix; rows are ground-truth tubelets (padded with
/// no-object rows), columns are prediction slots.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

impl CostMatrix {
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(invalid("cost matrix rows have different lengths"));
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            values: rows.into_iter().flatten().collect(),
        })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            values: vec![0.0; rows * cols],
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.cols + col]
    }

    pub(crate) fn set(&mut self, row: usize, col: usize, v: f64) {
        self.values[row * self.cols + col] = v;
    }

    pub fn row(&self, row: usize) -> &[f64] {
        &self.values[row * self.cols..(row + 1) * self.cols]
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    /// Sum of the selected entries, accumulated in row order.
    pub fn cost_of(&self, mapping: &[usize]) -> f64 {
        mapping.iter().enumerate().map(|(r, &c)| self.get(r, c)).sum()
    }

    fn check_solvable(&self) -> Result<()> {
        if !self.is_square() {
            return Err(invalid(format!(
                "cost matrix is {}x{}, expected square",
                self.rows, self.cols
            )));
        }
        if let Some(pos) = self.values.iter().position(|v| !v.is_finite()) {
            return Err(invalid(format!(
                "cost matrix entry ({}, {}) is not finite",
                pos / self.cols,
                pos % self.cols
            )));
        }
        Ok(())
    }
}

/// A permutation from rows to columns and its total cost.
#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    /// `mapping[row] = column`.
    pub mapping: Vec<usize>,
    pub total_cost: f64,
}

impl Assignment {
    pub fn is_bijection(&self) -> bool {
        let n = self.mapping.len();
        let mut seen = vec![false; n];
        for &c in &self.mapping {
            if c >= n || seen[c] {
                return false;
            }
            seen[c] = true;
        }
        true
    }
}

/// Minimum-cost perfect assignment (Kuhn-Munkres with potentials, O(n^3)).
///
/// When several permutations are optimal the lexicographically smallest
/// mapping is returned.
pub fn hungarian(costs: &CostMatrix) -> Result<Assignment> {
    costs.check_solvable()?;
    let n = costs.rows();
    if n == 0 {
        return Ok(Assignment {
            mapping: Vec::new(),
            total_cost: 0.0,
        });
    }
    let (row_pot, col_pot, raw) = solve_with_potentials(costs);

    let scale = costs.values.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let tol = 1e-9 * scale;
    let tight: Vec<Vec<bool>> = (0..n)
        .map(|r| {
            (0..n)
                .map(|c| costs.get(r, c) - row_pot[r] - col_pot[c] <= tol)
                .collect()
        })
        .collect();

    let raw_cost = costs.cost_of(&raw);
    let mapping = match lexicographic_perfect_matching(&tight) {
        Some(m) if costs.cost_of(&m) <= raw_cost => m,
        _ => raw,
    };
    Ok(Assignment {
        total_cost: costs.cost_of(&mapping),
        mapping,
    })
}

/// Returns row potentials, column potentials and an optimal mapping.
fn solve_with_potentials(costs: &CostMatrix) -> (Vec<f64>, Vec<f64>, Vec<usize>) {
    let n = costs.rows();
    // 1-based internally; index 0 is the virtual root column.
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; n + 1];
    let mut row_of_col = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];

    for i in 1..=n {
        row_of_col[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = row_of_col[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = costs.get(i0 - 1, j - 1) - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[row_of_col[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if row_of_col[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            row_of_col[j0] = row_of_col[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut mapping = vec![0usize; n];
    for j in 1..=n {
        mapping[row_of_col[j] - 1] = j - 1;
    }
    (u[1..].to_vec(), v[1..].to_vec(), mapping)
}

/// Lexicographically smallest perfect matching of a bipartite graph given
/// as an adjacency matrix, or `None` when no perfect matching exists.
fn lexicographic_perfect_matching(adj: &[Vec<bool>]) -> Option<Vec<usize>> {
    let n = adj.len();
    let mut fixed: Vec<usize> = Vec::with_capacity(n);
    let mut col_taken = vec![false; n];
    for r in 0..n {
        let chosen = (0..n).find(|&c| {
            if col_taken[c] || !adj[r][c] {
                return false;
            }
            col_taken[c] = true;
            let ok = has_perfect_matching(adj, r + 1, &col_taken);
            col_taken[c] = false;
            ok
        })?;
        col_taken[chosen] = true;
        fixed.push(chosen);
    }
    Some(fixed)
}

/// Whether rows `first_row..n` can be matched into the untaken columns.
fn has_perfect_matching(adj: &[Vec<bool>], first_row: usize, col_taken: &[bool]) -> bool {
    let n = adj.len();
    let mut owner: Vec<Option<usize>> = vec![None; n];

    fn augment(
        adj: &[Vec<bool>],
        r: usize,
        col_taken: &[bool],
        seen: &mut [bool],
        owner: &mut [Option<usize>],
    ) -> bool {
        for c in 0..adj.len() {
            if col_taken[c] || !adj[r][c] || seen[c] {
                continue;
            }
            seen[c] = true;
            let free = match owner[c] {
                None => true,
                Some(other) => augment(adj, other, col_taken, seen, owner),
            };
            if free {
                owner[c] = Some(r);
                return true;
            }
        }
        false
    }

    (first_row..n).all(|r| {
        let mut seen = vec![false; n];
        augment(adj, r, col_taken, &mut seen, &mut owner)
    })
}

/// Exhaustive minimum over all permutations (matrices up to
/// [`BRUTE_FORCE_MAX`] rows). Ties keep the lexicographically first mapping.
pub fn brute_force_assignment(costs: &CostMatrix) -> Result<Assignment> {
    costs.check_solvable()?;
    let n = costs.rows();
    if n > BRUTE_FORCE_MAX {
        return Err(invalid(format!(
            "exhaustive assignment refuses {n}x{n} (limit {BRUTE_FORCE_MAX})"
        )));
    }
    let mut best: Option<Assignment> = None;
    for perm in (0..n).permutations(n) {
        let cost = costs.cost_of(&perm);
        if best.as_ref().is_none_or(|b| cost < b.total_cost) {
            best = Some(Assignment {
                mapping: perm,
                total_cost: cost,
            });
        }
    }
    Ok(best.expect("at least the empty permutation"))
}

/// Exhaustive search over the injective maps of the first `real_rows` rows.
///
/// The remaining rows must be all-zero padding rows; they receive the
/// leftover columns in ascending order. Used to cross-check padded matching
/// problems that are too large for [`brute_force_assignment`].
pub fn brute_force_padded(costs: &CostMatrix, real_rows: usize) -> Result<Assignment> {
    costs.check_solvable()?;
    let n = costs.rows();
    if real_rows > BRUTE_FORCE_MAX.min(n) {
        return Err(invalid(format!(
            "exhaustive padded assignment refuses {real_rows} real rows"
        )));
    }
    if (real_rows..n).any(|r| costs.row(r).iter().any(|&v| v != 0.0)) {
        return Err(invalid("padding rows must be all zero"));
    }

    struct Search<'a> {
        costs: &'a CostMatrix,
        real_rows: usize,
        current: Vec<usize>,
        taken: Vec<bool>,
        best: Option<(f64, Vec<usize>)>,
    }

    impl Search<'_> {
        fn run(&mut self, partial: f64) {
            let row = self.current.len();
            if row == self.real_rows {
                if self.best.as_ref().is_none_or(|(b, _)| partial < *b) {
                    self.best = Some((partial, self.current.clone()));
                }
                return;
            }
            for c in 0..self.costs.cols() {
                if self.taken[c] {
                    continue;
                }
                self.taken[c] = true;
                self.current.push(c);
                self.run(partial + self.costs.get(row, c));
                self.current.pop();
                self.taken[c] = false;
            }
        }
    }

    let mut search = Search {
        costs,
        real_rows,
        current: Vec::with_capacity(real_rows),
        taken: vec![false; n],
        best: None,
    };
    search.run(0.0);
    let (_, mut mapping) = search.best.expect("at least one injection");
    let mut taken = vec![false; n];
    for &c in &mapping {
        taken[c] = true;
    }
    mapping.extend((0..n).filter(|&c| !taken[c]));
    Ok(Assignment {
        total_cost: costs.cost_of(&mapping),
        mapping,
    })
}

/// Per-frame matching cost between an optional ground-truth box and a
/// predicted box. No-object frames cost 0.
pub fn frame_match_cost(gt: Option<&BBox>, pred_box: &BBox, probs: &StateProbs, cfg: &EvalConfig) -> f64 {
    match gt {
        None => 0.0,
        Some(gt) => {
            let class = if cfg.class_cost_weight == 0.0 {
                0.0
            } else {
                cfg.class_cost_weight * -probs.p_referenced().max(cfg.log_epsilon).ln()
            };
            class + box_loss(pred_box, gt, &cfg.box_weights())
        }
    }
}

/// Mean per-frame cost over the union of the ground-truth frames and the
/// predicted extent. Frames covered by only one side cost
/// `existence_mismatch_penalty`.
pub fn pair_cost(gt: &Tubelet, pred: &PredictedTubelet, cfg: &EvalConfig) -> f64 {
    let extent = pred.derived_extent();
    let union: BTreeSet<FrameIndex> = gt.boxes().keys().copied().chain(extent.iter().copied()).collect();
    let mut sum = 0.0;
    for t in &union {
        sum += match (gt.box_at(*t), extent.contains(t)) {
            (Some(g), true) => {
                let f = pred.frame(*t).expect("extent frames exist");
                frame_match_cost(Some(g), &f.bbox, &f.state_probs, cfg)
            }
            _ => cfg.existence_mismatch_penalty,
        };
    }
    sum / union.len() as f64
}

/// Orders predictions by slot, filling missing slots with empty predictions.
/// Returns one prediction per column of the padded matrix.
pub fn slot_columns(
    instance: &EvalInstance,
    preds: &[PredictedTubelet],
    cfg: &EvalConfig,
) -> Result<Vec<PredictedTubelet>> {
    let n = cfg.num_slots.max(instance.tubelets().len());
    let mut columns: Vec<Option<PredictedTubelet>> = vec![None; n];
    for p in preds {
        if p.slot() >= cfg.num_slots {
            return Err(invalid(format!(
                "{}: slot {} exceeds num_slots {}",
                instance.instance_id,
                p.slot(),
                cfg.num_slots
            )));
        }
        if columns[p.slot()].replace(p.clone()).is_some() {
            return Err(invalid(format!(
                "{}: slot {} appears twice",
                instance.instance_id,
                p.slot()
            )));
        }
    }
    Ok(columns
        .into_iter()
        .enumerate()
        .map(|(k, p)| p.unwrap_or_else(|| PredictedTubelet::empty(k)))
        .collect())
}

/// Square matrix of tubelet-wise costs, padded with zero rows for no-object.
pub fn tubelet_cost_matrix(
    instance: &EvalInstance,
    preds: &[PredictedTubelet],
    cfg: &EvalConfig,
) -> Result<CostMatrix> {
    let columns = slot_columns(instance, preds, cfg)?;
    Ok(cost_matrix_for_columns(instance, &columns, cfg))
}

fn cost_matrix_for_columns(instance: &EvalInstance, columns: &[PredictedTubelet], cfg: &EvalConfig) -> CostMatrix {
    let n = columns.len();
    let mut m = CostMatrix::zeros(n, n);
    for (i, gt) in instance.tubelets().iter().enumerate() {
        for (k, pred) in columns.iter().enumerate() {
            m.set(i, k, pair_cost(gt, pred, cfg));
        }
    }
    m
}

/// A ground-truth tubelet together with the prediction it was matched to.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchedPair {
    pub gt: Tubelet,
    pub pred: PredictedTubelet,
}

/// Full matching result for one instance.
#[derive(Debug, Clone)]
pub struct TubeletMatching {
    pub costs: CostMatrix,
    pub assignment: Assignment,
    pub pairs: Vec<MatchedPair>,
}

pub fn match_instance(
    instance: &EvalInstance,
    preds: &[PredictedTubelet],
    cfg: &EvalConfig,
) -> Result<TubeletMatching> {
    let columns = slot_columns(instance, preds, cfg)?;
    let costs = cost_matrix_for_columns(instance, &columns, cfg);
    let assignment = hungarian(&costs)?;
    let pairs = instance
        .tubelets()
        .iter()
        .zip(&assignment.mapping)
        .map(|(gt, &k)| MatchedPair {
            gt: gt.clone(),
            pred: columns[k].clone(),
        })
        .collect();
    Ok(TubeletMatching {
        costs,
        assignment,
        pairs,
    })
}

/// One pair per ground-truth tubelet, in ground-truth order.
pub fn match_tubelets(
    instance: &EvalInstance,
    preds: &[PredictedTubelet],
    cfg: &EvalConfig,
) -> Result<Vec<MatchedPair>> {
    Ok(match_instance(instance, preds, cfg)?.pairs)
}
