//! Exact linear sum assignment.
//!
//! The solver is a shortest-augmenting-path method with row and column dual
//! potentials (the Jonker-Volgenant family). It works natively on rectangular
//! `K x M` problems with `K <= M` in `O(K^2 M)`. Under-matching of only `L`
//! of `K` compartments is reduced to a square problem of size `2K - L` by
//! padding with dummy rows and columns.
//!
//! When several matchings share the optimal cost, the one that is smallest in
//! lexicographic order of `(observed -> simulated)` images is returned. The
//! refinement uses the final duals: a matching is optimal iff it only uses
//! edges whose reduced cost is zero, so the lexicographic minimum is found by
//! fixing rows greedily and searching for alternating cycles in the tight
//! subgraph.

use std::collections::VecDeque;

use crate::distance::Matching;
use crate::error::{invalid, Error, Result};
use crate::scalar::Cost;

/// Dense row-major cost matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix<C> {
    rows: usize,
    cols: usize,
    data: Vec<C>,
}

impl<C: Cost> CostMatrix<C> {
    pub fn new(rows: usize, cols: usize, data: Vec<C>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(invalid(format!("{} entries supplied for a {rows}x{cols} matrix", data.len())));
        }
        Ok(Self { rows, cols, data })
    }

    pub(crate) fn from_raw(rows: usize, cols: usize, data: Vec<C>) -> Self {
        debug_assert_eq!(data.len(), rows * cols);
        Self { rows, cols, data }
    }

    pub fn from_rows(rows: Vec<Vec<C>>) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|row| row.len() != c) {
            return Err(invalid("ragged cost matrix"));
        }
        Self::new(r, c, rows.into_iter().flatten().collect())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> C {
        self.data[i * self.cols + j]
    }

    pub fn row(&self, i: usize) -> &[C] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    /// Sum of the entries selected by `matching`.
    pub fn matched_cost(&self, matching: &Matching) -> C {
        matching.pairs().iter().fold(C::zero(), |acc, &(i, j)| acc + self.get(i, j))
    }

    fn validate(&self) -> Result<()> {
        let n = self.rows.max(self.cols);
        if let Some(pos) = self.data.iter().position(|c| !c.admissible(n)) {
            return Err(invalid(format!(
                "cost entry ({}, {}) = {:?} is not a finite nonnegative value",
                pos / self.cols,
                pos % self.cols,
                self.data[pos]
            )));
        }
        Ok(())
    }
}

/// Optimal matching together with its cost in the units of the matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct AssignmentResult<C> {
    pub matching: Matching,
    pub total_cost: C,
}

struct Solution<C> {
    row_to_col: Vec<usize>,
    u: Vec<C>,
    v: Vec<C>,
}

/// Minimum-cost injection of rows into columns; requires `rows <= cols` and
/// admissible entries (checked by the callers).
fn augment<C: Cost>(cost: &CostMatrix<C>) -> Result<Solution<C>> {
    let n = cost.rows;
    let m = cost.cols;
    let inf = C::unbounded();
    let forbidden = C::forbidden();
    // 1-based columns; column 0 is the virtual source of each phase.
    let mut u = vec![C::zero(); n + 1];
    let mut v = vec![C::zero(); m + 1];
    let mut owner = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    let mut minv = vec![inf; m + 1];
    let mut used = vec![false; m + 1];

    for i in 1..=n {
        owner[0] = i;
        let mut j0 = 0usize;
        minv.iter_mut().for_each(|x| *x = inf);
        used.iter_mut().for_each(|x| *x = false);
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let row = cost.row(i0 - 1);
            let ui0 = u[i0];
            let mut delta = inf;
            let mut j1 = 0usize;
            for j in 1..=m {
                if used[j] {
                    continue;
                }
                let cur = row[j - 1] - ui0 - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            if j1 == 0 || !(delta < forbidden) {
                return Err(Error::Infeasible);
            }
            for j in 0..=m {
                if used[j] {
                    u[owner[j]] = u[owner[j]] + delta;
                    v[j] = v[j] - delta;
                } else {
                    minv[j] = minv[j] - delta;
                }
            }
            j0 = j1;
            if owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut row_to_col = vec![0usize; n];
    for j in 1..=m {
        if owner[j] > 0 {
            row_to_col[owner[j] - 1] = j - 1;
        }
    }
    Ok(Solution { row_to_col, u: u[1..].to_vec(), v: v[1..].to_vec() })
}

/// Rewrites `sol.row_to_col` into the lexicographically smallest optimal
/// assignment. Columns left unmatched are treated as held by interchangeable
/// zero-cost dummy rows, which is the square reformulation of the
/// rectangular problem.
fn lexicographic_refine<C: Cost>(cost: &CostMatrix<C>, sol: &mut Solution<C>) {
    let n = cost.rows;
    let m = cost.cols;
    let scale = cost
        .data
        .iter()
        .copied()
        .filter(|c| *c < C::forbidden())
        .fold(C::zero(), |a, c| if c > a { c } else { a });
    let tol = C::tie_tolerance(scale, m);
    let tight = |i: usize, j: usize, u: &[C], v: &[C]| {
        let c = cost.get(i, j);
        c < C::forbidden() && c - u[i] - v[j] <= tol
    };
    let dummy_tight = |j: usize, v: &[C]| C::zero() - v[j] <= tol;

    // holder[j] = Some(row) or None when the column is held by a dummy.
    let mut holder: Vec<Option<usize>> = vec![None; m];
    for (i, &j) in sol.row_to_col.iter().enumerate() {
        holder[j] = Some(i);
    }
    let mut fixed = vec![false; m];
    let dummy = n;

    for i in 0..n {
        let c0 = sol.row_to_col[i];
        for j in 0..c0 {
            if fixed[j] || !tight(i, j, &sol.u, &sol.v) {
                continue;
            }
            // Search for an alternating path from the holder of j back to c0.
            // came[node] = (previous taker, column it took from node).
            let mut came: Vec<Option<(usize, usize)>> = vec![None; n + 1];
            let start = holder[j].unwrap_or(dummy);
            came[start] = Some((i, j));
            let mut queue = VecDeque::from([start]);
            let mut finish = None;
            'bfs: while let Some(x) = queue.pop_front() {
                for c in 0..m {
                    if c == j || fixed[c] {
                        continue;
                    }
                    let ok = if x == dummy { dummy_tight(c, &sol.v) } else { c != sol.row_to_col[x] && tight(x, c, &sol.u, &sol.v) };
                    if !ok {
                        continue;
                    }
                    if c == c0 {
                        finish = Some(x);
                        break 'bfs;
                    }
                    let next = holder[c].unwrap_or(dummy);
                    if next != i && came[next].is_none() {
                        came[next] = Some((x, c));
                        queue.push_back(next);
                    }
                }
            }
            if let Some(last) = finish {
                let mut taker = last;
                let mut col = c0;
                loop {
                    if taker == dummy {
                        holder[col] = None;
                    } else {
                        holder[col] = Some(taker);
                        sol.row_to_col[taker] = col;
                    }
                    let (prev, prev_col) = came[taker].expect("path node has a predecessor");
                    if prev == i {
                        holder[prev_col] = Some(i);
                        sol.row_to_col[i] = prev_col;
                        break;
                    }
                    taker = prev;
                    col = prev_col;
                }
                break;
            }
        }
        fixed[sol.row_to_col[i]] = true;
    }
}

fn solve_validated<C: Cost>(cost: &CostMatrix<C>) -> Result<Solution<C>> {
    let mut sol = augment(cost)?;
    lexicographic_refine(cost, &mut sol);
    Ok(sol)
}

fn result_from<C: Cost>(cost: &CostMatrix<C>, row_to_col: &[usize]) -> AssignmentResult<C> {
    let matching = Matching::from_images(row_to_col).expect("solver returns an injection");
    let total_cost = cost.matched_cost(&matching);
    AssignmentResult { matching, total_cost }
}

/// Minimum-cost perfect matching of a square matrix.
pub fn solve_full<C: Cost>(cost: &CostMatrix<C>) -> Result<AssignmentResult<C>> {
    if cost.rows != cost.cols {
        return Err(invalid(format!("full assignment needs a square matrix, got {}x{}", cost.rows, cost.cols)));
    }
    solve_rectangular(cost)
}

/// Minimum-cost injection of the K rows into the M >= K columns.
pub fn solve_rectangular<C: Cost>(cost: &CostMatrix<C>) -> Result<AssignmentResult<C>> {
    if cost.rows > cost.cols {
        return Err(invalid(format!("rectangular assignment needs rows <= cols, got {}x{}", cost.rows, cost.cols)));
    }
    cost.validate()?;
    if cost.rows == 0 {
        return Ok(AssignmentResult { matching: Matching::default(), total_cost: C::zero() });
    }
    let sol = solve_validated(cost)?;
    Ok(result_from(cost, &sol.row_to_col))
}

/// Minimum-cost matching of exactly `l` rows to `l` columns of a square
/// matrix, searching over all row and column subsets.
///
/// The matrix is extended with `K - L` dummy rows and columns: real-dummy
/// entries cost zero, dummy-dummy entries are forbidden, so the dummies
/// absorb exactly `K - L` real rows and `K - L` real columns.
pub fn solve_under_match<C: Cost>(cost: &CostMatrix<C>, l: usize) -> Result<AssignmentResult<C>> {
    let k = cost.rows;
    if cost.cols != k {
        return Err(invalid(format!("under-matching needs a square matrix, got {}x{}", cost.rows, cost.cols)));
    }
    if l == 0 || l > k {
        return Err(invalid(format!("matched count L = {l} must lie in 1..={k}")));
    }
    cost.validate()?;
    if l == k {
        return solve_full(cost);
    }
    let size = 2 * k - l;
    let mut data = Vec::with_capacity(size * size);
    for i in 0..size {
        for j in 0..size {
            data.push(match (i < k, j < k) {
                (true, true) => cost.get(i, j),
                (false, false) => C::forbidden(),
                _ => C::zero(),
            });
        }
    }
    let extended = CostMatrix::from_raw(size, size, data);
    let sol = solve_validated(&extended)?;
    let pairs: Vec<(usize, usize)> =
        (0..k).map(|i| (i, sol.row_to_col[i])).filter(|&(_, j)| j < k).collect();
    debug_assert_eq!(pairs.len(), l);
    let matching = Matching::new(pairs).expect("solver returns an injection");
    let total_cost = cost.matched_cost(&matching);
    Ok(AssignmentResult { matching, total_cost })
}
