//! Basis factorization: a sparse LU with Markowitz pivoting, followed by
//! product-form updates for the pivots made since the last refactor.
//!
//! Logical columns are `-e_i`. Positions in the basis heading index the
//! columns of `B`, so `ftran` returns values per position and `btran`
//! takes costs per position and returns row duals.

/// Entries below this magnitude are dropped from eta columns.
const DROP: f64 = 1e-14;
/// Relative threshold for accepting an LU pivot within its column.
const THRESHOLD: f64 = 0.1;
/// Number of candidate columns examined per Markowitz search.
const SEARCH_COLS: usize = 4;

#[derive(Debug, Clone)]
struct Eta {
    pivot: usize,
    inv_pivot: f64,
    others: Vec<(usize, f64)>,
}

/// One elimination step: pivot row and column, pivot value, the remaining
/// entries of the pivot row (by position) and the row multipliers.
#[derive(Debug, Clone)]
struct Step {
    row: usize,
    col: usize,
    inv_pivot: f64,
    u: Vec<(usize, f64)>,
    l: Vec<(usize, f64)>,
}

#[derive(Debug, Clone)]
pub(crate) struct Factor {
    m: usize,
    steps: Vec<Step>,
    etas: Vec<Eta>,
    lu_nnz: usize,
    nnz: usize,
}

/// A structural column that could not be pivoted in during reinversion.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct Dropped {
    pub var: usize,
}

impl Factor {
    /// Factor of the all-logical basis (`heading[i] = n + i`).
    pub fn identity(m: usize) -> Self {
        let steps = (0..m)
            .map(|i| Step { row: i, col: i, inv_pivot: -1.0, u: Vec::new(), l: Vec::new() })
            .collect();
        Self { m, steps, etas: Vec::new(), lu_nnz: m, nnz: 0 }
    }

    /// Number of product-form updates since the last refactor.
    pub fn len(&self) -> usize {
        self.etas.len()
    }

    pub fn nnz(&self) -> usize {
        self.lu_nnz + self.nnz
    }

    /// `v <- B^-1 v`; `v` comes in by row and leaves by position.
    pub fn ftran(&self, v: &mut [f64]) {
        debug_assert_eq!(v.len(), self.m);
        for st in &self.steps {
            let xr = v[st.row];
            if xr == 0.0 {
                continue;
            }
            for &(i, li) in &st.l {
                v[i] -= li * xr;
            }
        }
        let mut x = vec![0.0; self.m];
        for st in self.steps.iter().rev() {
            let mut s = v[st.row];
            for &(j, uj) in &st.u {
                s -= uj * x[j];
            }
            x[st.col] = s * st.inv_pivot;
        }
        v.copy_from_slice(&x);
        for eta in &self.etas {
            let xp = v[eta.pivot];
            if xp == 0.0 {
                continue;
            }
            let xp = xp * eta.inv_pivot;
            v[eta.pivot] = xp;
            for &(i, w) in &eta.others {
                v[i] -= w * xp;
            }
        }
    }

    /// `y' <- y' B^-1`; `y` comes in by position and leaves by row.
    pub fn btran(&self, y: &mut [f64]) {
        debug_assert_eq!(y.len(), self.m);
        for eta in self.etas.iter().rev() {
            let mut s = y[eta.pivot];
            for &(i, w) in &eta.others {
                s -= w * y[i];
            }
            y[eta.pivot] = s * eta.inv_pivot;
        }
        let mut z = vec![0.0; self.m];
        for st in &self.steps {
            let zk = y[st.col] * st.inv_pivot;
            z[st.row] = zk;
            if zk == 0.0 {
                continue;
            }
            for &(j, uj) in &st.u {
                y[j] -= uj * zk;
            }
        }
        for st in self.steps.iter().rev() {
            let mut s = z[st.row];
            for &(i, li) in &st.l {
                s -= li * z[i];
            }
            z[st.row] = s;
        }
        y.copy_from_slice(&z);
    }

    /// Replace basis position `pivot` by the column whose FTRAN image is `w`.
    pub fn push(&mut self, pivot: usize, w: &[f64]) {
        let others: Vec<(usize, f64)> = w
            .iter()
            .enumerate()
            .filter(|&(i, &x)| i != pivot && x.abs() > DROP)
            .map(|(i, &x)| (i, x))
            .collect();
        self.nnz += others.len() + 1;
        self.etas.push(Eta {
            pivot,
            inv_pivot: 1.0 / w[pivot],
            others,
        });
    }

    /// Factor the basis made of `basic` (structural `j < n` or logical
    /// `n + i`). Returns the factor, the heading (position -> variable) and
    /// the structurals rejected as numerically dependent; their positions
    /// are taken by logicals of the rows left without a pivot.
    pub fn reinvert<'a>(
        m: usize,
        n: usize,
        basic: &[usize],
        column: impl Fn(usize) -> &'a [(usize, f64)],
        pivot_tol: f64,
    ) -> (Self, Vec<usize>, Vec<Dropped>) {
        debug_assert_eq!(basic.len(), m);
        let mut heading = basic.to_vec();
        let mut cols: Vec<Vec<(usize, f64)>> = basic
            .iter()
            .map(|&v| if v < n { column(v).iter().copied().filter(|&(_, a)| a != 0.0).collect() } else { vec![(v - n, -1.0)] })
            .collect();
        let mut rows: Vec<Vec<usize>> = vec![Vec::new(); m];
        for (c, col) in cols.iter().enumerate() {
            for &(i, _) in col {
                rows[i].push(c);
            }
        }
        let mut row_count: Vec<usize> = rows.iter().map(Vec::len).collect();
        let mut col_done = vec![false; m];
        let mut row_done = vec![false; m];
        let mut col_buckets: Vec<Vec<usize>> = vec![Vec::new(); m + 2];
        let mut row_buckets: Vec<Vec<usize>> = vec![Vec::new(); m + 2];
        for (c, col) in cols.iter().enumerate() {
            col_buckets[col.len().min(m + 1)].push(c);
        }
        for (r, &k) in row_count.iter().enumerate() {
            row_buckets[k.min(m + 1)].push(r);
        }

        let mut steps: Vec<Step> = Vec::with_capacity(m);
        let mut dropped_pos = Vec::new();
        let mut mark = vec![usize::MAX; m];
        let mut remaining = m;
        let abs_tol = pivot_tol.max(1e-11);

        while remaining > 0 {
            let choice = choose_pivot(
                &cols,
                &rows,
                &row_count,
                &col_done,
                &row_done,
                &mut col_buckets,
                &mut row_buckets,
                abs_tol,
                &mut dropped_pos,
            );
            for &d in &dropped_pos {
                if !col_done[d] {
                    col_done[d] = true;
                    remaining -= 1;
                    for &(i, _) in &cols[d] {
                        row_count[i] -= 1;
                        row_buckets[row_count[i]].push(i);
                    }
                    cols[d].clear();
                }
            }
            let Some((r, c)) = choice else {
                if dropped_pos.is_empty() {
                    let active: Vec<usize> = (0..m).filter(|&c| !col_done[c]).collect();
                    if active.is_empty() {
                        break;
                    }
                    for c in active {
                        col_buckets[cols[c].len().min(m + 1)].push(c);
                    }
                }
                continue;
            };
            remaining -= 1;
            let pivot_val = cols[c].iter().find(|&&(i, _)| i == r).map(|&(_, a)| a).expect("pivot entry");
            let inv = 1.0 / pivot_val;
            let l: Vec<(usize, f64)> = cols[c].iter().filter(|&&(i, _)| i != r).map(|&(i, a)| (i, a * inv)).collect();
            col_done[c] = true;
            row_done[r] = true;
            for &(i, _) in &cols[c] {
                if i != r {
                    row_count[i] -= 1;
                }
            }
            cols[c].clear();
            let mut u = Vec::new();
            let pivot_cols: Vec<usize> = rows[r].iter().copied().filter(|&j| !col_done[j]).collect();
            for &j in &pivot_cols {
                let Some(k) = cols[j].iter().position(|&(i, _)| i == r) else { continue };
                let (_, arj) = cols[j].swap_remove(k);
                u.push((j, arj));
                if l.is_empty() {
                    col_buckets[cols[j].len().min(m + 1)].push(j);
                    continue;
                }
                for (k, &(i, _)) in cols[j].iter().enumerate() {
                    mark[i] = k;
                }
                for &(i, li) in &l {
                    let delta = -li * arj;
                    if mark[i] != usize::MAX && cols[j].get(mark[i]).is_some_and(|&(ii, _)| ii == i) {
                        cols[j][mark[i]].1 += delta;
                    } else {
                        cols[j].push((i, delta));
                        rows[i].push(j);
                        row_count[i] += 1;
                    }
                }
                for &(i, _) in cols[j].iter() {
                    mark[i] = usize::MAX;
                }
                col_buckets[cols[j].len().min(m + 1)].push(j);
            }
            for &(i, _) in &l {
                row_buckets[row_count[i].min(m + 1)].push(i);
            }
            rows[r].clear();
            steps.push(Step { row: r, col: c, inv_pivot: inv, u, l });
        }

        // Dependent structurals give their positions to unpivoted rows'
        // logicals, which have no entries in any already pivoted row.
        let mut pivoted = vec![false; m];
        for st in &steps {
            pivoted[st.col] = true;
        }
        for st in &mut steps {
            st.u.retain(|&(j, _)| pivoted[j]);
        }
        let mut dropped = Vec::new();
        let mut free_rows = (0..m).filter(|&i| !row_done[i]);
        for c in 0..m {
            if pivoted[c] {
                continue;
            }
            let r = free_rows.next().expect("row count matches column count");
            if heading[c] < n {
                dropped.push(Dropped { var: heading[c] });
            }
            heading[c] = n + r;
            steps.push(Step { row: r, col: c, inv_pivot: -1.0, u: Vec::new(), l: Vec::new() });
        }
        let lu_nnz = steps.iter().map(|s| 1 + s.u.len() + s.l.len()).sum();
        (Self { m, steps, etas: Vec::new(), lu_nnz, nnz: 0 }, heading, dropped)
    }
}

/// Markowitz search over short columns and singleton rows. Columns whose
/// largest active entry is below `abs_tol` are appended to `dropped`.
#[allow(clippy::too_many_arguments)]
fn choose_pivot(
    cols: &[Vec<(usize, f64)>],
    rows: &[Vec<usize>],
    row_count: &[usize],
    col_done: &[bool],
    row_done: &[bool],
    col_buckets: &mut [Vec<usize>],
    row_buckets: &mut [Vec<usize>],
    abs_tol: f64,
    dropped: &mut Vec<usize>,
) -> Option<(usize, usize)> {
    dropped.clear();
    let m = cols.len();
    let col_max = |c: usize| cols[c].iter().map(|&(_, a)| a.abs()).fold(0.0, f64::max);
    while let Some(c) = col_buckets[0].pop() {
        if !col_done[c] && cols[c].is_empty() {
            dropped.push(c);
        }
    }
    let mut best: Option<(usize, f64, usize, usize)> = None;
    let mut examined = 0;
    // Row singletons: the only active entry of the row is the pivot.
    while let Some(&r) = row_buckets[1].last() {
        if row_done[r] || row_count[r] != 1 {
            row_buckets[1].pop();
            continue;
        }
        let c = rows[r].iter().copied().find(|&j| !col_done[j] && cols[j].iter().any(|&(i, _)| i == r));
        let Some(c) = c else {
            row_buckets[1].pop();
            continue;
        };
        let a = cols[c].iter().find(|&&(i, _)| i == r).map_or(0.0, |&(_, a)| a.abs());
        if a >= abs_tol && a >= THRESHOLD * col_max(c) {
            return Some((r, c));
        }
        break;
    }
    for count in 1..=m + 1 {
        let bucket = &mut col_buckets[count];
        let mut k = bucket.len();
        while k > 0 {
            k -= 1;
            let c = bucket[k];
            if col_done[c] || cols[c].len().min(m + 1) != count {
                bucket.swap_remove(k);
                continue;
            }
            let cmax = col_max(c);
            if cmax < abs_tol {
                bucket.swap_remove(k);
                dropped.push(c);
                continue;
            }
            for &(i, a) in &cols[c] {
                if a.abs() < THRESHOLD * cmax {
                    continue;
                }
                let merit = (row_count[i] - 1) * (count - 1);
                let better = match best {
                    None => true,
                    Some((bm, ba, _, _)) => merit < bm || (merit == bm && a.abs() > ba),
                };
                if better {
                    best = Some((merit, a.abs(), i, c));
                }
            }
            examined += 1;
            if examined >= SEARCH_COLS || best.is_some_and(|b| b.0 == 0) {
                return best.map(|(_, _, r, c)| (r, c));
            }
        }
        if let Some((merit, _, r, c)) = best {
            if merit <= (count - 1) * (count - 1) {
                return Some((r, c));
            }
        }
    }
    best.map(|(_, _, r, c)| (r, c))
}
