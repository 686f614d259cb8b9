//! Minibatch coupling: cost matrices, exact assignment and the block
//! structure that appears when conditions are discrete.
//!
//! For batches `B1 = {(x1_i, c1_i)}` and `B2 = {(x2_i, c2_i)}` the all-to-all
//! cost of pairing row `i` with column `j` is
//!
//! ```text
//! |x1_i - x2_j|^2 + beta * (|c1_i - c1_j|^2 + |c2_i - c2_j|^2)
//! ```
//!
//! where `c1_j` is the condition of the `j`-th sample of `B1` and `c2_i` that
//! of the `i`-th sample of `B2`. A permutation minimizing the sum over rows
//! is found with a shortest-augmenting-path solver.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One observation and its condition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledSample {
    pub x: Vec<f64>,
    pub c: Vec<f64>,
}

impl LabeledSample {
    pub fn new(x: Vec<f64>, c: Vec<f64>) -> Self {
        Self { x, c }
    }
}

pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum()
}

/// Two independently drawn batches of equal size.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchPair {
    b1: Vec<LabeledSample>,
    b2: Vec<LabeledSample>,
    d_x: usize,
    d_c: usize,
}

impl BatchPair {
    pub fn new(b1: Vec<LabeledSample>, b2: Vec<LabeledSample>) -> Result<Self> {
        if b1.is_empty() || b1.len() != b2.len() {
            return Err(Error::contract(format!(
                "batches must be non-empty and of equal size, got {} and {}",
                b1.len(),
                b2.len()
            )));
        }
        let d_x = b1[0].x.len();
        let d_c = b1[0].c.len();
        for (k, s) in b1.iter().chain(&b2).enumerate() {
            if s.x.len() != d_x || s.c.len() != d_c {
                return Err(Error::contract(format!(
                    "sample {k} has dimensions ({}, {}), expected ({d_x}, {d_c})",
                    s.x.len(),
                    s.c.len()
                )));
            }
            if s.x.iter().chain(&s.c).any(|v| !v.is_finite()) {
                return Err(Error::contract(format!(
                    "sample {k} has non-finite entries"
                )));
            }
        }
        Ok(Self { b1, b2, d_x, d_c })
    }

    pub fn b1(&self) -> &[LabeledSample] {
        &self.b1
    }

    pub fn b2(&self) -> &[LabeledSample] {
        &self.b2
    }

    pub fn len(&self) -> usize {
        self.b1.len()
    }

    pub fn is_empty(&self) -> bool {
        self.b1.is_empty()
    }

    pub fn d_x(&self) -> usize {
        self.d_x
    }

    pub fn d_c(&self) -> usize {
        self.d_c
    }

    /// The pair with the roles of the two batches exchanged.
    pub fn swapped(&self) -> Self {
        Self {
            b1: self.b2.clone(),
            b2: self.b1.clone(),
            d_x: self.d_x,
            d_c: self.d_c,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum CostMode {
    /// Squared distance between samples only.
    Plain,
    /// Sample distance plus `beta |c1_i - c2_j|^2`.
    Cot,
    /// Sample distance plus the all-to-all condition penalty.
    #[default]
    A2a,
}

impl std::fmt::Display for CostMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            CostMode::Plain => "plain",
            CostMode::Cot => "cot",
            CostMode::A2a => "a2a",
        })
    }
}

/// Flattened batches, enough to recompute any cost entry.
#[derive(Debug, Clone, PartialEq)]
struct BatchData {
    d_x: usize,
    d_c: usize,
    x1: Vec<f64>,
    x2: Vec<f64>,
    c1: Vec<f64>,
    c2: Vec<f64>,
}

impl BatchData {
    fn new(pair: &BatchPair) -> Self {
        let flat = |b: &[LabeledSample], f: fn(&LabeledSample) -> &[f64]| -> Vec<f64> {
            b.iter().flat_map(|s| f(s).iter().copied()).collect()
        };
        Self {
            d_x: pair.d_x(),
            d_c: pair.d_c(),
            x1: flat(pair.b1(), |s| &s.x),
            x2: flat(pair.b2(), |s| &s.x),
            c1: flat(pair.b1(), |s| &s.c),
            c2: flat(pair.b2(), |s| &s.c),
        }
    }

    fn transport(&self, i: usize, j: usize) -> f64 {
        let d = self.d_x;
        sq_dist(&self.x1[i * d..(i + 1) * d], &self.x2[j * d..(j + 1) * d])
    }

    fn condition(&self, mode: CostMode, i: usize, j: usize) -> f64 {
        let d = self.d_c;
        let (ri, rj) = (i * d..(i + 1) * d, j * d..(j + 1) * d);
        match mode {
            CostMode::Plain => 0.0,
            CostMode::Cot => sq_dist(&self.c1[ri], &self.c2[rj]),
            CostMode::A2a => {
                sq_dist(&self.c1[ri.clone()], &self.c1[rj.clone()])
                    + sq_dist(&self.c2[ri], &self.c2[rj])
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Parts {
    Stored {
        transport: Vec<f64>,
        condition: Vec<f64>,
    },
    Batches(BatchData),
}

/// Dense `N x N` coupling cost, stored row-major. The transport and
/// condition parts are available per entry.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    n: usize,
    mode: CostMode,
    beta: f64,
    entries: Vec<f64>,
    parts: Parts,
}

impl CostMatrix {
    /// Wraps an arbitrary square matrix as a plain cost.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if n == 0 || rows.iter().any(|r| r.len() != n) {
            return Err(Error::contract("cost matrix must be square and non-empty"));
        }
        let entries: Vec<f64> = rows.iter().flatten().copied().collect();
        Self::from_flat(n, entries)
    }

    pub fn from_flat(n: usize, entries: Vec<f64>) -> Result<Self> {
        if n == 0 || entries.len() != n * n {
            return Err(Error::contract("cost matrix must be square and non-empty"));
        }
        Ok(Self {
            n,
            mode: CostMode::Plain,
            beta: 0.0,
            parts: Parts::Stored {
                transport: entries.clone(),
                condition: vec![0.0; n * n],
            },
            entries,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn mode(&self) -> CostMode {
        self.mode
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.entries[i * self.n..(i + 1) * self.n]
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    /// `(transport, condition)` parts of entry `(i, j)`; the entry equals
    /// `transport + beta * condition`.
    pub fn parts(&self, i: usize, j: usize) -> (f64, f64) {
        match &self.parts {
            Parts::Stored {
                transport,
                condition,
            } => (transport[i * self.n + j], condition[i * self.n + j]),
            Parts::Batches(b) => (b.transport(i, j), b.condition(self.mode, i, j)),
        }
    }

    fn collect_part(&self, pick: fn((f64, f64)) -> f64) -> Vec<f64> {
        let n = self.n;
        (0..n * n).map(|k| pick(self.parts(k / n, k % n))).collect()
    }

    /// Row-major transport part.
    pub fn transport_part(&self) -> Vec<f64> {
        self.collect_part(|p| p.0)
    }

    /// Row-major condition part (before weighting by beta).
    pub fn condition_part(&self) -> Vec<f64> {
        self.collect_part(|p| p.1)
    }

    fn remap(&self, n: usize, index: impl Fn(usize, usize) -> (usize, usize)) -> Self {
        let mut entries = Vec::with_capacity(n * n);
        let mut transport = Vec::with_capacity(n * n);
        let mut condition = Vec::with_capacity(n * n);
        for a in 0..n {
            for b in 0..n {
                let (i, j) = index(a, b);
                entries.push(self.get(i, j));
                let (t, c) = self.parts(i, j);
                transport.push(t);
                condition.push(c);
            }
        }
        Self {
            n,
            mode: self.mode,
            beta: self.beta,
            entries,
            parts: Parts::Stored {
                transport,
                condition,
            },
        }
    }

    /// Transposed matrix (rows and columns exchanged).
    pub fn transposed(&self) -> Self {
        self.remap(self.n, |a, b| (b, a))
    }

    /// The square sub-matrix on the given rows and columns.
    pub fn restrict(&self, rows: &[usize], cols: &[usize]) -> Result<Self> {
        if rows.len() != cols.len() || rows.is_empty() {
            return Err(Error::contract("restriction must be square and non-empty"));
        }
        if rows.iter().chain(cols).any(|&k| k >= self.n) {
            return Err(Error::contract("restriction index out of range"));
        }
        Ok(self.remap(rows.len(), |a, b| (rows[a], cols[b])))
    }

    /// `(total, transport, condition)` of a permutation, each summed over rows
    /// in increasing order.
    pub fn permutation_cost(&self, perm: &[usize]) -> (f64, f64, f64) {
        let mut total = 0.0;
        let mut transport = 0.0;
        let mut condition = 0.0;
        for (i, &j) in perm.iter().enumerate() {
            total += self.get(i, j);
            let (t, c) = self.parts(i, j);
            transport += t;
            condition += c;
        }
        (total, transport, condition)
    }

    pub fn assignment_for(&self, perm: Vec<usize>) -> Result<Assignment> {
        if !is_permutation(&perm, self.n) {
            return Err(Error::contract("not a permutation of the matrix indices"));
        }
        let (total_cost, transport_cost, condition_cost) = self.permutation_cost(&perm);
        Ok(Assignment {
            permutation: perm,
            total_cost,
            transport_cost,
            condition_cost,
            beta: self.beta,
        })
    }
}

/// Builds the coupling cost between the two batches of `pair`.
pub fn cost_matrix(pair: &BatchPair, beta: f64, mode: CostMode) -> Result<CostMatrix> {
    if !(beta >= 0.0 && beta.is_finite()) {
        return Err(Error::contract(format!(
            "beta must be finite and >= 0, got {beta}"
        )));
    }
    let n = pair.len();
    let data = BatchData::new(pair);
    let mut entries = vec![0.0; n * n];
    entries.par_chunks_mut(n).enumerate().for_each(|(i, row)| {
        for (j, e) in row.iter_mut().enumerate() {
            *e = data.transport(i, j) + beta * data.condition(mode, i, j);
        }
    });
    if entries.iter().any(|v| !v.is_finite()) {
        return Err(Error::contract("cost matrix has non-finite entries"));
    }
    Ok(CostMatrix {
        n,
        mode,
        beta,
        entries,
        parts: Parts::Batches(data),
    })
}

/// A permutation `pi` pairing row `i` of `B1` with row `pi[i]` of `B2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assignment {
    pub permutation: Vec<usize>,
    pub total_cost: f64,
    pub transport_cost: f64,
    pub condition_cost: f64,
    pub beta: f64,
}

impl Assignment {
    pub fn len(&self) -> usize {
        self.permutation.len()
    }

    pub fn is_empty(&self) -> bool {
        self.permutation.is_empty()
    }

    /// True when every index stays inside its block.
    pub fn preserves_blocks(&self, blocks: &BlockPartition) -> bool {
        let mut block_of = vec![usize::MAX; self.len()];
        for (b, block) in blocks.blocks.iter().enumerate() {
            for &i in &block.indices {
                block_of[i] = b;
            }
        }
        self.permutation
            .iter()
            .enumerate()
            .all(|(i, &j)| block_of[i] == block_of[j])
    }
}

pub(crate) fn is_permutation(perm: &[usize], n: usize) -> bool {
    if perm.len() != n {
        return false;
    }
    let mut seen = vec![false; n];
    for &j in perm {
        if j >= n || seen[j] {
            return false;
        }
        seen[j] = true;
    }
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum SolveMethod {
    #[default]
    Exact,
    /// Enumerates all permutations; only for `N <= 10`.
    Brute,
}

pub const BRUTE_FORCE_MAX: usize = 10;

/// Minimizes the total cost over all permutations. Among cost-equal optima
/// the lexicographically smallest permutation is returned.
pub fn solve_assignment(cost: &CostMatrix, method: SolveMethod) -> Result<Assignment> {
    if cost.entries.iter().any(|v| !v.is_finite()) {
        return Err(Error::contract("cost matrix has non-finite entries"));
    }
    let perm = match method {
        SolveMethod::Exact => {
            let (mut perm, u, v) = solve_exact(cost.n, &cost.entries);
            lex_smallest_optimum(cost.n, &cost.entries, &mut perm, &u, &v);
            perm
        }
        SolveMethod::Brute => {
            if cost.n > BRUTE_FORCE_MAX {
                return Err(Error::Size(format!(
                    "brute-force assignment supports N <= {BRUTE_FORCE_MAX}, got {}",
                    cost.n
                )));
            }
            brute_force(cost.n, &cost.entries)
        }
    };
    cost.assignment_for(perm)
}

const NONE: usize = usize::MAX;

/// Above this size the solver first tries a sparse candidate graph.
const SPARSE_MIN_N: usize = 128;
/// Candidate columns per row (and rows per column) in the sparse graph.
const CANDIDATES: usize = 16;
const SPARSE_ROUNDS: usize = 32;

/// Optimal assignment with dual potentials `(perm, u, v)` such that
/// `c[i][j] - u[i] - v[j] >= 0` everywhere (up to rounding) with equality on
/// the assignment.
fn solve_exact(n: usize, c: &[f64]) -> (Vec<usize>, Vec<f64>, Vec<f64>) {
    if n >= SPARSE_MIN_N {
        if let Some(solution) = solve_sparse_certified(n, c) {
            return solution;
        }
    }
    shortest_augmenting_path(n, c)
}

/// Column reduction with reduction transfer: each column's cheapest row takes
/// it if still free. Returns the rows left free.
fn column_reduction(
    n: usize,
    c: &[f64],
    col4row: &mut [usize],
    row4col: &mut [usize],
    v: &mut [f64],
) -> Vec<usize> {
    v.fill(f64::INFINITY);
    for i in 0..n {
        for (j, &cij) in c[i * n..(i + 1) * n].iter().enumerate() {
            if cij < v[j] {
                v[j] = cij;
                row4col[j] = i;
            }
        }
    }
    let mut unique = vec![true; n];
    for j in (0..n).rev() {
        let i = row4col[j];
        if col4row[i] == NONE {
            col4row[i] = j;
        } else {
            unique[i] = false;
            row4col[j] = NONE;
        }
    }
    let mut free = Vec::new();
    for i in 0..n {
        if col4row[i] == NONE {
            free.push(i);
        } else if unique[i] && n > 1 {
            let j = col4row[i];
            let row = &c[i * n..(i + 1) * n];
            let min = (0..n)
                .filter(|&k| k != j)
                .map(|k| row[k] - v[k])
                .fold(f64::INFINITY, f64::min);
            v[j] -= min;
        }
    }
    free
}

/// Dense Jonker-Volgenant style solver: column reduction, then one shortest
/// augmenting path (Dijkstra on reduced costs) per free row.
fn shortest_augmenting_path(n: usize, c: &[f64]) -> (Vec<usize>, Vec<f64>, Vec<f64>) {
    let mut v = vec![0.0; n];
    let mut col4row = vec![NONE; n];
    let mut row4col = vec![NONE; n];
    let free = column_reduction(n, c, &mut col4row, &mut row4col, &mut v);
    let mut u: Vec<f64> = (0..n)
        .map(|i| {
            let row = &c[i * n..(i + 1) * n];
            match col4row[i] {
                NONE => (0..n).map(|k| row[k] - v[k]).fold(f64::INFINITY, f64::min),
                j => row[j] - v[j],
            }
        })
        .collect();

    let mut path = vec![NONE; n];
    let mut shortest = vec![f64::INFINITY; n];
    let mut remaining = vec![0usize; n];
    let mut visited_rows: Vec<usize> = Vec::with_capacity(n);
    let mut visited_cols: Vec<usize> = Vec::with_capacity(n);

    for cur_row in free {
        shortest.fill(f64::INFINITY);
        visited_rows.clear();
        visited_cols.clear();
        for (k, r) in remaining.iter_mut().enumerate() {
            *r = n - 1 - k;
        }
        let mut num_remaining = n;
        let mut min_val = 0.0;
        let mut i = cur_row;
        let sink = loop {
            visited_rows.push(i);
            let mut lowest = f64::INFINITY;
            let mut index = NONE;
            let row = &c[i * n..(i + 1) * n];
            let ui = u[i];
            for (it, &j) in remaining[..num_remaining].iter().enumerate() {
                let r = min_val + row[j] - ui - v[j];
                if r < shortest[j] {
                    path[j] = i;
                    shortest[j] = r;
                }
                if shortest[j] < lowest || (shortest[j] == lowest && row4col[j] == NONE) {
                    lowest = shortest[j];
                    index = it;
                }
            }
            min_val = lowest;
            let j = remaining[index];
            visited_cols.push(j);
            num_remaining -= 1;
            remaining[index] = remaining[num_remaining];
            if row4col[j] == NONE {
                break j;
            }
            i = row4col[j];
        };
        update_duals(
            cur_row,
            min_val,
            &visited_rows,
            &visited_cols,
            &shortest,
            &col4row,
            &mut u,
            &mut v,
        );
        augment(cur_row, sink, &path, &mut col4row, &mut row4col);
    }
    (col4row, u, v)
}

#[allow(clippy::too_many_arguments)]
fn update_duals(
    cur_row: usize,
    min_val: f64,
    visited_rows: &[usize],
    visited_cols: &[usize],
    shortest: &[f64],
    col4row: &[usize],
    u: &mut [f64],
    v: &mut [f64],
) {
    u[cur_row] += min_val;
    for &r in visited_rows {
        if r != cur_row {
            u[r] += min_val - shortest[col4row[r]];
        }
    }
    for &j in visited_cols {
        v[j] -= min_val - shortest[j];
    }
}

fn augment(
    cur_row: usize,
    sink: usize,
    path: &[usize],
    col4row: &mut [usize],
    row4col: &mut [usize],
) {
    let mut j = sink;
    loop {
        let r = path[j];
        row4col[j] = r;
        std::mem::swap(&mut col4row[r], &mut j);
        if r == cur_row {
            break;
        }
    }
}

#[derive(PartialEq)]
struct HeapItem(f64, usize);

impl Eq for HeapItem {}

impl PartialOrd for HeapItem {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for HeapItem {
    // reversed so that `BinaryHeap` pops the smallest distance first
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        other.0.total_cmp(&self.0).then(other.1.cmp(&self.1))
    }
}

/// Shortest augmenting paths from every row in `free`, restricted to the
/// edges in `adj`. Returns `false` when some row cannot be matched.
#[allow(clippy::too_many_arguments)]
fn sparse_augment(
    n: usize,
    c: &[f64],
    adj: &[Vec<usize>],
    free: &[usize],
    col4row: &mut [usize],
    row4col: &mut [usize],
    u: &mut [f64],
    v: &mut [f64],
) -> bool {
    let mut path = vec![NONE; n];
    let mut shortest = vec![f64::INFINITY; n];
    let mut scanned = vec![false; n];
    let mut touched: Vec<usize> = Vec::new();
    let mut visited_rows: Vec<usize> = Vec::new();
    let mut visited_cols: Vec<usize> = Vec::new();
    let mut heap = std::collections::BinaryHeap::new();

    for &cur_row in free {
        for &j in &touched {
            shortest[j] = f64::INFINITY;
            scanned[j] = false;
        }
        touched.clear();
        visited_rows.clear();
        visited_cols.clear();
        heap.clear();
        let mut min_val = 0.0;
        let mut i = cur_row;
        let sink = loop {
            visited_rows.push(i);
            for &j in &adj[i] {
                if scanned[j] {
                    continue;
                }
                let r = min_val + c[i * n + j] - u[i] - v[j];
                if r < shortest[j] {
                    if shortest[j] == f64::INFINITY {
                        touched.push(j);
                    }
                    shortest[j] = r;
                    path[j] = i;
                    heap.push(HeapItem(r, j));
                }
            }
            let j = loop {
                match heap.pop() {
                    None => return false,
                    Some(HeapItem(d, j)) if !scanned[j] && d == shortest[j] => break j,
                    Some(_) => {}
                }
            };
            min_val = shortest[j];
            scanned[j] = true;
            visited_cols.push(j);
            if row4col[j] == NONE {
                break j;
            }
            i = row4col[j];
        };
        update_duals(
            cur_row,
            min_val,
            &visited_rows,
            &visited_cols,
            &shortest,
            col4row,
            u,
            v,
        );
        augment(cur_row, sink, &path, col4row, row4col);
    }
    true
}

/// Solves on a candidate graph of cheap edges and certifies the result for
/// the full matrix through the dual potentials. A row whose potential breaks
/// the certificate is lowered back to feasibility, freed, given its violating
/// edges and augmented again.
fn solve_sparse_certified(n: usize, c: &[f64]) -> Option<(Vec<usize>, Vec<f64>, Vec<f64>)> {
    let k = CANDIDATES.min(n);
    let mut adj: Vec<Vec<usize>> = (0..n)
        .map(|i| {
            let row = &c[i * n..(i + 1) * n];
            let mut idx: Vec<usize> = (0..n).collect();
            idx.select_nth_unstable_by(k - 1, |&a, &b| row[a].total_cmp(&row[b]));
            idx.truncate(k);
            idx
        })
        .collect();
    let mut col: Vec<f64> = vec![0.0; n];
    let mut idx: Vec<usize> = Vec::with_capacity(n);
    for j in 0..n {
        for (i, slot) in col.iter_mut().enumerate() {
            *slot = c[i * n + j];
        }
        idx.clear();
        idx.extend(0..n);
        idx.select_nth_unstable_by(k - 1, |&a, &b| col[a].total_cmp(&col[b]));
        for &i in &idx[..k] {
            adj[i].push(j);
        }
    }

    let mut v = vec![0.0; n];
    let mut col4row = vec![NONE; n];
    let mut row4col = vec![NONE; n];
    let mut free = column_reduction(n, c, &mut col4row, &mut row4col, &mut v);
    let row_min = |i: usize, v: &[f64]| {
        c[i * n..(i + 1) * n]
            .iter()
            .zip(v)
            .map(|(cij, vj)| cij - vj)
            .fold(f64::INFINITY, f64::min)
    };
    let mut u: Vec<f64> = (0..n)
        .map(|i| match col4row[i] {
            NONE => row_min(i, &v),
            j => c[i * n + j] - v[j],
        })
        .collect();
    for (i, a) in adj.iter_mut().enumerate() {
        if col4row[i] != NONE {
            a.push(col4row[i]);
        }
        a.sort_unstable();
        a.dedup();
    }

    let scale = c.iter().fold(1.0f64, |m, x| m.max(x.abs()));
    let tol = 1e-12 * scale;
    for _ in 0..SPARSE_ROUNDS {
        if !sparse_augment(
            n,
            c,
            &adj,
            &free,
            &mut col4row,
            &mut row4col,
            &mut u,
            &mut v,
        ) {
            return None;
        }
        free.clear();
        for i in 0..n {
            let m = row_min(i, &v);
            if u[i] - m <= tol {
                continue;
            }
            let row = &c[i * n..(i + 1) * n];
            adj[i].extend((0..n).filter(|&j| row[j] - u[i] - v[j] < -tol));
            adj[i].sort_unstable();
            adj[i].dedup();
            u[i] = m;
            row4col[col4row[i]] = NONE;
            col4row[i] = NONE;
            free.push(i);
        }
        if free.is_empty() {
            return Some((col4row, u, v));
        }
    }
    None
}

/// Moves an optimal assignment to the lexicographically smallest optimum by
/// rotating along alternating cycles of the tight (zero reduced cost) graph.
fn lex_smallest_optimum(n: usize, c: &[f64], perm: &mut [usize], u: &[f64], v: &[f64]) {
    let scale = c.iter().fold(1.0f64, |m, x| m.max(x.abs()));
    let tol = 1e-10 * scale;
    let tight = |i: usize, j: usize| c[i * n + j] - u[i] - v[j] <= tol;

    let mut owner = vec![0usize; n];
    for (i, &j) in perm.iter().enumerate() {
        owner[j] = i;
    }
    // columns taken by already-settled rows
    let mut settled_col = vec![false; n];
    let mut prev_col = vec![usize::MAX; n];
    let mut seen_col = vec![false; n];
    let mut queue = Vec::with_capacity(n);

    for i in 0..n {
        let j0 = perm[i];
        for j in 0..j0 {
            if settled_col[j] || !tight(i, j) {
                continue;
            }
            // breadth-first search for an alternating path from owner(j)
            // back to j0 through unsettled rows
            seen_col.fill(false);
            seen_col[j] = true;
            queue.clear();
            queue.push(j);
            let mut head = 0;
            let mut found = false;
            'bfs: while head < queue.len() {
                let col = queue[head];
                head += 1;
                let r = owner[col];
                for k in 0..n {
                    if seen_col[k] || settled_col[k] || !tight(r, k) {
                        continue;
                    }
                    seen_col[k] = true;
                    prev_col[k] = col;
                    if k == j0 {
                        found = true;
                        break 'bfs;
                    }
                    queue.push(k);
                }
            }
            if !found {
                continue;
            }
            // cycle: i -> j, owner(prev) -> k ... ending at j0
            let mut moves = vec![(i, j)];
            let mut k = j0;
            while k != j {
                let from = prev_col[k];
                moves.push((owner[from], k));
                k = from;
            }
            let old: f64 = moves.iter().map(|&(r, _)| c[r * n + perm[r]]).sum();
            let new: f64 = moves.iter().map(|&(r, col)| c[r * n + col]).sum();
            if new > old {
                continue;
            }
            for &(r, col) in &moves {
                perm[r] = col;
                owner[col] = r;
            }
            break;
        }
        settled_col[perm[i]] = true;
    }
}

fn brute_force(n: usize, c: &[f64]) -> Vec<usize> {
    fn recurse(
        n: usize,
        c: &[f64],
        row: usize,
        partial: f64,
        used: &mut [bool],
        current: &mut Vec<usize>,
        best: &mut (f64, Vec<usize>),
    ) {
        if row == n {
            if partial < best.0 {
                best.0 = partial;
                best.1.clone_from(current);
            }
            return;
        }
        for j in 0..n {
            if used[j] {
                continue;
            }
            used[j] = true;
            current.push(j);
            recurse(n, c, row + 1, partial + c[row * n + j], used, current, best);
            current.pop();
            used[j] = false;
        }
    }
    let mut best = (f64::INFINITY, (0..n).collect());
    let mut used = vec![false; n];
    let mut current = Vec::with_capacity(n);
    recurse(n, c, 0, 0.0, &mut used, &mut current, &mut best);
    best.1
}

/// How the condition penalty weight is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BetaPolicy {
    Fixed {
        value: f64,
    },
    /// `n^(1 / (2 d_c))`.
    Heuristic {
        d_c: usize,
    },
    /// `n^(1 / d_c)`: the necessary-condition rate on the doubled condition
    /// space. Reference only, never used as a training weight.
    RateCheck {
        d_c: usize,
    },
}

impl BetaPolicy {
    pub fn validate(&self) -> Result<()> {
        match *self {
            BetaPolicy::Fixed { value } if !(value >= 0.0 && value.is_finite()) => Err(
                Error::Config(format!("fixed beta must be finite and >= 0, got {value}")),
            ),
            BetaPolicy::Heuristic { d_c } | BetaPolicy::RateCheck { d_c } if d_c == 0 => {
                Err(Error::Config("beta policy needs d_c >= 1".into()))
            }
            _ => Ok(()),
        }
    }
}

/// Condition weight for batch size `n`.
pub fn beta_value(policy: BetaPolicy, n: usize) -> f64 {
    let n = n.max(1) as f64;
    match policy {
        BetaPolicy::Fixed { value } => value,
        BetaPolicy::Heuristic { d_c } => n.powf(1.0 / (2.0 * d_c as f64)),
        BetaPolicy::RateCheck { d_c } => n.powf(1.0 / d_c as f64),
    }
}

/// A beta above which every optimal permutation keeps each index inside its
/// condition block: `N * max|x1_i - x2_j|^2 / delta^2 + 1`, where `delta` is
/// the smallest condition separation exceeding `tolerance`.
pub fn sufficient_beta(pair: &BatchPair, tolerance: f64) -> Result<f64> {
    let n = pair.len();
    let mut delta = f64::INFINITY;
    let mut consider = |a: &[f64], b: &[f64]| {
        let d = sq_dist(a, b).sqrt();
        if d > tolerance && d < delta {
            delta = d;
        }
    };
    for i in 0..n {
        for j in i + 1..n {
            consider(&pair.b1[i].c, &pair.b1[j].c);
            consider(&pair.b2[i].c, &pair.b2[j].c);
        }
    }
    if !delta.is_finite() {
        return Err(Error::Degenerate(
            "all conditions coincide; every permutation preserves blocks".into(),
        ));
    }
    let mut max_sq: f64 = 0.0;
    for a in pair.b1() {
        for b in pair.b2() {
            max_sq = max_sq.max(sq_dist(&a.x, &b.x));
        }
    }
    Ok(n as f64 * max_sq / (delta * delta) + 1.0)
}

/// Index set sharing one ordered condition pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Block {
    pub c1: Vec<f64>,
    pub c2: Vec<f64>,
    pub indices: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockPartition {
    pub blocks: Vec<Block>,
    pub tolerance: f64,
}

/// Groups indices `i` by `(c1_i, c2_i)`: the condition of the `i`-th sample
/// of each batch. Blocks appear in order of their first index.
pub fn block_partition(pair: &BatchPair, tolerance: f64) -> BlockPartition {
    let mut blocks: Vec<Block> = Vec::new();
    for i in 0..pair.len() {
        let (c1, c2) = (&pair.b1[i].c, &pair.b2[i].c);
        let hit = blocks.iter_mut().find(|b| {
            sq_dist(&b.c1, c1).sqrt() <= tolerance && sq_dist(&b.c2, c2).sqrt() <= tolerance
        });
        match hit {
            Some(b) => b.indices.push(i),
            None => blocks.push(Block {
                c1: c1.clone(),
                c2: c2.clone(),
                indices: vec![i],
            }),
        }
    }
    BlockPartition { blocks, tolerance }
}
