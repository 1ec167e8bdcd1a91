//! Dense primal-dual interior-point solver for block-diagonal linear matrix
//! inequalities, with a verification pass that turns an approximate dual
//! point into a rigorous objective bound.
//!
//! Problems are stated in moment form:
//!
//! ```text
//! maximize   c0 + c·y
//! subject to F(y) = F_0 + Σ_i y_i F_i ⪰ 0   (block diagonal)
//!            A y = b
//! ```
//!
//! Equalities are eliminated up front by pivoted Gauss-Jordan, so the
//! interior-point method only sees the free variables. Its dual is
//! `min ⟨G_0, Z⟩` over `Z ⪰ 0` with `⟨G_j, Z⟩ = -c'_j`; the iteration uses the
//! HKM direction with Mehrotra's predictor-corrector.

use std::fmt::Write as _;

use nalgebra::{Cholesky, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::linalg::dot2;
use crate::par;

pub type Blocks = Vec<DMatrix<f64>>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sense {
    Maximize,
    Minimize,
}

/// One nonzero of a symmetric coefficient matrix. `row <= col`; an
/// off-diagonal entry stands for both `(row, col)` and `(col, row)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Entry {
    pub block: usize,
    pub row: usize,
    pub col: usize,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Equality {
    pub terms: Vec<(usize, f64)>,
    pub rhs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SdpProblem {
    pub sense: Sense,
    pub blocks: Vec<usize>,
    pub constant: Vec<Entry>,
    pub coefficients: Vec<Vec<Entry>>,
    pub objective: Vec<f64>,
    pub objective_constant: f64,
    pub equalities: Vec<Equality>,
    /// `|y_i| <= var_bound` on the feasible set. Used by certification.
    pub var_bound: f64,
    /// `tr F(y) <= trace_bound` on the feasible set. Used by certification.
    pub trace_bound: f64,
}

impl SdpProblem {
    pub fn new(sense: Sense, blocks: Vec<usize>, num_vars: usize) -> Self {
        Self {
            sense,
            blocks,
            constant: Vec::new(),
            coefficients: vec![Vec::new(); num_vars],
            objective: vec![0.0; num_vars],
            objective_constant: 0.0,
            equalities: Vec::new(),
            var_bound: f64::INFINITY,
            trace_bound: f64::INFINITY,
        }
    }

    pub fn num_vars(&self) -> usize {
        self.coefficients.len()
    }

    /// Standard form `opt ⟨C, X⟩ s.t. ⟨A_k, X⟩ = b_k, X ⪰ 0`, with one variable
    /// per upper-triangular entry of `X`.
    pub fn from_standard(sense: Sense, blocks: Vec<usize>, c: &[Entry], constraints: &[(Vec<Entry>, f64)]) -> Self {
        let mut index = Vec::new();
        let mut offsets = Vec::new();
        for (bl, &n) in blocks.iter().enumerate() {
            offsets.push(index.len());
            for r in 0..n {
                for col in r..n {
                    index.push((bl, r, col));
                }
            }
        }
        let var_of = |e: &Entry| {
            let n = blocks[e.block];
            let (r, col) = (e.row.min(e.col), e.row.max(e.col));
            offsets[e.block] + r * n - r * r.saturating_sub(1) / 2 + col - r
        };
        let mut p = SdpProblem::new(sense, blocks.clone(), index.len());
        for (v, &(bl, r, col)) in index.iter().enumerate() {
            p.coefficients[v].push(Entry { block: bl, row: r, col, value: 1.0 });
        }
        let weight = |e: &Entry| if e.row == e.col { e.value } else { 2.0 * e.value };
        for e in c {
            p.objective[var_of(e)] += weight(e);
        }
        for (a, rhs) in constraints {
            let mut terms: Vec<(usize, f64)> = a.iter().map(|e| (var_of(e), weight(e))).collect();
            terms.sort_by_key(|t| t.0);
            p.equalities.push(Equality { terms, rhs: *rhs });
        }
        p
    }

    pub fn validate(&self) -> Result<()> {
        if self.objective.len() != self.coefficients.len() {
            return domain("objective length differs from the number of variables");
        }
        let check = |e: &Entry| -> Result<()> {
            if e.block >= self.blocks.len() || e.row > e.col || e.col >= self.blocks[e.block] || !e.value.is_finite() {
                return domain(format!("invalid matrix entry {e:?}"));
            }
            Ok(())
        };
        self.constant.iter().try_for_each(check)?;
        self.coefficients.iter().flatten().try_for_each(check)?;
        for eq in &self.equalities {
            if !eq.rhs.is_finite() || eq.terms.iter().any(|&(i, v)| i >= self.num_vars() || !v.is_finite()) {
                return domain("invalid equality constraint");
            }
        }
        if self.objective.iter().any(|v| !v.is_finite()) || !self.objective_constant.is_finite() {
            return domain("objective is not finite");
        }
        Ok(())
    }

    /// `F(y)` as dense blocks.
    pub fn evaluate_blocks(&self, y: &[f64]) -> Blocks {
        let mut out: Blocks = self.blocks.iter().map(|&n| DMatrix::zeros(n, n)).collect();
        let mut put = |e: &Entry, s: f64| {
            out[e.block][(e.row, e.col)] += s * e.value;
            if e.row != e.col {
                out[e.block][(e.col, e.row)] += s * e.value;
            }
        };
        for e in &self.constant {
            put(e, 1.0);
        }
        for (i, es) in self.coefficients.iter().enumerate() {
            if y[i] != 0.0 {
                for e in es {
                    put(e, y[i]);
                }
            }
        }
        out
    }

    pub fn objective_value(&self, y: &[f64]) -> f64 {
        self.objective_constant + self.objective.iter().zip(y).map(|(c, v)| c * v).sum::<f64>()
    }

    /// Sparse text export. Indices are 1-based; matrix 0 is `F_0`.
    ///
    /// ```text
    /// sense max
    /// vars <n>
    /// blocks <s_1> <s_2> ...
    /// objconst <c0>
    /// bounds <var_bound> <trace_bound>
    /// obj <i> <c_i>
    /// eq <rhs> <i> <a_i> <j> <a_j> ...
    /// <matno> <block> <row> <col> <value>
    /// ```
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let sense = match self.sense {
            Sense::Maximize => "max",
            Sense::Minimize => "min",
        };
        let _ = writeln!(s, "sense {sense}");
        let _ = writeln!(s, "vars {}", self.num_vars());
        let sizes: Vec<String> = self.blocks.iter().map(|b| b.to_string()).collect();
        let _ = writeln!(s, "blocks {}", sizes.join(" "));
        let _ = writeln!(s, "objconst {:?}", self.objective_constant);
        let _ = writeln!(s, "bounds {:?} {:?}", self.var_bound, self.trace_bound);
        for (i, c) in self.objective.iter().enumerate() {
            if *c != 0.0 {
                let _ = writeln!(s, "obj {} {:?}", i + 1, c);
            }
        }
        for eq in &self.equalities {
            let _ = write!(s, "eq {:?}", eq.rhs);
            for (i, v) in &eq.terms {
                let _ = write!(s, " {} {:?}", i + 1, v);
            }
            s.push('\n');
        }
        let mut line = |m: usize, e: &Entry| {
            let _ = writeln!(s, "{} {} {} {} {:?}", m, e.block + 1, e.row + 1, e.col + 1, e.value);
        };
        for e in &self.constant {
            line(0, e);
        }
        for (i, es) in self.coefficients.iter().enumerate() {
            for e in es {
                line(i + 1, e);
            }
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let err = |n: usize, what: &str| Error::Parse(format!("line {}: {what}", n + 1));
        let num = |t: &str, n: usize| t.parse::<f64>().map_err(|_| err(n, "bad number"));
        let idx = |t: &str, n: usize| t.parse::<usize>().map_err(|_| err(n, "bad index"));
        let mut sense = None;
        let mut vars = None;
        let mut p: Option<SdpProblem> = None;
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let tok: Vec<&str> = line.split_whitespace().collect();
            match tok[0] {
                "sense" => {
                    sense = Some(match tok.get(1) {
                        Some(&"max") => Sense::Maximize,
                        Some(&"min") => Sense::Minimize,
                        _ => return Err(err(n, "unknown sense")),
                    })
                }
                "vars" => vars = Some(idx(tok.get(1).ok_or_else(|| err(n, "missing count"))?, n)?),
                "blocks" => {
                    let sizes = tok[1..].iter().map(|t| idx(t, n)).collect::<Result<Vec<_>>>()?;
                    let (Some(s), Some(v)) = (sense, vars) else {
                        return Err(err(n, "blocks before sense/vars"));
                    };
                    p = Some(SdpProblem::new(s, sizes, v));
                }
                head => {
                    let q = p.as_mut().ok_or_else(|| err(n, "data before header"))?;
                    match head {
                        "objconst" => q.objective_constant = num(tok.get(1).ok_or_else(|| err(n, "missing"))?, n)?,
                        "bounds" if tok.len() == 3 => {
                            q.var_bound = num(tok[1], n)?;
                            q.trace_bound = num(tok[2], n)?;
                        }
                        "obj" if tok.len() == 3 => {
                            let i = idx(tok[1], n)?;
                            if i == 0 || i > q.num_vars() {
                                return Err(err(n, "objective index out of range"));
                            }
                            q.objective[i - 1] = num(tok[2], n)?;
                        }
                        "eq" if tok.len().is_multiple_of(2) => {
                            let rhs = num(tok[1], n)?;
                            let mut terms = Vec::new();
                            for pair in tok[2..].chunks(2) {
                                let i = idx(pair[0], n)?;
                                if i == 0 {
                                    return Err(err(n, "variable indices are 1-based"));
                                }
                                terms.push((i - 1, num(pair[1], n)?));
                            }
                            q.equalities.push(Equality { terms, rhs });
                        }
                        _ if tok.len() == 5 => {
                            let m = idx(tok[0], n)?;
                            let (b, r, c) = (idx(tok[1], n)?, idx(tok[2], n)?, idx(tok[3], n)?);
                            if b == 0 || r == 0 || c == 0 || m > q.num_vars() {
                                return Err(err(n, "entry index out of range"));
                            }
                            let e = Entry { block: b - 1, row: r - 1, col: c - 1, value: num(tok[4], n)? };
                            if m == 0 {
                                q.constant.push(e);
                            } else {
                                q.coefficients[m - 1].push(e);
                            }
                        }
                        _ => return Err(err(n, "unrecognized line")),
                    }
                }
            }
        }
        let p = p.ok_or_else(|| Error::Parse("missing header".into()))?;
        p.validate().map_err(|e| Error::Parse(e.to_string()))?;
        Ok(p)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    pub tol: f64,
    pub max_iterations: usize,
    pub block_cap: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { tol: 1e-8, max_iterations: 100, block_cap: 400 }
    }
}

impl SolverOptions {
    pub fn with_tol(tol: f64) -> Self {
        Self { tol, ..Self::default() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Status {
    Optimal,
    Infeasible { certified: bool },
    SlowProgress,
}

/// Solver output. All residuals are recomputed from the returned iterates.
#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub status: Status,
    pub variables: Vec<f64>,
    /// `F(y)` at the returned point.
    pub primal_blocks: Blocks,
    /// Dual slack `Z`.
    pub dual_blocks: Blocks,
    /// Multipliers of the equalities (zero for dependent rows).
    pub multipliers: Vec<f64>,
    pub primal_objective: f64,
    pub dual_objective: f64,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub gap: f64,
    pub iterations: usize,
}

/// A verified bound on the optimum.
#[derive(Debug, Clone, PartialEq)]
pub struct Certificate {
    pub bound: f64,
    /// Dual objective before residual and shift penalties.
    pub dual_objective: f64,
    /// `δ` with `Z + δI ⪰ 0`.
    pub shift: f64,
    /// `var_bound · Σ|ρ_i|` for the dual residual `ρ`.
    pub residual_penalty: f64,
    /// Accumulated floating-point error bound of the verification sums.
    pub rounding: f64,
    pub multipliers: Vec<f64>,
    pub dual_blocks: Blocks,
}

/// Shift threshold relative to the objective scale.
pub const CERTIFICATION_THRESHOLD: f64 = 1e-6;

const PIVOT_TOL: f64 = 1e-10;

/// Trace caps (powers of ten, normalized units) tried after a stalled solve.
const CAP_EXPONENTS: std::ops::RangeInclusive<i32> = 3..=8;
/// Relative gap between the certified and moment-side values below which the
/// trace-cap search is skipped.
const CAP_SKIP_GAP: f64 = 1e-7;

/// Best-iterate accuracy above which a stalled solve is re-examined by phase one.
const NEARLY_FEASIBLE: f64 = 1e-5;

// ---------------------------------------------------------------------------
// Sparse symmetric matrices over blocks.

#[derive(Debug, Clone, Default)]
struct SpSym {
    entries: Vec<(usize, usize, usize, f64)>,
}

impl SpSym {
    fn from_entries(mut es: Vec<(usize, usize, usize, f64)>) -> Self {
        es.sort_by_key(|a| (a.0, a.1, a.2));
        let mut out: Vec<(usize, usize, usize, f64)> = Vec::with_capacity(es.len());
        for e in es {
            match out.last_mut() {
                Some(l) if (l.0, l.1, l.2) == (e.0, e.1, e.2) => l.3 += e.3,
                _ => out.push(e),
            }
        }
        out.retain(|e| e.3 != 0.0);
        Self { entries: out }
    }

    fn from_problem(es: &[Entry], scale: f64) -> Vec<(usize, usize, usize, f64)> {
        es.iter().map(|e| (e.block, e.row, e.col, scale * e.value)).collect()
    }

    /// `tr(A D)`; `D` need not be symmetric.
    fn trace_with(&self, d: &[DMatrix<f64>]) -> f64 {
        self.entries
            .iter()
            .map(|&(b, r, c, v)| if r == c { v * d[b][(r, r)] } else { v * (d[b][(r, c)] + d[b][(c, r)]) })
            .sum()
    }

    fn add_to(&self, d: &mut [DMatrix<f64>], s: f64) {
        for &(b, r, c, v) in &self.entries {
            d[b][(r, c)] += s * v;
            if r != c {
                d[b][(c, r)] += s * v;
            }
        }
    }

    fn frob(&self) -> f64 {
        self.entries.iter().map(|&(_, r, c, v)| if r == c { v * v } else { 2.0 * v * v }).sum::<f64>().sqrt()
    }
}

fn zeros(sizes: &[usize]) -> Blocks {
    sizes.iter().map(|&n| DMatrix::zeros(n, n)).collect()
}

fn eye(sizes: &[usize], s: f64) -> Blocks {
    sizes.iter().map(|&n| DMatrix::identity(n, n) * s).collect()
}

fn inner(a: &[DMatrix<f64>], b: &[DMatrix<f64>]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x.dot(y)).sum()
}

fn frob(a: &[DMatrix<f64>]) -> f64 {
    a.iter().map(|x| x.norm_squared()).sum::<f64>().sqrt()
}

fn sym(a: &DMatrix<f64>) -> DMatrix<f64> {
    (a + a.transpose()) * 0.5
}

fn min_eigenvalue(a: &DMatrix<f64>) -> f64 {
    if a.nrows() == 0 {
        return f64::INFINITY;
    }
    sym(a).symmetric_eigenvalues().iter().copied().fold(f64::INFINITY, f64::min)
}

/// Largest `α` with `X + α dX ⪰ 0`, given the Cholesky factor of `X`.
fn max_step(chol: &[Cholesky<f64, nalgebra::Dyn>], dx: &[DMatrix<f64>]) -> f64 {
    let mut alpha = f64::INFINITY;
    for (c, d) in chol.iter().zip(dx) {
        if d.nrows() == 0 {
            continue;
        }
        let l = c.l();
        let y = l.solve_lower_triangular(d).expect("triangular solve");
        let z = l.solve_lower_triangular(&y.transpose()).expect("triangular solve");
        let m = min_eigenvalue(&z);
        if m < 0.0 {
            alpha = alpha.min(-1.0 / m);
        }
    }
    alpha
}

// ---------------------------------------------------------------------------
// Equality elimination.

/// `y_P = d - E y_N` after Gauss-Jordan with full pivoting.
#[derive(Debug, Clone)]
struct Elimination {
    pivots: Vec<usize>,
    /// Original equality row of each pivot.
    rows: Vec<usize>,
    free: Vec<usize>,
    d: Vec<f64>,
    /// `E[k][f]`, indexed by pivot k and position f in `free`.
    e: Vec<Vec<f64>>,
    /// LU of the pivot columns of the kept equalities, transposed.
    at: Option<nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>>,
}

fn eliminate(p: &SdpProblem) -> std::result::Result<Elimination, Error> {
    let n = p.num_vars();
    let m = p.equalities.len();
    // Row-major Gauss-Jordan; each row pivots on its largest remaining entry.
    let mut a: Vec<Vec<f64>> = vec![vec![0.0; n]; m];
    let mut b: Vec<f64> = vec![0.0; m];
    for (k, eq) in p.equalities.iter().enumerate() {
        for &(i, v) in &eq.terms {
            a[k][i] += v;
        }
        b[k] = eq.rhs;
    }
    let scale = a.iter().flatten().fold(0.0f64, |s, v| s.max(v.abs())).max(1.0);
    let mut is_pivot = vec![false; n];
    let mut pivots = Vec::new();
    let mut rows = Vec::new();
    let mut dependent = Vec::new();
    for r in 0..m {
        let mut best = (0.0, 0);
        for (c, &v) in a[r].iter().enumerate() {
            if !is_pivot[c] && v.abs() > best.0 {
                best = (v.abs(), c);
            }
        }
        if best.0 <= PIVOT_TOL * scale {
            dependent.push(r);
            continue;
        }
        let c = best.1;
        let piv = a[r][c];
        for v in a[r].iter_mut() {
            *v /= piv;
        }
        b[r] /= piv;
        let (prow, prhs) = (a[r].clone(), b[r]);
        let nz: Vec<usize> = (0..n).filter(|&j| prow[j] != 0.0).collect();
        for r2 in 0..m {
            if r2 == r {
                continue;
            }
            let f = a[r2][c];
            if f != 0.0 {
                for &j in &nz {
                    a[r2][j] -= f * prow[j];
                }
                a[r2][c] = 0.0;
                b[r2] -= f * prhs;
            }
        }
        is_pivot[c] = true;
        pivots.push(c);
        rows.push(r);
    }
    let bmax = b.iter().fold(0.0f64, |s, v| s.max(v.abs()));
    if dependent.iter().any(|&r| b[r].abs() > 1e-9 * (1.0 + bmax)) {
        return Err(Error::Infeasible { certified: true });
    }
    let free: Vec<usize> = (0..n).filter(|&c| !is_pivot[c]).collect();
    let d = rows.iter().map(|&r| b[r]).collect();
    let e = rows.iter().map(|&r| free.iter().map(|&f| a[r][f]).collect()).collect();
    let at = pivot_lu(p, &pivots, &rows);
    Ok(Elimination { pivots, rows, free, d, e, at })
}

fn pivot_lu(p: &SdpProblem, pivots: &[usize], rows: &[usize]) -> Option<nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>> {
    let r = pivots.len();
    if r == 0 {
        return None;
    }
    let mut col_of = vec![usize::MAX; p.num_vars()];
    for (c, &i) in pivots.iter().enumerate() {
        col_of[i] = c;
    }
    let mut at = DMatrix::<f64>::zeros(r, r);
    for (k, &row) in rows.iter().enumerate() {
        for &(i, v) in &p.equalities[row].terms {
            if col_of[i] != usize::MAX {
                at[(col_of[i], k)] += v;
            }
        }
    }
    Some(at.lu())
}

impl Elimination {
    fn expand(&self, n: usize, z: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; n];
        for (f, &i) in self.free.iter().enumerate() {
            y[i] = z[f];
        }
        for (k, &i) in self.pivots.iter().enumerate() {
            y[i] = self.d[k] - self.e[k].iter().zip(z).map(|(e, v)| e * v).sum::<f64>();
        }
        y
    }
}

/// Reduced problem in standard interior-point notation:
/// `max b·y s.t. S = C - Σ y_j A_j ⪰ 0`, dual `min ⟨C, X⟩ s.t. ⟨A_j, X⟩ = b_j`.
#[derive(Debug, Clone)]
struct Reduced {
    sizes: Vec<usize>,
    c: Blocks,
    a: Vec<SpSym>,
    b: Vec<f64>,
}

fn reduce(p: &SdpProblem, el: &Elimination, obj: &[f64]) -> (Reduced, f64) {
    let mut c = zeros(&p.blocks);
    SpSym::from_entries(SpSym::from_problem(&p.constant, 1.0)).add_to(&mut c, 1.0);
    let mut c0 = 0.0;
    for (k, &i) in el.pivots.iter().enumerate() {
        SpSym::from_entries(SpSym::from_problem(&p.coefficients[i], 1.0)).add_to(&mut c, el.d[k]);
        c0 += obj[i] * el.d[k];
    }
    let mut a = Vec::with_capacity(el.free.len());
    let mut b = Vec::with_capacity(el.free.len());
    for (f, &j) in el.free.iter().enumerate() {
        let mut es = SpSym::from_problem(&p.coefficients[j], -1.0);
        let mut bj = obj[j];
        for (k, &i) in el.pivots.iter().enumerate() {
            let ekf = el.e[k][f];
            if ekf != 0.0 {
                es.extend(SpSym::from_problem(&p.coefficients[i], ekf));
                bj -= obj[i] * ekf;
            }
        }
        a.push(SpSym::from_entries(es));
        b.push(bj);
    }
    (Reduced { sizes: p.blocks.clone(), c, a, b }, c0)
}

// ---------------------------------------------------------------------------
// Interior-point core.

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum IpmStatus {
    Converged,
    Stalled,
    Diverged,
}

#[derive(Debug, Clone)]
struct IpmResult {
    x: Blocks,
    y: Vec<f64>,
    status: IpmStatus,
    iterations: usize,
    /// `max(pinf, dinf, gap)` of the returned iterate.
    merit: f64,
    /// First primal-feasible iterate; well inside the cone.
    interior: Option<Blocks>,
}

/// Per-block list of `(variable, row, col, value)` used to assemble `M`.
fn entries_by_block(r: &Reduced) -> Vec<Vec<(usize, usize, usize, f64)>> {
    let mut out = vec![Vec::new(); r.sizes.len()];
    for (i, a) in r.a.iter().enumerate() {
        for &(b, row, col, v) in &a.entries {
            out[b].push((i, row, col, v));
        }
    }
    out
}

/// Schur complement `M_ij = tr(A_i X A_j W)` with `W = S^{-1}`.
fn schur(r: &Reduced, by_block: &[Vec<(usize, usize, usize, f64)>], x: &Blocks, w: &Blocks) -> DMatrix<f64> {
    let m = r.a.len();
    let cols: Vec<Vec<f64>> = par::map_range(m, |j| {
        let mut col = vec![0.0; m];
        let aj = &r.a[j].entries;
        let mut start = 0;
        while start < aj.len() {
            let bl = aj[start].0;
            let mut end = start;
            while end < aj.len() && aj[end].0 == bl {
                end += 1;
            }
            let n = r.sizes[bl];
            let mut support: Vec<usize> = aj[start..end].iter().flat_map(|e| [e.1, e.2]).collect();
            support.sort_unstable();
            support.dedup();
            let pos = |i: usize| support.binary_search(&i).expect("support row");
            // R = rows of A_j W restricted to the support.
            let mut rm = DMatrix::<f64>::zeros(support.len(), n);
            for &(_, row, c, v) in &aj[start..end] {
                let pr = pos(row);
                for k in 0..n {
                    rm[(pr, k)] += v * w[bl][(c, k)];
                }
                if row != c {
                    let pc = pos(c);
                    for k in 0..n {
                        rm[(pc, k)] += v * w[bl][(row, k)];
                    }
                }
            }
            let xs = x[bl].select_columns(&support);
            let t = xs * rm;
            for &(i, row, c, v) in &by_block[bl] {
                col[i] += if row == c { v * t[(row, row)] } else { v * (t[(row, c)] + t[(c, row)]) };
            }
            start = end;
        }
        col
    });
    let mut mat = DMatrix::from_fn(m, m, |i, j| cols[j][i]);
    mat = sym(&mat);
    mat
}

fn apply_adjoint(r: &Reduced, y: &[f64]) -> Blocks {
    let mut out = zeros(&r.sizes);
    for (a, &v) in r.a.iter().zip(y) {
        if v != 0.0 {
            a.add_to(&mut out, v);
        }
    }
    out
}

fn ipm(r: &Reduced, opts: &SolverOptions) -> IpmResult {
    let mut interior = None;
    let mut res = ipm_run(r, opts, &mut interior);
    res.interior = interior;
    res
}

fn ipm_run(r: &Reduced, opts: &SolverOptions, interior: &mut Option<Blocks>) -> IpmResult {
    let m = r.a.len();
    let nn: usize = r.sizes.iter().sum();
    let by_block = entries_by_block(r);
    let norm_c = frob(&r.c);
    let norm_b = r.b.iter().map(|v| v * v).sum::<f64>().sqrt();
    let max_a = r.a.iter().map(|a| a.frob()).fold(0.0, f64::max);
    let mut xi = 10f64.max((nn as f64).sqrt());
    for (a, &b) in r.a.iter().zip(&r.b) {
        xi = xi.max(nn as f64 * (1.0 + b.abs()) / (1.0 + a.frob()));
    }
    let eta = 10f64.max((nn as f64).sqrt()).max(norm_c).max(max_a);
    let mut x = eye(&r.sizes, xi);
    let mut s = eye(&r.sizes, eta);
    let mut y = vec![0.0; m];
    let x_scale = xi * (nn as f64);
    let mut stalls = 0;
    let mut best: Option<(f64, Blocks, Vec<f64>)> = None;
    let give_up = |best: Option<(f64, Blocks, Vec<f64>)>, x: Blocks, y: Vec<f64>, merit: f64, status: IpmStatus, iterations: usize| match best {
        Some((m, bx, by)) if m < merit => IpmResult { x: bx, y: by, status, iterations, merit: m, interior: None },
        _ => IpmResult { x, y, status, iterations, merit, interior: None },
    };

    for iter in 0..opts.max_iterations {
        let ax: Vec<f64> = r.a.iter().map(|a| a.trace_with(&x)).collect();
        let rp: Vec<f64> = r.b.iter().zip(&ax).map(|(b, v)| b - v).collect();
        let aty = apply_adjoint(r, &y);
        let rd: Blocks = (0..r.sizes.len()).map(|k| &r.c[k] - &aty[k] - &s[k]).collect();
        let pobj = inner(&r.c, &x);
        let dobj: f64 = r.b.iter().zip(&y).map(|(b, v)| b * v).sum();
        let mu = inner(&x, &s) / nn as f64;
        let pinf = rp.iter().map(|v| v * v).sum::<f64>().sqrt() / (1.0 + norm_b);
        let dinf = frob(&rd) / (1.0 + norm_c);
        let gap = (pobj - dobj).abs() / (1.0 + pobj.abs() + dobj.abs());
        let merit = pinf.max(dinf).max(gap);
        if interior.is_none() && pinf <= 1e-12 {
            *interior = Some(x.clone());
        }
        if merit <= opts.tol {
            return IpmResult { x, y, status: IpmStatus::Converged, iterations: iter, merit, interior: None };
        }
        if frob(&x) > 1e10 * x_scale || y.iter().any(|v| !v.is_finite() || v.abs() > 1e12) {
            return give_up(best, x, y, merit, IpmStatus::Diverged, iter);
        }
        // Degenerate problems lose accuracy once the iterates blow up; keep the best.
        match &best {
            Some((m, _, _)) if *m <= merit => {
                if merit > 1e3 * m && *m < 1e-4 {
                    return give_up(best, x, y, merit, IpmStatus::Stalled, iter);
                }
            }
            _ => best = Some((merit, x.clone(), y.clone())),
        }

        let s_chol: Vec<_> = match s.iter().map(|b| Cholesky::new(b.clone())).collect::<Option<Vec<_>>>() {
            Some(c) => c,
            None => return give_up(best, x, y, f64::INFINITY, IpmStatus::Stalled, iter),
        };
        let x_chol: Vec<_> = match x.iter().map(|b| Cholesky::new(b.clone())).collect::<Option<Vec<_>>>() {
            Some(c) => c,
            None => return give_up(best, x, y, f64::INFINITY, IpmStatus::Stalled, iter),
        };
        let w: Blocks = s_chol.iter().map(|c| c.inverse()).collect();
        let mut mat = schur(r, &by_block, &x, &w);
        let diag_max = (0..m).map(|i| mat[(i, i)].abs()).fold(0.0, f64::max).max(1e-300);
        let mut chol = Cholesky::new(mat.clone());
        let mut reg = 1e-14;
        while chol.is_none() && reg < 1e-6 {
            for i in 0..m {
                mat[(i, i)] += reg * diag_max;
            }
            chol = Cholesky::new(mat.clone());
            reg *= 100.0;
        }
        let Some(chol) = chol else {
            return give_up(best, x, y, f64::INFINITY, IpmStatus::Stalled, iter);
        };

        let xrdw: Blocks = (0..r.sizes.len()).map(|k| &x[k] * &rd[k] * &w[k]).collect();
        let direction = |extra: &Blocks, sigma_mu: f64, corr: Option<&Blocks>| -> (Vec<f64>, Blocks, Blocks) {
            let rhs = DVector::from_iterator(m, (0..m).map(|i| r.b[i] + r.a[i].trace_with(extra)));
            let dy: Vec<f64> = chol.solve(&rhs).iter().copied().collect();
            let ady = apply_adjoint(r, &dy);
            let ds: Blocks = (0..r.sizes.len()).map(|k| &rd[k] - &ady[k]).collect();
            let dx: Blocks = (0..r.sizes.len())
                .map(|k| {
                    let mut t = &x[k] * &ds[k];
                    if let Some(c) = corr {
                        t += &c[k];
                    }
                    &w[k] * sigma_mu - &x[k] - sym(&(t * &w[k]))
                })
                .collect();
            (dy, dx, ds)
        };

        // Predictor.
        let (_, dx_a, ds_a) = direction(&xrdw, 0.0, None);
        let ap = max_step(&x_chol, &dx_a).min(1.0);
        let ad = max_step(&s_chol, &ds_a).min(1.0);
        let xa: Blocks = (0..x.len()).map(|k| &x[k] + &dx_a[k] * ap).collect();
        let sa: Blocks = (0..s.len()).map(|k| &s[k] + &ds_a[k] * ad).collect();
        let mu_a = inner(&xa, &sa) / nn as f64;
        let expon = 1f64.max(3.0 * ap.min(ad).powi(2));
        let sigma = (mu_a / mu).max(0.0).powf(expon).min(1.0);

        // Corrector.
        let corr: Blocks = (0..x.len()).map(|k| &dx_a[k] * &ds_a[k]).collect();
        let extra: Blocks = (0..x.len()).map(|k| &xrdw[k] - &w[k] * (sigma * mu) + &corr[k] * &w[k]).collect();
        let (dy, dx, ds) = direction(&extra, sigma * mu, Some(&corr));
        let gamma = 0.9 + 0.09 * ap.min(ad);
        let ap = (gamma * max_step(&x_chol, &dx)).min(1.0);
        let ad = (gamma * max_step(&s_chol, &ds)).min(1.0);
        if ap.max(ad) < 1e-10 {
            stalls += 1;
            if stalls > 3 {
                return give_up(best, x, y, f64::INFINITY, IpmStatus::Stalled, iter);
            }
        } else {
            stalls = 0;
        }
        for k in 0..x.len() {
            x[k] += &dx[k] * ap;
            x[k] = sym(&x[k]);
            s[k] += &ds[k] * ad;
            s[k] = sym(&s[k]);
        }
        for (yi, d) in y.iter_mut().zip(&dy) {
            *yi += ad * d;
        }
    }
    give_up(best, x, y, f64::INFINITY, IpmStatus::Stalled, opts.max_iterations)
}

// ---------------------------------------------------------------------------
// Public solve / certify.

fn check_sizes(p: &SdpProblem, opts: &SolverOptions) -> Result<()> {
    p.validate()?;
    if let Some(&n) = p.blocks.iter().find(|&&n| n > opts.block_cap) {
        return domain(format!("block of size {n} exceeds the cap {}", opts.block_cap));
    }
    Ok(())
}

fn max_objective(p: &SdpProblem) -> (Vec<f64>, f64) {
    match p.sense {
        Sense::Maximize => (p.objective.clone(), p.objective_constant),
        Sense::Minimize => (p.objective.iter().map(|v| -v).collect(), -p.objective_constant),
    }
}

/// Solve `p`. Infeasible problems are reported through [`Status::Infeasible`]
/// (or an error when the equality system itself is inconsistent).
pub fn solve(p: &SdpProblem, opts: &SolverOptions) -> Result<Solution> {
    check_sizes(p, opts)?;
    match eliminate(p) {
        Ok(el) => solve_eliminated(p, &el, opts),
        Err(Error::Infeasible { certified }) => Ok(infeasible_solution(p, certified)),
        Err(e) => Err(e),
    }
}

/// Equality elimination of a problem family, reusable across problems that
/// differ only in their objective, constant and coefficient matrices.
#[derive(Debug, Clone)]
pub struct Presolved {
    num_vars: usize,
    equalities: Vec<Equality>,
    el: Elimination,
}

impl Presolved {
    pub fn new(p: &SdpProblem) -> Result<Self> {
        p.validate()?;
        Ok(Presolved { num_vars: p.num_vars(), equalities: p.equalities.clone(), el: eliminate(p)? })
    }

    fn check(&self, p: &SdpProblem) -> Result<()> {
        if p.num_vars() != self.num_vars || p.equalities != self.equalities {
            return domain("problem does not match the presolved equalities");
        }
        Ok(())
    }

    /// Same as [`solve`], skipping the elimination.
    pub fn solve(&self, p: &SdpProblem, opts: &SolverOptions) -> Result<Solution> {
        check_sizes(p, opts)?;
        self.check(p)?;
        solve_eliminated(p, &self.el, opts)
    }

    /// Same as [`certify_upper_bound`], skipping the elimination.
    pub fn certify_upper_bound(&self, p: &SdpProblem, s: &Solution) -> Result<Certificate> {
        if let Status::Infeasible { certified } = s.status {
            return Err(Error::Infeasible { certified });
        }
        self.check(p)?;
        certify_with(p, &self.el, &s.dual_blocks, true)
    }
}

fn solve_eliminated(p: &SdpProblem, el: &Elimination, opts: &SolverOptions) -> Result<Solution> {
    let n = p.num_vars();
    let (obj, _) = max_objective(p);
    let (mut red, _) = reduce(p, el, &obj);
    let unscaled_b = red.b.clone();
    let scale = red.b.iter().fold(0.0f64, |s, v| s.max(v.abs()));
    let zero_objective = scale == 0.0;
    if !zero_objective {
        for v in red.b.iter_mut() {
            *v /= scale;
        }
    }
    let res = if red.a.is_empty() {
        None
    } else {
        Some(ipm(&red, opts))
    };
    let converged = res.as_ref().map(|r| r.status == IpmStatus::Converged).unwrap_or(false);
    let c0 = max_objective(p).1;
    let nearly = res.as_ref().map(|r| r.merit <= NEARLY_FEASIBLE).unwrap_or(false);
    if !converged && !nearly {
        // Either no free variables or the main solve failed: decide feasibility.
        let (t, z, cert) = phase_one(p, el, &red, opts);
        if t < -opts.tol {
            let mut s = infeasible_solution(p, cert);
            if let Some(zz) = z {
                s.variables = el.expand(n, &zz);
            }
            return Ok(s);
        }
        if res.is_none() {
            let zz = z.unwrap_or_default();
            let y = el.expand(n, &zz);
            return Ok(finish(p, el, y, zeros(&p.blocks), Status::Optimal, 0));
        }
    }
    let res = res.expect("interior-point result");
    let iterations = res.iterations;
    let y = el.expand(n, &res.y);
    let mut x: Blocks = if zero_objective { zeros(&p.blocks) } else { res.x.iter().map(|b| b * scale).collect() };
    if !converged && !zero_objective {
        // No interior on the moment side: the dual optimum may only be
        // approached as tr X grows. Try increasing trace caps and keep the
        // candidate with the best certified bound.
        let target = Reduced { b: unscaled_b.clone(), ..red.clone() };
        let proj = Projector::new(&target);
        let nb = red.sizes.len();
        let candidate = |r: &IpmResult| -> (f64, Blocks) {
            let unscale = |z: &Blocks| -> Blocks { z[..nb].iter().map(|b| b * scale).collect() };
            let anchor = r.interior.as_ref().map(unscale);
            best_certificate(p, el, &obj, c0, &proj, unscale(&r.x), anchor.as_ref())
        };
        let mut best = candidate(&res);
        let lower = c0 + obj.iter().zip(&y).map(|(c, v)| c * v).sum::<f64>();
        let settled = best.0 - lower <= CAP_SKIP_GAP * best.0.abs().max(1.0);
        let mut previous = f64::INFINITY;
        for k in CAP_EXPONENTS.into_iter().filter(|_| !settled) {
            let r = ipm(&with_trace_cap(&red, 10f64.powi(k)), opts);
            let found = candidate(&r);
            let v = found.0;
            if v < best.0 {
                best = found;
            }
            if !(v < previous) {
                break;
            }
            previous = v;
        }
        x = best.1;
    }
    let status = if converged { Status::Optimal } else { Status::SlowProgress };
    Ok(finish(p, el, y, x, status, iterations))
}

fn infeasible_solution(p: &SdpProblem, certified: bool) -> Solution {
    Solution {
        status: Status::Infeasible { certified },
        variables: vec![0.0; p.num_vars()],
        primal_blocks: zeros(&p.blocks),
        dual_blocks: zeros(&p.blocks),
        multipliers: vec![0.0; p.equalities.len()],
        primal_objective: f64::NAN,
        dual_objective: f64::NAN,
        primal_residual: f64::INFINITY,
        dual_residual: f64::INFINITY,
        gap: f64::INFINITY,
        iterations: 0,
    }
}

/// Add `tr X + s = cap` with a slack `s >= 0`. On the moment side this admits
/// `G(z) ⪰ -τ I` at a cost `cap·τ`, which restores an interior point; any
/// feasible `X` remains a dual point of the original problem.
fn with_trace_cap(red: &Reduced, cap: f64) -> Reduced {
    let nb = red.sizes.len();
    let mut sizes = red.sizes.clone();
    sizes.push(1);
    let mut c = red.c.clone();
    c.push(DMatrix::zeros(1, 1));
    let mut a = red.a.clone();
    let mut t_entries: Vec<(usize, usize, usize, f64)> = Vec::new();
    for (b, &n) in red.sizes.iter().enumerate() {
        for i in 0..n {
            t_entries.push((b, i, i, 1.0));
        }
    }
    t_entries.push((nb, 0, 0, 1.0));
    a.push(SpSym::from_entries(t_entries));
    let mut b = red.b.clone();
    b.push(cap);
    Reduced { sizes, c, a, b }
}

/// Maximize `t` subject to `G(z) - tI ⪰ 0`, `t <= 1`. Returns the optimal
/// `t`, the free variables, and whether a dual ray certifies infeasibility.
fn phase_one(p: &SdpProblem, el: &Elimination, red: &Reduced, opts: &SolverOptions) -> (f64, Option<Vec<f64>>, bool) {
    let nb = red.sizes.len();
    let mut sizes = red.sizes.clone();
    sizes.push(1);
    let mut c = red.c.clone();
    c.push(DMatrix::from_element(1, 1, 1.0));
    let mut a = red.a.clone();
    let mut t_entries: Vec<(usize, usize, usize, f64)> = Vec::new();
    for (b, &n) in red.sizes.iter().enumerate() {
        for i in 0..n {
            t_entries.push((b, i, i, 1.0));
        }
    }
    t_entries.push((nb, 0, 0, 1.0));
    a.push(SpSym::from_entries(t_entries));
    let mut b = vec![0.0; red.a.len()];
    b.push(1.0);
    let ph = Reduced { sizes, c, a, b };
    let res = ipm(&ph, &SolverOptions { max_iterations: opts.max_iterations.max(60), ..*opts });
    let t = *res.y.last().unwrap_or(&0.0);
    let dual_t = inner(&ph.c, &res.x);
    let z = res.y[..red.a.len()].to_vec();
    if t >= -opts.tol && dual_t >= -opts.tol {
        return (t, Some(z), false);
    }
    let zmat: Blocks = res.x[..nb].to_vec();
    let zero = vec![0.0; p.num_vars()];
    let certified = match verify_bound(p, el, &zero, 0.0, &zmat, 1.0) {
        Ok(parts) => parts.bound < 0.0,
        Err(_) => false,
    };
    (t.min(dual_t), Some(z), certified)
}

fn finish(p: &SdpProblem, el: &Elimination, y: Vec<f64>, z: Blocks, status: Status, iterations: usize) -> Solution {
    let (obj, c0) = max_objective(p);
    let f = p.evaluate_blocks(&y);
    let eq_res = p
        .equalities
        .iter()
        .map(|eq| (eq.terms.iter().map(|(i, v)| v * y[*i]).sum::<f64>() - eq.rhs).abs())
        .fold(0.0, f64::max);
    let f_min = f.iter().map(min_eigenvalue).fold(f64::INFINITY, f64::min);
    let primal_residual = eq_res.max((-f_min).max(0.0));
    let parts = verify_parts(p, el, &obj, c0, &z);
    let z_min = z.iter().map(min_eigenvalue).fold(f64::INFINITY, f64::min);
    let dual_residual = parts.rho.iter().fold(0.0f64, |s, v| s.max(v.abs())).max((-z_min).max(0.0));
    let sign = if p.sense == Sense::Maximize { 1.0 } else { -1.0 };
    let primal_objective = p.objective_value(&y);
    let dual_objective = sign * parts.base;
    let mut multipliers = vec![0.0; p.equalities.len()];
    for (k, &row) in el.rows.iter().enumerate() {
        multipliers[row] = parts.mu[k];
    }
    Solution {
        status,
        variables: y,
        primal_blocks: f,
        dual_blocks: z,
        multipliers,
        primal_objective,
        dual_objective,
        primal_residual,
        dual_residual,
        gap: (primal_objective - dual_objective).abs(),
        iterations,
    }
}

/// `⟨A_i, A_j⟩` for sorted sparse entries.
fn sparse_inner(a: &SpSym, b: &SpSym) -> f64 {
    let (mut i, mut j, mut acc) = (0, 0, 0.0);
    while i < a.entries.len() && j < b.entries.len() {
        let (x, y) = (&a.entries[i], &b.entries[j]);
        match (x.0, x.1, x.2).cmp(&(y.0, y.1, y.2)) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                acc += if x.1 == x.2 { x.3 * y.3 } else { 2.0 * x.3 * y.3 };
                i += 1;
                j += 1;
            }
        }
    }
    acc
}

/// Least-squares correction onto `{⟨A_j, Z⟩ = b_j}` with the Gram factor
/// cached. Semidefiniteness is restored afterwards by blending or shifting.
struct Projector<'a> {
    red: &'a Reduced,
    chol: Option<Cholesky<f64, nalgebra::Dyn>>,
}

impl<'a> Projector<'a> {
    fn new(red: &'a Reduced) -> Self {
        let m = red.a.len();
        if m == 0 {
            return Self { red, chol: None };
        }
        let rows: Vec<Vec<f64>> = par::map_range(m, |i| (0..m).map(|j| sparse_inner(&red.a[i], &red.a[j])).collect());
        let mut gram = DMatrix::from_fn(m, m, |i, j| rows[i][j]);
        let dmax = (0..m).map(|i| gram[(i, i)]).fold(0.0, f64::max);
        for i in 0..m {
            gram[(i, i)] += 1e-14 * dmax;
        }
        Self { red, chol: Cholesky::new(gram) }
    }

    /// Least-squares correction of `z` onto `⟨A_j, Z⟩ = b_j`.
    fn project(&self, z: &Blocks) -> Blocks {
        let r = self.red;
        let mut out: Blocks = z.iter().map(sym).collect();
        let Some(chol) = &self.chol else {
            return out;
        };
        for _ in 0..3 {
            let res = DVector::from_iterator(r.a.len(), (0..r.a.len()).map(|j| r.b[j] - r.a[j].trace_with(&out)));
            let u = chol.solve(&res);
            for (a, &v) in r.a.iter().zip(u.iter()) {
                a.add_to(&mut out, v);
            }
        }
        out
    }
}

struct VerifyParts {
    base: f64,
    base_err: f64,
    rho: Vec<f64>,
    rho_err: f64,
    mu: Vec<f64>,
}

/// Multipliers and dual residual of `Z` for the objective `obj` (max sense).
fn verify_parts(p: &SdpProblem, el: &Elimination, obj: &[f64], c0: f64, z: &Blocks) -> VerifyParts {
    let zs: Blocks = z.iter().map(sym).collect();
    let zf = |es: &[Entry]| -> Vec<(f64, f64)> {
        es.iter()
            .map(|e| {
                let v = zs[e.block][(e.row, e.col)];
                (if e.row == e.col { e.value } else { 2.0 * e.value }, v)
            })
            .collect()
    };
    let mut g_err = 0.0;
    let g: Vec<f64> = p
        .coefficients
        .iter()
        .zip(obj)
        .map(|(es, &c)| {
            let mut terms = zf(es);
            terms.push((c, 1.0));
            let (v, e) = dot2(terms);
            g_err += e;
            v
        })
        .collect();
    let r = el.pivots.len();
    let mut mu = vec![0.0; r];
    if let Some(at) = &el.at {
        let rhs = DVector::from_iterator(r, el.pivots.iter().map(|&i| g[i]));
        if let Some(sol) = at.solve(&rhs) {
            mu = sol.iter().copied().collect();
        }
    }
    let mut at_mu: Vec<Vec<(f64, f64)>> = vec![Vec::new(); p.num_vars()];
    for (k, &row) in el.rows.iter().enumerate() {
        for &(i, v) in &p.equalities[row].terms {
            at_mu[i].push((-v, mu[k]));
        }
    }
    let mut rho_err = g_err;
    let rho: Vec<f64> = g
        .iter()
        .zip(at_mu)
        .map(|(&gi, mut terms)| {
            terms.push((gi, 1.0));
            let (v, e) = dot2(terms);
            rho_err += e;
            v
        })
        .collect();
    let mut base_terms = zf(&p.constant);
    base_terms.push((c0, 1.0));
    for (k, &row) in el.rows.iter().enumerate() {
        base_terms.push((p.equalities[row].rhs, mu[k]));
    }
    let (base, base_err) = dot2(base_terms);
    VerifyParts { base, base_err, rho, rho_err, mu }
}

struct BoundParts {
    bound: f64,
    base: f64,
    shift: f64,
    penalty: f64,
    rounding: f64,
    mu: Vec<f64>,
    z: Blocks,
}

/// Rigorous upper bound on `obj·y + c0` over the feasible set using the dual
/// point `z`; `scale` sets the magnitude for the shift threshold.
fn verify_bound(p: &SdpProblem, el: &Elimination, obj: &[f64], c0: f64, z: &Blocks, scale: f64) -> Result<BoundParts> {
    let parts = verify_parts(p, el, obj, c0, z);
    let mut shift = 0.0f64;
    let mut purified = Vec::with_capacity(z.len());
    for blk in z {
        let zs = sym(blk);
        let n = zs.nrows();
        if n == 0 {
            purified.push(zs);
            continue;
        }
        let amax = zs.amax();
        let diagonal = (0..n).all(|i| (0..n).all(|j| i == j || zs[(i, j)] == 0.0));
        if diagonal {
            // Exact: the eigenvalues are the diagonal entries.
            shift = shift.max((0..n).map(|i| -zs[(i, i)]).fold(0.0, f64::max) + 0.0);
            purified.push(zs);
            continue;
        }
        let lmin = min_eigenvalue(&zs);
        let margin = 8.0 * (n as f64 + 1.0) * f64::EPSILON * amax;
        let mut d = (-lmin).max(0.0) + if amax > 0.0 { margin } else { 0.0 };
        let mut ok = false;
        for _ in 0..40 {
            let shifted = &zs + DMatrix::<f64>::identity(n, n) * d;
            if amax == 0.0 || Cholesky::new(shifted).is_some() {
                ok = true;
                break;
            }
            d = if d == 0.0 { margin.max(f64::MIN_POSITIVE) } else { 2.0 * d };
        }
        if !ok {
            return Err(Error::Certification { delta: d, threshold: CERTIFICATION_THRESHOLD * scale });
        }
        shift = shift.max(d);
        purified.push(zs);
    }
    if shift > CERTIFICATION_THRESHOLD * scale {
        return Err(Error::Certification { delta: shift, threshold: CERTIFICATION_THRESHOLD * scale });
    }
    let rho_sum: f64 = parts.rho.iter().map(|v| v.abs()).sum();
    let penalty = if rho_sum == 0.0 { 0.0 } else { p.var_bound * rho_sum };
    let shift_term = if shift == 0.0 { 0.0 } else { shift * p.trace_bound };
    if !penalty.is_finite() || !shift_term.is_finite() {
        return Err(Error::Certification { delta: rho_sum.max(shift), threshold: 0.0 });
    }
    let rounding = parts.base_err + if p.var_bound.is_finite() { p.var_bound * parts.rho_err } else { 0.0 };
    let raw = parts.base + penalty + shift_term + rounding;
    let bound = raw + 4.0 * f64::EPSILON * (parts.base.abs() + penalty + shift_term);
    for blk in purified.iter_mut() {
        let n = blk.nrows();
        *blk += DMatrix::<f64>::identity(n, n) * shift;
    }
    Ok(BoundParts { bound, base: parts.base, shift, penalty, rounding, mu: parts.mu, z: purified })
}

/// Turn the dual point of `s` into a rigorous upper bound on the optimum of
/// the maximization problem `p`. The dual point is first projected onto the
/// dual equality constraints; the unprojected point is used if it does better.
pub fn certify_upper_bound(p: &SdpProblem, s: &Solution) -> Result<Certificate> {
    if let Status::Infeasible { certified } = s.status {
        return Err(Error::Infeasible { certified });
    }
    certify(p, &s.dual_blocks, true)
}

/// Best certified bound (max sense) among `z`, its projection, and the
/// projection pulled toward `interior` just far enough to be PSD.
fn best_certificate(
    p: &SdpProblem,
    el: &Elimination,
    obj: &[f64],
    c0: f64,
    proj: &Projector,
    z: Blocks,
    interior: Option<&Blocks>,
) -> (f64, Blocks) {
    let scale = obj.iter().fold(c0.abs(), |m, v| m.max(v.abs())).max(1.0);
    let value = |z: &Blocks| verify_bound(p, el, obj, c0, z, scale).map_or(f64::INFINITY, |b| b.bound);
    let projected = proj.project(&z);
    let mut best = (value(&z), z);
    let mut consider = |z: Blocks| {
        let v = value(&z);
        if v < best.0 {
            best = (v, z);
        }
    };
    if let Some(inner_pt) = interior {
        if let Some(b) = blend_toward(&projected, &proj.project(inner_pt)) {
            consider(b);
        }
    }
    consider(projected);
    best
}

/// Smallest convex step from `z` toward `anchor` that clears every negative
/// eigenvalue of `z`, with a small margin. Both points satisfy the same affine
/// constraints, so the result does too.
fn blend_toward(z: &Blocks, anchor: &Blocks) -> Option<Blocks> {
    let mut t = 0.0f64;
    for (zb, ab) in z.iter().zip(anchor) {
        if zb.nrows() == 0 {
            continue;
        }
        let e = -min_eigenvalue(zb);
        if e <= 0.0 {
            continue;
        }
        let g = min_eigenvalue(ab);
        if g <= 0.0 {
            return None;
        }
        t = t.max(e / (e + g));
    }
    if t == 0.0 {
        return None;
    }
    let t = (2.0 * t).min(1.0);
    Some(z.iter().zip(anchor).map(|(zb, ab)| zb * (1.0 - t) + ab * t).collect())
}

/// Certificate for a dual point supplied directly, used as given.
pub fn certify_dual_point(p: &SdpProblem, z: &Blocks) -> Result<Certificate> {
    certify(p, z, false)
}

fn certify(p: &SdpProblem, z: &Blocks, refine: bool) -> Result<Certificate> {
    p.validate()?;
    certify_with(p, &eliminate(p)?, z, refine)
}

fn certify_with(p: &SdpProblem, el: &Elimination, z: &Blocks, refine: bool) -> Result<Certificate> {
    if p.sense != Sense::Maximize {
        return domain("certification needs a maximization problem");
    }
    let scale = p.objective.iter().fold(p.objective_constant.abs(), |m, v| m.max(v.abs())).max(1.0);
    let raw = verify_bound(p, el, &p.objective, p.objective_constant, z, scale);
    let parts = if refine {
        let (red, _) = reduce(p, el, &p.objective);
        let projected = verify_bound(p, el, &p.objective, p.objective_constant, &Projector::new(&red).project(z), scale);
        match (raw, projected) {
            (Ok(r), Ok(q)) => if r.bound < q.bound { r } else { q },
            (Ok(r), Err(_)) => r,
            (Err(_), q) => q?,
        }
    } else {
        raw?
    };
    let mut multipliers = vec![0.0; p.equalities.len()];
    for (k, &row) in el.rows.iter().enumerate() {
        multipliers[row] = parts.mu[k];
    }
    Ok(Certificate {
        bound: parts.bound,
        dual_objective: parts.base,
        shift: parts.shift,
        residual_penalty: parts.penalty,
        rounding: parts.rounding,
        multipliers,
        dual_blocks: parts.z,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn ent(block: usize, row: usize, col: usize, value: f64) -> Entry {
        Entry { block, row, col, value }
    }

    fn trace_one(n: usize) -> (Vec<Entry>, f64) {
        ((0..n).map(|i| ent(0, i, i, 1.0)).collect(), 1.0)
    }

    fn max_eig_problem() -> SdpProblem {
        let mut p = SdpProblem::from_standard(
            Sense::Maximize,
            vec![2],
            &[ent(0, 0, 0, 1.0), ent(0, 1, 1, 2.0)],
            &[trace_one(2)],
        );
        p.var_bound = 1.0;
        p.trace_bound = 1.0;
        p
    }

    #[test]
    fn max_eigenvalue() {
        let p = max_eig_problem();
        let s = solve(&p, &SolverOptions::default()).unwrap();
        assert_eq!(s.status, Status::Optimal);
        assert!((s.primal_objective - 2.0).abs() < 1e-7, "{}", s.primal_objective);
        let c = certify_upper_bound(&p, &s).unwrap();
        assert!(c.bound >= 2.0 && c.bound < 2.0 + 1e-7, "{c:?}");
    }

    #[test]
    fn negative_trace_is_infeasible() {
        let mut p = SdpProblem::from_standard(Sense::Maximize, vec![2], &[ent(0, 0, 0, 1.0)], &[(vec![ent(0, 0, 0, 1.0), ent(0, 1, 1, 1.0)], -1.0)]);
        p.var_bound = 1.0;
        p.trace_bound = 1.0;
        let s = solve(&p, &SolverOptions::default()).unwrap();
        assert!(matches!(s.status, Status::Infeasible { .. }), "{:?}", s.status);
        assert!(certify_upper_bound(&p, &s).is_err());
    }

    #[test]
    fn inconsistent_equalities_are_infeasible() {
        let mut p = SdpProblem::new(Sense::Maximize, vec![1], 1);
        p.coefficients[0].push(ent(0, 0, 0, 1.0));
        p.equalities.push(Equality { terms: vec![(0, 1.0)], rhs: 0.5 });
        p.equalities.push(Equality { terms: vec![(0, 2.0)], rhs: 0.2 });
        let s = solve(&p, &SolverOptions::default()).unwrap();
        assert_eq!(s.status, Status::Infeasible { certified: true });
    }

    #[test]
    fn exactly_feasible_dual_gives_dual_objective() {
        let p = max_eig_problem();
        // Z = μI - C with μ = 2 is the exact optimal dual.
        let z = vec![DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0])];
        let c = certify_dual_point(&p, &z).unwrap();
        assert_eq!(c.shift, 0.0);
        assert!((c.bound - c.dual_objective).abs() <= 1e-14, "{c:?}");
        assert!((c.dual_objective - 2.0).abs() < 1e-14);
    }

    #[test]
    fn residual_shift_arithmetic() {
        let p = max_eig_problem();
        let z = vec![DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1e-9])];
        let c = certify_dual_point(&p, &z).unwrap();
        assert!(c.shift >= 1e-9);
        assert!(c.bound <= c.dual_objective + 1e-9 * p.trace_bound + c.residual_penalty + 1e-12, "{c:?}");
        assert!(c.bound >= 2.0);
    }

    #[test]
    fn too_infeasible_dual_is_rejected() {
        let p = max_eig_problem();
        let z = vec![DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1e-3])];
        assert!(matches!(certify_dual_point(&p, &z), Err(Error::Certification { .. })));
    }

    fn random_problem(seed: u64, n: usize, k: usize) -> (SdpProblem, f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = DMatrix::<f64>::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
        let mut x0 = &g * g.transpose() + DMatrix::identity(n, n) * 0.1;
        x0 /= x0.trace();
        let rand_sym = |rng: &mut ChaCha8Rng| -> Vec<Entry> {
            let mut v = Vec::new();
            for r in 0..n {
                for c in r..n {
                    v.push(ent(0, r, c, rng.gen_range(-1.0..1.0)));
                }
            }
            v
        };
        let c = rand_sym(&mut rng);
        let val = |es: &[Entry]| es.iter().map(|e| if e.row == e.col { e.value * x0[(e.row, e.col)] } else { 2.0 * e.value * x0[(e.row, e.col)] }).sum::<f64>();
        let mut cons = vec![trace_one(n)];
        for _ in 0..k {
            let a = rand_sym(&mut rng);
            let b = val(&a);
            cons.push((a, b));
        }
        let mut p = SdpProblem::from_standard(Sense::Maximize, vec![n], &c, &cons);
        p.var_bound = 1.0;
        p.trace_bound = 1.0;
        (p, val(&c))
    }

    #[test]
    fn weak_duality_on_random_problems() {
        for seed in 0..8 {
            let (p, interior) = random_problem(seed, 5, 3);
            let s = solve(&p, &SolverOptions::default()).unwrap();
            assert_eq!(s.status, Status::Optimal, "seed {seed}");
            let c = certify_upper_bound(&p, &s).unwrap();
            assert!(c.bound >= interior, "seed {seed}");
            assert!(c.bound >= s.primal_objective, "seed {seed}");
            assert!(c.bound - s.primal_objective < 1e-6, "seed {seed}: {} vs {}", c.bound, s.primal_objective);
        }
    }

    #[test]
    fn determinism_and_scaling() {
        let (p, _) = random_problem(42, 6, 4);
        let a = certify_upper_bound(&p, &solve(&p, &SolverOptions::default()).unwrap()).unwrap();
        let b = certify_upper_bound(&p, &solve(&p, &SolverOptions::default()).unwrap()).unwrap();
        assert_eq!(a.bound.to_bits(), b.bound.to_bits());
        let mut q = p.clone();
        for v in q.objective.iter_mut() {
            *v *= 8.0;
        }
        let c = certify_upper_bound(&q, &solve(&q, &SolverOptions::default()).unwrap()).unwrap();
        assert!((c.bound - 8.0 * a.bound).abs() <= 1e-12 * c.bound.abs(), "{} vs {}", c.bound, 8.0 * a.bound);
    }

    #[test]
    fn minimize_sense() {
        let mut p = max_eig_problem();
        p.sense = Sense::Minimize;
        let s = solve(&p, &SolverOptions::default()).unwrap();
        assert!((s.primal_objective - 1.0).abs() < 1e-7);
    }

    #[test]
    fn block_cap_enforced() {
        let p = SdpProblem::new(Sense::Maximize, vec![5], 0);
        let opts = SolverOptions { block_cap: 4, ..Default::default() };
        assert!(solve(&p, &opts).is_err());
    }

    #[test]
    fn text_round_trip() {
        let (p, _) = random_problem(3, 3, 2);
        let text = p.to_text();
        let q = SdpProblem::from_text(&text).unwrap();
        assert_eq!(p, q);
        assert!(SdpProblem::from_text("sense max\nvars 1\nblocks 1\n3 1 1 1 1.0\n").is_err());
    }
}
