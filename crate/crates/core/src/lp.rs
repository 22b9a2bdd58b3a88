//! Dense two-phase primal simplex.
//!
//! Problems are stated as `min c·x` subject to sparse equality rows,
//! sparse `≤` rows and per-variable bounds (lower bound 0 by default; either
//! bound may be infinite). [`to_standard_form`] turns that into
//! `min c'·x' s.t. A'x' = b', x' ≥ 0`; the tableau then works on rows
//! scaled to unit max-coefficient with non-negative right-hand sides and one
//! artificial column per row. Pivoting follows Bland's rule in both phases,
//! so the basis path is a deterministic function of the input.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt::Write;

use crate::error::{Error, Result};

/// Reduced-cost and pivot-element tolerance.
pub const TOL: f64 = 1e-9;

/// Entries this small are flushed to zero after a pivot.
const FLUSH: f64 = 1e-13;

/// A sparse linear row `Σ coef·x_j` compared against `rhs`.
#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub terms: Vec<(usize, f64)>,
    pub rhs: f64,
}

impl Constraint {
    fn eval(&self, x: &[f64]) -> f64 {
        self.terms.iter().map(|&(j, a)| a * x[j]).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearProgram {
    objective: Vec<f64>,
    eq: Vec<Constraint>,
    le: Vec<Constraint>,
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl LinearProgram {
    /// `num_vars` variables in `[0, ∞)` with a zero objective.
    pub fn new(num_vars: usize) -> Self {
        Self {
            objective: vec![0.0; num_vars],
            eq: Vec::new(),
            le: Vec::new(),
            lower: vec![0.0; num_vars],
            upper: vec![f64::INFINITY; num_vars],
        }
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn num_constraints(&self) -> usize {
        self.eq.len() + self.le.len()
    }

    pub fn equalities(&self) -> &[Constraint] {
        &self.eq
    }

    pub fn inequalities(&self) -> &[Constraint] {
        &self.le
    }

    pub fn objective(&self) -> &[f64] {
        &self.objective
    }

    pub fn bounds(&self, j: usize) -> (f64, f64) {
        (self.lower[j], self.upper[j])
    }

    pub fn set_cost(&mut self, j: usize, c: f64) {
        self.objective[j] = c;
    }

    /// Sets `lower ≤ x_j ≤ upper`; pass infinities for missing bounds.
    pub fn set_bounds(&mut self, j: usize, lower: f64, upper: f64) {
        self.lower[j] = lower;
        self.upper[j] = upper;
    }

    pub fn add_eq(&mut self, terms: Vec<(usize, f64)>, rhs: f64) {
        self.eq.push(Constraint { terms, rhs });
    }

    pub fn add_le(&mut self, terms: Vec<(usize, f64)>, rhs: f64) {
        self.le.push(Constraint { terms, rhs });
    }

    pub fn add_ge(&mut self, terms: Vec<(usize, f64)>, rhs: f64) {
        self.le.push(Constraint { terms: terms.into_iter().map(|(j, a)| (j, -a)).collect(), rhs: -rhs });
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.num_vars();
        if self.objective.iter().any(|c| !c.is_finite()) {
            return Err(Error::MalformedLp("non-finite objective coefficient".into()));
        }
        for (kind, rows) in [("equality", &self.eq), ("inequality", &self.le)] {
            for (i, row) in rows.iter().enumerate() {
                if !row.rhs.is_finite() || row.terms.iter().any(|&(j, a)| j >= n || !a.is_finite()) {
                    return Err(Error::MalformedLp(format!("{kind} row {i} has a bad entry")));
                }
            }
        }
        for j in 0..n {
            let (lo, hi) = (self.lower[j], self.upper[j]);
            if lo.is_nan() || hi.is_nan() || lo == f64::INFINITY || hi == f64::NEG_INFINITY || lo > hi {
                return Err(Error::MalformedLp(format!("variable {j} has bounds [{lo}, {hi}]")));
            }
        }
        Ok(())
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective.iter().zip(x).map(|(c, v)| c * v).sum()
    }

    /// Largest violation of any row or bound at `x`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let eq = self.eq.iter().map(|r| (r.eval(x) - r.rhs).abs());
        let le = self.le.iter().map(|r| (r.eval(x) - r.rhs).max(0.0));
        let bounds = x.iter().enumerate().map(|(j, &v)| (self.lower[j] - v).max(v - self.upper[j]).max(0.0));
        eq.chain(le).chain(bounds).fold(0.0, f64::max)
    }

    /// Plain-text dump: a header, the objective, one line per row, then
    /// non-default bounds. Terms are written `j:coef`.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "lp vars={} eq={} le={}", self.num_vars(), self.eq.len(), self.le.len());
        let _ = write!(out, "min");
        for (j, c) in self.objective.iter().enumerate().filter(|(_, c)| **c != 0.0) {
            let _ = write!(out, " {j}:{c}");
        }
        out.push('\n');
        for (op, rows) in [("=", &self.eq), ("<=", &self.le)] {
            for row in rows {
                for (j, a) in &row.terms {
                    let _ = write!(out, "{j}:{a} ");
                }
                let _ = writeln!(out, "{op} {}", row.rhs);
            }
        }
        for j in 0..self.num_vars() {
            if self.lower[j] != 0.0 || self.upper[j] != f64::INFINITY {
                let _ = writeln!(out, "bounds {j} {} {}", self.lower[j], self.upper[j]);
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub status: LpStatus,
    /// Primal point in the original variables (empty unless optimal).
    pub x: Vec<f64>,
    pub objective: f64,
    /// Dual values of the standard-form rows (empty unless optimal).
    pub duals: Vec<f64>,
    /// Standard-form primal point (empty unless optimal).
    pub standard_x: Vec<f64>,
    pub iterations: usize,
    /// Largest violation of the original rows and bounds by `x`.
    pub max_violation: f64,
}

impl LpSolution {
    fn non_optimal(status: LpStatus, iterations: usize) -> Self {
        Self {
            status,
            x: Vec::new(),
            objective: f64::NAN,
            duals: Vec::new(),
            standard_x: Vec::new(),
            iterations,
            max_violation: f64::NAN,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum VarMap {
    /// `x = lower + x'`
    Shift { col: usize, lower: f64 },
    /// `x = upper − x'`
    Mirror { col: usize, upper: f64 },
    /// `x = x⁺ − x⁻`
    Split { pos: usize, neg: usize },
}

/// `min c·x + offset  s.t.  A x = b, x ≥ 0` with sparse rows.
#[derive(Debug, Clone, PartialEq)]
pub struct StandardForm {
    pub rows: Vec<Vec<(usize, f64)>>,
    pub rhs: Vec<f64>,
    pub cost: Vec<f64>,
    pub offset: f64,
    map: Vec<VarMap>,
}

impl StandardForm {
    pub fn num_cols(&self) -> usize {
        self.cost.len()
    }

    fn recover(&self, xs: &[f64]) -> Vec<f64> {
        self.map
            .iter()
            .map(|m| match *m {
                VarMap::Shift { col, lower } => lower + xs[col],
                VarMap::Mirror { col, upper } => upper - xs[col],
                VarMap::Split { pos, neg } => xs[pos] - xs[neg],
            })
            .collect()
    }
}

/// Rewrites bounds and `≤` rows with shifted, mirrored or split columns and slacks.
pub fn to_standard_form(lp: &LinearProgram) -> Result<StandardForm> {
    lp.validate()?;
    let mut cost = Vec::new();
    let mut offset = 0.0;
    let mut map = Vec::with_capacity(lp.num_vars());
    let mut bound_rows = Vec::new();
    for j in 0..lp.num_vars() {
        let (lo, hi, c) = (lp.lower[j], lp.upper[j], lp.objective[j]);
        if lo.is_finite() {
            let col = cost.len();
            cost.push(c);
            offset += c * lo;
            map.push(VarMap::Shift { col, lower: lo });
            if hi.is_finite() {
                bound_rows.push((col, hi - lo));
            }
        } else if hi.is_finite() {
            let col = cost.len();
            cost.push(-c);
            offset += c * hi;
            map.push(VarMap::Mirror { col, upper: hi });
        } else {
            let pos = cost.len();
            cost.push(c);
            cost.push(-c);
            map.push(VarMap::Split { pos, neg: pos + 1 });
        }
    }
    let substitute = |row: &Constraint| -> (Vec<(usize, f64)>, f64) {
        let mut terms = Vec::with_capacity(row.terms.len());
        let mut rhs = row.rhs;
        for &(j, a) in &row.terms {
            match map[j] {
                VarMap::Shift { col, lower } => {
                    terms.push((col, a));
                    rhs -= a * lower;
                }
                VarMap::Mirror { col, upper } => {
                    terms.push((col, -a));
                    rhs -= a * upper;
                }
                VarMap::Split { pos, neg } => {
                    terms.push((pos, a));
                    terms.push((neg, -a));
                }
            }
        }
        (terms, rhs)
    };
    let mut rows = Vec::with_capacity(lp.num_constraints() + bound_rows.len());
    let mut rhs = Vec::with_capacity(rows.capacity());
    for row in &lp.eq {
        let (t, b) = substitute(row);
        rows.push(t);
        rhs.push(b);
    }
    for row in &lp.le {
        let (mut t, b) = substitute(row);
        t.push((cost.len(), 1.0));
        cost.push(0.0);
        rows.push(t);
        rhs.push(b);
    }
    for (col, width) in bound_rows {
        rows.push(vec![(col, 1.0), (cost.len(), 1.0)]);
        cost.push(0.0);
        rhs.push(width);
    }
    Ok(StandardForm { rows, rhs, cost, offset, map })
}

struct Tableau {
    /// Row-major `m × width`; the last column holds the right-hand side.
    cells: Vec<f64>,
    width: usize,
    /// Reduced costs, then minus the current objective in the last column.
    obj: Vec<f64>,
    basis: Vec<usize>,
    num_structural: usize,
    iterations: usize,
    cap: usize,
}

enum PhaseOutcome {
    Optimal,
    Unbounded,
}

impl Tableau {
    fn rows(&self) -> usize {
        self.basis.len()
    }

    #[inline]
    fn at(&self, i: usize, j: usize) -> f64 {
        self.cells[i * self.width + j]
    }

    fn rhs(&self, i: usize) -> f64 {
        self.at(i, self.width - 1)
    }

    fn pivot(&mut self, r: usize, c: usize) {
        let w = self.width;
        let inv = 1.0 / self.at(r, c);
        let (before, rest) = self.cells.split_at_mut(r * w);
        let (pivot_row, after) = rest.split_at_mut(w);
        for v in pivot_row.iter_mut() {
            *v *= inv;
        }
        pivot_row[c] = 1.0;
        let eliminate = |row: &mut [f64]| {
            let factor = row[c];
            if factor != 0.0 {
                for (v, p) in row.iter_mut().zip(pivot_row.iter()) {
                    if *p != 0.0 {
                        *v -= factor * p;
                        if v.abs() < FLUSH {
                            *v = 0.0;
                        }
                    }
                }
                row[c] = 0.0;
            }
        };
        before.chunks_mut(w).for_each(eliminate);
        after.chunks_mut(w).for_each(eliminate);
        eliminate(&mut self.obj);
        self.basis[r] = c;
        self.iterations += 1;
    }

    /// Bland's rule over columns `0..allowed`.
    fn run(&mut self, allowed: usize) -> Result<PhaseOutcome> {
        loop {
            let Some(c) = (0..allowed).find(|&j| self.obj[j] < -TOL) else {
                return Ok(PhaseOutcome::Optimal);
            };
            let mut best: Option<(usize, f64)> = None;
            for i in 0..self.rows() {
                let a = self.at(i, c);
                if a > TOL {
                    let ratio = self.rhs(i) / a;
                    best = match best {
                        None => Some((i, ratio)),
                        Some((bi, br)) => {
                            let tie = (ratio - br).abs() <= 1e-12 * (1.0 + br.abs());
                            if ratio < br && !tie || tie && self.basis[i] < self.basis[bi] {
                                Some((i, ratio))
                            } else {
                                Some((bi, br))
                            }
                        }
                    };
                }
            }
            let Some((r, _)) = best else {
                return Ok(PhaseOutcome::Unbounded);
            };
            if self.iterations >= self.cap {
                return Err(Error::IterationCap(self.cap));
            }
            self.pivot(r, c);
        }
    }
}

/// Solves `lp` to an optimal basic solution or reports infeasibility or
/// unboundedness. Fails only when the iteration cap `50·(columns + rows)` of
/// the standard form is hit.
pub fn solve(lp: &LinearProgram) -> Result<LpSolution> {
    let sf = to_standard_form(lp)?;
    let m = sf.rows.len();
    let n = sf.num_cols();
    let width = n + m + 1;
    let mut cells = vec![0.0; m * width];
    // scale[i] maps standard-form row i to tableau row i
    let mut scale = vec![1.0; m];
    for (i, row) in sf.rows.iter().enumerate() {
        let line = &mut cells[i * width..(i + 1) * width];
        for &(j, a) in row {
            line[j] += a;
        }
        let max = line[..n].iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
        let mut f = if max > 0.0 { 1.0 / max } else { 1.0 };
        if sf.rhs[i] < 0.0 {
            f = -f;
        }
        line[..n].iter_mut().for_each(|v| *v *= f);
        line[n + i] = 1.0;
        line[width - 1] = sf.rhs[i] * f;
        scale[i] = f;
    }
    let mut obj = vec![0.0; width];
    for i in 0..m {
        for j in 0..n {
            obj[j] -= cells[i * width + j];
        }
        obj[width - 1] -= cells[i * width + width - 1];
    }
    let mut tab = Tableau {
        cells,
        width,
        obj,
        basis: (n..n + m).collect(),
        num_structural: n,
        iterations: 0,
        cap: 50 * (n + m),
    };

    // phase 1: minimize the sum of artificials
    tab.run(n)?;
    let infeasibility = -tab.obj[width - 1];
    let b_norm: f64 = (0..m).map(|i| tab.rhs(i).abs()).sum::<f64>().max(1.0);
    if infeasibility > TOL * b_norm {
        return Ok(LpSolution::non_optimal(LpStatus::Infeasible, tab.iterations));
    }
    for i in 0..m {
        if tab.basis[i] >= n {
            // redundant rows keep their artificial basic at zero
            if let Some(j) = (0..n).find(|&j| tab.at(i, j).abs() > TOL) {
                tab.pivot(i, j);
            }
        }
    }

    // phase 2
    tab.obj.iter_mut().for_each(|v| *v = 0.0);
    tab.obj[..n].copy_from_slice(&sf.cost);
    for i in 0..m {
        let cb = if tab.basis[i] < n { sf.cost[tab.basis[i]] } else { 0.0 };
        if cb != 0.0 {
            for j in 0..width {
                let v = tab.at(i, j);
                if v != 0.0 {
                    tab.obj[j] -= cb * v;
                }
            }
        }
    }
    if let PhaseOutcome::Unbounded = tab.run(tab.num_structural)? {
        return Ok(LpSolution::non_optimal(LpStatus::Unbounded, tab.iterations));
    }

    let mut xs = vec![0.0; n];
    for i in 0..m {
        if tab.basis[i] < n {
            xs[tab.basis[i]] = tab.rhs(i).max(0.0);
        }
    }
    // the artificial column of row i holds B⁻¹e_i, so its reduced cost is −y_i
    let duals: Vec<f64> = (0..m).map(|i| -tab.obj[n + i] * scale[i]).collect();
    let x = sf.recover(&xs);
    let objective = lp.objective_value(&x);
    let max_violation = lp.max_violation(&x);
    Ok(LpSolution {
        status: LpStatus::Optimal,
        x,
        objective,
        duals,
        standard_x: xs,
        iterations: tab.iterations,
        max_violation,
    })
}

/// Optimal transport cost `min Σ γ_ij c_ij` over couplings of `p` and `q`;
/// `costs` is row-major `|p| × |q|`.
pub fn solve_transport(costs: &[f64], p: &[f64], q: &[f64]) -> Result<f64> {
    let (m, n) = (p.len(), q.len());
    if costs.len() != m * n {
        return Err(Error::MalformedLp(format!("cost matrix has {} entries, expected {}", costs.len(), m * n)));
    }
    let mut lp = LinearProgram::new(m * n);
    for (j, &c) in costs.iter().enumerate() {
        lp.set_cost(j, c);
    }
    for (i, &pi) in p.iter().enumerate() {
        lp.add_eq((0..n).map(|j| (i * n + j, 1.0)).collect(), pi);
    }
    for (j, &qj) in q.iter().enumerate() {
        lp.add_eq((0..m).map(|i| (i * n + j, 1.0)).collect(), qj);
    }
    let sol = solve(&lp)?;
    match sol.status {
        LpStatus::Optimal => Ok(sol.objective),
        LpStatus::Infeasible => Err(Error::Infeasible),
        LpStatus::Unbounded => Err(Error::Unbounded),
    }
}

/// Duality gap and worst dual infeasibility of an optimal solution, measured
/// on the standard form of `lp`.
pub fn dual_certificate(lp: &LinearProgram, sol: &LpSolution) -> Result<(f64, f64)> {
    let sf = to_standard_form(lp)?;
    let primal: f64 = sf.cost.iter().zip(&sol.standard_x).map(|(c, x)| c * x).sum();
    let dual: f64 = sf.rhs.iter().zip(&sol.duals).map(|(b, y)| b * y).sum();
    let mut reduced = sf.cost.clone();
    for (row, y) in sf.rows.iter().zip(&sol.duals) {
        for &(j, a) in row {
            reduced[j] -= a * y;
        }
    }
    let dual_infeasibility = reduced.iter().fold(0.0f64, |acc, r| acc.max(-r));
    Ok(((primal - dual).abs(), dual_infeasibility))
}
