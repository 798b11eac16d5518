//! Dense two-phase primal simplex.
//!
//! Models are given in natural form (min/max, `<=`/`>=`/`=` rows, variable
//! bounds) and converted to equality standard form with non-negative
//! variables. Finite upper bounds become explicit rows. Phase 1 minimises
//! the sum of artificials; phase 2 optimises the real objective with
//! artificial columns barred from entering.

use std::fmt;

pub const PIVOT_TOL: f64 = 1e-9;
const OPT_TOL: f64 = 1e-9;
const FEAS_TOL: f64 = 1e-7;
/// Consecutive degenerate pivots tolerated before switching to Bland's rule.
const DEGENERATE_STREAK: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Minimize,
    Maximize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Le,
    Ge,
    Eq,
}

impl fmt::Display for Relation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Relation::Le => "<=",
            Relation::Ge => ">=",
            Relation::Eq => "=",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub coeffs: Vec<f64>,
    pub relation: Relation,
    pub rhs: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpModel {
    pub sense: Sense,
    pub objective: Vec<f64>,
    pub constraints: Vec<Constraint>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl LpModel {
    /// New model over `objective.len()` variables bounded to `[0, +inf)`.
    pub fn new(sense: Sense, objective: Vec<f64>) -> Self {
        let n = objective.len();
        LpModel {
            sense,
            objective,
            constraints: Vec::new(),
            lower: vec![0.0; n],
            upper: vec![f64::INFINITY; n],
        }
    }

    pub fn n_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn add_constraint(&mut self, coeffs: Vec<f64>, relation: Relation, rhs: f64) -> usize {
        self.constraints.push(Constraint {
            coeffs,
            relation,
            rhs,
        });
        self.constraints.len() - 1
    }

    /// Adds a row given as sparse `(variable, coefficient)` terms.
    pub fn add_sparse(&mut self, terms: &[(usize, f64)], relation: Relation, rhs: f64) -> usize {
        let mut coeffs = vec![0.0; self.n_vars()];
        for &(v, a) in terms {
            coeffs[v] += a;
        }
        self.add_constraint(coeffs, relation, rhs)
    }

    pub fn set_bounds(&mut self, var: usize, lower: f64, upper: f64) {
        self.lower[var] = lower;
        self.upper[var] = upper;
    }

    fn validate(&self) -> Result<(), LpError> {
        let n = self.n_vars();
        if self.lower.len() != n || self.upper.len() != n {
            return Err(LpError::Malformed("bound vectors must match variable count".into()));
        }
        if self.objective.iter().any(|c| !c.is_finite()) {
            return Err(LpError::Malformed("objective coefficients must be finite".into()));
        }
        for (r, row) in self.constraints.iter().enumerate() {
            if row.coeffs.len() != n {
                return Err(LpError::Malformed(format!(
                    "row {r} has {} coefficients, expected {n}",
                    row.coeffs.len()
                )));
            }
            if row.coeffs.iter().any(|a| !a.is_finite()) || !row.rhs.is_finite() {
                return Err(LpError::Malformed(format!("row {r} has a non-finite entry")));
            }
        }
        for v in 0..n {
            let (lo, hi) = (self.lower[v], self.upper[v]);
            if lo.is_nan() || hi.is_nan() || lo == f64::INFINITY || hi == f64::NEG_INFINITY {
                return Err(LpError::Malformed(format!("variable {v} has invalid bounds")));
            }
        }
        Ok(())
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
    /// Variable values; meaningful only when optimal.
    pub values: Vec<f64>,
    pub objective: f64,
    /// One dual value per model constraint, for the model's own sense.
    pub duals: Vec<f64>,
    /// `|primal - dual|` objective mismatch of the internal standard form.
    pub duality_residual: f64,
    /// Largest violation of a row or bound by `values`, relative to row scale.
    pub primal_residual: f64,
    pub iterations: usize,
}

impl LpSolution {
    fn status_only(status: LpStatus, n: usize, m: usize, iterations: usize) -> Self {
        LpSolution {
            status,
            values: vec![0.0; n],
            objective: f64::NAN,
            duals: vec![0.0; m],
            duality_residual: 0.0,
            primal_residual: 0.0,
            iterations,
        }
    }

    pub fn is_optimal(&self) -> bool {
        self.status == LpStatus::Optimal
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LpError {
    #[error("malformed model: {0}")]
    Malformed(String),
    #[error("iteration cap reached after {iterations} pivots (best objective {best_objective:?})")]
    IterationLimit {
        iterations: usize,
        best_objective: Option<f64>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PivotRule {
    /// Lowest-index improving column, lowest-index leaving row.
    Bland,
    /// Most negative reduced cost, falling back to Bland's rule during long
    /// runs of degenerate pivots.
    DantzigBland,
}

#[derive(Debug, Clone, Copy)]
pub struct SimplexOptions {
    pub max_iterations: usize,
    pub rule: PivotRule,
}

impl Default for SimplexOptions {
    fn default() -> Self {
        SimplexOptions {
            max_iterations: 200_000,
            rule: PivotRule::DantzigBland,
        }
    }
}

pub fn solve_lp(model: &LpModel) -> Result<LpSolution, LpError> {
    solve_lp_with(model, &SimplexOptions::default())
}

/// How an original variable maps onto standard-form columns.
#[derive(Debug, Clone, Copy)]
enum VarMap {
    /// x = offset + col
    Shifted { col: usize, offset: f64 },
    /// x = offset - col
    Mirrored { col: usize, offset: f64 },
    /// x = pos - neg
    Free { pos: usize, neg: usize },
}

struct StandardForm {
    map: Vec<VarMap>,
    n_struct: usize,
    /// Rows as dense coefficients over structural columns, all with rhs >= 0.
    rows: Vec<Vec<f64>>,
    rhs: Vec<f64>,
    relation: Vec<Relation>,
    /// Original constraint index for model rows, `None` for bound rows.
    origin: Vec<Option<usize>>,
    /// Row was multiplied by -1 to make the rhs non-negative.
    flipped: Vec<bool>,
    cost: Vec<f64>,
    cost_offset: f64,
}

/// Internal minimisation costs over structural columns and the constant
/// picked up from shifted bounds.
fn standard_cost(model: &LpModel, map: &[VarMap], n_struct: usize) -> (Vec<f64>, f64) {
    let sign = match model.sense {
        Sense::Minimize => 1.0,
        Sense::Maximize => -1.0,
    };
    let mut cost = vec![0.0; n_struct];
    let mut cost_offset = 0.0;
    for (v, m) in map.iter().enumerate() {
        let c = sign * model.objective[v];
        match *m {
            VarMap::Shifted { col, offset } => {
                cost[col] += c;
                cost_offset += c * offset;
            }
            VarMap::Mirrored { col, offset } => {
                cost[col] -= c;
                cost_offset += c * offset;
            }
            VarMap::Free { pos, neg } => {
                cost[pos] += c;
                cost[neg] -= c;
            }
        }
    }
    (cost, cost_offset)
}

fn to_standard(model: &LpModel) -> StandardForm {
    let n = model.n_vars();
    let mut map = Vec::with_capacity(n);
    let mut n_struct = 0;
    let mut bound_rows: Vec<(usize, f64)> = Vec::new();
    for v in 0..n {
        let (lo, hi) = (model.lower[v], model.upper[v]);
        if lo.is_finite() {
            map.push(VarMap::Shifted {
                col: n_struct,
                offset: lo,
            });
            if hi.is_finite() {
                bound_rows.push((n_struct, hi - lo));
            }
            n_struct += 1;
        } else if hi.is_finite() {
            map.push(VarMap::Mirrored {
                col: n_struct,
                offset: hi,
            });
            n_struct += 1;
        } else {
            map.push(VarMap::Free {
                pos: n_struct,
                neg: n_struct + 1,
            });
            n_struct += 2;
        }
    }

    let (cost, cost_offset) = standard_cost(model, &map, n_struct);

    let total_rows = model.constraints.len() + bound_rows.len();
    let mut sf = StandardForm {
        map,
        n_struct,
        rows: Vec::with_capacity(total_rows),
        rhs: Vec::with_capacity(total_rows),
        relation: Vec::with_capacity(total_rows),
        origin: Vec::with_capacity(total_rows),
        flipped: Vec::with_capacity(total_rows),
        cost,
        cost_offset,
    };

    for (r, con) in model.constraints.iter().enumerate() {
        let mut row = vec![0.0; n_struct];
        let mut rhs = con.rhs;
        for (v, &a) in con.coeffs.iter().enumerate() {
            if a == 0.0 {
                continue;
            }
            match sf.map[v] {
                VarMap::Shifted { col, offset } => {
                    row[col] += a;
                    rhs -= a * offset;
                }
                VarMap::Mirrored { col, offset } => {
                    row[col] -= a;
                    rhs -= a * offset;
                }
                VarMap::Free { pos, neg } => {
                    row[pos] += a;
                    row[neg] -= a;
                }
            }
        }
        sf.push_row(row, con.relation, rhs, Some(r));
    }
    for (col, width) in bound_rows {
        let mut row = vec![0.0; n_struct];
        row[col] = 1.0;
        sf.push_row(row, Relation::Le, width, None);
    }
    sf
}

impl StandardForm {
    fn push_row(&mut self, mut row: Vec<f64>, mut relation: Relation, mut rhs: f64, origin: Option<usize>) {
        let flipped = rhs < 0.0;
        if flipped {
            row.iter_mut().for_each(|a| *a = -*a);
            rhs = -rhs;
            relation = match relation {
                Relation::Le => Relation::Ge,
                Relation::Ge => Relation::Le,
                Relation::Eq => Relation::Eq,
            };
        }
        self.rows.push(row);
        self.rhs.push(rhs);
        self.relation.push(relation);
        self.origin.push(origin);
        self.flipped.push(flipped);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ColKind {
    Structural,
    Slack,
    Artificial,
}

struct Tableau {
    m: usize,
    width: usize,
    /// Row-major `m x (width + 1)`; the last column is the rhs.
    a: Vec<f64>,
    basis: Vec<usize>,
    kind: Vec<ColKind>,
    /// Column holding the unit vector of each row in the initial basis.
    unit_col: Vec<usize>,
    reduced: Vec<f64>,
    objective: f64,
    iterations: usize,
}

enum PhaseOutcome {
    Optimal,
    Unbounded,
}

impl Tableau {
    fn build(sf: &StandardForm) -> Tableau {
        let m = sf.rows.len();
        let n_slack = sf
            .relation
            .iter()
            .filter(|r| matches!(r, Relation::Le | Relation::Ge))
            .count();
        let n_art = sf
            .relation
            .iter()
            .filter(|r| matches!(r, Relation::Ge | Relation::Eq))
            .count();
        let width = sf.n_struct + n_slack + n_art;
        let stride = width + 1;
        let mut a = vec![0.0; m * stride];
        let mut kind = vec![ColKind::Structural; sf.n_struct];
        kind.extend(std::iter::repeat_n(ColKind::Slack, n_slack));
        kind.extend(std::iter::repeat_n(ColKind::Artificial, n_art));
        let mut basis = vec![0; m];
        let mut unit_col = vec![0; m];
        let mut next_slack = sf.n_struct;
        let mut next_art = sf.n_struct + n_slack;
        for r in 0..m {
            let row = &mut a[r * stride..(r + 1) * stride];
            row[..sf.n_struct].copy_from_slice(&sf.rows[r]);
            row[width] = sf.rhs[r];
            match sf.relation[r] {
                Relation::Le => {
                    row[next_slack] = 1.0;
                    basis[r] = next_slack;
                    unit_col[r] = next_slack;
                    next_slack += 1;
                }
                Relation::Ge => {
                    row[next_slack] = -1.0;
                    next_slack += 1;
                    row[next_art] = 1.0;
                    basis[r] = next_art;
                    unit_col[r] = next_art;
                    next_art += 1;
                }
                Relation::Eq => {
                    row[next_art] = 1.0;
                    basis[r] = next_art;
                    unit_col[r] = next_art;
                    next_art += 1;
                }
            }
        }
        Tableau {
            m,
            width,
            a,
            basis,
            kind,
            unit_col,
            reduced: vec![0.0; width],
            objective: 0.0,
            iterations: 0,
        }
    }

    fn stride(&self) -> usize {
        self.width + 1
    }

    fn rhs(&self, r: usize) -> f64 {
        self.a[r * self.stride() + self.width]
    }

    /// Reduced costs and objective value for column costs `cost`.
    fn price(&mut self, cost: &[f64]) {
        let stride = self.stride();
        self.reduced.copy_from_slice(cost);
        self.objective = 0.0;
        for r in 0..self.m {
            let cb = cost[self.basis[r]];
            if cb == 0.0 {
                continue;
            }
            let row = &self.a[r * stride..(r + 1) * stride];
            for (d, &x) in self.reduced.iter_mut().zip(&row[..self.width]) {
                *d -= cb * x;
            }
            self.objective += cb * row[self.width];
        }
    }

    fn pivot(&mut self, pr: usize, pc: usize) {
        let stride = self.stride();
        let (before, rest) = self.a.split_at_mut(pr * stride);
        let (prow, after) = rest.split_at_mut(stride);
        let inv = 1.0 / prow[pc];
        prow.iter_mut().for_each(|x| *x *= inv);
        prow[pc] = 1.0;
        let eliminate = |row: &mut [f64]| {
            let f = row[pc];
            if f != 0.0 {
                for (x, &p) in row.iter_mut().zip(prow.iter()) {
                    *x -= f * p;
                }
                row[pc] = 0.0;
            }
        };
        before.chunks_exact_mut(stride).for_each(eliminate);
        after.chunks_exact_mut(stride).for_each(eliminate);
        let f = self.reduced[pc];
        if f != 0.0 {
            for (d, &p) in self.reduced.iter_mut().zip(prow[..self.width].iter()) {
                *d -= f * p;
            }
            self.reduced[pc] = 0.0;
            self.objective += f * prow[self.width];
        }
        self.basis[pr] = pc;
        self.iterations += 1;
    }

    fn choose_entering(&self, allow_art: bool, bland: bool) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for (j, &d) in self.reduced.iter().enumerate() {
            if d >= -OPT_TOL || (!allow_art && self.kind[j] == ColKind::Artificial) {
                continue;
            }
            if bland {
                return Some(j);
            }
            if best.is_none_or(|(_, bd)| d < bd) {
                best = Some((j, d));
            }
        }
        best.map(|(j, _)| j)
    }

    fn choose_leaving(&self, pc: usize, bland: bool) -> Option<usize> {
        let stride = self.stride();
        let mut best: Option<(usize, f64, f64)> = None;
        for r in 0..self.m {
            let a = self.a[r * stride + pc];
            if a <= PIVOT_TOL {
                continue;
            }
            let ratio = self.rhs(r).max(0.0) / a;
            match best {
                None => best = Some((r, ratio, a)),
                Some((br, bratio, ba)) => {
                    let tie = (ratio - bratio).abs() <= 1e-12 * (1.0 + bratio.abs());
                    let better = if tie {
                        if bland {
                            self.basis[r] < self.basis[br]
                        } else {
                            a > ba
                        }
                    } else {
                        ratio < bratio
                    };
                    if better {
                        best = Some((r, ratio, a));
                    }
                }
            }
        }
        best.map(|(r, _, _)| r)
    }

    fn run(&mut self, allow_art: bool, opts: &SimplexOptions) -> Result<PhaseOutcome, LpError> {
        let mut streak = 0;
        loop {
            let bland = opts.rule == PivotRule::Bland || streak >= DEGENERATE_STREAK;
            let Some(pc) = self.choose_entering(allow_art, bland) else {
                return Ok(PhaseOutcome::Optimal);
            };
            let Some(pr) = self.choose_leaving(pc, bland) else {
                return Ok(PhaseOutcome::Unbounded);
            };
            if self.iterations >= opts.max_iterations {
                return Err(LpError::IterationLimit {
                    iterations: self.iterations,
                    best_objective: None,
                });
            }
            let degenerate = self.rhs(pr) <= PIVOT_TOL;
            self.pivot(pr, pc);
            streak = if degenerate { streak + 1 } else { 0 };
        }
    }

    /// Pivots zero-level artificials out of the basis where possible.
    fn expel_artificials(&mut self) {
        let stride = self.stride();
        for r in 0..self.m {
            if self.kind[self.basis[r]] != ColKind::Artificial {
                continue;
            }
            let row = &self.a[r * stride..(r + 1) * stride];
            let col = (0..self.width)
                .filter(|&j| self.kind[j] != ColKind::Artificial)
                .max_by(|&x, &y| row[x].abs().total_cmp(&row[y].abs()))
                .filter(|&j| row[j].abs() > PIVOT_TOL);
            if let Some(j) = col {
                self.pivot(r, j);
            }
        }
    }

    fn column_values(&self) -> Vec<f64> {
        let mut x = vec![0.0; self.width];
        for r in 0..self.m {
            x[self.basis[r]] = self.rhs(r);
        }
        x
    }
}

pub fn solve_lp_with(model: &LpModel, opts: &SimplexOptions) -> Result<LpSolution, LpError> {
    let mut warm = WarmLp::with_options(model.clone(), *opts)?;
    warm.solve()
}

/// A model whose phase-1 basis is kept, so that re-solving after an
/// objective change resumes phase 2 from the previous optimal basis.
pub struct WarmLp {
    model: LpModel,
    sf: StandardForm,
    /// `None` when phase 1 proved the rows infeasible.
    tableau: Option<Tableau>,
    opts: SimplexOptions,
    phase1_iterations: usize,
    warm: bool,
}

impl WarmLp {
    pub fn new(model: LpModel) -> Result<Self, LpError> {
        Self::with_options(model, SimplexOptions::default())
    }

    /// Validates the model and runs phase 1.
    pub fn with_options(model: LpModel, opts: SimplexOptions) -> Result<Self, LpError> {
        model.validate()?;
        let sf = to_standard(&model);
        let mut t = Tableau::build(&sf);
        let scale = 1.0 + sf.rhs.iter().fold(0.0f64, |acc, b| acc.max(b.abs()));
        let phase1_cost: Vec<f64> = t
            .kind
            .iter()
            .map(|k| if *k == ColKind::Artificial { 1.0 } else { 0.0 })
            .collect();
        let mut feasible = true;
        if phase1_cost.iter().any(|&c| c > 0.0) {
            t.price(&phase1_cost);
            t.run(true, &opts)?;
            if t.objective > FEAS_TOL * scale {
                feasible = false;
            } else {
                t.expel_artificials();
            }
        }
        let phase1_iterations = t.iterations;
        Ok(WarmLp {
            model,
            sf,
            tableau: feasible.then_some(t),
            opts,
            phase1_iterations,
            warm: false,
        })
    }

    pub fn model(&self) -> &LpModel {
        &self.model
    }

    /// Replaces the objective; rows and bounds are unchanged, so the
    /// current basis stays primal feasible.
    pub fn set_objective(&mut self, objective: Vec<f64>) {
        assert_eq!(objective.len(), self.model.n_vars(), "objective length mismatch");
        self.model.objective = objective;
        let (cost, offset) = standard_cost(&self.model, &self.sf.map, self.sf.n_struct);
        self.sf.cost = cost;
        self.sf.cost_offset = offset;
    }

    /// Runs phase 2 from the current basis. The iteration cap and the
    /// reported count cover both phases on the first call and only the
    /// new pivots on later calls.
    pub fn solve(&mut self) -> Result<LpSolution, LpError> {
        let model = &self.model;
        let sf = &self.sf;
        let n = model.n_vars();
        let n_rows = model.constraints.len();
        let Some(t) = self.tableau.as_mut() else {
            return Ok(LpSolution::status_only(LpStatus::Infeasible, n, n_rows, self.phase1_iterations));
        };
        if self.warm {
            t.iterations = 0;
        }
        self.warm = true;
        let mut cost = sf.cost.clone();
        cost.resize(t.width, 0.0);
        t.price(&cost);
        match t.run(false, &self.opts) {
            Ok(PhaseOutcome::Optimal) => {}
            Ok(PhaseOutcome::Unbounded) => {
                return Ok(LpSolution::status_only(LpStatus::Unbounded, n, n_rows, t.iterations));
            }
            Err(LpError::IterationLimit { iterations, .. }) => {
                let sign = if model.sense == Sense::Maximize { -1.0 } else { 1.0 };
                return Err(LpError::IterationLimit {
                    iterations,
                    best_objective: Some(sign * (t.objective + sf.cost_offset)),
                });
            }
            Err(e) => return Err(e),
        }

        let cols = t.column_values();
        let values: Vec<f64> = sf
            .map
            .iter()
            .map(|m| match *m {
                VarMap::Shifted { col, offset } => offset + cols[col],
                VarMap::Mirrored { col, offset } => offset - cols[col],
                VarMap::Free { pos, neg } => cols[pos] - cols[neg],
            })
            .collect();

        // Row duals of the internal minimisation: y_r = -(reduced cost of the
        // row's initial unit column), whose own cost is zero.
        let y: Vec<f64> = t.unit_col.iter().map(|&c| -t.reduced[c]).collect();
        let primal_internal: f64 = sf.cost.iter().zip(&cols).map(|(c, x)| c * x).sum();
        let dual_internal: f64 = y.iter().zip(&sf.rhs).map(|(y, b)| y * b).sum();
        let duality_residual = (primal_internal - dual_internal).abs();

        let sense_sign = if model.sense == Sense::Maximize { -1.0 } else { 1.0 };
        let mut duals = vec![0.0; n_rows];
        for (r, origin) in sf.origin.iter().enumerate() {
            if let Some(orig) = origin {
                let flip = if sf.flipped[r] { -1.0 } else { 1.0 };
                duals[*orig] = sense_sign * flip * y[r];
            }
        }

        let objective: f64 = model.objective.iter().zip(&values).map(|(c, x)| c * x).sum();
        let primal_residual = primal_residual(model, &values);
        Ok(LpSolution {
            status: LpStatus::Optimal,
            values,
            objective,
            duals,
            duality_residual,
            primal_residual,
            iterations: t.iterations,
        })
    }
}

/// Largest scaled violation of any row or bound.
pub fn primal_residual(model: &LpModel, x: &[f64]) -> f64 {
    let mut worst = 0.0f64;
    for con in &model.constraints {
        let lhs: f64 = con.coeffs.iter().zip(x).map(|(a, v)| a * v).sum();
        let scale = 1.0 + con.rhs.abs() + con.coeffs.iter().fold(0.0f64, |m, a| m.max(a.abs()));
        let viol = match con.relation {
            Relation::Le => (lhs - con.rhs).max(0.0),
            Relation::Ge => (con.rhs - lhs).max(0.0),
            Relation::Eq => (lhs - con.rhs).abs(),
        };
        worst = worst.max(viol / scale);
    }
    for (v, &xv) in x.iter().enumerate() {
        let lo = model.lower[v];
        let hi = model.upper[v];
        let scale = 1.0 + xv.abs();
        if lo.is_finite() {
            worst = worst.max((lo - xv).max(0.0) / scale);
        }
        if hi.is_finite() {
            worst = worst.max((xv - hi).max(0.0) / scale);
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;

    fn assert_close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} vs {b}");
    }

    #[test]
    fn single_upper_bound_row() {
        let mut lp = LpModel::new(Sense::Maximize, vec![1.0]);
        lp.add_constraint(vec![1.0], Relation::Le, 3.0);
        let sol = solve_lp(&lp).unwrap();
        assert_eq!(sol.status, LpStatus::Optimal);
        assert_close(sol.values[0], 3.0, 1e-12);
        assert_close(sol.objective, 3.0, 1e-12);
        assert_close(sol.duals[0], 1.0, 1e-12);
    }

    #[test]
    fn degenerate_tie() {
        let mut lp = LpModel::new(Sense::Maximize, vec![1.0, 1.0]);
        lp.add_constraint(vec![1.0, 1.0], Relation::Le, 1.0);
        let sol = solve_lp(&lp).unwrap();
        assert_close(sol.objective, 1.0, 1e-12);
        assert!(sol.duality_residual <= 1e-9);
    }

    #[test]
    fn infeasible_and_unbounded() {
        let mut lp = LpModel::new(Sense::Minimize, vec![1.0]);
        lp.add_constraint(vec![1.0], Relation::Ge, 2.0);
        lp.add_constraint(vec![1.0], Relation::Le, 1.0);
        assert_eq!(solve_lp(&lp).unwrap().status, LpStatus::Infeasible);

        let mut lp = LpModel::new(Sense::Maximize, vec![1.0, -1.0]);
        lp.add_constraint(vec![1.0, -1.0], Relation::Ge, -1.0);
        assert_eq!(solve_lp(&lp).unwrap().status, LpStatus::Unbounded);
    }

    #[test]
    fn equality_and_ge_rows_with_bounds() {
        // min 2x + 3y  s.t. x + y = 4, x - y >= -2, 1 <= x <= 3, y free
        let mut lp = LpModel::new(Sense::Minimize, vec![2.0, 3.0]);
        lp.add_constraint(vec![1.0, 1.0], Relation::Eq, 4.0);
        lp.add_constraint(vec![1.0, -1.0], Relation::Ge, -2.0);
        lp.set_bounds(0, 1.0, 3.0);
        lp.set_bounds(1, f64::NEG_INFINITY, f64::INFINITY);
        let sol = solve_lp(&lp).unwrap();
        assert_eq!(sol.status, LpStatus::Optimal);
        assert_close(sol.values[0], 3.0, 1e-9);
        assert_close(sol.values[1], 1.0, 1e-9);
        assert_close(sol.objective, 9.0, 1e-9);
        assert!(sol.primal_residual <= 1e-9);
    }

    #[test]
    fn negative_lower_and_mirrored_bounds() {
        // max x + y with x in [-5, -1], y <= 2 (no lower bound), x + y >= -10
        let mut lp = LpModel::new(Sense::Maximize, vec![1.0, 1.0]);
        lp.add_constraint(vec![1.0, 1.0], Relation::Ge, -10.0);
        lp.set_bounds(0, -5.0, -1.0);
        lp.set_bounds(1, f64::NEG_INFINITY, 2.0);
        let sol = solve_lp(&lp).unwrap();
        assert_close(sol.objective, 1.0, 1e-9);
    }

    #[test]
    fn redundant_equalities() {
        let mut lp = LpModel::new(Sense::Maximize, vec![1.0, 2.0]);
        lp.add_constraint(vec![1.0, 1.0], Relation::Eq, 2.0);
        lp.add_constraint(vec![2.0, 2.0], Relation::Eq, 4.0);
        let sol = solve_lp(&lp).unwrap();
        assert_close(sol.objective, 4.0, 1e-9);
        assert!(sol.duality_residual <= 1e-9);
    }

    #[test]
    fn pure_bland_agrees_with_default() {
        let mut lp = LpModel::new(Sense::Maximize, vec![3.0, 2.0, 4.0]);
        lp.add_constraint(vec![1.0, 1.0, 2.0], Relation::Le, 4.0);
        lp.add_constraint(vec![2.0, 0.0, 3.0], Relation::Le, 5.0);
        lp.add_constraint(vec![2.0, 1.0, 3.0], Relation::Le, 7.0);
        let a = solve_lp(&lp).unwrap();
        let b = solve_lp_with(
            &lp,
            &SimplexOptions {
                rule: PivotRule::Bland,
                ..Default::default()
            },
        )
        .unwrap();
        assert_close(a.objective, b.objective, 1e-9);
    }

    #[test]
    fn iteration_cap_is_reported() {
        let mut lp = LpModel::new(Sense::Maximize, vec![1.0, 1.0]);
        lp.add_constraint(vec![1.0, 2.0], Relation::Le, 4.0);
        lp.add_constraint(vec![3.0, 1.0], Relation::Le, 6.0);
        let err = solve_lp_with(
            &lp,
            &SimplexOptions {
                max_iterations: 1,
                ..Default::default()
            },
        )
        .unwrap_err();
        assert!(matches!(err, LpError::IterationLimit { iterations: 1, .. }));
    }

    #[test]
    fn malformed_rows_are_rejected() {
        let mut lp = LpModel::new(Sense::Maximize, vec![1.0, 1.0]);
        lp.add_constraint(vec![1.0], Relation::Le, 4.0);
        assert!(matches!(solve_lp(&lp), Err(LpError::Malformed(_))));
    }

    #[test]
    fn warm_resolve_matches_cold_solve() {
        let mut lp = LpModel::new(Sense::Maximize, vec![1.0, 1.0, 0.5]);
        lp.add_constraint(vec![1.0, 2.0, 1.0], Relation::Le, 4.0);
        lp.add_constraint(vec![3.0, 1.0, 1.0], Relation::Le, 6.0);
        lp.add_constraint(vec![1.0, 1.0, 1.0], Relation::Ge, 1.0);
        let mut warm = WarmLp::new(lp.clone()).unwrap();
        assert_close(warm.solve().unwrap().objective, solve_lp(&lp).unwrap().objective, 1e-9);
        for obj in [vec![2.0, -1.0, 0.0], vec![0.0, 0.0, 3.0], vec![-1.0, -1.0, -1.0]] {
            lp.objective = obj.clone();
            warm.set_objective(obj);
            let hot = warm.solve().unwrap();
            let cold = solve_lp(&lp).unwrap();
            assert_close(hot.objective, cold.objective, 1e-9);
            assert!(hot.duality_residual < 1e-9);
        }
    }
}
