//! Dense two-phase primal simplex over exact rationals.
//!
//! Variables are non-negative. Pivoting follows Bland's rule (lowest eligible
//! column enters, ties in the ratio test go to the lowest basic index), so the
//! method terminates and the result is a deterministic function of the input.
//!
//! Dual values are reported as shadow prices: `dual[i]` is the rate at which the
//! optimal objective moves with the right-hand side of constraint `i`, in the
//! sense of the original problem. With that convention a minimization has
//! `dual ≥ 0` on `≥` rows, `dual ≤ 0` on `≤` rows, and `Aᵀ dual ≤ c`; a
//! maximization flips every inequality.

use num_traits::{One, Signed, Zero};
use thiserror::Error;

use crate::rational::Rational;

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

impl Relation {
    fn flipped(self) -> Self {
        match self {
            Relation::Le => Relation::Ge,
            Relation::Ge => Relation::Le,
            Relation::Eq => Relation::Eq,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub coefficients: Vec<Rational>,
    pub relation: Relation,
    pub rhs: Rational,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearProgram {
    pub sense: Sense,
    pub objective: Vec<Rational>,
    pub constraints: Vec<Constraint>,
}

impl LinearProgram {
    pub fn new(sense: Sense, objective: Vec<Rational>) -> Self {
        Self {
            sense,
            objective,
            constraints: Vec::new(),
        }
    }

    pub fn variable_count(&self) -> usize {
        self.objective.len()
    }

    pub fn add_constraint(
        &mut self,
        coefficients: Vec<Rational>,
        relation: Relation,
        rhs: Rational,
    ) {
        self.constraints.push(Constraint {
            coefficients,
            relation,
            rhs,
        });
    }

    pub fn with(mut self, coefficients: Vec<Rational>, relation: Relation, rhs: Rational) -> Self {
        self.add_constraint(coefficients, relation, rhs);
        self
    }

    fn check_dimensions(&self) -> Result<(), LpError> {
        let width = self.objective.len();
        for (row, c) in self.constraints.iter().enumerate() {
            if c.coefficients.len() != width {
                return Err(LpError::DimensionMismatch {
                    row,
                    expected: width,
                    found: c.coefficients.len(),
                });
            }
        }
        Ok(())
    }

    /// `Σ_j a_ij x_j` for row `i`.
    pub fn row_activity(&self, row: usize, x: &[Rational]) -> Rational {
        dot(&self.constraints[row].coefficients, x)
    }

    pub fn objective_value(&self, x: &[Rational]) -> Rational {
        dot(&self.objective, x)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LpError {
    #[error("constraint {row} has {found} coefficients, expected {expected}")]
    DimensionMismatch {
        row: usize,
        expected: usize,
        found: usize,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub primal: Vec<Rational>,
    pub dual: Vec<Rational>,
    pub objective: Rational,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LpOutcome {
    Optimal(LpSolution),
    Infeasible,
    Unbounded,
}

impl LpOutcome {
    pub fn optimal(&self) -> Option<&LpSolution> {
        match self {
            LpOutcome::Optimal(s) => Some(s),
            _ => None,
        }
    }

    pub fn is_infeasible(&self) -> bool {
        matches!(self, LpOutcome::Infeasible)
    }
}

fn dot(a: &[Rational], b: &[Rational]) -> Rational {
    a.iter()
        .zip(b)
        .filter(|(x, y)| !x.is_zero() && !y.is_zero())
        .fold(Rational::zero(), |acc, (x, y)| acc + x * y)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ColumnKind {
    Structural,
    Slack,
    Artificial,
}

struct Tableau {
    rows: Vec<Vec<Rational>>,
    /// Reduced costs; the last entry holds minus the current objective.
    cost: Vec<Rational>,
    basis: Vec<usize>,
    kinds: Vec<ColumnKind>,
    /// For each row, the column that formed the initial identity (slack or artificial).
    unit_column: Vec<usize>,
}

enum Phase {
    Optimal,
    Unbounded,
}

impl Tableau {
    fn width(&self) -> usize {
        self.kinds.len()
    }

    fn rhs(&self, row: usize) -> &Rational {
        &self.rows[row][self.width()]
    }

    fn pivot(&mut self, row: usize, col: usize) {
        let pivot = self.rows[row][col].clone();
        if !pivot.is_one() {
            let inv = pivot.recip();
            for v in self.rows[row].iter_mut() {
                if !v.is_zero() {
                    *v *= &inv;
                }
            }
        }
        let pivot_row = std::mem::take(&mut self.rows[row]);
        let nonzero: Vec<usize> = (0..pivot_row.len())
            .filter(|&k| !pivot_row[k].is_zero())
            .collect();
        let eliminate = |target: &mut Vec<Rational>| {
            let factor = target[col].clone();
            if factor.is_zero() {
                return;
            }
            for &k in &nonzero {
                target[k] -= &factor * &pivot_row[k];
            }
        };
        for (i, r) in self.rows.iter_mut().enumerate() {
            if i != row {
                eliminate(r);
            }
        }
        eliminate(&mut self.cost);
        self.rows[row] = pivot_row;
        self.basis[row] = col;
    }

    /// Rebuilds the reduced-cost row for column costs `c`.
    fn price(&mut self, c: &[Rational]) {
        let w = self.width();
        let mut cost: Vec<Rational> = c.to_vec();
        cost.push(Rational::zero());
        for (i, &b) in self.basis.iter().enumerate() {
            let cb = &c[b];
            if cb.is_zero() {
                continue;
            }
            for k in 0..=w {
                let a = &self.rows[i][k];
                if !a.is_zero() {
                    cost[k] -= cb * a;
                }
            }
        }
        self.cost = cost;
    }

    fn run(&mut self, allow: impl Fn(ColumnKind) -> bool) -> Phase {
        loop {
            let entering =
                (0..self.width()).find(|&j| allow(self.kinds[j]) && self.cost[j].is_negative());
            let Some(col) = entering else {
                return Phase::Optimal;
            };
            let mut leaving: Option<(usize, Rational)> = None;
            for i in 0..self.rows.len() {
                let a = &self.rows[i][col];
                if !a.is_positive() {
                    continue;
                }
                let ratio = self.rhs(i) / a;
                let better = match &leaving {
                    None => true,
                    Some((best_row, best)) => {
                        ratio < *best || (ratio == *best && self.basis[i] < self.basis[*best_row])
                    }
                };
                if better {
                    leaving = Some((i, ratio));
                }
            }
            match leaving {
                Some((row, _)) => self.pivot(row, col),
                None => return Phase::Unbounded,
            }
        }
    }
}

/// Solves `lp` exactly.
pub fn solve_lp(lp: &LinearProgram) -> Result<LpOutcome, LpError> {
    lp.check_dimensions()?;
    let n = lp.variable_count();
    let m = lp.constraints.len();

    // Standard form: non-negative right-hand sides.
    let mut negated = vec![false; m];
    let mut relations = Vec::with_capacity(m);
    for (i, c) in lp.constraints.iter().enumerate() {
        if c.rhs.is_negative() {
            negated[i] = true;
            relations.push(c.relation.flipped());
        } else {
            relations.push(c.relation);
        }
    }

    let mut kinds = vec![ColumnKind::Structural; n];
    let mut slack_of = vec![None; m];
    for (i, rel) in relations.iter().enumerate() {
        if *rel != Relation::Eq {
            slack_of[i] = Some(kinds.len());
            kinds.push(ColumnKind::Slack);
        }
    }
    let mut artificial_of = vec![None; m];
    for (i, rel) in relations.iter().enumerate() {
        if *rel != Relation::Le {
            artificial_of[i] = Some(kinds.len());
            kinds.push(ColumnKind::Artificial);
        }
    }
    let width = kinds.len();

    let mut rows = Vec::with_capacity(m);
    let mut basis = Vec::with_capacity(m);
    let mut unit_column = Vec::with_capacity(m);
    for (i, c) in lp.constraints.iter().enumerate() {
        let sign = if negated[i] {
            -Rational::one()
        } else {
            Rational::one()
        };
        let mut row = vec![Rational::zero(); width + 1];
        for (j, a) in c.coefficients.iter().enumerate() {
            row[j] = a * &sign;
        }
        row[width] = &c.rhs * &sign;
        match relations[i] {
            Relation::Le => {
                let s = slack_of[i].unwrap();
                row[s] = Rational::one();
                basis.push(s);
                unit_column.push(s);
            }
            Relation::Ge => {
                row[slack_of[i].unwrap()] = -Rational::one();
                let a = artificial_of[i].unwrap();
                row[a] = Rational::one();
                basis.push(a);
                unit_column.push(a);
            }
            Relation::Eq => {
                let a = artificial_of[i].unwrap();
                row[a] = Rational::one();
                basis.push(a);
                unit_column.push(a);
            }
        }
        rows.push(row);
    }

    let mut tab = Tableau {
        rows,
        cost: Vec::new(),
        basis,
        kinds,
        unit_column,
    };

    // Phase 1: minimize the sum of artificials.
    let phase1_costs: Vec<Rational> = tab
        .kinds
        .iter()
        .map(|k| match k {
            ColumnKind::Artificial => Rational::one(),
            _ => Rational::zero(),
        })
        .collect();
    tab.price(&phase1_costs);
    tab.run(|_| true);
    if !tab.cost[width].is_zero() {
        return Ok(LpOutcome::Infeasible);
    }

    // Drive zero-level artificials out of the basis where possible; rows where
    // that fails are redundant and keep their artificial at zero.
    for i in 0..m {
        if tab.kinds[tab.basis[i]] != ColumnKind::Artificial {
            continue;
        }
        if let Some(j) = (0..width)
            .find(|&j| tab.kinds[j] != ColumnKind::Artificial && !tab.rows[i][j].is_zero())
        {
            tab.pivot(i, j);
        }
    }

    // Phase 2 on the (sign-adjusted) real objective.
    let flip = lp.sense == Sense::Maximize;
    let mut phase2_costs = vec![Rational::zero(); width];
    for (j, c) in lp.objective.iter().enumerate() {
        phase2_costs[j] = if flip { -c } else { c.clone() };
    }
    tab.price(&phase2_costs);
    if let Phase::Unbounded = tab.run(|k| k != ColumnKind::Artificial) {
        return Ok(LpOutcome::Unbounded);
    }

    let mut primal = vec![Rational::zero(); n];
    for (i, &b) in tab.basis.iter().enumerate() {
        if b < n {
            primal[b] = tab.rhs(i).clone();
        }
    }
    // The reduced cost of the initial unit column of row i is -y_i.
    let dual = (0..m)
        .map(|i| {
            let mut y = -tab.cost[tab.unit_column[i]].clone();
            if negated[i] {
                y = -y;
            }
            if flip {
                y = -y;
            }
            y
        })
        .collect();
    let objective = lp.objective_value(&primal);
    Ok(LpOutcome::Optimal(LpSolution {
        primal,
        dual,
        objective,
    }))
}

/// Independently checks that `solution` is optimal for `lp`: primal
/// feasibility, dual sign and reduced-cost feasibility, and equal objectives.
/// Returns a description of the first failure.
pub fn verify_optimal(lp: &LinearProgram, solution: &LpSolution) -> Result<(), String> {
    lp.check_dimensions().map_err(|e| e.to_string())?;
    let n = lp.variable_count();
    let m = lp.constraints.len();
    if solution.primal.len() != n || solution.dual.len() != m {
        return Err("solution has the wrong shape".into());
    }
    if let Some(j) = solution.primal.iter().position(|x| x.is_negative()) {
        return Err(format!("x[{j}] is negative"));
    }
    for (i, c) in lp.constraints.iter().enumerate() {
        let lhs = lp.row_activity(i, &solution.primal);
        let ok = match c.relation {
            Relation::Le => lhs <= c.rhs,
            Relation::Ge => lhs >= c.rhs,
            Relation::Eq => lhs == c.rhs,
        };
        if !ok {
            return Err(format!("row {i} violated: {lhs} vs {}", c.rhs));
        }
    }
    let minimize = lp.sense == Sense::Minimize;
    for (i, c) in lp.constraints.iter().enumerate() {
        let y = &solution.dual[i];
        let ok = match (c.relation, minimize) {
            (Relation::Eq, _) => true,
            (Relation::Ge, true) | (Relation::Le, false) => !y.is_negative(),
            (Relation::Le, true) | (Relation::Ge, false) => !y.is_positive(),
        };
        if !ok {
            return Err(format!("dual {i} has the wrong sign: {y}"));
        }
    }
    for j in 0..n {
        let aty = lp
            .constraints
            .iter()
            .zip(&solution.dual)
            .fold(Rational::zero(), |acc, (c, y)| acc + &c.coefficients[j] * y);
        let ok = if minimize {
            aty <= lp.objective[j]
        } else {
            aty >= lp.objective[j]
        };
        if !ok {
            return Err(format!("dual constraint for column {j} violated"));
        }
    }
    let primal_obj = lp.objective_value(&solution.primal);
    let dual_obj = lp
        .constraints
        .iter()
        .zip(&solution.dual)
        .fold(Rational::zero(), |acc, (c, y)| acc + &c.rhs * y);
    if primal_obj != dual_obj || primal_obj != solution.objective {
        return Err(format!(
            "objectives differ: primal {primal_obj}, dual {dual_obj}, reported {}",
            solution.objective
        ));
    }
    Ok(())
}
