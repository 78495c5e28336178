//! Dense two-phase simplex over exact rationals.
//!
//! Every variable is nonnegative. Entering and leaving variables follow
//! Bland's rule (lowest index first), which makes the pivot sequence a pure
//! function of the input and rules out cycling on the highly degenerate
//! polytopes this crate feeds it.

use std::fmt::Write as _;

use num_traits::{One, Signed, Zero};
use thiserror::Error;

use crate::rational::{self, Rational};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LpError {
    #[error("linear program is infeasible")]
    Infeasible,
    #[error("linear program is unbounded")]
    Unbounded,
    #[error("variable index {index} out of range for {num_vars} variables")]
    BadVariable { index: usize, num_vars: usize },
    #[error("problem too large: {0}")]
    TooLarge(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Maximize,
    Minimize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Le,
    Ge,
    Eq,
}

#[derive(Debug, Clone)]
pub struct Constraint {
    pub terms: Vec<(usize, Rational)>,
    pub relation: Relation,
    pub rhs: Rational,
}

/// `optimize c.x subject to constraints, x >= 0`.
#[derive(Debug, Clone)]
pub struct LinearProgram {
    num_vars: usize,
    sense: Sense,
    objective: Vec<Rational>,
    constraints: Vec<Constraint>,
}

/// One simplex pivot. Variables are numbered structural first, then slack or
/// surplus, then artificial.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PivotRecord {
    pub phase: u8,
    pub iteration: usize,
    pub entering: usize,
    pub leaving: usize,
    /// Phase objective after the pivot (phase 1 maximizes minus the sum of
    /// artificials).
    pub objective: Rational,
}

#[derive(Debug, Clone)]
pub struct LpSolution {
    pub value: Rational,
    pub x: Vec<Rational>,
    pub pivots: Vec<PivotRecord>,
}

impl LpSolution {
    /// Pivot log as CSV: `phase,iteration,entering,leaving,objective`.
    pub fn trace_csv(&self) -> String {
        let mut out = String::from("phase,iteration,entering,leaving,objective\n");
        for p in &self.pivots {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                p.phase,
                p.iteration,
                p.entering,
                p.leaving,
                rational::to_text(&p.objective)
            );
        }
        out
    }
}

impl LinearProgram {
    pub fn new(num_vars: usize, sense: Sense) -> Self {
        LinearProgram {
            num_vars,
            sense,
            objective: vec![Rational::zero(); num_vars],
            constraints: Vec::new(),
        }
    }

    pub fn num_vars(&self) -> usize {
        self.num_vars
    }

    pub fn constraints(&self) -> &[Constraint] {
        &self.constraints
    }

    pub fn objective(&self) -> &[Rational] {
        &self.objective
    }

    pub fn sense(&self) -> Sense {
        self.sense
    }

    pub fn set_objective(&mut self, var: usize, coef: Rational) {
        self.objective[var] = coef;
    }

    /// Adds `sum terms (rel) rhs`. Repeated variables are summed.
    pub fn add_constraint(
        &mut self,
        terms: impl IntoIterator<Item = (usize, Rational)>,
        relation: Relation,
        rhs: Rational,
    ) -> Result<(), LpError> {
        let mut dense: Vec<(usize, Rational)> = Vec::new();
        for (v, c) in terms {
            if v >= self.num_vars {
                return Err(LpError::BadVariable {
                    index: v,
                    num_vars: self.num_vars,
                });
            }
            match dense.iter_mut().find(|(u, _)| *u == v) {
                Some((_, acc)) => *acc += c,
                None => dense.push((v, c)),
            }
        }
        dense.retain(|(_, c)| !c.is_zero());
        dense.sort_by_key(|(v, _)| *v);
        self.constraints.push(Constraint {
            terms: dense,
            relation,
            rhs,
        });
        Ok(())
    }

    /// Objective value of a point, without feasibility checks.
    pub fn evaluate(&self, x: &[Rational]) -> Rational {
        self.objective.iter().zip(x).map(|(c, v)| c * v).sum()
    }

    /// Whether `x` satisfies every constraint and nonnegativity exactly.
    pub fn is_feasible(&self, x: &[Rational]) -> bool {
        if x.len() != self.num_vars || x.iter().any(|v| v.is_negative()) {
            return false;
        }
        self.constraints.iter().all(|c| {
            let lhs: Rational = c.terms.iter().map(|(v, a)| a * &x[*v]).sum();
            match c.relation {
                Relation::Le => lhs <= c.rhs,
                Relation::Ge => lhs >= c.rhs,
                Relation::Eq => lhs == c.rhs,
            }
        })
    }

    pub fn solve(&self) -> Result<LpSolution, LpError> {
        Tableau::build(self).run(self)
    }
}

struct Tableau {
    rows: Vec<Vec<Rational>>,
    rhs: Vec<Rational>,
    basis: Vec<usize>,
    /// Columns `[0, num_structural)` are the caller's variables.
    num_structural: usize,
    /// Columns `[num_structural, first_artificial)` are slack/surplus.
    first_artificial: usize,
    pivots: Vec<PivotRecord>,
}

impl Tableau {
    fn build(lp: &LinearProgram) -> Tableau {
        let m = lp.constraints.len();
        let n = lp.num_vars;
        let num_slack = lp.constraints.iter().filter(|c| c.relation != Relation::Eq).count();
        let num_art = lp
            .constraints
            .iter()
            .filter(|c| {
                let flipped = c.rhs.is_negative();
                match c.relation {
                    Relation::Eq => true,
                    Relation::Le => flipped,
                    Relation::Ge => !flipped,
                }
            })
            .count();
        let width = n + num_slack + num_art;
        let mut rows = Vec::with_capacity(m);
        let mut rhs = Vec::with_capacity(m);
        let mut basis = Vec::with_capacity(m);
        let mut next_slack = n;
        let mut next_art = n + num_slack;
        for c in &lp.constraints {
            let mut row = vec![Rational::zero(); width];
            let flip = c.rhs.is_negative();
            for (v, a) in &c.terms {
                row[*v] = if flip { -a.clone() } else { a.clone() };
            }
            let rel = match (c.relation, flip) {
                (Relation::Le, true) => Relation::Ge,
                (Relation::Ge, true) => Relation::Le,
                (r, _) => r,
            };
            match rel {
                Relation::Le => {
                    row[next_slack] = Rational::one();
                    basis.push(next_slack);
                    next_slack += 1;
                }
                Relation::Ge => {
                    row[next_slack] = -Rational::one();
                    next_slack += 1;
                    row[next_art] = Rational::one();
                    basis.push(next_art);
                    next_art += 1;
                }
                Relation::Eq => {
                    row[next_art] = Rational::one();
                    basis.push(next_art);
                    next_art += 1;
                }
            }
            rows.push(row);
            rhs.push(if flip { -c.rhs.clone() } else { c.rhs.clone() });
        }
        Tableau {
            rows,
            rhs,
            basis,
            num_structural: n,
            first_artificial: n + num_slack,
            pivots: Vec::new(),
        }
    }

    fn width(&self) -> usize {
        self.rows.first().map_or(self.first_artificial, Vec::len)
    }

    /// Reduced-cost row `c - c_B B^{-1} A` and the negated objective value for
    /// a maximization objective over all current columns.
    fn price(&self, cost: &[Rational]) -> (Vec<Rational>, Rational) {
        let mut reduced = cost.to_vec();
        let mut neg_value = Rational::zero();
        for (i, &b) in self.basis.iter().enumerate() {
            let cb = &cost[b];
            if cb.is_zero() {
                continue;
            }
            for (j, a) in self.rows[i].iter().enumerate() {
                if !a.is_zero() {
                    reduced[j] -= cb * a;
                }
            }
            neg_value -= cb * &self.rhs[i];
        }
        (reduced, neg_value)
    }

    fn pivot(&mut self, r: usize, e: usize, reduced: &mut [Rational], neg_value: &mut Rational) {
        let inv = Rational::one() / &self.rows[r][e];
        let mut nz = Vec::new();
        for (j, a) in self.rows[r].iter_mut().enumerate() {
            if !a.is_zero() {
                *a *= &inv;
                nz.push(j);
            }
        }
        self.rhs[r] *= &inv;
        let prow = std::mem::take(&mut self.rows[r]);
        let prhs = self.rhs[r].clone();
        for i in 0..self.rows.len() {
            if i == r || self.rows[i][e].is_zero() {
                continue;
            }
            let f = self.rows[i][e].clone();
            let row = &mut self.rows[i];
            for &j in &nz {
                row[j] -= &f * &prow[j];
            }
            if !prhs.is_zero() {
                self.rhs[i] -= &f * &prhs;
            }
        }
        let f = reduced[e].clone();
        if !f.is_zero() {
            for &j in &nz {
                reduced[j] -= &f * &prow[j];
            }
            *neg_value -= &f * &prhs;
        }
        self.rows[r] = prow;
        self.basis[r] = e;
    }

    /// Bland's-rule simplex on columns `[0, limit)` maximizing the priced
    /// objective.
    fn optimize(
        &mut self,
        phase: u8,
        limit: usize,
        reduced: &mut [Rational],
        neg_value: &mut Rational,
    ) -> Result<(), LpError> {
        loop {
            let Some(e) = (0..limit).find(|&j| reduced[j].is_positive()) else {
                return Ok(());
            };
            let mut best: Option<(usize, Rational)> = None;
            for i in 0..self.rows.len() {
                let a = &self.rows[i][e];
                if !a.is_positive() {
                    continue;
                }
                let ratio = &self.rhs[i] / a;
                let better = match &best {
                    None => true,
                    Some((bi, br)) => ratio < *br || (ratio == *br && self.basis[i] < self.basis[*bi]),
                };
                if better {
                    best = Some((i, ratio));
                }
            }
            let Some((r, _)) = best else {
                return Err(LpError::Unbounded);
            };
            let leaving = self.basis[r];
            self.pivot(r, e, reduced, neg_value);
            let iteration = self.pivots.len();
            self.pivots.push(PivotRecord {
                phase,
                iteration,
                entering: e,
                leaving,
                objective: -neg_value.clone(),
            });
        }
    }

    fn run(mut self, lp: &LinearProgram) -> Result<LpSolution, LpError> {
        let width = self.width();
        let first_art = self.first_artificial;
        if width > first_art {
            let mut cost = vec![Rational::zero(); width];
            for c in cost.iter_mut().skip(first_art) {
                *c = -Rational::one();
            }
            let (mut reduced, mut neg_value) = self.price(&cost);
            self.optimize(1, width, &mut reduced, &mut neg_value)?;
            if !neg_value.is_zero() {
                return Err(LpError::Infeasible);
            }
            self.expel_artificials(&mut reduced, &mut neg_value);
            for row in &mut self.rows {
                row.truncate(first_art);
            }
        }
        let sign = match lp.sense {
            Sense::Maximize => Rational::one(),
            Sense::Minimize => -Rational::one(),
        };
        let mut cost = vec![Rational::zero(); first_art];
        for (j, c) in lp.objective.iter().enumerate() {
            cost[j] = &sign * c;
        }
        let (mut reduced, mut neg_value) = self.price(&cost);
        self.optimize(2, first_art, &mut reduced, &mut neg_value)?;
        let mut x = vec![Rational::zero(); self.num_structural];
        for (i, &b) in self.basis.iter().enumerate() {
            if b < self.num_structural {
                x[b] = self.rhs[i].clone();
            }
        }
        Ok(LpSolution {
            value: lp.evaluate(&x),
            x,
            pivots: self.pivots,
        })
    }

    /// Pivots zero-level artificials out of the basis; rows where that is
    /// impossible are linearly dependent and get dropped.
    fn expel_artificials(&mut self, reduced: &mut [Rational], neg_value: &mut Rational) {
        let first_art = self.first_artificial;
        let mut i = 0;
        while i < self.rows.len() {
            if self.basis[i] < first_art {
                i += 1;
                continue;
            }
            match (0..first_art).find(|&j| !self.rows[i][j].is_zero()) {
                Some(e) => {
                    let leaving = self.basis[i];
                    self.pivot(i, e, reduced, neg_value);
                    let iteration = self.pivots.len();
                    self.pivots.push(PivotRecord {
                        phase: 1,
                        iteration,
                        entering: e,
                        leaving,
                        objective: -neg_value.clone(),
                    });
                    i += 1;
                }
                None => {
                    self.rows.swap_remove(i);
                    self.rhs.swap_remove(i);
                    self.basis.swap_remove(i);
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::{int, rat};

    #[test]
    fn textbook_max() {
        // max 3x + 5y, x <= 4, 2y <= 12, 3x + 2y <= 18 -> 36 at (2, 6)
        let mut lp = LinearProgram::new(2, Sense::Maximize);
        lp.set_objective(0, int(3));
        lp.set_objective(1, int(5));
        lp.add_constraint([(0, int(1))], Relation::Le, int(4)).unwrap();
        lp.add_constraint([(1, int(2))], Relation::Le, int(12)).unwrap();
        lp.add_constraint([(0, int(3)), (1, int(2))], Relation::Le, int(18))
            .unwrap();
        let sol = lp.solve().unwrap();
        assert_eq!(sol.value, int(36));
        assert_eq!(sol.x, vec![int(2), int(6)]);
    }

    #[test]
    fn equality_and_ge_with_min() {
        // min x + y, x + 2y = 3, x >= 1/2 -> x = 1/2, y = 5/4
        let mut lp = LinearProgram::new(2, Sense::Minimize);
        lp.set_objective(0, int(1));
        lp.set_objective(1, int(1));
        lp.add_constraint([(0, int(1)), (1, int(2))], Relation::Eq, int(3))
            .unwrap();
        lp.add_constraint([(0, int(1))], Relation::Ge, rat(1, 2)).unwrap();
        let sol = lp.solve().unwrap();
        assert_eq!(sol.value, rat(7, 4));
        assert!(lp.is_feasible(&sol.x));
    }

    #[test]
    fn negative_rhs_is_flipped() {
        // -x <= -2 means x >= 2; min x -> 2
        let mut lp = LinearProgram::new(1, Sense::Minimize);
        lp.set_objective(0, int(1));
        lp.add_constraint([(0, int(-1))], Relation::Le, int(-2)).unwrap();
        assert_eq!(lp.solve().unwrap().value, int(2));
    }

    #[test]
    fn infeasible_and_unbounded() {
        let mut lp = LinearProgram::new(1, Sense::Maximize);
        lp.add_constraint([(0, int(1))], Relation::Ge, int(2)).unwrap();
        lp.add_constraint([(0, int(1))], Relation::Le, int(1)).unwrap();
        assert_eq!(lp.solve().unwrap_err(), LpError::Infeasible);

        let mut lp = LinearProgram::new(2, Sense::Maximize);
        lp.set_objective(0, int(1));
        lp.add_constraint([(0, int(1)), (1, int(-1))], Relation::Le, int(1))
            .unwrap();
        assert_eq!(lp.solve().unwrap_err(), LpError::Unbounded);
    }

    #[test]
    fn redundant_equalities_are_dropped() {
        // x + y = 1 stated twice, and 2x + 2y = 2.
        let mut lp = LinearProgram::new(2, Sense::Maximize);
        lp.set_objective(0, int(2));
        lp.set_objective(1, int(1));
        for scale in [1, 1, 2] {
            lp.add_constraint([(0, int(scale)), (1, int(scale))], Relation::Eq, int(scale))
                .unwrap();
        }
        let sol = lp.solve().unwrap();
        assert_eq!(sol.value, int(2));
    }

    #[test]
    fn bad_variable_index() {
        let mut lp = LinearProgram::new(1, Sense::Maximize);
        assert!(matches!(
            lp.add_constraint([(3, int(1))], Relation::Le, int(1)),
            Err(LpError::BadVariable { index: 3, .. })
        ));
    }

    #[test]
    fn trace_is_deterministic() {
        let build = || {
            let mut lp = LinearProgram::new(3, Sense::Maximize);
            for v in 0..3 {
                lp.set_objective(v, int(v as i64 + 1));
            }
            lp.add_constraint((0..3).map(|v| (v, int(1))), Relation::Eq, int(1))
                .unwrap();
            lp.add_constraint([(2, int(1))], Relation::Le, rat(1, 3)).unwrap();
            lp
        };
        let a = build().solve().unwrap();
        let b = build().solve().unwrap();
        assert_eq!(a.pivots, b.pivots);
        assert_eq!(a.value, rat(7, 3));
        assert!(a
            .trace_csv()
            .starts_with("phase,iteration,entering,leaving,objective\n"));
    }
}
