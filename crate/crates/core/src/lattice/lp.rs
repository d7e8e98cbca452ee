//! Thin wrapper over the simplex solver: merges repeated variables in a row
//! and maps solver errors into a three-way outcome.

use minilp::{ComparisonOp, OptimizationDirection, Problem, Variable};

pub(crate) use minilp::ComparisonOp as Cmp;

pub(crate) enum LpOutcome {
    Optimal { objective: f64, values: Vec<f64> },
    Infeasible,
    Unbounded,
}

pub(crate) struct Lp {
    problem: Problem,
    vars: Vec<Variable>,
    bounds: Vec<(f64, f64)>,
    rows: Vec<(Vec<(usize, f64)>, ComparisonOp, f64)>,
}

impl Lp {
    pub fn maximize() -> Self {
        Self::with(OptimizationDirection::Maximize)
    }

    pub fn minimize() -> Self {
        Self::with(OptimizationDirection::Minimize)
    }

    fn with(direction: OptimizationDirection) -> Self {
        Self { problem: Problem::new(direction), vars: Vec::new(), bounds: Vec::new(), rows: Vec::new() }
    }

    /// Adds a variable and returns its index.
    pub fn var(&mut self, objective: f64, lo: f64, hi: f64) -> usize {
        self.vars.push(self.problem.add_var(objective, (lo, hi)));
        self.bounds.push((lo, hi));
        self.vars.len() - 1
    }

    /// Largest violation of any bound or row at `values`, in plain f64
    /// arithmetic. Used to certify solver output independently of the
    /// solver's internal tolerance.
    pub fn violation(&self, values: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for (&(lo, hi), &v) in self.bounds.iter().zip(values) {
            worst = worst.max(lo - v).max(v - hi);
        }
        for (terms, op, rhs) in &self.rows {
            let lhs: f64 = terms.iter().map(|&(i, c)| c * values[i]).sum();
            let d = lhs - rhs;
            worst = worst.max(match op {
                ComparisonOp::Eq => d.abs(),
                ComparisonOp::Le => d,
                ComparisonOp::Ge => -d,
            });
        }
        worst
    }

    pub fn row(&mut self, terms: &[(usize, f64)], op: ComparisonOp, rhs: f64) {
        let mut merged: Vec<(usize, f64)> = Vec::with_capacity(terms.len());
        for &(v, c) in terms {
            match merged.iter_mut().find(|(w, _)| *w == v) {
                Some(slot) => slot.1 += c,
                None => merged.push((v, c)),
            }
        }
        merged.retain(|&(_, c)| c != 0.0);
        if merged.is_empty() {
            // 0 op rhs: keep infeasibility visible through a pinned dummy.
            let ok = match op {
                ComparisonOp::Eq => rhs == 0.0,
                ComparisonOp::Le => 0.0 <= rhs,
                ComparisonOp::Ge => 0.0 >= rhs,
            };
            if !ok {
                let d = self.var(0.0, 0.0, 0.0);
                self.problem.add_constraint([(self.vars[d], 1.0)], ComparisonOp::Eq, 1.0);
            }
            return;
        }
        let expr: Vec<(Variable, f64)> = merged.iter().map(|&(v, c)| (self.vars[v], c)).collect();
        self.problem.add_constraint(expr, op, rhs);
        self.rows.push((merged, op, rhs));
    }

    pub fn solve(&self) -> LpOutcome {
        match self.problem.solve() {
            Ok(sol) => LpOutcome::Optimal {
                objective: sol.objective(),
                values: self.vars.iter().map(|&v| sol[v]).collect(),
            },
            Err(minilp::Error::Infeasible) => LpOutcome::Infeasible,
            Err(minilp::Error::Unbounded) => LpOutcome::Unbounded,
        }
    }
}
