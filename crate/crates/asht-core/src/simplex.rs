//! Dense two-phase primal simplex with Bland's rule.
//!
//! The kernel is generic over the scalar: `f64` for production solves and
//! `BigRational` for exact-pivot oracle solves (every f64 input converts to
//! a rational exactly, so the oracle path has no rounding at all).
//! Determinism over speed: Bland's rule everywhere, no perturbation, no
//! steepest edge.

use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};

/// Scalar requirements for pivoting.
pub trait SimplexScalar:
    Clone
    + PartialOrd
    + Zero
    + One
    + std::ops::Neg<Output = Self>
    + std::ops::Sub<Output = Self>
    + std::ops::Mul<Output = Self>
    + std::ops::Div<Output = Self>
{
    /// Pivot tolerance; zero for exact types.
    fn pivot_eps() -> Self;
    fn from_f64_exact(v: f64) -> Self;
    fn to_f64_lossy(&self) -> f64;
}

impl SimplexScalar for f64 {
    fn pivot_eps() -> Self {
        1e-9
    }
    fn from_f64_exact(v: f64) -> Self {
        v
    }
    fn to_f64_lossy(&self) -> f64 {
        *self
    }
}

impl SimplexScalar for BigRational {
    fn pivot_eps() -> Self {
        BigRational::zero()
    }
    fn from_f64_exact(v: f64) -> Self {
        BigRational::from_float(v).expect("finite float")
    }
    fn to_f64_lossy(&self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Relop {
    Le,
    Ge,
    Eq,
}

/// `min objective . x` subject to `row . x (relop) rhs`, `x >= 0`.
#[derive(Clone, Debug)]
pub struct LinearProgram<T> {
    pub objective: Vec<T>,
    pub constraints: Vec<(Vec<T>, Relop, T)>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Unbounded,
    IterationLimit,
}

#[derive(Clone, Debug)]
pub struct Solution<T> {
    pub status: SolveStatus,
    pub objective: T,
    pub x: Vec<T>,
    /// Final reduced costs, one per tableau column (structural, then
    /// slack/surplus, then artificial). The dual multiplier of constraint
    /// `i` is the negated reduced cost of its slack column.
    pub reduced_costs: Vec<T>,
}

const MAX_PIVOTS: usize = 200_000;

struct Tableau<T> {
    rows: Vec<Vec<T>>,
    rhs: Vec<T>,
    basis: Vec<usize>,
    n_total: usize,
}

impl<T: SimplexScalar> Tableau<T> {
    fn is_pos(v: &T) -> bool {
        *v > T::pivot_eps()
    }

    fn is_neg(v: &T) -> bool {
        *v < -T::pivot_eps()
    }

    fn pivot(&mut self, row: usize, col: usize, z: &mut Vec<T>, zval: &mut T) {
        let pivot = self.rows[row][col].clone();
        for v in self.rows[row].iter_mut() {
            *v = v.clone() / pivot.clone();
        }
        self.rhs[row] = self.rhs[row].clone() / pivot;

        let pivot_row = self.rows[row].clone();
        let pivot_rhs = self.rhs[row].clone();
        for i in 0..self.rows.len() {
            if i == row {
                continue;
            }
            let factor = self.rows[i][col].clone();
            if factor == T::zero() {
                continue;
            }
            for j in 0..self.n_total {
                self.rows[i][j] = self.rows[i][j].clone() - factor.clone() * pivot_row[j].clone();
            }
            self.rhs[i] = self.rhs[i].clone() - factor * pivot_rhs.clone();
        }
        let zfac = z[col].clone();
        if zfac != T::zero() {
            for j in 0..self.n_total {
                z[j] = z[j].clone() - zfac.clone() * pivot_row[j].clone();
            }
            *zval = zval.clone() - zfac * pivot_rhs;
        }
        self.basis[row] = col;
    }

    /// One simplex phase under reduced costs `z` (enter where z < 0).
    /// Columns >= `forbid_from` never enter.
    ///
    /// Entering rule: most negative reduced cost with lowest-index ties
    /// (deterministic Dantzig) while the objective makes progress; after a
    /// run of degenerate pivots it falls back to Bland's rule, whose
    /// anti-cycling guarantee ensures termination either way.
    fn run_phase(&mut self, z: &mut Vec<T>, zval: &mut T, forbid_from: usize) -> SolveStatus {
        const STALL_LIMIT: usize = 40;
        let mut stalled = 0usize;
        for _ in 0..MAX_PIVOTS {
            let entering = if stalled < STALL_LIMIT {
                let mut best: Option<usize> = None;
                for j in 0..forbid_from {
                    if Self::is_neg(&z[j]) && best.map_or(true, |b| z[j] < z[b]) {
                        best = Some(j);
                    }
                }
                best
            } else {
                (0..forbid_from).find(|j| Self::is_neg(&z[*j]))
            };
            let Some(col) = entering else {
                return SolveStatus::Optimal;
            };
            // Ratio test, ties by lowest basic variable index (Bland).
            let mut best: Option<(usize, T)> = None;
            for i in 0..self.rows.len() {
                if !Self::is_pos(&self.rows[i][col]) {
                    continue;
                }
                let ratio = self.rhs[i].clone() / self.rows[i][col].clone();
                let better = match &best {
                    None => true,
                    Some((bi, br)) => {
                        ratio < *br || (ratio == *br && self.basis[i] < self.basis[*bi])
                    }
                };
                if better {
                    best = Some((i, ratio));
                }
            }
            let Some((row, _)) = best else {
                return SolveStatus::Unbounded;
            };
            // zval tracks the negated objective, so progress raises it.
            let before = zval.clone();
            self.pivot(row, col, z, zval);
            if *zval > before {
                stalled = 0;
            } else {
                stalled += 1;
            }
        }
        SolveStatus::IterationLimit
    }
}

/// Two-phase solve. The returned `x` covers structural variables only.
pub fn solve<T: SimplexScalar>(lp: &LinearProgram<T>) -> Solution<T> {
    let n = lp.objective.len();
    let m = lp.constraints.len();

    // Normalize to rhs >= 0 and count auxiliary columns.
    let mut norm: Vec<(Vec<T>, Relop, T)> = Vec::with_capacity(m);
    for (coeffs, op, rhs) in &lp.constraints {
        assert_eq!(coeffs.len(), n, "constraint arity mismatch");
        if *rhs < T::zero() {
            let flipped = match op {
                Relop::Le => Relop::Ge,
                Relop::Ge => Relop::Le,
                Relop::Eq => Relop::Eq,
            };
            norm.push((
                coeffs.iter().map(|c| -c.clone()).collect(),
                flipped,
                -rhs.clone(),
            ));
        } else {
            norm.push((coeffs.clone(), *op, rhs.clone()));
        }
    }

    let n_slack = norm
        .iter()
        .filter(|(_, op, _)| !matches!(op, Relop::Eq))
        .count();
    let n_artificial = norm
        .iter()
        .filter(|(_, op, _)| !matches!(op, Relop::Le))
        .count();
    let n_total = n + n_slack + n_artificial;
    let artificial_start = n + n_slack;

    let mut tab = Tableau {
        rows: vec![vec![T::zero(); n_total]; m],
        rhs: vec![T::zero(); m],
        basis: vec![0; m],
        n_total,
    };

    let mut slack_idx = n;
    let mut art_idx = artificial_start;
    for (i, (coeffs, op, rhs)) in norm.iter().enumerate() {
        for (j, c) in coeffs.iter().enumerate() {
            tab.rows[i][j] = c.clone();
        }
        tab.rhs[i] = rhs.clone();
        match op {
            Relop::Le => {
                tab.rows[i][slack_idx] = T::one();
                tab.basis[i] = slack_idx;
                slack_idx += 1;
            }
            Relop::Ge => {
                tab.rows[i][slack_idx] = -T::one();
                slack_idx += 1;
                tab.rows[i][art_idx] = T::one();
                tab.basis[i] = art_idx;
                art_idx += 1;
            }
            Relop::Eq => {
                tab.rows[i][art_idx] = T::one();
                tab.basis[i] = art_idx;
                art_idx += 1;
            }
        }
    }

    let fail = |status: SolveStatus| Solution {
        status,
        objective: T::zero(),
        x: vec![T::zero(); n],
        reduced_costs: Vec::new(),
    };

    // Phase 1: minimize the artificial sum.
    if n_artificial > 0 {
        let mut z = vec![T::zero(); n_total];
        let mut zval = T::zero();
        for j in artificial_start..n_total {
            z[j] = T::one();
        }
        // Eliminate basic artificials from the cost row.
        for i in 0..m {
            if tab.basis[i] >= artificial_start {
                for j in 0..n_total {
                    z[j] = z[j].clone() - tab.rows[i][j].clone();
                }
                zval = zval - tab.rhs[i].clone();
            }
        }
        let status = tab.run_phase(&mut z, &mut zval, n_total);
        if status != SolveStatus::Optimal {
            return fail(status);
        }
        if Tableau::<T>::is_neg(&zval) {
            // zval is -(artificial sum); strictly negative means infeasible.
            return fail(SolveStatus::Infeasible);
        }
        // Drive any basic artificial out of the basis.
        for i in 0..m {
            if tab.basis[i] >= artificial_start {
                let col = (0..artificial_start)
                    .find(|j| tab.rows[i][*j].clone().abs_like() > T::pivot_eps());
                if let Some(col) = col {
                    let mut dummy = vec![T::zero(); n_total];
                    let mut dummy_val = T::zero();
                    tab.pivot(i, col, &mut dummy, &mut dummy_val);
                }
                // A fully zero row is redundant; its artificial stays basic
                // at level zero, and the entering scan never selects
                // artificial columns again.
            }
        }
    }

    // Phase 2: original costs.
    let mut z = vec![T::zero(); n_total];
    for (j, c) in lp.objective.iter().enumerate() {
        z[j] = c.clone();
    }
    let mut zval = T::zero();
    for i in 0..m {
        let b = tab.basis[i];
        if b < n {
            let cb = lp.objective[b].clone();
            if cb != T::zero() {
                for j in 0..n_total {
                    z[j] = z[j].clone() - cb.clone() * tab.rows[i][j].clone();
                }
                zval = zval - cb * tab.rhs[i].clone();
            }
        }
    }
    let status = tab.run_phase(&mut z, &mut zval, artificial_start);
    if status != SolveStatus::Optimal {
        return fail(status);
    }

    let mut x = vec![T::zero(); n];
    for i in 0..m {
        if tab.basis[i] < n {
            x[tab.basis[i]] = tab.rhs[i].clone();
        }
    }
    Solution {
        status: SolveStatus::Optimal,
        objective: -zval,
        x,
        reduced_costs: z,
    }
}

/// Absolute value without requiring `Signed` (BigRational implements Signed,
/// f64 does not through num-traits in the same way we need here).
trait AbsLike {
    fn abs_like(self) -> Self;
}

impl<T: SimplexScalar> AbsLike for T {
    fn abs_like(self) -> Self {
        if self < T::zero() {
            -self
        } else {
            self
        }
    }
}

/// Exact-rational solve of an f64-specified program; the conversion from
/// f64 to BigRational is lossless.
pub fn solve_exact(lp: &LinearProgram<f64>) -> Solution<f64> {
    let rational = LinearProgram {
        objective: lp
            .objective
            .iter()
            .map(|v| BigRational::from_f64_exact(*v))
            .collect(),
        constraints: lp
            .constraints
            .iter()
            .map(|(row, op, rhs)| {
                (
                    row.iter().map(|v| BigRational::from_f64_exact(*v)).collect(),
                    *op,
                    BigRational::from_f64_exact(*rhs),
                )
            })
            .collect(),
    };
    let sol = solve(&rational);
    Solution {
        status: sol.status,
        objective: sol.objective.to_f64_lossy(),
        x: sol.x.iter().map(|v| v.to_f64_lossy()).collect(),
        reduced_costs: sol
            .reduced_costs
            .iter()
            .map(|v| v.to_f64_lossy())
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lp(objective: Vec<f64>, constraints: Vec<(Vec<f64>, Relop, f64)>) -> LinearProgram<f64> {
        LinearProgram {
            objective,
            constraints,
        }
    }

    #[test]
    fn solves_a_textbook_minimum() {
        // min x + 2y  s.t. x + y >= 1, y <= 0.4
        let p = lp(
            vec![1.0, 2.0],
            vec![
                (vec![1.0, 1.0], Relop::Ge, 1.0),
                (vec![0.0, 1.0], Relop::Le, 0.4),
            ],
        );
        let sol = solve(&p);
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert!((sol.objective - 1.0).abs() < 1e-12);
        assert!((sol.x[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn detects_infeasibility() {
        let p = lp(
            vec![1.0],
            vec![
                (vec![1.0], Relop::Le, 1.0),
                (vec![1.0], Relop::Ge, 2.0),
            ],
        );
        assert_eq!(solve(&p).status, SolveStatus::Infeasible);
    }

    #[test]
    fn detects_unboundedness() {
        // min -x with x only bounded below.
        let p = lp(vec![-1.0], vec![(vec![1.0], Relop::Ge, 0.0)]);
        assert_eq!(solve(&p).status, SolveStatus::Unbounded);
    }

    #[test]
    fn equality_constraints_work() {
        // min x + y s.t. x + 2y = 1
        let p = lp(vec![1.0, 1.0], vec![(vec![1.0, 2.0], Relop::Eq, 1.0)]);
        let sol = solve(&p);
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert!((sol.objective - 0.5).abs() < 1e-12);
        assert!((sol.x[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn exact_rational_matches_float_on_small_programs() {
        let p = lp(
            vec![3.0, 1.0, 4.0],
            vec![
                (vec![1.0, 1.0, 1.0], Relop::Eq, 1.0),
                (vec![2.0, 1.0, 0.0], Relop::Ge, 0.5),
                (vec![0.0, 1.0, 3.0], Relop::Ge, 0.25),
            ],
        );
        let float = solve(&p);
        let exact = solve_exact(&p);
        assert_eq!(float.status, SolveStatus::Optimal);
        assert_eq!(exact.status, SolveStatus::Optimal);
        assert!((float.objective - exact.objective).abs() < 1e-12);
    }
}
