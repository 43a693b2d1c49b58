//! Dense two-phase tableau simplex with Bland's anti-cycling rule.
//!
//! Solves `max cᵀx` subject to `A_eq x = b_eq`, `A_ge x ≥ b_ge`, `x ≥ 0`.

const PIVOT_TOL: f64 = 1e-11;
const COST_TOL: f64 = 1e-11;
const FEAS_TOL: f64 = 1e-9;
const MAX_PIVOTS: usize = 200_000;

#[derive(Clone, Debug, Default)]
pub struct LinearProgram {
    pub c: Vec<f64>,
    pub a_eq: Vec<Vec<f64>>,
    pub b_eq: Vec<f64>,
    pub a_ge: Vec<Vec<f64>>,
    pub b_ge: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum LpOutcome {
    Optimal { x: Vec<f64>, objective: f64 },
    Infeasible,
    Unbounded,
    /// Pivot limit hit; should not happen with Bland's rule.
    Stalled,
}

struct Tableau {
    rows: Vec<Vec<f64>>, // each row: coefficients..., rhs
    basis: Vec<usize>,
    ncols: usize,
}

impl Tableau {
    fn rhs(&self, i: usize) -> f64 {
        self.rows[i][self.ncols]
    }

    fn pivot(&mut self, r: usize, c: usize) {
        let piv = self.rows[r][c];
        for x in self.rows[r].iter_mut() {
            *x /= piv;
        }
        let prow = self.rows[r].clone();
        for (i, row) in self.rows.iter_mut().enumerate() {
            if i == r {
                continue;
            }
            let f = row[c];
            if f != 0.0 {
                for (x, p) in row.iter_mut().zip(&prow) {
                    *x -= f * p;
                }
                row[c] = 0.0;
            }
        }
        self.basis[r] = c;
    }

    /// Runs Bland pivots maximizing `cost` over columns `< allowed`.
    fn optimize(&mut self, cost: &[f64], allowed: usize) -> Result<(), LpOutcome> {
        for _ in 0..MAX_PIVOTS {
            let entering = (0..allowed).find(|&j| {
                if self.basis.contains(&j) {
                    return false;
                }
                let d = cost[j] - self.basis.iter().enumerate().map(|(i, &b)| cost[b] * self.rows[i][j]).sum::<f64>();
                d > COST_TOL
            });
            let Some(j) = entering else { return Ok(()) };
            let mut leave: Option<(usize, f64)> = None;
            for i in 0..self.rows.len() {
                let a = self.rows[i][j];
                if a > PIVOT_TOL {
                    let ratio = self.rhs(i) / a;
                    leave = match leave {
                        None => Some((i, ratio)),
                        Some((li, lr)) => {
                            if ratio < lr - 1e-14 || (ratio <= lr + 1e-14 && self.basis[i] < self.basis[li]) {
                                Some((i, ratio))
                            } else {
                                Some((li, lr))
                            }
                        }
                    };
                }
            }
            let Some((r, _)) = leave else { return Err(LpOutcome::Unbounded) };
            self.pivot(r, j);
        }
        Err(LpOutcome::Stalled)
    }
}

pub fn solve(lp: &LinearProgram) -> LpOutcome {
    let nx = lp.c.len();
    let m_eq = lp.a_eq.len();
    let m_ge = lp.a_ge.len();
    let m = m_eq + m_ge;
    // columns: x (nx), surplus (m_ge), artificial (m)
    let n_art_start = nx + m_ge;
    let ncols = n_art_start + m;
    let mut rows = Vec::with_capacity(m);
    for i in 0..m {
        let mut row = vec![0.0; ncols + 1];
        let (coef, b) = if i < m_eq { (&lp.a_eq[i], lp.b_eq[i]) } else { (&lp.a_ge[i - m_eq], lp.b_ge[i - m_eq]) };
        row[..nx].copy_from_slice(coef);
        if i >= m_eq {
            row[nx + i - m_eq] = -1.0;
        }
        row[ncols] = b;
        if b < 0.0 {
            for x in row.iter_mut() {
                *x = -*x;
            }
        }
        row[n_art_start + i] = 1.0;
        rows.push(row);
    }
    let mut t = Tableau { rows, basis: (n_art_start..ncols).collect(), ncols };

    // phase 1: maximize −Σ artificials
    let mut cost1 = vec![0.0; ncols];
    for c in cost1.iter_mut().skip(n_art_start) {
        *c = -1.0;
    }
    if let Err(e) = t.optimize(&cost1, ncols) {
        return e;
    }
    let infeas: f64 = (0..m).filter(|&i| t.basis[i] >= n_art_start).map(|i| t.rhs(i)).sum();
    if infeas > FEAS_TOL {
        return LpOutcome::Infeasible;
    }
    // drive remaining artificials out, dropping redundant rows
    let mut i = 0;
    while i < t.rows.len() {
        if t.basis[i] >= n_art_start {
            match (0..n_art_start).find(|&j| t.rows[i][j].abs() > PIVOT_TOL) {
                Some(j) => {
                    t.pivot(i, j);
                    i += 1;
                }
                None => {
                    t.rows.remove(i);
                    t.basis.remove(i);
                }
            }
        } else {
            i += 1;
        }
    }

    // phase 2
    let mut cost2 = vec![0.0; ncols];
    cost2[..nx].copy_from_slice(&lp.c);
    if let Err(e) = t.optimize(&cost2, n_art_start) {
        return e;
    }
    let mut x = vec![0.0; nx];
    for (i, &b) in t.basis.iter().enumerate() {
        if b < nx {
            x[b] = t.rhs(i).max(0.0);
        }
    }
    let objective = x.iter().zip(&lp.c).map(|(a, b)| a * b).sum();
    LpOutcome::Optimal { x, objective }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn textbook_lp() {
        // max 3x + 5y s.t. x ≤ 4, 2y ≤ 12, 3x + 2y ≤ 18  → (2, 6), 36
        let lp = LinearProgram {
            c: vec![3.0, 5.0],
            a_ge: vec![vec![-1.0, 0.0], vec![0.0, -2.0], vec![-3.0, -2.0]],
            b_ge: vec![-4.0, -12.0, -18.0],
            ..Default::default()
        };
        match solve(&lp) {
            LpOutcome::Optimal { x, objective } => {
                assert!((objective - 36.0).abs() < 1e-10);
                assert!((x[0] - 2.0).abs() < 1e-10 && (x[1] - 6.0).abs() < 1e-10);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn infeasible_detected() {
        let lp = LinearProgram {
            c: vec![1.0],
            a_eq: vec![vec![1.0]],
            b_eq: vec![1.0],
            a_ge: vec![vec![1.0]],
            b_ge: vec![2.0],
        };
        assert_eq!(solve(&lp), LpOutcome::Infeasible);
    }

    #[test]
    fn unbounded_detected() {
        let lp = LinearProgram { c: vec![1.0], a_ge: vec![vec![1.0]], b_ge: vec![1.0], ..Default::default() };
        assert_eq!(solve(&lp), LpOutcome::Unbounded);
    }

    #[test]
    fn redundant_equalities() {
        // x + y = 1 twice; max x
        let lp = LinearProgram {
            c: vec![1.0, 0.0],
            a_eq: vec![vec![1.0, 1.0], vec![1.0, 1.0]],
            b_eq: vec![1.0, 1.0],
            ..Default::default()
        };
        match solve(&lp) {
            LpOutcome::Optimal { objective, .. } => assert!((objective - 1.0).abs() < 1e-12),
            other => panic!("{other:?}"),
        }
    }
}
