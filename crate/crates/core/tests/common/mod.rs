//! Test-only oracle: an independent full-tableau two-phase simplex over the
//! textbook standard form (equalities, non-negative variables). It shares no
//! code path with the production solver; bounds become explicit rows and
//! free variables are split, so agreement between the two is meaningful.

#![allow(dead_code)]

use carbonflow::lp::{ConId, LinearProblem, Relation, VarId};

#[derive(Debug, Clone, PartialEq)]
pub enum OracleResult {
    /// Objective value and one optimal point in the original variables.
    Optimal(f64, Vec<f64>),
    Infeasible,
    Unbounded,
}

/// Solve `problem` by brute standard-form tableau simplex with Bland's rule
/// and return the optimal objective value.
pub fn oracle_solve(problem: &LinearProblem) -> OracleResult {
    // Expand to: min c'z, Gz (<=,=,>=) h, z >= 0.
    // Each original variable maps to an affine combination of z entries.
    let n = problem.num_vars();
    let mut terms: Vec<Vec<(usize, f64)>> = Vec::with_capacity(n); // var -> sum coef*z
    let mut shift: Vec<f64> = Vec::with_capacity(n);
    let mut nz = 0usize;
    let mut rows: Vec<(Vec<(usize, f64)>, Relation, f64)> = Vec::new();

    for j in 0..n {
        let (lo, hi) = problem.var_bounds(VarId::from_index(j));
        if lo.is_finite() {
            // x = lo + z, z >= 0, optionally z <= hi - lo.
            terms.push(vec![(nz, 1.0)]);
            shift.push(lo);
            if hi.is_finite() {
                rows.push((vec![(nz, 1.0)], Relation::Le, hi - lo));
            }
            nz += 1;
        } else if hi.is_finite() {
            // x = hi - z, z >= 0.
            terms.push(vec![(nz, -1.0)]);
            shift.push(hi);
            nz += 1;
        } else {
            // Free: x = z+ - z-.
            terms.push(vec![(nz, 1.0), (nz + 1, -1.0)]);
            shift.push(0.0);
            nz += 2;
        }
    }

    let mut cost = vec![0.0; nz];
    let mut const_obj = 0.0;
    for j in 0..n {
        let c = problem.objective_coef(VarId::from_index(j));
        const_obj += c * shift[j];
        for &(z, f) in &terms[j] {
            cost[z] += c * f;
        }
    }

    for i in 0..problem.num_constraints() {
        let (coeffs, rel, rhs) = problem.constraint(ConId::from_index(i));
        let mut row = vec![0.0; nz];
        let mut adj = rhs;
        for (v, c) in coeffs {
            adj -= c * shift[v.index()];
            for &(z, f) in &terms[v.index()] {
                row[z] += c * f;
            }
        }
        let sparse: Vec<(usize, f64)> = row
            .iter()
            .enumerate()
            .filter(|&(_, &v)| v != 0.0)
            .map(|(k, &v)| (k, v))
            .collect();
        rows.push((sparse, rel, adj));
    }

    match standard_form_simplex(nz, &cost, &rows) {
        StdResult::Optimal(obj, z) => {
            let x: Vec<f64> = (0..n)
                .map(|j| shift[j] + terms[j].iter().map(|&(k, f)| f * z[k]).sum::<f64>())
                .collect();
            OracleResult::Optimal(obj + const_obj, x)
        }
        StdResult::Infeasible => OracleResult::Infeasible,
        StdResult::Unbounded => OracleResult::Unbounded,
    }
}

enum StdResult {
    Optimal(f64, Vec<f64>),
    Infeasible,
    Unbounded,
}

/// min c'z s.t. rows (<=,=,>=), z >= 0, via full-tableau two-phase simplex.
fn standard_form_simplex(
    nz: usize,
    cost: &[f64],
    rows: &[(Vec<(usize, f64)>, Relation, f64)],
) -> StdResult {
    let m = rows.len();
    // Columns: nz structural, then one slack/surplus per inequality, then
    // one artificial per row. Build with b >= 0.
    let n_slack = rows
        .iter()
        .filter(|(_, r, _)| !matches!(r, Relation::Eq))
        .count();
    let total = nz + n_slack + m;
    let mut a = vec![vec![0.0f64; total]; m];
    let mut b = vec![0.0f64; m];
    let mut slack_idx = nz;
    for (i, (sparse, rel, rhs)) in rows.iter().enumerate() {
        let flip = *rhs < 0.0;
        let sgn = if flip { -1.0 } else { 1.0 };
        for &(k, v) in sparse {
            a[i][k] = sgn * v;
        }
        b[i] = sgn * rhs;
        match rel {
            Relation::Le => {
                a[i][slack_idx] = sgn * 1.0;
                slack_idx += 1;
            }
            Relation::Ge => {
                a[i][slack_idx] = sgn * -1.0;
                slack_idx += 1;
            }
            Relation::Eq => {}
        }
        a[i][nz + n_slack + i] = 1.0; // artificial
    }

    let mut basis: Vec<usize> = (0..m).map(|i| nz + n_slack + i).collect();

    // Phase 1 objective: sum of artificials.
    let phase1: Vec<f64> = (0..total)
        .map(|j| if j >= nz + n_slack { 1.0 } else { 0.0 })
        .collect();
    if !tableau_iterate(&mut a, &mut b, &mut basis, &phase1, total) {
        return StdResult::Unbounded; // cannot happen in phase 1
    }
    let p1_obj: f64 = basis
        .iter()
        .enumerate()
        .map(|(i, &j)| if j >= nz + n_slack { b[i] } else { 0.0 })
        .sum();
    if p1_obj > 1e-7 {
        return StdResult::Infeasible;
    }

    // Phase 2 over structural + slack columns only (artificials frozen by
    // treating them as cost +inf-ish via exclusion in pricing).
    let mut phase2 = vec![0.0f64; total];
    phase2[..nz].copy_from_slice(cost);
    if !tableau_iterate(&mut a, &mut b, &mut basis, &phase2, nz + n_slack) {
        return StdResult::Unbounded;
    }
    let obj: f64 = basis
        .iter()
        .enumerate()
        .map(|(i, &j)| phase2[j] * b[i])
        .sum();
    let mut z = vec![0.0; total];
    for (i, &j) in basis.iter().enumerate() {
        z[j] = b[i];
    }
    StdResult::Optimal(obj, z)
}

/// Bland's-rule tableau iterations; returns false on unboundedness.
/// Only columns below `col_limit` may enter.
fn tableau_iterate(
    a: &mut [Vec<f64>],
    b: &mut [f64],
    basis: &mut [usize],
    cost: &[f64],
    col_limit: usize,
) -> bool {
    let m = a.len();
    let total = if m == 0 { return true } else { a[0].len() };
    for _ in 0..200_000 {
        // Reduced costs via current basis cost vector.
        let mut y_obj = vec![0.0f64; total];
        for j in 0..total {
            let mut r = cost[j];
            for i in 0..m {
                r -= cost[basis[i]] * a[i][j];
            }
            y_obj[j] = r;
        }
        let entering = (0..col_limit).find(|&j| y_obj[j] < -1e-9 && !basis.contains(&j));
        let Some(e) = entering else {
            return true;
        };
        // Ratio test (Bland: lowest basis index among ties).
        let mut best: Option<(usize, f64)> = None;
        for i in 0..m {
            if a[i][e] > 1e-11 {
                let ratio = b[i] / a[i][e];
                match best {
                    Some((bi, br)) => {
                        if ratio < br - 1e-12 || (ratio < br + 1e-12 && basis[i] < basis[bi]) {
                            best = Some((i, ratio));
                        }
                    }
                    None => best = Some((i, ratio)),
                }
            }
        }
        let Some((piv_row, _)) = best else {
            return false;
        };
        // Pivot.
        let piv = a[piv_row][e];
        for j in 0..total {
            a[piv_row][j] /= piv;
        }
        b[piv_row] /= piv;
        for i in 0..m {
            if i != piv_row && a[i][e] != 0.0 {
                let f = a[i][e];
                for j in 0..total {
                    a[i][j] -= f * a[piv_row][j];
                }
                b[i] -= f * b[piv_row];
            }
        }
        basis[piv_row] = e;
    }
    panic!("oracle simplex failed to terminate");
}
