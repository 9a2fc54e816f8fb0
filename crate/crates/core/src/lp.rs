//! Phase-1 simplex for feasibility of `E u = z, lo <= u <= hi`.
//!
//! Problems here are tiny (a handful of equations and at most a dozen
//! variables), so a dense tableau with Bland's rule is used throughout.

use nalgebra::{DMatrix, DVector};

/// Absolute feasibility tolerance on the phase-1 objective, scaled by the
/// magnitude of the right-hand side.
pub const FEAS_TOL: f64 = 1e-9;

const PIVOT_TOL: f64 = 1e-11;

/// Outcome of a feasibility query.
#[derive(Debug, Clone, PartialEq)]
pub enum Feasibility {
    Feasible(DVector<f64>),
    Infeasible,
}

impl Feasibility {
    pub fn is_feasible(&self) -> bool {
        matches!(self, Feasibility::Feasible(_))
    }
}

#[derive(Clone, Copy, PartialEq, Debug)]
enum Status {
    Basic(usize),
    AtLower,
    AtUpper,
}

/// Decides whether some `u` with `lo <= u <= hi` satisfies `e * u = z`.
///
/// Bounds must be finite with `lo <= hi`. Returns a witness when feasible.
pub fn box_equality_feasible(
    e: &DMatrix<f64>,
    z: &DVector<f64>,
    lo: &[f64],
    hi: &[f64],
) -> Feasibility {
    let m = e.nrows();
    let nv = e.ncols();
    debug_assert_eq!(z.len(), m);
    debug_assert_eq!(lo.len(), nv);
    debug_assert_eq!(hi.len(), nv);

    // Shift to s = u - lo in [0, ub]; rows flipped so the rhs is non-negative.
    let ub: Vec<f64> = lo.iter().zip(hi).map(|(l, h)| h - l).collect();
    let shift = e * DVector::from_column_slice(lo);
    let total = nv + m;
    let mut tab = DMatrix::<f64>::zeros(m, total);
    let mut rhs = DVector::<f64>::zeros(m);
    for i in 0..m {
        let r = z[i] - shift[i];
        let sign = if r < 0.0 { -1.0 } else { 1.0 };
        for j in 0..nv {
            tab[(i, j)] = sign * e[(i, j)];
        }
        tab[(i, nv + i)] = 1.0;
        rhs[i] = sign * r;
    }
    let scale = 1.0 + rhs.amax() + e.amax() * ub.iter().cloned().fold(0.0, f64::max);

    // Upper bounds for every column; artificials are unbounded above.
    let upper: Vec<f64> = ub.iter().cloned().chain(std::iter::repeat_n(f64::INFINITY, m)).collect();
    let cost: Vec<f64> = (0..total).map(|j| if j >= nv { 1.0 } else { 0.0 }).collect();

    let mut status: Vec<Status> = (0..total)
        .map(|j| if j >= nv { Status::Basic(j - nv) } else { Status::AtLower })
        .collect();
    let mut basis: Vec<usize> = (nv..total).collect();
    // Values of basic variables per row.
    let mut beta = rhs.clone();

    let max_iter = 50 * (total + 1) * (total + 1);
    for _ in 0..max_iter {
        // Reduced costs d_j = c_j - c_B^T T_j.
        let mut entering = None;
        for j in 0..total {
            let st = status[j];
            if matches!(st, Status::Basic(_)) {
                continue;
            }
            if upper[j] <= 0.0 {
                continue; // fixed variable
            }
            let mut d = cost[j];
            for i in 0..m {
                d -= cost[basis[i]] * tab[(i, j)];
            }
            let improving = match st {
                Status::AtLower => d < -PIVOT_TOL,
                Status::AtUpper => d > PIVOT_TOL,
                Status::Basic(_) => false,
            };
            if improving {
                entering = Some(j);
                break;
            }
        }
        let Some(j) = entering else { break };
        // Direction: increasing from lower (+1) or decreasing from upper (-1).
        let dir = if status[j] == Status::AtLower { 1.0 } else { -1.0 };

        // Ratio test: the entering variable moves by t >= 0; basic var i
        // changes by -dir * tab[i][j] * t.
        let mut best_t = upper[j];
        let mut leave: Option<(usize, bool)> = None; // (row, leaves at upper)
        for i in 0..m {
            let a = dir * tab[(i, j)];
            let bvar = basis[i];
            if a > PIVOT_TOL {
                let t = beta[i] / a;
                if t < best_t - 1e-15 || (leave.is_some() && (t - best_t).abs() <= 1e-15 && bvar < basis[leave.unwrap().0]) {
                    best_t = t;
                    leave = Some((i, false));
                }
            } else if a < -PIVOT_TOL && upper[bvar].is_finite() {
                let t = (upper[bvar] - beta[i]) / (-a);
                if t < best_t - 1e-15 || (leave.is_some() && (t - best_t).abs() <= 1e-15 && bvar < basis[leave.unwrap().0]) {
                    best_t = t;
                    leave = Some((i, true));
                }
            }
        }
        let best_t = best_t.max(0.0);
        if !best_t.is_finite() {
            // Cannot happen for phase 1 (objective bounded below by 0).
            break;
        }
        for i in 0..m {
            beta[i] -= dir * tab[(i, j)] * best_t;
        }
        match leave {
            None => {
                // Bound flip of the entering variable.
                status[j] = if status[j] == Status::AtLower { Status::AtUpper } else { Status::AtLower };
            }
            Some((r, at_upper)) => {
                let old = basis[r];
                let entering_value = if dir > 0.0 { best_t } else { upper[j] - best_t };
                status[old] = if at_upper { Status::AtUpper } else { Status::AtLower };
                let piv = tab[(r, j)];
                for c in 0..total {
                    tab[(r, c)] /= piv;
                }
                for i in 0..m {
                    if i != r {
                        let f = tab[(i, j)];
                        if f != 0.0 {
                            for c in 0..total {
                                tab[(i, c)] -= f * tab[(r, c)];
                            }
                        }
                    }
                }
                basis[r] = j;
                status[j] = Status::Basic(r);
                beta[r] = entering_value;
            }
        }
    }

    let infeasibility: f64 = (0..m).filter(|&i| basis[i] >= nv).map(|i| beta[i].max(0.0)).sum();
    if infeasibility > FEAS_TOL * scale {
        return Feasibility::Infeasible;
    }
    let mut s = vec![0.0; nv];
    for j in 0..nv {
        s[j] = match status[j] {
            Status::AtLower => 0.0,
            Status::AtUpper => ub[j],
            Status::Basic(r) => beta[r].clamp(0.0, ub[j]),
        };
    }
    Feasibility::Feasible(DVector::from_iterator(nv, s.iter().zip(lo).map(|(s, l)| s + l)))
}
