//! Primal-dual interior-point solver for smooth NLPs of the form
//!
//! ```text
//!     min f(x)   s.t.  c(x) = 0,   l <= x <= u
//! ```
//!
//! (inequalities are expected to arrive as equalities with bounded slack
//! variables). Log-barrier on the bounds, monotone barrier reduction,
//! fraction-to-boundary 0.995, Armijo line search on an l1 exact-penalty
//! merit function, and sparse LU on the regularized augmented KKT system.
//! Variables with l == u are treated as fixed and eliminated internally.

use faer::prelude::*;
use faer::sparse::{SparseColMat, Triplet};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum NlpError {
    #[error("KKT factorization failed at iteration {0}")]
    Factorization(usize),
    #[error("line search failed at iteration {0} (regularization exhausted)")]
    LineSearch(usize),
    #[error("non-finite value encountered at iteration {0}")]
    NonFinite(usize),
}

/// Problem callbacks. Triplets use row = constraint, col = variable for the
/// Jacobian; the Hessian of the Lagrangian sigma*f + sum(lambda_k c_k) is
/// given as the lower triangle (row >= col).
pub trait NlpProblem {
    fn num_vars(&self) -> usize;
    fn num_cons(&self) -> usize;
    fn bounds(&self) -> (Vec<f64>, Vec<f64>);
    fn initial_point(&self) -> Vec<f64>;
    fn objective(&self, x: &[f64]) -> f64;
    fn gradient(&self, x: &[f64], grad: &mut [f64]);
    fn constraints(&self, x: &[f64], out: &mut [f64]);
    fn jacobian(&self, x: &[f64]) -> Vec<Triplet<usize, usize, f64>>;
    fn lagrangian_hessian(
        &self,
        x: &[f64],
        obj_factor: f64,
        lambda: &[f64],
    ) -> Vec<Triplet<usize, usize, f64>>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IpmStatus {
    Optimal,
    IterLimit,
    Infeasible,
}

#[derive(Debug, Clone)]
pub struct IpmSolution {
    pub status: IpmStatus,
    pub x: Vec<f64>,
    pub lambda: Vec<f64>,
    pub objective: f64,
    pub kkt_error: f64,
    pub constraint_violation: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct IpmOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub mu_init: f64,
    /// Fraction-to-boundary floor.
    pub tau_min: f64,
    pub print: bool,
}

impl Default for IpmOptions {
    fn default() -> Self {
        IpmOptions {
            tol: 1e-6,
            max_iter: 300,
            mu_init: 0.1,
            tau_min: 0.995,
            print: false,
        }
    }
}

const KAPPA_EPS: f64 = 10.0;
const KAPPA_MU: f64 = 0.2;
const THETA_MU: f64 = 1.5;
const KAPPA_SIGMA: f64 = 1e10;
const S_MAX: f64 = 100.0;

struct Scaling {
    obj: f64,
    cons: Vec<f64>,
}

/// Solve the NLP. Gradient-based objective/constraint scaling is applied
/// internally; reported objective and multipliers are unscaled.
pub fn solve(problem: &dyn NlpProblem, opts: &IpmOptions) -> Result<IpmSolution, NlpError> {
    let n_full = problem.num_vars();
    let m = problem.num_cons();
    let (orig_lb, orig_ub) = problem.bounds();

    // fixed variables are substituted out
    let free: Vec<usize> = (0..n_full)
        .filter(|&i| orig_ub[i] - orig_lb[i] > 1e-14)
        .collect();

    // relax the remaining bounds slightly so equality-pinned variables
    // keep a strict interior (constraints may force a variable exactly
    // onto its bound, where the log barrier alone has no solution)
    let mut lb = orig_lb.clone();
    let mut ub = orig_ub.clone();
    for &i in &free {
        if lb[i].is_finite() {
            lb[i] -= 1e-8 * lb[i].abs().max(1.0);
        }
        if ub[i].is_finite() {
            ub[i] += 1e-8 * ub[i].abs().max(1.0);
        }
    }
    let mut col_of = vec![usize::MAX; n_full];
    for (c, &i) in free.iter().enumerate() {
        col_of[i] = c;
    }
    let n = free.len();

    let mut x_full = problem.initial_point();
    for i in 0..n_full {
        if col_of[i] == usize::MAX {
            x_full[i] = orig_lb[i];
        }
    }

    // push the start strictly inside the bounds
    for &i in &free {
        let (l, u) = (lb[i], ub[i]);
        if l.is_finite() && u.is_finite() {
            let pad = 0.01 * (u - l).min(1.0).max(1e-8);
            x_full[i] = x_full[i].clamp(l + pad, u - pad);
        } else if l.is_finite() {
            x_full[i] = x_full[i].max(l + 0.01 * (1.0 + l.abs()).min(1.0));
        } else if u.is_finite() {
            x_full[i] = x_full[i].min(u - 0.01 * (1.0 + u.abs()).min(1.0));
        }
    }

    // gradient-based scaling at the start point
    let scaling = {
        let mut grad = vec![0.0; n_full];
        problem.gradient(&x_full, &mut grad);
        let gmax = grad.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
        let obj = (100.0 / gmax.max(100.0)).min(1.0);
        let jac = problem.jacobian(&x_full);
        let mut cmax = vec![0.0_f64; m];
        for t in &jac {
            cmax[t.row] = cmax[t.row].max(t.val.abs());
        }
        let cons: Vec<f64> = cmax
            .iter()
            .map(|&g| (100.0 / g.max(100.0)).min(1.0))
            .collect();
        Scaling { obj, cons }
    };

    let mut lambda = vec![0.0; m];
    let mut zl = vec![0.0; n];
    let mut zu = vec![0.0; n];
    for (c, &i) in free.iter().enumerate() {
        if lb[i].is_finite() {
            zl[c] = 1.0;
        }
        if ub[i].is_finite() {
            zu[c] = 1.0;
        }
    }

    let mut mu = opts.mu_init;
    let mut delta_w_last = 0.0_f64;
    // persistent curvature floor, adapted from line-search behavior
    let mut delta_w_persist = 0.0_f64;
    let mut nu = 1.0_f64; // merit penalty weight

    let eval_f = |x: &[f64]| scaling.obj * problem.objective(x);
    let eval_c = |x: &[f64], out: &mut [f64]| {
        problem.constraints(x, out);
        for k in 0..m {
            out[k] *= scaling.cons[k];
        }
    };

    let mut c = vec![0.0; m];
    eval_c(&x_full, &mut c);
    let mut grad_full = vec![0.0; n_full];
    problem.gradient(&x_full, &mut grad_full);

    let mut best_infeas = f64::INFINITY;
    let mut infeas_stall = 0usize;

    let barrier = |x_full: &[f64], mu: f64| -> f64 {
        let mut phi = 0.0;
        for &i in &free {
            if lb[i].is_finite() {
                phi -= mu * (x_full[i] - lb[i]).ln();
            }
            if ub[i].is_finite() {
                phi -= mu * (ub[i] - x_full[i]).ln();
            }
        }
        phi
    };

    let mut iterations = 0;
    loop {
        // residuals and optimality error
        let jac_tri: Vec<Triplet<usize, usize, f64>> = problem
            .jacobian(&x_full)
            .into_iter()
            .filter(|t| col_of[t.col] != usize::MAX)
            .map(|t| Triplet::new(t.row, col_of[t.col], t.val * scaling.cons[t.row]))
            .collect();

        // dual residual: grad f + J^T lambda - zl + zu (free coords)
        let mut r_dual = vec![0.0; n];
        for (cidx, &i) in free.iter().enumerate() {
            r_dual[cidx] = scaling.obj * grad_full[i] - zl[cidx] + zu[cidx];
        }
        for t in &jac_tri {
            r_dual[t.col] += t.val * lambda[t.row];
        }

        let z_sum: f64 = zl.iter().sum::<f64>() + zu.iter().sum::<f64>()
            + lambda.iter().map(|v| v.abs()).sum::<f64>();
        let denom = (m + 2 * n).max(1) as f64;
        let s_d = (z_sum / denom).max(S_MAX) / S_MAX;

        let mut comp_err_0 = 0.0_f64; // complementarity at mu = 0
        let mut comp_err_mu = 0.0_f64;
        for (cidx, &i) in free.iter().enumerate() {
            if lb[i].is_finite() {
                let prod = zl[cidx] * (x_full[i] - lb[i]);
                comp_err_0 = comp_err_0.max(prod.abs());
                comp_err_mu = comp_err_mu.max((prod - mu).abs());
            }
            if ub[i].is_finite() {
                let prod = zu[cidx] * (ub[i] - x_full[i]);
                comp_err_0 = comp_err_0.max(prod.abs());
                comp_err_mu = comp_err_mu.max((prod - mu).abs());
            }
        }
        let dual_inf = r_dual.iter().fold(0.0_f64, |a, v| a.max(v.abs())) / s_d;
        let prim_inf = c.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
        let err_0 = dual_inf.max(prim_inf).max(comp_err_0 / s_d);
        let err_mu = dual_inf.max(prim_inf).max(comp_err_mu / s_d);

        if opts.print || std::env::var_os("GRIDSMITH_IPM_TRACE").is_some() {
            eprintln!(
                "ipm iter {iterations:>3} mu {mu:.2e} obj {:.6e} dual {dual_inf:.2e} prim {prim_inf:.2e}",
                problem.objective(&x_full)
            );
        }

        if err_0 <= opts.tol {
            return Ok(finish(
                IpmStatus::Optimal,
                problem,
                &scaling,
                clip(x_full, &orig_lb, &orig_ub),
                lambda,
                err_0,
                prim_inf,
                iterations,
            ));
        }
        if iterations >= opts.max_iter {
            let status = if prim_inf > opts.tol * 100.0 {
                IpmStatus::Infeasible
            } else {
                IpmStatus::IterLimit
            };
            return Ok(finish(
                status,
                problem,
                &scaling,
                clip(x_full, &orig_lb, &orig_ub),
                lambda,
                err_0,
                prim_inf,
                iterations,
            ));
        }

        // infeasibility stall detection (primal infeasible problems)
        if prim_inf < best_infeas * (1.0 - 1e-3) {
            best_infeas = prim_inf;
            infeas_stall = 0;
        } else {
            infeas_stall += 1;
        }
        if mu <= opts.tol && prim_inf > (opts.tol * 100.0).max(1e-5) && infeas_stall > 25 {
            return Ok(finish(
                IpmStatus::Infeasible,
                problem,
                &scaling,
                clip(x_full, &orig_lb, &orig_ub),
                lambda,
                err_0,
                prim_inf,
                iterations,
            ));
        }

        // barrier update
        if err_mu <= KAPPA_EPS * mu {
            mu = (opts.tol / 10.0).max((KAPPA_MU * mu).min(mu.powf(THETA_MU)));
        }
        let tau = opts.tau_min.max(1.0 - mu);
        iterations += 1;

        // assemble and solve the augmented KKT system
        let mut sigma = vec![0.0; n];
        let mut rhs = Mat::<f64>::zeros(n + m, 1);
        for (cidx, &i) in free.iter().enumerate() {
            let mut g = scaling.obj * grad_full[i];
            if lb[i].is_finite() {
                let sl = x_full[i] - lb[i];
                sigma[cidx] += zl[cidx] / sl;
                g -= mu / sl;
            }
            if ub[i].is_finite() {
                let su = ub[i] - x_full[i];
                sigma[cidx] += zu[cidx] / su;
                g += mu / su;
            }
            rhs[(cidx, 0)] = -g;
        }
        for t in &jac_tri {
            rhs[(t.col, 0)] -= t.val * lambda[t.row];
        }
        for k in 0..m {
            rhs[(n + k, 0)] = -c[k];
        }

        let hess_tri: Vec<Triplet<usize, usize, f64>> = problem
            .lagrangian_hessian(&x_full, scaling.obj, &scaled_lambda(&lambda, &scaling))
            .into_iter()
            .filter(|t| col_of[t.row] != usize::MAX && col_of[t.col] != usize::MAX)
            .map(|t| Triplet::new(col_of[t.row], col_of[t.col], t.val))
            .collect();

        let mut delta_w = delta_w_persist;
        let mut tries = 0;
        let (dx, dlam, kkt_lu) = loop {
            tries += 1;
            if tries > 40 {
                return Err(NlpError::LineSearch(iterations));
            }
            let mut kkt: Vec<Triplet<usize, usize, f64>> =
                Vec::with_capacity(hess_tri.len() * 2 + jac_tri.len() * 2 + n + m);
            for t in &hess_tri {
                kkt.push(Triplet::new(t.row, t.col, t.val));
                if t.row != t.col {
                    kkt.push(Triplet::new(t.col, t.row, t.val));
                }
            }
            for (cidx, _) in free.iter().enumerate() {
                kkt.push(Triplet::new(cidx, cidx, sigma[cidx] + delta_w));
            }
            for t in &jac_tri {
                kkt.push(Triplet::new(n + t.row, t.col, t.val));
                kkt.push(Triplet::new(t.col, n + t.row, t.val));
            }
            let delta_c = 1e-8;
            for k in 0..m {
                kkt.push(Triplet::new(n + k, n + k, -delta_c));
            }

            let kkt_mat = SparseColMat::try_new_from_triplets(n + m, n + m, &kkt)
                .map_err(|_| NlpError::Factorization(iterations))?;
            let Ok(lu) = kkt_mat.as_ref().sp_lu() else {
                delta_w = bump(delta_w, &mut delta_w_last);
                continue;
            };
            let mut sol = lu.solve(rhs.as_ref());
            // iterative refinement: the slack-penalty barrier makes the
            // KKT system ill-conditioned enough to lose ~6 digits
            for _ in 0..2 {
                let mut residual = Mat::<f64>::zeros(n + m, 1);
                for r in 0..n + m {
                    residual[(r, 0)] = rhs[(r, 0)];
                }
                for t in kkt_mat.triplet_iter() {
                    residual[(t.row, 0)] -= *t.val * sol[(t.col, 0)];
                }
                let correction = lu.solve(residual.as_ref());
                for r in 0..n + m {
                    sol[(r, 0)] += correction[(r, 0)];
                }
            }
            let dx: Vec<f64> = (0..n).map(|i| sol[(i, 0)]).collect();
            let dlam: Vec<f64> = (0..m).map(|k| sol[(n + k, 0)]).collect();
            if dx.iter().chain(dlam.iter()).any(|v| !v.is_finite()) {
                delta_w = bump(delta_w, &mut delta_w_last);
                continue;
            }

            // descent check for the barrier part
            let dphi: f64 = (0..n).map(|i| -rhs[(i, 0)] * dx[i]).sum::<f64>()
                - jac_dot(&jac_tri, &lambda, &dx);
            // dphi = grad_phi . dx (grad_phi = -(rhs_x) - J^T lambda)
            if dphi > 1e-14 && prim_inf < 1e-10 {
                delta_w = bump(delta_w, &mut delta_w_last);
                continue;
            }
            break (dx, dlam, lu);
        };

        // dz from the complementarity rows
        let mut dzl = vec![0.0; n];
        let mut dzu = vec![0.0; n];
        for (cidx, &i) in free.iter().enumerate() {
            if lb[i].is_finite() {
                let sl = x_full[i] - lb[i];
                dzl[cidx] = mu / sl - zl[cidx] - zl[cidx] / sl * dx[cidx];
            }
            if ub[i].is_finite() {
                let su = ub[i] - x_full[i];
                dzu[cidx] = mu / su - zu[cidx] + zu[cidx] / su * dx[cidx];
            }
        }

        // fraction-to-boundary step limits
        let mut alpha_max = 1.0_f64;
        for (cidx, &i) in free.iter().enumerate() {
            if dx[cidx] < 0.0 && lb[i].is_finite() {
                alpha_max = alpha_max.min(tau * (x_full[i] - lb[i]) / -dx[cidx]);
            }
            if dx[cidx] > 0.0 && ub[i].is_finite() {
                alpha_max = alpha_max.min(tau * (ub[i] - x_full[i]) / dx[cidx]);
            }
        }
        let mut alpha_z = 1.0_f64;
        for cidx in 0..n {
            if dzl[cidx] < 0.0 && zl[cidx] > 0.0 {
                alpha_z = alpha_z.min(tau * zl[cidx] / -dzl[cidx]);
            }
            if dzu[cidx] < 0.0 && zu[cidx] > 0.0 {
                alpha_z = alpha_z.min(tau * zu[cidx] / -dzu[cidx]);
            }
        }

        // l1 merit line search
        let c_norm: f64 = c.iter().map(|v| v.abs()).sum();
        let grad_phi_dx: f64 = (0..n).map(|i| -rhs[(i, 0)] * dx[i]).sum::<f64>()
            - jac_dot(&jac_tri, &lambda, &dx);
        if c_norm > 1e-9 && grad_phi_dx > 0.0 {
            // penalty pressure only needed when the barrier part pushes uphill
            let needed = grad_phi_dx / (0.5 * c_norm) + 1.0;
            if nu < needed {
                nu = needed;
            }
        } else if c_norm < 1e-9 {
            nu = (nu * 0.5).max(1.0);
        }
        let merit0 = eval_f(&x_full) + barrier(&x_full, mu) + nu * c_norm;
        let d_merit = grad_phi_dx - nu * c_norm;

        let mut alpha = alpha_max;
        let mut x_trial = x_full.clone();
        let mut c_trial = vec![0.0; m];
        let mut accepted = false;
        let mut soc_tried = false;
        for _ in 0..40 {
            for (cidx, &i) in free.iter().enumerate() {
                x_trial[i] = x_full[i] + alpha * dx[cidx];
            }
            eval_c(&x_trial, &mut c_trial);
            let ct_norm: f64 = c_trial.iter().map(|v| v.abs()).sum();
            let merit_t = eval_f(&x_trial) + barrier(&x_trial, mu) + nu * ct_norm;
            if merit_t.is_finite() && merit_t <= merit0 + 1e-4 * alpha * d_merit.min(0.0) {
                accepted = true;
                break;
            }

            // second-order correction: constraints curve away along the full
            // step; re-solve with the same factorization for a correction
            // that restores them, then re-test the corrected point
            if !soc_tried && alpha == alpha_max && ct_norm > c_norm {
                soc_tried = true;
                let mut soc_rhs = Mat::<f64>::zeros(n + m, 1);
                for k in 0..m {
                    soc_rhs[(n + k, 0)] = -c_trial[k];
                }
                let cor = kkt_lu.solve(soc_rhs.as_ref());
                let mut x_soc = x_trial.clone();
                let mut scale_soc = 1.0_f64;
                for (cidx, &i) in free.iter().enumerate() {
                    let d = cor[(cidx, 0)];
                    if d < 0.0 && lb[i].is_finite() {
                        scale_soc = scale_soc.min(tau * (x_trial[i] - lb[i]) / -d);
                    }
                    if d > 0.0 && ub[i].is_finite() {
                        scale_soc = scale_soc.min(tau * (ub[i] - x_trial[i]) / d);
                    }
                }
                for (cidx, &i) in free.iter().enumerate() {
                    x_soc[i] = x_trial[i] + scale_soc * cor[(cidx, 0)];
                }
                let mut c_soc = vec![0.0; m];
                eval_c(&x_soc, &mut c_soc);
                let cs_norm: f64 = c_soc.iter().map(|v| v.abs()).sum();
                let merit_s = eval_f(&x_soc) + barrier(&x_soc, mu) + nu * cs_norm;
                if merit_s.is_finite() && merit_s <= merit0 + 1e-4 * alpha * d_merit.min(0.0) {
                    x_trial = x_soc;
                    c_trial = c_soc;
                    accepted = true;
                    break;
                }
            }
            alpha *= 0.5;
        }
        if !accepted {
            // fall back to a tiny step with extra regularization next round
            delta_w_persist = (delta_w_persist * 10.0).max(1e-6);
            alpha = alpha_max.min(1e-8);
            for (cidx, &i) in free.iter().enumerate() {
                x_trial[i] = x_full[i] + alpha * dx[cidx];
            }
            eval_c(&x_trial, &mut c_trial);
        } else if alpha < alpha_max / 16.0 {
            // heavy backtracking: the quadratic model over-reaches, add
            // curvature so the next step is shorter
            delta_w_persist = (delta_w_persist * 5.0).max(1e-6);
        } else if alpha >= alpha_max / 2.0 {
            delta_w_persist = if delta_w_persist < 1e-12 {
                0.0
            } else {
                delta_w_persist / 3.0
            };
        }

        x_full = x_trial;
        c.copy_from_slice(&c_trial);
        problem.gradient(&x_full, &mut grad_full);
        for k in 0..m {
            lambda[k] += alpha * dlam[k];
        }
        for cidx in 0..n {
            zl[cidx] = (zl[cidx] + alpha_z * dzl[cidx]).max(0.0);
            zu[cidx] = (zu[cidx] + alpha_z * dzu[cidx]).max(0.0);
        }

        // dual safeguard: keep z consistent with mu/slack within a factor
        for (cidx, &i) in free.iter().enumerate() {
            if lb[i].is_finite() {
                let sl = x_full[i] - lb[i];
                zl[cidx] = zl[cidx]
                    .clamp(mu / (KAPPA_SIGMA * sl), KAPPA_SIGMA * mu / sl);
            }
            if ub[i].is_finite() {
                let su = ub[i] - x_full[i];
                zu[cidx] = zu[cidx]
                    .clamp(mu / (KAPPA_SIGMA * su), KAPPA_SIGMA * mu / su);
            }
        }

        if x_full.iter().any(|v| !v.is_finite()) {
            return Err(NlpError::NonFinite(iterations));
        }
    }
}

fn clip(mut x: Vec<f64>, lb: &[f64], ub: &[f64]) -> Vec<f64> {
    for i in 0..x.len() {
        x[i] = x[i].clamp(lb[i], ub[i]);
    }
    x
}

fn bump(delta: f64, last: &mut f64) -> f64 {
    let next = if delta == 0.0 {
        if *last == 0.0 {
            1e-4
        } else {
            (*last / 3.0).max(1e-20)
        }
    } else {
        delta * 8.0
    };
    *last = next;
    next
}

fn jac_dot(jac: &[Triplet<usize, usize, f64>], lambda: &[f64], dx: &[f64]) -> f64 {
    jac.iter().map(|t| lambda[t.row] * t.val * dx[t.col]).sum()
}

fn scaled_lambda(lambda: &[f64], scaling: &Scaling) -> Vec<f64> {
    lambda
        .iter()
        .zip(&scaling.cons)
        .map(|(&l, &s)| l * s)
        .collect()
}

#[allow(clippy::too_many_arguments)]
fn finish(
    status: IpmStatus,
    problem: &dyn NlpProblem,
    scaling: &Scaling,
    x: Vec<f64>,
    lambda: Vec<f64>,
    kkt_error: f64,
    prim_inf: f64,
    iterations: usize,
) -> IpmSolution {
    let objective = problem.objective(&x);
    // unscale multipliers: lambda_orig = lambda * s_c / s_obj
    let lambda = lambda
        .iter()
        .zip(&scaling.cons)
        .map(|(&l, &s)| l * s / scaling.obj)
        .collect();
    IpmSolution {
        status,
        x,
        lambda,
        objective,
        kkt_error,
        constraint_violation: prim_inf,
        iterations,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// min (x-2)^2 + (y-1)^2 s.t. x + y = 1, 0 <= x,y <= 0.8
    struct Toy;

    impl NlpProblem for Toy {
        fn num_vars(&self) -> usize {
            2
        }
        fn num_cons(&self) -> usize {
            1
        }
        fn bounds(&self) -> (Vec<f64>, Vec<f64>) {
            (vec![0.0, 0.0], vec![0.8, 0.8])
        }
        fn initial_point(&self) -> Vec<f64> {
            vec![0.5, 0.5]
        }
        fn objective(&self, x: &[f64]) -> f64 {
            (x[0] - 2.0).powi(2) + (x[1] - 1.0).powi(2)
        }
        fn gradient(&self, x: &[f64], grad: &mut [f64]) {
            grad[0] = 2.0 * (x[0] - 2.0);
            grad[1] = 2.0 * (x[1] - 1.0);
        }
        fn constraints(&self, x: &[f64], out: &mut [f64]) {
            out[0] = x[0] + x[1] - 1.0;
        }
        fn jacobian(&self, _x: &[f64]) -> Vec<Triplet<usize, usize, f64>> {
            vec![Triplet::new(0, 0, 1.0), Triplet::new(0, 1, 1.0)]
        }
        fn lagrangian_hessian(
            &self,
            _x: &[f64],
            obj_factor: f64,
            _lambda: &[f64],
        ) -> Vec<Triplet<usize, usize, f64>> {
            vec![
                Triplet::new(0, 0, 2.0 * obj_factor),
                Triplet::new(1, 1, 2.0 * obj_factor),
            ]
        }
    }

    #[test]
    fn solves_bounded_qp() {
        // the x <= 0.8 bound is strictly active: x = 0.8, y = 0.2
        let opts = IpmOptions {
            tol: 1e-9,
            ..Default::default()
        };
        let sol = solve(&Toy, &opts).unwrap();
        assert_eq!(sol.status, IpmStatus::Optimal);
        assert!((sol.x[0] - 0.8).abs() < 1e-6, "x = {:?}", sol.x);
        assert!((sol.x[1] - 0.2).abs() < 1e-6);
        assert!((sol.objective - 2.08).abs() < 1e-6);
    }

    /// Infeasible: x + y = 3 with x,y in [0,1].
    struct Bad;

    impl NlpProblem for Bad {
        fn num_vars(&self) -> usize {
            2
        }
        fn num_cons(&self) -> usize {
            1
        }
        fn bounds(&self) -> (Vec<f64>, Vec<f64>) {
            (vec![0.0, 0.0], vec![1.0, 1.0])
        }
        fn initial_point(&self) -> Vec<f64> {
            vec![0.5, 0.5]
        }
        fn objective(&self, x: &[f64]) -> f64 {
            x[0]
        }
        fn gradient(&self, _x: &[f64], grad: &mut [f64]) {
            grad[0] = 1.0;
            grad[1] = 0.0;
        }
        fn constraints(&self, x: &[f64], out: &mut [f64]) {
            out[0] = x[0] + x[1] - 3.0;
        }
        fn jacobian(&self, _x: &[f64]) -> Vec<Triplet<usize, usize, f64>> {
            vec![Triplet::new(0, 0, 1.0), Triplet::new(0, 1, 1.0)]
        }
        fn lagrangian_hessian(
            &self,
            _x: &[f64],
            _obj_factor: f64,
            _lambda: &[f64],
        ) -> Vec<Triplet<usize, usize, f64>> {
            Vec::new()
        }
    }

    #[test]
    fn detects_infeasibility() {
        let sol = solve(
            &Bad,
            &IpmOptions {
                max_iter: 150,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(sol.status, IpmStatus::Infeasible);
        assert!(sol.constraint_violation > 0.5);
    }

    /// Fixed variable (l == u) is held and eliminated.
    struct Fixed;

    impl NlpProblem for Fixed {
        fn num_vars(&self) -> usize {
            2
        }
        fn num_cons(&self) -> usize {
            1
        }
        fn bounds(&self) -> (Vec<f64>, Vec<f64>) {
            (vec![0.25, -10.0], vec![0.25, 10.0])
        }
        fn initial_point(&self) -> Vec<f64> {
            vec![0.0, 0.0]
        }
        fn objective(&self, x: &[f64]) -> f64 {
            x[1] * x[1]
        }
        fn gradient(&self, x: &[f64], grad: &mut [f64]) {
            grad[0] = 0.0;
            grad[1] = 2.0 * x[1];
        }
        fn constraints(&self, x: &[f64], out: &mut [f64]) {
            out[0] = x[0] + x[1] - 1.0;
        }
        fn jacobian(&self, _x: &[f64]) -> Vec<Triplet<usize, usize, f64>> {
            vec![Triplet::new(0, 0, 1.0), Triplet::new(0, 1, 1.0)]
        }
        fn lagrangian_hessian(
            &self,
            _x: &[f64],
            obj_factor: f64,
            _lambda: &[f64],
        ) -> Vec<Triplet<usize, usize, f64>> {
            vec![Triplet::new(1, 1, 2.0 * obj_factor)]
        }
    }

    #[test]
    fn fixed_variable_respected() {
        let sol = solve(&Fixed, &IpmOptions::default()).unwrap();
        assert_eq!(sol.status, IpmStatus::Optimal);
        assert!((sol.x[0] - 0.25).abs() < 1e-12);
        assert!((sol.x[1] - 0.75).abs() < 1e-5);
    }
}
