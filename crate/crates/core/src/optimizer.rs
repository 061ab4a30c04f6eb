//! Minimization of the weighted-sum AoI over the power-splitting ratio.
//!
//! The objective is strictly convex on `(0, 1)` for every weight, so the
//! minimizer is the unique root of the gradient. [`newton_solve`] runs damped
//! Newton iterations on that root and falls back to bisection on the gradient
//! sign whenever Newton cannot make progress. For `w = 0` (`w = 1`) the
//! gradient never changes sign and the minimum sits on the admissible
//! interval's left (right) edge; those are reported as boundary solutions.

use rayon::prelude::*;

use crate::analytic::weighted_sum_aoi;
use crate::model::{derive_constants, SystemParams};
use crate::{Error, Result};

const MAX_HALVINGS: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptOptions {
    pub rho_init: f64,
    pub max_iters: usize,
    /// Convergence threshold on `|rho_{n+1} - rho_n|`.
    pub tol: f64,
    /// Search is restricted to `[boundary_eps, 1 - boundary_eps]`.
    pub boundary_eps: f64,
}

impl Default for OptOptions {
    fn default() -> Self {
        Self {
            rho_init: 0.5,
            max_iters: 100,
            tol: 1e-12,
            boundary_eps: 1e-4,
        }
    }
}

impl OptOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.boundary_eps > 0.0 && self.boundary_eps < 0.5) {
            return Err(Error::param("boundary_eps", "must lie in (0, 0.5)"));
        }
        if self.tol.is_nan() || self.tol <= 0.0 {
            return Err(Error::param("tol", "must be > 0"));
        }
        if self.max_iters == 0 {
            return Err(Error::param("max_iters", "must be >= 1"));
        }
        if !(0.0..=1.0).contains(&self.rho_init) {
            return Err(Error::param("rho_init", "must lie in [0, 1]"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Newton,
    Bisection,
    /// The gradient keeps one sign on the whole admissible interval.
    Boundary,
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Method::Newton => "newton",
            Method::Bisection => "bisection",
            Method::Boundary => "boundary",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TracePoint {
    pub rho: f64,
    pub aoi: f64,
    pub gradient: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptResult {
    pub w: f64,
    pub rho_star: f64,
    pub aoi_star: f64,
    pub iterations: usize,
    pub trace: Vec<TracePoint>,
    pub converged: bool,
    pub method: Method,
}

fn check_interior(rho: f64) -> Result<()> {
    if rho > 0.0 && rho < 1.0 {
        Ok(())
    } else {
        Err(Error::domain(format!(
            "derivatives are defined on the open interval (0, 1), got rho = {rho}"
        )))
    }
}

fn check_weight(w: f64) -> Result<()> {
    if (0.0..=1.0).contains(&w) {
        Ok(())
    } else {
        Err(Error::domain(format!("weight must lie in [0, 1], got {w}")))
    }
}

/// Constants of the objective's derivatives: `theta`, `c = lambda theta d^alpha`
/// and the harvest factor `a`.
fn shape(params: &SystemParams) -> (f64, f64, f64) {
    let loads = derive_constants(params, 0.5).expect("0.5 is a valid split");
    let theta = loads.theta;
    let c = params.channel_rate() * theta * params.path_loss();
    (theta, c, loads.harvest_factor)
}

/// `d(weighted AoI)/d(rho)`.
pub fn aoi_gradient(params: &SystemParams, rho: f64, w: f64) -> Result<f64> {
    check_interior(rho)?;
    check_weight(w)?;
    let (theta, c, a) = shape(params);
    let down = 1.5 * theta / (1.0 - rho).powi(2) + 0.5 * theta / (1.0 + theta - rho).powi(2);
    let up = -1.5 * a * c / (rho * rho) - 0.5 * a * c / (rho + c).powi(2);
    Ok((1.0 - w) * down + w * up)
}

/// `d^2(weighted AoI)/d(rho)^2`; strictly positive on `(0, 1)`.
pub fn aoi_second_derivative(params: &SystemParams, rho: f64, w: f64) -> Result<f64> {
    check_interior(rho)?;
    check_weight(w)?;
    let (theta, c, a) = shape(params);
    let down = 3.0 * theta / (1.0 - rho).powi(3) + theta / (1.0 + theta - rho).powi(3);
    let up = a * c * (3.0 / rho.powi(3) + 1.0 / (rho + c).powi(3));
    Ok((1.0 - w) * down + w * up)
}

fn objective(params: &SystemParams, rho: f64, w: f64) -> f64 {
    weighted_sum_aoi(params, rho, w)
        .expect("rho and w validated by caller")
        .weighted
}

fn point(params: &SystemParams, rho: f64, w: f64) -> Result<TracePoint> {
    Ok(TracePoint {
        rho,
        aoi: objective(params, rho, w),
        gradient: aoi_gradient(params, rho, w)?,
    })
}

/// Finds `rho*(w)`, the minimizer of the weighted-sum AoI.
///
/// A returned result with `converged == false` means the iteration budget ran
/// out; [`sweep_w`] turns that into [`Error::NotConverged`].
pub fn newton_solve(params: &SystemParams, w: f64, opts: &OptOptions) -> Result<OptResult> {
    opts.validate()?;
    check_weight(w)?;
    let lo_edge = opts.boundary_eps;
    let hi_edge = 1.0 - opts.boundary_eps;

    let left = point(params, lo_edge, w)?;
    let right = point(params, hi_edge, w)?;
    if left.gradient >= 0.0 || right.gradient <= 0.0 {
        let edge = if left.gradient >= 0.0 { left } else { right };
        return Ok(OptResult {
            w,
            rho_star: edge.rho,
            aoi_star: edge.aoi,
            iterations: 0,
            trace: vec![edge],
            converged: true,
            method: Method::Boundary,
        });
    }
    let grad_scale = left.gradient.abs();
    let accept = |g: f64| g.abs() <= 1e-8 * grad_scale;

    // Bracket [lo, hi] with gradient < 0 at lo and > 0 at hi, tightened as we go.
    let (mut lo, mut hi) = (lo_edge, hi_edge);
    let mut rho = opts.rho_init.clamp(lo_edge, hi_edge);
    let mut trace = Vec::new();
    let mut iterations = 0;

    while iterations < opts.max_iters {
        iterations += 1;
        let here = point(params, rho, w)?;
        trace.push(here);
        if here.gradient == 0.0 {
            return Ok(finish(w, here, iterations, trace, Method::Newton));
        }
        if here.gradient < 0.0 {
            lo = lo.max(rho);
        } else {
            hi = hi.min(rho);
        }

        let curvature = aoi_second_derivative(params, rho, w)?;
        let mut step = -here.gradient / curvature;
        let slack = 4.0 * f64::EPSILON * here.aoi.abs();
        let mut halvings = 0;
        let next = loop {
            let cand = rho + step;
            if (lo_edge..=hi_edge).contains(&cand) && objective(params, cand, w) <= here.aoi + slack
            {
                break Some(cand);
            }
            step *= 0.5;
            halvings += 1;
            if halvings > MAX_HALVINGS {
                break None;
            }
        };
        let Some(next) = next else { break };

        if (next - rho).abs() <= opts.tol {
            let end = point(params, next, w)?;
            if accept(end.gradient) {
                trace.push(end);
                return Ok(finish(w, end, iterations, trace, Method::Newton));
            }
            // A tiny step with a large gradient is a stall, not convergence.
            break;
        }
        rho = next;
    }

    while iterations < opts.max_iters {
        iterations += 1;
        let mid = 0.5 * (lo + hi);
        let here = point(params, mid, w)?;
        trace.push(here);
        if here.gradient < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= opts.tol || here.gradient == 0.0 {
            return Ok(finish(w, here, iterations, trace, Method::Bisection));
        }
    }

    let last = *trace.last().expect("at least one iteration ran");
    Ok(OptResult {
        w,
        rho_star: last.rho,
        aoi_star: last.aoi,
        iterations,
        trace,
        converged: false,
        method: Method::Bisection,
    })
}

fn finish(
    w: f64,
    at: TracePoint,
    iterations: usize,
    trace: Vec<TracePoint>,
    method: Method,
) -> OptResult {
    OptResult {
        w,
        rho_star: at.rho,
        aoi_star: at.aoi,
        iterations,
        trace,
        converged: true,
        method,
    }
}

/// Solves every weight in `w_grid` (independently, in parallel); output order
/// follows the grid.
pub fn sweep_w(params: &SystemParams, w_grid: &[f64], opts: &OptOptions) -> Result<Vec<OptResult>> {
    if let Some(&w) = w_grid.iter().find(|w| !(0.0..=1.0).contains(*w)) {
        return Err(Error::domain(format!(
            "weight grid value {w} outside [0, 1]"
        )));
    }
    if w_grid.windows(2).any(|p| p[0] > p[1]) {
        return Err(Error::domain("weight grid must be sorted ascending"));
    }
    let results: Vec<OptResult> = w_grid
        .par_iter()
        .map(|&w| newton_solve(params, w, opts))
        .collect::<Result<_>>()?;
    if let Some(bad) = results.iter().find(|r| !r.converged) {
        return Err(Error::NotConverged {
            w: bad.w,
            iterations: bad.iterations,
        });
    }
    Ok(results)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn reference() -> SystemParams {
        SystemParams::default()
    }

    #[test]
    fn gradient_signs_at_extreme_weights() {
        let p = reference();
        for i in 1..50 {
            let rho = i as f64 / 50.0;
            assert!(aoi_gradient(&p, rho, 0.0).unwrap() > 0.0);
            assert!(aoi_gradient(&p, rho, 1.0).unwrap() < 0.0);
        }
    }

    #[test]
    fn derivatives_reject_boundaries() {
        let p = reference();
        assert!(aoi_gradient(&p, 0.0, 0.5).is_err());
        assert!(aoi_gradient(&p, 1.0, 0.5).is_err());
        assert!(aoi_second_derivative(&p, 0.0, 0.5).is_err());
        assert!(aoi_second_derivative(&p, 1.0, 0.5).is_err());
    }

    #[test]
    fn curvature_reference_value() {
        let v = aoi_second_derivative(&reference(), 0.5, 0.0).unwrap();
        assert_relative_eq!(v, 648.0 + 27.0 / 27.5f64.powi(3), max_relative = 1e-12);
        assert!((v - 648.0013).abs() < 1e-4);
    }

    #[test]
    fn zero_weight_is_left_boundary() {
        let r = newton_solve(&reference(), 0.0, &OptOptions::default()).unwrap();
        assert_eq!(r.method, Method::Boundary);
        assert_eq!(r.rho_star, 1e-4);
        let r = newton_solve(&reference(), 1.0, &OptOptions::default()).unwrap();
        assert_eq!(r.method, Method::Boundary);
        assert_eq!(r.rho_star, 1.0 - 1e-4);
    }

    #[test]
    fn interior_root_has_vanishing_gradient() {
        let p = reference();
        let opts = OptOptions::default();
        for w in [0.05, 0.1, 0.5, 0.9, 0.95] {
            let r = newton_solve(&p, w, &opts).unwrap();
            assert!(r.converged);
            let scale = aoi_gradient(&p, opts.boundary_eps, w).unwrap().abs();
            assert!(aoi_gradient(&p, r.rho_star, w).unwrap().abs() < 1e-8 * scale);
        }
    }

    #[test]
    fn bad_starting_point_still_converges() {
        let p = reference();
        for rho_init in [0.0, 1e-4, 0.02, 0.999, 1.0] {
            let opts = OptOptions {
                rho_init,
                ..OptOptions::default()
            };
            let r = newton_solve(&p, 0.5, &opts).unwrap();
            assert!(r.converged, "rho_init = {rho_init}");
            let base = newton_solve(&p, 0.5, &OptOptions::default()).unwrap();
            assert!((r.rho_star - base.rho_star).abs() < 1e-9);
        }
    }

    #[test]
    fn tiny_budget_reports_failure() {
        let opts = OptOptions {
            max_iters: 1,
            ..OptOptions::default()
        };
        let r = newton_solve(&reference(), 0.5, &opts).unwrap();
        assert!(!r.converged);
        let err = sweep_w(&reference(), &[0.2, 0.5], &opts).unwrap_err();
        assert!(matches!(err, Error::NotConverged { w, .. } if w == 0.2));
    }

    #[test]
    fn options_are_validated() {
        let p = reference();
        for opts in [
            OptOptions {
                boundary_eps: 0.0,
                ..OptOptions::default()
            },
            OptOptions {
                boundary_eps: 0.5,
                ..OptOptions::default()
            },
            OptOptions {
                tol: 0.0,
                ..OptOptions::default()
            },
            OptOptions {
                max_iters: 0,
                ..OptOptions::default()
            },
        ] {
            assert!(newton_solve(&p, 0.5, &opts).is_err());
        }
        assert!(newton_solve(&p, 1.5, &OptOptions::default()).is_err());
    }

    #[test]
    fn sweep_checks_grid_and_keeps_order() {
        let p = reference();
        let opts = OptOptions::default();
        assert!(sweep_w(&p, &[0.5, 0.2], &opts).is_err());
        assert!(sweep_w(&p, &[0.2, 1.2], &opts).is_err());
        let grid = [0.0, 1.0];
        let r = sweep_w(&p, &grid, &opts).unwrap();
        assert!(r.iter().all(|x| x.method == Method::Boundary));
        let grid: Vec<f64> = (0..=20).map(|i| i as f64 / 20.0).collect();
        let r = sweep_w(&p, &grid, &opts).unwrap();
        for (x, w) in r.iter().zip(&grid) {
            assert_eq!(x.w, *w);
        }
    }
}
