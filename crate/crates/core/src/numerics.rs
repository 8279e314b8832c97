//! Shared numeric kernels: dual-variable bisection, projected-gradient ascent
//! over a power ball, SVD, and the ridge-regularized linear solve that every
//! closed-form precoder update reduces to.

use nalgebra::{DVector, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::{CMat, CVec, Error, Result};

/// Doubling steps allowed while bracketing the dual variable.
pub const MAX_BRACKET_DOUBLINGS: usize = 60;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BisectionSpec {
    pub lower: f64,
    /// First trial upper end; doubled until the power constraint holds.
    pub upper: f64,
    /// Relative tolerance on the achieved power.
    pub tol: f64,
    pub max_iters: usize,
}

impl Default for BisectionSpec {
    fn default() -> Self {
        BisectionSpec { lower: 0.0, upper: 1.0, tol: 1e-8, max_iters: 200 }
    }
}

/// Finds the power-constraint multiplier `ν ≥ 0`.
///
/// `eval_power` must be non-increasing in `ν`. Returns `0` when the budget is
/// already met at `ν = 0`; otherwise a `ν` on the feasible side whose power
/// is within `tol * p_max` of the budget.
pub fn bisect_dual<F>(eval_power: F, p_max: f64, spec: &BisectionSpec) -> Result<f64>
where
    F: Fn(f64) -> f64,
{
    if !(spec.lower >= 0.0 && spec.upper > spec.lower && spec.tol > 0.0) {
        return Err(Error::Config(format!("invalid bisection spec {spec:?}")));
    }
    let at_zero = eval_power(spec.lower);
    if at_zero.is_nan() {
        return Err(Error::Numeric("power evaluation returned NaN".into()));
    }
    if at_zero <= p_max {
        return Ok(spec.lower);
    }
    let mut lo = spec.lower;
    let mut hi = spec.upper;
    let mut p_hi = eval_power(hi);
    let mut doublings = 0;
    while !(p_hi <= p_max) {
        if doublings == MAX_BRACKET_DOUBLINGS {
            return Err(Error::Convergence(format!(
                "no dual bracket found after {MAX_BRACKET_DOUBLINGS} doublings (power {p_hi})"
            )));
        }
        lo = hi;
        hi *= 2.0;
        p_hi = eval_power(hi);
        doublings += 1;
    }
    let target = spec.tol * p_max;
    for _ in 0..spec.max_iters {
        if p_max - p_hi <= target || hi - lo <= f64::EPSILON * hi {
            break;
        }
        let mid = 0.5 * (lo + hi);
        let p_mid = eval_power(mid);
        if p_mid > p_max {
            lo = mid;
        } else {
            hi = mid;
            p_hi = p_mid;
        }
    }
    Ok(hi)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PgSolverSpec {
    pub step_init: f64,
    pub backtrack_factor: f64,
    /// Stop when the projected-gradient step norm falls below
    /// `grad_tol * (1 + |objective|)`.
    pub grad_tol: f64,
    pub max_iters: usize,
}

impl Default for PgSolverSpec {
    fn default() -> Self {
        PgSolverSpec { step_init: 1.0, backtrack_factor: 0.5, grad_tol: 1e-6, max_iters: 500 }
    }
}

impl PgSolverSpec {
    pub fn validate(&self) -> Result<()> {
        let ok = self.step_init > 0.0
            && self.backtrack_factor > 0.0
            && self.backtrack_factor < 1.0
            && self.grad_tol > 0.0
            && self.max_iters > 0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid projected-gradient spec {self:?}")))
        }
    }
}

#[derive(Debug, Clone)]
pub struct PgOutcome {
    pub point: CVec,
    pub value: f64,
    /// Objective at the start and after every accepted step.
    pub trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Radial projection onto `{x : ‖x‖² ≤ radius_sq}`.
pub fn project_ball(x: &CVec, radius_sq: f64) -> CVec {
    let n2 = x.norm_squared();
    if n2 <= radius_sq {
        x.clone()
    } else {
        x * Complex64::from((radius_sq / n2).sqrt())
    }
}

const ARMIJO: f64 = 1e-4;
const MAX_BACKTRACKS: usize = 60;

/// Projected-gradient ascent with Armijo backtracking for a concave
/// objective on the ball `‖x‖² ≤ radius_sq`.
///
/// `gradient` returns the Wirtinger derivative `∂f/∂x*`; the steepest-ascent
/// direction in real coordinates is twice that. The objective may return
/// `-inf` to mark points outside its domain; such trial steps are rejected.
pub fn maximize_concave_ball<O, G>(
    objective: O,
    gradient: G,
    radius_sq: f64,
    start: &CVec,
    spec: &PgSolverSpec,
) -> Result<PgOutcome>
where
    O: Fn(&CVec) -> f64,
    G: Fn(&CVec) -> CVec,
{
    spec.validate()?;
    let mut x = project_ball(start, radius_sq);
    let mut fx = objective(&x);
    if !fx.is_finite() {
        return Err(Error::Numeric(format!("objective at start point is {fx}")));
    }
    let mut trace = vec![fx];
    let mut step = spec.step_init;
    let mut converged = false;
    let mut iterations = 0;

    while iterations < spec.max_iters {
        let g = gradient(&x) * Complex64::from(2.0);
        if g.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::Numeric("non-finite gradient".into()));
        }
        let mapping = project_ball(&(&x + &g), radius_sq) - &x;
        if mapping.norm() <= spec.grad_tol * (1.0 + fx.abs()) {
            converged = true;
            break;
        }
        iterations += 1;

        let mut accepted = None;
        for _ in 0..MAX_BACKTRACKS {
            let trial = project_ball(&(&x + &g * Complex64::from(step)), radius_sq);
            let ft = objective(&trial);
            if ft.is_nan() || ft == f64::INFINITY {
                return Err(Error::Numeric(format!("objective evaluated to {ft}")));
            }
            let d = &trial - &x;
            let slope: f64 = g.dotc(&d).re;
            if ft >= fx + ARMIJO * slope && ft >= fx {
                accepted = Some((trial, ft));
                break;
            }
            step *= spec.backtrack_factor;
        }
        match accepted {
            Some((trial, ft)) => {
                let moved = (&trial - &x).norm();
                x = trial;
                fx = ft;
                trace.push(fx);
                step = (step / spec.backtrack_factor).min(spec.step_init * 1e6);
                if moved == 0.0 {
                    converged = true;
                    break;
                }
            }
            None => {
                // No ascent step of any useful length exists.
                converged = true;
                break;
            }
        }
    }
    Ok(PgOutcome { point: x, value: fx, trace, iterations, converged })
}

#[derive(Debug, Clone)]
pub struct Svd {
    pub u: CMat,
    /// Non-negative, sorted in descending order.
    pub singular_values: DVector<f64>,
    pub v: CMat,
}

impl Svd {
    pub fn reconstruct(&self) -> CMat {
        let sigma = CMat::from_diagonal(&self.singular_values.map(Complex64::from));
        &self.u * sigma * self.v.adjoint()
    }
}

/// Thin SVD `A = U diag(σ) V^H` with singular values in descending order.
pub fn svd(matrix: &CMat) -> Result<Svd> {
    if matrix.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::Numeric("SVD input has non-finite entries".into()));
    }
    let raw = matrix.clone().svd(true, true);
    let u = raw.u.ok_or_else(|| Error::Numeric("SVD did not return U".into()))?;
    let v_t = raw.v_t.ok_or_else(|| Error::Numeric("SVD did not return V".into()))?;
    let mut order: Vec<usize> = (0..raw.singular_values.len()).collect();
    order.sort_by(|&a, &b| raw.singular_values[b].total_cmp(&raw.singular_values[a]));
    let singular_values = DVector::from_iterator(order.len(), order.iter().map(|&i| raw.singular_values[i]));
    let u = u.select_columns(order.iter());
    let v = v_t.adjoint().select_columns(order.iter());
    Ok(Svd { u, singular_values, v })
}

/// Solves `(A + (ridge + ν) I) X = B` for Hermitian PSD `A` with the
/// smallest `ν ≥ 0` that keeps `‖X‖_F² ≤ p_max`.
///
/// The eigendecomposition of `A` is computed once so that every bisection
/// probe costs only a diagonal rescaling.
pub struct RidgeSystem {
    eigenvalues: Vec<f64>,
    eigenvectors: CMat,
    projected_rhs: CMat,
    ridge: f64,
    cutoff: f64,
}

#[derive(Debug, Clone)]
pub struct RidgeSolution {
    pub x: CMat,
    pub nu: f64,
}

impl RidgeSystem {
    pub fn new(a: &CMat, rhs: &CMat, ridge: f64) -> Result<Self> {
        if !a.is_square() || a.nrows() != rhs.nrows() {
            return Err(Error::Dimension(format!(
                "system matrix {}x{} does not match rhs {}x{}",
                a.nrows(),
                a.ncols(),
                rhs.nrows(),
                rhs.ncols()
            )));
        }
        if !(ridge >= 0.0) || a.iter().chain(rhs.iter()).any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::Numeric("non-finite ridge system".into()));
        }
        let hermitian = (a + a.adjoint()) * Complex64::from(0.5);
        let eig = SymmetricEigen::new(hermitian);
        let eigenvalues: Vec<f64> = eig.eigenvalues.iter().map(|&l| l.max(0.0)).collect();
        let lam_max = eigenvalues.iter().cloned().fold(0.0, f64::max);
        let projected_rhs = eig.eigenvectors.adjoint() * rhs;
        Ok(RidgeSystem {
            eigenvalues,
            eigenvectors: eig.eigenvectors,
            projected_rhs,
            ridge,
            cutoff: 1e-12 * lam_max.max(ridge).max(f64::MIN_POSITIVE),
        })
    }

    fn inverse_diag(&self, nu: f64) -> impl Iterator<Item = f64> + '_ {
        self.eigenvalues.iter().map(move |&l| {
            let d = l + self.ridge + nu;
            // Directions with no curvature and no ridge carry no solution
            // component (minimum-norm solution).
            if d <= self.cutoff { 0.0 } else { 1.0 / d }
        })
    }

    pub fn power(&self, nu: f64) -> f64 {
        self.inverse_diag(nu)
            .enumerate()
            .map(|(i, inv)| inv * inv * self.projected_rhs.row(i).norm_squared())
            .sum()
    }

    pub fn solve_at(&self, nu: f64) -> CMat {
        let mut scaled = self.projected_rhs.clone();
        for (i, inv) in self.inverse_diag(nu).enumerate() {
            scaled.row_mut(i).scale_mut(inv);
        }
        &self.eigenvectors * scaled
    }

    pub fn solve_within_budget(&self, p_max: f64, spec: &BisectionSpec) -> Result<RidgeSolution> {
        let nu = bisect_dual(|nu| self.power(nu), p_max, spec)?;
        let mut x = self.solve_at(nu);
        // Guard against round-off pushing the result a hair over budget.
        let pw = x.norm_squared();
        if pw > p_max {
            x *= Complex64::from((p_max / pw).sqrt());
        }
        Ok(RidgeSolution { x, nu })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::test_util;
    use proptest::prelude::*;

    #[test]
    fn bisection_inactive_constraint() {
        let spec = BisectionSpec::default();
        assert_eq!(bisect_dual(|_| 0.5, 1.0, &spec).unwrap(), 0.0);
        assert_eq!(bisect_dual(|nu| 4.0 / (1.0 + nu).powi(2), f64::INFINITY, &spec).unwrap(), 0.0);
    }

    #[test]
    fn bisection_matches_scalar_inversion() {
        let spec = BisectionSpec::default();
        for (c, a, p) in [(100.0, 1.0, 2.0), (5e4, 0.3, 10.0), (9.0, 2.0, 0.01), (1e6, 1e-3, 1.0)] {
            assert!(c / (a * a) > p);
            let nu = bisect_dual(|nu: f64| c / (a + nu).powi(2), p, &spec).unwrap();
            let exact = (c / p).sqrt() - a;
            let achieved = c / (a + nu).powi(2);
            assert!(achieved <= p && (p - achieved) <= spec.tol * p, "{achieved} vs {p}");
            assert!((nu - exact).abs() <= 1e-7 * exact.max(1.0));
            assert!(nu * (achieved - p) <= spec.tol * p * nu.max(1.0) + 1e-300);
        }
    }

    #[test]
    fn bisection_reports_missing_bracket() {
        let spec = BisectionSpec::default();
        assert!(matches!(bisect_dual(|_| 10.0, 1.0, &spec), Err(Error::Convergence(_))));
    }

    fn dist_objective(c: CVec) -> (impl Fn(&CVec) -> f64, impl Fn(&CVec) -> CVec) {
        let c2 = c.clone();
        (move |x: &CVec| -(x - &c).norm_squared(), move |x: &CVec| -(x - &c2))
    }

    #[test]
    fn pg_interior_optimum() {
        let mut rng = test_util::rng(4);
        let c = test_util::rand_vec(&mut rng, 6);
        let r2 = c.norm_squared() * 2.0;
        let (f, g) = dist_objective(c.clone());
        let out = maximize_concave_ball(f, g, r2, &CVec::zeros(6), &PgSolverSpec::default()).unwrap();
        assert!(out.converged);
        assert!((out.point - c).norm() < 1e-6);
    }

    #[test]
    fn pg_projects_outside_optimum() {
        let mut rng = test_util::rng(5);
        let c = test_util::rand_vec(&mut rng, 6);
        let r2 = c.norm_squared() / 4.0;
        let (f, g) = dist_objective(c.clone());
        let out = maximize_concave_ball(f, g, r2, &CVec::zeros(6), &PgSolverSpec::default()).unwrap();
        let expected = &c * Complex64::from(r2.sqrt() / c.norm());
        assert!((out.point - expected).norm() < 1e-6);
        for w in out.trace.windows(2) {
            assert!(w[1] >= w[0]);
        }
    }

    #[test]
    fn pg_matches_kkt_solution_of_concave_quadratic() {
        let mut rng = test_util::rng(6);
        for trial in 0..10 {
            let n = 5;
            let m = test_util::rand_mat(&mut rng, n, n);
            let a = &m * m.adjoint() + CMat::identity(n, n) * Complex64::from(0.1);
            let b = test_util::rand_vec(&mut rng, n) * Complex64::from(3.0);
            let (a_f, b_f, a_g, b_g) = (a.clone(), b.clone(), a.clone(), b.clone());
            let f = move |x: &CVec| -(x.adjoint() * &a_f * x)[(0, 0)].re + 2.0 * b_f.dotc(x).re;
            let g = move |x: &CVec| -(&a_g * x) + &b_g;
            let r2 = if trial % 2 == 0 { 0.05 } else { 100.0 };
            let spec = PgSolverSpec { max_iters: 20_000, grad_tol: 1e-10, ..Default::default() };
            let out = maximize_concave_ball(f, g, r2, &CVec::zeros(n), &spec).unwrap();
            assert!(out.point.norm_squared() <= r2 * (1.0 + 1e-9));

            // KKT oracle: x = (A + νI)^{-1} b, ν from plain scalar bisection on
            // an LU solve.
            let solve = |nu: f64| {
                (&a + CMat::identity(n, n) * Complex64::from(nu))
                    .lu()
                    .solve(&b)
                    .unwrap()
            };
            let nu = if solve(0.0).norm_squared() <= r2 {
                0.0
            } else {
                let (mut lo, mut hi) = (0.0, 1.0);
                while solve(hi).norm_squared() > r2 {
                    hi *= 2.0;
                }
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    if solve(mid).norm_squared() > r2 { lo = mid } else { hi = mid }
                }
                hi
            };
            let expected = solve(nu);
            let rel = (&out.point - &expected).norm() / expected.norm();
            assert!(rel < 1e-6, "trial {trial}: relative error {rel}");
        }
    }

    #[test]
    fn pg_rejects_non_finite() {
        let f = |_: &CVec| f64::NAN;
        let g = |x: &CVec| x.clone();
        assert!(matches!(
            maximize_concave_ball(f, g, 1.0, &CVec::zeros(2), &PgSolverSpec::default()),
            Err(Error::Numeric(_))
        ));
    }

    #[test]
    fn svd_examples() {
        let s = svd(&CMat::identity(3, 3)).unwrap();
        assert!(s.singular_values.iter().all(|&v| (v - 1.0).abs() < 1e-14));

        let mut rng = test_util::rng(7);
        let a = test_util::rand_vec(&mut rng, 4);
        let b = test_util::rand_vec(&mut rng, 3);
        let rank1 = &a * b.adjoint();
        let s = svd(&rank1).unwrap();
        assert!((s.singular_values[0] - a.norm() * b.norm()).abs() < 1e-12);
        assert!(s.singular_values.iter().skip(1).all(|&v| v < 1e-12));

        let bad = CMat::from_element(2, 2, Complex64::new(f64::NAN, 0.0));
        assert!(matches!(svd(&bad), Err(Error::Numeric(_))));
    }

    proptest! {
        #[test]
        fn svd_reconstructs(seed in 0u64..500, rows in 1usize..6, cols in 1usize..6) {
            let mut rng = test_util::rng(seed);
            let m = test_util::rand_mat(&mut rng, rows, cols);
            let s = svd(&m).unwrap();
            prop_assert!((s.reconstruct() - &m).norm() <= 1e-10 * m.norm().max(1e-300));
            for w in s.singular_values.as_slice().windows(2) {
                prop_assert!(w[0] >= w[1] && w[1] >= 0.0);
            }
            let k = s.singular_values.len();
            prop_assert!((s.u.adjoint() * &s.u - CMat::identity(k, k)).norm() < 1e-10);
            prop_assert!((s.v.adjoint() * &s.v - CMat::identity(k, k)).norm() < 1e-10);
        }
    }

    #[test]
    fn ridge_system_matches_direct_solve() {
        let mut rng = test_util::rng(8);
        let h = test_util::rand_mat(&mut rng, 6, 3);
        let a = &h * h.adjoint();
        let rhs = test_util::rand_mat(&mut rng, 6, 3);
        let sys = RidgeSystem::new(&a, &rhs, 0.5).unwrap();
        let x = sys.solve_at(0.25);
        let lhs = (&a + CMat::identity(6, 6) * Complex64::from(0.75)) * &x;
        assert!((lhs - &rhs).norm() < 1e-10 * rhs.norm());

        let sol = sys.solve_within_budget(0.01, &BisectionSpec::default()).unwrap();
        assert!(sol.nu > 0.0);
        assert!(sol.x.norm_squared() <= 0.01);
        assert!(sol.x.norm_squared() >= 0.01 * (1.0 - 1e-8));
    }
}
