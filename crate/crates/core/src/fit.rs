//! Nonlinear least squares on top of the `levenberg-marquardt` crate, with a
//! central-difference Jacobian so callers only supply residuals.

use levenberg_marquardt::{LeastSquaresProblem, LevenbergMarquardt};
use nalgebra::storage::Owned;
use nalgebra::{DMatrix, DVector, Dyn};

use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct FitResult {
    pub params: Vec<f64>,
    /// One-sigma uncertainties from the Jacobian at the optimum, scaled by the
    /// reduced chi-square. `NaN` where the normal matrix is singular.
    pub std_errors: Vec<f64>,
    /// Root-mean-square residual at the optimum.
    pub rms: f64,
    pub evaluations: usize,
}

struct Problem<'a, F> {
    f: &'a F,
    p: DVector<f64>,
    m: usize,
}

impl<F> Problem<'_, F>
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    fn eval(&self, p: &DVector<f64>) -> Option<DVector<f64>> {
        let r = (self.f)(p.as_slice());
        if r.len() != self.m || r.iter().any(|v| !v.is_finite()) {
            return None;
        }
        Some(DVector::from_vec(r))
    }
}

impl<F> LeastSquaresProblem<f64, Dyn, Dyn> for Problem<'_, F>
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    type ResidualStorage = Owned<f64, Dyn>;
    type JacobianStorage = Owned<f64, Dyn, Dyn>;
    type ParameterStorage = Owned<f64, Dyn>;

    fn set_params(&mut self, x: &DVector<f64>) {
        self.p.copy_from(x);
    }

    fn params(&self) -> DVector<f64> {
        self.p.clone()
    }

    fn residuals(&self) -> Option<DVector<f64>> {
        self.eval(&self.p)
    }

    fn jacobian(&self) -> Option<DMatrix<f64>> {
        jacobian(&|p: &DVector<f64>| self.eval(p), &self.p, self.m)
    }
}

fn jacobian(f: &dyn Fn(&DVector<f64>) -> Option<DVector<f64>>, p: &DVector<f64>, m: usize) -> Option<DMatrix<f64>> {
    let n = p.len();
    let mut jac = DMatrix::zeros(m, n);
    for j in 0..n {
        let h = 1e-7 * p[j].abs().max(1e-7);
        let mut lo = p.clone();
        let mut hi = p.clone();
        lo[j] -= h;
        hi[j] += h;
        let d = (f(&hi)? - f(&lo)?) / (2.0 * h);
        jac.set_column(j, &d);
    }
    Some(jac)
}

/// Minimize Σ r_i(p)² starting from `p0`.
pub fn least_squares<F>(residuals: F, p0: &[f64]) -> Result<FitResult>
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    let m = residuals(p0).len();
    if m < p0.len() {
        return Err(Error::Fit(format!("{m} residuals for {} parameters", p0.len())));
    }
    let problem = Problem { f: &residuals, p: DVector::from_column_slice(p0), m };
    let (problem, report) = LevenbergMarquardt::new().with_tol(1e-15).with_patience(500).minimize(problem);
    if !report.termination.was_successful() {
        return Err(Error::Fit(format!("{:?}", report.termination)));
    }
    let p = problem.p.clone();
    let r = problem.residuals().ok_or_else(|| Error::Fit("non-finite residuals at optimum".into()))?;
    let ss = r.norm_squared();
    let dof = (m - p.len()).max(1) as f64;
    let std_errors = match problem.jacobian().and_then(|j| (j.transpose() * &j).try_inverse()) {
        Some(cov) => (0..p.len()).map(|k| (cov[(k, k)] * ss / dof).max(0.0).sqrt()).collect(),
        None => vec![f64::NAN; p.len()],
    };
    Ok(FitResult {
        params: p.as_slice().to_vec(),
        std_errors,
        rms: (ss / m as f64).sqrt(),
        evaluations: report.number_of_evaluations,
    })
}

/// Ordinary linear regression y = a + b x, returning (a, b, R²).
pub fn linear_regression(x: &[f64], y: &[f64]) -> Result<(f64, f64, f64)> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::Fit("linear regression needs two or more paired points".into()));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|v| (v - my).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::Fit("degenerate abscissa".into()));
    }
    let b = sxy / sxx;
    let a = my - b * mx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Ok((a, b, r2))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recovers_exponential() {
        let t: Vec<f64> = (0..40).map(|k| k as f64 * 0.1).collect();
        let y: Vec<f64> = t.iter().map(|t| 2.5 * (-0.8 * t).exp() + 0.1).collect();
        let fit = least_squares(|p| t.iter().zip(&y).map(|(t, y)| p[0] * (-p[1] * t).exp() + p[2] - y).collect(), &[1.0, 0.3, 0.0])
            .unwrap();
        assert!((fit.params[0] - 2.5).abs() < 1e-9);
        assert!((fit.params[1] - 0.8).abs() < 1e-9);
        assert!((fit.params[2] - 0.1).abs() < 1e-9);
        assert!(fit.rms < 1e-10);
    }

    #[test]
    fn underdetermined_is_rejected() {
        assert!(least_squares(|p| vec![p[0] + p[1]], &[0.0, 0.0]).is_err());
    }

    #[test]
    fn regression_exact_line() {
        let (a, b, r2) = linear_regression(&[0.0, 1.0, 2.0], &[1.0, 3.0, 5.0]).unwrap();
        assert!((a - 1.0).abs() < 1e-14 && (b - 2.0).abs() < 1e-14 && (r2 - 1.0).abs() < 1e-14);
    }
}
