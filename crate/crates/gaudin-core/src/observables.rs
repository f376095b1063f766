//! Local spin expectation values from eigenvalue derivatives.
//!
//! Because the eigenvalues obey a closed quadratic system, their parameter
//! derivatives obey the linear system `J (dq/dtheta) = -dF/dtheta`, and the
//! Hellmann-Feynman theorem turns those derivatives into per-site
//! `<S^x_i>`, `<S^y_i>`, `<S^z_i>`. A finite-difference re-solve provides an
//! independent cross-check.

use nalgebra::{DMatrix, DVector};

use crate::error::SolverError;
use crate::model::ModelParams;
use crate::scalar::Scalar;
use crate::solver::{
    inf_norm, newton_solve, NewtonSettings, ParamAxis, QuadraticSystem, SignVector,
    StateEigenvalues,
};

/// Default ceiling on the Jacobian condition estimate.
pub const DEFAULT_MAX_CONDITION: f64 = 1e14;

/// How a record's derivatives were obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DerivativeMethod {
    LinearSystem,
    FiniteDifference,
}

/// Per-site spin expectation values for one state at one parameter point.
#[derive(Debug, Clone)]
pub struct ObservableRecord<T> {
    /// Site index, 1-based.
    pub site: usize,
    pub epsilon: T,
    pub sx: T,
    pub sy: T,
    pub sz: T,
    pub sigma: SignVector,
    pub g: T,
    pub gamma: T,
    pub lambda: T,
    pub method: DerivativeMethod,
}

impl<T: Scalar> ObservableRecord<T> {
    /// `sx^2 + sy^2 + sz^2`, bounded by 1/4 for a physical spin-1/2 state.
    pub fn length_sq(&self) -> T {
        self.sx * self.sx + self.sy * self.sy + self.sz * self.sz
    }
}

/// All three eigenvalue derivative vectors at one converged state.
#[derive(Debug, Clone)]
pub struct EigenvalueDerivatives<T> {
    pub wrt_g: DVector<T>,
    pub wrt_gamma: DVector<T>,
    pub wrt_lambda: DVector<T>,
}

impl<T: Scalar> EigenvalueDerivatives<T> {
    pub fn get(&self, axis: ParamAxis) -> &DVector<T> {
        match axis {
            ParamAxis::G => &self.wrt_g,
            ParamAxis::Gamma => &self.wrt_gamma,
            ParamAxis::Lambda => &self.wrt_lambda,
        }
    }
}

/// `dq/dtheta` for a single parameter, from the linear system.
///
/// Degenerate states surface as `SingularJacobian`; no regularisation is
/// attempted.
pub fn dq_dparam<T: Scalar>(
    state: &StateEigenvalues<T>,
    axis: ParamAxis,
) -> Result<DVector<T>, SolverError> {
    dq_dparam_with(state, axis, T::cast(DEFAULT_MAX_CONDITION))
}

pub fn dq_dparam_with<T: Scalar>(
    state: &StateEigenvalues<T>,
    axis: ParamAxis,
    max_condition: T,
) -> Result<DVector<T>, SolverError> {
    let system = QuadraticSystem::new(&state.params);
    let rhs = -system.param_gradient(&state.q, axis);
    system.solve_linear(&state.q, &rhs, max_condition)
}

/// All three derivative vectors through one LU factorisation.
pub fn eigenvalue_derivatives<T: Scalar>(
    state: &StateEigenvalues<T>,
    max_condition: T,
) -> Result<EigenvalueDerivatives<T>, SolverError> {
    let system = QuadraticSystem::new(&state.params);
    let l = state.q.len();
    let mut rhs = DMatrix::zeros(l, 3);
    for (col, axis) in ParamAxis::ALL.into_iter().enumerate() {
        rhs.set_column(col, &(-system.param_gradient(&state.q, axis)));
    }

    let lu = system.jacobian(&state.q).lu();
    let u = lu.u();
    let mut dmin = T::cast(f64::INFINITY);
    let mut dmax = T::zero();
    for i in 0..l {
        let d = u[(i, i)].abs();
        dmin = dmin.min(d);
        dmax = dmax.max(d);
    }
    let condition = if dmin > T::zero() {
        dmax / dmin
    } else {
        T::cast(f64::INFINITY)
    };
    if !condition.is_finite() || condition > max_condition {
        return Err(SolverError::SingularJacobian {
            condition: condition.to_f64(),
        });
    }
    let solution = lu.solve(&rhs).ok_or(SolverError::SingularJacobian {
        condition: condition.to_f64(),
    })?;

    Ok(EigenvalueDerivatives {
        wrt_g: solution.column(0).into_owned(),
        wrt_gamma: solution.column(1).into_owned(),
        wrt_lambda: solution.column(2).into_owned(),
    })
}

/// Hellmann-Feynman spin expectation values for every site of `state`.
///
/// `sx_i = sqrt(lin_x_i) dq_i/dgamma`, `sy_i = sqrt(lin_y_i) dq_i/dlambda`,
/// `sz_i = q_i - 1/2 - g dq_i/dg - gamma dq_i/dgamma - lambda dq_i/dlambda`.
/// The `-1/2` removes the constant that the shifted-charge convention folds
/// into every eigenvalue (the charges carry `S^z_i + 1/2`), so `sz` is the
/// genuine `<S^z_i>`; cross-checked against exact eigenvectors in the test
/// suite.
pub fn spin_expectations<T: Scalar>(
    state: &StateEigenvalues<T>,
) -> Result<Vec<ObservableRecord<T>>, SolverError> {
    spin_expectations_with(state, T::cast(DEFAULT_MAX_CONDITION))
}

pub fn spin_expectations_with<T: Scalar>(
    state: &StateEigenvalues<T>,
    max_condition: T,
) -> Result<Vec<ObservableRecord<T>>, SolverError> {
    let derivatives = eigenvalue_derivatives(state, max_condition)?;
    Ok(records_from_derivatives(
        state,
        &derivatives,
        DerivativeMethod::LinearSystem,
    ))
}

fn records_from_derivatives<T: Scalar>(
    state: &StateEigenvalues<T>,
    derivatives: &EigenvalueDerivatives<T>,
    method: DerivativeMethod,
) -> Vec<ObservableRecord<T>> {
    let p = &state.params;
    let half = T::cast(0.5);
    (0..p.len())
        .map(|i| {
            let dg = derivatives.wrt_g[i];
            let dgamma = derivatives.wrt_gamma[i];
            let dlambda = derivatives.wrt_lambda[i];
            ObservableRecord {
                site: i + 1,
                epsilon: p.eps(i),
                sx: p.lin_x(i).sqrt() * dgamma,
                sy: p.lin_y(i).sqrt() * dlambda,
                sz: state.q[i] - half - p.g() * dg - p.gamma() * dgamma - p.lambda() * dlambda,
                sigma: state.sigma.clone(),
                g: p.g(),
                gamma: p.gamma(),
                lambda: p.lambda(),
                method,
            }
        })
        .collect()
}

/// Deviation between linear-system and finite-difference derivatives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FdCrossCheck<T> {
    pub step: T,
    pub deviation_g: T,
    pub deviation_gamma: T,
    pub deviation_lambda: T,
}

impl<T: Scalar> FdCrossCheck<T> {
    pub fn max_deviation(&self) -> T {
        self.deviation_g
            .max(self.deviation_gamma)
            .max(self.deviation_lambda)
    }
}

/// Recomputes all three derivative vectors by central differences around the
/// converged root (re-solving the quadratic system at `theta +- h`) and
/// reports the worst deviation from the linear-system values.
pub fn fd_cross_check<T: Scalar>(
    state: &StateEigenvalues<T>,
    h: T,
    newton: &NewtonSettings<T>,
) -> Result<FdCrossCheck<T>, SolverError> {
    let derivatives = eigenvalue_derivatives(state, newton.max_condition)?;
    let mut deviations = [T::zero(); 3];

    for (slot, axis) in ParamAxis::ALL.into_iter().enumerate() {
        let fd = fd_derivative(state, axis, h, newton)?;
        deviations[slot] = inf_norm(&(&fd - derivatives.get(axis)));
    }

    Ok(FdCrossCheck {
        step: h,
        deviation_g: deviations[0],
        deviation_gamma: deviations[1],
        deviation_lambda: deviations[2],
    })
}

/// Central-difference `dq/dtheta`, each endpoint re-solved by Newton from the
/// unperturbed root.
pub fn fd_derivative<T: Scalar>(
    state: &StateEigenvalues<T>,
    axis: ParamAxis,
    h: T,
    newton: &NewtonSettings<T>,
) -> Result<DVector<T>, SolverError> {
    let plus = resolve_shifted(state, axis, h, newton)?;
    let minus = resolve_shifted(state, axis, -h, newton)?;
    Ok((plus - minus) / (T::cast(2.0) * h))
}

fn resolve_shifted<T: Scalar>(
    state: &StateEigenvalues<T>,
    axis: ParamAxis,
    delta: T,
    newton: &NewtonSettings<T>,
) -> Result<DVector<T>, SolverError> {
    let p = shifted_params(&state.params, axis, delta);
    Ok(newton_solve(&state.q, &p, newton)?.q)
}

fn shifted_params<T: Scalar>(p: &ModelParams<T>, axis: ParamAxis, delta: T) -> ModelParams<T> {
    match axis {
        ParamAxis::G => p.with_g(p.g() + delta),
        ParamAxis::Gamma => p.with_gamma(p.gamma() + delta),
        ParamAxis::Lambda => p.with_lambda(p.lambda() + delta),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::RawModelParams;
    use crate::solver::{continue_in_g, solve_at_g0, StepPolicy};

    fn generic_params(l: usize, g: f64) -> ModelParams<f64> {
        ModelParams::new(RawModelParams {
            epsilons: (0..l).map(|i| 1.0 + 1.3 * i as f64).collect(),
            alpha_x: 1.0,
            beta_x: 0.5,
            alpha_y: 0.8,
            beta_y: 0.3,
            gamma: 0.4,
            lambda: -0.6,
            g,
        })
        .unwrap()
    }

    fn fig1_params(l: usize, g: f64, beta: f64) -> ModelParams<f64> {
        ModelParams::new(RawModelParams {
            epsilons: (1..=l).map(|i| i as f64).collect(),
            alpha_x: 1.0,
            beta_x: beta,
            alpha_y: 1.0,
            beta_y: -beta,
            gamma: 0.5,
            lambda: 0.5,
            g,
        })
        .unwrap()
    }

    fn solved_state(p: &ModelParams<f64>, index: usize) -> StateEigenvalues<f64> {
        let sigma = SignVector::from_index(index, p.len());
        continue_in_g(&sigma, p, &StepPolicy::default(), &NewtonSettings::default())
            .unwrap()
            .endpoint()
            .clone()
    }

    #[test]
    fn g0_gamma_derivative_matches_closed_form() {
        let p = generic_params(4, 0.0);
        for index in [0usize, 0b1010] {
            let state = solve_at_g0(&p, &SignVector::from_index(index, 4));
            let dq = dq_dparam(&state, ParamAxis::Gamma).unwrap();
            for i in 0..4 {
                let radical = (1.0
                    + p.gamma() * p.gamma() / p.lin_x(i)
                    + p.lambda() * p.lambda() / p.lin_y(i))
                .sqrt();
                let expected =
                    state.sigma.sign::<f64>(i) * p.gamma() / (2.0 * p.lin_x(i) * radical);
                assert!((dq[i] - expected).abs() < 1e-14, "{} vs {expected}", dq[i]);
            }
        }
    }

    #[test]
    fn gamma_derivative_vanishes_at_zero_gamma() {
        let p = ModelParams::new(RawModelParams {
            gamma: 0.0,
            ..generic_params(4, 0.7).to_raw()
        })
        .unwrap();
        let state = solved_state(&p, 5);
        let dq = dq_dparam(&state, ParamAxis::Gamma).unwrap();
        assert!(dq.iter().all(|&d| d.abs() < 1e-14));
    }

    #[test]
    fn linear_system_matches_finite_differences() {
        let p = generic_params(5, 0.9);
        let state = solved_state(&p, 11);
        let report = fd_cross_check(&state, 1e-6, &NewtonSettings::default()).unwrap();
        assert!(report.max_deviation() <= 1e-6, "{report:?}");
    }

    #[test]
    fn fd_error_scales_quadratically_in_h() {
        let p = generic_params(4, 1.1);
        let state = solved_state(&p, 3);
        let coarse = fd_cross_check(&state, 1e-2, &NewtonSettings::default()).unwrap();
        let fine = fd_cross_check(&state, 1e-3, &NewtonSettings::default()).unwrap();
        let ratio = coarse.max_deviation() / fine.max_deviation();
        assert!(
            (100.0 / 3.0..=300.0).contains(&ratio),
            "O(h^2) ratio {ratio} out of range ({coarse:?} vs {fine:?})"
        );
    }

    #[test]
    fn fd_gamma_derivative_vanishes_at_symmetric_point() {
        let p = ModelParams::new(RawModelParams {
            gamma: 0.0,
            ..generic_params(4, 0.8).to_raw()
        })
        .unwrap();
        let state = solved_state(&p, 6);
        let fd = fd_derivative(&state, ParamAxis::Gamma, 1e-4, &NewtonSettings::default()).unwrap();
        assert!(inf_norm(&fd) <= 1e-10, "{fd:?}");
    }

    #[test]
    fn g0_expectations_align_with_local_field() {
        // Independently solved 2x2 problem: each spin (anti-)aligns with
        // (B^x_i, B^y_i, 1), giving sigma_i * (B^x_i, B^y_i, 1) / (2 R_i).
        let p = fig1_params(10, 0.0, 0.0);
        let state = solve_at_g0(&p, &SignVector::all_minus(10));
        let records = spin_expectations(&state).unwrap();
        let r = 1.5f64.sqrt();
        assert!((records[0].sx - (-0.5 / (2.0 * r))).abs() < 1e-12);
        assert!((records[0].sy - (-0.5 / (2.0 * r))).abs() < 1e-12);
        assert!((records[0].sz - (-1.0 / (2.0 * r))).abs() < 1e-12);
        assert!((records[0].sx - (-0.2041241452319315)).abs() < 1e-12);
        assert!((records[0].sz - (-0.4082482904638631)).abs() < 1e-12);

        for (i, rec) in records.iter().enumerate() {
            let (bx, by) = p.field_xy(i);
            let norm = (1.0 + bx * bx + by * by).sqrt();
            let sign = state.sigma.sign::<f64>(i);
            assert!((rec.sx - sign * bx / (2.0 * norm)).abs() < 1e-12);
            assert!((rec.sy - sign * by / (2.0 * norm)).abs() < 1e-12);
            assert!((rec.sz - sign / (2.0 * norm)).abs() < 1e-12);
        }
    }

    #[test]
    fn xxz_keeps_plane_isotropy() {
        let p = fig1_params(6, 0.7, 0.0);
        let state = solved_state(&p, 0);
        let records = spin_expectations(&state).unwrap();
        for rec in &records {
            assert!((rec.sx - rec.sy).abs() <= 1e-12, "{rec:?}");
        }
    }

    #[test]
    fn spin_length_stays_physical() {
        for (l, g, index) in [(4, 0.6, 9), (5, 1.5, 0), (6, 2.5, 33)] {
            let p = generic_params(l, g);
            let state = solved_state(&p, index);
            for rec in spin_expectations(&state).unwrap() {
                assert!(rec.length_sq() <= 0.25 + 1e-8, "{rec:?}");
            }
        }
    }

    #[test]
    fn xy_mirror_swap_exchanges_sx_sy() {
        let p = generic_params(5, 1.2);
        let raw = p.to_raw();
        let mirrored = ModelParams::new(RawModelParams {
            alpha_x: raw.alpha_y,
            beta_x: raw.beta_y,
            alpha_y: raw.alpha_x,
            beta_y: raw.beta_x,
            gamma: raw.lambda,
            lambda: raw.gamma,
            ..raw
        })
        .unwrap();
        let state = solved_state(&p, 19);
        let swapped = solved_state(&mirrored, 19);
        let records = spin_expectations(&state).unwrap();
        let mirrored_records = spin_expectations(&swapped).unwrap();
        for (a, b) in records.iter().zip(&mirrored_records) {
            assert!((a.sx - b.sy).abs() < 1e-9, "{a:?} vs {b:?}");
            assert!((a.sy - b.sx).abs() < 1e-9);
            assert!((a.sz - b.sz).abs() < 1e-9);
        }
    }

    #[test]
    fn singular_jacobian_is_reported() {
        // q = 1/2 zeroes the decoupled Jacobian; not a converged root, but
        // the error path must trigger rather than regularize.
        let p = generic_params(1, 0.0);
        let mut state = solve_at_g0(&p, &SignVector::all_minus(1));
        state.q[0] = 0.5;
        match dq_dparam(&state, ParamAxis::Gamma) {
            Err(SolverError::SingularJacobian { .. }) => {}
            other => panic!("expected SingularJacobian, got {other:?}"),
        }
    }
}
