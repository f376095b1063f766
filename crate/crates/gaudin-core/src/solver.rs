//! Quadratic eigenvalue equations: residual, analytic Jacobian, damped
//! Newton, and adaptive homotopy continuation in the coupling strength `g`.
//!
//! The eigenvalues `{q_1..q_L}` of the (shifted) conserved charges satisfy a
//! closed system of L coupled quadratic equations. The `g = 0` limit is
//! solvable per site, which seeds a predictor-corrector continuation towards
//! any target `g`.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};

use crate::error::SolverError;
use crate::model::ModelParams;
use crate::scalar::Scalar;

/// Per-site sign, labelling which of the two `g = 0` roots a state grew from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Sign {
    Minus,
    Plus,
}

impl Sign {
    pub fn value<T: Scalar>(self) -> T {
        match self {
            Sign::Minus => -T::one(),
            Sign::Plus => T::one(),
        }
    }
}

/// State label in `{+,-}^L`: the σ vector of the non-interacting limit.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SignVector(Vec<Sign>);

impl SignVector {
    pub fn new(signs: Vec<Sign>) -> Self {
        Self(signs)
    }

    /// The label of the branch connected to the all-down product state.
    pub fn all_minus(l: usize) -> Self {
        Self(vec![Sign::Minus; l])
    }

    pub fn all_plus(l: usize) -> Self {
        Self(vec![Sign::Plus; l])
    }

    /// `index`-th label with site 1 as the most significant bit, so index 0
    /// is all-minus and enumeration order matches `Ord`.
    pub fn from_index(index: usize, l: usize) -> Self {
        assert!(l < usize::BITS as usize && index < (1 << l));
        Self(
            (0..l)
                .map(|site| {
                    if (index >> (l - 1 - site)) & 1 == 1 {
                        Sign::Plus
                    } else {
                        Sign::Minus
                    }
                })
                .collect(),
        )
    }

    /// All `2^L` labels in ascending `Ord` order.
    pub fn enumerate_all(l: usize) -> impl Iterator<Item = SignVector> {
        assert!(l < usize::BITS as usize);
        (0..(1usize << l)).map(move |k| Self::from_index(k, l))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn signs(&self) -> &[Sign] {
        &self.0
    }

    pub fn sign<T: Scalar>(&self, site: usize) -> T {
        self.0[site].value()
    }
}

impl fmt::Display for SignVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for s in &self.0 {
            f.write_str(match s {
                Sign::Minus => "-",
                Sign::Plus => "+",
            })?;
        }
        Ok(())
    }
}

impl FromStr for SignVector {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let signs = s
            .chars()
            .map(|c| match c {
                '+' => Ok(Sign::Plus),
                '-' => Ok(Sign::Minus),
                other => Err(format!("invalid sign character `{other}`")),
            })
            .collect::<Result<Vec<_>, _>>()?;
        if signs.is_empty() {
            return Err("empty sign vector".to_string());
        }
        Ok(Self(signs))
    }
}

/// Model parameter the equations can be differentiated against.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamAxis {
    G,
    Gamma,
    Lambda,
}

impl ParamAxis {
    pub const ALL: [ParamAxis; 3] = [ParamAxis::G, ParamAxis::Gamma, ParamAxis::Lambda];

    pub fn name(self) -> &'static str {
        match self {
            ParamAxis::G => "g",
            ParamAxis::Gamma => "gamma",
            ParamAxis::Lambda => "lambda",
        }
    }
}

impl fmt::Display for ParamAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A converged root of the quadratic system together with its branch label.
#[derive(Debug, Clone)]
pub struct StateEigenvalues<T> {
    pub sigma: SignVector,
    pub q: DVector<T>,
    pub params: ModelParams<T>,
    /// `max_i |F_i(q)|` at `params`.
    pub residual_norm: T,
}

/// Precomputed tables for one parameter point.
///
/// All sums skip `j = i` through zeroed diagonals, so the hot loops stay
/// branch-free.
#[derive(Debug, Clone)]
pub struct QuadraticSystem<T> {
    params: ModelParams<T>,
    /// `1/4 (gamma^2/lin_x_i + lambda^2/lin_y_i)`.
    field_term: DVector<T>,
    /// `kappa_j / (eps_i - eps_j)`, zero diagonal.
    kappa_over_dist: DMatrix<T>,
    /// Row sums of `kappa_over_dist`.
    kappa_row_sum: DVector<T>,
    /// Anisotropy bracket `(sqrt(lx_i)sqrt(ly_j) - sqrt(ly_i)sqrt(lx_j)) /
    /// (eps_i - eps_j)`, zero diagonal; identically zero in the XXZ limit.
    bracket: DMatrix<T>,
    /// Row sums of `bracket^2`.
    bracket_sq_row_sum: DVector<T>,
}

impl<T: Scalar> QuadraticSystem<T> {
    pub fn new(params: &ModelParams<T>) -> Self {
        let l = params.len();
        let quarter = T::cast(0.25);
        let mut field_term = DVector::zeros(l);
        let mut kappa_over_dist = DMatrix::zeros(l, l);
        let mut bracket = DMatrix::zeros(l, l);

        let sqrt_lx: Vec<T> = (0..l).map(|i| params.lin_x(i).sqrt()).collect();
        let sqrt_ly: Vec<T> = (0..l).map(|i| params.lin_y(i).sqrt()).collect();

        for i in 0..l {
            field_term[i] = quarter
                * (params.gamma() * params.gamma() / params.lin_x(i)
                    + params.lambda() * params.lambda() / params.lin_y(i));
            for j in 0..l {
                if i == j {
                    continue;
                }
                let inv_d = T::one() / (params.eps(i) - params.eps(j));
                kappa_over_dist[(i, j)] = sqrt_lx[j] * sqrt_ly[j] * inv_d;
                bracket[(i, j)] = (sqrt_lx[i] * sqrt_ly[j] - sqrt_ly[i] * sqrt_lx[j]) * inv_d;
            }
        }

        let kappa_row_sum = DVector::from_fn(l, |i, _| kappa_over_dist.row(i).sum());
        let bracket_sq_row_sum = DVector::from_fn(l, |i, _| {
            bracket
                .row(i)
                .iter()
                .fold(T::zero(), |acc, &w| acc + w * w)
        });

        Self {
            params: params.clone(),
            field_term,
            kappa_over_dist,
            kappa_row_sum,
            bracket,
            bracket_sq_row_sum,
        }
    }

    pub fn params(&self) -> &ModelParams<T> {
        &self.params
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// The anisotropy terms entering the `g^2` sum; zero matrix in the XXZ
    /// limit.
    pub fn anisotropy_bracket(&self) -> &DMatrix<T> {
        &self.bracket
    }

    /// `F_i(q)`: zero exactly when `q` is a joint eigenvalue row.
    pub fn residual(&self, q: &DVector<T>) -> DVector<T> {
        let l = self.len();
        let g = self.params.g();
        let half_g = T::cast(0.5) * g;
        let g2_16 = g * g / T::cast(16.0);
        DVector::from_fn(l, |i, _| {
            let mut coupling = T::zero();
            for j in 0..l {
                coupling += self.kappa_over_dist[(i, j)] * (q[i] - q[j]);
            }
            q[i] * q[i] - q[i] - self.field_term[i] + half_g * coupling
                - g2_16 * self.bracket_sq_row_sum[i]
        })
    }

    pub fn residual_norm(&self, q: &DVector<T>) -> T {
        inf_norm(&self.residual(q))
    }

    /// Analytic Jacobian `dF_i/dq_k`.
    pub fn jacobian(&self, q: &DVector<T>) -> DMatrix<T> {
        let l = self.len();
        let half_g = T::cast(0.5) * self.params.g();
        let mut jac = DMatrix::zeros(l, l);
        for i in 0..l {
            jac[(i, i)] = T::cast(2.0) * q[i] - T::one() + half_g * self.kappa_row_sum[i];
            for j in 0..l {
                if i != j {
                    jac[(i, j)] = -half_g * self.kappa_over_dist[(i, j)];
                }
            }
        }
        jac
    }

    /// `dF_i/dtheta` at fixed `q`.
    pub fn param_gradient(&self, q: &DVector<T>, axis: ParamAxis) -> DVector<T> {
        let l = self.len();
        match axis {
            ParamAxis::Gamma => DVector::from_fn(l, |i, _| {
                -self.params.gamma() / (T::cast(2.0) * self.params.lin_x(i))
            }),
            ParamAxis::Lambda => DVector::from_fn(l, |i, _| {
                -self.params.lambda() / (T::cast(2.0) * self.params.lin_y(i))
            }),
            ParamAxis::G => {
                let g_8 = self.params.g() / T::cast(8.0);
                DVector::from_fn(l, |i, _| {
                    let mut coupling = T::zero();
                    for j in 0..l {
                        coupling += self.kappa_over_dist[(i, j)] * (q[i] - q[j]);
                    }
                    T::cast(0.5) * coupling - g_8 * self.bracket_sq_row_sum[i]
                })
            }
        }
    }

    /// Solves `J(q) x = rhs`, rejecting numerically singular Jacobians.
    pub fn solve_linear(
        &self,
        q: &DVector<T>,
        rhs: &DVector<T>,
        max_condition: T,
    ) -> Result<DVector<T>, SolverError> {
        lu_solve_checked(&self.jacobian(q), rhs, max_condition)
    }
}

/// Free-function forms of the two core evaluations.
pub fn residual<T: Scalar>(q: &DVector<T>, p: &ModelParams<T>) -> DVector<T> {
    QuadraticSystem::new(p).residual(q)
}

pub fn jacobian<T: Scalar>(q: &DVector<T>, p: &ModelParams<T>) -> DMatrix<T> {
    QuadraticSystem::new(p).jacobian(q)
}

pub fn inf_norm<T: Scalar>(v: &DVector<T>) -> T {
    v.iter().fold(T::zero(), |m, &x| m.max(x.abs()))
}

fn lu_solve_checked<T: Scalar>(
    jac: &DMatrix<T>,
    rhs: &DVector<T>,
    max_condition: T,
) -> Result<DVector<T>, SolverError> {
    lu_solve_with_condition(jac, rhs, max_condition).map(|(x, _)| x)
}

fn lu_solve_with_condition<T: Scalar>(
    jac: &DMatrix<T>,
    rhs: &DVector<T>,
    max_condition: T,
) -> Result<(DVector<T>, T), SolverError> {
    let lu = jac.clone().lu();
    let u = lu.u();
    let mut dmin = T::cast(f64::INFINITY);
    let mut dmax = T::zero();
    for i in 0..u.nrows() {
        let d = u[(i, i)].abs();
        dmin = dmin.min(d);
        dmax = dmax.max(d);
    }
    // Cheap condition estimate from the LU pivots; adequate as a guard.
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
    let x = lu.solve(rhs).ok_or(SolverError::SingularJacobian {
        condition: condition.to_f64(),
    })?;
    Ok((x, condition))
}

/// Newton iteration controls.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonSettings<T> {
    /// Absolute bound on `max_i |F_i|`.
    pub tol: T,
    pub max_iterations: usize,
    /// Step halvings per iteration before giving up on descent.
    pub max_halvings: usize,
    /// Jacobian condition-estimate ceiling.
    pub max_condition: T,
}

impl<T: Scalar> Default for NewtonSettings<T> {
    fn default() -> Self {
        Self {
            tol: T::cast(1e-12),
            max_iterations: 50,
            max_halvings: 8,
            max_condition: T::cast(1e14),
        }
    }
}

/// A converged Newton solve, before branch labelling.
#[derive(Debug, Clone)]
pub struct NewtonSolution<T> {
    pub q: DVector<T>,
    pub residual_norm: T,
    pub iterations: usize,
}

/// Damped Newton on a prebuilt system: full step, halve while the residual
/// norm fails to decrease.
pub fn newton_solve_system<T: Scalar>(
    system: &QuadraticSystem<T>,
    q0: &DVector<T>,
    settings: &NewtonSettings<T>,
) -> Result<NewtonSolution<T>, SolverError> {
    let mut q = q0.clone();
    let mut f = system.residual(&q);
    let mut norm = inf_norm(&f);

    for iteration in 0..settings.max_iterations {
        if norm <= settings.tol {
            return Ok(NewtonSolution {
                q,
                residual_norm: norm,
                iterations: iteration,
            });
        }

        let step = system.solve_linear(&q, &(-&f), settings.max_condition)?;

        let mut alpha = T::one();
        let mut accepted = false;
        for _ in 0..=settings.max_halvings {
            let trial = &q + &step * alpha;
            let trial_f = system.residual(&trial);
            let trial_norm = inf_norm(&trial_f);
            if trial_norm < norm {
                q = trial;
                f = trial_f;
                norm = trial_norm;
                accepted = true;
                break;
            }
            alpha *= T::cast(0.5);
        }
        if !accepted {
            return Err(SolverError::NoConvergence {
                iterations: iteration + 1,
                residual: norm.to_f64(),
                tol: settings.tol.to_f64(),
            });
        }
    }

    if norm <= settings.tol {
        return Ok(NewtonSolution {
            q,
            residual_norm: norm,
            iterations: settings.max_iterations,
        });
    }
    Err(SolverError::NoConvergence {
        iterations: settings.max_iterations,
        residual: norm.to_f64(),
        tol: settings.tol.to_f64(),
    })
}

/// Damped Newton from `q0` at the parameters `p`.
pub fn newton_solve<T: Scalar>(
    q0: &DVector<T>,
    p: &ModelParams<T>,
    settings: &NewtonSettings<T>,
) -> Result<NewtonSolution<T>, SolverError> {
    newton_solve_system(&QuadraticSystem::new(p), q0, settings)
}

/// Closed-form roots of the decoupled `g = 0` system for the branch `sigma`.
///
/// `q_i = 1/2 + sigma_i/2 * sqrt(1 + gamma^2/lin_x_i + lambda^2/lin_y_i)`;
/// the coupling strength of `p` is ignored and the returned state sits at
/// `p` with `g = 0`.
pub fn solve_at_g0<T: Scalar>(p: &ModelParams<T>, sigma: &SignVector) -> StateEigenvalues<T> {
    assert_eq!(sigma.len(), p.len(), "sign vector length must match L");
    let p0 = p.with_g(T::zero());
    let half = T::cast(0.5);
    let q = DVector::from_fn(p.len(), |i, _| {
        let radicand = T::one()
            + p.gamma() * p.gamma() / p.lin_x(i)
            + p.lambda() * p.lambda() / p.lin_y(i);
        half + sigma.sign::<T>(i) * half * radicand.sqrt()
    });
    let residual_norm = QuadraticSystem::new(&p0).residual_norm(&q);
    StateEigenvalues {
        sigma: sigma.clone(),
        q,
        params: p0,
        residual_norm,
    }
}

/// Adaptive step policy for the continuation driver.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepPolicy<T> {
    /// First step as a fraction of `|g_target|`.
    pub initial_fraction: T,
    /// Absolute step floor; reaching it aborts the path.
    pub min_step: T,
    /// Step multiplier applied after `successes_before_growth` accepted steps.
    pub growth: T,
    pub successes_before_growth: usize,
    /// Step ceiling as a fraction of `|g_target|`; keeps growth from racing
    /// past narrow avoided crossings.
    pub max_step_fraction: T,
    /// Optional absolute step ceiling on top of `max_step_fraction`.
    pub max_step: Option<T>,
    /// Corrector-vs-predictor drift budget, relative to `1 + |q|`. A step
    /// whose converged correction moves further than this is treated as a
    /// failure and halved: large drift means the Euler prediction did not
    /// resolve the path's curvature, the regime where branch jumps happen.
    pub drift_rel: T,
    /// Absolute floor of the drift budget.
    pub drift_abs: T,
    /// Tightens the drift budget to `basin_fraction * (1 + |q|) / cond(J)`
    /// when the Jacobian conditioning degrades. Nearby branches shrink the
    /// Newton basins roughly like `1/cond`, so the budget must shrink with
    /// them to keep each corrector at home.
    pub basin_fraction: T,
    /// Opt-in traversal of sub-resolution avoided crossings. When the step
    /// floor is reached at a pinch (two branches closer than double
    /// precision can separate), the driver hops past the window, recovers
    /// both local roots, takes the tangent-continuous one, and records the
    /// event. Off by default: the contract is to fail loudly at crossings.
    pub cross_pinches: bool,
}

impl<T: Scalar> Default for StepPolicy<T> {
    fn default() -> Self {
        Self {
            initial_fraction: T::cast(0.01),
            min_step: T::cast(1e-8),
            growth: T::cast(2.0),
            successes_before_growth: 3,
            max_step_fraction: T::cast(0.05),
            max_step: None,
            drift_rel: T::cast(5e-3),
            drift_abs: T::cast(1e-9),
            basin_fraction: T::cast(1.0),
            cross_pinches: false,
        }
    }
}

impl<T: Scalar> StepPolicy<T> {
    /// The default policy with pinch crossing enabled; used by ensemble
    /// drivers that track every branch and only need the root set.
    pub fn crossing_tolerant() -> Self {
        Self {
            cross_pinches: true,
            ..Self::default()
        }
    }
}

/// One rejected continuation step, kept for post-mortems.
#[derive(Debug, Clone)]
pub struct StepRejection {
    pub attempted_g: f64,
    pub step: f64,
    pub reason: String,
}

/// A traversed sub-resolution avoided crossing (only with
/// `StepPolicy::cross_pinches`). Branch identity through the window is not
/// numerically meaningful; the tangent-continuous root was taken.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PinchCrossing {
    /// Coupling where the step floor was reached.
    pub g: f64,
    /// Width of the hop over the window.
    pub hop: f64,
    /// Whether the second local root was recovered on the far side.
    pub partner_found: bool,
    /// Whether the recovered partner (rather than the direct corrector
    /// result) was the tangent-continuous choice.
    pub chose_alternate: bool,
}

/// A completed continuation run: checkpoints from `g = 0` to the target.
#[derive(Debug, Clone)]
pub struct ContinuationPath<T> {
    /// `(g, converged state)` pairs, `g` strictly monotone towards the target.
    pub checkpoints: Vec<(T, StateEigenvalues<T>)>,
    pub step_history: Vec<T>,
    pub rejections: Vec<StepRejection>,
    pub pinch_crossings: Vec<PinchCrossing>,
}

impl<T: Scalar> ContinuationPath<T> {
    /// The state at the target coupling.
    pub fn endpoint(&self) -> &StateEigenvalues<T> {
        &self.checkpoints.last().expect("path has at least g = 0").1
    }
}

/// Tracks the branch labelled `sigma` from the analytic `g = 0` roots to the
/// coupling strength of `p_target`.
///
/// Euler predictor from the eigenvalue-derivative linear system, damped
/// Newton corrector, step halved on any rejection and grown after
/// consecutive successes. Fails loudly (`PathFailure`) when the step floor
/// is reached; branches are never switched silently.
pub fn continue_in_g<T: Scalar>(
    sigma: &SignVector,
    p_target: &ModelParams<T>,
    policy: &StepPolicy<T>,
    newton: &NewtonSettings<T>,
) -> Result<ContinuationPath<T>, SolverError> {
    let g_target = p_target.g();
    let mut state = solve_at_g0(p_target, sigma);
    let mut path = ContinuationPath {
        checkpoints: vec![(T::zero(), state.clone())],
        step_history: Vec::new(),
        rejections: Vec::new(),
        pinch_crossings: Vec::new(),
    };
    if g_target == T::zero() {
        return Ok(path);
    }

    let span = g_target.abs();
    let direction = g_target.signum();
    let mut cap = span * policy.max_step_fraction;
    if let Some(extra) = policy.max_step {
        cap = cap.min(extra);
    }
    cap = cap.max(policy.min_step);
    let mut step = (span * policy.initial_fraction).max(policy.min_step).min(cap);
    let mut g = T::zero();
    let mut consecutive = 0usize;

    while g != g_target {
        let remaining = (g_target - g).abs();
        let this_step = step.min(remaining);
        // Land exactly on the target once it is within reach.
        let g_next = if this_step >= remaining {
            g_target
        } else {
            g + direction * this_step
        };

        let system = QuadraticSystem::new(&state.params);
        let tangent_info = state_tangent(&system, &state.q, newton.max_condition).ok();
        let (predicted, departure_cond) = match &tangent_info {
            Some((tangent, cond, _)) => (&state.q + tangent * (g_next - g), *cond),
            // Singular tangent at a converged checkpoint: fall back to the
            // zero-order predictor with a maximally distrustful drift budget
            // and let the corrector decide.
            None => (state.q.clone(), newton.max_condition),
        };

        let target_system = QuadraticSystem::new(&p_target.with_g(g_next));
        let outcome = newton_solve_system(&target_system, &predicted, newton);
        let accepted = match outcome {
            Ok(solution) => {
                // The corrector's displacement off the Euler prediction
                // measures unresolved path curvature; refuse steps that do
                // not resolve it, since those are where branch jumps occur.
                // Degrading conditioning means another branch is close, so
                // the budget shrinks with the estimated basin size.
                let scale = T::one() + inf_norm(&state.q);
                let budget = policy.drift_abs
                    + scale * policy.drift_rel.min(policy.basin_fraction / departure_cond);
                let drift = inf_norm(&(&solution.q - &predicted));
                if drift <= budget {
                    Some(solution)
                } else {
                    path.rejections.push(StepRejection {
                        attempted_g: g_next.to_f64(),
                        step: this_step.to_f64(),
                        reason: format!(
                            "corrector drifted {:e} > budget {:e}",
                            drift.to_f64(),
                            budget.to_f64()
                        ),
                    });
                    None
                }
            }
            Err(err) => {
                path.rejections.push(StepRejection {
                    attempted_g: g_next.to_f64(),
                    step: this_step.to_f64(),
                    reason: err.to_string(),
                });
                None
            }
        };

        match accepted {
            Some(solution) => {
                g = g_next;
                state = StateEigenvalues {
                    sigma: sigma.clone(),
                    q: solution.q,
                    params: p_target.with_g(g),
                    residual_norm: solution.residual_norm,
                };
                path.checkpoints.push((g, state.clone()));
                path.step_history.push(this_step);
                consecutive += 1;
                if consecutive >= policy.successes_before_growth {
                    consecutive = 0;
                    step = (step * policy.growth).min(cap);
                }
            }
            None => {
                consecutive = 0;
                step *= T::cast(0.5);
                if step < policy.min_step {
                    if policy.cross_pinches {
                        if let Some((g_new, solution, event)) = traverse_pinch(
                            p_target,
                            g,
                            g_target,
                            direction,
                            &state.q,
                            tangent_info.as_ref(),
                            newton,
                        ) {
                            g = g_new;
                            state = StateEigenvalues {
                                sigma: sigma.clone(),
                                q: solution.q,
                                params: p_target.with_g(g),
                                residual_norm: solution.residual_norm,
                            };
                            path.checkpoints.push((g, state.clone()));
                            path.step_history.push(T::cast(event.hop));
                            path.pinch_crossings.push(event);
                            step = (T::cast(event.hop) * T::cast(0.25))
                                .max(policy.min_step)
                                .min(cap);
                            continue;
                        }
                    }
                    let reason = path
                        .rejections
                        .last()
                        .map(|r| r.reason.clone())
                        .unwrap_or_else(|| "unknown".to_string());
                    return Err(SolverError::PathFailure {
                        last_good_g: g.to_f64(),
                        target_g: g_target.to_f64(),
                        step: step.to_f64(),
                        floor: policy.min_step.to_f64(),
                        reason: format!("likely level crossing; last rejection: {reason}"),
                    });
                }
            }
        }
    }

    Ok(path)
}

/// Hops over a sub-resolution avoided crossing: picks a window-clearing step,
/// converges the corrector, recovers the second local root along the
/// Jacobian's softest direction, and keeps whichever root continues the
/// incoming tangent. Returns `None` when no hop converges.
fn traverse_pinch<T: Scalar>(
    p_target: &ModelParams<T>,
    g: T,
    g_target: T,
    direction: T,
    q: &DVector<T>,
    tangent_info: Option<&(DVector<T>, T, DMatrix<T>)>,
    newton: &NewtonSettings<T>,
) -> Option<(T, NewtonSolution<T>, PinchCrossing)> {
    let span = g_target.abs();
    let scale = T::one() + inf_norm(q);
    let remaining = (g_target - g).abs();
    let zero_tangent = DVector::zeros(q.len());
    let tangent = tangent_info.map(|(t, _, _)| t).unwrap_or(&zero_tangent);

    let mut hop = (span * T::cast(1e-4)).min(remaining).max(T::cast(1e-7) * span);
    for _ in 0..10 {
        let g_new = if hop >= remaining {
            g_target
        } else {
            g + direction * hop
        };
        let system = QuadraticSystem::new(&p_target.with_g(g_new));
        let predicted = q + tangent * (g_new - g);
        if let Ok(direct) = newton_solve_system(&system, &predicted, newton) {
            // Second root near the first, displaced along the soft direction.
            let partner = state_tangent(&system, &direct.q, T::cast(f64::INFINITY))
                .ok()
                .and_then(|(_, _, inverse)| {
                    let soft = softest_direction(&inverse);
                    let separation_floor =
                        (T::cast(1e3) * newton.tol).max(T::cast(1e-10) * scale);
                    for eta_exp in [-9i32, -8, -7, -6, -5, -4, -3] {
                        let eta = scale * T::cast(10f64.powi(eta_exp));
                        for sign in [T::one(), -T::one()] {
                            let start = &direct.q + &soft * (sign * eta);
                            if let Ok(candidate) = newton_solve_system(&system, &start, newton) {
                                if inf_norm(&(&candidate.q - &direct.q)) > separation_floor {
                                    return Some(candidate);
                                }
                            }
                        }
                    }
                    None
                });

            let (chosen, partner_found, chose_alternate) = match partner {
                Some(candidate) => {
                    let d_direct = inf_norm(&(&direct.q - &predicted));
                    let d_candidate = inf_norm(&(&candidate.q - &predicted));
                    if d_candidate < d_direct {
                        (candidate, true, true)
                    } else {
                        (direct, true, false)
                    }
                }
                None => (direct, false, false),
            };
            let event = PinchCrossing {
                g: g.to_f64(),
                hop: (g_new - g).abs().to_f64(),
                partner_found,
                chose_alternate,
            };
            return Some((g_new, chosen, event));
        }
        if hop >= remaining {
            break;
        }
        hop = (hop * T::cast(4.0)).min(remaining);
    }
    None
}

/// `dq/dg` at a converged point, with an infinity-norm condition number of
/// the Jacobian (via its explicit inverse, affordable at these sizes and far
/// more reliable than pivot ratios): solves `J (dq/dg) = -dF/dg`.
fn state_tangent<T: Scalar>(
    system: &QuadraticSystem<T>,
    q: &DVector<T>,
    max_condition: T,
) -> Result<(DVector<T>, T, DMatrix<T>), SolverError> {
    let jac = system.jacobian(q);
    let rhs = -system.param_gradient(q, ParamAxis::G);
    let lu = jac.clone().lu();
    let inverse = lu.try_inverse().ok_or(SolverError::SingularJacobian {
        condition: f64::INFINITY,
    })?;
    let condition = matrix_inf_norm(&jac) * matrix_inf_norm(&inverse);
    if !condition.is_finite() || condition > max_condition {
        return Err(SolverError::SingularJacobian {
            condition: condition.to_f64(),
        });
    }
    let tangent = &inverse * rhs;
    Ok((tangent, condition, inverse))
}

fn matrix_inf_norm<T: Scalar>(m: &DMatrix<T>) -> T {
    let mut worst = T::zero();
    for i in 0..m.nrows() {
        let mut row = T::zero();
        for j in 0..m.ncols() {
            row += m[(i, j)].abs();
        }
        worst = worst.max(row);
    }
    worst
}

/// Direction along which the Jacobian is softest (largest singular direction
/// of its inverse): the line connecting nearly coincident roots. Power
/// iteration on `Minv^T Minv` from a fixed start keeps it deterministic.
fn softest_direction<T: Scalar>(inverse: &DMatrix<T>) -> DVector<T> {
    let n = inverse.nrows();
    let mut v = DVector::from_fn(n, |i, _| T::cast(1.0 + (i as f64) * 0.4142135623));
    v /= v.norm();
    for _ in 0..6 {
        let w = inverse * &v;
        let u = inverse.transpose() * w;
        let norm = u.norm();
        if norm <= T::zero() {
            break;
        }
        v = u / norm;
    }
    v
}
