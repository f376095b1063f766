//! Model parametrisation: realized fields and couplings, integrability
//! constraint checker, and special-limit constructors.
//!
//! The model lives on `L` spins with pairwise-distinct inhomogeneities
//! `eps_1..eps_L` and seven free parameters `{alpha_x, beta_x, alpha_y,
//! beta_y, gamma, lambda, g}`. Every realized quantity is built from the two
//! linear forms `alpha_x*eps_i + beta_x` and `alpha_y*eps_i + beta_y`, which
//! must stay strictly positive so the square roots remain real.

use nalgebra::{DMatrix, DVector};

use crate::error::ModelError;
use crate::scalar::Scalar;

/// Minimum admissible separation between two inhomogeneities.
pub const DEFAULT_EPS_GAP: f64 = 1e-10;

/// Unvalidated parameter bundle, exactly the free parameters of the model.
#[derive(Debug, Clone, PartialEq)]
pub struct RawModelParams<T> {
    pub epsilons: Vec<T>,
    pub alpha_x: T,
    pub beta_x: T,
    pub alpha_y: T,
    pub beta_y: T,
    pub gamma: T,
    pub lambda: T,
    pub g: T,
}

/// Validated model parameters. Immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<T> {
    epsilons: Vec<T>,
    alpha_x: T,
    beta_x: T,
    alpha_y: T,
    beta_y: T,
    gamma: T,
    lambda: T,
    g: T,
    /// Set by the zero-field proxy constructor: downstream reports should
    /// quote eigenvalues as `q_i / g`.
    zero_field_proxy: bool,
}

impl<T: Scalar> ModelParams<T> {
    /// Validates a raw bundle with the default inhomogeneity gap.
    pub fn new(raw: RawModelParams<T>) -> Result<Self, ModelError> {
        Self::with_min_gap(raw, T::cast(DEFAULT_EPS_GAP))
    }

    /// Validates a raw bundle, requiring `|eps_i - eps_j| >= min_gap`.
    pub fn with_min_gap(raw: RawModelParams<T>, min_gap: T) -> Result<Self, ModelError> {
        let l = raw.epsilons.len();
        if l == 0 {
            return Err(ModelError::EmptySystem);
        }
        for (name, value) in [
            ("alpha_x", raw.alpha_x),
            ("beta_x", raw.beta_x),
            ("alpha_y", raw.alpha_y),
            ("beta_y", raw.beta_y),
            ("gamma", raw.gamma),
            ("lambda", raw.lambda),
            ("g", raw.g),
        ] {
            if !value.is_finite() {
                return Err(ModelError::NonFiniteParameter { name });
            }
        }
        if raw.epsilons.iter().any(|e| !e.is_finite()) {
            return Err(ModelError::NonFiniteParameter { name: "epsilons" });
        }

        // Pairwise distinctness reduces to adjacent gaps in sorted order.
        let mut order: Vec<usize> = (0..l).collect();
        order.sort_by(|&a, &b| raw.epsilons[a].partial_cmp(&raw.epsilons[b]).unwrap());
        for w in order.windows(2) {
            let (i, j) = (w[0], w[1]);
            let sep = (raw.epsilons[j] - raw.epsilons[i]).abs();
            if sep < min_gap {
                return Err(ModelError::EpsilonsTooClose {
                    i: i + 1,
                    j: j + 1,
                    separation: sep.to_f64(),
                    min_gap: min_gap.to_f64(),
                });
            }
        }

        for (site, &eps) in raw.epsilons.iter().enumerate() {
            for (family, alpha, beta) in [('x', raw.alpha_x, raw.beta_x), ('y', raw.alpha_y, raw.beta_y)] {
                let value = alpha * eps + beta;
                if value <= T::zero() {
                    return Err(ModelError::NonPositiveRadicand {
                        family,
                        site: site + 1,
                        value: value.to_f64(),
                    });
                }
            }
        }

        Ok(Self {
            epsilons: raw.epsilons,
            alpha_x: raw.alpha_x,
            beta_x: raw.beta_x,
            alpha_y: raw.alpha_y,
            beta_y: raw.beta_y,
            gamma: raw.gamma,
            lambda: raw.lambda,
            g: raw.g,
            zero_field_proxy: false,
        })
    }

    /// Number of spins.
    pub fn len(&self) -> usize {
        self.epsilons.len()
    }

    pub fn is_empty(&self) -> bool {
        false // L >= 1 by construction
    }

    pub fn epsilons(&self) -> &[T] {
        &self.epsilons
    }

    /// Inhomogeneity of 0-based site `i`.
    pub fn eps(&self, i: usize) -> T {
        self.epsilons[i]
    }

    pub fn alpha_x(&self) -> T {
        self.alpha_x
    }

    pub fn beta_x(&self) -> T {
        self.beta_x
    }

    pub fn alpha_y(&self) -> T {
        self.alpha_y
    }

    pub fn beta_y(&self) -> T {
        self.beta_y
    }

    pub fn gamma(&self) -> T {
        self.gamma
    }

    pub fn lambda(&self) -> T {
        self.lambda
    }

    pub fn g(&self) -> T {
        self.g
    }

    pub fn is_zero_field_proxy(&self) -> bool {
        self.zero_field_proxy
    }

    /// Linear form `alpha_x*eps_i + beta_x` (strictly positive).
    pub fn lin_x(&self, i: usize) -> T {
        self.alpha_x * self.epsilons[i] + self.beta_x
    }

    /// Linear form `alpha_y*eps_i + beta_y` (strictly positive).
    pub fn lin_y(&self, i: usize) -> T {
        self.alpha_y * self.epsilons[i] + self.beta_y
    }

    /// `kappa_j = sqrt((alpha_x eps_j + beta_x)(alpha_y eps_j + beta_y))`.
    pub fn kappa(&self, j: usize) -> T {
        (self.lin_x(j) * self.lin_y(j)).sqrt()
    }

    /// In-plane field components at site `i`: `(B^x_i, B^y_i)`.
    pub fn field_xy(&self, i: usize) -> (T, T) {
        (
            self.gamma / self.lin_x(i).sqrt(),
            self.lambda / self.lin_y(i).sqrt(),
        )
    }

    /// Same parameters at a different coupling strength.
    pub fn with_g(&self, g: T) -> Self {
        let mut p = self.clone();
        p.g = g;
        p
    }

    pub fn with_gamma(&self, gamma: T) -> Self {
        let mut p = self.clone();
        p.gamma = gamma;
        p
    }

    pub fn with_lambda(&self, lambda: T) -> Self {
        let mut p = self.clone();
        p.lambda = lambda;
        p
    }

    /// The raw bundle this validated to (round-trips through `new`).
    pub fn to_raw(&self) -> RawModelParams<T> {
        RawModelParams {
            epsilons: self.epsilons.clone(),
            alpha_x: self.alpha_x,
            beta_x: self.beta_x,
            alpha_y: self.alpha_y,
            beta_y: self.beta_y,
            gamma: self.gamma,
            lambda: self.lambda,
            g: self.g,
        }
    }
}

/// Special limits of the parametrisation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelLimit {
    /// `beta_x = beta_y = 0`, `alpha_y = alpha_x`: XY-isotropic model.
    Xxz,
    /// `alpha_x = alpha_y = 0`, `beta_y = beta_x`: fully isotropic model.
    Xxx,
    /// Large-`g` proxy for the zero-field model; eigenvalue reports should be
    /// rescaled by `1/g`. The symbolic `g -> inf` limit is not taken.
    ZeroFieldProxy,
}

/// Builds validated parameters in one of the special limits, overriding the
/// relevant fields of `base`.
pub fn limit_params<T: Scalar>(
    kind: ModelLimit,
    base: RawModelParams<T>,
) -> Result<ModelParams<T>, ModelError> {
    let mut raw = base;
    match kind {
        ModelLimit::Xxz => {
            for (site, &eps) in raw.epsilons.iter().enumerate() {
                if eps <= T::zero() {
                    return Err(ModelError::NonPositiveEpsilonForXxz {
                        site: site + 1,
                        value: eps.to_f64(),
                    });
                }
            }
            raw.beta_x = T::zero();
            raw.beta_y = T::zero();
            raw.alpha_y = raw.alpha_x;
            ModelParams::new(raw)
        }
        ModelLimit::Xxx => {
            raw.alpha_x = T::zero();
            raw.alpha_y = T::zero();
            raw.beta_y = raw.beta_x;
            ModelParams::new(raw)
        }
        ModelLimit::ZeroFieldProxy => {
            let mut params = ModelParams::new(raw)?;
            params.zero_field_proxy = true;
            Ok(params)
        }
    }
}

/// One of the three spin directions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub const ALL: [Axis; 3] = [Axis::X, Axis::Y, Axis::Z];

    /// The six permutations of `(x, y, z)`.
    pub const PERMUTATIONS: [(Axis, Axis, Axis); 6] = [
        (Axis::X, Axis::Y, Axis::Z),
        (Axis::X, Axis::Z, Axis::Y),
        (Axis::Y, Axis::X, Axis::Z),
        (Axis::Y, Axis::Z, Axis::X),
        (Axis::Z, Axis::X, Axis::Y),
        (Axis::Z, Axis::Y, Axis::X),
    ];
}

/// Realized magnetic fields `B^a_i` and couplings `Gamma^a_ij`.
///
/// The diagonal of each coupling matrix is meaningless and is filled with
/// NaN so an accidental read surfaces immediately.
#[derive(Debug, Clone, PartialEq)]
pub struct CouplingSet<T> {
    pub bx: DVector<T>,
    pub by: DVector<T>,
    /// Identically one; kept explicit because the checker treats `z` like any
    /// other axis.
    pub bz: DVector<T>,
    pub gx: DMatrix<T>,
    pub gy: DMatrix<T>,
    pub gz: DMatrix<T>,
}

impl<T: Scalar> CouplingSet<T> {
    /// Evaluates fields and couplings from validated parameters.
    pub fn evaluate(p: &ModelParams<T>) -> Self {
        let l = p.len();
        let nan = T::cast(f64::NAN);
        let mut bx = DVector::zeros(l);
        let mut by = DVector::zeros(l);
        let bz = DVector::from_element(l, T::one());
        let mut gx = DMatrix::from_element(l, l, nan);
        let mut gy = DMatrix::from_element(l, l, nan);
        let mut gz = DMatrix::from_element(l, l, nan);

        for i in 0..l {
            let (fx, fy) = p.field_xy(i);
            bx[i] = fx;
            by[i] = fy;
            for j in 0..l {
                if i == j {
                    continue;
                }
                let d = p.eps(i) - p.eps(j);
                gx[(i, j)] = p.g() * (p.lin_x(i) * p.lin_y(j)).sqrt() / d;
                gy[(i, j)] = p.g() * (p.lin_y(i) * p.lin_x(j)).sqrt() / d;
                gz[(i, j)] = p.g() * (p.lin_x(j) * p.lin_y(j)).sqrt() / d;
            }
        }

        Self { bx, by, bz, gx, gy, gz }
    }

    pub fn len(&self) -> usize {
        self.bx.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bx.is_empty()
    }

    pub fn field(&self, axis: Axis) -> &DVector<T> {
        match axis {
            Axis::X => &self.bx,
            Axis::Y => &self.by,
            Axis::Z => &self.bz,
        }
    }

    pub fn coupling(&self, axis: Axis) -> &DMatrix<T> {
        match axis {
            Axis::X => &self.gx,
            Axis::Y => &self.gy,
            Axis::Z => &self.gz,
        }
    }

    /// Evaluates the integrability constraint residuals.
    ///
    /// Diagnostic only: arbitrary (e.g. hand-perturbed) coupling sets are
    /// legitimate input and simply report nonzero residuals.
    pub fn check_constraints(&self) -> ConstraintReport<T> {
        let l = self.len();
        let mut report = ConstraintReport::default();

        for (a, b, c) in Axis::PERMUTATIONS {
            let ba = self.field(a);
            let gb = self.coupling(b);
            let gc = self.coupling(c);
            let ga = self.coupling(a);
            for i in 0..l {
                for j in 0..l {
                    if i == j {
                        continue;
                    }
                    // Gamma^b_ij B^a_j + Gamma^c_ji B^a_i = 0
                    let t1 = gb[(i, j)] * ba[j];
                    let t2 = gc[(j, i)] * ba[i];
                    report.record_field((t1 + t2).abs(), t1.abs().max(t2.abs()));

                    for k in 0..l {
                        if k == i || k == j {
                            continue;
                        }
                        // Gamma^a_ik Gamma^b_jk - Gamma^a_ij Gamma^c_jk
                        //   - Gamma^b_ji Gamma^c_ik = 0
                        let s1 = ga[(i, k)] * gb[(j, k)];
                        let s2 = ga[(i, j)] * gc[(j, k)];
                        let s3 = gb[(j, i)] * gc[(i, k)];
                        report.record_cubic(
                            (s1 - s2 - s3).abs(),
                            s1.abs().max(s2.abs()).max(s3.abs()),
                        );
                    }
                }
            }
        }

        report
    }
}

/// Residual maxima of the two integrability constraint families, together
/// with the magnitude of the largest participating term for relative scaling.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstraintReport<T> {
    pub max_field_residual: T,
    pub field_scale: T,
    pub field_terms: usize,
    pub max_cubic_residual: T,
    pub cubic_scale: T,
    pub cubic_terms: usize,
}

impl<T: Scalar> Default for ConstraintReport<T> {
    fn default() -> Self {
        Self {
            max_field_residual: T::zero(),
            field_scale: T::zero(),
            field_terms: 0,
            max_cubic_residual: T::zero(),
            cubic_scale: T::zero(),
            cubic_terms: 0,
        }
    }
}

impl<T: Scalar> ConstraintReport<T> {
    fn record_field(&mut self, residual: T, scale: T) {
        self.max_field_residual = self.max_field_residual.max(residual);
        self.field_scale = self.field_scale.max(scale);
        self.field_terms += 1;
    }

    fn record_cubic(&mut self, residual: T, scale: T) {
        self.max_cubic_residual = self.max_cubic_residual.max(residual);
        self.cubic_scale = self.cubic_scale.max(scale);
        self.cubic_terms += 1;
    }

    /// Field residual relative to the largest participating term.
    pub fn field_relative(&self) -> T {
        relative(self.max_field_residual, self.field_scale)
    }

    /// Cubic residual relative to the largest participating term.
    pub fn cubic_relative(&self) -> T {
        relative(self.max_cubic_residual, self.cubic_scale)
    }

    pub fn max_relative(&self) -> T {
        self.field_relative().max(self.cubic_relative())
    }
}

fn relative<T: Scalar>(residual: T, scale: T) -> T {
    if scale > T::zero() {
        residual / scale
    } else {
        residual
    }
}
