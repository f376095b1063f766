//! Exact-diagonalization oracle: dense conserved-charge matrices, their
//! joint eigensystem, and the diagnostics that validate the solver.
//!
//! Everything here is brute force on `2^L`-dimensional Hermitian matrices
//! and intentionally so: the module is the ground truth the scalable solver
//! is measured against, not the scalable path itself.

pub mod spin;

use nalgebra::{Complex, DMatrix, DVector, SymmetricEigen};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use crate::error::OracleError;
use crate::model::{Axis, CouplingSet, ModelParams};
use crate::scalar::Scalar;
use crate::solver::QuadraticSystem;

pub use spin::{spin_operator, spin_operator_guarded, CMatrix, DEFAULT_L_MAX};

/// Default relative tolerance on pairwise commutator norms.
pub const DEFAULT_COMMUTATOR_TOL: f64 = 1e-10;
/// Default absolute tolerance on quadratic residuals of exact rows.
pub const DEFAULT_QUAD_TOL: f64 = 1e-9;
/// Default absolute eigenvalue gap below which the mixing matrix is redrawn.
pub const DEFAULT_DEGENERACY_TOL: f64 = 1e-8;
/// Default relative Hermiticity tolerance.
pub const DEFAULT_HERMITICITY_TOL: f64 = 1e-13;
/// Redraws of the mixing coefficients before the block fallback.
pub const DEFAULT_MAX_REDRAWS: usize = 5;

/// The `L` conserved charges as dense Hermitian matrices.
#[derive(Debug, Clone)]
pub struct ChargeMatrixSet<T> {
    matrices: Vec<CMatrix<T>>,
    l: usize,
    shifted: bool,
}

impl<T: Scalar> ChargeMatrixSet<T> {
    /// Builds the charges from validated parameters with the default size
    /// guard.
    ///
    /// `shifted = true` adds the constant `1/2 - 1/4 sum_j Gamma^z_ij` to
    /// each charge (equivalently uses `S^z_i + 1/2` and
    /// `S^z_i S^z_j - 1/4`); only the shifted eigenvalues satisfy the
    /// quadratic equations.
    pub fn from_params(p: &ModelParams<T>, shifted: bool) -> Result<Self, OracleError> {
        Self::from_params_guarded(p, shifted, DEFAULT_L_MAX)
    }

    pub fn from_params_guarded(
        p: &ModelParams<T>,
        shifted: bool,
        l_max: usize,
    ) -> Result<Self, OracleError> {
        Self::from_couplings(&CouplingSet::evaluate(p), shifted, l_max)
    }

    /// Builds the charges from an arbitrary coupling set (which need not be
    /// integrable — that is what the commutator diagnostic is for).
    pub fn from_couplings(
        c: &CouplingSet<T>,
        shifted: bool,
        l_max: usize,
    ) -> Result<Self, OracleError> {
        let l = c.len();
        spin::check_system_size(l, l_max)?;
        let dim = 1usize << l;
        let quarter = T::cast(0.25);
        let half = T::cast(0.5);

        let matrices = (0..l)
            .map(|i| {
                let site = i + 1;
                let mut q = CMatrix::<T>::zeros(dim, dim);
                spin::add_single_site(&mut q, Axis::X, site, l, c.bx[i]);
                spin::add_single_site(&mut q, Axis::Y, site, l, c.by[i]);
                spin::add_single_site(&mut q, Axis::Z, site, l, c.bz[i]);
                if shifted {
                    spin::add_identity(&mut q, half);
                }
                for j in 0..l {
                    if j == i {
                        continue;
                    }
                    spin::add_two_site(&mut q, Axis::X, site, j + 1, l, c.gx[(i, j)]);
                    spin::add_two_site(&mut q, Axis::Y, site, j + 1, l, c.gy[(i, j)]);
                    spin::add_two_site(&mut q, Axis::Z, site, j + 1, l, c.gz[(i, j)]);
                    if shifted {
                        spin::add_identity(&mut q, -quarter * c.gz[(i, j)]);
                    }
                }
                q
            })
            .collect();

        Ok(Self { matrices, l, shifted })
    }

    pub fn len(&self) -> usize {
        self.l
    }

    pub fn is_empty(&self) -> bool {
        self.matrices.is_empty()
    }

    pub fn dim(&self) -> usize {
        1usize << self.l
    }

    pub fn is_shifted(&self) -> bool {
        self.shifted
    }

    pub fn charge(&self, i: usize) -> &CMatrix<T> {
        &self.matrices[i]
    }

    pub fn charges(&self) -> &[CMatrix<T>] {
        &self.matrices
    }

    /// Mutable access for perturbation experiments.
    pub fn charge_mut(&mut self, i: usize) -> &mut CMatrix<T> {
        &mut self.matrices[i]
    }

    /// Worst relative deviation from Hermiticity over all charges.
    pub fn hermiticity_error(&self) -> T {
        let mut worst = T::zero();
        for q in &self.matrices {
            let mut dev = T::zero();
            let mut scale = T::zero();
            for r in 0..q.nrows() {
                for c in r..q.ncols() {
                    let d = (q[(r, c)] - q[(c, r)].conj()).norm_sqr().sqrt();
                    dev = dev.max(d);
                    scale = scale.max(q[(r, c)].norm_sqr().sqrt());
                }
            }
            if scale > T::zero() {
                worst = worst.max(dev / scale);
            }
        }
        worst
    }

    /// Largest pairwise commutator, Frobenius norm relative to the product
    /// of the charges' norms.
    pub fn max_commutator(&self) -> CommutatorReport<T> {
        let norms: Vec<T> = self.matrices.iter().map(|m| m.norm()).collect();
        let mut report = CommutatorReport {
            max_relative: T::zero(),
            worst_pair: (0, 0),
        };
        for i in 0..self.l {
            for j in (i + 1)..self.l {
                let c = &self.matrices[i] * &self.matrices[j]
                    - &self.matrices[j] * &self.matrices[i];
                let denom = norms[i] * norms[j];
                let rel = if denom > T::zero() {
                    c.norm() / denom
                } else {
                    c.norm()
                };
                if rel > report.max_relative {
                    report.max_relative = rel;
                    report.worst_pair = (i, j);
                }
            }
        }
        report
    }

    /// `tr(Q_i) / 2^L`.
    pub fn mean_trace(&self, i: usize) -> T {
        let mut acc = Complex::new(T::zero(), T::zero());
        for k in 0..self.dim() {
            acc += self.matrices[i][(k, k)];
        }
        acc.re / T::from_count(self.dim())
    }

    /// Sorted spectrum of a single charge.
    pub fn charge_spectrum(&self, i: usize) -> DVector<T> {
        let eig = SymmetricEigen::new(hermitize(&self.matrices[i]));
        let mut vals: Vec<T> = eig.eigenvalues.iter().copied().collect();
        vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
        DVector::from_vec(vals)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CommutatorReport<T> {
    pub max_relative: T,
    /// 0-based charge indices of the worst pair.
    pub worst_pair: (usize, usize),
}

fn hermitize<T: Scalar>(m: &CMatrix<T>) -> CMatrix<T> {
    let half = Complex::new(T::cast(0.5), T::zero());
    (m + m.adjoint()).map(|e| e * half)
}

/// Joint eigensystem of the commuting family.
#[derive(Debug, Clone)]
pub struct JointEigensystem<T> {
    /// `2^L x L`: row `s` holds the eigenvalues `q_i` of state `s`.
    pub table: DMatrix<T>,
    /// Columns are the joint eigenvectors, ordered like the table rows.
    pub eigenvectors: CMatrix<T>,
    /// Eigenvalues of the mixing combination, ascending; fixes the state
    /// ordering.
    pub mix_eigenvalues: DVector<T>,
    pub seed: u64,
    pub redraws: usize,
    pub used_block_fallback: bool,
}

impl<T: Scalar> JointEigensystem<T> {
    pub fn num_states(&self) -> usize {
        self.table.nrows()
    }

    /// Worst deviation between every table column (as a multiset) and the
    /// spectrum of the corresponding charge.
    pub fn spectrum_deviation(&self, cs: &ChargeMatrixSet<T>) -> T {
        let mut worst = T::zero();
        for i in 0..cs.len() {
            let spectrum = cs.charge_spectrum(i);
            let mut column: Vec<T> = self.table.column(i).iter().copied().collect();
            column.sort_by(|a, b| a.partial_cmp(b).unwrap());
            for (a, b) in column.iter().zip(spectrum.iter()) {
                worst = worst.max((*a - *b).abs());
            }
        }
        worst
    }

    /// Table rows sorted lexicographically; the multiset view used to
    /// compare runs with different seeds or against the solver.
    pub fn sorted_rows(&self) -> Vec<Vec<T>> {
        let mut rows: Vec<Vec<T>> = (0..self.table.nrows())
            .map(|s| self.table.row(s).iter().copied().collect())
            .collect();
        rows.sort_by(|a, b| a.partial_cmp(b).unwrap());
        rows
    }
}

/// Extracts the joint eigensystem by diagonalizing a random real combination
/// `M = sum_i c_i Q_i` and taking Rayleigh quotients `<v|Q_i|v>`.
///
/// If the combination's spectrum has a gap below `degeneracy_tol` the
/// coefficients are redrawn (same seeded stream); after
/// `DEFAULT_MAX_REDRAWS` failures the degenerate clusters are resolved by
/// block diagonalization charge by charge. Only a genuinely degenerate joint
/// spectrum (identical full rows) is an error.
pub fn joint_eigensystem<T: Scalar>(
    cs: &ChargeMatrixSet<T>,
    seed: u64,
) -> Result<JointEigensystem<T>, OracleError> {
    joint_eigensystem_with(cs, seed, T::cast(DEFAULT_DEGENERACY_TOL), DEFAULT_MAX_REDRAWS)
}

pub fn joint_eigensystem_with<T: Scalar>(
    cs: &ChargeMatrixSet<T>,
    seed: u64,
    degeneracy_tol: T,
    max_redraws: usize,
) -> Result<JointEigensystem<T>, OracleError> {
    let mut rng = StdRng::seed_from_u64(seed);
    let mut last: Option<(DVector<T>, CMatrix<T>)> = None;
    let mut redraws = 0;

    for attempt in 0..=max_redraws {
        let coefficients: Vec<T> = (0..cs.len())
            .map(|_| T::cast(rng.gen::<f64>() * 2.0 - 1.0))
            .collect();
        let (values, vectors) = sorted_eigensystem(&mix_charges(cs, &coefficients));
        let min_gap = min_adjacent_gap(&values);
        if min_gap >= degeneracy_tol || cs.dim() == 1 {
            return Ok(JointEigensystem {
                table: rayleigh_table(cs, &vectors),
                eigenvectors: vectors,
                mix_eigenvalues: values,
                seed,
                redraws: attempt,
                used_block_fallback: false,
            });
        }
        redraws = attempt;
        last = Some((values, vectors));
    }

    // Block fallback on the last draw: refine each degenerate cluster with
    // every charge in turn.
    let (values, vectors) = last.expect("at least one draw happened");
    let mut blocks: Vec<CMatrix<T>> = Vec::new();
    for (start, end) in cluster_ranges(&values, degeneracy_tol) {
        blocks.push(vectors.columns(start, end - start).into_owned());
    }

    for q in cs.charges() {
        let mut refined = Vec::with_capacity(blocks.len());
        for block in &blocks {
            if block.ncols() == 1 {
                refined.push(block.clone());
                continue;
            }
            let projected = hermitize(&(block.adjoint() * q * block));
            let (sub_values, sub_vectors) = sorted_eigensystem(&projected);
            for (start, end) in cluster_ranges(&sub_values, degeneracy_tol) {
                refined.push(block * sub_vectors.columns(start, end - start).into_owned());
            }
        }
        blocks = refined;
    }

    let mut offset = 0;
    for block in &blocks {
        if block.ncols() > 1 {
            return Err(OracleError::DegenerateJointSpectrum {
                states: (offset..offset + block.ncols()).collect(),
                min_gap: min_adjacent_gap(&values).to_f64(),
            });
        }
        offset += block.ncols();
    }

    let dim = cs.dim();
    let mut resolved = CMatrix::<T>::zeros(dim, dim);
    for (s, block) in blocks.iter().enumerate() {
        resolved.set_column(s, &block.column(0));
    }

    Ok(JointEigensystem {
        table: rayleigh_table(cs, &resolved),
        eigenvectors: resolved,
        mix_eigenvalues: values,
        seed,
        redraws,
        used_block_fallback: true,
    })
}

fn mix_charges<T: Scalar>(cs: &ChargeMatrixSet<T>, coefficients: &[T]) -> CMatrix<T> {
    let dim = cs.dim();
    let mut m = CMatrix::<T>::zeros(dim, dim);
    for (c, q) in coefficients.iter().zip(cs.charges()) {
        let w = Complex::new(*c, T::zero());
        m.zip_apply(q, |out, e| *out += w * e);
    }
    hermitize(&m)
}

fn sorted_eigensystem<T: Scalar>(m: &CMatrix<T>) -> (DVector<T>, CMatrix<T>) {
    let eig = SymmetricEigen::new(m.clone());
    let n = eig.eigenvalues.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].partial_cmp(&eig.eigenvalues[b]).unwrap());
    let values = DVector::from_fn(n, |k, _| eig.eigenvalues[order[k]]);
    let mut vectors = CMatrix::<T>::zeros(n, n);
    for (new, &old) in order.iter().enumerate() {
        vectors.set_column(new, &eig.eigenvectors.column(old));
    }
    (values, vectors)
}

fn min_adjacent_gap<T: Scalar>(sorted_values: &DVector<T>) -> T {
    let mut gap = T::cast(f64::INFINITY);
    for k in 1..sorted_values.len() {
        gap = gap.min(sorted_values[k] - sorted_values[k - 1]);
    }
    gap
}

/// Half-open index ranges of eigenvalue clusters separated by less than
/// `tol`.
fn cluster_ranges<T: Scalar>(sorted_values: &DVector<T>, tol: T) -> Vec<(usize, usize)> {
    let n = sorted_values.len();
    let mut ranges = Vec::new();
    let mut start = 0;
    for k in 1..=n {
        if k == n || sorted_values[k] - sorted_values[k - 1] >= tol {
            ranges.push((start, k));
            start = k;
        }
    }
    ranges
}

/// `table[s][i] = Re <v_s | Q_i | v_s>`.
fn rayleigh_table<T: Scalar>(cs: &ChargeMatrixSet<T>, vectors: &CMatrix<T>) -> DMatrix<T> {
    let dim = cs.dim();
    let mut table = DMatrix::zeros(dim, cs.len());
    for (i, q) in cs.charges().iter().enumerate() {
        let applied = q * vectors;
        for s in 0..dim {
            let mut acc = Complex::new(T::zero(), T::zero());
            for k in 0..dim {
                acc += vectors[(k, s)].conj() * applied[(k, s)];
            }
            table[(s, i)] = acc.re;
        }
    }
    table
}

/// Quadratic-equation residuals evaluated on every exact eigenvalue row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadResidualReport<T> {
    pub max_residual: T,
    pub worst_state: usize,
}

/// Checks that every row of the exact table solves the quadratic system of
/// `p`. Diagnostic: rows of unshifted charges simply report large residuals.
pub fn verify_quadratic<T: Scalar>(
    es: &JointEigensystem<T>,
    p: &ModelParams<T>,
) -> QuadResidualReport<T> {
    let system = QuadraticSystem::new(p);
    let mut report = QuadResidualReport {
        max_residual: T::zero(),
        worst_state: 0,
    };
    for s in 0..es.num_states() {
        let row = es.table.row(s).transpose();
        let norm = system.residual_norm(&row);
        if norm > report.max_residual {
            report.max_residual = norm;
            report.worst_state = s;
        }
    }
    report
}

/// Commutation of every charge with the parity operator `prod_i (2 S^z_i)`
/// and with the total magnetisation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParityReport<T> {
    /// `max |[Q_i, P]|` entrywise, normalized by the largest possible
    /// violating entry; zero means exact parity symmetry.
    pub max_parity_commutator: T,
    /// Same measure against `S^z_total` (U(1) symmetry).
    pub max_u1_commutator: T,
    pub even_dim: usize,
    pub odd_dim: usize,
}

/// Diagnoses the discrete parity symmetry (exact whenever `gamma = lambda =
/// 0`) and the finer U(1) symmetry of the isotropic limits.
pub fn parity_check<T: Scalar>(cs: &ChargeMatrixSet<T>) -> ParityReport<T> {
    let l = cs.len();
    let parity = spin::parity_diagonal::<T>(l);
    let magnet = spin::total_sz_diagonal::<T>(l);
    let even_dim = parity.iter().filter(|&&p| p > T::zero()).count();
    let odd_dim = parity.len() - even_dim;

    ParityReport {
        max_parity_commutator: diagonal_commutator(cs, &parity),
        max_u1_commutator: diagonal_commutator(cs, &magnet),
        even_dim,
        odd_dim,
    }
}

/// `max_entries |Q_kl (d_l - d_k)| / (max|Q| * spread(d))` over all charges.
fn diagonal_commutator<T: Scalar>(cs: &ChargeMatrixSet<T>, diag: &[T]) -> T {
    let mut spread = T::zero();
    for &a in diag {
        for &b in diag {
            spread = spread.max((a - b).abs());
        }
    }
    let mut worst = T::zero();
    for q in cs.charges() {
        let mut dev = T::zero();
        let mut scale = T::zero();
        for r in 0..q.nrows() {
            for c in 0..q.ncols() {
                let mag = q[(r, c)].norm_sqr().sqrt();
                scale = scale.max(mag);
                dev = dev.max(mag * (diag[c] - diag[r]).abs());
            }
        }
        if scale > T::zero() && spread > T::zero() {
            worst = worst.max(dev / (scale * spread));
        }
    }
    worst
}

/// Greedy nearest-row assignment between two tables of identical shape;
/// used to pair continuation endpoints with exact eigenvalue rows.
#[derive(Debug, Clone)]
pub struct RowMatch<T> {
    /// `assignment[a]` = row of the second table claimed by row `a` of the
    /// first.
    pub assignment: Vec<usize>,
    /// Worst entrywise deviation over matched rows.
    pub max_deviation: T,
}

pub fn match_rows_nearest<T: Scalar>(first: &DMatrix<T>, second: &DMatrix<T>) -> RowMatch<T> {
    assert_eq!(first.shape(), second.shape(), "tables must be congruent");
    let n = first.nrows();
    let mut used = vec![false; n];
    let mut assignment = vec![0usize; n];
    let mut max_deviation = T::zero();

    for a in 0..n {
        let mut best = usize::MAX;
        let mut best_dist = T::cast(f64::INFINITY);
        for b in 0..n {
            if used[b] {
                continue;
            }
            let mut dist = T::zero();
            for c in 0..first.ncols() {
                dist = dist.max((first[(a, c)] - second[(b, c)]).abs());
            }
            if dist < best_dist {
                best_dist = dist;
                best = b;
            }
        }
        used[best] = true;
        assignment[a] = best;
        max_deviation = max_deviation.max(best_dist);
    }

    RowMatch {
        assignment,
        max_deviation,
    }
}
