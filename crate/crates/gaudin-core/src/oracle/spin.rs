//! Dense tensor-product spin-1/2 operators.
//!
//! Basis convention: computational basis index `n` over `2^L` states, site 1
//! occupying the most significant bit, bit value 0 meaning spin up. Every
//! operator touches one or two sites, so matrices are filled column by
//! column with a single entry each — no Kronecker products of full
//! matrices are ever formed.

use nalgebra::{Complex, DMatrix};

use crate::error::OracleError;
use crate::model::Axis;
use crate::scalar::Scalar;

/// Dense complex matrix over the working scalar.
pub type CMatrix<T> = DMatrix<Complex<T>>;

/// Largest system the dense oracle will build by default.
pub const DEFAULT_L_MAX: usize = 14;

/// Action of a single-site spin-1/2 operator on a basis bit:
/// `(flipped bit, amplitude)`.
fn bit_action<T: Scalar>(axis: Axis, bit: usize) -> (usize, Complex<T>) {
    let half = T::cast(0.5);
    match axis {
        Axis::Z => {
            let amp = if bit == 0 { half } else { -half };
            (bit, Complex::new(amp, T::zero()))
        }
        Axis::X => (1 - bit, Complex::new(half, T::zero())),
        Axis::Y => {
            // <down|S^y|up> = i/2, <up|S^y|down> = -i/2
            let amp = if bit == 0 { half } else { -half };
            (1 - bit, Complex::new(T::zero(), amp))
        }
    }
}

fn bit_of(n: usize, site: usize, l: usize) -> usize {
    (n >> (l - site)) & 1
}

fn with_bit(n: usize, site: usize, l: usize, bit: usize) -> usize {
    let mask = 1 << (l - site);
    if bit == 1 {
        n | mask
    } else {
        n & !mask
    }
}

fn check_site(site: usize, l: usize) -> Result<(), OracleError> {
    if site == 0 || site > l {
        return Err(OracleError::SiteOutOfRange { site, l });
    }
    Ok(())
}

pub fn check_system_size(l: usize, l_max: usize) -> Result<(), OracleError> {
    if l > l_max {
        return Err(OracleError::SystemTooLarge {
            requested: l,
            l_max,
        });
    }
    Ok(())
}

/// `S^axis_site` embedded in the `2^L`-dimensional product space.
pub fn spin_operator<T: Scalar>(axis: Axis, site: usize, l: usize) -> Result<CMatrix<T>, OracleError> {
    spin_operator_guarded(axis, site, l, DEFAULT_L_MAX)
}

pub fn spin_operator_guarded<T: Scalar>(
    axis: Axis,
    site: usize,
    l: usize,
    l_max: usize,
) -> Result<CMatrix<T>, OracleError> {
    check_system_size(l, l_max)?;
    check_site(site, l)?;
    let dim = 1usize << l;
    let mut m = CMatrix::<T>::zeros(dim, dim);
    for col in 0..dim {
        let (bit, amp) = bit_action::<T>(axis, bit_of(col, site, l));
        let row = with_bit(col, site, l, bit);
        m[(row, col)] = amp;
    }
    Ok(m)
}

/// Adds `weight * S^axis_site` into `m`.
pub fn add_single_site<T: Scalar>(m: &mut CMatrix<T>, axis: Axis, site: usize, l: usize, weight: T) {
    let dim = 1usize << l;
    let w = Complex::new(weight, T::zero());
    for col in 0..dim {
        let (bit, amp) = bit_action::<T>(axis, bit_of(col, site, l));
        let row = with_bit(col, site, l, bit);
        m[(row, col)] += w * amp;
    }
}

/// Adds `weight * S^axis_i S^axis_j` (same axis on two distinct sites).
pub fn add_two_site<T: Scalar>(
    m: &mut CMatrix<T>,
    axis: Axis,
    site_i: usize,
    site_j: usize,
    l: usize,
    weight: T,
) {
    debug_assert_ne!(site_i, site_j);
    let dim = 1usize << l;
    let w = Complex::new(weight, T::zero());
    for col in 0..dim {
        let (bit_i, amp_i) = bit_action::<T>(axis, bit_of(col, site_i, l));
        let (bit_j, amp_j) = bit_action::<T>(axis, bit_of(col, site_j, l));
        let row = with_bit(with_bit(col, site_i, l, bit_i), site_j, l, bit_j);
        m[(row, col)] += w * amp_i * amp_j;
    }
}

/// Adds `weight * I`.
pub fn add_identity<T: Scalar>(m: &mut CMatrix<T>, weight: T) {
    let w = Complex::new(weight, T::zero());
    for i in 0..m.nrows() {
        m[(i, i)] += w;
    }
}

/// Diagonal of the parity operator `prod_i (2 S^z_i)`: `(-1)^(#down)`.
pub fn parity_diagonal<T: Scalar>(l: usize) -> Vec<T> {
    (0..(1usize << l))
        .map(|n| {
            if n.count_ones() % 2 == 0 {
                T::one()
            } else {
                -T::one()
            }
        })
        .collect()
}

/// Diagonal of the total magnetisation `sum_i S^z_i`.
pub fn total_sz_diagonal<T: Scalar>(l: usize) -> Vec<T> {
    let half = T::cast(0.5);
    (0..(1usize << l))
        .map(|n| {
            let down = n.count_ones() as usize;
            let up = l - down;
            half * (T::from_count(up) - T::from_count(down))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Complex;

    fn commutator(a: &CMatrix<f64>, b: &CMatrix<f64>) -> CMatrix<f64> {
        a * b - b * a
    }

    #[test]
    fn single_site_z_is_half_pauli() {
        let sz = spin_operator::<f64>(Axis::Z, 1, 1).unwrap();
        assert_eq!(sz[(0, 0)], Complex::new(0.5, 0.0));
        assert_eq!(sz[(1, 1)], Complex::new(-0.5, 0.0));
        assert_eq!(sz[(0, 1)], Complex::new(0.0, 0.0));
    }

    #[test]
    fn su2_commutator_holds() {
        // [S^x_1, S^y_1] = i S^z_1, exactly in binary arithmetic.
        for l in [1usize, 3] {
            let sx = spin_operator::<f64>(Axis::X, 1, l).unwrap();
            let sy = spin_operator::<f64>(Axis::Y, 1, l).unwrap();
            let sz = spin_operator::<f64>(Axis::Z, 1, l).unwrap();
            let lhs = commutator(&sx, &sy);
            let rhs = sz.map(|e| e * Complex::new(0.0, 1.0));
            assert_eq!(lhs, rhs);
        }
    }

    #[test]
    fn spin_half_squares_to_quarter_identity() {
        let sx = spin_operator::<f64>(Axis::X, 1, 2).unwrap();
        let sq = &sx * &sx;
        let expected = CMatrix::<f64>::identity(4, 4).map(|e| e * Complex::new(0.25, 0.0));
        assert_eq!(sq, expected);
    }

    #[test]
    fn operators_on_distinct_sites_commute() {
        let sx2 = spin_operator::<f64>(Axis::X, 2, 3).unwrap();
        let sy3 = spin_operator::<f64>(Axis::Y, 3, 3).unwrap();
        let c = commutator(&sx2, &sy3);
        assert!(c.iter().all(|e| e.norm_sqr() == 0.0));
    }

    #[test]
    fn two_site_builder_matches_product() {
        for axis in Axis::ALL {
            let a = spin_operator::<f64>(axis, 1, 3).unwrap();
            let b = spin_operator::<f64>(axis, 3, 3).unwrap();
            let product = &a * &b;
            let mut built = CMatrix::<f64>::zeros(8, 8);
            add_two_site(&mut built, axis, 1, 3, 3, 1.0);
            assert_eq!(built, product, "{axis:?}");
        }
    }

    #[test]
    fn guards_reject_oversized_and_out_of_range() {
        assert!(matches!(
            spin_operator::<f64>(Axis::X, 1, DEFAULT_L_MAX + 1),
            Err(OracleError::SystemTooLarge { .. })
        ));
        assert!(matches!(
            spin_operator::<f64>(Axis::X, 4, 3),
            Err(OracleError::SiteOutOfRange { .. })
        ));
        assert!(matches!(
            spin_operator::<f64>(Axis::X, 0, 3),
            Err(OracleError::SiteOutOfRange { .. })
        ));
    }

    #[test]
    fn parity_and_magnetisation_diagonals() {
        let p = parity_diagonal::<f64>(2);
        assert_eq!(p, vec![1.0, -1.0, -1.0, 1.0]);
        let m = total_sz_diagonal::<f64>(2);
        assert_eq!(m, vec![1.0, 0.0, 0.0, -1.0]);
    }
}
