//! Pauli matrices and the qubit reference states.
//!
//! Basis convention: index 0 is the excited state `|e⟩` (σz = +1), index 1 is
//! the ground state `|g⟩` (σz = −1), so `ρ_e = diag(1, 0)` and
//! `ρ_g = diag(0, 1)`.

use num_traits::{One, Zero};

use crate::matrix::ComplexMatrix;
use crate::scalar::{Real, C};

pub fn sigma_x<T: Real>() -> ComplexMatrix<T> {
    let (o, z) = (C::one(), C::zero());
    ComplexMatrix::from_vec(2, vec![z, o, o, z]).unwrap()
}

pub fn sigma_y<T: Real>() -> ComplexMatrix<T> {
    let (i, z) = (C::i(), C::zero());
    ComplexMatrix::from_vec(2, vec![z, -i, i, z]).unwrap()
}

pub fn sigma_z<T: Real>() -> ComplexMatrix<T> {
    ComplexMatrix::from_real_diagonal(&[T::one(), -T::one()])
}

/// `ρ_e = |e⟩⟨e|`, the σz = +1 eigenprojector.
pub fn excited<T: Real>() -> ComplexMatrix<T> {
    ComplexMatrix::from_real_diagonal(&[T::one(), T::zero()])
}

/// `ρ_g = |g⟩⟨g|`, the σz = −1 eigenprojector.
pub fn ground<T: Real>() -> ComplexMatrix<T> {
    ComplexMatrix::from_real_diagonal(&[T::zero(), T::one()])
}

/// Two-qubit product of σz eigenprojectors, e.g. `product_state(false, true)`
/// is `ρ_g ⊗ ρ_e` (`ρ_ge`). `true` selects the excited state.
pub fn product_state<T: Real>(first_excited: bool, second_excited: bool) -> ComplexMatrix<T> {
    let pick = |e: bool| if e { excited::<T>() } else { ground::<T>() };
    pick(first_excited).kron(&pick(second_excited))
}

/// The four two-qubit equilibria `ρ_gg, ρ_ge, ρ_eg, ρ_ee` in that order.
pub fn two_qubit_equilibria<T: Real>() -> [(&'static str, ComplexMatrix<T>); 4] {
    [
        ("gg", product_state(false, false)),
        ("ge", product_state(false, true)),
        ("eg", product_state(true, false)),
        ("ee", product_state(true, true)),
    ]
}
