//! Control policies consumed by the integrators. A policy sees only the
//! current conditional state and time, so every control it produces is
//! adapted to the measurement filtration.

use std::fmt::Debug;

use crate::error::{Error, Result};
use crate::matrix::ComplexMatrix;
use crate::scalar::Real;

pub trait ControlLaw<T: Real>: Send + Sync + Debug {
    /// Number of control channels written by [`ControlLaw::evaluate`].
    fn channels(&self) -> usize;

    /// Writes the control values for state `rho` at time `t` into `out`.
    /// Returns `true` when any value had to be clipped to its bound.
    fn evaluate(&self, t: T, rho: &ComplexMatrix<T>, out: &mut [T]) -> bool;
}

/// `α ≡ 0` on every channel.
#[derive(Clone, Copy, Debug)]
pub struct ZeroControl {
    pub channels: usize,
}

impl ZeroControl {
    pub fn new(channels: usize) -> Self {
        Self { channels }
    }
}

impl<T: Real> ControlLaw<T> for ZeroControl {
    fn channels(&self) -> usize {
        self.channels
    }

    fn evaluate(&self, _t: T, _rho: &ComplexMatrix<T>, out: &mut [T]) -> bool {
        out.fill(T::zero());
        false
    }
}

#[derive(Clone, Debug)]
pub struct ConstantControl<T> {
    pub values: Vec<T>,
}

impl<T: Real> ConstantControl<T> {
    pub fn new(values: Vec<T>) -> Self {
        Self { values }
    }

    pub fn scalar(value: T) -> Self {
        Self {
            values: vec![value],
        }
    }
}

impl<T: Real> ControlLaw<T> for ConstantControl<T> {
    fn channels(&self) -> usize {
        self.values.len()
    }

    fn evaluate(&self, _t: T, _rho: &ComplexMatrix<T>, out: &mut [T]) -> bool {
        out.copy_from_slice(&self.values);
        false
    }
}

/// Open-loop, piecewise-constant control: `values[k]` applies on
/// `[switch_times[k-1], switch_times[k])`, with `switch_times` ascending and
/// one element shorter than `values`.
#[derive(Clone, Debug)]
pub struct ControlPath<T> {
    switch_times: Vec<T>,
    values: Vec<Vec<T>>,
}

impl<T: Real> ControlPath<T> {
    pub fn new(switch_times: Vec<T>, values: Vec<Vec<T>>) -> Result<Self> {
        if values.is_empty() || values.len() != switch_times.len() + 1 {
            return Err(Error::InvalidParameter(
                "control path needs one more value than switch times".into(),
            ));
        }
        let width = values[0].len();
        if values.iter().any(|v| v.len() != width) {
            return Err(Error::InvalidParameter("ragged control path".into()));
        }
        if switch_times.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::InvalidParameter(
                "switch times must be sorted".into(),
            ));
        }
        Ok(Self {
            switch_times,
            values,
        })
    }

    pub fn value_at(&self, t: T) -> &[T] {
        // half-step slack keeps grid times that land on a switch in the later leg
        let k = self
            .switch_times
            .iter()
            .take_while(|&&s| t + T::lit(1e-12) >= s)
            .count();
        &self.values[k]
    }
}

impl<T: Real> ControlLaw<T> for ControlPath<T> {
    fn channels(&self) -> usize {
        self.values[0].len()
    }

    fn evaluate(&self, t: T, _rho: &ComplexMatrix<T>, out: &mut [T]) -> bool {
        out.copy_from_slice(self.value_at(t));
        false
    }
}

/// Clips `value` into `[-bound, bound]`, reporting whether it moved.
#[inline]
pub fn clip<T: Real>(value: T, bound: T) -> (T, bool) {
    if value > bound {
        (bound, true)
    } else if value < -bound {
        (-bound, true)
    } else {
        (value, false)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn control_path_switches_at_boundaries() {
        let p = ControlPath::new(vec![0.5], vec![vec![1.0], vec![-1.0]]).unwrap();
        assert_eq!(p.value_at(0.0), &[1.0]);
        assert_eq!(p.value_at(0.4999), &[1.0]);
        assert_eq!(p.value_at(0.5), &[-1.0]);
        assert!(ControlPath::<f64>::new(vec![0.5, 0.1], vec![vec![1.0]; 3]).is_err());
        assert!(ControlPath::<f64>::new(vec![], vec![]).is_err());
    }

    #[test]
    fn clip_reports_activation() {
        assert_eq!(clip(3.0, 2.0), (2.0, true));
        assert_eq!(clip(-3.0, 2.0), (-2.0, true));
        assert_eq!(clip(1.0, 2.0), (1.0, false));
    }
}
