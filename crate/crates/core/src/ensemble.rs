//! Seed derivation, deterministic parallel reductions and ensemble
//! statistics.
//!
//! Trajectory `i` of an ensemble with master seed `s` always runs on
//! [`trajectory_seed`]`(s, i)`. Reductions split the index range into
//! fixed-size chunks, fold each chunk sequentially and merge chunk results
//! in index order, so results are bit-identical for any thread count.

use rayon::prelude::*;

use crate::control::ControlLaw;
use crate::density::DensityOperator;
use crate::error::Result;
use crate::matrix::ComplexMatrix;
use crate::scalar::Real;
use crate::sme::{integrate, IntegrationSummary, IntegratorConfig, SdeModel};

const CHUNK: usize = 64;

/// SplitMix64 finalizer applied to `master ⊕ (index · φ)`.
pub fn trajectory_seed(master: u64, index: usize) -> u64 {
    let mut z = master
        ^ (index as u64)
            .wrapping_add(1)
            .wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Evaluates `f(i)` for `i in 0..count` in parallel, returning results in
/// index order.
pub fn par_map<R, F>(count: usize, f: F) -> Result<Vec<R>>
where
    R: Send,
    F: Fn(usize) -> Result<R> + Sync + Send,
{
    (0..count).into_par_iter().map(f).collect()
}

/// Folds `body` over `0..count` with a deterministic merge order.
pub fn par_reduce<A, I, B, M>(count: usize, init: I, body: B, merge: M) -> Result<A>
where
    A: Send,
    I: Fn() -> A + Sync + Send,
    B: Fn(&mut A, usize) -> Result<()> + Sync + Send,
    M: Fn(&mut A, A),
{
    let chunks = count.div_ceil(CHUNK);
    let parts: Vec<A> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut acc = init();
            for i in c * CHUNK..((c + 1) * CHUNK).min(count) {
                body(&mut acc, i)?;
            }
            Ok(acc)
        })
        .collect::<Result<_>>()?;
    let mut total = init();
    for p in parts {
        merge(&mut total, p);
    }
    Ok(total)
}

/// Sample mean and standard error from running sums.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ScalarStats {
    pub count: usize,
    pub sum: f64,
    pub sum_sq: f64,
}

impl ScalarStats {
    pub fn from_samples<I: IntoIterator<Item = f64>>(samples: I) -> Self {
        let mut s = Self::default();
        for x in samples {
            s.push(x);
        }
        s
    }

    #[inline]
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        self.sum += x;
        self.sum_sq += x * x;
    }

    pub fn merge(&mut self, other: &Self) {
        self.count += other.count;
        self.sum += other.sum;
        self.sum_sq += other.sum_sq;
    }

    pub fn mean(&self) -> f64 {
        self.sum / self.count as f64
    }

    /// Unbiased sample variance.
    pub fn variance(&self) -> f64 {
        if self.count < 2 {
            return 0.0;
        }
        let n = self.count as f64;
        ((self.sum_sq - self.sum * self.sum / n) / (n - 1.0)).max(0.0)
    }

    pub fn std_error(&self) -> f64 {
        (self.variance() / self.count as f64).sqrt()
    }
}

/// Standard error of a binomial proportion `p` estimated from `n` trials.
pub fn binomial_std_error(p: f64, n: usize) -> f64 {
    (p * (1.0 - p) / n as f64).sqrt()
}

/// Per-time ensemble mean of the conditional state.
#[derive(Clone, Debug)]
pub struct EnsemblePath<T: Real> {
    pub times: Vec<T>,
    pub mean: Vec<ComplexMatrix<T>>,
    /// Monte Carlo standard error of `mean[k]` in Hilbert–Schmidt norm,
    /// `sqrt(Σ_ij Var(ρ_ij) / M)`.
    pub hs_std_error: Vec<T>,
    pub trajectories: usize,
    pub summary: IntegrationSummary,
}

impl<T: Real> EnsemblePath<T> {
    /// `sup_k ‖mean_k − other_k‖₂` over the common grid.
    pub fn sup_distance(&self, other: &[ComplexMatrix<T>]) -> Result<T> {
        let mut worst = T::zero();
        for (a, b) in self.mean.iter().zip(other) {
            worst = worst.max(a.hs_distance(b)?);
        }
        Ok(worst)
    }
}

#[derive(Clone, Debug)]
struct PathAcc<T: Real> {
    sum: Vec<ComplexMatrix<T>>,
    sum_sq: Vec<T>,
    count: usize,
    summary: IntegrationSummary,
}

/// Ensemble mean of `M` trajectories recorded every `cfg.record_stride`
/// steps. Trajectory seeds derive from `cfg.seed`.
pub fn ensemble_mean_path<T: Real>(
    rho0: &DensityOperator<T>,
    model: &SdeModel<T>,
    control: &dyn ControlLaw<T>,
    cfg: &IntegratorConfig<T>,
    trajectories: usize,
) -> Result<EnsemblePath<T>> {
    cfg.validate()?;
    let steps = cfg.steps();
    let stride = cfg.record_stride;
    let grid: Vec<usize> = (0..=steps)
        .filter(|&n| n % stride == 0 || n == steps)
        .collect();
    let points = grid.len();
    let d = model.dim();
    let init = || PathAcc {
        sum: vec![ComplexMatrix::zeros(d); points],
        sum_sq: vec![T::zero(); points],
        count: 0,
        summary: IntegrationSummary::default(),
    };
    let acc = par_reduce(
        trajectories,
        init,
        |acc: &mut PathAcc<T>, i| {
            let run = cfg.with_seed(trajectory_seed(cfg.seed, i));
            let mut k = 0;
            let s = integrate(rho0, model, control, &run, |p| {
                if p.index % stride == 0 || p.index == steps {
                    let dst = acc.sum[k].as_mut_slice();
                    let mut sq = T::zero();
                    for (o, z) in dst.iter_mut().zip(p.state.as_slice()) {
                        *o += *z;
                        sq += z.norm_sqr();
                    }
                    acc.sum_sq[k] += sq;
                    k += 1;
                }
            })?;
            acc.count += 1;
            acc.summary.steps += s.steps;
            acc.summary.repairs += s.repairs;
            acc.summary.clip_events += s.clip_events;
            Ok(())
        },
        |total, part| {
            for (a, b) in total.sum.iter_mut().zip(&part.sum) {
                *a += b;
            }
            for (a, b) in total.sum_sq.iter_mut().zip(&part.sum_sq) {
                *a += *b;
            }
            total.count += part.count;
            total.summary.steps += part.summary.steps;
            total.summary.repairs += part.summary.repairs;
            total.summary.clip_events += part.summary.clip_events;
        },
    )?;
    let m = T::from_usize(acc.count.max(1)).unwrap();
    let mut mean = Vec::with_capacity(points);
    let mut se = Vec::with_capacity(points);
    for (s, sq) in acc.sum.into_iter().zip(acc.sum_sq) {
        let mu = s.scale_real(T::one() / m);
        let var = (sq / m - mu.hs_norm().powi(2)).max(T::zero());
        let unbiased = if acc.count > 1 {
            var * m / (m - T::one())
        } else {
            T::zero()
        };
        se.push((unbiased / m).sqrt());
        mean.push(mu);
    }
    Ok(EnsemblePath {
        times: grid.iter().map(|&n| cfg.time(n)).collect(),
        mean,
        hs_std_error: se,
        trajectories: acc.count,
        summary: acc.summary,
    })
}
