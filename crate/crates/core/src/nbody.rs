//! `N`-qubit Ising filtering model, its per-site feedback, a propagator for
//! the diagonal (uncontrolled) case and the propagation-of-chaos experiment.

use serde::Serialize;

use crate::control::{ControlLaw, ZeroControl};
use crate::density::{reduce_to_site, DensityOperator};
use crate::embed::{embed_pair_sparse, embed_site_sparse, PairOperator, SiteOperator};
use crate::ensemble::{par_reduce, trajectory_seed};
use crate::error::{Error, Result};
use crate::matrix::ComplexMatrix;
use crate::meanfield::{ising_kernel, picard_solve, PicardConfig, PicardResult};
use crate::pauli::{sigma_x, sigma_z};
use crate::scalar::{Real, C};
use crate::sme::{
    blowup_threshold, integrate, simulate_trajectory, IntegrationSummary, IntegratorConfig,
    NoiseSource, SdeModel, TrajectoryRecord,
};
use crate::sparse::CsrMatrix;

pub const MIN_SITES: usize = 2;
pub const MAX_SITES: usize = 12;

/// One-body and two-body ingredients of an `N`-qubit model.
#[derive(Clone, Debug)]
pub struct NBodyComponents<T: Real> {
    pub site_hamiltonian: ComplexMatrix<T>,
    /// Pair operator `A` on `ℂ² ⊗ ℂ²`.
    pub pair: ComplexMatrix<T>,
    pub coupling: ComplexMatrix<T>,
    pub control: ComplexMatrix<T>,
    /// Prefactor of the pair sum; `None` means `1/N`.
    pub interaction_scale: Option<T>,
}

impl<T: Real> NBodyComponents<T> {
    /// `H̃ = 0`, `A = σz ⊗ σz`, `L = σz`, `Ĥ = σx`.
    pub fn ising() -> Self {
        let z = sigma_z::<T>();
        Self {
            site_hamiltonian: ComplexMatrix::zeros(2),
            pair: z.kron(&z),
            coupling: z,
            control: sigma_x(),
            interaction_scale: None,
        }
    }
}

/// Assembled model with one measurement channel and one control channel
/// per site (site `l` on channel `l − 1`).
#[derive(Clone, Debug)]
pub struct NBodyModel<T: Real> {
    n_sites: usize,
    components: NBodyComponents<T>,
    model: SdeModel<T>,
}

/// `𝐇ᴺ = Σ_l H̃_l + s Σ_{l>l′} 𝐀_{ll′}` with `s = 1/N` by default, plus
/// `𝐋_l = L` and `Ĥ_l = Ĥ` on site `l`.
pub fn assemble_nbody<T: Real>(
    n_sites: usize,
    components: &NBodyComponents<T>,
) -> Result<NBodyModel<T>> {
    if n_sites > MAX_SITES {
        return Err(Error::TooManySites {
            n_sites,
            max: MAX_SITES,
        });
    }
    if n_sites < MIN_SITES {
        return Err(Error::InvalidParameter(format!(
            "need at least {MIN_SITES} sites, got {n_sites}"
        )));
    }
    for (what, m, dim) in [
        ("site Hamiltonian", &components.site_hamiltonian, 2),
        ("pair operator", &components.pair, 4),
        ("coupling", &components.coupling, 2),
        ("control operator", &components.control, 2),
    ] {
        if m.dim() != dim {
            return Err(Error::InvalidParameter(format!(
                "{what} must be {dim}×{dim}, got {}×{}",
                m.dim(),
                m.dim()
            )));
        }
    }
    let dim = 1usize << n_sites;
    let scale = components
        .interaction_scale
        .unwrap_or_else(|| T::one() / T::from_usize(n_sites).unwrap());
    let mut h = CsrMatrix::from_triplets(dim, Vec::new());
    if components.site_hamiltonian.max_abs() > T::zero() {
        for l in 1..=n_sites {
            let op = SiteOperator::new(components.site_hamiltonian.clone(), l, n_sites);
            h = h.add(&embed_site_sparse(&op)?);
        }
    }
    for l in 1..=n_sites {
        for lp in 1..l {
            let op = PairOperator::new(components.pair.clone(), (l, lp), n_sites);
            h = h.add(&embed_pair_sparse(&op, 2)?.scale(C::new(scale, T::zero())));
        }
    }
    let site = |m: &ComplexMatrix<T>| -> Result<Vec<CsrMatrix<T>>> {
        (1..=n_sites)
            .map(|l| embed_site_sparse(&SiteOperator::new(m.clone(), l, n_sites)))
            .collect()
    };
    let model = SdeModel::from_sparse(h, site(&components.coupling)?, site(&components.control)?)?;
    Ok(NBodyModel {
        n_sites,
        components: components.clone(),
        model,
    })
}

impl<T: Real> NBodyModel<T> {
    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    pub fn dim(&self) -> usize {
        self.model.dim()
    }

    pub fn model(&self) -> &SdeModel<T> {
        &self.model
    }

    pub fn components(&self) -> &NBodyComponents<T> {
        &self.components
    }

    pub fn hamiltonian(&self) -> ComplexMatrix<T> {
        self.model.hamiltonian().to_dense()
    }
}

/// `ρ^{⊗N}` for a single-site state.
pub fn product_state<T: Real>(site: &DensityOperator<T>, n_sites: usize) -> DensityOperator<T> {
    site.tensor_power(n_sites)
}

/// Integrates the `N`-body filter; `control` supplies one value per site
/// (e.g. [`crate::feedback::LocalFeedback`] or [`ZeroControl`]).
pub fn nbody_simulate<T: Real>(
    rho0: &DensityOperator<T>,
    model: &NBodyModel<T>,
    control: &dyn ControlLaw<T>,
    cfg: &IntegratorConfig<T>,
) -> Result<TrajectoryRecord<T>> {
    simulate_trajectory(rho0, &model.model, control, cfg)
}

/// Mean single-site marginal over an ensemble.
#[derive(Clone, Debug)]
pub struct MarginalPath<T: Real> {
    pub times: Vec<T>,
    /// `mean[k][l]`: ensemble mean of the reduced state of site `l + 1`.
    pub mean: Vec<Vec<ComplexMatrix<T>>>,
    /// HS standard error matching `mean`.
    pub hs_std_error: Vec<Vec<T>>,
    pub trajectories: usize,
    pub summary: IntegrationSummary,
}

impl<T: Real> MarginalPath<T> {
    pub fn site_path(&self, site: usize) -> Vec<ComplexMatrix<T>> {
        self.mean.iter().map(|m| m[site - 1].clone()).collect()
    }

    pub fn site_std_error(&self, site: usize) -> Vec<T> {
        self.hs_std_error.iter().map(|s| s[site - 1]).collect()
    }
}

/// Euler–Maruyama for models whose Hamiltonian and couplings are diagonal
/// in the computational basis, without control. Diagonal entries then form
/// a closed system and every off-diagonal entry evolves by a scalar
/// multiplier, so the single-site marginals need only `O(2ᴺ·N)` work per
/// step instead of dense `4ᴺ` products. Identical, step for step, to the
/// general integrator with `repair_positivity = false`.
#[derive(Clone, Debug)]
pub struct DiagonalPropagator<T: Real> {
    n_sites: usize,
    dim: usize,
    /// Per channel, the coupling eigenvalues `l_c(i)`.
    eig: Vec<Vec<C<T>>>,
    /// `Re l_c(i)`, laid out `[i * channels + c]`.
    eig_re: Vec<T>,
    /// Per site, the `(i, j)` index pairs differing only in that site's bit
    /// (bit 0 at `i`), and their constant drift coefficients.
    pairs: Vec<Vec<(usize, usize, C<T>)>>,
}

impl<T: Real> DiagonalPropagator<T> {
    pub fn new(model: &NBodyModel<T>) -> Result<Self> {
        let m = &model.model;
        if !m.hamiltonian().is_diagonal() || m.couplings().iter().any(|l| !l.is_diagonal()) {
            return Err(Error::InvalidParameter(
                "diagonal propagator needs diagonal Hamiltonian and couplings".into(),
            ));
        }
        if m.hook().is_some() {
            return Err(Error::InvalidParameter(
                "diagonal propagator does not support a Hamiltonian hook".into(),
            ));
        }
        let n = model.n_sites;
        let dim = m.dim();
        let h: Vec<T> = m.hamiltonian().diagonal().iter().map(|z| z.re).collect();
        let eig: Vec<Vec<C<T>>> = m.couplings().iter().map(|l| l.diagonal()).collect();
        let ch = eig.len();
        let mut eig_re = vec![T::zero(); dim * ch];
        for (c, e) in eig.iter().enumerate() {
            for i in 0..dim {
                eig_re[i * ch + c] = e[i].re;
            }
        }
        let half = T::lit(0.5);
        let pairs = (1..=n)
            .map(|site| {
                let bit = 1usize << (n - site);
                (0..dim)
                    .filter(|i| i & bit == 0)
                    .map(|i| {
                        let j = i | bit;
                        let mut a = C::new(T::zero(), h[j] - h[i]);
                        for e in &eig {
                            a += e[i] * e[j].conj()
                                - C::new((e[i].norm_sqr() + e[j].norm_sqr()) * half, T::zero());
                        }
                        (i, j, a)
                    })
                    .collect()
            })
            .collect();
        Ok(Self {
            n_sites: n,
            dim,
            eig,
            eig_re,
            pairs,
        })
    }

    /// Runs one trajectory, calling `observe(index, marginals)` at every
    /// `cfg.record_stride`-th grid point and at the final one.
    pub fn run<F>(
        &self,
        rho0: &DensityOperator<T>,
        cfg: &IntegratorConfig<T>,
        mut observe: F,
    ) -> Result<IntegrationSummary>
    where
        F: FnMut(usize, &[ComplexMatrix<T>]),
    {
        cfg.validate()?;
        if rho0.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: rho0.dim(),
            });
        }
        let ch = self.eig.len();
        let r0 = rho0.matrix();
        let mut diag: Vec<T> = (0..self.dim).map(|i| r0[(i, i)].re).collect();
        let mut coh: Vec<Vec<C<T>>> = self
            .pairs
            .iter()
            .map(|p| p.iter().map(|&(i, j, _)| r0[(i, j)]).collect())
            .collect();
        let steps = cfg.steps();
        let stride = cfg.record_stride;
        let dt = cfg.dt;
        let sqrt_dt = dt.sqrt();
        let two = T::lit(2.0);
        let limit = blowup_threshold(dt);
        let mut noise = NoiseSource::new(cfg.seed, ch);
        let mut dw = vec![T::zero(); ch];
        let mut means = vec![T::zero(); ch];
        let mut s_re = vec![T::zero(); self.dim];
        let mut s_im = vec![T::zero(); self.dim];
        let mut marg = vec![ComplexMatrix::zeros(2); self.n_sites];
        let emit = |diag: &[T], coh: &[Vec<C<T>>], marg: &mut [ComplexMatrix<T>]| {
            for (site, m) in marg.iter_mut().enumerate() {
                let bit = 1usize << (self.n_sites - site - 1);
                let (mut p0, mut p1) = (T::zero(), T::zero());
                for (i, &d) in diag.iter().enumerate() {
                    if i & bit == 0 {
                        p0 += d;
                    } else {
                        p1 += d;
                    }
                }
                let c: C<T> = coh[site].iter().copied().sum();
                let s = m.as_mut_slice();
                s[0] = C::new(p0, T::zero());
                s[1] = c;
                s[2] = c.conj();
                s[3] = C::new(p1, T::zero());
            }
        };
        let mut summary = IntegrationSummary::default();
        for n in 0..=steps {
            if n % stride == 0 || n == steps {
                emit(&diag, &coh, &mut marg);
                observe(n, &marg);
            }
            if n == steps {
                break;
            }
            noise.fill(sqrt_dt, &mut dw);
            for (c, m) in means.iter_mut().enumerate() {
                let mut acc = T::zero();
                for (i, &d) in diag.iter().enumerate() {
                    acc += self.eig_re[i * ch + c] * d;
                }
                *m = two * acc;
            }
            let common: T = means.iter().zip(&dw).map(|(&m, &w)| m * w).sum();
            for i in 0..self.dim {
                let mut re = T::zero();
                let mut im = T::zero();
                for (c, &w) in dw.iter().enumerate() {
                    let e = self.eig[c][i];
                    re += e.re * w;
                    im += e.im * w;
                }
                s_re[i] = re;
                s_im[i] = im;
            }
            // (l_i + conj(l_j)) summed against dW, minus tr((L+L†)ρ) dW
            let mut total = T::zero();
            for (i, d) in diag.iter_mut().enumerate() {
                *d += *d * (two * s_re[i] - common);
                total += *d;
            }
            for (site, entries) in self.pairs.iter().enumerate() {
                for (&(i, j, a), z) in entries.iter().zip(coh[site].iter_mut()) {
                    let g = C::new(s_re[i] + s_re[j] - common, s_im[i] - s_im[j]);
                    *z += *z * (a * dt + g);
                }
            }
            if !(total > T::zero()) || !total.is_finite() {
                return Err(Error::IntegrationBlowup {
                    time: cfg.time(n + 1).to_f64_lossy(),
                    min_eigenvalue: f64::NAN,
                });
            }
            let inv = T::one() / total;
            let mut worst = T::infinity();
            for d in diag.iter_mut() {
                *d *= inv;
                worst = worst.min(*d);
            }
            for z in coh.iter_mut().flatten() {
                *z *= inv;
            }
            if worst < limit {
                return Err(Error::IntegrationBlowup {
                    time: cfg.time(n + 1).to_f64_lossy(),
                    min_eigenvalue: worst.to_f64_lossy(),
                });
            }
            summary.steps += 1;
        }
        Ok(summary)
    }
}

#[derive(Clone, Debug)]
struct MarginalAcc<T: Real> {
    sum: Vec<Vec<ComplexMatrix<T>>>,
    sum_sq: Vec<Vec<T>>,
    count: usize,
    summary: IntegrationSummary,
}

/// Ensemble means of all single-site marginals. Uses
/// [`DiagonalPropagator`] when `control` is `None` and the model is
/// diagonal with `cfg.repair_positivity` off, and the general integrator
/// otherwise.
pub fn nbody_marginal_path<T: Real>(
    rho0: &DensityOperator<T>,
    model: &NBodyModel<T>,
    control: Option<&dyn ControlLaw<T>>,
    cfg: &IntegratorConfig<T>,
    trajectories: usize,
) -> Result<MarginalPath<T>> {
    cfg.validate()?;
    let n = model.n_sites;
    let steps = cfg.steps();
    let stride = cfg.record_stride;
    let grid: Vec<usize> = (0..=steps)
        .filter(|&k| k % stride == 0 || k == steps)
        .collect();
    let points = grid.len();
    let fast = if control.is_none() && !cfg.repair_positivity {
        DiagonalPropagator::new(model).ok()
    } else {
        None
    };
    let zero = ZeroControl::new(n);
    let control = control.unwrap_or(&zero);
    let init = || MarginalAcc {
        sum: vec![vec![ComplexMatrix::zeros(2); n]; points],
        sum_sq: vec![vec![T::zero(); n]; points],
        count: 0,
        summary: IntegrationSummary::default(),
    };
    let acc = par_reduce(
        trajectories,
        init,
        |acc: &mut MarginalAcc<T>, i| {
            let run = cfg.with_seed(trajectory_seed(cfg.seed, i));
            let mut k = 0;
            let mut record = |margs: &[ComplexMatrix<T>]| {
                for (l, m) in margs.iter().enumerate() {
                    acc.sum[k][l] += m;
                    acc.sum_sq[k][l] += m.hs_norm().powi(2);
                }
                k += 1;
            };
            let s = match &fast {
                Some(p) => p.run(rho0, &run, |_, margs| record(margs))?,
                None => {
                    let mut err = None;
                    let s = integrate(rho0, &model.model, control, &run, |p| {
                        if p.index % stride == 0 || p.index == steps {
                            let margs: Result<Vec<_>> =
                                (1..=n).map(|l| reduce_to_site(p.state, l, n, 2)).collect();
                            match margs {
                                Ok(m) => record(&m),
                                Err(e) => err = Some(e),
                            }
                        }
                    })?;
                    if let Some(e) = err {
                        return Err(e);
                    }
                    s
                }
            };
            acc.count += 1;
            acc.summary.steps += s.steps;
            acc.summary.repairs += s.repairs;
            acc.summary.clip_events += s.clip_events;
            Ok(())
        },
        |total, part| {
            for (a, b) in total.sum.iter_mut().zip(&part.sum) {
                for (x, y) in a.iter_mut().zip(b) {
                    *x += y;
                }
            }
            for (a, b) in total.sum_sq.iter_mut().zip(&part.sum_sq) {
                for (x, y) in a.iter_mut().zip(b) {
                    *x += *y;
                }
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
    for (sums, sqs) in acc.sum.into_iter().zip(acc.sum_sq) {
        let mut mrow = Vec::with_capacity(n);
        let mut srow = Vec::with_capacity(n);
        for (s, sq) in sums.into_iter().zip(sqs) {
            let mu = s.scale_real(T::one() / m);
            let var = (sq / m - mu.hs_norm().powi(2)).max(T::zero());
            let unbiased = if acc.count > 1 {
                var * m / (m - T::one())
            } else {
                T::zero()
            };
            srow.push((unbiased / m).sqrt());
            mrow.push(mu);
        }
        mean.push(mrow);
        se.push(srow);
    }
    Ok(MarginalPath {
        times: grid.iter().map(|&k| cfg.time(k)).collect(),
        mean,
        hs_std_error: se,
        trajectories: acc.count,
        summary: acc.summary,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct ChaosReport {
    pub ns: Vec<usize>,
    /// `sup_t ‖E[ρ_t^{(1)}] − ξ(t)‖₂` per `N`.
    pub distances: Vec<f64>,
    /// Standard error of each distance: the marginal's HS standard error
    /// at the maximizing time combined with the mean-field flow's.
    pub std_errors: Vec<f64>,
    pub ensemble_sizes: Vec<usize>,
    pub seed: u64,
    pub meanfield_residuals: Vec<f64>,
    pub meanfield_std_error: f64,
    /// Record times and site-1 `⟨σz⟩`/`⟨σx⟩` per `N`, and of the flow.
    #[serde(skip)]
    pub times: Vec<f64>,
    #[serde(skip)]
    pub site_paths: Vec<Vec<[f64; 2]>>,
    #[serde(skip)]
    pub flow_path: Vec<[f64; 2]>,
}

impl ChaosReport {
    /// `d_{k+1} ≤ d_k + slack·sqrt(se_k² + se_{k+1}²)` for consecutive `N`.
    pub fn non_increasing_within(&self, slack: f64) -> bool {
        self.distances
            .windows(2)
            .zip(self.std_errors.windows(2))
            .all(|(d, s)| d[1] <= d[0] + slack * s[0].hypot(s[1]))
    }
}

fn xz<T: Real>(m: &ComplexMatrix<T>) -> [f64; 2] {
    let s = m.as_slice();
    [
        (s[0].re - s[3].re).to_f64_lossy(),
        (s[1].re + s[2].re).to_f64_lossy(),
    ]
}

/// Propagation of chaos for the uncontrolled Ising model: for each `N`,
/// the ensemble mean of the site-1 marginal from `ρ₀^{⊗N}` against the
/// Picard mean-field flow on the same grid. The comparison is made at the
/// record points of `cfg` (`record_stride`).
pub fn chaos_experiment<T: Real>(
    rho0: &DensityOperator<T>,
    ns: &[usize],
    trajectories: usize,
    cfg: &IntegratorConfig<T>,
    picard: &PicardConfig,
) -> Result<ChaosReport> {
    if rho0.dim() != 2 {
        return Err(Error::DimensionMismatch {
            expected: 2,
            found: rho0.dim(),
        });
    }
    if let Some(&n) = ns.iter().find(|&&n| n > MAX_SITES) {
        return Err(Error::TooManySites {
            n_sites: n,
            max: MAX_SITES,
        });
    }
    let base = SdeModel::new(&ComplexMatrix::zeros(2), &[sigma_z()], &[sigma_x()])?;
    let mut flat = cfg.clone();
    flat.record_stride = 1;
    let mf: PicardResult<T> = picard_solve(
        rho0,
        &base,
        &ising_kernel(),
        &ZeroControl::new(1),
        &flat,
        picard,
    )?;
    let stride = cfg.record_stride;
    let steps = cfg.steps();
    let idx: Vec<usize> = (0..=steps)
        .filter(|&k| k % stride == 0 || k == steps)
        .collect();
    let mut report = ChaosReport {
        ns: ns.to_vec(),
        distances: Vec::new(),
        std_errors: Vec::new(),
        ensemble_sizes: Vec::new(),
        seed: cfg.seed,
        meanfield_residuals: mf.residuals.clone(),
        meanfield_std_error: mf.std_error,
        times: idx.iter().map(|&k| cfg.time(k).to_f64_lossy()).collect(),
        site_paths: Vec::new(),
        flow_path: idx
            .iter()
            .map(|&k| xz(mf.flow.states[k].matrix()))
            .collect(),
    };
    for &n in ns {
        let model = assemble_nbody(n, &NBodyComponents::ising())?;
        let path = nbody_marginal_path(&product_state(rho0, n), &model, None, cfg, trajectories)?;
        let mut worst = (0.0, 0.0);
        for (k, &step) in idx.iter().enumerate() {
            let d = path.mean[k][0]
                .hs_distance(mf.flow.states[step].matrix())?
                .to_f64_lossy();
            if d > worst.0 {
                worst = (d, path.hs_std_error[k][0].to_f64_lossy());
            }
        }
        report.distances.push(worst.0);
        report.std_errors.push(worst.1.hypot(mf.std_error));
        report.ensemble_sizes.push(path.trajectories);
        report
            .site_paths
            .push(path.mean.iter().map(|m| xz(&m[0])).collect());
    }
    Ok(report)
}
