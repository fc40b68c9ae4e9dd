//! Ensemble sampling on the record grid and per-time summaries.

use qfilter::ensemble::{par_map, trajectory_seed, ScalarStats};
use qfilter::sme::{integrate, IntegrationSummary};
use qfilter::{Config, ControlLaw, Density, Matrix, Model};

use crate::table::ResultTable;
use crate::AppResult;

/// Quantile levels reported in ensemble summaries.
pub const QUANTILES: [f64; 3] = [0.1, 0.5, 0.9];

/// Per-trajectory rows of probed quantities at the record times.
#[derive(Clone, Debug)]
pub struct Sampled {
    pub columns: Vec<String>,
    pub times: Vec<f64>,
    /// `paths[i][k][c]`: trajectory `i`, record time `k`, column `c`.
    pub paths: Vec<Vec<Vec<f64>>>,
    pub summary: IntegrationSummary,
}

/// Everything a probe sees at a record time.
pub struct ProbePoint<'a> {
    pub time: f64,
    pub state: &'a Matrix,
    /// Controls applied from this point (re-evaluated at the final time).
    pub controls: &'a [f64],
    /// Measurement records `Y_c(t)`.
    pub records: &'a [f64],
}

/// Integrates `trajectories` paths from `rho0`; trajectory `i` runs on
/// `trajectory_seed(cfg.seed, i)`. At every `cfg.record_stride`-th grid
/// point (and the last) `probe` maps the state to one row.
pub fn sample_ensemble<P>(
    rho0: &Density,
    model: &Model,
    control: &dyn ControlLaw<f64>,
    cfg: &Config,
    trajectories: usize,
    columns: &[&str],
    probe: P,
) -> AppResult<Sampled>
where
    P: Fn(&ProbePoint<'_>) -> Vec<f64> + Sync,
{
    let steps = cfg.steps();
    let stride = cfg.record_stride.max(1);
    let record = |k: usize| k.is_multiple_of(stride) || k == steps;
    let times: Vec<f64> = (0..=steps)
        .filter(|&k| record(k))
        .map(|k| cfg.time(k))
        .collect();
    let n_ch = model.n_channels();
    let runs = par_map(trajectories, |i| {
        let run = cfg.with_seed(trajectory_seed(cfg.seed, i));
        let mut y = vec![0.0; n_ch];
        let mut held = vec![0.0; model.n_controls()];
        let mut rows = Vec::with_capacity(times.len());
        let summary = integrate(rho0, model, control, &run, |p| {
            if record(p.index) {
                let controls = if p.controls.is_empty() {
                    control.evaluate(p.time, p.state, &mut held);
                    &held[..]
                } else {
                    p.controls
                };
                rows.push(probe(&ProbePoint {
                    time: p.time,
                    state: p.state,
                    controls,
                    records: &y,
                }));
            }
            if p.index < steps {
                for (c, yc) in y.iter_mut().enumerate() {
                    *yc += p.increments[c] + p.measurement_means[c] * run.dt;
                }
            }
        })?;
        Ok((rows, summary))
    })?;
    let mut summary = IntegrationSummary::default();
    let mut paths = Vec::with_capacity(trajectories);
    for (rows, s) in runs {
        summary.steps += s.steps;
        summary.repairs += s.repairs;
        summary.clip_events += s.clip_events;
        paths.push(rows);
    }
    Ok(Sampled {
        columns: columns.iter().map(|c| c.to_string()).collect(),
        times,
        paths,
        summary,
    })
}

impl Sampled {
    pub fn column_index(&self, name: &str) -> usize {
        self.columns
            .iter()
            .position(|c| c == name)
            .unwrap_or_else(|| panic!("no column {name}"))
    }

    /// Values of column `c` across trajectories at record index `k`.
    pub fn cross_section(&self, k: usize, c: usize) -> Vec<f64> {
        self.paths.iter().map(|p| p[k][c]).collect()
    }

    pub fn terminal(&self, c: usize) -> Vec<f64> {
        let last = self.times.len() - 1;
        self.cross_section(last, c)
    }

    pub fn mean_path(&self, c: usize) -> Vec<ScalarStats> {
        (0..self.times.len())
            .map(|k| ScalarStats::from_samples(self.paths.iter().map(|p| p[k][c])))
            .collect()
    }

    /// Record index closest to `t`.
    pub fn index_near(&self, t: f64) -> usize {
        let mut best = 0;
        for (k, &s) in self.times.iter().enumerate() {
            if (s - t).abs() < (self.times[best] - t).abs() {
                best = k;
            }
        }
        best
    }

    /// `trajectory, t, <columns>` for the first `count` trajectories.
    pub fn traces_table(&self, name: &str, count: usize) -> ResultTable {
        let mut cols = vec!["trajectory".to_string(), "t".to_string()];
        cols.extend(self.columns.iter().cloned());
        let mut table = ResultTable::with_columns(name, cols);
        for (i, path) in self.paths.iter().take(count).enumerate() {
            for (k, row) in path.iter().enumerate() {
                let mut r = vec![i as f64, self.times[k]];
                r.extend_from_slice(row);
                table.push(r);
            }
        }
        table
    }

    /// `t` and, per column, mean, standard error and quantiles.
    pub fn summary_table(&self, name: &str) -> ResultTable {
        let mut cols = vec!["t".to_string()];
        for c in &self.columns {
            cols.push(format!("{c}_mean"));
            cols.push(format!("{c}_se"));
            for q in QUANTILES {
                cols.push(format!("{c}_q{:02}", (q * 100.0).round() as u32));
            }
        }
        let mut table = ResultTable::with_columns(name, cols);
        for (k, &t) in self.times.iter().enumerate() {
            let mut row = vec![t];
            for c in 0..self.columns.len() {
                let mut xs = self.cross_section(k, c);
                let s = ScalarStats::from_samples(xs.iter().copied());
                row.push(s.mean());
                row.push(s.std_error());
                xs.sort_by(f64::total_cmp);
                row.extend(QUANTILES.iter().map(|&q| quantile_sorted(&xs, q)));
            }
            table.push(row);
        }
        table
    }

    /// `trajectory, <columns>` at the final time.
    pub fn terminal_table(&self, name: &str) -> ResultTable {
        let mut cols = vec!["trajectory".to_string()];
        cols.extend(self.columns.iter().cloned());
        let mut table = ResultTable::with_columns(name, cols);
        for (i, path) in self.paths.iter().enumerate() {
            let mut r = vec![i as f64];
            r.extend_from_slice(path.last().expect("non-empty path"));
            table.push(r);
        }
        table
    }
}

/// Linear interpolation between order statistics (`(n−1)q` rule).
pub fn quantile_sorted(xs: &[f64], q: f64) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    let h = (xs.len() - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    xs[lo] + (h - lo as f64) * (xs[hi] - xs[lo])
}

#[cfg(test)]
mod tests {
    use super::*;
    use qfilter::sme::qubit_sigma_z_model;
    use qfilter::ZeroControl;

    #[test]
    fn quantiles_interpolate() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile_sorted(&xs, 0.0), 1.0);
        assert_eq!(quantile_sorted(&xs, 1.0), 4.0);
        assert!((quantile_sorted(&xs, 0.5) - 2.5).abs() < 1e-15);
        assert!(quantile_sorted(&[], 0.5).is_nan());
    }

    #[test]
    fn sampler_records_grid_and_measurement_record() {
        let model = qubit_sigma_z_model();
        let mut cfg = Config::new(1e-2, 1.0, 9);
        cfg.record_stride = 25;
        let rho = Density::excited();
        let s = sample_ensemble(
            &rho,
            &model,
            &ZeroControl::new(1),
            &cfg,
            3,
            &["z", "Y"],
            |p| {
                let z = (p.state[(0, 0)] - p.state[(1, 1)]).re;
                vec![z, p.records[0]]
            },
        )
        .unwrap();
        assert_eq!(s.times, vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        assert_eq!(s.paths.len(), 3);
        // excited state is invariant, so dY = dW + 2 dt
        for path in &s.paths {
            assert!(path.iter().all(|r| (r[0] - 1.0).abs() < 1e-12));
            assert_eq!(path[0][1], 0.0);
        }
        let summary = s.summary_table("summary");
        assert_eq!(summary.columns.len(), 1 + 2 * 5);
        assert_eq!(summary.rows.len(), 5);
        assert_eq!(s.terminal_table("terminal").rows.len(), 3);
        assert_eq!(s.traces_table("traces", 2).rows.len(), 10);
    }
}
