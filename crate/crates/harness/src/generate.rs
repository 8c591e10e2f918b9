//! Seeded synthetic workloads.
//!
//! Every generator takes an explicit seed and uses ChaCha8, so the same
//! seed and parameters give byte-identical output on every platform.

use std::io::Write;
use std::ops::Range;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Gamma, Normal};

use crate::error::{HarnessError, Result};

/// Fraction of outliers in [`Dataset::GaussianOutliers`].
pub const OUTLIER_FRACTION: f64 = 0.01;
/// Standard deviation of the outlier component.
pub const OUTLIER_SIGMA: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Dataset {
    Exponential { lambda: f64 },
    /// Gamma with scale 1.
    Gamma { shape: f64 },
    /// Standard normal points with a fixed fraction replaced by draws from
    /// `N(outlier_mean, 0.1)`.
    GaussianOutliers { outlier_mean: f64 },
    /// `cardinality` evenly spaced points on `[-1, 1]`, each used equally
    /// often (up to one).
    UniformDiscrete { cardinality: usize },
}

impl Dataset {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(HarnessError::Invalid(msg));
        match *self {
            Dataset::Exponential { lambda } if !(lambda > 0.0 && lambda.is_finite()) => {
                bad(format!("exponential rate must be positive, got {lambda}"))
            }
            Dataset::Gamma { shape } if !(shape > 0.0 && shape.is_finite()) => {
                bad(format!("gamma shape must be positive, got {shape}"))
            }
            Dataset::GaussianOutliers { outlier_mean } if !outlier_mean.is_finite() => {
                bad(format!("outlier mean must be finite, got {outlier_mean}"))
            }
            Dataset::UniformDiscrete { cardinality } if cardinality == 0 => {
                bad("cardinality must be positive".into())
            }
            _ => Ok(()),
        }
    }

    pub fn sample(&self, n: usize, seed: u64) -> Result<Vec<f64>> {
        self.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ok(match *self {
            Dataset::Exponential { lambda } => draw(Exp::new(lambda), &mut rng, n),
            Dataset::Gamma { shape } => draw(Gamma::new(shape, 1.0), &mut rng, n),
            Dataset::GaussianOutliers { outlier_mean } => {
                let outliers = (n as f64 * OUTLIER_FRACTION).round() as usize;
                let mut xs = draw(Normal::new(0.0, 1.0), &mut rng, n - outliers);
                xs.extend(draw(Normal::new(outlier_mean, OUTLIER_SIGMA), &mut rng, outliers));
                xs.shuffle(&mut rng);
                xs
            }
            Dataset::UniformDiscrete { cardinality } => {
                let points = evenly_spaced(cardinality);
                let mut xs: Vec<f64> = (0..n).map(|i| points[i % cardinality]).collect();
                xs.shuffle(&mut rng);
                xs
            }
        })
    }
}

fn draw<D, E>(dist: std::result::Result<D, E>, rng: &mut ChaCha8Rng, n: usize) -> Vec<f64>
where
    D: Distribution<f64>,
    E: std::fmt::Debug,
{
    let dist = dist.expect("parameters validated");
    (0..n).map(|_| dist.sample(rng)).collect()
}

/// `m` evenly spaced points from -1 to 1; a single point sits at 0.
pub fn evenly_spaced(m: usize) -> Vec<f64> {
    if m == 1 {
        return vec![0.0];
    }
    (0..m).map(|j| -1.0 + 2.0 * j as f64 / (m - 1) as f64).collect()
}

/// One row of a grouped workload.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupRow {
    pub group: usize,
    pub shard: usize,
    pub value: f64,
}

/// A cube of `groups × shards` cells for threshold queries.
///
/// Most groups draw from an exponential with a group-specific scale. A small
/// fraction of anomalous groups carry a heavy elevated component, so their
/// upper quantiles exceed the global tail.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupWorkload {
    pub groups: usize,
    pub shards: usize,
    pub rows_per_cell: usize,
    pub anomalous_fraction: f64,
    pub seed: u64,
}

impl Default for GroupWorkload {
    fn default() -> Self {
        Self {
            groups: 1000,
            shards: 4,
            rows_per_cell: 50,
            anomalous_fraction: 0.02,
            seed: 0,
        }
    }
}

impl GroupWorkload {
    pub fn rows(&self) -> Result<Vec<GroupRow>> {
        if self.groups == 0 || self.shards == 0 || self.rows_per_cell == 0 {
            return Err(HarnessError::Invalid("workload dimensions must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.anomalous_fraction) {
            return Err(HarnessError::Invalid("anomalous fraction must be in [0, 1]".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let spread = Normal::new(0.0, 0.3).expect("valid");
        let unit = Exp::new(1.0).expect("valid");
        let mut rows = Vec::with_capacity(self.groups * self.shards * self.rows_per_cell);
        for group in 0..self.groups {
            let scale = f64::exp(spread.sample(&mut rng));
            let anomalous = rng.random_bool(self.anomalous_fraction);
            for shard in 0..self.shards {
                for _ in 0..self.rows_per_cell {
                    let value = if anomalous && rng.random_bool(0.4) {
                        10.0 + unit.sample(&mut rng)
                    } else {
                        scale * unit.sample(&mut rng)
                    };
                    rows.push(GroupRow { group, shard, value });
                }
            }
        }
        Ok(rows)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["group", "shard", "value"])?;
        for r in self.rows()? {
            w.write_record([format!("g{:04}", r.group), r.shard.to_string(), r.value.to_string()])?;
        }
        w.flush().map_err(|e| HarnessError::io("<csv>", e))?;
        Ok(())
    }
}

/// A time series of exponential background values with two injected
/// spikes of constant elevated values.
#[derive(Debug, Clone, PartialEq)]
pub struct SpikeWorkload {
    pub panes: usize,
    pub pane_width: f64,
    pub values_per_pane: usize,
    pub background_mean: f64,
    /// `(first pane, pane count, value)`.
    pub spikes: Vec<(usize, usize, f64)>,
    /// Extra spike values per spike pane, relative to `values_per_pane`.
    pub spike_fraction: f64,
    /// Standard deviation of spike values relative to the spike level.
    pub spike_spread: f64,
    pub seed: u64,
}

impl Default for SpikeWorkload {
    /// Ten-minute panes over thirty days; two-hour spikes at 2000 and 1000.
    fn default() -> Self {
        Self {
            panes: 4320,
            pane_width: 600.0,
            values_per_pane: 50,
            background_mean: 100.0,
            spikes: vec![(1000, 12, 2000.0), (3000, 12, 1000.0)],
            spike_fraction: 0.5,
            spike_spread: 0.1,
            seed: 0,
        }
    }
}

impl SpikeWorkload {
    /// Pane index ranges covered by each spike.
    pub fn spike_panes(&self) -> Vec<Range<usize>> {
        self.spikes.iter().map(|&(s, len, _)| s..s + len).collect()
    }

    /// `(time, value)` rows in time order.
    pub fn rows(&self) -> Result<Vec<(f64, f64)>> {
        if self.panes == 0 || self.values_per_pane == 0 || !(self.pane_width > 0.0) {
            return Err(HarnessError::Invalid("spike workload dimensions must be positive".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let background = Exp::new(1.0 / self.background_mean)
            .map_err(|e| HarnessError::Invalid(format!("background mean: {e}")))?;
        let spread = Normal::new(1.0, self.spike_spread)
            .map_err(|e| HarnessError::Invalid(format!("spike spread: {e}")))?;
        let extra = (self.values_per_pane as f64 * self.spike_fraction).round() as usize;
        let mut rows = Vec::new();
        for p in 0..self.panes {
            let start = p as f64 * self.pane_width;
            let spike = self
                .spikes
                .iter()
                .find(|&&(s, len, _)| (s..s + len).contains(&p))
                .map(|&(_, _, v)| v);
            let mut pane: Vec<f64> = (0..self.values_per_pane)
                .map(|_| background.sample(&mut rng))
                .collect();
            if let Some(v) = spike {
                pane.extend((0..extra).map(|_| v * spread.sample(&mut rng)));
                pane.shuffle(&mut rng);
            }
            let step = self.pane_width / pane.len() as f64;
            rows.extend(pane.into_iter().enumerate().map(|(i, v)| (start + i as f64 * step, v)));
        }
        Ok(rows)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["time", "value"])?;
        for (t, v) in self.rows()? {
            w.write_record([t.to_string(), v.to_string()])?;
        }
        w.flush().map_err(|e| HarnessError::io("<csv>", e))?;
        Ok(())
    }
}

/// Writes a single-column `value` CSV.
pub fn write_values<W: Write>(values: &[f64], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["value"])?;
    for v in values {
        w.write_record([v.to_string()])?;
    }
    w.flush().map_err(|e| HarnessError::io("<csv>", e))?;
    Ok(())
}
