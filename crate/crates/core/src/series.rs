//! Input containers: a multichannel real series and a quantile grid.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// An `n × m` real time series, stored channel by channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiSeries {
    n: usize,
    m: usize,
    data: Vec<f64>,
    names: Option<Vec<String>>,
}

impl MultiSeries {
    /// Build from channels, each of length `n`.
    pub fn from_channels(channels: Vec<Vec<f64>>) -> Result<Self> {
        let m = channels.len();
        if m == 0 {
            return Err(Error::domain("a series needs at least one channel"));
        }
        let n = channels[0].len();
        if channels.iter().any(|c| c.len() != n) {
            return Err(Error::domain("channels have different lengths"));
        }
        Self::validated(n, m, channels.concat())
    }

    /// Build from time-ordered rows, each holding one value per channel.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let m = rows.first().map_or(0, |r| r.len());
        if m == 0 {
            return Err(Error::domain("a series needs at least one channel"));
        }
        if let Some(t) = rows.iter().position(|r| r.len() != m) {
            return Err(Error::Format(format!(
                "row {} has {} values, expected {m}",
                t + 1,
                rows[t].len()
            )));
        }
        let mut data = vec![0.0; n * m];
        for (t, row) in rows.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                data[j * n + t] = v;
            }
        }
        Self::validated(n, m, data)
    }

    fn validated(n: usize, m: usize, data: Vec<f64>) -> Result<Self> {
        if n < 8 {
            return Err(Error::domain(format!("series length must be at least 8, got {n}")));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::domain(format!(
                "non-finite value at time {}, channel {}",
                i % n + 1,
                i / n + 1
            )));
        }
        Ok(Self { n, m, data, names: None })
    }

    pub fn with_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.m {
            return Err(Error::domain(format!(
                "{} channel names for {} channels",
                names.len(),
                self.m
            )));
        }
        self.names = Some(names);
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn channel(&self, j: usize) -> &[f64] {
        &self.data[j * self.n..(j + 1) * self.n]
    }

    pub fn channel_names(&self) -> Option<&[String]> {
        self.names.as_deref()
    }

    /// Value of channel `j` at zero-based time `t`.
    pub fn get(&self, t: usize, j: usize) -> f64 {
        self.data[j * self.n + t]
    }

    /// Keep only the listed channels, in the given order.
    pub fn select(&self, channels: &[usize]) -> Result<Self> {
        if let Some(&j) = channels.iter().find(|&&j| j >= self.m) {
            return Err(Error::domain(format!("channel {} out of range", j + 1)));
        }
        let picked = channels.iter().map(|&j| self.channel(j).to_vec()).collect();
        let mut out = Self::from_channels(picked)?;
        if let Some(names) = &self.names {
            out.names = Some(channels.iter().map(|&j| names[j].clone()).collect());
        }
        Ok(out)
    }
}

/// Strictly increasing quantile levels in `(0, 1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileGrid {
    levels: Vec<f64>,
}

impl QuantileGrid {
    pub fn new(levels: Vec<f64>) -> Result<Self> {
        if levels.is_empty() {
            return Err(Error::domain("quantile grid is empty"));
        }
        if let Some(a) = levels.iter().find(|&&a| !(a > 0.0 && a < 1.0)) {
            return Err(Error::domain(format!("quantile level {a} outside (0, 1)")));
        }
        if levels.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::domain("quantile levels must be strictly increasing"));
        }
        Ok(Self { levels })
    }

    /// `min, min + step, …, max`. Levels are rounded to 12 decimals so that
    /// decimal grids such as `0.1:0.9:0.01` hold the values they name.
    pub fn range(min: f64, max: f64, step: f64) -> Result<Self> {
        if !(step > 0.0) || !(max >= min) {
            return Err(Error::domain(format!("invalid grid {min}:{max}:{step}")));
        }
        let count = ((max - min) / step + 1e-9).floor() as usize + 1;
        let levels = (0..count)
            .map(|i| ((min + i as f64 * step) * 1e12).round() / 1e12)
            .collect();
        Self::new(levels)
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }
}

/// Fourier frequencies `2πv/n` for `v = 1..=⌊(n−1)/2⌋`.
pub fn fourier_frequencies(n: usize) -> Vec<f64> {
    (1..=(n.saturating_sub(1)) / 2)
        .map(|v| 2.0 * std::f64::consts::PI * v as f64 / n as f64)
        .collect()
}
