//! Normalization of raw pulse areas and loading of measured histograms.
//!
//! Raw areas are in whatever unit the oscilloscope reports (picowebers on
//! the original setup); only differences and ratios enter.

use std::fs::File;
use std::io::Read;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Calibration that maps raw areas to the normalized signal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NormalizationRef {
    /// Area measured with the laser off.
    pub s_zero: f64,
    /// Area of a single undelayed pulse.
    pub s_0: f64,
    /// Insertion loss of the delay line [dB].
    pub alpha_db: f64,
}

impl NormalizationRef {
    pub fn new(s_zero: f64, s_0: f64, alpha_db: f64) -> Result<Self> {
        let r = Self { s_zero, s_0, alpha_db };
        r.validate()?;
        Ok(r)
    }

    pub fn validate(&self) -> Result<()> {
        if ![self.s_zero, self.s_0, self.alpha_db].iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("normalization reference"));
        }
        if !(self.s_0 > self.s_zero) {
            return Err(invalid("s_0", format!("must exceed s_zero = {}, got {}", self.s_zero, self.s_0)));
        }
        if self.alpha_db < 0.0 {
            return Err(invalid("alpha_db", format!("must be >= 0, got {}", self.alpha_db)));
        }
        Ok(())
    }

    fn gain(&self) -> f64 {
        10f64.powf(self.alpha_db / 10.0) / (self.s_0 - self.s_zero)
    }

    pub fn from_json_file(path: &Path) -> Result<Self> {
        let r: Self = serde_json::from_reader(File::open(path)?)?;
        r.validate()?;
        Ok(r)
    }
}

/// `10^{α/10}·(x − S_zero)/(S_0 − S_zero)`.
pub fn normalize(x: f64, r: &NormalizationRef) -> f64 {
    r.gain() * (x - r.s_zero)
}

/// Inverse of [`normalize`].
pub fn denormalize(s: f64, r: &NormalizationRef) -> f64 {
    r.s_zero + s / r.gain()
}

/// Insertion loss [dB] of a delay line from the undelayed area `s_0` and the
/// area `s_delay` measured through the line; a lossless 50:50 split gives 0.
pub fn insertion_loss(s_0: f64, s_delay: f64, s_zero: f64) -> Result<f64> {
    if ![s_0, s_delay, s_zero].iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite("insertion-loss area"));
    }
    if !(s_delay > s_zero) {
        return Err(invalid("s_delay", format!("must exceed s_zero = {s_zero}, got {s_delay}")));
    }
    if !(s_0 > s_zero) {
        return Err(invalid("s_0", format!("must exceed s_zero = {s_zero}, got {s_0}")));
    }
    Ok(10.0 * ((s_0 - s_zero) / (2.0 * (s_delay - s_zero))).log10())
}

/// Counts per bin centre.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    /// Strictly increasing bin centres.
    pub centers: Vec<f64>,
    pub counts: Vec<u64>,
}

impl Histogram {
    pub fn new(centers: Vec<f64>, counts: Vec<u64>) -> Result<Self> {
        if centers.is_empty() {
            return Err(Error::Parse("histogram has no bins".into()));
        }
        if centers.len() != counts.len() {
            return Err(invalid("counts", "one count per bin centre"));
        }
        if centers.iter().any(|c| !c.is_finite()) {
            return Err(Error::NonFinite("bin centre"));
        }
        if let Some(k) = centers.windows(2).position(|w| !(w[1] > w[0])) {
            return Err(Error::Parse(format!("bin centres not increasing at bin {}", k + 1)));
        }
        Ok(Self { centers, counts })
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    /// Same counts with every centre mapped through [`normalize`].
    pub fn normalized(&self, r: &NormalizationRef) -> Result<Self> {
        r.validate()?;
        Ok(Self {
            centers: self.centers.iter().map(|&x| normalize(x, r)).collect(),
            counts: self.counts.clone(),
        })
    }

    /// Count-weighted mean and standard deviation of the centres.
    pub fn mean_std(&self) -> Option<(f64, f64)> {
        let n = self.total() as f64;
        if n == 0.0 {
            return None;
        }
        let mean = self.centers.iter().zip(&self.counts).map(|(c, &k)| c * k as f64).sum::<f64>() / n;
        let var = self
            .centers
            .iter()
            .zip(&self.counts)
            .map(|(c, &k)| (c - mean).powi(2) * k as f64)
            .sum::<f64>()
            / n;
        Some((mean, var.sqrt()))
    }

    /// Density per unit abscissa: counts over total times local bin width.
    pub fn density(&self) -> Vec<f64> {
        let n = self.total().max(1) as f64;
        let c = &self.centers;
        (0..c.len())
            .map(|k| {
                let width = match c.len() {
                    1 => 1.0,
                    _ if k == 0 => c[1] - c[0],
                    len if k == len - 1 => c[k] - c[k - 1],
                    _ => 0.5 * (c[k + 1] - c[k - 1]),
                };
                self.counts[k] as f64 / (n * width)
            })
            .collect()
    }

    /// Parses CSV with header `value,count` or `bin_center,count`.
    pub fn from_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers()?.clone();
        let col = |name: &str| headers.iter().position(|h| h.eq_ignore_ascii_case(name));
        let x_col = col("value")
            .or_else(|| col("bin_center"))
            .ok_or_else(|| Error::Parse("expected a `value` or `bin_center` column".into()))?;
        let n_col = col("count").ok_or_else(|| Error::Parse("missing column `count`".into()))?;
        let (mut centers, mut counts) = (Vec::new(), Vec::new());
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let row = line + 2;
            let x = rec.get(x_col).unwrap_or("");
            let n = rec.get(n_col).unwrap_or("");
            centers.push(
                x.parse::<f64>()
                    .map_err(|_| Error::Parse(format!("row {row}: bad bin centre `{x}`")))?,
            );
            counts.push(
                n.parse::<u64>()
                    .map_err(|_| Error::Parse(format!("row {row}: bad count `{n}`")))?,
            );
        }
        Self::new(centers, counts)
    }
}

/// Sidecar holding the normalization reference of `path`: the same name
/// with the extension replaced by `ref.json`.
pub fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("ref.json")
}

/// Loads a histogram, normalizing the centres when a sidecar reference
/// exists next to it.
pub fn load_histogram(path: &Path) -> Result<Histogram> {
    let hist = Histogram::from_csv(File::open(path)?)?;
    let sidecar = sidecar_path(path);
    if sidecar.exists() {
        hist.normalized(&NormalizationRef::from_json_file(&sidecar)?)
    } else {
        Ok(hist)
    }
}
