use std::fs::File;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;

/// A cell of an output table. Floats use the shortest round-trip form, so
/// files are byte-identical whenever the values are.
pub enum Cell<'a> {
    F(f64),
    U(u64),
    S(&'a str),
    Missing,
}

impl Cell<'_> {
    fn render(&self) -> String {
        match self {
            Cell::F(v) => v.to_string(),
            Cell::U(v) => v.to_string(),
            Cell::S(s) => s.to_string(),
            Cell::Missing => String::new(),
        }
    }
}

impl From<f64> for Cell<'_> {
    fn from(v: f64) -> Self {
        Cell::F(v)
    }
}

impl From<u64> for Cell<'_> {
    fn from(v: u64) -> Self {
        Cell::U(v)
    }
}

impl<'a> From<&'a str> for Cell<'a> {
    fn from(s: &'a str) -> Self {
        Cell::S(s)
    }
}

impl From<Option<f64>> for Cell<'_> {
    fn from(v: Option<f64>) -> Self {
        v.map_or(Cell::Missing, Cell::F)
    }
}

pub struct Table {
    path: PathBuf,
    writer: csv::Writer<File>,
    rows: usize,
}

impl Table {
    pub fn create(path: PathBuf, header: &[&str]) -> Result<Self> {
        let file = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
        let mut writer = csv::Writer::from_writer(file);
        writer.write_record(header)?;
        Ok(Self { path, writer, rows: 0 })
    }

    pub fn row<'a>(&mut self, cells: impl IntoIterator<Item = Cell<'a>>) -> Result<()> {
        self.writer.write_record(cells.into_iter().map(|c| c.render()))?;
        self.rows += 1;
        Ok(())
    }

    /// Flushes and returns the path and the number of data rows.
    pub fn finish(mut self) -> Result<(PathBuf, usize)> {
        self.writer.flush()?;
        Ok((self.path, self.rows))
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    serde_json::to_writer_pretty(file, value)?;
    Ok(())
}

pub fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![a],
        _ => (0..n).map(|k| a + (b - a) * k as f64 / (n - 1) as f64).collect(),
    }
}

/// `n` points on [a, b), for periodic abscissae.
pub fn half_open(a: f64, b: f64, n: usize) -> Vec<f64> {
    (0..n).map(|k| a + (b - a) * k as f64 / n as f64).collect()
}

/// Equal-width histogram over the sample range.
pub fn histogram(xs: &[f64], bins: usize) -> Vec<(f64, u64)> {
    let lo = xs.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if xs.is_empty() || bins == 0 {
        return vec![];
    }
    let width = (hi - lo).max(f64::MIN_POSITIVE) / bins as f64;
    let mut counts = vec![0u64; bins];
    for &x in xs {
        let k = (((x - lo) / width) as usize).min(bins - 1);
        counts[k] += 1;
    }
    counts
        .into_iter()
        .enumerate()
        .map(|(k, c)| (lo + (k as f64 + 0.5) * width, c))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn histogram_keeps_every_sample() {
        let xs: Vec<f64> = (0..1000).map(|k| (k as f64).sin()).collect();
        let h = histogram(&xs, 17);
        assert_eq!(h.len(), 17);
        assert_eq!(h.iter().map(|b| b.1).sum::<u64>(), 1000);
        assert!(h.windows(2).all(|w| w[0].0 < w[1].0));
    }

    #[test]
    fn grids() {
        assert_eq!(linspace(0.0, 1.0, 3), vec![0.0, 0.5, 1.0]);
        assert_eq!(linspace(2.0, 5.0, 1), vec![2.0]);
        assert_eq!(half_open(0.0, 1.0, 4), vec![0.0, 0.25, 0.5, 0.75]);
    }
}
