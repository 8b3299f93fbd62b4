//! Real-valued samplings of the unit torus.
//!
//! A [`PhaseGrid`] of size `G` holds values at the cell centres
//! `(q_a, p_b) = ((a + 1/2)/G, (b + 1/2)/G)`, stored row-major in `a`
//! (q grows rightward, p grows upward).

use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct PhaseGrid {
    size: usize,
    values: Vec<f64>,
}

/// Metadata written next to a PGM image so the 16-bit levels can be mapped back.
#[derive(Debug, Clone, Serialize)]
pub struct PgmMetadata {
    pub size: usize,
    pub max_value: f64,
    pub levels: u16,
    pub orientation: &'static str,
}

impl PhaseGrid {
    pub fn new(size: usize, values: Vec<f64>) -> Result<Self> {
        if size == 0 {
            return Err(Error::InvalidArgument("grid size must be positive".into()));
        }
        if values.len() != size * size {
            return Err(Error::DimensionMismatch {
                expected: size * size,
                found: values.len(),
            });
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::InvalidArgument(format!(
                "grid values must be finite and non-negative, found {v}"
            )));
        }
        Ok(Self { size, values })
    }

    pub fn from_fn(size: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let mut values = Vec::with_capacity(size * size);
        for a in 0..size {
            for b in 0..size {
                values.push(f(a, b));
            }
        }
        Self::new(size, values)
    }

    pub fn uniform(size: usize, value: f64) -> Result<Self> {
        Self::new(size, vec![value; size * size])
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Cell centre coordinate along either axis.
    pub fn center(&self, index: usize) -> f64 {
        (index as f64 + 0.5) / self.size as f64
    }

    /// Value at q-index `a`, p-index `b`.
    pub fn get(&self, a: usize, b: usize) -> f64 {
        self.values[a * self.size + b]
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn count_nonzero(&self) -> usize {
        self.values.iter().filter(|v| **v != 0.0).count()
    }

    /// q <-> p exchange.
    pub fn transposed(&self) -> Self {
        let g = self.size;
        let mut values = vec![0.0; g * g];
        for a in 0..g {
            for b in 0..g {
                values[b * g + a] = self.values[a * g + b];
            }
        }
        Self { size: g, values }
    }

    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::new(self.size, self.values.iter().map(|v| v * factor).collect())
    }

    /// Columns `q, p, value`, one row per cell.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "q,p,value")?;
        for a in 0..self.size {
            for b in 0..self.size {
                writeln!(
                    w,
                    "{},{},{:e}",
                    self.center(a),
                    self.center(b),
                    self.get(a, b)
                )?;
            }
        }
        Ok(())
    }

    /// Binary 16-bit PGM (P5, big-endian samples). Image row 0 is the highest p,
    /// column 0 the lowest q; levels are `round(65535 * value / max)`.
    pub fn write_pgm<W: Write>(&self, mut w: W) -> Result<PgmMetadata> {
        let g = self.size;
        let max = self.max();
        let levels = u16::MAX;
        writeln!(w, "P5")?;
        writeln!(
            w,
            "# row 0 = highest p, column 0 = lowest q; value = level / {levels} * {max:e}"
        )?;
        writeln!(w, "{g} {g}")?;
        writeln!(w, "{levels}")?;
        let mut buf = Vec::with_capacity(2 * g * g);
        for row in 0..g {
            let b = g - 1 - row;
            for a in 0..g {
                let v = self.get(a, b);
                let level = if max > 0.0 {
                    (v / max * f64::from(levels)).round() as u16
                } else {
                    0
                };
                buf.extend_from_slice(&level.to_be_bytes());
            }
        }
        w.write_all(&buf)?;
        Ok(PgmMetadata {
            size: g,
            max_value: max,
            levels,
            orientation: "row 0 = highest p, column 0 = lowest q",
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_negative_and_misshaped() {
        assert!(PhaseGrid::new(2, vec![0.0, 1.0, -1.0, 0.0]).is_err());
        assert!(PhaseGrid::new(2, vec![0.0; 3]).is_err());
        assert!(PhaseGrid::new(2, vec![0.0, f64::NAN, 0.0, 0.0]).is_err());
    }

    #[test]
    fn pgm_orientation() {
        // single bright cell at lowest q, highest p -> first pixel of the image
        let grid = PhaseGrid::from_fn(3, |a, b| if a == 0 && b == 2 { 4.0 } else { 1.0 }).unwrap();
        let mut out = Vec::new();
        let meta = grid.write_pgm(&mut out).unwrap();
        assert_eq!(meta.max_value, 4.0);
        let header_end = out
            .windows(6)
            .position(|w| w == b"65535\n")
            .unwrap()
            + 6;
        let pixels = &out[header_end..];
        assert_eq!(pixels.len(), 18);
        assert_eq!(u16::from_be_bytes([pixels[0], pixels[1]]), 65535);
        assert_eq!(u16::from_be_bytes([pixels[2], pixels[3]]), 16384);
    }

    #[test]
    fn csv_has_one_row_per_cell() {
        let grid = PhaseGrid::uniform(4, 0.5).unwrap();
        let mut out = Vec::new();
        grid.write_csv(&mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert_eq!(text.lines().count(), 17);
        assert!(text.starts_with("q,p,value\n0.125,0.125,"));
    }
}
