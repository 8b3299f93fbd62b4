//! Coherent states, Husimi grids and the norm-ratio localization measure.
//!
//! Coherent states are periodized circular Gaussians with anti-periodic
//! images, sampled at the half-integer positions `q_j = (j + 1/2)/D`.
//! A [`CoherentFrame`] evaluates them on the `G x G` grid of cell centres
//! one q-row at a time, so memory stays at `O(G D)` even when `G^2 D` would not
//! fit.

use std::f64::consts::PI;
use std::io::Write;
use std::sync::OnceLock;

use faer::{c64, Mat, MatRef};
use rayon::prelude::*;
use serde::Serialize;

use crate::classical::{finite_time_repeller_mask, Family, OpeningSpec};
use crate::error::{Error, Result};
use crate::grid::PhaseGrid;
use crate::quantum::{open_map, Basis, ComplexOperator, OperatorTag};
use crate::spectral::{eigendecompose_with, ConditionPolicy, ResonanceSet};

/// Images `n = -IMAGES..=IMAGES` in the periodized Gaussian.
pub const IMAGES: i64 = 3;

/// `e^{2 pi i num / den}` with the numerator reduced exactly.
fn phase(num: i64, den: i64) -> c64 {
    let r = num.rem_euclid(den);
    let theta = 2.0 * PI * r as f64 / den as f64;
    c64::new(theta.cos(), theta.sin())
}

fn normalize(v: &mut [c64]) {
    let norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    for z in v {
        *z /= norm;
    }
}

/// Unit-norm position amplitudes of the coherent state centred at `(q0, p0)`.
pub fn coherent_state(q0: f64, p0: f64, dim: usize) -> Result<Vec<c64>> {
    if dim == 0 {
        return Err(Error::InvalidArgument("dimension must be positive".into()));
    }
    if !(0.0..1.0).contains(&q0) || !(0.0..1.0).contains(&p0) {
        return Err(Error::InvalidArgument(format!(
            "centre ({q0}, {p0}) outside the unit torus"
        )));
    }
    let d = dim as f64;
    let mut v: Vec<c64> = (0..dim)
        .map(|j| {
            let qj = (j as f64 + 0.5) / d;
            (-IMAGES..=IMAGES)
                .map(|n| {
                    let x = qj - q0 + n as f64;
                    let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
                    let theta = 2.0 * PI * d * p0 * x;
                    c64::new(theta.cos(), theta.sin()) * (sign * (-PI * d * x * x).exp())
                })
                .sum()
        })
        .collect();
    normalize(&mut v);
    Ok(v)
}

/// Coherent states at the centres of a `G x G` grid in dimension `D`.
#[derive(Debug)]
pub struct CoherentFrame {
    dim: usize,
    grid: usize,
    // e^{2 pi i p_b (j + 1/2)}, row-major in b
    momentum_phase: Vec<c64>,
    reference: OnceLock<f64>,
}

impl CoherentFrame {
    pub fn new(dim: usize, grid: usize) -> Result<Self> {
        if dim == 0 || grid == 0 {
            return Err(Error::InvalidArgument(
                "dimension and grid size must be positive".into(),
            ));
        }
        let (d, g) = (dim as i64, grid as i64);
        let mut momentum_phase = Vec::with_capacity(grid * dim);
        for b in 0..g {
            for j in 0..d {
                momentum_phase.push(phase((2 * b + 1) * (2 * j + 1), 4 * g));
            }
        }
        Ok(Self {
            dim,
            grid,
            momentum_phase,
            reference: OnceLock::new(),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn grid(&self) -> usize {
        self.grid
    }

    pub fn center(&self, index: usize) -> f64 {
        (index as f64 + 0.5) / self.grid as f64
    }

    /// The `G` coherent states with `q = q_a`; row `b` holds `|q_a, p_b>`.
    pub fn row(&self, a: usize) -> Mat<c64> {
        let (d, g) = (self.dim as i64, self.grid as i64);
        let a = a as i64;
        let df = self.dim as f64;
        let q0 = (a as f64 + 0.5) / g as f64;
        let images: Vec<i64> = (-IMAGES..=IMAGES).collect();
        let gauss: Vec<Vec<f64>> = images
            .iter()
            .map(|&n| {
                let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
                (0..self.dim)
                    .map(|j| {
                        let x = (j as f64 + 0.5) / df - q0 + n as f64;
                        sign * (-PI * df * x * x).exp()
                    })
                    .collect()
            })
            .collect();
        let mut out = Mat::<c64>::zeros(self.grid, self.dim);
        let mut amp = vec![c64::new(0.0, 0.0); self.dim];
        for b in 0..g {
            // e^{2 pi i p_b D (n - q_a)}
            let shifts: Vec<c64> = images
                .iter()
                .map(|&n| phase((2 * b + 1) * d * (2 * n * g - 2 * a - 1), 4 * g * g))
                .collect();
            let base = &self.momentum_phase[b as usize * self.dim..(b as usize + 1) * self.dim];
            for (j, z) in amp.iter_mut().enumerate() {
                let mut acc = c64::new(0.0, 0.0);
                for (s, w) in shifts.iter().zip(&gauss) {
                    acc += s * w[j];
                }
                *z = base[j] * acc;
            }
            normalize(&mut amp);
            for (j, z) in amp.iter().enumerate() {
                out[(b as usize, j)] = *z;
            }
        }
        out
    }

    fn check_dim(&self, found: usize) -> Result<()> {
        if found != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found,
            });
        }
        Ok(())
    }

    /// Evaluate `f(a, row_a)` for every q-row in parallel and stitch the
    /// per-row value vectors together in order.
    fn map_rows<T: Send>(&self, f: impl Fn(usize, &Mat<c64>) -> T + Sync) -> Vec<T> {
        (0..self.grid)
            .into_par_iter()
            .map(|a| f(a, &self.row(a)))
            .collect()
    }

    /// Husimi of the coherent state centred at grid point `(a, b)`.
    pub fn coherent_husimi(&self, a: usize, b: usize) -> Result<PhaseGrid> {
        if a >= self.grid || b >= self.grid {
            return Err(Error::IndexOutOfRange {
                index: a.max(b),
                len: self.grid,
            });
        }
        let state: Vec<c64> = {
            let row = self.row(a);
            (0..self.dim).map(|j| row[(b, j)]).collect()
        };
        let rows = self.map_rows(|_, row| {
            (0..self.grid)
                .map(|bb| {
                    let s: c64 = (0..self.dim).map(|j| row[(bb, j)].conj() * state[j]).sum();
                    s.norm_sqr()
                })
                .collect::<Vec<f64>>()
        });
        PhaseGrid::new(self.grid, rows.concat())
    }

    /// `‖ρ_c‖₁/‖ρ_c‖₂` for the coherent state at the central grid point.
    pub fn reference_ratio(&self) -> f64 {
        *self.reference.get_or_init(|| {
            let c = self.grid / 2;
            let grid = self
                .coherent_husimi(c, c)
                .expect("central grid point is in range");
            norm_one_two(&grid)
        })
    }
}

/// Grid value `|<c| op |c>|` at every frame centre.
pub fn husimi(op: MatRef<'_, c64>, frame: &CoherentFrame) -> Result<PhaseGrid> {
    frame.check_dim(op.nrows())?;
    frame.check_dim(op.ncols())?;
    let rows = frame.map_rows(|_, row| {
        let x = row.conjugate() * op;
        (0..frame.grid)
            .map(|b| {
                let s: c64 = (0..frame.dim).map(|j| x[(b, j)] * row[(b, j)]).sum();
                s.norm()
            })
            .collect::<Vec<f64>>()
    });
    PhaseGrid::new(frame.grid, rows.concat())
}

/// Husimi grids of `ĥ_j` and `Q̂_j` for `j = 1..=count`, built from the
/// factored form `<c|R_j><L_j|c> / <L_j|R_j>`.
#[derive(Debug, Clone)]
pub struct ResonanceHusimis {
    /// `h[j - 1]`, `None` when resonance `j` is near-defective.
    pub h: Vec<Option<PhaseGrid>>,
    /// `q[j - 1]`, `None` from the first near-defective index onward.
    pub q: Vec<Option<PhaseGrid>>,
    pub excluded: Vec<usize>,
}

pub fn resonance_husimis(
    set: &ResonanceSet,
    frame: &CoherentFrame,
    count: usize,
) -> Result<ResonanceHusimis> {
    frame.check_dim(set.dim())?;
    if count > set.dim() {
        return Err(Error::IndexOutOfRange {
            index: count,
            len: set.dim(),
        });
    }
    let excluded: Vec<usize> = (1..=count).filter(|&j| set.check_resonance(j).is_err()).collect();
    let cumulative_limit = excluded.first().map_or(count, |&j| j - 1);
    let right = set.right_vectors().subcols(0, count);
    let left = set.left_vectors().subrows(0, count);
    let overlaps: Vec<c64> = (1..=count).map(|j| set.overlap(j)).collect();
    let g = frame.grid;
    // per row: (h values, Q values), each laid out [j][b]
    let rows = frame.map_rows(|_, row| {
        let kets = row.conjugate() * right;
        let bras = row * left.transpose();
        let mut h = vec![0.0; count * g];
        let mut q = vec![0.0; count * g];
        for b in 0..g {
            let mut acc = c64::new(0.0, 0.0);
            for j in 0..count {
                let z = kets[(b, j)] * bras[(b, j)] / overlaps[j];
                h[j * g + b] = z.norm();
                acc += z;
                q[j * g + b] = acc.norm();
            }
        }
        (h, q)
    });
    type Rows = (Vec<f64>, Vec<f64>);
    let assemble = |pick: &dyn Fn(&Rows) -> &Vec<f64>, j: usize| {
        let mut values = Vec::with_capacity(g * g);
        for r in &rows {
            values.extend_from_slice(&pick(r)[j * g..(j + 1) * g]);
        }
        PhaseGrid::new(g, values)
    };
    let mut h = Vec::with_capacity(count);
    let mut q = Vec::with_capacity(count);
    for j in 0..count {
        h.push(if excluded.contains(&(j + 1)) {
            None
        } else {
            Some(assemble(&|r| &r.0, j)?)
        });
        q.push(if j < cumulative_limit {
            Some(assemble(&|r| &r.1, j)?)
        } else {
            None
        });
    }
    Ok(ResonanceHusimis { h, q, excluded })
}

fn norm_one_two(grid: &PhaseGrid) -> f64 {
    let n = (grid.size() * grid.size()) as f64;
    let one = grid.values().iter().sum::<f64>() / n;
    let two = (grid.values().iter().map(|v| v * v).sum::<f64>() / n).sqrt();
    one / two
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NormRatioReport {
    pub nr: f64,
    pub grid: usize,
    /// `‖ρ_c‖₁/‖ρ_c‖₂` of the coherent reference on the same grid.
    pub reference: f64,
    /// Largest value reachable on this grid (attained by a flat grid).
    pub maximum: f64,
}

pub fn norm_ratio(grid: &PhaseGrid, frame: &CoherentFrame) -> Result<NormRatioReport> {
    if grid.size() != frame.grid {
        return Err(Error::DimensionMismatch {
            expected: frame.grid,
            found: grid.size(),
        });
    }
    if grid.max() == 0.0 {
        return Err(Error::ZeroGrid);
    }
    let reference = frame.reference_ratio();
    let ratio = norm_one_two(grid) / reference;
    Ok(NormRatioReport {
        nr: ratio * ratio,
        grid: frame.grid,
        reference,
        maximum: 1.0 / (reference * reference),
    })
}

/// The quantized finite-time repeller with its Husimi grid and norm ratio.
#[derive(Debug, Clone)]
pub struct Repeller {
    pub operator: ComplexOperator,
    pub husimi: PhaseGrid,
    pub report: NormRatioReport,
}

/// `I_rep = Σ χ_l(q_j, p_j') |q_j, p_j'><q_j, p_j'|` over the `D x D` lattice,
/// with `D = 3^l` the frame dimension.
pub fn repeller_operator(l: usize, frame: &CoherentFrame) -> Result<Repeller> {
    let d = frame.dim;
    let mask = finite_time_repeller_mask(l, d)?;
    if 3usize.checked_pow(l as u32) != Some(d) {
        return Err(Error::DimensionMismatch {
            expected: 3usize.pow(l as u32),
            found: d,
        });
    }
    let lattice = CoherentFrame::new(d, d)?;
    let blocks: Vec<Mat<c64>> = (0..d)
        .into_par_iter()
        .filter_map(|a| {
            let cols: Vec<usize> = (0..d).filter(|&b| mask.get(a, b) > 0.0).collect();
            if cols.is_empty() {
                return None;
            }
            let row = lattice.row(a);
            let states = Mat::from_fn(cols.len(), d, |i, j| row[(cols[i], j)]);
            Some(states.transpose() * states.conjugate())
        })
        .collect();
    let mut matrix = Mat::<c64>::zeros(d, d);
    for block in &blocks {
        matrix += block;
    }
    let operator = ComplexOperator::new(matrix, OperatorTag::General, Basis::Position)?;
    let grid = husimi(operator.matrix(), frame)?;
    let report = norm_ratio(&grid, frame)?;
    Ok(Repeller {
        operator,
        husimi: grid,
        report,
    })
}

/// Norm ratios of the first resonances of one opening.
#[derive(Debug, Clone, Serialize)]
pub struct MemberNr {
    pub family: Family,
    pub k: usize,
    pub moduli: Vec<f64>,
    pub nr_h: Vec<Option<f64>>,
    pub nr_q: Vec<Option<f64>>,
    pub excluded: Vec<usize>,
    pub condition: f64,
    pub residual_max: f64,
    pub left_residual_max: f64,
}

impl MemberNr {
    /// Mean `nr(ĥ_j)` over the available `j <= m`.
    pub fn average(&self, m: usize) -> Option<f64> {
        let values: Vec<f64> = self.nr_h.iter().take(m).flatten().copied().collect();
        (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
    }

    /// Mean `nr(Q̂_j)` over `j` in `from..=to`, skipping unavailable entries.
    pub fn cumulative_average(&self, from: usize, to: usize) -> Option<f64> {
        let values: Vec<f64> = (from.max(1)..=to.min(self.nr_q.len()))
            .filter_map(|j| self.nr_q[j - 1])
            .collect();
        (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
    }
}

/// Decompose `op`, refine the first `count` left vectors and measure their
/// Husimi norm ratios.
pub fn member_nr(
    spec: &OpeningSpec,
    op: &ComplexOperator,
    frame: &CoherentFrame,
    count: usize,
) -> Result<MemberNr> {
    let mut set = eigendecompose_with(op, ConditionPolicy::Report)?;
    let count = count.min(set.dim());
    let left_residual_max = set.refine_left(op.matrix(), count);
    let husimis = resonance_husimis(&set, frame, count)?;
    let ratio = |g: &Option<PhaseGrid>| -> Result<Option<f64>> {
        g.as_ref().map(|g| norm_ratio(g, frame).map(|r| r.nr)).transpose()
    };
    Ok(MemberNr {
        family: spec.family(),
        k: spec.k(),
        moduli: set.moduli().into_iter().take(count).collect(),
        nr_h: husimis.h.iter().map(ratio).collect::<Result<_>>()?,
        nr_q: husimis.q.iter().map(ratio).collect::<Result<_>>()?,
        excluded: husimis.excluded,
        condition: set.condition(),
        residual_max: set.residual_max(),
        left_residual_max,
    })
}

/// Per-state and averaged norm ratios for one family, with the repeller threshold.
#[derive(Debug, Clone, Serialize)]
pub struct NrTable {
    pub family: Family,
    pub l: usize,
    pub grid: usize,
    pub m_values: Vec<usize>,
    pub threshold: f64,
    pub members: Vec<MemberNr>,
}

impl NrTable {
    pub fn member(&self, k: usize) -> Option<&MemberNr> {
        self.members.iter().find(|m| m.k == k)
    }

    /// Columns `family, k, j, lambda_modulus, nr_h, nr_Q`. Summary rows put
    /// `mean_<m>` in `j`, and the single threshold row puts `threshold` there.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let opt = |v: Option<f64>| v.map_or("nan".to_string(), |x| format!("{x:e}"));
        writeln!(w, "family,k,j,lambda_modulus,nr_h,nr_Q")?;
        for m in &self.members {
            for (i, modulus) in m.moduli.iter().enumerate() {
                writeln!(
                    w,
                    "{},{},{},{:e},{},{}",
                    self.family,
                    m.k,
                    i + 1,
                    modulus,
                    opt(m.nr_h[i]),
                    opt(m.nr_q[i])
                )?;
            }
            for &mv in &self.m_values {
                writeln!(w, "{},{},mean_{mv},,{},", self.family, m.k, opt(m.average(mv)))?;
            }
        }
        writeln!(w, "{},,threshold,,{:e},", self.family, self.threshold)?;
        Ok(())
    }
}

/// Norm-ratio table for members `ks` of `family` at `l`.
pub fn nr_scan(
    family: Family,
    l: usize,
    ks: &[usize],
    frame: &CoherentFrame,
    m_values: &[usize],
) -> Result<NrTable> {
    let threshold = repeller_operator(l, frame)?.report.nr;
    let count = m_values.iter().copied().max().unwrap_or(0);
    let members = ks
        .iter()
        .map(|&k| {
            let spec = OpeningSpec::new(family, k, l)?;
            member_nr(&spec, &open_map(&spec)?, frame, count)
        })
        .collect::<Result<_>>()?;
    Ok(NrTable {
        family,
        l,
        grid: frame.grid,
        m_values: m_values.to_vec(),
        threshold,
        members,
    })
}
