//! Resonances of the non-normal open maps.
//!
//! Right eigenvectors come from a dense Schur-based eigensolver; left
//! eigenvectors are the rows of the inverse of the right-eigenvector matrix,
//! which pairs them with the right ones and normalizes `<L_j|R_j> = 1`.
//! Resonances are indexed `j = 1..=D` by decreasing modulus, ties broken by
//! descending real part, then descending imaginary part.

use std::cmp::Ordering;
use std::io::Write;

use faer::linalg::solvers::DenseSolveCore;
use faer::{c64, Col, Mat, MatRef};

use crate::error::{Error, Result};
use crate::quantum::{Basis, ComplexOperator, OperatorTag};

/// Eigenvalue pairs closer than this are exempt from the biorthogonality check.
pub const DEGENERACY_THRESHOLD: f64 = 1e-8;

/// Unit-normalized `|<L_j|R_j>|` below which `ĥ_j` is reported unavailable.
pub const NEAR_DEFECTIVE_OVERLAP: f64 = 1e-10;

/// 1-norm condition estimate of the right-eigenvector matrix above which
/// [`eigendecompose`] rejects the decomposition as numerically defective.
pub const CONDITION_LIMIT: f64 = 1e15;

/// What to do with a badly conditioned right-eigenvector matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ConditionPolicy {
    /// Fail with [`Error::Defective`] above the given condition estimate.
    Reject(f64),
    /// Keep the decomposition; the estimate stays available through
    /// [`ResonanceSet::condition`]. Only a singular matrix is rejected.
    Report,
}

#[derive(Debug, Clone)]
pub struct ResonanceSet {
    eigenvalues: Vec<c64>,
    right: Mat<c64>,
    left: Mat<c64>,
    condition: f64,
    residual_max: f64,
}

fn order_eigenvalues(a: &c64, b: &c64) -> Ordering {
    b.norm()
        .total_cmp(&a.norm())
        .then(b.re.total_cmp(&a.re))
        .then(b.im.total_cmp(&a.im))
}

fn one_norm(m: MatRef<'_, c64>) -> f64 {
    (0..m.ncols())
        .map(|j| (0..m.nrows()).map(|i| m[(i, j)].norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

fn col_norm(m: MatRef<'_, c64>, j: usize) -> f64 {
    (0..m.nrows()).map(|i| m[(i, j)].norm_sqr()).sum::<f64>().sqrt()
}

fn row_norm(m: MatRef<'_, c64>, i: usize) -> f64 {
    (0..m.ncols()).map(|j| m[(i, j)].norm_sqr()).sum::<f64>().sqrt()
}

/// Largest singular value by power iteration on `M^† M`.
pub fn spectral_norm(m: MatRef<'_, c64>) -> f64 {
    let n = m.ncols();
    let mut v = Col::<c64>::from_fn(n, |i| c64::new(1.0 + (i % 7) as f64 * 0.1, 0.0));
    let mut estimate = 0.0;
    for _ in 0..200 {
        let norm = v.norm_l2();
        if norm == 0.0 {
            return 0.0;
        }
        let inv = 1.0 / norm;
        v = Col::from_fn(n, |i| v[i] * inv);
        let w = m * &v;
        let next = w.norm_l2();
        v = m.adjoint() * &w;
        if (next - estimate).abs() <= 1e-14 * next {
            return next;
        }
        estimate = next;
    }
    estimate
}

impl ResonanceSet {
    /// Assemble from an unordered eigenpair list; sorts, normalizes, and inverts.
    pub fn from_eigenpairs(
        op: MatRef<'_, c64>,
        eigenvalues: &[c64],
        right: MatRef<'_, c64>,
        policy: ConditionPolicy,
    ) -> Result<Self> {
        let n = eigenvalues.len();
        if right.nrows() != n || right.ncols() != n || op.nrows() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: right.ncols(),
            });
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| order_eigenvalues(&eigenvalues[a], &eigenvalues[b]));
        let sorted: Vec<c64> = order.iter().map(|&i| eigenvalues[i]).collect();
        let mut r = Mat::<c64>::zeros(n, n);
        for (dst, &src) in order.iter().enumerate() {
            let norm = col_norm(right, src);
            if norm == 0.0 || !norm.is_finite() {
                return Err(Error::Solver(format!("degenerate eigenvector {src}")));
            }
            for i in 0..n {
                r[(i, dst)] = right[(i, src)] / norm;
            }
        }
        let left = r.partial_piv_lu().inverse();
        let condition = one_norm(r.as_ref()) * one_norm(left.as_ref());
        let rejected = match policy {
            ConditionPolicy::Reject(limit) => condition > limit,
            ConditionPolicy::Report => false,
        };
        if !condition.is_finite() || rejected {
            return Err(Error::Defective { condition });
        }
        let product = op * &r;
        let scale = spectral_norm(op).max(f64::MIN_POSITIVE);
        let residual_max = (0..n)
            .map(|j| {
                (0..n)
                    .map(|i| (product[(i, j)] - sorted[j] * r[(i, j)]).norm_sqr())
                    .sum::<f64>()
                    .sqrt()
                    / scale
            })
            .fold(0.0, f64::max);
        Ok(Self {
            eigenvalues: sorted,
            right: r,
            left,
            condition,
            residual_max,
        })
    }

    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn eigenvalues(&self) -> &[c64] {
        &self.eigenvalues
    }

    /// `λ_j` for 1-based `j`.
    pub fn eigenvalue(&self, j: usize) -> c64 {
        self.eigenvalues[j - 1]
    }

    /// Columns are `|R_j>` (unit norm), in resonance order.
    pub fn right_vectors(&self) -> MatRef<'_, c64> {
        self.right.as_ref()
    }

    /// Row `j - 1` holds the bra `<L_j|`, so `<L_j|R_j> = (left * right)_{jj}`.
    pub fn left_vectors(&self) -> MatRef<'_, c64> {
        self.left.as_ref()
    }

    /// `‖R‖₁ ‖R⁻¹‖₁` of the unit-column right-eigenvector matrix.
    pub fn condition(&self) -> f64 {
        self.condition
    }

    /// `max_j ‖B R_j - λ_j R_j‖₂ / ‖B‖₂`.
    pub fn residual_max(&self) -> f64 {
        self.residual_max
    }

    pub fn spectral_radius(&self) -> f64 {
        self.eigenvalues.first().map_or(0.0, |z| z.norm())
    }

    pub fn moduli(&self) -> Vec<f64> {
        self.eigenvalues.iter().map(|z| z.norm()).collect()
    }

    fn check_index(&self, j: usize) -> Result<()> {
        if j == 0 || j > self.dim() {
            return Err(Error::IndexOutOfRange {
                index: j,
                len: self.dim(),
            });
        }
        Ok(())
    }

    /// `<L_j|R_j>` as stored.
    pub fn overlap(&self, j: usize) -> c64 {
        let n = self.dim();
        (0..n).map(|i| self.left[(j - 1, i)] * self.right[(i, j - 1)]).sum()
    }

    /// `|<L_j|R_j>| / (‖L_j‖ ‖R_j‖)`, the inverse eigenvalue condition number.
    pub fn normalized_overlap(&self, j: usize) -> f64 {
        let denom = row_norm(self.left.as_ref(), j - 1) * col_norm(self.right.as_ref(), j - 1);
        self.overlap(j).norm() / denom
    }

    /// Error if `ĥ_j` is not safely constructible.
    pub fn check_resonance(&self, j: usize) -> Result<()> {
        self.check_index(j)?;
        let overlap = self.normalized_overlap(j);
        if overlap.is_nan() || overlap < NEAR_DEFECTIVE_OVERLAP {
            return Err(Error::NearDefective { index: j, overlap });
        }
        Ok(())
    }

    /// `max |<L_j|R_j'>|` over pairs with `|λ_j - λ_j'| > threshold`.
    pub fn biorthogonality_defect(&self, threshold: f64) -> f64 {
        let gram = &self.left * &self.right;
        let n = self.dim();
        let mut worst = 0.0f64;
        for j in 0..n {
            for jp in 0..n {
                if j != jp && (self.eigenvalues[j] - self.eigenvalues[jp]).norm() > threshold {
                    worst = worst.max(gram[(j, jp)].norm());
                }
            }
        }
        worst
    }

    /// `max_j ‖<L_j| B - λ_j <L_j|‖₂ / (‖B‖₂ ‖L_j‖₂)`.
    pub fn left_residual_max(&self, op: MatRef<'_, c64>) -> f64 {
        self.left_residuals(op, self.dim()).into_iter().fold(0.0, f64::max)
    }

    /// Sharpen the first `count` left vectors by adjoint inverse iteration.
    ///
    /// Rows of `R⁻¹` lose accuracy with the global condition number even when
    /// the individual resonance is well conditioned. Two solves with
    /// `(B - λ_j)^†` per row restore it; each refined row is rescaled to
    /// `<L_j|R_j> = 1`. Rows whose solve breaks down keep their inverse value.
    /// Returns the worst left residual over the refined rows.
    pub fn refine_left(&mut self, op: MatRef<'_, c64>, count: usize) -> f64 {
        use faer::linalg::solvers::Solve;
        use rayon::prelude::*;

        let n = self.dim();
        let count = count.min(n);
        let scale = spectral_norm(op).max(f64::MIN_POSITIVE);
        let rows: Vec<Option<Vec<c64>>> = (0..count)
            .into_par_iter()
            .map(|j| {
                let lambda = self.eigenvalues[j];
                if lambda.norm() <= DEGENERACY_THRESHOLD * scale {
                    return None;
                }
                let shifted = Mat::from_fn(n, n, |a, b| {
                    if a == b { op[(a, b)] - lambda } else { op[(a, b)] }
                });
                let lu = shifted.partial_piv_lu();
                let mut x = Mat::from_fn(n, 1, |i, _| self.left[(j, i)].conj());
                for _ in 0..2 {
                    lu.solve_adjoint_in_place(x.as_mut());
                    let norm = (0..n).map(|i| x[(i, 0)].norm_sqr()).sum::<f64>().sqrt();
                    if !norm.is_finite() || norm == 0.0 {
                        return None;
                    }
                    x = Mat::from_fn(n, 1, |i, _| x[(i, 0)] / norm);
                }
                let bra: Vec<c64> = (0..n).map(|i| x[(i, 0)].conj()).collect();
                let overlap: c64 = (0..n).map(|i| bra[i] * self.right[(i, j)]).sum();
                if overlap.norm() < NEAR_DEFECTIVE_OVERLAP {
                    return None;
                }
                Some(bra.into_iter().map(|z| z / overlap).collect())
            })
            .collect();
        for (j, row) in rows.into_iter().enumerate() {
            if let Some(row) = row {
                for (i, z) in row.into_iter().enumerate() {
                    self.left[(j, i)] = z;
                }
            }
        }
        self.left_residuals(op, count).into_iter().fold(0.0, f64::max)
    }

    /// Relative left residual of each of the first `count` rows.
    pub fn left_residuals(&self, op: MatRef<'_, c64>, count: usize) -> Vec<f64> {
        let n = self.dim();
        let count = count.min(n);
        let product = self.left.subrows(0, count) * op;
        let scale = spectral_norm(op).max(f64::MIN_POSITIVE);
        (0..count)
            .map(|j| {
                let r: f64 = (0..n)
                    .map(|i| (product[(j, i)] - self.eigenvalues[j] * self.left[(j, i)]).norm_sqr())
                    .sum::<f64>()
                    .sqrt();
                r / (scale * row_norm(self.left.as_ref(), j))
            })
            .collect()
    }

    /// Tolerance for identities such as `Q̂_D = I` that degrade with non-normality.
    pub fn conditioning_tolerance(&self) -> f64 {
        (self.dim() as f64 * f64::EPSILON * self.condition * 100.0).max(1e-12)
    }

    /// Columns `j, re_lambda, im_lambda, modulus, gamma` (gamma may be `inf`).
    pub fn write_spectrum_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "j,re_lambda,im_lambda,modulus,gamma")?;
        for (i, (z, g)) in self.eigenvalues.iter().zip(decay_rates(self)).enumerate() {
            let gamma = if g.is_infinite() { "inf".to_string() } else { format!("{g:e}") };
            writeln!(w, "{},{:e},{:e},{:e},{}", i + 1, z.re, z.im, z.norm(), gamma)?;
        }
        Ok(())
    }
}

/// Full eigendecomposition of an open map or a unitary, rejecting condition
/// estimates above [`CONDITION_LIMIT`].
pub fn eigendecompose(op: &ComplexOperator) -> Result<ResonanceSet> {
    eigendecompose_with(op, ConditionPolicy::Reject(CONDITION_LIMIT))
}

pub fn eigendecompose_with(op: &ComplexOperator, policy: ConditionPolicy) -> Result<ResonanceSet> {
    if !matches!(op.tag(), OperatorTag::OpenMap | OperatorTag::Unitary) {
        return Err(Error::InvalidArgument(format!(
            "eigendecomposition expects an open map or unitary, got {:?}",
            op.tag()
        )));
    }
    let evd = op
        .matrix()
        .eigen()
        .map_err(|e| Error::Solver(format!("{e:?}")))?;
    let values: Vec<c64> = evd.S().column_vector().iter().copied().collect();
    ResonanceSet::from_eigenpairs(op.matrix(), &values, evd.U(), policy)
}

/// Eigenvalues alone, in resonance order. Much cheaper than a full
/// decomposition, and enough for modulus histograms.
pub fn eigenvalues(op: &ComplexOperator) -> Result<Vec<c64>> {
    let mut values = op
        .matrix()
        .eigenvalues()
        .map_err(|e| Error::Solver(format!("{e:?}")))?;
    values.sort_by(order_eigenvalues);
    Ok(values)
}

/// `Γ_j = -2 ln|λ_j|`; exact zeros give `+inf`.
pub fn decay_rates(set: &ResonanceSet) -> Vec<f64> {
    set.eigenvalues
        .iter()
        .map(|z| {
            let m = z.norm();
            if m == 0.0 {
                f64::INFINITY
            } else {
                (-2.0 * m.ln()).max(0.0)
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModulusHistogram {
    counts: Vec<usize>,
}

impl ModulusHistogram {
    pub fn bins(&self) -> usize {
        self.counts.len()
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }

    pub fn edges(&self) -> Vec<f64> {
        let n = self.bins();
        (0..=n).map(|i| i as f64 / n as f64).collect()
    }

    /// Index of the most populated bin (lowest on ties).
    pub fn mode(&self) -> usize {
        let max = self.counts.iter().copied().max().unwrap_or(0);
        self.counts.iter().position(|&c| c == max).unwrap_or(0)
    }

    /// Columns `bin_lo, bin_hi, count`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "bin_lo,bin_hi,count")?;
        let edges = self.edges();
        for (i, c) in self.counts.iter().enumerate() {
            writeln!(w, "{},{},{}", edges[i], edges[i + 1], c)?;
        }
        Ok(())
    }
}

/// Uniform histogram of `|λ_j|` over `[0, 1]`; moduli at or above 1 land in the last bin.
pub fn modulus_histogram(set: &ResonanceSet, bins: usize) -> Result<ModulusHistogram> {
    histogram_of_moduli(&set.moduli(), bins)
}

pub fn histogram_of_moduli(moduli: &[f64], bins: usize) -> Result<ModulusHistogram> {
    if bins == 0 {
        return Err(Error::InvalidArgument("need at least one bin".into()));
    }
    let mut counts = vec![0; bins];
    for &m in moduli {
        let bin = ((m * bins as f64).floor().max(0.0) as usize).min(bins - 1);
        counts[bin] += 1;
    }
    Ok(ModulusHistogram { counts })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EigenKind {
    /// `ĥ_j`
    Resonance,
    /// `Q̂_j`
    Cumulative,
}

#[derive(Debug, Clone)]
pub struct EigenOperator {
    operator: ComplexOperator,
    kind: EigenKind,
    index: usize,
}

impl EigenOperator {
    pub fn operator(&self) -> &ComplexOperator {
        &self.operator
    }

    pub fn kind(&self) -> EigenKind {
        self.kind
    }

    pub fn index(&self) -> usize {
        self.index
    }

    pub fn trace(&self) -> c64 {
        self.operator.trace()
    }

    /// `max |(P² - P)_{ij}|`.
    pub fn idempotency_defect(&self) -> f64 {
        let m = self.operator.matrix();
        let sq = m * m;
        let n = self.operator.dim();
        let mut worst = 0.0f64;
        for j in 0..n {
            for i in 0..n {
                worst = worst.max((sq[(i, j)] - m[(i, j)]).norm());
            }
        }
        worst
    }
}

/// `|r><l| / <l|r>` from a ket and a bra given as coefficient slices.
pub fn rank_one_projector(ket: &[c64], bra: &[c64]) -> Result<Mat<c64>> {
    let n = ket.len();
    if bra.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: bra.len(),
        });
    }
    let overlap: c64 = bra.iter().zip(ket).map(|(b, k)| b * k).sum();
    let ket_norm = ket.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    let bra_norm = bra.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    let normalized = overlap.norm() / (ket_norm * bra_norm);
    if normalized.is_nan() || normalized < NEAR_DEFECTIVE_OVERLAP {
        return Err(Error::NearDefective {
            index: 0,
            overlap: normalized,
        });
    }
    let inv = overlap.inv();
    Ok(Mat::from_fn(n, n, |i, j| ket[i] * bra[j] * inv))
}

fn ket(set: &ResonanceSet, j: usize) -> Vec<c64> {
    (0..set.dim()).map(|i| set.right[(i, j - 1)]).collect()
}

fn bra(set: &ResonanceSet, j: usize) -> Vec<c64> {
    (0..set.dim()).map(|i| set.left[(j - 1, i)]).collect()
}

/// `ĥ_j = |R_j><L_j| / <L_j|R_j>` for 1-based `j`.
pub fn resonance_operator(set: &ResonanceSet, j: usize) -> Result<EigenOperator> {
    set.check_resonance(j)?;
    let matrix = rank_one_projector(&ket(set, j), &bra(set, j)).map_err(|e| match e {
        Error::NearDefective { overlap, .. } => Error::NearDefective { index: j, overlap },
        other => other,
    })?;
    Ok(EigenOperator {
        operator: ComplexOperator::new(matrix, OperatorTag::EigenOperator, Basis::Position)?,
        kind: EigenKind::Resonance,
        index: j,
    })
}

/// `Q̂_j = Σ_{j' <= j} ĥ_{j'}`.
pub fn cumulative_projector(set: &ResonanceSet, j: usize) -> Result<EigenOperator> {
    set.check_index(j)?;
    for jp in 1..=j {
        set.check_resonance(jp)?;
    }
    spectral_sum(set, j)
}

/// `Σ_{j' <= j} |R_j'><L_j'|` without the near-defective gate.
///
/// Uses the stored pairing `<L_j|R_j> = 1` instead of dividing by a recomputed
/// overlap: for members of a nearly defective cluster the rows of `L` are huge
/// and the recomputed overlap carries an error that the division would amplify
/// by the row norm. Their terms cancel in the sum, so identities such as
/// `Σ_{j <= D} = I` can still be checked.
pub fn spectral_sum(set: &ResonanceSet, j: usize) -> Result<EigenOperator> {
    set.check_index(j)?;
    let matrix = set.right.as_ref().subcols(0, j) * set.left.as_ref().subrows(0, j);
    Ok(EigenOperator {
        operator: ComplexOperator::new(matrix, OperatorTag::EigenOperator, Basis::Position)?,
        kind: EigenKind::Cumulative,
        index: j,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classical::{Family, OpeningSpec};
    use crate::quantum::{baker_position, open_map};

    fn trace_of(m: MatRef<'_, c64>) -> c64 {
        (0..m.nrows()).map(|i| m[(i, i)]).sum()
    }

    #[test]
    fn unitary_spectrum_on_circle() {
        let set = eigendecompose(&baker_position(3).unwrap()).unwrap();
        assert!(set.moduli().iter().all(|m| (m - 1.0).abs() < 1e-10));
        let hist = modulus_histogram(&set, 100).unwrap();
        assert_eq!(hist.counts()[99], 27);
        assert_eq!(hist.total(), 27);
    }

    #[test]
    fn ordering_and_containment() {
        for family in Family::ALL {
            for k in 1..=4 {
                let op = open_map(&OpeningSpec::new(family, k, 4).unwrap()).unwrap();
                let set = eigendecompose(&op).unwrap();
                let m = set.moduli();
                assert!(m.windows(2).all(|w| w[0] >= w[1]));
                assert!(set.spectral_radius() <= 1.0 + 1e-10);
                assert!(set.residual_max() <= 1e-9, "{family} k={k}: {}", set.residual_max());
                assert!(set.left_residual_max(op.matrix()) <= 1e-9 * set.condition());
            }
        }
    }

    #[test]
    fn values_only_agree_with_decomposition() {
        let op = open_map(&OpeningSpec::new(Family::Shift, 2, 4).unwrap()).unwrap();
        let set = eigendecompose(&op).unwrap();
        let values = eigenvalues(&op).unwrap();
        for z in &values {
            let nearest = set.eigenvalues().iter().map(|w| (w - z).norm()).fold(f64::INFINITY, f64::min);
            assert!(nearest < 1e-9);
        }
        assert!(values.windows(2).all(|w| w[0].norm() >= w[1].norm()));
    }

    #[test]
    fn refinement_sharpens_left_vectors() {
        let op = open_map(&OpeningSpec::new(Family::Shift, 1, 5).unwrap()).unwrap();
        let mut set = eigendecompose_with(&op, ConditionPolicy::Report).unwrap();
        assert!(matches!(
            eigendecompose_with(&op, ConditionPolicy::Reject(1e6)),
            Err(Error::Defective { .. })
        ));
        let worst = set.refine_left(op.matrix(), 32);
        assert!(worst < 1e-12, "{worst}");
        for j in 1..=32 {
            assert!((set.overlap(j) - c64::new(1.0, 0.0)).norm() < 1e-12);
        }
        // refined bras stay biorthogonal to the other right vectors
        let gram = set.left_vectors().subrows(0, 32) * set.right_vectors();
        for j in 0..32 {
            for jp in 0..set.dim() {
                if j != jp && (set.eigenvalue(j + 1) - set.eigenvalue(jp + 1)).norm() > 1e-6 {
                    assert!(gram[(j, jp)].norm() < 1e-8, "{j} {jp}");
                }
            }
        }
    }

    #[test]
    fn trace_identities() {
        for family in Family::ALL {
            for k in 1..=4 {
                let op = open_map(&OpeningSpec::new(family, k, 4).unwrap()).unwrap();
                let set = eigendecompose(&op).unwrap();
                let d = set.dim() as f64;
                let s1: c64 = set.eigenvalues().iter().sum();
                let s2: c64 = set.eigenvalues().iter().map(|z| z * z).sum();
                let b2 = op.matrix() * op.matrix();
                assert!((s1 - op.trace()).norm() <= 1e-8 * d);
                assert!((s2 - trace_of(b2.as_ref())).norm() <= 1e-8 * d);
            }
        }
    }

    #[test]
    fn biorthonormal_pairs() {
        let op = open_map(&OpeningSpec::new(Family::Shift, 2, 4).unwrap()).unwrap();
        let set = eigendecompose(&op).unwrap();
        assert!(set.biorthogonality_defect(DEGENERACY_THRESHOLD) <= 1e-8);
        for j in 1..=set.dim() {
            assert!((set.overlap(j) - c64::new(1.0, 0.0)).norm() < 1e-8);
        }
    }

    #[test]
    fn decay_rate_examples() {
        let z = [
            c64::new(1.0, 0.0),
            c64::new(0.0, (-0.5f64).exp()),
            c64::new(0.0, 0.0),
        ];
        let set = ResonanceSet {
            eigenvalues: z.to_vec(),
            right: Mat::identity(3, 3),
            left: Mat::identity(3, 3),
            condition: 1.0,
            residual_max: 0.0,
        };
        let g = decay_rates(&set);
        assert_eq!(g[0], 0.0);
        assert!((g[1] - 1.0).abs() < 1e-15);
        assert!(g[2].is_infinite());
        let mut out = Vec::new();
        set.write_spectrum_csv(&mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert!(text.lines().nth(3).unwrap().ends_with(",inf"));
    }

    #[test]
    fn histogram_binning() {
        let h = histogram_of_moduli(&[0.0, 0.005, 0.01, 0.5, 0.999, 1.0, 1.0 + 1e-12], 100).unwrap();
        assert_eq!(h.counts()[0], 2);
        assert_eq!(h.counts()[1], 1);
        assert_eq!(h.counts()[50], 1);
        assert_eq!(h.counts()[99], 3);
        assert_eq!(h.total(), 7);
        assert_eq!(h.mode(), 99);
        assert!(histogram_of_moduli(&[0.5], 0).is_err());
        let edges = h.edges();
        assert_eq!(edges.len(), 101);
        assert_eq!((edges[0], edges[100]), (0.0, 1.0));
    }

    #[test]
    fn resonance_operator_properties() {
        let op = open_map(&OpeningSpec::new(Family::Shift, 1, 3).unwrap()).unwrap();
        let set = eigendecompose(&op).unwrap();
        for j in 1..=5 {
            let h = resonance_operator(&set, j).unwrap();
            assert!((h.trace() - c64::new(1.0, 0.0)).norm() < 1e-8);
            assert!(h.idempotency_defect() < 1e-8 * set.condition());
            // B ĥ_j = λ_j ĥ_j
            let bh = op.matrix() * h.operator().matrix();
            let lam = set.eigenvalue(j);
            let mut worst = 0.0f64;
            for c in 0..set.dim() {
                for r in 0..set.dim() {
                    worst = worst.max((bh[(r, c)] - lam * h.operator().matrix()[(r, c)]).norm());
                }
            }
            assert!(worst < 1e-9, "j={j}: {worst}");
        }
        assert!(matches!(resonance_operator(&set, 0), Err(Error::IndexOutOfRange { .. })));
        assert!(matches!(resonance_operator(&set, 28), Err(Error::IndexOutOfRange { .. })));
    }

    #[test]
    fn normalization_independence() {
        let op = open_map(&OpeningSpec::new(Family::Intersection, 2, 3).unwrap()).unwrap();
        let set = eigendecompose(&op).unwrap();
        let r = ket(&set, 1);
        let l = bra(&set, 1);
        let base = rank_one_projector(&r, &l).unwrap();
        let factor = c64::new(0.0, 7.0);
        let scaled: Vec<c64> = r.iter().map(|z| z * factor).collect();
        let other = rank_one_projector(&scaled, &l).unwrap();
        let lscaled: Vec<c64> = l.iter().map(|z| z * c64::new(-0.3, 2.0)).collect();
        let third = rank_one_projector(&r, &lscaled).unwrap();
        for i in 0..set.dim() {
            for j in 0..set.dim() {
                assert!((base[(i, j)] - other[(i, j)]).norm() < 1e-12);
                assert!((base[(i, j)] - third[(i, j)]).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn near_defective_pair_rejected() {
        let ket = [c64::new(1.0, 0.0), c64::new(0.0, 0.0)];
        let bra = [c64::new(1e-13, 0.0), c64::new(1.0, 0.0)];
        match rank_one_projector(&ket, &bra) {
            Err(Error::NearDefective { overlap, .. }) => assert!(overlap < 1e-12),
            other => panic!("expected near-defective error, got {other:?}"),
        }
    }

    #[test]
    fn cumulative_projector_properties() {
        for family in Family::ALL {
            let op = open_map(&OpeningSpec::new(family, 2, 3).unwrap()).unwrap();
            let set = eigendecompose(&op).unwrap();
            let tol = set.conditioning_tolerance();
            for j in [1, 5, 13, 27] {
                let q = cumulative_projector(&set, j).unwrap();
                assert!((q.trace() - c64::new(j as f64, 0.0)).norm() <= 1e-6 * j as f64);
                assert!(q.idempotency_defect() <= tol * 10.0, "{family} j={j}");
            }
            let full = cumulative_projector(&set, 27).unwrap();
            let id = Mat::<c64>::identity(27, 27);
            let mut worst = 0.0f64;
            for c in 0..27 {
                for r in 0..27 {
                    worst = worst.max((full.operator().matrix()[(r, c)] - id[(r, c)]).norm());
                }
            }
            assert!(worst <= tol, "{family}: {worst} vs {tol}");
        }
    }

    #[test]
    fn rejects_projector_input() {
        let p = crate::quantum::qutrit_projector(1, 2).unwrap();
        assert!(eigendecompose(&p).is_err());
    }

    #[test]
    fn spectral_norm_of_unitary() {
        let b = baker_position(3).unwrap();
        assert!((spectral_norm(b.matrix()) - 1.0).abs() < 1e-12);
    }
}
