//! BVS quantization of the tri-baker map and its open families.
//!
//! Indices run over `j = 0..D` with half-integer phases `(j + 1/2)`, so the
//! transforms are anti-periodic. The open maps act in the position basis:
//!
//! * shift: `G_D^† Π_k B_mix Π_k`
//! * intersection: `G_D^† (Π_1 ... Π_k) B_mix (Π_k ... Π_1)`
//!
//! The left projector acts on the momentum output of `B_mix`; it is the same
//! diagonal matrix as the right one.
//!
//! # Binary layout
//!
//! ```text
//! offset  size  field
//! 0       4     magic "TBOP"
//! 4       4     format version, u32 LE (currently 1)
//! 8       8     dimension D, u64 LE
//! 16      1     tag   (0 unitary, 1 projector, 2 open map, 3 eigenoperator, 4 general)
//! 17      1     basis (0 position, 1 mixed)
//! 18      16*D² entries row-major, each (re, im) as f64 LE
//! ```

use std::f64::consts::PI;
use std::io::{Read, Write};

use faer::{c64, Mat, MatRef};
use serde::{Deserialize, Serialize};

use crate::classical::{leading_trits, Family, OpeningSpec};
use crate::error::{Error, Result};

pub const MAGIC: [u8; 4] = *b"TBOP";
pub const FORMAT_VERSION: u32 = 1;
const HEADER_LEN: usize = 18;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OperatorTag {
    Unitary,
    Projector,
    OpenMap,
    EigenOperator,
    General,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Basis {
    Position,
    Mixed,
}

impl OperatorTag {
    fn code(self) -> u8 {
        match self {
            OperatorTag::Unitary => 0,
            OperatorTag::Projector => 1,
            OperatorTag::OpenMap => 2,
            OperatorTag::EigenOperator => 3,
            OperatorTag::General => 4,
        }
    }

    fn from_code(code: u8) -> Result<Self> {
        Ok(match code {
            0 => OperatorTag::Unitary,
            1 => OperatorTag::Projector,
            2 => OperatorTag::OpenMap,
            3 => OperatorTag::EigenOperator,
            4 => OperatorTag::General,
            other => return Err(Error::Format(format!("unknown tag code {other}"))),
        })
    }
}

impl Basis {
    fn code(self) -> u8 {
        match self {
            Basis::Position => 0,
            Basis::Mixed => 1,
        }
    }

    fn from_code(code: u8) -> Result<Self> {
        Ok(match code {
            0 => Basis::Position,
            1 => Basis::Mixed,
            other => return Err(Error::Format(format!("unknown basis code {other}"))),
        })
    }
}

/// Dense `D x D` complex matrix with a semantic tag.
#[derive(Debug, Clone)]
pub struct ComplexOperator {
    matrix: Mat<c64>,
    tag: OperatorTag,
    basis: Basis,
}

impl ComplexOperator {
    pub fn new(matrix: Mat<c64>, tag: OperatorTag, basis: Basis) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() {
            return Err(Error::DimensionMismatch {
                expected: matrix.nrows(),
                found: matrix.ncols(),
            });
        }
        if matrix.nrows() == 0 {
            return Err(Error::InvalidArgument("empty operator".into()));
        }
        Ok(Self { matrix, tag, basis })
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> MatRef<'_, c64> {
        self.matrix.as_ref()
    }

    pub fn into_matrix(self) -> Mat<c64> {
        self.matrix
    }

    pub fn tag(&self) -> OperatorTag {
        self.tag
    }

    pub fn basis(&self) -> Basis {
        self.basis
    }

    pub fn trace(&self) -> c64 {
        (0..self.dim()).map(|i| self.matrix[(i, i)]).sum()
    }

    /// `max |(M^† M - I)_{ij}|`.
    pub fn unitarity_defect(&self) -> f64 {
        let product = self.matrix.adjoint() * &self.matrix;
        let n = self.dim();
        let mut worst = 0.0f64;
        for j in 0..n {
            for i in 0..n {
                let target = if i == j { c64::new(1.0, 0.0) } else { c64::new(0.0, 0.0) };
                worst = worst.max((product[(i, j)] - target).norm());
            }
        }
        worst
    }

    /// `max |(M - M^†)_{ij}|`.
    pub fn hermiticity_defect(&self) -> f64 {
        let n = self.dim();
        let mut worst = 0.0f64;
        for j in 0..n {
            for i in 0..n {
                worst = worst.max((self.matrix[(i, j)] - self.matrix[(j, i)].conj()).norm());
            }
        }
        worst
    }

    /// Diagonal with 0/1 entries (hence idempotent and Hermitian).
    pub fn is_exact_projector(&self) -> bool {
        let n = self.dim();
        (0..n).all(|j| {
            (0..n).all(|i| {
                let z = self.matrix[(i, j)];
                if i == j {
                    z == c64::new(0.0, 0.0) || z == c64::new(1.0, 0.0)
                } else {
                    z == c64::new(0.0, 0.0)
                }
            })
        })
    }

    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        let n = self.dim();
        let mut buf = Vec::with_capacity(HEADER_LEN + 16 * n * n);
        buf.extend_from_slice(&MAGIC);
        buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        buf.extend_from_slice(&(n as u64).to_le_bytes());
        buf.push(self.tag.code());
        buf.push(self.basis.code());
        for i in 0..n {
            for j in 0..n {
                let z = self.matrix[(i, j)];
                buf.extend_from_slice(&z.re.to_le_bytes());
                buf.extend_from_slice(&z.im.to_le_bytes());
            }
        }
        w.write_all(&buf)?;
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Self> {
        let mut header = [0u8; HEADER_LEN];
        r.read_exact(&mut header)
            .map_err(|e| Error::Format(format!("truncated header: {e}")))?;
        if header[..4] != MAGIC {
            return Err(Error::Format("bad magic".into()));
        }
        let version = u32::from_le_bytes(header[4..8].try_into().expect("4 bytes"));
        if version != FORMAT_VERSION {
            return Err(Error::Format(format!("unsupported version {version}")));
        }
        let n = u64::from_le_bytes(header[8..16].try_into().expect("8 bytes")) as usize;
        if n == 0 || n > 1 << 16 {
            return Err(Error::Format(format!("implausible dimension {n}")));
        }
        let tag = OperatorTag::from_code(header[16])?;
        let basis = Basis::from_code(header[17])?;
        let mut body = vec![0u8; 16 * n * n];
        r.read_exact(&mut body)
            .map_err(|e| Error::Format(format!("truncated body: {e}")))?;
        let mut trailing = [0u8; 1];
        if r.read(&mut trailing)? != 0 {
            return Err(Error::Format("trailing bytes after entries".into()));
        }
        let f = |k: usize| f64::from_le_bytes(body[8 * k..8 * k + 8].try_into().expect("8 bytes"));
        let matrix = Mat::from_fn(n, n, |i, j| {
            let k = 2 * (i * n + j);
            c64::new(f(k), f(k + 1))
        });
        Self::new(matrix, tag, basis)
    }
}

/// `l` qutrits; basis index `j` is the big-endian ternary string of position trits.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QutritRegister {
    l: usize,
}

impl QutritRegister {
    /// Largest register for which `3^l` fits comfortably in memory as a dense matrix.
    pub const MAX_QUTRITS: usize = 9;

    pub fn new(l: usize) -> Result<Self> {
        if l == 0 || l > Self::MAX_QUTRITS {
            return Err(Error::InvalidArgument(format!(
                "qutrit count {l} outside 1..={}",
                Self::MAX_QUTRITS
            )));
        }
        Ok(Self { l })
    }

    pub fn qutrits(&self) -> usize {
        self.l
    }

    pub fn dim(&self) -> usize {
        3usize.pow(self.l as u32)
    }

    /// Value of qutrit `i` (1-based, most significant first) in basis state `index`.
    pub fn trit(&self, index: usize, i: usize) -> u8 {
        ((index / 3usize.pow((self.l - i) as u32)) % 3) as u8
    }

    pub fn digits(&self, index: usize) -> impl Iterator<Item = u8> {
        leading_trits(index, self.l)
    }
}

/// `exp(-i 2π (a + 1/2)(b + 1/2) / d)` with the phase reduced exactly in integers.
fn half_integer_phase(a: usize, b: usize, d: usize) -> c64 {
    let period = 4 * d as u128;
    let r = ((2 * a as u128 + 1) * (2 * b as u128 + 1)) % period;
    let theta = -2.0 * PI * r as f64 / period as f64;
    c64::new(theta.cos(), theta.sin())
}

fn fourier_matrix(d: usize) -> Mat<c64> {
    let scale = 1.0 / (d as f64).sqrt();
    Mat::from_fn(d, d, |i, j| half_integer_phase(i, j, d) * scale)
}

/// `(G_D)_{j',j} = D^{-1/2} exp(-i 2π (j' + 1/2)(j + 1/2) / D)`.
pub fn antisymmetric_fourier(d: usize) -> Result<ComplexOperator> {
    if d == 0 {
        return Err(Error::InvalidArgument("dimension must be positive".into()));
    }
    ComplexOperator::new(fourier_matrix(d), OperatorTag::Unitary, Basis::Position)
}

/// `diag(G_{D/3}, G_{D/3}, G_{D/3})`, mapping position input to momentum output.
pub fn baker_mixed(l: usize) -> Result<ComplexOperator> {
    let d = QutritRegister::new(l)?.dim();
    let m = d / 3;
    let block = fourier_matrix(m);
    let matrix = Mat::from_fn(d, d, |i, j| {
        if i / m == j / m {
            block[(i % m, j % m)]
        } else {
            c64::new(0.0, 0.0)
        }
    });
    ComplexOperator::new(matrix, OperatorTag::Unitary, Basis::Mixed)
}

/// `B_pos = G_D^† B_mix`.
pub fn baker_position(l: usize) -> Result<ComplexOperator> {
    let mixed = baker_mixed(l)?;
    let g = fourier_matrix(mixed.dim());
    let matrix = g.adjoint() * mixed.matrix();
    ComplexOperator::new(matrix, OperatorTag::Unitary, Basis::Position)
}

/// Diagonal of `Π_i`: 0 where qutrit `i` equals 1, else 1.
pub fn qutrit_projector_diagonal(i: usize, l: usize) -> Result<Vec<f64>> {
    let reg = QutritRegister::new(l)?;
    if i == 0 || i > l {
        return Err(Error::IndexOutOfRange { index: i, len: l });
    }
    Ok((0..reg.dim())
        .map(|j| if reg.trit(j, i) == 1 { 0.0 } else { 1.0 })
        .collect())
}

fn diagonal_operator(diag: &[f64]) -> Result<ComplexOperator> {
    let n = diag.len();
    let matrix = Mat::from_fn(n, n, |i, j| {
        if i == j {
            c64::new(diag[i], 0.0)
        } else {
            c64::new(0.0, 0.0)
        }
    });
    ComplexOperator::new(matrix, OperatorTag::Projector, Basis::Position)
}

/// `Π_i = I ⊗ ... ⊗ (I - |1><1|) ⊗ ... ⊗ I` on qutrit `i` (1-based).
pub fn qutrit_projector(i: usize, l: usize) -> Result<ComplexOperator> {
    diagonal_operator(&qutrit_projector_diagonal(i, l)?)
}

/// Diagonal of the projector product an opening applies on each side of `B_mix`.
pub fn opening_diagonal(spec: &OpeningSpec) -> Result<Vec<f64>> {
    let l = spec.l();
    let k = spec.k();
    match spec.family() {
        Family::Shift => qutrit_projector_diagonal(k, l),
        Family::Intersection => {
            let mut diag = vec![1.0; QutritRegister::new(l)?.dim()];
            for i in 1..=k {
                for (d, p) in diag.iter_mut().zip(qutrit_projector_diagonal(i, l)?) {
                    *d *= p;
                }
            }
            Ok(diag)
        }
    }
}

/// Open quantum map of the given family member, in the position basis.
pub fn open_map(spec: &OpeningSpec) -> Result<ComplexOperator> {
    let mixed = baker_mixed(spec.l())?;
    let diag = opening_diagonal(spec)?;
    let d = mixed.dim();
    let sandwiched = Mat::from_fn(d, d, |i, j| mixed.matrix()[(i, j)] * (diag[i] * diag[j]));
    let g = fourier_matrix(d);
    let matrix = g.adjoint() * &sandwiched;
    ComplexOperator::new(matrix, OperatorTag::OpenMap, Basis::Position)
}

/// `Π B_mix Π` in the mixed representation (position in, momentum out).
pub fn open_map_mixed(spec: &OpeningSpec) -> Result<ComplexOperator> {
    let mixed = baker_mixed(spec.l())?;
    let diag = opening_diagonal(spec)?;
    let d = mixed.dim();
    let matrix = Mat::from_fn(d, d, |i, j| mixed.matrix()[(i, j)] * (diag[i] * diag[j]));
    ComplexOperator::new(matrix, OperatorTag::OpenMap, Basis::Mixed)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kron(a: MatRef<'_, c64>, b: MatRef<'_, c64>) -> Mat<c64> {
        let (ar, ac) = (a.nrows(), a.ncols());
        let (br, bc) = (b.nrows(), b.ncols());
        Mat::from_fn(ar * br, ac * bc, |i, j| a[(i / br, j / bc)] * b[(i % br, j % bc)])
    }

    fn max_diff(a: MatRef<'_, c64>, b: MatRef<'_, c64>) -> f64 {
        let mut worst = 0.0f64;
        for j in 0..a.ncols() {
            for i in 0..a.nrows() {
                worst = worst.max((a[(i, j)] - b[(i, j)]).norm());
            }
        }
        worst
    }

    #[test]
    fn fourier_d1() {
        let g = antisymmetric_fourier(1).unwrap();
        let z = g.matrix()[(0, 0)];
        assert!((z - c64::new(0.0, -1.0)).norm() < 1e-15);
        assert!(antisymmetric_fourier(0).is_err());
    }

    #[test]
    fn fourier_unitary_and_flat() {
        let g3 = antisymmetric_fourier(3).unwrap();
        assert!(g3.unitarity_defect() <= 1e-14);
        for d in [2, 9, 27, 100, 243] {
            let g = antisymmetric_fourier(d).unwrap();
            assert!(g.unitarity_defect() <= 1e-12, "d={d}");
            let expected = 1.0 / (d as f64).sqrt();
            for i in 0..d {
                for j in 0..d {
                    assert!((g.matrix()[(i, j)].norm() - expected).abs() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn fourier_matches_direct_phase() {
        let d = 27;
        let g = antisymmetric_fourier(d).unwrap();
        for i in 0..d {
            for j in 0..d {
                let theta = -2.0 * PI * (i as f64 + 0.5) * (j as f64 + 0.5) / d as f64;
                let direct = c64::new(theta.cos(), theta.sin()) / (d as f64).sqrt();
                assert!((g.matrix()[(i, j)] - direct).norm() < 1e-13);
            }
        }
    }

    #[test]
    fn baker_mixed_blocks() {
        let b1 = baker_mixed(1).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let expected = if i == j { c64::new(0.0, -1.0) } else { c64::new(0.0, 0.0) };
                assert!((b1.matrix()[(i, j)] - expected).norm() < 1e-15);
            }
        }
        let b2 = baker_mixed(2).unwrap();
        assert!(b2.unitarity_defect() <= 1e-13);
        for i in 0..9 {
            for j in 0..9 {
                if i / 3 != j / 3 {
                    assert_eq!(b2.matrix()[(i, j)], c64::new(0.0, 0.0));
                }
            }
        }
    }

    #[test]
    fn baker_mixed_tensor_cross_check() {
        for l in 1..=4 {
            let d = 3usize.pow(l as u32);
            let identity3 = Mat::<c64>::identity(3, 3);
            let expected = kron(identity3.as_ref(), fourier_matrix(d / 3).as_ref());
            assert!(max_diff(baker_mixed(l).unwrap().matrix(), expected.as_ref()) < 1e-15);
        }
    }

    #[test]
    fn baker_position_unitary() {
        for l in 1..=5 {
            let b = baker_position(l).unwrap();
            assert!(b.unitarity_defect() <= 1e-11, "l={l}");
            assert_eq!(b.basis(), Basis::Position);
        }
    }

    #[test]
    fn projector_examples() {
        let p = qutrit_projector_diagonal(1, 1).unwrap();
        assert_eq!(p, vec![1.0, 0.0, 1.0]);
        let p = qutrit_projector_diagonal(2, 2).unwrap();
        assert_eq!(p, vec![1.0, 0.0, 1.0, 1.0, 0.0, 1.0, 1.0, 0.0, 1.0]);
        assert!(qutrit_projector(0, 2).is_err());
        assert!(qutrit_projector(3, 2).is_err());
    }

    #[test]
    fn projector_algebra() {
        let l = 3;
        for i in 1..=l {
            let pi = qutrit_projector(i, l).unwrap();
            assert!(pi.is_exact_projector());
            let tr = pi.trace();
            assert_eq!(tr, c64::new(2.0 * 3f64.powi(l as i32 - 1), 0.0));
            for j in 1..=l {
                let pj = qutrit_projector(j, l).unwrap();
                let ab = pi.matrix() * pj.matrix();
                let ba = pj.matrix() * pi.matrix();
                assert_eq!(max_diff(ab.as_ref(), ba.as_ref()), 0.0);
            }
            let sq = pi.matrix() * pi.matrix();
            assert_eq!(max_diff(sq.as_ref(), pi.matrix()), 0.0);
        }
    }

    #[test]
    fn projector_tensor_cross_check() {
        let l = 3;
        let pi1 = Mat::from_fn(3, 3, |i, j| {
            if i == j && i != 1 { c64::new(1.0, 0.0) } else { c64::new(0.0, 0.0) }
        });
        let id = Mat::<c64>::identity(3, 3);
        for i in 1..=l {
            let mut acc = Mat::<c64>::identity(1, 1);
            for slot in 1..=l {
                let factor = if slot == i { pi1.as_ref() } else { id.as_ref() };
                acc = kron(acc.as_ref(), factor);
            }
            let pi = qutrit_projector(i, l).unwrap();
            assert_eq!(max_diff(acc.as_ref(), pi.matrix()), 0.0);
        }
    }

    #[test]
    fn opening_traces() {
        let l = 4;
        let d = 81.0;
        for k in 1..=l {
            let s: f64 = opening_diagonal(&OpeningSpec::new(Family::Shift, k, l).unwrap())
                .unwrap()
                .iter()
                .sum();
            assert_eq!(s / d, 2.0 / 3.0);
            let i: f64 = opening_diagonal(&OpeningSpec::new(Family::Intersection, k, l).unwrap())
                .unwrap()
                .iter()
                .sum();
            assert!((i / d - (2.0f64 / 3.0).powi(k as i32)).abs() < 1e-15);
        }
    }

    #[test]
    fn families_coincide_at_k1() {
        for l in 1..=4 {
            let s = open_map(&OpeningSpec::new(Family::Shift, 1, l).unwrap()).unwrap();
            let i = open_map(&OpeningSpec::new(Family::Intersection, 1, l).unwrap()).unwrap();
            assert_eq!(max_diff(s.matrix(), i.matrix()), 0.0);
        }
    }

    #[test]
    fn open_map_is_contraction() {
        for family in Family::ALL {
            for k in 1..=4 {
                let op = open_map(&OpeningSpec::new(family, k, 4).unwrap()).unwrap();
                let sv = op.matrix().singular_values().unwrap();
                assert!(sv[0] <= 1.0 + 1e-12, "{family} k={k}: {}", sv[0]);
            }
        }
    }

    #[test]
    fn intersection_rank_deficit() {
        let l = 5;
        let spec = OpeningSpec::new(Family::Intersection, l, l).unwrap();
        let op = open_map(&spec).unwrap();
        let sv = op.matrix().singular_values().unwrap();
        let rank = sv.iter().filter(|s| **s > 1e-10).count();
        // allowed subspace: every qutrit avoids 1
        assert_eq!(rank, 2usize.pow(l as u32));
        assert!(rank < op.dim());
    }

    #[test]
    fn intersection_rank_strictly_decreases() {
        let l = 4;
        let ranks: Vec<usize> = (1..=l)
            .map(|k| {
                let spec = OpeningSpec::new(Family::Intersection, k, l).unwrap();
                opening_diagonal(&spec).unwrap().iter().filter(|d| **d != 0.0).count()
            })
            .collect();
        assert!(ranks.windows(2).all(|w| w[1] < w[0]), "{ranks:?}");
    }

    #[test]
    fn transpose_trace_identity() {
        // tr((G^† M)^n) == tr((G^† M^T)^n) with M the mixed-representation open map
        let l = 3;
        let d = 27;
        let g = fourier_matrix(d);
        for family in Family::ALL {
            for k in 1..=l {
                let m = open_map_mixed(&OpeningSpec::new(family, k, l).unwrap()).unwrap();
                let a = g.adjoint() * m.matrix();
                let b = g.adjoint() * m.matrix().transpose();
                let mut pa = Mat::<c64>::identity(d, d);
                let mut pb = Mat::<c64>::identity(d, d);
                for n in 1..=4 {
                    pa = &pa * &a;
                    pb = &pb * &b;
                    let ta: c64 = (0..d).map(|i| pa[(i, i)]).sum();
                    let tb: c64 = (0..d).map(|i| pb[(i, i)]).sum();
                    assert!((ta - tb).norm() < 1e-12, "{family} k={k} n={n}");
                }
            }
        }
    }

    #[test]
    fn binary_round_trip() {
        let op = open_map(&OpeningSpec::new(Family::Shift, 2, 2).unwrap()).unwrap();
        let mut bytes = Vec::new();
        op.write_binary(&mut bytes).unwrap();
        assert_eq!(bytes.len(), 18 + 16 * 81);
        assert_eq!(&bytes[..4], b"TBOP");
        assert_eq!(bytes[16], 2);
        assert_eq!(bytes[17], 0);
        let back = ComplexOperator::read_binary(bytes.as_slice()).unwrap();
        assert_eq!(back.tag(), OperatorTag::OpenMap);
        assert_eq!(max_diff(back.matrix(), op.matrix()), 0.0);

        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(ComplexOperator::read_binary(bad.as_slice()).is_err());
        assert!(ComplexOperator::read_binary(&bytes[..100]).is_err());
        let mut long = bytes.clone();
        long.push(0);
        assert!(ComplexOperator::read_binary(long.as_slice()).is_err());
    }

    #[test]
    fn register_digits() {
        let reg = QutritRegister::new(3).unwrap();
        assert_eq!(reg.dim(), 27);
        assert_eq!(reg.digits(14).collect::<Vec<_>>(), vec![1, 1, 2]);
        assert_eq!(reg.trit(14, 3), 2);
        assert!(QutritRegister::new(0).is_err());
    }
}
