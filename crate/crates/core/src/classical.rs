//! Classical open tri-baker maps via ternary digit bookkeeping.
//!
//! A torus point is written as the bi-infinite trit string
//! `... e_{-2} e_{-1} . e_0 e_1 ...` with `q = 0.e_0 e_1 ...` and
//! `p = 0.e_{-1} e_{-2} ...` (base 3). The closed map moves the dot one
//! place to the right. Openings forbid the value 1 in selected trits.

use std::io::Write;
use std::ops::RangeInclusive;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::PhaseGrid;

/// Largest number of trits the exact area bookkeeping will track.
pub const MAX_RESOLUTION: usize = 1024;

const MC_CHUNK: u64 = 1 << 16;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TorusPoint {
    q: f64,
    p: f64,
}

fn reduce_unit(x: f64) -> f64 {
    let r = x.rem_euclid(1.0);
    if r >= 1.0 {
        0.0
    } else {
        r
    }
}

impl TorusPoint {
    pub fn new(q: f64, p: f64) -> Self {
        Self {
            q: reduce_unit(q),
            p: reduce_unit(p),
        }
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn p(&self) -> f64 {
        self.p
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Backward,
}

/// One step of the closed tri-baker map `(q, p) -> (3q - [3q], (p + [3q]) / 3)` or its inverse.
pub fn closed_baker_step(point: TorusPoint, direction: Direction) -> TorusPoint {
    match direction {
        Direction::Forward => {
            let x = 3.0 * point.q;
            let digit = x.floor().clamp(0.0, 2.0);
            TorusPoint::new(x - digit, (point.p + digit) / 3.0)
        }
        Direction::Backward => {
            let y = 3.0 * point.p;
            let digit = y.floor().clamp(0.0, 2.0);
            TorusPoint::new((point.q + digit) / 3.0, y - digit)
        }
    }
}

/// Finite ternary encoding of a torus point: `q_trits[i] = e_i`, `p_trits[m] = e_{-(m+1)}`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TritWord {
    q_trits: Vec<u8>,
    p_trits: Vec<u8>,
}

impl TritWord {
    pub fn new(q_trits: Vec<u8>, p_trits: Vec<u8>) -> Result<Self> {
        if q_trits.is_empty() || q_trits.len() != p_trits.len() {
            return Err(Error::InvalidArgument(format!(
                "trit words need equal non-zero lengths, got {} and {}",
                q_trits.len(),
                p_trits.len()
            )));
        }
        if let Some(t) = q_trits.iter().chain(&p_trits).find(|t| **t > 2) {
            return Err(Error::InvalidArgument(format!("{t} is not a trit")));
        }
        Ok(Self { q_trits, p_trits })
    }

    pub fn zeros(len: usize) -> Result<Self> {
        Self::new(vec![0; len], vec![0; len])
    }

    /// Leading `len` trits of each coordinate.
    pub fn encode(point: TorusPoint, len: usize) -> Result<Self> {
        fn digits(mut x: f64, len: usize) -> Vec<u8> {
            (0..len)
                .map(|_| {
                    x *= 3.0;
                    let d = x.floor().clamp(0.0, 2.0);
                    x -= d;
                    d as u8
                })
                .collect()
        }
        Self::new(digits(point.q, len), digits(point.p, len))
    }

    /// Lower-left corner of the cell the word names.
    pub fn decode(&self) -> TorusPoint {
        fn value(trits: &[u8]) -> f64 {
            trits
                .iter()
                .rev()
                .fold(0.0, |acc, &t| (acc + f64::from(t)) / 3.0)
        }
        TorusPoint::new(value(&self.q_trits), value(&self.p_trits))
    }

    pub fn len(&self) -> usize {
        self.q_trits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.q_trits.is_empty()
    }

    pub fn q_trits(&self) -> &[u8] {
        &self.q_trits
    }

    pub fn p_trits(&self) -> &[u8] {
        &self.p_trits
    }

    /// Trit `e_index` for `index >= 0` (position) or `index <= -1` (momentum).
    pub fn trit(&self, index: isize) -> Option<u8> {
        if index >= 0 {
            self.q_trits.get(index as usize).copied()
        } else {
            self.p_trits.get((-index - 1) as usize).copied()
        }
    }

    /// Bernoulli shift; `filler` becomes the least significant position trit.
    pub fn shift(&self, filler: u8) -> Result<Self> {
        if filler > 2 {
            return Err(Error::InvalidArgument(format!("{filler} is not a trit")));
        }
        let len = self.len();
        let mut p = Vec::with_capacity(len);
        p.push(self.q_trits[0]);
        p.extend_from_slice(&self.p_trits[..len - 1]);
        let mut q = Vec::with_capacity(len);
        q.extend_from_slice(&self.q_trits[1..]);
        q.push(filler);
        Ok(Self {
            q_trits: q,
            p_trits: p,
        })
    }
}

/// Shift with the default filler trit 0.
pub fn shift_step(word: &TritWord) -> TritWord {
    word.shift(0).expect("0 is a trit")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Shift,
    Intersection,
}

impl Family {
    pub const ALL: [Family; 2] = [Family::Shift, Family::Intersection];

    pub fn name(self) -> &'static str {
        match self {
            Family::Shift => "shift",
            Family::Intersection => "intersection",
        }
    }
}

impl std::fmt::Display for Family {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "shift" => Ok(Family::Shift),
            "intersection" => Ok(Family::Intersection),
            other => Err(Error::InvalidArgument(format!("unknown family {other:?}"))),
        }
    }
}

/// Which trits (and qutrits) a family member opens.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct OpeningSpec {
    family: Family,
    k: usize,
    l: usize,
}

impl OpeningSpec {
    pub fn new(family: Family, k: usize, l: usize) -> Result<Self> {
        if k == 0 || k > l {
            return Err(Error::InvalidOpening { k, l });
        }
        Ok(Self { family, k, l })
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn l(&self) -> usize {
        self.l
    }

    /// Position trit indices `i` (trit `e_i`) that must differ from 1.
    pub fn open_q_trits(&self) -> RangeInclusive<usize> {
        match self.family {
            Family::Shift => self.k - 1..=self.k - 1,
            Family::Intersection => 0..=self.k - 1,
        }
    }

    /// Momentum trit depths `m` (trit `e_{-m}`) that must differ from 1.
    pub fn open_p_trits(&self) -> RangeInclusive<usize> {
        match self.family {
            Family::Shift => self.k..=self.k,
            Family::Intersection => 1..=self.k,
        }
    }
}

pub fn is_allowed(word: &TritWord, spec: &OpeningSpec) -> Result<bool> {
    if word.len() < spec.k {
        return Err(Error::InsufficientResolution {
            len: word.len(),
            needed: spec.k,
        });
    }
    let q_ok = spec.open_q_trits().all(|i| word.q_trits[i] != 1);
    let p_ok = spec.open_p_trits().all(|m| word.p_trits[m - 1] != 1);
    Ok(q_ok && p_ok)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StepOutcome {
    Survived(TritWord),
    Escaped,
}

/// One closed-map step followed by escape of everything outside the opening.
pub fn open_map_step(word: &TritWord, spec: &OpeningSpec) -> Result<StepOutcome> {
    let next = shift_step(word);
    if is_allowed(&next, spec)? {
        Ok(StepOutcome::Survived(next))
    } else {
        Ok(StepOutcome::Escaped)
    }
}

/// Survival fractions `A_t`, `t = 1..=T`, stored at `areas[t - 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AreaSequence {
    areas: Vec<f64>,
    exponents: Option<Vec<u32>>,
    samples: Option<u64>,
}

impl AreaSequence {
    pub fn from_areas(areas: Vec<f64>) -> Result<Self> {
        if let Some(a) = areas.iter().find(|a| !(0.0..=1.0).contains(*a)) {
            return Err(Error::InvalidArgument(format!("area {a} outside [0, 1]")));
        }
        Ok(Self {
            areas,
            exponents: None,
            samples: None,
        })
    }

    pub fn areas(&self) -> &[f64] {
        &self.areas
    }

    pub fn len(&self) -> usize {
        self.areas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.areas.is_empty()
    }

    /// `A_t` for 1-based `t`.
    pub fn area(&self, t: usize) -> f64 {
        self.areas[t - 1]
    }

    /// Exact sequences only: `A_t = (2/3)^exponent(t)`.
    pub fn exponent(&self, t: usize) -> Option<u32> {
        self.exponents.as_ref().map(|e| e[t - 1])
    }

    pub fn exponents(&self) -> Option<&[u32]> {
        self.exponents.as_deref()
    }

    /// Monte-Carlo sample count, when the sequence was sampled.
    pub fn samples(&self) -> Option<u64> {
        self.samples
    }

    /// Columns `t, area, log_area`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "t,area,log_area")?;
        for (i, a) in self.areas.iter().enumerate() {
            writeln!(w, "{},{:e},{:e}", i + 1, a, a.ln())?;
        }
        Ok(())
    }
}

/// Number of distinct trits constrained after each of `steps` open-map iterations.
///
/// Works in initial-time coordinates: after `t` shifts position trit `e_i`
/// is the initial `e_{i+t}` and momentum trit `e_{-m}` is the initial `e_{t-m}`.
pub fn constrained_trit_counts(spec: &OpeningSpec, steps: usize) -> Result<Vec<u32>> {
    if steps == 0 {
        return Err(Error::InvalidArgument("need at least one step".into()));
    }
    let needed = steps + 2 * spec.k;
    if needed > MAX_RESOLUTION {
        return Err(Error::ResolutionExceeded {
            needed,
            max: MAX_RESOLUTION,
        });
    }
    // initial indices span 1 - k ..= steps + k - 1
    let offset = spec.k as isize;
    let mut seen = vec![false; needed];
    let mut count = 0u32;
    let mut mark = |index: isize, count: &mut u32| {
        let slot = &mut seen[(index + offset) as usize];
        if !*slot {
            *slot = true;
            *count += 1;
        }
    };
    let mut counts = Vec::with_capacity(steps);
    for t in 1..=steps as isize {
        for i in spec.open_q_trits() {
            mark(i as isize + t, &mut count);
        }
        for m in spec.open_p_trits() {
            mark(t - m as isize, &mut count);
        }
        counts.push(count);
    }
    Ok(counts)
}

/// Exact survival areas from the full torus, `A_t = (2/3)^{#constrained trits}`.
pub fn allowed_area_sequence(spec: &OpeningSpec, steps: usize) -> Result<AreaSequence> {
    let exponents = constrained_trit_counts(spec, steps)?;
    let areas = exponents
        .iter()
        .map(|&n| (2.0f64 / 3.0).powi(n as i32))
        .collect();
    Ok(AreaSequence {
        areas,
        exponents: Some(exponents),
        samples: None,
    })
}

/// Least-squares slope of `-ln A_t` against `t` over the last `tail` entries.
pub fn escape_rate(areas: &AreaSequence, tail: usize) -> Result<f64> {
    let n = areas.len();
    if tail < 2 || n <= tail {
        return Err(Error::InvalidArgument(format!(
            "tail window {tail} needs 2 <= tail < {n}"
        )));
    }
    let start = n - tail;
    let mut points = Vec::with_capacity(tail);
    for (i, &a) in areas.areas.iter().enumerate().skip(start) {
        if a <= 0.0 {
            return Err(Error::NonPositiveArea { t: i + 1, area: a });
        }
        points.push(((i + 1) as f64, -a.ln()));
    }
    let m = tail as f64;
    let mean_t = points.iter().map(|p| p.0).sum::<f64>() / m;
    let mean_y = points.iter().map(|p| p.1).sum::<f64>() / m;
    let (num, den) = points.iter().fold((0.0, 0.0), |(num, den), &(t, y)| {
        (num + (t - mean_t) * (y - mean_y), den + (t - mean_t).powi(2))
    });
    Ok(num / den)
}

/// Standard error of a sampled survival fraction.
pub fn monte_carlo_sigma(area: f64, samples: u64) -> f64 {
    (area * (1.0 - area) / samples as f64).sqrt()
}

fn q_trit(q: f64, index: usize) -> u8 {
    ((q * 3f64.powi(index as i32 + 1)).floor() as u64 % 3) as u8
}

fn p_trit(p: f64, depth: usize) -> u8 {
    ((p * 3f64.powi(depth as i32)).floor() as u64 % 3) as u8
}

/// Opening test on real coordinates.
pub fn point_is_allowed(point: TorusPoint, spec: &OpeningSpec) -> bool {
    spec.open_q_trits().all(|i| q_trit(point.q, i) != 1)
        && spec.open_p_trits().all(|m| p_trit(point.p, m) != 1)
}

/// Sampled survival fractions using real-coordinate iteration.
///
/// Samples are drawn in fixed chunks, each from its own ChaCha stream of `seed`,
/// so the result does not depend on the number of worker threads.
pub fn monte_carlo_area(
    spec: &OpeningSpec,
    steps: usize,
    samples: u64,
    seed: u64,
) -> Result<AreaSequence> {
    if samples == 0 || steps == 0 {
        return Err(Error::InvalidArgument(
            "need at least one sample and one step".into(),
        ));
    }
    let chunks = samples.div_ceil(MC_CHUNK);
    let survivors = (0..chunks)
        .into_par_iter()
        .map(|chunk| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(chunk);
            let n = MC_CHUNK.min(samples - chunk * MC_CHUNK);
            let mut alive = vec![0u64; steps];
            for _ in 0..n {
                let mut point = TorusPoint::new(rng.random::<f64>(), rng.random::<f64>());
                for slot in alive.iter_mut() {
                    point = closed_baker_step(point, Direction::Forward);
                    if !point_is_allowed(point, spec) {
                        break;
                    }
                    *slot += 1;
                }
            }
            alive
        })
        .reduce(
            || vec![0u64; steps],
            |mut a, b| {
                a.iter_mut().zip(&b).for_each(|(x, y)| *x += y);
                a
            },
        );
    let areas = survivors
        .iter()
        .map(|&s| s as f64 / samples as f64)
        .collect();
    Ok(AreaSequence {
        areas,
        exponents: None,
        samples: Some(samples),
    })
}

/// 0/1 indicator of the finite-time repeller `K_l` on a `dim x dim` grid with
/// half-integer offsets: both coordinates keep their leading `l` trits away from 1.
pub fn finite_time_repeller_mask(l: usize, dim: usize) -> Result<PhaseGrid> {
    let power = power_of_three(dim).ok_or(Error::NotPowerOfThree(dim))?;
    if l == 0 || l > power {
        return Err(Error::InvalidArgument(format!(
            "a {dim}-point grid resolves at most {power} trits, asked for {l}"
        )));
    }
    let allowed: Vec<bool> = (0..dim)
        .map(|j| leading_trits(j, power).take(l).all(|t| t != 1))
        .collect();
    PhaseGrid::from_fn(dim, |a, b| {
        if allowed[a] && allowed[b] {
            1.0
        } else {
            0.0
        }
    })
}

/// `Some(m)` when `n == 3^m`.
pub fn power_of_three(n: usize) -> Option<usize> {
    if n == 0 {
        return None;
    }
    let mut m = 0;
    let mut x = n;
    while x.is_multiple_of(3) {
        x /= 3;
        m += 1;
    }
    (x == 1).then_some(m)
}

/// Big-endian ternary digits of `index` padded to `width`.
pub fn leading_trits(index: usize, width: usize) -> impl Iterator<Item = u8> {
    (0..width).map(move |i| ((index / 3usize.pow((width - 1 - i) as u32)) % 3) as u8)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn word(q: &[u8], p: &[u8]) -> TritWord {
        TritWord::new(q.to_vec(), p.to_vec()).unwrap()
    }

    #[test]
    fn closed_step_examples() {
        let fixed = closed_baker_step(TorusPoint::new(0.0, 0.0), Direction::Forward);
        assert_eq!((fixed.q(), fixed.p()), (0.0, 0.0));
        let half = closed_baker_step(TorusPoint::new(0.5, 0.5), Direction::Forward);
        assert!((half.q() - 0.5).abs() < 1e-15 && (half.p() - 0.5).abs() < 1e-15);
        // 3 * 2/3 = 2 -> q' = 0, p' = (0 + 2) / 3
        let third = closed_baker_step(TorusPoint::new(2.0 / 3.0, 0.0), Direction::Forward);
        assert!(third.q().abs() < 1e-15);
        assert!((third.p() - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn torus_point_reduces() {
        let p = TorusPoint::new(1.25, -0.25);
        assert_eq!((p.q(), p.p()), (0.25, 0.75));
        assert_eq!(TorusPoint::new(-1e-18, 0.0).q(), 0.0);
    }

    #[test]
    fn shift_examples() {
        let zero = shift_step(&word(&[0, 0], &[0, 0]));
        assert_eq!(zero, word(&[0, 0], &[0, 0]));
        let w = shift_step(&word(&[2, 1], &[0, 2]));
        assert_eq!(w.q_trits()[0], 1);
        assert_eq!(w.p_trits(), &[2, 0]);
        let single = shift_step(&word(&[1], &[2]));
        assert_eq!(single.p_trits(), &[1]);
        let filled = word(&[2, 1], &[0, 2]).shift(2).unwrap();
        assert_eq!(filled.q_trits(), &[1, 2]);
        assert!(word(&[0], &[0]).shift(3).is_err());
    }

    #[test]
    fn word_validation() {
        assert!(TritWord::new(vec![0, 3], vec![0, 0]).is_err());
        assert!(TritWord::new(vec![0], vec![0, 0]).is_err());
        assert!(TritWord::new(vec![], vec![]).is_err());
        let w = word(&[2, 1], &[0, 2]);
        assert_eq!(w.trit(1), Some(1));
        assert_eq!(w.trit(-2), Some(2));
        assert_eq!(w.trit(2), None);
    }

    #[test]
    fn allowed_examples() {
        let shift1 = OpeningSpec::new(Family::Shift, 1, 3).unwrap();
        assert!(!is_allowed(&word(&[1, 0, 0], &[0, 0, 0]), &shift1).unwrap());

        let shift2 = OpeningSpec::new(Family::Shift, 2, 3).unwrap();
        // e_0 = 1 is not inspected at k = 2
        assert!(is_allowed(&word(&[1, 0, 0], &[0, 2, 0]), &shift2).unwrap());

        let inter2 = OpeningSpec::new(Family::Intersection, 2, 3).unwrap();
        assert!(!is_allowed(&word(&[0, 2, 0], &[0, 1, 0]), &inter2).unwrap());

        let err = is_allowed(&word(&[0], &[0]), &shift2).unwrap_err();
        assert!(matches!(err, Error::InsufficientResolution { len: 1, needed: 2 }));
    }

    #[test]
    fn opening_bounds() {
        assert!(OpeningSpec::new(Family::Shift, 0, 3).is_err());
        assert!(OpeningSpec::new(Family::Intersection, 4, 3).is_err());
    }

    #[test]
    fn open_step_examples() {
        for family in Family::ALL {
            for k in 1..=3 {
                let spec = OpeningSpec::new(family, k, 4).unwrap();
                let out = open_map_step(&TritWord::zeros(4).unwrap(), &spec).unwrap();
                assert_eq!(out, StepOutcome::Survived(TritWord::zeros(4).unwrap()));
            }
        }
        let shift1 = OpeningSpec::new(Family::Shift, 1, 3).unwrap();
        let out = open_map_step(&word(&[1, 0, 0], &[0, 0, 0]), &shift1).unwrap();
        assert_eq!(out, StepOutcome::Escaped);
    }

    #[test]
    fn open_step_k1_decided_by_leading_position_trit() {
        // at k = 1 the post-map e_{-1} is the pre-map e_0 and the post-map e_0 is
        // the pre-map e_1, so survival is fixed by those two trits alone
        let spec = OpeningSpec::new(Family::Shift, 1, 3).unwrap();
        for e0 in 0..3u8 {
            for e1 in 0..3u8 {
                for rest in 0..3u8 {
                    let w = word(&[e0, e1, rest], &[rest, rest, rest]);
                    let survived = matches!(open_map_step(&w, &spec).unwrap(), StepOutcome::Survived(_));
                    assert_eq!(survived, e0 != 1 && e1 != 1);
                }
            }
        }
    }

    #[test]
    fn shift_k1_area_law() {
        let spec = OpeningSpec::new(Family::Shift, 1, 1).unwrap();
        let areas = allowed_area_sequence(&spec, 12).unwrap();
        for t in 1..=12 {
            assert_eq!(areas.exponent(t), Some(t as u32 + 1));
        }
    }

    #[test]
    fn intersection_first_step() {
        for k in 1..=6 {
            let spec = OpeningSpec::new(Family::Intersection, k, 7).unwrap();
            let areas = allowed_area_sequence(&spec, 10).unwrap();
            assert_eq!(areas.exponent(1), Some(2 * k as u32));
            for t in 2..=10 {
                assert_eq!(areas.exponent(t), Some(2 * k as u32 + t as u32 - 1));
            }
        }
    }

    #[test]
    fn shift_transient_two_trits_per_step() {
        // brute force: enumerate constrained trits as explicit (coordinate, index) pairs
        for k in 1..=5usize {
            let spec = OpeningSpec::new(Family::Shift, k, 5).unwrap();
            let counts = constrained_trit_counts(&spec, 4 * k + 3).unwrap();
            let mut prev = 0;
            for (i, &c) in counts.iter().enumerate() {
                let t = i + 1;
                let step = c - prev;
                let expected = if t < 2 * k { 2 } else { 1 };
                assert_eq!(step, expected, "k={k} t={t}");
                prev = c;
            }
        }
    }

    #[test]
    fn area_ratios_restricted() {
        for family in Family::ALL {
            for k in 1..=5 {
                let spec = OpeningSpec::new(family, k, 5).unwrap();
                let e = constrained_trit_counts(&spec, 25).unwrap();
                for w in e.windows(2) {
                    let d = w[1] - w[0];
                    assert!(d == 1 || d == 2 || d == 2 * k as u32);
                }
            }
        }
    }

    #[test]
    fn resolution_limit() {
        let spec = OpeningSpec::new(Family::Shift, 2, 2).unwrap();
        assert!(matches!(
            allowed_area_sequence(&spec, MAX_RESOLUTION),
            Err(Error::ResolutionExceeded { .. })
        ));
        assert!(allowed_area_sequence(&spec, 0).is_err());
    }

    #[test]
    fn escape_rate_examples() {
        let geometric =
            AreaSequence::from_areas((1..=10).map(|t| (2.0f64 / 3.0).powi(t)).collect()).unwrap();
        assert!((escape_rate(&geometric, 4).unwrap() - 1.5f64.ln()).abs() < 1e-12);
        for family in Family::ALL {
            let spec = OpeningSpec::new(family, 3, 5).unwrap();
            let areas = allowed_area_sequence(&spec, 20).unwrap();
            assert!((escape_rate(&areas, 5).unwrap() - 1.5f64.ln()).abs() < 1e-12);
        }
    }

    #[test]
    fn escape_rate_errors() {
        let a = AreaSequence::from_areas(vec![0.5, 0.25, 0.0]).unwrap();
        assert!(matches!(escape_rate(&a, 2), Err(Error::NonPositiveArea { t: 3, .. })));
        assert!(escape_rate(&a, 1).is_err());
        assert!(escape_rate(&a, 3).is_err());
    }

    #[test]
    fn monte_carlo_single_sample() {
        let spec = OpeningSpec::new(Family::Shift, 2, 3).unwrap();
        let mc = monte_carlo_area(&spec, 6, 1, 11).unwrap();
        assert!(mc.areas().iter().all(|a| *a == 0.0 || *a == 1.0));
    }

    #[test]
    fn monte_carlo_first_step() {
        let n = 1_000_000;
        let cases = [(Family::Shift, 1, 4.0 / 9.0), (Family::Intersection, 2, 16.0 / 81.0)];
        for (family, k, exact) in cases {
            let spec = OpeningSpec::new(family, k, 3).unwrap();
            let mc = monte_carlo_area(&spec, 1, n, 2024).unwrap();
            let sigma = monte_carlo_sigma(exact, n);
            assert!((mc.area(1) - exact).abs() <= 3.0 * sigma, "{family} k={k}");
        }
    }

    #[test]
    fn monte_carlo_deterministic() {
        let spec = OpeningSpec::new(Family::Intersection, 2, 3).unwrap();
        let a = monte_carlo_area(&spec, 5, 200_000, 9).unwrap();
        let b = monte_carlo_area(&spec, 5, 200_000, 9).unwrap();
        assert_eq!(a, b);
        let c = monte_carlo_area(&spec, 5, 200_000, 10).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn repeller_mask_counts() {
        let m1 = finite_time_repeller_mask(1, 3).unwrap();
        assert_eq!(m1.count_nonzero(), 4);
        let m2 = finite_time_repeller_mask(2, 9).unwrap();
        assert_eq!(m2.count_nonzero(), 16);
        for l in 1..=5 {
            let m = finite_time_repeller_mask(l, 3usize.pow(l as u32)).unwrap();
            assert_eq!(m.count_nonzero(), 4usize.pow(l as u32));
            assert_eq!(m, m.transposed());
        }
        assert!(matches!(finite_time_repeller_mask(2, 10), Err(Error::NotPowerOfThree(10))));
    }

    #[test]
    fn repeller_mask_matches_orbit_test() {
        // points kept in V_1 (e_{-1} != 1) for l forward and l backward steps
        let l = 3;
        let d = 27;
        let mask = finite_time_repeller_mask(l, d).unwrap();
        let in_v1 = |pt: TorusPoint| p_trit(pt.p(), 1) != 1;
        for a in 0..d {
            for b in 0..d {
                let start = TorusPoint::new(mask.center(a), mask.center(b));
                let mut fwd = start;
                let mut bwd = start;
                let mut inside = in_v1(start);
                for s in 0..l {
                    fwd = closed_baker_step(fwd, Direction::Forward);
                    inside &= in_v1(fwd);
                    if s + 1 < l {
                        bwd = closed_baker_step(bwd, Direction::Backward);
                        inside &= in_v1(bwd);
                    }
                }
                assert_eq!(inside, mask.get(a, b) == 1.0, "cell ({a},{b})");
            }
        }
    }

    #[test]
    fn lyapunov_stretching() {
        let delta = 1e-9;
        let a = TorusPoint::new(0.1234, 0.42);
        let b = TorusPoint::new(0.1234 + delta, 0.42);
        let fa = closed_baker_step(a, Direction::Forward);
        let fb = closed_baker_step(b, Direction::Forward);
        assert!(((fb.q() - fa.q()) / delta - 3.0).abs() < 1e-5);
        assert!(((fb.p() - fa.p()).abs()) < 1e-15);
    }

    #[test]
    fn powers_of_three() {
        assert_eq!(power_of_three(1), Some(0));
        assert_eq!(power_of_three(243), Some(5));
        assert_eq!(power_of_three(0), None);
        assert_eq!(power_of_three(12), None);
        assert_eq!(leading_trits(5, 3).collect::<Vec<_>>(), vec![0, 1, 2]);
    }

    #[test]
    fn area_csv() {
        let spec = OpeningSpec::new(Family::Shift, 1, 1).unwrap();
        let mut out = Vec::new();
        allowed_area_sequence(&spec, 2).unwrap().write_csv(&mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines[0], "t,area,log_area");
        assert!(lines[1].starts_with("1,4.444444444444444e-1,"));
    }

    proptest! {
        #[test]
        fn backward_inverts_forward(q in 0.0f64..1.0, p in 0.0f64..1.0) {
            let pt = TorusPoint::new(q, p);
            let back = closed_baker_step(closed_baker_step(pt, Direction::Forward), Direction::Backward);
            let dq = (back.q() - q).abs();
            let dp = (back.p() - p).abs();
            prop_assert!(dq.min(1.0 - dq) < 1e-12 && dp.min(1.0 - dp) < 1e-12);
        }

        #[test]
        fn encode_decode_resolution(q in 0.0f64..1.0, p in 0.0f64..1.0, l in 1usize..12) {
            let pt = TorusPoint::new(q, p);
            let back = TritWord::encode(pt, l).unwrap().decode();
            let tol = 3f64.powi(-(l as i32)) + 1e-12;
            prop_assert!((back.q() - q).abs() <= tol && (back.p() - p).abs() <= tol);
        }

        #[test]
        fn shift_matches_closed_map(q in prop::collection::vec(0u8..3, 1..10), seed in any::<u64>()) {
            let l = q.len();
            let p: Vec<u8> = (0..l).map(|i| ((seed >> (2 * i)) % 3) as u8).collect();
            let w = TritWord::new(q, p).unwrap();
            let via_map = closed_baker_step(w.decode(), Direction::Forward);
            let via_word = shift_step(&w).decode();
            let tol = 3f64.powi(-(l as i32 - 1)) + 1e-12;
            prop_assert!((via_map.q() - via_word.q()).abs() <= tol);
            prop_assert!((via_map.p() - via_word.p()).abs() <= tol);
        }
    }
}
