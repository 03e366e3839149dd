//! Constellations with bit labelings, shaped source distributions,
//! constant-composition distribution matching, shaping rate algebra, and
//! achievable-information-rate estimators for additive-Gaussian and
//! residual-phase-noise channels.

use crate::util::{db_to_lin, gauss_hermite, golden_section_min, rng_stream};
use num_bigint::BigUint;
use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;

/// Errors reported by shaping-layer constructors and codecs.
#[derive(Debug, Clone, PartialEq)]
pub enum ShapingError {
    /// Requested source entropy cannot be met on the given alphabet.
    EntropyUnreachable { target_bits: f64, max_bits: f64 },
    /// FEC rate below the minimum admissible for sign-bit amplitude shaping.
    FecRateTooLow { r_fec: f64, minimum: f64 },
    /// Encoder input does not match the block's information capacity.
    BitCountMismatch { expected: usize, got: usize },
    /// Sequence cannot be decoded (wrong symbol counts or unused codeword).
    InvalidCodeword(String),
}

impl std::fmt::Display for ShapingError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ShapingError::EntropyUnreachable { target_bits, max_bits } => write!(
                f,
                "target entropy {target_bits} bits unreachable (alphabet max {max_bits} bits)"
            ),
            ShapingError::FecRateTooLow { r_fec, minimum } => {
                write!(f, "FEC rate {r_fec} below the shaping minimum {minimum}")
            }
            ShapingError::BitCountMismatch { expected, got } => {
                write!(f, "expected {expected} input bits, got {got}")
            }
            ShapingError::InvalidCodeword(msg) => write!(f, "invalid codeword: {msg}"),
        }
    }
}

impl std::error::Error for ShapingError {}

// ---------------------------------------------------------------------------
// Labeled constellations
// ---------------------------------------------------------------------------

/// A complex signal constellation with per-point probabilities and a binary
/// labeling. Builders normalize points to unit mean power under the stored
/// probabilities.
#[derive(Debug, Clone)]
pub struct LabeledConstellation {
    /// Constellation points.
    pub points: Vec<Complex64>,
    /// Per-point prior probabilities (non-negative, summing to one).
    pub probabilities: Vec<f64>,
    /// Per-point bit labels; bit `i` of a label is `(label >> (m-1-i)) & 1`
    /// where `m = bits_per_symbol`, i.e. bit 0 is the most significant.
    pub labels: Vec<u32>,
    /// Number of bits carried per symbol, `log2(points.len())`.
    pub bits_per_symbol: u32,
}

impl LabeledConstellation {
    /// Builds a constellation from raw parts. Points are stored as given;
    /// call [`LabeledConstellation::normalized`] for unit mean power.
    pub fn new(points: Vec<Complex64>, probabilities: Vec<f64>, labels: Vec<u32>) -> Self {
        let n = points.len();
        assert!(n.is_power_of_two() && n >= 2, "point count must be a power of two");
        assert_eq!(probabilities.len(), n);
        assert_eq!(labels.len(), n);
        let m = n.trailing_zeros();
        let psum: f64 = probabilities.iter().sum();
        assert!((psum - 1.0).abs() < 1e-9, "probabilities must sum to 1, got {psum}");
        assert!(probabilities.iter().all(|&p| p >= 0.0));
        let mut sorted = labels.clone();
        sorted.sort_unstable();
        sorted.dedup();
        assert_eq!(sorted.len(), n, "labels must be unique");
        assert!(labels.iter().all(|&l| (l as u64) < (1u64 << m)));
        Self { points, probabilities, labels, bits_per_symbol: m }
    }

    /// Number of constellation points.
    pub fn size(&self) -> usize {
        self.points.len()
    }

    /// Mean power `E|x|^2` under the stored probabilities.
    pub fn mean_power(&self) -> f64 {
        self.points
            .iter()
            .zip(&self.probabilities)
            .map(|(x, p)| p * x.norm_sqr())
            .sum()
    }

    /// Source entropy `H = -sum p log2 p` in bits.
    pub fn entropy_bits(&self) -> f64 {
        -self
            .probabilities
            .iter()
            .filter(|&&p| p > 0.0)
            .map(|&p| p * p.log2())
            .sum::<f64>()
    }

    /// Fourth-moment ratio `E|x|^4 / (E|x|^2)^2`.
    pub fn kurtosis(&self) -> f64 {
        let p2 = self.mean_power();
        let p4: f64 = self
            .points
            .iter()
            .zip(&self.probabilities)
            .map(|(x, p)| p * x.norm_sqr() * x.norm_sqr())
            .sum();
        p4 / (p2 * p2)
    }

    /// Peak-to-average power ratio in dB under the stored probabilities.
    pub fn papr_db(&self) -> f64 {
        let peak = self
            .points
            .iter()
            .map(|x| x.norm_sqr())
            .fold(f64::NEG_INFINITY, f64::max);
        10.0 * (peak / self.mean_power()).log10()
    }

    /// Returns a copy scaled to unit mean power.
    pub fn normalized(&self) -> Self {
        let scale = 1.0 / self.mean_power().sqrt();
        let mut out = self.clone();
        for x in &mut out.points {
            *x *= scale;
        }
        out
    }

    /// Returns a copy with new priors, rescaled to unit mean power.
    pub fn with_probabilities(&self, probabilities: Vec<f64>) -> Self {
        let mut out = self.clone();
        assert_eq!(probabilities.len(), out.points.len());
        out.probabilities = probabilities;
        out.normalized()
    }

    /// The point carrying a given label.
    pub fn point_for_label(&self, label: u32) -> Complex64 {
        let idx = self
            .labels
            .iter()
            .position(|&l| l == label)
            .expect("label not present");
        self.points[idx]
    }

    /// Index of the point closest to `y` in Euclidean distance.
    pub fn nearest_point_index(&self, y: Complex64) -> usize {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (i, x) in self.points.iter().enumerate() {
            let d = (y - x).norm_sqr();
            if d < best_d {
                best_d = d;
                best = i;
            }
        }
        best
    }

    /// For each bit position, the point indices whose label has that bit set
    /// (`.1`) or clear (`.0`).
    pub fn bit_subsets(&self) -> Vec<(Vec<usize>, Vec<usize>)> {
        let m = self.bits_per_symbol;
        (0..m)
            .map(|i| {
                let mut zeros = Vec::new();
                let mut ones = Vec::new();
                for (idx, &label) in self.labels.iter().enumerate() {
                    if (label >> (m - 1 - i)) & 1 == 1 {
                        ones.push(idx);
                    } else {
                        zeros.push(idx);
                    }
                }
                (zeros, ones)
            })
            .collect()
    }
}

/// Constellation families understood by [`build_constellation`].
#[derive(Debug, Clone, PartialEq)]
pub enum ConstellationKind {
    /// Gray-labeled QAM on a rectangular grid of `order` points (power of
    /// two). Even bit counts give square grids; odd counts give the
    /// `2^ceil(m/2) x 2^floor(m/2)` rectangle; order 2 is antipodal.
    SquareQam { order: usize },
    /// 32-point cross constellation with its published bit mapping.
    Cross32,
    /// Geometrically shaped 32-point constellation with its published bit
    /// mapping.
    Gs32,
    /// Concentric rings of phase-shifted points. Labels concatenate a
    /// Gray-coded ring index with a Gray-coded position within the ring.
    Apsk { ring_radii: Vec<f64>, points_per_ring: usize, ring_phases: Vec<f64> },
}

/// 32-point cross constellation: label, in-phase, quadrature.
const CROSS32_TABLE: [(u32, f64, f64); 32] = [
    (0, -3.0, -5.0),
    (1, -1.0, -5.0),
    (2, -3.0, 5.0),
    (3, -1.0, 5.0),
    (4, -5.0, -3.0),
    (5, -5.0, -1.0),
    (6, -5.0, 3.0),
    (7, -5.0, 1.0),
    (8, -1.0, -3.0),
    (9, -1.0, -1.0),
    (10, -1.0, 3.0),
    (11, -1.0, 1.0),
    (12, -3.0, -3.0),
    (13, -3.0, -1.0),
    (14, -3.0, 3.0),
    (15, -3.0, 1.0),
    (16, 3.0, -5.0),
    (17, 1.0, -5.0),
    (18, 3.0, 5.0),
    (19, 1.0, 5.0),
    (20, 5.0, -3.0),
    (21, 5.0, -1.0),
    (22, 5.0, 3.0),
    (23, 5.0, 1.0),
    (24, 1.0, -3.0),
    (25, 1.0, -1.0),
    (26, 1.0, 3.0),
    (27, 1.0, 1.0),
    (28, 3.0, -3.0),
    (29, 3.0, -1.0),
    (30, 3.0, 3.0),
    (31, 3.0, 1.0),
];

/// Geometrically shaped 32-point constellation: label, in-phase, quadrature.
const GS32_TABLE: [(u32, f64, f64); 32] = [
    (0, 1.426, 0.359),
    (1, -1.426, 0.359),
    (2, 1.426, -0.359),
    (3, -1.426, -0.359),
    (4, 0.163, 0.214),
    (5, -0.163, 0.214),
    (6, 0.163, -0.214),
    (7, -0.163, -0.214),
    (8, 0.938, 0.240),
    (9, -0.938, 0.240),
    (10, 0.938, -0.240),
    (11, -0.938, -0.240),
    (12, 0.536, 0.223),
    (13, -0.536, 0.223),
    (14, 0.536, -0.223),
    (15, -0.536, -0.223),
    (16, 0.324, 1.247),
    (17, -0.324, 1.247),
    (18, 0.324, -1.247),
    (19, -0.324, -1.247),
    (20, 0.174, 0.706),
    (21, -0.174, 0.706),
    (22, 0.174, -0.706),
    (23, -0.174, -0.706),
    (24, 0.885, 0.926),
    (25, -0.885, 0.926),
    (26, 0.885, -0.926),
    (27, -0.885, -0.926),
    (28, 0.520, 0.625),
    (29, -0.520, 0.625),
    (30, 0.520, -0.625),
    (31, -0.520, -0.625),
];

fn gray(i: u32) -> u32 {
    i ^ (i >> 1)
}

fn rect_gray_qam(bits_i: u32, bits_q: u32) -> LabeledConstellation {
    let li = 1u32 << bits_i;
    let lq = 1u32 << bits_q;
    let mut points = Vec::with_capacity((li * lq) as usize);
    let mut labels = Vec::with_capacity((li * lq) as usize);
    for ii in 0..li {
        for qq in 0..lq {
            let re = 2.0 * ii as f64 - (li - 1) as f64;
            let im = if lq == 1 { 0.0 } else { 2.0 * qq as f64 - (lq - 1) as f64 };
            points.push(Complex64::new(re, im));
            labels.push((gray(ii) << bits_q) | gray(qq));
        }
    }
    let n = points.len();
    LabeledConstellation::new(points, vec![1.0 / n as f64; n], labels).normalized()
}

fn constellation_from_table(table: &[(u32, f64, f64)]) -> LabeledConstellation {
    let points: Vec<Complex64> = table.iter().map(|&(_, re, im)| Complex64::new(re, im)).collect();
    let labels: Vec<u32> = table.iter().map(|&(l, _, _)| l).collect();
    let n = points.len();
    LabeledConstellation::new(points, vec![1.0 / n as f64; n], labels).normalized()
}

/// Builds a unit-mean-power constellation of the requested kind.
pub fn build_constellation(kind: &ConstellationKind) -> LabeledConstellation {
    match kind {
        ConstellationKind::SquareQam { order } => {
            assert!(order.is_power_of_two() && *order >= 2, "order must be a power of two >= 2");
            let m = order.trailing_zeros();
            rect_gray_qam(m.div_ceil(2), m / 2)
        }
        ConstellationKind::Cross32 => constellation_from_table(&CROSS32_TABLE),
        ConstellationKind::Gs32 => constellation_from_table(&GS32_TABLE),
        ConstellationKind::Apsk { ring_radii, points_per_ring, ring_phases } => {
            let n_rings = ring_radii.len();
            assert!(n_rings.is_power_of_two() && points_per_ring.is_power_of_two());
            assert_eq!(ring_phases.len(), n_rings);
            let ring_bits = n_rings.trailing_zeros();
            let pos_bits = points_per_ring.trailing_zeros();
            let mut points = Vec::new();
            let mut labels = Vec::new();
            for (r, (&radius, &phase)) in ring_radii.iter().zip(ring_phases).enumerate() {
                for p in 0..*points_per_ring {
                    let theta = phase + std::f64::consts::TAU * p as f64 / *points_per_ring as f64;
                    points.push(Complex64::from_polar(radius, theta));
                    labels.push((gray(r as u32) << pos_bits) | gray(p as u32));
                }
            }
            let _ = ring_bits;
            let n = points.len();
            LabeledConstellation::new(points, vec![1.0 / n as f64; n], labels).normalized()
        }
    }
}

/// Default bit-to-constellation mapping used by multicarrier bit loading:
/// the published cross mapping at 5 bits, rectangular Gray QAM otherwise.
pub fn qam_for_bits(bits: u32) -> LabeledConstellation {
    assert!((1..=8).contains(&bits), "supported loads are 1..=8 bits");
    if bits == 5 {
        build_constellation(&ConstellationKind::Cross32)
    } else {
        build_constellation(&ConstellationKind::SquareQam { order: 1usize << bits })
    }
}

// ---------------------------------------------------------------------------
// Maximum-entropy shaped distributions
// ---------------------------------------------------------------------------

/// Families of maximum-entropy source distributions over a constellation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShapingFamily {
    /// `P(x) proportional to exp(-lambda |x|^2)`.
    MaxwellBoltzmann,
    /// `P(x) proportional to exp(-lambda |x|)`.
    Exponential,
}

/// A solved shaped distribution: the rate parameter and the probabilities it
/// induces on the point set it was solved for.
#[derive(Debug, Clone)]
pub struct ShapedDistribution {
    pub family: ShapingFamily,
    pub lambda: f64,
    pub entropy_bits: f64,
    pub probabilities: Vec<f64>,
}

fn maxent_probs(stats: &[f64], lambda: f64) -> Vec<f64> {
    let smin = stats.iter().cloned().fold(f64::INFINITY, f64::min);
    let w: Vec<f64> = stats.iter().map(|&s| (-lambda * (s - smin)).exp()).collect();
    let z: f64 = w.iter().sum();
    w.into_iter().map(|x| x / z).collect()
}

fn entropy_of(probs: &[f64]) -> f64 {
    -probs.iter().filter(|&&p| p > 0.0).map(|&p| p * p.log2()).sum::<f64>()
}

fn solve_maxent(
    stats: &[f64],
    family: ShapingFamily,
    target_entropy: f64,
) -> Result<ShapedDistribution, ShapingError> {
    let max_bits = (stats.len() as f64).log2();
    if target_entropy > max_bits + 1e-12 || target_entropy <= 0.0 {
        return Err(ShapingError::EntropyUnreachable { target_bits: target_entropy, max_bits });
    }
    // Entropy is monotone non-increasing in lambda; bracket by doubling.
    let mut hi = 1.0;
    let mut n_doublings = 0;
    while entropy_of(&maxent_probs(stats, hi)) > target_entropy {
        hi *= 2.0;
        n_doublings += 1;
        if n_doublings > 200 {
            return Err(ShapingError::EntropyUnreachable { target_bits: target_entropy, max_bits });
        }
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let h = entropy_of(&maxent_probs(stats, mid));
        if h > target_entropy {
            lo = mid;
        } else {
            hi = mid;
        }
        if (entropy_of(&maxent_probs(stats, lo)) - entropy_of(&maxent_probs(stats, hi))).abs()
            < 1e-12
            && (hi - lo) < 1e-14 * (1.0 + hi)
        {
            break;
        }
    }
    let lambda = 0.5 * (lo + hi);
    let probabilities = maxent_probs(stats, lambda);
    let entropy_bits = entropy_of(&probabilities);
    debug_assert!((entropy_bits - target_entropy).abs() < 1e-9);
    Ok(ShapedDistribution { family, lambda, entropy_bits, probabilities })
}

fn family_stats(points: &[Complex64], family: ShapingFamily) -> Vec<f64> {
    match family {
        ShapingFamily::MaxwellBoltzmann => points.iter().map(|x| x.norm_sqr()).collect(),
        ShapingFamily::Exponential => points.iter().map(|x| x.norm()).collect(),
    }
}

/// Shaped distribution over constellation points at a given rate parameter.
pub fn shaped_distribution_lambda(
    points: &[Complex64],
    family: ShapingFamily,
    lambda: f64,
) -> ShapedDistribution {
    let probabilities = maxent_probs(&family_stats(points, family), lambda);
    let entropy_bits = entropy_of(&probabilities);
    ShapedDistribution { family, lambda, entropy_bits, probabilities }
}

/// Solves the rate parameter so the induced entropy matches `target_entropy`
/// to within 1e-9 bits.
pub fn shaped_distribution_for_entropy(
    points: &[Complex64],
    family: ShapingFamily,
    target_entropy: f64,
) -> Result<ShapedDistribution, ShapingError> {
    solve_maxent(&family_stats(points, family), family, target_entropy)
}

/// Same solver on a real amplitude alphabet (weights use `a^2` for the
/// Maxwell-Boltzmann family and `a` for the exponential family).
pub fn shaped_amplitudes_for_entropy(
    amplitudes: &[f64],
    family: ShapingFamily,
    target_entropy: f64,
) -> Result<ShapedDistribution, ShapingError> {
    let stats: Vec<f64> = match family {
        ShapingFamily::MaxwellBoltzmann => amplitudes.iter().map(|a| a * a).collect(),
        ShapingFamily::Exponential => amplitudes.iter().map(|a| a.abs()).collect(),
    };
    solve_maxent(&stats, family, target_entropy)
}

// ---------------------------------------------------------------------------
// Constant-composition distribution matching
// ---------------------------------------------------------------------------

/// A fixed-composition block code over an amplitude alphabet: every codeword
/// of `block_len()` symbols uses amplitude `j` exactly `composition[j]` times.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CcdmSpec {
    /// Number of occurrences of each alphabet symbol per block.
    pub composition: Vec<usize>,
}

impl CcdmSpec {
    pub fn new(composition: Vec<usize>) -> Self {
        assert!(!composition.is_empty());
        Self { composition }
    }

    /// Block length in symbols.
    pub fn block_len(&self) -> usize {
        self.composition.iter().sum()
    }

    /// Number of distinct constant-composition sequences.
    pub fn codeword_count(&self) -> BigUint {
        multinomial(&self.composition)
    }

    /// Information bits carried per block: `floor(log2(codeword_count))`.
    pub fn input_bits(&self) -> usize {
        let c = self.codeword_count();
        (c.bits() - 1) as usize
    }

    /// Matching rate in bits per symbol.
    pub fn rate_per_symbol(&self) -> f64 {
        self.input_bits() as f64 / self.block_len() as f64
    }
}

fn multinomial(counts: &[usize]) -> BigUint {
    // n! / prod(c_j!) built incrementally as prod over symbols of C(n_partial, c_j).
    let mut result = BigUint::from(1u32);
    let mut total = 0usize;
    for &c in counts {
        for i in 1..=c {
            total += 1;
            result = result * BigUint::from(total) / BigUint::from(i);
        }
    }
    result
}

/// Rounds `n * p` to integer counts that sum exactly to `n` (largest
/// remainders win the leftover units).
pub fn composition_from_probabilities(probs: &[f64], n: usize) -> Vec<usize> {
    let raw: Vec<f64> = probs.iter().map(|&p| p * n as f64).collect();
    let mut counts: Vec<usize> = raw.iter().map(|&x| x.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..probs.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = raw[a] - raw[a].floor();
        let rb = raw[b] - raw[b].floor();
        rb.partial_cmp(&ra).unwrap().then(a.cmp(&b))
    });
    for &idx in order.iter().take(n - assigned) {
        counts[idx] += 1;
    }
    counts
}

/// Maps an information bit block to a constant-composition amplitude-index
/// sequence by lexicographic unranking over the multiset permutations.
pub fn ccdm_encode(bits: &[bool], spec: &CcdmSpec) -> Result<Vec<usize>, ShapingError> {
    let k = spec.input_bits();
    if bits.len() != k {
        return Err(ShapingError::BitCountMismatch { expected: k, got: bits.len() });
    }
    let mut index = BigUint::from(0u32);
    for &b in bits {
        index = (index << 1) + BigUint::from(b as u32);
    }
    let n = spec.block_len();
    let mut remaining = spec.composition.clone();
    let mut out = Vec::with_capacity(n);
    for pos in 0..n {
        let slots_left = n - pos - 1;
        let mut chosen = None;
        for j in 0..remaining.len() {
            if remaining[j] == 0 {
                continue;
            }
            remaining[j] -= 1;
            let count = multinomial_with_total(&remaining, slots_left);
            if index < count {
                chosen = Some(j);
                break;
            }
            index -= count;
            remaining[j] += 1;
        }
        out.push(chosen.expect("index exhausted the codeword set"));
    }
    Ok(out)
}

fn multinomial_with_total(counts: &[usize], total: usize) -> BigUint {
    debug_assert_eq!(counts.iter().sum::<usize>(), total);
    let _ = total;
    multinomial(counts)
}

/// Inverts [`ccdm_encode`]: ranks the sequence and emits the information
/// bits. Rejects sequences of the wrong composition and the (rare) valid
/// compositions whose rank falls outside the used `2^k` codewords.
pub fn ccdm_decode(seq: &[usize], spec: &CcdmSpec) -> Result<Vec<bool>, ShapingError> {
    let n = spec.block_len();
    if seq.len() != n {
        return Err(ShapingError::InvalidCodeword(format!(
            "length {} does not match block length {n}",
            seq.len()
        )));
    }
    let q = spec.composition.len();
    let mut observed = vec![0usize; q];
    for &s in seq {
        if s >= q {
            return Err(ShapingError::InvalidCodeword(format!("symbol {s} outside alphabet")));
        }
        observed[s] += 1;
    }
    if observed != spec.composition {
        return Err(ShapingError::InvalidCodeword(format!(
            "composition {observed:?} does not match {:?}",
            spec.composition
        )));
    }
    let mut rank = BigUint::from(0u32);
    let mut remaining = spec.composition.clone();
    for (pos, &sym) in seq.iter().enumerate() {
        let slots_left = n - pos - 1;
        for j in 0..sym {
            if remaining[j] == 0 {
                continue;
            }
            remaining[j] -= 1;
            rank += multinomial_with_total(&remaining, slots_left);
            remaining[j] += 1;
        }
        remaining[sym] -= 1;
    }
    let k = spec.input_bits();
    if rank.bits() as usize > k {
        return Err(ShapingError::InvalidCodeword(
            "sequence ranks outside the used codeword set".into(),
        ));
    }
    let bits = (0..k)
        .rev()
        .map(|i| ((&rank >> i) & BigUint::from(1u32)) == BigUint::from(1u32))
        .collect();
    Ok(bits)
}

// ---------------------------------------------------------------------------
// Shaping rate algebra
// ---------------------------------------------------------------------------

/// Net-rate bookkeeping for sign-bit amplitude shaping combined with a
/// systematic binary FEC.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PasRates {
    /// Bits per symbol of the shaped constellation.
    pub m: u32,
    /// FEC code rate.
    pub r_fec: f64,
    /// FEC overhead `(1 - R) / R`.
    pub oh: f64,
    /// Matcher rate in bits per amplitude (per quadrature).
    pub r_dm: f64,
    /// Net information rate in bits per symbol.
    pub r_info: f64,
}

/// Minimum admissible FEC rate and the corresponding maximum overhead for a
/// `2^m`-point shaped constellation: `R >= (m-2)/m`, `OH <= 2/(m-2)`.
pub fn min_fec_rate(m: u32) -> (f64, f64) {
    assert!(m > 2);
    let r_min = (m as f64 - 2.0) / m as f64;
    (r_min, 2.0 / (m as f64 - 2.0))
}

/// Rates for a shaped system with an explicit matcher rate per quadrature.
pub fn pas_rates(m: u32, r_fec: f64, r_dm: f64) -> Result<PasRates, ShapingError> {
    let (r_min, _) = min_fec_rate(m);
    if r_fec <= r_min || r_fec > 1.0 {
        return Err(ShapingError::FecRateTooLow { r_fec, minimum: r_min });
    }
    let r_info = 2.0 * (r_dm + 1.0) + m as f64 * (r_fec - 1.0);
    Ok(PasRates { m, r_fec, oh: (1.0 - r_fec) / r_fec, r_dm, r_info })
}

/// Rates for a shaped system whose matcher rate is chosen so the net rate
/// equals a uniform `m_u`-bit comparator at the same FEC rate:
/// `R_DM = (m - R_FEC (m - m_u))/2 - 1`.
pub fn pas_rates_matching_uniform(m: u32, r_fec: f64, m_u: u32) -> Result<PasRates, ShapingError> {
    let r_dm = (m as f64 - r_fec * (m as f64 - m_u as f64)) / 2.0 - 1.0;
    pas_rates(m, r_fec, r_dm)
}

/// Pre-FEC generalized-information threshold corresponding to a normalized
/// threshold: `G_thr = H - (1 - NGMI) m` (uniform sources have `H = m`).
pub fn ngmi_threshold_gmi(entropy_bits: f64, m: u32, ngmi: f64) -> f64 {
    entropy_bits - (1.0 - ngmi) * m as f64
}

/// The two normalized-rate metrics derived from a generalized-information
/// estimate: `(G/m, 1 - (H - G)/m)`.
pub fn ngmi_pair(gmi: f64, entropy_bits: f64, m: u32) -> (f64, f64) {
    (gmi / m as f64, 1.0 - (entropy_bits - gmi) / m as f64)
}

// ---------------------------------------------------------------------------
// Decoding metrics
// ---------------------------------------------------------------------------

/// Receiver channel law used for decisions, reliability metrics, and
/// information-rate estimation. `sigma2` is the noise variance PER REAL
/// QUADRATURE (total complex noise power `2 sigma2`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DecodingMetric {
    /// Circular Gaussian noise.
    Awgn { sigma2: f64 },
    /// Circular Gaussian noise plus a von-Mises-distributed residual carrier
    /// phase with concentration `kappa` (variance approximately `1/kappa`).
    Tikhonov { sigma2: f64, kappa: f64 },
}

impl DecodingMetric {
    /// Gaussian metric for an SNR in dB over a constellation of the given
    /// mean power.
    pub fn awgn_for_snr(snr_db: f64, mean_power: f64) -> Self {
        DecodingMetric::Awgn { sigma2: mean_power / db_to_lin(snr_db) / 2.0 }
    }

    /// Phase-noise-aware metric at the same additive-noise SNR.
    pub fn tikhonov_for_snr(snr_db: f64, mean_power: f64, kappa: f64) -> Self {
        DecodingMetric::Tikhonov { sigma2: mean_power / db_to_lin(snr_db) / 2.0, kappa }
    }

    /// Natural log of the metric density `q(y|x)`.
    pub fn log_density(&self, y: Complex64, x: Complex64) -> f64 {
        match *self {
            DecodingMetric::Awgn { sigma2 } => {
                -(2.0 * std::f64::consts::PI * sigma2).ln() - (y - x).norm_sqr() / (2.0 * sigma2)
            }
            DecodingMetric::Tikhonov { sigma2, kappa } => {
                let prefactor = 0.5 * (kappa.ln() - (8.0 * std::f64::consts::PI.powi(3)).ln())
                    - kappa
                    - sigma2.ln();
                let cross = y * x.conj() / sigma2 + kappa;
                prefactor - (y.norm_sqr() + x.norm_sqr()) / (2.0 * sigma2) + cross.norm()
            }
        }
    }
}

/// Maximum-likelihood hard decision: the index of the point maximizing the
/// metric density.
pub fn ml_decide(y: Complex64, c: &LabeledConstellation, metric: &DecodingMetric) -> usize {
    let mut best = 0;
    let mut best_d = f64::NEG_INFINITY;
    for (i, &x) in c.points.iter().enumerate() {
        let d = metric.log_density(y, x);
        if d > best_d {
            best_d = d;
            best = i;
        }
    }
    best
}

fn lse2(a: f64, b: f64) -> f64 {
    let m = a.max(b);
    if m.is_infinite() && m < 0.0 {
        return f64::NEG_INFINITY;
    }
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// Per-bit log-likelihood ratios `log P(b=1|y)/P(b=0|y)` including the
/// constellation priors; bit 0 is the label's most significant bit.
pub fn llr_compute(
    y: Complex64,
    c: &LabeledConstellation,
    metric: &DecodingMetric,
) -> Vec<f64> {
    let m = c.bits_per_symbol;
    let mut num = vec![f64::NEG_INFINITY; m as usize];
    let mut den = vec![f64::NEG_INFINITY; m as usize];
    for (idx, &x) in c.points.iter().enumerate() {
        let d = metric.log_density(y, x) + c.probabilities[idx].ln();
        let label = c.labels[idx];
        for i in 0..m {
            if (label >> (m - 1 - i)) & 1 == 1 {
                num[i as usize] = lse2(num[i as usize], d);
            } else {
                den[i as usize] = lse2(den[i as usize], d);
            }
        }
    }
    num.into_iter().zip(den).map(|(n, d)| n - d).collect()
}

// ---------------------------------------------------------------------------
// Information-rate estimators
// ---------------------------------------------------------------------------

/// Shannon capacity of the complex Gaussian channel in bits per symbol.
pub fn awgn_capacity_bits(snr_db: f64) -> f64 {
    (1.0 + db_to_lin(snr_db)).log2()
}

/// Quadrature order used by the deterministic information-rate integrals.
const GH_ORDER: usize = 32;

/// Mutual information of the constellation over the Gaussian channel at the
/// given SNR, via Gauss-Hermite quadrature (deterministic).
pub fn mi_awgn_quadrature(c: &LabeledConstellation, snr_db: f64) -> f64 {
    let (nodes, weights) = gauss_hermite(GH_ORDER);
    let sigma2_total = c.mean_power() / db_to_lin(snr_db);
    let scale = sigma2_total.sqrt(); // per-axis std * sqrt(2)
    let log_p: Vec<f64> = c.probabilities.iter().map(|&p| p.ln()).collect();
    let inv_pi = 1.0 / std::f64::consts::PI;
    let mut mi = 0.0;
    for (xi, &x) in c.points.iter().enumerate() {
        if c.probabilities[xi] == 0.0 {
            continue;
        }
        let mut acc = 0.0;
        for (i, &ti) in nodes.iter().enumerate() {
            for (j, &tj) in nodes.iter().enumerate() {
                let n = Complex64::new(scale * ti, scale * tj);
                let y = x + n;
                // log q(y|x') up to a common constant: -|y - x'|^2 / sigma2_total.
                let d_tx = -n.norm_sqr() / sigma2_total;
                let mut max_t = f64::NEG_INFINITY;
                let mut terms = Vec::with_capacity(c.points.len());
                for (xk, &xp) in c.points.iter().enumerate() {
                    let t = log_p[xk] - (y - xp).norm_sqr() / sigma2_total;
                    if t > max_t {
                        max_t = t;
                    }
                    terms.push(t);
                }
                let log_qy =
                    max_t + terms.iter().map(|&t| (t - max_t).exp()).sum::<f64>().ln();
                acc += weights[i] * weights[j] * (d_tx - log_qy);
            }
        }
        mi += c.probabilities[xi] * inv_pi * acc;
    }
    mi / std::f64::consts::LN_2
}

fn log2_1p_exp(u: f64) -> f64 {
    if u > 35.0 {
        u / std::f64::consts::LN_2
    } else {
        u.exp().ln_1p() / std::f64::consts::LN_2
    }
}

/// Generalized (bit-metric) information rate over the Gaussian channel via
/// Gauss-Hermite quadrature, with the metric-scaling parameter minimized by
/// golden-section search.
pub fn gmi_awgn_quadrature(c: &LabeledConstellation, snr_db: f64) -> f64 {
    let (nodes, weights) = gauss_hermite(GH_ORDER);
    let sigma2_total = c.mean_power() / db_to_lin(snr_db);
    let scale = sigma2_total.sqrt();
    let metric = DecodingMetric::Awgn { sigma2: sigma2_total / 2.0 };
    let m = c.bits_per_symbol as usize;
    let inv_pi = 1.0 / std::f64::consts::PI;
    // Signed LLRs u = (-1)^b l with their quadrature weights.
    let mut us: Vec<f64> = Vec::new();
    let mut ws: Vec<f64> = Vec::new();
    for (xi, &x) in c.points.iter().enumerate() {
        if c.probabilities[xi] == 0.0 {
            continue;
        }
        let label = c.labels[xi];
        for (i, &ti) in nodes.iter().enumerate() {
            for (j, &tj) in nodes.iter().enumerate() {
                let y = x + Complex64::new(scale * ti, scale * tj);
                let llrs = llr_compute(y, c, &metric);
                let w = c.probabilities[xi] * inv_pi * weights[i] * weights[j];
                for (bit, &l) in llrs.iter().enumerate() {
                    let b = (label >> (m - 1 - bit)) & 1;
                    us.push(if b == 1 { -l } else { l });
                    ws.push(w);
                }
            }
        }
    }
    let penalty = |s: f64| -> f64 {
        us.iter().zip(&ws).map(|(&u, &w)| w * log2_1p_exp(s * u)).sum::<f64>()
    };
    let (_, pen) = golden_section_min(penalty, 0.5, 2.0, 1e-4);
    c.entropy_bits() - pen
}

/// Monte-Carlo information-rate estimates from matched transmit / receive
/// records.
#[derive(Debug, Clone, Copy)]
pub struct AirEstimate {
    /// Mutual information estimate, bits per symbol.
    pub mi: f64,
    /// Standard error of the mutual-information mean.
    pub mi_sigma: f64,
    /// Bit-metric (generalized) information rate, bits per symbol.
    pub gmi: f64,
    /// Metric scaling that maximized the bit-metric rate.
    pub s_opt: f64,
    /// `gmi / m`.
    pub ngmi_u: f64,
    /// `1 - (H - gmi)/m`.
    pub ngmi_p: f64,
    /// Number of symbols used.
    pub n_samples: usize,
}

/// Estimates MI and the bit-metric rate from transmitted point indices and
/// received samples under the given decoding metric.
pub fn air_montecarlo(
    tx_indices: &[usize],
    rx: &[Complex64],
    c: &LabeledConstellation,
    metric: &DecodingMetric,
) -> AirEstimate {
    assert_eq!(tx_indices.len(), rx.len());
    let n = rx.len();
    assert!(n > 0);
    let m = c.bits_per_symbol as usize;
    let log_p: Vec<f64> = c.probabilities.iter().map(|&p| p.ln()).collect();

    // Chunked parallel accumulation keeps the reduction order fixed so the
    // result is independent of the thread count.
    let chunk = 8192.min(n.max(1));
    let pieces: Vec<(f64, f64, Vec<f64>)> = tx_indices
        .par_chunks(chunk)
        .zip(rx.par_chunks(chunk))
        .map(|(txc, rxc)| {
            let mut mi_sum = 0.0;
            let mut mi_sq = 0.0;
            let mut us = Vec::with_capacity(txc.len() * m);
            let mut dens = vec![0.0f64; c.points.len()];
            for (&t, &y) in txc.iter().zip(rxc) {
                let mut max_t = f64::NEG_INFINITY;
                for (k, &x) in c.points.iter().enumerate() {
                    let d = metric.log_density(y, x);
                    dens[k] = d;
                    let tk = d + log_p[k];
                    if tk > max_t {
                        max_t = tk;
                    }
                }
                let log_qy = max_t
                    + dens
                        .iter()
                        .zip(&log_p)
                        .map(|(&d, &lp)| (d + lp - max_t).exp())
                        .sum::<f64>()
                        .ln();
                let info = (dens[t] - log_qy) / std::f64::consts::LN_2;
                mi_sum += info;
                mi_sq += info * info;
                // Per-bit signed LLRs from the same density table.
                let label = c.labels[t];
                for bit in 0..m {
                    let mut num = f64::NEG_INFINITY;
                    let mut den = f64::NEG_INFINITY;
                    for (k, &lab) in c.labels.iter().enumerate() {
                        let v = dens[k] + log_p[k];
                        if (lab >> (m - 1 - bit)) & 1 == 1 {
                            num = lse2(num, v);
                        } else {
                            den = lse2(den, v);
                        }
                    }
                    let l = num - den;
                    let b = (label >> (m - 1 - bit)) & 1;
                    us.push(if b == 1 { -l } else { l });
                }
            }
            (mi_sum, mi_sq, us)
        })
        .collect();

    let mut mi_sum = 0.0;
    let mut mi_sq = 0.0;
    let mut us: Vec<f64> = Vec::with_capacity(n * m);
    for (s, q, u) in pieces {
        mi_sum += s;
        mi_sq += q;
        us.extend(u);
    }
    let mi = mi_sum / n as f64;
    let var = (mi_sq / n as f64 - mi * mi).max(0.0);
    let mi_sigma = (var / n as f64).sqrt();

    let penalty = |s: f64| -> f64 {
        let chunk_sums: Vec<f64> = us
            .par_chunks(65536)
            .map(|cs| cs.iter().map(|&u| log2_1p_exp(s * u)).sum::<f64>())
            .collect();
        chunk_sums.iter().sum::<f64>() / n as f64
    };
    let (s_opt, pen) = golden_section_min(penalty, 0.5, 2.0, 1e-4);
    let h = c.entropy_bits();
    let gmi = h - pen;
    let (ngmi_u, ngmi_p) = ngmi_pair(gmi, h, c.bits_per_symbol);
    AirEstimate { mi, mi_sigma, gmi, s_opt, ngmi_u, ngmi_p, n_samples: n }
}

// ---------------------------------------------------------------------------
// Channel sampling helpers
// ---------------------------------------------------------------------------

/// Draws one angle from the von Mises distribution with concentration
/// `kappa` (Best-Fisher rejection sampling; `kappa = 0` is uniform).
pub fn sample_von_mises<R: Rng>(rng: &mut R, kappa: f64) -> f64 {
    use std::f64::consts::PI;
    if kappa < 1e-8 {
        return rng.gen_range(-PI..PI);
    }
    let tau = 1.0 + (1.0 + 4.0 * kappa * kappa).sqrt();
    let rho = (tau - (2.0 * tau).sqrt()) / (2.0 * kappa);
    let r = (1.0 + rho * rho) / (2.0 * rho);
    loop {
        let u1: f64 = rng.gen();
        let u2: f64 = rng.gen();
        let z = (PI * u1).cos();
        let f = (1.0 + r * z) / (r + z);
        let c = kappa * (r - f);
        if c * (2.0 - c) - u2 > 0.0 || (c / u2).ln() + 1.0 - c >= 0.0 {
            let u3: f64 = rng.gen();
            let angle = f.clamp(-1.0, 1.0).acos();
            return if u3 > 0.5 { angle } else { -angle };
        }
    }
}

/// Draws transmit indices from the constellation priors and passes the
/// points through `y = x e^{j psi} + n` with von Mises phase (concentration
/// `kappa`; `kappa = infinity` means no phase noise) and Gaussian noise at
/// the given SNR. Returns `(tx_indices, rx)`.
pub fn sample_phase_noise_channel(
    c: &LabeledConstellation,
    snr_db: f64,
    kappa: f64,
    n_symbols: usize,
    seed: u64,
) -> (Vec<usize>, Vec<Complex64>) {
    let mut rng = rng_stream(seed, 0);
    let sigma2_total = c.mean_power() / db_to_lin(snr_db);
    let noise_scale = sigma2_total.sqrt();
    let mut cdf = Vec::with_capacity(c.points.len());
    let mut acc = 0.0;
    for &p in &c.probabilities {
        acc += p;
        cdf.push(acc);
    }
    let mut tx = Vec::with_capacity(n_symbols);
    let mut rx = Vec::with_capacity(n_symbols);
    for _ in 0..n_symbols {
        let u: f64 = rng.gen();
        let idx = cdf.partition_point(|&cp| cp < u).min(c.points.len() - 1);
        let phase = if kappa.is_finite() {
            sample_von_mises(&mut rng, kappa)
        } else {
            0.0
        };
        let n = crate::util::crandn(&mut rng) * noise_scale;
        tx.push(idx);
        rx.push(c.points[idx] * Complex64::from_polar(1.0, phase) + n);
    }
    (tx, rx)
}

// ---------------------------------------------------------------------------
// Geometric-shaping optimizer
// ---------------------------------------------------------------------------

/// Simulated-annealing schedule for constellation optimization.
#[derive(Debug, Clone, Copy)]
pub struct AnnealSchedule {
    /// Number of candidate evaluations.
    pub n_iters: usize,
    /// Initial temperature; cools geometrically as `T0 * 0.995^k`.
    pub t0: f64,
    /// Initial per-coordinate Gaussian perturbation; shrinks as
    /// `sigma0 * sqrt(T/T0)`.
    pub sigma0: f64,
    /// Symbols per candidate evaluation (common random numbers across
    /// candidates).
    pub n_eval_symbols: usize,
    /// Mirror perturbations across the four quadrants when the seed point
    /// set is symmetric under sign flips.
    pub quadrant_symmetry: bool,
}

impl Default for AnnealSchedule {
    fn default() -> Self {
        Self {
            n_iters: 2000,
            t0: 0.02,
            sigma0: 0.02,
            n_eval_symbols: 20_000,
            quadrant_symmetry: true,
        }
    }
}

struct QuadrantGroups {
    /// Representative magnitudes, one per group.
    reps: Vec<[f64; 2]>,
    /// Group members as (point index, sign of re, sign of im).
    members: Vec<Vec<(usize, f64, f64)>>,
}

fn quadrant_groups(points: &[Complex64], enforce: bool) -> QuadrantGroups {
    if enforce {
        let mut reps: Vec<[f64; 2]> = Vec::new();
        let mut members: Vec<Vec<(usize, f64, f64)>> = Vec::new();
        let tol = 1e-9;
        let mut symmetric = true;
        'outer: for (i, p) in points.iter().enumerate() {
            if p.re.abs() < tol || p.im.abs() < tol {
                symmetric = false;
                break;
            }
            let key = [p.re.abs(), p.im.abs()];
            for (g, rep) in reps.iter().enumerate() {
                if (rep[0] - key[0]).abs() < tol && (rep[1] - key[1]).abs() < tol {
                    members[g].push((i, p.re.signum(), p.im.signum()));
                    continue 'outer;
                }
            }
            reps.push(key);
            members.push(vec![(i, p.re.signum(), p.im.signum())]);
        }
        if symmetric && members.iter().all(|m| m.len() == 4) {
            return QuadrantGroups { reps, members };
        }
    }
    // Fallback: every point moves freely.
    QuadrantGroups {
        reps: points.iter().map(|p| [p.re, p.im]).collect(),
        members: points.iter().enumerate().map(|(i, _)| vec![(i, 1.0, 1.0)]).collect(),
    }
}

fn points_from_groups(groups: &QuadrantGroups, n: usize) -> Vec<Complex64> {
    let mut pts = vec![Complex64::new(0.0, 0.0); n];
    for (rep, members) in groups.reps.iter().zip(&groups.members) {
        for &(idx, sre, sim) in members {
            pts[idx] = Complex64::new(sre * rep[0], sim * rep[1]);
        }
    }
    pts
}

/// Optimizes constellation point positions for the bit-metric rate under the
/// given decoding metric's channel, by simulated annealing with geometric
/// cooling. Labels stay attached to their points. Returns the best
/// constellation found, so the result never scores below the seed on the
/// common-random-number objective.
pub fn optimize_gs(
    seed_constellation: &LabeledConstellation,
    snr_db: f64,
    kappa: f64,
    schedule: &AnnealSchedule,
    seed: u64,
) -> LabeledConstellation {
    let c0 = seed_constellation.normalized();
    if schedule.n_iters == 0 {
        return c0;
    }
    let metric = DecodingMetric::tikhonov_for_snr(snr_db, 1.0, kappa);
    // Common random numbers: one fixed draw of indices, phases, noise.
    let (tx, unit_noise, phases) = {
        let mut rng = rng_stream(seed, 1);
        let mut cdf = Vec::with_capacity(c0.points.len());
        let mut acc = 0.0;
        for &p in &c0.probabilities {
            acc += p;
            cdf.push(acc);
        }
        let mut tx = Vec::with_capacity(schedule.n_eval_symbols);
        let mut noise = Vec::with_capacity(schedule.n_eval_symbols);
        let mut phases = Vec::with_capacity(schedule.n_eval_symbols);
        for _ in 0..schedule.n_eval_symbols {
            let u: f64 = rng.gen();
            tx.push(cdf.partition_point(|&cp| cp < u).min(c0.points.len() - 1));
            noise.push(crate::util::crandn(&mut rng));
            phases.push(sample_von_mises(&mut rng, kappa));
        }
        (tx, noise, phases)
    };
    let sigma2_total = 1.0 / db_to_lin(snr_db);
    let noise_scale = sigma2_total.sqrt();
    let evaluate = |c: &LabeledConstellation| -> f64 {
        let rx: Vec<Complex64> = tx
            .iter()
            .zip(&unit_noise)
            .zip(&phases)
            .map(|((&t, &n), &ph)| {
                c.points[t] * Complex64::from_polar(1.0, ph) + n * noise_scale
            })
            .collect();
        air_montecarlo(&tx, &rx, c, &metric).gmi
    };

    let mut groups = quadrant_groups(&c0.points, schedule.quadrant_symmetry);
    let n = c0.points.len();
    let mut current = c0.clone();
    let mut current_score = evaluate(&current);
    let mut best = current.clone();
    let mut best_score = current_score;
    let mut rng = rng_stream(seed, 2);
    for k in 0..schedule.n_iters {
        let t = schedule.t0 * 0.995f64.powi(k as i32);
        let sigma = schedule.sigma0 * (t / schedule.t0).sqrt();
        let saved = groups.reps.clone();
        for rep in &mut groups.reps {
            rep[0] += sigma * crate::util::randn(&mut rng);
            rep[1] += sigma * crate::util::randn(&mut rng);
        }
        let mut cand = current.clone();
        cand.points = points_from_groups(&groups, n);
        let cand = cand.normalized();
        let cand_score = evaluate(&cand);
        let delta = cand_score - current_score;
        let accept = delta > 0.0 || rng.gen::<f64>() < (delta / t).exp();
        if accept {
            current = cand;
            current_score = cand_score;
            // Re-anchor the groups on the normalized points so scaling does
            // not drift away from the stored representatives.
            groups = quadrant_groups(&current.points, schedule.quadrant_symmetry);
            if current_score > best_score {
                best_score = current_score;
                best = current.clone();
            }
        } else {
            groups.reps = saved;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::util::lin_to_db;

    #[test]
    fn square_qam_gray_neighbors_differ_by_one_bit() {
        for order in [4usize, 16, 64, 256] {
            let c = build_constellation(&ConstellationKind::SquareQam { order });
            assert_eq!(c.size(), order);
            assert!((c.mean_power() - 1.0).abs() < 1e-12);
            // Find the grid spacing, then check all nearest-neighbor pairs.
            let mut min_d = f64::INFINITY;
            for i in 0..order {
                for j in 0..i {
                    min_d = min_d.min((c.points[i] - c.points[j]).norm());
                }
            }
            for i in 0..order {
                for j in 0..i {
                    if ((c.points[i] - c.points[j]).norm() - min_d).abs() < 1e-9 {
                        let diff = (c.labels[i] ^ c.labels[j]).count_ones();
                        assert_eq!(diff, 1, "order {order}: labels {} {}", c.labels[i], c.labels[j]);
                    }
                }
            }
        }
    }

    #[test]
    fn antipodal_and_rectangular_orders() {
        let b = build_constellation(&ConstellationKind::SquareQam { order: 2 });
        assert_eq!(b.size(), 2);
        assert!((b.point_for_label(0).re + 1.0).abs() < 1e-12);
        assert!((b.point_for_label(1).re - 1.0).abs() < 1e-12);
        let r8 = build_constellation(&ConstellationKind::SquareQam { order: 8 });
        assert_eq!(r8.size(), 8);
        let r128 = build_constellation(&ConstellationKind::SquareQam { order: 128 });
        assert_eq!(r128.size(), 128);
        assert!((r128.mean_power() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn cross32_table_first_row_and_normalization() {
        let c = build_constellation(&ConstellationKind::Cross32);
        assert_eq!(c.size(), 32);
        assert!((c.mean_power() - 1.0).abs() < 1e-12);
        let p0 = c.point_for_label(0);
        // Unnormalized row 0 is (-3, -5); mean power of the raw grid is 20.
        let scale = 1.0 / 20.0f64.sqrt();
        assert!((p0.re + 3.0 * scale).abs() < 1e-12);
        assert!((p0.im + 5.0 * scale).abs() < 1e-12);
    }

    #[test]
    fn gs32_table_first_row_and_normalization() {
        let c = build_constellation(&ConstellationKind::Gs32);
        assert_eq!(c.size(), 32);
        assert!((c.mean_power() - 1.0).abs() < 1e-12);
        let p0 = c.point_for_label(0);
        assert!(p0.re > 0.0 && p0.im > 0.0);
        assert!((p0.im / p0.re - 0.359 / 1.426).abs() < 1e-9);
    }

    #[test]
    fn apsk_ring_populations() {
        let c = build_constellation(&ConstellationKind::Apsk {
            ring_radii: vec![0.4, 0.8, 1.2, 1.6],
            points_per_ring: 16,
            ring_phases: vec![0.0, 0.1, 0.2, 0.3],
        });
        assert_eq!(c.size(), 64);
        let mut radii: Vec<f64> = c.points.iter().map(|p| p.norm()).collect();
        radii.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for ring in 0..4 {
            let r0 = radii[ring * 16];
            for k in 0..16 {
                assert!((radii[ring * 16 + k] - r0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn maxent_uniform_at_lambda_zero() {
        let c = build_constellation(&ConstellationKind::SquareQam { order: 64 });
        let d = shaped_distribution_lambda(&c.points, ShapingFamily::MaxwellBoltzmann, 0.0);
        assert!((d.entropy_bits - 6.0).abs() < 1e-12);
    }

    #[test]
    fn maxent_ratio_oracles_at_thirteen_thirds() {
        let c = build_constellation(&ConstellationKind::SquareQam { order: 64 });
        let mb =
            shaped_distribution_for_entropy(&c.points, ShapingFamily::MaxwellBoltzmann, 13.0 / 3.0)
                .unwrap();
        let ratio = |p: &[f64]| {
            let mx = p.iter().cloned().fold(f64::MIN, f64::max);
            let mn = p.iter().cloned().fold(f64::MAX, f64::min);
            mx / mn
        };
        let r_mb = ratio(&mb.probabilities);
        assert!((r_mb / 2.5348e4 - 1.0).abs() < 1e-3, "MB ratio {r_mb}");
        let ex =
            shaped_distribution_for_entropy(&c.points, ShapingFamily::Exponential, 13.0 / 3.0)
                .unwrap();
        let r_ex = ratio(&ex.probabilities);
        assert!((r_ex / 620.4 - 1.0).abs() < 1e-3, "EXP ratio {r_ex}");
        // Peak-to-average difference between the two shaped sources.
        let papr_mb = c.with_probabilities(mb.probabilities.clone()).papr_db();
        let papr_ex = c.with_probabilities(ex.probabilities.clone()).papr_db();
        let diff = (papr_mb - papr_ex).abs();
        assert!((diff - 0.2032).abs() < 0.02, "PAPR diff {diff}");
    }

    #[test]
    fn amplitude_alphabet_solution_matches_reference() {
        let d = shaped_amplitudes_for_entropy(
            &[1.0, 3.0, 5.0, 7.0],
            ShapingFamily::MaxwellBoltzmann,
            7.0 / 6.0,
        )
        .unwrap();
        assert!((d.lambda - 0.10563).abs() < 1e-4, "lambda {}", d.lambda);
        let expected = [0.66003, 0.28351, 0.05231, 0.00415];
        for (p, e) in d.probabilities.iter().zip(expected) {
            assert!((p - e).abs() < 1e-4, "probs {:?}", d.probabilities);
        }
    }

    #[test]
    fn maxent_rejects_unreachable_entropy() {
        let c = build_constellation(&ConstellationKind::SquareQam { order: 16 });
        assert!(matches!(
            shaped_distribution_for_entropy(&c.points, ShapingFamily::MaxwellBoltzmann, 4.5),
            Err(ShapingError::EntropyUnreachable { .. })
        ));
    }

    #[test]
    fn ccdm_small_blocks_roundtrip_and_reject() {
        let spec = CcdmSpec::new(vec![2, 2]);
        assert_eq!(spec.block_len(), 4);
        assert_eq!(spec.codeword_count(), BigUint::from(6u32));
        assert_eq!(spec.input_bits(), 2);
        let mut seen = std::collections::HashSet::new();
        for v in 0..4u32 {
            let bits: Vec<bool> = (0..2).rev().map(|i| (v >> i) & 1 == 1).collect();
            let seq = ccdm_encode(&bits, &spec).unwrap();
            let counts = seq.iter().filter(|&&s| s == 0).count();
            assert_eq!(counts, 2);
            assert!(seen.insert(seq.clone()));
            assert_eq!(ccdm_decode(&seq, &spec).unwrap(), bits);
        }
        assert!(ccdm_decode(&[0, 0, 0, 1], &spec).is_err());
        assert!(ccdm_decode(&[0, 0, 1, 1, 1], &spec).is_err());
        // A three-letter alphabet block.
        let spec = CcdmSpec::new(vec![3, 2, 1]);
        assert_eq!(spec.codeword_count(), BigUint::from(60u32));
        assert_eq!(spec.input_bits(), 5);
        for v in 0..32u32 {
            let bits: Vec<bool> = (0..5).rev().map(|i| (v >> i) & 1 == 1).collect();
            let seq = ccdm_encode(&bits, &spec).unwrap();
            assert_eq!(ccdm_decode(&seq, &spec).unwrap(), bits);
        }
    }

    #[test]
    fn ccdm_ninety_six_symbol_block_rate() {
        let d = shaped_amplitudes_for_entropy(
            &[1.0, 3.0, 5.0, 7.0],
            ShapingFamily::MaxwellBoltzmann,
            7.0 / 6.0,
        )
        .unwrap();
        let comp = composition_from_probabilities(&d.probabilities, 96);
        assert_eq!(comp, vec![63, 27, 5, 1]);
        let spec = CcdmSpec::new(comp);
        assert_eq!(spec.input_bits(), 108);
        assert!((spec.rate_per_symbol() - 1.125).abs() < 1e-12);
        assert!((spec.rate_per_symbol() - d.entropy_bits).abs() < 0.1);
    }

    #[test]
    fn pas_rate_identities() {
        let r = pas_rates(6, 5.0 / 6.0, 7.0 / 6.0).unwrap();
        assert!((r.r_info - 10.0 / 3.0).abs() < 1e-12);
        assert!((r.oh - 0.2).abs() < 1e-12);
        // Matching a uniform 4-bit comparator at the same FEC rate recovers
        // both the matcher rate and the net rate.
        let r2 = pas_rates_matching_uniform(6, 5.0 / 6.0, 4).unwrap();
        assert!((r2.r_dm - 7.0 / 6.0).abs() < 1e-12);
        assert!((r2.r_info - 4.0 * 5.0 / 6.0).abs() < 1e-12);
        // Uniform matcher rate m/2 - 1 collapses to m * R_FEC for any rate.
        for &(m, rf) in &[(4u32, 0.9), (6, 0.8), (8, 0.77), (10, 0.85)] {
            let r = pas_rates(m, rf, m as f64 / 2.0 - 1.0).unwrap();
            assert!((r.r_info - m as f64 * rf).abs() < 1e-12);
        }
    }

    #[test]
    fn pas_minimum_fec_rates() {
        let cases = [(4u32, 0.5, 1.0), (6, 2.0 / 3.0, 0.5), (8, 0.75, 1.0 / 3.0), (10, 0.8, 0.25)];
        for (m, r_min, oh_max) in cases {
            let (r, oh) = min_fec_rate(m);
            assert!((r - r_min).abs() < 1e-12);
            assert!((oh - oh_max).abs() < 1e-12);
        }
        assert!(matches!(pas_rates(6, 0.6, 1.0), Err(ShapingError::FecRateTooLow { .. })));
    }

    #[test]
    fn ngmi_threshold_values() {
        assert!((ngmi_threshold_gmi(4.0, 4, 0.9) - 3.6).abs() < 1e-12);
        assert!((ngmi_threshold_gmi(5.0, 5, 0.9) - 4.5).abs() < 1e-12);
        assert!((ngmi_threshold_gmi(13.0 / 3.0, 6, 0.9) - 56.0 / 15.0).abs() < 1e-12);
        assert!((ngmi_threshold_gmi(31.0 / 6.0, 6, 0.9) - 137.0 / 30.0).abs() < 1e-12);
    }

    #[test]
    fn capacity_and_mi_saturation() {
        assert!((awgn_capacity_bits(lin_to_db(15.0)) - 4.0).abs() < 1e-12);
        let c = build_constellation(&ConstellationKind::SquareQam { order: 16 });
        let mi = mi_awgn_quadrature(&c, 30.0);
        assert!((mi - 4.0).abs() < 1e-4, "MI {mi}");
        // MI never exceeds capacity.
        for snr in [0.0, 5.0, 10.0, 15.0] {
            assert!(mi_awgn_quadrature(&c, snr) <= awgn_capacity_bits(snr) + 1e-9);
        }
    }

    #[test]
    fn montecarlo_mi_matches_quadrature() {
        let c = build_constellation(&ConstellationKind::SquareQam { order: 16 });
        let (tx, rx) = sample_phase_noise_channel(&c, 15.0, f64::INFINITY, 100_000, 11);
        let metric = DecodingMetric::awgn_for_snr(15.0, 1.0);
        let est = air_montecarlo(&tx, &rx, &c, &metric);
        let mi_q = mi_awgn_quadrature(&c, 15.0);
        assert!(
            (est.mi - mi_q).abs() < 0.03,
            "MC {} vs quadrature {mi_q} (sigma {})",
            est.mi,
            est.mi_sigma
        );
        assert!(est.gmi <= est.mi + 3.0 * est.mi_sigma + 1e-3);
    }

    #[test]
    fn gray_gmi_close_to_mi_at_high_snr() {
        let c = build_constellation(&ConstellationKind::SquareQam { order: 64 });
        let (tx, rx) = sample_phase_noise_channel(&c, 16.0, f64::INFINITY, 100_000, 5);
        let metric = DecodingMetric::awgn_for_snr(16.0, 1.0);
        let est = air_montecarlo(&tx, &rx, &c, &metric);
        assert!(est.mi - est.gmi < 0.05, "MI {} GMI {}", est.mi, est.gmi);
        let gq = gmi_awgn_quadrature(&c, 16.0);
        assert!((est.gmi - gq).abs() < 0.03, "MC GMI {} vs quadrature {gq}", est.gmi);
    }

    #[test]
    fn llr_signs_match_label_on_clean_point() {
        let c = build_constellation(&ConstellationKind::SquareQam { order: 16 });
        let metric = DecodingMetric::awgn_for_snr(30.0, 1.0);
        for (idx, &x) in c.points.iter().enumerate() {
            let llrs = llr_compute(x, &c, &metric);
            let label = c.labels[idx];
            for (bit, &l) in llrs.iter().enumerate() {
                let b = (label >> (c.bits_per_symbol as usize - 1 - bit)) & 1;
                assert!(
                    (b == 1) == (l > 0.0),
                    "point {idx} bit {bit}: label bit {b}, llr {l}"
                );
            }
        }
    }

    #[test]
    fn tikhonov_large_kappa_reduces_to_awgn() {
        let c = build_constellation(&ConstellationKind::SquareQam { order: 64 });
        let sigma2 = 1.0 / db_to_lin(16.0) / 2.0;
        let awgn = DecodingMetric::Awgn { sigma2 };
        let tikh = DecodingMetric::Tikhonov { sigma2, kappa: 1e8 };
        let mut worst: f64 = 0.0;
        for i in 0..21 {
            for j in 0..21 {
                let y = Complex64::new(-1.5 + 0.15 * i as f64, -1.5 + 0.15 * j as f64);
                let la = llr_compute(y, &c, &awgn);
                let lt = llr_compute(y, &c, &tikh);
                for (a, t) in la.iter().zip(&lt) {
                    worst = worst.max((a - t).abs());
                }
                assert_eq!(ml_decide(y, &c, &awgn), ml_decide(y, &c, &tikh));
            }
        }
        assert!(worst < 1e-3, "sup norm {worst}");
    }

    #[test]
    fn tikhonov_regions_distorted_at_strong_phase_noise() {
        let c = build_constellation(&ConstellationKind::SquareQam { order: 64 });
        let sigma2 = 1.0 / db_to_lin(16.0) / 2.0;
        let deg = 8.0f64.to_radians();
        let tikh = DecodingMetric::Tikhonov { sigma2, kappa: 1.0 / (deg * deg) };
        let awgn = DecodingMetric::Awgn { sigma2 };
        let nside = 101;
        let mut differ = 0usize;
        for i in 0..nside {
            for j in 0..nside {
                let y = Complex64::new(
                    -1.5 + 3.0 * i as f64 / (nside - 1) as f64,
                    -1.5 + 3.0 * j as f64 / (nside - 1) as f64,
                );
                if ml_decide(y, &c, &awgn) != ml_decide(y, &c, &tikh) {
                    differ += 1;
                }
            }
        }
        let frac = differ as f64 / (nside * nside) as f64;
        assert!(frac >= 0.01, "only {frac} of the grid differs");
    }

    #[test]
    fn von_mises_sampler_moments() {
        let mut rng = rng_stream(3, 0);
        let kappa = 100.0;
        let n = 20_000;
        let mut sum = 0.0;
        let mut sumsq = 0.0;
        for _ in 0..n {
            let a = sample_von_mises(&mut rng, kappa);
            sum += a;
            sumsq += a * a;
        }
        let mean = sum / n as f64;
        let var = sumsq / n as f64 - mean * mean;
        assert!(mean.abs() < 0.01, "mean {mean}");
        assert!((var - 1.0 / kappa).abs() < 0.002, "var {var}");
    }

    #[test]
    fn mi_invariant_under_rotation() {
        let c = build_constellation(&ConstellationKind::Cross32);
        let (tx, rx) = sample_phase_noise_channel(&c, 14.0, f64::INFINITY, 20_000, 9);
        let metric = DecodingMetric::awgn_for_snr(14.0, 1.0);
        let base = air_montecarlo(&tx, &rx, &c, &metric);
        let rot = Complex64::from_polar(1.0, 0.7);
        let mut c_rot = c.clone();
        for p in &mut c_rot.points {
            *p *= rot;
        }
        let rx_rot: Vec<Complex64> = rx.iter().map(|&y| y * rot).collect();
        let rotated = air_montecarlo(&tx, &rx_rot, &c_rot, &metric);
        assert!((base.mi - rotated.mi).abs() < 1e-9);
        assert!((base.gmi - rotated.gmi).abs() < 1e-9);
    }

    #[test]
    fn annealer_zero_iterations_is_identity() {
        let c = build_constellation(&ConstellationKind::Cross32);
        let sched = AnnealSchedule { n_iters: 0, ..Default::default() };
        let out = optimize_gs(&c, 13.0, 637.0, &sched, 7);
        for (a, b) in c.points.iter().zip(&out.points) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn annealer_never_scores_below_seed() {
        let c = build_constellation(&ConstellationKind::Cross32);
        let sched = AnnealSchedule {
            n_iters: 30,
            n_eval_symbols: 4000,
            ..Default::default()
        };
        let deg = 2.27f64.to_radians();
        let kappa = 1.0 / (deg * deg);
        let out = optimize_gs(&c, 13.0, kappa, &sched, 21);
        // Score both on an independent draw with the same channel.
        let metric = DecodingMetric::tikhonov_for_snr(13.0, 1.0, kappa);
        let (tx, rx) = sample_phase_noise_channel(&c, 13.0, kappa, 30_000, 77);
        let seed_gmi = air_montecarlo(&tx, &rx, &c, &metric).gmi;
        let rx2: Vec<Complex64> = {
            let (tx2, rx2) = sample_phase_noise_channel(&out, 13.0, kappa, 30_000, 77);
            assert_eq!(tx2, tx);
            rx2
        };
        let out_gmi = air_montecarlo(&tx, &rx2, &out, &metric).gmi;
        assert!(
            out_gmi > seed_gmi - 0.02,
            "annealed {out_gmi} vs seed {seed_gmi}"
        );
    }
}
