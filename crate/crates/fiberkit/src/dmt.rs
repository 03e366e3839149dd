//! Discrete multitone modulation: Hermitian-symmetric multicarrier frames
//! with cyclic prefix, one-tap equalization, per-subcarrier SNR estimation,
//! and greedy bit/power loading.

use crate::shaping::{qam_for_bits, LabeledConstellation};
use crate::signal::{fft_in_place, ifft_in_place};
use num_complex::Complex64;
use rand::Rng;

/// Errors reported by the loading algorithm.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DmtError {
    /// The requested rate exceeds what the profile can carry.
    InfeasibleRate { required_bits: usize, capacity_bits: usize },
}

impl std::fmt::Display for DmtError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            DmtError::InfeasibleRate { required_bits, capacity_bits } => write!(
                f,
                "target rate needs {required_bits} bits per frame, profile carries at most {capacity_bits}"
            ),
        }
    }
}

impl std::error::Error for DmtError {}

/// Frame geometry and per-subcarrier constellations of a multitone link.
#[derive(Debug, Clone)]
pub struct DmtSpec {
    /// Transform size (power of two).
    pub n_fft: usize,
    /// Number of loaded positive-frequency subcarriers (1..=n_modulated).
    pub n_modulated: usize,
    /// Cyclic-prefix length in samples.
    pub cp_len: usize,
    /// Converter sample rate in Hz.
    pub sample_rate: f64,
    /// Constellation used on each modulated subcarrier (probe/default load).
    pub constellations: Vec<LabeledConstellation>,
}

impl DmtSpec {
    /// Builds a spec with 16-point QAM on every subcarrier.
    pub fn new(n_fft: usize, n_modulated: usize, cp_len: usize, sample_rate: f64) -> Self {
        assert!(n_fft.is_power_of_two());
        assert!(n_modulated <= n_fft / 2 - 1, "subcarriers must fit below Nyquist");
        assert!(n_modulated >= 1);
        let c = qam_for_bits(4);
        Self {
            n_fft,
            n_modulated,
            cp_len,
            sample_rate,
            constellations: vec![c; n_modulated],
        }
    }

    /// Samples per frame including the cyclic prefix.
    pub fn frame_len(&self) -> usize {
        self.n_fft + self.cp_len
    }

    /// Multitone symbol (frame) rate in Hz.
    pub fn dmt_symbol_rate(&self) -> f64 {
        self.sample_rate / self.frame_len() as f64
    }

    /// Frequency of subcarrier `k` in Hz.
    pub fn subcarrier_freq(&self, k: usize) -> f64 {
        k as f64 * self.sample_rate / self.n_fft as f64
    }
}

impl Default for DmtSpec {
    fn default() -> Self {
        Self::new(512, 255, 8, 64e9)
    }
}

/// Estimated link quality per subcarrier.
#[derive(Debug, Clone)]
pub struct SnrProfile {
    /// Per-subcarrier SNR in dB.
    pub per_subcarrier_snr_db: Vec<f64>,
    /// Arithmetic mean of the per-subcarrier dB values (the dB expression of
    /// the geometric mean of the linear SNRs).
    pub equivalent_snr_db: f64,
}

impl SnrProfile {
    /// Builds a profile from per-subcarrier dB values.
    pub fn from_per_bin(per_subcarrier_snr_db: Vec<f64>) -> Self {
        let equivalent_snr_db =
            per_subcarrier_snr_db.iter().sum::<f64>() / per_subcarrier_snr_db.len() as f64;
        Self { per_subcarrier_snr_db, equivalent_snr_db }
    }
}

/// Result of bit/power loading.
#[derive(Debug, Clone)]
pub struct LoadingTable {
    /// Bits granted to each subcarrier (0 leaves the bin dark).
    pub bits_per_subcarrier: Vec<u32>,
    /// Linear power scale per subcarrier; the scales sum to the number of
    /// modulated bins, so the band's total power is preserved.
    pub power_scale_per_subcarrier: Vec<f64>,
    /// Gross bit rate carried, in bit/s.
    pub gross_rate: f64,
}

impl LoadingTable {
    /// Total bits per multitone frame.
    pub fn bits_per_frame(&self) -> usize {
        self.bits_per_subcarrier.iter().map(|&b| b as usize).sum()
    }
}

/// Power margin of a loading table against a measured SNR profile: the dB
/// ratio of the band's power budget (one unit per modulated bin, the level
/// at which the profile was measured) to the power the granted bits need
/// at the gap, `Σ_k (2^{b_k} − 1)·Γ/g_k`. Non-negative margin means the
/// allocation is supportable as granted.
pub fn loading_margin_db(profile: &SnrProfile, table: &LoadingTable, snr_gap_db: f64) -> f64 {
    let nm = profile.per_subcarrier_snr_db.len();
    assert_eq!(nm, table.bits_per_subcarrier.len());
    let gap = 10.0f64.powf(snr_gap_db / 10.0);
    let needed: f64 = table
        .bits_per_subcarrier
        .iter()
        .zip(&profile.per_subcarrier_snr_db)
        .map(|(&b, &snr_db)| {
            let g = 10.0f64.powf(snr_db / 10.0);
            (2.0f64.powi(b as i32) - 1.0) * gap / g
        })
        .sum();
    if needed <= 0.0 {
        f64::INFINITY
    } else {
        10.0 * (nm as f64 / needed).log10()
    }
}

/// Maps per-subcarrier symbols (blocks of `n_modulated`) onto real frames
/// with mirrored conjugate bins, zero DC and Nyquist, and a cyclic prefix.
pub fn dmt_modulate(symbols: &[Complex64], spec: &DmtSpec) -> Vec<f64> {
    assert!(
        symbols.len() % spec.n_modulated == 0,
        "symbol count {} is not a whole number of frames of {}",
        symbols.len(),
        spec.n_modulated
    );
    let n_blocks = symbols.len() / spec.n_modulated;
    let n = spec.n_fft;
    let mut out = Vec::with_capacity(n_blocks * spec.frame_len());
    let mut spectrum = vec![Complex64::new(0.0, 0.0); n];
    for blk in 0..n_blocks {
        for v in spectrum.iter_mut() {
            *v = Complex64::new(0.0, 0.0);
        }
        for k in 1..=spec.n_modulated {
            let s = symbols[blk * spec.n_modulated + (k - 1)];
            spectrum[k] = s;
            spectrum[n - k] = s.conj();
        }
        ifft_in_place(&mut spectrum);
        let rms = (spectrum.iter().map(|x| x.norm_sqr()).sum::<f64>() / n as f64).sqrt();
        let imag_rms =
            (spectrum.iter().map(|x| x.im * x.im).sum::<f64>() / n as f64).sqrt();
        assert!(
            rms == 0.0 || imag_rms < 1e-12 * rms,
            "mirrored-conjugate frame must be real (imag rms {imag_rms}, rms {rms})"
        );
        for i in n - spec.cp_len..n {
            out.push(spectrum[i].re);
        }
        for v in &spectrum {
            out.push(v.re);
        }
    }
    out
}

/// Strips cyclic prefixes and transforms each frame, returning the raw
/// (unequalized) bins 1..=n_modulated per frame.
pub fn dmt_demodulate_raw(x: &[f64], spec: &DmtSpec) -> Vec<Complex64> {
    dmt_demodulate_raw_shifted(x, spec, 0)
}

/// Like [`dmt_demodulate_raw`], but starts each frame's transform window
/// `window_shift` samples early, inside the cyclic prefix. The shift turns
/// a channel with up to `window_shift` samples of anticausal spread (and up
/// to `cp_len − window_shift` causal spread) back into per-subcarrier
/// complex gains; the extra per-bin rotation is absorbed by the one-tap
/// equalizer.
pub fn dmt_demodulate_raw_shifted(
    x: &[f64],
    spec: &DmtSpec,
    window_shift: usize,
) -> Vec<Complex64> {
    let frame = spec.frame_len();
    assert!(
        x.len() % frame == 0,
        "waveform length {} is not a whole number of frames of {frame}",
        x.len()
    );
    assert!(
        window_shift <= spec.cp_len,
        "window shift {window_shift} exceeds the prefix length {}",
        spec.cp_len
    );
    let n_blocks = x.len() / frame;
    let mut out = Vec::with_capacity(n_blocks * spec.n_modulated);
    let mut buf = vec![Complex64::new(0.0, 0.0); spec.n_fft];
    for blk in 0..n_blocks {
        let start = blk * frame + spec.cp_len - window_shift;
        let body = &x[start..start + spec.n_fft];
        for (b, &v) in buf.iter_mut().zip(body) {
            *b = Complex64::new(v, 0.0);
        }
        fft_in_place(&mut buf);
        out.extend_from_slice(&buf[1..=spec.n_modulated]);
    }
    out
}

/// Per-subcarrier complex gains fitted on known frames.
#[derive(Debug, Clone)]
pub struct OneTapEqualizer {
    pub gains: Vec<Complex64>,
}

impl OneTapEqualizer {
    /// Least-squares single-tap fit `g_k = sum(rx conj(tx)) / sum|tx|^2`
    /// over the training frames.
    pub fn fit(rx_raw: &[Complex64], tx: &[Complex64], spec: &DmtSpec) -> Self {
        assert_eq!(rx_raw.len(), tx.len());
        assert!(rx_raw.len() % spec.n_modulated == 0);
        let n_blocks = rx_raw.len() / spec.n_modulated;
        let mut num = vec![Complex64::new(0.0, 0.0); spec.n_modulated];
        let mut den = vec![0.0f64; spec.n_modulated];
        for blk in 0..n_blocks {
            for k in 0..spec.n_modulated {
                let r = rx_raw[blk * spec.n_modulated + k];
                let t = tx[blk * spec.n_modulated + k];
                num[k] += r * t.conj();
                den[k] += t.norm_sqr();
            }
        }
        let gains = num
            .into_iter()
            .zip(den)
            .map(|(n, d)| if d > 0.0 { n / d } else { Complex64::new(1.0, 0.0) })
            .collect();
        Self { gains }
    }

    /// Divides each bin by its fitted gain.
    pub fn apply(&self, bins: &[Complex64]) -> Vec<Complex64> {
        let nm = self.gains.len();
        assert!(bins.len() % nm == 0);
        bins.iter()
            .enumerate()
            .map(|(i, &b)| b / self.gains[i % nm])
            .collect()
    }
}

/// Demodulates a waveform and equalizes every frame with single taps fitted
/// on the leading frames, whose transmitted symbols are supplied in
/// `training`.
pub fn dmt_demodulate(x: &[f64], spec: &DmtSpec, training: &[Complex64]) -> Vec<Complex64> {
    assert!(
        training.len() % spec.n_modulated == 0 && !training.is_empty(),
        "training must cover whole frames"
    );
    let raw = dmt_demodulate_raw(x, spec);
    assert!(raw.len() >= training.len(), "waveform shorter than the training span");
    let eq = OneTapEqualizer::fit(&raw[..training.len()], training, spec);
    eq.apply(&raw)
}

/// Per-subcarrier SNR from matched transmit/receive symbol records. A
/// single complex gain per bin is refitted before measuring the error power.
pub fn estimate_snr_profile(
    rx: &[Complex64],
    tx: &[Complex64],
    spec: &DmtSpec,
) -> SnrProfile {
    assert_eq!(rx.len(), tx.len());
    assert!(rx.len() % spec.n_modulated == 0);
    let n_blocks = rx.len() / spec.n_modulated;
    assert!(n_blocks >= 100, "need at least 100 frames for a stable estimate, got {n_blocks}");
    let eq = OneTapEqualizer::fit(rx, tx, spec);
    let rx_eq = eq.apply(rx);
    let mut sig = vec![0.0f64; spec.n_modulated];
    let mut err = vec![0.0f64; spec.n_modulated];
    for blk in 0..n_blocks {
        for k in 0..spec.n_modulated {
            let t = tx[blk * spec.n_modulated + k];
            let r = rx_eq[blk * spec.n_modulated + k];
            sig[k] += t.norm_sqr();
            err[k] += (r - t).norm_sqr();
        }
    }
    let per: Vec<f64> = sig
        .iter()
        .zip(&err)
        .map(|(&s, &e)| 10.0 * (s / e).log10())
        .collect();
    SnrProfile::from_per_bin(per)
}

/// SNR gap that puts a 16-point QAM subcarrier at its working error-rate
/// threshold (threshold SNR 16.54 dB less the 4-bit QAM requirement).
pub fn default_snr_gap_db() -> f64 {
    16.54 - 10.0 * 15.0f64.log10()
}

/// Greedy incremental bit/power loading: repeatedly grants the bit with the
/// least incremental power cost `3 * 2^b * gap / g_k` (ties to the lowest
/// subcarrier index) until the frame carries the target rate, then
/// renormalizes the per-bin powers to preserve the band's total power.
pub fn levin_campello_load(
    profile: &SnrProfile,
    spec: &DmtSpec,
    target_gross_rate: f64,
    snr_gap_db: f64,
) -> Result<LoadingTable, DmtError> {
    const MAX_BITS: u32 = 8;
    let nm = profile.per_subcarrier_snr_db.len();
    assert_eq!(nm, spec.n_modulated, "profile does not match the spec's subcarrier count");
    let required_bits =
        ((target_gross_rate / spec.dmt_symbol_rate()) - 1e-9).ceil().max(0.0) as usize;
    let capacity_bits = nm * MAX_BITS as usize;
    if required_bits > capacity_bits {
        return Err(DmtError::InfeasibleRate { required_bits, capacity_bits });
    }
    let gap = 10.0f64.powf(snr_gap_db / 10.0);
    let gains: Vec<f64> = profile
        .per_subcarrier_snr_db
        .iter()
        .map(|&db| 10.0f64.powf(db / 10.0))
        .collect();
    let mut bits = vec![0u32; nm];
    for _ in 0..required_bits {
        let mut best_k = usize::MAX;
        let mut best_cost = f64::INFINITY;
        for k in 0..nm {
            if bits[k] >= MAX_BITS {
                continue;
            }
            let cost = 3.0 * 2.0f64.powi(bits[k] as i32) * gap / gains[k];
            if cost < best_cost {
                best_cost = cost;
                best_k = k;
            }
        }
        debug_assert!(best_k != usize::MAX);
        bits[best_k] += 1;
    }
    // Power needed to support b bits at the gap: 3 * gap * (2^b - 1) / g_k.
    let powers: Vec<f64> = bits
        .iter()
        .zip(&gains)
        .map(|(&b, &g)| 3.0 * gap * (2.0f64.powi(b as i32) - 1.0) / g)
        .collect();
    let total: f64 = powers.iter().sum();
    let power_scale_per_subcarrier = if total > 0.0 {
        powers.iter().map(|&p| p * nm as f64 / total).collect()
    } else {
        vec![0.0; nm]
    };
    Ok(LoadingTable {
        bits_per_subcarrier: bits,
        power_scale_per_subcarrier,
        gross_rate: required_bits as f64 * spec.dmt_symbol_rate(),
    })
}

/// Draws uniformly random symbols for every loaded subcarrier, scaled by the
/// table's power allocation; dark bins carry zero.
pub fn random_loaded_symbols<R: Rng>(
    table: &LoadingTable,
    n_blocks: usize,
    rng: &mut R,
) -> Vec<Complex64> {
    let nm = table.bits_per_subcarrier.len();
    let consts: Vec<Option<LabeledConstellation>> = table
        .bits_per_subcarrier
        .iter()
        .map(|&b| if b == 0 { None } else { Some(qam_for_bits(b)) })
        .collect();
    let mut out = Vec::with_capacity(n_blocks * nm);
    for _ in 0..n_blocks {
        for k in 0..nm {
            match &consts[k] {
                None => out.push(Complex64::new(0.0, 0.0)),
                Some(c) => {
                    let idx = rng.gen_range(0..c.size());
                    out.push(c.points[idx] * table.power_scale_per_subcarrier[k].sqrt());
                }
            }
        }
    }
    out
}

/// Hard-decision bit and symbol error counts of a symbol record against a
/// constellation (transmit symbols must lie exactly on scaled points).
/// Returns `(bit_errors, symbol_errors, total_bits)`.
pub fn qam_bit_errors(
    rx: &[Complex64],
    tx: &[Complex64],
    c: &LabeledConstellation,
) -> (u64, u64, u64) {
    assert_eq!(rx.len(), tx.len());
    let mut bit_errors = 0u64;
    let mut sym_errors = 0u64;
    for (&r, &t) in rx.iter().zip(tx) {
        let di = c.nearest_point_index(r);
        let ti = c.nearest_point_index(t);
        if di != ti {
            sym_errors += 1;
            bit_errors += (c.labels[di] ^ c.labels[ti]).count_ones() as u64;
        }
    }
    (bit_errors, sym_errors, rx.len() as u64 * c.bits_per_symbol as u64)
}

/// Aggregate bit-error ratio of equalized symbols against the transmitted
/// ones over all loaded subcarriers of the table.
pub fn dmt_ber(rx: &[Complex64], tx: &[Complex64], table: &LoadingTable) -> f64 {
    assert_eq!(rx.len(), tx.len());
    let nm = table.bits_per_subcarrier.len();
    assert!(rx.len() % nm == 0);
    let n_blocks = rx.len() / nm;
    let mut errors = 0u64;
    let mut total = 0u64;
    for k in 0..nm {
        let b = table.bits_per_subcarrier[k];
        if b == 0 {
            continue;
        }
        let scale = table.power_scale_per_subcarrier[k].sqrt();
        let mut c = qam_for_bits(b);
        for p in &mut c.points {
            *p *= scale;
        }
        let rxk: Vec<Complex64> = (0..n_blocks).map(|blk| rx[blk * nm + k]).collect();
        let txk: Vec<Complex64> = (0..n_blocks).map(|blk| tx[blk * nm + k]).collect();
        let (be, _, tb) = qam_bit_errors(&rxk, &txk, &c);
        errors += be;
        total += tb;
    }
    if total == 0 {
        0.0
    } else {
        errors as f64 / total as f64
    }
}
