//! Complex-baseband waveforms and the primitives every transceiver model
//! shares: pulse shaping, Hilbert transform, clipping, uniform quantization,
//! frequency-domain filtering and PAPR.
//!
//! All spectral operations use the signal length directly as the FFT size,
//! i.e. **circular** convolution semantics; scenario code adds guard symbols
//! where edges matter.

use num_complex::Complex64;
use rustfft::FftPlanner;
use std::cell::RefCell;

/// Uniformly sampled complex baseband waveform.
///
/// `samples` are dimensionless field amplitudes normalized so that |E|² is an
/// instantaneous power in watts. `center_freq` records the offset of the
/// complex-baseband center from an absolute reference (0 for most scenarios).
#[derive(Clone, Debug)]
pub struct ComplexSignal {
    pub samples: Vec<Complex64>,
    pub sample_rate: f64,
    pub center_freq: f64,
}

impl ComplexSignal {
    /// Build a signal at `sample_rate` Hz centered at 0 Hz.
    pub fn new(samples: Vec<Complex64>, sample_rate: f64) -> Self {
        assert!(sample_rate > 0.0, "sample_rate must be positive");
        assert!(!samples.is_empty(), "signal must contain at least one sample");
        ComplexSignal {
            samples,
            sample_rate,
            center_freq: 0.0,
        }
    }

    /// Build a real-valued signal (imaginary parts zero).
    pub fn from_real(samples: &[f64], sample_rate: f64) -> Self {
        Self::new(
            samples.iter().map(|&x| Complex64::new(x, 0.0)).collect(),
            sample_rate,
        )
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Mean of |E|² over the waveform (average power, W).
    pub fn mean_power(&self) -> f64 {
        crate::util::mean_power(&self.samples)
    }
}

/// Root-raised-cosine pulse-shaping description.
#[derive(Clone, Copy, Debug)]
pub struct RrcSpec {
    /// Excess-bandwidth fraction in [0, 1].
    pub roll_off: f64,
    /// Nominal filter span in symbols (edge-trim guidance for consumers; the
    /// filter itself is realized exactly in the frequency domain).
    pub span_symbols: usize,
    /// Output samples per symbol.
    pub samples_per_symbol: usize,
}

impl RrcSpec {
    pub fn validate(&self) {
        assert!(
            (0.0..=1.0).contains(&self.roll_off),
            "roll_off must lie in [0, 1]"
        );
        assert!(self.samples_per_symbol >= 1, "samples_per_symbol must be ≥ 1");
        assert!(
            self.span_symbols * self.samples_per_symbol >= 2,
            "span_symbols·samples_per_symbol must be ≥ 2"
        );
    }
}

/// Uniform mid-rise quantizer description.
#[derive(Clone, Copy, Debug)]
pub struct QuantizerSpec {
    pub bits: u32,
    /// Saturation level: outputs are confined to ±(full_scale − step/2).
    pub full_scale: f64,
}

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

/// In-place forward FFT (unnormalized).
pub fn fft_in_place(buf: &mut [Complex64]) {
    let fft = PLANNER.with(|p| p.borrow_mut().plan_fft_forward(buf.len()));
    fft.process(buf);
}

/// In-place inverse FFT, normalized by 1/N so that ifft(fft(x)) = x.
pub fn ifft_in_place(buf: &mut [Complex64]) {
    let n = buf.len();
    let fft = PLANNER.with(|p| p.borrow_mut().plan_fft_inverse(n));
    fft.process(buf);
    let scale = 1.0 / n as f64;
    for b in buf.iter_mut() {
        *b *= scale;
    }
}

/// Frequency of DFT bin `k` of an `n`-point transform at sample rate `fs`,
/// in the two-sided convention (negative frequencies for k > n/2).
#[inline]
pub fn bin_freq(k: usize, n: usize, fs: f64) -> f64 {
    if k <= (n - 1) / 2 {
        k as f64 * fs / n as f64
    } else {
        (k as f64 - n as f64) * fs / n as f64
    }
}

/// Two-sided frequency grid of an `n`-point DFT at sample rate `fs`.
pub fn fft_freqs(n: usize, fs: f64) -> Vec<f64> {
    (0..n).map(|k| bin_freq(k, n, fs)).collect()
}

/// Raised-cosine power spectrum at normalized frequency `f_over_rs`
/// (frequency divided by symbol rate), unit passband.
pub fn raised_cosine_psd(f_over_rs: f64, roll_off: f64) -> f64 {
    let af = f_over_rs.abs();
    if roll_off == 0.0 {
        return if af <= 0.5 { 1.0 } else { 0.0 };
    }
    let f1 = (1.0 - roll_off) / 2.0;
    let f2 = (1.0 + roll_off) / 2.0;
    if af <= f1 {
        1.0
    } else if af <= f2 {
        0.5 * (1.0 + (std::f64::consts::PI / roll_off * (af - f1)).cos())
    } else {
        0.0
    }
}

/// Root-raised-cosine amplitude response at normalized frequency
/// `f_over_rs`; squares to `raised_cosine_psd`.
pub fn rrc_spectrum(f_over_rs: f64, roll_off: f64) -> f64 {
    raised_cosine_psd(f_over_rs, roll_off).sqrt()
}

/// Zero-insertion upsampling: one symbol every `sps` samples.
pub fn upsample(symbols: &[Complex64], sps: usize) -> Vec<Complex64> {
    let mut out = vec![Complex64::new(0.0, 0.0); symbols.len() * sps];
    for (i, s) in symbols.iter().enumerate() {
        out[i * sps] = *s;
    }
    out
}

/// Shape a symbol sequence with a unit-energy root-raised-cosine filter.
///
/// The symbols are upsampled by zero insertion and filtered with the exact
/// frequency-domain RRC response (circular semantics). The output is
/// normalized to unit symbol rate: `sample_rate = samples_per_symbol`.
/// Applying the same filter again (the matched pair) and sampling at symbol
/// instants returns the symbols exactly.
pub fn rrc_shape(symbols: &[Complex64], spec: &RrcSpec) -> ComplexSignal {
    assert!(!symbols.is_empty(), "rrc_shape: empty symbol sequence");
    spec.validate();
    let sps = spec.samples_per_symbol;
    let mut buf = upsample(symbols, sps);
    rrc_filter_in_place(&mut buf, sps, spec.roll_off);
    ComplexSignal::new(buf, sps as f64)
}

/// Apply the unit-energy frequency-domain RRC filter to a waveform sampled
/// at `sps` samples per symbol (in place, circular).
pub fn rrc_filter_in_place(buf: &mut [Complex64], sps: usize, roll_off: f64) {
    let n = buf.len();
    let fs = sps as f64;
    fft_in_place(buf);
    for (k, b) in buf.iter_mut().enumerate() {
        let f = bin_freq(k, n, fs); // in units of the symbol rate
        *b *= (fs * raised_cosine_psd(f, roll_off)).sqrt();
    }
    ifft_in_place(buf);
}

/// Hilbert transform of a real signal, computed in the frequency domain:
/// positive frequencies are rotated by −90°, negative by +90°, and the DC
/// and Nyquist bins are zeroed. cos(2πf₀t) maps to sin(2πf₀t), and
/// x + j·ℋ{x} retains only the positive sideband.
pub fn hilbert(x: &[f64]) -> Vec<f64> {
    assert!(!x.is_empty(), "hilbert: empty input");
    let n = x.len();
    let mut buf: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fft_in_place(&mut buf);
    buf[0] = Complex64::new(0.0, 0.0);
    if n % 2 == 0 {
        buf[n / 2] = Complex64::new(0.0, 0.0);
    }
    let half = (n - 1) / 2;
    for (k, b) in buf.iter_mut().enumerate().skip(1) {
        if k <= half {
            *b *= Complex64::new(0.0, -1.0);
        } else if n % 2 == 1 || k != n / 2 {
            *b *= Complex64::new(0.0, 1.0);
        }
    }
    ifft_in_place(&mut buf);
    buf.iter().map(|z| z.re).collect()
}

/// Analytic signal x + j·ℋ{x} of a real signal: negative-frequency content
/// removed, positive doubled, DC and Nyquist kept at unit weight.
pub fn analytic_signal(x: &[f64]) -> Vec<Complex64> {
    assert!(!x.is_empty(), "analytic_signal: empty input");
    let n = x.len();
    let mut buf: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fft_in_place(&mut buf);
    let half = (n - 1) / 2;
    for (k, b) in buf.iter_mut().enumerate().skip(1) {
        if k <= half {
            *b *= 2.0;
        } else if n % 2 == 1 || k != n / 2 {
            *b = Complex64::new(0.0, 0.0);
        }
    }
    ifft_in_place(&mut buf);
    buf
}

/// Hard clip to [−1, 1]: α for |α| ≤ 1, sign(α) otherwise.
#[inline]
pub fn clip(alpha: f64) -> f64 {
    alpha.clamp(-1.0, 1.0)
}

/// Quantize one real value with a mid-rise uniform quantizer: 2^bits levels
/// spaced by 2·full_scale/2^bits, saturating at ±(full_scale − step/2).
#[inline]
pub fn quantize_value(x: f64, spec: &QuantizerSpec) -> f64 {
    assert!(spec.bits >= 1, "quantizer needs at least 1 bit");
    assert!(spec.full_scale > 0.0, "full_scale must be positive");
    let step = 2.0 * spec.full_scale / (1u64 << spec.bits) as f64;
    let top = spec.full_scale - step / 2.0;
    (((x / step).floor() + 0.5) * step).clamp(-top, top)
}

/// Quantize a real signal elementwise (mid-rise uniform).
pub fn quantize(x: &[f64], spec: &QuantizerSpec) -> Vec<f64> {
    x.iter().map(|&v| quantize_value(v, spec)).collect()
}

/// Quantize a complex signal: the I and Q rails are quantized independently.
pub fn quantize_complex(x: &[Complex64], spec: &QuantizerSpec) -> Vec<Complex64> {
    x.iter()
        .map(|z| Complex64::new(quantize_value(z.re, spec), quantize_value(z.im, spec)))
        .collect()
}

/// Peak-to-average power ratio in dB: 10·log10(max|x|²/mean|x|²).
pub fn papr(x: &[Complex64]) -> f64 {
    assert!(!x.is_empty(), "papr: empty input");
    let peak = x.iter().map(|z| z.norm_sqr()).fold(0.0, f64::max);
    let avg = crate::util::mean_power(x);
    assert!(avg > 0.0, "papr: all-zero signal");
    10.0 * (peak / avg).log10()
}

/// Filter a signal by a frequency response `h(f)` (f in Hz over the two-sided
/// Nyquist band). The FFT size equals the signal length; the operation is a
/// circular convolution. An all-pass response conserves energy exactly.
pub fn apply_freq_response<F: Fn(f64) -> Complex64>(x: &ComplexSignal, h: F) -> ComplexSignal {
    let n = x.samples.len();
    let mut buf = x.samples.clone();
    fft_in_place(&mut buf);
    for (k, b) in buf.iter_mut().enumerate() {
        *b *= h(bin_freq(k, n, x.sample_rate));
    }
    ifft_in_place(&mut buf);
    ComplexSignal {
        samples: buf,
        sample_rate: x.sample_rate,
        center_freq: x.center_freq,
    }
}

/// Chromatic-dispersion transfer function exp(−j·2π²·β₂z·f²) for accumulated
/// dispersion `beta2_z` in s² (β₂ in s²/m times distance in m).
pub fn cd_response(beta2_z: f64) -> impl Fn(f64) -> Complex64 {
    move |f: f64| {
        let phase = -2.0 * std::f64::consts::PI * std::f64::consts::PI * beta2_z * f * f;
        Complex64::from_polar(1.0, phase)
    }
}

/// Super-Gaussian optical band-pass amplitude response of the given order:
/// |H(f)| = exp(−(ln2/2)·((f−center)/(bw3db/2))^(2·order)), so that
/// |H| = −3 dB at center ± bw3db/2.
pub fn super_gaussian_response(
    center_hz: f64,
    bw3db_hz: f64,
    order: u32,
) -> impl Fn(f64) -> Complex64 {
    move |f: f64| {
        let u = (f - center_hz) / (bw3db_hz / 2.0);
        let mag = (-0.5 * std::f64::consts::LN_2 * u.powi(2 * order as i32)).exp();
        Complex64::new(mag, 0.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::util::{mean, rng_stream};
    use approx::assert_abs_diff_eq;
    use rand::Rng;

    fn spec15(sps: usize) -> RrcSpec {
        RrcSpec {
            roll_off: 0.15,
            span_symbols: 32,
            samples_per_symbol: sps,
        }
    }

    #[test]
    fn rrc_single_symbol_is_the_filter_impulse_response() {
        // A lone unit symbol in an otherwise empty frame reproduces the
        // filter's own (circularly shifted) impulse response.
        let nsym = 64;
        let sps = 4;
        let mut symbols = vec![Complex64::new(0.0, 0.0); nsym];
        symbols[0] = Complex64::new(1.0, 0.0);
        let shaped = rrc_shape(&symbols, &spec15(sps));
        // Direct DFT synthesis of the impulse response as an independent
        // reference: g[m] = (1/N)·Σ_k √(sps·RC(f_k))·e^{j2πkm/N}.
        let n = nsym * sps;
        let fs = sps as f64;
        for m in 0..n {
            let mut acc = Complex64::new(0.0, 0.0);
            for k in 0..n {
                let amp = (fs * raised_cosine_psd(bin_freq(k, n, fs), 0.15)).sqrt();
                let ph = 2.0 * std::f64::consts::PI * (k * m % n) as f64 / n as f64;
                acc += amp * Complex64::from_polar(1.0, ph);
            }
            acc /= n as f64;
            assert_abs_diff_eq!(shaped.samples[m].re, acc.re, epsilon = 1e-9);
            assert_abs_diff_eq!(shaped.samples[m].im, acc.im, epsilon = 1e-9);
        }
        // Unit filter energy.
        let e: f64 = shaped.samples.iter().map(|z| z.norm_sqr()).sum();
        assert_abs_diff_eq!(e, 1.0, epsilon = 1e-9);
    }

    #[test]
    fn rrc_matched_pair_is_isi_free() {
        let nsym = 128;
        let sps = 8;
        let symbols: Vec<Complex64> = (0..nsym)
            .map(|i| Complex64::new(if i % 2 == 0 { 1.0 } else { -1.0 }, 0.0))
            .collect();
        let shaped = rrc_shape(&symbols, &spec15(sps));
        let mut rx = shaped.samples.clone();
        rrc_filter_in_place(&mut rx, sps, 0.15);
        for (i, s) in symbols.iter().enumerate() {
            let y = rx[i * sps];
            assert_abs_diff_eq!(y.re, s.re, epsilon = 1e-6);
            assert_abs_diff_eq!(y.im, 0.0, epsilon = 1e-6);
        }
    }

    #[test]
    fn rrc_zero_rolloff_occupies_one_symbol_rate() {
        // Welch-averaged periodogram of a long random QPSK waveform: the
        // −20 dB occupied bandwidth approximates the symbol rate.
        let mut rng = rng_stream(42, 0);
        let nsym = 4096;
        let sps = 4;
        let symbols: Vec<Complex64> = (0..nsym)
            .map(|_| {
                let re = if rng.gen::<bool>() { 1.0 } else { -1.0 };
                let im = if rng.gen::<bool>() { 1.0 } else { -1.0 };
                Complex64::new(re, im) / 2f64.sqrt()
            })
            .collect();
        let shaped = rrc_shape(
            &symbols,
            &RrcSpec {
                roll_off: 0.0,
                span_symbols: 32,
                samples_per_symbol: sps,
            },
        );
        // Hann-windowed Welch estimate (rectangular segmentation would leak
        // across the brick-wall band edge and bias the measurement).
        let seg = 1024;
        let nseg = shaped.samples.len() / seg;
        let hann: Vec<f64> = (0..seg)
            .map(|i| {
                let w = std::f64::consts::PI * i as f64 / seg as f64;
                w.sin() * w.sin()
            })
            .collect();
        let mut psd = vec![0.0; seg];
        for s in 0..nseg {
            let mut buf: Vec<Complex64> = shaped.samples[s * seg..(s + 1) * seg]
                .iter()
                .zip(&hann)
                .map(|(z, w)| z * *w)
                .collect();
            fft_in_place(&mut buf);
            for (k, b) in buf.iter().enumerate() {
                psd[k] += b.norm_sqr();
            }
        }
        let peak = psd.iter().cloned().fold(0.0, f64::max);
        let thresh = peak * 1e-2; // −20 dB
        let above = psd.iter().filter(|&&p| p > thresh).count();
        let bw = above as f64 * sps as f64 / seg as f64; // in symbol rates
        assert!((bw - 1.0).abs() < 0.05, "occupied bandwidth {bw} symbol rates");
    }

    #[test]
    fn hilbert_of_cosine_is_sine() {
        let n = 256;
        let f0 = 8.0 / n as f64;
        let x: Vec<f64> = (0..n)
            .map(|i| (2.0 * std::f64::consts::PI * f0 * i as f64).cos())
            .collect();
        let hx = hilbert(&x);
        for (i, h) in hx.iter().enumerate() {
            let want = (2.0 * std::f64::consts::PI * f0 * i as f64).sin();
            assert_abs_diff_eq!(*h, want, epsilon = 1e-9);
        }
    }

    #[test]
    fn hilbert_of_constant_is_zero() {
        let x = vec![3.7; 100];
        for h in hilbert(&x) {
            assert_abs_diff_eq!(h, 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn hilbert_is_anti_involutive_and_energy_preserving() {
        // Odd length: the identity holds on the whole space except the DC
        // bin (even lengths also exclude the Nyquist bin, which the
        // transform zeroes).
        let mut rng = rng_stream(5, 0);
        let x: Vec<f64> = (0..511).map(|_| rng.gen::<f64>() - 0.5).collect();
        let m = mean(&x);
        let hx = hilbert(&x);
        let hhx = hilbert(&hx);
        for (i, v) in hhx.iter().enumerate() {
            assert_abs_diff_eq!(*v, -(x[i] - m), epsilon = 1e-9);
        }
        let norm_h: f64 = hx.iter().map(|v| v * v).sum::<f64>();
        let norm_x0: f64 = x.iter().map(|v| (v - m) * (v - m)).sum::<f64>();
        assert_abs_diff_eq!(norm_h, norm_x0, epsilon = 1e-9);
    }

    #[test]
    fn analytic_signal_real_part_and_spectrum() {
        let mut rng = rng_stream(6, 0);
        let x: Vec<f64> = (0..256).map(|_| rng.gen::<f64>() - 0.5).collect();
        let a = analytic_signal(&x);
        for (ai, xi) in a.iter().zip(&x) {
            assert_abs_diff_eq!(ai.re, *xi, epsilon = 1e-9);
        }
        let mut buf = a.clone();
        fft_in_place(&mut buf);
        // Negative-frequency bins vanish.
        for k in 129..256 {
            assert!(buf[k].norm() < 1e-9, "negative-frequency leak at bin {k}");
        }
    }

    #[test]
    fn clip_branches() {
        assert_eq!(clip(0.3), 0.3);
        assert_eq!(clip(-2.5), -1.0);
        assert_eq!(clip(1.0), 1.0);
        assert_eq!(clip(7.0), 1.0);
    }

    #[test]
    fn quantizer_two_level_and_idempotent() {
        let spec = QuantizerSpec {
            bits: 1,
            full_scale: 1.0,
        };
        assert_abs_diff_eq!(quantize_value(0.2, &spec), 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(quantize_value(-0.2, &spec), -0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(quantize_value(9.0, &spec), 0.5, epsilon = 1e-15);
        let mut rng = rng_stream(7, 0);
        let spec4 = QuantizerSpec {
            bits: 4,
            full_scale: 2.0,
        };
        let x: Vec<f64> = (0..1000).map(|_| 6.0 * (rng.gen::<f64>() - 0.5)).collect();
        let q1 = quantize(&x, &spec4);
        let q2 = quantize(&q1, &spec4);
        for (a, b) in q1.iter().zip(&q2) {
            assert_abs_diff_eq!(*a, *b, epsilon = 1e-12);
        }
        // Exactly 2^bits distinct levels when the input covers full scale.
        let mut levels: Vec<i64> = q1.iter().map(|v| (v * 1e9).round() as i64).collect();
        levels.sort_unstable();
        levels.dedup();
        assert_eq!(levels.len(), 16);
    }

    #[test]
    fn quantizer_twelve_bit_gaussian_snr_exceeds_60_db() {
        let mut rng = rng_stream(8, 0);
        let spec = QuantizerSpec {
            bits: 12,
            full_scale: 4.0,
        };
        // Gaussian with σ = full_scale/4, confined to the quantizer range so
        // the measurement probes granular resolution (the rule-of-thumb
        // 6.02·bits family of formulas) rather than the loading choice: the
        // ~6e-5 tail beyond 4σ saturates and would otherwise dominate the
        // asymptotic error power.
        let x: Vec<f64> = (0..200_000)
            .map(|_| loop {
                let v = crate::util::randn(&mut rng);
                if v.abs() <= spec.full_scale {
                    break v;
                }
            })
            .collect();
        let q = quantize(&x, &spec);
        let sig: f64 = x.iter().map(|v| v * v).sum();
        let err: f64 = x.iter().zip(&q).map(|(a, b)| (a - b) * (a - b)).sum();
        let snr_db = 10.0 * (sig / err).log10();
        assert!(snr_db > 60.0, "quantization SNR {snr_db:.2} dB");
    }

    #[test]
    fn papr_examples_and_scale_invariance() {
        let cm: Vec<Complex64> = (0..64)
            .map(|i| Complex64::from_polar(2.0, 0.1 * i as f64))
            .collect();
        assert_abs_diff_eq!(papr(&cm), 0.0, epsilon = 1e-12);
        let two = vec![Complex64::new(1.0, 0.0), Complex64::new(3f64.sqrt(), 0.0)];
        assert_abs_diff_eq!(papr(&two), 10.0 * (1.5f64).log10(), epsilon = 1e-12);
        let scaled: Vec<Complex64> = two.iter().map(|z| z * 7.3).collect();
        assert_abs_diff_eq!(papr(&scaled), papr(&two), epsilon = 1e-12);
    }

    #[test]
    fn freq_response_identity_and_energy() {
        let mut rng = rng_stream(9, 0);
        let x = ComplexSignal::new(
            (0..300).map(|_| crate::util::crandn(&mut rng)).collect(),
            10e9,
        );
        let y = apply_freq_response(&x, |_| Complex64::new(1.0, 0.0));
        for (a, b) in x.samples.iter().zip(&y.samples) {
            assert_abs_diff_eq!(a.re, b.re, epsilon = 1e-12);
            assert_abs_diff_eq!(a.im, b.im, epsilon = 1e-12);
        }
        // All-pass (random phase) conserves energy.
        let ap = apply_freq_response(&x, |f| Complex64::from_polar(1.0, (f * 1e-9).sin() * 2.0));
        let e0 = x.mean_power();
        let e1 = ap.mean_power();
        assert_abs_diff_eq!(e1 / e0, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn cd_forward_then_inverse_is_identity() {
        let mut rng = rng_stream(10, 0);
        let x = ComplexSignal::new(
            (0..512).map(|_| crate::util::crandn(&mut rng)).collect(),
            64e9,
        );
        let beta2_z = -21.27e-27 * 80e3; // s²/m × m
        let y = apply_freq_response(&x, cd_response(beta2_z));
        let z = apply_freq_response(&y, cd_response(-beta2_z));
        for (a, b) in x.samples.iter().zip(&z.samples) {
            assert_abs_diff_eq!(a.re, b.re, epsilon = 1e-10);
            assert_abs_diff_eq!(a.im, b.im, epsilon = 1e-10);
        }
    }

    #[test]
    fn super_gaussian_hits_minus_three_db_at_band_edge() {
        let h = super_gaussian_response(0.0, 35e9, 4);
        for f in [-17.5e9, 17.5e9] {
            let mag_db = 20.0 * h(f).norm().log10();
            assert_abs_diff_eq!(mag_db, -3.0103, epsilon = 0.01);
        }
        // Deep stopband beyond the edge.
        assert!(h(35e9).norm() < 1e-4);
    }
}
