//! Double-, vestigial- and single-sideband transmitters for
//! direct-detection links: carrier/clipping bookkeeping, square-law
//! detection with amplifier-noise loading, beating-interference (SSBI)
//! estimation and compensation, chromatic-dispersion photocurrent models,
//! and the equivalent-SNR / required-OSNR sweeps used to compare the three
//! variants at a common data rate.
//!
//! Conventions:
//! - `x(t)` is the real, zero-mean modulating waveform (typically a DMT
//!   signal) with variance `σ²_x`.
//! - SSB builds the analytic field `(x + jℋx)/√2 + c`; DSB drives a power
//!   modulator `√(P̄(1 + clip(x/c′)))`; VSB filters the DSB field down to
//!   (mostly) one sideband.
//! - OSNR is defined as total signal power over dual-polarization ASE in a
//!   reference bandwidth: `OSNR = P_tot / (2·N₀·B_o)` with `N₀` the
//!   per-polarization noise PSD.
//! - The ideal out-of-band-rejection filter in front of the photodiode
//!   matches the transmitted spectral support: one-sided for SSB fields,
//!   double-sided for intensity-modulated (DSB/VSB) fields whose sideband
//!   shaping happened before the amplifier.

use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;

use crate::dmt::{
    dmt_demodulate_raw, dmt_demodulate_raw_shifted, dmt_modulate, estimate_snr_profile,
    levin_campello_load, loading_margin_db, DmtSpec, SnrProfile,
};
use crate::signal::{
    apply_freq_response, bin_freq, cd_response, clip, fft_in_place, hilbert, ifft_in_place,
    super_gaussian_response, ComplexSignal,
};
use crate::util::{crandn, db_to_lin, golden_section_min, lin_to_db, mean, rng_stream};

/// Which transmitter structure generates the optical field.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TxKind {
    /// Intensity modulation, both sidebands present.
    Dsb,
    /// Intensity modulation followed by an optical filter that suppresses
    /// one sideband.
    Vsb,
    /// Field modulation of the analytic signal plus an unmodulated carrier.
    Ssb,
}

/// Optical filter used by the VSB transmitter to suppress one sideband.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum VsbFilter {
    /// Exact one-sided projection `(E + jℋE)/√2`.
    Ideal,
    /// Super-Gaussian band-pass of the given order and 3-dB bandwidth,
    /// centered at `bw_3db/2` so its lower 3-dB edge sits on the carrier.
    SuperGaussian { order: u32, bw_3db: f64 },
}

/// A complete transmitter choice.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TxVariant {
    pub kind: TxKind,
    /// DSB only: drive the modulator with `(1+clip)²` inside the square
    /// root so the transmitted field is affine in the clipped drive.
    pub predistort: bool,
    pub vsb_filter: VsbFilter,
}

impl TxVariant {
    pub fn ssb() -> Self {
        Self { kind: TxKind::Ssb, predistort: false, vsb_filter: VsbFilter::Ideal }
    }

    pub fn dsb() -> Self {
        Self { kind: TxKind::Dsb, predistort: false, vsb_filter: VsbFilter::Ideal }
    }

    pub fn dsb_predistorted() -> Self {
        Self { kind: TxKind::Dsb, predistort: true, vsb_filter: VsbFilter::Ideal }
    }

    pub fn vsb_ideal() -> Self {
        Self { kind: TxKind::Vsb, predistort: false, vsb_filter: VsbFilter::Ideal }
    }

    /// VSB through a fourth-order super-Gaussian with 35 GHz 3-dB bandwidth.
    pub fn vsb_super_gaussian() -> Self {
        Self {
            kind: TxKind::Vsb,
            predistort: false,
            vsb_filter: VsbFilter::SuperGaussian { order: 4, bw_3db: 35e9 },
        }
    }

    /// Short identifier for sweep outputs.
    pub fn name(&self) -> &'static str {
        match (self.kind, self.predistort, self.vsb_filter) {
            (TxKind::Ssb, _, _) => "ssb",
            (TxKind::Dsb, false, _) => "dsb",
            (TxKind::Dsb, true, _) => "dsb-predist",
            (TxKind::Vsb, _, VsbFilter::Ideal) => "vsb-ideal",
            (TxKind::Vsb, _, VsbFilter::SuperGaussian { .. }) => "vsb-supergauss",
        }
    }

    /// Passband of the ideal out-of-band-rejection filter in front of the
    /// photodiode. SSB signals occupy a single sideband, so only
    /// positive-frequency noise beats against the carrier; intensity
    /// signals (and their amplifier noise) are double-sided.
    pub fn obpf_band(&self) -> ObpfBand {
        match self.kind {
            TxKind::Ssb => ObpfBand::PositiveSideband,
            TxKind::Dsb | TxKind::Vsb => ObpfBand::Full,
        }
    }

    pub fn validate(&self) {
        assert!(
            !self.predistort || self.kind == TxKind::Dsb,
            "pre-distortion is defined for the DSB transmitter only"
        );
    }
}

/// Carrier, clipping and power bookkeeping shared by the three
/// transmitters. All fields are stored; which ones drive a given
/// transmitter depends on the variant (`carrier_amp` for SSB,
/// `clip_level`/`mean_power` for DSB/VSB).
#[derive(Debug, Clone, Copy)]
pub struct CarrierSpec {
    /// Carrier-to-signal power ratio ξ (linear).
    pub cspr: f64,
    /// Unmodulated carrier amplitude `c` (√W).
    pub carrier_amp: f64,
    /// Clipping level `c′` in the units of the drive `x`.
    pub clip_level: f64,
    /// Clipping ratio `R_cl = c′²/σ²_x` (linear).
    pub clipping_ratio: f64,
    /// Drive variance σ²_x.
    pub sigma_x2: f64,
    /// Average optical power P̄ of the intensity modulator (W).
    pub mean_power: f64,
}

impl CarrierSpec {
    /// SSB bookkeeping from a target CSPR: `c = √(ξ·σ²_x)`.
    pub fn ssb_from_cspr(cspr: f64, sigma_x2: f64) -> Self {
        assert!(cspr > 0.0 && sigma_x2 > 0.0, "CSPR and drive variance must be positive");
        let c = (cspr * sigma_x2).sqrt();
        Self {
            cspr,
            carrier_amp: c,
            clip_level: c,
            clipping_ratio: cspr,
            sigma_x2,
            mean_power: sigma_x2 * (1.0 + cspr),
        }
    }

    /// DSB/VSB bookkeeping from a clipping ratio: `c′ = √(R_cl·σ²_x)`,
    /// with the CSPR filled in from the Gaussian-drive closed form.
    pub fn dsb_from_clipping_ratio(clipping_ratio: f64, sigma_x2: f64, mean_power: f64) -> Self {
        assert!(
            clipping_ratio > 0.0 && sigma_x2 > 0.0 && mean_power > 0.0,
            "clipping ratio, drive variance and mean power must be positive"
        );
        Self {
            cspr: cspr_closed_form_dsb(clipping_ratio),
            carrier_amp: mean_power.sqrt(),
            clip_level: (clipping_ratio * sigma_x2).sqrt(),
            clipping_ratio,
            sigma_x2,
            mean_power,
        }
    }

    pub fn validate(&self) {
        for (name, v) in [
            ("cspr", self.cspr),
            ("carrier_amp", self.carrier_amp),
            ("clip_level", self.clip_level),
            ("clipping_ratio", self.clipping_ratio),
            ("sigma_x2", self.sigma_x2),
            ("mean_power", self.mean_power),
        ] {
            assert!(v.is_finite() && v > 0.0, "{name} must be positive and finite, got {v}");
        }
    }
}

/// OSNR operating point: linear OSNR measured over `ref_bandwidth`, plus
/// the DAC sampling rate that the equivalent-SNR formulas normalize by.
#[derive(Debug, Clone, Copy)]
pub struct OsnrSpec {
    /// Linear OSNR over `ref_bandwidth`, dual-polarization noise.
    pub osnr: f64,
    /// Reference bandwidth `B_o` in Hz (0.1 nm in the C-band by default).
    pub ref_bandwidth: f64,
    /// DAC sampling rate `R_s` in Hz.
    pub dmt_rate: f64,
}

impl OsnrSpec {
    pub fn from_db(osnr_db: f64, dmt_rate: f64) -> Self {
        Self { osnr: db_to_lin(osnr_db), ref_bandwidth: 12.5e9, dmt_rate }
    }

    pub fn validate(&self) {
        assert!(self.osnr > 0.0 && self.osnr.is_finite(), "OSNR must be positive");
        assert!(
            self.ref_bandwidth > 0.0 && self.ref_bandwidth.is_finite(),
            "reference bandwidth must be positive (zero-bandwidth band is undefined)"
        );
        assert!(self.dmt_rate > 0.0 && self.dmt_rate.is_finite(), "rate must be positive");
    }
}

/// Accumulated chromatic dispersion of a (linear) fiber segment.
#[derive(Debug, Clone, Copy)]
pub struct CdSpec {
    /// Group-velocity dispersion β₂ in ps²/km.
    pub beta2_ps2_per_km: f64,
    /// Length in km.
    pub z_km: f64,
}

impl CdSpec {
    /// Accumulated β₂·z in s² (the argument for the all-pass response).
    pub fn accumulated_beta2_z(&self) -> f64 {
        self.beta2_ps2_per_km * self.z_km * 1e-24
    }

    /// 80 km of standard single-mode fiber (β₂ = −21.27 ps²/km).
    pub fn smf_80km() -> Self {
        Self { beta2_ps2_per_km: -21.27, z_km: 80.0 }
    }

    /// Dispersive memory in samples: the largest group-delay magnitude
    /// across the band, `2π|β₂z|·f_max`, at the given sampling rate. After
    /// square-law detection the effective real-valued channel spreads this
    /// far on *both* sides of the frame, so intensity links need a prefix
    /// of twice this plus a receiver window shift of this amount.
    pub fn memory_samples(&self, sample_rate: f64, f_max: f64) -> usize {
        let tau = 2.0 * std::f64::consts::PI * self.accumulated_beta2_z().abs() * f_max;
        (tau * sample_rate).ceil() as usize
    }
}

// ---------------------------------------------------------------------------
// Transmitters
// ---------------------------------------------------------------------------

/// Builds the SSB field `(x + jℋx)/√2 + c`. The modulated part is analytic
/// (energy only at non-negative frequencies) and carries power σ²_x.
pub fn tx_ssb(x: &[f64], sample_rate: f64, carrier: &CarrierSpec) -> ComplexSignal {
    carrier.validate();
    let h = hilbert(x);
    let c = carrier.carrier_amp;
    let w = 0.5f64.sqrt();
    let samples: Vec<Complex64> = x
        .iter()
        .zip(&h)
        .map(|(&re, &im)| Complex64::new(re * w + c, im * w))
        .collect();
    ComplexSignal::new(samples, sample_rate)
}

/// Builds the intensity-modulated field. Without pre-distortion,
/// `E = √(P̄(1 + clip(x/c′)))`; with pre-distortion the quadratic term
/// `clip²` is added inside the root so that `E = √P̄·(1 + clip(x/c′))`
/// exactly (no square-root nonlinearity left on the drive).
pub fn tx_dsb(x: &[f64], sample_rate: f64, carrier: &CarrierSpec, predistort: bool) -> ComplexSignal {
    carrier.validate();
    let cp = carrier.clip_level;
    let sqrt_p = carrier.mean_power.sqrt();
    let samples: Vec<Complex64> = x
        .iter()
        .map(|&v| {
            let y = clip(v / cp);
            let amp = if predistort {
                sqrt_p * (1.0 + y)
            } else {
                (carrier.mean_power * (1.0 + y)).sqrt()
            };
            Complex64::new(amp, 0.0)
        })
        .collect();
    ComplexSignal::new(samples, sample_rate)
}

/// Suppresses one sideband of a real intensity-modulated field, either
/// exactly (`(E + jℋE)/√2`) or through a super-Gaussian band-pass that
/// leaves a vestige of the lower sideband.
pub fn tx_vsb(dsb_field: &ComplexSignal, filter: &VsbFilter) -> ComplexSignal {
    match *filter {
        VsbFilter::Ideal => {
            let rms = dsb_field.mean_power().sqrt();
            let re: Vec<f64> = dsb_field
                .samples
                .iter()
                .map(|z| {
                    debug_assert!(
                        z.im.abs() <= 1e-9 * rms.max(1e-300),
                        "ideal sideband projection expects a real input field"
                    );
                    z.re
                })
                .collect();
            let h = hilbert(&re);
            let w = 0.5f64.sqrt();
            let samples: Vec<Complex64> = re
                .iter()
                .zip(&h)
                .map(|(&r, &i)| Complex64::new(r * w, i * w))
                .collect();
            ComplexSignal::new(samples, dsb_field.sample_rate)
        }
        VsbFilter::SuperGaussian { order, bw_3db } => {
            apply_freq_response(dsb_field, super_gaussian_response(bw_3db / 2.0, bw_3db, order))
        }
    }
}

/// Dispatches to the right transmitter for the variant.
pub fn transmit(
    x: &[f64],
    sample_rate: f64,
    carrier: &CarrierSpec,
    variant: &TxVariant,
) -> ComplexSignal {
    variant.validate();
    match variant.kind {
        TxKind::Ssb => tx_ssb(x, sample_rate, carrier),
        TxKind::Dsb => tx_dsb(x, sample_rate, carrier, variant.predistort),
        TxKind::Vsb => {
            let dsb = tx_dsb(x, sample_rate, carrier, false);
            tx_vsb(&dsb, &variant.vsb_filter)
        }
    }
}

/// Fraction of total spectral energy at non-negative frequencies.
pub fn positive_sideband_fraction(field: &ComplexSignal) -> f64 {
    let n = field.len();
    let mut buf = field.samples.clone();
    fft_in_place(&mut buf);
    let mut pos = 0.0;
    let mut total = 0.0;
    for (k, b) in buf.iter().enumerate() {
        let p = b.norm_sqr();
        total += p;
        if bin_freq(k, n, 1.0) >= 0.0 {
            pos += p;
        }
    }
    if total == 0.0 {
        1.0
    } else {
        pos / total
    }
}

// ---------------------------------------------------------------------------
// CSPR algebra
// ---------------------------------------------------------------------------

/// Closed-form CSPR of the intensity transmitter for a Gaussian drive with
/// clipping ratio `R_cl`, from the fourth-order expansion of the square
/// root: `ξ ≈ A²/(1−A²)` with `A = 1 − σ²_y/8 − 15σ⁴_y/128`, `σ²_y = 1/R_cl`.
/// Accurate for high clipping ratios; below ≈6 dB the clipped drive is no
/// longer close to Gaussian and the expansion degrades.
pub fn cspr_closed_form_dsb(clipping_ratio: f64) -> f64 {
    assert!(clipping_ratio > 0.0, "clipping ratio must be positive");
    let s2 = 1.0 / clipping_ratio;
    let a = 1.0 - s2 / 8.0 - 15.0 * s2 * s2 / 128.0;
    assert!(
        a > 0.0,
        "clipping ratio {clipping_ratio} is too small for the series expansion"
    );
    let a2 = a * a;
    a2 / (1.0 - a2)
}

/// Inverts [`cspr_closed_form_dsb`]: the clipping ratio whose closed-form
/// CSPR equals `cspr`. Bisection over the monotone branch.
pub fn clipping_ratio_for_cspr_dsb(cspr: f64) -> f64 {
    assert!(cspr > 0.0 && cspr.is_finite());
    // σ²_y ranges over (0, s2_max) where the leading coefficient stays
    // positive; ξ is monotone decreasing in σ²_y on that branch.
    let s2_max = 2.43;
    let f = |s2: f64| cspr_closed_form_dsb(1.0 / s2) - cspr;
    let lo = 1e-12;
    assert!(f(lo) > 0.0 && f(s2_max) < 0.0, "target CSPR {cspr} is out of range");
    let s2 = crate::util::bisect_root(f, lo, s2_max, 1e-13);
    1.0 / s2
}

/// CSPR of a variant: exact `c²/σ²_x` for SSB, the Gaussian closed form
/// for DSB, and — following the published comparison convention — the same
/// DSB closed form for VSB (its curves are plotted against the CSPR mapped
/// from the clipping ratio).
pub fn cspr_of(kind: TxKind, carrier: &CarrierSpec) -> f64 {
    carrier.validate();
    match kind {
        TxKind::Ssb => carrier.carrier_amp * carrier.carrier_amp / carrier.sigma_x2,
        TxKind::Dsb | TxKind::Vsb => cspr_closed_form_dsb(carrier.clipping_ratio),
    }
}

/// Statistical CSPR of a sampled field: `|E{E}|² / var{E}`.
pub fn measured_cspr(field: &ComplexSignal) -> f64 {
    let n = field.len() as f64;
    let m: Complex64 = field.samples.iter().sum::<Complex64>() / n;
    let var: f64 = field.samples.iter().map(|z| (z - m).norm_sqr()).sum::<f64>() / n;
    m.norm_sqr() / var
}

// ---------------------------------------------------------------------------
// Detection
// ---------------------------------------------------------------------------

/// Passband of the ideal rejection filter in front of the photodiode.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ObpfBand {
    /// Keep the whole sampled band.
    Full,
    /// Keep non-negative frequencies only (one-sided signals).
    PositiveSideband,
}

fn keep_positive_band(z: &mut [Complex64]) {
    let n = z.len();
    fft_in_place(z);
    for (k, b) in z.iter_mut().enumerate() {
        if bin_freq(k, n, 1.0) < 0.0 {
            *b = Complex64::new(0.0, 0.0);
        }
    }
    ifft_in_place(z);
}

/// Square-law photodiode with dual-polarization amplifier noise: computes
/// `|E + n_X|² + |n_Y|²` with the noise scaled so the requested OSNR holds
/// over the reference bandwidth, after the ideal rejection filter trims
/// the noise to `band`. The mean (DC) is removed. `osnr = None` selects
/// the noiseless mode `|E|²` (minus DC).
pub fn detect_square_law(
    field: &ComplexSignal,
    band: ObpfBand,
    osnr: Option<&OsnrSpec>,
    seed: u64,
) -> Vec<f64> {
    let n = field.len();
    assert!(n > 0, "empty field");
    let mut current: Vec<f64> = match osnr {
        None => field.samples.iter().map(|z| z.norm_sqr()).collect(),
        Some(os) => {
            os.validate();
            let p_sig = field.mean_power();
            assert!(p_sig > 0.0, "field carries no power");
            let fs = field.sample_rate;
            // OSNR = P_tot/(2·N₀·B_o) → per-polarization PSD N₀, loaded
            // white across the sampled band before the rejection filter.
            let n0 = p_sig / (2.0 * os.osnr * os.ref_bandwidth);
            let amp = (n0 * fs).sqrt();
            let mut rng = rng_stream(seed, 1);
            let mut nx: Vec<Complex64> = (0..n).map(|_| crandn(&mut rng) * amp).collect();
            let mut ny: Vec<Complex64> = (0..n).map(|_| crandn(&mut rng) * amp).collect();
            if band == ObpfBand::PositiveSideband {
                keep_positive_band(&mut nx);
                keep_positive_band(&mut ny);
            }
            field
                .samples
                .iter()
                .zip(nx.iter().zip(&ny))
                .map(|(e, (x, y))| (e + x).norm_sqr() + y.norm_sqr())
                .collect()
        }
    };
    let m = mean(&current);
    for v in &mut current {
        *v -= m;
    }
    current
}

// ---------------------------------------------------------------------------
// SSBI compensation
// ---------------------------------------------------------------------------

fn subtract_demeaned(base: &[f64], est: &[f64]) -> Vec<f64> {
    let m = mean(est);
    base.iter().zip(est).map(|(&b, &e)| b - (e - m)).collect()
}

/// Single-pass SSB compensation: reconstruct the drive from the linear
/// term (`x̂ = i/(√2·c)`), form its quadratic image `(x̂² + ℋ{x̂}²)/2` and
/// subtract it (demeaned). `n_passes` repeats the reconstruction with the
/// corrected current.
pub fn compensate_ssbi_ssb_iterated(i0: &[f64], carrier: &CarrierSpec, n_passes: usize) -> Vec<f64> {
    let gain = 2f64.sqrt() * carrier.carrier_amp;
    let mut out = i0.to_vec();
    for _ in 0..n_passes {
        let u: Vec<f64> = out.iter().map(|&v| v / gain).collect();
        let h = hilbert(&u);
        let est: Vec<f64> = u.iter().zip(&h).map(|(&a, &b)| 0.5 * (a * a + b * b)).collect();
        out = subtract_demeaned(i0, &est);
    }
    out
}

/// Estimate-and-subtract interference compensation after square-law
/// detection of the given variant. `gamma_vsb` scales the VSB estimate
/// `γ·(P̄/2)·ℋ{u − u²/4}²` (with `u` the current normalized by its linear
/// gain `P̄/2`); it is ignored by the other variants. The SSB path is the
/// single-pass reconstruction; the pre-distorted DSB path subtracts the
/// exact back-to-back quadratic image `P̄·û²`; plain DSB has no quadratic
/// term in back-to-back and is returned unchanged.
pub fn compensate_ssbi(
    i0: &[f64],
    variant: &TxVariant,
    carrier: &CarrierSpec,
    gamma_vsb: f64,
) -> Vec<f64> {
    variant.validate();
    match variant.kind {
        TxKind::Ssb => compensate_ssbi_ssb_iterated(i0, carrier, 1),
        TxKind::Vsb => {
            let est = vsb_ssbi_estimate(i0, carrier);
            let scaled: Vec<f64> = est.iter().map(|&e| gamma_vsb * e).collect();
            subtract_demeaned(i0, &scaled)
        }
        TxKind::Dsb => {
            if !variant.predistort {
                return i0.to_vec();
            }
            let pbar = carrier.mean_power;
            let gain = 2.0 * pbar;
            let u: Vec<f64> = i0.iter().map(|&v| v / gain).collect();
            let est: Vec<f64> = u.iter().map(|&a| pbar * a * a).collect();
            subtract_demeaned(i0, &est)
        }
    }
}

/// Unit-γ VSB interference estimate `(P̄/2)·ℋ{u − u²/4}²` with
/// `u = i/(P̄/2)`; the caller scales it by γ.
pub fn vsb_ssbi_estimate(i0: &[f64], carrier: &CarrierSpec) -> Vec<f64> {
    let a = carrier.mean_power / 2.0;
    let inner: Vec<f64> = i0
        .iter()
        .map(|&v| {
            let u = v / a;
            u - u * u / 4.0
        })
        .collect();
    let h = hilbert(&inner);
    h.iter().map(|&v| a * v * v).collect()
}

// ---------------------------------------------------------------------------
// Equivalent-SNR bounds
// ---------------------------------------------------------------------------

/// Upper-bound equivalent SNR (E_s/N₀, linear) assuming the quadratic
/// interference is perfectly removed and only carrier–noise beating
/// remains: `OSNR·4B_o/(R_s(1+ξ))` for SSB, `OSNR·B_o/(R_cl·R_s)` for the
/// intensity variants (DSB and VSB coincide once VSB is indexed by the
/// clipping ratio). Strictly decreasing in ξ and R_cl respectively.
pub fn equivalent_snr_analytic(kind: TxKind, osnr: &OsnrSpec, carrier: &CarrierSpec) -> f64 {
    osnr.validate();
    carrier.validate();
    match kind {
        TxKind::Ssb => {
            let xi = carrier.cspr;
            osnr.osnr * 4.0 * osnr.ref_bandwidth / (osnr.dmt_rate * (1.0 + xi))
        }
        TxKind::Dsb | TxKind::Vsb => {
            osnr.osnr * osnr.ref_bandwidth / (carrier.clipping_ratio * osnr.dmt_rate)
        }
    }
}

// ---------------------------------------------------------------------------
// Chromatic-dispersion photocurrent model
// ---------------------------------------------------------------------------

/// Small-signal intensity-modulation response of a dispersive link,
/// `cos(2π²·β₂z·f²)` — the real part of the all-pass field response seen
/// by a double-sideband intensity signal.
pub fn im_response(f: f64, cd: &CdSpec) -> f64 {
    let arg = 2.0 * std::f64::consts::PI.powi(2) * cd.accumulated_beta2_z() * f * f;
    arg.cos()
}

/// Lowest positive frequency where the intensity-modulation response
/// crosses zero: `2π²|β₂z|f² = π/2`.
pub fn first_im_notch_freq(cd: &CdSpec) -> f64 {
    let b = cd.accumulated_beta2_z().abs();
    assert!(b > 0.0, "no dispersion, no notch");
    (1.0 / (4.0 * std::f64::consts::PI * b)).sqrt()
}

/// Decomposition of the dispersive intensity-detection photocurrent.
#[derive(Debug, Clone)]
pub struct CdPhotocurrentTerms {
    /// Drive filtered by the real part of the dispersion response.
    pub linear: Vec<f64>,
    /// Quadratic (interference-like) term.
    pub quadratic: Vec<f64>,
    /// `linear + quadratic` (noiseless photocurrent minus the P̄ DC).
    pub total: Vec<f64>,
    /// Multiplier on `Re{n_X}` for the additive beat noise that detection
    /// would contribute on top of these terms.
    pub noise_beat_gain: f64,
}

/// Second-order model of intensity detection after chromatic dispersion.
/// With `y = clip(x/c′)` and `h` the all-pass dispersion response:
/// - plain drive: `i ≈ P̄[(y − y²/4)⊗Re{h}] + (P̄/4)|(y − y²/4)⊗h|²`,
/// - pre-distorted drive: `i ≈ 2P̄[y⊗Re{h}] + P̄|y⊗h|²` (exact at z=0).
pub fn cd_photocurrent_model(
    x: &[f64],
    sample_rate: f64,
    carrier: &CarrierSpec,
    cd: &CdSpec,
    predistort: bool,
) -> CdPhotocurrentTerms {
    carrier.validate();
    let pbar = carrier.mean_power;
    let drive: Vec<f64> = x
        .iter()
        .map(|&v| {
            let y = clip(v / carrier.clip_level);
            if predistort {
                y
            } else {
                y - y * y / 4.0
            }
        })
        .collect();
    let u = ComplexSignal::from_real(&drive, sample_rate);
    let ucd = apply_freq_response(&u, cd_response(cd.accumulated_beta2_z()));
    let (lin_gain, quad_gain) = if predistort { (2.0 * pbar, pbar) } else { (pbar, pbar / 4.0) };
    let linear: Vec<f64> = ucd.samples.iter().map(|z| lin_gain * z.re).collect();
    let quadratic: Vec<f64> = ucd.samples.iter().map(|z| quad_gain * z.norm_sqr()).collect();
    let total: Vec<f64> = linear.iter().zip(&quadratic).map(|(&l, &q)| l + q).collect();
    CdPhotocurrentTerms { linear, quadratic, total, noise_beat_gain: 2.0 * pbar.sqrt() }
}

// ---------------------------------------------------------------------------
// End-to-end link simulations
// ---------------------------------------------------------------------------

/// One multicarrier link measurement: DMT framing, transmitter variant,
/// optional dispersion, noise-loaded square-law detection, optional
/// interference compensation, per-subcarrier SNR estimation.
#[derive(Debug, Clone)]
pub struct LinkSimConfig {
    pub dmt: DmtSpec,
    pub n_frames: usize,
    pub osnr_db: f64,
    pub seed: u64,
    pub compensate: bool,
    pub cd: Option<CdSpec>,
}

impl LinkSimConfig {
    /// Back-to-back reference configuration: 512-point frames, 255 data
    /// subcarriers of 16-QAM, length-8 prefix at 64 GS/s.
    pub fn b2b(osnr_db: f64, seed: u64) -> Self {
        Self {
            dmt: DmtSpec::new(512, 255, 8, 64e9),
            n_frames: 128,
            osnr_db,
            seed,
            compensate: true,
            cd: None,
        }
    }

    /// 80 km dispersive configuration. The prefix must cover the two-sided
    /// spread of the detected intensity channel (±22 samples here), and the
    /// receiver window shift recenters it.
    pub fn smf_80km(osnr_db: f64, seed: u64) -> Self {
        Self {
            dmt: DmtSpec::new(512, 255, 64, 64e9),
            n_frames: 128,
            osnr_db,
            seed,
            compensate: true,
            cd: Some(CdSpec::smf_80km()),
        }
    }

    fn osnr_spec(&self) -> OsnrSpec {
        OsnrSpec::from_db(self.osnr_db, self.dmt.sample_rate)
    }

    /// Receiver transform-window shift: the anticausal half of the
    /// detected channel's spread, bounded by the prefix.
    pub fn window_shift(&self) -> usize {
        match &self.cd {
            None => 0,
            Some(cd) => {
                let f_max = self.dmt.n_modulated as f64 * self.dmt.sample_rate
                    / self.dmt.n_fft as f64;
                cd.memory_samples(self.dmt.sample_rate, f_max).min(self.dmt.cp_len)
            }
        }
    }
}

/// Uniform random draw from each subcarrier's constellation.
pub fn random_dmt_symbols<R: Rng>(spec: &DmtSpec, n_frames: usize, rng: &mut R) -> Vec<Complex64> {
    let mut out = Vec::with_capacity(n_frames * spec.n_modulated);
    for _ in 0..n_frames {
        for k in 0..spec.n_modulated {
            let c = &spec.constellations[k];
            out.push(c.points[rng.gen_range(0..c.size())]);
        }
    }
    out
}

fn carrier_for(kind: TxKind, cspr: f64, sigma_x2: f64) -> CarrierSpec {
    match kind {
        TxKind::Ssb => CarrierSpec::ssb_from_cspr(cspr, sigma_x2),
        TxKind::Dsb | TxKind::Vsb => {
            let rcl = clipping_ratio_for_cspr_dsb(cspr);
            CarrierSpec::dsb_from_clipping_ratio(rcl, sigma_x2, 1.0)
        }
    }
}

fn equiv_snr_of_current(i: &[f64], spec: &DmtSpec, tx: &[Complex64]) -> f64 {
    let rx = dmt_demodulate_raw(i, spec);
    estimate_snr_profile(&rx, tx, spec).equivalent_snr_db
}

fn snr_profile_of_current(
    i: &[f64],
    spec: &DmtSpec,
    tx: &[Complex64],
    window_shift: usize,
) -> SnrProfile {
    let rx = dmt_demodulate_raw_shifted(i, spec, window_shift);
    estimate_snr_profile(&rx, tx, spec)
}

/// Runs the full link once and returns the measured per-subcarrier SNR
/// profile. The same seed drives the symbol draw (stream 0) and the noise
/// draw (stream 1), so sweeps that vary only CSPR/OSNR/γ are smooth.
pub fn simulate_snr_profile(variant: &TxVariant, cspr_db: f64, cfg: &LinkSimConfig) -> SnrProfile {
    variant.validate();
    let spec = &cfg.dmt;
    let mut rng = rng_stream(cfg.seed, 0);
    let tx_syms = random_dmt_symbols(spec, cfg.n_frames, &mut rng);
    let x = dmt_modulate(&tx_syms, spec);
    let sigma_x2 = x.iter().map(|&v| v * v).sum::<f64>() / x.len() as f64;
    let carrier = carrier_for(variant.kind, db_to_lin(cspr_db), sigma_x2);

    let mut field = transmit(&x, spec.sample_rate, &carrier, variant);
    if let Some(cd) = &cfg.cd {
        field = apply_freq_response(&field, cd_response(cd.accumulated_beta2_z()));
    }
    let i0 = detect_square_law(&field, variant.obpf_band(), Some(&cfg.osnr_spec()), cfg.seed);

    let shift = cfg.window_shift();
    let i1 = if !cfg.compensate {
        i0
    } else {
        match variant.kind {
            TxKind::Ssb | TxKind::Dsb => compensate_ssbi(&i0, variant, &carrier, 0.0),
            TxKind::Vsb => {
                // γ is a free parameter: golden-section on the measured
                // equivalent SNR, common random numbers (the estimate is
                // γ-independent, so each trial only re-demodulates).
                let est = vsb_ssbi_estimate(&i0, &carrier);
                let objective = |g: f64| {
                    let scaled: Vec<f64> = est.iter().map(|&e| g * e).collect();
                    let trial = subtract_demeaned(&i0, &scaled);
                    -snr_profile_of_current(&trial, spec, &tx_syms, shift).equivalent_snr_db
                };
                let (gamma, _) = golden_section_min(objective, 0.0, 2.0, 0.02);
                let scaled: Vec<f64> = est.iter().map(|&e| gamma * e).collect();
                subtract_demeaned(&i0, &scaled)
            }
        }
    };

    snr_profile_of_current(&i1, spec, &tx_syms, shift)
}

/// Equivalent SNR (mean of the per-subcarrier SNRs in dB) of one link run.
pub fn simulate_equivalent_snr(variant: &TxVariant, cspr_db: f64, cfg: &LinkSimConfig) -> f64 {
    simulate_snr_profile(variant, cspr_db, cfg).equivalent_snr_db
}

/// One row of an equivalent-SNR sweep.
#[derive(Debug, Clone)]
pub struct EqSnrRow {
    pub variant: &'static str,
    pub cspr_db: f64,
    pub osnr_db: f64,
    pub z_km: f64,
    pub eq_snr_db: f64,
    pub compensated: bool,
}

/// Sweeps the equivalent SNR over a CSPR grid (grid points run in
/// parallel; each point is an independent deterministic simulation).
pub fn cspr_sweep(variant: &TxVariant, cfg: &LinkSimConfig, cspr_db_grid: &[f64]) -> Vec<EqSnrRow> {
    let z_km = cfg.cd.map(|c| c.z_km).unwrap_or(0.0);
    cspr_db_grid
        .par_iter()
        .map(|&cspr_db| EqSnrRow {
            variant: variant.name(),
            cspr_db,
            osnr_db: cfg.osnr_db,
            z_km,
            eq_snr_db: simulate_equivalent_snr(variant, cspr_db, cfg),
            compensated: cfg.compensate,
        })
        .collect()
}

/// Best operating CSPR: 0.5 dB grid over [0, 20] dB, then one parabolic
/// refinement through the best interior triple. Returns
/// `(cspr_db, equivalent_snr_db)`.
pub fn optimal_cspr(variant: &TxVariant, cfg: &LinkSimConfig) -> (f64, f64) {
    optimal_cspr_in(variant, cfg, 0.0, 20.0)
}

/// [`optimal_cspr`] over a custom CSPR window (dispersive links prefer
/// higher carriers than back-to-back).
pub fn optimal_cspr_in(
    variant: &TxVariant,
    cfg: &LinkSimConfig,
    cspr_lo_db: f64,
    cspr_hi_db: f64,
) -> (f64, f64) {
    let n_steps = ((cspr_hi_db - cspr_lo_db) / 0.5).round() as usize;
    let grid: Vec<f64> = (0..=n_steps).map(|i| cspr_lo_db + i as f64 * 0.5).collect();
    let snrs: Vec<f64> = grid
        .par_iter()
        .map(|&c| simulate_equivalent_snr(variant, c, cfg))
        .collect();
    let ib = snrs
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        .map(|(i, _)| i)
        .unwrap();
    let (mut best_x, mut best_y) = (grid[ib], snrs[ib]);
    if ib > 0 && ib + 1 < grid.len() {
        let (x1, y1) = (grid[ib - 1], snrs[ib - 1]);
        let (x2, y2) = (grid[ib], snrs[ib]);
        let (x3, y3) = (grid[ib + 1], snrs[ib + 1]);
        let denom = (x2 - x1) * (y2 - y3) - (x2 - x3) * (y2 - y1);
        if denom.abs() > 1e-12 {
            let num = (x2 - x1).powi(2) * (y2 - y3) - (x2 - x3).powi(2) * (y2 - y1);
            let xv = (x2 - 0.5 * num / denom).clamp(x1, x3);
            let yv = simulate_equivalent_snr(variant, xv, cfg);
            if yv > best_y {
                best_x = xv;
                best_y = yv;
            }
        }
    }
    (best_x, best_y)
}

/// Lowest OSNR (dB, tolerance 0.05 dB) at which bit/power loading on the
/// measured SNR profile reaches `target_gross_rate`. Returns `None` when
/// even `osnr_hi_db` cannot carry the rate. The CSPR stays fixed during
/// the search.
pub fn required_osnr_db_for_rate(
    variant: &TxVariant,
    cspr_db: f64,
    cfg: &LinkSimConfig,
    target_gross_rate: f64,
    snr_gap_db: f64,
    osnr_lo_db: f64,
    osnr_hi_db: f64,
) -> Option<f64> {
    let feasible = |osnr_db: f64| -> bool {
        let mut c = cfg.clone();
        c.osnr_db = osnr_db;
        let profile = simulate_snr_profile(variant, cspr_db, &c);
        match levin_campello_load(&profile, &cfg.dmt, target_gross_rate, snr_gap_db) {
            Ok(table) => loading_margin_db(&profile, &table, snr_gap_db) >= 0.0,
            Err(_) => false,
        }
    };
    if !feasible(osnr_hi_db) {
        return None;
    }
    if feasible(osnr_lo_db) {
        return Some(osnr_lo_db);
    }
    let (mut lo, mut hi) = (osnr_lo_db, osnr_hi_db);
    while hi - lo > 0.05 {
        let mid = 0.5 * (lo + hi);
        if feasible(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Some(hi)
}

/// One row of a required-OSNR comparison.
#[derive(Debug, Clone)]
pub struct RequiredOsnrRow {
    pub variant: &'static str,
    pub z_km: f64,
    pub required_osnr_db: Option<f64>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dmt::default_snr_gap_db;
    use crate::util::{randn, variance};
    use approx::assert_abs_diff_eq;

    fn dmt_drive(spec: &DmtSpec, n_frames: usize, seed: u64) -> (Vec<Complex64>, Vec<f64>) {
        let mut rng = rng_stream(seed, 0);
        let syms = random_dmt_symbols(spec, n_frames, &mut rng);
        let x = dmt_modulate(&syms, spec);
        (syms, x)
    }

    fn sample_variance(x: &[f64]) -> f64 {
        x.iter().map(|&v| v * v).sum::<f64>() / x.len() as f64
    }

    #[test]
    fn ssb_zero_input_gives_constant_carrier() {
        let carrier = CarrierSpec::ssb_from_cspr(4.0, 1.0);
        let x = vec![0.0; 64];
        let field = tx_ssb(&x, 64e9, &carrier);
        for z in &field.samples {
            assert_abs_diff_eq!(z.re, 2.0, epsilon = 1e-15);
            assert_abs_diff_eq!(z.im, 0.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn ssb_single_tone_spectrum_is_one_sided() {
        let n = 1024;
        let k0 = 37;
        let x: Vec<f64> = (0..n)
            .map(|i| (2.0 * std::f64::consts::PI * k0 as f64 * i as f64 / n as f64).cos())
            .collect();
        let carrier = CarrierSpec::ssb_from_cspr(10.0, sample_variance(&x));
        let field = tx_ssb(&x, 64e9, &carrier);
        let mut buf = field.samples.clone();
        fft_in_place(&mut buf);
        let pos = buf[k0].norm_sqr();
        let neg = buf[n - k0].norm_sqr();
        assert!(neg < 1e-20 * pos, "negative image should vanish: {neg:e} vs {pos:e}");
        assert!(buf[0].norm_sqr() > 0.0, "carrier line at DC expected");
        assert!(positive_sideband_fraction(&field) > 1.0 - 1e-6);
    }

    #[test]
    fn ssb_construction_is_linear_in_the_drive() {
        let spec = DmtSpec::new(128, 40, 0, 64e9);
        let (_, x) = dmt_drive(&spec, 4, 11);
        let carrier = CarrierSpec::ssb_from_cspr(10.0, sample_variance(&x));
        let alpha = 0.37;
        let xa: Vec<f64> = x.iter().map(|&v| alpha * v).collect();
        let f1 = tx_ssb(&x, 64e9, &carrier);
        let f2 = tx_ssb(&xa, 64e9, &carrier);
        let c = carrier.carrier_amp;
        for (a, b) in f1.samples.iter().zip(&f2.samples) {
            let lhs = b - Complex64::new(c, 0.0);
            let rhs = (a - Complex64::new(c, 0.0)) * alpha;
            assert!((lhs - rhs).norm() < 1e-12);
        }
    }

    #[test]
    fn ssb_measured_cspr_matches_definition() {
        // Prefix-free frames keep the sample mean and the full-record
        // Nyquist bin exactly zero, so the statistical ratio is exact.
        let spec = DmtSpec::new(512, 255, 0, 64e9);
        let (_, x) = dmt_drive(&spec, 16, 3);
        let s2 = sample_variance(&x);
        let carrier = CarrierSpec::ssb_from_cspr(db_to_lin(10.0), s2);
        let field = tx_ssb(&x, 64e9, &carrier);
        let xi_stat = measured_cspr(&field);
        let xi_def = cspr_of(TxKind::Ssb, &carrier);
        assert!(
            (xi_stat / xi_def - 1.0).abs() < 1e-9,
            "statistical {xi_stat} vs definition {xi_def}"
        );
        assert!(positive_sideband_fraction(&field) > 1.0 - 1e-6);
    }

    #[test]
    fn dsb_clip_floor_and_constant_input() {
        let carrier = CarrierSpec::dsb_from_clipping_ratio(4.0, 1.0, 2.0);
        // x = 0 → constant √P̄.
        let field = tx_dsb(&[0.0; 8], 64e9, &carrier, false);
        for z in &field.samples {
            assert_abs_diff_eq!(z.re, 2f64.sqrt(), epsilon = 1e-15);
        }
        // Saturated negative drive → the field floors at exactly zero.
        let cp = carrier.clip_level;
        let x = [-2.0 * cp, 2.0 * cp];
        let field = tx_dsb(&x, 64e9, &carrier, false);
        assert_abs_diff_eq!(field.samples[0].re, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(field.samples[1].re, (2.0 * carrier.mean_power).sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn dsb_predistortion_matches_expanded_square_root() {
        // With the quadratic term included under the root and no active
        // clipping, the two paths are algebraically identical.
        let mut rng = rng_stream(5, 0);
        let carrier = CarrierSpec::dsb_from_clipping_ratio(25.0, 1.0, 1.5);
        let cp = carrier.clip_level;
        let x: Vec<f64> = (0..4096).map(|_| 0.4 * cp * (2.0 * rng.gen::<f64>() - 1.0)).collect();
        let lhs = tx_dsb(&x, 64e9, &carrier, true);
        for (i, z) in lhs.samples.iter().enumerate() {
            let y = clip(x[i] / cp);
            let rhs = (carrier.mean_power * (1.0 + 2.0 * y + y * y)).sqrt();
            assert!((z.re - rhs).abs() <= 1e-14 * rhs.max(1.0));
        }
    }

    #[test]
    fn dsb_closed_form_cspr_tracks_monte_carlo() {
        let mut rng = rng_stream(17, 0);
        let x: Vec<f64> = (0..1 << 18).map(|_| randn(&mut rng)).collect();
        let s2 = sample_variance(&x);
        // Published operating point: 13 dB clipping ratio within 0.2 dB.
        let carrier = CarrierSpec::dsb_from_clipping_ratio(db_to_lin(13.0), s2, 1.0);
        let field = tx_dsb(&x, 64e9, &carrier, false);
        let closed = lin_to_db(cspr_closed_form_dsb(carrier.clipping_ratio));
        let stat = lin_to_db(measured_cspr(&field));
        assert!((closed - stat).abs() < 0.2, "closed {closed} vs statistical {stat}");

        // The expansion error shrinks monotonically with the clipping ratio.
        let mut errs = Vec::new();
        for rcl_db in [8.0, 10.0, 12.0, 14.0, 16.0] {
            let c = CarrierSpec::dsb_from_clipping_ratio(db_to_lin(rcl_db), s2, 1.0);
            let f = tx_dsb(&x, 64e9, &c, false);
            let e = (lin_to_db(cspr_closed_form_dsb(c.clipping_ratio))
                - lin_to_db(measured_cspr(&f)))
            .abs();
            errs.push(e);
        }
        for w in errs.windows(2) {
            assert!(w[1] <= w[0] + 0.02, "error should not grow: {errs:?}");
        }
    }

    #[test]
    fn clipping_ratio_cspr_roundtrip() {
        for cspr_db in [0.0, 4.0, 8.0, 12.0, 16.0, 20.0] {
            let xi = db_to_lin(cspr_db);
            let rcl = clipping_ratio_for_cspr_dsb(xi);
            let back = cspr_closed_form_dsb(rcl);
            assert!((back / xi - 1.0).abs() < 1e-9, "roundtrip at {cspr_db} dB: {back} vs {xi}");
        }
    }

    #[test]
    fn vsb_ideal_one_sided_and_scaling() {
        // Two-tone intensity field: the ideal projection suppresses the
        // negative-frequency images below -120 dB.
        let n = 2048;
        let x: Vec<f64> = (0..n)
            .map(|i| {
                let t = i as f64 / n as f64;
                0.2 * (2.0 * std::f64::consts::PI * 100.0 * t).cos()
                    + 0.1 * (2.0 * std::f64::consts::PI * 333.0 * t).cos()
            })
            .collect();
        let carrier = CarrierSpec::dsb_from_clipping_ratio(16.0, sample_variance(&x), 1.0);
        let dsb = tx_dsb(&x, 64e9, &carrier, false);
        let vsb = tx_vsb(&dsb, &VsbFilter::Ideal);
        let mut buf = vsb.samples.clone();
        fft_in_place(&mut buf);
        let pos: f64 = (1..n / 2).map(|k| buf[k].norm_sqr()).sum();
        let neg: f64 = (n / 2 + 1..n).map(|k| buf[k].norm_sqr()).sum();
        assert!(neg < 1e-12 * pos, "negative sideband must vanish: {neg:e} vs {pos:e}");

        // A pure carrier loses exactly half its power through the
        // one-sided projection.
        let flat = ComplexSignal::from_real(&vec![1.5; 512], 64e9);
        let v = tx_vsb(&flat, &VsbFilter::Ideal);
        assert_abs_diff_eq!(v.mean_power(), flat.mean_power() / 2.0, epsilon = 1e-12);

        // For a zero-DC analytic signal m, the real part carries exactly
        // half of it and ℋ{Re m} = Im m, so re-projecting the real part
        // reproduces m up to the 1/√2 normalization.
        let spec = DmtSpec::new(256, 100, 0, 64e9);
        let (_, xd) = dmt_drive(&spec, 4, 9);
        let h = hilbert(&xd);
        let w = 0.5f64.sqrt();
        let m: Vec<Complex64> = xd
            .iter()
            .zip(&h)
            .map(|(&r, &i)| Complex64::new(r * w, i * w))
            .collect();
        let re_of_m: Vec<f64> = m.iter().map(|z| z.re).collect();
        let again = tx_vsb(&ComplexSignal::from_real(&re_of_m, 64e9), &VsbFilter::Ideal);
        let rms = (m.iter().map(|z| z.norm_sqr()).sum::<f64>() / m.len() as f64).sqrt();
        for (a, b) in again.samples.iter().zip(&m) {
            assert!((a - b * w).norm() < 1e-9 * rms);
        }
    }

    #[test]
    fn vsb_super_gaussian_leaves_finite_vestige() {
        let n = 4096;
        let fs = 64e9;
        let spec = DmtSpec::new(512, 255, 0, fs);
        let (_, x) = dmt_drive(&spec, 8, 21);
        let carrier = CarrierSpec::dsb_from_clipping_ratio(10.0, sample_variance(&x), 1.0);
        let dsb = tx_dsb(&x[..n], fs, &carrier, false);
        let ideal = tx_vsb(&dsb, &VsbFilter::Ideal);
        let sg = tx_vsb(&dsb, &VsbFilter::SuperGaussian { order: 4, bw_3db: 35e9 });

        let band_energy = |f: &ComplexSignal, lo: f64, hi: f64| -> f64 {
            let mut buf = f.samples.clone();
            fft_in_place(&mut buf);
            buf.iter()
                .enumerate()
                .filter(|(k, _)| {
                    let fr = bin_freq(*k, n, fs);
                    fr >= lo && fr < hi
                })
                .map(|(_, z)| z.norm_sqr())
                .sum()
        };
        let ideal_neg = band_energy(&ideal, -25e9, -1e9);
        let sg_neg = band_energy(&sg, -25e9, -1e9);
        let sg_pos = band_energy(&sg, 1e9, 25e9);
        assert!(ideal_neg < 1e-12 * sg_pos, "ideal projection leaves no lower sideband");
        assert!(sg_neg > 1e-9 * sg_pos, "realistic filter keeps a measurable vestige");
        assert!(sg_neg < 0.5 * sg_pos, "but it still suppresses the lower sideband");
    }

    #[test]
    fn detection_noiseless_term_identity() {
        let spec = DmtSpec::new(512, 255, 0, 64e9);
        let (_, x) = dmt_drive(&spec, 8, 2);
        let s2 = sample_variance(&x);
        let carrier = CarrierSpec::ssb_from_cspr(db_to_lin(10.0), s2);
        let field = tx_ssb(&x, 64e9, &carrier);
        let i0 = detect_square_law(&field, ObpfBand::PositiveSideband, None, 0);

        let h = hilbert(&x);
        let g = 2f64.sqrt() * carrier.carrier_amp;
        let model_raw: Vec<f64> = x
            .iter()
            .zip(&h)
            .map(|(&a, &b)| g * a + 0.5 * (a * a + b * b))
            .collect();
        let m = mean(&model_raw);
        let scale = i0.iter().map(|v| v.abs()).fold(0.0f64, f64::max);
        for (lhs, rhs) in i0.iter().zip(&model_raw) {
            assert!((lhs - (rhs - m)).abs() < 1e-12 * scale);
        }
    }

    #[test]
    fn detection_noise_power_matches_osnr_definition() {
        let n = 1 << 17;
        let fs = 64e9;
        let c = 0.2;
        let field = ComplexSignal::new(vec![Complex64::new(c, 0.0); n], fs);
        let osnr = OsnrSpec::from_db(30.0, fs);
        let n0 = (c * c) / (2.0 * osnr.osnr * osnr.ref_bandwidth);
        let s2 = n0 * fs;

        let i_full = detect_square_law(&field, ObpfBand::Full, Some(&osnr), 42);
        let expect_full = 2.0 * c * c * s2 + 2.0 * s2 * s2;
        let got_full = variance(&i_full);
        assert!(
            (lin_to_db(got_full / expect_full)).abs() < 0.1,
            "full band: {got_full:e} vs {expect_full:e}"
        );

        let i_one = detect_square_law(&field, ObpfBand::PositiveSideband, Some(&osnr), 42);
        let expect_one = c * c * s2 + 2.0 * (s2 / 2.0) * (s2 / 2.0);
        let got_one = variance(&i_one);
        assert!(
            (lin_to_db(got_one / expect_one)).abs() < 0.1,
            "one-sided band: {got_one:e} vs {expect_one:e}"
        );
    }

    #[test]
    fn detection_square_law_scaling() {
        let spec = DmtSpec::new(128, 40, 0, 64e9);
        let (_, x) = dmt_drive(&spec, 2, 1);
        let carrier = CarrierSpec::ssb_from_cspr(8.0, sample_variance(&x));
        let field = tx_ssb(&x, 64e9, &carrier);
        let doubled = ComplexSignal::new(
            field.samples.iter().map(|z| z * 2.0).collect(),
            field.sample_rate,
        );
        let i1 = detect_square_law(&field, ObpfBand::PositiveSideband, None, 0);
        let i2 = detect_square_law(&doubled, ObpfBand::PositiveSideband, None, 0);
        let scale = i1.iter().map(|v| v.abs()).fold(0.0f64, f64::max);
        for (a, b) in i1.iter().zip(&i2) {
            assert!((b - 4.0 * a).abs() < 1e-12 * scale);
        }
    }

    #[test]
    fn ssb_loopback_is_interference_limited_and_compensation_helps() {
        let spec = DmtSpec::new(512, 255, 0, 64e9);
        let mut rng = rng_stream(23, 0);
        let syms = random_dmt_symbols(&spec, 128, &mut rng);
        let x = dmt_modulate(&syms, &spec);
        let carrier = CarrierSpec::ssb_from_cspr(db_to_lin(10.0), sample_variance(&x));
        let field = tx_ssb(&x, 64e9, &carrier);
        let i0 = detect_square_law(&field, ObpfBand::PositiveSideband, None, 0);
        let snr_plain = equiv_snr_of_current(&i0, &spec, &syms);
        assert!(
            (10.0..20.0).contains(&snr_plain),
            "noiseless recovery should be interference-limited, got {snr_plain} dB"
        );
        let i1 = compensate_ssbi_ssb_iterated(&i0, &carrier, 1);
        let snr_comp = equiv_snr_of_current(&i1, &spec, &syms);
        assert!(
            snr_comp - snr_plain >= 3.0,
            "single-pass compensation should help: {snr_plain} → {snr_comp} dB"
        );
    }

    #[test]
    fn analytic_bound_hand_value_and_monotonicity() {
        let osnr = OsnrSpec::from_db(30.0, 64e9);
        let c10 = CarrierSpec::ssb_from_cspr(db_to_lin(10.0), 1.0);
        let v = lin_to_db(equivalent_snr_analytic(TxKind::Ssb, &osnr, &c10));
        assert_abs_diff_eq!(v, 18.5147, epsilon = 5e-3);

        // ξ → 0 approaches the 4·B_o/R_s ceiling.
        let tiny = CarrierSpec::ssb_from_cspr(1e-9, 1.0);
        let ceil = equivalent_snr_analytic(TxKind::Ssb, &osnr, &tiny);
        assert_abs_diff_eq!(
            ceil,
            osnr.osnr * 4.0 * osnr.ref_bandwidth / osnr.dmt_rate,
            epsilon = 1e-3
        );

        let mut prev = f64::INFINITY;
        for xi_db in [0.0, 5.0, 10.0, 15.0, 20.0] {
            let c = CarrierSpec::ssb_from_cspr(db_to_lin(xi_db), 1.0);
            let s = equivalent_snr_analytic(TxKind::Ssb, &osnr, &c);
            assert!(s < prev, "bound must decrease with CSPR");
            prev = s;
        }
        let mut prev = f64::INFINITY;
        for rcl_db in [6.0, 9.0, 12.0, 15.0] {
            let c = CarrierSpec::dsb_from_clipping_ratio(db_to_lin(rcl_db), 1.0, 1.0);
            let s = equivalent_snr_analytic(TxKind::Dsb, &osnr, &c);
            assert!(s < prev, "bound must decrease with clipping ratio");
            prev = s;
        }
    }

    #[test]
    fn ssb_high_cspr_measurement_approaches_bound() {
        let cfg = LinkSimConfig::b2b(30.0, 7);
        let cspr_db = 18.0;
        let measured = simulate_equivalent_snr(&TxVariant::ssb(), cspr_db, &cfg);
        let carrier = CarrierSpec::ssb_from_cspr(db_to_lin(cspr_db), 1.0);
        let bound = lin_to_db(equivalent_snr_analytic(
            TxKind::Ssb,
            &OsnrSpec::from_db(30.0, 64e9),
            &carrier,
        ));
        assert!(
            (measured - bound).abs() < 0.3,
            "measured {measured} dB vs noise-beat bound {bound} dB"
        );
    }

    #[test]
    fn dispersion_response_is_all_pass_with_the_expected_notch() {
        let cd = CdSpec::smf_80km();
        let spec = DmtSpec::new(256, 100, 0, 64e9);
        let (_, x) = dmt_drive(&spec, 4, 31);
        let f = ComplexSignal::from_real(&x, 64e9);
        let g = apply_freq_response(&f, cd_response(cd.accumulated_beta2_z()));
        let e_in: f64 = f.samples.iter().map(|z| z.norm_sqr()).sum();
        let e_out: f64 = g.samples.iter().map(|z| z.norm_sqr()).sum();
        assert!((e_out / e_in - 1.0).abs() < 1e-12, "all-pass must conserve energy");

        let notch = first_im_notch_freq(&cd);
        assert_abs_diff_eq!(notch, 6.8386e9, epsilon = 2e6);
        assert!(im_response(notch, &cd).abs() < 1e-9);
        assert!(im_response(0.0, &cd) > 0.999_999);
    }

    #[test]
    fn cd_model_reduces_to_back_to_back_at_z0() {
        let spec = DmtSpec::new(512, 255, 0, 64e9);
        let (_, x) = dmt_drive(&spec, 4, 13);
        let carrier =
            CarrierSpec::dsb_from_clipping_ratio(db_to_lin(8.0), sample_variance(&x), 1.3);
        let z0 = CdSpec { beta2_ps2_per_km: -21.27, z_km: 0.0 };

        // Pre-distorted drive: the model equals direct detection exactly.
        let terms = cd_photocurrent_model(&x, 64e9, &carrier, &z0, true);
        let field = tx_dsb(&x, 64e9, &carrier, true);
        let i0 = detect_square_law(&field, ObpfBand::Full, None, 0);
        let m = mean(&terms.total);
        let scale = i0.iter().map(|v| v.abs()).fold(0.0f64, f64::max);
        for (a, b) in i0.iter().zip(&terms.total) {
            assert!((a - (b - m)).abs() < 1e-12 * scale);
        }

        // Plain drive: the model equals direct detection of the
        // second-order field expansion √P̄(1 + (y − y²/4)/2).
        let terms = cd_photocurrent_model(&x, 64e9, &carrier, &z0, false);
        let sqrt_p = carrier.mean_power.sqrt();
        let taylor: Vec<Complex64> = x
            .iter()
            .map(|&v| {
                let y = clip(v / carrier.clip_level);
                let u = y - y * y / 4.0;
                Complex64::new(sqrt_p * (1.0 + 0.5 * u), 0.0)
            })
            .collect();
        let i0 = detect_square_law(&ComplexSignal::new(taylor, 64e9), ObpfBand::Full, None, 0);
        let m = mean(&terms.total);
        for (a, b) in i0.iter().zip(&terms.total) {
            assert!((a - (b - m)).abs() < 1e-12 * scale);
        }
    }

    #[test]
    fn dsb_after_dispersion_is_non_gaussian() {
        let spec = DmtSpec::new(512, 255, 32, 64e9);
        let (_, x) = dmt_drive(&spec, 60, 19);
        let carrier = carrier_for(TxKind::Dsb, db_to_lin(10.0), sample_variance(&x));
        let field = tx_dsb(&x, 64e9, &carrier, false);
        let disp = apply_freq_response(&field, cd_response(CdSpec::smf_80km().accumulated_beta2_z()));
        let i0 = detect_square_law(&disp, ObpfBand::Full, None, 0);
        let var = variance(&i0);
        let m = mean(&i0);
        let m4 = i0.iter().map(|&v| (v - m).powi(4)).sum::<f64>() / i0.len() as f64;
        let excess = m4 / (var * var) - 3.0;
        assert!(excess > 0.2, "dispersed intensity signal should be non-Gaussian, excess {excess}");
    }

    #[test]
    fn vsb_gamma_zero_is_identity() {
        let i0: Vec<f64> = (0..256).map(|k| ((k * 37) % 101) as f64 / 50.0 - 1.0).collect();
        let carrier = CarrierSpec::dsb_from_clipping_ratio(10.0, 1.0, 1.0);
        let out = compensate_ssbi(&i0, &TxVariant::vsb_ideal(), &carrier, 0.0);
        for (a, b) in i0.iter().zip(&out) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    #[ignore]
    fn probe_80km_bin_percentiles() {
        for (label, variant, comp) in [
            ("plain", TxVariant::dsb(), false),
            ("predist-raw", TxVariant::dsb_predistorted(), false),
            ("predist-comp", TxVariant::dsb_predistorted(), true),
            ("vsb-ideal", TxVariant::vsb_ideal(), true),
            ("vsb-sg", TxVariant::vsb_super_gaussian(), true),
            ("ssb", TxVariant::ssb(), true),
        ] {
            for cspr_db in [10.0, 12.0, 14.0, 16.0, 18.0] {
                for osnr_db in [38.0, 44.0] {
                    let mut c = LinkSimConfig::smf_80km(osnr_db, 6);
                    c.compensate = comp;
                    let prof = simulate_snr_profile(&variant, cspr_db, &c);
                    let mut s = prof.per_subcarrier_snr_db.clone();
                    s.sort_by(|a, b| a.partial_cmp(b).unwrap());
                    let q = |p: f64| s[((s.len() - 1) as f64 * p) as usize];
                    let table = levin_campello_load(&prof, &c.dmt, 120e9, default_snr_gap_db());
                    let margin = table
                        .map(|t| loading_margin_db(&prof, &t, default_snr_gap_db()))
                        .unwrap_or(f64::NEG_INFINITY);
                    println!(
                        "{label:13} cspr {cspr_db:4.1} osnr {osnr_db:4.1}  mean {:6.2}  p25 {:6.2}  p50 {:6.2}  p75 {:6.2}  p90 {:6.2}  margin {margin:6.2}",
                        prof.equivalent_snr_db,
                        q(0.25),
                        q(0.5),
                        q(0.75),
                        q(0.9)
                    );
                }
            }
        }
    }

    #[test]
    #[ignore]
    fn probe_ssb_paths() {
        // Localize where the 80 km SSB path loses SNR relative to b2b.
        for (label, cd, comp, osnr) in [
            ("b2b    comp  osnr44", None, true, Some(44.0)),
            ("b2b    raw   osnr44", None, false, Some(44.0)),
            ("b2b    comp  nonoise", None, true, None),
            ("b2b    raw   nonoise", None, false, None),
            ("80km   comp  osnr44", Some(CdSpec::smf_80km()), true, Some(44.0)),
            ("80km   raw   osnr44", Some(CdSpec::smf_80km()), false, Some(44.0)),
            ("80km   comp  nonoise", Some(CdSpec::smf_80km()), true, None),
            ("80km   raw   nonoise", Some(CdSpec::smf_80km()), false, None),
        ] {
            let spec = DmtSpec::new(512, 255, 64, 64e9);
            let mut rng = rng_stream(6, 0);
            let syms = random_dmt_symbols(&spec, 128, &mut rng);
            let x = dmt_modulate(&syms, &spec);
            let carrier = CarrierSpec::ssb_from_cspr(db_to_lin(12.0), sample_variance(&x));
            let mut field = tx_ssb(&x, 64e9, &carrier);
            let mut shift = 0usize;
            if let Some(c) = cd {
                field = apply_freq_response(&field, cd_response(c.accumulated_beta2_z()));
                shift = c.memory_samples(64e9, 255.0 * 64e9 / 512.0);
            }
            let os = osnr.map(|db| OsnrSpec::from_db(db, 64e9));
            let i0 = detect_square_law(&field, ObpfBand::PositiveSideband, os.as_ref(), 6);
            let i1 = if comp { compensate_ssbi_ssb_iterated(&i0, &carrier, 1) } else { i0 };
            let snr = snr_profile_of_current(&i1, &spec, &syms, shift).equivalent_snr_db;
            println!("{label}: {snr:6.2} dB");
        }
    }

    #[test]
    #[ignore]
    fn probe_ssb_cd_terms() {
        // Split the noiseless 80 km SSB current into its exact linear and
        // quadratic parts and measure the demodulated quality of each.
        let spec = DmtSpec::new(512, 255, 64, 64e9);
        let mut rng = rng_stream(6, 0);
        let syms = random_dmt_symbols(&spec, 128, &mut rng);
        let x = dmt_modulate(&syms, &spec);
        let carrier = CarrierSpec::ssb_from_cspr(db_to_lin(12.0), sample_variance(&x));
        let c = carrier.carrier_amp;
        for (label, cd) in [
            ("b2b ", CdSpec { beta2_ps2_per_km: -21.27, z_km: 0.0 }),
            ("80km", CdSpec::smf_80km()),
        ] {
            let shift = cd.memory_samples(64e9, 255.0 * 64e9 / 512.0);
            let h = hilbert(&x);
            let xa: Vec<Complex64> = x
                .iter()
                .zip(&h)
                .map(|(&r, &i)| Complex64::new(r, i) * 0.5f64.sqrt())
                .collect();
            let xac = apply_freq_response(
                &ComplexSignal::new(xa, 64e9),
                cd_response(cd.accumulated_beta2_z()),
            );
            let lin: Vec<f64> = xac.samples.iter().map(|z| 2.0 * c * z.re).collect();
            let quad: Vec<f64> = xac.samples.iter().map(|z| z.norm_sqr()).collect();
            let total: Vec<f64> = lin.iter().zip(&quad).map(|(&l, &q)| l + q).collect();

            let snr_lin = snr_profile_of_current(&lin, &spec, &syms, shift).equivalent_snr_db;
            let snr_tot = snr_profile_of_current(&total, &spec, &syms, shift).equivalent_snr_db;
            // Residual after the single-pass compensator on the exact total.
            let comp = compensate_ssbi_ssb_iterated(&total, &carrier, 1);
            let snr_comp = snr_profile_of_current(&comp, &spec, &syms, shift).equivalent_snr_db;
            // In-band strength of the quadratic term relative to the linear.
            let lin_b = dmt_demodulate_raw_shifted(&lin, &spec, shift);
            let quad_b = dmt_demodulate_raw_shifted(&quad, &spec, shift);
            let p_lin: f64 = lin_b.iter().map(|z| z.norm_sqr()).sum();
            let p_quad: f64 = quad_b.iter().map(|z| z.norm_sqr()).sum();
            println!(
                "{label}: linear-only {snr_lin:6.2} dB, raw {snr_tot:6.2} dB, comp {snr_comp:6.2} dB, in-band lin/quad {:6.2} dB",
                10.0 * (p_lin / p_quad).log10()
            );
        }
    }

    #[test]
    fn predistortion_plus_compensation_beats_plain_dsb_after_dispersion() {
        // Dispersion notches pin the dB-mean SNR, so the payoff shows up in
        // the bit-loading margin at a fixed rate, not in the mean itself.
        let cfg = LinkSimConfig::smf_80km(44.0, 6);
        let gap = default_snr_gap_db();
        let margin_of = |variant: &TxVariant| {
            let profile = simulate_snr_profile(variant, 18.0, &cfg);
            let table = levin_campello_load(&profile, &cfg.dmt, 120e9, gap)
                .expect("loading should succeed at 44 dB OSNR");
            loading_margin_db(&profile, &table, gap)
        };
        let plain = margin_of(&TxVariant::dsb());
        let mitigated = margin_of(&TxVariant::dsb_predistorted());
        assert!(
            mitigated - plain > 1.0,
            "pre-distortion + compensation should widen the 120G loading margin: \
             {plain:.2} → {mitigated:.2} dB"
        );
    }

    #[test]
    fn required_osnr_search_brackets_the_rate_target() {
        let cfg = LinkSimConfig::b2b(30.0, 4);
        let got = required_osnr_db_for_rate(
            &TxVariant::ssb(),
            12.0,
            &cfg,
            120e9,
            crate::dmt::default_snr_gap_db(),
            18.0,
            40.0,
        );
        let osnr = got.expect("120G should be reachable back-to-back");
        assert!((20.0..36.0).contains(&osnr), "required OSNR {osnr} dB out of plausible range");
    }

    #[test]
    fn optimal_cspr_is_interior_with_a_real_compensation_gain() {
        let mut cfg = LinkSimConfig::b2b(30.0, 8);
        cfg.n_frames = 128;
        let (opt_c, snr_c) = optimal_cspr(&TxVariant::ssb(), &cfg);
        cfg.compensate = false;
        let (opt_u, snr_u) = optimal_cspr(&TxVariant::ssb(), &cfg);
        assert!((6.0..17.0).contains(&opt_c), "compensated optimum at {opt_c} dB");
        assert!((8.0..19.0).contains(&opt_u), "uncompensated optimum at {opt_u} dB");
        let gain = snr_c - snr_u;
        assert!(
            (2.0..6.0).contains(&gain),
            "compensation gain at the optimum should be a few dB, got {gain}"
        );
    }
}
