//! Coherent receiver DSP: laser phase-noise generation, chromatic-dispersion
//! compensation, 2×2 adaptive equalization, and carrier-phase estimation
//! (data-aided with tuned memory, and blind phase search with maximum-
//! likelihood refinement plus pilot-anchored unwrapping).

use crate::shaping::LabeledConstellation;
use crate::signal::{apply_freq_response, cd_response, ComplexSignal};
use crate::ssb::CdSpec;
use crate::util::{randn, rng_stream};
use num_complex::Complex64;
use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

/// Errors reported by the adaptive receiver stages.
#[derive(Debug, Clone, PartialEq)]
pub enum CohDspError {
    /// The adaptive filter blew up (step size too large for the signal).
    Divergence { tap_energy: f64 },
    /// The sliding estimation window exceeds the available block.
    WindowTooLarge { window: usize, block: usize },
}

impl std::fmt::Display for CohDspError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CohDspError::Divergence { tap_energy } => {
                write!(f, "equalizer diverged (tap energy {tap_energy:.3e})")
            }
            CohDspError::WindowTooLarge { window, block } => {
                write!(f, "window of {window} symbols exceeds the {block}-symbol block")
            }
        }
    }
}

impl std::error::Error for CohDspError {}

// ---------------------------------------------------------------------------
// Laser phase noise
// ---------------------------------------------------------------------------

/// First-order random-walk (Wiener) laser phase-noise description.
#[derive(Debug, Clone, Copy)]
pub struct WienerSpec {
    /// Laser linewidth in Hz.
    pub linewidth_hz: f64,
    /// Symbol duration in s.
    pub symbol_duration_s: f64,
}

impl WienerSpec {
    pub fn validate(&self) {
        assert!(self.linewidth_hz >= 0.0, "linewidth must be non-negative");
        assert!(self.symbol_duration_s > 0.0, "symbol duration must be positive");
    }

    /// Variance of one phase increment, 2π·Δν·T.
    #[inline]
    pub fn increment_variance(&self) -> f64 {
        2.0 * PI * self.linewidth_hz * self.symbol_duration_s
    }
}

/// Generate a Wiener phase walk φ(0) = 0, φ(n) = φ(n−1) + ν(n) with
/// i.i.d. Gaussian increments of variance 2π·Δν·T.  The draw uses its own
/// random stream so a shared seed keeps it independent of symbol and noise
/// draws.
pub fn gen_wiener_phase(spec: &WienerSpec, n: usize, seed: u64) -> Vec<f64> {
    spec.validate();
    assert!(n >= 1, "need at least one sample");
    let sigma = spec.increment_variance().sqrt();
    let mut rng = rng_stream(seed, 2);
    let mut phase = Vec::with_capacity(n);
    let mut acc = 0.0;
    phase.push(0.0);
    for _ in 1..n {
        acc += sigma * randn(&mut rng);
        phase.push(acc);
    }
    phase
}

// ---------------------------------------------------------------------------
// Chromatic-dispersion compensation
// ---------------------------------------------------------------------------

/// All-pass frequency-domain compensation of accumulated dispersion: applies
/// the conjugate of the propagation response so that channel ∘ compensator
/// is the identity.
pub fn cd_compensate(signal: &ComplexSignal, cd: &CdSpec) -> ComplexSignal {
    let forward = cd_response(cd.accumulated_beta2_z());
    apply_freq_response(signal, |f| forward(f).conj())
}

// ---------------------------------------------------------------------------
// 2×2 adaptive equalizer
// ---------------------------------------------------------------------------

/// Tap-update rule of the butterfly equalizer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EqMode {
    /// Data-aided least-mean-squares with a decision-directed one-tap phase
    /// pre-rotation inside the error computation.
    Lms,
    /// Blind constant-modulus (Godard) update.
    Cma,
}

/// Butterfly equalizer configuration.
#[derive(Debug, Clone, Copy)]
pub struct EqualizerSpec {
    /// Taps per FIR branch (odd preferred; the center spike starts there).
    pub n_taps: usize,
    /// Input samples per symbol (2 = half-symbol spaced, 1 = symbol spaced).
    pub samples_per_symbol: usize,
    /// Stochastic-gradient step size.
    pub step_size: f64,
    /// Update rule.
    pub mode: EqMode,
    /// Symbols used for adaptation before the taps freeze.
    pub training_len: usize,
}

impl EqualizerSpec {
    pub fn validate(&self) {
        assert!(self.n_taps >= 1, "need at least one tap");
        assert!(
            self.samples_per_symbol == 1 || self.samples_per_symbol == 2,
            "tap spacing must be T or T/2"
        );
        assert!(self.step_size > 0.0, "step size must be positive");
    }
}

/// Adaptation reference: known training symbols (LMS) or a target modulus
/// (CMA, radius² = E|a|⁴/E|a|² of the design constellation).
pub enum EqReference<'a> {
    Training { x: &'a [Complex64], y: &'a [Complex64] },
    ConstantModulus { radius2: f64 },
}

struct Butterfly {
    hxx: Vec<Complex64>,
    hxy: Vec<Complex64>,
    hyx: Vec<Complex64>,
    hyy: Vec<Complex64>,
}

impl Butterfly {
    fn center_spike(n_taps: usize) -> Self {
        let mut hxx = vec![Complex64::new(0.0, 0.0); n_taps];
        let mut hyy = vec![Complex64::new(0.0, 0.0); n_taps];
        hxx[(n_taps - 1) / 2] = Complex64::new(1.0, 0.0);
        hyy[(n_taps - 1) / 2] = Complex64::new(1.0, 0.0);
        Self {
            hxx,
            hxy: vec![Complex64::new(0.0, 0.0); n_taps],
            hyx: vec![Complex64::new(0.0, 0.0); n_taps],
            hyy,
        }
    }

    #[inline]
    fn output(&self, wx: &[Complex64], wy: &[Complex64]) -> (Complex64, Complex64) {
        let mut ux = Complex64::new(0.0, 0.0);
        let mut uy = Complex64::new(0.0, 0.0);
        for i in 0..wx.len() {
            ux += self.hxx[i] * wx[i] + self.hxy[i] * wy[i];
            uy += self.hyx[i] * wx[i] + self.hyy[i] * wy[i];
        }
        (ux, uy)
    }

    fn energy(&self) -> f64 {
        [&self.hxx, &self.hxy, &self.hyx, &self.hyy]
            .iter()
            .flat_map(|h| h.iter())
            .map(|v| v.norm_sqr())
            .sum()
    }
}

/// Fractionally spaced 2×2 butterfly equalizer.
///
/// Output symbol `k` is formed from the input window
/// `in[k·sps .. k·sps + n_taps)`; with the center-spike initialization the
/// filter starts as a pure delay of `(n_taps−1)/2` samples, so callers align
/// references to `in[k·sps + (n_taps−1)/2]`.  Adaptation runs over the
/// training span (LMS) or the whole block (CMA), then the taps freeze and
/// one clean filtering pass produces the returned streams.  The LMS error is
/// computed after a decision-directed one-tap phase rotation so a slow
/// common-phase drift does not masquerade as a channel change.
pub fn mimo_equalize(
    x_pol: &[Complex64],
    y_pol: &[Complex64],
    spec: &EqualizerSpec,
    reference: &EqReference,
) -> Result<(Vec<Complex64>, Vec<Complex64>), CohDspError> {
    spec.validate();
    assert_eq!(x_pol.len(), y_pol.len(), "polarizations must align");
    match (spec.mode, reference) {
        (EqMode::Lms, EqReference::Training { .. }) | (EqMode::Cma, EqReference::ConstantModulus { .. }) => {}
        _ => panic!("reference kind must match the equalizer mode"),
    }
    let sps = spec.samples_per_symbol;
    let n_taps = spec.n_taps;
    if x_pol.len() < n_taps {
        return Ok((Vec::new(), Vec::new()));
    }
    let n_out = (x_pol.len() - n_taps) / sps + 1;
    let initial_energy = 2.0;

    let mut taps = Butterfly::center_spike(n_taps);
    // One-tap phase trackers for the LMS error stage.  The smoothing must
    // stay well below the tap adaptation bandwidth: the tracker's estimate
    // random-walks under noise and the taps chase it with a lag, so a fast
    // tracker injects tracking error into an otherwise static channel.
    let mut px = Complex64::new(1.0, 0.0);
    let mut py = Complex64::new(1.0, 0.0);
    let beta = 1e-3;

    let adapt_span = match reference {
        EqReference::Training { x, y } => {
            let avail = x.len().min(y.len());
            assert!(
                spec.training_len <= avail,
                "training length {} exceeds available reference symbols {}",
                spec.training_len,
                avail
            );
            spec.training_len.min(n_out)
        }
        EqReference::ConstantModulus { .. } => n_out,
    };

    for k in 0..adapt_span {
        let base = k * sps;
        let wx = &x_pol[base..base + n_taps];
        let wy = &y_pol[base..base + n_taps];
        let (ux, uy) = taps.output(wx, wy);
        let (ex, ey) = match reference {
            EqReference::Training { x, y } => {
                // Update the one-tap phase from the raw error direction,
                // then compute the tap error in the derotated frame and
                // rotate it back.
                let raw_x = ux * x[k].conj();
                let raw_y = uy * y[k].conj();
                if raw_x.norm_sqr() > 0.0 {
                    let blend = (1.0 - beta) * px + beta * raw_x / raw_x.norm();
                    px = blend / blend.norm().max(1e-12);
                }
                if raw_y.norm_sqr() > 0.0 {
                    let blend = (1.0 - beta) * py + beta * raw_y / raw_y.norm();
                    py = blend / blend.norm().max(1e-12);
                }
                ((x[k] * px - ux), (y[k] * py - uy))
            }
            EqReference::ConstantModulus { radius2 } => (
                ux * (radius2 - ux.norm_sqr()),
                uy * (radius2 - uy.norm_sqr()),
            ),
        };
        for i in 0..n_taps {
            let cx = wx[i].conj();
            let cy = wy[i].conj();
            taps.hxx[i] += spec.step_size * ex * cx;
            taps.hxy[i] += spec.step_size * ex * cy;
            taps.hyx[i] += spec.step_size * ey * cx;
            taps.hyy[i] += spec.step_size * ey * cy;
        }
        if k % 256 == 0 {
            let e = taps.energy();
            if !e.is_finite() || e > 1e6 * initial_energy {
                return Err(CohDspError::Divergence { tap_energy: e });
            }
        }
    }
    let e = taps.energy();
    if !e.is_finite() || e > 1e6 * initial_energy {
        return Err(CohDspError::Divergence { tap_energy: e });
    }

    // The converged taps target reference×p̂ (the tracker absorbed the common
    // phase); rotate each output row back so the clean pass is reference-
    // aligned and any residual carrier work stays with the CPE stage.
    if spec.mode == EqMode::Lms {
        let (cx, cy) = (px.conj(), py.conj());
        for i in 0..n_taps {
            taps.hxx[i] *= cx;
            taps.hxy[i] *= cx;
            taps.hyx[i] *= cy;
            taps.hyy[i] *= cy;
        }
    }

    // Clean pass with frozen taps.
    let mut out_x = Vec::with_capacity(n_out);
    let mut out_y = Vec::with_capacity(n_out);
    for k in 0..n_out {
        let base = k * sps;
        let (ux, uy) = taps.output(&x_pol[base..base + n_taps], &y_pol[base..base + n_taps]);
        out_x.push(ux);
        out_y.push(uy);
    }
    Ok((out_x, out_y))
}

// ---------------------------------------------------------------------------
// Carrier-phase estimation
// ---------------------------------------------------------------------------

/// Carrier-phase estimator controls.
#[derive(Debug, Clone, Copy)]
pub struct CpeSpec {
    /// Test angles of the blind search over [−π/4, π/4).
    pub n_test_angles: usize,
    /// Sliding estimation window in symbols.
    pub window: usize,
    /// Fraction of symbols reserved as unwrapping pilots.
    pub pilot_overhead: f64,
}

impl Default for CpeSpec {
    fn default() -> Self {
        Self { n_test_angles: 18, window: 64, pilot_overhead: 0.02 }
    }
}

impl CpeSpec {
    pub fn validate(&self) {
        assert!(self.n_test_angles >= 2, "need at least two test angles");
        assert!(self.window >= 1, "window must be at least one symbol");
        assert!((0.0..1.0).contains(&self.pilot_overhead), "overhead must be in [0, 1)");
    }

    /// Pilot stride implied by the overhead (0 = no pilots).
    pub fn pilot_stride(&self) -> usize {
        if self.pilot_overhead <= 0.0 {
            0
        } else {
            (1.0 / self.pilot_overhead).round() as usize
        }
    }
}

/// Derotated symbols plus the applied phase track.
#[derive(Debug, Clone)]
pub struct CpeResult {
    pub symbols: Vec<Complex64>,
    /// Phase removed from each symbol, in rad.
    pub phase: Vec<f64>,
}

/// Fold each angle into [−π/4, π/4) and stitch the sequence back into a
/// continuous track by adding the multiple of π/2 that keeps successive
/// values within π/4 of each other.
fn unwrap_mod_quadrant(raw: &[f64]) -> Vec<f64> {
    let fold = |p: f64| -> f64 { (p + FRAC_PI_4).rem_euclid(FRAC_PI_2) - FRAC_PI_4 };
    let mut track = Vec::with_capacity(raw.len());
    let mut offset = 0.0;
    for (i, &p) in raw.iter().enumerate() {
        let folded = fold(p);
        if i == 0 {
            track.push(folded);
            continue;
        }
        let prev: f64 = *track.last().unwrap();
        let mut cand = folded + offset;
        while cand - prev > FRAC_PI_4 {
            cand -= FRAC_PI_2;
            offset -= FRAC_PI_2;
        }
        while prev - cand > FRAC_PI_4 {
            cand += FRAC_PI_2;
            offset += FRAC_PI_2;
        }
        track.push(cand);
    }
    track
}

/// Moving-average sum of a complex series over a centered window of
/// half-width `l` (edges truncate).
fn centered_window_sums(h: &[Complex64], l: usize) -> Vec<Complex64> {
    let n = h.len();
    let mut prefix = Vec::with_capacity(n + 1);
    prefix.push(Complex64::new(0.0, 0.0));
    for &v in h {
        let last = *prefix.last().unwrap();
        prefix.push(last + v);
    }
    (0..n)
        .map(|i| {
            let lo = i.saturating_sub(l);
            let hi = (i + l + 1).min(n);
            prefix[hi] - prefix[lo]
        })
        .collect()
}

/// Fully data-aided carrier-phase estimation: the phase at symbol `k` is the
/// argument of the moving average of y·a* over 2L+1 symbols.  L = 0 removes
/// the per-symbol phase exactly (folding noise into the estimate).
pub fn cpe_ideal(rx: &[Complex64], tx: &[Complex64], memory_l: usize) -> CpeResult {
    assert_eq!(rx.len(), tx.len(), "streams must align");
    let h: Vec<Complex64> = rx.iter().zip(tx).map(|(y, a)| y * a.conj()).collect();
    let sums = centered_window_sums(&h, memory_l);
    let phase: Vec<f64> = sums.iter().map(|s| s.arg()).collect();
    let symbols = rx
        .iter()
        .zip(&phase)
        .map(|(y, &p)| y * Complex64::from_polar(1.0, -p))
        .collect();
    CpeResult { symbols, phase }
}

/// Data-aided CPE with the memory chosen by grid search over
/// L ∈ {1, …, 512}: the L minimizing the residual error energy against the
/// known data wins.  The selection score holds each symbol out of its own
/// window — scoring in-sample would always favor L = 1, because a window
/// containing the scored symbol cancels part of that symbol's own noise.
/// Returns the result and the selected memory.
pub fn cpe_ideal_auto(rx: &[Complex64], tx: &[Complex64]) -> (CpeResult, usize) {
    assert_eq!(rx.len(), tx.len(), "streams must align");
    let h: Vec<Complex64> = rx.iter().zip(tx).map(|(y, a)| y * a.conj()).collect();
    let mut best_l = 1;
    let mut best_err = f64::INFINITY;
    for l in 1..=512usize {
        let sums = centered_window_sums(&h, l);
        let err: f64 = rx
            .iter()
            .zip(tx)
            .zip(sums.iter().zip(&h))
            .map(|((y, a), (s, hk))| {
                let held_out = s - hk;
                let p = if held_out.norm_sqr() > 0.0 { held_out.arg() } else { 0.0 };
                (y * Complex64::from_polar(1.0, -p) - a).norm_sqr()
            })
            .sum();
        if err < best_err {
            best_err = err;
            best_l = l;
        }
    }
    (cpe_ideal(rx, tx, best_l), best_l)
}

/// Pilot description for [`cpe_bps_ml`]: known symbols at known positions.
#[derive(Debug, Clone, Default)]
pub struct Pilots {
    /// Sorted symbol indices.
    pub positions: Vec<usize>,
    /// Transmitted values at those indices.
    pub values: Vec<Complex64>,
}

impl Pilots {
    /// Evenly strided pilots taken from a transmit stream.
    pub fn strided(tx: &[Complex64], stride: usize) -> Self {
        if stride == 0 {
            return Self::default();
        }
        let positions: Vec<usize> = (0..tx.len()).step_by(stride).collect();
        let values = positions.iter().map(|&i| tx[i]).collect();
        Self { positions, values }
    }
}

/// Blind phase search over `n_test_angles` in [−π/4, π/4) with windowed
/// decision distances, followed by one maximum-likelihood refinement from
/// the tentative decisions.  The estimate is π/2-periodic, so it is
/// continuity-unwrapped; pilots are used only to re-anchor the quadrant
/// (cancel cycle slips), never to improve the estimate itself.
pub fn cpe_bps_ml(
    rx: &[Complex64],
    constellation: &LabeledConstellation,
    spec: &CpeSpec,
    pilots: &Pilots,
) -> Result<CpeResult, CohDspError> {
    spec.validate();
    let n = rx.len();
    if spec.window > n {
        return Err(CohDspError::WindowTooLarge { window: spec.window, block: n });
    }
    let b = spec.n_test_angles;
    let half = spec.window / 2;

    // Stage 1: windowed decision distance per test angle.
    let angles: Vec<f64> = (0..b).map(|i| -FRAC_PI_4 + i as f64 * FRAC_PI_2 / b as f64).collect();
    // Per-angle distances, then windowed via prefix sums.
    let mut windowed: Vec<Vec<f64>> = Vec::with_capacity(b);
    for &phi in &angles {
        let rot = Complex64::from_polar(1.0, -phi);
        let d: Vec<f64> = rx
            .iter()
            .map(|y| {
                let z = y * rot;
                let idx = constellation.nearest_point_index(z);
                (z - constellation.points[idx]).norm_sqr()
            })
            .collect();
        let mut prefix = Vec::with_capacity(n + 1);
        prefix.push(0.0);
        for &v in &d {
            prefix.push(prefix.last().unwrap() + v);
        }
        windowed.push(
            (0..n)
                .map(|i| {
                    let lo = i.saturating_sub(half);
                    let hi = (i + half + 1).min(n);
                    prefix[hi] - prefix[lo]
                })
                .collect(),
        );
    }
    let coarse: Vec<f64> = (0..n)
        .map(|i| {
            let mut best = 0usize;
            for a in 1..b {
                if windowed[a][i] < windowed[best][i] {
                    best = a;
                }
            }
            angles[best]
        })
        .collect();

    // Stage 2: ML refinement from tentative decisions.  The decisions must
    // live in a single continuous phase frame: deciding at the raw folded
    // angle would mix π/2-inconsistent frames inside one window whenever the
    // track crosses a quadrant boundary, and the windowed sum would cancel.
    let coarse_track = unwrap_mod_quadrant(&coarse);
    let h: Vec<Complex64> = rx
        .iter()
        .zip(&coarse_track)
        .map(|(y, &phi)| {
            let z = y * Complex64::from_polar(1.0, -phi);
            let dec = constellation.points[constellation.nearest_point_index(z)];
            y * dec.conj()
        })
        .collect();
    let sums = centered_window_sums(&h, half);
    let refined: Vec<f64> = sums.iter().map(|s| s.arg()).collect();
    let phase = unwrap_mod_quadrant(&refined);

    // Pilot pass: re-anchor the quadrant from each pilot onward.  A single
    // pilot is unreliable — a low-amplitude point at moderate SNR has tens
    // of degrees of angle noise — so the evidence accumulates across pilots
    // with exponential forgetting; the product y·a* self-weights strong
    // pilots.  A real slip flips the accumulator within a pilot interval or
    // two, while isolated noisy pilots cannot.
    let mut correction = 0.0;
    let mut acc = Complex64::new(0.0, 0.0);
    let forget = 0.5;
    let mut next_pilot = 0usize;
    let mut corrected = Vec::with_capacity(n);
    for (i, &p) in phase.iter().enumerate() {
        while next_pilot < pilots.positions.len() && pilots.positions[next_pilot] == i {
            let pos = pilots.positions[next_pilot];
            let known = pilots.values[next_pilot];
            let z = rx[pos] * Complex64::from_polar(1.0, -(p + correction)) * known.conj();
            acc = forget * acc + z;
            let quad = (acc.arg() / FRAC_PI_2).round();
            if quad != 0.0 {
                let delta = quad * FRAC_PI_2;
                correction += delta;
                acc *= Complex64::from_polar(1.0, -delta);
            }
            next_pilot += 1;
        }
        corrected.push(p + correction);
    }

    let symbols = rx
        .iter()
        .zip(&corrected)
        .map(|(y, &p)| y * Complex64::from_polar(1.0, -p))
        .collect();
    Ok(CpeResult { symbols, phase: corrected })
}
