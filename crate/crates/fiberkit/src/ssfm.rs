//! Split-step fiber propagation and nonlinear-interference analysis.
//!
//! The propagation core integrates the Manakov equation (dual polarization,
//! averaged birefringence) with a symmetrized split-step scheme whose step
//! lengths are bounded by a per-step nonlinear phase budget.  Around it sit
//! the pieces needed to simulate and analyze amplified links: lumped
//! amplifiers with spontaneous-emission noise, span chains, least-squares
//! fitting of the cubic interference law, pulse-collision coefficients, and
//! nonlinear phase-noise extraction from noiseless propagation runs.

use crate::signal::{bin_freq, fft_in_place, ifft_in_place, rrc_spectrum};
use crate::util::{crandn, dbm_to_watts, lin_to_db, mean_power, rng_stream, watts_to_dbm};
use num_complex::Complex64;

/// Planck's constant in J·s.
pub const PLANCK_H: f64 = 6.62607015e-34;

/// Errors reported by the propagation and fitting routines.
#[derive(Debug, Clone, PartialEq)]
pub enum SsfmError {
    /// The time grid cannot contain the dispersed/shifted pulses: the
    /// fraction of pulse energy that would wrap around the grid edges
    /// exceeds the stated bound.
    GridLeakage { leakage: f64 },
    /// The least-squares interference fit produced a non-physical
    /// (non-positive) cubic coefficient.
    NonPhysicalFit { eta: f64 },
}

impl std::fmt::Display for SsfmError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SsfmError::GridLeakage { leakage } => {
                write!(f, "pulse energy leakage {leakage:.3e} exceeds 1e-6; enlarge the grid")
            }
            SsfmError::NonPhysicalFit { eta } => {
                write!(f, "fitted cubic coefficient {eta:.3e} is not positive")
            }
        }
    }
}

impl std::error::Error for SsfmError {}

// ---------------------------------------------------------------------------
// Fiber and amplifier descriptions
// ---------------------------------------------------------------------------

/// Physical constants of one fiber type plus a length.
#[derive(Debug, Clone, Copy)]
pub struct FiberParams {
    /// Attenuation in dB/km.
    pub alpha_db_per_km: f64,
    /// Group-velocity dispersion in ps²/km.
    pub beta2_ps2_per_km: f64,
    /// Kerr coefficient in 1/(W·km).
    pub gamma_per_w_km: f64,
    /// Length in km.
    pub length_km: f64,
}

impl FiberParams {
    /// Pure-silica-core fiber (large-area, low-loss submarine type).
    pub fn pscf(length_km: f64) -> Self {
        Self { alpha_db_per_km: 0.17, beta2_ps2_per_km: -26.75, gamma_per_w_km: 0.75, length_km }
    }

    /// Standard single-mode fiber.
    pub fn smf(length_km: f64) -> Self {
        Self { alpha_db_per_km: 0.20, beta2_ps2_per_km: -21.27, gamma_per_w_km: 1.3, length_km }
    }

    /// Non-zero dispersion-shifted fiber (low, positive β₂).
    pub fn nzdsf(length_km: f64) -> Self {
        Self { alpha_db_per_km: 0.23, beta2_ps2_per_km: 3.38, gamma_per_w_km: 2.0, length_km }
    }

    pub fn validate(&self) {
        assert!(self.length_km >= 0.0, "fiber length must be non-negative");
        assert!(self.alpha_db_per_km >= 0.0, "attenuation must be non-negative");
        assert!(self.gamma_per_w_km >= 0.0, "Kerr coefficient must be non-negative");
    }

    /// Power attenuation coefficient in Np/km (P(z) = P₀·e^{−αz}).
    #[inline]
    pub fn alpha_np_per_km(&self) -> f64 {
        self.alpha_db_per_km * std::f64::consts::LN_10 / 10.0
    }

    /// Dispersion in s²/km.
    #[inline]
    pub fn beta2_s2_per_km(&self) -> f64 {
        self.beta2_ps2_per_km * 1e-24
    }

    /// Nonlinear effective length (1−e^{−αL})/α in km (→ L as α → 0).
    pub fn effective_length_km(&self) -> f64 {
        let a = self.alpha_np_per_km();
        if a == 0.0 {
            self.length_km
        } else {
            (1.0 - (-a * self.length_km).exp()) / a
        }
    }

    /// End-to-end power loss in dB.
    #[inline]
    pub fn span_loss_db(&self) -> f64 {
        self.alpha_db_per_km * self.length_km
    }
}

/// Lumped optical amplifier with flat gain and spontaneous-emission noise.
#[derive(Debug, Clone, Copy)]
pub struct AmplifierSpec {
    /// Linear power gain (≥ 1).
    pub gain: f64,
    /// Noise figure in dB.
    pub noise_figure_db: f64,
    /// Optical center frequency in Hz.
    pub center_freq_hz: f64,
}

impl AmplifierSpec {
    /// Amplifier sized to exactly recover one span's loss.
    pub fn recovering(fiber: &FiberParams, noise_figure_db: f64, center_freq_hz: f64) -> Self {
        Self { gain: crate::util::db_to_lin(fiber.span_loss_db()), noise_figure_db, center_freq_hz }
    }

    pub fn validate(&self) {
        assert!(self.gain >= 1.0, "amplifier gain must be ≥ 1");
        assert!(self.center_freq_hz > 0.0, "center frequency must be positive");
    }

    /// Spontaneous-emission factor n_sp = F/2 with F the linear noise factor
    /// (valid in the large-gain limit F ≈ 2·n_sp).
    #[inline]
    pub fn n_sp(&self) -> f64 {
        crate::util::db_to_lin(self.noise_figure_db) / 2.0
    }

    /// Noise power spectral density per polarization, N₀ = h·f₀·(G−1)·n_sp,
    /// in W/Hz.
    pub fn ase_psd(&self) -> f64 {
        PLANCK_H * self.center_freq_hz * (self.gain - 1.0) * self.n_sp()
    }
}

/// One span repeated `n_span` times: fiber followed by a loss-recovering
/// amplifier, at a given per-channel launch power.
#[derive(Debug, Clone, Copy)]
pub struct SpanPlan {
    pub n_span: usize,
    pub fiber: FiberParams,
    pub amp: AmplifierSpec,
    pub p_ch_dbm: f64,
}

impl SpanPlan {
    pub fn new(
        n_span: usize,
        fiber: FiberParams,
        noise_figure_db: f64,
        center_freq_hz: f64,
        p_ch_dbm: f64,
    ) -> Self {
        let amp = AmplifierSpec::recovering(&fiber, noise_figure_db, center_freq_hz);
        let plan = Self { n_span, fiber, amp, p_ch_dbm };
        plan.validate();
        plan
    }

    pub fn validate(&self) {
        self.fiber.validate();
        self.amp.validate();
        let loss = crate::util::db_to_lin(self.fiber.span_loss_db());
        assert!(
            (self.amp.gain - loss).abs() <= 1e-9 * loss,
            "amplifier gain must recover span loss exactly"
        );
    }
}

// ---------------------------------------------------------------------------
// Step planning
// ---------------------------------------------------------------------------

/// Adaptive split-step layout for one fiber.
#[derive(Debug, Clone)]
pub struct StepPlan {
    /// Step lengths in km; they sum to the fiber length.
    pub steps_km: Vec<f64>,
    /// Per-step nonlinear phase budget in rad.
    pub max_nl_phase: f64,
}

impl StepPlan {
    pub fn n_steps(&self) -> usize {
        self.steps_km.len()
    }
}

/// Default per-step nonlinear phase budget in rad.
pub fn default_max_nl_phase() -> f64 {
    3e-3
}

/// Choose step lengths so each step's nonlinear phase, at the local optical
/// power following attenuation, stays within `max_nl_phase`:
/// (8/9)·γ·P(z)·Δz ≤ max_nl_phase with P(z) = P₀·e^{−αz}.  Steps therefore
/// grow along the span as the power decays; with γ = 0 (or zero power) a
/// single step covers the whole fiber, and with α = 0 the steps are uniform.
pub fn plan_steps(fiber: &FiberParams, launch_power_w: f64, max_nl_phase: f64) -> StepPlan {
    fiber.validate();
    assert!(max_nl_phase > 0.0, "nonlinear phase budget must be positive");
    assert!(launch_power_w >= 0.0, "launch power must be non-negative");
    let mut steps = Vec::new();
    if fiber.length_km > 0.0 {
        let rate0 = 8.0 / 9.0 * fiber.gamma_per_w_km * launch_power_w; // rad/km at z = 0
        if rate0 == 0.0 {
            steps.push(fiber.length_km);
        } else {
            let alpha = fiber.alpha_np_per_km();
            let mut z = 0.0;
            while z < fiber.length_km {
                let rate = rate0 * (-alpha * z).exp();
                let dz = (max_nl_phase / rate).min(fiber.length_km - z);
                steps.push(dz);
                z += dz;
            }
        }
    }
    StepPlan { steps_km: steps, max_nl_phase }
}

// ---------------------------------------------------------------------------
// Dual-polarization container
// ---------------------------------------------------------------------------

/// Two-polarization complex baseband signal on a common time grid.
#[derive(Debug, Clone)]
pub struct DualPolSignal {
    pub x: Vec<Complex64>,
    pub y: Vec<Complex64>,
    /// Sample rate in Hz.
    pub sample_rate: f64,
}

impl DualPolSignal {
    pub fn new(x: Vec<Complex64>, y: Vec<Complex64>, sample_rate: f64) -> Self {
        assert_eq!(x.len(), y.len(), "polarizations must share the time grid");
        assert!(sample_rate > 0.0, "sample rate must be positive");
        Self { x, y, sample_rate }
    }

    /// Wrap a single-polarization waveform (the other polarization is empty).
    pub fn single_pol(x: Vec<Complex64>, sample_rate: f64) -> Self {
        let y = vec![Complex64::new(0.0, 0.0); x.len()];
        Self::new(x, y, sample_rate)
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    /// Mean total optical power ⟨|Eₓ|² + |E_y|²⟩ in W.
    pub fn mean_power(&self) -> f64 {
        mean_power(&self.x) + mean_power(&self.y)
    }

    /// Total energy Σ(|Eₓ|²+|E_y|²)·dt in J.
    pub fn energy(&self) -> f64 {
        self.mean_power() * self.len() as f64 / self.sample_rate
    }

    /// Scale both polarizations by a real amplitude factor.
    pub fn scale(&mut self, amplitude: f64) {
        for v in self.x.iter_mut().chain(self.y.iter_mut()) {
            *v *= amplitude;
        }
    }
}

// ---------------------------------------------------------------------------
// Split-step Manakov propagation
// ---------------------------------------------------------------------------

/// Apply loss + dispersion over `dz_km` to a frequency-domain field.
fn linear_half(
    fx: &mut [Complex64],
    fy: &mut [Complex64],
    omega2: &[f64],
    alpha_np: f64,
    beta2_s2: f64,
    dz_km: f64,
) {
    let amp = (-0.5 * alpha_np * dz_km).exp();
    for (i, &w2) in omega2.iter().enumerate() {
        let phase = -0.5 * beta2_s2 * dz_km * w2;
        let h = Complex64::from_polar(amp, phase);
        fx[i] *= h;
        fy[i] *= h;
    }
}

/// Propagate a dual-polarization signal through one fiber with a symmetrized
/// split-step scheme (half linear step, Kerr rotation, half linear step;
/// adjacent half steps merged).  The Kerr operator is the Manakov rotation
/// exp(−j·(8/9)·γ·(|Eₓ|²+|E_y|²)·Δz_eff) with
/// Δz_eff = 2·sinh(α·Δz/2)/α, which makes the per-step nonlinear phase exact
/// for the power at the step midpoint.  For a scalar (single-polarization)
/// integration without the Manakov 8/9 average, pre-scale γ by 9/8.
pub fn ssfm_propagate(signal: &DualPolSignal, fiber: &FiberParams, plan: &StepPlan) -> DualPolSignal {
    fiber.validate();
    let total: f64 = plan.steps_km.iter().sum();
    assert!(
        (total - fiber.length_km).abs() <= 1e-9 * fiber.length_km.max(1.0),
        "step plan covers {total} km but the fiber is {} km",
        fiber.length_km
    );
    let n = signal.len();
    if n == 0 || plan.steps_km.is_empty() {
        return signal.clone();
    }

    let alpha_np = fiber.alpha_np_per_km();
    let beta2_s2 = fiber.beta2_s2_per_km();
    let kerr_rate = 8.0 / 9.0 * fiber.gamma_per_w_km; // rad/(W·km)
    let omega2: Vec<f64> = (0..n)
        .map(|k| {
            let w = 2.0 * std::f64::consts::PI * bin_freq(k, n, signal.sample_rate);
            w * w
        })
        .collect();

    let mut x = signal.x.clone();
    let mut y = signal.y.clone();
    let steps = &plan.steps_km;

    fft_in_place(&mut x);
    fft_in_place(&mut y);
    linear_half(&mut x, &mut y, &omega2, alpha_np, beta2_s2, steps[0] / 2.0);
    for (i, &dz) in steps.iter().enumerate() {
        ifft_in_place(&mut x);
        ifft_in_place(&mut y);
        // Effective length of this step referenced to the midpoint power.
        let dz_eff = if alpha_np == 0.0 {
            dz
        } else {
            2.0 * (alpha_np * dz / 2.0).sinh() / alpha_np
        };
        for j in 0..n {
            let p = x[j].norm_sqr() + y[j].norm_sqr();
            let rot = Complex64::from_polar(1.0, -kerr_rate * p * dz_eff);
            x[j] *= rot;
            y[j] *= rot;
        }
        fft_in_place(&mut x);
        fft_in_place(&mut y);
        let d_next = if i + 1 < steps.len() { (dz + steps[i + 1]) / 2.0 } else { dz / 2.0 };
        linear_half(&mut x, &mut y, &omega2, alpha_np, beta2_s2, d_next);
    }
    ifft_in_place(&mut x);
    ifft_in_place(&mut y);

    DualPolSignal::new(x, y, signal.sample_rate)
}

// ---------------------------------------------------------------------------
// Amplification and span chains
// ---------------------------------------------------------------------------

/// Amplify by √G per field and add circular Gaussian noise of spectral
/// density N₀ = h·f₀·(G−1)·n_sp per polarization across the simulated band.
/// With G = 1 the PSD vanishes and the signal is returned unchanged.
pub fn amplify_ase(signal: &DualPolSignal, amp: &AmplifierSpec, seed: u64) -> DualPolSignal {
    amp.validate();
    let g_amp = amp.gain.sqrt();
    let n0 = amp.ase_psd();
    let mut out = signal.clone();
    out.scale(g_amp);
    if n0 > 0.0 {
        let sigma = (n0 * signal.sample_rate).sqrt();
        let mut rng = rng_stream(seed, 1);
        for v in out.x.iter_mut() {
            *v += sigma * crandn(&mut rng);
        }
        for v in out.y.iter_mut() {
            *v += sigma * crandn(&mut rng);
        }
    }
    out
}

/// Deterministic per-span seed derivation for [`propagate_link`].
#[inline]
fn span_seed(link_seed: u64, span_index: usize) -> u64 {
    link_seed.wrapping_add((span_index as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

/// Run `n_span` iterations of {fiber propagation, amplification}.  The step
/// plan is built once from the input mean power (each amplifier restores the
/// span loss, so every span launches at the same power).  With `with_ase`
/// false the amplifiers only rescale, giving the noiseless (deterministic)
/// link; ASE draws use a distinct derived seed per span.
pub fn propagate_link(
    signal: &DualPolSignal,
    plan: &SpanPlan,
    max_nl_phase: f64,
    seed: u64,
    with_ase: bool,
) -> DualPolSignal {
    plan.validate();
    let steps = plan_steps(&plan.fiber, signal.mean_power(), max_nl_phase);
    let mut field = signal.clone();
    for span in 0..plan.n_span {
        field = ssfm_propagate(&field, &plan.fiber, &steps);
        if with_ase {
            field = amplify_ase(&field, &plan.amp, span_seed(seed, span));
        } else {
            field.scale(plan.amp.gain.sqrt());
        }
    }
    field
}

// ---------------------------------------------------------------------------
// Cubic interference-law fit
// ---------------------------------------------------------------------------

/// Result of fitting SNR(P) = P/(P_ASE + η·P³).
#[derive(Debug, Clone, Copy)]
pub struct NliFit {
    /// Cubic interference coefficient in 1/W².
    pub eta_per_w2: f64,
    /// Accumulated amplifier-noise power over the measurement band, in W.
    pub p_ase_w: f64,
    /// Peak SNR of the fitted model, in dB.
    pub snr_max_db: f64,
    /// Power that maximizes the fitted SNR, in dBm.
    pub p_opt_dbm: f64,
}

impl NliFit {
    /// Fitted-model SNR at a given launch power.
    pub fn snr_db_at(&self, p_dbm: f64) -> f64 {
        let p = dbm_to_watts(p_dbm);
        lin_to_db(p / (self.p_ase_w + self.eta_per_w2 * p * p * p))
    }
}

/// Least-squares fit of the cubic coefficient η on the model
/// P/SNR − P_ASE = η·P³, from measured (power, SNR) pairs and a known noise
/// power.  The optimum of the fitted model satisfies P_opt³ = P_ASE/(2η),
/// where the peak SNR is P_opt/(1.5·P_ASE).
pub fn fit_nli_eta(
    p_grid_dbm: &[f64],
    measured_snr_db: &[f64],
    p_ase_w: f64,
) -> Result<NliFit, SsfmError> {
    assert_eq!(p_grid_dbm.len(), measured_snr_db.len(), "power/SNR grids must align");
    assert!(p_grid_dbm.len() >= 3, "need at least three power points");
    assert!(p_ase_w > 0.0, "noise power must be positive");
    let mut num = 0.0;
    let mut den = 0.0;
    for (&p_dbm, &snr_db) in p_grid_dbm.iter().zip(measured_snr_db) {
        let p = dbm_to_watts(p_dbm);
        let snr = crate::util::db_to_lin(snr_db);
        let y = p / snr - p_ase_w;
        let p3 = p * p * p;
        num += y * p3;
        den += p3 * p3;
    }
    let eta = num / den;
    if !(eta > 0.0) {
        return Err(SsfmError::NonPhysicalFit { eta });
    }
    let p_opt = (p_ase_w / (2.0 * eta)).cbrt();
    let snr_max = p_opt / (1.5 * p_ase_w);
    Ok(NliFit {
        eta_per_w2: eta,
        p_ase_w,
        snr_max_db: lin_to_db(snr_max),
        p_opt_dbm: watts_to_dbm(p_opt),
    })
}

// ---------------------------------------------------------------------------
// Pulse-collision coefficients
// ---------------------------------------------------------------------------

/// One cross-channel collision coefficient X_{h,k,m}.
#[derive(Debug, Clone, Copy)]
pub struct CollisionCoefficient {
    pub h: i64,
    pub k: i64,
    pub m: i64,
    pub value: Complex64,
}

/// Quadrature controls for [`collision_coefficient`].
#[derive(Debug, Clone, Copy)]
pub struct CollisionQuadrature {
    /// Trapezoid nodes along the fiber (≥ 2 intervals).
    pub n_z_steps: usize,
    /// Time-grid oversampling relative to the symbol rate.
    pub samples_per_symbol: usize,
}

impl Default for CollisionQuadrature {
    fn default() -> Self {
        Self { n_z_steps: 64, samples_per_symbol: 8 }
    }
}

/// Evaluate the four-pulse collision integral
///
/// X_{h,k,m} = ∫₀ᴸ f(z) ∫ g*(z,t)·g(z,t−hT)·g*(z,t−kT−s(z))·g(z,t−mT−s(z)) dt dz
///
/// for a root-raised-cosine pulse g dispersed to distance z, with the
/// lumped-span power profile f(z) = e^{−αz} and inter-channel walk-off
/// s(z) = β₂·z·2πΔf (Δf is the plain frequency separation in Hz; the 2π
/// makes the walk-off consistent with the group delay of the dispersion
/// operator used throughout the crate).  The pulse entering with the
/// conjugated interferer symbol is conjugated, which makes X_{0,m,m} real
/// and positive and gives the exchange symmetry X_{0,k,m} = X_{0,m,k}*.
/// The pulse is normalized to energy ∫|g(0,t)|²dt = T.
pub fn collision_coefficient(
    h: i64,
    k: i64,
    m: i64,
    pulse: &crate::signal::RrcSpec,
    fiber: &FiberParams,
    delta_f_hz: f64,
    symbol_period_s: f64,
    quad: &CollisionQuadrature,
) -> Result<CollisionCoefficient, SsfmError> {
    pulse.validate();
    fiber.validate();
    assert!(symbol_period_s > 0.0, "symbol period must be positive");
    let t_sym = symbol_period_s;
    let sps = quad.samples_per_symbol.max(2);
    let dt = t_sym / sps as f64;
    let beta2_l = fiber.beta2_s2_per_km() * fiber.length_km; // s²
    let walkoff = (beta2_l * 2.0 * std::f64::consts::PI * delta_f_hz).abs(); // s
    let omega_max = std::f64::consts::PI * (1.0 + pulse.roll_off) / t_sym; // rad/s
    let spread = (beta2_l * omega_max).abs(); // s, one-sided group-delay extent
    let index_reach = h.unsigned_abs().max(k.unsigned_abs()).max(m.unsigned_abs()) as f64;
    // Base extent holds the slowly decaying raised-cosine tails; shifts,
    // walk-off and dispersion spread extend it.
    let base_symbols = 64.0f64.max(pulse.span_symbols as f64);
    let half_width = base_symbols * t_sym + index_reach * t_sym + walkoff + spread;
    let mut n = 2usize;
    while (n as f64) * dt < 2.0 * half_width {
        n *= 2;
        if n > (1 << 22) {
            return Err(SsfmError::GridLeakage { leakage: 1.0 });
        }
    }

    // Base spectrum, normalized to pulse energy T (Parseval on the grid).
    let fs = 1.0 / dt;
    let mut g0: Vec<Complex64> = (0..n)
        .map(|j| Complex64::new(rrc_spectrum(bin_freq(j, n, fs) * t_sym, pulse.roll_off), 0.0))
        .collect();
    let raw_energy: f64 = g0.iter().map(|v| v.norm_sqr()).sum::<f64>() * dt / (n as f64);
    let scale = (t_sym / raw_energy).sqrt();
    for v in g0.iter_mut() {
        *v *= scale;
    }

    // Leakage check at the worst case: fully dispersed pulse, then the
    // largest applied shift.  Energy in the region that could wrap must be
    // negligible.
    {
        let mut spec = g0.clone();
        apply_dispersion(&mut spec, n, fs, beta2_l);
        let mut gl = spec;
        ifft_in_place(&mut gl);
        let max_shift = index_reach * t_sym + walkoff;
        let guard = ((half_width - base_symbols * t_sym).max(max_shift) / dt).ceil() as usize;
        let safe = n / 2 - guard.min(n / 2);
        // Samples j = safe..n−safe (in centered coordinates |t| > safe·dt)
        // are within one max-shift of the wrap boundary.
        let total: f64 = gl.iter().map(|v| v.norm_sqr()).sum();
        let mut outer = 0.0;
        for (j, v) in gl.iter().enumerate() {
            let centered = if j < n / 2 { j } else { n - j };
            if centered > safe {
                outer += v.norm_sqr();
            }
        }
        let leakage = outer / total;
        if leakage > 1e-6 {
            return Err(SsfmError::GridLeakage { leakage });
        }
    }

    let alpha = fiber.alpha_np_per_km();
    let n_z = quad.n_z_steps.max(2);
    let dz = fiber.length_km / n_z as f64;
    let mut acc = Complex64::new(0.0, 0.0);
    for j in 0..=n_z {
        let z = (j as f64) * dz; // km
        let weight = if j == 0 || j == n_z { 0.5 } else { 1.0 };
        let f_z = (-alpha * z).exp();
        let inner = collision_inner(&g0, n, fs, fiber.beta2_s2_per_km() * z, h, k, m, t_sym, delta_f_hz, dt);
        acc += weight * f_z * inner * dz;
    }

    Ok(CollisionCoefficient { h, k, m, value: acc })
}

/// Multiply a spectrum by the dispersion response accumulated over `beta2_z`
/// (s²), matching the sign convention of the propagation operator.
fn apply_dispersion(spec: &mut [Complex64], n: usize, fs: f64, beta2_z: f64) {
    for (j, v) in spec.iter_mut().enumerate() {
        let w = 2.0 * std::f64::consts::PI * bin_freq(j, n, fs);
        *v *= Complex64::from_polar(1.0, -0.5 * beta2_z * w * w);
    }
}

/// Time integral of the four-pulse product at one distance.
#[allow(clippy::too_many_arguments)]
fn collision_inner(
    g0_spec: &[Complex64],
    n: usize,
    fs: f64,
    beta2_z: f64, // s²
    h: i64,
    k: i64,
    m: i64,
    t_sym: f64,
    delta_f_hz: f64,
    dt: f64,
) -> Complex64 {
    let s = beta2_z * 2.0 * std::f64::consts::PI * delta_f_hz; // walk-off in s
    let mut base = g0_spec.to_vec();
    apply_dispersion(&mut base, n, fs, beta2_z);

    let shifted = |tau: f64| -> Vec<Complex64> {
        let mut spec = base.clone();
        for (j, v) in spec.iter_mut().enumerate() {
            let f = bin_freq(j, n, fs);
            *v *= Complex64::from_polar(1.0, -2.0 * std::f64::consts::PI * f * tau);
        }
        ifft_in_place(&mut spec);
        spec
    };

    let g_t = shifted(0.0);
    let g_h = shifted(h as f64 * t_sym);
    let g_k = shifted(k as f64 * t_sym + s);
    let g_m = shifted(m as f64 * t_sym + s);

    let mut sum = Complex64::new(0.0, 0.0);
    for j in 0..n {
        sum += g_t[j].conj() * g_h[j] * g_k[j].conj() * g_m[j];
    }
    sum * dt
}

// ---------------------------------------------------------------------------
// Nonlinear phase-noise extraction
// ---------------------------------------------------------------------------

/// Phase series and normalized autocorrelation extracted from a noiseless
/// propagation run.
#[derive(Debug, Clone)]
pub struct NlpnExtract {
    /// Per-symbol phase arg(y_k·a_k*), optionally smoothed, in rad.
    pub phase: Vec<f64>,
    /// Normalized autocorrelation of the mean-removed phase at lags
    /// 0..len/2; identically 1 for a constant phase series.
    pub autocorrelation: Vec<f64>,
}

/// Extract the common-phase series between received and transmitted symbols
/// and its autocorrelation.  Zero-amplitude transmit symbols are skipped;
/// `window` ≥ 1 applies a centered moving average to the phase before the
/// autocorrelation is formed (1 = no smoothing).
pub fn extract_nlpn(rx: &[Complex64], tx: &[Complex64], window: usize) -> NlpnExtract {
    assert_eq!(rx.len(), tx.len(), "symbol streams must align");
    assert!(window >= 1, "smoothing window must be ≥ 1");
    let raw: Vec<f64> = rx
        .iter()
        .zip(tx)
        .filter(|(_, a)| a.norm_sqr() > 0.0)
        .map(|(y, a)| (y * a.conj()).arg())
        .collect();
    let n = raw.len();
    let phase: Vec<f64> = if window == 1 {
        raw.clone()
    } else {
        (0..n)
            .map(|i| {
                let lo = i.saturating_sub(window / 2);
                let hi = (i + window - window / 2).min(n);
                raw[lo..hi].iter().sum::<f64>() / (hi - lo) as f64
            })
            .collect()
    };

    let mean = if n == 0 { 0.0 } else { phase.iter().sum::<f64>() / n as f64 };
    let centered: Vec<f64> = phase.iter().map(|p| p - mean).collect();
    let c0: f64 = centered.iter().map(|x| x * x).sum();
    let n_lags = n / 2;
    let autocorrelation: Vec<f64> = if c0 < 1e-24 {
        vec![1.0; n_lags]
    } else {
        (0..n_lags)
            .map(|l| {
                let c: f64 = (0..n - l).map(|i| centered[i] * centered[i + l]).sum();
                c / c0
            })
            .collect()
    };
    NlpnExtract { phase, autocorrelation }
}

/// First lag at which the autocorrelation drops below `level` (e.g. 0.5);
/// returns the sequence length when it never does.
pub fn autocorr_decay_lag(autocorrelation: &[f64], level: f64) -> usize {
    autocorrelation
        .iter()
        .position(|&r| r < level)
        .unwrap_or(autocorrelation.len())
}
