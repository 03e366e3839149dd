//! Shared numerics: unit conversions, special functions, quadrature rules,
//! 1-D searches and reproducible random-number streams.

use num_complex::Complex64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Planck constant in J·s.
pub const PLANCK: f64 = 6.626_070_15e-34;

/// Convert a power ratio in dB to linear scale.
#[inline]
pub fn db_to_lin(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Convert a linear power ratio to dB.
#[inline]
pub fn lin_to_db(lin: f64) -> f64 {
    10.0 * lin.log10()
}

/// Convert dBm to watts.
#[inline]
pub fn dbm_to_watts(dbm: f64) -> f64 {
    1e-3 * db_to_lin(dbm)
}

/// Convert watts to dBm.
#[inline]
pub fn watts_to_dbm(w: f64) -> f64 {
    lin_to_db(w / 1e-3)
}

/// Complementary error function.
#[inline]
pub fn erfc(x: f64) -> f64 {
    libm::erfc(x)
}

/// Error function.
#[inline]
pub fn erf(x: f64) -> f64 {
    libm::erf(x)
}

/// Normalized sinc: sin(πu)/(πu), with sinc(0) = 1.
#[inline]
pub fn sinc(u: f64) -> f64 {
    if u.abs() < 1e-12 {
        1.0
    } else {
        let p = std::f64::consts::PI * u;
        p.sin() / p
    }
}

/// Arithmetic mean of a slice.
pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Population variance of a slice.
pub fn variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / xs.len() as f64
}

/// Mean of |z|² over a complex slice.
pub fn mean_power(zs: &[Complex64]) -> f64 {
    zs.iter().map(|z| z.norm_sqr()).sum::<f64>() / zs.len() as f64
}

/// `n` evenly spaced points from `a` to `b` inclusive.
pub fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![a];
    }
    (0..n)
        .map(|i| a + (b - a) * i as f64 / (n - 1) as f64)
        .collect()
}

/// Golden-section minimization of a unimodal function on [a, b].
///
/// Shrinks the bracket until it is narrower than `tol`, then returns the
/// midpoint of the final bracket and the objective value there.
pub fn golden_section_min<F: FnMut(f64) -> f64>(
    mut f: F,
    mut a: f64,
    mut b: f64,
    tol: f64,
) -> (f64, f64) {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while (b - a).abs() > tol {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    let x = 0.5 * (a + b);
    let fx = f(x);
    (x, fx)
}

/// Bisection root finding for a function with opposite signs at `a` and `b`.
///
/// Returns the midpoint of the final bracket. Panics if f(a) and f(b) have
/// the same sign.
pub fn bisect_root<F: FnMut(f64) -> f64>(mut f: F, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let mut fa = f(a);
    let fb = f(b);
    assert!(
        fa * fb <= 0.0,
        "bisect_root: no sign change on [{a}, {b}] (f(a)={fa}, f(b)={fb})"
    );
    while (b - a).abs() > tol {
        let m = 0.5 * (a + b);
        let fm = f(m);
        if fa * fm <= 0.0 {
            b = m;
        } else {
            a = m;
            fa = fm;
        }
    }
    0.5 * (a + b)
}

/// Nodes and weights of the `n`-point Gauss-Hermite rule for
/// ∫ f(x)·exp(−x²) dx (physicists' convention).
///
/// Roots are located by Newton iteration on the Hermite recurrence; the
/// weights satisfy Σwᵢ = √π.
pub fn gauss_hermite(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    // Evaluate H_n and H_{n-1} at x via the recurrence.
    let herm = |x: f64| -> (f64, f64) {
        let mut h_prev = 1.0; // H_0
        let mut h = 2.0 * x; // H_1
        for k in 1..n {
            let h_next = 2.0 * x * h - 2.0 * k as f64 * h_prev;
            h_prev = h;
            h = h_next;
        }
        (h, h_prev) // (H_n, H_{n-1})
    };
    let m = (n + 1) / 2;
    let mut z = 0.0;
    for i in 0..m {
        // Initial guesses for the roots in descending order.
        z = match i {
            0 => {
                let a = (2.0 * n as f64 + 1.0).sqrt();
                a - 1.85575 * a.powf(-1.0 / 3.0)
            }
            1 => z - 1.14 * (n as f64).powf(0.426) / z,
            2 => 1.86 * z - 0.86 * nodes[n - 1],
            3 => 1.91 * z - 0.91 * nodes[n - 2],
            _ => 2.0 * z - nodes[n - i + 1],
        };
        for _ in 0..100 {
            let (hn, hn1) = herm(z);
            let dh = 2.0 * n as f64 * hn1;
            let dz = hn / dh;
            z -= dz;
            if dz.abs() < 1e-15 * (1.0 + z.abs()) {
                break;
            }
        }
        let (_, hn1) = herm(z);
        // w = 2^{n-1} n! √π / (n² H_{n-1}(z)²)
        let mut log_w = (n as f64 - 1.0) * std::f64::consts::LN_2
            + 0.5 * std::f64::consts::PI.ln()
            - 2.0 * (n as f64).ln()
            - 2.0 * hn1.abs().ln();
        for k in 1..=n {
            log_w += (k as f64).ln();
        }
        let w = log_w.exp();
        nodes[n - 1 - i] = z;
        nodes[i] = -z;
        weights[n - 1 - i] = w;
        weights[i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

/// Average of g(cos θ) for θ uniform on [0, π], by the `n`-point
/// Gauss-Chebyshev rule: (1/n)·Σ g(cos((2k−1)π/(2n))).
///
/// Equivalently the expectation of g(β) for β distributed on [−1, 1] with
/// density 1/(π√(1−β²)).
pub fn chebyshev_average<F: FnMut(f64) -> f64>(mut g: F, n: usize) -> f64 {
    let mut acc = 0.0;
    for k in 1..=n {
        let beta = ((2 * k - 1) as f64 * std::f64::consts::PI / (2 * n) as f64).cos();
        acc += g(beta);
    }
    acc / n as f64
}

/// Deterministic random-number stream `stream` derived from `seed`.
///
/// Streams with different indices are statistically independent; the same
/// (seed, stream) pair always yields the same sequence, so parallel loops
/// that give each work unit its own stream produce results that do not
/// depend on scheduling.
pub fn rng_stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// One sample of a standard real Gaussian (Box-Muller).
#[inline]
pub fn randn<R: Rng>(rng: &mut R) -> f64 {
    // Marsaglia polar method; rejection loop terminates with prob. 1.
    loop {
        let u: f64 = rng.gen::<f64>() * 2.0 - 1.0;
        let v: f64 = rng.gen::<f64>() * 2.0 - 1.0;
        let s = u * u + v * v;
        if s > 0.0 && s < 1.0 {
            return u * (-2.0 * s.ln() / s).sqrt();
        }
    }
}

/// One sample of a circularly symmetric complex Gaussian with E|z|² = 1.
#[inline]
pub fn crandn<R: Rng>(rng: &mut R) -> Complex64 {
    Complex64::new(randn(rng) / 2f64.sqrt(), randn(rng) / 2f64.sqrt())
}
