//! Wave-front detection on the circle and verification of the singularity
//! relocation law of the separable scattering matrix.
//!
//! A point `(theta0, ±)` is out of the wave front set of `u` when coherent
//! states concentrated there (spatial width `~ sqrt(h)`, frequency center
//! `±m0/h`) overlap `u` with mass decaying rapidly as `h -> 0`. The detector
//! measures overlap masses at all grid positions at once (one FFT per scale
//! and direction), fits the dyadic decay slope per position, and classifies
//! slopes below the threshold order as singular. Applying the diagonal
//! scattering matrix must relocate every detection by `pi/a * sign(omega)`
//! while preserving its frequency direction.

use num_complex::Complex;
use rustfft::FftNum;
use serde::{Deserialize, Serialize};

use crate::bessel::ln_gamma;
use crate::conic::Sign;
use crate::error::Error;
use crate::fit::RateFit;
use crate::geometry::{circ_diff, wrap_angle};
use crate::real::{real, to_f64, Real};
use crate::smatrix::{apply_smatrix, bin_mode, fft_synthesis, grid_norm, ModePhaseTable};
use crate::Result;

/// A coherent state on the circle: periodized Gaussian at `theta0` with
/// frequency center `m0/h` and spatial width `width * sqrt(h)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoherentProbe<T> {
    pub theta0: T,
    /// Signed frequency center at scale 1 (center grows like `m0/h`).
    pub m0: i64,
    pub h: T,
    pub width: T,
}

impl<T: Real + FftNum> CoherentProbe<T> {
    /// Gaussian weight of the probe on Fourier mode `m` (phase excluded).
    pub fn mode_weight(&self, m: i64) -> T {
        let center = real::<T>(self.m0 as f64) / self.h;
        let spread = self.width * self.width * self.h / real(2.0);
        (-(real::<T>(m as f64) - center).powi(2) * spread).exp()
    }

    /// Grid samples of the probe, l2-normalized under [`grid_norm`].
    pub fn samples(&self, n: usize) -> Vec<Complex<T>> {
        let mut coeffs = vec![Complex::new(T::zero(), T::zero()); n];
        for (j, c) in coeffs.iter_mut().enumerate() {
            let m = bin_mode(j, n);
            let phase = -real::<T>(m as f64) * self.theta0;
            *c = Complex::from_polar(self.mode_weight(m), phase);
        }
        let mut u = fft_synthesis(&coeffs);
        let norm = grid_norm(&u);
        if norm > T::zero() {
            for z in &mut u {
                *z = z.unscale(norm);
            }
        }
        u
    }
}

/// Probe sweep specification: one frequency scale ladder, all grid positions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeBank<T> {
    /// Frequency center at scale 1.
    pub m0: i64,
    pub width: T,
    /// Dyadic scales, largest to smallest (default `2^-3 .. 2^-7`).
    pub h_values: Vec<T>,
}

impl<T: Real> Default for ProbeBank<T> {
    fn default() -> Self {
        ProbeBank {
            m0: 5,
            width: real(0.5),
            h_values: (3..=7).map(|k| real::<T>(2.0).powi(-k)).collect(),
        }
    }
}

impl<T: Real> ProbeBank<T> {
    /// Largest frequency the sweep touches (center plus window margin).
    pub fn max_frequency(&self) -> T {
        let h_min = self
            .h_values
            .iter()
            .fold(T::one(), |a, &b| a.min(b));
        let center = real::<T>(self.m0 as f64) / h_min;
        let margin = real::<T>(8.0) / (self.width * h_min.sqrt());
        center + margin
    }

    /// The probes the sweep evaluates at one grid position.
    pub fn probes_at(&self, theta0: T) -> Vec<CoherentProbe<T>> {
        let mut out = Vec::new();
        for &h in &self.h_values {
            for m0 in [self.m0, -self.m0] {
                out.push(CoherentProbe {
                    theta0,
                    m0,
                    h,
                    width: self.width,
                });
            }
        }
        out
    }
}

/// One detected singularity: position, frequency direction, peak mass.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Detection<T> {
    pub theta: T,
    pub direction: Sign,
    pub mass: T,
    pub slope: T,
}

/// Wave-front detection report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WfReport<T> {
    /// Detections sorted by mass, descending.
    pub detections: Vec<Detection<T>>,
    /// Absolute mass threshold used for classification.
    pub threshold: T,
    /// Decay slopes of the detections (aligned with `detections`).
    pub h_slopes: Vec<T>,
}

impl<T: Real> WfReport<T> {
    pub fn detections_with_direction(&self, direction: Sign) -> Vec<&Detection<T>> {
        self.detections
            .iter()
            .filter(|d| d.direction == direction)
            .collect()
    }
}

/// Overlap masses of direction-`sign` probes at every grid position: one
/// inverse FFT of the windowed spectrum per scale.
fn mass_profile<T: Real + FftNum>(
    coeffs: &[Complex<T>],
    bank: &ProbeBank<T>,
    h: T,
    sign: Sign,
) -> Vec<T> {
    let n = coeffs.len();
    let m0 = match sign {
        Sign::Plus => bank.m0,
        Sign::Minus => -bank.m0,
    };
    let center = real::<T>(m0 as f64) / h;
    let spread = bank.width * bank.width * h / real(2.0);
    // l2 normalization of the probe weights over the mode lattice.
    let mut total = T::zero();
    let c_int = to_f64(center).round() as i64;
    let pad = (12.0 / (to_f64(bank.width) * to_f64(h).sqrt())).ceil() as i64 + 2;
    for m in (c_int - pad)..=(c_int + pad) {
        let w = (-(real::<T>(m as f64) - center).powi(2) * spread).exp();
        total = total + w * w;
    }
    let scale = total.sqrt().recip();

    let mut windowed = vec![Complex::new(T::zero(), T::zero()); n];
    for (j, w) in windowed.iter_mut().enumerate() {
        let m = bin_mode(j, n);
        let g = (-(real::<T>(m as f64) - center).powi(2) * spread).exp() * scale;
        *w = coeffs[j] * g;
    }
    fft_synthesis(&windowed).iter().map(|z| z.norm()).collect()
}

/// Classifies every grid position and direction by the dyadic decay of its
/// probe masses; returns the singular set with peak positions.
///
/// A position is in the wave front set when its fitted decay slope is below
/// `decay_orders` and its mass exceeds the (relative) `threshold`.
pub fn detect_wavefront<T: Real + FftNum>(
    u: &[Complex<T>],
    bank: &ProbeBank<T>,
    decay_orders: usize,
    rel_threshold: T,
) -> Result<WfReport<T>> {
    let n = u.len();
    if bank.h_values.len() < 2 {
        return Err(Error::invalid("need at least two probe scales"));
    }
    let nyquist = real::<T>(n as f64) / real(2.0);
    if bank.max_frequency() > nyquist {
        return Err(Error::Coverage(format!(
            "finest probe frequency {:e} exceeds grid Nyquist {:e}",
            to_f64(bank.max_frequency()),
            to_f64(nyquist)
        )));
    }
    let norm = grid_norm(u);
    let threshold = rel_threshold * norm.max(T::min_positive_value());
    let coeffs = crate::smatrix::fft_coefficients(u);
    let two_pi = T::PI() + T::PI();

    let mut detections = Vec::new();
    for sign in [Sign::Plus, Sign::Minus] {
        let profiles: Vec<Vec<T>> = bank
            .h_values
            .iter()
            .map(|&h| mass_profile(&coeffs, bank, h, sign))
            .collect();
        // Per-position slope fit and threshold test.
        let mut in_set = vec![false; n];
        let mut slopes = vec![T::zero(); n];
        let finest = profiles.last().expect("at least one scale");
        for j in 0..n {
            let masses: Vec<T> = profiles.iter().map(|p| p[j]).collect();
            let peak = masses.iter().fold(T::zero(), |a, &b| a.max(b));
            if peak < threshold {
                continue;
            }
            let fit = RateFit::fit(bank.h_values.clone(), masses)?;
            slopes[j] = fit.slope;
            in_set[j] = fit.slope < real(decay_orders as f64);
        }
        // Merge circular runs of flagged positions into single detections.
        let mut visited = vec![false; n];
        for j in 0..n {
            if !in_set[j] || visited[j] {
                continue;
            }
            // Walk left to the start of the run (circularly).
            let mut start = j;
            while in_set[(start + n - 1) % n] && (start + n - 1) % n != j {
                start = (start + n - 1) % n;
                if start == j {
                    break;
                }
            }
            let mut best = start;
            let mut idx = start;
            loop {
                visited[idx] = true;
                if finest[idx] > finest[best] {
                    best = idx;
                }
                let next = (idx + 1) % n;
                if !in_set[next] || visited[next] {
                    break;
                }
                idx = next;
            }
            detections.push(Detection {
                theta: two_pi * real(best as f64) / real(n as f64),
                direction: sign,
                mass: finest[best],
                slope: slopes[best],
            });
        }
    }
    detections.sort_by(|a, b| b.mass.partial_cmp(&a.mass).unwrap());
    let h_slopes = detections.iter().map(|d| d.slope).collect();
    Ok(WfReport {
        detections,
        threshold,
        h_slopes,
    })
}

/// One relocated singularity in a verification report.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Relocation<T> {
    pub from: T,
    pub direction: Sign,
    pub expected: T,
    pub found: T,
    pub cell_error: T,
}

/// Outcome of the wave-front relocation check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WfVerification<T> {
    pub pass: bool,
    pub relocations: Vec<Relocation<T>>,
    /// Output detections not matched by any relocated input detection.
    pub spurious: usize,
    pub input: WfReport<T>,
    pub output: WfReport<T>,
}

/// Applies the scattering matrix to `u` and checks that every detected
/// singularity `(theta, sign)` reappears at `theta + sign * shift` (within
/// `tol_cells` grid cells), with direction preserved and nothing extra.
///
/// The geometric prediction is `shift = pi/a` for the scattering matrix and
/// `-pi/a` for its inverse.
pub fn verify_wf_relocation<T: Real + FftNum>(
    table: &ModePhaseTable<T>,
    u: &[Complex<T>],
    bank: &ProbeBank<T>,
    decay_orders: usize,
    rel_threshold: T,
    tol_cells: usize,
    shift: T,
) -> Result<WfVerification<T>> {
    let n = u.len();
    let su = apply_smatrix(table, u)?;
    let input = detect_wavefront(u, bank, decay_orders, rel_threshold)?;
    let output = detect_wavefront(&su, bank, decay_orders, rel_threshold)?;
    let two_pi = T::PI() + T::PI();
    let cell = two_pi / real(n as f64);

    let mut relocations = Vec::new();
    let mut matched_outputs = vec![false; output.detections.len()];
    let mut pass = true;
    for det in &input.detections {
        let s: T = det.direction.scalar();
        let expected = wrap_angle(det.theta + s * shift, two_pi);
        let mut best: Option<(usize, T)> = None;
        for (i, out) in output.detections.iter().enumerate() {
            if out.direction != det.direction || matched_outputs[i] {
                continue;
            }
            let err = circ_diff(out.theta, expected, two_pi).abs();
            if best.is_none_or(|(_, e)| err < e) {
                best = Some((i, err));
            }
        }
        match best {
            Some((i, err)) if err <= real::<T>(tol_cells as f64) * cell + real::<T>(1e-12) => {
                matched_outputs[i] = true;
                relocations.push(Relocation {
                    from: det.theta,
                    direction: det.direction,
                    expected,
                    found: output.detections[i].theta,
                    cell_error: err / cell,
                });
            }
            _ => {
                pass = false;
                relocations.push(Relocation {
                    from: det.theta,
                    direction: det.direction,
                    expected,
                    found: T::nan(),
                    cell_error: T::infinity(),
                });
            }
        }
    }
    let spurious = matched_outputs.iter().filter(|m| !**m).count();
    if spurious > 0 {
        pass = false;
    }
    Ok(WfVerification {
        pass,
        relocations,
        spurious,
        input,
        output,
    })
}

/// Band-limited algebraic cusp `|sin((theta - theta0)/2)|^alpha` from its
/// closed-form Fourier coefficients
/// `(-1)^m 2^{-alpha} Gamma(1+alpha) / (Gamma(1+alpha/2+m) Gamma(1+alpha/2-m))`,
/// truncated at `|m| <= m_cut`. Singular at `theta0` in both directions.
pub fn cusp_function<T: Real + FftNum>(
    n: usize,
    theta0: T,
    alpha: T,
    m_cut: usize,
) -> Vec<Complex<T>> {
    assert!(2 * m_cut < n, "cusp truncation beyond Nyquist");
    let a = to_f64(alpha);
    // gamma_0 = Gamma(1+alpha)/Gamma(1+alpha/2)^2, then the ratio recursion
    // gamma_{m+1}/gamma_m = (alpha/2 - m)/(1 + alpha/2 + m).
    let mut coeff = vec![0.0f64; m_cut + 1];
    coeff[0] = (ln_gamma(1.0 + a) - 2.0 * ln_gamma(1.0 + a / 2.0)).exp();
    for m in 0..m_cut {
        let mf = m as f64;
        coeff[m + 1] = coeff[m] * (a / 2.0 - mf) / (1.0 + a / 2.0 + mf);
    }
    let scale = 2.0f64.powf(-a);
    let mut bins = vec![Complex::new(T::zero(), T::zero()); n];
    for (j, bin) in bins.iter_mut().enumerate() {
        let m = bin_mode(j, n);
        if m.unsigned_abs() as usize <= m_cut {
            let parity = if m % 2 == 0 { 1.0 } else { -1.0 };
            let c = real::<T>(parity * scale * coeff[m.unsigned_abs() as usize]);
            let phase = -real::<T>(m as f64) * theta0;
            *bin = Complex::from_polar(c.abs(), if c < T::zero() { phase + T::PI() } else { phase });
        }
    }
    fft_synthesis(&bins)
}

/// One-sided (Hardy-type) packet with coefficients `1/|m|` on
/// `1 <= sign m <= m_cut`; singular at `theta0` in the `sign` direction only.
pub fn hardy_packet<T: Real + FftNum>(
    n: usize,
    theta0: T,
    m_cut: usize,
    direction: Sign,
) -> Vec<Complex<T>> {
    assert!(2 * m_cut < n, "packet truncation beyond Nyquist");
    let mut bins = vec![Complex::new(T::zero(), T::zero()); n];
    for (j, bin) in bins.iter_mut().enumerate() {
        let m = bin_mode(j, n);
        let keep = match direction {
            Sign::Plus => m >= 1 && m as usize <= m_cut,
            Sign::Minus => m <= -1 && (-m) as usize <= m_cut,
        };
        if keep {
            let c = real::<T>(1.0 / m.unsigned_abs() as f64);
            let phase = -real::<T>(m as f64) * theta0;
            *bin = Complex::from_polar(c, phase);
        }
    }
    fft_synthesis(&bins)
}

/// Fully resolved periodized Gaussian (smooth; empty wave front set).
pub fn smooth_gaussian<T: Real + FftNum>(n: usize, theta0: T, width: T) -> Vec<Complex<T>> {
    let two_pi = T::PI() + T::PI();
    (0..n)
        .map(|j| {
            let theta = two_pi * real(j as f64) / real(n as f64);
            let mut s = T::zero();
            for wrap in -3..=3i32 {
                let d = theta - theta0 + two_pi * real(wrap as f64);
                s = s + (-d * d / (width * width * real(2.0))).exp();
            }
            Complex::new(s, T::zero())
        })
        .collect()
}

/// Closed-form Fourier coefficient of `|sin(theta/2)|^alpha` at mode `m`.
pub fn cusp_coefficient(alpha: f64, m: i64) -> f64 {
    let a = alpha;
    let mut c = (ln_gamma(1.0 + a) - 2.0 * ln_gamma(1.0 + a / 2.0)).exp();
    for k in 0..m.unsigned_abs() {
        let kf = k as f64;
        c = c * (a / 2.0 - kf) / (1.0 + a / 2.0 + kf);
    }
    let parity = if m % 2 == 0 { 1.0 } else { -1.0 };
    parity * 2.0f64.powf(-a) * c
}
