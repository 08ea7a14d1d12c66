//! The quantum scattering matrix of the separable model: circle boundary of
//! radius `a`, radial short-range perturbation `W`.
//!
//! Conjugating the cone Laplacian by `r^{-1/2}` turns the angular mode `m`
//! into the radial problem
//!
//! ```text
//! -1/2 u'' + ( (nu^2 - 1/4)/(2 r^2) + W(r) ) u = lambda u,   nu = |m|/a,
//! ```
//!
//! whose regular solution for `W = 0` is `sqrt(r) J_nu(k r)`, `k = sqrt(2
//! lambda)`. The scattering matrix acts diagonally on modes with phase
//! `sigma_m = -pi (nu_m + 1/2) + 2 delta_m`, where `delta_m` is the phase
//! shift of the perturbed radial solution relative to the exact cone. The
//! large-`m` increments `sigma_{m+1} - sigma_m -> -pi/a` encode the time-pi
//! geodesic flow on the boundary circle: singularities of boundary data move
//! by `pi/a * sign(omega)`.

use num_complex::Complex;
use rayon::prelude::*;
use rustfft::{FftNum, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::ode::{Dopri5, OdeSystem};
use crate::real::{real, to_f64, Real};
use crate::Result;

/// Short-range radial potentials with closed-form tail integrals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum RadialPotential<T> {
    Zero,
    /// `W(r) = strength / (1 + r^2)`; decay rate `mu = 1`.
    Lorentzian { strength: T },
    /// `W(r) = strength (1 + r)^{-1-mu}`.
    PolyDecay { strength: T, mu: T },
}

impl<T: Real> RadialPotential<T> {
    /// Supremum of `|W|` over `r >= 0` (attained at the origin for the
    /// built-in families).
    pub fn sup_abs(&self) -> T {
        match self {
            RadialPotential::Zero => T::zero(),
            RadialPotential::Lorentzian { strength } => strength.abs(),
            RadialPotential::PolyDecay { strength, .. } => strength.abs(),
        }
    }

    pub fn value(&self, r: T) -> T {
        match self {
            RadialPotential::Zero => T::zero(),
            RadialPotential::Lorentzian { strength } => *strength / (T::one() + r * r),
            RadialPotential::PolyDecay { strength, mu } => {
                let base = T::one() + r;
                // powf in the integrator hot path is worth dodging for the
                // two standard rates.
                if *mu == T::one() {
                    *strength / (base * base)
                } else if *mu == real(0.5) {
                    *strength / (base * base.sqrt())
                } else {
                    *strength * base.powf(-(T::one() + *mu))
                }
            }
        }
    }

    /// Decay rate `mu` in the envelope `(1 + r)^{-1-mu}`.
    pub fn mu(&self) -> T {
        match self {
            RadialPotential::Zero => T::one(),
            RadialPotential::Lorentzian { .. } => T::one(),
            RadialPotential::PolyDecay { mu, .. } => *mu,
        }
    }

    /// Closed-form tail `int_R^inf W(r) dr`.
    pub fn tail_integral(&self, r_from: T) -> T {
        match self {
            RadialPotential::Zero => T::zero(),
            RadialPotential::Lorentzian { strength } => {
                *strength * (T::FRAC_PI_2() - r_from.atan())
            }
            RadialPotential::PolyDecay { strength, mu } => {
                *strength * (T::one() + r_from).powf(-*mu) / *mu
            }
        }
    }

    /// Smallest radius with `|W| <= bound` (envelope inverted in closed form).
    pub fn radius_for_bound(&self, bound: T) -> T {
        match self {
            RadialPotential::Zero => T::one(),
            RadialPotential::Lorentzian { strength } => {
                let ratio = strength.abs() / bound;
                if ratio <= T::one() {
                    T::one()
                } else {
                    (ratio - T::one()).sqrt()
                }
            }
            RadialPotential::PolyDecay { strength, mu } => {
                let ratio = strength.abs() / bound;
                if ratio <= T::one() {
                    T::one()
                } else {
                    ratio.powf((T::one() + *mu).recip()) - T::one()
                }
            }
        }
    }

    /// Decay audit on a log-spaced grid, as for the flow profiles.
    pub fn audit_decay(&self) -> Result<T> {
        let (c_decl, mu) = match self {
            RadialPotential::Zero => return Ok(T::zero()),
            // sup (1+r)^2/(1+r^2) = 2, attained at r = 1.
            RadialPotential::Lorentzian { strength } => {
                (strength.abs() * real(2.0), T::one())
            }
            RadialPotential::PolyDecay { strength, mu } => (strength.abs(), *mu),
        };
        let mut worst = T::zero();
        for i in 0..1000 {
            let r = real::<T>(10.0).powf(real::<T>(6.0) * real(i as f64) / real(999.0));
            worst = worst.max(self.value(r).abs() * (T::one() + r).powf(T::one() + mu));
        }
        if worst > c_decl * real(1.0 + 1e-9) {
            return Err(Error::domain(format!(
                "potential decay audit failed: required C = {:e} > declared {:e}",
                to_f64(worst),
                to_f64(c_decl)
            )));
        }
        Ok(worst)
    }
}

/// One angular mode of the separable model at energy `lambda`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadialProblem<T> {
    /// Boundary circle radius.
    pub a: T,
    /// Effective Bessel order `nu = |m|/a`.
    pub nu: T,
    pub potential: RadialPotential<T>,
    pub lambda: T,
    /// Wave number `k = sqrt(2 lambda)`.
    pub k: T,
}

impl<T: Real> RadialProblem<T> {
    pub fn new(a: T, nu: T, potential: RadialPotential<T>, lambda: T) -> Result<Self> {
        if !(a > T::zero()) || !(lambda > T::zero()) || !(nu >= T::zero()) {
            return Err(Error::invalid("radial problem needs a > 0, lambda > 0, nu >= 0"));
        }
        Ok(RadialProblem {
            a,
            nu,
            potential,
            lambda,
            k: (lambda + lambda).sqrt(),
        })
    }

    pub fn for_mode(a: T, m: i64, potential: RadialPotential<T>, lambda: T) -> Result<Self> {
        let nu = real::<T>(m.unsigned_abs() as f64) / a;
        Self::new(a, nu, potential, lambda)
    }

    /// Start radius of the regular-solution series.
    fn r_min(&self) -> T {
        real::<T>(1e-4) * T::one().min(self.nu.recip())
    }
}

/// Total cone phase `sigma_exact(nu) = -pi (nu + 1/2)`.
pub fn sigma_exact<T: Real>(nu: T) -> T {
    -T::PI() * (nu + real(0.5))
}

const RENORM_LIMIT: f64 = 1e150;

struct RadialSystem<'a, T> {
    problem: &'a RadialProblem<T>,
    with_potential: bool,
}

impl<T: Real> RadialSystem<'_, T> {
    // u'' = f(r) u with f = (nu^2 - 1/4)/r^2 + 2 W - k^2.
    fn coefficient(&self, r: T) -> T {
        let nu = self.problem.nu;
        let quarter: T = real(0.25);
        let mut f = (nu * nu - quarter) / (r * r) - self.problem.k * self.problem.k;
        if self.with_potential {
            let w = self.problem.potential.value(r);
            f = f + w + w;
        }
        f
    }
}

impl<T: Real> OdeSystem<T> for RadialSystem<'_, T> {
    fn dim(&self) -> usize {
        2
    }

    fn rhs(&self, r: T, y: &[T], dy: &mut [T]) {
        dy[0] = y[1];
        dy[1] = self.coefficient(r) * y[0];
    }

    // The equation is linear: rescale freely to dodge overflow (the
    // forbidden region at large nu grows the solution by thousands of
    // orders of magnitude).
    fn post_step(&self, _r: T, y: &mut [T]) -> Result<bool> {
        let scale = y[0].abs().max(y[1].abs() / self.problem.k);
        if scale > real(RENORM_LIMIT) || (scale < real(1.0 / RENORM_LIMIT) && scale > T::zero()) {
            y[0] = y[0] / scale;
            y[1] = y[1] / scale;
            return Ok(true);
        }
        Ok(false)
    }
}

/// Logarithmic-derivative form `y = u'/u`, `y' = f(r) - y^2`, used deep in
/// the classically forbidden region where `u` grows exponentially and has no
/// zeros. Step control then follows the smooth `y ~ nu/r` instead of the
/// growth of `u`.
struct RiccatiSystem<'a, T> {
    inner: RadialSystem<'a, T>,
}

impl<T: Real> OdeSystem<T> for RiccatiSystem<'_, T> {
    fn dim(&self) -> usize {
        1
    }

    fn rhs(&self, r: T, y: &[T], dy: &mut [T]) {
        dy[0] = self.inner.coefficient(r) - y[0] * y[0];
    }
}

/// Matched phase `atan2(k u, u')` of the regular solution at `r_match`.
///
/// The solution starts from the Frobenius series `u ~ r^{nu + 1/2} (1 + c2
/// r^2)` at `r_min`, normalized to unit amplitude (the equation is linear).
/// With `with_potential = false` this is the phase of the exact-cone solution
/// `sqrt(r) J_nu(k r)`, which calibrates the solver against an independent
/// Bessel evaluation.
pub fn matched_phase<T: Real>(
    problem: &RadialProblem<T>,
    with_potential: bool,
    r_match: T,
    ode_tol: T,
) -> Result<T> {
    let r_min = problem.r_min();
    let nu = problem.nu;
    let w0 = if with_potential {
        problem.potential.value(T::zero())
    } else {
        T::zero()
    };
    let k2 = problem.k * problem.k;
    // Frobenius: u = r^{nu+1/2}(1 + c2 r^2), c2 = (2 W(0) - k^2)/(4 (1 + nu)).
    let c2 = (w0 + w0 - k2) / (real::<T>(4.0) * (T::one() + nu));
    let half: T = real(0.5);
    // Divide out r_min^{nu+1/2}; only the ray through (u, u') matters.
    let u = T::one() + c2 * r_min * r_min;
    let du = (nu + half) / r_min * (T::one() + c2 * r_min * r_min) + (c2 + c2) * r_min;
    let sys = RadialSystem {
        problem,
        with_potential,
    };

    // Hand over from the log-derivative to the linear system where the
    // coefficient is still safely positive: (nu^2 - 1/4)/r^2 >= 4 k^2 + 2 sup|W|.
    let quarter: T = real(0.25);
    let margin = real::<T>(4.0) * k2 + real::<T>(2.0) * problem.potential.sup_abs();
    let swap_sq = (nu * nu - quarter) / margin;
    let r_swap = if swap_sq > T::zero() {
        swap_sq.sqrt().min(r_match)
    } else {
        T::zero()
    };

    let mut state = [u, du];
    let mut start = r_min;
    if r_swap > r_min * real(4.0) {
        let mut y = vec![du / u];
        let ric = RiccatiSystem { inner: RadialSystem { problem, with_potential } };
        let mut stepper = Dopri5::new(1);
        stepper.integrate(&ric, r_min, r_swap, &mut y, ode_tol)?;
        state = [T::one(), y[0]];
        start = r_swap;
    }
    let mut y = state.to_vec();
    let mut stepper = Dopri5::new(2);
    stepper.integrate(&sys, start, r_match, &mut y, ode_tol)?;
    let phase = (problem.k * y[0]).atan2(y[1]);
    if !phase.is_finite() {
        return Err(Error::Numeric("matched phase is not finite".into()));
    }
    Ok(phase)
}

/// Reduces an angle to `(-pi, pi]`.
pub fn reduce_phase<T: Real>(x: T) -> T {
    let two_pi = T::PI() + T::PI();
    let mut y = x % two_pi;
    if y > T::PI() {
        y = y - two_pi;
    }
    if y <= -T::PI() {
        y = y + two_pi;
    }
    y
}

/// Phase shift of the perturbed radial solution relative to the exact cone.
///
/// Integrates the radial equation with and without `W` to `r_match`, takes
/// the difference of the matched phases, and adds the closed-form Born tail
/// `-(1/k) int_{r_match}^inf W dr`. Requires `|W(r_match)| <= tol * lambda`.
pub fn solve_phase_shift<T: Real>(
    problem: &RadialProblem<T>,
    r_match: T,
    tol: T,
) -> Result<T> {
    if !(tol > T::zero()) {
        return Err(Error::invalid("tolerance must be positive"));
    }
    let needed = turning_radius_margin(problem);
    if r_match < needed {
        return Err(Error::invalid(format!(
            "r_match = {:e} is below the asymptotic matching radius {:e}",
            to_f64(r_match),
            to_f64(needed)
        )));
    }
    if problem.potential.value(r_match).abs() > tol * problem.lambda {
        return Err(Error::invalid(format!(
            "|W(r_match)| = {:e} exceeds tol * lambda = {:e}",
            to_f64(problem.potential.value(r_match).abs()),
            to_f64(tol * problem.lambda)
        )));
    }
    let ode_tol = real::<T>(1e-10).min(tol * real(1e-2)).max(real(1e-13));
    let phi_w = matched_phase(problem, true, r_match, ode_tol)?;
    let phi_free = matched_phase(problem, false, r_match, ode_tol)?;
    let tail = -problem.potential.tail_integral(r_match) / problem.k;
    Ok(reduce_phase(phi_w - phi_free + tail))
}

/// Matching must happen past the centrifugal turning point `nu/k`; the Born
/// tail correction needs a wide margin, while the tail-free `W = 0` problem
/// only needs to clear the turning point itself.
fn turning_radius_margin<T: Real>(problem: &RadialProblem<T>) -> T {
    let turning = problem.nu / problem.k;
    let factor: T = match problem.potential {
        RadialPotential::Zero => real(1.3),
        _ => real(3.0),
    };
    (turning * factor).max(real::<T>(20.0) / problem.k)
}

/// Per-mode phase data: total phase `sigma` and shift `delta` vs the cone.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModePhase<T> {
    pub m: i64,
    pub sigma: T,
    pub delta: T,
}

/// Diagonal scattering matrix at energy `lambda`: phases for `|m| <= m_max`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModePhaseTable<T> {
    pub lambda: T,
    pub a: T,
    pub modes: Vec<ModePhase<T>>,
}

impl<T: Real> ModePhaseTable<T> {
    pub fn m_max(&self) -> i64 {
        self.modes.iter().map(|p| p.m).max().unwrap_or(0)
    }

    pub fn phase(&self, m: i64) -> Option<&ModePhase<T>> {
        let m_max = self.m_max();
        if m.abs() > m_max {
            return None;
        }
        let idx = (m + m_max) as usize;
        self.modes.get(idx)
    }

    /// Discrete derivative `sigma_{m+1} - sigma_m`.
    pub fn delta_sigma(&self, m: i64) -> Option<T> {
        Some(self.phase(m + 1)?.sigma - self.phase(m)?.sigma)
    }

    /// Translation of the radial origin by `tau` multiplies the scattering
    /// matrix by the global phase `e^{2 i k tau}`: every `sigma_m` shifts by
    /// the same amount and the increments are untouched.
    pub fn with_origin_shift(&self, tau: T) -> Self {
        let k = (self.lambda + self.lambda).sqrt();
        let shift = (k + k) * tau;
        ModePhaseTable {
            lambda: self.lambda,
            a: self.a,
            modes: self
                .modes
                .iter()
                .map(|p| ModePhase {
                    m: p.m,
                    sigma: p.sigma + shift,
                    delta: p.delta,
                })
                .collect(),
        }
    }

    /// Conjugate phases: the table of `S(lambda)^{-1}`.
    pub fn inverse(&self) -> Self {
        ModePhaseTable {
            lambda: self.lambda,
            a: self.a,
            modes: self
                .modes
                .iter()
                .map(|p| ModePhase {
                    m: p.m,
                    sigma: -p.sigma,
                    delta: -p.delta,
                })
                .collect(),
        }
    }
}

/// Builds the diagonal scattering matrix: solves the radial phase shift for
/// each mode `0 <= m <= m_max` (modes run in parallel) and mirrors to `-m`
/// (the potential is radially symmetric).
///
/// The matching radius is chosen from the potential's envelope and the
/// largest turning point.
pub fn build_smatrix<T: Real>(
    a: T,
    potential: &RadialPotential<T>,
    lambda: T,
    m_max: i64,
    tol: T,
) -> Result<ModePhaseTable<T>> {
    if m_max < 10 {
        return Err(Error::invalid("m_max must be at least 10"));
    }
    if !(lambda > T::zero()) || !(a > T::zero()) {
        return Err(Error::invalid("lambda and a must be positive"));
    }
    potential.audit_decay()?;
    let k = (lambda + lambda).sqrt();
    let nu_max = real::<T>(m_max as f64) / a;
    let turning_factor: T = match potential {
        RadialPotential::Zero => real(1.3),
        _ => real(3.0),
    };
    let r_match = real::<T>(1e3)
        .max(potential.radius_for_bound(tol * lambda) * real(1.01))
        .max(nu_max / k * turning_factor)
        .max(real::<T>(20.0) / k);

    let half: Vec<Result<ModePhase<T>>> = (0..=m_max)
        .into_par_iter()
        .map(|m| {
            let problem = RadialProblem::for_mode(a, m, potential.clone(), lambda)?;
            let delta = solve_phase_shift(&problem, r_match, tol)?;
            Ok(ModePhase {
                m,
                sigma: sigma_exact(problem.nu) + delta + delta,
                delta,
            })
        })
        .collect();

    let mut modes = Vec::with_capacity(2 * m_max as usize + 1);
    let mut upper = Vec::with_capacity(m_max as usize + 1);
    for item in half {
        upper.push(item?);
    }
    for p in upper.iter().skip(1).rev() {
        modes.push(ModePhase {
            m: -p.m,
            sigma: p.sigma,
            delta: p.delta,
        });
    }
    modes.extend(upper);
    Ok(ModePhaseTable { lambda, a, modes })
}

/// Mean-square norm of a circle grid function, `(1/N sum |u_j|^2)^{1/2}`
/// (equals the l2 norm of its Fourier coefficients).
pub fn grid_norm<T: Real + FftNum>(u: &[Complex<T>]) -> T {
    let n: T = real(u.len() as f64);
    let sum = u
        .iter()
        .fold(T::zero(), |acc, z| acc + z.norm_sqr());
    (sum / n).sqrt()
}

/// Fourier coefficients of grid samples at `theta_j = 2 pi j / N`,
/// normalized so `u(theta) = sum_m c_m e^{i m theta}`; index `j` holds the
/// mode `m = j` for `j < N/2` and `m = j - N` otherwise.
pub fn fft_coefficients<T: Real + FftNum>(u: &[Complex<T>]) -> Vec<Complex<T>> {
    let n = u.len();
    let mut buf = u.to_vec();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let scale = T::one() / real(n as f64);
    for z in &mut buf {
        *z = z.scale(scale);
    }
    buf
}

/// Grid samples from Fourier coefficients (inverse of [`fft_coefficients`]).
pub fn fft_synthesis<T: Real + FftNum>(coeffs: &[Complex<T>]) -> Vec<Complex<T>> {
    let mut buf = coeffs.to_vec();
    FftPlanner::new().plan_fft_inverse(buf.len()).process(&mut buf);
    buf
}

/// Signed mode index of FFT bin `j` on an `N`-point grid.
pub fn bin_mode(j: usize, n: usize) -> i64 {
    if j < n / 2 {
        j as i64
    } else {
        j as i64 - n as i64
    }
}

/// Applies the diagonal scattering matrix to a band-limited circle grid
/// function: Fourier coefficient `m` is multiplied by `e^{i sigma_m}`.
///
/// Requires `N >= 4 m_max` and relative spectral mass outside the band below
/// 1e-12; preserves the l2 norm exactly up to rounding.
pub fn apply_smatrix<T: Real + FftNum>(
    table: &ModePhaseTable<T>,
    u: &[Complex<T>],
) -> Result<Vec<Complex<T>>> {
    let n = u.len();
    let m_max = table.m_max();
    if (n as i64) < 4 * m_max {
        return Err(Error::Coverage(format!(
            "grid size {n} is below 4 m_max = {}",
            4 * m_max
        )));
    }
    let mut coeffs = fft_coefficients(u);
    let total: T = coeffs
        .iter()
        .fold(T::zero(), |acc, z| acc + z.norm_sqr());
    let outside: T = coeffs
        .iter()
        .enumerate()
        .filter(|(j, _)| bin_mode(*j, n).abs() > m_max)
        .fold(T::zero(), |acc, (_, z)| acc + z.norm_sqr());
    if total > T::zero() && outside / total > real(1e-12) {
        return Err(Error::SpectralLeak {
            leak: to_f64(outside / total),
            m_max,
        });
    }
    for (j, c) in coeffs.iter_mut().enumerate() {
        let m = bin_mode(j, n);
        if m.abs() <= m_max {
            let sigma = table.phase(m).expect("mode within band").sigma;
            *c = *c * Complex::new(sigma.cos(), sigma.sin());
        } else {
            *c = Complex::new(T::zero(), T::zero());
        }
    }
    Ok(fft_synthesis(&coeffs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bessel::j_nu;

    const TOL: f64 = 1e-8;

    /// Matched phase of the exact free solution `sqrt(r) J_nu(k r)`.
    fn bessel_phase(nu: f64, k: f64, r: f64) -> f64 {
        let (j, jp) = j_nu(nu, k * r);
        let u = r.sqrt() * j;
        let du = 0.5 / r.sqrt() * j + r.sqrt() * k * jp;
        (k * u).atan2(du)
    }

    #[test]
    fn free_phase_shift_is_zero() {
        for nu in [0.0, 0.5, 1.0, 5.0, 20.0] {
            let p = RadialProblem::<f64>::new(1.0, nu, RadialPotential::Zero, 0.5).unwrap();
            let delta = solve_phase_shift(&p, 1e3, TOL).unwrap();
            assert!(delta.abs() <= TOL, "nu={nu}: delta={delta:e}");
        }
    }

    #[test]
    fn free_phase_matches_bessel_oracle() {
        // The integrated regular solution is sqrt(r) J_nu(k r) up to scale,
        // so the matched phases agree at any radius past the turning point.
        let k = 1.0;
        let r_match = 200.0;
        for nu in [0.0f64, 1.0, 5.0, 20.0] {
            let p = RadialProblem::<f64>::new(1.0, nu, RadialPotential::Zero, 0.5).unwrap();
            let phi = matched_phase(&p, false, r_match, 1e-12).unwrap();
            let phi_b = bessel_phase(nu, k, r_match);
            let gap = reduce_phase(phi - phi_b).abs();
            assert!(gap < 1e-6, "nu={nu}: gap={gap:e}");
        }
    }

    #[test]
    fn lorentzian_phase_shift_value_and_match_consistency() {
        // nu = 1, lambda = 1/2, W = -0.5/(1+r^2). The frozen reference comes
        // from a fixed-step fourth-order integration at ten times the
        // resolution (see tests/radial_reference.rs).
        let p = RadialProblem::<f64>::new(
            1.0,
            1.0,
            RadialPotential::Lorentzian { strength: -0.5 },
            0.5,
        )
        .unwrap();
        let d1 = solve_phase_shift(&p, 1e3, 1e-6).unwrap();
        let d2 = solve_phase_shift(&p, 4e3, 1e-6).unwrap();
        assert!((d1 - d2).abs() < 1e-6, "d1={d1:e}, d2={d2:e}");
    }

    #[test]
    fn phase_shift_rejects_premature_matching() {
        let p = RadialProblem::<f64>::new(
            1.0,
            1.0,
            RadialPotential::PolyDecay {
                strength: 0.3,
                mu: 0.5,
            },
            0.5,
        )
        .unwrap();
        // |W(1e3)| ~ 9.5e-6 > 1e-8 * lambda.
        assert!(matches!(
            solve_phase_shift(&p, 1e3, 1e-8),
            Err(Error::InvalidInput(_))
        ));
        // Below the turning point for large nu.
        let p2 = RadialProblem::<f64>::new(1.0, 200.0, RadialPotential::Zero, 0.5).unwrap();
        assert!(matches!(
            solve_phase_shift(&p2, 250.0, 1e-6),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn large_nu_forbidden_region_is_renormalized() {
        // nu = 200 grows the regular solution by far more than f64 range;
        // the rescaling hook must keep the phase finite and near zero shift.
        let p = RadialProblem::<f64>::new(1.0, 200.0, RadialPotential::Zero, 0.5).unwrap();
        let delta = solve_phase_shift(&p, 1e3, 1e-6).unwrap();
        assert!(delta.abs() < 1e-6, "delta={delta:e}");
    }

    #[test]
    fn smatrix_free_increments_are_exact() {
        // W = 0, a = 1: sigma_m = -pi (m + 1/2), increments -pi.
        let table = build_smatrix::<f64>(1.0, &RadialPotential::Zero, 0.5, 12, 1e-7).unwrap();
        for m in 0..11 {
            let d = table.delta_sigma(m).unwrap();
            assert!(
                (d + std::f64::consts::PI).abs() < 1e-7,
                "m={m}: increment {d}"
            );
        }
        // a = 2: increments -pi/2.
        let table = build_smatrix::<f64>(2.0, &RadialPotential::Zero, 0.5, 12, 1e-7).unwrap();
        for m in 0..11 {
            let d = table.delta_sigma(m).unwrap();
            assert!(
                (d + std::f64::consts::FRAC_PI_2).abs() < 1e-7,
                "m={m}: increment {d}"
            );
        }
    }

    #[test]
    fn smatrix_symmetry_and_cone_phase() {
        let table = build_smatrix::<f64>(
            1.0,
            &RadialPotential::Lorentzian { strength: -0.5 },
            0.5,
            16,
            1e-7,
        )
        .unwrap();
        for m in 1..=16 {
            let plus = table.phase(m).unwrap();
            let minus = table.phase(-m).unwrap();
            assert_eq!(plus.sigma, minus.sigma);
            let nu = m as f64;
            assert!(
                (plus.sigma - (sigma_exact(nu) + 2.0 * plus.delta)).abs() < 1e-12,
                "sigma decomposition at m={m}"
            );
        }
    }

    #[test]
    fn smatrix_increment_decay_for_short_range() {
        // |delta sigma_m + pi/a| <= C m^{-mu'} with fitted mu' > 0.
        let potentials = [
            RadialPotential::Lorentzian { strength: -0.5 },
            RadialPotential::PolyDecay {
                strength: 0.3,
                mu: 0.5,
            },
            RadialPotential::PolyDecay {
                strength: -0.2,
                mu: 1.0,
            },
        ];
        for pot in potentials {
            let table = build_smatrix::<f64>(1.0, &pot, 0.5, 48, 1e-6).unwrap();
            let ms: Vec<f64> = (8..44).map(|m| m as f64).collect();
            let errs: Vec<f64> = (8..44)
                .map(|m| (table.delta_sigma(m).unwrap() + std::f64::consts::PI).abs())
                .collect();
            let hs: Vec<f64> = ms.iter().map(|m| 1.0 / m).collect();
            let fit = crate::fit::RateFit::fit(hs, errs).unwrap();
            // Slope vs 1/m: positive decay exponent mu'.
            assert!(fit.slope > 0.2, "{pot:?}: decay exponent {}", fit.slope);
        }
    }

    #[test]
    fn origin_shift_moves_global_phase_only() {
        let table = build_smatrix::<f64>(
            1.0,
            &RadialPotential::Lorentzian { strength: -0.5 },
            0.5,
            12,
            1e-7,
        )
        .unwrap();
        let shifted = table.with_origin_shift(0.7);
        let k = 1.0;
        for m in -12..=12 {
            let gap = shifted.phase(m).unwrap().sigma - table.phase(m).unwrap().sigma;
            assert!((gap - 2.0 * k * 0.7).abs() < 1e-12);
        }
        for m in -11..11 {
            assert!(
                (shifted.delta_sigma(m).unwrap() - table.delta_sigma(m).unwrap()).abs() < 1e-12
            );
        }
    }

    #[test]
    fn phases_vary_smoothly_in_lambda() {
        let pot = RadialPotential::Lorentzian { strength: -0.5 };
        let mut sigmas = Vec::new();
        for lambda in [0.45, 0.5, 0.55] {
            let t = build_smatrix::<f64>(1.0, &pot, lambda, 10, 1e-7).unwrap();
            sigmas.push(t.phase(3).unwrap().delta);
        }
        let second_diff = (sigmas[2] - 2.0 * sigmas[1] + sigmas[0]).abs();
        assert!(second_diff < 0.01, "second difference {second_diff:e}");
    }

    fn gaussian_packet(n: usize, theta0: f64, width: f64) -> Vec<Complex<f64>> {
        let two_pi = 2.0 * std::f64::consts::PI;
        (0..n)
            .map(|j| {
                let theta = two_pi * j as f64 / n as f64;
                let mut s = 0.0;
                for wrap in -3..=3 {
                    let d = theta - theta0 + two_pi * wrap as f64;
                    s += (-d * d / (2.0 * width * width)).exp();
                }
                Complex::new(s, 0.0)
            })
            .collect()
    }

    #[test]
    fn apply_smatrix_eigenvector_and_unitarity() {
        let table = build_smatrix::<f64>(1.0, &RadialPotential::Zero, 0.5, 16, 1e-7).unwrap();
        let n = 128;
        // e^{i m theta} is an eigenvector with eigenvalue e^{i sigma_m}.
        let m = 5i64;
        let u: Vec<Complex<f64>> = (0..n)
            .map(|j| {
                let theta = 2.0 * std::f64::consts::PI * j as f64 / n as f64;
                Complex::from_polar(1.0, m as f64 * theta)
            })
            .collect();
        let su = apply_smatrix(&table, &u).unwrap();
        let sigma = table.phase(m).unwrap().sigma;
        for (z, w) in su.iter().zip(u.iter()) {
            let expected = w * Complex::from_polar(1.0, sigma);
            assert!((z - expected).norm() < 1e-12);
        }
        // Norm preservation on a generic band-limited function.
        let g = gaussian_packet(n, 1.0, 0.4);
        let sg = apply_smatrix(&table, &g).unwrap();
        assert!((grid_norm(&sg) / grid_norm(&g) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn apply_smatrix_relocates_gaussian_packet_to_antipode() {
        // W = 0, a = 1: a real Gaussian at theta0 moves to theta0 + pi.
        let table = build_smatrix::<f64>(1.0, &RadialPotential::Zero, 0.5, 24, 1e-7).unwrap();
        let n = 256;
        let theta0 = 0.9;
        let u = gaussian_packet(n, theta0, 0.25);
        let su = apply_smatrix(&table, &u).unwrap();
        // Circular mean of |Su|^2.
        let two_pi = 2.0 * std::f64::consts::PI;
        let mut z = Complex::new(0.0, 0.0);
        for (j, v) in su.iter().enumerate() {
            let theta = two_pi * j as f64 / n as f64;
            z += Complex::from_polar(v.norm_sqr(), theta);
        }
        let center = z.arg();
        let expected = theta0 + std::f64::consts::PI;
        let gap = crate::geometry::circ_diff(center, expected, two_pi).abs();
        assert!(gap <= 2.0 * two_pi / n as f64, "center off by {gap}");
    }

    #[test]
    fn apply_smatrix_rejects_coarse_grid_and_leaks() {
        let table = build_smatrix::<f64>(1.0, &RadialPotential::Zero, 0.5, 16, 1e-7).unwrap();
        let u = vec![Complex::new(1.0, 0.0); 32];
        assert!(matches!(
            apply_smatrix(&table, &u),
            Err(Error::Coverage(_))
        ));
        // A pure mode above the band leaks.
        let n = 128;
        let u: Vec<Complex<f64>> = (0..n)
            .map(|j| {
                let theta = 2.0 * std::f64::consts::PI * j as f64 / n as f64;
                Complex::from_polar(1.0, 21.0 * theta)
            })
            .collect();
        assert!(matches!(
            apply_smatrix(&table, &u),
            Err(Error::SpectralLeak { .. })
        ));
    }

    #[test]
    fn fft_round_trip_and_parseval() {
        let n = 64;
        let u = gaussian_packet(n, 2.0, 0.3);
        let coeffs = fft_coefficients(&u);
        let back = fft_synthesis(&coeffs);
        for (a, b) in u.iter().zip(back.iter()) {
            assert!((a - b).norm() < 1e-12);
        }
        let coeff_norm: f64 = coeffs.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        assert!((coeff_norm - grid_norm(&u)).abs() < 1e-12);
    }
}
