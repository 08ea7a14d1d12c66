//! Short-range perturbations of the conic Hamiltonian and their scattering.
//!
//! The full symbol is
//!
//! ```text
//! p = 1/2 ( a1 rho^2 + 2 rho a2.omega / r + omega . a3 omega / r^2 ) + V,
//! ```
//!
//! with `a1 - 1 = O(r^{-1-mu})`, `a2 = O(r^{-mu})`, `a3 - h = O(r^{-mu})`,
//! `V = O(r^{-1-mu})`. Under the scaling `p^h(r, rho, theta, omega) =
//! p(r/h, rho, theta, omega/h)` the flow of `p^h` tracks the conic flow to
//! `O(h^mu)` uniformly in time, its asymptotic data converge at the same
//! rate, and the scattering map decomposes as
//! `(r, rho, theta, omega) -> (-r + g, -rho, exp(pi H_sqrt(2q)) + (s1, s2))`
//! with `g, s2 = O(h^{-1+mu})` and `s1 = O(h^mu)`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::conic::{conic_wave_map, ConicInvariants, PhasePoint, ScatteringData, Sign};
use crate::error::Error;
use crate::fit::RateFit;
use crate::geometry::{geodesic_flow, AngularPoint, BoundaryMetric, MAX_DIM};
use crate::ode::{Dopri5, OdeSystem};
use crate::real::{real, to_f64, Real};
use crate::Result;

/// Radial floor below which a perturbed trajectory counts as trapped.
pub const R_TRAP_FLOOR: f64 = 0.1;

/// Coefficient profile `(a1, a2, a3, V)` with decay rate `mu`.
///
/// Built-in families use smooth `(1 + r^2)`-type envelopes so the decay
/// bounds hold on all of `r > 0`:
///
/// ```text
/// a1 = 1 + c1 (1+r^2)^{-(1+mu)/2},   a2 = c2 (1+r^2)^{-mu/2},
/// a3 = h(theta) (1 + c3 (1+r^2)^{-mu/2}),   V = cv (1+r^2)^{-(1+mu)/2}.
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum PerturbationProfile<T> {
    /// `a1 = 1, a2 = 0, a3 = h, V = 0`: the symbol is exactly conic.
    Trivial,
    Smooth { mu: T, c1: T, c2: T, c3: T, cv: T, e2: T, e3: T },
    /// `a1 = 1 + c1 r^{-2}`, everything else conic (`mu = 1`).
    InverseSquare { c1: T },
}

impl<T: Real> PerturbationProfile<T> {
    pub fn smooth(mu: T, c1: T, c2: T, c3: T, cv: T) -> Result<Self> {
        Self::smooth_modulated(mu, c1, c2, c3, cv, T::zero(), T::zero())
    }

    /// Smooth family with angular modulations `(1 + e2 sin theta_1)` on `a2`
    /// and `(1 + e3 cos theta_1)` on the `a3` factor. Nonzero modulations
    /// break the rotational symmetry of the circle model, so the angular
    /// momentum is no longer conserved along the perturbed flow.
    pub fn smooth_modulated(mu: T, c1: T, c2: T, c3: T, cv: T, e2: T, e3: T) -> Result<Self> {
        if !(mu > T::zero()) || mu > T::one() {
            return Err(Error::invalid("decay rate mu must lie in (0, 1]"));
        }
        if e2.abs() >= T::one() || e3.abs() >= T::one() {
            return Err(Error::invalid("angular modulations must satisfy |e| < 1"));
        }
        Ok(PerturbationProfile::Smooth { mu, c1, c2, c3, cv, e2, e3 })
    }

    /// Declared decay rate `mu`.
    pub fn mu(&self) -> T {
        match self {
            PerturbationProfile::Trivial => T::one(),
            PerturbationProfile::Smooth { mu, .. } => *mu,
            PerturbationProfile::InverseSquare { .. } => T::one(),
        }
    }

    /// Envelope constant the decay audit checks against.
    pub fn declared_constant(&self) -> T {
        let margin: T = real(1.0 + 1e-9);
        match self {
            PerturbationProfile::Trivial => T::zero(),
            PerturbationProfile::Smooth { c1, c2, c3, cv, e2, e3, .. } => {
                let c2_eff = c2.abs() * (T::one() + e2.abs());
                let c3_eff = c3.abs() * (T::one() + e3.abs());
                c1.abs().max(c2_eff).max(c3_eff).max(cv.abs()) * margin
            }
            PerturbationProfile::InverseSquare { c1 } => c1.abs() * margin,
        }
    }

    /// `a1(r) - 1`, computed without cancellation.
    pub fn a1_deviation(&self, r: T) -> T {
        match self {
            PerturbationProfile::Trivial => T::zero(),
            PerturbationProfile::Smooth { mu, c1, .. } => {
                *c1 * smooth_envelope(r, (T::one() + *mu) * real(0.5)).0
            }
            PerturbationProfile::InverseSquare { c1 } => *c1 / (r * r),
        }
    }

    /// `a3_factor(r, theta) - 1`, computed without cancellation.
    pub fn a3_factor_deviation(&self, r: T, theta: &[T]) -> T {
        match self {
            PerturbationProfile::Smooth { mu, c3, e3, .. } => {
                *c3 * smooth_envelope(r, *mu * real(0.5)).0
                    * (T::one() + *e3 * theta[0].cos())
            }
            _ => T::zero(),
        }
    }

    /// `a1(r)` and its radial derivative.
    pub fn a1(&self, r: T) -> (T, T) {
        match self {
            PerturbationProfile::Trivial => (T::one(), T::zero()),
            PerturbationProfile::Smooth { mu, c1, .. } => {
                let (env, denv) = smooth_envelope(r, (T::one() + *mu) * real(0.5));
                (T::one() + *c1 * env, *c1 * denv)
            }
            PerturbationProfile::InverseSquare { c1 } => {
                let r2 = r * r;
                (T::one() + *c1 / r2, -(*c1 + *c1) / (r2 * r))
            }
        }
    }

    /// Per-component cross coefficient `a2(r, theta)` and its radial
    /// derivative.
    pub fn a2(&self, r: T, theta: &[T]) -> (T, T) {
        match self {
            PerturbationProfile::Smooth { mu, c2, e2, .. } => {
                let (env, denv) = smooth_envelope(r, *mu * real(0.5));
                let ang = T::one() + *e2 * theta[0].sin();
                (*c2 * env * ang, *c2 * denv * ang)
            }
            _ => (T::zero(), T::zero()),
        }
    }

    /// `d a2 / d theta_l`.
    pub fn a2_dtheta(&self, r: T, theta: &[T], l: usize) -> T {
        match self {
            PerturbationProfile::Smooth { mu, c2, e2, .. } if l == 0 => {
                let (env, _) = smooth_envelope(r, *mu * real(0.5));
                *c2 * env * *e2 * theta[0].cos()
            }
            _ => T::zero(),
        }
    }

    /// Scalar factor multiplying the boundary cometric in `a3`, with its
    /// radial derivative.
    pub fn a3_factor(&self, r: T, theta: &[T]) -> (T, T) {
        match self {
            PerturbationProfile::Smooth { mu, c3, e3, .. } => {
                let (env, denv) = smooth_envelope(r, *mu * real(0.5));
                let ang = T::one() + *e3 * theta[0].cos();
                (T::one() + *c3 * env * ang, *c3 * denv * ang)
            }
            _ => (T::one(), T::zero()),
        }
    }

    /// `d a3_factor / d theta_l`.
    pub fn a3_factor_dtheta(&self, r: T, theta: &[T], l: usize) -> T {
        match self {
            PerturbationProfile::Smooth { mu, c3, e3, .. } if l == 0 => {
                let (env, _) = smooth_envelope(r, *mu * real(0.5));
                -*c3 * env * *e3 * theta[0].sin()
            }
            _ => T::zero(),
        }
    }

    /// Potential `V(r)` and its radial derivative.
    pub fn potential(&self, r: T) -> (T, T) {
        match self {
            PerturbationProfile::Smooth { mu, cv, .. } => {
                let (env, denv) = smooth_envelope(r, (T::one() + *mu) * real(0.5));
                (*cv * env, *cv * denv)
            }
            _ => (T::zero(), T::zero()),
        }
    }

    /// Finite-sample audit of the decay assumption on `r in [1, 1e6]`
    /// (1000 log-spaced radii, a grid of boundary angles), plus positive
    /// definiteness of the full quadratic form.
    pub fn audit_decay(&self, metric: &BoundaryMetric<T>) -> Result<DecayAudit<T>> {
        let c_decl = self.declared_constant();
        let mu = self.mu();
        let mut worst = T::zero();
        let d = metric.dim();
        let n_r = 1000;
        let n_theta = 8;
        let two_pi = T::PI() * real(2.0);
        let mut h_buf = [T::zero(); MAX_DIM * MAX_DIM];
        for i in 0..n_r {
            let log_r = real::<T>(6.0) * real(i as f64) / real((n_r - 1) as f64);
            let r = real::<T>(10.0).powf(log_r);
            let (a1, _) = self.a1(r);
            let (v, _) = self.potential(r);
            let long = r.powf(T::one() + mu);
            let short = r.powf(mu);
            worst = worst
                .max(self.a1_deviation(r).abs() * long)
                .max(v.abs() * long);
            for jt in 0..n_theta {
                let theta = vec![two_pi * real(jt as f64) / real(n_theta as f64); d];
                metric.cometric(&theta, &mut h_buf);
                let (a2, _) = self.a2(r, &theta);
                let (s3, _) = self.a3_factor(r, &theta);
                // |a3 - h| = |s3 - 1| |h| entrywise.
                let mut h_max = T::zero();
                for j in 0..d * d {
                    h_max = h_max.max(h_buf[j].abs());
                }
                worst = worst
                    .max(a2.abs() * short)
                    .max(self.a3_factor_deviation(r, &theta).abs() * h_max * short);
                if !quadratic_form_pd(a1, a2, s3, &h_buf, d) {
                    return Err(Error::domain(format!(
                        "quadratic form not positive definite at r = {:e}",
                        to_f64(r)
                    )));
                }
            }
        }
        if worst > c_decl && worst > real(1e-14) {
            return Err(Error::domain(format!(
                "decay audit exceeded declared constant: required C = {:e} > declared {:e}",
                to_f64(worst),
                to_f64(c_decl)
            )));
        }
        Ok(DecayAudit {
            required_constant: worst,
            declared_constant: c_decl,
        })
    }
}

/// `(1 + r^2)^{-p}` and its radial derivative.
fn smooth_envelope<T: Real>(r: T, p: T) -> (T, T) {
    let base = T::one() + r * r;
    let env = base.powf(-p);
    let denv = -p * (r + r) * base.powf(-p - T::one());
    (env, denv)
}

/// Leading-principal-minor test of `[[a1, a2 e^T], [a2 e, s3 h]]`.
fn quadratic_form_pd<T: Real>(a1: T, a2: T, s3: T, h: &[T], d: usize) -> bool {
    if !(a1 > T::zero()) {
        return false;
    }
    match d {
        1 => a1 * s3 * h[0] - a2 * a2 > T::zero(),
        _ => {
            let m11 = s3 * h[0] - a2 * a2 / a1;
            let m12 = s3 * h[1] - a2 * a2 / a1;
            let m22 = s3 * h[3] - a2 * a2 / a1;
            m11 > T::zero() && m11 * m22 - m12 * m12 > T::zero()
        }
    }
}

/// Audit summary: largest envelope-normalized deviation found by sampling.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayAudit<T> {
    pub required_constant: T,
    pub declared_constant: T,
}

/// The semiclassically scaled symbol `p^h = p(r/h, rho, theta, omega/h)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaledSymbol<T> {
    pub profile: PerturbationProfile<T>,
    pub metric: BoundaryMetric<T>,
    pub h: T,
}

impl<T: Real> ScaledSymbol<T> {
    pub fn new(profile: PerturbationProfile<T>, metric: BoundaryMetric<T>, h: T) -> Result<Self> {
        if !(h > T::zero()) || h > T::one() {
            return Err(Error::invalid("semiclassical scale h must lie in (0, 1]"));
        }
        Ok(ScaledSymbol { profile, metric, h })
    }

    /// The unscaled symbol, `h = 1`.
    pub fn unscaled(profile: PerturbationProfile<T>, metric: BoundaryMetric<T>) -> Self {
        ScaledSymbol {
            profile,
            metric,
            h: T::one(),
        }
    }

    fn sum_omega(omega: &[T]) -> T {
        omega.iter().fold(T::zero(), |a, &b| a + b)
    }

    /// Unscaled symbol value `p(r, rho, theta, omega)`.
    fn p_raw(&self, r: T, rho: T, theta: &[T], omega: &[T]) -> T {
        let half: T = real(0.5);
        let (a1, _) = self.profile.a1(r);
        let (a2, _) = self.profile.a2(r, theta);
        let (s3, _) = self.profile.a3_factor(r, theta);
        let (v, _) = self.profile.potential(r);
        let q = self.metric.q(&AngularPoint {
            theta: theta.to_vec(),
            omega: omega.to_vec(),
        });
        half * a1 * rho * rho + rho * a2 * Self::sum_omega(omega) / r + s3 * q / (r * r) + v
    }

    /// `p^h` at a phase point. Errors when `r <= 0`.
    pub fn full_symbol(&self, x: &PhasePoint<T>) -> Result<T> {
        x.validate_interior()?;
        let r = x.r / self.h;
        let omega: Vec<T> = x.angular.omega.iter().map(|&w| w / self.h).collect();
        Ok(self.p_raw(r, x.rho, &x.angular.theta, &omega))
    }

    /// Conic energy `p_c` at the same point, for envelope comparisons.
    pub fn conic_energy(&self, x: &PhasePoint<T>) -> T {
        ConicInvariants::of_point(&self.metric, x).e0
    }

    /// Gradient of the unscaled `p` in `(r, rho, theta.., omega..)`.
    fn grad_raw(&self, r: T, rho: T, theta: &[T], omega: &[T], out: &mut [T]) {
        let d = self.metric.dim();
        let half: T = real(0.5);
        let (a1, da1) = self.profile.a1(r);
        let (a2, da2) = self.profile.a2(r, theta);
        let (s3, ds3) = self.profile.a3_factor(r, theta);
        let (_, dv) = self.profile.potential(r);
        let mut dq_dw = [T::zero(); MAX_DIM];
        let mut dq_dt = [T::zero(); MAX_DIM];
        self.metric.dq_domega(theta, omega, &mut dq_dw);
        self.metric.dq_dtheta(theta, omega, &mut dq_dt);
        let mut q = T::zero();
        for j in 0..d {
            q = q + dq_dw[j] * omega[j];
        }
        q = q * half;
        let sw = Self::sum_omega(omega);
        let r2 = r * r;

        out[0] = half * da1 * rho * rho
            + rho * sw * (da2 / r - a2 / r2)
            + q * (ds3 / r2 - (s3 + s3) / (r2 * r))
            + dv;
        out[1] = a1 * rho + a2 * sw / r;
        for l in 0..d {
            out[2 + l] = (s3 * dq_dt[l] + self.profile.a3_factor_dtheta(r, theta, l) * q) / r2
                + rho * self.profile.a2_dtheta(r, theta, l) * sw / r;
        }
        for j in 0..d {
            out[2 + d + j] = rho * a2 / r + s3 * dq_dw[j] / r2;
        }
    }
}

struct PerturbedSystem<'a, T> {
    sym: &'a ScaledSymbol<T>,
    trap_floor: T,
}

impl<T: Real> OdeSystem<T> for PerturbedSystem<'_, T> {
    fn dim(&self) -> usize {
        2 + 2 * self.sym.metric.dim()
    }

    fn rhs(&self, _t: T, y: &[T], dy: &mut [T]) {
        let d = self.sym.metric.dim();
        let h = self.sym.h;
        let r = y[0] / h;
        let rho = y[1];
        let theta = &y[2..2 + d];
        let mut omega = [T::zero(); MAX_DIM];
        for j in 0..d {
            omega[j] = y[2 + d + j] / h;
        }
        let mut grad = [T::zero(); 2 + 2 * MAX_DIM];
        self.sym.grad_raw(r, rho, theta, &omega[..d], &mut grad);
        // Chain rule for p^h: d/dr and d/domega pick up 1/h.
        dy[0] = grad[1];
        dy[1] = -grad[0] / h;
        for j in 0..d {
            dy[2 + j] = grad[2 + d + j] / h;
            dy[2 + d + j] = -grad[2 + j];
        }
    }

    fn post_step(&self, t: T, y: &mut [T]) -> Result<bool> {
        if y[0] < self.trap_floor {
            return Err(Error::TrappedTrajectory {
                t: to_f64(t),
                r: to_f64(y[0]),
                floor: to_f64(self.trap_floor),
            });
        }
        Ok(false)
    }
}

/// Flow `exp(t H_{p^h})(x0)` by adaptive integration; aborts with a
/// trapped-trajectory error if `r(t)` falls below 0.1.
pub fn perturbed_flow<T: Real>(
    sym: &ScaledSymbol<T>,
    x0: &PhasePoint<T>,
    t: T,
    tol: T,
) -> Result<PhasePoint<T>> {
    let mut out = None;
    perturbed_flow_sampled(sym, x0, &[t], tol, |_, x| out = Some(x.clone()))?;
    Ok(out.expect("one sample requested"))
}

/// Integrates one trajectory through monotone sample times, visiting each
/// sampled phase point.
pub fn perturbed_flow_sampled<T: Real>(
    sym: &ScaledSymbol<T>,
    x0: &PhasePoint<T>,
    samples: &[T],
    tol: T,
    mut visit: impl FnMut(T, &PhasePoint<T>),
) -> Result<()> {
    x0.validate_interior()?;
    if x0.angular.dim() != sym.metric.dim() {
        return Err(Error::invalid("phase point dimension mismatch"));
    }
    let d = sym.metric.dim();
    let sys = PerturbedSystem {
        sym,
        trap_floor: real(R_TRAP_FLOOR),
    };
    let mut stepper = Dopri5::new(2 + 2 * d);
    let mut y = x0.to_coords();
    let mut t = T::zero();
    for &ts in samples {
        stepper.integrate(&sys, t, ts, &mut y, tol)?;
        t = ts;
        visit(t, &PhasePoint::from_coords(&y, d));
    }
    Ok(())
}

/// Largest (scaled) deviation between the perturbed and conic flows over a
/// symmetric grid of sample times in `[-t_span, t_span]`.
pub fn flow_deviation_sup<T: Real>(
    sym: &ScaledSymbol<T>,
    x0: &PhasePoint<T>,
    t_span: T,
    samples: usize,
    tol: T,
) -> Result<T> {
    let mut sup = T::zero();
    for dir in [T::one(), -T::one()] {
        let times: Vec<T> = (1..=samples)
            .map(|k| dir * t_span * real(k as f64) / real(samples as f64))
            .collect();
        let mut flow_err: Result<()> = Ok(());
        perturbed_flow_sampled(sym, x0, &times, tol, |t, x| {
            if flow_err.is_err() {
                return;
            }
            match crate::conic::conic_flow_exact(&sym.metric, x0, t, tol) {
                Ok(xc) => sup = sup.max(crate::conic::phase_distance(x, &xc)),
                Err(e) => flow_err = Err(e),
            }
        })?;
        flow_err?;
    }
    Ok(sup)
}

/// Extrapolated asymptotic data together with its error estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Extraction<T> {
    pub data: ScatteringData<T>,
    pub error_estimate: T,
}

/// Removes a `c t^{-mu}` tail from samples at `t/4`, `t/2`, `t`.
///
/// Two-point extrapolation from the outer pair; the inner pair provides a
/// consistency check, which must stay within ten times the applied
/// correction.
pub(crate) fn power_law_extrapolate<T: Real>(
    y1: &[T],
    y2: &[T],
    y3: &[T],
    mu: T,
    floor: T,
) -> Result<(Vec<T>, T)> {
    let gain = real::<T>(2.0).powf(mu) - T::one();
    let mut limit = Vec::with_capacity(y3.len());
    let mut est = T::zero();
    let mut applied = T::zero();
    for i in 0..y3.len() {
        let fine = y3[i] + (y3[i] - y2[i]) / gain;
        let coarse = y2[i] + (y2[i] - y1[i]) / gain;
        limit.push(fine);
        est = est.max((fine - coarse).abs());
        applied = applied.max((y3[i] - fine).abs());
    }
    if est > real::<T>(10.0) * (applied + floor) {
        return Err(Error::Accuracy(format!(
            "tail extrapolation inconsistent: three-point disagreement {:e} exceeds 10x the applied correction {:e}",
            to_f64(est),
            to_f64(applied)
        )));
    }
    Ok((limit, est))
}

/// Asymptotic data of the perturbed trajectory through `x0` as
/// `t -> sign * inf`: samples `(r - t rho, rho, theta, omega)` at
/// `T/4, T/2, T` and removes the `O(t^{-mu})` tail by power-law
/// extrapolation with the profile's known exponent.
pub fn extract_asymptotics<T: Real>(
    sym: &ScaledSymbol<T>,
    x0: &PhasePoint<T>,
    sign: Sign,
    t_final: T,
    tol: T,
) -> Result<Extraction<T>> {
    if !(t_final >= real(1e3)) {
        return Err(Error::invalid("extraction time must satisfy T >= 1e3"));
    }
    let s: T = sign.scalar();
    let times = [
        s * t_final * real(0.25),
        s * t_final * real(0.5),
        s * t_final,
    ];
    let mut snaps: Vec<Vec<T>> = Vec::with_capacity(3);
    perturbed_flow_sampled(sym, x0, &times, tol, |t, x| {
        let mut g = x.to_coords();
        g[0] = g[0] - t * g[1]; // r - t rho
        snaps.push(g);
    })?;
    let scale = snaps[2].iter().fold(T::zero(), |a, v| a.max(v.abs()));
    let floor = real::<T>(100.0) * tol * (T::one() + scale);
    let (limit, est) =
        power_law_extrapolate(&snaps[0], &snaps[1], &snaps[2], sym.profile.mu(), floor)?;
    let d = sym.metric.dim();
    Ok(Extraction {
        data: ScatteringData {
            r_as: limit[0],
            rho_as: limit[1],
            angular_as: AngularPoint {
                theta: limit[2..2 + d].to_vec(),
                omega: limit[2 + d..].to_vec(),
            },
        },
        error_estimate: est,
    })
}

const NEWTON_MAX_ITERS: usize = 50;

/// Scattering map of `p^h`: finds the interior point whose incoming data is
/// `d_minus` by damped Newton shooting (finite-difference Jacobian, conic
/// initial guess), then extracts the outgoing data.
pub fn scattering_map<T: Real>(
    sym: &ScaledSymbol<T>,
    d_minus: &ScatteringData<T>,
    t_final: T,
    tol: T,
) -> Result<ScatteringData<T>> {
    if !(d_minus.rho_as < T::zero()) {
        return Err(Error::domain(
            "scattering map requires incoming data (rho_as < 0)",
        ));
    }
    let n = 2 + 2 * sym.metric.dim();
    let target = d_minus.to_coords();
    let scale = target.iter().fold(T::one(), |a, v| a.max(v.abs()));
    let conv_tol = real::<T>(1e-9).max(real::<T>(10.0) * tol) * scale;
    // The conic wave map sits within O(h^mu) of the root and seeds the shooting.
    let mut x = conic_wave_map(&sym.metric, d_minus, Sign::Minus, tol)?;

    let residual = |x: &PhasePoint<T>| -> Result<Vec<T>> {
        let ex = extract_asymptotics(sym, x, Sign::Minus, t_final, tol)?;
        let got = ex.data.to_coords();
        Ok(got.iter().zip(target.iter()).map(|(&g, &t)| g - t).collect())
    };

    let mut f = residual(&x)?;
    let mut fnorm = sup_norm(&f);
    let fd_step = tol.powf(real(1.0 / 3.0));
    for _ in 0..NEWTON_MAX_ITERS {
        if fnorm <= conv_tol {
            return Ok(extract_asymptotics(sym, &x, Sign::Plus, t_final, tol)?.data);
        }
        // Forward-difference Jacobian, one extraction per coordinate.
        let mut jac = vec![vec![T::zero(); n]; n];
        for col in 0..n {
            let hstep = fd_step * x.coord(col).abs().max(T::one());
            let mut xs = x.clone();
            xs.set_coord(col, x.coord(col) + hstep);
            let fs = residual(&xs)?;
            for row in 0..n {
                jac[row][col] = (fs[row] - f[row]) / hstep;
            }
        }
        let rhs: Vec<T> = f.iter().map(|&v| -v).collect();
        let delta = solve_dense(jac, rhs).ok_or(Error::NoSolution {
            iterations: NEWTON_MAX_ITERS,
            residual: to_f64(fnorm),
        })?;
        // Damped update: halve until the residual decreases.
        let mut lambda = T::one();
        let mut improved = false;
        for _ in 0..10 {
            let mut xt = x.clone();
            for i in 0..n {
                xt.set_coord(i, x.coord(i) + lambda * delta[i]);
            }
            if xt.r > T::zero() {
                if let Ok(ft) = residual(&xt) {
                    let fn_t = sup_norm(&ft);
                    if fn_t < fnorm {
                        x = xt;
                        f = ft;
                        fnorm = fn_t;
                        improved = true;
                        break;
                    }
                }
            }
            lambda = lambda * real(0.5);
        }
        if !improved {
            break;
        }
    }
    if fnorm <= conv_tol {
        return Ok(extract_asymptotics(sym, &x, Sign::Plus, t_final, tol)?.data);
    }
    Err(Error::NoSolution {
        iterations: NEWTON_MAX_ITERS,
        residual: to_f64(fnorm),
    })
}

fn sup_norm<T: Real>(v: &[T]) -> T {
    v.iter().fold(T::zero(), |a, x| a.max(x.abs()))
}

/// Gaussian elimination with partial pivoting; `None` on a singular system.
fn solve_dense<T: Real>(mut a: Vec<Vec<T>>, mut b: Vec<T>) -> Option<Vec<T>> {
    let n = b.len();
    for col in 0..n {
        let mut piv = col;
        for row in col + 1..n {
            if a[row][col].abs() > a[piv][col].abs() {
                piv = row;
            }
        }
        if a[piv][col].abs() < real(1e-300) {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..n {
            let factor = a[row][col] / a[col][col];
            for k in col..n {
                let v = a[col][k];
                a[row][k] = a[row][k] - factor * v;
            }
            let bv = b[col];
            b[row] = b[row] - factor * bv;
        }
    }
    let mut x = vec![T::zero(); n];
    for col in (0..n).rev() {
        let mut acc = b[col];
        for k in col + 1..n {
            acc = acc - a[col][k] * x[k];
        }
        x[col] = acc / a[col][col];
    }
    Some(x)
}

/// Per-`h` deviation of the scattering map from the conic one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SComponents<T> {
    pub h_values: Vec<T>,
    /// Radial-shift deviation `g = r_out + r_in` at the `h`-scaled point.
    pub g_values: Vec<T>,
    /// Angular-position deviation from `exp(pi H_sqrt(2q))`.
    pub s1_values: Vec<T>,
    /// Momentum deviation at the `h`-scaled point (`s2 = s2_scaled / h`).
    pub s2_values: Vec<T>,
    /// Momentum deviation in the scaled frame (`= s2 * h`).
    pub s2_scaled_values: Vec<T>,
    /// Scaled-frame radial deviation (`= g * h`).
    pub g_scaled_values: Vec<T>,
    /// Fit of `|g|` against `h`; expected slope `mu - 1`.
    pub g_fit: RateFit<T>,
    /// Fit of `|s1|` against `h`; expected slope `mu`.
    pub s1_fit: RateFit<T>,
    /// Fit of `|s2 * h|` against `h`; expected slope `mu`.
    pub s2_fit: RateFit<T>,
}

/// Evaluates the true scattering map at the `h`-scaled data
/// `(r/h, rho, theta, omega/h)` for each `h` and fits the scaling of the
/// deviations `(g, s1, s2)` from `(-r, -rho, exp(pi H_sqrt(2q)))`.
///
/// The computation runs in the scaled frame: the map of `p` at a dilated
/// point equals the dilation of the `p^h`-map at the base point, so the
/// shooting always works with O(1) quantities.
pub fn extract_s_components<T: Real>(
    profile: &PerturbationProfile<T>,
    metric: &BoundaryMetric<T>,
    base: &ScatteringData<T>,
    h_grid: &[T],
    t_final: T,
    tol: T,
) -> Result<SComponents<T>> {
    if !(base.rho_as < T::zero()) {
        return Err(Error::domain("component extraction requires incoming data"));
    }
    if !(metric.q(&base.angular_as) > T::zero()) {
        return Err(Error::DegenerateTrajectory("omega = 0"));
    }
    if h_grid.len() < 2 {
        return Err(Error::invalid("need at least two h values"));
    }
    let reference = geodesic_flow(metric, &base.angular_as, T::PI(), tol)?;
    let d = metric.dim();
    type PerScale<T> = (T, Vec<T>, Vec<T>);
    let per_h: Vec<Result<PerScale<T>>> = h_grid
        .par_iter()
        .map(|&h| {
            let sym = ScaledSymbol::new(profile.clone(), metric.clone(), h)?;
            let out = scattering_map(&sym, base, t_final, tol)?;
            let g_scaled = out.r_as + base.r_as;
            let s1: Vec<T> = (0..d)
                .map(|j| out.angular_as.theta[j] - reference.theta[j])
                .collect();
            let s2_scaled: Vec<T> = (0..d)
                .map(|j| out.angular_as.omega[j] - reference.omega[j])
                .collect();
            Ok((g_scaled, s1, s2_scaled))
        })
        .collect();

    let mut g_scaled_values = Vec::new();
    let mut g_values = Vec::new();
    let mut s1_values = Vec::new();
    let mut s2_scaled_values = Vec::new();
    let mut s2_values = Vec::new();
    for (h, item) in h_grid.iter().zip(per_h) {
        let (g_scaled, s1, s2_scaled) = item?;
        g_scaled_values.push(g_scaled);
        g_values.push(g_scaled / *h);
        s1_values.push(sup_norm(&s1));
        s2_scaled_values.push(sup_norm(&s2_scaled));
        s2_values.push(sup_norm(&s2_scaled) / *h);
    }
    let g_fit = RateFit::fit(
        h_grid.to_vec(),
        g_values.iter().map(|v| v.abs()).collect(),
    )?;
    let s1_fit = RateFit::fit(h_grid.to_vec(), s1_values.clone())?;
    let s2_fit = RateFit::fit(h_grid.to_vec(), s2_scaled_values.clone())?;
    Ok(SComponents {
        h_values: h_grid.to_vec(),
        g_values,
        s1_values,
        s2_values,
        s2_scaled_values,
        g_scaled_values,
        g_fit,
        s1_fit,
        s2_fit,
    })
}

/// Log-log fits of the asymptotic-data deviation from the conic limits over
/// an `h` grid: `(rho fit, theta fit)` for one limit direction.
pub fn wave_data_rates<T: Real>(
    profile: &PerturbationProfile<T>,
    metric: &BoundaryMetric<T>,
    x0: &PhasePoint<T>,
    sign: Sign,
    h_grid: &[T],
    t_final: T,
    tol: T,
) -> Result<(RateFit<T>, RateFit<T>)> {
    let conic = crate::conic::conic_wave_data(metric, x0, sign, tol)?;
    let per_h: Vec<Result<(T, T)>> = h_grid
        .par_iter()
        .map(|&h| {
            let sym = ScaledSymbol::new(profile.clone(), metric.clone(), h)?;
            let ex = extract_asymptotics(&sym, x0, sign, t_final, tol)?;
            let rho_err = (ex.data.rho_as - conic.rho_as).abs();
            let theta_err = (0..metric.dim())
                .map(|j| (ex.data.angular_as.theta[j] - conic.angular_as.theta[j]).abs())
                .fold(T::zero(), |a, b| a.max(b));
            Ok((rho_err, theta_err))
        })
        .collect();
    let mut rho_errs = Vec::new();
    let mut theta_errs = Vec::new();
    for item in per_h {
        let (re, te) = item?;
        rho_errs.push(re);
        theta_errs.push(te);
    }
    Ok((
        RateFit::fit(h_grid.to_vec(), rho_errs)?,
        RateFit::fit(h_grid.to_vec(), theta_errs)?,
    ))
}

/// Largest `h` in `{1/2, 1/4, ...}` for which every test trajectory stays
/// above half its conic radial prediction over `[-t_span, t_span]`.
pub fn working_h_threshold<T: Real>(
    profile: &PerturbationProfile<T>,
    metric: &BoundaryMetric<T>,
    points: &[PhasePoint<T>],
    t_span: T,
    tol: T,
) -> Result<T> {
    'outer: for k in 1..=16 {
        let h = real::<T>(2.0).powi(-k);
        let sym = ScaledSymbol::new(profile.clone(), metric.clone(), h)?;
        for x0 in points {
            for dir in [T::one(), -T::one()] {
                let times: Vec<T> = (1..=24)
                    .map(|j| dir * t_span * real(j as f64) / real(24.0))
                    .collect();
                let mut ok = true;
                let res = perturbed_flow_sampled(&sym, x0, &times, tol, |t, x| {
                    if let Ok(xc) = crate::conic::conic_flow_exact(metric, x0, t, tol) {
                        if x.r < real::<T>(0.5) * xc.r {
                            ok = false;
                        }
                    }
                });
                if res.is_err() || !ok {
                    continue 'outer;
                }
            }
        }
        return Ok(h);
    }
    Err(Error::Numeric(
        "no working h threshold found down to 2^-16".into(),
    ))
}

/// Sup-norm residual of the leading-order transport equation.
///
/// `b0(t) = a ∘ w_c(t)` pulled back through the exact conic flow satisfies
/// `d/dt b0 = {l0, b0}` with `l0 = q(theta, omega)/(r + t rho)^2` in the
/// bracket convention of [`crate::geometry::poisson_bracket`]; the residual
/// is formed with central differences of width `~ 1/steps` and must converge
/// to zero at second order as `steps` grows.
pub fn transport_check<T: Real>(
    metric: &BoundaryMetric<T>,
    symbol: &(impl Fn(&PhasePoint<T>) -> T + Sync),
    grid: &[PhasePoint<T>],
    t: T,
    steps: usize,
    tol: T,
) -> Result<T> {
    if steps < 2 {
        return Err(Error::invalid("need at least 2 steps"));
    }
    let delta = real::<T>(0.5) / real(steps as f64);
    let d = metric.dim();
    let n = 2 + 2 * d;

    // b0(t, x) = a(w_c(t) x) with w_c(t) = exp(-t H_pc) ∘ exp(t H_pf).
    let b0 = |tt: T, x: &PhasePoint<T>| -> Result<T> {
        let shifted = PhasePoint::new(x.r + tt * x.rho, x.rho, x.angular.clone());
        if !(shifted.r > T::zero()) {
            return Err(Error::Coverage(format!(
                "free shift leaves the cone: r + t rho = {:e}",
                to_f64(shifted.r)
            )));
        }
        let pulled = crate::conic::conic_flow_exact(metric, &shifted, -tt, tol)?;
        Ok(symbol(&pulled))
    };

    let mut sup = T::zero();
    for x in grid {
        let dt_b = (b0(t + delta, x)? - b0(t - delta, x)?) / (delta + delta);

        let mut grad_b = vec![T::zero(); n];
        for i in 0..n {
            let hstep = delta * x.coord(i).abs().max(T::one());
            let mut plus = x.clone();
            plus.set_coord(i, x.coord(i) + hstep);
            let mut minus = x.clone();
            minus.set_coord(i, x.coord(i) - hstep);
            grad_b[i] = (b0(t, &plus)? - b0(t, &minus)?) / (hstep + hstep);
        }

        // Analytic gradient of l0 = q / (r + t rho)^2.
        let base = x.r + t * x.rho;
        let q = metric.q(&x.angular);
        let mut dq_dw = [T::zero(); MAX_DIM];
        let mut dq_dt = [T::zero(); MAX_DIM];
        metric.dq_domega(&x.angular.theta, &x.angular.omega, &mut dq_dw);
        metric.dq_dtheta(&x.angular.theta, &x.angular.omega, &mut dq_dt);
        let b2 = base * base;
        let b3 = b2 * base;
        let two: T = real(2.0);
        let dl_dr = -two * q / b3;
        let dl_drho = -two * q * t / b3;

        // {l0, b0} over the pairs (r, rho) and (theta_j, omega_j).
        let mut bracket = dl_dr * grad_b[1] - dl_drho * grad_b[0];
        for j in 0..d {
            let dl_dtheta = dq_dt[j] / b2;
            let dl_domega = dq_dw[j] / b2;
            bracket = bracket + dl_dtheta * grad_b[2 + d + j] - dl_domega * grad_b[2 + j];
        }

        sup = sup.max((dt_b - bracket).abs());
    }
    Ok(sup)
}
