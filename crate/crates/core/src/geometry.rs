//! Boundary-manifold geometry: cometric, angular energy `q`, Poisson brackets
//! and the unit-speed geodesic flow `exp(sigma H_sqrt(2q))` on `T*∂M`.

use serde::{Deserialize, Serialize};

use crate::conic::PhasePoint;
use crate::error::Error;
use crate::ode::{Dopri5, OdeSystem};
use crate::real::{real, Real};
use crate::Result;

/// Largest supported boundary dimension (circle or flat 2-torus).
pub const MAX_DIM: usize = 2;

/// A point `(theta, omega)` of `T*∂M` in chart coordinates.
///
/// Flows return the continuous angular lift so that displacements such as
/// `pi/a` are unambiguous; use [`AngularPoint::reduced`] to wrap angles into
/// the fundamental domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AngularPoint<T> {
    pub theta: Vec<T>,
    pub omega: Vec<T>,
}

impl<T: Real> AngularPoint<T> {
    pub fn new(theta: Vec<T>, omega: Vec<T>) -> Self {
        assert_eq!(theta.len(), omega.len());
        AngularPoint { theta, omega }
    }

    /// Circle shorthand.
    pub fn circle(theta: T, omega: T) -> Self {
        AngularPoint {
            theta: vec![theta],
            omega: vec![omega],
        }
    }

    pub fn dim(&self) -> usize {
        self.theta.len()
    }

    pub fn is_finite(&self) -> bool {
        self.theta.iter().chain(self.omega.iter()).all(|v| v.is_finite())
    }

    /// Angles wrapped into `[0, period)` per coordinate.
    pub fn reduced(&self, metric: &BoundaryMetric<T>) -> Self {
        let periods = metric.periods();
        let theta = self
            .theta
            .iter()
            .zip(periods.iter())
            .map(|(&t, &p)| wrap_angle(t, p))
            .collect();
        AngularPoint {
            theta,
            omega: self.omega.clone(),
        }
    }

    /// Momenta scaled by `lambda`, angles untouched.
    pub fn scaled_omega(&self, lambda: T) -> Self {
        AngularPoint {
            theta: self.theta.clone(),
            omega: self.omega.iter().map(|&w| w * lambda).collect(),
        }
    }
}

/// Wraps `x` into `[0, period)`.
pub fn wrap_angle<T: Real>(x: T, period: T) -> T {
    let mut y = x % period;
    if y < T::zero() {
        y = y + period;
    }
    if y == period {
        y = T::zero();
    }
    y
}

/// Minimal signed circular difference `a - b` in `(-period/2, period/2]`.
pub fn circ_diff<T: Real>(a: T, b: T, period: T) -> T {
    let half = period / real(2.0);
    let mut d = (a - b) % period;
    if d > half {
        d = d - period;
    }
    if d <= -half {
        d = d + period;
    }
    d
}

/// Trigonometric interpolant of periodic samples on a uniform grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrigSeries<T> {
    mean: T,
    cos_coeff: Vec<T>,
    sin_coeff: Vec<T>,
    nyquist: Option<T>,
}

impl<T: Real> TrigSeries<T> {
    /// Fits samples at `theta_j = 2 pi j / N`.
    pub fn fit(samples: &[T]) -> Self {
        let n = samples.len();
        let nf: T = real(n as f64);
        let two_pi = T::PI() * real(2.0);
        let mut mean = T::zero();
        for &v in samples {
            mean = mean + v;
        }
        mean = mean / nf;
        let k_max = (n - 1) / 2;
        let mut cos_coeff = Vec::with_capacity(k_max);
        let mut sin_coeff = Vec::with_capacity(k_max);
        for k in 1..=k_max {
            let mut a = T::zero();
            let mut b = T::zero();
            for (j, &v) in samples.iter().enumerate() {
                let ang = two_pi * real(k as f64) * real(j as f64) / nf;
                a = a + v * ang.cos();
                b = b + v * ang.sin();
            }
            cos_coeff.push(a * real(2.0) / nf);
            sin_coeff.push(b * real(2.0) / nf);
        }
        let nyquist = if n.is_multiple_of(2) && n >= 2 {
            let mut a = T::zero();
            for (j, &v) in samples.iter().enumerate() {
                let sign = if j % 2 == 0 { T::one() } else { -T::one() };
                a = a + v * sign;
            }
            Some(a / nf)
        } else {
            None
        };
        TrigSeries {
            mean,
            cos_coeff,
            sin_coeff,
            nyquist,
        }
    }

    pub fn eval(&self, theta: T) -> T {
        let mut v = self.mean;
        for (k, (&a, &b)) in self.cos_coeff.iter().zip(self.sin_coeff.iter()).enumerate() {
            let kt = real::<T>((k + 1) as f64) * theta;
            v = v + a * kt.cos() + b * kt.sin();
        }
        if let Some(a) = self.nyquist {
            let k: T = real((self.cos_coeff.len() + 1) as f64);
            v = v + a * (k * theta).cos();
        }
        v
    }

    pub fn deriv(&self, theta: T) -> T {
        let mut v = T::zero();
        for (k, (&a, &b)) in self.cos_coeff.iter().zip(self.sin_coeff.iter()).enumerate() {
            let kf: T = real((k + 1) as f64);
            let kt = kf * theta;
            v = v + kf * (b * kt.cos() - a * kt.sin());
        }
        if let Some(a) = self.nyquist {
            let kf: T = real((self.cos_coeff.len() + 1) as f64);
            v = v - a * kf * (kf * theta).sin();
        }
        v
    }
}

/// Boundary cometric `h^{jk}(theta)` and density `H(theta)` on `∂M`.
///
/// Built-in families: the circle of radius `a` (`h^11 = 1/a^2`), a cosine
/// perturbation of it, a tabulated periodic circle metric with trigonometric
/// interpolation, and the flat 2-torus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum BoundaryMetric<T> {
    Circle { radius: T },
    CosineCircle { radius: T, epsilon: T },
    TabulatedCircle { series: TrigSeries<T> },
    FlatTorus { radii: [T; 2] },
}

impl<T: Real> BoundaryMetric<T> {
    pub fn circle(radius: T) -> Result<Self> {
        if !(radius > T::zero()) || !radius.is_finite() {
            return Err(Error::invalid("circle radius must be positive"));
        }
        Ok(BoundaryMetric::Circle { radius })
    }

    /// `h^11(theta) = (1 + epsilon cos theta) / a^2`, requires `|epsilon| < 1`.
    pub fn cosine_circle(radius: T, epsilon: T) -> Result<Self> {
        if !(radius > T::zero()) || !radius.is_finite() || !epsilon.is_finite() {
            return Err(Error::invalid("cosine circle parameters must be finite, radius > 0"));
        }
        if epsilon.abs() >= T::one() {
            return Err(Error::invalid("cosine amplitude must satisfy |epsilon| < 1"));
        }
        Ok(BoundaryMetric::CosineCircle { radius, epsilon })
    }

    /// Fits `h^11` samples on a uniform `theta` grid; the interpolant must be
    /// strictly positive.
    pub fn tabulated_circle(samples: &[T]) -> Result<Self> {
        if samples.len() < 4 {
            return Err(Error::invalid("tabulated metric needs at least 4 samples"));
        }
        if samples.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("tabulated metric samples must be finite"));
        }
        let series = TrigSeries::fit(samples);
        let fine = samples.len() * 8;
        let two_pi = T::PI() * real(2.0);
        for j in 0..fine {
            let theta = two_pi * real(j as f64) / real(fine as f64);
            if !(series.eval(theta) > T::zero()) {
                return Err(Error::invalid(
                    "tabulated cometric interpolant is not strictly positive",
                ));
            }
        }
        Ok(BoundaryMetric::TabulatedCircle { series })
    }

    pub fn flat_torus(r1: T, r2: T) -> Result<Self> {
        if !(r1 > T::zero()) || !(r2 > T::zero()) {
            return Err(Error::invalid("torus radii must be positive"));
        }
        Ok(BoundaryMetric::FlatTorus { radii: [r1, r2] })
    }

    /// Boundary dimension `n - 1`.
    pub fn dim(&self) -> usize {
        match self {
            BoundaryMetric::FlatTorus { .. } => 2,
            _ => 1,
        }
    }

    /// Chart periods per coordinate (radians).
    pub fn periods(&self) -> Vec<T> {
        let two_pi = T::PI() * real(2.0);
        vec![two_pi; self.dim()]
    }

    /// Writes the cometric matrix (row-major, `dim x dim`) at `theta`.
    pub fn cometric(&self, theta: &[T], out: &mut [T]) {
        match self {
            BoundaryMetric::Circle { radius } => {
                out[0] = (*radius * *radius).recip();
            }
            BoundaryMetric::CosineCircle { radius, epsilon } => {
                out[0] = (T::one() + *epsilon * theta[0].cos()) / (*radius * *radius);
            }
            BoundaryMetric::TabulatedCircle { series } => {
                out[0] = series.eval(theta[0]);
            }
            BoundaryMetric::FlatTorus { radii } => {
                out[0] = (radii[0] * radii[0]).recip();
                out[1] = T::zero();
                out[2] = T::zero();
                out[3] = (radii[1] * radii[1]).recip();
            }
        }
    }

    /// Writes `d h^{jk} / d theta_l` (row-major) at `theta`.
    pub fn cometric_dtheta(&self, theta: &[T], l: usize, out: &mut [T]) {
        debug_assert!(l < self.dim());
        match self {
            BoundaryMetric::Circle { .. } => out[0] = T::zero(),
            BoundaryMetric::CosineCircle { radius, epsilon } => {
                out[0] = -*epsilon * theta[0].sin() / (*radius * *radius);
            }
            BoundaryMetric::TabulatedCircle { series } => {
                out[0] = series.deriv(theta[0]);
            }
            BoundaryMetric::FlatTorus { .. } => out[..4].fill(T::zero()),
        }
    }

    /// Boundary density `H(theta)`; the Riemannian one, `1/sqrt(det h)`.
    pub fn density(&self, theta: &[T]) -> T {
        let mut h = [T::zero(); MAX_DIM * MAX_DIM];
        self.cometric(theta, &mut h);
        match self.dim() {
            1 => h[0].sqrt().recip(),
            _ => (h[0] * h[3]).sqrt().recip(),
        }
    }

    /// Angular kinetic energy `q(theta, omega) = 1/2 h^{jk} omega_j omega_k`.
    pub fn q(&self, p: &AngularPoint<T>) -> T {
        let mut h = [T::zero(); MAX_DIM * MAX_DIM];
        self.cometric(&p.theta, &mut h);
        let d = self.dim();
        let mut s = T::zero();
        for j in 0..d {
            for k in 0..d {
                s = s + h[j * d + k] * p.omega[j] * p.omega[k];
            }
        }
        s / real(2.0)
    }

    /// `dq/domega_j = h^{jk} omega_k`, written into `out[..dim]`.
    pub fn dq_domega(&self, theta: &[T], omega: &[T], out: &mut [T]) {
        let mut h = [T::zero(); MAX_DIM * MAX_DIM];
        self.cometric(theta, &mut h);
        let d = self.dim();
        for j in 0..d {
            let mut s = T::zero();
            for k in 0..d {
                s = s + h[j * d + k] * omega[k];
            }
            out[j] = s;
        }
    }

    /// `dq/dtheta_l = 1/2 (d h^{jk}/d theta_l) omega_j omega_k`.
    pub fn dq_dtheta(&self, theta: &[T], omega: &[T], out: &mut [T]) {
        let d = self.dim();
        let mut dh = [T::zero(); MAX_DIM * MAX_DIM];
        for l in 0..d {
            self.cometric_dtheta(theta, l, &mut dh);
            let mut s = T::zero();
            for j in 0..d {
                for k in 0..d {
                    s = s + dh[j * d + k] * omega[j] * omega[k];
                }
            }
            out[l] = s / real(2.0);
        }
    }
}

/// Angular kinetic energy `q(theta, omega)`; nonnegative, zero iff `omega = 0`.
pub fn angular_energy<T: Real>(metric: &BoundaryMetric<T>, p: &AngularPoint<T>) -> Result<T> {
    if p.dim() != metric.dim() {
        return Err(Error::invalid("angular point dimension mismatch"));
    }
    if !p.is_finite() {
        return Err(Error::invalid("non-finite angular point"));
    }
    Ok(metric.q(p))
}

struct GeodesicSystem<'a, T> {
    metric: &'a BoundaryMetric<T>,
}

impl<T: Real> OdeSystem<T> for GeodesicSystem<'_, T> {
    fn dim(&self) -> usize {
        2 * self.metric.dim()
    }

    // Hamilton equations of sqrt(2q): the unit-speed geodesic flow.
    fn rhs(&self, _s: T, y: &[T], dy: &mut [T]) {
        let d = self.metric.dim();
        let (theta, omega) = y.split_at(d);
        let mut dq_dw = [T::zero(); MAX_DIM];
        let mut dq_dt = [T::zero(); MAX_DIM];
        self.metric.dq_domega(theta, omega, &mut dq_dw);
        self.metric.dq_dtheta(theta, omega, &mut dq_dt);
        let mut q = T::zero();
        for j in 0..d {
            q = q + dq_dw[j] * omega[j];
        }
        // q = 1/2 h omega . omega, and dq_dw . omega = 2q.
        let speed = q.max(T::zero()).sqrt();
        for j in 0..d {
            dy[j] = dq_dw[j] / speed;
            dy[d + j] = -dq_dt[j] / speed;
        }
    }
}

/// Geodesic flow `exp(sigma H_sqrt(2q))(theta, omega)` by adaptive integration.
///
/// Returns the continuous angular lift. Errors with
/// [`Error::DegenerateDirection`] when `q = 0`.
pub fn geodesic_flow<T: Real>(
    metric: &BoundaryMetric<T>,
    p: &AngularPoint<T>,
    sigma: T,
    tol: T,
) -> Result<AngularPoint<T>> {
    let q0 = angular_energy(metric, p)?;
    if !(q0 > T::zero()) {
        return Err(Error::DegenerateDirection);
    }
    if !sigma.is_finite() || !(tol > T::zero()) {
        return Err(Error::invalid("sigma must be finite and tol positive"));
    }
    let d = metric.dim();
    let mut y = Vec::with_capacity(2 * d);
    y.extend_from_slice(&p.theta);
    y.extend_from_slice(&p.omega);
    let sys = GeodesicSystem { metric };
    let mut stepper = Dopri5::new(2 * d);
    stepper.integrate(&sys, T::zero(), sigma, &mut y, tol)?;
    Ok(AngularPoint {
        theta: y[..d].to_vec(),
        omega: y[d..].to_vec(),
    })
}

/// Central-difference Poisson bracket `{f, g}` at a phase point, with
/// per-coordinate steps scaled by coordinate magnitude.
///
/// Convention: `{f, g} = sum_i df/dx_i dg/dxi_i - df/dxi_i dg/dx_i` over the
/// conjugate pairs `(r, rho)` and `(theta_j, omega_j)`, so `{r, rho} = 1`.
pub fn poisson_bracket<T: Real>(
    f: impl Fn(&PhasePoint<T>) -> T,
    g: impl Fn(&PhasePoint<T>) -> T,
    at: &PhasePoint<T>,
    step: T,
) -> Result<T> {
    if !(step > T::zero()) {
        return Err(Error::invalid("finite-difference step must be positive"));
    }
    if !at.is_finite() {
        return Err(Error::invalid("non-finite phase point"));
    }
    let d = at.angular.dim();
    let partial = |field: &dyn Fn(&PhasePoint<T>) -> T, i: usize| -> T {
        let h = step * at.coord(i).abs().max(T::one());
        let mut plus = at.clone();
        plus.set_coord(i, at.coord(i) + h);
        let mut minus = at.clone();
        minus.set_coord(i, at.coord(i) - h);
        (field(&plus) - field(&minus)) / (h + h)
    };
    // Coordinate layout: [r, rho, theta.., omega..]; pairs (0,1), (2+j, 2+d+j).
    let mut sum = T::zero();
    for pair in 0..=d {
        let (xi, pi) = if pair == 0 { (0, 1) } else { (1 + pair, 1 + d + pair) };
        sum = sum + partial(&f, xi) * partial(&g, pi) - partial(&f, pi) * partial(&g, xi);
    }
    Ok(sum)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn circle(a: f64) -> BoundaryMetric<f64> {
        BoundaryMetric::circle(a).unwrap()
    }

    #[test]
    fn angular_energy_hand_values() {
        // q = 1/2 h^11 omega^2 on the circle.
        let q = angular_energy(&circle(2.0), &AngularPoint::circle(0.4, 3.0)).unwrap();
        assert_eq!(q, 1.125);
        let q = angular_energy(&circle(1.0), &AngularPoint::circle(2.0, 1.0)).unwrap();
        assert_eq!(q, 0.5);
        let q = angular_energy(&circle(3.0), &AngularPoint::circle(0.0, 0.0)).unwrap();
        assert_eq!(q, 0.0);
    }

    #[test]
    fn angular_energy_rejects_non_finite() {
        let err = angular_energy(&circle(1.0), &AngularPoint::circle(f64::NAN, 1.0)).unwrap_err();
        assert!(matches!(err, Error::InvalidInput(_)));
    }

    #[test]
    fn geodesic_flow_circle_closed_form() {
        // dtheta/dsigma = sign(omega)/a, domega/dsigma = 0.
        let a = 2.5;
        let m = circle(a);
        let p = AngularPoint::circle(0.3, 1.7);
        let sigma = 2.0;
        let out = geodesic_flow(&m, &p, sigma, 1e-12).unwrap();
        assert!((out.theta[0] - (0.3 + sigma / a)).abs() < 1e-10);
        assert!((out.omega[0] - 1.7).abs() < 1e-12);

        let p_neg = AngularPoint::circle(0.3, -1.7);
        let out = geodesic_flow(&m, &p_neg, sigma, 1e-12).unwrap();
        assert!((out.theta[0] - (0.3 - sigma / a)).abs() < 1e-10);
    }

    #[test]
    fn geodesic_flow_zero_time_is_identity() {
        let m = circle(1.0);
        let p = AngularPoint::circle(1.1, -0.4);
        let out = geodesic_flow(&m, &p, 0.0, 1e-10).unwrap();
        assert_eq!(out, p);
    }

    #[test]
    fn geodesic_flow_degenerate_direction() {
        let err = geodesic_flow(&circle(1.0), &AngularPoint::circle(0.0, 0.0), 1.0, 1e-10)
            .unwrap_err();
        assert!(matches!(err, Error::DegenerateDirection));
    }

    #[test]
    fn geodesic_flow_momentum_scaling_law() {
        // exp(sigma H)(theta, lambda omega) = (theta_sigma, lambda omega_sigma).
        let m = BoundaryMetric::<f64>::cosine_circle(1.0, 0.3).unwrap();
        let p = AngularPoint::<f64>::circle(0.7, 0.9);
        let lam = 2.75;
        let tol = 1e-11;
        let base = geodesic_flow(&m, &p, 1.3, tol).unwrap();
        let scaled = geodesic_flow(&m, &p.scaled_omega(lam), 1.3, tol).unwrap();
        assert!((scaled.theta[0] - base.theta[0]).abs() < 1e-9);
        assert!((scaled.omega[0] - lam * base.omega[0]).abs() < 1e-9);
    }

    #[test]
    fn geodesic_flow_conserves_q_group_law_reversibility() {
        let m = BoundaryMetric::<f64>::cosine_circle(2.0, 0.4).unwrap();
        let p = AngularPoint::<f64>::circle(0.2, 1.3);
        let tol = 1e-11;
        let q0 = m.q(&p);
        for &sigma in &[0.5, 1.0, 3.0, -2.0] {
            let out = geodesic_flow(&m, &p, sigma, tol).unwrap();
            assert!(
                (m.q(&out) - q0).abs() <= 10.0 * tol * sigma.abs().max(1.0),
                "q drift at sigma={sigma}"
            );
            // Group law.
            let half = geodesic_flow(&m, &p, sigma / 2.0, tol).unwrap();
            let two_step = geodesic_flow(&m, &half, sigma / 2.0, tol).unwrap();
            assert!((two_step.theta[0] - out.theta[0]).abs() < 10.0 * tol.max(1e-11) * 100.0);
            // Reversibility.
            let back = geodesic_flow(&m, &out, -sigma, tol).unwrap();
            assert!((back.theta[0] - p.theta[0]).abs() < 1e-9);
            assert!((back.omega[0] - p.omega[0]).abs() < 1e-9);
        }
    }

    #[test]
    fn flat_torus_geodesic() {
        let m = BoundaryMetric::<f64>::flat_torus(1.0, 2.0).unwrap();
        let p = AngularPoint::<f64>::new(vec![0.0, 0.0], vec![1.0, 1.0]);
        // q = 1/2 (1 + 1/4), speed = sqrt(2q); theta_j' = h_jj omega_j / speed.
        let q0 = m.q(&p);
        assert!((q0 - 0.625).abs() < 1e-15);
        let sigma = 2.0;
        let out = geodesic_flow(&m, &p, sigma, 1e-12).unwrap();
        let speed = (2.0 * q0).sqrt();
        assert!((out.theta[0] - sigma * 1.0 / speed).abs() < 1e-10);
        assert!((out.theta[1] - sigma * 0.25 / speed).abs() < 1e-10);
    }

    #[test]
    fn tabulated_metric_matches_cosine() {
        // Tabulate (1 + 0.3 cos theta) / 4 and compare against the analytic family.
        let n = 32;
        let samples: Vec<f64> = (0..n)
            .map(|j| {
                let th = 2.0 * std::f64::consts::PI * j as f64 / n as f64;
                (1.0 + 0.3 * th.cos()) / 4.0
            })
            .collect();
        let tab = BoundaryMetric::tabulated_circle(&samples).unwrap();
        let ana = BoundaryMetric::<f64>::cosine_circle(2.0, 0.3).unwrap();
        for j in 0..97 {
            let th = [0.0634 * j as f64];
            let mut ht = [0.0];
            let mut ha = [0.0];
            tab.cometric(&th, &mut ht);
            ana.cometric(&th, &mut ha);
            assert!((ht[0] - ha[0]).abs() < 1e-12, "theta={}", th[0]);
            let mut dt = [0.0];
            let mut da = [0.0];
            tab.cometric_dtheta(&th, 0, &mut dt);
            ana.cometric_dtheta(&th, 0, &mut da);
            assert!((dt[0] - da[0]).abs() < 1e-11);
        }
    }

    #[test]
    fn metric_periodicity_and_positivity() {
        let two_pi = 2.0 * std::f64::consts::PI;
        let samples: Vec<f64> = (0..16)
            .map(|j| 1.0 + 0.5 * (two_pi * j as f64 / 16.0).sin())
            .collect();
        let m = BoundaryMetric::tabulated_circle(&samples).unwrap();
        for j in 0..50 {
            let th = 0.13 * j as f64;
            let mut a = [0.0];
            let mut b = [0.0];
            m.cometric(&[th], &mut a);
            m.cometric(&[th + two_pi], &mut b);
            assert!((a[0] - b[0]).abs() < 1e-12);
            assert!(a[0] > 0.0);
            assert!((m.density(&[th]) - m.density(&[th + two_pi])).abs() < 1e-12);
        }
    }

    #[test]
    fn tabulated_metric_rejects_nonpositive() {
        let samples: Vec<f64> = (0..16)
            .map(|j| 0.1 + (2.0 * std::f64::consts::PI * j as f64 / 16.0).cos())
            .collect();
        assert!(BoundaryMetric::tabulated_circle(&samples).is_err());
    }

    #[test]
    fn wrap_and_circ_diff() {
        let p = 2.0 * std::f64::consts::PI;
        assert!((wrap_angle(-0.5_f64, p) - (p - 0.5)).abs() < 1e-15);
        assert!(wrap_angle(p, p).abs() < 1e-15);
        assert!((circ_diff(0.1_f64, p - 0.1, p) - 0.2).abs() < 1e-12);
        assert!((circ_diff(p - 0.1, 0.1, p) + 0.2).abs() < 1e-12);
    }

    #[test]
    fn poisson_bracket_canonical_pairs() {
        let at = PhasePoint::<f64>::new(1.3, -0.2, AngularPoint::circle(0.4, 0.8));
        let step = 1e-5;
        let b = poisson_bracket(|x| x.r, |x| x.rho, &at, step).unwrap();
        assert!((b - 1.0).abs() < 1e-9);
        let b = poisson_bracket(|x| x.angular.theta[0], |x| x.angular.omega[0], &at, step).unwrap();
        assert!((b - 1.0).abs() < 1e-9);
        // Antisymmetry at f = g.
        let f = |x: &PhasePoint<f64>| x.r * x.rho + x.angular.omega[0];
        let b = poisson_bracket(f, f, &at, step).unwrap();
        assert!(b.abs() < 1e-12);
    }

    #[test]
    fn poisson_bracket_q_with_conic_energy_vanishes() {
        // {q, p_c} = 0: the angular energy is conserved by the conic flow.
        let m = BoundaryMetric::<f64>::cosine_circle(1.0, 0.35).unwrap();
        let at = PhasePoint::new(1.7, 0.4, AngularPoint::circle(0.9, 1.2));
        let mc = m.clone();
        let q = move |x: &PhasePoint<f64>| mc.q(&x.angular);
        let mc2 = m.clone();
        let pc = move |x: &PhasePoint<f64>| {
            0.5 * x.rho * x.rho + mc2.q(&x.angular) / (x.r * x.r)
        };
        let b = poisson_bracket(q, pc, &at, 1e-5).unwrap();
        assert!(b.abs() < 1e-8, "bracket = {b}");
    }
}
