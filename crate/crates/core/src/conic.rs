//! Exact conic dynamics: closed-form flow of `p_c = 1/2 rho^2 + q/r^2`,
//! classical wave operators `w_{c,±}` and the scattering map `s_c`.
//!
//! The radial part of the conic flow is solvable:
//!
//! ```text
//! r(t)   = sqrt(2 E0 t^2 + 2 r0 rho0 t + r0^2)
//! rho(t) = (2 E0 t + r0 rho0) / r(t)
//! sigma(t) = atan((2 E0 t + r0 rho0)/sqrt(2 q0)) - atan(r0 rho0 / sqrt(2 q0))
//! ```
//!
//! and the angular part rides the geodesic flow for time `sigma(t)`. The
//! asymptotic data as `t -> ±inf` give the wave operators, and their
//! composition is `s_c(r, rho, theta, omega) = (-r, -rho, exp(pi H_sqrt(2q)))`.

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::geometry::{geodesic_flow, AngularPoint, BoundaryMetric};
use crate::real::{real, to_f64, Real};
use crate::Result;

/// Direction of the time limit (`t -> +inf` or `t -> -inf`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sign {
    Plus,
    Minus,
}

impl Sign {
    pub fn scalar<T: Real>(self) -> T {
        match self {
            Sign::Plus => T::one(),
            Sign::Minus => -T::one(),
        }
    }

    pub fn flip(self) -> Self {
        match self {
            Sign::Plus => Sign::Minus,
            Sign::Minus => Sign::Plus,
        }
    }
}

/// A point `(r, rho, theta, omega)` of the cone-end phase space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhasePoint<T> {
    pub r: T,
    pub rho: T,
    pub angular: AngularPoint<T>,
}

impl<T: Real> PhasePoint<T> {
    pub fn new(r: T, rho: T, angular: AngularPoint<T>) -> Self {
        PhasePoint { r, rho, angular }
    }

    /// Circle shorthand for `(r, rho, theta, omega)`.
    pub fn circle(r: T, rho: T, theta: T, omega: T) -> Self {
        PhasePoint::new(r, rho, AngularPoint::circle(theta, omega))
    }

    pub fn is_finite(&self) -> bool {
        self.r.is_finite() && self.rho.is_finite() && self.angular.is_finite()
    }

    /// Interior points require `r > 0` and finite entries.
    pub fn validate_interior(&self) -> Result<()> {
        if !self.is_finite() {
            return Err(Error::invalid("non-finite phase point"));
        }
        if !(self.r > T::zero()) {
            return Err(Error::domain(format!("r must be positive, got {:e}", to_f64(self.r))));
        }
        Ok(())
    }

    pub fn num_coords(&self) -> usize {
        2 + 2 * self.angular.dim()
    }

    /// Flat coordinate access in the order `[r, rho, theta.., omega..]`.
    pub fn coord(&self, i: usize) -> T {
        let d = self.angular.dim();
        match i {
            0 => self.r,
            1 => self.rho,
            _ if i < 2 + d => self.angular.theta[i - 2],
            _ => self.angular.omega[i - 2 - d],
        }
    }

    pub fn set_coord(&mut self, i: usize, v: T) {
        let d = self.angular.dim();
        match i {
            0 => self.r = v,
            1 => self.rho = v,
            _ if i < 2 + d => self.angular.theta[i - 2] = v,
            _ => self.angular.omega[i - 2 - d] = v,
        }
    }

    pub fn to_coords(&self) -> Vec<T> {
        (0..self.num_coords()).map(|i| self.coord(i)).collect()
    }

    pub fn from_coords(coords: &[T], dim: usize) -> Self {
        PhasePoint {
            r: coords[0],
            rho: coords[1],
            angular: AngularPoint {
                theta: coords[2..2 + dim].to_vec(),
                omega: coords[2 + dim..2 + 2 * dim].to_vec(),
            },
        }
    }

    /// The `(r, omega) -> (lambda r, lambda omega)` dilation.
    pub fn scaled(&self, lambda: T) -> Self {
        PhasePoint {
            r: self.r * lambda,
            rho: self.rho,
            angular: self.angular.scaled_omega(lambda),
        }
    }
}

/// Conserved quantities of the conic flow: total energy `E0` and angular
/// energy `q0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConicInvariants<T> {
    pub e0: T,
    pub q0: T,
}

impl<T: Real> ConicInvariants<T> {
    pub fn of_point(metric: &BoundaryMetric<T>, x: &PhasePoint<T>) -> Self {
        let q0 = metric.q(&x.angular);
        let e0 = x.rho * x.rho / real(2.0) + q0 / (x.r * x.r);
        ConicInvariants { e0, q0 }
    }

    /// Checks `E0 = 1/2 rho^2 + q0/r^2` at the given point to relative 1e-12.
    pub fn consistent_with(&self, metric: &BoundaryMetric<T>, x: &PhasePoint<T>) -> bool {
        let fresh = Self::of_point(metric, x);
        let rel = (fresh.e0 - self.e0).abs() / self.e0.abs().max(T::one());
        rel <= real(1e-12) && (fresh.q0 - self.q0).abs() / self.q0.abs().max(T::one()) <= real(1e-12)
    }
}

/// Asymptotic data `(r_±, rho_±, theta_±, omega_±)` of a trajectory; `r_as`
/// is the limit of `r(t) - t rho(t)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScatteringData<T> {
    pub r_as: T,
    pub rho_as: T,
    pub angular_as: AngularPoint<T>,
}

impl<T: Real> ScatteringData<T> {
    pub fn new(r_as: T, rho_as: T, angular_as: AngularPoint<T>) -> Self {
        ScatteringData {
            r_as,
            rho_as,
            angular_as,
        }
    }

    pub fn circle(r_as: T, rho_as: T, theta: T, omega: T) -> Self {
        ScatteringData::new(r_as, rho_as, AngularPoint::circle(theta, omega))
    }

    /// Free-motion energy `1/2 rho_as^2`.
    pub fn energy(&self) -> T {
        self.rho_as * self.rho_as / real(2.0)
    }

    pub fn scaled(&self, lambda: T) -> Self {
        ScatteringData {
            r_as: self.r_as * lambda,
            rho_as: self.rho_as,
            angular_as: self.angular_as.scaled_omega(lambda),
        }
    }

    pub fn to_coords(&self) -> Vec<T> {
        let mut v = vec![self.r_as, self.rho_as];
        v.extend_from_slice(&self.angular_as.theta);
        v.extend_from_slice(&self.angular_as.omega);
        v
    }
}

/// Geodesic time accumulated by the conic flow between 0 and `t`.
fn conic_sigma<T: Real>(e0: T, q0: T, r0_rho0: T, t: T) -> T {
    let s2q = (q0 + q0).sqrt();
    ((e0 + e0) * t + r0_rho0).atan2(s2q) - r0_rho0.atan2(s2q)
}

/// Exact conic flow `exp(t H_{p_c})(x0)`: radial part in closed form, angular
/// part via the geodesic flow at time `sigma(t)`.
pub fn conic_flow_exact<T: Real>(
    metric: &BoundaryMetric<T>,
    x0: &PhasePoint<T>,
    t: T,
    tol: T,
) -> Result<PhasePoint<T>> {
    x0.validate_interior()?;
    if !t.is_finite() {
        return Err(Error::invalid("non-finite flow time"));
    }
    let inv = ConicInvariants::of_point(metric, x0);
    if inv.q0 == T::zero() {
        // Free 1-D radial motion with frozen angular variables.
        let r_t = x0.r + t * x0.rho;
        if !(r_t > T::zero()) {
            return Err(Error::DomainExit { t: to_f64(t) });
        }
        return Ok(PhasePoint::new(r_t, x0.rho, x0.angular.clone()));
    }
    let b = x0.r * x0.rho;
    let r_sq = (inv.e0 + inv.e0) * t * t + (b + b) * t + x0.r * x0.r;
    let r_t = r_sq.sqrt();
    let rho_t = ((inv.e0 + inv.e0) * t + b) / r_t;
    let sigma = conic_sigma(inv.e0, inv.q0, b, t);
    debug_assert!(sigma.abs() < T::PI(), "|sigma(t)| must stay below pi");
    let angular = if t == T::zero() {
        x0.angular.clone()
    } else {
        geodesic_flow(metric, &x0.angular, sigma, tol)?
    };
    Ok(PhasePoint::new(r_t, rho_t, angular))
}

/// Geodesic time to the `t -> ±inf` limit: `±pi/2 - atan(b / sqrt(2 q0))`.
fn sigma_limit<T: Real>(sign: Sign, b: T, q0: T) -> T {
    let s: T = sign.scalar();
    s * T::FRAC_PI_2() - (b / (q0 + q0).sqrt()).atan()
}

/// Geodesic times `(sigma_-, sigma_+)` of the two asymptotic limits of the
/// trajectory through `x0`; their gap is exactly `pi`.
pub fn limit_geodesic_times<T: Real>(
    metric: &BoundaryMetric<T>,
    x0: &PhasePoint<T>,
) -> Result<(T, T)> {
    x0.validate_interior()?;
    let inv = ConicInvariants::of_point(metric, x0);
    if !(inv.q0 > T::zero()) {
        return Err(Error::DegenerateTrajectory("omega = 0 has no angular limit"));
    }
    let b = x0.r * x0.rho;
    Ok((
        sigma_limit(Sign::Minus, b, inv.q0),
        sigma_limit(Sign::Plus, b, inv.q0),
    ))
}

/// Scattering data of the conic trajectory through `x0`, i.e. `w_{c,±}^{-1}(x0)`.
pub fn conic_wave_data<T: Real>(
    metric: &BoundaryMetric<T>,
    x0: &PhasePoint<T>,
    sign: Sign,
    tol: T,
) -> Result<ScatteringData<T>> {
    x0.validate_interior()?;
    let inv = ConicInvariants::of_point(metric, x0);
    if !(inv.q0 > T::zero()) {
        return Err(Error::DegenerateTrajectory("omega = 0 has no angular limit"));
    }
    if !(inv.e0 > T::zero()) {
        return Err(Error::DegenerateTrajectory("zero total energy"));
    }
    let s: T = sign.scalar();
    let sqrt_2e = (inv.e0 + inv.e0).sqrt();
    let b = x0.r * x0.rho;
    let r_as = s * b / sqrt_2e;
    let rho_as = s * sqrt_2e;
    let sigma = sigma_limit(sign, b, inv.q0);
    let angular_as = geodesic_flow(metric, &x0.angular, sigma, tol)?;
    Ok(ScatteringData::new(r_as, rho_as, angular_as))
}

/// Classical wave operator `w_{c,±}`: interior point with the given
/// asymptotic data. Requires `±rho_as > 0` and `omega != 0`.
pub fn conic_wave_map<T: Real>(
    metric: &BoundaryMetric<T>,
    d: &ScatteringData<T>,
    sign: Sign,
    tol: T,
) -> Result<PhasePoint<T>> {
    if !d.r_as.is_finite() || !d.rho_as.is_finite() || !d.angular_as.is_finite() {
        return Err(Error::invalid("non-finite scattering data"));
    }
    let s: T = sign.scalar();
    if !(s * d.rho_as > T::zero()) {
        return Err(Error::domain(format!(
            "wave map requires sign-matched momentum, got rho_as = {:e}",
            to_f64(d.rho_as)
        )));
    }
    let q0 = metric.q(&d.angular_as);
    if !(q0 > T::zero()) {
        return Err(Error::DegenerateTrajectory("omega = 0 has no angular limit"));
    }
    let b = d.r_as * d.rho_as;
    let r0 = (d.r_as * d.r_as + (q0 + q0) / (d.rho_as * d.rho_as)).sqrt();
    let rho0 = b / r0;
    let sigma = sigma_limit(sign, b, q0);
    let angular0 = geodesic_flow(metric, &d.angular_as, -sigma, tol)?;
    Ok(PhasePoint::new(r0, rho0, angular0))
}

/// Scaled sup-distance between two phase points (angular lifts compared raw).
pub fn phase_distance<T: Real>(a: &PhasePoint<T>, b: &PhasePoint<T>) -> T {
    let mut d = T::zero();
    for i in 0..a.num_coords() {
        let va = a.coord(i);
        let vb = b.coord(i);
        let scale = T::one() + va.abs().max(vb.abs());
        d = d.max((va - vb).abs() / scale);
    }
    d
}

/// Scaled sup-distance between two scattering data.
pub fn data_distance<T: Real>(a: &ScatteringData<T>, b: &ScatteringData<T>) -> T {
    let ca = a.to_coords();
    let cb = b.to_coords();
    let mut d = T::zero();
    for (va, vb) in ca.iter().zip(cb.iter()) {
        let scale = T::one() + va.abs().max(vb.abs());
        d = d.max((*va - *vb).abs() / scale);
    }
    d
}

/// Conic scattering map `s_c = w_{c,+}^{-1} ∘ w_{c,-}`.
///
/// Computes both the closed form `(-r, -rho, exp(pi H_sqrt(2q)))` and the
/// two-wave-map composition and insists they agree to 1e-9 (scaled); callers
/// should keep `tol <= 1e-10` for that margin.
pub fn conic_scattering_map<T: Real>(
    metric: &BoundaryMetric<T>,
    d_minus: &ScatteringData<T>,
    tol: T,
) -> Result<ScatteringData<T>> {
    if !(d_minus.rho_as < T::zero()) {
        return Err(Error::domain("scattering map requires incoming data (rho_as < 0)"));
    }
    let angular_pi = geodesic_flow(metric, &d_minus.angular_as, T::PI(), tol)?;
    let closed = ScatteringData::new(-d_minus.r_as, -d_minus.rho_as, angular_pi);

    let x0 = conic_wave_map(metric, d_minus, Sign::Minus, tol)?;
    let composed = conic_wave_data(metric, &x0, Sign::Plus, tol)?;

    let gap = data_distance(&closed, &composed);
    if gap > real(1e-9) {
        return Err(Error::Numeric(format!(
            "conic scattering self-check failed: closed form and wave-map composition differ by {:e}",
            to_f64(gap)
        )));
    }
    Ok(closed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::circ_diff;

    const TOL: f64 = 1e-12;

    fn circle(a: f64) -> BoundaryMetric<f64> {
        BoundaryMetric::circle(a).unwrap()
    }

    #[test]
    fn flow_hand_value() {
        // a = 1, (1, 0, 0, 1), t = 1: E0 = q0 = 1/2, sigma = atan(1) = pi/4.
        let m = circle(1.0);
        let x0 = PhasePoint::circle(1.0, 0.0, 0.0, 1.0);
        let out = conic_flow_exact(&m, &x0, 1.0, TOL).unwrap();
        assert!((out.r - 2.0_f64.sqrt()).abs() < 1e-12);
        assert!((out.rho - 1.0 / 2.0_f64.sqrt()).abs() < 1e-12);
        assert!((out.angular.theta[0] - std::f64::consts::FRAC_PI_4).abs() < 1e-10);
        assert!((out.angular.omega[0] - 1.0).abs() < 1e-10);
    }

    #[test]
    fn flow_zero_time_is_identity() {
        let m = circle(2.0);
        let x0 = PhasePoint::circle(1.4, -0.3, 0.8, 1.1);
        let out = conic_flow_exact(&m, &x0, 0.0, TOL).unwrap();
        assert_eq!(out, x0);
    }

    #[test]
    fn flow_free_radial_branch() {
        let m = circle(1.0);
        let x0 = PhasePoint::circle(1.0, 0.5, 0.3, 0.0);
        let out = conic_flow_exact(&m, &x0, 3.0, TOL).unwrap();
        assert_eq!(out.r, 1.0 + 3.0 * 0.5);
        assert_eq!(out.rho, 0.5);
        assert_eq!(out.angular, x0.angular);
        // Incoming free trajectory crosses the tip.
        let x_in = PhasePoint::circle(1.0, -0.5, 0.3, 0.0);
        let err = conic_flow_exact(&m, &x_in, 3.0, TOL).unwrap_err();
        assert!(matches!(err, Error::DomainExit { .. }));
    }

    #[test]
    fn flow_conserves_both_invariants() {
        let m = BoundaryMetric::cosine_circle(2.0, 0.3).unwrap();
        let x0 = PhasePoint::circle(1.3, -0.4, 0.6, 1.2);
        let inv = ConicInvariants::of_point(&m, &x0);
        for &t in &[-20.0, -1.0, 0.5, 7.0, 42.0] {
            let out = conic_flow_exact(&m, &x0, t, TOL).unwrap();
            let inv_t = ConicInvariants::of_point(&m, &out);
            assert!((inv_t.e0 - inv.e0).abs() < 1e-10, "E0 drift at t={t}");
            assert!((inv_t.q0 - inv.q0).abs() < 1e-10, "q0 drift at t={t}");
        }
    }

    #[test]
    fn invariants_consistency_check() {
        let m = circle(2.0);
        let x = PhasePoint::circle(1.4, -0.3, 0.8, 1.1);
        let inv = ConicInvariants::of_point(&m, &x);
        assert!(inv.consistent_with(&m, &x));
        let drifted = ConicInvariants {
            e0: inv.e0 * (1.0 + 1e-9),
            q0: inv.q0,
        };
        assert!(!drifted.consistent_with(&m, &x));
    }

    #[test]
    fn wave_data_hand_values() {
        // a = 1, (1, 0, 0, 1): sigma_± = ±pi/2.
        let m = circle(1.0);
        let x0 = PhasePoint::circle(1.0, 0.0, 0.0, 1.0);
        let plus = conic_wave_data(&m, &x0, Sign::Plus, TOL).unwrap();
        assert!(plus.r_as.abs() < 1e-12);
        assert!((plus.rho_as - 1.0).abs() < 1e-12);
        assert!((plus.angular_as.theta[0] - std::f64::consts::FRAC_PI_2).abs() < 1e-10);
        let minus = conic_wave_data(&m, &x0, Sign::Minus, TOL).unwrap();
        assert!((minus.rho_as + 1.0).abs() < 1e-12);
        assert!((minus.angular_as.theta[0] + std::f64::consts::FRAC_PI_2).abs() < 1e-10);
        // Invariants of the data itself.
        let inv = ConicInvariants::of_point(&m, &x0);
        assert!((plus.energy() - inv.e0).abs() < 1e-12);
        assert!((m.q(&plus.angular_as) - inv.q0).abs() < 1e-10);
    }

    #[test]
    fn sigma_gap_is_pi() {
        let m = BoundaryMetric::cosine_circle(1.0, 0.2).unwrap();
        for &(r, rho, th, w) in &[(1.0, 0.0, 0.0, 1.0), (2.0, -0.7, 1.1, -0.8), (0.5, 1.3, 2.0, 0.4)] {
            let x0 = PhasePoint::circle(r, rho, th, w);
            let q0 = m.q(&x0.angular);
            let b = r * rho;
            let gap = sigma_limit::<f64>(Sign::Plus, b, q0) - sigma_limit::<f64>(Sign::Minus, b, q0);
            assert!((gap - std::f64::consts::PI).abs() < 1e-12);
        }
    }

    #[test]
    fn wave_map_hand_value_and_round_trip() {
        // a = 1, d = (0, -1, 0, 1), sign = -: q0 = 1/2, r0 = 1, back-flow +pi/2.
        let m = circle(1.0);
        let d = ScatteringData::circle(0.0, -1.0, 0.0, 1.0);
        let x0 = conic_wave_map(&m, &d, Sign::Minus, TOL).unwrap();
        assert!((x0.r - 1.0).abs() < 1e-12);
        assert!(x0.rho.abs() < 1e-12);
        assert!((x0.angular.theta[0] - std::f64::consts::FRAC_PI_2).abs() < 1e-10);

        let back = conic_wave_data(&m, &x0, Sign::Minus, TOL).unwrap();
        assert!(data_distance(&back, &d) < 1e-10);

        // Identity in the other order, on a generic point.
        let x = PhasePoint::circle(1.7, 0.3, 0.9, -1.4);
        for sign in [Sign::Plus, Sign::Minus] {
            let data = conic_wave_data(&m, &x, sign, TOL).unwrap();
            let x_back = conic_wave_map(&m, &data, sign, TOL).unwrap();
            assert!(phase_distance(&x_back, &x) < 1e-10);
        }
    }

    #[test]
    fn wave_map_homogeneity() {
        let m = circle(1.0);
        let d = ScatteringData::circle(0.0, -1.0, 0.0, 1.0);
        let lam = 2.0;
        let x0 = conic_wave_map(&m, &d, Sign::Minus, TOL).unwrap();
        let x0_scaled = conic_wave_map(&m, &d.scaled(lam), Sign::Minus, TOL).unwrap();
        assert!(phase_distance(&x0_scaled, &x0.scaled(lam)) < 1e-10);
    }

    #[test]
    fn wave_map_rejects_wrong_momentum_sign() {
        let m = circle(1.0);
        let d = ScatteringData::circle(0.0, -1.0, 0.0, 1.0);
        let err = conic_wave_map(&m, &d, Sign::Plus, TOL).unwrap_err();
        assert!(matches!(err, Error::Domain(_)));
    }

    #[test]
    fn scattering_map_hand_values() {
        // a = 1: angular shift exactly pi.
        let m = circle(1.0);
        let d = ScatteringData::circle(0.0, -1.0, -std::f64::consts::FRAC_PI_2, 1.0);
        let out = conic_scattering_map(&m, &d, TOL).unwrap();
        assert!(out.r_as.abs() < 1e-12);
        assert!((out.rho_as - 1.0).abs() < 1e-12);
        assert!((out.angular_as.theta[0] - std::f64::consts::FRAC_PI_2).abs() < 1e-10);

        // a = 2: shift pi/a = pi/2.
        let m2 = circle(2.0);
        let d2 = ScatteringData::circle(0.3, -1.0, 0.0, 1.0);
        let out2 = conic_scattering_map(&m2, &d2, TOL).unwrap();
        assert!((out2.r_as + 0.3).abs() < 1e-12);
        assert!((out2.rho_as - 1.0).abs() < 1e-12);
        assert!((out2.angular_as.theta[0] - std::f64::consts::FRAC_PI_2).abs() < 1e-10);
        assert!((out2.angular_as.omega[0] - 1.0).abs() < 1e-10);
    }

    #[test]
    fn scattering_map_homogeneity_exact() {
        let m = circle(2.0);
        let d = ScatteringData::circle(0.3, -1.0, 0.0, 1.0);
        let lam = 3.0;
        let out = conic_scattering_map(&m, &d, TOL).unwrap();
        let out_scaled = conic_scattering_map(&m, &d.scaled(lam), TOL).unwrap();
        assert!(data_distance(&out_scaled, &out.scaled(lam)) < 1e-10);
    }

    #[test]
    fn scattering_map_rejects_outgoing() {
        let m = circle(1.0);
        let d = ScatteringData::circle(0.0, 1.0, 0.0, 1.0);
        assert!(matches!(
            conic_scattering_map(&m, &d, TOL).unwrap_err(),
            Error::Domain(_)
        ));
    }

    #[test]
    fn wave_data_angle_wraps_match_examples() {
        // Outputs are lifts; reduced values agree modulo the period.
        let m = circle(1.0);
        let x0 = PhasePoint::circle(1.0, 0.0, 0.0, 1.0);
        let minus = conic_wave_data(&m, &x0, Sign::Minus, TOL).unwrap();
        let period = 2.0 * std::f64::consts::PI;
        assert!(
            circ_diff(minus.angular_as.theta[0], -std::f64::consts::FRAC_PI_2, period).abs()
                < 1e-10
        );
    }
}
