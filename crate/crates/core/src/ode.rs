//! Embedded adaptive Runge–Kutta integration (Dormand–Prince 5(4)).

use crate::error::Error;
use crate::real::{real, to_f64, Real};
use crate::Result;

/// First-order system `dy/dt = f(t, y)` with an optional per-step hook.
pub trait OdeSystem<T: Real> {
    fn dim(&self) -> usize;

    /// Writes `f(t, y)` into `dy`.
    fn rhs(&self, t: T, y: &[T], dy: &mut [T]);

    /// Called after each accepted step; may rescale `y` (linear problems) or
    /// abort the integration. Returns `true` if it modified the state, which
    /// invalidates the cached end-point derivative.
    fn post_step(&self, _t: T, _y: &mut [T]) -> Result<bool> {
        Ok(false)
    }
}

/// Blanket system over a closure, for one-off integrations.
pub struct FnSystem<F> {
    pub dim: usize,
    pub f: F,
}

impl<T: Real, F: Fn(T, &[T], &mut [T])> OdeSystem<T> for FnSystem<F> {
    fn dim(&self) -> usize {
        self.dim
    }
    fn rhs(&self, t: T, y: &[T], dy: &mut [T]) {
        (self.f)(t, y, dy)
    }
}

const STAGES: usize = 7;
const MAX_STEPS: usize = 20_000_000;

/// Dormand–Prince 5(4) stepper with reusable stage buffers.
pub struct Dopri5<T> {
    k: Vec<Vec<T>>,
    y_tmp: Vec<T>,
    y_new: Vec<T>,
}

impl<T: Real> Dopri5<T> {
    pub fn new(dim: usize) -> Self {
        Dopri5 {
            k: (0..STAGES).map(|_| vec![T::zero(); dim]).collect(),
            y_tmp: vec![T::zero(); dim],
            y_new: vec![T::zero(); dim],
        }
    }

    /// Integrates `y` in place from `t0` to `t1` with local error tolerance
    /// `tol` (used as both absolute and relative tolerance).
    pub fn integrate<S: OdeSystem<T>>(
        &mut self,
        sys: &S,
        t0: T,
        t1: T,
        y: &mut [T],
        tol: T,
    ) -> Result<()> {
        let dim = sys.dim();
        assert_eq!(y.len(), dim, "state dimension mismatch");
        if !(tol > T::zero()) {
            return Err(Error::invalid("tolerance must be positive"));
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("non-finite state"));
        }
        if t1 == t0 {
            return Ok(());
        }

        let span = t1 - t0;
        let dir = span.signum();
        let mut t = t0;
        sys.rhs(t, y, &mut self.k[0]);

        let mut h = dir * self.initial_step(sys, t0, y, span.abs(), tol);

        // Butcher tableau (Dormand & Prince 1980), fifth-order row doubles as
        // the FSAL seventh stage.
        let a: [&[f64]; 6] = [
            &[1.0 / 5.0],
            &[3.0 / 40.0, 9.0 / 40.0],
            &[44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0],
            &[19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0],
            &[
                9017.0 / 3168.0,
                -355.0 / 33.0,
                46732.0 / 5247.0,
                49.0 / 176.0,
                -5103.0 / 18656.0,
            ],
            &[
                35.0 / 384.0,
                0.0,
                500.0 / 1113.0,
                125.0 / 192.0,
                -2187.0 / 6784.0,
                11.0 / 84.0,
            ],
        ];
        let c: [f64; 6] = [1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
        let e: [f64; 7] = [
            71.0 / 57600.0,
            0.0,
            -71.0 / 16695.0,
            71.0 / 1920.0,
            -17253.0 / 339200.0,
            22.0 / 525.0,
            -1.0 / 40.0,
        ];

        let safety: T = real(0.9);
        let shrink: T = real(0.2);
        let grow: T = real(5.0);
        let order_inv: T = real(0.2);
        let eps_floor: T = T::epsilon() * real(16.0);

        let mut fsal_fresh = true;
        for _ in 0..MAX_STEPS {
            if (t - t1) * dir >= T::zero() {
                return Ok(());
            }
            // Do not overshoot the endpoint; an endpoint-clamped step may be
            // arbitrarily small without indicating failure.
            let mut last = false;
            if (t + h - t1) * dir > T::zero() {
                h = t1 - t;
                last = true;
            }
            let h_min = eps_floor * t.abs().max(T::one());
            if !last && h.abs() < h_min {
                return Err(Error::IntegrationFailure {
                    t: to_f64(t),
                    step: to_f64(h),
                });
            }

            if !fsal_fresh {
                sys.rhs(t, y, &mut self.k[0]);
                fsal_fresh = true;
            }
            for (stage, row) in a.iter().enumerate() {
                for i in 0..dim {
                    let mut acc = T::zero();
                    for (j, &aij) in row.iter().enumerate() {
                        acc = acc + real::<T>(aij) * self.k[j][i];
                    }
                    self.y_tmp[i] = y[i] + h * acc;
                }
                let ts = t + real::<T>(c[stage]) * h;
                let (_, rest) = self.k.split_at_mut(stage + 1);
                sys.rhs(ts, &self.y_tmp, &mut rest[0]);
            }
            // Stage 6 state *is* the fifth-order solution.
            self.y_new.copy_from_slice(&self.y_tmp);

            // Scaled error norm of the embedded fourth-order difference.
            let mut err_sq = T::zero();
            for i in 0..dim {
                let mut de = T::zero();
                for (j, &ej) in e.iter().enumerate() {
                    de = de + real::<T>(ej) * self.k[j][i];
                }
                let scale = tol + tol * y[i].abs().max(self.y_new[i].abs());
                let r = h * de / scale;
                err_sq = err_sq + r * r;
            }
            let err = (err_sq / real(dim as f64)).sqrt();

            if err.is_finite() && err <= T::one() {
                t = t + h;
                y.copy_from_slice(&self.y_new);
                self.k.swap(0, 6); // FSAL
                if sys.post_step(t, y)? {
                    fsal_fresh = false;
                }
                if y.iter().any(|v| !v.is_finite()) {
                    return Err(Error::Numeric(format!(
                        "non-finite state at t = {:e}",
                        to_f64(t)
                    )));
                }
                let factor = if err == T::zero() {
                    grow
                } else {
                    (safety * err.powf(-order_inv)).max(shrink).min(grow)
                };
                h = h * factor;
            } else if err.is_finite() {
                // Rejected; k[0] still holds f(t, y).
                h = h * (safety * err.powf(-order_inv)).max(shrink);
            } else {
                h = h * shrink;
            }
        }
        Err(Error::Numeric(format!(
            "step limit exceeded at t = {:e}",
            to_f64(t)
        )))
    }

    /// Starting step size from the magnitudes of the state and its derivative.
    fn initial_step<S: OdeSystem<T>>(&mut self, sys: &S, t0: T, y: &[T], span: T, tol: T) -> T {
        let dim = sys.dim();
        let norm = |v: &[T], yref: &[T]| {
            let mut s = T::zero();
            for i in 0..dim {
                let sc = T::one() + yref[i].abs();
                let r = v[i] / sc;
                s = s + r * r;
            }
            (s / real(dim as f64)).sqrt()
        };
        let d0 = norm(y, y);
        let d1 = norm(&self.k[0], y);
        let mut h0 = if d1 > real(1e-10) {
            real::<T>(0.01) * d0.max(real(1e-4)) / d1
        } else {
            real(1e-6)
        };
        h0 = h0.min(span);
        // One Euler trial step to probe the curvature.
        for i in 0..dim {
            self.y_tmp[i] = y[i] + h0 * self.k[0][i];
        }
        sys.rhs(t0 + h0, &self.y_tmp, &mut self.k[1]);
        let mut d2 = T::zero();
        for i in 0..dim {
            let sc = T::one() + y[i].abs();
            let r = (self.k[1][i] - self.k[0][i]) / sc;
            d2 = d2 + r * r;
        }
        let d2 = (d2 / real(dim as f64)).sqrt() / h0;
        let dmax = d1.max(d2);
        let h1 = if dmax > real(1e-30) {
            (tol / dmax).powf(real(0.2))
        } else {
            h0 * real(100.0)
        };
        (h0 * real(100.0)).min(h1).min(span).max(real(1e-12))
    }
}

/// Integrates a system through a sequence of sample times, invoking `visit`
/// at every sample (including `t0` first).
pub fn integrate_sampled<T: Real, S: OdeSystem<T>>(
    sys: &S,
    t0: T,
    y0: &[T],
    samples: &[T],
    tol: T,
    mut visit: impl FnMut(T, &[T]),
) -> Result<()> {
    let mut stepper = Dopri5::new(sys.dim());
    let mut y = y0.to_vec();
    let mut t = t0;
    visit(t, &y);
    for &ts in samples {
        stepper.integrate(sys, t, ts, &mut y, tol)?;
        t = ts;
        visit(t, &y);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Sho;
    impl OdeSystem<f64> for Sho {
        fn dim(&self) -> usize {
            2
        }
        fn rhs(&self, _t: f64, y: &[f64], dy: &mut [f64]) {
            dy[0] = y[1];
            dy[1] = -y[0];
        }
    }

    #[test]
    fn harmonic_oscillator_full_period() {
        let mut stepper = Dopri5::new(2);
        let mut y = [1.0, 0.0];
        stepper
            .integrate(&Sho, 0.0, 2.0 * std::f64::consts::PI, &mut y, 1e-10)
            .unwrap();
        assert!((y[0] - 1.0).abs() < 1e-8, "y = {y:?}");
        assert!(y[1].abs() < 1e-8, "y = {y:?}");
    }

    #[test]
    fn backward_integration_matches_inverse() {
        let mut stepper = Dopri5::new(2);
        let mut y = [0.3, -0.7];
        stepper.integrate(&Sho, 0.0, 5.0, &mut y, 1e-11).unwrap();
        stepper.integrate(&Sho, 5.0, 0.0, &mut y, 1e-11).unwrap();
        assert!((y[0] - 0.3).abs() < 1e-9);
        assert!((y[1] + 0.7).abs() < 1e-9);
    }

    #[test]
    fn stiff_blowup_reports_underflow() {
        // y' = y^2 from y(0) = 1 blows up at t = 1.
        let sys = FnSystem {
            dim: 1,
            f: |_t: f64, y: &[f64], dy: &mut [f64]| dy[0] = y[0] * y[0],
        };
        let mut stepper = Dopri5::new(1);
        let mut y = [1.0];
        let err = stepper.integrate(&sys, 0.0, 2.0, &mut y, 1e-10).unwrap_err();
        match err {
            Error::IntegrationFailure { .. } | Error::Numeric(_) => {}
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn f32_scalar_integrates() {
        let sys = FnSystem {
            dim: 1,
            f: |_t: f32, y: &[f32], dy: &mut [f32]| dy[0] = -y[0],
        };
        let mut stepper = Dopri5::<f32>::new(1);
        let mut y = [1.0f32];
        stepper.integrate(&sys, 0.0, 1.0, &mut y, 1e-5).unwrap();
        assert!((y[0] - (-1.0f32).exp()).abs() < 1e-4);
    }
}
