//! Bessel functions of the first kind, real order.
//!
//! Reference evaluator for the exact-cone radial solutions
//! `sqrt(r) J_nu(k r)`: the radial integrators are calibrated against these
//! values but never call them, so the two routes stay independent.

/// `ln Gamma(x)` for `x > 0` (Lanczos approximation, g = 7).
pub fn ln_gamma(x: f64) -> f64 {
    const G: f64 = 7.0;
    #[allow(clippy::excessive_precision)]
    const COEFF: [f64; 9] = [
        0.999_999_999_999_809_93,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_13,
        -176.615_029_162_140_59,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_571_6e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        // Reflection: Gamma(x) Gamma(1-x) = pi / sin(pi x).
        return std::f64::consts::PI.ln() - (std::f64::consts::PI * x).sin().abs().ln()
            - ln_gamma(1.0 - x);
    }
    let z = x - 1.0;
    let mut acc = COEFF[0];
    for (i, &c) in COEFF.iter().enumerate().skip(1) {
        acc += c / (z + i as f64);
    }
    let t = z + G + 0.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (z + 0.5) * t.ln() - t + acc.ln()
}

/// `Gamma(x)` for moderate `x > 0`.
pub fn gamma(x: f64) -> f64 {
    ln_gamma(x).exp()
}

const RENORM: f64 = 1e250;

/// `(J_nu(x), J_nu'(x))` for real order `nu >= 0` and `x >= 0`.
///
/// Downward three-term recurrence (Miller's algorithm) along the order
/// ladder `nu0 + j`, normalized with the Neumann-type sum
/// `sum_k (nu0 + 2k) Gamma(nu0 + k)/k! J_{nu0+2k}(x) = (x/2)^{nu0}`.
pub fn j_nu(nu: f64, x: f64) -> (f64, f64) {
    assert!(nu >= 0.0 && x >= 0.0, "j_nu requires nu >= 0, x >= 0");
    if x == 0.0 {
        let j = if nu == 0.0 { 1.0 } else { 0.0 };
        let jp = if nu == 1.0 { 0.5 } else { 0.0 };
        return (j, jp);
    }
    let n = nu.floor() as usize;
    let nu0 = nu - n as f64;

    // Start the recurrence well inside the decaying-order regime; the trial
    // solution sheds its irregular component like exp(-c d^{3/2}/sqrt(x))
    // over d orders above x.
    let start_order = (x + 3.0 * x.sqrt() + 30.0).max(nu + 20.0);
    let mut m = (start_order - nu0).ceil() as usize;
    if m % 2 == 1 {
        m += 1; // keep the even-offset ladder aligned for the normalization sum
    }

    // Normalization coefficients c_k = (nu0 + 2k) Gamma(nu0 + k)/k! via the
    // ratio recursion c_{k+1}/c_k = (nu0+2k+2)(nu0+k) / ((nu0+2k)(k+1)),
    // seeded with c_0 = Gamma(nu0 + 1) (the nu0 -> 0 limit of nu0 Gamma(nu0)).
    let kmax = m / 2;
    let mut coeff = vec![0.0f64; kmax + 1];
    coeff[0] = gamma(nu0 + 1.0);
    if kmax >= 1 {
        // c_1 = (nu0 + 2) Gamma(nu0 + 1).
        coeff[1] = (nu0 + 2.0) * gamma(nu0 + 1.0);
        for k in 1..kmax {
            let kf = k as f64;
            coeff[k + 1] =
                coeff[k] * (nu0 + 2.0 * kf + 2.0) * (nu0 + kf) / ((nu0 + 2.0 * kf) * (kf + 1.0));
        }
    }

    let mut jp1 = 0.0f64; // trial J at order nu0 + j + 1
    let mut j = 1e-30f64; // trial J at order nu0 + j
    let mut sum = 0.0f64;
    let mut target = 0.0f64;
    let mut target_up = 0.0f64;
    for jj in (0..=m).rev() {
        let order = nu0 + jj as f64;
        if jj % 2 == 0 {
            sum += coeff[jj / 2] * j;
        }
        if jj == n {
            target = j;
        }
        if jj == n + 1 {
            target_up = j;
        }
        if jj > 0 {
            let jm1 = (2.0 * order / x) * j - jp1;
            jp1 = j;
            j = jm1;
            if j.abs() > RENORM {
                j /= RENORM;
                jp1 /= RENORM;
                sum /= RENORM;
                target /= RENORM;
                target_up /= RENORM;
            }
        }
    }

    // sum * scale = (x/2)^{nu0}; work in logs to survive large nu0 ladders.
    let scale = (nu0 * (x / 2.0).ln() - sum.abs().ln()).exp() * sum.signum();
    let j_nu = target * scale;
    let j_nu_up = target_up * scale;
    let deriv = (nu / x) * j_nu - j_nu_up;
    (j_nu, deriv)
}
