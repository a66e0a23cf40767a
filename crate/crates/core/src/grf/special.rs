//! Special functions needed by the general-order Matérn correlation.

/// `ln Γ(x)` for `x > 0` (Lanczos, g = 7, n = 9).
pub fn ln_gamma(x: f64) -> f64 {
    const COEF: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        // reflection
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = COEF[0];
    let t = x + 7.5;
    for (i, c) in COEF.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

/// Modified Bessel function of the second kind `K_ν(x)` for `x > 0`, from
/// `K_ν(x) = ∫₀^∞ exp(-x cosh t) cosh(ν t) dt` with the trapezoid rule. The
/// integrand is analytic and decays double-exponentially, so a fixed step of
/// 0.05 is accurate to machine precision.
pub fn bessel_k(nu: f64, x: f64) -> f64 {
    assert!(x > 0.0, "bessel_k requires x > 0");
    let nu = nu.abs();
    let step = 0.05;
    let log_f = |t: f64| -x * t.cosh() + nu * t;
    // the integrand peaks where x sinh t = nu
    let peak = (nu / x).asinh();
    let log_peak = log_f(peak);
    let integrand = |t: f64| {
        let e = (-x * t.cosh()).exp();
        e * (nu * t).cosh()
    };
    let mut sum = 0.5 * integrand(0.0);
    let mut t = step;
    loop {
        let v = integrand(t);
        sum += v;
        if t > peak && log_f(t) < log_peak - 45.0 {
            break;
        }
        t += step;
    }
    sum * step
}
