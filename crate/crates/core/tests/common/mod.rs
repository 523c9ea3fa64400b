//! Independent reference values shared by the integration tests.
#![allow(dead_code)]

use std::f64::consts::PI;

/// `|S^{n-2}| ∫_0^{theta0} sin^{n-2}` in closed form for n = 3, 4, 5.
pub fn alpha_closed_form(n: usize, theta0: f64) -> f64 {
    let c = theta0.cos();
    match n {
        3 => 2.0 * PI * (1.0 - c),
        4 => 4.0 * PI * (theta0 / 2.0 - (2.0 * theta0).sin() / 4.0),
        5 => 2.0 * PI * PI * (2.0 / 3.0 - c + c * c * c / 3.0),
        _ => panic!("no closed form for n = {n}"),
    }
}

/// Composite Simpson rule with `m` (even) intervals.
pub fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, m: usize) -> f64 {
    let h = (b - a) / m as f64;
    let mut s = f(a) + f(b);
    for i in 1..m {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(a + i as f64 * h);
    }
    s * h / 3.0
}

/// Sixth-order central first and second derivatives of `f` at `x`.
fn derivatives<F: Fn(f64) -> f64>(f: &F, x: f64, h: f64) -> (f64, f64) {
    let p = |k: f64| f(x + k * h);
    let d1 = (-p(-3.0) + 9.0 * p(-2.0) - 45.0 * p(-1.0) + 45.0 * p(1.0) - 9.0 * p(2.0) + p(3.0)) / (60.0 * h);
    let d2 = (2.0 * p(-3.0) - 27.0 * p(-2.0) + 270.0 * p(-1.0) - 490.0 * p(0.0) + 270.0 * p(1.0)
        - 27.0 * p(2.0)
        + 2.0 * p(3.0))
        / (180.0 * h * h);
    (d1, d2)
}

/// Mean curvature of the hypersurface of revolution whose meridian is
/// `θ ↦ (ρ sin θ, ρ cos θ)`, from the plane-curve curvature of the meridian
/// and the rotational curvature `N_x / x`. `rho` must extend smoothly past
/// the ends (even across the axis).
pub fn revolution_mean_curvature<F: Fn(f64) -> f64>(n: usize, rho: F, theta: f64) -> f64 {
    let x = |t: f64| rho(t) * t.sin();
    let z = |t: f64| rho(t) * t.cos();
    let h = 1e-3;
    let (x1, x2) = derivatives(&x, theta, h);
    let (z1, z2) = derivatives(&z, theta, h);
    let speed = (x1 * x1 + z1 * z1).sqrt();
    let meridian = (x2 * z1 - z2 * x1) / speed.powi(3);
    let rotational = if theta.abs() < 1e-12 {
        meridian
    } else {
        -z1 / speed / x(theta)
    };
    meridian + (n as f64 - 2.0) * rotational
}

/// Capacity of the sphere `|x| = R` in the half-space for the metric
/// `u(|x|)^{4/(n-2)} δ` with a radial factor: `1 / ((n-2) ∫_R^∞ r^{1-n} u^{-2} dr)`.
pub fn radial_conformal_capacity<F: Fn(f64) -> f64>(n: usize, radius: f64, u: F) -> f64 {
    // t = R / r maps [R, ∞) to (0, 1]
    let integral = simpson(
        |t: f64| {
            if t == 0.0 {
                if n == 3 { 1.0 } else { 0.0 }
            } else {
                t.powi(n as i32 - 3) / u(radius / t).powi(2)
            }
        },
        0.0,
        1.0,
        4000,
    ) * radius.powi(2 - n as i32);
    1.0 / ((n as f64 - 2.0) * integral)
}

/// Least-squares slope of `log y` against `log x`.
pub fn log_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    let k = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / k;
    let my = ly.iter().sum::<f64>() / k;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

/// Observed order from errors at two resolutions differing by a factor 2.
pub fn observed_order(coarse_err: f64, fine_err: f64) -> f64 {
    (coarse_err / fine_err).log2()
}
