use num_traits::Float;

pub(crate) const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// `e^y - 1 - y`, accurate for small `|y|`.
pub(crate) fn expm1_minus_linear(y: f64) -> f64 {
    if y.abs() < 0.05 {
        // Taylor series; terms shrink by at least 1/20 each step.
        let mut term = y * y / 2.0;
        let mut acc = term;
        let mut k = 3.0;
        while term.abs() > 1e-18 * acc.abs() && k < 30.0 {
            term *= y / k;
            acc += term;
            k += 1.0;
        }
        acc
    } else {
        y.exp_m1() - y
    }
}

/// `ln(1 + m) - m`, accurate for small `|m|`.
pub(crate) fn ln1p_minus_linear(m: f64) -> f64 {
    if m.abs() < 0.05 {
        let mut power = m * m;
        let mut acc = -power / 2.0;
        let mut k = 3.0;
        loop {
            power *= -m;
            let term = -power / k;
            acc += term;
            if term.abs() <= 1e-18 * acc.abs() || k > 40.0 {
                break;
            }
            k += 1.0;
        }
        acc
    } else {
        m.ln_1p() - m
    }
}

/// Probabilists' Hermite polynomial `He_m(y)`.
pub(crate) fn hermite_e(m: u32, y: f64) -> f64 {
    let (mut prev, mut cur) = (1.0, y);
    if m == 0 {
        return prev;
    }
    for k in 1..m {
        let next = y * cur - f64::from(k) * prev;
        prev = cur;
        cur = next;
    }
    cur
}

/// `m`-th derivative of the standard normal density: `(-1)^m He_m(y) φ(y)`.
pub(crate) fn std_normal_derivative(m: u32, y: f64) -> f64 {
    let pdf = FRAC_1_SQRT_2PI * (-0.5 * y * y).exp();
    let sign = if m.is_multiple_of(2) { 1.0 } else { -1.0 };
    sign * hermite_e(m, y) * pdf
}

pub(crate) fn factorial(k: u32) -> f64 {
    (1..=k).fold(1.0, |acc, i| acc * f64::from(i))
}

/// `x^{-s} γ(s, x) = ∫_0^1 w^{s-1} e^{-w x} dw` for `s > 0`, `x ≥ 0`.
///
/// Power series below `x = s + 1`, Lentz continued fraction for the upper
/// function above it.
pub(crate) fn scaled_lower_gamma(s: f64, x: f64) -> f64 {
    if x == 0.0 {
        return 1.0 / s;
    }
    if x < s + 1.0 {
        let mut term = 1.0 / s;
        let mut acc = term;
        let mut ap = s;
        for _ in 0..10_000 {
            ap += 1.0;
            term *= x / ap;
            acc += term;
            if term < acc * 1e-17 {
                break;
            }
        }
        return (-x).exp() * acc;
    }
    const TINY: f64 = 1e-300;
    let mut b = x + 1.0 - s;
    let mut c = 1.0 / TINY;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..10_000 {
        let an = -f64::from(i) * (f64::from(i) - s);
        b += 2.0;
        d = an * d + b;
        if d.abs() < TINY {
            d = TINY;
        }
        c = b + an / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < 1e-16 {
            break;
        }
    }
    // Γ(s) x^{-s} - x^{-s} Γ(s, x)
    (libm::lgamma(s) - s * x.ln()).exp() - (-x).exp() * h
}
