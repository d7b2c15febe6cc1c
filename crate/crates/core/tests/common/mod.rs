#![allow(dead_code, clippy::excessive_precision)]

/// Adaptive Gauss–Kronrod (7/15) quadrature on `[a, b]`.
pub fn integrate<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    adapt(f, a, b, tol, 0)
}

const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
];
const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

fn kronrod<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = fc * WGK[7];
    let mut g = fc * WG[3];
    for j in 0..7 {
        let x = h * XGK[j];
        let s = f(c - x) + f(c + x);
        k += WGK[j] * s;
        if j % 2 == 1 {
            g += WG[j / 2] * s;
        }
    }
    (k * h, (k - g).abs() * h)
}

fn adapt<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64, depth: usize) -> f64 {
    let (k, err) = kronrod(f, a, b);
    if err <= tol * k.abs().max(1e-300) || depth > 50 {
        return k;
    }
    let m = 0.5 * (a + b);
    adapt(f, a, m, tol, depth + 1) + adapt(f, m, b, tol, depth + 1)
}

/// Integral over the real line of a unimodal integrand peaked near `center`
/// with width roughly `scale`, using geometrically growing panels.
pub fn integrate_line<F: Fn(f64) -> f64>(f: &F, center: f64, scale: f64, tol: f64) -> f64 {
    let mut total = 0.0;
    for dir in [-1.0, 1.0] {
        let mut lo = 0.0;
        let mut hi = scale / 16.0;
        for _ in 0..200 {
            let part = integrate(f, center + dir * lo, center + dir * hi, tol) * dir;
            total += part;
            if part.abs() < 1e-18 * total.abs() && hi > 64.0 * scale {
                break;
            }
            lo = hi;
            hi *= 1.5;
        }
    }
    total
}

/// Golden-section search for the maximiser of a unimodal function.
pub fn argmax<F: Fn(f64) -> f64>(f: &F, mut a: f64, mut b: f64) -> f64 {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..300 {
        let c = b - r * (b - a);
        let d = a + r * (b - a);
        if f(c) > f(d) {
            b = d;
        } else {
            a = c;
        }
    }
    0.5 * (a + b)
}

/// Two-sided Kolmogorov–Smirnov distance between a sample and a CDF.
pub fn ks_distance<F: Fn(f64) -> f64>(sample: &mut [f64], cdf: F) -> f64 {
    sample.sort_by(f64::total_cmp);
    let n = sample.len() as f64;
    sample
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let c = cdf(x);
            (c - i as f64 / n).abs().max(((i + 1) as f64 / n - c).abs())
        })
        .fold(0.0, f64::max)
}

#[test]
fn quadrature_self_check() {
    let gauss = |x: f64| (-0.5 * x * x).exp();
    let v = integrate_line(&gauss, 0.3, 1.0, 1e-13);
    assert!((v - (2.0 * std::f64::consts::PI).sqrt()).abs() < 1e-11);
    let v = integrate(&|x: f64| x.sin(), 0.0, std::f64::consts::PI, 1e-13);
    assert!((v - 2.0).abs() < 1e-12);
}

/// Visits every set partition of `0..n` as a restricted growth string.
pub fn for_each_partition(n: usize, f: &mut impl FnMut(&[usize])) {
    fn rec(labels: &mut Vec<usize>, n: usize, max: usize, f: &mut impl FnMut(&[usize])) {
        if labels.len() == n {
            f(labels);
            return;
        }
        for l in 0..=max + 1 {
            labels.push(l);
            rec(labels, n, max.max(l), f);
            labels.pop();
        }
    }
    let mut labels = vec![0];
    if n == 0 {
        return;
    }
    rec(&mut labels, n, 0, f);
}

/// Probability of a partition under sequential Chinese-restaurant seating.
pub fn crp_probability(labels: &[usize], alpha: f64) -> f64 {
    let mut sizes: Vec<usize> = Vec::new();
    let mut p = 1.0;
    for (i, &l) in labels.iter().enumerate() {
        if l == sizes.len() {
            p *= alpha / (alpha + i as f64);
            sizes.push(1);
        } else {
            p *= sizes[l] as f64 / (alpha + i as f64);
            sizes[l] += 1;
        }
    }
    p
}

/// `log ∫ prod N(r | mu, s^2) N(mu | 0, tau^2) dmu` by quadrature, with the
/// integrand rescaled by its maximum to avoid underflow.
pub fn quadrature_log_marginal(r: &[f64], sigma: &[f64], tau: f64) -> f64 {
    use dpmbart_core::dist::ln_normal_pdf;
    let log_f = |mu: f64| {
        ln_normal_pdf(mu, 0.0, tau) + r.iter().zip(sigma).map(|(&x, &s)| ln_normal_pdf(x, mu, s)).sum::<f64>()
    };
    let lo = r.iter().cloned().fold(-5.0 * tau, f64::min);
    let hi = r.iter().cloned().fold(5.0 * tau, f64::max);
    let peak = argmax(&log_f, lo - 1.0, hi + 1.0);
    let top = log_f(peak);
    let width = sigma.iter().map(|s| 1.0 / (s * s)).sum::<f64>() + 1.0 / (tau * tau);
    let scale = width.powf(-0.5);
    let f = |mu: f64| (log_f(mu) - top).exp();
    top + integrate_line(&f, peak, scale, 1e-12).ln()
}
