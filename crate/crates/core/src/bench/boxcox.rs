use serde::{Deserialize, Serialize};

pub const LAMBDA_RANGE: (f64, f64) = (-2.0, 2.0);
const SEARCH_TOL: f64 = 1e-6;

/// `(x^lambda - 1) / lambda`, or `ln x` at zero.
pub fn boxcox(x: f64, lambda: f64) -> f64 {
    let lx = x.ln();
    if lambda.abs() < 1e-12 {
        lx
    } else {
        (lambda * lx).exp_m1() / lambda
    }
}

/// Profile log-likelihood of a Box-Cox normal model for positive data.
pub fn profile_loglik(x: &[f64], lambda: f64) -> f64 {
    let n = x.len() as f64;
    let t: Vec<f64> = x.iter().map(|&v| boxcox(v, lambda)).collect();
    let mean = t.iter().sum::<f64>() / n;
    let var = t.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let log_jac: f64 = x.iter().map(|v| v.ln()).sum();
    -0.5 * n * var.ln() + (lambda - 1.0) * log_jac
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoxCoxFit {
    pub lambda: f64,
    /// The search failed and the log transform was used instead.
    pub fallback: bool,
}

/// Golden-section maximisation of the profile likelihood of `y + 1` over
/// [`LAMBDA_RANGE`].
pub fn fit_boxcox(counts: &[u64]) -> BoxCoxFit {
    let x: Vec<f64> = counts.iter().map(|&c| c as f64 + 1.0).collect();
    let fallback = BoxCoxFit { lambda: 0.0, fallback: true };
    if x.len() < 2 || x.iter().all(|&v| v == x[0]) {
        return fallback;
    }
    let f = |l: f64| profile_loglik(&x, l);
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = LAMBDA_RANGE;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while b - a > SEARCH_TOL {
        if !(fc.is_finite() && fd.is_finite()) {
            return fallback;
        }
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    let lambda = 0.5 * (a + b);
    if f(lambda).is_finite() {
        BoxCoxFit { lambda, fallback: false }
    } else {
        fallback
    }
}

pub fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma).powi(2);
        sbb += (y - mb).powi(2);
    }
    let r = sab / (saa * sbb).sqrt();
    r.is_finite().then_some(r)
}
