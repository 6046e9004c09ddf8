//! Globally adaptive Gauss-Kronrod (7/15) quadrature for small vectors of
//! integrands sharing one set of abscissae.

use crate::error::{Error, Result};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
// Gauss weights for the odd-indexed Kronrod nodes (1, 3, 5, 7).
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

#[derive(Debug, Clone, Copy)]
struct Segment<const K: usize> {
    a: f64,
    b: f64,
    value: [f64; K],
    error: [f64; K],
}

fn gk15<const K: usize>(f: &impl Fn(f64) -> [f64; K], a: f64, b: f64) -> Segment<K> {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let mut kron = [0.0; K];
    let mut gauss = [0.0; K];
    let fc = f(c);
    for k in 0..K {
        kron[k] = WGK[7] * fc[k];
        gauss[k] = WG[3] * fc[k];
    }
    for j in 0..7 {
        let dx = h * XGK[j];
        let f1 = f(c - dx);
        let f2 = f(c + dx);
        for k in 0..K {
            let s = f1[k] + f2[k];
            kron[k] += WGK[j] * s;
            if j % 2 == 1 {
                gauss[k] += WG[j / 2] * s;
            }
        }
    }
    let mut value = [0.0; K];
    let mut error = [0.0; K];
    for k in 0..K {
        value[k] = kron[k] * h;
        error[k] = ((kron[k] - gauss[k]) * h).abs();
    }
    Segment { a, b, value, error }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Integral<const K: usize> {
    pub value: [f64; K],
    pub error: [f64; K],
    pub segments: usize,
}

/// Integrate `f` over `[breaks[0], breaks[last]]`, starting from the given
/// partition and bisecting the worst segment until, for every component,
/// the summed error estimate is at most `allowed(value)[k]`.
pub fn integrate<const K: usize>(
    f: impl Fn(f64) -> [f64; K],
    breaks: &[f64],
    allowed: impl Fn(&[f64; K]) -> [f64; K],
    max_segments: usize,
) -> Result<Integral<K>> {
    if breaks.len() < 2 || breaks.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::InvalidParameter(
            "quadrature breakpoints must be strictly increasing".into(),
        ));
    }
    let mut segs: Vec<Segment<K>> = breaks.windows(2).map(|w| gk15(&f, w[0], w[1])).collect();
    loop {
        let mut value = [0.0; K];
        let mut error = [0.0; K];
        for s in &segs {
            for k in 0..K {
                value[k] += s.value[k];
                error[k] += s.error[k];
            }
        }
        let tol = allowed(&value);
        if (0..K).all(|k| error[k] <= tol[k]) {
            return Ok(Integral {
                value,
                error,
                segments: segs.len(),
            });
        }
        if segs.len() >= max_segments || value.iter().any(|v| !v.is_finite()) {
            return Err(Error::NumericalFailure(format!(
                "adaptive quadrature did not converge after {} segments (error {error:?}, allowed {tol:?})",
                segs.len()
            )));
        }
        let worst = segs
            .iter()
            .enumerate()
            .map(|(idx, s)| {
                let score = (0..K)
                    .map(|k| {
                        if tol[k] > 0.0 {
                            s.error[k] / tol[k]
                        } else {
                            s.error[k]
                        }
                    })
                    .fold(0.0, f64::max);
                (idx, score)
            })
            .max_by(|x, y| x.1.total_cmp(&y.1))
            .map(|(idx, _)| idx)
            .expect("at least one segment");
        let s = segs.swap_remove(worst);
        let mid = 0.5 * (s.a + s.b);
        if !(mid > s.a && mid < s.b) {
            return Err(Error::NumericalFailure(
                "adaptive quadrature exhausted floating-point resolution".into(),
            ));
        }
        segs.push(gk15(&f, s.a, mid));
        segs.push(gk15(&f, mid, s.b));
    }
}
