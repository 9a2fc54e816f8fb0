//! Bivariate normal probabilities after Genz's `BVU` routine (Drezner and
//! Wesolowsky's method with Gauss-Legendre quadrature of 6, 12 or 20 points).

use std::f64::consts::PI;

use super::normal::cdf;

const W6: [f64; 3] = [0.1713244923791705, 0.3607615730481384, 0.4679139345726904];
const X6: [f64; 3] = [0.9324695142031522, 0.6612093864662647, 0.2386191860831970];
const W12: [f64; 6] = [
    0.04717533638651177,
    0.1069393259953183,
    0.1600783285433464,
    0.2031674267230659,
    0.2334925365383547,
    0.2491470458134029,
];
const X12: [f64; 6] = [
    0.9815606342467191,
    0.9041172563704750,
    0.7699026741943050,
    0.5873179542866171,
    0.3678314989981802,
    0.1252334085114692,
];
const W20: [f64; 10] = [
    0.01761400713915212,
    0.04060142980038694,
    0.06267204833410906,
    0.08327674157670475,
    0.1019301198172404,
    0.1181945319615184,
    0.1316886384491766,
    0.1420961093183821,
    0.1491729864726037,
    0.1527533871307259,
];
const X20: [f64; 10] = [
    0.9931285991850949,
    0.9639719272779138,
    0.9122344282513259,
    0.8391169718222188,
    0.7463319064601508,
    0.6360536807265150,
    0.5108670019508271,
    0.3737060887154196,
    0.2277858511416451,
    0.07652652113349733,
];

/// `P(X > h, Y > k)` for standard normals with correlation `r`.
pub fn upper(h: f64, k: f64, r: f64) -> f64 {
    if h == f64::INFINITY || k == f64::INFINITY {
        return 0.0;
    }
    if h == f64::NEG_INFINITY {
        return cdf(-k);
    }
    if k == f64::NEG_INFINITY {
        return cdf(-h);
    }
    let r = r.clamp(-1.0, 1.0);
    if r == 0.0 {
        return cdf(-h) * cdf(-k);
    }
    let (w, x): (&[f64], &[f64]) = if r.abs() < 0.3 {
        (&W6, &X6)
    } else if r.abs() < 0.75 {
        (&W12, &X12)
    } else {
        (&W20, &X20)
    };
    let tp = 2.0 * PI;
    let mut k = k;
    let mut hk = h * k;
    let mut bvn = 0.0;
    if r.abs() < 0.925 {
        let hs = (h * h + k * k) / 2.0;
        let asr = r.asin();
        for (wi, xi) in w.iter().zip(x) {
            for sn in [(asr * (1.0 - xi) / 2.0).sin(), (asr * (1.0 + xi) / 2.0).sin()] {
                bvn += wi * ((sn * hk - hs) / (1.0 - sn * sn)).exp();
            }
        }
        bvn = bvn * asr / (2.0 * tp) + cdf(-h) * cdf(-k);
    } else {
        if r < 0.0 {
            k = -k;
            hk = -hk;
        }
        if r.abs() < 1.0 {
            let as_ = (1.0 - r) * (1.0 + r);
            let mut a = as_.sqrt();
            let bs = (h - k) * (h - k);
            let c = (4.0 - hk) / 8.0;
            let d = (12.0 - hk) / 16.0;
            bvn = a * (-(bs / as_ + hk) / 2.0).exp()
                * (1.0 - c * (bs - as_) * (1.0 - d * bs / 5.0) / 3.0 + c * d * as_ * as_ / 5.0);
            if hk > -160.0 {
                let b = bs.sqrt();
                bvn -= (-hk / 2.0).exp() * tp.sqrt() * cdf(-b / a) * b * (1.0 - c * bs * (1.0 - d * bs / 5.0) / 3.0);
            }
            a /= 2.0;
            for (wi, xi) in w.iter().zip(x) {
                let xs = (a * (1.0 - xi)).powi(2);
                let rs = (1.0 - xs).sqrt();
                bvn += a
                    * wi
                    * ((-bs / (2.0 * xs) - hk / (1.0 + rs)).exp() / rs
                        - (-(bs / xs + hk) / 2.0).exp() * (1.0 + c * xs * (1.0 + d * xs)));
                let xs = (a * (1.0 + xi)).powi(2);
                let rs = (1.0 - xs).sqrt();
                bvn += a
                    * wi
                    * (-(bs / xs + hk) / 2.0).exp()
                    * ((-hk * xs / (2.0 * (1.0 + rs).powi(2))).exp() / rs - (1.0 + c * xs * (1.0 + d * xs)));
            }
            bvn = -bvn / tp;
        }
        if r > 0.0 {
            bvn += cdf(-h.max(k));
        } else {
            bvn = -bvn + (cdf(-h) - cdf(-k)).max(0.0);
        }
    }
    bvn.clamp(0.0, 1.0)
}

/// `P(X < x, Y < y)` for standard normals with correlation `r`.
pub fn cdf2(x: f64, y: f64, r: f64) -> f64 {
    upper(-x, -y, r)
}

/// `P(a1 < X < b1, a2 < Y < b2)` for standard normals with correlation `r`.
pub fn box_prob(a1: f64, b1: f64, a2: f64, b2: f64, r: f64) -> f64 {
    if !(b1 > a1 && b2 > a2) {
        return 0.0;
    }
    let p = upper(a1, a2, r) - upper(b1, a2, r) - upper(a1, b2, r) + upper(b1, b2, r);
    p.clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// `P(X < x, Y < y)` by composite Simpson on the conditional form.
    fn quadrature(x: f64, y: f64, r: f64) -> f64 {
        let lo = -12.0;
        let hi = x.min(12.0);
        let n = 40_000;
        let h = (hi - lo) / n as f64;
        let s = (1.0 - r * r).sqrt();
        let f = |t: f64| super::super::normal::pdf(t) * cdf((y - r * t) / s);
        let mut acc = f(lo) + f(hi);
        for i in 1..n {
            let t = lo + i as f64 * h;
            acc += if i % 2 == 1 { 4.0 } else { 2.0 } * f(t);
        }
        acc * h / 3.0
    }

    #[test]
    fn matches_quadrature() {
        for &r in &[-0.99, -0.95, -0.8, -0.5, -0.1, 0.2, 0.6, 0.9, 0.93, 0.999] {
            for &(x, y) in &[(0.0, 0.0), (1.3, -0.4), (-2.0, 1.7), (2.5, 2.5), (-0.7, -1.9)] {
                let got = cdf2(x, y, r);
                let want = quadrature(x, y, r);
                assert!((got - want).abs() < 1e-9, "r={r} x={x} y={y}: {got} vs {want}");
            }
        }
    }

    #[test]
    fn special_cases() {
        assert!((cdf2(0.0, 0.0, 0.5) - (0.25 + 0.5f64.asin() / (2.0 * PI))).abs() < 1e-14);
        assert!((cdf2(0.3, 0.8, 1.0) - cdf(0.3)).abs() < 1e-15);
        assert!((cdf2(0.3, 0.8, -1.0) - (cdf(0.3) - cdf(-0.8))).abs() < 1e-15);
        assert_eq!(cdf2(f64::NEG_INFINITY, 1.0, 0.3), 0.0);
        assert!((cdf2(f64::INFINITY, 1.0, 0.3) - cdf(1.0)).abs() < 1e-15);
        let total = box_prob(f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, 0.7);
        assert!((total - 1.0).abs() < 1e-15);
    }
}
