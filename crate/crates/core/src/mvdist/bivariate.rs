//! Deterministic bivariate normal and t probabilities.
//!
//! The normal routine is the Drezner-Wesolowsky/Genz Gauss-Legendre scheme;
//! the t routine for integer degrees of freedom is the Dunnett-Sobel series
//! as arranged by Genz. Both are accurate to roughly 1e-14.

use std::f64::consts::PI;

use crate::normal;
use crate::quad;

const TWO_PI: f64 = 2.0 * PI;

/// `P(X > h, Y > k)` for a standard bivariate normal with correlation `r`.
pub fn bvn_upper(h: f64, k: f64, r: f64) -> f64 {
    if h == f64::INFINITY || k == f64::INFINITY {
        return 0.0;
    }
    if h == f64::NEG_INFINITY {
        return if k == f64::NEG_INFINITY { 1.0 } else { normal::sf(k) };
    }
    if k == f64::NEG_INFINITY {
        return normal::sf(h);
    }
    let r = r.clamp(-1.0, 1.0);
    let (xs, ws) = if r.abs() < 0.3 {
        quad::gl6()
    } else if r.abs() < 0.75 {
        quad::gl12()
    } else {
        quad::gl20()
    };

    let mut hk = h * k;
    let mut bvn = 0.0;
    if r.abs() < 0.925 {
        let hs = (h * h + k * k) / 2.0;
        let asr = r.asin();
        for (&x, &w) in xs.iter().zip(ws) {
            let sn = (asr * (x + 1.0) / 2.0).sin();
            bvn += w * ((sn * hk - hs) / (1.0 - sn * sn)).exp();
        }
        bvn * asr / (2.0 * TWO_PI) + normal::sf(h) * normal::sf(k)
    } else {
        let mut k = k;
        if r < 0.0 {
            k = -k;
            hk = -hk;
        }
        if r.abs() < 1.0 {
            let a_s = (1.0 - r) * (1.0 + r);
            let mut a = a_s.sqrt();
            let bs = (h - k) * (h - k);
            let c = (4.0 - hk) / 8.0;
            let d = (12.0 - hk) / 16.0;
            let asr = -(bs / a_s + hk) / 2.0;
            if asr > -100.0 {
                bvn = a
                    * asr.exp()
                    * (1.0 - c * (bs - a_s) * (1.0 - d * bs / 5.0) / 3.0 + c * d * a_s * a_s / 5.0);
            }
            if hk > -100.0 {
                let b = bs.sqrt();
                bvn -= (-hk / 2.0).exp()
                    * TWO_PI.sqrt()
                    * normal::cdf(-b / a)
                    * b
                    * (1.0 - c * bs * (1.0 - d * bs / 5.0) / 3.0);
            }
            a /= 2.0;
            for (&x, &w) in xs.iter().zip(ws) {
                let x2 = (a * (x + 1.0)).powi(2);
                let rs = (1.0 - x2).sqrt();
                let asr = -(bs / x2 + hk) / 2.0;
                if asr > -100.0 {
                    bvn += a
                        * w
                        * asr.exp()
                        * ((-hk * x2 / (2.0 * (1.0 + rs).powi(2))).exp() / rs
                            - (1.0 + c * x2 * (1.0 + d * x2)));
                }
            }
            bvn = -bvn / TWO_PI;
        }
        if r > 0.0 {
            bvn + normal::sf(h.max(k))
        } else {
            let mut out = -bvn;
            if k > h {
                out += if h < 0.0 {
                    normal::cdf(k) - normal::cdf(h)
                } else {
                    normal::sf(h) - normal::sf(k)
                };
            }
            out
        }
    }
}

/// `P(X <= h, Y <= k)` for a standard bivariate normal.
pub fn bvn_lower(h: f64, k: f64, r: f64) -> f64 {
    bvn_upper(-h, -k, r).clamp(0.0, 1.0)
}

/// `P(T1 <= h, T2 <= k)` for a standard bivariate t with integer `nu >= 1`.
pub fn bvt_lower(nu: u64, h: f64, k: f64, r: f64) -> f64 {
    const EPS: f64 = 1e-15;
    let nuf = nu as f64;
    if h == f64::NEG_INFINITY || k == f64::NEG_INFINITY {
        return 0.0;
    }
    if h == f64::INFINITY {
        return normal::t_cdf(k, nuf);
    }
    if k == f64::INFINITY {
        return normal::t_cdf(h, nuf);
    }
    if 1.0 - r <= EPS {
        return normal::t_cdf(h.min(k), nuf);
    }
    if r + 1.0 <= EPS {
        return if h > -k {
            normal::t_cdf(h, nuf) - normal::t_cdf(-k, nuf)
        } else {
            0.0
        };
    }
    let snu = nuf.sqrt();
    let ors = 1.0 - r * r;
    let hrk = h - r * k;
    let krh = k - r * h;
    let (xnhk, xnkh) = if hrk.abs() + ors > 0.0 {
        (
            hrk * hrk / (hrk * hrk + ors * (nuf + k * k)),
            krh * krh / (krh * krh + ors * (nuf + h * h)),
        )
    } else {
        (0.0, 0.0)
    };
    let hs = (h - r * k).signum_or_one();
    let ks = (k - r * h).signum_or_one();
    let mut bvt;
    if nu % 2 == 0 {
        bvt = ors.sqrt().atan2(-r) / TWO_PI;
        let mut gmph = h / (16.0 * (nuf + h * h)).sqrt();
        let mut gmpk = k / (16.0 * (nuf + k * k)).sqrt();
        let mut btnckh = 2.0 * xnkh.sqrt().atan2((1.0 - xnkh).sqrt()) / PI;
        let mut btpdkh = 2.0 * (xnkh * (1.0 - xnkh)).sqrt() / PI;
        let mut btnchk = 2.0 * xnhk.sqrt().atan2((1.0 - xnhk).sqrt()) / PI;
        let mut btpdhk = 2.0 * (xnhk * (1.0 - xnhk)).sqrt() / PI;
        for j in 1..=nu / 2 {
            let jf = j as f64;
            bvt += gmph * (1.0 + ks * btnckh);
            bvt += gmpk * (1.0 + hs * btnchk);
            btnckh += btpdkh;
            btpdkh = 2.0 * jf * btpdkh * (1.0 - xnkh) / (2.0 * jf + 1.0);
            btnchk += btpdhk;
            btpdhk = 2.0 * jf * btpdhk * (1.0 - xnhk) / (2.0 * jf + 1.0);
            gmph = gmph * (2.0 * jf - 1.0) / (2.0 * jf * (1.0 + h * h / nuf));
            gmpk = gmpk * (2.0 * jf - 1.0) / (2.0 * jf * (1.0 + k * k / nuf));
        }
    } else {
        let qhrk = (h * h + k * k - 2.0 * r * h * k + nuf * ors).sqrt();
        let hkrn = h * k + r * nuf;
        let hkn = h * k - nuf;
        let hpk = h + k;
        bvt = (-snu * (hkn * qhrk + hpk * hkrn)).atan2(hkn * hkrn - nuf * hpk * qhrk) / TWO_PI;
        if bvt < -EPS {
            bvt += 1.0;
        }
        let mut gmph = h / (TWO_PI * snu * (1.0 + h * h / nuf));
        let mut gmpk = k / (TWO_PI * snu * (1.0 + k * k / nuf));
        let mut btnckh = xnkh.sqrt();
        let mut btpdkh = btnckh;
        let mut btnchk = xnhk.sqrt();
        let mut btpdhk = btnchk;
        for j in 1..=(nu - 1) / 2 {
            let jf = j as f64;
            bvt += gmph * (1.0 + ks * btnckh);
            bvt += gmpk * (1.0 + hs * btnchk);
            btpdkh = (2.0 * jf - 1.0) * btpdkh * (1.0 - xnkh) / (2.0 * jf);
            btnckh += btpdkh;
            btpdhk = (2.0 * jf - 1.0) * btpdhk * (1.0 - xnhk) / (2.0 * jf);
            btnchk += btpdhk;
            gmph = 2.0 * jf * gmph / ((2.0 * jf + 1.0) * (1.0 + h * h / nuf));
            gmpk = 2.0 * jf * gmpk / ((2.0 * jf + 1.0) * (1.0 + k * k / nuf));
        }
    }
    bvt.clamp(0.0, 1.0)
}

trait SignumOrOne {
    fn signum_or_one(self) -> f64;
}

impl SignumOrOne for f64 {
    /// Fortran `SIGN(1, x)`: +1 for zero.
    fn signum_or_one(self) -> f64 {
        if self < 0.0 {
            -1.0
        } else {
            1.0
        }
    }
}
