//! Double-double arithmetic (about 32 significant digits), used where the
//! truncated covariance is too ill-conditioned for `f64`.

use std::ops::{Add, Div, Mul, Neg, Sub};

#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Default)]
pub(crate) struct Dd {
    pub hi: f64,
    pub lo: f64,
}

// π and ln 2 as unevaluated sums of two doubles
const PI: Dd = Dd {
    hi: std::f64::consts::PI,
    lo: 1.2246467991473532e-16,
};
const LN_2: Dd = Dd {
    hi: std::f64::consts::LN_2,
    lo: 2.3190468138462996e-17,
};

fn two_sum(a: f64, b: f64) -> Dd {
    let s = a + b;
    let bb = s - a;
    let e = (a - (s - bb)) + (b - bb);
    Dd { hi: s, lo: e }
}

fn quick_two_sum(a: f64, b: f64) -> Dd {
    let s = a + b;
    Dd { hi: s, lo: b - (s - a) }
}

fn two_prod(a: f64, b: f64) -> Dd {
    let p = a * b;
    Dd {
        hi: p,
        lo: a.mul_add(b, -p),
    }
}

impl Dd {
    pub const ZERO: Dd = Dd { hi: 0.0, lo: 0.0 };
    pub const ONE: Dd = Dd { hi: 1.0, lo: 0.0 };

    pub fn from_f64(x: f64) -> Self {
        Dd { hi: x, lo: 0.0 }
    }

    pub fn pi() -> Self {
        PI
    }

    pub fn to_f64(self) -> f64 {
        self.hi + self.lo
    }

    pub fn sqrt(self) -> Self {
        if self.hi <= 0.0 {
            return Dd::ZERO;
        }
        // one Newton step from the f64 root doubles the precision
        let s = self.hi.sqrt();
        let r = self - two_prod(s, s);
        quick_two_sum(s, r.hi / (2.0 * s))
    }

    pub fn scale(self, f: f64) -> Self {
        self * Dd::from_f64(f)
    }

    /// Exact scaling by a power of two (the result may lose the low word to
    /// underflow).
    fn ldexp(self, k: i32) -> Self {
        let f = 2f64.powi(k);
        Dd {
            hi: self.hi * f,
            lo: self.lo * f,
        }
    }

    pub fn exp(self) -> Self {
        if self.hi < -745.0 {
            return Dd::ZERO;
        }
        let k = (self.hi / LN_2.hi).round();
        let r = self - LN_2.scale(k);
        let mut term = Dd::ONE;
        let mut sum = Dd::ONE;
        for i in 1..40 {
            term = term * r / Dd::from_f64(i as f64);
            sum = sum + term;
            if term.hi.abs() < 1e-34 * sum.hi.abs() {
                break;
            }
        }
        // split the scaling so neither factor over- or underflows early
        let k = k as i32;
        let half = k / 2;
        sum.ldexp(half).ldexp(k - half)
    }

    /// `e^x - 1`, accurate for small `|x|`.
    pub fn exp_m1(self) -> Self {
        if self.hi.abs() > 0.5 {
            return self.exp() - Dd::ONE;
        }
        let mut term = self;
        let mut sum = self;
        for i in 2..60 {
            term = term * self / Dd::from_f64(i as f64);
            sum = sum + term;
            if term.hi.abs() < 1e-34 * sum.hi.abs() {
                break;
            }
        }
        sum
    }

    /// Alternating series `Σ (-1)^i x^(p+2i)/(p+2i)!` starting from `first`.
    fn trig_series(x: Dd, first: Dd, p: u32) -> Dd {
        let x2 = x * x;
        let mut term = first;
        let mut sum = first;
        let mut k = p;
        for _ in 0..40 {
            term = -(term * x2 / Dd::from_f64(((k + 1) * (k + 2)) as f64));
            k += 2;
            sum = sum + term;
            if term.hi.abs() < 1e-34 * sum.hi.abs().max(1e-300) {
                break;
            }
        }
        sum
    }

    pub fn sin(self) -> Self {
        let half_pi = PI.scale(0.5);
        let q = (self.hi / half_pi.hi).round();
        let r = self - half_pi.scale(q);
        match (q as i64).rem_euclid(4) {
            0 => Self::trig_series(r, r, 1),
            1 => Self::trig_series(r, Dd::ONE, 0),
            2 => -Self::trig_series(r, r, 1),
            _ => -Self::trig_series(r, Dd::ONE, 0),
        }
    }
}

impl Add for Dd {
    type Output = Dd;
    fn add(self, o: Dd) -> Dd {
        let s = two_sum(self.hi, o.hi);
        let t = two_sum(self.lo, o.lo);
        let s = quick_two_sum(s.hi, s.lo + t.hi);
        quick_two_sum(s.hi, s.lo + t.lo)
    }
}

impl Neg for Dd {
    type Output = Dd;
    fn neg(self) -> Dd {
        Dd {
            hi: -self.hi,
            lo: -self.lo,
        }
    }
}

impl Sub for Dd {
    type Output = Dd;
    fn sub(self, o: Dd) -> Dd {
        self + (-o)
    }
}

impl Mul for Dd {
    type Output = Dd;
    fn mul(self, o: Dd) -> Dd {
        let p = two_prod(self.hi, o.hi);
        quick_two_sum(p.hi, p.lo + (self.hi * o.lo + self.lo * o.hi))
    }
}

impl Div for Dd {
    type Output = Dd;
    fn div(self, o: Dd) -> Dd {
        // long division with three f64 quotient digits
        let q1 = self.hi / o.hi;
        let r = self - o * Dd::from_f64(q1);
        let q2 = r.hi / o.hi;
        let r = r - o * Dd::from_f64(q2);
        let q3 = r.hi / o.hi;
        quick_two_sum(q1, q2) + Dd::from_f64(q3)
    }
}
