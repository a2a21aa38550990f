//! Symbolic limit of the Whitney (B) quotient along the cusp families.
//!
//! Along x = σ sᵖ, t = κ s on F = y² − t²x² + x³ = 0 the secant from
//! (0, 0, t) is (−x, −y, 0) and its product with ∇F is −x³, so
//!
//!   stat² = x⁶ / ((x² + y²)(F_x² + 4y² + F_t²)),  y² = t²x² − x³.
//!
//! Numerator and denominator are polynomials in s with rational
//! coefficients; the limit is read off their lowest-order terms.

use std::collections::BTreeMap;

#[derive(Clone, Copy, Debug, PartialEq)]
struct Rat(i128, i128);

fn gcd(a: i128, b: i128) -> i128 {
    if b == 0 {
        a.abs()
    } else {
        gcd(b, a % b)
    }
}

impl Rat {
    fn new(n: i128, d: i128) -> Rat {
        let g = gcd(n, d).max(1) * d.signum();
        Rat(n / g, d / g)
    }
    fn int(n: i128) -> Rat {
        Rat(n, 1)
    }
    fn add(self, o: Rat) -> Rat {
        Rat::new(self.0 * o.1 + o.0 * self.1, self.1 * o.1)
    }
    fn mul(self, o: Rat) -> Rat {
        Rat::new(self.0 * o.0, self.1 * o.1)
    }
    fn is_zero(self) -> bool {
        self.0 == 0
    }
    fn to_f64(self) -> f64 {
        self.0 as f64 / self.1 as f64
    }
}

/// Polynomial in s: exponent ↦ coefficient.
#[derive(Clone, Debug, Default)]
struct Poly(BTreeMap<u32, Rat>);

impl Poly {
    fn mono(c: Rat, e: u32) -> Poly {
        let mut m = BTreeMap::new();
        if !c.is_zero() {
            m.insert(e, c);
        }
        Poly(m)
    }
    fn add(&self, o: &Poly) -> Poly {
        let mut m = self.0.clone();
        for (&e, &c) in &o.0 {
            let v = m.get(&e).copied().unwrap_or(Rat::int(0)).add(c);
            if v.is_zero() {
                m.remove(&e);
            } else {
                m.insert(e, v);
            }
        }
        Poly(m)
    }
    fn mul(&self, o: &Poly) -> Poly {
        let mut out = Poly::default();
        for (&e1, &c1) in &self.0 {
            for (&e2, &c2) in &o.0 {
                out = out.add(&Poly::mono(c1.mul(c2), e1 + e2));
            }
        }
        out
    }
    fn scale(&self, c: Rat) -> Poly {
        self.mul(&Poly::mono(c, 0))
    }
    fn lowest(&self) -> Option<(u32, Rat)> {
        self.0.iter().next().map(|(&e, &c)| (e, c))
    }
}

/// Exact limit of the quotient along (σ, p, κ), with κ a multiple of 1/2.
pub fn whitney_b_limit(sigma: i32, p: i32, kappa: f64) -> f64 {
    let k2 = (kappa * 2.0).round();
    assert_eq!(k2, kappa * 2.0, "κ must be a multiple of 1/2");
    let kappa = Rat::new(k2 as i128, 2);
    let p = p as u32;
    let sig = Rat::int(sigma as i128);
    let x = Poly::mono(sig, p);
    let t = Poly::mono(kappa, 1);
    let x2 = x.mul(&x);
    let t2 = t.mul(&t);
    let y2 = t2.mul(&x2).add(&x2.mul(&x).scale(Rat::int(-1)));
    let fx = t2.mul(&x).scale(Rat::int(-2)).add(&x2.scale(Rat::int(3)));
    let ft = t.mul(&x2).scale(Rat::int(-2));
    let num = x2.mul(&x2).mul(&x2);
    let den = x2
        .add(&y2)
        .mul(&fx.mul(&fx).add(&y2.scale(Rat::int(4))).add(&ft.mul(&ft)));
    let (en, cn) = num.lowest().expect("x ≠ 0");
    let (ed, cd) = den.lowest().expect("denominator vanishes identically");
    assert!(ed <= en, "quotient is bounded by 1");
    if ed < en {
        0.0
    } else {
        (cn.to_f64() / cd.to_f64()).sqrt()
    }
}

/// Whitney (B) holds along the family iff the limit is zero.
pub fn whitney_b_holds(sigma: i32, p: i32, kappa: f64) -> bool {
    whitney_b_limit(sigma, p, kappa) == 0.0
}
