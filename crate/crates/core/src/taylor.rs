//! Truncated multivariate Taylor arithmetic.
//!
//! A [`Jet`] stores the Taylor coefficients of a smooth function of
//! `(t, x^1, .., x^n)` around a base point, up to a total degree chosen per
//! evaluation. Evaluating a closed-form metric with jet-valued coordinates
//! produces every mixed partial derivative of the metric at roundoff
//! accuracy, which is what the pointwise curvature machinery consumes.
//!
//! Variable 0 is always time; variables `1..=n` are the chart coordinates.
//! Each jet tracks two validity bounds: `deg`, the total degree to which its
//! coefficients are trustworthy, and `tdeg`, the highest trustworthy power of
//! the time variable (grid-sourced jets know only one time order). Storage
//! beyond the validity bounds is kept at exactly zero.

use std::collections::HashMap;
use std::ops::{Add, Mul, Neg, Sub};
use std::sync::{Mutex, OnceLock};

pub const MAX_VARS: usize = 4;

/// Shared tables for one (number of variables, maximal degree) combination.
pub struct JetSpace {
    pub nv: usize,
    pub deg: usize,
    /// Monomial exponent tuples, graded order (by total degree, then lex).
    monos: Vec<[u8; MAX_VARS]>,
    /// Total degree of each monomial.
    mdeg: Vec<u8>,
    /// Exponent of the time variable in each monomial.
    mtau: Vec<u8>,
    /// Lookup from packed exponents to monomial index.
    index: HashMap<u32, u32>,
    /// Multiplication table `(out, a, b)` sorted by result degree.
    pairs: Vec<(u32, u32, u32)>,
    /// `pairs[..pair_off[d]]` covers all products of result degree <= d.
    pair_off: Vec<usize>,
    /// Per-variable derivative maps `(src, dst, factor)`.
    dmaps: Vec<Vec<(u32, u32, f64)>>,
    /// Factorial products `alpha!` per monomial.
    fact: Vec<f64>,
}

fn pack(alpha: &[u8; MAX_VARS]) -> u32 {
    alpha.iter().enumerate().map(|(i, &a)| (a as u32) << (5 * i)).sum()
}

impl JetSpace {
    fn build(nv: usize, deg: usize) -> JetSpace {
        assert!(nv >= 1 && nv <= MAX_VARS && deg <= 16);
        let mut monos: Vec<[u8; MAX_VARS]> = Vec::new();
        let mut stack = [0u8; MAX_VARS];
        gen_monos(nv, deg, 0, &mut stack, &mut monos);
        monos.sort_by_key(|a| {
            (a.iter().map(|&x| x as u32).sum::<u32>(), *a)
        });
        let mdeg: Vec<u8> = monos.iter().map(|a| a.iter().sum()).collect();
        let mtau: Vec<u8> = monos.iter().map(|a| a[0]).collect();
        let mut index = HashMap::new();
        for (i, a) in monos.iter().enumerate() {
            index.insert(pack(a), i as u32);
        }
        let mut pairs = Vec::new();
        for (ia, a) in monos.iter().enumerate() {
            for (ib, b) in monos.iter().enumerate() {
                let tot: u32 =
                    a.iter().zip(b).map(|(&x, &y)| x as u32 + y as u32).sum();
                if tot as usize > deg {
                    continue;
                }
                let mut s = [0u8; MAX_VARS];
                for k in 0..MAX_VARS {
                    s[k] = a[k] + b[k];
                }
                pairs.push((index[&pack(&s)], ia as u32, ib as u32));
            }
        }
        pairs.sort_by_key(|&(o, a, b)| (mdeg[o as usize], o, a, b));
        let mut pair_off = vec![0usize; deg + 2];
        for d in 0..=deg {
            pair_off[d + 1] =
                pairs.partition_point(|&(o, _, _)| mdeg[o as usize] as usize <= d);
        }
        let mut dmaps = Vec::new();
        for v in 0..nv {
            let mut map = Vec::new();
            for (i, a) in monos.iter().enumerate() {
                if a[v] == 0 {
                    continue;
                }
                let mut b = *a;
                b[v] -= 1;
                map.push((i as u32, index[&pack(&b)], a[v] as f64));
            }
            dmaps.push(map);
        }
        let fact: Vec<f64> = monos
            .iter()
            .map(|a| a.iter().map(|&x| factorial(x)).product())
            .collect();
        JetSpace { nv, deg, monos, mdeg, mtau, index, pairs, pair_off, dmaps, fact }
    }

    pub fn len(&self) -> usize {
        self.monos.len()
    }

    fn idx(&self, alpha: &[u8; MAX_VARS]) -> usize {
        self.index[&pack(alpha)] as usize
    }
}

fn gen_monos(
    nv: usize,
    rem: usize,
    var: usize,
    cur: &mut [u8; MAX_VARS],
    out: &mut Vec<[u8; MAX_VARS]>,
) {
    if var == nv {
        out.push(*cur);
        return;
    }
    for e in 0..=rem {
        cur[var] = e as u8;
        gen_monos(nv, rem - e, var + 1, cur, out);
    }
    cur[var] = 0;
}

fn factorial(k: u8) -> f64 {
    (1..=k as u64).product::<u64>() as f64
}

/// Interns spaces so jets can hold a `'static` reference.
pub fn space(nv: usize, deg: usize) -> &'static JetSpace {
    static CACHE: OnceLock<Mutex<HashMap<(usize, usize), &'static JetSpace>>> =
        OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut guard = cache.lock().unwrap();
    guard
        .entry((nv, deg))
        .or_insert_with(|| Box::leak(Box::new(JetSpace::build(nv, deg))))
}

/// Truncated Taylor expansion of a scalar quantity at a point.
#[derive(Clone)]
pub struct Jet {
    sp: &'static JetSpace,
    deg: u8,
    tdeg: u8,
    c: Vec<f64>,
}

impl Jet {
    pub fn constant(sp: &'static JetSpace, v: f64) -> Jet {
        let mut c = vec![0.0; sp.len()];
        c[0] = v;
        Jet { sp, deg: sp.deg as u8, tdeg: sp.deg as u8, c }
    }

    /// The coordinate function `var` (0 = t, 1.. = space) with value `v`.
    pub fn variable(sp: &'static JetSpace, var: usize, v: f64) -> Jet {
        assert!(var < sp.nv);
        let mut j = Jet::constant(sp, v);
        if sp.deg >= 1 {
            let mut e = [0u8; MAX_VARS];
            e[var] = 1;
            j.c[sp.idx(&e)] = 1.0;
        }
        j
    }

    /// Assembles a jet from a partial-derivative table. `f` receives the
    /// exponent tuple and must return the corresponding mixed partial.
    pub fn from_partials(
        sp: &'static JetSpace,
        deg: usize,
        tdeg: usize,
        mut f: impl FnMut(&[u8]) -> f64,
    ) -> Jet {
        assert!(deg <= sp.deg && tdeg <= deg);
        let mut c = vec![0.0; sp.len()];
        for i in 0..sp.len() {
            if sp.mdeg[i] as usize <= deg && sp.mtau[i] as usize <= tdeg {
                c[i] = f(&sp.monos[i][..sp.nv]) / sp.fact[i];
            }
        }
        Jet { sp, deg: deg as u8, tdeg: tdeg as u8, c }
    }

    pub fn space(&self) -> &'static JetSpace {
        self.sp
    }

    pub fn deg(&self) -> usize {
        self.deg as usize
    }

    pub fn tdeg(&self) -> usize {
        self.tdeg as usize
    }

    pub fn value(&self) -> f64 {
        self.c[0]
    }

    /// Mixed partial `∂^alpha` (alpha listed per variable, time first).
    pub fn partial(&self, alpha: &[usize]) -> f64 {
        let mut a = [0u8; MAX_VARS];
        for (k, &e) in alpha.iter().enumerate() {
            a[k] = e as u8;
        }
        let tot: usize = alpha.iter().sum();
        assert!(
            tot <= self.deg as usize && alpha.first().copied().unwrap_or(0) <= self.tdeg as usize,
            "jet partial {:?} beyond validity (deg {}, tdeg {})",
            alpha,
            self.deg,
            self.tdeg
        );
        let i = self.sp.idx(&a);
        self.c[i] * self.sp.fact[i]
    }

    fn clamp(&mut self) {
        for i in 0..self.c.len() {
            if self.sp.mdeg[i] > self.deg || self.sp.mtau[i] > self.tdeg {
                self.c[i] = 0.0;
            }
        }
    }

    /// Derivative with respect to variable `var` (0 = t, 1.. = space).
    pub fn deriv(&self, var: usize) -> Jet {
        assert!(self.deg >= 1, "cannot differentiate a degree-0 jet");
        let mut c = vec![0.0; self.sp.len()];
        for &(src, dst, fac) in &self.sp.dmaps[var] {
            c[dst as usize] = fac * self.c[src as usize];
        }
        let deg = self.deg - 1;
        let tdeg = if var == 0 { self.tdeg - 1 } else { self.tdeg.min(deg) };
        let mut j = Jet { sp: self.sp, deg, tdeg, c };
        j.clamp();
        j
    }

    fn binary(&self, o: &Jet, f: impl Fn(f64, f64) -> f64) -> Jet {
        assert!(std::ptr::eq(self.sp, o.sp), "jets from different spaces");
        let deg = self.deg.min(o.deg);
        let tdeg = self.tdeg.min(o.tdeg);
        let mut c = vec![0.0; self.sp.len()];
        for i in 0..c.len() {
            if self.sp.mdeg[i] <= deg && self.sp.mtau[i] <= tdeg {
                c[i] = f(self.c[i], o.c[i]);
            }
        }
        Jet { sp: self.sp, deg, tdeg, c }
    }

    pub fn mul_jet(&self, o: &Jet) -> Jet {
        assert!(std::ptr::eq(self.sp, o.sp), "jets from different spaces");
        let deg = self.deg.min(o.deg);
        let tdeg = self.tdeg.min(o.tdeg);
        let mut c = vec![0.0; self.sp.len()];
        for &(out, ia, ib) in &self.sp.pairs[..self.sp.pair_off[deg as usize + 1]] {
            c[out as usize] += self.c[ia as usize] * o.c[ib as usize];
        }
        let mut j = Jet { sp: self.sp, deg, tdeg, c };
        j.clamp();
        j
    }

    pub fn scale(&self, k: f64) -> Jet {
        let mut j = self.clone();
        for v in &mut j.c {
            *v *= k;
        }
        j
    }

    pub fn add_f64(&self, k: f64) -> Jet {
        let mut j = self.clone();
        j.c[0] += k;
        j
    }

    /// Evaluates `sum coeffs[k] * w^k` where `w = self - self.value()`.
    fn compose(&self, coeffs: &[f64]) -> Jet {
        let mut w = self.clone();
        w.c[0] = 0.0;
        let mut acc = Jet::constant(self.sp, coeffs[0]);
        acc.deg = self.deg;
        acc.tdeg = self.tdeg;
        acc.clamp();
        acc.c[0] = coeffs[0];
        let mut wp = w.clone();
        for &ck in &coeffs[1..] {
            for i in 0..acc.c.len() {
                acc.c[i] += ck * wp.c[i];
            }
            wp = wp.mul_jet(&w);
        }
        acc
    }

    pub fn recip(&self) -> Jet {
        let v = self.c[0];
        assert!(v != 0.0, "reciprocal of a jet with zero value");
        let d = self.deg as usize;
        let mut coeffs = Vec::with_capacity(d + 1);
        let mut cur = 1.0 / v;
        for _ in 0..=d {
            coeffs.push(cur);
            cur *= -1.0 / v;
        }
        self.compose(&coeffs)
    }

    pub fn exp(&self) -> Jet {
        let e = self.c[0].exp();
        let d = self.deg as usize;
        let mut coeffs = Vec::with_capacity(d + 1);
        let mut cur = e;
        for k in 0..=d {
            coeffs.push(cur);
            cur /= (k + 1) as f64;
        }
        self.compose(&coeffs)
    }

    pub fn ln(&self) -> Jet {
        let v = self.c[0];
        assert!(v > 0.0, "logarithm of a non-positive jet");
        let d = self.deg as usize;
        let mut coeffs = vec![v.ln()];
        for k in 1..=d {
            let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
            coeffs.push(sign / (k as f64 * v.powi(k as i32)));
        }
        self.compose(&coeffs)
    }

    pub fn sqrt(&self) -> Jet {
        let v = self.c[0];
        assert!(v > 0.0, "square root of a non-positive jet");
        let d = self.deg as usize;
        let mut coeffs = Vec::with_capacity(d + 1);
        // binom(1/2, k) * v^(1/2 - k)
        let mut binom = 1.0;
        for k in 0..=d {
            coeffs.push(binom * v.powf(0.5 - k as f64));
            binom *= (0.5 - k as f64) / (k as f64 + 1.0);
        }
        self.compose(&coeffs)
    }

    pub fn powi(&self, e: usize) -> Jet {
        let mut acc = Jet::constant(self.sp, 1.0);
        for _ in 0..e {
            acc = acc.mul_jet(self);
        }
        acc
    }
}

impl Add for &Jet {
    type Output = Jet;
    fn add(self, o: &Jet) -> Jet {
        self.binary(o, |a, b| a + b)
    }
}

impl Sub for &Jet {
    type Output = Jet;
    fn sub(self, o: &Jet) -> Jet {
        self.binary(o, |a, b| a - b)
    }
}

impl Mul for &Jet {
    type Output = Jet;
    fn mul(self, o: &Jet) -> Jet {
        self.mul_jet(o)
    }
}

impl Neg for &Jet {
    type Output = Jet;
    fn neg(self) -> Jet {
        self.scale(-1.0)
    }
}

impl Add for Jet {
    type Output = Jet;
    fn add(self, o: Jet) -> Jet {
        &self + &o
    }
}

impl Sub for Jet {
    type Output = Jet;
    fn sub(self, o: Jet) -> Jet {
        &self - &o
    }
}

impl Mul for Jet {
    type Output = Jet;
    fn mul(self, o: Jet) -> Jet {
        &self * &o
    }
}

impl Neg for Jet {
    type Output = Jet;
    fn neg(self) -> Jet {
        -&self
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Independent oracle: a sparse polynomial with explicit term list,
    /// evaluated and differentiated symbolically.
    struct Poly {
        terms: Vec<(f64, [u8; MAX_VARS])>,
    }

    impl Poly {
        fn random(rng: &mut ChaCha8Rng, nv: usize, deg: usize, nterms: usize) -> Poly {
            let mut terms = Vec::new();
            for _ in 0..nterms {
                let mut a = [0u8; MAX_VARS];
                let mut rem = deg;
                for v in 0..nv {
                    let e = rng.gen_range(0..=rem);
                    a[v] = e as u8;
                    rem -= e;
                }
                terms.push((rng.gen_range(-2.0..2.0), a));
            }
            Poly { terms }
        }

        fn eval(&self, p: &[f64]) -> f64 {
            self.terms
                .iter()
                .map(|(c, a)| {
                    c * a
                        .iter()
                        .zip(p.iter().chain(std::iter::repeat(&0.0)))
                        .map(|(&e, &x)| x.powi(e as i32))
                        .product::<f64>()
                })
                .sum()
        }

        fn deriv(&self, var: usize) -> Poly {
            let terms = self
                .terms
                .iter()
                .filter(|(_, a)| a[var] > 0)
                .map(|(c, a)| {
                    let mut b = *a;
                    b[var] -= 1;
                    (c * a[var] as f64, b)
                })
                .collect();
            Poly { terms }
        }

        fn eval_jet(&self, sp: &'static JetSpace, p: &[f64]) -> Jet {
            let vars: Vec<Jet> =
                (0..sp.nv).map(|v| Jet::variable(sp, v, p[v])).collect();
            let mut acc = Jet::constant(sp, 0.0);
            for (c, a) in &self.terms {
                let mut term = Jet::constant(sp, *c);
                for v in 0..sp.nv {
                    for _ in 0..a[v] {
                        term = &term * &vars[v];
                    }
                }
                acc = &acc + &term;
            }
            acc
        }
    }

    #[test]
    fn partials_match_symbolic_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let sp = space(3, 5);
        for _ in 0..50 {
            let poly = Poly::random(&mut rng, 3, 4, 5);
            let p: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.5..1.5)).collect();
            let jet = poly.eval_jet(sp, &p);
            for alpha in [[0, 0, 0], [1, 0, 0], [0, 2, 1], [2, 1, 1], [0, 4, 0], [1, 2, 2]] {
                let mut sym = Poly { terms: poly.terms.clone() };
                for (v, &e) in alpha.iter().enumerate() {
                    for _ in 0..e {
                        sym = sym.deriv(v);
                    }
                }
                let want = sym.eval(&p);
                let got = jet.partial(&alpha);
                assert!(
                    (want - got).abs() <= 1e-10 * (1.0 + want.abs()),
                    "alpha {:?}: {} vs {}",
                    alpha,
                    got,
                    want
                );
            }
        }
    }

    /// Nested 4th-order central differences: a slow, fully independent check
    /// of the composition rules (recip/exp/ln/sqrt).
    fn central4(f: &dyn Fn(f64) -> f64, x: f64, h: f64) -> f64 {
        (8.0 * (f(x + h) - f(x - h)) - (f(x + 2.0 * h) - f(x - 2.0 * h))) / (12.0 * h)
    }

    #[test]
    fn compositions_match_finite_differences() {
        let sp = space(2, 4);
        let x0 = 0.7;
        let make = |x: f64| {
            let v = Jet::variable(sp, 1, x);
            let u = (&v * &v).add_f64(1.3);
            (u.recip().exp(), ((&u).ln() + u.sqrt()))
        };
        let (a, b) = make(x0);
        let fa = |x: f64| ((x * x + 1.3) as f64).recip().exp();
        let fb = |x: f64| ((x * x + 1.3) as f64).ln() + (x * x + 1.3).sqrt();
        let da = central4(&fa, x0, 1e-3);
        let db = central4(&fb, x0, 1e-3);
        assert!((a.partial(&[0, 1]) - da).abs() < 1e-9);
        assert!((b.partial(&[0, 1]) - db).abs() < 1e-9);
        // second derivatives via nesting
        let d2a = central4(&|x| central4(&fa, x, 1e-3), x0, 1e-3);
        assert!((a.partial(&[0, 2]) - d2a).abs() < 1e-6);
    }

    #[test]
    fn time_validity_is_tracked() {
        let sp = space(2, 4);
        let full = Jet::variable(sp, 0, 0.3);
        let limited = Jet::from_partials(sp, 3, 1, |a| {
            // t + t*x + x^2 pretending higher time orders are unknown
            match (a[0], a[1]) {
                (0, 0) => 0.0,
                (1, 0) => 1.0,
                (1, 1) => 1.0,
                (0, 2) => 2.0,
                _ => 0.0,
            }
        });
        let prod = &full * &limited;
        assert_eq!(prod.tdeg(), 1);
        // the tau^2 slot must be zeroed, not garbage
        let mut e = [0u8; MAX_VARS];
        e[0] = 2;
        assert_eq!(prod.c[sp.idx(&e)], 0.0);
        let d = limited.deriv(0);
        assert_eq!(d.tdeg(), 0);
        assert_eq!(d.value(), 1.0);
    }

    #[test]
    fn derivatives_commute() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let sp = space(3, 6);
        let poly = Poly::random(&mut rng, 3, 5, 8);
        let j = poly.eval_jet(sp, &[0.4, -0.2, 0.9]);
        let a = j.deriv(1).deriv(2);
        let b = j.deriv(2).deriv(1);
        for i in 0..sp.len() {
            assert!((a.c[i] - b.c[i]).abs() < 1e-12);
        }
    }
}
