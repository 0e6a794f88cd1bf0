//! Metric families and pointwise jet providers.
//!
//! Every closed-form family evaluates its metric with jet-valued coordinates,
//! so a single formula yields all mixed space-time partials of `g` at a
//! point to roundoff accuracy. Pullback providers compose a base family with
//! a time-dependent polynomial diffeomorphism `phi(x, t) = x + a psi(x, t)`;
//! the pulled-back metric solves the vector-field-modified flow exactly,
//! with `V = g (Dphi)^{-1} d_t phi` flattened to a 1-form. This is how the
//! lab manufactures genuinely non-gradient vector fields without giving up
//! closed-form ground truth.

use crate::tensor::{det, inverse, t2, T2};
use crate::taylor::{space, Jet, JetSpace};
use rand::Rng;
use thiserror::Error;

pub const MAX_ANALYTIC_ORDER: usize = 8;

#[derive(Debug, Error)]
pub enum JetError {
    #[error("point outside chart of provider `{provider}`: {detail}")]
    PointOutOfChart { provider: String, detail: String },
    #[error("jet order {requested} unsupported (provider maximum {max})")]
    OrderUnsupported { requested: usize, max: usize },
}

/// A point of the single coordinate chart of a provider.
#[derive(Clone, Debug, PartialEq)]
pub struct ChartPoint {
    pub x: Vec<f64>,
    pub t: f64,
}

impl ChartPoint {
    pub fn new(x: Vec<f64>, t: f64) -> ChartPoint {
        ChartPoint { x, t }
    }
}

/// Jet of a metric tensor at a point: `g[i][j]` with both indices spatial.
pub struct MetricJet {
    pub n: usize,
    pub g: T2<Jet>,
}

/// Jet of a covariant tensor (rank 1 or 2), flat component storage.
pub struct CotensorJet {
    pub n: usize,
    pub rank: usize,
    pub comps: Vec<Jet>,
}

impl CotensorJet {
    pub fn rank1(comps: Vec<Jet>) -> CotensorJet {
        CotensorJet { n: comps.len(), rank: 1, comps }
    }

    pub fn rank2(n: usize, comps: T2<Jet>) -> CotensorJet {
        CotensorJet {
            n,
            rank: 2,
            comps: comps.into_iter().flatten().collect(),
        }
    }

    pub fn at1(&self, i: usize) -> &Jet {
        assert_eq!(self.rank, 1);
        &self.comps[i]
    }

    pub fn at2(&self, i: usize, j: usize) -> &Jet {
        assert_eq!(self.rank, 2);
        &self.comps[i * self.n + j]
    }
}

/// Sparse polynomial over `(t, x^1, .., x^n)`, used for diffeomorphism
/// components and analytic vector fields on grids.
#[derive(Clone, Debug)]
pub struct Poly {
    pub terms: Vec<(f64, [u8; 4])>,
}

impl Poly {
    pub fn zero() -> Poly {
        Poly { terms: Vec::new() }
    }

    pub fn eval_f64(&self, t: f64, x: &[f64]) -> f64 {
        self.terms
            .iter()
            .map(|(c, a)| {
                let mut v = *c * t.powi(a[0] as i32);
                for (k, &xi) in x.iter().enumerate() {
                    v *= xi.powi(a[k + 1] as i32);
                }
                v
            })
            .sum()
    }

    pub fn deriv(&self, var: usize) -> Poly {
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

    /// Evaluates in jet arithmetic; `vars[0]` is the time jet.
    pub fn eval_jet(&self, sp: &'static JetSpace, vars: &[Jet]) -> Jet {
        let mut acc = Jet::constant(sp, 0.0);
        for (c, a) in &self.terms {
            let mut term = Jet::constant(sp, *c);
            for (v, var) in vars.iter().enumerate() {
                for _ in 0..a[v] {
                    term = &term * var;
                }
            }
            acc = &acc + &term;
        }
        acc
    }
}

/// Closed-form base families. All are exact Ricci flow solutions on their
/// stated chart and time window.
#[derive(Clone, Debug)]
pub enum Base {
    /// Euclidean plane, `g = delta`, any time.
    Flat { n: usize },
    /// Shrinking round sphere in a stereographic chart:
    /// `g = 4 r^2(t) delta / (1 + |x|^2)^2`, `r^2(t) = r0^2 - 2(n-1) t`.
    Sphere { n: usize, r0: f64 },
    /// Cigar soliton, `g = delta / (e^{4t} + |x|^2)` on the plane.
    Cigar,
    /// Product of a shrinking 2-sphere (coords 1, 2) with a line (coord 3).
    SphereCrossFlat { r0: f64 },
}

impl Base {
    pub fn dim(&self) -> usize {
        match self {
            Base::Flat { n } => *n,
            Base::Sphere { n, .. } => *n,
            Base::Cigar => 2,
            Base::SphereCrossFlat { .. } => 3,
        }
    }

    pub fn t_domain(&self) -> (f64, f64) {
        match self {
            Base::Flat { .. } => (-1.0, 1.0),
            Base::Sphere { n, r0 } => {
                let tmax = r0 * r0 / (2.0 * (*n as f64 - 1.0));
                (0.0, 0.55 * tmax)
            }
            Base::Cigar => (-0.25, 0.25),
            Base::SphereCrossFlat { r0 } => (0.0, 0.25 * r0 * r0),
        }
    }

    fn chart_radius(&self) -> f64 {
        match self {
            Base::Flat { .. } | Base::Cigar => 3.0,
            Base::Sphere { .. } | Base::SphereCrossFlat { .. } => 2.0,
        }
    }

    /// Metric components from coordinate jets (`xs` spatial, `tj` time).
    fn metric(&self, sp: &'static JetSpace, xs: &[Jet], tj: &Jet) -> T2<Jet> {
        let n = self.dim();
        let zero = Jet::constant(sp, 0.0);
        match self {
            Base::Flat { .. } => t2(n, |i, j| {
                Jet::constant(sp, if i == j { 1.0 } else { 0.0 })
            }),
            Base::Sphere { n: sn, r0 } => {
                let rsq = tj.scale(-2.0 * (*sn as f64 - 1.0)).add_f64(r0 * r0);
                let mut norm = Jet::constant(sp, 1.0);
                for xi in xs.iter() {
                    norm = &norm + &(xi * xi);
                }
                let conf = rsq.scale(4.0).mul_jet(&(&norm * &norm).recip());
                t2(n, |i, j| if i == j { conf.clone() } else { zero.clone() })
            }
            Base::Cigar => {
                let mut den = tj.scale(4.0).exp();
                for xi in xs.iter() {
                    den = &den + &(xi * xi);
                }
                let conf = den.recip();
                t2(n, |i, j| if i == j { conf.clone() } else { zero.clone() })
            }
            Base::SphereCrossFlat { r0 } => {
                let rsq = tj.scale(-2.0).add_f64(r0 * r0);
                let norm = (&xs[0] * &xs[0] + &xs[1] * &xs[1]).add_f64(1.0);
                let conf = rsq.scale(4.0).mul_jet(&(&norm * &norm).recip());
                t2(n, |i, j| {
                    if i == j && i < 2 {
                        conf.clone()
                    } else if i == 2 && j == 2 {
                        Jet::constant(sp, 1.0)
                    } else {
                        zero.clone()
                    }
                })
            }
        }
    }

    /// Sampling box for random interior points: `(|x| box half-width, t range)`.
    fn sample_box(&self) -> (f64, (f64, f64)) {
        match self {
            Base::Flat { .. } => (1.0, (0.0, 0.3)),
            Base::Sphere { n, r0 } => {
                let tmax = r0 * r0 / (2.0 * (*n as f64 - 1.0));
                (0.8, (0.01 * tmax, 0.4 * tmax))
            }
            Base::Cigar => (1.0, (-0.15, 0.15)),
            Base::SphereCrossFlat { r0 } => (0.8, (0.002, 0.15 * r0 * r0)),
        }
    }
}

/// Time-dependent polynomial diffeomorphism `phi(x,t) = x + amp psi(x,t)`.
#[derive(Clone, Debug)]
pub struct Pullback {
    pub amp: f64,
    pub psi: Vec<Poly>,
}

impl Pullback {
    /// Draws psi with spatial degree <= 2 and time degree <= 2, then fixes
    /// the amplitude so the Jacobian perturbation stays well below 1 on the
    /// sampling box. Every component carries a time factor so the map is the
    /// identity-in-motion the modified flow needs (`d_t phi != 0`).
    pub fn random(n: usize, rng: &mut impl Rng) -> Pullback {
        let mut psi = Vec::new();
        for _ in 0..n {
            let mut terms = Vec::new();
            for et in 0..=2u8 {
                for m in spatial_monos(n, 2) {
                    if rng.gen_bool(0.45) {
                        let mut a = [0u8; 4];
                        a[0] = et;
                        a[1..=n].copy_from_slice(&m[..n]);
                        terms.push((rng.gen_range(-0.3..0.3), a));
                    }
                }
            }
            // guarantee time dependence of the component
            let mut a = [0u8; 4];
            a[0] = 1;
            a[1] = 1;
            terms.push((rng.gen_range(0.05..0.3), a));
            psi.push(Poly { terms });
        }
        // bound |d psi / dx| over |x| <= 2, |t| <= 0.3 crudely by the sum of
        // term bounds, then set amp to keep the perturbation below 0.1
        let mut bound: f64 = 0.0;
        for p in &psi {
            for v in 1..=n {
                let d = p.deriv(v);
                let b: f64 = d
                    .terms
                    .iter()
                    .map(|(c, a)| {
                        let sdeg: u8 = a[1..].iter().sum();
                        c.abs() * 2.0f64.powi(sdeg as i32) * 0.3f64.powi(a[0] as i32)
                    })
                    .sum();
                bound = bound.max(b);
            }
        }
        Pullback { amp: 0.1 / bound.max(0.5), psi }
    }
}

/// A pointwise metric provider backed by closed forms.
#[derive(Clone, Debug)]
pub struct AnalyticProvider {
    id: String,
    base: Base,
    pullback: Option<Pullback>,
}

impl AnalyticProvider {
    pub fn plain(id: &str, base: Base) -> AnalyticProvider {
        AnalyticProvider { id: id.to_string(), base, pullback: None }
    }

    pub fn pulled(id: &str, base: Base, pb: Pullback) -> AnalyticProvider {
        AnalyticProvider { id: id.to_string(), base, pullback: Some(pb) }
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn dim(&self) -> usize {
        self.base.dim()
    }

    pub fn max_order(&self) -> usize {
        MAX_ANALYTIC_ORDER
    }

    pub fn t_domain(&self) -> (f64, f64) {
        self.base.t_domain()
    }

    pub fn has_flow_vector(&self) -> bool {
        self.pullback.is_some()
    }

    pub fn contains(&self, p: &ChartPoint) -> bool {
        let (t0, t1) = self.t_domain();
        let r = self.base.chart_radius();
        p.x.len() == self.dim()
            && p.t >= t0
            && p.t <= t1
            && p.x.iter().all(|&xi| xi.abs() <= r)
    }

    pub fn sample(&self, rng: &mut impl Rng) -> ChartPoint {
        let (hw, (t0, t1)) = self.base.sample_box();
        let n = self.dim();
        let x = (0..n).map(|_| rng.gen_range(-hw..hw)).collect();
        ChartPoint::new(x, rng.gen_range(t0..t1))
    }

    fn guard(&self, p: &ChartPoint, order: usize) -> Result<(), JetError> {
        if order > MAX_ANALYTIC_ORDER {
            return Err(JetError::OrderUnsupported {
                requested: order,
                max: MAX_ANALYTIC_ORDER,
            });
        }
        if !self.contains(p) {
            return Err(JetError::PointOutOfChart {
                provider: self.id.clone(),
                detail: format!("x = {:?}, t = {}", p.x, p.t),
            });
        }
        Ok(())
    }

    fn coordinate_jets(&self, p: &ChartPoint, order: usize) -> (Vec<Jet>, Jet) {
        let n = self.dim();
        let sp = space(n + 1, order);
        let tj = Jet::variable(sp, 0, p.t);
        let xs: Vec<Jet> =
            (0..n).map(|i| Jet::variable(sp, i + 1, p.x[i])).collect();
        (xs, tj)
    }

    /// Jacobian `J^a_b = d phi^a / d x^b` and velocity `d_t phi^a`, as jets.
    fn pullback_jets(
        &self,
        pb: &Pullback,
        xs: &[Jet],
        tj: &Jet,
    ) -> (Vec<Jet>, T2<Jet>, Vec<Jet>) {
        let n = self.dim();
        let sp = tj.space();
        let mut vars = vec![tj.clone()];
        vars.extend_from_slice(xs);
        let phi: Vec<Jet> = (0..n)
            .map(|a| &xs[a] + &pb.psi[a].eval_jet(sp, &vars).scale(pb.amp))
            .collect();
        let jac = t2(n, |a, b| {
            let d = pb.psi[a].deriv(b + 1).eval_jet(sp, &vars).scale(pb.amp);
            if a == b {
                d.add_f64(1.0)
            } else {
                d
            }
        });
        let vel: Vec<Jet> = (0..n)
            .map(|a| pb.psi[a].deriv(0).eval_jet(sp, &vars).scale(pb.amp))
            .collect();
        (phi, jac, vel)
    }

    pub fn metric_jet(
        &self,
        p: &ChartPoint,
        order: usize,
    ) -> Result<MetricJet, JetError> {
        self.guard(p, order)?;
        let n = self.dim();
        let (xs, tj) = self.coordinate_jets(p, order);
        let g = match &self.pullback {
            None => self.base.metric(tj.space(), &xs, &tj),
            Some(pb) => {
                let (phi, jac, _) = self.pullback_jets(pb, &xs, &tj);
                let gbar = self.base.metric(tj.space(), &phi, &tj);
                t2(n, |i, j| {
                    let mut acc = Jet::constant(tj.space(), 0.0);
                    for a in 0..n {
                        for b in 0..n {
                            acc = &acc + &(&(&jac[a][i] * &jac[b][j]) * &gbar[a][b]);
                        }
                    }
                    acc
                })
            }
        };
        Ok(MetricJet { n, g })
    }

    /// The 1-form `V` for which this provider's metric satisfies the
    /// vector-field-modified flow; `None` means `V = 0`.
    pub fn flow_vector(
        &self,
        p: &ChartPoint,
        order: usize,
    ) -> Result<Option<CotensorJet>, JetError> {
        self.guard(p, order)?;
        let pb = match &self.pullback {
            None => return Ok(None),
            Some(pb) => pb,
        };
        let n = self.dim();
        let (xs, tj) = self.coordinate_jets(p, order);
        let (phi, jac, vel) = self.pullback_jets(pb, &xs, &tj);
        let gbar = self.base.metric(tj.space(), &phi, &tj);
        let g = t2(n, |i, j| {
            let mut acc = Jet::constant(tj.space(), 0.0);
            for a in 0..n {
                for b in 0..n {
                    acc = &acc + &(&(&jac[a][i] * &jac[b][j]) * &gbar[a][b]);
                }
            }
            acc
        });
        let (jinv, jdet) = inverse(n, &jac);
        assert!(
            jdet.value().abs() > 0.25,
            "pullback Jacobian close to singular; amplitude guard failed"
        );
        // X^j = (J^{-1})^j_a d_t phi^a, then V_i = g_ij X^j
        let x_up: Vec<Jet> = (0..n)
            .map(|j| {
                let mut acc = Jet::constant(tj.space(), 0.0);
                for a in 0..n {
                    acc = &acc + &(&jinv[j][a] * &vel[a]);
                }
                acc
            })
            .collect();
        let v: Vec<Jet> = (0..n)
            .map(|i| {
                let mut acc = Jet::constant(tj.space(), 0.0);
                for j in 0..n {
                    acc = &acc + &(&g[i][j] * &x_up[j]);
                }
                acc
            })
            .collect();
        Ok(Some(CotensorJet::rank1(v)))
    }

    /// Metric determinant value at a point (degeneracy guard helper).
    pub fn det_at(&self, p: &ChartPoint) -> Result<f64, JetError> {
        let mj = self.metric_jet(p, 2)?;
        Ok(det(mj.n, &mj.g).value())
    }
}

fn spatial_monos(n: usize, deg: usize) -> Vec<[u8; 3]> {
    let mut out = Vec::new();
    for a in 0..=deg as u8 {
        for b in 0..=(deg as u8 - a) {
            if n == 2 {
                out.push([a, b, 0]);
            } else {
                for c in 0..=(deg as u8 - a - b) {
                    out.push([a, b, c]);
                }
            }
        }
    }
    if n == 1 {
        out.retain(|m| m[1] == 0 && m[2] == 0);
    }
    out
}

/// The standard family of closed-form providers used by the check catalog.
pub fn standard_providers(seed: u64) -> Vec<AnalyticProvider> {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut out = vec![
        AnalyticProvider::plain("flat2", Base::Flat { n: 2 }),
        AnalyticProvider::plain("sphere2", Base::Sphere { n: 2, r0: 1.0 }),
        AnalyticProvider::plain("sphere3", Base::Sphere { n: 3, r0: 1.0 }),
        AnalyticProvider::plain("cigar", Base::Cigar),
        AnalyticProvider::plain(
            "sphere_cross_flat",
            Base::SphereCrossFlat { r0: 1.0 },
        ),
    ];
    for (name, base) in [
        ("pull_flat2_a", Base::Flat { n: 2 }),
        ("pull_flat2_b", Base::Flat { n: 2 }),
        ("pull_sphere2_a", Base::Sphere { n: 2, r0: 1.0 }),
        ("pull_sphere2_b", Base::Sphere { n: 2, r0: 1.3 }),
        ("pull_cigar", Base::Cigar),
    ] {
        let pb = Pullback::random(base.dim(), &mut rng);
        out.push(AnalyticProvider::pulled(name, base, pb));
    }
    out
}

pub fn provider_by_id<'a>(
    providers: &'a [AnalyticProvider],
    id: &str,
) -> Option<&'a AnalyticProvider> {
    providers.iter().find(|p| p.id() == id)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn sphere_metric_values_and_time_slope() {
        let pr = AnalyticProvider::plain("sphere2", Base::Sphere { n: 2, r0: 1.0 });
        let p = ChartPoint::new(vec![0.0, 0.0], 0.0);
        let mj = pr.metric_jet(&p, 4).unwrap();
        assert!((mj.g[0][0].value() - 4.0).abs() < 1e-14);
        assert!((mj.g[0][1].value()).abs() < 1e-14);
        // d_t g_11 = 4 d_t r^2 = -8 at the origin
        assert!((mj.g[0][0].partial(&[1, 0, 0]) + 8.0).abs() < 1e-12);
        // d_x1 g at the origin vanishes (conformal factor is even)
        assert!((mj.g[0][0].partial(&[0, 1, 0])).abs() < 1e-14);
    }

    #[test]
    fn chart_and_order_guards_fire() {
        let pr = AnalyticProvider::plain("sphere2", Base::Sphere { n: 2, r0: 1.0 });
        let far = ChartPoint::new(vec![5.0, 0.0], 0.0);
        assert!(matches!(
            pr.metric_jet(&far, 3),
            Err(JetError::PointOutOfChart { .. })
        ));
        let late = ChartPoint::new(vec![0.0, 0.0], 0.49);
        assert!(matches!(
            pr.metric_jet(&late, 3),
            Err(JetError::PointOutOfChart { .. })
        ));
        let p = ChartPoint::new(vec![0.1, 0.1], 0.05);
        assert!(matches!(
            pr.metric_jet(&p, 11),
            Err(JetError::OrderUnsupported { .. })
        ));
    }

    #[test]
    fn pullback_flow_vector_is_consistent_with_metric_motion() {
        // The defining identity of the pullback construction, checked
        // numerically without any curvature machinery:
        //   d_t g_ij = d_t (J^T gbar J)_ij  must hold as jets (trivially),
        // and V must be nonzero with nonzero curl for generic psi.
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let pb = Pullback::random(2, &mut rng);
        let pr = AnalyticProvider::pulled("pf", Base::Flat { n: 2 }, pb);
        let p = ChartPoint::new(vec![0.3, -0.4], 0.1);
        let v = pr.flow_vector(&p, 4).unwrap().unwrap();
        let curl =
            v.at1(1).partial(&[0, 1, 0]) - v.at1(0).partial(&[0, 0, 1]);
        assert!(v.at1(0).value().abs() + v.at1(1).value().abs() > 1e-4);
        assert!(curl.abs() > 1e-6, "pullback vector field degenerated to a gradient");
    }

    #[test]
    fn pullback_metric_stays_positive_definite_on_box() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for seed_round in 0..5 {
            let pb = Pullback::random(2, &mut rng);
            let pr = AnalyticProvider::pulled("ps", Base::Sphere { n: 2, r0: 1.0 }, pb);
            for _ in 0..20 {
                let p = pr.sample(&mut rng);
                let d = pr.det_at(&p).unwrap();
                assert!(d > 0.0, "round {}: det {} at {:?}", seed_round, d, p);
            }
        }
    }
}
