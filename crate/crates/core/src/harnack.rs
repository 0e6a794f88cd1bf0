//! Harnack quadratics: the trace quadratic, the linear trace quadratic Z
//! with its labeled parts, the matrix quadratic Q in both its explicit and
//! space-time contraction forms, and the V-optimization of Z.

use crate::jets::CotensorJet;
use crate::riemann::{cov2, divergence, grad_scalar, hessian, lap_scalar, lap_t2, Geometry};
use crate::spacetime::{SpaceTime, SpaceTimeCometric, SpaceTimeSymTensor};
use crate::taylor::Jet;
use crate::tensor::{min_eigenvalue, solve_spd, t2};
use rand::Rng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnackError {
    #[error("harnack quadratics with a time term require t > 0 (got {t})")]
    NonPositiveTime { t: f64 },
    #[error("spatial block of h is not positive-definite (min eigenvalue {min_eig:.3e}); the infimum of Z over V is not attained")]
    DegenerateH { min_eig: f64 },
    #[error("the matrix quadratic needs the space-time curvature of the unmodified flow (build with V = 0)")]
    MissingCurvature,
}

/// How `∂ₜR` enters the trace quadratic: substituted as `ΔR + 2|Rc|²`
/// (exact under the unmodified flow; the analytic default) or read from the
/// time slot of the jets (grid trajectories and modified flows).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DtRMode {
    Substitute,
    FromJet,
}

/// One sampled frame: the 1-form V for the trace quadratics, the 1-form W
/// and antisymmetric 2-form U for the matrix quadratic, and the arbitrary
/// time component Ṽ⁰ of the space-time restatement.
#[derive(Debug, Clone)]
pub struct HarnackFrame {
    pub v: Vec<f64>,
    pub w: Vec<f64>,
    pub u: Vec<Vec<f64>>,
    pub vtilde0: f64,
}

impl HarnackFrame {
    pub fn zero(n: usize) -> HarnackFrame {
        HarnackFrame {
            v: vec![0.0; n],
            w: vec![0.0; n],
            u: vec![vec![0.0; n]; n],
            vtilde0: 0.0,
        }
    }

    /// Uniform components in [-1.5, 1.5]; U filled antisymmetrically; Ṽ⁰
    /// drawn from the sampled set {0, ±1, ±10}.
    pub fn random(n: usize, rng: &mut impl Rng) -> HarnackFrame {
        let mut f = HarnackFrame::zero(n);
        for i in 0..n {
            f.v[i] = rng.gen_range(-1.5..1.5);
            f.w[i] = rng.gen_range(-1.5..1.5);
            for j in (i + 1)..n {
                let u = rng.gen_range(-1.5..1.5);
                f.u[i][j] = u;
                f.u[j][i] = -u;
            }
        }
        f.vtilde0 = *[0.0, 1.0, -1.0, 10.0, -10.0]
            .get(rng.gen_range(0..5usize))
            .unwrap();
        f
    }

    pub fn assert_antisymmetric(&self) {
        let n = self.u.len();
        for i in 0..n {
            for j in 0..n {
                assert!(
                    (self.u[i][j] + self.u[j][i]).abs() < 1e-14,
                    "U must be antisymmetric"
                );
            }
        }
    }
}

/// The linear trace quadratic with its labeled summands.  `value` is the
/// sum of the parts; `contraction` is the same number computed through the
/// space-time extension, `Σ h̃_ab V̄^a V̄^b (+ H/2t)` with `V̄ = ∂ₜ ⊕ V♯`.
#[derive(Debug, Clone)]
pub struct QuadraticValue {
    pub value: f64,
    pub divdiv: f64,
    pub rc_dot_h: f64,
    pub two_div_v: f64,
    pub hvv: f64,
    pub trace_term: f64,
    pub contraction: f64,
}

fn raised(geom: &Geometry<Jet>, w: &[f64]) -> Vec<f64> {
    let n = geom.n;
    (0..n)
        .map(|i| (0..n).map(|j| geom.ginv[i][j].value() * w[j]).sum())
        .collect()
}

/// `∂ₜR + R/t + 2∇R·V + 2R_ij VⁱVʲ` (V entering as a 1-form, raised by g).
pub fn trace_quadratic(
    geom: &Geometry<Jet>,
    frame: &HarnackFrame,
    t: f64,
    mode: DtRMode,
) -> Result<f64, HarnackError> {
    if t <= 0.0 {
        return Err(HarnackError::NonPositiveTime { t });
    }
    let n = geom.n;
    let dt_r = match mode {
        DtRMode::Substitute => {
            let lap_r = lap_scalar(geom, &geom.scal).value();
            let mut rc2 = 0.0;
            for i in 0..n {
                for j in 0..n {
                    rc2 += geom.ricci_up[i][j].value() * geom.ricci_up[j][i].value();
                }
            }
            lap_r + 2.0 * rc2
        }
        DtRMode::FromJet => geom.scal.deriv(0).value(),
    };
    let v_up = raised(geom, &frame.v);
    let grad_r = grad_scalar(n, &geom.scal);
    let mut out = dt_r + geom.scal.value() / t;
    for i in 0..n {
        out += 2.0 * grad_r[i].value() * v_up[i];
        for j in 0..n {
            out += 2.0 * geom.ricci[i][j].value() * v_up[i] * v_up[j];
        }
    }
    Ok(out)
}

/// The linear trace quadratic
/// `Z = div(div(h)) + Rc·h + 2 div(h)·V + h_ij VⁱVʲ + H/2t`,
/// assembled from parts and cross-checked through the space-time
/// contraction with `V̄⁰ = 1`.  `include_time_term = false` drops `H/2t`
/// from both paths (then any t is accepted).
pub fn linear_trace_z(
    geom: &Geometry<Jet>,
    h: &CotensorJet,
    ht: &SpaceTimeSymTensor,
    frame: &HarnackFrame,
    t: f64,
    include_time_term: bool,
) -> Result<QuadraticValue, HarnackError> {
    if include_time_term && t <= 0.0 {
        return Err(HarnackError::NonPositiveTime { t });
    }
    let n = geom.n;
    let hmat = t2(n, |i, j| h.at2(i, j).clone());
    let dd = divergence(geom, &hmat);
    let v_up = raised(geom, &frame.v);

    let divdiv = dd.divdiv.value();
    let rc_dot_h = dd.rc_dot_h.value();
    let mut two_div_v = 0.0;
    let mut hvv = 0.0;
    for i in 0..n {
        two_div_v += 2.0 * dd.div[i].value() * v_up[i];
        for j in 0..n {
            hvv += hmat[i][j].value() * v_up[i] * v_up[j];
        }
    }
    let trace_term = if include_time_term {
        dd.trace.value() / (2.0 * t)
    } else {
        0.0
    };
    let value = divdiv + rc_dot_h + two_div_v + hvv + trace_term;

    // Space-time path: V̄ = ∂ₜ ⊕ V♯.
    let mut vbar = vec![1.0];
    vbar.extend_from_slice(&v_up);
    let mut contraction = 0.0;
    for a in 0..ht.m {
        for b in 0..ht.m {
            contraction += ht.comps[a][b].value() * vbar[a] * vbar[b];
        }
    }
    contraction += trace_term;

    Ok(QuadraticValue {
        value,
        divdiv,
        rc_dot_h,
        two_div_v,
        hvv,
        trace_term,
        contraction,
    })
}

/// The restated space-time quadratic `Σ h̃_ab (Ṽ^a Ṽ^b + (1/2t) g̃^{ab})`
/// with `Ṽ = Ṽ⁰∂ₜ ⊕ V♯` and Ṽ⁰ taken from the frame.
pub fn restated_quadratic(
    ht: &SpaceTimeSymTensor,
    gt: &SpaceTimeCometric,
    geom: &Geometry<Jet>,
    frame: &HarnackFrame,
    t: f64,
) -> Result<f64, HarnackError> {
    if t <= 0.0 {
        return Err(HarnackError::NonPositiveTime { t });
    }
    let mut vt = vec![frame.vtilde0];
    vt.extend_from_slice(&raised(geom, &frame.v));
    let mut out = 0.0;
    for a in 0..ht.m {
        for b in 0..ht.m {
            out += ht.comps[a][b].value()
                * (vt[a] * vt[b] + gt.gt_inv[a][b].value() / (2.0 * t));
        }
    }
    Ok(out)
}

/// The matrix quadratic, two ways.  Explicit:
/// `Q = M_ij WⁱWʲ − 2 (∇ᵢR_jk − ∇ⱼR_ik) Uⁱʲ Wᵏ + R_ijkl Uⁱʲ Uˡᵏ`
/// with `M_ij = ΔR_ij − ½∇ᵢ∇ⱼR + 2 R_kijl R^{kl} − R_iᵏ R_kj`.
/// Contraction: `Q = g̃^{ap} R̃_pbc^l T_a^b T_l^c` with `T_i^j = Uᵢʲ`,
/// `T_i^0 = W_i`, `T_0^· = 0`.  Requires a [`SpaceTime`] built with V = 0.
pub fn matrix_q(st: &SpaceTime, frame: &HarnackFrame) -> Result<(f64, f64), HarnackError> {
    if st.has_v() {
        return Err(HarnackError::MissingCurvature);
    }
    frame.assert_antisymmetric();
    let geom = &st.geom;
    let n = geom.n;
    let w_up = raised(geom, &frame.w);
    let u_up = t2(n, |i, j| {
        let mut s = 0.0;
        for a in 0..n {
            for b in 0..n {
                s += geom.ginv[i][a].value() * geom.ginv[j][b].value() * frame.u[a][b];
            }
        }
        s
    });

    // Explicit form.
    let lap_rc = lap_t2(geom, &geom.ricci);
    let hess_r = hessian(geom, &geom.scal);
    let cov_rc = cov2(geom, &geom.ricci);
    let rc_up2 = t2(n, |p, q| {
        let mut s = 0.0;
        for a in 0..n {
            for b in 0..n {
                s += geom.ginv[p][a].value()
                    * geom.ginv[q][b].value()
                    * geom.ricci[a][b].value();
            }
        }
        s
    });
    let mut q_explicit = 0.0;
    for i in 0..n {
        for j in 0..n {
            let mut m_ij = lap_rc[i][j].value() - 0.5 * hess_r[i][j].value();
            for k in 0..n {
                for l in 0..n {
                    m_ij += 2.0 * geom.riem_low[k][i][j][l].value() * rc_up2[k][l];
                }
                m_ij -= geom.ricci_up[i][k].value() * geom.ricci[k][j].value();
            }
            q_explicit += m_ij * w_up[i] * w_up[j];
            for k in 0..n {
                q_explicit -= 2.0
                    * (cov_rc[i][j][k].value() - cov_rc[j][i][k].value())
                    * u_up[i][j]
                    * w_up[k];
                for l in 0..n {
                    q_explicit +=
                        geom.riem_low[i][j][k][l].value() * u_up[i][j] * u_up[l][k];
                }
            }
        }
    }

    // Space-time contraction with the mixed tensor T.
    let m = st.m;
    let mut t_mix = vec![vec![0.0; m]; m];
    for i in 1..m {
        t_mix[i][0] = frame.w[i - 1];
        for j in 1..m {
            let mut s = 0.0;
            for b in 0..n {
                s += frame.u[i - 1][b] * geom.ginv[b][j - 1].value();
            }
            t_mix[i][j] = s;
        }
    }
    let mut q_contraction = 0.0;
    for a in 0..m {
        for p in 0..m {
            let gt_ap = st.cometric.gt_inv[a][p].value();
            if gt_ap == 0.0 {
                continue;
            }
            for b in 0..m {
                for c in 0..m {
                    for l in 0..m {
                        q_contraction += gt_ap
                            * st.curv.riem[p][b][c][l].value()
                            * t_mix[a][b]
                            * t_mix[l][c];
                    }
                }
            }
        }
    }
    Ok((q_explicit, q_contraction))
}

/// Completes the square in Z over V.  Returns the minimizing 1-form
/// `V*_i = g_ij V*^j` with `V*^j` solving `h_jk V*^k = −div(h)_j`, and
/// `Zmin = h̃₀₀ − (h⁻¹)ⁱʲ div(h)ᵢ div(h)ⱼ + H/2t`.
pub struct OptimalV {
    pub v_star: Vec<f64>,
    pub zmin: f64,
}

pub fn optimal_v(
    geom: &Geometry<Jet>,
    h: &CotensorJet,
    t: f64,
) -> Result<OptimalV, HarnackError> {
    if t <= 0.0 {
        return Err(HarnackError::NonPositiveTime { t });
    }
    let n = geom.n;
    let hmat = t2(n, |i, j| h.at2(i, j).clone());
    let hvals: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| hmat[i][j].value()).collect())
        .collect();
    let min_eig = min_eigenvalue(&hvals);
    if min_eig < 1e-10 {
        return Err(HarnackError::DegenerateH { min_eig });
    }
    let dd = divergence(geom, &hmat);
    let div_vals: Vec<f64> = (0..n).map(|i| -dd.div[i].value()).collect();
    let v_star_up = solve_spd(&hvals, &div_vals)
        .ok_or(HarnackError::DegenerateH { min_eig })?;
    let mut zmin = dd.divdiv.value() + dd.rc_dot_h.value() + dd.trace.value() / (2.0 * t);
    for i in 0..n {
        zmin += dd.div[i].value() * v_star_up[i];
    }
    let v_star = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| geom.g[i][j].value() * v_star_up[j])
                .sum()
        })
        .collect();
    Ok(OptimalV { v_star, zmin })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::jets::{AnalyticProvider, Base, ChartPoint};
    use crate::riemann::{build_geometry_jets, ricci_cotensor};
    use crate::spacetime::{build_cometric, extend_h, SpaceTime};
    use crate::taylor::{space, Jet};
    use crate::tensor::Scalar;
    use crate::tolerances as tol;
    use crate::Mutation;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sphere_setup(t: f64, order: usize) -> (Geometry<Jet>, CotensorJet, SpaceTimeSymTensor) {
        let prov = AnalyticProvider::plain("sphere2", Base::Sphere { n: 2, r0: 1.0 });
        let p = ChartPoint::new(vec![0.0, 0.0], t);
        let mj = prov.metric_jet(&p, order).unwrap();
        let geom = build_geometry_jets(&mj, Mutation::None).unwrap();
        let h = ricci_cotensor(&geom);
        let ht = extend_h(&geom, &h, Mutation::None).unwrap();
        (geom, h, ht)
    }

    #[test]
    fn trace_quadratic_frozen_sphere_value() {
        // R(t) = 2/(1−2t) on the unit shrinker; at t = 0.1 with V = 0 the
        // quadratic is ∂ₜR + R/t = R² + R/t = 6.25 + 25 = 31.25.
        let (geom, _, _) = sphere_setup(0.1, 5);
        let frame = HarnackFrame::zero(2);
        let q = trace_quadratic(&geom, &frame, 0.1, DtRMode::Substitute).unwrap();
        assert!((q - 31.25).abs() < tol::FROZEN_EXACT);
        let q_jet = trace_quadratic(&geom, &frame, 0.1, DtRMode::FromJet).unwrap();
        assert!((q - q_jet).abs() < 1e-9, "substitution vs jet ∂ₜR: {q} vs {q_jet}");
        assert!(matches!(
            trace_quadratic(&geom, &frame, 0.0, DtRMode::Substitute),
            Err(HarnackError::NonPositiveTime { .. })
        ));
    }

    #[test]
    fn linear_trace_frozen_sphere_value_and_specialization() {
        // h = Rc at t = 0.1: Z = |Rc|² + R/2t = 3.125 + 12.5 = 15.625, and
        // 2Z equals the trace quadratic.
        let (geom, h, ht) = sphere_setup(0.1, 5);
        let frame = HarnackFrame::zero(2);
        let z = linear_trace_z(&geom, &h, &ht, &frame, 0.1, true).unwrap();
        assert!((z.value - 15.625).abs() < tol::FROZEN_EXACT);
        assert!((z.value - z.contraction).abs() < 1e-12);
        assert!((z.divdiv).abs() < 1e-10);
        assert!((z.rc_dot_h - 3.125).abs() < 1e-9);
        assert!((z.trace_term - 12.5).abs() < 1e-10);
        let tq = trace_quadratic(&geom, &frame, 0.1, DtRMode::Substitute).unwrap();
        assert!((2.0 * z.value - tq).abs() < 1e-9);
    }

    #[test]
    fn specialization_holds_with_random_v() {
        // 2·Z(h = Rc, V) = trace quadratic at the same V, for any V.
        let (geom, h, ht) = sphere_setup(0.07, 5);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let frame = HarnackFrame::random(2, &mut rng);
            let z = linear_trace_z(&geom, &h, &ht, &frame, 0.07, true).unwrap();
            let tq = trace_quadratic(&geom, &frame, 0.07, DtRMode::Substitute).unwrap();
            assert!((2.0 * z.value - tq).abs() < 1e-8);
            assert!((z.value - z.contraction).abs() < 1e-11);
        }
    }

    #[test]
    fn quadratic_structure_in_lambda() {
        // Z(λV) is a quadratic polynomial in λ whose coefficients are the
        // labeled parts.
        let (geom, h, ht) = sphere_setup(0.05, 5);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let frame = HarnackFrame::random(2, &mut rng);
        let z1 = linear_trace_z(&geom, &h, &ht, &frame, 0.05, true).unwrap();
        let mut scaled = frame.clone();
        for v in scaled.v.iter_mut() {
            *v *= 3.0;
        }
        let z3 = linear_trace_z(&geom, &h, &ht, &scaled, 0.05, true).unwrap();
        let a = z1.divdiv + z1.rc_dot_h + z1.trace_term;
        let predicted = a + 3.0 * z1.two_div_v + 9.0 * z1.hvv;
        assert!((z3.value - predicted).abs() < 1e-10);
    }

    #[test]
    fn matrix_q_frozen_sphere_values() {
        // Unit sphere, t = 0: W = dx¹, U = 0 gives Q = K² g^{11} = 0.25;
        // W = 0, U = dx¹∧dx² (U_12 = 1) gives Q = 2K|U|² = 0.25.
        let prov = AnalyticProvider::plain("sphere2", Base::Sphere { n: 2, r0: 1.0 });
        let p = ChartPoint::new(vec![0.0, 0.0], 0.0);
        let mj = prov.metric_jet(&p, 5).unwrap();
        let geom = build_geometry_jets(&mj, Mutation::None).unwrap();
        let st = SpaceTime::build(geom, None, Mutation::None).unwrap();
        let mut frame = HarnackFrame::zero(2);
        frame.w[0] = 1.0;
        let (qe, qc) = matrix_q(&st, &frame).unwrap();
        assert!((qe - 0.25).abs() < tol::FROZEN_EXACT, "explicit {qe}");
        assert!((qc - 0.25).abs() < tol::FROZEN_EXACT, "contraction {qc}");
        let mut frame_u = HarnackFrame::zero(2);
        frame_u.u[0][1] = 1.0;
        frame_u.u[1][0] = -1.0;
        let (qe, qc) = matrix_q(&st, &frame_u).unwrap();
        assert!((qe - 0.25).abs() < tol::FROZEN_EXACT, "explicit U-only {qe}");
        assert!((qc - 0.25).abs() < tol::FROZEN_EXACT, "contraction U-only {qc}");
    }

    #[test]
    fn matrix_q_agreement_on_generic_providers() {
        let provs = [
            AnalyticProvider::plain("sphere3", Base::Sphere { n: 3, r0: 1.0 }),
            AnalyticProvider::plain("cigar", Base::Cigar),
            AnalyticProvider::plain("s2xr", Base::SphereCrossFlat { r0: 1.0 }),
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for prov in provs.iter() {
            for _ in 0..10 {
                let p = prov.sample(&mut rng);
                let mj = prov.metric_jet(&p, 5).unwrap();
                let geom = build_geometry_jets(&mj, Mutation::None).unwrap();
                let st = SpaceTime::build(geom, None, Mutation::None).unwrap();
                let frame = HarnackFrame::random(prov.dim(), &mut rng);
                let (qe, qc) = matrix_q(&st, &frame).unwrap();
                assert!(
                    (qe - qc).abs() < tol::IDENTITY_TIGHT * (1.0 + qe.abs()),
                    "{}: {qe} vs {qc}",
                    prov.id()
                );
            }
        }
    }

    #[test]
    fn matrix_q_rejects_modified_flow() {
        let provs = crate::jets::standard_providers(3);
        let prov = provs.iter().find(|p| p.has_flow_vector()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = prov.sample(&mut rng);
        let mj = prov.metric_jet(&p, 4).unwrap();
        let geom = build_geometry_jets(&mj, Mutation::None).unwrap();
        let v = prov.flow_vector(&p, 4).unwrap();
        let st = SpaceTime::build(geom, v, Mutation::None).unwrap();
        let frame = HarnackFrame::zero(prov.dim());
        assert!(matches!(
            matrix_q(&st, &frame),
            Err(HarnackError::MissingCurvature)
        ));
    }

    #[test]
    fn optimal_v_on_sphere_and_dominance() {
        let (geom, h, ht) = sphere_setup(0.1, 5);
        let opt = optimal_v(&geom, &h, 0.1).unwrap();
        assert!(opt.v_star.iter().all(|c| c.abs() < 1e-10));
        assert!((opt.zmin - 15.625).abs() < 1e-9);
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..200 {
            let frame = HarnackFrame::random(2, &mut rng);
            let z = linear_trace_z(&geom, &h, &ht, &frame, 0.1, true).unwrap();
            assert!(z.value >= opt.zmin - tol::POSITIVITY_SLACK);
        }
        // Placing V* itself in a frame attains the minimum.
        let mut frame = HarnackFrame::zero(2);
        frame.v = opt.v_star.clone();
        let z = linear_trace_z(&geom, &h, &ht, &frame, 0.1, true).unwrap();
        assert!((z.value - opt.zmin).abs() < 1e-10);
    }

    #[test]
    fn optimal_v_rejects_degenerate_h() {
        let prov = AnalyticProvider::plain("flat2", Base::Flat { n: 2 });
        let p = ChartPoint::new(vec![0.2, 0.4], 0.0);
        let mj = prov.metric_jet(&p, 4).unwrap();
        let geom = build_geometry_jets(&mj, Mutation::None).unwrap();
        let one = Jet::constant(space(3, 4), 1.0);
        let zero = one.zero_like();
        let comps = t2(2, |i, j| if i == 0 && j == 0 { one.clone() } else { zero.clone() });
        let h = CotensorJet::rank2(2, comps);
        assert!(matches!(
            optimal_v(&geom, &h, 0.1),
            Err(HarnackError::DegenerateH { .. })
        ));
    }

    #[test]
    fn restated_quadratic_positive_on_shrinker() {
        // Theorem B restated: Σ h̃_ab(Ṽ^aṼ^b + g̃^{ab}/2t) ≥ 0 on the
        // shrinking sphere for h = Rc and sampled Ṽ⁰ ∈ {0, ±1, ±10}.
        for &t in &[0.01, 0.05, 0.1] {
            let (geom, _h, ht) = sphere_setup(t, 5);
            let gt = build_cometric(&geom);
            let mut rng = ChaCha8Rng::seed_from_u64(17);
            for _ in 0..300 {
                let frame = HarnackFrame::random(2, &mut rng);
                let q = restated_quadratic(&ht, &gt, &geom, &frame, t).unwrap();
                assert!(q >= -tol::POSITIVITY_SLACK, "t={t}: {q}");
            }
        }
    }
}
