//! Degenerate space-time geometry over M × (0, T).
//!
//! Space-time indices run `0..=n` with index 0 = time, so a space-time
//! spatial index `i ≥ 1` addresses chart axis `i − 1`.  This matches the jet
//! variable layout (variable 0 is t), so `Jet::deriv(a)` *is* the coordinate
//! partial `∂_a` for a space-time index `a`.
//!
//! The pieces: the cometric g̃ (inverse spatial block bordered by zeros), the
//! connection table Γ̃ built from the spatial geometry and an optional flow
//! 1-form V, the curvature R̃ of Γ̃ by the coordinate formula, covariant
//! derivatives with respect to Γ̃, the extension h̃ of a symmetric 2-tensor by
//! divergence data, and the space-time Lichnerowicz operator Δ̃_L.
//!
//! Raising a space-time index only ever contracts with g̃, whose row 0
//! vanishes; no inverse of a degenerate object is ever formed.

use crate::jets::CotensorJet;
use crate::riemann::{cov1, divergence, grad_scalar, GeomError, Geometry};
use crate::taylor::Jet;
use crate::tensor::{sum1, sum2, t1, t2, t3, t4, Scalar, T1, T2, T3, T4};
use crate::Mutation;

/// The degenerate space-time cometric: `gt_inv[a][b] = g^{ab}` for spatial
/// `a, b ≥ 1` and identically zero on row and column 0.
pub struct SpaceTimeCometric {
    pub m: usize,
    pub gt_inv: T2<Jet>,
}

pub fn build_cometric(geom: &Geometry<Jet>) -> SpaceTimeCometric {
    let m = geom.n + 1;
    let z = geom.g[0][0].zero_like();
    let gt_inv = t2(m, |a, b| {
        if a >= 1 && b >= 1 {
            geom.ginv[a - 1][b - 1].clone()
        } else {
            z.clone()
        }
    });
    SpaceTimeCometric { m, gt_inv }
}

/// The space-time connection table.  `gammat[k][a][b] = Γ̃ᵏ_ab` with
/// `Γ̃⁰_ab ≡ 0`; the table is symmetric in the lower pair.  Spatial and time
/// partials of every entry live inside the jets: see [`SpaceTimeConnection::dgammat`]
/// and [`SpaceTimeConnection::dt_gammat`].
pub struct SpaceTimeConnection {
    pub m: usize,
    pub gammat: T3<Jet>,
}

impl SpaceTimeConnection {
    /// `∂_c Γ̃ᵏ_ab` as a jet (c is a space-time index; 0 = time).
    pub fn dgammat(&self, k: usize, a: usize, b: usize, c: usize) -> Jet {
        self.gammat[k][a][b].deriv(c)
    }

    /// `∂_t Γ̃ᵏ_ab` as a jet.
    pub fn dt_gammat(&self, k: usize, a: usize, b: usize) -> Jet {
        self.gammat[k][a][b].deriv(0)
    }
}

/// Builds Γ̃ from the spatial geometry and an optional flow 1-form V:
///
/// * `Γ̃ᵏ_ij = Γᵏ_ij`
/// * `Γ̃ᵏ_i0 = −Rᵢᵏ + ∇ᵢVᵏ`
/// * `Γ̃ᵏ_00 = −½∇ᵏ(R + |V|²) + gᵏᵖ ∂ₜV_p`
/// * `Γ̃⁰_ab = 0`
///
/// With `v = None` the table reduces to the unmodified-flow version
/// (`Γ, −Rᵢᵏ, −½∇ᵏR`).  [`Mutation::DropGradRInGamma00`] removes the `−½∇ᵏR`
/// summand from `Γ̃ᵏ_00` (fault-injection mode for the check suite).
pub fn build_connection(
    geom: &Geometry<Jet>,
    v: Option<&CotensorJet>,
    mutation: Mutation,
) -> Result<SpaceTimeConnection, GeomError> {
    let n = geom.n;
    let m = n + 1;
    let have = geom.g[0][0].deg();
    if have < 3 {
        return Err(GeomError::InsufficientJet { need: 3, have });
    }
    if let Some(vv) = v {
        let vdeg = vv.at1(0).deg();
        if vdeg < 2 || vv.at1(0).tdeg() < 1 {
            return Err(GeomError::InsufficientJet { need: 2, have: vdeg });
        }
    }
    let z = geom.g[0][0].zero_like();

    // ∇ᵢVᵏ (raised) and the scalar |V|², both absent when V = 0.
    let cov_v = v.map(|vv| {
        let lower = t1(n, |i| vv.at1(i).clone());
        cov1(geom, &lower)
    });
    let v_norm2 = v.map(|vv| {
        sum2(&z, n, |p, q| geom.ginv[p][q].mul(vv.at1(p)).mul(vv.at1(q)))
    });

    // Lower-index gradients of R and |V|².
    let grad_r = grad_scalar(n, &geom.scal);
    let grad_v2 = v_norm2.as_ref().map(|s| grad_scalar(n, s));

    let gamma_i0 = t2(n, |i, k| {
        let mut e = geom.ricci_up[i][k].neg();
        if let Some(cv) = &cov_v {
            let raised = sum1(&z, n, |p| geom.ginv[k][p].mul(&cv[i][p]));
            e = e.add(&raised);
        }
        e
    });
    let gamma_00 = t1(n, |k| {
        let mut grad_part = if mutation == Mutation::DropGradRInGamma00 {
            z.clone()
        } else {
            sum1(&z, n, |p| geom.ginv[k][p].mul(&grad_r[p]))
        };
        if let Some(gv2) = &grad_v2 {
            grad_part = grad_part.add(&sum1(&z, n, |p| geom.ginv[k][p].mul(&gv2[p])));
        }
        let mut e = grad_part.scale(-0.5);
        if let Some(vv) = v {
            let dt_v = sum1(&z, n, |p| geom.ginv[k][p].mul(&vv.at1(p).deriv(0)));
            e = e.add(&dt_v);
        }
        e
    });

    let gammat = t3(m, |k, a, b| {
        if k == 0 {
            z.clone()
        } else if a >= 1 && b >= 1 {
            geom.gamma[k - 1][a - 1][b - 1].clone()
        } else if a >= 1 {
            gamma_i0[a - 1][k - 1].clone()
        } else if b >= 1 {
            gamma_i0[b - 1][k - 1].clone()
        } else {
            gamma_00[k - 1].clone()
        }
    });
    Ok(SpaceTimeConnection { m, gammat })
}

/// Max over a, b, c of `|∇̃_a g̃^{bc}|` where
/// `∇̃_a g̃^{bc} = ∂_a g̃^{bc} + Γ̃ᵇ_ap g̃^{pc} + Γ̃ᶜ_ap g̃^{bp}`.
/// The a = 0 case differentiates the cometric jets in time, so the residual
/// vanishes exactly when the underlying metric solves the (modified) flow.
pub fn compat_check(gt: &SpaceTimeCometric, conn: &SpaceTimeConnection) -> f64 {
    let m = gt.m;
    let mut worst = 0.0f64;
    for a in 0..m {
        for b in 0..m {
            for c in 0..m {
                let mut r = gt.gt_inv[b][c].deriv(a).value();
                for p in 0..m {
                    r += conn.gammat[b][a][p].value() * gt.gt_inv[p][c].value()
                        + conn.gammat[c][a][p].value() * gt.gt_inv[b][p].value();
                }
                worst = worst.max(r.abs());
            }
        }
    }
    worst
}

/// Space-time curvature of Γ̃ by the coordinate formula
/// `R̃_abc^l = ∂_a Γ̃ˡ_bc − ∂_b Γ̃ˡ_ac + Γ̃ᵖ_bc Γ̃ˡ_ap − Γ̃ᵖ_ac Γ̃ˡ_bp`
/// and its trace `R̃_bc = R̃_pbc^p`.
pub struct SpaceTimeCurvature {
    pub m: usize,
    /// `riem[a][b][c][l] = R̃_abc^l`
    pub riem: T4<Jet>,
    /// `ricci[b][c] = R̃_bc`
    pub ricci: T2<Jet>,
}

pub fn st_curvature(conn: &SpaceTimeConnection, mutation: Mutation) -> SpaceTimeCurvature {
    let (riem, ricci) = curvature_of_table(conn.m, &conn.gammat, mutation);
    SpaceTimeCurvature { m: conn.m, riem, ricci }
}

/// Coordinate-formula curvature of an arbitrary connection table over `m`
/// indices (index 0 differentiates in t): returns `(R_abc^l, R_bc)`.
pub fn curvature_of_table(
    m: usize,
    gamma: &T3<Jet>,
    mutation: Mutation,
) -> (T4<Jet>, T2<Jet>) {
    let z = gamma[0][0][0].zero_like();
    let sign = if mutation == Mutation::FlipRiemannSign { -1.0 } else { 1.0 };
    let riem = t4(m, |a, b, c, l| {
        let deriv = gamma[l][b][c].deriv(a).sub(&gamma[l][a][c].deriv(b));
        let quad = sum1(&z, m, |p| {
            gamma[p][b][c]
                .mul(&gamma[l][a][p])
                .sub(&gamma[p][a][c].mul(&gamma[l][b][p]))
        });
        deriv.add(&quad).scale(sign)
    });
    let ricci = t2(m, |b, c| sum1(&z, m, |p| riem[p][b][c][p].clone()));
    (riem, ricci)
}

// ---------------------------------------------------------------------------
// Space-time covariant derivatives
// ---------------------------------------------------------------------------

/// `∇̃_a w_b` for a space-time 1-form.
pub fn st_cov1(conn: &SpaceTimeConnection, w: &T1<Jet>) -> T2<Jet> {
    let m = conn.m;
    t2(m, |a, b| {
        let corr = sum1(&w[0], m, |p| conn.gammat[p][a][b].mul(&w[p]));
        w[b].deriv(a).sub(&corr)
    })
}

/// `∇̃_c h_ab` for a covariant space-time 2-tensor.
pub fn st_cov2(conn: &SpaceTimeConnection, h: &T2<Jet>) -> T3<Jet> {
    let m = conn.m;
    t3(m, |c, a, b| {
        let corr = sum1(&h[0][0], m, |p| {
            conn.gammat[p][c][a]
                .mul(&h[p][b])
                .add(&conn.gammat[p][c][b].mul(&h[a][p]))
        });
        h[a][b].deriv(c).sub(&corr)
    })
}

/// `∇̃_d T_cab` for a covariant space-time 3-tensor.
pub fn st_cov3(conn: &SpaceTimeConnection, t: &T3<Jet>) -> T4<Jet> {
    let m = conn.m;
    t4(m, |d, c, a, b| {
        let corr = sum1(&t[0][0][0], m, |p| {
            conn.gammat[p][d][c]
                .mul(&t[p][a][b])
                .add(&conn.gammat[p][d][a].mul(&t[c][p][b]))
                .add(&conn.gammat[p][d][b].mul(&t[c][a][p]))
        });
        t[c][a][b].deriv(d).sub(&corr)
    })
}

/// `∇̃_c A_a^b` for a (1,1)-tensor stored as `a[lower][upper]`.
pub fn st_cov_mixed11(conn: &SpaceTimeConnection, a: &T2<Jet>) -> T3<Jet> {
    let m = conn.m;
    t3(m, |c, lo, up| {
        let corr = sum1(&a[0][0], m, |p| {
            conn.gammat[p][c][lo]
                .mul(&a[p][up])
                .sub(&conn.gammat[up][c][p].mul(&a[lo][p]))
        });
        a[lo][up].deriv(c).sub(&corr)
    })
}

/// `∇̃_e R_abc^l` for a (3,1) curvature-type tensor; returns one T4 per e.
pub fn st_cov_riem(conn: &SpaceTimeConnection, r: &T4<Jet>) -> Vec<T4<Jet>> {
    let m = conn.m;
    (0..m)
        .map(|e| {
            t4(m, |a, b, c, l| {
                let corr = sum1(&r[0][0][0][0], m, |p| {
                    conn.gammat[p][e][a]
                        .mul(&r[p][b][c][l])
                        .add(&conn.gammat[p][e][b].mul(&r[a][p][c][l]))
                        .add(&conn.gammat[p][e][c].mul(&r[a][b][p][l]))
                        .sub(&conn.gammat[l][e][p].mul(&r[a][b][c][p]))
                });
                r[a][b][c][l].deriv(e).sub(&corr)
            })
        })
        .collect()
}

/// Degenerate raise: `w^a = g̃^{ap} w_p` (component 0 of the result is 0).
pub fn raise_st(gt: &SpaceTimeCometric, w: &T1<Jet>) -> T1<Jet> {
    let m = gt.m;
    t1(m, |a| sum1(&w[0], m, |p| gt.gt_inv[a][p].mul(&w[p])))
}

/// `Δ̃ h_ab = g̃^{cd} ∇̃_c ∇̃_d h_ab` (the degenerate trace sums spatial
/// indices only, through the zero row of g̃).
pub fn st_laplacian_t2(
    gt: &SpaceTimeCometric,
    conn: &SpaceTimeConnection,
    h: &T2<Jet>,
) -> T2<Jet> {
    let m = gt.m;
    let d1 = st_cov2(conn, h);
    let d2 = st_cov3(conn, &d1);
    t2(m, |a, b| {
        sum2(&h[0][0], m, |c, d| gt.gt_inv[c][d].mul(&d2[c][d][a][b]))
    })
}

// ---------------------------------------------------------------------------
// The extension h̃ and the space-time Lichnerowicz operator
// ---------------------------------------------------------------------------

/// A symmetric space-time 2-tensor; when produced by [`extend_h`] the
/// components are `h̃_ij = h_ij`, `h̃_0i = div(h)_i`,
/// `h̃_00 = div(div(h)) + Rc·h`.
pub struct SpaceTimeSymTensor {
    pub m: usize,
    pub comps: T2<Jet>,
}

/// Extends a spatial symmetric 2-tensor to space-time by divergence data.
/// [`Mutation::DropRcDotH`] omits the `Rc·h` summand of `h̃_00`
/// (fault-injection mode for the check suite).
pub fn extend_h(
    geom: &Geometry<Jet>,
    h: &CotensorJet,
    mutation: Mutation,
) -> Result<SpaceTimeSymTensor, GeomError> {
    let n = geom.n;
    let m = n + 1;
    assert_eq!(h.rank, 2, "extend_h expects a rank-2 cotensor");
    let have = h.at2(0, 0).deg();
    if have < 2 {
        return Err(GeomError::InsufficientJet { need: 2, have });
    }
    let hmat = t2(n, |i, j| h.at2(i, j).clone());
    let dd = divergence(geom, &hmat);
    let h00 = if mutation == Mutation::DropRcDotH {
        dd.divdiv.clone()
    } else {
        dd.divdiv.add(&dd.rc_dot_h)
    };
    let comps = t2(m, |a, b| {
        if a >= 1 && b >= 1 {
            hmat[a - 1][b - 1].clone()
        } else if a >= 1 {
            dd.div[a - 1].clone()
        } else if b >= 1 {
            dd.div[b - 1].clone()
        } else {
            h00.clone()
        }
    });
    Ok(SpaceTimeSymTensor { m, comps })
}

/// Max over `0 ≤ a ≤ n` of `|h̃_a0 − g̃^{cd} ∇̃_c h̃_da|`.
pub fn lemma22_residual(
    ht: &SpaceTimeSymTensor,
    conn: &SpaceTimeConnection,
    gt: &SpaceTimeCometric,
) -> f64 {
    let m = ht.m;
    let d1 = st_cov2(conn, &ht.comps);
    let mut worst = 0.0f64;
    for a in 0..m {
        let mut contr = 0.0;
        for c in 0..m {
            for d in 0..m {
                contr += gt.gt_inv[c][d].value() * d1[c][d][a].value();
            }
        }
        worst = worst.max((ht.comps[a][0].value() - contr).abs());
    }
    worst
}

/// The space-time Lichnerowicz operator
/// `Δ̃_L h̃_ab = Δ̃ h̃_ab + 2 g̃^{pq} h̃_ql R̃_pab^l − R̃_a^q h̃_bq − R̃_b^q h̃_aq`,
/// all raises through g̃.
pub fn st_lichnerowicz(
    ht: &SpaceTimeSymTensor,
    conn: &SpaceTimeConnection,
    curv: &SpaceTimeCurvature,
    gt: &SpaceTimeCometric,
) -> SpaceTimeSymTensor {
    let m = ht.m;
    let z = ht.comps[0][0].zero_like();
    let rough = st_laplacian_t2(gt, conn, &ht.comps);
    // Mixed extension with the first index raised: (h̃♯)ᵖ_l = g̃^{pq} h̃_ql.
    let h_mixed = t2(m, |p, l| {
        sum1(&z, m, |q| gt.gt_inv[p][q].mul(&ht.comps[q][l]))
    });
    let ricci_mixed = t2(m, |a, q| {
        sum1(&z, m, |c| gt.gt_inv[q][c].mul(&curv.ricci[a][c]))
    });
    let comps = t2(m, |a, b| {
        let curv_term = sum2(&z, m, |p, l| h_mixed[p][l].mul(&curv.riem[p][a][b][l]));
        let mixed = sum1(&z, m, |q| {
            ricci_mixed[a][q]
                .mul(&ht.comps[b][q])
                .add(&ricci_mixed[b][q].mul(&ht.comps[a][q]))
        });
        rough[a][b].add(&curv_term.scale(2.0)).sub(&mixed)
    });
    SpaceTimeSymTensor { m, comps }
}

// ---------------------------------------------------------------------------
// Space-time covectors: Ṽ = V + h·dt and W̃
// ---------------------------------------------------------------------------

/// A space-time 1-form; houses Ṽ (flow 1-form plus an arbitrary scalar as
/// the dt-component) and W̃ (the DeTurck 1-form with its divergence as the
/// dt-component).
pub struct SpaceTimeCovector {
    pub m: usize,
    pub comps: T1<Jet>,
}

/// `W̃_i = W_i` for spatial i, `W̃_0 = g̃^{pq} ∇̃_p W̃_q = ∇ᵖW_p` (the spatial
/// divergence of the 1-form with respect to g).
pub fn build_wtilde(geom: &Geometry<Jet>, w: &CotensorJet) -> SpaceTimeCovector {
    let n = geom.n;
    let m = n + 1;
    assert_eq!(w.rank, 1, "build_wtilde expects a 1-form");
    let lower = t1(n, |i| w.at1(i).clone());
    let cw = cov1(geom, &lower);
    let div_w = sum2(&lower[0], n, |p, q| geom.ginv[p][q].mul(&cw[p][q]));
    let comps = t1(m, |a| if a == 0 { div_w.clone() } else { lower[a - 1].clone() });
    SpaceTimeCovector { m, comps }
}

/// `Ṽ_i = V_i` for spatial i (zero when V is absent), `Ṽ_0` = the supplied
/// arbitrary scalar.
pub fn build_vtilde(n: usize, v: Option<&CotensorJet>, vt0: &Jet) -> SpaceTimeCovector {
    let m = n + 1;
    let z = vt0.zero_like();
    let comps = t1(m, |a| {
        if a == 0 {
            vt0.clone()
        } else {
            match v {
                Some(vv) => vv.at1(a - 1).clone(),
                None => z.clone(),
            }
        }
    });
    SpaceTimeCovector { m, comps }
}

// ---------------------------------------------------------------------------
// Bundle
// ---------------------------------------------------------------------------

/// Everything the check layer needs at one point: the spatial geometry, the
/// optional flow 1-form, and the three space-time objects built from them.
pub struct SpaceTime {
    pub n: usize,
    pub m: usize,
    pub geom: Geometry<Jet>,
    pub v: Option<CotensorJet>,
    pub cometric: SpaceTimeCometric,
    pub conn: SpaceTimeConnection,
    pub curv: SpaceTimeCurvature,
    pub mutation: Mutation,
}

impl SpaceTime {
    pub fn build(
        geom: Geometry<Jet>,
        v: Option<CotensorJet>,
        mutation: Mutation,
    ) -> Result<SpaceTime, GeomError> {
        let conn = build_connection(&geom, v.as_ref(), mutation)?;
        let curv = st_curvature(&conn, mutation);
        let cometric = build_cometric(&geom);
        Ok(SpaceTime {
            n: geom.n,
            m: geom.n + 1,
            geom,
            v,
            cometric,
            conn,
            curv,
            mutation,
        })
    }

    pub fn has_v(&self) -> bool {
        self.v.is_some()
    }
}
