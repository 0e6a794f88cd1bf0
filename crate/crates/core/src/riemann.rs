//! Spatial Riemannian curvature from metric data.
//!
//! All formulas are generic over the [`Scalar`] backend, so the identical
//! code path produces pointwise jets (exact derivatives) and grid fields
//! (stencil derivatives). Index conventions, fixed once here and validated
//! against round spheres in the tests:
//!
//! * `gamma[k][i][j] = Γ^k_ij`
//! * `riem[i][j][k][l] = R_ijk^l = ∂_i Γ^l_jk - ∂_j Γ^l_ik
//!                                + Γ^p_jk Γ^l_ip - Γ^p_ik Γ^l_jp`
//! * `riem_low[i][j][k][l] = R_ijkl = R_ijk^p g_pl`
//! * `ricci[j][k] = R_jk = R_pjk^p`
//!
//! With this sign, constant curvature `K > 0` gives
//! `R_ijkl = K (g_il g_jk - g_ik g_jl)`, `Rc = (n-1) K g`, and the
//! contraction identity `g^{pq} R_piqj = R_ij` holds (these are exercised
//! explicitly in the test module).

use crate::jets::{CotensorJet, MetricJet};
use crate::tensor::{
    inverse, sum1, sum2, t1, t2, t3, t4, Scalar, T1, T2, T3, T4,
};
use crate::taylor::Jet;
use crate::Mutation;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GeomError {
    #[error("metric is numerically singular (|det| = {det:.3e})")]
    SingularMetric { det: f64 },
    #[error("jet order {have} insufficient, need at least {need}")]
    InsufficientJet { need: usize, have: usize },
}

/// Everything derived from one metric tensor: inverse, connection,
/// curvature, and contractions.
#[derive(Clone)]
pub struct Geometry<S> {
    pub n: usize,
    pub g: T2<S>,
    pub ginv: T2<S>,
    pub det: S,
    pub gamma: T3<S>,
    pub riem: T4<S>,
    pub riem_low: T4<S>,
    pub ricci: T2<S>,
    /// `R_i^j = g^{jp} R_ip`
    pub ricci_up: T2<S>,
    pub scal: S,
}

pub fn christoffel<S: Scalar>(n: usize, g: &T2<S>, ginv: &T2<S>) -> T3<S> {
    t3(n, |k, i, j| {
        sum1(&g[0][0], n, |l| {
            let bracket = g[j][l]
                .dx(i)
                .add(&g[i][l].dx(j))
                .sub(&g[i][j].dx(l));
            ginv[k][l].mul(&bracket).scale(0.5)
        })
    })
}

pub fn riemann_curvature<S: Scalar>(
    n: usize,
    gamma: &T3<S>,
    mutation: Mutation,
) -> T4<S> {
    let sign = if mutation == Mutation::FlipRiemannSign { -1.0 } else { 1.0 };
    t4(n, |i, j, k, l| {
        let deriv = gamma[l][j][k].dx(i).sub(&gamma[l][i][k].dx(j));
        let quad = sum1(&gamma[0][0][0], n, |p| {
            gamma[p][j][k]
                .mul(&gamma[l][i][p])
                .sub(&gamma[p][i][k].mul(&gamma[l][j][p]))
        });
        deriv.add(&quad).scale(sign)
    })
}

/// Builds the full geometry pack. No degeneracy checks (backends guard
/// themselves); see [`build_geometry_jets`] for the checked jet entry point.
pub fn build_geometry<S: Scalar>(n: usize, g: T2<S>, mutation: Mutation) -> Geometry<S> {
    let (ginv, det) = inverse(n, &g);
    let gamma = christoffel(n, &g, &ginv);
    let riem = riemann_curvature(n, &gamma, mutation);
    let riem_low = t4(n, |i, j, k, l| {
        sum1(&g[0][0], n, |p| riem[i][j][k][p].mul(&g[p][l]))
    });
    let ricci = t2(n, |j, k| {
        sum1(&g[0][0], n, |p| riem[p][j][k][p].clone())
    });
    let ricci_up = t2(n, |i, j| {
        sum1(&g[0][0], n, |p| ginv[j][p].mul(&ricci[i][p]))
    });
    let scal = sum2(&g[0][0], n, |j, k| ginv[j][k].mul(&ricci[j][k]));
    Geometry { n, g, ginv, det, gamma, riem, riem_low, ricci, ricci_up, scal }
}

/// Checked entry point for pointwise jets.
pub fn build_geometry_jets(
    mj: &MetricJet,
    mutation: Mutation,
) -> Result<Geometry<Jet>, GeomError> {
    let have = mj.g[0][0].deg();
    if have < 2 {
        return Err(GeomError::InsufficientJet { need: 2, have });
    }
    let d = crate::tensor::det(mj.n, &mj.g);
    if d.value().abs() < 1e-10 {
        return Err(GeomError::SingularMetric { det: d.value() });
    }
    Ok(build_geometry(
        mj.n,
        mj.g.clone(),
        mutation,
    ))
}

// ---------------------------------------------------------------------------
// Covariant derivatives
// ---------------------------------------------------------------------------

/// `∇_k w_i` for a 1-form.
pub fn cov1<S: Scalar>(geom: &Geometry<S>, w: &T1<S>) -> T2<S> {
    let n = geom.n;
    t2(n, |k, i| {
        let corr = sum1(&w[0], n, |p| geom.gamma[p][k][i].mul(&w[p]));
        w[i].dx(k).sub(&corr)
    })
}

/// `∇_k h_ij` for a covariant 2-tensor.
pub fn cov2<S: Scalar>(geom: &Geometry<S>, h: &T2<S>) -> T3<S> {
    let n = geom.n;
    t3(n, |k, i, j| {
        let corr = sum1(&h[0][0], n, |p| {
            geom.gamma[p][k][i]
                .mul(&h[p][j])
                .add(&geom.gamma[p][k][j].mul(&h[i][p]))
        });
        h[i][j].dx(k).sub(&corr)
    })
}

/// `∇_l T_kij` for a covariant 3-tensor.
pub fn cov3<S: Scalar>(geom: &Geometry<S>, t: &T3<S>) -> T4<S> {
    let n = geom.n;
    t4(n, |l, k, i, j| {
        let corr = sum1(&t[0][0][0], n, |p| {
            geom.gamma[p][l][k]
                .mul(&t[p][i][j])
                .add(&geom.gamma[p][l][i].mul(&t[k][p][j]))
                .add(&geom.gamma[p][l][j].mul(&t[k][i][p]))
        });
        t[k][i][j].dx(l).sub(&corr)
    })
}

/// `∇_m T_ijkl` for a covariant 4-tensor (second Bianchi validation).
pub fn cov4<S: Scalar>(geom: &Geometry<S>, t: &T4<S>) -> Vec<T4<S>> {
    let n = geom.n;
    (0..n)
        .map(|m| {
            t4(n, |i, j, k, l| {
                let corr = sum1(&t[0][0][0][0], n, |p| {
                    geom.gamma[p][m][i]
                        .mul(&t[p][j][k][l])
                        .add(&geom.gamma[p][m][j].mul(&t[i][p][k][l]))
                        .add(&geom.gamma[p][m][k].mul(&t[i][j][p][l]))
                        .add(&geom.gamma[p][m][l].mul(&t[i][j][k][p]))
                });
                t[i][j][k][l].dx(m).sub(&corr)
            })
        })
        .collect()
}

pub fn grad_scalar<S: Scalar>(n: usize, f: &S) -> T1<S> {
    t1(n, |i| f.dx(i))
}

/// `∇_i ∇_j f`
pub fn hessian<S: Scalar>(geom: &Geometry<S>, f: &S) -> T2<S> {
    cov1(geom, &grad_scalar(geom.n, f))
}

pub fn lap_scalar<S: Scalar>(geom: &Geometry<S>, f: &S) -> S {
    let h = hessian(geom, f);
    sum2(&geom.g[0][0], geom.n, |i, j| geom.ginv[i][j].mul(&h[i][j]))
}

/// Rough Laplacian `Δ h_ij = g^{kl} ∇_k ∇_l h_ij`.
pub fn lap_t2<S: Scalar>(geom: &Geometry<S>, h: &T2<S>) -> T2<S> {
    let n = geom.n;
    let d1 = cov2(geom, h);
    let d2 = cov3(geom, &d1);
    t2(n, |i, j| {
        sum2(&h[0][0], n, |k, l| {
            geom.ginv[k][l].mul(&d2[k][l][i][j])
        })
    })
}

/// Divergence data of a symmetric 2-tensor, all with respect to `geom`.
pub struct DivergenceData<S> {
    /// `(div h)_i = g^{jk} ∇_j h_ki`
    pub div: T1<S>,
    /// `g^{ij} ∇_i (div h)_j = g^{ij} g^{pq} ∇_i ∇_p h_qj`
    pub divdiv: S,
    /// `H = g^{ij} h_ij`
    pub trace: S,
    /// `<Rc, h> = R^{ij} h_ij`
    pub rc_dot_h: S,
}

pub fn divergence<S: Scalar>(geom: &Geometry<S>, h: &T2<S>) -> DivergenceData<S> {
    let n = geom.n;
    let d1 = cov2(geom, h);
    let div = t1(n, |i| {
        sum2(&h[0][0], n, |j, k| geom.ginv[j][k].mul(&d1[j][k][i]))
    });
    let ddiv = cov1(geom, &div);
    let divdiv = sum2(&h[0][0], n, |i, j| geom.ginv[i][j].mul(&ddiv[i][j]));
    let trace = sum2(&h[0][0], n, |i, j| geom.ginv[i][j].mul(&h[i][j]));
    let rc_dot_h = sum2(&h[0][0], n, |i, j| {
        sum2(&h[0][0], n, |p, q| {
            geom.ginv[i][p]
                .mul(&geom.ginv[j][q])
                .mul(&geom.ricci[p][q])
                .mul(&h[i][j])
        })
    });
    DivergenceData { div, divdiv, trace, rc_dot_h }
}

/// Lichnerowicz Laplacian
/// `Δ_L h_ij = Δ h_ij + 2 R_pijq h^{pq} - R_i^q h_jq - R_j^q h_iq`.
pub fn lichnerowicz<S: Scalar>(geom: &Geometry<S>, h: &T2<S>) -> T2<S> {
    let n = geom.n;
    let rough = lap_t2(geom, h);
    let hup = t2(n, |p, q| {
        sum2(&h[0][0], n, |a, b| {
            geom.ginv[p][a].mul(&geom.ginv[q][b]).mul(&h[a][b])
        })
    });
    t2(n, |i, j| {
        let curv = sum2(&h[0][0], n, |p, q| {
            geom.riem_low[p][i][j][q].mul(&hup[p][q])
        });
        let mixed = sum1(&h[0][0], n, |q| {
            geom.ricci_up[i][q]
                .mul(&h[j][q])
                .add(&geom.ricci_up[j][q].mul(&h[i][q]))
        });
        rough[i][j].add(&curv.scale(2.0)).sub(&mixed)
    })
}

/// Ricci tensor as a rank-2 cotensor jet (the default `h` of the linear
/// trace machinery).
pub fn ricci_cotensor(geom: &Geometry<Jet>) -> CotensorJet {
    CotensorJet::rank2(geom.n, geom.ricci.clone())
}

// ---------------------------------------------------------------------------
// Value extraction helpers (jets -> f64 tables)
// ---------------------------------------------------------------------------

pub fn vals1(t: &T1<Jet>) -> Vec<f64> {
    t.iter().map(|j| j.value()).collect()
}

pub fn vals2(t: &T2<Jet>) -> Vec<Vec<f64>> {
    t.iter().map(|r| vals1(r)).collect()
}

pub fn vals3(t: &T3<Jet>) -> Vec<Vec<Vec<f64>>> {
    t.iter().map(|r| vals2(r)).collect()
}

pub fn vals4(t: &T4<Jet>) -> Vec<Vec<Vec<Vec<f64>>>> {
    t.iter().map(|r| vals3(r)).collect()
}
