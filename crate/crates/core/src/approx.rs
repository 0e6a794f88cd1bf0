//! The family of positive-definite metrics ĝ(N, f, V) on space-time whose
//! inverses limit to the degenerate cometric: closed-form inverse and
//! Christoffel table, O(1/N) convergence to the space-time connection and
//! curvature, and the two-parameter variation identities that exhibit h̃ as
//! the s-variation of ĝ.

use crate::jets::{ChartPoint, CotensorJet, Poly};
use crate::riemann::{
    build_geometry, cov1, grad_scalar, hessian, ricci_cotensor, GeomError, Geometry,
};
use crate::spacetime::{
    build_cometric, build_connection, build_wtilde, curvature_of_table, extend_h, st_cov1,
};
use crate::taylor::{Jet, JetSpace};
use crate::tensor::{inverse_f64, ls_slope, sum1, t1, t2, t3, Scalar, T1, T2, T3};
use crate::Mutation;
use rand::Rng;
use rayon::prelude::*;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ApproxError {
    #[error("block denominator b − |X|² = {d:.6e} is not positive")]
    DenominatorNonPositive { d: f64 },
    #[error("ĝ is not positive-definite with margin at this point (D = {d:.6e} < 1)")]
    NotPositiveDefinite { d: f64 },
    #[error("two-parameter family must carry slices at s = (-2,-1,0,1,2)·s0")]
    FamilyMissing,
    #[error(transparent)]
    Geometry(#[from] GeomError),
}

// ---------------------------------------------------------------------------
// Block inverse
// ---------------------------------------------------------------------------

/// Inverse of the (n+1)×(n+1) block matrix [[g, x], [xᵀ, b]] by the Schur
/// complement D = b − xᵀg⁻¹x.  The distinguished row/column is LAST here
/// (matching the classical display); the space-time jet tables elsewhere in
/// this crate put the time index FIRST.
pub fn block_inverse(
    g: &[Vec<f64>],
    x: &[f64],
    b: f64,
) -> Result<Vec<Vec<f64>>, ApproxError> {
    let n = g.len();
    let ginv = inverse_f64(g).expect("the symmetric block must be invertible");
    let gx: Vec<f64> = (0..n)
        .map(|i| (0..n).map(|j| ginv[i][j] * x[j]).sum())
        .collect();
    let d = b - (0..n).map(|i| x[i] * gx[i]).sum::<f64>();
    if d <= 0.0 {
        return Err(ApproxError::DenominatorNonPositive { d });
    }
    let m = n + 1;
    let mut out = vec![vec![0.0; m]; m];
    for i in 0..n {
        for j in 0..n {
            out[i][j] = ginv[i][j] + gx[i] * gx[j] / d;
        }
        out[i][n] = -gx[i] / d;
        out[n][i] = -gx[i] / d;
    }
    out[n][n] = 1.0 / d;
    Ok(out)
}

// ---------------------------------------------------------------------------
// The metric ĝ
// ---------------------------------------------------------------------------

/// ĝ assembled at one point with full jets (time index first):
/// ĝ_ij = g_ij, ĝ_i0 = V_i + ∇_i f, ĝ_00 = R + |V|² + 2∂ₜf + N.
pub struct ApproxMetric {
    pub n: usize,
    pub m: usize,
    pub n_param: f64,
    pub geom: Geometry<Jet>,
    pub v: T1<Jet>,
    pub f: Jet,
    /// X_i = V_i + ∇_i f and its g-raised companion.
    pub x_low: T1<Jet>,
    pub x_up: T1<Jet>,
    /// Schur denominator D = ĝ_00 − |X|²_g (> 0; equals the displayed
    /// R + 2(∂ₜf − ⟨∇f,V⟩) − |∇f|² + N).
    pub d: Jet,
    pub ghat: T2<Jet>,
    pub ghat_inv: T2<Jet>,
}

/// Builds ĝ and its closed-form inverse.  Requires margin D ≥ 1 so the
/// inverse stays well-conditioned across the N-grid.
pub fn build_ghat(
    geom: Geometry<Jet>,
    v: Option<&CotensorJet>,
    f: &Jet,
    n_param: f64,
) -> Result<ApproxMetric, ApproxError> {
    let n = geom.n;
    let m = n + 1;
    let zero = geom.scal.zero_like();
    let v_low = t1(n, |i| match v {
        Some(v) => v.at1(i).clone(),
        None => zero.clone(),
    });
    let x_low = t1(n, |i| v_low[i].add(&f.deriv(i + 1)));
    let x_up = t1(n, |i| {
        sum1(&zero, n, |j| geom.ginv[i][j].mul(&x_low[j]))
    });
    let v_norm2 = sum1(&zero, n, |i| {
        sum1(&zero, n, |j| geom.ginv[i][j].mul(&v_low[i]).mul(&v_low[j]))
    });
    let b = geom
        .scal
        .add(&v_norm2)
        .add(&f.deriv(0).scale(2.0))
        .add_f64(n_param);
    let x_norm2 = sum1(&zero, n, |i| x_low[i].mul(&x_up[i]));
    let d = b.sub(&x_norm2);
    if d.value() < 1.0 {
        return Err(ApproxError::NotPositiveDefinite { d: d.value() });
    }
    let dinv = d.recip();
    let ghat = t2(m, |a, c| match (a, c) {
        (0, 0) => b.clone(),
        (0, j) => x_low[j - 1].clone(),
        (i, 0) => x_low[i - 1].clone(),
        (i, j) => geom.g[i - 1][j - 1].clone(),
    });
    let ghat_inv = t2(m, |a, c| match (a, c) {
        (0, 0) => dinv.clone(),
        (0, j) => x_up[j - 1].mul(&dinv).neg(),
        (i, 0) => x_up[i - 1].mul(&dinv).neg(),
        (i, j) => geom.ginv[i - 1][j - 1].add(&x_up[i - 1].mul(&x_up[j - 1]).mul(&dinv)),
    });
    Ok(ApproxMetric {
        n,
        m,
        n_param,
        geom,
        v: v_low,
        f: f.clone(),
        x_low,
        x_up,
        d,
        ghat,
        ghat_inv,
    })
}

// ---------------------------------------------------------------------------
// Christoffel symbols of ĝ
// ---------------------------------------------------------------------------

/// The closed-form Christoffel table of ĝ, index order `[k][a][b]` with the
/// time index first.  The six displayed formulas share three numerators over
/// the denominator D; the 00-entry numerator carries the ∂ₜ²f term in both
/// the k-row and the 0-row — dropping it from the 0-row breaks agreement
/// with the generic formula whenever f bends in t (see tests).
pub fn ghat_christoffel_closed(am: &ApproxMetric) -> T3<Jet> {
    let n = am.n;
    let m = am.m;
    let geom = &am.geom;
    let zero = geom.scal.zero_like();
    let dinv = am.d.recip();
    let dt_f = am.f.deriv(0);
    let grad_f_up = t1(n, |l| {
        sum1(&zero, n, |p| geom.ginv[l][p].mul(&am.f.deriv(p + 1)))
    });
    let hess_f = hessian(geom, &am.f);
    let cov_v = cov1(geom, &am.v);
    let dt_v = t1(n, |l| am.v[l].deriv(0));
    let v_up = t1(n, |l| sum1(&zero, n, |p| geom.ginv[l][p].mul(&am.v[p])));
    let v_norm2 = sum1(&zero, n, |l| v_up[l].mul(&am.v[l]));
    let r_plus_v2 = geom.scal.add(&v_norm2);

    // Numerators shared between the 0-row and the rank-one corrections.
    let num_ij = t2(n, |i, j| geom.ricci[i][j].add(&hess_f[i][j]));
    let num_i = t1(n, |i| {
        geom.scal
            .deriv(i + 1)
            .scale(0.5)
            .add(&sum1(&zero, n, |l| v_up[l].mul(&geom.ricci[i][l])))
            .add(&sum1(&zero, n, |l| {
                grad_f_up[l].mul(&geom.ricci[i][l].sub(&cov_v[i][l]))
            }))
            .add(&dt_f.deriv(i + 1))
    });
    let num_0 = sum1(&zero, n, |l| v_up[l].mul(&geom.scal.deriv(l + 1)))
        .scale(0.5)
        .add(&geom.scal.deriv(0).scale(0.5))
        .add(&sum1(&zero, n, |i| {
            sum1(&zero, n, |j| geom.ricci[i][j].mul(&v_up[i]).mul(&v_up[j]))
        }))
        .sub(&sum1(&zero, n, |l| {
            grad_f_up[l].mul(&dt_v[l].sub(&r_plus_v2.deriv(l + 1).scale(0.5)))
        }))
        .add(&dt_f.deriv(0));

    t3(m, |k, a, b| {
        if k == 0 {
            match (a, b) {
                (0, 0) => num_0.mul(&dinv),
                (0, i) => num_i[i - 1].mul(&dinv),
                (i, 0) => num_i[i - 1].mul(&dinv),
                (i, j) => num_ij[i - 1][j - 1].mul(&dinv),
            }
        } else {
            let kk = k - 1;
            let corr = |num: &Jet| am.x_up[kk].mul(num).mul(&dinv);
            match (a, b) {
                (0, 0) => sum1(&zero, n, |l| geom.ginv[kk][l].mul(&dt_v[l]))
                    .sub(&sum1(&zero, n, |p| {
                        geom.ginv[kk][p].mul(&r_plus_v2.deriv(p + 1))
                    })
                    .scale(0.5))
                    .sub(&corr(&num_0)),
                (0, i) | (i, 0) => {
                    let i = i - 1;
                    geom.ricci_up[i][kk]
                        .neg()
                        .add(&sum1(&zero, n, |p| geom.ginv[kk][p].mul(&cov_v[i][p])))
                        .sub(&corr(&num_i[i]))
                }
                (i, j) => geom.gamma[kk][i - 1][j - 1].sub(&corr(&num_ij[i - 1][j - 1])),
            }
        }
    })
}

/// Γ̂ by the standard formula ½ ĝᵏˡ(∂_a ĝ_bl + ∂_b ĝ_al − ∂_l ĝ_ab) with
/// space-time partials read off the jets.  Independent oracle for the
/// closed form.
pub fn ghat_christoffel_generic(am: &ApproxMetric) -> T3<Jet> {
    let m = am.m;
    let zero = am.geom.scal.zero_like();
    t3(m, |k, a, b| {
        sum1(&zero, m, |l| {
            let bracket = am.ghat[b][l]
                .deriv(a)
                .add(&am.ghat[a][l].deriv(b))
                .sub(&am.ghat[a][b].deriv(l));
            am.ghat_inv[k][l].mul(&bracket)
        })
        .scale(0.5)
    })
}

// ---------------------------------------------------------------------------
// Pointwise f choices
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FKind {
    Zero,
    /// Random polynomial of degree ≤ 3 in (t, x) with small coefficients.
    PolyBump,
    /// exp of a quadratic with genuine t-curvature (∂ₜ²f ≠ 0).
    GaussianBump,
}

/// Builds a scalar field jet of the requested kind centered near `p`.
pub fn sample_f(
    sp: &'static JetSpace,
    p: &ChartPoint,
    kind: FKind,
    rng: &mut impl Rng,
) -> Jet {
    let nv = sp.nv;
    let vars: Vec<Jet> = (0..nv)
        .map(|k| {
            let val = if k == 0 { p.t } else { p.x[k - 1] };
            Jet::variable(sp, k, val)
        })
        .collect();
    match kind {
        FKind::Zero => Jet::constant(sp, 0.0),
        FKind::PolyBump => {
            let mut poly = Poly::zero();
            let mut add = |c: f64, a: [u8; 4]| poly.terms.push((c, a));
            for a0 in 0..=3u8 {
                for a1 in 0..=(3 - a0) {
                    for a2 in 0..=(3 - a0 - a1) {
                        let rest = 3 - a0 - a1 - a2;
                        for a3 in 0..=(if nv > 3 { rest } else { 0 }) {
                            if nv <= 2 && a2 > 0 {
                                continue;
                            }
                            add(rng.gen_range(-0.3..0.3), [a0, a1, a2, a3]);
                        }
                    }
                }
            }
            poly.eval_jet(sp, &vars)
        }
        FKind::GaussianBump => {
            let mut q = vars[0].scale(0.2).add(&vars[0].mul(&vars[0]).scale(0.15));
            for v in vars.iter().skip(1) {
                let c = rng.gen_range(-0.5..0.5);
                let shifted = v.add_f64(-c);
                q = q.sub(&shifted.mul(&shifted).scale(0.3));
            }
            q.exp()
        }
    }
}

// ---------------------------------------------------------------------------
// Convergence study
// ---------------------------------------------------------------------------

pub struct ConvergenceSample {
    pub geom: Geometry<Jet>,
    pub v: Option<CotensorJet>,
    pub f: Jet,
}

pub struct ConvergenceReport {
    pub n_grid: Vec<f64>,
    /// max |ĝ^{ab} − g̃^{ab}| over samples and components, per N.
    pub res_metric: Vec<f64>,
    /// max |Γ̂ᵏ_ab − Γ̃ᵏ_ab|.
    pub res_conn: Vec<f64>,
    /// max |R̂_abc^l − R̃_abc^l|.
    pub res_curv: Vec<f64>,
    /// max |N·ĝ⁰⁰ − 1|.
    pub res_n_g00: Vec<f64>,
    pub slope_metric: Option<f64>,
    pub slope_conn: Option<f64>,
    pub slope_curv: Option<f64>,
}

impl ConvergenceReport {
    pub fn csv(&self) -> String {
        let mut out = String::from("n,res_metric,res_conn,res_curv,res_n_g00\n");
        for (k, &n) in self.n_grid.iter().enumerate() {
            out.push_str(&format!(
                "{:e},{:.12e},{:.12e},{:.12e},{:.12e}\n",
                n, self.res_metric[k], self.res_conn[k], self.res_curv[k], self.res_n_g00[k]
            ));
        }
        out
    }

    pub fn monotone_nonincreasing(&self) -> bool {
        let ok = |v: &[f64]| v.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-9));
        ok(&self.res_metric) && ok(&self.res_conn) && ok(&self.res_curv)
    }
}

fn slope_of(n_grid: &[f64], res: &[f64]) -> Option<f64> {
    if res.iter().any(|&r| r < 1e-14) {
        return None;
    }
    let xs: Vec<f64> = n_grid.iter().map(|n| n.ln()).collect();
    let ys: Vec<f64> = res.iter().map(|r| r.ln()).collect();
    Some(ls_slope(&xs, &ys))
}

/// Builds ĝ(N) across the N-grid for every sample and measures the maximum
/// residual of ĝ⁻¹, Γ̂, and R̂ against the degenerate space-time objects of
/// the same (g, V).  Slopes are least-squares fits of log residual vs log N
/// (`None` when a residual family sits at the zero floor).
pub fn convergence_study(
    samples: &[ConvergenceSample],
    n_grid: &[f64],
) -> Result<ConvergenceReport, ApproxError> {
    let per_sample: Vec<Vec<[f64; 4]>> = samples
        .par_iter()
        .map(|s| -> Result<Vec<[f64; 4]>, ApproxError> {
            let m = s.geom.n + 1;
            let conn_ref = build_connection(&s.geom, s.v.as_ref(), Mutation::None)?;
            let (riem_ref, _) = curvature_of_table(m, &conn_ref.gammat, Mutation::None);
            let gt_ref = build_cometric(&s.geom);
            let mut rows = Vec::with_capacity(n_grid.len());
            for &n_param in n_grid {
                let am = build_ghat(s.geom.clone(), s.v.as_ref(), &s.f, n_param)?;
                let gam_hat = ghat_christoffel_closed(&am);
                let (riem_hat, _) = curvature_of_table(m, &gam_hat, Mutation::None);
                let mut r = [0.0f64; 4];
                for a in 0..m {
                    for b in 0..m {
                        r[0] = r[0].max(
                            (am.ghat_inv[a][b].value() - gt_ref.gt_inv[a][b].value()).abs(),
                        );
                        for c in 0..m {
                            r[1] = r[1].max(
                                (gam_hat[a][b][c].value()
                                    - conn_ref.gammat[a][b][c].value())
                                .abs(),
                            );
                            for l in 0..m {
                                r[2] = r[2].max(
                                    (riem_hat[a][b][c][l].value()
                                        - riem_ref[a][b][c][l].value())
                                    .abs(),
                                );
                            }
                        }
                    }
                }
                r[3] = (n_param * am.ghat_inv[0][0].value() - 1.0).abs();
                rows.push(r);
            }
            Ok(rows)
        })
        .collect::<Result<_, _>>()?;

    let k = n_grid.len();
    let mut acc = vec![[0.0f64; 4]; k];
    for rows in &per_sample {
        for (i, r) in rows.iter().enumerate() {
            for j in 0..4 {
                acc[i][j] = acc[i][j].max(r[j]);
            }
        }
    }
    let col = |j: usize| acc.iter().map(|r| r[j]).collect::<Vec<f64>>();
    let (res_metric, res_conn, res_curv, res_n_g00) = (col(0), col(1), col(2), col(3));
    Ok(ConvergenceReport {
        n_grid: n_grid.to_vec(),
        slope_metric: slope_of(n_grid, &res_metric),
        slope_conn: slope_of(n_grid, &res_conn),
        slope_curv: slope_of(n_grid, &res_curv),
        res_metric,
        res_conn,
        res_curv,
        res_n_g00,
    })
}

// ---------------------------------------------------------------------------
// Two-parameter families and the variation identities
// ---------------------------------------------------------------------------

/// One s-slice of a two-parameter family at a fixed chart point: the
/// geometry of g(·, s), the vector W(s) comparing its connection with the
/// s = 0 connection, and f(s) = ½ log(det g(·,s)/det g(·,0)).
pub struct FamilySlice {
    pub s: f64,
    pub geom: Geometry<Jet>,
    pub w_up: T1<Jet>,
    pub f: Jet,
}

pub struct TwoParamFamily {
    pub n: usize,
    pub s0: f64,
    /// Slices at s = (-2, -1, 0, 1, 2)·s0, ascending.
    pub slices: Vec<FamilySlice>,
    /// ∂ₛg at s = 0 (the h of the variation identities).
    pub h_center: CotensorJet,
}

impl TwoParamFamily {
    pub fn center(&self) -> &FamilySlice {
        &self.slices[2]
    }

    fn validate(&self) -> Result<(), ApproxError> {
        if self.slices.len() != 5 {
            return Err(ApproxError::FamilyMissing);
        }
        for (k, sl) in self.slices.iter().enumerate() {
            let want = (k as f64 - 2.0) * self.s0;
            if (sl.s - want).abs() > 1e-12 * self.s0.max(1.0) {
                return Err(ApproxError::FamilyMissing);
            }
        }
        Ok(())
    }
}

/// 4-point central first-derivative stencil at s = 0 over slice values
/// ordered (-2, -1, 0, 1, 2)·s0.
pub fn s_stencil(vals: &[f64; 5], s0: f64) -> f64 {
    (vals[0] - 8.0 * vals[1] + 8.0 * vals[3] - vals[4]) / (12.0 * s0)
}

/// The analytic two-parameter family g(·, s) = g + s·Rc(g) built on a
/// geometry with V = 0.  Its center slice and first-order s-data coincide
/// with the flow-coupled family's (∂ₛg|₀ = Rc solves the linearized flow),
/// so every s-derivative identity at s = 0 applies verbatim.
pub fn synthetic_family(
    geom_base: &Geometry<Jet>,
    s0: f64,
) -> Result<TwoParamFamily, ApproxError> {
    let n = geom_base.n;
    let rc = t2(n, |i, j| geom_base.ricci[i][j].clone());
    let zero = geom_base.scal.zero_like();
    let base_det_ln = geom_base.det.ln();
    let slices = (-2..=2)
        .map(|k| {
            let s = k as f64 * s0;
            let g_s = t2(n, |i, j| geom_base.g[i][j].add(&rc[i][j].scale(s)));
            let geom = build_geometry(n, g_s, Mutation::None);
            let w_up = t1(n, |kk| {
                sum1(&zero, n, |i| {
                    sum1(&zero, n, |j| {
                        geom.ginv[i][j]
                            .mul(&geom.gamma[kk][i][j].sub(&geom_base.gamma[kk][i][j]))
                    })
                })
            });
            let f = geom.det.ln().sub(&base_det_ln).scale(0.5);
            FamilySlice { s, geom, w_up, f }
        })
        .collect();
    Ok(TwoParamFamily {
        n,
        s0,
        slices,
        h_center: ricci_cotensor(geom_base),
    })
}

pub struct VariationReport {
    /// max over components of |∂ₛ-stencil of ĝ_ab − h̃_ab| at s = 0.
    pub residual_a: f64,
    /// o_ab(s) := ∂ₜĝ_ab − (−2R̃_ab + ∇̃_aW̃_b + ∇̃_bW̃_a) at the center.
    pub o_zero: Vec<Vec<f64>>,
    /// max spatial |o_ij(0)| — the spatial block is an exact identity.
    pub o_zero_spatial: f64,
    /// max |∂ₛ-stencil of o_ab| — the first-variation claim.
    pub ds_o: f64,
    /// Deviation of o(0) from its derived closed form: o_i0(0) = ∇_iR and
    /// o_00(0) = 2∂ₜR on an exact flow background.
    pub o_structure: f64,
    /// max |∂ₜĝ_ab| at the center, for relative comparisons.
    pub scale: f64,
    /// Raw per-slice values of ĝ_ab, indexed `[a][b][slice]`; exposed so
    /// callers can run stencil-order diagnostics on the same data.
    pub ghat_vals: Vec<Vec<[f64; 5]>>,
    /// Raw per-slice values of o_ab, same layout.
    pub o_vals: Vec<Vec<[f64; 5]>>,
}

/// Evaluates the two variation identities on a family: (A) the s-variation
/// of ĝ is h̃; (B) the t-derivative of ĝ matches −2R̃ + sym ∇̃W̃ up to a
/// term whose s-derivative vanishes at s = 0 (the term itself is nonzero in
/// the 0-row: {∇_iR, 2∂ₜR}).
pub fn variation_checks(
    fam: &TwoParamFamily,
    n_param: f64,
) -> Result<VariationReport, ApproxError> {
    fam.validate()?;
    let n = fam.n;
    let m = n + 1;
    let mut gvals: Vec<Vec<[f64; 5]>> = vec![vec![[0.0; 5]; m]; m];
    let mut ovals: Vec<Vec<[f64; 5]>> = vec![vec![[0.0; 5]; m]; m];
    let mut scale = 0.0f64;
    for (k, sl) in fam.slices.iter().enumerate() {
        let zero = sl.geom.scal.zero_like();
        let v_low = CotensorJet::rank1(
            (0..n)
                .map(|j| sum1(&zero, n, |p| sl.geom.g[j][p].mul(&sl.w_up[p])))
                .collect(),
        );
        let conn = build_connection(&sl.geom, Some(&v_low), Mutation::None)?;
        let (_, ricci_st) = curvature_of_table(m, &conn.gammat, Mutation::None);
        let wt = build_wtilde(&sl.geom, &v_low);
        let cv = st_cov1(&conn, &wt.comps);
        let am = build_ghat(sl.geom.clone(), Some(&v_low), &sl.f, n_param)?;
        for a in 0..m {
            for b in 0..m {
                gvals[a][b][k] = am.ghat[a][b].value();
                let lhs = am.ghat[a][b].deriv(0).value();
                let rhs = -2.0 * ricci_st[a][b].value()
                    + cv[a][b].value()
                    + cv[b][a].value();
                ovals[a][b][k] = lhs - rhs;
                if k == 2 {
                    scale = scale.max(lhs.abs());
                }
            }
        }
    }

    let center = fam.center();
    let ht = extend_h(&center.geom, &fam.h_center, Mutation::None)?;
    let mut residual_a = 0.0f64;
    let mut ds_o = 0.0f64;
    let mut o_zero = vec![vec![0.0; m]; m];
    let mut o_zero_spatial = 0.0f64;
    for a in 0..m {
        for b in 0..m {
            let da = s_stencil(&gvals[a][b], fam.s0) - ht.comps[a][b].value();
            residual_a = residual_a.max(da.abs());
            ds_o = ds_o.max(s_stencil(&ovals[a][b], fam.s0).abs());
            o_zero[a][b] = ovals[a][b][2];
            if a >= 1 && b >= 1 {
                o_zero_spatial = o_zero_spatial.max(o_zero[a][b].abs());
            }
        }
    }
    let grad_r = grad_scalar(n, &center.geom.scal);
    let dt_r = center.geom.scal.deriv(0).value();
    let mut o_structure = (o_zero[0][0] - 2.0 * dt_r).abs();
    for i in 0..n {
        o_structure = o_structure.max((o_zero[0][i + 1] - grad_r[i].value()).abs());
        o_structure = o_structure.max((o_zero[i + 1][0] - grad_r[i].value()).abs());
    }
    Ok(VariationReport {
        residual_a,
        o_zero,
        o_zero_spatial,
        ds_o,
        o_structure,
        scale,
        ghat_vals: gvals,
        o_vals: ovals,
    })
}
