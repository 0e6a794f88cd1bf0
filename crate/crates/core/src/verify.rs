//! The check catalog and suite runner.
//!
//! Every identity the library implements is registered here as a
//! [`CheckSpec`]: a stable id, the citation tag it reports under, the
//! backends (providers) it runs on, and its tolerance policy.  A check runs
//! on closed-form jet providers at analytic tolerances and/or on the
//! periodic-grid backend, where the tolerance scales as `coeff · dx^ord`
//! with the stencil order (the coefficients were frozen from measured
//! residual ceilings with a ~6x margin; see `calibration_table`).
//!
//! Residuals are evaluated at randomly sampled chart points; every
//! `(check, provider)` pair derives its own RNG stream from the suite seed,
//! so runs are reproducible bit-for-bit regardless of execution order or
//! thread count.  Checks that differentiate across a family of metrics also
//! measure the observed convergence order of the s-stencil and gate on it
//! for grid runs.
//!
//! [`run_suite`] evaluates any subset of the catalog (in parallel),
//! collects per-pair failures without aborting the rest, and serializes to
//! JSON or CSV through [`SuiteReport`].

use std::collections::BTreeMap;
use std::sync::OnceLock;
use std::time::Instant;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::approx::{
    build_ghat, convergence_study, ghat_christoffel_closed, ghat_christoffel_generic, s_stencil,
    sample_f, synthetic_family, variation_checks, ApproxError, ConvergenceSample, FKind,
    FamilySlice, TwoParamFamily as PointFamily,
};
use crate::flow::{
    build_deturck_family, perturbed_flat, random_sym_field, slice_jets, FlowError, GridSpec,
    SliceJets, SliceSel, TwoParamFamily as GridFamily, CFL_DEFAULT,
};
use crate::harnack::{
    linear_trace_z, matrix_q, restated_quadratic, trace_quadratic, DtRMode, HarnackError,
    HarnackFrame,
};
use crate::jets::{
    provider_by_id, standard_providers, AnalyticProvider, CotensorJet, JetError,
    MAX_ANALYTIC_ORDER,
};
use crate::riemann::{
    build_geometry_jets, cov1, cov2, divergence, hessian, lap_scalar, lap_t2,
    ricci_cotensor, GeomError, Geometry,
};
use crate::spacetime::{
    build_cometric, build_connection, build_vtilde, build_wtilde, compat_check, extend_h,
    lemma22_residual, st_cov1, st_cov2, st_cov_mixed11, st_curvature, st_lichnerowicz, SpaceTime,
    SpaceTimeCometric, SpaceTimeConnection,
};
use crate::taylor::Jet;
use crate::tensor::{sum1, sum2, t1, t2, Scalar, T2};
use crate::tolerances::{grid_tol, IDENTITY_TIGHT, POSITIVITY_SLACK, S_ORDER_MIN};
use crate::Mutation;

#[derive(Debug, Error)]
pub enum VerifyError {
    #[error("unknown check id `{id}`")]
    UnknownCheck { id: String },
    #[error("check `{check}` has no provider `{provider}`")]
    ProviderUnavailable { check: String, provider: String },
    #[error("grid backend unavailable: {message}")]
    GridUnavailable { message: String },
    #[error(transparent)]
    Geometry(#[from] GeomError),
    #[error(transparent)]
    Jet(#[from] JetError),
    #[error(transparent)]
    Approx(#[from] ApproxError),
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error(transparent)]
    Harnack(#[from] HarnackError),
}

// ---------------------------------------------------------------------------
// Catalog
// ---------------------------------------------------------------------------

/// How a check consumes its provider.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum CheckKind {
    /// Residual of a pointwise identity at sampled chart points.
    Pointwise,
    /// Stencil derivative across a five-slice metric family vs a closed form.
    Family,
    /// Log-log slope of a residual against the large parameter N.
    Slopes,
    /// Sign condition plus a frozen closed form.
    Positivity,
    /// Agreement of two independently computed tables over many configs.
    OracleTable,
}

pub struct CheckSpec {
    pub id: &'static str,
    /// Interface tag reported with every result (stable data, not prose).
    pub citation: &'static str,
    pub description: &'static str,
    pub kind: CheckKind,
    pub providers: &'static [&'static str],
    /// Sample points (or configurations) per provider.
    pub n_points: usize,
    /// Residual budget on closed-form jet providers.
    pub tol_analytic: f64,
    /// Grid budget coefficient: tolerance is `coeff * dx^ord`.
    pub grid_coeff: Option<f64>,
}

/// Provider id of the base (gauge-free) grid trajectory.
pub const GRID_BASE: &str = "grid32";
/// Provider id of the gauge-fixed offset trajectory (nonzero vector field).
pub const GRID_OFFSET: &str = "grid32+s";

const P_PLAIN_GRID: &[&str] = &[
    "flat2",
    "sphere2",
    "sphere3",
    "cigar",
    "sphere_cross_flat",
    GRID_BASE,
];
const P_ALL_GRID: &[&str] = &[
    "flat2",
    "sphere2",
    "sphere3",
    "cigar",
    "sphere_cross_flat",
    "pull_flat2_a",
    "pull_flat2_b",
    "pull_sphere2_a",
    "pull_sphere2_b",
    "pull_cigar",
    GRID_BASE,
    GRID_OFFSET,
];
const P_ANALYTIC_ALL: &[&str] = &[
    "flat2",
    "sphere2",
    "sphere3",
    "cigar",
    "sphere_cross_flat",
    "pull_flat2_a",
    "pull_flat2_b",
    "pull_sphere2_a",
    "pull_sphere2_b",
    "pull_cigar",
];
const P_FAMILY: &[&str] = &["flat2", "sphere2", "cigar", GRID_BASE];
const P_SPHERES: &[&str] = &["sphere2", "sphere3"];
const P_SLOPES: &[&str] = &["flat2", "sphere2", "sphere3", "cigar", "pull_cigar"];

/// Default analytic identity budget (order-8 jets, pullback roundoff).
const TOL_ID: f64 = 1e-6;

/// s-offset of the synthetic families built on closed-form providers.
/// Small enough that stencil truncation (∝ s₀⁴) stays below the analytic
/// identity budget, large enough that the ∂ₛ estimates stay far above
/// roundoff (~|F|·1e-16/s₀).
pub const S0_ANALYTIC: f64 = 2.5e-3;
/// N used when the variation checks build the block metric.
const GHAT_N_PARAM: f64 = 50.0;
/// N-grid of the convergence study.
pub const N_GRID_DEFAULT: [f64; 5] = [1e2, 1e3, 1e4, 1e5, 1e6];

static CATALOG: &[CheckSpec] = &[
    CheckSpec {
        id: "lemma_2_1_i",
        citation: "Lemma 2.1 (i), \"∂/∂t div(h)_i = Δ div(h)_i + 2h_pq∇ᵢR_pq − ...\"",
        description: "evolution of the divergence one-form of h under the coupled flow",
        kind: CheckKind::Pointwise,
        providers: P_PLAIN_GRID,
        n_points: 12,
        tol_analytic: TOL_ID,
        grid_coeff: Some(70.0),
    },
    CheckSpec {
        id: "lemma_2_1_ii",
        citation: "Lemma 2.1 (ii), \"∂/∂t[div(div(h)) + Rc·h]\"",
        description: "evolution of the second divergence scalar div(div h) + Rc·h",
        kind: CheckKind::Pointwise,
        providers: P_PLAIN_GRID,
        n_points: 12,
        tol_analytic: TOL_ID,
        grid_coeff: Some(1600.0),
    },
    CheckSpec {
        id: "lemma_2_2",
        citation: "Lemma 2.2, \"h̃ᵢ₀ = g̃ʲᵏ∇̃ⱼh̃ₖᵢ\"",
        description: "the 0-row of the extended tensor is its own space-time divergence",
        kind: CheckKind::Pointwise,
        providers: P_PLAIN_GRID,
        n_points: 12,
        tol_analytic: TOL_ID,
        grid_coeff: Some(1e-6),
    },
    CheckSpec {
        id: "prop_2_3_eq_2_4",
        citation: "Prop 2.3, \"∇̃₀h̃_ij = Δ̃h̃_ij + 2h̃_pq R̃_pij^q\"",
        description: "space-time heat equation for h̃ in covariant-time form",
        kind: CheckKind::Pointwise,
        providers: P_PLAIN_GRID,
        n_points: 12,
        tol_analytic: TOL_ID,
        grid_coeff: Some(2000.0),
    },
    CheckSpec {
        id: "prop_2_3_eq_2_5",
        citation: "Prop 2.3, \"∇̃₀h̃_ij = Δ̃h̃_ij + 2h̃_pq R̃_pij^q\"",
        description: "space-time Lichnerowicz evolution of h̃ in partial-time form",
        kind: CheckKind::Pointwise,
        providers: P_PLAIN_GRID,
        n_points: 12,
        tol_analytic: TOL_ID,
        grid_coeff: Some(600.0),
    },
    CheckSpec {
        id: "curvext_B4",
        citation: "§2 Remark + proof cites, \"(B4) for the last equation\"",
        description: "mixed time-space curvature row equals the ∇Rc commutator",
        kind: CheckKind::Pointwise,
        providers: P_PLAIN_GRID,
        n_points: 12,
        tol_analytic: TOL_ID,
        grid_coeff: Some(5.0),
    },
    CheckSpec {
        id: "curvext_B5",
        citation: "§2 Remark + proof cites, \"(B5) for the last equation\"",
        description: "double-time curvature row equals the matrix quadratic kernel",
        kind: CheckKind::Pointwise,
        providers: P_PLAIN_GRID,
        n_points: 12,
        tol_analytic: TOL_ID,
        grid_coeff: Some(30.0),
    },
    CheckSpec {
        id: "compat",
        citation: "§3, \"∇̃ᵢg̃ʲᵏ ... = 0\"",
        description: "space-time connection is compatible with the degenerate cometric",
        kind: CheckKind::Pointwise,
        providers: P_ALL_GRID,
        n_points: 12,
        tol_analytic: TOL_ID,
        grid_coeff: Some(15.0),
    },
    CheckSpec {
        id: "theorem_3_1_eq_3_3",
        citation: "Theorem 3.1, \"satisfy the system\"",
        description: "time derivative of the cometric in covariant form",
        kind: CheckKind::Pointwise,
        providers: P_ALL_GRID,
        n_points: 12,
        tol_analytic: TOL_ID,
        grid_coeff: Some(15.0),
    },
    CheckSpec {
        id: "theorem_3_1_eq_3_4",
        citation: "Theorem 3.1, \"satisfy the system\"",
        description: "time derivative of the connection table in covariant form",
        kind: CheckKind::Pointwise,
        providers: P_ALL_GRID,
        n_points: 10,
        tol_analytic: TOL_ID,
        grid_coeff: Some(5500.0),
    },
    CheckSpec {
        id: "lemma_3_2_eq_3_5",
        citation: "Lemma 3.2 (statement displays)",
        description: "mixed row of the gauge-shifted Ricci in terms of base data",
        kind: CheckKind::Pointwise,
        providers: P_ALL_GRID,
        n_points: 12,
        tol_analytic: TOL_ID,
        grid_coeff: Some(1e-6),
    },
    CheckSpec {
        id: "lemma_3_2_eq_3_6",
        citation: "Lemma 3.2 (statement displays)",
        description: "double-time entry of the gauge-shifted Ricci in terms of base data",
        kind: CheckKind::Pointwise,
        providers: P_ALL_GRID,
        n_points: 12,
        tol_analytic: TOL_ID,
        grid_coeff: Some(170.0),
    },
    CheckSpec {
        id: "lemma_4_1_ii",
        citation: "Lemma 4.1 (ii), \"h_ij(t,0) = ∂/∂s g_ij(t,0)\"",
        description: "the linearized solution is the s-derivative of the family metric",
        kind: CheckKind::Family,
        providers: P_FAMILY,
        n_points: 6,
        tol_analytic: 1e-9,
        grid_coeff: Some(0.1),
    },
    CheckSpec {
        id: "theorem_4_2_metric",
        citation: "Theorem 4.2, \"∂/∂s Γ̃ᵏᵢⱼ = ½g̃ᵏˡ(∇̃ᵢh̃ⱼₗ + ∇̃ⱼh̃ᵢₗ − ∇̃ₗh̃ᵢⱼ)\"",
        description: "s-derivative of the inverse metric is minus the raised h",
        kind: CheckKind::Family,
        providers: P_FAMILY,
        n_points: 6,
        tol_analytic: 1e-7,
        grid_coeff: Some(0.1),
    },
    CheckSpec {
        id: "theorem_4_2_connection",
        citation: "Theorem 4.2, \"∂/∂s Γ̃ᵏᵢⱼ = ½g̃ᵏˡ(∇̃ᵢh̃ⱼₗ + ∇̃ⱼh̃ᵢₗ − ∇̃ₗh̃ᵢⱼ)\"",
        description: "s-derivative of the gauge connection is the Koszul form of h̃",
        kind: CheckKind::Family,
        providers: P_FAMILY,
        n_points: 6,
        tol_analytic: 2e-6,
        grid_coeff: Some(20.0),
    },
    CheckSpec {
        id: "eq_4_3",
        citation: "Eq (4.3), \"(div(h)_k − ½∇ₖH)\"",
        description: "s-derivative of the gauge vector",
        kind: CheckKind::Family,
        providers: P_FAMILY,
        n_points: 6,
        tol_analytic: 1e-9,
        grid_coeff: Some(0.5),
    },
    CheckSpec {
        id: "eq_4_4",
        citation: "Eq (4.4), \"div(div(h)) − ΔH − Rc·h\"",
        description: "s-derivative of the scalar curvature along the family",
        kind: CheckKind::Family,
        providers: P_FAMILY,
        n_points: 6,
        tol_analytic: 5e-7,
        grid_coeff: Some(1.5),
    },
    CheckSpec {
        id: "eq_4_5",
        citation: "Eq (4.5), \"∂/∂t H = ΔH + 2Rc·h\"",
        description: "heat equation for the trace of h",
        kind: CheckKind::Pointwise,
        providers: P_PLAIN_GRID,
        n_points: 12,
        tol_analytic: TOL_ID,
        grid_coeff: Some(12.0),
    },
    CheckSpec {
        id: "theorem_5_1",
        citation: "Theorem 5.1, \"On M × [0,T] × {0}\"",
        description: "s-derivative of the gauge-shifted Ricci flow operator is Δ̃_L h̃",
        kind: CheckKind::Family,
        providers: P_FAMILY,
        n_points: 6,
        tol_analytic: 1e-5,
        grid_coeff: Some(1100.0),
    },
    CheckSpec {
        id: "eq_5_2",
        citation: "Eq (5.2), \"= div(div(h)) − ½ΔH\"",
        description: "s-derivative of the extended gauge covector's time slot",
        kind: CheckKind::Family,
        providers: P_FAMILY,
        n_points: 6,
        tol_analytic: 1e-9,
        grid_coeff: Some(1.5),
    },
    CheckSpec {
        id: "eq_5_6",
        citation: "Eq (5.6), \"note however, (5.6) doesn't imply (2.5)\"",
        description: "Koszul symmetrization of the heat-operator defect vanishes",
        kind: CheckKind::Pointwise,
        providers: P_PLAIN_GRID,
        n_points: 8,
        tol_analytic: TOL_ID,
        grid_coeff: Some(5300.0),
    },
    CheckSpec {
        id: "theorem_C",
        citation: "Theorem C, \"Q = g̃ⁱᵖR̃ₚⱼˡTᵢʲTₗᵏ\"",
        description: "matrix quadratic: explicit assembly equals space-time contraction",
        kind: CheckKind::Pointwise,
        providers: P_PLAIN_GRID,
        n_points: 16,
        tol_analytic: 1e-8,
        grid_coeff: Some(70.0),
    },
    CheckSpec {
        id: "harnack_specialization",
        citation: "Theorem B, \"taking h = Rc, we obtain Theorem A\"",
        description: "with h = Rc the linear quadratic reduces to half the trace form",
        kind: CheckKind::Pointwise,
        providers: P_PLAIN_GRID,
        n_points: 16,
        tol_analytic: 1e-7,
        grid_coeff: Some(100.0),
    },
    CheckSpec {
        id: "harnack_positivity_sphere",
        citation: "Theorem A, \"∂/∂t(tR) ≥ 0\"",
        description: "trace and linear quadratics are nonnegative on shrinking spheres",
        kind: CheckKind::Positivity,
        providers: P_SPHERES,
        n_points: 1000,
        tol_analytic: POSITIVITY_SLACK,
        grid_coeff: None,
    },
    CheckSpec {
        id: "lemma_6_1",
        citation: "Lemma 6.1, \"the details of the proof are omitted\"",
        description: "closed Christoffel table of the block metric equals the generic one",
        kind: CheckKind::OracleTable,
        providers: P_ANALYTIC_ALL,
        n_points: 12,
        tol_analytic: IDENTITY_TIGHT,
        grid_coeff: None,
    },
    CheckSpec {
        id: "lemma_6_2_slopes",
        citation: "Lemma 6.2, \"O(1/N)\"",
        description: "block-metric objects converge to the degenerate ones at rate 1/N",
        kind: CheckKind::Slopes,
        providers: P_SLOPES,
        n_points: 3,
        tol_analytic: 0.1,
        grid_coeff: None,
    },
    CheckSpec {
        id: "lemma_6_3",
        citation: "Lemma 6.3, \"∂/∂s ĝᵢⱼ = h̃ᵢⱼ\"",
        description: "s-derivative of the block metric is the extended tensor",
        kind: CheckKind::Family,
        providers: P_FAMILY,
        n_points: 6,
        tol_analytic: 5e-7,
        grid_coeff: Some(7.0),
    },
    CheckSpec {
        id: "lemma_6_4",
        citation: "Lemma 6.4, \"∂/∂t ĝᵢⱼ = −2R̃ᵢⱼ + ∇̃ᵢW̃ⱼ + ∇̃ⱼW̃ᵢ + o(s)\"",
        description: "t-derivative of the block metric matches the flow operator to o(s)",
        kind: CheckKind::Family,
        providers: P_FAMILY,
        n_points: 6,
        tol_analytic: 5e-5,
        grid_coeff: Some(500.0),
    },
];

pub fn catalog() -> &'static [CheckSpec] {
    CATALOG
}

pub fn find_check(id: &str) -> Option<&'static CheckSpec> {
    CATALOG.iter().find(|c| c.id == id)
}

pub fn catalog_ids() -> Vec<&'static str> {
    CATALOG.iter().map(|c| c.id).collect()
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

fn clean(x: f64) -> f64 {
    if x.is_finite() {
        x
    } else {
        f64::MAX
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckReport {
    pub id: String,
    pub citation: String,
    pub provider: String,
    pub n_points: usize,
    pub max_residual: f64,
    pub mean_residual: f64,
    #[serde(rename = "tolerance")]
    pub tolerance_used: f64,
    pub pass: bool,
    pub seed: u64,
    pub details: BTreeMap<String, f64>,
    /// Wall time; excluded from serialization so reports stay byte-identical
    /// across machines and runs.
    #[serde(skip)]
    pub runtime_ms: u128,
}

#[derive(Debug, Clone, Serialize)]
pub struct SuiteErrorEntry {
    pub id: String,
    pub provider: String,
    pub message: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct SuiteReport {
    pub schema_version: u32,
    pub seed: u64,
    pub mutation: String,
    pub n_pass: usize,
    pub n_fail: usize,
    pub all_pass: bool,
    pub reports: Vec<CheckReport>,
    pub errors: Vec<SuiteErrorEntry>,
}

impl SuiteReport {
    pub fn json(&self) -> String {
        serde_json::to_string_pretty(self).expect("suite report serializes")
    }

    pub fn csv(&self) -> String {
        let mut out = String::from(
            "id,provider,citation,n_points,max_residual,mean_residual,tolerance,pass,seed\n",
        );
        for r in &self.reports {
            let citation = r.citation.replace('"', "\"\"");
            out.push_str(&format!(
                "{},{},\"{}\",{},{:.6e},{:.6e},{:.6e},{},{}\n",
                r.id,
                r.provider,
                citation,
                r.n_points,
                r.max_residual,
                r.mean_residual,
                r.tolerance_used,
                r.pass,
                r.seed
            ));
        }
        out
    }

    /// Human-oriented table keyed by the citation tags.
    pub fn summary(&self) -> String {
        let mut out = String::new();
        for r in &self.reports {
            let verdict = if r.pass { "PASS" } else { "FAIL" };
            out.push_str(&format!(
                "[{verdict}] {:<26} @ {:<18} max {:>10.3e}  tol {:>9.3e}  n={:<5} {}\n",
                r.id, r.provider, r.max_residual, r.tolerance_used, r.n_points, r.citation
            ));
        }
        for e in &self.errors {
            out.push_str(&format!("[ERR ] {} @ {}: {}\n", e.id, e.provider, e.message));
        }
        out.push_str(&format!(
            "{} passed, {} failed, {} errors\n",
            self.n_pass,
            self.n_fail,
            self.errors.len()
        ));
        out
    }
}

// ---------------------------------------------------------------------------
// Lab environment
// ---------------------------------------------------------------------------

const GRID_N: usize = 32;
const GRID_ORD: usize = 4;
const GRID_G_AMP: f64 = 0.05;
const GRID_H_AMP: f64 = 0.2;
/// s-offset of the stencil family (matches the documented s₀ set).
const GRID_S0: f64 = 5e-4;
/// s-offset of the trajectory used as the nonzero-gauge provider; large so
/// that the gauge vector is O(1) rather than O(s₀).
const GRID_VS0: f64 = 0.25;
const GRID_STEPS: usize = 8;

/// Tunable knobs of the grid backend. The defaults reproduce the calibrated
/// 32² fourth-order configuration that the frozen tolerances were measured
/// against; other settings are for exploration and scale the tolerance by the
/// actual spacing and stencil order.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridParams {
    pub resolution: usize,
    pub order: usize,
    pub s0: f64,
}

impl Default for GridParams {
    fn default() -> GridParams {
        GridParams {
            resolution: GRID_N,
            order: GRID_ORD,
            s0: GRID_S0,
        }
    }
}

/// Grid backend shared by all grid checks: one gauge-stencil family and one
/// wide-offset family, with node jets extracted at the middle snapshot.
pub struct GridLab {
    pub fam: GridFamily,
    pub snap: usize,
    pub base: SliceJets,
    pub voff: SliceJets,
}

fn build_gridlab(seed: u64, params: GridParams) -> Result<GridLab, FlowError> {
    let spec = GridSpec::new(params.resolution, params.resolution, params.order);
    let g0 = perturbed_flat(spec, GRID_G_AMP, seed ^ fnv1a(b"grid-g"));
    let h0 = random_sym_field(spec, GRID_H_AMP, seed ^ fnv1a(b"grid-h"));
    let fam = build_deturck_family(spec, g0.clone(), h0.clone(), params.s0, GRID_STEPS, CFL_DEFAULT)?;
    let vfam = build_deturck_family(spec, g0, h0, GRID_VS0, GRID_STEPS, CFL_DEFAULT)?;
    let snap = GRID_STEPS / 2;
    let base = slice_jets(&fam, snap, SliceSel::Base)?;
    let voff = slice_jets(&vfam, snap, SliceSel::Offset(3))?;
    Ok(GridLab {
        fam,
        snap,
        base,
        voff,
    })
}

/// Provider pool plus the lazily built grid backend, under one suite seed
/// and one optional fault injection.
pub struct LabEnv {
    pub seed: u64,
    pub mutation: Mutation,
    grid_params: GridParams,
    providers: Vec<AnalyticProvider>,
    grid: OnceLock<Result<GridLab, String>>,
}

impl LabEnv {
    pub fn new(seed: u64) -> LabEnv {
        LabEnv::with_mutation(seed, Mutation::None)
    }

    pub fn with_mutation(seed: u64, mutation: Mutation) -> LabEnv {
        LabEnv::with_options(seed, mutation, GridParams::default())
    }

    pub fn with_options(seed: u64, mutation: Mutation, grid_params: GridParams) -> LabEnv {
        LabEnv {
            seed,
            mutation,
            grid_params,
            providers: standard_providers(seed),
            grid: OnceLock::new(),
        }
    }

    pub fn provider(&self, id: &str) -> Option<&AnalyticProvider> {
        provider_by_id(&self.providers, id)
    }

    pub fn gridlab(&self) -> Result<&GridLab, VerifyError> {
        match self
            .grid
            .get_or_init(|| build_gridlab(self.seed, self.grid_params).map_err(|e| e.to_string()))
        {
            Ok(lab) => Ok(lab),
            Err(message) => Err(VerifyError::GridUnavailable {
                message: message.clone(),
            }),
        }
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Deterministic per-pair RNG seed, independent of execution order.
pub fn check_seed(suite_seed: u64, id: &str, provider: &str) -> u64 {
    let mut buf = Vec::with_capacity(id.len() + provider.len() + 1);
    buf.extend_from_slice(id.as_bytes());
    buf.push(b'/');
    buf.extend_from_slice(provider.as_bytes());
    suite_seed ^ fnv1a(&buf)
}

// ---------------------------------------------------------------------------
// Runner scaffolding
// ---------------------------------------------------------------------------

#[derive(Default)]
struct Stats {
    max: f64,
    sum: f64,
    n: usize,
}

impl Stats {
    fn push(&mut self, r: f64) {
        let r = if r.is_finite() { r } else { f64::MAX };
        self.max = self.max.max(r);
        self.sum += r;
        self.n += 1;
    }

    fn mean(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            self.sum / self.n as f64
        }
    }
}

/// Measures the convergence order of the five-point first-derivative
/// stencil from the data itself: the discrepancy between the second-order
/// and fourth-order estimates at steps s₀ and 2s₀ scales as s₀², so their
/// ratio is 4 when the stencil operates in its asymptotic regime.  Sums are
/// L1-aggregated over all components and sample points so that roundoff on
/// individual entries washes out.
struct OrderAcc {
    e1: f64,
    e2: f64,
    n: usize,
    scale: f64,
}

impl OrderAcc {
    fn new() -> OrderAcc {
        OrderAcc {
            e1: 0.0,
            e2: 0.0,
            n: 0,
            scale: 0.0,
        }
    }

    fn push(&mut self, vals: &[f64; 5], s0: f64) {
        let d4 = s_stencil(vals, s0);
        let d2_near = (vals[3] - vals[1]) / (2.0 * s0);
        let d2_far = (vals[4] - vals[0]) / (4.0 * s0);
        self.e2 += (d2_near - d4).abs();
        self.e1 += (d2_far - d4).abs();
        self.n += 1;
        for v in vals {
            self.scale = self.scale.max(v.abs());
        }
    }

    /// `(order, e1, e2)`; when both discrepancies sit at the roundoff floor
    /// the stencil is exact for the data and the nominal order 4 is
    /// reported.
    fn order(&self) -> (f64, f64, f64) {
        let floor = 1e-12 * (1.0 + self.scale) * self.n.max(1) as f64;
        if self.e1 <= floor || self.e2 <= floor {
            return (4.0, self.e1, self.e2);
        }
        ((self.e1 / self.e2).log2(), self.e1, self.e2)
    }
}

/// Everything a pointwise check needs at one chart point.
struct Ctx {
    geom: Geometry<Jet>,
    v: Option<CotensorJet>,
    h: Option<T2<Jet>>,
    t: f64,
    x: Vec<f64>,
}

fn needs_h(id: &str) -> bool {
    matches!(
        id,
        "lemma_2_1_i"
            | "lemma_2_1_ii"
            | "lemma_2_2"
            | "prop_2_3_eq_2_4"
            | "prop_2_3_eq_2_5"
            | "eq_4_5"
            | "eq_5_6"
    )
}

/// Raise both indices of a symmetric 2-tensor with the inverse metric.
fn up2(geom: &Geometry<Jet>, h: &T2<Jet>) -> T2<Jet> {
    let n = geom.n;
    t2(n, |p, q| {
        sum2(&geom.scal, n, |a, b| {
            geom.ginv[p][a].mul(&geom.ginv[q][b]).mul(&h[a][b])
        })
    })
}

fn h_as_cotensor(n: usize, h: &T2<Jet>) -> CotensorJet {
    CotensorJet::rank2(n, t2(n, |i, j| h[i][j].clone()))
}

fn expect_h<'c>(ctx: &'c Ctx, id: &str) -> &'c T2<Jet> {
    ctx.h
        .as_ref()
        .unwrap_or_else(|| panic!("check {id} requires a provider with h"))
}

/// |V|² as a jet (zero when V is absent).
fn v_norm2(geom: &Geometry<Jet>, v: Option<&CotensorJet>) -> Jet {
    match v {
        None => geom.scal.zero_like(),
        Some(v) => sum2(&geom.scal, geom.n, |i, j| {
            geom.ginv[i][j].mul(v.at1(i)).mul(v.at1(j))
        }),
    }
}

/// The three time-slot choices cycled through by the gauge-freedom checks:
/// zero, a constant, and a fixed polynomial bending in t and x.
fn vt0_choices(geom: &Geometry<Jet>, t: f64, x: &[f64]) -> Vec<Jet> {
    let sp = geom.scal.space();
    let tj = Jet::variable(sp, 0, t);
    let mut poly = Jet::constant(sp, 0.7)
        .add(&tj.scale(0.3))
        .add(&tj.mul(&tj).scale(0.05));
    for (i, &xi) in x.iter().enumerate() {
        let xj = Jet::variable(sp, i + 1, xi);
        poly = poly.add(&xj.scale(0.2 - 0.05 * i as f64));
    }
    if x.len() >= 2 {
        let x1 = Jet::variable(sp, 1, x[0]);
        let x2 = Jet::variable(sp, 2, x[1]);
        poly = poly.add(&x1.mul(&x2).scale(0.1));
    }
    vec![Jet::constant(sp, 0.0), Jet::constant(sp, 3.0), poly]
}

// ---------------------------------------------------------------------------
// Pointwise residuals
// ---------------------------------------------------------------------------

fn res_lemma_2_1_i(ctx: &Ctx) -> f64 {
    let g = &ctx.geom;
    let n = g.n;
    let h = expect_h(ctx, "lemma_2_1_i");
    let dd = divergence(g, h);
    let cdiv = cov1(g, &dd.div);
    let d2div = cov2(g, &cdiv);
    let lap_div = t1(n, |i| {
        sum2(&g.scal, n, |p, q| g.ginv[p][q].mul(&d2div[p][q][i]))
    });
    let cr = cov2(g, &g.ricci);
    let ch = cov2(g, h);
    let hup = up2(g, h);
    let rcup = up2(g, &g.ricci);
    let div_up = t1(n, |q| sum1(&g.scal, n, |p| g.ginv[q][p].mul(&dd.div[p])));
    let mut worst = 0.0f64;
    for i in 0..n {
        let lhs = dd.div[i].deriv(0).value();
        let mut rhs = lap_div[i].value();
        for p in 0..n {
            for q in 0..n {
                rhs += 2.0 * hup[p][q].value() * cr[i][p][q].value()
                    - 2.0 * hup[p][q].value() * cr[p][q][i].value()
                    + 2.0 * rcup[p][q].value() * ch[p][q][i].value();
            }
        }
        for q in 0..n {
            rhs -= div_up[q].value() * g.ricci[q][i].value();
        }
        worst = worst.max((lhs - rhs).abs());
    }
    worst
}

fn res_lemma_2_1_ii(ctx: &Ctx) -> f64 {
    let g = &ctx.geom;
    let n = g.n;
    let h = expect_h(ctx, "lemma_2_1_ii");
    let dd = divergence(g, h);
    let s_jet = dd.divdiv.add(&dd.rc_dot_h);
    let lhs = s_jet.deriv(0).value();
    let cdiv = cov1(g, &dd.div);
    let hup = up2(g, h);
    let rcup = up2(g, &g.ricci);
    let lap_rc = lap_t2(g, &g.ricci);
    let hess_r = hessian(g, &g.scal);
    let mut rhs = lap_scalar(g, &s_jet).value();
    for i in 0..n {
        for j in 0..n {
            rhs += 4.0 * rcup[i][j].value() * cdiv[j][i].value();
        }
    }
    for p in 0..n {
        for q in 0..n {
            let mut m0 = lap_rc[p][q].value() - 0.5 * hess_r[p][q].value();
            for k in 0..n {
                for l in 0..n {
                    m0 += 2.0 * g.riem_low[k][p][q][l].value() * rcup[k][l].value();
                }
            }
            rhs += 2.0 * hup[p][q].value() * m0;
        }
    }
    (lhs - rhs).abs()
}

fn res_lemma_2_2(ctx: &Ctx, mutation: Mutation) -> Result<f64, VerifyError> {
    let g = &ctx.geom;
    let h = expect_h(ctx, "lemma_2_2");
    let hc = h_as_cotensor(g.n, h);
    let ht = extend_h(g, &hc, mutation)?;
    let conn = build_connection(g, None, mutation)?;
    let gt = build_cometric(g);
    Ok(lemma22_residual(&ht, &conn, &gt))
}

fn res_prop_2_3(ctx: &Ctx, mutation: Mutation, partial_time: bool) -> Result<f64, VerifyError> {
    let g = &ctx.geom;
    let n = g.n;
    let m = n + 1;
    let h = expect_h(ctx, "prop_2_3");
    let hc = h_as_cotensor(n, h);
    let ht = extend_h(g, &hc, mutation)?;
    let conn = build_connection(g, None, mutation)?;
    let gt = build_cometric(g);
    let curv = st_curvature(&conn, mutation);
    let mut worst = 0.0f64;
    if partial_time {
        let lich = st_lichnerowicz(&ht, &conn, &curv, &gt);
        for a in 0..m {
            for b in 0..m {
                let lhs = ht.comps[a][b].deriv(0).value();
                worst = worst.max((lhs - lich.comps[a][b].value()).abs());
            }
        }
    } else {
        let d1 = st_cov2(&conn, &ht.comps);
        let rough = st_rough_laplacian_spatial(&gt, &conn, &ht.comps);
        let zero = g.scal.zero_like();
        let hmix = t2(m, |p, l| {
            sum1(&zero, m, |q| gt.gt_inv[p][q].mul(&ht.comps[q][l]))
        });
        for a in 0..m {
            for b in 0..m {
                let lhs = d1[0][a][b].value();
                let mut rhs = rough[a][b].value();
                for p in 0..m {
                    for l in 0..m {
                        rhs += 2.0 * hmix[p][l].value() * curv.riem[p][a][b][l].value();
                    }
                }
                worst = worst.max((lhs - rhs).abs());
            }
        }
    }
    Ok(worst)
}

fn res_curvext_b4(ctx: &Ctx, mutation: Mutation) -> Result<f64, VerifyError> {
    let g = &ctx.geom;
    let n = g.n;
    let conn = build_connection(g, None, mutation)?;
    let curv = st_curvature(&conn, mutation);
    let cr = cov2(g, &g.ricci);
    let mut worst = 0.0f64;
    for p in 0..n {
        for i in 0..n {
            for q in 0..n {
                let lhs = curv.riem[p + 1][0][i + 1][q + 1].value();
                let mut rhs = 0.0;
                for a in 0..n {
                    rhs += g.ginv[q][a].value() * cr[i][p][a].value()
                        - g.ginv[q][a].value() * cr[a][p][i].value();
                }
                worst = worst.max((lhs - rhs).abs());
            }
        }
    }
    Ok(worst)
}

fn res_curvext_b5(ctx: &Ctx, mutation: Mutation) -> Result<f64, VerifyError> {
    let g = &ctx.geom;
    let n = g.n;
    let conn = build_connection(g, None, mutation)?;
    let curv = st_curvature(&conn, mutation);
    let lap_rc = lap_t2(g, &g.ricci);
    let hess_r = hessian(g, &g.scal);
    let rcup = up2(g, &g.ricci);
    let mut worst = 0.0f64;
    for p in 0..n {
        for q in 0..n {
            let lhs = curv.riem[p + 1][0][0][q + 1].value();
            let mut rhs = 0.0;
            for a in 0..n {
                let mut m_pa = lap_rc[p][a].value() - 0.5 * hess_r[p][a].value();
                for k in 0..n {
                    for l in 0..n {
                        m_pa += 2.0 * g.riem_low[k][p][a][l].value() * rcup[k][l].value();
                    }
                }
                for k in 0..n {
                    m_pa -= g.ricci_up[p][k].value() * g.ricci[k][a].value();
                }
                rhs += m_pa * g.ginv[a][q].value();
            }
            worst = worst.max((lhs - rhs).abs());
        }
    }
    Ok(worst)
}

fn res_compat(ctx: &Ctx, mutation: Mutation) -> Result<f64, VerifyError> {
    let conn = build_connection(&ctx.geom, ctx.v.as_ref(), mutation)?;
    let gt = build_cometric(&ctx.geom);
    Ok(compat_check(&gt, &conn))
}

fn res_theorem_3_1_eq_3_3(ctx: &Ctx, mutation: Mutation) -> Result<f64, VerifyError> {
    let g = &ctx.geom;
    let m = g.n + 1;
    let conn = build_connection(g, ctx.v.as_ref(), mutation)?;
    let curv = st_curvature(&conn, mutation);
    let gt = build_cometric(g);
    let vt = build_vtilde(g.n, ctx.v.as_ref(), &g.scal.zero_like());
    let cvt = st_cov1(&conn, &vt.comps);
    let mut worst = 0.0f64;
    for a in 0..m {
        for b in 0..m {
            let lhs = gt.gt_inv[a][b].deriv(0).value();
            let mut rhs = 0.0;
            for k in 0..m {
                for l in 0..m {
                    rhs += gt.gt_inv[a][k].value()
                        * gt.gt_inv[b][l].value()
                        * (2.0 * curv.ricci[k][l].value() - cvt[k][l].value() - cvt[l][k].value());
                }
            }
            worst = worst.max((lhs - rhs).abs());
        }
    }
    Ok(worst)
}

fn res_theorem_3_1_eq_3_4(ctx: &Ctx, mutation: Mutation) -> Result<f64, VerifyError> {
    let g = &ctx.geom;
    let m = g.n + 1;
    let conn = build_connection(g, ctx.v.as_ref(), mutation)?;
    let curv = st_curvature(&conn, mutation);
    let gt = build_cometric(g);
    let zero = g.scal.zero_like();
    let mut worst = 0.0f64;
    for vt0 in vt0_choices(g, ctx.t, &ctx.x) {
        let vt = build_vtilde(g.n, ctx.v.as_ref(), &vt0);
        let cvt = st_cov1(&conn, &vt.comps);
        let a_ab = t2(m, |a, b| {
            curv.ricci[a][b].sub(&cvt[a][b].add(&cvt[b][a]).scale(0.5))
        });
        let a_mixed = t2(m, |a, k| sum1(&zero, m, |l| gt.gt_inv[k][l].mul(&a_ab[a][l])));
        let dmx = st_cov_mixed11(&conn, &a_mixed);
        let d2 = st_cov2(&conn, &a_ab);
        for k in 0..m {
            for i in 0..m {
                for j in 0..m {
                    let lhs = conn.gammat[k][i][j].deriv(0).value();
                    let mut rhs = -dmx[i][j][k].value() - dmx[j][i][k].value();
                    for l in 0..m {
                        rhs += gt.gt_inv[k][l].value() * d2[l][i][j].value();
                    }
                    worst = worst.max((lhs - rhs).abs());
                }
            }
        }
    }
    Ok(worst)
}

fn res_lemma_3_2(ctx: &Ctx, mutation: Mutation, time_slot: bool) -> Result<f64, VerifyError> {
    let g = &ctx.geom;
    let n = g.n;
    let conn = build_connection(g, ctx.v.as_ref(), mutation)?;
    let curv = st_curvature(&conn, mutation);
    let vn2 = v_norm2(g, ctx.v.as_ref());
    let mut worst = 0.0f64;
    for vt0 in vt0_choices(g, ctx.t, &ctx.x) {
        let vt = build_vtilde(n, ctx.v.as_ref(), &vt0);
        let cvt = st_cov1(&conn, &vt.comps);
        if time_slot {
            let lhs = curv.ricci[0][0].value() - cvt[0][0].value();
            let sc = g.scal.add(&vn2).sub(&vt0.scale(2.0));
            let rhs = 0.5 * sc.deriv(0).value();
            worst = worst.max((lhs - rhs).abs());
        } else {
            let sc = g.scal.add(&vn2).sub(&vt0);
            for j in 0..n {
                let lhs = curv.ricci[j + 1][0].value()
                    - 0.5 * cvt[j + 1][0].value()
                    - 0.5 * cvt[0][j + 1].value();
                let mut rhs = 0.5 * sc.deriv(j + 1).value();
                if let Some(v) = ctx.v.as_ref() {
                    rhs -= 0.5 * v.at1(j).deriv(0).value();
                }
                worst = worst.max((lhs - rhs).abs());
            }
        }
    }
    Ok(worst)
}

fn res_eq_4_5(ctx: &Ctx) -> f64 {
    let g = &ctx.geom;
    let h = expect_h(ctx, "eq_4_5");
    let dd = divergence(g, h);
    let lhs = dd.trace.deriv(0).value();
    let rhs = lap_scalar(g, &dd.trace).value() + 2.0 * dd.rc_dot_h.value();
    (lhs - rhs).abs()
}

/// Rough space-time Laplacian with the trace taken over the spatial block
/// only (the degenerate cometric annihilates the time row identically, so
/// this equals the full contraction while keeping one more valid time
/// derivative in the result's jets).
fn st_rough_laplacian_spatial(
    gt: &SpaceTimeCometric,
    conn: &SpaceTimeConnection,
    h: &T2<Jet>,
) -> T2<Jet> {
    let m = conn.m;
    let d1 = st_cov2(conn, h);
    t2(m, |a, b| {
        let mut acc = h[0][0].zero_like();
        for c in 1..m {
            for d in 1..m {
                let mut term = d1[d][a][b].deriv(c);
                for p in 0..m {
                    term = term
                        .sub(&conn.gammat[p][c][d].mul(&d1[p][a][b]))
                        .sub(&conn.gammat[p][c][a].mul(&d1[d][p][b]))
                        .sub(&conn.gammat[p][c][b].mul(&d1[d][a][p]));
                }
                acc = acc.add(&gt.gt_inv[c][d].mul(&term));
            }
        }
        acc
    })
}

fn res_eq_5_6(ctx: &Ctx, mutation: Mutation) -> Result<f64, VerifyError> {
    let g = &ctx.geom;
    let n = g.n;
    let m = n + 1;
    let h = expect_h(ctx, "eq_5_6");
    let hc = h_as_cotensor(n, h);
    let ht = extend_h(g, &hc, mutation)?;
    let conn = build_connection(g, None, mutation)?;
    let gt = build_cometric(g);
    let curv = st_curvature(&conn, mutation);
    let zero = g.scal.zero_like();
    let rough = st_rough_laplacian_spatial(&gt, &conn, &ht.comps);
    let hmix = t2(m, |p, l| {
        sum1(&zero, m, |q| gt.gt_inv[p][q].mul(&ht.comps[q][l]))
    });
    let curv_term = t2(m, |a, b| {
        sum2(&zero, m, |p, l| hmix[p][l].mul(&curv.riem[p][a][b][l]))
    });
    let ric_mix = t2(m, |a, q| {
        sum1(&zero, m, |c| gt.gt_inv[q][c].mul(&curv.ricci[a][c]))
    });
    let lich = t2(m, |a, b| {
        let mut e = rough[a][b].add(&curv_term[a][b].scale(2.0));
        for q in 0..m {
            e = e
                .sub(&ric_mix[a][q].mul(&ht.comps[b][q]))
                .sub(&ric_mix[b][q].mul(&ht.comps[a][q]));
        }
        e
    });
    let defect = t2(m, |a, b| ht.comps[a][b].deriv(0).sub(&lich[a][b]));
    let d1 = st_cov2(&conn, &defect);
    let mut worst = 0.0f64;
    for i in 0..m {
        for j in 0..m {
            for k in 1..m {
                let r = d1[i][j][k].value() + d1[j][i][k].value() - d1[k][i][j].value();
                worst = worst.max(r.abs());
            }
        }
    }
    Ok(worst)
}

fn res_theorem_c(ctx: &Ctx, mutation: Mutation, rng: &mut ChaCha8Rng) -> Result<f64, VerifyError> {
    let st = SpaceTime::build(ctx.geom.clone(), None, mutation)?;
    let frame = HarnackFrame::random(ctx.geom.n, rng);
    let (explicit, contraction) = matrix_q(&st, &frame)?;
    Ok((explicit - contraction).abs())
}

fn res_harnack_specialization(
    ctx: &Ctx,
    mutation: Mutation,
    rng: &mut ChaCha8Rng,
) -> Result<f64, VerifyError> {
    let g = &ctx.geom;
    let rc = ricci_cotensor(g);
    let ht = extend_h(g, &rc, mutation)?;
    let frame = HarnackFrame::random(g.n, rng);
    // The identity is independent of the 1/t weight (it cancels between the
    // two sides), so clamp to a positive evaluation time where the chart
    // sits at t <= 0.
    let t_eval = if ctx.t > 1e-3 { ctx.t } else { 0.5 };
    let q = trace_quadratic(g, &frame, t_eval, DtRMode::FromJet)?;
    let z = linear_trace_z(g, &rc, &ht, &frame, t_eval, true)?;
    let r_trace = (q - 2.0 * z.value).abs();
    let r_paths = (z.value - z.contraction).abs();
    Ok(r_trace.max(r_paths))
}

fn pointwise_residual(
    id: &str,
    ctx: &Ctx,
    mutation: Mutation,
    rng: &mut ChaCha8Rng,
) -> Result<f64, VerifyError> {
    match id {
        "lemma_2_1_i" => Ok(res_lemma_2_1_i(ctx)),
        "lemma_2_1_ii" => Ok(res_lemma_2_1_ii(ctx)),
        "lemma_2_2" => res_lemma_2_2(ctx, mutation),
        "prop_2_3_eq_2_4" => res_prop_2_3(ctx, mutation, false),
        "prop_2_3_eq_2_5" => res_prop_2_3(ctx, mutation, true),
        "curvext_B4" => res_curvext_b4(ctx, mutation),
        "curvext_B5" => res_curvext_b5(ctx, mutation),
        "compat" => res_compat(ctx, mutation),
        "theorem_3_1_eq_3_3" => res_theorem_3_1_eq_3_3(ctx, mutation),
        "theorem_3_1_eq_3_4" => res_theorem_3_1_eq_3_4(ctx, mutation),
        "lemma_3_2_eq_3_5" => res_lemma_3_2(ctx, mutation, false),
        "lemma_3_2_eq_3_6" => res_lemma_3_2(ctx, mutation, true),
        "eq_4_5" => Ok(res_eq_4_5(ctx)),
        "eq_5_6" => res_eq_5_6(ctx, mutation),
        "theorem_C" => res_theorem_c(ctx, mutation, rng),
        "harnack_specialization" => res_harnack_specialization(ctx, mutation, rng),
        other => Err(VerifyError::UnknownCheck {
            id: other.to_string(),
        }),
    }
}

fn run_pointwise_analytic(
    env: &LabEnv,
    spec: &CheckSpec,
    provider: &str,
    rng: &mut ChaCha8Rng,
    stats: &mut Stats,
) -> Result<(), VerifyError> {
    let prov = env
        .provider(provider)
        .ok_or_else(|| VerifyError::ProviderUnavailable {
            check: spec.id.to_string(),
            provider: provider.to_string(),
        })?;
    for _ in 0..spec.n_points {
        let p = prov.sample(rng);
        let mj = prov.metric_jet(&p, MAX_ANALYTIC_ORDER)?;
        let geom = build_geometry_jets(&mj, env.mutation)?;
        let v = prov.flow_vector(&p, MAX_ANALYTIC_ORDER)?;
        let h = needs_h(spec.id).then(|| t2(geom.n, |i, j| geom.ricci[i][j].clone()));
        let ctx = Ctx {
            geom,
            v,
            h,
            t: p.t,
            x: p.x.clone(),
        };
        stats.push(pointwise_residual(spec.id, &ctx, env.mutation, rng)?);
    }
    Ok(())
}

fn run_pointwise_grid(
    env: &LabEnv,
    spec: &CheckSpec,
    provider: &str,
    rng: &mut ChaCha8Rng,
    stats: &mut Stats,
) -> Result<(), VerifyError> {
    let lab = env.gridlab()?;
    let slice = if provider == GRID_OFFSET {
        &lab.voff
    } else {
        &lab.base
    };
    let gspec = slice.spec;
    for _ in 0..spec.n_points {
        let node = (rng.gen_range(0..gspec.nx), rng.gen_range(0..gspec.ny));
        let geom = slice.geometry_at(node, env.mutation);
        let v = slice.v_at(node).map(CotensorJet::rank1);
        let h = if needs_h(spec.id) {
            slice.h_at(node)
        } else {
            None
        };
        let (x, y) = slice.coords(node);
        let ctx = Ctx {
            geom,
            v,
            h,
            t: slice.t,
            x: vec![x, y],
        };
        stats.push(pointwise_residual(spec.id, &ctx, env.mutation, rng)?);
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Family checks
// ---------------------------------------------------------------------------

fn lowered_w(sl: &FamilySlice) -> CotensorJet {
    let n = sl.geom.n;
    CotensorJet::rank1(
        (0..n)
            .map(|i| sum1(&sl.geom.scal, n, |k| sl.geom.g[i][k].mul(&sl.w_up[k])))
            .collect(),
    )
}

/// Evaluates one family check on one five-slice family; returns the maximum
/// stencil-vs-closed-form residual and feeds every per-component value array
/// into the order accumulator.
fn family_residual(
    id: &str,
    fam: &PointFamily,
    mutation: Mutation,
    acc: &mut OrderAcc,
) -> Result<f64, VerifyError> {
    let n = fam.n;
    let m = n + 1;
    let s0 = fam.s0;
    let center = fam.center();
    let hm = t2(n, |i, j| fam.h_center.at2(i, j).clone());
    let mut worst = 0.0f64;
    let mut check = |vals: &[f64; 5], want: f64, acc: &mut OrderAcc| {
        acc.push(vals, s0);
        let r = (s_stencil(vals, s0) - want).abs();
        if r > worst {
            worst = r;
        }
    };
    match id {
        "lemma_4_1_ii" => {
            for i in 0..n {
                for j in 0..n {
                    let mut vals = [0.0; 5];
                    for (k, sl) in fam.slices.iter().enumerate() {
                        vals[k] = sl.geom.g[i][j].value();
                    }
                    check(&vals, hm[i][j].value(), acc);
                }
            }
        }
        "theorem_4_2_metric" => {
            let hup = up2(&center.geom, &hm);
            for i in 0..n {
                for j in 0..n {
                    let mut vals = [0.0; 5];
                    for (k, sl) in fam.slices.iter().enumerate() {
                        vals[k] = sl.geom.ginv[i][j].value();
                    }
                    check(&vals, -hup[i][j].value(), acc);
                }
            }
        }
        "theorem_4_2_connection" => {
            let conn0 = build_connection(&center.geom, None, mutation)?;
            let ht = extend_h(&center.geom, &fam.h_center, mutation)?;
            let d1 = st_cov2(&conn0, &ht.comps);
            let conns = fam
                .slices
                .iter()
                .map(|sl| build_connection(&sl.geom, Some(&lowered_w(sl)), mutation))
                .collect::<Result<Vec<_>, _>>()?;
            for k in 0..n {
                for a in 0..m {
                    for b in 0..m {
                        let mut vals = [0.0; 5];
                        for (sx, conn_s) in conns.iter().enumerate() {
                            vals[sx] = conn_s.gammat[k + 1][a][b].value();
                        }
                        let mut rhs = 0.0;
                        for l in 0..n {
                            rhs += 0.5
                                * center.geom.ginv[k][l].value()
                                * (d1[a][b][l + 1].value() + d1[b][a][l + 1].value()
                                    - d1[l + 1][a][b].value());
                        }
                        check(&vals, rhs, acc);
                    }
                }
            }
        }
        "eq_4_3" => {
            let dd = divergence(&center.geom, &hm);
            for k in 0..n {
                let mut vals = [0.0; 5];
                for (sx, sl) in fam.slices.iter().enumerate() {
                    let mut w_low = 0.0;
                    for p in 0..n {
                        w_low += sl.geom.g[k][p].value() * sl.w_up[p].value();
                    }
                    vals[sx] = w_low;
                }
                let rhs = dd.div[k].value() - 0.5 * dd.trace.deriv(k + 1).value();
                check(&vals, rhs, acc);
            }
        }
        "eq_4_4" => {
            let dd = divergence(&center.geom, &hm);
            let rhs = dd.divdiv.value()
                - lap_scalar(&center.geom, &dd.trace).value()
                - dd.rc_dot_h.value();
            let mut vals = [0.0; 5];
            for (sx, sl) in fam.slices.iter().enumerate() {
                vals[sx] = sl.geom.scal.value();
            }
            check(&vals, rhs, acc);
        }
        "eq_5_2" => {
            let dd = divergence(&center.geom, &hm);
            let rhs = dd.divdiv.value() - 0.5 * lap_scalar(&center.geom, &dd.trace).value();
            let mut vals = [0.0; 5];
            for (sx, sl) in fam.slices.iter().enumerate() {
                vals[sx] = build_wtilde(&sl.geom, &lowered_w(sl)).comps[0].value();
            }
            check(&vals, rhs, acc);
        }
        "theorem_5_1" => {
            let conn0 = build_connection(&center.geom, None, mutation)?;
            let curv0 = st_curvature(&conn0, mutation);
            let gt0 = build_cometric(&center.geom);
            let ht = extend_h(&center.geom, &fam.h_center, mutation)?;
            let lich = st_lichnerowicz(&ht, &conn0, &curv0, &gt0);
            let mut fvals = vec![vec![[0.0f64; 5]; m]; m];
            for (sx, sl) in fam.slices.iter().enumerate() {
                let wl = lowered_w(sl);
                let conn_s = build_connection(&sl.geom, Some(&wl), mutation)?;
                let curv_s = st_curvature(&conn_s, mutation);
                let wt = build_wtilde(&sl.geom, &wl);
                let cv = st_cov1(&conn_s, &wt.comps);
                for a in 0..m {
                    for b in 0..m {
                        fvals[a][b][sx] = -2.0 * curv_s.ricci[a][b].value()
                            + cv[a][b].value()
                            + cv[b][a].value();
                    }
                }
            }
            for a in 0..m {
                for b in 0..m {
                    check(&fvals[a][b], lich.comps[a][b].value(), acc);
                }
            }
        }
        "lemma_6_3" | "lemma_6_4" => {
            let vr = variation_checks(fam, GHAT_N_PARAM)?;
            if id == "lemma_6_3" {
                if vr.residual_a > worst {
                    worst = vr.residual_a;
                }
                for a in 0..m {
                    for b in 0..m {
                        acc.push(&vr.ghat_vals[a][b], s0);
                    }
                }
            } else {
                worst = worst
                    .max(vr.o_zero_spatial)
                    .max(vr.o_structure)
                    .max(vr.ds_o);
                for a in 0..m {
                    for b in 0..m {
                        acc.push(&vr.o_vals[a][b], s0);
                    }
                }
            }
        }
        other => {
            return Err(VerifyError::UnknownCheck {
                id: other.to_string(),
            })
        }
    }
    Ok(worst)
}

/// Outcome of one family check on one five-slice family, exposed for
/// cross-s₀ convergence studies.
#[derive(Debug, Clone, Copy)]
pub struct FamilyProbe {
    /// Max |stencil − closed form| over components.
    pub residual: f64,
    /// L1 discrepancy between the far-pair second-order ∂ₛ estimate and the
    /// five-point one; scales as (2s₀)².
    pub e1: f64,
    /// Same for the near pair; scales as s₀², so e1/e2 → 4 in the stencil's
    /// asymptotic regime.
    pub e2: f64,
    /// Largest sampled value magnitude (roundoff-floor reference).
    pub scale: f64,
}

/// Runs one family check on a caller-supplied five-slice family.
pub fn family_probe(
    id: &str,
    fam: &PointFamily,
    mutation: Mutation,
) -> Result<FamilyProbe, VerifyError> {
    let mut acc = OrderAcc::new();
    let residual = family_residual(id, fam, mutation, &mut acc)?;
    Ok(FamilyProbe {
        residual,
        e1: acc.e1,
        e2: acc.e2,
        scale: acc.scale,
    })
}

fn run_family(
    env: &LabEnv,
    spec: &CheckSpec,
    provider: &str,
    rng: &mut ChaCha8Rng,
    stats: &mut Stats,
    details: &mut BTreeMap<String, f64>,
) -> Result<(), VerifyError> {
    let mut acc = OrderAcc::new();
    if provider == GRID_BASE {
        let lab = env.gridlab()?;
        let gspec = lab.fam.spec;
        for _ in 0..spec.n_points {
            let node = (rng.gen_range(0..gspec.nx), rng.gen_range(0..gspec.ny));
            let fam = lab.fam.localize(lab.snap, node)?;
            stats.push(family_residual(spec.id, &fam, env.mutation, &mut acc)?);
        }
    } else {
        let prov = env
            .provider(provider)
            .ok_or_else(|| VerifyError::ProviderUnavailable {
                check: spec.id.to_string(),
                provider: provider.to_string(),
            })?;
        for _ in 0..spec.n_points {
            let p = prov.sample(rng);
            let mj = prov.metric_jet(&p, MAX_ANALYTIC_ORDER)?;
            let geom = build_geometry_jets(&mj, env.mutation)?;
            let fam = synthetic_family(&geom, S0_ANALYTIC)?;
            stats.push(family_residual(spec.id, &fam, env.mutation, &mut acc)?);
        }
    }
    let (order, e1, e2) = acc.order();
    details.insert("s_order".to_string(), order);
    details.insert("s_e1".to_string(), e1);
    details.insert("s_e2".to_string(), e2);
    Ok(())
}

// ---------------------------------------------------------------------------
// Positivity, oracle table, slopes
// ---------------------------------------------------------------------------

fn run_positivity(
    env: &LabEnv,
    spec: &CheckSpec,
    provider: &str,
    rng: &mut ChaCha8Rng,
    stats: &mut Stats,
    details: &mut BTreeMap<String, f64>,
) -> Result<(), VerifyError> {
    let prov = env
        .provider(provider)
        .ok_or_else(|| VerifyError::ProviderUnavailable {
            check: spec.id.to_string(),
            provider: provider.to_string(),
        })?;
    let closed_tr: fn(f64) -> f64 = match provider {
        "sphere2" => |t| 2.0 * t / (1.0 - 2.0 * t),
        "sphere3" => |t| 6.0 * t / (1.0 - 4.0 * t),
        _ => {
            return Err(VerifyError::ProviderUnavailable {
                check: spec.id.to_string(),
                provider: provider.to_string(),
            })
        }
    };
    let ts = [0.01, 0.05, 0.1];
    let mut min_q = f64::INFINITY;
    let mut min_z = f64::INFINITY;
    let mut min_zc = f64::INFINITY;
    let mut min_rq = f64::INFINITY;
    let mut max_terr = 0.0f64;
    let mut tr_min = [f64::INFINITY; 3];
    let mut tr_max = [f64::NEG_INFINITY; 3];
    for k in 0..spec.n_points {
        let mut p = prov.sample(rng);
        let bucket = k % 3;
        p.t = ts[bucket];
        let mj = prov.metric_jet(&p, 4)?;
        let geom = build_geometry_jets(&mj, env.mutation)?;
        let frame = HarnackFrame::random(geom.n, rng);
        let rc = ricci_cotensor(&geom);
        let ht = extend_h(&geom, &rc, env.mutation)?;
        let gt = build_cometric(&geom);
        let q = trace_quadratic(&geom, &frame, p.t, DtRMode::FromJet)?;
        let z = linear_trace_z(&geom, &rc, &ht, &frame, p.t, true)?;
        let rq = restated_quadratic(&ht, &gt, &geom, &frame, p.t)?;
        let tr = p.t * geom.scal.value();
        let terr = (tr - closed_tr(p.t)).abs();
        min_q = min_q.min(q);
        min_z = min_z.min(z.value);
        min_zc = min_zc.min(z.contraction);
        min_rq = min_rq.min(rq);
        max_terr = max_terr.max(terr);
        tr_min[bucket] = tr_min[bucket].min(tr);
        tr_max[bucket] = tr_max[bucket].max(tr);
        let violation = (-q).max(-z.value).max(-z.contraction).max(-rq).max(0.0);
        stats.push(violation.max(terr));
    }
    details.insert("min_trace_q".into(), min_q);
    details.insert("min_z".into(), min_z);
    details.insert("min_z_contraction".into(), min_zc);
    details.insert("min_restated".into(), min_rq);
    details.insert("max_tr_err".into(), max_terr);
    for b in 0..3 {
        details.insert(format!("tr_min_b{b}"), tr_min[b]);
        details.insert(format!("tr_max_b{b}"), tr_max[b]);
    }
    Ok(())
}

fn run_oracle_table(
    env: &LabEnv,
    spec: &CheckSpec,
    provider: &str,
    rng: &mut ChaCha8Rng,
    stats: &mut Stats,
    details: &mut BTreeMap<String, f64>,
) -> Result<(), VerifyError> {
    let prov = env
        .provider(provider)
        .ok_or_else(|| VerifyError::ProviderUnavailable {
            check: spec.id.to_string(),
            provider: provider.to_string(),
        })?;
    let order = 6;
    let mut n_min = f64::INFINITY;
    let mut n_max = 0.0f64;
    for k in 0..spec.n_points {
        let p = prov.sample(rng);
        let mj = prov.metric_jet(&p, order)?;
        let geom = build_geometry_jets(&mj, env.mutation)?;
        let v = prov.flow_vector(&p, order)?;
        let fk = match k % 3 {
            0 => FKind::Zero,
            1 => FKind::PolyBump,
            _ => FKind::GaussianBump,
        };
        let f = sample_f(geom.scal.space(), &p, fk, rng);
        let n_param = 10f64.powf(rng.gen_range(1.0f64..4.0));
        n_min = n_min.min(n_param);
        n_max = n_max.max(n_param);
        let am = build_ghat(geom, v.as_ref(), &f, n_param)?;
        let closed = ghat_christoffel_closed(&am);
        let generic = ghat_christoffel_generic(&am);
        let m = am.m;
        let mut worst = 0.0f64;
        for a in 0..m {
            for b in 0..m {
                for c in 0..m {
                    worst = worst.max((closed[a][b][c].value() - generic[a][b][c].value()).abs());
                }
            }
        }
        stats.push(worst);
    }
    details.insert("n_param_min".into(), n_min);
    details.insert("n_param_max".into(), n_max);
    Ok(())
}

fn run_slopes(
    env: &LabEnv,
    spec: &CheckSpec,
    provider: &str,
    rng: &mut ChaCha8Rng,
    stats: &mut Stats,
    details: &mut BTreeMap<String, f64>,
) -> Result<(), VerifyError> {
    let prov = env
        .provider(provider)
        .ok_or_else(|| VerifyError::ProviderUnavailable {
            check: spec.id.to_string(),
            provider: provider.to_string(),
        })?;
    let order = 6;
    let mut samples = Vec::with_capacity(spec.n_points);
    for k in 0..spec.n_points {
        let p = prov.sample(rng);
        let mj = prov.metric_jet(&p, order)?;
        let geom = build_geometry_jets(&mj, env.mutation)?;
        let v = prov.flow_vector(&p, order)?;
        let fk = match k % 3 {
            0 => FKind::PolyBump,
            1 => FKind::GaussianBump,
            _ => FKind::Zero,
        };
        let f = sample_f(geom.scal.space(), &p, fk, rng);
        samples.push(ConvergenceSample { geom, v, f });
    }
    let rep = convergence_study(&samples, &N_GRID_DEFAULT)?;
    let mut worst = 0.0f64;
    let mut saw_slope = false;
    for (name, slope) in [
        ("slope_metric", rep.slope_metric),
        ("slope_conn", rep.slope_conn),
        ("slope_curv", rep.slope_curv),
    ] {
        if let Some(s) = slope {
            saw_slope = true;
            details.insert(name.to_string(), s);
            worst = worst.max((s + 1.0).abs());
        }
    }
    details.insert(
        "res_metric_at_n_max".into(),
        *rep.res_metric.last().expect("nonempty N grid"),
    );
    stats.push(if saw_slope { worst } else { 0.0 });
    Ok(())
}

// ---------------------------------------------------------------------------
// Entry points
// ---------------------------------------------------------------------------

fn run_spec(
    env: &LabEnv,
    spec: &'static CheckSpec,
    provider: &str,
) -> Result<CheckReport, VerifyError> {
    let started = Instant::now();
    let seed = check_seed(env.seed, spec.id, provider);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut stats = Stats::default();
    let mut details = BTreeMap::new();
    let is_grid = provider == GRID_BASE || provider == GRID_OFFSET;
    match spec.kind {
        CheckKind::Pointwise => {
            if is_grid {
                run_pointwise_grid(env, spec, provider, &mut rng, &mut stats)?;
            } else {
                run_pointwise_analytic(env, spec, provider, &mut rng, &mut stats)?;
            }
        }
        CheckKind::Family => run_family(env, spec, provider, &mut rng, &mut stats, &mut details)?,
        CheckKind::Slopes => run_slopes(env, spec, provider, &mut rng, &mut stats, &mut details)?,
        CheckKind::Positivity => {
            run_positivity(env, spec, provider, &mut rng, &mut stats, &mut details)?
        }
        CheckKind::OracleTable => {
            run_oracle_table(env, spec, provider, &mut rng, &mut stats, &mut details)?
        }
    }
    let tolerance_used = if is_grid {
        let lab = env.gridlab()?;
        let coeff = spec
            .grid_coeff
            .expect("grid providers imply a grid coefficient");
        grid_tol(coeff, lab.fam.spec.dx(), lab.fam.spec.ord as i32)
    } else {
        spec.tol_analytic
    };
    let mut pass = stats.max.is_finite() && stats.max <= tolerance_used;
    if is_grid {
        if let Some(&order) = details.get("s_order") {
            if order < S_ORDER_MIN {
                pass = false;
            }
        }
    }
    Ok(CheckReport {
        id: spec.id.to_string(),
        citation: spec.citation.to_string(),
        provider: provider.to_string(),
        n_points: stats.n,
        max_residual: clean(stats.max),
        mean_residual: clean(stats.mean()),
        tolerance_used,
        pass,
        seed,
        details: details.into_iter().map(|(k, v)| (k, clean(v))).collect(),
        runtime_ms: started.elapsed().as_millis(),
    })
}

/// Runs one check on one provider.
pub fn run_check_on(env: &LabEnv, id: &str, provider: &str) -> Result<CheckReport, VerifyError> {
    let spec = find_check(id).ok_or_else(|| VerifyError::UnknownCheck { id: id.to_string() })?;
    if !spec.providers.iter().any(|p| *p == provider) {
        return Err(VerifyError::ProviderUnavailable {
            check: id.to_string(),
            provider: provider.to_string(),
        });
    }
    run_spec(env, spec, provider)
}

/// Runs one check on all of its providers.
pub fn run_check(env: &LabEnv, id: &str) -> Result<Vec<CheckReport>, VerifyError> {
    let spec = find_check(id).ok_or_else(|| VerifyError::UnknownCheck { id: id.to_string() })?;
    spec.providers
        .iter()
        .map(|p| run_spec(env, spec, p))
        .collect()
}

/// Runs a suite: `ids = None` means the whole catalog; a provider filter
/// restricts every check to that provider (checks that don't support it are
/// skipped when running the full catalog, and recorded as errors when the
/// ids were requested explicitly).  Per-pair failures are collected, not
/// fatal.  Results are sorted, so equal seeds give byte-identical reports.
pub fn run_suite(
    env: &LabEnv,
    ids: Option<&[&str]>,
    provider_filter: Option<&str>,
) -> Result<SuiteReport, VerifyError> {
    let explicit = ids.is_some();
    let specs: Vec<&'static CheckSpec> = match ids {
        None => CATALOG.iter().collect(),
        Some(list) => list
            .iter()
            .map(|id| {
                find_check(id).ok_or_else(|| VerifyError::UnknownCheck { id: id.to_string() })
            })
            .collect::<Result<_, _>>()?,
    };
    let mut errors: Vec<SuiteErrorEntry> = Vec::new();
    let mut pairs: Vec<(&'static CheckSpec, &'static str)> = Vec::new();
    for spec in &specs {
        let mut matched = false;
        for p in spec.providers {
            if provider_filter.map_or(true, |f| f == *p) {
                pairs.push((spec, p));
                matched = true;
            }
        }
        if !matched && explicit {
            let f = provider_filter.unwrap_or("");
            errors.push(SuiteErrorEntry {
                id: spec.id.to_string(),
                provider: f.to_string(),
                message: format!("check `{}` has no provider `{f}`", spec.id),
            });
        }
    }
    let results: Vec<Result<CheckReport, SuiteErrorEntry>> = pairs
        .par_iter()
        .map(|(spec, prov)| {
            run_spec(env, spec, prov).map_err(|e| SuiteErrorEntry {
                id: spec.id.to_string(),
                provider: prov.to_string(),
                message: e.to_string(),
            })
        })
        .collect();
    let mut reports = Vec::new();
    for r in results {
        match r {
            Ok(rep) => reports.push(rep),
            Err(e) => errors.push(e),
        }
    }
    reports.sort_by(|a, b| (a.id.as_str(), a.provider.as_str()).cmp(&(b.id.as_str(), b.provider.as_str())));
    errors.sort_by(|a, b| (a.id.as_str(), a.provider.as_str()).cmp(&(b.id.as_str(), b.provider.as_str())));
    let n_pass = reports.iter().filter(|r| r.pass).count();
    let n_fail = reports.len() - n_pass;
    Ok(SuiteReport {
        schema_version: 1,
        seed: env.seed,
        mutation: env.mutation.to_string(),
        n_pass,
        n_fail,
        all_pass: n_fail == 0 && errors.is_empty(),
        reports,
        errors,
    })
}
