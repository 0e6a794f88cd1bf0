//! Periodic-grid backend for the flow equations.
//!
//! Scalar fields on a flat 2-torus implement [`Scalar`], so every curvature
//! and identity routine written against the trait runs unchanged on grid
//! data. On top of that this module provides the method-of-lines integrators
//! (plain flow, flow modified by a vector field, the linearized equation for
//! `h`, and the two-parameter gauge-fixed family), snapshot file I/O, and the
//! extraction of degree-5 space / degree-2 time jets at grid nodes so that
//! the pointwise checks consume grid runs through the exact same code path
//! as the analytic providers.

use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::approx::{FamilySlice as PointSlice, TwoParamFamily as PointFamily};
use crate::jets::CotensorJet;
use crate::riemann::{build_geometry, cov1, lap_scalar, lichnerowicz, Geometry};
use crate::taylor::{space, Jet};
use crate::tensor::{sum1, sum2, t1, t2, Scalar, T1, T2};
use crate::Mutation;

/// Minimum admissible eigenvalue of `g` at a node before the run aborts.
pub const MIN_METRIC_EIG: f64 = 1e-8;

/// Default CFL fraction: `dt = CFL_DEFAULT * min(dx,dy)^2 / lambda_max`.
pub const CFL_DEFAULT: f64 = 0.1;

/// Headroom left when fixing `dt` at `t = 0`, so that the strict per-step
/// re-check tolerates mild growth of the inverse-metric eigenvalues without
/// letting genuine blow-up through.
const CFL_SAFETY: f64 = 0.8;

/// Spatial degree of the jets extracted at grid nodes.
pub const GRID_JET_DEG: usize = 5;

/// Time degree of the jets extracted at grid nodes (central differences of
/// three consecutive snapshots).
pub const GRID_JET_TDEG: usize = 2;

#[derive(Debug, Error)]
pub enum FlowError {
    #[error("time step {dt:.3e} exceeds the CFL bound {max_dt:.3e}")]
    CflViolation { dt: f64, max_dt: f64 },
    #[error("metric degenerated: eigenvalue {min_eig:.3e} at node {node:?}")]
    MetricDegenerated { min_eig: f64, node: (usize, usize) },
    #[error("snapshot index {idx} out of range (need a neighbor on each side, len {len})")]
    SnapshotOutOfRange { idx: usize, len: usize },
    #[error("family has no base trajectory snapshots")]
    BaseTrajectoryMissing,
    #[error("bad field file: {reason}")]
    BadFieldFile { reason: String },
}

// ------------------------------------------------------------------
// Stencil coefficient tables
// ------------------------------------------------------------------

/// One-sided coefficients of the central first-derivative stencil of the
/// given order: entry `m-1` multiplies `f(x + m*dx) - f(x - m*dx)`, and the
/// whole sum is divided by `dx`.
pub fn d1_coeffs(ord: usize) -> &'static [f64] {
    match ord {
        2 => &[0.5],
        4 => &[2.0 / 3.0, -1.0 / 12.0],
        6 => &[0.75, -0.15, 1.0 / 60.0],
        8 => &[0.8, -0.2, 4.0 / 105.0, -1.0 / 280.0],
        _ => panic!("unsupported stencil order {ord} (use 2, 4, 6, or 8)"),
    }
}

// ------------------------------------------------------------------
// Grid geometry and scalar fields
// ------------------------------------------------------------------

/// Uniform periodic grid on `[0, 2pi) x [0, 2pi)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub nx: usize,
    pub ny: usize,
    /// Stencil order for all finite-difference derivatives (2, 4, 6, or 8).
    pub ord: usize,
}

impl GridSpec {
    pub fn new(nx: usize, ny: usize, ord: usize) -> GridSpec {
        assert!(nx >= 2 * ord && ny >= 2 * ord, "grid too coarse for stencil");
        let _ = d1_coeffs(ord);
        GridSpec { nx, ny, ord }
    }

    pub fn dx(&self) -> f64 {
        std::f64::consts::TAU / self.nx as f64
    }

    pub fn dy(&self) -> f64 {
        std::f64::consts::TAU / self.ny as f64
    }

    /// Coordinates of node `(i, j)`.
    pub fn xy(&self, i: usize, j: usize) -> (f64, f64) {
        (i as f64 * self.dx(), j as f64 * self.dy())
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }
}

/// Scalar field sampled at the nodes of a [`GridSpec`], row-major in `i`.
#[derive(Clone, Debug)]
pub struct Field2 {
    pub spec: GridSpec,
    pub a: Vec<f64>,
}

impl Field2 {
    pub fn zeros(spec: GridSpec) -> Field2 {
        Field2 { spec, a: vec![0.0; spec.len()] }
    }

    pub fn constant(spec: GridSpec, v: f64) -> Field2 {
        Field2 { spec, a: vec![v; spec.len()] }
    }

    pub fn from_fn(spec: GridSpec, mut f: impl FnMut(f64, f64) -> f64) -> Field2 {
        let mut a = Vec::with_capacity(spec.len());
        for i in 0..spec.nx {
            for j in 0..spec.ny {
                let (x, y) = spec.xy(i, j);
                a.push(f(x, y));
            }
        }
        Field2 { spec, a }
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.a[i * self.spec.ny + j]
    }

    #[inline]
    pub fn at_mut(&mut self, i: usize, j: usize) -> &mut f64 {
        &mut self.a[i * self.spec.ny + j]
    }

    pub fn max_abs(&self) -> f64 {
        self.a.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    fn zip(&self, o: &Field2, f: impl Fn(f64, f64) -> f64) -> Field2 {
        debug_assert_eq!(self.spec, o.spec);
        Field2 {
            spec: self.spec,
            a: self.a.iter().zip(&o.a).map(|(x, y)| f(*x, *y)).collect(),
        }
    }

    fn map(&self, f: impl Fn(f64) -> f64) -> Field2 {
        Field2 { spec: self.spec, a: self.a.iter().map(|x| f(*x)).collect() }
    }

    /// `L2` inner product against another field (plain node sum, no measure).
    pub fn dot(&self, o: &Field2) -> f64 {
        self.a.iter().zip(&o.a).map(|(x, y)| x * y).sum()
    }
}

impl Scalar for Field2 {
    fn zero_like(&self) -> Self {
        Field2::zeros(self.spec)
    }
    fn const_like(&self, v: f64) -> Self {
        Field2::constant(self.spec, v)
    }
    fn add(&self, o: &Self) -> Self {
        self.zip(o, |x, y| x + y)
    }
    fn sub(&self, o: &Self) -> Self {
        self.zip(o, |x, y| x - y)
    }
    fn mul(&self, o: &Self) -> Self {
        self.zip(o, |x, y| x * y)
    }
    fn neg(&self) -> Self {
        self.map(|x| -x)
    }
    fn scale(&self, k: f64) -> Self {
        self.map(|x| k * x)
    }
    fn recip(&self) -> Self {
        self.map(|x| 1.0 / x)
    }
    fn dx(&self, axis: usize) -> Self {
        let spec = self.spec;
        let c = d1_coeffs(spec.ord);
        let (nx, ny) = (spec.nx, spec.ny);
        let inv_h = 1.0 / if axis == 0 { spec.dx() } else { spec.dy() };
        let mut out = vec![0.0; spec.len()];
        for i in 0..nx {
            for j in 0..ny {
                let mut acc = 0.0;
                for (m, cm) in c.iter().enumerate() {
                    let s = m + 1;
                    let (ip, im) = if axis == 0 {
                        (((i + s) % nx) * ny + j, ((i + nx - s) % nx) * ny + j)
                    } else {
                        (i * ny + (j + s) % ny, i * ny + (j + ny - s) % ny)
                    };
                    acc += cm * (self.a[ip] - self.a[im]);
                }
                out[i * ny + j] = acc * inv_h;
            }
        }
        Field2 { spec, a: out }
    }
    fn magnitude(&self) -> f64 {
        self.max_abs()
    }
}

// ------------------------------------------------------------------
// Pointwise symmetric 2x2 spectral helpers
// ------------------------------------------------------------------

/// Smallest eigenvalue of the symmetric metric over all nodes, with the node
/// where it is attained.
pub fn min_metric_eig(g: &T2<Field2>) -> (f64, (usize, usize)) {
    let spec = g[0][0].spec;
    let mut best = f64::INFINITY;
    let mut node = (0, 0);
    for i in 0..spec.nx {
        for j in 0..spec.ny {
            let (a, b, c) = (g[0][0].at(i, j), g[0][1].at(i, j), g[1][1].at(i, j));
            let eig = 0.5 * ((a + c) - ((a - c).powi(2) + 4.0 * b * b).sqrt());
            if eig < best {
                best = eig;
                node = (i, j);
            }
        }
    }
    (best, node)
}

/// Largest eigenvalue of `g^{-1}` over all nodes (the diffusion speed that
/// enters the CFL bound).
pub fn max_inverse_eig(g: &T2<Field2>) -> f64 {
    let spec = g[0][0].spec;
    let mut best = 0.0_f64;
    for i in 0..spec.nx {
        for j in 0..spec.ny {
            let (a, b, c) = (g[0][0].at(i, j), g[0][1].at(i, j), g[1][1].at(i, j));
            let det = a * c - b * b;
            let eig = 0.5 * ((a + c) + ((a - c).powi(2) + 4.0 * b * b).sqrt()) / det;
            best = best.max(eig);
        }
    }
    best
}

fn check_metric(g: &T2<Field2>) -> Result<(), FlowError> {
    let (min_eig, node) = min_metric_eig(g);
    if !(min_eig >= MIN_METRIC_EIG) {
        return Err(FlowError::MetricDegenerated { min_eig, node });
    }
    Ok(())
}

fn cfl_dt(spec: GridSpec, cfl: f64, lambda_max: f64) -> f64 {
    let h = spec.dx().min(spec.dy());
    cfl * h * h / lambda_max
}

// ------------------------------------------------------------------
// Flow state and single-trajectory steps
// ------------------------------------------------------------------

/// State of one flow trajectory: metric, linearized perturbation, optional
/// modifying 1-form `V` (held fixed in time), current time and step size.
#[derive(Clone)]
pub struct GridState {
    pub spec: GridSpec,
    pub t: f64,
    pub dt: f64,
    pub cfl: f64,
    pub g: T2<Field2>,
    pub h: T2<Field2>,
    pub v: Option<T1<Field2>>,
}

impl GridState {
    /// Validates positivity and fixes `dt` from the CFL bound at `t = 0`.
    pub fn new(
        spec: GridSpec,
        g: T2<Field2>,
        h: T2<Field2>,
        v: Option<T1<Field2>>,
        cfl: f64,
    ) -> Result<GridState, FlowError> {
        check_metric(&g)?;
        let dt = CFL_SAFETY * cfl_dt(spec, cfl, max_inverse_eig(&g));
        Ok(GridState { spec, t: 0.0, dt, cfl, g, h, v })
    }
}

/// Symmetrizes a 2-tensor of fields. The continuum right-hand sides are
/// symmetric, but chained stencils break the symmetry at truncation level;
/// averaging restores it bit-exactly (both arrangements are equally
/// accurate), which keeps evolved states symmetric and file round-trips
/// lossless.
fn sym2f(a: &T2<Field2>) -> T2<Field2> {
    t2(a.len(), |i, j| a[i][j].add(&a[j][i]).scale(0.5))
}

/// Right-hand side of the (possibly modified) flow:
/// `-2 Rc + cov grad V symmetrized` when a 1-form `V` is supplied.
fn g_rhs(geom: &Geometry<Field2>, v: Option<&T1<Field2>>) -> T2<Field2> {
    let n = geom.n;
    let mut rhs = t2(n, |i, j| geom.ricci[i][j].scale(-2.0));
    if let Some(v) = v {
        let dv = cov1(geom, v);
        for i in 0..n {
            for j in 0..n {
                rhs[i][j] = rhs[i][j].add(&dv[i][j]).add(&dv[j][i]);
            }
        }
    }
    sym2f(&rhs)
}

fn t2_axpy(y: &T2<Field2>, a: f64, x: &T2<Field2>) -> T2<Field2> {
    t2(y.len(), |i, j| y[i][j].add(&x[i][j].scale(a)))
}

/// One RK4 step of the metric alone; `h` and `V` are carried unchanged.
pub fn step_ricci(state: &GridState) -> Result<GridState, FlowError> {
    step_inner(state, false)
}

/// One joint RK4 step of the metric and of the linearized equation for `h`,
/// with the `h` stages evaluated on the matching metric stages.
pub fn step_h(state: &GridState) -> Result<GridState, FlowError> {
    step_inner(state, true)
}

fn step_inner(state: &GridState, with_h: bool) -> Result<GridState, FlowError> {
    check_metric(&state.g)?;
    let max_dt = cfl_dt(state.spec, state.cfl, max_inverse_eig(&state.g));
    if state.dt > max_dt * (1.0 + 1e-12) {
        return Err(FlowError::CflViolation { dt: state.dt, max_dt });
    }
    let v = state.v.as_ref();
    let eval = |g: &T2<Field2>, h: &T2<Field2>| {
        let geom = build_geometry(2, g.clone(), Mutation::None);
        let kg = g_rhs(&geom, v);
        let kh = if with_h {
            sym2f(&lichnerowicz(&geom, h))
        } else {
            t2(2, |i, j| h[i][j].zero_like())
        };
        (kg, kh)
    };
    let dt = state.dt;
    let (k1g, k1h) = eval(&state.g, &state.h);
    let (k2g, k2h) = eval(&t2_axpy(&state.g, 0.5 * dt, &k1g), &t2_axpy(&state.h, 0.5 * dt, &k1h));
    let (k3g, k3h) = eval(&t2_axpy(&state.g, 0.5 * dt, &k2g), &t2_axpy(&state.h, 0.5 * dt, &k2h));
    let (k4g, k4h) = eval(&t2_axpy(&state.g, dt, &k3g), &t2_axpy(&state.h, dt, &k3h));
    let mix = |y: &T2<Field2>, k1: &T2<Field2>, k2: &T2<Field2>, k3: &T2<Field2>, k4: &T2<Field2>| {
        t2(2, |i, j| {
            let acc = k1[i][j]
                .add(&k2[i][j].scale(2.0))
                .add(&k3[i][j].scale(2.0))
                .add(&k4[i][j]);
            y[i][j].add(&acc.scale(dt / 6.0))
        })
    };
    let g = mix(&state.g, &k1g, &k2g, &k3g, &k4g);
    let h = mix(&state.h, &k1h, &k2h, &k3h, &k4h);
    check_metric(&g)?;
    Ok(GridState { spec: state.spec, t: state.t + dt, dt, cfl: state.cfl, g, h, v: state.v.clone() })
}

/// Residual of the trace evolution law `dt H = lap H + 2 <Rc, h>` at the
/// current state, with `dt H` assembled from the registered right-hand sides
/// (not finite differences in time). Meaningful for plain-flow states
/// (`V = None`); with a nonzero `V` the law acquires transport terms and the
/// returned number is just a diagnostic.
pub fn trace_evolution_check(state: &GridState) -> f64 {
    let geom = build_geometry(2, state.g.clone(), Mutation::None);
    let kg = g_rhs(&geom, state.v.as_ref());
    let kh = sym2f(&lichnerowicz(&geom, &state.h));
    let n = 2;
    // dt(g^{ij}) = -g^{ia} g^{jb} dt(g_ab)
    let dginv = t2(n, |i, j| {
        sum2(&kg[0][0], n, |a, b| geom.ginv[i][a].mul(&geom.ginv[j][b]).mul(&kg[a][b])).neg()
    });
    let dt_h_trace = sum2(&kg[0][0], n, |i, j| {
        geom.ginv[i][j].mul(&kh[i][j]).add(&dginv[i][j].mul(&state.h[i][j]))
    });
    let trace = sum2(&kg[0][0], n, |i, j| geom.ginv[i][j].mul(&state.h[i][j]));
    // <Rc, h> = R^{ij} h_ij with both indices of the Ricci tensor raised.
    let rc_h = sum2(&kg[0][0], n, |i, j| {
        sum2(&kg[0][0], n, |p, q| {
            geom.ginv[i][p].mul(&geom.ginv[j][q]).mul(&geom.ricci[p][q]).mul(&state.h[i][j])
        })
    });
    let residual = dt_h_trace.sub(&lap_scalar(&geom, &trace)).sub(&rc_h.scale(2.0));
    residual.max_abs()
}

// ------------------------------------------------------------------
// Two-parameter family
// ------------------------------------------------------------------

/// One stored time slice of the family run.
#[derive(Clone)]
pub struct FamilySnapshot {
    pub t: f64,
    /// `g(t, 0)`; evolves by the plain flow, so its gauge vector vanishes
    /// identically.
    pub base: T2<Field2>,
    /// `(s, g(t, s))` for `s = -2 s0, -s0, +s0, +2 s0`, ascending.
    pub offsets: Vec<(f64, T2<Field2>)>,
    /// `(s, W(t, s))` (vector components, upper index) for the same `s`
    /// values, recomputed from the stored metrics.
    pub w: Vec<(f64, T1<Field2>)>,
    /// Solution of the linearized equation along the base trajectory.
    pub h: T2<Field2>,
}

/// A completed family run: base trajectory, four `s`-offset trajectories in
/// the gauge fixed by the base connection, and the linearized solution.
pub struct TwoParamFamily {
    pub spec: GridSpec,
    pub s0: f64,
    pub dt: f64,
    pub cfl: f64,
    pub snaps: Vec<FamilySnapshot>,
}

/// Gauge vector of the family: `W^k = g_s^{ij} (Gamma(g_s) - Gamma(g_base))^k_ij`
/// with both connections evaluated at the same time.
fn gauge_w(geom_s: &Geometry<Field2>, gamma_base: &crate::tensor::T3<Field2>) -> T1<Field2> {
    let n = geom_s.n;
    t1(n, |k| {
        sum2(&geom_s.scal, n, |i, j| {
            geom_s.ginv[i][j].mul(&geom_s.gamma[k][i][j].sub(&gamma_base[k][i][j]))
        })
    })
}

/// Integrates the base trajectory, the four `s`-offsets (initialized
/// linearly, `g(0, s) = g0 + s h0`), and the linearized solution `h` jointly
/// with one shared RK4, storing every time slice including `t = 0`.
pub fn build_deturck_family(
    spec: GridSpec,
    g0: T2<Field2>,
    h0: T2<Field2>,
    s0: f64,
    steps: usize,
    cfl: f64,
) -> Result<TwoParamFamily, FlowError> {
    assert!(s0 >= 0.0);
    let svals = [-2.0 * s0, -s0, s0, 2.0 * s0];
    let mut base = g0.clone();
    let mut offs: Vec<T2<Field2>> = svals
        .iter()
        .map(|s| t2(2, |i, j| g0[i][j].add(&h0[i][j].scale(*s))))
        .collect();
    let mut h = h0.clone();

    check_metric(&base)?;
    let mut lambda = max_inverse_eig(&base);
    for o in &offs {
        check_metric(o)?;
        lambda = lambda.max(max_inverse_eig(o));
    }
    let dt = CFL_SAFETY * cfl_dt(spec, cfl, lambda);

    let snapshot = |t: f64, base: &T2<Field2>, offs: &[T2<Field2>], h: &T2<Field2>| {
        let geom_base = build_geometry(2, base.clone(), Mutation::None);
        let w = svals
            .iter()
            .zip(offs)
            .map(|(s, g_s)| {
                let geom_s = build_geometry(2, g_s.clone(), Mutation::None);
                (*s, gauge_w(&geom_s, &geom_base.gamma))
            })
            .collect();
        FamilySnapshot {
            t,
            base: base.clone(),
            offsets: svals.iter().copied().zip(offs.iter().cloned()).collect(),
            w,
            h: h.clone(),
        }
    };

    let mut snaps = vec![snapshot(0.0, &base, &offs, &h)];
    let mut t = 0.0;
    for _ in 0..steps {
        // CFL is re-checked against the current metrics before each step.
        let mut lambda = max_inverse_eig(&base);
        for o in &offs {
            lambda = lambda.max(max_inverse_eig(o));
        }
        let max_dt = cfl_dt(spec, cfl, lambda);
        if dt > max_dt * (1.0 + 1e-12) {
            return Err(FlowError::CflViolation { dt, max_dt });
        }

        // Joint RK4 stage evaluation: base feeds its connection to every
        // offset's gauge vector and its geometry to the h equation.
        let eval = |base: &T2<Field2>,
                    offs: &[T2<Field2>],
                    h: &T2<Field2>|
         -> (T2<Field2>, Vec<T2<Field2>>, T2<Field2>) {
            let geom_base = build_geometry(2, base.clone(), Mutation::None);
            let kb = g_rhs(&geom_base, None);
            let ko = offs
                .iter()
                .map(|g_s| {
                    let geom_s = build_geometry(2, g_s.clone(), Mutation::None);
                    let w_up = gauge_w(&geom_s, &geom_base.gamma);
                    // Lower the index before taking the symmetrized covariant
                    // derivative of the 1-form.
                    let w_low = t1(2, |i| sum1(&geom_s.scal, 2, |k| geom_s.g[i][k].mul(&w_up[k])));
                    let dv = cov1(&geom_s, &w_low);
                    sym2f(&t2(2, |i, j| {
                        geom_s.ricci[i][j].scale(-2.0).add(&dv[i][j]).add(&dv[j][i])
                    }))
                })
                .collect();
            let kh = sym2f(&lichnerowicz(&geom_base, h));
            (kb, ko, kh)
        };

        let axpy_all = |b: &T2<Field2>,
                        o: &[T2<Field2>],
                        hh: &T2<Field2>,
                        a: f64,
                        kb: &T2<Field2>,
                        ko: &[T2<Field2>],
                        kh: &T2<Field2>| {
            (
                t2_axpy(b, a, kb),
                o.iter().zip(ko).map(|(y, k)| t2_axpy(y, a, k)).collect::<Vec<_>>(),
                t2_axpy(hh, a, kh),
            )
        };

        let (k1b, k1o, k1h) = eval(&base, &offs, &h);
        let (b2, o2, h2) = axpy_all(&base, &offs, &h, 0.5 * dt, &k1b, &k1o, &k1h);
        let (k2b, k2o, k2h) = eval(&b2, &o2, &h2);
        let (b3, o3, h3) = axpy_all(&base, &offs, &h, 0.5 * dt, &k2b, &k2o, &k2h);
        let (k3b, k3o, k3h) = eval(&b3, &o3, &h3);
        let (b4, o4, h4) = axpy_all(&base, &offs, &h, dt, &k3b, &k3o, &k3h);
        let (k4b, k4o, k4h) = eval(&b4, &o4, &h4);

        let mix = |y: &T2<Field2>, k1: &T2<Field2>, k2: &T2<Field2>, k3: &T2<Field2>, k4: &T2<Field2>| {
            t2(2, |i, j| {
                let acc = k1[i][j]
                    .add(&k2[i][j].scale(2.0))
                    .add(&k3[i][j].scale(2.0))
                    .add(&k4[i][j]);
                y[i][j].add(&acc.scale(dt / 6.0))
            })
        };
        base = mix(&base, &k1b, &k2b, &k3b, &k4b);
        offs = (0..offs.len())
            .map(|m| mix(&offs[m], &k1o[m], &k2o[m], &k3o[m], &k4o[m]))
            .collect();
        h = mix(&h, &k1h, &k2h, &k3h, &k4h);

        check_metric(&base)?;
        for o in &offs {
            check_metric(o)?;
        }
        t += dt;
        snaps.push(snapshot(t, &base, &offs, &h));
    }

    Ok(TwoParamFamily { spec, s0, dt, cfl, snaps })
}

// ------------------------------------------------------------------
// Initial data
// ------------------------------------------------------------------

/// The flat metric `delta_ij` as constant fields.
pub fn flat_metric(spec: GridSpec) -> T2<Field2> {
    t2(2, |i, j| Field2::constant(spec, if i == j { 1.0 } else { 0.0 }))
}

fn random_mode_field(spec: GridSpec, amp: f64, rng: &mut ChaCha8Rng) -> Field2 {
    let modes: Vec<(f64, f64, f64, f64)> = (0..4)
        .map(|_| {
            let kx = rng.gen_range(0..=2) as f64;
            let ky = rng.gen_range(0..=2) as f64;
            let c: f64 = rng.gen_range(-1.0..1.0);
            let phase: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
            (kx, ky, c, phase)
        })
        .collect();
    Field2::from_fn(spec, |x, y| {
        modes.iter().map(|(kx, ky, c, p)| amp * c * (kx * x + ky * y + p).sin()).sum()
    })
}

/// Flat metric plus a random low-frequency symmetric perturbation of size
/// `amp` (keep `amp <= 0.15` so positivity is safe).
pub fn perturbed_flat(spec: GridSpec, amp: f64, seed: u64) -> T2<Field2> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p00 = random_mode_field(spec, amp, &mut rng);
    let p01 = random_mode_field(spec, amp, &mut rng);
    let p11 = random_mode_field(spec, amp, &mut rng);
    let flat = flat_metric(spec);
    t2(2, |i, j| {
        let p = match (i, j) {
            (0, 0) => &p00,
            (1, 1) => &p11,
            _ => &p01,
        };
        flat[i][j].add(p)
    })
}

/// Random smooth symmetric 2-tensor made of low Fourier modes (initial `h`).
pub fn random_sym_field(spec: GridSpec, amp: f64, seed: u64) -> T2<Field2> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p00 = random_mode_field(spec, amp, &mut rng);
    let p01 = random_mode_field(spec, amp, &mut rng);
    let p11 = random_mode_field(spec, amp, &mut rng);
    t2(2, |i, j| {
        match (i, j) {
            (0, 0) => p00.clone(),
            (1, 1) => p11.clone(),
            _ => p01.clone(),
        }
    })
}

/// Scalar curvature of a metric given as fields.
pub fn scalar_curvature_field(g: &T2<Field2>) -> Field2 {
    build_geometry(2, g.clone(), Mutation::None).scal
}

// ------------------------------------------------------------------
// Snapshot file format ("riccilab-tensor-field v1")
// ------------------------------------------------------------------

const FIELD_FILE_MAGIC: &str = "riccilab-tensor-field v1";

#[derive(Serialize, Deserialize)]
struct FieldFileHeader {
    schema_version: u32,
    n: usize,
    nx: usize,
    ny: usize,
    ord: usize,
    t: f64,
    dt: f64,
    cfl: f64,
    fields: Vec<String>,
}

/// Writes a state as a text snapshot: magic line, JSON header, then one line
/// of `nx * ny` values per field (full `f64` precision, exact round-trip).
pub fn write_snapshot(path: &Path, state: &GridState) -> Result<(), FlowError> {
    let mut fields: Vec<(String, &Field2)> = vec![
        ("g_00".into(), &state.g[0][0]),
        ("g_01".into(), &state.g[0][1]),
        ("g_11".into(), &state.g[1][1]),
        ("h_00".into(), &state.h[0][0]),
        ("h_01".into(), &state.h[0][1]),
        ("h_11".into(), &state.h[1][1]),
    ];
    if let Some(v) = &state.v {
        fields.push(("v_0".into(), &v[0]));
        fields.push(("v_1".into(), &v[1]));
    }
    let header = FieldFileHeader {
        schema_version: 1,
        n: 2,
        nx: state.spec.nx,
        ny: state.spec.ny,
        ord: state.spec.ord,
        t: state.t,
        dt: state.dt,
        cfl: state.cfl,
        fields: fields.iter().map(|(name, _)| name.clone()).collect(),
    };
    let mut out = String::new();
    out.push_str(FIELD_FILE_MAGIC);
    out.push('\n');
    out.push_str(&serde_json::to_string(&header).expect("header serialization"));
    out.push('\n');
    for (_, f) in &fields {
        for (k, v) in f.a.iter().enumerate() {
            if k > 0 {
                out.push(' ');
            }
            let _ = write!(out, "{v:.17e}");
        }
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| FlowError::BadFieldFile { reason: e.to_string() })
}

/// Reads a snapshot written by [`write_snapshot`].
pub fn read_snapshot(path: &Path) -> Result<GridState, FlowError> {
    let bad = |reason: &str| FlowError::BadFieldFile { reason: reason.to_string() };
    let text =
        std::fs::read_to_string(path).map_err(|e| FlowError::BadFieldFile { reason: e.to_string() })?;
    let mut lines = text.lines();
    if lines.next() != Some(FIELD_FILE_MAGIC) {
        return Err(bad("missing magic line"));
    }
    let header: FieldFileHeader = serde_json::from_str(lines.next().ok_or_else(|| bad("missing header"))?)
        .map_err(|e| FlowError::BadFieldFile { reason: format!("header: {e}") })?;
    if header.n != 2 {
        return Err(bad("only n = 2 grids are supported"));
    }
    let spec = GridSpec::new(header.nx, header.ny, header.ord);
    let mut tables = Vec::new();
    for name in &header.fields {
        let line = lines.next().ok_or_else(|| bad("missing field table"))?;
        let vals: Result<Vec<f64>, _> = line.split_whitespace().map(str::parse::<f64>).collect();
        let vals = vals.map_err(|e| FlowError::BadFieldFile { reason: format!("{name}: {e}") })?;
        if vals.len() != spec.len() {
            return Err(bad(&format!("{name}: expected {} values, got {}", spec.len(), vals.len())));
        }
        tables.push((name.clone(), Field2 { spec, a: vals }));
    }
    let find = |name: &str| -> Result<Field2, FlowError> {
        tables
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, f)| f.clone())
            .ok_or_else(|| bad(&format!("missing field {name}")))
    };
    let sym = |d00: Field2, d01: Field2, d11: Field2| {
        t2(2, |i, j| match (i, j) {
            (0, 0) => d00.clone(),
            (1, 1) => d11.clone(),
            _ => d01.clone(),
        })
    };
    let g = sym(find("g_00")?, find("g_01")?, find("g_11")?);
    let h = sym(find("h_00")?, find("h_01")?, find("h_11")?);
    let v = if header.fields.iter().any(|f| f == "v_0") {
        Some(vec![find("v_0")?, find("v_1")?])
    } else {
        None
    };
    check_metric(&g)?;
    Ok(GridState { spec, t: header.t, dt: header.dt, cfl: header.cfl, g, h, v })
}

// ------------------------------------------------------------------
// Jet extraction at grid nodes
// ------------------------------------------------------------------

/// Index of the spatial partial `d_x^ax d_y^ay` in the triangular table.
fn tri_idx(ax: usize, ay: usize) -> usize {
    let d = ax + ay;
    d * (d + 1) / 2 + ay
}

/// All spatial partial-derivative fields of `f` up to total order `deg`,
/// generated by chaining the first-derivative stencil.
fn spatial_tables(f: &Field2, deg: usize) -> Vec<Field2> {
    let mut tabs: Vec<Field2> = vec![f.clone()];
    for d in 1..=deg {
        for ax in (0..=d).rev() {
            let ay = d - ax;
            let src = if ax > 0 {
                tabs[tri_idx(ax - 1, ay)].dx(0)
            } else {
                tabs[tri_idx(0, ay - 1)].dx(1)
            };
            debug_assert_eq!(tabs.len(), tri_idx(ax, ay));
            tabs.push(src);
        }
    }
    tabs
}

/// Spatial derivative tables of one field component at three consecutive
/// snapshots; time derivatives come from central differences across them.
struct CompTables {
    tabs: [Vec<Field2>; 3],
}

fn comp_tables(fm1: &Field2, f0: &Field2, fp1: &Field2, deg: usize) -> CompTables {
    CompTables {
        tabs: [
            spatial_tables(fm1, deg),
            spatial_tables(f0, deg),
            spatial_tables(fp1, deg),
        ],
    }
}

impl CompTables {
    /// Jet of the component at a node: exact snapshot values in space,
    /// second-order central differences in time.
    fn jet_at(&self, i: usize, j: usize, dt: f64) -> Jet {
        let sp = space(3, GRID_JET_DEG);
        Jet::from_partials(sp, GRID_JET_DEG, GRID_JET_TDEG, |e| {
            let v = |snap: usize| self.tabs[snap][tri_idx(e[1] as usize, e[2] as usize)].at(i, j);
            match e[0] {
                0 => v(1),
                1 => (v(2) - v(0)) / (2.0 * dt),
                2 => (v(2) - 2.0 * v(1) + v(0)) / (dt * dt),
                _ => unreachable!("time degree is capped at 2"),
            }
        })
    }
}

/// Which trajectory of a family run to extract jets from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SliceSel {
    /// The base trajectory (plain flow, `V = 0`), which also carries `h`.
    Base,
    /// Offset trajectory by index into `FamilySnapshot::offsets`. Together
    /// with its gauge vector it solves the modified flow, so it serves as a
    /// genuine `V != 0` data source.
    Offset(usize),
}

/// Cached derivative tables of one trajectory around one snapshot, ready to
/// produce pointwise jets of `g`, `V` (offsets), and `h` (base).
pub struct SliceJets {
    pub spec: GridSpec,
    pub t: f64,
    pub dt: f64,
    pub sel: SliceSel,
    g: Vec<CompTables>,
    /// Base-metric tables; present for offset slices so the gauge vector can
    /// be rebuilt in jet arithmetic.
    gb: Option<Vec<CompTables>>,
    h: Option<Vec<CompTables>>,
}

const SYM_IDX: [(usize, usize); 3] = [(0, 0), (0, 1), (1, 1)];

fn sym_tables(
    pick: impl Fn(usize) -> [Field2; 3],
    deg: usize,
) -> Vec<CompTables> {
    let fm1 = pick(0);
    let f0 = pick(1);
    let fp1 = pick(2);
    (0..3).map(|c| comp_tables(&fm1[c], &f0[c], &fp1[c], deg)).collect()
}

fn sym_at(tabs: &[CompTables], i: usize, j: usize, dt: f64) -> T2<Jet> {
    let c: Vec<Jet> = tabs.iter().map(|t| t.jet_at(i, j, dt)).collect();
    t2(2, |a, b| {
        let k = SYM_IDX.iter().position(|&(p, q)| (p, q) == (a.min(b), a.max(b))).unwrap();
        c[k].clone()
    })
}

/// Builds the derivative tables of the selected trajectory around snapshot
/// `snap` (which needs a neighbor on each side for the time differences).
pub fn slice_jets(fam: &TwoParamFamily, snap: usize, sel: SliceSel) -> Result<SliceJets, FlowError> {
    if fam.snaps.is_empty() {
        return Err(FlowError::BaseTrajectoryMissing);
    }
    if snap == 0 || snap + 1 >= fam.snaps.len() {
        return Err(FlowError::SnapshotOutOfRange { idx: snap, len: fam.snaps.len() });
    }
    let tri = [&fam.snaps[snap - 1], &fam.snaps[snap], &fam.snaps[snap + 1]];
    let deg = GRID_JET_DEG;
    fn metric_of(snapshot: &FamilySnapshot, sel: SliceSel) -> &T2<Field2> {
        match sel {
            SliceSel::Base => &snapshot.base,
            SliceSel::Offset(m) => &snapshot.offsets[m].1,
        }
    }
    if let SliceSel::Offset(m) = sel {
        if m >= tri[1].offsets.len() {
            return Err(FlowError::SnapshotOutOfRange { idx: m, len: tri[1].offsets.len() });
        }
    }
    let g = sym_tables(
        |k| {
            let gm = metric_of(tri[k], sel);
            [gm[0][0].clone(), gm[0][1].clone(), gm[1][1].clone()]
        },
        deg,
    );
    let gb = match sel {
        SliceSel::Base => None,
        SliceSel::Offset(_) => Some(sym_tables(
            |k| {
                let gm = &tri[k].base;
                [gm[0][0].clone(), gm[0][1].clone(), gm[1][1].clone()]
            },
            deg,
        )),
    };
    let h = match sel {
        SliceSel::Base => Some(sym_tables(
            |k| {
                let hm = &tri[k].h;
                [hm[0][0].clone(), hm[0][1].clone(), hm[1][1].clone()]
            },
            deg,
        )),
        SliceSel::Offset(_) => None,
    };
    Ok(SliceJets { spec: fam.spec, t: tri[1].t, dt: fam.dt, sel, g, gb, h })
}

impl SliceJets {
    pub fn g_at(&self, node: (usize, usize)) -> T2<Jet> {
        sym_at(&self.g, node.0, node.1, self.dt)
    }

    pub fn geometry_at(&self, node: (usize, usize), mutation: Mutation) -> Geometry<Jet> {
        build_geometry(2, self.g_at(node), mutation)
    }

    /// Lowered gauge vector as a 1-form jet; `None` on the base trajectory,
    /// whose gauge vector vanishes identically.
    pub fn v_at(&self, node: (usize, usize)) -> Option<T1<Jet>> {
        let gb = self.gb.as_ref()?;
        let geom_s = self.geometry_at(node, Mutation::None);
        let geom_b = build_geometry(2, sym_at(gb, node.0, node.1, self.dt), Mutation::None);
        let w_up = t1(2, |k| {
            sum2(&geom_s.scal, 2, |i, j| {
                geom_s.ginv[i][j].mul(&geom_s.gamma[k][i][j].sub(&geom_b.gamma[k][i][j]))
            })
        });
        Some(t1(2, |i| sum1(&geom_s.scal, 2, |k| geom_s.g[i][k].mul(&w_up[k]))))
    }

    /// Jet of the linearized solution; only the base trajectory carries it.
    pub fn h_at(&self, node: (usize, usize)) -> Option<T2<Jet>> {
        let h = self.h.as_ref()?;
        Some(sym_at(h, node.0, node.1, self.dt))
    }

    pub fn coords(&self, node: (usize, usize)) -> (f64, f64) {
        self.spec.xy(node.0, node.1)
    }
}

impl TwoParamFamily {
    /// Scalar curvature of the base metric at a snapshot (diagnostic for the
    /// flow CSV output).
    pub fn base_scalar_curvature(&self, snap: usize) -> Field2 {
        scalar_curvature_field(&self.snaps[snap].base)
    }

    /// Pointwise five-slice family at one node of one snapshot, in the shape
    /// the variation checks consume. Slice geometries, gauge vectors
    /// (recomputed in jet arithmetic from the stored metrics), and
    /// `f = (log det g_s - log det g_base) / 2` all come from grid jets.
    pub fn localize(&self, snap: usize, node: (usize, usize)) -> Result<PointFamily, FlowError> {
        if self.snaps.is_empty() {
            return Err(FlowError::BaseTrajectoryMissing);
        }
        let base = slice_jets(self, snap, SliceSel::Base)?;
        let geom_base = base.geometry_at(node, Mutation::None);
        let base_det_ln = geom_base.det.ln();
        let h_center = base.h_at(node).expect("base slice carries h");
        let zero = geom_base.scal.zero_like();

        let mut slices = Vec::with_capacity(5);
        for k in -2..=2_i32 {
            let (s, geom) = if k == 0 {
                (0.0, build_geometry(2, base.g_at(node), Mutation::None))
            } else {
                let m = if k < 0 { (k + 2) as usize } else { (k + 1) as usize };
                let sj = slice_jets(self, snap, SliceSel::Offset(m))?;
                let s = self.snaps[snap].offsets[m].0;
                (s, sj.geometry_at(node, Mutation::None))
            };
            let w_up = if k == 0 {
                t1(2, |_| zero.clone())
            } else {
                t1(2, |kk| {
                    sum2(&zero, 2, |i, j| {
                        geom.ginv[i][j].mul(&geom.gamma[kk][i][j].sub(&geom_base.gamma[kk][i][j]))
                    })
                })
            };
            let f = geom.det.ln().sub(&base_det_ln).scale(0.5);
            slices.push(PointSlice { s, geom, w_up, f });
        }
        Ok(PointFamily {
            n: 2,
            s0: self.s0,
            slices,
            h_center: CotensorJet::rank2(2, h_center),
        })
    }
}

// ------------------------------------------------------------------

#[cfg(test)]
mod tests {
    use super::*;
    use crate::approx::{s_stencil, variation_checks};
    use crate::riemann::divergence;
    use crate::tensor::t2;

    fn small_spec() -> GridSpec {
        GridSpec::new(16, 16, 4)
    }

    #[test]
    fn stencil_tables_match_declared_orders() {
        // dx of a constant is exactly zero (coefficients are antisymmetric).
        let c = Field2::constant(small_spec(), 3.7);
        for axis in 0..2 {
            assert_eq!(c.dx(axis).max_abs(), 0.0);
        }
        // Measured order on sin(x + 2y) between N and 2N within +-0.5.
        for &ord in &[2usize, 4, 6, 8] {
            let err = |n: usize| {
                let spec = GridSpec::new(n, n, ord);
                let f = Field2::from_fn(spec, |x, y| (x + 2.0 * y).sin());
                let want = Field2::from_fn(spec, |x, y| (x + 2.0 * y).cos());
                f.dx(0).sub(&want).max_abs()
            };
            let (e1, e2) = (err(32), err(64));
            let measured = (e1 / e2).log2();
            assert!(
                (measured - ord as f64).abs() <= 0.5,
                "order {ord}: measured {measured:.2} (errors {e1:.3e}, {e2:.3e})"
            );
        }
    }

    #[test]
    fn flat_metric_is_a_fixed_point_and_constant_h_is_static() {
        let spec = small_spec();
        let g0 = flat_metric(spec);
        let h0 = t2(2, |i, j| Field2::constant(spec, [[2.0, -1.0], [-1.0, 3.0]][i][j]));
        let mut st = GridState::new(spec, g0.clone(), h0.clone(), None, CFL_DEFAULT).unwrap();
        for _ in 0..5 {
            st = step_h(&st).unwrap();
        }
        // Derivatives of constant fields vanish exactly, so both the flow and
        // the linearized equation have identically zero right-hand sides.
        for i in 0..2 {
            for j in 0..2 {
                assert_eq!(st.g[i][j].sub(&g0[i][j]).max_abs(), 0.0);
                assert_eq!(st.h[i][j].sub(&h0[i][j]).max_abs(), 0.0);
            }
        }
        assert_eq!(trace_evolution_check(&st), 0.0);
    }

    #[test]
    fn gauge_fixed_mode_decays_like_the_heat_kernel() {
        // Base = flat (stays flat bit-exactly), offsets = flat + s * mode.
        // In the gauge fixed by the base connection the linearization of the
        // flow is the plain heat equation, so each Fourier mode of the
        // perturbation decays like exp(-|k|^2 t) up to O(amplitude) nonlinear
        // corrections and O(dx^4) symbol error.
        let spec = GridSpec::new(24, 24, 4);
        let eps = 0.01;
        let pattern = Field2::from_fn(spec, |x, y| (x + y).sin());
        let h0 = t2(2, |i, j| {
            if i == j {
                pattern.scale(if i == 0 { eps } else { -eps })
            } else {
                Field2::zeros(spec)
            }
        });
        let fam = build_deturck_family(spec, flat_metric(spec), h0, 1.0, 30, CFL_DEFAULT).unwrap();
        let last = fam.snaps.last().unwrap();
        let elapsed = last.t;
        assert!(elapsed > 0.1, "run too short to observe decay: t = {elapsed}");
        for snap in [&fam.snaps[0], last] {
            for i in 0..2 {
                for j in 0..2 {
                    assert_eq!(
                        snap.base[i][j].sub(&flat_metric(spec)[i][j]).max_abs(),
                        0.0,
                        "flat base must stay flat bit-exactly"
                    );
                }
            }
        }
        let norm = pattern.dot(&pattern);
        for (m, (s, g_s)) in last.offsets.iter().enumerate() {
            let a0 = fam.snaps[0].offsets[m].1[0][0]
                .sub(&flat_metric(spec)[0][0])
                .dot(&pattern)
                / norm;
            let a1 = g_s[0][0].sub(&flat_metric(spec)[0][0]).dot(&pattern) / norm;
            let want = (-2.0 * elapsed).exp();
            assert!(
                (a1 / a0 - want).abs() <= 0.03 * want + 5.0 * eps * s.abs() * want,
                "s = {s}: decay {:.6} vs heat kernel {:.6}",
                a1 / a0,
                want
            );
        }
    }

    #[test]
    fn gradient_vector_field_preserves_flatness() {
        // V = df on a flat background drags the metric along a family of
        // diffeomorphisms, so the curvature stays zero (up to stencil error).
        let spec = GridSpec::new(24, 24, 4);
        let f = Field2::from_fn(spec, |x, y| 0.3 * x.sin() * y.cos());
        let v = vec![f.dx(0), f.dx(1)];
        let mut st = GridState::new(spec, flat_metric(spec), flat_metric(spec), Some(v), CFL_DEFAULT)
            .unwrap();
        for _ in 0..10 {
            st = step_ricci(&st).unwrap();
        }
        let drift = t2(2, |i, j| st.g[i][j].sub(&flat_metric(spec)[i][j]))[0][0].max_abs();
        assert!(drift > 1e-4, "metric must actually move: drift {drift:.3e}");
        let scal = scalar_curvature_field(&st.g).max_abs();
        assert!(scal < 2e-6, "flatness drift {scal:.3e}");
    }

    #[test]
    fn joint_h_equals_ricci_along_the_flow() {
        // The Ricci tensor of the evolving metric solves the linearized
        // equation, so seeding h with Rc(g0) must reproduce Rc(g(t)). The
        // mismatch is pure stencil truncation and refines at fourth order.
        let t_final = 0.03;
        let run = |n: usize| {
            let spec = GridSpec::new(n, n, 4);
            let g0 = perturbed_flat(spec, 0.08, 11);
            let geom0 = build_geometry(2, g0.clone(), Mutation::None);
            let h0 = sym2f(&t2(2, |i, j| geom0.ricci[i][j].clone()));
            let mut st = GridState::new(spec, g0, h0, None, CFL_DEFAULT).unwrap();
            let steps = (t_final / st.dt).ceil() as usize;
            st.dt = t_final / steps as f64;
            for _ in 0..steps {
                st = step_h(&st).unwrap();
            }
            let rc = build_geometry(2, st.g.clone(), Mutation::None).ricci;
            let mut err = 0.0_f64;
            let mut scale = 0.0_f64;
            for i in 0..2 {
                for j in 0..2 {
                    err = err.max(st.h[i][j].sub(&rc[i][j]).max_abs());
                    scale = scale.max(rc[i][j].max_abs());
                }
            }
            (err, scale)
        };
        let (err24, scale24) = run(24);
        let (err48, _) = run(48);
        assert!(scale24 > 1e-3, "curvature must be visible: {scale24:.3e}");
        assert!(err24 <= 4e-3 * scale24, "h vs Rc(g(t)): {err24:.3e} (scale {scale24:.3e})");
        assert!(
            err48 < err24 / 8.0,
            "doubling the resolution must shrink the mismatch: {err24:.3e} -> {err48:.3e}"
        );
    }

    #[test]
    fn h_step_is_linear_in_h() {
        let spec = small_spec();
        let g0 = perturbed_flat(spec, 0.05, 3);
        let ha = random_sym_field(spec, 0.5, 4);
        let hb = random_sym_field(spec, 0.5, 5);
        let combo = t2(2, |i, j| ha[i][j].scale(2.0).add(&hb[i][j].scale(-3.0)));
        let run = |h0: T2<Field2>| {
            let mut st = GridState::new(spec, g0.clone(), h0, None, CFL_DEFAULT).unwrap();
            for _ in 0..4 {
                st = step_h(&st).unwrap();
            }
            st.h
        };
        let (ra, rb, rc) = (run(ha), run(hb), run(combo));
        for i in 0..2 {
            for j in 0..2 {
                let want = ra[i][j].scale(2.0).add(&rb[i][j].scale(-3.0));
                assert!(rc[i][j].sub(&want).max_abs() < 1e-12);
            }
        }
        // Zero initial data stays exactly zero.
        let rz = run(t2(2, |_, _| Field2::zeros(spec)));
        for i in 0..2 {
            for j in 0..2 {
                assert_eq!(rz[i][j].max_abs(), 0.0);
            }
        }
    }

    #[test]
    fn family_with_zero_h0_collapses_and_gauge_vanishes_on_base() {
        let spec = small_spec();
        let g0 = perturbed_flat(spec, 0.08, 7);
        let h0 = t2(2, |_, _| Field2::zeros(spec));
        let fam = build_deturck_family(spec, g0, h0, 0.01, 3, CFL_DEFAULT).unwrap();
        for snap in &fam.snaps {
            for (s, g_s) in &snap.offsets {
                for i in 0..2 {
                    for j in 0..2 {
                        assert_eq!(
                            g_s[i][j].sub(&snap.base[i][j]).max_abs(),
                            0.0,
                            "s = {s}: offsets must coincide with the base bit-exactly"
                        );
                    }
                }
            }
            for (_, w) in &snap.w {
                for k in 0..2 {
                    assert_eq!(w[k].max_abs(), 0.0, "gauge vector of a collapsed family");
                }
            }
        }
    }

    #[test]
    fn family_first_variation_matches_h_and_w_variation_matches_its_law() {
        let spec = GridSpec::new(24, 24, 4);
        let g0 = perturbed_flat(spec, 0.06, 21);
        let h0 = random_sym_field(spec, 0.4, 22);
        let s0 = 1e-2;
        let fam = build_deturck_family(spec, g0, h0, s0, 6, CFL_DEFAULT).unwrap();
        let snap = fam.snaps.last().unwrap();
        let geom = build_geometry(2, snap.base.clone(), Mutation::None);
        let dd = divergence(&geom, &snap.h);

        let mut err_g = 0.0_f64;
        let mut err_w = 0.0_f64;
        let mut err_r = 0.0_f64;
        let scal_of: Vec<Field2> = snap
            .offsets
            .iter()
            .map(|(_, g_s)| scalar_curvature_field(g_s))
            .collect();
        let scal_base = scalar_curvature_field(&snap.base);
        let grad_h = dd.trace.clone();
        let lap_h = lap_scalar(&geom, &grad_h);
        for i in 0..spec.nx {
            for j in 0..spec.ny {
                for (a, b) in SYM_IDX {
                    // d/ds g(t, s) at s = 0 vs the independently evolved h.
                    let vals = [
                        snap.offsets[0].1[a][b].at(i, j),
                        snap.offsets[1].1[a][b].at(i, j),
                        snap.base[a][b].at(i, j),
                        snap.offsets[2].1[a][b].at(i, j),
                        snap.offsets[3].1[a][b].at(i, j),
                    ];
                    err_g = err_g.max((s_stencil(&vals, s0) - snap.h[a][b].at(i, j)).abs());
                }
                for k in 0..2 {
                    // d/ds W at s = 0 vs div h - grad(tr h)/2, index raised.
                    let vals = [
                        snap.w[0].1[k].at(i, j),
                        snap.w[1].1[k].at(i, j),
                        0.0,
                        snap.w[2].1[k].at(i, j),
                        snap.w[3].1[k].at(i, j),
                    ];
                    let want: f64 = (0..2)
                        .map(|l| {
                            geom.ginv[k][l].at(i, j)
                                * (dd.div[l].at(i, j) - 0.5 * grad_h.dx(l).at(i, j))
                        })
                        .sum();
                    err_w = err_w.max((s_stencil(&vals, s0) - want).abs());
                }
                // d/ds R at s = 0 vs div div h - lap(tr h) - <Rc, h>.
                let vals = [
                    scal_of[0].at(i, j),
                    scal_of[1].at(i, j),
                    scal_base.at(i, j),
                    scal_of[2].at(i, j),
                    scal_of[3].at(i, j),
                ];
                let want = dd.divdiv.at(i, j) - lap_h.at(i, j) - dd.rc_dot_h.at(i, j);
                err_r = err_r.max((s_stencil(&vals, s0) - want).abs());
            }
        }
        // Budgets are the measured fourth-order stencil mismatch at this
        // resolution with a ~6x margin; the signal a wrong law would leave
        // is two to three orders larger.
        assert!(err_g < 1.5e-3, "ds g vs h: {err_g:.3e}");
        assert!(err_w < 1.2e-2, "ds W vs its law: {err_w:.3e}");
        assert!(err_r < 1e-1, "ds R vs its law: {err_r:.3e}");
    }

    #[test]
    fn trace_evolution_residual_is_stencil_small_on_plain_flow() {
        let spec = GridSpec::new(24, 24, 4);
        let g0 = perturbed_flat(spec, 0.08, 31);
        let h0 = random_sym_field(spec, 0.5, 32);
        let mut st = GridState::new(spec, g0, h0, None, CFL_DEFAULT).unwrap();
        for _ in 0..3 {
            st = step_h(&st).unwrap();
        }
        let res = trace_evolution_check(&st);
        let spec2 = GridSpec::new(48, 48, 4);
        let g0 = perturbed_flat(spec2, 0.08, 31);
        let h0 = random_sym_field(spec2, 0.5, 32);
        let mut st2 = GridState::new(spec2, g0, h0, None, CFL_DEFAULT).unwrap();
        for _ in 0..3 {
            st2 = step_h(&st2).unwrap();
        }
        let res2 = trace_evolution_check(&st2);
        // The law holds exactly in the continuum; what remains is the
        // mismatch between chained stencils, which refines at fourth order.
        assert!(res < 0.2, "trace law residual {res:.3e}");
        assert!(
            res2 < res / 8.0,
            "doubling the resolution must shrink the residual: {res:.3e} -> {res2:.3e}"
        );
    }

    #[test]
    fn refinement_reproduces_the_declared_order() {
        // Richardson estimate on g_00 at a fixed time with dt tied to dx^2:
        // the spatial order (4) dominates, measured within +-0.5.
        let t_final = 0.02;
        let run = |n: usize| {
            let spec = GridSpec::new(n, n, 4);
            let g0 = t2(2, |i, j| {
                Field2::from_fn(spec, |x, y| {
                    let bump = 0.05 * (x + y).sin() + 0.03 * (x - y).cos();
                    if i == j {
                        1.0 + bump * if i == 0 { 1.0 } else { -0.6 }
                    } else {
                        0.02 * x.sin() * y.sin()
                    }
                })
            });
            let mut st = GridState::new(spec, g0, t2(2, |_, _| Field2::zeros(spec)), None, 0.08)
                .unwrap();
            let steps = (t_final / st.dt).ceil() as usize;
            st.dt = t_final / steps as f64;
            for _ in 0..steps {
                st = step_ricci(&st).unwrap();
            }
            st
        };
        let (c, m, f) = (run(8), run(16), run(32));
        let diff = |coarse: &GridState, fine: &GridState, ratio: usize| {
            let mut d = 0.0_f64;
            for i in 0..coarse.spec.nx {
                for j in 0..coarse.spec.ny {
                    d = d.max((coarse.g[0][0].at(i, j) - fine.g[0][0].at(i * ratio, j * ratio)).abs());
                }
            }
            d
        };
        let (d1, d2) = (diff(&c, &m, 2), diff(&m, &f, 2));
        let order = (d1 / d2).log2();
        assert!(
            (order - 4.0).abs() <= 0.5,
            "measured refinement order {order:.2} (diffs {d1:.3e}, {d2:.3e})"
        );
    }

    #[test]
    fn grid_jets_match_analytic_partials() {
        // Fill three snapshots from a closed-form space-time function whose
        // partial derivatives are known exactly, and compare the extracted
        // jet entry by entry.
        let spec = GridSpec::new(64, 64, 6);
        let dt = 0.01;
        let f = |t: f64, x: f64, y: f64| {
            (0.1 * t).exp() * (1.2 + 0.5 * (x + 2.0 * y).sin() + 0.3 * (2.0 * x - y).cos())
        };
        let snap_at = |t: f64| Field2::from_fn(spec, |x, y| f(t, x, y));
        let ct = comp_tables(&snap_at(-dt), &snap_at(0.0), &snap_at(dt), GRID_JET_DEG);
        let (i, j) = (13, 40);
        let (x0, y0) = spec.xy(i, j);
        let jet = ct.jet_at(i, j, dt);
        // Each d/dx shifts the phase by pi/2 and multiplies by the wave
        // number of that axis; d/dt brings down a factor 0.1.
        let half_pi = std::f64::consts::FRAC_PI_2;
        let partial = |et: usize, ex: usize, ey: usize| {
            let d = ex + ey;
            let constant = if d == 0 { 1.2 } else { 0.0 };
            let wave = 0.5 * 2.0_f64.powi(ey as i32) * (x0 + 2.0 * y0 + d as f64 * half_pi).sin()
                + 0.3
                    * 2.0_f64.powi(ex as i32)
                    * (-1.0_f64).powi(ey as i32)
                    * (2.0 * x0 - y0 + d as f64 * half_pi).cos();
            0.1_f64.powi(et as i32) * (constant + wave)
        };
        let mut checked = 0;
        for et in 0..=GRID_JET_TDEG {
            for ex in 0..=GRID_JET_DEG {
                for ey in 0..=GRID_JET_DEG {
                    if et + ex + ey > GRID_JET_DEG || et > GRID_JET_TDEG {
                        continue;
                    }
                    let mut probe = jet.clone();
                    for _ in 0..et {
                        probe = probe.deriv(0);
                    }
                    for _ in 0..ex {
                        probe = probe.deriv(1);
                    }
                    for _ in 0..ey {
                        probe = probe.deriv(2);
                    }
                    let got = probe.value();
                    let want = partial(et, ex, ey);
                    let tol = (1.0 + want.abs())
                        * match ex + ey {
                            0..=2 => 1e-6,
                            3 | 4 => 1e-4,
                            _ => 3e-3,
                        };
                    assert!(
                        (got - want).abs() <= tol,
                        "partial t^{et} x^{ex} y^{ey}: got {got:.8e}, want {want:.8e}"
                    );
                    checked += 1;
                }
            }
        }
        assert!(checked > 30, "jet comparison must cover the whole table: {checked}");
    }

    #[test]
    fn slice_jets_expose_the_right_data_per_trajectory() {
        let spec = small_spec();
        let g0 = perturbed_flat(spec, 0.06, 41);
        let h0 = random_sym_field(spec, 0.3, 42);
        let fam = build_deturck_family(spec, g0, h0, 5e-3, 2, CFL_DEFAULT).unwrap();
        let base = slice_jets(&fam, 1, SliceSel::Base).unwrap();
        let node = (3, 9);
        // Center values of the jets are the stored snapshot values, exactly.
        let gj = base.g_at(node);
        for (a, b) in SYM_IDX {
            assert_eq!(gj[a][b].value(), fam.snaps[1].base[a][b].at(node.0, node.1));
        }
        assert!(base.v_at(node).is_none());
        let hj = base.h_at(node).unwrap();
        for (a, b) in SYM_IDX {
            assert_eq!(hj[a][b].value(), fam.snaps[1].h[a][b].at(node.0, node.1));
        }
        let off = slice_jets(&fam, 1, SliceSel::Offset(3)).unwrap();
        assert!(off.h_at(node).is_none());
        let v = off.v_at(node).unwrap();
        let vmax = v[0].value().abs().max(v[1].value().abs());
        assert!(vmax > 1e-8, "offset gauge 1-form must be nonzero: {vmax:.3e}");
        // The jet-side gauge vector agrees with the stored field (raised).
        let geom = off.geometry_at(node, Mutation::None);
        let w_stored = &fam.snaps[1].w[3].1;
        for k in 0..2 {
            let raised: f64 = (0..2).map(|i| geom.ginv[k][i].value() * v[i].value()).sum();
            assert!(
                (raised - w_stored[k].at(node.0, node.1)).abs() < 1e-12,
                "gauge vector mismatch at component {k}"
            );
        }
    }

    #[test]
    fn localized_family_passes_the_variation_checks() {
        let spec = GridSpec::new(24, 24, 4);
        let g0 = perturbed_flat(spec, 0.06, 51);
        let h0 = random_sym_field(spec, 0.4, 52);
        let s0 = 1e-2;
        let fam = build_deturck_family(spec, g0, h0, s0, 4, CFL_DEFAULT).unwrap();
        let pt = fam.localize(2, (5, 7)).unwrap();
        let rep = variation_checks(&pt, 100.0).unwrap();
        // Grid budgets: fourth-order space stencils plus second-order time
        // differences; the scale keeps them honest against trivially small
        // fields.
        assert!(rep.scale > 1e-3, "variation data must be visible: {:.3e}", rep.scale);
        assert!(rep.residual_a < 1e-2, "residual A {:.3e}", rep.residual_a);
        assert!(rep.o_zero_spatial < 2e-3, "spatial o(0) {:.3e}", rep.o_zero_spatial);
        assert!(rep.ds_o < 3e-1, "ds o {:.3e}", rep.ds_o);
        assert!(rep.o_structure < 4e-2, "o(0) structure {:.3e}", rep.o_structure);
    }

    #[test]
    fn snapshot_io_roundtrips_and_rejects_garbage() {
        let spec = small_spec();
        let g0 = perturbed_flat(spec, 0.07, 61);
        let h0 = random_sym_field(spec, 0.3, 62);
        let v = vec![
            Field2::from_fn(spec, |x, y| 0.1 * (x + y).sin()),
            Field2::from_fn(spec, |x, _| 0.2 * x.cos()),
        ];
        let mut st = GridState::new(spec, g0, h0, Some(v), CFL_DEFAULT).unwrap();
        st = step_ricci(&st).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("state.rtf");
        write_snapshot(&path, &st).unwrap();
        let back = read_snapshot(&path).unwrap();
        assert_eq!(back.t, st.t);
        assert_eq!(back.dt, st.dt);
        assert_eq!(back.spec, st.spec);
        for i in 0..2 {
            for j in 0..2 {
                assert_eq!(back.g[i][j].a, st.g[i][j].a, "exact round-trip");
                assert_eq!(back.h[i][j].a, st.h[i][j].a);
            }
        }
        assert_eq!(back.v.as_ref().unwrap()[1].a, st.v.as_ref().unwrap()[1].a);

        let junk = dir.path().join("junk.rtf");
        std::fs::write(&junk, "not a field file\n{}\n").unwrap();
        assert!(matches!(read_snapshot(&junk), Err(FlowError::BadFieldFile { .. })));
        let truncated = dir.path().join("short.rtf");
        let text = std::fs::read_to_string(&path).unwrap();
        let keep: Vec<&str> = text.lines().take(4).collect();
        std::fs::write(&truncated, keep.join("\n")).unwrap();
        assert!(matches!(read_snapshot(&truncated), Err(FlowError::BadFieldFile { .. })));
    }

    #[test]
    fn guard_errors_fire() {
        let spec = small_spec();
        // Metric with a nearly null direction at one node.
        let mut g = flat_metric(spec);
        *g[0][0].at_mut(4, 4) = 1e-9;
        let h = t2(2, |_, _| Field2::zeros(spec));
        match GridState::new(spec, g, h.clone(), None, CFL_DEFAULT) {
            Err(FlowError::MetricDegenerated { min_eig, node }) => {
                assert!(min_eig < MIN_METRIC_EIG);
                assert_eq!(node, (4, 4));
            }
            other => panic!("expected MetricDegenerated, got {:?}", other.map(|_| ())),
        }
        // Forcing a time step above the CFL bound trips the per-step check.
        let mut st =
            GridState::new(spec, perturbed_flat(spec, 0.05, 71), h, None, CFL_DEFAULT).unwrap();
        st.dt *= 50.0;
        assert!(matches!(step_ricci(&st), Err(FlowError::CflViolation { .. })));
        // Jet extraction needs a time neighbor on each side.
        let fam = build_deturck_family(
            spec,
            perturbed_flat(spec, 0.05, 72),
            random_sym_field(spec, 0.2, 73),
            1e-3,
            2,
            CFL_DEFAULT,
        )
        .unwrap();
        assert!(matches!(
            slice_jets(&fam, 0, SliceSel::Base),
            Err(FlowError::SnapshotOutOfRange { .. })
        ));
        assert!(matches!(
            slice_jets(&fam, 2, SliceSel::Base),
            Err(FlowError::SnapshotOutOfRange { .. })
        ));
        let empty = TwoParamFamily {
            spec,
            s0: 1e-3,
            dt: 0.1,
            cfl: CFL_DEFAULT,
            snaps: Vec::new(),
        };
        assert!(matches!(
            empty.localize(0, (0, 0)),
            Err(FlowError::BaseTrajectoryMissing)
        ));
    }
}
