//! Run configuration: one versioned TOML document shared by every subcommand,
//! with command-line flags and `RICCILAB_*` environment variables applied on
//! top of it.
//!
//! Integers that could plausibly be mistyped negative (`resolution`, `steps`,
//! …) deserialize as `i64` and are range-checked in [`RunConfig::validate`],
//! so a malformed file fails with a `ConfigError` that names the offending
//! dotted field path instead of surfacing a bare serde type error.

use std::collections::BTreeSet;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use riccilab::jets::standard_providers;
use riccilab::verify::{find_check, GridParams, GRID_BASE, GRID_OFFSET};
use riccilab::Mutation;

/// Keyword selecting the synthetic perturbed-flat evolution in `flow`
/// (every other provider name refers to an analytic family).
pub const FLOW_GRID_PROVIDER: &str = "grid";

pub const SCHEMA_VERSION: i64 = 1;

/// A configuration field failed validation; `field` is the dotted TOML path
/// (`"file"` for errors that precede field resolution).
#[derive(Debug, Clone)]
pub struct ConfigError {
    pub field: String,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "config error ({}): {}", self.field, self.message)
    }
}

impl std::error::Error for ConfigError {}

fn bad(field: &str, message: impl Into<String>) -> ConfigError {
    ConfigError {
        field: field.to_string(),
        message: message.into(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub schema_version: i64,
    pub seed: i64,
    /// Fault injection for the check suite; `"none"` for honest runs.
    pub mutation: String,
    /// Check ids to run; omitted means the full catalog.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub checks: Option<Vec<String>>,
    /// Restrict the suite to a single provider id.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub provider: Option<String>,
    pub out_dir: PathBuf,
    /// Report formats; any subset of `"json"` and `"csv"`.
    pub formats: Vec<String>,
    pub grid: GridSection,
    pub flow: FlowSection,
    pub convergence: ConvergenceSection,
}

impl Default for RunConfig {
    fn default() -> RunConfig {
        RunConfig {
            schema_version: SCHEMA_VERSION,
            seed: 42,
            mutation: Mutation::None.to_string(),
            checks: None,
            provider: None,
            out_dir: PathBuf::from("riccilab-out"),
            formats: vec!["json".to_string(), "csv".to_string()],
            grid: GridSection::default(),
            flow: FlowSection::default(),
            convergence: ConvergenceSection::default(),
        }
    }
}

/// Grid backend used by the check suite's `grid32`/`grid32+s` providers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSection {
    pub resolution: i64,
    /// Central-stencil order (2, 4, 6, or 8).
    pub order: i64,
    /// Gauge-stencil offset s₀.
    pub s0: f64,
}

impl Default for GridSection {
    fn default() -> GridSection {
        let p = GridParams::default();
        GridSection {
            resolution: p.resolution as i64,
            order: p.order as i64,
            s0: p.s0,
        }
    }
}

/// Parameters of the `flow` subcommand.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FlowSection {
    /// Analytic provider id, or `"grid"` for the perturbed-flat evolution.
    pub provider: String,
    /// Horizon T. Analytic runs emit `steps` uniform times in (0, T]; grid
    /// runs take CFL-bounded steps until T is reached.
    pub t_max: f64,
    /// Sample-time count for analytic runs (grid step counts follow from
    /// `t_max` and the Δt rule instead).
    pub steps: i64,
    /// Fraction of the parabolic stability bound used as the Δt rule.
    pub cfl: f64,
    pub resolution: i64,
    pub order: i64,
    /// Amplitude of the random initial perturbation (grid runs).
    pub amp: f64,
    /// s-offset of the companion gauge family (grid runs).
    pub s0: f64,
    /// Maximum number of snapshot files; slices are thinned evenly to this
    /// count, always keeping the first and last (grid runs).
    pub snapshots: i64,
}

impl Default for FlowSection {
    fn default() -> FlowSection {
        FlowSection {
            provider: "sphere2".to_string(),
            t_max: 0.1,
            steps: 8,
            cfl: 0.1,
            resolution: 32,
            order: 4,
            amp: 0.05,
            s0: 5e-4,
            snapshots: 16,
        }
    }
}

/// Parameters of the `convergence` subcommand (large-N expansion study).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConvergenceSection {
    pub providers: Vec<String>,
    /// Ascending N values at which the closed-form/generic gap is measured.
    pub n_grid: Vec<f64>,
    /// Random base points per provider.
    pub samples: i64,
}

impl Default for ConvergenceSection {
    fn default() -> ConvergenceSection {
        ConvergenceSection {
            providers: vec!["sphere2".to_string(), "cigar".to_string()],
            n_grid: riccilab::verify::N_GRID_DEFAULT.to_vec(),
            samples: 3,
        }
    }
}

/// Command-line / environment values that take precedence over file values.
#[derive(Debug, Default)]
pub struct Overrides {
    pub checks: Option<Vec<String>>,
    pub provider: Option<String>,
    pub seed: Option<i64>,
    pub mutation: Option<String>,
    pub out: Option<PathBuf>,
    pub format: Option<Vec<String>>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| bad("file", format!("cannot read {}: {e}", path.display())))?;
        RunConfig::parse(&text)
    }

    pub fn parse(text: &str) -> Result<RunConfig, ConfigError> {
        toml::from_str(text).map_err(|e| bad("file", e.to_string()))
    }

    pub fn apply(&mut self, ov: Overrides) {
        if let Some(checks) = ov.checks {
            self.checks = Some(checks);
        }
        if let Some(provider) = ov.provider {
            self.provider = Some(provider);
        }
        if let Some(seed) = ov.seed {
            self.seed = seed;
        }
        if let Some(mutation) = ov.mutation {
            self.mutation = mutation;
        }
        if let Some(out) = ov.out {
            self.out_dir = out;
        }
        if let Some(format) = ov.format {
            self.formats = format;
        }
    }

    /// Every provider id the suite understands (analytic pool plus the two
    /// grid-backend names).
    pub fn known_providers() -> BTreeSet<String> {
        let mut ids: BTreeSet<String> = standard_providers(0)
            .iter()
            .map(|p| p.id().to_string())
            .collect();
        ids.insert(GRID_BASE.to_string());
        ids.insert(GRID_OFFSET.to_string());
        ids
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(bad(
                "schema_version",
                format!("unsupported version {} (expected {SCHEMA_VERSION})", self.schema_version),
            ));
        }
        if self.seed < 0 {
            return Err(bad("seed", "must be non-negative"));
        }
        Mutation::from_str(&self.mutation).map_err(|e| bad("mutation", e))?;
        if let Some(checks) = &self.checks {
            if checks.is_empty() {
                return Err(bad("checks", "must name at least one check id when present"));
            }
            for id in checks {
                if find_check(id).is_none() {
                    return Err(bad("checks", format!("unknown check id {id:?}")));
                }
            }
        }
        let known = RunConfig::known_providers();
        if let Some(p) = &self.provider {
            if !known.contains(p) {
                return Err(bad("provider", format!("unknown provider {p:?}")));
            }
        }
        if self.formats.is_empty() {
            return Err(bad("formats", "must contain json, csv, or both"));
        }
        for f in &self.formats {
            if f != "json" && f != "csv" {
                return Err(bad("formats", format!("unknown format {f:?} (expected json or csv)")));
            }
        }
        validate_grid("grid", self.grid.resolution, self.grid.order)?;
        validate_s0("grid.s0", self.grid.s0)?;
        self.validate_flow(&known)?;
        self.validate_convergence(&known)?;
        Ok(())
    }

    fn validate_flow(&self, known: &BTreeSet<String>) -> Result<(), ConfigError> {
        let fl = &self.flow;
        if fl.provider != FLOW_GRID_PROVIDER && !known.contains(&fl.provider) {
            return Err(bad(
                "flow.provider",
                format!("unknown provider {:?} (analytic id or \"grid\")", fl.provider),
            ));
        }
        if fl.provider == GRID_BASE || fl.provider == GRID_OFFSET {
            return Err(bad(
                "flow.provider",
                format!("use \"grid\" for grid evolutions, not {:?}", fl.provider),
            ));
        }
        if !fl.t_max.is_finite() || fl.t_max <= 0.0 {
            return Err(bad("flow.t_max", "must be a positive finite horizon"));
        }
        if fl.provider != FLOW_GRID_PROVIDER {
            let pool = standard_providers(0);
            let prov = pool
                .iter()
                .find(|p| p.id() == fl.provider)
                .expect("membership checked above");
            let (_, t_hi) = prov.t_domain();
            if fl.t_max >= t_hi {
                return Err(bad(
                    "flow.t_max",
                    format!("exceeds the {} time domain (must be < {t_hi})", fl.provider),
                ));
            }
        }
        if !(1..=100_000).contains(&fl.steps) {
            return Err(bad("flow.steps", "must be between 1 and 100000"));
        }
        if !fl.cfl.is_finite() || fl.cfl <= 0.0 || fl.cfl > 1.0 {
            return Err(bad("flow.cfl", "must lie in (0, 1]"));
        }
        validate_grid("flow", fl.resolution, fl.order)?;
        if !fl.amp.is_finite() || !(0.0..=0.15).contains(&fl.amp) {
            return Err(bad("flow.amp", "must lie in [0, 0.15] to keep the metric positive"));
        }
        validate_s0("flow.s0", fl.s0)?;
        if !(2..=10_000).contains(&fl.snapshots) {
            return Err(bad("flow.snapshots", "must be between 2 and 10000"));
        }
        Ok(())
    }

    fn validate_convergence(&self, known: &BTreeSet<String>) -> Result<(), ConfigError> {
        let cv = &self.convergence;
        if cv.providers.is_empty() {
            return Err(bad("convergence.providers", "must name at least one provider"));
        }
        for p in &cv.providers {
            if p == GRID_BASE || p == GRID_OFFSET || p == FLOW_GRID_PROVIDER {
                return Err(bad(
                    "convergence.providers",
                    format!("{p:?} is not analytic; the study needs exact jets"),
                ));
            }
            if !known.contains(p) {
                return Err(bad("convergence.providers", format!("unknown provider {p:?}")));
            }
        }
        if cv.n_grid.is_empty() {
            return Err(bad("convergence.n_grid", "must contain at least one N value"));
        }
        for &n in &cv.n_grid {
            if !n.is_finite() || n <= 0.0 {
                return Err(bad("convergence.n_grid", "N values must be positive and finite"));
            }
        }
        if !cv.n_grid.windows(2).all(|w| w[0] < w[1]) {
            return Err(bad("convergence.n_grid", "N values must be strictly increasing"));
        }
        if !(1..=64).contains(&cv.samples) {
            return Err(bad("convergence.samples", "must be between 1 and 64"));
        }
        Ok(())
    }

    pub fn grid_params(&self) -> GridParams {
        GridParams {
            resolution: self.grid.resolution as usize,
            order: self.grid.order as usize,
            s0: self.grid.s0,
        }
    }

    pub fn seed_u64(&self) -> u64 {
        self.seed as u64
    }

    pub fn mutation(&self) -> Mutation {
        Mutation::from_str(&self.mutation).expect("validated")
    }

    pub fn wants(&self, format: &str) -> bool {
        self.formats.iter().any(|f| f == format)
    }
}

fn validate_grid(section: &str, resolution: i64, order: i64) -> Result<(), ConfigError> {
    let ord_field = format!("{section}.order");
    let res_field = format!("{section}.resolution");
    if ![2, 4, 6, 8].contains(&order) {
        return Err(bad(&ord_field, "stencil order must be 2, 4, 6, or 8"));
    }
    if resolution <= 0 {
        return Err(bad(&res_field, "must be positive"));
    }
    if resolution < 2 * order {
        return Err(bad(
            &res_field,
            format!("must be at least 2x the stencil order ({})", 2 * order),
        ));
    }
    if resolution > 1024 {
        return Err(bad(&res_field, "must be at most 1024"));
    }
    Ok(())
}

fn validate_s0(field: &str, s0: f64) -> Result<(), ConfigError> {
    if !s0.is_finite() || s0 <= 0.0 || s0 > 0.1 {
        return Err(bad(field, "must lie in (0, 0.1]"));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        RunConfig::default().validate().unwrap();
    }

    #[test]
    fn round_trip_is_identity() {
        let text = r#"
            schema_version = 1
            seed = 7
            checks = ["lemma_2_2", "theorem_C"]
            provider = "flat2"
            out_dir = "results"
            formats = ["json"]

            [grid]
            resolution = 16
            order = 2
            s0 = 1e-3

            [flow]
            provider = "cigar"
            t_max = 0.05
            steps = 4
        "#;
        let cfg = RunConfig::parse(text).unwrap();
        cfg.validate().unwrap();
        let serialized = toml::to_string(&cfg).unwrap();
        let reparsed = RunConfig::parse(&serialized).unwrap();
        assert_eq!(cfg, reparsed);
    }

    #[test]
    fn unknown_field_is_rejected_by_name() {
        let e = RunConfig::parse("bogus_knob = 3\n").unwrap_err();
        assert!(e.message.contains("bogus_knob"), "{e}");
    }

    #[test]
    fn negative_resolution_names_the_field() {
        let cfg = RunConfig::parse("[grid]\nresolution = -4\n").unwrap();
        let e = cfg.validate().unwrap_err();
        assert_eq!(e.field, "grid.resolution");
    }

    #[test]
    fn unknown_check_and_provider_are_named() {
        let cfg = RunConfig::parse("checks = [\"nope\"]\n").unwrap();
        assert_eq!(cfg.validate().unwrap_err().field, "checks");
        let cfg = RunConfig::parse("provider = \"nope\"\n").unwrap();
        assert_eq!(cfg.validate().unwrap_err().field, "provider");
    }

    #[test]
    fn flow_horizon_is_checked_against_the_provider_domain() {
        let cfg = RunConfig::parse("[flow]\nprovider = \"sphere2\"\nt_max = 0.9\n").unwrap();
        assert_eq!(cfg.validate().unwrap_err().field, "flow.t_max");
        let cfg = RunConfig::parse("[flow]\nprovider = \"grid\"\nt_max = 0.9\n").unwrap();
        cfg.validate().unwrap();
    }

    #[test]
    fn overrides_take_precedence() {
        let mut cfg = RunConfig::default();
        cfg.apply(Overrides {
            checks: Some(vec!["lemma_2_2".into()]),
            provider: Some("flat2".into()),
            seed: Some(9),
            mutation: Some("drop-rc-dot-h".into()),
            out: Some(PathBuf::from("elsewhere")),
            format: Some(vec!["csv".into()]),
        });
        cfg.validate().unwrap();
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.mutation(), Mutation::DropRcDotH);
        assert_eq!(cfg.out_dir, PathBuf::from("elsewhere"));
        assert!(cfg.wants("csv") && !cfg.wants("json"));
    }
}
