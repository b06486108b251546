//! Run configuration: TOML files with nested blocks, command-line
//! `block.key=value` overrides, named figure presets, and a resolved-config
//! echo (plus hash) for provenance. Unknown keys are rejected everywhere.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::model::{Beta, ModelParams, QuadConvention, SqueezeThermal};
use crate::tensornet::NumericsConfig;
use crate::zeno::Engine;
use crate::{Error, Result};

/// Inverse temperature as it appears in config files: a positive number or
/// the string `"inf"` for zero temperature.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BetaValue(pub Beta);

impl Serialize for BetaValue {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self.0 {
            Beta::Infinite => s.serialize_str("inf"),
            Beta::Finite(b) => s.serialize_f64(b),
        }
    }
}

impl<'de> Deserialize<'de> for BetaValue {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Num(f64),
            Str(String),
        }
        match Repr::deserialize(d)? {
            // bare `inf` parses as the TOML float infinity
            Repr::Num(b) if b.is_infinite() && b > 0.0 => Ok(BetaValue(Beta::Infinite)),
            Repr::Num(b) => Ok(BetaValue(Beta::Finite(b))),
            Repr::Str(s) if s == "inf" => Ok(BetaValue(Beta::Infinite)),
            Repr::Str(s) => Err(serde::de::Error::custom(format!(
                "beta must be a number or \"inf\", got \"{s}\""
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelBlock {
    pub delta: f64,
    pub omega0: f64,
    pub g: f64,
    pub num_modes: usize,
}

impl Default for ModelBlock {
    fn default() -> Self {
        Self { delta: 1.0, omega0: 1.0, g: 0.1, num_modes: 15 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StateBlock {
    pub r: f64,
    pub phi: f64,
    pub beta: BetaValue,
}

impl Default for StateBlock {
    fn default() -> Self {
        Self { r: 0.0, phi: 0.0, beta: BetaValue(Beta::Infinite) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NumericsBlock {
    pub n_max: usize,
    pub d_max: usize,
    /// Time step; when absent, g·dt = 10⁻³.
    pub dt: Option<f64>,
    pub krylov_dim: usize,
    pub svd_cutoff: f64,
    pub warmup_steps: usize,
    pub truncation_budget: f64,
    pub krylov_tol: f64,
    #[serde(rename = "drop_fictitious_at_T0")]
    pub drop_fictitious_at_t0: bool,
    /// Select the alternative (non-Hermitian) quadratic-term sign convention
    /// for comparison; the validation battery flags it.
    #[serde(rename = "appendixC_sign_convention")]
    pub appendix_c_sign_convention: bool,
}

impl Default for NumericsBlock {
    fn default() -> Self {
        Self {
            n_max: 80,
            d_max: 15,
            dt: None,
            krylov_dim: 10,
            svd_cutoff: 1e-10,
            warmup_steps: 10,
            truncation_budget: 1e-6,
            krylov_tol: 1e-12,
            drop_fictitious_at_t0: true,
            appendix_c_sign_convention: false,
        }
    }
}

/// What a sweep job runs at each parameter point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskKind {
    Decay,
    Angles,
    Energy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TaskBlock {
    pub engine: Engine,
    pub kind: TaskKind,
    /// Explicit τ grid; when absent, `tau_step ..= tau_max` in steps of
    /// `tau_step`.
    pub tau_grid: Option<Vec<f64>>,
    pub tau_max: f64,
    pub tau_step: f64,
    /// Fixed measurement interval for angle scans.
    pub tau: f64,
    /// Number of φ grid points over [0, 2π).
    pub phi_points: usize,
    /// Time window and sample count for energy-flow runs.
    pub t_max: f64,
    pub t_samples: usize,
    /// Sweep axes: each entry is a table of `block.key = value` overrides
    /// applied on top of this config, one output file per entry.
    pub sweep: Vec<BTreeMap<String, toml::Value>>,
}

impl Default for TaskBlock {
    fn default() -> Self {
        Self {
            engine: Engine::Analytic,
            kind: TaskKind::Decay,
            tau_grid: None,
            tau_max: 1.0,
            tau_step: 0.01,
            tau: 0.1,
            phi_points: 128,
            t_max: 10.0,
            t_samples: 100,
            sweep: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputBlock {
    pub directory: String,
    pub formats: Vec<String>,
}

impl Default for OutputBlock {
    fn default() -> Self {
        let directory =
            std::env::var("MQRM_OUT").unwrap_or_else(|_| "out".to_string());
        Self { directory, formats: vec!["csv".into(), "json".into()] }
    }
}

/// Full run configuration. Defaults reproduce the reference parameters
/// (M = 15, Δ = ω₀ = 1, d_max = 15, n_max = 80, g·dt = 10⁻³).
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub model: ModelBlock,
    pub state: StateBlock,
    pub numerics: NumericsBlock,
    pub task: TaskBlock,
    pub output: OutputBlock,
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    /// Apply a `block.key=value` override (the value is parsed as TOML, with
    /// a bare-string fallback). Unknown keys are rejected on re-validation.
    pub fn apply_override(&mut self, spec: &str) -> Result<()> {
        let (path, raw) = spec
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override '{spec}' is not key=value")))?;
        let path = path.trim();
        let raw = raw.trim();
        let value = parse_toml_value(raw);

        let mut root = toml::Value::try_from(&*self)
            .map_err(|e| Error::Config(format!("config serialization failed: {e}")))?;
        let mut node = &mut root;
        let segments: Vec<&str> = path.split('.').collect();
        if segments.iter().any(|s| s.is_empty()) {
            return Err(Error::Config(format!("bad override key '{path}'")));
        }
        for seg in &segments[..segments.len() - 1] {
            let table = node
                .as_table_mut()
                .ok_or_else(|| Error::Config(format!("'{seg}' in '{path}' is not a table")))?;
            node = table
                .entry(seg.to_string())
                .or_insert(toml::Value::Table(Default::default()));
        }
        let table = node
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("'{path}' does not address a table entry")))?;
        table.insert(segments[segments.len() - 1].to_string(), value);

        *self = root
            .try_into()
            .map_err(|e| Error::Config(format!("override '{spec}': {e}")))?;
        Ok(())
    }

    pub fn apply_overrides<S: AsRef<str>>(&mut self, specs: &[S]) -> Result<()> {
        for s in specs {
            self.apply_override(s.as_ref())?;
        }
        Ok(())
    }

    /// Named figure-reproduction recipe.
    pub fn preset(name: &str) -> Result<Self> {
        let mut cfg = Self::default();
        let ov: &[&str] = match name {
            // single mode vs multimode decay rates at zero temperature
            "fig1a" => &[
                "task.kind=decay",
                "state.beta=\"inf\"",
                "task.sweep=[{\"model.num_modes\"=1,\"model.g\"=0.01},{\"model.num_modes\"=1,\"model.g\"=0.2},{\"model.num_modes\"=15,\"model.g\"=0.01},{\"model.num_modes\"=15,\"model.g\"=0.1}]",
            ],
            // finite-temperature decay rates
            "fig1b" => &[
                "task.kind=decay",
                "model.g=0.1",
                "task.sweep=[{\"state.beta\"=0.5},{\"state.beta\"=1.0}]",
            ],
            // per-mode energy transport at finite temperature
            "fig2" => &[
                "task.kind=energy",
                "task.engine=tdvp",
                "model.g=0.1",
                "state.beta=0.5",
                "task.t_max=10.0",
                "task.t_samples=100",
            ],
            // critical angles: squeezed scan at fixed tau (coarse phi grid)
            "fig3a" => &[
                "task.kind=angles",
                "state.r=0.3",
                "task.tau=0.1",
                "task.phi_points=32",
            ],
            // gamma/g^2 collapse across couplings
            "fig3b" => &[
                "task.kind=angles",
                "state.r=0.3",
                "task.tau=0.1",
                "task.phi_points=32",
                "task.sweep=[{\"model.g\"=0.01},{\"model.g\"=0.02},{\"model.g\"=0.1}]",
            ],
            // critical-angle shift: single mode vs multimode
            "fig3c" => &[
                "task.kind=angles",
                "state.r=0.3",
                "task.tau=0.1",
                "task.phi_points=32",
                "task.sweep=[{\"model.num_modes\"=1},{\"model.num_modes\"=15}]",
            ],
            // temperature trend of the decay rate at phi = pi/2
            "fig4a" => &[
                "task.kind=decay",
                "state.r=0.3",
                "state.phi=1.5707963267948966",
                "task.sweep=[{\"state.beta\"=\"inf\"},{\"state.beta\"=2.0},{\"state.beta\"=1.0},{\"state.beta\"=0.5}]",
            ],
            // temperature trend of the angle-scan modulation
            "fig4b" => &[
                "task.kind=angles",
                "state.r=0.3",
                "task.tau=0.1",
                "task.phi_points=32",
                "task.sweep=[{\"state.beta\"=\"inf\"},{\"state.beta\"=2.0},{\"state.beta\"=1.0},{\"state.beta\"=0.5}]",
            ],
            other => {
                return Err(Error::Config(format!(
                    "unknown preset '{other}' (expected fig1a, fig1b, fig2, fig3a, fig3b, fig3c, fig4a, fig4b)"
                )))
            }
        };
        cfg.apply_overrides(ov)?;
        Ok(cfg)
    }

    pub fn model_params(&self) -> Result<ModelParams> {
        ModelParams::new(self.model.delta, self.model.omega0, self.model.g, self.model.num_modes)
    }

    pub fn squeeze_thermal(&self) -> Result<SqueezeThermal> {
        SqueezeThermal::new(self.state.r, self.state.phi, self.state.beta.0)
    }

    pub fn numerics_config(&self) -> NumericsConfig {
        let n = &self.numerics;
        let dt = n.dt.unwrap_or_else(|| {
            if self.model.g > 0.0 {
                1e-3 / self.model.g
            } else {
                1e-3 / self.model.omega0
            }
        });
        NumericsConfig {
            n_max: n.n_max,
            d_max: n.d_max,
            dt,
            krylov_dim: n.krylov_dim,
            svd_cutoff: n.svd_cutoff,
            warmup_steps: n.warmup_steps,
            truncation_budget: n.truncation_budget,
            krylov_tol: n.krylov_tol,
            drop_fictitious_at_t0: n.drop_fictitious_at_t0,
            convention: if n.appendix_c_sign_convention {
                QuadConvention::AppendixTypo
            } else {
                QuadConvention::MainText
            },
        }
    }

    /// The τ grid this config requests.
    pub fn tau_grid(&self) -> Result<Vec<f64>> {
        if let Some(grid) = &self.task.tau_grid {
            return Ok(grid.clone());
        }
        let (max, step) = (self.task.tau_max, self.task.tau_step);
        if !(step > 0.0) || !(max >= step) {
            return Err(Error::Config(format!(
                "bad tau window: tau_step = {step}, tau_max = {max}"
            )));
        }
        let n = (max / step).round() as usize;
        Ok((1..=n).map(|k| k as f64 * step).collect())
    }

    /// Uniform sample times covering (0, t_max].
    pub fn time_grid(&self) -> Result<Vec<f64>> {
        let (max, n) = (self.task.t_max, self.task.t_samples);
        if !(max > 0.0) || n < 2 {
            return Err(Error::Config(format!(
                "bad time window: t_max = {max}, t_samples = {n}"
            )));
        }
        Ok((1..=n).map(|k| k as f64 * max / n as f64).collect())
    }

    /// Canonical TOML echo of the fully resolved configuration.
    pub fn resolved_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// SHA-256 of the resolved echo, embedded in every output file.
    pub fn hash(&self) -> Result<String> {
        let text = self.resolved_toml()?;
        Ok(hex::encode(Sha256::digest(text.as_bytes())))
    }

    /// Consistency checks that span blocks.
    pub fn validate(&self) -> Result<()> {
        self.model_params()?;
        self.squeeze_thermal()?;
        self.numerics_config().validate()?;
        self.tau_grid()?;
        self.time_grid()?;
        if self.task.phi_points < 8 {
            return Err(Error::Config(format!(
                "task.phi_points must be >= 8, got {}",
                self.task.phi_points
            )));
        }
        Ok(())
    }

    /// Configs for each sweep entry (the base config when the sweep is
    /// empty), overrides applied in order.
    pub fn sweep_points(&self) -> Result<Vec<RunConfig>> {
        if self.task.sweep.is_empty() {
            return Ok(vec![self.clone()]);
        }
        self.task
            .sweep
            .iter()
            .map(|entry| {
                let mut point = self.clone();
                point.task.sweep.clear();
                for (key, value) in entry {
                    let raw = toml::to_string(&toml::Value::Table({
                        let mut t = toml::value::Table::new();
                        t.insert("v".into(), value.clone());
                        t
                    }))
                    .map_err(|e| Error::Config(e.to_string()))?;
                    let raw = raw.trim_start_matches("v = ").trim();
                    point.apply_override(&format!("{key}={raw}"))?;
                }
                point.validate()?;
                Ok(point)
            })
            .collect()
    }
}

/// Parse a TOML scalar/array/table literal, falling back to a string.
fn parse_toml_value(raw: &str) -> toml::Value {
    #[derive(Deserialize)]
    struct Wrap {
        v: toml::Value,
    }
    match toml::from_str::<Wrap>(&format!("v = {raw}")) {
        Ok(w) => w.v,
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn defaults_match_reference_parameters() {
        let cfg = RunConfig::default();
        assert_eq!(cfg.model.num_modes, 15);
        assert_relative_eq!(cfg.model.delta, cfg.model.omega0);
        let nc = cfg.numerics_config();
        assert_eq!(nc.n_max, 80);
        assert_eq!(nc.d_max, 15);
        assert_relative_eq!(nc.dt * cfg.model.g, 1e-3, max_relative = 1e-12);
        cfg.validate().unwrap();
    }

    #[test]
    fn rejects_unknown_keys() {
        assert!(RunConfig::from_toml_str("[model]\nfrequency = 2.0\n").is_err());
        assert!(RunConfig::from_toml_str("[mystery]\nx = 1\n").is_err());
        assert!(RunConfig::from_toml_str("[numerics]\nnmax = 4\n").is_err());
    }

    #[test]
    fn parses_nested_blocks() {
        let cfg = RunConfig::from_toml_str(
            r#"
            [model]
            g = 0.05
            num_modes = 3

            [state]
            r = 0.3
            beta = 0.5

            [numerics]
            n_max = 20
            drop_fictitious_at_T0 = false

            [task]
            engine = "se"
            tau_max = 0.5
            "#,
        )
        .unwrap();
        assert_relative_eq!(cfg.model.g, 0.05);
        assert_eq!(cfg.state.beta, BetaValue(Beta::Finite(0.5)));
        assert_relative_eq!(cfg.state.r, 0.3);
        assert!(!cfg.numerics.drop_fictitious_at_t0);
        assert_eq!(cfg.task.engine, Engine::Se);
        assert_eq!(cfg.tau_grid().unwrap().len(), 50);
    }

    #[test]
    fn beta_inf_round_trip() {
        let cfg = RunConfig::from_toml_str("[state]\nbeta = \"inf\"\n").unwrap();
        assert_eq!(cfg.state.beta, BetaValue(Beta::Infinite));
        let echo = cfg.resolved_toml().unwrap();
        let back = RunConfig::from_toml_str(&echo).unwrap();
        assert_eq!(back, cfg);
        assert!(RunConfig::from_toml_str("[state]\nbeta = \"cold\"\n").is_err());
    }

    #[test]
    fn overrides_set_nested_keys() {
        let mut cfg = RunConfig::default();
        cfg.apply_override("model.g=0.02").unwrap();
        cfg.apply_override("state.beta=inf").unwrap();
        cfg.apply_override("task.engine=tdvp").unwrap();
        cfg.apply_override("numerics.d_max=8").unwrap();
        assert_relative_eq!(cfg.model.g, 0.02);
        assert_eq!(cfg.state.beta, BetaValue(Beta::Infinite));
        assert_eq!(cfg.task.engine, Engine::Tdvp);
        assert_eq!(cfg.numerics.d_max, 8);
    }

    #[test]
    fn overrides_reject_unknown_or_malformed() {
        let mut cfg = RunConfig::default();
        assert!(cfg.apply_override("model.gg=0.02").is_err());
        assert!(cfg.apply_override("model.g").is_err());
        assert!(cfg.apply_override("model.g=fast").is_err());
        // failed overrides must not corrupt the config
        assert_eq!(cfg, RunConfig::default());
    }

    #[test]
    fn hash_tracks_content() {
        let a = RunConfig::default();
        let mut b = RunConfig::default();
        assert_eq!(a.hash().unwrap(), b.hash().unwrap());
        b.apply_override("model.g=0.2").unwrap();
        assert_ne!(a.hash().unwrap(), b.hash().unwrap());
        assert_eq!(a.hash().unwrap().len(), 64);
    }

    #[test]
    fn echo_round_trips_exactly() {
        let mut cfg = RunConfig::preset("fig3b").unwrap();
        cfg.apply_override("task.engine=se").unwrap();
        let echo = cfg.resolved_toml().unwrap();
        let back = RunConfig::from_toml_str(&echo).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.hash().unwrap(), cfg.hash().unwrap());
    }

    #[test]
    fn presets_exist_and_validate() {
        for name in ["fig1a", "fig1b", "fig2", "fig3a", "fig3b", "fig3c", "fig4a", "fig4b"] {
            let cfg = RunConfig::preset(name).unwrap();
            cfg.validate().unwrap();
            for point in cfg.sweep_points().unwrap() {
                point.validate().unwrap();
            }
        }
        assert!(RunConfig::preset("fig9z").is_err());
    }

    #[test]
    fn fig1a_sweep_covers_four_curves() {
        let cfg = RunConfig::preset("fig1a").unwrap();
        let points = cfg.sweep_points().unwrap();
        assert_eq!(points.len(), 4);
        let combos: Vec<(usize, f64)> =
            points.iter().map(|p| (p.model.num_modes, p.model.g)).collect();
        assert!(combos.contains(&(1, 0.01)));
        assert!(combos.contains(&(1, 0.2)));
        assert!(combos.contains(&(15, 0.1)));
        for p in &points {
            assert_eq!(p.state.beta, BetaValue(Beta::Infinite));
        }
    }

    #[test]
    fn fig4a_sweeps_temperature() {
        let cfg = RunConfig::preset("fig4a").unwrap();
        let points = cfg.sweep_points().unwrap();
        assert_eq!(points.len(), 4);
        assert_eq!(points[0].state.beta, BetaValue(Beta::Infinite));
        assert_eq!(points[3].state.beta, BetaValue(Beta::Finite(0.5)));
        for p in &points {
            assert_relative_eq!(p.state.phi, std::f64::consts::FRAC_PI_2);
        }
    }

    #[test]
    fn tau_grid_matches_default_resolution() {
        let cfg = RunConfig::default();
        let grid = cfg.tau_grid().unwrap();
        assert_eq!(grid.len(), 100);
        assert_relative_eq!(grid[0], 0.01);
        assert_relative_eq!(grid[99], 1.0);
        // explicit grid wins
        let mut cfg = RunConfig::default();
        cfg.apply_override("task.tau_grid=[0.1, 0.2]").unwrap();
        assert_eq!(cfg.tau_grid().unwrap(), vec![0.1, 0.2]);
    }

    #[test]
    fn appendix_convention_flag_selects_typo_variant() {
        let mut cfg = RunConfig::default();
        cfg.apply_override("numerics.appendixC_sign_convention=true").unwrap();
        assert_eq!(cfg.numerics_config().convention, QuadConvention::AppendixTypo);
        assert_eq!(RunConfig::default().numerics_config().convention, QuadConvention::MainText);
    }
}
