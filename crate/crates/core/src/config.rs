//! Run configuration read from TOML (or from the JSON embedded in a report).

use crate::envelope::{DecayEnvelope, EnvelopeKind, PerturbationPhase};
use crate::error::{Error, Result};
use crate::stochastic::{InitialSampling, SdeScheme};
use crate::systems::{Duffing, DuffingParams, Example1, Example1Params, PerturbedSystem};
use crate::trigpoly::MAX_ORDER;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub system: SystemConfig,
    #[serde(default)]
    pub envelope: EnvelopeConfig,
    #[serde(default)]
    pub phase: PhaseConfig,
    #[serde(default)]
    pub averaging: AveragingConfig,
    #[serde(default)]
    pub integration: IntegrationConfig,
    #[serde(default)]
    pub monte_carlo: MonteCarloConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SystemName {
    Example1,
    Duffing,
}

/// Model parameters; the accepted keys depend on `name`.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum SystemParams {
    Example1(Example1Params),
    Duffing(DuffingParams),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SystemConfig {
    pub name: SystemName,
    #[serde(default)]
    pub params: Option<toml::Table>,
    pub n: Option<u32>,
    pub p: u32,
    pub kappa: u32,
    pub varkappa: u32,
    pub epsilon: f64,
}

impl Default for SystemConfig {
    fn default() -> Self {
        Self {
            name: SystemName::Example1,
            params: None,
            n: None,
            p: 1,
            kappa: 1,
            varkappa: 1,
            epsilon: 0.1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvelopeFamily {
    Power,
    PowerLog,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvelopeConfig {
    pub kind: EnvelopeFamily,
    pub q: u32,
    pub tau0: Option<f64>,
}

impl Default for EnvelopeConfig {
    fn default() -> Self {
        Self {
            kind: EnvelopeFamily::PowerLog,
            q: 2,
            tau0: Some(10.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhaseConfig {
    pub s0: f64,
    #[serde(default)]
    pub s: Vec<f64>,
    /// Reference time of `S`; defaults to the envelope's `tau0`.
    pub t0: Option<f64>,
}

impl Default for PhaseConfig {
    fn default() -> Self {
        Self {
            s0: 0.5,
            s: vec![],
            t0: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AveragingConfig {
    pub order: usize,
    /// Points of the `lambda(psi)` table.
    pub table_points: usize,
}

impl Default for AveragingConfig {
    fn default() -> Self {
        Self {
            order: 4,
            table_points: 361,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IntegrationConfig {
    /// Start time; defaults to the phase reference time.
    pub t0: Option<f64>,
    pub t_end: f64,
    /// Step; defaults to `1e-3 (2 pi / s0)`.
    pub dt: Option<f64>,
    /// Initial amplitude; defaults to the resonant amplitude.
    pub r: Option<f64>,
    pub phi: f64,
    /// Initial resonance phase `phi - kappa S(t0) / varkappa`; overrides `phi`.
    pub psi: Option<f64>,
    pub n_paths: usize,
    pub record_stride: usize,
    pub scheme: SdeScheme,
}

impl Default for IntegrationConfig {
    fn default() -> Self {
        Self {
            t0: None,
            t_end: 200.0,
            dt: None,
            r: None,
            phi: 0.0,
            psi: None,
            n_paths: 1,
            record_stride: 100,
            scheme: SdeScheme::EulerMaruyama,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MonteCarloConfig {
    pub n_paths: usize,
    pub delta1: f64,
    pub eps2: f64,
    pub l: f64,
    /// Start of the capture window; defaults to the phase reference time.
    pub t_star: Option<f64>,
    /// Fixed window length; when absent the window is `T_eps` from `l`.
    pub horizon: Option<f64>,
    pub t_max: f64,
    pub seed: u64,
    pub sampling: InitialSampling,
    pub near_identity: bool,
    pub workers: Option<usize>,
}

impl Default for MonteCarloConfig {
    fn default() -> Self {
        Self {
            n_paths: 200,
            delta1: 0.2,
            eps2: 1.0,
            l: 0.5,
            t_star: None,
            horizon: None,
            t_max: 1e4,
            seed: 0,
            sampling: InitialSampling::Ball,
            near_identity: false,
            workers: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub directory: PathBuf,
    /// Emit the `nu(r)` table next to the resonance report.
    pub nu_table: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            directory: PathBuf::from("out"),
            nu_table: true,
        }
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Accepts a bare configuration or a report with a `config` field.
    pub fn from_json_str(text: &str) -> Result<Self> {
        let mut v: serde_json::Value =
            serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        if let Some(inner) = v.get_mut("config") {
            v = inner.take();
        }
        let cfg: Self = serde_json::from_value(v).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        match path.extension().and_then(|e| e.to_str()) {
            Some("json") => Self::from_json_str(&text),
            _ => Self::from_toml_str(&text),
        }
    }

    /// Checks every block before any computation starts.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        self.params()?;
        let sys = &self.system;
        if !(sys.epsilon.is_finite() && sys.epsilon >= 0.0) {
            return bad("system.epsilon must be finite and nonnegative".into());
        }
        if sys.p == 0 || sys.kappa == 0 || sys.varkappa == 0 {
            return bad("system.p, system.kappa and system.varkappa must be positive".into());
        }
        match (sys.name, sys.n) {
            (SystemName::Example1, Some(n)) if n != 2 => {
                return bad("example1 has drift order n = 2".into())
            }
            (_, Some(0)) => return bad("system.n must be positive".into()),
            _ => {}
        }
        if self.envelope.q == 0 {
            return bad("envelope.q must be positive".into());
        }
        if !(self.phase.s0.is_finite() && self.phase.s0 > 0.0) {
            return bad("phase.s0 must be positive".into());
        }
        let a = &self.averaging;
        if a.order == 0 || a.order > MAX_ORDER {
            return bad(format!("averaging.order must lie in 1..={MAX_ORDER}"));
        }
        if a.table_points < 2 {
            return bad("averaging.table_points must be at least 2".into());
        }
        let ig = &self.integration;
        if ig.dt.is_some_and(|d| !(d > 0.0 && d.is_finite())) {
            return bad("integration.dt must be positive".into());
        }
        if ig.n_paths == 0 {
            return bad("integration.n_paths must be at least 1".into());
        }
        if !ig.t_end.is_finite() {
            return bad("integration.t_end must be finite".into());
        }
        let mc = &self.monte_carlo;
        if mc.n_paths == 0 {
            return bad("monte_carlo.n_paths must be at least 1".into());
        }
        if !(mc.delta1 > 0.0 && mc.eps2 > 0.0) {
            return bad("monte_carlo.delta1 and monte_carlo.eps2 must be positive".into());
        }
        if !(mc.l > 0.0 && mc.l < 1.0) {
            return bad("monte_carlo.l must lie in (0, 1)".into());
        }
        if mc.horizon.is_some_and(|h| !(h > 0.0 && h.is_finite())) {
            return bad("monte_carlo.horizon must be positive".into());
        }
        if !(mc.t_max > 0.0) {
            return bad("monte_carlo.t_max must be positive".into());
        }
        if mc.workers == Some(0) {
            return bad("monte_carlo.workers must be at least 1".into());
        }
        Ok(())
    }

    /// Typed model parameters; missing keys take the defaults of the model.
    pub fn params(&self) -> Result<SystemParams> {
        let user: toml::Table = self
            .system
            .params
            .iter()
            .flatten()
            .map(|(k, v)| match v {
                toml::Value::Integer(i) => (k.clone(), toml::Value::Float(*i as f64)),
                other => (k.clone(), other.clone()),
            })
            .collect();
        fn merge<T: Serialize + serde::de::DeserializeOwned>(
            base: T,
            user: toml::Table,
        ) -> Result<T> {
            let mut merged =
                toml::Table::try_from(base).map_err(|e| Error::Config(e.to_string()))?;
            merged.extend(user);
            merged.try_into().map_err(|e: toml::de::Error| {
                Error::Config(format!("system.params: {}", e.message()))
            })
        }
        Ok(match self.system.name {
            SystemName::Example1 => SystemParams::Example1(merge(Example1Params::default(), user)?),
            SystemName::Duffing => SystemParams::Duffing(merge(DuffingParams::default(), user)?),
        })
    }

    pub fn build_envelope(&self) -> Result<DecayEnvelope> {
        let q = self.envelope.q;
        let kind = match self.envelope.kind {
            EnvelopeFamily::Power => EnvelopeKind::Power { q },
            EnvelopeFamily::PowerLog => EnvelopeKind::PowerLog { q },
        };
        DecayEnvelope::new(kind, self.envelope.tau0)
    }

    pub fn build_phase(&self) -> Result<PerturbationPhase> {
        let env = self.build_envelope()?;
        let t0 = self.phase.t0.unwrap_or(env.tau0());
        PerturbationPhase::new(self.phase.s0, self.phase.s.clone(), env, t0)
    }

    pub fn build_system(&self) -> Result<Box<dyn PerturbedSystem>> {
        let sys = &self.system;
        let phase = self.build_phase()?;
        Ok(match self.params()? {
            SystemParams::Example1(p) => Box::new(Example1::new(
                p,
                sys.epsilon,
                sys.p,
                sys.kappa,
                sys.varkappa,
                phase,
            )?),
            SystemParams::Duffing(p) => Box::new(Duffing::new(
                p,
                sys.epsilon,
                sys.n.unwrap_or(2),
                sys.p,
                sys.kappa,
                sys.varkappa,
                phase,
            )?),
        })
    }

    /// Copy with every optional entry filled by the value actually used.
    pub fn resolved(&self) -> Result<Self> {
        let mut out = self.clone();
        let phase = self.build_phase()?;
        let sys = self.build_system()?;
        out.envelope.tau0 = Some(phase.envelope.tau0());
        out.phase.t0 = Some(phase.t0);
        if out.system.n.is_none() {
            out.system.n = Some(sys.resonance().n);
        }
        let typed = match self.params()? {
            SystemParams::Example1(p) => toml::Table::try_from(p),
            SystemParams::Duffing(p) => toml::Table::try_from(p),
        };
        out.system.params = Some(typed.map_err(|e| Error::Config(e.to_string()))?);
        let ig = &mut out.integration;
        ig.t0 = Some(ig.t0.unwrap_or(phase.t0));
        ig.dt = Some(ig.dt.unwrap_or(crate::stochastic::default_dt(sys.as_ref())));
        ig.r = Some(ig.r.unwrap_or(sys.resonance().r0));
        out.monte_carlo.t_star = Some(out.monte_carlo.t_star.unwrap_or(phase.t0));
        Ok(out)
    }
}
