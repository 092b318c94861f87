//! Study configuration: TOML (or JSON) in, fully explicit TOML out.

use grazing_core::boltzmann::EvalConfig;
use grazing_core::field::{Poly, SmoothField};
use grazing_core::linearized::GalerkinConfig;
use grazing_core::{KernelParams, SmoothCutoff, Vec3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::path::Path;

pub const KINDS: [&str; 6] = ["eval", "conserve", "grazing", "spectrum", "relax", "identities"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StudyKind {
    Eval,
    Conserve,
    Grazing,
    Spectrum,
    Relax,
    Identities,
}

impl fmt::Display for StudyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let i = *self as usize;
        f.write_str(KINDS[i])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyConfig {
    pub kind: StudyKind,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub kernel: KernelSection,
    #[serde(default)]
    pub fields: FieldsSection,
    #[serde(default)]
    pub points: PointsSection,
    #[serde(default)]
    pub sweep: SweepSection,
    #[serde(default)]
    pub quadrature: EvalConfig,
    #[serde(default)]
    pub galerkin: GalerkinSection,
    #[serde(default)]
    pub relax: RelaxSection,
    #[serde(default)]
    pub identities: IdentitiesSection,
    #[serde(default)]
    pub thresholds: Thresholds,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KernelSection {
    pub s: f64,
    pub gamma: f64,
    pub eta: f64,
    pub cutoff: SmoothCutoff,
}

impl Default for KernelSection {
    fn default() -> Self {
        KernelSection { s: 0.5, gamma: 0.0, eta: 1.0, cutoff: SmoothCutoff::Exponential }
    }
}

impl KernelSection {
    pub fn params(&self) -> grazing_core::Result<KernelParams> {
        Ok(KernelParams::operator(self.s, self.gamma, self.eta)?.with_cutoff(self.cutoff))
    }
}

/// The pair (g, h); Q(g, h) is what gets evaluated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FieldsSection {
    pub g: SmoothField,
    pub h: SmoothField,
}

impl Default for FieldsSection {
    fn default() -> Self {
        let g = SmoothField::gaussian(1.0, Poly::constant(1.0), 0.5, Vec3::new(0.2, 0.0, 0.0)).expect("valid default");
        let h = SmoothField::gaussian(1.0, Poly::from_pairs(&[([0, 0, 0], 1.0), ([0, 1, 0], 0.4)]).expect("valid default"), 0.7, Vec3::new(0.0, 0.0, 0.3))
            .expect("valid default");
        FieldsSection { g, h }
    }
}

/// Explicit sample points, topped up to `count` with seeded draws in a ball.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PointsSection {
    pub list: Vec<[f64; 3]>,
    pub count: usize,
    pub radius: f64,
}

impl Default for PointsSection {
    fn default() -> Self {
        PointsSection { list: vec![[0.3, -0.4, 0.5], [1.0, 0.2, -0.3], [-0.6, 0.8, 0.1]], count: 3, radius: 1.5 }
    }
}

impl PointsSection {
    pub fn resolve(&self, seed: u64) -> Vec<Vec3> {
        let mut out: Vec<Vec3> = self.list.iter().map(|p| Vec3::from(*p)).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        while out.len() < self.count {
            let p = Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            if p.norm() <= 1.0 {
                out.push(self.radius * p);
            }
        }
        out
    }
}

/// Empty lists take the study default when the config is resolved.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub s: Vec<f64>,
    pub gamma: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GalerkinSection {
    pub degree: u32,
    pub rules: GalerkinConfig,
}

impl Default for GalerkinSection {
    fn default() -> Self {
        GalerkinSection { degree: 4, rules: GalerkinConfig::default() }
    }
}

/// Times are in units of 1/λ̂.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RelaxSection {
    pub t_end: f64,
    pub dt: f64,
    pub sample_every: usize,
    pub grid_points: usize,
    pub grid_half: f64,
    /// ‖f₀‖ of the seeded initial perturbation
    pub amplitude: f64,
    /// ‖f₀‖ for the linear-regime decay run
    pub decay_amplitude: f64,
    pub decay_window: [f64; 2],
    pub order_t_end: f64,
    pub order_dt: f64,
}

impl Default for RelaxSection {
    fn default() -> Self {
        RelaxSection {
            t_end: 5.0,
            dt: 1e-2,
            sample_every: 10,
            grid_points: 9,
            grid_half: 3.0,
            amplitude: 5e-3,
            decay_amplitude: 1e-3,
            decay_window: [1.0, 2.0],
            order_t_end: 2.0,
            order_dt: 0.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IdentitiesSection {
    pub samples: usize,
}

impl Default for IdentitiesSection {
    fn default() -> Self {
        IdentitiesSection { samples: 20 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Thresholds {
    pub identity_rel: f64,
    pub conservation_rel: f64,
    /// sup|Q(μ, μ)| ≤ factor × quadrature tolerance
    pub equilibrium_factor: f64,
    pub slope_min: f64,
    pub fit_residual_max: f64,
    pub kernel_rel: f64,
    pub quotient_rel: f64,
    pub drift_max: f64,
    pub decay_rel: f64,
    pub order_min: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds {
            identity_rel: 1e-8,
            conservation_rel: 1e-6,
            equilibrium_factor: 10.0,
            slope_min: 0.9,
            fit_residual_max: 0.1,
            kernel_rel: 1e-4,
            quotient_rel: 1e-2,
            drift_max: 1e-8,
            decay_rel: 0.1,
            order_min: 3.7,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: String,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection { dir: "out".into() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "config error: {}", self.0)
    }
}

impl std::error::Error for ConfigError {}

fn err(msg: impl Into<String>) -> ConfigError {
    ConfigError(msg.into())
}

/// Parses TOML, or JSON when the text starts with `{` or the file ends in .json.
pub fn parse_text(text: &str, json: bool) -> Result<toml::Table, ConfigError> {
    if json || text.trim_start().starts_with('{') {
        let mut v: serde_json::Value = serde_json::from_str(text).map_err(|e| err(format!("JSON: {e}")))?;
        drop_nulls(&mut v);
        match toml::Value::try_from(v).map_err(|e| err(format!("JSON: {e}")))? {
            toml::Value::Table(t) => Ok(t),
            _ => Err(err("top level must be an object")),
        }
    } else {
        text.parse::<toml::Table>().map_err(|e| err(format!("TOML: {e}")))
    }
}

/// TOML has no null; a JSON null means the key is absent.
fn drop_nulls(v: &mut serde_json::Value) {
    match v {
        serde_json::Value::Object(m) => {
            m.retain(|_, x| !x.is_null());
            m.values_mut().for_each(drop_nulls);
        }
        serde_json::Value::Array(a) => a.iter_mut().for_each(drop_nulls),
        _ => {}
    }
}

/// `key.path=value`; the value is read as a TOML value, falling back to a bare string.
pub fn apply_override(table: &mut toml::Table, spec: &str) -> Result<(), ConfigError> {
    let (key, raw) = spec.split_once('=').ok_or_else(|| err(format!("override `{spec}` is not key=value")))?;
    let key = key.trim();
    let value = match format!("v = {}", raw.trim()).parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("parsed key"),
        Err(_) => toml::Value::String(raw.trim().to_string()),
    };
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(err(format!("bad override key `{key}`")));
    }
    let mut cur = table;
    for p in &parts[..parts.len() - 1] {
        let next = cur.entry(p.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = next.as_table_mut().ok_or_else(|| err(format!("override `{key}`: `{p}` is not a section")))?;
    }
    cur.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

pub fn from_table(table: toml::Table) -> Result<StudyConfig, ConfigError> {
    if let Some(k) = table.get("kind") {
        let name = k.as_str().ok_or_else(|| err("`kind` must be a string"))?;
        if !KINDS.contains(&name) {
            return Err(err(format!("unknown study kind `{name}`; valid kinds: {}", KINDS.join(", "))));
        }
    } else {
        return Err(err(format!("missing `kind`; valid kinds: {}", KINDS.join(", "))));
    }
    let cfg: StudyConfig = toml::Value::Table(table).try_into().map_err(|e: toml::de::Error| err(e.message().to_string()))?;
    cfg.resolve()
}

pub fn load(path: &Path, overrides: &[String]) -> Result<StudyConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| err(format!("cannot read {}: {e}", path.display())))?;
    let json = path.extension().is_some_and(|e| e == "json");
    let mut table = parse_text(&text, json)?;
    for o in overrides {
        apply_override(&mut table, o)?;
    }
    from_table(table)
}

impl StudyConfig {
    /// Fills kind-specific defaults and validates; the result has every value explicit.
    pub fn resolve(mut self) -> Result<StudyConfig, ConfigError> {
        if self.sweep.s.is_empty() {
            self.sweep.s = match self.kind {
                StudyKind::Grazing => vec![0.75, 0.875, 0.9375, 0.96875],
                StudyKind::Spectrum => vec![0.3, 0.5, 0.7, 0.9],
                StudyKind::Relax => vec![0.75, 0.875, 0.9375],
                _ => vec![self.kernel.s],
            };
        }
        if self.sweep.gamma.is_empty() {
            self.sweep.gamma = match self.kind {
                StudyKind::Grazing => vec![0.0, -2.0],
                _ => vec![self.kernel.gamma],
            };
        }
        if self.points.count < self.points.list.len() {
            self.points.count = self.points.list.len();
        }
        if self.kind == StudyKind::Conserve {
            self.points.count = self.points.count.max(10);
        }
        self.validate()?;
        Ok(self)
    }

    fn validate(&self) -> Result<(), ConfigError> {
        self.kernel.params().map_err(|e| err(format!("kernel: {e}")))?;
        for f in [&self.fields.g, &self.fields.h] {
            SmoothField::new(f.terms.clone()).map_err(|e| err(format!("fields: {e}")))?;
        }
        if self.fields.g.terms.is_empty() || self.fields.h.terms.is_empty() {
            return Err(err("fields: g and h need at least one term"));
        }
        if self.points.radius.is_nan() || self.points.radius <= 0.0 || self.points.count == 0 {
            return Err(err("points: need count ≥ 1 and radius > 0"));
        }
        if self.sweep.s.iter().any(|&s| !(s > 0.0 && s < 1.0)) {
            return Err(err("sweep.s values must lie in (0, 1)"));
        }
        if self.sweep.gamma.iter().any(|&g| !(g > -5.0 && g <= 0.0)) {
            return Err(err("sweep.gamma values must lie in (-5, 0]"));
        }
        self.quadrature.validate(&self.kernel.params().expect("checked")).map_err(|e| err(format!("quadrature: {e}")))?;
        let r = &self.relax;
        if !(r.t_end > 0.0 && r.dt > 0.0 && r.order_t_end > 0.0 && r.order_dt > 0.0 && r.amplitude > 0.0 && r.decay_amplitude > 0.0) {
            return Err(err("relax: times and amplitudes must be positive"));
        }
        if !(r.decay_window[0] >= 0.0 && r.decay_window[1] > r.decay_window[0]) {
            return Err(err("relax.decay_window must be increasing"));
        }
        if self.identities.samples == 0 {
            return Err(err("identities.samples must be positive"));
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}
