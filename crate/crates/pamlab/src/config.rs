//! Experiment configuration: a sectioned key-value document
//! (`[experiment]`, `[model]`, `[params]`, `[lattice]`, `[run]`) parsed
//! into a fully validated [`ExperimentConfig`].
//!
//! Parsing reports *all* violations, not just the first, and unknown keys
//! are rejected by name. A validated config serializes back to text with
//! every default materialized, and the round trip is value-exact.

use serde::{Deserialize, Serialize};

use crate::catalysts::{CatalystKind, CatalystModel, SvmStart};
use crate::error::{Error, Result};
use crate::lattice::{KernelSpec, LatticeSpec};
use crate::moments::Estimator;
use crate::reactant::ModelParams;

/// Which experiment the orchestrator runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    /// Green constants `G_d`, `G_d^*` by both quadrature routes.
    Green,
    /// `kappa = 0` oracle against the closed form.
    Lambda0,
    /// A single annealed moment series.
    Moments,
    /// Lyapunov exponents over a kappa list (common random numbers).
    Sweep,
    /// Sweep plus classification against the predicted regime.
    Dichotomy,
    /// Variational constants `P_3`, `P_5` and profiles.
    Polaron,
    /// Monte Carlo vs the exact small-system master equation.
    OracleCheck,
}

impl ExperimentKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ExperimentKind::Green => "green",
            ExperimentKind::Lambda0 => "lambda0",
            ExperimentKind::Moments => "moments",
            ExperimentKind::Sweep => "sweep",
            ExperimentKind::Dichotomy => "dichotomy",
            ExperimentKind::Polaron => "polaron",
            ExperimentKind::OracleCheck => "oracle-check",
        }
    }
}

/// A validated experiment configuration. Every field is concrete (defaults
/// applied); [`ExperimentConfig::to_toml`] emits them all.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentSection,
    pub model: ModelSection,
    pub params: ParamsSection,
    pub lattice: LatticeSection,
    pub run: RunSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    pub kind: ExperimentKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    /// `isrw`, `sep` or `svm`.
    pub kind: String,
    pub rho: f64,
    /// `product` or `burned-in` (SVM only).
    pub svm_start: String,
    /// Burn-in duration when `svm_start = "burned-in"`; `0` means the
    /// side-squared default.
    pub svm_burn_time: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsSection {
    pub kappa: f64,
    pub gamma: f64,
    pub delta: f64,
    pub p: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatticeSection {
    pub d: usize,
    /// Torus side; `0` applies the diffusive-spread policy
    /// [`recommended_side`].
    pub side: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub t_grid: Vec<f64>,
    pub kappa_list: Vec<f64>,
    pub n_reps: usize,
    pub seed: u64,
    /// `pde-ensemble` or `fk-dual`.
    pub estimator: String,
    pub out_dir: String,
    /// Burn-in override for exponent fits; `0` means the `1/gamma` default.
    pub fit_burn_in: f64,
}

/// Torus-side policy: both the walk and the catalyst spread diffusively,
/// so `L >= 6 ceil(sqrt(max(1, 2 d kappa) T)) + margin`. Headline runs
/// are rerun at `1.5 L` to confirm stability.
pub fn recommended_side(d: usize, kappa: f64, horizon: f64, range_margin: usize) -> usize {
    let spread = (1.0f64.max(2.0 * d as f64 * kappa) * horizon).sqrt();
    6 * spread.ceil() as usize + range_margin.max(2)
}

const MODEL_KINDS: [&str; 3] = ["isrw", "sep", "svm"];
const SVM_STARTS: [&str; 2] = ["product", "burned-in"];
const ESTIMATORS: [&str; 2] = ["pde-ensemble", "fk-dual"];

impl ExperimentConfig {
    /// Parse and validate a config document, collecting every violation.
    pub fn parse(text: &str) -> Result<ExperimentConfig> {
        let value: toml::Value = toml::from_str(text)
            .map_err(|e| Error::ConfigInvalid(vec![format!("syntax: {e}")]))?;
        let mut violations = unknown_key_scan(&value);
        let merged = apply_defaults(&value, &mut violations);
        if !violations.is_empty() {
            return Err(Error::ConfigInvalid(violations));
        }
        let cfg: ExperimentConfig = merged
            .try_into()
            .map_err(|e| Error::ConfigInvalid(vec![format!("structure: {e}")]))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Serialize with all defaults materialized; `parse` of the output
    /// reproduces the config exactly.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Check every field against the module preconditions; returns the
    /// full list of violations.
    pub fn validate(&self) -> Result<()> {
        let mut v = Vec::new();
        if !MODEL_KINDS.contains(&self.model.kind.as_str()) {
            v.push(format!(
                "[model] kind '{}' unknown; expected one of {MODEL_KINDS:?}",
                self.model.kind
            ));
        }
        match self.model.kind.as_str() {
            "isrw" => {
                if !(self.model.rho > 0.0 && self.model.rho.is_finite()) {
                    v.push("rho in (0, inf) required for ISRW".into());
                }
            }
            "sep" => {
                if !(self.model.rho > 0.0 && self.model.rho < 1.0) {
                    v.push("rho in (0,1) required for SEP".into());
                }
            }
            "svm" => {
                if !(self.model.rho > 0.0 && self.model.rho < 1.0) {
                    v.push("rho in (0,1) required for SVM".into());
                }
            }
            _ => {}
        }
        if !SVM_STARTS.contains(&self.model.svm_start.as_str()) {
            v.push(format!(
                "[model] svm_start '{}' unknown; expected one of {SVM_STARTS:?}",
                self.model.svm_start
            ));
        }
        if self.model.svm_burn_time < 0.0 {
            v.push("svm_burn_time must be >= 0".into());
        }
        if !(self.params.kappa >= 0.0 && self.params.kappa.is_finite()) {
            v.push("kappa must be finite and >= 0".into());
        }
        if !(self.params.gamma >= 0.0 && self.params.gamma.is_finite()) {
            v.push("gamma must be finite and >= 0".into());
        }
        if !(self.params.delta >= 0.0 && self.params.delta.is_finite()) {
            v.push("delta must be finite and >= 0".into());
        }
        if self.params.p < 1 {
            v.push("moment order p must be >= 1".into());
        }
        if self.lattice.d < 1 {
            v.push("lattice dimension d must be >= 1".into());
        }
        if self.lattice.side == 1 {
            v.push("torus side must be >= 2 (or 0 for the policy default)".into());
        }
        for w in self.run.t_grid.windows(2) {
            if w[1] <= w[0] {
                v.push("t_grid must be strictly increasing".into());
                break;
            }
        }
        if self.run.t_grid.iter().any(|&t| t < 0.0) {
            v.push("t_grid times must be >= 0".into());
        }
        for w in self.run.kappa_list.windows(2) {
            if w[1] <= w[0] {
                v.push("kappa_list must be strictly increasing".into());
                break;
            }
        }
        if self.run.kappa_list.iter().any(|&k| k < 0.0) {
            v.push("kappa_list entries must be >= 0".into());
        }
        if !ESTIMATORS.contains(&self.run.estimator.as_str()) {
            v.push(format!(
                "[run] estimator '{}' unknown; expected one of {ESTIMATORS:?}",
                self.run.estimator
            ));
        }
        let needs_ensembles = matches!(
            self.experiment.kind,
            ExperimentKind::Moments
                | ExperimentKind::Sweep
                | ExperimentKind::Dichotomy
                | ExperimentKind::OracleCheck
        );
        if needs_ensembles {
            if self.run.n_reps < 2 {
                v.push("n_reps must be >= 2 for ensemble experiments".into());
            }
            if self.run.t_grid.is_empty() {
                v.push("t_grid must be non-empty for ensemble experiments".into());
            }
        }
        if matches!(
            self.experiment.kind,
            ExperimentKind::Sweep | ExperimentKind::Dichotomy
        ) && self.run.kappa_list.is_empty()
        {
            v.push("kappa_list must be non-empty for sweep experiments".into());
        }
        if self.run.fit_burn_in < 0.0 {
            v.push("fit_burn_in must be >= 0".into());
        }
        if self.run.seed > i64::MAX as u64 {
            // the document format stores integers as i64
            v.push(format!("seed must be <= {} (document integer range)", i64::MAX));
        }
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::ConfigInvalid(v))
        }
    }

    /// The horizon of the configured time grid (0 when empty).
    pub fn horizon(&self) -> f64 {
        self.run.t_grid.last().copied().unwrap_or(0.0)
    }

    /// Concrete torus side: the configured one, or the policy default.
    pub fn effective_side(&self) -> usize {
        if self.lattice.side >= 2 {
            self.lattice.side
        } else {
            let kappa_max = self
                .run
                .kappa_list
                .iter()
                .copied()
                .fold(self.params.kappa, f64::max);
            recommended_side(self.lattice.d, kappa_max, self.horizon().max(1.0), 2)
        }
    }

    pub fn lattice_spec(&self) -> Result<LatticeSpec> {
        LatticeSpec::new(self.lattice.d, self.effective_side())
    }

    pub fn catalyst_model(&self) -> Result<CatalystModel> {
        let kernel = KernelSpec::simple_random_walk(self.lattice.d);
        match self.model.kind.as_str() {
            "isrw" => CatalystModel::isrw(self.model.rho),
            "sep" => CatalystModel::sep(self.model.rho, kernel),
            "svm" => {
                let start = match self.model.svm_start.as_str() {
                    "burned-in" => {
                        let burn = if self.model.svm_burn_time > 0.0 {
                            self.model.svm_burn_time
                        } else {
                            let side = self.effective_side() as f64;
                            side * side
                        };
                        SvmStart::BurnedIn { burn_time: burn }
                    }
                    _ => SvmStart::Product,
                };
                CatalystModel::svm(self.model.rho, kernel, start)
            }
            other => Err(Error::invalid(format!("unknown model kind {other}"))),
        }
    }

    pub fn model_params(&self) -> Result<ModelParams> {
        ModelParams::new(
            self.params.kappa,
            self.params.gamma,
            self.model.rho,
            self.params.delta,
            self.params.p,
        )
    }

    pub fn estimator(&self) -> Estimator {
        match self.run.estimator.as_str() {
            "fk-dual" => Estimator::FkDual,
            _ => Estimator::PdeEnsemble,
        }
    }

    pub fn catalyst_kind(&self) -> CatalystKind {
        match self.model.kind.as_str() {
            "isrw" => CatalystKind::Isrw,
            "sep" => CatalystKind::Sep,
            _ => CatalystKind::Svm,
        }
    }
}

/// Reject keys outside the documented schema, naming each offender.
fn unknown_key_scan(value: &toml::Value) -> Vec<String> {
    const SECTIONS: [(&str, &[&str]); 5] = [
        ("experiment", &["kind"]),
        ("model", &["kind", "rho", "svm_start", "svm_burn_time"]),
        ("params", &["kappa", "gamma", "delta", "p"]),
        ("lattice", &["d", "side"]),
        (
            "run",
            &[
                "t_grid",
                "kappa_list",
                "n_reps",
                "seed",
                "estimator",
                "out_dir",
                "fit_burn_in",
            ],
        ),
    ];
    let mut out = Vec::new();
    let Some(table) = value.as_table() else {
        return vec!["document root must be a table".into()];
    };
    for (section, entry) in table {
        match SECTIONS.iter().find(|(name, _)| name == section) {
            None => out.push(format!("unknown section [{section}]")),
            Some((_, keys)) => {
                if let Some(t) = entry.as_table() {
                    for key in t.keys() {
                        if !keys.contains(&key.as_str()) {
                            out.push(format!("unknown key '{key}' in [{section}]"));
                        }
                    }
                } else {
                    out.push(format!("[{section}] must be a table"));
                }
            }
        }
    }
    if !table.contains_key("experiment")
        || !table["experiment"]
            .as_table()
            .is_some_and(|t| t.contains_key("kind"))
    {
        out.push("missing required key 'kind' in [experiment]".into());
    }
    out
}

/// Fill the documented defaults into a parsed TOML tree.
fn apply_defaults(value: &toml::Value, violations: &mut Vec<String>) -> toml::Value {
    use toml::Value as V;
    let mut root = value.as_table().cloned().unwrap_or_default();
    let defaults: [(&str, &[(&str, V)]); 5] = [
        ("experiment", &[]),
        (
            "model",
            &[
                ("kind", V::String("isrw".into())),
                ("rho", V::Float(1.0)),
                ("svm_start", V::String("product".into())),
                ("svm_burn_time", V::Float(0.0)),
            ],
        ),
        (
            "params",
            &[
                ("kappa", V::Float(0.5)),
                ("gamma", V::Float(0.2)),
                ("delta", V::Float(0.0)),
                ("p", V::Integer(1)),
            ],
        ),
        (
            "lattice",
            &[("d", V::Integer(3)), ("side", V::Integer(0))],
        ),
        (
            "run",
            &[
                ("t_grid", V::Array(vec![])),
                ("kappa_list", V::Array(vec![])),
                ("n_reps", V::Integer(200)),
                ("seed", V::Integer(1)),
                ("estimator", V::String("fk-dual".into())),
                ("out_dir", V::String("out".into())),
                ("fit_burn_in", V::Float(0.0)),
            ],
        ),
    ];
    for (section, keys) in defaults {
        let entry = root
            .entry(section.to_string())
            .or_insert_with(|| V::Table(Default::default()));
        let Some(t) = entry.as_table_mut() else {
            continue;
        };
        for (key, default) in keys {
            if let Some(existing) = t.get(*key) {
                // accept integers where floats are expected
                if matches!(default, V::Float(_)) {
                    if let Some(i) = existing.as_integer() {
                        t.insert(key.to_string(), V::Float(i as f64));
                    } else if existing.as_float().is_none() {
                        violations.push(format!("key '{key}' in [{section}] must be a number"));
                    }
                }
            } else {
                t.insert(key.to_string(), default.clone());
            }
        }
    }
    V::Table(root)
}
