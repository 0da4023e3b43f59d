//! Experiment configuration: JSON with unknown keys rejected and the model,
//! periodization and right-hand side checked for consistency at load.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use usfft::detect::{AlgoA, DetectionConfig};
use usfft::pde::{LinearSolver, Mesh, ModelKind, PdeModel, Rhs};
use usfft::periodize::DEFAULT_SHIFT_LATTICE_SIZE;
use usfft::{CandidateGrid, Periodization};

use crate::CliError;

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelConfig,
    #[serde(default)]
    pub mesh: MeshConfig,
    pub detection: DetectionSettings,
    #[serde(default)]
    pub periodization: Option<PeriodizationConfig>,
    #[serde(default)]
    pub post: PostConfig,
    #[serde(default)]
    pub output: Option<PathBuf>,
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub kind: String,
    pub d_y: usize,
    #[serde(default)]
    pub mu: Option<f64>,
    #[serde(default)]
    pub c: Option<f64>,
    #[serde(default)]
    pub rhs: Option<String>,
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct MeshConfig {
    #[serde(default = "default_mesh_n")]
    pub n: usize,
    #[serde(default = "default_solver")]
    pub solver: String,
}

fn default_mesh_n() -> usize {
    16
}

fn default_solver() -> String {
    "cholesky".into()
}

impl Default for MeshConfig {
    fn default() -> Self {
        MeshConfig {
            n: default_mesh_n(),
            solver: default_solver(),
        }
    }
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct DetectionSettings {
    #[serde(rename = "N")]
    pub n: u32,
    pub s: usize,
    #[serde(default)]
    pub s_local: Option<usize>,
    #[serde(default = "default_theta")]
    pub theta: f64,
    #[serde(default = "default_r")]
    pub r: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_algo")]
    pub algo_a: String,
}

fn default_theta() -> f64 {
    1e-12
}

fn default_r() -> usize {
    5
}

fn default_algo() -> String {
    "single_r1l".into()
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct PeriodizationConfig {
    pub kind: String,
    #[serde(default)]
    pub alpha: Option<f64>,
    #[serde(default)]
    pub beta: Option<f64>,
    /// `M₀` in `Δ = 1/(4M₀)` for the lognormal map.
    #[serde(default)]
    pub shift_lattice_size: Option<u64>,
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct PostConfig {
    #[serde(default = "default_n_test")]
    pub n_test: usize,
    /// Monte-Carlo comparison size; `0` skips it.
    #[serde(default)]
    pub n_mc: usize,
}

fn default_n_test() -> usize {
    1000
}

impl Default for PostConfig {
    fn default() -> Self {
        PostConfig {
            n_test: default_n_test(),
            n_mc: 0,
        }
    }
}

/// A configuration resolved into library types.
#[derive(Clone, Debug)]
pub struct Resolved {
    pub model: PdeModel,
    pub mesh: Mesh,
    pub solver: LinearSolver,
    pub periodization: Periodization,
    pub detection: DetectionConfig,
    pub n_test: usize,
    pub n_mc: usize,
    pub output: Option<PathBuf>,
    /// SHA-256 of the configuration file bytes.
    pub sha256: String,
}

fn field(name: &str, msg: impl std::fmt::Display) -> CliError {
    CliError::Validation(format!("{name}: {msg}"))
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Validation(format!("config: {e}")))
    }

    pub fn load(path: &Path) -> Result<(Self, String), CliError> {
        let bytes = std::fs::read(path)
            .map_err(|e| CliError::Validation(format!("cannot read config {}: {e}", path.display())))?;
        let text = String::from_utf8(bytes.clone())
            .map_err(|_| CliError::Validation(format!("config {} is not UTF-8", path.display())))?;
        Ok((Self::from_json(&text)?, hex::encode(Sha256::digest(&bytes))))
    }

    pub fn resolve(&self, sha256: String) -> Result<Resolved, CliError> {
        let m = &self.model;
        let need = |v: Option<f64>, name: &str| {
            v.ok_or_else(|| field(name, format!("required for the {} model", m.kind)))
        };
        let forbid = |v: Option<f64>, name: &str| match v {
            Some(_) => Err(field(name, format!("not used by the {} model", m.kind))),
            None => Ok(()),
        };
        let kind = match m.kind.as_str() {
            "periodic" => ModelKind::Periodic {
                mu: need(m.mu, "model.mu")?,
                c: need(m.c, "model.c")?,
            },
            "affine" => ModelKind::Affine {
                mu: need(m.mu, "model.mu")?,
                c: need(m.c, "model.c")?,
            },
            "lognormal" => {
                forbid(m.mu, "model.mu")?;
                forbid(m.c, "model.c")?;
                ModelKind::Lognormal
            }
            other => return Err(field("model.kind", format!("unknown model {other:?}"))),
        };
        let paired_rhs = match kind {
            ModelKind::Periodic { .. } => ("x2", Rhs::X2),
            ModelKind::Affine { .. } => ("one", Rhs::One),
            ModelKind::Lognormal => ("trig", Rhs::Trig),
        };
        if let Some(rhs) = &m.rhs {
            if rhs != paired_rhs.0 {
                return Err(CliError::Validation(format!(
                    "model.rhs = {rhs:?} does not pair with model.kind = {:?} (expected {:?})",
                    m.kind, paired_rhs.0
                )));
            }
        }
        let model = PdeModel::new(kind, m.d_y, paired_rhs.1).map_err(|e| field("model", e))?;

        let periodization = match &self.periodization {
            None => model.default_periodization(),
            Some(p) => {
                let expected = match kind {
                    ModelKind::Periodic { .. } => "none",
                    ModelKind::Affine { .. } => "tent",
                    ModelKind::Lognormal => "lognormal",
                };
                if p.kind != expected {
                    return Err(CliError::Validation(format!(
                        "periodization.kind = {:?} does not pair with model.kind = {:?} (expected {expected:?})",
                        p.kind, m.kind
                    )));
                }
                match expected {
                    "none" => Periodization::None,
                    "tent" => Periodization::tent(p.alpha.unwrap_or(-1.0), p.beta.unwrap_or(1.0))
                        .map_err(|e| field("periodization", e))?,
                    _ => {
                        let m0 = p.shift_lattice_size.unwrap_or(DEFAULT_SHIFT_LATTICE_SIZE);
                        if m0 < 2 {
                            return Err(field("periodization.shift_lattice_size", "must be at least 2"));
                        }
                        Periodization::lognormal(1.0 / (4.0 * m0 as f64))
                            .map_err(|e| field("periodization", e))?
                    }
                }
            }
        };
        if let Periodization::Tent { alpha, beta } = periodization {
            // The affine coefficient is only elliptic for parameters in [−1, 1].
            if alpha < -1.0 || beta > 1.0 {
                return Err(field("periodization", format!("tent interval [{alpha}, {beta}] exceeds [-1, 1]")));
            }
        }

        let mesh = Mesh::new(self.mesh.n).map_err(|e| field("mesh.n", e))?;
        let solver = match self.mesh.solver.as_str() {
            "cholesky" => LinearSolver::Cholesky,
            "cg" => LinearSolver::ConjugateGradient,
            other => return Err(field("mesh.solver", format!("unknown solver {other:?}"))),
        };

        let d = &self.detection;
        let grid = CandidateGrid::symmetric(m.d_y, d.n).map_err(|e| field("detection.N", e))?;
        let mut detection = DetectionConfig::new(grid, d.s).with_periodization(&periodization);
        detection.s_local = d.s_local.unwrap_or(d.s);
        detection.theta = d.theta;
        detection.r = d.r;
        detection.seed = d.seed;
        detection.algo_a = d
            .algo_a
            .parse::<AlgoA>()
            .map_err(|e| field("detection.algo_a", e))?;
        detection.validate().map_err(|e| field("detection", e))?;
        if self.post.n_test == 0 {
            return Err(field("post.n_test", "must be at least 1"));
        }
        if self.post.n_mc == 1 {
            return Err(field("post.n_mc", "must be 0 (skip) or at least 2"));
        }
        Ok(Resolved {
            model,
            mesh,
            solver,
            periodization,
            detection,
            n_test: self.post.n_test,
            n_mc: self.post.n_mc,
            output: self.output.clone(),
            sha256,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const PERIODIC: &str = r#"{
        "model": {"kind": "periodic", "d_y": 5, "mu": 1.2, "c": 0.4},
        "mesh": {"n": 16},
        "detection": {"N": 32, "s": 100}
    }"#;

    fn resolve(text: &str) -> Result<Resolved, CliError> {
        ExperimentConfig::from_json(text)?.resolve(String::new())
    }

    #[test]
    fn defaults_fill_in() {
        let r = resolve(PERIODIC).unwrap();
        assert_eq!(r.periodization, Periodization::None);
        assert_eq!(r.detection.s_local, 100);
        assert_eq!(r.detection.r, 5);
        assert_eq!(r.detection.theta, 1e-12);
        assert_eq!(r.detection.algo_a, AlgoA::SingleR1l);
        assert_eq!(r.n_test, 1000);
        assert_eq!(r.mesh.interior_nodes(), 225);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = PERIODIC.replace("\"s\": 100", "\"s\": 100, \"sparsity\": 3");
        let err = resolve(&text).unwrap_err().to_string();
        assert!(err.contains("sparsity"), "{err}");
    }

    #[test]
    fn mismatched_periodization_names_both_fields() {
        let text = r#"{
            "model": {"kind": "lognormal", "d_y": 4},
            "detection": {"N": 8, "s": 10},
            "periodization": {"kind": "tent", "alpha": -1, "beta": 1}
        }"#;
        let err = resolve(text).unwrap_err().to_string();
        assert!(err.contains("periodization.kind") && err.contains("model.kind"), "{err}");
    }

    #[test]
    fn mismatched_rhs_is_rejected() {
        let text = PERIODIC.replace("\"c\": 0.4", "\"c\": 0.4, \"rhs\": \"one\"");
        let err = resolve(&text).unwrap_err().to_string();
        assert!(err.contains("model.rhs"), "{err}");
    }

    #[test]
    fn lognormal_shift_comes_from_lattice_size() {
        let text = r#"{
            "model": {"kind": "lognormal", "d_y": 4},
            "detection": {"N": 8, "s": 10},
            "periodization": {"kind": "lognormal", "shift_lattice_size": 101}
        }"#;
        let r = resolve(text).unwrap();
        assert_eq!(r.periodization, Periodization::Lognormal { delta: 1.0 / 404.0 });
        assert!(r.detection.pole_guard.is_some());
    }

    #[test]
    fn non_elliptic_model_is_a_validation_error() {
        let text = PERIODIC.replace("\"c\": 0.4", "\"c\": 0.9");
        assert!(matches!(resolve(&text), Err(CliError::Validation(_))));
        let text = PERIODIC.replace(", \"mu\": 1.2", "");
        assert!(resolve(&text).unwrap_err().to_string().contains("model.mu"));
    }
}
