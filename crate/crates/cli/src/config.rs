//! Experiment configuration: one JSON document, complex numbers as `[re, im]`.

use std::path::Path;

use lelong_core::current::{BoundaryProfile, CurrentSpec};
use lelong_core::kernel::RegimeThresholds;
use lelong_core::recurrence::CircleGrid;
use lelong_core::{Singularity, Tolerance};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

/// Seed of the built-in configuration.
pub const DEFAULT_SEED: u64 = 20_240_601;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub singularity: SingularityConfig,
    /// Defaults to a triangular bump on one mid-annulus leaf.
    #[serde(default)]
    pub current: Option<CurrentSpec>,
    #[serde(default)]
    pub grids: Grids,
    #[serde(default)]
    pub tolerance: ToleranceConfig,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub regimes: RegimeConfig,
    #[serde(default)]
    pub recurrence: RecurrenceConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SingularityConfig {
    pub mu: Complex64,
    pub lambda: Complex64,
}

impl Default for SingularityConfig {
    fn default() -> Self {
        Self {
            mu: Complex64::new(1.0, 0.0),
            lambda: Complex64::new(0.0, 1.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Grids {
    /// Radii, strictly decreasing in `(0, 1)`.
    pub r: Vec<f64>,
    pub s: Vec<f64>,
    pub y: Vec<f64>,
    /// Horizons `R` for the Poincaré-mass checks.
    pub horizons: Vec<f64>,
}

impl Default for Grids {
    fn default() -> Self {
        let mut y = vec![0.0];
        for v in [1.0, 10.0, 1e2, 1e3, 1e4] {
            y.extend([v, -v]);
        }
        Self {
            r: (1..=12).map(|k| 0.5f64.powi(k)).collect(),
            s: (0..8).map(|k| 2f64.powi(k)).collect(),
            y,
            horizons: (0..=8).map(|k| 10.0 + 1.25 * k as f64).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ToleranceConfig {
    pub rel: f64,
    pub abs: f64,
    pub max_evals: usize,
}

impl Default for ToleranceConfig {
    fn default() -> Self {
        Self {
            rel: 1e-7,
            abs: 1e-12,
            max_evals: 4_000_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RegimeConfig {
    pub c2: f64,
    pub c3: f64,
    pub samples: usize,
}

impl Default for RegimeConfig {
    fn default() -> Self {
        let th = RegimeThresholds::default();
        Self {
            c2: th.c2,
            c3: th.c3,
            samples: 10_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RecurrenceConfig {
    /// Sector coordinates `(t, v)` of the base point on the mid-annulus leaf.
    pub base: [f64; 2],
    /// Target points `x = (z, w)`.
    pub targets: Vec<[Complex64; 2]>,
    pub horizon: f64,
    pub n_t: usize,
    pub n_theta: usize,
    pub replicates: usize,
}

impl Default for RecurrenceConfig {
    fn default() -> Self {
        let grid = CircleGrid::default();
        let zero = Complex64::new(0.0, 0.0);
        Self {
            base: [1.0, 1.0],
            targets: vec![[zero, zero], [Complex64::new(0.5, 0.0), zero]],
            horizon: 20.0,
            n_t: grid.n_t,
            n_theta: grid.n_theta,
            replicates: 8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub dir: Option<String>,
    pub format: Option<Format>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            singularity: SingularityConfig::default(),
            current: None,
            grids: Grids::default(),
            tolerance: ToleranceConfig::default(),
            seed: Some(DEFAULT_SEED),
            regimes: RegimeConfig::default(),
            recurrence: RecurrenceConfig::default(),
            output: OutputConfig::default(),
        }
    }
}

fn config_error(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

fn positive_finite(name: &str, v: f64) -> Result<(), CliError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(config_error(format!("{name} = {v} must be positive and finite")))
    }
}

impl ExperimentConfig {
    /// Parses a JSON document; errors carry the line and column.
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| config_error(format!("line {}, column {}: {e}", e.line(), e.column())))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| config_error(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text).map_err(|e| match e {
            CliError::Config(m) => config_error(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn singularity(&self) -> Result<Singularity, CliError> {
        Singularity::normalize(self.singularity.mu, self.singularity.lambda)
            .map_err(|e| config_error(format!("singularity: {e}")))
    }

    pub fn current(&self, sing: &Singularity) -> CurrentSpec {
        self.current.clone().unwrap_or_else(|| {
            CurrentSpec::single_atom(
                sing,
                BoundaryProfile::Bump {
                    center: 0.0,
                    width: 1.0,
                    height: 1.0,
                },
            )
        })
    }

    pub fn tolerance(&self) -> Result<Tolerance, CliError> {
        let t = &self.tolerance;
        Tolerance::new(t.rel, t.abs, t.max_evals).map_err(|e| config_error(format!("tolerance: {e}")))
    }

    pub fn thresholds(&self) -> RegimeThresholds {
        RegimeThresholds {
            c2: self.regimes.c2,
            c3: self.regimes.c3,
        }
    }

    pub fn circle_grid(&self) -> CircleGrid {
        CircleGrid {
            n_t: self.recurrence.n_t,
            n_theta: self.recurrence.n_theta,
        }
    }

    /// The seed, required whenever a command draws random numbers.
    pub fn require_seed(&self, command: &str) -> Result<u64, CliError> {
        self.seed
            .ok_or_else(|| config_error(format!("seed: `{command}` uses Monte Carlo and needs a seed (config or --seed)")))
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let sing = self.singularity()?;
        self.tolerance()?;
        let g = &self.grids;
        for (name, grid) in [("grids.r", &g.r), ("grids.s", &g.s), ("grids.y", &g.y), ("grids.horizons", &g.horizons)] {
            if grid.is_empty() {
                return Err(config_error(format!("{name} must be nonempty")));
            }
            if let Some(x) = grid.iter().find(|x| !x.is_finite()) {
                return Err(config_error(format!("{name} contains {x}")));
            }
        }
        if g.r.iter().any(|&r| !(r > 0.0 && r < 1.0)) || g.r.windows(2).any(|w| !(w[1] < w[0])) {
            return Err(config_error("grids.r must be strictly decreasing in (0, 1)"));
        }
        if let Some(s) = g.s.iter().find(|&&s| s < 1.0) {
            return Err(config_error(format!("grids.s contains {s} < 1")));
        }
        for &h in &g.horizons {
            positive_finite("grids.horizons", h)?;
        }
        self.current(&sing)
            .validate(&sing)
            .map_err(|e| config_error(format!("current: {e}")))?;
        self.thresholds()
            .validate()
            .map_err(|e| config_error(format!("regimes: {e}")))?;
        if self.regimes.samples < 100 {
            return Err(config_error(format!("regimes.samples = {} must be at least 100", self.regimes.samples)));
        }
        let rc = &self.recurrence;
        positive_finite("recurrence.base[0]", rc.base[0])?;
        positive_finite("recurrence.base[1]", rc.base[1])?;
        positive_finite("recurrence.horizon", rc.horizon)?;
        if rc.targets.is_empty() {
            return Err(config_error("recurrence.targets must be nonempty"));
        }
        if rc.n_t < 64 || rc.n_theta < 8 || rc.replicates < 2 {
            return Err(config_error("recurrence needs n_t >= 64, n_theta >= 8 and replicates >= 2"));
        }
        Ok(())
    }

    /// SHA-256 of the canonical serialisation without the output section, hex encoded.
    pub fn hash(&self) -> String {
        let experiment = Self {
            output: OutputConfig::default(),
            ..self.clone()
        };
        let canonical = serde_json::to_string(&experiment).expect("config serialises");
        Sha256::digest(canonical.as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

/// Parses `i`, `-1+i`, `2.5-0.5i`, `3` or `re,im`.
pub fn parse_complex(text: &str) -> Result<Complex64, String> {
    let t: String = text.chars().filter(|c| !c.is_whitespace()).collect();
    if let Some((re, im)) = t.split_once(',') {
        let re = re.parse::<f64>().map_err(|e| format!("{text}: {e}"))?;
        let im = im.parse::<f64>().map_err(|e| format!("{text}: {e}"))?;
        return Ok(Complex64::new(re, im));
    }
    let Some(body) = t.strip_suffix('i') else {
        return t
            .parse::<f64>()
            .map(|re| Complex64::new(re, 0.0))
            .map_err(|e| format!("{text}: {e}"));
    };
    // Split before the last sign that is not the leading one or part of an exponent.
    let bytes = body.as_bytes();
    let split = (1..bytes.len())
        .rev()
        .find(|&k| (bytes[k] == b'+' || bytes[k] == b'-') && !matches!(bytes[k - 1], b'e' | b'E'));
    let (re, im) = match split {
        Some(k) => (&body[..k], &body[k..]),
        None => ("0", body),
    };
    let coef = |s: &str| -> Result<f64, String> {
        match s {
            "" | "+" => Ok(1.0),
            "-" => Ok(-1.0),
            _ => s.parse::<f64>().map_err(|e| format!("{text}: {e}")),
        }
    };
    let re = re.parse::<f64>().map_err(|e| format!("{text}: {e}"))?;
    Ok(Complex64::new(re, coef(im)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn complex_literals() {
        let c = |re, im| Complex64::new(re, im);
        assert_eq!(parse_complex("i").unwrap(), c(0.0, 1.0));
        assert_eq!(parse_complex("-i").unwrap(), c(0.0, -1.0));
        assert_eq!(parse_complex("1+i").unwrap(), c(1.0, 1.0));
        assert_eq!(parse_complex("-1+i").unwrap(), c(-1.0, 1.0));
        assert_eq!(parse_complex("2.5-0.5i").unwrap(), c(2.5, -0.5));
        assert_eq!(parse_complex("1e-3+2e+1i").unwrap(), c(1e-3, 20.0));
        assert_eq!(parse_complex("3").unwrap(), c(3.0, 0.0));
        assert_eq!(parse_complex(" -1 , 2 ").unwrap(), c(-1.0, 2.0));
        assert!(parse_complex("x+i").is_err());
        assert!(parse_complex("").is_err());
    }

    #[test]
    fn default_config_is_valid_and_roundtrips() {
        let c = ExperimentConfig::default();
        c.validate().unwrap();
        let text = serde_json::to_string_pretty(&c).unwrap();
        assert!(text.contains("\"lambda\": [\n      0.0,\n      1.0\n    ]"));
        assert_eq!(ExperimentConfig::from_json(&text).unwrap(), c);
    }

    #[test]
    fn empty_document_takes_defaults_without_seed() {
        let c = ExperimentConfig::from_json("{}").unwrap();
        c.validate().unwrap();
        assert_eq!(c.seed, None);
        assert!(c.require_seed("regimes").is_err());
    }

    #[test]
    fn diagnostics_name_line_and_field() {
        let e = ExperimentConfig::from_json("{\n  \"seed\": 1,\n  \"colour\": 2\n}").unwrap_err();
        let msg = e.to_string();
        assert!(msg.contains("line 3") && msg.contains("colour"), "{msg}");
        let e = ExperimentConfig::from_json("{\"grids\": {\"r\": [0.5, 0.6]}}")
            .unwrap()
            .validate()
            .unwrap_err();
        assert!(e.to_string().contains("grids.r"));
    }

    #[test]
    fn invalid_current_is_a_config_error() {
        let text = r#"{"current": {"nu": {"kind": "atoms", "atoms": []}, "profile": {"kind": "zero"}}}"#;
        let e = ExperimentConfig::from_json(text).unwrap().validate().unwrap_err();
        assert!(matches!(e, CliError::Config(_)));
    }

    #[test]
    fn hash_tracks_content() {
        let a = ExperimentConfig::default();
        let mut b = a.clone();
        assert_eq!(a.hash(), b.hash());
        b.output.dir = Some("elsewhere".into());
        assert_eq!(a.hash(), b.hash());
        b.seed = Some(1);
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
    }
}
