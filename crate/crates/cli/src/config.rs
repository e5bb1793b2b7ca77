//! TOML experiment configuration.

use std::path::{Path, PathBuf};

use serde::Deserialize;
use statecon::{
    ArmijoParams, DescentParams, DomainSpec, InitialStep, Preconditioner, Quadrant, Region,
};
use statecon::{DEFAULT_BETA, DEFAULT_SOLVER_TOL};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("cannot parse config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

fn invalid<T>(msg: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError::Invalid(msg.into()))
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub domain: DomainConfig,
    pub grid: GridConfig,
    pub constraint: ConstraintConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub armijo: ArmijoConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DomainConfig {
    UnitDisk {
        #[serde(default)]
        center: [f64; 2],
        #[serde(default = "one")]
        radius: f64,
    },
    LShape {
        #[serde(default)]
        removed: QuadrantConfig,
    },
    Rectangle {
        min: [f64; 2],
        max: [f64; 2],
    },
    Interval {
        min: f64,
        max: f64,
    },
}

fn one() -> f64 {
    1.0
}

#[derive(Clone, Copy, Debug, Default, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuadrantConfig {
    UpperRight,
    UpperLeft,
    LowerLeft,
    #[default]
    LowerRight,
}

impl DomainConfig {
    pub fn spec(&self) -> DomainSpec {
        match *self {
            DomainConfig::UnitDisk { center, radius } => DomainSpec::UnitDisk { center, radius },
            DomainConfig::LShape { removed } => DomainSpec::LShape {
                removed: match removed {
                    QuadrantConfig::UpperRight => Quadrant::UpperRight,
                    QuadrantConfig::UpperLeft => Quadrant::UpperLeft,
                    QuadrantConfig::LowerLeft => Quadrant::LowerLeft,
                    QuadrantConfig::LowerRight => Quadrant::LowerRight,
                },
            },
            DomainConfig::Rectangle { min, max } => DomainSpec::Rectangle { min, max },
            DomainConfig::Interval { min, max } => DomainSpec::Interval { min, max },
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub sizes: Vec<usize>,
}

#[derive(Clone, Copy, Debug, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum ConstraintKind {
    Box,
    WeightedIntegral,
    TotalCoverage,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstraintConfig {
    pub kind: ConstraintKind,
    pub lower: Option<f64>,
    pub upper: Option<f64>,
    /// Upper bound as a multiple of `⟨w, ψ̄⟩` on each grid.
    pub upper_from_target: Option<f64>,
    /// Weight support (weighted integral) or coverage region (total coverage).
    pub region: Option<RegionConfig>,
    pub coverage: Option<f64>,
}

#[derive(Clone, Copy, Debug, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case", deny_unknown_fields)]
pub enum RegionConfig {
    Ball { center: [f64; 2], radius: f64 },
    Rect { min: [f64; 2], max: [f64; 2] },
}

impl RegionConfig {
    pub fn region(&self) -> Region {
        match *self {
            RegionConfig::Ball { center, radius } => Region::Ball { center, radius },
            RegionConfig::Rect { min, max } => Region::Rect { min, max },
        }
    }
}

#[derive(Clone, Copy, Debug, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PreconditionerConfig {
    None,
    Jacobi,
    Ssor,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub alpha: f64,
    pub tol: f64,
    pub beta: f64,
    pub max_iters: usize,
    pub pde_tol: f64,
    pub preconditioner: PreconditionerConfig,
    pub omega: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        let d = DescentParams::default();
        SolverConfig {
            alpha: d.alpha,
            tol: d.tol,
            beta: DEFAULT_BETA,
            max_iters: d.max_iters,
            pde_tol: DEFAULT_SOLVER_TOL,
            preconditioner: PreconditionerConfig::None,
            omega: 1.5,
        }
    }
}

impl SolverConfig {
    pub fn preconditioner(&self) -> Preconditioner {
        match self.preconditioner {
            PreconditionerConfig::None => Preconditioner::None,
            PreconditionerConfig::Jacobi => Preconditioner::Jacobi,
            PreconditionerConfig::Ssor => Preconditioner::Ssor { omega: self.omega },
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(untagged)]
pub enum InitialStepConfig {
    Fixed(f64),
    Named(String),
}

#[derive(Clone, Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArmijoConfig {
    pub c1: f64,
    pub shrink: f64,
    pub initial: InitialStepConfig,
    pub max_backtracks: usize,
}

impl Default for ArmijoConfig {
    fn default() -> Self {
        let a = ArmijoParams::default();
        ArmijoConfig {
            c1: a.c1,
            shrink: a.shrink,
            initial: InitialStepConfig::Named("barzilai_borwein".into()),
            max_backtracks: a.max_backtracks,
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
    pub seed: u64,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            dir: PathBuf::from("out"),
            seed: 0,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: ExperimentConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_owned(),
            source,
        })?;
        Self::from_toml(&text)
    }

    pub fn descent_params(&self) -> Result<DescentParams, ConfigError> {
        let initial = match &self.armijo.initial {
            InitialStepConfig::Fixed(t) => InitialStep::Fixed(*t),
            InitialStepConfig::Named(name) => match name.as_str() {
                "barzilai_borwein" => InitialStep::BarzilaiBorwein,
                "inverse_alpha" => InitialStep::InverseAlpha,
                other => return invalid(format!("unknown armijo.initial `{other}`")),
            },
        };
        let params = DescentParams {
            alpha: self.solver.alpha,
            tol: self.solver.tol,
            beta: self.solver.beta,
            max_iters: self.solver.max_iters,
            armijo: ArmijoParams {
                c1: self.armijo.c1,
                shrink: self.armijo.shrink,
                initial,
                max_backtracks: self.armijo.max_backtracks,
            },
        };
        params
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.domain
            .spec()
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        let sizes = &self.grid.sizes;
        if sizes.is_empty() {
            return invalid("grid.sizes needs at least one entry");
        }
        if sizes.windows(2).any(|w| w[0] >= w[1]) {
            return invalid("grid.sizes must be strictly increasing");
        }
        if sizes[0] < 3 {
            return invalid("grid sizes must be at least 3");
        }
        self.descent_params()?;
        if !(self.solver.pde_tol > 0.0 && self.solver.pde_tol < 1.0) {
            return invalid("solver.pde_tol must lie in (0, 1)");
        }
        if matches!(self.solver.preconditioner, PreconditionerConfig::Ssor)
            && !(self.solver.omega > 0.0 && self.solver.omega < 2.0)
        {
            return invalid("solver.omega must lie in (0, 2)");
        }

        let c = &self.constraint;
        if c.upper.is_some() && c.upper_from_target.is_some() {
            return invalid(
                "give either constraint.upper or constraint.upper_from_target, not both",
            );
        }
        if let Some(f) = c.upper_from_target {
            if c.kind != ConstraintKind::WeightedIntegral {
                return invalid("constraint.upper_from_target only applies to weighted_integral");
            }
            if !(f.is_finite() && f > 0.0) {
                return invalid("constraint.upper_from_target must be positive");
            }
        }
        let lower = c.lower.unwrap_or(f64::NEG_INFINITY);
        let upper = c.upper.unwrap_or(f64::INFINITY);
        if lower.is_nan() || upper.is_nan() || lower >= upper {
            return invalid("constraint bounds need lower < upper");
        }
        match c.kind {
            ConstraintKind::Box => {
                if c.region.is_some() || c.coverage.is_some() {
                    return invalid("box constraints take no region or coverage");
                }
            }
            ConstraintKind::WeightedIntegral => {
                if c.region.is_none() {
                    return invalid(
                        "weighted_integral needs constraint.region (the weight support)",
                    );
                }
                if c.coverage.is_some() {
                    return invalid("weighted_integral takes no coverage");
                }
            }
            ConstraintKind::TotalCoverage => {
                if c.region.is_none() {
                    return invalid("total_coverage needs constraint.region");
                }
                match c.coverage {
                    Some(f) if f > 0.0 && f < 1.0 => {}
                    _ => return invalid("total_coverage needs coverage in (0, 1)"),
                }
            }
        }
        if let Some(RegionConfig::Ball { radius, .. }) = c.region {
            if radius.is_nan() || radius <= 0.0 {
                return invalid("region radius must be positive");
            }
        }
        if let Some(RegionConfig::Rect { min, max }) = c.region {
            if !(min[0] < max[0] && min[1] <= max[1]) {
                return invalid("region rect needs min < max");
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const DISK: &str = r#"
[domain]
kind = "unit_disk"

[grid]
sizes = [17, 33]

[constraint]
kind = "weighted_integral"
upper = 0.12
region = { shape = "ball", center = [0.0, 0.0], radius = 0.25 }
"#;

    #[test]
    fn parses_minimal_disk_config() {
        let cfg = ExperimentConfig::from_toml(DISK).unwrap();
        assert_eq!(cfg.grid.sizes, vec![17, 33]);
        assert_eq!(cfg.domain.spec(), DomainSpec::unit_disk());
        let p = cfg.descent_params().unwrap();
        assert_eq!(p.alpha, 1e-3);
        assert_eq!(p.tol, 1e-5);
        assert_eq!(p.armijo.initial, InitialStep::BarzilaiBorwein);
    }

    #[test]
    fn rejects_bad_configs() {
        let cases = [
            DISK.replace("[17, 33]", "[33, 17]"),
            DISK.replace("[17, 33]", "[]"),
            DISK.replace("upper = 0.12", "upper = 0.12\nlower = 0.5"),
            DISK.replace(
                "region = { shape = \"ball\", center = [0.0, 0.0], radius = 0.25 }\n",
                "",
            ),
            DISK.replace("kind = \"unit_disk\"", "kind = \"torus\""),
            DISK.replace("[grid]", "[grid]\nunknown = 1"),
            format!("{DISK}\n[solver]\nalpha = -1.0\n"),
            format!("{DISK}\n[armijo]\ninitial = \"huge\"\n"),
            DISK.replace("upper = 0.12", "upper = 0.12\nupper_from_target = 0.5"),
        ];
        for text in cases {
            assert!(
                ExperimentConfig::from_toml(&text).is_err(),
                "accepted:\n{text}"
            );
        }
    }

    #[test]
    fn fixed_initial_step() {
        let cfg =
            ExperimentConfig::from_toml(&format!("{DISK}\n[armijo]\ninitial = 2.5\n")).unwrap();
        assert_eq!(
            cfg.descent_params().unwrap().armijo.initial,
            InitialStep::Fixed(2.5)
        );
    }

    #[test]
    fn coverage_requires_fraction() {
        let text = DISK.replace("weighted_integral", "total_coverage");
        assert!(ExperimentConfig::from_toml(&text).is_err());
        assert!(ExperimentConfig::from_toml(&format!("{text}coverage = 0.8\n")).is_ok());
    }
}
