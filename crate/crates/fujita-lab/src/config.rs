//! Experiment configuration: a single TOML file describing the equation,
//! the grid, the initial data, the solver, and the optional sweep and audit
//! blocks. Parsing keeps the deserializer's line-precise messages;
//! [`ExperimentConfig::validate`] adds the cross-field checks and names the
//! offending field.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dynamics::SolverConfig;
use crate::error::{Error, Result};
use crate::grid::{Field, Grid};
use crate::operators::{ConvolutionKernel, KernelProfile, KernelTable, RieszKernel};
use crate::source::{EquationParams, Nonlinearity};

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub version: u32,
    /// Seed for any randomized fields (verification suites; reserved for
    /// stochastic data families).
    pub seed: u64,
    pub equation: EquationBlock,
    pub grid: GridBlock,
    pub initial: InitialBlock,
    pub solver: SolverConfig,
    pub sweep: SweepBlock,
    pub audit: AuditBlock,
    pub outputs: OutputsBlock,
    /// Directory the config was loaded from; anchors relative table paths.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            version: CONFIG_VERSION,
            seed: 0,
            equation: EquationBlock::default(),
            grid: GridBlock::default(),
            initial: InitialBlock::default(),
            solver: SolverConfig::default(),
            sweep: SweepBlock::default(),
            audit: AuditBlock::default(),
            outputs: OutputsBlock::default(),
            base_dir: PathBuf::from("."),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceKind {
    /// `I_alpha(|u|^p)`.
    Riesz,
    /// `K * |u|^p` for a configured radial kernel.
    Kernel,
    /// Pointwise `|u|^p`.
    Local,
    /// Pure diffusion.
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EquationBlock {
    pub dim: usize,
    pub beta: f64,
    pub p: f64,
    pub source: SourceKind,
    /// Riesz order; also the default order of kernel profiles.
    pub alpha: f64,
    pub kernel: KernelBlock,
}

impl Default for EquationBlock {
    fn default() -> Self {
        EquationBlock {
            dim: 1,
            beta: 2.0,
            p: 3.0,
            source: SourceKind::Riesz,
            alpha: 0.5,
            kernel: KernelBlock::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelProfileKind {
    Riesz,
    RieszCutoff,
    Constant,
    Table,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KernelBlock {
    pub profile: KernelProfileKind,
    pub alpha: f64,
    pub cutoff: f64,
    pub level: f64,
    /// Two-column text table `radius value`, interpolated log-log.
    pub table: Option<PathBuf>,
    pub monotone_tail_radius: f64,
}

impl Default for KernelBlock {
    fn default() -> Self {
        KernelBlock {
            profile: KernelProfileKind::Riesz,
            alpha: 0.5,
            cutoff: 1.0,
            level: 1.0,
            table: None,
            monotone_tail_radius: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridBlock {
    pub box_length: f64,
    pub points_per_axis: usize,
}

impl Default for GridBlock {
    fn default() -> Self {
        GridBlock {
            box_length: 40.0,
            points_per_axis: 256,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialFamily {
    /// `amplitude exp(-|x|^2 / (2 width^2))`.
    Gaussian,
    /// `amplitude` times the smooth cutoff supported on `|x| <= width`.
    Bump,
    /// `amplitude (1 + |x/width|^2)^{-gamma/2}`.
    PowerDecay,
    /// `amplitude` everywhere.
    Constant,
    /// Node values from a text table.
    Custom,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InitialBlock {
    pub family: InitialFamily,
    pub amplitude: f64,
    pub width: f64,
    /// Tail exponent of the power-decay family.
    pub gamma: f64,
    pub table: Option<PathBuf>,
}

impl Default for InitialBlock {
    fn default() -> Self {
        InitialBlock {
            family: InitialFamily::Gaussian,
            amplitude: 0.1,
            width: 2.0,
            gamma: 1.0,
            table: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct SweepBlock {
    /// Empty grids fall back to the single configured value.
    pub p_grid: Vec<f64>,
    pub alpha_grid: Vec<f64>,
    pub amplitude_grid: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AuditMode {
    Subcritical,
    Critical,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AuditBlock {
    /// Horizons `T` of the audit windows.
    pub times: Vec<f64>,
    /// Couplings of the critical loci `R = (k T)^{1/beta}`.
    pub couplings: Vec<f64>,
    /// Extra radii for the cross grid isolating the `R` and `T` scalings.
    pub radii: Vec<f64>,
    pub modes: Vec<AuditMode>,
    /// Data tail exponent handed to the kernel limit conditions.
    pub tail_gamma: Option<f64>,
}

impl Default for AuditBlock {
    fn default() -> Self {
        AuditBlock {
            times: Vec::new(),
            couplings: vec![1.0, 2.0, 4.0, 8.0],
            radii: Vec::new(),
            modes: vec![AuditMode::Subcritical],
            tail_gamma: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    Json,
    Csv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputsBlock {
    /// Base directory; each invocation writes into a fresh
    /// `<timestamp>-<hash>` subdirectory unless overridden.
    pub directory: PathBuf,
    pub formats: Vec<OutputFormat>,
    pub plot_script: bool,
}

impl Default for OutputsBlock {
    fn default() -> Self {
        OutputsBlock {
            directory: PathBuf::from("runs"),
            formats: vec![OutputFormat::Json, OutputFormat::Csv],
            plot_script: true,
        }
    }
}

fn field_err(field: &str, message: impl Into<String>) -> Error {
    Error::Config(format!("{field}: {}", message.into()))
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let mut config: ExperimentConfig = toml::from_str(text)
            .map_err(|e| Error::Config(format!("config parse failed: {e}")))?;
        config.base_dir = PathBuf::from(".");
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut config = Self::from_toml_str(&text)?;
        config.base_dir = path
            .parent()
            .filter(|p| !p.as_os_str().is_empty())
            .map(Path::to_path_buf)
            .unwrap_or_else(|| PathBuf::from("."));
        Ok(config)
    }

    /// Canonical serialization; hashed into the artifact directory name and
    /// echoed next to the results.
    pub fn canonical_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(format!("config serialize: {e}")))
    }

    pub fn resolve_path(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != CONFIG_VERSION {
            return Err(field_err(
                "version",
                format!("unsupported config version {}, expected {CONFIG_VERSION}", self.version),
            ));
        }
        let eq = &self.equation;
        if eq.dim != 1 && eq.dim != 2 {
            return Err(field_err("equation.dim", format!("must be 1 or 2, got {}", eq.dim)));
        }
        if !(eq.beta > 0.0 && eq.beta <= 2.0) {
            return Err(field_err(
                "equation.beta",
                format!("must lie in (0, 2], got {}", eq.beta),
            ));
        }
        if !(eq.p > 1.0 && eq.p.is_finite()) {
            return Err(field_err("equation.p", format!("must exceed 1, got {}", eq.p)));
        }
        let n = eq.dim as f64;
        if eq.source == SourceKind::Riesz && !(eq.alpha > 0.0 && eq.alpha < n) {
            return Err(field_err(
                "equation.alpha",
                format!("must lie in (0, {n}) for the riesz source, got {}", eq.alpha),
            ));
        }
        if eq.source == SourceKind::Kernel {
            let k = &eq.kernel;
            match k.profile {
                KernelProfileKind::Riesz | KernelProfileKind::RieszCutoff => {
                    if !(k.alpha > 0.0 && k.alpha < n) {
                        return Err(field_err(
                            "equation.kernel.alpha",
                            format!("must lie in (0, {n}), got {}", k.alpha),
                        ));
                    }
                    if k.profile == KernelProfileKind::RieszCutoff && !(k.cutoff > 0.0) {
                        return Err(field_err(
                            "equation.kernel.cutoff",
                            format!("must be positive, got {}", k.cutoff),
                        ));
                    }
                }
                KernelProfileKind::Constant => {
                    if !(k.level > 0.0) {
                        return Err(field_err(
                            "equation.kernel.level",
                            format!("must be positive, got {}", k.level),
                        ));
                    }
                }
                KernelProfileKind::Table => {
                    if k.table.is_none() {
                        return Err(field_err(
                            "equation.kernel.table",
                            "table profile needs a file path",
                        ));
                    }
                }
            }
            if !(k.monotone_tail_radius > 0.0) {
                return Err(field_err(
                    "equation.kernel.monotone_tail_radius",
                    format!("must be positive, got {}", k.monotone_tail_radius),
                ));
            }
        }
        let g = &self.grid;
        if !(g.box_length > 0.0 && g.box_length.is_finite()) {
            return Err(field_err(
                "grid.box_length",
                format!("must be positive and finite, got {}", g.box_length),
            ));
        }
        if g.points_per_axis < 8 || !g.points_per_axis.is_power_of_two() {
            return Err(field_err(
                "grid.points_per_axis",
                format!(
                    "must be a power of two of at least 8, got {}",
                    g.points_per_axis
                ),
            ));
        }
        let init = &self.initial;
        if !(init.amplitude >= 0.0 && init.amplitude.is_finite()) {
            return Err(field_err(
                "initial.amplitude",
                format!("must be nonnegative and finite, got {}", init.amplitude),
            ));
        }
        match init.family {
            InitialFamily::Gaussian | InitialFamily::Bump | InitialFamily::PowerDecay => {
                if !(init.width > 0.0 && init.width.is_finite()) {
                    return Err(field_err(
                        "initial.width",
                        format!("must be positive and finite, got {}", init.width),
                    ));
                }
            }
            _ => {}
        }
        if init.family == InitialFamily::PowerDecay && !(init.gamma > 0.0 && init.gamma.is_finite())
        {
            return Err(field_err(
                "initial.gamma",
                format!("must be positive and finite, got {}", init.gamma),
            ));
        }
        if init.family == InitialFamily::Custom && init.table.is_none() {
            return Err(field_err("initial.table", "custom family needs a file path"));
        }
        self.solver
            .validate()
            .map_err(|e| Error::Config(format!("solver: {e}")))?;
        let sw = &self.sweep;
        for (name, grid) in [
            ("sweep.p_grid", &sw.p_grid),
            ("sweep.alpha_grid", &sw.alpha_grid),
            ("sweep.amplitude_grid", &sw.amplitude_grid),
        ] {
            if grid.iter().any(|v| !v.is_finite()) {
                return Err(field_err(name, "entries must be finite"));
            }
        }
        if sw.p_grid.iter().any(|&v| v <= 1.0) {
            return Err(field_err("sweep.p_grid", "every exponent must exceed 1"));
        }
        if sw.alpha_grid.iter().any(|&v| !(v > 0.0 && v < n)) {
            return Err(field_err(
                "sweep.alpha_grid",
                format!("every order must lie in (0, {n})"),
            ));
        }
        if sw.amplitude_grid.iter().any(|&v| v < 0.0) {
            return Err(field_err("sweep.amplitude_grid", "amplitudes must be nonnegative"));
        }
        if !sw.alpha_grid.is_empty() && !sw.amplitude_grid.is_empty() {
            return Err(field_err(
                "sweep",
                "pick one second axis: alpha_grid or amplitude_grid, not both",
            ));
        }
        if !sw.alpha_grid.is_empty() && eq.source != SourceKind::Riesz {
            return Err(field_err(
                "sweep.alpha_grid",
                "an alpha axis needs the riesz source",
            ));
        }
        let audit = &self.audit;
        if audit.times.iter().any(|&t| !(t > 0.0 && t.is_finite())) {
            return Err(field_err("audit.times", "window horizons must be positive"));
        }
        if audit.couplings.iter().any(|&k| !(k > 0.0 && k.is_finite())) {
            return Err(field_err("audit.couplings", "couplings must be positive"));
        }
        if audit.radii.iter().any(|&r| !(r > 0.0 && r.is_finite())) {
            return Err(field_err("audit.radii", "radii must be positive"));
        }
        // the subcritical decay fit regresses over the windows, one per horizon
        if audit.modes.contains(&AuditMode::Subcritical)
            && eq.source == SourceKind::Riesz
            && !audit.times.is_empty()
            && audit.times.len() < 3
        {
            return Err(field_err(
                "audit.times",
                format!(
                    "the subcritical decay fit needs at least three horizons, got {}",
                    audit.times.len()
                ),
            ));
        }
        if let Some(g) = audit.tail_gamma {
            if !(g > 0.0 && g.is_finite()) {
                return Err(field_err(
                    "audit.tail_gamma",
                    format!("must be positive and finite, got {g}"),
                ));
            }
        }
        if self.outputs.formats.is_empty() {
            return Err(field_err("outputs.formats", "need at least one output format"));
        }
        Ok(())
    }

    pub fn build_grid(&self) -> Result<Grid> {
        Grid::new(
            self.equation.dim,
            self.grid.box_length,
            self.grid.points_per_axis,
        )
    }

    /// Equation parameters with the configured `p` and `alpha`; sweeps
    /// override both per cell.
    pub fn build_params(&self) -> Result<EquationParams> {
        self.build_params_at(self.equation.p, self.equation.alpha)
    }

    pub fn build_params_at(&self, p: f64, alpha: f64) -> Result<EquationParams> {
        let eq = &self.equation;
        let nonlinearity = match eq.source {
            SourceKind::Riesz => Nonlinearity::Riesz(RieszKernel::new(eq.dim, alpha)?),
            SourceKind::Kernel => Nonlinearity::Kernel(self.build_kernel()?),
            SourceKind::Local => Nonlinearity::Local,
            SourceKind::None => Nonlinearity::None,
        };
        EquationParams::new(eq.dim, eq.beta, p, nonlinearity)
    }

    pub fn build_kernel(&self) -> Result<ConvolutionKernel> {
        let eq = &self.equation;
        let k = &eq.kernel;
        let profile = match k.profile {
            KernelProfileKind::Riesz => KernelProfile::Riesz { alpha: k.alpha },
            KernelProfileKind::RieszCutoff => KernelProfile::RieszWithCutoff {
                alpha: k.alpha,
                cutoff: k.cutoff,
            },
            KernelProfileKind::Constant => KernelProfile::Constant { level: k.level },
            KernelProfileKind::Table => {
                let path = k.table.as_ref().expect("validated");
                KernelProfile::Table(KernelTable::load(&self.resolve_path(path))?)
            }
        };
        ConvolutionKernel::new(eq.dim, profile, k.monotone_tail_radius)
    }

    /// Initial state on the configured grid at the configured amplitude.
    pub fn build_initial(&self, grid: Grid) -> Result<Field> {
        self.build_initial_at(grid, self.initial.amplitude)
    }

    pub fn build_initial_at(&self, grid: Grid, amplitude: f64) -> Result<Field> {
        let init = &self.initial;
        let w = init.width;
        let field = match init.family {
            InitialFamily::Gaussian => Field::from_fn(grid, |[x, y]| {
                amplitude * (-(x * x + y * y) / (2.0 * w * w)).exp()
            }),
            InitialFamily::Bump => Field::from_fn(grid, |[x, y]| {
                amplitude * crate::capacity::cutoff_profile((x * x + y * y).sqrt() / w)
            }),
            InitialFamily::PowerDecay => {
                let gamma = init.gamma;
                Field::from_fn(grid, |[x, y]| {
                    amplitude * (1.0 + (x * x + y * y) / (w * w)).powf(-gamma / 2.0)
                })
            }
            InitialFamily::Constant => Field::constant(grid, amplitude),
            InitialFamily::Custom => {
                let path = self.resolve_path(init.table.as_ref().expect("validated"));
                let text = std::fs::read_to_string(&path).map_err(|e| {
                    field_err("initial.table", format!("cannot read {}: {e}", path.display()))
                })?;
                let values = parse_value_table(&text, grid.len())?;
                let base = Field::new(grid, values)?;
                base.map(|v| amplitude * v)
            }
        };
        Ok(field)
    }
}

/// Whitespace-separated node values, one field's worth; `#` starts a
/// comment.
fn parse_value_table(text: &str, expected: usize) -> Result<Vec<f64>> {
    let mut values = Vec::with_capacity(expected);
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        for token in line.split_whitespace() {
            let v: f64 = token.parse().map_err(|_| {
                field_err(
                    "initial.table",
                    format!("line {}: cannot parse {token:?} as a number", lineno + 1),
                )
            })?;
            values.push(v);
        }
    }
    if values.len() != expected {
        return Err(field_err(
            "initial.table",
            format!("expected {expected} node values, got {}", values.len()),
        ));
    }
    Ok(values)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_validates_and_round_trips() {
        let config = ExperimentConfig::default();
        config.validate().unwrap();
        let text = config.canonical_toml().unwrap();
        let back = ExperimentConfig::from_toml_str(&text).unwrap();
        assert_eq!(back, config);
    }

    #[test]
    fn minimal_config_fills_defaults() {
        let config = ExperimentConfig::from_toml_str(
            r#"
            [equation]
            p = 4.0

            [initial]
            amplitude = 0.5
            "#,
        )
        .unwrap();
        assert_eq!(config.equation.p, 4.0);
        assert_eq!(config.equation.dim, 1);
        assert_eq!(config.initial.amplitude, 0.5);
        assert_eq!(config.solver, SolverConfig::default());
    }

    #[test]
    fn cross_field_errors_name_the_field() {
        let err = ExperimentConfig::from_toml_str(
            r#"
            [equation]
            alpha = 3.0
            "#,
        )
        .unwrap_err();
        assert!(err.to_string().contains("equation.alpha"), "{err}");

        let err = ExperimentConfig::from_toml_str(
            r#"
            [sweep]
            alpha_grid = [0.2]
            amplitude_grid = [1.0]
            "#,
        )
        .unwrap_err();
        assert!(err.to_string().contains("sweep"), "{err}");

        let err = ExperimentConfig::from_toml_str(
            r#"
            [initial]
            family = "custom"
            "#,
        )
        .unwrap_err();
        assert!(err.to_string().contains("initial.table"), "{err}");
    }

    #[test]
    fn unknown_keys_are_rejected_with_a_location() {
        let err = ExperimentConfig::from_toml_str(
            r#"
            [equation]
            beta = 1.0
            betta = 2.0
            "#,
        )
        .unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("betta"), "{msg}");
    }

    #[test]
    fn initial_families_evaluate_their_formulas() {
        let config = ExperimentConfig::from_toml_str(
            r#"
            [initial]
            family = "power_decay"
            amplitude = 2.0
            width = 1.0
            gamma = 0.8
            "#,
        )
        .unwrap();
        let grid = Grid::new(1, 20.0, 64).unwrap();
        let u0 = config.build_initial(grid).unwrap();
        for (i, &v) in u0.values().iter().enumerate() {
            let [x, _] = grid.position(i);
            let expected = 2.0 * (1.0 + x * x).powf(-0.4);
            assert!((v - expected).abs() < 1e-14);
        }

        let config = ExperimentConfig::from_toml_str(
            r#"
            [initial]
            family = "bump"
            amplitude = 1.5
            width = 3.0
            "#,
        )
        .unwrap();
        let u0 = config.build_initial(grid).unwrap();
        assert_eq!(u0.sup_abs(), 1.5);
        for (i, &v) in u0.values().iter().enumerate() {
            if grid.radius(i) >= 3.0 {
                assert_eq!(v, 0.0);
            }
        }
    }

    #[test]
    fn custom_table_length_is_checked() {
        let mut config = ExperimentConfig::default();
        config.initial.family = InitialFamily::Custom;
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.txt");
        std::fs::write(&path, "1.0 2.0 3.0\n").unwrap();
        config.initial.table = Some(path);
        let grid = Grid::new(1, 10.0, 16).unwrap();
        let err = config.build_initial(grid).unwrap_err();
        assert!(err.to_string().contains("expected 16"), "{err}");
    }
}
