//! Model files. Two kinds are understood: an infinite linear ODE system
//! `du/dt = (-D + B + C) u` and a logistic correlation hierarchy on a
//! periodic grid.
//!
//! ```toml
//! kind = "ode"
//! dim = 64
//!
//! [scale]
//! alpha_star = 0.0
//! alpha_grid = { start = 0.05, stop = 2.0, count = 40 }
//! safety = 1.1
//!
//! [death]          # d_n = offset + slope * n, or rates = [...]
//! offset = 1.0
//! slope = 1.0
//!
//! [birth]          # B_{n+1,n} = ratio * d_n
//! ratio = 0.05
//!
//! [coupling]       # C_{rk} = gamma / (1 + |r - k|) on the band
//! lower = 2
//! upper = 2
//! gamma = 0.1
//!
//! [initial]        # x_n = exp(-decay * n), or values = [...]
//! decay = 0.5
//! ```

use std::path::{Path, PathBuf};

use serde::Deserialize;

use scale_evolve::logistic::{Grid, Hierarchy, HierarchyKind, Kernel, LogisticParams};
use scale_evolve::ode_system::OdeModel;
use scale_evolve::{OperatorMatrix, ScaleVector};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Ode,
    Logistic,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum AlphaGrid {
    List(Vec<f64>),
    Range { start: f64, stop: f64, count: usize },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScaleSection {
    #[serde(default)]
    pub alpha_star: f64,
    pub alpha_grid: AlphaGrid,
    #[serde(default = "default_safety")]
    pub safety: f64,
}

fn default_safety() -> f64 {
    1.1
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeathSection {
    pub rates: Option<Vec<f64>>,
    pub offset: Option<f64>,
    pub slope: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BirthSection {
    pub ratio: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Profile {
    /// `gamma / (1 + |r - k|)`.
    #[default]
    Decaying,
    Constant,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CouplingSection {
    #[serde(default)]
    pub lower: usize,
    #[serde(default)]
    pub upper: usize,
    #[serde(default)]
    pub gamma: f64,
    #[serde(default)]
    pub profile: Profile,
    /// Extra entries `[row, col, value]`.
    #[serde(default)]
    pub entries: Vec<(usize, usize, f64)>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSection {
    pub decay: Option<f64>,
    pub values: Option<Vec<f64>>,
    /// Logistic models: which hierarchy the level values describe.
    pub hierarchy: Option<HierarchyKind>,
    /// Logistic models: constant value of each level.
    pub levels: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub cells: usize,
    pub spacing: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LogisticSection {
    #[serde(default)]
    pub mortality: f64,
    #[serde(default = "one")]
    pub theta: f64,
    #[serde(default)]
    pub b: f64,
    #[serde(default = "two")]
    pub n_max: usize,
}

fn one() -> f64 {
    1.0
}

fn two() -> usize {
    2
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Shape {
    Gaussian,
    Tophat,
    Zero,
    Samples,
    Csv,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelSpec {
    pub shape: Shape,
    pub mass: Option<f64>,
    pub width: Option<f64>,
    pub radius: Option<f64>,
    pub values: Option<Vec<f64>>,
    /// CSV with `offset,value` rows, relative to the model file.
    pub path: Option<PathBuf>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelsSection {
    pub a_plus: KernelSpec,
    pub a_minus: KernelSpec,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub kind: ModelKind,
    pub dim: Option<usize>,
    pub scale: Option<ScaleSection>,
    pub death: Option<DeathSection>,
    pub birth: Option<BirthSection>,
    pub coupling: Option<CouplingSection>,
    pub initial: Option<InitialSection>,
    pub grid: Option<GridSection>,
    pub logistic: Option<LogisticSection>,
    pub kernels: Option<KernelsSection>,
}

/// A validated model with its initial data.
#[derive(Debug, Clone)]
pub enum Model {
    Ode { model: OdeModel, initial: ScaleVector },
    Logistic { params: LogisticParams, n_max: usize, initial: Hierarchy },
}

fn cfg(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

fn need<T>(v: Option<T>, what: &str) -> Result<T, CliError> {
    v.ok_or_else(|| cfg(format!("missing {what}")))
}

impl AlphaGrid {
    pub fn points(&self) -> Result<Vec<f64>, CliError> {
        match self {
            AlphaGrid::List(v) => Ok(v.clone()),
            AlphaGrid::Range { start, stop, count } => {
                if *count < 2 || !(stop > start) {
                    return Err(cfg("[scale] alpha_grid range needs count >= 2 and stop > start"));
                }
                Ok((0..*count).map(|i| start + (stop - start) * i as f64 / (*count - 1) as f64).collect())
            }
        }
    }
}

impl ModelFile {
    /// Parses TOML text; syntax and schema errors carry line and column.
    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| cfg(e.to_string()))
    }

    pub fn build(self, base: &Path) -> Result<Model, CliError> {
        match self.kind {
            ModelKind::Ode => self.build_ode(),
            ModelKind::Logistic => self.build_logistic(base),
        }
    }

    fn build_ode(self) -> Result<Model, CliError> {
        for (present, name) in [(self.grid.is_some(), "[grid]"), (self.logistic.is_some(), "[logistic]"), (self.kernels.is_some(), "[kernels]")] {
            if present {
                return Err(cfg(format!("{name} belongs to logistic models")));
            }
        }
        let scale = need(self.scale, "[scale] section")?;
        let death = need(self.death, "[death] section")?;
        let rates = match (death.rates, death.offset, death.slope) {
            (Some(r), None, None) => r,
            (None, Some(o), Some(s)) => {
                let n = need(self.dim, "`dim` (needed by [death] offset/slope)")?;
                (0..n).map(|i| o + s * i as f64).collect()
            }
            _ => return Err(cfg("[death] needs either `rates` or both `offset` and `slope`")),
        };
        let n = rates.len();
        if let Some(d) = self.dim {
            if d != n {
                return Err(cfg(format!("`dim` = {d} but [death] gives {n} rates")));
            }
        }
        if n == 0 {
            return Err(cfg("[death] gives no rates"));
        }
        let b = match self.birth {
            Some(s) => OperatorMatrix::band(n, 1, 0, |r, k| if r == k { 0.0 } else { s.ratio * rates[k] })?,
            None => OperatorMatrix::zeros(n),
        };
        let c = match self.coupling {
            Some(s) => {
                let band = OperatorMatrix::band(n, s.lower, s.upper, |r, k| match s.profile {
                    Profile::Decaying => s.gamma / (1.0 + r.abs_diff(k) as f64),
                    Profile::Constant => s.gamma,
                })?;
                if let Some(&(r, k, _)) = s.entries.iter().find(|e| e.0 >= n || e.1 >= n) {
                    return Err(cfg(format!("[coupling] entry ({r}, {k}) is outside dim {n}")));
                }
                let mut sorted = s.entries.clone();
                sorted.sort_by_key(|e| (e.1, e.0));
                sorted.dedup_by_key(|e| (e.0, e.1));
                if sorted.len() != s.entries.len() {
                    return Err(cfg("[coupling] entries repeat a position"));
                }
                band.add(&OperatorMatrix::from_triplets(s.entries)?)
            }
            None => OperatorMatrix::zeros(n),
        };
        let model = OdeModel::new(rates, b, c, scale.alpha_star, scale.alpha_grid.points()?, scale.safety)
            .map_err(|e| cfg(e.to_string()))?;
        let init = need(self.initial, "[initial] section")?;
        if init.hierarchy.is_some() || init.levels.is_some() {
            return Err(cfg("[initial] `hierarchy` and `levels` belong to logistic models"));
        }
        let values = match (init.decay, init.values) {
            (Some(d), None) => (0..n).map(|i| (-d * i as f64).exp()).collect(),
            (None, Some(v)) => v,
            _ => return Err(cfg("[initial] needs exactly one of `decay` and `values`")),
        };
        let initial = ScaleVector::new(values).map_err(|e| cfg(format!("[initial]: {e}")))?;
        Ok(Model::Ode { model, initial })
    }

    fn build_logistic(self, base: &Path) -> Result<Model, CliError> {
        for (present, name) in [
            (self.dim.is_some(), "`dim`"),
            (self.scale.is_some(), "[scale]"),
            (self.death.is_some(), "[death]"),
            (self.birth.is_some(), "[birth]"),
            (self.coupling.is_some(), "[coupling]"),
        ] {
            if present {
                return Err(cfg(format!("{name} belongs to ode models")));
            }
        }
        let g = need(self.grid, "[grid] section")?;
        let grid = Grid::new(g.cells, g.spacing).map_err(|e| cfg(format!("[grid]: {e}")))?;
        let l = need(self.logistic, "[logistic] section")?;
        let kernels = need(self.kernels, "[kernels] section")?;
        let a_plus = kernel(&grid, &kernels.a_plus, base).map_err(|e| cfg(format!("[kernels.a_plus]: {e}")))?;
        let a_minus = kernel(&grid, &kernels.a_minus, base).map_err(|e| cfg(format!("[kernels.a_minus]: {e}")))?;
        let params = LogisticParams::new(grid, l.mortality, a_minus, a_plus, l.theta, l.b).map_err(|e| cfg(format!("[logistic]: {e}")))?;
        if l.n_max < 1 {
            return Err(cfg("[logistic] n_max must be >= 1"));
        }
        let init = need(self.initial, "[initial] section")?;
        if init.decay.is_some() || init.values.is_some() {
            return Err(cfg("[initial] `decay` and `values` belong to ode models"));
        }
        let kind = need(init.hierarchy, "[initial] `hierarchy`")?;
        let levels = need(init.levels, "[initial] `levels`")?;
        if levels.len() > l.n_max + 1 {
            return Err(cfg(format!("[initial] gives {} levels but n_max = {}", levels.len(), l.n_max)));
        }
        if levels.iter().any(|v| !v.is_finite()) {
            return Err(cfg("[initial] levels must be finite"));
        }
        let initial = Hierarchy::from_fn(kind, grid, l.n_max, |t| levels.get(t.len()).copied().unwrap_or(0.0));
        Ok(Model::Logistic { params, n_max: l.n_max, initial })
    }
}

fn kernel(grid: &Grid, spec: &KernelSpec, base: &Path) -> Result<Kernel, String> {
    let req = |v: Option<f64>, name: &str| v.ok_or_else(|| format!("shape {:?} needs `{name}`", spec.shape));
    let k = match spec.shape {
        Shape::Gaussian => Kernel::gaussian(grid, req(spec.mass, "mass")?, req(spec.width, "width")?),
        Shape::Tophat => Kernel::tophat(grid, req(spec.mass, "mass")?, req(spec.radius, "radius")?),
        Shape::Zero => Ok(Kernel::zero(grid)),
        Shape::Samples => {
            let v = spec.values.clone().ok_or("shape samples needs `values`")?;
            if v.len() != grid.cells {
                return Err(format!("`values` needs {} samples, got {}", grid.cells, v.len()));
            }
            Kernel::from_samples(v)
        }
        Shape::Csv => {
            let p = spec.path.as_ref().ok_or("shape csv needs `path`")?;
            let full = base.join(p);
            let f = std::fs::File::open(&full).map_err(|e| format!("{}: {e}", full.display()))?;
            Kernel::from_csv(grid, f)
        }
    };
    k.map_err(|e| e.to_string())
}

/// Reads and validates a model file.
pub fn load_model(path: &Path) -> Result<Model, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| cfg(format!("{}: {e}", path.display())))?;
    let file = ModelFile::parse(&text).map_err(|e| match e {
        CliError::Config(m) => cfg(format!("{}: {m}", path.display())),
        e => e,
    })?;
    file.build(path.parent().unwrap_or(Path::new(".")))
}

#[cfg(test)]
mod tests {
    use super::*;

    const ODE: &str = r#"
kind = "ode"
dim = 8
[scale]
alpha_grid = { start = 0.1, stop = 1.0, count = 10 }
[death]
offset = 1.0
slope = 1.0
[birth]
ratio = 0.05
[coupling]
lower = 1
upper = 1
gamma = 0.1
[initial]
decay = 0.5
"#;

    #[test]
    fn ode_model_builds() {
        let m = ModelFile::parse(ODE).unwrap().build(Path::new(".")).unwrap();
        let Model::Ode { model, initial } = m else { panic!() };
        assert_eq!(model.dim(), 8);
        assert_eq!(model.b.get(1, 0), 0.05);
        assert_eq!(model.c.get(0, 1), 0.05);
        assert_eq!(initial.get(2), (-1.0f64).exp());
    }

    #[test]
    fn unknown_keys_are_rejected_with_a_line() {
        let text = ODE.replace("ratio = 0.05", "ratio = 0.05\nrate = 1");
        let e = ModelFile::parse(&text).unwrap_err().to_string();
        assert!(e.contains("line") && e.contains("rate"), "{e}");
    }

    #[test]
    fn sections_of_the_other_kind_are_rejected() {
        let text = format!("{ODE}\n[grid]\ncells = 4\nspacing = 1.0\n");
        let e = ModelFile::parse(&text).unwrap().build(Path::new(".")).unwrap_err();
        assert_eq!(e.exit_code(), 2);
    }

    #[test]
    fn logistic_model_builds() {
        let text = r#"
kind = "logistic"
[grid]
cells = 8
spacing = 0.5
[logistic]
mortality = 1.0
theta = 1.2
n_max = 2
[kernels.a_plus]
shape = "gaussian"
mass = 0.5
width = 0.6
[kernels.a_minus]
shape = "tophat"
mass = 1.0
radius = 1.0
[initial]
hierarchy = "correlation"
levels = [1.0, 0.5]
"#;
        let Model::Logistic { params, n_max, initial } = ModelFile::parse(text).unwrap().build(Path::new(".")).unwrap() else {
            panic!()
        };
        assert_eq!((n_max, params.grid.cells), (2, 8));
        assert_eq!(initial.get(&[3]), 0.5);
        assert_eq!(initial.get(&[3, 1]), 0.0);
    }
}
