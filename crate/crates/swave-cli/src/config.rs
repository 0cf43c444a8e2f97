//! Experiment configuration: preset, then TOML file, then command-line flags.

use std::fmt;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use serde::Deserialize;
use swave::carleman::CarlemanConfig;
use swave::spatial::{BoundarySpec, CoefficientSet, Grid, Profile};
use swave::tree::BinaryTree;

use crate::presets::{self, Preset};

/// Hard cap on `2^K * 2M`, the number of scalar state values per level set.
pub const HARD_BUDGET: usize = 1 << 22;

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Experiment {
    ConditionCheck,
    Gamma0,
    IdentityResidual,
    DualityCheck,
    Observability,
    Hum,
    NegativeClassical,
    NegativeLocalized,
    NegativeNoboundary,
    ReductionCheck,
}

/// Default lambda for the identity-residual experiment.
pub const IDENTITY_LAMBDA: f64 = 0.2;

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::ConditionCheck => "condition-check",
            Experiment::Gamma0 => "gamma0",
            Experiment::IdentityResidual => "identity-residual",
            Experiment::DualityCheck => "duality-check",
            Experiment::Observability => "observability",
            Experiment::Hum => "hum",
            Experiment::NegativeClassical => "negative-classical",
            Experiment::NegativeLocalized => "negative-localized",
            Experiment::NegativeNoboundary => "negative-noboundary",
            Experiment::ReductionCheck => "reduction-check",
        }
    }

    /// Exhaustive minimisations need small trees.
    fn default_size(self) -> (usize, usize) {
        match self {
            Experiment::NegativeClassical | Experiment::NegativeLocalized | Experiment::NegativeNoboundary => (3, 7),
            _ => (8, 15),
        }
    }

    /// The identity study sits in the asymptotic regime only for small
    /// lambda: at lambda = 1 the weight reaches e^16 and the refinement
    /// order on the standard cell ladder is still pre-asymptotic.
    fn default_lambda(self, preset: f64) -> f64 {
        match self {
            Experiment::IdentityResidual => IDENTITY_LAMBDA,
            _ => preset,
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A coefficient profile as written in the config file, e.g.
/// `a = { constant = 1.0 }` or `a1 = { affine = { intercept = 0.0, slope = 0.3 } }`.
#[derive(Clone, Copy, Debug, Deserialize, PartialEq)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
pub enum ProfileSpec {
    Constant(f64),
    Affine { intercept: f64, slope: f64 },
    Sine { base: f64, amplitude: f64, wavenumber: f64 },
}

impl From<ProfileSpec> for Profile {
    fn from(p: ProfileSpec) -> Self {
        match p {
            ProfileSpec::Constant(c) => Profile::Constant(c),
            ProfileSpec::Affine { intercept, slope } => Profile::Affine { intercept, slope },
            ProfileSpec::Sine {
                base,
                amplitude,
                wavenumber,
            } => Profile::Sine {
                base,
                amplitude,
                wavenumber,
            },
        }
    }
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub experiment: Option<String>,
    pub preset: Option<String>,
    /// `auto` (from the weight function), `none`, `left`, `right` or `both`.
    pub gamma0: Option<String>,
    #[serde(default)]
    pub grid: GridSection,
    #[serde(default)]
    pub coefficients: CoefficientSection,
    #[serde(default)]
    pub carleman: CarlemanSection,
    #[serde(default)]
    pub run: RunSection,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    #[serde(rename = "K")]
    pub k: Option<usize>,
    #[serde(rename = "M")]
    pub m: Option<usize>,
    #[serde(rename = "T")]
    pub t: Option<f64>,
    #[serde(rename = "L")]
    pub l: Option<f64>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoefficientSection {
    pub a: Option<ProfileSpec>,
    pub a1: Option<ProfileSpec>,
    pub a2: Option<ProfileSpec>,
    pub a3: Option<ProfileSpec>,
    pub a4: Option<ProfileSpec>,
    pub a5: Option<ProfileSpec>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CarlemanSection {
    pub x0: Option<f64>,
    pub alpha: Option<f64>,
    pub mu0: Option<f64>,
    pub c0: Option<f64>,
    pub c1: Option<f64>,
    pub lambda: Option<f64>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub seed: Option<u64>,
    pub samples: Option<usize>,
    pub out: Option<PathBuf>,
    /// Budget on `2^K * 2M`; capped by [`HARD_BUDGET`].
    pub budget: Option<usize>,
    /// Cell counts of the identity refinement study.
    pub cells: Option<Vec<usize>>,
    /// Shift of `a1` on the dual side in `reduction-check` (fault injection).
    pub fault: Option<f64>,
    /// Control region `[lo, hi]` (fractions of L) in `negative-localized`.
    pub mask: Option<[f64; 2]>,
    /// `f` or `g` in `negative-localized`.
    pub localized: Option<String>,
}

/// Flag overrides; `None` leaves the file or preset value in place.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub preset: Option<String>,
    pub k: Option<usize>,
    pub m: Option<usize>,
    pub t: Option<f64>,
    pub l: Option<f64>,
    pub x0: Option<f64>,
    pub alpha: Option<f64>,
    pub mu0: Option<f64>,
    pub c0: Option<f64>,
    pub c1: Option<f64>,
    pub lambda: Option<f64>,
    pub gamma0: Option<String>,
    pub samples: Option<usize>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub fault: Option<f64>,
    pub localized: Option<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Gamma0Choice {
    Auto,
    Fixed(BoundarySpec),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Localized {
    F,
    G,
}

/// Fully resolved, validated configuration.
#[derive(Clone, Debug)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub preset: String,
    pub k: usize,
    pub m: usize,
    pub horizon: f64,
    pub length: f64,
    pub a: Profile,
    pub lower: [Profile; 5],
    pub x0: f64,
    pub alpha: f64,
    /// `None`: use the largest admissible value.
    pub mu0: Option<f64>,
    /// `None`: found by the constant search.
    pub c0: Option<f64>,
    pub c1: Option<f64>,
    pub lambda: f64,
    pub gamma0: Gamma0Choice,
    pub seed: u64,
    pub samples: usize,
    pub out: PathBuf,
    pub cells: Vec<usize>,
    pub fault: f64,
    pub mask: [f64; 2],
    pub localized: Localized,
}

fn parse_gamma0(s: &str) -> anyhow::Result<Gamma0Choice> {
    Ok(match s {
        "auto" => Gamma0Choice::Auto,
        "none" | "empty" => Gamma0Choice::Fixed(BoundarySpec::EMPTY),
        "left" => Gamma0Choice::Fixed(BoundarySpec::LEFT),
        "right" => Gamma0Choice::Fixed(BoundarySpec::RIGHT),
        "both" => Gamma0Choice::Fixed(BoundarySpec::BOTH),
        other => bail!("gamma0 must be one of auto, none, left, right, both (got {other:?})"),
    })
}

fn parse_localized(s: &str) -> anyhow::Result<Localized> {
    match s {
        "f" => Ok(Localized::F),
        "g" => Ok(Localized::G),
        other => bail!("localized control must be f or g (got {other:?})"),
    }
}

pub fn read_file(path: &Path) -> anyhow::Result<FileConfig> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

impl ExperimentConfig {
    /// Layers preset, file and flags. Every error here is a configuration
    /// error (exit status 2).
    pub fn resolve(experiment: Experiment, file: &FileConfig, flags: &Overrides) -> anyhow::Result<Self> {
        if let Some(name) = &file.experiment {
            if name != experiment.name() {
                bail!("config file is for experiment {name:?}, not {:?}", experiment.name());
            }
        }
        let preset_name = flags
            .preset
            .clone()
            .or_else(|| file.preset.clone())
            .unwrap_or_else(|| presets::DEFAULT.to_string());
        let p: &Preset = presets::find(&preset_name)
            .with_context(|| format!("unknown preset {preset_name:?}; see `swave list-presets`"))?;
        let (dk, dm) = experiment.default_size();
        let c = &file.coefficients;
        let lower_file = [c.a1, c.a2, c.a3, c.a4, c.a5];
        let mut lower = p.lower;
        for (slot, spec) in lower.iter_mut().zip(lower_file) {
            if let Some(s) = spec {
                *slot = s.into();
            }
        }
        let car = &file.carleman;
        let run = &file.run;
        let cfg = Self {
            experiment,
            preset: preset_name.clone(),
            k: flags.k.or(file.grid.k).unwrap_or(dk),
            m: flags.m.or(file.grid.m).unwrap_or(dm),
            horizon: flags.t.or(file.grid.t).unwrap_or(p.horizon),
            length: flags.l.or(file.grid.l).unwrap_or(p.length),
            a: c.a.map(Profile::from).unwrap_or(p.a),
            lower,
            x0: flags.x0.or(car.x0).unwrap_or(p.x0),
            alpha: flags.alpha.or(car.alpha).unwrap_or(p.alpha),
            mu0: flags.mu0.or(car.mu0),
            c0: flags.c0.or(car.c0),
            c1: flags.c1.or(car.c1),
            lambda: flags
                .lambda
                .or(car.lambda)
                .unwrap_or(experiment.default_lambda(p.lambda)),
            gamma0: parse_gamma0(flags.gamma0.as_deref().or(file.gamma0.as_deref()).unwrap_or("auto"))?,
            seed: flags.seed.or(run.seed).unwrap_or(0),
            samples: flags.samples.or(run.samples).unwrap_or(10),
            out: flags
                .out
                .clone()
                .or_else(|| run.out.clone())
                .unwrap_or_else(|| PathBuf::from("swave-out").join(experiment.name())),
            cells: run.cells.clone().unwrap_or_else(|| vec![20, 40, 80]),
            fault: flags.fault.or(run.fault).unwrap_or(0.0),
            mask: run.mask.unwrap_or([0.0, 0.5]),
            localized: parse_localized(flags.localized.as_deref().or(run.localized.as_deref()).unwrap_or("f"))?,
        };
        cfg.validate(run.budget.unwrap_or(HARD_BUDGET))?;
        Ok(cfg)
    }

    fn validate(&self, budget: usize) -> anyhow::Result<()> {
        if self.k == 0 || self.k > 16 {
            bail!("K must be in 1..=16 (got {})", self.k);
        }
        if self.m < 3 {
            bail!("M must be at least 3 (got {})", self.m);
        }
        for (name, v) in [("T", self.horizon), ("L", self.length)] {
            if !(v.is_finite() && v > 0.0) {
                bail!("{name} must be positive and finite (got {v})");
            }
        }
        let budget = budget.min(HARD_BUDGET);
        let size = (1usize << self.k) * 2 * self.m;
        if size > budget {
            bail!("2^K * 2M = {size} exceeds the budget {budget}");
        }
        if self.samples == 0 {
            bail!("samples must be at least 1");
        }
        if self.cells.len() < 2 || self.cells.iter().any(|&c| c < 8) {
            bail!("cells needs at least two refinement levels, each with 8 or more cells");
        }
        let [lo, hi] = self.mask;
        if !(0.0..=1.0).contains(&lo) || !(0.0..=1.0).contains(&hi) || lo >= hi {
            bail!("mask must be an interval [lo, hi] with 0 <= lo < hi <= 1");
        }
        let finite = [self.x0, self.alpha, self.lambda, self.fault];
        if finite.iter().any(|v| !v.is_finite()) {
            bail!("Carleman parameters and fault must be finite");
        }
        Ok(())
    }

    pub fn grid(&self) -> swave::Result<Grid> {
        Grid::new(self.length, self.m, self.a)
    }

    pub fn tree(&self) -> swave::Result<BinaryTree> {
        BinaryTree::new(self.k, self.horizon)
    }

    pub fn coefficients(&self, grid: &Grid) -> CoefficientSet {
        CoefficientSet::from_profiles(grid, self.lower)
    }

    /// Carleman parameters with `mu0` defaulted to `mu0_max`; `c0`, `c1`
    /// are left at zero when not given and filled in by the caller.
    pub fn carleman(&self, mu0_max: f64) -> CarlemanConfig {
        CarlemanConfig {
            x0: self.x0,
            alpha: self.alpha,
            mu0: self.mu0.unwrap_or(mu0_max),
            c0: self.c0.unwrap_or(0.0),
            c1: self.c1.unwrap_or(0.0),
            lambda: self.lambda,
            horizon: self.horizon,
        }
    }

    /// Flat `(name, value)` list for the CSV and report.
    pub fn parameters(&self) -> Vec<(String, String)> {
        let mut out = vec![
            ("preset".to_string(), self.preset.clone()),
            ("K".to_string(), self.k.to_string()),
            ("M".to_string(), self.m.to_string()),
            ("T".to_string(), self.horizon.to_string()),
            ("L".to_string(), self.length.to_string()),
            ("a".to_string(), presets::describe(self.a)),
        ];
        for (i, p) in self.lower.iter().enumerate() {
            out.push((format!("a{}", i + 1), presets::describe(*p)));
        }
        out.push(("x0".to_string(), self.x0.to_string()));
        out.push(("alpha".to_string(), self.alpha.to_string()));
        out.push(("lambda".to_string(), self.lambda.to_string()));
        out.push(("seed".to_string(), self.seed.to_string()));
        out.push(("samples".to_string(), self.samples.to_string()));
        out
    }
}
