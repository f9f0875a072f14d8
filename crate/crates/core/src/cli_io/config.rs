//! Experiment configuration: one JSON document, with a few top-level fields
//! that command-line flags may override.

use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field_model::StiefelFrame;
use crate::frame::FrameKind;
use crate::linalg;
use crate::solutions::{
    balanced_torus, chiral_wave, constant_solution, direct_sum_fields, unbalanced_torus, ChiralCurve, ClosedFormField, GoursatOptions,
    InitialDataSpec, LightConeGrid,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Model {
    pub n: usize,
    pub m: usize,
}

impl Model {
    pub fn validate(&self) -> Result<()> {
        if self.m == 0 || self.m >= self.n {
            return Err(Error::Config(format!("need 1 <= m < N, got N = {}, m = {}", self.n, self.m)));
        }
        Ok(())
    }
}

/// A closed-form solution (or negative control) from the catalog. Entries
/// that need random data draw it from the experiment seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum CatalogEntry {
    /// Constant random frame.
    Constant { n: usize, m: usize },
    /// `exp(ξ_L A) X0` with random X0 and anti-hermitian A.
    ChiralWave { n: usize, m: usize },
    BalancedTorus { a: [f64; 2], b: [f64; 2] },
    UnbalancedTorus { c1_squared: f64, a: [f64; 2], b: [f64; 2] },
    DirectSum { first: Box<CatalogEntry>, second: Box<CatalogEntry> },
}

impl CatalogEntry {
    pub fn model(&self) -> Model {
        match self {
            CatalogEntry::Constant { n, m } | CatalogEntry::ChiralWave { n, m } => Model { n: *n, m: *m },
            CatalogEntry::BalancedTorus { .. } | CatalogEntry::UnbalancedTorus { .. } => Model { n: 2, m: 1 },
            CatalogEntry::DirectSum { first, second } => {
                let (a, b) = (first.model(), second.model());
                Model { n: a.n + b.n, m: a.m + b.m }
            }
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            CatalogEntry::Constant { .. } | CatalogEntry::ChiralWave { .. } => self.model().validate(),
            CatalogEntry::UnbalancedTorus { c1_squared, .. } if !(0.0..=1.0).contains(c1_squared) => {
                Err(Error::Config(format!("c1_squared = {c1_squared} outside [0, 1]")))
            }
            CatalogEntry::DirectSum { first, second } => {
                first.validate()?;
                second.validate()
            }
            _ => Ok(()),
        }
    }

    /// The closed-form field; solutions are certified, negative controls are not.
    pub fn build(&self, seed: u64) -> Result<ClosedFormField> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ok(match self {
            CatalogEntry::Constant { n, m } => constant_solution(StiefelFrame::random(*n, *m, &mut rng)?)?.into_field(),
            CatalogEntry::ChiralWave { n, m } => {
                let x0 = StiefelFrame::random(*n, *m, &mut rng)?;
                let a = linalg::random_anti_hermitian(*n, &mut rng);
                chiral_wave(ChiralCurve::exponential(&x0, &a)?)?.into_field()
            }
            CatalogEntry::BalancedTorus { a, b } => balanced_torus(a[0], a[1], b[0], b[1])?.into_field(),
            CatalogEntry::UnbalancedTorus { c1_squared, a, b } => unbalanced_torus(*c1_squared, *a, *b)?,
            CatalogEntry::DirectSum { first, second } => {
                direct_sum_fields(&first.build(seed)?, &second.build(seed.wrapping_add(1))?)?
            }
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SolutionSource {
    Catalog {
        entry: CatalogEntry,
    },
    /// Characteristic initial value problem with random smooth data.
    Goursat {
        n: usize,
        m: usize,
        #[serde(default)]
        modes: Option<usize>,
        #[serde(default)]
        amplitude: Option<f64>,
        #[serde(default)]
        frequency: Option<f64>,
    },
}

impl SolutionSource {
    pub fn model(&self) -> Model {
        match self {
            SolutionSource::Catalog { entry } => entry.model(),
            SolutionSource::Goursat { n, m, .. } => Model { n: *n, m: *m },
        }
    }

    pub fn initial_data(&self, seed: u64) -> Option<InitialDataSpec> {
        match self {
            SolutionSource::Catalog { .. } => None,
            SolutionSource::Goursat { n, m, modes, amplitude, frequency } => {
                let mut spec = InitialDataSpec::new(*n, *m, seed);
                spec.modes = modes.unwrap_or(spec.modes);
                spec.amplitude = amplitude.unwrap_or(spec.amplitude);
                spec.frequency = frequency.unwrap_or(spec.frequency);
                Some(spec)
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Analysis {
    Verify,
    Surface,
    Geometry,
    Frame,
    All,
}

/// Pass thresholds for `verify`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    /// Largest EL residual; defaults to 1e-10 for catalog solutions and 1e-2
    /// for solved fields.
    pub el: Option<f64>,
    pub constraint: f64,
    /// Allowed deviation of the measured EL order from 2 over refinements.
    pub order: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances { el: None, constraint: 1e-10, order: 0.2 }
    }
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

fn default_analyses() -> Vec<Analysis> {
    vec![Analysis::All]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Optional cross-check of the dimensions implied by `source`.
    #[serde(default)]
    pub model: Option<Model>,
    pub source: SolutionSource,
    pub grid: LightConeGrid,
    /// Number of additional grids, each with half the spacing of the last.
    #[serde(default)]
    pub refinements: usize,
    #[serde(default)]
    pub basepoint: (usize, usize),
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default = "default_output")]
    pub output: PathBuf,
    #[serde(default = "default_analyses")]
    pub analyses: Vec<Analysis>,
    #[serde(default)]
    pub frame: FrameKind,
    #[serde(default)]
    pub goursat: GoursatOptions,
}

/// Command-line values that replace the corresponding config fields.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    /// `n_L, n_R, h_L, h_R`.
    pub grid: Option<(usize, usize, f64, f64)>,
    pub seed: Option<u64>,
    pub output: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let config: ExperimentConfig = serde_json::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn apply(mut self, overrides: &Overrides) -> Result<Self> {
        if let Some((n_l, n_r, h_l, h_r)) = overrides.grid {
            self.grid = LightConeGrid { n_l, n_r, h_l, h_r, ..self.grid };
        }
        if let Some(seed) = overrides.seed {
            self.seed = seed;
        }
        if let Some(out) = &overrides.output {
            self.output = out.clone();
        }
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let model = self.source.model();
        model.validate()?;
        if let Some(declared) = self.model {
            if declared != model {
                return Err(Error::Config(format!(
                    "model (N = {}, m = {}) disagrees with the source (N = {}, m = {})",
                    declared.n, declared.m, model.n, model.m
                )));
            }
        }
        if let SolutionSource::Catalog { entry } = &self.source {
            entry.validate()?;
        }
        self.grid.validate()?;
        self.grid.check_basepoint(self.basepoint.0, self.basepoint.1)?;
        if self.refinements > 4 {
            return Err(Error::Config(format!("at most 4 refinements, got {}", self.refinements)));
        }
        if self.output.as_os_str().is_empty() {
            return Err(Error::Config("empty output directory".into()));
        }
        Ok(())
    }

    /// Requested analyses with `all` expanded, sorted and deduplicated.
    pub fn analyses(&self) -> Vec<Analysis> {
        let mut out: Vec<Analysis> = self
            .analyses
            .iter()
            .flat_map(|a| match a {
                Analysis::All => vec![Analysis::Verify, Analysis::Surface, Analysis::Geometry, Analysis::Frame],
                a => vec![*a],
            })
            .collect();
        out.sort();
        out.dedup();
        out
    }

    /// Base grid followed by the refinements.
    pub fn grids(&self) -> Vec<LightConeGrid> {
        std::iter::successors(Some(self.grid), |g| Some(g.refined())).take(self.refinements + 1).collect()
    }

    /// EL threshold for `verify`.
    pub fn el_tolerance(&self) -> f64 {
        self.tolerances.el.unwrap_or(match self.source {
            SolutionSource::Catalog { .. } => 1e-10,
            SolutionSource::Goursat { .. } => 1e-2,
        })
    }
}
