use std::path::Path;

use bifurcat_core::continuation::StepControl;
use bifurcat_core::{ModelParams, ParamName};
use serde::Deserialize;

use crate::Failure;

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsSpec {
    pub r1: f64,
    pub r2: f64,
    pub alpha: f64,
    pub kappa1: f64,
    pub kappa2: f64,
    #[serde(default = "one")]
    pub a: f64,
    #[serde(default = "one")]
    pub c: f64,
    #[serde(default = "one")]
    pub m: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateSpec {
    /// Initial `[E1, E2, M]`; drawn near the first coexistence equilibrium
    /// when absent.
    pub initial: Option<[f64; 3]>,
    #[serde(default)]
    pub t_start: f64,
    pub t_end: f64,
    /// Number of uniform output intervals; accepted steps are written when absent.
    pub samples: Option<usize>,
    pub rtol: Option<f64>,
    pub atol: Option<f64>,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepSpec {
    pub h0: f64,
    pub hmin: f64,
    pub hmax: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContinuationSpec {
    pub free: Vec<String>,
    pub ranges: Vec<[f64; 2]>,
    /// 1-based index among coexistence equilibria sorted by `E2`.
    pub equilibrium: Option<usize>,
    /// Start state, Newton-corrected before use.
    pub start: Option<[f64; 3]>,
    pub step: Option<StepSpec>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CyclesSpec {
    pub free: String,
    /// Signed parameter offset from the Hopf value for the first cycle.
    pub offset: f64,
    /// Range for the Hopf search along `free`.
    pub search_range: [f64; 2],
    /// Sweep range for the cycle family; a single cycle when absent.
    pub range: Option<[f64; 2]>,
    pub equilibrium: Option<usize>,
    #[serde(default = "default_max_points")]
    pub max_points: usize,
    pub step: Option<StepSpec>,
}

fn default_max_points() -> usize {
    400
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FigureSource {
    ContinueEq,
    ContinueHopf,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FigureSpec {
    pub source: FigureSource,
    /// Column plotted along the horizontal axis; defaults to the first free parameter.
    pub x: Option<String>,
    /// Column plotted along the vertical axis.
    pub y: String,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub params: ParamsSpec,
    pub simulate: Option<SimulateSpec>,
    pub continuation: Option<ContinuationSpec>,
    pub cycles: Option<CyclesSpec>,
    pub figure: Option<FigureSpec>,
}

impl Scenario {
    pub fn load(path: &Path) -> Result<Self, Failure> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Failure::Input(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, Failure> {
        let s: Scenario = toml::from_str(text).map_err(|e| Failure::Input(format!("schema violation: {e}")))?;
        s.model_params()?;
        if let Some(c) = &s.continuation {
            c.free_params()?;
            c.step_control()?;
        }
        if let Some(c) = &s.cycles {
            parse_name(&c.free)?;
            step_control(c.step)?;
        }
        Ok(s)
    }

    pub fn model_params(&self) -> Result<ModelParams, Failure> {
        let p = &self.params;
        ModelParams::new(p.r1, p.r2, p.alpha, p.kappa1, p.kappa2, p.a, p.c, p.m)
            .map_err(|e| Failure::Input(format!("schema violation: {e}")))
    }

    pub fn section<'a, T>(section: &'a Option<T>, name: &str) -> Result<&'a T, Failure> {
        section
            .as_ref()
            .ok_or_else(|| Failure::Input(format!("schema violation: missing [{name}] section")))
    }
}

pub fn parse_name(s: &str) -> Result<ParamName, Failure> {
    s.parse()
        .map_err(|_| Failure::Input(format!("schema violation: unknown parameter name {s:?}")))
}

fn step_control(s: Option<StepSpec>) -> Result<StepControl, Failure> {
    match s {
        None => Ok(StepControl::default()),
        Some(s) => StepControl::new(s.h0, s.hmin, s.hmax).map_err(|e| Failure::Input(format!("schema violation: {e}"))),
    }
}

impl ContinuationSpec {
    pub fn free_params(&self) -> Result<Vec<(ParamName, (f64, f64))>, Failure> {
        if self.free.is_empty() || self.free.len() > 2 || self.free.len() != self.ranges.len() {
            return Err(Failure::Input(
                "schema violation: continuation needs one or two free parameters, each with a range".into(),
            ));
        }
        self.free
            .iter()
            .zip(&self.ranges)
            .map(|(n, r)| {
                if !(r[0] < r[1]) {
                    return Err(Failure::Input(format!("schema violation: empty range {r:?} for {n}")));
                }
                Ok((parse_name(n)?, (r[0], r[1])))
            })
            .collect()
    }

    pub fn step_control(&self) -> Result<StepControl, Failure> {
        step_control(self.step)
    }
}

impl CyclesSpec {
    pub fn step_control(&self) -> Result<StepControl, Failure> {
        match self.step {
            Some(_) => step_control(self.step),
            None => Ok(StepControl::new(1e-3, 1e-8, 5e-2).expect("valid defaults")),
        }
    }
}
