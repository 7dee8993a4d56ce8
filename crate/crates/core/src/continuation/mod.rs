//! Pseudo-arclength continuation of equilibria and Hopf curves, and
//! shooting-based limit cycles.

mod arclength;
pub mod cycles;
pub mod equilibrium;
pub mod hopf;

use serde::{Deserialize, Serialize};

use crate::model::{ModelParams, ParamName, State};
use crate::stability::CharCoeffs;

pub use cycles::{cycle_family_sweep, find_limit_cycle, CycleFamily, CyclePoint, LimitCycle, ShootingConfig};
pub use equilibrium::{continue_equilibrium, locate_hopf};
pub use hopf::continue_hopf;

/// Corrector stopping tolerance.
pub const NEWTON_TOL: f64 = 1e-10;
pub const NEWTON_MAX_ITER: usize = 8;
/// Certificate residuals of emitted events stay below this.
pub const EVENT_TOL: f64 = 1e-7;
/// Arclength resolution of event location.
pub const LOCATE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepControl {
    pub h0: f64,
    pub hmin: f64,
    pub hmax: f64,
}

impl Default for StepControl {
    fn default() -> Self {
        Self {
            h0: 1e-2,
            hmin: 1e-8,
            hmax: 0.5,
        }
    }
}

impl StepControl {
    pub fn new(h0: f64, hmin: f64, hmax: f64) -> crate::Result<Self> {
        if !(hmin > 0.0 && hmin <= h0 && h0 <= hmax && hmax.is_finite()) {
            return Err(crate::Error::Precondition(format!(
                "step bounds must satisfy 0 < hmin <= h0 <= hmax, got ({h0}, {hmin}, {hmax})"
            )));
        }
        Ok(Self { h0, hmin, hmax })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum EventKind {
    /// Fold of equilibria.
    LP,
    /// Branch point.
    BP,
    /// Hopf.
    H,
    /// Generalized Hopf (Bautin).
    GH,
    /// Bogdanov-Takens.
    BT,
    /// Cusp.
    CP,
    /// Fold of limit cycles.
    LPC,
}

impl EventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::LP => "LP",
            EventKind::BP => "BP",
            EventKind::H => "H",
            EventKind::GH => "GH",
            EventKind::BT => "BT",
            EventKind::CP => "CP",
            EventKind::LPC => "LPC",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventLocation {
    pub params: Vec<(ParamName, f64)>,
    pub state: State,
}

impl EventLocation {
    pub fn param(&self, name: ParamName) -> Option<f64> {
        self.params.iter().find(|(n, _)| *n == name).map(|(_, v)| *v)
    }

    /// `base` with the located parameter values substituted.
    pub fn apply(&self, base: &ModelParams) -> ModelParams {
        let mut p = *base;
        for &(n, v) in &self.params {
            p.set(n, v);
        }
        p
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BifurcationEvent {
    pub kind: EventKind,
    pub location: EventLocation,
    /// Named residuals and diagnostic values, in a fixed order.
    pub certificates: Vec<(String, f64)>,
}

impl BifurcationEvent {
    pub fn certificate(&self, name: &str) -> Option<f64> {
        self.certificates.iter().find(|(n, _)| n == name).map(|(_, v)| *v)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchPoint {
    /// Arclength from the first point.
    pub s: f64,
    /// Values of the free parameters, in `Branch::free_params` order.
    pub params: Vec<f64>,
    pub state: State,
    pub coeffs: CharCoeffs,
    /// `A0`.
    pub tau_lp: f64,
    /// `A1 A2 - A0`.
    pub tau_h: f64,
    /// Determinant of the bordered continuation Jacobian.
    pub tau_bp: f64,
    pub l1: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub base: ModelParams,
    pub free_params: Vec<ParamName>,
    pub points: Vec<BranchPoint>,
    pub events: Vec<BifurcationEvent>,
    /// The corrector broke down before the range was covered.
    pub terminated: bool,
}

impl Branch {
    pub fn params_at(&self, i: usize) -> ModelParams {
        let mut p = self.base;
        for (n, v) in self.free_params.iter().zip(&self.points[i].params) {
            p.set(*n, *v);
        }
        p
    }

    pub fn events_of(&self, kind: EventKind) -> impl Iterator<Item = &BifurcationEvent> {
        self.events.iter().filter(move |e| e.kind == kind)
    }

    /// Point `i` of a Hopf branch as an H event, with the parameters in
    /// `free_params` order.
    pub fn hopf_event_at(&self, i: usize) -> Option<BifurcationEvent> {
        let q = self.points.get(i)?;
        let cc = &q.coeffs;
        if cc.a1 <= 0.0 || (cc.a0 - cc.a1 * cc.a2).abs() > EVENT_TOL * cc.scale() {
            return None;
        }
        Some(BifurcationEvent {
            kind: EventKind::H,
            location: EventLocation {
                params: self.free_params.iter().copied().zip(q.params.iter().copied()).collect(),
                state: q.state,
            },
            certificates: vec![
                ("hopf_residual".into(), (cc.a0 - cc.a1 * cc.a2).abs()),
                ("A1".into(), cc.a1),
                ("omega".into(), cc.a1.sqrt()),
                ("l1".into(), q.l1.unwrap_or(f64::NAN)),
            ],
        })
    }
}
