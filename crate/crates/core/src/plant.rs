//! 0-D surrogate plasma standing in for the device-dependent layer.
//!
//! State: stored energy (explicit Euler energy balance), normalized edge
//! density (first-order lag toward `k_gas * gas_flux`, updated with the exact
//! zero-order-hold solution), confinement factor H98y2 from a density
//! degradation table, and accumulated NBI energy. The plasma disrupts once its
//! signed distance to the density-limit boundary falls below the disruption
//! margin; after that only the time advances.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::actuator::ActuatorCommand;
use crate::controllers::Waveform;
use crate::error::SimFault;
use crate::monitor::SignalFrame;
use crate::state::ContinuousSignal;

/// Signal names published by the plant.
pub mod signal {
    pub const H98Y2: &str = "h98y2";
    pub const NE_EDGE_NORM: &str = "ne_edge_norm";
    pub const STORED_ENERGY: &str = "stored_energy";
    pub const NBI_POWER: &str = "nbi_power";
    pub const NBI_ENERGY: &str = "nbi_energy";
    pub const NBI_ENERGY_FRAC: &str = "nbi_energy_frac";
    pub const GAS_FLUX: &str = "gas_flux";
    pub const EC_POWER: &str = "ec_power";
    pub const D_NE_EDGE: &str = "d_ne_edge";

    pub const ALL: [&str; 9] = [
        H98Y2,
        NE_EDGE_NORM,
        STORED_ENERGY,
        NBI_POWER,
        NBI_ENERGY,
        NBI_ENERGY_FRAC,
        GAS_FLUX,
        EC_POWER,
        D_NE_EDGE,
    ];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StableSide {
    /// Stable where H98y2 lies above the curve.
    #[default]
    Above,
    Below,
}

/// Piecewise-linear density-limit curve in the (ne_edge_norm, H98y2) plane.
/// The end segments are extended as rays so the curve splits the whole plane.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DisruptionBoundary {
    /// `[ne_edge_norm, h98y2]` vertices, strictly increasing in density.
    pub vertices: Vec<[f64; 2]>,
    #[serde(default)]
    pub stable_side: StableSide,
}

impl DisruptionBoundary {
    pub fn new(vertices: Vec<[f64; 2]>) -> Self {
        Self {
            vertices,
            stable_side: StableSide::Above,
        }
    }

    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.vertices.len() < 2 {
            out.push("boundary needs at least two vertices".to_string());
        }
        if self.vertices.iter().flatten().any(|x| !x.is_finite()) {
            out.push("boundary vertices must be finite".to_string());
        }
        if self.vertices.windows(2).any(|w| w[1][0] <= w[0][0]) {
            out.push("boundary vertices must be strictly increasing in ne_edge_norm".to_string());
        }
        out
    }

    /// Curve height at `ne`, extrapolating the end segments.
    fn height(&self, ne: f64) -> f64 {
        let v = &self.vertices;
        let i = v
            .partition_point(|p| p[0] <= ne)
            .clamp(1, v.len() - 1);
        let ([x0, y0], [x1, y1]) = (v[i - 1], v[i]);
        y0 + (y1 - y0) * (ne - x0) / (x1 - x0)
    }
}

fn dist_to_segment(p: [f64; 2], a: [f64; 2], b: [f64; 2], ray: bool) -> f64 {
    let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
    let len2 = dx * dx + dy * dy;
    let mut s = ((p[0] - a[0]) * dx + (p[1] - a[1]) * dy) / len2;
    s = if ray { s.max(0.0) } else { s.clamp(0.0, 1.0) };
    let (cx, cy) = (a[0] + s * dx, a[1] + s * dy);
    (p[0] - cx).hypot(p[1] - cy)
}

/// Signed Euclidean distance from `(ne_edge_norm, h98y2)` to the boundary:
/// positive on the stable side, negative past the limit.
pub fn distance(h98y2: f64, ne_edge_norm: f64, boundary: &DisruptionBoundary) -> f64 {
    let v = &boundary.vertices;
    let n = v.len();
    let p = [ne_edge_norm, h98y2];
    let mut d = v
        .windows(2)
        .map(|w| dist_to_segment(p, w[0], w[1], false))
        .fold(f64::INFINITY, f64::min);
    // Rays continuing the first and last segments outward.
    let back = [2.0 * v[0][0] - v[1][0], 2.0 * v[0][1] - v[1][1]];
    let fwd = [2.0 * v[n - 1][0] - v[n - 2][0], 2.0 * v[n - 1][1] - v[n - 2][1]];
    d = d
        .min(dist_to_segment(p, v[0], back, true))
        .min(dist_to_segment(p, v[n - 1], fwd, true));
    let above = h98y2 >= boundary.height(ne_edge_norm);
    let stable = match boundary.stable_side {
        StableSide::Above => above,
        StableSide::Below => !above,
    };
    if stable {
        d
    } else {
        -d
    }
}

/// NBI energy as a fraction of its limit, the signal watched for the
/// actuator energy-limit event.
pub fn nbi_energy_check(nbi_energy: f64, limit: f64, time: f64) -> Option<ContinuousSignal> {
    ContinuousSignal::new(signal::NBI_ENERGY_FRAC, nbi_energy / limit, time)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialPlasma {
    pub ne_edge_norm: f64,
    /// Defaults to the ohmic equilibrium `p_ohmic * tau_e`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stored_energy: Option<f64>,
    #[serde(default)]
    pub gas_flux: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantParams {
    /// Energy confinement time, s.
    #[serde(deserialize_with = "crate::units::seconds")]
    pub tau_e: f64,
    /// Scaling-law confinement time, s.
    #[serde(deserialize_with = "crate::units::seconds")]
    pub tau_98: f64,
    /// Edge density lag time constant, s.
    #[serde(deserialize_with = "crate::units::seconds")]
    pub tau_n: f64,
    /// Density reached per unit gas flux at equilibrium.
    pub k_gas: f64,
    #[serde(deserialize_with = "crate::units::megawatts")]
    pub p_ohmic: f64,
    pub nbi_group: String,
    pub gas_group: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ec_group: Option<String>,
    #[serde(
        default = "default_energy_limit",
        deserialize_with = "crate::units::megajoules"
    )]
    pub nbi_energy_limit: f64,
    /// `[ne_edge_norm, factor]` points, linear in between, held outside.
    pub degradation: Vec<[f64; 2]>,
    pub boundary: DisruptionBoundary,
    /// Distance at which the surrogate actually disrupts; 0 means on the curve.
    #[serde(default)]
    pub disruption_margin: f64,
    pub initial: InitialPlasma,
    /// Scripted signals published alongside the plant state.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub signals: BTreeMap<String, Waveform>,
}

fn default_energy_limit() -> f64 {
    1.3
}

impl PlantParams {
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        for (name, v) in [
            ("tau_e", self.tau_e),
            ("tau_98", self.tau_98),
            ("tau_n", self.tau_n),
            ("nbi_energy_limit", self.nbi_energy_limit),
        ] {
            if !(v.is_finite() && v > 0.0) {
                out.push(format!("plant.{name} must be positive"));
            }
        }
        for (name, v) in [
            ("k_gas", self.k_gas),
            ("p_ohmic", self.p_ohmic),
            ("disruption_margin", self.disruption_margin),
            ("initial.ne_edge_norm", self.initial.ne_edge_norm),
            ("initial.gas_flux", self.initial.gas_flux),
        ] {
            if !v.is_finite() {
                out.push(format!("plant.{name} must be finite"));
            }
        }
        if self.degradation.is_empty() {
            out.push("plant.degradation needs at least one point".to_string());
        }
        if self.degradation.windows(2).any(|w| w[1][0] <= w[0][0]) {
            out.push("plant.degradation must be strictly increasing in density".to_string());
        }
        out.extend(self.boundary.problems().into_iter().map(|p| format!("plant.{p}")));
        for (name, wf) in &self.signals {
            if signal::ALL.contains(&name.as_str()) {
                out.push(format!("scripted signal `{name}` shadows a plant signal"));
            }
            out.extend(wf.problems().into_iter().map(|p| format!("signal `{name}`: {p}")));
        }
        out
    }

    pub fn degradation_at(&self, ne: f64) -> f64 {
        let pts = &self.degradation;
        match (pts.first(), pts.last()) {
            (Some(f), _) if ne <= f[0] => f[1],
            (_, Some(l)) if ne >= l[0] => l[1],
            _ => {
                let i = pts.partition_point(|p| p[0] <= ne);
                let ([x0, y0], [x1, y1]) = (pts[i - 1], pts[i]);
                y0 + (y1 - y0) * (ne - x0) / (x1 - x0)
            }
        }
    }

    pub fn h98y2(&self, ne: f64) -> f64 {
        self.tau_e / self.tau_98 * self.degradation_at(ne)
    }

    /// Names of every signal the plant publishes, built-in then scripted.
    pub fn signal_names(&self) -> Vec<String> {
        signal::ALL
            .iter()
            .map(|s| s.to_string())
            .chain(self.signals.keys().cloned())
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantState {
    pub time: f64,
    pub h98y2: f64,
    pub ne_edge_norm: f64,
    /// MJ.
    pub stored_energy: f64,
    /// MW applied over the last step.
    pub nbi_power: f64,
    /// MJ, non-decreasing.
    pub nbi_energy: f64,
    pub gas_flux: f64,
    pub ec_power: f64,
    pub d_ne_edge: f64,
    pub disrupted: bool,
}

impl PlantState {
    pub fn initial(params: &PlantParams) -> Self {
        let ne = params.initial.ne_edge_norm;
        let h98 = params.h98y2(ne);
        let d = distance(h98, ne, &params.boundary);
        Self {
            time: 0.0,
            h98y2: h98,
            ne_edge_norm: ne,
            stored_energy: params
                .initial
                .stored_energy
                .unwrap_or(params.p_ohmic * params.tau_e),
            nbi_power: 0.0,
            nbi_energy: 0.0,
            gas_flux: params.initial.gas_flux,
            ec_power: 0.0,
            d_ne_edge: d,
            disrupted: d < params.disruption_margin,
        }
    }

    /// Signals visible to the monitor at the state's time.
    pub fn signals(&self, params: &PlantParams) -> SignalFrame {
        let mut frame = SignalFrame::new(self.time)
            .with(signal::H98Y2, self.h98y2)
            .with(signal::NE_EDGE_NORM, self.ne_edge_norm)
            .with(signal::STORED_ENERGY, self.stored_energy)
            .with(signal::NBI_POWER, self.nbi_power)
            .with(signal::NBI_ENERGY, self.nbi_energy)
            .with(
                signal::NBI_ENERGY_FRAC,
                self.nbi_energy / params.nbi_energy_limit,
            )
            .with(signal::GAS_FLUX, self.gas_flux)
            .with(signal::EC_POWER, self.ec_power)
            .with(signal::D_NE_EDGE, self.d_ne_edge);
        for (name, wf) in &params.signals {
            // Waveforms are checked non-empty at validation.
            frame = frame.with(name, wf.eval(self.time).unwrap_or(f64::NAN));
        }
        frame
    }
}

fn command_for(commands: &[ActuatorCommand], group: Option<&str>) -> Result<f64, SimFault> {
    let Some(group) = group else { return Ok(0.0) };
    match commands.iter().find(|c| c.group == group) {
        None => Ok(0.0),
        Some(c) if c.value.is_finite() => Ok(c.value),
        Some(c) => Err(SimFault::NonFiniteCommand {
            group: group.to_string(),
            value: c.value,
        }),
    }
}

/// Advances the plant by `dt` under `commands`.
pub fn plant_step(
    commands: &[ActuatorCommand],
    state: &PlantState,
    dt: f64,
    params: &PlantParams,
) -> Result<PlantState, SimFault> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(SimFault::BadStep(dt));
    }
    for c in commands {
        if !c.value.is_finite() {
            return Err(SimFault::NonFiniteCommand {
                group: c.group.clone(),
                value: c.value,
            });
        }
    }
    let time = state.time + dt;
    if state.disrupted {
        return Ok(PlantState {
            time,
            ..state.clone()
        });
    }
    let p_nbi = command_for(commands, Some(&params.nbi_group))?.max(0.0);
    let gas = command_for(commands, Some(&params.gas_group))?.max(0.0);
    let p_ec = command_for(commands, params.ec_group.as_deref())?.max(0.0);

    let w = state.stored_energy
        + dt * (p_nbi + p_ec + params.p_ohmic - state.stored_energy / params.tau_e);
    let target = params.k_gas * gas;
    let ne = target + (state.ne_edge_norm - target) * (-dt / params.tau_n).exp();
    let h98 = params.h98y2(ne);
    let d = distance(h98, ne, &params.boundary);
    Ok(PlantState {
        time,
        h98y2: h98,
        ne_edge_norm: ne,
        stored_energy: w,
        nbi_power: p_nbi,
        nbi_energy: state.nbi_energy + dt * p_nbi,
        gas_flux: gas,
        ec_power: p_ec,
        d_ne_edge: d,
        disrupted: d < params.disruption_margin,
    })
}
