//! Generic task controllers. Each one turns its task reference and the current
//! measurements into resource requests and, once granted, into commands that
//! never exceed the grant on additive groups.

use serde::{Deserialize, Serialize};

use crate::error::ConfigError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Interpolation {
    Hold,
    #[default]
    Linear,
}

/// Piecewise waveform. Before the first breakpoint it returns the first value,
/// after the last one the last value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Waveform {
    /// `[time, value]` pairs with strictly increasing times.
    pub points: Vec<[f64; 2]>,
    #[serde(default)]
    pub interpolation: Interpolation,
}

impl Waveform {
    pub fn constant(v: f64) -> Self {
        Self {
            points: vec![[0.0, v]],
            interpolation: Interpolation::Hold,
        }
    }

    pub fn linear(points: Vec<[f64; 2]>) -> Self {
        Self {
            points,
            interpolation: Interpolation::Linear,
        }
    }

    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.points.is_empty() {
            out.push("waveform has no points".to_string());
        }
        if self.points.iter().flatten().any(|x| !x.is_finite()) {
            out.push("waveform points must be finite".to_string());
        }
        if self.points.windows(2).any(|w| w[1][0] <= w[0][0]) {
            out.push("waveform times must be strictly increasing".to_string());
        }
        out
    }

    pub fn eval(&self, t: f64) -> Result<f64, ConfigError> {
        let (first, last) = match (self.points.first(), self.points.last()) {
            (Some(f), Some(l)) => (f, l),
            _ => return Err(ConfigError::EmptyWaveform),
        };
        if t <= first[0] {
            return Ok(first[1]);
        }
        if t >= last[0] {
            return Ok(last[1]);
        }
        let i = self.points.partition_point(|p| p[0] <= t);
        let ([t0, v0], [t1, v1]) = (self.points[i - 1], self.points[i]);
        Ok(match self.interpolation {
            Interpolation::Hold => v0,
            Interpolation::Linear => v0 + (v1 - v0) * (t - t0) / (t1 - t0),
        })
    }

    /// Largest value over the waveform.
    pub fn peak(&self) -> f64 {
        self.points.iter().map(|p| p[1]).fold(f64::NEG_INFINITY, f64::max)
    }
}

/// A task's reference: a scalar setpoint or a waveform. Waveform time runs
/// from discharge start, or from task activation when `since_activation` is
/// set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Reference {
    Scalar(f64),
    Waveform {
        #[serde(flatten)]
        waveform: Waveform,
        #[serde(default, skip_serializing_if = "std::ops::Not::not")]
        since_activation: bool,
    },
}

impl Reference {
    pub fn eval(&self, time: f64, activated_at: f64) -> Result<f64, ConfigError> {
        match self {
            Reference::Scalar(v) => Ok(*v),
            Reference::Waveform {
                waveform,
                since_activation,
            } => waveform.eval(if *since_activation {
                time - activated_at
            } else {
                time
            }),
        }
    }

    pub fn problems(&self) -> Vec<String> {
        match self {
            Reference::Scalar(v) if !v.is_finite() => vec!["reference must be finite".into()],
            Reference::Scalar(_) => vec![],
            Reference::Waveform { waveform, .. } => waveform.problems(),
        }
    }
}

/// A request amount paired with the command for the current grant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RequestCommand {
    pub request: f64,
    pub command: f64,
}

/// Plays back a waveform: it requests exactly what it commands.
pub fn feedforward_step(wf: &Waveform, time: f64) -> Result<RequestCommand, ConfigError> {
    let v = wf.eval(time)?;
    Ok(RequestCommand {
        request: v,
        command: v,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PidGains {
    pub kp: f64,
    #[serde(default)]
    pub ki: f64,
    #[serde(default)]
    pub kd: f64,
    /// Output limits `[lo, hi]`.
    pub limits: [f64; 2],
    #[serde(default = "yes")]
    pub anti_windup: bool,
}

fn yes() -> bool {
    true
}

/// Positional PID memory.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PidState {
    /// Integral of the error over time.
    pub integrator: f64,
    pub previous_error: f64,
    pub previous_measurement: Option<f64>,
    pub output: f64,
    pub fault: bool,
}

/// Positional PID on `reference - measurement`. The derivative acts on the
/// measurement, and with anti-windup the integral term is kept inside
/// `±(hi - lo)`. Output is clamped to the limits. A non-finite measurement
/// holds the previous output and sets `fault`.
pub fn pid_step(
    reference: f64,
    measurement: f64,
    gains: &PidGains,
    state: PidState,
    dt: f64,
) -> (RequestCommand, PidState) {
    let [lo, hi] = gains.limits;
    if !measurement.is_finite() || !reference.is_finite() {
        let held = RequestCommand {
            request: state.output,
            command: state.output,
        };
        return (held, PidState { fault: true, ..state });
    }
    let error = reference - measurement;
    let mut integrator = state.integrator + error * dt;
    if gains.anti_windup && gains.ki > 0.0 {
        let bound = (hi - lo) / gains.ki;
        integrator = integrator.clamp(-bound, bound);
    }
    let derivative = match state.previous_measurement {
        Some(prev) => -(measurement - prev) / dt,
        None => 0.0,
    };
    let raw = gains.kp * error + gains.ki * integrator + gains.kd * derivative;
    let output = raw.clamp(lo, hi);
    (
        RequestCommand {
            request: output,
            command: output,
        },
        PidState {
            integrator,
            previous_error: error,
            previous_measurement: Some(measurement),
            output,
            fault: false,
        },
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DaPowerMode {
    Normal,
    Recovery,
}

/// Disruption-avoidance power: proportional to how far the distance has fallen
/// below `d_critical1` in normal mode, the full `p_max` in recovery mode.
pub fn da_power_step(
    distance: f64,
    d_critical1: f64,
    gain: f64,
    p_max: f64,
    mode: DaPowerMode,
) -> RequestCommand {
    let v = match mode {
        DaPowerMode::Recovery => p_max,
        DaPowerMode::Normal if distance >= d_critical1 => 0.0,
        DaPowerMode::Normal => (gain * (d_critical1 - distance)).clamp(0.0, p_max),
    };
    RequestCommand {
        request: v,
        command: v,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum DaGasMode {
    /// Follow the base ramp at `factor` times its rate.
    SlowRamp { factor: f64 },
    /// Hold the flux reached on entry.
    Freeze,
    /// Ramp linearly from the entry flux to zero.
    Cutoff { ramp_down: f64 },
}

/// What the gas controller remembers from the tick it was activated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DaGasEntry {
    pub time: f64,
    /// Flux actually applied when the mode was entered.
    pub flux: f64,
    /// Base (feedforward) flux at entry.
    pub base: f64,
}

/// Gas flux command for the current tick.
pub fn da_gas_step(base: f64, mode: DaGasMode, entry: &DaGasEntry, time: f64) -> f64 {
    match mode {
        DaGasMode::SlowRamp { factor } => entry.flux + factor * (base - entry.base),
        DaGasMode::Freeze => entry.flux,
        DaGasMode::Cutoff { ramp_down } => {
            let elapsed = time - entry.time;
            if ramp_down <= 0.0 || elapsed >= ramp_down {
                0.0
            } else {
                entry.flux * (1.0 - elapsed / ramp_down)
            }
        }
    }
    .max(0.0)
}

/// NTM stabilization: aim at the mode location and use all granted EC power.
/// Returns `(deposition, power)`.
pub fn ntm_step(rho: f64, granted_power: f64) -> (f64, f64) {
    (rho.clamp(0.0, 1.0), granted_power.max(0.0))
}
