//! Controller library: conventional baselines and the nonlinear energy
//! controllers, plus the energy-to-physical control map and a discrete AGC
//! loop for the two-area scenario.
//!
//! All controllers are deterministic state machines stepped once per
//! simulation step; one instance per simulation.
//!
//! # Energy controllers
//!
//! Both energy controllers regulate the source module through its energy
//! variables. The reference map turns the load's demanded flow `ż_ref`
//! (power `P_dem` at regulated voltage `v_ref`) into an energy reference
//! with a voltage droop:
//!
//! ```text
//! i_ref = P_dem / v_ref + droop · (v_ref − v)
//! E_ref = L · i_ref² / 2
//! ```
//!
//! The droop slope must exceed the constant-power-load curve
//! (`droop > P/v²`) for the interface node to have a restoring
//! characteristic; this is the feed-forward self-adaptation that aligns the
//! source with the load requirement.
//!
//! - The *single-timescale* controller aligns power only: it commands
//!   `P^u = E/τ + P^out − k_E (E − E_ref)` and realizes it quasi-statically
//!   as `u1 = P^u / i_L1`, leaving the reactive-rate channel uncommanded.
//!   The closed energy loop is exactly `Ė = −k_E (E − E_ref)`, but the
//!   alignment bandwidth is `k_E`, so fast interface dynamics are out of
//!   reach.
//! - The *two-timescale* controller additionally cancels the tangent-energy
//!   term and drives the energy rate with the fast gain:
//!   `Q̇^u = 4E_t + Q̇^out + k_p (p − p_ref)`, realized dynamically through
//!   the physical map `du1/dt = (u1/i)·di/dt − Q̇^u/i`. Substituted into the
//!   aggregate dynamics this yields the exactly linear closed loop
//!   `Ė = −k_E(E − E_ref)`, `ṗ = −k_p(p − p_ref)`.

use serde::{Deserialize, Serialize};

use crate::components::RlcParams;
use crate::intvar::PortFlow;
use crate::numerics::GuardTrip;
use crate::{Error, Result};

/// Two-loop PI gains (outer voltage loop produces a current reference,
/// inner current loop produces the source voltage).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PiTwoLoopGains {
    pub outer_kp: f64,
    pub outer_ki: f64,
    pub inner_kp: f64,
    pub inner_ki: f64,
    pub v_ref: f64,
}

impl Default for PiTwoLoopGains {
    fn default() -> Self {
        Self {
            outer_kp: 1.0,
            outer_ki: 10.0,
            inner_kp: 5.0,
            inner_ki: 100.0,
            v_ref: 1.0,
        }
    }
}

impl PiTwoLoopGains {
    pub fn validate(&self) -> Result<()> {
        positive_gains(
            "pi_two_loop",
            &[
                ("outer_kp", self.outer_kp),
                ("outer_ki", self.outer_ki),
                ("inner_kp", self.inner_kp),
                ("inner_ki", self.inner_ki),
                ("v_ref", self.v_ref),
            ],
        )
    }
}

/// PD gains with a first-order derivative filter.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PdGains {
    pub kp: f64,
    pub kd: f64,
    /// Derivative filter time constant (s).
    pub t_f: f64,
    pub v_ref: f64,
}

impl Default for PdGains {
    fn default() -> Self {
        Self {
            kp: 5.0,
            kd: 0.05,
            t_f: 1e-3,
            v_ref: 1.0,
        }
    }
}

impl PdGains {
    pub fn validate(&self) -> Result<()> {
        positive_gains(
            "pd",
            &[
                ("kp", self.kp),
                ("kd", self.kd),
                ("t_f", self.t_f),
                ("v_ref", self.v_ref),
            ],
        )
    }
}

/// Single-timescale energy gains.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnergySingleGains {
    /// Energy loop gain k_E (1/s).
    pub k_e: f64,
    pub v_ref: f64,
    /// Voltage droop slope of the reference map (pu/pu).
    pub droop: f64,
    /// Current floor for the quasi-static division.
    pub i_floor: f64,
}

impl Default for EnergySingleGains {
    fn default() -> Self {
        Self {
            k_e: 20.0,
            v_ref: 1.0,
            droop: 2.0,
            i_floor: 0.01,
        }
    }
}

impl EnergySingleGains {
    pub fn validate(&self) -> Result<()> {
        positive_gains(
            "energy_single",
            &[
                ("k_e", self.k_e),
                ("v_ref", self.v_ref),
                ("droop", self.droop),
                ("i_floor", self.i_floor),
            ],
        )
    }
}

fn positive_gains(kind: &str, gains: &[(&str, f64)]) -> Result<()> {
    for (name, v) in gains {
        if !(v.is_finite() && *v > 0.0) {
            return Err(Error::Config(format!(
                "{kind} gain {name} must be positive, got {v}"
            )));
        }
    }
    Ok(())
}

/// Two-timescale energy gains; `k_p / k_e` is the timescale separation and
/// must be at least 10.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnergyTwoTsGains {
    /// Slow (energy) gain k_E (1/s).
    pub k_e: f64,
    /// Fast (energy-rate) gain k_p (1/s).
    pub k_p: f64,
    pub v_ref: f64,
    /// Voltage droop slope of the reference map (pu/pu).
    pub droop: f64,
    /// Current floor of the physical control map.
    pub i_floor: f64,
}

impl Default for EnergyTwoTsGains {
    fn default() -> Self {
        Self {
            k_e: 20.0,
            k_p: 400.0,
            v_ref: 1.0,
            droop: 2.0,
            i_floor: 0.01,
        }
    }
}

impl EnergyTwoTsGains {
    pub fn validate(&self) -> Result<()> {
        positive_gains(
            "energy_two_ts",
            &[
                ("k_e", self.k_e),
                ("k_p", self.k_p),
                ("v_ref", self.v_ref),
                ("droop", self.droop),
                ("i_floor", self.i_floor),
            ],
        )?;
        if self.k_p / self.k_e < 10.0 {
            return Err(Error::Config(format!(
                "energy_two_ts separation k_p/k_e = {} below 10",
                self.k_p / self.k_e
            )));
        }
        Ok(())
    }
}

/// What a controller sees each step.
#[derive(Debug, Clone, Copy)]
pub struct RlcMeasurement {
    pub t: f64,
    pub i_l: f64,
    pub v: f64,
    pub di_dt: f64,
    pub dv_dt: f64,
    /// Load demand (the power the load module requires) and its rate.
    pub p_dem: f64,
    pub p_dem_dot: f64,
}

/// Controller step output.
#[derive(Debug, Clone, Copy)]
pub struct ControlOutput {
    pub u1: f64,
    pub saturated: bool,
    /// The physical-map guard held the previous output.
    pub guard_held: bool,
}

/// Two-loop PI controller state.
#[derive(Debug, Clone)]
pub struct PiTwoLoop {
    pub gains: PiTwoLoopGains,
    integ_v: f64,
    integ_i: f64,
}

impl PiTwoLoop {
    pub fn new(gains: PiTwoLoopGains) -> Self {
        Self {
            gains,
            integ_v: 0.0,
            integ_i: 0.0,
        }
    }

    /// Bumpless start at an operating point: the integrators absorb the
    /// pre-existing current and actuation so the first output equals
    /// `u_init` when the loop closes at zero error.
    pub fn at_operating_point(gains: PiTwoLoopGains, i_init: f64, u_init: f64) -> Self {
        let integ_i = u_init - gains.v_ref;
        Self {
            gains,
            integ_v: i_init,
            integ_i,
        }
    }

    /// Outer PI on voltage error → current reference; inner PI on current
    /// error → source voltage (with `v_ref` feedforward). Integrators
    /// freeze while the output is clamped (anti-windup).
    pub fn step(&mut self, meas_v: f64, meas_i: f64, u_max: f64, dt: f64) -> ControlOutput {
        let g = &self.gains;
        let e_v = g.v_ref - meas_v;
        let i_ref = g.outer_kp * e_v + self.integ_v;
        let e_i = i_ref - meas_i;
        let u_raw = g.v_ref + g.inner_kp * e_i + self.integ_i;
        let u1 = u_raw.clamp(0.0, u_max);
        let saturated = u1 != u_raw;
        if !saturated {
            self.integ_v += g.outer_ki * e_v * dt;
            self.integ_i += g.inner_ki * e_i * dt;
        }
        ControlOutput {
            u1,
            saturated,
            guard_held: false,
        }
    }
}

/// PD controller state with filtered differentiation.
#[derive(Debug, Clone)]
pub struct PdController {
    pub gains: PdGains,
    e_filtered: Option<f64>,
}

impl PdController {
    pub fn new(gains: PdGains) -> Self {
        Self {
            gains,
            e_filtered: None,
        }
    }

    pub fn step(&mut self, meas_v: f64, u_max: f64, dt: f64) -> ControlOutput {
        let g = &self.gains;
        let e = g.v_ref - meas_v;
        let e_f = self.e_filtered.get_or_insert(e);
        let derivative = (e - *e_f) / g.t_f;
        *e_f += dt * derivative;
        let u_raw = g.kp * e + g.kd * derivative;
        let u1 = u_raw.clamp(0.0, u_max);
        ControlOutput {
            u1,
            saturated: u1 != u_raw,
            guard_held: false,
        }
    }
}

/// Single-timescale power-alignment command.
///
/// `P^u = E/τ + P^out − k_E (E − E_ref)` with `P^out` measured out-positive;
/// substituted into the aggregate energy row this closes
/// `Ė = −k_E (E − E_ref)` exactly. `tau = None` drops the loss term.
pub fn energy_control_single(
    e: f64,
    e_ref: f64,
    port: PortFlow,
    tau: Option<f64>,
    k_e: f64,
) -> f64 {
    let loss = tau.map_or(0.0, |t| e / t);
    loss + port.p - k_e * (e - e_ref)
}

/// Two-timescale energy command `u_z = (P^u, Q̇^u)`.
///
/// The power channel is the slow loop of [`energy_control_single`]; the
/// reactive-rate channel cancels the tangent-energy term and the measured
/// outgoing flow, then drives the energy rate with the fast gain:
/// `Q̇^u = 4·E_t + Q̇^out + k_p (p − p_ref)`. Substituted into the aggregate
/// dynamics the closed loop is exactly `Ė = −k_E(E − E_ref)`,
/// `ṗ = −k_p(p − p_ref)`; the cancellation is algebraic, not approximate.
pub fn energy_control_two_ts(
    x_z: (f64, f64),
    refs: (f64, f64),
    e_t: f64,
    port: PortFlow,
    tau: Option<f64>,
    gains: &EnergyTwoTsGains,
) -> PortFlow {
    let (e, p) = x_z;
    let (e_ref, p_ref) = refs;
    PortFlow {
        p: energy_control_single(e, e_ref, port, tau, gains.k_e),
        q_dot: 4.0 * e_t + port.q_dot + gains.k_p * (p - p_ref),
    }
}

/// Map an energy-space command to the physical source-voltage rate:
/// `du1/dt = (u1/i_L1)·di/dt − Q̇^u/i_L1`.
///
/// Only the reactive-rate channel is physically realizable: the source has
/// a single degree of freedom and its power `P^u = u1·i_L1` follows from
/// the trajectory. Trips the guard at the current floor; callers hold the
/// previous `u1` on a trip.
pub fn map_to_physical(
    u_z: PortFlow,
    state: (f64, f64),
    u1: f64,
    i_floor: f64,
) -> std::result::Result<f64, GuardTrip> {
    let (i_l, di_dt) = state;
    if i_l.abs() <= i_floor {
        return Err(GuardTrip(format!(
            "inductor current |{i_l:.4}| at or below control floor {i_floor}"
        )));
    }
    Ok((u1 / i_l) * di_dt - u_z.q_dot / i_l)
}

/// Energy reference map shared by both energy controllers: demanded power
/// at regulated voltage, with a droop that steepens the current-voltage
/// characteristic beyond the constant-power-load curve.
fn energy_reference(params: &RlcParams, v_ref: f64, droop: f64, meas: &RlcMeasurement) -> f64 {
    let i_ref = meas.p_dem / v_ref + droop * (v_ref - meas.v);
    0.5 * params.l1 * i_ref * i_ref
}

/// Rate of the energy reference along the measured trajectory (used as
/// feedforward by the two-timescale controller).
fn energy_reference_rate(
    params: &RlcParams,
    v_ref: f64,
    droop: f64,
    meas: &RlcMeasurement,
) -> f64 {
    let i_ref = meas.p_dem / v_ref + droop * (v_ref - meas.v);
    let di_ref = meas.p_dem_dot / v_ref - droop * meas.dv_dt;
    params.l1 * i_ref * di_ref
}

/// Single-timescale energy controller operating on the RLC module.
#[derive(Debug, Clone)]
pub struct EnergySingleController {
    pub gains: EnergySingleGains,
    last_u1: f64,
}

impl EnergySingleController {
    pub fn new(gains: EnergySingleGains, u1_init: f64) -> Self {
        Self {
            gains,
            last_u1: u1_init,
        }
    }

    pub fn step(&mut self, params: &RlcParams, meas: &RlcMeasurement, _dt: f64) -> ControlOutput {
        let g = &self.gains;
        let e = 0.5 * params.l1 * meas.i_l * meas.i_l;
        let e_ref = energy_reference(params, g.v_ref, g.droop, meas);
        let out = crate::intvar::port_flow_rlc((meas.i_l, meas.v), (meas.di_dt, meas.dv_dt));
        let p_u = energy_control_single(e, e_ref, out, params.tau(), g.k_e);

        // Quasi-static realization: source power = commanded power.
        if meas.i_l.abs() <= g.i_floor {
            return ControlOutput {
                u1: self.last_u1,
                saturated: false,
                guard_held: true,
            };
        }
        let u_raw = p_u / meas.i_l;
        let u1 = u_raw.clamp(0.0, params.u1_max);
        self.last_u1 = u1;
        ControlOutput {
            u1,
            saturated: u1 != u_raw,
            guard_held: false,
        }
    }
}

/// Two-timescale energy controller; the source voltage is an internal state
/// integrated from the physical control map.
#[derive(Debug, Clone)]
pub struct EnergyTwoTsController {
    pub gains: EnergyTwoTsGains,
    u1: f64,
}

impl EnergyTwoTsController {
    pub fn new(gains: EnergyTwoTsGains, u1_init: f64) -> Self {
        Self { gains, u1: u1_init }
    }

    pub fn step(&mut self, params: &RlcParams, meas: &RlcMeasurement, dt: f64) -> ControlOutput {
        let g = &self.gains;
        let es = crate::intvar::energy_state_rlc(
            params,
            (meas.i_l, meas.v),
            (meas.di_dt, meas.dv_dt),
        );
        let out = crate::intvar::port_flow_rlc((meas.i_l, meas.v), (meas.di_dt, meas.dv_dt));

        let e_ref = energy_reference(params, g.v_ref, g.droop, meas);
        // Slow loop plus reference-rate feedforward: tracking p_ref makes
        // E follow E_ref at rate k_E.
        let p_ref = energy_reference_rate(params, g.v_ref, g.droop, meas)
            - g.k_e * (es.e - e_ref);

        let u_z = energy_control_two_ts((es.e, es.p), (e_ref, p_ref), es.e_t, out, params.tau(), g);

        match map_to_physical(u_z, (meas.i_l, meas.di_dt), self.u1, g.i_floor) {
            Ok(du) => {
                let u_raw = self.u1 + du * dt;
                let u1 = u_raw.clamp(0.0, params.u1_max);
                self.u1 = u1;
                ControlOutput {
                    u1,
                    saturated: u1 != u_raw,
                    guard_held: false,
                }
            }
            Err(_) => ControlOutput {
                u1: self.u1,
                saturated: false,
                guard_held: true,
            },
        }
    }
}

/// Any RLC-scenario controller.
#[derive(Debug, Clone)]
pub enum RlcController {
    /// Source frozen at its initial value.
    None { u1: f64 },
    PiTwoLoop(PiTwoLoop),
    Pd(PdController),
    EnergySingle(EnergySingleController),
    EnergyTwoTs(EnergyTwoTsController),
}

impl RlcController {
    pub fn kind_name(&self) -> &'static str {
        match self {
            RlcController::None { .. } => "none",
            RlcController::PiTwoLoop(_) => "pi_two_loop",
            RlcController::Pd(_) => "pd",
            RlcController::EnergySingle(_) => "energy_single",
            RlcController::EnergyTwoTs(_) => "energy_two_ts",
        }
    }

    pub fn step(&mut self, params: &RlcParams, meas: &RlcMeasurement, dt: f64) -> ControlOutput {
        match self {
            RlcController::None { u1 } => ControlOutput {
                u1: *u1,
                saturated: false,
                guard_held: false,
            },
            RlcController::PiTwoLoop(c) => c.step(meas.v, meas.i_l, params.u1_max, dt),
            RlcController::Pd(c) => c.step(meas.v, params.u1_max, dt),
            RlcController::EnergySingle(c) => c.step(params, meas, dt),
            RlcController::EnergyTwoTs(c) => c.step(params, meas, dt),
        }
    }
}

/// AGC tuning for one area.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AgcConfig {
    /// Frequency bias β (pu·s/rad).
    pub bias: f64,
    /// Integral gain k_I (1/s).
    pub k_i: f64,
    /// Frequency deadband ε (rad/s).
    pub deadband: f64,
    /// Conventional per-unit droop through which the set-point increment is
    /// turned into unit valve commands. The printed governor model has no
    /// primary frequency path, so the secondary channel carries its own
    /// droop constant.
    pub droop_pu: f64,
}

impl Default for AgcConfig {
    fn default() -> Self {
        Self {
            // Composite frequency-response characteristic of the default
            // two-generator area: Σ|Kd| / ω0.
            bias: 4.0 / 377.0,
            k_i: 2.0,
            deadband: 1e-3,
            droop_pu: 0.05,
        }
    }
}

/// Discrete AGC integrator state for one area.
#[derive(Debug, Clone, Default)]
pub struct AgcState {
    integral: f64,
}

impl AgcState {
    /// One secondary-control update: `ACE = ΔF_tie + β·Δω` (deadband on the
    /// frequency term), `Δω_ref = −k_I · ∫ACE` by discrete integration.
    pub fn update(
        &mut self,
        area_freq_dev_rad_s: f64,
        tie_dev_pu: f64,
        cfg: &AgcConfig,
        dt: f64,
    ) -> f64 {
        let freq_term = if area_freq_dev_rad_s.abs() <= cfg.deadband {
            0.0
        } else {
            area_freq_dev_rad_s
        };
        let ace = tie_dev_pu + cfg.bias * freq_term;
        self.integral += ace * dt;
        -cfg.k_i * self.integral
    }
}
