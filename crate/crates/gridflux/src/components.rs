//! Structure-preserving component models.
//!
//! Generators are modeled as a generator-turbine-governor (G-T-G) cascade.
//! In the transformed state space the rotor angle is eliminated and the
//! generated power `P_G` becomes a state, which exposes the conservation
//! structure used by the interaction-variable layer: the power-coupling
//! matrix `K_P` of an interconnected area has zero row sums by construction.
//!
//! The electromagnetic test circuit is a controllable voltage source behind
//! an RL branch feeding a constant-power load through an interface
//! capacitor. The constant-power branch has negative incremental resistance
//! and collapses the interface voltage unless the source is controlled.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::numerics::GuardTrip;
use crate::{Error, Result};

/// Generator-turbine-governor parameters.
///
/// `damping` is applied as `-|damping| / inertia` in the frequency row so
/// that the stored coefficient always damps; the sign of the configured
/// value is ignored.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GtgParams {
    /// Inertia constant M (s·pu).
    pub inertia: f64,
    /// Damping coefficient Kd (pu); applied as -|Kd|/M.
    pub damping: f64,
    /// Turbine time constant Tt (s).
    pub turbine_time: f64,
    /// Turbine gain Kt (pu).
    pub turbine_gain: f64,
    /// Governor time constant Tg (s).
    pub governor_time: f64,
    /// Droop feedback gain r (pu).
    pub droop: f64,
    /// Nominal angular frequency ω0 (rad/s).
    pub omega0: f64,
}

impl GtgParams {
    pub fn validate(&self) -> Result<()> {
        let checks = [
            ("inertia", self.inertia),
            ("turbine_time", self.turbine_time),
            ("governor_time", self.governor_time),
            ("omega0", self.omega0),
        ];
        for (name, v) in checks {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!(
                    "GtgParams.{name} must be positive and finite, got {v}"
                )));
            }
        }
        for (name, v) in [
            ("damping", self.damping),
            ("turbine_gain", self.turbine_gain),
            ("droop", self.droop),
        ] {
            if !v.is_finite() {
                return Err(Error::Config(format!(
                    "GtgParams.{name} must be finite, got {v}"
                )));
            }
        }
        Ok(())
    }

    /// The power-injection column `c_M = [0, 1/M, 0, 0]ᵀ` of the local model.
    pub fn c_m(&self) -> DVector<f64> {
        DVector::from_column_slice(&[0.0, 1.0 / self.inertia, 0.0, 0.0])
    }
}

/// A dense LTI model `ẋ = A x + B u` with named states and inputs.
#[derive(Debug, Clone)]
pub struct StateSpaceModel {
    pub a: DMatrix<f64>,
    pub input: DMatrix<f64>,
    pub state_labels: Vec<String>,
    pub input_labels: Vec<String>,
}

/// Local G-T-G model per the printed four-state pattern.
///
/// States `[θ_G, ω_G, P_T, a]`; the only nonzero entries of `A_LC` are
/// `θ̇ = ω0·ω`, `ω̇ = -(|Kd|/M)ω + P_T/M`, `Ṗ_T = -P_T/Tt + (Kt/Tt)a`,
/// `ȧ = -(r/Tg)a`. The input is the generated power `P_G`, applied through
/// `-c_M` (generated electrical power decelerates the rotor).
pub fn build_gtg_model(p: &GtgParams) -> Result<StateSpaceModel> {
    p.validate()?;
    let mut a = DMatrix::<f64>::zeros(4, 4);
    a[(0, 1)] = p.omega0;
    a[(1, 1)] = -p.damping.abs() / p.inertia;
    a[(1, 2)] = 1.0 / p.inertia;
    a[(2, 2)] = -1.0 / p.turbine_time;
    a[(2, 3)] = p.turbine_gain / p.turbine_time;
    a[(3, 3)] = -p.droop / p.governor_time;

    let input = DMatrix::from_column_slice(4, 1, (-p.c_m()).as_slice());
    Ok(StateSpaceModel {
        a,
        input,
        state_labels: vec!["theta".into(), "omega".into(), "p_t".into(), "a".into()],
        input_labels: vec!["p_g".into()],
    })
}

/// 3x3 local block over `[ω, P_T, a]` (rotor angle eliminated).
fn local_block(p: &GtgParams) -> DMatrix<f64> {
    let mut a = DMatrix::<f64>::zeros(3, 3);
    a[(0, 0)] = -p.damping.abs() / p.inertia;
    a[(0, 1)] = 1.0 / p.inertia;
    a[(1, 1)] = -1.0 / p.turbine_time;
    a[(1, 2)] = p.turbine_gain / p.turbine_time;
    a[(2, 2)] = -p.droop / p.governor_time;
    a
}

/// Standalone generator in transformed state space.
///
/// States `[ω, P_T, a, P_G]`: the rotor angle is dropped (nothing depends on
/// it) and the generated power is appended, driven by `Ṗ_G = k_p·ω + Ṗ_L`.
/// The disturbance column maps `Ṗ_L` into the `P_G` row. With `k_p = 0` the
/// model is block triangular and `P_G` integrates the load rate exactly,
/// which is the structurally singular case carrying a conservation law.
pub fn build_standalone_model(p: &GtgParams, k_p: f64) -> Result<StateSpaceModel> {
    p.validate()?;
    let mut a = DMatrix::<f64>::zeros(4, 4);
    a.view_mut((0, 0), (3, 3)).copy_from(&local_block(p));
    a[(0, 3)] = -1.0 / p.inertia;
    a[(3, 0)] = k_p;

    let mut input = DMatrix::<f64>::zeros(4, 1);
    input[(3, 0)] = 1.0;
    Ok(StateSpaceModel {
        a,
        input,
        state_labels: vec!["omega".into(), "p_t".into(), "a".into(), "p_g".into()],
        input_labels: vec!["p_l_dot".into()],
    })
}

/// A load attached to a generator's internal node.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LoadAttachment {
    /// Index of the hosting generator node.
    pub gen: usize,
    /// Scheduled load power (pu).
    pub power: f64,
}

/// An internal line between two generator nodes.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Line {
    pub from: usize,
    pub to: usize,
    /// Line susceptance (pu), must be positive.
    pub susceptance: f64,
}

/// A boundary line to a neighboring area.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TieLine {
    /// Local generator node hosting the tie.
    pub gen: usize,
    /// Tie susceptance (pu).
    pub susceptance: f64,
    /// Identifier of the neighbor area.
    pub neighbor: usize,
}

/// Topology of one balancing area.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AreaTopology {
    pub generators: Vec<GtgParams>,
    #[serde(default)]
    pub loads: Vec<LoadAttachment>,
    #[serde(default)]
    pub lines: Vec<Line>,
    #[serde(default)]
    pub tie_lines: Vec<TieLine>,
}

/// Area model in transformed state space.
///
/// State ordering: per-generator local blocks `[ω_i, P_T,i, a_i]` followed
/// by the generated-power block `[P_G,1 … P_G,n]`. Inputs: one `Ḟ_e`
/// channel per generator node followed by one `Ṗ_L` channel per load.
#[derive(Debug, Clone)]
pub struct AreaModel {
    pub ss: StateSpaceModel,
    pub n_gen: usize,
    /// Power-coupling matrix `K_P = ω0 · L(susceptance graph)`; rows sum to
    /// zero (structural singularity).
    pub k_p: DMatrix<f64>,
    /// Load-to-node map `D_P` (n_gen × n_load).
    pub d_p: DMatrix<f64>,
    pub omega0: f64,
}

impl AreaModel {
    pub fn dim(&self) -> usize {
        4 * self.n_gen
    }
    pub fn omega_index(&self, gen: usize) -> usize {
        3 * gen
    }
    pub fn p_t_index(&self, gen: usize) -> usize {
        3 * gen + 1
    }
    pub fn a_index(&self, gen: usize) -> usize {
        3 * gen + 2
    }
    pub fn p_g_index(&self, gen: usize) -> usize {
        3 * self.n_gen + gen
    }
}

fn check_connected(n: usize, lines: &[Line]) -> Result<()> {
    if n <= 1 {
        return Ok(());
    }
    let mut adj = vec![Vec::new(); n];
    for l in lines {
        adj[l.from].push(l.to);
        adj[l.to].push(l.from);
    }
    let mut seen = vec![false; n];
    let mut stack = vec![0usize];
    seen[0] = true;
    while let Some(u) = stack.pop() {
        for &v in &adj[u] {
            if !seen[v] {
                seen[v] = true;
                stack.push(v);
            }
        }
    }
    match seen.iter().position(|&s| !s) {
        None => Ok(()),
        Some(node) => Err(Error::DisconnectedTopology { node }),
    }
}

/// Graph Laplacian of the internal susceptance graph.
fn susceptance_laplacian(n: usize, lines: &[Line]) -> DMatrix<f64> {
    let mut l = DMatrix::<f64>::zeros(n, n);
    for line in lines {
        let (i, j, b) = (line.from, line.to, line.susceptance);
        l[(i, i)] += b;
        l[(j, j)] += b;
        l[(i, j)] -= b;
        l[(j, i)] -= b;
    }
    l
}

/// Assemble the stacked area matrix from a given power coupling.
pub(crate) fn area_matrix_from_kp(
    gens: &[GtgParams],
    k_p: &DMatrix<f64>,
    d_p: &DMatrix<f64>,
) -> StateSpaceModel {
    let n = gens.len();
    let dim = 4 * n;
    let mut a = DMatrix::<f64>::zeros(dim, dim);
    let mut state_labels = Vec::with_capacity(dim);
    for (i, p) in gens.iter().enumerate() {
        a.view_mut((3 * i, 3 * i), (3, 3)).copy_from(&local_block(p));
        a[(3 * i, 3 * n + i)] = -1.0 / p.inertia;
        state_labels.push(format!("omega_{i}"));
        state_labels.push(format!("p_t_{i}"));
        state_labels.push(format!("a_{i}"));
    }
    for i in 0..n {
        for j in 0..n {
            a[(3 * n + i, 3 * j)] = k_p[(i, j)];
        }
        state_labels.push(format!("p_g_{}", i));
    }

    let n_load = d_p.ncols();
    let mut input = DMatrix::<f64>::zeros(dim, n + n_load);
    let mut input_labels = Vec::with_capacity(n + n_load);
    for i in 0..n {
        input[(3 * n + i, i)] = 1.0;
        input_labels.push(format!("f_e_dot_{i}"));
    }
    for l in 0..n_load {
        for i in 0..n {
            input[(3 * n + i, n + l)] = d_p[(i, l)];
        }
        input_labels.push(format!("p_l_dot_{l}"));
    }

    StateSpaceModel {
        a,
        input,
        state_labels,
        input_labels,
    }
}

/// Build an interconnected-area model per the stacked transformed form.
///
/// `K_P` comes from the DC-power-flow Jacobian over generator internal
/// nodes, `K_P = ω0 · L`, whose rows sum to zero; `D_P` routes each load's
/// `Ṗ_L` to its hosting node. Tie-line terms are not part of the islanded
/// matrix; they enter as the `Ḟ_e` input channels (and as coupling blocks
/// when areas are interconnected, see `sim::two_area`).
pub fn build_area_model(topo: &AreaTopology) -> Result<AreaModel> {
    let n = topo.generators.len();
    if n == 0 {
        return Err(Error::Config("area has no generators".into()));
    }
    for p in &topo.generators {
        p.validate()?;
    }
    let omega0 = topo.generators[0].omega0;
    if topo
        .generators
        .iter()
        .any(|p| (p.omega0 - omega0).abs() > 1e-12 * omega0)
    {
        return Err(Error::Config(
            "all generators in an area must share omega0".into(),
        ));
    }
    for l in &topo.lines {
        if l.from >= n || l.to >= n || l.from == l.to {
            return Err(Error::Config(format!(
                "line endpoints ({}, {}) invalid for {n} generators",
                l.from, l.to
            )));
        }
        if !(l.susceptance.is_finite() && l.susceptance > 0.0) {
            return Err(Error::Config(format!(
                "line susceptance must be positive, got {}",
                l.susceptance
            )));
        }
    }
    for ld in &topo.loads {
        if ld.gen >= n {
            return Err(Error::Config(format!(
                "load attached to generator {} but area has {n}",
                ld.gen
            )));
        }
    }
    for tie in &topo.tie_lines {
        if tie.gen >= n {
            return Err(Error::Config(format!(
                "tie line attached to generator {} but area has {n}",
                tie.gen
            )));
        }
        if !(tie.susceptance.is_finite() && tie.susceptance > 0.0) {
            return Err(Error::Config(format!(
                "tie susceptance must be positive, got {}",
                tie.susceptance
            )));
        }
    }
    check_connected(n, &topo.lines)?;

    let k_p = susceptance_laplacian(n, &topo.lines) * omega0;
    let n_load = topo.loads.len();
    let mut d_p = DMatrix::<f64>::zeros(n, n_load);
    for (l, ld) in topo.loads.iter().enumerate() {
        d_p[(ld.gen, l)] = 1.0;
    }

    let ss = area_matrix_from_kp(&topo.generators, &k_p, &d_p);
    Ok(AreaModel {
        ss,
        n_gen: n,
        k_p,
        d_p,
        omega0,
    })
}

/// Parameters of the controllable-source RLC circuit.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RlcParams {
    /// Series resistance R1 (pu).
    pub r1: f64,
    /// Series inductance L1 (pu·s).
    pub l1: f64,
    /// Interface capacitance C1 (pu·s).
    pub c1: f64,
    /// Source voltage ceiling (pu).
    pub u1_max: f64,
    /// Constant-power branch guard: the load model is undefined below this
    /// interface voltage magnitude; crossing it is reported as collapse.
    #[serde(default = "default_v_floor")]
    pub v_floor: f64,
}

pub fn default_v_floor() -> f64 {
    0.05
}

impl RlcParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.r1.is_finite() && self.r1 >= 0.0) {
            return Err(Error::Config(format!("r1 must be >= 0, got {}", self.r1)));
        }
        for (name, v) in [
            ("l1", self.l1),
            ("c1", self.c1),
            ("u1_max", self.u1_max),
            ("v_floor", self.v_floor),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }

    /// Loss time constant τ = L/(2R) of the inductor energy; `None` when
    /// R = 0 (lossless, the E/τ term vanishes).
    pub fn tau(&self) -> Option<f64> {
        if self.r1 == 0.0 {
            None
        } else {
            Some(self.l1 / (2.0 * self.r1))
        }
    }
}

/// RLC state derivative.
///
/// `di/dt = (-R·i - v + u1)/L`; the constant-power load draws `P_L/v1`
/// through the interface node, so `dv1/dt = (i - P_L/v1)/C1`. The guard
/// trips when `|v1|` is at or below the floor, which the simulation layer
/// reports as voltage collapse.
pub fn rlc_rhs(
    p: &RlcParams,
    state: (f64, f64),
    u1: f64,
    p_load: f64,
) -> std::result::Result<(f64, f64), GuardTrip> {
    let (i_l, v) = state;
    let load_current = if p_load == 0.0 {
        0.0
    } else {
        if v.abs() <= p.v_floor {
            return Err(GuardTrip(format!(
                "interface voltage |{v:.4}| at or below floor {}",
                p.v_floor
            )));
        }
        p_load / v
    };
    let di = (-p.r1 * i_l - v + u1) / p.l1;
    let dv = (i_l - load_current) / p.c1;
    Ok((di, dv))
}

/// Deterministic load-disturbance signals with analytic derivatives.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DisturbanceSignal {
    /// No disturbance.
    None,
    /// Step of `magnitude` at `start`; `ramp > 0` smooths the edge with a
    /// raised-cosine transition of that duration (needed where the signal's
    /// rate drives a model input).
    Step {
        magnitude: f64,
        start: f64,
        #[serde(default)]
        ramp: f64,
    },
    /// Raised-cosine pulse (short wind gust): zero outside
    /// `[start, start+duration]`.
    ShortGust {
        magnitude: f64,
        start: f64,
        duration: f64,
    },
    /// Same shape with a long support.
    LongGust {
        magnitude: f64,
        start: f64,
        duration: f64,
    },
    /// Band-limited stochastic fluctuation: a seeded random-phase multisine
    /// whose spectral envelope is a first-order low-pass at `bandwidth_hz`,
    /// normalized to standard deviation `sigma`. Smooth in `t`, so the rate
    /// is exact.
    Fluctuation {
        sigma: f64,
        bandwidth_hz: f64,
        seed: u64,
    },
}

/// Number of spectral modes in the fluctuation realization.
const FLUCT_MODES: usize = 24;

fn splitmix64(state: u64) -> u64 {
    let mut z = state.wrapping_add(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Precomputed mode table for a fluctuation signal.
#[derive(Debug, Clone)]
pub struct CompiledDisturbance {
    signal: DisturbanceSignal,
    /// (amplitude, angular frequency, phase) per mode; empty for
    /// deterministic kinds.
    modes: Vec<(f64, f64, f64)>,
}

impl CompiledDisturbance {
    pub fn new(signal: &DisturbanceSignal) -> Self {
        let modes = match signal {
            DisturbanceSignal::Fluctuation {
                sigma,
                bandwidth_hz,
                seed,
            } => {
                let k_max = FLUCT_MODES;
                let df = 3.0 * bandwidth_hz / k_max as f64;
                let weights: Vec<f64> = (1..=k_max)
                    .map(|k| {
                        let f = df * k as f64;
                        1.0 / (1.0 + (f / bandwidth_hz).powi(2)).sqrt()
                    })
                    .collect();
                let w_sq: f64 = weights.iter().map(|w| w * w).sum();
                let scale = sigma * (2.0 / w_sq).sqrt();
                (1..=k_max)
                    .map(|k| {
                        let f = df * k as f64;
                        let phase = splitmix64(seed ^ (k as u64).wrapping_mul(0x2545f4914f6cdd1d))
                            as f64
                            / u64::MAX as f64
                            * std::f64::consts::TAU;
                        (scale * weights[k - 1], std::f64::consts::TAU * f, phase)
                    })
                    .collect()
            }
            _ => Vec::new(),
        };
        Self {
            signal: signal.clone(),
            modes,
        }
    }

    /// Signal value and its analytic time derivative at `t ≥ 0`.
    pub fn sample(&self, t: f64) -> (f64, f64) {
        match &self.signal {
            DisturbanceSignal::None => (0.0, 0.0),
            DisturbanceSignal::Step {
                magnitude,
                start,
                ramp,
            } => {
                if t < *start {
                    (0.0, 0.0)
                } else if *ramp > 0.0 && t < start + ramp {
                    // Raised-cosine rise over [start, start+ramp].
                    let phase = std::f64::consts::PI * (t - start) / ramp;
                    let value = magnitude * 0.5 * (1.0 - phase.cos());
                    let rate = magnitude * 0.5 * phase.sin() * std::f64::consts::PI / ramp;
                    (value, rate)
                } else {
                    (*magnitude, 0.0)
                }
            }
            DisturbanceSignal::ShortGust {
                magnitude,
                start,
                duration,
            }
            | DisturbanceSignal::LongGust {
                magnitude,
                start,
                duration,
            } => {
                if t <= *start || t >= start + duration {
                    (0.0, 0.0)
                } else {
                    let phase = std::f64::consts::TAU * (t - start) / duration;
                    let value = magnitude * 0.5 * (1.0 - phase.cos());
                    let rate =
                        magnitude * 0.5 * phase.sin() * std::f64::consts::TAU / duration;
                    (value, rate)
                }
            }
            DisturbanceSignal::Fluctuation { .. } => {
                let mut value = 0.0;
                let mut rate = 0.0;
                for &(amp, w, phi) in &self.modes {
                    let arg = w * t + phi;
                    value += amp * arg.cos();
                    rate -= amp * w * arg.sin();
                }
                (value, rate)
            }
        }
    }
}

/// Sample a disturbance signal at time `t ≥ 0`, returning `(P_L, Ṗ_L)`.
///
/// Pure given `(signal, t)`; hot loops should compile the signal once with
/// [`CompiledDisturbance::new`] and call [`CompiledDisturbance::sample`].
pub fn sample_disturbance(signal: &DisturbanceSignal, t: f64) -> (f64, f64) {
    CompiledDisturbance::new(signal).sample(t)
}
