//! Differential-drive robot on uneven terrain with a ZMP rollover constraint.
//!
//! The robot keeps ground contact, so its roll `α` and pitch `β` are the
//! terrain slope angles across and along its heading. Kinematics:
//!
//! ```text
//! ẋ = v cosθ cosβ,   ẏ = v sinθ cosβ,   θ̇ = ω cosα / cosβ
//! ```
//!
//! The rollover constraint `-|vω / (g cosα)| + b / (2 h_cg) - tanα >= 0` is
//! split at the absolute value into two smooth constraints `h⁺` and `h⁻`.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::{FRAC_PI_2, TAU};

use libm::{atan, atan2, cos, sin, tan};
use nalgebra::{DMatrix, DVector};

use crate::constraint::Constraint;
use crate::error::{Error, Result};
use crate::params::InputBox;
use crate::simulation::NominalPolicy;
use crate::system::{ControlAffine, Input, State};

/// Height field `z(x, y)`.
pub trait Terrain: Sync {
    fn height(&self, x: f64, y: f64) -> f64;

    /// `(∂z/∂x, ∂z/∂y)`; central differences unless overridden.
    fn gradient(&self, x: f64, y: f64) -> (f64, f64) {
        let hx = 1e-6 * libm::fabs(x).max(1.0);
        let hy = 1e-6 * libm::fabs(y).max(1.0);
        (
            (self.height(x + hx, y) - self.height(x - hx, y)) / (2.0 * hx),
            (self.height(x, y + hy) - self.height(x, y - hy)) / (2.0 * hy),
        )
    }
}

/// `z = amplitude · sin(freq_x x) · sin(freq_y y)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SineTerrain {
    pub amplitude: f64,
    pub freq_x: f64,
    pub freq_y: f64,
}

impl Default for SineTerrain {
    fn default() -> Self {
        Self {
            amplitude: 0.35,
            freq_x: 0.8,
            freq_y: 0.8,
        }
    }
}

impl SineTerrain {
    pub fn flat() -> Self {
        Self {
            amplitude: 0.0,
            ..Self::default()
        }
    }
}

impl Terrain for SineTerrain {
    fn height(&self, x: f64, y: f64) -> f64 {
        self.amplitude * sin(self.freq_x * x) * sin(self.freq_y * y)
    }

    fn gradient(&self, x: f64, y: f64) -> (f64, f64) {
        (
            self.amplitude * self.freq_x * cos(self.freq_x * x) * sin(self.freq_y * y),
            self.amplitude * self.freq_y * sin(self.freq_x * x) * cos(self.freq_y * y),
        )
    }
}

/// Planar ramp `z = slope_x x + slope_y y`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ramp {
    pub slope_x: f64,
    pub slope_y: f64,
}

impl Terrain for Ramp {
    fn height(&self, x: f64, y: f64) -> f64 {
        self.slope_x * x + self.slope_y * y
    }

    fn gradient(&self, _x: f64, _y: f64) -> (f64, f64) {
        (self.slope_x, self.slope_y)
    }
}

/// The bundled undulating surface.
pub fn default_terrain() -> SineTerrain {
    SineTerrain::default()
}

/// Roll `α` (across the heading) and pitch `β` (along the heading) of a robot
/// at `(x, y)` facing `theta`.
pub fn slope_angles<T: Terrain + ?Sized>(
    terrain: &T,
    x: f64,
    y: f64,
    theta: f64,
) -> Result<(f64, f64)> {
    let (zx, zy) = terrain.gradient(x, y);
    if !zx.is_finite() || !zy.is_finite() {
        return Err(Error::Terrain { x, y });
    }
    let (s, c) = (sin(theta), cos(theta));
    let beta = atan(zx * c + zy * s);
    let alpha = atan(cos(beta) * (-zx * s + zy * c));
    Ok((alpha, beta))
}

/// Parameters of the ZMP rollover constraint.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZmpParams {
    pub gravity: f64,
    /// Track width `b` in meters.
    pub track_width: f64,
    /// Height of the center of mass in meters.
    pub cg_height: f64,
}

impl Default for ZmpParams {
    fn default() -> Self {
        Self {
            gravity: 9.81,
            track_width: 0.5,
            cg_height: 0.25,
        }
    }
}

impl ZmpParams {
    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v > 0.0 && v.is_finite();
        if !ok(self.gravity) {
            return Err(Error::InvalidParameter {
                field: "gravity",
                reason: "must be > 0",
            });
        }
        if !ok(self.track_width) {
            return Err(Error::InvalidParameter {
                field: "track_width",
                reason: "must be > 0",
            });
        }
        if !ok(self.cg_height) {
            return Err(Error::InvalidParameter {
                field: "cg_height",
                reason: "must be > 0",
            });
        }
        Ok(())
    }

    /// `b / (2 h_cg)`.
    pub fn static_margin(&self) -> f64 {
        self.track_width / (2.0 * self.cg_height)
    }
}

/// `(h⁺, h⁻)` with `h^± = ∓ vω / (g cosα) + b / (2 h_cg) - tanα`. The rollover
/// constraint holds iff both are nonnegative.
pub fn rollover_h_pair<T: Terrain + ?Sized>(
    state: &State,
    u: &Input,
    terrain: &T,
    zmp: &ZmpParams,
) -> Result<(f64, f64)> {
    let (alpha, _) = slope_angles(terrain, state[0], state[1], state[2])?;
    let lateral = u[0] * u[1] / (zmp.gravity * cos(alpha));
    let rest = zmp.static_margin() - tan(alpha);
    Ok((rest - lateral, rest + lateral))
}

/// Kinematic robot with state `(x, y, θ)` and input `(v, ω)`; zero drift.
#[derive(Debug, Clone, PartialEq)]
pub struct RolloverRobot<T> {
    pub terrain: T,
    pub zmp: ZmpParams,
}

impl<T: Terrain + Clone> RolloverRobot<T> {
    pub fn new(terrain: T, zmp: ZmpParams) -> Self {
        Self { terrain, zmp }
    }

    /// The pair `[h⁺, h⁻]`.
    pub fn constraints(&self) -> [RolloverConstraint<T>; 2] {
        [Side::Plus, Side::Minus].map(|side| RolloverConstraint {
            terrain: self.terrain.clone(),
            zmp: self.zmp,
            side,
        })
    }
}

impl<T: Terrain> ControlAffine for RolloverRobot<T> {
    fn state_dim(&self) -> usize {
        3
    }

    fn input_dim(&self) -> usize {
        2
    }

    fn drift(&self, _x: &State) -> State {
        DVector::zeros(3)
    }

    fn input_matrix(&self, x: &State) -> DMatrix<f64> {
        let (alpha, beta) =
            slope_angles(&self.terrain, x[0], x[1], x[2]).unwrap_or((f64::NAN, f64::NAN));
        let (s, c) = (sin(x[2]), cos(x[2]));
        let cb = cos(beta);
        DMatrix::from_row_slice(3, 2, &[c * cb, 0.0, s * cb, 0.0, 0.0, cos(alpha) / cb])
    }

    fn drift_jacobian(&self, _x: &State) -> Option<DMatrix<f64>> {
        Some(DMatrix::zeros(3, 3))
    }

    fn normalize(&self, mut x: State) -> State {
        x[2] -= TAU * libm::floor(x[2] / TAU);
        if x[2] >= TAU {
            x[2] = 0.0;
        }
        x
    }
}

/// Which half of the absolute value a [`RolloverConstraint`] covers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    /// `h⁺`, binding when `vω > 0`.
    Plus,
    /// `h⁻`, binding when `vω < 0`.
    Minus,
}

#[derive(Debug, Clone)]
pub struct RolloverConstraint<T> {
    pub terrain: T,
    pub zmp: ZmpParams,
    pub side: Side,
}

impl<T: Terrain> RolloverConstraint<T> {
    fn sign(&self) -> f64 {
        match self.side {
            Side::Plus => -1.0,
            Side::Minus => 1.0,
        }
    }
}

impl<T: Terrain> Constraint for RolloverConstraint<T> {
    fn value(&self, x: &State, u: &Input) -> f64 {
        match rollover_h_pair(x, u, &self.terrain, &self.zmp) {
            Ok((plus, minus)) => match self.side {
                Side::Plus => plus,
                Side::Minus => minus,
            },
            Err(_) => f64::NAN,
        }
    }

    fn grad_u(&self, x: &State, u: &Input) -> Option<DVector<f64>> {
        let (alpha, _) = slope_angles(&self.terrain, x[0], x[1], x[2]).ok()?;
        let scale = self.sign() / (self.zmp.gravity * cos(alpha));
        Some(DVector::from_vec(vec![scale * u[1], scale * u[0]]))
    }

    fn name(&self) -> &str {
        match self.side {
            Side::Plus => "h_plus",
            Side::Minus => "h_minus",
        }
    }
}

/// How the forward-motion controller turns heading error into yaw rate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum HeadingLaw {
    /// `ω = K_ω atan(d_g / d̄_g)`, evaluated as `atan2(d_g, d̄_g)`. Turns
    /// hardest with the goal straight ahead and not at all with the goal
    /// abeam, so it does not converge to waypoints.
    AlongOverAcross,
    /// `ω = K_ω atan(d̄_g / d_g)`, steering the goal onto the heading.
    #[default]
    Bearing,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForwardGains {
    pub k_v: f64,
    pub k_omega: f64,
    pub law: HeadingLaw,
}

impl Default for ForwardGains {
    fn default() -> Self {
        Self {
            k_v: 1.2,
            k_omega: 2.5,
            law: HeadingLaw::default(),
        }
    }
}

/// `(v, ω) = (K_v d_g, K_ω · heading term)` towards `goal`; zero at the goal.
pub fn nominal_forward_controller(state: &State, goal: (f64, f64), gains: &ForwardGains) -> Input {
    let dx = goal.0 - state[0];
    let dy = goal.1 - state[1];
    if dx == 0.0 && dy == 0.0 {
        return DVector::zeros(2);
    }
    let (s, c) = (sin(state[2]), cos(state[2]));
    let along = c * dx + s * dy;
    let across = -s * dx + c * dy;
    let turn = match gains.law {
        HeadingLaw::AlongOverAcross => atan2(along, across),
        HeadingLaw::Bearing if along == 0.0 => FRAC_PI_2.copysign(across),
        HeadingLaw::Bearing => atan(across / along),
    };
    DVector::from_vec(vec![gains.k_v * along, gains.k_omega * turn])
}

/// Follows a waypoint list, switching to the next waypoint once within
/// `switch_radius` of the active one and holding the last.
#[derive(Debug, Clone)]
pub struct WaypointTracker {
    goals: Vec<(f64, f64)>,
    switch_radius: f64,
    gains: ForwardGains,
    active: usize,
}

impl WaypointTracker {
    pub fn new(goals: Vec<(f64, f64)>, switch_radius: f64, gains: ForwardGains) -> Result<Self> {
        if goals.is_empty() {
            return Err(Error::InvalidParameter {
                field: "waypoints",
                reason: "must not be empty",
            });
        }
        if switch_radius.is_nan() || switch_radius < 0.0 {
            return Err(Error::InvalidParameter {
                field: "switch_radius",
                reason: "must be >= 0",
            });
        }
        Ok(Self {
            goals,
            switch_radius,
            gains,
            active: 0,
        })
    }

    pub fn active(&self) -> usize {
        self.active
    }

    pub fn goal(&self) -> (f64, f64) {
        self.goals[self.active]
    }
}

impl NominalPolicy for WaypointTracker {
    fn nominal(&mut self, x: &State, _t: f64) -> Input {
        while self.active + 1 < self.goals.len() {
            let (gx, gy) = self.goals[self.active];
            if libm::hypot(gx - x[0], gy - x[1]) <= self.switch_radius {
                self.active += 1;
            } else {
                break;
            }
        }
        nominal_forward_controller(x, self.goals[self.active], &self.gains)
    }

    fn reset(&mut self) {
        self.active = 0;
    }
}

/// Everything needed to rerun the bundled rollover experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct RolloverScenario {
    pub terrain: SineTerrain,
    pub zmp: ZmpParams,
    pub gains: ForwardGains,
    pub waypoints: Vec<(f64, f64)>,
    pub switch_radius: f64,
    pub x0: [f64; 3],
    /// `[v_min, ω_min]`.
    pub input_lower: [f64; 2],
    /// `[v_max, ω_max]`.
    pub input_upper: [f64; 2],
    pub period: f64,
    pub delta: f64,
    pub gamma_c: f64,
    pub steps: usize,
}

impl Default for RolloverScenario {
    fn default() -> Self {
        Self {
            terrain: default_terrain(),
            zmp: ZmpParams::default(),
            gains: ForwardGains::default(),
            waypoints: reference_path(),
            switch_radius: 1.5,
            x0: [0.0, 0.0, 0.0],
            input_lower: [-4.0, -4.0],
            input_upper: [4.0, 4.0],
            period: 0.05,
            delta: 0.05,
            gamma_c: 1.0,
            steps: 600,
        }
    }
}

impl RolloverScenario {
    pub fn robot(&self) -> RolloverRobot<SineTerrain> {
        RolloverRobot::new(self.terrain, self.zmp)
    }

    pub fn input_box(&self) -> Result<InputBox> {
        InputBox::from_slices(&self.input_lower, &self.input_upper)
    }

    pub fn tracker(&self) -> Result<WaypointTracker> {
        WaypointTracker::new(self.waypoints.clone(), self.switch_radius, self.gains)
    }

    pub fn initial_state(&self) -> State {
        DVector::from_column_slice(&self.x0)
    }
}

/// Zig-zag reference path whose corners fall on tilted terrain.
pub fn reference_path() -> Vec<(f64, f64)> {
    vec![
        (6.0, 0.0),
        (6.0, 6.0),
        (12.0, 6.0),
        (12.0, 0.0),
        (18.0, 0.0),
    ]
}
