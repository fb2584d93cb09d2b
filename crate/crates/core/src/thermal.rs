//! Lumped RC thermal models of a single-zone building with a water-based
//! heat emission loop.
//!
//! Two variants are provided. The two-state model tracks the room and the
//! heat-pump return temperature. The three-state model adds a wall node in
//! series between the zone and the ambient:
//!
//! ```text
//!   T_amb --H_ve_tr-- T_wall --H_wall-- T_room --H_rad_con-- T_hp_ret <- supply
//!                    (C_wall)          (C_zone)             (C_water)
//! ```
//!
//! All temperatures are in °C, time in seconds.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Specific heat of water, J/(kg·K).
pub const CP_WATER: f64 = 4186.0;
/// Density of water used for loop capacity, kg/m³.
pub const RHO_WATER: f64 = 998.0;
/// Plausibility band for every simulated temperature, °C.
pub const PLAUSIBLE_BAND: (f64, f64) = (-30.0, 100.0);

/// Which RC network to simulate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ModelVariant {
    TwoState,
    #[default]
    ThreeState,
}

/// Input parameters as they appear in a building config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawParams {
    /// Transmission + ventilation heat-transfer coefficient, W/K.
    pub h_ve_tr: f64,
    /// Specific heat capacity per floor area, J/(m²·K).
    pub c_bldg_specific: f64,
    /// Conditioned floor area, m².
    pub a_floor: f64,
    /// Average room height, m.
    pub h_room: f64,
    /// Water volume of the heating loop, m³.
    pub water_volume: f64,
    /// Heat-transfer coefficient of the emitters, W/K.
    pub h_rad_con: f64,
    /// Heating-loop mass flow, kg/s.
    pub mdot_hp: f64,
    #[serde(default = "default_cp_water")]
    pub cp_water: f64,
    /// Fraction of the building capacity placed on the wall node.
    #[serde(default = "default_wall_split")]
    pub wall_split: f64,
    /// Wall to zone heat-transfer coefficient, W/K.
    #[serde(default = "default_h_wall")]
    pub h_wall: f64,
    /// Fraction of the heat gains landing on the wall node (three-state only).
    #[serde(default)]
    pub gain_wall_fraction: f64,
}

fn default_cp_water() -> f64 {
    CP_WATER
}
fn default_wall_split() -> f64 {
    0.6
}
fn default_h_wall() -> f64 {
    2000.0
}

/// Validated model coefficients, including the derived capacities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuildingParams {
    pub h_ve_tr: f64,
    pub c_bldg_specific: f64,
    pub a_floor: f64,
    pub h_room: f64,
    /// Total building heat capacity, J/K.
    pub cap_bldg: f64,
    /// Heat capacity of the loop water, J/K.
    pub cap_water: f64,
    pub h_rad_con: f64,
    pub mdot_hp: f64,
    pub cp_water: f64,
    pub wall_split: f64,
    pub h_wall: f64,
    pub gain_wall_fraction: f64,
}

impl BuildingParams {
    /// Zone capacity of the three-state model, J/K.
    pub fn cap_zone(&self) -> f64 {
        (1.0 - self.wall_split) * self.cap_bldg
    }

    /// Wall capacity of the three-state model, J/K.
    pub fn cap_wall(&self) -> f64 {
        self.wall_split * self.cap_bldg
    }

    /// Heat-capacity flow of the loop, W/K.
    pub fn loop_conductance(&self) -> f64 {
        self.mdot_hp * self.cp_water
    }
}

/// Validate raw inputs and compute the derived capacities.
pub fn derive_params(raw: &RawParams) -> Result<BuildingParams> {
    let positive = [
        ("h_ve_tr", raw.h_ve_tr),
        ("c_bldg_specific", raw.c_bldg_specific),
        ("a_floor", raw.a_floor),
        ("h_room", raw.h_room),
        ("water_volume", raw.water_volume),
        ("h_rad_con", raw.h_rad_con),
        ("mdot_hp", raw.mdot_hp),
        ("cp_water", raw.cp_water),
        ("h_wall", raw.h_wall),
    ];
    for (field, value) in positive {
        if !(value.is_finite() && value > 0.0) {
            return Err(Error::param(field, format!("must be positive, got {value}")));
        }
    }
    if !(raw.wall_split > 0.0 && raw.wall_split < 1.0) {
        return Err(Error::param(
            "wall_split",
            format!("must lie in (0, 1), got {}", raw.wall_split),
        ));
    }
    if !(0.0..=1.0).contains(&raw.gain_wall_fraction) {
        return Err(Error::param(
            "gain_wall_fraction",
            format!("must lie in [0, 1], got {}", raw.gain_wall_fraction),
        ));
    }
    Ok(BuildingParams {
        h_ve_tr: raw.h_ve_tr,
        c_bldg_specific: raw.c_bldg_specific,
        a_floor: raw.a_floor,
        h_room: raw.h_room,
        cap_bldg: raw.c_bldg_specific * raw.a_floor,
        cap_water: raw.water_volume * RHO_WATER * CP_WATER,
        h_rad_con: raw.h_rad_con,
        mdot_hp: raw.mdot_hp,
        cp_water: raw.cp_water,
        wall_split: raw.wall_split,
        h_wall: raw.h_wall,
        gain_wall_fraction: raw.gain_wall_fraction,
    })
}

/// Temperature state. The two-state model carries `t_wall` equal to `t_room`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BuildingState {
    pub t_room: f64,
    pub t_wall: f64,
    pub t_hp_ret: f64,
}

impl BuildingState {
    pub fn new(t_room: f64, t_wall: f64, t_hp_ret: f64) -> Self {
        Self {
            t_room,
            t_wall,
            t_hp_ret,
        }
    }

    pub fn uniform(t: f64) -> Self {
        Self::new(t, t, t)
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.t_room, self.t_wall, self.t_hp_ret]
    }

    pub fn from_array(x: [f64; 3]) -> Self {
        Self::new(x[0], x[1], x[2])
    }

    /// Returns an error naming the first component outside the plausible band.
    pub fn check_plausible(&self) -> Result<()> {
        let (lo, hi) = PLAUSIBLE_BAND;
        for (component, value) in [
            ("t_room", self.t_room),
            ("t_wall", self.t_wall),
            ("t_hp_ret", self.t_hp_ret),
        ] {
            if !(value >= lo && value <= hi) {
                return Err(Error::SimulationBlowup { component, value });
            }
        }
        Ok(())
    }
}

/// Exogenous inputs held over one control interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DisturbanceSample {
    /// Ambient temperature, °C.
    pub t_amb: f64,
    /// Internal and solar gains, W.
    pub q_gain: f64,
}

/// Time derivative of a [`BuildingState`], K/s per component.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateDerivative {
    pub d_room: f64,
    pub d_wall: f64,
    pub d_hp_ret: f64,
}

impl StateDerivative {
    pub fn to_array(self) -> [f64; 3] {
        [self.d_room, self.d_wall, self.d_hp_ret]
    }
}

fn d_hp_ret(state: &BuildingState, t_hp_sup: f64, p: &BuildingParams) -> f64 {
    (p.loop_conductance() * (t_hp_sup - state.t_hp_ret)
        - p.h_rad_con * (state.t_hp_ret - state.t_room))
        / p.cap_water
}

/// Two-state dynamics: room node and return-water node.
pub fn rhs_two_state(
    state: &BuildingState,
    dist: &DisturbanceSample,
    t_hp_sup: f64,
    p: &BuildingParams,
) -> StateDerivative {
    let d_room = (dist.q_gain + p.h_rad_con * (state.t_hp_ret - state.t_room)
        - p.h_ve_tr * (state.t_room - dist.t_amb))
        / p.cap_bldg;
    StateDerivative {
        d_room,
        d_wall: d_room,
        d_hp_ret: d_hp_ret(state, t_hp_sup, p),
    }
}

/// Three-state dynamics with the wall node between zone and ambient.
pub fn rhs_three_state(
    state: &BuildingState,
    dist: &DisturbanceSample,
    t_hp_sup: f64,
    p: &BuildingParams,
) -> StateDerivative {
    let q_wall = p.gain_wall_fraction * dist.q_gain;
    let q_zone = dist.q_gain - q_wall;
    let zone_to_wall = p.h_wall * (state.t_room - state.t_wall);
    let d_room = (q_zone + p.h_rad_con * (state.t_hp_ret - state.t_room) - zone_to_wall)
        / p.cap_zone();
    let d_wall =
        (q_wall + zone_to_wall - p.h_ve_tr * (state.t_wall - dist.t_amb)) / p.cap_wall();
    StateDerivative {
        d_room,
        d_wall,
        d_hp_ret: d_hp_ret(state, t_hp_sup, p),
    }
}

/// Dispatch on the model variant.
pub fn rhs(
    variant: ModelVariant,
    state: &BuildingState,
    dist: &DisturbanceSample,
    t_hp_sup: f64,
    p: &BuildingParams,
) -> StateDerivative {
    match variant {
        ModelVariant::TwoState => rhs_two_state(state, dist, t_hp_sup, p),
        ModelVariant::ThreeState => rhs_three_state(state, dist, t_hp_sup, p),
    }
}

/// Affine form of the dynamics:
/// `dx/dt = a·x + b_sup·T_sup + b_amb·T_amb + b_gain·Q_gain`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearSystem {
    pub a: [[f64; 3]; 3],
    pub b_sup: [f64; 3],
    pub b_amb: [f64; 3],
    pub b_gain: [f64; 3],
}

impl LinearSystem {
    pub fn new(variant: ModelVariant, p: &BuildingParams) -> Self {
        let mc = p.loop_conductance();
        let ret_row = [p.h_rad_con / p.cap_water, 0.0, -(mc + p.h_rad_con) / p.cap_water];
        let b_sup = [0.0, 0.0, mc / p.cap_water];
        match variant {
            ModelVariant::TwoState => {
                let c = p.cap_bldg;
                let room_row = [-(p.h_rad_con + p.h_ve_tr) / c, 0.0, p.h_rad_con / c];
                Self {
                    a: [room_row, room_row, ret_row],
                    b_sup,
                    b_amb: [p.h_ve_tr / c, p.h_ve_tr / c, 0.0],
                    b_gain: [1.0 / c, 1.0 / c, 0.0],
                }
            }
            ModelVariant::ThreeState => {
                let cz = p.cap_zone();
                let cw = p.cap_wall();
                Self {
                    a: [
                        [-(p.h_rad_con + p.h_wall) / cz, p.h_wall / cz, p.h_rad_con / cz],
                        [p.h_wall / cw, -(p.h_wall + p.h_ve_tr) / cw, 0.0],
                        ret_row,
                    ],
                    b_sup,
                    b_amb: [0.0, p.h_ve_tr / cw, 0.0],
                    b_gain: [
                        (1.0 - p.gain_wall_fraction) / cz,
                        p.gain_wall_fraction / cw,
                        0.0,
                    ],
                }
            }
        }
    }

    pub fn eval(&self, x: [f64; 3], t_sup: f64, dist: &DisturbanceSample) -> [f64; 3] {
        let mut out = [0.0; 3];
        for (i, o) in out.iter_mut().enumerate() {
            *o = self.a[i][0] * x[0]
                + self.a[i][1] * x[1]
                + self.a[i][2] * x[2]
                + self.b_sup[i] * t_sup
                + self.b_amb[i] * dist.t_amb
                + self.b_gain[i] * dist.q_gain;
        }
        out
    }
}

/// Explicit-Euler integration over `dt` seconds with at most `substep`
/// seconds per Euler step (a final partial substep is taken when `substep`
/// does not divide `dt`). `supply` is queried at the start of every substep
/// with the current state and the substep length, and returns the supply
/// temperature to hold over that substep.
pub fn integrate_with<F>(
    state: &BuildingState,
    dist: &DisturbanceSample,
    variant: ModelVariant,
    p: &BuildingParams,
    dt: f64,
    substep: f64,
    mut supply: F,
) -> Result<BuildingState>
where
    F: FnMut(&BuildingState, f64) -> f64,
{
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::param("dt", format!("must be positive, got {dt}")));
    }
    if !(substep > 0.0 && substep.is_finite()) {
        return Err(Error::param("substep", format!("must be positive, got {substep}")));
    }
    let mut x = *state;
    for h in substep_lengths(dt, substep) {
        let t_sup = supply(&x, h);
        let dx = rhs(variant, &x, dist, t_sup, p);
        x.t_room += h * dx.d_room;
        x.t_wall += h * dx.d_wall;
        x.t_hp_ret += h * dx.d_hp_ret;
    }
    x.check_plausible()?;
    Ok(x)
}

/// Euler substep lengths covering `dt`: full substeps plus a final partial
/// one when needed. Round-off below `1e-9·dt` is ignored.
pub fn substep_lengths(dt: f64, substep: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity((dt / substep).ceil() as usize);
    let mut elapsed = 0.0;
    while dt - elapsed > 1e-9 * dt {
        let h = substep.min(dt - elapsed);
        out.push(h);
        elapsed += h;
    }
    out
}

/// Advance the state by `dt` with the supply temperature held constant.
pub fn integrate_step(
    state: &BuildingState,
    dist: &DisturbanceSample,
    t_hp_sup: f64,
    variant: ModelVariant,
    p: &BuildingParams,
    dt: f64,
    substep: f64,
) -> Result<BuildingState> {
    integrate_with(state, dist, variant, p, dt, substep, |_, _| t_hp_sup)
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn example_params() -> BuildingParams {
        BuildingParams {
            h_ve_tr: 200.0,
            c_bldg_specific: 250_000.0,
            a_floor: 200.0,
            h_room: 2.5,
            cap_bldg: 5.0e7,
            cap_water: 2.089e6,
            h_rad_con: 800.0,
            mdot_hp: 0.3,
            cp_water: 4186.0,
            wall_split: 0.5,
            h_wall: 1500.0,
            gain_wall_fraction: 0.0,
        }
    }

    fn raw() -> RawParams {
        RawParams {
            h_ve_tr: 200.0,
            c_bldg_specific: 250_000.0,
            a_floor: 200.0,
            h_room: 2.5,
            water_volume: 0.5,
            h_rad_con: 800.0,
            mdot_hp: 0.3,
            cp_water: CP_WATER,
            wall_split: 0.5,
            h_wall: 1500.0,
            gain_wall_fraction: 0.0,
        }
    }

    #[test]
    fn derived_capacities() {
        let p = derive_params(&raw()).unwrap();
        assert_eq!(p.cap_bldg, 5.0e7);
        assert!((p.cap_water - 0.5 * 998.0 * 4186.0).abs() < 1e-6);
        assert!((p.cap_water - 2.089e6).abs() / 2.089e6 < 1e-3);
    }

    #[test]
    fn rejects_degenerate_inputs() {
        let mut r = raw();
        r.a_floor = 0.0;
        assert!(matches!(
            derive_params(&r),
            Err(Error::InvalidParameter { ref field, .. }) if field == "a_floor"
        ));
        let mut r = raw();
        r.wall_split = 1.0;
        assert!(derive_params(&r).is_err());
        let mut r = raw();
        r.h_ve_tr = f64::NAN;
        assert!(derive_params(&r).is_err());
    }

    #[test]
    fn two_state_hand_values() {
        let p = example_params();
        let s = BuildingState::new(20.0, 20.0, 30.0);
        let d = DisturbanceSample {
            t_amb: 0.0,
            q_gain: 0.0,
        };
        let dx = rhs_two_state(&s, &d, 35.0, &p);
        assert!((dx.d_room - 8.0e-5).abs() < 1e-12);
        let expected = (0.3 * 4186.0 * 5.0 - 800.0 * 10.0) / 2.089e6;
        assert!((dx.d_hp_ret - expected).abs() < 1e-15);
        assert!((dx.d_hp_ret - (-8.239e-4)).abs() < 1e-6);
    }

    #[test]
    fn equilibrium_is_exact_zero() {
        let p = example_params();
        let s = BuildingState::uniform(20.0);
        let d = DisturbanceSample {
            t_amb: 20.0,
            q_gain: 0.0,
        };
        for variant in [ModelVariant::TwoState, ModelVariant::ThreeState] {
            let dx = rhs(variant, &s, &d, 20.0, &p);
            assert_eq!(dx.to_array(), [0.0, 0.0, 0.0]);
            let next = integrate_step(&s, &d, 20.0, variant, &p, 900.0, 60.0).unwrap();
            assert_eq!(next, s);
        }
    }

    #[test]
    fn linear_form_agrees_with_rhs() {
        let p = example_params();
        let s = BuildingState::new(18.3, 15.2, 41.0);
        let d = DisturbanceSample {
            t_amb: -4.5,
            q_gain: 730.0,
        };
        for variant in [ModelVariant::TwoState, ModelVariant::ThreeState] {
            let direct = rhs(variant, &s, &d, 47.0, &p).to_array();
            let lin = LinearSystem::new(variant, &p).eval(s.to_array(), 47.0, &d);
            for i in 0..3 {
                assert!((direct[i] - lin[i]).abs() < 1e-15, "{variant:?} {i}");
            }
        }
    }

    #[test]
    fn single_euler_step() {
        let p = example_params();
        let s = BuildingState::new(20.0, 20.0, 30.0);
        let d = DisturbanceSample {
            t_amb: 0.0,
            q_gain: 0.0,
        };
        let next = integrate_step(&s, &d, 35.0, ModelVariant::TwoState, &p, 900.0, 900.0).unwrap();
        assert!((next.t_room - 20.072).abs() < 1e-9);
    }

    #[test]
    fn partial_final_substep() {
        let p = example_params();
        let s = BuildingState::new(20.0, 20.0, 30.0);
        let d = DisturbanceSample {
            t_amb: 0.0,
            q_gain: 0.0,
        };
        let mut lengths = Vec::new();
        integrate_with(&s, &d, ModelVariant::TwoState, &p, 900.0, 400.0, |_, h| {
            lengths.push(h);
            35.0
        })
        .unwrap();
        assert_eq!(lengths, vec![400.0, 400.0, 100.0]);
    }

    #[test]
    fn blowup_names_component() {
        let p = example_params();
        let s = BuildingState::new(20.0, 20.0, 99.9);
        let d = DisturbanceSample {
            t_amb: 0.0,
            q_gain: 0.0,
        };
        // A huge supply temperature drives the return node past 100 °C.
        let err = integrate_step(&s, &d, 500.0, ModelVariant::TwoState, &p, 900.0, 60.0).unwrap_err();
        match err {
            Error::SimulationBlowup { component, .. } => assert_eq!(component, "t_hp_ret"),
            other => panic!("unexpected {other:?}"),
        }
    }
}
