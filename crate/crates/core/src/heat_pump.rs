//! Heat-pump efficiency and power.
//!
//! The default efficiency model is a fraction `eta_wp` of the Carnot COP
//! between the supply (sink) and source temperatures, evaluated in Kelvin and
//! clamped to `[cop_min, cop_max]`. A 6-coefficient second-order polynomial
//! in (supply, source) may replace the Carnot path.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::thermal::BuildingParams;

const KELVIN: f64 = 273.15;

/// Where the heat pump draws heat from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum HeatSource {
    /// Air source: the ambient temperature is the source temperature.
    #[default]
    Air,
    /// Ground source with a constant source temperature, °C.
    Ground(f64),
}

impl HeatSource {
    pub fn temperature(&self, t_amb: f64) -> f64 {
        match *self {
            HeatSource::Air => t_amb,
            HeatSource::Ground(t) => t,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeatPumpModel {
    #[serde(default = "default_eta")]
    pub eta_wp: f64,
    #[serde(default = "default_cop_min")]
    pub cop_min: f64,
    #[serde(default = "default_cop_max")]
    pub cop_max: f64,
    /// `c0 + c1·Ts + c2·Ta + c3·Ts·Ta + c4·Ts² + c5·Ta²` with °C inputs.
    #[serde(default)]
    pub poly: Option<[f64; 6]>,
    #[serde(default)]
    pub source: HeatSource,
}

fn default_eta() -> f64 {
    0.45
}
fn default_cop_min() -> f64 {
    1.0
}
fn default_cop_max() -> f64 {
    8.0
}

impl Default for HeatPumpModel {
    fn default() -> Self {
        Self {
            eta_wp: default_eta(),
            cop_min: default_cop_min(),
            cop_max: default_cop_max(),
            poly: None,
            source: HeatSource::Air,
        }
    }
}

/// Thermal and electrical power over an interval, W.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HpPower {
    pub q_th: f64,
    pub p_el: f64,
    /// COP used for the conversion; 0 when the unit is idle.
    pub cop: f64,
}

impl HeatPumpModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta_wp > 0.0 && self.eta_wp <= 1.0) {
            return Err(Error::param("eta_wp", format!("must lie in (0, 1], got {}", self.eta_wp)));
        }
        if !(self.cop_min >= 1.0 && self.cop_min < self.cop_max && self.cop_max.is_finite()) {
            return Err(Error::param(
                "cop_min/cop_max",
                format!("need 1 <= cop_min < cop_max, got [{}, {}]", self.cop_min, self.cop_max),
            ));
        }
        if let HeatSource::Ground(t) = self.source {
            if !t.is_finite() {
                return Err(Error::param("source", "ground temperature must be finite"));
            }
        }
        Ok(())
    }

    fn unclamped(&self, t_sup: f64, t_src: f64) -> f64 {
        match &self.poly {
            Some(c) => {
                c[0] + c[1] * t_sup
                    + c[2] * t_src
                    + c[3] * t_sup * t_src
                    + c[4] * t_sup * t_sup
                    + c[5] * t_src * t_src
            }
            None => {
                let t_sup_k = t_sup + KELVIN;
                self.eta_wp * t_sup_k / (t_sup_k - (t_src + KELVIN))
            }
        }
    }

    /// COP for a supply temperature and a source temperature, both °C.
    pub fn cop(&self, t_hp_sup: f64, t_src: f64) -> Result<f64> {
        if !(t_hp_sup > t_src) {
            return Err(Error::NotHeating {
                t_sup: t_hp_sup,
                t_src,
            });
        }
        Ok(self.unclamped(t_hp_sup, t_src).clamp(self.cop_min, self.cop_max))
    }

    /// COP extended continuously to `t_sup <= t_src` (where the Carnot ratio
    /// diverges, so the upper clamp applies), together with `d COP / d t_sup`.
    pub fn cop_extended(&self, t_sup: f64, t_src: f64) -> (f64, f64) {
        if self.poly.is_none() && t_sup <= t_src {
            return (self.cop_max, 0.0);
        }
        let raw = self.unclamped(t_sup, t_src);
        if raw <= self.cop_min {
            return (self.cop_min, 0.0);
        }
        if raw >= self.cop_max {
            return (self.cop_max, 0.0);
        }
        let slope = match &self.poly {
            Some(c) => c[1] + c[3] * t_src + 2.0 * c[4] * t_sup,
            None => {
                let lift = t_sup - t_src;
                -self.eta_wp * (t_src + KELVIN) / (lift * lift)
            }
        };
        (raw, slope)
    }

    /// Thermal and electrical power for given loop temperatures. The unit is
    /// off (zero power) whenever the supply does not exceed the return.
    pub fn hp_power(&self, p: &BuildingParams, t_hp_sup: f64, t_hp_ret: f64, t_amb: f64) -> HpPower {
        let q_th = (p.loop_conductance() * (t_hp_sup - t_hp_ret)).max(0.0);
        if q_th == 0.0 {
            return HpPower {
                q_th: 0.0,
                p_el: 0.0,
                cop: 0.0,
            };
        }
        let (cop, _) = self.cop_extended(t_hp_sup, self.source.temperature(t_amb));
        HpPower {
            q_th,
            p_el: q_th / cop,
            cop,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::thermal::{derive_params, RawParams};

    fn params() -> BuildingParams {
        derive_params(&RawParams {
            h_ve_tr: 200.0,
            c_bldg_specific: 250_000.0,
            a_floor: 200.0,
            h_room: 2.5,
            water_volume: 0.5,
            h_rad_con: 800.0,
            mdot_hp: 0.3,
            cp_water: 4186.0,
            wall_split: 0.5,
            h_wall: 1500.0,
            gain_wall_fraction: 0.0,
        })
        .unwrap()
    }

    #[test]
    fn carnot_reference_value() {
        let hp = HeatPumpModel::default();
        let cop = hp.cop(35.0, 0.0).unwrap();
        // 0.45 * 308.15 / 35
        assert!((cop - 0.45 * 308.15 / 35.0).abs() < 1e-12);
        assert!((cop - 3.962).abs() < 1e-3);
    }

    #[test]
    fn clamps_and_regime() {
        let hp = HeatPumpModel::default();
        assert_eq!(hp.cop(35.0, 34.99).unwrap(), 8.0);
        assert!(matches!(hp.cop(20.0, 25.0), Err(Error::NotHeating { .. })));
        assert!(hp.cop(20.0, 20.0).is_err());
        assert_eq!(hp.cop(90.0, -30.0).unwrap(), hp.cop(90.0, -30.0).unwrap().max(1.0));
    }

    #[test]
    fn power_cases() {
        let hp = HeatPumpModel::default();
        let p = params();
        let idle = hp.hp_power(&p, 30.0, 30.0, 0.0);
        assert_eq!((idle.q_th, idle.p_el), (0.0, 0.0));
        let on = hp.hp_power(&p, 35.0, 30.0, 0.0);
        assert!((on.q_th - 6279.0).abs() < 1e-9);
        assert!((on.p_el - 6279.0 / (0.45 * 308.15 / 35.0)).abs() < 1e-9);
        assert!((on.p_el - 1585.0).abs() < 1.0);
        let reverse = hp.hp_power(&p, 25.0, 30.0, 0.0);
        assert_eq!((reverse.q_th, reverse.p_el), (0.0, 0.0));
    }

    #[test]
    fn ground_source_uses_fixed_temperature() {
        let hp = HeatPumpModel {
            source: HeatSource::Ground(10.0),
            ..Default::default()
        };
        let p = params();
        let a = hp.hp_power(&p, 35.0, 30.0, -15.0);
        let b = hp.hp_power(&p, 35.0, 30.0, 5.0);
        assert_eq!(a, b);
        assert!((a.cop - 0.45 * 308.15 / 25.0).abs() < 1e-12);
    }

    #[test]
    fn polynomial_path() {
        let hp = HeatPumpModel {
            poly: Some([5.0, -0.05, 0.1, 0.0, 0.0, 0.0]),
            ..Default::default()
        };
        assert!((hp.cop(35.0, 0.0).unwrap() - 3.25).abs() < 1e-12);
        let (c, s) = hp.cop_extended(35.0, 0.0);
        assert!((c - 3.25).abs() < 1e-12);
        assert!((s + 0.05).abs() < 1e-12);
        assert!(hp.cop(0.0, 5.0).is_err());
    }

    #[test]
    fn extended_slope_matches_finite_difference() {
        let hp = HeatPumpModel::default();
        for &(ts, ta) in &[(45.0, 0.0), (55.0, -10.0), (60.0, 5.0)] {
            let (_, slope) = hp.cop_extended(ts, ta);
            let h = 1e-5;
            let fd = (hp.cop_extended(ts + h, ta).0 - hp.cop_extended(ts - h, ta).0) / (2.0 * h);
            assert!((slope - fd).abs() < 1e-6 * fd.abs().max(1e-3));
        }
    }

    #[test]
    fn validation() {
        let mut hp = HeatPumpModel::default();
        assert!(hp.validate().is_ok());
        hp.eta_wp = 1.5;
        assert!(hp.validate().is_err());
        let hp = HeatPumpModel {
            cop_min: 8.0,
            ..Default::default()
        };
        assert!(hp.validate().is_err());
    }
}
