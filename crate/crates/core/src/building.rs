//! Building config documents and the assembled plant description.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::disturbance::{gains_profile, DisturbanceSeries, OccupancySchedule, SolarAperture};
use crate::error::{Error, Result};
use crate::heat_pump::HeatPumpModel;
use crate::thermal::{derive_params, BuildingParams, ModelVariant, RawParams};

/// On-disk building config: the RC inputs as flat keys plus a heat-pump
/// block and optional gains settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BuildingConfig {
    pub name: String,
    #[serde(default)]
    pub variant: ModelVariant,
    pub h_ve_tr: f64,
    pub c_bldg_specific: f64,
    pub a_floor: f64,
    pub h_room: f64,
    pub water_volume: f64,
    pub h_rad_con: f64,
    pub mdot_hp: f64,
    #[serde(default = "default_cp_water")]
    pub cp_water: f64,
    #[serde(default = "default_wall_split")]
    pub wall_split: f64,
    #[serde(default = "default_h_wall")]
    pub h_wall: f64,
    #[serde(default)]
    pub gain_wall_fraction: f64,
    #[serde(default)]
    pub heat_pump: HeatPumpModel,
    #[serde(default = "default_window_area")]
    pub window_area: f64,
    #[serde(default = "default_g_value")]
    pub g_value: f64,
    #[serde(default)]
    pub occupancy: OccupancySchedule,
}

fn default_cp_water() -> f64 {
    crate::thermal::CP_WATER
}
fn default_wall_split() -> f64 {
    0.6
}
fn default_h_wall() -> f64 {
    2000.0
}
fn default_window_area() -> f64 {
    20.0
}
fn default_g_value() -> f64 {
    0.6
}

/// A validated building: RC parameters, heat pump and gains model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Building {
    pub name: String,
    pub variant: ModelVariant,
    pub params: BuildingParams,
    pub heat_pump: HeatPumpModel,
    pub aperture: SolarAperture,
    pub occupancy: OccupancySchedule,
}

impl BuildingConfig {
    pub fn raw_params(&self) -> RawParams {
        RawParams {
            h_ve_tr: self.h_ve_tr,
            c_bldg_specific: self.c_bldg_specific,
            a_floor: self.a_floor,
            h_room: self.h_room,
            water_volume: self.water_volume,
            h_rad_con: self.h_rad_con,
            mdot_hp: self.mdot_hp,
            cp_water: self.cp_water,
            wall_split: self.wall_split,
            h_wall: self.h_wall,
            gain_wall_fraction: self.gain_wall_fraction,
        }
    }

    pub fn build(&self) -> Result<Building> {
        let params = derive_params(&self.raw_params())?;
        self.heat_pump.validate()?;
        self.occupancy.validate()?;
        if !(self.window_area >= 0.0 && self.g_value >= 0.0 && self.g_value <= 1.0) {
            return Err(Error::param("window_area/g_value", "window_area >= 0 and g_value in [0, 1]"));
        }
        Ok(Building {
            name: self.name.clone(),
            variant: self.variant,
            params,
            heat_pump: self.heat_pump.clone(),
            aperture: SolarAperture {
                window_area: self.window_area,
                g_value: self.g_value,
            },
            occupancy: self.occupancy.clone(),
        })
    }

    pub fn from_json_str(s: &str) -> std::result::Result<Self, serde_json::Error> {
        serde_json::from_str(s)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|source| Error::Json {
            path: path.to_path_buf(),
            source,
        })
    }
}

impl Building {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        BuildingConfig::load(path)?.build()
    }

    /// Fill the gains of a weather series from this building's occupancy
    /// schedule and glazing.
    pub fn disturbances(&self, weather: DisturbanceSeries) -> Result<DisturbanceSeries> {
        let gains = gains_profile(self.params.a_floor, &weather, &self.occupancy, self.aperture)?;
        weather.with_gains(gains)
    }
}

/// Old, poorly insulated house with a ground-source heat pump.
pub const BUILDING1_JSON: &str = include_str!("../../../configs/building1.json");
/// Newer house with an air-source heat pump.
pub const BUILDING2_JSON: &str = include_str!("../../../configs/building2.json");

/// One of the shipped example buildings by name.
pub fn shipped(name: &str) -> Result<Building> {
    let text = match name {
        "building1" => BUILDING1_JSON,
        "building2" => BUILDING2_JSON,
        other => return Err(Error::Config(format!("unknown shipped building `{other}`"))),
    };
    BuildingConfig::from_json_str(text)
        .map_err(|e| Error::Config(format!("shipped building `{name}`: {e}")))?
        .build()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::heat_pump::HeatSource;

    #[test]
    fn shipped_configs_parse() {
        let b1 = shipped("building1").unwrap();
        let b2 = shipped("building2").unwrap();
        assert_eq!(b1.heat_pump.source, HeatSource::Ground(10.0));
        assert_eq!(b2.heat_pump.source, HeatSource::Air);
        assert!(b1.params.h_ve_tr > b2.params.h_ve_tr);
        assert_eq!(b1.params.cap_bldg, b1.params.c_bldg_specific * b1.params.a_floor);
        assert!(shipped("building3").is_err());
    }

    #[test]
    fn unknown_keys_rejected() {
        let mut v: serde_json::Value = serde_json::from_str(BUILDING1_JSON).unwrap();
        v["h_ve_trr"] = serde_json::json!(1.0);
        assert!(serde_json::from_value::<BuildingConfig>(v).is_err());
    }

    #[test]
    fn invalid_values_rejected() {
        let mut cfg = BuildingConfig::from_json_str(BUILDING2_JSON).unwrap();
        cfg.a_floor = -1.0;
        assert!(cfg.build().is_err());
        let mut cfg = BuildingConfig::from_json_str(BUILDING2_JSON).unwrap();
        cfg.heat_pump.eta_wp = 0.0;
        assert!(cfg.build().is_err());
    }
}
