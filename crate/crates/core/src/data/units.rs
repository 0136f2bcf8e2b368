use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

const FEET_PER_METER: f64 = 1.0 / 0.3048;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum LengthUnit {
    #[serde(rename = "ft")]
    Feet,
    #[serde(rename = "m")]
    Meters,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SpeedUnit {
    #[serde(rename = "ft/s")]
    FeetPerSecond,
    #[serde(rename = "km/h")]
    KilometersPerHour,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum FlowUnit {
    #[serde(rename = "veh/s")]
    VehPerSecond,
    #[serde(rename = "veh/h")]
    VehPerHour,
}

/// Units of a data set. Time is always seconds.
///
/// Physics is evaluated in the consistent "base" system derived from the
/// length unit: length-unit/s for speed, veh/s for flow and veh/length-unit
/// for density.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct UnitSystem {
    pub length: LengthUnit,
    pub speed: SpeedUnit,
    pub flow: FlowUnit,
}

impl UnitSystem {
    pub const NGSIM: UnitSystem = UnitSystem {
        length: LengthUnit::Feet,
        speed: SpeedUnit::FeetPerSecond,
        flow: FlowUnit::VehPerSecond,
    };

    pub const METRIC: UnitSystem = UnitSystem {
        length: LengthUnit::Meters,
        speed: SpeedUnit::KilometersPerHour,
        flow: FlowUnit::VehPerHour,
    };

    /// Length units per meter.
    pub fn length_per_meter(&self) -> f64 {
        match self.length {
            LengthUnit::Meters => 1.0,
            LengthUnit::Feet => FEET_PER_METER,
        }
    }

    /// Multiplier taking a speed in `self.speed` to length-unit/s.
    pub fn speed_to_base(&self) -> f64 {
        match self.speed {
            SpeedUnit::FeetPerSecond => match self.length {
                LengthUnit::Feet => 1.0,
                LengthUnit::Meters => 0.3048,
            },
            SpeedUnit::KilometersPerHour => self.length_per_meter() / 3.6,
        }
    }

    /// Multiplier taking a flow in `self.flow` to veh/s.
    pub fn flow_to_base(&self) -> f64 {
        match self.flow {
            FlowUnit::VehPerSecond => 1.0,
            FlowUnit::VehPerHour => 1.0 / 3600.0,
        }
    }

    /// Converts a speed given in km/h into this system's speed unit.
    pub fn speed_from_kmh(&self, kmh: f64) -> f64 {
        kmh * self.length_per_meter() / 3.6 / self.speed_to_base()
    }

    /// Converts a length given in meters into this system's length unit.
    pub fn length_from_m(&self, m: f64) -> f64 {
        m * self.length_per_meter()
    }

    pub fn convert_speed(&self, value: f64, to: &UnitSystem) -> f64 {
        let meters_per_s = value * self.speed_to_base() / self.length_per_meter();
        meters_per_s * to.length_per_meter() / to.speed_to_base()
    }

    pub fn convert_flow(&self, value: f64, to: &UnitSystem) -> f64 {
        value * self.flow_to_base() / to.flow_to_base()
    }
}

impl fmt::Display for LengthUnit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LengthUnit::Feet => "ft",
            LengthUnit::Meters => "m",
        })
    }
}

impl fmt::Display for SpeedUnit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SpeedUnit::FeetPerSecond => "ft/s",
            SpeedUnit::KilometersPerHour => "km/h",
        })
    }
}

impl fmt::Display for FlowUnit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FlowUnit::VehPerSecond => "veh/s",
            FlowUnit::VehPerHour => "veh/h",
        })
    }
}

impl FromStr for LengthUnit {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self, Error> {
        match s {
            "ft" => Ok(LengthUnit::Feet),
            "m" => Ok(LengthUnit::Meters),
            other => Err(Error::Config(format!("unknown length unit `{other}`"))),
        }
    }
}

impl FromStr for SpeedUnit {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self, Error> {
        match s {
            "ft/s" => Ok(SpeedUnit::FeetPerSecond),
            "km/h" => Ok(SpeedUnit::KilometersPerHour),
            other => Err(Error::Config(format!("unknown speed unit `{other}`"))),
        }
    }
}

impl FromStr for FlowUnit {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self, Error> {
        match s {
            "veh/s" => Ok(FlowUnit::VehPerSecond),
            "veh/h" => Ok(FlowUnit::VehPerHour),
            other => Err(Error::Config(format!("unknown flow unit `{other}`"))),
        }
    }
}
