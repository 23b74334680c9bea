//! Parsing of dimensioned quantities such as `"638 nm"` or `"1e13 Hz"`.
//!
//! Everything is converted to SI on the way in. Rates (`Hz`, `GHz`, `1/s`) are
//! plain inverse seconds; angular frequencies accept `rad/s` or an energy
//! (`meV`, `eV`) which is divided by ħ.

use crate::error::{Error, Result};

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;
pub const HBAR: f64 = 1.054_571_817e-34;
pub const EPSILON_0: f64 = 8.854_187_812_8e-12;
pub const ELEMENTARY_CHARGE: f64 = 1.602_176_634e-19;
pub const DEBYE: f64 = 3.335_640_95e-30;

/// Physical dimension expected by a configuration key.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dimension {
    Length,
    Time,
    Rate,
    AngularFrequency,
    DipoleMoment,
    Volume,
}

impl Dimension {
    fn scale(self, unit: &str) -> Option<f64> {
        use Dimension::*;
        let s = match (self, unit) {
            (Length, "m") => 1.0,
            (Length, "mm") => 1e-3,
            (Length, "um") | (Length, "µm") => 1e-6,
            (Length, "nm") => 1e-9,
            (Length, "pm") => 1e-12,

            (Time, "s") => 1.0,
            (Time, "ms") => 1e-3,
            (Time, "us") | (Time, "µs") => 1e-6,
            (Time, "ns") => 1e-9,
            (Time, "ps") => 1e-12,
            (Time, "fs") => 1e-15,

            (Rate, "Hz") | (Rate, "1/s") | (Rate, "/s") => 1.0,
            (Rate, "kHz") => 1e3,
            (Rate, "MHz") => 1e6,
            (Rate, "GHz") => 1e9,
            (Rate, "THz") => 1e12,

            (AngularFrequency, "rad/s") => 1.0,
            (AngularFrequency, "Grad/s") => 1e9,
            (AngularFrequency, "Trad/s") => 1e12,
            (AngularFrequency, "meV") => 1e-3 * ELEMENTARY_CHARGE / HBAR,
            (AngularFrequency, "eV") => ELEMENTARY_CHARGE / HBAR,

            (DipoleMoment, "C m") | (DipoleMoment, "C*m") | (DipoleMoment, "Cm") => 1.0,
            (DipoleMoment, "D") | (DipoleMoment, "debye") => DEBYE,

            (Volume, "m^3") => 1.0,
            (Volume, "um^3") | (Volume, "µm^3") => 1e-18,
            (Volume, "nm^3") => 1e-27,
            _ => return None,
        };
        Some(s)
    }
}

/// Split `"<number> <unit>"` into its parts. The unit may contain spaces (`C m`).
pub fn split_quantity(input: &str) -> Result<(f64, &str)> {
    let trimmed = input.trim();
    let (num, unit) = match trimmed.find(char::is_whitespace) {
        Some(pos) => (&trimmed[..pos], trimmed[pos..].trim()),
        None => (trimmed, ""),
    };
    let value: f64 = num.parse().map_err(|_| Error::Unit {
        input: input.to_string(),
        reason: format!("`{num}` is not a number"),
    })?;
    if !value.is_finite() {
        return Err(Error::Unit {
            input: input.to_string(),
            reason: "value is not finite".into(),
        });
    }
    Ok((value, unit))
}

/// Parse a quantity with a mandatory unit into SI.
pub fn parse_quantity(input: &str, dim: Dimension) -> Result<f64> {
    let (value, unit) = split_quantity(input)?;
    if unit.is_empty() {
        return Err(Error::Unit {
            input: input.to_string(),
            reason: format!("missing unit (expected a {dim:?})"),
        });
    }
    let scale = dim.scale(unit).ok_or_else(|| Error::Unit {
        input: input.to_string(),
        reason: format!("unit `{unit}` is not a {dim:?}"),
    })?;
    Ok(value * scale)
}

/// Angular frequency of light with the given vacuum wavelength.
pub fn angular_frequency_from_wavelength(lambda: f64) -> f64 {
    2.0 * std::f64::consts::PI * SPEED_OF_LIGHT / lambda
}
