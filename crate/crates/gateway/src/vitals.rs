//! The closed vocabulary of sensor parameters and the text form readings
//! take inside a pending EHR document.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Sixteen slots: the eight sensors the platform ships with, then eight
/// labels held back for sensors added later.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum VitalSign {
    Pulse,
    BloodPressure,
    Airflow,
    Ecg,
    Emg,
    Snore,
    BodyPosition,
    GalvanicSkinResponse,
    Reserved(u8),
}

impl VitalSign {
    pub const COUNT: usize = 16;

    pub fn all() -> impl Iterator<Item = VitalSign> {
        [
            VitalSign::Pulse,
            VitalSign::BloodPressure,
            VitalSign::Airflow,
            VitalSign::Ecg,
            VitalSign::Emg,
            VitalSign::Snore,
            VitalSign::BodyPosition,
            VitalSign::GalvanicSkinResponse,
        ]
        .into_iter()
        .chain((1..=8).map(VitalSign::Reserved))
    }

    /// Wire name, e.g. `blood_pressure` or `reserved_3`.
    pub fn key(self) -> String {
        match self {
            VitalSign::Pulse => "pulse".into(),
            VitalSign::BloodPressure => "blood_pressure".into(),
            VitalSign::Airflow => "airflow".into(),
            VitalSign::Ecg => "ecg".into(),
            VitalSign::Emg => "emg".into(),
            VitalSign::Snore => "snore".into(),
            VitalSign::BodyPosition => "body_position".into(),
            VitalSign::GalvanicSkinResponse => "galvanic_skin_response".into(),
            VitalSign::Reserved(n) => format!("reserved_{n}"),
        }
    }

    /// Label used in document lines.
    pub fn label(self) -> String {
        match self {
            VitalSign::Pulse => "Pulse".into(),
            VitalSign::BloodPressure => "Blood pressure".into(),
            VitalSign::Airflow => "Airflow".into(),
            VitalSign::Ecg => "ECG".into(),
            VitalSign::Emg => "EMG".into(),
            VitalSign::Snore => "Snore".into(),
            VitalSign::BodyPosition => "Body position".into(),
            VitalSign::GalvanicSkinResponse => "Galvanic skin response".into(),
            VitalSign::Reserved(n) => format!("Reserved {n}"),
        }
    }
}

impl fmt::Display for VitalSign {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.key())
    }
}

impl FromStr for VitalSign {
    type Err = ();

    /// Case-insensitive; spaces and hyphens count as underscores.
    fn from_str(s: &str) -> Result<Self, ()> {
        let norm: String = s
            .trim()
            .chars()
            .map(|c| if c == ' ' || c == '-' { '_' } else { c.to_ascii_lowercase() })
            .collect();
        VitalSign::all().find(|v| v.key() == norm).ok_or(())
    }
}

/// One measurement as submitted by a patient or their sensor hub.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SensorReading {
    pub patient_id: String,
    pub parameter: String,
    pub value: f64,
    pub unit: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub taken_at: Option<u64>,
}

impl SensorReading {
    pub fn new(patient_id: &str, parameter: &str, value: f64, unit: &str) -> Self {
        SensorReading {
            patient_id: patient_id.to_string(),
            parameter: parameter.to_string(),
            value,
            unit: unit.to_string(),
            taken_at: None,
        }
    }

    /// Checks the vocabulary and unit and returns the document line,
    /// e.g. `Pulse = 78 bpm`.
    pub fn render(&self) -> Result<String, String> {
        let sign: VitalSign = self
            .parameter
            .parse()
            .map_err(|_| format!("{:?} is not one of the {} known parameters", self.parameter, VitalSign::COUNT))?;
        let unit = self.unit.trim();
        if unit.is_empty() {
            return Err("unit must not be empty".into());
        }
        if unit.contains('\n') {
            return Err("unit must fit on one line".into());
        }
        if !self.value.is_finite() {
            return Err("value must be a finite number".into());
        }
        let mut line = format!("{} = {} {unit}", sign.label(), self.value);
        if let Some(t) = self.taken_at {
            line.push_str(&format!(" at {t}"));
        }
        Ok(line)
    }
}
