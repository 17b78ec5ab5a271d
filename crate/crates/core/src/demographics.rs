//! Demographic dimensions shared by ingestion, prompting and reporting.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// One of the three demographic axes varied by the audit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dimension {
    Gender,
    Ses,
    Race,
}

impl Dimension {
    pub const ALL: [Dimension; 3] = [Dimension::Gender, Dimension::Ses, Dimension::Race];

    pub fn as_str(self) -> &'static str {
        match self {
            Dimension::Gender => "gender",
            Dimension::Ses => "ses",
            Dimension::Race => "race",
        }
    }

    /// Heading used in report grids.
    pub fn title(self) -> &'static str {
        match self {
            Dimension::Gender => "Gender",
            Dimension::Ses => "Socio-Economic Status",
            Dimension::Race => "Race",
        }
    }

    /// Every specified (non-baseline) value on this dimension, in report order.
    pub fn values(self) -> Vec<DemographicValue> {
        match self {
            Dimension::Gender => Gender::SPECIFIED.iter().copied().map(DemographicValue::Gender).collect(),
            Dimension::Ses => Ses::SPECIFIED.iter().copied().map(DemographicValue::Ses).collect(),
            Dimension::Race => Race::SPECIFIED.iter().copied().map(DemographicValue::Race).collect(),
        }
    }
}

impl fmt::Display for Dimension {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Dimension {
    type Err = UnknownValue;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "gender" => Ok(Dimension::Gender),
            "ses" | "socioeconomic" => Ok(Dimension::Ses),
            "race" => Ok(Dimension::Race),
            _ => Err(UnknownValue(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown demographic value `{0}`")]
pub struct UnknownValue(pub String);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Gender {
    Male,
    Female,
    LgbtqPlus,
    #[default]
    Unspecified,
}

impl Gender {
    pub const SPECIFIED: [Gender; 3] = [Gender::Male, Gender::Female, Gender::LgbtqPlus];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Race {
    AmericanIndianAlaskanNative,
    Asian,
    BlackAfricanAmerican,
    Filipino,
    HispanicLatino,
    NativeHawaiianPacificIslander,
    White,
    #[default]
    Unspecified,
}

impl Race {
    pub const SPECIFIED: [Race; 7] = [
        Race::AmericanIndianAlaskanNative,
        Race::Asian,
        Race::BlackAfricanAmerican,
        Race::Filipino,
        Race::HispanicLatino,
        Race::NativeHawaiianPacificIslander,
        Race::White,
    ];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Ses {
    Disadvantaged,
    NotDisadvantaged,
    #[default]
    Unspecified,
}

impl Ses {
    pub const SPECIFIED: [Ses; 2] = [Ses::Disadvantaged, Ses::NotDisadvantaged];
}

/// A single demographic feature value, tagged by its dimension.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum DemographicValue {
    Gender(Gender),
    Ses(Ses),
    Race(Race),
}

impl DemographicValue {
    /// The twelve specified values varied one at a time, in report-row order.
    pub fn all_specified() -> Vec<DemographicValue> {
        Dimension::ALL.iter().flat_map(|d| d.values()).collect()
    }

    pub fn dimension(self) -> Dimension {
        match self {
            DemographicValue::Gender(_) => Dimension::Gender,
            DemographicValue::Ses(_) => Dimension::Ses,
            DemographicValue::Race(_) => Dimension::Race,
        }
    }

    pub fn is_unspecified(self) -> bool {
        matches!(
            self,
            DemographicValue::Gender(Gender::Unspecified)
                | DemographicValue::Ses(Ses::Unspecified)
                | DemographicValue::Race(Race::Unspecified)
        )
    }

    /// Stable snake_case key used in config files and CSV output.
    pub fn key(self) -> &'static str {
        match self {
            DemographicValue::Gender(g) => match g {
                Gender::Male => "male",
                Gender::Female => "female",
                Gender::LgbtqPlus => "lgbtq_plus",
                Gender::Unspecified => "gender_unspecified",
            },
            DemographicValue::Ses(s) => match s {
                Ses::Disadvantaged => "disadvantaged",
                Ses::NotDisadvantaged => "not_disadvantaged",
                Ses::Unspecified => "ses_unspecified",
            },
            DemographicValue::Race(r) => match r {
                Race::AmericanIndianAlaskanNative => "american_indian_alaskan_native",
                Race::Asian => "asian",
                Race::BlackAfricanAmerican => "black_african_american",
                Race::Filipino => "filipino",
                Race::HispanicLatino => "hispanic_latino",
                Race::NativeHawaiianPacificIslander => "native_hawaiian_pacific_islander",
                Race::White => "white",
                Race::Unspecified => "race_unspecified",
            },
        }
    }

    /// Short row label for report grids.
    pub fn label(self) -> &'static str {
        match self {
            DemographicValue::Gender(g) => match g {
                Gender::Male => "Male",
                Gender::Female => "Female",
                Gender::LgbtqPlus => "LGBTQ+",
                Gender::Unspecified => "Unspecified",
            },
            DemographicValue::Ses(s) => match s {
                Ses::Disadvantaged => "Disadvantaged",
                Ses::NotDisadvantaged => "Not Disadvantaged",
                Ses::Unspecified => "Unspecified",
            },
            DemographicValue::Race(r) => match r {
                Race::AmericanIndianAlaskanNative => "American Indian/Alaskan Native",
                Race::Asian => "Asian",
                Race::BlackAfricanAmerican => "Black/African American",
                Race::Filipino => "Filipino",
                Race::HispanicLatino => "Hispanic/Latino",
                Race::NativeHawaiianPacificIslander => "Native Hawaiian/Pacific Islander",
                Race::White => "White",
                Race::Unspecified => "Unspecified",
            },
        }
    }

    /// Text substituted into prompts. Unspecified values render as `N/A`.
    pub fn prompt_text(self) -> &'static str {
        if self.is_unspecified() {
            return "N/A";
        }
        match self {
            DemographicValue::Gender(Gender::LgbtqPlus) => "LGBTQ+",
            DemographicValue::Gender(Gender::Male) => "male",
            DemographicValue::Gender(Gender::Female) => "female",
            DemographicValue::Ses(Ses::Disadvantaged) => "socioeconomically disadvantaged",
            DemographicValue::Ses(Ses::NotDisadvantaged) => "not socioeconomically disadvantaged",
            DemographicValue::Race(Race::AmericanIndianAlaskanNative) => "American Indian or Alaskan Native",
            DemographicValue::Race(Race::Asian) => "Asian",
            DemographicValue::Race(Race::BlackAfricanAmerican) => "Black or African American",
            DemographicValue::Race(Race::Filipino) => "Filipino",
            DemographicValue::Race(Race::HispanicLatino) => "Hispanic or Latino",
            DemographicValue::Race(Race::NativeHawaiianPacificIslander) => "Native Hawaiian or Pacific Islander",
            DemographicValue::Race(Race::White) => "White",
            _ => "N/A",
        }
    }
}

impl fmt::Display for DemographicValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

impl FromStr for DemographicValue {
    type Err = UnknownValue;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let wanted = s.trim().to_ascii_lowercase().replace(['-', ' '], "_");
        let wanted = match wanted.as_str() {
            "lgbtq+" | "lgbtq" => "lgbtq_plus".to_string(),
            _ => wanted,
        };
        Dimension::ALL
            .iter()
            .flat_map(|d| {
                let mut vals = d.values();
                vals.push(d.unspecified());
                vals
            })
            .find(|v| v.key() == wanted)
            .ok_or_else(|| UnknownValue(s.to_string()))
    }
}

impl From<DemographicValue> for String {
    fn from(v: DemographicValue) -> Self {
        v.key().to_string()
    }
}

impl TryFrom<String> for DemographicValue {
    type Error = UnknownValue;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl Dimension {
    pub fn unspecified(self) -> DemographicValue {
        match self {
            Dimension::Gender => DemographicValue::Gender(Gender::Unspecified),
            Dimension::Ses => DemographicValue::Ses(Ses::Unspecified),
            Dimension::Race => DemographicValue::Race(Race::Unspecified),
        }
    }
}

/// The full demographic part of a profile: one value per dimension.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
pub struct Demographics {
    pub gender: Gender,
    pub race: Race,
    pub ses: Ses,
}

impl Demographics {
    /// The all-unspecified baseline.
    pub fn baseline() -> Self {
        Self::default()
    }

    /// Baseline with exactly one dimension set.
    pub fn with_value(value: DemographicValue) -> Self {
        let mut d = Self::default();
        d.set(value);
        d
    }

    pub fn set(&mut self, value: DemographicValue) {
        match value {
            DemographicValue::Gender(g) => self.gender = g,
            DemographicValue::Ses(s) => self.ses = s,
            DemographicValue::Race(r) => self.race = r,
        }
    }

    pub fn get(&self, dim: Dimension) -> DemographicValue {
        match dim {
            Dimension::Gender => DemographicValue::Gender(self.gender),
            Dimension::Ses => DemographicValue::Ses(self.ses),
            Dimension::Race => DemographicValue::Race(self.race),
        }
    }

    /// Specified values, in dimension order.
    pub fn specified(&self) -> Vec<DemographicValue> {
        Dimension::ALL
            .iter()
            .map(|&d| self.get(d))
            .filter(|v| !v.is_unspecified())
            .collect()
    }

    /// The single varied value when exactly one dimension is specified.
    pub fn single_value(&self) -> Option<DemographicValue> {
        match self.specified().as_slice() {
            [v] => Some(*v),
            _ => None,
        }
    }

    /// Copy with `dim` reset to unspecified.
    pub fn without(&self, dim: Dimension) -> Self {
        let mut d = *self;
        d.set(dim.unspecified());
        d
    }

    pub fn label(&self) -> String {
        let parts: Vec<_> = self.specified().iter().map(|v| v.key()).collect();
        if parts.is_empty() {
            "baseline".to_string()
        } else {
            parts.join("+")
        }
    }
}
