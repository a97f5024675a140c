//! Ablation preset names exposed on the command line.

use gapnet_core::asga::AsgaVariant;
use gapnet_core::cgdf::CgdfContext;
use gapnet_core::model::AblationConfig;

use crate::error::CmdError;

pub const TABLE_PRESETS: [&str; 5] = ["baseline", "+asga", "+gcqc", "+cgdf", "full"];

pub const ALL_PRESETS: [&str; 11] = [
    "baseline",
    "+asga",
    "+gcqc",
    "+cgdf",
    "full",
    "softmax",
    "naive-sigmoid",
    "no-pafs",
    "no-qgg",
    "cgdf-minimalist",
    "cgdf-full",
];

pub fn parse_preset(name: &str) -> Result<AblationConfig, CmdError> {
    let ablation = match name {
        "baseline" | "softmax" => AblationConfig::baseline(),
        "+asga" | "asga" => AblationConfig::plus_asga(),
        "+gcqc" => AblationConfig::plus_gcqc(),
        "+cgdf" => AblationConfig::plus_cgdf(),
        "full" | "cgdf-purified" => AblationConfig::full(),
        "naive-sigmoid" => AblationConfig::attention_variant(AsgaVariant::NaiveSigmoid),
        "no-pafs" => AblationConfig::attention_variant(AsgaVariant::NoPafs),
        "no-qgg" => AblationConfig::attention_variant(AsgaVariant::NoQgg),
        "cgdf-minimalist" => {
            AblationConfig { cgdf_context: CgdfContext::Minimalist, ..AblationConfig::full() }
        }
        "cgdf-full" => AblationConfig { cgdf_context: CgdfContext::Full, ..AblationConfig::full() },
        other => {
            return Err(CmdError::Usage(format!(
                "unknown ablation preset `{other}`; valid presets: {}",
                ALL_PRESETS.join(", ")
            )))
        }
    };
    Ok(ablation)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_listed_preset_parses() {
        for name in ALL_PRESETS {
            parse_preset(name).unwrap();
        }
    }

    #[test]
    fn typo_lists_valid_presets() {
        let err = parse_preset("basePine").unwrap_err();
        assert_eq!(err.exit_code(), 1);
        let msg = err.to_string();
        assert!(msg.contains("basePine") && msg.contains("baseline"), "{msg}");
    }

    #[test]
    fn table_rows_map_to_expected_gates() {
        assert_eq!(parse_preset("baseline").unwrap(), AblationConfig::baseline());
        let full = parse_preset("full").unwrap();
        assert!(full.asga_on && full.gcqc_on && full.cgdf_on);
        let asga = parse_preset("+asga").unwrap();
        assert!(asga.asga_on && !asga.gcqc_on && !asga.cgdf_on);
    }
}
