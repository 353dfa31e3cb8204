use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use tapwater_core::annotations::{find_inconsistencies, Finding};

use crate::config::RunConfig;
use crate::data::load_annotations;
use crate::error::{write, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub min_fragment_s: f64,
    pub class_counts: BTreeMap<String, usize>,
    pub findings: Vec<Finding>,
}

/// Overlapping, contained and short same-class labels, written to
/// `<out>/validation.json`.
pub fn validate(cfg: &RunConfig) -> Result<ValidationReport> {
    let records = load_annotations(cfg)?;
    let mut class_counts = BTreeMap::new();
    for r in &records {
        *class_counts.entry(r.class_label.clone()).or_insert(0) += 1;
    }
    let report = ValidationReport {
        min_fragment_s: cfg.min_fragment_s,
        class_counts,
        findings: find_inconsistencies(&records, cfg.min_fragment_s),
    };
    write(&cfg.paths.output_dir.join("validation.json"), serde_json::to_string_pretty(&report).expect("serializes"))?;
    Ok(report)
}
