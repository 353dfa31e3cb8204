use serde::{Deserialize, Serialize};
use tapwater_core::annotations::{duration_report, overlap_table, DurationReport, OverlapTable};

use crate::config::RunConfig;
use crate::data::load_annotations;
use crate::error::{write, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsReport {
    pub durations: DurationReport,
    pub overlap: OverlapTable,
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_default()
}

impl StatsReport {
    pub fn durations_csv(&self) -> String {
        let mut out = String::from(
            "participant,target_s,target_s_min,target_count,target_count_min,\
             reference_s,reference_s_min,reference_count,reference_count_min,ratio,ratio_min\n",
        );
        for r in self.durations.rows.iter().chain([&self.durations.aggregate]) {
            let (n, d) = (&r.numerator, &r.denominator);
            out.push_str(&format!(
                "{},{:.6},{:.6},{},{},{:.6},{:.6},{},{},{},{}\n",
                r.participant_id.as_deref().unwrap_or("all"),
                n.total_s,
                n.total_s_at_least_min,
                n.count,
                n.count_at_least_min,
                d.total_s,
                d.total_s_at_least_min,
                d.count,
                d.count_at_least_min,
                opt(r.ratio_all),
                opt(r.ratio_at_least_min),
            ));
        }
        out
    }

    pub fn overlap_csv(&self) -> String {
        let mut out = String::from("participant,intersection_s,union_s,target_s,reference_s,iou,coverage\n");
        for r in self.overlap.rows.iter().chain([&self.overlap.aggregate]) {
            let t = &r.totals;
            out.push_str(&format!(
                "{},{:.6},{:.6},{:.6},{:.6},{:.6},{}\n",
                r.participant_id.as_deref().unwrap_or("all"),
                t.intersection_s,
                t.union_s,
                t.a_s,
                t.b_s,
                r.iou,
                opt(r.coverage),
            ));
        }
        out
    }

    /// Fixed-width console rendering of both tables.
    pub fn table(&self) -> String {
        let d = &self.durations;
        let mut out = format!(
            "{:<12} {:>12} {:>12} {:>8}   {} = {:?}, {} = {:?}, min {} s\n",
            "participant",
            "target s",
            "reference s",
            "ratio",
            "target",
            d.numerator_class,
            "reference",
            d.denominator_class,
            d.min_s
        );
        for r in d.rows.iter().chain([&d.aggregate]) {
            out.push_str(&format!(
                "{:<12} {:>12.2} {:>12.2} {:>8}\n",
                r.participant_id.as_deref().unwrap_or("all"),
                r.numerator.total_s,
                r.denominator.total_s,
                r.ratio_all.map(|v| format!("{v:.3}")).unwrap_or_else(|| "-".into()),
            ));
        }
        out.push('\n');
        out.push_str(&format!("{:<12} {:>8} {:>9}\n", "participant", "IoU", "coverage"));
        for r in self.overlap.rows.iter().chain([&self.overlap.aggregate]) {
            out.push_str(&format!(
                "{:<12} {:>8.3} {:>9}\n",
                r.participant_id.as_deref().unwrap_or("all"),
                r.iou,
                r.coverage.map(|v| format!("{v:.3}")).unwrap_or_else(|| "-".into()),
            ));
        }
        out
    }
}

/// Duration and overlap tables for the target and reference classes,
/// written under `<out>/stats/`.
pub fn stats(cfg: &RunConfig) -> Result<StatsReport> {
    let records = load_annotations(cfg)?;
    let report = StatsReport {
        durations: duration_report(&records, &cfg.target_class, &cfg.reference_class, cfg.min_fragment_s),
        overlap: overlap_table(&records, &cfg.target_class, &cfg.reference_class),
    };
    let dir = cfg.paths.output_dir.join("stats");
    write(&dir.join("stats.json"), serde_json::to_string_pretty(&report).expect("serializes"))?;
    write(&dir.join("durations.csv"), report.durations_csv())?;
    write(&dir.join("overlap.csv"), report.overlap_csv())?;
    Ok(report)
}
