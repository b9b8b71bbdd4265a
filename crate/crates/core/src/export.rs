//! Plot-ready text artifacts: detection and attribution CSVs, metrics and
//! grid-search JSON. All writers are deterministic functions of their inputs,
//! so reruns with the same seed produce byte-identical files.

use crate::error::{Error, Result};
use crate::explain::aggregate_per_feature;
use crate::ingest::Window;
use crate::pipeline::{Detection, GridSearchReport, Metrics};

fn csv_field(name: &str) -> String {
    if name.contains(',') || name.contains('"') || name.contains('\n') {
        format!("\"{}\"", name.replace('"', "\"\""))
    } else {
        name.to_string()
    }
}

/// One line per window: start index, verdict, OCSVM decision value, surrogate score.
pub fn detections_to_csv(detections: &[Detection]) -> String {
    let mut out = String::from("window_start,verdict,decision,score\n");
    for d in detections {
        out.push_str(&format!(
            "{},{},{},{}\n",
            d.start_index, d.verdict, d.decision, d.score
        ));
    }
    out
}

/// Long-format per-cell attributions for every explained window.
pub fn attributions_to_csv(
    detections: &[Detection],
    windows: &[Window],
    feature_names: &[String],
) -> Result<String> {
    if detections.len() != windows.len() {
        return Err(Error::shape(
            format!("{} windows", detections.len()),
            format!("{} windows", windows.len()),
        ));
    }
    let mut out = String::from("window_id,timestep,feature_name,shap_value,feature_value\n");
    for (det, window) in detections.iter().zip(windows) {
        let Some(attr) = &det.attribution else { continue };
        for t in 0..attr.values.nrows() {
            for k in 0..attr.values.ncols() {
                out.push_str(&format!(
                    "{},{},{},{},{}\n",
                    det.start_index,
                    t,
                    csv_field(&feature_names[k]),
                    attr.values[[t, k]],
                    window.values[[t, k]],
                ));
            }
        }
    }
    Ok(out)
}

/// Per-window feature summary in descending importance order, the plot-ready
/// counterpart of a global attribution chart.
pub fn attribution_summary_to_csv(
    detections: &[Detection],
    feature_names: &[String],
) -> Result<String> {
    let mut out = String::from("window_id,feature_name,signed_sum,mean_abs,rank\n");
    for det in detections {
        let Some(attr) = &det.attribution else { continue };
        if attr.values.ncols() != feature_names.len() {
            return Err(Error::shape(
                format!("{} feature names", attr.values.ncols()),
                format!("{}", feature_names.len()),
            ));
        }
        let agg = aggregate_per_feature(attr);
        for (rank, &k) in agg.ranking.iter().enumerate() {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                det.start_index,
                csv_field(&feature_names[k]),
                agg.signed[k],
                agg.mean_abs[k],
                rank + 1,
            ));
        }
    }
    Ok(out)
}

/// Metrics report with a config echo, serialized as JSON.
pub fn metrics_to_json(metrics: &Metrics, config_echo: &serde_json::Value) -> Result<String> {
    let doc = serde_json::json!({
        "metrics": metrics,
        "config": config_echo,
    });
    serde_json::to_string_pretty(&doc).map_err(|e| Error::Format(e.to_string()))
}

pub fn grid_report_to_json(report: &GridSearchReport) -> Result<String> {
    serde_json::to_string_pretty(report).map_err(|e| Error::Format(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::explain::AttributionMatrix;
    use crate::ocsvm::Verdict;
    use ndarray::array;

    fn sample_detection(with_attr: bool) -> Detection {
        Detection {
            start_index: 3,
            verdict: if with_attr { Verdict::Anomaly } else { Verdict::Normal },
            decision: -0.25,
            score: 1.5,
            attribution: with_attr.then(|| AttributionMatrix {
                values: array![[0.5, -1.0], [0.25, 2.0]],
                baseline_expectation: 0.1,
                explained_score: 1.5,
            }),
        }
    }

    #[test]
    fn detections_csv_layout() {
        let csv = detections_to_csv(&[sample_detection(false)]);
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), "window_start,verdict,decision,score");
        assert_eq!(lines.next().unwrap(), "3,normal,-0.25,1.5");
    }

    #[test]
    fn attribution_csv_includes_values_and_rank() {
        let det = sample_detection(true);
        let window = Window {
            start_index: 3,
            values: array![[0.9, 0.1], [0.8, 0.2]],
            label: 1,
        };
        let names = vec!["pressure".to_string(), "crc rate".to_string()];
        let csv = attributions_to_csv(&[det.clone()], &[window], &names).unwrap();
        assert!(csv.contains("3,0,pressure,0.5,0.9"));
        assert!(csv.contains("3,1,crc rate,2,0.2"));

        let summary = attribution_summary_to_csv(&[det], &names).unwrap();
        // feature 1 has mean_abs 1.5 vs 0.375: it ranks first.
        let lines: Vec<&str> = summary.lines().collect();
        assert_eq!(lines[1], "3,crc rate,1,1.5,1");
        assert_eq!(lines[2], "3,pressure,0.75,0.375,2");
    }

    #[test]
    fn field_quoting() {
        assert_eq!(csv_field("plain"), "plain");
        assert_eq!(csv_field("a,b"), "\"a,b\"");
        assert_eq!(csv_field("q\"q"), "\"q\"\"q\"");
    }
}
