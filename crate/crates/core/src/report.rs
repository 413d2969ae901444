//! Batch evaluation over parsed documents and report rendering.

use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::assignment::{brute_force_padded, match_instance, BRUTE_FORCE_MAX};
use crate::config::EvalConfig;
use crate::dataset::{
    bucketize, parse_ground_truth, parse_predictions, Bucket, BucketDimension, GroundTruth, Predictions,
};
use crate::error::{invalid, Diagnostic, Error, Result};
use crate::metrics::{
    ap_from_curve, fraction_above, frame_detections, mean, pair_scores, video_detections, InstancePredictions, PrCurve,
    ScoredDetection,
};
use crate::types::EvalInstance;

pub const TOOL_NAME: &str = "tubelet-eval";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Largest ground-truth count for which `check_oracle` runs the exhaustive search.
pub const ORACLE_MAX_TUBELETS: usize = 7;

#[derive(Debug, Clone, PartialEq)]
pub struct EvalOptions {
    pub config: EvalConfig,
    pub buckets: Vec<BucketDimension>,
    /// Worker threads for per-instance evaluation.
    pub jobs: usize,
    pub check_oracle: bool,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            config: EvalConfig::default(),
            buckets: BucketDimension::ALL.to_vec(),
            jobs: 1,
            check_oracle: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolInfo {
    pub name: String,
    pub version: String,
}

/// Fixed evaluation conventions, echoed so a report is self-describing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Protocol {
    pub matching: String,
    pub extent: String,
    pub viou_at_r: String,
    pub ap_matching: String,
    pub ap_interpolation: String,
    pub ap_pooling: String,
    pub frame_ap_detections: String,
    pub video_ap_overlap: String,
    pub object_count_buckets: String,
    pub length_buckets: String,
    pub entity_buckets: String,
    pub notes: Vec<String>,
}

impl Default for Protocol {
    fn default() -> Self {
        let s = String::from;
        Self {
            matching: s(
                "hungarian over tubelet-wise mean frame cost on the union of gt frames and predicted extent; \
                         no-object rows cost 0; ties take the lexicographically smallest permutation",
            ),
            extent: s(
                "frames whose state argmax is referenced; argmax ties resolve to absent, then present-unreferenced",
            ),
            viou_at_r: s("fraction of matched pairs with vIoU strictly greater than R"),
            ap_matching: s(
                "greedy by confidence desc, best overlap desc, slot asc; each detection claims the unclaimed \
                            gt with the highest overlap; true positive iff overlap > R",
            ),
            ap_interpolation: s("all-point"),
            ap_pooling: s("dataset-wide; zero-gt instances contribute false positives only"),
            frame_ap_detections: s("every emitted slot frame, scored by p_referenced"),
            video_ap_overlap: s("vIoU; detections are slots with a non-empty extent, scored by mean p_referenced"),
            object_count_buckets: s("zero-object: 0, single-object: 1, multi-objects: >= 2 gt tubelets"),
            length_buckets: s("short: l <= 5, normal: 6 <= l <= 9, long: l >= 10 whitespace tokens"),
            entity_buckets: s("few: n <= 1, moderate: 2 <= n <= 3, many: n >= 4, unknown: not annotated"),
            notes: vec![s("description length l = 6 is assigned to normal")],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdValue {
    pub threshold: f64,
    pub value: Option<f64>,
}

/// Aggregate metrics over a set of instances. IoU-family values are `None`
/// when the set has no ground-truth tubelet; AP values likewise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub instances: usize,
    pub gt_tubelets: usize,
    pub m_viou: Option<f64>,
    pub tiou: Option<f64>,
    pub viou_at: Vec<ThresholdValue>,
    pub frame_ap: Option<f64>,
    pub video_ap: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BucketRow {
    pub label: String,
    pub metrics: MetricRow,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BucketTable {
    pub dimension: BucketDimension,
    pub rows: Vec<BucketRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairReport {
    pub tubelet_id: String,
    pub slot: usize,
    /// Whether the slot appears in the prediction document.
    pub emitted: bool,
    pub viou: f64,
    pub tiou: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceReport {
    pub instance_id: String,
    pub video_id: String,
    pub bucket: Bucket,
    pub matching_cost: f64,
    pub pairs: Vec<PairReport>,
    /// Emitted slots matched to no-object.
    pub unmatched_slots: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub tool: ToolInfo,
    pub config: EvalConfig,
    pub protocol: Protocol,
    pub overall: MetricRow,
    pub buckets: Vec<BucketTable>,
    pub instances: Vec<InstanceReport>,
    pub warnings: Vec<Diagnostic>,
}

/// Everything the reduction needs from one instance.
struct InstanceResult {
    report: InstanceReport,
    vious: Vec<f64>,
    tious: Vec<f64>,
    frame: (Vec<ScoredDetection>, usize),
    video: (Vec<ScoredDetection>, usize),
}

fn evaluate_instance(
    instance: &EvalInstance,
    predictions: &Predictions,
    options: &EvalOptions,
) -> Result<InstanceResult> {
    let cfg = &options.config;
    let preds = predictions.for_instance(&instance.instance_id);
    let matching = match_instance(instance, preds, cfg)?;
    let n_gt = instance.tubelets().len();

    if options.check_oracle && n_gt <= ORACLE_MAX_TUBELETS.min(BRUTE_FORCE_MAX) {
        let exhaustive = brute_force_padded(&matching.costs, n_gt)?;
        if exhaustive.total_cost != matching.assignment.total_cost {
            return Err(Error::OracleMismatch {
                instance_id: instance.instance_id.clone(),
                hungarian: matching.assignment.total_cost,
                exhaustive: exhaustive.total_cost,
            });
        }
    }

    let emitted = |slot: usize| preds.iter().any(|p| p.slot() == slot);
    let mut pairs = Vec::with_capacity(n_gt);
    let mut vious = Vec::with_capacity(n_gt);
    let mut tious = Vec::with_capacity(n_gt);
    for (pair, &slot) in matching.pairs.iter().zip(&matching.assignment.mapping) {
        let s = pair_scores(&pair.gt, &pair.pred);
        vious.push(s.viou);
        tious.push(s.tiou);
        pairs.push(PairReport {
            tubelet_id: pair.gt.id().to_string(),
            slot,
            emitted: emitted(slot),
            viou: s.viou,
            tiou: s.tiou,
        });
    }
    let matched = &matching.assignment.mapping[..n_gt];
    let unmatched_slots = preds
        .iter()
        .map(|p| p.slot())
        .filter(|s| !matched.contains(s))
        .collect();

    let item = InstancePredictions { instance, preds };
    Ok(InstanceResult {
        report: InstanceReport {
            instance_id: instance.instance_id.clone(),
            video_id: instance.video_id.clone(),
            bucket: bucketize(instance),
            matching_cost: matching.assignment.total_cost,
            pairs,
            unmatched_slots,
        },
        vious,
        tious,
        frame: frame_detections(item, cfg.frame_ap_threshold),
        video: video_detections(item, cfg.video_ap_threshold),
    })
}

fn pooled_ap<'a>(parts: impl Iterator<Item = &'a (Vec<ScoredDetection>, usize)>) -> Option<f64> {
    let mut all = Vec::new();
    let mut num_gt = 0;
    for (d, g) in parts {
        all.extend_from_slice(d);
        num_gt += g;
    }
    PrCurve::from_detections(all, num_gt).map(|c| ap_from_curve(&c))
}

fn metric_row(results: &[&InstanceResult], cfg: &EvalConfig) -> MetricRow {
    let vious: Vec<f64> = results.iter().flat_map(|r| r.vious.iter().copied()).collect();
    let tious: Vec<f64> = results.iter().flat_map(|r| r.tious.iter().copied()).collect();
    let has_pairs = !vious.is_empty();
    let when = |v: f64| has_pairs.then_some(v);
    MetricRow {
        instances: results.len(),
        gt_tubelets: vious.len(),
        m_viou: when(mean(&vious)),
        tiou: when(mean(&tious)),
        viou_at: cfg
            .viou_thresholds
            .iter()
            .map(|&threshold| ThresholdValue {
                threshold,
                value: when(fraction_above(&vious, threshold)),
            })
            .collect(),
        frame_ap: pooled_ap(results.iter().map(|r| &r.frame)),
        video_ap: pooled_ap(results.iter().map(|r| &r.video)),
    }
}

/// Evaluates parsed documents. Instances are processed in ascending
/// `instance_id` order and the report does not depend on `jobs`.
pub fn evaluate(gt: &GroundTruth, predictions: &Predictions, options: &EvalOptions) -> Result<MetricsReport> {
    options.config.validate()?;
    if options.jobs == 0 {
        return Err(invalid("jobs must be at least 1"));
    }
    let mut instances: Vec<&EvalInstance> = gt.instances.iter().collect();
    instances.sort_by(|a, b| a.instance_id.cmp(&b.instance_id));

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(options.jobs)
        .build()
        .map_err(|e| invalid(format!("cannot start worker pool: {e}")))?;
    let outcomes: Vec<Result<InstanceResult>> = pool.install(|| {
        instances
            .par_iter()
            .map(|inst| evaluate_instance(inst, predictions, options))
            .collect()
    });
    let results = outcomes.into_iter().collect::<Result<Vec<_>>>()?;

    let cfg = &options.config;
    let all: Vec<&InstanceResult> = results.iter().collect();
    let overall = metric_row(&all, cfg);

    let mut dimensions = options.buckets.clone();
    dimensions.dedup();
    let buckets = dimensions
        .iter()
        .map(|&dimension| BucketTable {
            dimension,
            rows: dimension
                .labels()
                .into_iter()
                .map(|label| {
                    let members: Vec<&InstanceResult> = results
                        .iter()
                        .filter(|r| dimension.label_of(&r.report.bucket) == label)
                        .collect();
                    BucketRow {
                        label: label.to_string(),
                        metrics: metric_row(&members, cfg),
                    }
                })
                .collect(),
        })
        .collect();

    let mut warnings = predictions.warnings.clone();
    if overall.gt_tubelets == 0 {
        warnings.push(Diagnostic::new(
            "",
            "no-ground-truth",
            "no ground-truth tubelets; IoU metrics and APs are undefined",
        ));
    }

    Ok(MetricsReport {
        tool: ToolInfo {
            name: TOOL_NAME.to_string(),
            version: TOOL_VERSION.to_string(),
        },
        config: cfg.clone(),
        protocol: Protocol::default(),
        overall,
        buckets,
        instances: results.into_iter().map(|r| r.report).collect(),
        warnings,
    })
}

/// Parses both documents and evaluates them.
pub fn evaluate_documents(gt_document: &[u8], pred_document: &[u8], options: &EvalOptions) -> Result<MetricsReport> {
    options.config.validate()?;
    let gt = parse_ground_truth(gt_document)?;
    let predictions = parse_predictions(pred_document, &gt, &options.config)?;
    evaluate(&gt, &predictions, options)
}

pub fn evaluate_files(gt_path: &Path, pred_path: &Path, options: &EvalOptions) -> Result<MetricsReport> {
    let gt = std::fs::read(gt_path)?;
    let pred = std::fs::read(pred_path)?;
    evaluate_documents(&gt, &pred, options)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Json,
    Table,
}

impl std::str::FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "json" => Ok(Format::Json),
            "table" => Ok(Format::Table),
            other => Err(format!("unknown format {other:?} (expected json or table)")),
        }
    }
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.2}"))
}

fn table_cells(name: String, row: &MetricRow) -> Vec<String> {
    let mut cells = vec![
        name,
        row.instances.to_string(),
        row.gt_tubelets.to_string(),
        cell(row.m_viou),
        cell(row.tiou),
    ];
    cells.extend(row.viou_at.iter().map(|t| cell(t.value)));
    cells.push(cell(row.frame_ap));
    cells.push(cell(row.video_ap));
    cells
}

fn render_table(report: &MetricsReport) -> String {
    let cfg = &report.config;
    let mut header = vec![
        "bucket".to_string(),
        "instances".to_string(),
        "gt".to_string(),
        "m_vIoU".to_string(),
        "tIoU".to_string(),
    ];
    header.extend(cfg.viou_thresholds.iter().map(|r| format!("vIoU@{r}")));
    header.push(format!("frame-AP@{}", cfg.frame_ap_threshold));
    header.push(format!("video-AP@{}", cfg.video_ap_threshold));

    let mut rows = vec![header, table_cells("overall".to_string(), &report.overall)];
    for table in &report.buckets {
        for r in &table.rows {
            rows.push(table_cells(format!("{}/{}", table.dimension, r.label), &r.metrics));
        }
    }
    let widths: Vec<usize> = (0..rows[0].len())
        .map(|c| rows.iter().map(|r| r[c].len()).max().unwrap_or(0))
        .collect();

    let mut out = String::new();
    for row in &rows {
        let line: Vec<String> = row
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(c, (v, &w))| if c == 0 { format!("{v:<w$}") } else { format!("{v:>w$}") })
            .collect();
        writeln!(out, "{}", line.join("  ").trim_end()).expect("writing to a String");
    }
    out
}

/// Renders a report. JSON is the canonical format; the table rounds to two
/// decimals for display and shows `-` for undefined values.
pub fn render_report(report: &MetricsReport, format: Format) -> String {
    match format {
        Format::Json => {
            let mut s = serde_json::to_string_pretty(report).expect("report serializes");
            s.push('\n');
            s
        }
        Format::Table => render_table(report),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{generate_synthetic, CorruptionParams, SyntheticParams};

    const GT: &str = r#"{
      "videos": [{"video_id": "v", "width": 640, "height": 480, "fps": 25.0, "frame_count": 10}],
      "instances": [
        {"instance_id": "a", "video_id": "v", "description": "the dog", "entity_count": 1,
         "tubelets": [{"tubelet_id": "t0", "category": "dog",
           "boxes": {"0": [0.5,0.5,0.2,0.2], "1": [0.5,0.5,0.2,0.2], "2": [0.5,0.5,0.2,0.2], "3": [0.5,0.5,0.2,0.2]}}]},
        {"instance_id": "b", "video_id": "v", "description": "nothing here at all", "tubelets": []}
      ]
    }"#;

    fn frame(f: u32) -> String {
        format!(r#""{f}": {{"box": [0.5,0.5,0.2,0.2], "state_probs": [1.0,0.0,0.0]}}"#)
    }

    fn preds(frames: impl Iterator<Item = u32>) -> String {
        let frames: Vec<String> = frames.map(frame).collect();
        format!(
            r#"{{"predictions": [{{"instance_id": "a", "tubelets": [{{"slot": 3, "frames": {{{}}}}}]}}]}}"#,
            frames.join(",")
        )
    }

    fn run(pred: &str, options: &EvalOptions) -> MetricsReport {
        evaluate_documents(GT.as_bytes(), pred.as_bytes(), options).unwrap()
    }

    #[test]
    fn third_overlap_fixture() {
        let r = run(&preds(2..6), &EvalOptions::default());
        assert_eq!(r.overall.gt_tubelets, 1);
        assert!((r.overall.m_viou.unwrap() - 1.0 / 3.0).abs() < 1e-12);
        assert!((r.overall.tiou.unwrap() - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(r.instances[0].pairs[0].slot, 3);
        assert!(r.instances[0].pairs[0].emitted);
        let table = render_report(&r, Format::Table);
        assert!(table.contains("0.33"), "{table}");
        let zero = table
            .lines()
            .find(|l| l.starts_with("object-count/zero-object"))
            .unwrap();
        assert!(zero.split_whitespace().skip(3).all(|c| c == "-"), "{zero}");
    }

    #[test]
    fn empty_predictions_score_zero() {
        let r = run("{}", &EvalOptions::default());
        assert_eq!(r.overall.m_viou, Some(0.0));
        assert_eq!(r.overall.frame_ap, Some(0.0));
        assert_eq!(r.overall.video_ap, Some(0.0));
        assert_eq!(r.warnings.iter().filter(|w| w.rule == "missing-instance").count(), 2);
        assert!(!r.instances[0].pairs[0].emitted);
    }

    #[test]
    fn perfect_run_is_all_ones() {
        let r = run(&preds(0..4), &EvalOptions::default());
        let table = render_report(&r, Format::Table);
        for line in table.lines().skip(1) {
            for c in line.split_whitespace().skip(3) {
                assert!(c == "1.00" || c == "-", "{line}");
            }
        }
    }

    #[test]
    fn json_round_trip() {
        let r = run(&preds(1..3), &EvalOptions::default());
        let text = render_report(&r, Format::Json);
        let back: MetricsReport = serde_json::from_str(&text).unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn config_changes_show_in_header() {
        let base = run(&preds(1..3), &EvalOptions::default());
        let cfg = EvalConfig {
            log_epsilon: 1e-9,
            ..EvalConfig::default()
        };
        let other = run(
            &preds(1..3),
            &EvalOptions {
                config: cfg,
                ..EvalOptions::default()
            },
        );
        assert_ne!(
            serde_json::to_string(&base.config).unwrap(),
            serde_json::to_string(&other.config).unwrap()
        );
    }

    #[test]
    fn overall_equals_union_of_object_count_buckets() {
        let s = generate_synthetic(5, &SyntheticParams::default(), &CorruptionParams::default()).unwrap();
        let r = evaluate(&s.ground_truth, &s.corrupted, &EvalOptions::default()).unwrap();
        let table = r
            .buckets
            .iter()
            .find(|b| b.dimension == BucketDimension::ObjectCount)
            .unwrap();
        let instances: usize = table.rows.iter().map(|b| b.metrics.instances).sum();
        let gts: usize = table.rows.iter().map(|b| b.metrics.gt_tubelets).sum();
        assert_eq!(instances, r.overall.instances);
        assert_eq!(gts, r.overall.gt_tubelets);
        let weighted: f64 = table
            .rows
            .iter()
            .filter_map(|b| b.metrics.m_viou.map(|m| m * b.metrics.gt_tubelets as f64))
            .sum();
        assert!((weighted / gts as f64 - r.overall.m_viou.unwrap()).abs() < 1e-12);
    }

    #[test]
    fn jobs_do_not_change_output() {
        let s = generate_synthetic(9, &SyntheticParams::default(), &CorruptionParams::default()).unwrap();
        let one = evaluate(&s.ground_truth, &s.corrupted, &EvalOptions::default()).unwrap();
        let four = evaluate(
            &s.ground_truth,
            &s.corrupted,
            &EvalOptions {
                jobs: 4,
                ..EvalOptions::default()
            },
        )
        .unwrap();
        assert_eq!(render_report(&one, Format::Json), render_report(&four, Format::Json));
    }

    #[test]
    fn oracle_check_passes_on_synthetic_data() {
        let s = generate_synthetic(2, &SyntheticParams::default(), &CorruptionParams::default()).unwrap();
        let options = EvalOptions {
            check_oracle: true,
            ..EvalOptions::default()
        };
        evaluate(&s.ground_truth, &s.corrupted, &options).unwrap();
    }

    #[test]
    fn rejects_zero_jobs() {
        let options = EvalOptions {
            jobs: 0,
            ..EvalOptions::default()
        };
        assert!(matches!(
            evaluate_documents(GT.as_bytes(), b"{}", &options),
            Err(Error::InvalidInput(_))
        ));
    }
}
