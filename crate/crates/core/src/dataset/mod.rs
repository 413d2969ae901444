//! Ground-truth and prediction documents.
//!
//! Both documents are JSON. Parsing happens in two stages: a serde pass
//! into plain document structs (failures are parse errors), then a
//! validation pass that checks every rule and collects all violations
//! before failing (validation errors).

mod bucket;
mod synthetic;

pub use bucket::{bucketize, Bucket, BucketDimension, EntityBucket, LengthBucket, ObjectCount};
pub use synthetic::{corrupt_predictions, generate_synthetic, CorruptionParams, SyntheticParams, SyntheticSet};

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::marker::PhantomData;

use serde::de::{MapAccess, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::config::EvalConfig;
use crate::error::{Diagnostic, Diagnostics, Error, Result};
use crate::types::{BBox, EvalInstance, FrameIndex, PredictedTubelet, SlotFrame, StateProbs, Tubelet, Video};

/// JSON object kept as an ordered list of entries, duplicates included, so
/// that repeated keys can be reported instead of silently overwritten.
#[derive(Debug, Clone, PartialEq)]
struct Entries<V>(Vec<(String, V)>);

impl<'de, V: Deserialize<'de>> Deserialize<'de> for Entries<V> {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        struct EntriesVisitor<V>(PhantomData<V>);

        impl<'de, V: Deserialize<'de>> Visitor<'de> for EntriesVisitor<V> {
            type Value = Entries<V>;

            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("an object keyed by frame index")
            }

            fn visit_map<A: MapAccess<'de>>(self, mut map: A) -> std::result::Result<Self::Value, A::Error> {
                let mut out = Vec::with_capacity(map.size_hint().unwrap_or(0));
                while let Some(entry) = map.next_entry::<String, V>()? {
                    out.push(entry);
                }
                Ok(Entries(out))
            }
        }

        deserializer.deserialize_map(EntriesVisitor(PhantomData))
    }
}

impl<V: Serialize> Serialize for Entries<V> {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_map(self.0.iter().map(|(k, v)| (k, v)))
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GroundTruthDoc {
    videos: Vec<Video>,
    instances: Vec<InstanceDoc>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct InstanceDoc {
    instance_id: String,
    video_id: String,
    description: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    entity_count: Option<u32>,
    tubelets: Vec<TubeletDoc>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TubeletDoc {
    tubelet_id: String,
    category: String,
    boxes: Entries<[f64; 4]>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PredictionsDoc {
    #[serde(default)]
    predictions: Vec<InstancePredictionsDoc>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct InstancePredictionsDoc {
    instance_id: String,
    tubelets: Vec<SlotDoc>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SlotDoc {
    slot: usize,
    frames: Entries<FrameDoc>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FrameDoc {
    #[serde(rename = "box")]
    bbox: [f64; 4],
    state_probs: [f64; 3],
}

/// Validated ground truth: the video table and the instances in document order.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub videos: Vec<Video>,
    pub instances: Vec<EvalInstance>,
}

impl GroundTruth {
    pub fn video(&self, video_id: &str) -> Option<&Video> {
        self.videos.iter().find(|v| v.video_id == video_id)
    }

    pub fn instance(&self, instance_id: &str) -> Option<&EvalInstance> {
        self.instances.iter().find(|i| i.instance_id == instance_id)
    }

    pub fn to_json(&self) -> String {
        let doc = GroundTruthDoc {
            videos: self.videos.clone(),
            instances: self
                .instances
                .iter()
                .map(|i| InstanceDoc {
                    instance_id: i.instance_id.clone(),
                    video_id: i.video_id.clone(),
                    description: i.description.clone(),
                    entity_count: i.entity_count,
                    tubelets: i
                        .tubelets()
                        .iter()
                        .map(|t| TubeletDoc {
                            tubelet_id: t.id().to_string(),
                            category: t.category().to_string(),
                            boxes: Entries(t.boxes().iter().map(|(f, b)| (f.to_string(), b.to_array())).collect()),
                        })
                        .collect(),
                })
                .collect(),
        };
        serde_json::to_string_pretty(&doc).expect("ground truth serializes")
    }
}

/// Validated predictions keyed by instance id, slots in ascending order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Predictions {
    pub sets: BTreeMap<String, Vec<PredictedTubelet>>,
    /// Non-fatal findings, such as instances without predictions.
    pub warnings: Vec<Diagnostic>,
}

impl Predictions {
    /// Prediction slots for an instance; empty when the document omitted it.
    pub fn for_instance(&self, instance_id: &str) -> &[PredictedTubelet] {
        self.sets.get(instance_id).map_or(&[], Vec::as_slice)
    }

    pub fn to_json(&self) -> String {
        let doc = PredictionsDoc {
            predictions: self
                .sets
                .iter()
                .map(|(id, slots)| InstancePredictionsDoc {
                    instance_id: id.clone(),
                    tubelets: slots
                        .iter()
                        .map(|p| SlotDoc {
                            slot: p.slot(),
                            frames: Entries(
                                p.frames()
                                    .iter()
                                    .map(|(f, sf)| {
                                        (
                                            f.to_string(),
                                            FrameDoc {
                                                bbox: sf.bbox.to_array(),
                                                state_probs: sf.state_probs.to_array(),
                                            },
                                        )
                                    })
                                    .collect(),
                            ),
                        })
                        .collect(),
                })
                .collect(),
        };
        serde_json::to_string_pretty(&doc).expect("predictions serialize")
    }
}

fn parse_frame_key(key: &str) -> Option<FrameIndex> {
    let canonical = !key.is_empty() && key.bytes().all(|b| b.is_ascii_digit()) && (key == "0" || !key.starts_with('0'));
    if !canonical {
        return None;
    }
    key.parse::<u32>().ok().map(FrameIndex)
}

/// Checks frame keys against the video length and converts each value.
/// Returns `None` if any entry failed (the failures are recorded).
fn validate_frames<V, T>(
    entries: &Entries<V>,
    frame_count: Option<u32>,
    instance_id: &str,
    owner: &str,
    diags: &mut Diagnostics,
    mut convert: impl FnMut(&V) -> std::result::Result<T, (&'static str, String)>,
) -> Option<BTreeMap<FrameIndex, T>> {
    let mut out = BTreeMap::new();
    let mut ok = true;
    for (key, value) in &entries.0 {
        let Some(frame) = parse_frame_key(key) else {
            diags.error(
                instance_id,
                "frame-key",
                format!("{owner}: frame key {key:?} is not a canonical frame index"),
            );
            ok = false;
            continue;
        };
        if let Some(n) = frame_count {
            if frame.0 >= n {
                diags.error(
                    instance_id,
                    "frame-range",
                    format!("{owner}: frame {frame} is outside the video's {n} frames"),
                );
                ok = false;
            }
        }
        match convert(value) {
            Ok(v) => {
                if out.insert(frame, v).is_some() {
                    diags.error(
                        instance_id,
                        "duplicate-frame",
                        format!("{owner}: frame {frame} appears twice"),
                    );
                    ok = false;
                }
            }
            Err((rule, msg)) => {
                diags.error(instance_id, rule, format!("{owner}, frame {frame}: {msg}"));
                ok = false;
            }
        }
    }
    ok.then_some(out)
}

fn convert_box(v: &[f64; 4]) -> std::result::Result<BBox, (&'static str, String)> {
    BBox::new(v[0], v[1], v[2], v[3]).map_err(|e| {
        let hint = if v.iter().any(|x| *x > 1.0) {
            " (boxes must be normalized center form, not pixels)"
        } else {
            ""
        };
        ("box-range", format!("{e}{hint}"))
    })
}

fn parse_json<'a, T: Deserialize<'a>>(document: &'a [u8]) -> Result<T> {
    serde_json::from_slice(document).map_err(|e| Error::Parse(e.to_string()))
}

fn finish<T>(mut diags: Diagnostics, value: T) -> Result<(T, Vec<Diagnostic>)> {
    diags.normalize();
    if diags.is_accepted() {
        Ok((value, diags.warnings))
    } else {
        Err(Error::Validation(diags))
    }
}

/// Parses and validates a ground-truth document.
pub fn parse_ground_truth(document: &[u8]) -> Result<GroundTruth> {
    let doc: GroundTruthDoc = parse_json(document)?;
    let mut diags = Diagnostics::default();

    let mut frame_counts: HashMap<&str, u32> = HashMap::new();
    for v in &doc.videos {
        if frame_counts.insert(&v.video_id, v.frame_count).is_some() {
            diags.error(
                "",
                "duplicate-video-id",
                format!("video {} is listed twice", v.video_id),
            );
        }
        if v.frame_count == 0 || v.width == 0 || v.height == 0 || !(v.fps.is_finite() && v.fps > 0.0) {
            diags.error(
                "",
                "video-metadata",
                format!("video {} needs positive width, height, fps and frame_count", v.video_id),
            );
        }
    }

    let mut seen_instances = BTreeSet::new();
    let mut instances = Vec::with_capacity(doc.instances.len());
    for inst in &doc.instances {
        let id = inst.instance_id.as_str();
        if !seen_instances.insert(id) {
            diags.error(id, "duplicate-instance-id", "instance id is listed twice");
        }
        let frame_count = frame_counts.get(inst.video_id.as_str()).copied();
        if frame_count.is_none() {
            diags.error(
                id,
                "unknown-video",
                format!("video {} is not in the video table", inst.video_id),
            );
        }
        if inst.description.split_whitespace().next().is_none() {
            diags.error(id, "description-empty", "description has no tokens");
        }
        if inst.entity_count == Some(0) {
            diags.error(id, "entity-count", "entity_count must be at least 1");
        }

        let mut tubelet_ids = BTreeSet::new();
        let mut tubelets = Vec::with_capacity(inst.tubelets.len());
        for t in &inst.tubelets {
            let owner = format!("tubelet {}", t.tubelet_id);
            if !tubelet_ids.insert(t.tubelet_id.as_str()) {
                diags.error(id, "duplicate-tubelet-id", format!("{owner} is listed twice"));
            }
            if t.boxes.0.is_empty() {
                diags.error(id, "empty-tubelet", format!("{owner} has no boxes"));
                continue;
            }
            if let Some(boxes) = validate_frames(&t.boxes, frame_count, id, &owner, &mut diags, convert_box) {
                tubelets.push(Tubelet::new(t.tubelet_id.clone(), t.category.clone(), boxes)?);
            }
        }
        if tubelets.len() == inst.tubelets.len() && tubelet_ids.len() == tubelets.len() && inst.entity_count != Some(0)
        {
            instances.push(EvalInstance::new(
                inst.instance_id.clone(),
                inst.video_id.clone(),
                inst.description.clone(),
                inst.entity_count,
                tubelets,
            )?);
        }
    }

    finish(
        diags,
        GroundTruth {
            videos: doc.videos,
            instances,
        },
    )
    .map(|(gt, _)| gt)
}

/// Parses and validates a prediction document against parsed ground truth.
pub fn parse_predictions(document: &[u8], gt: &GroundTruth, cfg: &EvalConfig) -> Result<Predictions> {
    let doc: PredictionsDoc = parse_json(document)?;
    let mut diags = Diagnostics::default();
    let frame_counts: HashMap<&str, u32> = gt.videos.iter().map(|v| (v.video_id.as_str(), v.frame_count)).collect();
    let known: HashMap<&str, &EvalInstance> = gt.instances.iter().map(|i| (i.instance_id.as_str(), i)).collect();

    let mut sets: BTreeMap<String, Vec<PredictedTubelet>> = BTreeMap::new();
    for entry in &doc.predictions {
        let id = entry.instance_id.as_str();
        let Some(instance) = known.get(id) else {
            diags.error(id, "unknown-instance", "instance is not in the ground truth");
            continue;
        };
        if sets.contains_key(id) {
            diags.error(id, "duplicate-instance", "instance has more than one prediction entry");
            continue;
        }
        let frame_count = frame_counts.get(instance.video_id.as_str()).copied();
        let mut slots_seen = BTreeSet::new();
        let mut slots = Vec::with_capacity(entry.tubelets.len());
        for s in &entry.tubelets {
            let owner = format!("slot {}", s.slot);
            if s.slot >= cfg.num_slots {
                diags.error(
                    id,
                    "slot-range",
                    format!("{owner} is not below num_slots {}", cfg.num_slots),
                );
            }
            if !slots_seen.insert(s.slot) {
                diags.error(id, "duplicate-slot", format!("{owner} appears twice"));
            }
            let frames = validate_frames(&s.frames, frame_count, id, &owner, &mut diags, |f: &FrameDoc| {
                let bbox = convert_box(&f.bbox)?;
                let [r, u, a] = f.state_probs;
                let state_probs = StateProbs::new(r, u, a).map_err(|e| ("state-probs", e.to_string()))?;
                Ok(SlotFrame { bbox, state_probs })
            });
            if let Some(frames) = frames {
                slots.push(PredictedTubelet::new(s.slot, frames));
            }
        }
        slots.sort_by_key(PredictedTubelet::slot);
        sets.insert(id.to_string(), slots);
    }

    for inst in &gt.instances {
        if !sets.contains_key(&inst.instance_id) {
            diags.warn(
                &inst.instance_id,
                "missing-instance",
                "no predictions; every slot counts as absent",
            );
        }
    }

    finish(diags, sets).map(|(sets, warnings)| Predictions { sets, warnings })
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "videos": [{"video_id": "v", "width": 640, "height": 480, "fps": 30, "frame_count": 10}],
        "instances": [{
            "instance_id": "i", "video_id": "v", "description": "the red car",
            "tubelets": [{"tubelet_id": "t", "category": "car", "boxes": {"3": [0.5, 0.5, 0.2, 0.2]}}]
        }]
    }"#;

    fn rules(err: Error) -> Vec<String> {
        match err {
            Error::Validation(d) => d.errors.into_iter().map(|e| e.rule).collect(),
            other => panic!("expected validation error, got {other}"),
        }
    }

    #[test]
    fn minimal_document() {
        let gt = parse_ground_truth(MINIMAL.as_bytes()).unwrap();
        assert_eq!(gt.instances.len(), 1);
        assert_eq!(gt.instances[0].tubelets()[0].frames().len(), 1);
        assert_eq!(parse_ground_truth(gt.to_json().as_bytes()).unwrap(), gt);
    }

    #[test]
    fn malformed_is_a_parse_error() {
        assert!(matches!(parse_ground_truth(b"{\"videos\": ["), Err(Error::Parse(_))));
        assert!(matches!(
            parse_ground_truth(b"{\"videos\": 3, \"instances\": []}"),
            Err(Error::Parse(_))
        ));
        assert!(matches!(parse_ground_truth(&[0xff, 0xfe]), Err(Error::Parse(_))));
    }

    #[test]
    fn out_of_range_box_names_rule() {
        let doc = MINIMAL.replace("[0.5, 0.5, 0.2, 0.2]", "[1.5, 0.5, 0.2, 0.2]");
        assert_eq!(
            rules(parse_ground_truth(doc.as_bytes()).unwrap_err()),
            vec!["box-range"]
        );
        let pixels = MINIMAL.replace("[0.5, 0.5, 0.2, 0.2]", "[320, 240, 50, 50]");
        assert_eq!(
            rules(parse_ground_truth(pixels.as_bytes()).unwrap_err()),
            vec!["box-range"]
        );
    }

    #[test]
    fn frame_rules() {
        let far = MINIMAL.replace("\"3\":", "\"10\":");
        assert_eq!(
            rules(parse_ground_truth(far.as_bytes()).unwrap_err()),
            vec!["frame-range"]
        );
        let padded = MINIMAL.replace("\"3\":", "\"03\":");
        assert_eq!(
            rules(parse_ground_truth(padded.as_bytes()).unwrap_err()),
            vec!["frame-key"]
        );
        let dup = MINIMAL.replace(
            "\"3\": [0.5, 0.5, 0.2, 0.2]",
            "\"3\": [0.5, 0.5, 0.2, 0.2], \"3\": [0.4, 0.5, 0.2, 0.2]",
        );
        assert_eq!(
            rules(parse_ground_truth(dup.as_bytes()).unwrap_err()),
            vec!["duplicate-frame"]
        );
        let empty = MINIMAL.replace("{\"3\": [0.5, 0.5, 0.2, 0.2]}", "{}");
        assert_eq!(
            rules(parse_ground_truth(empty.as_bytes()).unwrap_err()),
            vec!["empty-tubelet"]
        );
    }

    #[test]
    fn identity_rules() {
        let doc = r#"{
            "videos": [{"video_id": "v", "width": 1, "height": 1, "fps": 1, "frame_count": 2}],
            "instances": [
                {"instance_id": "a", "video_id": "v", "description": "x", "tubelets": []},
                {"instance_id": "a", "video_id": "w", "description": "  ", "entity_count": 0, "tubelets": []}
            ]
        }"#;
        let mut r = rules(parse_ground_truth(doc.as_bytes()).unwrap_err());
        r.sort();
        assert_eq!(
            r,
            vec![
                "description-empty",
                "duplicate-instance-id",
                "entity-count",
                "unknown-video"
            ]
        );
    }

    #[test]
    fn zero_tubelet_instance_is_legal() {
        let doc = MINIMAL.replace(
            r#"[{"tubelet_id": "t", "category": "car", "boxes": {"3": [0.5, 0.5, 0.2, 0.2]}}]"#,
            "[]",
        );
        let gt = parse_ground_truth(doc.as_bytes()).unwrap();
        assert!(gt.instances[0].tubelets().is_empty());
    }

    fn gt() -> GroundTruth {
        parse_ground_truth(MINIMAL.as_bytes()).unwrap()
    }

    fn pred_doc(slot: usize, probs: &str) -> String {
        format!(
            r#"{{"predictions": [{{"instance_id": "i", "tubelets": [
                {{"slot": {slot}, "frames": {{"3": {{"box": [0.5, 0.5, 0.2, 0.2], "state_probs": {probs}}}}}}}
            ]}}]}}"#
        )
    }

    #[test]
    fn predictions_valid_and_round_trip() {
        let cfg = EvalConfig::default();
        let p = parse_predictions(pred_doc(2, "[0.8, 0.1, 0.1]").as_bytes(), &gt(), &cfg).unwrap();
        assert_eq!(p.for_instance("i").len(), 1);
        assert!(p.warnings.is_empty());
        assert_eq!(parse_predictions(p.to_json().as_bytes(), &gt(), &cfg).unwrap(), p);
    }

    #[test]
    fn empty_predictions_document() {
        let cfg = EvalConfig::default();
        for doc in ["{}", r#"{"predictions": []}"#] {
            let p = parse_predictions(doc.as_bytes(), &gt(), &cfg).unwrap();
            assert!(p.for_instance("i").is_empty());
            assert_eq!(p.warnings[0].rule, "missing-instance");
        }
    }

    #[test]
    fn prediction_rules() {
        let cfg = EvalConfig::default();
        let err = parse_predictions(pred_doc(15, "[0.8, 0.1, 0.1]").as_bytes(), &gt(), &cfg).unwrap_err();
        assert_eq!(rules(err), vec!["slot-range"]);
        let err = parse_predictions(pred_doc(0, "[0.5, 0.5, 0.1]").as_bytes(), &gt(), &cfg).unwrap_err();
        assert_eq!(rules(err), vec!["state-probs"]);
        let unknown = pred_doc(0, "[1, 0, 0]").replace("\"i\"", "\"nope\"");
        assert_eq!(
            rules(parse_predictions(unknown.as_bytes(), &gt(), &cfg).unwrap_err()),
            vec!["unknown-instance"]
        );
    }

    #[test]
    fn diagnostics_do_not_depend_on_instance_order() {
        let a = r#"{"instance_id": "a", "video_id": "v", "description": "x", "entity_count": 0, "tubelets": []}"#;
        let b = r#"{"instance_id": "b", "video_id": "nope", "description": "y", "tubelets": []}"#;
        let doc = |first: &str, second: &str| {
            format!(
                r#"{{"videos": [{{"video_id": "v", "width": 1, "height": 1, "fps": 1, "frame_count": 2}}], "instances": [{first}, {second}]}}"#
            )
        };
        let d1 = parse_ground_truth(doc(a, b).as_bytes()).unwrap_err();
        let d2 = parse_ground_truth(doc(b, a).as_bytes()).unwrap_err();
        match (d1, d2) {
            (Error::Validation(x), Error::Validation(y)) => assert_eq!(x, y),
            _ => panic!("expected validation errors"),
        }
    }
}
