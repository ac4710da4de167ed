use std::collections::HashSet;
use std::sync::Arc;

use proptest::collection::vec;
use proptest::prelude::*;

use posewatch::classifier::Classifier;
use posewatch::dataset::{
    expand_interval_labels, read_feature_csv, stratified_split, write_feature_csv, IntervalLabelRow, Label,
    LabeledSample, SplitSpec,
};
use posewatch::keypoint::{
    normalize_skeleton, BoundingBox, FeatureVector, FrameDetections, Keypoint, PersonDetection, Skeleton,
    FEATURE_LEN,
};
use posewatch::metrics::{classification_report, ConfusionMatrix2};
use posewatch::mlp::{train_mlp_raw, MlpConfig, MlpModel, Mode};
use posewatch::pipeline::{classify_state, smooth_probability, PersonStatus, Pipeline, PipelineConfig, Thresholds};
use posewatch::svm::PlattParams;
use posewatch::tracking::{greedy_match, iou, Tracker, TrackerConfig};

fn keypoint() -> impl Strategy<Value = Keypoint> {
    prop_oneof![
        1 => Just(Keypoint::missing()),
        6 => (-50.0..450.0f64, -50.0..650.0f64, 0.05..1.0f64).prop_map(|(x, y, c)| Keypoint::new(x, y, c)),
    ]
}

fn skeleton() -> impl Strategy<Value = Skeleton> {
    vec(keypoint(), 17).prop_map(|k| Skeleton::new(k).unwrap())
}

fn bbox() -> impl Strategy<Value = BoundingBox> {
    (-100.0..500.0f64, -100.0..500.0f64, 1.0..400.0f64, 1.0..400.0f64)
        .prop_map(|(x, y, w, h)| BoundingBox::new(x, y, w, h))
}

fn features() -> impl Strategy<Value = FeatureVector> {
    vec(0.0..=1.0f64, FEATURE_LEN).prop_map(|v| FeatureVector::from_slice(&v).unwrap())
}

fn label() -> impl Strategy<Value = Label> {
    prop_oneof![Just(Label::Normal), Just(Label::Fight)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn normalization_ignores_translation_and_scale(
        sk in skeleton(),
        b in bbox(),
        s in 0.1..10.0f64,
        dx in -1000.0..1000.0f64,
        dy in -1000.0..1000.0f64,
    ) {
        let f = normalize_skeleton(&sk, &b).unwrap();
        let g = normalize_skeleton(&sk.transformed(s, dx, dy), &b.transformed(s, dx, dy)).unwrap();
        for (a, b) in f.as_slice().iter().zip(g.as_slice()) {
            prop_assert!((a - b).abs() <= 1e-9, "{a} vs {b}");
        }
    }

    #[test]
    fn normalized_features_lie_in_unit_range(sk in skeleton(), b in bbox()) {
        let f = normalize_skeleton(&sk, &b).unwrap();
        prop_assert_eq!(f.as_slice().len(), FEATURE_LEN);
        prop_assert!(f.as_slice().iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn feature_layout_follows_keypoint_order(sk in skeleton(), b in bbox()) {
        let f = normalize_skeleton(&sk, &b).unwrap();
        for (i, kp) in sk.keypoints.iter().enumerate() {
            let (x, y) = f.point(i);
            prop_assert_eq!(x, f.as_slice()[2 * i]);
            prop_assert_eq!(y, f.as_slice()[2 * i + 1]);
            if kp.is_detected() {
                let ex = ((kp.x - b.x_min) / b.width).clamp(0.0, 1.0);
                let ey = ((kp.y - b.y_min) / b.height).clamp(0.0, 1.0);
                prop_assert!((x - ex).abs() < 1e-12 && (y - ey).abs() < 1e-12);
            } else {
                prop_assert_eq!((x, y), (0.0, 0.0));
            }
        }
    }

    #[test]
    fn iou_is_symmetric_and_bounded(a in bbox(), b in bbox()) {
        let ab = iou(&a, &b);
        let ba = iou(&b, &a);
        prop_assert!((0.0..=1.0).contains(&ab));
        prop_assert!((ab - ba).abs() < 1e-12);
        prop_assert!((iou(&a, &a) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn class_state_is_monotone(p in 0.0..=1.0f64, q in 0.0..=1.0f64) {
        let t = Thresholds::default();
        let (lo, hi) = if p <= q { (p, q) } else { (q, p) };
        prop_assert!(classify_state(lo, &t) <= classify_state(hi, &t));
    }

    #[test]
    fn platt_probability_is_monotone(a in 0.01..20.0f64, b in -5.0..5.0f64, x in -10.0..10.0f64, d in 0.0..10.0f64) {
        let platt = PlattParams { a, b };
        let lo = platt.probability(x);
        let hi = platt.probability(x + d);
        prop_assert!((0.0..=1.0).contains(&lo));
        prop_assert!(hi >= lo);
    }
}

fn samples_from_counts(counts: &[(Label, usize)]) -> Vec<LabeledSample> {
    let mut out = Vec::new();
    for &(label, n) in counts {
        for _ in 0..n {
            let i = out.len();
            let mut v = [0.0; FEATURE_LEN];
            v[0] = (i % 997) as f64 / 997.0;
            out.push(LabeledSample {
                features: FeatureVector::new(v).unwrap(),
                label,
                provenance: format!("s{i}"),
            });
        }
    }
    out
}

fn floor_count(n: usize, f: f64) -> usize {
    (n as f64 * f + 1e-9).floor() as usize
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn split_is_disjoint_exhaustive_and_stratified(
        n_normal in 1usize..300,
        n_fight in 1usize..300,
        seed in any::<u64>(),
    ) {
        let samples = samples_from_counts(&[(Label::Normal, n_normal), (Label::Fight, n_fight)]);
        let split = stratified_split(&samples, &SplitSpec::eighty_ten_ten(seed)).unwrap();
        let ids = |part: &[LabeledSample]| part.iter().map(|s| s.provenance.clone()).collect::<HashSet<_>>();
        let (train, val, test) = (ids(&split.train), ids(&split.val), ids(&split.test));
        prop_assert!(train.is_disjoint(&val) && train.is_disjoint(&test) && val.is_disjoint(&test));
        prop_assert_eq!(train.len() + val.len() + test.len(), samples.len());

        for (class, n) in [(Label::Normal, n_normal), (Label::Fight, n_fight)] {
            let count = |part: &[LabeledSample]| part.iter().filter(|s| s.label == class).count();
            prop_assert_eq!(count(&split.val), floor_count(n, 0.1));
            prop_assert_eq!(count(&split.test), floor_count(n, 0.1));
            prop_assert_eq!(count(&split.train), n - 2 * floor_count(n, 0.1));
        }
    }

    #[test]
    fn feature_csv_round_trips(rows in vec((features(), label()), 0..20)) {
        let samples: Vec<LabeledSample> = rows
            .into_iter()
            .enumerate()
            .map(|(i, (features, label))| LabeledSample { features, label, provenance: format!("synth:0:walk:{i}") })
            .collect();
        let mut buf = Vec::new();
        write_feature_csv(&samples, &mut buf).unwrap();
        let back = read_feature_csv(buf.as_slice()).unwrap();
        let strip = |v: &[LabeledSample]| v.iter().map(|s| (s.features.clone(), s.label)).collect::<Vec<_>>();
        prop_assert_eq!(strip(&back), strip(&samples));
    }

    #[test]
    fn interval_expansion_ignores_row_order(
        rows in vec((0i64..3, 0u64..40, 0u64..10, 0i64..3, label()), 1..12),
        shuffle_seed in any::<u64>(),
    ) {
        // Disjoint intervals per (session, actor) so the expansion is conflict free.
        let mut next_start = std::collections::HashMap::new();
        let rows: Vec<IntervalLabelRow> = rows
            .into_iter()
            .enumerate()
            .map(|(action, (session, gap, len, actor, label))| {
                let start = next_start.entry((session, actor)).or_insert(0u64);
                let start_frame = *start + gap;
                *start = start_frame + len + 1;
                IntervalLabelRow { session, action: action as i64, start_frame, end_frame: start_frame + len, actor, label }
            })
            .collect();
        let mut shuffled = rows.clone();
        let mut state = shuffle_seed | 1;
        for i in (1..shuffled.len()).rev() {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            shuffled.swap(i, (state % (i as u64 + 1)) as usize);
        }
        let a = expand_interval_labels(&rows).unwrap();
        let b = expand_interval_labels(&shuffled).unwrap();
        let expected: u64 = rows.iter().map(|r| r.end_frame - r.start_frame + 1).sum();
        prop_assert_eq!(a.len() as u64, expected);
        prop_assert_eq!(a, b);
    }

    #[test]
    fn greedy_match_is_a_matching_above_threshold(
        overlaps in (1usize..6, 1usize..6).prop_flat_map(|(t, d)| vec(vec(0.0..=1.0f64, d), t)),
        threshold in 0.0..=1.0f64,
    ) {
        let pairs = greedy_match(&overlaps, threshold);
        let tracks: HashSet<_> = pairs.iter().map(|p| p.0).collect();
        let dets: HashSet<_> = pairs.iter().map(|p| p.1).collect();
        prop_assert_eq!(tracks.len(), pairs.len());
        prop_assert_eq!(dets.len(), pairs.len());
        prop_assert!(pairs.iter().all(|&(t, d)| overlaps[t][d] >= threshold));
        // Maximality: no remaining free pair clears the threshold.
        for (t, row) in overlaps.iter().enumerate() {
            for (d, &v) in row.iter().enumerate() {
                if !tracks.contains(&t) && !dets.contains(&d) {
                    prop_assert!(v < threshold);
                }
            }
        }
    }

    #[test]
    fn track_ids_are_never_reused(frames in vec(vec(bbox(), 0..5), 1..40)) {
        let mut tracker = Tracker::new(TrackerConfig::default()).unwrap();
        let mut retired = HashSet::new();
        let mut seen = HashSet::new();
        for (i, boxes) in frames.iter().enumerate() {
            let update = tracker.update(i as u64, boxes).unwrap();
            prop_assert_eq!(update.assignments.len(), boxes.len());
            let ids: HashSet<_> = update.assignments.iter().map(|a| a.track_id).collect();
            prop_assert_eq!(ids.len(), boxes.len());
            for a in &update.assignments {
                prop_assert!(!retired.contains(&a.track_id));
                prop_assert_eq!(a.is_new, seen.insert(a.track_id));
            }
            retired.extend(update.removed);
        }
    }

    #[test]
    fn smoothing_stays_within_window_bounds(window in vec(0.0..=1.0f64, 1..30)) {
        let s = smooth_probability(&window).unwrap();
        let lo = window.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = window.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(s >= lo - 1e-12 && s <= hi + 1e-12);
    }

    #[test]
    fn equal_supports_make_weighted_equal_macro(a in 0u64..50, b in 0u64..50, n in 1u64..50) {
        // Both classes have n actual samples.
        let (tp, fn_) = (a.min(n), n - a.min(n));
        let (tn, fp) = (b.min(n), n - b.min(n));
        let report = classification_report(&ConfusionMatrix2 { tp, tn, fp, fn_ }).unwrap();
        prop_assert!((report.weighted_avg.precision - report.macro_avg.precision).abs() < 1e-12);
        prop_assert!((report.weighted_avg.recall - report.macro_avg.recall).abs() < 1e-12);
        prop_assert!((report.weighted_avg.f1 - report.macro_avg.f1).abs() < 1e-12);
    }

    #[test]
    fn report_matches_counting_oracle(pairs in vec((label(), label()), 1..200)) {
        let (mut tp, mut tn, mut fp, mut fn_) = (0u64, 0u64, 0u64, 0u64);
        for &(t, p) in &pairs {
            match (t, p) {
                (Label::Fight, Label::Fight) => tp += 1,
                (Label::Normal, Label::Normal) => tn += 1,
                (Label::Normal, Label::Fight) => fp += 1,
                (Label::Fight, Label::Normal) => fn_ += 1,
            }
        }
        let y_true: Vec<Label> = pairs.iter().map(|p| p.0).collect();
        let y_pred: Vec<Label> = pairs.iter().map(|p| p.1).collect();
        let cm = posewatch::metrics::confusion_matrix(&y_true, &y_pred).unwrap();
        prop_assert_eq!((cm.tp, cm.tn, cm.fp, cm.fn_), (tp, tn, fp, fn_));
        let report = classification_report(&cm).unwrap();

        let f1 = |tp: u64, fp: u64, fn_: u64| {
            if tp == 0 { 0.0 } else { 2.0 * tp as f64 / (2 * tp + fp + fn_) as f64 }
        };
        prop_assert!((report.fight.f1 - f1(tp, fp, fn_)).abs() < 1e-12);
        prop_assert!((report.normal.f1 - f1(tn, fn_, fp)).abs() < 1e-12);
        let correct = pairs.iter().filter(|p| p.0 == p.1).count() as f64;
        prop_assert!((report.accuracy - correct / pairs.len() as f64).abs() < 1e-12);
        prop_assert!((report.overall_precision - report.accuracy).abs() < 1e-12);
    }
}

/// Returns a fixed, per-call scripted probability sequence.
struct Scripted(std::sync::Mutex<std::vec::IntoIter<f64>>);

impl Classifier for Scripted {
    fn p_fight(&self, _: &[f64]) -> posewatch::Result<f64> {
        Ok(self.0.lock().unwrap().next().unwrap_or(0.0))
    }

    fn input_dim(&self) -> usize {
        FEATURE_LEN
    }
}

fn standing_person() -> PersonDetection {
    let keypoints = (0..17)
        .map(|i| Keypoint::new(100.0 + (i % 3) as f64 * 10.0, 100.0 + i as f64 * 12.0, 0.9))
        .collect();
    PersonDetection {
        bbox: BoundingBox::new(80.0, 90.0, 60.0, 220.0),
        skeleton: Skeleton::new(keypoints).unwrap(),
        detection_score: 0.95,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn events_never_exceed_state_changes(probs in vec(0.0..=1.0f64, 1..80), window in 1usize..20) {
        let config = PipelineConfig { smoothing_window: window, velocity_rule: None, ..PipelineConfig::default() };
        let classifier = Scripted(std::sync::Mutex::new(probs.clone().into_iter()));
        let mut pipeline = Pipeline::new(config, Arc::new(classifier)).unwrap();
        // A new track starts from Normal.
        let mut previous = Some(PersonStatus::Normal);
        let mut changes = 0;
        let mut events = 0;
        for i in 0..probs.len() {
            let frame = FrameDetections {
                frame_index: i as u64,
                timestamp_s: i as f64 / 30.0,
                image_width: 640,
                image_height: 480,
                persons: vec![standing_person()],
            };
            let out = pipeline.process_frame(&frame).unwrap();
            let state = out.persons[0].state;
            if previous.is_some_and(|p| p != state) {
                changes += 1;
            }
            previous = Some(state);
            events += out.events.len();
            for e in &out.events {
                prop_assert_ne!(e.from, e.to);
            }
        }
        prop_assert!(events <= changes);
    }
}

fn separable_set(n: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<Label>) {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut x = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for i in 0..n {
        let label = if i % 2 == 0 { Label::Normal } else { Label::Fight };
        let centre = if label == Label::Fight { 0.75 } else { 0.25 };
        x.push(vec![centre + rng.random_range(-0.15..0.15), centre + rng.random_range(-0.15..0.15)]);
        y.push(label);
    }
    (x, y)
}

fn small_config(seed: u64, epochs: usize) -> MlpConfig {
    MlpConfig { input_dim: 2, hidden_dims: vec![16, 8], dropout_rate: 0.0, learning_rate: 1e-2, epochs, batch_size: 20, seed }
}

#[test]
fn mlp_loss_decreases_over_early_epochs() {
    let (x, y) = separable_set(200, 7);
    let empty: Vec<Vec<f64>> = Vec::new();
    let decreasing = (0..20)
        .filter(|&seed| {
            let (_, history) = train_mlp_raw(&x, &y, &empty, &[], &small_config(seed, 5)).unwrap();
            history.loss[4] < history.loss[0]
        })
        .count();
    assert!(decreasing >= 19, "loss decreased for only {decreasing} of 20 seeds");
}

#[test]
fn mlp_fits_separable_two_feature_set() {
    let (x, y) = separable_set(200, 11);
    let empty: Vec<Vec<f64>> = Vec::new();
    let (model, _) = train_mlp_raw(&x, &y, &empty, &[], &small_config(3, 60)).unwrap();
    let p = model.predict_proba_batch(&x).unwrap();
    let correct = p.iter().zip(&y).filter(|(p, y)| (**p >= 0.5) == (**y == Label::Fight)).count();
    assert!(correct as f64 / 200.0 >= 0.95, "training accuracy {}", correct as f64 / 200.0);
}

#[test]
fn batch_norm_inference_is_independent_of_batch_composition() {
    let model = MlpModel::new(MlpConfig { seed: 5, ..MlpConfig::default() }).unwrap();
    let batch: Vec<Vec<f64>> = (0..16).map(|i| (0..FEATURE_LEN).map(|j| ((i * 7 + j * 3) % 11) as f64 / 10.0).collect()).collect();
    let together = model.forward(&batch, Mode::Infer, 0).unwrap();
    for (row, joint) in batch.iter().zip(&together) {
        let alone = model.forward(std::slice::from_ref(row), Mode::Infer, 0).unwrap();
        assert!((alone[0][1] - joint[1]).abs() <= 1e-9);
        assert!((alone[0][0] - joint[0]).abs() <= 1e-9);
    }
}
