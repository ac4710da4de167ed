//! Interval labeling, feature CSV persistence and stratified splitting.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::io::{Read, Write};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::keypoint::{FeatureVector, FEATURE_LEN};

/// Binary action label. `Fight` is the positive class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Label {
    Normal = 0,
    Fight = 1,
}

impl Label {
    pub fn from_index(i: u8) -> Result<Self> {
        match i {
            0 => Ok(Label::Normal),
            1 => Ok(Label::Fight),
            other => Err(Error::Data(format!("label must be 0 or 1, got {other}"))),
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    /// `-1` for normal, `+1` for fight.
    pub fn sign(self) -> f64 {
        match self {
            Label::Normal => -1.0,
            Label::Fight => 1.0,
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.index())
    }
}

/// One row of an interval label file.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IntervalLabelRow {
    pub session: i64,
    pub action: i64,
    pub start_frame: u64,
    pub end_frame: u64,
    pub actor: i64,
    pub label: Label,
}

impl fmt::Display for IntervalLabelRow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "(session {}, action {}, frames {}..={}, actor {}, label {})",
            self.session, self.action, self.start_frame, self.end_frame, self.actor, self.label
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FrameKey {
    pub session: i64,
    pub frame: u64,
    pub actor: i64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSample {
    pub features: FeatureVector,
    pub label: Label,
    pub provenance: String,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub val_fraction: f64,
    pub test_fraction: f64,
    pub seed: u64,
}

impl SplitSpec {
    pub fn new(train: f64, val: f64, test: f64, seed: u64) -> Result<Self> {
        let spec = Self { train_fraction: train, val_fraction: val, test_fraction: test, seed };
        spec.validate()?;
        Ok(spec)
    }

    /// The 80/10/10 train/val/test split.
    pub fn eighty_ten_ten(seed: u64) -> Self {
        Self { train_fraction: 0.8, val_fraction: 0.1, test_fraction: 0.1, seed }
    }

    pub fn validate(&self) -> Result<()> {
        let fractions = [self.train_fraction, self.val_fraction, self.test_fraction];
        if fractions.iter().any(|f| !(*f > 0.0 && *f < 1.0)) {
            return Err(Error::InvalidSplit(format!(
                "fractions must lie in (0, 1), got {fractions:?}"
            )));
        }
        let sum: f64 = fractions.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidSplit(format!("fractions sum to {sum}, expected 1")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Split {
    pub train: Vec<LabeledSample>,
    pub val: Vec<LabeledSample>,
    pub test: Vec<LabeledSample>,
}

/// Expands interval rows into a per-frame label map. Frames not covered by
/// any interval are absent.
pub fn expand_interval_labels(rows: &[IntervalLabelRow]) -> Result<BTreeMap<FrameKey, Label>> {
    for row in rows {
        if row.start_frame > row.end_frame {
            return Err(Error::Data(format!("interval start after end in {row}")));
        }
    }

    // Sort a copy so conflicts are reported identically whatever the input order.
    let mut sorted: Vec<&IntervalLabelRow> = rows.iter().collect();
    sorted.sort_by_key(|r| (r.session, r.actor, r.start_frame, r.end_frame, r.action, r.label));

    let mut by_group: HashMap<(i64, i64, i64), Vec<&IntervalLabelRow>> = HashMap::new();
    for row in &sorted {
        by_group.entry((row.session, row.action, row.actor)).or_default().push(row);
    }
    for group in by_group.values() {
        for pair in group.windows(2) {
            if pair[1].start_frame <= pair[0].end_frame {
                return Err(Error::LabelConflict {
                    first: pair[0].to_string(),
                    second: pair[1].to_string(),
                });
            }
        }
    }

    let mut labels = BTreeMap::new();
    let mut owner: HashMap<FrameKey, &IntervalLabelRow> = HashMap::new();
    for row in &sorted {
        for frame in row.start_frame..=row.end_frame {
            let key = FrameKey { session: row.session, frame, actor: row.actor };
            match owner.get(&key) {
                Some(prev) if prev.label != row.label => {
                    return Err(Error::LabelConflict {
                        first: prev.to_string(),
                        second: row.to_string(),
                    });
                }
                Some(_) => {}
                None => {
                    owner.insert(key, row);
                    labels.insert(key, row.label);
                }
            }
        }
    }
    Ok(labels)
}

fn detect_delimiter(header: &str) -> u8 {
    [b'\t', b';', b','].into_iter().find(|d| header.as_bytes().contains(d)).unwrap_or(b',')
}

/// Parses an interval label file with header
/// `Session,Action,StartFrame,EndFrame,Actor,Label`. Comma, tab and
/// semicolon delimiters are accepted.
pub fn read_interval_labels<R: Read>(mut input: R) -> Result<Vec<IntervalLabelRow>> {
    let mut text = String::new();
    input.read_to_string(&mut text)?;
    let header = text.lines().next().unwrap_or_default();
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(detect_delimiter(header))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());

    let expected = ["Session", "Action", "StartFrame", "EndFrame", "Actor", "Label"];
    let found: Vec<String> = reader.headers()?.iter().map(str::to_owned).collect();
    if found != expected {
        return Err(Error::Parse(format!("unexpected interval header {found:?}, expected {expected:?}")));
    }

    let mut rows = Vec::new();
    for (n, record) in reader.records().enumerate() {
        let record = record?;
        let field = |i: usize| -> Result<i64> {
            record
                .get(i)
                .unwrap_or_default()
                .parse::<i64>()
                .map_err(|e| Error::Parse(format!("row {}: column {}: {e}", n + 2, expected[i])))
        };
        let frame = |i: usize| -> Result<u64> {
            u64::try_from(field(i)?)
                .map_err(|_| Error::Parse(format!("row {}: negative frame index", n + 2)))
        };
        let label = u8::try_from(field(5)?).map_err(|_| Error::Data(format!("row {}: bad label", n + 2)))?;
        rows.push(IntervalLabelRow {
            session: field(0)?,
            action: field(1)?,
            start_frame: frame(2)?,
            end_frame: frame(3)?,
            actor: field(4)?,
            label: Label::from_index(label)?,
        });
    }
    Ok(rows)
}

pub fn feature_header() -> Vec<String> {
    (0..FEATURE_LEN).map(|i| format!("f{i}")).chain(["label".to_owned()]).collect()
}

/// Writes `f0..f33,label` rows. Floats use the shortest representation that
/// parses back to the same `f64`.
pub fn write_feature_csv<W: Write>(samples: &[LabeledSample], out: W) -> Result<usize> {
    let mut writer = csv::Writer::from_writer(out);
    writer.write_record(feature_header())?;
    for sample in samples {
        let mut record: Vec<String> = sample.features.as_slice().iter().map(|v| v.to_string()).collect();
        record.push(sample.label.to_string());
        writer.write_record(&record)?;
    }
    writer.flush()?;
    Ok(samples.len())
}

pub fn read_feature_csv<R: Read>(input: R) -> Result<Vec<LabeledSample>> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let header: Vec<String> = reader.headers()?.iter().map(str::to_owned).collect();
    if header != feature_header() {
        return Err(Error::Parse("feature CSV header must be f0..f33,label".into()));
    }
    let mut samples = Vec::new();
    for (n, record) in reader.records().enumerate() {
        let record = record?;
        let row = n + 2;
        let values = record
            .iter()
            .take(FEATURE_LEN)
            .map(|v| v.parse::<f64>().map_err(|e| Error::Parse(format!("row {row}: {e}"))))
            .collect::<Result<Vec<f64>>>()?;
        let features = FeatureVector::from_slice(&values)
            .map_err(|e| Error::Data(format!("row {row}: {e}")))?;
        let label: u8 = record
            .get(FEATURE_LEN)
            .unwrap_or_default()
            .parse()
            .map_err(|e| Error::Parse(format!("row {row}: label: {e}")))?;
        samples.push(LabeledSample {
            features,
            label: Label::from_index(label)?,
            provenance: format!("csv:row{row}"),
        });
    }
    Ok(samples)
}

fn floor_count(n: usize, fraction: f64) -> usize {
    (n as f64 * fraction + 1e-9).floor() as usize
}

/// Per-class shuffled split. Validation and test sizes are
/// `floor(class_count × fraction)`, the remainder goes to training. Each
/// partition keeps the input order.
pub fn stratified_split(samples: &[LabeledSample], spec: &SplitSpec) -> Result<Split> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut assignment = vec![0u8; samples.len()];

    for class in [Label::Normal, Label::Fight] {
        let mut idx: Vec<usize> = (0..samples.len()).filter(|&i| samples[i].label == class).collect();
        if idx.is_empty() {
            return Err(Error::Stratification(format!("class {class} has no samples")));
        }
        idx.shuffle(&mut rng);
        let n_val = floor_count(idx.len(), spec.val_fraction);
        let n_test = floor_count(idx.len(), spec.test_fraction);
        for (k, &i) in idx.iter().enumerate() {
            assignment[i] = if k < n_val {
                1
            } else if k < n_val + n_test {
                2
            } else {
                0
            };
        }
    }

    let mut split = Split::default();
    for (sample, part) in samples.iter().zip(assignment) {
        match part {
            1 => split.val.push(sample.clone()),
            2 => split.test.push(sample.clone()),
            _ => split.train.push(sample.clone()),
        }
    }
    Ok(split)
}
