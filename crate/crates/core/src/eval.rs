//! Leave-one-out cross-validation of the three classification methods and
//! the accuracy table built from it.

use std::fmt::{self, Write as _};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::clean::{track_targets, CleanVariant, DEFAULT_SHORT_FRACTION};
use crate::dtw::{nearest, ZNorm};
use crate::error::{Error, Result};
use crate::feature::{extract_feature_with, EnvelopeParams};
use crate::hmm::{train_pair, TrainConfig};
use crate::sim::{default_template, PulseTemplate, DEFAULT_PULSE_LEN};
use crate::types::{Dataset, FeatureSequence, FrameSet, StateLabel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    CleanConventionalDtw,
    CleanShortTemplateDtw,
    ProposedGmmHmm,
}

impl Method {
    /// Table order.
    pub const ALL: [Method; 3] = [
        Method::CleanConventionalDtw,
        Method::CleanShortTemplateDtw,
        Method::ProposedGmmHmm,
    ];

    /// Identifier used in JSON reports.
    pub fn name(self) -> &'static str {
        match self {
            Method::CleanConventionalDtw => "CleanConventionalDtw",
            Method::CleanShortTemplateDtw => "CleanShortTemplateDtw",
            Method::ProposedGmmHmm => "ProposedGmmHmm",
        }
    }

    /// Short name used on the command line.
    pub fn flag(self) -> &'static str {
        match self {
            Method::CleanConventionalDtw => "clean-conv",
            Method::CleanShortTemplateDtw => "clean-short",
            Method::ProposedGmmHmm => "proposed",
        }
    }

    /// Row heading in the text table.
    pub fn title(self) -> &'static str {
        match self {
            Method::CleanConventionalDtw => "Conventional CLEAN + MD-DTW",
            Method::CleanShortTemplateDtw => "Short-template CLEAN + MD-DTW",
            Method::ProposedGmmHmm => "RMS-envelope features + GMM-HMM",
        }
    }

    fn from_title(title: &str) -> Option<Method> {
        Method::ALL.into_iter().find(|m| m.title() == title)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.flag())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.flag() == s || m.name() == s)
            .ok_or_else(|| {
                Error::validation(format!(
                    "unknown method {s:?} (expected proposed, clean-conv or clean-short)"
                ))
            })
    }
}

/// Everything the methods need besides the data.
#[derive(Debug, Clone)]
pub struct EvalConfig {
    pub train: TrainConfig,
    pub envelope: EnvelopeParams,
    /// Pulse shape correlated by the CLEAN baselines.
    pub template: PulseTemplate,
    pub short_fraction: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            train: TrainConfig::default(),
            envelope: EnvelopeParams::default(),
            template: default_template(DEFAULT_PULSE_LEN).expect("default pulse length is valid"),
            short_fraction: DEFAULT_SHORT_FRACTION,
        }
    }
}

impl EvalConfig {
    /// Feature sequence `method` classifies for one frame set.
    pub fn extract(&self, method: Method, fs: &FrameSet) -> Result<FeatureSequence> {
        match method {
            Method::ProposedGmmHmm => extract_feature_with(fs, self.envelope),
            Method::CleanConventionalDtw => {
                track_targets(fs, &self.template, CleanVariant::Conventional)
            }
            Method::CleanShortTemplateDtw => track_targets(
                fs,
                &self.template,
                CleanVariant::ShortTemplate(self.short_fraction),
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldRecord {
    pub id: String,
    #[serde(rename = "true")]
    pub truth: StateLabel,
    pub pred: StateLabel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodReport {
    pub name: String,
    pub folds: Vec<FoldRecord>,
    pub accuracy_percent: f64,
}

impl MethodReport {
    pub fn from_folds(name: impl Into<String>, folds: Vec<FoldRecord>) -> Self {
        let accuracy_percent = accuracy_percent(&folds);
        MethodReport {
            name: name.into(),
            folds,
            accuracy_percent,
        }
    }

    pub fn correct(&self) -> usize {
        self.folds.iter().filter(|f| f.truth == f.pred).count()
    }
}

/// `100 * correct / total`; 0 for no folds.
pub fn accuracy_percent(folds: &[FoldRecord]) -> f64 {
    if folds.is_empty() {
        return 0.0;
    }
    let correct = folds.iter().filter(|f| f.truth == f.pred).count();
    100.0 * correct as f64 / folds.len() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub participant: String,
    pub methods: Vec<MethodReport>,
}

impl EvalReport {
    pub fn method(&self, method: Method) -> Option<&MethodReport> {
        self.methods.iter().find(|m| m.name == method.name())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// One frame set as seen by a fold.
#[derive(Debug, Clone, Copy)]
pub struct FoldItem<'a> {
    pub id: &'a str,
    pub label: StateLabel,
    pub features: &'a FeatureSequence,
}

/// Ids whose data entered each statistic fitted during one fold.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FoldTrace {
    pub test_id: String,
    /// Sequences pooled into normalization moments.
    pub normalization_ids: Vec<String>,
    /// Sequences used to fit classifier parameters or to act as neighbours.
    pub model_ids: Vec<String>,
}

/// A classification rule evaluated under leave-one-out.
pub trait FoldClassifier: Sync {
    fn name(&self) -> String;

    /// Predicts `test` from `train`, recording every training id it touches.
    fn predict(
        &self,
        train: &[FoldItem<'_>],
        test: &FoldItem<'_>,
        trace: &mut FoldTrace,
    ) -> Result<StateLabel>;
}

/// Two class GMM-HMMs, the larger likelihood wins.
pub struct GmmHmmClassifier {
    pub train: TrainConfig,
}

impl FoldClassifier for GmmHmmClassifier {
    fn name(&self) -> String {
        Method::ProposedGmmHmm.name().into()
    }

    fn predict(
        &self,
        train: &[FoldItem<'_>],
        test: &FoldItem<'_>,
        trace: &mut FoldTrace,
    ) -> Result<StateLabel> {
        let mut rest = Vec::new();
        let mut motion = Vec::new();
        for item in train {
            trace.model_ids.push(item.id.to_owned());
            match item.label {
                StateLabel::Rest => rest.push(item.features.clone()),
                StateLabel::Move => motion.push(item.features.clone()),
            }
        }
        train_pair(&rest, &motion, &self.train)?.classify(test.features)
    }
}

/// MD-DTW nearest neighbour on tracks standardized with training-fold moments.
pub struct DtwClassifier {
    pub method: Method,
}

impl FoldClassifier for DtwClassifier {
    fn name(&self) -> String {
        self.method.name().into()
    }

    fn predict(
        &self,
        train: &[FoldItem<'_>],
        test: &FoldItem<'_>,
        trace: &mut FoldTrace,
    ) -> Result<StateLabel> {
        let norm = ZNorm::fit(train.iter().map(|item| {
            trace.normalization_ids.push(item.id.to_owned());
            item.features
        }))?;
        let reference = train
            .iter()
            .map(|item| {
                trace.model_ids.push(item.id.to_owned());
                norm.apply(item.features)
            })
            .collect::<Result<Vec<_>>>()?;
        let query = norm.apply(test.features)?;
        let (best, _) = nearest(&query, &reference)?;
        Ok(train[best].label)
    }
}

fn check_folds(dataset: &Dataset) -> Result<()> {
    if dataset.len() < 2 {
        return Err(Error::validation(format!(
            "leave-one-out needs at least 2 frame sets, dataset has {}",
            dataset.len()
        )));
    }
    for (i, fs) in dataset.frame_sets().iter().enumerate() {
        for label in StateLabel::ALL {
            let others = dataset.count(label) - usize::from(dataset.label(i) == label);
            if others == 0 {
                return Err(Error::validation(format!(
                    "fold {i} (held-out {:?}) has no {label} frame sets to train on",
                    fs.id()
                )));
            }
        }
    }
    Ok(())
}

/// Runs leave-one-out over precomputed `features` (one per frame set, in
/// dataset order) and hands every fold's trace to `observer` in dataset
/// order. Folds are evaluated in parallel.
pub fn loocv_with<C, O>(
    dataset: &Dataset,
    features: &[FeatureSequence],
    classifier: &C,
    mut observer: O,
) -> Result<MethodReport>
where
    C: FoldClassifier + ?Sized,
    O: FnMut(&FoldTrace),
{
    check_folds(dataset)?;
    if features.len() != dataset.len() {
        return Err(Error::validation(format!(
            "{} feature sequences for {} frame sets",
            features.len(),
            dataset.len()
        )));
    }
    let items: Vec<FoldItem<'_>> = dataset
        .frame_sets()
        .iter()
        .zip(features)
        .enumerate()
        .map(|(i, (fs, f))| FoldItem {
            id: fs.id(),
            label: dataset.label(i),
            features: f,
        })
        .collect();

    let outcomes: Vec<(StateLabel, FoldTrace)> = (0..items.len())
        .into_par_iter()
        .map(|k| {
            let train: Vec<FoldItem<'_>> = items
                .iter()
                .enumerate()
                .filter(|&(i, _)| i != k)
                .map(|(_, item)| *item)
                .collect();
            let mut trace = FoldTrace {
                test_id: items[k].id.to_owned(),
                ..Default::default()
            };
            let pred = classifier.predict(&train, &items[k], &mut trace)?;
            Ok((pred, trace))
        })
        .collect::<Result<_>>()?;

    let mut folds = Vec::with_capacity(items.len());
    for (item, (pred, trace)) in items.iter().zip(&outcomes) {
        observer(trace);
        folds.push(FoldRecord {
            id: item.id.to_owned(),
            truth: item.label,
            pred: *pred,
        });
    }
    Ok(MethodReport::from_folds(classifier.name(), folds))
}

/// Extracts `method`'s features for every frame set.
pub fn extract_all(
    dataset: &Dataset,
    method: Method,
    cfg: &EvalConfig,
) -> Result<Vec<FeatureSequence>> {
    dataset
        .frame_sets()
        .par_iter()
        .map(|fs| cfg.extract(method, fs))
        .collect()
}

fn classifier_for(method: Method, cfg: &EvalConfig) -> Box<dyn FoldClassifier> {
    match method {
        Method::ProposedGmmHmm => Box::new(GmmHmmClassifier { train: cfg.train }),
        m => Box::new(DtwClassifier { method: m }),
    }
}

/// Leave-one-out evaluation of one method, reporting fold traces.
pub fn loocv_traced<O>(
    dataset: &Dataset,
    method: Method,
    cfg: &EvalConfig,
    observer: O,
) -> Result<MethodReport>
where
    O: FnMut(&FoldTrace),
{
    check_folds(dataset)?;
    let features = extract_all(dataset, method, cfg)?;
    loocv_with(
        dataset,
        &features,
        classifier_for(method, cfg).as_ref(),
        observer,
    )
}

pub fn loocv(dataset: &Dataset, method: Method, cfg: &EvalConfig) -> Result<MethodReport> {
    loocv_traced(dataset, method, cfg, |_| {})
}

/// Leave-one-out for each requested method, rows in table order.
pub fn benchmark(dataset: &Dataset, methods: &[Method], cfg: &EvalConfig) -> Result<EvalReport> {
    let mut reports = Vec::new();
    for method in Method::ALL {
        if methods.contains(&method) {
            reports.push(loocv(dataset, method, cfg)?);
        }
    }
    Ok(EvalReport {
        participant: dataset.info().participant.clone(),
        methods: reports,
    })
}

/// Renders an accuracy table, one column per participant.
///
/// ```text
/// Classification accuracy (%)
/// Method                              P1     P2
/// Conventional CLEAN + MD-DTW       82.5   72.5
/// ```
///
/// Values are printed with one decimal, right-aligned in 7-character
/// columns; the method column is as wide as the longest heading.
pub fn render_table(participants: &[String], rows: &[(String, Vec<f64>)]) -> String {
    let width = rows
        .iter()
        .map(|(name, _)| name.len())
        .chain(std::iter::once("Method".len()))
        .max()
        .unwrap_or(0);
    let mut out = String::from("Classification accuracy (%)\n");
    let _ = write!(out, "{:<width$}", "Method");
    for p in participants {
        let _ = write!(out, " {p:>7}");
    }
    out.push('\n');
    for (name, values) in rows {
        let _ = write!(out, "{name:<width$}");
        for v in values {
            let _ = write!(out, " {v:>7.1}");
        }
        out.push('\n');
    }
    out
}

/// Table of several per-participant reports. Methods missing from a report
/// are shown as `NaN`.
pub fn render_reports(reports: &[EvalReport]) -> String {
    let participants: Vec<String> = reports
        .iter()
        .enumerate()
        .map(|(i, r)| {
            if r.participant.is_empty() {
                format!("D{}", i + 1)
            } else {
                r.participant.clone()
            }
        })
        .collect();
    let mut names: Vec<String> = Vec::new();
    for r in reports {
        for m in &r.methods {
            if !names.contains(&m.name) {
                names.push(m.name.clone());
            }
        }
    }
    let rows: Vec<(String, Vec<f64>)> = names
        .iter()
        .map(|name| {
            let title = name
                .parse::<Method>()
                .map(|m| m.title().to_owned())
                .unwrap_or_else(|_| name.clone());
            let values = reports
                .iter()
                .map(|r| {
                    r.methods
                        .iter()
                        .find(|m| &m.name == name)
                        .map_or(f64::NAN, |m| m.accuracy_percent)
                })
                .collect();
            (title, values)
        })
        .collect();
    render_table(&participants, &rows)
}

/// Parses a table produced by [`render_table`] back into rows keyed by method.
pub fn parse_table(text: &str) -> Vec<(Option<Method>, String, Vec<f64>)> {
    text.lines()
        .skip(2)
        .filter_map(|line| {
            let mut fields: Vec<&str> = line.split_whitespace().collect();
            let mut values = Vec::new();
            while let Some(v) = fields.last().and_then(|f| f.parse::<f64>().ok()) {
                values.push(v);
                fields.pop();
            }
            values.reverse();
            let title = fields.join(" ");
            (!title.is_empty()).then(|| (Method::from_title(&title), title, values))
        })
        .collect()
}
