//! Accuracy evaluation: trains one classifier per (classifier, feature-set)
//! cell, measures train/test accuracy, decodes the test words with the
//! three correction modes, and renders the results grid.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::classifiers::{
    classify_argmax, train_knn, train_naive_bayes, train_neural_oaa, train_parzen,
    BaseClassifier, KnnOptions, NaiveBayesOptions, NetworkOptions, ParzenOptions,
};
use crate::dataset::{Dataset, Group, SplitAssignment};
use crate::error::{Error, Result};
use crate::features::{FeatureExtractor, FeatureMatrix, FeatureSetId, Standardizer};
use crate::hmm::{correct_words, DecodeMode, DecodeOptions, EndModel, HmmModel};
use crate::letter::Letter;

/// The four base classifiers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClassifierTag {
    Knn,
    Nn,
    Pw,
    Nb,
}

impl ClassifierTag {
    pub const ALL: [ClassifierTag; 4] = [
        ClassifierTag::Knn,
        ClassifierTag::Nn,
        ClassifierTag::Pw,
        ClassifierTag::Nb,
    ];

    /// Short lowercase name used in configs and CLI flags.
    pub fn name(self) -> &'static str {
        match self {
            ClassifierTag::Knn => "knn",
            ClassifierTag::Nn => "nn",
            ClassifierTag::Pw => "pw",
            ClassifierTag::Nb => "nb",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|t| t.name() == name)
    }

    /// Label used in report rows.
    pub fn label(self) -> &'static str {
        match self {
            ClassifierTag::Knn => "K-NN",
            ClassifierTag::Nn => "NN",
            ClassifierTag::Pw => "PW",
            ClassifierTag::Nb => "NB",
        }
    }
}

impl std::fmt::Display for ClassifierTag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

/// Default hidden-layer widths per feature set.
pub fn default_hidden_nodes(set: FeatureSetId) -> usize {
    match set {
        FeatureSetId::A => 12,
        FeatureSetId::B => 16,
        FeatureSetId::C => 28,
        FeatureSetId::D | FeatureSetId::E => 35,
        FeatureSetId::F | FeatureSetId::G | FeatureSetId::H => 64,
    }
}

/// Whether a (classifier, feature set) pair belongs to the default
/// benchmark grid; networks on the deslanted pixel sets do not.
pub fn is_default_grid(tag: ClassifierTag, set: FeatureSetId) -> bool {
    !(tag == ClassifierTag::Nn && matches!(set, FeatureSetId::G | FeatureSetId::H))
}

/// Hyperparameters shared by every cell of a run.
#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub standardize: bool,
    /// When false, timing columns are reported as missing, which keeps
    /// repeated runs byte-identical.
    pub measure_timing: bool,
    pub knn: KnnOptions,
    pub parzen: ParzenOptions,
    pub naive_bayes: NaiveBayesOptions,
    pub network: NetworkOptions,
    /// Per-set hidden-layer override; None uses [`default_hidden_nodes`].
    pub hidden_nodes: Option<usize>,
    pub hmm_smoothing_alpha: f64,
    pub end_model: EndModel,
    pub modes: Vec<DecodeMode>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            standardize: false,
            measure_timing: true,
            knn: KnnOptions::default(),
            parzen: ParzenOptions::default(),
            naive_bayes: NaiveBayesOptions::default(),
            network: NetworkOptions::default(),
            hidden_nodes: None,
            hmm_smoothing_alpha: 0.0,
            end_model: EndModel::default(),
            modes: DecodeMode::ALL.to_vec(),
        }
    }
}

/// The searched parameter of a cell, matching the report's `h/k/Ep.` column.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "value")]
pub enum CellParam {
    K(usize),
    Bandwidth(f64),
    MeanEpochs(f64),
    None,
}

impl CellParam {
    pub fn as_f64(self) -> Option<f64> {
        match self {
            CellParam::K(k) => Some(k as f64),
            CellParam::Bandwidth(h) => Some(h),
            CellParam::MeanEpochs(e) => Some(e),
            CellParam::None => None,
        }
    }

    fn render(self) -> String {
        match self {
            CellParam::K(k) => k.to_string(),
            CellParam::Bandwidth(h) => format!("{h:.4}"),
            CellParam::MeanEpochs(e) => format!("{e:.2}"),
            CellParam::None => "-".to_string(),
        }
    }
}

/// One cell of the results grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub classifier: ClassifierTag,
    pub feature_set: FeatureSetId,
    pub train_accuracy: f64,
    pub test_accuracy: f64,
    /// Letter accuracy after decoding with modes 1..=3 (None if the mode
    /// was not requested).
    pub hmm: [Option<f64>; 3],
    pub param: CellParam,
    pub train_time_min: Option<f64>,
    pub test_time_min: Option<f64>,
    /// Whole-word exact-match rates (base prediction and per mode);
    /// supplementary, kept out of the tabular reports.
    pub word_accuracy: f64,
    pub word_accuracy_hmm: [Option<f64>; 3],
}

/// A full results grid plus the split provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub seed: u64,
    pub ratios: [f64; 3],
    pub cells: Vec<CellResult>,
}

/// Column averages of a group of cells.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AverageRow {
    pub train_accuracy: f64,
    pub test_accuracy: f64,
    pub hmm: [Option<f64>; 3],
    pub param: Option<f64>,
    pub train_time_min: Option<f64>,
    pub test_time_min: Option<f64>,
}

fn average_of(cells: &[&CellResult]) -> AverageRow {
    let n = cells.len() as f64;
    let mean = |values: Vec<f64>| -> Option<f64> {
        (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
    };
    AverageRow {
        train_accuracy: cells.iter().map(|c| c.train_accuracy).sum::<f64>() / n,
        test_accuracy: cells.iter().map(|c| c.test_accuracy).sum::<f64>() / n,
        hmm: [0, 1, 2].map(|m| mean(cells.iter().filter_map(|c| c.hmm[m]).collect())),
        param: mean(cells.iter().filter_map(|c| c.param.as_f64()).collect()),
        train_time_min: mean(cells.iter().filter_map(|c| c.train_time_min).collect()),
        test_time_min: mean(cells.iter().filter_map(|c| c.test_time_min).collect()),
    }
}

impl EvalReport {
    /// Per-classifier column averages, in first-appearance order.
    pub fn classifier_averages(&self) -> Vec<(ClassifierTag, AverageRow)> {
        let mut order: Vec<ClassifierTag> = Vec::new();
        for cell in &self.cells {
            if !order.contains(&cell.classifier) {
                order.push(cell.classifier);
            }
        }
        order
            .into_iter()
            .map(|tag| {
                let cells: Vec<&CellResult> =
                    self.cells.iter().filter(|c| c.classifier == tag).collect();
                (tag, average_of(&cells))
            })
            .collect()
    }

    pub fn total_average(&self) -> Option<AverageRow> {
        (!self.cells.is_empty()).then(|| average_of(&self.cells.iter().collect::<Vec<_>>()))
    }
}

/// Percent of positions where the prediction matches the truth.
pub fn letter_accuracy(predicted: &[Letter], truth: &[Letter]) -> Result<f64> {
    if predicted.len() != truth.len() {
        return Err(Error::InvalidArgument(format!(
            "length mismatch: {} predictions vs {} labels",
            predicted.len(),
            truth.len()
        )));
    }
    if predicted.is_empty() {
        return Err(Error::InvalidArgument("empty sequences".into()));
    }
    let matches = predicted.iter().zip(truth).filter(|(a, b)| a == b).count();
    Ok(100.0 * matches as f64 / truth.len() as f64)
}

/// Percent of words whose letters are all correct.
fn word_accuracy(predicted: &[Letter], truth: &[Letter], word_lengths: &[usize]) -> f64 {
    let mut offset = 0;
    let mut exact = 0usize;
    for &len in word_lengths {
        if predicted[offset..offset + len] == truth[offset..offset + len] {
            exact += 1;
        }
        offset += len;
    }
    100.0 * exact as f64 / word_lengths.len() as f64
}

/// Shared state of one evaluation run: the split, lazily extracted feature
/// matrices, and the letter-sequence model (estimated once per split).
pub struct RunContext<'a> {
    pub dataset: &'a Dataset,
    pub split: &'a SplitAssignment,
    pub config: PipelineConfig,
    pub master_seed: u64,
    extractor: FeatureExtractor<'a>,
    features: Mutex<HashMap<FeatureSetId, Arc<FeatureMatrix>>>,
    glyph_rows: [Vec<usize>; 3],
    labels: [Vec<Letter>; 3],
    test_word_lengths: Vec<usize>,
    hmm: OnceLock<HmmModel>,
}

impl<'a> RunContext<'a> {
    pub fn new(
        dataset: &'a Dataset,
        split: &'a SplitAssignment,
        config: PipelineConfig,
        master_seed: u64,
    ) -> Self {
        let glyph_rows =
            [0, 1, 2].map(|g| split.glyph_indices(dataset, Group::ALL[g]));
        let labels = [0, 1, 2].map(|g| {
            glyph_rows[g]
                .iter()
                .map(|&i| dataset.glyphs[i].letter)
                .collect()
        });
        let test_word_lengths = split.word_lengths(dataset, Group::Test);
        RunContext {
            dataset,
            split,
            config,
            master_seed,
            extractor: FeatureExtractor::new(&dataset.glyphs),
            features: Mutex::new(HashMap::new()),
            glyph_rows,
            labels,
            test_word_lengths,
            hmm: OnceLock::new(),
        }
    }

    pub fn labels(&self, group: Group) -> &[Letter] {
        &self.labels[group as usize]
    }

    pub fn test_word_lengths(&self) -> &[usize] {
        &self.test_word_lengths
    }

    /// Full-corpus feature matrix for a set, extracted once.
    pub fn features_for(&self, set: FeatureSetId) -> Arc<FeatureMatrix> {
        if let Some(found) = self.features.lock().unwrap().get(&set) {
            return Arc::clone(found);
        }
        let matrix = Arc::new(self.extractor.extract(set));
        self.features
            .lock()
            .unwrap()
            .entry(set)
            .or_insert(matrix)
            .clone()
    }

    /// The letter-sequence model estimated from the training words.
    pub fn hmm_model(&self) -> Result<&HmmModel> {
        if let Some(model) = self.hmm.get() {
            return Ok(model);
        }
        let words: Vec<Vec<Letter>> = self
            .split
            .words(Group::Train)
            .iter()
            .map(|&w| self.dataset.word_letters(&self.dataset.words[w]))
            .collect();
        let model = HmmModel::estimate(&words, self.config.hmm_smoothing_alpha)?;
        Ok(self.hmm.get_or_init(|| model))
    }

    fn cell_seed(&self, tag: ClassifierTag, set: FeatureSetId) -> u64 {
        // splitmix64 over the master seed and the cell coordinates.
        let mut z = self
            .master_seed
            .wrapping_add(0x9e37_79b9_7f4a_7c15u64.wrapping_mul(1 + tag as u64))
            .wrapping_add(0x517c_c1b7_2722_0a95u64.wrapping_mul(1 + set as u64));
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    }

    /// Trains one cell, scores it, and decodes the test words.
    pub fn run_cell(&self, tag: ClassifierTag, set: FeatureSetId) -> Result<CellResult> {
        let full = self.features_for(set);
        let mut train = full.select(&self.glyph_rows[0]);
        let mut validation = full.select(&self.glyph_rows[1]);
        let mut test = full.select(&self.glyph_rows[2]);
        if self.config.standardize {
            let standardizer = Standardizer::fit(&train);
            train = standardizer.transform(&train);
            validation = standardizer.transform(&validation);
            test = standardizer.transform(&test);
        }
        let train_labels = self.labels(Group::Train);
        let validation_labels = self.labels(Group::Validation);
        let test_labels = self.labels(Group::Test);

        let train_start = Instant::now();
        let (model, param): (Box<dyn BaseClassifier>, CellParam) = match tag {
            ClassifierTag::Knn => {
                let model = train_knn(
                    &train.view(),
                    train_labels,
                    &validation.view(),
                    validation_labels,
                    self.config.knn,
                )?;
                let k = model.k;
                (Box::new(model), CellParam::K(k))
            }
            ClassifierTag::Pw => {
                let model = train_parzen(
                    &train.view(),
                    train_labels,
                    &validation.view(),
                    validation_labels,
                    self.config.parzen,
                )?;
                let h = model.bandwidth_h;
                (Box::new(model), CellParam::Bandwidth(h))
            }
            ClassifierTag::Nb => {
                let model =
                    train_naive_bayes(&train.view(), train_labels, self.config.naive_bayes)?;
                (Box::new(model), CellParam::None)
            }
            ClassifierTag::Nn => {
                let options = NetworkOptions {
                    seed: self.cell_seed(tag, set),
                    ..self.config.network
                };
                let hidden = self
                    .config
                    .hidden_nodes
                    .unwrap_or_else(|| default_hidden_nodes(set));
                let model = train_neural_oaa(
                    &train.view(),
                    train_labels,
                    &validation.view(),
                    validation_labels,
                    hidden,
                    options,
                )?;
                let epochs = model.training_epochs;
                (Box::new(model), CellParam::MeanEpochs(epochs))
            }
        };
        let train_time = train_start.elapsed().as_secs_f64() / 60.0;

        let train_scores = model.train_scores(&train.view())?;
        let train_accuracy =
            letter_accuracy(&classify_argmax(&train_scores.view()), train_labels)?;

        let test_start = Instant::now();
        let (test_scores, emissions) = model.scores_and_emissions(&test.view())?;
        let test_predictions = classify_argmax(&test_scores.view());
        let test_accuracy = letter_accuracy(&test_predictions, test_labels)?;

        let hmm = self.hmm_model()?;
        let decode_options = DecodeOptions {
            end_model: self.config.end_model,
        };
        let mut hmm_accuracy = [None; 3];
        let mut hmm_word_accuracy = [None; 3];
        for &mode in &self.config.modes {
            let decoded = correct_words(
                hmm,
                &emissions,
                &self.test_word_lengths,
                mode,
                decode_options,
            )?;
            let letters: Vec<Letter> = decoded.into_iter().flat_map(|d| d.letters).collect();
            let slot = (mode.number() - 1) as usize;
            hmm_accuracy[slot] = Some(letter_accuracy(&letters, test_labels)?);
            hmm_word_accuracy[slot] =
                Some(word_accuracy(&letters, test_labels, &self.test_word_lengths));
        }
        let test_time = test_start.elapsed().as_secs_f64() / 60.0;

        Ok(CellResult {
            classifier: tag,
            feature_set: set,
            train_accuracy,
            test_accuracy,
            hmm: hmm_accuracy,
            param,
            train_time_min: self.config.measure_timing.then_some(train_time),
            test_time_min: self.config.measure_timing.then_some(test_time),
            word_accuracy: word_accuracy(&test_predictions, test_labels, &self.test_word_lengths),
            word_accuracy_hmm: hmm_word_accuracy,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Markdown,
}

fn render_cell_opt(value: Option<f64>) -> String {
    value.map_or_else(|| "-".to_string(), |v| format!("{v:.2}"))
}

/// Renders the results grid: one row per cell in run order, then one
/// average row per classifier and the total average.
pub fn render_report(report: &EvalReport, format: ReportFormat) -> String {
    let header = [
        "classifier",
        "features",
        "train_acc",
        "test_acc",
        "hmm1",
        "hmm2",
        "hmm3",
        "param",
        "train_time",
        "test_time",
    ];
    let mut rows: Vec<[String; 10]> = Vec::new();
    for cell in &report.cells {
        rows.push([
            cell.classifier.label().to_string(),
            cell.feature_set.to_string(),
            format!("{:.2}", cell.train_accuracy),
            format!("{:.2}", cell.test_accuracy),
            render_cell_opt(cell.hmm[0]),
            render_cell_opt(cell.hmm[1]),
            render_cell_opt(cell.hmm[2]),
            cell.param.render(),
            render_cell_opt(cell.train_time_min),
            render_cell_opt(cell.test_time_min),
        ]);
    }
    let average_row = |label: String, avg: &AverageRow| -> [String; 10] {
        [
            label,
            "average".to_string(),
            format!("{:.2}", avg.train_accuracy),
            format!("{:.2}", avg.test_accuracy),
            render_cell_opt(avg.hmm[0]),
            render_cell_opt(avg.hmm[1]),
            render_cell_opt(avg.hmm[2]),
            render_cell_opt(avg.param),
            render_cell_opt(avg.train_time_min),
            render_cell_opt(avg.test_time_min),
        ]
    };
    for (tag, avg) in report.classifier_averages() {
        rows.push(average_row(tag.label().to_string(), &avg));
    }
    if let Some(total) = report.total_average() {
        rows.push(average_row("total".to_string(), &total));
    }

    match format {
        ReportFormat::Csv => {
            let mut out = String::new();
            out.push_str(&header.join(","));
            out.push('\n');
            for row in rows {
                out.push_str(&row.join(","));
                out.push('\n');
            }
            out
        }
        ReportFormat::Markdown => {
            let pretty_header = [
                "Classifier",
                "Features",
                "Train Acc.",
                "Test Acc.",
                "HMM(1)",
                "HMM(2)",
                "HMM(3)",
                "h/k/Ep.",
                "Train Time",
                "Test Time",
            ];
            let mut out = String::new();
            out.push_str(&format!("| {} |\n", pretty_header.join(" | ")));
            out.push_str(&format!("|{}\n", " --- |".repeat(10)));
            for row in rows {
                out.push_str(&format!("| {} |\n", row.join(" | ")));
            }
            out
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn letters(s: &str) -> Vec<Letter> {
        s.chars().map(|c| Letter::from_char(c).unwrap()).collect()
    }

    #[test]
    fn accuracy_arithmetic() {
        assert_relative_eq!(
            letter_accuracy(&letters("abc"), &letters("abc")).unwrap(),
            100.0
        );
        assert_relative_eq!(
            letter_accuracy(&letters("abcd"), &letters("abcz")).unwrap(),
            75.0
        );
        assert!(letter_accuracy(&letters("ab"), &letters("abc")).is_err());
        assert!(letter_accuracy(&[], &[]).is_err());
    }

    #[test]
    fn word_accuracy_counts_exact_words() {
        let predicted = letters("abxd");
        let truth = letters("abcd");
        assert_relative_eq!(word_accuracy(&predicted, &truth, &[2, 2]), 50.0);
    }

    fn sample_cell() -> CellResult {
        CellResult {
            classifier: ClassifierTag::Knn,
            feature_set: FeatureSetId::A,
            train_accuracy: 42.7,
            test_accuracy: 42.1,
            hmm: [Some(50.8), Some(52.1), Some(51.7)],
            param: CellParam::K(17),
            train_time_min: Some(0.09),
            test_time_min: Some(0.03),
            word_accuracy: 10.0,
            word_accuracy_hmm: [Some(12.0), Some(13.0), Some(12.5)],
        }
    }

    #[test]
    fn empty_report_renders_header_only() {
        let report = EvalReport {
            seed: 0,
            ratios: [1.0 / 3.0; 3],
            cells: vec![],
        };
        let csv = render_report(&report, ReportFormat::Csv);
        assert_eq!(csv.lines().count(), 1);
        assert!(csv.starts_with("classifier,features,"));
    }

    #[test]
    fn single_cell_renders_ten_columns() {
        let report = EvalReport {
            seed: 0,
            ratios: [1.0 / 3.0; 3],
            cells: vec![sample_cell()],
        };
        let csv = render_report(&report, ReportFormat::Csv);
        let lines: Vec<&str> = csv.lines().collect();
        // Header, the cell, the K-NN average and the total average.
        assert_eq!(lines.len(), 4);
        for line in &lines {
            assert_eq!(line.split(',').count(), 10, "{line}");
        }
        assert_eq!(lines[1], "K-NN,a,42.70,42.10,50.80,52.10,51.70,17,0.09,0.03");
    }

    #[test]
    fn markdown_renders_grid_shape() {
        let report = EvalReport {
            seed: 0,
            ratios: [1.0 / 3.0; 3],
            cells: vec![sample_cell()],
        };
        let md = render_report(&report, ReportFormat::Markdown);
        let lines: Vec<&str> = md.lines().collect();
        assert!(lines[0].starts_with("| Classifier | Features |"));
        assert!(lines[1].contains("---"));
        assert_eq!(lines.len(), 5);
        for line in &lines {
            assert_eq!(line.matches('|').count(), 11, "{line}");
        }
    }

    #[test]
    fn averages_recompute_from_cells() {
        let mut second = sample_cell();
        second.feature_set = FeatureSetId::B;
        second.train_accuracy = 53.4;
        second.test_accuracy = 53.1;
        second.param = CellParam::K(11);
        let report = EvalReport {
            seed: 1,
            ratios: [1.0 / 3.0; 3],
            cells: vec![sample_cell(), second],
        };
        let averages = report.classifier_averages();
        assert_eq!(averages.len(), 1);
        let avg = averages[0].1;
        assert_relative_eq!(avg.train_accuracy, (42.7 + 53.4) / 2.0, epsilon = 1e-9);
        assert_relative_eq!(avg.test_accuracy, (42.1 + 53.1) / 2.0, epsilon = 1e-9);
        assert_relative_eq!(avg.param.unwrap(), 14.0, epsilon = 1e-9);
        let total = report.total_average().unwrap();
        assert_relative_eq!(total.test_accuracy, avg.test_accuracy, epsilon = 1e-9);
    }

    /// End-to-end cell on a small synthetic corpus: deterministic and sane.
    #[test]
    fn run_cell_on_synthetic_corpus() {
        let dataset = crate::synth::generate(&crate::synth::SynthConfig {
            instances_per_word: 10,
            noise: 0.02,
            seed: 7,
            ..Default::default()
        });
        let split =
            crate::dataset::split_dataset(&dataset.words, [1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0], 5)
                .unwrap();
        let config = PipelineConfig {
            measure_timing: false,
            ..Default::default()
        };
        let context = RunContext::new(&dataset, &split, config.clone(), 5);
        let cell = context.run_cell(ClassifierTag::Knn, FeatureSetId::F).unwrap();
        assert!(cell.test_accuracy > 60.0, "kNN on clean archetypes should be accurate");
        assert!((0.0..=100.0).contains(&cell.train_accuracy));
        for mode in 0..3 {
            let corrected = cell.hmm[mode].unwrap();
            assert!((0.0..=100.0).contains(&corrected));
        }

        // Bit-for-bit determinism with timing off.
        let context2 = RunContext::new(&dataset, &split, config, 5);
        let cell2 = context2.run_cell(ClassifierTag::Knn, FeatureSetId::F).unwrap();
        assert_eq!(cell, cell2);
    }
}
