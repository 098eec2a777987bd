//! Experiment configuration and the runners behind the `fedlwf` binary.
//!
//! A config is TOML (or JSON, by `.json` extension). Every key has a
//! default, so an empty file is a valid desk-scale synthetic run. Values can
//! be overridden with dot-paths (`fed.n_clients=5`); an override must name a
//! key that exists in the fully defaulted config.
//!
//! ```toml
//! mode = "fed_cl"
//!
//! [model]
//! depth = 3
//! width = 100
//! in_dim = 512
//! n_classes = 10
//!
//! [fed]
//! n_clients = 3
//! rounds = 4
//! local_epochs = 5
//! partition = "iid"        # or "label_skew"
//! alpha = 0.5
//!
//! [train]
//! batch_size = 32
//! lr = 0.001
//! seed = 0
//!
//! [data.synthetic]         # or one [[data.files]] table per event
//! events = 3
//!
//! [output]
//! dir = "out"
//! formats = ["csv", "json"]
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::continual::{LwfConfig, TrainConfig};
use crate::data::{write_embedding_csv, EventSplits, SyntheticSuite};
use crate::error::{Error, Result};
use crate::federated::{run_event_sequence, FedConfig, Mode, ModelSpec, PartitionStrategy, SequenceOutcome, Summary};
use crate::metrics::{export, fmt_sig9, ExportFormat};
use crate::nn::Hyper;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PartitionKind {
    Iid,
    LabelSkew,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FedSection {
    pub n_clients: usize,
    pub rounds: usize,
    pub local_epochs: usize,
    pub partition: PartitionKind,
    /// Dirichlet concentration, used when `partition = "label_skew"`.
    pub alpha: f64,
    pub parallel: bool,
}

impl Default for FedSection {
    fn default() -> Self {
        FedSection {
            n_clients: 3,
            rounds: 4,
            local_epochs: 5,
            partition: PartitionKind::Iid,
            alpha: 0.5,
            parallel: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub batch_size: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub l2: f64,
    pub lambda0: f64,
    pub temperature: f64,
    pub seed: u64,
}

impl Default for TrainSection {
    fn default() -> Self {
        let h = Hyper::default();
        let l = LwfConfig::default();
        TrainSection {
            batch_size: 32,
            lr: h.lr,
            beta1: h.beta1,
            beta2: h.beta2,
            eps: h.eps,
            l2: h.l2,
            lambda0: l.lambda0,
            temperature: l.temperature,
            seed: 0,
        }
    }
}

/// One event's three embedding CSV files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EventFiles {
    pub name: String,
    pub train: PathBuf,
    pub valid: PathBuf,
    pub test: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSource {
    Synthetic(SyntheticSuite),
    Files(Vec<EventFiles>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: PathBuf,
    pub formats: Vec<ExportFormat>,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection {
            dir: PathBuf::from("out"),
            formats: vec![ExportFormat::Csv],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub mode: Mode,
    pub model: ModelSpec,
    pub fed: FedSection,
    pub train: TrainSection,
    pub data: DataSource,
    pub output: OutputSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            mode: Mode::CentralCl,
            model: ModelSpec::default(),
            fed: FedSection::default(),
            train: TrainSection::default(),
            data: DataSource::Synthetic(SyntheticSuite::default()),
            output: OutputSection::default(),
        }
    }
}

impl ExperimentConfig {
    /// Reads a config file, applies `overrides`, resolves relative data
    /// paths against the file's directory and validates the result.
    pub fn load(path: impl AsRef<Path>, overrides: &[String]) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let is_json = path.extension().is_some_and(|e| e == "json");
        let mut cfg = Self::parse(&text, is_json)?;
        cfg = cfg.with_overrides(overrides)?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn parse(text: &str, json: bool) -> Result<Self> {
        if json {
            serde_json::from_str(text).map_err(|e| Error::config("<config>", e.to_string()))
        } else {
            toml::from_str(text).map_err(|e| Error::config("<config>", e.to_string()))
        }
    }

    /// Applies `key=value` overrides. Values are read as TOML literals and
    /// fall back to plain strings.
    pub fn with_overrides(&self, overrides: &[String]) -> Result<Self> {
        if overrides.is_empty() {
            return Ok(self.clone());
        }
        let mut tree = serde_json::to_value(self).expect("config serializes");
        let mut keys = Vec::new();
        for item in overrides {
            let (key, raw) = item
                .split_once('=')
                .ok_or_else(|| Error::config(item.as_str(), "override must look like key=value"))?;
            let key = key.trim();
            set_path(&mut tree, key, parse_literal(raw.trim()))?;
            keys.push(key.to_string());
        }
        serde_json::from_value(tree).map_err(|e| Error::config(keys.join(","), e.to_string()))
    }

    fn resolve_paths(&mut self, base: &Path) {
        if let DataSource::Files(files) = &mut self.data {
            for f in files {
                for p in [&mut f.train, &mut f.valid, &mut f.test] {
                    if p.is_relative() {
                        *p = base.join(&*p);
                    }
                }
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.model.init_check()?;
        self.fed_config().validate()?;
        match &self.data {
            DataSource::Synthetic(s) => {
                s.validate()?;
                if s.dim != self.model.in_dim {
                    return Err(Error::config(
                        "model.in_dim",
                        format!("synthetic data has dim {}, model expects {}", s.dim, self.model.in_dim),
                    ));
                }
                if s.n_classes != self.model.n_classes {
                    return Err(Error::config(
                        "model.n_classes",
                        format!("synthetic data has {} classes, model expects {}", s.n_classes, self.model.n_classes),
                    ));
                }
            }
            DataSource::Files(files) => {
                if files.is_empty() {
                    return Err(Error::config("data.files", "need at least one event"));
                }
                for (k, f) in files.iter().enumerate() {
                    for (split, p) in [("train", &f.train), ("valid", &f.valid), ("test", &f.test)] {
                        if !p.is_file() {
                            return Err(Error::config(
                                format!("data.files[{k}].{split}"),
                                format!("file {} does not exist", p.display()),
                            ));
                        }
                    }
                }
            }
        }
        if self.output.formats.is_empty() {
            return Err(Error::config("output.formats", "need at least one format"));
        }
        Ok(())
    }

    pub fn fed_config(&self) -> FedConfig {
        let t = &self.train;
        FedConfig {
            n_clients: self.fed.n_clients,
            rounds: self.fed.rounds,
            local_epochs: self.fed.local_epochs,
            partition: match self.fed.partition {
                PartitionKind::Iid => PartitionStrategy::Iid,
                PartitionKind::LabelSkew => PartitionStrategy::LabelSkew { alpha: self.fed.alpha },
            },
            train: TrainConfig {
                epochs: self.fed.local_epochs,
                batch_size: t.batch_size,
                hyper: Hyper {
                    lr: t.lr,
                    beta1: t.beta1,
                    beta2: t.beta2,
                    eps: t.eps,
                    l2: t.l2,
                },
                lwf: LwfConfig {
                    lambda0: t.lambda0,
                    temperature: t.temperature,
                    enabled: true,
                },
                seed: t.seed,
            },
            parallel: self.fed.parallel,
        }
    }

    pub fn load_events(&self) -> Result<Vec<EventSplits>> {
        match &self.data {
            DataSource::Synthetic(s) => s.generate(),
            DataSource::Files(files) => files
                .iter()
                .map(|f| EventSplits::load(f.name.clone(), &f.train, &f.valid, &f.test))
                .collect(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

impl ModelSpec {
    fn init_check(&self) -> Result<()> {
        let field = |f: &str| format!("model.{f}");
        if self.depth < 2 {
            return Err(Error::config(field("depth"), "must be >= 2"));
        }
        if self.width < 1 {
            return Err(Error::config(field("width"), "must be >= 1"));
        }
        if self.in_dim < 1 {
            return Err(Error::config(field("in_dim"), "must be >= 1"));
        }
        if self.n_classes < 2 {
            return Err(Error::config(field("n_classes"), "must be >= 2"));
        }
        Ok(())
    }
}

fn parse_literal(raw: &str) -> Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .and_then(|v| serde_json::to_value(v).ok())
        .unwrap_or_else(|| Value::String(raw.to_string()))
}

fn set_path(tree: &mut Value, key: &str, value: Value) -> Result<()> {
    let mut node = tree;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let obj = node
            .as_object_mut()
            .ok_or_else(|| Error::config(key, format!("`{}` is not a table", parts[..i].join("."))))?;
        let slot = obj
            .get_mut(*part)
            .ok_or_else(|| Error::config(key, "no such key"))?;
        if i + 1 == parts.len() {
            *slot = value;
            return Ok(());
        }
        node = slot;
    }
    unreachable!("split yields at least one part")
}

/// What a `run` produced.
#[derive(Debug, Clone)]
pub struct RunReport {
    pub outcome: SequenceOutcome,
    pub files: Vec<PathBuf>,
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write(path: PathBuf, body: String, files: &mut Vec<PathBuf>) -> Result<()> {
    fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
    files.push(path);
    Ok(())
}

/// Trains the configured event sequence and writes `metrics.csv` (plus
/// `metrics.json` when requested), `summary.json` and `resolved-config.json`
/// into `output.dir`.
pub fn run(cfg: &ExperimentConfig) -> Result<RunReport> {
    cfg.validate()?;
    let events = cfg.load_events()?;
    let outcome = run_event_sequence(&events, &cfg.model, &cfg.fed_config(), cfg.mode)?;

    let dir = &cfg.output.dir;
    create_dir(dir)?;
    let mut files = Vec::new();
    let csv = dir.join("metrics.csv");
    export(&outcome.log, &csv, ExportFormat::Csv)?;
    files.push(csv);
    if cfg.output.formats.contains(&ExportFormat::Json) {
        let json = dir.join("metrics.json");
        export(&outcome.log, &json, ExportFormat::Json)?;
        files.push(json);
    }
    let summary = serde_json::to_string_pretty(&outcome.summary).expect("summary serializes");
    write(dir.join("summary.json"), summary, &mut files)?;
    write(dir.join("resolved-config.json"), cfg.to_json(), &mut files)?;
    Ok(RunReport { outcome, files })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    Depth,
    Clients,
}

impl SweepAxis {
    fn apply(self, cfg: &ExperimentConfig, value: usize) -> ExperimentConfig {
        let mut c = cfg.clone();
        match self {
            SweepAxis::Depth => c.model.depth = value,
            SweepAxis::Clients => c.fed.n_clients = value,
        }
        c
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub axis_value: usize,
    pub train_accuracy: f64,
    pub test_accuracy: f64,
    pub test_loss: f64,
}

/// Runs one experiment per axis value with the shared seed and writes
/// `sweep.csv`. Accuracies are final cumulative means over events; the loss
/// is the mean final test loss.
pub fn sweep(cfg: &ExperimentConfig, axis: SweepAxis, values: &[usize]) -> Result<Vec<SweepRow>> {
    if values.is_empty() {
        return Err(Error::config("axis", "need at least one value"));
    }
    let points: Vec<ExperimentConfig> = values.iter().map(|&v| axis.apply(cfg, v)).collect();
    for p in &points {
        p.validate()?;
    }
    let events = cfg.load_events()?;
    let rows: Vec<SweepRow> = points
        .par_iter()
        .zip(values)
        .map(|(p, &v)| {
            let s = run_event_sequence(&events, &p.model, &p.fed_config(), p.mode)?.summary;
            Ok(SweepRow {
                axis_value: v,
                train_accuracy: s.final_cumulative_train(),
                test_accuracy: s.final_cumulative_test(),
                test_loss: s.mean_final_test_loss(),
            })
        })
        .collect::<Result<_>>()?;

    create_dir(&cfg.output.dir)?;
    let mut csv = String::from("axis_value,train_accuracy,test_accuracy,test_loss\n");
    for r in &rows {
        csv.push_str(&format!(
            "{},{},{},{}\n",
            r.axis_value,
            fmt_sig9(r.train_accuracy),
            fmt_sig9(r.test_accuracy),
            fmt_sig9(r.test_loss)
        ));
    }
    let mut files = Vec::new();
    write(cfg.output.dir.join("sweep.csv"), csv, &mut files)?;
    write(cfg.output.dir.join("resolved-config.json"), cfg.to_json(), &mut files)?;
    Ok(rows)
}

/// Runs all four modes on the same data and seed and writes `baselines.csv`
/// (one row per mode, cumulative-mean accuracies).
pub fn baselines(cfg: &ExperimentConfig) -> Result<Vec<Summary>> {
    cfg.validate()?;
    let events = cfg.load_events()?;
    let fed = cfg.fed_config();
    let summaries: Vec<Summary> = Mode::ALL
        .par_iter()
        .map(|&m| run_event_sequence(&events, &cfg.model, &fed, m).map(|o| o.summary))
        .collect::<Result<_>>()?;

    create_dir(&cfg.output.dir)?;
    let mut csv = String::from("mode,train_accuracy,test_accuracy\n");
    for s in &summaries {
        csv.push_str(&format!(
            "{},{},{}\n",
            s.mode,
            fmt_sig9(s.final_cumulative_train()),
            fmt_sig9(s.final_cumulative_test())
        ));
    }
    let mut files = Vec::new();
    write(cfg.output.dir.join("baselines.csv"), csv, &mut files)?;
    write(cfg.output.dir.join("resolved-config.json"), cfg.to_json(), &mut files)?;
    Ok(summaries)
}

/// Writes the synthetic suite as embedding CSVs (`<event>_{train,valid,test}.csv`)
/// plus `events.toml`, a `[[data.files]]` block pointing at them.
pub fn gen_synth(suite: &SyntheticSuite, dir: &Path) -> Result<Vec<EventFiles>> {
    create_dir(dir)?;
    let mut listing = String::new();
    let mut out = Vec::new();
    for e in suite.generate()? {
        let path = |split: &str| dir.join(format!("{}_{split}.csv", e.name));
        let files = EventFiles {
            name: e.name.clone(),
            train: path("train"),
            valid: path("valid"),
            test: path("test"),
        };
        write_embedding_csv(&e.train, &files.train)?;
        write_embedding_csv(&e.valid, &files.valid)?;
        write_embedding_csv(&e.test, &files.test)?;
        let file_name = |p: &Path| p.file_name().expect("has name").to_string_lossy().into_owned();
        listing.push_str(&format!(
            "[[data.files]]\nname = \"{}\"\ntrain = \"{}\"\nvalid = \"{}\"\ntest = \"{}\"\n\n",
            files.name,
            file_name(&files.train),
            file_name(&files.valid),
            file_name(&files.test)
        ));
        out.push(files);
    }
    let p = dir.join("events.toml");
    fs::write(&p, listing).map_err(|e| Error::io(&p, e))?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_toml_is_default() {
        assert_eq!(ExperimentConfig::parse("", false).unwrap(), ExperimentConfig::default());
    }

    #[test]
    fn overrides_set_typed_values() {
        let c = ExperimentConfig::default()
            .with_overrides(&[
                "fed.n_clients=7".into(),
                "mode=fed_only".into(),
                "fed.partition=label_skew".into(),
                "train.lr=0.01".into(),
                "data.synthetic.drift=0.25".into(),
            ])
            .unwrap();
        assert_eq!(c.fed.n_clients, 7);
        assert_eq!(c.mode, Mode::FedOnly);
        assert_eq!(c.fed.partition, PartitionKind::LabelSkew);
        assert_eq!(c.train.lr, 0.01);
        match c.data {
            DataSource::Synthetic(s) => assert_eq!(s.drift, 0.25),
            _ => unreachable!(),
        }
    }

    #[test]
    fn unknown_override_key_named() {
        let err = ExperimentConfig::default()
            .with_overrides(&["fed.n_client=3".into()])
            .unwrap_err();
        match err {
            Error::Config { field, .. } => assert_eq!(field, "fed.n_client"),
            other => panic!("{other}"),
        }
    }

    #[test]
    fn bad_override_type_named() {
        let err = ExperimentConfig::default()
            .with_overrides(&["fed.rounds=many".into()])
            .unwrap_err();
        assert!(matches!(err, Error::Config { ref field, .. } if field == "fed.rounds"), "{err}");
    }

    #[test]
    fn zero_clients_fails_validation() {
        let c = ExperimentConfig::default()
            .with_overrides(&["fed.n_clients=0".into()])
            .unwrap();
        assert!(matches!(c.validate(), Err(Error::Config { ref field, .. }) if field == "fed.n_clients"));
    }

    #[test]
    fn both_data_sources_rejected() {
        let text = "[data.synthetic]\nevents = 2\n[[data.files]]\nname='a'\ntrain='a'\nvalid='b'\ntest='c'\n";
        assert!(ExperimentConfig::parse(text, false).is_err());
    }

    #[test]
    fn missing_data_file_is_config_error() {
        let text = "[[data.files]]\nname='a'\ntrain='nope.csv'\nvalid='nope.csv'\ntest='nope.csv'\n";
        let c = ExperimentConfig::parse(text, false).unwrap();
        assert!(matches!(c.validate(), Err(Error::Config { ref field, .. }) if field == "data.files[0].train"));
    }

    #[test]
    fn json_round_trip_of_config() {
        let c = ExperimentConfig::default()
            .with_overrides(&["fed.alpha=0.1".into(), "output.formats=['csv','json']".into()])
            .unwrap();
        assert_eq!(ExperimentConfig::parse(&c.to_json(), true).unwrap(), c);
    }
}
