//! Experiment runs: dataset generation and the object × mode × trial grid of
//! exploration episodes, each described by one JSON config with every
//! default written out.

mod report;

pub use report::{
    build_report, build_report_from_paths, progression_csv, report_csv, report_table, write_report,
    CategoryStats, EpisodeSummary, ModeStats, ProgressionPoint, Report, ReportRow, SoftCheck,
    REPORT_SCHEMA_VERSION,
};

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::datagen::{build_dataset, DatasetConfig, DatasetManifest};
use crate::error::{Error, Result};
use crate::exploration::{read_episode_log, run_episode, ExplorationConfig};
use crate::files;
use crate::gripper::{GripperModel, HandDescription, HAND_SCHEMA_VERSION};
use crate::modes::{InteractionMode, ModeKind};
use crate::primitives::{NamedObject, ObjectSuite, SuiteSpec};
use crate::seed::derive_seed;

pub const RUN_SCHEMA_VERSION: u32 = 1;

/// Reads a run config. Missing fields take their defaults; a stated schema
/// version must match.
fn load_config<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
    if let Some(v) = value.get("schema_version") {
        if v.as_u64() != Some(RUN_SCHEMA_VERSION as u64) {
            return Err(Error::SchemaMismatch {
                path: path.to_path_buf(),
                expected: RUN_SCHEMA_VERSION,
                found: v.to_string(),
            });
        }
    }
    serde_json::from_value(value).map_err(|e| Error::json(path, e))
}

/// The named objects of `suite`, in suite order; an empty list selects all.
pub fn select_objects(suite: &ObjectSuite, names: &[String]) -> Result<Vec<NamedObject>> {
    if let Some(missing) = names.iter().find(|n| suite.get(n).is_none()) {
        return Err(Error::InvalidParameter(format!(
            "unknown object {missing:?}"
        )));
    }
    Ok(suite
        .objects
        .iter()
        .filter(|o| names.is_empty() || names.contains(&o.name))
        .cloned()
        .collect())
}

fn hand_model(hand: &HandDescription) -> Result<GripperModel> {
    if hand.schema_version != HAND_SCHEMA_VERSION {
        return Err(Error::SchemaMismatch {
            path: "hand description".into(),
            expected: HAND_SCHEMA_VERSION,
            found: hand.schema_version.to_string(),
        });
    }
    GripperModel::new(hand.clone())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetRunConfig {
    pub schema_version: u32,
    /// Suite object names; empty means every object.
    pub objects: Vec<String>,
    pub output_dir: PathBuf,
    pub suite: SuiteSpec,
    pub hand: HandDescription,
    pub dataset: DatasetConfig,
}

impl Default for DatasetRunConfig {
    fn default() -> Self {
        DatasetRunConfig {
            schema_version: RUN_SCHEMA_VERSION,
            objects: Vec::new(),
            output_dir: PathBuf::from("dataset"),
            suite: SuiteSpec::default(),
            hand: HandDescription::default(),
            dataset: DatasetConfig::default(),
        }
    }
}

impl DatasetRunConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        load_config(path.as_ref())
    }
}

/// Builds the dataset and stores the full config next to its manifest.
pub fn generate_dataset(config: &DatasetRunConfig) -> Result<DatasetManifest> {
    let model = hand_model(&config.hand)?;
    let objects = select_objects(&ObjectSuite::table_one_with(config.suite), &config.objects)?;
    files::create_dir(&config.output_dir)?;
    files::write_json(&config.output_dir.join("config.json"), config)?;
    build_dataset(&model, &objects, &config.dataset, &config.output_dir)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridConfig {
    pub schema_version: u32,
    /// Suite object names; empty means every object.
    pub objects: Vec<String>,
    /// One entry per mode, with its parameters. The mode inside
    /// `exploration` is replaced by each of these in turn.
    pub modes: Vec<InteractionMode>,
    pub trials: usize,
    pub seed: u64,
    pub output_dir: PathBuf,
    /// Episodes run at once.
    pub parallel: usize,
    /// Also store every belief as PLY.
    pub snapshots: bool,
    pub suite: SuiteSpec,
    pub hand: HandDescription,
    pub exploration: ExplorationConfig,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            schema_version: RUN_SCHEMA_VERSION,
            objects: Vec::new(),
            modes: ModeKind::ALL
                .into_iter()
                .map(InteractionMode::default_for)
                .collect(),
            trials: 5,
            seed: 0,
            output_dir: PathBuf::from("grid"),
            parallel: 1,
            snapshots: false,
            suite: SuiteSpec::default(),
            hand: HandDescription::default(),
            exploration: ExplorationConfig::default(),
        }
    }
}

impl GridConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        load_config(path.as_ref())
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::InvalidParameter("trials must be at least 1".into()));
        }
        if self.parallel == 0 {
            return Err(Error::InvalidParameter(
                "parallel must be at least 1".into(),
            ));
        }
        if self.modes.is_empty() {
            return Err(Error::InvalidParameter("no modes selected".into()));
        }
        let mut kinds: Vec<ModeKind> = self.modes.iter().map(|m| m.kind()).collect();
        kinds.sort();
        kinds.dedup();
        if kinds.len() != self.modes.len() {
            return Err(Error::InvalidParameter("a mode is listed twice".into()));
        }
        for m in &self.modes {
            self.cell_config(m).validate()?;
        }
        Ok(())
    }

    fn cell_config(&self, mode: &InteractionMode) -> ExplorationConfig {
        ExplorationConfig {
            mode: *mode,
            ..self.exploration.clone()
        }
    }

    pub fn logs_dir(&self) -> PathBuf {
        self.output_dir.join("logs")
    }

    /// Every cell in object, mode, trial order.
    pub fn cells(&self) -> Result<Vec<Cell>> {
        let objects = select_objects(&ObjectSuite::table_one_with(self.suite), &self.objects)?;
        let mut out = Vec::new();
        for o in &objects {
            for m in &self.modes {
                for trial in 0..self.trials {
                    out.push(Cell {
                        object: o.name.clone(),
                        mode: m.kind(),
                        trial,
                    });
                }
            }
        }
        Ok(out)
    }
}

/// One (object, mode, trial) combination.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cell {
    pub object: String,
    pub mode: ModeKind,
    pub trial: usize,
}

impl Cell {
    /// Depends only on the master seed and the cell itself, not on which
    /// other cells are in the grid.
    pub fn seed(&self, master: u64) -> u64 {
        derive_seed(
            master,
            &[
                &self.object,
                self.mode.short_name(),
                &self.trial.to_string(),
            ],
        )
    }

    pub fn stem(&self) -> String {
        format!(
            "{}_{}_t{:02}",
            self.object,
            self.mode.short_name(),
            self.trial
        )
    }

    pub fn log_name(&self) -> String {
        format!("{}.jsonl", self.stem())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum CellStatus {
    Ran,
    /// A matching log was already present.
    Reused,
    Failed {
        error: String,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub cell: Cell,
    pub seed: u64,
    #[serde(flatten)]
    pub status: CellStatus,
}

#[derive(Clone, Debug)]
pub struct GridSummary {
    pub cells: Vec<CellResult>,
    pub report: Report,
}

impl GridSummary {
    pub fn failures(&self) -> usize {
        self.cells
            .iter()
            .filter(|c| matches!(c.status, CellStatus::Failed { .. }))
            .count()
    }
}

/// Whether `path` already holds this cell's episode under this config.
fn reusable(
    path: &Path,
    object: &NamedObject,
    cell: &Cell,
    seed: u64,
    config: &ExplorationConfig,
) -> bool {
    match read_episode_log(path) {
        Ok((h, r)) => {
            h.object == *object && h.trial == cell.trial && h.config == *config && r.seed == seed
        }
        Err(_) => false,
    }
}

/// Runs every cell, writing `logs/<object>_<MODE>_tNN.jsonl` per episode,
/// then the report over exactly these cells. An episode error is recorded
/// for its cell and the grid carries on; I/O errors abort.
///
/// With `resume`, cells whose log already matches are not re-run, and the
/// stored `config.json` must match `config` in everything that affects
/// results.
pub fn run_grid(config: &GridConfig, resume: bool) -> Result<GridSummary> {
    config.validate()?;
    let model = hand_model(&config.hand)?;
    let suite = ObjectSuite::table_one_with(config.suite);
    let cells = config.cells()?;
    let logs = config.logs_dir();
    files::create_dir(&logs)?;
    let config_path = config.output_dir.join("config.json");
    if resume && config_path.exists() {
        let stored: GridConfig = files::read_json(&config_path)?;
        // parallelism and snapshots do not change any episode
        let same = GridConfig {
            parallel: config.parallel,
            snapshots: config.snapshots,
            ..stored
        } == *config;
        if !same {
            return Err(Error::InvalidParameter(format!(
                "{} holds a different config; refusing to resume",
                config_path.display()
            )));
        }
    }
    files::write_json(&config_path, config)?;

    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<Result<CellResult>>>> =
        Mutex::new(cells.iter().map(|_| None).collect());
    let run_one = |cell: &Cell| -> Result<CellResult> {
        let object = suite.get(&cell.object).expect("cells come from the suite");
        let mode = config
            .modes
            .iter()
            .find(|m| m.kind() == cell.mode)
            .expect("cells come from the configured modes");
        let ecfg = config.cell_config(mode);
        let seed = cell.seed(config.seed);
        let path = logs.join(cell.log_name());
        if resume && reusable(&path, object, cell, seed, &ecfg) {
            log::info!("{}: reusing log", cell.stem());
            return Ok(CellResult {
                cell: cell.clone(),
                seed,
                status: CellStatus::Reused,
            });
        }
        let status = match run_episode(&model, &object.shape, &ecfg, seed) {
            Ok(record) => {
                record.write_log(&path, object, cell.trial, &ecfg)?;
                if config.snapshots {
                    record
                        .write_snapshots(&config.output_dir.join("snapshots").join(cell.stem()))?;
                }
                log::info!(
                    "{}: {:?} after {} interactions",
                    cell.stem(),
                    record.outcome.termination,
                    record.outcome.interactions
                );
                CellStatus::Ran
            }
            Err(e) => {
                log::warn!("{}: {e}", cell.stem());
                CellStatus::Failed {
                    error: e.to_string(),
                }
            }
        };
        Ok(CellResult {
            cell: cell.clone(),
            seed,
            status,
        })
    };
    std::thread::scope(|s| {
        for _ in 0..config.parallel.min(cells.len()) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(cell) = cells.get(i) else { break };
                let r = run_one(cell);
                results
                    .lock()
                    .expect("no worker panics while holding the lock")[i] = Some(r);
            });
        }
    });
    let results: Vec<CellResult> = results
        .into_inner()
        .expect("workers finished")
        .into_iter()
        .map(|r| r.expect("every cell was taken"))
        .collect::<Result<_>>()?;
    files::write_json(&config.output_dir.join("cells.json"), &results)?;

    let paths: Vec<PathBuf> = results
        .iter()
        .filter(|r| !matches!(r.status, CellStatus::Failed { .. }))
        .map(|r| logs.join(r.cell.log_name()))
        .collect();
    let report = build_report_from_paths(&paths, &config.logs_dir())?;
    write_report(&report, &config.output_dir)?;
    Ok(GridSummary {
        cells: results,
        report,
    })
}
