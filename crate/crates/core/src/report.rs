//! On-disk artifacts, the end-to-end pipeline, its run manifest and the
//! benchmark harness.
//!
//! Every artifact except the manifest is a pure function of the inputs and
//! settings; worker count only changes the recorded durations.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::network::{load_case, Configuration, NetworkCase};
use crate::objectives::{Cell, GridMetadata, Objective, ObjectiveGrid};
use crate::powerflow::{run_grid, GridOptions, SolverSettings};
use crate::profile::{load_profiles, ProfileSet};
use crate::radial::{enumerate_radial_with, EnumerationOptions, RadialSet, RadialStats};
use crate::reduction::{reduce, ReducedGraph};
use crate::replacement::{build_merit_tables, enumerate_cases, EvaluationSettings, MeritReport};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

pub const CONFIGS_FILE: &str = "configs.json";
pub const REDUCED_FILE: &str = "reduced.json";
pub const GRID_FILE: &str = "grid.json";
pub const MERIT_FILE: &str = "merit.json";
pub const LOSSES_CSV: &str = "losses.csv";
pub const VIOLATIONS_CSV: &str = "violations.csv";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsDoc {
    #[serde(flatten)]
    pub counts: RadialStats,
    pub discarded_pct: f64,
}

/// `configs.json`: the radial set with its switch order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigsDoc {
    pub switch_order: Vec<String>,
    pub switch_names: Vec<String>,
    /// Character `i` is the state of `switch_order[i]`, `1` = closed.
    pub configs: Vec<String>,
    pub fixed_open: Vec<String>,
    pub stats: StatsDoc,
}

impl ConfigsDoc {
    pub fn new(case: &NetworkCase, graph: &ReducedGraph, radial: &RadialSet) -> Self {
        let switch_names = radial
            .switch_order
            .iter()
            .map(|id| {
                case.switch_by_id(id)
                    .map_or_else(|| id.clone(), |s| s.display_name().to_string())
            })
            .collect();
        Self {
            switch_order: radial.switch_order.clone(),
            switch_names,
            configs: radial.configs.iter().map(Configuration::to_bits).collect(),
            fixed_open: graph.fixed_open.clone(),
            stats: StatsDoc {
                counts: radial.stats,
                discarded_pct: radial.stats.discarded_pct(),
            },
        }
    }

    pub fn configurations(&self) -> Result<Vec<Configuration>> {
        self.configs
            .iter()
            .map(|bits| {
                Configuration::parse_bits(bits)
                    .filter(|c| c.len() == self.switch_order.len())
                    .ok_or_else(|| {
                        Error::Inconsistent(format!("bad configuration string {bits:?}"))
                    })
            })
            .collect()
    }

    pub fn radial_set(&self) -> Result<RadialSet> {
        Ok(RadialSet {
            switch_order: self.switch_order.clone(),
            configs: self.configurations()?,
            stats: self.stats.counts,
        })
    }
}

/// One grid cell as written to `grid.json`; objective fields are null when
/// the cell is infeasible.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellDoc {
    pub config_index: usize,
    pub timestep: usize,
    pub losses_mw: Option<f64>,
    pub violations: Option<u32>,
    pub infeasible: bool,
    pub extreme: bool,
    pub min_v: Option<f64>,
    pub max_v: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridDoc {
    pub metadata: GridMetadata,
    pub config_count: usize,
    pub timesteps: usize,
    pub cells: Vec<CellDoc>,
}

impl From<&ObjectiveGrid> for GridDoc {
    fn from(grid: &ObjectiveGrid) -> Self {
        let cells = grid
            .cells
            .iter()
            .enumerate()
            .map(|(i, cell)| {
                let feasible = |v: f64| (!cell.infeasible).then_some(v);
                CellDoc {
                    config_index: i / grid.timesteps,
                    timestep: i % grid.timesteps,
                    losses_mw: feasible(cell.losses_mw),
                    violations: (!cell.infeasible).then_some(cell.violations),
                    infeasible: cell.infeasible,
                    extreme: cell.extreme,
                    min_v: feasible(cell.min_v),
                    max_v: feasible(cell.max_v),
                }
            })
            .collect();
        Self {
            metadata: grid.metadata.clone(),
            config_count: grid.config_count,
            timesteps: grid.timesteps,
            cells,
        }
    }
}

impl GridDoc {
    pub fn into_grid(self) -> Result<ObjectiveGrid> {
        let expected = self.config_count * self.timesteps;
        if self.cells.len() != expected || self.metadata.configs.len() != self.config_count {
            return Err(Error::Inconsistent(format!(
                "grid declares {} x {} cells but holds {}",
                self.config_count,
                self.timesteps,
                self.cells.len()
            )));
        }
        let mut cells = vec![Cell::infeasible(); expected];
        let mut seen = vec![false; expected];
        for doc in self.cells {
            if doc.config_index >= self.config_count || doc.timestep >= self.timesteps {
                return Err(Error::Inconsistent(format!(
                    "cell ({}, {}) outside the grid",
                    doc.config_index, doc.timestep
                )));
            }
            let idx = doc.config_index * self.timesteps + doc.timestep;
            if std::mem::replace(&mut seen[idx], true) {
                return Err(Error::Inconsistent(format!(
                    "cell ({}, {}) listed twice",
                    doc.config_index, doc.timestep
                )));
            }
            if doc.infeasible {
                continue;
            }
            let (Some(losses_mw), Some(violations), Some(min_v), Some(max_v)) =
                (doc.losses_mw, doc.violations, doc.min_v, doc.max_v)
            else {
                return Err(Error::Inconsistent(format!(
                    "feasible cell ({}, {}) lacks values",
                    doc.config_index, doc.timestep
                )));
            };
            cells[idx] = Cell {
                losses_mw,
                violations,
                infeasible: false,
                extreme: doc.extreme,
                min_v,
                max_v,
            };
        }
        Ok(ObjectiveGrid {
            metadata: self.metadata,
            config_count: self.config_count,
            timesteps: self.timesteps,
            cells,
        })
    }
}

/// Configuration rows by timestep columns; empty entries are infeasible.
pub fn heatmap_csv(grid: &ObjectiveGrid, objective: Objective) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["config".to_string()];
    header.extend((0..grid.timesteps).map(|t| t.to_string()));
    w.write_record(&header).expect("in-memory write");
    for c in 0..grid.config_count {
        let label = grid
            .metadata
            .configs
            .get(c)
            .cloned()
            .unwrap_or_else(|| c.to_string());
        let mut row = vec![label];
        row.extend(
            grid.row(c)
                .iter()
                .map(|cell| match (cell.infeasible, objective) {
                    (true, _) => String::new(),
                    (false, Objective::Losses) => cell.losses_mw.to_string(),
                    (false, Objective::Violations) => cell.violations.to_string(),
                }),
        );
        w.write_record(&row).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 csv")
}

pub fn write_heatmaps(grid: &ObjectiveGrid, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    for (objective, name) in [
        (Objective::Losses, LOSSES_CSV),
        (Objective::Violations, VIOLATIONS_CSV),
    ] {
        let path = dir.join(name);
        fs::write(&path, heatmap_csv(grid, objective)).map_err(|e| Error::io(&path, e))?;
        written.push(path);
    }
    Ok(written)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("artifact serializes");
    text.push('\n');
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })
}

pub fn read_grid(path: &Path) -> Result<ObjectiveGrid> {
    read_json::<GridDoc>(path)?.into_grid()
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Runs `f` on a dedicated rayon pool with `jobs` workers, or on the global
/// pool when `jobs` is `None`.
pub fn with_jobs<T: Send>(jobs: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match jobs {
        None => Ok(f()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .map_err(|e| Error::ThreadPool(e.to_string()))?;
            Ok(pool.install(f))
        }
    }
}

/// Reduced graph and radial set for a case.
pub fn radial_stage(case: &NetworkCase, prune: bool) -> Result<(ReducedGraph, RadialSet)> {
    let graph = reduce(case);
    let radial = enumerate_radial_with(&graph, EnumerationOptions { prune })?;
    Ok((graph, radial))
}

/// Checks that a radial set was produced for this case's switch graph.
pub fn check_switch_order(graph: &ReducedGraph, radial: &RadialSet) -> Result<()> {
    if graph.switch_order() != radial.switch_order {
        return Err(Error::Inconsistent(format!(
            "configurations are for switches {:?} but the case has {:?}",
            radial.switch_order,
            graph.switch_order()
        )));
    }
    Ok(())
}

/// Merit tables from a grid and the configurations that produced it.
pub fn evaluate_stage(
    grid: &ObjectiveGrid,
    configs: &ConfigsDoc,
    settings: &EvaluationSettings,
) -> Result<MeritReport> {
    if grid.metadata.configs != configs.configs
        || grid.metadata.switch_order != configs.switch_order
    {
        return Err(Error::Inconsistent(
            "grid rows do not match the configuration list".into(),
        ));
    }
    let radial = configs.configurations()?;
    let cases = enumerate_cases(configs.switch_order.len(), 2);
    Ok(build_merit_tables(
        grid,
        &radial,
        &cases,
        &configs.switch_names,
        settings,
    )?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineOptions {
    pub grid: GridOptions,
    pub evaluation: EvaluationSettings,
    pub prune: bool,
    /// Worker threads; `None` uses all available parallelism.
    pub jobs: Option<usize>,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        Self {
            grid: GridOptions::default(),
            evaluation: EvaluationSettings::default(),
            prune: true,
            jobs: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Load,
    Radial,
    PowerFlow,
    Evaluation,
    Report,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimings {
    pub radial_s: f64,
    pub power_flow_s: f64,
    pub evaluation_s: f64,
}

/// In-memory results of one pipeline run.
#[derive(Debug, Clone)]
pub struct PipelineRun {
    pub graph: ReducedGraph,
    pub radial: RadialSet,
    pub configs: ConfigsDoc,
    pub grid: ObjectiveGrid,
    pub merit: MeritReport,
    pub timings: StageTimings,
}

#[derive(Debug)]
pub struct StageFailure {
    pub stage: Stage,
    pub error: Error,
    pub timings: StageTimings,
}

/// Radial enumeration, power flow and evaluation without touching disk.
/// Runs on the current rayon pool.
pub fn execute(
    case: &NetworkCase,
    profiles: &ProfileSet,
    options: &PipelineOptions,
) -> std::result::Result<PipelineRun, StageFailure> {
    let mut timings = StageTimings::default();
    let fail = |stage, error, timings| StageFailure {
        stage,
        error,
        timings,
    };

    let clock = Instant::now();
    let (graph, radial) =
        radial_stage(case, options.prune).map_err(|e| fail(Stage::Radial, e, timings))?;
    timings.radial_s = clock.elapsed().as_secs_f64();

    let clock = Instant::now();
    let grid = run_grid(case, &radial, profiles, &options.grid)
        .map_err(|e| fail(Stage::PowerFlow, e.into(), timings))?;
    timings.power_flow_s = clock.elapsed().as_secs_f64();

    let clock = Instant::now();
    let configs = ConfigsDoc::new(case, &graph, &radial);
    let merit = evaluate_stage(&grid, &configs, &options.evaluation)
        .map_err(|e| fail(Stage::Evaluation, e, timings))?;
    timings.evaluation_s = clock.elapsed().as_secs_f64();

    Ok(PipelineRun {
        graph,
        radial,
        configs,
        grid,
        merit,
        timings,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileDigest {
    pub name: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub inputs: Vec<FileDigest>,
    pub solver: SolverSettings,
    pub extreme_dev: f64,
    pub timestep_hours: f64,
    pub jobs: usize,
    pub durations: StageTimings,
    /// Output files relative to the manifest's directory.
    pub artifacts: Vec<FileDigest>,
    pub status: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failed_stage: Option<Stage>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, thiserror::Error)]
#[error("{stage:?} stage failed: {error}")]
pub struct PipelineFailure {
    pub stage: Stage,
    pub error: Error,
    /// Partial manifest, also written to the output directory when possible.
    pub manifest: Box<RunManifest>,
}

impl PipelineFailure {
    pub fn exit_code(&self) -> i32 {
        self.error.exit_code()
    }
}

/// Loads inputs, runs every stage and writes all artifacts plus
/// `manifest.json` into `out_dir`.
pub fn run_pipeline(
    case_path: &Path,
    profiles_path: &Path,
    out_dir: &Path,
    options: &PipelineOptions,
) -> std::result::Result<RunManifest, PipelineFailure> {
    let jobs = options
        .jobs
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let mut manifest = RunManifest {
        tool_version: TOOL_VERSION.to_string(),
        inputs: Vec::new(),
        solver: options.grid.solver,
        extreme_dev: options.grid.extreme_dev,
        timestep_hours: options.evaluation.timestep_hours,
        jobs,
        durations: StageTimings::default(),
        artifacts: Vec::new(),
        status: "failed".into(),
        failed_stage: None,
        error: None,
    };

    let abort = |mut manifest: RunManifest, stage: Stage, error: Error| {
        manifest.failed_stage = Some(stage);
        manifest.error = Some(error.to_string());
        let _ = write_json(&out_dir.join(MANIFEST_FILE), &manifest);
        PipelineFailure {
            stage,
            error,
            manifest: Box::new(manifest),
        }
    };

    let loaded = (|| -> Result<(NetworkCase, ProfileSet, Vec<FileDigest>)> {
        let case = load_case(case_path)?;
        let profiles = load_profiles(profiles_path)?;
        let inputs = vec![
            FileDigest {
                name: "case".into(),
                sha256: sha256_file(case_path)?,
            },
            FileDigest {
                name: "profiles".into(),
                sha256: sha256_file(profiles_path)?,
            },
        ];
        Ok((case, profiles, inputs))
    })();
    let (case, profiles, inputs) = match loaded {
        Ok(v) => v,
        Err(e) => return Err(abort(manifest, Stage::Load, e)),
    };
    manifest.inputs = inputs;

    let run = match with_jobs(Some(jobs), || execute(&case, &profiles, options)) {
        Ok(Ok(run)) => run,
        Ok(Err(failure)) => {
            manifest.durations = failure.timings;
            return Err(abort(manifest, failure.stage, failure.error));
        }
        Err(e) => return Err(abort(manifest, Stage::Load, e)),
    };
    manifest.durations = run.timings;

    let written = (|| -> Result<Vec<FileDigest>> {
        write_json(&out_dir.join(CONFIGS_FILE), &run.configs)?;
        write_json(&out_dir.join(REDUCED_FILE), &run.graph)?;
        write_json(&out_dir.join(GRID_FILE), &GridDoc::from(&run.grid))?;
        write_json(&out_dir.join(MERIT_FILE), &run.merit)?;
        write_heatmaps(&run.grid, out_dir)?;
        [
            CONFIGS_FILE,
            REDUCED_FILE,
            GRID_FILE,
            MERIT_FILE,
            LOSSES_CSV,
            VIOLATIONS_CSV,
        ]
        .iter()
        .map(|name| {
            Ok(FileDigest {
                name: name.to_string(),
                sha256: sha256_file(&out_dir.join(name))?,
            })
        })
        .collect()
    })();
    match written {
        Ok(artifacts) => manifest.artifacts = artifacts,
        Err(e) => return Err(abort(manifest, Stage::Report, e)),
    }

    manifest.status = "ok".into();
    write_json(&out_dir.join(MANIFEST_FILE), &manifest)
        .map_err(|e| abort(manifest.clone(), Stage::Report, e))?;
    Ok(manifest)
}

/// Recomputes artifact digests in `out_dir` and returns the names that no
/// longer match the manifest.
pub fn verify_manifest(out_dir: &Path) -> Result<Vec<String>> {
    let manifest: RunManifest = read_json(&out_dir.join(MANIFEST_FILE))?;
    let mut mismatched = Vec::new();
    for artifact in &manifest.artifacts {
        let path = out_dir.join(&artifact.name);
        let ok = path.exists() && sha256_file(&path)? == artifact.sha256;
        if !ok {
            mismatched.push(artifact.name.clone());
        }
    }
    Ok(mismatched)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StageSummary {
    pub mean_s: f64,
    pub min_s: f64,
    pub max_s: f64,
}

impl StageSummary {
    fn from_samples(samples: &[f64]) -> Self {
        let n = samples.len() as f64;
        Self {
            mean_s: samples.iter().sum::<f64>() / n,
            min_s: samples.iter().copied().fold(f64::INFINITY, f64::min),
            max_s: samples.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchSummary {
    pub repetitions: usize,
    pub jobs: usize,
    pub radial_configs: usize,
    pub buses: usize,
    pub switches: usize,
    pub radial: StageSummary,
    pub power_flow: StageSummary,
    pub evaluation: StageSummary,
    /// Whether mean power-flow time exceeds the other stages combined.
    pub power_flow_dominates: bool,
}

/// Repeats the in-memory pipeline and summarises per-stage wall-clock time.
pub fn bench(
    case: &NetworkCase,
    profiles: &ProfileSet,
    repetitions: usize,
    options: &PipelineOptions,
) -> Result<BenchSummary> {
    let repetitions = repetitions.max(1);
    let jobs = options
        .jobs
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let runs = with_jobs(Some(jobs), || {
        (0..repetitions)
            .map(|_| execute(case, profiles, options).map_err(|f| f.error))
            .collect::<Result<Vec<_>>>()
    })??;
    let pick =
        |f: fn(&StageTimings) -> f64| -> Vec<f64> { runs.iter().map(|r| f(&r.timings)).collect() };
    let radial = StageSummary::from_samples(&pick(|t| t.radial_s));
    let power_flow = StageSummary::from_samples(&pick(|t| t.power_flow_s));
    let evaluation = StageSummary::from_samples(&pick(|t| t.evaluation_s));
    Ok(BenchSummary {
        repetitions,
        jobs,
        radial_configs: runs[0].radial.len(),
        buses: case.buses.len(),
        switches: runs[0].radial.switch_order.len(),
        radial,
        power_flow,
        evaluation,
        power_flow_dominates: power_flow.mean_s > radial.mean_s + evaluation.mean_s,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_sample_summary() {
        let s = StageSummary::from_samples(&[0.5]);
        assert_eq!((s.mean_s, s.min_s, s.max_s), (0.5, 0.5, 0.5));
    }

    #[test]
    fn grid_doc_rejects_duplicates() {
        let doc = GridDoc {
            metadata: GridMetadata {
                switch_order: vec![],
                configs: vec!["".into()],
                tolerance: 1e-8,
                max_iterations: 30,
                extreme_dev: 0.1,
                base_mva: 1.0,
            },
            config_count: 1,
            timesteps: 2,
            cells: vec![
                CellDoc {
                    config_index: 0,
                    timestep: 0,
                    losses_mw: None,
                    violations: None,
                    infeasible: true,
                    extreme: true,
                    min_v: None,
                    max_v: None,
                };
                2
            ],
        };
        assert!(matches!(doc.into_grid(), Err(Error::Inconsistent(_))));
    }
}
