use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use dnr_core::objectives::{Objective, DEFAULT_EXTREME_DEV};
use dnr_core::powerflow::{run_grid, GridOptions};
use dnr_core::replacement::{EvaluationSettings, DEFAULT_TIMESTEP_HOURS};
use dnr_core::report::{
    self, check_switch_order, read_grid, read_json, with_jobs, write_heatmaps, write_json,
    ConfigsDoc, GridDoc, PipelineOptions,
};
use dnr_core::{load_case, load_profiles, Error};

#[derive(Parser)]
#[command(
    name = "dnr",
    version,
    about = "Distribution network reconfiguration and switch-replacement ranking"
)]
struct Cli {
    /// Worker threads (default: available parallelism).
    #[arg(long, global = true, env = "DNR_JOBS")]
    jobs: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Enumerate radial switch configurations.
    Radial {
        #[arg(long)]
        case: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Also write the reduced switch graph.
        #[arg(long)]
        dump_reduced: Option<PathBuf>,
        /// Disable cycle-group pruning.
        #[arg(long)]
        no_prune: bool,
    },
    /// Run power flow over every radial configuration and timestep.
    Flow {
        #[arg(long)]
        case: PathBuf,
        #[arg(long)]
        configs: PathBuf,
        #[arg(long)]
        profiles: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = DEFAULT_EXTREME_DEV)]
        extreme_dev: f64,
    },
    /// Rank switch replacements from a computed grid.
    Evaluate {
        #[arg(long)]
        grid: PathBuf,
        #[arg(long)]
        configs: PathBuf,
        #[command(flatten)]
        eval: EvalArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Export heatmap matrices from a grid.
    Report {
        #[arg(long)]
        grid: PathBuf,
        #[arg(long)]
        heatmaps: PathBuf,
    },
    /// Run every stage and write all artifacts plus a manifest.
    Run {
        #[arg(long)]
        case: PathBuf,
        #[arg(long)]
        profiles: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, default_value_t = DEFAULT_EXTREME_DEV)]
        extreme_dev: f64,
        #[command(flatten)]
        eval: EvalArgs,
        #[arg(long)]
        no_prune: bool,
    },
    /// Time each stage over repeated runs.
    Bench {
        #[arg(long)]
        case: PathBuf,
        #[arg(long)]
        profiles: PathBuf,
        #[arg(long, default_value_t = 10)]
        repetitions: usize,
        /// Write the summary as JSON here as well as printing it.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long, value_enum, default_value_t = ObjectiveArg::Both)]
    objective: ObjectiveArg,
    #[arg(long, default_value_t = DEFAULT_TIMESTEP_HOURS)]
    timestep_hours: f64,
    /// Include every case evaluation, not just the per-size winners.
    #[arg(long)]
    full: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum ObjectiveArg {
    Losses,
    Violations,
    Both,
}

impl EvalArgs {
    fn settings(&self) -> EvaluationSettings {
        let objectives = match self.objective {
            ObjectiveArg::Losses => vec![Objective::Losses],
            ObjectiveArg::Violations => vec![Objective::Violations],
            ObjectiveArg::Both => Objective::ALL.to_vec(),
        };
        EvaluationSettings {
            timestep_hours: self.timestep_hours,
            objectives,
            full: self.full,
        }
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    let jobs = cli.jobs;
    match cli.command {
        Command::Radial {
            case,
            out,
            dump_reduced,
            no_prune,
        } => {
            let case = load_case(&case)?;
            let (graph, radial) = with_jobs(jobs, || report::radial_stage(&case, !no_prune))??;
            if let Some(path) = dump_reduced {
                write_json(&path, &graph)?;
            }
            write_json(&out, &ConfigsDoc::new(&case, &graph, &radial))?;
            let s = radial.stats;
            println!(
                "{} of {} configurations radial ({:.0}% discarded)",
                s.radial,
                s.candidates,
                s.discarded_pct()
            );
        }
        Command::Flow {
            case,
            configs,
            profiles,
            out,
            extreme_dev,
        } => {
            let case = load_case(&case)?;
            let profiles = load_profiles(&profiles)?;
            let doc: ConfigsDoc = read_json(&configs)?;
            let radial = doc.radial_set()?;
            check_switch_order(&dnr_core::reduce(&case), &radial)?;
            let options = GridOptions {
                extreme_dev,
                ..GridOptions::default()
            };
            let grid = with_jobs(jobs, || run_grid(&case, &radial, &profiles, &options))??;
            let infeasible = grid.cells.iter().filter(|c| c.infeasible).count();
            write_json(&out, &GridDoc::from(&grid))?;
            println!(
                "{} x {} cells solved, {} infeasible",
                grid.config_count, grid.timesteps, infeasible
            );
        }
        Command::Evaluate {
            grid,
            configs,
            eval,
            out,
        } => {
            let grid = read_grid(&grid)?;
            let doc: ConfigsDoc = read_json(&configs)?;
            let merit = with_jobs(jobs, || {
                report::evaluate_stage(&grid, &doc, &eval.settings())
            })??;
            write_json(&out, &merit)?;
            println!("start configuration {}", merit.start.bits);
            for table in &merit.tables {
                for row in &table.rows {
                    println!(
                        "{:<10} k={} {:<24} total={:.6} {} reduction={}",
                        table.objective.name(),
                        row.k,
                        row.rs_set.join("+"),
                        row.total,
                        table.unit,
                        row.reduction_pct
                            .map_or_else(|| "n/a".into(), |p| format!("{p:.2}%"))
                    );
                }
            }
        }
        Command::Report { grid, heatmaps } => {
            let grid = read_grid(&grid)?;
            for path in write_heatmaps(&grid, &heatmaps)? {
                println!("{}", path.display());
            }
        }
        Command::Run {
            case,
            profiles,
            out_dir,
            extreme_dev,
            eval,
            no_prune,
        } => {
            let options = PipelineOptions {
                grid: GridOptions {
                    extreme_dev,
                    ..GridOptions::default()
                },
                evaluation: eval.settings(),
                prune: !no_prune,
                jobs,
            };
            let manifest = report::run_pipeline(&case, &profiles, &out_dir, &options)
                .map_err(|failure| failure.error)?;
            let d = manifest.durations;
            println!(
                "radial {:.3}s, power flow {:.3}s, evaluation {:.3}s -> {}",
                d.radial_s,
                d.power_flow_s,
                d.evaluation_s,
                out_dir.display()
            );
        }
        Command::Bench {
            case,
            profiles,
            repetitions,
            out,
        } => {
            let case = load_case(&case)?;
            let profiles = load_profiles(&profiles)?;
            let options = PipelineOptions {
                jobs,
                ..PipelineOptions::default()
            };
            let summary = report::bench(&case, &profiles, repetitions, &options)?;
            for (name, s) in [
                ("radial", summary.radial),
                ("power_flow", summary.power_flow),
                ("evaluation", summary.evaluation),
            ] {
                println!(
                    "{name:<11} mean {:.6}s  min {:.6}s  max {:.6}s",
                    s.mean_s, s.min_s, s.max_s
                );
            }
            if !summary.power_flow_dominates {
                println!("note: power flow is not the dominant stage for this input");
            }
            if let Some(path) = out {
                write_json(&path, &summary)?;
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
