use std::fs;
use std::path::PathBuf;
use std::time::Instant;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use modlink::linkage_graph::{render_proximity_matrix, weight_proximity};
use modlink::par::Execution;
use modlink::runner::{self, ExperimentSpec};

#[derive(Parser)]
#[command(name = "modlink", version, about = "Modularity-based linkage learning for neuroevolution")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment described by a JSON config file.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Maximum number of trials running at once.
        #[arg(long)]
        jobs: Option<usize>,
        /// Write results here instead of the config's `output_dir`.
        #[arg(long)]
        output_dir: Option<PathBuf>,
        /// Run everything on the calling thread.
        #[arg(long)]
        sequential: bool,
    },
    /// Compare Leiden with the exhaustive modularity optimum on random graphs.
    BenchLeiden {
        #[arg(long, default_value_t = 8)]
        vertices: usize,
        #[arg(long, default_value_t = 100)]
        graphs: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Probability of each extra edge beyond a random spanning tree.
        #[arg(long, default_value_t = 0.4)]
        density: f64,
        /// Print the report as JSON.
        #[arg(long)]
        json: bool,
    },
    /// Print the weight-proximity matrix of a network.
    InspectProximity {
        /// Layer sizes, e.g. `2,2,1`.
        #[arg(long)]
        spec: String,
        /// Whitespace-separated weights in flat order.
        #[arg(long)]
        weights: PathBuf,
        /// Also write the graph as a `u v weight` edge list.
        #[arg(long)]
        edges: Option<PathBuf>,
    },
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Run {
            config,
            jobs,
            output_dir,
            sequential,
        } => run(config, jobs, output_dir, sequential),
        Command::BenchLeiden {
            vertices,
            graphs,
            seed,
            density,
            json,
        } => {
            let report = runner::leiden_benchmark(vertices, graphs, density, seed, Execution::Parallel)?;
            if json {
                println!("{}", serde_json::to_string_pretty(&report)?);
            } else {
                print!("{}", report.render());
            }
            Ok(())
        }
        Command::InspectProximity { spec, weights, edges } => {
            let sizes = runner::parse_layer_sizes(&spec)?;
            let text = fs::read_to_string(&weights).with_context(|| format!("reading {}", weights.display()))?;
            let net = runner::network_from_weights(sizes, runner::parse_weights(&text)?)?;
            print!("{}", render_proximity_matrix(&net));
            if let Some(path) = edges {
                let file = fs::File::create(&path).with_context(|| format!("creating {}", path.display()))?;
                weight_proximity(&net).write_edge_list(std::io::BufWriter::new(file))?;
            }
            Ok(())
        }
    }
}

fn run(config: PathBuf, jobs: Option<usize>, output_dir: Option<PathBuf>, sequential: bool) -> Result<()> {
    let mut spec = ExperimentSpec::load(&config)
        .with_context(|| format!("loading {}", config.display()))?
        .with_env_overrides()?;
    if let Some(dir) = output_dir {
        spec.output_dir = dir;
    }
    let exec = if sequential { Execution::Sequential } else { Execution::Parallel };
    let started = Instant::now();
    let summary = runner::run_experiment(&spec, jobs, exec)?;
    println!(
        "{} trials in {:.1}s, output in {}",
        summary.trials.len(),
        started.elapsed().as_secs_f64(),
        summary.output_dir.display()
    );
    println!("{:<11} {:>7} {:>15} {:>18}", "setup", "trials", "mean_best_fit", "mean_cross_rate");
    for &setup in &spec.setups {
        let n = summary.of_setup(setup).count();
        println!(
            "{:<11} {:>7} {:>15.4} {:>18.4}",
            setup,
            n,
            summary.mean_final_best(setup),
            summary.mean_accepted_cross_rate(setup)
        );
    }
    Ok(())
}
