//! `cogmap`: simulate or load an event stream, build a map, compare runs.
//!
//! Exit status: 0 success, 1 usage, 2 data error, 3 numerical failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use compact_cogmap::clustering::ClusterConfig;
use compact_cogmap::integration::IntegrationConfig;
use compact_cogmap::io;
use compact_cogmap::pipeline::{self, Mode, PipelineConfig, RunConfig, Source};
use compact_cogmap::simulator::{self, SimConfig, PRESETS};
use compact_cogmap::sparsifier::NeighborhoodConfig;
use compact_cogmap::Error;

#[derive(Parser)]
#[command(name = "cogmap", version, about = "Compact cognitive map builder")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a map from a simulated or recorded event stream.
    Run(RunArgs),
    /// Align two runs' metrics by stamp and print count ratios (a / b).
    Compare {
        /// Run directory or metrics CSV.
        a: PathBuf,
        /// Run directory or metrics CSV.
        b: PathBuf,
    },
    /// Write a simulated event stream without building a map.
    Simulate {
        #[command(flatten)]
        sim: SimArgs,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct SimArgs {
    /// Route preset.
    #[arg(long, default_value = "figure-eight", value_parser = clap::builder::PossibleValuesParser::new(PRESETS))]
    preset: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 3)]
    laps: usize,
    /// Drop odometry and loop noise.
    #[arg(long)]
    noiseless: bool,
}

impl SimArgs {
    fn config(&self) -> Result<SimConfig, Error> {
        let cfg = SimConfig::from_preset(&self.preset, self.seed, self.laps)?;
        Ok(if self.noiseless { cfg.noiseless() } else { cfg })
    }
}

#[derive(Args)]
struct RunArgs {
    #[arg(long, default_value = "compact-full", value_parser = ["standard", "compact-integration-only", "compact-full"])]
    mode: String,
    #[arg(long, default_value_t = 10.0)]
    alpha: f64,
    #[arg(long, default_value_t = 10.0)]
    beta: f64,
    #[arg(long, default_value_t = 3.746)]
    delta: f64,
    #[arg(long, default_value_t = 2.0)]
    t_interval: f64,
    #[arg(long, default_value_t = 100.0)]
    t_total: f64,
    #[arg(long, default_value_t = 0.05)]
    merge_radius: f64,
    #[arg(long, default_value_t = 0.02)]
    short_edge: f64,
    #[command(flatten)]
    sim: SimArgs,
    /// Event file to replay instead of simulating.
    #[arg(long = "in", conflicts_with_all = ["preset", "seed", "laps", "noiseless"])]
    input: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

impl RunArgs {
    fn config(&self) -> Result<RunConfig, Error> {
        let pipeline = PipelineConfig {
            mode: self.mode.parse::<Mode>()?,
            neighborhood: NeighborhoodConfig {
                alpha: self.alpha,
                beta: self.beta,
                delta_threshold: self.delta,
            },
            clustering: ClusterConfig {
                t_interval: self.t_interval,
                t_total: self.t_total,
            },
            integration: IntegrationConfig {
                merge_radius: self.merge_radius,
                short_edge_threshold: self.short_edge,
            },
            ..Default::default()
        };
        let source = match &self.input {
            Some(path) => Source::Events(path.clone()),
            None => Source::Simulated(self.sim.config()?),
        };
        Ok(RunConfig {
            pipeline,
            source,
            out_dir: self.out.clone(),
        })
    }
}

fn metrics_path(p: &Path) -> PathBuf {
    if p.is_dir() {
        p.join("metrics.csv")
    } else {
        p.to_path_buf()
    }
}

fn execute(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Run(args) => {
            let cfg = args.config()?;
            let report = pipeline::run(&cfg)?;
            let t = report.totals;
            println!("mode            {}", cfg.pipeline.mode);
            println!("vertices        {}", t.vertices);
            println!("edges           {}", t.edges);
            println!("events          {}", t.events);
            println!("loops added     {}", t.loops_added);
            println!("loops dropped   {}", t.loops_dropped);
            println!("optimizations   {}", t.optimize_calls);
            println!(
                "removed         {} vertices, {} edges",
                t.removed_vertices, t.removed_edges
            );
            println!("map             {}", report.map_path.display());
            println!("metrics         {}", report.metrics_path.display());
            if let Some(p) = report.events_path {
                println!("events file     {}", p.display());
            }
        }
        Command::Compare { a, b } => {
            let cmp = pipeline::compare_files(metrics_path(&a), metrics_path(&b))?;
            println!("stamp,vertices_a,vertices_b,vertex_ratio,edges_a,edges_b,edge_ratio");
            for r in &cmp.rows {
                println!(
                    "{},{},{},{},{},{},{}",
                    r.stamp,
                    r.vertices_a,
                    r.vertices_b,
                    r.vertex_ratio,
                    r.edges_a,
                    r.edges_b,
                    r.edge_ratio
                );
            }
            eprintln!(
                "final: vertex ratio {:.4}, edge ratio {:.4}, vertex delta {}, edge delta {}",
                cmp.last().vertex_ratio,
                cmp.last().edge_ratio,
                cmp.final_vertex_delta,
                cmp.final_edge_delta
            );
        }
        Command::Simulate { sim, out } => {
            let s = simulator::generate(&sim.config()?)?;
            io::write_events(&s.events, &out)?;
            eprintln!(
                "{} events, {} stations per lap -> {}",
                s.events.len(),
                s.stations_per_lap,
                out.display()
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("cogmap: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
