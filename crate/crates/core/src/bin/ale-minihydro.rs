use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use ale_minihydro::driver::{
    bench_complexity, bench_strong_scaling, bench_throughput, complexity_csv, problem_preset, run_ale, scaling_csv,
    throughput_csv, worked_example, write_outputs, DriverError, QuadratureConvention, RunConfig, EXIT_CONFIG,
};

#[derive(Parser)]
#[command(name = "ale-minihydro", version, about = "Matrix-free high-order ALE hydrodynamics mini-app")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run Lagrange cycles with periodic mesh optimisation and remap.
    Run(RunArgs),
    /// PA vs FA storage and FLOP counts per element.
    BenchComplexity {
        #[arg(long, default_value = "1,2,3,4")]
        orders: String,
        #[arg(long, default_value = "2,3")]
        dims: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Throughput per phase over orders and mesh sizes.
    BenchThroughput {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, default_value = "1,2,3")]
        orders: String,
        /// Zone counts, e.g. `--size 4x2 --size 16x8`; defaults to 1 element,
        /// half the preset size and the preset size.
        #[arg(long = "size")]
        sizes: Vec<String>,
    },
    /// Time per cycle against the number of worker threads.
    BenchScaling {
        #[command(flatten)]
        run: RunArgs,
        /// Defaults to 1, 2, 4, ... up to the available parallelism.
        #[arg(long)]
        workers: Option<String>,
    },
}

/// Every flag mirrors a key of the configuration file.
#[derive(Args)]
struct RunArgs {
    /// key=value file applied before the flags.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    order: Option<String>,
    #[arg(long)]
    zones: Option<String>,
    /// `seq` or `threads:N`.
    #[arg(long)]
    exec: Option<String>,
    #[arg(long)]
    cycles: Option<String>,
    #[arg(long)]
    t_final: Option<String>,
    #[arg(long)]
    cfl: Option<String>,
    #[arg(long)]
    dt_min: Option<String>,
    #[arg(long)]
    dt_max: Option<String>,
    #[arg(long)]
    cg_rel_tol: Option<String>,
    #[arg(long)]
    ale: Option<String>,
    #[arg(long)]
    remap_every: Option<String>,
    #[arg(long)]
    min_det_trigger: Option<String>,
    #[arg(long)]
    tmop_iters: Option<String>,
    #[arg(long)]
    remap_steps: Option<String>,
    #[arg(long)]
    pseudo_cfl: Option<String>,
    #[arg(long)]
    limiter: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    mem_report: bool,
}

impl RunArgs {
    fn config(&self) -> Result<RunConfig, DriverError> {
        let mut cfg = RunConfig::default();
        if let Some(path) = &self.config {
            cfg.apply_file(path)?;
        }
        let flags = [
            ("preset", &self.preset),
            ("order", &self.order),
            ("zones", &self.zones),
            ("exec", &self.exec),
            ("cycles", &self.cycles),
            ("t-final", &self.t_final),
            ("cfl", &self.cfl),
            ("dt-min", &self.dt_min),
            ("dt-max", &self.dt_max),
            ("cg-rel-tol", &self.cg_rel_tol),
            ("ale", &self.ale),
            ("remap-every", &self.remap_every),
            ("min-det-trigger", &self.min_det_trigger),
            ("tmop-iters", &self.tmop_iters),
            ("remap-steps", &self.remap_steps),
            ("pseudo-cfl", &self.pseudo_cfl),
            ("limiter", &self.limiter),
        ];
        for (key, value) in flags {
            if let Some(v) = value {
                cfg.set(key, v)?;
            }
        }
        if let Some(out) = &self.out {
            cfg.out = Some(out.clone());
        }
        if self.mem_report {
            cfg.mem_report = true;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn list(value: &str, what: &str) -> Result<Vec<usize>, DriverError> {
    value
        .split(',')
        .map(|s| s.trim().parse::<usize>())
        .collect::<Result<Vec<_>, _>>()
        .map_err(|_| DriverError::Config(format!("invalid {what} list `{value}`")))
}

fn emit(out: Option<&Path>, file: &str, text: &str) -> Result<(), DriverError> {
    print!("{text}");
    if let Some(dir) = out {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join(file), text)?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), DriverError> {
    match cli.command {
        Command::Run(args) => {
            let cfg = args.config()?;
            let outcome = run_ale(&cfg)?;
            let c = &outcome.conservation;
            let t = &outcome.timings;
            println!(
                "{} p={} dofs={} cycles={} remaps={} t={:.6e}",
                cfg.preset,
                cfg.order,
                outcome.dofs,
                outcome.cycles.len(),
                outcome.remaps.len(),
                outcome.state.t
            );
            println!(
                "mass drift {:.3e}, energy drift {:.3e}, clamped energy dofs {}",
                c.mass_drift, c.energy_drift, c.clamped_energy_dofs
            );
            println!(
                "time: lagrange {:.3}s, meshopt {:.3}s, remap {:.3}s, total {:.3}s",
                t.lagrange_seconds, t.meshopt_seconds, t.remap_seconds, t.total_seconds
            );
            if cfg.mem_report {
                for a in &outcome.memory {
                    println!(
                        "arena {}: current {} B, peak {} B, capacity {} B, allocs {}, releases {}, growth events {}",
                        a.arena, a.current, a.peak, a.capacity, a.alloc_count, a.release_count, a.growth_events
                    );
                }
            }
            if let Some(dir) = &cfg.out {
                write_outputs(&outcome, dir)?;
            }
        }
        Command::BenchComplexity { orders, dims, out } => {
            let orders = list(&orders, "order")?;
            let dims = list(&dims, "dimension")?;
            if dims.iter().any(|d| !(2..=3).contains(d)) || orders.iter().any(|p| !(1..=8).contains(p)) {
                return Err(DriverError::Config("dims must be 2 or 3 and orders in 1..=8".into()));
            }
            for (conv, file) in [
                (QuadratureConvention::Matched, "complexity_matched.csv"),
                (QuadratureConvention::Default, "complexity_default.csv"),
            ] {
                let report = bench_complexity(&orders, &dims, conv)?;
                println!("# quadrature {conv:?}");
                emit(out.as_deref(), file, &complexity_csv(&report))?;
                for s in &report.slopes {
                    println!(
                        "# {}D {:<12} slope {:.3} (expected {}){}",
                        s.dim,
                        s.quantity,
                        s.measured,
                        s.expected,
                        if s.within { "" } else { " outside 10%" }
                    );
                }
            }
            let w = worked_example()?;
            println!(
                "# d={} p={} NE={}: nominal FA {} vs PA {} ({:.1}x, {}); measured FA {} vs PA {} ({:.1}x)",
                w.dim, w.p, w.elements, w.nominal_fa, w.nominal_pa, w.nominal_ratio, w.quote, w.measured_fa, w.measured_pa,
                w.measured_ratio
            );
        }
        Command::BenchThroughput { run, orders, sizes } => {
            let cfg = run.config()?;
            let orders = list(&orders, "order")?;
            let sizes = if sizes.is_empty() {
                let preset = problem_preset(&cfg.preset)?;
                let full = cfg.zones.clone().unwrap_or(preset.default_zones);
                let half: Vec<usize> = full.iter().map(|&n| (n / 2).max(1)).collect();
                let mut s = vec![vec![1; full.len()], half, full];
                s.dedup();
                s
            } else {
                sizes
                    .iter()
                    .map(|s| {
                        s.split(['x', ','])
                            .map(|v| v.trim().parse::<usize>())
                            .collect::<Result<Vec<_>, _>>()
                            .map_err(|_| DriverError::Config(format!("invalid size `{s}`")))
                    })
                    .collect::<Result<Vec<_>, _>>()?
            };
            let records = bench_throughput(&cfg, &orders, &sizes)?;
            emit(cfg.out.as_deref(), "throughput.csv", &throughput_csv(&records))?;
        }
        Command::BenchScaling { run, workers } => {
            let cfg = run.config()?;
            let workers = match workers {
                Some(w) => list(&w, "worker")?,
                None => {
                    let max = std::thread::available_parallelism().map_or(1, |n| n.get());
                    std::iter::successors(Some(1usize), |w| Some(w * 2)).take_while(|&w| w <= max).collect()
                }
            };
            if workers.contains(&0) {
                return Err(DriverError::Config("worker counts must be positive".into()));
            }
            let rows = bench_strong_scaling(&cfg, &workers)?;
            emit(cfg.out.as_deref(), "scaling.csv", &scaling_csv(&rows))?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { 0 };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
