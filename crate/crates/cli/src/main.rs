//! `addcoal`: run the additive-coalescent constructions and the acceptance
//! suite from the command line.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use addcoal::bridge::{build_bridge, split_times, standard_coalescent_marginal, vervaat_transform};
use addcoal::coalescent::simulate;
use addcoal::levy::{simulate_path, Atom, LevySpec};
use addcoal::random_tree::{forest_chain, sample_uniform_tree};
use addcoal::smoluchowski::{brownian_density, EternalSolution};
use addcoal::sticky::{evolve, initial_system};
use addcoal::verify::run_criterion;
use addcoal::{RankedMassVector, RngStream};
use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde_json::{json, Map, Value};

#[derive(Parser, Debug)]
#[command(name = "addcoal", version, about = "Simulate and cross-check constructions of the additive coalescent")]
struct Cli {
    /// Master seed; every replicate uses its own substream.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Write output here instead of stdout.
    #[arg(long, global = true)]
    output: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Direct Markov chain from n clusters of mass 1/n: every state with its jump time.
    Coalescent {
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 1)]
        replicates: usize,
    },
    /// Forest chain of a uniform labelled tree on n vertices.
    Tree {
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 1)]
        replicates: usize,
    },
    /// Bridge fragmentation: split times of n equal jumps, or with --grid the
    /// Brownian-excursion marginal at standard time --t.
    Bridge {
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        grid: Option<usize>,
        #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
        t: f64,
        #[arg(long, default_value_t = 1)]
        replicates: usize,
    },
    /// Sampled paths of a spectrally negative Lévy process up to time --t.
    Levy {
        #[command(flatten)]
        spec: SpecArgs,
        #[arg(long, default_value_t = 1.0)]
        t: f64,
        #[arg(long, default_value_t = 0.01)]
        step: f64,
        #[arg(long, default_value_t = 1)]
        replicates: usize,
    },
    /// Eternal Smoluchowski solution at time --t: the Laplace functional on a
    /// q grid, or with --density the Brownian density on an x grid.
    Smoluchowski {
        #[command(flatten)]
        spec: SpecArgs,
        #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
        t: f64,
        #[arg(long)]
        density: bool,
        /// Number of grid points: x = k/20 with --density, log-spaced q in
        /// [1e-3, 1e3] otherwise.
        #[arg(long, default_value_t = 200)]
        grid: usize,
    },
    /// Sticky particles with Brownian initial velocities: the merge event log
    /// up to time --t.
    Sticky {
        /// Particles on the positive half-line.
        #[arg(long)]
        n: usize,
        /// Particle spacing and mass (default 1/n).
        #[arg(long)]
        step: Option<f64>,
        #[arg(long, default_value_t = 1.0)]
        t: f64,
        /// Zero-velocity particles on the negative half-line (default n).
        #[arg(long)]
        buffer: Option<usize>,
    },
    /// Run the acceptance suite and print a pass/fail table.
    Verify {
        /// Comma-separated criterion numbers (default: all).
        #[arg(long, value_delimiter = ',')]
        criteria: Vec<u32>,
    },
}

#[derive(Args, Debug)]
struct SpecArgs {
    #[arg(long, default_value_t = 1.0)]
    sigma2: f64,
    /// Jump atom `size,rate`; repeatable.
    #[arg(long = "atom", value_parser = parse_atom)]
    atoms: Vec<Atom>,
}

impl SpecArgs {
    fn spec(&self) -> Result<LevySpec> {
        Ok(LevySpec::new(self.sigma2, self.atoms.clone()).context("invalid Lévy spec")?)
    }
}

fn parse_atom(s: &str) -> std::result::Result<Atom, String> {
    let (x, rate) = s
        .split_once(',')
        .ok_or_else(|| format!("expected `size,rate`, got `{s}`"))?;
    let size = x.trim().parse::<f64>().map_err(|e| e.to_string())?;
    let rate = rate.trim().parse::<f64>().map_err(|e| e.to_string())?;
    Ok(Atom { size, rate })
}

/// Rows with a fixed set of scalar columns plus one variable-length list of
/// reals, written wide in CSV (`name1, name2, …`, padded with empty cells).
struct Table {
    columns: Vec<&'static str>,
    list: Option<&'static str>,
    rows: Vec<(Vec<Value>, Vec<f64>)>,
}

impl Table {
    fn new(columns: Vec<&'static str>, list: Option<&'static str>) -> Self {
        Self {
            columns,
            list,
            rows: Vec::new(),
        }
    }

    fn push(&mut self, fixed: Vec<Value>, list: Vec<f64>) {
        self.rows.push((fixed, list));
    }

    fn write(&self, format: Format, out: &mut dyn Write) -> io::Result<()> {
        match format {
            Format::Csv => self.write_csv(out),
            Format::Json => {
                let rows: Vec<Value> = self
                    .rows
                    .iter()
                    .map(|(fixed, list)| {
                        let mut obj = Map::new();
                        for (name, v) in self.columns.iter().zip(fixed) {
                            obj.insert(name.to_string(), v.clone());
                        }
                        if let Some(name) = self.list {
                            obj.insert(name.to_string(), json!(list));
                        }
                        Value::Object(obj)
                    })
                    .collect();
                serde_json::to_writer_pretty(&mut *out, &rows)?;
                writeln!(out)
            }
        }
    }

    fn write_csv(&self, out: &mut dyn Write) -> io::Result<()> {
        let width = self.rows.iter().map(|r| r.1.len()).max().unwrap_or(0);
        let mut header: Vec<String> = self.columns.iter().map(|c| c.to_string()).collect();
        if let Some(name) = self.list {
            header.extend((1..=width).map(|k| format!("{name}{k}")));
        }
        writeln!(out, "{}", header.join(","))?;
        for (fixed, list) in &self.rows {
            let mut cells: Vec<String> = fixed.iter().map(csv_cell).collect();
            if self.list.is_some() {
                cells.extend(list.iter().map(|&x| real(x)));
                cells.extend(std::iter::repeat_n(String::new(), width - list.len()));
            }
            writeln!(out, "{}", cells.join(","))?;
        }
        Ok(())
    }
}

fn real(x: f64) -> String {
    format!("{x:.16e}")
}

fn csv_cell(v: &Value) -> String {
    match v {
        Value::Number(n) if n.is_f64() => real(n.as_f64().expect("f64")),
        Value::Number(n) => n.to_string(),
        Value::String(s) => s.clone(),
        Value::Bool(b) => b.to_string(),
        _ => String::new(),
    }
}

fn positive(name: &str, value: usize) -> Result<usize> {
    if value == 0 {
        bail!("--{name} must be positive");
    }
    Ok(value)
}

fn positive_real(name: &str, value: f64) -> Result<f64> {
    if !(value > 0.0) || !value.is_finite() {
        bail!("--{name} must be a positive number, got {value}");
    }
    Ok(value)
}

fn per_replicate<T: Send>(
    count: usize,
    seed: u64,
    f: impl Fn(&mut RngStream) -> addcoal::Result<T> + Sync + Send,
) -> Result<Vec<T>> {
    (0..count)
        .into_par_iter()
        .map(|r| f(&mut RngStream::new(seed, r as u64)))
        .collect::<addcoal::Result<Vec<T>>>()
        .map_err(Into::into)
}

fn state_rows(
    table: &mut Table,
    replicate: usize,
    states: &[RankedMassVector],
    times: impl Iterator<Item = f64>,
) {
    for (k, (state, time)) in states.iter().zip(times).enumerate() {
        table.push(vec![json!(replicate), json!(k), json!(time)], state.masses().to_vec());
    }
}

fn run(cli: &Cli, out: &mut dyn Write) -> Result<bool> {
    let seed = cli.seed;
    let table = match &cli.command {
        Command::Coalescent { n, replicates } => {
            let n = positive("n", *n)?;
            let initial = RankedMassVector::monodisperse(n)?;
            let runs = per_replicate(positive("replicates", *replicates)?, seed, |rng| Ok(simulate(&initial, rng)))?;
            let mut table = Table::new(vec!["replicate", "step", "time"], Some("m"));
            for (r, run) in runs.iter().enumerate() {
                let times = std::iter::once(0.0).chain(run.jump_times.iter().copied());
                state_rows(&mut table, r, &run.states, times);
            }
            table
        }
        Command::Tree { n, replicates } => {
            let n = positive("n", *n)?;
            let chains = per_replicate(positive("replicates", *replicates)?, seed, |rng| {
                Ok(forest_chain(&sample_uniform_tree(n, rng)?, rng).states)
            })?;
            let mut table = Table::new(vec!["replicate", "step"], Some("m"));
            for (r, states) in chains.iter().enumerate() {
                for (k, s) in states.iter().enumerate() {
                    table.push(vec![json!(r), json!(k)], s.masses().to_vec());
                }
            }
            table
        }
        Command::Bridge { n, grid, t, replicates } => {
            let replicates = positive("replicates", *replicates)?;
            match (n, grid) {
                (Some(_), Some(_)) | (None, None) => bail!("bridge needs exactly one of --n or --grid"),
                (Some(n), None) => {
                    let masses = RankedMassVector::monodisperse(positive("n", *n)?)?;
                    let records = per_replicate(replicates, seed, |rng| {
                        split_times(&vervaat_transform(&build_bridge(&masses, rng)))
                    })?;
                    let mut table = Table::new(vec!["replicate", "step", "split_time"], Some("m"));
                    for (r, rec) in records.iter().enumerate() {
                        let times = std::iter::once(0.0).chain(rec.split_times.iter().copied());
                        state_rows(&mut table, r, &rec.states, times);
                    }
                    table
                }
                (None, Some(m)) => {
                    let m = positive("grid", *m)?;
                    if !t.is_finite() {
                        bail!("--t must be finite");
                    }
                    let states = per_replicate(replicates, seed, |rng| standard_coalescent_marginal(m, *t, rng))?;
                    let mut table = Table::new(vec!["replicate", "t"], Some("m"));
                    for (r, s) in states.iter().enumerate() {
                        table.push(vec![json!(r), json!(*t)], s.masses().to_vec());
                    }
                    table
                }
            }
        }
        Command::Levy { spec, t, step, replicates } => {
            let spec = spec.spec()?;
            let (t, step) = (positive_real("t", *t)?, positive_real("step", *step)?);
            let paths = per_replicate(positive("replicates", *replicates)?, seed, |rng| simulate_path(&spec, t, step, rng))?;
            let mut table = Table::new(vec!["replicate", "index", "time", "value"], None);
            for (r, p) in paths.iter().enumerate() {
                for (i, &v) in p.values().iter().enumerate() {
                    table.push(vec![json!(r), json!(i), json!(i as f64 * step), json!(v)], Vec::new());
                }
            }
            table
        }
        Command::Smoluchowski { spec, t, density, grid } => {
            let grid = positive("grid", *grid)?;
            if !t.is_finite() {
                bail!("--t must be finite");
            }
            if *density {
                if spec.sigma2 != 1.0 || !spec.atoms.is_empty() {
                    bail!("--density is available for the Brownian spec (sigma2 = 1, no atoms) only");
                }
                let mut table = Table::new(vec!["x", "density"], None);
                for k in 1..=grid {
                    let x = k as f64 / 20.0;
                    table.push(vec![json!(x), json!(brownian_density(*t, x)?)], Vec::new());
                }
                table
            } else {
                let sol = EternalSolution::new(spec.spec()?)?;
                let mut table = Table::new(vec!["q", "t", "laplace"], None);
                for k in 0..grid {
                    let q = 10f64.powf(-3.0 + 6.0 * k as f64 / (grid.max(2) - 1) as f64);
                    table.push(vec![json!(q), json!(*t), json!(sol.laplace_functional(q, *t)?)], Vec::new());
                }
                table
            }
        }
        Command::Sticky { n, step, t, buffer } => {
            let n = positive("n", *n)?;
            let dr = match step {
                Some(s) => positive_real("step", *s)?,
                None => 1.0 / n as f64,
            };
            let t = positive_real("t", *t)?;
            let mut rng = RngStream::new(seed, 0);
            let path = simulate_path(&LevySpec::brownian(), n as f64 * dr, dr, &mut rng)?;
            let system = initial_system(&path, n, dr, buffer.unwrap_or(n))?;
            let (log, _) = evolve(&system, t)?;
            match cli.format {
                Format::Csv => {
                    log.write_csv(&mut *out)?;
                    return Ok(true);
                }
                Format::Json => {
                    let mut table = Table::new(vec!["time", "left_id", "right_id", "location", "merged_mass"], None);
                    for e in log.events() {
                        table.push(
                            vec![json!(e.time), json!(e.left_id), json!(e.right_id), json!(e.location), json!(e.merged_mass)],
                            Vec::new(),
                        );
                    }
                    table
                }
            }
        }
        Command::Verify { criteria } => {
            let ids: Vec<u32> = if criteria.is_empty() { (1..=14).collect() } else { criteria.clone() };
            if let Some(bad) = ids.iter().find(|&&id| !(1..=14).contains(&id)) {
                bail!("unknown criterion {bad}; valid numbers are 1 to 14");
            }
            let mut all_passed = true;
            let mut table = Table::new(vec!["criterion", "name", "status", "detail"], None);
            for id in ids {
                let r = run_criterion(id, seed);
                all_passed &= r.passed;
                if cli.format == Format::Csv {
                    writeln!(out, "{r}")?;
                }
                table.push(
                    vec![json!(r.id), json!(r.name), json!(if r.passed { "PASS" } else { "FAIL" }), json!(r.detail)],
                    Vec::new(),
                );
            }
            if cli.format == Format::Json {
                table.write(Format::Json, out)?;
            } else {
                writeln!(out, "{}", if all_passed { "all criteria passed" } else { "some criteria FAILED" })?;
            }
            return Ok(all_passed);
        }
    };
    table.write(cli.format, out)?;
    Ok(true)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let mut out: Box<dyn Write> = match &cli.output {
        Some(path) => match File::create(path) {
            Ok(f) => Box::new(BufWriter::new(f)),
            Err(e) => {
                eprintln!("error: cannot create {}: {e}", path.display());
                return ExitCode::from(2);
            }
        },
        None => Box::new(BufWriter::new(io::stdout().lock())),
    };
    let outcome = run(&cli, &mut *out).and_then(|ok| {
        out.flush()?;
        Ok(ok)
    });
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
