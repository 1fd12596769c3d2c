use std::fs;
use std::io::{self, BufWriter, Write};
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use cgmcts_core::harness::{serve_http, serve_lines, SyntheticEvaluator, SyntheticProposer};
use cgmcts_core::mcts::RunLog;
use cgmcts_core::runner::{
    ablation_grid, audit, execute, export_workflow, load_workflow, prepare, render_table, report_log, write_artifacts,
    ExecutorMode, RunConfig, RunError, RunReport,
};

#[derive(Parser)]
#[command(name = "cgmcts", version, about = "Constraint-guided tree search over workflow programs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// JSON run configuration; defaults apply to missing keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Search seed.
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// `synthetic` or `external:ADDR` (ADDR is `http://...` or `exec:CMD ARGS`).
    #[arg(long)]
    executor: Option<String>,
}

impl Common {
    fn load(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => {
                let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
                RunConfig::from_json(&text).with_context(|| format!("loading {}", path.display()))?
            }
            None => RunConfig::default(),
        };
        cfg.budget.seed = self.seed;
        if let Some(e) = &self.executor {
            cfg.executor = e.parse::<ExecutorMode>()?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run one optimization and write its artifacts.
    Run {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Summarize run logs; with two or more, also print variance ratios
    /// against the first.
    Report {
        #[arg(required = true)]
        logs: Vec<PathBuf>,
        /// Configuration supplying prices and the validation-set size.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Problems to average tokens and cost over.
        #[arg(long)]
        problems: Option<usize>,
        /// Print JSON instead of a table.
        #[arg(long)]
        json: bool,
    },
    /// Validate a workflow and write it in the canonical export format.
    /// Without --workflow, exports the hidden target of the configured
    /// synthetic suite.
    Export {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        workflow: Option<PathBuf>,
        #[arg(long, default_value = "out/workflow.json")]
        out: PathBuf,
    },
    /// Run the full configuration, each family alone and each stage alone.
    Ablate {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "out/ablation")]
        out: PathBuf,
    },
    /// Serve the synthetic proposer and evaluator over the adapter protocol.
    Serve {
        #[command(flatten)]
        common: Common,
        /// Address for HTTP, e.g. 127.0.0.1:8700.
        #[arg(long, conflicts_with = "stdio", required_unless_present = "stdio")]
        listen: Option<String>,
        /// Speak newline-delimited JSON on standard input and output.
        #[arg(long)]
        stdio: bool,
        /// Stop after this many HTTP requests.
        #[arg(long)]
        max_requests: Option<usize>,
    },
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run { common, out } => run(&common.load()?, &out),
        Command::Report {
            logs,
            config,
            problems,
            json,
        } => report(&logs, config.as_deref(), problems, json),
        Command::Export { common, workflow, out } => export(&common.load()?, workflow.as_deref(), &out),
        Command::Ablate { common, out } => ablate(&common.load()?, &out),
        Command::Serve {
            common,
            listen,
            stdio,
            max_requests,
        } => serve(&common.load()?, listen.as_deref(), stdio, max_requests),
    }
}

fn run(cfg: &RunConfig, out: &Path) -> Result<()> {
    let art = execute(cfg)?;
    write_artifacts(out, &art)?;
    let s = &art.summary;
    print!("{}", render_table(std::slice::from_ref(&s.report)));
    println!(
        "best validation reward {} | test accuracy {} | compliance {:.4} | tree {} nodes | library {} motifs",
        fmt_opt(s.best_validation_reward),
        fmt_opt(s.test_accuracy),
        s.best_compliance,
        s.tree_size,
        s.library_size
    );
    println!("artifacts in {}", out.display());
    Ok(())
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map_or("n/a".into(), |v| format!("{v:.4}"))
}

fn report(logs: &[PathBuf], config: Option<&Path>, problems: Option<usize>, json: bool) -> Result<()> {
    let cfg = match config {
        Some(p) => RunConfig::from_json(&fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?)?,
        None => RunConfig::default(),
    };
    let n = problems.unwrap_or_else(|| cfg.validation_size());
    let mut reports: Vec<RunReport> = Vec::new();
    for path in logs {
        let text = fs::read_to_string(path).map_err(|e| RunError::Io {
            path: path.clone(),
            source: e,
        })?;
        let log = RunLog::from_ndjson(&text).map_err(|e| RunError::LogParse {
            path: path.clone(),
            source: e,
        })?;
        reports.push(report_log(&path.display().to_string(), &log, n, &cfg.prices)?);
    }
    if json {
        println!("{}", serde_json::to_string_pretty(&reports)?);
    } else {
        print!("{}", render_table(&reports));
    }
    Ok(())
}

fn export(cfg: &RunConfig, workflow: Option<&Path>, out: &Path) -> Result<()> {
    let registry = cfg.registry()?;
    let program = match workflow {
        Some(path) => load_workflow(path, &registry)?,
        None => {
            if cfg.executor != ExecutorMode::Synthetic {
                bail!("exporting the hidden target needs the synthetic executor");
            }
            let p = prepare(cfg)?;
            match p.targets.into_iter().find(|(c, _)| *c == p.category) {
                Some((_, t)) => t,
                None => bail!("suite has no target for category {}", p.category),
            }
        }
    };
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    export_workflow(&program, &registry, out)?;
    println!("wrote {}", out.display());
    Ok(())
}

fn ablate(cfg: &RunConfig, out: &Path) -> Result<()> {
    let grid = ablation_grid(cfg);
    // cells are independent deterministic jobs
    let results = cfg.parallelism.map(&grid, |_, cell| execute(&cell.config));
    let mut reports = Vec::new();
    let mut violations = 0;
    for (cell, result) in grid.iter().zip(results) {
        let art = result.with_context(|| format!("ablation cell {}", cell.name))?;
        write_artifacts(&out.join(&cell.name), &art)?;
        let issues = audit(&art.outcome.log, &cell.config.families, &cell.config.stages);
        for i in &issues {
            eprintln!("{}: {i}", cell.name);
        }
        violations += issues.len();
        let mut r = art.summary.report.clone();
        r.name = cell.name.clone();
        reports.push(r);
    }
    print!("{}", render_table(&reports));
    println!("{} cells, {violations} audit violations, artifacts in {}", grid.len(), out.display());
    if violations > 0 {
        bail!("ablation audit failed");
    }
    Ok(())
}

fn serve(cfg: &RunConfig, listen: Option<&str>, stdio: bool, max_requests: Option<usize>) -> Result<()> {
    let registry = cfg.registry()?;
    let mut proposer = SyntheticProposer::new(registry.clone(), cfg.suite.max_ops);
    proposer.distractors = cfg.suite.distractors;
    let evaluator = SyntheticEvaluator {
        registry,
        tolerance: cfg.tolerance,
    };
    if stdio {
        let stdin = io::stdin().lock();
        serve_lines(stdin, BufWriter::new(io::stdout().lock()), &proposer, &evaluator)?;
        return Ok(());
    }
    let addr = listen.expect("clap requires --listen without --stdio");
    let listener = TcpListener::bind(addr).with_context(|| format!("binding {addr}"))?;
    println!("listening on http://{}/", listener.local_addr()?);
    io::stdout().flush()?;
    serve_http(listener, &proposer, &evaluator, max_requests)?;
    Ok(())
}
