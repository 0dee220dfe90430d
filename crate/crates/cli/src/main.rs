use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use desbench_core::controllers::{ControllerBinding, DEFAULT_MODEL_RETRIES, DEFAULT_TIMEOUT_SECS};
use desbench_core::instance::{load_instance, resolve_suite, validate_instance, SHIPPED, SUITES};
use desbench_core::protocol::ModeRegistry;
use desbench_core::runner::{run_case, run_suite, CaseStatus, LimitOverrides, RunSpec, SuiteReport};

#[derive(Parser)]
#[command(name = "desbench", version, about = "Event-driven factory scheduling benchmark runner")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every (instance, seed) case of a suite.
    RunSuite(RunArgs),
    /// Rerun a single case by its id.
    RunCase {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        case_id: String,
    },
    /// Run a suite against an external controller process.
    RunMas(RunArgs),
    /// Check instance documents or shipped instances.
    Validate {
        /// Shipped instance names, suite names or .toml paths.
        #[arg(required = true)]
        targets: Vec<String>,
    },
    /// List authority modes, shipped instances and suites.
    Modes {
        /// Extra mode definitions to register before listing.
        #[arg(long = "register-mode")]
        register: Vec<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
#[allow(clippy::enum_variant_names)]
enum RuleController {
    RuleGreedy,
    RuleFallback,
    RuleRandomSeeded,
}

#[derive(Clone, Copy, ValueEnum)]
enum LlmBackend {
    OpenaiCompat,
}

#[derive(Args)]
struct RunArgs {
    /// Suite name, shipped instance name or instance .toml path.
    #[arg(long)]
    suite: String,
    #[arg(long, default_value = "centralized")]
    authority_mode: String,
    /// TOML mode definitions made selectable through --authority-mode.
    #[arg(long = "register-mode")]
    register: Vec<PathBuf>,
    #[arg(long)]
    output_dir: PathBuf,
    /// Seed list such as `1-10`, `1,3,5` or `1-3,8`.
    #[arg(long, default_value = "1-10")]
    seeds: String,
    /// Concurrent episodes; defaults to min(cases, cores).
    #[arg(long)]
    jobs: Option<usize>,
    /// Orchestration framework label, stored as metadata only.
    #[arg(long)]
    framework: Option<String>,
    #[arg(long, value_enum, default_value = "rule-greedy")]
    controller: RuleController,
    #[arg(long, default_value_t = 0)]
    controller_seed: u64,
    /// Shell command of an external controller speaking line JSON.
    #[arg(long, num_args = 1..)]
    controller_command: Option<Vec<String>>,
    #[arg(long, default_value_t = DEFAULT_TIMEOUT_SECS)]
    controller_timeout: f64,
    #[arg(long, value_enum)]
    llm_backend: Option<LlmBackend>,
    #[arg(long)]
    llm_model: Option<String>,
    #[arg(long, env = "DESBENCH_LLM_BASE_URL")]
    llm_base_url: Option<String>,
    #[arg(long, default_value_t = DEFAULT_MODEL_RETRIES)]
    llm_retries: u32,
    #[arg(long)]
    horizon_limit: Option<u32>,
    #[arg(long)]
    no_progress_window: Option<u32>,
}

fn parse_seeds(text: &str) -> Result<Vec<u64>> {
    let mut out = Vec::new();
    for part in text.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        match part.split_once('-') {
            Some((a, b)) => {
                let (a, b): (u64, u64) = (a.trim().parse()?, b.trim().parse()?);
                if a > b {
                    bail!("empty seed range `{part}`");
                }
                out.extend(a..=b);
            }
            None => out.push(part.parse().with_context(|| format!("bad seed `{part}`"))?),
        }
    }
    Ok(out)
}

fn registry(extra: &[PathBuf]) -> Result<ModeRegistry> {
    let mut r = ModeRegistry::new();
    for path in extra {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        r.register_toml(&text).with_context(|| format!("registering {}", path.display()))?;
    }
    Ok(r)
}

impl RunArgs {
    fn binding(&self, require_external: bool) -> Result<ControllerBinding> {
        if let Some(cmd) = &self.controller_command {
            return Ok(ControllerBinding::ExternalProcess { command: cmd.join(" "), timeout_secs: self.controller_timeout });
        }
        if require_external {
            bail!("run-mas needs --controller-command");
        }
        if let Some(LlmBackend::OpenaiCompat) = self.llm_backend {
            let model = self.llm_model.clone().context("--llm-backend needs --llm-model")?;
            let base_url = self.llm_base_url.clone().context("--llm-backend needs --llm-base-url or DESBENCH_LLM_BASE_URL")?;
            return Ok(ControllerBinding::ModelService {
                base_url,
                model,
                api_key: std::env::var("OPENAI_API_KEY").ok(),
                timeout_secs: self.controller_timeout,
                retries: self.llm_retries,
            });
        }
        Ok(match self.controller {
            RuleController::RuleGreedy => ControllerBinding::RuleGreedy,
            RuleController::RuleFallback => ControllerBinding::RuleFallback,
            RuleController::RuleRandomSeeded => ControllerBinding::RuleRandomSeeded { seed: self.controller_seed },
        })
    }

    fn spec(&self, require_external: bool) -> Result<RunSpec> {
        let mode = registry(&self.register)?.get(&self.authority_mode)?.clone();
        Ok(RunSpec {
            suite: self.suite.clone(),
            mode,
            controller: self.binding(require_external)?,
            seeds: parse_seeds(&self.seeds)?,
            output_dir: self.output_dir.clone(),
            limits: LimitOverrides { horizon_limit: self.horizon_limit, no_progress_window: self.no_progress_window },
            jobs: self.jobs,
            framework: self.framework.clone(),
        })
    }
}

fn report(r: &SuiteReport) -> ExitCode {
    for c in &r.cases {
        match c.status {
            CaseStatus::Failed => println!("FAILED    {}  {}", c.case_id, c.error.as_deref().unwrap_or("")),
            CaseStatus::Skipped => println!("skipped   {}", c.case_id),
            CaseStatus::Completed => println!("completed {}", c.case_id),
        }
    }
    for s in &r.summaries {
        let m = &s.metrics;
        let fmt = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.3}"));
        println!(
            "{} {} {} seeds={} mk={} sr={} ds={} cm={} fb={}",
            s.instance,
            s.mode,
            s.controller,
            s.seeds,
            fmt(m.get("mk")),
            fmt(m.get("sr")),
            fmt(m.get("ds")),
            fmt(m.get("cm")),
            fmt(m.get("fb")),
        );
    }
    let failed = r.failed().count();
    if failed > 0 {
        eprintln!("{failed} case(s) failed");
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}

fn validate(targets: &[String]) -> Result<ExitCode> {
    let mut bad = 0;
    for t in targets {
        let path = std::path::Path::new(t);
        let loaded = if path.is_file() {
            std::fs::read_to_string(path).map_err(Into::into).and_then(|d| load_instance(&d)).map(|c| vec![c])
        } else {
            resolve_suite(t)
        };
        match loaded {
            Ok(configs) => {
                for c in configs {
                    let v = validate_instance(&c);
                    if v.is_empty() {
                        println!("ok      {t}: {} ({} cells, {} jobs)", c.id, c.hierarchy.cells.len(), c.job_count());
                    } else {
                        bad += 1;
                        for x in v {
                            println!("invalid {t}: {x}");
                        }
                    }
                }
            }
            Err(e) => {
                bad += 1;
                println!("invalid {t}: {e}");
            }
        }
    }
    Ok(if bad > 0 { ExitCode::FAILURE } else { ExitCode::SUCCESS })
}

fn modes(extra: &[PathBuf]) -> Result<ExitCode> {
    let r = registry(extra)?;
    println!("authority modes:");
    for m in r.list() {
        let q = if m.can_reject() { "accept_reject" } else { "accept_only" };
        println!("  {:<20} {:?} q={q} u={} p={} h={}", m.mode_id, m.routing_authority, m.u, m.p, m.h);
    }
    println!("instances:");
    for (stem, id, source, _) in SHIPPED {
        println!("  {id:<10} {stem:<10} {source}");
    }
    println!("suites:");
    for (name, members) in SUITES {
        println!("  {name:<26} {}", members.join(", "));
    }
    Ok(ExitCode::SUCCESS)
}

fn dispatch(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::RunSuite(a) => Ok(report(&run_suite(&a.spec(false)?)?)),
        Command::RunMas(a) => Ok(report(&run_suite(&a.spec(true)?)?)),
        Command::RunCase { run, case_id } => Ok(report(&run_case(&run.spec(false)?, &case_id)?)),
        Command::Validate { targets } => validate(&targets),
        Command::Modes { register } => modes(&register),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match dispatch(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
