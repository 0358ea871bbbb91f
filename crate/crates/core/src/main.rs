use std::fs;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use objnav::catalog::{Catalog, RoomType};
use objnav::config::{load_knowledge_graph, Config, Setup};
use objnav::dump::{replay, TrajectoryDump};
use objnav::eval::{self, evaluate, Agent, EvalConfig, ModelAgent, OracleAgent, RandomAgent, TerminationMode};
use objnav::gradcheck::{run_suite, REL_TOLERANCE};
use objnav::knowledge::{build_partial_reward_matrix, write_adjacency, write_reward_matrix};
use objnav::model::GraphMode;
use objnav::reward::RewardConfig;
use objnav::trainer::{train, Checkpoint, TrainOutput};
use objnav::world::{generate_world_set, load_floorplan_dir, save_floorplan, Split, WorldSet};

/// Environment variable naming the root for default output directories.
const OUT_ENV: &str = "OBJNAV_OUT";

#[derive(Parser)]
#[command(name = "objnav", version, about = "Object-goal navigation with knowledge-graph context")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate train/test floorplans for every room type.
    GenFloorplans {
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Floorplans per room; two thirds go to the training split.
        #[arg(long, default_value_t = 30)]
        per_room: usize,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Build the knowledge graph and write its normalized adjacency.
    BuildGraph {
        /// Relation triples (subject<TAB>predicate<TAB>object); bundled when absent.
        #[arg(long = "in")]
        input: Option<PathBuf>,
        #[arg(long)]
        aliases: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        weighted: bool,
        /// Write the raw adjacency instead of the normalized one.
        #[arg(long)]
        raw: bool,
    },
    /// Count parent/target co-occurrence in training floorplans.
    BuildRewardMatrix {
        /// Directory of floorplan files.
        #[arg(long = "in")]
        input: PathBuf,
        /// Output directory, one matrix file per room.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1.0)]
        radius: f64,
    },
    /// Train a policy with asynchronous actor-critic workers
    Train(TrainArgs),
    /// Evaluate a checkpoint (or a random/oracle agent) on the test floorplans
    Eval(EvalArgs),
    /// Re-score a trajectory dump and print any differences.
    Replay { dump: PathBuf },
    /// Finite-difference check of every parameter block.
    Gradcheck {
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 10)]
        seeds: u64,
    },
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    episodes: Option<u64>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long, value_enum)]
    graph: Option<GraphArg>,
    /// Train without parent rewards.
    #[arg(long)]
    unshaped: bool,
    /// Continue from the checkpoint in the output directory.
    #[arg(long)]
    resume: bool,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    seed: u64,
    /// Required for the model agent.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Training config; defaults to config.toml beside the checkpoint.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = "sampled_done")]
    mode: String,
    /// Episodes per room.
    #[arg(long)]
    episodes: Option<usize>,
    #[arg(long, value_enum, default_value_t = AgentArg::Model)]
    agent: AgentArg,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write trajectory dumps of the first N episodes of every room.
    #[arg(long, default_value_t = 0)]
    dump: usize,
}

#[derive(Clone, Copy, ValueEnum)]
enum GraphArg {
    Full,
    NoContext,
    Zeroed,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum AgentArg {
    Model,
    Random,
    Oracle,
}

fn out_root() -> PathBuf {
    std::env::var_os(OUT_ENV).map_or_else(|| PathBuf::from("runs"), PathBuf::from)
}

fn load_config(path: Option<&Path>) -> Result<Config> {
    match path {
        Some(p) => Config::load(p).with_context(|| format!("loading config {}", p.display())),
        None => Ok(Config::default()),
    }
}

fn write_config(dir: &Path, cfg: &Config) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("config.toml"), cfg.to_toml())?;
    Ok(())
}

fn gen_floorplans(seed: u64, out: Option<PathBuf>, per_room: usize, config: Option<PathBuf>) -> Result<()> {
    if per_room < 2 {
        bail!("--per-room must be at least 2");
    }
    let mut cfg = load_config(config.as_deref())?;
    cfg.seed = seed;
    cfg.world_seed = Some(seed);
    cfg.world.train_per_room = (per_room * 2).div_ceil(3).min(per_room - 1);
    cfg.world.test_per_room = per_room - cfg.world.train_per_room;
    cfg.validate()?;
    let catalog = Catalog::standard();
    let world = generate_world_set(seed, &cfg.world, &catalog)?;
    let dir = out.unwrap_or_else(|| out_root().join(format!("floorplans-seed{seed}")));
    fs::create_dir_all(&dir)?;
    for fp in &world.floorplans {
        save_floorplan(fp, &catalog, &dir.join(format!("{}.fp", fp.id)))?;
    }
    write_config(&dir, &cfg)?;
    println!("wrote {} floorplans to {}", world.floorplans.len(), dir.display());
    Ok(())
}

fn build_graph_cmd(input: Option<PathBuf>, aliases: Option<PathBuf>, out: &Path, weighted: bool, raw: bool) -> Result<()> {
    let catalog = Catalog::standard();
    let kc = objnav::config::KnowledgeConfig {
        triples: input,
        aliases,
        weighted,
        ..Default::default()
    };
    let graph = load_knowledge_graph(&kc, &catalog)?;
    fs::write(out, write_adjacency(&graph, &catalog, !raw))?;
    println!(
        "{} nodes, {} edges, {} triples skipped -> {}",
        graph.num_nodes(),
        graph.num_edges(),
        graph.skipped,
        out.display()
    );
    Ok(())
}

fn build_reward_matrix_cmd(input: &Path, out: &Path, radius: f64) -> Result<()> {
    let catalog = Catalog::standard();
    let world = WorldSet::new(load_floorplan_dir(input, &catalog)?);
    fs::create_dir_all(out)?;
    for room in RoomType::ALL {
        let fps = world.split(room, Split::Train);
        let m = build_partial_reward_matrix(&fps, room, radius, &catalog)?;
        let path = out.join(format!("{}.tsv", room.slug()));
        fs::write(&path, write_reward_matrix(&m, &catalog))?;
        println!("{room}: {} floorplans -> {}", fps.len(), path.display());
    }
    Ok(())
}

fn train_cmd(a: TrainArgs) -> Result<()> {
    let mut cfg = load_config(a.config.as_deref())?;
    cfg.seed = a.seed;
    if let Some(n) = a.episodes {
        cfg.train.max_episodes = n;
    }
    if let Some(w) = a.workers {
        cfg.train.workers = w;
    }
    if let Some(lr) = a.lr {
        cfg.train.lr = lr;
    }
    if let Some(g) = a.graph {
        cfg.train.graph_mode = match g {
            GraphArg::Full => GraphMode::Full,
            GraphArg::NoContext => GraphMode::NoContextLayer,
            GraphArg::Zeroed => GraphMode::Zeroed,
        };
    }
    if a.unshaped {
        cfg.reward = RewardConfig {
            shaping: false,
            ..cfg.reward
        };
    }
    cfg.validate()?;
    let dir = a.out.unwrap_or_else(|| out_root().join(format!("train-seed{}", a.seed)));
    let output = TrainOutput { dir: dir.clone() };
    let resume = if a.resume {
        Some(Checkpoint::load(&output.checkpoint_path())?)
    } else {
        None
    };
    write_config(&dir, &cfg)?;
    let setup = Setup::build(&cfg)?;
    let outcome = train(&cfg.train_config(), &setup.ctx, &setup.world, setup.dims, resume, Some(&output))?;
    let n = outcome.records.len().max(1);
    let tail = &outcome.records[n.saturating_sub(n / 10 + 1).min(outcome.records.len())..];
    let tail_sr = tail.iter().filter(|r| r.success).count() as f64 / tail.len().max(1) as f64;
    println!(
        "trained {} episodes ({} updates rejected); last-10% training SR {:.3}; checkpoint {}",
        outcome.checkpoint.episodes,
        outcome.rejected,
        tail_sr,
        output.checkpoint_path().display()
    );
    Ok(())
}

fn eval_cmd(a: EvalArgs) -> Result<()> {
    let mode: TerminationMode = a.mode.parse()?;
    let config_path = a.config.clone().or_else(|| {
        let p = a.checkpoint.as_ref()?.parent()?.join("config.toml");
        p.exists().then_some(p)
    });
    let mut cfg = load_config(config_path.as_deref())?;
    cfg.eval = EvalConfig {
        episodes_per_room: a.episodes.unwrap_or(cfg.eval.episodes_per_room),
        mode,
    };
    cfg.validate()?;
    let setup = Setup::build(&cfg)?;
    let mut agent: Box<dyn Agent> = match a.agent {
        AgentArg::Random => Box::new(RandomAgent),
        AgentArg::Oracle => Box::new(OracleAgent::default()),
        AgentArg::Model => {
            let Some(path) = &a.checkpoint else {
                bail!("--checkpoint is required for the model agent");
            };
            let ck = Checkpoint::load(path)?;
            Box::new(ModelAgent::new("model", ck.model()?, &setup.ctx)?)
        }
    };
    let report = evaluate(agent.as_mut(), &setup.ctx, &setup.world, &cfg.eval, a.seed)?;
    print!("{}", report.table());
    let dir = a
        .out
        .unwrap_or_else(|| out_root().join(format!("eval-{}-{}-seed{}", agent.name(), mode.name(), a.seed)));
    write_config(&dir, &cfg)?;
    fs::write(dir.join("report.csv"), report.csv()?)?;
    for room in RoomType::ALL {
        for i in 0..a.dump.min(cfg.eval.episodes_per_room) {
            let (task, mut rng) = eval::eval_task(&setup.world, &setup.ctx, room, i, a.seed)?;
            let ep = eval::run_episode(agent.as_mut(), &setup.ctx, task, mode, &mut rng, true)?;
            let dump = TrajectoryDump::from_episode(&agent.name(), mode, &setup.ctx, &task, &ep)?;
            let path = dir.join(format!("dump-{}-{i}.jsonl", room.slug()));
            let mut w = BufWriter::new(fs::File::create(&path)?);
            dump.write_to(&mut w)?;
        }
    }
    println!("report written to {}", dir.join("report.csv").display());
    Ok(())
}

fn replay_cmd(path: &Path) -> Result<bool> {
    let file = fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let dump = TrajectoryDump::read_from(BufReader::new(file), &path.display().to_string())?;
    let diffs = replay(&dump, &Catalog::standard())?;
    for d in &diffs {
        let at = d.step.map_or_else(|| "episode".to_string(), |t| format!("step {t}"));
        println!("{at}: {} recorded {} replayed {}", d.field, d.recorded, d.replayed);
    }
    println!("{} steps, {} diffs", dump.steps.len(), diffs.len());
    Ok(diffs.is_empty())
}

fn gradcheck_cmd(seed: u64, seeds: u64) -> Result<bool> {
    let blocks = run_suite(seed, seeds.max(1))?;
    let mut ok = true;
    for b in &blocks {
        let pass = b.max_rel_err < REL_TOLERANCE;
        ok &= pass;
        println!(
            "{:<10} {:>6} params  max rel err {:.3e}  {}",
            b.name,
            b.len,
            b.max_rel_err,
            if pass { "ok" } else { "FAIL" }
        );
    }
    Ok(ok)
}

fn run(cli: Cli) -> Result<bool> {
    match cli.cmd {
        Cmd::GenFloorplans {
            seed,
            out,
            per_room,
            config,
        } => gen_floorplans(seed, out, per_room, config)?,
        Cmd::BuildGraph {
            input,
            aliases,
            out,
            weighted,
            raw,
        } => build_graph_cmd(input, aliases, &out, weighted, raw)?,
        Cmd::BuildRewardMatrix { input, out, radius } => build_reward_matrix_cmd(&input, &out, radius)?,
        Cmd::Train(a) => train_cmd(a)?,
        Cmd::Eval(a) => eval_cmd(a)?,
        Cmd::Replay { dump } => return replay_cmd(&dump),
        Cmd::Gradcheck { seed, seeds } => return gradcheck_cmd(seed, seeds),
    }
    Ok(true)
}

fn main() -> ExitCode {
    // clap exits with status 2 on usage errors
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            // invalid configuration counts as a usage error
            match e.downcast_ref::<objnav::Error>() {
                Some(objnav::Error::Config(_)) => ExitCode::from(2),
                _ => ExitCode::FAILURE,
            }
        }
    }
}
