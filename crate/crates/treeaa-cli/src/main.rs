use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use treeaa::bounds::{k_bound, k_bound_simple, lb_rounds, BoundParams};
use treeaa::harness::{
    emit_report, generate_tree, run_experiment, ExperimentConfig, Format, InputAssignment, TreeKind, TreeSource,
};
use treeaa::tree_aa::Mode;

#[derive(Parser)]
#[command(name = "treeaa", version, about = "Byzantine approximate agreement on trees")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the protocol over a range of seeds and report verdicts.
    Run(RunArgs),
    /// Print a generated tree as an edge list.
    GenTree(GenArgs),
    /// Evaluate the round lower bound and divergence bounds.
    Bounds(BoundsArgs),
}

#[derive(Args)]
struct RunArgs {
    /// JSON experiment config. Other flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Edge-list file.
    #[arg(long, conflicts_with = "gen")]
    tree: Option<PathBuf>,
    /// Generated tree as KIND:SIZE or KIND:SIZE:SEED, e.g. random:200:7.
    #[arg(long)]
    gen: Option<String>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    t: Option<usize>,
    /// random-valid, endpoints-of-diameter, or comma separated labels.
    #[arg(long)]
    inputs: Option<String>,
    #[arg(long)]
    adversary: Option<String>,
    /// Seed list: 7, 1,2,3, 0..100 or 0..=99.
    #[arg(long)]
    seeds: Option<String>,
    /// final or legacy.
    #[arg(long)]
    mode: Option<Mode>,
    /// Write the report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// json or csv.
    #[arg(long)]
    format: Option<String>,
    /// Directory for one JSONL transcript per run.
    #[arg(long)]
    emit_transcripts: Option<PathBuf>,
}

#[derive(Args)]
struct GenArgs {
    /// path, star, caterpillar, binary or random.
    #[arg(long)]
    kind: String,
    #[arg(long)]
    size: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BoundsArgs {
    #[arg(long)]
    n: usize,
    #[arg(long)]
    t: usize,
    /// Diameter of the input space.
    #[arg(long)]
    d: f64,
    /// Also evaluate the divergence bounds after this many rounds.
    #[arg(long)]
    rounds: Option<u32>,
}

fn parse_seeds(s: &str) -> Result<Vec<u64>> {
    let s = s.trim();
    let seeds = if let Some((a, b)) = s.split_once("..=") {
        (a.trim().parse::<u64>()?..=b.trim().parse::<u64>()?).collect()
    } else if let Some((a, b)) = s.split_once("..") {
        (a.trim().parse::<u64>()?..b.trim().parse::<u64>()?).collect()
    } else {
        s.split(',')
            .map(|x| x.trim().parse::<u64>())
            .collect::<Result<Vec<_>, _>>()?
    };
    Ok(seeds)
}

fn parse_gen(s: &str) -> Result<TreeSource> {
    let parts: Vec<&str> = s.split(':').collect();
    if !(2..=3).contains(&parts.len()) {
        bail!("--gen expects KIND:SIZE or KIND:SIZE:SEED, got {s:?}");
    }
    let kind: TreeKind = parts[0].parse()?;
    let size = parts[1].parse().with_context(|| format!("bad size in --gen {s:?}"))?;
    let seed = match parts.get(2) {
        Some(x) => x.parse().with_context(|| format!("bad seed in --gen {s:?}"))?,
        None => 0,
    };
    Ok(TreeSource::Generate { kind, size, seed })
}

fn build_config(args: &RunArgs) -> Result<ExperimentConfig> {
    let mut cfg = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            serde_json::from_str::<ExperimentConfig>(&text).with_context(|| format!("parsing {}", path.display()))?
        }
        None => {
            let tree = match (&args.tree, &args.gen) {
                (Some(p), _) => TreeSource::File(p.clone()),
                (None, Some(g)) => parse_gen(g)?,
                (None, None) => bail!("one of --tree, --gen or --config is required"),
            };
            ExperimentConfig {
                tree,
                n: args.n.context("--n is required without --config")?,
                t: args.t.context("--t is required without --config")?,
                inputs: InputAssignment::RandomValid,
                adversary: "silent".into(),
                seeds: vec![0],
                mode: Mode::Final,
                format: Format::Json,
                transcripts: None,
            }
        }
    };
    if args.config.is_some() {
        if let Some(p) = &args.tree {
            cfg.tree = TreeSource::File(p.clone());
        }
        if let Some(g) = &args.gen {
            cfg.tree = parse_gen(g)?;
        }
        if let Some(n) = args.n {
            cfg.n = n;
        }
        if let Some(t) = args.t {
            cfg.t = t;
        }
    }
    if let Some(i) = &args.inputs {
        cfg.inputs = i.parse()?;
    }
    if let Some(a) = &args.adversary {
        cfg.adversary = a.clone();
    }
    if let Some(s) = &args.seeds {
        cfg.seeds = parse_seeds(s).with_context(|| format!("bad --seeds {s:?}"))?;
    }
    if let Some(m) = args.mode {
        cfg.mode = m;
    }
    if let Some(f) = &args.format {
        cfg.format = f.parse()?;
    }
    if let Some(dir) = &args.emit_transcripts {
        cfg.transcripts = Some(dir.clone());
    }
    cfg.validate()?;
    Ok(cfg)
}

fn write_or_print(out: Option<&PathBuf>, text: &str) -> Result<()> {
    match out {
        Some(path) => std::fs::write(path, text).with_context(|| format!("writing {}", path.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn run(args: RunArgs) -> Result<ExitCode> {
    let cfg = build_config(&args)?;
    let reports = run_experiment(&cfg)?;
    write_or_print(args.out.as_ref(), &emit_report(&reports, cfg.format)?)?;
    let failed: Vec<u64> = reports.iter().filter(|r| !r.passed()).map(|r| r.seed).collect();
    if failed.is_empty() {
        Ok(ExitCode::SUCCESS)
    } else {
        eprintln!("verdict failed for seeds {failed:?}");
        Ok(ExitCode::from(1))
    }
}

fn gen_tree(args: GenArgs) -> Result<ExitCode> {
    let kind: TreeKind = args.kind.parse()?;
    let tree = generate_tree(kind, args.size, args.seed)?;
    write_or_print(args.out.as_ref(), &tree.to_edge_list())?;
    Ok(ExitCode::SUCCESS)
}

fn bounds(args: BoundsArgs) -> Result<ExitCode> {
    let mut doc = serde_json::json!({
        "n": args.n,
        "t": args.t,
        "d": args.d,
        "lb_rounds": lb_rounds(args.n, args.t, args.d)?,
    });
    if let Some(rounds) = args.rounds {
        let p = BoundParams {
            n: args.n,
            t: args.t,
            rounds,
            d: args.d,
        };
        doc["rounds"] = rounds.into();
        doc["k_bound"] = k_bound(&p)?.into();
        doc["k_bound_simple"] = k_bound_simple(&p)?.into();
    }
    println!("{}", serde_json::to_string_pretty(&doc)?);
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(a) => run(a),
        Command::GenTree(a) => gen_tree(a),
        Command::Bounds(a) => bounds(a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
