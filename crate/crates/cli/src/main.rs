//! `errag`: ingest sources, run chains, score answers, build selection training files.
//!
//! Exit codes: 0 ok, 2 config, 3 data, 4 chain parse, 5 execution, 6 template.

mod error;
mod pipeline;
mod state;

use std::io::BufReader;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use errag_core::evalkit::{llm_judge, read_eval_set, stem_accuracy};
use errag_core::postproc::UnitTable;
use errag_core::selection::{build_dpo_pairs, build_sft_set, read_log, top2_from_log, write_jsonl};
use serde_json::json;

use error::{fail, CliResult, Context, Kind};
use pipeline::{Runtime, Selection};
use state::Workspace;

#[derive(Parser)]
#[command(name = "errag", version, about = "Query heterogeneous sources through GET/JOIN chains")]
struct Cli {
    /// Catalog config (JSON).
    #[arg(long, global = true, env = "ERRAG_CONFIG")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Load every configured source and persist indexes and statistics.
    Ingest {
        #[arg(long)]
        json: bool,
    },
    /// Execute a chain, or answer a question through a generated chain.
    Run(RunArgs),
    /// Score predictions in a JSON-lines eval set.
    Eval(EvalArgs),
    /// Build sft.jsonl and dpo_pairs.jsonl from an execution log.
    TrainFiles {
        log: PathBuf,
        out_dir: PathBuf,
        #[arg(long)]
        json: bool,
    },
}

#[derive(Args)]
struct RunArgs {
    /// Inline chain text.
    #[arg(conflicts_with_all = ["file", "question"])]
    chain: Option<String>,
    /// Read the chain from a file.
    #[arg(long, short = 'f', conflicts_with = "question")]
    file: Option<PathBuf>,
    /// Natural-language question; the chain is generated by the gateway.
    #[arg(long, short = 'q')]
    question: Option<String>,
    /// `auto` or a source label (`A` or `A + B`); only with --question.
    #[arg(long, requires = "question")]
    select: Option<String>,
    /// Result template applied to the records.
    #[arg(long)]
    template: Option<String>,
    /// Unit table (JSON) for template number normalization.
    #[arg(long)]
    units: Option<PathBuf>,
    /// Print the executor trace to stderr.
    #[arg(long)]
    trace: bool,
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct EvalArgs {
    /// JSON lines: question, ground_truth, and prediction or chain (+ optional template).
    set: PathBuf,
    /// Also ask the gateway to judge each prediction.
    #[arg(long)]
    judge: bool,
    #[arg(long)]
    json: bool,
}

fn main() {
    let cli = Cli::parse();
    let code = match dispatch(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.kind.exit_code()
        }
    };
    std::process::exit(code);
}

fn dispatch(cli: &Cli) -> CliResult<()> {
    let config = cli.config.as_deref();
    match &cli.command {
        Command::Ingest { json } => ingest(config, *json),
        Command::Run(args) => run(config, args),
        Command::Eval(args) => eval(config, args),
        Command::TrainFiles { log, out_dir, json } => train_files(log, out_dir, *json),
    }
}

fn ingest(config: Option<&Path>, as_json: bool) -> CliResult<()> {
    let ws = Workspace::load(config)?;
    let summaries = ws.ingest()?;
    if as_json {
        println!("{}", serde_json::Value::Array(summaries));
        return Ok(());
    }
    for s in &summaries {
        let counts: Vec<String> = s
            .as_object()
            .into_iter()
            .flatten()
            .filter(|(k, _)| *k != "source" && *k != "kind")
            .map(|(k, v)| format!("{k}={v}"))
            .collect();
        println!("{} {} {}", s["source"].as_str().unwrap_or(""), s["kind"].as_str().unwrap_or(""), counts.join(" "));
    }
    Ok(())
}

fn load_units(path: Option<&Path>) -> CliResult<UnitTable> {
    match path {
        Some(p) => UnitTable::load(p).context(Kind::Config, ""),
        None => Ok(UnitTable::default()),
    }
}

fn run(config: Option<&Path>, args: &RunArgs) -> CliResult<()> {
    let ws = Workspace::load(config)?;
    let units = load_units(args.units.as_deref())?;
    let (catalog, adapters) = ws.open()?;
    let gateway = ws.gateway()?;
    let rt = Runtime {
        catalog: &catalog,
        adapters: &adapters,
        gateway: gateway.as_ref(),
        model_selection: ws.remote_gateway(),
    };

    let (chain_text, query) = match (&args.chain, &args.file, &args.question) {
        (Some(c), _, _) => (c.clone(), c.clone()),
        (_, Some(f), _) => {
            let text = std::fs::read_to_string(f).context(Kind::Data, &f.display().to_string())?;
            (text.clone(), text)
        }
        (_, _, Some(q)) => {
            let sel = match args.select.as_deref() {
                None | Some("auto") => Selection::Auto,
                Some(s) => Selection::Fixed(s.to_string()),
            };
            let sources = pipeline::select(&rt, q, &sel)?;
            if let Some(answer) = pipeline::self_answer(&rt, &sources, q)? {
                print_answer(&answer, args.json);
                return Ok(());
            }
            (pipeline::generate_chain(&rt, q, &sources)?, q.clone())
        }
        _ => return fail(Kind::Config, "give a chain, --file or --question"),
    };
    // parse the template before running anything
    if let Some(t) = &args.template {
        errag_core::postproc::parse_template(t).context(Kind::Template, "template")?;
    }
    let chain = pipeline::parse(&chain_text)?;
    let exec = pipeline::execute(&rt, &chain, &query)?;
    if args.trace {
        for step in &exec.trace {
            eprintln!("{step}");
        }
    }
    match &args.template {
        Some(t) => print_answer(&pipeline::post_process(t, &exec.result, &units)?, args.json),
        None => {
            let records = serde_json::to_value(&exec.result.records).context(Kind::Exec, "records")?;
            if args.json {
                println!("{records}");
            } else {
                println!("{}", serde_json::to_string_pretty(&records).unwrap_or_default());
            }
        }
    }
    Ok(())
}

fn print_answer(answer: &str, as_json: bool) {
    if as_json {
        println!("{}", json!(answer));
    } else {
        println!("{answer}");
    }
}

fn eval(config: Option<&Path>, args: &EvalArgs) -> CliResult<()> {
    let file = std::fs::File::open(&args.set).context(Kind::Data, &args.set.display().to_string())?;
    let items = read_eval_set(BufReader::new(file)).context(Kind::Data, &args.set.display().to_string())?;
    let needs_runtime = args.judge || items.iter().any(|i| i.prediction.is_none());
    let ws = if needs_runtime { Some(Workspace::load(config)?) } else { None };
    let opened = match &ws {
        Some(ws) if items.iter().any(|i| i.prediction.is_none()) => Some(ws.open()?),
        _ => None,
    };
    let gateway = ws.as_ref().map(Workspace::gateway).transpose()?;
    let units = UnitTable::default();

    let mut rows = Vec::new();
    let (mut stem_hits, mut judge_hits) = (0usize, 0usize);
    for (i, item) in items.iter().enumerate() {
        let prediction = match (&item.prediction, &opened, &gateway) {
            (Some(p), _, _) => p.clone(),
            (None, Some((catalog, adapters)), Some(gw)) => {
                let Some(chain_text) = &item.chain else {
                    return fail(Kind::Data, format!("item {}: needs a prediction or a chain", i + 1));
                };
                let rt = Runtime {
                    catalog,
                    adapters,
                    gateway: gw.as_ref(),
                    model_selection: false,
                };
                let chain = pipeline::parse(chain_text)?;
                let exec = pipeline::execute(&rt, &chain, &item.question)?;
                match &item.template {
                    Some(t) => pipeline::post_process(t, &exec.result, &units)?,
                    None => pipeline::plain_answer(&exec.result),
                }
            }
            _ => unreachable!("runtime is opened whenever a prediction is missing"),
        };
        let stem = stem_accuracy(&prediction, &item.ground_truth);
        stem_hits += stem as usize;
        let verdict = match (&gateway, args.judge) {
            (Some(gw), true) => {
                let v = llm_judge(&item.question, &item.ground_truth, &prediction, gw.as_ref()).context(Kind::Exec, "judge")?;
                judge_hits += v as usize;
                Some(v)
            }
            _ => None,
        };
        rows.push(json!({
            "question": item.question,
            "ground_truth": item.ground_truth,
            "prediction": prediction,
            "stem": stem,
            "judge": verdict,
        }));
    }
    let n = items.len();
    let rate = |k: usize| if n == 0 { 0.0 } else { k as f64 / n as f64 };
    if args.json {
        let mut out = json!({"n": n, "stem_accuracy": rate(stem_hits), "items": rows});
        if args.judge {
            out["judge_accuracy"] = json!(rate(judge_hits));
        }
        println!("{out}");
    } else {
        for r in &rows {
            println!("{}\t{}\t{}", r["stem"], r["question"].as_str().unwrap_or(""), r["prediction"].as_str().unwrap_or(""));
        }
        print!("n={n} stem_accuracy={:.4}", rate(stem_hits));
        if args.judge {
            print!(" judge_accuracy={:.4}", rate(judge_hits));
        }
        println!();
    }
    Ok(())
}

fn train_files(log: &Path, out_dir: &Path, as_json: bool) -> CliResult<()> {
    let file = std::fs::File::open(log).context(Kind::Data, &log.display().to_string())?;
    let entries = read_log(BufReader::new(file)).context(Kind::Data, &log.display().to_string())?;
    let sft = build_sft_set(&entries);
    let pairs = build_dpo_pairs(&top2_from_log(&entries), &entries).context(Kind::Data, "dpo pairs")?;
    std::fs::create_dir_all(out_dir).context(Kind::Data, &out_dir.display().to_string())?;
    let write = |name: &str, f: &dyn Fn(std::fs::File) -> CliResult<()>| -> CliResult<()> {
        let path = out_dir.join(name);
        let file = std::fs::File::create(&path).context(Kind::Data, &path.display().to_string())?;
        f(file)
    };
    write("sft.jsonl", &|f| write_jsonl(std::io::BufWriter::new(f), &sft).context(Kind::Data, "sft.jsonl"))?;
    write("dpo_pairs.jsonl", &|f| {
        write_jsonl(std::io::BufWriter::new(f), &pairs).context(Kind::Data, "dpo_pairs.jsonl")
    })?;
    if as_json {
        println!("{}", json!({"sft": sft.len(), "dpo_pairs": pairs.len()}));
    } else {
        println!("sft={} dpo_pairs={}", sft.len(), pairs.len());
    }
    Ok(())
}
