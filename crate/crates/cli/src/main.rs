use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde_json::json;

use dlacb_core::bench::{emit_report, scale_ratio, AbacPolicy, Bench, Engine, Policies, RbacPolicy, DECISIONS_HEADER};
use dlacb_core::config::{load_config, Config};
use dlacb_core::contracts::RuleStore;
use dlacb_core::crypto::{hash, keygen};
use dlacb_core::harness::{
    load_world, run_all_scenarios, run_scenario, save_world, tamper, Mutation, World, CONFIG_FILE,
};
use dlacb_core::ledger::{load_blocks, parse_blocks, validate_blocks, HistoryFilter, TxKind};
use dlacb_core::model::{
    accuracy, generate_dataset, load_weights, save_weights, train, Operation, Split,
};
use dlacb_core::storage::{chain_roots, parse_log, verify_log_against_chain, LogVerdict};

#[derive(Parser)]
#[command(name = "dlacb", version, about = "Access-control ledger with a learned decision model")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// key=value configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override one configuration key (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
    /// Decimal u64, or 64 hex characters.
    #[arg(long, global = true)]
    seed: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Derive an Ed25519 key pair from the seed.
    Keygen {
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write the synthetic train and test splits as CSV.
    GenData {
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the decision model and write its weights.
    Train {
        #[arg(long)]
        out: PathBuf,
    },
    /// Create a world: genesis, registration, trained model.
    Init {
        #[arg(long)]
        dir: PathBuf,
        /// Replace an existing world in `dir`.
        #[arg(long)]
        force: bool,
    },
    /// Run one access request end to end.
    Request {
        #[arg(long)]
        dir: PathBuf,
        #[arg(long)]
        user: usize,
        #[arg(long)]
        resource: u32,
        #[arg(long, default_value = "read")]
        op: Operation,
    },
    /// Run the scenario suite, or one scenario.
    Scenario {
        #[arg(long)]
        dir: PathBuf,
        #[arg(long, conflicts_with = "id")]
        all: bool,
        #[arg(long, required_unless_present = "all")]
        id: Option<u32>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Attack the world and report whether each attack was caught.
    Tamper {
        #[arg(long)]
        dir: PathBuf,
        /// Mutation name, or `all`.
        #[arg(long, default_value = "all")]
        mutation: String,
        #[arg(long, default_value_t = 1)]
        trials: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Validate a persisted chain.
    VerifyChain {
        #[arg(long, required_unless_present = "dir")]
        chain: Option<PathBuf>,
        #[arg(long)]
        dir: Option<PathBuf>,
    },
    /// Check a malicious-log export against the roots in a chain.
    VerifyLog {
        #[arg(long, requires = "chain", required_unless_present = "dir")]
        log: Option<PathBuf>,
        #[arg(long)]
        chain: Option<PathBuf>,
        #[arg(long)]
        dir: Option<PathBuf>,
    },
    /// Time the decision engines over a policy-scale sweep.
    Bench {
        /// Engine name, or `all`.
        #[arg(long, default_value = "all")]
        engine: String,
        #[arg(long, value_delimiter = ',', default_value = "1")]
        threads: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_value = "1,10")]
        scale: Vec<usize>,
        #[arg(long, default_value_t = 10_000)]
        n: usize,
        #[arg(long, default_value_t = 3)]
        repeats: usize,
        /// Model weights; trained from the configuration when absent.
        #[arg(long)]
        weights: Option<PathBuf>,
        /// Use the configuration and weights of an existing world.
        #[arg(long, conflicts_with = "weights")]
        dir: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Summarize a world and, optionally, a bench report.
    Report {
        #[arg(long)]
        dir: Option<PathBuf>,
        #[arg(long)]
        bench: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// `println!` that tolerates a closed stdout.
macro_rules! out {
    ($($t:tt)*) => {{
        use std::io::Write;
        let _ = writeln!(std::io::stdout(), $($t)*);
    }};
}

/// Failure with its exit code.
struct Fail(u8, String);

fn usage(msg: impl Into<String>) -> Fail {
    Fail(2, msg.into())
}

type Res = Result<u8, Fail>;

fn read_text(path: &Path) -> Result<String, Fail> {
    std::fs::read_to_string(path).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn write_text(path: &Path, text: &str) -> Result<(), Fail> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| usage(format!("{}: {e}", parent.display())))?;
    }
    std::fs::write(path, text).map_err(|e| usage(format!("{}: {e}", path.display())))
}

/// Print to stdout, or write to `out` when given.
fn emit(out: Option<&Path>, text: &str) -> Result<(), Fail> {
    match out {
        Some(p) => write_text(p, text),
        None => {
            out!("{text}");
            Ok(())
        }
    }
}

fn pretty(v: &impl serde::Serialize) -> String {
    serde_json::to_string_pretty(v).expect("serializable")
}

enum Seed {
    Number(u64),
    Bytes([u8; 32]),
}

fn parse_seed(s: &str) -> Result<Seed, Fail> {
    if let Ok(n) = s.parse::<u64>() {
        return Ok(Seed::Number(n));
    }
    let bytes = hex::decode(s).map_err(|_| usage(format!("seed `{s}` is neither a u64 nor hex")))?;
    let arr: [u8; 32] = bytes
        .try_into()
        .map_err(|_| usage("hex seeds must be 64 characters"))?;
    Ok(Seed::Bytes(arr))
}

impl Global {
    fn resolve(&self) -> Result<Config, Fail> {
        let mut config = match &self.config {
            Some(p) => load_config(p).map_err(|e| usage(e.to_string()))?,
            None => Config::default(),
        };
        for o in &self.overrides {
            let (k, v) = o
                .split_once('=')
                .ok_or_else(|| usage(format!("--set expects KEY=VALUE, got `{o}`")))?;
            config.set(k.trim(), v).map_err(|e| usage(e.to_string()))?;
        }
        if let Some(s) = &self.seed {
            config.seed = match parse_seed(s)? {
                Seed::Number(n) => n,
                Seed::Bytes(b) => u64::from_le_bytes(b[..8].try_into().expect("8 bytes")),
            };
        }
        Ok(config)
    }

    /// World commands read their configuration from the world directory.
    fn reject(&self, command: &str) -> Result<(), Fail> {
        if self.config.is_some() || !self.overrides.is_empty() || self.seed.is_some() {
            return Err(usage(format!(
                "`{command}` reads its configuration from the world directory; drop --config/--set/--seed"
            )));
        }
        Ok(())
    }
}

fn open_world(dir: &Path) -> Result<World, Fail> {
    load_world(dir).map_err(|e| usage(format!("{}: {e}", dir.display())))
}

fn store_world(world: &World, dir: &Path) -> Result<(), Fail> {
    save_world(world, dir).map_err(|e| usage(e.to_string()))
}

fn harness_fail(e: impl std::fmt::Display) -> Fail {
    Fail(2, e.to_string())
}

fn run(cli: Cli) -> Res {
    let g = &cli.global;
    match cli.command {
        Command::Keygen { out } => {
            let seed = match g.seed.as_deref().map(parse_seed).transpose()? {
                Some(Seed::Bytes(b)) => b,
                Some(Seed::Number(n)) => hash(&n.to_le_bytes()).0,
                None => hash(&g.resolve()?.seed.to_le_bytes()).0,
            };
            let kp = keygen(&seed);
            let v = json!({
                "public": kp.public.to_hex(),
                "secret": kp.secret.to_hex(),
                "key_hash": kp.public.key_hash().to_hex(),
            });
            emit(out.as_deref(), &pretty(&v))?;
            Ok(0)
        }
        Command::GenData { out } => {
            let c = g.resolve()?;
            let ds = generate_dataset(c.n_users, c.n_resources, c.seed);
            write_text(&out.join("train.csv"), &ds.to_csv(Split::Train))?;
            write_text(&out.join("test.csv"), &ds.to_csv(Split::Test))?;
            out!(
                "{} train and {} test tuples written to {}",
                ds.train().len(),
                ds.test().len(),
                out.display()
            );
            Ok(0)
        }
        Command::Train { out } => {
            let c = g.resolve()?;
            let ds = generate_dataset(c.n_users, c.n_resources, c.seed);
            let model = train(&ds, &c.train_config()).map_err(harness_fail)?;
            save_weights(&model, &out).map_err(harness_fail)?;
            let v = json!({
                "weights": out.display().to_string(),
                "train_accuracy": accuracy(&model, &ds.train(), c.threshold),
                "test_accuracy": accuracy(&model, &ds.test(), c.threshold),
            });
            out!("{}", pretty(&v));
            Ok(0)
        }
        Command::Init { dir, force } => {
            let c = g.resolve()?;
            if dir.join(CONFIG_FILE).exists() && !force {
                return Err(usage(format!("{} already holds a world; pass --force to replace it", dir.display())));
            }
            let rules = match &c.rules_file {
                Some(p) => Some(RuleStore::from_csv(&read_text(Path::new(p))?).map_err(|e| usage(e.to_string()))?),
                None => None,
            };
            let mut world = World::new(c).map_err(harness_fail)?;
            for rule in rules.iter().flat_map(|r| r.rules()) {
                world.inject_rule(*rule).map_err(harness_fail)?;
            }
            store_world(&world, &dir)?;
            let v = json!({
                "dir": dir.display().to_string(),
                "height": world.chain().height(),
                "validators": world.validators().len(),
                "registered_users": world.registered_count(),
                "resources": world.dataset().resources.len(),
                "tip": world.chain().tip().hash().to_hex(),
            });
            out!("{}", pretty(&v));
            Ok(0)
        }
        Command::Request {
            dir,
            user,
            resource,
            op,
        } => {
            g.reject("request")?;
            let mut world = open_world(&dir)?;
            if user >= world.users().len() {
                return Err(usage(format!("user {user} out of range (0..{})", world.users().len())));
            }
            let outcome = world.run_request(user, resource, op).map_err(harness_fail)?;
            store_world(&world, &dir)?;
            out!("{}", pretty(&outcome));
            Ok(0)
        }
        Command::Scenario { dir, all, id, out } => {
            g.reject("scenario")?;
            let mut world = open_world(&dir)?;
            let reports = if all {
                run_all_scenarios(&mut world)
            } else {
                run_scenario(&mut world, id.expect("clap requires --id")).map(|r| vec![r])
            }
            .map_err(harness_fail)?;
            store_world(&world, &dir)?;
            emit(out.as_deref(), &pretty(&reports))?;
            for r in &reports {
                eprintln!(
                    "scenario {}: {} (expected {}, observed {})",
                    r.id,
                    if r.pass { "pass" } else { "FAIL" },
                    r.expected,
                    r.observed
                );
            }
            Ok(if reports.iter().all(|r| r.pass) { 0 } else { 1 })
        }
        Command::Tamper {
            dir,
            mutation,
            trials,
            out,
        } => {
            g.reject("tamper")?;
            let mutations: Vec<Mutation> = if mutation == "all" {
                Mutation::NAMES.iter().map(|n| n.parse().expect("known name")).collect()
            } else {
                vec![mutation.parse().map_err(|e: String| {
                    usage(format!("{e}; expected one of: all, {}", Mutation::NAMES.join(", ")))
                })?]
            };
            let mut world = open_world(&dir)?;
            let mut rng = ChaCha20Rng::seed_from_u64(world.config().seed ^ world.chain().height());
            let mut outcomes = Vec::new();
            for _ in 0..trials {
                for &m in &mutations {
                    outcomes.push(tamper(&mut world, m, &mut rng).map_err(harness_fail)?);
                }
            }
            store_world(&world, &dir)?;
            emit(out.as_deref(), &pretty(&outcomes))?;
            let missed = outcomes.iter().filter(|o| !o.caught).count();
            eprintln!("{} of {} attacks caught", outcomes.len() - missed, outcomes.len());
            Ok(if missed == 0 { 0 } else { 1 })
        }
        Command::VerifyChain { chain, dir } => {
            let path = match (chain, dir) {
                (Some(p), _) => p,
                (None, Some(d)) => d.join(world_config(&d)?.chain_file),
                (None, None) => unreachable!("clap requires one"),
            };
            let text = read_text(&path)?;
            let verdict = parse_blocks(&text)
                .map_err(|e| e.to_string())
                .and_then(|b| validate_blocks(&b).map_err(|e| e.to_string()));
            match verdict {
                Ok(c) => {
                    out!("valid: {} blocks, tip {}", c.blocks().len(), c.tip().hash().to_hex());
                    Ok(0)
                }
                Err(e) => {
                    out!("invalid: {e}");
                    Ok(1)
                }
            }
        }
        Command::VerifyLog { log, chain, dir } => {
            let (log, chain) = match (log, chain, dir) {
                (Some(l), Some(c), _) => (l, c),
                (None, _, Some(d)) => {
                    let c = world_config(&d)?;
                    (d.join(c.log_file), d.join(c.chain_file))
                }
                _ => return Err(usage("pass --log with --chain, or --dir")),
            };
            let blocks = load_blocks(&chain).map_err(|e| usage(e.to_string()))?;
            let verdict = match parse_log(&read_text(&log)?) {
                Ok(records) => verify_log_against_chain(&records, &chain_roots(&blocks)),
                Err(_) => LogVerdict::Compromised {
                    first_divergent_height: None,
                },
            };
            match verdict {
                LogVerdict::Verified => {
                    out!("Verified");
                    Ok(0)
                }
                LogVerdict::Compromised {
                    first_divergent_height,
                } => {
                    match first_divergent_height {
                        Some(h) => out!("Compromised: first divergent block {h}"),
                        None => out!("Compromised: export is unreadable"),
                    }
                    Ok(1)
                }
            }
        }
        Command::Bench {
            engine,
            threads,
            scale,
            n,
            repeats,
            weights,
            dir,
            out,
        } => bench(g, engine, threads, scale, n, repeats, weights, dir, out),
        Command::Report { dir, bench, out } => {
            if dir.is_none() && bench.is_none() {
                return Err(usage("report needs --dir, --bench, or both"));
            }
            let mut v = serde_json::Map::new();
            if let Some(d) = &dir {
                g.reject("report --dir")?;
                v.insert("world".into(), world_summary(&open_world(d)?));
            }
            if let Some(b) = &bench {
                let stats = dlacb_core::bench::parse_report(&read_text(b)?).map_err(|e| usage(e.to_string()))?;
                let mut engines = serde_json::Map::new();
                for e in Engine::ALL {
                    for t in stats.iter().filter(|s| s.engine == e).map(|s| s.threads).collect::<std::collections::BTreeSet<_>>() {
                        let rows: Vec<_> = stats.iter().filter(|s| s.engine == e && s.threads == t).cloned().collect();
                        engines.insert(
                            format!("{e}@{t}"),
                            json!({
                                "scales": rows.iter().map(|s| s.scale).collect::<Vec<_>>(),
                                "mean_ns": rows.iter().map(|s| s.mean_ns).collect::<Vec<_>>(),
                                "scale_ratio": scale_ratio(&rows),
                            }),
                        );
                    }
                }
                v.insert("bench".into(), engines.into());
            }
            emit(out.as_deref(), &pretty(&v))?;
            Ok(0)
        }
    }
}

fn world_config(dir: &Path) -> Result<Config, Fail> {
    load_config(dir.join(CONFIG_FILE)).map_err(|e| usage(format!("{}: {e}", dir.display())))
}

fn world_summary(world: &World) -> serde_json::Value {
    let chain = world.chain();
    let kinds: serde_json::Map<String, serde_json::Value> = [
        TxKind::Setup,
        TxKind::AccReq,
        TxKind::Verified,
        TxKind::Link,
        TxKind::Storage,
    ]
    .into_iter()
    .map(|k| {
        let count = chain.query_history(&HistoryFilter::Kind(k)).len();
        (format!("{k:?}"), json!(count))
    })
    .collect();
    json!({
        "height": chain.height(),
        "tip": chain.tip().hash().to_hex(),
        "chain_valid": chain.validate_chain(),
        "transactions": kinds,
        "registered_users": world.registered_count(),
        "log_records": world.storage().log().len(),
        "log_verified": world.verify_own_log().is_verified(),
        "malicious_users": world.find_malicious_users(),
        "banned": world.rules().banned().len(),
    })
}

#[allow(clippy::too_many_arguments)]
fn bench(
    g: &Global,
    engine: String,
    threads: Vec<usize>,
    scales: Vec<usize>,
    n: usize,
    repeats: usize,
    weights: Option<PathBuf>,
    dir: Option<PathBuf>,
    out: PathBuf,
) -> Res {
    let engines: Vec<Engine> = if engine == "all" {
        Engine::ALL.to_vec()
    } else {
        engine
            .split(',')
            .map(|e| e.trim().parse().map_err(|e: dlacb_core::bench::BenchError| usage(e.to_string())))
            .collect::<Result<_, _>>()?
    };
    if threads.contains(&0) || scales.contains(&0) || n == 0 {
        return Err(usage("--threads, --scale and --n must be positive"));
    }
    let (config, model) = match &dir {
        Some(d) => {
            g.reject("bench --dir")?;
            let c = world_config(d)?;
            let m = load_weights(d.join(&c.weights_file)).map_err(harness_fail)?;
            (c, m)
        }
        None => {
            let c = g.resolve()?;
            let m = match &weights {
                Some(w) => load_weights(w).map_err(harness_fail)?,
                None => {
                    let ds = generate_dataset(c.n_users, c.n_resources, c.seed);
                    train(&ds, &c.train_config()).map_err(harness_fail)?
                }
            };
            (c, m)
        }
    };
    let file_policy = |p: &Option<PathBuf>| -> Result<Option<String>, Fail> {
        p.as_deref().map(read_text).transpose()
    };
    let rbac = file_policy(&config.rbac_policy)?
        .map(|t| RbacPolicy::from_csv(&t).map_err(|e| usage(e.to_string())))
        .transpose()?;
    let abac = file_policy(&config.abac_policy)?
        .map(|t| AbacPolicy::from_csv(&t).map_err(|e| usage(e.to_string())))
        .transpose()?;

    let dataset = generate_dataset(config.n_users, config.n_resources, config.seed);
    let b = Bench::new(&dataset, model, config.threshold, n, config.seed).map_err(|e| usage(e.to_string()))?;
    let policies: Vec<Policies> = scales
        .iter()
        .map(|&s| {
            let mut p = b.policies(s);
            if let Some(r) = &rbac {
                p.rbac = r.clone();
            }
            if let Some(a) = &abac {
                p.abac = a.clone();
            }
            p
        })
        .collect();

    let mut stats = Vec::new();
    let mut decisions = format!("{DECISIONS_HEADER}\n");
    let mut consistent = true;
    for &e in &engines {
        for (pi, p) in policies.iter().enumerate() {
            let mut reference: Option<Vec<bool>> = None;
            for &t in &threads {
                let mut best: Option<dlacb_core::bench::Measurement> = None;
                for _ in 0..repeats.max(1) {
                    let m = b.measure(e, p, t);
                    if best.as_ref().is_none_or(|x| m.stats.mean_ns < x.stats.mean_ns) {
                        best = Some(m);
                    }
                }
                let m = best.expect("one repeat");
                match &reference {
                    None => {
                        decisions.push_str(&b.decisions_csv(e, scales[pi], &m.decisions));
                        reference = Some(m.decisions.clone());
                    }
                    Some(r) if *r != m.decisions => {
                        consistent = false;
                        eprintln!("{e} scale {}: decisions differ at {t} threads", scales[pi]);
                    }
                    Some(_) => {}
                }
                stats.push(m.stats);
            }
        }
    }
    write_text(&out.join("bench.csv"), &emit_report(&stats))?;
    write_text(&out.join("decisions.csv"), &decisions)?;
    out!("{}", emit_report(&stats).trim_end());
    for &e in &engines {
        for &t in &threads {
            let rows: Vec<_> = stats.iter().filter(|s| s.engine == e && s.threads == t).cloned().collect();
            if let Some(r) = scale_ratio(&rows).filter(|_| rows.len() > 1) {
                eprintln!("{e} with {t} thread(s): mean latency x{r:.2} from scale {} to {}", scales.iter().min().unwrap(), scales.iter().max().unwrap());
            }
        }
    }
    Ok(if consistent { 0 } else { 1 })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(Fail(code, msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(code)
        }
    }
}
