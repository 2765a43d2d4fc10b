//! `ipc`: command-line front end for the insider-proof channel, the QKD
//! simulator, the distinguishers and the two-process peer demo.
//!
//! Exit codes: 0 success, 1 protocol failure or abort-equivalent outcome,
//! 2 usage or parameter error.

mod verify;

use std::fs;
use std::io::Write;
use std::net::{TcpListener, TcpStream};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use ipc_core::distinguisher::{
    empirical_advantage, exact_row, read_log, transcript_battery, AdvantageRow, AttackSpec,
};
use ipc_core::gf2n::{field_for_degree, gf_mul};
use ipc_core::hashfam::{hash, HashParams};
use ipc_core::ipchannel::{channel_epsilon, decrypt, encrypt, ChannelTranscript, KeyPool};
use ipc_core::qkdsim::link::new_tap;
use ipc_core::qkdsim::sim::recover_naive_leak;
use ipc_core::qkdsim::{peer_session, simulate, ChannelVariant, DeviceKind, Role, SimConfig};
use ipc_core::wire::{log_line, Frame};
use ipc_core::{rng, BitString, Error};

#[derive(Parser)]
#[command(name = "ipc", version, about = "Insider-proof private channel and QKD post-processing toolkit")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum RoleArg {
    Alice,
    Bob,
}

#[derive(Clone, Copy, ValueEnum)]
enum VariantArg {
    InsiderProof,
    NaiveOtp,
}

impl From<VariantArg> for ChannelVariant {
    fn from(v: VariantArg) -> Self {
        match v {
            VariantArg::InsiderProof => ChannelVariant::InsiderProof,
            VariantArg::NaiveOtp => ChannelVariant::NaiveOtp,
        }
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Multiply two elements of GF(2^n) (hex in, hex out).
    FieldMul {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        a: String,
        #[arg(long)]
        b: String,
    },
    /// Evaluate trunc(k * r, l) over GF(2^n).
    Hash {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        l: usize,
        #[arg(long)]
        k: String,
        #[arg(long)]
        r: String,
    },
    /// Encrypt an l-bit hex message with key drawn from a pool file.
    Encrypt {
        #[arg(long)]
        pool: PathBuf,
        #[arg(long)]
        l: usize,
        /// Key length; defaults to 2l + 64.
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        message: String,
    },
    /// Decrypt (r, c) with key drawn from a pool file.
    Decrypt {
        #[arg(long)]
        pool: PathBuf,
        #[arg(long)]
        l: usize,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        r: String,
        #[arg(long)]
        c: String,
    },
    /// Print the channel parameter sqrt(2^(2l - n)).
    Epsilon {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        l: usize,
    },
    /// Run an in-process two-lab simulation and print the budget report.
    Simulate {
        #[arg(long)]
        rounds: u64,
        #[arg(long)]
        n_sifted: Option<usize>,
        /// Per-bit noise of the simulated source.
        #[arg(long)]
        qber: Option<f64>,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Extra `key=value` configuration overrides.
        #[arg(long = "set")]
        overrides: Vec<String>,
        /// Write the transcript log here.
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Exact or sampled distinguishing advantage for one attack.
    Distinguish {
        /// constant, truncate-key, xor-key or random:<seed>.
        #[arg(long)]
        attack: String,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        l: usize,
        /// Enumerate all keys and seeds instead of sampling.
        #[arg(long)]
        exact: bool,
        #[arg(long, value_enum, default_value = "insider-proof")]
        variant: VariantArg,
        /// Private data d as hex; zero by default.
        #[arg(long)]
        d: Option<String>,
        #[arg(long, default_value_t = 10_000)]
        trials: usize,
    },
    /// Statistical checks on a transcript log.
    Battery {
        #[arg(long)]
        log: PathBuf,
        /// Comma-separated 1-based round numbers known to have aborted.
        #[arg(long)]
        aborted: Option<String>,
    },
    /// Run one lab of a session over TCP.
    Peer {
        #[arg(long, conflicts_with = "connect", required_unless_present = "connect")]
        listen: Option<String>,
        #[arg(long)]
        connect: Option<String>,
        #[arg(long, value_enum)]
        role: RoleArg,
        #[arg(long)]
        pool: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        rounds: u64,
        /// Record every frame on this end's link to a log file.
        #[arg(long)]
        tap: Option<PathBuf>,
    },
    /// Run the built-in invariant battery.
    Verify,
    /// Write a fresh key pool file.
    PoolInit {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        bits: usize,
    },
}

/// A failure with its exit code.
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::SizeMismatch { .. }
            | Error::InvalidParameter(_)
            | Error::UnsupportedDegree(_)
            | Error::EnumerationInfeasible { .. }
            | Error::InsecureParameters { .. }
            | Error::InvalidBudget(_)
            | Error::Config(_)
            | Error::Parse(_) => 2,
            _ => 1,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure {
            code: 1,
            message: e.to_string(),
        }
    }
}

type CmdResult = Result<u8, Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.cmd) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("ipc: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn run(cmd: Cmd) -> CmdResult {
    match cmd {
        Cmd::FieldMul { n, a, b } => {
            let field = field_for_degree(n)?;
            let a = BitString::from_hex(n, &a)?;
            let b = BitString::from_hex(n, &b)?;
            println!("{}", gf_mul(&a, &b, &field)?.to_hex());
            Ok(0)
        }
        Cmd::Hash { n, l, k, r } => {
            let params = HashParams::with_degree(n, l)?;
            let k = BitString::from_hex(n, &k)?;
            let r = BitString::from_hex(n, &r)?;
            println!("{}", hash(&k, &r, &params)?.to_hex());
            Ok(0)
        }
        Cmd::Encrypt { pool, l, n, message } => {
            let n = n.unwrap_or(2 * l + 64);
            channel_epsilon(n, l)?;
            let a = BitString::from_hex(l, &message)?;
            let mut pool = KeyPool::open(&pool)?;
            let k = pool.dispense(n)?;
            let t = encrypt(&a, &k, &mut rng::from_env("encrypt")?)?;
            println!("r {}", t.r.to_hex());
            println!("c {}", t.c.to_hex());
            Ok(0)
        }
        Cmd::Decrypt { pool, l, n, r, c } => {
            let n = n.unwrap_or(2 * l + 64);
            channel_epsilon(n, l)?;
            let t = ChannelTranscript {
                r: BitString::from_hex(n, &r)?,
                c: BitString::from_hex(l, &c)?,
            };
            let mut pool = KeyPool::open(&pool)?;
            let k = pool.dispense(n)?;
            println!("{}", decrypt(&t, &k)?.to_hex());
            Ok(0)
        }
        Cmd::Epsilon { n, l } => {
            println!("{}", channel_epsilon(n, l)?);
            Ok(0)
        }
        Cmd::Simulate {
            rounds,
            n_sifted,
            qber,
            config,
            overrides,
            log,
        } => {
            let mut cfg = load_config(config.as_deref())?;
            if let Some(n) = n_sifted {
                cfg.n_sifted = n;
            }
            if let Some(q) = qber {
                cfg.q_noise = q;
            }
            for o in &overrides {
                let (k, v) = o.split_once('=').ok_or_else(|| {
                    Error::Config(format!("override must be key=value, got {o:?}"))
                })?;
                cfg.set(k.trim(), v.trim())?;
            }
            cmd_simulate(&cfg, rounds, log.as_deref())
        }
        Cmd::Distinguish {
            attack,
            n,
            l,
            exact,
            variant,
            d,
            trials,
        } => {
            let spec = AttackSpec::parse(&attack, variant.into())?;
            let d = match d {
                Some(h) => BitString::from_hex(n.max(l), &h)?,
                None => BitString::zeros(n.max(l)),
            };
            let row = if exact {
                exact_row(&spec, n, l, &d)?
            } else {
                let est = empirical_advantage(&spec, n, l, &d, trials, &mut rng::from_env("distinguish")?)?;
                AdvantageRow {
                    attack: spec.name(),
                    variant: spec.variant,
                    n,
                    l,
                    exact: None,
                    passed: spec.variant == ChannelVariant::NaiveOtp
                        || est.advantage_ci.0 <= ipc_core::distinguisher::channel_bound(n, l),
                    bound: (spec.variant == ChannelVariant::InsiderProof)
                        .then(|| ipc_core::distinguisher::channel_bound(n, l)),
                    empirical: Some(est),
                }
            };
            println!("{}", AdvantageRow::HEADER);
            println!("{}", row.to_tsv());
            Ok(if row.passed { 0 } else { 1 })
        }
        Cmd::Battery { log, aborted } => {
            let frames = read_log(&fs::read_to_string(&log)?)?;
            let aborted = aborted.map(|s| parse_list(&s)).transpose()?;
            let report = transcript_battery(&frames, aborted.as_deref())?;
            print!("{}", report.to_text());
            Ok(if report.passed() { 0 } else { 1 })
        }
        Cmd::Peer {
            listen,
            connect,
            role,
            pool,
            config,
            rounds,
            tap,
        } => {
            let cfg = load_config(config.as_deref())?;
            let role = match role {
                RoleArg::Alice => Role::Alice,
                RoleArg::Bob => Role::Bob,
            };
            let stream = match (listen, connect) {
                (Some(addr), _) => {
                    let listener = TcpListener::bind(&addr)?;
                    eprintln!("listening on {}", listener.local_addr()?);
                    listener.accept()?.0
                }
                (None, Some(addr)) => connect_with_retry(&addr)?,
                (None, None) => unreachable!("clap requires one of --listen/--connect"),
            };
            stream.set_nodelay(true)?;
            cmd_peer(role, stream, &pool, &cfg, rounds, tap.as_deref())
        }
        Cmd::Verify => Ok(if verify::run() { 0 } else { 1 }),
        Cmd::PoolInit { out, bits } => {
            let pool = KeyPool::generate(bits, &mut rng::from_env("pool-init")?);
            fs::write(&out, pool.serialize())?;
            println!("wrote {bits}-bit pool to {}", out.display());
            Ok(0)
        }
    }
}

fn load_config(path: Option<&Path>) -> Result<SimConfig, Failure> {
    Ok(match path {
        Some(p) => SimConfig::from_file(p)?,
        None => SimConfig::default(),
    })
}

fn parse_list(s: &str) -> Result<Vec<usize>, Error> {
    s.split(',')
        .filter(|x| !x.trim().is_empty())
        .map(|x| {
            x.trim()
                .parse()
                .map_err(|_| Error::Parse(format!("bad round number {x:?}")))
        })
        .collect()
}

fn write_log(path: &Path, frames: &[Frame]) -> std::io::Result<()> {
    let mut f = std::io::BufWriter::new(fs::File::create(path)?);
    for frame in frames {
        writeln!(f, "{}", log_line(frame))?;
    }
    f.flush()
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map_or("-".into(), |v| format!("{v:.4}"))
}

fn cmd_simulate(cfg: &SimConfig, rounds: u64, log: Option<&Path>) -> CmdResult {
    let report = simulate(cfg, rounds, rng::env_seed()?)?;
    println!(
        "{:>5} {:>10} {:>10} {:>7} {:>7} {:>5} {:>6} {:>8} {:>6}",
        "round", "alice", "bob", "Q", "S", "class", "key", "consumed", "agree"
    );
    for r in &report.rounds {
        println!(
            "{:>5} {:>10} {:>10} {:>7} {:>7} {:>5} {:>6} {:>8} {:>6}",
            r.index,
            format!("{:?}", r.alice_status).split('(').next().unwrap_or(""),
            format!("{:?}", r.bob_status).split('(').next().unwrap_or(""),
            fmt_opt(r.q_obs),
            fmt_opt(r.s_obs),
            r.ec_class.map_or("-".into(), |c| c.to_string()),
            r.new_key.as_ref().map_or(0, |k| k.len()),
            r.key_consumed,
            r.keys_agree,
        );
    }
    let total_key: usize = report.rounds.iter().filter_map(|r| r.new_key.as_ref()).map(|k| k.len()).sum();
    println!(
        "rounds {}  successes {}  new key bits {}  pool available {}",
        report.rounds.len(),
        report.successes(),
        total_key,
        report.alice_pool.available()
    );
    if let (ChannelVariant::NaiveOtp, DeviceKind::NaiveLeak(d)) = (cfg.channel, &cfg.device_alice) {
        if let Some(first) = report.rounds.first() {
            let got = recover_naive_leak(&first.transcript, &report.layout, d.len())?;
            let shown: String = got
                .iter()
                .rev()
                .map(|b| match b {
                    Some(true) => '1',
                    Some(false) => '0',
                    None => '?',
                })
                .collect();
            let planted: String = d.iter().rev().map(|&b| if b { '1' } else { '0' }).collect();
            println!("planted d   {planted}");
            println!("recovered d {shown}");
            println!("leak recovered: {}", shown == planted);
        }
    }
    print!("{}", report.budget.report());
    if let Some(path) = log {
        write_log(path, &report.transcript)?;
        println!("transcript: {} frames written to {}", report.transcript.len(), path.display());
    }
    if report.rounds.iter().any(|r| !r.keys_agree) {
        return Ok(1);
    }
    Ok(0)
}

fn connect_with_retry(addr: &str) -> std::io::Result<TcpStream> {
    let mut last = None;
    for _ in 0..100 {
        match TcpStream::connect(addr) {
            Ok(s) => return Ok(s),
            Err(e) => {
                last = Some(e);
                std::thread::sleep(std::time::Duration::from_millis(100));
            }
        }
    }
    Err(last.expect("at least one attempt"))
}

fn cmd_peer(
    role: Role,
    stream: TcpStream,
    pool_path: &Path,
    cfg: &SimConfig,
    rounds: u64,
    tap_path: Option<&Path>,
) -> CmdResult {
    let pool = KeyPool::open(pool_path)?;
    let tap = tap_path.map(|_| new_tap());
    let result = peer_session(role, stream, pool, cfg, rounds, rng::env_seed()?, tap.clone());
    if let (Some(path), Some(tap)) = (tap_path, &tap) {
        write_log(path, &tap.lock().expect("tap lock"))?;
    }
    let (summary, _pool) = result?;
    println!("role {}", role.name());
    for r in &summary.rounds {
        println!(
            "round {} {:?} key {} consumed {}",
            r.index,
            r.status,
            r.key.as_ref().map_or(0, |k| k.len()),
            r.key_consumed
        );
    }
    println!("successes {}/{}", summary.successes(), summary.rounds.len());
    println!("key bits {}", summary.key_bits);
    println!("key digest {}", summary.key_digest_hex());
    println!("pool available {}", summary.pool_available);
    print!("{}", summary.budget.report());
    Ok(if summary.all_succeeded() { 0 } else { 1 })
}
