//! `critlab`: batch experiment runner.

mod artifact;
mod commands;
mod config;

use std::collections::BTreeMap;
use std::io::Write;

use clap::{error::ErrorKind, Arg, ArgMatches, Command};
use critlab::Error;

use config::{ConfigFile, SUBCOMMANDS};

const THREADS_ENV: &str = "CRITLAB_THREADS";
const GLOBAL: &str = "Global options";

fn flag_name(key: &str) -> String {
    key.replace('_', "-")
}

fn cli() -> Command {
    let mut cmd = Command::new("critlab")
        .about("Numerical experiments for the critical renormalized Poisson potential")
        .version(env!("CARGO_PKG_VERSION"))
        .subcommand_required(true)
        .arg(Arg::new("config").long("config").value_name("PATH").global(true).help_heading(GLOBAL).help("key=value config file"))
        .arg(Arg::new("seed").long("seed").value_name("U64").global(true).help_heading(GLOBAL).help("Master seed [default: 1]"))
        .arg(
            Arg::new("threads")
                .long("threads")
                .value_name("N")
                .global(true)
                .help_heading(GLOBAL)
                .help(format!("Worker threads [default: ${THREADS_ENV} or available parallelism]")),
        )
        .arg(Arg::new("out").long("out").value_name("PATH").global(true).help_heading(GLOBAL).help("Output file [default: stdout]"))
        .arg(Arg::new("format").long("format").value_name("csv|json").global(true).help_heading(GLOBAL).help("Artifact format [default: json for rates, else csv]"));
    for sub in SUBCOMMANDS {
        let mut s = Command::new(sub.name).about(sub.about);
        for k in sub.keys {
            let help = if k.default.is_empty() { k.help.to_string() } else { format!("{} [default: {}]", k.help, k.default) };
            s = s.arg(Arg::new(k.name).long(flag_name(k.name)).value_name("VALUE").allow_hyphen_values(true).help(help));
        }
        cmd = cmd.subcommand(s);
    }
    cmd
}

fn threads(m: &ArgMatches) -> Result<usize, Error> {
    let (src, v) = match m.get_one::<String>("threads") {
        Some(v) => ("threads", v.clone()),
        None => match std::env::var(THREADS_ENV) {
            Ok(v) => (THREADS_ENV, v),
            Err(_) => return Ok(std::thread::available_parallelism().map_or(1, |n| n.get())),
        },
    };
    match config::parse_u64(src, &v)? {
        0 => Err(Error::Config(format!("{src}: must be at least 1"))),
        n => Ok(n as usize),
    }
}

fn execute(m: &ArgMatches) -> Result<(), Error> {
    let (name, sm) = m.subcommand().expect("subcommand required");
    let sub = config::subcommand(name).expect("registered subcommand");
    let file = m.get_one::<String>("config").map(|p| ConfigFile::load(p.as_ref())).transpose()?;
    let flags: BTreeMap<String, String> =
        sub.keys.iter().filter_map(|k| sm.get_one::<String>(k.name).map(|v| (k.name.to_string(), v.clone()))).collect();
    let global = |k: &str| m.get_one::<String>(k).map(String::as_str);
    let cfg = config::resolve(sub, file.as_ref(), &flags, global("seed"), global("format"), global("out"))?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads(m)?)
        .build()
        .map_err(|e| Error::Config(format!("threads: {e}")))?;
    let table = pool.install(|| commands::run(&cfg))?;
    let text = artifact::render(&table, &cfg);
    match &cfg.out {
        Some(path) => std::fs::write(path, text).map_err(|e| Error::Config(format!("out: cannot write {path}: {e}"))),
        None => std::io::stdout().write_all(text.as_bytes()).map_err(|e| Error::Config(format!("stdout: {e}"))),
    }
}

/// 1 for config and domain errors, 2 when a numerical method fails.
fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Numerical { .. } => 2,
        _ => 1,
    }
}

/// 0 on success, 1 for usage errors, else per `exit_code`.
fn run<I: IntoIterator<Item = String>>(argv: I) -> i32 {
    let m = match cli().try_get_matches_from(argv) {
        Ok(m) => m,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
        }
    };
    match execute(&m) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("critlab: {e}");
            exit_code(&e)
        }
    }
}

fn main() {
    std::process::exit(run(std::env::args()));
}
